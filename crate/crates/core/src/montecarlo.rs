//! Sample-level simulation of the prepare-and-measure protocol and
//! covariance-matrix estimation from the simulated data.
//!
//! Every measured quadrature is a fixed linear combination of independent
//! standard normals (Alice's data, vacuum inputs, excess-noise draws,
//! detector noise and heterodyne vacuum). The coefficients follow the same
//! mode decomposition as [`build_network_cov`](crate::network::build_network_cov),
//! so sample moments converge to the analytic measured-domain matrix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CovMatrix, ModeLabel};
use crate::network::NetworkTopology;

/// Pulses generated per RNG block.
pub const DEFAULT_BLOCK_PULSES: usize = 8192;
/// Smallest sample count accepted by the estimator.
pub const MIN_ESTIMATION_PULSES: usize = 100;
/// Disclosed share of pulses when the protocol does not fix one.
pub const DEFAULT_DISCLOSED_FRACTION: f64 = 0.5;

const RAW_MAGIC: &[u8; 8] = b"PTMPRAW\0";
const RAW_VERSION: u32 = 1;
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub block_pulses: usize,
    /// Zero every noise source; only Alice's data propagates.
    pub noise_free: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            block_pulses: DEFAULT_BLOCK_PULSES,
            noise_free: false,
        }
    }
}

/// Measured data of one simulation run. Quadrature pairs are `[x, p]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub v_m: f64,
    pub topology: NetworkTopology,
    pub alice: Vec<[f64; 2]>,
    /// `bobs[k - 1]` holds Bob `k`'s heterodyne outcomes.
    pub bobs: Vec<Vec<[f64; 2]>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    fn row(&self, t: usize, out: &mut [f64]) {
        out[0] = self.alice[t][0];
        out[1] = self.alice[t][1];
        for (k, b) in self.bobs.iter().enumerate() {
            out[2 + 2 * k] = b[t][0];
            out[3 + 2 * k] = b[t][1];
        }
    }
}

/// Linear map from the independent normals of one quadrature to the
/// measured values of Alice and each Bob.
struct Generator {
    /// `(N + 1) x S`: row 0 is Alice, row `k` is Bob `k`.
    coeffs: DMatrix<f64>,
}

impl Generator {
    fn new(topo: &NetworkTopology, v_m: f64, noise_free: bool) -> Result<Self> {
        topo.validate()?;
        if !(v_m >= 0.0) {
            return Err(Error::Domain(format!("modulation variance {v_m} < 0")));
        }
        let n = topo.n_bobs();
        // Sources: 0 data, 1 signal vacuum, 2 feeder vacuum, 3 feeder noise,
        // 4.. one vacuum per splitter step, then per Bob: drop vacuum, drop
        // noise, detector noise, heterodyne vacuum.
        let n_src = 4 + (n - 1) + 4 * n;
        let unit = |j: usize| {
            let mut v = vec![0.0; n_src];
            v[j] = 1.0;
            v
        };
        let axpy = |a: f64, x: &[f64], b: f64, y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(x, y)| a * x + b * y).collect()
        };
        let noise = if noise_free { 0.0 } else { 1.0 };

        let alice = axpy(v_m.sqrt(), &unit(0), 0.0, &unit(0));
        let signal = axpy(1.0, &alice, noise, &unit(1));
        let f = topo.feeder.channel;
        let t1 = f.transmittance;
        let feeder_noise = axpy(
            noise * (1.0 - t1).sqrt(),
            &unit(2),
            noise * (t1 * f.excess_noise).sqrt(),
            &unit(3),
        );
        let mut trunk = axpy(t1.sqrt(), &signal, 1.0, &feeder_noise);

        let mut modal: Vec<(u32, Vec<f64>)> = Vec::with_capacity(n);
        for (s, step) in topo.splitter.steps.iter().enumerate() {
            let vac: Vec<f64> = unit(4 + s).iter().map(|c| c * noise).collect();
            let eta = step.eta;
            let peeled = axpy(eta.sqrt(), &trunk, -(1.0 - eta).sqrt(), &vac);
            trunk = axpy((1.0 - eta).sqrt(), &trunk, eta.sqrt(), &vac);
            modal.push((step.bob, peeled));
        }
        modal.push((topo.splitter.last_bob, trunk));

        let mut coeffs = DMatrix::zeros(n + 1, n_src);
        for (j, c) in alice.iter().enumerate() {
            coeffs[(0, j)] = *c;
        }
        let base = 4 + (n - 1);
        for (bob, z) in modal {
            let ch = topo.drop(bob).channel;
            let det = topo.detector(bob);
            let s0 = base + 4 * (bob as usize - 1);
            let t2 = ch.transmittance;
            let mut y: Vec<f64> = z.iter().map(|c| c * t2.sqrt()).collect();
            y[s0] += noise * (1.0 - t2).sqrt();
            y[s0 + 1] += noise * (t2 * ch.excess_noise).sqrt();
            let mut m: Vec<f64> = y.iter().map(|c| c * det.efficiency.sqrt()).collect();
            m[s0 + 2] += noise * det.added_noise().sqrt();
            m[s0 + 3] += noise;
            for (j, c) in m.iter().enumerate() {
                coeffs[(bob as usize, j)] = *c;
            }
        }
        Ok(Self { coeffs })
    }

    fn n_sources(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Measured data of one block as a `2(N + 1) x pulses` matrix with rows
    /// `(A_x, A_p, B1_x, B1_p, ...)`.
    fn block(&self, seed: u64, block: u64, pulses: usize) -> DMatrix<f64> {
        let s = self.n_sources();
        let mut w = DMatrix::zeros(s, 2 * pulses);
        for j in 0..s {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((block << 16) | j as u64);
            for c in 0..2 * pulses {
                w[(j, c)] = StandardNormal.sample(&mut rng);
            }
        }
        let u = &self.coeffs * w;
        let rows = u.nrows();
        DMatrix::from_fn(2 * rows, pulses, |r, t| u[(r / 2, 2 * t + r % 2)])
    }
}

fn block_sizes(m: usize, block_pulses: usize) -> Result<Vec<usize>> {
    if block_pulses == 0 {
        return Err(Error::Domain("block size must be positive".into()));
    }
    let full = m / block_pulses;
    let mut out = vec![block_pulses; full];
    if m % block_pulses != 0 {
        out.push(m % block_pulses);
    }
    Ok(out)
}

pub fn simulate_samples(topo: &NetworkTopology, v_m: f64, m: usize, seed: u64) -> Result<SampleBatch> {
    simulate_samples_with(topo, v_m, m, seed, &SimOptions::default())
}

pub fn simulate_samples_with(
    topo: &NetworkTopology,
    v_m: f64,
    m: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::Domain("need at least one pulse".into()));
    }
    let gen = Generator::new(topo, v_m, opts.noise_free)?;
    let sizes = block_sizes(m, opts.block_pulses)?;
    let blocks: Vec<DMatrix<f64>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &len)| gen.block(seed, b as u64, len))
        .collect();
    let n = topo.n_bobs();
    let mut alice = Vec::with_capacity(m);
    let mut bobs = vec![Vec::with_capacity(m); n];
    for blk in &blocks {
        for t in 0..blk.ncols() {
            alice.push([blk[(0, t)], blk[(1, t)]]);
            for (k, b) in bobs.iter_mut().enumerate() {
                b.push([blk[(2 + 2 * k, t)], blk[(3 + 2 * k, t)]]);
            }
        }
    }
    Ok(SampleBatch {
        seed,
        v_m,
        topology: topo.clone(),
        alice,
        bobs,
    })
}

/// Estimated modal covariance matrix with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCov {
    pub gamma_hat: CovMatrix,
    pub standard_errors: DMatrix<f64>,
    /// Raw second moments of the measured data.
    pub moments: DMatrix<f64>,
    pub m: usize,
}

impl EstimatedCov {
    /// `(gamma_hat - gamma) / SE`, zero where the standard error vanishes
    /// and the entries agree.
    pub fn z_scores(&self, gamma: &CovMatrix) -> Result<DMatrix<f64>> {
        if gamma.labels() != self.gamma_hat.labels() {
            return Err(Error::Domain("z-scores need matching mode labels".into()));
        }
        let diff = self.gamma_hat.entries() - gamma.entries();
        Ok(DMatrix::from_fn(diff.nrows(), diff.ncols(), |i, j| {
            let se = self.standard_errors[(i, j)];
            if se > 0.0 {
                diff[(i, j)] / se
            } else if diff[(i, j)] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }))
    }

    pub fn max_abs_z(&self, gamma: &CovMatrix) -> Result<f64> {
        Ok(self.z_scores(gamma)?.amax())
    }
}

/// Invert the detector and heterodyne model on zero-mean second moments.
fn invert_moments(moments: &DMatrix<f64>, m: usize, topo: &NetworkTopology) -> Result<EstimatedCov> {
    if m < MIN_ESTIMATION_PULSES {
        return Err(Error::Domain(format!(
            "need at least {MIN_ESTIMATION_PULSES} pulses to estimate, got {m}"
        )));
    }
    let n = topo.n_bobs();
    let d = 2 * (n + 1);
    let mf = m as f64;
    let s = moments;
    let cov = |u: usize, v: usize, w: usize, z: usize| (s[(u, w)] * s[(v, z)] + s[(u, z)] * s[(v, w)]) / mf;

    let v_hat = 0.5 * (s[(0, 0)] + s[(1, 1)]);
    if !(v_hat > 0.0) {
        return Err(Error::Numerical("estimated modulation variance is zero".into()));
    }
    let kappa = ((v_hat + 2.0) / v_hat).sqrt();
    let dkappa = -1.0 / (v_hat * v_hat * kappa);
    let var_v = 0.25 * (cov(0, 0, 0, 0) + cov(1, 1, 1, 1) + 2.0 * cov(0, 0, 1, 1));

    let eta = |k: usize| topo.detectors[k].efficiency;
    let floor = |k: usize| topo.detectors[k].added_noise() + 1.0;
    let mut gamma = DMatrix::zeros(d, d);
    let mut se = DMatrix::zeros(d, d);
    for u in 0..d {
        for v in u..d {
            let (mu, mv) = (u / 2, v / 2);
            let var_m = cov(u, v, u, v);
            let (g, var) = match (mu, mv) {
                (0, 0) => (s[(u, v)] + if u == v { 1.0 } else { 0.0 }, var_m),
                (0, b) => {
                    let sign = if u % 2 == 0 { 1.0 } else { -1.0 };
                    let root = eta(b - 1).sqrt();
                    let a = sign * kappa / root;
                    let c = sign * s[(u, v)] * dkappa / root;
                    let cov_mv = 0.5 * (cov(u, v, 0, 0) + cov(u, v, 1, 1));
                    (a * s[(u, v)], a * a * var_m + 2.0 * a * c * cov_mv + c * c * var_v)
                }
                (a, b) if a == b => {
                    let e = eta(a - 1);
                    let shift = if u == v { floor(a - 1) } else { 0.0 };
                    ((s[(u, v)] - shift) / e, var_m / (e * e))
                }
                (a, b) => {
                    let e = (eta(a - 1) * eta(b - 1)).sqrt();
                    (s[(u, v)] / e, var_m / (e * e))
                }
            };
            gamma[(u, v)] = g;
            gamma[(v, u)] = g;
            se[(u, v)] = var.max(0.0).sqrt();
            se[(v, u)] = se[(u, v)];
        }
    }
    let mut labels = vec![ModeLabel::Alice];
    labels.extend((1..=n as u32).map(ModeLabel::Bob));
    Ok(EstimatedCov {
        gamma_hat: CovMatrix::new(gamma, labels)?,
        standard_errors: se,
        moments: moments.clone(),
        m,
    })
}

/// Estimate the modal matrix from stored samples.
pub fn estimate_cov(batch: &SampleBatch) -> Result<EstimatedCov> {
    let m = batch.len();
    if m < MIN_ESTIMATION_PULSES {
        return Err(Error::Domain(format!(
            "need at least {MIN_ESTIMATION_PULSES} pulses to estimate, got {m}"
        )));
    }
    let d = 2 * (batch.bobs.len() + 1);
    let mut moments = DMatrix::zeros(d, d);
    let mut row = vec![0.0; d];
    for t in 0..m {
        batch.row(t, &mut row);
        for u in 0..d {
            for v in u..d {
                moments[(u, v)] += row[u] * row[v];
            }
        }
    }
    moments /= m as f64;
    moments.fill_lower_triangle_with_upper_triangle();
    invert_moments(&moments, m, &batch.topology)
}

/// Simulate and estimate in one pass without storing samples.
pub fn estimate_cov_streaming(
    topo: &NetworkTopology,
    v_m: f64,
    m: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<EstimatedCov> {
    let gen = Generator::new(topo, v_m, opts.noise_free)?;
    let sizes = block_sizes(m, opts.block_pulses)?;
    let partial: Vec<DMatrix<f64>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &len)| {
            let blk = gen.block(seed, b as u64, len);
            &blk * blk.transpose()
        })
        .collect();
    let d = 2 * (topo.n_bobs() + 1);
    let mut moments = DMatrix::zeros(d, d);
    for p in &partial {
        moments += p;
    }
    moments /= m as f64;
    invert_moments(&moments, m, topo)
}

/// Split into a disclosed estimation subset and a key subset, each keeping
/// the original pulse order. The split is a seeded permutation.
pub fn disclosure_split(batch: &SampleBatch, fraction: f64) -> Result<(SampleBatch, SampleBatch)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain(format!("disclosed fraction {fraction} outside (0, 1)")));
    }
    let m = batch.len();
    let k = (fraction * m as f64).round() as usize;
    if k == 0 || k == m {
        return Err(Error::Domain(format!(
            "fraction {fraction} of {m} pulses leaves an empty subset"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(batch.seed);
    rng.set_stream(SPLIT_STREAM);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng);
    let (mut est, mut key) = (idx[..k].to_vec(), idx[k..].to_vec());
    est.sort_unstable();
    key.sort_unstable();
    let subset = |ix: &[usize]| SampleBatch {
        seed: batch.seed,
        v_m: batch.v_m,
        topology: batch.topology.clone(),
        alice: ix.iter().map(|&t| batch.alice[t]).collect(),
        bobs: batch
            .bobs
            .iter()
            .map(|b| ix.iter().map(|&t| b[t]).collect())
            .collect(),
    };
    Ok((subset(&est), subset(&key)))
}

#[derive(Serialize, Deserialize)]
struct RawSidecar {
    seed: u64,
    v_m: f64,
    pulses: usize,
    topology: NetworkTopology,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("raw dump: {e}"))
}

/// Write the batch as little-endian f64 columns `(A_x, A_p, B1_x, B1_p, ...)`
/// after a header `magic, version u32, M u64, N u64, seed u64`, plus a JSON
/// sidecar next to it with the topology.
pub fn write_raw(batch: &SampleBatch, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(RAW_MAGIC).map_err(io_err)?;
    w.write_all(&RAW_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(batch.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(batch.bobs.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&batch.seed.to_le_bytes()).map_err(io_err)?;
    let mut column = |data: &[[f64; 2]], q: usize| -> Result<()> {
        for s in data {
            w.write_all(&s[q].to_le_bytes()).map_err(io_err)?;
        }
        Ok(())
    };
    column(&batch.alice, 0)?;
    column(&batch.alice, 1)?;
    for b in &batch.bobs {
        column(b, 0)?;
        column(b, 1)?;
    }
    w.flush().map_err(io_err)?;
    let sidecar = RawSidecar {
        seed: batch.seed,
        v_m: batch.v_m,
        pulses: batch.len(),
        topology: batch.topology.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(io_err)?;
    std::fs::write(path.with_extension("json"), json).map_err(io_err)
}

pub fn read_raw(path: &Path) -> Result<SampleBatch> {
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != RAW_MAGIC {
        return Err(io_err("bad magic"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io_err)?;
    if u32::from_le_bytes(b4) != RAW_VERSION {
        return Err(io_err("unsupported version"));
    }
    let mut b8 = [0u8; 8];
    let mut next_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut b8).map_err(io_err)?;
        Ok(u64::from_le_bytes(b8))
    };
    let m = next_u64(&mut r)? as usize;
    let n = next_u64(&mut r)? as usize;
    let seed = next_u64(&mut r)?;
    let read_col = |r: &mut BufReader<File>| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * m];
        r.read_exact(&mut buf).map_err(io_err)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let pairs = |r: &mut BufReader<File>| -> Result<Vec<[f64; 2]>> {
        let x = read_col(r)?;
        let p = read_col(r)?;
        Ok(x.into_iter().zip(p).map(|(x, p)| [x, p]).collect())
    };
    let alice = pairs(&mut r)?;
    let bobs = (0..n).map(|_| pairs(&mut r)).collect::<Result<Vec<_>>>()?;
    let json = std::fs::read_to_string(path.with_extension("json")).map_err(io_err)?;
    let sidecar: RawSidecar = serde_json::from_str(&json).map_err(io_err)?;
    if sidecar.seed != seed || sidecar.pulses != m || sidecar.topology.n_bobs() != n {
        return Err(io_err("sidecar does not match header"));
    }
    Ok(SampleBatch {
        seed,
        v_m: sidecar.v_m,
        topology: sidecar.topology,
        alice,
        bobs,
    })
}
