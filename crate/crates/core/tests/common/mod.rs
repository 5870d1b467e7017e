#![allow(dead_code)]

use nalgebra::DMatrix;
use ptmp_core::network::{
    ChannelParams, DetectorModel, ExtraLossLocation, NetworkTopology, NoiseBudget, Segment, Splitter, SplitterStep,
    SymmetricLink,
};
use rand::Rng;

pub fn fig3_link(n: usize, km: f64) -> SymmetricLink {
    SymmetricLink {
        n_bobs: n,
        feeder_km: km,
        drop_km: 0.0,
        atten_db_per_km: 0.2,
        extra_loss_db: 0.0,
        extra_loss_location: ExtraLossLocation::Drop,
        noise: NoiseBudget::new(0.0383, 0.004).unwrap(),
        detector: DetectorModel::new(0.6, 0.15).unwrap(),
    }
}

/// Network with random cascade order and ratios, drops and detectors.
pub fn random_topology(rng: &mut impl Rng, n: usize) -> NetworkTopology {
    let mut order: Vec<u32> = (1..=n as u32).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let steps = order[..n - 1]
        .iter()
        .map(|&bob| SplitterStep {
            bob,
            eta: rng.random_range(0.05..0.95),
        })
        .collect();
    let splitter = Splitter {
        steps,
        last_bob: order[n - 1],
    };
    let seg = |rng: &mut dyn rand::RngCore, tmin: f64| Segment {
        length_km: 0.0,
        channel: ChannelParams::new(rng.random_range(tmin..0.999), rng.random_range(0.0..0.08)).unwrap(),
    };
    let feeder = seg(rng, 0.05);
    let drops = (0..n).map(|_| seg(rng, 0.3)).collect();
    let detectors = (0..n)
        .map(|_| DetectorModel::new(rng.random_range(0.4..0.95), rng.random_range(0.0..0.2)).unwrap())
        .collect();
    NetworkTopology::new(feeder, drops, splitter, detectors, 0.0, ExtraLossLocation::Drop).unwrap()
}

pub fn omega(n: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        o[(2 * k, 2 * k + 1)] = 1.0;
        o[(2 * k + 1, 2 * k)] = -1.0;
    }
    o
}

/// Symplectic eigenvalues from the moduli of the eigenvalues of `Omega gamma`.
pub fn brute_symplectic(gamma: &DMatrix<f64>) -> Vec<f64> {
    let n = gamma.nrows() / 2;
    let m = omega(n) * gamma;
    let mut mods: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.im.abs()).collect();
    mods.sort_by(|a, b| a.total_cmp(b));
    mods.iter().step_by(2).copied().collect()
}

pub fn g_oracle(nu: f64) -> f64 {
    let x = (nu - 1.0) / 2.0;
    if x <= 1e-15 {
        return 0.0;
    }
    (x + 1.0) * (x + 1.0).log2() - x * x.log2()
}

pub fn entropy_oracle(gamma: &DMatrix<f64>) -> f64 {
    brute_symplectic(gamma).into_iter().map(g_oracle).sum()
}

/// Random symplectic matrix built from beam splitters, rotations and squeezers.
pub fn random_symplectic(rng: &mut impl Rng, n: usize, ops: usize) -> DMatrix<f64> {
    let mut s = DMatrix::<f64>::identity(2 * n, 2 * n);
    for _ in 0..ops {
        let mut op = DMatrix::<f64>::identity(2 * n, 2 * n);
        match rng.random_range(0..3) {
            0 if n > 1 => {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n);
                while j == i {
                    j = rng.random_range(0..n);
                }
                let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let (c, sn) = (th.cos(), th.sin());
                for q in 0..2 {
                    op[(2 * i + q, 2 * i + q)] = c;
                    op[(2 * i + q, 2 * j + q)] = sn;
                    op[(2 * j + q, 2 * i + q)] = -sn;
                    op[(2 * j + q, 2 * j + q)] = c;
                }
            }
            1 => {
                let i = rng.random_range(0..n);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                op[(2 * i, 2 * i)] = phi.cos();
                op[(2 * i, 2 * i + 1)] = phi.sin();
                op[(2 * i + 1, 2 * i)] = -phi.sin();
                op[(2 * i + 1, 2 * i + 1)] = phi.cos();
            }
            _ => {
                let i = rng.random_range(0..n);
                let r: f64 = rng.random_range(-0.8..0.8);
                op[(2 * i, 2 * i)] = (-r).exp();
                op[(2 * i + 1, 2 * i + 1)] = r.exp();
            }
        }
        s = op * s;
    }
    s
}

/// Random physical matrix with known symplectic spectrum.
pub fn random_physical(rng: &mut impl Rng, n: usize) -> (DMatrix<f64>, Vec<f64>) {
    let nus: Vec<f64> = (0..n).map(|_| 1.0 + rng.random_range(0.0..4.0)).collect();
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for (k, nu) in nus.iter().enumerate() {
        d[(2 * k, 2 * k)] = *nu;
        d[(2 * k + 1, 2 * k + 1)] = *nu;
    }
    let s = random_symplectic(rng, n, 3 * n + 2);
    let g = &s * d * s.transpose();
    let mut sorted = nus;
    sorted.sort_by(|a, b| a.total_cmp(b));
    ((&g + g.transpose()) * 0.5, sorted)
}
