//! Entanglement-based model of the passive optical network: EPR source,
//! feeder fiber, power-splitter cascade, drop fibers and trusted detectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CovMatrix, ModeLabel, SymplecticOp};

/// Default fiber attenuation; 120 km of fiber is 24 dB.
pub const DEFAULT_ATTEN_DB_PER_KM: f64 = 0.2;

/// Transmittance and input-referred excess noise of one fiber segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub transmittance: f64,
    pub excess_noise: f64,
}

impl ChannelParams {
    pub fn new(transmittance: f64, excess_noise: f64) -> Result<Self> {
        if !(transmittance > 0.0 && transmittance <= 1.0) {
            return Err(Error::Domain(format!(
                "transmittance {transmittance} outside (0, 1]"
            )));
        }
        if !(excess_noise >= 0.0) || !excess_noise.is_finite() {
            return Err(Error::Domain(format!("excess noise {excess_noise} < 0")));
        }
        Ok(Self {
            transmittance,
            excess_noise,
        })
    }

    pub fn ideal() -> Self {
        Self {
            transmittance: 1.0,
            excess_noise: 0.0,
        }
    }

    /// Variance added at the output: `1 - T + T*eps`.
    pub fn added_noise(&self) -> f64 {
        1.0 - self.transmittance + self.transmittance * self.excess_noise
    }
}

/// Trusted heterodyne detector: efficiency and electronic noise (SNU).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub electronic_noise: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, electronic_noise: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency < 1.0) {
            return Err(Error::Domain(format!(
                "detector efficiency {efficiency} outside (0, 1)"
            )));
        }
        if !(electronic_noise >= 0.0) || !electronic_noise.is_finite() {
            return Err(Error::Domain(format!(
                "electronic noise {electronic_noise} < 0"
            )));
        }
        Ok(Self {
            efficiency,
            electronic_noise,
        })
    }

    /// Noiseless unit-efficiency detection. Used as a reference case; it has
    /// no dilation.
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            electronic_noise: 0.0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.efficiency == 1.0 && self.electronic_noise == 0.0
    }

    fn validate(&self) -> Result<()> {
        if self.is_ideal() {
            Ok(())
        } else {
            Self::new(self.efficiency, self.electronic_noise).map(|_| ())
        }
    }

    /// Variance of the EPR ancilla, `v = 1 + 2 v_el / (1 - eta_d)`.
    pub fn ancilla_variance(&self) -> f64 {
        if self.is_ideal() {
            return 1.0;
        }
        1.0 + 2.0 * self.electronic_noise / (1.0 - self.efficiency)
    }

    /// Noise added on top of `eta_d * V` by the detector itself:
    /// `(1 - eta_d) * v = 1 - eta_d + 2 v_el`.
    pub fn added_noise(&self) -> f64 {
        1.0 - self.efficiency + 2.0 * self.electronic_noise
    }
}

/// Excess noise split between the feeder (`eps_a`) and the drops (`eps_b'`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub eps_tot: f64,
    pub eps_a: f64,
}

impl NoiseBudget {
    pub fn new(eps_tot: f64, eps_a: f64) -> Result<Self> {
        if !(eps_tot >= 0.0) || !(eps_a >= 0.0) {
            return Err(Error::Domain("excess noise must be non-negative".into()));
        }
        if eps_a > eps_tot {
            return Err(Error::Domain(format!(
                "eps_a = {eps_a} exceeds eps_tot = {eps_tot}"
            )));
        }
        Ok(Self { eps_tot, eps_a })
    }

    /// Budget with `eps_a = ratio * eps_tot`.
    pub fn with_ratio(eps_tot: f64, ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Domain(format!("ratio {ratio} outside [0, 1]")));
        }
        Self::new(eps_tot, (ratio * eps_tot).min(eps_tot))
    }

    pub fn eps_b_prime(&self) -> f64 {
        self.eps_tot - self.eps_a
    }
}

/// Feeder-side excess noise and the per-drop noise `eps_b = eps_b' * T1 / N`.
pub fn noise_budget_to_channels(budget: &NoiseBudget, t1: f64, n: usize) -> Result<(f64, f64)> {
    let budget = NoiseBudget::new(budget.eps_tot, budget.eps_a)?;
    if !(t1 > 0.0 && t1 <= 1.0) {
        return Err(Error::Domain(format!("feeder transmittance {t1} outside (0, 1]")));
    }
    if n == 0 {
        return Err(Error::Domain("network needs at least one Bob".into()));
    }
    Ok((budget.eps_a, budget.eps_b_prime() * t1 / n as f64))
}

/// `10^(-(length * atten + extra) / 10)`.
pub fn length_to_transmittance(length_km: f64, atten_db_per_km: f64, extra_db: f64) -> f64 {
    10f64.powf(-(length_km * atten_db_per_km + extra_db) / 10.0)
}

pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn transmittance_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// Where the lumped extra device loss sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtraLossLocation {
    Feeder,
    #[default]
    Drop,
}

impl std::fmt::Display for ExtraLossLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtraLossLocation::Feeder => write!(f, "feeder"),
            ExtraLossLocation::Drop => write!(f, "drop"),
        }
    }
}

/// A fiber segment. `channel.transmittance` already includes any extra loss
/// attributed to this segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub length_km: f64,
    pub channel: ChannelParams,
}

/// One step of the splitter cascade: the trunk is split by a beam splitter
/// of transmittance `eta`; the transmitted port goes to `bob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitterStep {
    pub bob: u32,
    pub eta: f64,
}

/// Trunk-peeling cascade: `steps` feed all Bobs but the last, which receives
/// what is left of the trunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splitter {
    pub steps: Vec<SplitterStep>,
    pub last_bob: u32,
}

impl Splitter {
    /// Equal split over Bobs `1..=n`, Bob 1 split off first.
    pub fn uniform(n: usize) -> Result<Self> {
        let order: Vec<u32> = (1..=n as u32).collect();
        Self::uniform_with_order(&order)
    }

    pub fn uniform_with_order(order: &[u32]) -> Result<Self> {
        let n = order.len();
        let etas = splitter_cascade(n)?;
        let steps = etas
            .iter()
            .zip(order)
            .map(|(&eta, &bob)| SplitterStep { bob, eta })
            .collect();
        Ok(Self {
            steps,
            last_bob: order[n - 1],
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.steps.len() + 1
    }

    /// Fraction of the input power delivered to each Bob, in cascade order.
    pub fn power_fractions(&self) -> Vec<(u32, f64)> {
        let mut trunk = 1.0;
        let mut out = Vec::with_capacity(self.n_outputs());
        for step in &self.steps {
            out.push((step.bob, trunk * step.eta));
            trunk *= 1.0 - step.eta;
        }
        out.push((self.last_bob, trunk));
        out
    }
}

/// Ratios of the equal-split cascade: step `k` (1-based) taps
/// `1 / (N - k + 1)` of the remaining trunk.
pub fn splitter_cascade(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!("splitter needs N >= 2, got {n}")));
    }
    Ok((1..n).map(|k| 1.0 / (n - k + 1) as f64).collect())
}

/// Physical description of the point-to-multipoint network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub feeder: Segment,
    /// Drop segment of Bob `i` at position `i - 1`.
    pub drops: Vec<Segment>,
    pub splitter: Splitter,
    /// Detector of Bob `i` at position `i - 1`.
    pub detectors: Vec<DetectorModel>,
    pub extra_loss_db: f64,
    pub extra_loss_location: ExtraLossLocation,
}

impl NetworkTopology {
    pub fn new(
        feeder: Segment,
        drops: Vec<Segment>,
        splitter: Splitter,
        detectors: Vec<DetectorModel>,
        extra_loss_db: f64,
        extra_loss_location: ExtraLossLocation,
    ) -> Result<Self> {
        let topo = Self {
            feeder,
            drops,
            splitter,
            detectors,
            extra_loss_db,
            extra_loss_location,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.drops.len();
        if n < 2 {
            return Err(Error::Domain(format!("network needs N >= 2 Bobs, got {n}")));
        }
        if self.detectors.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.detectors.len(),
            });
        }
        if self.splitter.n_outputs() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.splitter.n_outputs(),
            });
        }
        let mut seen: Vec<u32> = self.splitter.power_fractions().iter().map(|p| p.0).collect();
        seen.sort_unstable();
        if seen != (1..=n as u32).collect::<Vec<_>>() {
            return Err(Error::Domain(
                "splitter outputs must cover Bobs 1..=N exactly once".into(),
            ));
        }
        for step in &self.splitter.steps {
            if !(0.0..=1.0).contains(&step.eta) {
                return Err(Error::Domain(format!("splitter ratio {} outside [0, 1]", step.eta)));
            }
        }
        let total: f64 = self.splitter.power_fractions().iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("splitter power fractions sum to {total}")));
        }
        ChannelParams::new(self.feeder.channel.transmittance, self.feeder.channel.excess_noise)?;
        for d in &self.drops {
            ChannelParams::new(d.channel.transmittance, d.channel.excess_noise)?;
        }
        for d in &self.detectors {
            d.validate()?;
        }
        if !(self.extra_loss_db >= 0.0) {
            return Err(Error::Domain("extra loss must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_bobs(&self) -> usize {
        self.drops.len()
    }

    pub fn drop(&self, bob: u32) -> &Segment {
        &self.drops[bob as usize - 1]
    }

    pub fn detector(&self, bob: u32) -> &DetectorModel {
        &self.detectors[bob as usize - 1]
    }

    /// Identical drops, detectors and an equal split.
    pub fn is_symmetric(&self) -> bool {
        let n = self.n_bobs() as f64;
        let first = self.drops[0].channel;
        let det = self.detectors[0];
        self.drops.iter().all(|d| close(d.channel.transmittance, first.transmittance) && close(d.channel.excess_noise, first.excess_noise))
            && self.detectors.iter().all(|d| *d == det)
            && self
                .splitter
                .power_fractions()
                .iter()
                .all(|p| (p.1 - 1.0 / n).abs() < 1e-12)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Parameters of a symmetric network; expands into a [`NetworkTopology`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricLink {
    pub n_bobs: usize,
    pub feeder_km: f64,
    pub drop_km: f64,
    pub atten_db_per_km: f64,
    pub extra_loss_db: f64,
    pub extra_loss_location: ExtraLossLocation,
    pub noise: NoiseBudget,
    pub detector: DetectorModel,
}

impl SymmetricLink {
    /// Feeder carries `eps_a`; every drop carries `eps_b' * T1 / N`, with
    /// `T1` the full feeder transmittance (extra loss included when it sits
    /// on the feeder).
    pub fn topology(&self) -> Result<NetworkTopology> {
        if !(self.feeder_km >= 0.0) || !(self.drop_km >= 0.0) {
            return Err(Error::Domain("fiber lengths must be non-negative".into()));
        }
        let (feeder_extra, drop_extra) = match self.extra_loss_location {
            ExtraLossLocation::Feeder => (self.extra_loss_db, 0.0),
            ExtraLossLocation::Drop => (0.0, self.extra_loss_db),
        };
        let t1 = length_to_transmittance(self.feeder_km, self.atten_db_per_km, feeder_extra);
        let t2 = length_to_transmittance(self.drop_km, self.atten_db_per_km, drop_extra);
        let (eps_a, eps_b) = noise_budget_to_channels(&self.noise, t1, self.n_bobs)?;
        let feeder = Segment {
            length_km: self.feeder_km,
            channel: ChannelParams::new(t1, eps_a)?,
        };
        let drop = Segment {
            length_km: self.drop_km,
            channel: ChannelParams::new(t2, eps_b)?,
        };
        NetworkTopology::new(
            feeder,
            vec![drop; self.n_bobs],
            Splitter::uniform(self.n_bobs)?,
            vec![self.detector; self.n_bobs],
            self.extra_loss_db,
            self.extra_loss_location,
        )
    }
}

/// Two-mode squeezed vacuum on (Alice, Bob 1) with variance `v`.
pub fn epr_cov(v: f64) -> Result<CovMatrix> {
    epr_pair(v, ModeLabel::Alice, ModeLabel::Bob(1))
}

pub(crate) fn epr_pair(v: f64, a: ModeLabel, b: ModeLabel) -> Result<CovMatrix> {
    if !(v >= 1.0) || !v.is_finite() {
        return Err(Error::Domain(format!("EPR variance {v} < 1")));
    }
    let c = (v * v - 1.0).sqrt();
    let mut m = DMatrix::identity(4, 4) * v;
    m[(0, 2)] = c;
    m[(2, 0)] = c;
    m[(1, 3)] = -c;
    m[(3, 1)] = -c;
    CovMatrix::new(m, vec![a, b])
}

/// Dense beam-splitter operator of transmittance `eta` on modes `i`, `j`:
/// `[[sqrt(eta) I2, -sqrt(1-eta) I2], [sqrt(1-eta) I2, sqrt(eta) I2]]`.
pub fn beamsplitter_op(gamma: &CovMatrix, i: ModeLabel, j: ModeLabel, eta: f64) -> Result<SymplecticOp> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("beam-splitter transmittance {eta} outside [0, 1]")));
    }
    if i == j {
        return Err(Error::Domain("beam splitter needs two distinct modes".into()));
    }
    let (pi, pj) = (gamma.index_of(i)?, gamma.index_of(j)?);
    let dim = 2 * gamma.n_modes();
    let (a, b) = (eta.sqrt(), (1.0 - eta).sqrt());
    let mut s = DMatrix::identity(dim, dim);
    for q in 0..2 {
        s[(2 * pi + q, 2 * pi + q)] = a;
        s[(2 * pi + q, 2 * pj + q)] = -b;
        s[(2 * pj + q, 2 * pi + q)] = b;
        s[(2 * pj + q, 2 * pj + q)] = a;
    }
    SymplecticOp::new(s, format!("BS({i},{j}; eta={eta})"))
}

/// Thermal-loss channel on one mode: its block becomes
/// `T gamma + (1 - T + T eps) I2`, its correlations scale by `sqrt(T)`.
pub fn lossy_channel(gamma: &CovMatrix, mode: ModeLabel, ch: &ChannelParams) -> Result<CovMatrix> {
    let ch = ChannelParams::new(ch.transmittance, ch.excess_noise)?;
    let idx = gamma.index_of(mode)?;
    let mut out = gamma.clone();
    out.attenuate_in_place(idx, ch.transmittance, ch.added_noise());
    Ok(out)
}

/// Trusted-detector dilation of `bob`: appends an EPR ancilla `(F0, G)` of
/// variance `v`, then mixes `bob` with `F0` at transmittance `eta_d`.
/// Output modes: `..., B^d (in bob's slot), F, G`.
pub fn detector_dilation(gamma: &CovMatrix, bob: ModeLabel, det: &DetectorModel) -> Result<CovMatrix> {
    let det = DetectorModel::new(det.efficiency, det.electronic_noise)?;
    let k = match bob {
        ModeLabel::Bob(k) => k,
        other => {
            return Err(Error::Domain(format!(
                "detector dilation applies to a Bob mode, got {other}"
            )))
        }
    };
    let b_idx = gamma.index_of(bob)?;
    let ancilla = epr_pair(
        det.ancilla_variance(),
        ModeLabel::DetectorAncillaF(k),
        ModeLabel::DetectorAncillaG(k),
    )?;
    let mut out = gamma.direct_sum(&ancilla)?;
    let f_idx = out.index_of(ModeLabel::DetectorAncillaF(k))?;
    // F = sqrt(eta) F0 - sqrt(1-eta) B ; B^d = sqrt(1-eta) F0 + sqrt(eta) B
    out.mix_in_place(f_idx, b_idx, det.efficiency);
    out.relabel(bob, ModeLabel::DetectedBob(k))?;
    Ok(out)
}

/// Modal (pre-detector) covariance matrix over `A, B1, ..., BN`.
///
/// EPR(V_M + 1) on `(A, A')`, feeder channel on `A'`, the splitter cascade
/// with one fresh vacuum per step, then each drop channel.
pub fn build_network_cov(topo: &NetworkTopology, v_m: f64) -> Result<CovMatrix> {
    topo.validate()?;
    if !(v_m >= 0.0) {
        return Err(Error::Domain(format!("modulation variance {v_m} < 0")));
    }
    let n = topo.n_bobs();
    // Slot s (1..=n) ends up holding the s-th Bob of the cascade; the trunk
    // enters at slot 1 and each vacuum slot becomes the next trunk.
    let mut order: Vec<u32> = topo.splitter.steps.iter().map(|s| s.bob).collect();
    order.push(topo.splitter.last_bob);

    let mut labels = vec![ModeLabel::Alice];
    labels.extend(order.iter().map(|&b| ModeLabel::Bob(b)));
    let mut gamma = CovMatrix::vacuum(labels)?;
    let epr = epr_cov(v_m + 1.0)?;
    gamma.set_block(0, 0, &epr.block(0, 0));
    gamma.set_block(1, 1, &epr.block(1, 1));
    gamma.set_block(0, 1, &epr.block(0, 1));

    let feeder = topo.feeder.channel;
    gamma.attenuate_in_place(1, feeder.transmittance, feeder.added_noise());
    for (s, step) in topo.splitter.steps.iter().enumerate() {
        gamma.mix_in_place(s + 1, s + 2, step.eta);
    }
    for (s, &bob) in order.iter().enumerate() {
        let ch = topo.drop(bob).channel;
        gamma.attenuate_in_place(s + 1, ch.transmittance, ch.added_noise());
    }

    let mut canonical = vec![ModeLabel::Alice];
    canonical.extend((1..=n as u32).map(ModeLabel::Bob));
    gamma.select(&canonical)
}

/// Closed-form modal variance of a Bob in the symmetric network,
/// `T1 T2 / N (V_M + eps_tot) + 1` with `eps_tot = eps_1 + N eps_2 / T1`.
pub fn symmetric_bob_variance(t1: f64, eps1: f64, t2: f64, eps2: f64, n: usize, v_m: f64) -> f64 {
    let nf = n as f64;
    let eps_tot = eps1 + nf * eps2 / t1;
    t1 * t2 / nf * (v_m + eps_tot) + 1.0
}
