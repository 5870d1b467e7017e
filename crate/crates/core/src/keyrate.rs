//! Information quantities and secret key rates under reverse reconciliation
//! with heterodyne detection and a trusted detector.
//!
//! The rate of Bob `B_N` is `beta_t I(A:B_N) - max(max_i I(B_N:B_i), chi)`,
//! clamped at zero, where `beta_t = (1 - p_f) beta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{heterodyne_condition, von_neumann_entropy, CovMatrix, ModeLabel};
use crate::network::{build_network_cov, detector_dilation, DetectorModel, NoiseBudget, SymmetricLink};
use crate::reduction::{reduce_to_three_modes, PairingOrder};

/// Protocol-level parameters shared by every Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Modulation variance `V_M` in shot-noise units.
    pub v_m: f64,
    /// Reconciliation efficiency.
    pub beta: f64,
    /// Error-correction failure probability.
    pub p_f: f64,
    pub rep_rate_hz: f64,
    /// Pulses per ledger round.
    pub block_size: u64,
}

impl ProtocolParams {
    pub fn new(v_m: f64, beta: f64, p_f: f64, rep_rate_hz: f64, block_size: u64) -> Result<Self> {
        let p = Self {
            v_m,
            beta,
            p_f,
            rep_rate_hz,
            block_size,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_m > 0.0) || !self.v_m.is_finite() {
            return Err(Error::Domain(format!("V_M = {} must be positive", self.v_m)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta = {} outside (0, 1]", self.beta)));
        }
        if !(self.p_f >= 0.0 && self.p_f < 1.0) {
            return Err(Error::Domain(format!("p_f = {} outside [0, 1)", self.p_f)));
        }
        if !(self.rep_rate_hz > 0.0) || !self.rep_rate_hz.is_finite() {
            return Err(Error::Domain("repetition rate must be positive".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Domain("block size must be positive".into()));
        }
        Ok(())
    }

    /// Failure-corrected efficiency `(1 - p_f) beta`.
    pub fn beta_t(&self) -> f64 {
        (1.0 - self.p_f) * self.beta
    }
}

/// Which adversary sets the subtracted information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index")]
pub enum Adversary {
    Eve,
    Bob(u32),
}

impl std::fmt::Display for Adversary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Adversary::Eve => write!(f, "Eve"),
            Adversary::Bob(i) => write!(f, "Bob{i}"),
        }
    }
}

/// Key rate of one Bob and the quantities it is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateBreakdown {
    pub target: u32,
    pub n_bobs: usize,
    #[serde(rename = "I_AB")]
    pub i_ab: f64,
    #[serde(rename = "chi_BE")]
    pub chi_be: f64,
    #[serde(rename = "I_BB_max")]
    pub i_bb_max: f64,
    #[serde(rename = "K_bit_per_pulse")]
    pub k_bit_per_pulse: f64,
    #[serde(rename = "K_bps")]
    pub k_bps: f64,
    /// `N` times the per-user rate; exact only for symmetric networks.
    pub aggregate_bps: f64,
    pub binding_adversary: Adversary,
    pub beta_t: f64,
    pub params: ProtocolParams,
}

impl KeyRateBreakdown {
    /// Information removed by privacy amplification, `max(I_BB_max, chi)`.
    pub fn bound(&self) -> f64 {
        self.i_bb_max.max(self.chi_be)
    }

    /// Rate with `p_f = 0`, `max(0, beta I - bound)`.
    pub fn k_without_failures(&self) -> f64 {
        (self.params.beta * self.i_ab - self.bound()).max(0.0)
    }
}

/// How the Holevo bound is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolevoRoute {
    /// Fold the other Bobs into one mode first.
    Reduced(PairingOrder),
    /// Use the full matrix.
    Full,
}

impl Default for HolevoRoute {
    fn default() -> Self {
        HolevoRoute::Reduced(PairingOrder::default())
    }
}

fn bob_index(label: ModeLabel) -> Result<u32> {
    match label {
        ModeLabel::Bob(k) => Ok(k),
        other => Err(Error::Domain(format!("expected a Bob mode, got {other}"))),
    }
}

/// `log2((V_A + 1) / (V_{A|B} + 1))` with `B`'s x quadrature seen through the
/// detector: `V_{A|B} = V_A - eta C^2 / (eta V_B + 1 - eta + 2 v_el + 1)`.
pub fn mutual_info_alice_bob(gamma: &CovMatrix, target: ModeLabel, det: &DetectorModel) -> Result<f64> {
    let a = gamma.index_of(ModeLabel::Alice)?;
    let b = gamma.index_of(target)?;
    let v_a = gamma.block(a, a)[(0, 0)];
    let v_b = gamma.block(b, b)[(0, 0)];
    let c = gamma.block(a, b)[(0, 0)];
    let eta = det.efficiency;
    let v_meas = eta * v_b + det.added_noise();
    let v_cond = v_a - eta * c * c / (v_meas + 1.0);
    if !(v_cond + 1.0 > 0.0) {
        return Err(Error::Numerical(format!(
            "conditional variance V_A|B = {v_cond} is not above -1"
        )));
    }
    Ok(((v_a + 1.0) / (v_cond + 1.0)).log2())
}

/// `log2(V_i / V_{i|j})` on heterodyne outcomes of the x quadratures of two
/// detected Bobs, with `V = eta V_B + 1 - eta + 2 v_el + 1`.
pub fn mutual_info_bobs(
    gamma: &CovMatrix,
    i: ModeLabel,
    j: ModeLabel,
    det_i: &DetectorModel,
    det_j: &DetectorModel,
) -> Result<f64> {
    let bi = gamma.index_of(i)?;
    let bj = gamma.index_of(j)?;
    if bi == bj {
        return Err(Error::Domain(format!("mutual information of {i} with itself")));
    }
    let vi = det_i.efficiency * gamma.block(bi, bi)[(0, 0)] + det_i.added_noise() + 1.0;
    let vj = det_j.efficiency * gamma.block(bj, bj)[(0, 0)] + det_j.added_noise() + 1.0;
    let c = (det_i.efficiency * det_j.efficiency).sqrt() * gamma.block(bi, bj)[(0, 0)];
    let v_cond = vi - c * c / vj;
    if !(v_cond > 0.0) {
        return Err(Error::Numerical(format!(
            "conditional variance {v_cond} between {i} and {j} is not positive"
        )));
    }
    Ok((vi / v_cond).log2())
}

/// Matrices produced while evaluating a Holevo bound.
#[derive(Debug, Clone, PartialEq)]
pub struct HolevoTrace {
    pub chi: f64,
    /// State after the detector dilation (the input itself for ideal detection).
    pub dilated: CovMatrix,
    /// Same state conditioned on the heterodyne outcome of the target.
    pub conditioned: CovMatrix,
}

/// `S(rho_{A, rest, F, G, B^d}) - S(rho | heterodyne of B^d)`.
///
/// Works on any matrix holding Alice and `target`; the remaining modes are
/// treated as part of the trusted side's purification.
pub fn holevo_bound(gamma: &CovMatrix, target: ModeLabel, det: &DetectorModel) -> Result<f64> {
    Ok(holevo_trace(gamma, target, det)?.chi)
}

pub fn holevo_trace(gamma: &CovMatrix, target: ModeLabel, det: &DetectorModel) -> Result<HolevoTrace> {
    let k = bob_index(target)?;
    gamma.index_of(ModeLabel::Alice)?;
    let (dilated, measured) = if det.is_ideal() {
        (gamma.clone(), target)
    } else {
        (detector_dilation(gamma, target, det)?, ModeLabel::DetectedBob(k))
    };
    let conditioned = heterodyne_condition(&dilated, measured)?;
    let chi = von_neumann_entropy(&dilated)? - von_neumann_entropy(&conditioned)?;
    Ok(HolevoTrace {
        chi: chi.max(0.0),
        dilated,
        conditioned,
    })
}

/// Detector of Bob `k`: one shared model, or one per Bob indexed `k - 1`.
fn detector_of(detectors: &[DetectorModel], k: u32) -> Result<&DetectorModel> {
    match detectors.len() {
        0 => Err(Error::Domain("no detector models given".into())),
        1 => Ok(&detectors[0]),
        n => detectors
            .get(k as usize - 1)
            .ok_or(Error::DimensionMismatch {
                expected: k as usize,
                actual: n,
            }),
    }
}

/// Largest `I(target : B_i)` over the other Bob modes present, with argmax.
pub fn max_bob_information(
    gamma: &CovMatrix,
    target: ModeLabel,
    detectors: &[DetectorModel],
) -> Result<(f64, Option<u32>)> {
    let k = bob_index(target)?;
    let det_t = detector_of(detectors, k)?;
    let mut best = (0.0, None);
    for &l in gamma.labels() {
        if let ModeLabel::Bob(i) = l {
            if i == k {
                continue;
            }
            let val = mutual_info_bobs(gamma, target, l, det_t, detector_of(detectors, i)?)?;
            if best.1.is_none() || val > best.0 {
                best = (val, Some(i));
            }
        }
    }
    Ok(best)
}

/// Everything [`key_rate_traced`] computed, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateTrace {
    pub breakdown: KeyRateBreakdown,
    /// Matrix the Holevo bound was evaluated on (reduced or full).
    pub evaluated: CovMatrix,
    pub holevo: HolevoTrace,
}

impl KeyRateTrace {
    /// Every covariance matrix produced along the way.
    pub fn matrices(&self) -> Vec<&CovMatrix> {
        vec![&self.evaluated, &self.holevo.dilated, &self.holevo.conditioned]
    }
}

/// Secret key rate of `target`.
///
/// `gamma` should be the full modal matrix `{A, B_1..B_N}`: the Bob-Bob term
/// only scans Bob modes that are present. `detectors` holds one model shared
/// by all Bobs or one per Bob.
pub fn key_rate(
    gamma: &CovMatrix,
    target: ModeLabel,
    params: &ProtocolParams,
    detectors: &[DetectorModel],
    route: &HolevoRoute,
) -> Result<KeyRateBreakdown> {
    Ok(key_rate_traced(gamma, target, params, detectors, route)?.breakdown)
}

pub fn key_rate_traced(
    gamma: &CovMatrix,
    target: ModeLabel,
    params: &ProtocolParams,
    detectors: &[DetectorModel],
    route: &HolevoRoute,
) -> Result<KeyRateTrace> {
    params.validate()?;
    let k = bob_index(target)?;
    let det = detector_of(detectors, k)?;
    let i_ab = mutual_info_alice_bob(gamma, target, det)?;
    let (i_bb_max, bb_arg) = max_bob_information(gamma, target, detectors)?;
    let evaluated = match route {
        HolevoRoute::Reduced(order) => reduce_to_three_modes(gamma, target, order)?.0,
        HolevoRoute::Full => gamma.clone(),
    };
    let holevo = holevo_trace(&evaluated, target, det)?;
    let chi_be = holevo.chi;
    let beta_t = params.beta_t();
    let binding_adversary = match bb_arg {
        Some(i) if i_bb_max > chi_be => Adversary::Bob(i),
        _ => Adversary::Eve,
    };
    let k_bit = (beta_t * i_ab - i_bb_max.max(chi_be)).max(0.0);
    let n_bobs = gamma
        .labels()
        .iter()
        .filter(|l| matches!(l, ModeLabel::Bob(_)))
        .count();
    let k_bps = k_bit * params.rep_rate_hz;
    let breakdown = KeyRateBreakdown {
        target: k,
        n_bobs,
        i_ab,
        chi_be,
        i_bb_max,
        k_bit_per_pulse: k_bit,
        k_bps,
        aggregate_bps: n_bobs as f64 * k_bps,
        binding_adversary,
        beta_t,
        params: *params,
    };
    Ok(KeyRateTrace {
        breakdown,
        evaluated,
        holevo,
    })
}

/// Rate against each adversary separately: Eve and every other Bob.
pub fn per_adversary_rates(
    gamma: &CovMatrix,
    target: ModeLabel,
    params: &ProtocolParams,
    detectors: &[DetectorModel],
    route: &HolevoRoute,
) -> Result<Vec<(Adversary, f64)>> {
    let trace = key_rate_traced(gamma, target, params, detectors, route)?;
    let b = &trace.breakdown;
    let k = b.target;
    let det_t = detector_of(detectors, k)?;
    let mut out = vec![(Adversary::Eve, b.beta_t * b.i_ab - b.chi_be)];
    for &l in gamma.labels() {
        if let ModeLabel::Bob(i) = l {
            if i != k {
                let info = mutual_info_bobs(gamma, target, l, det_t, detector_of(detectors, i)?)?;
                out.push((Adversary::Bob(i), b.beta_t * b.i_ab - info));
            }
        }
    }
    Ok(out)
}

/// Key rate of Bob `N` in a symmetric network.
pub fn symmetric_key_rate(link: &SymmetricLink, params: &ProtocolParams, route: &HolevoRoute) -> Result<KeyRateBreakdown> {
    let topo = link.topology()?;
    let gamma = build_network_cov(&topo, params.v_m)?;
    key_rate(
        &gamma,
        ModeLabel::Bob(link.n_bobs as u32),
        params,
        &[link.detector],
        route,
    )
}

/// `beta = (H - L_s) / I_AB`.
pub fn reconciliation_beta(h_bn: f64, l_s: f64, i_ab: f64) -> Result<f64> {
    if !(i_ab > 0.0) {
        return Err(Error::Domain(format!("I_AB = {i_ab} must be positive")));
    }
    if !(l_s >= 0.0 && l_s <= h_bn) {
        return Err(Error::Domain(format!("need 0 <= L_s <= H, got L_s = {l_s}, H = {h_bn}")));
    }
    Ok((h_bn - l_s) / i_ab)
}

/// Syndrome length for a target efficiency, `L_s = H - beta I_AB`.
pub fn syndrome_length(h_bn: f64, beta: f64, i_ab: f64) -> Result<f64> {
    if !(i_ab > 0.0) {
        return Err(Error::Domain(format!("I_AB = {i_ab} must be positive")));
    }
    let l_s = h_bn - beta * i_ab;
    if !(l_s >= 0.0 && l_s <= h_bn) {
        return Err(Error::Domain(format!("beta = {beta} gives L_s = {l_s} outside [0, H]")));
    }
    Ok(l_s)
}

/// Worst case over the split of the excess-noise budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    /// `(eps_a / eps_tot, rate)` for every grid ratio, in grid order.
    pub per_ratio: Vec<(f64, KeyRateBreakdown)>,
    pub argmin_ratio: f64,
    pub worst: KeyRateBreakdown,
}

/// Evaluate `link` with `eps_a = r eps_tot` for every `r` in `ratios` and keep
/// the smallest rate. Ties go to the first ratio on the grid.
pub fn worst_case_over_ratio(
    link: &SymmetricLink,
    eps_tot: f64,
    ratios: &[f64],
    params: &ProtocolParams,
    route: &HolevoRoute,
) -> Result<WorstCase> {
    if ratios.is_empty() {
        return Err(Error::Domain("ratio grid is empty".into()));
    }
    let mut per_ratio = Vec::with_capacity(ratios.len());
    for &r in ratios {
        let mut l = *link;
        l.noise = NoiseBudget::with_ratio(eps_tot, r)?;
        per_ratio.push((r, symmetric_key_rate(&l, params, route)?));
    }
    let (idx, _) = per_ratio
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bk), (i, (_, b))| {
            if b.k_bit_per_pulse < bk {
                (i, b.k_bit_per_pulse)
            } else {
                (bi, bk)
            }
        });
    let (argmin_ratio, worst) = per_ratio[idx].clone();
    Ok(WorstCase {
        per_ratio,
        argmin_ratio,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{epr_cov, ExtraLossLocation, DEFAULT_ATTEN_DB_PER_KM};
    use approx::assert_abs_diff_eq;

    fn fig3_params() -> ProtocolParams {
        ProtocolParams::new(4.0, 0.956, 0.0, 1e9, 1_000_000).unwrap()
    }

    fn fig3_link(n: usize, km: f64) -> SymmetricLink {
        SymmetricLink {
            n_bobs: n,
            feeder_km: km,
            drop_km: 0.0,
            atten_db_per_km: DEFAULT_ATTEN_DB_PER_KM,
            extra_loss_db: 0.0,
            extra_loss_location: ExtraLossLocation::Drop,
            noise: NoiseBudget::new(0.0383, 0.004).unwrap(),
            detector: DetectorModel::new(0.6, 0.15).unwrap(),
        }
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::new(0.0, 0.9, 0.0, 1.0, 1).is_err());
        assert!(ProtocolParams::new(4.0, 1.1, 0.0, 1.0, 1).is_err());
        assert!(ProtocolParams::new(4.0, 0.9, 1.0, 1.0, 1).is_err());
        let p = ProtocolParams::new(4.0, 0.9, 0.1, 1.0, 1).unwrap();
        assert_abs_diff_eq!(p.beta_t(), 0.81, epsilon = 1e-15);
    }

    #[test]
    fn alice_bob_information_examples() {
        let gamma = CovMatrix::vacuum(vec![ModeLabel::Alice, ModeLabel::Bob(1)]).unwrap();
        let i = mutual_info_alice_bob(&gamma, ModeLabel::Bob(1), &DetectorModel::ideal()).unwrap();
        assert_eq!(i, 0.0);

        let gamma = epr_cov(5.0).unwrap();
        let i = mutual_info_alice_bob(&gamma, ModeLabel::Bob(1), &DetectorModel::ideal()).unwrap();
        assert_abs_diff_eq!(i, 3f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn uncorrelated_bobs_share_nothing() {
        let gamma = CovMatrix::vacuum(vec![ModeLabel::Alice, ModeLabel::Bob(1), ModeLabel::Bob(2)]).unwrap();
        let d = DetectorModel::new(0.6, 0.15).unwrap();
        assert_eq!(mutual_info_bobs(&gamma, ModeLabel::Bob(1), ModeLabel::Bob(2), &d, &d).unwrap(), 0.0);
    }

    #[test]
    fn reconciliation_examples() {
        assert_eq!(reconciliation_beta(2.0, 2.0, 1.5).unwrap(), 0.0);
        assert_abs_diff_eq!(reconciliation_beta(2.0, 0.5, 1.5).unwrap(), 1.0, epsilon = 1e-15);
        let l = syndrome_length(3.1, 0.93, 1.7).unwrap();
        assert_abs_diff_eq!(reconciliation_beta(3.1, l, 1.7).unwrap(), 0.93, epsilon = 1e-12);
        assert!(reconciliation_beta(2.0, 0.5, 0.0).is_err());
        assert!(reconciliation_beta(2.0, 2.5, 1.0).is_err());
    }

    #[test]
    fn fig3a_rate_at_10_km() {
        let b = symmetric_key_rate(&fig3_link(8, 10.0), &fig3_params(), &HolevoRoute::default()).unwrap();
        assert!(b.k_bit_per_pulse >= 1e-3, "{b:?}");
        assert_eq!(b.binding_adversary, Adversary::Eve);
        assert!(b.chi_be > b.i_bb_max);
        assert_abs_diff_eq!(b.aggregate_bps, 8.0 * b.k_bps, epsilon = 1e-9);
    }

    #[test]
    fn no_failures_matches_plain_rate() {
        let b = symmetric_key_rate(&fig3_link(8, 30.0), &fig3_params(), &HolevoRoute::default()).unwrap();
        assert_eq!(b.beta_t, b.params.beta);
        assert_eq!(b.k_bit_per_pulse, b.k_without_failures());
    }

    #[test]
    fn clamp_when_eve_dominates() {
        let mut params = fig3_params();
        params.beta = 0.2;
        let b = symmetric_key_rate(&fig3_link(8, 10.0), &params, &HolevoRoute::default()).unwrap();
        assert!(b.beta_t * b.i_ab < b.chi_be);
        assert_eq!(b.k_bit_per_pulse, 0.0);
        assert_eq!(b.binding_adversary, Adversary::Eve);
    }

    #[test]
    fn max_rule_is_min_over_adversaries() {
        let link = fig3_link(4, 20.0);
        let params = fig3_params();
        let gamma = build_network_cov(&link.topology().unwrap(), params.v_m).unwrap();
        let route = HolevoRoute::default();
        let b = key_rate(&gamma, ModeLabel::Bob(4), &params, &[link.detector], &route).unwrap();
        let rates = per_adversary_rates(&gamma, ModeLabel::Bob(4), &params, &[link.detector], &route).unwrap();
        assert_eq!(rates.len(), 4);
        let min = rates.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(b.k_bit_per_pulse, min.max(0.0), epsilon = 1e-15);
    }

    #[test]
    fn single_ratio_grid_is_plain_rate() {
        let link = fig3_link(8, 50.0);
        let params = fig3_params();
        let wc = worst_case_over_ratio(&link, 0.0383, &[0.3], &params, &HolevoRoute::default()).unwrap();
        let mut l = link;
        l.noise = NoiseBudget::with_ratio(0.0383, 0.3).unwrap();
        let direct = symmetric_key_rate(&l, &params, &HolevoRoute::default()).unwrap();
        assert_eq!(wc.worst, direct);
        assert_eq!(wc.argmin_ratio, 0.3);
        assert!(worst_case_over_ratio(&link, 0.0383, &[], &params, &HolevoRoute::default()).is_err());
    }

    #[test]
    fn dark_feeder_gives_no_key() {
        let mut link = fig3_link(4, 0.0);
        link.extra_loss_location = ExtraLossLocation::Feeder;
        link.extra_loss_db = 120.0;
        let b = symmetric_key_rate(&link, &fig3_params(), &HolevoRoute::default()).unwrap();
        assert!(b.chi_be < 1e-9, "{b:?}");
        assert_eq!(b.k_bit_per_pulse, 0.0);
    }

    #[test]
    fn breakdown_serializes_with_schema_names() {
        let b = symmetric_key_rate(&fig3_link(2, 5.0), &fig3_params(), &HolevoRoute::default()).unwrap();
        let v = serde_json::to_value(&b).unwrap();
        for key in ["I_AB", "chi_BE", "I_BB_max", "K_bit_per_pulse", "K_bps", "aggregate_bps", "binding_adversary"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
