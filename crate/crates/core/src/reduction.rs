//! Mode reduction: fold every non-target Bob into a single combined mode with
//! decoupling beam splitters, so the key rate of one Bob is evaluated on a
//! three-mode matrix `{A, B_R, B_target}`.
//!
//! Each fold mixes two receiver modes with a beam splitter chosen so that one
//! output has zero covariance with Alice, then traces that output out. A
//! passive unitary leaves every entropy unchanged and a partial trace can only
//! enlarge the adversary's purification, so the reduced key rate is never
//! above the full one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CovMatrix, ModeLabel};
use crate::network::{ChannelParams, NetworkTopology};

/// Beam-splitter transmittance that decouples one output from Alice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingRatio {
    pub eta_s: f64,
    /// Both inputs were already uncorrelated with Alice; any ratio works.
    pub degenerate: bool,
}

/// `eta_S` from the Alice covariances of the two modes being combined.
///
/// The splitter acts on the ordered pair `(mode 2, mode 1)`. With
/// `C_A1 C_A2 >= 0` its first output (mode 2's port) is decoupled, otherwise
/// the second output (mode 1's port) is.
pub fn pairwise_eta_s_cov(c_a1: f64, c_a2: f64) -> DecouplingRatio {
    let norm = c_a1 * c_a1 + c_a2 * c_a2;
    if norm == 0.0 {
        return DecouplingRatio {
            eta_s: 0.5,
            degenerate: true,
        };
    }
    let eta_s = if c_a1 * c_a2 >= 0.0 {
        c_a1 * c_a1 / norm
    } else {
        c_a2 * c_a2 / norm
    };
    DecouplingRatio {
        eta_s,
        degenerate: false,
    }
}

/// `eta_S = (1 - eta) T2 / (eta T1 + (1 - eta) T2)` for two outputs of a
/// splitter of transmittance `eta` that crossed channels `T1` and `T2`.
/// It is the power weight of the second output in the port that stays
/// coupled to Alice.
pub fn pairwise_eta_s_channels(eta: f64, t1: f64, t2: f64) -> Result<f64> {
    let denom = eta * t1 + (1.0 - eta) * t2;
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "eta T1 + (1 - eta) T2 = {denom} must be positive"
        )));
    }
    Ok((1.0 - eta) * t2 / denom)
}

/// One-way channel equivalent to a split into two independent channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentChannel {
    pub t_t: f64,
    pub eps_t: f64,
}

impl EquivalentChannel {
    pub fn as_channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.t_t, self.eps_t)
    }
}

/// `T_t = eta T + (1 - eta) T'`,
/// `eps_t = (eta T^2 eps + (1 - eta) T'^2 eps') / T_t^2`.
pub fn equivalent_one_way(eta: f64, ch1: &ChannelParams, ch2: &ChannelParams) -> Result<EquivalentChannel> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("splitter ratio {eta} outside [0, 1]")));
    }
    let (t1, t2) = (ch1.transmittance, ch2.transmittance);
    let t_t = eta * t1 + (1.0 - eta) * t2;
    if !(t_t > 0.0) {
        return Err(Error::Domain("equivalent transmittance is zero".into()));
    }
    let eps_t = (eta * t1 * t1 * ch1.excess_noise + (1.0 - eta) * t2 * t2 * ch2.excess_noise) / (t_t * t_t);
    Ok(EquivalentChannel { t_t, eps_t })
}

/// Record of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    pub pair: (ModeLabel, ModeLabel),
    pub eta_s: f64,
    /// Input mode whose port was traced out.
    pub dropped: ModeLabel,
    /// Largest |entry| of the Alice block of the dropped output.
    pub residual_coupling: f64,
    pub degenerate: bool,
}

/// Order in which the non-target Bobs are folded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingOrder {
    /// Ascending `|C_{A B_i}|`; a heuristic for asymmetric networks.
    #[default]
    AscendingCoupling,
    /// Ascending Bob index.
    ByLabel,
    Explicit(Vec<ModeLabel>),
}

fn alice_coupling(gamma: &CovMatrix, alice: usize, mode: usize) -> f64 {
    let blk = gamma.block(alice, mode);
    0.5 * (blk[(0, 0)] - blk[(1, 1)])
}

/// Fold modes at positions `m1`, `m2` in place. Returns (kept, dropped)
/// positions and the step record.
fn fold_in_place(
    work: &mut CovMatrix,
    alice: usize,
    m1: usize,
    m2: usize,
) -> (usize, usize, ReductionStep) {
    let labels = (work.labels()[m1], work.labels()[m2]);
    let c1 = alice_coupling(work, alice, m1);
    let c2 = alice_coupling(work, alice, m2);
    let ratio = pairwise_eta_s_cov(c1, c2);
    // first port = m2, second port = m1
    work.mix_in_place(m2, m1, ratio.eta_s);
    let (kept, dropped) = if c1 * c2 >= 0.0 { (m1, m2) } else { (m2, m1) };
    let residual_coupling = work.block(alice, dropped).amax();
    let step = ReductionStep {
        pair: labels,
        eta_s: ratio.eta_s,
        dropped: work.labels()[dropped],
        residual_coupling,
        degenerate: ratio.degenerate,
    };
    (kept, dropped, step)
}

fn is_receiver(label: ModeLabel) -> bool {
    matches!(label, ModeLabel::Bob(_) | ModeLabel::CombinedRest)
}

/// Combine receiver modes `i` and `j` into one mode labelled `B_R` and trace
/// out the decoupled port.
pub fn reduce_pair(gamma: &CovMatrix, i: ModeLabel, j: ModeLabel) -> Result<(CovMatrix, ReductionStep)> {
    if i == j || !is_receiver(i) || !is_receiver(j) {
        return Err(Error::Domain(format!(
            "reduce_pair needs two distinct receiver modes, got {i} and {j}"
        )));
    }
    if gamma.contains(ModeLabel::CombinedRest) && i != ModeLabel::CombinedRest && j != ModeLabel::CombinedRest {
        return Err(Error::Domain("B_R already present outside the pair".into()));
    }
    let alice = gamma.index_of(ModeLabel::Alice)?;
    let (m1, m2) = (gamma.index_of(i)?, gamma.index_of(j)?);
    let mut work = gamma.clone();
    let (kept, _, step) = fold_in_place(&mut work, alice, m1, m2);
    let kept_label = work.labels()[kept];
    let mut reduced = crate::gaussian::drop_modes(&work, &[step.dropped])?;
    reduced.relabel(kept_label, ModeLabel::CombinedRest)?;
    Ok((reduced, step))
}

fn fold_order(gamma: &CovMatrix, target: ModeLabel, order: &PairingOrder) -> Result<Vec<ModeLabel>> {
    let alice = gamma.index_of(ModeLabel::Alice)?;
    let mut others: Vec<ModeLabel> = gamma
        .labels()
        .iter()
        .copied()
        .filter(|l| *l != target && is_receiver(*l))
        .collect();
    match order {
        PairingOrder::ByLabel => others.sort(),
        PairingOrder::AscendingCoupling => {
            let key = |l: &ModeLabel| alice_coupling(gamma, alice, gamma.index_of(*l).unwrap()).abs();
            others.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
        }
        PairingOrder::Explicit(list) => {
            let mut want = list.clone();
            want.sort();
            let mut have = others.clone();
            have.sort();
            if want != have {
                return Err(Error::Domain(
                    "explicit pairing order must list every non-target receiver exactly once".into(),
                ));
            }
            others = list.clone();
        }
    }
    Ok(others)
}

/// Reduce `{A, B_1..B_N}` to `{A, B_R, target}`.
///
/// The combined mode is oriented so that its Alice covariance has the sign
/// opposite to the target's, i.e. the `-sqrt(1 - 1/N)` port of a two-output
/// splitter.
pub fn reduce_to_three_modes(
    gamma: &CovMatrix,
    target: ModeLabel,
    order: &PairingOrder,
) -> Result<(CovMatrix, Vec<ReductionStep>)> {
    if !matches!(target, ModeLabel::Bob(_)) {
        return Err(Error::Domain(format!("target must be a Bob mode, got {target}")));
    }
    gamma.index_of(target)?;
    let alice = gamma.index_of(ModeLabel::Alice)?;
    let others = fold_order(gamma, target, order)?;
    if others.is_empty() {
        return Err(Error::Domain("reduction needs at least two receivers".into()));
    }
    let mut work = gamma.clone();
    let mut steps = Vec::with_capacity(others.len().saturating_sub(1));
    let mut acc = work.index_of(others[0])?;
    for next in &others[1..] {
        let m2 = work.index_of(*next)?;
        let (kept, _, step) = fold_in_place(&mut work, alice, acc, m2);
        steps.push(step);
        acc = kept;
    }
    let acc_label = work.labels()[acc];
    let mut reduced = work.select(&[ModeLabel::Alice, acc_label, target])?;
    reduced.relabel(acc_label, ModeLabel::CombinedRest)?;
    let c_rest = alice_coupling(&reduced, 0, 1);
    let c_target = alice_coupling(&reduced, 0, 2);
    let same_sign = if c_target == 0.0 { c_rest > 0.0 } else { c_rest * c_target > 0.0 };
    if same_sign {
        reduced.flip_in_place(1);
    }
    Ok((reduced, steps))
}

/// Matrices after each successive fold-and-drop, starting with the input.
/// Same folds as [`reduce_to_three_modes`], kept for auditing the chain.
pub fn reduction_chain(gamma: &CovMatrix, target: ModeLabel, order: &PairingOrder) -> Result<Vec<CovMatrix>> {
    let others = fold_order(gamma, target, order)?;
    let mut chain = vec![gamma.clone()];
    if others.is_empty() {
        return Err(Error::Domain("reduction needs at least two receivers".into()));
    }
    let mut current = gamma.clone();
    let mut acc = others[0];
    for next in &others[1..] {
        let (reduced, _) = reduce_pair(&current, acc, *next)?;
        current = reduced;
        acc = ModeLabel::CombinedRest;
        chain.push(current.clone());
    }
    Ok(chain)
}

/// Three-mode matrix `{A, B_R, B_N}` of a symmetric network written directly
/// from its closed-form entries.
pub fn closed_form_three_mode(topo: &NetworkTopology, v_m: f64) -> Result<CovMatrix> {
    if !topo.is_symmetric() {
        return Err(Error::Domain("closed form requires a symmetric topology".into()));
    }
    let n = topo.n_bobs();
    let nf = n as f64;
    let feeder = topo.feeder.channel;
    let drop = topo.drops[n - 1].channel;
    let (t1, eps1) = (feeder.transmittance, feeder.excess_noise);
    let (t2, eps2) = (drop.transmittance, drop.excess_noise);
    // Identical drops: the equivalent channel of the folded Bobs is the drop itself.
    let (t_t, eps_t) = (t2, eps2);

    let v_a = v_m + 1.0;
    let c_aa = (v_a * v_a - 1.0).sqrt();
    let c_abn = (t1 * t2 / nf).sqrt() * c_aa;
    let c_abr = -(t1 * t_t * (1.0 - 1.0 / nf)).sqrt() * c_aa;
    let eps_tot = eps1 + nf * eps2 / t1;
    let v_bn = t1 * t2 / nf * (v_m + eps_tot) + 1.0;
    let eps_tot_prime = eps1 + eps_t / ((1.0 - 1.0 / nf) * t1);
    let v_br = (1.0 - 1.0 / nf) * t1 * t_t * (v_m + eps_tot_prime) + 1.0;
    let c_brbn = -t1 / nf * (t2 * t_t * (nf - 1.0)).sqrt() * (v_m + eps1);

    let mut m = nalgebra::DMatrix::zeros(6, 6);
    let diag = [v_a, v_br, v_bn];
    for (k, v) in diag.iter().enumerate() {
        m[(2 * k, 2 * k)] = *v;
        m[(2 * k + 1, 2 * k + 1)] = *v;
    }
    let mut put = |i: usize, j: usize, x: f64, p: f64| {
        m[(2 * i, 2 * j)] = x;
        m[(2 * j, 2 * i)] = x;
        m[(2 * i + 1, 2 * j + 1)] = p;
        m[(2 * j + 1, 2 * i + 1)] = p;
    };
    put(0, 1, c_abr, -c_abr);
    put(0, 2, c_abn, -c_abn);
    put(1, 2, c_brbn, c_brbn);
    CovMatrix::new(
        m,
        vec![ModeLabel::Alice, ModeLabel::CombinedRest, ModeLabel::Bob(n as u32)],
    )
}
