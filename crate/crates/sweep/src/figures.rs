//! Built-in configurations for the reference figures and their checks.

use std::fmt;
use std::str::FromStr;

use ptmp_core::network::ExtraLossLocation;
use serde::Serialize;

use crate::config::{Mode, SweepConfig};
use crate::error::{Result, SweepError};
use crate::sweep::{run_sweep, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig3a,
    Fig3b,
    Fig3c,
    Fig4,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig3a, Figure::Fig3b, Figure::Fig3c, Figure::Fig4];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig3a => "fig3a",
            Figure::Fig3b => "fig3b",
            Figure::Fig3c => "fig3c",
            Figure::Fig4 => "fig4",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| SweepError::Config {
                path: "figure".into(),
                msg: format!("unknown figure `{s}`; expected one of fig3a, fig3b, fig3c, fig4"),
            })
    }
}

/// Outcome of one threshold check on a figure dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Counts toward the exit code.
    pub acceptance: bool,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
            acceptance: true,
        }
    }

    fn informational(mut self) -> Self {
        self.acceptance = false;
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match (self.passed, self.acceptance) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "MISS",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelledDataset {
    /// Empty for single-dataset figures.
    pub label: String,
    pub config: SweepConfig,
    pub data: Dataset,
}

#[derive(Debug, Clone, Serialize)]
pub struct FigureRun {
    pub figure: Figure,
    pub datasets: Vec<LabelledDataset>,
    pub checks: Vec<Check>,
}

impl FigureRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.acceptance).all(|c| c.passed)
    }
}

/// Base parameters of the fig3 family: `V_M = 4`, `beta = 0.956`,
/// `eps_tot = 0.0383`, `eps_a = 0.004`, `eta_d = 0.6`, `v_el = 0.15`.
pub fn fig3_base() -> SweepConfig {
    SweepConfig::default()
}

/// fig4: `V_M = 2.52`, `beta_t = 0.90`, 5 GHz, 4.71 dB extra loss.
pub fn fig4_base(location: ExtraLossLocation) -> SweepConfig {
    let mut cfg = SweepConfig::default();
    cfg.mode = Mode::WorstCase;
    cfg.protocol.modulation_variance_snu = 2.52;
    cfg.protocol.beta = 0.90;
    cfg.protocol.p_f = 0.0;
    cfg.protocol.rep_rate_hz = 5e9;
    cfg.link.extra_loss_db = 4.71;
    cfg.link.extra_loss_location = location;
    cfg.grid.n_bobs = vec![8, 32, 128];
    cfg.grid.emit_ratio_family = true;
    cfg
}

pub fn figure_configs(fig: Figure) -> Vec<(String, SweepConfig)> {
    match fig {
        Figure::Fig3a => vec![(String::new(), fig3_base())],
        Figure::Fig3b => {
            let mut cfg = fig3_base();
            cfg.mode = Mode::WorstCase;
            cfg.grid.emit_ratio_family = true;
            vec![(String::new(), cfg)]
        }
        Figure::Fig3c => {
            let mut cfg = fig3_base();
            cfg.grid.n_bobs = vec![8, 32, 128];
            vec![(String::new(), cfg)]
        }
        Figure::Fig4 => [ExtraLossLocation::Drop, ExtraLossLocation::Feeder]
            .into_iter()
            .map(|loc| (loc.to_string(), fig4_base(loc)))
            .collect(),
    }
}

fn rate_at(data: &Dataset, n: usize, km: f64) -> Option<f64> {
    data.row_at(n, km).map(|r| r.k_bit_per_pulse)
}

fn min_rate_check(data: &Dataset, n: usize, km: f64, threshold: f64) -> Check {
    let name = format!("N={n} K({km} km) >= {threshold:e} bit/pulse");
    match rate_at(data, n, km) {
        Some(k) => Check::new(name, k >= threshold, format!("K = {k:.6e}")),
        None => Check::new(name, false, "grid point missing"),
    }
}

fn distance_check(data: &Dataset, n: usize, km: f64) -> Check {
    let name = format!("N={n} max secure distance > {km} km");
    match data.summary.max_secure_distance_km.get(&n).copied().flatten() {
        Some(d) => Check::new(name, d > km, format!("{d} km")),
        None => Check::new(name, false, "no secure grid point"),
    }
}

fn chi_dominates(data: &Dataset, n: usize) -> Check {
    let secure: Vec<_> = data.rows_for(n).filter(|r| r.k_bit_per_pulse > 0.0).collect();
    let bad = secure.iter().filter(|r| !(r.chi_be > r.i_bb_max)).count();
    Check::new(
        format!("N={n} chi_BE > I_BB_max at every secure distance"),
        !secure.is_empty() && bad == 0,
        format!("{} secure points, {bad} violations", secure.len()),
    )
}

fn ratio_ordering(data: &Dataset, n: usize, km: f64) -> Check {
    let k = |r: f64| {
        data.ratio_family
            .iter()
            .find(|row| row.n == n && (row.distance_km - km).abs() < 1e-9 && (row.ratio - r).abs() < 1e-12)
            .map(|row| row.k_bit_per_pulse)
    };
    let name = format!("N={n} at {km} km: all-drop noise (r=0) is worse than all-feeder (r=1)");
    match (k(0.0), k(1.0)) {
        (Some(a), Some(b)) => Check::new(name, a < b, format!("K(r=0) = {a:.4e}, K(r=1) = {b:.4e}")),
        _ => Check::new(name, false, "ratio extremes missing from grid"),
    }
}

/// Per-user rate within `tol` of a reference kbps value.
fn kbps_check(data: &Dataset, label: &str, n: usize, km: f64, kbps: f64, tol: f64) -> Check {
    let name = format!("[{label}] N={n} {km} km per-user rate within {:.0}% of {kbps} kbps", tol * 100.0);
    match data.row_at(n, km) {
        Some(r) => {
            let got = r.k_bps / 1e3;
            let rel = got / kbps - 1.0;
            Check::new(name, rel.abs() <= tol, format!("{got:.1} kbps ({:+.1}%)", rel * 100.0))
        }
        None => Check::new(name, false, "grid point missing"),
    }
}

pub const FIG4_TARGETS: [(usize, f64, f64); 4] = [(128, 25.0, 54.0), (32, 25.0, 518.0), (8, 25.0, 3294.0), (128, 18.0, 145.0)];
pub const FIG4_TOLERANCE: f64 = 0.20;

pub fn figure_checks(fig: Figure, datasets: &[LabelledDataset]) -> Vec<Check> {
    let first = &datasets[0].data;
    match fig {
        Figure::Fig3a => vec![
            min_rate_check(first, 8, 10.0, 1e-3),
            min_rate_check(first, 8, 100.0, 1e-6),
            chi_dominates(first, 8),
        ],
        Figure::Fig3b => vec![distance_check(first, 8, 180.0), ratio_ordering(first, 8, 150.0)],
        Figure::Fig3c => vec![
            min_rate_check(first, 8, 10.0, 1e-3),
            min_rate_check(first, 8, 100.0, 1e-6),
            distance_check(first, 128, 120.0),
            distance_check(first, 128, 125.0),
        ],
        Figure::Fig4 => {
            let mut checks = Vec::new();
            let mut passing = Vec::new();
            for ld in datasets {
                let per: Vec<Check> = FIG4_TARGETS
                    .iter()
                    .map(|&(n, km, kbps)| kbps_check(&ld.data, &ld.label, n, km, kbps, FIG4_TOLERANCE).informational())
                    .collect();
                if per.iter().all(|c| c.passed) {
                    passing.push(ld.label.clone());
                }
                checks.extend(per);
            }
            let detail = if passing.is_empty() {
                "no placement within tolerance".to_string()
            } else {
                format!("passing placements: {}", passing.join(", "))
            };
            checks.push(Check::new(
                "per-user rates within 20% for at least one extra-loss placement",
                !passing.is_empty(),
                detail,
            ));
            checks
        }
    }
}

pub fn run_figure(fig: Figure) -> Result<FigureRun> {
    let datasets = figure_configs(fig)
        .into_iter()
        .map(|(label, config)| {
            let data = run_sweep(&config)?;
            Ok(LabelledDataset { label, config, data })
        })
        .collect::<Result<Vec<_>>>()?;
    let checks = figure_checks(fig, &datasets);
    Ok(FigureRun {
        figure: fig,
        datasets,
        checks,
    })
}
