//! Grid evaluation.

use std::collections::BTreeMap;

use ptmp_core::keyrate::{symmetric_key_rate, worst_case_over_ratio, KeyRateBreakdown};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, SweepConfig};
use crate::error::{Result, SweepError};

/// One grid point of the output dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_km: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub ratio: f64,
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
    pub aggregate_bps: f64,
    pub binding_adversary: String,
}

impl SweepRow {
    pub fn from_breakdown(distance_km: f64, ratio: f64, b: &KeyRateBreakdown) -> Self {
        Self {
            distance_km,
            n: b.n_bobs,
            ratio,
            i_ab: b.i_ab,
            chi_be: b.chi_be,
            i_bb_max: b.i_bb_max,
            k_bit_per_pulse: b.k_bit_per_pulse,
            k_bps: b.k_bps,
            aggregate_bps: b.aggregate_bps,
            binding_adversary: b.binding_adversary.to_string(),
        }
    }
}

/// A grid point that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub distance_km: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    /// Last grid distance with a positive rate, per N.
    pub max_secure_distance_km: BTreeMap<usize, Option<f64>>,
    pub failures: Vec<RowFailure>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<SweepRow>,
    /// Per-ratio rows behind each worst-case row, when requested.
    pub ratio_family: Vec<SweepRow>,
    pub summary: Summary,
}

impl Dataset {
    pub fn rows_for(&self, n: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.n == n)
    }

    /// Row at `(n, distance)` if the grid holds it.
    pub fn row_at(&self, n: usize, distance_km: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && (r.distance_km - distance_km).abs() < 1e-9)
    }
}

enum PointResult {
    Ok(SweepRow, Vec<SweepRow>),
    Failed(RowFailure),
}

fn eval_point(cfg: &SweepConfig, n: usize, distance: f64) -> Result<(SweepRow, Vec<SweepRow>)> {
    let params = cfg.params()?;
    let route = cfg.holevo_route.holevo();
    match cfg.mode {
        Mode::Analytic => {
            let ratio = cfg.analytic_ratio();
            let link = cfg.link_at(n, distance, ratio)?;
            let b = symmetric_key_rate(&link, &params, &route)?;
            Ok((SweepRow::from_breakdown(distance, ratio, &b), Vec::new()))
        }
        Mode::WorstCase => {
            let link = cfg.link_at(n, distance, 0.0)?;
            let wc = worst_case_over_ratio(&link, cfg.link.eps_tot_snu, &cfg.grid.ratios, &params, &route)?;
            let family = if cfg.grid.emit_ratio_family {
                wc.per_ratio
                    .iter()
                    .map(|(r, b)| SweepRow::from_breakdown(distance, *r, b))
                    .collect()
            } else {
                Vec::new()
            };
            Ok((SweepRow::from_breakdown(distance, wc.argmin_ratio, &wc.worst), family))
        }
        Mode::McValidate => Err(SweepError::Config {
            path: "mode".into(),
            msg: "mc-validate runs through the mc-validate command, not a sweep".into(),
        }),
    }
}

/// Evaluate every `(N, distance)` point. Output is ordered by N as listed,
/// then by distance, independently of the thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Dataset> {
    cfg.validate()?;
    if cfg.mode == Mode::McValidate {
        return Err(SweepError::Config {
            path: "mode".into(),
            msg: "mc-validate runs through the mc-validate command, not a sweep".into(),
        });
    }
    let distances = cfg.grid.distances();
    let tasks: Vec<(usize, f64)> = cfg
        .grid
        .n_bobs
        .iter()
        .flat_map(|&n| distances.iter().map(move |&d| (n, d)))
        .collect();
    let results: Vec<PointResult> = tasks
        .par_iter()
        .map(|&(n, d)| match eval_point(cfg, n, d) {
            Ok((row, family)) => PointResult::Ok(row, family),
            Err(e) => PointResult::Failed(RowFailure {
                distance_km: d,
                n,
                error: e.to_string(),
            }),
        })
        .collect();

    let mut data = Dataset::default();
    for &n in &cfg.grid.n_bobs {
        data.summary.max_secure_distance_km.insert(n, None);
    }
    for r in results {
        match r {
            PointResult::Ok(row, family) => {
                if row.k_bit_per_pulse > 0.0 {
                    data.summary.max_secure_distance_km.insert(row.n, Some(row.distance_km));
                }
                data.rows.push(row);
                data.ratio_family.extend(family);
            }
            PointResult::Failed(f) => {
                log::warn!("N={} at {} km failed: {}", f.n, f.distance_km, f.error);
                data.summary.failures.push(f);
            }
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ptmp_core::keyrate::HolevoRoute;

    fn small() -> SweepConfig {
        let mut cfg = SweepConfig::default();
        cfg.grid.distances_km = Some(vec![0.0, 10.0, 100.0]);
        cfg.grid.n_bobs = vec![8, 4];
        cfg
    }

    #[test]
    fn single_point_equals_direct_call() {
        let mut cfg = small();
        cfg.grid.distances_km = Some(vec![37.0]);
        cfg.grid.n_bobs = vec![8];
        let data = run_sweep(&cfg).unwrap();
        let link = cfg.link_at(8, 37.0, cfg.analytic_ratio()).unwrap();
        let b = symmetric_key_rate(&link, &cfg.params().unwrap(), &HolevoRoute::default()).unwrap();
        assert_eq!(data.rows, vec![SweepRow::from_breakdown(37.0, cfg.analytic_ratio(), &b)]);
    }

    #[test]
    fn rows_follow_grid_order() {
        let data = run_sweep(&small()).unwrap();
        let keys: Vec<(usize, f64)> = data.rows.iter().map(|r| (r.n, r.distance_km)).collect();
        assert_eq!(
            keys,
            vec![(8, 0.0), (8, 10.0), (8, 100.0), (4, 0.0), (4, 10.0), (4, 100.0)]
        );
        assert_eq!(data.summary.max_secure_distance_km[&8], Some(100.0));
    }

    #[test]
    fn parallel_and_serial_agree() {
        let cfg = small();
        let par = run_sweep(&cfg).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_sweep(&cfg).unwrap());
        assert_eq!(par, serial);
    }

    #[test]
    fn worst_case_emits_family_on_request() {
        let mut cfg = small();
        cfg.mode = Mode::WorstCase;
        cfg.grid.ratios = vec![0.0, 0.5, 1.0];
        cfg.grid.emit_ratio_family = true;
        let data = run_sweep(&cfg).unwrap();
        assert_eq!(data.ratio_family.len(), 3 * data.rows.len());
        for row in &data.rows {
            let min = data
                .ratio_family
                .iter()
                .filter(|f| f.n == row.n && f.distance_km == row.distance_km)
                .map(|f| f.k_bit_per_pulse)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(row.k_bit_per_pulse, min);
        }
    }
}
