//! Sweep configuration. Parsed from TOML; unknown keys are rejected and
//! physical keys carry their unit in the name.

use std::path::Path;

use ptmp_core::keyrate::{HolevoRoute, ProtocolParams};
use ptmp_core::network::{DetectorModel, ExtraLossLocation, NoiseBudget, SymmetricLink, DEFAULT_ATTEN_DB_PER_KM};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SweepError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One rate per grid point with the configured `eps_a`.
    #[default]
    Analytic,
    /// Minimum over the ratio grid at each point.
    WorstCase,
    McValidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    #[default]
    Reduced,
    Full,
}

impl Route {
    pub fn holevo(self) -> HolevoRoute {
        match self {
            Route::Reduced => HolevoRoute::default(),
            Route::Full => HolevoRoute::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub modulation_variance_snu: f64,
    pub beta: f64,
    pub p_f: f64,
    pub rep_rate_hz: f64,
    pub block_size_pulses: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            modulation_variance_snu: 4.0,
            beta: 0.956,
            p_f: 0.0,
            rep_rate_hz: 1e9,
            block_size_pulses: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub atten_db_per_km: f64,
    /// Drop length; the grid distance is the feeder length.
    pub drop_km: f64,
    pub extra_loss_db: f64,
    pub extra_loss_location: ExtraLossLocation,
    pub eps_tot_snu: f64,
    /// Feeder share of the noise budget, used in analytic mode.
    pub eps_a_snu: f64,
    pub detector_efficiency: f64,
    pub electronic_noise_snu: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            atten_db_per_km: DEFAULT_ATTEN_DB_PER_KM,
            drop_km: 0.0,
            extra_loss_db: 0.0,
            extra_loss_location: ExtraLossLocation::Drop,
            eps_tot_snu: 0.0383,
            eps_a_snu: 0.004,
            detector_efficiency: 0.6,
            electronic_noise_snu: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_bobs: Vec<usize>,
    /// Explicit distances; overrides the start/stop/step range when set.
    pub distances_km: Option<Vec<f64>>,
    pub start_km: f64,
    pub stop_km: f64,
    pub step_km: f64,
    /// `eps_a / eps_tot` values for worst-case mode.
    pub ratios: Vec<f64>,
    /// Also emit one row per ratio in worst-case mode.
    pub emit_ratio_family: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_bobs: vec![8],
            distances_km: None,
            start_km: 0.0,
            stop_km: 220.0,
            step_km: 1.0,
            ratios: (0..=10).map(|i| i as f64 / 10.0).collect(),
            emit_ratio_family: false,
        }
    }
}

impl GridConfig {
    pub fn distances(&self) -> Vec<f64> {
        if let Some(d) = &self.distances_km {
            return d.clone();
        }
        let steps = ((self.stop_km - self.start_km) / self.step_km + 1e-9).floor() as usize;
        (0..=steps).map(|i| self.start_km + i as f64 * self.step_km).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub pulses: usize,
    pub seed: u64,
    pub n_bobs: usize,
    pub distance_km: f64,
    /// Fraction of pulses used for estimation; all of them when absent.
    pub disclosed_fraction: Option<f64>,
    /// Largest accepted |z| for any matrix entry.
    pub z_threshold: f64,
    /// Largest accepted relative gap between estimated and analytic rate.
    pub rate_gap_threshold: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            pulses: 10_000_000,
            seed: 1,
            n_bobs: 8,
            distance_km: 10.0,
            disclosed_fraction: None,
            z_threshold: 5.0,
            rate_gap_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub mode: Mode,
    pub holevo_route: Route,
    pub protocol: ProtocolConfig,
    pub link: LinkConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub output: OutputConfig,
}

fn field_err(path: &str, msg: impl Into<String>) -> SweepError {
    SweepError::Config {
        path: path.to_string(),
        msg: msg.into(),
    }
}

fn check(ok: bool, path: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(field_err(path, msg))
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| SweepError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SweepError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        check(p.modulation_variance_snu > 0.0, "protocol.modulation_variance_snu", "must be positive")?;
        check(p.beta > 0.0 && p.beta <= 1.0, "protocol.beta", "must be in (0, 1]")?;
        check(p.p_f >= 0.0 && p.p_f < 1.0, "protocol.p_f", "must be in [0, 1)")?;
        check(p.rep_rate_hz > 0.0, "protocol.rep_rate_hz", "must be positive")?;
        check(p.block_size_pulses > 0, "protocol.block_size_pulses", "must be positive")?;

        let l = &self.link;
        check(l.atten_db_per_km >= 0.0, "link.atten_db_per_km", "must be non-negative")?;
        check(l.drop_km >= 0.0, "link.drop_km", "must be non-negative")?;
        check(l.extra_loss_db >= 0.0, "link.extra_loss_db", "must be non-negative")?;
        check(l.eps_tot_snu >= 0.0, "link.eps_tot_snu", "must be non-negative")?;
        check(
            l.eps_a_snu >= 0.0 && l.eps_a_snu <= l.eps_tot_snu,
            "link.eps_a_snu",
            "must be in [0, eps_tot_snu]",
        )?;
        DetectorModel::new(l.detector_efficiency, l.electronic_noise_snu)
            .map_err(|e| field_err("link.detector_efficiency", e.to_string()))?;

        let g = &self.grid;
        check(!g.n_bobs.is_empty(), "grid.n_bobs", "must not be empty")?;
        check(g.n_bobs.iter().all(|&n| n >= 2), "grid.n_bobs", "every N must be at least 2")?;
        match &g.distances_km {
            Some(d) => {
                check(!d.is_empty(), "grid.distances_km", "must not be empty")?;
                check(d.iter().all(|x| *x >= 0.0), "grid.distances_km", "distances must be non-negative")?;
            }
            None => {
                check(g.start_km >= 0.0, "grid.start_km", "must be non-negative")?;
                check(g.step_km > 0.0, "grid.step_km", "must be positive")?;
                check(g.stop_km >= g.start_km, "grid.stop_km", "must not be below start_km")?;
            }
        }
        check(!g.ratios.is_empty(), "grid.ratios", "must not be empty")?;
        check(
            g.ratios.iter().all(|r| (0.0..=1.0).contains(r)),
            "grid.ratios",
            "ratios must be in [0, 1]",
        )?;

        let m = &self.mc;
        check(m.pulses >= 1, "mc.pulses", "must be positive")?;
        check(m.n_bobs >= 2, "mc.n_bobs", "must be at least 2")?;
        check(m.distance_km >= 0.0, "mc.distance_km", "must be non-negative")?;
        if let Some(f) = m.disclosed_fraction {
            check(f > 0.0 && f < 1.0, "mc.disclosed_fraction", "must be in (0, 1)")?;
        }
        check(m.z_threshold > 0.0, "mc.z_threshold", "must be positive")?;
        check(m.rate_gap_threshold > 0.0, "mc.rate_gap_threshold", "must be positive")?;
        Ok(())
    }

    pub fn params(&self) -> Result<ProtocolParams> {
        let p = &self.protocol;
        Ok(ProtocolParams::new(
            p.modulation_variance_snu,
            p.beta,
            p.p_f,
            p.rep_rate_hz,
            p.block_size_pulses,
        )?)
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        Ok(DetectorModel::new(
            self.link.detector_efficiency,
            self.link.electronic_noise_snu,
        )?)
    }

    /// Ratio used in analytic mode.
    pub fn analytic_ratio(&self) -> f64 {
        if self.link.eps_tot_snu > 0.0 {
            self.link.eps_a_snu / self.link.eps_tot_snu
        } else {
            0.0
        }
    }

    /// Symmetric link for one grid point.
    pub fn link_at(&self, n_bobs: usize, distance_km: f64, ratio: f64) -> Result<SymmetricLink> {
        let l = &self.link;
        Ok(SymmetricLink {
            n_bobs,
            feeder_km: distance_km,
            drop_km: l.drop_km,
            atten_db_per_km: l.atten_db_per_km,
            extra_loss_db: l.extra_loss_db,
            extra_loss_location: l.extra_loss_location,
            noise: NoiseBudget::with_ratio(l.eps_tot_snu, ratio)?,
            detector: self.detector()?,
        })
    }
}
