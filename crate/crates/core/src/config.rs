//! Device configuration and its flat JSON document form.
//!
//! Every field is optional in the document and defaults to the Gobby-Yuan-Shields
//! (GYS) experimental parameters. Unknown keys are rejected.
//!
//! | key                      | type          | default   | meaning                                          |
//! |--------------------------|---------------|-----------|--------------------------------------------------|
//! | `mu`                     | number        | 0.5       | signal mean photon number                        |
//! | `sift_factor`            | number        | 0.5       | probability that a pulse survives sifting        |
//! | `eta_d`                  | number        | 0.045     | detector efficiency                              |
//! | `dark_count`             | number        | 1.7e-6    | combined dark-count probability of both detectors|
//! | `detector_dark_counts`   | [d0, d1]      | absent    | per-detector dark counts; excludes `dark_count`  |
//! | `alpha_db_per_km`        | number        | 0.21      | fiber loss                                       |
//! | `length_km`              | number        | 0         | fiber length                                     |
//! | `e_mis`                  | number        | 0.033     | distance-independent misalignment error          |
//! | `f_ec`                   | number        | 1.22      | error-correction inefficiency                    |
//! | `f_ec_table`             | [[E, f], ...] | absent    | piecewise-linear f(E); overrides `f_ec`          |
//! | `decoy_intensities`      | [nu, 0]       | [0.05, 0] | weak and vacuum decoy intensities                |
//! | `mode`                   | string        | "oracle"  | "oracle" or "decoy" single-photon parameters     |
//! | `seed`                   | integer       | 1         | Monte Carlo seed                                 |
//! | `pulses`                 | integer       | 1e7       | Monte Carlo pulses per run or per intensity      |
//! | `max_pulses`             | integer       | 1e10      | refuse simulations larger than this              |
//! | `mu_min`, `mu_max`       | number        | 1e-6, 1   | intensity search bracket                         |
//!
//! The dark-count default is `1.7e-6` per gate. The GYS value is sometimes
//! quoted as `1.7x10^6`, which cannot be a probability; the exponent sign is
//! corrected here.

use serde::{Deserialize, Serialize};

use crate::channel::{DetectorParams, LinkParams, SourceParams};
use crate::error::{Error, Result};
use crate::math::Probability;
use crate::rates::ErrorCorrection;

pub const DEFAULT_DARK_COUNT: f64 = 1.7e-6;

pub const DARK_COUNT_NOTICE: &str = "notice: default dark-count probability d = 1.7e-6 per gate \
(the GYS value is sometimes quoted as 1.7x10^6, which cannot be a probability; the exponent sign is corrected)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    /// Exact single-photon parameters from the channel model.
    #[default]
    Oracle,
    /// Single-photon parameters bounded from decoy measurements.
    Decoy,
}

impl std::str::FromStr for EstimationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(EstimationMode::Oracle),
            "decoy" => Ok(EstimationMode::Decoy),
            other => Err(Error::config(
                "mode",
                format!("expected \"oracle\" or \"decoy\", got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub mu: f64,
    pub sift_factor: f64,
    pub eta_d: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dark_count: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_dark_counts: Option<[f64; 2]>,
    pub alpha_db_per_km: f64,
    pub length_km: f64,
    pub e_mis: f64,
    pub f_ec: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_ec_table: Option<Vec<(f64, f64)>>,
    pub decoy_intensities: Vec<f64>,
    pub mode: EstimationMode,
    pub seed: u64,
    pub pulses: u64,
    pub max_pulses: u64,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            mu: 0.5,
            sift_factor: 0.5,
            eta_d: 0.045,
            dark_count: None,
            detector_dark_counts: None,
            alpha_db_per_km: 0.21,
            length_km: 0.0,
            e_mis: 0.033,
            f_ec: 1.22,
            f_ec_table: None,
            decoy_intensities: vec![0.05, 0.0],
            mode: EstimationMode::Oracle,
            seed: 1,
            pulses: 10_000_000,
            max_pulses: 10_000_000_000,
            mu_min: 1e-6,
            mu_max: 1.0,
        }
    }
}

fn unit(field: &str, v: f64) -> Result<Probability> {
    Probability::new(v).map_err(|_| Error::config(field, format!("must lie in [0, 1], got {v}")))
}

impl DeviceConfig {
    /// Parse and validate a JSON document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: DeviceConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: DeviceConfig = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        let sift = unit("sift_factor", self.sift_factor)?;
        if sift.get() == 0.0 {
            return Err(Error::config("sift_factor", "must be > 0"));
        }
        unit("eta_d", self.eta_d)?;
        match (self.dark_count, self.detector_dark_counts) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "detector_dark_counts",
                    "give either dark_count or detector_dark_counts, not both",
                ))
            }
            (Some(d), None) => {
                unit("dark_count", d)?;
            }
            (None, Some([d0, d1])) => {
                unit("detector_dark_counts[0]", d0)?;
                unit("detector_dark_counts[1]", d1)?;
            }
            (None, None) => {}
        }
        if !(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite()) {
            return Err(Error::config(
                "alpha_db_per_km",
                format!("must be finite and >= 0, got {}", self.alpha_db_per_km),
            ));
        }
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(Error::config(
                "length_km",
                format!("must be finite and >= 0, got {}", self.length_km),
            ));
        }
        if !(0.0..=0.5).contains(&self.e_mis) {
            return Err(Error::config(
                "e_mis",
                format!("must lie in [0, 0.5], got {}", self.e_mis),
            ));
        }
        self.error_correction().validate()?;
        if self.f_ec_table.is_none() && !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(Error::config(
                "f_ec",
                format!("must be finite and >= 1, got {}", self.f_ec),
            ));
        }
        self.decoy_weak()?;
        if self.pulses == 0 {
            return Err(Error::config("pulses", "must be >= 1"));
        }
        if self.pulses > self.max_pulses {
            return Err(Error::config(
                "pulses",
                format!("{} exceeds max_pulses = {}", self.pulses, self.max_pulses),
            ));
        }
        if !(self.mu_min >= 0.0 && self.mu_min < self.mu_max && self.mu_max.is_finite()) {
            return Err(Error::config(
                "mu_min",
                format!("need 0 <= mu_min < mu_max, got [{}, {}]", self.mu_min, self.mu_max),
            ));
        }
        Ok(())
    }

    /// The weak decoy intensity. The list must hold one positive value and one zero.
    pub fn decoy_weak(&self) -> Result<f64> {
        let list = &self.decoy_intensities;
        let bad = || {
            Error::config(
                "decoy_intensities",
                format!("expected [nu, 0] with nu > 0, got {list:?}"),
            )
        };
        if list.len() != 2 {
            return Err(bad());
        }
        let (weak, vacuum) = if list[0] == 0.0 {
            (list[1], list[0])
        } else {
            (list[0], list[1])
        };
        if vacuum != 0.0 || !(weak > 0.0 && weak.is_finite()) {
            return Err(bad());
        }
        Ok(weak)
    }

    pub fn source(&self) -> SourceParams {
        SourceParams {
            mu: self.mu,
            sift_factor: Probability::saturating(self.sift_factor),
        }
    }

    pub fn link(&self) -> LinkParams {
        LinkParams {
            alpha_db_per_km: self.alpha_db_per_km,
            length_km: self.length_km,
            e_mis: Probability::saturating(self.e_mis),
        }
    }

    pub fn detector(&self) -> DetectorParams {
        let eta_d = Probability::saturating(self.eta_d);
        match self.detector_dark_counts {
            Some([d0, d1]) => DetectorParams {
                eta_d,
                d0: Probability::saturating(d0),
                d1: Probability::saturating(d1),
            },
            None => DetectorParams::symmetric(eta_d, Probability::saturating(self.combined_dark_count())),
        }
    }

    pub fn combined_dark_count(&self) -> f64 {
        match self.detector_dark_counts {
            Some([d0, d1]) => d0 + d1 - d0 * d1,
            None => self.dark_count.unwrap_or(DEFAULT_DARK_COUNT),
        }
    }

    pub fn error_correction(&self) -> ErrorCorrection {
        match &self.f_ec_table {
            Some(points) => ErrorCorrection::Table(points.clone()),
            None => ErrorCorrection::Constant(self.f_ec),
        }
    }

    pub fn with_length(&self, length_km: f64) -> Self {
        DeviceConfig {
            length_km,
            ..self.clone()
        }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        DeviceConfig { mu, ..self.clone() }
    }
}

/// Parse a comma-separated decoy intensity list such as `0.5,0.05,0`.
///
/// Exactly three finite, non-negative values are required, one of them zero.
/// Returns them ordered as `[signal, weak, vacuum]`.
pub fn parse_intensity_list(text: &str) -> Result<[f64; 3]> {
    let bad = |msg: String| Error::config("intensities", msg);
    let values = text
        .split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<f64>()
                .map_err(|_| bad(format!("{part:?} is not a number")))
                .and_then(|v| {
                    if v.is_finite() && v >= 0.0 {
                        Ok(v)
                    } else {
                        Err(bad(format!("{v} must be finite and >= 0")))
                    }
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != 3 {
        return Err(bad(format!(
            "expected 3 intensities (signal, weak, vacuum), got {}",
            values.len()
        )));
    }
    let mut sorted = values;
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[2] != 0.0 {
        return Err(bad("one intensity must be 0 (vacuum decoy)".into()));
    }
    if sorted[1] == 0.0 {
        return Err(bad("need a non-zero weak decoy".into()));
    }
    if sorted[1] >= sorted[0] {
        return Err(bad(format!(
            "weak intensity {} must be below the signal {}",
            sorted[1], sorted[0]
        )));
    }
    Ok([sorted[0], sorted[1], sorted[2]])
}
