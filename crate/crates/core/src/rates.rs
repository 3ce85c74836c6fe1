//! Asymptotic key-rate formulas, each returned with its term-by-term breakdown.
//!
//! All rates are in bits per emitted pulse and include the sifting factor
//! carried by the gains. Negative values mean no secure key and are returned
//! unclamped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{multiphoton_probability, YieldTable};
use crate::error::{Error, Result};
use crate::math::entropy_bits;

/// Observed and inferred quantities that feed a rate formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    /// Sifted gain per pulse.
    pub q: f64,
    /// Overall QBER.
    pub e: f64,
    /// Vacuum contribution to the gain.
    pub q0: f64,
    /// Single-photon contribution to the gain.
    pub q1: f64,
    /// Single-photon QBER.
    pub e1: f64,
    /// Error-correction inefficiency, `>= 1`.
    pub f_ec: f64,
    /// Fraction of detections presumed to come from multiphoton pulses.
    pub multi_frac: f64,
}

impl RateInputs {
    /// Exact inputs read off a yield table.
    pub fn from_table(table: &YieldTable, mu: f64, f_ec: f64) -> Self {
        let multi = table.sift_factor * multiphoton_probability(mu);
        RateInputs {
            q: table.q,
            e: table.e,
            q0: table.q0(),
            q1: table.q1(),
            e1: table.e1(),
            f_ec,
            multi_frac: if table.q > 0.0 { multi / table.q } else { 1.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("E", self.e)?;
        unit("e1", self.e1)?;
        if !(self.q >= 0.0 && self.q0 >= 0.0 && self.q1 >= 0.0) {
            return Err(Error::Domain("gains must be non-negative".into()));
        }
        if self.q0 + self.q1 > self.q * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "Q0 + Q1 = {} exceeds Q = {}",
                self.q0 + self.q1,
                self.q
            )));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::Domain(format!("f_ec must be >= 1, got {}", self.f_ec)));
        }
        if !(self.multi_frac >= 0.0) {
            return Err(Error::Domain(format!(
                "multi_frac must be >= 0, got {}",
                self.multi_frac
            )));
        }
        Ok(())
    }
}

/// A key rate and its constituent terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub g: f64,
    /// `Q f(E) h(E)`.
    pub ec_cost: f64,
    /// Credit for vacuum emissions, which need no privacy amplification.
    pub vacuum_credit: f64,
    /// `Q1 [1 - h(e1)]` or the variant's analogue.
    pub single_photon_term: f64,
    /// Privacy-amplification cost per sifted detection.
    pub entropy_h: f64,
}

impl RateBreakdown {
    /// The rate with no positive contribution and nothing detected.
    pub fn empty() -> Self {
        RateBreakdown {
            g: 0.0,
            ec_cost: 0.0,
            vacuum_credit: 0.0,
            single_photon_term: 0.0,
            entropy_h: 1.0,
        }
    }

    pub fn clamped_g(&self) -> f64 {
        self.g.max(0.0)
    }
}

fn assemble(q: f64, ec_cost: f64, vacuum_credit: f64, single_photon_term: f64) -> RateBreakdown {
    let entropy_h = if q > 0.0 {
        1.0 - vacuum_credit / q - single_photon_term / q
    } else {
        1.0
    };
    RateBreakdown {
        g: -ec_cost + vacuum_credit + single_photon_term,
        ec_cost,
        vacuum_credit,
        single_photon_term,
        entropy_h,
    }
}

/// Rate valid for threshold detectors: vacuum events are credited in full.
pub fn rate_koashi(inputs: &RateInputs) -> RateBreakdown {
    let ec_cost = inputs.q * inputs.f_ec * entropy_bits(inputs.e);
    let single = inputs.q1 * (1.0 - entropy_bits(inputs.e1));
    assemble(inputs.q, ec_cost, inputs.q0, single)
}

/// The GLLP decoy-state rate, which gives no vacuum credit.
pub fn rate_gllp(inputs: &RateInputs) -> RateBreakdown {
    let ec_cost = inputs.q * inputs.f_ec * entropy_bits(inputs.e);
    let single = inputs.q1 * (1.0 - entropy_bits(inputs.e1));
    assemble(inputs.q, ec_cost, 0.0, single)
}

/// Rate of a source emitting exactly one photon per pulse:
/// `Q [1 - f h(E) - h(E)]`.
pub fn rate_ideal_single_photon(q: f64, e: f64, f_ec: f64) -> RateBreakdown {
    let h = entropy_bits(e);
    assemble(q, q * f_ec * h, 0.0, q * (1.0 - h))
}

/// Stand-in for a rate without decoy states: every multiphoton emission is
/// presumed detected and known to the adversary, and the whole QBER is
/// charged to the remaining untagged fraction.
pub fn rate_no_decoy_baseline(inputs: &RateInputs) -> RateBreakdown {
    let ec_cost = inputs.q * inputs.f_ec * entropy_bits(inputs.e);
    let untagged = 1.0 - inputs.multi_frac;
    let single = if untagged > 0.0 && inputs.e / untagged <= 1.0 {
        inputs.q * untagged * (1.0 - entropy_bits(inputs.e / untagged))
    } else {
        0.0
    };
    assemble(inputs.q, ec_cost, 0.0, single)
}

/// The four rate curves compared in the distance sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateVariant {
    /// Vacuum-credited rate valid for threshold detectors.
    Koashi,
    Gllp,
    /// Ideal single-photon source.
    Ideal,
    /// No-decoy tagged-fraction baseline.
    NoDecoy,
}

impl RateVariant {
    pub const ALL: [RateVariant; 4] = [
        RateVariant::Koashi,
        RateVariant::Gllp,
        RateVariant::Ideal,
        RateVariant::NoDecoy,
    ];

    pub fn id(self) -> &'static str {
        match self {
            RateVariant::Koashi => "koashi",
            RateVariant::Gllp => "gllp",
            RateVariant::Ideal => "ideal",
            RateVariant::NoDecoy => "nodecoy",
        }
    }

    /// Whether the rate depends on the source intensity at all.
    pub fn depends_on_mu(self) -> bool {
        self != RateVariant::Ideal
    }

    pub fn label(self) -> &'static str {
        match self {
            RateVariant::Koashi => "WCP+TD decoy, vacuum credit",
            RateVariant::Gllp => "GLLP decoy",
            RateVariant::Ideal => "ideal single-photon source",
            RateVariant::NoDecoy => "no-decoy baseline (tagged-fraction stand-in)",
        }
    }
}

impl fmt::Display for RateVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for RateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RateVariant::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| Error::Parse(format!("unknown rate variant {s:?}")))
    }
}

/// Error-correction inefficiency `f(E)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErrorCorrection {
    Constant(f64),
    /// Piecewise-linear in `E`, held flat outside the tabulated range.
    /// Points are `(E, f)` sorted by `E`.
    Table(Vec<(f64, f64)>),
}

impl ErrorCorrection {
    pub fn validate(&self) -> Result<()> {
        match self {
            ErrorCorrection::Constant(f) if *f >= 1.0 && f.is_finite() => Ok(()),
            ErrorCorrection::Constant(f) => Err(Error::config("f_ec", format!("must be finite and >= 1, got {f}"))),
            ErrorCorrection::Table(points) => {
                if points.is_empty() {
                    return Err(Error::config("f_ec_table", "must contain at least one point"));
                }
                for (i, &(e, f)) in points.iter().enumerate() {
                    if !(0.0..=1.0).contains(&e) {
                        return Err(Error::config(
                            "f_ec_table",
                            format!("point {i}: E = {e} outside [0, 1]"),
                        ));
                    }
                    if !(f >= 1.0 && f.is_finite()) {
                        return Err(Error::config("f_ec_table", format!("point {i}: f = {f} must be >= 1")));
                    }
                    if i > 0 && points[i - 1].0 >= e {
                        return Err(Error::config("f_ec_table", "E values must be strictly increasing"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, e: f64) -> f64 {
        match self {
            ErrorCorrection::Constant(f) => *f,
            ErrorCorrection::Table(points) => {
                let first = points[0];
                let last = points[points.len() - 1];
                if e <= first.0 {
                    return first.1;
                }
                if e >= last.0 {
                    return last.1;
                }
                let i = points.partition_point(|&(x, _)| x <= e);
                let (x0, y0) = points[i - 1];
                let (x1, y1) = points[i];
                y0 + (y1 - y0) * (e - x0) / (x1 - x0)
            }
        }
    }
}

impl Default for ErrorCorrection {
    fn default() -> Self {
        ErrorCorrection::Constant(1.22)
    }
}
