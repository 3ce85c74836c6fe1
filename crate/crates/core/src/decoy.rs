//! Vacuum + weak decoy bounds on the single-photon yield and error rate.
//!
//! With a signal intensity `mu`, a weak decoy `nu < mu` and a vacuum decoy,
//! the single-photon yield is bounded from below using only that the
//! photon-number yields are non-negative and identical across intensities:
//!
//! ```text
//! Y1 >= mu / (mu nu - nu^2) * [Q_nu e^nu - (nu^2/mu^2) Q_mu e^mu - (mu^2 - nu^2)/mu^2 Y0]
//! e1 <= (E_nu Q_nu e^nu - Y0 / 2) / (nu Y1)
//! ```
//!
//! Gains here are unsifted; measured sifted gains are divided by the sifting
//! factor first. Statistical fluctuations are not propagated.

use serde::{Deserialize, Serialize};

use crate::channel::{build_yield_table, DetectorParams, LinkParams, SourceParams, YieldTable};
use crate::error::{Error, Result};
use crate::rates::RateInputs;

/// Sifted gain and QBER observed at one intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityMeasurement {
    pub mu: f64,
    pub q_mu: f64,
    pub e_mu: f64,
}

impl IntensityMeasurement {
    /// Noiseless measurement taken straight from the analytic channel model.
    pub fn analytic(mu: f64, sift: crate::math::Probability, link: &LinkParams, det: &DetectorParams) -> Self {
        let table = build_yield_table(&SourceParams { mu, sift_factor: sift }, link, det);
        IntensityMeasurement {
            mu,
            q_mu: table.q,
            e_mu: table.e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimate {
    /// Signal intensity the gains refer to.
    pub mu: f64,
    pub sift_factor: f64,
    pub y0: f64,
    pub y1_lower: f64,
    pub q0: f64,
    pub q1_lower: f64,
    pub e1_upper: f64,
    /// Set when a clamp fired and the single-photon bound carries no information.
    pub vacuous: bool,
}

impl DecoyEstimate {
    /// Rate inputs combining the signal measurement with the bounds.
    pub fn rate_inputs(&self, signal: &IntensityMeasurement, f_ec: f64) -> RateInputs {
        let multi = self.sift_factor * crate::channel::multiphoton_probability(self.mu);
        RateInputs {
            q: signal.q_mu,
            e: signal.e_mu,
            q0: self.q0,
            q1: self.q1_lower,
            e1: self.e1_upper,
            f_ec,
            multi_frac: if signal.q_mu > 0.0 { multi / signal.q_mu } else { 1.0 },
        }
    }
}

/// Bound `Y1`, `e1` from a signal, a weak decoy and a vacuum decoy.
pub fn estimate_vacuum_weak(
    signal: &IntensityMeasurement,
    weak: &IntensityMeasurement,
    vacuum: &IntensityMeasurement,
    sift: f64,
) -> Result<DecoyEstimate> {
    let (mu, nu) = (signal.mu, weak.mu);
    if !(nu >= 0.0 && nu < mu) {
        return Err(Error::config(
            "decoy_intensities",
            format!("weak intensity {nu} must satisfy 0 <= nu < mu = {mu}"),
        ));
    }
    if nu == 0.0 {
        return Err(Error::config(
            "decoy_intensities",
            "weak intensity must be strictly positive",
        ));
    }
    if vacuum.mu != 0.0 {
        return Err(Error::config(
            "decoy_intensities",
            format!("vacuum intensity must be 0, got {}", vacuum.mu),
        ));
    }
    if !(sift > 0.0 && sift <= 1.0) {
        return Err(Error::config("sift_factor", format!("must lie in (0, 1], got {sift}")));
    }

    let y0 = vacuum.q_mu / sift;
    let qmu = signal.q_mu * mu.exp() / sift;
    let qnu = weak.q_mu * nu.exp() / sift;
    let mu2 = mu * mu;
    let nu2 = nu * nu;

    let raw_y1 = mu / (mu * nu - nu2) * (qnu - nu2 / mu2 * qmu - (mu2 - nu2) / mu2 * y0);
    let mut vacuous = !(raw_y1 > 0.0);
    let y1_lower = if vacuous { 0.0 } else { raw_y1 };

    let e1_upper = if vacuous {
        0.5
    } else {
        let raw = (weak.e_mu * qnu - 0.5 * y0) / (y1_lower * nu);
        if !(raw < 0.5) {
            vacuous = true;
        }
        raw.clamp(0.0, 0.5)
    };

    let attenuation = (-mu).exp();
    Ok(DecoyEstimate {
        mu,
        sift_factor: sift,
        y0,
        y1_lower,
        q0: sift * attenuation * y0,
        q1_lower: sift * mu * attenuation * y1_lower,
        e1_upper,
        vacuous,
    })
}

/// One bound compared against the model's true value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub truth: f64,
    pub pass: bool,
    /// Relative gap between the bound and the truth, positive when it holds.
    pub slack: f64,
}

impl BoundCheck {
    fn lower(bound: f64, truth: f64) -> Self {
        BoundCheck {
            bound,
            truth,
            pass: bound <= truth,
            slack: relative(truth - bound, truth),
        }
    }

    fn upper(bound: f64, truth: f64) -> Self {
        BoundCheck {
            bound,
            truth,
            pass: bound >= truth,
            slack: relative(bound - truth, truth),
        }
    }
}

fn relative(gap: f64, scale: f64) -> f64 {
    if scale != 0.0 {
        gap / scale.abs()
    } else {
        gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub y1: BoundCheck,
    pub e1: BoundCheck,
    pub q1: BoundCheck,
}

impl BracketReport {
    pub fn all_pass(&self) -> bool {
        self.y1.pass && self.e1.pass && self.q1.pass
    }
}

/// Check the estimate against the analytic table of the same configuration.
pub fn bounds_bracket_check(est: &DecoyEstimate, truth: &YieldTable) -> BracketReport {
    BracketReport {
        y1: BoundCheck::lower(est.y1_lower, truth.y1()),
        e1: BoundCheck::upper(est.e1_upper, truth.e1()),
        q1: BoundCheck::lower(est.q1_lower, truth.q1()),
    }
}
