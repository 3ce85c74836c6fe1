//! Photon-number-resolved model of a phase-randomized weak coherent source,
//! a lossy fiber and a two-detector threshold receiver.
//!
//! Channel loss and detector efficiency are folded into a single per-photon
//! transmittance `eta`. For a pulse carrying `n` photons the receiver reports
//! a detection unless every photon is lost and neither detector dark-counts:
//!
//! ```text
//! Y_n = 1 - (1 - d)(1 - eta)^n
//! ```
//!
//! where `d = d0 + d1 - d0 d1`. Errors come from dark-count-only events (random
//! bit) and from signal events misrouted with probability `e_mis`. Coincident
//! dark and signal clicks and multiphoton double clicks are second order in
//! `d` and `e_mis` and are left out of the closed form; the Monte Carlo module
//! models them exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Probability};

/// Tail mass beyond which photon numbers are lumped together.
pub const TRUNCATION_EPS: f64 = 1e-12;

/// Sifting basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Quantum efficiency shared by both detectors.
    pub eta_d: Probability,
    /// Dark-count probability per gate of D0.
    pub d0: Probability,
    /// Dark-count probability per gate of D1.
    pub d1: Probability,
}

impl DetectorParams {
    /// Detectors with a combined dark-count probability `d` split evenly
    /// between the two ports: `d0 = d1 = 1 - sqrt(1 - d)`.
    pub fn symmetric(eta_d: Probability, d: Probability) -> Self {
        // 1 - sqrt(1 - d) without cancellation
        let each = Probability::saturating(-(0.5 * (-d.get()).ln_1p()).exp_m1());
        DetectorParams {
            eta_d,
            d0: each,
            d1: each,
        }
    }

    pub fn combined_dark(&self) -> Probability {
        combined_dark(self.d0, self.d1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub alpha_db_per_km: f64,
    pub length_km: f64,
    /// Distance-independent misalignment error.
    pub e_mis: Probability,
}

impl LinkParams {
    pub fn new(alpha_db_per_km: f64, length_km: f64, e_mis: Probability) -> Result<Self> {
        let link = LinkParams {
            alpha_db_per_km,
            length_km,
            e_mis,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite()) {
            return Err(Error::config(
                "alpha_db_per_km",
                format!("must be finite and >= 0, got {}", self.alpha_db_per_km),
            ));
        }
        if !(self.length_km >= 0.0) {
            return Err(Error::config(
                "length_km",
                format!("must be >= 0, got {}", self.length_km),
            ));
        }
        if self.e_mis.get() > 0.5 {
            return Err(Error::config(
                "e_mis",
                format!("must lie in [0, 0.5], got {}", self.e_mis),
            ));
        }
        Ok(())
    }

    pub fn at_length(&self, length_km: f64) -> Self {
        LinkParams { length_km, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Mean photon number of the signal pulses.
    pub mu: f64,
    /// Probability that a pulse survives basis sifting.
    pub sift_factor: Probability,
}

impl SourceParams {
    pub fn new(mu: f64, sift_factor: Probability) -> Result<Self> {
        let src = SourceParams { mu, sift_factor };
        src.validate()?;
        Ok(src)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        Ok(())
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        SourceParams { mu, ..*self }
    }
}

/// Probability that at least one of two independent detectors dark-counts.
pub fn combined_dark(d0: Probability, d1: Probability) -> Probability {
    let (a, b) = (d0.get(), d1.get());
    Probability::saturating(a + b - a * b)
}

/// Overall per-photon transmittance `eta_d * 10^(-alpha L / 10)`.
pub fn transmittance(link: &LinkParams, det: &DetectorParams) -> Probability {
    let channel = 10f64.powf(-link.alpha_db_per_km * link.length_km / 10.0);
    Probability::saturating(det.eta_d.get() * channel)
}

fn signal_click(eta: f64, n: u64) -> f64 {
    // 1 - (1-eta)^n without cancellation for small eta
    -(n as f64 * (-eta).ln_1p()).exp_m1()
}

/// Detection probability of an `n`-photon pulse.
pub fn yield_n(eta: Probability, d: Probability, n: u64) -> Probability {
    let s = signal_click(eta.get(), n);
    Probability::saturating(s + d.get() * (1.0 - s))
}

/// Error rate of `n`-photon detections.
///
/// Returns one half when nothing can be detected (`eta = d = 0`); such events
/// never carry weight because their gain is zero.
pub fn error_n(eta: Probability, d: Probability, e_mis: Probability, n: u64) -> Probability {
    let s = signal_click(eta.get(), n);
    let y = s + d.get() * (1.0 - s);
    if y <= 0.0 {
        return Probability::HALF;
    }
    Probability::saturating((0.5 * d.get() * (1.0 - s) + e_mis.get() * s) / y)
}

/// Per-photon-number yields, gains and error rates for one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldTable {
    pub n_max: u64,
    pub eta: f64,
    pub dark: f64,
    pub sift_factor: f64,
    /// `Y_n` for `n = 0..=n_max`.
    pub yields: Vec<f64>,
    /// Sifted gain `Q^(n)` per emitted pulse.
    pub gains: Vec<f64>,
    /// Error rate `e^(n)`.
    pub errors: Vec<f64>,
    /// Photon numbers above `n_max`, counted as detected and erroring half the time.
    pub tail_gain: f64,
    /// Overall sifted gain.
    pub q: f64,
    /// Overall QBER.
    pub e: f64,
}

impl YieldTable {
    pub fn q0(&self) -> f64 {
        self.gains[0]
    }

    pub fn q1(&self) -> f64 {
        self.gains.get(1).copied().unwrap_or(0.0)
    }

    /// Single-photon error rate; one half for a vacuum source.
    pub fn e1(&self) -> f64 {
        self.errors.get(1).copied().unwrap_or(0.5)
    }

    pub fn y1(&self) -> f64 {
        self.yields.get(1).copied().unwrap_or(0.0)
    }

    /// Gain of `n`-photon events tagged with one basis. Both bases are chosen
    /// with equal probability, so the two halves coincide.
    pub fn basis_gain(&self, _basis: Basis, n: usize) -> f64 {
        self.gains.get(n).map_or(0.0, |g| 0.5 * g)
    }

    pub fn basis_error(&self, _basis: Basis, n: usize) -> f64 {
        self.errors.get(n).copied().unwrap_or(0.5)
    }

    /// Sum of `Q^(n) e^(n)` plus the tail's random-bit errors.
    pub fn error_weight(&self) -> f64 {
        self.gains.iter().zip(&self.errors).map(|(q, e)| q * e).sum::<f64>() + 0.5 * self.tail_gain
    }
}

/// Assemble the yield table for a weak coherent source.
pub fn build_yield_table(src: &SourceParams, link: &LinkParams, det: &DetectorParams) -> YieldTable {
    let eta = transmittance(link, det);
    let d = det.combined_dark();
    let mu = src.mu.max(0.0);
    let sift = src.sift_factor.get();
    let mut n_max = math::truncation_point(mu, TRUNCATION_EPS).unwrap_or(0);
    if mu > 0.0 {
        n_max = n_max.max(1);
    }

    let mut yields = Vec::with_capacity(n_max as usize + 1);
    let mut gains = Vec::with_capacity(n_max as usize + 1);
    let mut errors = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let y = yield_n(eta, d, n).get();
        yields.push(y);
        gains.push(sift * math::pmf_unchecked(mu, n) * y);
        errors.push(error_n(eta, d, link.e_mis, n).get());
    }
    let tail_gain = sift * math::poisson_tail(mu, n_max).map_or(0.0, Probability::get);

    let mut table = YieldTable {
        n_max,
        eta: eta.get(),
        dark: d.get(),
        sift_factor: sift,
        yields,
        gains,
        errors,
        tail_gain,
        q: 0.0,
        e: 0.5,
    };
    table.q = table.gains.iter().sum::<f64>() + tail_gain;
    if table.q > 0.0 {
        table.e = table.error_weight() / table.q;
    }
    table
}

/// Gain and QBER of an ideal source that always emits exactly one photon.
pub fn single_photon_source(sift_factor: Probability, link: &LinkParams, det: &DetectorParams) -> (f64, f64) {
    let eta = transmittance(link, det);
    let d = det.combined_dark();
    let q = sift_factor.get() * yield_n(eta, d, 1).get();
    let e = error_n(eta, d, link.e_mis, 1).get();
    (q, e)
}

/// Probability that the source emits two or more photons.
pub fn multiphoton_probability(mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    if mu < 1.0 {
        // summed upward from n = 2, exact to rounding for small mu
        return math::poisson_tail(mu, 1).map_or(0.0, Probability::get);
    }
    1.0 - (-mu).exp() * (1.0 + mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn gys_detector() -> DetectorParams {
        DetectorParams::symmetric(p(0.045), p(1.7e-6))
    }

    fn gys_link(length_km: f64) -> LinkParams {
        LinkParams::new(0.21, length_km, p(0.033)).unwrap()
    }

    #[test]
    fn combined_dark_cases() {
        assert_eq!(combined_dark(p(0.0), p(0.0)).get(), 0.0);
        assert_eq!(combined_dark(p(0.37), p(0.0)).get(), 0.37);
        assert!((combined_dark(p(0.1), p(0.2)).get() - 0.28).abs() < 1e-15);
        assert_eq!(combined_dark(p(0.1), p(0.2)), combined_dark(p(0.2), p(0.1)));
    }

    #[test]
    fn combined_dark_matches_sampled_either_fires() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 1_000_000;
        let fired = (0..trials)
            .filter(|_| {
                let a = rng.random::<f64>() < 0.1;
                let b = rng.random::<f64>() < 0.2;
                a || b
            })
            .count();
        let rate = fired as f64 / trials as f64;
        let sigma = (0.28f64 * 0.72 / trials as f64).sqrt();
        assert!((rate - 0.28).abs() < 4.0 * sigma, "sampled {rate}");
        assert!((combined_dark(p(0.1), p(0.2)).get() - rate).abs() < 4.0 * sigma);
    }

    #[test]
    fn symmetric_split_recombines() {
        let det = gys_detector();
        assert!((det.combined_dark().get() - 1.7e-6).abs() < 1e-18);
        assert_eq!(det.d0, det.d1);
    }

    #[test]
    fn transmittance_cases() {
        let det = gys_detector();
        assert_eq!(transmittance(&gys_link(0.0), &det).get(), 0.045);
        // 0.045 * 10^{-2.1} = 3.5744770562592667...e-4
        let eta = transmittance(&gys_link(100.0), &det).get();
        assert!((eta - 3.574_477_056_259_267e-4).abs() < 1e-18);
        assert_eq!(transmittance(&gys_link(f64::INFINITY), &det).get(), 0.0);
    }

    #[test]
    fn yield_cases() {
        assert_eq!(yield_n(p(0.3), p(0.01), 0).get(), 0.01);
        assert_eq!(yield_n(p(1.0), p(0.0), 1).get(), 1.0);
        assert!((yield_n(p(0.1), p(0.01), 2).get() - 0.1981).abs() < 1e-15);
    }

    #[test]
    fn error_cases() {
        assert_eq!(error_n(p(0.3), p(0.01), p(0.033), 0).get(), 0.5);
        for n in 1..5 {
            assert!((error_n(p(1.0), p(0.0), p(0.07), n).get() - 0.07).abs() < 1e-15);
        }
        assert_eq!(error_n(p(0.0), p(0.0), p(0.033), 3).get(), 0.5);
    }

    #[test]
    fn vacuum_source_sees_only_dark_counts() {
        let src = SourceParams::new(0.0, Probability::HALF).unwrap();
        let table = build_yield_table(&src, &gys_link(10.0), &gys_detector());
        assert_eq!(table.n_max, 0);
        assert!((table.q - 0.5 * 1.7e-6).abs() < 1e-18);
        assert_eq!(table.e, 0.5);
    }

    #[test]
    fn table_totals_are_consistent() {
        let src = SourceParams::new(0.5, Probability::HALF).unwrap();
        let table = build_yield_table(&src, &gys_link(0.0), &gys_detector());
        let sum: f64 = table.gains.iter().sum::<f64>() + table.tail_gain;
        assert!((table.q - sum).abs() <= 1e-12 * table.q);
        assert!((table.q * table.e - table.error_weight()).abs() <= 1e-12 * table.q * table.e);
        assert!(table.tail_gain < 1e-12);
        assert_eq!(table.yields[0], table.dark);
    }

    #[test]
    fn single_photon_gain_is_basis_independent() {
        let src = SourceParams::new(0.5, Probability::HALF).unwrap();
        let table = build_yield_table(&src, &gys_link(20.0), &gys_detector());
        assert_eq!(table.basis_gain(Basis::Z, 1), table.basis_gain(Basis::X, 1));
        assert_eq!(table.basis_error(Basis::Z, 1), table.basis_error(Basis::X, 1));
        assert_eq!(
            table.basis_gain(Basis::Z, 1) + table.basis_gain(Basis::X, 1),
            table.q1()
        );
    }

    #[test]
    fn multiphoton_probability_small_mu() {
        let mu = 1e-6;
        // mu^2/2 - mu^3/3 + ...
        assert!((multiphoton_probability(mu) - (mu * mu / 2.0 - mu * mu * mu / 3.0)).abs() < 1e-24);
        let direct = 1.0 - (-0.5f64).exp() * 1.5;
        assert!((multiphoton_probability(0.5) - direct).abs() < 1e-15);
    }

    #[test]
    fn link_validation() {
        assert!(LinkParams::new(-0.1, 1.0, p(0.0)).is_err());
        assert!(LinkParams::new(0.2, -1.0, p(0.0)).is_err());
        assert!(LinkParams::new(0.2, 1.0, p(0.6)).is_err());
        assert!(SourceParams::new(-0.5, Probability::HALF).is_err());
    }
}
