//! Binary entropy and Poisson photon-number statistics.

use std::fmt;

use crate::error::{Error, Result};

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const HALF: Probability = Probability(0.5);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::Domain(format!("probability must lie in [0, 1], got {value}")))
        }
    }

    /// Clamps into `[0, 1]`. NaN maps to zero.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Probability(0.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

#[inline]
fn surprisal_term(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.log2()
    }
}

/// Binary entropy `h(p) = -p log2 p - (1-p) log2 (1-p)` in bits.
///
/// Endpoints evaluate to exactly zero. The two terms are summed with a
/// commutative add, so `h(p)` and `h(1-p)` agree bit for bit whenever
/// `1 - (1 - p) == p` in floating point.
pub fn binary_entropy(p: Probability) -> f64 {
    entropy_bits(p.get())
}

/// Unchecked entropy for internal callers that already hold a value in `[0, 1]`.
#[inline]
pub(crate) fn entropy_bits(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "entropy argument {p} outside [0, 1]");
    surprisal_term(p) + surprisal_term(1.0 - p)
}

const LN_FACTORIAL_DIRECT_LIMIT: u64 = 256;

/// `ln(n!)`, summed directly for small `n` and by Stirling's series above that.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= LN_FACTORIAL_DIRECT_LIMIT {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0)))
}

fn check_mean(mu: f64) -> Result<()> {
    if mu.is_finite() && mu >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Poisson mean must be finite and >= 0, got {mu}")))
    }
}

/// Poisson probability `e^{-mu} mu^n / n!`, evaluated in log space.
pub fn poisson_pmf(mu: f64, n: u64) -> Result<Probability> {
    check_mean(mu)?;
    Ok(Probability::saturating(pmf_unchecked(mu, n)))
}

pub(crate) fn pmf_unchecked(mu: f64, n: u64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    ((n as f64) * mu.ln() - mu - ln_factorial(n)).exp()
}

/// `1 - sum_{n <= n_max} pmf(mu, n)`, clamped to `[0, 1]`.
///
/// Past the mode the tail is summed term by term so it keeps full relative
/// precision instead of collapsing into cancellation noise.
pub fn poisson_tail(mu: f64, n_max: u64) -> Result<Probability> {
    check_mean(mu)?;
    if mu == 0.0 {
        return Ok(Probability::ZERO);
    }
    if (n_max as f64) > mu {
        let mut k = n_max + 1;
        let mut term = pmf_unchecked(mu, k);
        let mut sum = 0.0;
        while term > 0.0 && term > sum * 1e-18 {
            sum += term;
            k += 1;
            term *= mu / k as f64;
        }
        Ok(Probability::saturating(sum))
    } else {
        let head: f64 = (0..=n_max).map(|n| pmf_unchecked(mu, n)).sum();
        Ok(Probability::saturating(1.0 - head))
    }
}

/// Smallest `n_max` whose Poisson tail falls below `eps`.
pub fn truncation_point(mu: f64, eps: f64) -> Result<u64> {
    check_mean(mu)?;
    let mut n = 0;
    while poisson_tail(mu, n)?.get() >= eps {
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        assert_eq!(binary_entropy(p(0.0)), 0.0);
        assert_eq!(binary_entropy(p(1.0)), 0.0);
        assert_eq!(binary_entropy(p(0.5)), 1.0);
        // 40-digit evaluation: 0.49991595816452799564...
        assert!((binary_entropy(p(0.11)) - 0.499_915_958_164_528).abs() < 1e-14);
    }

    #[test]
    fn probability_rejects_out_of_range() {
        assert!(Probability::new(-1e-12).is_err());
        assert!(Probability::new(1.0 + 1e-12).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::saturating(f64::NAN), Probability::ZERO);
    }

    #[test]
    fn pmf_reference_values() {
        assert_eq!(poisson_pmf(0.0, 0).unwrap().get(), 1.0);
        assert_eq!(poisson_pmf(0.0, 3).unwrap().get(), 0.0);
        // 0.5 e^{-0.5} = 0.30326532985631671180...
        assert!((poisson_pmf(0.5, 1).unwrap().get() - 0.303_265_329_856_316_7).abs() < 1e-15);
        assert!(poisson_pmf(-0.1, 0).is_err());
        assert!(poisson_pmf(f64::NAN, 0).is_err());
    }

    #[test]
    fn pmf_large_n_does_not_overflow() {
        let v = poisson_pmf(5.0, 1000).unwrap().get();
        assert!((0.0..1e-300).contains(&v));
        let peak = poisson_pmf(400.0, 400).unwrap().get();
        // 1/sqrt(2 pi 400) to leading order
        assert!((peak - 0.019_943).abs() < 1e-4);
    }

    #[test]
    fn tail_reference_values() {
        assert_eq!(poisson_tail(0.0, 0).unwrap().get(), 0.0);
        // 1 - e^{-0.5} = 0.39346934028736657639...
        assert!((poisson_tail(0.5, 0).unwrap().get() - 0.393_469_340_287_366_6).abs() < 1e-15);
        assert!(poisson_tail(-1.0, 3).is_err());
    }

    #[test]
    fn tail_decreases_to_zero() {
        let mut prev = 1.0;
        for n in 0..60 {
            let t = poisson_tail(2.5, n).unwrap().get();
            assert!(t <= prev);
            prev = t;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn ln_factorial_matches_across_branch() {
        let direct: f64 = (2..=300u64).map(|k| (k as f64).ln()).sum();
        assert!((ln_factorial(300) - direct).abs() / direct < 1e-14);
    }

    #[test]
    fn truncation_point_meets_threshold() {
        let n = truncation_point(0.5, 1e-12).unwrap();
        assert!(poisson_tail(0.5, n).unwrap().get() < 1e-12);
        assert!(poisson_tail(0.5, n - 1).unwrap().get() >= 1e-12);
        assert_eq!(truncation_point(0.0, 1e-12).unwrap(), 0);
    }
}
