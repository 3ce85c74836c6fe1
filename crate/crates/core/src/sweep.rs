//! Intensity optimization, distance sweeps and distance limits.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_yield_table, single_photon_source};
use crate::config::{DeviceConfig, EstimationMode};
use crate::decoy::{estimate_vacuum_weak, IntensityMeasurement};
use crate::error::{Error, Result};
use crate::rates::{
    rate_gllp, rate_ideal_single_photon, rate_koashi, rate_no_decoy_baseline, RateBreakdown, RateInputs, RateVariant,
};

/// Settings of the grid-then-golden-section intensity search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub grid_points: usize,
    /// Absolute tolerance on `mu`.
    pub mu_tol: f64,
    /// Relative tolerance on `mu`, applied when tighter than `mu_tol`.
    pub mu_rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            grid_points: 32,
            mu_tol: 1e-4,
            mu_rel_tol: 1e-3,
            max_iterations: 200,
        }
    }
}

/// Rate of one variant at a fixed operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub inputs: RateInputs,
    pub breakdown: RateBreakdown,
}

/// Evaluate `variant` at intensity `mu` and the configured length.
///
/// In decoy mode the single-photon parameters of the decoy-state variants
/// come from noiseless vacuum + weak decoy bounds, which requires `mu` above
/// the weak intensity.
pub fn evaluate(config: &DeviceConfig, variant: RateVariant, mu: f64) -> Result<Evaluation> {
    let ec = config.error_correction();
    let (link, det) = (config.link(), config.detector());
    let src = config.source().with_mu(mu);
    src.validate()?;

    if variant == RateVariant::Ideal {
        let (q, e) = single_photon_source(src.sift_factor, &link, &det);
        let f = ec.at(e);
        let inputs = RateInputs {
            q,
            e,
            q0: 0.0,
            q1: q,
            e1: e,
            f_ec: f,
            multi_frac: 0.0,
        };
        return Ok(Evaluation {
            inputs,
            breakdown: rate_ideal_single_photon(q, e, f),
        });
    }

    let table = build_yield_table(&src, &link, &det);
    let f = ec.at(table.e);
    let mut inputs = RateInputs::from_table(&table, mu, f);
    if config.mode == EstimationMode::Decoy && matches!(variant, RateVariant::Koashi | RateVariant::Gllp) {
        let nu = config.decoy_weak()?;
        let signal = IntensityMeasurement {
            mu,
            q_mu: table.q,
            e_mu: table.e,
        };
        let weak = IntensityMeasurement::analytic(nu, src.sift_factor, &link, &det);
        let vacuum = IntensityMeasurement::analytic(0.0, src.sift_factor, &link, &det);
        let est = estimate_vacuum_weak(&signal, &weak, &vacuum, src.sift_factor.get())?;
        inputs = est.rate_inputs(&signal, f);
    }
    let breakdown = match variant {
        RateVariant::Koashi => rate_koashi(&inputs),
        RateVariant::Gllp => rate_gllp(&inputs),
        RateVariant::NoDecoy => rate_no_decoy_baseline(&inputs),
        RateVariant::Ideal => unreachable!(),
    };
    Ok(Evaluation { inputs, breakdown })
}

/// Best intensity found for one variant at one length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOptimum {
    pub mu: f64,
    pub evaluation: Evaluation,
    /// False when no intensity in the bracket gives a positive rate.
    pub positive: bool,
}

impl MuOptimum {
    pub fn g(&self) -> f64 {
        self.evaluation.breakdown.g
    }
}

fn objective(config: &DeviceConfig, variant: RateVariant, mu: f64) -> f64 {
    evaluate(config, variant, mu).map_or(f64::NEG_INFINITY, |e| e.breakdown.g)
}

/// Maximize the rate over `mu` in `[mu_lo, mu_hi]`.
///
/// A log-spaced grid picks the bracket around the best grid point, then a
/// golden-section search refines inside it. The returned rate is never below
/// the best grid point.
pub fn optimize_mu(
    config: &DeviceConfig,
    variant: RateVariant,
    bracket: (f64, f64),
    settings: &OptimizerSettings,
) -> Result<MuOptimum> {
    let (mu_lo, mu_hi) = bracket;
    if !(mu_lo >= 0.0 && mu_lo < mu_hi && mu_hi.is_finite()) {
        return Err(Error::Domain(format!(
            "need 0 <= mu_lo < mu_hi, got [{mu_lo}, {mu_hi}]"
        )));
    }
    if !variant.depends_on_mu() {
        let evaluation = evaluate(config, variant, 1.0)?;
        return Ok(MuOptimum {
            mu: 1.0,
            evaluation,
            positive: evaluation.breakdown.g > 0.0,
        });
    }

    let start = if mu_lo > 0.0 { mu_lo } else { mu_hi * 1e-6 };
    let n = settings.grid_points.max(3);
    let ratio = (mu_hi / start).powf(1.0 / (n - 1) as f64);
    let grid: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 == n {
                mu_hi
            } else {
                start * ratio.powi(i as i32)
            }
        })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&mu| objective(config, variant, mu)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > values[b] { i } else { b });

    let mut a = if best == 0 { mu_lo } else { grid[best - 1] };
    let mut b = if best + 1 == n { mu_hi } else { grid[best + 1] };
    let tol = settings.mu_tol.min(settings.mu_rel_tol * grid[best]);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(config, variant, c);
    let mut fd = objective(config, variant, d);
    for _ in 0..settings.max_iterations {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(config, variant, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(config, variant, d);
        }
    }

    let (mut mu, mut g) = (grid[best], values[best]);
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx > g {
            mu = x;
            g = fx;
        }
    }
    if g == f64::NEG_INFINITY {
        return Err(Error::Domain(format!(
            "variant {variant} cannot be evaluated anywhere in [{mu_lo}, {mu_hi}]"
        )));
    }
    let evaluation = evaluate(config, variant, mu)?;
    Ok(MuOptimum {
        mu,
        evaluation,
        positive: evaluation.breakdown.g > 0.0,
    })
}

/// Optimized result of one variant at one length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantPoint {
    pub mu_opt: f64,
    /// Raw rate, possibly negative.
    pub g: f64,
    pub breakdown: RateBreakdown,
}

impl VariantPoint {
    pub fn g_clamped(&self) -> f64 {
        self.g.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub length_km: f64,
    pub variants: BTreeMap<RateVariant, VariantPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub points: Vec<SweepPoint>,
    /// Largest swept length with a positive rate; `None` if none was positive.
    pub max_distance_km: BTreeMap<RateVariant, Option<f64>>,
}

impl CurveResult {
    pub fn curve(&self, variant: RateVariant) -> impl Iterator<Item = (f64, &VariantPoint)> + '_ {
        self.points
            .iter()
            .filter_map(move |p| p.variants.get(&variant).map(|v| (p.length_km, v)))
    }
}

/// Optimize every requested variant at every length.
pub fn distance_sweep(
    config: &DeviceConfig,
    lengths: &[f64],
    variants: &[RateVariant],
    settings: &OptimizerSettings,
) -> Result<CurveResult> {
    if lengths.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Domain("sweep lengths must be sorted ascending".into()));
    }
    let bracket = (config.mu_min, config.mu_max);
    let points = lengths
        .par_iter()
        .map(|&length_km| {
            let at = config.with_length(length_km);
            let mut map = BTreeMap::new();
            for &variant in variants {
                let opt = optimize_mu(&at, variant, bracket, settings)?;
                map.insert(
                    variant,
                    VariantPoint {
                        mu_opt: opt.mu,
                        g: opt.g(),
                        breakdown: opt.evaluation.breakdown,
                    },
                );
            }
            Ok(SweepPoint {
                length_km,
                variants: map,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_distance_km = variants
        .iter()
        .map(|&v| {
            let last = points
                .iter()
                .rev()
                .find(|p| p.variants[&v].g > 0.0)
                .map(|p| p.length_km);
            (v, last)
        })
        .collect();
    Ok(CurveResult {
        points,
        max_distance_km,
    })
}

/// Rate of `variant` at `length_km` after intensity optimization.
pub fn optimized_rate(
    config: &DeviceConfig,
    variant: RateVariant,
    length_km: f64,
    settings: &OptimizerSettings,
) -> Result<f64> {
    let opt = optimize_mu(
        &config.with_length(length_km),
        variant,
        (config.mu_min, config.mu_max),
        settings,
    )?;
    Ok(opt.g())
}

/// Largest length with a positive optimized rate, by bisection.
///
/// Requires a positive rate at `lo` and a non-positive one at `hi`.
pub fn find_max_distance(
    config: &DeviceConfig,
    variant: RateVariant,
    (lo, hi): (f64, f64),
    tol_km: f64,
    settings: &OptimizerSettings,
) -> Result<f64> {
    if !(lo >= 0.0 && lo < hi && tol_km > 0.0) {
        return Err(Error::Bracket(format!(
            "invalid bracket [{lo}, {hi}] or tolerance {tol_km}"
        )));
    }
    let g_lo = optimized_rate(config, variant, lo, settings)?;
    let g_hi = optimized_rate(config, variant, hi, settings)?;
    if !(g_lo > 0.0) {
        return Err(Error::Bracket(format!(
            "{variant}: rate {g_lo:e} at {lo} km is not positive"
        )));
    }
    if g_hi > 0.0 {
        return Err(Error::Bracket(format!(
            "{variant}: rate {g_hi:e} still positive at {hi} km"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol_km {
        let m = 0.5 * (a + b);
        if optimized_rate(config, variant, m, settings)? > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(a)
}

/// Distance limit, or `Unbounded` when the rate stays positive across the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceLimit {
    Bounded(f64),
    Unbounded,
    /// No positive rate even at the start of the bracket.
    NoKey,
}

pub fn distance_limit(
    config: &DeviceConfig,
    variant: RateVariant,
    bracket: (f64, f64),
    tol_km: f64,
    settings: &OptimizerSettings,
) -> Result<DistanceLimit> {
    if optimized_rate(config, variant, bracket.1, settings)? > 0.0 {
        return Ok(DistanceLimit::Unbounded);
    }
    if !(optimized_rate(config, variant, bracket.0, settings)? > 0.0) {
        return Ok(DistanceLimit::NoKey);
    }
    find_max_distance(config, variant, bracket, tol_km, settings).map(DistanceLimit::Bounded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gys() -> DeviceConfig {
        DeviceConfig::default()
    }

    #[test]
    fn ideal_ignores_intensity() {
        let cfg = gys().with_length(30.0);
        let a = evaluate(&cfg, RateVariant::Ideal, 0.1).unwrap();
        let b = evaluate(&cfg, RateVariant::Ideal, 0.9).unwrap();
        assert_eq!(a, b);
        let opt = optimize_mu(&cfg, RateVariant::Ideal, (1e-6, 1.0), &OptimizerSettings::default()).unwrap();
        assert_eq!(opt.g(), a.breakdown.g);
    }

    #[test]
    fn koashi_minus_gllp_at_same_mu() {
        let cfg = gys().with_length(50.0);
        let k = evaluate(&cfg, RateVariant::Koashi, 0.4).unwrap();
        let g = evaluate(&cfg, RateVariant::Gllp, 0.4).unwrap();
        assert!((k.breakdown.g - g.breakdown.g - k.inputs.q0).abs() <= 1e-12 * k.inputs.q);
    }

    #[test]
    fn decoy_mode_never_beats_oracle() {
        let oracle = gys().with_length(40.0);
        let decoy = DeviceConfig {
            mode: EstimationMode::Decoy,
            ..oracle.clone()
        };
        for mu in [0.2, 0.5, 0.8] {
            let o = evaluate(&oracle, RateVariant::Koashi, mu).unwrap();
            let d = evaluate(&decoy, RateVariant::Koashi, mu).unwrap();
            assert!(d.breakdown.g <= o.breakdown.g);
        }
        assert!(evaluate(&decoy, RateVariant::Koashi, 0.01).is_err());
        let opt = optimize_mu(&decoy, RateVariant::Koashi, (1e-6, 1.0), &OptimizerSettings::default()).unwrap();
        assert!(opt.mu > 0.05 && opt.positive);
    }

    #[test]
    fn optimizer_not_worse_than_grid() {
        let settings = OptimizerSettings::default();
        let cfg = gys().with_length(20.0);
        for variant in [RateVariant::Koashi, RateVariant::NoDecoy] {
            let opt = optimize_mu(&cfg, variant, (1e-6, 1.0), &settings).unwrap();
            let ratio = (1e6f64).powf(1.0 / 31.0);
            let grid_best = (0..32)
                .map(|i| objective(&cfg, variant, 1e-6 * ratio.powi(i)))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(opt.g() >= grid_best - 1e-9, "{variant}");
        }
    }

    #[test]
    fn max_distance_bisection_converges() {
        let settings = OptimizerSettings::default();
        let coarse = find_max_distance(&gys(), RateVariant::Koashi, (0.0, 300.0), 0.1, &settings).unwrap();
        let fine = find_max_distance(&gys(), RateVariant::Koashi, (0.0, 300.0), 0.01, &settings).unwrap();
        assert!((coarse - fine).abs() < 0.1);
    }

    #[test]
    fn noiseless_ideal_has_no_limit() {
        let cfg = DeviceConfig {
            dark_count: Some(0.0),
            e_mis: 0.0,
            f_ec: 1.0,
            ..gys()
        };
        let settings = OptimizerSettings::default();
        assert!(matches!(
            find_max_distance(&cfg, RateVariant::Ideal, (0.0, 1000.0), 0.1, &settings),
            Err(Error::Bracket(_))
        ));
        assert_eq!(
            distance_limit(&cfg, RateVariant::Ideal, (0.0, 1000.0), 0.1, &settings).unwrap(),
            DistanceLimit::Unbounded
        );
    }

    #[test]
    fn sweep_rejects_unsorted_lengths() {
        assert!(distance_sweep(&gys(), &[10.0, 0.0], &RateVariant::ALL, &OptimizerSettings::default()).is_err());
    }

    #[test]
    fn zero_length_dominates() {
        let result = distance_sweep(
            &gys(),
            &[0.0, 10.0, 50.0],
            &RateVariant::ALL,
            &OptimizerSettings::default(),
        )
        .unwrap();
        for v in RateVariant::ALL {
            let g: Vec<f64> = result.curve(v).map(|(_, p)| p.g).collect();
            assert!(g[1..].iter().all(|&x| x < g[0]), "{v}: {g:?}");
        }
    }
}
