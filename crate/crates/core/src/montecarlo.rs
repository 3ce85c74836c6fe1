//! Pulse-level simulation of source, fiber and threshold receiver.
//!
//! Each pulse draws a Poisson photon number, Alice's basis and bit, and Bob's
//! basis. Every photon survives independently with the overall transmittance.
//! With matching bases a surviving photon reaches the wrong detector with
//! probability `e_mis`; with mismatched bases it picks either detector at
//! random. Both detectors dark-count independently. No click is a failure,
//! a single click gives the bit of that detector, and a double click gives a
//! uniformly random bit.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`). A run is cut into shards
//! of [`SHARD_PULSES`] pulses; shard `i` of sub-stream `s` uses the generator
//! seeded with `seed_from_u64(seed)` on stream `(s << 40) | i`. Shards are
//! merged by integer addition, so results do not depend on thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmittance, Basis, YieldTable};
use crate::config::DeviceConfig;
use crate::decoy::IntensityMeasurement;
use crate::error::{Error, Result};
use crate::math;

pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64, stream = (substream << 40) | shard";
pub const SHARD_PULSES: u64 = 1 << 20;
const SUBSTREAM_SHIFT: u32 = 40;

/// Receiver outcome for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detection {
    Failure,
    Bit0,
    Bit1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseOutcome {
    pub n_emitted: u32,
    pub alice_basis: Basis,
    pub alice_bit: u8,
    pub bob_basis: Basis,
    pub result: Detection,
    pub double_click: bool,
}

impl PulseOutcome {
    pub fn sifted(&self) -> bool {
        self.alice_basis == self.bob_basis
    }

    pub fn detected(&self) -> bool {
        self.result != Detection::Failure
    }

    pub fn error(&self) -> bool {
        match self.result {
            Detection::Failure => false,
            Detection::Bit0 => self.alice_bit != 0,
            Detection::Bit1 => self.alice_bit != 1,
        }
    }
}

/// Physical parameters of the simulated link, resolved from a configuration.
#[derive(Debug, Clone)]
pub struct PulseModel {
    pub mu: f64,
    pub eta: f64,
    pub d0: f64,
    pub d1: f64,
    pub e_mis: f64,
    /// Probability that either party picks Z.
    pub p_z: f64,
    cdf: Vec<f64>,
}

impl PulseModel {
    pub fn from_config(config: &DeviceConfig) -> Result<Self> {
        config.validate()?;
        let det = config.detector();
        let eta = transmittance(&config.link(), &det).get();
        // both sides share the bias: p^2 + (1-p)^2 = sift
        let sift = config.sift_factor;
        if sift < 0.5 {
            return Err(Error::config(
                "sift_factor",
                format!("simulation needs sift_factor >= 0.5 (shared basis bias), got {sift}"),
            ));
        }
        let p_z = 0.5 * (1.0 + (2.0 * sift - 1.0).max(0.0).sqrt());
        let n_top = math::truncation_point(config.mu, 1e-16)?.max(3);
        let mut cdf = Vec::with_capacity(n_top as usize + 1);
        let mut acc = 0.0;
        for n in 0..=n_top {
            acc += math::pmf_unchecked(config.mu, n);
            cdf.push(acc);
        }
        Ok(PulseModel {
            mu: config.mu,
            eta,
            d0: det.d0.get(),
            d1: det.d1.get(),
            e_mis: config.e_mis,
            p_z,
            cdf,
        })
    }

    /// Largest photon number tracked individually; larger draws land here too.
    pub fn n_top(&self) -> usize {
        self.cdf.len() - 1
    }

    fn photon_number<R: RngCore>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1) as u32
    }

    fn basis<R: RngCore>(&self, rng: &mut R) -> Basis {
        let z = if self.p_z == 0.5 {
            rng.next_u32() & 1 == 0
        } else {
            rng.random::<f64>() < self.p_z
        };
        if z {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn simulate_pulse<R: RngCore>(&self, rng: &mut R) -> PulseOutcome {
        let n = self.photon_number(rng);
        let alice_basis = self.basis(rng);
        let bob_basis = self.basis(rng);
        let coins = rng.next_u32();
        let alice_bit = (coins & 1) as u8;
        let tie_break = ((coins >> 1) & 1) as u8;

        let mut port = [false, false];
        for _ in 0..n {
            if rng.random::<f64>() >= self.eta {
                continue;
            }
            let target = if alice_basis == bob_basis {
                let flipped = rng.random::<f64>() < self.e_mis;
                alice_bit ^ flipped as u8
            } else {
                (rng.next_u32() & 1) as u8
            };
            port[target as usize] = true;
        }
        if rng.random::<f64>() < self.d0 {
            port[0] = true;
        }
        if rng.random::<f64>() < self.d1 {
            port[1] = true;
        }

        let (result, double_click) = match port {
            [false, false] => (Detection::Failure, false),
            [true, false] => (Detection::Bit0, false),
            [false, true] => (Detection::Bit1, false),
            [true, true] => (
                if tie_break == 0 {
                    Detection::Bit0
                } else {
                    Detection::Bit1
                },
                true,
            ),
        };
        PulseOutcome {
            n_emitted: n,
            alice_basis,
            alice_bit,
            bob_basis,
            result,
            double_click,
        }
    }
}

/// Counts for one photon number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonTally {
    pub emitted: u64,
    pub sifted_detections: u64,
    pub sifted_errors: u64,
}

/// Raw event counts. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyCounts {
    pub pulses: u64,
    pub detections: u64,
    pub sifted_pulses: u64,
    pub sifted_detections: u64,
    pub sifted_errors: u64,
    pub double_clicks: u64,
    pub per_n: Vec<PhotonTally>,
}

impl TallyCounts {
    pub fn with_photon_bins(bins: usize) -> Self {
        TallyCounts {
            per_n: vec![PhotonTally::default(); bins],
            ..Default::default()
        }
    }

    pub fn record(&mut self, outcome: &PulseOutcome) {
        self.pulses += 1;
        let bin = (outcome.n_emitted as usize).min(self.per_n.len() - 1);
        self.per_n[bin].emitted += 1;
        if outcome.detected() {
            self.detections += 1;
            if outcome.double_click {
                self.double_clicks += 1;
            }
        }
        if outcome.sifted() {
            self.sifted_pulses += 1;
            if outcome.detected() {
                self.sifted_detections += 1;
                self.per_n[bin].sifted_detections += 1;
                if outcome.error() {
                    self.sifted_errors += 1;
                    self.per_n[bin].sifted_errors += 1;
                }
            }
        }
    }

    pub fn merge(mut self, other: &TallyCounts) -> TallyCounts {
        self.pulses += other.pulses;
        self.detections += other.detections;
        self.sifted_pulses += other.sifted_pulses;
        self.sifted_detections += other.sifted_detections;
        self.sifted_errors += other.sifted_errors;
        self.double_clicks += other.double_clicks;
        if self.per_n.len() < other.per_n.len() {
            self.per_n.resize(other.per_n.len(), PhotonTally::default());
        }
        for (a, b) in self.per_n.iter_mut().zip(&other.per_n) {
            a.emitted += b.emitted;
            a.sifted_detections += b.sifted_detections;
            a.sifted_errors += b.sifted_errors;
        }
        self
    }
}

/// A ratio estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn binomial(successes: u64, trials: u64) -> Option<Estimate> {
        if trials == 0 {
            return None;
        }
        let p = successes as f64 / trials as f64;
        Some(Estimate {
            value: p,
            std_err: (p * (1.0 - p) / trials as f64).sqrt(),
        })
    }
}

/// Simulation counts together with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyReport {
    pub rng: String,
    pub seed: u64,
    pub substream: u64,
    pub mu: f64,
    pub counts: TallyCounts,
}

impl TallyReport {
    pub fn empty(mu: f64) -> Self {
        TallyReport {
            rng: RNG_ALGORITHM.to_string(),
            seed: 0,
            substream: 0,
            mu,
            counts: TallyCounts::with_photon_bins(4),
        }
    }

    /// Sifted gain per pulse.
    pub fn gain(&self) -> Option<Estimate> {
        Estimate::binomial(self.counts.sifted_detections, self.counts.pulses)
    }

    /// Sifted QBER.
    pub fn qber(&self) -> Option<Estimate> {
        Estimate::binomial(self.counts.sifted_errors, self.counts.sifted_detections)
    }

    pub fn gain_n(&self, n: usize) -> Option<Estimate> {
        let hits = self.counts.per_n.get(n).map_or(0, |t| t.sifted_detections);
        Estimate::binomial(hits, self.counts.pulses)
    }

    pub fn error_n(&self, n: usize) -> Option<Estimate> {
        let t = self.counts.per_n.get(n)?;
        Estimate::binomial(t.sifted_errors, t.sifted_detections)
    }

    /// Fraction of detected events that survive sifting.
    pub fn sifted_fraction(&self) -> Option<Estimate> {
        Estimate::binomial(self.counts.sifted_detections, self.counts.detections)
    }

    pub fn to_measurement(&self) -> IntensityMeasurement {
        IntensityMeasurement {
            mu: self.mu,
            q_mu: self.gain().map_or(0.0, |e| e.value),
            e_mu: self.qber().map_or(0.5, |e| e.value),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TallyDocument::from(self)).expect("tally serializes")
    }
}

/// Serialized tally: counts plus the derived estimates.
#[derive(Debug, Serialize)]
struct TallyDocument<'a> {
    #[serde(flatten)]
    report: &'a TallyReport,
    gain: Option<Estimate>,
    qber: Option<Estimate>,
    gain_n: Vec<Option<Estimate>>,
    error_n: Vec<Option<Estimate>>,
}

impl<'a> From<&'a TallyReport> for TallyDocument<'a> {
    fn from(report: &'a TallyReport) -> Self {
        let bins = report.counts.per_n.len();
        TallyDocument {
            report,
            gain: report.gain(),
            qber: report.qber(),
            gain_n: (0..bins).map(|n| report.gain_n(n)).collect(),
            error_n: (0..bins).map(|n| report.error_n(n)).collect(),
        }
    }
}

fn shard_rng(seed: u64, substream: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((substream << SUBSTREAM_SHIFT) | shard);
    rng
}

fn run_substream(model: &PulseModel, n_pulses: u64, seed: u64, substream: u64) -> TallyCounts {
    let shards = n_pulses.div_ceil(SHARD_PULSES);
    let bins = model.n_top() + 1;
    (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(seed, substream, shard);
            let len = SHARD_PULSES.min(n_pulses - shard * SHARD_PULSES);
            let mut counts = TallyCounts::with_photon_bins(bins);
            for _ in 0..len {
                counts.record(&model.simulate_pulse(&mut rng));
            }
            counts
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(TallyCounts::with_photon_bins(bins), |acc, c| acc.merge(&c))
}

fn check_pulses(config: &DeviceConfig, n_pulses: u64) -> Result<()> {
    if n_pulses == 0 {
        return Err(Error::config("pulses", "must be >= 1"));
    }
    if n_pulses > config.max_pulses {
        return Err(Error::Resource(format!(
            "{n_pulses} pulses requested, cap is max_pulses = {}",
            config.max_pulses
        )));
    }
    Ok(())
}

/// Simulate `n_pulses` signal pulses at the configured intensity and length.
pub fn simulate_run(config: &DeviceConfig, n_pulses: u64, seed: u64) -> Result<TallyReport> {
    check_pulses(config, n_pulses)?;
    let model = PulseModel::from_config(config)?;
    Ok(TallyReport {
        rng: RNG_ALGORITHM.to_string(),
        seed,
        substream: 0,
        mu: config.mu,
        counts: run_substream(&model, n_pulses, seed, 0),
    })
}

/// Simulate each intensity on its own sub-stream (`k + 1` for the k-th entry).
pub fn simulate_decoy_tallies(
    config: &DeviceConfig,
    intensities: &[f64],
    pulses_per_intensity: u64,
    seed: u64,
) -> Result<Vec<TallyReport>> {
    if intensities.is_empty() {
        return Err(Error::config("intensities", "must not be empty"));
    }
    check_pulses(config, pulses_per_intensity)?;
    intensities
        .iter()
        .enumerate()
        .map(|(k, &mu)| {
            let model = PulseModel::from_config(&config.with_mu(mu))?;
            let substream = k as u64 + 1;
            Ok(TallyReport {
                rng: RNG_ALGORITHM.to_string(),
                seed,
                substream,
                mu,
                counts: run_substream(&model, pulses_per_intensity, seed, substream),
            })
        })
        .collect()
}

pub fn simulate_decoy_session(
    config: &DeviceConfig,
    intensities: &[f64],
    pulses_per_intensity: u64,
    seed: u64,
) -> Result<Vec<IntensityMeasurement>> {
    Ok(simulate_decoy_tallies(config, intensities, pulses_per_intensity, seed)?
        .iter()
        .map(TallyReport::to_measurement)
        .collect())
}

/// Observed-versus-model comparison of one quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub quantity: String,
    pub observed: f64,
    pub expected: f64,
    pub sigma: f64,
    /// `None` when there were no trials to compare.
    pub z: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub threshold_sigma: f64,
    pub insufficient_statistics: bool,
    pub deviations: Vec<Deviation>,
    pub pass: bool,
}

impl DeviationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Deviation> {
        self.deviations.iter().filter(|d| !d.pass)
    }
}

fn deviation(quantity: String, successes: u64, trials: u64, expected: f64, threshold: f64) -> Deviation {
    if trials == 0 {
        return Deviation {
            quantity,
            observed: f64::NAN,
            expected,
            sigma: f64::NAN,
            z: None,
            pass: true,
        };
    }
    let observed = successes as f64 / trials as f64;
    // standard error under the model's own probability
    let sigma = (expected * (1.0 - expected) / trials as f64).sqrt();
    let gap = observed - expected;
    let z = if sigma > 0.0 {
        gap / sigma
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };
    Deviation {
        quantity,
        observed,
        expected,
        sigma,
        z: Some(z),
        pass: z.abs() <= threshold,
    }
}

/// z-scores of `Q`, `E`, `Q^(n)` and `e^(n)` for `n <= 3`.
pub fn compare_to_analytic(tally: &TallyReport, table: &YieldTable, threshold_sigma: f64) -> DeviationReport {
    let c = &tally.counts;
    if c.pulses == 0 {
        return DeviationReport {
            threshold_sigma,
            insufficient_statistics: true,
            deviations: Vec::new(),
            pass: false,
        };
    }
    let mut deviations = vec![
        deviation("Q".into(), c.sifted_detections, c.pulses, table.q, threshold_sigma),
        deviation(
            "E".into(),
            c.sifted_errors,
            c.sifted_detections,
            table.e,
            threshold_sigma,
        ),
    ];
    for n in 0..=3usize {
        let t = c.per_n.get(n).copied().unwrap_or_default();
        let q_n = table.gains.get(n).copied().unwrap_or(0.0);
        let e_n = table.errors.get(n).copied().unwrap_or(0.5);
        deviations.push(deviation(
            format!("Q{n}"),
            t.sifted_detections,
            c.pulses,
            q_n,
            threshold_sigma,
        ));
        deviations.push(deviation(
            format!("e{n}"),
            t.sifted_errors,
            t.sifted_detections,
            e_n,
            threshold_sigma,
        ));
    }
    let pass = deviations.iter().all(|d| d.pass);
    DeviationReport {
        threshold_sigma,
        insufficient_statistics: false,
        deviations,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_yield_table;

    fn config(mu: f64, length_km: f64) -> DeviceConfig {
        DeviceConfig {
            mu,
            length_km,
            ..DeviceConfig::default()
        }
    }

    #[test]
    fn dark_vacuum_never_clicks() {
        let cfg = DeviceConfig {
            mu: 0.0,
            dark_count: Some(0.0),
            ..DeviceConfig::default()
        };
        let r = simulate_run(&cfg, 100_000, 3).unwrap();
        assert_eq!(r.counts.detections, 0);
        assert_eq!(r.counts.per_n[0].emitted, 100_000);
    }

    #[test]
    fn dark_counts_give_random_bits() {
        let cfg = DeviceConfig {
            mu: 0.0,
            dark_count: Some(0.05),
            ..DeviceConfig::default()
        };
        let r = simulate_run(&cfg, 2_000_000, 11).unwrap();
        let e = r.qber().unwrap();
        assert!((e.value - 0.5).abs() < 4.0 * e.std_err, "{e:?}");
        let y0 = r.gain_n(0).unwrap().value / (0.5 * 1.0);
        let sigma = (0.5 * 0.05 * (1.0 - 0.5 * 0.05) / 2e6f64).sqrt() / 0.5;
        assert!((y0 - 0.05).abs() < 4.0 * sigma, "Y0 = {y0}");
    }

    #[test]
    fn same_seed_same_tally() {
        let cfg = config(0.5, 20.0);
        let a = simulate_run(&cfg, 3 * SHARD_PULSES / 2, 42).unwrap();
        let b = simulate_run(&cfg, 3 * SHARD_PULSES / 2, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let c = simulate_run(&cfg, 3 * SHARD_PULSES / 2, 43).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn merge_is_order_independent() {
        let model = PulseModel::from_config(&config(0.5, 0.0)).unwrap();
        let parts: Vec<TallyCounts> = (0..3).map(|s| run_substream(&model, 50_000, 5, s)).collect();
        let bins = model.n_top() + 1;
        let fwd = parts
            .iter()
            .fold(TallyCounts::with_photon_bins(bins), |a, c| a.merge(c));
        let rev = parts
            .iter()
            .rev()
            .fold(TallyCounts::with_photon_bins(bins), |a, c| a.merge(c));
        assert_eq!(fwd, rev);
        let nested = parts[0].clone().merge(&parts[1].clone().merge(&parts[2]));
        assert_eq!(fwd, nested);
    }

    #[test]
    fn failure_is_never_a_double_click() {
        let model = PulseModel::from_config(&DeviceConfig {
            mu: 3.0,
            e_mis: 0.3,
            dark_count: Some(0.2),
            ..DeviceConfig::default()
        })
        .unwrap();
        let mut rng = shard_rng(9, 0, 0);
        let mut doubles = 0;
        for _ in 0..100_000 {
            let o = model.simulate_pulse(&mut rng);
            assert!(!(o.result == Detection::Failure && o.double_click));
            doubles += o.double_click as u32;
        }
        assert!(doubles > 0);
    }

    #[test]
    fn no_double_clicks_without_noise_for_single_photons() {
        let cfg = DeviceConfig {
            mu: 1e-3,
            dark_count: Some(0.0),
            e_mis: 0.0,
            ..DeviceConfig::default()
        };
        let model = PulseModel::from_config(&cfg).unwrap();
        let mut rng = shard_rng(1, 0, 0);
        for _ in 0..200_000 {
            let o = model.simulate_pulse(&mut rng);
            if o.n_emitted <= 1 {
                assert!(!o.double_click);
            }
            if o.sifted() {
                assert!(!o.error());
            }
        }
    }

    #[test]
    fn doubled_misalignment_is_flagged_on_qber() {
        let reference = build_yield_table(
            &config(0.5, 0.0).source(),
            &config(0.5, 0.0).link(),
            &config(0.5, 0.0).detector(),
        );
        let noisy = DeviceConfig {
            e_mis: 0.066,
            ..config(0.5, 0.0)
        };
        let tally = simulate_run(&noisy, 2_000_000, 8).unwrap();
        let report = compare_to_analytic(&tally, &reference, 4.0);
        assert!(!report.pass);
        assert!(report.failures().any(|d| d.quantity == "E"));
    }

    #[test]
    fn empty_tally_is_insufficient() {
        let cfg = config(0.5, 0.0);
        let table = build_yield_table(&cfg.source(), &cfg.link(), &cfg.detector());
        let report = compare_to_analytic(&TallyReport::empty(0.5), &table, 4.0);
        assert!(report.insufficient_statistics);
        assert!(!report.pass);
    }

    #[test]
    fn pulse_cap_is_enforced() {
        let cfg = DeviceConfig {
            max_pulses: 1000,
            pulses: 10,
            ..DeviceConfig::default()
        };
        assert!(matches!(simulate_run(&cfg, 1001, 1), Err(Error::Resource(_))));
        assert!(simulate_run(&cfg, 0, 1).is_err());
    }

    #[test]
    fn decoy_substreams_are_distinct() {
        let cfg = config(0.5, 0.0);
        let tallies = simulate_decoy_tallies(&cfg, &[0.5, 0.5], 100_000, 4).unwrap();
        assert_eq!(tallies[0].substream, 1);
        assert_eq!(tallies[1].substream, 2);
        assert_ne!(tallies[0].counts, tallies[1].counts);
        assert!(simulate_decoy_session(&cfg, &[], 10, 1).is_err());
    }

    #[test]
    fn biased_basis_sifting() {
        let cfg = DeviceConfig {
            sift_factor: 0.82,
            ..config(0.5, 0.0)
        };
        let r = simulate_run(&cfg, 1_000_000, 2).unwrap();
        let frac = r.counts.sifted_pulses as f64 / r.counts.pulses as f64;
        assert!((frac - 0.82).abs() < 4.0 * (0.82f64 * 0.18 / 1e6).sqrt());
        assert!(simulate_run(
            &DeviceConfig {
                sift_factor: 0.3,
                ..cfg
            },
            10,
            1
        )
        .is_err());
    }
}
