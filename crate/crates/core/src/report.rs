//! Tabular and JSON renderings shared by the command-line tool.

use std::fmt::Write as _;

use serde::Serialize;

use crate::channel::build_yield_table;
use crate::config::DeviceConfig;
use crate::decoy::{BracketReport, DecoyEstimate};
use crate::montecarlo::DeviationReport;
use crate::rates::RateVariant;
use crate::sweep::{CurveResult, DistanceLimit, Evaluation, OptimizerSettings};

pub const TOOL_NAME: &str = "keyrate";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: &str =
    "length_km,mu_opt_koashi,G_koashi,mu_opt_gllp,G_gllp,mu_opt_ideal,G_ideal,mu_opt_nodecoy,G_nodecoy";

pub const RATE_UNITS: &str = "bits per emitted pulse, sifting factor included";
pub const NO_DECOY_NOTE: &str =
    "nodecoy is a tagged-fraction stand-in (all multiphoton emissions presumed detected and tagged)";

/// Fixed-point rendering with 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return format!("{:.11}", 0.0);
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let text = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.99.. -> 10.0..)
    let digits = text
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if digits > 12 && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        text
    }
}

/// Results CSV: one row per length, raw (unclamped) rates.
pub fn sweep_csv(result: &CurveResult) -> String {
    let mut out = String::with_capacity(64 * (result.points.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for point in &result.points {
        out.push_str(&format_sig12(point.length_km));
        for variant in RateVariant::ALL {
            match point.variants.get(&variant) {
                Some(v) => {
                    let _ = write!(out, ",{},{}", format_sig12(v.mu_opt), format_sig12(v.g));
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct SweepMetadata<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a DeviceConfig,
    pub l_min_km: f64,
    pub l_max_km: f64,
    pub step_km: f64,
    pub optimizer: &'a OptimizerSettings,
    pub optimizer_method: &'static str,
    pub mu_bracket: (f64, f64),
    pub rate_units: &'static str,
    pub nodecoy_note: &'static str,
    pub dark_count_note: &'static str,
    pub max_distance_km: Vec<(RateVariant, Option<f64>)>,
}

impl<'a> SweepMetadata<'a> {
    pub fn new(
        config: &'a DeviceConfig,
        range: (f64, f64, f64),
        optimizer: &'a OptimizerSettings,
        result: &CurveResult,
    ) -> Self {
        SweepMetadata {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            config,
            l_min_km: range.0,
            l_max_km: range.1,
            step_km: range.2,
            optimizer,
            optimizer_method: "log-spaced grid scan, then golden-section search around the best grid point",
            mu_bracket: (config.mu_min, config.mu_max),
            rate_units: RATE_UNITS,
            nodecoy_note: NO_DECOY_NOTE,
            dark_count_note: crate::config::DARK_COUNT_NOTICE,
            max_distance_km: result.max_distance_km.iter().map(|(&v, &d)| (v, d)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }
}

/// Lengths `l_min, l_min + step, ...` up to `l_max` inclusive.
pub fn length_grid(l_min: f64, l_max: f64, step: f64) -> Vec<f64> {
    let count = ((l_max - l_min) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| l_min + step * i as f64).collect()
}

/// Per-variant breakdown table at one operating point.
pub fn rate_table(config: &DeviceConfig, mu: f64, rows: &[(RateVariant, Evaluation)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# length_km = {}  mu = {}  ({})", config.length_km, mu, RATE_UNITS);
    let _ = writeln!(
        out,
        "{:<8} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20}",
        "variant", "G", "ec_cost", "vacuum_credit", "single_term", "entropy_H", "Q", "E", "Q0", "Q1", "e1"
    );
    for (variant, ev) in rows {
        let b = &ev.breakdown;
        let i = &ev.inputs;
        let _ = writeln!(
            out,
            "{:<8} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20} {:>20}",
            variant.id(),
            format_sig12(b.g),
            format_sig12(b.ec_cost),
            format_sig12(b.vacuum_credit),
            format_sig12(b.single_photon_term),
            format_sig12(b.entropy_h),
            format_sig12(i.q),
            format_sig12(i.e),
            format_sig12(i.q0),
            format_sig12(i.q1),
            format_sig12(i.e1),
        );
    }
    if let (Some((_, k)), Some((_, g))) = (
        rows.iter().find(|(v, _)| *v == RateVariant::Koashi),
        rows.iter().find(|(v, _)| *v == RateVariant::Gllp),
    ) {
        let _ = writeln!(
            out,
            "# G_koashi - G_gllp = {}  (Q0 = {})",
            format_sig12(k.breakdown.g - g.breakdown.g),
            format_sig12(k.inputs.q0)
        );
    }
    let _ = writeln!(out, "# {NO_DECOY_NOTE}");
    out
}

pub fn max_distance_table(limits: &[(RateVariant, DistanceLimit)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:>16}", "variant", "max_distance_km");
    let mut koashi = None;
    let mut gllp = None;
    for (variant, limit) in limits {
        let shown = match limit {
            DistanceLimit::Bounded(km) => {
                match variant {
                    RateVariant::Koashi => koashi = Some(*km),
                    RateVariant::Gllp => gllp = Some(*km),
                    _ => {}
                }
                format!("{km:.1}")
            }
            DistanceLimit::Unbounded => "unbounded".to_string(),
            DistanceLimit::NoKey => "no-key".to_string(),
        };
        let _ = writeln!(out, "{:<8} {:>16}", variant.id(), shown);
    }
    if let (Some(k), Some(g)) = (koashi, gllp) {
        let _ = writeln!(out, "# koashi - gllp gap: {:.1} km (vacuum credit)", k - g);
    }
    let _ = writeln!(out, "# {NO_DECOY_NOTE}");
    out
}

pub fn decoy_report(config: &DeviceConfig, est: &DecoyEstimate, bracket: &BracketReport) -> String {
    let truth = build_yield_table(&config.source().with_mu(est.mu), &config.link(), &config.detector());
    let mut out = String::new();
    let _ = writeln!(out, "# length_km = {}  signal mu = {}", config.length_km, est.mu);
    let _ = writeln!(
        out,
        "{:<10} {:>20} {:>20} {:>12} {:>6}",
        "quantity", "bound", "true", "slack_%", "pass"
    );
    for (name, check) in [
        ("Y1_lower", &bracket.y1),
        ("e1_upper", &bracket.e1),
        ("Q1_lower", &bracket.q1),
    ] {
        let _ = writeln!(
            out,
            "{:<10} {:>20} {:>20} {:>12.3} {:>6}",
            name,
            format_sig12(check.bound),
            format_sig12(check.truth),
            100.0 * check.slack,
            if check.pass { "ok" } else { "FAIL" }
        );
    }
    let _ = writeln!(
        out,
        "{:<10} {:>20} {:>20}",
        "Y0",
        format_sig12(est.y0),
        format_sig12(truth.yields[0])
    );
    let _ = writeln!(
        out,
        "{:<10} {:>20} {:>20}",
        "Q0",
        format_sig12(est.q0),
        format_sig12(truth.q0())
    );
    if est.vacuous {
        let _ = writeln!(out, "# estimate is vacuous (bounds clamped)");
    }
    let _ = writeln!(out, "# overall: {}", if bracket.all_pass() { "pass" } else { "FAIL" });
    out
}

pub fn deviation_table(report: &DeviationReport) -> String {
    let mut out = String::new();
    if report.insufficient_statistics {
        out.push_str("insufficient statistics\n");
        return out;
    }
    let _ = writeln!(out, "{:<6} {:>20} {:>20} {:>10}", "qty", "observed", "expected", "z");
    for d in &report.deviations {
        let z = d.z.map_or("n/a".to_string(), |z| format!("{z:.3}"));
        let _ = writeln!(
            out,
            "{:<6} {:>20} {:>20} {:>10}{}",
            d.quantity,
            format_sig12(d.observed),
            format_sig12(d.expected),
            z,
            if d.pass { "" } else { "  <-- exceeds threshold" }
        );
    }
    let _ = writeln!(
        out,
        "# agreement at {} sigma: {}",
        report.threshold_sigma,
        if report.pass { "pass" } else { "FAIL" }
    );
    out
}
