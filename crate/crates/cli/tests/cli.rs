use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn keyrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyrate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = keyrate(&["sweep", "--out", path_str(out), "--l-max", "60", "--step", "5"]);
        assert!(res.status.success(), "{}", stderr(&res));
    }
    let csv = fs::read(&a).unwrap();
    assert_eq!(csv, fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.csv.meta.json")).unwrap(),
        fs::read(dir.path().join("b.csv.meta.json")).unwrap()
    );

    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "length_km,mu_opt_koashi,G_koashi,mu_opt_gllp,G_gllp,mu_opt_ideal,G_ideal,mu_opt_nodecoy,G_nodecoy"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 13);
    assert!(rows.iter().all(|r| r.split(',').count() == 9));

    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["eta_d"], 0.045);
}

#[test]
fn degenerate_range_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("one.csv");
    let res = keyrate(&["sweep", "--out", path_str(&out), "--l-min", "30", "--l-max", "30"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("30"));
}

#[test]
fn simulate_is_reproducible_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let res = keyrate(&[
            "simulate",
            "--pulses",
            "1000000",
            "--seed",
            "9",
            "--length-km",
            "20",
            "--out",
            path_str(out),
        ]);
        assert!(res.status.success(), "{}{}", stdout(&res), stderr(&res));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(doc["seed"], 9);
    assert_eq!(doc["tally"]["counts"]["pulses"], 1_000_000);
    assert!(doc["rng"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn wrong_reference_misalignment_is_flagged() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.json");
    let res = keyrate(&[
        "simulate",
        "--pulses",
        "1000000",
        "--reference-e-mis",
        "0.33",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let flagged: Vec<&str> = doc["comparison"]["deviations"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|d| d["pass"] == false)
        .map(|d| d["quantity"].as_str().unwrap())
        .collect();
    assert!(flagged.contains(&"E"), "{flagged:?}");
}

#[test]
fn decoy_check_validates_intensities() {
    let res = keyrate(&["decoy-check", "--intensities", "0.5,0.5,0", "--analytic"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("intensities"));

    let res = keyrate(&["decoy-check", "--analytic", "--length-km", "40"]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(stdout(&res).contains("# overall: pass"));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.json", r#"{"mu": 0.4, "detector_efficiency": 0.1}"#);
    let res = keyrate(&["rate", "--config", &cfg]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("detector_efficiency"));
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let res = keyrate(&["rate", "--config", path_str(&missing)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn notice_only_for_default_dark_count() {
    let res = keyrate(&["rate"]);
    assert!(stderr(&res).contains("1.7e-6"));
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "d.json", r#"{"dark_count": 1e-5}"#);
    let res = keyrate(&["rate", "--config", &cfg]);
    assert!(res.status.success());
    assert!(!stderr(&res).contains("notice"));
}

fn limits(stdout: &str) -> Vec<(String, String)> {
    stdout
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut parts = l.split_whitespace();
            (parts.next().unwrap().to_string(), parts.next().unwrap().to_string())
        })
        .collect()
}

#[test]
fn maxdist_orders_the_variants() {
    let res = keyrate(&["maxdist"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let km: Vec<f64> = limits(&stdout(&res)).iter().map(|(_, v)| v.parse().unwrap()).collect();
    let [koashi, gllp, ideal, nodecoy] = km[..] else {
        panic!("{km:?}")
    };
    assert!(ideal > koashi && koashi > gllp && gllp > nodecoy, "{km:?}");
}

#[test]
fn noiseless_link_is_unbounded() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "clean.json", r#"{"dark_count": 0, "e_mis": 0}"#);
    let res = keyrate(&["maxdist", "--config", &cfg]);
    assert!(res.status.success(), "{}", stderr(&res));
    let table = limits(&stdout(&res));
    for variant in ["koashi", "gllp", "ideal"] {
        assert!(
            table.contains(&(variant.to_string(), "unbounded".to_string())),
            "{table:?}"
        );
    }
}

#[test]
fn zero_intensity_gives_no_key() {
    let res = keyrate(&["rate", "--mu", "0", "--length-km", "20"]);
    assert!(res.status.success());
    for line in stdout(&res).lines().skip(2).filter(|l| !l.starts_with('#')) {
        let mut cols = line.split_whitespace();
        let variant = cols.next().unwrap();
        let g: f64 = cols.next().unwrap().parse().unwrap();
        if variant == "ideal" {
            assert!(g > 0.0);
        } else {
            assert!(g <= 0.0, "{variant}: {g}");
        }
    }
}

#[test]
fn pulse_cap_is_enforced() {
    let res = keyrate(&["simulate", "--pulses", "20000000000"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("max_pulses"));
}

#[test]
fn bad_flag_exits_with_validation_code() {
    let res = keyrate(&["sweep", "--step", "zero"]);
    assert_eq!(res.status.code(), Some(1));
    let res = keyrate(&["--help"]);
    assert_eq!(res.status.code(), Some(0));
}
