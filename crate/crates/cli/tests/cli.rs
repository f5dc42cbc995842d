use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &[&str] = &["--grid-nx", "4", "--grid-ny", "4", "--m", "16"];

fn powersplit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_powersplit"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = powersplit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn with_small<'a>(cmd: &'a [&'a str]) -> Vec<&'a str> {
    cmd.iter().chain(SMALL).copied().collect()
}

fn report(dir: &Path, stem: &str) -> Value {
    let text = fs::read_to_string(dir.join(format!("{stem}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn simulate_writes_files_and_envelope() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with_small(&["simulate", "--seed", "3"]));
    for f in [
        "uplink.csi",
        "downlink.csi",
        "truth.csi",
        "geometry.json",
        "simulate.json",
        "simulate.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let r = report(dir.path(), "simulate");
    assert_eq!(r["command"], "simulate");
    assert_eq!(r["seed"], 3);
    assert_eq!(r["tool"]["name"], "powersplit");
    assert_eq!(r["config"]["sim"]["m"], 16);
    assert_eq!(r["result"]["nodes"], 16);
    let csv = fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 17);
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = with_small(&[
        "run",
        "--method",
        "pca",
        "--d1",
        "2",
        "--d2",
        "10",
        "--permutations",
        "100",
        "--seed",
        "7",
    ]);
    ok(a.path(), &args);
    let mut threaded = args.clone();
    threaded.extend(["--threads", "1"]);
    ok(b.path(), &threaded);
    for f in ["run.json", "run.csv", "run_tvd_curve.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small grid\nm = 20\nsnr_db = 5\nseed = 11\n").unwrap();
    let mut args = with_small(&["simulate", "--seed", "1", "--snr-db", "30"]);
    let cfg_s = cfg.to_str().unwrap();
    args.extend(["--config", cfg_s]);
    ok(dir.path(), &args);
    let r = report(dir.path(), "simulate");
    assert_eq!(r["seed"], 11);
    assert_eq!(r["config"]["sim"]["m"], 20);
    assert_eq!(r["config"]["sim"]["snr_db"], 5.0);
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "no_such_flag = 1\n").unwrap();
    let out = powersplit(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csi");
    let m = missing.to_str().unwrap();
    let out = powersplit(dir.path(), &["skg-mp", "--uplink", m, "--downlink", m]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = powersplit(
        dir.path(),
        &with_small(&["decompose", "--d1", "5", "--d2", "2"]),
    );
    assert!(!out.status.success());
    let out = powersplit(dir.path(), &with_small(&["run", "--method", "svd"]));
    assert!(!out.status.success());
    let out = powersplit(dir.path(), &["no-such-command"]);
    assert!(!out.status.success());
}

#[test]
fn file_inputs_round_trip_through_decompose() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with_small(&["simulate"]));
    let ul = dir.path().join("uplink.csi");
    let dl = dir.path().join("downlink.csi");
    let (ul, dl) = (ul.to_str().unwrap(), dl.to_str().unwrap());
    ok(
        dir.path(),
        &with_small(&[
            "decompose",
            "--uplink",
            ul,
            "--downlink",
            dl,
            "--d1",
            "2",
            "--d2",
            "8",
        ]),
    );
    let from_files = report(dir.path(), "decompose");
    ok(
        dir.path(),
        &with_small(&["decompose", "--d1", "2", "--d2", "8"]),
    );
    let simulated = report(dir.path(), "decompose");
    assert_eq!(from_files["result"], simulated["result"]);
    for f in [
        "uplink_predictable.csi",
        "uplink_unpredictable.csi",
        "downlink_unpredictable.csi",
    ] {
        assert!(dir.path().join(f).exists());
    }
    // the residual files feed the mismatch command
    let ru = dir.path().join("uplink_unpredictable.csi");
    let rd = dir.path().join("downlink_unpredictable.csi");
    ok(
        dir.path(),
        &with_small(&[
            "skg-mp",
            "--uplink",
            ru.to_str().unwrap(),
            "--downlink",
            rd.to_str().unwrap(),
        ]),
    );
    let mp = report(dir.path(), "skg_mp")["result"]["avg_mp"]
        .as_f64()
        .unwrap();
    assert!((0.0..=1.0).contains(&mp));
}

#[test]
fn kpca_and_tvd_curve() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &with_small(&["kpca", "--d-hat", "2"]));
    let r = report(dir.path(), "kpca");
    assert_eq!(r["result"]["d_hat"], 2);
    assert!(dir.path().join("downlink_residual.csi").exists());
    ok(dir.path(), &with_small(&["tvd-curve", "--d-hat-max", "4"]));
    let curve = report(dir.path(), "tvd_curve");
    assert_eq!(curve["result"].as_array().unwrap().len(), 5);
}

#[test]
fn ae_train_then_decompose() {
    let dir = tempfile::tempdir().unwrap();
    for loss in ["e1", "e2"] {
        ok(
            dir.path(),
            &with_small(&[
                "ae-train",
                "--epochs",
                "3",
                "--loss",
                loss,
                "--k-neighbors",
                "2",
            ]),
        );
        let r = report(dir.path(), "ae_train");
        assert!(r["result"]["final_loss"].as_f64().unwrap().is_finite());
        let log = fs::read_to_string(dir.path().join("ae_train_log.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 3);
        let w = dir.path().join("ae_weights.aew");
        ok(
            dir.path(),
            &with_small(&[
                "ae-decompose",
                "--weights",
                w.to_str().unwrap(),
                "--k-neighbors",
                "2",
            ]),
        );
        let d = report(dir.path(), "ae_decompose");
        let expected = if loss == "e1" { "single" } else { "paired" };
        assert_eq!(d["result"]["layout"], expected);
    }
}

#[test]
fn dhsic_and_fit_dist() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &with_small(&["dhsic", "--nodes", "0,1,5", "--b", "100"]),
    );
    let r = report(dir.path(), "dhsic");
    assert_eq!(r["result"]["b"], 100);
    assert!(r["result"]["statistic"].as_f64().unwrap() >= 0.0);
    ok(
        dir.path(),
        &with_small(&["fit-dist", "--families", "rayleigh,rician,normal"]),
    );
    let f = report(dir.path(), "fit_dist");
    let fits = f["result"].as_array().unwrap();
    assert!(!fits.is_empty() && fits.len() <= 3);
    let aics: Vec<f64> = fits.iter().map(|x| x["aic"].as_f64().unwrap()).collect();
    assert!(aics.windows(2).all(|w| w[0] <= w[1]));

    ok(
        dir.path(),
        &["simulate", "--grid-nx", "4", "--grid-ny", "4", "--m", "40"],
    );
    let input = dir.path().join("downlink.csi");
    ok(
        dir.path(),
        &[
            "fit-dist",
            "--input",
            input.to_str().unwrap(),
            "--component",
            "phase",
            "--node",
            "3",
            "--grid-nx",
            "4",
            "--grid-ny",
            "4",
        ],
    );
    let f = report(dir.path(), "fit_dist");
    assert_eq!(f["config"]["side"]["input"], input.to_str().unwrap());
    assert!(!f["result"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &with_small(&[
            "sweep",
            "--d1-max",
            "5",
            "--d2-max",
            "8",
            "--permutations",
            "100",
        ]),
    );
    let s = report(dir.path(), "sweep");
    let cells = s["result"].as_array().unwrap();
    assert!(!cells.is_empty());
    assert!(cells.iter().all(|c| c["delta_bar"].is_number()));
    ok(
        dir.path(),
        &with_small(&[
            "compare",
            "--methods",
            "none,pca,kpca",
            "--d1",
            "2",
            "--d2",
            "10",
            "--permutations",
            "100",
        ]),
    );
    let c = report(dir.path(), "compare");
    assert_eq!(c["result"]["rows"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("method,"));
}
