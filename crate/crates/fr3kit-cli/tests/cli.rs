use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fr3kit::channel::read_dataset;

fn fr3kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fr3kit")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, band: &str, seed: &str) {
    let o = fr3kit(&[
        "synth", "--band", band, "--scenario", "nlos", "--snapshots", "6", "--n-rx", "2", "--n-delay", "64",
        "--seed", seed, "--out", p(dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_readable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let truth = tmp.path().join("truth.csv");
    let o = fr3kit(&[
        "synth", "--band", "15", "--scenario", "nlos", "--snapshots", "10", "--n-rx", "2", "--seed", "7", "--out",
        p(&d), "--truth", p(&truth),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let ds = read_dataset(&d).unwrap();
    assert_eq!(ds.tensor.n_snap, 10);
    assert_eq!(ds.tensor.n_tx, 128);
    let text = fs::read_to_string(&truth).unwrap();
    assert!(text.starts_with("# fr3kit "));
    assert!(text.contains("# seed: 7\n"));
    assert!(text.contains("snapshot,path,delay_s,az_deg,el_deg,power_db\n"));
    assert!(fs::read_to_string(d.join("provenance.txt")).unwrap().contains("# seed: 7"));
}

#[test]
fn missing_input_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fr3kit(&["pdp", "--csv", p(&tmp.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("E_MISSING_INPUT"), "{err}");
}

#[test]
fn missing_dataset_reports_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fr3kit(&["pdp", "--in", p(&tmp.path().join("nope")), "--csv", p(&tmp.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("E_MISSING_FILE"));
}

#[test]
fn unknown_command_is_usage_error() {
    let o = fr3kit(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("Usage"));
}

#[test]
fn report_summarises_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, r) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("r"));
    synth(&a, "8", "1");
    synth(&b, "15", "2");
    let o = fr3kit(&["report", "--in8", p(&a), "--in15", p(&b), "--out", p(&r)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    for key in ["gap_noncoherent_15pct_db", "gap_det_15pct_db", "gap_det_median_db", "se_median_8ghz"] {
        assert!(v[key].is_number(), "{key}");
    }
    assert_eq!(v["provenance"]["seed"], 0);
    for f in ["noncoherent_cdf.csv", "det_cdf.csv", "se_cdf.csv"] {
        let text = fs::read_to_string(r.join(f)).unwrap();
        // 6 snapshots per band
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 12, "{f}");
    }
}

#[test]
fn identical_command_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    synth(&d, "8", "5");
    let first = tree_bytes(&d);
    synth(&d, "8", "5");
    assert_eq!(first, tree_bytes(&d));

    let csv = tmp.path().join("s.csv");
    let run = || {
        let o = fr3kit(&["spreads", "--in", p(&d), "--csv", p(&csv)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(&csv).unwrap()
    };
    assert_eq!(run(), run());

    let other = tmp.path().join("e");
    synth(&other, "8", "6");
    assert_ne!(fs::read(d.join("cir.bin")).unwrap(), fs::read(other.join("cir.bin")).unwrap());
}

#[test]
fn config_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"band": 8, "scenario": "los", "snapshots": 4, "n_rx": 1, "n_delay": 64, "seed": 3}"#).unwrap();
    let d = tmp.path().join("d");
    let o = fr3kit(&["synth", "--config", p(&cfg), "--snapshots", "2", "--out", p(&d)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_dataset(&d).unwrap();
    assert_eq!(ds.tensor.n_snap, 2);
    assert_eq!(ds.tensor.n_rx, 1);
    assert_eq!(ds.snapshots[0].los_state.as_str(), "LOS");
    assert!(fs::read_to_string(d.join("provenance.txt")).unwrap().contains("# seed: 3"));
}

#[test]
fn pipeline_commands_leave_inputs_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    synth(&d, "8", "9");
    let before = tree_bytes(&d);
    let t = tmp.path();
    let runs: Vec<Vec<String>> = vec![
        vec!["pdp".into(), "--in".into(), p(&d).into(), "--csv".into(), p(&t.join("pdp.csv")).into()],
        vec!["sage".into(), "--in".into(), p(&d).into(), "--snapshot".into(), "0".into(), "--csv".into(), p(&t.join("sage.csv")).into()],
        vec!["pathloss-fit".into(), "--in".into(), p(&d).into(), "--nlos".into(), "--csv".into(), p(&t.join("pl.csv")).into()],
        vec!["topo".into(), "--in".into(), p(&d).into(), "--shape".into(), "2x16".into(), "--origin".into(), "1,0".into(), "--out".into(), p(&t.join("topo")).into()],
        vec!["se".into(), "--in".into(), p(&d).into(), "--topo".into(), "4x8".into(), "--csv".into(), p(&t.join("se.csv")).into()],
        vec!["coverage".into(), "--in8".into(), p(&d).into(), "--in15".into(), p(&d).into(), "--mode".into(), "det".into(), "--csv".into(), p(&t.join("cov.csv")).into()],
    ];
    for args in &runs {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = fr3kit(&a);
        assert!(o.status.success(), "{a:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(before, tree_bytes(&d));

    let sub = read_dataset(&t.join("topo")).unwrap();
    assert_eq!((sub.array.n_y, sub.array.n_x), (2, 16));
    let sage = fs::read_to_string(t.join("sage.csv")).unwrap();
    assert!(sage.contains("snapshot,delay_s,aod_az_deg,aod_el_deg,power_db\n"));
    assert!(sage.lines().filter(|l| l.starts_with("0,")).count() >= 1);
    let pl = fs::read_to_string(t.join("pl.csv")).unwrap();
    assert!(pl.lines().any(|l| l.starts_with("fit,")));
}

#[test]
fn theory_sweep_and_bad_values() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("th.csv");
    let o = fr3kit(&["se", "--theory", "--nt-max", "4", "--n-r", "2", "--mc", "20", "--csv", p(&csv)]);
    assert!(o.status.success());
    let rows: Vec<String> = fs::read_to_string(&csv).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect();
    assert_eq!(rows.len(), 5);

    let o = fr3kit(&["synth", "--band", "9", "--scenario", "los", "--snapshots", "1", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("E_INVALID"));
}
