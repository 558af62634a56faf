use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bfl"))
        .args(args)
        .env_remove("BFL_THREADS")
        .output()
        .expect("binary runs")
}

fn bfl_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bfl"))
        .args(args)
        .env("BFL_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn front_csv_has_expected_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("front");
    let o = bfl(&["front", "--N", "20", "--a", "0.5", "--steps", "7", "--replicas", "3", "--out-dir", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("front.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "replica,step,x_eq,max,min,zeta");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert!(r[3] >= r[4], "max below min: {r:?}");
        assert!(r[2] >= 0.5 * r[3] - 1e-9, "equivalent position below a * max: {r:?}");
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sums = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = bfl_env(
            &["genealogy", "--N", "40", "--a", "0.75", "--method", "blocks", "--steps", "15", "--replicas", "64", "--seed", "9", "--out-dir", path(&out)],
            threads,
        );
        assert!(o.status.success());
        sums.push(fs::read(out.join("genealogy.csv")).unwrap());
    }
    assert_eq!(sums[0], sums[1]);
}

#[test]
fn invalid_configuration_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    for args in [
        vec!["front", "--a", "-0.5"],
        vec!["xi-check", "--a", "1.0"],
        vec!["bou", "--N-list", "1,10"],
        vec!["coalescent-ref", "--a", "1.5"],
        vec!["genealogy", "--method", "nope"],
        vec!["front", "--unknown-flag", "3"],
    ] {
        let mut full = args.clone();
        full.extend(["--out-dir", path(&out)]);
        let o = bfl(&full);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!out.exists() || fs::read_dir(&out).unwrap().count() == 0, "{args:?} left files");
    }
}

#[test]
fn manifest_checksums_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("an");
    let o = bfl(&["analytic", "--N-list", "10,100", "--a", "0.6", "--plot", "--out-dir", path(&out)]);
    assert!(o.status.success());
    let m = manifest(&out);
    assert_eq!(m["command"], "analytic");
    assert_eq!(m["config"]["a"], "0.6");
    let files: BTreeMap<String, String> = serde_json::from_value(m["files"].clone()).unwrap();
    assert_eq!(files.keys().cloned().collect::<Vec<_>>(), vec!["analytic.csv", "analytic.svg"]);
    for (name, sum) in files {
        let bytes = fs::read(out.join(&name)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), sum);
    }
    let leftovers = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with('.'))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn replay_reproduces_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ref");
    let o = bfl(&["coalescent-ref", "--a", "0.9", "--sample", "6", "--replicas", "40", "--seed", "11", "--out-dir", path(&out)]);
    assert!(o.status.success());
    let again = tmp.path().join("again");
    let o = bfl(&["replay", "--manifest", path(&out.join("manifest.json")), "--out-dir", path(&again), "--threads", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("ref.csv")).unwrap(), fs::read(again.join("ref.csv")).unwrap());
}

#[test]
fn replay_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("an");
    assert!(bfl(&["analytic", "--N", "30", "--out-dir", path(&out)]).status.success());
    let mpath = out.join("manifest.json");
    let text = fs::read_to_string(&mpath).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["files"]["analytic.csv"] = serde_json::Value::String("0".repeat(64));
    fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
    let o = bfl(&["replay", "--manifest", path(&mpath), "--out-dir", path(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# test\nN = 15\nsteps = 4\nreplicas = 2\na = 0.25\n").unwrap();
    let out = tmp.path().join("f");
    let o = bfl(&["front", "--config", path(&cfg), "--a", "0.5", "--out-dir", path(&out)]);
    assert!(o.status.success());
    let m = manifest(&out);
    assert_eq!(m["config"]["N"], "15");
    assert_eq!(m["config"]["a"], "0.5");
    assert_eq!(m["config"]["steps"], "4");
    let rows = fs::read_to_string(out.join("front.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 4);

    fs::write(&cfg, "gamma-list = 1\n").unwrap();
    let o = bfl(&["front", "--config", path(&cfg), "--out-dir", path(&tmp.path().join("g"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scaling_reports_fitted_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = bfl(&["scaling", "--a", "0.25", "--N-list", "64,256,1024", "--replicas", "4000", "--out-dir", path(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("fitted exponent ≈")).expect("summary line");
    let slope: f64 = line["fitted exponent ≈".len()..].split_whitespace().next().unwrap().parse().unwrap();
    assert!((slope - 1.0).abs() < 0.1, "{line}");
    let csv = fs::read_to_string(out.join("scaling.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "N,mean_pair_time,se,c_N_hat");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn seeds_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = tmp.path().join(seed);
        assert!(bfl(&["genealogy", "--N", "30", "--replicas", "50", "--seed", seed, "--out-dir", path(&out)]).status.success());
        fs::read(out.join("genealogy.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}
