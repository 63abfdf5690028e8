use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hplist(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hplist"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HPLIST_OUT")
        .output()
        .expect("spawn hplist")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = hplist(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn sample_is_deterministic_and_sized() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(a.path(), &["sample", "--count", "200", "--seed", "7"]);
    ok(b.path(), &["sample", "--count", "200", "--seed", "7"]);
    let text = read(a.path().join("points.csv"));
    assert_eq!(text, read(b.path().join("points.csv")));
    assert_eq!(text.lines().count(), 201);
    ok(b.path(), &["sample", "--count", "200", "--seed", "8"]);
    assert_ne!(text, read(b.path().join("points.csv")));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hplist(dir.path(), &["sample", "--count", "0"]).status.code(), Some(1));
    assert_eq!(hplist(dir.path(), &["build", "--bogus"]).status.code(), Some(1));
    assert_eq!(hplist(dir.path(), &["ablate", "--tau-grid", "1:2"]).status.code(), Some(1));
    assert_eq!(hplist(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = hplist(dir.path(), &["build"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("records.csv"));

    fs::write(dir.path().join("points.csv"), "not,a,points,file\n").unwrap();
    let o = hplist(dir.path(), &["run", "--workloads", "bowl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("points.csv:1"));
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let (full, part) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = ["run", "--workloads", "bowl,linreg,matfact", "--jobs", "2"];
    for d in [full.path(), part.path()] {
        ok(d, &["sample", "--count", "5", "--seed", "1"]);
    }
    ok(full.path(), &run);
    let expected = read(full.path().join("records.csv"));
    assert_eq!(expected.lines().count(), 16);

    let mut partial = run.to_vec();
    partial.extend(["--max-trials", "4"]);
    ok(part.path(), &partial);
    // An interrupted append leaves an unterminated line behind.
    let records = part.path().join("records.csv");
    let mut text = read(&records);
    text.push_str("3,linreg,80");
    fs::write(&records, text).unwrap();
    let stdout = ok(part.path(), &run);
    assert!(stdout.starts_with("11 new trials"), "{stdout}");
    assert_eq!(read(&records), expected);

    let stdout = ok(full.path(), &run);
    assert!(stdout.starts_with("0 new trials"), "{stdout}");
    assert_eq!(read(full.path().join("records.csv")), expected);
}

#[test]
fn analyses_write_their_tables_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["sample", "--count", "12"]);
    ok(d, &["run", "--workloads", "bowl,logreg,matfact"]);

    ok(d, &["build", "--k", "5"]);
    let list = read(d.join("list.csv"));
    assert_eq!(list.lines().next(), Some(hplist::listbuild::LIST_HEADER));
    assert_eq!(list.lines().count(), 6);

    let manifest: serde_json::Value = serde_json::from_str(&read(d.join("build.manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["k"], 5);
    let records_hash = manifest["inputs"][0]["sha256"].as_str().unwrap().to_string();
    ok(d, &["build", "--k", "5"]);
    assert_eq!(read(d.join("list.csv")), list);
    let again: serde_json::Value = serde_json::from_str(&read(d.join("build.manifest.json"))).unwrap();
    assert_eq!(again, manifest);
    assert_eq!(records_hash.len(), 64);

    ok(d, &["ablate", "--k", "2", "--tau-grid", "1.0:2.0:10"]);
    let ablation = read(d.join("ablation.csv"));
    assert_eq!(ablation.lines().count(), 11);
    assert!(ablation.lines().nth(1).unwrap().starts_with("1.0,"));

    ok(d, &["loo", "--k", "2"]);
    assert_eq!(read(d.join("loo.csv")).lines().count(), 4);
    ok(d, &["size-sweep", "--k-max", "3"]);
    assert_eq!(read(d.join("size_sweep.csv")).lines().count(), 4);
    ok(d, &["curves", "--k", "2", "--budget", "5"]);
    assert_eq!(read(d.join("curves/logreg.csv")).lines().count(), 6);
    ok(d, &["transfer-counts"]);
    assert_eq!(read(d.join("transfer_counts.csv")).lines().count(), 4);
    ok(d, &["exhaustive", "--k", "2"]);
    let ex: serde_json::Value = serde_json::from_str(&read(d.join("exhaustive.json"))).unwrap();
    assert!(ex["cost"].as_f64().unwrap() <= ex["greedy_cost"].as_f64().unwrap() * (1.0 + 1e-12));

    let list_path = d.join("list.csv");
    ok(d, &["eval", "--list", list_path.to_str().unwrap(), "--workloads", "bowl"]);
    assert_eq!(read(d.join("eval.csv")).lines().count(), 2);
}

#[test]
fn loo_needs_more_than_one_workload() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["sample", "--count", "4"]);
    ok(dir.path(), &["run", "--workloads", "bowl"]);
    assert_eq!(hplist(dir.path(), &["loo", "--k", "5"]).status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 7\nsample_count = 9\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(dir.path(), &["--config", cfg, "sample"]);
    let from_file = read(dir.path().join("points.csv"));
    assert_eq!(from_file.lines().count(), 10);
    ok(dir.path(), &["sample", "--count", "9", "--seed", "7"]);
    assert_eq!(read(dir.path().join("points.csv")), from_file);
    ok(dir.path(), &["--config", cfg, "sample", "--seed", "8"]);
    assert_ne!(read(dir.path().join("points.csv")), from_file);

    fs::write(dir.path().join("bad.toml"), "colour = 1\n").unwrap();
    let bad = dir.path().join("bad.toml");
    assert_eq!(hplist(dir.path(), &["--config", bad.to_str().unwrap(), "sample"]).status.code(), Some(2));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hplist"))
        .args(["sample", "--count", "3"])
        .env("HPLIST_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("points.csv").exists());
}
