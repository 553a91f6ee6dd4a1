use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use tempfile::TempDir;

fn tribekit(dir: &Path, args: &[&str]) -> Output {
    tribekit_env(dir, args, &[])
}

fn tribekit_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tribekit"));
    cmd.current_dir(dir).args(args).env_remove("TRIBEKIT_SEED").env_remove("RUST_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn tribekit")
}

#[track_caller]
fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn without_wall_time(mut records: Vec<serde_json::Value>) -> Vec<serde_json::Value> {
    for r in &mut records {
        r.as_object_mut().unwrap().remove("wall_ms");
    }
    records
}

/// A small dataset, a source checkpoint and an IF=100 stream, built once.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_owned()
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        ok(tribekit(d, &["gen-data", "--n", "400", "--seed", "1", "--out", "data"]));
        ok(tribekit(d, &["pretrain", "--data", "data", "--epochs", "10", "--seed", "1", "--out", "src.ckpt"]));
        ok(tribekit(d, &["gen-stream", "--data", "data", "--if", "20", "--seed", "2", "--out", "order.jsonl"]));
        Fixture { dir }
    })
}

#[test]
fn gen_data_example_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen-data", "--kc", "5", "--dim", "8", "--n", "500", "--domains", "4", "--seed", "7"];
    ok(tribekit(dir.path(), &[&args[..], &["--out", "a"]].concat()));
    ok(tribekit(dir.path(), &[&args[..], &["--out", "b"]].concat()));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["domains"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["clean"]["n"], 2500);
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert_eq!(names.len(), 1 + 2 * 5);
    for a in names {
        let b = dir.path().join("b").join(a.file_name().unwrap());
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{}", a.display());
    }
}

#[test]
fn gen_data_rejects_zero_domains() {
    let dir = tempfile::tempdir().unwrap();
    let out = tribekit(dir.path(), &["gen-data", "--domains", "0", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("domains"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["gen-data", "--kc", "many", "--out", "x"],
        &["gen-stream", "--data", "nowhere", "--out", "o"],
        &["gen-data"],
    ] {
        let out = tribekit(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn pretrain_accuracy_and_reproducible_checkpoint() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| ok(tribekit(dir.path(), &["pretrain", "--data", &f.path("data"), "--seed", "4", "--out", out]));
    let stdout = run("a.ckpt");
    run("b.ckpt");
    let accuracy: f64 = stdout
        .split("held-out accuracy ")
        .nth(1)
        .and_then(|s| s.split('%').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("no accuracy in {stdout:?}"));
    assert!(accuracy >= 95.0, "{accuracy}");
    assert_eq!(std::fs::read(dir.path().join("a.ckpt")).unwrap(), std::fs::read(dir.path().join("b.ckpt")).unwrap());
}

#[test]
fn pretrain_missing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = tribekit(dir.path(), &["pretrain", "--data", "missing", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing does not exist"));
}

#[test]
fn pretrain_divergence_exits_nonzero() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = tribekit(dir.path(), &["pretrain", "--data", &f.path("data"), "--lr", "1e300", "--out", "d.ckpt"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn pretrain_accepts_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("f0,f1,label\n");
    for i in 0..60 {
        let (y, s) = (i % 2, if i % 2 == 0 { -3.0 } else { 3.0 });
        csv += &format!("{},{},{y}\n", s + (i as f64 * 0.37).sin(), s + (i as f64 * 0.91).cos());
    }
    std::fs::write(dir.path().join("d.csv"), csv).unwrap();
    let stdout = ok(tribekit(dir.path(), &["pretrain", "--data", "d.csv", "--out", "c.ckpt"]));
    assert!(stdout.contains("held-out accuracy 100.00%"), "{stdout}");
}

fn label_histograms(order: &Path, domains: usize, classes: usize) -> Vec<Vec<usize>> {
    let mut h = vec![vec![0; classes]; domains];
    for b in json_lines(order) {
        let d = b["domain"].as_u64().unwrap() as usize;
        for y in b["labels"].as_array().unwrap() {
            h[d][y.as_u64().unwrap() as usize] += 1;
        }
    }
    h
}

#[test]
fn gen_stream_histograms_and_defaults() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = f.path("data");
    ok(tribekit(dir.path(), &["gen-stream", "--data", &data, "--if", "100", "--seed", "5", "--out", "lt.jsonl"]));
    for counts in label_histograms(&dir.path().join("lt.jsonl"), 4, 5) {
        let (max, min) = (counts.iter().max().unwrap(), counts.iter().min().unwrap());
        assert_eq!(*max as f64 / *min as f64, 100.0, "{counts:?}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lt.jsonl.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["sigma"], 0.1);
    assert_eq!(meta["imbalance_factor"], 100.0);
}

#[test]
fn gen_stream_if_one_matches_ptta() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let data = f.path("data");
    ok(tribekit(dir.path(), &["gen-stream", "--data", &data, "--variant", "gli-f", "--if", "1", "--out", "f.jsonl"]));
    ok(tribekit(dir.path(), &["gen-stream", "--data", &data, "--variant", "ptta", "--out", "p.jsonl"]));
    assert_eq!(std::fs::read(dir.path().join("f.jsonl")).unwrap(), std::fs::read(dir.path().join("p.jsonl")).unwrap());
}

#[test]
fn gen_stream_rejects_bad_protocol() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = tribekit(dir.path(), &["gen-stream", "--data", &f.path("data"), "--sigma=-1", "--out", "o.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma"));
    let out = tribekit(dir.path(), &["gen-stream", "--data", &f.path("data"), "--domain-order", "0,0,1,2", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("domain_order"));
}

fn run_args<'a>(f: &'a Fixture, extra: &[&'a str]) -> Vec<String> {
    let mut args = vec![
        "run".to_string(),
        "--data".into(),
        f.path("data"),
        "--checkpoint".into(),
        f.path("src.ckpt"),
        "--order".into(),
        f.path("order.jsonl"),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

fn run_in(dir: &Path, args: &[String]) -> Output {
    tribekit(dir, &args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn run_test_method_twice_is_identical() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let args = run_args(f, &["--method", "test", "--results", "r.jsonl"]);
    ok(run_in(dir.path(), &args));
    ok(run_in(dir.path(), &args));
    let records = without_wall_time(json_lines(&dir.path().join("r.jsonl")));
    assert_eq!(records.len(), 2);
    assert_eq!(records[0], records[1]);
    assert_eq!(records[0]["method"], "test");
    assert_eq!(records[0]["imbalance_factor"], 20.0);
}

#[test]
fn run_ablation_flag_reaches_record() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(run_in(dir.path(), &run_args(f, &["--method", "tribe", "--lambda-anc", "0", "--results", "r.jsonl"])));
    assert!(stdout.contains("tribe"));
    let records = json_lines(&dir.path().join("r.jsonl"));
    assert_eq!(records[0]["hyper"]["lambda_anc"], 0.0);
    assert_eq!(records[0]["hyper"]["h0"], 0.05);
    assert_eq!(records[0]["hyper"]["eta"], 0.0025);
}

#[test]
fn run_jobs_do_not_change_records() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let base = ["--method", "bn,tent,balanced-bn,tribe", "--seeds", "3,4"];
    ok(run_in(dir.path(), &run_args(f, &[&base[..], &["--results", "one.jsonl"]].concat())));
    ok(run_in(dir.path(), &run_args(f, &[&base[..], &["--jobs", "4", "--results", "four.jsonl"]].concat())));
    let one = without_wall_time(json_lines(&dir.path().join("one.jsonl")));
    assert_eq!(one.len(), 8);
    assert_eq!(one, without_wall_time(json_lines(&dir.path().join("four.jsonl"))));
}

#[test]
fn run_class_count_mismatch_exits_2() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(tribekit(dir.path(), &["gen-data", "--kc", "3", "--n", "100", "--out", "d3"]));
    ok(tribekit(dir.path(), &["pretrain", "--data", "d3", "--epochs", "2", "--out", "k3.ckpt"]));
    let out = tribekit(
        dir.path(),
        &["run", "--data", &f.path("data"), "--checkpoint", "k3.ckpt", "--order", &f.path("order.jsonl"), "--results", "r"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("class count mismatch"), "{}", stderr(&out));
    assert!(!dir.path().join("r").exists());
}

#[test]
fn run_rejects_unknown_method_and_bad_hyper() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &run_args(f, &["--method", "magic", "--results", "r"]));
    assert_eq!(out.status.code(), Some(2));
    let out = run_in(dir.path(), &run_args(f, &["--gamma", "2", "--results", "r"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gamma"), "{}", stderr(&out));
}

#[test]
fn report_single_record_and_seed_means() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(run_in(dir.path(), &run_args(f, &["--method", "robust-bn", "--results", "one.jsonl"])));
    let record = &json_lines(&dir.path().join("one.jsonl"))[0];
    let table = ok(tribekit(dir.path(), &["report", "--results", "one.jsonl"]));
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let cell = format!(
        "{:.2} / {:.2}",
        record["result"]["instance_error"].as_f64().unwrap(),
        record["result"]["category_error"].as_f64().unwrap()
    );
    assert!(rows[0].contains("robust-bn") && rows[0].contains(&cell), "{table}");

    ok(run_in(dir.path(), &run_args(f, &["--method", "tribe", "--seeds", "0,1,2", "--results", "three.jsonl"])));
    let records = json_lines(&dir.path().join("three.jsonl"));
    let mean = |key: &str| records.iter().map(|r| r["result"][key].as_f64().unwrap()).sum::<f64>() / 3.0;
    let csv = ok(tribekit(dir.path(), &["report", "--results", "three.jsonl", "--csv"]));
    let fields: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[..4], ["gli-f", "20", "tribe", "3"]);
    assert_eq!(fields[4], format!("{:.2}", mean("instance_error")));
    assert_eq!(fields[5], format!("{:.2}", mean("category_error")));
}

#[test]
fn report_skips_malformed_lines_and_handles_empty() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(run_in(dir.path(), &run_args(f, &["--method", "test", "--results", "r.jsonl"])));
    let mut text = std::fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
    text += "{\"truncated\": \n";
    std::fs::write(dir.path().join("r.jsonl"), text).unwrap();
    let out = tribekit(dir.path(), &["report", "--results", "r.jsonl"]);
    assert!(stderr(&out).contains("skipped 1 malformed line"));
    assert_eq!(ok(out).lines().count(), 2);

    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let stdout = ok(tribekit(dir.path(), &["report", "--results", "empty.jsonl"]));
    assert!(stdout.contains("no records"));
    assert_eq!(tribekit(dir.path(), &["report", "--results", "absent.jsonl"]).status.code(), Some(2));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = |out: &str, extra: &[&str], env: &[(&str, &str)]| {
        let args = [&["gen-data", "--kc", "3", "--n", "20", "--domains", "1", "--out", out][..], extra].concat();
        ok(tribekit_env(d, &args, env));
        std::fs::read(d.join(out).join("clean.f32")).unwrap()
    };
    std::fs::write(d.join("cfg"), "# comment\nseed = 7\ngen-data.n = 20\n").unwrap();
    let flag7 = gen("flag7", &["--seed", "7"], &[]);
    let flag8 = gen("flag8", &["--seed", "8"], &[]);
    assert_ne!(flag7, flag8);
    assert_eq!(gen("env7", &[], &[("TRIBEKIT_SEED", "7")]), flag7);
    assert_eq!(gen("cfg7", &["--config", "cfg"], &[("TRIBEKIT_SEED", "8")]), flag7);
    assert_eq!(gen("flag-wins", &["--config", "cfg", "--seed", "8"], &[("TRIBEKIT_SEED", "7")]), flag8);
    assert_eq!(gen("default", &[], &[]), gen("zero", &["--seed", "0"], &[]));
    let out = tribekit_env(d, &["gen-data", "--out", "bad"], &[("TRIBEKIT_SEED", "seven")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "data = {}\ncheckpoint = {}\norder = {}\nresults = r.jsonl\nrun.method = test, bn\nrun.seeds = 1,2\n",
        f.path("data"),
        f.path("src.ckpt"),
        f.path("order.jsonl")
    );
    std::fs::write(dir.path().join("tk.conf"), cfg).unwrap();
    ok(tribekit(dir.path(), &["--config", "tk.conf", "run"]));
    assert_eq!(json_lines(&dir.path().join("r.jsonl")).len(), 4);
    ok(tribekit(dir.path(), &["run", "--config", "tk.conf", "--method", "pl", "--seeds", "5"]));
    let records = json_lines(&dir.path().join("r.jsonl"));
    assert_eq!((records.len(), records[4]["method"].as_str(), records[4]["seed"].as_u64()), (5, Some("pl"), Some(5)));
    std::fs::write(dir.path().join("broken.conf"), "no equals sign\n").unwrap();
    assert_eq!(tribekit(dir.path(), &["--config", "broken.conf", "report"]).status.code(), Some(2));
}

fn desk_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    ok(tribekit(dir, &["gen-data", "--out", "data"]));
    ok(tribekit(dir, &["pretrain", "--data", "data", "--out", "src.ckpt"]));
    ok(tribekit(dir, &["gen-stream", "--data", "data", "--if", "100", "--out", "order.jsonl"]));
    ok(tribekit(
        dir,
        &[
            "run",
            "--data",
            "data",
            "--checkpoint",
            "src.ckpt",
            "--order",
            "order.jsonl",
            "--method",
            "test,bn,pl,tent,tribe",
            "--results",
            "results.jsonl",
        ],
    ));
    let records = without_wall_time(json_lines(&dir.join("results.jsonl")));
    let mut files = vec![("results".to_string(), serde_json::to_vec(&records).unwrap())];
    for name in ["data/manifest.json", "data/clean.f32", "data/domain3.i32", "src.ckpt", "order.jsonl", "order.jsonl.meta.json"] {
        files.push((name.to_string(), std::fs::read(dir.join(name)).unwrap()));
    }
    files
}

#[test]
fn desk_pipeline_is_deterministic_and_fast() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let start = Instant::now();
    let first = desk_pipeline(a.path());
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "pipeline took {elapsed:?}");
    let second = desk_pipeline(b.path());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{name} differs between runs");
    }
}
