use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypertune"))
}

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn shipped_config() -> PathBuf {
    manifest().join("../../configs/gan_proxy.toml")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Directory named on a `<prefix> <dir>` stdout line.
fn dir_from(o: &Output, prefix: &str) -> PathBuf {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .map(|d| PathBuf::from(d.trim()))
        .unwrap_or_else(|| panic!("no `{prefix}` line in {}", stdout(o)))
}

fn optimize(out: &Path, extra: &[&str]) -> Output {
    run(bin()
        .arg("optimize")
        .arg("--config")
        .arg(shipped_config())
        .arg("--out")
        .arg(out)
        .args(extra))
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn optimize_is_deterministic_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let a = optimize(tmp.path(), &[]);
    let b = optimize(tmp.path(), &[]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success(), "{}", stderr(&b));
    let (da, db) = (dir_from(&a, "run: "), dir_from(&b, "run: "));
    assert_ne!(da, db);
    let ha = fs::read(da.join("history.jsonl")).unwrap();
    assert_eq!(ha, fs::read(db.join("history.jsonl")).unwrap());
    assert_eq!(String::from_utf8(ha).unwrap().lines().count(), 50);
    assert_eq!(
        report(&da)["best"]["params"],
        serde_json::json!({"m": 3, "n": 140, "k": 3})
    );

    let r = run(bin().arg("replay").arg(&da));
    assert!(r.status.success(), "{}", stderr(&r));
    assert!(stdout(&r).contains("every proposal reproduced"));
}

#[test]
fn tampered_history_is_caught_with_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let o = optimize(tmp.path(), &["--max-evals", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = dir_from(&o, "run: ");
    let path = dir.join("history.jsonl");
    let mut lines: Vec<Value> = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let best_it = report(&dir)["best"]["iteration"].as_u64().unwrap();
    let victim = (8..20).find(|&i| i != best_it).unwrap() as usize;
    let params = &mut lines[victim]["params"];
    let m = params["m"].as_i64().unwrap();
    params["m"] = Value::from(if m == 11 { 10 } else { m + 1 });
    let body: String = lines.iter().map(|v| v.to_string() + "\n").collect();
    fs::write(&path, body).unwrap();

    let r = run(bin().arg("replay").arg(&dir));
    assert_eq!(r.status.code(), Some(3), "{}", stdout(&r));
    assert!(
        stderr(&r).contains(&format!("iteration {victim}")),
        "{}",
        stderr(&r)
    );
}

#[test]
fn missing_field_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(
        &cfg,
        "optimizer = \"bo\"\nmax_evals = 5\n\n[[space]]\nname = \"m\"\nlower = 2\n\n[objective]\nkind = \"builtin\"\nbuiltin_id = \"gan_proxy\"\n\n[bo]\n",
    )
    .unwrap();
    let o = run(bin().arg("optimize").arg("--config").arg(&cfg));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("upper") && err.contains("bad.toml"), "{err}");
}

#[test]
fn missing_config_file_is_exit_2() {
    let o = run(bin().args(["optimize", "--config", "/nonexistent/x.toml"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn random_over_whole_lattice_finds_enumerated_max() {
    let tmp = tempfile::tempdir().unwrap();
    let o = optimize(
        tmp.path(),
        &["--optimizer", "random", "--max-evals", "4410"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = report(&dir_from(&o, "run: "));
    assert_eq!(rep["evaluations"], 4410);
    assert_eq!(rep["best"]["score"], rep["optimum"]["score"]);
    assert_eq!(rep["best"]["params"], rep["optimum"]["params"]);
}

#[test]
fn compare_produces_one_cell_per_optimizer_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(bin()
        .arg("compare")
        .arg("--config")
        .arg(shipped_config())
        .args([
            "--optimizers",
            "bo,cobyla,pso",
            "--seeds",
            "1,2",
            "--budget",
            "10",
            "--out",
        ])
        .arg(tmp.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let root = dir_from(&o, "comparison: ");
    let c: Value =
        serde_json::from_str(&fs::read_to_string(root.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(c["cells"].as_array().unwrap().len(), 6);
    assert_eq!(c["summaries"].as_array().unwrap().len(), 3);
    for opt in ["bo", "cobyla", "pso"] {
        for seed in [1, 2] {
            let dir = root.join(format!("{opt}-seed{seed}"));
            assert_eq!(report(&dir)["evaluations"], 10, "{opt} {seed}");
        }
    }
    assert!(root.join("summary.csv").exists());
    for opt in ["bo", "cobyla", "pso"] {
        assert!(stdout(&o).contains(opt));
    }
}

#[test]
fn compare_with_budget_one_reports_first_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(bin()
        .arg("compare")
        .arg("--config")
        .arg(shipped_config())
        .args([
            "--optimizers",
            "bo,pso,random",
            "--seeds",
            "3..4",
            "--budget",
            "1",
            "--out",
        ])
        .arg(tmp.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let root = dir_from(&o, "comparison: ");
    for opt in ["bo", "pso", "random"] {
        for seed in [3, 4] {
            let dir = root.join(format!("{opt}-seed{seed}"));
            let text = fs::read_to_string(dir.join("history.jsonl")).unwrap();
            let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
            assert_eq!(text.lines().count(), 1);
            let rep = report(&dir);
            assert_eq!(rep["best"]["params"], first["params"]);
            assert_eq!(rep["best"]["score"], first["score"]);
        }
    }
}

#[test]
fn eval_metrics_prints_json_matching_goldens() {
    let fx = manifest().join("tests/fixtures/metrics");
    let golden: Value =
        serde_json::from_str(&fs::read_to_string(fx.join("golden.json")).unwrap()).unwrap();
    let case = golden["cases"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "rgb_ramp_smoothed")
        .unwrap();
    let o = run(bin()
        .arg("eval-metrics")
        .arg(fx.join("rgb_ramp_smoothed_a.png"))
        .arg(fx.join("rgb_ramp_smoothed_b.png")));
    assert!(o.status.success(), "{}", stderr(&o));
    let got: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let close = |k: &str, g: &str, tol: f64| {
        let (a, b) = (got[k].as_f64().unwrap(), case[g].as_f64().unwrap());
        assert!((a - b).abs() <= tol, "{k}: {a} vs {b}");
    };
    close("mse", "mse", 1e-9);
    close("psnr", "psnr", 1e-6);
    close("ssim", "ssim_gaussian", 1e-9);

    let o = run(bin()
        .arg("eval-metrics")
        .arg(fx.join("grey_noise_a.png"))
        .arg(fx.join("rgb_ramp_smoothed_b.png")));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn external_objective_abort_leaves_marker_and_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let script = manifest().join("tests/fixtures/protocol/mock_objective.py");
    let cfg = tmp.path().join("ext.toml");
    fs::write(
        &cfg,
        format!(
            "optimizer = \"random\"\nmax_evals = 5\n\n[[space]]\nname = \"m\"\nlower = 0\nupper = 10\n\n\
             [objective]\nkind = \"external\"\ncommand = [\"python3\", {:?}, \"always_err\"]\ntimeout = 20\n",
            script.display().to_string()
        ),
    )
    .unwrap();
    let o = run(bin()
        .arg("optimize")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("runs")));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let dir = dir_from(&o, "run: ");
    assert!(dir.join("ABORTED").exists());
    let failures = fs::read_to_string(dir.join("failures.jsonl")).unwrap();
    assert_eq!(failures.lines().count(), 3);
    assert_eq!(report(&dir)["status"], "aborted");
}
