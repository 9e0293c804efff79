use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use taskport::model::io::load_checkpoint;
use taskport::model::Checkpoint;

fn taskport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskport"))
        .args(args)
        .env_remove("TASKPORT_LOG")
        .output()
        .expect("binary runs")
}

fn fixtures(dir: &Path) -> PathBuf {
    let out = dir.join("fx");
    let o = taskport(&["make-fixtures", "--seed", "5", "--outdir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn transport_args<'a>(fx: &'a str, target: &'a str, out: &'a str) -> Vec<String> {
    vec![
        "transport".into(),
        "--theta-a".into(),
        format!("{fx}/theta_a.tpk"),
        "--theta-a-ft".into(),
        format!("{fx}/theta_a_ft.tpk"),
        "--theta-b".into(),
        format!("{fx}/{target}"),
        "--calib".into(),
        format!("{fx}/calib.tpc"),
        "--output".into(),
        out.into(),
    ]
}

fn run(args: &[String]) -> Output {
    let v: Vec<&str> = args.iter().map(String::as_str).collect();
    taskport(&v)
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).trim().to_string();
    assert_eq!(s.lines().count(), 1, "expected one error line, got {s:?}");
    s
}

fn param_bits(c: &Checkpoint) -> Vec<u64> {
    let mut v = Vec::new();
    for w in c.weights() {
        v.extend(w.as_slice().iter().map(|x| x.to_bits()));
    }
    for b in c.biases().iter().flatten() {
        v.extend(b.iter().map(|x| x.to_bits()));
    }
    v
}

#[test]
fn zero_alpha_returns_target_parameters_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let out = dir.path().join("out.tpk");
    let mut args = transport_args(fx.to_str().unwrap(), "theta_b.tpk", out.to_str().unwrap());
    args.extend(["--alpha".into(), "0".into()]);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got = load_checkpoint(&out).unwrap();
    let want = load_checkpoint(fx.join("theta_b.tpk")).unwrap();
    assert_eq!(got.specs(), want.specs());
    assert_eq!(param_bits(&got), param_bits(&want));
}

#[test]
fn depth_mismatch_without_expansion_fails() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let out = dir.path().join("out.tpk");
    let o = run(&transport_args(
        fx.to_str().unwrap(),
        "theta_b_deep.tpk",
        out.to_str().unwrap(),
    ));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).starts_with("depth_mismatch: "));
    assert!(!out.exists());

    let mut args = transport_args(fx.to_str().unwrap(), "theta_b_deep.tpk", out.to_str().unwrap());
    args.push("--depth-expand".into());
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_checkpoint(&out).unwrap().depth(), 3);
}

#[test]
fn report_has_residuals_and_norm_identity() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let out = dir.path().join("out.tpk");
    let o = run(&transport_args(
        fx.to_str().unwrap(),
        "theta_b.tpk",
        out.to_str().unwrap(),
    ));
    assert!(o.status.success());
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let layers = doc["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 2);
    for l in layers {
        for key in ["in_residual", "out_residual", "bilinear_residual"] {
            assert!(l[key].as_f64().unwrap().is_finite(), "{key}");
        }
        let gap = (l["tau_norm_src"].as_f64().unwrap() - l["tau_norm_dst"].as_f64().unwrap()).abs();
        assert!(gap <= 1e-9, "layer gap {gap:e}");
    }
    let gap = (doc["tau_norm_src"].as_f64().unwrap() - doc["tau_norm_dst"].as_f64().unwrap()).abs();
    assert!(gap <= 1e-9, "total gap {gap:e}");
    assert_eq!(doc["method"], "theseus");
    assert_eq!(doc["seq_align"], "interp2d");
}

#[test]
fn transport_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let mut bytes = Vec::new();
    for (i, jobs) in ["1", "1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}.tpk"));
        let rep = dir.path().join(format!("rep{i}.json"));
        let mut args = transport_args(fx.to_str().unwrap(), "theta_b.tpk", out.to_str().unwrap());
        args.extend(
            ["--method", "random", "--seed", "9", "--jobs", jobs, "--report"]
                .iter()
                .map(|s| s.to_string()),
        );
        args.push(rep.to_str().unwrap().into());
        assert!(run(&args).status.success());
        let rep_text = std::fs::read_to_string(&rep)
            .unwrap()
            .replace(out.to_str().unwrap(), "");
        bytes.push((std::fs::read(&out).unwrap(), rep_text));
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
}

#[test]
fn fixtures_are_bitwise_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (fa, fb) = (fixtures(a.path()), fixtures(b.path()));
    let mut names: Vec<_> = std::fs::read_dir(&fa)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for n in names {
        assert_eq!(
            std::fs::read(fa.join(&n)).unwrap(),
            std::fs::read(fb.join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn unknown_method_names_the_valid_set() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let text = std::fs::read_to_string(fx.join("experiment.json")).unwrap();
    let mut cfg: Value = serde_json::from_str(&text).unwrap();
    cfg["methods"] = serde_json::json!(["theseus", "nope"]);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let o = taskport(&["experiment", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let line = stderr_line(&o);
    assert!(line.starts_with("config: "), "{line}");
    for m in ["theseus", "pinv", "pinv-tikh", "zero-pad", "random", "random-source"] {
        assert!(line.contains(&format!("`{m}`")), "{line}");
    }

    let mut args = transport_args(fx.to_str().unwrap(), "theta_b.tpk", "unused.tpk");
    args.extend(["--method".into(), "nope".into()]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).contains("valid: theseus, pinv, pinv-tikh, zero-pad, random, random-source"));
}

#[test]
fn misnamed_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let text = std::fs::read_to_string(fx.join("experiment.json")).unwrap();
    let mut cfg: Value = serde_json::from_str(&text).unwrap();
    cfg["batch_sise"] = Value::from(4);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let o = taskport(&["experiment", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).contains("batch_sise"));
}

#[test]
fn experiment_writes_json_to_stdout_or_file() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let cfg = fx.join("experiment.json");
    let o = taskport(&["experiment", cfg.to_str().unwrap(), "--output", "-"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["methods"].as_array().unwrap().len(), 3);

    let path = dir.path().join("res.json");
    let o = taskport(&["experiment", cfg.to_str().unwrap(), "--output", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), {
        let o = taskport(&["experiment", cfg.to_str().unwrap(), "--output", "-"]);
        o.stdout
    });
}

#[test]
fn ablation_emits_one_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let o = taskport(&["ablate-seqalign", fx.join("isometric.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("strategy,"), "{header}");
    let strategies: Vec<_> = lines.map(|l| l.split(',').next().unwrap().to_string()).collect();
    for s in ["mean", "interp1d", "interp2d"] {
        assert!(strategies.iter().any(|x| x == s), "{s} missing from {strategies:?}");
    }
}

#[test]
fn inspect_prints_header() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(dir.path());
    let o = taskport(&["inspect", fx.join("theta_b_deep.tpk").to_str().unwrap()]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["depth"], 3);
    assert_eq!(doc["layers"][0]["d_in"], 12);

    let o = taskport(&["inspect", fx.join("calib.tpc").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).starts_with("bad_magic: "));
}

#[test]
fn help_lists_flags_with_defaults() {
    let cases: &[(&str, &[&str])] = &[
        (
            "transport",
            &[
                "--theta-a",
                "--theta-a-ft",
                "--theta-b",
                "--calib",
                "--method",
                "[default: theseus]",
                "--seq-align",
                "[default: interp2d]",
                "--alpha",
                "[default: 1]",
                "--rcond",
                "--lambda",
                "[default: 0.001]",
                "--seed",
                "--depth-expand",
                "--jobs",
                "--output",
                "--report",
            ],
        ),
        ("experiment", &["--output"]),
        ("ablate-seqalign", &["--output", "[default: -]"]),
        (
            "make-fixtures",
            &["--seed", "[default: 0]", "--outdir", "[default: fixtures]"],
        ),
        ("inspect", &["<CHECKPOINT>"]),
    ];
    for (cmd, flags) in cases {
        let o = taskport(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}:\n{text}");
        }
    }
    let o = taskport(&["--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in ["transport", "experiment", "ablate-seqalign", "make-fixtures", "inspect"] {
        assert!(text.contains(cmd));
    }
}
