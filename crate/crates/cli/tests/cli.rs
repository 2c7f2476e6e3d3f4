use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use libexpert::fixture::demo_corpus;

fn libexpert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_libexpert"))
        .args(args)
        .env_remove("LIBEXPERT_API_TOKEN")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Demo corpus plus a config file next to it; returns the config path.
fn setup(root: &Path, developers: usize) -> std::path::PathBuf {
    let demo = demo_corpus(root, developers, 21).unwrap();
    let cfg = demo.config(Path::new("out"), 21);
    let mut text = toml::to_string(&cfg).unwrap();
    // Relative paths resolve against the config file's directory.
    text = text.replace(&format!("\"{}\"", demo.repos_dir.display()), "\"repos\"");
    text = text.replace(
        &format!("\"{}\"", demo.ground_truth.display()),
        "\"ground_truth.csv\"",
    );
    let path = root.join("libexpert.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_report_and_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 50);
    let cfg = cfg.to_str().unwrap();

    let out = libexpert(&["run", "--config", cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("stats"));
    let lib_dir = tmp.path().join("out/react");
    assert!(lib_dir.join("report.effects.json").exists());

    let report = libexpert(&["report", "--config", cfg]);
    assert!(report.status.success(), "{}", stderr(&report));
    assert!(stdout(&report).contains("== react =="));

    let verdicts = fs::read_to_string(lib_dir.join("verdicts.csv")).unwrap();
    let line = verdicts.lines().nth(1).unwrap();
    let developer = line.split(',').next().unwrap();
    let model = lib_dir.join("clusters.json");
    let pred = libexpert(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--developer",
        developer,
    ]);
    assert!(pred.status.success(), "{}", stderr(&pred));
    let fields: Vec<String> = stdout(&pred).trim().split('\t').map(str::to_string).collect();
    assert_eq!(fields[0], developer);
    let expected_verdict = line.split(',').nth(2).unwrap();
    assert_eq!(fields[2], expected_verdict);

    let unknown = libexpert(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--developer",
        "nobody@nowhere",
    ]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_3_and_resume_finishes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 50);
    let cfg = cfg.to_str().unwrap();
    let gt = tmp.path().join("ground_truth.csv");
    let good = fs::read_to_string(&gt).unwrap();
    fs::write(&gt, format!("{good}dev1@example.com,react,0\n")).unwrap();

    let out = libexpert(&["run", "--config", cfg]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("stage `preprocess`"), "{err}");

    fs::write(&gt, good).unwrap();
    fs::remove_dir_all(tmp.path().join("repos")).unwrap();
    let out = libexpert(&["run", "--resume", "--config", cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.lines()
            .any(|l| l.contains("mine") && l.contains("checkpoint")),
        "{text}"
    );
    assert!(tmp.path().join("out/react/report.effects.json").exists());
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 10);
    let cfg = cfg.to_str().unwrap();

    let missing = libexpert(&["run", "--config", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let bad_k = libexpert(&["cluster", "--config", cfg, "--kmax", "1"]);
    assert_eq!(bad_k.status.code(), Some(2));
    assert!(stderr(&bad_k).contains("k_max"));

    let no_flags = libexpert(&["features"]);
    assert_eq!(no_flags.status.code(), Some(2));

    let bad_scheme = libexpert(&["train", "--config", cfg, "--scheme", "seven"]);
    assert_eq!(bad_scheme.status.code(), Some(2));
}

#[test]
fn stage_subcommands_run_only_what_they_need() {
    let tmp = tempfile::tempdir().unwrap();
    let demo = demo_corpus(tmp.path(), 30, 4).unwrap();
    let out_dir = tmp.path().join("out");
    let args = [
        "--library",
        "react",
        "--repos",
        demo.repos_dir.to_str().unwrap(),
        "--snapshot",
        "2018-01-01",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ];
    let features = libexpert(&[&["features"], &args[..]].concat());
    assert!(features.status.success(), "{}", stderr(&features));
    assert!(out_dir.join("react/features.csv").exists());
    assert!(!out_dir.join("react/features.clean.csv").exists());

    // Labels and a seed unlock the later stages; clustering skips training.
    let gt = demo.ground_truth.to_str().unwrap();
    let cluster = libexpert(
        &[
            &["cluster"],
            &args[..],
            &["--ground-truth", gt, "--seed", "4", "--kmax", "4"],
        ]
        .concat(),
    );
    assert!(cluster.status.success(), "{}", stderr(&cluster));
    let text = stdout(&cluster);
    assert!(text.contains("checkpoint"), "{text}");
    assert!(!text.contains("train"), "{text}");
    assert!(out_dir.join("react/clusters.json").exists());
    assert!(!out_dir.join("react/report.supervised.json").exists());
}
