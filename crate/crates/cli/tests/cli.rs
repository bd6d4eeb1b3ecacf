use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn topoconf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topoconf"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("TOPOCONF_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TOY: &str = r#"
[dataset]
kind = "synthetic_separable"
name = "toy"

[features]
resolution = 10

[model.train]
epochs = 30
"#;

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.toml"), TOY).unwrap();
    dir
}

#[test]
fn verify_coverage_passes_for_the_reference_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = topoconf(
        dir.path(),
        &["verify-coverage", "--alpha", "0.1", "-m", "19", "--trials", "10000"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS"));
    assert!(stdout(&o).contains("coverage="));
}

#[test]
fn verify_coverage_notes_when_no_exclusion_is_possible() {
    let dir = tempfile::tempdir().unwrap();
    let o = topoconf(dir.path(), &["verify-coverage", "-m", "9", "--trials", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no exclusion possible"), "{}", stdout(&o));
}

#[test]
fn verify_coverage_at_high_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let o = topoconf(
        dir.path(),
        &["verify-coverage", "--alpha", "0.9", "-m", "99", "--trials", "10000"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("coverage="))
        .unwrap()
        .to_string();
    let cov: f64 = line["coverage=".len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((cov - 0.11).abs() < 0.02, "{line}");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = topoconf(dir.path(), &["info", "--set", "conformal.alpha=1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("alpha"));

    let o = topoconf(dir.path(), &["info", "--set", "model.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(dir.path().join("bad.toml"), "this is = = not toml").unwrap();
    let o = topoconf(dir.path(), &["featurize", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));

    // the default dataset is not present in an empty directory
    let o = topoconf(dir.path(), &["featurize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("MUTAG_A.txt"), "{}", stderr(&o));
}

#[test]
fn train_before_featurize_exits_five() {
    let dir = toy_dir();
    let o = topoconf(dir.path(), &["train", "--config", "toy.toml"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("topoconf featurize"), "{}", stderr(&o));
}

#[test]
fn stale_cache_format_exits_three() {
    let dir = toy_dir();
    let o = topoconf(dir.path(), &["featurize", "--config", "toy.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cache = fs::read_dir(dir.path().join(".topoconf-cache"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let mut bytes = fs::read(&cache).unwrap();
    bytes[8] = 99;
    fs::write(&cache, bytes).unwrap();
    let o = topoconf(dir.path(), &["featurize", "--config", "toy.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn divergence_exits_four() {
    let dir = toy_dir();
    assert_eq!(
        topoconf(dir.path(), &["featurize", "--config", "toy.toml"])
            .status
            .code(),
        Some(0)
    );
    let o = topoconf(
        dir.path(),
        &[
            "train",
            "--config",
            "toy.toml",
            "--set",
            "model.train.learning_rate=1e300",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn full_toy_run_and_info() {
    let dir = toy_dir();
    let c = ["--config", "toy.toml"];
    let run = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(c);
        args.extend(extra);
        let o = topoconf(dir.path(), &args);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        stdout(&o)
    };
    assert!(run("featurize", &[]).starts_with("wrote"));
    assert!(run("featurize", &[]).starts_with("up to date"));
    assert!(run("train", &[]).contains("checkpoint"));
    let out = run("predict", &["--set", "conformal.k_nn=\"all\""]);
    assert!(out.contains("[T]") && out.contains("[E]"), "{out}");
    assert!(out.contains("mode=marginal"));
    let metrics = fs::read_to_string(dir.path().join("runs/toy/metrics_T.txt")).unwrap();
    assert!(metrics.starts_with("alpha=0.1\ncoverage="), "{metrics}");
    assert!(metrics.contains("\navg_size="));

    let info = run("info", &["--show-config"]);
    assert!(info.contains("(present)"), "{info}");
    assert!(info.contains("80 graphs, 2 classes"));
    assert!(info.contains("[dataset]"));
}

#[test]
fn cache_directory_can_be_moved_by_environment() {
    let dir = toy_dir();
    let o = Command::new(env!("CARGO_BIN_EXE_topoconf"))
        .args(["featurize", "--config", "toy.toml"])
        .current_dir(dir.path())
        .env("TOPOCONF_CACHE_DIR", "elsewhere")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("elsewhere").read_dir().unwrap().next().is_some());
    assert!(!dir.path().join(".topoconf-cache").exists());
}
