use std::path::Path;
use std::process::{Command, Output};

fn iodine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iodine"))
        .args(args)
        .env_remove("IODINE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

#[test]
fn validate_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let o = iodine(&["--config", cfg.to_str().unwrap(), "--validate"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = text(&o);
    assert!(out.starts_with("0 warning(s)"), "{out}");
    assert!(out.contains("[cell]"), "{out}");
}

#[test]
fn typo_warns_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, "[cell]\npresure = 0.1\n").unwrap();
    let o = iodine(&["--config", cfg.to_str().unwrap(), "--validate"]);
    assert_eq!(code(&o), 0);
    assert!(text(&o).contains("pressure"), "{}", text(&o));
}

#[test]
fn range_error_exits_one() {
    let o = iodine(&["--validate", "--set", "cell.pressure=-1"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("cell.pressure"), "{}", text(&o));
}

#[test]
fn unknown_override_and_scenario_exit_one() {
    assert_eq!(code(&iodine(&["--validate", "--set", "cell.nope=1"])), 1);
    let o = iodine(&["--scenario", "alan"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("allan"));
}

#[test]
fn missing_config_exits_one() {
    assert_eq!(
        code(&iodine(&["--config", "/nonexistent/iodine.toml", "--validate"])),
        1
    );
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = iodine(&["--scenario", "pressure-shift", "--out", blocker.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", text(&o));
}

#[test]
fn failed_check_exits_three_only_with_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "--scenario",
        "pressure-shift",
        "--out",
        out,
        "--set",
        "pressure_shift.at=0.6",
    ];
    assert_eq!(code(&iodine(&args)), 0);
    let mut checked = args.to_vec();
    checked.push("--check");
    let o = iodine(&checked);
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("FAIL"));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = iodine(&[
            "--scenario",
            "allan,repeatability",
            "--seed",
            seed,
            "--out",
            dir.path().to_str().unwrap(),
            "--jobs",
            "2",
        ]);
        assert_eq!(code(&o), 0, "{}", text(&o));
    }
    for s in ["allan", "repeatability"] {
        assert_eq!(read_all(&a.path().join(s)), read_all(&b.path().join(s)));
        assert_ne!(read_all(&a.path().join(s)), read_all(&c.path().join(s)));
    }
}

#[test]
fn summary_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = iodine(&["--scenario", "pressure-shift", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("pressure-shift/summary.json")).unwrap()).unwrap();
    for key in ["scenario", "seed", "config_hash", "version", "results", "checks"] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
    assert_eq!(s["scenario"], "pressure-shift");
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_iodine"))
        .args(["--scenario", "pressure-shift"])
        .env("IODINE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("pressure-shift/summary.json").exists());
}
