use std::path::Path;
use std::process::{Command, Output};

fn armington(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armington"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn simulate_and_report(dir: &Path) -> String {
    std::fs::write(dir.join("sim.cfg"), "output_dir = .\nsim.months = 180\n").unwrap();
    let sim = armington(&["--config", "sim.cfg", "--seed", "3", "simulate"], dir);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let report = armington(&["--config", "run.cfg", "report"], dir);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    assert!(String::from_utf8_lossy(&report.stdout).contains("report.txt"));
    std::fs::read_to_string(dir.join("report/report.txt")).unwrap()
}

#[test]
fn simulate_then_report_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = simulate_and_report(a.path());
    let rb = simulate_and_report(b.path());
    assert_eq!(ra, rb);
    assert!(ra.contains("Endogeneity (C statistic)"));
    assert!(ra.contains("Second stage"));
}

#[test]
fn stage_commands_write_partial_reports() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_and_report(tmp.path());
    for (cmd, file) in [("estimate-first", "first_stage.txt"), ("estimate-second", "second_stage.txt")] {
        let out = armington(&["--config", "run.cfg", cmd], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(tmp.path().join("report").join(file).is_file());
    }
}

#[test]
fn tariff_on_demo_data() {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo");
    let tmp = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(demo.join("demo.cfg"))
        .unwrap()
        .lines()
        .map(|l| match l.split_once('=') {
            Some((k, v)) if k.trim() != "output_dir" => format!("{k}= {}", demo.join(v.trim()).display()),
            Some(_) => format!("output_dir = {}", tmp.path().display()),
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(tmp.path().join("demo.cfg"), cfg).unwrap();
    let out = armington(&["--config", "demo.cfg", "--meat", "beef", "tariff"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("tariff_beef.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("MEX,2005-07") && l.ends_with("#2 trq:ad_valorem(out)>#1 ad_valorem")));
    assert!(!tmp.path().join("tariff_pork.csv").exists());
}

#[test]
fn bad_config_fails_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.cfg"), "significance = 0.2\n").unwrap();
    let out = armington(&["--config", "bad.cfg", "report"], tmp.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:") && stderr.contains("significance"), "{stderr}");

    let out = armington(&["--config", "missing.cfg", "ingest"], tmp.path());
    assert!(!out.status.success());
}
