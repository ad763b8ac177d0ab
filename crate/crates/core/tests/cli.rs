use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_adsb-ranging");

const SMALL: &str = r#"
version = 1
seed = 5
failure_ceiling = 0.5

[scenario]
name = "small"
n_antennas = 2
snr_db = [10.0, 20.0]
trials = 4
alpha_r = [0.1]
alpha_theta = [0.1]

[scenario.em]
restarts = 2

[tracking]
packets = 4

[msens]
max_delays = [10, 30]
"#;

fn run(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--threads")
        .arg("1");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["selftest"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        4,
        "{text}"
    );
}

#[test]
fn sweep_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(dir.path(), &["--config", &cfg, "sweep"], &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv1 = std::fs::read(dir.path().join("out/sweep.csv")).unwrap();
    let jsonl1 = std::fs::read(dir.path().join("out/sweep_trials.jsonl")).unwrap();

    let out = run(dir.path(), &["--config", &cfg, "sweep"], &[]);
    assert!(out.status.success());
    assert_eq!(
        csv1,
        std::fs::read(dir.path().join("out/sweep.csv")).unwrap()
    );
    assert_eq!(
        jsonl1,
        std::fs::read(dir.path().join("out/sweep_trials.jsonl")).unwrap()
    );

    let csv = String::from_utf8(csv1).unwrap();
    // Header plus 2 SNRs x (1 range + 2 phase variants).
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.starts_with("experiment,max_delay,n_antennas,snr_db,metric,alpha,success,std_err,events,trials,failures\n"));
    let jsonl = String::from_utf8(jsonl1).unwrap();
    assert_eq!(jsonl.lines().count(), 8);
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["experiment"], "small");
    assert_eq!(first["ranges_true_m"].as_array().unwrap().len(), 2);
}

#[test]
fn flags_and_environment_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(
        dir.path(),
        &["--config", &cfg, "--trials", "3", "--seed", "9", "sweep"],
        &[("ADSBR_SCENARIO__SNR_DB", "[15.0]")],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(
        rows.iter()
            .all(|r| r.contains(",15.0,") && r.ends_with(",3,0")),
        "{csv}"
    );

    let shown = run(
        dir.path(),
        &["--config", &cfg, "--seed", "9", "config"],
        &[],
    );
    assert!(String::from_utf8(shown.stdout)
        .unwrap()
        .contains("seed = 9"));
}

#[test]
fn failure_ceiling_sets_exit_code_two() {
    // Equal received powers violate the identifiability ordering, so every
    // trial fails.
    let cfg_text = r#"
version = 1
failure_ceiling = 0.1
[scenario]
n_antennas = 1
snr_db = [20.0]
trials = 3
[[scenario.drones]]
power_w = 1.0
range_min_m = 1000.0
range_max_m = 1000.0
[[scenario.drones]]
power_w = 4.0
range_min_m = 2000.0
range_max_m = 2000.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), cfg_text);
    let out = run(dir.path(), &["--config", &cfg, "sweep"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let jsonl = std::fs::read_to_string(dir.path().join("out/sweep_trials.jsonl")).unwrap();
    assert!(jsonl
        .lines()
        .all(|l| l.contains("\"error\":\"configuration")));
}

#[test]
fn track_and_msens_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(dir.path(), &["--config", &cfg, "track"], &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let track = std::fs::read_to_string(dir.path().join("out/track.csv")).unwrap();
    assert_eq!(track.lines().count(), 1 + 4 * 3);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/track_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 3);

    let out = run(dir.path(), &["--config", &cfg, "msens"], &[]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/msens.csv")).unwrap();
    let range_rows: Vec<&str> = csv.lines().filter(|l| l.contains(",range,")).collect();
    assert_eq!(range_rows.len(), 2);
    assert!(range_rows[0].starts_with("small,10,") && range_rows[1].starts_with("small,30,"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "version = 7\n");
    let out = run(dir.path(), &["--config", &cfg, "sweep"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("version"));
}
