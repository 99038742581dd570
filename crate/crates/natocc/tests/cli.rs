//! End-to-end checks of the command-line interface: exit codes, error
//! surfaces, and byte-level determinism of emitted files.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_natocc"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("natocc-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const QUENCH_CONFIG: &str = r#"{
  "L": 4, "N": 3, "t_hop": 1.0, "U": 1.0,
  "sector": { "m": 0.5, "T": 1 },
  "quench": [ { "t": 0.0, "U": 2.0 } ],
  "dynamics": { "t_end": 0.2, "step": 0.001 },
  "perturb": { "seed": 3, "trials": 4, "lambda": 0.001 }
}"#;

const DEGENERATE_CONFIG: &str = r#"{
  "L": 4, "N": 3, "t_hop": 1.0, "U": 0.0,
  "sector": { "m": 0.5, "T": 1 },
  "quench": [ { "t": 0.0, "U": 2.0 } ],
  "dynamics": { "t_end": 0.1, "step": 0.001 }
}"#;

#[test]
fn sector_map_emits_golden_tables() {
    let dir = scratch("sector-map");
    let config = dir.join("run.json");
    std::fs::write(&config, QUENCH_CONFIG).unwrap();
    let out = dir.join("map.json");
    let status = bin()
        .args([
            "sector-map",
            "--config",
            config.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["inverse_denominator"], "4");
    // Full matrix content, in the emitted (lexicographic) column order.
    let expect_matrix = serde_json::json!([
        [1, 0, 0, 0, 1, 1],
        [1, 0, 0, 1, 0, 0],
        [1, 1, 1, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
        [0, 1, 0, 1, 0, 1],
        [0, 1, 0, 0, 1, 0]
    ]);
    assert_eq!(doc["matrix"], expect_matrix);
    let rows = doc["row_labels"].as_array().unwrap();
    let expect_rows = ["n(0u)", "n(0d)", "n(1u)", "n(1d)", "n(2u)", "n(2d)"];
    assert_eq!(rows.len(), 6);
    for (row, expect) in rows.iter().zip(expect_rows.iter()) {
        assert_eq!(row, expect);
    }
    // One inverse functional per determinant, over the common denominator.
    let nums = doc["inverse_numerators"].as_array().unwrap();
    assert_eq!(nums.len(), 6);
    assert_eq!(nums[2], serde_json::json!(["0", "0", "0", "4", "0", "0"]));
}

#[test]
fn trajectories_are_byte_deterministic() {
    let dir = scratch("determinism");
    let config = dir.join("run.json");
    std::fs::write(&config, QUENCH_CONFIG).unwrap();
    let run = |prefix: &str| {
        let status = bin()
            .args([
                "evolve-reduced",
                "--config",
                config.to_str().unwrap(),
                "--output-prefix",
                dir.join(prefix).to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.join(format!("{prefix}.csv"))).unwrap()
    };
    let first = run("a");
    let second = run("b");
    assert_eq!(first, second, "identical configs must give identical bytes");
}

#[test]
fn compare_identical_files_reports_zero() {
    let dir = scratch("compare");
    let config = dir.join("run.json");
    std::fs::write(&config, QUENCH_CONFIG).unwrap();
    let prefix = dir.join("traj");
    assert!(bin()
        .args([
            "evolve-exact",
            "--config",
            config.to_str().unwrap(),
            "--output-prefix",
            prefix.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let csv = format!("{}.csv", prefix.to_str().unwrap());
    let output = bin()
        .args(["compare", "--exact", &csv, "--reduced", &csv])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["occupation_max"], 0.0);
    assert_eq!(doc["amplitude_max"], 0.0);
}

#[test]
fn degenerate_start_exits_one_with_module_and_time() {
    let dir = scratch("degenerate");
    let config = dir.join("run.json");
    std::fs::write(&config, DEGENERATE_CONFIG).unwrap();
    let output = bin()
        .args(["evolve-reduced", "--config", config.to_str().unwrap()])
        .current_dir(&dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8(output.stderr).unwrap();
    assert!(err.contains("[dynamics]"), "missing module tag: {err}");
    assert!(err.contains("degenerate occupations"), "{err}");
    assert!(err.contains("t = 0"), "missing failing time: {err}");
    assert!(err.contains("hint:"), "missing remediation hint: {err}");
}

#[test]
fn config_errors_exit_two() {
    let dir = scratch("config-errors");
    // Missing file.
    let output = bin()
        .args(["ground-state", "--config", "does-not-exist.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Unknown key.
    let config = dir.join("bad.json");
    std::fs::write(
        &config,
        r#"{"L":4,"N":3,"t_hop":1.0,"U":1.0,"sector":{"m":0.5,"T":1},"wat":1}"#,
    )
    .unwrap();
    let output = bin()
        .args(["ground-state", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8(output.stderr).unwrap();
    assert!(err.contains("[config]"), "{err}");
}

#[test]
fn output_dir_env_override() {
    let dir = scratch("env-override");
    let config = dir.join("run.json");
    std::fs::write(&config, QUENCH_CONFIG).unwrap();
    let target = dir.join("redirected");
    let status = bin()
        .args(["ground-state", "--config", config.to_str().unwrap()])
        .env("NATOCC_OUT_DIR", target.to_str().unwrap())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(target.join("ground_state.json").exists());
}
