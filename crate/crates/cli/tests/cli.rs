//! End-to-end tests of the `netid` binary: command chaining through files,
//! exit codes and artifact hygiene.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;

fn netid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netid"))
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn run_ok(args: &[&str]) -> Output {
    let out = netid().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str], expected_code: i32) -> Output {
    let out = netid().args(args).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(expected_code),
        "command {:?}: stderr = {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_identity_system(dir: &Path, n: usize) -> [PathBuf; 4] {
    let eye = netid_core::io::matrix_to_csv(&DMatrix::<f64>::identity(n, n));
    let zero = netid_core::io::matrix_to_csv(&DMatrix::<f64>::zeros(n, n));
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    let c = dir.join("c.csv");
    let d = dir.join("d.csv");
    write(&a, &zero);
    write(&b, &eye);
    write(&c, &eye);
    write(&d, &zero);
    [a, b, c, d]
}

#[test]
fn simulate_zero_input_writes_zero_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let [a, b, c, d] = write_identity_system(dir.path(), 2);
    let config = dir.path().join("sim.json");
    write(
        &config,
        &format!(
            r#"{{
                "command": "simulate",
                "seed": 1,
                "system": {{"files": {{"a": {a:?}, "b": {b:?}, "c": {c:?}, "d": {d:?}}}}},
                "input": {{"kind": "zero", "len": 12}},
                "x0": "zero"
            }}"#
        ),
    );
    let out_dir = dir.path().join("out");
    run_ok(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let traj = netid_core::io::read_trajectory_csv(&out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(traj.inputs, DMatrix::zeros(2, 12));
    assert_eq!(traj.outputs, DMatrix::zeros(2, 12));
}

/// Fixture: a 3-node synthetic system simulated by the CLI itself, then
/// identified from the file; the estimated spectrum matches the ground
/// truth written alongside the trajectory.
#[test]
fn identify_three_node_fixture_recovers_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let sim_config = dir.path().join("sim.json");
    write(
        &sim_config,
        r#"{
            "command": "simulate",
            "seed": 5,
            "system": {"synthetic": {
                "n": 3,
                "state_graph": {"family": "path"},
                "input_graph": {"family": "ring"},
                "state_class": {"class": "combinatorial_laplacian"},
                "input_class": {"class": "adjacency"},
                "state_mapping": {"kind": "heat", "alpha": 0.9, "tau": 0.5}
            }},
            "input": {"kind": "gaussian", "len": 60},
            "x0": {"random": {"scale": 1.0}}
        }"#,
    );
    let sim_out = dir.path().join("sim_out");
    run_ok(&[
        "simulate",
        "--config",
        sim_config.to_str().unwrap(),
        "--out",
        sim_out.to_str().unwrap(),
    ]);

    let id_config = dir.path().join("id.json");
    write(
        &id_config,
        &format!(
            r#"{{
                "command": "identify",
                "trajectory": {:?},
                "s": 4,
                "order_policy": {{"policy": "largest_gap"}},
                "c": "identity"
            }}"#,
            sim_out.join("trajectory.csv")
        ),
    );
    let id_out = dir.path().join("id_out");
    run_ok(&[
        "identify",
        "--config",
        id_config.to_str().unwrap(),
        "--out",
        id_out.to_str().unwrap(),
    ]);

    let bundle = netid_core::io::read_bundle(&id_out.join("identified.json")).unwrap();
    assert_eq!(bundle.order, 3);
    let a_true = netid_core::io::read_matrix_csv(&sim_out.join("a.csv")).unwrap();
    let a_t = netid_core::io::rows_to_matrix(&bundle.a_t).unwrap();
    let mut eig_true: Vec<f64> = a_true.complex_eigenvalues().iter().map(|z| z.re).collect();
    let mut eig_est: Vec<f64> = a_t.complex_eigenvalues().iter().map(|z| z.re).collect();
    eig_true.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig_est.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (t, e) in eig_true.iter().zip(eig_est.iter()) {
        assert!((t - e).abs() < 1e-7, "eigenvalue {t} vs {e}");
    }
}

/// Cross-command consistency: feeding `simulate` output to `identify`
/// reproduces the in-process pipeline bitwise (the CSV is lossless).
#[test]
fn file_pipeline_matches_in_process_bitwise() {
    use netid_cli::commands::{run, RunOverrides};
    use netid_cli::config::parse_config;

    let dir = tempfile::tempdir().unwrap();
    let sim_out = dir.path().join("sim");
    let sim_json = format!(
        r#"{{
            "command": "simulate",
            "seed": 9,
            "system": {{"synthetic": {{
                "n": 3,
                "state_graph": {{"family": "erdos_renyi", "p": 0.5}},
                "input_graph": {{"family": "path"}},
                "state_mapping": {{"kind": "heat", "alpha": 1.0, "tau": 0.4}}
            }}}},
            "input": {{"kind": "piecewise_constant_bipolar", "hold": 1, "len": 50}},
            "x0": "zero"
        }}"#
    );
    run(
        parse_config(&sim_json).unwrap(),
        &RunOverrides::default(),
        &sim_out,
    )
    .unwrap();

    // In-process identification from the in-memory trajectory.
    let traj = netid_core::io::read_trajectory_csv(&sim_out.join("trajectory.csv")).unwrap();
    let est = netid_core::subspace::identify(
        &traj,
        &netid_core::subspace::IdentifyConfig {
            s: 4,
            order: netid_core::subspace::OrderPolicy::LargestGap,
            c: Some(DMatrix::identity(3, 3)),
        },
    )
    .unwrap();

    // File-route identification through the CLI.
    let id_out = dir.path().join("id");
    let id_json = format!(
        r#"{{
            "command": "identify",
            "trajectory": {:?},
            "s": 4,
            "c": "identity"
        }}"#,
        sim_out.join("trajectory.csv")
    );
    run(
        parse_config(&id_json).unwrap(),
        &RunOverrides::default(),
        &id_out,
    )
    .unwrap();
    let bundle = netid_core::io::read_bundle(&id_out.join("identified.json")).unwrap();
    let est_file = bundle.to_system().unwrap();

    assert_eq!(est.a_t, est_file.a_t);
    assert_eq!(est.c_t, est_file.c_t);
    assert_eq!(est.b_t, est_file.b_t);
    assert_eq!(est.d, est_file.d);
    assert_eq!(est.x_t0, est_file.x_t0);
    assert_eq!(est.singular_values, est_file.singular_values);
}

#[test]
fn recover_and_oneshot_consume_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    // Small synthetic run to produce a bundle with de-transformed matrices.
    let synth_config = dir.path().join("synth.json");
    write(
        &synth_config,
        r#"{"command":"reproduce-synthetic","seed":3,"n":6,"samples":80,"edge_probability":0.45}"#,
    );
    let synth_out = dir.path().join("synth");
    run_ok(&[
        "reproduce-synthetic",
        "--config",
        synth_config.to_str().unwrap(),
        "--out",
        synth_out.to_str().unwrap(),
    ]);

    // Recover the input graph through the identity mapping.
    let rec_config = dir.path().join("rec.json");
    write(
        &rec_config,
        &format!(
            r#"{{
                "command": "recover",
                "bundle": {:?},
                "target": "input",
                "recovery": {{
                    "path": "known_mapping",
                    "mapping": {{"kind": "identity"}},
                    "class": {{"class": "adjacency"}}
                }}
            }}"#,
            synth_out.join("identified.json")
        ),
    );
    let rec_out = dir.path().join("rec");
    run_ok(&[
        "recover",
        "--config",
        rec_config.to_str().unwrap(),
        "--out",
        rec_out.to_str().unwrap(),
    ]);
    let s2_hat = netid_core::io::read_matrix_csv(&rec_out.join("shift.csv")).unwrap();
    let s2_true = netid_core::io::read_matrix_csv(&synth_out.join("s2_true.csv")).unwrap();
    assert!((s2_hat - s2_true).amax() < 1e-6);
    assert!(rec_out.join("shift.dot").exists());
    assert!(rec_out.join("shift_edges.txt").exists());
    assert!(rec_out.join("diagnostics.json").exists());

    // One-shot on the same bundle (state side), fixed small mu.
    let one_config = dir.path().join("one.json");
    write(
        &one_config,
        &format!(
            r#"{{
                "command": "oneshot",
                "bundle": {:?},
                "class": {{"class": "adjacency", "scale": 6.0}},
                "mu": 0.001
            }}"#,
            synth_out.join("identified.json")
        ),
    );
    let one_out = dir.path().join("one");
    run_ok(&[
        "oneshot",
        "--config",
        one_config.to_str().unwrap(),
        "--out",
        one_out.to_str().unwrap(),
    ]);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(one_out.join("diagnostics.json")).unwrap())
            .unwrap();
    let trace = diag["objective_trace"].as_array().unwrap();
    assert!(!trace.is_empty());
    // Monotone non-increasing objective trace.
    let values: Vec<f64> = trace.iter().map(|v| v.as_f64().unwrap()).collect();
    for w in values.windows(2) {
        assert!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    write(&config, r#"{"command":"reproduce-synthetic","seed":1,"unknown_key":true}"#);
    let out = run_err(
        &[
            "reproduce-synthetic",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ],
        2,
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn command_mismatch_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("synth.json");
    write(&config, r#"{"command":"reproduce-synthetic","seed":1}"#);
    run_err(
        &[
            "identify",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ],
        2,
    );
}

#[test]
fn numeric_failure_exits_with_3_and_cleans_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // Too-short trajectory: identification must fail after the output
    // directory exists, leaving no artifacts behind.
    let traj_path = dir.path().join("short.csv");
    write(&traj_path, "t,u_0,y_0\n0,1.0,1.0\n1,-1.0,0.5\n2,1.0,0.25\n");
    let config = dir.path().join("id.json");
    write(
        &config,
        &format!(
            r#"{{"command":"identify","trajectory":{traj_path:?},"s":4,"c":"identity"}}"#
        ),
    );
    let out_dir = dir.path().join("out");
    let out = run_err(
        &[
            "identify",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        3,
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage"), "stderr should name the stage: {stderr}");
    // No partial artifacts.
    if out_dir.exists() {
        assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 0);
    }
}

#[test]
fn bad_flag_values_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("synth.json");
    write(&config, r#"{"command":"reproduce-synthetic","seed":1}"#);
    run_err(
        &[
            "reproduce-synthetic",
            "--config",
            config.to_str().unwrap(),
            "--order",
            "several",
        ],
        2,
    );
    run_err(
        &[
            "reproduce-synthetic",
            "--config",
            config.to_str().unwrap(),
            "--mu",
            "lots",
        ],
        2,
    );
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("synth.json");
    write(
        &config,
        r#"{"command":"reproduce-synthetic","seed":3,"n":5,"samples":60,"edge_probability":0.5}"#,
    );
    let out1 = dir.path().join("o1");
    let out2 = dir.path().join("o2");
    let out3 = dir.path().join("o3");
    run_ok(&["reproduce-synthetic", "--config", config.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    run_ok(&["reproduce-synthetic", "--config", config.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    run_ok(&[
        "reproduce-synthetic",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        out3.to_str().unwrap(),
    ]);
    let t1 = std::fs::read_to_string(out1.join("trajectory.csv")).unwrap();
    let t2 = std::fs::read_to_string(out2.join("trajectory.csv")).unwrap();
    let t3 = std::fs::read_to_string(out3.join("trajectory.csv")).unwrap();
    assert_eq!(t1, t2, "same seed must reproduce bitwise");
    assert_ne!(t1, t3, "the seed override must take effect");
    // The report records the seed actually used.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out3.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 11);
}
