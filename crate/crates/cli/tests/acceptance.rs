//! CLI contract tests, including acceptance criterion A7 (determinism and
//! exit codes).

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pdeobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdeobs"))
        .args(args)
        .output()
        .expect("spawn pdeobs")
}

fn small_config() -> &'static str {
    r#"{
        "coefficients": {
            "diffusion": {"offset": 1.0},
            "advection": {"amplitude": 1.0, "radial": {"poly": [0.0, 0.5]}},
            "reaction": {"offset": 2.0},
            "input": {"amplitude": 1.0, "temporal": {"sin": {"freq": 1.0}}}
        },
        "target": {"mu_below_bound": 1.0},
        "grid": {"n": 24},
        "time": {"dt": 1e-4, "horizon": 0.05},
        "initial_conditions": {
            "plant": {"random": {"modes": 5}},
            "observer": "zero"
        },
        "output": {"decimate": 10, "states": true, "snapshots": 3},
        "seed": 42
    }"#
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn read_bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"))
}

/// A7: repeated runs with the same config and seed produce byte-identical
/// CSVs, and the documented exit codes hold on three injected-fault configs.
#[test]
fn a7_determinism_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    write(&cfg, small_config());

    // Determinism: two simulate runs, byte-identical CSV outputs.
    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    for out in [&out_a, &out_b] {
        let res = pdeobs(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            res.status.success(),
            "simulate failed: {}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    for name in ["norms.csv", "states.csv", "gains_p1.csv", "gains_p10.csv"] {
        assert_eq!(
            read_bytes(&out_a.join(name)),
            read_bytes(&out_b.join(name)),
            "{name} differs between identical runs"
        );
    }

    // And the same for the kernel file.
    let kd_a = dir.path().join("kernel_a");
    let kd_b = dir.path().join("kernel_b");
    for out in [&kd_a, &kd_b] {
        let res = pdeobs(&[
            "solve-kernel",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success());
    }
    assert_eq!(
        read_bytes(&kd_a.join("kernel.csv")),
        read_bytes(&kd_b.join("kernel.csv"))
    );

    // Fault 1: malformed JSON -> exit 2 with a line diagnostic.
    let bad = dir.path().join("bad.json");
    write(&bad, "{\"coefficients\": {\n");
    let res = pdeobs(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line"), "no line diagnostic in: {err}");

    // Fault 2: diffusion allowed to reach zero -> exit 2, positivity named.
    let dneg = small_config().replace(
        r#""diffusion": {"offset": 1.0}"#,
        r#""diffusion": {"offset": 0.5, "amplitude": 1.0, "radial": {"poly": [0.0, -1.0]}}"#,
    );
    let dneg_path = dir.path().join("dneg.json");
    write(&dneg_path, &dneg);
    for cmd in ["validate", "simulate"] {
        let out_dir = dir.path().join(format!("dneg_{cmd}"));
        let mut args = vec![cmd, "--config", dneg_path.to_str().unwrap()];
        let out_str;
        if cmd == "simulate" {
            out_str = out_dir.to_str().unwrap().to_string();
            args.extend(["--out", &out_str]);
        }
        let res = pdeobs(&args);
        assert_eq!(res.status.code(), Some(2), "{cmd} exit code");
        let text = format!(
            "{}{}",
            String::from_utf8_lossy(&res.stdout),
            String::from_utf8_lossy(&res.stderr)
        );
        assert!(text.contains("positiv"), "{cmd}: positivity not named: {text}");
    }

    // Fault 3: kernel series cut off after one iterate -> exit 3 with the
    // tail norm surfaced.
    let noconv = small_config()
        .replace(r#""reaction": {"offset": 2.0}"#, r#""reaction": {"offset": 25.0}"#)
        .replace(r#""seed": 42"#, r#""solver": {"max_iter": 1}, "seed": 42"#);
    let noconv_path = dir.path().join("noconv.json");
    write(&noconv_path, &noconv);
    let out_nc = dir.path().join("noconv_out");
    let res = pdeobs(&[
        "solve-kernel",
        "--config",
        noconv_path.to_str().unwrap(),
        "--out",
        out_nc.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("tail norm"), "tail norm not surfaced: {err}");

    println!("[A7] PASS: byte-identical reruns; exit codes 2/2/3 on the fault configs");
}

#[test]
fn validate_reports_the_admissible_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    write(&cfg, small_config());
    let res = pdeobs(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let out = String::from_utf8_lossy(&res.stdout);
    assert!(out.contains("admissible target decay"), "{out}");
    assert!(out.contains("RESULT: PASS"), "{out}");
}

#[test]
fn validate_names_an_inconsistent_partial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = small_config().replace(
        r#""diffusion": {"offset": 1.0}"#,
        r#""diffusion": {"offset": 1.0, "override_d_r": {"offset": 1.0}}"#,
    );
    let cfg = dir.path().join("scenario.json");
    write(&cfg, &cfg_text);
    let res = pdeobs(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&res.stdout),
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(text.contains("diffusion.d_r"), "field not named: {text}");
}

#[test]
fn zero_kernel_config_writes_zeros_in_one_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = small_config()
        .replace(r#""reaction": {"offset": 2.0}"#, r#""reaction": {"offset": -1.0}"#)
        .replace(
            r#""advection": {"amplitude": 1.0, "radial": {"poly": [0.0, 0.5]}}"#,
            r#""advection": {}"#,
        )
        .replace(r#""target": {"mu_below_bound": 1.0}"#, r#""target": {"mu": -1.0}"#);
    let cfg = dir.path().join("scenario.json");
    write(&cfg, &cfg_text);
    let out = dir.path().join("out");
    let res = pdeobs(&[
        "solve-kernel",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("kernel_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 1);

    let csv = fs::read_to_string(out.join("kernel.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let p: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(p, 0.0);
    }
}

#[test]
fn oracle_flag_adds_comparison_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    write(&cfg, small_config());
    let out = dir.path().join("out");
    let res = pdeobs(&[
        "solve-kernel",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--oracle",
    ]);
    assert!(res.status.success());
    let csv = fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert!(csv.starts_with("t,r,s,p,p_direct,abs_diff"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("kernel_summary.json")).unwrap()).unwrap();
    assert!(summary["oracle_max_abs_diff"].as_f64().unwrap() < 1e-3);
}

#[test]
fn verify_round_trips_a_stored_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    write(&cfg, small_config());
    let kdir = dir.path().join("kernel");
    assert!(pdeobs(&[
        "solve-kernel",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        kdir.to_str().unwrap(),
    ])
    .status
    .success());

    let vdir = dir.path().join("verify");
    let kernel_csv = kdir.join("kernel.csv");
    let res = pdeobs(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--kernel",
        kernel_csv.to_str().unwrap(),
        "--out",
        vdir.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
    let residual: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(vdir.join("residual.json")).unwrap()).unwrap();
    assert_eq!(residual["residual"]["edge_max"], 0.0);

    // The verify residuals must match what solve-kernel reported (same
    // kernel, same checker) to round-off.
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(kdir.join("kernel_summary.json")).unwrap())
            .unwrap();
    let a = residual["residual"]["interior_max"].as_f64().unwrap();
    let b = summary["residual"]["interior_max"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
}

#[test]
fn manifest_is_written_and_marks_completion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    write(&cfg, small_config());
    let out = dir.path().join("out");
    assert!(pdeobs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["completed"], true);
    assert_eq!(manifest["command"], "simulate");
    assert!(manifest["timings_s"]["run"].as_f64().unwrap() >= 0.0);
}

#[test]
fn grid_override_changes_the_kernel_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    write(&cfg, small_config());
    let out = dir.path().join("out");
    assert!(pdeobs(&[
        "solve-kernel",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--grid-n",
        "12",
    ])
    .status
    .success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("kernel_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["grid_n"], 12);
}
