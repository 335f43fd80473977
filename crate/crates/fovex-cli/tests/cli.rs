//! End-to-end tests of the `fovex` binary: artifact layout, determinism
//! across workers and seeding paths, evaluation reports, sweeps, external
//! predictors, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use fovex::attribution::Sidecar;
use fovex::imaging::io::save_image;
use fovex::imaging::Image;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fovex")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    cmd.env_remove("FOVEX_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Checkerboard patch on a flat background; strong local contrast for the
/// planted predictor to latch onto.
fn patch_image(size: usize, patch_x: usize, patch_y: usize, patch: usize) -> Image {
    let mut data = vec![0.5; size * size * 3];
    for r in patch_y..patch_y + patch {
        for c in patch_x..patch_x + patch {
            let v = if (r + c) % 2 == 0 { 0.9 } else { 0.1 };
            for ch in 0..3 {
                data[(r * size + c) * 3 + ch] = v;
            }
        }
    }
    Image::new(size, size, 3, data).unwrap()
}

/// Writes `n` patch images and a manifest; entry 0 carries a bbox, none
/// carry gaze data.
fn desk_manifest(dir: &Path, n: usize, size: usize) -> PathBuf {
    let patch = size / 4;
    let mut entries = Vec::new();
    for i in 0..n {
        let offset = 2 + 3 * i;
        let name = format!("img{i}.png");
        save_image(&dir.join(&name), &patch_image(size, offset, offset, patch)).unwrap();
        if i == 0 {
            entries.push(format!(
                r#"{{"image_path": "{name}", "target_class": 0,
                    "bbox": {{"x": {offset}, "y": {offset}, "w": {patch}, "h": {patch}}}}}"#
            ));
        } else {
            entries.push(format!(r#"{{"image_path": "{name}", "target_class": 0}}"#));
        }
    }
    let manifest = format!(
        r#"{{"input_size": {{"height": {size}, "width": {size}}}, "entries": [{}]}}"#,
        entries.join(",")
    );
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest).unwrap();
    path
}

/// Fast config flags shared by the CLI runs.
fn quick_flags() -> Vec<&'static str> {
    vec![
        "--opt-steps",
        "5",
        "--scanpath-length",
        "3",
        "--blur-filter-size",
        "9",
        "--sigma-blur",
        "2.0",
        "--grad-mode",
        "finite-difference",
    ]
}

fn sidecar_without_timing(path: &Path) -> Sidecar {
    let mut sidecar =
        Sidecar::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    sidecar.wall_clock_s = 0.0;
    sidecar
}

#[test]
fn explain_is_deterministic_across_workers_and_seed_sources() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = desk_manifest(dir.path(), 3, 32);
    let m = manifest.to_str().unwrap();
    let outs = ["w1", "w4", "env"];
    // Random restarts force rng draws, so per-entry streams are exercised.
    for (out, workers, seed_args, envs) in [
        (outs[0], "1", vec!["--seed", "5"], vec![]),
        (outs[1], "4", vec!["--seed", "5"], vec![]),
        (outs[2], "2", vec![], vec![("FOVEX_SEED", "5")]),
    ] {
        let out_dir = dir.path().join(out);
        let mut args = vec![
            "explain",
            "--manifest",
            m,
            "--out",
            out_dir.to_str().unwrap(),
            "--workers",
            workers,
            "--random-restarts",
            "true",
            "--restart-patience",
            "2",
        ];
        args.extend(quick_flags());
        args.extend(seed_args);
        assert_success(&run(&args, &envs));
    }

    for i in 0..3 {
        let map = format!("{i:04}_img{i}_map.png");
        let overlay = format!("{i:04}_img{i}_overlay.png");
        let sidecar = format!("{i:04}_img{i}_sidecar.json");
        let reference_map = std::fs::read(dir.path().join(outs[0]).join(&map)).unwrap();
        let reference_overlay = std::fs::read(dir.path().join(outs[0]).join(&overlay)).unwrap();
        let reference_sidecar = sidecar_without_timing(&dir.path().join(outs[0]).join(&sidecar));
        for out in &outs[1..] {
            assert_eq!(
                std::fs::read(dir.path().join(out).join(&map)).unwrap(),
                reference_map,
                "map {i} differs in {out}"
            );
            assert_eq!(
                std::fs::read(dir.path().join(out).join(&overlay)).unwrap(),
                reference_overlay,
                "overlay {i} differs in {out}"
            );
            assert_eq!(
                sidecar_without_timing(&dir.path().join(out).join(&sidecar)),
                reference_sidecar,
                "sidecar {i} differs in {out}"
            );
        }
    }
}

#[test]
fn evaluate_reports_means_and_exclusion_counts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = desk_manifest(dir.path(), 3, 32);
    let m = manifest.to_str().unwrap();
    let maps = dir.path().join("maps");
    let mut explain_args = vec!["explain", "--manifest", m, "--out", maps.to_str().unwrap()];
    explain_args.extend(quick_flags());
    assert_success(&run(&explain_args, &[]));

    let out = run(
        &[
            "evaluate",
            "--manifest",
            m,
            "--maps",
            maps.to_str().unwrap(),
            "--metrics",
            "all",
            "--step-fraction",
            "0.25",
        ],
        &[],
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(maps.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["total"], 3);
    assert_eq!(report["failed"], 0);
    // No gaze anywhere: NSS/AUCJ excluded for all rows, mean absent.
    assert_eq!(report["summary"]["nss"]["excluded"], 3);
    assert!(report["summary"]["nss"]["mean"].is_null());
    assert_eq!(report["summary"]["aucj"]["excluded"], 3);
    // Only entry 0 has a bbox.
    assert_eq!(report["summary"]["ebpg"]["excluded"], 2);
    assert!(report["summary"]["ebpg"]["mean"].is_number());
    // Faithfulness metrics never need ground truth.
    assert_eq!(report["summary"]["delete"]["excluded"], 0);
    let csv = std::fs::read_to_string(maps.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 2, "header, rows, mean, excluded");
}

#[test]
fn constant_predictor_pins_both_curve_aucs_at_p() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = desk_manifest(dir.path(), 2, 16);
    let m = manifest.to_str().unwrap();
    let maps = dir.path().join("maps");
    let mut explain_args = vec![
        "explain",
        "--manifest",
        m,
        "--out",
        maps.to_str().unwrap(),
        "--predictor",
        "builtin:constant",
    ];
    explain_args.extend(quick_flags());
    assert_success(&run(&explain_args, &[]));
    let out = run(
        &[
            "evaluate",
            "--manifest",
            m,
            "--maps",
            maps.to_str().unwrap(),
            "--predictor",
            "builtin:constant",
            "--metrics",
            "delete,insert",
            "--step-fraction",
            "0.5",
        ],
        &[],
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(maps.join("report.json")).unwrap()).unwrap();
    for row in report["rows"].as_array().unwrap() {
        // Two classes at equal logits: p = 0.5 along the whole trajectory.
        assert_eq!(row["metrics"]["delete_auc"], 0.5);
        assert_eq!(row["metrics"]["insert_auc"], 0.5);
    }
}

#[test]
fn sweep_emits_long_format_rows_and_zero_lr_fixations_stay_at_init() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = desk_manifest(dir.path(), 2, 16);
    let m = manifest.to_str().unwrap();
    let out_dir = dir.path().join("sweep");
    let mut args = vec![
        "sweep",
        "--manifest",
        m,
        "--out",
        out_dir.to_str().unwrap(),
        "--param",
        "lr=0,0.1",
        "--param",
        "scanpath-length=2",
        "--metrics",
        "ebpg,insert",
        "--step-fraction",
        "0.5",
    ];
    args.extend(quick_flags());
    assert_success(&run(&args, &[]));

    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "parameter,value,metric,mean");
    // 3 one-at-a-time runs x 2 metrics.
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[1].starts_with("lr,0,ebpg"));
    assert_eq!(csv.matches("scanpath-length").count(), 2);

    // The lr=0 run's sidecars must show every fixation at the center init.
    for i in 0..2 {
        let sidecar_path =
            out_dir.join("runs").join("lr=0").join(format!("{i:04}_img{i}_sidecar.json"));
        let sidecar =
            Sidecar::from_json(&std::fs::read_to_string(&sidecar_path).unwrap()).unwrap();
        assert!(!sidecar.fixations.is_empty());
        for f in &sidecar.fixations {
            assert_eq!((f.x, f.y), (0.5, 0.5), "{}", sidecar_path.display());
        }
    }
}

#[test]
fn exec_and_tcp_predictors_work_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = desk_manifest(dir.path(), 2, 16);
    let m = manifest.to_str().unwrap();

    // exec: the stub rides the same binary over stdio.
    let spec = format!(
        "exec:{} stub-predictor --kind linear --classes 3 \
         --input-height 16 --input-width 16 --input-channels 3 --predictor-seed 3",
        bin()
    );
    let out_exec = dir.path().join("exec");
    let mut args = vec![
        "explain",
        "--manifest",
        m,
        "--out",
        out_exec.to_str().unwrap(),
        "--predictor",
        &spec,
        "--workers",
        "2",
    ];
    args.extend(quick_flags());
    assert_success(&run(&args, &[]));
    assert!(out_exec.join("0000_img0_map.png").is_file());
    assert!(out_exec.join("0001_img1_map.png").is_file());

    // tcp: spawn the listener, scrape the announced port, point explain at it.
    let mut server = Command::new(bin())
        .args([
            "stub-predictor",
            "--kind",
            "linear",
            "--listen",
            "tcp:127.0.0.1:0",
            "--classes",
            "3",
            "--input-height",
            "16",
            "--input-width",
            "16",
            "--input-channels",
            "3",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let addr = {
        use std::io::{BufRead, BufReader};
        let stdout = server.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).unwrap();
        line.trim().strip_prefix("listening ").expect("announcement").to_string()
    };
    let spec = format!("tcp:{addr}");
    let out_tcp = dir.path().join("tcp");
    let mut args = vec![
        "explain",
        "--manifest",
        m,
        "--out",
        out_tcp.to_str().unwrap(),
        "--predictor",
        &spec,
        "--workers",
        "2",
    ];
    args.extend(quick_flags());
    let result = run(&args, &[]);
    server.kill().ok();
    server.wait().ok();
    assert_success(&result);
    assert!(out_tcp.join("0001_img1_map.png").is_file());
}

#[test]
fn exit_codes_distinguish_usage_errors_from_failures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = desk_manifest(dir.path(), 1, 16);
    let m = manifest.to_str().unwrap();

    // Unknown flag: clap usage error.
    let out = run(&["explain", "--manifest", m, "--frobnicate"], &[]);
    assert_eq!(out.status.code(), Some(2));

    // Missing manifest: invalid arguments.
    let out = run(
        &["explain", "--manifest", "/nonexistent/manifest.json", "--out", "/tmp/x"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));

    // Bad config value: invalid arguments.
    let out_dir = dir.path().join("bad");
    let out = run(
        &[
            "explain",
            "--manifest",
            m,
            "--out",
            out_dir.to_str().unwrap(),
            "--blur-filter-size",
            "4",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));

    // Unresolvable sweep parameter: rejected before any run.
    let out = run(
        &[
            "sweep",
            "--manifest",
            m,
            "--out",
            out_dir.to_str().unwrap(),
            "--param",
            "sharpness=1,2",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists(), "no output directory for a rejected sweep");

    // Every entry failing at run time: total failure, not usage.
    let stray = dir.path().join("stray");
    std::fs::create_dir(&stray).unwrap();
    save_image(&stray.join("img.png"), &patch_image(8, 1, 1, 4)).unwrap();
    std::fs::write(
        stray.join("manifest.json"),
        r#"{"input_size": {"height": 16, "width": 16},
            "entries": [{"image_path": "img.png"}]}"#,
    )
    .unwrap();
    let stray_manifest = stray.join("manifest.json");
    let stray_out = stray.join("out");
    let mut args = vec![
        "explain",
        "--manifest",
        stray_manifest.to_str().unwrap(),
        "--out",
        stray_out.to_str().unwrap(),
    ];
    args.extend(quick_flags());
    let out = run(&args, &[]);
    assert_eq!(out.status.code(), Some(1), "stored size contradicts the manifest");

    // Evaluate with no maps anywhere: every row fails.
    let out = run(
        &[
            "evaluate",
            "--manifest",
            m,
            "--maps",
            dir.path().join("empty").to_str().unwrap(),
            "--metrics",
            "drop",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
}
