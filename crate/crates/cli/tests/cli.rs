use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pcrender::image::Image;
use pcrender::metrics::psnr;

fn pcrender(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcrender"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small scene data directory with 32x32 views.
fn data_dir(root: &Path) -> std::path::PathBuf {
    let d = root.join("data");
    let out = pcrender(&[
        "scene",
        "--out-dir",
        p(&d),
        "--points",
        "6000",
        "--views",
        "2",
        "--width",
        "32",
        "--height",
        "32",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    d
}

#[test]
fn usage_errors_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    let csv = t.path().join("a.csv");
    let out = pcrender(&["noise-ablation", "--out", p(&csv), "--sigmas", ""]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma list is empty"));

    let out = pcrender(&["voxelise", "--out-dir", p(t.path()), "--set", "planse=4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did you mean `planes`"));

    assert_eq!(
        pcrender(&["voxelise", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(
        pcrender(&["train", "--crop-h", "30"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_files_exit_with_one() {
    let t = tempfile::tempdir().unwrap();
    let out = pcrender(&[
        "voxelise",
        "--cloud",
        "/missing.ply",
        "--poses",
        "/missing.txt",
        "--intrinsics",
        "/missing.txt",
        "--out-dir",
        p(t.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/missing.ply"));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let t = tempfile::tempdir().unwrap();
    let d = data_dir(t.path());
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "# planes from the file\nplanes = 6\nmu_f = 0.5\n").unwrap();
    let a = t.path().join("a");
    let out = pcrender(&[
        "voxelise",
        "--config",
        p(&cfg),
        "--data-dir",
        p(&d),
        "--out-dir",
        p(&a),
        "--view",
        "0",
    ]);
    assert!(out.status.success());
    let v = pcrender::voxelisation::MultiPlaneVolume::load(&a.join("view_0000.mpv")).unwrap();
    assert_eq!(v.planes, 6);
    let out = pcrender(&[
        "voxelise",
        "--config",
        p(&cfg),
        "--data-dir",
        p(&d),
        "--out-dir",
        p(&a),
        "--view",
        "0",
        "--planes",
        "5",
    ]);
    assert!(out.status.success());
    let v = pcrender::voxelisation::MultiPlaneVolume::load(&a.join("view_0000.mpv")).unwrap();
    assert_eq!(v.planes, 5);
    fs::write(&cfg, "planes = 6\nmu_ff = 0.5\n").unwrap();
    let out = pcrender(&["voxelise", "--config", p(&cfg), "--out-dir", p(&a)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn voxelise_is_deterministic_and_defaults_to_32_planes() {
    let t = tempfile::tempdir().unwrap();
    let d = data_dir(t.path());
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for dir in [&a, &b] {
        let out = pcrender(&["voxelise", "--data-dir", p(&d), "--out-dir", p(dir)]);
        assert!(out.status.success());
    }
    for name in ["view_0000.mpv", "view_0001.mpv", "view_0000_raster.png"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let v = pcrender::voxelisation::MultiPlaneVolume::load(&a.join("view_0000.mpv")).unwrap();
    assert_eq!((v.planes, v.height, v.width, v.channels), (32, 32, 32, 3));

    let c = t.path().join("c");
    assert!(pcrender(&[
        "voxelise",
        "--data-dir",
        p(&d),
        "--out-dir",
        p(&c),
        "--mu-f",
        "0"
    ])
    .status
    .success());
    assert_ne!(
        fs::read(a.join("view_0000.mpv")).unwrap(),
        fs::read(c.join("view_0000.mpv")).unwrap()
    );
}

#[test]
fn noise_ablation_writes_csv_and_plot() {
    let t = tempfile::tempdir().unwrap();
    let (csv, png) = (t.path().join("a.csv"), t.path().join("a.png"));
    let out = pcrender(&[
        "noise-ablation",
        "--points",
        "20000",
        "--out",
        p(&csv),
        "--plot",
        p(&png),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "noise_std,spatial_only_err,noise_resistant_err");
    assert_eq!(lines.len(), 6);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[2] < v[1], "{l}");
    }
    let plot = Image::load_png(&png).unwrap();
    assert_eq!((plot.width, plot.height), (480, 320));
}

#[test]
fn spectra_and_metrics() {
    let t = tempfile::tempdir().unwrap();
    let d = data_dir(t.path());
    let img = d.join("images/view_0000.png");
    let sp = t.path().join("sp");
    assert!(
        pcrender(&["spectra", "--image", p(&img), "--out-dir", p(&sp)])
            .status
            .success()
    );
    assert_eq!(
        fs::read(sp.join("magnitude_32x32.f32")).unwrap().len(),
        32 * 32 * 4
    );
    for b in ["ll", "hl", "lh", "hh"] {
        assert!(sp.join(format!("{b}.png")).exists());
        assert_eq!(
            fs::read(sp.join(format!("{b}_16x16.f32"))).unwrap().len(),
            16 * 16 * 4
        );
    }
    let out = pcrender(&["metrics", p(&img), p(&img)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "psnr,ssim,sharp_gen,sharp_ref");
    let row: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 99.0);
    assert!((row[1] - 1.0).abs() < 1e-12);
    assert_eq!(row[2], row[3]);
}

fn train(d: &Path, run: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data-dir",
        p(d),
        "--out-dir",
        p(run),
        "--planes",
        "4",
        "--crop-h",
        "32",
        "--crop-w",
        "32",
        "--set",
        "gen_widths=4,8,8",
        "--checkpoint-every",
        "5",
        "--snapshot-every",
        "5",
    ];
    args.extend_from_slice(extra);
    pcrender(&args)
}

#[test]
fn train_writes_run_layout_and_resume_matches() {
    let t = tempfile::tempdir().unwrap();
    let d = data_dir(t.path());
    let (full, part) = (t.path().join("full"), t.path().join("part"));
    let out = train(&d, &full, &["--max-steps", "10"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "checkpoints/step_000005.ckpt",
        "checkpoints/latest.ckpt",
        "snapshots/step_000010.png",
        "losses.csv",
        "config.txt",
    ] {
        assert!(full.join(f).exists(), "{f}");
    }
    let snap = Image::load_png(&full.join("snapshots/step_000005.png")).unwrap();
    assert_eq!((snap.width, snap.height), (96, 32));

    assert!(train(&d, &part, &["--max-steps", "5"]).status.success());
    let ckpt = part.join("checkpoints/step_000005.ckpt");
    let out = pcrender(&[
        "train",
        "--config",
        p(&part.join("config.txt")),
        "--resume",
        p(&ckpt),
        "--max-steps",
        "10",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read(full.join("checkpoints/latest.ckpt")).unwrap(),
        fs::read(part.join("checkpoints/latest.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(full.join("losses.csv")).unwrap(),
        fs::read_to_string(part.join("losses.csv")).unwrap()
    );

    let out = train(
        &d,
        &part,
        &[
            "--resume",
            p(&ckpt),
            "--set",
            "gen_widths=8,8,8",
            "--max-steps",
            "10",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("- layers[enc1].out_channels = 8")
            && err.contains("+ layers[enc1].out_channels = 4"),
        "{err}"
    );
}

#[test]
fn render_is_deterministic_improves_with_training_and_handles_empty_views() {
    let t = tempfile::tempdir().unwrap();
    let d = data_dir(t.path());
    let (before, after) = (t.path().join("before"), t.path().join("after"));
    assert!(train(&d, &before, &["--max-steps", "0"]).status.success());
    assert!(
        train(&d, &after, &["--max-steps", "60", "--domains", "rgb"])
            .status
            .success()
    );

    let render = |run: &Path, out: &Path, data: &Path| {
        pcrender(&[
            "render",
            "--checkpoint",
            p(&run.join("checkpoints/latest.ckpt")),
            "--data-dir",
            p(data),
            "--planes",
            "4",
            "--out-dir",
            p(out),
        ])
    };
    let (r0, r1, r2) = (
        t.path().join("r0"),
        t.path().join("r1"),
        t.path().join("r2"),
    );
    assert!(render(&before, &r0, &d).status.success());
    assert!(render(&after, &r1, &d).status.success());
    assert!(render(&after, &r2, &d).status.success());
    assert_eq!(
        fs::read(r1.join("view_0000.png")).unwrap(),
        fs::read(r2.join("view_0000.png")).unwrap()
    );

    let gt = Image::load_png(&d.join("images/view_0000.png")).unwrap();
    let q0 = psnr(
        &Image::load_png(&r0.join("view_0000.png")).unwrap(),
        &gt,
        1.0,
    )
    .unwrap();
    let q1 = psnr(
        &Image::load_png(&r1.join("view_0000.png")).unwrap(),
        &gt,
        1.0,
    )
    .unwrap();
    assert!(q1 > q0, "trained {q1} vs untrained {q0}");

    // camera pushed far behind everything
    let away = t.path().join("away");
    fs::create_dir_all(&away).unwrap();
    fs::copy(d.join("cloud.ply"), away.join("cloud.ply")).unwrap();
    fs::copy(d.join("intrinsics.txt"), away.join("intrinsics.txt")).unwrap();
    fs::write(away.join("poses.txt"), "1 0 0 0 0 1 0 0 0 0 1 -100\n").unwrap();
    let r3 = t.path().join("r3");
    let out = render(&after, &r3, &away);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no points visible"));
    let black = Image::load_png(&r3.join("view_0000.png")).unwrap();
    assert!(black.data.iter().all(|&v| v == 0.0));
}

#[test]
fn help_lists_defaults() {
    for (cmd, needle) in [
        ("voxelise", "[default: 32]"),
        ("train", "[default: 0.002]"),
        ("train", "[default: 25]"),
        ("train", "[default: 64]"),
        ("noise-ablation", "[default: 0.002,0.005,0.01,0.02,0.05]"),
    ] {
        let out = pcrender(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains(needle), "{cmd}: {needle}");
    }
}
