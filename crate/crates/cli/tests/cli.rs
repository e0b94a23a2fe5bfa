use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim3d")).args(args).env_remove("SIM3D_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sim3d(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = sim3d(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "one-line error expected: {err}");
    err
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn raw_len(path: &Path) -> u64 {
    fs::metadata(path).unwrap().len()
}

#[test]
fn tiny_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = d.join("truth");
    ok(&["--preset", "tiny", "phantom", "--out", p(&truth)]);
    assert_eq!(raw_len(&d.join("truth.raw")), 32 * 32 * 32 * 4);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("truth.json")).unwrap()).unwrap();
    assert_eq!(side["dims"], serde_json::json!([32, 32, 32]));

    let acq = d.join("acq");
    ok(&["--preset", "tiny", "simulate", "--object", p(&truth), "--out", p(&acq), "--snr-db", "15", "--seed", "42"]);
    let raws = fs::read_dir(&acq).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "raw").count();
    assert_eq!(raws, 15);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(acq.join("acquisition.json")).unwrap()).unwrap();
    assert!((manifest["snr_db"].as_f64().unwrap() - 15.0).abs() <= 0.1);
    assert_eq!(raw_len(&acq.join("raw_t0_p0.raw")), 16 * 16 * 16 * 4);

    let rec = d.join("mbpc");
    ok(&["--preset", "tiny", "reconstruct", "--data", p(&acq), "--out", p(&rec), "--method", "mbpc", "--iters", "8"]);
    let trace = fs::read_to_string(d.join("mbpc.trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iteration,cost,alpha,gamma,grad_norm");
    assert_eq!(trace.lines().count(), 9);
    let bytes = fs::read(d.join("mbpc.raw")).unwrap();
    assert!(bytes.chunks(4).all(|c| f32::from_le_bytes(c.try_into().unwrap()) >= 0.0));

    let report = d.join("report.json");
    ok(&["--preset", "tiny", "evaluate", "--truth", p(&truth), "--restored", p(&rec), "--out", p(&report)]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let (mse, ssim) = (r["mse"].as_f64().unwrap(), r["ssim"].as_f64().unwrap());
    assert!(mse > 0.0 && mse < 1.0 / 32768.0, "{mse}");
    assert!(ssim > 0.0 && ssim < 1.0);

    let png = d.join("slice.png");
    let csv = d.join("profiles.csv");
    ok(&["--preset", "tiny", "export-slice", "--volume", p(&rec), "--out", p(&png), "--profiles", p(&csv), "--anchor", "beads"]);
    assert!(fs::metadata(&png).unwrap().len() > 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 32);
}

#[test]
fn identical_volumes_evaluate_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("t");
    ok(&["--preset", "tiny", "phantom", "--out", p(&truth)]);
    let json = ok(&["--preset", "tiny", "evaluate", "--truth", p(&truth), "--restored", p(&truth)]);
    let r: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(r["mse"].as_f64(), Some(0.0));
    assert!((r["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn reduced_scheme_writes_five_images_and_rejects_gwf() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = d.join("t");
    ok(&["--preset", "tiny", "phantom", "--out", p(&truth)]);
    let acq = d.join("acq");
    ok(&["--preset", "tiny", "simulate", "--object", p(&truth), "--out", p(&acq), "--scheme", "reduced5", "--snr-db", "inf"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(acq.join("acquisition.json")).unwrap()).unwrap();
    assert_eq!(manifest["images"].as_array().unwrap().len(), 5);
    assert!(manifest["snr_db"].is_null());
    let err = fails(&["--preset", "tiny", "reconstruct", "--data", p(&acq), "--out", p(&d.join("g")), "--method", "gwf"]);
    assert!(err.starts_with("error[scheme]:"), "{err}");
    ok(&["--preset", "tiny", "reconstruct", "--data", p(&acq), "--out", p(&d.join("mb")), "--method", "mb", "--iters", "3"]);
}

#[test]
fn full_acquisition_can_be_reduced_at_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = d.join("t");
    ok(&["--preset", "tiny", "phantom", "--out", p(&truth)]);
    let acq = d.join("acq");
    ok(&["--preset", "tiny", "simulate", "--object", p(&truth), "--out", p(&acq)]);
    ok(&["--preset", "tiny", "reconstruct", "--data", p(&acq), "--out", p(&d.join("r7")), "--scheme", "reduced7", "--iters", "3"]);
    ok(&["--preset", "tiny", "reconstruct", "--data", p(&acq), "--out", p(&d.join("g")), "--method", "gwf", "--wiener", "0.05"]);
    assert!(!d.join("g.trace.csv").exists());
}

#[test]
fn grid_mismatch_needs_upsample_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = d.join("t");
    ok(&["--preset", "tiny", "phantom", "--out", p(&truth)]);
    let acq = d.join("acq");
    ok(&["--preset", "tiny", "simulate", "--object", p(&truth), "--out", p(&acq), "--snr-db", "inf"]);
    let coarse = acq.join("raw_t0_p0");
    let err = fails(&["--preset", "tiny", "evaluate", "--truth", p(&truth), "--restored", p(&coarse)]);
    assert!(err.starts_with("error[mismatch]:"), "{err}");
    let json = ok(&["--preset", "tiny", "evaluate", "--truth", p(&truth), "--restored", p(&coarse), "--upsample"]);
    assert!(json.contains("\"ssim\""));
}

#[test]
fn dump_config_round_trips_and_layers() {
    let dir = tempfile::tempdir().unwrap();
    let dumped = ok(&["--preset", "tiny", "--dump-config"]);
    let path = dir.path().join("run.toml");
    fs::write(&path, &dumped).unwrap();
    assert_eq!(ok(&["--config", p(&path), "--dump-config"]), dumped);

    fs::write(&path, "preset = \"tiny\"\n[noise]\nsnr_db = 20.0\nseed = 3\n").unwrap();
    let layered = ok(&["--config", p(&path), "--dump-config", "simulate", "--object", "x", "--out", "y", "--seed", "8"]);
    let v: toml::Table = layered.parse().unwrap();
    assert_eq!(v["noise"]["snr_db"].as_float(), Some(20.0));
    assert_eq!(v["noise"]["seed"].as_integer(), Some(8));
    assert_eq!(v["grid"]["size"].as_array().unwrap()[0].as_integer(), Some(32));

    let desk: toml::Table = ok(&["--dump-config"]).parse().unwrap();
    assert_eq!(desk["preset"].as_str(), Some("desk"));
}

#[test]
fn errors_are_categorized() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(&["--preset", "huge", "--dump-config"]);
    assert!(err.starts_with("error[parameter]:"), "{err}");
    let err = fails(&["--preset", "tiny", "simulate", "--object", "/nonexistent/x", "--out", p(dir.path())]);
    assert!(err.starts_with("error[io]:"), "{err}");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[solver]\nmax_iter = 3\n").unwrap();
    let err = fails(&["--config", p(&bad), "--dump-config"]);
    assert!(err.starts_with("error[config]:"), "{err}");
    let desk_obj = dir.path().join("obj");
    ok(&["--preset", "tiny", "phantom", "--out", p(&desk_obj)]);
    let err = fails(&["--preset", "desk", "simulate", "--object", p(&desk_obj), "--out", p(&dir.path().join("a"))]);
    assert!(err.starts_with("error[mismatch]:"), "{err}");
}

#[test]
fn thread_cap_is_accepted_from_env_and_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_sim3d"))
        .args(["--preset", "tiny", "--dump-config"])
        .env("SIM3D_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    ok(&["--threads", "1", "--preset", "tiny", "--dump-config"]);
    let err = fails(&["--threads", "0", "--preset", "tiny", "--dump-config"]);
    assert!(err.starts_with("error[config]:"), "{err}");
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = d.join("t");
    ok(&["--preset", "tiny", "phantom", "--out", p(&truth)]);
    for tag in ["a", "b"] {
        let acq = d.join(format!("acq_{tag}"));
        ok(&["--preset", "tiny", "simulate", "--object", p(&truth), "--out", p(&acq), "--seed", "11"]);
        ok(&["--preset", "tiny", "reconstruct", "--data", p(&acq), "--out", p(&d.join(tag)), "--iters", "5"]);
    }
    assert_eq!(fs::read(d.join("a.raw")).unwrap(), fs::read(d.join("b.raw")).unwrap());
    assert_eq!(fs::read(d.join("acq_a/raw_t60_p3.raw")).unwrap(), fs::read(d.join("acq_b/raw_t60_p3.raw")).unwrap());
}
