use std::path::Path;
use std::process::{Command, Output};

use physnet_core::voxel::{render_depth, CameraPose, VoxelGrid};

fn physnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_physnet")).args(args).current_dir(cwd).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn slab(n: usize) -> VoxelGrid {
    VoxelGrid::from_fn(n, 1.0 / n as f64, |x, y, z| (2..n - 2).contains(&x) && (4..n - 4).contains(&y) && z < n / 3).unwrap()
}

/// Generates the dense modulus preset at 8³ and trains zero iterations on it.
fn untrained_model(dir: &Path) {
    let o = physnet(&["generate", "--preset", "dense_modulus", "--resolution", "8", "--out", "ds"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = physnet(&["train", "--dataset", "ds", "--out", "run", "--iterations", "0"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.join("run/best.ckpt").exists());
    assert!(dir.join("run/condition.json").exists());
}

#[test]
fn generate_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "--preset", "dense_modulus", "--resolution", "8", "--out", "ds"];
    assert!(physnet(&args, dir.path()).status.success());
    let again = physnet(&args, dir.path());
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(physnet(&forced, dir.path()).status.success());
}

#[test]
fn predict_writes_grid_and_binary_companion() {
    let dir = tempfile::tempdir().unwrap();
    untrained_model(dir.path());
    slab(8).save(&dir.path().join("in.vxg")).unwrap();
    let o = physnet(
        &["predict", "--model", "run/best.ckpt", "--input", "in.vxg", "--condition", "2e-5,0.3,0,0", "--target", "in.vxg", "--out", "out.vxg"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("forward pass:"));
    assert!(stdout.contains("IOU:"));
    let out = VoxelGrid::load(&dir.path().join("out.vxg")).unwrap();
    let bin = VoxelGrid::load(&dir.path().join("out.binary.vxg")).unwrap();
    assert_eq!(out.resolution(), 8);
    assert!(bin.values().iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn predict_accepts_depth_images() {
    let dir = tempfile::tempdir().unwrap();
    untrained_model(dir.path());
    let depth = render_depth(&slab(8), &CameraPose::new([0.0, 0.0, 0.0]).unwrap());
    depth.save(&dir.path().join("view.vxd")).unwrap();
    let o = physnet(&["predict", "--model", "run/best.ckpt", "--input", "view.vxd", "--condition", "2e-5,0.3,0,0", "--out", "out.vxg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out.vxg").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    untrained_model(dir.path());
    let d = dir.path();
    std::fs::write(d.join("bad.vxg"), b"NOPE0000000000000000").unwrap();
    let bad_magic = physnet(&["predict", "--model", "run/best.ckpt", "--input", "bad.vxg", "--condition", "2e-5,0.3,0,0"], d);
    assert_eq!(bad_magic.status.code(), Some(2));
    assert!(stderr(&bad_magic).contains("magic"));

    slab(8).save(&d.join("in.vxg")).unwrap();
    for (condition, field) in [("2e-5,0.6,1,0", "nu"), ("-1,0.3,1,0", "E"), ("2e-5,0.3,-1,0", "F"), ("2e-5,0.3,1,7", "loc")] {
        let o = physnet(&["predict", "--model", "run/best.ckpt", "--input", "in.vxg", "--condition", condition], d);
        assert_eq!(o.status.code(), Some(2), "{condition}: {}", stderr(&o));
        assert!(stderr(&o).contains(&format!("field {field}")), "{condition}: {}", stderr(&o));
    }

    let unknown = physnet(&["experiment", "no_such_experiment"], d);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("partial_vs_cascaded"));
}

#[test]
fn bundle_without_reconstructor_predicts() {
    let dir = tempfile::tempdir().unwrap();
    untrained_model(dir.path());
    let d = dir.path();
    let o = physnet(&["bundle", "--deformation", "run/best.ckpt", "--out", "cascade"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    slab(8).save(&d.join("in.vxg")).unwrap();
    let o = physnet(&["predict", "--pipeline", "cascade", "--input", "in.vxg", "--condition", "2e-5,0.3,0,0", "--out", "out.vxg"], d);
    assert!(o.status.success(), "{}", stderr(&o));
}
