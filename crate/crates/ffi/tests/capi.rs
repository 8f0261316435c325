use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use adp_core::diffusion::dataset::to_demos;
use adp_core::diffusion::{train_toy_denoiser, ScheduleSpec, TrainConfig};
use adp_core::se3::encode;
use adp_core::taskbench::{generate_instance, make_dataset, TaskFamily};
use adp_ffi::*;

fn last_error() -> String {
    let p = adp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cloud(points: &[[f64; 3]]) -> *mut AdpPointCloud {
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { adp_cloud_new(flat.as_ptr(), points.len(), &mut h) }, AdpStatus::Ok);
    h
}

#[test]
fn cloud_lifecycle_and_chamfer() {
    let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    let b = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    let mut n = 0;
    assert_eq!(unsafe { adp_cloud_len(a, &mut n) }, AdpStatus::Ok);
    assert_eq!(n, 2);
    let mut d = -1.0;
    assert_eq!(unsafe { adp_chamfer(a, b, &mut d) }, AdpStatus::Ok);
    assert_eq!(d, 0.0);
    assert!(adp_last_error_message().is_null());
    unsafe {
        adp_cloud_free(a);
        adp_cloud_free(b);
        adp_cloud_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { adp_cloud_new(ptr::null(), 3, &mut h) }, AdpStatus::NullPointer);
    assert!(last_error().contains("null"));
    let nan = [f64::NAN, 0.0, 0.0];
    assert_eq!(unsafe { adp_cloud_new(nan.as_ptr(), 1, &mut h) }, AdpStatus::InvalidArgument);
    assert!(h.is_null());
    let missing = CString::new("/nonexistent/cloud.ply").unwrap();
    assert_eq!(unsafe { adp_cloud_read_ply(missing.as_ptr(), &mut h) }, AdpStatus::Io);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { adp_chamfer(ptr::null(), ptr::null(), ptr::null_mut()) }, AdpStatus::NullPointer);
}

#[test]
fn registration_recovers_identity() {
    let inst = generate_instance(TaskFamily::Reach, 0, 3);
    let pts: Vec<[f64; 3]> = inst.gripper.points().iter().map(|p| [p.x, p.y, p.z]).collect();
    let a = cloud(&pts);
    let b = cloud(&pts);
    let mut r = AdpRegistration::default();
    assert_eq!(unsafe { adp_register(a, b, &mut r) }, AdpStatus::Ok);
    assert!(r.fitness > 0.9);
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((r.matrix[4 * i + j] - want).abs() < 1e-3);
        }
    }
    unsafe {
        adp_cloud_free(a);
        adp_cloud_free(b);
    }
}

#[test]
fn sample_through_handles() {
    let (manifest, eps) = make_dataset(TaskFamily::Reach, 0, 24, 1, 2, 2).unwrap();
    let demos = to_demos(&eps, manifest.n_actions).unwrap();
    let schedule = ScheduleSpec::default().build().unwrap();
    let cfg = TrainConfig {
        steps: 50,
        batch_size: 16,
        ..Default::default()
    };
    let (model, _) = train_toy_denoiser(&demos, &schedule, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.adpw");
    model.save(&path).unwrap();

    let mut d = ptr::null_mut();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { adp_denoiser_load(cpath.as_ptr(), &mut d) }, AdpStatus::Ok);
    let (mut n, mut dim) = (0, 0);
    assert_eq!(unsafe { adp_denoiser_shape(d, &mut n, &mut dim) }, AdpStatus::Ok);
    assert_eq!((n, dim), (2, 10));

    let inst = generate_instance(TaskFamily::Reach, 0, 5);
    let to_pts = |c: &adp_core::pointcloud::PointCloud| c.points().iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>();
    let g = cloud(&to_pts(&inst.gripper));
    let s = cloud(&to_pts(&inst.scene));
    let hist = encode(&inst.start()).unwrap();
    let mut out = vec![0.0; n * dim];
    let call = |mode, init, seed, out: &mut Vec<f64>| unsafe {
        adp_sample_actions(d, g, s, hist.as_ptr(), 1, 0, mode, init, 10, seed, out.as_mut_ptr(), out.len())
    };
    assert_eq!(call(AdpGuidanceMode::GuidedSpherical, AdpInitMode::FgrForwardDiffused, 7, &mut out), AdpStatus::Ok);
    assert!(out.iter().all(|v| v.is_finite()));
    let mut again = vec![0.0; n * dim];
    assert_eq!(call(AdpGuidanceMode::GuidedSpherical, AdpInitMode::FgrForwardDiffused, 7, &mut again), AdpStatus::Ok);
    assert_eq!(out, again);

    let mut short = vec![0.0; 3];
    assert_eq!(call(AdpGuidanceMode::Vanilla, AdpInitMode::RandomNoise, 1, &mut short), AdpStatus::InvalidArgument);
    assert_eq!(
        unsafe { adp_sample_actions(d, g, s, hist.as_ptr(), 1, 0, AdpGuidanceMode::Vanilla, AdpInitMode::RandomNoise, 100_000, 1, out.as_mut_ptr(), out.len()) },
        AdpStatus::InvalidArgument
    );
    unsafe {
        adp_cloud_free(g);
        adp_cloud_free(s);
        adp_denoiser_free(d);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(adp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/adp.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["adp_cloud_new", "adp_sample_actions", "adp_last_error_message", "ADP_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).status() else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}
