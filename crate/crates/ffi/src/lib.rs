//! C ABI over `adp-core`.
//!
//! Every function returns an [`AdpStatus`]. On failure, a message is kept per
//! thread and can be read with [`adp_last_error_message`]. Handles are opaque;
//! each `*_new`/`*_load` has a matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use adp_core::diffusion::{Observation, ToyDenoiser};
use adp_core::error::Error;
use adp_core::guidance::{adp_sample, GuidanceConfig, GuidanceMode, InitMode};
use adp_core::pointcloud::{chamfer, read_ply, PointCloud};
use adp_core::registration::{fgr_register, FgrConfig};
use adp_core::rng;
use adp_core::se3::ACTION_DIM;
use nalgebra::Vector3;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    Invariant = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdpGuidanceMode {
    Vanilla = 0,
    GuidedNoisy = 1,
    GuidedTweedie = 2,
    GuidedSpherical = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdpInitMode {
    RandomNoise = 0,
    FgrDirect = 1,
    FgrForwardDiffused = 2,
}

/// Opaque point cloud.
pub struct AdpPointCloud(Arc<PointCloud>);

/// Opaque trained denoiser with its noise schedule.
pub struct AdpDenoiser {
    model: ToyDenoiser,
    schedule: adp_core::diffusion::NoiseSchedule,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AdpRegistration {
    /// Row-major 4×4 transform mapping source onto target.
    pub matrix: [f64; 16],
    pub fitness: f64,
    pub inlier_rmse: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AdpStatus {
    match e {
        Error::Io { .. } => AdpStatus::Io,
        Error::Format { .. } => AdpStatus::Format,
        Error::AlphaBarUnderflow { .. } | Error::Diverged { .. } | Error::Denoiser(_) => AdpStatus::Numerical,
        Error::Invariant(_) => AdpStatus::Invariant,
        _ => AdpStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AdpStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            AdpStatus::NullPointer
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(m);
            AdpStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            AdpStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail::Arg("path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn adp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Cloud from `n` points stored as `xyz[3*i..3*i+3]`.
///
/// # Safety
/// `xyz` must point to `3*n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adp_cloud_new(xyz: *const f64, n: usize, out: *mut *mut AdpPointCloud) -> AdpStatus {
    guard(|| {
        let v = slice_arg(xyz, n.checked_mul(3).ok_or(Fail::Arg("size overflow".into()))?, "xyz")?;
        let pts = v.chunks_exact(3).map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        store(out, AdpPointCloud(Arc::new(PointCloud::new(pts)?)))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adp_cloud_read_ply(path: *const c_char, out: *mut *mut AdpPointCloud) -> AdpStatus {
    guard(|| {
        let p = path_arg(path)?;
        store(out, AdpPointCloud(Arc::new(read_ply(&p)?)))
    })
}

/// # Safety
/// `cloud` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adp_cloud_len(cloud: *const AdpPointCloud, out: *mut usize) -> AdpStatus {
    guard(|| {
        let c = ref_arg(cloud, "cloud")?;
        *out.as_mut().ok_or(Fail::Null("out"))? = c.0.len();
        Ok(())
    })
}

/// # Safety
/// `cloud` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adp_cloud_free(cloud: *mut AdpPointCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Symmetric mean squared nearest-neighbour distance.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adp_chamfer(a: *const AdpPointCloud, b: *const AdpPointCloud, out: *mut f64) -> AdpStatus {
    guard(|| {
        let v = chamfer(&ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0)?;
        *out.as_mut().ok_or(Fail::Null("out"))? = v;
        Ok(())
    })
}

/// FGR with default settings.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adp_register(source: *const AdpPointCloud, target: *const AdpPointCloud, out: *mut AdpRegistration) -> AdpStatus {
    guard(|| {
        let r = fgr_register(&ref_arg(source, "source")?.0, &ref_arg(target, "target")?.0, &FgrConfig::default())?;
        *out.as_mut().ok_or(Fail::Null("out"))? = AdpRegistration {
            matrix: r.pose.to_matrix4(),
            fitness: r.fitness,
            inlier_rmse: r.inlier_rmse,
        };
        Ok(())
    })
}

/// Load weights written by `adp train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adp_denoiser_load(path: *const c_char, out: *mut *mut AdpDenoiser) -> AdpStatus {
    guard(|| {
        let model = ToyDenoiser::load(&path_arg(path)?)?;
        let schedule = model.meta().schedule.build()?;
        store(out, AdpDenoiser { model, schedule })
    })
}

/// Actions per sample and scalars per action.
///
/// # Safety
/// `d` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn adp_denoiser_shape(d: *const AdpDenoiser, n_actions: *mut usize, action_dim: *mut usize) -> AdpStatus {
    guard(|| {
        let d = ref_arg(d, "denoiser")?;
        *n_actions.as_mut().ok_or(Fail::Null("n_actions"))? = d.model.meta().n_actions;
        *action_dim.as_mut().ok_or(Fail::Null("action_dim"))? = ACTION_DIM;
        Ok(())
    })
}

/// # Safety
/// `d` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn adp_denoiser_free(d: *mut AdpDenoiser) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Draw one action sequence.
///
/// `history` holds `n_history` encoded poses of `ACTION_DIM` scalars each,
/// oldest first. `steps` is the respaced step count; 0 keeps the trained
/// schedule. The result is written to `out[0..out_len]`, where `out_len` must
/// equal `n_actions * action_dim`.
///
/// # Safety
/// Handles must be live; `history` must hold `n_history * ACTION_DIM`
/// doubles and `out` `out_len` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn adp_sample_actions(
    d: *const AdpDenoiser,
    gripper: *const AdpPointCloud,
    scene: *const AdpPointCloud,
    history: *const f64,
    n_history: usize,
    task_id: u32,
    mode: AdpGuidanceMode,
    init: AdpInitMode,
    steps: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> AdpStatus {
    guard(|| {
        let d = ref_arg(d, "denoiser")?;
        let h = slice_arg(history, n_history.checked_mul(ACTION_DIM).ok_or(Fail::Arg("size overflow".into()))?, "history")?;
        let hist: Vec<[f64; ACTION_DIM]> = h.chunks_exact(ACTION_DIM).map(|c| c.try_into().expect("chunk size")).collect();
        let obs = Observation::new(ref_arg(gripper, "gripper")?.0.clone(), ref_arg(scene, "scene")?.0.clone(), hist, task_id)?;
        let n = d.model.meta().n_actions;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        if out_len != n * ACTION_DIM {
            return Err(Fail::Arg(format!("out_len {out_len} != {}", n * ACTION_DIM)));
        }
        let schedule = if steps == 0 { d.schedule.clone() } else { d.schedule.respace(steps)? };
        let mode = match mode {
            AdpGuidanceMode::Vanilla => GuidanceMode::Vanilla,
            AdpGuidanceMode::GuidedNoisy => GuidanceMode::GuidedNoisy,
            AdpGuidanceMode::GuidedTweedie => GuidanceMode::GuidedTweedie,
            AdpGuidanceMode::GuidedSpherical => GuidanceMode::GuidedSpherical,
        };
        let init_mode = match init {
            AdpInitMode::RandomNoise => InitMode::RandomNoise,
            AdpInitMode::FgrDirect => InitMode::FgrDirect,
            AdpInitMode::FgrForwardDiffused => InitMode::FgrForwardDiffused,
        };
        let cfg = GuidanceConfig {
            mode,
            init_mode,
            ..Default::default()
        };
        let (x, _) = adp_sample(&d.model, &obs, &schedule, n, &cfg, &mut rng::seeded(seed)).map_err(Error::from)?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(x.as_slice());
        Ok(())
    })
}
