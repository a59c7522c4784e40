//! C ABI over the swarm-discovery core.
//!
//! Objects are opaque handles created by `sd_*_new`/`sd_*_load` style calls
//! and released with the matching `sd_*_free`. Every fallible call returns an
//! [`SdStatus`]; on failure `sd_last_error` describes the problem for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use swarm_discovery::behavior::hand_features_over;
use swarm_discovery::controller::heuristic::{filter_space, heuristic_score, BoundaryConvention, Thresholds};
use swarm_discovery::controller::{enumerate_discretized, Controller, SensorKind};
use swarm_discovery::discovery::novelty;
use swarm_discovery::nn::{checkpoint, Network};
use swarm_discovery::pipeline::RolloutSettings;
use swarm_discovery::render::render;
use swarm_discovery::sim::{Environment, Trajectory};
use swarm_discovery::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdConvention {
    Strict = 0,
    NonStrict = 1,
}

impl From<SdConvention> for BoundaryConvention {
    fn from(c: SdConvention) -> Self {
        match c {
            SdConvention::Strict => BoundaryConvention::Strict,
            SdConvention::NonStrict => BoundaryConvention::NonStrict,
        }
    }
}

/// Rollout parameters; start from `sd_rollout_settings_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SdRolloutSettings {
    pub width: f64,
    pub height: f64,
    pub agents: usize,
    pub horizon: usize,
    pub window: usize,
    pub image_size: usize,
    pub wheel_radius: f64,
    pub agent_radius: f64,
    pub dt: f64,
}

impl From<RolloutSettings> for SdRolloutSettings {
    fn from(s: RolloutSettings) -> Self {
        SdRolloutSettings {
            width: s.environment.width,
            height: s.environment.height,
            agents: s.environment.agents,
            horizon: s.horizon,
            window: s.window,
            image_size: s.image_size,
            wheel_radius: s.wheel_radius,
            agent_radius: s.agent_radius,
            dt: s.dt,
        }
    }
}

impl From<SdRolloutSettings> for RolloutSettings {
    fn from(s: SdRolloutSettings) -> Self {
        RolloutSettings {
            environment: Environment {
                width: s.width,
                height: s.height,
                agents: s.agents,
            },
            horizon: s.horizon,
            window: s.window,
            image_size: s.image_size,
            wheel_radius: s.wheel_radius,
            agent_radius: s.agent_radius,
            dt: s.dt,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdHeuristic {
    pub metrics: [f64; 5],
    pub score: f64,
    pub passes: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdFilterSummary {
    pub total: u64,
    pub passed: u64,
    pub filtered: u64,
}

/// Opaque controller handle.
pub struct SdController(Controller);

/// Opaque simulated trajectory.
pub struct SdTrajectory(Trajectory);

/// Opaque embedding network loaded from a checkpoint.
pub struct SdEmbedder(Network<f32>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(SdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => SdStatus::Io,
            Error::Format { .. } => SdStatus::Format,
            _ => SdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SdStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SdStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn sd_rollout_settings_default() -> SdRolloutSettings {
    RolloutSettings::default().into()
}

/// Builds a controller from 4 velocities, or 8 velocities followed by the
/// second sensor's angle in radians.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_controller_new(values: *const f64, len: usize, out_handle: *mut *mut SdController) -> SdStatus {
    guard(|| {
        let dst = out(out_handle, "out")?;
        let c = Controller::from_values(slice(values, len, "values")?)?;
        *dst = Box::into_raw(Box::new(SdController(c)));
        Ok(())
    })
}

/// # Safety
/// `c` must come from `sd_controller_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_controller_free(c: *mut SdController) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Heuristic filter report with the default thresholds.
///
/// # Safety
/// `c` must be a live controller handle; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_controller_heuristic(
    c: *const SdController,
    convention: SdConvention,
    report: *mut SdHeuristic,
) -> SdStatus {
    guard(|| {
        let c = handle(c, "controller")?;
        let dst = out(report, "report")?;
        let r = heuristic_score(&c.0, &Thresholds::default(), convention.into());
        *dst = SdHeuristic {
            metrics: r.metrics.0,
            score: r.score,
            passes: r.passes,
        };
        Ok(())
    })
}

/// Scores the whole discretized single-sensor space.
///
/// # Safety
/// `summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_filter_single_sensor_space(convention: SdConvention, summary: *mut SdFilterSummary) -> SdStatus {
    guard(|| {
        let dst = out(summary, "summary")?;
        let s = filter_space(enumerate_discretized(SensorKind::Single), &Thresholds::default(), convention.into());
        *dst = SdFilterSummary {
            total: s.total,
            passed: s.passed,
            filtered: s.filtered,
        };
        Ok(())
    })
}

/// Rolls out `c` from the initial state drawn with `seed`.
///
/// # Safety
/// `c` and `settings` must be valid; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_simulate(
    c: *const SdController,
    settings: *const SdRolloutSettings,
    seed: u64,
    out_handle: *mut *mut SdTrajectory,
) -> SdStatus {
    guard(|| {
        let c = handle(c, "controller")?;
        let s: RolloutSettings = (*handle(settings, "settings")?).into();
        let dst = out(out_handle, "out")?;
        let traj = s.simulate(&c.0, seed)?;
        *dst = Box::into_raw(Box::new(SdTrajectory(traj)));
        Ok(())
    })
}

/// # Safety
/// `t` must come from `sd_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_trajectory_free(t: *mut SdTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of stored frames (horizon + 1); 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn sd_trajectory_frame_count(t: *const SdTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.frames.len())
}

/// # Safety
/// `t` must be null or a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn sd_trajectory_agent_count(t: *const SdTrajectory) -> usize {
    t.as_ref().and_then(|t| t.0.frames.first()).map_or(0, |f| f.agents.len())
}

/// Writes `x, y, theta` for every agent of `frame` into `xyt`, which must
/// hold `3 * agent_count` doubles.
///
/// # Safety
/// `t` must be a live trajectory; `xyt` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_trajectory_frame(t: *const SdTrajectory, frame: usize, xyt: *mut f64, len: usize) -> SdStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        let f = t.0.frames.get(frame).ok_or_else(|| invalid(format!("frame {frame} out of range")))?;
        if len != 3 * f.agents.len() {
            return Err(invalid(format!("buffer holds {len} values, need {}", 3 * f.agents.len())));
        }
        let buf = slice_mut(xyt, len, "xyt")?;
        for (dst, a) in buf.chunks_exact_mut(3).zip(&f.agents) {
            dst.copy_from_slice(&[a.x, a.y, a.theta]);
        }
        Ok(())
    })
}

/// Hand-crafted features averaged over the final `window` frames:
/// average speed, angular momentum, radial variance, scatter, group rotation.
///
/// # Safety
/// `t` must be a live trajectory; `features` must hold 5 doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_trajectory_features(t: *const SdTrajectory, window: usize, features: *mut f64) -> SdStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        let dst = slice_mut(features, 5, "features")?;
        if window == 0 || window >= t.0.frames.len() {
            return Err(invalid(format!("window {window} must be in 1..{}", t.0.frames.len())));
        }
        let f = hand_features_over(&t.0, t.0.frames.len() - window, window)?;
        dst.copy_from_slice(&f.to_array());
        Ok(())
    })
}

/// Renders the final `window` frames into a `size * size` row-major image.
///
/// # Safety
/// `t` must be a live trajectory; `pixels` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn sd_trajectory_render(
    t: *const SdTrajectory,
    window: usize,
    size: usize,
    pixels: *mut f32,
    len: usize,
) -> SdStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        if len != size * size {
            return Err(invalid(format!("buffer holds {len} pixels, need {}", size * size)));
        }
        let img = render(&t.0, window, size)?;
        slice_mut(pixels, len, "pixels")?.copy_from_slice(img.pixels());
        Ok(())
    })
}

/// Loads an embedding network checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_embedder_load(path: *const c_char, out_handle: *mut *mut SdEmbedder) -> SdStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let dst = out(out_handle, "out")?;
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let (net, _) = checkpoint::load(Path::new(path))?;
        *dst = Box::into_raw(Box::new(SdEmbedder(net)));
        Ok(())
    })
}

/// # Safety
/// `e` must come from `sd_embedder_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sd_embedder_free(e: *mut SdEmbedder) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `e` must be null or a live embedder handle.
#[no_mangle]
pub unsafe extern "C" fn sd_embedder_input_len(e: *const SdEmbedder) -> usize {
    e.as_ref().map_or(0, |e| e.0.spec().input_len())
}

/// # Safety
/// `e` must be null or a live embedder handle.
#[no_mangle]
pub unsafe extern "C" fn sd_embedder_output_dim(e: *const SdEmbedder) -> usize {
    e.as_ref().map_or(0, |e| e.0.output_dim())
}

/// Embeds one image.
///
/// # Safety
/// `pixels` must hold `len` floats and `embedding` `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_embedder_embed(
    e: *const SdEmbedder,
    pixels: *const f32,
    len: usize,
    embedding: *mut f64,
    dim: usize,
) -> SdStatus {
    guard(|| {
        let e = handle(e, "embedder")?;
        if dim != e.0.output_dim() {
            return Err(invalid(format!("embedding buffer holds {dim}, network outputs {}", e.0.output_dim())));
        }
        let y = e.0.forward(slice(pixels, len, "pixels")?)?;
        for (d, v) in slice_mut(embedding, dim, "embedding")?.iter_mut().zip(y) {
            *d = v as f64;
        }
        Ok(())
    })
}

/// Mean distance from `behavior` to its `k` nearest archive rows;
/// infinity for an empty archive.
///
/// # Safety
/// `behavior` must hold `dim` doubles and `archive` `rows * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_novelty(
    behavior: *const f64,
    dim: usize,
    archive: *const f64,
    rows: usize,
    k: usize,
    score: *mut f64,
) -> SdStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let b = slice(behavior, dim, "behavior")?;
        let flat = slice(archive, rows * dim, "archive")?;
        let dst = out(score, "score")?;
        let refs: Vec<&[f64]> = flat.chunks_exact(dim).collect();
        *dst = novelty(b, &refs, k);
        Ok(())
    })
}
