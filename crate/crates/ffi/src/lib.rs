//! C ABI over `bevmotion`.
//!
//! Every fallible function returns a [`BmStatus`]; on failure the message is
//! kept per thread and read with [`bm_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Strings returned by the library are freed with
//! [`bm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bevmotion::geometry::{decompose_at_ct, rotated_iou, OrientedBox, Waypoint};
use bevmotion::losses::{gaussian_kl, laplace_kl, ScaleLoss};
use bevmotion::raster::{rasterize_sweeps, write_bvg, BevGrid, GridConfig, LidarSweep};
use bevmotion::synth::{generate, read_scenario, load_sweeps, simulate_all_sweeps, Scenario, ScenarioSpec};
use bevmotion::trainer::{evaluate, EvalConfig, Model, OraclePredictor, Predictor};
use bevmotion::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Domain = 4,
    Config = 5,
    Input = 6,
    Format = 7,
    Parse = 8,
    Io = 9,
    Diverged = 10,
    /// The library panicked; the handle arguments should not be reused.
    Panic = 11,
}

impl From<&Error> for BmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => BmStatus::Domain,
            Error::InvalidArgument(_) => BmStatus::InvalidArgument,
            Error::Config { .. } => BmStatus::Config,
            Error::Input(_) => BmStatus::Input,
            Error::Format { .. } => BmStatus::Format,
            Error::Diverged { .. } => BmStatus::Diverged,
            Error::Io { .. } => BmStatus::Io,
            Error::Parse { .. } => BmStatus::Parse,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Failure carried out of a guarded body.
struct Fail(BmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(BmStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording its error or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> BmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread, or null when the last
/// call succeeded. Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn bm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn bm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Oriented box: center, extent along and across the heading, heading in radians.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmBox {
    pub cx: f64,
    pub cy: f64,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmWaypoint {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
}

/// Loss value and its derivatives with respect to the error and the scale.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BmScaleLoss {
    pub value: f64,
    pub d_error: f64,
    pub d_scale: f64,
}

impl From<ScaleLoss> for BmScaleLoss {
    fn from(l: ScaleLoss) -> Self {
        Self { value: l.value, d_error: l.d_error, d_scale: l.d_scale }
    }
}

fn to_box(b: &BmBox) -> Result<OrientedBox, Fail> {
    Ok(OrientedBox::new(b.cx, b.cy, b.length, b.width, b.heading)?)
}

/// Intersection over union of two oriented boxes.
///
/// # Safety
/// Pointers must be null or valid for the access.
#[no_mangle]
pub unsafe extern "C" fn bm_rotated_iou(a: *const BmBox, b: *const BmBox, out: *mut f64) -> BmStatus {
    guard(|| {
        let a = to_box(ref_arg(a, "a")?)?;
        let b = to_box(ref_arg(b, "b")?)?;
        *out_arg(out, "out")? = rotated_iou(&a, &b);
        Ok(())
    })
}

/// Along-track and cross-track error of `predicted` in the frame of `truth`.
///
/// # Safety
/// Pointers must be null or valid for the access.
#[no_mangle]
pub unsafe extern "C" fn bm_decompose_at_ct(
    predicted: *const BmWaypoint,
    truth: *const BmWaypoint,
    out_at: *mut f64,
    out_ct: *mut f64,
) -> BmStatus {
    guard(|| {
        let p = ref_arg(predicted, "predicted")?;
        let t = ref_arg(truth, "truth")?;
        let e = decompose_at_ct(&Waypoint::new(p.cx, p.cy, p.heading)?, &Waypoint::new(t.cx, t.cy, t.heading)?);
        *out_arg(out_at, "out_at")? = e.at;
        *out_arg(out_ct, "out_ct")? = e.ct;
        Ok(())
    })
}

/// KL divergence from the Laplace label distribution with scale `b_gt` to the
/// predicted one with scale `b_hat`, for a location error `e_hat`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_laplace_kl(e_hat: f64, b_hat: f64, b_gt: f64, out: *mut BmScaleLoss) -> BmStatus {
    guard(|| {
        *out_arg(out, "out")? = laplace_kl(e_hat, b_hat, b_gt)?.into();
        Ok(())
    })
}

/// Gaussian counterpart of [`bm_laplace_kl`] with standard deviations.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_gaussian_kl(e_hat: f64, sigma_hat: f64, sigma_gt: f64, out: *mut BmScaleLoss) -> BmStatus {
    guard(|| {
        *out_arg(out, "out")? = gaussian_kl(e_hat, sigma_hat, sigma_gt)?.into();
        Ok(())
    })
}

/// A scenario with its lidar sweeps.
pub struct BmScene {
    scenario: Scenario,
    sweeps: Vec<LidarSweep>,
}

/// A rasterized occupancy grid.
pub struct BmGrid {
    grid: BevGrid,
}

/// A trained model.
pub struct BmModel {
    model: Model,
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Generates a scenario from a TOML spec (an empty string gives the defaults).
///
/// # Safety
/// `spec_toml` must be null or NUL-terminated; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_scene_generate(spec_toml: *const c_char, out: *mut *mut BmScene) -> BmStatus {
    guard(|| {
        let spec = ScenarioSpec::from_toml(str_arg(spec_toml, "spec_toml")?)?;
        let out = out_arg(out, "out")?;
        let scenario = generate(&spec)?;
        let sweeps = simulate_all_sweeps(&scenario)?;
        *out = boxed(BmScene { scenario, sweeps });
        Ok(())
    })
}

/// Loads a scn-1 scenario and its PTS1 sweeps.
///
/// # Safety
/// `path` must be null or NUL-terminated; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_scene_load(path: *const c_char, out: *mut *mut BmScene) -> BmStatus {
    guard(|| {
        let path = Path::new(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let scenario = read_scenario(path)?;
        let sweeps = load_sweeps(path, &scenario)?;
        *out = boxed(BmScene { scenario, sweeps });
        Ok(())
    })
}

/// Number of frames in `scene`, or 0 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_scene_num_frames(scene: *const BmScene) -> usize {
    scene.as_ref().map_or(0, |s| s.scenario.num_frames())
}

/// Number of actors in `scene`, or 0 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_scene_num_actors(scene: *const BmScene) -> usize {
    scene.as_ref().map_or(0, |s| s.scenario.actors.len())
}

/// The frame predictions are made from, or 0 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_scene_current_frame(scene: *const BmScene) -> usize {
    scene.as_ref().map_or(0, |s| s.scenario.current_frame)
}

/// # Safety
/// `scene` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn bm_scene_free(scene: *mut BmScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Rasterizes the sweeps ending at `frame` into the sensor frame at `frame`.
/// A null `grid_toml` selects the 150 m x 100 m x 3.2 m default grid.
///
/// # Safety
/// `scene` must be null or live; `grid_toml` null or NUL-terminated; `out`
/// null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_grid_rasterize(
    scene: *const BmScene,
    grid_toml: *const c_char,
    frame: usize,
    out: *mut *mut BmGrid,
) -> BmStatus {
    guard(|| {
        let scene = ref_arg(scene, "scene")?;
        let config = match opt_str_arg(grid_toml, "grid_toml")? {
            Some(text) => {
                let c: GridConfig =
                    toml::from_str(text).map_err(|e| Fail(BmStatus::Config, format!("grid config: {e}")))?;
                c.validate()?;
                c
            }
            None => GridConfig::long_range(),
        };
        let out = out_arg(out, "out")?;
        let t = config.num_sweeps;
        if frame >= scene.sweeps.len() || frame + 1 < t {
            return Err(Fail(
                BmStatus::InvalidArgument,
                format!("frame {frame} is out of range for {} sweeps of history", t),
            ));
        }
        let grid = rasterize_sweeps(&scene.sweeps[frame + 1 - t..=frame], &scene.scenario.sensor_pose(frame), &config)?;
        *out = boxed(BmGrid { grid });
        Ok(())
    })
}

/// Writes the grid dimensions; any output pointer may be null.
///
/// # Safety
/// `grid` must be live; outputs null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_grid_shape(
    grid: *const BmGrid,
    rows: *mut usize,
    cols: *mut usize,
    channels: *mut usize,
) -> BmStatus {
    guard(|| {
        let (r, c, ch) = ref_arg(grid, "grid")?.grid.shape();
        for (p, v) in [(rows, r), (cols, c), (channels, ch)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Reads one cell as 0 or 1.
///
/// # Safety
/// `grid` must be live; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_grid_get(
    grid: *const BmGrid,
    row: usize,
    col: usize,
    channel: usize,
    out: *mut u8,
) -> BmStatus {
    guard(|| {
        let g = &ref_arg(grid, "grid")?.grid;
        let (r, c, ch) = g.shape();
        if row >= r || col >= c || channel >= ch {
            return Err(Fail(
                BmStatus::InvalidArgument,
                format!("cell ({row}, {col}, {channel}) is outside the {r} x {c} x {ch} grid"),
            ));
        }
        *out_arg(out, "out")? = g.get(row, col, channel) as u8;
        Ok(())
    })
}

/// Number of occupied cells, or 0 for null.
///
/// # Safety
/// `grid` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn bm_grid_count_occupied(grid: *const BmGrid) -> u64 {
    grid.as_ref()
        .map_or(0, |g| g.grid.words().iter().map(|w| w.count_ones() as u64).sum())
}

/// Saves the grid as a BVG1 file.
///
/// # Safety
/// `grid` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bm_grid_write(grid: *const BmGrid, path: *const c_char) -> BmStatus {
    guard(|| {
        let g = &ref_arg(grid, "grid")?.grid;
        let path = str_arg(path, "path")?;
        let file = std::fs::File::create(path).map_err(|e| Fail(BmStatus::Io, format!("{path}: {e}")))?;
        let mut w = std::io::BufWriter::new(file);
        write_bvg(g, &mut w)
            .and_then(|_| std::io::Write::flush(&mut w))
            .map_err(|e| Fail(BmStatus::Io, format!("{path}: {e}")))
    })
}

/// # Safety
/// `grid` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn bm_grid_free(grid: *mut BmGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Loads a model JSON file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_model_load(path: *const c_char, out: *mut *mut BmModel) -> BmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let text = std::fs::read_to_string(path).map_err(|e| Fail(BmStatus::Io, format!("{path}: {e}")))?;
        *out = boxed(BmModel { model: Model::from_json(&text)? });
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn bm_model_free(model: *mut BmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Evaluates `model` (or the ground-truth oracle when null) on `scenes` and
/// returns the report CSV in `out_csv`, to be freed with [`bm_string_free`].
/// A null `eval_toml` selects the default evaluation settings.
///
/// # Safety
/// `model` null or live; `scenes` an array of `num_scenes` live handles;
/// `eval_toml` null or NUL-terminated; `out_csv` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bm_evaluate(
    model: *const BmModel,
    scenes: *const *const BmScene,
    num_scenes: usize,
    eval_toml: *const c_char,
    out_csv: *mut *mut c_char,
) -> BmStatus {
    guard(|| {
        if scenes.is_null() && num_scenes > 0 {
            return Err(null("scenes"));
        }
        let config = match opt_str_arg(eval_toml, "eval_toml")? {
            Some(text) => {
                let c: EvalConfig =
                    toml::from_str(text).map_err(|e| Fail(BmStatus::Config, format!("eval config: {e}")))?;
                c.validate()?;
                c
            }
            None => EvalConfig::default(),
        };
        let out = out_arg(out_csv, "out_csv")?;
        let mut owned = Vec::with_capacity(num_scenes);
        for i in 0..num_scenes {
            let s = ref_arg(*scenes.add(i), "scene")?;
            owned.push((s.scenario.clone(), s.sweeps.clone()));
        }
        let predictor: &dyn Predictor = match model.as_ref() {
            Some(m) => &m.model,
            None => &OraclePredictor,
        };
        *out = into_c_string(evaluate(predictor, &owned, &config)?.to_csv());
        Ok(())
    })
}
