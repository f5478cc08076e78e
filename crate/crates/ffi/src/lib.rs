//! C ABI over `evfusion`.
//!
//! Objects cross the boundary as opaque handles created by `evf_*_new` style
//! functions and released by the matching `evf_*_free`. Every fallible call
//! returns an [`EvfStatus`]; on failure a description is available from
//! [`evf_last_error`] on the calling thread until its next failing call.
//! Panics are caught at the boundary and reported as `EVF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use evfusion::dataset::{CameraModel, Distortion, Frame};
use evfusion::emvs::Provenance;
use evfusion::fusion::{fuse, FillConfig, ProjectedEvents, RangeImage, WeightKernel};
use evfusion::metrics::filling_score;
use evfusion::pipeline::{run_pipeline, run_synth, PipelineConfig};
use evfusion::segmentation::{segment, Connectivity, GrowConfig, LabelMap};
use evfusion::synth::SynthParams;
use evfusion::Error;
use nalgebra::Vector3;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    OutOfRange = 6,
    Numerical = 7,
    EmptyEventWindow = 8,
    Internal = 9,
    Panic = 10,
}

/// Interpolation kernel for region filling.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvfKernel {
    Inverse = 0,
    Gauss = 1,
    Exponential = 2,
}

impl From<EvfKernel> for WeightKernel {
    fn from(k: EvfKernel) -> Self {
        match k {
            EvfKernel::Inverse => WeightKernel::Inverse,
            EvfKernel::Gauss => WeightKernel::Gauss,
            EvfKernel::Exponential => WeightKernel::Exponential,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvfFillConfig {
    pub contour_fraction: f64,
    pub interior_fraction: f64,
    pub ring_width: u32,
    pub kernel: EvfKernel,
    pub sigma: f64,
}

impl From<&EvfFillConfig> for FillConfig {
    fn from(c: &EvfFillConfig) -> Self {
        FillConfig {
            contour_fraction: c.contour_fraction,
            interior_fraction: c.interior_fraction,
            ring_width: c.ring_width as usize,
            kernel: c.kernel.into(),
            sigma: c.sigma,
        }
    }
}

/// Headline numbers of a pipeline run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvfMapSummary {
    pub n1: usize,
    pub n2: usize,
    pub res: usize,
    pub beta: f64,
    pub filled_regions: usize,
    pub regions: usize,
}

/// Opaque camera model.
pub struct EvfCamera(CameraModel);

/// Opaque segmentation result.
pub struct EvfLabelMap(LabelMap);

/// Opaque dense range image.
pub struct EvfRangeImage(RangeImage);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EvfStatus {
    match e {
        Error::Parse { .. } => EvfStatus::Parse,
        Error::InvalidArgument(_) => EvfStatus::InvalidArgument,
        Error::Config(_) => EvfStatus::Config,
        Error::OutOfRange(_) => EvfStatus::OutOfRange,
        Error::Numerical(_) => EvfStatus::Numerical,
        Error::EmptyEventWindow { .. } => EvfStatus::EmptyEventWindow,
        Error::Internal(_) => EvfStatus::Internal,
        Error::Io { .. } | Error::Image { .. } => EvfStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F>(f: F) -> EvfStatus
where
    F: FnOnce() -> Result<(), (EvfStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvfStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {message}"));
            EvfStatus::Panic
        }
    }
}

fn lib<T>(r: evfusion::Result<T>) -> Result<T, (EvfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (EvfStatus, String) {
    (EvfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: String) -> (EvfStatus, String) {
    (EvfStatus::InvalidArgument, message)
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (EvfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (EvfStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn evf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Filling score of `n2` dense points grown from `n1` semi-dense points on
/// a `res`-pixel image.
///
/// # Safety
/// `out_beta` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn evf_filling_score(n1: usize, n2: usize, res: usize, out_beta: *mut f64) -> EvfStatus {
    guard(|| write_out(out_beta, lib(filling_score(n1, n2, res))?, "out_beta"))
}

/// Default fill parameters: 30 % contour, 5 % interior, 3 px ring,
/// inverse-distance kernel, sigma 5.
#[no_mangle]
pub extern "C" fn evf_fill_config_default() -> EvfFillConfig {
    let d = FillConfig::default();
    EvfFillConfig {
        contour_fraction: d.contour_fraction,
        interior_fraction: d.interior_fraction,
        ring_width: d.ring_width as u32,
        kernel: EvfKernel::Inverse,
        sigma: d.sigma,
    }
}

/// Creates a camera with radial-tangential distortion `k1 k2 p1 p2 k3`.
///
/// # Safety
/// `out` must be valid for writes. The handle is released with
/// [`evf_camera_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn evf_camera_new(
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    k1: f64,
    k2: f64,
    p1: f64,
    p2: f64,
    k3: f64,
    out: *mut *mut EvfCamera,
) -> EvfStatus {
    guard(|| {
        let distortion = Distortion { k1, k2, p1, p2, k3 };
        let cam = lib(CameraModel::new(width as usize, height as usize, fx, fy, cx, cy, distortion))?;
        write_out(out, Box::into_raw(Box::new(EvfCamera(cam))), "out")
    })
}

/// # Safety
/// `cam` must be null or a handle from [`evf_camera_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evf_camera_free(cam: *mut EvfCamera) {
    if !cam.is_null() {
        drop(Box::from_raw(cam));
    }
}

/// Pinhole projection (distortion ignored) of a camera-frame point.
/// Fails with `EVF_STATUS_OUT_OF_RANGE` for points not in front of the
/// camera.
///
/// # Safety
/// `cam` must be a live handle; `out_u` and `out_v` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn evf_camera_project(
    cam: *const EvfCamera,
    x: f64,
    y: f64,
    z: f64,
    out_u: *mut f64,
    out_v: *mut f64,
) -> EvfStatus {
    guard(|| {
        let cam = cam.as_ref().ok_or_else(|| null("cam"))?;
        let uv = cam
            .0
            .project(&Vector3::new(x, y, z))
            .ok_or_else(|| (EvfStatus::OutOfRange, format!("point ({x}, {y}, {z}) is behind the camera")))?;
        write_out(out_u, uv.x, "out_u")?;
        write_out(out_v, uv.y, "out_v")
    })
}

/// Camera-frame point at z-depth `depth` on the rectified ray through
/// pixel `(u, v)`. `out_xyz` receives three values.
///
/// # Safety
/// `cam` must be a live handle; `out_xyz` valid for three writes.
#[no_mangle]
pub unsafe extern "C" fn evf_camera_back_project(
    cam: *const EvfCamera,
    u: f64,
    v: f64,
    depth: f64,
    out_xyz: *mut f64,
) -> EvfStatus {
    guard(|| {
        let cam = cam.as_ref().ok_or_else(|| null("cam"))?;
        if out_xyz.is_null() {
            return Err(null("out_xyz"));
        }
        let p = cam.0.back_project(u, v, depth);
        std::slice::from_raw_parts_mut(out_xyz, 3).copy_from_slice(p.as_slice());
        Ok(())
    })
}

/// Region-grows a row-major 8-bit image and drops regions smaller than
/// `min_region_size`. `connectivity` is 4 or 8.
///
/// # Safety
/// `gray` must hold `width * height` bytes; `out` valid for writes. The
/// handle is released with [`evf_label_map_free`].
#[no_mangle]
pub unsafe extern "C" fn evf_segment(
    gray: *const u8,
    width: u32,
    height: u32,
    threshold: u8,
    connectivity: u32,
    min_region_size: u32,
    out: *mut *mut EvfLabelMap,
) -> EvfStatus {
    guard(|| {
        if gray.is_null() {
            return Err(null("gray"));
        }
        let (w, h) = (width as usize, height as usize);
        let data = std::slice::from_raw_parts(gray, w * h).to_vec();
        let frame = lib(Frame::new(0.0, w, h, data))?;
        let cfg = GrowConfig {
            threshold,
            connectivity: lib(Connectivity::try_from(connectivity))?,
            min_region_size: min_region_size as usize,
        };
        let labels = lib(segment(&frame, &cfg))?;
        write_out(out, Box::into_raw(Box::new(EvfLabelMap(labels))), "out")
    })
}

/// # Safety
/// `labels` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evf_label_map_free(labels: *mut EvfLabelMap) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

/// Number of kept regions; labels run from 1 to this value, 0 is invalid.
///
/// # Safety
/// `labels` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evf_label_map_num_regions(labels: *const EvfLabelMap) -> usize {
    labels.as_ref().map_or(0, |l| l.0.num_regions())
}

/// Copies the row-major labels into `out`, which holds `len` entries.
///
/// # Safety
/// `labels` must be a live handle; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn evf_label_map_copy(labels: *const EvfLabelMap, out: *mut u32, len: usize) -> EvfStatus {
    guard(|| {
        let labels = labels.as_ref().ok_or_else(|| null("labels"))?;
        let src = labels.0.labels();
        if out.is_null() {
            return Err(null("out"));
        }
        if len != src.len() {
            return Err(invalid(format!("buffer holds {len} labels, map has {}", src.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(src);
        Ok(())
    })
}

/// Fills the regions of `labels` from sparse depths. `depths` is row-major
/// with the label map's size; entries that are not finite and positive mark
/// pixels without a projected event.
///
/// # Safety
/// `labels` must be a live handle, `depths` hold one value per pixel,
/// `cfg` be readable and `out` valid for writes. The handle is released
/// with [`evf_range_image_free`].
#[no_mangle]
pub unsafe extern "C" fn evf_fuse(
    labels: *const EvfLabelMap,
    depths: *const f32,
    cfg: *const EvfFillConfig,
    out: *mut *mut EvfRangeImage,
) -> EvfStatus {
    guard(|| {
        let labels = &labels.as_ref().ok_or_else(|| null("labels"))?.0;
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if depths.is_null() {
            return Err(null("depths"));
        }
        let (w, h) = (labels.width, labels.height);
        let mut pe = ProjectedEvents::empty(w, h);
        for (i, &d) in std::slice::from_raw_parts(depths, w * h).iter().enumerate() {
            if d.is_finite() && d > 0.0 {
                pe.insert(i % w, i / w, d as f64);
            }
        }
        let result = lib(fuse(labels, &pe, &FillConfig::from(cfg)))?;
        write_out(out, Box::into_raw(Box::new(EvfRangeImage(result.range_image))), "out")
    })
}

/// # Safety
/// `ri` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evf_range_image_free(ri: *mut EvfRangeImage) {
    if !ri.is_null() {
        drop(Box::from_raw(ri));
    }
}

/// Number of pixels with a depth, N2.
///
/// # Safety
/// `ri` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evf_range_image_count(ri: *const EvfRangeImage) -> usize {
    ri.as_ref().map_or(0, |r| r.0.len())
}

/// Copies depths (0 where empty) and provenance codes (0 empty, 1 event,
/// 2 fill) into caller buffers of `len` entries each. Either buffer may be
/// null to skip it.
///
/// # Safety
/// `ri` must be a live handle; non-null buffers valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn evf_range_image_copy(
    ri: *const EvfRangeImage,
    out_depths: *mut f32,
    out_provenance: *mut u8,
    len: usize,
) -> EvfStatus {
    guard(|| {
        let cells = ri.as_ref().ok_or_else(|| null("ri"))?.0.cells();
        if len != cells.len() {
            return Err(invalid(format!("buffers hold {len} pixels, image has {}", cells.len())));
        }
        if !out_depths.is_null() {
            let out = std::slice::from_raw_parts_mut(out_depths, len);
            for (o, c) in out.iter_mut().zip(cells) {
                *o = c.map_or(0.0, |(d, _)| d as f32);
            }
        }
        if !out_provenance.is_null() {
            let out = std::slice::from_raw_parts_mut(out_provenance, len);
            for (o, c) in out.iter_mut().zip(cells) {
                *o = match c {
                    None => 0,
                    Some((_, Provenance::Event)) => 1,
                    Some((_, Provenance::Fill)) => 2,
                };
            }
        }
        Ok(())
    })
}

/// Runs the full pipeline from a config file, writing artifacts to
/// `out_dir` (or the config's `out` when null).
///
/// # Safety
/// `config_path` must be a NUL-terminated path, `out_dir` null or
/// NUL-terminated, `out_summary` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn evf_run_pipeline(
    config_path: *const c_char,
    out_dir: *const c_char,
    out_summary: *mut EvfMapSummary,
) -> EvfStatus {
    guard(|| {
        let path = path_arg(config_path, "config_path")?;
        let mut cfg = lib(PipelineConfig::load(&path))?;
        if !out_dir.is_null() {
            cfg.out = path_arg(out_dir, "out_dir")?;
        }
        let output = lib(run_pipeline(&cfg))?;
        if !out_summary.is_null() {
            let r = &output.report;
            out_summary.write(EvfMapSummary {
                n1: r.n1,
                n2: r.n2,
                res: r.res,
                beta: r.beta,
                filled_regions: r.filled_regions,
                regions: r.regions,
            });
        }
        Ok(())
    })
}

/// Writes the default synthetic textured-plane dataset with the given
/// seed, plane depth (meters) and duration (seconds) to `out_dir`.
///
/// # Safety
/// `out_dir` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn evf_run_synth(out_dir: *const c_char, seed: u64, depth: f64, duration: f64) -> EvfStatus {
    guard(|| {
        let out = path_arg(out_dir, "out_dir")?;
        let params = SynthParams {
            seed,
            depth,
            duration,
            ..SynthParams::default()
        };
        lib(run_synth(&params, &out)).map(|_| ())
    })
}
