//! Filling score, planar depth error and kernel comparison.

use nalgebra::{Isometry3, Vector3};

use crate::dataset::{CameraModel, Event, Pose};
use crate::emvs::PointCloud;
use crate::error::{Error, Result};
use crate::fusion::{fuse, range_image_to_cloud, FillConfig, FillDecision, ProjectedEvents, WeightKernel};
use crate::segmentation::LabelMap;

/// Densification score for going from `n1` to `n2` points on an image of
/// `res` pixels: `(n2 - n1) / (res + n1 / res)`.
pub fn filling_score(n1: usize, n2: usize, res: usize) -> Result<f64> {
    if res == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    if n2 < n1 {
        return Err(Error::InvalidArgument(format!("N2 = {n2} is below N1 = {n1}")));
    }
    let (n1, n2, res) = (n1 as f64, n2 as f64, res as f64);
    Ok((n2 - n1) / (res + n1 / res))
}

/// Plane `normal . x = distance` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub distance: f64,
}

impl Plane {
    pub fn new(normal: Vector3<f64>, distance: f64) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "plane normal must be unit length, |n| = {}",
                normal.norm()
            )));
        }
        Ok(Plane { normal, distance })
    }

    /// World-frame plane at z-depth `depth` facing the camera at `pose`.
    pub fn fronto_parallel(pose: &Pose, depth: f64) -> Self {
        let normal = pose.rotation * Vector3::z();
        Plane {
            normal,
            distance: normal.dot(&pose.translation) + depth,
        }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.distance
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Plane {
        let normal = iso.rotation * self.normal;
        Plane {
            normal,
            distance: self.distance + normal.dot(&iso.translation.vector),
        }
    }
}

/// Mean absolute point-to-plane distance, in centimeters.
pub fn planar_abs_error(cloud: &PointCloud, plane: &Plane) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("planar error of an empty cloud is undefined".into()));
    }
    let sum: f64 = cloud
        .points
        .iter()
        .map(|p| plane.signed_distance(&p.position).abs())
        .sum();
    Ok(100.0 * sum / cloud.len() as f64)
}

/// Densification summary for one reference view.
#[derive(Debug, Clone, PartialEq)]
pub struct FillingReport {
    pub n1: usize,
    pub n2: usize,
    pub res: usize,
    pub beta: f64,
    pub decisions: Vec<FillDecision>,
}

impl FillingReport {
    pub fn new(n1: usize, n2: usize, res: usize, decisions: Vec<FillDecision>) -> Result<Self> {
        if n2 > res {
            return Err(Error::InvalidArgument(format!("N2 = {n2} exceeds resolution {res}")));
        }
        Ok(FillingReport {
            n1,
            n2,
            res,
            beta: filling_score(n1, n2, res)?,
            decisions,
        })
    }
}

/// Planar errors of one sequence under one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub sequence: String,
    pub kernel: WeightKernel,
    /// Mean absolute error of each window, centimeters.
    pub segment_errors_cm: Vec<f64>,
}

impl ErrorReport {
    pub fn mean_cm(&self) -> Option<f64> {
        if self.segment_errors_cm.is_empty() {
            return None;
        }
        Some(self.segment_errors_cm.iter().sum::<f64>() / self.segment_errors_cm.len() as f64)
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Consecutive windows of `segment_len` starting at `t0`; a trailing partial
/// window is dropped.
pub fn segment_windows(t0: f64, duration: f64, segment_len: f64) -> Result<Vec<TimeWindow>> {
    if !(segment_len > 0.0 && segment_len.is_finite()) {
        return Err(Error::InvalidArgument(format!("segment length must be > 0, got {segment_len}")));
    }
    if !(duration >= 0.0) {
        return Ok(Vec::new());
    }
    // Tolerate representation error, e.g. 3.0 / 1.0 computed as 2.9999...
    let n = (duration / segment_len + 1e-9).floor() as usize;
    Ok((0..n)
        .map(|i| TimeWindow {
            start: t0 + i as f64 * segment_len,
            end: t0 + (i + 1) as f64 * segment_len,
        })
        .collect())
}

/// [`segment_windows`] starting at the first event.
pub fn segment_sequence(events: &[Event], duration: f64, segment_len: f64) -> Result<Vec<TimeWindow>> {
    let t0 = events.first().map_or(0.0, |e| e.t);
    segment_windows(t0, duration, segment_len)
}

/// Everything upstream of the fill step, shared by all kernels.
#[derive(Debug, Clone, Copy)]
pub struct FusionInputs<'a> {
    pub labels: &'a LabelMap,
    pub projected: &'a ProjectedEvents,
    pub ref_pose: &'a Pose,
    pub cam: &'a CameraModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelError {
    pub kernel: WeightKernel,
    pub error_cm: f64,
    pub n2: usize,
}

/// Fills the same segmentation and projected events once per kernel and
/// measures the dense cloud against `plane`.
pub fn compare_kernels(
    inputs: FusionInputs<'_>,
    fill: &FillConfig,
    kernels: &[WeightKernel],
    plane: &Plane,
) -> Result<Vec<KernelError>> {
    kernels
        .iter()
        .map(|&kernel| {
            let result = fuse(inputs.labels, inputs.projected, &fill.with_kernel(kernel))?;
            let cloud = range_image_to_cloud(&result.range_image, inputs.ref_pose, inputs.cam);
            Ok(KernelError {
                kernel,
                error_cm: planar_abs_error(&cloud, plane)?,
                n2: result.range_image.len(),
            })
        })
        .collect()
}
