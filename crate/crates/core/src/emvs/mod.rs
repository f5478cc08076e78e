//! Semi-dense mapping by ray counting.
//!
//! Every event is back-projected through the camera pose at its timestamp.
//! Its viewing ray is intersected with a stack of depth planes of a fixed
//! reference view, and the voxel hit on each plane receives one vote. Scene
//! edges show up as voxels crossed by many rays; the best-supported depth of
//! each reference pixel is kept where it stands out from its neighborhood.

mod cloud;
mod dsi;
mod maxima;

pub use cloud::{semi_dense_to_cloud, CloudPoint, PointCloud, Provenance};
pub use dsi::{build_dsi, Dsi, UndistortTable};
pub use maxima::{detect_local_maxima, max_projection, median_filter, remove_isolated, MaximaConfig, SemiDenseDepthMap};

use crate::error::{Error, Result};

/// How depth planes are spread over `[z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthSampling {
    /// Uniform in 1/z.
    #[default]
    InverseDepth,
    /// Uniform in z.
    LinearDepth,
}

impl std::str::FromStr for DepthSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-depth" | "inverse" => Ok(DepthSampling::InverseDepth),
            "linear-depth" | "linear" => Ok(DepthSampling::LinearDepth),
            other => Err(Error::Config(format!("unknown depth sampling {other:?}"))),
        }
    }
}

impl std::fmt::Display for DepthSampling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DepthSampling::InverseDepth => "inverse-depth",
            DepthSampling::LinearDepth => "linear-depth",
        })
    }
}

/// Geometry of the vote volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsiConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub sampling: DepthSampling,
}

impl Default for DsiConfig {
    fn default() -> Self {
        DsiConfig {
            nx: 240,
            ny: 180,
            nz: 100,
            z_min: 0.3,
            z_max: 5.0,
            sampling: DepthSampling::InverseDepth,
        }
    }
}

impl DsiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Config(format!(
                "dsi grid {}x{}x{} must be non-empty",
                self.nx, self.ny, self.nz
            )));
        }
        if self.nz > u16::MAX as usize {
            return Err(Error::Config(format!("dsi.nz = {} is too many planes", self.nz)));
        }
        if !(self.z_min > 0.0 && self.z_min < self.z_max && self.z_max.is_finite()) {
            return Err(Error::Config(format!(
                "depth range must satisfy 0 < z_min < z_max, got [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    /// Depth of plane `k`; plane 0 is at `z_min`.
    pub fn depth_of_plane(&self, k: usize) -> Result<f64> {
        if k >= self.nz {
            return Err(Error::OutOfRange(format!("plane index {k} (nz = {})", self.nz)));
        }
        if self.nz == 1 {
            return Ok(self.z_min);
        }
        if k == self.nz - 1 {
            return Ok(self.z_max);
        }
        let s = k as f64 / (self.nz - 1) as f64;
        Ok(match self.sampling {
            DepthSampling::InverseDepth => {
                let (a, b) = (1.0 / self.z_min, 1.0 / self.z_max);
                1.0 / (a + s * (b - a))
            }
            DepthSampling::LinearDepth => self.z_min + s * (self.z_max - self.z_min),
        })
    }

    pub fn plane_depths(&self) -> Vec<f64> {
        (0..self.nz)
            .map(|k| self.depth_of_plane(k).expect("index in range"))
            .collect()
    }

    /// Distance between the two planes bracketing `z` (the largest adjacent
    /// gap if `z` is outside the range).
    pub fn plane_spacing_at(&self, z: f64) -> f64 {
        let depths = self.plane_depths();
        if depths.len() < 2 {
            return 0.0;
        }
        let gaps = depths.windows(2).map(|w| (w[0], w[1] - w[0]));
        let mut widest = 0.0f64;
        for (start, gap) in gaps {
            if z >= start && z <= start + gap {
                return gap;
            }
            widest = widest.max(gap);
        }
        widest
    }
}
