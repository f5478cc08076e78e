//! Densification of the semi-dense map using the segmented reference frame.
//!
//! Map points are projected into the reference view ("projected events").
//! A region is filled when enough projected events sit in the band around
//! its contour while few fall strictly inside it; each of its pixels then
//! takes a distance-weighted average of the nearby projected-event depths.

mod fill;
mod kernel;
mod project;

pub use fill::{assemble_range_image, decide_fill, fill_region, fuse, FillDecision, FusionResult, RegionFill};
pub use kernel::{kernel_weight, WeightKernel};
pub use project::{project_map_points, range_image_to_cloud};

use crate::emvs::Provenance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FillConfig {
    /// Required share of the contour length covered by ring hits.
    pub contour_fraction: f64,
    /// Allowed share of the region size hit strictly inside.
    pub interior_fraction: f64,
    /// Half-width of the contour band, pixels.
    pub ring_width: usize,
    pub kernel: WeightKernel,
    /// Gaussian kernel width, pixels.
    pub sigma: f64,
}

impl Default for FillConfig {
    fn default() -> Self {
        FillConfig {
            contour_fraction: 0.30,
            interior_fraction: 0.05,
            ring_width: 3,
            kernel: WeightKernel::Inverse,
            sigma: 5.0,
        }
    }
}

impl FillConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fill.contour_fraction", self.contour_fraction),
            ("fill.interior_fraction", self.interior_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.ring_width == 0 {
            return Err(Error::Config("fill.ring_width must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("fill.sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn with_kernel(self, kernel: WeightKernel) -> Self {
        FillConfig { kernel, ..self }
    }
}

/// Sparse depths at reference-view pixels, at most one per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedEvents {
    pub width: usize,
    pub height: usize,
    depth: Vec<Option<f64>>,
}

impl ProjectedEvents {
    pub fn empty(width: usize, height: usize) -> Self {
        ProjectedEvents {
            width,
            height,
            depth: vec![None; width * height],
        }
    }

    /// Keeps the nearer depth when a pixel is already occupied.
    pub fn insert(&mut self, x: usize, y: usize, depth: f64) {
        let slot = &mut self.depth[y * self.width + x];
        match slot {
            Some(d) if *d <= depth => {}
            _ => *slot = Some(depth),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.depth[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, index: usize) -> Option<f64> {
        self.depth[index]
    }

    pub fn len(&self) -> usize {
        self.depth.iter().filter(|d| d.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.depth
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| (i, d)))
    }
}

/// Dense z-depth at the reference view with per-pixel provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    pub width: usize,
    pub height: usize,
    cells: Vec<Option<(f64, Provenance)>>,
}

impl RangeImage {
    pub fn empty(width: usize, height: usize) -> Self {
        RangeImage {
            width,
            height,
            cells: vec![None; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<(f64, Provenance)> {
        self.cells[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, index: usize) -> Option<(f64, Provenance)> {
        self.cells[index]
    }

    pub fn set(&mut self, x: usize, y: usize, value: Option<(f64, Provenance)>) {
        self.cells[y * self.width + x] = value;
    }

    pub fn depth(&self, x: usize, y: usize) -> Option<f64> {
        self.get(x, y).map(|(d, _)| d)
    }

    pub fn cells(&self) -> &[Option<(f64, Provenance)>] {
        &self.cells
    }

    /// Number of pixels with a depth, N2.
    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, Some((_, p)) if *p == provenance))
            .count()
    }

    /// The event-derived pixels as projected events.
    pub fn event_subset(&self) -> ProjectedEvents {
        ProjectedEvents {
            width: self.width,
            height: self.height,
            depth: self
                .cells
                .iter()
                .map(|c| match c {
                    Some((d, Provenance::Event)) => Some(*d),
                    _ => None,
                })
                .collect(),
        }
    }
}
