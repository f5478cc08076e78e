//! Region-growing segmentation of the reference frame.
//!
//! Pixels are visited in raster order; each unlabeled pixel seeds a region
//! that floods breadth-first into neighbours whose intensity differs from the
//! adjacent region pixel by at most the growing threshold. Regions smaller
//! than `min_region_size` are then discarded (label 0).

use std::collections::VecDeque;

use crate::dataset::Frame;
use crate::error::{Error, Result};

/// Label of pixels that belong to no fill candidate.
pub const INVALID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::Config(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowConfig {
    /// Largest admitted intensity step between adjacent pixels, gray levels.
    pub threshold: u8,
    pub connectivity: Connectivity,
    pub min_region_size: usize,
}

impl Default for GrowConfig {
    fn default() -> Self {
        GrowConfig {
            threshold: 3,
            connectivity: Connectivity::Four,
            min_region_size: 100,
        }
    }
}

impl GrowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_region_size == 0 {
            return Err(Error::Config("grow.min_region_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One labelled region. Pixels are linear indices `y * width + x`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: u32,
    /// Region pixels touching (8-connected) another label or the image border.
    pub contour: Vec<usize>,
    /// Region pixels that are not on the contour.
    pub interior: Vec<usize>,
}

impl Region {
    pub fn size(&self) -> usize {
        self.contour.len() + self.interior.len()
    }

    pub fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        let mut all: Vec<usize> = self.contour.iter().chain(&self.interior).copied().collect();
        all.sort_unstable();
        all.into_iter()
    }
}

/// Per-pixel region labels plus the region table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    labels: Vec<u32>,
    regions: Vec<Region>,
}

impl LabelMap {
    /// Builds the map and its region table from raw labels `0..=R`, where
    /// every id in `1..=R` must occur.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        let count = labels.iter().copied().max().unwrap_or(0) as usize;
        let mut regions: Vec<Region> = (1..=count as u32)
            .map(|id| Region {
                id,
                contour: Vec::new(),
                interior: Vec::new(),
            })
            .collect();
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let l = labels[i];
                if l == INVALID {
                    continue;
                }
                let region = &mut regions[l as usize - 1];
                if on_contour(&labels, width, height, x, y) {
                    region.contour.push(i);
                } else {
                    region.interior.push(i);
                }
            }
        }
        if let Some(r) = regions.iter().find(|r| r.size() == 0) {
            return Err(Error::InvalidArgument(format!("label {} is unused", r.id)));
        }
        Ok(LabelMap {
            width,
            height,
            labels,
            regions,
        })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, id: u32) -> Option<&Region> {
        if id == INVALID {
            return None;
        }
        self.regions.get(id as usize - 1)
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn invalid_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l == INVALID).count()
    }
}

fn on_contour(labels: &[u32], width: usize, height: usize, x: usize, y: usize) -> bool {
    let l = labels[y * width + x];
    if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
        return true;
    }
    for ny in y - 1..=y + 1 {
        for nx in x - 1..=x + 1 {
            if labels[ny * width + nx] != l {
                return true;
            }
        }
    }
    false
}

/// Labels every pixel of `frame`; ids are assigned in seed (raster) order
/// starting at 1.
pub fn region_grow(frame: &Frame, cfg: &GrowConfig) -> Result<LabelMap> {
    cfg.validate()?;
    let (w, h) = (frame.width, frame.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("empty frame".into()));
    }
    let threshold = cfg.threshold as i16;
    let offsets = cfg.connectivity.offsets();
    let mut labels = vec![INVALID; w * h];
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for seed in 0..w * h {
        if labels[seed] != INVALID {
            continue;
        }
        next += 1;
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            let (px, py) = ((p % w) as isize, (p / w) as isize);
            let ip = frame.data[p] as i16;
            for &(dx, dy) in offsets {
                let (qx, qy) = (px + dx, py + dy);
                if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                    continue;
                }
                let q = qy as usize * w + qx as usize;
                if labels[q] == INVALID && (frame.data[q] as i16 - ip).abs() <= threshold {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
    }
    LabelMap::from_labels(w, h, labels)
}

/// Invalidates regions with fewer than `min_region_size` pixels and
/// renumbers the survivors `1..=R` in their original order.
pub fn prune_small_regions(lmap: &LabelMap, min_region_size: usize) -> LabelMap {
    let mut remap = vec![INVALID; lmap.regions.len() + 1];
    let mut regions = Vec::new();
    for r in &lmap.regions {
        if r.size() >= min_region_size {
            let id = regions.len() as u32 + 1;
            remap[r.id as usize] = id;
            regions.push(Region { id, ..r.clone() });
        }
    }
    let labels = lmap.labels.iter().map(|&l| remap[l as usize]).collect();
    LabelMap {
        width: lmap.width,
        height: lmap.height,
        labels,
        regions,
    }
}

/// Region growing followed by small-region pruning.
pub fn segment(frame: &Frame, cfg: &GrowConfig) -> Result<LabelMap> {
    Ok(prune_small_regions(&region_grow(frame, cfg)?, cfg.min_region_size))
}

/// Contour, interior and contour ring of one region, as sorted pixel indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySets {
    pub contour: Vec<usize>,
    pub interior: Vec<usize>,
    /// Pixels of any label within `ring_width` (Chebyshev) of both the
    /// region and its outside: the band straddling the region boundary.
    pub ring: Vec<usize>,
}

/// Separable square dilation of a binary mask.
fn dilate(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            rows[y * w + x] = mask[y * w + x0..=y * w + x1].iter().any(|&b| b);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            out[y * w + x] = (y0..=y1).any(|yy| rows[yy * w + x]);
        }
    }
    out
}

pub fn region_boundary_sets(lmap: &LabelMap, id: u32, ring_width: usize) -> Result<BoundarySets> {
    let region = lmap
        .region(id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown region id {id}")))?;
    let (w, h) = (lmap.width, lmap.height);
    let r = ring_width;

    // Work on the region's bounding box grown by r on each side, in a frame
    // that may extend past the image; off-image cells count as outside.
    let (mut x_min, mut y_min, mut x_max, mut y_max) = (usize::MAX, usize::MAX, 0, 0);
    for &p in &region.contour {
        let (x, y) = (p % w, p / w);
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let ox = x_min as isize - r as isize;
    let oy = y_min as isize - r as isize;
    let bw = x_max - x_min + 1 + 2 * r;
    let bh = y_max - y_min + 1 + 2 * r;
    let mut inside = vec![false; bw * bh];
    for by in 0..bh {
        for bx in 0..bw {
            let (x, y) = (ox + bx as isize, oy + by as isize);
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                inside[by * bw + bx] = lmap.labels[y as usize * w + x as usize] == id;
            }
        }
    }
    let outside: Vec<bool> = inside.iter().map(|&b| !b).collect();
    let near_region = dilate(&inside, bw, bh, r);
    let near_outside = dilate(&outside, bw, bh, r);
    let mut ring = Vec::new();
    for by in 0..bh {
        let y = oy + by as isize;
        if y < 0 || y as usize >= h {
            continue;
        }
        for bx in 0..bw {
            let x = ox + bx as isize;
            if x < 0 || x as usize >= w {
                continue;
            }
            if near_region[by * bw + bx] && near_outside[by * bw + bx] {
                ring.push(y as usize * w + x as usize);
            }
        }
    }
    Ok(BoundarySets {
        contour: region.contour.clone(),
        interior: region.interior.clone(),
        ring,
    })
}
