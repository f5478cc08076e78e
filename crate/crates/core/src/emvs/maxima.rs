use super::Dsi;
use crate::error::{Error, Result};

/// Local-maximum detection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximaConfig {
    /// Side of the square averaging window, in grid pixels. Odd.
    pub kernel: usize,
    /// Margin in votes a pixel's best count must exceed the window mean by.
    pub c: f64,
}

impl Default for MaximaConfig {
    fn default() -> Self {
        MaximaConfig { kernel: 15, c: 7.0 }
    }
}

impl MaximaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "maxima.kernel must be odd and >= 1, got {}",
                self.kernel
            )));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("maxima.c must be >= 0, got {}", self.c)));
        }
        Ok(())
    }
}

/// Sparse depth at the reference view, one optional z-depth per grid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiDenseDepthMap {
    pub width: usize,
    pub height: usize,
    depth: Vec<Option<f64>>,
}

impl SemiDenseDepthMap {
    pub fn empty(width: usize, height: usize) -> Self {
        SemiDenseDepthMap {
            width,
            height,
            depth: vec![None; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.depth[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, depth: Option<f64>) {
        self.depth[y * self.width + x] = depth;
    }

    pub fn depths(&self) -> &[Option<f64>] {
        &self.depth
    }

    /// Number of valid pixels, N1.
    pub fn len(&self) -> usize {
        self.depth.iter().filter(|d| d.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(x, y, depth)` of every valid pixel in raster order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.depth
            .iter()
            .enumerate()
            .filter_map(move |(i, d)| d.map(|d| (i % self.width, i / self.width, d)))
    }
}

/// Per-pixel best plane: the maximum count over depth and the smallest plane
/// index reaching it.
pub fn max_projection(dsi: &Dsi) -> (Vec<u32>, Vec<u16>) {
    let n = dsi.config.nx * dsi.config.ny;
    let mut best = vec![0u32; n];
    let mut arg = vec![0u16; n];
    for k in 0..dsi.config.nz {
        for (i, &c) in dsi.plane(k).iter().enumerate() {
            // Strict comparison keeps the nearest plane on ties.
            if c > best[i] {
                best[i] = c;
                arg[i] = k as u16;
            }
        }
    }
    (best, arg)
}

/// Mean of `values` over the `kernel x kernel` window centred on each pixel,
/// averaging only the in-image part of the window.
fn box_mean(values: &[u32], width: usize, height: usize, kernel: usize) -> Vec<f64> {
    let stride = width + 1;
    let mut integral = vec![0u64; stride * (height + 1)];
    for y in 0..height {
        let mut row = 0u64;
        for x in 0..width {
            row += values[y * width + x] as u64;
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let r = kernel / 2;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(height));
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(width));
            let sum = integral[y1 * stride + x1] + integral[y0 * stride + x0]
                - integral[y0 * stride + x1]
                - integral[y1 * stride + x0];
            out.push(sum as f64 / ((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    out
}

/// Extracts the semi-dense depth map from a vote volume.
///
/// Each pixel takes the depth of its best-supported plane, and is kept only
/// if that count exceeds the mean best count of its `kernel x kernel`
/// neighbourhood by more than `c`.
pub fn detect_local_maxima(dsi: &Dsi, mcfg: &MaximaConfig) -> Result<SemiDenseDepthMap> {
    mcfg.validate()?;
    let (nx, ny) = (dsi.config.nx, dsi.config.ny);
    let depths = dsi.config.plane_depths();
    let (best, arg) = max_projection(dsi);
    let mean = box_mean(&best, nx, ny, mcfg.kernel);
    let mut map = SemiDenseDepthMap::empty(nx, ny);
    for i in 0..nx * ny {
        if best[i] as f64 > mean[i] + mcfg.c {
            map.depth[i] = Some(depths[arg[i] as usize]);
        }
    }
    Ok(map)
}

/// Replaces every valid depth by the median of the valid depths in its
/// `window x window` neighbourhood.
///
/// Thick edges leave bands of pixels voted to neighbouring planes on either
/// side of the true one; the median over the band pulls them back. The lower
/// median is taken for even counts, so every output depth is still one of
/// the input depths. The set of valid pixels does not change. A window of 1
/// returns the map unchanged.
pub fn median_filter(map: &SemiDenseDepthMap, window: usize) -> Result<SemiDenseDepthMap> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("maxima.median must be odd and >= 1, got {window}")));
    }
    if window == 1 {
        return Ok(map.clone());
    }
    let (w, h, r) = (map.width, map.height, window / 2);
    let mut out = map.clone();
    let mut neighbours = Vec::with_capacity(window * window);
    for (x, y, _) in map.iter_valid() {
        neighbours.clear();
        for ny in y.saturating_sub(r)..(y + r + 1).min(h) {
            for nx in x.saturating_sub(r)..(x + r + 1).min(w) {
                if let Some(d) = map.get(nx, ny) {
                    neighbours.push(d);
                }
            }
        }
        let mid = (neighbours.len() - 1) / 2;
        let (_, median, _) = neighbours.select_nth_unstable_by(mid, f64::total_cmp);
        out.depth[y * w + x] = Some(*median);
    }
    Ok(out)
}

/// Drops valid pixels with fewer than `min_neighbours` other valid pixels
/// within Chebyshev distance `radius`. Spurious maxima in textureless areas
/// come in small scattered groups; true edges are continuous.
pub fn remove_isolated(map: &SemiDenseDepthMap, radius: usize, min_neighbours: usize) -> SemiDenseDepthMap {
    let (w, h) = (map.width, map.height);
    let mut out = map.clone();
    for (x, y, _) in map.iter_valid() {
        let mut n = 0;
        for ny in y.saturating_sub(radius)..(y + radius + 1).min(h) {
            for nx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                if (nx, ny) != (x, y) && map.get(nx, ny).is_some() {
                    n += 1;
                }
            }
        }
        if n < min_neighbours {
            out.depth[y * w + x] = None;
        }
    }
    out
}
