use rayon::prelude::*;

use super::{FillConfig, ProjectedEvents, RangeImage, WeightKernel};
use crate::emvs::Provenance;
use crate::error::{Error, Result};
use crate::segmentation::{region_boundary_sets, BoundarySets, LabelMap};

/// Outcome of the fill test for one region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FillDecision {
    pub region_id: u32,
    /// Projected events in the contour ring.
    pub contour_hits: usize,
    /// Projected events in the region but outside the ring.
    pub interior_hits: usize,
    pub contour_len: usize,
    pub region_size: usize,
    pub filled: bool,
}

impl FillDecision {
    pub fn evaluate(
        region_id: u32,
        contour_hits: usize,
        interior_hits: usize,
        contour_len: usize,
        region_size: usize,
        cfg: &FillConfig,
    ) -> Self {
        let filled = contour_hits as f64 >= cfg.contour_fraction * contour_len as f64
            && interior_hits as f64 <= cfg.interior_fraction * region_size as f64;
        FillDecision {
            region_id,
            contour_hits,
            interior_hits,
            contour_len,
            region_size,
            filled,
        }
    }
}

/// Depths interpolated for one region: `(pixel index, depth, provenance)`
/// for every region pixel, in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFill {
    pub region_id: u32,
    pub pixels: Vec<(usize, f64, Provenance)>,
}

/// Depth seed: pixel coordinates and depth.
#[derive(Debug, Clone, Copy)]
struct Sample {
    x: f64,
    y: f64,
    depth: f64,
}

struct RegionSupport {
    sets: BoundarySets,
    decision: FillDecision,
    /// Projected events in the region or its ring.
    samples: Vec<Sample>,
}

fn region_support(lmap: &LabelMap, id: u32, pe: &ProjectedEvents, cfg: &FillConfig) -> Result<RegionSupport> {
    if (pe.width, pe.height) != (lmap.width, lmap.height) {
        return Err(Error::InvalidArgument(format!(
            "projected events are {}x{}, labels are {}x{}",
            pe.width, pe.height, lmap.width, lmap.height
        )));
    }
    let sets = region_boundary_sets(lmap, id, cfg.ring_width)?;
    let w = lmap.width;
    let mut samples = Vec::new();
    let mut push = |i: usize, depth: f64| {
        samples.push(Sample {
            x: (i % w) as f64,
            y: (i / w) as f64,
            depth,
        })
    };
    let mut contour_hits = 0;
    for &i in &sets.ring {
        if let Some(d) = pe.at(i) {
            contour_hits += 1;
            push(i, d);
        }
    }
    let mut interior_hits = 0;
    for &i in &sets.interior {
        if sets.ring.binary_search(&i).is_ok() {
            continue;
        }
        if let Some(d) = pe.at(i) {
            interior_hits += 1;
            push(i, d);
        }
    }
    let decision = FillDecision::evaluate(
        id,
        contour_hits,
        interior_hits,
        sets.contour.len(),
        sets.contour.len() + sets.interior.len(),
        cfg,
    );
    Ok(RegionSupport {
        sets,
        decision,
        samples,
    })
}

pub fn decide_fill(lmap: &LabelMap, id: u32, pe: &ProjectedEvents, cfg: &FillConfig) -> Result<FillDecision> {
    Ok(region_support(lmap, id, pe, cfg)?.decision)
}

/// Weighted mean of the sample depths seen from `(x, y)`.
///
/// Computed as an offset from the smallest depth so that constant inputs
/// reproduce exactly, and clamped to the sample range against rounding.
fn interpolate(x: f64, y: f64, samples: &[Sample], d_min: f64, d_max: f64, kernel: WeightKernel, sigma: f64) -> f64 {
    let dist = |s: &Sample| ((s.x - x).powi(2) + (s.y - y).powi(2)).sqrt();
    let (mut num, mut den) = (0.0, 0.0);
    match kernel {
        WeightKernel::Inverse => {
            for s in samples {
                let d = dist(s);
                let w = if d < 1.0 { 1.0 } else { 1.0 / d };
                num += w * (s.depth - d_min);
                den += w;
            }
        }
        WeightKernel::Gauss | WeightKernel::Exponential => {
            // Weights relative to the largest one; the kernels are
            // decreasing, so that is the nearest sample's.
            let nearest = samples.iter().map(dist).fold(f64::INFINITY, f64::min);
            let top = kernel.log_weight(nearest, sigma);
            for s in samples {
                let w = (kernel.log_weight(dist(s), sigma) - top).exp();
                num += w * (s.depth - d_min);
                den += w;
            }
        }
    }
    (d_min + num / den).clamp(d_min, d_max)
}

fn fill_with_support(lmap: &LabelMap, support: &RegionSupport, pe: &ProjectedEvents, cfg: &FillConfig) -> Result<RegionFill> {
    let id = support.decision.region_id;
    if support.samples.is_empty() {
        return Err(Error::Internal(format!(
            "region {id} has no projected events to interpolate from"
        )));
    }
    let (d_min, d_max) = support
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.depth), hi.max(s.depth)));
    let w = lmap.width;
    let mut pixels: Vec<(usize, f64, Provenance)> = support
        .sets
        .contour
        .iter()
        .chain(&support.sets.interior)
        .map(|&i| match pe.at(i) {
            Some(d) => (i, d, Provenance::Event),
            None => {
                let d = interpolate(
                    (i % w) as f64,
                    (i / w) as f64,
                    &support.samples,
                    d_min,
                    d_max,
                    cfg.kernel,
                    cfg.sigma,
                );
                (i, d, Provenance::Fill)
            }
        })
        .collect();
    pixels.sort_unstable_by_key(|p| p.0);
    Ok(RegionFill { region_id: id, pixels })
}

/// Interpolates depths for every pixel of region `id` from the projected
/// events in the region and its contour ring. Pixels carrying their own
/// projected event keep it.
pub fn fill_region(lmap: &LabelMap, id: u32, pe: &ProjectedEvents, cfg: &FillConfig) -> Result<RegionFill> {
    cfg.validate()?;
    let support = region_support(lmap, id, pe, cfg)?;
    fill_with_support(lmap, &support, pe, cfg)
}

/// Merges projected events and region fills into one range image.
///
/// `fills` must hold exactly one entry per region whose decision is
/// `filled`.
pub fn assemble_range_image(
    lmap: &LabelMap,
    decisions: &[FillDecision],
    fills: &[RegionFill],
    pe: &ProjectedEvents,
) -> Result<RangeImage> {
    if (pe.width, pe.height) != (lmap.width, lmap.height) {
        return Err(Error::InvalidArgument("projected events and labels differ in size".into()));
    }
    let mut filled: Vec<u32> = decisions.iter().filter(|d| d.filled).map(|d| d.region_id).collect();
    let mut provided: Vec<u32> = fills.iter().map(|f| f.region_id).collect();
    filled.sort_unstable();
    provided.sort_unstable();
    if filled != provided {
        return Err(Error::Internal(format!(
            "fills for regions {provided:?} do not match filled regions {filled:?}"
        )));
    }

    let mut ri = RangeImage::empty(lmap.width, lmap.height);
    for (i, d) in pe.iter() {
        ri.cells[i] = Some((d, Provenance::Event));
    }
    for fill in fills {
        for &(i, d, provenance) in &fill.pixels {
            if lmap.labels()[i] != fill.region_id {
                return Err(Error::Internal(format!(
                    "fill of region {} writes pixel {i} outside it",
                    fill.region_id
                )));
            }
            match (ri.cells[i], provenance) {
                (Some((_, Provenance::Event)), Provenance::Event) => {}
                (None, Provenance::Fill) => ri.cells[i] = Some((d, Provenance::Fill)),
                _ => {
                    return Err(Error::Internal(format!("conflicting depths for pixel {i}")));
                }
            }
        }
    }
    Ok(ri)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub range_image: RangeImage,
    /// One decision per region, in id order.
    pub decisions: Vec<FillDecision>,
}

impl FusionResult {
    pub fn filled_regions(&self) -> usize {
        self.decisions.iter().filter(|d| d.filled).count()
    }
}

/// Decides and fills every region of `lmap`, regions in parallel.
pub fn fuse(lmap: &LabelMap, pe: &ProjectedEvents, cfg: &FillConfig) -> Result<FusionResult> {
    cfg.validate()?;
    let results: Vec<(FillDecision, Option<RegionFill>)> = lmap
        .regions()
        .par_iter()
        .map(|region| {
            let support = region_support(lmap, region.id, pe, cfg)?;
            let fill = if support.decision.filled {
                Some(fill_with_support(lmap, &support, pe, cfg)?)
            } else {
                None
            };
            Ok((support.decision, fill))
        })
        .collect::<Result<_>>()?;
    let decisions: Vec<FillDecision> = results.iter().map(|r| r.0).collect();
    let fills: Vec<RegionFill> = results.into_iter().filter_map(|r| r.1).collect();
    let range_image = assemble_range_image(lmap, &decisions, &fills, pe)?;
    Ok(FusionResult {
        range_image,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;
    use crate::segmentation::{region_grow, GrowConfig};
    use approx::assert_abs_diff_eq;

    /// 40x40 image with a 10x10 bright square at x 15..25, y 12..22.
    fn square_map() -> (LabelMap, u32) {
        let data = (0..40 * 40)
            .map(|i| {
                let (x, y) = (i % 40, i / 40);
                if (15..25).contains(&x) && (12..22).contains(&y) {
                    150
                } else {
                    20
                }
            })
            .collect();
        let l = region_grow(&Frame::new(0.0, 40, 40, data).unwrap(), &GrowConfig::default()).unwrap();
        let id = l.label(20, 15);
        (l, id)
    }

    /// Projected events on the first `n` contour pixels of the square,
    /// walking its top edge then its bottom edge.
    fn contour_events(n: usize, depth: f64) -> ProjectedEvents {
        let mut pe = ProjectedEvents::empty(40, 40);
        let walk = (15..25).map(|x| (x, 12)).chain((15..25).map(|x| (x, 21)));
        for (x, y) in walk.take(n) {
            pe.insert(x, y, depth);
        }
        pe
    }

    #[test]
    fn no_events_no_fill() {
        let (l, id) = square_map();
        let d = decide_fill(&l, id, &ProjectedEvents::empty(40, 40), &FillConfig::default()).unwrap();
        assert_eq!((d.contour_hits, d.interior_hits, d.contour_len, d.region_size), (0, 0, 36, 100));
        assert!(!d.filled);
    }

    #[test]
    fn twelve_contour_hits_fill() {
        // 12 >= 0.3 * 36 = 10.8 and 0 <= 0.05 * 100.
        let (l, id) = square_map();
        let d = decide_fill(&l, id, &contour_events(12, 1.0), &FillConfig::default()).unwrap();
        assert_eq!(d.contour_hits, 12);
        assert!(d.filled);
        let d = decide_fill(&l, id, &contour_events(11, 1.0), &FillConfig::default()).unwrap();
        assert!(d.filled);
        // 10 < 10.8.
        let d = decide_fill(&l, id, &contour_events(10, 1.0), &FillConfig::default()).unwrap();
        assert!(!d.filled);
    }

    #[test]
    fn too_many_interior_hits_block_fill() {
        let (l, id) = square_map();
        let mut pe = contour_events(20, 1.0);
        // Core of the square (outside the ring) is 4x4 at x 18..22, y 15..19.
        for (x, y) in [(18, 15), (19, 16), (20, 17), (21, 18), (18, 18)] {
            pe.insert(x, y, 1.0);
        }
        let d = decide_fill(&l, id, &pe, &FillConfig::default()).unwrap();
        assert_eq!(d.interior_hits, 5);
        assert!(d.filled, "5 <= 5 is allowed");
        pe.insert(19, 18, 1.0);
        assert!(!decide_fill(&l, id, &pe, &FillConfig::default()).unwrap().filled);
    }

    #[test]
    fn ring_hits_outside_the_region_count() {
        let (l, id) = square_map();
        let mut pe = ProjectedEvents::empty(40, 40);
        // Three pixels outside the square along its left side.
        for y in 12..22 {
            pe.insert(13, y, 1.0);
            pe.insert(12, y, 1.0);
        }
        let d = decide_fill(&l, id, &pe, &FillConfig::default()).unwrap();
        assert_eq!(d.contour_hits, 20);
        // Beyond the ring: no longer counted.
        pe.insert(11, 15, 1.0);
        assert_eq!(decide_fill(&l, id, &pe, &FillConfig::default()).unwrap().contour_hits, 20);
    }

    fn single_samples(samples: &[(f64, f64, f64)]) -> Vec<Sample> {
        samples.iter().map(|&(x, y, depth)| Sample { x, y, depth }).collect()
    }

    #[test]
    fn one_sample_fills_constant() {
        let s = single_samples(&[(3.0, 4.0, 2.0)]);
        for kernel in WeightKernel::ALL {
            assert_eq!(interpolate(30.0, 1.0, &s, 2.0, 2.0, kernel, 5.0), 2.0);
        }
    }

    #[test]
    fn equidistant_samples_average() {
        let s = single_samples(&[(0.0, 0.0, 1.0), (10.0, 0.0, 3.0)]);
        for kernel in WeightKernel::ALL {
            assert_abs_diff_eq!(interpolate(5.0, 7.0, &s, 1.0, 3.0, kernel, 5.0), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_weighted_sum() {
        // Distances 1 and 2: (1 * 1 + 0.5 * 4) / 1.5 = 2.
        let s = single_samples(&[(1.0, 0.0, 1.0), (0.0, 2.0, 4.0)]);
        assert_abs_diff_eq!(interpolate(0.0, 0.0, &s, 1.0, 4.0, WeightKernel::Inverse, 5.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn far_pixels_stay_defined() {
        // Gauss weights underflow to zero beyond ~190 px.
        let s = single_samples(&[(0.0, 0.0, 1.0), (1.0, 0.0, 3.0)]);
        let d = interpolate(500.0, 300.0, &s, 1.0, 3.0, WeightKernel::Gauss, 5.0);
        assert!(d.is_finite() && (1.0..=3.0).contains(&d));
        let d = interpolate(900.0, 0.0, &s, 1.0, 3.0, WeightKernel::Exponential, 5.0);
        assert!(d.is_finite() && (1.0..=3.0).contains(&d));
    }

    #[test]
    fn fill_region_keeps_events() {
        let (l, id) = square_map();
        let mut pe = contour_events(12, 1.0);
        pe.insert(24, 21, 3.0);
        let fill = fill_region(&l, id, &pe, &FillConfig::default()).unwrap();
        assert_eq!(fill.pixels.len(), 100);
        let events: Vec<_> = fill.pixels.iter().filter(|p| p.2 == Provenance::Event).collect();
        assert_eq!(events.len(), 13);
        assert!(events.iter().any(|p| p.0 == 21 * 40 + 24 && p.1 == 3.0));
        assert!(fill.pixels.iter().all(|p| (1.0..=3.0).contains(&p.1)));
    }

    #[test]
    fn fill_without_samples_is_an_error() {
        let (l, id) = square_map();
        let err = fill_region(&l, id, &ProjectedEvents::empty(40, 40), &FillConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
    }

    #[test]
    fn assemble_without_fills_is_the_events() {
        let (l, id) = square_map();
        let pe = contour_events(5, 2.0);
        let d = decide_fill(&l, id, &pe, &FillConfig::default()).unwrap();
        assert!(!d.filled);
        let ri = assemble_range_image(&l, &[d], &[], &pe).unwrap();
        assert_eq!(ri.len(), 5);
        assert_eq!(ri.count(Provenance::Event), 5);
    }

    #[test]
    fn assemble_checks_fill_set() {
        let (l, id) = square_map();
        let pe = contour_events(12, 2.0);
        let d = decide_fill(&l, id, &pe, &FillConfig::default()).unwrap();
        let fill = fill_region(&l, id, &pe, &FillConfig::default()).unwrap();
        assert!(assemble_range_image(&l, &[d], &[], &pe).is_err());
        assert!(assemble_range_image(&l, &[d], &[fill.clone(), fill.clone()], &pe).is_err());
        let ri = assemble_range_image(&l, &[d], &[fill], &pe).unwrap();
        // Region fully covered; no other events.
        assert_eq!(ri.len(), 100);
        assert_eq!(ri.count(Provenance::Fill), 88);
    }

    #[test]
    fn full_coverage_saturates() {
        let data = vec![9u8; 20 * 10];
        let l = region_grow(&Frame::new(0.0, 20, 10, data).unwrap(), &GrowConfig::default()).unwrap();
        let mut pe = ProjectedEvents::empty(20, 10);
        for x in 0..20 {
            pe.insert(x, 0, 1.5);
            pe.insert(x, 9, 2.5);
        }
        let result = fuse(&l, &pe, &FillConfig::default()).unwrap();
        assert_eq!(result.range_image.len(), 200);
    }
}
