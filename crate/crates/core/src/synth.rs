//! Ground-truth scenes: a textured plane seen by a moving camera.
//!
//! The plane is fronto-parallel in the world frame at `z = depth`. Frames are
//! rendered by intersecting each pixel's viewing ray with the plane and
//! sampling the texture there; events follow the log-intensity threshold
//! model on densely rendered frames.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{
    format_poses, write_events, write_frame_index, CameraModel, Distortion, Event, Frame, FrameEntry,
    Pose, Trajectory, CALIB_FILE, EVENTS_FILE, GROUNDTRUTH_FILE, IMAGES_FILE,
};
use crate::emvs::Provenance;
use crate::error::{Error, Result};
use crate::export::{range_values, write_file, write_pfm, write_pgm8};
use crate::fusion::RangeImage;

/// Grayscale pattern on the plane, addressed in plane meters.
#[derive(Debug, Clone, PartialEq)]
pub enum Texture {
    Uniform(f64),
    /// `low` for `x < edge_x`, `high` otherwise.
    StepX { edge_x: f64, low: f64, high: f64 },
    /// Square tile of `size x size` texels of side `texel` meters, repeated
    /// over the plane and sampled bilinearly.
    Tiled { size: usize, texel: f64, data: Vec<f64> },
}

impl Texture {
    /// Random overlapping discs of `high` on a `low` background, drawn with
    /// wrap-around so the tile repeats seamlessly.
    pub fn blobs(seed: u64, size: usize, texel: f64, blobs: usize, radius: (f64, f64), low: f64, high: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![low; size * size];
        let n = size as f64;
        for _ in 0..blobs {
            let cx = rng.random_range(0.0..n);
            let cy = rng.random_range(0.0..n);
            let r = rng.random_range(radius.0..radius.1);
            let reach = r.ceil() as isize + 1;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let px = (cx.floor() as isize + dx).rem_euclid(size as isize) as usize;
                    let py = (cy.floor() as isize + dy).rem_euclid(size as isize) as usize;
                    let ox = cx.floor() + dx as f64 + 0.5 - cx;
                    let oy = cy.floor() + dy as f64 + 0.5 - cy;
                    if ox * ox + oy * oy <= r * r {
                        data[py * size + px] = high;
                    }
                }
            }
        }
        Texture::Tiled { size, texel, data }
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        match self {
            Texture::Uniform(v) => *v,
            Texture::StepX { edge_x, low, high } => {
                if x < *edge_x {
                    *low
                } else {
                    *high
                }
            }
            Texture::Tiled { size, texel, data } => {
                let n = *size as f64;
                // Texel centers sit at half-integer coordinates.
                let u = (x / texel - 0.5).rem_euclid(n);
                let v = (y / texel - 0.5).rem_euclid(n);
                let (u0, v0) = (u.floor(), v.floor());
                let (fu, fv) = (u - u0, v - v0);
                let (u0, v0) = (u0 as usize % size, v0 as usize % size);
                let (u1, v1) = ((u0 + 1) % size, (v0 + 1) % size);
                let at = |a: usize, b: usize| data[b * size + a];
                let top = at(u0, v0) * (1.0 - fu) + at(u1, v0) * fu;
                let bottom = at(u0, v1) * (1.0 - fu) + at(u1, v1) * fu;
                top * (1.0 - fv) + bottom * fv
            }
        }
    }
}

/// Textured fronto-parallel plane and the camera path observing it.
#[derive(Debug, Clone)]
pub struct PlaneScene {
    pub texture: Texture,
    /// World z of the plane, meters.
    pub depth: f64,
    pub trajectory: Trajectory,
    /// Log-intensity contrast threshold.
    pub contrast: f64,
}

impl PlaneScene {
    pub fn new(texture: Texture, depth: f64, trajectory: Trajectory, contrast: f64) -> Result<Self> {
        if !(depth > 0.0) {
            return Err(Error::InvalidArgument(format!("plane depth must be > 0, got {depth}")));
        }
        if !(contrast > 0.0) {
            return Err(Error::InvalidArgument(format!("contrast threshold must be > 0, got {contrast}")));
        }
        Ok(PlaneScene {
            texture,
            depth,
            trajectory,
            contrast,
        })
    }

    /// Ray parameter of the plane hit for a camera-frame direction, if the
    /// plane lies in front.
    #[inline]
    fn hit(&self, pose: &Pose, dir_cam: &Vector3<f64>) -> Option<Vector3<f64>> {
        let dir = pose.rotation * dir_cam;
        let lambda = (self.depth - pose.translation.z) / dir.z;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return None;
        }
        Some(pose.translation + dir * lambda)
    }

    fn intensity(&self, pose: &Pose, dir_cam: &Vector3<f64>) -> Option<f64> {
        self.hit(pose, dir_cam).map(|p| self.texture.sample(p.x, p.y))
    }
}

/// Camera-frame viewing ray (z = 1) of every raw sensor pixel.
fn pixel_rays(cam: &CameraModel) -> Result<Vec<Vector3<f64>>> {
    let mut rays = Vec::with_capacity(cam.res());
    for y in 0..cam.height {
        for x in 0..cam.width {
            let n = cam.undistort_pixel(x as f64, y as f64)?;
            rays.push(Vector3::new(n.x, n.y, 1.0));
        }
    }
    Ok(rays)
}

fn behind_camera(pose: &Pose) -> Error {
    Error::InvalidArgument(format!("plane not in front of the camera at t = {}", pose.t))
}

/// Renders the raw (distorted) frame seen from `pose`.
pub fn render_frame(scene: &PlaneScene, pose: &Pose, cam: &CameraModel) -> Result<Frame> {
    let rays = pixel_rays(cam)?;
    let data = rays
        .iter()
        .map(|ray| {
            scene
                .intensity(pose, ray)
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .ok_or_else(|| behind_camera(pose))
        })
        .collect::<Result<Vec<u8>>>()?;
    Frame::new(pose.t, cam.width, cam.height, data)
}

/// Simulated events over `[t0, t1]`.
///
/// Frames are rendered at `frame_rate`; each pixel fires whenever its
/// log(I + 1) has moved by the contrast threshold from its last reference
/// level, with the timestamp interpolated linearly between the bracketing
/// frames. The result is sorted by time, then row, then column.
pub fn generate_events(scene: &PlaneScene, cam: &CameraModel, t0: f64, t1: f64, frame_rate: f64) -> Result<Vec<Event>> {
    if !(t1 > t0) {
        return Err(Error::InvalidArgument(format!("event window [{t0}, {t1}] is empty")));
    }
    if !(frame_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("frame rate must be > 0, got {frame_rate}")));
    }
    let steps = ((t1 - t0) * frame_rate).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=steps)
        .map(|i| if i == steps { t1 } else { t0 + (t1 - t0) * i as f64 / steps as f64 })
        .collect();
    let poses = times
        .iter()
        .map(|&t| scene.trajectory.interpolate(t))
        .collect::<Result<Vec<_>>>()?;
    for pose in &poses {
        if scene.hit(pose, &Vector3::z()).is_none() {
            return Err(behind_camera(pose));
        }
    }
    let rays = pixel_rays(cam)?;
    let c = scene.contrast;
    let width = cam.width;

    let per_pixel = |i: usize, ray: &Vector3<f64>| -> Result<Vec<Event>> {
        let level = |pose: &Pose| -> Result<f64> {
            Ok((scene.intensity(pose, ray).ok_or_else(|| behind_camera(pose))? + 1.0).ln())
        };
        let mut out = Vec::new();
        let mut reference = level(&poses[0])?;
        let mut prev = reference;
        for k in 1..poses.len() {
            let current = level(&poses[k])?;
            while (current - reference).abs() >= c {
                let up = current > reference;
                reference += if up { c } else { -c };
                let frac = ((reference - prev) / (current - prev)).clamp(0.0, 1.0);
                out.push(Event {
                    t: times[k - 1] + frac * (times[k] - times[k - 1]),
                    x: (i % width) as u16,
                    y: (i / width) as u16,
                    polarity: up,
                });
            }
            prev = current;
        }
        Ok(out)
    };

    let per_pixel_events: Vec<Vec<Event>> = rays
        .par_iter()
        .enumerate()
        .map(|(i, ray)| per_pixel(i, ray))
        .collect::<Result<_>>()?;
    let mut events: Vec<Event> = per_pixel_events.into_iter().flatten().collect();
    sort_events(&mut events);
    Ok(events)
}

fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
}

/// Exact z-depth of the plane along each rectified viewing ray. Cells are
/// tagged event-derived.
pub fn ground_truth_range(scene: &PlaneScene, pose: &Pose, cam: &CameraModel) -> Result<RangeImage> {
    let rect = cam.rectified();
    let mut ri = RangeImage::empty(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let n = rect.pixel_to_normalized(x as f64, y as f64);
            let ray = Vector3::new(n.x, n.y, 1.0);
            let p = scene.hit(pose, &ray).ok_or_else(|| behind_camera(pose))?;
            let depth = pose.to_camera(&p).z;
            ri.set(x, y, Some((depth, Provenance::Event)));
        }
    }
    Ok(ri)
}

/// Parameters of the default slider-style scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub distortion: Distortion,
    /// Plane distance, meters.
    pub depth: f64,
    pub duration: f64,
    /// Lateral camera speed along world x, m/s.
    pub speed: f64,
    /// Log-intensity threshold. The default makes each edge of the default
    /// texture fire one event per crossing.
    pub contrast: f64,
    /// Rendering rate of the event simulator, Hz.
    pub sim_rate: f64,
    /// Rate of the frames written to `images.txt`, Hz.
    pub image_rate: f64,
    /// Rate of the poses written to `groundtruth.txt`, Hz.
    pub pose_rate: f64,
    pub seed: u64,
    pub blobs: usize,
    /// Blob radius range, texels.
    pub blob_radius: (f64, f64),
    pub low: f64,
    pub high: f64,
    /// Half-width of uniform timestamp noise, seconds. 0 disables.
    pub jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            width: 240,
            height: 180,
            fx: 200.0,
            fy: 200.0,
            cx: 119.5,
            cy: 89.5,
            distortion: Distortion::default(),
            depth: 0.231,
            duration: 2.0,
            speed: 0.15,
            contrast: 0.8,
            sim_rate: 1000.0,
            image_rate: 25.0,
            pose_rate: 200.0,
            seed: 1,
            blobs: 300,
            blob_radius: (6.0, 22.0),
            low: 50.0,
            high: 200.0,
            jitter: 0.0,
        }
    }
}

impl SynthParams {
    pub fn camera(&self) -> Result<CameraModel> {
        CameraModel::new(self.width, self.height, self.fx, self.fy, self.cx, self.cy, self.distortion)
    }

    /// Texture whose texels are about one pixel wide at the plane distance.
    pub fn texture(&self) -> Texture {
        Texture::blobs(
            self.seed,
            512,
            self.depth / self.fx,
            self.blobs,
            self.blob_radius,
            self.low,
            self.high,
        )
    }

    /// Camera-to-world poses sampled at `pose_rate`: identity rotation,
    /// moving along +x. At least two samples.
    pub fn poses(&self) -> Vec<Pose> {
        let dt = 1.0 / self.pose_rate;
        let n = ((self.duration * self.pose_rate - 1e-9).ceil() as usize).max(1);
        (0..=n)
            .map(|i| {
                let t = i as f64 * dt;
                Pose::new(t, Vector3::new(self.speed * t, 0.0, 0.0), Default::default())
            })
            .collect()
    }

    pub fn scene(&self) -> Result<PlaneScene> {
        PlaneScene::new(self.texture(), self.depth, Trajectory::new(self.poses())?, self.contrast)
    }

    pub fn frame_times(&self) -> Vec<f64> {
        let n = (self.duration * self.image_rate + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 / self.image_rate).collect()
    }
}

/// Events of a scene with optional timestamp jitter. Zero duration yields
/// no events.
pub fn simulate(params: &SynthParams, scene: &PlaneScene, cam: &CameraModel) -> Result<Vec<Event>> {
    if params.duration <= 0.0 {
        return Ok(Vec::new());
    }
    let mut events = generate_events(scene, cam, 0.0, params.duration, params.sim_rate)?;
    if params.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6a09_e667_f3bc_c908);
        for ev in &mut events {
            ev.t = (ev.t + rng.random_range(-params.jitter..params.jitter)).clamp(0.0, params.duration);
        }
        sort_events(&mut events);
    }
    Ok(events)
}

/// Files produced by [`write_dataset`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub root: PathBuf,
    pub events: usize,
    pub frames: usize,
}

pub const GT_RANGE_FILE: &str = "gt_range.pfm";
pub const CONFIG_FILE: &str = "config.txt";

/// Writes a complete dataset directory: events, frames and their index,
/// calibration, ground-truth poses, the ground-truth range image at the
/// middle of the sequence, and a pipeline config pointing at it all.
pub fn write_dataset(params: &SynthParams, root: &Path) -> Result<SynthOutput> {
    let cam = params.camera()?;
    let scene = params.scene()?;
    let events = simulate(params, &scene, &cam)?;

    std::fs::create_dir_all(root.join("images")).map_err(|e| Error::io(root, e))?;
    write_file(&root.join(EVENTS_FILE), |w| write_events(w, &events))?;

    let mut index = Vec::new();
    for (i, &t) in params.frame_times().iter().enumerate() {
        let pose = scene.trajectory.interpolate(t)?;
        let frame = render_frame(&scene, &pose, &cam)?;
        let rel = PathBuf::from(format!("images/frame_{i:08}.pgm"));
        write_file(&root.join(&rel), |w| write_pgm8(w, frame.width, frame.height, &frame.data))?;
        index.push(FrameEntry { t, path: rel });
    }
    write_text(&root.join(IMAGES_FILE), &write_frame_index(&index))?;
    write_text(&root.join(CALIB_FILE), &cam.format_calibration())?;
    write_text(&root.join(GROUNDTRUTH_FILE), &format_poses(scene.trajectory.poses()))?;

    let mid = scene.trajectory.interpolate(0.5 * params.duration.max(0.0))?;
    let gt = ground_truth_range(&scene, &mid, &cam)?;
    write_file(&root.join(GT_RANGE_FILE), |w| write_pfm(w, gt.width, gt.height, &range_values(&gt)))?;
    write_text(&root.join(CONFIG_FILE), &suggested_config(params))?;

    Ok(SynthOutput {
        root: root.to_owned(),
        events: events.len(),
        frames: index.len(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pipeline config for the generated dataset: the whole sequence as one
/// window referenced at its middle, a depth range bracketing the plane, and
/// the plane as evaluation ground truth.
pub fn suggested_config(params: &SynthParams) -> String {
    format!(
        "# generated by `evfusion synth`\n\
         dataset = .\n\
         width = {}\n\
         height = {}\n\
         t_start = 0\n\
         t_end = {}\n\
         t_ref = {}\n\
         dsi.z_min = {}\n\
         dsi.z_max = {}\n\
         eval.plane_depth = {}\n\
         eval.segment_len = 1\n",
        params.width,
        params.height,
        params.duration,
        0.5 * params.duration,
        0.5 * params.depth,
        2.0 * params.depth,
        params.depth,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn cam() -> CameraModel {
        CameraModel::pinhole(64, 48, 60.0, 60.0, 31.5, 23.5).unwrap()
    }

    fn slider(speed: f64) -> Trajectory {
        Trajectory::new(vec![
            Pose::identity(0.0),
            Pose::new(1.0, Vector3::new(speed, 0.0, 0.0), UnitQuaternion::identity()),
        ])
        .unwrap()
    }

    fn scene(texture: Texture, speed: f64) -> PlaneScene {
        PlaneScene::new(texture, 1.0, slider(speed), 0.2).unwrap()
    }

    #[test]
    fn uniform_texture_renders_uniform() {
        let s = scene(Texture::Uniform(80.0), 0.1);
        let f = render_frame(&s, &Pose::identity(0.0), &cam()).unwrap();
        assert!(f.data.iter().all(|&v| v == 80));
    }

    #[test]
    fn optical_axis_sees_texture_origin() {
        let tex = Texture::blobs(3, 64, 0.01, 40, (2.0, 6.0), 30.0, 220.0);
        let t0 = tex.sample(0.0, 0.0);
        let s = scene(tex, 0.1);
        let c = CameraModel::pinhole(64, 48, 60.0, 60.0, 31.0, 23.0).unwrap();
        let f = render_frame(&s, &Pose::identity(0.0), &c).unwrap();
        assert_eq!(f.get(31, 23), t0.round() as u8);
    }

    #[test]
    fn plane_behind_camera_is_an_error() {
        let s = scene(Texture::Uniform(1.0), 0.1);
        let behind = Pose::new(0.0, Vector3::new(0.0, 0.0, 2.0), UnitQuaternion::identity());
        assert!(render_frame(&s, &behind, &cam()).is_err());
        assert!(PlaneScene::new(Texture::Uniform(1.0), -1.0, slider(0.1), 0.2).is_err());
    }

    #[test]
    fn lateral_translation_shifts_image() {
        // fx * delta / z = 60 * (0.1 / 1) = 6 px.
        let tex = Texture::blobs(5, 256, 1.0 / 60.0, 200, (2.0, 5.0), 20.0, 230.0);
        let s = scene(tex, 0.1);
        let a = render_frame(&s, &Pose::identity(0.0), &cam()).unwrap();
        let b = render_frame(&s, &s.trajectory.interpolate(1.0).unwrap(), &cam()).unwrap();
        let score = |shift: isize| -> f64 {
            let mut sum = 0.0;
            for y in 0..48 {
                for x in 10..54 {
                    let xa = (x as isize + shift) as usize;
                    let da = a.get(xa, y) as f64 - 128.0;
                    let db = b.get(x, y) as f64 - 128.0;
                    sum += da * db;
                }
            }
            sum
        };
        let best = (-9..=9).max_by(|&p, &q| score(p).total_cmp(&score(q))).unwrap();
        // Moving right makes the scene slide left: b(x) = a(x + 6).
        assert_eq!(best, 6);
    }

    #[test]
    fn static_camera_no_events() {
        let tex = Texture::blobs(1, 64, 0.02, 30, (2.0, 6.0), 30.0, 220.0);
        let s = scene(tex, 0.0);
        assert!(generate_events(&s, &cam(), 0.0, 1.0, 200.0).unwrap().is_empty());
    }

    #[test]
    fn uniform_texture_no_events() {
        let s = scene(Texture::Uniform(100.0), 0.3);
        assert!(generate_events(&s, &cam(), 0.0, 1.0, 200.0).unwrap().is_empty());
    }

    #[test]
    fn step_edge_event_counts() {
        // The edge at world x = 0.2 sweeps over image columns as the camera
        // moves 0.3 m right at depth 1: it starts at u = 31.5 + 12 = 43.5
        // and ends at 31.5 - 6 = 25.5.
        let (low, high) = (40.0, 200.0);
        let s = scene(Texture::StepX { edge_x: 0.2, low, high }, 0.3);
        let events = generate_events(&s, &cam(), 0.0, 1.0, 500.0).unwrap();
        let expected = ((high + 1.0) / (low + 1.0)).ln() / 0.2;
        let expected = expected.floor() as usize;
        let mut per_pixel = vec![0usize; 64 * 48];
        for e in &events {
            per_pixel[e.y as usize * 64 + e.x as usize] += 1;
            assert!(e.polarity, "each pixel sweeps from the dark side onto the bright side");
        }
        for y in 0..48 {
            for x in 0..64 {
                let crossed = (26..=43).contains(&x);
                let n = per_pixel[y * 64 + x];
                assert_eq!(n, if crossed { expected } else { 0 }, "pixel ({x}, {y})");
            }
        }
        assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
        assert!(events.iter().all(|e| (0.0..=1.0).contains(&e.t)));
    }

    #[test]
    fn event_count_linear_in_contrast() {
        let counts: Vec<f64> = [10.0, 20.0, 30.0]
            .iter()
            .map(|&a| {
                let tex = Texture::blobs(9, 128, 1.0 / 60.0, 80, (3.0, 8.0), 120.0 - a, 120.0 + a);
                let s = PlaneScene::new(tex, 1.0, slider(0.2), 0.01).unwrap();
                generate_events(&s, &cam(), 0.0, 1.0, 300.0).unwrap().len() as f64
            })
            .collect();
        assert!(counts[0] > 0.0);
        for (i, c) in counts.iter().enumerate() {
            let ratio = c / counts[0];
            assert!((ratio - (i + 1) as f64).abs() < 0.1 * (i + 1) as f64, "{counts:?}");
        }
    }

    #[test]
    fn ground_truth_center_and_translation_invariance() {
        let s = scene(Texture::Uniform(1.0), 0.3);
        let c = CameraModel::pinhole(64, 48, 60.0, 60.0, 31.0, 23.0).unwrap();
        let a = ground_truth_range(&s, &Pose::identity(0.0), &c).unwrap();
        assert_eq!(a.depth(31, 23), Some(1.0));
        let moved = Pose::new(0.0, Vector3::new(0.4, -0.2, 0.0), UnitQuaternion::identity());
        assert_eq!(ground_truth_range(&s, &moved, &c).unwrap(), a);
    }

    #[test]
    fn ground_truth_rotated_matches_brute_force() {
        let s = scene(Texture::Uniform(1.0), 0.3);
        let pose = Pose::new(0.0, Vector3::new(0.1, 0.2, -0.5), UnitQuaternion::from_euler_angles(0.2, -0.3, 0.5));
        let ri = ground_truth_range(&s, &pose, &cam()).unwrap();
        for (x, y) in [(0, 0), (63, 47), (10, 30), (31, 23)] {
            // Bisection on the ray depth until the world point reaches z = 1.
            let n = cam().pixel_to_normalized(x as f64, y as f64);
            let world_z = |d: f64| pose.to_world(&Vector3::new(n.x * d, n.y * d, d)).z - 1.0;
            let (mut lo, mut hi) = (0.0, 100.0);
            assert!(world_z(lo) < 0.0 && world_z(hi) > 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if world_z(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((ri.depth(x, y).unwrap() - lo).abs() < 1e-9);
        }
    }

    #[test]
    fn default_params_are_consistent() {
        let p = SynthParams::default();
        let poses = p.poses();
        assert_eq!(poses.len(), 401);
        assert_eq!(poses.last().unwrap().t, 2.0);
        assert_eq!(p.frame_times().len(), 51);
        let zero = SynthParams { duration: 0.0, ..p };
        assert_eq!(zero.poses().len(), 2);
        assert_eq!(zero.frame_times(), vec![0.0]);
    }
}
