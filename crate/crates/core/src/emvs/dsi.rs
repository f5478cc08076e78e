use std::io::Write;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use super::DsiConfig;
use crate::dataset::{CameraModel, Event, Pose, Trajectory};
use crate::error::{Error, Result};

/// Events per partial grid below which voting stays on one thread.
const MIN_EVENTS_PER_WORKER: usize = 16_384;
/// Upper bound on private count grids alive at once.
const MAX_WORKERS: usize = 8;

/// Vote volume: `nx * ny` reference-view pixels times `nz` depth planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dsi {
    pub config: DsiConfig,
    pub ref_pose: Pose,
    /// Sensor camera the events were recorded with.
    pub cam: CameraModel,
    /// Plane-major counts: index `(k * ny + y) * nx + x`.
    counts: Vec<u32>,
    /// Events dropped because their timestamp lies outside the trajectory.
    pub skipped_events: usize,
}

impl Dsi {
    pub fn zeros(config: DsiConfig, ref_pose: Pose, cam: CameraModel) -> Self {
        Dsi {
            config,
            ref_pose,
            cam,
            counts: vec![0; config.nx * config.ny * config.nz],
            skipped_events: 0,
        }
    }

    /// Rectified pinhole camera of the voxel grid.
    pub fn grid_camera(&self) -> CameraModel {
        self.cam.rectified().scaled_to(self.config.nx, self.config.ny)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, k: usize) -> usize {
        (k * self.config.ny + y) * self.config.nx + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, k: usize) -> u32 {
        self.counts[self.index(x, y, k)]
    }

    pub fn set(&mut self, x: usize, y: usize, k: usize, count: u32) {
        let i = self.index(x, y, k);
        self.counts[i] = count;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Counts of plane `k` as a row-major `ny x nx` slice.
    pub fn plane(&self, k: usize) -> &[u32] {
        let n = self.config.nx * self.config.ny;
        &self.counts[k * n..(k + 1) * n]
    }

    pub fn total_votes(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Raw dump: a text header line `nx ny nz z_min z_max sampling` followed
    /// by the counts as little-endian u32 in plane-major order.
    pub fn write_raw<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let c = &self.config;
        writeln!(w, "{} {} {} {} {} {}", c.nx, c.ny, c.nz, c.z_min, c.z_max, c.sampling)?;
        let mut bytes = Vec::with_capacity(self.counts.len() * 4);
        for &v in &self.counts {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)
    }
}

/// Normalized ray direction for every sensor pixel.
#[derive(Debug, Clone)]
pub struct UndistortTable {
    width: usize,
    rays: Vec<Vector2<f64>>,
}

impl UndistortTable {
    pub fn new(cam: &CameraModel) -> Result<Self> {
        let mut rays = Vec::with_capacity(cam.width * cam.height);
        for y in 0..cam.height {
            for x in 0..cam.width {
                rays.push(cam.undistort_pixel(x as f64, y as f64)?);
            }
        }
        Ok(UndistortTable {
            width: cam.width,
            rays,
        })
    }

    #[inline]
    pub fn get(&self, x: u16, y: u16) -> Vector2<f64> {
        self.rays[y as usize * self.width + x as usize]
    }
}

/// Per-plane constants shared by all events.
struct PlaneGrid {
    nx: usize,
    ny: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    depths: Vec<f64>,
    inv_depths: Vec<f64>,
}

impl PlaneGrid {
    /// Votes for one ray given in reference-camera coordinates.
    ///
    /// On the plane z = Z the ray point projects to
    /// `x/z = dx/dz + (ox - oz * dx/dz) / Z`, affine in 1/Z.
    #[inline]
    fn vote(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, counts: &mut [u32]) {
        if dir.z == 0.0 {
            return;
        }
        let ax = dir.x / dir.z;
        let ay = dir.y / dir.z;
        let bx = origin.x - origin.z * ax;
        let by = origin.y - origin.z * ay;
        let plane_len = self.nx * self.ny;
        for (k, (&z, &w)) in self.depths.iter().zip(&self.inv_depths).enumerate() {
            // Intersection must lie in front of the event camera.
            if (z - origin.z) / dir.z <= 0.0 {
                continue;
            }
            let u = (self.fx * (ax + bx * w) + self.cx).round();
            let v = (self.fy * (ay + by * w) + self.cy).round();
            if u < 0.0 || v < 0.0 || u >= self.nx as f64 || v >= self.ny as f64 {
                continue;
            }
            counts[k * plane_len + v as usize * self.nx + u as usize] += 1;
        }
    }
}

/// Accumulates ray/plane intersections of `events` into a vote volume
/// anchored at `ref_pose`.
///
/// Event pixels are undistorted, their rays formed in the camera at the
/// event's own (interpolated) pose, moved into the reference frame and
/// intersected with every depth plane; the nearest voxel on each plane gets
/// one vote. Events outside the trajectory span are skipped and counted.
/// The result does not depend on event order or thread count.
pub fn build_dsi(
    events: &[Event],
    traj: &Trajectory,
    cam: &CameraModel,
    ref_pose: &Pose,
    cfg: &DsiConfig,
) -> Result<Dsi> {
    let table = UndistortTable::new(cam)?;
    build_dsi_with_table(events, traj, cam, &table, ref_pose, cfg)
}

/// [`build_dsi`] with a precomputed undistortion table, for callers that vote
/// many windows with one camera.
pub fn build_dsi_with_table(
    events: &[Event],
    traj: &Trajectory,
    cam: &CameraModel,
    table: &UndistortTable,
    ref_pose: &Pose,
    cfg: &DsiConfig,
) -> Result<Dsi> {
    cfg.validate()?;
    if let Some(ev) = events
        .iter()
        .find(|e| e.x as usize >= cam.width || e.y as usize >= cam.height)
    {
        return Err(Error::InvalidArgument(format!(
            "event pixel ({}, {}) outside {}x{} sensor",
            ev.x, ev.y, cam.width, cam.height
        )));
    }
    let mut dsi = Dsi::zeros(*cfg, *ref_pose, *cam);
    let grid_cam = dsi.grid_camera();
    let depths = cfg.plane_depths();
    let grid = PlaneGrid {
        nx: cfg.nx,
        ny: cfg.ny,
        fx: grid_cam.fx,
        fy: grid_cam.fy,
        cx: grid_cam.cx,
        cy: grid_cam.cy,
        inv_depths: depths.iter().map(|z| 1.0 / z).collect(),
        depths,
    };
    let ref_inv = ref_pose.isometry().inverse();

    let vote_chunk = |chunk: &[Event], counts: &mut [u32]| -> usize {
        let mut skipped = 0;
        for ev in chunk {
            let Ok(pose) = traj.interpolate(ev.t) else {
                skipped += 1;
                continue;
            };
            let rel = ref_inv * pose.isometry();
            let n = table.get(ev.x, ev.y);
            let origin = rel.translation.vector;
            let dir = rel.rotation * Vector3::new(n.x, n.y, 1.0);
            grid.vote(&origin, &dir, counts);
        }
        skipped
    };

    let workers = (events.len() / MIN_EVENTS_PER_WORKER)
        .clamp(1, MAX_WORKERS)
        .min(rayon::current_num_threads().max(1));
    if workers == 1 {
        dsi.skipped_events = vote_chunk(events, &mut dsi.counts);
    } else {
        let chunk_len = events.len().div_ceil(workers);
        let partials: Vec<(Vec<u32>, usize)> = events
            .par_chunks(chunk_len)
            .map(|chunk| {
                let mut counts = vec![0u32; dsi.counts.len()];
                let skipped = vote_chunk(chunk, &mut counts);
                (counts, skipped)
            })
            .collect();
        for (counts, skipped) in partials {
            dsi.skipped_events += skipped;
            for (acc, c) in dsi.counts.iter_mut().zip(counts) {
                *acc += c;
            }
        }
    }
    if dsi.skipped_events > 0 {
        log::warn!(
            "{} of {} events outside the trajectory span were skipped",
            dsi.skipped_events,
            events.len()
        );
    }
    Ok(dsi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emvs::DepthSampling;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> CameraModel {
        CameraModel::pinhole(64, 48, 60.0, 60.0, 31.5, 23.5).unwrap()
    }

    fn config() -> DsiConfig {
        DsiConfig {
            nx: 64,
            ny: 48,
            nz: 12,
            z_min: 0.5,
            z_max: 4.0,
            sampling: DepthSampling::InverseDepth,
        }
    }

    fn lateral_trajectory() -> Trajectory {
        Trajectory::new(vec![
            Pose::identity(0.0),
            Pose::new(1.0, Vector3::new(0.3, 0.05, 0.0), UnitQuaternion::from_euler_angles(0.0, 0.05, 0.0)),
        ])
        .unwrap()
    }

    fn random_events(n: usize, seed: u64) -> Vec<Event> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events: Vec<Event> = (0..n)
            .map(|_| Event {
                t: rng.random_range(0.0..1.0),
                x: rng.random_range(0..64),
                y: rng.random_range(0..48),
                polarity: rng.random(),
            })
            .collect();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        events
    }

    /// Explicit line/plane intersection in world coordinates.
    fn oracle_votes(events: &[Event], traj: &Trajectory, cam: &CameraModel, ref_pose: &Pose, cfg: &DsiConfig) -> Vec<u32> {
        let mut counts = vec![0u32; cfg.nx * cfg.ny * cfg.nz];
        let normal = ref_pose.rotation * Vector3::z();
        for ev in events {
            let pose = traj.interpolate(ev.t).unwrap();
            let n = cam.pixel_to_normalized(ev.x as f64, ev.y as f64);
            let center = pose.translation;
            let dir = pose.rotation * Vector3::new(n.x, n.y, 1.0);
            for k in 0..cfg.nz {
                let z = cfg.depth_of_plane(k).unwrap();
                let plane_point = ref_pose.to_world(&Vector3::new(0.0, 0.0, z));
                let denom = normal.dot(&dir);
                if denom == 0.0 {
                    continue;
                }
                let lambda = normal.dot(&(plane_point - center)) / denom;
                if lambda <= 0.0 {
                    continue;
                }
                let p_ref = ref_pose.to_camera(&(center + dir * lambda));
                let u = (cam.fx * p_ref.x / p_ref.z + cam.cx).round();
                let v = (cam.fy * p_ref.y / p_ref.z + cam.cy).round();
                if u >= 0.0 && v >= 0.0 && (u as usize) < cfg.nx && (v as usize) < cfg.ny {
                    counts[(k * cfg.ny + v as usize) * cfg.nx + u as usize] += 1;
                }
            }
        }
        counts
    }

    #[test]
    fn event_at_reference_votes_its_own_pixel() {
        let traj = lateral_trajectory();
        let ref_pose = traj.interpolate(0.0).unwrap();
        let ev = Event { t: 0.0, x: 17, y: 30, polarity: true };
        let dsi = build_dsi(&[ev], &traj, &camera(), &ref_pose, &config()).unwrap();
        assert_eq!(dsi.total_votes(), 12);
        for k in 0..12 {
            assert_eq!(dsi.get(17, 30, k), 1);
        }
    }

    #[test]
    fn no_events_no_votes() {
        let traj = lateral_trajectory();
        let dsi = build_dsi(&[], &traj, &camera(), &traj.poses()[0], &config()).unwrap();
        assert_eq!(dsi.total_votes(), 0);
        assert_eq!(dsi.counts().len(), 64 * 48 * 12);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let traj = lateral_trajectory();
        let ref_pose = traj.interpolate(0.5).unwrap();
        let events = random_events(100, 7);
        let dsi = build_dsi(&events, &traj, &camera(), &ref_pose, &config()).unwrap();
        let oracle = oracle_votes(&events, &traj, &camera(), &ref_pose, &config());
        assert!(dsi.total_votes() > 0);
        assert_eq!(dsi.counts(), &oracle[..]);
    }

    #[test]
    fn skips_events_outside_trajectory() {
        let traj = lateral_trajectory();
        let events = [
            Event { t: -0.1, x: 1, y: 1, polarity: true },
            Event { t: 0.5, x: 1, y: 1, polarity: true },
            Event { t: 1.5, x: 1, y: 1, polarity: true },
        ];
        let dsi = build_dsi(&events, &traj, &camera(), &traj.poses()[0], &config()).unwrap();
        assert_eq!(dsi.skipped_events, 2);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let traj = lateral_trajectory();
        let ref_pose = traj.interpolate(0.3).unwrap();
        let events = random_events(3 * MIN_EVENTS_PER_WORKER + 11, 3);
        let parallel = build_dsi(&events, &traj, &camera(), &ref_pose, &config()).unwrap();
        let mut serial = vec![0u32; parallel.counts().len()];
        for chunk in events.chunks(997) {
            let part = build_dsi(chunk, &traj, &camera(), &ref_pose, &config()).unwrap();
            for (a, b) in serial.iter_mut().zip(part.counts()) {
                *a += b;
            }
        }
        assert_eq!(parallel.counts(), &serial[..]);
    }

    #[test]
    fn monotone_in_events() {
        let traj = lateral_trajectory();
        let ref_pose = traj.interpolate(0.5).unwrap();
        let events = random_events(300, 11);
        let fewer = build_dsi(&events[..150], &traj, &camera(), &ref_pose, &config()).unwrap();
        let more = build_dsi(&events, &traj, &camera(), &ref_pose, &config()).unwrap();
        assert!(fewer.counts().iter().zip(more.counts()).all(|(a, b)| a <= b));
        assert!(more.total_votes() <= 300 * 12);
    }

    #[test]
    fn raw_dump_layout() {
        let traj = lateral_trajectory();
        let mut dsi = Dsi::zeros(config(), traj.poses()[0], camera());
        dsi.set(1, 0, 0, 0x0102_0304);
        let mut buf = Vec::new();
        dsi.write_raw(&mut buf).unwrap();
        let header_end = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&buf[..header_end], b"64 48 12 0.5 4 inverse-depth");
        assert_eq!(buf.len() - header_end - 1, 64 * 48 * 12 * 4);
        assert_eq!(&buf[header_end + 5..header_end + 9], &[4, 3, 2, 1]);
    }
}
