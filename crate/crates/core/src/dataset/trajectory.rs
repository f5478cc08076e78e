use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};

use super::{for_each_record, parse_field, Parsed, Warning};
use crate::error::{Error, Result};

const SOURCE: &str = "groundtruth";
const NORM_WARN_TOLERANCE: f64 = 1e-3;

/// Camera-to-world pose at a timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(t: f64, translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Pose {
            t,
            translation,
            rotation,
        }
    }

    pub fn identity(t: f64) -> Self {
        Pose::new(t, Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Camera frame to world frame.
    #[inline]
    pub fn to_world(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_cam + self.translation
    }

    /// World frame to camera frame.
    #[inline]
    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p_world - self.translation))
    }

    /// Pose of `other`'s camera expressed in this camera's frame.
    pub fn relative(&self, other: &Pose) -> Isometry3<f64> {
        self.isometry().inverse() * other.isometry()
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.isometry() * p
    }
}

/// Time-ordered camera poses.
#[derive(Debug, Clone)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "trajectory needs at least 2 poses, got {}",
                poses.len()
            )));
        }
        if let Some(i) = poses.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidArgument(format!(
                "trajectory timestamps not strictly increasing at index {} ({} after {})",
                i + 1,
                poses[i + 1].t,
                poses[i].t
            )));
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn start(&self) -> f64 {
        self.poses[0].t
    }

    pub fn end(&self) -> f64 {
        self.poses[self.poses.len() - 1].t
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }

    /// Pose at `t`: linear in translation, spherical-linear in rotation.
    /// Sample timestamps reproduce their pose exactly.
    pub fn interpolate(&self, t: f64) -> Result<Pose> {
        if !self.contains(t) {
            return Err(Error::OutOfRange(format!(
                "time {t} outside trajectory [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        // First pose with timestamp > t; t >= start so idx >= 1.
        let idx = self.poses.partition_point(|p| p.t <= t);
        let a = &self.poses[idx - 1];
        if a.t == t || idx == self.poses.len() {
            return Ok(Pose { t, ..*a });
        }
        let b = &self.poses[idx];
        let s = (t - a.t) / (b.t - a.t);
        Ok(Pose {
            t,
            translation: a.translation.lerp(&b.translation, s),
            rotation: slerp(&a.rotation, &b.rotation, s),
        })
    }
}

/// Shortest-arc spherical interpolation, falling back to normalized lerp for
/// nearly identical rotations.
pub(crate) fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let qa = a.quaternion().coords;
    let mut qb = b.quaternion().coords;
    let mut cos = qa.dot(&qb);
    if cos < 0.0 {
        qb = -qb;
        cos = -cos;
    }
    let coords = if cos > 1.0 - 1e-12 {
        qa.lerp(&qb, s)
    } else {
        let theta = cos.min(1.0).acos();
        let sin = theta.sin();
        qa * (((1.0 - s) * theta).sin() / sin) + qb * ((s * theta).sin() / sin)
    };
    UnitQuaternion::from_quaternion(Quaternion::from(coords))
}

/// Parses `groundtruth.txt` lines `t px py pz qx qy qz qw`. Quaternions are
/// renormalized; a norm off by more than 1e-3 produces a warning.
pub fn parse_poses<R: BufRead>(reader: R) -> Result<Parsed<Vec<Pose>>> {
    let mut poses = Vec::new();
    let mut warnings = Vec::new();
    for_each_record(reader, SOURCE, |line, fields| {
        if fields.len() != 8 {
            return Err(Error::parse(
                SOURCE,
                line,
                format!("expected 8 fields \"t px py pz qx qy qz qw\", found {}", fields.len()),
            ));
        }
        let mut v = [0.0f64; 8];
        for (slot, field) in v.iter_mut().zip(fields) {
            *slot = parse_field(SOURCE, line, "pose value", field)?;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(SOURCE, line, "non-finite pose value"));
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        let norm = q.norm();
        if norm == 0.0 {
            return Err(Error::parse(SOURCE, line, "zero quaternion"));
        }
        if (norm - 1.0).abs() > NORM_WARN_TOLERANCE {
            let message = format!("quaternion norm {norm:.6} renormalized");
            log::warn!("{SOURCE}:{line}: {message}");
            warnings.push(Warning { line, message });
        }
        poses.push(Pose::new(
            v[0],
            Vector3::new(v[1], v[2], v[3]),
            UnitQuaternion::from_quaternion(q),
        ));
        Ok(())
    })?;
    Ok(Parsed {
        value: poses,
        warnings,
    })
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut out = String::new();
    for p in poses {
        let q = p.rotation.quaternion();
        let _ = writeln!(
            out,
            "{:.9} {:.12} {:.12} {:.12} {:.12} {:.12} {:.12} {:.12}",
            p.t, p.translation.x, p.translation.y, p.translation.z, q.i, q.j, q.k, q.w
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn z_rotation(angle: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
    }

    #[test]
    fn single_identity_pose_fails_trajectory() {
        let parsed = parse_poses("0 0 0 0 0 0 0 1".as_bytes()).unwrap();
        assert_eq!(parsed.value.len(), 1);
        assert_eq!(parsed.value[0].rotation, UnitQuaternion::identity());
        assert!(parsed.warnings.is_empty());
        assert!(Trajectory::new(parsed.value).is_err());
    }

    #[test]
    fn two_pose_trajectory() {
        let parsed = parse_poses("0 0 0 0 0 0 0 1\r\n1\t2 0 0 0 0 0 1\n".as_bytes()).unwrap();
        let traj = Trajectory::new(parsed.value).unwrap();
        assert_eq!(traj.poses()[1].translation, Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn renormalizes_with_warning() {
        let parsed = parse_poses("0 0 0 0 9 9 9 9".as_bytes()).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        let q = parsed.value[0].rotation;
        assert_abs_diff_eq!(q.quaternion().norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.w, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_poses("0 0 0".as_bytes()).is_err());
        assert!(parse_poses("0 0 0 0 0 0 0 0".as_bytes()).is_err());
        let dup = parse_poses("0 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1".as_bytes()).unwrap();
        assert!(Trajectory::new(dup.value).is_err());
    }

    fn two_pose(a: Pose, b: Pose) -> Trajectory {
        Trajectory::new(vec![a, b]).unwrap()
    }

    #[test]
    fn reproduces_samples_exactly() {
        let a = Pose::new(0.0, Vector3::new(0.1, 0.2, 0.3), z_rotation(0.3));
        let b = Pose::new(0.5, Vector3::new(1.0, -2.0, 0.5), z_rotation(1.1));
        let c = Pose::new(1.25, Vector3::new(3.0, 0.0, 0.0), z_rotation(-0.4));
        let traj = Trajectory::new(vec![a, b, c]).unwrap();
        for p in [a, b, c] {
            assert_eq!(traj.interpolate(p.t).unwrap(), p);
        }
    }

    #[test]
    fn translation_midpoint() {
        let traj = two_pose(
            Pose::identity(0.0),
            Pose::new(1.0, Vector3::new(2.0, 0.0, 0.0), UnitQuaternion::identity()),
        );
        let mid = traj.interpolate(0.5).unwrap();
        assert_abs_diff_eq!(mid.translation, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rotation_midpoint_is_half_angle() {
        let traj = two_pose(
            Pose::identity(0.0),
            Pose::new(1.0, Vector3::zeros(), z_rotation(FRAC_PI_2)),
        );
        let mid = traj.interpolate(0.5).unwrap();
        assert_abs_diff_eq!(mid.rotation.angle_to(&z_rotation(FRAC_PI_2 / 2.0)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn slerp_takes_short_arc() {
        let a = z_rotation(0.1);
        let b = UnitQuaternion::from_quaternion(-z_rotation(0.3).into_inner());
        let mid = slerp(&a, &b, 0.5);
        assert_abs_diff_eq!(mid.angle_to(&z_rotation(0.2)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn outside_span_is_range_error() {
        let traj = two_pose(Pose::identity(1.0), Pose::identity(2.0));
        assert!(matches!(traj.interpolate(0.999), Err(Error::OutOfRange(_))));
        assert!(traj.interpolate(2.001).is_err());
    }

    #[test]
    fn interpolation_is_continuous() {
        let traj = Trajectory::new(vec![
            Pose::new(0.0, Vector3::zeros(), z_rotation(0.0)),
            Pose::new(1.0, Vector3::new(0.3, 0.1, 0.0), z_rotation(0.8)),
            Pose::new(2.0, Vector3::new(0.5, 0.5, 0.2), UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0)),
        ])
        .unwrap();
        let eps = 1e-6;
        let mut t = 0.0;
        while t + eps <= 2.0 {
            let p = traj.interpolate(t).unwrap();
            let q = traj.interpolate(t + eps).unwrap();
            assert!((p.translation - q.translation).norm() < 1e-5);
            assert!(p.rotation.angle_to(&q.rotation) < 1e-5);
            t += 0.0371;
        }
        // Across a sample timestamp.
        let p = traj.interpolate(1.0 - eps).unwrap();
        let q = traj.interpolate(1.0 + eps).unwrap();
        assert!((p.translation - q.translation).norm() < 1e-5);
        assert!(p.rotation.angle_to(&q.rotation) < 1e-5);
    }

    #[test]
    fn format_round_trip() {
        let poses = vec![
            Pose::new(0.5, Vector3::new(0.1, -0.2, 0.3), z_rotation(0.7)),
            Pose::new(0.75, Vector3::new(1.0, 2.0, 3.0), UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3)),
        ];
        let back = parse_poses(format_poses(&poses).as_bytes()).unwrap().value;
        for (a, b) in poses.iter().zip(&back) {
            assert_abs_diff_eq!(a.t, b.t, epsilon = 1e-12);
            assert_abs_diff_eq!(a.translation, b.translation, epsilon = 1e-11);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-10);
        }
    }
}
