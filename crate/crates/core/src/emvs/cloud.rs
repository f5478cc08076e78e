use nalgebra::Vector3;

use super::SemiDenseDepthMap;
use crate::dataset::{CameraModel, Pose};

/// Where a depth came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Recovered from events by the mapper.
    Event,
    /// Interpolated from the frame segmentation.
    Fill,
}

impl Provenance {
    /// Tag written to PLY files: 0 for event-derived, 1 for fill-derived.
    pub fn code(self) -> u8 {
        match self {
            Provenance::Event => 0,
            Provenance::Fill => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    /// World coordinates in meters.
    pub position: Vector3<f64>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, position: Vector3<f64>, provenance: Option<Provenance>) {
        self.points.push(CloudPoint {
            position,
            provenance,
        });
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.points
            .iter()
            .filter(|p| p.provenance == Some(provenance))
            .count()
    }
}

/// Back-projects every valid pixel of the map to the world frame.
///
/// `cam` is the sensor camera; the map may be sampled on a coarser grid, in
/// which case the intrinsics are rescaled to it.
pub fn semi_dense_to_cloud(map: &SemiDenseDepthMap, ref_pose: &Pose, cam: &CameraModel) -> PointCloud {
    let grid = cam.rectified().scaled_to(map.width, map.height);
    let points = map
        .iter_valid()
        .map(|(x, y, z)| CloudPoint {
            position: ref_pose.to_world(&grid.back_project(x as f64, y as f64, z)),
            provenance: Some(Provenance::Event),
        })
        .collect();
    PointCloud { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::UnitQuaternion;

    #[test]
    fn empty_map_empty_cloud() {
        let cam = CameraModel::pinhole(10, 10, 5.0, 5.0, 5.0, 5.0).unwrap();
        let map = SemiDenseDepthMap::empty(10, 10);
        assert!(semi_dense_to_cloud(&map, &Pose::identity(0.0), &cam).is_empty());
    }

    #[test]
    fn principal_point_lies_on_optical_axis() {
        let cam = CameraModel::pinhole(10, 10, 5.0, 5.0, 4.0, 6.0).unwrap();
        let mut map = SemiDenseDepthMap::empty(10, 10);
        map.set(4, 6, Some(2.0));
        let cloud = semi_dense_to_cloud(&map, &Pose::identity(0.0), &cam);
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points[0].position, Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(cloud.points[0].provenance, Some(Provenance::Event));
    }

    #[test]
    fn reprojects_to_source_pixel() {
        let cam = CameraModel::pinhole(30, 20, 25.0, 24.0, 14.5, 9.5).unwrap();
        let pose = Pose::new(
            0.0,
            Vector3::new(0.3, -1.0, 2.0),
            UnitQuaternion::from_euler_angles(0.2, -0.4, 1.3),
        );
        let mut map = SemiDenseDepthMap::empty(30, 20);
        for (i, (x, y)) in [(0, 0), (29, 19), (7, 11), (15, 3)].into_iter().enumerate() {
            map.set(x, y, Some(0.5 + i as f64));
        }
        let cloud = semi_dense_to_cloud(&map, &pose, &cam);
        for (p, (x, y, z)) in cloud.points.iter().zip(map.iter_valid()) {
            let pc = pose.to_camera(&p.position);
            let uv = cam.project(&pc).unwrap();
            assert!((uv.x - x as f64).abs() < 0.5 && (uv.y - y as f64).abs() < 0.5);
            assert_abs_diff_eq!(pc.z, z, epsilon = 1e-9);
        }
    }
}
