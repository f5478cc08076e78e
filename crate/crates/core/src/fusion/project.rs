use super::{ProjectedEvents, RangeImage};
use crate::dataset::{CameraModel, Pose};
use crate::emvs::{CloudPoint, PointCloud};

/// Projects world points into the rectified reference view.
///
/// Points behind the camera or outside the image are dropped; when two land
/// on one pixel the nearer depth wins.
pub fn project_map_points(cloud: &PointCloud, ref_pose: &Pose, cam: &CameraModel) -> ProjectedEvents {
    let rect = cam.rectified();
    let mut pe = ProjectedEvents::empty(cam.width, cam.height);
    for p in &cloud.points {
        let pc = ref_pose.to_camera(&p.position);
        let Some(uv) = rect.project(&pc) else {
            continue;
        };
        let (u, v) = (uv.x.round(), uv.y.round());
        if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
            continue;
        }
        pe.insert(u as usize, v as usize, pc.z);
    }
    pe
}

/// Back-projects every pixel with a depth to the world frame, keeping its
/// provenance.
pub fn range_image_to_cloud(ri: &RangeImage, ref_pose: &Pose, cam: &CameraModel) -> PointCloud {
    let rect = cam.rectified();
    let points = ri
        .cells()
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let (depth, provenance) = (*c)?;
            let (x, y) = (i % ri.width, i / ri.width);
            Some(CloudPoint {
                position: ref_pose.to_world(&rect.back_project(x as f64, y as f64, depth)),
                provenance: Some(provenance),
            })
        })
        .collect();
    PointCloud { points }
}
