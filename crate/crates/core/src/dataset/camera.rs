use nalgebra::{Matrix2, Vector2, Vector3};

use super::parse_field;
use crate::error::{Error, Result};

/// Gauss-Newton iteration budget for inverting the distortion model.
pub const UNDISTORT_MAX_ITERATIONS: usize = 50;
const UNDISTORT_TOLERANCE: f64 = 1e-13;

/// Radial-tangential (plumb bob) distortion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        *self == Distortion::default()
    }

    /// Maps an ideal normalized point to its distorted normalized position.
    pub fn apply(&self, p: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        Vector2::new(
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    fn jacobian(&self, p: Vector2<f64>) -> Matrix2<f64> {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        // d(radial)/d(r2)
        let dradial = self.k1 + r2 * (2.0 * self.k2 + 3.0 * r2 * self.k3);
        let dxdx = radial + 2.0 * x * x * dradial + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
        let dxdy = 2.0 * x * y * dradial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydx = 2.0 * x * y * dradial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydy = radial + 2.0 * y * y * dradial + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
        Matrix2::new(dxdx, dxdy, dydx, dydy)
    }

    /// Inverts [`Distortion::apply`] by Gauss-Newton.
    pub fn remove(&self, distorted: Vector2<f64>) -> Result<Vector2<f64>> {
        if self.is_zero() {
            return Ok(distorted);
        }
        let mut p = distorted;
        for _ in 0..UNDISTORT_MAX_ITERATIONS {
            let residual = self.apply(p) - distorted;
            if residual.norm() < UNDISTORT_TOLERANCE {
                return Ok(p);
            }
            let step = self
                .jacobian(p)
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular distortion jacobian".into()))?
                * residual;
            p -= step;
            if !p.x.is_finite() || !p.y.is_finite() {
                break;
            }
        }
        let residual = (self.apply(p) - distorted).norm();
        if residual < 1e-10 {
            return Ok(p);
        }
        Err(Error::Numerical(format!(
            "undistortion of ({:.6}, {:.6}) did not converge in {UNDISTORT_MAX_ITERATIONS} iterations",
            distorted.x, distorted.y
        )))
    }
}

/// Pinhole intrinsics plus radial-tangential distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub distortion: Distortion,
}

impl CameraModel {
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        distortion: Distortion,
    ) -> Result<Self> {
        let cam = CameraModel {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            distortion,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn pinhole(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(width, height, fx, fy, cx, cy, Distortion::default())
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Parses `calib.txt`: one line `fx fy cx cy k1 k2 p1 p2 k3`. The file
    /// carries no image size, so it is supplied by the caller.
    pub fn parse_calibration(text: &str, width: usize, height: usize) -> Result<Self> {
        let mut records = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (idx, line) = records
            .next()
            .ok_or_else(|| Error::parse("calib", 1, "empty calibration"))?;
        let line_no = idx + 1;
        if let Some((extra, _)) = records.next() {
            return Err(Error::parse("calib", extra + 1, "expected a single line"));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(Error::parse(
                "calib",
                line_no,
                format!("expected 9 values \"fx fy cx cy k1 k2 p1 p2 k3\", found {}", fields.len()),
            ));
        }
        let mut v = [0.0f64; 9];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = parse_field("calib", line_no, "calibration value", field)?;
        }
        Self::new(
            width,
            height,
            v[0],
            v[1],
            v[2],
            v[3],
            Distortion {
                k1: v[4],
                k2: v[5],
                p1: v[6],
                p2: v[7],
                k3: v[8],
            },
        )
        .map_err(|e| Error::parse("calib", line_no, e.to_string()))
    }

    pub fn format_calibration(&self) -> String {
        let d = &self.distortion;
        format!(
            "{} {} {} {} {} {} {} {} {}\n",
            self.fx, self.fy, self.cx, self.cy, d.k1, d.k2, d.p1, d.p2, d.k3
        )
    }

    /// The same intrinsics without distortion: the geometry of rectified
    /// images.
    pub fn rectified(&self) -> CameraModel {
        CameraModel {
            distortion: Distortion::default(),
            ..*self
        }
    }

    /// Intrinsics for a `width x height` resampling of this camera.
    pub fn scaled_to(&self, width: usize, height: usize) -> CameraModel {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraModel {
            width,
            height,
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            distortion: self.distortion,
        }
    }

    pub fn res(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Ideal normalized coordinates of a raw (distorted) pixel.
    pub fn undistort_pixel(&self, x: f64, y: f64) -> Result<Vector2<f64>> {
        if !self.contains(x, y) {
            return Err(Error::OutOfRange(format!(
                "pixel ({x}, {y}) for {}x{} image",
                self.width, self.height
            )));
        }
        let distorted = Vector2::new((x - self.cx) / self.fx, (y - self.cy) / self.fy);
        self.distortion.remove(distorted)
    }

    /// Raw pixel position of an ideal normalized point.
    pub fn distort_normalized(&self, p: Vector2<f64>) -> Vector2<f64> {
        let d = self.distortion.apply(p);
        Vector2::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy)
    }

    /// Pinhole inverse, ignoring distortion.
    #[inline]
    pub fn pixel_to_normalized(&self, u: f64, v: f64) -> Vector2<f64> {
        Vector2::new((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    /// Pinhole projection of a camera-frame point, ignoring distortion.
    /// `None` for points on or behind the image plane.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Camera-frame point at z-depth `depth` on the (rectified) ray through
    /// pixel `(u, v)`.
    #[inline]
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let n = self.pixel_to_normalized(u, v);
        Vector3::new(n.x * depth, n.y * depth, depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn parses_dataset_calibration() {
        let cam = CameraModel::parse_calibration(
            "199.0 198.0 132.0 110.0 -0.368 0.15 -0.0002 0.0007 0.0",
            240,
            180,
        )
        .unwrap();
        assert_eq!((cam.width, cam.height), (240, 180));
        assert_eq!((cam.fx, cam.fy, cam.cx, cam.cy), (199.0, 198.0, 132.0, 110.0));
        assert_eq!(
            cam.distortion,
            Distortion {
                k1: -0.368,
                k2: 0.15,
                p1: -0.0002,
                p2: 0.0007,
                k3: 0.0
            }
        );
    }

    #[test]
    fn distortion_free_calibration() {
        let cam = CameraModel::parse_calibration("1 1 120 90 0 0 0 0 0\r\n", 240, 180).unwrap();
        assert!(cam.distortion.is_zero());
    }

    #[test]
    fn wrong_field_count() {
        assert!(matches!(
            CameraModel::parse_calibration("1 2 3", 240, 180),
            Err(Error::Parse { .. })
        ));
        assert!(CameraModel::parse_calibration("", 240, 180).is_err());
    }

    #[test]
    fn rejects_invalid_intrinsics() {
        assert!(CameraModel::pinhole(240, 180, 0.0, 1.0, 120.0, 90.0).is_err());
        assert!(CameraModel::pinhole(240, 180, 1.0, 1.0, 240.0, 90.0).is_err());
        assert!(CameraModel::parse_calibration("1 1 0 90 0 0 0 0 0", 240, 180).is_err());
    }

    #[test]
    fn zero_distortion_principal_point() {
        let cam = CameraModel::pinhole(240, 180, 200.0, 190.0, 120.5, 90.25).unwrap();
        assert_eq!(cam.undistort_pixel(120.5, 90.25).unwrap(), Vector2::zeros());
        assert_eq!(cam.undistort_pixel(120.5 + 200.0 - 100.0, 90.25).unwrap().x, 0.5);
        let far = CameraModel::pinhole(400, 180, 200.0, 190.0, 120.0, 90.0).unwrap();
        assert_eq!(far.undistort_pixel(320.0, 90.0).unwrap(), Vector2::new(1.0, 0.0));
    }

    #[test]
    fn out_of_image_pixel() {
        let cam = CameraModel::pinhole(240, 180, 200.0, 200.0, 120.0, 90.0).unwrap();
        assert!(matches!(cam.undistort_pixel(240.0, 0.0), Err(Error::OutOfRange(_))));
        assert!(cam.undistort_pixel(-0.1, 0.0).is_err());
    }

    /// Solves x * (1 + k1 x^2) = target by bisection, independently of the
    /// Gauss-Newton path.
    fn bisect_radial(k1: f64, target: f64) -> f64 {
        let f = |x: f64| x * (1.0 + k1 * x * x) - target;
        let (mut lo, mut hi) = (0.0, target * 2.0);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn radial_inverse_matches_bisection_oracle() {
        let cam = CameraModel::new(
            240,
            180,
            200.0,
            200.0,
            120.0,
            90.0,
            Distortion {
                k1: -0.3,
                ..Default::default()
            },
        )
        .unwrap();
        let ideal = cam.undistort_pixel(170.0, 90.0).unwrap();
        let oracle = bisect_radial(-0.3, 50.0 / 200.0);
        assert!((ideal.x - oracle).abs() < 1e-6, "{} vs {}", ideal.x, oracle);
        assert!(ideal.y.abs() < 1e-15);
        let back = cam.distort_normalized(ideal);
        assert_abs_diff_eq!(back.x, 170.0, epsilon = 1e-6);
        assert_abs_diff_eq!(back.y, 90.0, epsilon = 1e-6);
    }

    #[test]
    fn scaling_preserves_pixel_centers() {
        let cam = CameraModel::pinhole(240, 180, 200.0, 200.0, 119.5, 89.5).unwrap();
        let half = cam.scaled_to(120, 90);
        assert_abs_diff_eq!(half.cx, 59.5);
        assert_abs_diff_eq!(half.fx, 100.0);
        assert_eq!(cam.scaled_to(240, 180), cam);
    }

    proptest! {
        #[test]
        fn zero_distortion_is_closed_form(x in 0.0f64..239.0, y in 0.0f64..179.0) {
            let cam = CameraModel::pinhole(240, 180, 199.0, 198.0, 132.0, 110.0).unwrap();
            let n = cam.undistort_pixel(x, y).unwrap();
            prop_assert!((n.x - (x - 132.0) / 199.0).abs() <= 1e-12);
            prop_assert!((n.y - (y - 110.0) / 198.0).abs() <= 1e-12);
        }

        #[test]
        fn dataset_distortion_round_trips(x in 0.0f64..239.0, y in 0.0f64..179.0) {
            let cam = CameraModel::parse_calibration(
                "199.0 198.0 132.0 110.0 -0.368 0.15 -0.0002 0.0007 0.0", 240, 180).unwrap();
            let n = cam.undistort_pixel(x, y).unwrap();
            let back = cam.distort_normalized(n);
            prop_assert!((back.x - x).abs() < 1e-8 && (back.y - y).abs() < 1e-8);
        }
    }
}
