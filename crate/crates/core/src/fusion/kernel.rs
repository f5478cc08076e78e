use std::f64::consts::PI;

use super::FillConfig;
use crate::error::{Error, Result};

/// Distance weighting used for depth interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightKernel {
    /// 1 inside unit distance, 1/d beyond.
    #[default]
    Inverse,
    /// Normal density with standard deviation `sigma`.
    Gauss,
    /// exp(-d).
    Exponential,
}

impl WeightKernel {
    pub const ALL: [WeightKernel; 3] = [WeightKernel::Inverse, WeightKernel::Gauss, WeightKernel::Exponential];

    pub fn name(self) -> &'static str {
        match self {
            WeightKernel::Inverse => "inverse",
            WeightKernel::Gauss => "gauss",
            WeightKernel::Exponential => "exponential",
        }
    }

    /// Natural log of the weight up to an additive constant.
    ///
    /// Interpolation only uses weight ratios, so the shift-free log form
    /// avoids underflow of the Gauss and exponential tails far from every
    /// sample.
    #[inline]
    pub(crate) fn log_weight(self, dist: f64, sigma: f64) -> f64 {
        match self {
            WeightKernel::Inverse => {
                if dist < 1.0 {
                    0.0
                } else {
                    -dist.ln()
                }
            }
            WeightKernel::Gauss => -dist * dist / (2.0 * sigma * sigma),
            WeightKernel::Exponential => -dist,
        }
    }
}

impl std::str::FromStr for WeightKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(WeightKernel::Inverse),
            "gauss" | "gaussian" => Ok(WeightKernel::Gauss),
            "exponential" | "exp" => Ok(WeightKernel::Exponential),
            other => Err(Error::Config(format!(
                "unknown kernel {other:?} (expected inverse, gauss or exponential)"
            ))),
        }
    }
}

impl std::fmt::Display for WeightKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Weight of a projected event at pixel distance `dist`.
pub fn kernel_weight(dist: f64, cfg: &FillConfig) -> f64 {
    match cfg.kernel {
        WeightKernel::Inverse => {
            if dist < 1.0 {
                1.0
            } else {
                1.0 / dist
            }
        }
        WeightKernel::Gauss => {
            let s = cfg.sigma;
            (-(dist * dist) / (2.0 * s * s)).exp() / ((2.0 * PI).sqrt() * s)
        }
        WeightKernel::Exponential => (-dist).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(kernel: WeightKernel) -> FillConfig {
        FillConfig::default().with_kernel(kernel)
    }

    #[test]
    fn inverse_kernel() {
        assert_eq!(kernel_weight(0.5, &cfg(WeightKernel::Inverse)), 1.0);
        assert_eq!(kernel_weight(0.0, &cfg(WeightKernel::Inverse)), 1.0);
        assert_eq!(kernel_weight(1.0, &cfg(WeightKernel::Inverse)), 1.0);
        assert_eq!(kernel_weight(2.0, &cfg(WeightKernel::Inverse)), 0.5);
    }

    #[test]
    fn gauss_kernel_peak() {
        // 1 / (sqrt(2 pi) * 5)
        assert_abs_diff_eq!(kernel_weight(0.0, &cfg(WeightKernel::Gauss)), 0.0797885, epsilon = 5e-8);
        assert_abs_diff_eq!(
            kernel_weight(5.0, &cfg(WeightKernel::Gauss)),
            0.0797884560802865 * (-0.5f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn exponential_kernel() {
        assert_eq!(kernel_weight(0.0, &cfg(WeightKernel::Exponential)), 1.0);
        assert_abs_diff_eq!(kernel_weight(2.0, &cfg(WeightKernel::Exponential)), (-2.0f64).exp());
    }

    #[test]
    fn weights_positive_and_non_increasing() {
        for kernel in WeightKernel::ALL {
            let c = cfg(kernel);
            let mut prev = f64::INFINITY;
            for i in 0..=1000 {
                let d = i as f64 * 0.1;
                let w = kernel_weight(d, &c);
                assert!(w > 0.0, "{kernel} at {d}");
                assert!(w <= prev, "{kernel} increases at {d}");
                prev = w;
            }
        }
    }

    #[test]
    fn log_weight_matches_weight_ratios() {
        for kernel in WeightKernel::ALL {
            let c = cfg(kernel);
            for (a, b) in [(0.0, 3.0), (0.5, 2.5), (1.5, 7.0), (4.0, 20.0)] {
                let ratio = kernel_weight(a, &c) / kernel_weight(b, &c);
                let log_ratio = kernel.log_weight(a, 5.0) - kernel.log_weight(b, 5.0);
                assert_abs_diff_eq!(ratio.ln(), log_ratio, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for k in WeightKernel::ALL {
            assert_eq!(k.name().parse::<WeightKernel>().unwrap(), k);
        }
        assert!("box".parse::<WeightKernel>().is_err());
    }
}
