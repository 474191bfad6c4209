//! Smooth test functions for generator evaluations.

use num_complex::Complex64;

/// A smooth function with analytic derivatives up to order three.
/// Generator formulas assume f, f′, f″ and x·f′ vanish at ±∞.
pub trait TestFunction: Sync {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    fn d3(&self, x: f64) -> f64;
}

/// height · exp(−(x − center)² / (2 width²))
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl GaussianBump {
    pub fn new(center: f64, width: f64) -> Self {
        GaussianBump { center, width, height: 1.0 }
    }

    /// ∫ f(y) e^{−iξy} dy
    pub fn fourier(&self, xi: f64) -> Complex64 {
        let w = self.width;
        let amp = self.height * w * (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * w * w * xi * xi).exp();
        Complex64::from_polar(amp, -xi * self.center)
    }
}

impl Default for GaussianBump {
    fn default() -> Self {
        GaussianBump::new(0.0, 1.0)
    }
}

impl TestFunction for GaussianBump {
    fn value(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.height * (-0.5 * z * z).exp()
    }
    fn d1(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        -z / self.width * self.value(x)
    }
    fn d2(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        (z * z - 1.0) / (self.width * self.width) * self.value(x)
    }
    fn d3(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        (3.0 * z - z * z * z) / self.width.powi(3) * self.value(x)
    }
}

/// A constant. It does not vanish at infinity, but the generator still kills it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn value(&self, _: f64) -> f64 {
        self.0
    }
    fn d1(&self, _: f64) -> f64 {
        0.0
    }
    fn d2(&self, _: f64) -> f64 {
        0.0
    }
    fn d3(&self, _: f64) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        let g = GaussianBump { center: 0.4, width: 0.7, height: 2.0 };
        let h = 1e-5;
        for x in [-1.3, 0.0, 0.4, 2.2] {
            let fd1 = (g.value(x + h) - g.value(x - h)) / (2.0 * h);
            let fd2 = (g.d1(x + h) - g.d1(x - h)) / (2.0 * h);
            let fd3 = (g.d2(x + h) - g.d2(x - h)) / (2.0 * h);
            assert!((fd1 - g.d1(x)).abs() < 1e-8);
            assert!((fd2 - g.d2(x)).abs() < 1e-8);
            assert!((fd3 - g.d3(x)).abs() < 1e-7);
        }
    }

    #[test]
    fn fourier_transform_by_quadrature() {
        let g = GaussianBump { center: -0.3, width: 0.5, height: 1.5 };
        for xi in [0.0, 1.0, 4.0] {
            let n = 20_000;
            let (lo, hi) = (-10.0, 10.0);
            let dx = (hi - lo) / n as f64;
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let y = lo + (i as f64 + 0.5) * dx;
                s += Complex64::from_polar(g.value(y), -xi * y) * dx;
            }
            assert!((s - g.fourier(xi)).norm() < 1e-10);
        }
    }
}
