//! Gamma-family special functions on the right half-plane.
//!
//! Arguments with small real part are first shifted upward by the
//! recurrence, then evaluated with the Stirling / asymptotic series.
//! Summing individual logarithms during the shift keeps `ln_gamma` on the
//! continuous branch that agrees with the real log-gamma on the positive axis.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Real part below which the recurrence is applied before the series.
const SHIFT: f64 = 15.0;

// B_{2k} / (2k (2k-1)), k = 1..10
const STIRLING: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
    43867.0 / 244_188.0,
    -174_611.0 / 125_400.0,
];

// B_{2k} / (2k), k = 1..10
const DIGAMMA_SERIES: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
    43867.0 / 14364.0,
    -174_611.0 / 6600.0,
];

// B_{2k}, k = 1..10
const BERNOULLI: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174_611.0 / 330.0,
];

fn check_domain(z: Complex64, name: &str) -> Result<()> {
    if !(z.re > 0.0) || !z.im.is_finite() || !z.re.is_finite() {
        return Err(Error::Domain(format!("{name} requires finite z with re(z) > 0, got {z}")));
    }
    Ok(())
}

fn shift_count(re: f64) -> usize {
    if re >= SHIFT {
        0
    } else {
        (SHIFT - re).ceil() as usize
    }
}

/// Principal-branch log Γ(z) for re(z) > 0.
pub fn ln_gamma(z: Complex64) -> Result<Complex64> {
    check_domain(z, "ln_gamma")?;
    Ok(ln_gamma_unchecked(z))
}

pub(crate) fn ln_gamma_unchecked(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        return Complex64::new(lgamma(z.re), 0.0);
    }
    let n = shift_count(z.re);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        acc += (z + k as f64).ln();
    }
    let w = z + n as f64;
    stirling_complex(w) - acc
}

fn stirling_complex(w: Complex64) -> Complex64 {
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut corr = Complex64::new(0.0, 0.0);
    let mut p = inv;
    for c in STIRLING {
        corr += p * c;
        p *= inv2;
    }
    (w - 0.5) * w.ln() - w + LN_SQRT_2PI + corr
}

/// Ψ(z) = Γ'(z)/Γ(z) for re(z) > 0.
pub fn digamma(z: Complex64) -> Result<Complex64> {
    check_domain(z, "digamma")?;
    Ok(digamma_unchecked(z))
}

pub(crate) fn digamma_unchecked(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        return Complex64::new(digamma_real(z.re), 0.0);
    }
    let n = shift_count(z.re);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        acc += (z + k as f64).inv();
    }
    let w = z + n as f64;
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut s = Complex64::new(0.0, 0.0);
    let mut p = inv2;
    for c in DIGAMMA_SERIES {
        s += p * c;
        p *= inv2;
    }
    w.ln() - inv * 0.5 - s - acc
}

/// Ψ'(z) for re(z) > 0.
pub fn trigamma(z: Complex64) -> Result<Complex64> {
    check_domain(z, "trigamma")?;
    let n = shift_count(z.re);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let v = z + k as f64;
        acc += (v * v).inv();
    }
    let w = z + n as f64;
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut s = Complex64::new(0.0, 0.0);
    let mut p = inv2 * inv;
    for c in BERNOULLI {
        s += p * c;
        p *= inv2;
    }
    Ok(inv + inv2 * 0.5 + s + acc)
}

/// Real log Γ(x), x > 0.
pub fn lgamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 30.0 && x.fract() == 0.0 {
        let mut prod = 1.0;
        for k in 2..(x as u32) {
            prod *= k as f64;
        }
        return prod.ln();
    }
    let n = shift_count(x);
    let mut prod = 1.0;
    for k in 0..n {
        prod *= x + k as f64;
    }
    let w = x + n as f64;
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let mut corr = 0.0;
    let mut p = inv;
    for c in STIRLING {
        corr += p * c;
        p *= inv2;
    }
    (w - 0.5) * w.ln() - w + LN_SQRT_2PI + corr - prod.ln()
}

/// Real Ψ(x), x > 0.
pub fn digamma_real(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let n = shift_count(x);
    let mut acc = 0.0;
    for k in 0..n {
        acc += 1.0 / (x + k as f64);
    }
    let w = x + n as f64;
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let mut s = 0.0;
    let mut p = inv2;
    for c in DIGAMMA_SERIES {
        s += p * c;
        p *= inv2;
    }
    w.ln() - 0.5 * inv - s - acc
}

fn stirling_corr(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut corr = 0.0;
    let mut p = inv;
    for c in STIRLING {
        corr += p * c;
        p *= inv2;
    }
    corr
}

/// log(Γ(p)/Γ(q)) for p, q > 0, accurate when p and q are large and close.
pub fn ln_gamma_ratio(p: f64, q: f64) -> f64 {
    debug_assert!(p > 0.0 && q > 0.0);
    let d = p - q;
    if d == 0.0 {
        return 0.0;
    }
    if d.fract() == 0.0 && d.abs() <= 64.0 {
        let (lo, steps, sign) = if d > 0.0 { (q, d as usize, 1.0) } else { (p, (-d) as usize, -1.0) };
        let mut s = 0.0;
        let mut prod = 1.0;
        for i in 0..steps {
            prod *= lo + i as f64;
            if prod > 1e280 {
                s += prod.ln();
                prod = 1.0;
            }
        }
        s += prod.ln();
        return sign * s;
    }
    if p.min(q) >= 30.0 {
        return (q - 0.5) * (d / q).ln_1p() + d * (p.ln() - 1.0) + stirling_corr(p) - stirling_corr(q);
    }
    lgamma(p) - lgamma(q)
}

/// log B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    lgamma(a) + lgamma(b) - lgamma(a + b)
}

/// H_k = 1 + 1/2 + ... + 1/k.
pub fn harmonic(k: u64) -> f64 {
    if k < 64 {
        (1..=k).rev().map(|i| 1.0 / i as f64).sum()
    } else {
        digamma_real(k as f64 + 1.0) + EULER_GAMMA
    }
}

/// log of the binomial coefficient C(n, k).
pub fn ln_binom(n: f64, k: f64) -> f64 {
    ln_gamma_ratio(n + 1.0, k + 1.0) - lgamma(n - k + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Gauss integral: Ψ(z) = ∫_0^∞ (e^{-u}/u - e^{-zu}/(1-e^{-u})) du,
    // evaluated with composite Simpson after u = s/(1-s).
    fn gauss_digamma(z: f64) -> f64 {
        let g = |u: f64| -> f64 {
            if u == 0.0 {
                return 0.0;
            }
            (-u).exp() / u - (-z * u).exp() / (-(-u).exp_m1())
        };
        let n = 200_000;
        let h = 1.0 / n as f64;
        let f = |s: f64| -> f64 {
            if s >= 1.0 {
                return 0.0;
            }
            let u = s / (1.0 - s);
            g(u) / ((1.0 - s) * (1.0 - s))
        };
        // the integrand tends to a finite limit at u = 0
        let f0 = {
            let s = 1e-7;
            f(s)
        };
        let mut acc = f0 + f(1.0 - 1e-12);
        for i in 1..n {
            let s = i as f64 * h;
            acc += if i % 2 == 1 { 4.0 * f(s) } else { 2.0 * f(s) };
        }
        acc * h / 3.0
    }

    #[test]
    fn ln_gamma_small_integers() {
        assert!(ln_gamma(c(1.0, 0.0)).unwrap().norm() < 1e-15);
        assert!((ln_gamma(c(5.0, 0.0)).unwrap().re - 24f64.ln()).abs() < 1e-14);
        assert!((lgamma(0.5) - PI.sqrt().ln()).abs() < 1e-15);
    }

    #[test]
    fn ln_gamma_modulus_on_imaginary_line() {
        for x in [0.3, 1.0, 2.5, 7.0, 20.0] {
            let v = ln_gamma(c(1.0, x)).unwrap();
            let oracle = (PI * x / (PI * x).sinh()).ln();
            assert!((2.0 * v.re - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "x={x}");
        }
        let v = ln_gamma(c(1.0, 1.0)).unwrap();
        assert!(((2.0 * v.re).exp() - PI / PI.sinh()).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_known_complex_value() {
        // lnΓ(1+i) = -0.6509231993018563 - 0.3016403204675331 i
        let v = ln_gamma(c(1.0, 1.0)).unwrap();
        assert!((v.re + 0.650_923_199_301_856_3).abs() < 1e-14);
        assert!((v.im + 0.301_640_320_467_533_1).abs() < 1e-14);
    }

    #[test]
    fn ln_gamma_branch_is_continuous() {
        // arg Γ(1+iy) grows without bound; steps along y must be small
        let mut prev = ln_gamma(c(1.0, 0.0)).unwrap();
        for i in 1..=5000 {
            let y = i as f64 * 0.02;
            let v = ln_gamma(c(1.0, y)).unwrap();
            assert!((v - prev).norm() < 0.2, "jump at y={y}");
            prev = v;
        }
    }

    #[test]
    fn digamma_values() {
        assert!((digamma_real(1.0) + EULER_GAMMA).abs() < 1e-15);
        assert!((digamma_real(2.0) - (1.0 - EULER_GAMMA)).abs() < 1e-15);
        let z = digamma(c(0.7, 0.0)).unwrap();
        assert_eq!(z.im, 0.0);
        // Ψ(1/2) = -γ - 2 ln 2
        assert!((digamma_real(0.5) + EULER_GAMMA + 2.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn digamma_matches_gauss_representation() {
        for z in [0.5, 1.0, 2.0, 5.0] {
            let q = gauss_digamma(z);
            assert!((q - digamma_real(z)).abs() < 1e-9, "z={z}: {q} vs {}", digamma_real(z));
            let zc = digamma(c(z, 1e-300)).unwrap();
            assert!((zc.re - digamma_real(z)).abs() < 1e-13);
        }
    }

    #[test]
    fn trigamma_at_one() {
        let v = trigamma(c(1.0, 0.0)).unwrap();
        assert!((v.re - PI * PI / 6.0).abs() < 1e-13);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(ln_gamma(c(0.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(digamma(c(-1.0, 0.0)), Err(Error::Domain(_))));
        assert!(digamma(c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn ratio_agrees_with_difference() {
        for &(p, q) in &[(3.5, 1.25), (100.0, 97.0), (1e6 + 0.3, 1e6 - 1.7), (40.2, 33.1), (2.0, 60.0)] {
            let direct = lgamma(p) - lgamma(q);
            let r = ln_gamma_ratio(p, q);
            assert!((r - direct).abs() < 1e-9 * direct.abs().max(1.0), "{p} {q}: {r} vs {direct}");
        }
        // Γ(k+1)/Γ(k) = k exactly in log space
        assert_eq!(ln_gamma_ratio(1001.0, 1000.0), 1000f64.ln());
    }

    #[test]
    fn harmonic_numbers() {
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
        let direct: f64 = (1..=1000u64).rev().map(|i| 1.0 / i as f64).sum();
        assert!((harmonic(1000) - direct).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn digamma_recurrence(re in 0.1f64..50.0, im in -50.0f64..50.0) {
            let z = c(re, im);
            let lhs = digamma(z + 1.0).unwrap() - digamma(z).unwrap() - z.inv();
            prop_assert!(lhs.norm() <= 1e-12);
        }

        #[test]
        fn ln_gamma_recurrence(re in 0.1f64..50.0, im in -50.0f64..50.0) {
            let z = c(re, im);
            // compare log Γ(z+1) − log Γ(z) with log z modulo 2πi, relative to |log Γ|
            let d = ln_gamma(z + 1.0).unwrap() - ln_gamma(z).unwrap() - z.ln();
            let turns = (d.im / (2.0 * PI)).round();
            let resid = Complex64::new(d.re, d.im - turns * 2.0 * PI);
            let scale = ln_gamma(z + 1.0).unwrap().norm().max(1.0);
            prop_assert!(resid.norm() <= 1e-11 * scale, "resid {}", resid);
            prop_assert!(turns == 0.0);
        }

        #[test]
        fn digamma_conjugate_symmetry(re in 0.1f64..50.0, im in -50.0f64..50.0) {
            let z = c(re, im);
            let a = digamma(z.conj()).unwrap();
            let b = digamma(z).unwrap().conj();
            prop_assert!((a - b).norm() <= 1e-14 * a.norm().max(1.0));
        }
    }
}
