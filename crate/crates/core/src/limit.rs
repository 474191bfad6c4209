//! The limiting Ornstein–Uhlenbeck type process: characteristic exponent ψ,
//! the characteristic functions φ_t, χ_t and φ, Lévy measures, generators
//! and numerical inversion of characteristic functions.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{integrate_split, integrate_with, LimitParams, MeasureKind, MeasureLike, MeasureSpec, Shape, Tail};
use crate::quad::{self, QuadOptions, QuadValue, WG, WGK, XGK};
use crate::rates::ln_gap;
use crate::simulate::ProcessKind;
use crate::specfun::{digamma, ln_gamma};
use crate::testfn::TestFunction;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Below this u the ψ integrand is replaced by its binomial series.
pub const PSI_SERIES_CUT: f64 = 1e-3;
/// Below this u the generator integrand is replaced by its Taylor polynomial.
pub const GENERATOR_SERIES_CUT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMethod {
    Quadrature,
    Beta1bClosed,
    BsClosed,
}

impl PsiMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PsiMethod::Quadrature => "quadrature",
            PsiMethod::Beta1bClosed => "beta1b-closed",
            PsiMethod::BsClosed => "bs-closed",
        }
    }
}

/// ψ together with the way it is evaluated.
#[derive(Debug, Clone)]
pub struct CharExponent {
    pub params: LimitParams,
    pub method: PsiMethod,
}

// Adapts a fallible integrand to the infallible quadrature interface.
struct Fallible {
    err: RefCell<Option<Error>>,
}

impl Fallible {
    fn new() -> Self {
        Fallible { err: RefCell::new(None) }
    }

    fn eval<T: QuadValue>(&self, r: Result<T>) -> T {
        match r {
            Ok(v) => v,
            Err(e) => {
                self.err.borrow_mut().get_or_insert(e);
                T::zero()
            }
        }
    }

    fn finish<T>(self, r: Result<T>) -> Result<T> {
        match self.err.into_inner() {
            Some(e) => Err(e),
            None => r,
        }
    }
}

// (e^{ix log(1−u)} − 1 + ixu) / u² = Σ_{k≥2} (−1)^k C(ix, k) u^{k−2}
fn psi_series(x: f64, u: f64) -> Complex64 {
    let ix = I * x;
    let mut d = ix * (ix - 1.0) * 0.5;
    let mut sum = d;
    let mut upow = 1.0;
    for k in 2..80 {
        let kf = k as f64;
        d *= (kf - ix) / (kf + 1.0);
        upow *= u;
        let term = d * upow;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

fn psi_integrand(x: f64, u: f64, v: f64) -> Complex64 {
    let th = x * ln_gap(u, v);
    let h = (0.5 * th).sin();
    Complex64::new(-2.0 * h * h, th.sin() + x * u) / (u * u)
}

/// b((1−b)Ψ(b) − (1−b−ix)Ψ(b+ix))
pub fn psi_beta1b(x: f64, b: f64) -> Result<Complex64> {
    let bz = Complex64::new(b, 0.0);
    Ok(b * ((1.0 - b) * digamma(bz)? - (1.0 - b - I * x) * digamma(bz + I * x)?))
}

/// ixΨ(1+ix)
pub fn psi_bs(x: f64) -> Result<Complex64> {
    Ok(I * x * digamma(Complex64::new(1.0, x))?)
}

impl CharExponent {
    pub fn new(params: LimitParams, method: PsiMethod) -> Result<Self> {
        let m = &params.measure;
        match method {
            PsiMethod::Quadrature => {
                let r = m.right();
                if r.exponent <= -1.0 {
                    return Err(Error::Unsupported(format!(
                        "ψ by quadrature needs a density integrable against log(1−u) oscillations near 1; {m} is too heavy there"
                    )));
                }
            }
            PsiMethod::Beta1bClosed => match m.kind() {
                MeasureKind::Beta { a, b } if *a == 1.0 && (*b - params.b).abs() <= 1e-12 * b.max(1.0) => {}
                _ => return Err(Error::Config(format!("beta1b-closed needs Λ = Beta(1, b) with matching b, got {m}, b = {}", params.b))),
            },
            PsiMethod::BsClosed => match m.lebesgue_scale() {
                Some(c) if (c - params.b).abs() <= 1e-12 * c.max(1.0) => {}
                _ => return Err(Error::Config(format!("bs-closed needs Λ = cλ with b = c, got {m}, b = {}", params.b))),
            },
        }
        Ok(CharExponent { params, method })
    }

    pub fn quadrature(params: LimitParams) -> Result<Self> {
        Self::new(params, PsiMethod::Quadrature)
    }

    /// A closed form when one applies, quadrature otherwise.
    pub fn best(params: LimitParams) -> Result<Self> {
        for method in [PsiMethod::BsClosed, PsiMethod::Beta1bClosed] {
            if let Ok(ce) = Self::new(params.clone(), method) {
                return Ok(ce);
            }
        }
        Self::quadrature(params)
    }

    pub fn b(&self) -> f64 {
        self.params.b
    }

    pub fn a(&self) -> f64 {
        self.params.a
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.params.measure
    }

    /// ψ(x) = iax + ∫(e^{ix log(1−u)} − 1 + ixu) u^{-2} Λ(du)
    pub fn psi(&self, x: f64) -> Result<Complex64> {
        if x == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        match self.method {
            PsiMethod::Beta1bClosed => psi_beta1b(x, self.params.b),
            PsiMethod::BsClosed => Ok(self.params.b * psi_bs(x)?),
            PsiMethod::Quadrature => {
                let cut = PSI_SERIES_CUT.min(0.1 / (1.0 + x.abs()));
                let f = |u: f64, v: f64| if u < cut { psi_series(x, u) } else { psi_integrand(x, u, v) };
                let opts = QuadOptions { abs_tol: 1e-12 * x.abs().max(1.0), rel_tol: 1e-13, max_intervals: 8000 };
                let r = integrate_split(f, self.measure(), 0.0, 1.0, Shape::BOUNDED, &[cut], opts)?;
                Ok(I * (self.params.a * x) + r.value)
            }
        }
    }

    // ∫_0^t g(s) ds for a smooth complex integrand whose scale in s is 1/b
    fn time_integral(&self, g: impl Fn(f64) -> Result<Complex64>, t: f64, x: f64) -> Result<Complex64> {
        let n0 = (self.params.b * t * (1.0 + 0.5 * (1.0 + x.abs()).ln())).ceil().clamp(1.0, 64.0) as usize;
        let pts: Vec<f64> = (0..=n0).map(|i| t * i as f64 / n0 as f64).collect();
        let fl = Fallible::new();
        let r = quad::integrate_with_breaks(|s| fl.eval(g(s)), &pts, QuadOptions::new(1e-11, 1e-12));
        fl.finish(r).map(|r| r.value)
    }

    /// φ_t(x) = exp(∫_0^t ψ(e^{−bs}x) ds); exp(tψ(x)) when b = 0.
    pub fn phi_t(&self, x: f64, t: f64) -> Result<Complex64> {
        check_time(t)?;
        if t == 0.0 || x == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let b = self.params.b;
        if b == 0.0 {
            return Ok((t * self.psi(x)?).exp());
        }
        Ok(self.time_integral(|s| self.psi((-b * s).exp() * x), t, x)?.exp())
    }

    /// χ_t(y) = exp(∫_0^t ψ(−e^{bs}y) ds)
    pub fn chi_t(&self, y: f64, t: f64) -> Result<Complex64> {
        check_time(t)?;
        if t == 0.0 || y == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let b = self.params.b;
        if b == 0.0 {
            return Ok((t * self.psi(-y)?).exp());
        }
        Ok(self.time_integral(|s| self.psi(-(b * s).exp() * y), t, y * (b * t).exp())?.exp())
    }

    /// φ(x) = exp(∫_0^∞ ψ(e^{−bs}x) ds) = exp(b^{-1} ∫_0^1 ψ(vx) v^{-1} dv)
    pub fn phi_stationary(&self, x: f64) -> Result<Complex64> {
        let b = self.params.b;
        if !(b > 0.0) {
            return Err(Error::StationarityUnavailable("b = 0: the limit has no stationary law".into()));
        }
        if !log_moment_check(self.measure())? {
            return Err(Error::StationarityUnavailable(format!("log-moment condition fails for {}", self.measure())));
        }
        if x == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let fl = Fallible::new();
        let pts = [0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0];
        let r = quad::integrate_with_breaks(|v| fl.eval(self.psi(v * x).map(|p| p / v)), &pts, QuadOptions::new(1e-11, 1e-12));
        Ok((fl.finish(r)?.value / b).exp())
    }

    /// φ_t in closed form for Beta(1, b) and cλ.
    pub fn phi_t_closed(&self, x: f64, t: f64) -> Result<Complex64> {
        match self.method {
            PsiMethod::Beta1bClosed => phi_t_beta1b(x, t, self.params.b),
            PsiMethod::BsClosed => phi_t_bs(x, self.params.b * t),
            PsiMethod::Quadrature => Err(Error::Unsupported("no closed form for this measure".into())),
        }
    }

    pub fn cf(&self, kind: CfKind, t: f64, x: f64) -> Result<Complex64> {
        match kind {
            CfKind::X => self.phi_t(x, t),
            CfKind::Y => self.chi_t(x, t),
            CfKind::Stationary => self.phi_stationary(x),
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be finite and ≥ 0, got {t}")));
    }
    Ok(())
}

/// ∫(e^{ix log(1−u)} − 1) u^{-2} Λ(du), the exponent in the dust case.
pub fn psi_dust_form(m: &MeasureSpec, x: f64) -> Result<Complex64> {
    let f = |u: f64, v: f64| {
        let th = x * ln_gap(u, v);
        let h = (0.5 * th).sin();
        Complex64::new(-2.0 * h * h, th.sin()) / (u * u)
    };
    Ok(integrate_with(f, m, 0.0, 1.0, Shape { left: -1.0, right: 0.0 }, QuadOptions::new(1e-12, 1e-13))?.value)
}

// exp((1−b) ∫_lo^hi (Ψ(b) − Ψ(b+iu))/u du)
fn beta1b_log_factor(lo: f64, hi: f64, b: f64) -> Result<Complex64> {
    if b == 1.0 || lo == hi {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if lo > hi {
        return Ok(-beta1b_log_factor(hi, lo, b)?);
    }
    let db = digamma(Complex64::new(b, 0.0))?;
    let fl = Fallible::new();
    let r = quad::integrate(
        |u| fl.eval(digamma(Complex64::new(b, u)).map(|d| (db - d) / u)),
        lo,
        hi,
        QuadOptions::new(1e-13, 1e-12),
    );
    Ok((1.0 - b) * fl.finish(r)?.value)
}

/// Closed φ_t for Beta(1, b).
pub fn phi_t_beta1b(x: f64, t: f64, b: f64) -> Result<Complex64> {
    check_time(t)?;
    let xt = (-b * t).exp() * x;
    let lg = ln_gamma(Complex64::new(b, x))? - ln_gamma(Complex64::new(b, xt))?;
    Ok((beta1b_log_factor(xt, x, b)? + lg).exp())
}

/// Closed stationary φ for Beta(1, b).
pub fn phi_stationary_beta1b(x: f64, b: f64) -> Result<Complex64> {
    let lg = ln_gamma(Complex64::new(b, x))? - ln_gamma(Complex64::new(b, 0.0))?;
    Ok((beta1b_log_factor(0.0, x, b)? + lg).exp())
}

/// Γ(1+ix)/Γ(1+ie^{−t}x)
pub fn phi_t_bs(x: f64, t: f64) -> Result<Complex64> {
    Ok((ln_gamma(Complex64::new(1.0, x))? - ln_gamma(Complex64::new(1.0, (-t).exp() * x))?).exp())
}

/// Γ(1−ie^{t}y)/Γ(1−iy)
pub fn chi_t_bs(y: f64, t: f64) -> Result<Complex64> {
    Ok((ln_gamma(Complex64::new(1.0, -t.exp() * y))? - ln_gamma(Complex64::new(1.0, -y))?).exp())
}

// ---------------------------------------------------------------------------
// Grids

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CfKind {
    X,
    Y,
    Stationary,
}

impl std::str::FromStr for CfKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(CfKind::X),
            "Y" | "y" => Ok(CfKind::Y),
            "stationary" => Ok(CfKind::Stationary),
            _ => Err(Error::Config(format!("cf kind must be X, Y or stationary, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CfGrid {
    pub x_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub t: f64,
    pub kind: CfKind,
}

pub fn cf_grid(ce: &CharExponent, kind: CfKind, t: f64, xs: &[f64]) -> Result<CfGrid> {
    let values = xs.par_iter().map(|&x| ce.cf(kind, t, x)).collect::<Result<Vec<_>>>()?;
    Ok(CfGrid { x_grid: xs.to_vec(), values, t, kind })
}

// ---------------------------------------------------------------------------
// Log-moment condition

/// Whether ∫_{(ε,1)} log log (1−u)^{-1} Λ(du) < ∞, decided from the declared
/// behaviour of the density near 1.
pub fn log_moment_check(m: &MeasureSpec) -> Result<bool> {
    if !m.has_density() {
        return Ok(true);
    }
    let r = m.right();
    if r.exponent.is_nan() || r.log_power.is_nan() || r.loglog_power.is_nan() {
        return Err(Error::Inconclusive(format!("no usable tail metadata near 1 for {m}")));
    }
    if r.exponent == f64::INFINITY {
        return Ok(true);
    }
    Ok(Tail { loglog_power: r.loglog_power + 1.0, ..r }.integrable_with(0.0))
}

// ---------------------------------------------------------------------------
// Generators

/// Af(x) of the limit X (block side) or Y (fixation side).
pub fn generator_limit(f: &dyn TestFunction, x: f64, ce: &CharExponent, side: ProcessKind) -> Result<f64> {
    let (a, b) = (ce.a(), ce.b());
    let (f0, f1, f2, f3) = (f.value(x), f.d1(x), f.d2(x), f.d3(x));
    let (drift, h0, h1, dir) = match side {
        ProcessKind::Block => (f1 * (a - b * x), 0.5 * (f2 - f1), -f1 / 3.0 + 0.5 * f2 - f3 / 6.0, 1.0),
        ProcessKind::Fixation => (f1 * (b * x - a), 0.5 * (f1 + f2), f1 / 3.0 + 0.5 * f2 + f3 / 6.0, -1.0),
    };
    let g = |u: f64, v: f64| {
        if u < GENERATOR_SERIES_CUT {
            h0 + h1 * u
        } else {
            (f.value(x + dir * ln_gap(u, v)) - f0 + dir * u * f1) / (u * u)
        }
    };
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 8000 };
    let r = integrate_split(g, ce.measure(), 0.0, 1.0, Shape::BOUNDED, &[GENERATOR_SERIES_CUT], opts)?;
    Ok(drift + r.value)
}

// ---------------------------------------------------------------------------
// Lévy measures

/// ϱ([lo, hi]) = ∫ u^{-2} Λ(du) over {u : log(1−u) ∈ [lo, hi]}.
pub fn levy_mass(m: &MeasureSpec, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi && hi < 0.0) {
        return Err(Error::Domain(format!("need lo < hi < 0, got [{lo}, {hi}]")));
    }
    let (u1, u2) = (-hi.exp_m1(), -lo.exp_m1());
    let r = integrate_with(|u, _| 1.0 / (u * u), m, u1, u2, Shape::BOUNDED, QuadOptions::new(1e-13, 1e-13))?;
    Ok(r.value)
}

/// ϱ_t([c, d]) = ∫_0^t ϱ([c e^{bs}, d e^{bs}]) ds
pub fn levy_measure_t(ce: &CharExponent, t: f64, c: f64, d: f64) -> Result<f64> {
    check_time(t)?;
    if !(c < d && d < 0.0) {
        return Err(Error::Domain(format!("need c < d < 0, got [{c}, {d}]")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let b = ce.b();
    let m = ce.measure();
    if b == 0.0 {
        return Ok(t * levy_mass(m, c, d)?);
    }
    let fl = Fallible::new();
    let n0 = (b * t).ceil().clamp(1.0, 64.0) as usize;
    let pts: Vec<f64> = (0..=n0).map(|i| t * i as f64 / n0 as f64).collect();
    let r = quad::integrate_with_breaks(
        |s| {
            let e = (b * s).exp();
            fl.eval(levy_mass(m, c * e, d * e))
        },
        &pts,
        QuadOptions::new(1e-11, 1e-11),
    );
    Ok(fl.finish(r)?.value)
}

// ---------------------------------------------------------------------------
// Inversion

/// Gil-Pelaez inversion F(x) = 1/2 − π^{-1} ∫_0^∞ Im(e^{−iξx} φ(ξ)) ξ^{-1} dξ
/// on a fixed set of Gauss–Kronrod nodes, so that the characteristic
/// function is evaluated once and reused for every x.
#[derive(Debug, Clone)]
pub struct CfInverter {
    nodes: Vec<f64>,
    wk: Vec<f64>,
    wg: Vec<f64>,
    phi: Vec<Complex64>,
    panel_width: f64,
    /// Truncation point of the ξ-integral.
    pub xi_max: f64,
    /// Estimated bound on π^{-1} ∫_{ξ_max}^∞ |φ(ξ)| ξ^{-1} dξ.
    pub tail_bound: f64,
    pub tol: f64,
}

const INVERTER_BATCH: usize = 8;
const INVERTER_MAX_NODES: usize = 2_000_000;

impl CfInverter {
    /// Prepares inversion for |x| ≤ x_max with target accuracy tol.
    pub fn new(cf: impl Fn(f64) -> Result<Complex64> + Sync, x_max: f64, tol: f64) -> Result<Self> {
        let h = (4.0 / x_max.abs().max(1.0)).min(0.5);
        let mut inv = CfInverter {
            nodes: Vec::new(),
            wk: Vec::new(),
            wg: Vec::new(),
            phi: Vec::new(),
            panel_width: h,
            xi_max: 0.0,
            tail_bound: f64::INFINITY,
            tol,
        };
        let mut start_max = f64::NAN;
        loop {
            let first = inv.nodes.len();
            for p in 0..INVERTER_BATCH {
                let c = inv.xi_max + (p as f64 + 0.5) * h;
                let hh = 0.5 * h;
                for j in 0..21 {
                    let (xk, w, g) = if j < 10 {
                        (c - hh * XGK[j], WGK[j], if j % 2 == 1 { WG[j / 2] } else { 0.0 })
                    } else if j == 10 {
                        (c, WGK[10], 0.0)
                    } else {
                        let j = 20 - j;
                        (c + hh * XGK[j], WGK[j], if j % 2 == 1 { WG[j / 2] } else { 0.0 })
                    };
                    inv.nodes.push(xk);
                    inv.wk.push(w * hh);
                    inv.wg.push(g * hh);
                }
            }
            let vals = inv.nodes[first..].par_iter().map(|&xi| cf(xi)).collect::<Result<Vec<_>>>()?;
            let batch_start = vals[..21].iter().map(|z| z.norm()).fold(0.0, f64::max);
            let batch_end = vals[vals.len() - 21..].iter().map(|z| z.norm()).fold(0.0, f64::max);
            inv.phi.extend(vals);
            inv.xi_max += INVERTER_BATCH as f64 * h;
            if start_max.is_nan() {
                start_max = batch_start;
            }
            let tail = if batch_end == 0.0 {
                0.0
            } else if batch_end < batch_start {
                let decay_len = INVERTER_BATCH as f64 * h / (batch_start / batch_end).ln();
                batch_end * decay_len / (PI * inv.xi_max)
            } else {
                f64::INFINITY
            };
            if tail < 0.25 * tol {
                inv.tail_bound = tail;
                return Ok(inv);
            }
            if inv.nodes.len() > INVERTER_MAX_NODES {
                return Err(Error::InversionDivergence(format!(
                    "|φ| still {batch_end:e} at ξ = {}; tail bound {tail:e} exceeds {tol:e}",
                    inv.xi_max
                )));
            }
        }
    }

    /// CDF value and error bound.
    pub fn cdf_with_error(&self, x: f64) -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut err = 0.0;
        for (chunk, base) in self.nodes.chunks(21).zip((0..).step_by(21)) {
            let (mut k, mut g) = (0.0, 0.0);
            for (j, &xi) in chunk.iter().enumerate() {
                let z = self.phi[base + j] * Complex64::from_polar(1.0, -xi * x);
                let y = z.im / xi;
                k += self.wk[base + j] * y;
                g += self.wg[base + j] * y;
            }
            total += k;
            err += (k - g).abs();
        }
        let err = err / PI + self.tail_bound;
        let value = 0.5 - total / PI;
        if !(err <= self.tol) {
            return Err(Error::InversionDivergence(format!(
                "error estimate {err:e} at x = {x} exceeds {:e}; panel width {} may be too coarse",
                self.tol, self.panel_width
            )));
        }
        Ok((value.clamp(0.0, 1.0), err))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.cdf_with_error(x).map(|r| r.0)
    }

    /// Smallest x with F(x) ≥ p, to absolute accuracy 1e-10 in x.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {p}")));
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.cdf(lo)? > p {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(Error::InversionDivergence("quantile bracket escaped".into()));
            }
        }
        while self.cdf(hi)? < p {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::InversionDivergence("quantile bracket escaped".into()));
            }
        }
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Mean and variance of the law restricted to [lo, hi], from the CDF.
    pub fn moments(&self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        let fl = Fallible::new();
        let opts = QuadOptions::new(1e-9, 1e-11);
        let r1 = quad::integrate(|y| fl.eval(self.cdf(y).map(|f| 1.0 - f)), lo, hi, opts);
        let r2 = quad::integrate(|y| fl.eval(self.cdf(y).map(|f| 2.0 * y * (1.0 - f))), lo, hi, opts);
        let m1 = lo + fl.finish(r1)?.value;
        let m2 = lo * lo + r2?.value;
        Ok((m1, m2 - m1 * m1))
    }

    /// Tabulated CDF on an even grid, for inverse-CDF sampling.
    pub fn table(&self, lo: f64, hi: f64, n: usize) -> Result<CdfTable> {
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let mut fs = xs.par_iter().map(|&x| self.cdf(x)).collect::<Result<Vec<_>>>()?;
        for i in 1..fs.len() {
            fs[i] = fs[i].max(fs[i - 1]);
        }
        Ok(CdfTable { xs, fs })
    }
}

/// One-shot CDF value from a characteristic function.
pub fn cdf_from_cf(cf: impl Fn(f64) -> Result<Complex64> + Sync, x: f64, tol: f64) -> Result<f64> {
    CfInverter::new(cf, x.abs() + 1.0, tol)?.cdf(x)
}

/// Monotone piecewise-linear CDF.
#[derive(Debug, Clone, Serialize)]
pub struct CdfTable {
    pub xs: Vec<f64>,
    pub fs: Vec<f64>,
}

impl CdfTable {
    pub fn quantile(&self, p: f64) -> f64 {
        let i = self.fs.partition_point(|&f| f < p);
        if i == 0 {
            return self.xs[0];
        }
        if i >= self.xs.len() {
            return *self.xs.last().unwrap();
        }
        let (f0, f1) = (self.fs[i - 1], self.fs[i]);
        let w = if f1 > f0 { (p - f0) / (f1 - f0) } else { 0.5 };
        self.xs[i - 1] + w * (self.xs[i] - self.xs[i - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}
