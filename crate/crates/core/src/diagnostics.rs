//! Discrete generators of the rescaled block counting process, their
//! distance to the limit generator, mixing laws, and exact Siegmund duality.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::limit::GENERATOR_SERIES_CUT;
use crate::measures::{integrate_split, LimitParams, MeasureKind, MeasureSpec, Shape};
use crate::quad::QuadOptions;
use crate::rates::{
    binomial_moment, block_rate, block_rate_lambda, block_rate_quadrature, block_rate_with_method, fixation_rate,
    fixation_total_rate, ln_gap, RateMethod,
};
use crate::specfun::{digamma_real, lgamma, ln_binom, ln_gamma_ratio};
use crate::testfn::TestFunction;

/// Terms of the discrete generator A_s^{(n)} f(x) at state k = e^x n^{α(s)}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteTerms {
    pub r: f64,
    pub s_bs: f64,
    pub s_dust: f64,
    pub a_discrete: f64,
}

/// Block counting rates at one k, split into the λ part and the signed dust part.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    k: u64,
    b: f64,
    // index j − 1
    q_lambda: Vec<f64>,
    q_dust: Vec<f64>,
}

impl DiscreteGenerator {
    pub fn new(k: u64, params: &LimitParams) -> Result<Self> {
        if k < 2 {
            return Err(Error::Index(format!("discrete generator needs k ≥ 2, got {k}")));
        }
        let b = params.b;
        let q_lambda: Vec<f64> = (1..k).map(|j| block_rate_lambda(k, j)).collect();
        let m = &params.measure;
        let q_dust: Vec<f64> = if params.dust.is_zero() {
            vec![0.0; q_lambda.len()]
        } else if block_rate_with_method(k, k - 1, m)?.1 == RateMethod::Closed {
            (1..k)
                .into_par_iter()
                .map(|j| Ok(block_rate(k, j, m)? - b * q_lambda[(j - 1) as usize]))
                .collect::<Result<_>>()?
        } else {
            let (plus, minus) = (&params.dust.plus, &params.dust.minus);
            (1..k)
                .into_par_iter()
                .map(|j| {
                    let p = if plus.is_zero() { 0.0 } else { block_rate_quadrature(k, j, plus)? };
                    let q = if minus.is_zero() { 0.0 } else { block_rate_quadrature(k, j, minus)? };
                    Ok(p - q)
                })
                .collect::<Result<_>>()?
        };
        Ok(DiscreteGenerator { k, b, q_lambda, q_dust })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// q^λ_{k,j} for 1 ≤ j < k.
    pub fn q_lambda(&self) -> &[f64] {
        &self.q_lambda
    }

    /// q^D_{k,j} = q_{k,j} − b q^λ_{k,j} for 1 ≤ j < k.
    pub fn q_dust(&self) -> &[f64] {
        &self.q_dust
    }

    pub fn terms(&self, f: &dyn TestFunction, x: f64) -> DiscreteTerms {
        let kf = self.k as f64;
        let lk = kf.ln();
        let (f0, f1) = (f.value(x), f.d1(x));
        let (mut mean, mut s_bs, mut s_dust) = (0.0, 0.0, 0.0);
        for (i, (&ql, &qd)) in self.q_lambda.iter().zip(&self.q_dust).enumerate() {
            let j = (i + 1) as f64;
            let w = (kf - j) / kf;
            let df = f.value(x + j.ln() - lk) - f0;
            mean += w * ql;
            s_bs += (df + w * f1) * ql;
            s_dust += df * qd;
        }
        let r = lk - mean - x;
        DiscreteTerms { r, s_bs, s_dust, a_discrete: self.b * r * f1 + self.b * s_bs + s_dust }
    }
}

pub fn discrete_generator_terms(f: &dyn TestFunction, k: u64, x: f64, params: &LimitParams) -> Result<DiscreteTerms> {
    Ok(DiscreteGenerator::new(k, params)?.terms(f, x))
}

/// The limit generator split as drift + b·I_bs + I_dust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitTerms {
    pub drift: f64,
    pub i_bs: f64,
    pub i_dust: f64,
    pub a_limit: f64,
}

pub fn limit_generator_terms(f: &dyn TestFunction, x: f64, params: &LimitParams) -> Result<LimitTerms> {
    let b = params.b;
    let (f0, f1, f2, f3) = (f.value(x), f.d1(x), f.d2(x), f.d3(x));
    let drift = b * (1.0 + digamma_real(1.0) - x) * f1;
    let (h0, h1) = (0.5 * (f2 - f1), -f1 / 3.0 + 0.5 * f2 - f3 / 6.0);
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 8000 };
    let i_bs = if b == 0.0 {
        0.0
    } else {
        let g = |u: f64, v: f64| {
            if u < GENERATOR_SERIES_CUT {
                h0 + h1 * u
            } else {
                (f.value(x + ln_gap(u, v)) - f0 + u * f1) / (u * u)
            }
        };
        integrate_split(g, &MeasureSpec::lebesgue(1.0)?, 0.0, 1.0, Shape::BOUNDED, &[GENERATOR_SERIES_CUT], opts)?.value
    };
    let i_dust = if params.dust.is_zero() {
        0.0
    } else {
        let g = |u: f64, v: f64| {
            if u < GENERATOR_SERIES_CUT {
                -f1 / u + h0 + h1 * u
            } else {
                (f.value(x + ln_gap(u, v)) - f0) / (u * u)
            }
        };
        params.dust.integrate_with(g, 0.0, 1.0, Shape { left: -1.0, right: 0.0 }, opts)?.value
    };
    Ok(LimitTerms { drift, i_bs, i_dust, a_limit: drift + b * i_bs + i_dust })
}

/// |A_discrete(k, x) − A_limit(x)| on a (k, x) grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapTable {
    pub k_list: Vec<u64>,
    pub x_grid: Vec<f64>,
    /// gaps[i][l] belongs to k_list[i] and x_grid[l].
    pub gaps: Vec<Vec<f64>>,
    pub sup_per_k: Vec<f64>,
}

impl GapTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.sup_per_k.windows(2).all(|w| w[1] < w[0])
    }

    /// Supremum over the grid points inside [lo, hi].
    pub fn sup_on(&self, row: usize, lo: f64, hi: f64) -> f64 {
        self.x_grid
            .iter()
            .zip(&self.gaps[row])
            .filter(|(x, _)| (lo..=hi).contains(*x))
            .map(|(_, g)| *g)
            .fold(0.0, f64::max)
    }
}

/// [−6, 6] in steps of 1/4 preceded by a band of very negative x.
pub fn default_x_grid() -> Vec<f64> {
    let mut xs = vec![-40.0, -30.0, -20.0, -12.0];
    xs.extend((0..=48).map(|i| -6.0 + 0.25 * i as f64));
    xs
}

pub fn generator_gap_table(
    f: &dyn TestFunction,
    params: &LimitParams,
    k_list: &[u64],
    x_grid: &[f64],
) -> Result<GapTable> {
    if k_list.is_empty() || k_list[0] < 2 || k_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("k_list must be strictly increasing with entries ≥ 2".into()));
    }
    if x_grid.is_empty() || x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("x_grid must be a nonempty list of finite values".into()));
    }
    let limit: Vec<f64> = x_grid
        .par_iter()
        .map(|&x| Ok(limit_generator_terms(f, x, params)?.a_limit))
        .collect::<Result<_>>()?;
    let mut gaps = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let gen = DiscreteGenerator::new(k, params)?;
        let row: Vec<f64> =
            x_grid.par_iter().zip(&limit).map(|(&x, &l)| (gen.terms(f, x).a_discrete - l).abs()).collect();
        gaps.push(row);
    }
    let sup_per_k = gaps.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    Ok(GapTable { k_list: k_list.to_vec(), x_grid: x_grid.to_vec(), gaps, sup_per_k })
}

// ---------------------------------------------------------------------------
// Mixing laws

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingKind {
    /// Z_k ~ Bin(k−1, Q), Q ∝ u^{-1}Λ(du)
    DustBinomial,
    /// Z_k ~ Bin(k−2, Q), Q ∝ Λ
    BsBinomial,
    /// Z_k − 1 ~ NegBin(k, Q), Q ∝ Λ, with P(Z_k = j) ∝ C(k+j−2, j−1)∫u^{j−1}(1−u)^k Λ(du)
    FixationNegbinLambda,
    /// Z_k ~ NegBin(k, Q), Q ∝ u^{-1}Λ(du)
    FixationNegbinDust,
}

impl MixingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MixingKind::DustBinomial => "dust-binomial",
            MixingKind::BsBinomial => "bs-binomial",
            MixingKind::FixationNegbinLambda => "fixation-negbinomial-lambda",
            MixingKind::FixationNegbinDust => "fixation-negbinomial-dust",
        }
    }
}

impl fmt::Display for MixingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MixingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dust-binomial" => Ok(MixingKind::DustBinomial),
            "bs-binomial" => Ok(MixingKind::BsBinomial),
            "fixation-negbinomial-lambda" => Ok(MixingKind::FixationNegbinLambda),
            "fixation-negbinomial-dust" => Ok(MixingKind::FixationNegbinDust),
            _ => Err(Error::Config(format!("unknown mixing kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingLaw {
    pub kind: MixingKind,
    pub k: u64,
    pub pmf: Vec<(u64, f64)>,
    /// Mass beyond the last listed j; zero for the binomial kinds.
    pub tail_mass: f64,
}

/// Most terms a negative-binomial mixing law may list.
pub const MIXING_MAX_TERMS: u64 = 1_000_000;

/// e^{ln_c} ∫ u^p (1−u)^q Λ(du), closed for beta, Lebesgue and atomic parts.
fn scaled_moment(ln_c: f64, p: f64, q: f64, m: &MeasureSpec) -> Result<f64> {
    let mut total = 0.0;
    for c in m.components() {
        total += if let Some((a, b, w)) = c.as_scaled_beta() {
            if a + p <= 0.0 {
                return Err(Error::Singularity(format!("∫u^{p}(1−u)^{q} diverges against {c}")));
            }
            (ln_c + w.ln() + ln_gamma_ratio(a + p, a) + ln_gamma_ratio(b + q, b) - ln_gamma_ratio(a + b + p + q, a + b))
                .exp()
        } else if let MeasureKind::Atom { at, mass } = *c.kind() {
            (ln_c + mass.ln() + p * at.ln() + q * (-at).ln_1p()).exp()
        } else {
            binomial_moment(ln_c, p, q, c)?
        };
    }
    Ok(total)
}

pub fn mixing_pmf(kind: MixingKind, k: u64, m: &MeasureSpec, tail_tol: f64) -> Result<MixingLaw> {
    let min_k = match kind {
        MixingKind::BsBinomial | MixingKind::DustBinomial => 2,
        _ => 1,
    };
    if k < min_k {
        return Err(Error::Index(format!("{kind} needs k ≥ {min_k}, got {k}")));
    }
    let kf = k as f64;
    let c = match kind {
        MixingKind::DustBinomial | MixingKind::FixationNegbinDust => scaled_moment(0.0, -1.0, 0.0, m)?,
        _ => m.total_mass(),
    };
    let lc = -c.ln();
    let binomial = |n: u64, s: f64| -> Result<MixingLaw> {
        let nf = n as f64;
        let pmf = (0..=n)
            .into_par_iter()
            .map(|j| {
                let jf = j as f64;
                Ok((j, scaled_moment(lc + ln_binom(nf, jf), jf + s, nf - jf, m)?))
            })
            .collect::<Result<_>>()?;
        Ok(MixingLaw { kind, k, pmf, tail_mass: 0.0 })
    };
    match kind {
        MixingKind::DustBinomial => return binomial(k - 1, -1.0),
        MixingKind::BsBinomial => return binomial(k - 2, 0.0),
        _ => {}
    }
    if !(tail_tol > 0.0) {
        return Err(Error::Domain(format!("tail_tol must be positive, got {tail_tol}")));
    }
    let first = if kind == MixingKind::FixationNegbinLambda { 1 } else { 0 };
    let term = |j: u64| {
        let jf = j as f64;
        let ln_coef = match kind {
            MixingKind::FixationNegbinLambda => ln_binom(kf + jf - 2.0, jf - 1.0),
            _ => ln_binom(kf + jf - 1.0, jf),
        };
        scaled_moment(lc + ln_coef, jf - 1.0, kf, m)
    };
    let mut pmf = Vec::new();
    // Neumaier-compensated running sum
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut j = first;
    loop {
        let p = term(j)?;
        pmf.push((j, p));
        let t = sum + p;
        comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
        sum = t;
        let tail = (1.0 - (sum + comp)).max(0.0);
        if tail <= tail_tol {
            return Ok(MixingLaw { kind, k, pmf, tail_mass: tail });
        }
        if j - first + 1 >= MIXING_MAX_TERMS {
            return Err(Error::Truncation(format!(
                "{MIXING_MAX_TERMS} terms of the {kind} law at k={k} leave mass {tail:e} > {tail_tol:e}"
            )));
        }
        j += 1;
    }
}

// ---------------------------------------------------------------------------
// Siegmund duality

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityReport {
    pub n: u64,
    pub m0: u64,
    pub t: f64,
    pub cap: u64,
    /// P(N_t^{(n)} ≤ m0)
    pub rhs: f64,
    /// P(L_t^{(m0)} ∈ [n, cap]) on the truncated chain.
    pub lhs_lower: f64,
    /// lhs_lower plus the overflow probability.
    pub lhs_upper: f64,
    /// Probability of absorption in the overflow state.
    pub truncation_bound: f64,
    /// Poisson-tail truncation of both uniformizations plus a rounding allowance.
    pub numerical_error: f64,
    /// Distance from rhs to [lhs_lower, lhs_upper].
    pub gap: f64,
}

impl DualityReport {
    pub fn rhs_inside(&self) -> bool {
        self.gap <= self.numerical_error
    }
}

/// A finite CTMC as off-diagonal rate lists and exit rates.
struct Chain {
    out: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
}

const UNIFORMIZATION_MAX_STEPS: usize = 10_000_000;

impl Chain {
    /// Distribution at time t from a point mass, and an error bound in total variation.
    fn transient(&self, start: usize, t: f64) -> Result<(Vec<f64>, f64)> {
        let n = self.exit.len();
        let mut p = vec![0.0; n];
        p[start] = 1.0;
        let rate = self.exit.iter().copied().fold(0.0, f64::max);
        let lt = rate * t;
        if lt == 0.0 {
            return Ok((p, 0.0));
        }
        let steps = (lt + 12.0 * lt.sqrt() + 50.0).ceil() as usize;
        if steps > UNIFORMIZATION_MAX_STEPS {
            return Err(Error::Truncation(format!("uniformization would need {steps} steps (Λt = {lt:e})")));
        }
        let ln_lt = lt.ln();
        let mut acc = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut wsum = 0.0;
        let widest = self.out.iter().map(Vec::len).max().unwrap_or(0) + 1;
        for i in 0..=steps {
            let w = (-lt + i as f64 * ln_lt - lgamma(i as f64 + 1.0)).exp();
            wsum += w;
            if w > 0.0 {
                for (a, &x) in acc.iter_mut().zip(&p) {
                    *a += w * x;
                }
            }
            if i == steps {
                break;
            }
            next.iter_mut().for_each(|x| *x = 0.0);
            for (s, &ps) in p.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                next[s] += ps * (1.0 - self.exit[s] / rate);
                let scale = ps / rate;
                for &(d, r) in &self.out[s] {
                    next[d] += scale * r;
                }
            }
            std::mem::swap(&mut p, &mut next);
        }
        let rounding = (steps as f64 + 1.0) * widest as f64 * f64::EPSILON;
        Ok((acc, (1.0 - wsum).max(0.0) + rounding))
    }
}

fn block_chain(n: u64, m: &MeasureSpec) -> Result<Chain> {
    let rows: Vec<Vec<(usize, f64)>> = (1..=n)
        .into_par_iter()
        .map(|k| (1..k).map(|j| Ok(((j - 1) as usize, block_rate(k, j, m)?))).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let exit = rows.iter().map(|r| r.iter().rev().map(|e| e.1).sum()).collect();
    Ok(Chain { out: rows, exit })
}

/// Fixation line on {m0, …, cap} plus an absorbing overflow state.
fn fixation_chain(m0: u64, cap: u64, m: &MeasureSpec) -> Result<Chain> {
    let overflow = (cap - m0 + 1) as usize;
    let rows: Vec<(Vec<(usize, f64)>, f64)> = (m0..=cap)
        .into_par_iter()
        .map(|k| {
            let row: Vec<(usize, f64)> =
                (k + 1..=cap).map(|j| Ok(((j - m0) as usize, fixation_rate(k, j, m)?))).collect::<Result<_>>()?;
            let partial: f64 = row.iter().rev().map(|e| e.1).sum();
            let beyond = match m.lebesgue_scale() {
                // Σ_{l > cap−k} k/(l(l+1)) = k/(cap−k+1)
                Some(c) => c * k as f64 / (cap - k + 1) as f64,
                None => {
                    let (total, err) = fixation_total_rate(k, m)?;
                    (total - partial).max(0.0) + err
                }
            };
            Ok((row, beyond))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(overflow + 1);
    let mut exit = Vec::with_capacity(overflow + 1);
    for (mut row, beyond) in rows {
        let total = row.iter().map(|e| e.1).sum::<f64>() + beyond;
        row.push((overflow, beyond));
        out.push(row);
        exit.push(total);
    }
    out.push(Vec::new());
    exit.push(0.0);
    Ok(Chain { out, exit })
}

/// Both sides of P(L_t^{(m0)} ≥ n) = P(N_t^{(n)} ≤ m0) by uniformization.
///
/// With `tol` set, fails with `CapTooSmall` when the overflow probability exceeds it.
pub fn duality_gap_exact(n: u64, m0: u64, t: f64, m: &MeasureSpec, cap: u64, tol: Option<f64>) -> Result<DualityReport> {
    if n < 1 || m0 < 1 {
        return Err(Error::Domain(format!("n and m0 must be at least 1, got n={n}, m0={m0}")));
    }
    if cap <= n.max(m0) {
        return Err(Error::Domain(format!("cap must exceed max(n, m0) = {}, got {cap}", n.max(m0))));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be finite and nonnegative, got {t}")));
    }
    let (pb, err_b) = block_chain(n, m)?.transient((n - 1) as usize, t)?;
    let rhs: f64 = pb.iter().take(m0.min(n) as usize).sum();
    let (pf, err_f) = fixation_chain(m0, cap, m)?.transient(0, t)?;
    let overflow = pf[(cap - m0 + 1) as usize];
    let lower: f64 = pf[..=(cap - m0) as usize].iter().enumerate().filter(|(s, _)| m0 + *s as u64 >= n).map(|e| e.1).sum();
    let upper = lower + overflow;
    if let Some(tol) = tol {
        if overflow > tol {
            return Err(Error::CapTooSmall { bound: overflow, tol });
        }
    }
    let gap = if rhs < lower {
        lower - rhs
    } else if rhs > upper {
        rhs - upper
    } else {
        0.0
    };
    Ok(DualityReport {
        n,
        m0,
        t,
        cap,
        rhs,
        lhs_lower: lower,
        lhs_upper: upper,
        truncation_bound: overflow,
        numerical_error: err_b + err_f,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::{generator_limit, CharExponent};
    use crate::measures::{assumption_a_params, integrate_with};
    use crate::rates::fixation_rate_lambda;
    use crate::simulate::ProcessKind;
    use crate::specfun::harmonic;
    use crate::testfn::{Constant, GaussianBump};
    use proptest::prelude::*;

    fn params(m: MeasureSpec, b: f64) -> LimitParams {
        assumption_a_params(&m, b, 1e-12).unwrap()
    }

    fn bs() -> LimitParams {
        params(MeasureSpec::lebesgue(1.0).unwrap(), 1.0)
    }

    fn beta22() -> LimitParams {
        params(MeasureSpec::beta(2.0, 2.0).unwrap(), 0.0)
    }

    #[test]
    fn r_matches_harmonic_sums() {
        let f = GaussianBump::default();
        let t = discrete_generator_terms(&f, 2, 0.3, &bs()).unwrap();
        assert!((t.r - (2f64.ln() - 0.5 - 0.3)).abs() < 1e-15);
        for k in [5u64, 100, 10_000] {
            for x in [-2.0, 0.0, 1.5] {
                let t = discrete_generator_terms(&f, k, x, &bs()).unwrap();
                let want = (k as f64).ln() - (harmonic(k) - 1.0) - x;
                assert!((t.r - want).abs() < 1e-11, "k={k}: {} vs {want}", t.r);
            }
        }
    }

    #[test]
    fn r_converges_uniformly() {
        let g = DiscreteGenerator::new(100_000, &bs()).unwrap();
        let f = GaussianBump::default();
        let d: Vec<f64> = [-5.0, 0.0, 3.0].iter().map(|&x| g.terms(&f, x).r - (1.0 + digamma_real(1.0) - x)).collect();
        assert!(d.iter().all(|v| v.abs() <= 1e-3));
        assert!((d[0] - d[1]).abs() < 1e-12 && (d[1] - d[2]).abs() < 1e-12);
    }

    #[test]
    fn constants_and_pure_bs() {
        for p in [bs(), beta22(), params(MeasureSpec::beta(1.0, 2.0).unwrap(), 2.0)] {
            let t = discrete_generator_terms(&Constant(2.0), 30, 0.1, &p).unwrap();
            assert_eq!((t.s_bs, t.s_dust), (0.0, 0.0));
            let l = limit_generator_terms(&Constant(2.0), 0.1, &p).unwrap();
            assert_eq!((l.i_bs, l.i_dust), (0.0, 0.0));
        }
        let p = params(MeasureSpec::beta(1.0, 1.0).unwrap(), 1.0);
        let f = GaussianBump::new(0.2, 0.9);
        for k in [2, 17, 400] {
            for x in [-1.0, 0.5] {
                assert_eq!(discrete_generator_terms(&f, k, x, &p).unwrap().s_dust, 0.0);
            }
        }
    }

    #[test]
    fn limit_terms_match_generator() {
        let f = GaussianBump::new(0.3, 0.8);
        let cases = [
            bs(),
            params(MeasureSpec::beta(1.0, 2.0).unwrap(), 2.0),
            params(MeasureSpec::beta(1.0, 0.5).unwrap(), 0.5),
            beta22(),
            params(MeasureSpec::beta(1.5, 1.0).unwrap(), 0.0),
            params(MeasureSpec::mixture(vec![MeasureSpec::lebesgue(0.5).unwrap(), MeasureSpec::atom(0.4, 0.3).unwrap()]).unwrap(), 0.5),
        ];
        for p in cases {
            let ce = CharExponent::quadrature(p.clone()).unwrap();
            for x in [-2.0, 0.0, 0.7, 2.5] {
                let l = limit_generator_terms(&f, x, &p).unwrap();
                let g = generator_limit(&f, x, &ce, ProcessKind::Block).unwrap();
                assert!((l.a_limit - g).abs() < 1e-8, "{} x={x}: {} vs {g}", p.measure, l.a_limit);
            }
        }
    }

    #[test]
    fn dust_limit_is_first_order_integral() {
        let p = beta22();
        let f = GaussianBump::new(-0.5, 0.6);
        for x in [-1.0, 0.0, 0.8] {
            let l = limit_generator_terms(&f, x, &p).unwrap();
            let direct = integrate_with(
                |u, v| (f.value(x + ln_gap(u, v)) - f.value(x)) / (u * u),
                &p.measure,
                0.0,
                1.0,
                Shape { left: -1.0, right: 0.0 },
                QuadOptions::new(1e-13, 1e-13),
            )
            .unwrap()
            .value;
            assert_eq!(l.drift, 0.0);
            assert!((l.a_limit - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn gap_table_trend() {
        let f = GaussianBump::default();
        let xs: Vec<f64> = (0..=24).map(|i| -6.0 + 0.5 * i as f64).collect();
        let t = generator_gap_table(&f, &bs(), &[100, 1000, 10_000], &xs).unwrap();
        assert!(t.strictly_decreasing(), "{:?}", t.sup_per_k);
        assert!(t.sup_per_k[2] < 0.25 * t.sup_per_k[0]);
        for (row, s) in t.gaps.iter().zip(&t.sup_per_k) {
            assert_eq!(row.iter().copied().fold(0.0, f64::max), *s);
        }
    }

    #[test]
    fn gap_vanishes_far_left() {
        let f = GaussianBump::default();
        let xs = [-40.0, -20.0, -10.0, -5.0, 0.0];
        let t = generator_gap_table(&f, &beta22(), &[50], &xs).unwrap();
        let row = &t.gaps[0];
        assert!(row[0] < 1e-12 && row[1] < 1e-12);
        assert!(row[0] <= row[2] && row[2] <= row[4]);
        let c = generator_gap_table(&Constant(1.0), &params(MeasureSpec::beta(1.0, 1.0).unwrap(), 1.0), &[10, 20], &xs).unwrap();
        assert!(c.sup_per_k.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn gap_table_rejects_bad_input() {
        let f = GaussianBump::default();
        assert!(generator_gap_table(&f, &bs(), &[100, 100], &[0.0]).is_err());
        assert!(generator_gap_table(&f, &bs(), &[1, 5], &[0.0]).is_err());
        assert!(generator_gap_table(&f, &bs(), &[5], &[]).is_err());
    }

    // ∫ u^p (1−u)^q c u^α (1−u)^β du by expanding (1−u)^{q+β}
    fn poly_moment(p: i32, q: u32, c: f64, alpha: i32, beta: u32) -> f64 {
        let e = p + alpha;
        let n = q + beta;
        let mut s = 0.0;
        let mut binom = 1.0;
        for i in 0..=n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * binom / (e + i as i32 + 1) as f64;
            binom = binom * (n - i) as f64 / (i + 1) as f64;
        }
        c * s
    }

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn bs_binomial_is_uniform() {
        let law = mixing_pmf(MixingKind::BsBinomial, 5, &MeasureSpec::lebesgue(1.0).unwrap(), 1e-12).unwrap();
        assert_eq!(law.pmf.len(), 4);
        for (j, (jj, p)) in law.pmf.iter().enumerate() {
            assert_eq!(*jj, j as u64);
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn dust_binomial_matches_polynomial_expansion() {
        // Beta(2,2) = 6u(1−u)du, c = ∫u^{-1}Λ = 3
        let m = MeasureSpec::beta(2.0, 2.0).unwrap();
        for k in [3u64, 7] {
            let law = mixing_pmf(MixingKind::DustBinomial, k, &m, 1e-12).unwrap();
            for &(j, p) in &law.pmf {
                let want = binom(k - 1, j) * poly_moment(j as i32 - 1, (k - 1 - j) as u32, 6.0, 1, 1) / 3.0;
                assert!((p - want).abs() < 1e-14, "k={k} j={j}");
            }
            if k == 3 {
                let want = [0.5, 1.0 / 3.0, 1.0 / 6.0];
                assert!(law.pmf.iter().zip(want).all(|(a, b)| (a.1 - b).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn binomial_laws_normalized() {
        let ms = [
            MeasureSpec::beta(2.0, 2.0).unwrap(),
            MeasureSpec::beta(3.0, 0.7).unwrap(),
            MeasureSpec::atom(0.3, 2.0).unwrap(),
            MeasureSpec::density(crate::measures::BuiltinDensity::Power { scale: 2.0, p: 1.5, q: 0.0 }).unwrap(),
        ];
        for m in &ms {
            for kind in [MixingKind::DustBinomial, MixingKind::BsBinomial] {
                for k in [3u64, 20, 200] {
                    let law = mixing_pmf(kind, k, m, 1e-12).unwrap();
                    let s: f64 = law.pmf.iter().map(|e| e.1).sum();
                    assert!((s - 1.0).abs() < 1e-12, "{kind} {m} k={k}: {s}");
                }
            }
        }
        let bad = mixing_pmf(MixingKind::DustBinomial, 5, &MeasureSpec::lebesgue(1.0).unwrap(), 1e-12);
        assert!(matches!(bad, Err(Error::Singularity(_))));
    }

    #[test]
    fn negbin_lambda_has_telescoping_tail() {
        let m = MeasureSpec::lebesgue(1.0).unwrap();
        for k in [1u64, 4, 30] {
            let law = mixing_pmf(MixingKind::FixationNegbinLambda, k, &m, 1e-3).unwrap();
            let last = law.pmf.last().unwrap().0;
            let kf = k as f64;
            let tail = kf / (kf + last as f64);
            let s: f64 = law.pmf.iter().map(|e| e.1).sum();
            assert!((s + tail - 1.0).abs() < 1e-12);
            assert!((law.tail_mass - tail).abs() < 1e-12);
            for &(j, p) in law.pmf.iter().take(20) {
                let jf = j as f64;
                assert!((p - kf / ((kf + jf) * (kf + jf - 1.0))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn negbin_dust_matches_polynomial_expansion() {
        let m = MeasureSpec::beta(2.0, 2.0).unwrap();
        let k = 4u64;
        let law = mixing_pmf(MixingKind::FixationNegbinDust, k, &m, 1e-9).unwrap();
        for &(j, p) in law.pmf.iter().take(10) {
            let want = binom(k + j - 1, j) * poly_moment(j as i32 - 1, k as u32, 6.0, 1, 1) / 3.0;
            assert!((p - want).abs() < 1e-11 * want, "j={j}: {p} vs {want}");
        }
        assert!(law.tail_mass <= 1e-9);
        let too_long = mixing_pmf(MixingKind::FixationNegbinLambda, 10, &MeasureSpec::lebesgue(1.0).unwrap(), 1e-9);
        assert!(matches!(too_long, Err(Error::Truncation(_))));
    }

    fn dust_expectation(f: &dyn TestFunction, k: u64, x: f64, m: &MeasureSpec) -> f64 {
        let c = 3.0; // ∫u^{-1}Beta(2,2)(du)
        let law = mixing_pmf(MixingKind::DustBinomial, k, m, 1e-12).unwrap();
        let h = |u: f64| (f.value(x + (-u).ln_1p()) - f.value(x)) / u;
        law.pmf
            .iter()
            .filter(|e| e.0 > 0)
            .map(|&(j, p)| {
                let jf = j as f64;
                (1.0 - 1.0 / (jf + 1.0)) * h(jf / k as f64) * p
            })
            .sum::<f64>()
            * c
    }

    #[test]
    fn dust_sum_equals_expectation() {
        let p = beta22();
        let f = GaussianBump::new(0.2, 0.7);
        for k in [10u64, 50] {
            for x in [-1.5, 0.0, 1.1] {
                let direct = discrete_generator_terms(&f, k, x, &p).unwrap().s_dust;
                let e = dust_expectation(&f, k, x, &p.measure);
                assert!((direct - e).abs() < 1e-9, "k={k} x={x}: {direct} vs {e}");
            }
        }
    }

    #[test]
    fn bs_sum_equals_expectation() {
        // S_BS(k, x) = (1 − 1/k) E[(1 − 1/(Z_k+2)) h((Z_k+1)/k, x)], Z_k uniform on {0..k−2}
        let f = GaussianBump::new(-0.4, 1.2);
        let m = MeasureSpec::lebesgue(1.0).unwrap();
        for k in [3u64, 25, 200] {
            let law = mixing_pmf(MixingKind::BsBinomial, k, &m, 1e-12).unwrap();
            let kf = k as f64;
            for x in [-1.0, 0.4] {
                let h = |u: f64| (f.value(x + (-u).ln_1p()) - f.value(x) + u * f.d1(x)) / (u * u);
                let e: f64 = law
                    .pmf
                    .iter()
                    .map(|&(j, p)| {
                        let jf = j as f64;
                        (1.0 - 1.0 / (jf + 2.0)) * h((jf + 1.0) / kf) * p
                    })
                    .sum::<f64>()
                    * (1.0 - 1.0 / kf);
                let direct = discrete_generator_terms(&f, k, x, &bs()).unwrap().s_bs;
                assert!((direct - e).abs() < 1e-9 * (1.0 + e.abs()));
            }
        }
    }

    #[test]
    fn fixation_bs_normalization() {
        for k in [1u64, 2, 10, 500, 3000] {
            let s: f64 = (1..=k).rev().map(|j| j as f64 / k as f64 * fixation_rate_lambda(k, k + j)).sum();
            assert!((s - (harmonic(k + 1) - 1.0)).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn duality_trivial_cases() {
        let m = MeasureSpec::beta(2.0, 3.0).unwrap();
        for (n, m0) in [(5, 3), (3, 5), (4, 4)] {
            let r = duality_gap_exact(n, m0, 0.0, &m, 40, None).unwrap();
            let ind = if m0 >= n { 1.0 } else { 0.0 };
            assert_eq!(r.rhs, ind);
            assert_eq!(r.lhs_lower, ind);
            assert_eq!(r.lhs_upper, ind);
        }
        for t in [0.1, 2.0] {
            let r = duality_gap_exact(1, 3, t, &m, 60, None).unwrap();
            assert_eq!(r.rhs, 1.0);
            assert!(r.rhs_inside());
        }
        assert!(duality_gap_exact(5, 5, 1.0, &m, 5, None).is_err());
    }

    #[test]
    fn duality_bs() {
        let m = MeasureSpec::beta(1.0, 1.0).unwrap();
        let r = duality_gap_exact(10, 10, 0.5, &m, 2000, None).unwrap();
        assert!(r.rhs_inside(), "{r:?}");
        assert!(r.gap <= r.truncation_bound + 1e-8);
        // n = m0 makes both sides one; unequal starts give a proper probability
        assert!((r.rhs - 1.0).abs() < 1e-12);
        let r = duality_gap_exact(40, 12, 0.5, &m, 2000, None).unwrap();
        assert!(r.rhs_inside(), "{r:?}");
        assert!(r.rhs > 0.01 && r.rhs < 0.99, "{r:?}");
        let small = duality_gap_exact(10, 10, 0.5, &m, 40, Some(1e-6));
        assert!(matches!(small, Err(Error::CapTooSmall { .. })));
    }

    #[test]
    fn duality_beta() {
        for (m, n, m0, t) in [
            (MeasureSpec::beta(2.0, 2.0).unwrap(), 6, 4, 0.4),
            (MeasureSpec::beta(0.5, 1.5).unwrap(), 8, 3, 0.2),
            (MeasureSpec::atom(0.5, 1.0).unwrap(), 5, 5, 1.0),
        ] {
            let r = duality_gap_exact(n, m0, t, &m, 300, None).unwrap();
            assert!(r.rhs_inside(), "{m}: {r:?}");
            assert!(r.rhs > 0.0 && r.rhs < 1.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn expectation_and_summation_agree(k in 3u64..80, x in -3.0f64..3.0, a in 1.2f64..4.0, b in 0.5f64..3.0) {
            let m = MeasureSpec::beta(a, b).unwrap();
            let p = params(m.clone(), 0.0);
            let f = GaussianBump::new(0.1, 0.9);
            let c = (a + b - 1.0) / (a - 1.0);
            let law = mixing_pmf(MixingKind::DustBinomial, k, &m, 1e-12).unwrap();
            let h = |u: f64| (f.value(x + (-u).ln_1p()) - f.value(x)) / u;
            let e: f64 = law.pmf.iter().filter(|e| e.0 > 0).map(|&(j, q)| {
                let jf = j as f64;
                (1.0 - 1.0 / (jf + 1.0)) * h(jf / k as f64) * q
            }).sum::<f64>() * c;
            let direct = discrete_generator_terms(&f, k, x, &p).unwrap().s_dust;
            prop_assert!((direct - e).abs() < 1e-9 * (1.0 + e.abs()), "{} vs {}", direct, e);
        }
    }
}
