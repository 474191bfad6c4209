//! Jump rates of the block counting process and the fixation line.
//!
//! q_{k,j} = C(k, j−1) ∫ u^{k−j−1} (1−u)^{j−1} Λ(du), 1 ≤ j < k,
//! γ_{k,j} = C(j, j−k+1) ∫ u^{j−k−1} (1−u)^k Λ(du), j > k.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{integrate_split, MeasureKind, MeasureLike, MeasureSpec, Shape};
use crate::quad::QuadOptions;
use crate::specfun::{lgamma, ln_binom, ln_gamma_ratio};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMethod {
    Closed,
    Quadrature,
}

impl RateMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateMethod::Closed => "closed",
            RateMethod::Quadrature => "quadrature",
        }
    }
}

/// log(1 − u), accurate at both ends.
#[inline]
pub(crate) fn ln_gap(u: f64, v: f64) -> f64 {
    if u < 0.5 {
        (-u).ln_1p()
    } else {
        v.ln()
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_intervals: 4000 }
}

/// Split points around the peak of u^α (1−u)^β.
fn peak_splits(alpha: f64, beta: f64) -> Vec<f64> {
    let n = alpha + beta;
    if n < 4.0 {
        return vec![];
    }
    let mode = alpha / n;
    let sd = (mode * (1.0 - mode) / (n + 1.0)).sqrt().max(1.0 / n);
    [-8.0, -3.0, 0.0, 3.0, 8.0]
        .iter()
        .map(|c| mode + c * sd)
        .filter(|&u| u > 0.0 && u < 1.0)
        .collect()
}

/// C · ∫ u^α (1−u)^β m(du) by quadrature, with ln C given.
pub(crate) fn binomial_moment<M: MeasureLike + ?Sized>(ln_c: f64, a: f64, b: f64, m: &M) -> Result<f64> {
    let f = |u: f64, v: f64| {
        let mut e = ln_c;
        if a != 0.0 {
            e += a * u.ln();
        }
        if b != 0.0 {
            e += b * ln_gap(u, v);
        }
        e.exp()
    };
    let r = integrate_split(f, m, 0.0, 1.0, Shape { left: a, right: b }, &peak_splits(a, b), quad_opts())?;
    Ok(r.value)
}

fn check_block(k: u64, j: u64) -> Result<()> {
    if k < 2 || j < 1 || j >= k {
        return Err(Error::Index(format!("block rate needs k ≥ 2 and 1 ≤ j ≤ k−1, got k={k}, j={j}")));
    }
    Ok(())
}

fn check_fixation(k: u64, j: u64) -> Result<()> {
    if k < 1 || j <= k {
        return Err(Error::Index(format!("fixation rate needs k ≥ 1 and j > k, got k={k}, j={j}")));
    }
    Ok(())
}

/// q_{k,j} for Λ = λ.
pub fn block_rate_lambda(k: u64, j: u64) -> f64 {
    let d = (k - j) as f64;
    k as f64 / (d * (d + 1.0))
}

/// γ_{k,j} for Λ = λ.
pub fn fixation_rate_lambda(k: u64, j: u64) -> f64 {
    let d = (j - k) as f64;
    k as f64 / (d * (d + 1.0))
}

fn closed_block_component(k: u64, j: u64, m: &MeasureSpec) -> Option<f64> {
    if let Some(c) = m.lebesgue_scale() {
        return Some(c * block_rate_lambda(k, j));
    }
    if let MeasureKind::Atom { at, mass } = *m.kind() {
        let (kf, jf) = (k as f64, j as f64);
        let ln = ln_binom(kf, jf - 1.0) + (kf - jf - 1.0) * at.ln() + (jf - 1.0) * (-at).ln_1p() + mass.ln();
        return Some(ln.exp());
    }
    let (a, b, w) = m.as_scaled_beta()?;
    Some(w * block_rate_beta(k, j, a, b))
}

/// q_{k,j} for Λ = Beta(a, b) from the Γ-function closed form.
pub fn block_rate_beta(k: u64, j: u64, a: f64, b: f64) -> f64 {
    let (kf, jf) = (k as f64, j as f64);
    let ln = lgamma(a + b) - lgamma(a) - lgamma(b)
        + ln_gamma_ratio(kf + 1.0, kf - 2.0 + a + b)
        + ln_gamma_ratio(jf - 1.0 + b, jf)
        + ln_gamma_ratio(kf - jf - 1.0 + a, kf - jf + 2.0);
    ln.exp()
}

/// γ_{k,j} for Λ = Beta(a, b) from the Γ-function closed form.
pub fn fixation_rate_beta(k: u64, j: u64, a: f64, b: f64) -> f64 {
    let (kf, jf) = (k as f64, j as f64);
    let ln = lgamma(a + b) - lgamma(a) - lgamma(b)
        + ln_gamma_ratio(jf + 1.0, jf - 1.0 + a + b)
        + ln_gamma_ratio(jf - kf - 1.0 + a, jf - kf + 2.0)
        + ln_gamma_ratio(kf + b, kf);
    ln.exp()
}

fn closed_fixation_component(k: u64, j: u64, m: &MeasureSpec) -> Option<f64> {
    if let Some(c) = m.lebesgue_scale() {
        return Some(c * fixation_rate_lambda(k, j));
    }
    let (kf, jf) = (k as f64, j as f64);
    if let MeasureKind::Atom { at, mass } = *m.kind() {
        let ln = ln_binom(jf, jf - kf + 1.0) + (jf - kf - 1.0) * at.ln() + kf * (-at).ln_1p() + mass.ln();
        return Some(ln.exp());
    }
    let (a, b, w) = m.as_scaled_beta()?;
    Some(w * fixation_rate_beta(k, j, a, b))
}

fn closed_sum(m: &MeasureSpec, each: impl Fn(&MeasureSpec) -> Option<f64>) -> Option<f64> {
    m.components().into_iter().map(each).sum()
}

/// q_{k,j} and the method used to compute it.
pub fn block_rate_with_method(k: u64, j: u64, m: &MeasureSpec) -> Result<(f64, RateMethod)> {
    check_block(k, j)?;
    if let Some(q) = closed_sum(m, |c| closed_block_component(k, j, c)) {
        return Ok((q, RateMethod::Closed));
    }
    Ok((block_rate_quadrature(k, j, m)?, RateMethod::Quadrature))
}

/// q_{k,j}: closed form for beta, Lebesgue and atomic parts, quadrature otherwise.
pub fn block_rate(k: u64, j: u64, m: &MeasureSpec) -> Result<f64> {
    Ok(block_rate_with_method(k, j, m)?.0)
}

/// q_{k,j} by quadrature against any measure.
pub fn block_rate_quadrature<M: MeasureLike + ?Sized>(k: u64, j: u64, m: &M) -> Result<f64> {
    check_block(k, j)?;
    binomial_moment(ln_binom(k as f64, j as f64 - 1.0), (k - j - 1) as f64, (j - 1) as f64, m)
}

pub fn fixation_rate_with_method(k: u64, j: u64, m: &MeasureSpec) -> Result<(f64, RateMethod)> {
    check_fixation(k, j)?;
    if let Some(q) = closed_sum(m, |c| closed_fixation_component(k, j, c)) {
        return Ok((q, RateMethod::Closed));
    }
    Ok((fixation_rate_quadrature(k, j, m)?, RateMethod::Quadrature))
}

/// γ_{k,j}.
pub fn fixation_rate(k: u64, j: u64, m: &MeasureSpec) -> Result<f64> {
    Ok(fixation_rate_with_method(k, j, m)?.0)
}

pub fn fixation_rate_quadrature<M: MeasureLike + ?Sized>(k: u64, j: u64, m: &M) -> Result<f64> {
    check_fixation(k, j)?;
    binomial_moment(ln_binom(j as f64, (j - k + 1) as f64), (j - k - 1) as f64, k as f64, m)
}

/// (1 − (1−u)^n (1 + nu)) / u², by its power series when nu is small.
pub(crate) fn multi_hit_kernel(n: f64, u: f64, v: f64) -> f64 {
    if n * u < 0.25 {
        // (1−u)^n (1+nu) = 1 + Σ_{i≥2} c_i u^i, c_i = (−1)^i [C(n,i) − n C(n,i−1)]
        let mut sum = 0.0;
        let mut b_prev = n; // C(n, 1)
        let mut upow = 1.0;
        let mut sign = 1.0;
        for i in 2..60 {
            let fi = i as f64;
            let b = b_prev * (n - fi + 1.0) / fi;
            let term = sign * (b - n * b_prev) * upow;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() || b == 0.0 {
                break;
            }
            b_prev = b;
            upow *= u;
            sign = -sign;
        }
        return -sum;
    }
    -(n * ln_gap(u, v) + (n * u).ln_1p()).exp_m1() / (u * u)
}

fn m_scale<M: MeasureLike + ?Sized>(m: &M) -> f64 {
    let atoms: f64 = m.atoms().iter().map(|a| a.1).sum();
    let d = m.density(0.5, 0.5);
    (atoms + d).max(1e-300)
}

/// Σ_j q_{k,j} = ∫ (1 − (1−u)^{k−1}(1 + (k−1)u)) u^{-2} Λ(du).
pub fn block_total_rate<M: MeasureLike + ?Sized>(k: u64, m: &M) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::Index(format!("block total rate needs k ≥ 2, got {k}")));
    }
    let km = (k - 1) as f64;
    let f = |u: f64, v: f64| multi_hit_kernel(km, u, v);
    let splits: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|c| c / k as f64).filter(|&u| u < 0.5).collect();
    let opts = QuadOptions::new(1e-15 * m_scale(m), 1e-13);
    let r = integrate_split(f, m, 0.0, 1.0, Shape::BOUNDED, &splits, opts)?;
    Ok((r.value, r.error))
}

/// Σ_j γ_{k,j} = ∫ (1 − (1−u)^k (1 + ku)) u^{-2} Λ(du), with its error bound.
pub fn fixation_total_rate<M: MeasureLike + ?Sized>(k: u64, m: &M) -> Result<(f64, f64)> {
    if k < 1 {
        return Err(Error::Index("fixation total rate needs k ≥ 1".into()));
    }
    let kf = k as f64;
    let f = |u: f64, v: f64| multi_hit_kernel(kf, u, v);
    let splits: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|c| c / kf).filter(|&u| u < 0.5).collect();
    let opts = QuadOptions::new(1e-15 * m_scale(m), 1e-13);
    let r = integrate_split(f, m, 0.0, 1.0, Shape::BOUNDED, &splits, opts)?;
    Ok((r.value, r.error))
}

/// Normalized jump distribution out of one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpLaw {
    pub source: u64,
    pub targets: Vec<(u64, f64)>,
    pub total_rate: f64,
    /// Rate mass not represented in `targets` (0 for block counting).
    pub tail_mass_bound: f64,
}

/// Jump law of the block counting process from state k.
pub fn jump_pmf_block(k: u64, m: &MeasureSpec) -> Result<JumpLaw> {
    if k < 2 {
        return Err(Error::Index(format!("block counting jumps need k ≥ 2, got {k}")));
    }
    let rates: Vec<f64> = (1..k).map(|j| block_rate(k, j, m)).collect::<Result<_>>()?;
    let total: f64 = rates.iter().rev().sum();
    let targets = (1..k).zip(rates).map(|(j, q)| (j, q / total)).collect();
    Ok(JumpLaw { source: k, targets, total_rate: total, tail_mass_bound: 0.0 })
}

/// Largest number of fixation-line targets materialized.
pub const FIXATION_MAX_TARGETS: u64 = 1_000_000;

/// Jump law of the fixation line from state k, truncated once the certified
/// remaining rate is at most `tail_tol · total_rate`.
///
/// The remainder is the total rate (one integral) minus the partial sum,
/// plus the quadrature error of the total.
pub fn jump_pmf_fixation(k: u64, m: &MeasureSpec, tail_tol: f64) -> Result<JumpLaw> {
    if k < 1 {
        return Err(Error::Index("fixation jumps need k ≥ 1".into()));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::Domain(format!("tail_tol must be positive, got {tail_tol}")));
    }
    let (total, total_err) = match m.lebesgue_scale() {
        Some(c) => (c * k as f64, 0.0),
        None => fixation_total_rate(k, m)?,
    };
    let mut rates = Vec::new();
    let mut partial = 0.0;
    let mut j = k;
    loop {
        j += 1;
        if j - k > FIXATION_MAX_TARGETS {
            return Err(Error::Truncation(format!(
                "{FIXATION_MAX_TARGETS} fixation targets from k={k} leave rate {:e} > {:e}",
                total - partial + total_err,
                tail_tol * total
            )));
        }
        let g = fixation_rate(k, j, m)?;
        rates.push((j, g));
        partial += g;
        let tail = match m.lebesgue_scale() {
            // exact: Σ_{l > J} k/(l(l+1)) = k/(J+1)
            Some(c) => c * k as f64 / ((j - k + 1) as f64),
            None => (total - partial).max(0.0) + total_err,
        };
        if tail <= tail_tol * total {
            let targets = rates.into_iter().map(|(j, g)| (j, g / total)).collect();
            return Ok(JumpLaw { source: k, targets, total_rate: total, tail_mass_bound: tail });
        }
    }
}

/// Memoized block-counting jump laws for one measure.
#[derive(Debug)]
pub struct RateCache {
    measure: MeasureSpec,
    block: RwLock<HashMap<u64, Arc<JumpLaw>>>,
}

impl RateCache {
    pub fn new(measure: MeasureSpec) -> Self {
        RateCache { measure, block: RwLock::new(HashMap::new()) }
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn block_law(&self, k: u64) -> Result<Arc<JumpLaw>> {
        if let Some(l) = self.block.read().unwrap().get(&k) {
            return Ok(l.clone());
        }
        let law = Arc::new(jump_pmf_block(k, &self.measure)?);
        Ok(self.block.write().unwrap().entry(k).or_insert(law).clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdiVerdict {
    DivergesEvidence,
    ConvergesEvidence,
    Inconclusive,
}

impl CdiVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            CdiVerdict::DivergesEvidence => "diverges-evidence",
            CdiVerdict::ConvergesEvidence => "converges-evidence",
            CdiVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// A known theorem that settles coming down from infinity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdiAuthority {
    pub comes_down: bool,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CdiReport {
    /// η_k for k = 2..=K.
    pub eta: Vec<f64>,
    /// Σ_{i=2}^{k} 1/η_i for k = 2..=K.
    pub partial_sums: Vec<f64>,
    /// Log-log slope of k·log k / η_k over [K/10, K].
    pub slope: f64,
    pub verdict_hint: CdiVerdict,
    pub authoritative: Option<CdiAuthority>,
}

/// η_k = k Σ_{j=0}^{k−2} ∫(1−u)^j Λ(du) for k = 2..=K and a heuristic
/// verdict on the convergence of Σ 1/η_k.
///
/// The heuristic compares η_k with k log k, the borderline growth: a flat or
/// rising ratio k log k / η_k is evidence of divergence, a clearly falling one
/// of convergence.
pub fn cdi_diagnostic(m: &MeasureSpec, kmax: u64) -> Result<CdiReport> {
    if kmax < 2 {
        return Err(Error::Index(format!("K must be at least 2, got {kmax}")));
    }
    let moments = geometric_moments(m, kmax)?;
    let mut eta = Vec::with_capacity(kmax as usize - 1);
    let mut partial_sums = Vec::with_capacity(kmax as usize - 1);
    let mut acc = 0.0;
    let mut s = 0.0;
    for k in 2..=kmax {
        acc += moments[(k - 2) as usize];
        let e = k as f64 * acc;
        eta.push(e);
        s += 1.0 / e;
        partial_sums.push(s);
    }
    let lo = (kmax / 10).max(3);
    let pts: Vec<(f64, f64)> = (lo..=kmax)
        .map(|k| {
            let kf = k as f64;
            (kf.ln(), (kf * kf.ln() / eta[(k - 2) as usize]).ln())
        })
        .collect();
    let slope = least_squares_slope(&pts);
    let verdict_hint = if !slope.is_finite() || pts.len() < 3 {
        CdiVerdict::Inconclusive
    } else if slope >= -0.05 {
        CdiVerdict::DivergesEvidence
    } else if slope <= -0.2 {
        CdiVerdict::ConvergesEvidence
    } else {
        CdiVerdict::Inconclusive
    };
    Ok(CdiReport { eta, partial_sums, slope, verdict_hint, authoritative: cdi_authority(m) })
}

/// ∫(1−u)^j Λ(du) for j = 0..=K−2.
fn geometric_moments(m: &MeasureSpec, kmax: u64) -> Result<Vec<f64>> {
    let n = (kmax - 1) as usize;
    let comps = m.components();
    let mut out = vec![0.0; n];
    for c in comps {
        if let Some((a, b, w)) = c.as_scaled_beta() {
            // B(a, b+j)/B(a, b) by the recurrence in j
            let mut r = w;
            for (j, o) in out.iter_mut().enumerate() {
                *o += r;
                let jf = j as f64;
                r *= (b + jf) / (a + b + jf);
            }
        } else if let MeasureKind::Atom { at, mass } = *c.kind() {
            let mut r = mass;
            for o in out.iter_mut() {
                *o += r;
                r *= 1.0 - at;
            }
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                let jf = j as f64;
                let splits = if j > 4 { vec![1.0 / jf, 10.0 / jf] } else { vec![] };
                let r = integrate_split(
                    |_, v: f64| if j == 0 { 1.0 } else { (jf * v.ln()).exp() },
                    c,
                    0.0,
                    1.0,
                    Shape { left: 0.0, right: jf },
                    &splits,
                    QuadOptions::new(0.0, 1e-12),
                )?;
                *o += r.value;
            }
        }
    }
    Ok(out)
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Exact answers where a theorem applies: a density ~ u^{a−1} near 0
/// comes down iff a < 1; measures with ∫u^{-1}Λ < ∞ or behaving like bλ
/// near 0 never come down.
fn cdi_authority(m: &MeasureSpec) -> Option<CdiAuthority> {
    let left = m.left();
    if m.has_density() && left.exponent < 0.0 {
        if matches!(m.kind(), MeasureKind::Beta { .. }) {
            return Some(CdiAuthority {
                comes_down: true,
                reason: format!("beta coalescent with a = {} < 1 comes down from infinity", left.exponent + 1.0),
            });
        }
        return None;
    }
    if !m.has_density() || left.exponent > 0.0 {
        return Some(CdiAuthority {
            comes_down: false,
            reason: "∫u^-1 Λ(du) < ∞ (dust): does not come down from infinity".into(),
        });
    }
    if left.exponent == 0.0 && left.next_order > 0.0 {
        return Some(CdiAuthority {
            comes_down: false,
            reason: format!("assumption A holds with b = {}: does not come down from infinity", left.limit),
        });
    }
    None
}
