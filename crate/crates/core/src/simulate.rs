//! Event-driven simulation of the block counting process N^(n) and the
//! fixation line L^(m), and a replicate harness for the rescaled processes.
//!
//! Jumps are generated from the Poissonian construction of the coalescent:
//! points u arrive at rate u^{-2}Λ(du), every block takes part with
//! probability u, and the chain jumps when at least two blocks take part.
//! The arrival intensity is majorised by min(u^{-2}, C)Λ(du) with C of order
//! k², and candidate points are thinned. cλ has closed-form jump laws and
//! small block counting states use alias tables built from the exact rates.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{BuiltinDensity, LimitParams, MeasureKind, MeasureLike, MeasureSpec};
use crate::rates::{jump_pmf_block, ln_gap, multi_hit_kernel};
use crate::specfun::ln_binom;

/// Default cap for fixation line paths.
pub const DEFAULT_CAP: u64 = 1_000_000_000;
/// Largest admissible cap.
pub const MAX_CAP: u64 = 1_000_000_000_000;
/// Block counting states up to this size use alias tables.
pub const ALIAS_MAX_STATE: u64 = 256;

const LOGLOG_START: f64 = 0.934_011_964_154_687_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Block,
    Fixation,
}

impl ProcessKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProcessKind::Block => "block",
            ProcessKind::Fixation => "fixation",
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(ProcessKind::Block),
            "fixation" => Ok(ProcessKind::Fixation),
            _ => Err(Error::Config(format!("kind must be block or fixation, got {s:?}"))),
        }
    }
}

/// Seed token: a master seed and a stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seed {
    pub master: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(master: u64) -> Self {
        Seed { master, stream: 0 }
    }

    /// Independent stream for replicate r.
    pub fn replicate(&self, r: u64) -> Self {
        Seed { master: self.master, stream: r }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

/// One simulated trajectory. Entry 0 is (0, initial_state); every later
/// entry is a jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub event_times: Vec<f64>,
    pub states: Vec<u64>,
    pub initial_state: u64,
    pub horizon: f64,
    pub capped: bool,
    /// Time of the jump that left {1, …, cap}.
    pub cap_time: Option<f64>,
}

impl PathRecord {
    fn new(initial_state: u64, horizon: f64) -> Self {
        PathRecord {
            event_times: vec![0.0],
            states: vec![initial_state],
            initial_state,
            horizon,
            capped: false,
            cap_time: None,
        }
    }

    pub fn num_events(&self) -> usize {
        self.states.len() - 1
    }

    /// (time, new state) for each jump.
    pub fn events(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.event_times.iter().copied().zip(self.states.iter().copied()).skip(1)
    }

    /// Right-continuous state at time t; None past the cap time.
    pub fn state_at(&self, t: f64) -> Option<u64> {
        if let Some(tc) = self.cap_time {
            if t >= tc {
                return None;
            }
        }
        let i = self.event_times.partition_point(|&s| s <= t);
        Some(self.states[i.max(1) - 1])
    }
}

// ---------------------------------------------------------------------------
// Envelope for the Poissonian construction

// Density x^e on [lo, hi]: integral and inverse-CDF draw.
fn power_mass(e: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let p = e + 1.0;
    if p.abs() < 1e-12 {
        (hi / lo).ln()
    } else {
        (hi.powf(p) - lo.powf(p)) / p
    }
}

fn power_draw(e: f64, lo: f64, hi: f64, w: f64) -> f64 {
    let p = e + 1.0;
    let x = if p.abs() < 1e-12 {
        lo * (hi / lo).powf(w)
    } else if lo == 0.0 {
        hi * w.powf(1.0 / p)
    } else {
        let (a, b) = (lo.powf(p), hi.powf(p));
        (a + w * (b - a)).powf(1.0 / p)
    };
    x.clamp(lo, hi)
}

#[derive(Debug, Clone)]
enum Proposal {
    Atom { u: f64 },
    // u ∝ u^e on [lo, hi]
    PowU { e: f64, lo: f64, hi: f64 },
    // 1 − u ∝ (1−u)^e on [lo, hi]
    PowV { e: f64, lo: f64, hi: f64 },
    Loglog,
}

#[derive(Debug, Clone)]
struct Piece {
    comp: usize,
    proposal: Proposal,
    // proposal intensity is k · (u^e or v^e), or k for atoms and loglog
    k: f64,
    mass: f64,
}

/// Majorant min(u^{-2}, C)Λ(du) split into pieces that can be drawn exactly.
#[derive(Debug, Clone)]
struct Envelope {
    pieces: Vec<Piece>,
    mass: f64,
    c: f64,
}

fn weight(u: f64, c: f64) -> f64 {
    (1.0 / (u * u)).min(c)
}

impl Envelope {
    fn new(comps: &[MeasureSpec], c: f64) -> Self {
        let mut pieces = Vec::new();
        let split = c.powf(-0.5).min(0.5);
        for (i, comp) in comps.iter().enumerate() {
            let beta_like = |d: f64, alpha: f64, beta: f64, cut: f64, pieces: &mut Vec<Piece>| {
                let h1 = split.min(cut);
                let m1 = if beta >= 1.0 { 1.0 } else { (1.0 - h1).powf(beta - 1.0) };
                let k1 = c * d * m1;
                pieces.push(Piece {
                    comp: i,
                    proposal: Proposal::PowU { e: alpha - 1.0, lo: 0.0, hi: h1 },
                    k: k1,
                    mass: k1 * power_mass(alpha - 1.0, 0.0, h1),
                });
                let h2 = 0.5f64.min(cut);
                if h2 > split {
                    let m2 = if beta >= 1.0 { 1.0 } else { (1.0 - h2).powf(beta - 1.0) };
                    let k2 = d * m2;
                    pieces.push(Piece {
                        comp: i,
                        proposal: Proposal::PowU { e: alpha - 3.0, lo: split, hi: h2 },
                        k: k2,
                        mass: k2 * power_mass(alpha - 3.0, split, h2),
                    });
                }
                if cut > 0.5 {
                    let m3 = c.min(4.0) * if alpha >= 1.0 { 1.0 } else { 2f64.powf(1.0 - alpha) };
                    let k3 = d * m3;
                    let vlo = 1.0 - cut;
                    pieces.push(Piece {
                        comp: i,
                        proposal: Proposal::PowV { e: beta - 1.0, lo: vlo, hi: 0.5 },
                        k: k3,
                        mass: k3 * power_mass(beta - 1.0, vlo, 0.5),
                    });
                }
            };
            match comp.kind() {
                MeasureKind::Atom { at, mass } => {
                    let k = mass * weight(*at, c);
                    pieces.push(Piece { comp: i, proposal: Proposal::Atom { u: *at }, k, mass: k });
                }
                MeasureKind::Lebesgue { c: h } => beta_like(*h, 1.0, 1.0, 1.0, &mut pieces),
                MeasureKind::Beta { a, b } => {
                    let d = (-crate::specfun::ln_beta(*a, *b)).exp();
                    beta_like(d, *a, *b, 1.0, &mut pieces)
                }
                MeasureKind::Density(BuiltinDensity::Power { scale, p, q }) => {
                    beta_like(*scale, p + 1.0, q + 1.0, 1.0, &mut pieces)
                }
                MeasureKind::Density(BuiltinDensity::TruncatedUniform { height, cut }) => {
                    beta_like(*height, 1.0, 1.0, *cut, &mut pieces)
                }
                MeasureKind::Density(BuiltinDensity::LoglogTail { scale }) => {
                    let k = scale * weight(LOGLOG_START, c);
                    pieces.push(Piece { comp: i, proposal: Proposal::Loglog, k, mass: k });
                }
                MeasureKind::Mixture(_) => unreachable!("components are flattened"),
            }
        }
        pieces.retain(|p| p.mass > 0.0);
        let mass = pieces.iter().map(|p| p.mass).sum();
        Envelope { pieces, mass, c }
    }

    /// A candidate (u, 1−u) and the probability of keeping it as a point of min(u^{-2}, C)Λ.
    fn propose<R: Rng + ?Sized>(&self, comps: &[MeasureSpec], rng: &mut R) -> (f64, f64, f64) {
        let mut x = rng.random::<f64>() * self.mass;
        let mut piece = &self.pieces[self.pieces.len() - 1];
        for p in &self.pieces {
            if x < p.mass {
                piece = p;
                break;
            }
            x -= p.mass;
        }
        let w = 1.0 - rng.random::<f64>();
        let comp = &comps[piece.comp];
        match piece.proposal {
            Proposal::Atom { u } => (u, 1.0 - u, 1.0),
            Proposal::PowU { e, lo, hi } => {
                let u = power_draw(e, lo, hi, w);
                let v = 1.0 - u;
                let keep = weight(u, self.c) * comp.density(u, v) / (piece.k * u.powf(e));
                (u, v, keep)
            }
            Proposal::PowV { e, lo, hi } => {
                let v = power_draw(e, lo, hi, w);
                let u = 1.0 - v;
                let keep = weight(u, self.c) * comp.density(u, v) / (piece.k * v.powf(e));
                (u, v, keep)
            }
            Proposal::Loglog => {
                let l = (1.0 / w).exp();
                let v = (-l).exp();
                let u = -(-l).exp_m1();
                (u, v, weight(u, self.c) / weight(LOGLOG_START, self.c))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Conditional binomial and negative binomial draws

// Bin(k, u) conditioned on ≥ 2.
fn draw_merger_size<R: Rng + ?Sized>(k: u64, u: f64, v: f64, rng: &mut R) -> u64 {
    if v == 0.0 || k == 2 {
        return if v == 0.0 { k } else { 2 };
    }
    let kf = k as f64;
    if kf * u < 10.0 {
        let total = u * u * multi_hit_kernel(kf - 1.0, u, v);
        let target = rng.random::<f64>() * total;
        let mut p = (ln_binom(kf, 2.0) + 2.0 * u.ln() + (kf - 2.0) * ln_gap(u, v)).exp();
        let mut acc = p;
        let mut l = 2u64;
        while acc < target && l < k {
            p *= (kf - l as f64) / (l as f64 + 1.0) * (u / v);
            l += 1;
            acc += p;
            if p == 0.0 {
                break;
            }
        }
        l
    } else {
        let bin = Binomial::new(k, u).expect("valid binomial");
        loop {
            let l = bin.sample(rng);
            if l >= 2 {
                return l;
            }
        }
    }
}

// Number of successes before the k-th failure, success probability u,
// conditioned on ≥ 2. None if it is astronomically large.
fn draw_negbin_excess<R: Rng + ?Sized>(k: u64, u: f64, v: f64, rng: &mut R) -> Option<u64> {
    if v == 0.0 {
        return None;
    }
    let kf = k as f64;
    let mean = kf * u / v;
    if mean < 10.0 {
        let total = u * u * multi_hit_kernel(kf, u, v);
        let target = rng.random::<f64>() * total;
        let mut p = (ln_binom(kf + 1.0, 2.0) + 2.0 * u.ln() + kf * ln_gap(u, v)).exp();
        let mut acc = p;
        let mut m = 2u64;
        while acc < target {
            p *= (kf + m as f64) / (m as f64 + 1.0) * u;
            m += 1;
            acc += p;
            if p == 0.0 {
                break;
            }
        }
        Some(m)
    } else {
        let gamma = Gamma::new(kf, 1.0).expect("valid gamma");
        loop {
            let lambda = gamma.sample(rng) * (u / v);
            if !(lambda < 1e15) {
                return None;
            }
            let m = Poisson::new(lambda).expect("valid poisson").sample(rng) as u64;
            if m >= 2 {
                return Some(m);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Jump sampler

struct AliasLaw {
    total_rate: f64,
    targets: Vec<u64>,
    alias: WeightedAliasIndex<f64>,
}

/// Draws holding times and jump targets; shared across replicates.
pub struct JumpSampler {
    measure: MeasureSpec,
    comps: Vec<MeasureSpec>,
    lebesgue: Option<f64>,
    use_alias: bool,
    alias: RwLock<HashMap<u64, Arc<AliasLaw>>>,
}

impl fmt::Debug for JumpSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpSampler").field("measure", &self.measure).field("use_alias", &self.use_alias).finish()
    }
}

impl JumpSampler {
    pub fn new(measure: &MeasureSpec) -> Self {
        JumpSampler {
            measure: measure.clone(),
            comps: measure.components().into_iter().cloned().collect(),
            lebesgue: measure.lebesgue_scale(),
            use_alias: true,
            alias: RwLock::new(HashMap::new()),
        }
    }

    /// Always thin Poisson points, even where closed forms or alias tables exist.
    pub fn thinning_only(measure: &MeasureSpec) -> Self {
        JumpSampler { lebesgue: None, use_alias: false, ..Self::new(measure) }
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    fn alias_law(&self, k: u64) -> Result<Arc<AliasLaw>> {
        if let Some(l) = self.alias.read().unwrap().get(&k) {
            return Ok(l.clone());
        }
        let law = jump_pmf_block(k, &self.measure)?;
        let (targets, probs): (Vec<u64>, Vec<f64>) = law.targets.iter().copied().unzip();
        let alias = WeightedAliasIndex::new(probs)
            .map_err(|e| Error::NonConvergence { what: format!("alias table for k = {k}: {e}"), estimate: 0.0, error: 0.0 })?;
        let law = Arc::new(AliasLaw { total_rate: law.total_rate, targets, alias });
        Ok(self.alias.write().unwrap().entry(k).or_insert(law).clone())
    }

    /// Holding time and target of the next jump of N from state k ≥ 2.
    pub fn block_step<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> Result<(f64, u64)> {
        debug_assert!(k >= 2);
        let e: f64 = Exp1.sample(rng);
        if let Some(c) = self.lebesgue {
            let kf = k as f64;
            let w: f64 = rng.random();
            let l = (1.0 / (1.0 - w * (1.0 - 1.0 / kf))).ceil().clamp(2.0, kf) as u64;
            return Ok((e / (c * (kf - 1.0)), k - l + 1));
        }
        if self.use_alias && k <= ALIAS_MAX_STATE {
            let law = self.alias_law(k)?;
            let i = law.alias.sample(rng);
            return Ok((e / law.total_rate, law.targets[i]));
        }
        let kf = k as f64;
        let env = Envelope::new(&self.comps, 0.5 * kf * (kf - 1.0));
        let mut t = e / env.mass;
        loop {
            let (u, v, keep) = env.propose(&self.comps, rng);
            let accept = keep * multi_hit_kernel(kf - 1.0, u, v) / weight(u, env.c);
            if rng.random::<f64>() < accept {
                let l = draw_merger_size(k, u, v, rng);
                return Ok((t, k - l + 1));
            }
            let e: f64 = Exp1.sample(rng);
            t += e / env.mass;
        }
    }

    /// Holding time and target of the next jump of L from state k ≥ 1;
    /// target None when it exceeds the representable range.
    pub fn fixation_step<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> Result<(f64, Option<u64>)> {
        let kf = k as f64;
        let e: f64 = Exp1.sample(rng);
        if let Some(c) = self.lebesgue {
            let w: f64 = rng.random();
            let l = (w / (1.0 - w)).ceil().max(1.0);
            let target = if l < 1e18 { Some(k + l as u64) } else { None };
            return Ok((e / (c * kf), target));
        }
        let env = Envelope::new(&self.comps, 2.0 * kf * (kf + 1.0));
        let mut t = e / env.mass;
        loop {
            let (u, v, keep) = env.propose(&self.comps, rng);
            let accept = keep * multi_hit_kernel(kf, u, v) / weight(u, env.c);
            if rng.random::<f64>() < accept {
                let m = draw_negbin_excess(k, u, v, rng);
                return Ok((t, m.and_then(|m| k.checked_add(m - 1))));
            }
            let e: f64 = Exp1.sample(rng);
            t += e / env.mass;
        }
    }

    /// Runs N from n until the horizon or absorption, reporting each jump.
    pub fn run_block<R: Rng + ?Sized>(
        &self,
        n: u64,
        horizon: f64,
        rng: &mut R,
        mut on_jump: impl FnMut(f64, u64),
    ) -> Result<()> {
        let mut k = n;
        let mut t = 0.0;
        while k > 1 {
            let (dt, target) = self.block_step(k, rng)?;
            t += dt;
            if t > horizon {
                break;
            }
            k = target;
            on_jump(t, k);
        }
        Ok(())
    }

    /// Runs L from m0 until the horizon or the first jump above cap, which is
    /// reported with state None.
    pub fn run_fixation<R: Rng + ?Sized>(
        &self,
        m0: u64,
        horizon: f64,
        cap: u64,
        rng: &mut R,
        mut on_jump: impl FnMut(f64, Option<u64>),
    ) -> Result<()> {
        let mut k = m0;
        let mut t = 0.0;
        loop {
            let (dt, target) = self.fixation_step(k, rng)?;
            t += dt;
            if t > horizon {
                return Ok(());
            }
            match target {
                Some(j) if j <= cap => {
                    k = j;
                    on_jump(t, Some(j));
                }
                _ => {
                    on_jump(t, None);
                    return Ok(());
                }
            }
        }
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be finite and ≥ 0, got {horizon}")));
    }
    Ok(())
}

fn check_cap(m0: u64, cap: u64) -> Result<()> {
    if cap <= m0 {
        return Err(Error::Domain(format!("cap must exceed the initial state, got cap {cap} ≤ {m0}")));
    }
    if cap > MAX_CAP {
        return Err(Error::Domain(format!("cap must be at most {MAX_CAP}, got {cap}")));
    }
    Ok(())
}

/// One path of the block counting process N^(n) on [0, horizon].
pub fn simulate_block_path(n: u64, m: &MeasureSpec, horizon: f64, seed: Seed) -> Result<PathRecord> {
    block_path_with(&JumpSampler::new(m), n, horizon, seed)
}

pub fn block_path_with(sampler: &JumpSampler, n: u64, horizon: f64, seed: Seed) -> Result<PathRecord> {
    if n < 1 {
        return Err(Error::Domain("n must be ≥ 1".into()));
    }
    check_horizon(horizon)?;
    let mut rec = PathRecord::new(n, horizon);
    let mut rng = seed.rng();
    sampler.run_block(n, horizon, &mut rng, |t, k| {
        rec.event_times.push(t);
        rec.states.push(k);
    })?;
    Ok(rec)
}

/// One path of the fixation line L^(m0) on [0, horizon], stopped at the first exceedance of cap.
pub fn simulate_fixation_path(m0: u64, m: &MeasureSpec, horizon: f64, cap: u64, seed: Seed) -> Result<PathRecord> {
    fixation_path_with(&JumpSampler::new(m), m0, horizon, cap, seed)
}

pub fn fixation_path_with(sampler: &JumpSampler, m0: u64, horizon: f64, cap: u64, seed: Seed) -> Result<PathRecord> {
    if m0 < 1 {
        return Err(Error::Domain("m0 must be ≥ 1".into()));
    }
    check_horizon(horizon)?;
    check_cap(m0, cap)?;
    let mut rec = PathRecord::new(m0, horizon);
    let mut rng = seed.rng();
    sampler.run_fixation(m0, horizon, cap, &mut rng, |t, k| match k {
        Some(k) => {
            rec.event_times.push(t);
            rec.states.push(k);
        }
        None => {
            rec.capped = true;
            rec.cap_time = Some(t);
        }
    })?;
    Ok(rec)
}

// ---------------------------------------------------------------------------
// Rescaled samples

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledSample {
    pub t: f64,
    /// log N_t − e^{−bt} log n, or log L_t − e^{bt} log n; +∞ for capped paths.
    pub value: f64,
    pub n: u64,
    pub replicate_id: u64,
    /// State at time t; cap + 1 for capped paths.
    pub raw_state: u64,
    pub capped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaledRun {
    pub kind: ProcessKind,
    /// Replicate-major: all times of replicate 0, then replicate 1, …
    pub samples: Vec<ScaledSample>,
    pub capped_replicates: u64,
}

impl ScaledRun {
    /// Samples at the i-th query time.
    pub fn at_time(&self, i: usize, num_times: usize) -> Vec<ScaledSample> {
        self.samples.iter().skip(i).step_by(num_times).copied().collect()
    }
}

fn scaled_value(kind: ProcessKind, state: u64, n: u64, b: f64, t: f64) -> f64 {
    match kind {
        ProcessKind::Block => (state as f64).ln() - (-b * t).exp() * (n as f64).ln(),
        ProcessKind::Fixation => (state as f64).ln() - (b * t).exp() * (n as f64).ln(),
    }
}

/// Samples X_t^(n) (block) or Y_t^(n) (fixation) at each query time for each replicate.
/// Replicate r draws from stream r of the master seed.
pub fn sample_scaled(
    kind: ProcessKind,
    n: u64,
    params: &LimitParams,
    times: &[f64],
    replicates: u64,
    seed: u64,
    cap: u64,
) -> Result<ScaledRun> {
    let sampler = JumpSampler::new(&params.measure);
    sample_scaled_with(&sampler, kind, n, params.b, times, replicates, seed, cap)
}

#[allow(clippy::too_many_arguments)]
pub fn sample_scaled_with(
    sampler: &JumpSampler,
    kind: ProcessKind,
    n: u64,
    b: f64,
    times: &[f64],
    replicates: u64,
    seed: u64,
    cap: u64,
) -> Result<ScaledRun> {
    if n < 1 {
        return Err(Error::Domain("n must be ≥ 1".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain("times must be finite, nonnegative and sorted".into()));
    }
    if kind == ProcessKind::Fixation {
        check_cap(n, cap)?;
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    let master = Seed::new(seed);
    let per_rep: Vec<(Vec<ScaledSample>, bool)> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<(Vec<ScaledSample>, bool)> {
            let mut rng = master.replicate(r).rng();
            let mut out = Vec::with_capacity(times.len());
            let mut state = Some(n);
            let mut next = 0usize;
            let emit = |upto: f64, state: Option<u64>, out: &mut Vec<ScaledSample>, next: &mut usize| {
                while *next < times.len() && times[*next] < upto {
                    let t = times[*next];
                    out.push(match state {
                        Some(s) => ScaledSample {
                            t,
                            value: scaled_value(kind, s, n, b, t),
                            n,
                            replicate_id: r,
                            raw_state: s,
                            capped: false,
                        },
                        None => ScaledSample { t, value: f64::INFINITY, n, replicate_id: r, raw_state: cap + 1, capped: true },
                    });
                    *next += 1;
                }
            };
            match kind {
                ProcessKind::Block => sampler.run_block(n, horizon, &mut rng, |t, k| {
                    emit(t, state, &mut out, &mut next);
                    state = Some(k);
                })?,
                ProcessKind::Fixation => sampler.run_fixation(n, horizon, cap, &mut rng, |t, k| {
                    emit(t, state, &mut out, &mut next);
                    state = k;
                })?,
            }
            emit(f64::INFINITY, state, &mut out, &mut next);
            Ok((out, state.is_none()))
        })
        .collect::<Result<_>>()?;
    let capped_replicates = per_rep.iter().filter(|(_, c)| *c).count() as u64;
    let samples = per_rep.into_iter().flat_map(|(s, _)| s).collect();
    Ok(ScaledRun { kind, samples, capped_replicates })
}

// ---------------------------------------------------------------------------
// Monte-Carlo summaries

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfEstimate {
    pub x: f64,
    pub value: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

/// (1/R) Σ exp(i x value) with componentwise standard errors. Capped samples
/// are skipped.
pub fn empirical_cf(samples: &[ScaledSample], x_grid: &[f64]) -> Result<Vec<CfEstimate>> {
    let values: Vec<f64> = samples.iter().filter(|s| !s.capped).map(|s| s.value).collect();
    if values.is_empty() {
        return Err(Error::Domain("empirical_cf needs at least one uncapped sample".into()));
    }
    let r = values.len() as f64;
    Ok(x_grid
        .iter()
        .map(|&x| {
            let (mut sc, mut ss) = (0.0, 0.0);
            for v in &values {
                let (s, c) = (x * v).sin_cos();
                sc += c;
                ss += s;
            }
            let (mc, ms) = (sc / r, ss / r);
            let (mut vc, mut vs) = (0.0, 0.0);
            for v in &values {
                let (s, c) = (x * v).sin_cos();
                vc += (c - mc) * (c - mc);
                vs += (s - ms) * (s - ms);
            }
            let denom = if values.len() > 1 { r * (r - 1.0) } else { 1.0 };
            CfEstimate { x, value: Complex64::new(mc, ms), stderr_re: (vc / denom).sqrt(), stderr_im: (vs / denom).sqrt() }
        })
        .collect())
}

/// sup_x |F_n(x) − F(x)| for the empirical law of `values`.
pub fn ks_distance(values: &[f64], mut cdf: impl FnMut(f64) -> f64) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
