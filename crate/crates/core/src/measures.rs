//! Finite measures on [0, 1], integration against them, and the split
//! Λ = bλ + Λ_D into a Lebesgue part and a signed dust part.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions, QuadResult, QuadValue};
use crate::specfun::{digamma_real, ln_beta, EULER_GAMMA};

/// Behaviour of a density near u = 0: `density ~ C u^exponent`.
///
/// When `exponent == 0`, `limit` is the value at 0 and `next_order` the
/// order of `density - limit`. `exponent == inf` means no mass near 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeftBehaviour {
    pub exponent: f64,
    pub limit: f64,
    pub next_order: f64,
}

impl LeftBehaviour {
    const ABSENT: LeftBehaviour = LeftBehaviour { exponent: f64::INFINITY, limit: 0.0, next_order: f64::INFINITY };

    fn order_beyond_limit(&self) -> f64 {
        if self.exponent == 0.0 {
            self.next_order
        } else {
            self.exponent
        }
    }
}

/// Behaviour of a density near an endpoint at distance x:
/// `x^exponent (log 1/x)^log_power (log log 1/x)^loglog_power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tail {
    pub exponent: f64,
    pub log_power: f64,
    pub loglog_power: f64,
}

impl Tail {
    pub const ABSENT: Tail = Tail { exponent: f64::INFINITY, log_power: 0.0, loglog_power: 0.0 };

    pub fn power(exponent: f64) -> Tail {
        Tail { exponent, log_power: 0.0, loglog_power: 0.0 }
    }

    /// Whether ∫_0 x^extra · tail(x) dx is finite.
    pub fn integrable_with(&self, extra: f64) -> bool {
        let e = self.exponent + extra;
        if e.is_nan() {
            return false;
        }
        e > -1.0 || (e == -1.0 && (self.log_power < -1.0 || (self.log_power == -1.0 && self.loglog_power < -1.0)))
    }

    fn more_singular(self, other: Tail) -> Tail {
        let key = |t: &Tail| (t.exponent, -t.log_power, -t.loglog_power);
        if key(&other) < key(&self) {
            other
        } else {
            self
        }
    }
}

/// Anything that can be integrated against: an absolutely continuous part
/// plus finitely many atoms in (0, 1).
pub trait MeasureLike: Send + Sync {
    /// Density at u, with v = 1 − u supplied to keep precision near 1.
    fn density(&self, u: f64, v: f64) -> f64;
    fn has_density(&self) -> bool;
    fn atoms(&self) -> Vec<(f64, f64)>;
    fn left(&self) -> LeftBehaviour;
    fn right(&self) -> Tail;
    /// Interior points where the density is not smooth.
    fn breakpoints(&self) -> Vec<f64>;

    /// density(u) − c, free of cancellation near 0 where the density tends to c.
    fn density_excess(&self, u: f64, v: f64, c: f64) -> f64 {
        self.density(u, v) - c
    }

    /// x · density(1 − x) at x = e^{-l}, usable where x underflows.
    fn density_times_gap(&self, l: f64) -> f64 {
        let x = (-l).exp();
        self.density(1.0 - x, x) * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinDensity {
    /// scale · u^p (1−u)^q
    Power { scale: f64, p: f64, q: f64 },
    /// scale · (1−u)^{-1} v^{-1} (log v)^{-2} on u > 1 − e^{-e}, v = log 1/(1−u)
    LoglogTail { scale: f64 },
    /// height on (0, cut)
    TruncatedUniform { height: f64, cut: f64 },
}

const LOGLOG_START: f64 = 0.934_011_964_154_687_5; // 1 - e^{-e}

impl BuiltinDensity {
    fn name(&self) -> &'static str {
        match self {
            BuiltinDensity::Power { .. } => "power",
            BuiltinDensity::LoglogTail { .. } => "loglog_tail",
            BuiltinDensity::TruncatedUniform { .. } => "truncated_uniform",
        }
    }

    fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match *self {
            BuiltinDensity::Power { scale, p, q } => {
                m.insert("scale".into(), scale);
                m.insert("p".into(), p);
                m.insert("q".into(), q);
            }
            BuiltinDensity::LoglogTail { scale } => {
                m.insert("scale".into(), scale);
            }
            BuiltinDensity::TruncatedUniform { height, cut } => {
                m.insert("height".into(), height);
                m.insert("cut".into(), cut);
            }
        }
        m
    }

    fn from_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "power" => &["scale", "p", "q"],
            "loglog_tail" => &["scale"],
            "truncated_uniform" => &["height", "cut"],
            other => return Err(Error::Config(format!("unknown built-in density '{other}'"))),
        };
        for k in params.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown parameter '{k}' for density '{name}'")));
            }
        }
        let get = |k: &str, default: Option<f64>| -> Result<f64> {
            params
                .get(k)
                .copied()
                .or(default)
                .ok_or_else(|| Error::Config(format!("density '{name}' needs parameter '{k}'")))
        };
        Ok(match name {
            "power" => BuiltinDensity::Power { scale: get("scale", Some(1.0))?, p: get("p", None)?, q: get("q", None)? },
            "loglog_tail" => BuiltinDensity::LoglogTail { scale: get("scale", Some(1.0))? },
            _ => BuiltinDensity::TruncatedUniform { height: get("height", Some(1.0))?, cut: get("cut", None)? },
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            BuiltinDensity::Power { scale, p, q } => scale > 0.0 && p > -1.0 && q > -1.0 && p.is_finite() && q.is_finite(),
            BuiltinDensity::LoglogTail { scale } => scale > 0.0 && scale.is_finite(),
            BuiltinDensity::TruncatedUniform { height, cut } => height > 0.0 && height.is_finite() && cut > 0.0 && cut <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid parameters for density {self:?}")))
        }
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            BuiltinDensity::Power { scale, p, q } => scale * pow_or_one(u, p) * pow_or_one(v, q),
            BuiltinDensity::LoglogTail { scale } => {
                if u <= LOGLOG_START {
                    0.0
                } else {
                    let lv = -v.ln();
                    let llv = lv.ln();
                    scale / (v * lv * llv * llv)
                }
            }
            BuiltinDensity::TruncatedUniform { height, cut } => {
                if u < cut {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    fn mass(&self) -> f64 {
        match *self {
            BuiltinDensity::Power { scale, p, q } => scale * ln_beta(p + 1.0, q + 1.0).exp(),
            BuiltinDensity::LoglogTail { scale } => scale,
            BuiltinDensity::TruncatedUniform { height, cut } => height * cut,
        }
    }

    fn left(&self) -> LeftBehaviour {
        match *self {
            BuiltinDensity::Power { scale, p, q } => {
                if p == 0.0 {
                    LeftBehaviour { exponent: 0.0, limit: scale, next_order: if q != 0.0 { 1.0 } else { f64::INFINITY } }
                } else {
                    LeftBehaviour { exponent: p, limit: 0.0, next_order: p }
                }
            }
            BuiltinDensity::LoglogTail { .. } => LeftBehaviour::ABSENT,
            BuiltinDensity::TruncatedUniform { height, .. } => {
                LeftBehaviour { exponent: 0.0, limit: height, next_order: f64::INFINITY }
            }
        }
    }

    fn right(&self) -> Tail {
        match *self {
            BuiltinDensity::Power { q, .. } => Tail::power(q),
            BuiltinDensity::LoglogTail { .. } => Tail { exponent: -1.0, log_power: -1.0, loglog_power: -2.0 },
            BuiltinDensity::TruncatedUniform { cut, .. } => {
                if cut < 1.0 {
                    Tail::ABSENT
                } else {
                    Tail::power(0.0)
                }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            BuiltinDensity::Power { .. } => vec![],
            BuiltinDensity::LoglogTail { .. } => vec![LOGLOG_START],
            BuiltinDensity::TruncatedUniform { cut, .. } => {
                if cut < 1.0 {
                    vec![cut]
                } else {
                    vec![]
                }
            }
        }
    }

    /// Endpoint exponents as declared in serialized form.
    fn declared_exponents(&self) -> (f64, f64) {
        (self.left().exponent, self.right().exponent)
    }
}

fn pow_or_one(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    Beta { a: f64, b: f64 },
    Lebesgue { c: f64 },
    Atom { at: f64, mass: f64 },
    Density(BuiltinDensity),
    Mixture(Vec<MeasureSpec>),
}

/// A validated finite measure Λ on [0, 1] without atoms at the endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct MeasureSpec {
    kind: MeasureKind,
    total_mass: f64,
    // 1 / B(a, b) for the beta kind
    beta_norm: f64,
}

impl MeasureSpec {
    fn build(kind: MeasureKind) -> Result<Self> {
        let mut beta_norm = 0.0;
        let total_mass = match &kind {
            MeasureKind::Beta { a, b } => {
                if !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::Domain(format!("beta parameters must be positive, got ({a}, {b})")));
                }
                beta_norm = (-ln_beta(*a, *b)).exp();
                1.0
            }
            MeasureKind::Lebesgue { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::Domain(format!("lebesgue scale must be positive, got {c}")));
                }
                *c
            }
            MeasureKind::Atom { at, mass } => {
                if !(*at > 0.0 && *at < 1.0) {
                    return Err(Error::Domain(format!("atoms must lie in (0,1), got {at}")));
                }
                if !(*mass > 0.0 && mass.is_finite()) {
                    return Err(Error::Domain(format!("atom mass must be positive, got {mass}")));
                }
                *mass
            }
            MeasureKind::Density(d) => {
                d.validate()?;
                d.mass()
            }
            MeasureKind::Mixture(parts) => {
                if parts.is_empty() {
                    return Err(Error::Domain("mixture needs at least one component".into()));
                }
                parts.iter().map(|p| p.total_mass).sum()
            }
        };
        Ok(MeasureSpec { kind, total_mass, beta_norm })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Self::build(MeasureKind::Beta { a, b })
    }

    pub fn lebesgue(c: f64) -> Result<Self> {
        Self::build(MeasureKind::Lebesgue { c })
    }

    pub fn atom(at: f64, mass: f64) -> Result<Self> {
        Self::build(MeasureKind::Atom { at, mass })
    }

    pub fn density(d: BuiltinDensity) -> Result<Self> {
        Self::build(MeasureKind::Density(d))
    }

    pub fn mixture(parts: Vec<MeasureSpec>) -> Result<Self> {
        Self::build(MeasureKind::Mixture(parts))
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// The b of Assumption A when it can be read off without analysis:
    /// Beta(1, β) has b = β and cλ has b = c.
    pub fn natural_b(&self) -> Option<f64> {
        match self.kind {
            MeasureKind::Beta { a, b } if a == 1.0 => Some(b),
            MeasureKind::Lebesgue { c } => Some(c),
            _ => None,
        }
    }

    /// (a, b, weight) such that the measure is weight · Beta(a, b), if it is one.
    pub fn as_scaled_beta(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            MeasureKind::Beta { a, b } => Some((a, b, 1.0)),
            MeasureKind::Lebesgue { c } => Some((1.0, 1.0, c)),
            MeasureKind::Density(BuiltinDensity::Power { scale, p, q }) => Some((p + 1.0, q + 1.0, scale * ln_beta(p + 1.0, q + 1.0).exp())),
            _ => None,
        }
    }

    /// True if the measure is c·λ for some c.
    pub fn lebesgue_scale(&self) -> Option<f64> {
        match self.kind {
            MeasureKind::Lebesgue { c } => Some(c),
            MeasureKind::Beta { a, b } if a == 1.0 && b == 1.0 => Some(1.0),
            MeasureKind::Density(BuiltinDensity::Power { scale, p, q }) if p == 0.0 && q == 0.0 => Some(scale),
            MeasureKind::Density(BuiltinDensity::TruncatedUniform { height, cut }) if cut == 1.0 => Some(height),
            _ => None,
        }
    }

    /// Flattened list of components (mixtures expanded).
    pub fn components(&self) -> Vec<&MeasureSpec> {
        match &self.kind {
            MeasureKind::Mixture(parts) => parts.iter().flat_map(|p| p.components()).collect(),
            _ => vec![self],
        }
    }
}

impl MeasureLike for MeasureSpec {
    fn density_excess(&self, u: f64, v: f64, c: f64) -> f64 {
        self.excess(u, v, c)
    }

    fn density_times_gap(&self, l: f64) -> f64 {
        self.times_gap(l)
    }

    fn density(&self, u: f64, v: f64) -> f64 {
        match &self.kind {
            MeasureKind::Beta { a, b } => self.beta_norm * pow_or_one(u, a - 1.0) * pow_or_one(v, b - 1.0),
            MeasureKind::Lebesgue { c } => *c,
            MeasureKind::Atom { .. } => 0.0,
            MeasureKind::Density(d) => d.eval(u, v),
            MeasureKind::Mixture(parts) => parts.iter().map(|p| p.density(u, v)).sum(),
        }
    }

    fn has_density(&self) -> bool {
        match &self.kind {
            MeasureKind::Atom { .. } => false,
            MeasureKind::Mixture(parts) => parts.iter().any(|p| p.has_density()),
            _ => true,
        }
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            MeasureKind::Atom { at, mass } => vec![(*at, *mass)],
            MeasureKind::Mixture(parts) => parts.iter().flat_map(|p| p.atoms()).collect(),
            _ => vec![],
        }
    }

    fn left(&self) -> LeftBehaviour {
        match &self.kind {
            MeasureKind::Beta { a, b } => {
                if *a == 1.0 {
                    LeftBehaviour { exponent: 0.0, limit: *b, next_order: if *b == 1.0 { f64::INFINITY } else { 1.0 } }
                } else {
                    LeftBehaviour { exponent: a - 1.0, limit: 0.0, next_order: a - 1.0 }
                }
            }
            MeasureKind::Lebesgue { c } => LeftBehaviour { exponent: 0.0, limit: *c, next_order: f64::INFINITY },
            MeasureKind::Atom { .. } => LeftBehaviour::ABSENT,
            MeasureKind::Density(d) => d.left(),
            MeasureKind::Mixture(parts) => {
                let ls: Vec<LeftBehaviour> = parts.iter().map(|p| p.left()).collect();
                let exponent = ls.iter().map(|l| l.exponent).fold(f64::INFINITY, f64::min);
                let limit = ls.iter().filter(|l| l.exponent == 0.0).map(|l| l.limit).sum();
                let next_order = ls.iter().map(|l| l.order_beyond_limit()).fold(f64::INFINITY, f64::min);
                LeftBehaviour { exponent, limit, next_order }
            }
        }
    }

    fn right(&self) -> Tail {
        match &self.kind {
            MeasureKind::Beta { b, .. } => Tail::power(b - 1.0),
            MeasureKind::Lebesgue { .. } => Tail::power(0.0),
            MeasureKind::Atom { .. } => Tail::ABSENT,
            MeasureKind::Density(d) => d.right(),
            MeasureKind::Mixture(parts) => parts.iter().map(|p| p.right()).fold(Tail::ABSENT, Tail::more_singular),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            MeasureKind::Density(d) => d.breakpoints(),
            MeasureKind::Mixture(parts) => {
                let mut v: Vec<f64> = parts.iter().flat_map(|p| p.breakpoints()).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v.dedup();
                v
            }
            _ => vec![],
        }
    }
}

impl MeasureSpec {
    fn excess(&self, u: f64, v: f64, c: f64) -> f64 {
        let expm1_pow = |q: f64| (q * crate::rates::ln_gap(u, v)).exp_m1();
        match &self.kind {
            MeasureKind::Beta { a, b } if *a == 1.0 => (self.beta_norm - c) + self.beta_norm * expm1_pow(b - 1.0),
            MeasureKind::Lebesgue { c: k } => k - c,
            MeasureKind::Density(BuiltinDensity::Power { scale, p, q }) if *p == 0.0 => (scale - c) + scale * expm1_pow(*q),
            MeasureKind::Density(BuiltinDensity::TruncatedUniform { .. }) => self.density(u, v) - c,
            MeasureKind::Mixture(parts) => {
                match parts.iter().position(|p| p.left().exponent == 0.0) {
                    Some(j) => parts
                        .iter()
                        .enumerate()
                        .map(|(i, p)| if i == j { p.excess(u, v, c) } else { p.density(u, v) })
                        .sum(),
                    None => self.density(u, v) - c,
                }
            }
            _ => self.density(u, v) - c,
        }
    }

    fn times_gap(&self, l: f64) -> f64 {
        match &self.kind {
            MeasureKind::Density(BuiltinDensity::LoglogTail { scale }) => {
                if l <= std::f64::consts::E {
                    0.0
                } else {
                    let ll = l.ln();
                    scale / (l * ll * ll)
                }
            }
            MeasureKind::Mixture(parts) => parts.iter().map(|p| p.times_gap(l)).sum(),
            _ => {
                let x = (-l).exp();
                self.density(1.0 - x, x) * x
            }
        }
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            MeasureKind::Beta { a, b } => write!(f, "beta:{a},{b}"),
            MeasureKind::Lebesgue { c } => write!(f, "lebesgue:{c}"),
            MeasureKind::Atom { at, mass } => write!(f, "atom:{at},{mass}"),
            MeasureKind::Density(d) => {
                write!(f, "density:{}", d.name())?;
                for (k, v) in d.params() {
                    write!(f, ",{k}={v}")?;
                }
                Ok(())
            }
            MeasureKind::Mixture(parts) => {
                let s: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "{}", s.join("+"))
            }
        }
    }
}

impl FromStr for MeasureSpec {
    type Err = Error;

    /// Shorthand `beta:a,b`, `lebesgue:c`, `atom:u,mass`, components joined
    /// by `+`, or a JSON object.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| Error::Config(format!("measure JSON: {e}")));
        }
        if s.contains('+') {
            let parts = s.split('+').map(MeasureSpec::from_str).collect::<Result<Vec<_>>>()?;
            return MeasureSpec::mixture(parts);
        }
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("measure '{s}': expected kind:params")))?;
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Config(format!("measure '{s}': {e}"))))
                .collect()
        };
        let want = |n: usize, v: Vec<f64>| -> Result<Vec<f64>> {
            if v.len() == n {
                Ok(v)
            } else {
                Err(Error::Config(format!("measure '{s}': expected {n} numbers")))
            }
        };
        match kind.trim() {
            "beta" => {
                let v = want(2, nums()?)?;
                MeasureSpec::beta(v[0], v[1])
            }
            "lebesgue" => {
                let v = want(1, nums()?)?;
                MeasureSpec::lebesgue(v[0])
            }
            "atom" => {
                let v = want(2, nums()?)?;
                MeasureSpec::atom(v[0], v[1])
            }
            "density" => {
                let mut it = args.split(',');
                let name = it.next().unwrap_or("").trim();
                let mut params = BTreeMap::new();
                for kv in it {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("measure '{s}': expected key=value")))?;
                    let v = v.trim().parse::<f64>().map_err(|e| Error::Config(format!("measure '{s}': {e}")))?;
                    params.insert(k.trim().to_string(), v);
                }
                MeasureSpec::density(BuiltinDensity::from_params(name, &params)?)
            }
            other => Err(Error::Config(format!("unknown measure kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum MeasureJson {
    Beta {
        a: f64,
        b: f64,
    },
    Lebesgue {
        c: f64,
    },
    Atom {
        at: f64,
        mass: f64,
    },
    Density {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left_exponent: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right_exponent: Option<f64>,
    },
    Mixture {
        components: Vec<MeasureJson>,
    },
}

impl TryFrom<MeasureJson> for MeasureSpec {
    type Error = Error;

    fn try_from(j: MeasureJson) -> Result<Self> {
        match j {
            MeasureJson::Beta { a, b } => MeasureSpec::beta(a, b),
            MeasureJson::Lebesgue { c } => MeasureSpec::lebesgue(c),
            MeasureJson::Atom { at, mass } => MeasureSpec::atom(at, mass),
            MeasureJson::Density { name, params, left_exponent, right_exponent } => {
                let d = BuiltinDensity::from_params(&name, &params)?;
                let (l, r) = d.declared_exponents();
                if let Some(le) = left_exponent {
                    if le != l {
                        return Err(Error::Config(format!("density '{name}': declared left exponent {le}, built-in has {l}")));
                    }
                }
                if let Some(re) = right_exponent {
                    if re != r {
                        return Err(Error::Config(format!("density '{name}': declared right exponent {re}, built-in has {r}")));
                    }
                }
                MeasureSpec::density(d)
            }
            MeasureJson::Mixture { components } => {
                MeasureSpec::mixture(components.into_iter().map(MeasureSpec::try_from).collect::<Result<Vec<_>>>()?)
            }
        }
    }
}

impl From<MeasureSpec> for MeasureJson {
    fn from(m: MeasureSpec) -> Self {
        match m.kind {
            MeasureKind::Beta { a, b } => MeasureJson::Beta { a, b },
            MeasureKind::Lebesgue { c } => MeasureJson::Lebesgue { c },
            MeasureKind::Atom { at, mass } => MeasureJson::Atom { at, mass },
            MeasureKind::Density(d) => {
                let (l, r) = d.declared_exponents();
                MeasureJson::Density {
                    name: d.name().to_string(),
                    params: d.params(),
                    left_exponent: l.is_finite().then_some(l),
                    right_exponent: r.is_finite().then_some(r),
                }
            }
            MeasureKind::Mixture(parts) => MeasureJson::Mixture { components: parts.into_iter().map(MeasureJson::from).collect() },
        }
    }
}

// ---------------------------------------------------------------------------
// Integration

/// Power-law behaviour of an integrand at the two endpoints:
/// `f(u) ~ u^left` near 0 and `f(u) ~ (1−u)^right` near 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub left: f64,
    pub right: f64,
}

impl Shape {
    pub const BOUNDED: Shape = Shape { left: 0.0, right: 0.0 };

    pub fn left(left: f64) -> Shape {
        Shape { left, right: 0.0 }
    }
}

/// ∫ f dm over [0, 1] for a bounded integrand.
pub fn integrate<M: MeasureLike + ?Sized>(f: impl Fn(f64) -> f64, m: &M, tol: f64) -> Result<QuadResult<f64>> {
    integrate_with(|u, _| f(u), m, 0.0, 1.0, Shape::BOUNDED, QuadOptions::new(tol, tol * 1e-2))
}

/// ∫_{[lo, hi)} f(u, 1−u) m(du). Endpoint singularities at 0 and 1 are
/// handled by variable substitution using the declared exponents.
pub fn integrate_with<T: QuadValue, M: MeasureLike + ?Sized>(
    f: impl Fn(f64, f64) -> T,
    m: &M,
    lo: f64,
    hi: f64,
    shape: Shape,
    opts: QuadOptions,
) -> Result<QuadResult<T>> {
    integrate_split(f, m, lo, hi, shape, &[], opts)
}

/// As [`integrate_with`], with extra interior split points (e.g. around a
/// sharp peak of the integrand).
pub fn integrate_split<T: QuadValue, M: MeasureLike + ?Sized>(
    f: impl Fn(f64, f64) -> T,
    m: &M,
    lo: f64,
    hi: f64,
    shape: Shape,
    splits: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult<T>> {
    assert!((0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0);
    let mut value = T::zero();
    let mut error = 0.0;
    let mut evaluations = 0;
    for (at, mass) in m.atoms() {
        if at >= lo && (at < hi || hi == 1.0) {
            value += f(at, 1.0 - at) * mass;
        }
    }
    if !m.has_density() || hi <= lo {
        return Ok(QuadResult { value, error, evaluations });
    }

    let left = m.left();
    let right = m.right();
    let touches_left = lo == 0.0 && left.exponent.is_finite();
    let touches_right = hi == 1.0 && right.exponent.is_finite();
    let left_tail = Tail::power(left.exponent);
    if touches_left && !left_tail.integrable_with(shape.left) {
        return Err(Error::Singularity(format!(
            "integrand ~ u^{} against density ~ u^{} at 0",
            shape.left, left.exponent
        )));
    }
    if touches_right && !right.integrable_with(shape.right) {
        return Err(Error::Singularity(format!(
            "integrand ~ (1-u)^{} against density ~ (1-u)^{} at 1",
            shape.right, right.exponent
        )));
    }

    let mut pts = vec![lo];
    if lo < 0.5 && 0.5 < hi {
        pts.push(0.5);
    }
    pts.extend(m.breakpoints().into_iter().filter(|&p| p > lo && p < hi));
    pts.extend(splits.iter().copied().filter(|&p| p > lo && p < hi));
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let npieces = pts.len() - 1;
    let piece_opts = QuadOptions { abs_tol: opts.abs_tol / npieces as f64, ..opts };

    for (i, w) in pts.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let r = if i == 0 && lo == 0.0 && touches_left {
            left_piece(&f, m, b, left.exponent + shape.left, piece_opts)?
        } else if i == npieces - 1 && hi == 1.0 && touches_right {
            right_piece(&f, m, a, right, shape.right, piece_opts)?
        } else {
            quad::integrate(|u| weighted(&f, m, u, 1.0 - u), a, b, piece_opts)?
        };
        value += r.value;
        error += r.error;
        evaluations += r.evaluations;
    }
    Ok(QuadResult { value, error, evaluations })
}

#[inline]
fn weighted<T: QuadValue, M: MeasureLike + ?Sized>(f: &impl Fn(f64, f64) -> T, m: &M, u: f64, v: f64) -> T {
    let d = m.density(u, v);
    if d == 0.0 {
        T::zero()
    } else {
        f(u, v) * d
    }
}

fn left_piece<T: QuadValue, M: MeasureLike + ?Sized>(
    f: &impl Fn(f64, f64) -> T,
    m: &M,
    p: f64,
    total_exponent: f64,
    opts: QuadOptions,
) -> Result<QuadResult<T>> {
    if total_exponent >= 0.0 {
        return quad::integrate(|u| weighted(f, m, u, 1.0 - u), 0.0, p, opts);
    }
    // u = p s^k with k (1 + e) = 1 makes the transformed integrand bounded
    let k = 1.0 / (1.0 + total_exponent);
    quad::integrate(
        |s| {
            let u = p * s.powf(k);
            if u == 0.0 {
                return T::zero();
            }
            weighted(f, m, u, 1.0 - u) * (p * k * s.powf(k - 1.0))
        },
        0.0,
        1.0,
        opts,
    )
}

fn right_piece<T: QuadValue, M: MeasureLike + ?Sized>(
    f: &impl Fn(f64, f64) -> T,
    m: &M,
    p: f64,
    tail: Tail,
    extra: f64,
    opts: QuadOptions,
) -> Result<QuadResult<T>> {
    let e = tail.exponent + extra;
    let width = 1.0 - p;
    if e == -1.0 {
        // x = exp(-l), l = exp(z), z = z0 + (1 − w)/w
        let z0 = (-(width.ln())).ln();
        return quad::integrate(
            |w| {
                if w <= 0.0 {
                    return T::zero();
                }
                let z = z0 + (1.0 - w) / w;
                let l = z.exp();
                let d = m.density_times_gap(l);
                if d == 0.0 || !l.is_finite() {
                    return T::zero();
                }
                let x = (-l).exp();
                f(1.0 - x, x) * (d * l / (w * w))
            },
            0.0,
            1.0,
            opts,
        );
    }
    if e >= 0.0 {
        return quad::integrate(
            |s| {
                let x = width * s;
                weighted(f, m, 1.0 - x, x) * width
            },
            0.0,
            1.0,
            opts,
        );
    }
    let k = 1.0 / (1.0 + e);
    quad::integrate(
        |s| {
            let x = width * s.powf(k);
            if x == 0.0 {
                return T::zero();
            }
            weighted(f, m, 1.0 - x, x) * (width * k * s.powf(k - 1.0))
        },
        0.0,
        1.0,
        opts,
    )
}

// ---------------------------------------------------------------------------
// Jordan parts of Λ − bλ

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// One Jordan part of the signed measure Λ − bλ.
#[derive(Debug, Clone)]
pub struct JordanPart {
    base: Arc<MeasureSpec>,
    b: f64,
    sign: Sign,
    breaks: Vec<f64>,
    left: LeftBehaviour,
    right: Tail,
    has_density: bool,
}

impl JordanPart {
    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn base(&self) -> &MeasureSpec {
        &self.base
    }

    /// True when the part is known to vanish identically.
    pub fn is_zero(&self) -> bool {
        !self.has_density && (self.sign == Sign::Minus || self.base.atoms().is_empty())
    }
}

impl MeasureLike for JordanPart {
    fn density(&self, u: f64, v: f64) -> f64 {
        if !self.has_density {
            return 0.0;
        }
        let d = self.base.density_excess(u, v, self.b);
        match self.sign {
            Sign::Plus => d.max(0.0),
            Sign::Minus => (-d).max(0.0),
        }
    }

    fn density_times_gap(&self, l: f64) -> f64 {
        if !self.has_density {
            return 0.0;
        }
        let d = self.base.density_times_gap(l) - self.b * (-l).exp();
        match self.sign {
            Sign::Plus => d.max(0.0),
            Sign::Minus => (-d).max(0.0),
        }
    }

    fn has_density(&self) -> bool {
        self.has_density
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        match self.sign {
            Sign::Plus => self.base.atoms(),
            Sign::Minus => vec![],
        }
    }

    fn left(&self) -> LeftBehaviour {
        self.left
    }

    fn right(&self) -> Tail {
        self.right
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
}

/// Λ − bλ = plus − minus.
#[derive(Debug, Clone)]
pub struct SignedDust {
    pub plus: JordanPart,
    pub minus: JordanPart,
    pub b: f64,
}

impl SignedDust {
    /// ∫ f d(Λ − bλ) as the difference of the Jordan-part integrals.
    pub fn integrate_with<T: QuadValue>(
        &self,
        f: impl Fn(f64, f64) -> T + Copy,
        lo: f64,
        hi: f64,
        shape: Shape,
        opts: QuadOptions,
    ) -> Result<QuadResult<T>> {
        let p = self.part_integral(&self.plus, f, lo, hi, shape, opts)?;
        let m = self.part_integral(&self.minus, f, lo, hi, shape, opts)?;
        Ok(QuadResult { value: p.value - m.value, error: p.error + m.error, evaluations: p.evaluations + m.evaluations })
    }

    fn part_integral<T: QuadValue>(
        &self,
        part: &JordanPart,
        f: impl Fn(f64, f64) -> T,
        lo: f64,
        hi: f64,
        shape: Shape,
        opts: QuadOptions,
    ) -> Result<QuadResult<T>> {
        if part.is_zero() {
            return Ok(QuadResult { value: T::zero(), error: 0.0, evaluations: 0 });
        }
        integrate_with(f, part, lo, hi, shape, opts)
    }

    pub fn is_zero(&self) -> bool {
        self.plus.is_zero() && self.minus.is_zero()
    }
}

/// Splits m − bλ into its Jordan parts.
pub fn dust_decompose(m: &MeasureSpec, b: f64) -> Result<SignedDust> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("b must be finite and nonnegative, got {b}")));
    }
    let base = Arc::new(m.clone());
    let identically_zero = m.lebesgue_scale() == Some(b) && m.atoms().is_empty();
    let crossings = if identically_zero || !(m.has_density() || b > 0.0) { vec![] } else { sign_changes(m, b) };
    let mut breaks = m.breakpoints();
    breaks.extend(crossings);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let (lp, lm) = jordan_left(m.left(), b);
    let (rp, rm) = jordan_right(m.right(), b);
    let dens_plus = !identically_zero && m.has_density();
    let dens_minus = !identically_zero && b > 0.0;
    let plus = JordanPart {
        base: base.clone(),
        b,
        sign: Sign::Plus,
        breaks: breaks.clone(),
        left: if dens_plus { lp } else { LeftBehaviour::ABSENT },
        right: if dens_plus { rp } else { Tail::ABSENT },
        has_density: dens_plus,
    };
    let minus = JordanPart {
        base,
        b,
        sign: Sign::Minus,
        breaks,
        left: if dens_minus { lm } else { LeftBehaviour::ABSENT },
        right: if dens_minus { rm } else { Tail::ABSENT },
        has_density: dens_minus,
    };
    Ok(SignedDust { plus, minus, b })
}

fn jordan_left(l: LeftBehaviour, b: f64) -> (LeftBehaviour, LeftBehaviour) {
    if l.exponent < 0.0 {
        return (l, LeftBehaviour::ABSENT);
    }
    let limit = if l.exponent == 0.0 { l.limit } else { 0.0 };
    let next = l.order_beyond_limit();
    let d = limit - b;
    let eps = 1e-12 * b.max(limit).max(1.0);
    let bounded = |x: f64| LeftBehaviour { exponent: 0.0, limit: x, next_order: f64::INFINITY };
    let vanishing = LeftBehaviour { exponent: next, limit: 0.0, next_order: next };
    if d > eps {
        (bounded(d), LeftBehaviour::ABSENT)
    } else if d < -eps {
        (LeftBehaviour::ABSENT, bounded(-d))
    } else {
        (vanishing, vanishing)
    }
}

fn jordan_right(r: Tail, b: f64) -> (Tail, Tail) {
    if r.exponent < 0.0 {
        (r, Tail::ABSENT)
    } else if r.exponent.is_infinite() {
        (Tail::ABSENT, if b > 0.0 { Tail::power(0.0) } else { Tail::ABSENT })
    } else {
        (Tail::power(0.0), if b > 0.0 { Tail::power(0.0) } else { Tail::ABSENT })
    }
}

/// Points in (0,1) where density − b changes sign, located by a scan on a
/// grid refined toward both endpoints and bisection.
fn sign_changes(m: &MeasureSpec, b: f64) -> Vec<f64> {
    let g = |u: f64| m.density(u, 1.0 - u) - b;
    let mut grid: Vec<f64> = Vec::with_capacity(1400);
    for i in 0..=300 {
        let x = 10f64.powf(-12.0 + 11.0 * i as f64 / 300.0);
        grid.push(x);
        grid.push(1.0 - x);
    }
    for i in 1..800 {
        grid.push(i as f64 / 800.0);
    }
    grid.extend(m.breakpoints());
    grid.retain(|&u| u > 0.0 && u < 1.0);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let significant = |u: f64, val: f64| val.abs() > 1e-11 * (m.density(u, 1.0 - u).abs() + b);
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &u in &grid {
        let val = g(u);
        if !significant(u, val) {
            continue;
        }
        if let Some((pu, pv)) = prev {
            if pv.signum() != val.signum() {
                let (mut lo, mut hi) = (pu, u);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if g(mid).signum() == pv.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        prev = Some((u, val));
    }
    out
}

// ---------------------------------------------------------------------------
// Assumption A

/// Parameters (b, a) of the scaling limit together with the measure.
#[derive(Debug, Clone)]
pub struct LimitParams {
    pub b: f64,
    pub a: f64,
    /// Quadrature error bound on `a`.
    pub a_error: f64,
    pub measure: MeasureSpec,
    pub dust: SignedDust,
}

impl LimitParams {
    /// Uses the natural b of Beta(1, β) or cλ.
    pub fn auto(m: &MeasureSpec, tol: f64) -> Result<Self> {
        let b = m.natural_b().ok_or_else(|| {
            Error::Config(format!("b must be supplied for {m}; it is only inferred for beta:1,b and lebesgue:c"))
        })?;
        assumption_a_params(m, b, tol)
    }

    /// ∫ u^{-1} Λ(du), finite only in the dust case.
    pub fn dust_rate(&self) -> Result<f64> {
        Ok(integrate_with(|u, _| 1.0 / u, &self.measure, 0.0, 1.0, Shape::left(-1.0), QuadOptions::default())?.value)
    }
}

/// Checks Assumption A for the given b and computes a = b(1+Ψ(1)) − ∫u^{-1}(Λ − bλ)(du).
pub fn assumption_a_params(m: &MeasureSpec, b: f64, tol: f64) -> Result<LimitParams> {
    let dust = dust_decompose(m, b)?;
    for part in [&dust.plus, &dust.minus] {
        if part.is_zero() {
            continue;
        }
        let l = part.left();
        if l.exponent.is_finite() && !Tail::power(l.exponent).integrable_with(-1.0) {
            let which = if part.sign() == Sign::Plus { "plus" } else { "minus" };
            return Err(Error::AssumptionViolated(format!(
                "∫u^-1 d(Λ−bλ)^{which} diverges for {m} with b = {b} (density of the part ~ u^{})",
                l.exponent
            )));
        }
    }
    let opts = QuadOptions::new(tol * 0.1, 1e-13);
    let r = dust.integrate_with(|u, _| 1.0 / u, 0.0, 1.0, Shape::left(-1.0), opts)?;
    let a = b * (1.0 + digamma_real(1.0)) - r.value;
    debug_assert!((digamma_real(1.0) + EULER_GAMMA).abs() < 1e-15);
    Ok(LimitParams { b, a, a_error: r.error, measure: m.clone(), dust })
}

/// Density of ϱ, the image of u^{-2}Λ(du) under u ↦ log(1 − u), at w < 0.
pub fn levy_density(m: &MeasureSpec, w: f64) -> Result<f64> {
    if !(w < 0.0) {
        return Err(Error::Domain(format!("ϱ is supported on (−∞, 0), got {w}")));
    }
    if !m.has_density() {
        return Err(Error::Unsupported(format!("{m} has no density")));
    }
    let u = -w.exp_m1();
    let v = w.exp();
    if u == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(m.density(u, v) * v / (u * u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lebesgue_integral(f: impl Fn(f64) -> f64) -> f64 {
        integrate(f, &MeasureSpec::lebesgue(1.0).unwrap(), 1e-13).unwrap().value
    }

    fn all_test_measures() -> Vec<MeasureSpec> {
        let mut v = vec![];
        for &(a, b) in &[(0.5, 0.5), (1.0, 1.0), (1.0, 2.0), (2.0, 2.0), (1.5, 1.0), (1.0, 0.5), (0.5, 3.0)] {
            v.push(MeasureSpec::beta(a, b).unwrap());
        }
        v.push(MeasureSpec::lebesgue(2.5).unwrap());
        v.push(MeasureSpec::atom(0.3, 2.0).unwrap());
        v.push(MeasureSpec::density(BuiltinDensity::Power { scale: 3.0, p: 0.5, q: -0.3 }).unwrap());
        v.push(MeasureSpec::density(BuiltinDensity::LoglogTail { scale: 2.0 }).unwrap());
        v.push(MeasureSpec::density(BuiltinDensity::TruncatedUniform { height: 1.5, cut: 0.4 }).unwrap());
        v.push(
            MeasureSpec::mixture(vec![
                MeasureSpec::beta(1.0, 2.0).unwrap(),
                MeasureSpec::atom(0.7, 0.25).unwrap(),
                MeasureSpec::beta(2.0, 0.5).unwrap(),
            ])
            .unwrap(),
        );
        v
    }

    #[test]
    fn integrate_examples() {
        let m = MeasureSpec::beta(1.0, 2.0).unwrap();
        assert!((integrate(|u| u, &m, 1e-10).unwrap().value - 1.0 / 3.0).abs() < 1e-10);
        let a = MeasureSpec::atom(0.5, 2.0).unwrap();
        assert_eq!(integrate(|_| 1.0, &a, 1e-10).unwrap().value, 2.0);
    }

    #[test]
    fn mass_consistency() {
        for m in all_test_measures() {
            let r = integrate(|_| 1.0, &m, 1e-12).unwrap();
            assert!((r.value - m.total_mass()).abs() <= 1e-10 * m.total_mass(), "{m}: {} vs {}", r.value, m.total_mass());
        }
    }

    #[test]
    fn signed_dust_reciprocal_moment_beta_1_2() {
        let m = MeasureSpec::beta(1.0, 2.0).unwrap();
        let d = dust_decompose(&m, 2.0).unwrap();
        let r = d.integrate_with(|u, _| 1.0 / u, 0.0, 1.0, Shape::left(-1.0), QuadOptions::default()).unwrap();
        let oracle = 2.0 * (digamma_real(1.0) - digamma_real(2.0));
        assert!((r.value - oracle).abs() < 1e-10, "{} vs {oracle}", r.value);
        assert!((oracle + 2.0).abs() < 1e-15);
    }

    #[test]
    fn decomposition_examples() {
        let d = dust_decompose(&MeasureSpec::beta(1.0, 1.0).unwrap(), 1.0).unwrap();
        assert!(d.is_zero());
        let d = dust_decompose(&MeasureSpec::beta(1.0, 2.0).unwrap(), 2.0).unwrap();
        for &u in &[0.01, 0.3, 0.8, 0.999] {
            assert_eq!(d.plus.density(u, 1.0 - u), 0.0);
            assert!((d.minus.density(u, 1.0 - u) - 2.0 * u).abs() < 1e-14 * u);
        }
        let m = MeasureSpec::beta(2.0, 2.0).unwrap();
        let d = dust_decompose(&m, 0.0).unwrap();
        assert!(!d.minus.has_density() && d.minus.is_zero());
        for &u in &[0.01, 0.5, 0.9] {
            assert_eq!(d.plus.density(u, 1.0 - u), m.density(u, 1.0 - u));
        }
    }

    #[test]
    fn crossing_is_found() {
        // density 2(1-u)^{-1/2}·(1/2)... Beta(1, 0.5) against b = 0.8 changes sign once
        let m = MeasureSpec::beta(1.0, 0.5).unwrap();
        let d = dust_decompose(&m, 0.8).unwrap();
        let cross = d.plus.breakpoints();
        assert_eq!(cross.len(), 1);
        // 0.5 (1-u)^{-1/2} = 0.8  <=>  1-u = (5/8)^2
        assert!((cross[0] - (1.0 - 0.390625)).abs() < 1e-12);
    }

    #[test]
    fn assumption_a_examples() {
        for b0 in [0.5, 1.0, 2.0] {
            let p = LimitParams::auto(&MeasureSpec::beta(1.0, b0).unwrap(), 1e-12).unwrap();
            assert!((p.a - b0 * (1.0 + digamma_real(b0))).abs() < 1e-9, "b0={b0}: {}", p.a);
        }
        let p = assumption_a_params(&MeasureSpec::lebesgue(1.0).unwrap(), 1.0, 1e-12).unwrap();
        assert!((p.a - (1.0 - EULER_GAMMA)).abs() < 1e-14);
        // b = 0: a = −∫u^{-1}Λ(du) = −∫6(1−u)du
        let p = assumption_a_params(&MeasureSpec::beta(2.0, 2.0).unwrap(), 0.0, 1e-12).unwrap();
        assert!((p.a + 3.0).abs() < 1e-10, "{}", p.a);
        assert!((p.dust_rate().unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn assumption_a_violations() {
        // Beta(0.5, 1) has no finite reciprocal moment for any b
        let m = MeasureSpec::beta(0.5, 1.0).unwrap();
        assert!(matches!(assumption_a_params(&m, 0.0, 1e-10), Err(Error::AssumptionViolated(_))));
        // wrong b for λ leaves a nonzero constant density near 0
        let m = MeasureSpec::lebesgue(1.0).unwrap();
        assert!(matches!(assumption_a_params(&m, 0.5, 1e-10), Err(Error::AssumptionViolated(_))));
        // pure atoms only work with b = 0
        let m = MeasureSpec::atom(0.4, 1.0).unwrap();
        assert!(assumption_a_params(&m, 0.0, 1e-10).is_ok());
        assert!(matches!(assumption_a_params(&m, 1.0, 1e-10), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn levy_density_examples() {
        for b0 in [0.5, 1.0, 2.0] {
            let m = MeasureSpec::beta(1.0, b0).unwrap();
            let e1 = (-1f64).exp();
            let oracle = b0 * (-b0).exp() / ((1.0 - e1) * (1.0 - e1));
            assert!((levy_density(&m, -1.0).unwrap() - oracle).abs() < 1e-14 * oracle);
            assert!(levy_density(&m, -60.0).unwrap() < 1e-12);
        }
        let m = MeasureSpec::lebesgue(1.0).unwrap();
        let e1 = (-1f64).exp();
        assert!((levy_density(&m, -1.0).unwrap() - e1 / ((1.0 - e1) * (1.0 - e1))).abs() < 1e-15);
        assert!(matches!(levy_density(&m, 0.0), Err(Error::Domain(_))));
        assert!(matches!(levy_density(&MeasureSpec::atom(0.5, 1.0).unwrap(), -1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn levy_measure_is_integrable() {
        // ∫ (w² ∧ 1) ϱ(dw) = ∫ (log(1−u)² ∧ 1) u^{-2} Λ(du)
        for b0 in [0.5, 1.0, 2.0] {
            let m = MeasureSpec::beta(1.0, b0).unwrap();
            let r = integrate_with(
                |u, v| {
                    let l = v.ln();
                    (l * l).min(1.0) / (u * u)
                },
                &m,
                0.0,
                1.0,
                Shape::BOUNDED,
                QuadOptions::new(1e-10, 1e-10),
            )
            .unwrap();
            assert!(r.value.is_finite() && r.value > 0.0);
        }
    }

    #[test]
    fn singular_integrals_are_rejected() {
        let m = MeasureSpec::beta(1.0, 1.0).unwrap();
        let r = integrate_with(|u, _| 1.0 / u, &m, 0.0, 1.0, Shape::left(-1.0), QuadOptions::default());
        assert!(matches!(r, Err(Error::Singularity(_))));
    }

    #[test]
    fn json_round_trip_and_validation() {
        for m in all_test_measures() {
            let s = serde_json::to_string(&m).unwrap();
            let back: MeasureSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(back, m, "{s}");
        }
        let bad = r#"{"kind":"beta","a":1,"b":1,"c":3}"#;
        assert!(serde_json::from_str::<MeasureSpec>(bad).is_err());
        let bad = r#"{"kind":"atom","at":1.0,"mass":1}"#;
        assert!(serde_json::from_str::<MeasureSpec>(bad).is_err());
        let j = r#"{"kind":"density","name":"power","params":{"scale":1,"p":0.5,"q":0},"left_exponent":0.5}"#;
        assert!(serde_json::from_str::<MeasureSpec>(j).is_ok());
        let j = r#"{"kind":"density","name":"power","params":{"scale":1,"p":0.5,"q":0},"left_exponent":0.0}"#;
        assert!(serde_json::from_str::<MeasureSpec>(j).is_err());
    }

    #[test]
    fn shorthand_parsing() {
        assert_eq!("beta:1,2".parse::<MeasureSpec>().unwrap(), MeasureSpec::beta(1.0, 2.0).unwrap());
        assert_eq!("lebesgue:3".parse::<MeasureSpec>().unwrap().total_mass(), 3.0);
        let m: MeasureSpec = "beta:1,1+atom:0.5,2".parse().unwrap();
        assert_eq!(m.total_mass(), 3.0);
        let m: MeasureSpec = "density:truncated_uniform,height=2,cut=0.5".parse().unwrap();
        assert_eq!(m.total_mass(), 1.0);
        assert!("beta:1".parse::<MeasureSpec>().is_err());
        assert!("gamma:1,2".parse::<MeasureSpec>().is_err());
        assert!("beta:0,1".parse::<MeasureSpec>().is_err());
    }

    fn poly_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 1..6)
    }

    fn eval_poly(c: &[f64], u: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &x| acc * u + x)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn decomposition_consistency(coeffs in poly_strategy()) {
            let cases = [
                (MeasureSpec::beta(1.0, 2.0).unwrap(), 2.0),
                (MeasureSpec::beta(1.0, 0.5).unwrap(), 0.5),
                (MeasureSpec::beta(1.0, 0.5).unwrap(), 0.8),
                (MeasureSpec::beta(2.0, 2.0).unwrap(), 1.0),
                (MeasureSpec::mixture(vec![MeasureSpec::lebesgue(1.0).unwrap(), MeasureSpec::atom(0.4, 0.5).unwrap()]).unwrap(), 1.0),
            ];
            for (m, b) in cases.iter() {
                let d = dust_decompose(m, *b).unwrap();
                let f = |u: f64, _v: f64| eval_poly(&coeffs, u);
                let lhs = d.integrate_with(f, 0.0, 1.0, Shape::BOUNDED, QuadOptions::new(1e-12, 1e-12)).unwrap().value;
                let rhs = integrate(|u| eval_poly(&coeffs, u), m, 1e-12).unwrap().value
                    - b * lebesgue_integral(|u| eval_poly(&coeffs, u));
                prop_assert!((lhs - rhs).abs() <= 1e-9, "{} b={}: {} vs {}", m, b, lhs, rhs);
            }
        }
    }
}
