//! Exact fiber censuses and the measures derived from them.
//!
//! For `F` in `N` variables over `F_q` and a point field `k_n` of size
//! `Q = q^n`, the census records `#F^{-1}(t)` for every `t` in `k_n` by
//! visiting all `Q^N` points. The pushed-forward measure is
//! `mu_n(t) = count(t) / Q^N`, the gap `Delta_n = max - min` of `mu_n`, and
//! `b_n = -log_Q(Delta_n)`. Rationals stay exact; logs are taken only when a
//! report is produced.

use std::fmt;

use num_rational::Ratio;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::engine;
use crate::field::{FieldCtx, FieldElement, FieldError};
use crate::poly::{MultiPoly, PolyError};
use crate::SCHEMA_VERSION;

/// Default cap on the number of evaluated points per sweep.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CensusError {
    #[error("sweep needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("budget {budget} excludes every level (level 1 needs {required})")]
    NoCompletedLevels { required: u128, budget: u64 },
    #[error("polynomial is not homogeneous")]
    NotHomogeneous,
    #[error("affine cone count {affine} - 1 is not divisible by {units}")]
    DivisibilityViolation { affine: u64, units: u64 },
    #[error("fiber identity failed: affine {affine} != {y_points} - {x_points}")]
    IdentityViolation {
        affine: u64,
        y_points: u64,
        x_points: u64,
    },
    #[error("n_max must be at least 1")]
    InvalidLevels,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub type Result<T> = std::result::Result<T, CensusError>;

/// `a/b` text of a rational (always with a denominator).
pub fn ratio_text<T: fmt::Display>(r: &Ratio<T>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub(crate) fn points_required(q: u64, nvars: usize) -> u128 {
    (q as u128).checked_pow(nvars as u32).unwrap_or(u128::MAX)
}

pub(crate) fn check_budget(q: u64, nvars: usize, budget: u64) -> Result<u64> {
    let required = points_required(q, nvars);
    if required > budget as u128 {
        return Err(CensusError::BudgetExceeded { required, budget });
    }
    Ok(required as u64)
}

/// Run `f` on a dedicated pool of `workers` threads. Every sweep below
/// merges per-chunk accumulators in a fixed order, so results do not depend
/// on `workers`.
pub fn run_with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(f)
}

/// Counts keyed by canonical element text, kept in positional order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElementCounts(pub Vec<(String, u64)>);

impl Serialize for ElementCounts {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ElementCounts {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ElementCounts;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from elements to counts")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = a.next_entry::<String, u64>()? {
                    out.push((k, v));
                }
                Ok(ElementCounts(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// Exact fiber sizes of `F` over one point field.
#[derive(Debug, Clone)]
pub struct FiberCensus {
    field: FieldCtx,
    nvars: usize,
    level: u32,
    poly: String,
    total: u64,
    counts: Vec<u64>,
}

impl FiberCensus {
    pub fn field(&self) -> &FieldCtx {
        &self.field
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Degree of the point field over the coefficient field.
    pub fn level(&self) -> u32 {
        self.level
    }

    /// `Q^N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Counts indexed by element position.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, t: &FieldElement) -> Result<u64> {
        if t.ctx() != &self.field {
            return Err(FieldError::MixedFields.into());
        }
        Ok(self.counts[t.index() as usize])
    }

    pub fn element_counts(&self) -> ElementCounts {
        ElementCounts(
            self.counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (self.field.format_raw(i as u32), c))
                .collect(),
        )
    }

    pub fn measures(&self) -> Measures {
        measures(self)
    }

    pub fn to_record(&self) -> CensusRecord {
        CensusRecord {
            schema_version: SCHEMA_VERSION,
            field: self.field.spec(),
            ext_modulus: self.field.format_ext_modulus(),
            nvars: self.nvars,
            poly: self.poly.clone(),
            n: self.level,
            total: self.total,
            counts: self.element_counts(),
        }
    }
}

/// JSON form of a census.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusRecord {
    pub schema_version: u32,
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ext_modulus: Option<String>,
    pub nvars: usize,
    pub poly: String,
    pub n: u32,
    pub total: u64,
    pub counts: ElementCounts,
}

/// Exhaustive census of `f` over the degree-`n` extension of its field.
pub fn census(f: &MultiPoly, n: u32, budget: u64) -> Result<FiberCensus> {
    let target = f.ctx().extend(n)?;
    census_over(f, &target, budget)
}

/// Exhaustive census over an explicit point field.
pub fn census_over(f: &MultiPoly, target: &FieldCtx, budget: u64) -> Result<FiberCensus> {
    let total = check_budget(target.size(), f.nvars(), budget)?;
    let compiled = f.compile(target)?;
    let counts = engine::histogram(&compiled);
    debug_assert_eq!(counts.iter().sum::<u64>(), total);
    Ok(FiberCensus {
        field: target.clone(),
        nvars: f.nvars(),
        level: target.degree() / f.ctx().degree(),
        poly: f.to_string(),
        total,
        counts,
    })
}

/// Derived measures of one census.
#[derive(Debug, Clone, PartialEq)]
pub struct Measures {
    /// `mu_n(t)` in positional order
    pub mu: Vec<Ratio<u64>>,
    pub delta: Ratio<u64>,
    /// `-log_Q(Delta)`; `None` when the level is uniform
    pub b_n: Option<f64>,
    /// `b_n` as a rational when `Delta` is a power of `1/p`
    pub b_n_exact: Option<Ratio<u64>>,
    pub uniform: bool,
}

impl Measures {
    /// Contribution `1/b_n` to the bias (0 on uniform levels, infinite when
    /// `b_n = 0`).
    pub fn inverse_b(&self) -> f64 {
        match (self.b_n_exact, self.b_n) {
            (_, None) => 0.0,
            (Some(e), _) if *e.numer() == 0 => f64::INFINITY,
            (Some(e), _) => *e.denom() as f64 / *e.numer() as f64,
            (None, Some(b)) => 1.0 / b,
        }
    }
}

pub fn measures(c: &FiberCensus) -> Measures {
    let total = c.total;
    let mu = c.counts.iter().map(|&k| Ratio::new(k, total)).collect();
    let max = *c.counts.iter().max().expect("fields are nonempty");
    let min = *c.counts.iter().min().expect("fields are nonempty");
    let delta = Ratio::new(max - min, total);
    if max == min {
        return Measures {
            mu,
            delta,
            b_n: None,
            b_n_exact: None,
            uniform: true,
        };
    }
    let p = c.field.characteristic() as u64;
    // log_p(Q) = n * m
    let digits = (c.field.degree() * c.field.base_degree()) as u64;
    let b_n_exact = if *delta.numer() == 1 {
        let mut d = *delta.denom();
        let mut e = 0u64;
        while d.is_multiple_of(p) {
            d /= p;
            e += 1;
        }
        (d == 1).then(|| Ratio::new(e, digits))
    } else {
        None
    };
    let b_n = match b_n_exact {
        Some(r) => *r.numer() as f64 / *r.denom() as f64,
        None => {
            let ln_delta = (*delta.numer() as f64).ln() - (*delta.denom() as f64).ln();
            -ln_delta / (c.field.size() as f64).ln()
        }
    };
    Measures {
        mu,
        delta,
        b_n: Some(b_n),
        b_n_exact,
        uniform: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasLevel {
    pub n: u32,
    pub counts: ElementCounts,
    pub delta: String,
    pub b_n: Option<f64>,
    pub b_n_exact: Option<String>,
    pub uniform: bool,
    #[serde(skip)]
    pub inverse_b: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLevel {
    pub n: u32,
    pub required: u128,
}

/// Bias statistics over levels `1..=n_max`. `bias_estimate` is the maximum
/// of `1/b_n` over the computed levels: a finite witness for a limsup, not
/// the limsup itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub schema_version: u32,
    pub field: String,
    pub nvars: usize,
    pub poly: String,
    pub levels: Vec<BiasLevel>,
    pub skipped: Vec<SkippedLevel>,
    pub computed_levels: Vec<u32>,
    pub bias_estimate: f64,
    pub bias_estimate_exact: Option<String>,
    pub estimate_kind: String,
}

pub fn bias_estimate(f: &MultiPoly, n_max: u32, budget: u64) -> Result<BiasReport> {
    if n_max == 0 {
        return Err(CensusError::InvalidLevels);
    }
    let mut levels = Vec::new();
    let mut skipped = Vec::new();
    let mut exact_max: Option<Ratio<u64>> = Some(Ratio::from_integer(0));
    let mut best = 0.0f64;
    for n in 1..=n_max {
        let target = match f.ctx().extend(n) {
            Ok(t) => t,
            Err(FieldError::SizeOverflow { required, .. }) => {
                skipped.push(SkippedLevel { n, required });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let c = match census_over(f, &target, budget) {
            Ok(c) => c,
            Err(CensusError::BudgetExceeded { required, .. }) => {
                skipped.push(SkippedLevel { n, required });
                continue;
            }
            Err(e) => return Err(e),
        };
        let m = c.measures();
        let inv = m.inverse_b();
        best = best.max(inv);
        exact_max = match (exact_max, m.uniform, m.b_n_exact) {
            (Some(cur), true, _) => Some(cur),
            (Some(cur), false, Some(b)) if *b.numer() > 0 => Some(cur.max(b.recip())),
            _ => None,
        };
        levels.push(BiasLevel {
            n,
            counts: c.element_counts(),
            delta: ratio_text(&m.delta),
            b_n: m.b_n,
            b_n_exact: m.b_n_exact.map(|r| ratio_text(&r)),
            uniform: m.uniform,
            inverse_b: inv,
        });
    }
    if levels.is_empty() {
        let required = points_required(f.ctx().size(), f.nvars());
        return Err(CensusError::NoCompletedLevels { required, budget });
    }
    Ok(BiasReport {
        schema_version: SCHEMA_VERSION,
        field: f.ctx().spec(),
        nvars: f.nvars(),
        poly: f.to_string(),
        computed_levels: levels.iter().map(|l| l.n).collect(),
        levels,
        skipped,
        bias_estimate: best,
        bias_estimate_exact: exact_max.map(|r| ratio_text(&r)),
        estimate_kind: "max of 1/b_n over computed levels (finite witness of a limsup)".into(),
    })
}

/// Which projective variety a count refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarietyTag {
    /// `X^F`, cut out by the top homogeneous part in `P^{N-1}`
    X,
    /// `Y_t^F`, the closure of `F = t` in `P^N`
    Y { t: String },
    /// any other projective hypersurface
    Hypersurface,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectiveCount {
    pub variety: VarietyTag,
    pub n: u32,
    pub affine_zeros: u64,
    pub points: u64,
}

/// Projective points of a homogeneous `h` over the degree-`n` extension of
/// its coefficient field.
pub fn projective_count(h: &MultiPoly, n: u32, budget: u64) -> Result<ProjectiveCount> {
    let target = h.ctx().extend(n)?;
    projective_count_over(h, &target, budget)
}

pub fn projective_count_over(h: &MultiPoly, target: &FieldCtx, budget: u64) -> Result<ProjectiveCount> {
    if h.is_zero() {
        return Err(PolyError::ZeroPolynomial.into());
    }
    if !h.is_homogeneous() {
        return Err(CensusError::NotHomogeneous);
    }
    check_budget(target.size(), h.nvars(), budget)?;
    let n = target.degree() / h.ctx().degree();
    if h.degree() == Some(0) {
        return Ok(ProjectiveCount {
            variety: VarietyTag::Hypersurface,
            n,
            affine_zeros: 0,
            points: 0,
        });
    }
    let compiled = h.compile(target)?;
    let points = engine::projective_zero_count(&compiled);
    let units = target.size() - 1;
    let affine = 1 + units * points;
    if points_required(target.size(), h.nvars()) <= crate::singular::CROSS_CHECK_POINTS {
        let full = engine::zero_count(&compiled);
        if full != affine {
            return Err(CensusError::DivisibilityViolation { affine: full, units });
        }
    }
    Ok(ProjectiveCount {
        variety: VarietyTag::Hypersurface,
        n,
        affine_zeros: affine,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberIdentityReport {
    pub poly: String,
    pub t: String,
    pub n: u32,
    pub affine: u64,
    pub y_points: u64,
    pub x_points: u64,
}

/// Checks `#F^{-1}(t) = #Y_t(k_n) - #X(k_n)` over the field of `t`.
pub fn fiber_identity_check(f: &MultiPoly, t: &FieldElement, budget: u64) -> Result<FiberIdentityReport> {
    let target = t.ctx().clone();
    if f.degree().unwrap_or(0) < 1 {
        return Err(PolyError::ZeroPolynomial.into());
    }
    check_budget(target.size(), f.nvars() + 1, budget)?;
    let affine = census_over(f, &target, budget)?.count(t)?;
    let y = f.homogenize(t)?.poly;
    let x = f.top_homogeneous()?;
    let y_points = projective_count_over(&y, &target, budget)?.points;
    let x_points = projective_count_over(&x, &target, budget)?.points;
    if affine + x_points != y_points {
        return Err(CensusError::IdentityViolation {
            affine,
            y_points,
            x_points,
        });
    }
    Ok(FiberIdentityReport {
        poly: f.to_string(),
        t: t.to_string(),
        n: target.degree() / f.ctx().degree(),
        affine,
        y_points,
        x_points,
    })
}
