//! Singular loci by the Jacobian criterion, dimension estimates from point
//! counts over growing extensions, and c-regularity / c-goodness verdicts.
//!
//! Codimension is measured inside the hypersurface: for `H` in `N`
//! variables the variety has dimension `N - 2` in `P^{N-1}`, and an empty
//! singular locus is assigned codimension `N`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::census::{check_budget, points_required, CensusError, SkippedLevel, VarietyTag};
use crate::engine;
use crate::field::{FieldCtx, FieldError};
use crate::poly::{MultiPoly, PolyError};
use crate::SCHEMA_VERSION;

/// Largest distance between the growth slope and its rounding for the
/// estimate to count as confident.
pub const SLOPE_TOLERANCE: f64 = 0.25;

/// Affine sweeps up to this size are repeated to cross-check the
/// projective count.
pub(crate) const CROSS_CHECK_POINTS: u128 = 1 << 12;

/// Number of singular points kept in a report.
pub const SAMPLE_CAP: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SingularError {
    #[error("polynomial is not homogeneous")]
    NotHomogeneous,
    #[error("polynomial is zero")]
    ZeroPolynomial,
    #[error("degree {0} is below 2")]
    DegreeTooLow(u32),
    #[error("sweep needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("need two levels with nonzero counts, have {have}")]
    InsufficientLevels { have: usize },
    #[error("affine cone count {affine} - 1 is not divisible by {units}")]
    DivisibilityViolation { affine: u64, units: u64 },
    #[error("partials-only count {partials} differs from count with H {with_h}")]
    EulerMismatch { partials: u64, with_h: u64 },
    #[error("n_max must be at least 1")]
    InvalidLevels,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl From<CensusError> for SingularError {
    fn from(e: CensusError) -> Self {
        match e {
            CensusError::BudgetExceeded { required, budget } => SingularError::BudgetExceeded { required, budget },
            CensusError::Poly(p) => SingularError::Poly(p),
            CensusError::Field(f) => SingularError::Field(f),
            CensusError::NotHomogeneous => SingularError::NotHomogeneous,
            other => panic!("unexpected census error: {other}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, SingularError>;

/// Singular points of `V(H)` over one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingularLevel {
    pub n: u32,
    /// affine common zeros of the partials
    pub affine_partials: u64,
    /// affine common zeros of the partials and `H`
    pub affine_with_h: u64,
    /// projective singular points
    pub points: u64,
    /// normalized representatives, at most [`SAMPLE_CAP`]
    pub sample: Vec<Vec<String>>,
}

fn check_homogeneous(h: &MultiPoly) -> Result<()> {
    if h.is_zero() {
        return Err(SingularError::ZeroPolynomial);
    }
    if !h.is_homogeneous() {
        return Err(SingularError::NotHomogeneous);
    }
    Ok(())
}

/// Projective singular points of `V(h)` over the degree-`n` extension of the
/// coefficient field.
pub fn singular_points(h: &MultiPoly, n: u32, budget: u64) -> Result<SingularLevel> {
    check_homogeneous(h)?;
    let target = h.ctx().extend(n)?;
    singular_points_over(h, &target, budget)
}

pub fn singular_points_over(h: &MultiPoly, target: &FieldCtx, budget: u64) -> Result<SingularLevel> {
    check_homogeneous(h)?;
    check_budget(target.size(), h.nvars(), budget)?;
    let n = target.degree() / h.ctx().degree();
    let d = h.degree().unwrap_or(0);
    let units = target.size() - 1;
    if d == 0 {
        // nonzero constant: empty variety
        return Ok(SingularLevel {
            n,
            affine_partials: 0,
            affine_with_h: 0,
            points: 0,
            sample: Vec::new(),
        });
    }
    let nonzero: Vec<MultiPoly> = h.partials().into_iter().filter(|p| !p.is_zero()).collect();
    let partials: Vec<_> = nonzero
        .iter()
        .map(|p| p.compile(target))
        .collect::<std::result::Result<_, _>>()?;
    let main: Vec<_> = partials.iter().collect();
    let hc = h.compile(target)?;
    let zeros = engine::projective_common_zeros(target, h.nvars(), &main, Some(&hc), SAMPLE_CAP);
    // the origin is a common zero unless some partial is a nonzero constant
    let origin = u64::from(nonzero.iter().all(|p| p.degree() != Some(0)));
    let affine_partials = origin + units * zeros.main;
    let affine = origin + units * zeros.with_extra;
    if points_required(target.size(), h.nvars()) <= CROSS_CHECK_POINTS {
        let full = engine::common_zeros(target, h.nvars(), &main, Some(&hc), 0);
        if full.with_extra != affine || full.main != affine_partials {
            return Err(SingularError::DivisibilityViolation {
                affine: full.with_extra,
                units,
            });
        }
    }
    let p = h.ctx().characteristic();
    if !d.is_multiple_of(p) && affine_partials != affine {
        return Err(SingularError::EulerMismatch {
            partials: affine_partials,
            with_h: affine,
        });
    }
    Ok(SingularLevel {
        n,
        affine_partials,
        affine_with_h: affine,
        points: zeros.with_extra,
        sample: zeros
            .points
            .iter()
            .map(|pt| pt.iter().map(|&c| target.format_raw(c)).collect())
            .collect(),
    })
}

/// Dimension read off from point-count growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    /// `None` means the locus is empty at every computed level
    pub dim: Option<u32>,
    pub confident: bool,
    /// growth slope of the two largest levels with nonzero counts
    pub slope: Option<f64>,
}

fn slope(c1: u64, n1: u32, c2: u64, n2: u32, q: u64) -> f64 {
    ((c2 as f64).ln() - (c1 as f64).ln()) / ((n2 - n1) as f64 * (q as f64).ln())
}

/// Estimate the dimension of a variety from `(n, #points over level n)`.
/// `q` is the size of the coefficient field the levels refer to.
pub fn dim_estimate(counts: &[(u32, u64)], q: u64) -> Result<DimEstimate> {
    let nonzero: Vec<(u32, u64)> = counts.iter().copied().filter(|&(_, c)| c > 0).collect();
    if nonzero.is_empty() {
        return Ok(DimEstimate {
            dim: None,
            confident: counts.len() >= 2,
            slope: None,
        });
    }
    if nonzero.len() < 2 {
        return Err(SingularError::InsufficientLevels { have: nonzero.len() });
    }
    let k = nonzero.len();
    let (n1, c1) = nonzero[k - 2];
    let (n2, c2) = nonzero[k - 1];
    let s = slope(c1, n1, c2, n2, q);
    let rounded = s.round();
    let mut confident = rounded >= 0.0 && (s - rounded).abs() <= SLOPE_TOLERANCE;
    for w in nonzero.windows(2) {
        let (a, ca) = w[0];
        let (b, cb) = w[1];
        if slope(ca, a, cb, b, q).round() != rounded {
            confident = false;
        }
    }
    Ok(DimEstimate {
        dim: Some(rounded.max(0.0) as u32),
        confident,
        slope: Some(s),
    })
}

/// Outcome of a c-regularity test on one variety.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    Regular,
    NotRegular,
    Unknown,
}

/// Singular locus of a projective hypersurface measured over levels
/// `1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularReport {
    pub schema_version: u32,
    pub variety: VarietyTag,
    pub field: String,
    pub poly: String,
    pub nvars: usize,
    /// dimension of the hypersurface, `nvars - 2`
    pub variety_dim: i64,
    pub levels: Vec<SingularLevel>,
    pub skipped: Vec<SkippedLevel>,
    /// `None` with `empty = true` when no singular point was found
    pub dim_estimate: Option<u32>,
    pub empty: bool,
    pub confident: bool,
    pub slope: Option<f64>,
    /// codimension inside the variety; `nvars` when empty
    pub codim: Option<i64>,
    pub tolerance: f64,
}

impl SingularReport {
    /// Whether the variety is `c`-regular, as far as this report can tell.
    pub fn regularity(&self, c: i64) -> Regularity {
        if c <= 0 {
            return Regularity::Regular;
        }
        match (self.confident, self.codim) {
            (true, Some(k)) if k >= c => Regularity::Regular,
            (true, Some(_)) => Regularity::NotRegular,
            _ => Regularity::Unknown,
        }
    }

    pub fn counts(&self) -> Vec<(u32, u64)> {
        self.levels.iter().map(|l| (l.n, l.points)).collect()
    }
}

/// Singular report of a homogeneous `h`, levels relative to its coefficient
/// field.
pub fn c_regularity(h: &MultiPoly, n_max: u32, budget: u64) -> Result<SingularReport> {
    c_regularity_tagged(h, VarietyTag::Hypersurface, n_max, budget)
}

pub fn c_regularity_tagged(h: &MultiPoly, variety: VarietyTag, n_max: u32, budget: u64) -> Result<SingularReport> {
    check_homogeneous(h)?;
    if n_max == 0 {
        return Err(SingularError::InvalidLevels);
    }
    let q = h.ctx().size();
    let mut levels = Vec::new();
    let mut skipped = Vec::new();
    for n in 1..=n_max {
        let target = match h.ctx().extend(n) {
            Ok(t) => t,
            Err(FieldError::SizeOverflow { required, .. }) => {
                skipped.push(SkippedLevel { n, required });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match singular_points_over(h, &target, budget) {
            Ok(l) => levels.push(l),
            Err(SingularError::BudgetExceeded { required, .. }) => skipped.push(SkippedLevel { n, required }),
            Err(e) => return Err(e),
        }
    }
    if levels.is_empty() {
        return Err(SingularError::BudgetExceeded {
            required: points_required(q, h.nvars()),
            budget,
        });
    }
    let nvars = h.nvars() as i64;
    let counts: Vec<(u32, u64)> = levels.iter().map(|l| (l.n, l.points)).collect();
    let (dim, empty, confident, slope, codim) = match dim_estimate(&counts, q) {
        Ok(DimEstimate { dim: None, confident, .. }) => (None, true, confident, None, Some(nvars)),
        Ok(DimEstimate {
            dim: Some(d),
            confident,
            slope,
        }) => (Some(d), false, confident, slope, Some(nvars - 2 - d as i64)),
        Err(SingularError::InsufficientLevels { .. }) => (None, false, false, None, None),
        Err(e) => return Err(e),
    };
    Ok(SingularReport {
        schema_version: SCHEMA_VERSION,
        variety,
        field: h.ctx().spec(),
        poly: h.to_string(),
        nvars: h.nvars(),
        variety_dim: nvars - 2,
        levels,
        skipped,
        dim_estimate: dim,
        empty,
        confident,
        slope,
        codim,
        tolerance: SLOPE_TOLERANCE,
    })
}

/// Singular reports of `X^F` and of `Y_t^F` for every `t` in `k_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessProfile {
    pub poly: String,
    pub field: String,
    pub t_ext_degree: u32,
    pub t_sample: String,
    pub n_max: u32,
    pub x: SingularReport,
    pub y: Vec<SingularReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Goodness {
    CGood,
    NotCGood,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarietyVerdict {
    pub variety: VarietyTag,
    /// `(n, projective singular points over level n)`
    pub counts: Vec<(u32, u64)>,
    pub codim: Option<i64>,
    pub confident: bool,
    pub verdict: Regularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessVerdict {
    pub schema_version: u32,
    pub poly: String,
    pub c: i64,
    pub t_sample: String,
    pub varieties: Vec<VarietyVerdict>,
    pub overall: Goodness,
}

impl GoodnessProfile {
    fn reports(&self) -> impl Iterator<Item = &SingularReport> {
        std::iter::once(&self.x).chain(self.y.iter())
    }

    pub fn overall(&self, c: i64) -> Goodness {
        let verdicts: Vec<Regularity> = self.reports().map(|r| r.regularity(c)).collect();
        if verdicts.contains(&Regularity::NotRegular) {
            Goodness::NotCGood
        } else if verdicts.iter().all(|&v| v == Regularity::Regular) {
            Goodness::CGood
        } else {
            Goodness::Inconclusive
        }
    }

    pub fn verdict(&self, c: i64) -> GoodnessVerdict {
        GoodnessVerdict {
            schema_version: SCHEMA_VERSION,
            poly: self.poly.clone(),
            c,
            t_sample: self.t_sample.clone(),
            varieties: self
                .reports()
                .map(|r| VarietyVerdict {
                    variety: r.variety.clone(),
                    counts: r.counts(),
                    codim: r.codim,
                    confident: r.confident,
                    verdict: r.regularity(c),
                })
                .collect(),
            overall: self.overall(c),
        }
    }

    /// Largest `c` for which the sampled varieties are all `c`-regular;
    /// `None` unless every estimate is confident.
    pub fn c_eff(&self) -> Option<i64> {
        let mut best: Option<i64> = None;
        for r in self.reports() {
            if !r.confident {
                return None;
            }
            let k = r.codim?;
            best = Some(best.map_or(k, |b| b.min(k)));
        }
        best
    }

    pub fn all_confident(&self) -> bool {
        self.reports().all(|r| r.confident)
    }
}

/// Computes the singular reports needed for every c-goodness query on `f`.
pub fn goodness_profile(f: &MultiPoly, t_ext_degree: u32, n_max: u32, budget: u64) -> Result<GoodnessProfile> {
    let d = f.degree().unwrap_or(0);
    if d < 2 {
        return Err(SingularError::DegreeTooLow(d));
    }
    let x = c_regularity_tagged(&f.top_homogeneous()?, VarietyTag::X, n_max, budget)?;
    let tk = f.ctx().extend(t_ext_degree)?;
    let mut y = Vec::with_capacity(tk.size() as usize);
    for t in tk.elements() {
        let yt = f.homogenize(&t)?.poly;
        y.push(c_regularity_tagged(
            &yt,
            VarietyTag::Y { t: t.to_string() },
            n_max,
            budget,
        )?);
    }
    Ok(GoodnessProfile {
        poly: f.to_string(),
        field: f.ctx().spec(),
        t_ext_degree,
        t_sample: format!(
            "t ranges over all {} elements of the degree-{} extension of {} (sampled, not the algebraic closure); Y_t levels are relative to that extension",
            tk.size(),
            t_ext_degree,
            f.ctx().spec()
        ),
        n_max,
        x,
        y,
    })
}

pub fn c_good_check(f: &MultiPoly, c: i64, t_ext_degree: u32, n_max: u32, budget: u64) -> Result<GoodnessVerdict> {
    Ok(goodness_profile(f, t_ext_degree, n_max, budget)?.verdict(c))
}
