//! Strength of homogeneous forms: the least `r` with `G = sum_{i<=r} Q_i P_i`
//! and `deg Q_i, deg P_i < deg G`, over the algebraic closure.
//!
//! Quadratics in odd characteristic are handled exactly through the rank of
//! the associated symmetric matrix. In general the rank is bracketed:
//! explicit factorizations (possibly over an extension) give upper bounds,
//! the codimension of the singular locus gives lower bounds.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::census::DEFAULT_BUDGET;
use crate::field::{FieldCtx, FieldElement, FieldError};
use crate::linalg::{self, Matrix};
use crate::poly::{monomials_of_degree, Monomial, MultiPoly, PolyError};
use crate::singular::{self, SingularError, SingularReport};
use crate::SCHEMA_VERSION;

pub const METHOD_QUADRATIC: &str = "quadratic-exact";
pub const METHOD_SEARCH: &str = "witness-search";
pub const METHOD_SING: &str = "sing-codim";
pub const METHOD_DEGENERATE: &str = "degenerate";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("degree {0} is below 2")]
    DegreeTooLow(u32),
    #[error("not a homogeneous quadratic")]
    NotQuadratic,
    #[error("quadratic rank needs odd characteristic")]
    CharacteristicTwo,
    #[error("polynomial is not homogeneous")]
    NotHomogeneous,
    #[error("singular report concerns {found}, expected {expected}")]
    MismatchedVariety { expected: String, found: String },
    #[error("sandwich failed: R(F) = {rank_f}, R(F_t) = {rank_hat}")]
    SandwichViolation { rank_f: u32, rank_hat: u32 },
    #[error("invalid factorization: {0}")]
    InvalidWitness(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Singular(#[from] SingularError),
}

pub type Result<T> = std::result::Result<T, RankError>;

/// `target = sum Q_i P_i`, every factor of degree below `deg target`. The
/// factors may live over an extension of the target's field.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pairs: Vec<(MultiPoly, MultiPoly)>,
    target: MultiPoly,
}

impl Factorization {
    pub fn new(pairs: Vec<(MultiPoly, MultiPoly)>, target: MultiPoly) -> Result<Factorization> {
        let f = Factorization { pairs, target };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(RankError::InvalidWitness(s.to_string()));
        let d = match self.target.degree() {
            Some(d) if self.target.is_homogeneous() => d,
            _ => return bad("target must be a nonzero form"),
        };
        let ctx = match self.pairs.first() {
            Some((q, _)) => q.ctx().clone(),
            None => return bad("empty factorization"),
        };
        let mut sum = MultiPoly::zero(&ctx, self.target.nvars());
        for (q, p) in &self.pairs {
            if q.ctx() != &ctx || p.ctx() != &ctx {
                return bad("factors over different fields");
            }
            let (Some(dq), Some(dp)) = (q.degree(), p.degree()) else {
                return bad("zero factor");
            };
            if dq >= d || dp >= d {
                return bad("factor degree not below target degree");
            }
            sum = sum.add(&q.mul(p)?)?;
        }
        if sum != self.target.base_change(&ctx)? {
            return bad("factors do not re-expand to the target");
        }
        Ok(())
    }

    pub fn r(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(MultiPoly, MultiPoly)] {
        &self.pairs
    }

    pub fn target(&self) -> &MultiPoly {
        &self.target
    }

    pub fn field(&self) -> &FieldCtx {
        self.pairs[0].0.ctx()
    }

    pub fn to_record(&self) -> FactorizationRecord {
        FactorizationRecord {
            field: self.field().spec(),
            r: self.r(),
            pairs: self
                .pairs
                .iter()
                .map(|(q, p)| [q.to_string(), p.to_string()])
                .collect(),
            target: self.target.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizationRecord {
    pub field: String,
    pub r: usize,
    pub pairs: Vec<[String; 2]>,
    pub target: String,
}

/// Certified bracket `lo <= R(F) <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankInterval {
    pub lo: u32,
    pub hi: u32,
    pub witness: Factorization,
    pub lo_method: &'static str,
    pub hi_method: &'static str,
    /// how the upper witness was found
    pub ansatz: String,
    pub singular: Option<SingularReport>,
}

impl RankInterval {
    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn to_record(&self, poly: &MultiPoly) -> RankRecord {
        RankRecord {
            schema_version: SCHEMA_VERSION,
            field: poly.ctx().spec(),
            nvars: poly.nvars(),
            poly: poly.to_string(),
            top: self.witness.target().to_string(),
            lo: self.lo,
            hi: self.hi,
            lo_method: self.lo_method.to_string(),
            hi_method: self.hi_method.to_string(),
            ansatz: self.ansatz.clone(),
            witness: self.witness.to_record(),
            singular: self.singular.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub schema_version: u32,
    pub field: String,
    pub nvars: usize,
    pub poly: String,
    pub top: String,
    pub lo: u32,
    pub hi: u32,
    pub lo_method: String,
    pub hi_method: String,
    pub ansatz: String,
    pub witness: FactorizationRecord,
    pub singular: Option<SingularReport>,
}

/// Knobs of the general-degree path of [`rank_of_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankOptions {
    pub search_budget: u64,
    pub seed: u64,
    pub ext_degree: u32,
    pub sing_nmax: u32,
    pub budget: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            search_budget: 100_000,
            seed: 0,
            ext_degree: 2,
            sing_nmax: 3,
            budget: DEFAULT_BUDGET,
        }
    }
}

fn linear_poly(ctx: &FieldCtx, coeffs: &[u32]) -> MultiPoly {
    let n = coeffs.len();
    MultiPoly::from_raw_terms(
        ctx,
        n,
        coeffs.iter().enumerate().map(|(j, &c)| (Monomial::var(n, j), c)),
    )
}

fn check_form(g: &MultiPoly) -> Result<u32> {
    let d = g.degree().ok_or(PolyError::ZeroPolynomial)?;
    if !g.is_homogeneous() {
        return Err(RankError::NotHomogeneous);
    }
    Ok(d)
}

/// Exact rank of a quadratic form in odd characteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRank {
    pub matrix_rank: u32,
    pub rank: u32,
    pub witness: Factorization,
}

fn quadratic_matrix(q: &MultiPoly) -> Matrix {
    let n = q.nvars();
    let ctx = q.ctx();
    let mut m = Matrix::zeros(n, n);
    for (mono, &c) in q.raw_terms() {
        let vars: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, mono.0[i] as usize)).collect();
        let (i, j) = (vars[0], vars[1]);
        if i == j {
            m.set(i, i, ctx.raw_add(c, c));
        } else {
            m.set(i, j, c);
            m.set(j, i, c);
        }
    }
    m
}

pub fn quadratic_rank(q: &MultiPoly) -> Result<QuadraticRank> {
    if q.degree() != Some(2) || !q.is_homogeneous() {
        return Err(RankError::NotQuadratic);
    }
    if q.ctx().characteristic() == 2 {
        return Err(RankError::CharacteristicTwo);
    }
    let matrix_rank = quadratic_matrix(q).rank(q.ctx()) as u32;
    let witness = quadratic_witness(q)?;
    let rank = matrix_rank.div_ceil(2);
    debug_assert_eq!(witness.r() as u32, rank);
    Ok(QuadraticRank {
        matrix_rank,
        rank,
        witness,
    })
}

/// Splits `q` into hyperbolic products and scaled squares, then pairs the
/// squares as `a L^2 + b M^2 = a (L + s M)(L - s M)` with `s^2 = -b/a`,
/// moving to the quadratic extension when `s` is missing.
fn quadratic_witness(q: &MultiPoly) -> Result<Factorization> {
    let ctx = q.ctx().clone();
    let n = q.nvars();
    let coef = |p: &MultiPoly, i: usize, j: usize| -> u32 {
        let mut e = vec![0u32; n];
        e[i] += 1;
        e[j] += 1;
        p.raw_terms().get(&Monomial(e)).copied().unwrap_or(0)
    };
    let mut rest = q.clone();
    let mut products: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
    let mut squares: Vec<(u32, Vec<u32>)> = Vec::new();
    while !rest.is_zero() {
        if let Some(j) = (0..n).find(|&j| coef(&rest, j, j) != 0) {
            let a = coef(&rest, j, j);
            let inv2a = ctx.raw_inv(ctx.raw_add(a, a)).expect("odd characteristic");
            let mut l = vec![0u32; n];
            l[j] = 1;
            for (i, li) in l.iter_mut().enumerate() {
                if i != j {
                    *li = ctx.raw_mul(coef(&rest, i, j), inv2a);
                }
            }
            let lp = linear_poly(&ctx, &l);
            rest = rest.sub(&lp.mul(&lp)?.scale_raw(a))?;
            squares.push((a, l));
        } else {
            let (i, j) = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .find(|&(i, j)| coef(&rest, i, j) != 0)
                .expect("nonzero quadratic without squares has a cross term");
            let c = coef(&rest, i, j);
            let cinv = ctx.raw_inv(c).expect("nonzero");
            let mut l1 = vec![0u32; n];
            let mut l2 = vec![0u32; n];
            l1[i] = c;
            l2[j] = 1;
            for k in 0..n {
                if k != i && k != j {
                    l1[k] = coef(&rest, j, k);
                    l2[k] = ctx.raw_mul(coef(&rest, i, k), cinv);
                }
            }
            let prod = linear_poly(&ctx, &l1).mul(&linear_poly(&ctx, &l2))?;
            rest = rest.sub(&prod)?;
            products.push((l1, l2));
        }
    }
    // ratios -b/a for each square pair
    let ratios: Vec<u32> = squares
        .chunks(2)
        .filter(|c| c.len() == 2)
        .map(|c| ctx.raw_neg(ctx.raw_mul(c[1].0, ctx.raw_inv(c[0].0).expect("nonzero"))))
        .collect();
    let wctx = if ratios.iter().all(|&r| ctx.raw_sqrt(r).is_some()) {
        ctx.clone()
    } else {
        ctx.extend(2)?
    };
    let emb = ctx.embedding_into(&wctx)?;
    let lift = |v: &[u32]| -> Vec<u32> { v.iter().map(|&c| emb.apply_raw(c)).collect() };
    let mut pairs = Vec::new();
    for (l1, l2) in &products {
        pairs.push((linear_poly(&wctx, &lift(l1)), linear_poly(&wctx, &lift(l2))));
    }
    for chunk in squares.chunks(2) {
        let a = emb.apply_raw(chunk[0].0);
        let l = lift(&chunk[0].1);
        if chunk.len() == 1 {
            let al: Vec<u32> = l.iter().map(|&c| wctx.raw_mul(a, c)).collect();
            pairs.push((linear_poly(&wctx, &al), linear_poly(&wctx, &l)));
            continue;
        }
        let b = emb.apply_raw(chunk[1].0);
        let m = lift(&chunk[1].1);
        let ratio = wctx.raw_neg(wctx.raw_mul(b, wctx.raw_inv(a).expect("nonzero")));
        let s = wctx.raw_sqrt(ratio).expect("square root exists in the quadratic extension");
        let plus: Vec<u32> = l
            .iter()
            .zip(&m)
            .map(|(&x, &y)| wctx.raw_mul(a, wctx.raw_add(x, wctx.raw_mul(s, y))))
            .collect();
        let minus: Vec<u32> = l.iter().zip(&m).map(|(&x, &y)| wctx.raw_sub(x, wctx.raw_mul(s, y))).collect();
        pairs.push((linear_poly(&wctx, &plus), linear_poly(&wctx, &minus)));
    }
    Factorization::new(pairs, q.clone())
}

/// Upper-bound witness and how it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub factorization: Factorization,
    pub ansatz: String,
}

/// Smallest set of variables dividing every monomial; exact for up to 20
/// variables, greedy beyond.
fn variable_cover(g: &MultiPoly) -> Vec<usize> {
    let n = g.nvars();
    let masks: Vec<u64> = g
        .raw_terms()
        .keys()
        .map(|m| m.0.iter().enumerate().filter(|(_, &e)| e > 0).fold(0u64, |acc, (i, _)| acc | 1 << i))
        .collect();
    let covers = |s: u64| masks.iter().all(|&m| m & s != 0);
    if n <= 20 {
        let mut best: Option<u64> = None;
        for s in 1u64..(1u64 << n) {
            if covers(s) && best.is_none_or(|b| s.count_ones() < b.count_ones()) {
                best = Some(s);
            }
        }
        if let Some(b) = best {
            return (0..n).filter(|&i| b >> i & 1 == 1).collect();
        }
    }
    let mut chosen = Vec::new();
    let mut left: Vec<u64> = masks;
    while !left.is_empty() {
        let i = (0..n)
            .max_by_key(|&i| (left.iter().filter(|&&m| m >> i & 1 == 1).count(), std::cmp::Reverse(i)))
            .expect("variables");
        chosen.push(i);
        left.retain(|&m| m >> i & 1 == 0);
    }
    chosen.sort_unstable();
    chosen
}

/// `g = sum x_i P_i` over a minimal variable cover.
pub fn variable_cover_witness(g: &MultiPoly) -> Result<Factorization> {
    check_form(g)?;
    let cover = variable_cover(g);
    let n = g.nvars();
    let mut parts: BTreeMap<usize, Vec<(Monomial, u32)>> = BTreeMap::new();
    for (m, &c) in g.raw_terms() {
        let i = *cover.iter().find(|&&i| m.0[i] > 0).expect("cover");
        let mut e = m.0.clone();
        e[i] -= 1;
        parts.entry(i).or_default().push((Monomial(e), c));
    }
    let pairs = parts
        .into_iter()
        .map(|(i, terms)| (MultiPoly::var(g.ctx(), n, i), MultiPoly::from_raw_terms(g.ctx(), n, terms)))
        .collect();
    Factorization::new(pairs, g.clone())
}

/// Number of codim-`r` subspaces of `K^n`, saturating.
fn subspace_count(n: usize, r: usize, q: u64) -> u128 {
    let mut total: u128 = 0;
    for pivots in combinations(n, r) {
        let free = free_entries(&pivots, n);
        let c = (q as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
        total = total.saturating_add(c);
    }
    total
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    go(0, n, r, &mut cur, &mut out);
    out
}

/// Positions `(row, col)` of the free entries of an RREF with these pivots.
fn free_positions(pivots: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, &p) in pivots.iter().enumerate() {
        for c in p + 1..n {
            if !pivots.contains(&c) {
                out.push((i, c));
            }
        }
    }
    out
}

fn free_entries(pivots: &[usize], n: usize) -> usize {
    free_positions(pivots, n).len()
}

/// Search state for linear-subspace containment over one field.
struct SubspaceSearch<'a> {
    ctx: FieldCtx,
    g: MultiPoly,
    compiled: crate::poly::CompiledPoly,
    target: &'a MultiPoly,
}

impl SubspaceSearch<'_> {
    /// Does `g` vanish on the subspace `x_piv = -sum a x_free`?
    fn contains(&self, rows: &Matrix, pivots: &[usize], rng: &mut ChaCha8Rng) -> bool {
        let n = self.g.nvars();
        let q = self.ctx.size();
        let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
        let mut point = vec![0u32; n];
        for _ in 0..4 {
            for &j in &free {
                point[j] = rng.gen_range(0..q) as u32;
            }
            for (i, &p) in pivots.iter().enumerate() {
                let mut v = 0;
                for &j in &free {
                    v = self.ctx.raw_sub(v, self.ctx.raw_mul(rows.get(i, j), point[j]));
                }
                point[p] = v;
            }
            if self.compiled.eval_raw(&point) != 0 {
                return false;
            }
        }
        let forms: Vec<Vec<u32>> = (0..n)
            .map(|k| {
                let mut row = vec![0u32; n];
                match pivots.iter().position(|&p| p == k) {
                    Some(i) => {
                        for &j in &free {
                            row[j] = self.ctx.raw_neg(rows.get(i, j));
                        }
                    }
                    None => row[k] = 1,
                }
                row
            })
            .collect();
        self.g.linear_substitute(&forms).is_zero()
    }

    /// Factorization `g = sum L_i P_i` for a contained subspace.
    fn witness(&self, rows: &Matrix, pivots: &[usize]) -> Result<Factorization> {
        let n = self.g.nvars();
        let ctx = &self.ctx;
        let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
        // new coordinates: u_i = L_i at position pivots[i], free ones kept
        let forward: Vec<Vec<u32>> = (0..n)
            .map(|k| {
                let mut row = vec![0u32; n];
                row[k] = 1;
                if let Some(i) = pivots.iter().position(|&p| p == k) {
                    for &j in &free {
                        row[j] = ctx.raw_neg(rows.get(i, j));
                    }
                }
                row
            })
            .collect();
        let back: Vec<Vec<u32>> = (0..n)
            .map(|k| {
                let mut row = vec![0u32; n];
                row[k] = 1;
                if let Some(i) = pivots.iter().position(|&p| p == k) {
                    for &j in &free {
                        row[j] = rows.get(i, j);
                    }
                }
                row
            })
            .collect();
        let h = self.g.linear_substitute(&forward);
        let mut parts: BTreeMap<usize, Vec<(Monomial, u32)>> = BTreeMap::new();
        for (m, &c) in h.raw_terms() {
            let p = *pivots
                .iter()
                .find(|&&p| m.0[p] > 0)
                .ok_or_else(|| RankError::InvalidWitness("term outside the ideal".into()))?;
            let mut e = m.0.clone();
            e[p] -= 1;
            parts.entry(p).or_default().push((Monomial(e), c));
        }
        let pairs = parts
            .into_iter()
            .map(|(p, terms)| {
                let i = pivots.iter().position(|&x| x == p).expect("pivot");
                let l = linear_poly(ctx, rows.row(i));
                let cof = MultiPoly::from_raw_terms(ctx, n, terms).linear_substitute(&back);
                (l, cof)
            })
            .collect();
        Factorization::new(pairs, self.target.clone())
    }

    /// Returns a witness and the number of candidates examined.
    fn run(&self, r: usize, allot: u64, rng: &mut ChaCha8Rng) -> Result<(Option<Factorization>, u64)> {
        let n = self.g.nvars();
        let q = self.ctx.size();
        let total = subspace_count(n, r, q);
        let mut used = 0u64;
        if total <= allot as u128 {
            for pivots in combinations(n, r) {
                let pos = free_positions(&pivots, n);
                let mut rows = Matrix::zeros(r, n);
                for (i, &p) in pivots.iter().enumerate() {
                    rows.set(i, p, 1);
                }
                let mut digits = vec![0u32; pos.len()];
                loop {
                    for (k, &(i, c)) in pos.iter().enumerate() {
                        rows.set(i, c, digits[k]);
                    }
                    used += 1;
                    if self.contains(&rows, &pivots, rng) {
                        return Ok((Some(self.witness(&rows, &pivots)?), used));
                    }
                    let mut k = 0;
                    while k < digits.len() {
                        digits[k] += 1;
                        if (digits[k] as u64) < q {
                            break;
                        }
                        digits[k] = 0;
                        k += 1;
                    }
                    if k == digits.len() {
                        break;
                    }
                }
            }
            return Ok((None, used));
        }
        while used < allot {
            used += 1;
            let mut rows = Matrix::zeros(r, n);
            for v in rows.data.iter_mut() {
                *v = rng.gen_range(0..q) as u32;
            }
            let pivots = rows.rref(&self.ctx);
            if pivots.len() < r {
                continue;
            }
            if self.contains(&rows, &pivots, rng) {
                return Ok((Some(self.witness(&rows, &pivots)?), used));
            }
        }
        Ok((None, used))
    }
}

/// `g = sum Q_i P_i` with the given `Q_i`, solving for the `P_i`.
fn solve_cofactors(g: &MultiPoly, qs: &[MultiPoly]) -> Result<Option<Factorization>> {
    let ctx = g.ctx();
    let n = g.nvars();
    let d = g.degree().expect("nonzero");
    let rows_mono = monomials_of_degree(n, d);
    let row_of: BTreeMap<&Monomial, usize> = rows_mono.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut cols: Vec<(usize, Monomial)> = Vec::new();
    for (i, q) in qs.iter().enumerate() {
        let dq = q.degree().expect("nonzero");
        for m in monomials_of_degree(n, d - dq) {
            cols.push((i, m));
        }
    }
    let mut a = Matrix::zeros(rows_mono.len(), cols.len());
    for (k, (i, m)) in cols.iter().enumerate() {
        for (qm, &c) in qs[*i].raw_terms() {
            a.set(row_of[&qm.mul(m)], k, c);
        }
    }
    let b: Vec<u32> = rows_mono
        .iter()
        .map(|m| g.raw_terms().get(m).copied().unwrap_or(0))
        .collect();
    let Some(x) = linalg::solve(ctx, &a, &b) else {
        return Ok(None);
    };
    let mut cof: Vec<Vec<(Monomial, u32)>> = vec![Vec::new(); qs.len()];
    for (k, (i, m)) in cols.iter().enumerate() {
        cof[*i].push((m.clone(), x[k]));
    }
    let pairs: Vec<_> = qs
        .iter()
        .zip(cof)
        .map(|(q, t)| (q.clone(), MultiPoly::from_raw_terms(ctx, n, t)))
        .filter(|(_, p)| !p.is_zero())
        .collect();
    if pairs.is_empty() {
        return Ok(None);
    }
    Factorization::new(pairs, g.clone()).map(Some)
}

/// Searches for small factorizations of the form `g` with `r` ascending.
/// Ansätze: a minimal variable cover (always succeeds, fixes the largest
/// `r` tried), linear subspaces of codimension `r` contained in `V(g)` over
/// `k_1..k_ext_degree` (exhaustive when the candidate count fits the share
/// of the budget, seeded random otherwise) and, for `deg g >= 4`, random
/// quadrics with cofactors solved linearly. Budget 0 finds nothing.
pub fn rank_upper(g: &MultiPoly, search_budget: u64, seed: u64, ext_degree: u32) -> Result<Option<Witness>> {
    let d = check_form(g)?;
    if d < 2 {
        return Err(RankError::DegreeTooLow(d));
    }
    if search_budget == 0 {
        return Ok(None);
    }
    let cover = variable_cover_witness(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = search_budget;
    let max_r = cover.r();
    for r in 1..max_r {
        let last = r + 1 == max_r;
        let mut allot = if last { remaining } else { remaining.div_ceil(2) };
        for e in 1..=ext_degree.max(1) {
            let Ok(ctx) = g.ctx().extend(e) else { break };
            let gk = g.base_change(&ctx)?;
            let search = SubspaceSearch {
                compiled: gk.compile(&ctx)?,
                ctx,
                g: gk,
                target: g,
            };
            let share = allot.div_ceil((ext_degree.max(1) - e + 1) as u64);
            let (found, used) = search.run(r, share, &mut rng)?;
            allot = allot.saturating_sub(used);
            remaining = remaining.saturating_sub(used);
            if let Some(f) = found {
                return Ok(Some(Witness {
                    factorization: f,
                    ansatz: format!("linear-subspace over {}", search.ctx.spec()),
                }));
            }
        }
        if d >= 4 && allot > 0 {
            let tries = (allot / 64).max(1);
            for _ in 0..tries {
                let qs: Vec<MultiPoly> = (0..r)
                    .map(|_| MultiPoly::random(g.ctx(), g.nvars(), 2, true, rng.gen()))
                    .filter(|q| !q.is_zero())
                    .collect();
                remaining = remaining.saturating_sub(64);
                if qs.len() < r {
                    continue;
                }
                if let Some(f) = solve_cofactors(g, &qs)? {
                    return Ok(Some(Witness {
                        factorization: f,
                        ansatz: "quadric-cofactors".into(),
                    }));
                }
            }
        }
    }
    Ok(Some(Witness {
        factorization: cover,
        ansatz: "variable-cover".into(),
    }))
}

/// Lower bound from the singular locus of `V(g)`: `r` products force a
/// common zero locus of `2r` forms inside `Sing`, so `R(g) >= ceil(N/2)`
/// when `Sing` is empty and `R(g) >= ceil((codim + 1)/2)` otherwise
/// (codimension inside `V(g)`).
pub fn rank_lower_via_sing(g: &MultiPoly, report: &SingularReport) -> Result<(u32, &'static str)> {
    let expected = g.to_string();
    if report.poly != expected || report.nvars != g.nvars() {
        return Err(RankError::MismatchedVariety {
            expected,
            found: report.poly.clone(),
        });
    }
    if !report.confident {
        return Ok((1, METHOD_DEGENERATE));
    }
    let n = g.nvars() as i64;
    let lo = match (report.empty, report.codim) {
        (true, _) => (n + 1) / 2,
        (false, Some(c)) => (c + 2) / 2,
        (false, None) => 1,
    };
    Ok((lo.max(1) as u32, METHOD_SING))
}

pub fn rank_of(f: &MultiPoly) -> Result<RankInterval> {
    rank_of_with(f, &RankOptions::default())
}

/// Bracket for `R(F) = R(top part of F)`.
pub fn rank_of_with(f: &MultiPoly, opts: &RankOptions) -> Result<RankInterval> {
    rank_of_reusing(f, opts, None)
}

/// As [`rank_of_with`], taking an already computed singular report of the
/// top part (ignored when it concerns another polynomial).
pub fn rank_of_reusing(f: &MultiPoly, opts: &RankOptions, known: Option<&SingularReport>) -> Result<RankInterval> {
    let d = f.degree().unwrap_or(0);
    if d < 2 {
        return Err(RankError::DegreeTooLow(d));
    }
    let g = f.top_homogeneous()?;
    if d == 2 && g.ctx().characteristic() != 2 {
        let qr = quadratic_rank(&g)?;
        return Ok(RankInterval {
            lo: qr.rank,
            hi: qr.rank,
            witness: qr.witness,
            lo_method: METHOD_QUADRATIC,
            hi_method: METHOD_QUADRATIC,
            ansatz: "congruence-diagonalization".into(),
            singular: None,
        });
    }
    let (witness, hi_method, ansatz) = match rank_upper(&g, opts.search_budget, opts.seed, opts.ext_degree)? {
        Some(w) => (w.factorization, METHOD_SEARCH, w.ansatz),
        None => (variable_cover_witness(&g)?, METHOD_DEGENERATE, "variable-cover".to_string()),
    };
    let hi = witness.r() as u32;
    let computed = match known {
        Some(r) if r.poly == g.to_string() && r.nvars == g.nvars() => Ok(r.clone()),
        _ => singular::c_regularity(&g, opts.sing_nmax, opts.budget),
    };
    let (report, (mut lo, mut lo_method)) = match computed {
        Ok(rep) => {
            let b = rank_lower_via_sing(&g, &rep)?;
            (Some(rep), b)
        }
        Err(SingularError::BudgetExceeded { .. }) => (None, (1, METHOD_DEGENERATE)),
        Err(e) => return Err(e.into()),
    };
    if lo > hi {
        // the dimension estimate was wrong; keep only the trivial bound
        lo = 1;
        lo_method = METHOD_DEGENERATE;
    }
    Ok(RankInterval {
        lo,
        hi,
        witness,
        lo_method,
        hi_method,
        ansatz,
        singular: report,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub poly: String,
    pub t: String,
    pub homogenized: String,
    pub rank_f: u32,
    pub rank_hat: u32,
}

/// `R(F) <= R(F_t) <= R(F) + 1` for a quadratic `F`, `F_t` the
/// homogenization of `F - t`.
pub fn sandwich_check(f: &MultiPoly, t: &FieldElement) -> Result<SandwichReport> {
    if f.degree() != Some(2) {
        return Err(RankError::NotQuadratic);
    }
    let rank_f = quadratic_rank(&f.top_homogeneous()?)?.rank;
    let hat = f.homogenize(t)?.poly;
    let rank_hat = quadratic_rank(&hat)?.rank;
    if rank_hat < rank_f || rank_hat > rank_f + 1 {
        return Err(RankError::SandwichViolation { rank_f, rank_hat });
    }
    Ok(SandwichReport {
        poly: f.to_string(),
        t: t.to_string(),
        homogenized: hat.to_string(),
        rank_f,
        rank_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;

    fn poly(text: &str, p: u64, nvars: usize) -> MultiPoly {
        MultiPoly::parse(text, &make_field(p, 1).unwrap(), nvars).unwrap()
    }

    #[test]
    fn quadratic_examples() {
        let q = quadratic_rank(&poly("x0*x1 + x2*x3", 3, 4)).unwrap();
        assert_eq!((q.matrix_rank, q.rank), (4, 2));
        assert_eq!(quadratic_rank(&poly("x0^2", 5, 1)).unwrap().rank, 1);
        assert_eq!(
            quadratic_rank(&poly("x0*x1", 2, 2)).unwrap_err(),
            RankError::CharacteristicTwo
        );
        assert_eq!(
            quadratic_rank(&poly("x0*x1 + x0", 3, 2)).unwrap_err(),
            RankError::NotQuadratic
        );
    }

    #[test]
    fn sum_of_squares_needs_extension() {
        // x0^2 + x1^2 over F_3 splits only over F_9
        let q = quadratic_rank(&poly("x0^2 + x1^2", 3, 2)).unwrap();
        assert_eq!(q.rank, 1);
        assert_eq!(q.witness.field().size(), 9);
        // x0^2 - x1^2 splits over F_3
        let q = quadratic_rank(&poly("x0^2 + 2*x1^2", 3, 2)).unwrap();
        assert_eq!(q.witness.field().size(), 3);
    }

    #[test]
    fn rank_of_examples() {
        let r = rank_of(&poly("x0*x1 + x0 + 1", 3, 2)).unwrap();
        assert_eq!((r.lo, r.hi), (1, 1));
        assert_eq!(rank_of(&poly("2", 3, 2)).unwrap_err(), RankError::DegreeTooLow(0));
        let r = rank_of(&poly("x0^3 + x1^3 + x2^3 + x3^3", 7, 4)).unwrap();
        assert_eq!((r.lo, r.hi), (2, 2));
        assert_eq!(r.lo_method, METHOD_SING);
    }

    #[test]
    fn upper_examples() {
        let g = poly("x0*x1^2 + x0*x2*x3", 5, 4);
        let w = rank_upper(&g, 10, 0, 1).unwrap().unwrap();
        assert_eq!(w.factorization.r(), 1);
        assert_eq!(w.factorization.pairs()[0].0, poly("x0", 5, 4));

        let g = poly("x0^3 + x1^3", 7, 2);
        let w = rank_upper(&g, 1000, 0, 1).unwrap().unwrap();
        assert_eq!(w.factorization.r(), 1);
        let (l, p) = &w.factorization.pairs()[0];
        assert_eq!(l.to_string(), "x0 + x1");
        assert_eq!(p, &poly("x0^2 - x0*x1 + x1^2", 7, 2));

        let g = MultiPoly::random(&make_field(5, 1).unwrap(), 4, 3, true, 1);
        assert!(rank_upper(&g, 0, 0, 1).unwrap().is_none());
    }

    #[test]
    fn lower_examples() {
        let q = poly("x0*x1 + x2*x3", 3, 4);
        let rep = singular::c_regularity(&q, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(rank_lower_via_sing(&q, &rep).unwrap(), (2, METHOD_SING));

        let g = poly("x0*x1*x2 + x0*x3*x4", 3, 5);
        let rep = singular::c_regularity(&g, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(rank_lower_via_sing(&g, &rep).unwrap().0, 1);
        assert!(matches!(
            rank_lower_via_sing(&q, &rep),
            Err(RankError::MismatchedVariety { .. })
        ));
        let mut unsure = rep.clone();
        unsure.confident = false;
        assert_eq!(rank_lower_via_sing(&g, &unsure).unwrap(), (1, METHOD_DEGENERATE));
    }

    #[test]
    fn sandwich_examples() {
        let f3 = make_field(3, 1).unwrap();
        let f = poly("x0*x1", 3, 2);
        let s = sandwich_check(&f, &f3.one()).unwrap();
        assert_eq!((s.rank_f, s.rank_hat), (1, 2));
        let s = sandwich_check(&f, &f3.zero()).unwrap();
        assert_eq!((s.rank_f, s.rank_hat), (1, 1));
    }

    #[test]
    fn factorization_rejects_bad_witnesses() {
        let t = poly("x0*x1", 3, 2);
        let bad = Factorization::new(vec![(poly("x0", 3, 2), poly("x0", 3, 2))], t.clone());
        assert!(matches!(bad, Err(RankError::InvalidWitness(_))));
        let deg = Factorization::new(vec![(poly("1", 3, 2), t.clone())], t);
        assert!(matches!(deg, Err(RankError::InvalidWitness(_))));
    }
}
