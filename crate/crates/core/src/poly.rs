//! Sparse multivariate polynomials over a [`FieldCtx`].
//!
//! Terms are kept in a map from exponent vectors to nonzero coefficient
//! indices, ordered graded-lexicographically. Printing lists terms from the
//! largest monomial down and is the canonical text form: parsing the printed
//! text gives back the same polynomial.
//!
//! Text grammar (whitespace ignored):
//!
//! ```text
//! poly   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := nat | 'g' ['^' nat] | 'y' ['^' nat] | 'x' nat ['^' nat] | 'z' ['^' nat]
//! ```
//!
//! `g` is the root of the base modulus (m > 1), `y` the root of the
//! extension modulus (n > 1), `z` the last variable. Naturals reduce mod p.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{Embedding, FieldCtx, FieldElement, FieldError, LOG_ZERO};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable {name} at position {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("coefficient {name} at position {pos} is not in the field")]
    CoefficientNotInField { name: String, pos: usize },
    #[error("operation needs a nonzero polynomial")]
    ZeroPolynomial,
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomial is not homogeneous")]
    NotHomogeneous,
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// Exponent vector, ordered by total degree then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn one(nvars: usize) -> Monomial {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, i: usize) -> Monomial {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self / other` when `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(Monomial)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials of total degree exactly `d` in `nvars` variables, ascending.
pub fn monomials_of_degree(nvars: usize, d: u32) -> Vec<Monomial> {
    fn rec(nvars: usize, i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if i + 1 == nvars {
            cur[i] = left;
            out.push(Monomial(cur.clone()));
            cur[i] = 0;
            return;
        }
        for e in 0..=left {
            cur[i] = e;
            rec(nvars, i + 1, left - e, cur, out);
        }
        cur[i] = 0;
    }
    if nvars == 0 {
        return if d == 0 { vec![Monomial(vec![])] } else { vec![] };
    }
    let mut out = Vec::new();
    rec(nvars, 0, d, &mut vec![0; nvars], &mut out);
    out.sort();
    out
}

#[derive(Clone)]
pub struct MultiPoly {
    ctx: FieldCtx,
    nvars: usize,
    terms: BTreeMap<Monomial, u32>,
}

impl PartialEq for MultiPoly {
    fn eq(&self, other: &Self) -> bool {
        self.ctx == other.ctx && self.nvars == other.nvars && self.terms == other.terms
    }
}

impl Eq for MultiPoly {}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiPoly[{}; {} vars]({})", self.ctx.spec(), self.nvars, self)
    }
}

/// `F - t` homogenized with the extra last variable `z`.
#[derive(Debug, Clone)]
pub struct HomogenizationResult {
    pub poly: MultiPoly,
    pub shift: FieldElement,
}

impl MultiPoly {
    pub fn zero(ctx: &FieldCtx, nvars: usize) -> MultiPoly {
        MultiPoly {
            ctx: ctx.clone(),
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(ctx: &FieldCtx, nvars: usize, c: &FieldElement) -> Result<MultiPoly> {
        if c.ctx() != ctx {
            return Err(FieldError::MixedFields.into());
        }
        Ok(MultiPoly::from_raw_terms(
            ctx,
            nvars,
            [(Monomial::one(nvars), c.raw())],
        ))
    }

    pub fn var(ctx: &FieldCtx, nvars: usize, i: usize) -> MultiPoly {
        MultiPoly::from_raw_terms(ctx, nvars, [(Monomial::var(nvars, i), 1)])
    }

    /// Sum of the given terms; repeated monomials accumulate.
    pub(crate) fn from_raw_terms(
        ctx: &FieldCtx,
        nvars: usize,
        terms: impl IntoIterator<Item = (Monomial, u32)>,
    ) -> MultiPoly {
        let mut out = MultiPoly::zero(ctx, nvars);
        for (m, c) in terms {
            debug_assert_eq!(m.0.len(), nvars);
            out.add_term(m, c);
        }
        out
    }

    pub fn from_terms(
        ctx: &FieldCtx,
        nvars: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, FieldElement)>,
    ) -> Result<MultiPoly> {
        let mut out = MultiPoly::zero(ctx, nvars);
        for (e, c) in terms {
            if c.ctx() != ctx {
                return Err(FieldError::MixedFields.into());
            }
            if e.len() != nvars {
                return Err(PolyError::DimensionMismatch {
                    expected: nvars,
                    got: e.len(),
                });
            }
            out.add_term(Monomial(e), c.raw());
        }
        Ok(out)
    }

    pub(crate) fn add_term(&mut self, m: Monomial, c: u32) {
        if c == 0 {
            return;
        }
        let ctx = &self.ctx;
        let slot = self.terms.entry(m);
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = ctx.raw_add(*o.get(), c);
                if s == 0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn ctx(&self) -> &FieldCtx {
        &self.ctx
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, FieldElement)> + '_ {
        self.terms
            .iter()
            .map(|(m, &c)| (m, self.ctx.element(c as u64).expect("stored in range")))
    }

    pub(crate) fn raw_terms(&self) -> &BTreeMap<Monomial, u32> {
        &self.terms
    }

    pub fn coefficient(&self, exps: &[u32]) -> FieldElement {
        let c = self.terms.get(&Monomial(exps.to_vec())).copied().unwrap_or(0);
        self.ctx.element(c as u64).expect("in range")
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(Monomial::degree);
        match degs.next() {
            None => true,
            Some(d) => degs.all(|e| e == d),
        }
    }

    /// Variables that occur in some term.
    pub fn support_vars(&self) -> Vec<usize> {
        (0..self.nvars)
            .filter(|&i| self.terms.keys().any(|m| m.0[i] > 0))
            .collect()
    }

    fn check_same(&self, other: &MultiPoly) -> Result<()> {
        if self.ctx != other.ctx {
            return Err(FieldError::MixedFields.into());
        }
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: other.nvars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> MultiPoly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = self.ctx.raw_neg(*c);
        }
        out
    }

    pub fn sub(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &MultiPoly) -> Result<MultiPoly> {
        self.check_same(other)?;
        let mut out = MultiPoly::zero(&self.ctx, self.nvars);
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                out.add_term(a.mul(b), self.ctx.raw_mul(ca, cb));
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &FieldElement) -> Result<MultiPoly> {
        if c.ctx() != &self.ctx {
            return Err(FieldError::MixedFields.into());
        }
        Ok(self.scale_raw(c.raw()))
    }

    pub(crate) fn scale_raw(&self, c: u32) -> MultiPoly {
        MultiPoly::from_raw_terms(
            &self.ctx,
            self.nvars,
            self.terms
                .iter()
                .map(|(m, &a)| (m.clone(), self.ctx.raw_mul(a, c))),
        )
    }

    pub fn pow(&self, e: u32) -> MultiPoly {
        let mut acc = MultiPoly::from_raw_terms(&self.ctx, self.nvars, [(Monomial::one(self.nvars), 1)]);
        for _ in 0..e {
            acc = acc.mul(self).expect("same ring");
        }
        acc
    }

    /// Value at a point whose coordinates lie in a field containing the
    /// coefficient field. Term-by-term; see [`CompiledPoly`] for sweeps.
    pub fn evaluate(&self, point: &[FieldElement]) -> Result<FieldElement> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: point.len(),
            });
        }
        let target = match point.first() {
            Some(x) => x.ctx().clone(),
            None => self.ctx.clone(),
        };
        if point.iter().any(|x| x.ctx() != &target) {
            return Err(FieldError::MixedFields.into());
        }
        let emb = self.ctx.embedding_into(&target)?;
        let mut acc = 0u32;
        for (m, &c) in &self.terms {
            let mut t = emb.apply_raw(c);
            for (x, &e) in point.iter().zip(&m.0) {
                if e > 0 {
                    t = target.raw_mul(t, target.raw_pow(x.raw(), e as u64));
                }
            }
            acc = target.raw_add(acc, t);
        }
        Ok(target.element(acc as u64)?)
    }

    /// Sum of the terms of top total degree.
    pub fn top_homogeneous(&self) -> Result<MultiPoly> {
        let d = self.degree().ok_or(PolyError::ZeroPolynomial)?;
        Ok(MultiPoly {
            ctx: self.ctx.clone(),
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == d)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        })
    }

    /// Homogenization of `self - t` in `nvars + 1` variables, the new last
    /// variable being `z`. The result lives over the field of `t`.
    pub fn homogenize(&self, t: &FieldElement) -> Result<HomogenizationResult> {
        let d = self.degree().ok_or(PolyError::ZeroPolynomial)?;
        let base = self.base_change(t.ctx())?;
        let ctx = t.ctx().clone();
        let shifted = base.sub(&MultiPoly::constant(&ctx, self.nvars, t)?)?;
        let terms = shifted.terms.iter().map(|(m, &c)| {
            let mut e = m.0.clone();
            e.push(d - m.degree());
            (Monomial(e), c)
        });
        Ok(HomogenizationResult {
            poly: MultiPoly::from_raw_terms(&ctx, self.nvars + 1, terms),
            shift: t.clone(),
        })
    }

    /// Formal partial derivatives in characteristic p.
    pub fn partials(&self) -> Vec<MultiPoly> {
        let p = self.ctx.characteristic();
        (0..self.nvars)
            .map(|i| {
                let terms = self.terms.iter().filter_map(|(m, &c)| {
                    let e = m.0[i];
                    if e % p == 0 {
                        return None;
                    }
                    let mut m2 = m.clone();
                    m2.0[i] -= 1;
                    let k = self.ctx.from_int((e % p) as i64).raw();
                    Some((m2, self.ctx.raw_mul(c, k)))
                });
                MultiPoly::from_raw_terms(&self.ctx, self.nvars, terms)
            })
            .collect()
    }

    /// Same polynomial with coefficients mapped into an extension field.
    pub fn base_change(&self, target: &FieldCtx) -> Result<MultiPoly> {
        if target == &self.ctx {
            return Ok(self.clone());
        }
        let emb: Embedding = self.ctx.embedding_into(target)?;
        Ok(MultiPoly {
            ctx: target.clone(),
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, &c)| (m.clone(), emb.apply_raw(c)))
                .collect(),
        })
    }

    /// Substitute a value for the last variable and drop it.
    pub fn specialize_last(&self, value: &FieldElement) -> Result<MultiPoly> {
        if value.ctx() != &self.ctx {
            return Err(FieldError::MixedFields.into());
        }
        if self.nvars == 0 {
            return Err(PolyError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let last = self.nvars - 1;
        let terms = self.terms.iter().map(|(m, &c)| {
            let pw = self.ctx.raw_pow(value.raw(), m.0[last] as u64);
            (Monomial(m.0[..last].to_vec()), self.ctx.raw_mul(c, pw))
        });
        Ok(MultiPoly::from_raw_terms(&self.ctx, last, terms))
    }

    /// Same polynomial viewed in `nvars` variables (new ones appended).
    pub fn with_nvars(&self, nvars: usize) -> Result<MultiPoly> {
        if nvars < self.nvars && self.support_vars().iter().any(|&v| v >= nvars) {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: nvars,
            });
        }
        let terms = self.terms.iter().map(|(m, &c)| {
            let mut e = m.0.clone();
            e.resize(nvars, 0);
            (Monomial(e), c)
        });
        Ok(MultiPoly::from_raw_terms(&self.ctx, nvars, terms))
    }

    /// Substitute `x_i -> sum_j forms[i][j] x_j` (raw coefficients in this
    /// field); the result has `forms[0].len()` variables.
    pub(crate) fn linear_substitute(&self, forms: &[Vec<u32>]) -> MultiPoly {
        assert_eq!(forms.len(), self.nvars);
        let new_n = forms.first().map_or(0, Vec::len);
        let linear: Vec<MultiPoly> = forms
            .iter()
            .map(|row| {
                MultiPoly::from_raw_terms(
                    &self.ctx,
                    new_n,
                    row.iter()
                        .enumerate()
                        .map(|(j, &c)| (Monomial::var(new_n, j), c)),
                )
            })
            .collect();
        let mut powers: Vec<Vec<MultiPoly>> = linear
            .iter()
            .map(|l| vec![MultiPoly::from_raw_terms(&self.ctx, new_n, [(Monomial::one(new_n), 1)]), l.clone()])
            .collect();
        let mut out = MultiPoly::zero(&self.ctx, new_n);
        for (m, &c) in &self.terms {
            let mut t = MultiPoly::from_raw_terms(&self.ctx, new_n, [(Monomial::one(new_n), c)]);
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap().mul(&linear[i]).expect("same ring");
                    powers[i].push(next);
                }
                t = t.mul(&powers[i][e as usize]).expect("same ring");
            }
            out = out.add(&t).expect("same ring");
        }
        out
    }

    /// Parse the text grammar over `ctx` in `nvars` variables.
    pub fn parse(text: &str, ctx: &FieldCtx, nvars: usize) -> Result<MultiPoly> {
        Parser::new(text, ctx, nvars).parse()
    }

    /// Highest variable index mentioned in `text` plus one (for inferring
    /// `nvars`); `z` does not count.
    pub fn infer_nvars(text: &str) -> usize {
        let bytes = text.as_bytes();
        let mut best = 0;
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'x' {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if let Ok(k) = text[i + 1..j].parse::<usize>() {
                    best = best.max(k + 1);
                }
                i = j;
            } else {
                i += 1;
            }
        }
        best
    }

    /// Uniform independent coefficients on every monomial of degree `<= d`
    /// (or exactly `d` when `homogeneous`), drawn in ascending monomial order
    /// from a ChaCha8 stream seeded with `seed`.
    pub fn random(
        ctx: &FieldCtx,
        nvars: usize,
        d: u32,
        homogeneous: bool,
        seed: u64,
    ) -> MultiPoly {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let degrees = if homogeneous { d..=d } else { 0..=d };
        let mut out = MultiPoly::zero(ctx, nvars);
        for k in degrees {
            for m in monomials_of_degree(nvars, k) {
                let c = rng.gen_range(0..ctx.size()) as u32;
                out.add_term(m, c);
            }
        }
        out
    }

    pub fn compile(&self, target: &FieldCtx) -> Result<CompiledPoly> {
        CompiledPoly::new(self, target)
    }
}

/// `random_poly` under its operation name.
pub fn random_poly(
    ctx: &FieldCtx,
    nvars: usize,
    d: u32,
    homogeneous: bool,
    seed: u64,
) -> MultiPoly {
    MultiPoly::random(ctx, nvars, d, homogeneous, seed)
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let p = self.ctx.characteristic();
        let m = self.ctx.base_degree();
        let n = self.ctx.degree();
        let mut parts = Vec::new();
        for (mono, &c) in self.terms.iter().rev() {
            let mono_s: Vec<String> = mono
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    if e == 1 {
                        format!("x{i}")
                    } else {
                        format!("x{i}^{e}")
                    }
                })
                .collect();
            // coefficient digits: highest power of y, then of g, first
            let mut x = c;
            let mut digits = Vec::new();
            for j in 0..n {
                for i in 0..m {
                    digits.push((j, i, x % p));
                    x /= p;
                }
            }
            for &(j, i, d) in digits.iter().rev() {
                if d == 0 {
                    continue;
                }
                let mut factors = Vec::new();
                if d != 1 {
                    factors.push(d.to_string());
                }
                match i {
                    0 => {}
                    1 => factors.push("g".into()),
                    _ => factors.push(format!("g^{i}")),
                }
                match j {
                    0 => {}
                    1 => factors.push("y".into()),
                    _ => factors.push(format!("y^{j}")),
                }
                factors.extend(mono_s.iter().cloned());
                if factors.is_empty() {
                    factors.push("1".into());
                }
                parts.push(factors.join("*"));
            }
        }
        f.write_str(&parts.join(" + "))
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    ctx: &'a FieldCtx,
    nvars: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, ctx: &'a FieldCtx, nvars: usize) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            ctx,
            nvars,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(PolyError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        })
    }

    fn nat(&mut self) -> Result<u64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a natural number");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<u64>().map_err(|_| PolyError::Syntax {
                    pos: start,
                    msg: "number too large".into(),
                })
    }

    fn exponent(&mut self) -> Result<u64> {
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.nat()
        } else {
            Ok(1)
        }
    }

    fn parse(mut self) -> Result<MultiPoly> {
        let mut out = MultiPoly::zero(self.ctx, self.nvars);
        let mut sign = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                true
            }
            Some(b'+') => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        loop {
            let (m, c) = self.term()?;
            let c = if sign { self.ctx.raw_neg(c) } else { c };
            out.add_term(m, c);
            match self.peek() {
                None => break,
                Some(b'+') => {
                    self.pos += 1;
                    sign = false;
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = true;
                }
                Some(_) => return self.err("expected '+', '-' or end of input"),
            }
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Monomial, u32)> {
        let mut exps = vec![0u32; self.nvars];
        let mut coeff = 1u32;
        loop {
            self.factor(&mut exps, &mut coeff)?;
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok((Monomial(exps), coeff))
    }

    fn factor(&mut self, exps: &mut [u32], coeff: &mut u32) -> Result<()> {
        let start = {
            self.skip_ws();
            self.pos
        };
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                let v = self.nat()? % self.ctx.characteristic() as u64;
                *coeff = self.ctx.raw_mul(*coeff, v as u32);
            }
            Some(b'g') => {
                self.pos += 1;
                let g = self.ctx.base_generator().ok_or_else(|| {
                    PolyError::CoefficientNotInField {
                        name: "g".into(),
                        pos: start,
                    }
                })?;
                let e = self.exponent()?;
                *coeff = self.ctx.raw_mul(*coeff, self.ctx.raw_pow(g.raw(), e));
            }
            Some(b'y') => {
                self.pos += 1;
                if self.ctx.degree() == 1 {
                    return Err(PolyError::CoefficientNotInField {
                        name: "y".into(),
                        pos: start,
                    });
                }
                let y = self.ctx.base_size() as u32;
                let e = self.exponent()?;
                *coeff = self.ctx.raw_mul(*coeff, self.ctx.raw_pow(y, e));
            }
            Some(b'x') => {
                self.pos += 1;
                let idx = self.nat()?;
                if idx as usize >= self.nvars {
                    return Err(PolyError::UnknownVariable {
                        name: format!("x{idx}"),
                        pos: start,
                    });
                }
                let e = self.exponent()?;
                exps[idx as usize] += e as u32;
            }
            Some(b'z') => {
                self.pos += 1;
                if self.nvars == 0 {
                    return Err(PolyError::UnknownVariable {
                        name: "z".into(),
                        pos: start,
                    });
                }
                let e = self.exponent()?;
                exps[self.nvars - 1] += e as u32;
            }
            Some(_) => return self.err("expected a number, coefficient or variable"),
            None => return self.err("unexpected end of input"),
        }
        Ok(())
    }
}

struct CompiledTerm {
    coeff_log: u32,
    /// (variable, exponent mod (Q-1)); only positive exponents stored.
    factors: Vec<(usize, u32)>,
}

/// A polynomial specialized for repeated evaluation over one point field.
///
/// Terms are grouped by the power of the last variable, so a sweep can
/// evaluate the coefficients in the leading variables once per prefix and
/// then run a univariate evaluation per value of the last coordinate.
pub struct CompiledPoly {
    target: FieldCtx,
    nvars: usize,
    order: u32,
    /// slices[e]: terms whose last-variable exponent is e (last var removed)
    slices: Vec<Vec<CompiledTerm>>,
}

impl CompiledPoly {
    pub fn new(poly: &MultiPoly, target: &FieldCtx) -> Result<CompiledPoly> {
        let emb = poly.ctx.embedding_into(target)?;
        let order = target.tables().order().max(1);
        let nvars = poly.nvars;
        let mut slices: Vec<Vec<CompiledTerm>> = Vec::new();
        for (m, &c) in &poly.terms {
            let (e_last, lead) = if nvars == 0 {
                (0usize, &m.0[..])
            } else {
                (m.0[nvars - 1] as usize, &m.0[..nvars - 1])
            };
            if slices.len() <= e_last {
                slices.resize_with(e_last + 1, Vec::new);
            }
            let factors = lead
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| (v, ((e as u64 - 1) % order as u64 + 1) as u32))
                .collect();
            slices[e_last].push(CompiledTerm {
                coeff_log: target.tables().log(emb.apply_raw(c)),
                factors,
            });
        }
        if slices.is_empty() {
            slices.push(Vec::new());
        }
        Ok(CompiledPoly {
            target: target.clone(),
            nvars,
            order,
            slices,
        })
    }

    pub fn target(&self) -> &FieldCtx {
        &self.target
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Number of coefficient slots filled by [`CompiledPoly::prefix_values`].
    pub(crate) fn width(&self) -> usize {
        self.slices.len()
    }

    /// Coefficients of the powers of the last variable, given the logs of
    /// the leading coordinates (`LOG_ZERO` for zero).
    #[inline]
    pub(crate) fn prefix_values(&self, logs: &[u32], out: &mut [u32]) {
        let t = self.target.tables();
        let order = self.order as u64;
        for (slot, terms) in out.iter_mut().zip(&self.slices) {
            let mut acc = 0u32;
            'term: for term in terms {
                let mut l = term.coeff_log as u64;
                for &(v, e) in &term.factors {
                    let lv = logs[v];
                    if lv == LOG_ZERO {
                        continue 'term;
                    }
                    l += lv as u64 * e as u64;
                }
                acc = t.add(acc, t.exp((l % order) as u32));
            }
            *slot = acc;
        }
    }

    /// Univariate evaluation in the last coordinate.
    #[inline]
    pub(crate) fn eval_last(&self, coeffs: &[u32], x: u32, xlog: u32) -> u32 {
        let mut acc = coeffs[0];
        if x == 0 || coeffs.len() == 1 {
            return acc;
        }
        let t = self.target.tables();
        let mut pl = 0u32;
        for &c in &coeffs[1..] {
            pl += xlog;
            if pl >= self.order {
                pl -= self.order;
            }
            if c != 0 {
                let lc = t.log(c) + pl;
                acc = t.add(acc, t.exp(lc));
            }
        }
        acc
    }

    /// Value at a point given by raw coordinates in the target field.
    pub(crate) fn eval_raw(&self, point: &[u32]) -> u32 {
        let t = self.target.tables();
        let logs: Vec<u32> = point.iter().map(|&x| t.log(x)).collect();
        let mut coeffs = vec![0u32; self.width()];
        if self.nvars == 0 {
            self.prefix_values(&logs, &mut coeffs);
            return coeffs[0];
        }
        self.prefix_values(&logs[..self.nvars - 1], &mut coeffs);
        let x = point[self.nvars - 1];
        self.eval_last(&coeffs, x, logs[self.nvars - 1])
    }

    pub fn evaluate(&self, point: &[FieldElement]) -> Result<FieldElement> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: point.len(),
            });
        }
        if point.iter().any(|x| x.ctx() != &self.target) {
            return Err(FieldError::MixedFields.into());
        }
        let raw: Vec<u32> = point.iter().map(FieldElement::raw).collect();
        Ok(self.target.element(self.eval_raw(&raw) as u64)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;
    use proptest::prelude::*;

    fn f(p: u64) -> FieldCtx {
        make_field(p, 1).unwrap()
    }

    #[test]
    fn parse_basic_terms() {
        let ctx = f(3);
        let p = MultiPoly::parse("x0*x1 + 2", &ctx, 2).unwrap();
        assert_eq!(p.num_terms(), 2);
        assert_eq!(p.coefficient(&[1, 1]).index(), 1);
        assert_eq!(p.coefficient(&[0, 0]).index(), 2);
        assert_eq!(p.to_string(), "x0*x1 + 2");
    }

    #[test]
    fn parse_cancellation_and_reduction() {
        let ctx = f(3);
        assert!(MultiPoly::parse("x0^2 - x0^2", &ctx, 1).unwrap().is_zero());
        let p = MultiPoly::parse("4*x0 - 5", &ctx, 1).unwrap();
        assert_eq!(p.to_string(), "x0 + 1");
        let p = MultiPoly::parse("-x0", &ctx, 1).unwrap();
        assert_eq!(p.to_string(), "2*x0");
    }

    #[test]
    fn parse_errors() {
        let ctx = f(3);
        assert_eq!(
            MultiPoly::parse("x5", &ctx, 2).unwrap_err(),
            PolyError::UnknownVariable {
                name: "x5".into(),
                pos: 0
            }
        );
        assert!(matches!(
            MultiPoly::parse("x0 + * x1", &ctx, 2),
            Err(PolyError::Syntax { pos: 5, .. })
        ));
        assert!(matches!(
            MultiPoly::parse("g*x0", &ctx, 1),
            Err(PolyError::CoefficientNotInField { .. })
        ));
        assert!(matches!(
            MultiPoly::parse("x0 x1", &ctx, 2),
            Err(PolyError::Syntax { .. })
        ));
    }

    #[test]
    fn parse_z_is_last_variable() {
        let ctx = f(5);
        let p = MultiPoly::parse("x0*x1 - z^2", &ctx, 3).unwrap();
        assert_eq!(p.to_string(), "x0*x1 + 4*x2^2");
    }

    #[test]
    fn extension_coefficients_round_trip() {
        let f4 = make_field(2, 2).unwrap();
        let p = MultiPoly::parse("g*x0 + x0 + g^2", &f4, 1).unwrap();
        // g^2 = g + 1
        assert_eq!(p.to_string(), "g*x0 + x0 + g + 1");
        assert_eq!(MultiPoly::parse(&p.to_string(), &f4, 1).unwrap(), p);
        let k = make_field(3, 1).unwrap().extend(2).unwrap();
        let q = MultiPoly::parse("2*y*x0^2 + y + 1", &k, 1).unwrap();
        assert_eq!(MultiPoly::parse(&q.to_string(), &k, 1).unwrap(), q);
    }

    #[test]
    fn evaluate_by_hand() {
        let f4 = make_field(2, 2).unwrap();
        let p = MultiPoly::parse("x0*x1", &f4, 2).unwrap();
        let g = f4.base_generator().unwrap();
        let g1 = g.add(&f4.one()).unwrap();
        assert_eq!(p.evaluate(&[g, g1]).unwrap(), f4.one());

        let f3 = f(3);
        let p = MultiPoly::parse("x0^2 + x1", &f3, 2).unwrap();
        assert_eq!(
            p.evaluate(&[f3.from_int(1), f3.from_int(2)]).unwrap(),
            f3.zero()
        );
        let c = MultiPoly::parse("x0*x1 + 2", &f3, 2).unwrap();
        assert_eq!(c.evaluate(&[f3.zero(), f3.zero()]).unwrap(), f3.from_int(2));
        assert!(matches!(
            c.evaluate(&[f3.zero()]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn top_part_and_homogenization() {
        let ctx = f(3);
        let p = MultiPoly::parse("x0^2 + x1 + 1", &ctx, 2).unwrap();
        assert_eq!(p.top_homogeneous().unwrap().to_string(), "x0^2");
        let q = MultiPoly::parse("x0*x1 + x0 + x1", &f(2), 2).unwrap();
        assert_eq!(q.top_homogeneous().unwrap().to_string(), "x0*x1");
        assert_eq!(
            MultiPoly::zero(&ctx, 2).top_homogeneous().unwrap_err(),
            PolyError::ZeroPolynomial
        );

        let h = MultiPoly::parse("x0*x1", &ctx, 2)
            .unwrap()
            .homogenize(&ctx.from_int(1))
            .unwrap();
        assert_eq!(h.poly.to_string(), "x0*x1 + 2*x2^2");
        let h0 = MultiPoly::parse("x0^2 + x1", &ctx, 2)
            .unwrap()
            .homogenize(&ctx.zero())
            .unwrap();
        assert_eq!(h0.poly.to_string(), "x0^2 + x1*x2");
        assert!(h0.poly.is_homogeneous());
    }

    #[test]
    fn char_p_partials() {
        let ctx = f(3);
        let p = MultiPoly::parse("x0^3", &ctx, 1).unwrap();
        assert!(p.partials()[0].is_zero());
        let q = MultiPoly::parse("x0*x1", &ctx, 2).unwrap();
        let d: Vec<String> = q.partials().iter().map(|x| x.to_string()).collect();
        assert_eq!(d, ["x1", "x0"]);
    }

    #[test]
    fn random_is_deterministic_and_homogeneous() {
        let ctx = f(5);
        let a = MultiPoly::random(&ctx, 4, 3, false, 42);
        let b = MultiPoly::random(&ctx, 4, 3, false, 42);
        assert_eq!(a, b);
        let h = MultiPoly::random(&ctx, 4, 3, true, 9);
        assert!(h.terms().all(|(m, _)| m.degree() == 3));
    }

    #[test]
    fn random_linear_over_f2_is_uniform() {
        // 8 polynomials a + b*x1 + c*x0; each should appear 125 times in
        // expectation with sigma = sqrt(1000 * 1/8 * 7/8) ~ 10.46
        let ctx = f(2);
        let mut counts = std::collections::HashMap::new();
        for seed in 0..1000 {
            *counts
                .entry(MultiPoly::random(&ctx, 2, 1, false, seed).to_string())
                .or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 8);
        let sigma = (1000.0f64 * 0.125 * 0.875).sqrt();
        for (k, c) in counts {
            assert!((c as f64 - 125.0).abs() <= 5.0 * sigma, "{k}: {c}");
        }
    }

    #[test]
    fn compiled_matches_naive_evaluation() {
        let base = f(3);
        let k2 = base.extend(2).unwrap();
        for seed in 0..20 {
            let p = MultiPoly::random(&base, 3, 4, false, seed);
            let c = p.compile(&k2).unwrap();
            for a in k2.elements().step_by(2) {
                for b in k2.elements().step_by(3) {
                    let pt = [a.clone(), b.clone(), k2.element(seed % 9).unwrap()];
                    assert_eq!(c.evaluate(&pt).unwrap(), p.evaluate(&pt).unwrap());
                }
            }
        }
    }

    #[test]
    fn linear_substitution_composes() {
        let ctx = f(5);
        let p = MultiPoly::parse("x0*x1 + x1^2", &ctx, 2).unwrap();
        // x0 -> x0 + x1, x1 -> 2*x1
        let s = p.linear_substitute(&[vec![1, 1], vec![0, 2]]);
        assert_eq!(s.to_string(), "2*x0*x1 + x1^2");
    }

    fn arb_poly() -> impl Strategy<Value = (u64, u64, u32)> {
        (0u64..1000, prop_oneof![Just(2u64), Just(3), Just(5), Just(7)], 1u32..5)
    }

    proptest! {
        #[test]
        fn print_parse_round_trip((seed, p, d) in arb_poly()) {
            let ctx = f(p);
            let poly = MultiPoly::random(&ctx, 4, d, seed % 2 == 0, seed);
            let back = MultiPoly::parse(&poly.to_string(), &ctx, 4).unwrap();
            prop_assert_eq!(back, poly);
        }

        #[test]
        fn print_parse_round_trip_f9((seed, d) in (0u64..1000, 1u32..4)) {
            let ctx = make_field(3, 2).unwrap();
            let poly = MultiPoly::random(&ctx, 3, d, false, seed);
            let back = MultiPoly::parse(&poly.to_string(), &ctx, 3).unwrap();
            prop_assert_eq!(back, poly);
        }

        #[test]
        fn evaluation_is_a_ring_homomorphism((seed, p, d) in arb_poly(), pt in proptest::collection::vec(0u64..1000, 3)) {
            let ctx = f(p);
            let k = ctx.extend(2).unwrap();
            let a = MultiPoly::random(&ctx, 3, d, false, seed);
            let b = MultiPoly::random(&ctx, 3, d, false, seed + 1);
            let v: Vec<FieldElement> = pt.iter().map(|&i| k.element(i % k.size()).unwrap()).collect();
            let (va, vb) = (a.evaluate(&v).unwrap(), b.evaluate(&v).unwrap());
            prop_assert_eq!(a.add(&b).unwrap().evaluate(&v).unwrap(), va.add(&vb).unwrap());
            prop_assert_eq!(a.mul(&b).unwrap().evaluate(&v).unwrap(), va.mul(&vb).unwrap());
        }

        #[test]
        fn homogenization_specializes((seed, p, d) in arb_poly(), pt in proptest::collection::vec(0u64..1000, 4)) {
            let ctx = f(p);
            let poly = MultiPoly::random(&ctx, 3, d, false, seed);
            prop_assume!(poly.degree().unwrap_or(0) >= 1);
            let t = ctx.element(pt[3] % p).unwrap();
            let h = poly.homogenize(&t).unwrap().poly;
            prop_assert!(h.is_homogeneous());
            prop_assert_eq!(h.degree(), poly.degree());
            // z = 0 recovers the top homogeneous part
            prop_assert_eq!(h.specialize_last(&ctx.zero()).unwrap(), poly.top_homogeneous().unwrap());
            // z = 1 recovers P - t
            let v: Vec<FieldElement> = pt[..3].iter().map(|&i| ctx.element(i % p).unwrap()).collect();
            let mut v1 = v.clone();
            v1.push(ctx.one());
            prop_assert_eq!(h.evaluate(&v1).unwrap(), poly.evaluate(&v).unwrap().sub(&t).unwrap());
        }

        #[test]
        fn top_part_has_full_degree((seed, p, d) in arb_poly()) {
            let poly = MultiPoly::random(&f(p), 3, d, false, seed);
            prop_assume!(!poly.is_zero());
            let top = poly.top_homogeneous().unwrap();
            prop_assert_eq!(top.degree(), poly.degree());
            let rest = poly.sub(&top).unwrap();
            prop_assert!(rest.degree().is_none_or(|r| r < poly.degree().unwrap()));
        }

        #[test]
        fn euler_identity((seed, d) in (0u64..1000, 1u32..5), p in prop_oneof![Just(5u64), Just(7), Just(11)]) {
            // sum x_i dF/dx_i = d F for homogeneous F, p not dividing d
            let ctx = f(p);
            let poly = MultiPoly::random(&ctx, 3, d, true, seed);
            let mut lhs = MultiPoly::zero(&ctx, 3);
            for (i, dp) in poly.partials().iter().enumerate() {
                lhs = lhs.add(&MultiPoly::var(&ctx, 3, i).mul(dp).unwrap()).unwrap();
            }
            prop_assert_eq!(lhs, poly.scale(&ctx.from_int(d as i64)).unwrap());
        }
    }
}
