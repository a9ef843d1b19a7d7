//! Finite fields `F_q = F_p[g]/(h)` and their extensions `k_n = F_q[y]/(f)`.
//!
//! Elements are identified with their index in base-q positional order of
//! the coefficient vector (constant coefficient least significant). Since
//! each `F_q` coefficient is itself indexed base-p, the index of an element
//! of `k_n` is simply its base-p digit string, and `F_q` sits inside every
//! `k_n` as the indices `0..q`.
//!
//! Arithmetic runs on precomputed log/exp tables and digit-wise addition
//! tables. Moduli are the lexicographically least monic irreducibles
//! (comparing from the highest non-leading coefficient down), so every run
//! produces the same tables and the same element order.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Default cap on the number of elements of a constructed field.
pub const DEFAULT_MAX_FIELD_SIZE: u64 = 1 << 20;

/// Marker stored in log tables for the zero element.
pub(crate) const LOG_ZERO: u32 = u32::MAX;

/// Addition tables are split into digit groups of at most this many elements.
const ADD_GROUP_LIMIT: u64 = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("field of size {required} exceeds the element budget {budget}")]
    SizeOverflow { required: u128, budget: u64 },
    #[error("extension degree must be at least 1")]
    InvalidDegree,
    #[error("division by zero")]
    DivisionByZero,
    #[error("operands belong to different fields")]
    MixedFields,
    #[error("element index {index} out of range for a field of size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("invalid field spec {0:?}: expected p^m or p^m:n")]
    BadSpec(String),
}

pub type Result<T> = std::result::Result<T, FieldError>;

/// Digit-wise addition mod p on element indices.
#[derive(Debug)]
enum Adder {
    /// p = 2: indices are bit strings.
    Xor,
    /// Prime field: plain modular addition.
    Prime(u32),
    /// Groups of base-p digits, each with a full addition table.
    Groups(Vec<AddGroup>),
}

#[derive(Debug)]
struct AddGroup {
    /// p^(first digit of the group)
    radix: u32,
    size: u32,
    table: Vec<u32>,
}

/// Arithmetic tables for one field.
#[derive(Debug)]
pub(crate) struct Tables {
    p: u32,
    size: u32,
    adder: Adder,
    neg: Vec<u32>,
    /// exp[i] = gen^i for i in 0..2(size-1)
    exp: Vec<u32>,
    log: Vec<u32>,
}

impl Tables {
    fn prime(p: u32) -> Tables {
        let size = p;
        let order = (p - 1) as u64;
        let gen = if p == 2 {
            1
        } else {
            let factors = prime_factors(order);
            (2..p)
                .find(|&g| {
                    factors
                        .iter()
                        .all(|&r| pow_mod(g as u64, order / r, p as u64) != 1)
                })
                .expect("prime field has a primitive root")
        };
        let adder = if p == 2 { Adder::Xor } else { Adder::Prime(p) };
        let neg = (0..p).map(|a| if a == 0 { 0 } else { p - a }).collect();
        let (exp, log) = fill_exp_log(size, |x| ((x as u64 * gen as u64) % p as u64) as u32);
        Tables {
            p,
            size,
            adder,
            neg,
            exp,
            log,
        }
    }

    /// Tables for `ground[y]/(modulus)`; `modulus` is monic with ground-field
    /// indices as coefficients, ascending.
    fn extension(ground: &Tables, modulus: &[u32]) -> Tables {
        let k = modulus.len() - 1;
        let g = ground.size as u64;
        let size64 = g.pow(k as u32);
        let size = size64 as u32;
        let p = ground.p;
        let digits = count_digits(size64, p as u64);
        let adder = build_adder(p, digits, size64);

        let decode = |x: u32| -> Vec<u32> {
            let mut v = vec![0u32; k];
            let mut x = x as u64;
            for c in v.iter_mut() {
                *c = (x % g) as u32;
                x /= g;
            }
            v
        };
        let encode = |v: &[u32]| -> u32 {
            v.iter().rev().fold(0u64, |acc, &c| acc * g + c as u64) as u32
        };
        let mul_slow = |a: u32, b: u32| -> u32 {
            let prod = upoly::mul(ground, &decode(a), &decode(b));
            let mut r = upoly::rem(ground, &prod, modulus);
            r.resize(k, 0);
            encode(&r)
        };

        let order = size64 - 1;
        let factors = prime_factors(order);
        let is_primitive = |c: u32| {
            c != 0
                && factors.iter().all(|&r| {
                    let mut acc = 1u32;
                    let mut base = c;
                    let mut e = order / r;
                    while e > 0 {
                        if e & 1 == 1 {
                            acc = mul_slow(acc, base);
                        }
                        base = mul_slow(base, base);
                        e >>= 1;
                    }
                    acc != 1
                })
        };
        // The class of y first (cheap to multiply by), then index order.
        let y = if k > 1 { ground.size } else { 1 };
        let gen = if size64 == 2 {
            1
        } else if k > 1 && is_primitive(y) {
            y
        } else {
            (2..size)
                .find(|&c| is_primitive(c))
                .expect("finite field has a primitive element")
        };

        let step = |x: u32| -> u32 {
            if gen == y && k > 1 {
                // multiply by y: shift up and reduce by the monic modulus
                let v = decode(x);
                let top = v[k - 1];
                let mut out = vec![0u32; k];
                for i in (1..k).rev() {
                    out[i] = v[i - 1];
                }
                if top != 0 {
                    for (i, o) in out.iter_mut().enumerate() {
                        let t = ground.mul(top, modulus[i]);
                        *o = ground.sub(*o, t);
                    }
                }
                encode(&out)
            } else {
                mul_slow(x, gen)
            }
        };
        let (exp, log) = fill_exp_log(size, step);

        let neg = (0..size)
            .map(|a| {
                let v: Vec<u32> = decode(a).iter().map(|&c| ground.neg(c)).collect();
                encode(&v)
            })
            .collect();
        Tables {
            p,
            size,
            adder,
            neg,
            exp,
            log,
        }
    }

    #[inline]
    pub(crate) fn add(&self, a: u32, b: u32) -> u32 {
        match &self.adder {
            Adder::Xor => a ^ b,
            Adder::Prime(p) => {
                let s = a + b;
                if s >= *p {
                    s - p
                } else {
                    s
                }
            }
            Adder::Groups(groups) => {
                let mut out = 0;
                for grp in groups {
                    let da = (a / grp.radix) % grp.size;
                    let db = (b / grp.radix) % grp.size;
                    out += grp.table[(da * grp.size + db) as usize] * grp.radix;
                }
                out
            }
        }
    }

    #[inline]
    pub(crate) fn neg(&self, a: u32) -> u32 {
        self.neg[a as usize]
    }

    #[inline]
    pub(crate) fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub(crate) fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
    }

    #[inline]
    pub(crate) fn inv(&self, a: u32) -> Option<u32> {
        if a == 0 {
            return None;
        }
        let order = self.size - 1;
        Some(self.exp[((order - self.log[a as usize]) % order) as usize])
    }

    pub(crate) fn pow(&self, a: u32, mut e: u64) -> u32 {
        let mut acc = 1;
        let mut base = a;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    #[inline]
    pub(crate) fn log(&self, a: u32) -> u32 {
        self.log[a as usize]
    }

    #[inline]
    pub(crate) fn exp(&self, i: u32) -> u32 {
        self.exp[i as usize]
    }

    #[inline]
    pub(crate) fn order(&self) -> u32 {
        self.size - 1
    }
}

fn fill_exp_log(size: u32, step: impl Fn(u32) -> u32) -> (Vec<u32>, Vec<u32>) {
    let order = (size - 1) as usize;
    let mut exp = vec![0u32; 2 * order.max(1)];
    let mut log = vec![LOG_ZERO; size as usize];
    let mut x = 1u32;
    for i in 0..order {
        exp[i] = x;
        log[x as usize] = i as u32;
        x = step(x);
    }
    debug_assert_eq!(x, 1, "generator order mismatch");
    for i in 0..order {
        exp[order + i] = exp[i];
    }
    if order == 0 {
        exp[0] = 1;
    }
    (exp, log)
}

fn build_adder(p: u32, digits: u32, size: u64) -> Adder {
    if p == 2 {
        return Adder::Xor;
    }
    if digits == 1 {
        return Adder::Prime(p);
    }
    let mut per_group = 1u32;
    while (p as u64).pow(per_group + 1) <= ADD_GROUP_LIMIT && per_group < digits {
        per_group += 1;
    }
    let mut groups = Vec::new();
    let mut first = 0;
    while first < digits {
        let width = per_group.min(digits - first);
        let gsize = p.pow(width);
        let mut table = vec![0u32; (gsize * gsize) as usize];
        for a in 0..gsize {
            for b in 0..gsize {
                let (mut x, mut y, mut out, mut radix) = (a, b, 0, 1);
                for _ in 0..width {
                    out += ((x % p + y % p) % p) * radix;
                    x /= p;
                    y /= p;
                    radix *= p;
                }
                table[(a * gsize + b) as usize] = out;
            }
        }
        groups.push(AddGroup {
            radix: p.pow(first),
            size: gsize,
            table,
        });
        first += width;
    }
    debug_assert_eq!((p as u64).pow(digits), size);
    Adder::Groups(groups)
}

fn count_digits(mut size: u64, p: u64) -> u32 {
    let mut d = 0;
    while size > 1 {
        size /= p;
        d += 1;
    }
    d
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

/// Dense univariate polynomials over a table-backed ground field, ascending
/// coefficients. Used for modulus search and the slow reference product.
pub(crate) mod upoly {
    use super::Tables;

    pub fn trim(v: &mut Vec<u32>) {
        while v.last() == Some(&0) {
            v.pop();
        }
    }

    pub fn mul(f: &Tables, a: &[u32], b: &[u32]) -> Vec<u32> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![0u32; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] = f.add(out[i + j], f.mul(x, y));
            }
        }
        trim(&mut out);
        out
    }

    /// Remainder modulo a nonzero polynomial.
    pub fn rem(f: &Tables, a: &[u32], m: &[u32]) -> Vec<u32> {
        let mut r = a.to_vec();
        trim(&mut r);
        let mut m = m.to_vec();
        trim(&mut m);
        let dm = m.len() - 1;
        let lead_inv = f.inv(m[dm]).expect("nonzero modulus");
        while r.len() > dm && !r.is_empty() {
            let shift = r.len() - 1 - dm;
            let factor = f.mul(r[r.len() - 1], lead_inv);
            for (i, &c) in m.iter().enumerate() {
                r[shift + i] = f.sub(r[shift + i], f.mul(factor, c));
            }
            trim(&mut r);
        }
        r
    }

    pub fn mulmod(f: &Tables, a: &[u32], b: &[u32], m: &[u32]) -> Vec<u32> {
        rem(f, &mul(f, a, b), m)
    }

    pub fn powmod(f: &Tables, base: &[u32], mut e: u64, m: &[u32]) -> Vec<u32> {
        let mut acc = vec![1u32];
        let mut b = rem(f, base, m);
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(f, &acc, &b, m);
            }
            b = mulmod(f, &b, &b, m);
            e >>= 1;
        }
        rem(f, &acc, m)
    }

    pub fn sub(f: &Tables, a: &[u32], b: &[u32]) -> Vec<u32> {
        let n = a.len().max(b.len());
        let mut out: Vec<u32> = (0..n)
            .map(|i| {
                f.sub(
                    a.get(i).copied().unwrap_or(0),
                    b.get(i).copied().unwrap_or(0),
                )
            })
            .collect();
        trim(&mut out);
        out
    }

    pub fn gcd(f: &Tables, a: &[u32], b: &[u32]) -> Vec<u32> {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        trim(&mut a);
        trim(&mut b);
        while !b.is_empty() {
            let r = rem(f, &a, &b);
            a = b;
            b = r;
        }
        a
    }

    /// Rabin's test: `m` (monic, degree n >= 1) is irreducible over the
    /// ground field of size `q` iff `y^(q^n) = y mod m` and
    /// `gcd(y^(q^(n/r)) - y, m) = 1` for every prime `r | n`.
    pub fn is_irreducible(f: &Tables, m: &[u32], q: u64) -> bool {
        let n = m.len() - 1;
        if n == 1 {
            return true;
        }
        if m[0] == 0 {
            return false;
        }
        let y = vec![0u32, 1];
        // frob[i] = y^(q^i) mod m
        let mut frob = vec![rem(f, &y, m)];
        for i in 1..=n {
            let next = powmod(f, &frob[i - 1], q, m);
            frob.push(next);
        }
        if sub(f, &frob[n], &y).iter().any(|&c| c != 0) {
            return false;
        }
        super::prime_factors(n as u64).iter().all(|&r| {
            let diff = sub(f, &frob[n / r as usize], &y);
            let g = gcd(f, &diff, m);
            g.len() == 1
        })
    }

    /// Lexicographically least monic irreducible of degree `n`.
    pub fn least_irreducible(f: &Tables, n: usize) -> Vec<u32> {
        let q = f.size as u64;
        let total = q.pow(n as u32);
        for k in 0..total {
            let mut m = Vec::with_capacity(n + 1);
            let mut x = k;
            for _ in 0..n {
                m.push((x % q) as u32);
                x /= q;
            }
            m.push(1);
            if is_irreducible(f, &m, q) {
                return m;
            }
        }
        unreachable!("irreducible polynomials exist in every degree")
    }
}

#[derive(Debug)]
struct FieldInner {
    p: u32,
    m: u32,
    n: u32,
    q: u32,
    size: u32,
    max_size: u64,
    /// Monic, ascending, over F_p. For m = 1 this is the degenerate `g`.
    base_modulus: Vec<u32>,
    /// Monic, ascending, coefficients as F_q indices; `None` when n = 1.
    ext_modulus: Option<Vec<u32>>,
    base: Arc<Tables>,
    top: Arc<Tables>,
}

/// An immutable finite field context, cheap to clone and share.
#[derive(Clone)]
pub struct FieldCtx {
    inner: Arc<FieldInner>,
}

impl fmt::Debug for FieldCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldCtx({})", self.spec())
    }
}

impl PartialEq for FieldCtx {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.p == other.inner.p
                && self.inner.m == other.inner.m
                && self.inner.n == other.inner.n
                && self.inner.base_modulus == other.inner.base_modulus
                && self.inner.ext_modulus == other.inner.ext_modulus)
    }
}

impl Eq for FieldCtx {}

type CacheKey = (u32, u32, u32, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, FieldCtx>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, FieldCtx>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn check_size(p: u64, degree: u64, budget: u64) -> Result<u64> {
    let required = (p as u128).checked_pow(degree as u32).unwrap_or(u128::MAX);
    if degree > 64 || required > budget as u128 || required > u32::MAX as u128 {
        return Err(FieldError::SizeOverflow { required, budget });
    }
    Ok(required as u64)
}

/// `F_q` with `q = p^m`, using the default element budget.
pub fn make_field(p: u64, m: u32) -> Result<FieldCtx> {
    FieldCtx::new(p, m, DEFAULT_MAX_FIELD_SIZE)
}

impl FieldCtx {
    /// `F_{p^m}` with an explicit element budget.
    pub fn new(p: u64, m: u32, max_size: u64) -> Result<FieldCtx> {
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        if m == 0 {
            return Err(FieldError::InvalidDegree);
        }
        check_size(p, m as u64, max_size)?;
        let key = (p as u32, m, 1, max_size);
        if let Some(ctx) = cache().lock().unwrap().get(&key) {
            return Ok(ctx.clone());
        }
        let prime = Tables::prime(p as u32);
        let base_modulus = upoly::least_irreducible(&prime, m as usize);
        let base = if m == 1 {
            Arc::new(prime)
        } else {
            Arc::new(Tables::extension(&prime, &base_modulus))
        };
        let ctx = FieldCtx {
            inner: Arc::new(FieldInner {
                p: p as u32,
                m,
                n: 1,
                q: base.size,
                size: base.size,
                max_size,
                base_modulus,
                ext_modulus: None,
                base: base.clone(),
                top: base,
            }),
        };
        cache().lock().unwrap().insert(key, ctx.clone());
        Ok(ctx)
    }

    /// The extension of degree `n` of this field's ground field `F_q`
    /// composed with this field's own degree: extending `k_a` by `n`
    /// gives `k_{a n}`, always presented directly over `F_q`.
    pub fn extend(&self, n: u32) -> Result<FieldCtx> {
        if n == 0 {
            return Err(FieldError::InvalidDegree);
        }
        let total = self.inner.n as u64 * n as u64;
        if total == self.inner.n as u64 {
            return Ok(self.clone());
        }
        let budget = self.inner.max_size;
        check_size(self.inner.q as u64, total, budget)?;
        let key = (self.inner.p, self.inner.m, total as u32, budget);
        if let Some(ctx) = cache().lock().unwrap().get(&key) {
            return Ok(ctx.clone());
        }
        let base_ctx = self.base();
        let ground = &base_ctx.inner.base;
        let (ext_modulus, top) = if total == 1 {
            (None, ground.clone())
        } else {
            let modulus = upoly::least_irreducible(ground, total as usize);
            let top = Arc::new(Tables::extension(ground, &modulus));
            (Some(modulus), top)
        };
        let ctx = FieldCtx {
            inner: Arc::new(FieldInner {
                p: self.inner.p,
                m: self.inner.m,
                n: total as u32,
                q: self.inner.q,
                size: top.size,
                max_size: budget,
                base_modulus: self.inner.base_modulus.clone(),
                ext_modulus,
                base: ground.clone(),
                top,
            }),
        };
        cache().lock().unwrap().insert(key, ctx.clone());
        Ok(ctx)
    }

    /// The ground field `F_q` (degree 1 over itself).
    pub fn base(&self) -> FieldCtx {
        if self.inner.n == 1 {
            return self.clone();
        }
        FieldCtx::new(self.inner.p as u64, self.inner.m, self.inner.max_size)
            .expect("ground field of a valid field is valid")
    }

    pub fn characteristic(&self) -> u32 {
        self.inner.p
    }

    /// m, with q = p^m.
    pub fn base_degree(&self) -> u32 {
        self.inner.m
    }

    /// n, the degree over F_q.
    pub fn degree(&self) -> u32 {
        self.inner.n
    }

    /// q = p^m.
    pub fn base_size(&self) -> u64 {
        self.inner.q as u64
    }

    /// q^n, the number of elements.
    pub fn size(&self) -> u64 {
        self.inner.size as u64
    }

    pub fn max_size(&self) -> u64 {
        self.inner.max_size
    }

    pub fn base_modulus(&self) -> &[u32] {
        &self.inner.base_modulus
    }

    pub fn ext_modulus(&self) -> Option<&[u32]> {
        self.inner.ext_modulus.as_deref()
    }

    /// Text form `p^m:n`.
    pub fn spec(&self) -> String {
        format!("{}^{}:{}", self.inner.p, self.inner.m, self.inner.n)
    }

    pub(crate) fn tables(&self) -> &Tables {
        &self.inner.top
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement {
            ctx: self.clone(),
            value: 0,
        }
    }

    pub fn one(&self) -> FieldElement {
        FieldElement {
            ctx: self.clone(),
            value: 1,
        }
    }

    /// Element by its positional index.
    pub fn element(&self, index: u64) -> Result<FieldElement> {
        if index >= self.size() {
            return Err(FieldError::IndexOutOfRange {
                index,
                size: self.size(),
            });
        }
        Ok(FieldElement {
            ctx: self.clone(),
            value: index as u32,
        })
    }

    /// Element from an integer, reduced mod p.
    pub fn from_int(&self, v: i64) -> FieldElement {
        let p = self.inner.p as i64;
        FieldElement {
            ctx: self.clone(),
            value: v.rem_euclid(p) as u32,
        }
    }

    /// The class of `g` in `F_q` (a root of the base modulus); `None` when
    /// m = 1.
    pub fn base_generator(&self) -> Option<FieldElement> {
        (self.inner.m > 1).then(|| FieldElement {
            ctx: self.clone(),
            value: self.inner.p,
        })
    }

    /// All elements in positional order.
    pub fn elements(&self) -> Elements {
        self.elements_from(0)
    }

    /// The tail of [`FieldCtx::elements`] starting at position `offset`.
    pub fn elements_from(&self, offset: u64) -> Elements {
        Elements {
            ctx: self.clone(),
            next: offset.min(self.size()),
        }
    }

    #[inline]
    pub(crate) fn raw_add(&self, a: u32, b: u32) -> u32 {
        self.inner.top.add(a, b)
    }

    #[inline]
    pub(crate) fn raw_sub(&self, a: u32, b: u32) -> u32 {
        self.inner.top.sub(a, b)
    }

    #[inline]
    pub(crate) fn raw_neg(&self, a: u32) -> u32 {
        self.inner.top.neg(a)
    }

    #[inline]
    pub(crate) fn raw_mul(&self, a: u32, b: u32) -> u32 {
        self.inner.top.mul(a, b)
    }

    #[inline]
    pub(crate) fn raw_inv(&self, a: u32) -> Option<u32> {
        self.inner.top.inv(a)
    }

    pub(crate) fn raw_pow(&self, a: u32, e: u64) -> u32 {
        self.inner.top.pow(a, e)
    }

    /// Square root if one exists in this field (the smaller-index root).
    pub(crate) fn raw_sqrt(&self, a: u32) -> Option<u32> {
        if a == 0 {
            return Some(0);
        }
        let t = &self.inner.top;
        if self.inner.p == 2 {
            // Frobenius is bijective: sqrt(a) = a^(size/2)
            return Some(t.pow(a, self.size() / 2));
        }
        let l = t.log(a);
        if l % 2 == 1 {
            return None;
        }
        let r = t.exp(l / 2);
        Some(r.min(t.neg(r)))
    }

    /// Whether elements of `self` can be mapped into `target`: same ground
    /// field and the degree of `self` divides the degree of `target`.
    pub fn embeds_into(&self, target: &FieldCtx) -> bool {
        self.inner.p == target.inner.p
            && self.inner.m == target.inner.m
            && self.inner.base_modulus == target.inner.base_modulus
            && target.inner.n.is_multiple_of(self.inner.n)
    }

    /// Field embedding `self -> target` as an index table. `F_q` embeds as
    /// constants; higher `k_e` maps `y` to the first root (in positional
    /// order) of its modulus inside `target`.
    pub fn embedding_into(&self, target: &FieldCtx) -> Result<Embedding> {
        if !self.embeds_into(target) {
            return Err(FieldError::MixedFields);
        }
        if self == target || self.inner.n == 1 {
            return Ok(Embedding {
                map: None,
                target: target.clone(),
            });
        }
        let modulus = self.inner.ext_modulus.as_ref().expect("n > 1");
        let tt = &target.inner.top;
        let eval = |x: u32| {
            modulus
                .iter()
                .rev()
                .fold(0u32, |acc, &c| tt.add(tt.mul(acc, x), c))
        };
        let root = (0..target.inner.size)
            .find(|&x| eval(x) == 0)
            .expect("an irreducible of degree e splits in k_{ae}");
        let q = self.inner.q as u64;
        let e = self.inner.n as usize;
        let mut powers = vec![1u32; e];
        for i in 1..e {
            powers[i] = tt.mul(powers[i - 1], root);
        }
        let map = (0..self.inner.size as u64)
            .map(|mut x| {
                let mut acc = 0;
                for &pw in powers.iter() {
                    let c = (x % q) as u32;
                    x /= q;
                    acc = tt.add(acc, tt.mul(c, pw));
                }
                acc
            })
            .collect();
        Ok(Embedding {
            map: Some(map),
            target: target.clone(),
        })
    }

    /// Canonical text of an element index: an integer for prime fields,
    /// otherwise ascending powers of `g` (over F_p) and of `y` (over F_q).
    pub fn format_raw(&self, v: u32) -> String {
        let q = self.inner.q;
        if self.inner.n == 1 {
            return format_base(self.inner.p, self.inner.m, v);
        }
        let mut parts = Vec::new();
        let mut x = v;
        for j in 0..self.inner.n {
            let c = x % q;
            x /= q;
            if c == 0 {
                continue;
            }
            let cs = format_base(self.inner.p, self.inner.m, c);
            let cs = if cs.contains('+') {
                format!("({cs})")
            } else {
                cs
            };
            parts.push(match (j, c) {
                (0, _) => cs,
                (1, 1) => "y".to_string(),
                (1, _) => format!("{cs}*y"),
                (_, 1) => format!("y^{j}"),
                _ => format!("{cs}*y^{j}"),
            });
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join("+")
        }
    }

    /// Base modulus in ascending order, e.g. `1+g+g^2`.
    pub fn format_base_modulus(&self) -> String {
        format_univariate(&self.inner.base_modulus, "g", |c| c.to_string())
    }

    /// Extension modulus in ascending order, e.g. `2+y+y^2`.
    pub fn format_ext_modulus(&self) -> Option<String> {
        self.inner.ext_modulus.as_ref().map(|m| {
            format_univariate(m, "y", |c| {
                let s = format_base(self.inner.p, self.inner.m, c);
                if s.contains('+') {
                    format!("({s})")
                } else {
                    s
                }
            })
        })
    }

    fn wrap(&self, value: u32) -> FieldElement {
        FieldElement {
            ctx: self.clone(),
            value,
        }
    }
}

fn format_base(p: u32, m: u32, v: u32) -> String {
    if m == 1 {
        return v.to_string();
    }
    let mut parts = Vec::new();
    let mut x = v;
    for i in 0..m {
        let d = x % p;
        x /= p;
        if d == 0 {
            continue;
        }
        parts.push(match (i, d) {
            (0, _) => d.to_string(),
            (1, 1) => "g".to_string(),
            (1, _) => format!("{d}*g"),
            (_, 1) => format!("g^{i}"),
            _ => format!("{d}*g^{i}"),
        });
    }
    if parts.is_empty() {
        "0".to_string()
    } else {
        parts.join("+")
    }
}

fn format_univariate(coeffs: &[u32], var: &str, fmt_c: impl Fn(u32) -> String) -> String {
    let parts: Vec<String> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(i, &c)| {
            let cs = fmt_c(c);
            match (i, c) {
                (0, _) => cs,
                (1, 1) => var.to_string(),
                (1, _) => format!("{cs}*{var}"),
                (_, 1) => format!("{var}^{i}"),
                _ => format!("{cs}*{var}^{i}"),
            }
        })
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join("+")
    }
}

/// Parsed `p^m` or `p^m:n` text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    pub p: u64,
    pub m: u32,
    pub n: u32,
}

impl FieldSpec {
    pub fn parse(text: &str) -> Result<FieldSpec> {
        let bad = || FieldError::BadSpec(text.to_string());
        let (pm, n) = match text.trim().split_once(':') {
            Some((pm, n)) => (pm, n.trim().parse::<u32>().map_err(|_| bad())?),
            None => (text.trim(), 1),
        };
        let (p, m) = match pm.split_once('^') {
            Some((p, m)) => (
                p.trim().parse::<u64>().map_err(|_| bad())?,
                m.trim().parse::<u32>().map_err(|_| bad())?,
            ),
            None => (pm.trim().parse::<u64>().map_err(|_| bad())?, 1),
        };
        if n == 0 || m == 0 {
            return Err(bad());
        }
        Ok(FieldSpec { p, m, n })
    }

    /// The coefficient field `F_q`.
    pub fn base_field(&self, max_size: u64) -> Result<FieldCtx> {
        FieldCtx::new(self.p, self.m, max_size)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}:{}", self.p, self.m, self.n)
    }
}

/// Index map realizing a field embedding.
#[derive(Debug, Clone)]
pub struct Embedding {
    map: Option<Vec<u32>>,
    target: FieldCtx,
}

impl Embedding {
    #[inline]
    pub fn apply_raw(&self, v: u32) -> u32 {
        match &self.map {
            None => v,
            Some(m) => m[v as usize],
        }
    }

    pub fn apply(&self, x: &FieldElement) -> FieldElement {
        self.target.wrap(self.apply_raw(x.value))
    }

    pub fn target(&self) -> &FieldCtx {
        &self.target
    }
}

/// Restartable positional enumeration of a field.
#[derive(Debug, Clone)]
pub struct Elements {
    ctx: FieldCtx,
    next: u64,
}

impl Iterator for Elements {
    type Item = FieldElement;

    fn next(&mut self) -> Option<FieldElement> {
        if self.next >= self.ctx.size() {
            return None;
        }
        let v = self.next as u32;
        self.next += 1;
        Some(self.ctx.wrap(v))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = (self.ctx.size() - self.next) as usize;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for Elements {}

/// A field element tied to its context.
///
/// Comparing elements of different fields with `==` panics; use
/// [`FieldElement::try_eq`] to get an error instead.
#[derive(Clone)]
pub struct FieldElement {
    ctx: FieldCtx,
    value: u32,
}

impl FieldElement {
    pub fn ctx(&self) -> &FieldCtx {
        &self.ctx
    }

    /// Positional index in [`FieldCtx::elements`].
    pub fn index(&self) -> u64 {
        self.value as u64
    }

    pub(crate) fn raw(&self) -> u32 {
        self.value
    }

    /// Coefficient vector over F_q (length n), each as residues mod p
    /// (length m), ascending.
    pub fn coeffs(&self) -> Vec<Vec<u32>> {
        let p = self.ctx.inner.p;
        let mut x = self.value;
        (0..self.ctx.inner.n)
            .map(|_| {
                (0..self.ctx.inner.m)
                    .map(|_| {
                        let d = x % p;
                        x /= p;
                        d
                    })
                    .collect()
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn same(&self, other: &FieldElement) -> Result<()> {
        if self.ctx == other.ctx {
            Ok(())
        } else {
            Err(FieldError::MixedFields)
        }
    }

    pub fn try_eq(&self, other: &FieldElement) -> Result<bool> {
        self.same(other)?;
        Ok(self.value == other.value)
    }

    pub fn add(&self, other: &FieldElement) -> Result<FieldElement> {
        self.same(other)?;
        Ok(self.ctx.wrap(self.ctx.raw_add(self.value, other.value)))
    }

    pub fn sub(&self, other: &FieldElement) -> Result<FieldElement> {
        self.same(other)?;
        Ok(self.ctx.wrap(self.ctx.raw_sub(self.value, other.value)))
    }

    pub fn mul(&self, other: &FieldElement) -> Result<FieldElement> {
        self.same(other)?;
        Ok(self.ctx.wrap(self.ctx.raw_mul(self.value, other.value)))
    }

    pub fn neg(&self) -> FieldElement {
        self.ctx.wrap(self.ctx.raw_neg(self.value))
    }

    pub fn inv(&self) -> Result<FieldElement> {
        self.ctx
            .raw_inv(self.value)
            .map(|v| self.ctx.wrap(v))
            .ok_or(FieldError::DivisionByZero)
    }

    pub fn pow(&self, e: u64) -> FieldElement {
        self.ctx.wrap(self.ctx.raw_pow(self.value, e))
    }

    /// x -> x^q.
    pub fn frobenius(&self) -> FieldElement {
        self.pow(self.ctx.base_size())
    }
}

impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.try_eq(other)
            .expect("compared elements of different fields")
    }
}

impl Eq for FieldElement {}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in {}", self, self.ctx.spec())
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.ctx.format_raw(self.value))
    }
}
