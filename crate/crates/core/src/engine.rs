//! Exhaustive sweeps over `V(k_n) = k_n^N`.
//!
//! Points are visited in base-Q positional order with `x_0` most
//! significant. The space of leading coordinates `(x_0, .., x_{N-2})` is cut
//! into a fixed number of contiguous chunks; each chunk is processed by one
//! rayon task with a private accumulator, and accumulators are merged in
//! chunk order. Results therefore do not depend on the number of workers.

use rayon::prelude::*;

use crate::field::{FieldCtx, LOG_ZERO};
use crate::poly::CompiledPoly;

const MAX_CHUNKS: u64 = 512;

/// Leading-coordinate odometer with cached logs. The first `fixed`
/// digits never move.
struct Prefix {
    digits: Vec<u32>,
    logs: Vec<u32>,
    fixed: usize,
}

impl Prefix {
    fn at(ctx: &FieldCtx, head: &[u32], len: usize, mut index: u64) -> Prefix {
        let q = ctx.size();
        let mut digits = vec![0u32; len];
        let fixed = head.len().min(len);
        digits[..fixed].copy_from_slice(&head[..fixed]);
        for d in digits[fixed..].iter_mut().rev() {
            *d = (index % q) as u32;
            index /= q;
        }
        let t = ctx.tables();
        let logs = digits.iter().map(|&x| t.log(x)).collect();
        Prefix { digits, logs, fixed }
    }

    fn advance(&mut self, ctx: &FieldCtx) {
        let q = ctx.size() as u32;
        let t = ctx.tables();
        for i in (self.fixed..self.digits.len()).rev() {
            self.digits[i] += 1;
            if self.digits[i] == q {
                self.digits[i] = 0;
                self.logs[i] = LOG_ZERO;
            } else {
                self.logs[i] = t.log(self.digits[i]);
                return;
            }
        }
    }
}

fn chunk_ranges(total: u64) -> Vec<(u64, u64)> {
    let chunks = total.clamp(1, MAX_CHUNKS);
    (0..chunks)
        .map(|c| (c * total / chunks, (c + 1) * total / chunks))
        .filter(|(a, b)| a < b)
        .collect()
}

fn prefix_total(ctx: &FieldCtx, nvars: usize) -> u64 {
    if nvars <= 1 {
        1
    } else {
        ctx.size().pow(nvars as u32 - 1)
    }
}

/// Fiber sizes of `poly` over all of `k^N`, indexed by value.
pub(crate) fn histogram(poly: &CompiledPoly) -> Vec<u64> {
    let ctx = poly.target().clone();
    let q = ctx.size() as usize;
    let nvars = poly.nvars();
    if nvars == 0 {
        let mut h = vec![0u64; q];
        h[poly.eval_raw(&[]) as usize] = 1;
        return h;
    }
    let plen = nvars - 1;
    let ranges = chunk_ranges(prefix_total(&ctx, nvars));
    let parts: Vec<Vec<u64>> = ranges
        .par_iter()
        .map(|&(start, end)| {
            let t = ctx.tables();
            let mut hist = vec![0u64; q];
            let mut pre = Prefix::at(&ctx, &[], plen, start);
            let mut coeffs = vec![0u32; poly.width()];
            for _ in start..end {
                poly.prefix_values(&pre.logs, &mut coeffs);
                if coeffs.len() == 1 {
                    hist[coeffs[0] as usize] += q as u64;
                } else {
                    for x in 0..q as u32 {
                        let v = poly.eval_last(&coeffs, x, t.log(x));
                        hist[v as usize] += 1;
                    }
                }
                pre.advance(&ctx);
            }
            hist
        })
        .collect();
    let mut out = vec![0u64; q];
    for part in parts {
        for (o, c) in out.iter_mut().zip(part) {
            *o += c;
        }
    }
    out
}

/// Result of a common-zero sweep.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct CommonZeros {
    /// points where every polynomial of the main list vanishes
    pub main: u64,
    /// those where the extra polynomial vanishes too
    pub with_extra: u64,
    /// normalized (first nonzero coordinate 1) nonzero points of the second
    /// set, in sweep order, at most `cap`
    pub points: Vec<Vec<u32>>,
}

impl CommonZeros {
    fn absorb(&mut self, other: CommonZeros, cap: usize) {
        self.main += other.main;
        self.with_extra += other.with_extra;
        for pt in other.points {
            if self.points.len() < cap {
                self.points.push(pt);
            }
        }
    }
}

/// Sweeps the points `head ++ free` of `k^nvars`.
fn sweep(
    ctx: &FieldCtx,
    nvars: usize,
    head: &[u32],
    main: &[&CompiledPoly],
    extra: Option<&CompiledPoly>,
    cap: usize,
) -> CommonZeros {
    let q = ctx.size() as usize;
    let plen = nvars.saturating_sub(1);
    let free_prefix = plen.saturating_sub(head.len());
    let last_fixed = head.len() == nvars && nvars > 0;
    let total_pre = ctx.size().pow(free_prefix as u32);
    let ranges = chunk_ranges(total_pre);
    let parts: Vec<CommonZeros> = ranges
        .par_iter()
        .map(|&(start, end)| {
            let t = ctx.tables();
            let mut acc = CommonZeros::default();
            let mut pre = Prefix::at(ctx, head, plen, start);
            let mut coeffs: Vec<Vec<u32>> = main.iter().map(|p| vec![0; p.width()]).collect();
            let mut extra_coeffs = extra.map(|p| vec![0; p.width()]).unwrap_or_default();
            let mut point = vec![0u32; nvars];
            let mut ready = vec![false; main.len()];
            let last_range = if nvars == 0 {
                0..1
            } else if last_fixed {
                head[nvars - 1]..head[nvars - 1] + 1
            } else {
                0..q as u32
            };
            for _ in start..end {
                // coefficient vectors are filled lazily per prefix
                ready.fill(false);
                let mut extra_ready = false;
                for x in last_range.clone() {
                    let xlog = t.log(x);
                    let mut all = true;
                    for (i, p) in main.iter().enumerate() {
                        if !ready[i] {
                            p.prefix_values(&pre.logs, &mut coeffs[i]);
                            ready[i] = true;
                        }
                        let v = if nvars == 0 {
                            coeffs[i][0]
                        } else {
                            p.eval_last(&coeffs[i], x, xlog)
                        };
                        if v != 0 {
                            all = false;
                            break;
                        }
                    }
                    if !all {
                        continue;
                    }
                    acc.main += 1;
                    let extra_zero = match extra {
                        None => true,
                        Some(p) => {
                            if !extra_ready {
                                p.prefix_values(&pre.logs, &mut extra_coeffs);
                                extra_ready = true;
                            }
                            let v = if nvars == 0 {
                                extra_coeffs[0]
                            } else {
                                p.eval_last(&extra_coeffs, x, xlog)
                            };
                            v == 0
                        }
                    };
                    if !extra_zero {
                        continue;
                    }
                    acc.with_extra += 1;
                    if acc.points.len() < cap {
                        point[..plen].copy_from_slice(&pre.digits);
                        if nvars > 0 {
                            point[plen] = x;
                        }
                        if point.iter().find(|&&c| c != 0) == Some(&1) {
                            acc.points.push(point.clone());
                        }
                    }
                }
                pre.advance(ctx);
            }
            acc
        })
        .collect();
    let mut out = CommonZeros::default();
    for part in parts {
        out.absorb(part, cap);
    }
    out
}

/// Count affine common zeros of `main` (all in the same number of
/// variables), and of `main` together with `extra`.
pub(crate) fn common_zeros(
    ctx: &FieldCtx,
    nvars: usize,
    main: &[&CompiledPoly],
    extra: Option<&CompiledPoly>,
    cap: usize,
) -> CommonZeros {
    sweep(ctx, nvars, &[], main, extra, cap)
}

/// Like [`common_zeros`] but over projective space: only the normalized
/// representatives `(0, .., 0, 1, *)` are visited, so counts are numbers of
/// projective points. Meant for homogeneous inputs.
pub(crate) fn projective_common_zeros(
    ctx: &FieldCtx,
    nvars: usize,
    main: &[&CompiledPoly],
    extra: Option<&CompiledPoly>,
    cap: usize,
) -> CommonZeros {
    let mut out = CommonZeros::default();
    for k in 0..nvars {
        let mut head = vec![0u32; k + 1];
        head[k] = 1;
        let cap_left = cap - out.points.len();
        out.absorb(sweep(ctx, nvars, &head, main, extra, cap_left), cap);
    }
    out
}

/// Affine zeros of a single polynomial.
pub(crate) fn zero_count(poly: &CompiledPoly) -> u64 {
    common_zeros(poly.target(), poly.nvars(), &[poly], None, 0).main
}

/// Projective zeros of a single homogeneous polynomial.
pub(crate) fn projective_zero_count(poly: &CompiledPoly) -> u64 {
    projective_common_zeros(poly.target(), poly.nvars(), &[poly], None, 0).main
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;
    use crate::poly::MultiPoly;

    #[test]
    fn chunks_cover_range() {
        for total in [1u64, 2, 7, 511, 512, 513, 100_000] {
            let r = chunk_ranges(total);
            assert_eq!(r.first().unwrap().0, 0);
            assert_eq!(r.last().unwrap().1, total);
            for w in r.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
        }
    }

    #[test]
    fn histogram_matches_pointwise_evaluation() {
        let f3 = make_field(3, 1).unwrap();
        let k = f3.extend(2).unwrap();
        let p = MultiPoly::random(&f3, 3, 3, false, 5);
        let c = p.compile(&k).unwrap();
        let h = histogram(&c);
        let mut naive = vec![0u64; 9];
        for a in k.elements() {
            for b in k.elements() {
                for d in k.elements() {
                    let v = p.evaluate(&[a.clone(), b.clone(), d]).unwrap();
                    naive[v.index() as usize] += 1;
                }
            }
        }
        assert_eq!(h, naive);
    }

    #[test]
    fn projective_sweep_matches_affine() {
        let f3 = make_field(3, 1).unwrap();
        let k = f3.extend(2).unwrap();
        for seed in 0..5 {
            let h = MultiPoly::random(&f3, 4, 3, true, seed);
            let c = h.compile(&k).unwrap();
            let affine = zero_count(&c);
            let proj = projective_zero_count(&c);
            assert_eq!(affine, 1 + 8 * proj);
            let parts: Vec<_> = h.partials().iter().map(|p| p.compile(&k).unwrap()).collect();
            let refs: Vec<_> = parts.iter().collect();
            let a = common_zeros(&k, 4, &refs, Some(&c), 100_000);
            let p = projective_common_zeros(&k, 4, &refs, Some(&c), 100_000);
            assert_eq!(a.with_extra, 1 + 8 * p.with_extra);
            assert_eq!(a.main, 1 + 8 * p.main);
            let mut ap = a.points.clone();
            let mut pp = p.points.clone();
            ap.sort();
            pp.sort();
            assert_eq!(ap, pp);
        }
    }

    #[test]
    fn zero_variables() {
        let f5 = make_field(5, 1).unwrap();
        let p = MultiPoly::parse("3", &f5, 0).unwrap();
        let h = histogram(&p.compile(&f5).unwrap());
        assert_eq!(h, [0, 0, 0, 1, 0]);
    }
}
