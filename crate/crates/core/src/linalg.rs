//! Dense Gaussian elimination over a [`FieldCtx`].

use crate::field::FieldCtx;

/// Row-major matrix of raw field indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Matrix {
        let cols = rows.first().map_or(0, Vec::len);
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Reduced row echelon form in place; returns pivot columns.
    pub fn rref(&mut self, ctx: &FieldCtx) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(pr) = (r..self.rows).find(|&i| self.get(i, c) != 0) else {
                continue;
            };
            if pr != r {
                for j in 0..self.cols {
                    self.data.swap(pr * self.cols + j, r * self.cols + j);
                }
            }
            let inv = ctx.raw_inv(self.get(r, c)).expect("nonzero pivot");
            for j in c..self.cols {
                let v = ctx.raw_mul(self.get(r, j), inv);
                self.set(r, j, v);
            }
            for i in 0..self.rows {
                if i == r {
                    continue;
                }
                let f = self.get(i, c);
                if f == 0 {
                    continue;
                }
                for j in c..self.cols {
                    let v = ctx.raw_sub(self.get(i, j), ctx.raw_mul(f, self.get(r, j)));
                    self.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self, ctx: &FieldCtx) -> usize {
        self.clone().rref(ctx).len()
    }
}

/// Solve `A x = b`; `None` when inconsistent. Free variables are set to 0.
pub fn solve(ctx: &FieldCtx, a: &Matrix, b: &[u32]) -> Option<Vec<u32>> {
    assert_eq!(a.rows, b.len());
    let mut aug = Matrix::zeros(a.rows, a.cols + 1);
    for i in 0..a.rows {
        for j in 0..a.cols {
            aug.set(i, j, a.get(i, j));
        }
        aug.set(i, a.cols, b[i]);
    }
    let pivots = aug.rref(ctx);
    if pivots.last() == Some(&a.cols) {
        return None;
    }
    let mut x = vec![0u32; a.cols];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = aug.get(r, a.cols);
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;

    #[test]
    fn rank_of_hyperbolic_gram_matrix() {
        let f3 = make_field(3, 1).unwrap();
        // 2B for x0x1 + x2x3
        let m = Matrix::from_rows(&[
            vec![0, 1, 0, 0],
            vec![1, 0, 0, 0],
            vec![0, 0, 0, 1],
            vec![0, 0, 1, 0],
        ]);
        assert_eq!(m.rank(&f3), 4);
    }

    #[test]
    fn solve_consistent_and_inconsistent() {
        let f5 = make_field(5, 1).unwrap();
        let a = Matrix::from_rows(&[vec![1, 2], vec![2, 4]]);
        let x = solve(&f5, &a, &[3, 1]).unwrap();
        assert_eq!(f5.raw_add(x[0], f5.raw_mul(2, x[1])), 3);
        assert!(solve(&f5, &a, &[3, 2]).is_none());
    }
}
