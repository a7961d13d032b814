use rayon::prelude::*;

/// Compressed sparse rows of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    /// Assembles from per-row `(column, value)` lists sorted by column.
    pub fn from_rows(n: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        debug_assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseRows {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e]
            .iter()
            .zip(&self.vals[s..e])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn transpose(&self) -> SparseRows {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.cols {
            counts[c as usize + 1] += 1;
        }
        for k in 0..self.n {
            counts[k + 1] += counts[k];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                let slot = next[c];
                cols[slot] = i as u32;
                vals[slot] = v;
                next[c] += 1;
            }
        }
        SparseRows {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// `a * self + b * other`, merging sparsity patterns.
    pub fn combine(&self, a: f64, other: &SparseRows, b: f64) -> SparseRows {
        let rows = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let x: Vec<(u32, f64)> = self.row(i).map(|(c, v)| (c as u32, a * v)).collect();
                let y: Vec<(u32, f64)> = other.row(i).map(|(c, v)| (c as u32, b * v)).collect();
                let mut out = Vec::with_capacity(x.len() + y.len());
                let (mut p, mut q) = (0, 0);
                while p < x.len() || q < y.len() {
                    if q == y.len() || (p < x.len() && x[p].0 < y[q].0) {
                        out.push(x[p]);
                        p += 1;
                    } else if p == x.len() || y[q].0 < x[p].0 {
                        out.push(y[q]);
                        q += 1;
                    } else {
                        out.push((x[p].0, x[p].1 + y[q].1));
                        p += 1;
                        q += 1;
                    }
                }
                out
            })
            .collect();
        SparseRows::from_rows(self.n, rows)
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scale(&self, left: &[f64], right: &[f64]) -> SparseRows {
        let mut out = self.clone();
        for i in 0..self.n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for t in s..e {
                out.vals[t] *= left[i] * right[self.cols[t] as usize];
            }
        }
        out
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                d[i * self.n + c] += v;
            }
        }
        d
    }

    pub fn min_value(&self) -> f64 {
        self.vals.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseRows {
        SparseRows::from_rows(
            3,
            vec![vec![(0, 1.0), (2, 2.0)], vec![(1, 3.0)], vec![(0, 4.0), (1, 5.0)]],
        )
    }

    #[test]
    fn transpose_and_dense_agree() {
        let m = sample();
        let d = m.to_dense();
        let t = m.transpose().to_dense();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(d[i * 3 + k], t[k * 3 + i]);
            }
        }
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn combine_merges_patterns() {
        let m = sample();
        let s = m.combine(0.5, &m.transpose(), 0.5).to_dense();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(s[i * 3 + k], s[k * 3 + i]);
            }
        }
        assert_eq!(s[2], 0.5 * 2.0 + 0.5 * 4.0);
    }

    #[test]
    fn matvec_and_scale() {
        let m = sample();
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 9.0]);
        let s = m.scale(&[1.0, 2.0, 1.0], &[1.0, 1.0, 10.0]);
        assert_eq!(s.row_sums(), vec![21.0, 6.0, 9.0]);
    }
}
