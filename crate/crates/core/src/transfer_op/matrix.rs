//! Dense realization of a transfer operator on the grid, and its dump formats.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lq_space::{Grid, LqSpace};

const TEXT_HEADER: &str = "hmc-lq-operator-matrix v1";
const MAGIC: &[u8; 8] = b"HMCLQMAT";

/// Dense row-major matrix acting on nodal density values.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    grid: Grid,
    n: usize,
    data: Vec<f64>,
}

/// Result of a power iteration.
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl OperatorMatrix {
    pub fn from_dense(grid: Grid, data: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if data.len() != n * n {
            return Err(Error::Usage(format!(
                "{} entries for a {n}x{n} operator matrix",
                data.len()
            )));
        }
        Ok(OperatorMatrix { grid, n, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n + k]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, k)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn difference(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        if self.grid != other.grid {
            return Err(Error::Usage("operator matrices on different grids".into()));
        }
        Ok(OperatorMatrix {
            grid: self.grid,
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `G^{1/2} M G^{-1/2}` with `G = diag(w / f)`, restricted to the support of `f`.
    ///
    /// Singular values of the result are the singular values of the operator in the
    /// `f`-weighted `L^2` metric.
    pub fn weighted(&self, space: &LqSpace) -> DMatrix<f64> {
        let support: Vec<usize> = (0..self.n).filter(|&k| space.in_support(k)).collect();
        let g: Vec<f64> = support
            .iter()
            .map(|&k| (space.weights()[k] / space.f_values()[k]).sqrt())
            .collect();
        let m = support.len();
        DMatrix::from_fn(m, m, |a, b| g[a] * self.get(support[a], support[b]) / g[b])
    }

    /// Singular values in the `f`-weighted metric, descending.
    pub fn weighted_singular_values(&self, space: &LqSpace) -> Vec<f64> {
        let mut sv: Vec<f64> = self.weighted(space).singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Operator norm in the `f`-weighted `L^2` metric.
    pub fn weighted_operator_norm(&self, space: &LqSpace) -> f64 {
        self.weighted_singular_values(space).first().copied().unwrap_or(0.0)
    }

    /// Dominant eigenpair by power iteration from the all-ones vector.
    pub fn power_iteration(&self, tolerance: f64, max_iter: usize) -> PowerResult {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut v = vec![1.0 / (self.n as f64).sqrt(); self.n];
        let mut value = 0.0;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let mv = self.apply(&v);
            value = mv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            residual = mv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - value * b).powi(2))
                .sum::<f64>()
                .sqrt();
            let nm = norm(&mv);
            if nm == 0.0 {
                break;
            }
            v = mv.iter().map(|x| x / nm).collect();
            if residual <= tolerance {
                break;
            }
        }
        PowerResult {
            value,
            vector: v,
            iterations,
            residual,
        }
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TEXT_HEADER}")?;
        writeln!(
            out,
            "rows {} cols {} dim {} extent {:e} points {}",
            self.n,
            self.n,
            self.grid.dim(),
            self.grid.extent(),
            self.grid.points()
        )?;
        for row in self.data.chunks_exact(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let bad = |m: String| Error::Format(m);
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| bad("empty matrix file".into()))??;
        if header.trim() != TEXT_HEADER {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let meta = lines.next().ok_or_else(|| bad("missing metadata".into()))??;
        let f: Vec<&str> = meta.split_whitespace().collect();
        let get = |key: &str| -> Result<&str> {
            f.iter()
                .position(|x| *x == key)
                .and_then(|i| f.get(i + 1).copied())
                .ok_or_else(|| bad(format!("metadata lacks {key}")))
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let rows = num(get("rows")?)? as usize;
        let grid = Grid::new(
            num(get("dim")?)? as usize,
            num(get("extent")?)?,
            num(get("points")?)? as usize,
        )?;
        let mut data = Vec::with_capacity(rows * rows);
        for line in lines {
            for tok in line?.split_whitespace() {
                data.push(num(tok)?);
            }
        }
        Self::from_dense(grid, data)
    }

    /// Binary dump: magic, version, dimensions and grid metadata, then little-endian `f64` rows.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        out.write_all(&self.grid.extent().to_le_bytes())?;
        out.write_all(&(self.grid.points() as u64).to_le_bytes())?;
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an operator matrix dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(Error::Format("unsupported matrix dump version".into()));
        }
        input.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b8)?;
        let extent = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let points = u64::from_le_bytes(b8) as usize;
        let grid = Grid::new(dim, extent, points)?;
        if rows != cols || rows != grid.len() {
            return Err(Error::Format(format!(
                "matrix shape {rows}x{cols} does not match grid of {} nodes",
                grid.len()
            )));
        }
        let mut data = vec![0.0; rows * cols];
        for v in data.iter_mut() {
            input.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Self::from_dense(grid, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(1, 2.0, 16).unwrap()
    }

    #[test]
    fn power_iteration_finds_dominant_pair() {
        let n = 16;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = if i == 3 { 2.0 } else { 0.5 };
        }
        let m = OperatorMatrix::from_dense(grid(), data).unwrap();
        let r = m.power_iteration(1e-12, 1000);
        assert!((r.value - 2.0).abs() < 1e-12);
        assert!((r.vector[3].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_rejects_wrong_magic() {
        assert!(OperatorMatrix::read_binary(&b"NOTAMATRIX______"[..]).is_err());
    }

    proptest! {
        #[test]
        fn dumps_roundtrip(seed in prop::collection::vec(-1e2f64..1e2, 256)) {
            let m = OperatorMatrix::from_dense(grid(), seed).unwrap();
            let mut text = Vec::new();
            m.write_text(&mut text).unwrap();
            prop_assert_eq!(&OperatorMatrix::read_text(text.as_slice()).unwrap(), &m);
            let mut bin = Vec::new();
            m.write_binary(&mut bin).unwrap();
            prop_assert_eq!(&OperatorMatrix::read_binary(bin.as_slice()).unwrap(), &m);
        }
    }
}
