use std::io::{BufRead, Write};

use super::Grid;
use crate::error::{Error, Result};

const HEADER: &str = "hmc-lq-grid-density v1";

/// Nodal values of a density on a [`Grid`].
///
/// Densities are nonnegative unless built with [`GridDensity::signed`]; signed
/// values only arise on the zero-mass subspace used for spectral estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
    signed: bool,
}

impl GridDensity {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::check_len(&grid, &values)?;
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Domain(format!(
                "density value {v} at node {k} is negative or not finite"
            )));
        }
        Ok(GridDensity {
            grid,
            values,
            signed: false,
        })
    }

    pub fn signed(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::check_len(&grid, &values)?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("density value at node {k} is not finite")));
        }
        Ok(GridDensity {
            grid,
            values,
            signed: true,
        })
    }

    fn check_len(grid: &Grid, values: &[f64]) -> Result<()> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(())
    }

    /// Samples `f(x)` at every node; clips tiny negative rounding to zero.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let x = grid.node(k);
                f(&x[..grid.dim()])
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: Grid) -> Self {
        GridDensity {
            grid,
            values: vec![0.0; grid.len()],
            signed: false,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rebuilds with new values, keeping the sign policy: nonnegative results stay unsigned.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        let signed = self.signed || values.iter().any(|v| *v < 0.0);
        GridDensity {
            grid: self.grid,
            values,
            signed,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * s).collect())
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &GridDensity, b: f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn same_grid(&self, other: &GridDensity) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Usage("densities live on different grids".into()));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &GridDensity) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes the text exchange format: a header line, a metadata line, then one value per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{HEADER}")?;
        writeln!(
            out,
            "dim {} extent {:e} points {} signed {}",
            self.grid.dim(),
            self.grid.extent(),
            self.grid.points(),
            u8::from(self.signed)
        )?;
        for v in &self.values {
            writeln!(out, "{v:.17e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let bad = |m: &str| Error::Format(m.to_string());
        let header = lines.next().ok_or_else(|| bad("empty density file"))??;
        if header.trim() != HEADER {
            return Err(bad(&format!("unexpected header {header:?}")));
        }
        let meta = lines.next().ok_or_else(|| bad("missing metadata line"))??;
        let fields: Vec<&str> = meta.split_whitespace().collect();
        let field = |key: &str| -> Result<&str> {
            fields
                .iter()
                .position(|f| *f == key)
                .and_then(|i| fields.get(i + 1).copied())
                .ok_or_else(|| bad(&format!("metadata lacks {key}")))
        };
        let parse_err = |e: std::num::ParseIntError| bad(&e.to_string());
        let dim: usize = field("dim")?.parse().map_err(parse_err)?;
        let extent: f64 = field("extent")?
            .parse()
            .map_err(|e: std::num::ParseFloatError| bad(&e.to_string()))?;
        let points: usize = field("points")?.parse().map_err(parse_err)?;
        let signed = field("signed")? == "1";
        let grid = Grid::new(dim, extent, points)?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(
                t.parse::<f64>()
                    .map_err(|e| bad(&format!("value {t:?}: {e}")))?,
            );
        }
        if signed {
            Self::signed(grid, values)
        } else {
            Self::new(grid, values)
        }
    }
}
