use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported position dimension.
pub const MAX_DIM: usize = 2;

/// Uniform tensor grid over the box `[-extent, extent]^dim`.
///
/// Nodes are flattened with axis 0 varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extent: f64,
    points: usize,
}

/// Node indices and weights at a point: multilinear (`2^dim` nodes) or cubic B-spline (`4^dim`).
#[derive(Debug, Clone, Copy, Default)]
pub struct Stencil {
    pub idx: [usize; 16],
    pub weight: [f64; 16],
    pub len: usize,
}

impl Stencil {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.weight[k]))
    }
}

impl Grid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Usage(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Usage(format!("grid extent must be positive, got {extent}")));
        }
        if points < Self::MIN_POINTS {
            return Err(Error::Usage(format!(
                "grid needs at least {} points per axis, got {points}",
                Self::MIN_POINTS
            )));
        }
        Ok(Grid { dim, extent, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.points - 1) as f64
    }

    /// Node coordinate along one axis. Exactly antisymmetric: `axis_node(i) == -axis_node(N-1-i)`.
    pub fn axis_node(&self, i: usize) -> f64 {
        let n1 = self.points - 1;
        if 2 * i > n1 {
            -self.lower_half_node(n1 - i)
        } else {
            self.lower_half_node(i)
        }
    }

    fn lower_half_node(&self, i: usize) -> f64 {
        let n1 = self.points - 1;
        if i == 0 {
            -self.extent
        } else {
            ((2 * i) as f64 - n1 as f64) * (self.extent / n1 as f64)
        }
    }

    pub fn axis_nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.axis_node(i)).collect()
    }

    /// Axis indices of flat node `k`.
    pub fn multi_index(&self, k: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        out[0] = k % self.points;
        if self.dim == 2 {
            out[1] = k / self.points;
        }
        out
    }

    pub fn flat_index(&self, idx: [usize; MAX_DIM]) -> usize {
        if self.dim == 2 {
            idx[0] + self.points * idx[1]
        } else {
            idx[0]
        }
    }

    /// Coordinates of flat node `k`; unused trailing coordinates are zero.
    pub fn node(&self, k: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(k);
        let mut x = [0.0; MAX_DIM];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.axis_node(idx[a]);
        }
        x
    }

    pub fn axis_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.points];
        w[0] = 0.5 * h;
        w[self.points - 1] = 0.5 * h;
        w
    }

    /// Tensor trapezoid weights for every node.
    pub fn weights(&self) -> Vec<f64> {
        let aw = self.axis_weights();
        (0..self.len())
            .map(|k| {
                let idx = self.multi_index(k);
                (0..self.dim).map(|a| aw[idx[a]]).product()
            })
            .collect()
    }

    /// Cell position along one axis after clamping to the box: `(left node, fraction)`.
    fn locate_axis(&self, x: f64) -> (usize, f64) {
        let h = self.spacing();
        let xc = x.clamp(-self.extent, self.extent);
        let s = (xc + self.extent) / h;
        let i = (s.floor() as usize).min(self.points - 2);
        let frac = (s - i as f64).clamp(0.0, 1.0);
        (i, frac)
    }

    /// Multilinear interpolation stencil at `x`, with `x` clamped to the box.
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        let mut st = Stencil::default();
        match self.dim {
            1 => {
                let (i, t) = self.locate_axis(x[0]);
                for (k, (idx, w)) in [(i, 1.0 - t), (i + 1, t)].into_iter().enumerate() {
                    st.idx[k] = idx;
                    st.weight[k] = w;
                }
                st.len = 2;
            }
            _ => {
                let (i, s) = self.locate_axis(x[0]);
                let (j, t) = self.locate_axis(x[1]);
                let n = self.points;
                let entries = [
                    (i + n * j, (1.0 - s) * (1.0 - t)),
                    (i + 1 + n * j, s * (1.0 - t)),
                    (i + n * (j + 1), (1.0 - s) * t),
                    (i + 1 + n * (j + 1), s * t),
                ];
                for (k, (idx, w)) in entries.into_iter().enumerate() {
                    st.idx[k] = idx;
                    st.weight[k] = w;
                }
                st.len = 4;
            }
        }
        st
    }

    /// Cubic B-spline weights of the nodes near `x` (a partition of unity).
    ///
    /// Nodes past the box edge fold onto the edge node.
    pub fn spline_stencil(&self, x: &[f64]) -> Stencil {
        let h = self.spacing();
        let axis = |xa: f64| {
            let s = (xa.clamp(-self.extent, self.extent) + self.extent) / h;
            let base = s.floor() as isize - 1;
            let mut out = [(0usize, 0.0f64); 4];
            for (m, slot) in out.iter_mut().enumerate() {
                let node = base + m as isize;
                let idx = node.clamp(0, self.points as isize - 1) as usize;
                *slot = (idx, cubic_bspline(s - node as f64));
            }
            out
        };
        let mut st = Stencil::default();
        let ax = axis(x[0]);
        if self.dim == 1 {
            for (k, (idx, w)) in ax.into_iter().enumerate() {
                st.idx[k] = idx;
                st.weight[k] = w;
            }
            st.len = 4;
        } else {
            let ay = axis(x[1]);
            let n = self.points;
            for (b, &(j, wy)) in ay.iter().enumerate() {
                for (a, &(i, wx)) in ax.iter().enumerate() {
                    st.idx[4 * b + a] = i + n * j;
                    st.weight[4 * b + a] = wx * wy;
                }
            }
            st.len = 16;
        }
        st
    }

    /// Index of the grid cell (between nodes) containing `x`, or `None` outside the box.
    pub fn cell_index(&self, x: &[f64]) -> Option<usize> {
        let cells = self.points - 1;
        let mut flat = 0;
        let mut stride = 1;
        for &xa in x.iter().take(self.dim) {
            if !(xa >= -self.extent && xa <= self.extent) {
                return None;
            }
            let (i, _) = self.locate_axis(xa);
            flat += i * stride;
            stride *= cells;
        }
        Some(flat)
    }

    pub fn cell_count(&self) -> usize {
        (self.points - 1).pow(self.dim as u32)
    }

    /// Node whose dual cell `[x_i - h/2, x_i + h/2]` (clipped to the box) contains `x`.
    pub fn dual_cell_index(&self, x: &[f64]) -> Option<usize> {
        let h = self.spacing();
        let mut idx = [0; MAX_DIM];
        for a in 0..self.dim {
            let xa = x[a];
            if !(xa >= -self.extent && xa <= self.extent) {
                return None;
            }
            let s = ((xa + self.extent) / h).round() as usize;
            idx[a] = s.min(self.points - 1);
        }
        Some(self.flat_index(idx))
    }
}

fn cubic_bspline(s: f64) -> f64 {
    let a = s.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}
