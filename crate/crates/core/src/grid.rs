//! Regular tensor-product grids with row-major node numbering (the last
//! axis varies fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || spacing.len() != n || shape.len() != n {
            return Err(Error::DegenerateGrid("lower, spacing and shape must share a nonzero length".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0)) || shape.contains(&0) {
            return Err(Error::DegenerateGrid("spacings must be positive and shapes nonzero".into()));
        }
        Ok(Self { lower, spacing, shape })
    }

    /// Grid on the box `[lo_i, hi_i]` with spacing close to `h_i`, adjusted so
    /// that both ends are nodes.
    pub fn from_box(lo: &[f64], hi: &[f64], h: &[f64]) -> Result<Self> {
        let mut spacing = Vec::with_capacity(lo.len());
        let mut shape = Vec::with_capacity(lo.len());
        for i in 0..lo.len() {
            if !(hi[i] > lo[i]) || !(h[i] > 0.0) {
                return Err(Error::DegenerateGrid(format!("empty extent on axis {i}")));
            }
            let cells = ((hi[i] - lo[i]) / h[i]).round().max(1.0) as usize;
            spacing.push((hi[i] - lo[i]) / cells as f64);
            shape.push(cells + 1);
        }
        Self::new(lo.to_vec(), spacing, shape)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lower[i] + self.spacing[i] * (self.shape[i] - 1) as f64)
            .collect()
    }

    /// Stride of axis `i` in the flat numbering.
    pub fn stride(&self, i: usize) -> usize {
        self.shape[i + 1..].iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        (0..self.dim()).map(|i| self.stride(i)).collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    pub fn multi(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            out[i] = k % self.shape[i];
            k /= self.shape[i];
        }
        out
    }

    pub fn coord(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(i, &j)| self.lower[i] + self.spacing[i] * j as f64)
            .collect()
    }

    pub fn node_coord(&self, k: usize) -> Vec<f64> {
        self.coord(&self.multi(k))
    }

    /// Nearest node to `x` if `x` lies on a node up to `tol` spacings.
    pub fn node_at(&self, x: &[f64], tol: f64) -> Option<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let t = (x[i] - self.lower[i]) / self.spacing[i];
            let r = t.round();
            if (t - r).abs() > tol || r < 0.0 || r as usize >= self.shape[i] {
                return None;
            }
            idx.push(r as usize);
        }
        Some(self.flat(&idx))
    }

    /// Whether node `k` is at least `halo` nodes away from every face.
    pub fn is_interior(&self, k: usize, halo: usize) -> bool {
        self.multi(k)
            .iter()
            .zip(&self.shape)
            .all(|(&i, &s)| i >= halo && i + halo < s)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let up = self.upper();
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] && v <= up[i])
    }

    /// Multilinear interpolation of nodal `values` at `x`; `None` outside.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let n = self.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for i in 0..n {
            let t = (x[i] - self.lower[i]) / self.spacing[i];
            if t < -1e-9 || t > (self.shape[i] - 1) as f64 + 1e-9 {
                return None;
            }
            let t = t.clamp(0.0, (self.shape[i] - 1) as f64);
            let mut b = t.floor() as usize;
            if b + 1 >= self.shape[i] && self.shape[i] > 1 {
                b = self.shape[i] - 2;
            }
            base[i] = b;
            frac[i] = if self.shape[i] > 1 { t - b as f64 } else { 0.0 };
        }
        let strides = self.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut wgt = 1.0;
            let mut k = 0;
            for i in 0..n {
                let up = (corner >> i) & 1 == 1;
                if up && self.shape[i] == 1 {
                    wgt = 0.0;
                    break;
                }
                wgt *= if up { frac[i] } else { 1.0 - frac[i] };
                k += (base[i] + up as usize) * strides[i];
            }
            if wgt != 0.0 {
                acc += wgt * values[k];
            }
        }
        Some(acc)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}
