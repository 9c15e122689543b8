//! Truncated-domain mesh `[−L, L]^dim` with homogeneous Dirichlet closure.
//!
//! Nodes are the `m` interior points per axis, `x_i = −L + (i + 1)Δx` with
//! `Δx = 2L/(m + 1)`; the boundary values are implicitly zero. In 2-D the
//! flat index is x-major: `idx = ix·m + iy`.
//!
//! All discrete integrals carry the cell weight `Δx^dim`, so that the
//! discrete operators satisfy the same integration-by-parts identities as
//! their continuous counterparts:
//! `⟨Δu, w⟩ = ⟨u, Δw⟩` and `⟨−Δu, u⟩ = |u|²_{H¹}` (exactly, up to round-off).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDoc", into = "GridDoc")]
pub struct Grid {
    dim: usize,
    half_length: f64,
    points_per_axis: usize,
    spacing: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    dim: usize,
    half_length: f64,
    points_per_axis: usize,
}

impl TryFrom<GridDoc> for Grid {
    type Error = Error;
    fn try_from(doc: GridDoc) -> Result<Self> {
        Grid::new(doc.dim, doc.half_length, doc.points_per_axis)
    }
}

impl From<Grid> for GridDoc {
    fn from(g: Grid) -> Self {
        GridDoc { dim: g.dim, half_length: g.half_length, points_per_axis: g.points_per_axis }
    }
}

impl Grid {
    pub fn new(dim: usize, half_length: f64, points_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Domain(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::Domain(format!("half_length must be positive, got {half_length}")));
        }
        if points_per_axis < 3 {
            return Err(Error::Domain(format!(
                "points_per_axis must be at least 3, got {points_per_axis}"
            )));
        }
        let spacing = 2.0 * half_length / (points_per_axis as f64 + 1.0);
        Ok(Grid { dim, half_length, points_per_axis, spacing })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Δx.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total node count `m^dim`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `Δx^dim`.
    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.spacing
        } else {
            self.spacing * self.spacing
        }
    }

    /// Coordinate of the `i`-th interior node along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_length + (i as f64 + 1.0) * self.spacing
    }

    /// Position of the node at flat index `idx`; the second entry is 0 in 1-D.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coord(idx), 0.0]
        } else {
            let m = self.points_per_axis;
            [self.coord(idx / m), self.coord(idx % m)]
        }
    }

    pub fn radius_sq(&self, idx: usize) -> f64 {
        let p = self.position(idx);
        p[0] * p[0] + p[1] * p[1]
    }

    pub(crate) fn check(&self, field: &Field) -> Result<()> {
        if field.grid != *self || field.values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "field on {}-D grid with {} nodes, expected {}-D grid with {} nodes",
                field.grid.dim,
                field.values.len(),
                self.dim,
                self.len()
            )));
        }
        Ok(())
    }

    /// `out = Δ_h u` with zero ghost values.
    pub(crate) fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let m = self.points_per_axis;
        let inv = 1.0 / (self.spacing * self.spacing);
        if self.dim == 1 {
            for i in 0..m {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < m { u[i + 1] } else { 0.0 };
                out[i] = (left - 2.0 * u[i] + right) * inv;
            }
        } else {
            for ix in 0..m {
                for iy in 0..m {
                    let k = ix * m + iy;
                    let west = if ix > 0 { u[k - m] } else { 0.0 };
                    let east = if ix + 1 < m { u[k + m] } else { 0.0 };
                    let south = if iy > 0 { u[k - 1] } else { 0.0 };
                    let north = if iy + 1 < m { u[k + 1] } else { 0.0 };
                    out[k] = (west + east + south + north - 4.0 * u[k]) * inv;
                }
            }
        }
    }

    /// Forward-difference gradient energy `Σ |D⁺u|² Δx^dim`, including the
    /// differences against the zero boundary values on both ends.
    pub(crate) fn grad_sq(&self, u: &[f64]) -> f64 {
        let m = self.points_per_axis;
        let inv = 1.0 / (self.spacing * self.spacing);
        let mut acc = 0.0;
        if self.dim == 1 {
            let mut prev = 0.0;
            for &ui in u.iter() {
                acc += (ui - prev) * (ui - prev);
                prev = ui;
            }
            acc += prev * prev;
        } else {
            for line in 0..m {
                let mut prev_x = 0.0;
                let mut prev_y = 0.0;
                for j in 0..m {
                    let along_x = u[j * m + line];
                    let along_y = u[line * m + j];
                    acc += (along_x - prev_x) * (along_x - prev_x);
                    acc += (along_y - prev_y) * (along_y - prev_y);
                    prev_x = along_x;
                    prev_y = along_y;
                }
                acc += prev_x * prev_x + prev_y * prev_y;
            }
        }
        acc * inv * self.cell_volume()
    }

    pub(crate) fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.cell_volume()
    }
}

/// A scalar field sampled at the interior nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field { grid: *grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values supplied for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value at index {bad}")));
        }
        Ok(Field { grid: *grid, values })
    }

    /// Samples `f(x, y)` at every node (`y = 0` in 1-D).
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.position(idx);
                f(p[0], p[1])
            })
            .collect();
        Field { grid: *grid, values }
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid: *grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| v * factor).collect() }
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.grid.check(other)?;
        Ok(Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.grid.check(other)?;
        Ok(Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.dot(&self.values, &self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        crate::math::sqrt(self.l2_norm_sq())
    }

    pub fn h1_seminorm_sq(&self) -> f64 {
        self.grid.grad_sq(&self.values)
    }

    /// `‖u‖²_{H¹} = ‖u‖² + |u|²_{H¹}`.
    pub fn h1_norm_sq(&self) -> f64 {
        self.l2_norm_sq() + self.h1_seminorm_sq()
    }
}

/// Second-order central-difference Laplacian with zero ghost values.
pub fn laplacian_apply(grid: &Grid, u: &Field) -> Result<Field> {
    grid.check(u)?;
    let mut out = vec![0.0; grid.len()];
    grid.laplacian_into(&u.values, &mut out);
    Ok(Field::from_raw(grid, out))
}

pub fn l2_norm_sq(grid: &Grid, u: &Field) -> Result<f64> {
    grid.check(u)?;
    Ok(u.l2_norm_sq())
}

pub fn h1_seminorm_sq(grid: &Grid, u: &Field) -> Result<f64> {
    grid.check(u)?;
    Ok(u.h1_seminorm_sq())
}

pub fn inner(grid: &Grid, u: &Field, w: &Field) -> Result<f64> {
    grid.check(u)?;
    grid.check(w)?;
    Ok(grid.dot(&u.values, &w.values))
}

/// Smooth cut-off used by the tail functional: 0 on `[0, 1]`, 1 on
/// `[2, ∞)`, cubic smoothstep in between (C¹, `|θ′| ≤ 1.5`).
pub fn cutoff_theta(s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("cut-off argument must be nonnegative, got {s}")));
    }
    Ok(theta(s))
}

#[inline]
pub(crate) fn theta(s: f64) -> f64 {
    if s <= 1.0 {
        0.0
    } else if s >= 2.0 {
        1.0
    } else {
        let r = s - 1.0;
        r * r * (3.0 - 2.0 * r)
    }
}

/// `Σ θ(|x_i|²/k²)(ε u_i² + v_i²) Δx^dim`: the mass of `(u, v)` outside
/// radius `k`, weighted by the smooth cut-off.
pub fn tail_mass(grid: &Grid, u: &Field, v: &Field, k: f64, epsilon: f64) -> Result<f64> {
    grid.check(u)?;
    grid.check(v)?;
    if !(k > 0.0) {
        return Err(Error::Domain(format!("tail radius must be positive, got {k}")));
    }
    let inv_k2 = 1.0 / (k * k);
    let mut acc = 0.0;
    for idx in 0..grid.len() {
        let w = theta(grid.radius_sq(idx) * inv_k2);
        if w > 0.0 {
            let (ui, vi) = (u.values[idx], v.values[idx]);
            acc += w * (epsilon * ui * ui + vi * vi);
        }
    }
    Ok(acc * grid.cell_volume())
}
