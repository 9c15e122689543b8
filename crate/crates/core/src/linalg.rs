//! Solvers for the shifted operator `I − a(νΔ_h − λ)`.
//!
//! In 1D the matrix is a constant-coefficient tridiagonal and is factored
//! once (Thomas). In 2D it is the symmetric positive definite 5-point
//! stencil and is solved by conjugate gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::Grid;
use crate::{Error, Result};

const CG_REL_TOL: f64 = 1e-13;
const CG_MAX_ITERS: usize = 2000;

#[derive(Debug, Clone)]
pub(crate) struct ShiftedOperator {
    grid: Grid,
    a: f64,
    nu: f64,
    lambda: f64,
    // Thomas factors (1D only): modified super-diagonal and inverse pivots
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ShiftedOperator {
    /// Operator `I − a(νΔ_h − λ)` with `a ≥ 0`.
    pub(crate) fn new(grid: &Grid, a: f64, nu: f64, lambda: f64) -> Self {
        let mut op = ShiftedOperator {
            grid: *grid,
            a,
            nu,
            lambda,
            c_prime: Vec::new(),
            inv_pivot: Vec::new(),
        };
        if grid.dim() == 1 {
            let n = grid.len();
            let h2 = grid.spacing() * grid.spacing();
            let off = -a * nu / h2;
            let diag = 1.0 + a * (2.0 * nu / h2 + lambda);
            let mut c_prime = vec![0.0; n];
            let mut inv_pivot = vec![0.0; n];
            let mut prev_c = 0.0;
            for i in 0..n {
                let pivot = diag - off * prev_c;
                inv_pivot[i] = 1.0 / pivot;
                prev_c = off / pivot;
                c_prime[i] = prev_c;
            }
            op.c_prime = c_prime;
            op.inv_pivot = inv_pivot;
        }
        op
    }

    #[cfg(test)]
    pub(crate) fn coefficient(&self) -> f64 {
        self.a
    }

    /// `out = (I + b(νΔ_h − λ)) u` for an arbitrary `b`.
    pub(crate) fn apply_with(&self, b: f64, u: &[f64], out: &mut [f64]) {
        self.grid.laplacian_into(u, out);
        for (o, &x) in out.iter_mut().zip(u) {
            *o = x + b * (self.nu * *o - self.lambda * x);
        }
    }

    /// Solves `(I − a(νΔ_h − λ)) x = rhs` into `x`.
    pub(crate) fn solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        if self.grid.dim() == 1 {
            self.thomas(rhs, x);
            Ok(())
        } else {
            self.conjugate_gradient(rhs, x)
        }
    }

    fn thomas(&self, rhs: &[f64], x: &mut [f64]) {
        let n = rhs.len();
        let h2 = self.grid.spacing() * self.grid.spacing();
        let off = -self.a * self.nu / h2;
        let mut prev = 0.0;
        for i in 0..n {
            prev = (rhs[i] - off * prev) * self.inv_pivot[i];
            x[i] = prev;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }

    fn conjugate_gradient(&self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        let n = rhs.len();
        let apply = |p: &[f64], out: &mut [f64]| self.apply_with(-self.a, p, out);
        let mut r = vec![0.0; n];
        let mut ap = vec![0.0; n];
        // the right-hand side is the natural initial guess for a shifted identity
        x.copy_from_slice(rhs);
        apply(x, &mut ap);
        for i in 0..n {
            r[i] = rhs[i] - ap[i];
        }
        let rhs_norm = dot(rhs, rhs).sqrt_or_zero();
        if rhs_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let target = CG_REL_TOL * rhs_norm;
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        for _ in 0..CG_MAX_ITERS {
            if rr.sqrt_or_zero() <= target {
                return Ok(());
            }
            apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        if rr.sqrt_or_zero() <= target {
            return Ok(());
        }
        Err(Error::LinearSolve(format!(
            "conjugate gradients did not converge in {CG_MAX_ITERS} iterations (residual {:e}, target {:e})",
            rr.sqrt_or_zero(),
            target
        )))
    }
}

trait SqrtOrZero {
    fn sqrt_or_zero(self) -> f64;
}

impl SqrtOrZero for f64 {
    fn sqrt_or_zero(self) -> f64 {
        if self > 0.0 {
            crate::math::sqrt(self)
        } else {
            0.0
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
