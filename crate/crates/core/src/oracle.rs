//! Condensed quadratic program over the stacked control sequence.
//!
//! With `u = (u_0, …, u_{T−1})` and `x_t = Φ_t x_0 + Γ_t u`, the cost becomes
//! `J(x_0, u) = uᵀHu + 2gᵀu + c`. Nothing here touches the Riccati
//! recursion, so the minimum certifies `x_0ᵀ X_0 x_0` independently.

use crate::error::{Error, Result};
use crate::grde::rollout_cost;
use crate::linalg::{pinv, symmetrize, Matrix, Tolerance, Vector};
use crate::model::LqProblem;

/// `J(x_0, u) = uᵀHu + 2gᵀu + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchQp {
    pub h: Matrix,
    pub g: Vector,
    pub c: f64,
}

impl BatchQp {
    /// Evaluates the quadratic form at a stacked input.
    pub fn evaluate(&self, u: &Vector) -> f64 {
        (u.transpose() * &self.h * u)[(0, 0)] + 2.0 * self.g.dot(u) + self.c
    }
}

/// Splits a stacked input into per-step vectors.
pub fn unstack(u: &Vector, m: usize) -> Vec<Vector> {
    u.as_slice()
        .chunks(m.max(1))
        .map(Vector::from_column_slice)
        .collect()
}

/// Assembles `H`, `g` and `c` for the given initial state.
pub fn batch_matrices(p: &LqProblem, x0: &Vector) -> Result<BatchQp> {
    let (n, m) = p.check_dimensions()?;
    if x0.len() != n {
        return Err(Error::Dimension {
            field: "x0".into(),
            expected: format!("{n}"),
            found: format!("{}", x0.len()),
        });
    }
    let t = &p.triple;
    let horizon = p.horizon;
    let dim = m * horizon;
    let mut h = Matrix::zeros(dim, dim);
    let mut g = Vector::zeros(dim);
    let mut c = 0.0;

    // x_t = free + gamma * u, with gamma n × (mT).
    let mut free = x0.clone();
    let mut gamma = Matrix::zeros(n, dim);
    for step in 0..horizon {
        let col = step * m;
        // state contribution
        h += gamma.transpose() * &t.q * &gamma;
        g += gamma.transpose() * (&t.q * &free);
        c += (free.transpose() * &t.q * &free)[(0, 0)];
        // cross terms 2 x_tᵀ S u_t
        let cross = gamma.transpose() * &t.s; // (mT) × m
        {
            let mut block = h.columns_mut(col, m);
            block += &cross;
        }
        {
            let mut block = h.rows_mut(col, m);
            block += cross.transpose();
        }
        let sx = t.s.transpose() * &free;
        {
            let mut seg = g.rows_mut(col, m);
            seg += &sx;
        }
        // input weight
        {
            let mut block = h.view_mut((col, col), (m, m));
            block += &t.r;
        }
        // propagate
        free = &t.a * &free;
        gamma = &t.a * &gamma;
        {
            let mut block = gamma.columns_mut(col, m);
            block += &t.b;
        }
    }
    h += gamma.transpose() * &p.terminal * &gamma;
    g += gamma.transpose() * (&p.terminal * &free);
    c += (free.transpose() * &p.terminal * &free)[(0, 0)];
    Ok(BatchQp {
        h: symmetrize(&h),
        g,
        c,
    })
}

/// Minimum-norm minimiser of the condensed QP.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptimum {
    pub u_star: Vector,
    /// Optimal cost, evaluated by rolling out `u_star` through the dynamics.
    pub j_star: f64,
    /// `c − gᵀH†g`, the closed-form value of the same minimum.
    pub j_closed_form: f64,
}

/// `u* = −H†g` and its cost.
pub fn batch_optimal(p: &LqProblem, x0: &Vector, tol: &Tolerance) -> Result<BatchOptimum> {
    let qp = batch_matrices(p, x0)?;
    let h_pinv = pinv(&qp.h, tol)?;
    let u_star = -(&h_pinv * &qp.g);
    let j_closed_form = qp.c - qp.g.dot(&(&h_pinv * &qp.g));
    let inputs = unstack(&u_star, p.m());
    let j_star = if p.horizon == 0 {
        qp.c
    } else {
        rollout_cost(p, x0, &inputs)?
    };
    Ok(BatchOptimum {
        u_star,
        j_star,
        j_closed_form,
    })
}
