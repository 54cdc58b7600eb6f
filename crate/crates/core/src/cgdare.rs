//! The constrained generalised algebraic Riccati equation: residual,
//! closed-loop quantities, a reference-solution finder and the comparison of
//! two solutions along the nilpotent closed-loop subspace.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grde::{riccati_blocks, riccati_map};
use crate::linalg::{
    inertia, nilpotent_eigenspace_scaled, pinv, spectral_norm, subspace_distance, symmetrize,
    Inertia, Matrix, Tolerance,
};
use crate::model::{LqProblem, PopovTriple};

/// `D(X) = X − AᵀXA + (AᵀXB + S)(R + BᵀXB)†(BᵀXA + Sᵀ) − Q`.
pub fn residual(x: &Matrix, t: &PopovTriple, tol: &Tolerance) -> Result<Matrix> {
    Ok(x - riccati_map(x, t, tol)?)
}

/// `‖S_X (I − R_X† R_X)‖ / (‖S_X‖ + 1)`: zero iff `ker R_X ⊆ ker S_X`.
pub fn kernel_condition_residual(r_x: &Matrix, s_x: &Matrix, tol: &Tolerance) -> Result<f64> {
    let m = r_x.nrows();
    let proj = Matrix::identity(m, m) - pinv(r_x, tol)? * r_x;
    Ok((s_x * proj).norm() / (s_x.norm() + 1.0))
}

/// A symmetric `X` with everything derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CgdareSolution {
    pub x: Matrix,
    pub residual_norm: f64,
    pub kernel_condition_residual: f64,
    pub kernel_condition_ok: bool,
    /// `R + BᵀXB`
    pub r_x: Matrix,
    /// `AᵀXB + S`
    pub s_x: Matrix,
    /// `R_X† S_Xᵀ`
    pub k_x: Matrix,
    /// `A − B K_X`
    pub a_x: Matrix,
    /// `‖A‖ + ‖B‖‖K_X‖`, the size of the terms that cancel in `A_X`. Rank
    /// decisions on `A_X` are taken relative to it.
    pub a_x_scale: f64,
    pub inertia_rx: Inertia,
    /// Orthonormal basis of `ker(A_X)ⁿ`.
    pub u: Matrix,
    /// Nilpotency index of `A_X`.
    pub nu: usize,
}

impl CgdareSolution {
    /// Residual threshold `residual_abs + residual_rel ‖X‖`.
    pub fn residual_threshold(&self, tol: &Tolerance) -> f64 {
        tol.residual_threshold(self.x.norm())
    }

    /// Solves the algebraic equation and satisfies the kernel condition.
    pub fn is_accepted(&self, tol: &Tolerance) -> bool {
        self.residual_norm <= self.residual_threshold(tol) && self.kernel_condition_ok
    }

    pub fn dim_u(&self) -> usize {
        self.u.ncols()
    }
}

/// Populates every derived quantity of `X`; `X` need not be a solution.
pub fn closed_loop(x: &Matrix, t: &PopovTriple, tol: &Tolerance) -> Result<CgdareSolution> {
    let n = t.n();
    if x.shape() != (n, n) {
        return Err(Error::Dimension {
            field: "X".into(),
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    let x = symmetrize(x);
    let (r_x, s_x) = riccati_blocks(&x, t);
    let r_pinv = pinv(&r_x, tol)?;
    let k_x = &r_pinv * s_x.transpose();
    let a_x = &t.a - &t.b * &k_x;
    let d =
        &x - symmetrize(&(t.a.transpose() * &x * &t.a - &s_x * &r_pinv * s_x.transpose() + &t.q));
    let kernel_residual = kernel_condition_residual(&r_x, &s_x, tol)?;
    let a_x_scale = spectral_norm(&t.a) + spectral_norm(&t.b) * spectral_norm(&k_x);
    let (u, nu) = nilpotent_eigenspace_scaled(&a_x, a_x_scale, tol)?;
    Ok(CgdareSolution {
        residual_norm: d.norm(),
        kernel_condition_residual: kernel_residual,
        kernel_condition_ok: kernel_residual <= tol.residual_rel,
        inertia_rx: inertia(&r_x, tol)?,
        r_x,
        s_x,
        k_x,
        a_x,
        a_x_scale,
        u,
        nu,
        x,
    })
}

/// Settings for [`find_reference`].
#[derive(Debug, Clone)]
pub struct ReferenceConfig {
    pub tol: Tolerance,
    pub max_iter: usize,
    /// Starting point of the fixed-point iteration (zero when absent).
    pub seed: Option<Matrix>,
    /// Extra iterations spent driving the increment down to round-off once
    /// the convergence threshold is met.
    pub polish_iter: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            max_iter: 10_000,
            seed: None,
            polish_iter: 500,
        }
    }
}

/// Where an accepted reference solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Supplied,
    FixedPoint,
}

/// Outcome of the reference search. Failing to find a solution is not an
/// error: callers fall back to the full recursion.
// Built once per search, so the size of the success variant is harmless.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum ReferenceSearch {
    Found {
        solution: CgdareSolution,
        source: ReferenceSource,
        /// Iteration at which the convergence threshold was first met.
        iterations: usize,
    },
    NotFound {
        iterations: usize,
        last_change: f64,
        reason: String,
    },
}

impl ReferenceSearch {
    pub fn solution(&self) -> Option<&CgdareSolution> {
        match self {
            ReferenceSearch::Found { solution, .. } => Some(solution),
            ReferenceSearch::NotFound { .. } => None,
        }
    }

    pub fn into_solution(self) -> Option<CgdareSolution> {
        match self {
            ReferenceSearch::Found { solution, .. } => Some(solution),
            ReferenceSearch::NotFound { .. } => None,
        }
    }
}

const DIVERGENCE_LIMIT: f64 = 1e14;

/// Uses the supplied `X_ref` when present, otherwise iterates
/// `X ← riccati_map(X)` to a fixed point.
pub fn find_reference(p: &LqProblem, config: &ReferenceConfig) -> Result<ReferenceSearch> {
    p.check_dimensions()?;
    let tol = &config.tol;
    let t = &p.triple;

    if let Some(x_ref) = &p.x_ref {
        let sol = closed_loop(x_ref, t, tol)?;
        if sol.is_accepted(tol) {
            return Ok(ReferenceSearch::Found {
                solution: sol,
                source: ReferenceSource::Supplied,
                iterations: 0,
            });
        }
        return Err(Error::ReferenceRejected {
            residual: sol.residual_norm,
            kernel: sol.kernel_condition_residual,
        });
    }

    let n = t.n();
    let mut x = match &config.seed {
        Some(seed) => {
            if seed.shape() != (n, n) {
                return Err(Error::Dimension {
                    field: "seed".into(),
                    expected: format!("{n}x{n}"),
                    found: format!("{}x{}", seed.nrows(), seed.ncols()),
                });
            }
            symmetrize(seed)
        }
        None => Matrix::zeros(n, n),
    };

    let mut converged_at: Option<usize> = None;
    let mut best_change = f64::INFINITY;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..config.max_iter {
        iterations = it;
        let next = riccati_map(&x, t, tol)?;
        let change = (&next - &x).norm();
        last_change = change;
        if !change.is_finite() || next.norm() > DIVERGENCE_LIMIT {
            return Ok(ReferenceSearch::NotFound {
                iterations: it,
                last_change: change,
                reason: "fixed-point iteration diverged".into(),
            });
        }
        match converged_at {
            None => {
                if change <= tol.residual_threshold(next.norm()) {
                    converged_at = Some(it);
                    best_change = change;
                }
                x = next;
            }
            Some(start) => {
                let floor = 4.0 * f64::EPSILON * (1.0 + next.norm());
                if change >= best_change {
                    // stagnated at round-off; keep the better of the two
                    break;
                }
                best_change = change;
                x = next;
                if change <= floor || it - start >= config.polish_iter {
                    break;
                }
            }
        }
    }

    let Some(found_at) = converged_at else {
        return Ok(ReferenceSearch::NotFound {
            iterations,
            last_change,
            reason: format!("no convergence within {} iterations", config.max_iter),
        });
    };
    let sol = closed_loop(&x, t, tol)?;
    if !sol.kernel_condition_ok {
        return Ok(ReferenceSearch::NotFound {
            iterations: found_at,
            last_change,
            reason: format!(
                "limit violates the kernel condition (residual {:.3e})",
                sol.kernel_condition_residual
            ),
        });
    }
    if sol.residual_norm > sol.residual_threshold(tol) {
        return Ok(ReferenceSearch::NotFound {
            iterations: found_at,
            last_change,
            reason: format!("limit has residual {:.3e}", sol.residual_norm),
        });
    }
    Ok(ReferenceSearch::Found {
        solution: sol,
        source: ReferenceSource::FixedPoint,
        iterations: found_at,
    })
}

/// Residual of `D(X) − D(Y) = Δ − A_YᵀΔA_Y + A_YᵀΔ B R_X† BᵀΔ A_Y`.
pub fn quadratic_identity_residual(
    x: &Matrix,
    y: &Matrix,
    t: &PopovTriple,
    tol: &Tolerance,
) -> Result<f64> {
    let sx = closed_loop(x, t, tol)?;
    let sy = closed_loop(y, t, tol)?;
    quadratic_identity_residual_of(&sx, &sy, t, tol)
}

fn quadratic_identity_residual_of(
    sx: &CgdareSolution,
    sy: &CgdareSolution,
    t: &PopovTriple,
    tol: &Tolerance,
) -> Result<f64> {
    let delta = &sx.x - &sy.x;
    let lhs = residual(&sx.x, t, tol)? - residual(&sy.x, t, tol)?;
    let ay = &sy.a_x;
    let rx_pinv = pinv(&sx.r_x, tol)?;
    let rhs = &delta - ay.transpose() * &delta * ay
        + ay.transpose() * &delta * &t.b * rx_pinv * t.b.transpose() * &delta * ay;
    Ok((lhs - rhs).norm())
}

/// Residual of `D(X) − D(Y) = Δ − A_YᵀΔA_X`.
pub fn bilinear_identity_residual(
    x: &Matrix,
    y: &Matrix,
    t: &PopovTriple,
    tol: &Tolerance,
) -> Result<f64> {
    let sx = closed_loop(x, t, tol)?;
    let sy = closed_loop(y, t, tol)?;
    bilinear_identity_residual_of(&sx, &sy, t, tol)
}

fn bilinear_identity_residual_of(
    sx: &CgdareSolution,
    sy: &CgdareSolution,
    t: &PopovTriple,
    tol: &Tolerance,
) -> Result<f64> {
    let delta = &sx.x - &sy.x;
    let lhs = residual(&sx.x, t, tol)? - residual(&sy.x, t, tol)?;
    let rhs = &delta - sy.a_x.transpose() * &delta * &sx.a_x;
    Ok((lhs - rhs).norm())
}

/// Norms of the `(1,1)` and `(1,2)` blocks of `Δ` in the basis `[U U_c]`,
/// plus `‖ΔU‖`. Two solutions coincide along `im U` iff the first two vanish,
/// iff the third does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoincidenceBlocks {
    pub delta_u: f64,
    pub block_11: f64,
    pub block_12: f64,
}

pub fn coincidence_blocks(
    delta: &Matrix,
    u: &Matrix,
    tol: &Tolerance,
) -> Result<CoincidenceBlocks> {
    let uc = crate::linalg::orthonormal_complement(u, tol)?;
    let du = delta * u;
    Ok(CoincidenceBlocks {
        delta_u: spectral_norm(&du),
        block_11: spectral_norm(&(u.transpose() * &du)),
        block_12: spectral_norm(&(u.transpose() * delta * uc)),
    })
}

/// Measured residuals comparing two solutions of the same triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `max ‖(X − Y)u‖` over unit `u` in either nilpotent subspace.
    pub coincidence_residual: f64,
    /// `‖P_X − P_Y‖₂` between projectors onto `ker(A_X)ⁿ` and `ker(A_Y)ⁿ`.
    pub subspace_distance: f64,
    pub dim_u_x: usize,
    pub dim_u_y: usize,
    pub nu_x: usize,
    pub nu_y: usize,
    pub inertia_x: Inertia,
    pub inertia_y: Inertia,
    pub inertia_equal: bool,
    /// `‖D(X) − D(Y) − (Δ − A_YᵀΔA_X)‖`
    pub bilinear_identity_residual: f64,
    /// `‖D(X) − D(Y) − (Δ − A_YᵀΔA_Y + A_YᵀΔBR_X†BᵀΔA_Y)‖`
    pub quadratic_identity_residual: f64,
    /// `‖Δ − A_YᵀΔA_X‖`; vanishes when both residuals do.
    pub difference_stein_residual: f64,
}

impl ComparisonReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialises")
    }
}

pub fn compare_solutions(
    xs: &CgdareSolution,
    ys: &CgdareSolution,
    t: &PopovTriple,
    tol: &Tolerance,
) -> Result<ComparisonReport> {
    let n = t.n();
    for (name, s) in [("X", xs), ("Y", ys)] {
        if s.x.shape() != (n, n) || s.r_x.shape() != (t.m(), t.m()) {
            return Err(Error::Dimension {
                field: name.into(),
                expected: format!("solution of an n = {n}, m = {} triple", t.m()),
                found: format!("{}x{}", s.x.nrows(), s.x.ncols()),
            });
        }
    }
    let delta = &xs.x - &ys.x;
    let coincidence_residual =
        spectral_norm(&(&delta * &xs.u)).max(spectral_norm(&(&delta * &ys.u)));
    Ok(ComparisonReport {
        coincidence_residual,
        subspace_distance: subspace_distance(&xs.u, &ys.u),
        dim_u_x: xs.dim_u(),
        dim_u_y: ys.dim_u(),
        nu_x: xs.nu,
        nu_y: ys.nu,
        inertia_x: xs.inertia_rx,
        inertia_y: ys.inertia_rx,
        inertia_equal: xs.inertia_rx == ys.inertia_rx,
        bilinear_identity_residual: bilinear_identity_residual_of(xs, ys, t, tol)?,
        quadratic_identity_residual: quadratic_identity_residual_of(xs, ys, t, tol)?,
        difference_stein_residual: (&delta - ys.a_x.transpose() * &delta * &xs.a_x).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_psd, Vector};
    use crate::model::{
        multi_solution_family, normal_matrix, random_problem, rng_from_seed, ProblemKind,
    };

    const PHI: f64 = 1.618_033_988_749_895;

    fn one(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_triple() -> PopovTriple {
        PopovTriple {
            a: one(1.0),
            b: one(1.0),
            q: one(1.0),
            s: one(0.0),
            r: one(1.0),
        }
    }

    fn problem(triple: PopovTriple) -> LqProblem {
        let n = triple.n();
        LqProblem {
            triple,
            terminal: Matrix::zeros(n, n),
            horizon: 5,
            x0: None,
            x_ref: None,
        }
    }

    /// Decoupled scalar-J problem: A = diag(0, 1), B = [0; 1], Q = I, R = 1.
    fn decoupled() -> PopovTriple {
        PopovTriple {
            a: Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            b: Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            q: Matrix::identity(2, 2),
            s: Matrix::zeros(2, 1),
            r: one(1.0),
        }
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn residual_examples() {
        let t = scalar_triple();
        assert!(residual(&one(PHI), &t, &tol()).unwrap()[(0, 0)].abs() < 1e-15);
        assert!((residual(&one(1.0), &t, &tol()).unwrap()[(0, 0)] + 0.5).abs() < 1e-15);

        // Q = S R† Sᵀ makes X = 0 a fixed point.
        let mut rng = rng_from_seed(3);
        let s = normal_matrix(&mut rng, 3, 2);
        let l = normal_matrix(&mut rng, 2, 2);
        let r = &l * l.transpose();
        let q = symmetrize(&(&s * pinv(&r, &tol()).unwrap() * s.transpose()));
        let t = PopovTriple {
            a: normal_matrix(&mut rng, 3, 3),
            b: normal_matrix(&mut rng, 3, 2),
            q,
            s,
            r,
        };
        assert!(residual(&Matrix::zeros(3, 3), &t, &tol()).unwrap().norm() < 1e-13);
    }

    #[test]
    fn closed_loop_scalar() {
        let sol = closed_loop(&one(PHI), &scalar_triple(), &tol()).unwrap();
        assert!((sol.k_x[(0, 0)] - PHI / (1.0 + PHI)).abs() < 1e-15);
        assert!((sol.a_x[(0, 0)] - 1.0 / (1.0 + PHI)).abs() < 1e-15);
        assert_eq!((sol.nu, sol.dim_u()), (0, 0));
        assert!(sol.is_accepted(&tol()));
    }

    #[test]
    fn closed_loop_without_control() {
        let mut t = random_problem(3, 2, 1, ProblemKind::Generic)
            .unwrap()
            .triple;
        t.b = Matrix::zeros(3, 2);
        let x = crate::model::random_psd(&mut rng_from_seed(4), 3);
        let sol = closed_loop(&x, &t, &tol()).unwrap();
        assert!((&sol.k_x - pinv(&t.r, &tol()).unwrap() * t.s.transpose()).norm() < 1e-14);
        assert_eq!(sol.a_x, t.a);
    }

    #[test]
    fn closed_loop_decoupled_scalar_j() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, PHI]);
        let sol = closed_loop(&x, &decoupled(), &tol()).unwrap();
        assert!(sol.is_accepted(&tol()));
        assert!(sol.a_x[(0, 0)].abs() < 1e-15);
        assert!((sol.a_x[(1, 1)] - 0.381_966_011_250_105_1).abs() < 1e-15);
        assert_eq!((sol.nu, sol.dim_u()), (1, 1));
        assert!((sol.u[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn find_reference_scalar_converges_to_golden_ratio() {
        let res = find_reference(&problem(scalar_triple()), &ReferenceConfig::default()).unwrap();
        match res {
            ReferenceSearch::Found {
                solution,
                iterations,
                source,
            } => {
                assert_eq!(source, ReferenceSource::FixedPoint);
                assert!((solution.x[(0, 0)] - PHI).abs() < 1e-9);
                assert!(iterations < 200);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn find_reference_accepts_zero_fixed_point_immediately() {
        let mut rng = rng_from_seed(9);
        let s = normal_matrix(&mut rng, 2, 1);
        let r = one(2.0);
        let q = symmetrize(&(&s * s.transpose() * 0.5));
        let t = PopovTriple {
            a: normal_matrix(&mut rng, 2, 2),
            b: normal_matrix(&mut rng, 2, 1),
            q,
            s,
            r,
        };
        match find_reference(&problem(t), &ReferenceConfig::default()).unwrap() {
            ReferenceSearch::Found {
                solution,
                iterations,
                ..
            } => {
                assert_eq!(iterations, 0);
                assert!(solution.x.norm() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn find_reference_reports_divergence() {
        let t = PopovTriple {
            a: one(2.0),
            b: one(0.0),
            q: one(1.0),
            s: one(0.0),
            r: one(1.0),
        };
        let res = find_reference(&problem(t), &ReferenceConfig::default()).unwrap();
        assert!(matches!(res, ReferenceSearch::NotFound { .. }));
    }

    #[test]
    fn supplied_reference_is_verified() {
        let mut p = problem(scalar_triple());
        p.x_ref = Some(one(PHI));
        let res = find_reference(&p, &ReferenceConfig::default()).unwrap();
        assert!(matches!(
            res,
            ReferenceSearch::Found {
                source: ReferenceSource::Supplied,
                ..
            }
        ));

        p.x_ref = Some(one(1.0));
        match find_reference(&p, &ReferenceConfig::default()) {
            Err(Error::ReferenceRejected { residual, .. }) => {
                assert!((residual - 0.5).abs() < 1e-15)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compare_identical_solutions() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, PHI]);
        let sol = closed_loop(&x, &decoupled(), &tol()).unwrap();
        let report = compare_solutions(&sol, &sol, &decoupled(), &tol()).unwrap();
        assert_eq!(report.coincidence_residual, 0.0);
        assert_eq!(report.subspace_distance, 0.0);
        assert!(report.inertia_equal);
        assert!(report.bilinear_identity_residual < 1e-15);
        assert!(report.quadratic_identity_residual < 1e-15);
    }

    #[test]
    fn compare_stabilising_and_antistabilising_roots() {
        let t = decoupled();
        let psi_minus = (1.0 - 5f64.sqrt()) / 2.0;
        let x = closed_loop(
            &Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, PHI]),
            &t,
            &tol(),
        )
        .unwrap();
        let y = closed_loop(
            &Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, psi_minus]),
            &t,
            &tol(),
        )
        .unwrap();
        assert!(x.is_accepted(&tol()) && y.is_accepted(&tol()));
        let report = compare_solutions(&x, &y, &t, &tol()).unwrap();
        assert!(report.coincidence_residual < 1e-15);
        assert!(report.subspace_distance < 1e-15);
        assert_eq!((report.nu_x, report.nu_y), (1, 1));
        // R_X = 1 + X₂₂ is positive for both roots.
        assert!(report.inertia_equal);
        assert!(report.difference_stein_residual < 1e-14);
    }

    #[test]
    fn identities_hold_off_the_solution_set() {
        let t = decoupled();
        let y = closed_loop(
            &Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, PHI]),
            &t,
            &tol(),
        )
        .unwrap();
        let pert = crate::model::random_psd(&mut rng_from_seed(12), 2);
        let x = closed_loop(&(&y.x + pert), &t, &tol()).unwrap();
        assert!(!x.is_accepted(&tol()));
        let report = compare_solutions(&x, &y, &t, &tol()).unwrap();
        assert!(report.bilinear_identity_residual < 1e-13);
        assert!(report.quadratic_identity_residual < 1e-13);
    }

    #[test]
    fn coincidence_blocks_vanish_together() {
        let mut rng = rng_from_seed(21);
        let q = crate::model::random_orthogonal(&mut rng, 4);
        let u = q.columns(0, 2).into_owned();
        let uc = q.columns(2, 2).into_owned();
        // Δ vanishing on U: Δ = U_c W U_cᵀ
        let w = crate::model::random_psd(&mut rng, 2);
        let good = &uc * &w * uc.transpose();
        let b = coincidence_blocks(&good, &u, &tol()).unwrap();
        assert!(b.delta_u < 1e-14 && b.block_11 < 1e-14 && b.block_12 < 1e-14);
        // Generic Δ: both sides of the equivalence fail together.
        let bad = symmetrize(&normal_matrix(&mut rng, 4, 4));
        let b = coincidence_blocks(&bad, &u, &tol()).unwrap();
        assert!(b.delta_u > 1e-3);
        assert!(b.block_11.max(b.block_12) > 1e-3);
    }

    #[test]
    fn family_solutions_coincide_on_nilpotent_subspace() {
        for seed in 0..5 {
            let fam = multi_solution_family(2, 2, seed).unwrap();
            let t = &fam.problem.triple;
            let sols: Vec<_> = fam
                .solutions
                .iter()
                .map(|x| closed_loop(x, t, &tol()).unwrap())
                .collect();
            for s in &sols {
                assert!(
                    s.is_accepted(&tol()),
                    "seed {seed}: residual {}",
                    s.residual_norm
                );
                assert_eq!(s.dim_u(), 2);
                assert_eq!(s.nu, 2);
            }
            for s in &sols[1..] {
                let r = compare_solutions(&sols[0], s, t, &tol()).unwrap();
                assert!(r.coincidence_residual < 1e-8, "{r:?}");
                assert!(r.subspace_distance < 1e-8, "{r:?}");
            }
            assert!(is_psd(&sols[0].x, &tol()));
        }
    }

    #[test]
    fn nilpotent_problem_reference_contains_jordan_block() {
        for seed in 0..10 {
            let p = crate::model::random_nilpotent_problem(5, 2, 3, seed).unwrap();
            let sol = find_reference(&p, &ReferenceConfig::default())
                .unwrap()
                .into_solution()
                .unwrap();
            assert!(sol.dim_u() >= 3);
            let x0 = Vector::from_element(5, 1.0);
            assert!(x0.norm() > 0.0);
        }
    }

    #[test]
    fn compare_rejects_mismatched_triples() {
        let x = closed_loop(&one(PHI), &scalar_triple(), &tol()).unwrap();
        let y = closed_loop(
            &Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, PHI]),
            &decoupled(),
            &tol(),
        )
        .unwrap();
        assert!(matches!(
            compare_solutions(&x, &y, &decoupled(), &tol()),
            Err(Error::Dimension { .. })
        ));
    }
}
