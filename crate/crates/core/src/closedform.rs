//! Non-iterative solution of the reduced recursion.
//!
//! Around a solution `Ψ` of the reduced algebraic equation (zero by default)
//! every trajectory of the reduced recursion is `Ψ_t = Λ_t Ξ_t⁻¹` with
//! `Ξ_t` and `Λ_t` affine in powers of the closed loop `A_Ψ`. The two free
//! parameters `K1`, `K2` are fixed by the terminal value, and the only
//! equation to solve is a Stein equation for `Y`.

use nalgebra::Complex;
use serde::Serialize;

use crate::cgdare::CgdareSolution;
use crate::error::{Error, Result};
use crate::grde::GrdeTrajectory;
use crate::linalg::{
    eigenvalues, ensure_square, matrix_power, rank, reciprocal_condition, singular_values,
    spectral_norm, symmetrize, Matrix, Tolerance,
};
use crate::model::{validate, LqProblem};
use crate::reduction::{build_reduction, phase_one, Checkpoint, ReducedSystem};

/// Solves `A Y Aᵀ − Y + C = 0` through the vectorised system
/// `(I − A ⊗ A) vec Y = vec C`.
pub fn solve_stein(a: &Matrix, c: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    ensure_square(a, "A")?;
    let d = a.nrows();
    if c.shape() != (d, d) {
        return Err(Error::Dimension {
            field: "C".into(),
            expected: format!("{d}x{d}"),
            found: format!("{}x{}", c.nrows(), c.ncols()),
        });
    }
    if d == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let eig = eigenvalues(a)?;
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cutoff = tol.rank_rel.sqrt() * (1.0 + radius * radius);
    for li in &eig {
        for lj in &eig {
            let gap = (Complex::new(1.0, 0.0) - li * lj).norm();
            if gap <= cutoff {
                return Err(Error::SteinUnsolvable(format!(
                    "eigenvalues {li} and {lj} have product within {gap:.3e} of one"
                )));
            }
        }
    }
    let lhs = Matrix::identity(d * d, d * d) - a.kronecker(a);
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let vec_y = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SteinUnsolvable("vectorised system is singular".into()))?;
    let y = symmetrize(&Matrix::from_column_slice(d, d, vec_y.as_slice()));
    let res = stein_residual(a, &y, c);
    if res > tol.residual_threshold(y.norm() + c.norm()) {
        return Err(Error::SteinUnsolvable(format!(
            "residual {res:.3e} after solve"
        )));
    }
    Ok(y)
}

/// `‖A Y Aᵀ − Y + C‖`.
pub fn stein_residual(a: &Matrix, y: &Matrix, c: &Matrix) -> f64 {
    (a * y * a.transpose() - y + c).norm()
}

/// Everything the closed form needs, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormData {
    pub system: ReducedSystem,
    /// Reference solution of the reduced algebraic equation.
    pub psi: Matrix,
    /// `(R0 + B2ᵀΨB2)⁻¹`
    pub w_inv: Matrix,
    /// `Z − B2 (R0 + B2ᵀΨB2)⁻¹ B2ᵀΨZ`
    pub a_psi: Matrix,
    /// `(R0 + B2ᵀΨB2)⁻¹ B2ᵀΨZ`
    pub k_psi: Matrix,
    pub y: Matrix,
    pub stein_residual: f64,
    /// `K_Ψ Y A_Ψᵀ − (R0 + B2ᵀΨB2)⁻¹ B2ᵀ`
    pub k_star: Matrix,
    pub k1: Matrix,
    pub k2: Matrix,
    /// Reduced horizon `T'`.
    pub horizon_prime: usize,
    pub psi_terminal: Matrix,
}

/// Conditioning floor below which a matrix counts as numerically singular
/// for the closed form.
fn singular_floor(tol: &Tolerance, dim: usize) -> f64 {
    tol.rank_rel * dim.max(1) as f64
}

impl ClosedFormData {
    /// Prepares the closed form around `psi` (zero when absent) for the
    /// terminal value `psi_terminal` at reduced horizon `horizon_prime`.
    pub fn new(
        system: ReducedSystem,
        psi: Option<&Matrix>,
        psi_terminal: &Matrix,
        horizon_prime: usize,
        tol: &Tolerance,
    ) -> Result<Self> {
        let d = system.dim();
        let m = system.r0.nrows();
        let psi = psi.map(symmetrize).unwrap_or_else(|| Matrix::zeros(d, d));
        for (name, mat) in [("Psi", &psi), ("Psi_terminal", psi_terminal)] {
            if mat.shape() != (d, d) {
                return Err(Error::Dimension {
                    field: name.into(),
                    expected: format!("{d}x{d}"),
                    found: format!("{}x{}", mat.nrows(), mat.ncols()),
                });
            }
        }
        let fixed = (system.step(&psi, tol)? - &psi).norm();
        if fixed > tol.residual_threshold(psi.norm()) {
            return Err(Error::InvalidInput(format!(
                "reference Psi does not solve the reduced equation (residual {fixed:.3e})"
            )));
        }
        let w = symmetrize(&(&system.r0 + system.b2.transpose() * &psi * &system.b2));
        if rank(&w, tol) < m {
            let what = if psi.norm() == 0.0 {
                "R0 singular"
            } else {
                "R0 + B2ᵀΨB2 singular"
            };
            return Err(Error::ClosedFormInapplicable(what.into()));
        }
        let w_inv = w
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::ClosedFormInapplicable("R0 singular".into()))?;
        let k_psi = &w_inv * system.b2.transpose() * &psi * &system.z;
        let a_psi = &system.z - &system.b2 * &k_psi;
        if d > 0 && rank(&a_psi, tol) < d {
            return Err(Error::ClosedFormInapplicable(
                "closed loop of Psi is singular".into(),
            ));
        }
        let c = symmetrize(&(&system.b2 * &w_inv * system.b2.transpose()));
        let y = solve_stein(&a_psi, &c, tol)?;
        let stein_residual = stein_residual(&a_psi, &y, &c);
        let k_star = &k_psi * &y * a_psi.transpose() - &w_inv * system.b2.transpose();
        let mut cf = Self {
            system,
            psi,
            w_inv,
            a_psi,
            k_psi,
            y,
            stein_residual,
            k_star,
            k1: Matrix::zeros(d, d),
            k2: Matrix::zeros(d, d),
            horizon_prime,
            psi_terminal: symmetrize(psi_terminal),
        };
        let (k1, k2) = closed_form_params(&cf, tol)?;
        cf.k1 = k1;
        cf.k2 = k2;
        Ok(cf)
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }
}

/// `K2 = Ψ − Ψ_{T'}` and `K1 = (A_Ψ^{T'})⁻¹ (I − Y K2)`.
pub fn closed_form_params(cf: &ClosedFormData, tol: &Tolerance) -> Result<(Matrix, Matrix)> {
    let d = cf.dim();
    let k2 = &cf.psi - &cf.psi_terminal;
    let power = matrix_power(&cf.a_psi, cf.horizon_prime);
    if d > 0 && reciprocal_condition(&power) <= singular_floor(tol, d) {
        return Err(Error::Conditioning(format!(
            "closed loop raised to the power {} is numerically singular; use the iterative path",
            cf.horizon_prime
        )));
    }
    let rhs = Matrix::identity(d, d) - &cf.y * &k2;
    let k1 = power
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Conditioning("closed-loop power is singular".into()))?;
    Ok((k1, k2))
}

/// `Ξ_t`, `Λ_t`, `Ψ_t` for `t = 0, …, T'` and `Ω_t` for `t < T'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormTrajectory {
    pub xi: Vec<Matrix>,
    pub lambda: Vec<Matrix>,
    pub omega: Vec<Matrix>,
    pub psi: Vec<Matrix>,
    /// `‖Ψ_{T'} − Ψ_terminal‖`
    pub terminal_mismatch: f64,
}

/// Evaluates
/// `Ξ_t = A_Ψ^t K1 + Y (A_Ψᵀ)^{T'−t} K2`,
/// `Λ_t = Ψ A_Ψ^t K1 + (ΨY − I)(A_Ψᵀ)^{T'−t} K2`,
/// `Ω_t = −K_Ψ A_Ψ^t K1 − K⋆ (A_Ψᵀ)^{T'−t−1} K2` and `Ψ_t = Λ_t Ξ_t⁻¹`.
///
/// `A_Ψ^t K1` is formed as `(A_Ψ^{T'−t})⁻¹ (I − Y K2)` by repeated solves, so
/// no power larger than the horizon requires is ever inverted.
pub fn closed_form_trajectory(
    cf: &ClosedFormData,
    tol: &Tolerance,
) -> Result<ClosedFormTrajectory> {
    let d = cf.dim();
    let horizon = cf.horizon_prime;
    let id = Matrix::identity(d, d);
    let lu = cf.a_psi.clone().lu();
    let a_t = cf.a_psi.transpose();
    let psi_y = &cf.psi * &cf.y - &id;

    // s = T' − t runs upward from 0.
    let mut fwd = &id - &cf.y * &cf.k2; // A^{t} K1 at t = T'
    let mut bwd = cf.k2.clone(); // (Aᵀ)^{T'−t} K2 at t = T'
    let mut xi = vec![Matrix::zeros(0, 0); horizon + 1];
    let mut lambda = vec![Matrix::zeros(0, 0); horizon + 1];
    let mut omega = vec![Matrix::zeros(0, 0); horizon];
    let mut xi_scale = vec![0.0; horizon + 1];
    for s in 0..=horizon {
        let t = horizon - s;
        let y_bwd = &cf.y * &bwd;
        xi_scale[t] = spectral_norm(&fwd) + spectral_norm(&y_bwd);
        xi[t] = &fwd + y_bwd;
        lambda[t] = &cf.psi * &fwd + &psi_y * &bwd;
        if s < horizon {
            let prev_bwd = &bwd;
            fwd = lu
                .solve(&fwd)
                .ok_or_else(|| Error::Conditioning("closed loop of Psi is singular".into()))?;
            let omega_t = -(&cf.k_psi * &fwd) - &cf.k_star * prev_bwd;
            bwd = &a_t * prev_bwd;
            omega[t - 1] = omega_t;
        }
    }

    let floor = singular_floor(tol, d);
    let mut psi = Vec::with_capacity(horizon + 1);
    for (t, (x, l)) in xi.iter().zip(&lambda).enumerate() {
        // Ξ_t is a sum of two terms that may cancel; judge its smallest
        // singular value against their size, not against Ξ_t itself.
        if d > 0 && singular_values(x).min() <= floor * xi_scale[t] {
            return Err(Error::ClosedFormInapplicable(format!(
                "Xi_{t} is numerically singular"
            )));
        }
        // Ψ_t = Λ_t Ξ_t⁻¹  ⇔  Ξ_tᵀ Ψ_tᵀ = Λ_tᵀ
        let sol = x
            .transpose()
            .lu()
            .solve(&l.transpose())
            .ok_or_else(|| Error::ClosedFormInapplicable(format!("Xi_{t} is singular")))?;
        psi.push(symmetrize(&sol.transpose()));
    }
    let terminal_mismatch = (&psi[horizon] - &cf.psi_terminal).norm();
    if terminal_mismatch > tol.residual_threshold(cf.psi_terminal.norm()) {
        return Err(Error::ClosedFormInapplicable(format!(
            "terminal value reproduced with error {terminal_mismatch:.3e}"
        )));
    }
    Ok(ClosedFormTrajectory {
        xi,
        lambda,
        omega,
        psi,
        terminal_mismatch,
    })
}

/// Diagnostics of a closed-form solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormReport {
    pub nu: usize,
    pub dim_u: usize,
    pub reduced_dim: usize,
    pub horizon_prime: usize,
    pub checkpoint: Checkpoint,
    pub stein_residual: f64,
    pub terminal_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormSolution {
    pub trajectory: GrdeTrajectory,
    pub report: ClosedFormReport,
}

/// `ν` full steps, then the closed form over the reduced horizon. Every
/// refusal is returned as an error so the caller can choose a fallback.
pub fn solve_closed_form(
    p: &LqProblem,
    sol: &CgdareSolution,
    tol: &Tolerance,
) -> Result<ClosedFormSolution> {
    validate(p, tol)?.into_result()?;
    let rd = build_reduction(p, sol, tol)?;
    if p.horizon < rd.nu {
        return Err(Error::ClosedFormInapplicable(format!(
            "horizon {} shorter than nilpotency index {}",
            p.horizon, rd.nu
        )));
    }
    let one = phase_one(p, &rd, tol)?;
    if !one.checkpoint.passed() {
        let c = one.checkpoint;
        return Err(Error::ClosedFormInapplicable(format!(
            "checkpoint blocks {:.3e}, {:.3e} exceed {:.3e}",
            c.block_11, c.block_12, c.threshold
        )));
    }
    let horizon_prime = p.horizon - rd.nu;
    let cf = ClosedFormData::new(rd.system(), None, &one.psi_terminal, horizon_prime, tol)?;
    let traj = closed_form_trajectory(&cf, tol)?;

    let mut xs: Vec<Matrix> = traj.psi.iter().map(|psi| rd.reassemble(psi)).collect();
    xs.extend(one.tail.into_iter().skip(1));
    Ok(ClosedFormSolution {
        trajectory: GrdeTrajectory::from_cost_to_go(xs, &p.triple, tol)?,
        report: ClosedFormReport {
            nu: rd.nu,
            dim_u: rd.dim_u(),
            reduced_dim: rd.reduced_dim(),
            horizon_prime,
            checkpoint: one.checkpoint,
            stein_residual: cf.stein_residual,
            terminal_mismatch: traj.terminal_mismatch,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normal_matrix, random_psd, rng_from_seed};

    const PHI: f64 = 1.618_033_988_749_895;
    const Z: f64 = 0.381_966_011_250_105_1;

    fn one(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn scalar_system() -> ReducedSystem {
        ReducedSystem::new(one(Z), one(1.0), one(1.0 + PHI)).unwrap()
    }

    #[test]
    fn stein_degenerate_cases() {
        let mut rng = rng_from_seed(1);
        let c = random_psd(&mut rng, 3);
        assert!((solve_stein(&Matrix::zeros(3, 3), &c, &tol()).unwrap() - &c).norm() < 1e-15);
        let a = normal_matrix(&mut rng, 3, 3) * 0.3;
        assert!(
            solve_stein(&a, &Matrix::zeros(3, 3), &tol())
                .unwrap()
                .norm()
                < 1e-15
        );
    }

    #[test]
    fn stein_scalar_matches_geometric_series() {
        let c = 1.0 / (1.0 + PHI);
        let y = solve_stein(&one(Z), &one(c), &tol()).unwrap()[(0, 0)];
        assert!((y - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        let series: f64 = (0..200).map(|k| c * Z.powi(2 * k)).sum();
        assert!((y - series).abs() < 1e-15);
    }

    #[test]
    fn stein_matches_summation_when_stable() {
        let mut rng = rng_from_seed(5);
        let a = normal_matrix(&mut rng, 4, 4);
        let a = &a * (0.8 / crate::linalg::spectral_norm(&a));
        let c = random_psd(&mut rng, 4);
        let y = solve_stein(&a, &c, &tol()).unwrap();
        let mut sum = Matrix::zeros(4, 4);
        let mut term = c.clone();
        for _ in 0..400 {
            sum += &term;
            term = &a * term * a.transpose();
        }
        assert!((y - sum).norm() < 1e-12);
    }

    #[test]
    fn stein_unstable_but_solvable() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.3]);
        let c = Matrix::identity(2, 2);
        let y = solve_stein(&a, &c, &tol()).unwrap();
        assert!(stein_residual(&a, &y, &c) < 1e-12);
    }

    #[test]
    fn stein_refuses_reciprocal_eigenvalues() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!(matches!(
            solve_stein(&a, &Matrix::identity(2, 2), &tol()),
            Err(Error::SteinUnsolvable(_))
        ));
        assert!(matches!(
            solve_stein(&one(1.0), &one(1.0), &tol()),
            Err(Error::SteinUnsolvable(_))
        ));
    }

    #[test]
    fn scalar_parameters() {
        let cf = ClosedFormData::new(scalar_system(), None, &one(1.0 - PHI), 4, &tol()).unwrap();
        assert!((cf.k2[(0, 0)] - (PHI - 1.0)).abs() < 1e-15);
        let expected = Z.powi(-4) * (1.0 - (PHI - 1.0) / 5f64.sqrt());
        assert!((cf.k1[(0, 0)] - expected).abs() < 1e-10 * expected);
        // φ⁸ (1 − (φ − 1)/√5)
        assert!((cf.k1[(0, 0)] - 33.994_116_628_998).abs() < 1e-9);
        assert!(cf.stein_residual < 1e-15);
        assert_eq!(cf.a_psi, one(Z));
    }

    #[test]
    fn scalar_trajectory_matches_iteration() {
        let sys = scalar_system();
        let cf = ClosedFormData::new(sys.clone(), None, &one(1.0 - PHI), 4, &tol()).unwrap();
        let traj = closed_form_trajectory(&cf, &tol()).unwrap();
        let iter = sys.iterate(&one(1.0 - PHI), 4, &tol()).unwrap();
        for (a, b) in traj.psi.iter().zip(&iter) {
            assert!((a - b).amax() < 1e-9);
        }
        assert!((&traj.xi[4] - Matrix::identity(1, 1)).norm() < 1e-15);
        assert!((traj.lambda[4][(0, 0)] - (1.0 - PHI)).abs() < 1e-15);
        assert_eq!(traj.omega.len(), 4);
    }

    #[test]
    fn fixed_point_terminal_is_constant() {
        let cf = ClosedFormData::new(scalar_system(), None, &one(0.0), 6, &tol()).unwrap();
        assert_eq!(cf.k2, one(0.0));
        assert!((cf.k1[(0, 0)] - Z.powi(-6)).abs() < 1e-9 * Z.powi(-6));
        let traj = closed_form_trajectory(&cf, &tol()).unwrap();
        assert!(traj.psi.iter().all(|p| p.norm() < 1e-15));
    }

    #[test]
    fn zero_input_gives_pure_powers() {
        let sys = ReducedSystem::new(one(0.6), one(0.0), one(1.0)).unwrap();
        let cf = ClosedFormData::new(sys.clone(), None, &one(2.0), 5, &tol()).unwrap();
        assert_eq!(cf.y, one(0.0));
        assert!((cf.k1[(0, 0)] - 0.6f64.powi(-5)).abs() < 1e-12);
        let traj = closed_form_trajectory(&cf, &tol()).unwrap();
        let iter = sys.iterate(&one(2.0), 5, &tol()).unwrap();
        for (a, b) in traj.psi.iter().zip(&iter) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn random_reduced_problems_match_iteration() {
        for seed in 0..10 {
            let mut rng = rng_from_seed(100 + seed);
            let z = crate::model::random_dynamics(&mut rng, 2);
            let b2 = normal_matrix(&mut rng, 2, 1);
            let r0 = random_psd(&mut rng, 1) + one(0.5);
            let sys = ReducedSystem::new(z, b2, r0).unwrap();
            let terminal = random_psd(&mut rng, 2);
            let cf = ClosedFormData::new(sys.clone(), None, &terminal, 6, &tol()).unwrap();
            let traj = closed_form_trajectory(&cf, &tol()).unwrap();
            let iter = sys.iterate(&terminal, 6, &tol()).unwrap();
            for (a, b) in traj.psi.iter().zip(&iter) {
                assert!((a - b).norm() / (1.0 + b.norm()) < 1e-8, "seed {seed}");
            }
        }
    }

    #[test]
    fn refuses_singular_input_weight() {
        let sys = ReducedSystem::new(one(0.5), one(1.0), one(0.0)).unwrap();
        match ClosedFormData::new(sys, None, &one(1.0), 3, &tol()) {
            Err(Error::ClosedFormInapplicable(reason)) => assert_eq!(reason, "R0 singular"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refuses_singular_xi() {
        // R0 + B2²Ψ_{T'} = 0 makes Ξ_0 vanish.
        let sys = scalar_system();
        let cf = ClosedFormData::new(sys, None, &one(-(1.0 + PHI)), 1, &tol()).unwrap();
        assert!(cf.xi_is_refused(&tol()));
    }

    impl ClosedFormData {
        fn xi_is_refused(&self, tol: &Tolerance) -> bool {
            matches!(
                closed_form_trajectory(self, tol),
                Err(Error::ClosedFormInapplicable(_))
            )
        }
    }

    #[test]
    fn rejects_non_solution_reference() {
        let res = ClosedFormData::new(scalar_system(), Some(&one(0.3)), &one(0.0), 2, &tol());
        assert!(matches!(res, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn nonzero_reference_solution() {
        // The anti-stabilising root of the scalar reduced equation.
        let sys = scalar_system();
        let (z, r) = (Z, 1.0 + PHI);
        let psi = r * (z * z - 1.0);
        assert!((sys.step(&one(psi), &tol()).unwrap()[(0, 0)] - psi).abs() < 1e-12);
        let cf = ClosedFormData::new(sys.clone(), Some(&one(psi)), &one(-0.4), 5, &tol()).unwrap();
        assert!((cf.a_psi[(0, 0)] - 1.0 / z).abs() < 1e-10);
        let traj = closed_form_trajectory(&cf, &tol()).unwrap();
        let iter = sys.iterate(&one(-0.4), 5, &tol()).unwrap();
        for (a, b) in traj.psi.iter().zip(&iter) {
            assert!((a - b).amax() < 1e-9);
        }
    }
}
