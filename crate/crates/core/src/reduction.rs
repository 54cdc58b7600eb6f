//! Order reduction of the difference recursion.
//!
//! Given a solution `X∘` of the algebraic equation, the difference
//! `Δ_t = X_t − X∘` vanishes on `ker(A_X∘)ⁿ` after `ν` backward steps. In an
//! orthonormal basis `[U U_c]` adapted to that subspace the rest of the
//! horizon is governed by a homogeneous recursion on the `U_c` block alone.

use serde::Serialize;

use crate::cgdare::CgdareSolution;
use crate::error::{Error, Result};
use crate::grde::{gains, riccati_map, solve_full, GrdeTrajectory};
use crate::linalg::{
    matrix_power, orthonormal_complement, pinv, pinv_and_kernel_projector, rank, spectral_norm,
    symmetrize, Matrix, Tolerance,
};
use crate::model::{validate, LqProblem};

/// The reference solution expressed in a basis that splits off the
/// nilpotent part of its closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionData {
    /// `[U U_c]`, orthogonal.
    pub t_orth: Matrix,
    pub u: Matrix,
    pub u_c: Matrix,
    pub nu: usize,
    /// Nilpotent diagonal block of the transformed closed loop.
    pub n0: Matrix,
    /// Non-singular diagonal block of the transformed closed loop.
    pub z: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    /// `R + BᵀX∘B`; equals `R + B2ᵀX∘₂₂B2` when `B1 = 0`.
    pub r0: Matrix,
    pub x_circ: Matrix,
    pub x11: Matrix,
    pub x12: Matrix,
    pub x22: Matrix,
    /// `‖U_cᵀ A_X∘ U‖₂`, zero in exact arithmetic.
    pub lower_left_norm: f64,
    /// `‖N0^ν‖₂`, zero in exact arithmetic.
    pub n0_power_norm: f64,
}

impl ReductionData {
    pub fn dim_u(&self) -> usize {
        self.u.ncols()
    }

    /// Dimension of the reduced recursion.
    pub fn reduced_dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn system(&self) -> ReducedSystem {
        ReducedSystem {
            z: self.z.clone(),
            b2: self.b2.clone(),
            r0: self.r0.clone(),
        }
    }

    /// `X∘ + U_c Ψ U_cᵀ`.
    pub fn reassemble(&self, psi: &Matrix) -> Matrix {
        symmetrize(&(&self.x_circ + &self.u_c * psi * self.u_c.transpose()))
    }

    /// `U_cᵀ (X − X∘) U_c`.
    pub fn project(&self, x: &Matrix) -> Matrix {
        symmetrize(&(self.u_c.transpose() * (x - &self.x_circ) * &self.u_c))
    }
}

pub fn build_reduction(
    p: &LqProblem,
    sol: &CgdareSolution,
    tol: &Tolerance,
) -> Result<ReductionData> {
    let (n, m) = p.check_dimensions()?;
    if sol.x.shape() != (n, n) {
        return Err(Error::Dimension {
            field: "X_ref".into(),
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", sol.x.nrows(), sol.x.ncols()),
        });
    }
    if !sol.is_accepted(tol) {
        return Err(Error::ReferenceRejected {
            residual: sol.residual_norm,
            kernel: sol.kernel_condition_residual,
        });
    }
    let t = &p.triple;
    let k = sol.dim_u();
    let u = sol.u.clone();
    let u_c = orthonormal_complement(&u, tol)?;
    let mut t_orth = Matrix::zeros(n, n);
    t_orth.columns_mut(0, k).copy_from(&u);
    t_orth.columns_mut(k, n - k).copy_from(&u_c);

    let a_t = t_orth.transpose() * &sol.a_x * &t_orth;
    let n0 = a_t.view((0, 0), (k, k)).into_owned();
    let z = a_t.view((k, k), (n - k, n - k)).into_owned();
    let lower_left_norm = spectral_norm(&a_t.view((k, 0), (n - k, k)).into_owned());
    if n > k && rank(&z, tol) < n - k {
        return Err(Error::Internal(format!(
            "reduced closed-loop block of dimension {} is numerically singular",
            n - k
        )));
    }
    let b_t = t_orth.transpose() * &t.b;
    let b1 = b_t.rows(0, k).into_owned();
    let b2 = b_t.rows(k, n - k).into_owned();
    let x_t = symmetrize(&(t_orth.transpose() * &sol.x * &t_orth));
    let x11 = x_t.view((0, 0), (k, k)).into_owned();
    let x12 = x_t.view((0, k), (k, n - k)).into_owned();
    let x22 = x_t.view((k, k), (n - k, n - k)).into_owned();
    let r0 = symmetrize(&(&t.r + t.b.transpose() * &sol.x * &t.b));
    debug_assert_eq!(r0.shape(), (m, m));
    Ok(ReductionData {
        n0_power_norm: spectral_norm(&matrix_power(&n0, sol.nu)),
        t_orth,
        u,
        u_c,
        nu: sol.nu,
        n0,
        z,
        b1,
        b2,
        r0,
        x_circ: sol.x.clone(),
        x11,
        x12,
        x22,
        lower_left_norm,
    })
}

/// The data of the reduced homogeneous recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub z: Matrix,
    pub b2: Matrix,
    pub r0: Matrix,
}

impl ReducedSystem {
    pub fn new(z: Matrix, b2: Matrix, r0: Matrix) -> Result<Self> {
        let d = z.nrows();
        let m = r0.nrows();
        if z.ncols() != d || b2.shape() != (d, m) || r0.ncols() != m {
            return Err(Error::Dimension {
                field: "reduced system".into(),
                expected: format!("Z {d}x{d}, B2 {d}x{m}, R0 {m}x{m}"),
                found: format!(
                    "Z {}x{}, B2 {}x{}, R0 {}x{}",
                    z.nrows(),
                    z.ncols(),
                    b2.nrows(),
                    b2.ncols(),
                    r0.nrows(),
                    r0.ncols()
                ),
            });
        }
        Ok(Self { z, b2, r0 })
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    /// `ZᵀΨZ − ZᵀΨB2(R0 + B2ᵀΨB2)†B2ᵀΨZ`, re-symmetrised.
    pub fn step(&self, psi: &Matrix, tol: &Tolerance) -> Result<Matrix> {
        Ok(self.step_parts(psi, tol)?.next)
    }

    fn step_parts(&self, psi: &Matrix, tol: &Tolerance) -> Result<StepParts> {
        let d = self.dim();
        if psi.shape() != (d, d) {
            return Err(Error::Dimension {
                field: "Psi".into(),
                expected: format!("{d}x{d}"),
                found: format!("{}x{}", psi.nrows(), psi.ncols()),
            });
        }
        let b2t_psi = self.b2.transpose() * psi;
        let w = symmetrize(&(&self.r0 + &b2t_psi * &self.b2));
        let (w_pinv, w_kernel) = pinv_and_kernel_projector(&w, tol)?;
        let coupling = &b2t_psi * &self.z;
        let next = self.z.transpose() * psi * &self.z - coupling.transpose() * &w_pinv * &coupling;
        Ok(StepParts {
            next: symmetrize(&next),
            w_pinv,
            w_kernel,
            b2t_psi,
        })
    }

    /// `Ψ_0, …, Ψ_{T'}` by iterating [`ReducedSystem::step`] from `Ψ_{T'}`.
    pub fn iterate(
        &self,
        psi_terminal: &Matrix,
        horizon: usize,
        tol: &Tolerance,
    ) -> Result<Vec<Matrix>> {
        let mut out = vec![symmetrize(psi_terminal)];
        for _ in 0..horizon {
            let next = self.step(out.last().expect("non-empty"), tol)?;
            out.push(next);
        }
        out.reverse();
        Ok(out)
    }
}

struct StepParts {
    next: Matrix,
    w_pinv: Matrix,
    /// `I − W†W`.
    w_kernel: Matrix,
    b2t_psi: Matrix,
}

/// One step of the reduced recursion for the blocks in `rd`.
pub fn reduced_step(psi: &Matrix, rd: &ReductionData, tol: &Tolerance) -> Result<Matrix> {
    rd.system().step(psi, tol)
}

/// Block norms of `Tᵀ(X_{T−ν} − X∘)T` at the hand-over point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub block_11: f64,
    pub block_12: f64,
    /// `residual_rel (1 + ‖Δ‖₂)`
    pub threshold: f64,
}

impl Checkpoint {
    pub fn passed(&self) -> bool {
        self.block_11 <= self.threshold && self.block_12 <= self.threshold
    }
}

/// Result of the `ν` full steps from `X_T = P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOne {
    /// `X_{T−ν}, …, X_T`.
    pub tail: Vec<Matrix>,
    /// `U_cᵀ (X_{T−ν} − X∘) U_c`.
    pub psi_terminal: Matrix,
    pub checkpoint: Checkpoint,
}

/// Runs the full recursion for `ν` steps and measures the block structure
/// of the difference. Requires `T ≥ ν`.
pub fn phase_one(p: &LqProblem, rd: &ReductionData, tol: &Tolerance) -> Result<PhaseOne> {
    if p.horizon < rd.nu {
        return Err(Error::InvalidInput(format!(
            "horizon {} is shorter than the nilpotency index {}",
            p.horizon, rd.nu
        )));
    }
    let mut tail = vec![symmetrize(&p.terminal)];
    for _ in 0..rd.nu {
        let next = riccati_map(tail.last().expect("non-empty"), &p.triple, tol)?;
        tail.push(next);
    }
    tail.reverse();
    let delta = &tail[0] - &rd.x_circ;
    let k = rd.dim_u();
    let d_u = rd.u.transpose() * &delta;
    let checkpoint = Checkpoint {
        block_11: spectral_norm(&(&d_u * &rd.u)),
        block_12: spectral_norm(&(&d_u * &rd.u_c)),
        threshold: tol.residual_rel * (1.0 + spectral_norm(&delta)),
    };
    debug_assert_eq!(d_u.nrows(), k);
    Ok(PhaseOne {
        psi_terminal: rd.project(&tail[0]),
        tail,
        checkpoint,
    })
}

/// What the hybrid solver did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridReport {
    pub nu: usize,
    pub dim_u: usize,
    pub reduced_dim: usize,
    pub full_steps: usize,
    pub reduced_steps: usize,
    pub lower_left_norm: f64,
    pub checkpoint: Option<Checkpoint>,
    /// Set when the full recursion was used instead.
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridSolution {
    pub trajectory: GrdeTrajectory,
    pub report: HybridReport,
}

/// Relative size below which a decaying `Ψ` is replaced by the fixed point
/// zero; its contribution to `X_t` lies far below rounding.
pub const NEGLIGIBLE_PSI: f64 = 1e-150;

/// `ν` full steps, a structural checkpoint, then the reduced recursion for
/// the rest of the horizon. Falls back to the full recursion when `T < ν` or
/// the checkpoint fails.
pub fn solve_hybrid(
    p: &LqProblem,
    sol: &CgdareSolution,
    tol: &Tolerance,
) -> Result<HybridSolution> {
    validate(p, tol)?.into_result()?;
    let rd = build_reduction(p, sol, tol)?;
    let mut report = HybridReport {
        nu: rd.nu,
        dim_u: rd.dim_u(),
        reduced_dim: rd.reduced_dim(),
        full_steps: 0,
        reduced_steps: 0,
        lower_left_norm: rd.lower_left_norm,
        checkpoint: None,
        fallback_reason: None,
    };
    let fallback = |mut report: HybridReport, reason: String| -> Result<HybridSolution> {
        report.full_steps = p.horizon;
        report.reduced_steps = 0;
        report.fallback_reason = Some(reason);
        Ok(HybridSolution {
            trajectory: solve_full(p, tol)?,
            report,
        })
    };
    if p.horizon < rd.nu {
        let reason = format!(
            "horizon {} shorter than nilpotency index {}",
            p.horizon, rd.nu
        );
        return fallback(report, reason);
    }

    let one = phase_one(p, &rd, tol)?;
    report.checkpoint = Some(one.checkpoint);
    if !one.checkpoint.passed() {
        let c = one.checkpoint;
        let reason = format!(
            "checkpoint blocks {:.3e}, {:.3e} exceed {:.3e}",
            c.block_11, c.block_12, c.threshold
        );
        return fallback(report, reason);
    }

    let split = p.horizon - rd.nu;
    let t = &p.triple;
    let mut xs = vec![Matrix::zeros(0, 0); p.horizon + 1];
    let mut ks = vec![Matrix::zeros(0, 0); p.horizon];
    let mut gs = vec![Matrix::zeros(0, 0); p.horizon];
    for (i, x) in one.tail.into_iter().enumerate() {
        xs[split + i] = x;
    }
    let mut psi = one.psi_terminal;
    xs[split] = rd.reassemble(&psi);
    for step in split..p.horizon {
        (ks[step], gs[step]) = gains(&xs[step + 1], t, tol)?;
    }

    // With X = X∘ + U_cΨU_cᵀ the gain numerator is
    // Sᵀ + BᵀX∘A + B2ᵀΨ(U_cᵀA) and R + BᵀXB is the matrix the reduced step
    // pseudo-inverts, so no n × n product is needed per step.
    let s_circ = t.s.transpose() + t.b.transpose() * &rd.x_circ * &t.a;
    let uc_a = rd.u_c.transpose() * &t.a;
    let sys = rd.system();
    let negligible = NEGLIGIBLE_PSI * (1.0 + rd.x_circ.norm());
    for step in (0..split).rev() {
        let parts = sys.step_parts(&psi, tol)?;
        ks[step] = &parts.w_pinv * (&s_circ + parts.b2t_psi * &uc_a);
        gs[step] = parts.w_kernel;
        psi = parts.next;
        if psi.norm() <= negligible {
            // Zero is an exact fixed point; flushing keeps a decaying Ψ out
            // of subnormal arithmetic without any visible effect on X.
            psi.fill(0.0);
        }
        xs[step] = rd.reassemble(&psi);
    }
    report.full_steps = rd.nu;
    report.reduced_steps = split;
    Ok(HybridSolution {
        trajectory: GrdeTrajectory {
            x: xs,
            k: ks,
            g: gs,
        },
        report,
    })
}

/// Largest residuals of the difference recursion along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaCheck {
    /// `max_t ‖Δ_t − F_{t+1}Δ_{t+1}A_X∘‖`
    pub step_residual: f64,
    /// `max_{τ ≥ ν} ‖Δ_{T−τ}U‖₂`
    pub nilpotent_residual: f64,
}

/// Checks `Δ_t = F_{t+1}Δ_{t+1}A_X∘` with
/// `F = A_X∘ᵀ − A_X∘ᵀΔ_{t+1}B(R + BᵀX_{t+1}B)†Bᵀ`, and that `Δ_{T−τ}`
/// annihilates `ker(A_X∘)ⁿ` once `τ ≥ ν`.
pub fn delta_recursion_check(
    p: &LqProblem,
    sol: &CgdareSolution,
    traj: &GrdeTrajectory,
    tol: &Tolerance,
) -> Result<DeltaCheck> {
    let t = &p.triple;
    let horizon = traj.x.len().saturating_sub(1);
    let a = &sol.a_x;
    let deltas: Vec<Matrix> = traj.x.iter().map(|x| x - &sol.x).collect();
    let mut step_residual: f64 = 0.0;
    for step in 0..horizon {
        let d_next = &deltas[step + 1];
        let x_next = &traj.x[step + 1];
        let r_x = symmetrize(&(&t.r + t.b.transpose() * x_next * &t.b));
        let f = a.transpose() - a.transpose() * d_next * &t.b * pinv(&r_x, tol)? * t.b.transpose();
        step_residual = step_residual.max((&deltas[step] - f * d_next * a).norm());
    }
    let mut nilpotent_residual: f64 = 0.0;
    if sol.dim_u() > 0 {
        for tau in sol.nu..=horizon {
            nilpotent_residual =
                nilpotent_residual.max(spectral_norm(&(&deltas[horizon - tau] * &sol.u)));
        }
    }
    Ok(DeltaCheck {
        step_residual,
        nilpotent_residual,
    })
}
