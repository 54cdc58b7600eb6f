//! The extended symplectic pencil `N − zM` and the singularity criteria that
//! tie it to the closed loop of a Riccati solution.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use serde::Serialize;

use crate::cgdare::CgdareSolution;
use crate::error::Result;
use crate::linalg::{
    pinv, rank, rank_scaled, zero_multiplicity, zero_multiplicity_scaled, Matrix, Tolerance,
};
use crate::model::{rng_from_seed, PopovTriple};

type CMatrix = DMatrix<Complex<f64>>;

/// `N − zM` with
/// `M = [[I, 0, 0], [0, −Aᵀ, 0], [0, −Bᵀ, 0]]` and
/// `N = [[A, 0, B], [Q, −I, S], [Sᵀ, 0, R]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticPencil {
    pub m: Matrix,
    pub n: Matrix,
}

impl SymplecticPencil {
    pub fn dim(&self) -> usize {
        self.n.nrows()
    }

    /// `N − zM` over the complex numbers.
    pub fn at(&self, z: Complex<f64>) -> CMatrix {
        let n = self.n.map(|v| Complex::new(v, 0.0));
        let m = self.m.map(|v| Complex::new(v, 0.0));
        n - m * z
    }
}

pub fn build(t: &PopovTriple) -> SymplecticPencil {
    let (n, m) = (t.n(), t.m());
    let dim = 2 * n + m;
    let mut mm = Matrix::zeros(dim, dim);
    let mut nn = Matrix::zeros(dim, dim);

    mm.view_mut((0, 0), (n, n)).fill_with_identity();
    mm.view_mut((n, n), (n, n)).copy_from(&(-t.a.transpose()));
    mm.view_mut((2 * n, n), (m, n))
        .copy_from(&(-t.b.transpose()));

    nn.view_mut((0, 0), (n, n)).copy_from(&t.a);
    nn.view_mut((0, 2 * n), (n, m)).copy_from(&t.b);
    nn.view_mut((n, 0), (n, n)).copy_from(&t.q);
    nn.view_mut((n, n), (n, n))
        .copy_from(&(-Matrix::identity(n, n)));
    nn.view_mut((n, 2 * n), (n, m)).copy_from(&t.s);
    nn.view_mut((2 * n, 0), (m, n)).copy_from(&t.s.transpose());
    nn.view_mut((2 * n, 2 * n), (m, m)).copy_from(&t.r);
    SymplecticPencil { m: mm, n: nn }
}

fn rank_deficient(m: &Matrix, tol: &Tolerance) -> bool {
    rank(m, tol) < m.nrows().min(m.ncols())
}

/// `A − B R† Sᵀ`.
pub fn feedthrough_free_dynamics(t: &PopovTriple, tol: &Tolerance) -> Result<Matrix> {
    Ok(&t.a - &t.b * pinv(&t.r, tol)? * t.s.transpose())
}

/// Singularity of `N` next to its two characterising conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NCriterion {
    pub n_singular: bool,
    pub r_singular: bool,
    pub abrs_singular: bool,
}

impl NCriterion {
    /// `N` singular iff `R` singular or `A − BR†Sᵀ` singular.
    pub fn consistent(&self) -> bool {
        self.n_singular == (self.r_singular || self.abrs_singular)
    }
}

pub fn n_singular_criterion(t: &PopovTriple, tol: &Tolerance) -> Result<NCriterion> {
    Ok(NCriterion {
        n_singular: rank_deficient(&build(t).n, tol),
        r_singular: rank_deficient(&t.r, tol),
        abrs_singular: rank_deficient(&feedthrough_free_dynamics(t, tol)?, tol),
    })
}

/// Singularity of `A_X` next to its two characterising conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClosedLoopCriterion {
    pub ax_singular: bool,
    /// `rank R < rank R_X`
    pub rank_drop: bool,
    pub abrs_singular: bool,
}

impl ClosedLoopCriterion {
    pub fn consistent(&self) -> bool {
        self.ax_singular == (self.rank_drop || self.abrs_singular)
    }
}

pub fn closed_loop_singular_criterion(
    t: &PopovTriple,
    sol: &CgdareSolution,
    tol: &Tolerance,
) -> Result<ClosedLoopCriterion> {
    Ok(ClosedLoopCriterion {
        ax_singular: rank_scaled(&sol.a_x, sol.a_x_scale, tol) < sol.a_x.nrows(),
        rank_drop: rank(&t.r, tol) < rank(&sol.r_x, tol),
        abrs_singular: rank_deficient(&feedthrough_free_dynamics(t, tol)?, tol),
    })
}

/// `|det(N − zM) − (−1)ⁿ det(A_X − zI) det(I − zA_Xᵀ) det R_X| / (1 + |det(N − zM)|)`.
pub fn det_identity_residual(
    pencil: &SymplecticPencil,
    sol: &CgdareSolution,
    z: Complex<f64>,
) -> f64 {
    let n = sol.a_x.nrows();
    let one = Complex::new(1.0, 0.0);
    let a_x = sol.a_x.map(|v| Complex::new(v, 0.0));
    let id = CMatrix::identity(n, n);
    let lhs = pencil.at(z).determinant();
    let sign = if n.is_multiple_of(2) { one } else { -one };
    let rhs = sign
        * (&a_x - &id * z).determinant()
        * (&id - a_x.transpose() * z).determinant()
        * sol.r_x.clone().determinant();
    (lhs - rhs).norm() / (1.0 + lhs.norm())
}

/// Largest residual of the determinant identity over the sample points.
pub fn det_identity_check(
    t: &PopovTriple,
    sol: &CgdareSolution,
    z_samples: &[Complex<f64>],
) -> f64 {
    let pencil = build(t);
    z_samples
        .iter()
        .map(|&z| det_identity_residual(&pencil, sol, z))
        .fold(0.0, f64::max)
}

/// `count` real sample points uniform in `[−2, 2]`, reproducible from `seed`.
pub fn real_samples(count: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| Complex::new(rng.gen_range(-2.0..=2.0), 0.0))
        .collect()
}

/// `count` complex sample points in the square `[−2, 2]²`.
pub fn complex_samples(count: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| Complex::new(rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0)))
        .collect()
}

/// Multiplicities of the eigenvalue at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MuReport {
    pub mu_ax: usize,
    pub mu_rx: usize,
    /// Of `[[A, B], [Sᵀ, R]]`.
    pub mu_block: usize,
    pub additive: bool,
}

/// `[[A, B], [Sᵀ, R]]`.
pub fn system_block(t: &PopovTriple) -> Matrix {
    let (n, m) = (t.n(), t.m());
    let mut blk = Matrix::zeros(n + m, n + m);
    blk.view_mut((0, 0), (n, n)).copy_from(&t.a);
    blk.view_mut((0, n), (n, m)).copy_from(&t.b);
    blk.view_mut((n, 0), (m, n)).copy_from(&t.s.transpose());
    blk.view_mut((n, n), (m, m)).copy_from(&t.r);
    blk
}

pub fn mu_bookkeeping(t: &PopovTriple, sol: &CgdareSolution, tol: &Tolerance) -> Result<MuReport> {
    let mu_ax = zero_multiplicity_scaled(&sol.a_x, sol.a_x_scale, tol)?;
    let mu_rx = zero_multiplicity(&sol.r_x, tol)?;
    let mu_block = zero_multiplicity(&system_block(t), tol)?;
    Ok(MuReport {
        mu_ax,
        mu_rx,
        mu_block,
        additive: mu_block == mu_ax + mu_rx,
    })
}

/// Everything the pencil module can say about a triple, with or without a
/// solution of the algebraic equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PencilReport {
    pub dim: usize,
    pub n_criterion: NCriterion,
    pub n_criterion_consistent: bool,
    pub closed_loop: Option<ClosedLoopCriterion>,
    pub closed_loop_consistent: Option<bool>,
    pub mu: Option<MuReport>,
    pub det_identity_residual: Option<f64>,
}

/// Number of sample points used by [`analyze`], split evenly between real
/// and complex values.
pub const ANALYZE_SAMPLES: usize = 20;

pub fn analyze(
    t: &PopovTriple,
    sol: Option<&CgdareSolution>,
    tol: &Tolerance,
) -> Result<PencilReport> {
    let n_criterion = n_singular_criterion(t, tol)?;
    let mut report = PencilReport {
        dim: 2 * t.n() + t.m(),
        n_criterion,
        n_criterion_consistent: n_criterion.consistent(),
        closed_loop: None,
        closed_loop_consistent: None,
        mu: None,
        det_identity_residual: None,
    };
    if let Some(sol) = sol {
        let cl = closed_loop_singular_criterion(t, sol, tol)?;
        report.closed_loop = Some(cl);
        report.closed_loop_consistent = Some(cl.consistent());
        report.mu = Some(mu_bookkeeping(t, sol, tol)?);
        let mut z = real_samples(ANALYZE_SAMPLES / 2, 0);
        z.extend(complex_samples(ANALYZE_SAMPLES / 2, 1));
        report.det_identity_residual = Some(det_identity_check(t, sol, &z));
    }
    Ok(report)
}
