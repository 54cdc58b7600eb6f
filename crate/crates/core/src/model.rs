//! Problem data, validation, the JSON problem file and seeded generators.
//!
//! # Problem file
//!
//! A JSON object with fields `n`, `m`, `A`, `B`, `Q`, `S`, `R`, `P` (row-major
//! nested arrays), `T` (integer horizon) and optionally `x0` (array) and
//! `X_ref` (a candidate algebraic solution). Numbers are written with 17
//! significant digits in scientific notation, which round-trips every `f64`
//! exactly. Unknown fields are rejected.
//!
//! # Generator
//!
//! [`random_problem`] is a pure function of `(n, m, seed, kind)`. It draws
//! from `Xoshiro256**` seeded through `SplitMix64` (`seed_from_u64`), with
//! standard normals from the ziggurat sampler of `rand_distr` and uniforms
//! from `rand`'s 53-bit conversion.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, ensure_finite, inertia, pinv, spectral_norm, symmetrize, Matrix, Tolerance, Vector,
};

/// System matrices and cost weights `(A, B, Q, S, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopovTriple {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub s: Matrix,
    pub r: Matrix,
}

impl PopovTriple {
    pub fn new(a: Matrix, b: Matrix, q: Matrix, s: Matrix, r: Matrix) -> Result<Self> {
        let t = Self { a, b, q, s, r };
        t.check_dimensions()?;
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Verifies shapes and finiteness; returns `(n, m)`.
    pub fn check_dimensions(&self) -> Result<(usize, usize)> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        expect_shape("A", &self.a, n, n)?;
        expect_shape("B", &self.b, n, m)?;
        expect_shape("Q", &self.q, n, n)?;
        expect_shape("S", &self.s, n, m)?;
        expect_shape("R", &self.r, m, m)?;
        for (name, mat) in [
            ("A", &self.a),
            ("B", &self.b),
            ("Q", &self.q),
            ("S", &self.s),
            ("R", &self.r),
        ] {
            ensure_finite(mat, name)?;
        }
        Ok((n, m))
    }

    /// The Popov matrix `Π = [[Q, S], [Sᵀ, R]]`.
    pub fn popov_matrix(&self) -> Matrix {
        let (n, m) = (self.n(), self.m());
        let mut pi = Matrix::zeros(n + m, n + m);
        pi.view_mut((0, 0), (n, n)).copy_from(&self.q);
        pi.view_mut((0, n), (n, m)).copy_from(&self.s);
        pi.view_mut((n, 0), (m, n)).copy_from(&self.s.transpose());
        pi.view_mut((n, n), (m, m)).copy_from(&self.r);
        pi
    }

    /// The triple in the coordinates `x = T x̃` for orthogonal `T`.
    pub fn rotated(&self, t: &Matrix) -> Self {
        let tt = t.transpose();
        Self {
            a: &tt * &self.a * t,
            b: &tt * &self.b,
            q: symmetrize(&(&tt * &self.q * t)),
            s: &tt * &self.s,
            r: self.r.clone(),
        }
    }
}

fn expect_shape(field: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::Dimension {
            field: field.to_string(),
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

/// A finite-horizon LQ problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    pub triple: PopovTriple,
    /// Terminal weight `P`.
    pub terminal: Matrix,
    /// Horizon `T`.
    pub horizon: usize,
    pub x0: Option<Vector>,
    /// User-supplied candidate solution of the algebraic equation.
    pub x_ref: Option<Matrix>,
}

impl LqProblem {
    pub fn n(&self) -> usize {
        self.triple.n()
    }

    pub fn m(&self) -> usize {
        self.triple.m()
    }

    pub fn check_dimensions(&self) -> Result<(usize, usize)> {
        let (n, m) = self.triple.check_dimensions()?;
        expect_shape("P", &self.terminal, n, n)?;
        ensure_finite(&self.terminal, "P")?;
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(Error::Dimension {
                    field: "x0".into(),
                    expected: format!("{n}"),
                    found: format!("{}", x0.len()),
                });
            }
            if !x0.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput("x0 has non-finite entries".into()));
            }
        }
        if let Some(x) = &self.x_ref {
            expect_shape("X_ref", x, n, n)?;
            ensure_finite(x, "X_ref")?;
        }
        Ok((n, m))
    }

    /// The initial state, or [`Error::MissingInitialState`].
    pub fn require_x0(&self) -> Result<&Vector> {
        self.x0.as_ref().ok_or(Error::MissingInitialState)
    }

    /// The problem in rotated state coordinates `x = T x̃`.
    pub fn rotated(&self, t: &Matrix) -> Self {
        let tt = t.transpose();
        Self {
            triple: self.triple.rotated(t),
            terminal: symmetrize(&(&tt * &self.terminal * t)),
            horizon: self.horizon,
            x0: self.x0.as_ref().map(|x| &tt * x),
            x_ref: self.x_ref.as_ref().map(|x| symmetrize(&(&tt * x * t))),
        }
    }
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }

    /// Converts a failed report into an error naming the failed checks.
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::Validation(self.failures().join(", ")))
        }
    }
}

/// Most negative eigenvalue reported as a nonnegative residual, judged
/// against the inertia cutoff.
fn psd_check(name: &'static str, m: &Matrix, tol: &Tolerance) -> Result<Check> {
    let sym = symmetrize(m);
    let eig = if sym.is_empty() {
        Vector::zeros(0)
    } else {
        sym.clone().symmetric_eigenvalues()
    };
    let residual = eig
        .iter()
        .fold(0.0_f64, |acc, &l| if -l > acc { -l } else { acc });
    let threshold = tol.rank_rel * eig.amax();
    let passed = inertia(&sym, tol)?.negative == 0;
    Ok(Check {
        name,
        passed,
        residual,
        threshold,
    })
}

fn symmetry_check(name: &'static str, m: &Matrix, tol: &Tolerance) -> Check {
    let residual = asymmetry(m);
    let threshold = tol.residual_threshold(m.norm());
    Check {
        name,
        passed: residual <= threshold,
        residual,
        threshold,
    }
}

/// Checks the standing assumptions: `Π = Πᵀ ≥ 0`, `ker R ⊆ ker S`,
/// `P = Pᵀ ≥ 0`. Dimension problems are errors; everything else is
/// reported.
pub fn validate(p: &LqProblem, tol: &Tolerance) -> Result<ValidationReport> {
    p.check_dimensions()?;
    let t = &p.triple;
    let pi = t.popov_matrix();
    let mut checks = vec![symmetry_check("popov_symmetric", &pi, tol)];
    checks.push(psd_check("popov_psd", &pi, tol)?);

    let m = t.m();
    let r_pinv = pinv(&symmetrize(&t.r), tol)?;
    let proj = Matrix::identity(m, m) - &r_pinv * &t.r;
    let residual = (&t.s * proj).norm() / (1.0 + t.s.norm());
    let threshold = tol.residual_threshold(0.0).max(tol.residual_rel);
    checks.push(Check {
        name: "kernel_inclusion",
        passed: residual <= threshold,
        residual,
        threshold,
    });

    checks.push(symmetry_check("terminal_symmetric", &p.terminal, tol));
    checks.push(psd_check("terminal_psd", &p.terminal, tol)?);

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { passed, checks })
}

// ---------------------------------------------------------------------------
// File format

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    m: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    s: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    t: usize,
    #[serde(default)]
    x0: Option<Vec<f64>>,
    #[serde(rename = "X_ref", default)]
    x_ref: Option<Vec<Vec<f64>>>,
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    let dim_err = |found: String| Error::Dimension {
        field: field.to_string(),
        expected: format!("{nrows}x{ncols}"),
        found,
    };
    if rows.len() != nrows {
        return Err(dim_err(format!("{} rows", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(dim_err(format!("row {i} with {} entries", row.len())));
        }
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Formats a float with 17 significant digits as a JSON number.
pub fn json_number(x: f64) -> Value {
    let text = format!("{x:.16e}");
    Value::Number(Number::from_str(&text).expect("scientific notation is valid JSON"))
}

pub fn matrix_to_json(m: &Matrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json_number(m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn vector_to_json(v: &Vector) -> Value {
    Value::Array(v.iter().map(|&x| json_number(x)).collect())
}

fn parse_error(err: serde_json::Error) -> Error {
    let message = err.to_string();
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(end) = rest.find('`') {
            return Error::MissingField(rest[..end].to_string());
        }
    }
    Error::Parse {
        location: format!("line {} column {}", err.line(), err.column()),
        message,
    }
}

/// Parses a problem document.
pub fn from_json_str(text: &str) -> Result<LqProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(parse_error)?;
    let (n, m) = (file.n, file.m);
    let triple = PopovTriple {
        a: rows_to_matrix("A", &file.a, n, n)?,
        b: rows_to_matrix("B", &file.b, n, m)?,
        q: rows_to_matrix("Q", &file.q, n, n)?,
        s: rows_to_matrix("S", &file.s, n, m)?,
        r: rows_to_matrix("R", &file.r, m, m)?,
    };
    let problem = LqProblem {
        triple,
        terminal: rows_to_matrix("P", &file.p, n, n)?,
        horizon: file.t,
        x0: file.x0.map(Vector::from_vec),
        x_ref: file
            .x_ref
            .map(|rows| rows_to_matrix("X_ref", &rows, n, n))
            .transpose()?,
    };
    problem.check_dimensions()?;
    Ok(problem)
}

/// Serialises a problem document.
pub fn to_json_value(p: &LqProblem) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("n".into(), Value::from(p.n()));
    obj.insert("m".into(), Value::from(p.m()));
    obj.insert("A".into(), matrix_to_json(&p.triple.a));
    obj.insert("B".into(), matrix_to_json(&p.triple.b));
    obj.insert("Q".into(), matrix_to_json(&p.triple.q));
    obj.insert("S".into(), matrix_to_json(&p.triple.s));
    obj.insert("R".into(), matrix_to_json(&p.triple.r));
    obj.insert("P".into(), matrix_to_json(&p.terminal));
    obj.insert("T".into(), Value::from(p.horizon));
    if let Some(x0) = &p.x0 {
        obj.insert("x0".into(), vector_to_json(x0));
    }
    if let Some(x) = &p.x_ref {
        obj.insert("X_ref".into(), matrix_to_json(x));
    }
    Value::Object(obj)
}

pub fn to_json_string(p: &LqProblem) -> String {
    serde_json::to_string_pretty(&to_json_value(p)).expect("problem serialises")
}

pub fn load(path: impl AsRef<Path>) -> Result<LqProblem> {
    let text = std::fs::read_to_string(path)?;
    from_json_str(&text)
}

pub fn save(p: &LqProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json_string(p) + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Generators

/// Family of generated problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// `Π = LLᵀ` with `R` strictly positive definite.
    Generic,
    /// `R` with a prescribed null space, `Π` still PSD.
    #[serde(rename = "singular_R")]
    SingularR,
    /// `A = diag(J, A₂)` with a nilpotent Jordan block `J` that `B = [0; B₂]`
    /// cannot reach.
    NilpotentBlock,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [
        ProblemKind::Generic,
        ProblemKind::SingularR,
        ProblemKind::NilpotentBlock,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Generic => "generic",
            ProblemKind::SingularR => "singular_R",
            ProblemKind::NilpotentBlock => "nilpotent_block",
        }
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(ProblemKind::Generic),
            "singular_R" | "singular_r" => Ok(ProblemKind::SingularR),
            "nilpotent_block" => Ok(ProblemKind::NilpotentBlock),
            other => Err(Error::InvalidInput(format!(
                "unknown problem kind `{other}` (expected generic, singular_R or nilpotent_block)"
            ))),
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Horizon assigned to generated problems; callers overwrite as needed.
pub const DEFAULT_HORIZON: usize = 10;

/// Size of the nilpotent block used by [`ProblemKind::NilpotentBlock`] when
/// none is given: `max(1, n / 2)`.
pub fn default_nilpotent_dim(n: usize) -> usize {
    (n / 2).max(1)
}

pub fn rng_from_seed(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random PSD matrix `WWᵀ / n`.
pub fn random_psd(rng: &mut impl Rng, n: usize) -> Matrix {
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let w = normal_matrix(rng, n, n);
    symmetrize(&(&w * w.transpose() / n as f64))
}

/// Random square matrix with spectral norm uniform in `[0.4, 1.1]`.
pub fn random_dynamics(rng: &mut impl Rng, n: usize) -> Matrix {
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let g = normal_matrix(rng, n, n);
    let scale = rng.gen_range(0.4..1.1);
    let norm = spectral_norm(&g);
    if norm == 0.0 {
        g
    } else {
        g * (scale / norm)
    }
}

/// Haar-ish random orthogonal matrix (QR of a Gaussian matrix with sign
/// correction).
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let qr = normal_matrix(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

/// Seeded random problem of the given kind.
pub fn random_problem(n: usize, m: usize, seed: u64, kind: ProblemKind) -> Result<LqProblem> {
    match kind {
        ProblemKind::NilpotentBlock => {
            random_nilpotent_problem(n, m, default_nilpotent_dim(n), seed)
        }
        _ => {
            check_sizes(n, m)?;
            let mut rng = rng_from_seed(seed);
            Ok(match kind {
                ProblemKind::Generic => generic(&mut rng, n, m),
                _ => singular_r(&mut rng, n, m),
            })
        }
    }
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput(format!(
            "problem sizes must be positive (n = {n}, m = {m})"
        )));
    }
    Ok(())
}

fn split_popov(pi: &Matrix, n: usize, m: usize) -> (Matrix, Matrix, Matrix) {
    let pi = symmetrize(pi);
    (
        pi.view((0, 0), (n, n)).into_owned(),
        pi.view((0, n), (n, m)).into_owned(),
        pi.view((n, n), (m, m)).into_owned(),
    )
}

fn finish(rng: &mut impl Rng, a: Matrix, b: Matrix, q: Matrix, s: Matrix, r: Matrix) -> LqProblem {
    let n = a.nrows();
    let terminal = random_psd(rng, n) * 0.5;
    let x0 = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    LqProblem {
        triple: PopovTriple { a, b, q, s, r },
        terminal,
        horizon: DEFAULT_HORIZON,
        x0: Some(x0),
        x_ref: None,
    }
}

fn generic(rng: &mut impl Rng, n: usize, m: usize) -> LqProblem {
    let a = random_dynamics(rng, n);
    let b = normal_matrix(rng, n, m);
    let l = normal_matrix(rng, n + m, n + m);
    let pi = &l * l.transpose() / (n + m) as f64;
    let (q, s, mut r) = split_popov(&pi, n, m);
    r += Matrix::identity(m, m) * 0.5;
    finish(rng, a, b, q, s, r)
}

/// Null space of `R` has dimension `ceil(m / 2)`; with `m = 1` this is
/// `R = 0` (and then `S = 0`).
fn singular_r(rng: &mut impl Rng, n: usize, m: usize) -> LqProblem {
    let a = random_dynamics(rng, n);
    let b = normal_matrix(rng, n, m);
    let null_dim = m.div_ceil(2);
    let null = random_orthogonal(rng, m).columns(0, null_dim).into_owned();
    let proj = Matrix::identity(m, m) - &null * null.transpose();
    let mut l = normal_matrix(rng, n + m, n + m);
    let lower = &proj * l.rows(n, m);
    l.rows_mut(n, m).copy_from(&lower);
    let pi = &l * l.transpose() / (n + m) as f64;
    let (q, s, mut r) = split_popov(&pi, n, m);
    // Strip round-off from the prescribed null directions.
    r = symmetrize(&(&proj * &r * &proj));
    let s = &s * &proj;
    finish(rng, a, b, q, s, r)
}

fn jordan_block(rng: &mut impl Rng, k: usize) -> Matrix {
    let mut j = Matrix::zeros(k, k);
    for i in 0..k.saturating_sub(1) {
        j[(i, i + 1)] = rng.gen_range(0.5..1.5);
    }
    j
}

/// Block-decoupled problem `A = diag(J, A₂)`, `B = [0; B₂]`, `S = 0`,
/// `Q = diag(Q₁, Q₂)` where `J` is a `nil_dim × nil_dim` nilpotent Jordan
/// block (nilpotency index `nil_dim`).
pub fn random_nilpotent_problem(
    n: usize,
    m: usize,
    nil_dim: usize,
    seed: u64,
) -> Result<LqProblem> {
    check_sizes(n, m)?;
    if nil_dim == 0 || nil_dim > n {
        return Err(Error::InvalidInput(format!(
            "nilpotent block size {nil_dim} must lie in 1..={n}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let k = nil_dim;
    let rest = n - k;
    let j = jordan_block(&mut rng, k);
    let a2 = random_dynamics(&mut rng, rest);
    let b2 = normal_matrix(&mut rng, rest, m);
    let q1 = random_psd(&mut rng, k);
    let q2 = random_psd(&mut rng, rest) + Matrix::identity(rest, rest) * 0.1;
    let lr = normal_matrix(&mut rng, m, m);
    let r = symmetrize(&(&lr * lr.transpose() / m as f64)) + Matrix::identity(m, m) * 0.5;

    let mut a = Matrix::zeros(n, n);
    a.view_mut((0, 0), (k, k)).copy_from(&j);
    a.view_mut((k, k), (rest, rest)).copy_from(&a2);
    let mut b = Matrix::zeros(n, m);
    b.view_mut((k, 0), (rest, m)).copy_from(&b2);
    let mut q = Matrix::zeros(n, n);
    q.view_mut((0, 0), (k, k)).copy_from(&q1);
    q.view_mut((k, k), (rest, rest)).copy_from(&q2);
    let s = Matrix::zeros(n, m);
    Ok(finish(&mut rng, a, b, q, s, r))
}

/// A problem with several known solutions of the constrained algebraic
/// equation, together with those solutions.
#[derive(Debug, Clone)]
pub struct SolutionFamily {
    pub problem: LqProblem,
    /// Dimension of the nilpotent block.
    pub nil_dim: usize,
    /// Solutions indexed by a bit mask: bit `i` set selects the negative
    /// root in the `i`-th scalar controlled channel. Entry 0 is the
    /// stabilising (positive semidefinite) solution.
    pub solutions: Vec<Matrix>,
}

/// Builds `A = diag(J, a₁, …, a_p)`, `B = [0; diag(b)]`, `Q = diag(Q₁, q)`,
/// `R = diag(r)`, `S = 0` in a random orthogonal basis. Each scalar channel
/// has two algebraic roots `x = (−β ± √(β² + 4b²qr)) / (2b²)` with
/// `β = r(1 − a²) − qb²`; the nilpotent block contributes the fixed
/// `X₁₁ = Σₖ (Jᵀ)ᵏ Q₁ Jᵏ`. Returns all `2^p` solutions.
pub fn multi_solution_family(nil_dim: usize, channels: usize, seed: u64) -> Result<SolutionFamily> {
    if nil_dim == 0 || channels == 0 || channels > 8 {
        return Err(Error::InvalidInput(
            "need nil_dim >= 1 and 1 <= channels <= 8".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let k = nil_dim;
    let p = channels;
    let n = k + p;
    let j = jordan_block(&mut rng, k);
    let q1 = random_psd(&mut rng, k);

    let mut x11 = Matrix::zeros(k, k);
    let mut jp = Matrix::identity(k, k);
    for _ in 0..k {
        x11 += jp.transpose() * &q1 * &jp;
        jp = &jp * &j;
    }

    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, p);
    let mut q = Matrix::zeros(n, n);
    let mut r = Matrix::zeros(p, p);
    a.view_mut((0, 0), (k, k)).copy_from(&j);
    q.view_mut((0, 0), (k, k)).copy_from(&q1);
    let mut roots = Vec::with_capacity(p);
    for i in 0..p {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let ai: f64 = sign * rng.gen_range(0.5..1.5);
        let bi: f64 = rng.gen_range(0.5..1.5);
        let qi: f64 = rng.gen_range(0.5..1.5);
        let ri: f64 = rng.gen_range(0.5..1.5);
        a[(k + i, k + i)] = ai;
        b[(k + i, i)] = bi;
        q[(k + i, k + i)] = qi;
        r[(i, i)] = ri;
        let beta = ri * (1.0 - ai * ai) - qi * bi * bi;
        let disc = (beta * beta + 4.0 * bi * bi * qi * ri).sqrt();
        let b2 = bi * bi;
        let plus = (-beta + disc) / (2.0 * b2);
        // product of roots is −qr/b², so compute the negative one from it
        let minus = -qi * ri / (b2 * plus);
        roots.push((plus, minus));
    }

    let rot = random_orthogonal(&mut rng, n);
    let mut solutions = Vec::with_capacity(1 << p);
    for mask in 0..(1usize << p) {
        let mut x = Matrix::zeros(n, n);
        x.view_mut((0, 0), (k, k)).copy_from(&x11);
        for (i, (plus, minus)) in roots.iter().enumerate() {
            x[(k + i, k + i)] = if mask & (1 << i) != 0 { *minus } else { *plus };
        }
        solutions.push(symmetrize(&(rot.transpose() * x * &rot)));
    }

    let base = LqProblem {
        triple: PopovTriple {
            a,
            b,
            q,
            s: Matrix::zeros(n, p),
            r,
        },
        terminal: Matrix::zeros(n, n),
        horizon: DEFAULT_HORIZON,
        x0: Some(Vector::from_fn(n, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        })),
        x_ref: None,
    };
    let mut problem = base.rotated(&rot);
    problem.x0 = base.x0.clone();
    Ok(SolutionFamily {
        problem,
        nil_dim: k,
        solutions,
    })
}
