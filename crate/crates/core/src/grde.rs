//! Backward generalised Riccati difference recursion, gain schedule,
//! simulation and cost evaluation.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linalg::{pinv, pinv_and_kernel_projector, symmetrize, Matrix, Tolerance, Vector};
use crate::model::{matrix_to_json, validate, vector_to_json, LqProblem, PopovTriple};

/// `(R + BᵀXB, AᵀXB + S)` for a given `X`.
pub(crate) fn riccati_blocks(x: &Matrix, t: &PopovTriple) -> (Matrix, Matrix) {
    let xb = x * &t.b;
    let r_x = symmetrize(&(&t.r + t.b.transpose() * &xb));
    let s_x = t.a.transpose() * &xb + &t.s;
    (r_x, s_x)
}

fn check_square_state(x: &Matrix, t: &PopovTriple) -> Result<()> {
    let n = t.n();
    if x.shape() != (n, n) {
        return Err(Error::Dimension {
            field: "X".into(),
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    Ok(())
}

/// One step of the recursion:
/// `AᵀXA − (AᵀXB + S)(R + BᵀXB)†(BᵀXA + Sᵀ) + Q`.
pub fn riccati_map(x: &Matrix, t: &PopovTriple, tol: &Tolerance) -> Result<Matrix> {
    check_square_state(x, t)?;
    let (r_x, s_x) = riccati_blocks(x, t);
    let r_pinv = pinv(&r_x, tol)?;
    let next = t.a.transpose() * x * &t.a - &s_x * r_pinv * s_x.transpose() + &t.q;
    Ok(symmetrize(&next))
}

/// Optimal gain `K = (R + BᵀXB)†(Sᵀ + BᵀXA)` and projector
/// `G = I − (R + BᵀXB)†(R + BᵀXB)` for the cost-to-go `X` of the next step.
pub fn gains(x_next: &Matrix, t: &PopovTriple, tol: &Tolerance) -> Result<(Matrix, Matrix)> {
    check_square_state(x_next, t)?;
    let (r_x, s_x) = riccati_blocks(x_next, t);
    let (r_pinv, g) = pinv_and_kernel_projector(&r_x, tol)?;
    Ok((&r_pinv * s_x.transpose(), g))
}

/// Solution of the recursion together with its gain schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct GrdeTrajectory {
    /// `X_0, …, X_T`.
    pub x: Vec<Matrix>,
    /// `K_0, …, K_{T−1}`.
    pub k: Vec<Matrix>,
    /// `G_0, …, G_{T−1}`.
    pub g: Vec<Matrix>,
}

impl GrdeTrajectory {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }

    /// Builds the trajectory from a cost-to-go sequence, computing the
    /// gains from each `X_{t+1}`.
    pub fn from_cost_to_go(x: Vec<Matrix>, t: &PopovTriple, tol: &Tolerance) -> Result<Self> {
        let mut k = Vec::with_capacity(x.len().saturating_sub(1));
        let mut g = Vec::with_capacity(x.len().saturating_sub(1));
        for x_next in x.iter().skip(1) {
            let (kt, gt) = gains(x_next, t, tol)?;
            k.push(kt);
            g.push(gt);
        }
        Ok(Self { x, k, g })
    }

    /// `{"X": [...], "K": [...], "G": [...]}` in the problem-file number format.
    pub fn to_json(&self) -> Value {
        let list = |ms: &[Matrix]| Value::Array(ms.iter().map(matrix_to_json).collect());
        let mut obj = Map::new();
        obj.insert("X".into(), list(&self.x));
        obj.insert("K".into(), list(&self.k));
        obj.insert("G".into(), list(&self.g));
        Value::Object(obj)
    }

    /// Largest relative deviation `‖X_t − Y_t‖ / (1 + ‖Y_t‖)` over the horizon.
    pub fn max_relative_difference(&self, reference: &GrdeTrajectory) -> f64 {
        if self.x.len() != reference.x.len() {
            return f64::INFINITY;
        }
        self.x
            .iter()
            .zip(&reference.x)
            .map(|(a, b)| (a - b).norm() / (1.0 + b.norm()))
            .fold(0.0, f64::max)
    }
}

/// Iterates the recursion backwards from `X_T = P`.
pub fn solve_full(p: &LqProblem, tol: &Tolerance) -> Result<GrdeTrajectory> {
    validate(p, tol)?.into_result()?;
    let t = &p.triple;
    let horizon = p.horizon;
    let mut xs = vec![Matrix::zeros(0, 0); horizon + 1];
    let mut ks = vec![Matrix::zeros(0, 0); horizon];
    let mut gs = vec![Matrix::zeros(0, 0); horizon];
    xs[horizon] = symmetrize(&p.terminal);
    for step in (0..horizon).rev() {
        let x_next = &xs[step + 1];
        let (r_x, s_x) = riccati_blocks(x_next, t);
        let (r_pinv, g) = pinv_and_kernel_projector(&r_x, tol)?;
        ks[step] = &r_pinv * s_x.transpose();
        gs[step] = g;
        let next = t.a.transpose() * x_next * &t.a - &s_x * &r_pinv * s_x.transpose() + &t.q;
        xs[step] = symmetrize(&next);
    }
    Ok(GrdeTrajectory {
        x: xs,
        k: ks,
        g: gs,
    })
}

/// States, inputs and accumulated cost of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub cost: f64,
}

impl Simulation {
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert(
            "states".into(),
            Value::Array(self.states.iter().map(vector_to_json).collect()),
        );
        obj.insert(
            "inputs".into(),
            Value::Array(self.inputs.iter().map(vector_to_json).collect()),
        );
        obj.insert("cost".into(), crate::model::json_number(self.cost));
        Value::Object(obj)
    }
}

/// Stage cost `[x; u]ᵀ Π [x; u]`.
pub fn stage_cost(t: &PopovTriple, x: &Vector, u: &Vector) -> f64 {
    let xq = (x.transpose() * &t.q * x)[(0, 0)];
    let xs = (x.transpose() * &t.s * u)[(0, 0)];
    let ur = (u.transpose() * &t.r * u)[(0, 0)];
    xq + 2.0 * xs + ur
}

/// Cost of an open-loop input sequence, by direct rollout.
pub fn rollout_cost(p: &LqProblem, x0: &Vector, inputs: &[Vector]) -> Result<f64> {
    let t = &p.triple;
    if inputs.len() != p.horizon {
        return Err(Error::Dimension {
            field: "inputs".into(),
            expected: format!("{} steps", p.horizon),
            found: format!("{} steps", inputs.len()),
        });
    }
    let mut x = x0.clone();
    let mut cost = 0.0;
    for u in inputs {
        if u.len() != t.m() {
            return Err(Error::Dimension {
                field: "inputs".into(),
                expected: format!("{}", t.m()),
                found: format!("{}", u.len()),
            });
        }
        cost += stage_cost(t, &x, u);
        x = &t.a * &x + &t.b * u;
    }
    cost += (x.transpose() * &p.terminal * &x)[(0, 0)];
    Ok(cost)
}

/// Applies `u_t = −K_t x_t + G_t v_t` and accumulates the cost
/// `Σ [x; u]ᵀ Π [x; u] + x_Tᵀ P x_T`.
pub fn simulate(
    p: &LqProblem,
    traj: &GrdeTrajectory,
    x0: &Vector,
    v: Option<&[Vector]>,
) -> Result<Simulation> {
    let t = &p.triple;
    let horizon = traj.horizon();
    if x0.len() != t.n() {
        return Err(Error::Dimension {
            field: "x0".into(),
            expected: format!("{}", t.n()),
            found: format!("{}", x0.len()),
        });
    }
    if let Some(v) = v {
        if v.len() != horizon {
            return Err(Error::Dimension {
                field: "v".into(),
                expected: format!("{horizon} steps"),
                found: format!("{} steps", v.len()),
            });
        }
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut x = x0.clone();
    let mut cost = 0.0;
    for step in 0..horizon {
        let mut u = -(&traj.k[step] * &x);
        if let Some(v) = v {
            u += &traj.g[step] * &v[step];
        }
        cost += stage_cost(t, &x, &u);
        let next = &t.a * &x + &t.b * &u;
        states.push(std::mem::replace(&mut x, next));
        inputs.push(u);
    }
    cost += (x.transpose() * &p.terminal * &x)[(0, 0)];
    states.push(x);
    Ok(Simulation {
        states,
        inputs,
        cost,
    })
}

/// [`simulate`] using the problem's own initial state.
pub fn simulate_problem(
    p: &LqProblem,
    traj: &GrdeTrajectory,
    v: Option<&[Vector]>,
) -> Result<Simulation> {
    simulate(p, traj, p.require_x0()?, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_psd;
    use crate::model::{random_problem, ProblemKind};

    fn scalar(a: f64, b: f64, q: f64, s: f64, r: f64, p: f64, t: usize) -> LqProblem {
        let one = |v| Matrix::from_element(1, 1, v);
        LqProblem {
            triple: PopovTriple {
                a: one(a),
                b: one(b),
                q: one(q),
                s: one(s),
                r: one(r),
            },
            terminal: one(p),
            horizon: t,
            x0: Some(Vector::from_element(1, 1.0)),
            x_ref: None,
        }
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn riccati_map_scalar_values() {
        let p = scalar(1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2);
        let one = |v| Matrix::from_element(1, 1, v);
        for (x, expected) in [(0.0, 1.0), (1.0, 1.5), (1.5, 1.6)] {
            let y = riccati_map(&one(x), &p.triple, &tol()).unwrap();
            assert!((y[(0, 0)] - expected).abs() < 1e-15, "{x} -> {}", y[(0, 0)]);
        }
    }

    #[test]
    fn riccati_map_without_control_is_lyapunov_step() {
        let mut p = random_problem(3, 2, 1, ProblemKind::Generic).unwrap();
        p.triple.b = Matrix::zeros(3, 2);
        let x = crate::model::random_psd(&mut crate::model::rng_from_seed(2), 3);
        let y = riccati_map(&x, &p.triple, &tol()).unwrap();
        let t = &p.triple;
        let expected = t.a.transpose() * &x * &t.a + &t.q
            - &t.s * pinv(&t.r, &tol()).unwrap() * t.s.transpose();
        // With B = 0 the control term is S R† Sᵀ; with S = 0 it disappears.
        assert!((y - expected).norm() < 1e-12);
    }

    #[test]
    fn riccati_map_all_zero_control_weights() {
        let p = scalar(0.5, 0.0, 2.0, 0.0, 0.0, 0.0, 1);
        let y = riccati_map(&Matrix::zeros(1, 1), &p.triple, &tol()).unwrap();
        assert_eq!(y[(0, 0)], 2.0);
    }

    #[test]
    fn riccati_map_rejects_wrong_shape() {
        let p = scalar(1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2);
        assert!(matches!(
            riccati_map(&Matrix::zeros(2, 2), &p.triple, &tol()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn two_step_scalar_trajectory() {
        let p = scalar(1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2);
        let traj = solve_full(&p, &tol()).unwrap();
        let xs: Vec<f64> = traj.x.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(xs, vec![1.5, 1.0, 0.0]);
        assert!((traj.k[0][(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(traj.k[1][(0, 0)], 0.0);
        assert!(traj.g[0][(0, 0)].abs() < 1e-15);
        assert!(traj.g[1][(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn uncontrolled_recursion_decouples() {
        let mut p = random_problem(3, 2, 4, ProblemKind::Generic).unwrap();
        p.triple.b = Matrix::zeros(3, 2);
        p.triple.s = Matrix::zeros(3, 2);
        p.horizon = 4;
        let traj = solve_full(&p, &tol()).unwrap();
        let t = &p.triple;
        for step in 0..=4 {
            let k = 4 - step;
            let ak = crate::linalg::matrix_power(&t.a, k);
            let mut expected = ak.transpose() * &p.terminal * &ak;
            for j in 0..k {
                let aj = crate::linalg::matrix_power(&t.a, j);
                expected += aj.transpose() * &t.q * &aj;
            }
            assert!((&traj.x[step] - expected).norm() < 1e-12);
        }
        let r_pinv = pinv(&t.r, &tol()).unwrap();
        for step in 0..4 {
            assert!((&traj.k[step] - &r_pinv * t.s.transpose()).norm() < 1e-14);
            assert!((&traj.g[step] - (Matrix::identity(2, 2) - &r_pinv * &t.r)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_horizon() {
        let p = scalar(1.0, 1.0, 1.0, 0.0, 1.0, 0.7, 0);
        let traj = solve_full(&p, &tol()).unwrap();
        assert_eq!(traj.x.len(), 1);
        assert_eq!(traj.x[0][(0, 0)], 0.7);
        assert!(traj.k.is_empty() && traj.g.is_empty());
    }

    #[test]
    fn solve_rejects_invalid_problem() {
        let p = scalar(1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 2);
        assert!(matches!(solve_full(&p, &tol()), Err(Error::Validation(_))));
    }

    #[test]
    fn scalar_simulation() {
        let p = scalar(1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2);
        let traj = solve_full(&p, &tol()).unwrap();
        let sim = simulate_problem(&p, &traj, None).unwrap();
        assert!((sim.inputs[0][0] + 0.5).abs() < 1e-15);
        assert!((sim.states[1][0] - 0.5).abs() < 1e-15);
        assert_eq!(sim.inputs[1][0], 0.0);
        assert!((sim.states[2][0] - 0.5).abs() < 1e-15);
        assert!((sim.cost - 1.5).abs() < 1e-15);

        // G_t = 0 here, so any v leaves the run unchanged.
        let v = vec![Vector::from_element(1, 3.0), Vector::from_element(1, -2.0)];
        let sim_v = simulate_problem(&p, &traj, Some(&v)).unwrap();
        assert_eq!(sim_v, sim);
    }

    #[test]
    fn zero_initial_state_costs_nothing() {
        let p = random_problem(3, 2, 3, ProblemKind::Generic).unwrap();
        let traj = solve_full(&p, &tol()).unwrap();
        let sim = simulate(&p, &traj, &Vector::zeros(3), None).unwrap();
        assert_eq!(sim.cost, 0.0);
        assert!(sim.states.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn missing_x0_is_an_error() {
        let mut p = scalar(1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2);
        p.x0 = None;
        let traj = solve_full(&p, &tol()).unwrap();
        assert!(matches!(
            simulate_problem(&p, &traj, None),
            Err(Error::MissingInitialState)
        ));
    }

    #[test]
    fn trajectory_invariants_on_corpus() {
        for kind in ProblemKind::ALL {
            for seed in 0..10 {
                let mut p = random_problem(4, 2, seed, kind).unwrap();
                p.horizon = 12;
                let traj = solve_full(&p, &tol()).unwrap();
                assert_eq!(traj.x[12], p.terminal);
                for x in &traj.x {
                    assert!(is_psd(x, &tol()), "{kind} seed {seed}");
                }
                for g in &traj.g {
                    assert!((g * g - g).norm() < 1e-9);
                    assert!((g - g.transpose()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn trajectory_json_shape() {
        let p = scalar(1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 2);
        let json = solve_full(&p, &tol()).unwrap().to_json();
        assert_eq!(json["X"].as_array().unwrap().len(), 3);
        assert_eq!(json["K"].as_array().unwrap().len(), 2);
        assert_eq!(json["G"].as_array().unwrap().len(), 2);
    }
}
