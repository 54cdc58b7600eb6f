//! Backward recursion on a problem with a singular input weight, then a
//! closed-loop rollout whose cost matches x0ᵀX_0x0.

use singular_lq::grde::{simulate, solve_full};
use singular_lq::linalg::Tolerance;
use singular_lq::model::{random_problem, ProblemKind};

fn main() -> singular_lq::Result<()> {
    let tol = Tolerance::default();
    let mut p = random_problem(4, 2, 11, ProblemKind::SingularR)?;
    p.horizon = 12;
    // Without a terminal weight the last input is partly free.
    p.terminal.fill(0.0);
    let x0 = p.require_x0()?.clone();

    let traj = solve_full(&p, &tol)?;
    for (t, x) in traj.x.iter().enumerate().step_by(4) {
        println!("t = {t:>2}  trace X_t = {:.6}", x.trace());
    }
    // G_t spans the input directions the cost cannot see; they are free.
    let free: Vec<usize> = traj.g.iter().map(|g| g.trace().round() as usize).collect();
    println!("free input directions per step: {free:?}");

    let sim = simulate(&p, &traj, &x0, None)?;
    let predicted = (x0.transpose() * &traj.x[0] * &x0)[(0, 0)];
    println!("predicted cost {predicted:.12}");
    println!("simulated cost {:.12}", sim.cost);
    Ok(())
}
