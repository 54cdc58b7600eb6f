//! Solves the horizon as one stacked least-squares problem and compares it
//! with the recursion.

use singular_lq::grde::solve_full;
use singular_lq::linalg::Tolerance;
use singular_lq::model::{random_problem, ProblemKind};
use singular_lq::oracle::batch_optimal;

fn main() -> singular_lq::Result<()> {
    let tol = Tolerance::default();
    for kind in ProblemKind::ALL {
        let p = random_problem(5, 2, 3, kind)?;
        let x0 = p.require_x0()?;
        let batch = batch_optimal(&p, x0, &tol)?;
        let x = &solve_full(&p, &tol)?.x[0];
        let recursion = (x0.transpose() * x * x0)[(0, 0)];
        println!(
            "{:<15} batch {:.10}  recursion {:.10}  closed form {:.10}",
            kind.as_str(),
            batch.j_star,
            recursion,
            batch.j_closed_form
        );
    }
    Ok(())
}
