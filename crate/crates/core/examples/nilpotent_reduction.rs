//! Hybrid solver: ν full steps, then the recursion on the complement of the
//! nilpotent subspace only.

use singular_lq::cgdare::{find_reference, ReferenceConfig};
use singular_lq::grde::solve_full;
use singular_lq::linalg::Tolerance;
use singular_lq::model::random_nilpotent_problem;
use singular_lq::reduction::solve_hybrid;

fn main() -> singular_lq::Result<()> {
    let tol = Tolerance::default();
    let mut p = random_nilpotent_problem(8, 2, 5, 21)?;
    p.horizon = 60;
    let sol = find_reference(&p, &ReferenceConfig::default())?
        .into_solution()
        .expect("nilpotent problems have a stabilising solution");

    let hybrid = solve_hybrid(&p, &sol, &tol)?;
    let r = &hybrid.report;
    println!(
        "nu = {}, dim U = {}, reduced dimension = {}",
        r.nu, r.dim_u, r.reduced_dim
    );
    println!(
        "full steps {}, reduced steps {}",
        r.full_steps, r.reduced_steps
    );
    if let Some(c) = r.checkpoint {
        println!(
            "checkpoint blocks {:.1e} {:.1e} (threshold {:.1e})",
            c.block_11, c.block_12, c.threshold
        );
    }
    let full = solve_full(&p, &tol)?;
    println!(
        "max relative difference to full recursion {:.1e}",
        hybrid.trajectory.max_relative_difference(&full)
    );
    Ok(())
}
