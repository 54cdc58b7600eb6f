//! Finds a solution of the algebraic equation by fixed-point iteration and
//! shows that distinct solutions agree on the nilpotent subspace.

use singular_lq::cgdare::{
    closed_loop, compare_solutions, find_reference, ReferenceConfig, ReferenceSearch,
};
use singular_lq::linalg::Tolerance;
use singular_lq::model::multi_solution_family;

fn main() -> singular_lq::Result<()> {
    let tol = Tolerance::default();
    let fam = multi_solution_family(2, 2, 5)?;
    let t = &fam.problem.triple;

    match find_reference(&fam.problem, &ReferenceConfig::default())? {
        ReferenceSearch::Found {
            solution,
            iterations,
            ..
        } => println!(
            "fixed point after {iterations} iterations: residual {:.2e}, nu = {}, dim U = {}",
            solution.residual_norm,
            solution.nu,
            solution.dim_u()
        ),
        ReferenceSearch::NotFound { reason, .. } => println!("no reference: {reason}"),
    }

    // Entry 0 is the stabilising solution, the rest flip individual channels.
    let base = closed_loop(&fam.solutions[0], t, &tol)?;
    for x in &fam.solutions[1..] {
        let other = closed_loop(x, t, &tol)?;
        let r = compare_solutions(&base, &other, t, &tol)?;
        println!(
            "‖X − Y‖ = {:.3}  ‖(X − Y)U‖ = {:.1e}  inertia equal: {}",
            (&fam.solutions[0] - x).norm(),
            r.coincidence_residual,
            r.inertia_equal
        );
    }
    Ok(())
}
