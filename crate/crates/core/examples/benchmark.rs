//! Times the full recursion against the hybrid solver on a large nilpotent
//! block. Run with `--release` for meaningful numbers.

use std::time::Instant;

use singular_lq::cgdare::{find_reference, ReferenceConfig};
use singular_lq::grde::solve_full;
use singular_lq::linalg::Tolerance;
use singular_lq::model::random_nilpotent_problem;
use singular_lq::reduction::solve_hybrid;

fn main() -> singular_lq::Result<()> {
    let tol = Tolerance::default();
    let mut p = random_nilpotent_problem(20, 2, 15, 0)?;
    p.horizon = 500;
    let sol = find_reference(&p, &ReferenceConfig::default())?
        .into_solution()
        .expect("reference exists");

    let start = Instant::now();
    let full = solve_full(&p, &tol)?;
    let full_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let hybrid = solve_hybrid(&p, &sol, &tol)?;
    let hybrid_ms = start.elapsed().as_secs_f64() * 1e3;

    println!("reduced dimension {}", hybrid.report.reduced_dim);
    println!("full   {full_ms:8.2} ms");
    println!("hybrid {hybrid_ms:8.2} ms");
    println!(
        "agreement {:.1e}",
        hybrid.trajectory.max_relative_difference(&full)
    );
    Ok(())
}
