//! Singularity checks on the extended pencil and zero-eigenvalue bookkeeping.

use singular_lq::cgdare::{find_reference, ReferenceConfig};
use singular_lq::linalg::Tolerance;
use singular_lq::model::{random_problem, ProblemKind};
use singular_lq::pencil::analyze;

fn main() -> singular_lq::Result<()> {
    let tol = Tolerance::default();
    for kind in ProblemKind::ALL {
        let p = random_problem(4, 2, 8, kind)?;
        let search = find_reference(&p, &ReferenceConfig::default())?;
        let report = analyze(&p.triple, search.solution(), &tol)?;
        println!("{}:", kind.as_str());
        println!(
            "  N singular {}  consistent {}",
            report.n_criterion.n_singular, report.n_criterion_consistent
        );
        if let (Some(cl), Some(mu)) = (report.closed_loop, report.mu) {
            println!(
                "  A_X singular {}  μ: {} + {} = {}",
                cl.ax_singular, mu.mu_ax, mu.mu_rx, mu.mu_block
            );
        }
        if let Some(r) = report.det_identity_residual {
            println!("  determinant identity residual {r:.1e}");
        }
    }
    Ok(())
}
