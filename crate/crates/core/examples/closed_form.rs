//! Reduced trajectory from a Stein equation and matrix powers instead of
//! step-by-step iteration.

use singular_lq::closedform::{closed_form_trajectory, ClosedFormData};
use singular_lq::linalg::{Matrix, Tolerance};
use singular_lq::reduction::ReducedSystem;

fn main() -> singular_lq::Result<()> {
    let tol = Tolerance::default();
    let sys = ReducedSystem::new(
        Matrix::from_row_slice(2, 2, &[1.1, 0.3, 0.0, 0.7]),
        Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
        Matrix::from_element(1, 1, 0.8),
    )?;
    let terminal = Matrix::identity(2, 2) * 0.5;
    let horizon = 6;

    let iterated = sys.iterate(&terminal, horizon, &tol)?;
    let cf = ClosedFormData::new(sys, None, &terminal, horizon, &tol)?;
    println!("Stein residual {:.1e}", cf.stein_residual);
    let traj = closed_form_trajectory(&cf, &tol)?;
    for (t, (a, b)) in traj.psi.iter().zip(&iterated).enumerate() {
        println!(
            "t = {t}  trace Ψ_t = {:.10}  difference {:.1e}",
            a.trace(),
            (a - b).norm()
        );
    }
    Ok(())
}
