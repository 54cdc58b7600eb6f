//! Builds a problem by hand, validates it and round-trips it through JSON.

use singular_lq::linalg::{Matrix, Tolerance, Vector};
use singular_lq::model::{from_json_str, to_json_string, validate, LqProblem, PopovTriple};

fn main() -> singular_lq::Result<()> {
    // Two states, one input that only reaches the second state, no input cost.
    let triple = PopovTriple::new(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.5]),
        Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        Matrix::identity(2, 2),
        Matrix::zeros(2, 1),
        Matrix::zeros(1, 1),
    )?;
    let p = LqProblem {
        triple,
        terminal: Matrix::identity(2, 2),
        horizon: 8,
        x0: Some(Vector::from_vec(vec![1.0, -1.0])),
        x_ref: None,
    };

    let report = validate(&p, &Tolerance::default())?;
    for check in &report.checks {
        println!(
            "{:<14} passed={} residual={:.2e}",
            check.name, check.passed, check.residual
        );
    }

    let text = to_json_string(&p);
    let back = from_json_str(&text)?;
    assert_eq!(back, p);
    println!("{text}");
    Ok(())
}
