//! One linear solve per solve regime: square, tall consistent, tall
//! inconsistent, rank deficient, and wide. The dispatcher picks the regime
//! from the gain's shape and rank; only the rank-deficient branch touches
//! the ridge parameter.

use nalgebra::{DMatrix, DVector};
use pareto_control::{bayes_control, Tolerance};

fn show(label: &str, k: DMatrix<f64>, l: DVector<f64>, theta: Option<f64>) {
    let tol = Tolerance::for_shape(k.nrows(), k.ncols());
    let d = bayes_control(&k, &l, &tol, theta).unwrap();
    let u: Vec<f64> = d.u.iter().cloned().collect();
    print!("{label:<22} {:<28} u={u:?} defect={:.3e}", d.tag.to_string(), d.residual);
    match d.theta_used {
        Some(t) => println!(" theta={t:.1e}"),
        None => println!(),
    }
}

fn main() {
    // Unique solution.
    show(
        "square",
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]),
        DVector::from_row_slice(&[-3.0, 2.0]),
        None,
    );

    // More equations than controls, but the target lies in the column span.
    show(
        "tall consistent",
        DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
        DVector::from_row_slice(&[1.0, 2.0, 3.0]),
        None,
    );

    // Same shape with an unreachable target: least squares leaves a defect.
    show(
        "tall inconsistent",
        DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        DVector::from_row_slice(&[1.0, 0.0]),
        None,
    );

    // A singular gain; the ridge keeps the free direction at rest.
    show(
        "rank deficient",
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        DVector::from_row_slice(&[1.0, 0.0]),
        Some(1e-6),
    );

    // More controls than equations: the minimum-norm solution.
    show(
        "wide",
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DVector::from_row_slice(&[2.0]),
        None,
    );
}
