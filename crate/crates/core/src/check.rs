//! Finite-difference self-tests of the dual gradient and Hessian.

use crate::measures::{AtomicMeasure, DualPotential, PolylineMeasure};
use crate::power_diagram::{build_oracle, OracleMode};
use crate::transport::{evaluate, hessian, TransportError, TransportEvaluation};

fn eval_at(
    atoms: &AtomicMeasure<f64>,
    curve: &PolylineMeasure<f64>,
    phi: &[f64],
) -> Result<TransportEvaluation<f64>, TransportError> {
    let phi = DualPotential::for_measure(atoms, phi.to_vec())?;
    let oracle = build_oracle(atoms, &phi, OracleMode::Adjacency);
    evaluate(atoms, curve, &phi, &oracle)
}

/// Largest absolute gap between the gradient and central differences of
/// the cost with step `eps`.
pub fn gradient_fd_error(
    atoms: &AtomicMeasure<f64>,
    curve: &PolylineMeasure<f64>,
    phi: &DualPotential<f64>,
    eps: f64,
) -> Result<f64, TransportError> {
    let base = eval_at(atoms, curve, phi.values())?;
    let mut x = phi.values().to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + eps;
        let up = eval_at(atoms, curve, &x)?.cost;
        x[i] = x0 - eps;
        let down = eval_at(atoms, curve, &x)?.cost;
        x[i] = x0;
        worst = worst.max(((up - down) / (2.0 * eps) - base.gradient[i]).abs());
    }
    Ok(worst)
}

/// Largest entrywise gap between the Hessian and central differences of
/// the gradient with step `eps`.
pub fn hessian_fd_error(
    atoms: &AtomicMeasure<f64>,
    curve: &PolylineMeasure<f64>,
    phi: &DualPotential<f64>,
    eps: f64,
) -> Result<f64, TransportError> {
    let base = eval_at(atoms, curve, phi.values())?;
    let h = hessian(atoms, curve, &base.trace).to_dense();
    let n = atoms.len();
    let mut x = phi.values().to_vec();
    let mut worst = 0.0f64;
    for j in 0..n {
        let x0 = x[j];
        x[j] = x0 + eps;
        let up = eval_at(atoms, curve, &x)?.gradient;
        x[j] = x0 - eps;
        let down = eval_at(atoms, curve, &x)?.gradient;
        x[j] = x0;
        for i in 0..n {
            worst = worst.max(((up[i] - down[i]) / (2.0 * eps) - h[i][j]).abs());
        }
    }
    Ok(worst)
}
