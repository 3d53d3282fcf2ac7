//! Deterministic Alekseev-Gröbner identity for a perturbed ODE,
//!
//! ```text
//! f(X_{0,T}^{Y_0}) - f(Y_T) = ∫_0^T f'(X_{s,T}^{Y_s}) ∂_x X_{s,T}^{Y_s} (mu(s, Y_s) - Y'_s) ds,
//! ```
//!
//! where `X` is the flow of `x' = mu(t, x)` and `Y' = y_drift(t, Y)`. Both
//! sides are evaluated numerically: flows and `Y` by classical RK4 at the
//! inner resolution, the `ds` integral by the composite midpoint rule.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fields::{TestFunction, VectorField};

fn finite_or_diverged(x: &DVector<f64>, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

/// RK4 trajectory of `y' = field(t, y)` on `steps` equal steps of `[t0, t1]`,
/// all states returned.
pub fn rk4_trajectory(
    field: &dyn VectorField,
    t0: f64,
    t1: f64,
    y0: &DVector<f64>,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    let h = (t1 - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0.clone());
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let y = &out[k];
        let k1 = field.eval(t, y);
        let k2 = field.eval(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
        let k3 = field.eval(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
        let k4 = field.eval(t + h, &(y + &k3 * h));
        let next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        finite_or_diverged(&next, k + 1)?;
        out.push(next);
    }
    Ok(out)
}

/// RK4 for the flow `X_{s,t}^x` and its Jacobian `∂_x X_{s,t}^x`, stepped
/// jointly as one augmented system on `steps` equal steps.
pub fn rk4_flow(
    field: &dyn VectorField,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    steps: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    // (stage time offset, weight) of the classical tableau.
    const STAGES: [(f64, f64); 4] = [(0.0, 1.0), (0.5, 2.0), (0.5, 2.0), (1.0, 1.0)];
    let d = x.len();
    let h = (t - s) / steps as f64;
    let mut y = x.clone();
    let mut j = DMatrix::<f64>::identity(d, d);
    let mut y_stage = y.clone();
    let mut j_stage = j.clone();
    let mut acc_y = DVector::<f64>::zeros(d);
    let mut acc_j = DMatrix::<f64>::zeros(d, d);
    let mut b = DMatrix::<f64>::zeros(d, d);
    for k in 0..steps {
        let time = s + k as f64 * h;
        acc_y.fill(0.0);
        acc_j.fill(0.0);
        y_stage.copy_from(&y);
        j_stage.copy_from(&j);
        for (i, &(c, w)) in STAGES.iter().enumerate() {
            let tau = time + c * h;
            let a = field.eval(tau, &y_stage);
            field.jacobian(tau, &y_stage).mul_to(&j_stage, &mut b);
            acc_y.axpy(w, &a, 1.0);
            acc_j.zip_apply(&b, |acc, v| *acc += w * v);
            if let Some(&(next, _)) = STAGES.get(i + 1) {
                let step = next * h;
                y_stage.copy_from(&y);
                y_stage.axpy(step, &a, 1.0);
                j_stage.copy_from(&j);
                j_stage.zip_apply(&b, |js, v| *js += step * v);
            }
        }
        y.axpy(h / 6.0, &acc_y, 1.0);
        j.zip_apply(&acc_j, |jv, v| *jv += h / 6.0 * v);
        finite_or_diverged(&y, k + 1)?;
    }
    Ok((y, j))
}

/// Both sides of the identity and their difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgResidual {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: Vec<f64>,
    pub outer_steps: usize,
    pub inner_steps: usize,
}

impl AgResidual {
    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Evaluates both sides of the Alekseev-Gröbner identity on `[0, horizon]`.
///
/// The flow from each midpoint `s_j` runs with step `horizon / inner_steps`
/// (rounded up to a whole number of steps); `Y` is integrated on a grid that
/// contains every midpoint and is at least as fine as the inner grid.
#[allow(clippy::too_many_arguments)]
pub fn ag_residual(
    mu: &dyn VectorField,
    y_drift: &dyn VectorField,
    y0: &DVector<f64>,
    f: &dyn TestFunction,
    horizon: f64,
    outer_steps: usize,
    inner_steps: usize,
) -> Result<AgResidual> {
    if !(horizon > 0.0) || outer_steps == 0 || inner_steps == 0 {
        return Err(domain("horizon, outer and inner steps must be positive"));
    }
    if mu.dim() != y0.len() || y_drift.dim() != y0.len() || f.in_dim() != y0.len() {
        return Err(domain(
            "dimension mismatch between fields, test function and initial value",
        ));
    }

    let refine = inner_steps.div_ceil(2 * outer_steps).max(1);
    let y_path = rk4_trajectory(y_drift, 0.0, horizon, y0, 2 * outer_steps * refine)?;
    let y_terminal = y_path.last().expect("non-empty trajectory");
    let (x_terminal, _) = rk4_flow(mu, 0.0, horizon, y0, inner_steps)?;
    let lhs = f.eval(&x_terminal) - f.eval(y_terminal);

    let big_h = horizon / outer_steps as f64;
    let contributions = (0..outer_steps)
        .into_par_iter()
        .map(|j| -> Result<DVector<f64>> {
            let s = (j as f64 + 0.5) * big_h;
            let y = &y_path[(2 * j + 1) * refine];
            let n = ((horizon - s) / horizon * inner_steps as f64).ceil().max(1.0) as usize;
            let (x, jac) = rk4_flow(mu, s, horizon, y, n)?;
            let defect = mu.eval(s, y) - y_drift.eval(s, y);
            Ok(f.derivative(&x) * jac * defect)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rhs = DVector::zeros(f.out_dim());
    for c in &contributions {
        rhs += c;
    }
    rhs *= big_h;

    let residual = &lhs - &rhs;
    Ok(AgResidual {
        lhs: lhs.as_slice().to_vec(),
        rhs: rhs.as_slice().to_vec(),
        residual: residual.as_slice().to_vec(),
        outer_steps,
        inner_steps,
    })
}

/// Central difference in `s` of `X_{s,T}^x` next to `-∂_x X_{s,T}^x mu(s, x)`.
/// Returns `(finite_difference, analytic)`.
pub fn initial_time_derivative(
    mu: &dyn VectorField,
    s: f64,
    x: &DVector<f64>,
    horizon: f64,
    steps: usize,
    ds: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (plus, _) = rk4_flow(mu, s + ds, horizon, x, steps)?;
    let (minus, _) = rk4_flow(mu, s - ds, horizon, x, steps)?;
    let (_, jac) = rk4_flow(mu, s, horizon, x, steps)?;
    Ok(((plus - minus) / (2.0 * ds), -(jac * mu.eval(s, x))))
}
