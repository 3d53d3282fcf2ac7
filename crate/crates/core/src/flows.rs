//! Pathwise flows `X_{s,t}^x` with first and second derivatives in `x`, and
//! the tamed Euler scheme.
//!
//! The flow is integrated by Euler-Maruyama on the grid of the supplied
//! Brownian path. With additive noise the variational equations
//!
//! ```text
//! dX1 = mu'(X) X1 dt,                                X1(s) = I
//! dX2(v, w) = mu''(X)(X1 v, X1 w) + mu'(X) X2(v, w) dt,  X2(s) = 0
//! ```
//!
//! are random ODEs; they are stepped jointly with `X` by explicit Euler,
//! every coefficient evaluated at the left endpoint.

use nalgebra::{DMatrix, DVector};

use crate::bilinear::Bilinear;
use crate::brownian::BrownianPath;
use crate::error::{config, domain, Error, Result};
use crate::fields::{DiffusionField, VectorField};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub start_time: f64,
    pub start_state: DVector<f64>,
    pub end_time: f64,
    /// `X_{s,t}^x`.
    pub state: DVector<f64>,
    /// `d/dx X_{s,t}^x`, present when derivatives were requested.
    pub first: Option<DMatrix<f64>>,
    /// `d^2/dx^2 X_{s,t}^x`, present when derivatives were requested.
    pub second: Option<Bilinear>,
}

impl FlowResult {
    pub fn first(&self) -> &DMatrix<f64> {
        self.first.as_ref().expect("flow solved without derivatives")
    }

    pub fn second(&self) -> &Bilinear {
        self.second.as_ref().expect("flow solved without derivatives")
    }
}

fn check_dims(mu: &dyn VectorField, sigma: &dyn DiffusionField, x: &DVector<f64>, path: &BrownianPath) -> Result<()> {
    if mu.dim() != x.len() || sigma.dim() != x.len() {
        return Err(domain(format!(
            "state dimension {} does not match drift {} / diffusion {}",
            x.len(),
            mu.dim(),
            sigma.dim()
        )));
    }
    if sigma.noise_dim() != path.dim() {
        return Err(domain(format!(
            "diffusion expects {} noise components, path has {}",
            sigma.noise_dim(),
            path.dim()
        )));
    }
    Ok(())
}

/// Flow from grid node `from` to grid node `to` of `path`.
pub fn flow_between(
    mu: &dyn VectorField,
    sigma: &dyn DiffusionField,
    from: usize,
    to: usize,
    x: &DVector<f64>,
    path: &BrownianPath,
    with_derivatives: bool,
) -> Result<FlowResult> {
    check_dims(mu, sigma, x, path)?;
    let grid = path.grid();
    if from > to || to > grid.steps() {
        return Err(domain(format!(
            "invalid node range {from}..{to} on a grid with {} steps",
            grid.steps()
        )));
    }
    if with_derivatives && !sigma.is_additive() {
        return Err(domain("variational processes require additive noise"));
    }

    let d = x.len();
    let m = path.dim();
    let h = grid.step_size();
    let mut state = x.clone();
    let mut first = with_derivatives.then(|| DMatrix::<f64>::identity(d, d));
    let mut second = with_derivatives.then(|| Bilinear::zeros(d, d));
    let mut scratch2 = vec![0.0; d * d * d];
    let mut scratch1 = DMatrix::<f64>::zeros(d, d);
    let constant_sigma = sigma.is_additive().then(|| sigma.eval(grid.node(from), x));

    for k in from..to {
        let t = grid.node(k);
        let drift = mu.eval(t, &state);

        if let (Some(x1), Some(x2)) = (first.as_mut(), second.as_mut()) {
            let jac = mu.jacobian(t, &state);
            let hess = mu.hessian(t, &state);
            // X2 <- X2 + h (H(X1 e_i, X1 e_j) + J X2(e_i, e_j))
            for c in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = 0.0;
                        for a in 0..d {
                            let mut inner = 0.0;
                            for b in 0..d {
                                inner += hess.get(c, a, b) * x1[(b, j)];
                            }
                            acc += inner * x1[(a, i)] + jac[(c, a)] * x2.get(a, i, j);
                        }
                        scratch2[(c * d + i) * d + j] = x2.get(c, i, j) + h * acc;
                    }
                }
            }
            x2.as_mut_slice().copy_from_slice(&scratch2);
            jac.mul_to(x1, &mut scratch1);
            *x1 += &scratch1 * h;
            if !x1.iter().all(|v| v.is_finite()) || !x2.is_finite() {
                return Err(Error::Diverged { step: k + 1 });
            }
        }

        let dw = path.increment(k);
        let sig_owned;
        let sig = match &constant_sigma {
            Some(s) => s,
            None => {
                sig_owned = sigma.eval(t, &state);
                &sig_owned
            }
        };
        for i in 0..d {
            let mut noise = 0.0;
            for (j, w) in dw.iter().enumerate().take(m) {
                noise += sig[(i, j)] * w;
            }
            state[i] += drift[i] * h + noise;
        }
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
    }

    Ok(FlowResult {
        start_time: grid.node(from),
        start_state: x.clone(),
        end_time: grid.node(to),
        state,
        first,
        second,
    })
}

/// Flow from node `s_index` to the terminal time of `path`.
pub fn flow_solve(
    mu: &dyn VectorField,
    sigma: &dyn DiffusionField,
    s_index: usize,
    x: &DVector<f64>,
    path: &BrownianPath,
    with_derivatives: bool,
) -> Result<FlowResult> {
    flow_between(mu, sigma, s_index, path.grid().steps(), x, path, with_derivatives)
}

/// Output of the tamed Euler scheme
/// `Y_{k+1} = Y_k + mu(Y_k) h 1{|mu(Y_k)|^2 < N/T} + beta dW_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeTrajectory {
    pub grid: TimeGrid,
    /// `Y_0, ..., Y_N`.
    pub states: Vec<DVector<f64>>,
    /// `true` when the drift of step `k` was switched off.
    pub tamed: Vec<bool>,
    /// `mu(Y_k) 1{...}` for each step.
    pub applied_drift: Vec<DVector<f64>>,
    /// `|mu(Y_k)|^2` for each step.
    pub drift_norm_sq: Vec<f64>,
    pub beta: DMatrix<f64>,
}

impl SchemeTrajectory {
    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn threshold(&self) -> f64 {
        self.grid.steps() as f64 / self.grid.horizon()
    }

    pub fn tamed_fraction(&self) -> f64 {
        self.tamed.iter().filter(|&&t| t).count() as f64 / self.tamed.len() as f64
    }

    /// The scheme at fine node `fine_index` of `path`:
    /// `Y_{kh + eps} = Y_{kh} + drift_k eps + beta (W_{kh + eps} - W_{kh})`.
    /// `path` must be the path the trajectory was generated from.
    pub fn interpolate(&self, path: &BrownianPath, fine_index: usize) -> DVector<f64> {
        let per_step = path.grid().steps() / self.grid.steps();
        let k = fine_index / per_step;
        if k >= self.grid.steps() {
            return self.terminal().clone();
        }
        let offset = fine_index - k * per_step;
        if offset == 0 {
            return self.states[k].clone();
        }
        let eps = offset as f64 * path.grid().step_size();
        let dw = DVector::from_vec(path.increment_between(k * per_step, fine_index));
        &self.states[k] + &self.applied_drift[k] * eps + &self.beta * dw
    }
}

/// Tamed Euler on `grid`, driven by block sums of the increments of `path`.
pub fn tamed_euler(
    mu: &dyn VectorField,
    beta: &DMatrix<f64>,
    xi: &DVector<f64>,
    grid: &TimeGrid,
    path: &BrownianPath,
) -> Result<SchemeTrajectory> {
    if !path.grid().refines(grid) {
        return Err(config(format!(
            "path with {} steps does not refine a {}-step scheme grid",
            path.grid().steps(),
            grid.steps()
        )));
    }
    if beta.nrows() != xi.len() || beta.ncols() != path.dim() || mu.dim() != xi.len() {
        return Err(domain("dimension mismatch between drift, diffusion column and state"));
    }
    let coarse = path.coarsen_to(grid.steps())?;
    let h = grid.step_size();
    let threshold = grid.steps() as f64 / grid.horizon();
    let n = grid.steps();

    let mut states = Vec::with_capacity(n + 1);
    let mut tamed = Vec::with_capacity(n);
    let mut applied_drift = Vec::with_capacity(n);
    let mut drift_norm_sq = Vec::with_capacity(n);
    states.push(xi.clone());
    for k in 0..n {
        let y = &states[k];
        let drift = mu.eval(grid.node(k), y);
        let norm_sq = drift.norm_squared();
        let active = norm_sq < threshold;
        let drift = if active { drift } else { DVector::zeros(y.len()) };
        let next = y + &drift * h + beta * DVector::from_column_slice(coarse.increment(k));
        states.push(next);
        tamed.push(!active);
        applied_drift.push(drift);
        drift_norm_sq.push(norm_sq);
    }
    Ok(SchemeTrajectory {
        grid: *grid,
        states,
        tamed,
        applied_drift,
        drift_norm_sq,
        beta: beta.clone(),
    })
}

/// Coupling reference: tamed Euler on the path's own (finest) grid.
pub fn reference_solution(
    mu: &dyn VectorField,
    sigma: &dyn DiffusionField,
    xi: &DVector<f64>,
    path: &BrownianPath,
) -> Result<DVector<f64>> {
    if !sigma.is_additive() {
        return Err(domain("the tamed reference requires additive noise"));
    }
    let beta = sigma.eval(0.0, xi);
    let traj = tamed_euler(mu, &beta, xi, path.grid(), path)?;
    let y = traj.terminal().clone();
    if let Some(step) = traj.states.iter().position(|s| !s.iter().all(|v| v.is_finite())) {
        return Err(Error::Diverged { step });
    }
    Ok(y)
}
