//! Stochastic van der Pol oscillator with additive forcing,
//!
//! ```text
//! dX = mu(X) dt + (0, beta)^T dW,   mu(x1, x2) = (x2, (gamma - alpha x1^2) x2 - delta x1),
//! ```
//!
//! and the experiments run on its tamed Euler approximation: the Gaussian
//! square MGF, the exponential moment bound, flow-derivative moments and the
//! coupled strong-rate study.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bilinear::Bilinear;
use crate::brownian::BrownianPath;
use crate::error::{config, domain, Result};
use crate::fields::{ConstantDiffusion, DiffusionField, VectorField};
use crate::flows::{flow_between, tamed_euler};
use crate::grid::TimeGrid;
use crate::rng::{tags, RandomStream};
use crate::stats::{map_samples, ols, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdpParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub xi: [f64; 2],
    pub horizon: f64,
}

impl Default for VdpParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
            xi: [0.0, 0.0],
            horizon: 1.0,
        }
    }
}

impl VdpParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("horizon", self.horizon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.xi.iter().all(|v| v.is_finite()) {
            return Err(domain("initial value must be finite"));
        }
        Ok(())
    }

    pub fn drift(&self) -> VanDerPol {
        VanDerPol {
            alpha: self.alpha,
            gamma: self.gamma,
            delta: self.delta,
        }
    }

    /// The `2 x 1` diffusion column `(0, beta)^T`.
    pub fn beta_column(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, self.beta])
    }

    pub fn diffusion(&self) -> ConstantDiffusion {
        ConstantDiffusion::new(self.beta_column())
    }

    pub fn xi(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.xi)
    }

    /// Smallest admissible step count for the exponential moment bound,
    /// `max(6 beta^2 T, T)`.
    pub fn min_steps_for_moment_bound(&self) -> f64 {
        (6.0 * self.beta * self.beta * self.horizon).max(self.horizon)
    }

    /// `exp(-T (1 + 3 beta^2 + delta + 2 gamma))`.
    pub fn exp_moment_constant(&self) -> f64 {
        (-self.horizon * (1.0 + 3.0 * self.beta * self.beta + self.delta + 2.0 * self.gamma)).exp()
    }

    /// `exp((2 beta^2 + 1) T + |xi|^2)`.
    pub fn exp_moment_bound(&self) -> f64 {
        ((2.0 * self.beta * self.beta + 1.0) * self.horizon + self.xi().norm_squared()).exp()
    }
}

/// The van der Pol drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPol {
    pub alpha: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl VectorField for VanDerPol {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        let (x1, x2) = (x[0], x[1]);
        DVector::from_vec(vec![x2, (self.gamma - self.alpha * x1 * x1) * x2 - self.delta * x1])
    }

    fn jacobian(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let (x1, x2) = (x[0], x[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                0.0,
                1.0,
                -2.0 * self.alpha * x1 * x2 - self.delta,
                self.gamma - self.alpha * x1 * x1,
            ],
        )
    }

    fn hessian(&self, _t: f64, x: &DVector<f64>) -> Bilinear {
        let (x1, x2) = (x[0], x[1]);
        let mut h = Bilinear::zeros(2, 2);
        h.set(1, 0, 0, -2.0 * self.alpha * x2);
        h.set(1, 0, 1, -2.0 * self.alpha * x1);
        h.set(1, 1, 0, -2.0 * self.alpha * x1);
        h
    }

    fn growth_exponent(&self) -> f64 {
        3.0
    }
}

/// `E[exp(c (a + b X)^2)]` for standard normal `X`; requires `2 b^2 c < 1`.
pub fn gaussian_square_mgf(a: f64, b: f64, c: f64) -> Result<f64> {
    let s = 1.0 - 2.0 * b * b * c;
    if !(s > 0.0) {
        return Err(domain(format!(
            "E[exp(c (a + bX)^2)] diverges for 2 b^2 c = {} >= 1",
            2.0 * b * b * c
        )));
    }
    Ok(s.powf(-0.5) * (a * a * (c + 2.0 * (b * c).powi(2) / s)).exp())
}

/// Monte-Carlo estimate of [`gaussian_square_mgf`] from `samples` normals of
/// stream `(seed, MGF_SAMPLES, case)`.
pub fn mgf_monte_carlo(a: f64, b: f64, c: f64, samples: usize, seed: u64, case: u64) -> Estimate {
    let mut stream = RandomStream::new(seed, tags::MGF_SAMPLES, case);
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let z = a + b * stream.normal();
            (c * z * z).exp()
        })
        .collect();
    Estimate::from_samples(&values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfCase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub closed_form: f64,
    pub estimate: Estimate,
}

impl MgfCase {
    pub fn passes(&self, k: f64) -> bool {
        self.estimate.within(self.closed_form, k)
    }
}

/// Draws `count` parameter triples `a in [-1, 1]`, `b in [-1.5, 1.5]`,
/// `c in [-1, 1]` with `2 b^2 c <= max_exponent` by rejection, and compares
/// the closed form with a Monte-Carlo mean for each.
pub fn mgf_check(count: usize, max_exponent: f64, samples: usize, seed: u64) -> Result<Vec<MgfCase>> {
    if !(max_exponent < 1.0) {
        return Err(domain("2 b^2 c must stay below 1"));
    }
    let mut params = RandomStream::new(seed, tags::MGF_PARAMS, 0);
    let mut triples = Vec::with_capacity(count);
    while triples.len() < count {
        let a = params.uniform_in(-1.0, 1.0);
        let b = params.uniform_in(-1.5, 1.5);
        let c = params.uniform_in(-1.0, 1.0);
        if 2.0 * b * b * c <= max_exponent {
            triples.push((a, b, c));
        }
    }
    let cases = map_samples(count, |i| {
        let (a, b, c) = triples[i as usize];
        (a, b, c, mgf_monte_carlo(a, b, c, samples, seed, i))
    });
    cases
        .into_iter()
        .map(|(a, b, c, estimate)| {
            Ok(MgfCase {
                a,
                b,
                c,
                closed_form: gaussian_square_mgf(a, b, c)?,
                estimate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMoment {
    pub time: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub c: f64,
    pub bound: f64,
    pub steps: usize,
    pub samples: usize,
    pub nodes: Vec<NodeMoment>,
    pub pass: bool,
}

/// Empirical `E[exp(c |Y_{t_k}|^2)]` at every node of a tamed scheme with
/// `steps` steps, compared with `bound + k_se * SE`.
#[allow(clippy::too_many_arguments)]
pub fn exp_moment_check_with(
    mu: &dyn VectorField,
    beta: &DMatrix<f64>,
    xi: &DVector<f64>,
    grid: TimeGrid,
    c: f64,
    bound: f64,
    samples: usize,
    seed: u64,
) -> Result<ExpMomentReport> {
    let per_sample = map_samples(samples, |i| -> Result<Vec<f64>> {
        let path = BrownianPath::sample(seed, i, grid, beta.ncols())?;
        let traj = tamed_euler(mu, beta, xi, &grid, &path)?;
        Ok(traj.states.iter().map(|y| (c * y.norm_squared()).exp()).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let nodes: Vec<NodeMoment> = (0..=grid.steps())
        .map(|k| {
            let column: Vec<f64> = per_sample.iter().map(|v| v[k]).collect();
            let estimate = Estimate::from_samples(&column);
            NodeMoment {
                time: grid.node(k),
                estimate,
            }
        })
        .collect();
    let pass = nodes
        .iter()
        .all(|n| n.estimate.mean <= bound + 3.0 * n.estimate.se.max(0.0));
    Ok(ExpMomentReport {
        c,
        bound,
        steps: grid.steps(),
        samples,
        nodes,
        pass,
    })
}

/// The exponential moment check with `c = exp(-T (1 + 3 beta^2 + delta + 2 gamma))`
/// and bound `exp((2 beta^2 + 1) T + |xi|^2)`.
pub fn exp_moment_check(params: &VdpParams, steps: usize, samples: usize, seed: u64) -> Result<ExpMomentReport> {
    params.validate()?;
    if (steps as f64) < params.min_steps_for_moment_bound() {
        return Err(config(format!(
            "N = {steps} is below max(6 beta^2 T, T) = {}",
            params.min_steps_for_moment_bound()
        )));
    }
    let grid = TimeGrid::new(params.horizon, steps)?;
    exp_moment_check_with(
        &params.drift(),
        &params.beta_column(),
        &params.xi(),
        grid,
        params.exp_moment_constant(),
        params.exp_moment_bound(),
        samples,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMoment {
    pub r: f64,
    pub t: f64,
    /// `E |X1_{r,t}^Z|^p`, operator norm.
    pub first: Estimate,
    /// `E |X2_{r,t}^Z|^p`, Hilbert-Schmidt norm.
    pub second: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMomentReport {
    pub p: f64,
    pub samples: usize,
    pub diverged: usize,
    pub entries: Vec<FlowMoment>,
}

impl FlowMomentReport {
    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| {
            e.first.mean.is_finite() && e.second.mean.is_finite() && e.first.se.is_finite() && e.second.se.is_finite()
        })
    }

    /// Each estimate of `self` agrees with the matching one of `other`
    /// within `k` combined standard errors.
    pub fn consistent_with(&self, other: &FlowMomentReport, k: f64) -> bool {
        let agree = |a: &Estimate, b: &Estimate| (a.mean - b.mean).abs() <= k * (a.se * a.se + b.se * b.se).sqrt();
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| agree(&a.first, &b.first) && agree(&a.second, &b.second))
    }
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Moments of the flow derivatives at the pairs `r <= t` of the 5 x 5 grid
/// `{0, T/4, T/2, 3T/4, T}^2`, started from `Z = X_{0,r}^xi`.
#[allow(clippy::too_many_arguments)]
pub fn flow_moment_check_with(
    mu: &dyn VectorField,
    sigma: &dyn DiffusionField,
    xi: &DVector<f64>,
    grid: TimeGrid,
    p: f64,
    samples: usize,
    seed: u64,
) -> Result<FlowMomentReport> {
    if !(p >= 1.0) {
        return Err(domain(format!("moment order must be at least 1, got {p}")));
    }
    if !grid.steps().is_multiple_of(4) {
        return Err(config("flow moment grid needs a step count divisible by 4"));
    }
    let quarter = grid.steps() / 4;
    let pairs: Vec<(usize, usize)> = (0..5)
        .flat_map(|i| (i..5).map(move |j| (i * quarter, j * quarter)))
        .collect();

    let per_sample = map_samples(samples, |i| -> Result<Option<Vec<(f64, f64)>>> {
        let path = BrownianPath::sample(seed, i, grid, sigma.noise_dim())?;
        let mut out = Vec::with_capacity(pairs.len());
        for &(r, t) in &pairs {
            let z = match flow_between(mu, sigma, 0, r, xi, &path, false) {
                Ok(f) => f.state,
                Err(crate::Error::Diverged { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let flow = match flow_between(mu, sigma, r, t, &z, &path, true) {
                Ok(f) => f,
                Err(crate::Error::Diverged { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            out.push((operator_norm(flow.first()).powf(p), flow.second().norm().powf(p)));
        }
        Ok(Some(out))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let kept: Vec<&Vec<(f64, f64)>> = per_sample.iter().flatten().collect();
    let diverged = samples - kept.len();
    let entries = pairs
        .iter()
        .enumerate()
        .map(|(n, &(r, t))| {
            let first: Vec<f64> = kept.iter().map(|v| v[n].0).collect();
            let second: Vec<f64> = kept.iter().map(|v| v[n].1).collect();
            FlowMoment {
                r: grid.node(r),
                t: grid.node(t),
                first: Estimate::from_samples(&first),
                second: Estimate::from_samples(&second),
            }
        })
        .collect();
    Ok(FlowMomentReport {
        p,
        samples,
        diverged,
        entries,
    })
}

pub fn flow_moment_check(
    params: &VdpParams,
    p: f64,
    steps: usize,
    samples: usize,
    seed: u64,
) -> Result<FlowMomentReport> {
    params.validate()?;
    let grid = TimeGrid::new(params.horizon, steps)?;
    flow_moment_check_with(
        &params.drift(),
        &params.diffusion(),
        &params.xi(),
        grid,
        p,
        samples,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub steps: usize,
    /// Root-mean-square terminal error against the reference.
    pub rms: f64,
    /// Delta-method standard error of `rms`.
    pub se: f64,
    pub samples: usize,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub reference_steps: usize,
    pub levels: Vec<LevelError>,
    /// OLS slope of `log2 rms` against `log2 N`.
    pub slope: f64,
    /// OLS intercept; `2^intercept` plays the role of the rate constant.
    pub intercept: f64,
    pub samples: usize,
    pub seed: u64,
    pub diverged: usize,
    pub elapsed_seconds: f64,
}

impl ExperimentReport {
    /// RMS errors are nonincreasing in `N` up to `k` standard errors.
    pub fn monotone_within(&self, k: f64) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].rms <= w[0].rms + k * (w[0].se * w[0].se + w[1].se * w[1].se).sqrt())
    }
}

/// RMS terminal error of the tamed scheme at each level against the tamed
/// scheme at `reference_steps`, every level of a sample driven by block sums
/// of one Brownian path.
pub fn coupled_level_errors(
    params: &VdpParams,
    levels: &[usize],
    reference_steps: usize,
    samples: usize,
    seed: u64,
) -> Result<(Vec<LevelError>, usize)> {
    params.validate()?;
    for &n in levels {
        if n == 0 || !reference_steps.is_multiple_of(n) {
            return Err(config(format!(
                "level {n} does not divide the reference {reference_steps}"
            )));
        }
    }
    let fine = TimeGrid::new(params.horizon, reference_steps)?;
    let mu = params.drift();
    let beta = params.beta_column();
    let xi = params.xi();

    let per_sample = map_samples(samples, |i| -> Result<Option<Vec<f64>>> {
        let path = BrownianPath::sample(seed, i, fine, 1)?;
        let reference = tamed_euler(&mu, &beta, &xi, &fine, &path)?;
        let reference = reference.terminal();
        let mut errors = Vec::with_capacity(levels.len());
        for &n in levels {
            let grid = TimeGrid::new(params.horizon, n)?;
            let y = tamed_euler(&mu, &beta, &xi, &grid, &path)?;
            let e = (reference - y.terminal()).norm_squared();
            if !e.is_finite() {
                return Ok(None);
            }
            errors.push(e);
        }
        Ok(Some(errors))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let kept: Vec<&Vec<f64>> = per_sample.iter().flatten().collect();
    let diverged = samples - kept.len();
    let out = levels
        .iter()
        .enumerate()
        .map(|(l, &steps)| {
            let sq: Vec<f64> = kept.iter().map(|v| v[l]).collect();
            let est = Estimate::from_samples(&sq);
            let rms = est.mean.sqrt();
            let se = if rms > 0.0 { est.se / (2.0 * rms) } else { 0.0 };
            LevelError {
                steps,
                rms,
                se,
                samples: kept.len(),
                diverged,
            }
        })
        .collect();
    Ok((out, diverged))
}

/// Strong-rate study: coupled RMS errors per level and the fitted log-log
/// slope. Requires `reference_steps >= 8 * max(levels)`.
pub fn strong_rate_study(
    params: &VdpParams,
    levels: &[usize],
    reference_steps: usize,
    samples: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let max_level = levels.iter().copied().max().ok_or_else(|| config("no levels given"))?;
    if levels.len() < 2 {
        return Err(config("a rate fit needs at least two levels"));
    }
    if reference_steps < 8 * max_level {
        return Err(config(format!(
            "reference {reference_steps} must be at least 8 x the finest level {max_level}"
        )));
    }
    let start = Instant::now();
    let (levels, diverged) = coupled_level_errors(params, levels, reference_steps, samples, seed)?;
    let xs: Vec<f64> = levels.iter().map(|l| (l.steps as f64).log2()).collect();
    let ys: Vec<f64> = levels.iter().map(|l| l.rms.log2()).collect();
    let (slope, intercept) = ols(&xs, &ys);
    Ok(ExperimentReport {
        reference_steps,
        levels,
        slope,
        intercept,
        samples,
        seed,
        diverged,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
