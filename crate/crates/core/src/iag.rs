//! Term-by-term evaluation of the Itô-Alekseev-Gröbner identity
//!
//! ```text
//! f(X_{0,T}^{Y_0}) - f(Y_T)
//!   = ∫ f'(X_{r,T}^{Y_r}) X1_{r,T}^{Y_r} (mu(r, Y_r) - A_r) dr
//!   + ∫ f'(X_{r,T}^{Y_r}) X1_{r,T}^{Y_r} (sigma(r, Y_r) - B_r) δW_r
//!   + 1/2 ∫ Σ_{i,j} (σσ* - BB*)_{ij} (f''(X)(X1 e_i, X1 e_j) + f'(X) X2(e_i, e_j)) dr
//! ```
//!
//! for an Itô process `dY = A dt + B dW`. The two `dr` integrals are
//! left-point Riemann sums on an outer grid; every outer node restarts the
//! flow from `(r, Y_r)` on the fine path. The anticipating Skorohod integral
//! has no pathwise construction, so it is defined as the residual and
//! checked statistically: zero mean, and duality with the Malliavin
//! derivative of functionals of `W_T`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::brownian::BrownianPath;
use crate::error::{config, domain, Error, Result};
use crate::fields::{DiffusionField, TestFunction, VectorField};
use crate::flows::flow_solve;
use crate::grid::TimeGrid;
use crate::stats::{map_samples, Estimate};

/// Coefficients `A`, `B` of `Y_t = xi + ∫ A ds + ∫ B dW`, evaluated at outer
/// node `k` from `history = [Y_0, ..., Y_k]` only. That restriction is what
/// makes them predictable.
pub trait ItoProcess: Send + Sync {
    fn initial(&self) -> DVector<f64>;
    fn drift(&self, k: usize, grid: &TimeGrid, history: &[DVector<f64>]) -> DVector<f64>;
    fn diffusion(&self, k: usize, grid: &TimeGrid, history: &[DVector<f64>]) -> DMatrix<f64>;
}

/// Constant `A` and `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCoefficients {
    pub xi: DVector<f64>,
    pub drift: DVector<f64>,
    pub diffusion: DMatrix<f64>,
}

impl ItoProcess for ConstantCoefficients {
    fn initial(&self) -> DVector<f64> {
        self.xi.clone()
    }

    fn drift(&self, _k: usize, _grid: &TimeGrid, _history: &[DVector<f64>]) -> DVector<f64> {
        self.drift.clone()
    }

    fn diffusion(&self, _k: usize, _grid: &TimeGrid, _history: &[DVector<f64>]) -> DMatrix<f64> {
        self.diffusion.clone()
    }
}

/// The Euler discretisation of the SDE itself: `A_k = mu(t_k, Y_k)`,
/// `B_k = sigma(t_k, Y_k)`. On the fine grid it reproduces the flow.
pub struct EulerProcess<'a> {
    pub mu: &'a dyn VectorField,
    pub sigma: &'a dyn DiffusionField,
    pub xi: DVector<f64>,
}

impl ItoProcess for EulerProcess<'_> {
    fn initial(&self) -> DVector<f64> {
        self.xi.clone()
    }

    fn drift(&self, k: usize, grid: &TimeGrid, history: &[DVector<f64>]) -> DVector<f64> {
        self.mu.eval(grid.node(k), &history[k])
    }

    fn diffusion(&self, k: usize, grid: &TimeGrid, history: &[DVector<f64>]) -> DMatrix<f64> {
        self.sigma.eval(grid.node(k), &history[k])
    }
}

/// A tamed Euler scheme with `scheme_steps` steps seen as an Itô process on
/// a finer outer grid: `A_r = mu(Y_{⌊r⌋}) 1{|mu(Y_{⌊r⌋})|^2 < N/T}`,
/// `B_r = beta`, with `⌊r⌋` the scheme-grid floor of `r`.
pub struct TamedProcess<'a> {
    pub mu: &'a dyn VectorField,
    pub beta: DMatrix<f64>,
    pub xi: DVector<f64>,
    pub scheme_steps: usize,
}

impl ItoProcess for TamedProcess<'_> {
    fn initial(&self) -> DVector<f64> {
        self.xi.clone()
    }

    fn drift(&self, k: usize, grid: &TimeGrid, history: &[DVector<f64>]) -> DVector<f64> {
        let per_step = grid.steps() / self.scheme_steps;
        let anchor = (k / per_step) * per_step;
        let y = &history[anchor];
        let drift = self.mu.eval(grid.node(anchor), y);
        let threshold = self.scheme_steps as f64 / grid.horizon();
        if drift.norm_squared() < threshold {
            drift
        } else {
            DVector::zeros(y.len())
        }
    }

    fn diffusion(&self, _k: usize, _grid: &TimeGrid, _history: &[DVector<f64>]) -> DMatrix<f64> {
        self.beta.clone()
    }
}

/// States, drifts and diffusions of an Itô process on an outer grid.
pub type Realization = (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DMatrix<f64>>);

/// `Y`, `A`, `B` on the outer grid of `outer_path`:
/// `Y_{k+1} = Y_k + A_k h + B_k dW_k`.
pub fn realize(ito: &dyn ItoProcess, outer_path: &BrownianPath) -> Result<Realization> {
    let grid = *outer_path.grid();
    let h = grid.step_size();
    let mut ys = Vec::with_capacity(grid.steps() + 1);
    let mut a_s = Vec::with_capacity(grid.steps());
    let mut b_s = Vec::with_capacity(grid.steps());
    ys.push(ito.initial());
    for k in 0..grid.steps() {
        let a = ito.drift(k, &grid, &ys);
        let b = ito.diffusion(k, &grid, &ys);
        let next = &ys[k] + &a * h + &b * DVector::from_column_slice(outer_path.increment(k));
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
        ys.push(next);
        a_s.push(a);
        b_s.push(b);
    }
    Ok((ys, a_s, b_s))
}

/// Integrands at one outer node `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub time: f64,
    /// `f'(X) X1 (mu(r, Y_r) - A_r)`.
    pub lebesgue: Vec<f64>,
    /// `1/2 Σ (σσ* - BB*)_{ij} (f''(X)(X1 e_i, X1 e_j) + f'(X) X2(e_i, e_j))`.
    pub trace: Vec<f64>,
    /// `f'(X) X1 (sigma(r, Y_r) - B_r)`, `k x m`, column-major.
    pub skorohod: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IagTerms {
    pub lhs: Vec<f64>,
    pub lebesgue: Vec<f64>,
    pub trace: Vec<f64>,
    /// `lhs - lebesgue - trace`.
    pub skorohod_residual: Vec<f64>,
    pub outer_steps: usize,
    pub nodes: Vec<NodeRecord>,
    /// `W_T` of the driving path.
    pub terminal_noise: Vec<f64>,
}

impl IagTerms {
    pub fn residual_norm(&self) -> f64 {
        self.skorohod_residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// All terms of the identity on one Brownian path.
pub fn iag_terms(
    mu: &dyn VectorField,
    sigma: &dyn DiffusionField,
    ito: &dyn ItoProcess,
    f: &dyn TestFunction,
    path: &BrownianPath,
    outer_steps: usize,
) -> Result<IagTerms> {
    let fine = path.grid();
    if outer_steps == 0 || !fine.steps().is_multiple_of(outer_steps) {
        return Err(config(format!(
            "outer grid with {outer_steps} steps does not divide the {}-step path",
            fine.steps()
        )));
    }
    if !sigma.is_additive() {
        return Err(domain("the identity is evaluated for additive noise only"));
    }
    let d = mu.dim();
    if f.in_dim() != d || sigma.dim() != d || ito.initial().len() != d {
        return Err(domain(format!("dimension mismatch: state dimension is {d}")));
    }
    let k_out = f.out_dim();
    let per_node = fine.steps() / outer_steps;
    let outer_path = path.coarsen(per_node)?;
    let outer = *outer_path.grid();
    let h = outer.step_size();

    let (ys, a_s, b_s) = realize(ito, &outer_path)?;
    let x0 = flow_solve(mu, sigma, 0, &ys[0], path, false)?;
    let lhs = f.eval(&x0.state) - f.eval(&ys[outer_steps]);

    let mut lebesgue = DVector::zeros(k_out);
    let mut trace = DVector::zeros(k_out);
    let mut nodes = Vec::with_capacity(outer_steps);
    for k in 0..outer_steps {
        let r = outer.node(k);
        let y = &ys[k];
        let flow = flow_solve(mu, sigma, k * per_node, y, path, true)?;
        let fp = f.derivative(&flow.state);
        let x1 = flow.first();
        let x2 = flow.second();
        let weight = &fp * x1;

        let leb = &weight * (mu.eval(r, y) - &a_s[k]);
        let sig = sigma.eval(r, y);
        let sko = &weight * (&sig - &b_s[k]);
        let cov = &sig * sig.transpose() - &b_s[k] * b_s[k].transpose();

        let mut tr = DVector::zeros(k_out);
        if cov.iter().any(|&c| c != 0.0) {
            let fpp = f.second_derivative(&flow.state);
            for i in 0..d {
                for j in 0..d {
                    let c = cov[(i, j)];
                    if c == 0.0 {
                        continue;
                    }
                    let term = fpp.apply(&x1.column(i).into(), &x1.column(j).into()) + &fp * x2.column(i, j);
                    tr += term * c;
                }
            }
            tr *= 0.5;
        }

        lebesgue += &leb * h;
        trace += &tr * h;
        nodes.push(NodeRecord {
            time: r,
            lebesgue: leb.as_slice().to_vec(),
            trace: tr.as_slice().to_vec(),
            skorohod: sko.as_slice().to_vec(),
        });
    }

    let residual = &lhs - &lebesgue - &trace;
    Ok(IagTerms {
        lhs: lhs.as_slice().to_vec(),
        lebesgue: lebesgue.as_slice().to_vec(),
        trace: trace.as_slice().to_vec(),
        skorohod_residual: residual.as_slice().to_vec(),
        outer_steps,
        nodes,
        terminal_noise: path.terminal(),
    })
}

/// Inputs shared by the Monte-Carlo checks.
#[derive(Clone, Copy)]
pub struct IagSetup<'a> {
    pub mu: &'a dyn VectorField,
    pub sigma: &'a dyn DiffusionField,
    pub ito: &'a dyn ItoProcess,
    pub f: &'a dyn TestFunction,
    /// Grid of the Brownian paths (the fine grid of the flows).
    pub fine_grid: TimeGrid,
    pub outer_steps: usize,
}

/// Largest tolerated fraction of diverged samples.
pub const MAX_DIVERGED_FRACTION: f64 = 1e-3;

fn run_samples(setup: &IagSetup<'_>, outer_steps: usize, samples: usize, seed: u64) -> Result<Vec<Option<IagTerms>>> {
    map_samples(samples, |i| {
        let path = BrownianPath::sample(seed, i, setup.fine_grid, setup.sigma.noise_dim())?;
        match iag_terms(setup.mu, setup.sigma, setup.ito, setup.f, &path, outer_steps) {
            Ok(t) => Ok(Some(t)),
            Err(Error::Diverged { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect()
}

fn component_estimates(samples: &[&IagTerms], pick: impl Fn(&IagTerms) -> &[f64]) -> Vec<Estimate> {
    let k = samples.first().map_or(0, |t| pick(t).len());
    (0..k)
        .map(|c| {
            let v: Vec<f64> = samples.iter().map(|t| pick(t)[c]).collect();
            Estimate::from_samples(&v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakReport {
    pub samples: usize,
    pub diverged: usize,
    pub outer_steps: usize,
    pub lhs: Vec<Estimate>,
    pub lebesgue: Vec<Estimate>,
    pub trace: Vec<Estimate>,
    pub skorohod_residual: Vec<Estimate>,
    /// `|mean(residual)| <= 3 SE` in every component.
    pub residual_centered: bool,
    pub divergence_ok: bool,
}

impl WeakReport {
    pub fn pass(&self) -> bool {
        self.residual_centered && self.divergence_ok
    }
}

fn divergence_ok(diverged: usize, samples: usize) -> bool {
    diverged as f64 <= MAX_DIVERGED_FRACTION * samples as f64
}

/// Monte-Carlo means of every term; the Skorohod residual must be centred.
pub fn weak_identity_check(setup: &IagSetup<'_>, samples: usize, seed: u64) -> Result<WeakReport> {
    if samples < 100 {
        return Err(config("the weak check needs at least 100 samples"));
    }
    let runs = run_samples(setup, setup.outer_steps, samples, seed)?;
    let kept: Vec<&IagTerms> = runs.iter().flatten().collect();
    let diverged = samples - kept.len();
    let residual = component_estimates(&kept, |t| &t.skorohod_residual);
    let residual_centered = !kept.is_empty() && residual.iter().all(|e| e.mean.abs() <= 3.0 * e.se);
    Ok(WeakReport {
        samples,
        diverged,
        outer_steps: setup.outer_steps,
        lhs: component_estimates(&kept, |t| &t.lhs),
        lebesgue: component_estimates(&kept, |t| &t.lebesgue),
        trace: component_estimates(&kept, |t| &t.trace),
        skorohod_residual: residual,
        residual_centered,
        divergence_ok: divergence_ok(diverged, samples),
    })
}

/// Scalar functionals `Z = g(W_T)` of one-dimensional noise. Their Malliavin
/// derivative is `D_r Z = g'(W_T)` for every `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Functional {
    #[serde(rename = "one")]
    One,
    #[serde(rename = "w_t")]
    Terminal,
    #[serde(rename = "sin_w_t")]
    Sine,
    #[serde(rename = "w_t_squared")]
    Square,
}

impl Functional {
    pub fn name(&self) -> &'static str {
        match self {
            Functional::One => "one",
            Functional::Terminal => "w_t",
            Functional::Sine => "sin_w_t",
            Functional::Square => "w_t_squared",
        }
    }

    pub fn value(&self, w: f64) -> f64 {
        match self {
            Functional::One => 1.0,
            Functional::Terminal => w,
            Functional::Sine => w.sin(),
            Functional::Square => w * w,
        }
    }

    pub fn derivative(&self, w: f64) -> f64 {
        match self {
            Functional::One => 0.0,
            Functional::Terminal => 1.0,
            Functional::Sine => w.cos(),
            Functional::Square => 2.0 * w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityResult {
    pub functional: Functional,
    /// `E[Z * residual]`.
    pub lhs: Estimate,
    /// `E[∫ D_r Z u_r dr]` with `u` the Skorohod integrand.
    pub rhs: Estimate,
    /// Paired difference `lhs - rhs`, sample by sample.
    pub gap: Estimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub samples: usize,
    pub diverged: usize,
    pub results: Vec<DualityResult>,
    pub divergence_ok: bool,
}

impl DualityReport {
    pub fn pass(&self) -> bool {
        self.divergence_ok && self.results.iter().all(|r| r.pass)
    }
}

/// Duality `E[Z δ(u)] = E[∫ D_r Z u_r dr]` with `δ(u)` taken as the Skorohod
/// residual. Scalar output and one-dimensional noise only.
pub fn skorohod_duality_check(
    setup: &IagSetup<'_>,
    functionals: &[Functional],
    samples: usize,
    seed: u64,
) -> Result<DualityReport> {
    if setup.f.out_dim() != 1 || setup.sigma.noise_dim() != 1 {
        return Err(domain("the duality check needs scalar f and one-dimensional noise"));
    }
    if samples < 100 {
        return Err(config("the duality check needs at least 100 samples"));
    }
    let runs = run_samples(setup, setup.outer_steps, samples, seed)?;
    let kept: Vec<&IagTerms> = runs.iter().flatten().collect();
    let diverged = samples - kept.len();
    let h = setup.fine_grid.horizon() / setup.outer_steps as f64;

    let results = functionals
        .iter()
        .map(|&g| {
            let mut lhs = Vec::with_capacity(kept.len());
            let mut rhs = Vec::with_capacity(kept.len());
            for t in &kept {
                let w = t.terminal_noise[0];
                lhs.push(g.value(w) * t.skorohod_residual[0]);
                let integral: f64 = t.nodes.iter().map(|n| n.skorohod[0]).sum::<f64>() * h;
                rhs.push(g.derivative(w) * integral);
            }
            let gap: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            let gap = Estimate::from_samples(&gap);
            DualityResult {
                functional: g,
                lhs: Estimate::from_samples(&lhs),
                rhs: Estimate::from_samples(&rhs),
                gap,
                pass: gap.mean.abs() <= 3.0 * gap.se,
            }
        })
        .collect();
    Ok(DualityReport {
        samples,
        diverged,
        results,
        divergence_ok: divergence_ok(diverged, samples),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseLevel {
    pub outer_steps: usize,
    /// `sqrt(mean |residual|^2)` over the samples.
    pub rms: f64,
    pub mean_norm: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseReport {
    pub samples: usize,
    pub diverged: usize,
    pub levels: Vec<PathwiseLevel>,
    /// `rms[l] / rms[l + 1]`.
    pub ratios: Vec<f64>,
    /// Median over samples of the per-sample norm ratio, per refinement.
    pub median_sample_ratios: Vec<f64>,
    pub ratio_band: (f64, f64),
    pub pass: bool,
}

/// Residual norms of the identity on the same paths for a sequence of outer
/// grids (each level doubling the previous one). Passes when both the ratios
/// of RMS norms and the medians of the per-sample ratios lie in `ratio_band`.
pub fn pathwise_refinement_check(
    setup: &IagSetup<'_>,
    outer_levels: &[usize],
    samples: usize,
    seed: u64,
    ratio_band: (f64, f64),
) -> Result<PathwiseReport> {
    if outer_levels.len() < 2 {
        return Err(config("refinement needs at least two outer levels"));
    }
    let per_sample = map_samples(samples, |i| -> Result<Option<Vec<f64>>> {
        let path = BrownianPath::sample(seed, i, setup.fine_grid, setup.sigma.noise_dim())?;
        let mut norms = Vec::with_capacity(outer_levels.len());
        for &outer in outer_levels {
            match iag_terms(setup.mu, setup.sigma, setup.ito, setup.f, &path, outer) {
                Ok(t) => norms.push(t.residual_norm()),
                Err(Error::Diverged { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(norms))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let kept: Vec<&Vec<f64>> = per_sample.iter().flatten().collect();
    let diverged = samples - kept.len();

    let levels: Vec<PathwiseLevel> = outer_levels
        .iter()
        .enumerate()
        .map(|(l, &outer_steps)| {
            let norms: Vec<f64> = kept.iter().map(|v| v[l]).collect();
            let rms = (norms.iter().map(|n| n * n).sum::<f64>() / norms.len() as f64).sqrt();
            PathwiseLevel {
                outer_steps,
                rms,
                mean_norm: Estimate::from_samples(&norms),
            }
        })
        .collect();
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[0].rms / w[1].rms).collect();
    let median_sample_ratios: Vec<f64> = (0..outer_levels.len() - 1)
        .map(|l| {
            let mut r: Vec<f64> = kept.iter().map(|v| v[l] / v[l + 1]).collect();
            r.sort_by(|a, b| a.total_cmp(b));
            r.get(r.len() / 2).copied().unwrap_or(f64::NAN)
        })
        .collect();
    let in_band = |r: &f64| (ratio_band.0..=ratio_band.1).contains(r);
    let pass =
        divergence_ok(diverged, samples) && ratios.iter().all(in_band) && median_sample_ratios.iter().all(in_band);
    Ok(PathwiseReport {
        samples,
        diverged,
        levels,
        ratios,
        median_sample_ratios,
        ratio_band,
        pass,
    })
}

type ResidualPair = (Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatedReport {
    pub samples: usize,
    pub diverged: usize,
    /// Residual with the coarse fine grid and `outer_steps`.
    pub coarse: Vec<Estimate>,
    /// Residual with both grids halved.
    pub refined: Vec<Estimate>,
    /// `2 * refined - coarse`, per sample.
    pub extrapolated: Vec<Estimate>,
    pub pass: bool,
}

/// Weak check for discretisations whose residual carries an `O(h)` bias.
///
/// Each sample draws one path on `2 N` steps, evaluates the residual on the
/// `N`-step coarsening with `outer_steps` nodes and on the full path with
/// `2 outer_steps` nodes, and Richardson-extrapolates. The extrapolated
/// residual must be centred within 3 SE.
pub fn extrapolated_weak_check(setup: &IagSetup<'_>, samples: usize, seed: u64) -> Result<ExtrapolatedReport> {
    if samples < 100 {
        return Err(config("the weak check needs at least 100 samples"));
    }
    let fine = TimeGrid::new(setup.fine_grid.horizon(), 2 * setup.fine_grid.steps())?;
    let runs = map_samples(samples, |i| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let path = BrownianPath::sample(seed, i, fine, setup.sigma.noise_dim())?;
        let coarse = path.coarsen(2)?;
        let eval = |p: &BrownianPath, outer| iag_terms(setup.mu, setup.sigma, setup.ito, setup.f, p, outer);
        match (eval(&coarse, setup.outer_steps), eval(&path, 2 * setup.outer_steps)) {
            (Ok(a), Ok(b)) => Ok(Some((a.skorohod_residual, b.skorohod_residual))),
            (Err(Error::Diverged { .. }), _) | (_, Err(Error::Diverged { .. })) => Ok(None),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let kept: Vec<&ResidualPair> = runs.iter().flatten().collect();
    let diverged = samples - kept.len();
    let k = kept.first().map_or(0, |(a, _)| a.len());
    let per_component = |pick: &dyn Fn(&ResidualPair, usize) -> f64| -> Vec<Estimate> {
        (0..k)
            .map(|c| Estimate::from_samples(&kept.iter().map(|r| pick(r, c)).collect::<Vec<_>>()))
            .collect()
    };
    let coarse = per_component(&|r, c| r.0[c]);
    let refined = per_component(&|r, c| r.1[c]);
    let extrapolated = per_component(&|r, c| 2.0 * r.1[c] - r.0[c]);
    let pass = divergence_ok(diverged, samples)
        && !extrapolated.is_empty()
        && extrapolated.iter().all(|e| e.mean.abs() <= 3.0 * e.se);
    Ok(ExtrapolatedReport {
        samples,
        diverged,
        coarse,
        refined,
        extrapolated,
        pass,
    })
}
