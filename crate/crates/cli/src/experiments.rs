//! One function per subcommand. Each returns its statistics, verdicts and
//! table; none of them touches the file system.

use iagflow::alekseev::ag_residual;
use iagflow::fields::{AffineDrift, ConstantDiffusion, CubicDrift, Identity, SquaredNorm};
use iagflow::iag::{
    extrapolated_weak_check, pathwise_refinement_check, skorohod_duality_check, weak_identity_check,
    ConstantCoefficients, IagSetup, ItoProcess, TamedProcess,
};
use iagflow::vdp::{exp_moment_check, flow_moment_check, mgf_check, strong_rate_study, VanDerPol, VdpParams};
use iagflow::{make_grid, DiffusionField, TestFunction, TimeGrid, VectorField};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{AgCase, ExperimentKind, IagConfig, IagModel, RunConfig};
use crate::error::CliError;
use crate::output::{Check, Table};

/// Standard errors allowed between an estimate and its target.
pub const SE_FACTOR: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub table: Table,
    pub samples: Option<usize>,
    pub diverged: usize,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("report types serialize")
}

fn within_se(name: String, mean: f64, se: f64, target: f64) -> Check {
    Check::new(
        name,
        mean,
        Some(se),
        format!("|mean - {target}| <= {SE_FACTOR} SE"),
        (mean - target).abs() <= SE_FACTOR * se,
    )
}

pub fn run(kind: ExperimentKind, config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate(kind)?;
    match kind {
        ExperimentKind::AgVerify => ag_verify(config),
        ExperimentKind::IagWeak => iag_weak(config),
        ExperimentKind::IagPathwise => iag_pathwise(config),
        ExperimentKind::IagDuality => iag_duality(config),
        ExperimentKind::VdpRate => vdp_rate(config),
        ExperimentKind::MgfCheck => mgf(config),
        ExperimentKind::ExpmomentCheck => expmoment(config),
        ExperimentKind::FlowmomentCheck => flowmoment(config),
    }
}

fn ag_verify(config: &RunConfig) -> Result<Outcome, CliError> {
    let ag = config.ag.as_ref().expect("validated");
    let one = DVector::from_element(1, 1.0);
    let (mu, y_drift, f): (Box<dyn VectorField>, Box<dyn VectorField>, Box<dyn TestFunction>) = match ag.case {
        AgCase::Linear => (
            Box::new(AffineDrift::scalar(1.0)),
            Box::new(AffineDrift::zero(1)),
            Box::new(Identity { dim: 1 }),
        ),
        AgCase::Cubic => (
            Box::new(CubicDrift { offset: 0.0 }),
            Box::new(CubicDrift { offset: 0.1 }),
            Box::new(SquaredNorm { dim: 1 }),
        ),
    };
    let mut runs = Vec::with_capacity(ag.outer_levels.len());
    let mut table = Table::new(vec!["outer_steps", "inner_steps", "lhs", "rhs", "residual"]);
    for &outer in &ag.outer_levels {
        let r = ag_residual(
            mu.as_ref(),
            y_drift.as_ref(),
            &one,
            f.as_ref(),
            ag.horizon,
            outer,
            ag.inner_steps,
        )?;
        table.push(vec![
            outer.into(),
            ag.inner_steps.into(),
            r.lhs[0].into(),
            r.rhs[0].into(),
            r.residual[0].into(),
        ]);
        runs.push(r);
    }
    let mut checks = Vec::new();
    let finest = runs.last().expect("at least one level");
    checks.push(Check::new(
        format!("residual at outer={}", finest.outer_steps),
        finest.residual_norm(),
        None,
        format!("<= {:e}", ag.tolerance),
        finest.residual_norm() <= ag.tolerance,
    ));
    for w in runs.windows(2) {
        let ratio = w[0].residual_norm() / w[1].residual_norm();
        checks.push(Check::new(
            format!("residual ratio {} -> {}", w[0].outer_steps, w[1].outer_steps),
            ratio,
            None,
            format!(">= {}", ag.min_order_ratio),
            ratio >= ag.min_order_ratio,
        ));
    }
    Ok(Outcome {
        results: json(&runs),
        checks,
        table,
        samples: None,
        diverged: 0,
    })
}

/// Owned model pieces for the IAG experiments.
struct IagModelParts {
    mu: Box<dyn VectorField>,
    sigma: Box<dyn DiffusionField>,
    ito: Box<dyn ItoProcess>,
    f: Box<dyn TestFunction>,
}

fn iag_model(iag: &IagConfig, vdp: &VdpParams) -> IagModelParts {
    match iag.model {
        IagModel::Constant => IagModelParts {
            mu: Box::new(AffineDrift::zero(1)),
            sigma: Box::new(ConstantDiffusion::scalar(iag.sigma)),
            ito: Box::new(ConstantCoefficients {
                xi: DVector::zeros(1),
                drift: DVector::zeros(1),
                diffusion: DMatrix::from_element(1, 1, iag.b),
            }),
            f: Box::new(SquaredNorm { dim: 1 }),
        },
        IagModel::VdpMatched => IagModelParts {
            mu: Box::new(vdp.drift()),
            sigma: Box::new(vdp.diffusion()),
            ito: Box::new(OwnedTamed {
                mu: vdp.drift(),
                beta: vdp.beta_column(),
                xi: vdp.xi(),
                scheme_steps: iag.scheme_steps,
            }),
            f: Box::new(SquaredNorm { dim: 2 }),
        },
    }
}

/// [`TamedProcess`] that owns its drift.
struct OwnedTamed {
    mu: VanDerPol,
    beta: DMatrix<f64>,
    xi: DVector<f64>,
    scheme_steps: usize,
}

impl OwnedTamed {
    fn view(&self) -> TamedProcess<'_> {
        TamedProcess {
            mu: &self.mu,
            beta: self.beta.clone(),
            xi: self.xi.clone(),
            scheme_steps: self.scheme_steps,
        }
    }
}

impl ItoProcess for OwnedTamed {
    fn initial(&self) -> DVector<f64> {
        self.xi.clone()
    }

    fn drift(&self, k: usize, grid: &TimeGrid, history: &[DVector<f64>]) -> DVector<f64> {
        self.view().drift(k, grid, history)
    }

    fn diffusion(&self, _k: usize, _grid: &TimeGrid, _history: &[DVector<f64>]) -> DMatrix<f64> {
        self.beta.clone()
    }
}

fn setup<'a>(
    parts: &'a IagModelParts,
    iag: &IagConfig,
    horizon: f64,
    outer_steps: usize,
) -> Result<IagSetup<'a>, CliError> {
    Ok(IagSetup {
        mu: parts.mu.as_ref(),
        sigma: parts.sigma.as_ref(),
        ito: parts.ito.as_ref(),
        f: parts.f.as_ref(),
        fine_grid: make_grid(horizon, iag.fine_steps)?,
        outer_steps,
    })
}

fn horizon(config: &RunConfig) -> f64 {
    match config.iag.as_ref().map(|i| i.model) {
        Some(IagModel::VdpMatched) => config.vdp.horizon,
        _ => 1.0,
    }
}

fn iag_weak(config: &RunConfig) -> Result<Outcome, CliError> {
    let iag = config.iag.as_ref().expect("validated");
    let parts = iag_model(iag, &config.vdp);
    let outer = iag.outer_steps.expect("validated");
    let setup = setup(&parts, iag, horizon(config), outer)?;
    let mut checks = Vec::new();
    let mut table = Table::new(vec!["term", "component", "mean", "se"]);

    if iag.extrapolate {
        let report = extrapolated_weak_check(&setup, iag.samples, config.seed)?;
        for (term, list) in [
            ("residual_coarse", &report.coarse),
            ("residual_refined", &report.refined),
            ("residual_extrapolated", &report.extrapolated),
        ] {
            for (c, e) in list.iter().enumerate() {
                table.push(vec![term.into(), c.into(), e.mean.into(), e.se.into()]);
            }
        }
        for (c, e) in report.extrapolated.iter().enumerate() {
            checks.push(within_se(
                format!("extrapolated residual[{c}] centred"),
                e.mean,
                e.se,
                0.0,
            ));
        }
        return Ok(Outcome {
            results: json(&report),
            checks,
            table,
            samples: Some(report.samples),
            diverged: report.diverged,
        });
    }

    let report = weak_identity_check(&setup, iag.samples, config.seed)?;
    for (term, list) in [
        ("lhs", &report.lhs),
        ("lebesgue", &report.lebesgue),
        ("trace", &report.trace),
        ("skorohod_residual", &report.skorohod_residual),
    ] {
        for (c, e) in list.iter().enumerate() {
            table.push(vec![term.into(), c.into(), e.mean.into(), e.se.into()]);
        }
    }
    for (c, e) in report.skorohod_residual.iter().enumerate() {
        checks.push(within_se(format!("skorohod_residual[{c}] centred"), e.mean, e.se, 0.0));
    }
    if iag.model == IagModel::Constant {
        // E f(X_T) - E f(Y_T) = (sigma^2 - b^2) T, and the trace term equals
        // the same constant on every path.
        let target = iag.sigma * iag.sigma - iag.b * iag.b;
        checks.push(within_se(
            "lhs mean".into(),
            report.lhs[0].mean,
            report.lhs[0].se,
            target,
        ));
        let trace = &report.trace[0];
        let gap = (trace.mean - target).abs();
        checks.push(Check::new(
            "trace mean",
            trace.mean,
            Some(trace.se),
            format!("|mean - {target}| <= max({SE_FACTOR} SE, 1e-12)"),
            gap <= (SE_FACTOR * trace.se).max(1e-12),
        ));
    }
    Ok(Outcome {
        results: json(&report),
        checks,
        table,
        samples: Some(report.samples),
        diverged: report.diverged,
    })
}

fn iag_pathwise(config: &RunConfig) -> Result<Outcome, CliError> {
    let iag = config.iag.as_ref().expect("validated");
    let parts = iag_model(iag, &config.vdp);
    let setup = setup(&parts, iag, horizon(config), iag.outer_levels[0])?;
    let band = (iag.ratio_band[0], iag.ratio_band[1]);
    let report = pathwise_refinement_check(&setup, &iag.outer_levels, iag.samples, config.seed, band)?;
    let mut table = Table::new(vec!["outer_steps", "rms", "mean_norm", "se"]);
    for l in &report.levels {
        table.push(vec![
            l.outer_steps.into(),
            l.rms.into(),
            l.mean_norm.mean.into(),
            l.mean_norm.se.into(),
        ]);
    }
    let criterion = format!("in [{}, {}]", band.0, band.1);
    let in_band = |r: f64| (band.0..=band.1).contains(&r);
    let mut checks = Vec::new();
    for (l, (&ratio, &median)) in report.ratios.iter().zip(&report.median_sample_ratios).enumerate() {
        let (a, b) = (report.levels[l].outer_steps, report.levels[l + 1].outer_steps);
        checks.push(Check::new(
            format!("rms ratio {a} -> {b}"),
            ratio,
            None,
            criterion.clone(),
            in_band(ratio),
        ));
        checks.push(Check::new(
            format!("median per-sample ratio {a} -> {b}"),
            median,
            None,
            criterion.clone(),
            in_band(median),
        ));
    }
    Ok(Outcome {
        results: json(&report),
        checks,
        table,
        samples: Some(report.samples),
        diverged: report.diverged,
    })
}

fn iag_duality(config: &RunConfig) -> Result<Outcome, CliError> {
    let iag = config.iag.as_ref().expect("validated");
    let parts = iag_model(iag, &config.vdp);
    let setup = setup(&parts, iag, horizon(config), iag.outer_steps.expect("validated"))?;
    let report = skorohod_duality_check(&setup, &iag.functionals, iag.samples, config.seed)?;
    let mut table = Table::new(vec!["functional", "lhs", "lhs_se", "rhs", "rhs_se", "gap", "gap_se"]);
    let mut checks = Vec::new();
    for r in &report.results {
        table.push(vec![
            r.functional.name().into(),
            r.lhs.mean.into(),
            r.lhs.se.into(),
            r.rhs.mean.into(),
            r.rhs.se.into(),
            r.gap.mean.into(),
            r.gap.se.into(),
        ]);
        checks.push(within_se(
            format!("duality gap Z={}", r.functional.name()),
            r.gap.mean,
            r.gap.se,
            0.0,
        ));
    }
    Ok(Outcome {
        results: json(&report),
        checks,
        table,
        samples: Some(report.samples),
        diverged: report.diverged,
    })
}

fn vdp_rate(config: &RunConfig) -> Result<Outcome, CliError> {
    let rate = config.rate.as_ref().expect("validated");
    let report = strong_rate_study(
        &config.vdp,
        &rate.levels,
        rate.reference_steps,
        rate.samples,
        config.seed,
    )
    .map_err(|err| match err {
        iagflow::Error::Config(msg) => CliError::Config(msg),
        other => other.into(),
    })?;
    let mut table = Table::new(vec!["N", "rms", "se", "samples", "diverged"]);
    for l in &report.levels {
        table.push(vec![
            l.steps.into(),
            l.rms.into(),
            l.se.into(),
            l.samples.into(),
            l.diverged.into(),
        ]);
    }
    let [lo, hi] = rate.slope_band;
    let mut checks = vec![Check::new(
        "log-log slope",
        report.slope,
        None,
        format!("in [{lo}, {hi}]"),
        (lo..=hi).contains(&report.slope),
    )];
    for w in report.levels.windows(2) {
        let se = (w[0].se * w[0].se + w[1].se * w[1].se).sqrt();
        checks.push(Check::new(
            format!("rms nonincreasing {} -> {}", w[0].steps, w[1].steps),
            w[1].rms - w[0].rms,
            Some(se),
            "<= 2 SE",
            w[1].rms <= w[0].rms + 2.0 * se,
        ));
    }
    Ok(Outcome {
        results: json(&report),
        checks,
        table,
        samples: Some(rate.samples),
        diverged: report.diverged,
    })
}

fn mgf(config: &RunConfig) -> Result<Outcome, CliError> {
    let m = config.mgf.as_ref().expect("validated");
    let cases = mgf_check(m.cases, m.max_exponent, m.samples, config.seed)?;
    let mut table = Table::new(vec!["a", "b", "c", "closed_form", "mean", "se"]);
    let mut checks = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        table.push(vec![
            c.a.into(),
            c.b.into(),
            c.c.into(),
            c.closed_form.into(),
            c.estimate.mean.into(),
            c.estimate.se.into(),
        ]);
        checks.push(within_se(
            format!("case {i}"),
            c.estimate.mean,
            c.estimate.se,
            c.closed_form,
        ));
    }
    Ok(Outcome {
        results: json(&cases),
        checks,
        table,
        samples: Some(m.samples),
        diverged: 0,
    })
}

fn expmoment(config: &RunConfig) -> Result<Outcome, CliError> {
    let e = config.expmoment.as_ref().expect("validated");
    let report = exp_moment_check(&config.vdp, e.steps, e.samples, config.seed).map_err(|err| match err {
        iagflow::Error::Config(msg) => CliError::Config(msg),
        other => other.into(),
    })?;
    let mut table = Table::new(vec!["t", "mean", "se", "bound"]);
    let mut checks = Vec::new();
    for n in &report.nodes {
        table.push(vec![
            n.time.into(),
            n.estimate.mean.into(),
            n.estimate.se.into(),
            report.bound.into(),
        ]);
        checks.push(Check::new(
            format!("node t={}", n.time),
            n.estimate.mean,
            Some(n.estimate.se),
            format!("<= {} + {SE_FACTOR} SE", report.bound),
            n.estimate.mean <= report.bound + SE_FACTOR * n.estimate.se,
        ));
    }
    Ok(Outcome {
        results: json(&report),
        checks,
        table,
        samples: Some(e.samples),
        diverged: 0,
    })
}

#[derive(Serialize)]
struct FlowMomentResults {
    base: iagflow::vdp::FlowMomentReport,
    doubled: iagflow::vdp::FlowMomentReport,
}

fn flowmoment(config: &RunConfig) -> Result<Outcome, CliError> {
    let fm = config.flowmoment.as_ref().expect("validated");
    let base = flow_moment_check(&config.vdp, fm.p, fm.steps, fm.samples, config.seed)?;
    let doubled = flow_moment_check(&config.vdp, fm.p, fm.steps, 2 * fm.samples, config.seed)?;
    let mut table = Table::new(vec![
        "r",
        "t",
        "samples",
        "first_mean",
        "first_se",
        "second_mean",
        "second_se",
    ]);
    for report in [&base, &doubled] {
        for e in &report.entries {
            table.push(vec![
                e.r.into(),
                e.t.into(),
                report.samples.into(),
                e.first.mean.into(),
                e.first.se.into(),
                e.second.mean.into(),
                e.second.se.into(),
            ]);
        }
    }
    let finite = base.all_finite() && doubled.all_finite();
    let worst = base
        .entries
        .iter()
        .zip(&doubled.entries)
        .flat_map(|(a, b)| {
            [(&a.first, &b.first), (&a.second, &b.second)].map(|(x, y)| {
                let se = (x.se * x.se + y.se * y.se).sqrt();
                if se > 0.0 {
                    (x.mean - y.mean).abs() / se
                } else if x.mean == y.mean {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
        })
        .fold(0.0, f64::max);
    let checks = vec![
        Check::new(
            "all moments finite",
            if finite { 1.0 } else { 0.0 },
            None,
            "== 1",
            finite,
        ),
        Check::new(
            "largest M vs 2M discrepancy in SE units",
            worst,
            None,
            format!("<= {SE_FACTOR}"),
            worst <= SE_FACTOR,
        ),
    ];
    let diverged = base.diverged.max(doubled.diverged);
    Ok(Outcome {
        results: json(&FlowMomentResults { base, doubled }),
        checks,
        table,
        samples: Some(2 * fm.samples),
        diverged,
    })
}
