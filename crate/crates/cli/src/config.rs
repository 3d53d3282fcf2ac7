//! Run configuration, read from one TOML document.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use iagflow::iag::{Functional, MAX_DIVERGED_FRACTION};
use iagflow::vdp::VdpParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AgVerify,
    IagWeak,
    IagPathwise,
    IagDuality,
    VdpRate,
    MgfCheck,
    ExpmomentCheck,
    FlowmomentCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AgVerify => "ag-verify",
            ExperimentKind::IagWeak => "iag-weak",
            ExperimentKind::IagPathwise => "iag-pathwise",
            ExperimentKind::IagDuality => "iag-duality",
            ExperimentKind::VdpRate => "vdp-rate",
            ExperimentKind::MgfCheck => "mgf-check",
            ExperimentKind::ExpmomentCheck => "expmoment-check",
            ExperimentKind::FlowmomentCheck => "flowmoment-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. There is no default.
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_diverged_fraction")]
    pub max_diverged_fraction: f64,
    #[serde(default)]
    pub vdp: VdpParams,
    #[serde(default)]
    pub ag: Option<AgConfig>,
    #[serde(default)]
    pub iag: Option<IagConfig>,
    #[serde(default)]
    pub rate: Option<RateConfig>,
    #[serde(default)]
    pub mgf: Option<MgfConfig>,
    #[serde(default)]
    pub expmoment: Option<ExpMomentConfig>,
    #[serde(default)]
    pub flowmoment: Option<FlowMomentConfig>,
}

fn default_diverged_fraction() -> f64 {
    MAX_DIVERGED_FRACTION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgCase {
    /// `x' = x` against `y' = 0` from 1, `f(x) = x`.
    Linear,
    /// `x' = -x^3` against `y' = -y^3 + 0.1` from 1, `f(x) = x^2`.
    Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgConfig {
    pub case: AgCase,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub outer_levels: Vec<usize>,
    pub inner_steps: usize,
    /// Bound on the residual at the finest outer level.
    pub tolerance: f64,
    /// Smallest accepted residual ratio per doubling of the outer grid.
    #[serde(default = "default_order_ratio")]
    pub min_order_ratio: f64,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_order_ratio() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IagModel {
    /// `mu = 0`, constant `sigma` and `B`, zero `A`, `f(x) = x^2`, `xi = 0`.
    Constant,
    /// The van der Pol system against its tamed scheme (`B = sigma`),
    /// `f(x) = |x|^2`.
    VdpMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IagConfig {
    pub model: IagModel,
    pub samples: usize,
    pub fine_steps: usize,
    #[serde(default)]
    pub outer_steps: Option<usize>,
    #[serde(default)]
    pub outer_levels: Vec<usize>,
    #[serde(default = "default_scheme_steps")]
    pub scheme_steps: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    /// Richardson-extrapolate the residual over a doubled grid pair.
    #[serde(default)]
    pub extrapolate: bool,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<Functional>,
    #[serde(default = "default_ratio_band")]
    pub ratio_band: [f64; 2],
}

fn default_scheme_steps() -> usize {
    8
}

fn default_sigma() -> f64 {
    1.0
}

fn default_b() -> f64 {
    0.5
}

fn default_functionals() -> Vec<Functional> {
    vec![Functional::One, Functional::Terminal, Functional::Sine]
}

fn default_ratio_band() -> [f64; 2] {
    [1.3, 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub levels: Vec<usize>,
    pub reference_steps: usize,
    pub samples: usize,
    #[serde(default = "default_slope_band")]
    pub slope_band: [f64; 2],
}

fn default_slope_band() -> [f64; 2] {
    [-0.65, -0.35]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgfConfig {
    pub cases: usize,
    pub samples: usize,
    #[serde(default = "default_max_exponent")]
    pub max_exponent: f64,
}

fn default_max_exponent() -> f64 {
    0.45
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpMomentConfig {
    pub steps: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowMomentConfig {
    pub p: f64,
    pub steps: usize,
    pub samples: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the parts of the document `kind` needs.
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_diverged_fraction) {
            return bad("max_diverged_fraction must lie in [0, 1]".into());
        }
        self.vdp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let missing = |section: &str| CliError::Config(format!("{} needs a [{section}] section", kind.name()));
        match kind {
            ExperimentKind::AgVerify => {
                let ag = self.ag.as_ref().ok_or_else(|| missing("ag"))?;
                if ag.outer_levels.is_empty() || ag.outer_levels.contains(&0) || ag.inner_steps == 0 {
                    return bad("ag levels and inner steps must be positive".into());
                }
                if !(ag.horizon > 0.0) || !(ag.tolerance > 0.0) {
                    return bad("ag horizon and tolerance must be positive".into());
                }
            }
            ExperimentKind::IagWeak | ExperimentKind::IagPathwise | ExperimentKind::IagDuality => {
                let iag = self.iag.as_ref().ok_or_else(|| missing("iag"))?;
                if iag.samples == 0 || iag.fine_steps == 0 {
                    return bad("iag samples and fine_steps must be positive".into());
                }
                let divides = |n: usize| n > 0 && iag.fine_steps % n == 0;
                if kind == ExperimentKind::IagPathwise {
                    if iag.outer_levels.len() < 2 || !iag.outer_levels.iter().all(|&n| divides(n)) {
                        return bad("iag outer_levels needs at least two divisors of fine_steps".into());
                    }
                    if iag.outer_levels.windows(2).any(|w| w[1] != 2 * w[0]) {
                        return bad("iag outer_levels must double from level to level".into());
                    }
                } else {
                    match iag.outer_steps {
                        Some(n) if divides(n) => {}
                        _ => return bad("iag outer_steps must divide fine_steps".into()),
                    }
                }
                if iag.model == IagModel::VdpMatched && !divides(iag.scheme_steps) {
                    return bad("iag scheme_steps must divide fine_steps".into());
                }
                if iag.model == IagModel::VdpMatched && kind == ExperimentKind::IagDuality {
                    return bad("the duality check runs on the constant model".into());
                }
                if iag.model == IagModel::VdpMatched
                    && kind != ExperimentKind::IagDuality
                    && !iag
                        .outer_levels
                        .iter()
                        .chain(&iag.outer_steps)
                        .all(|&n| n % iag.scheme_steps == 0)
                {
                    return bad("outer grids must refine the scheme grid".into());
                }
            }
            ExperimentKind::VdpRate => {
                let rate = self.rate.as_ref().ok_or_else(|| missing("rate"))?;
                if rate.samples == 0 {
                    return bad("rate samples must be positive".into());
                }
                if let Some(n) = rate.levels.iter().find(|&&n| n == 0 || rate.reference_steps % n != 0) {
                    return bad(format!(
                        "level {n} does not divide reference_steps {}",
                        rate.reference_steps
                    ));
                }
            }
            ExperimentKind::MgfCheck => {
                let mgf = self.mgf.as_ref().ok_or_else(|| missing("mgf"))?;
                if mgf.cases == 0 || mgf.samples < 2 || !(mgf.max_exponent < 1.0) {
                    return bad("mgf needs cases >= 1, samples >= 2 and max_exponent < 1".into());
                }
            }
            ExperimentKind::ExpmomentCheck => {
                let e = self.expmoment.as_ref().ok_or_else(|| missing("expmoment"))?;
                if e.samples < 2 {
                    return bad("expmoment samples must be at least 2".into());
                }
            }
            ExperimentKind::FlowmomentCheck => {
                let f = self.flowmoment.as_ref().ok_or_else(|| missing("flowmoment"))?;
                if f.samples < 2 || f.steps % 4 != 0 || f.steps == 0 {
                    return bad("flowmoment needs samples >= 2 and steps divisible by 4".into());
                }
            }
        }
        Ok(())
    }
}
