use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activators::Schedule;
use crate::error::{Error, Result};
use crate::fdl_verifier::DataSets;
use crate::oscillator::EquationForm;
use crate::rate::RateFn;
use crate::speeds::{ClassOrder, PropagationSpeed, SpeedClassSpec, TabulatedProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Membership,
    FdlSweep,
    Activator,
    Iterate,
    Density,
    Dependence,
}

/// Which speed an experiment runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SpeedSelector {
    Constant {
        value: f64,
        horizon: f64,
    },
    /// `p + q c_α`.
    ModelAlpha {
        alpha: f64,
        horizon: f64,
        #[serde(default)]
        p: f64,
        #[serde(default = "one")]
        q: f64,
    },
    Table {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl SpeedSelector {
    /// Builds the speed; relative table paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<PropagationSpeed> {
        match self {
            SpeedSelector::Constant { value, horizon } => PropagationSpeed::constant(*value, *horizon),
            SpeedSelector::ModelAlpha { alpha, horizon, p, q } => {
                let c = PropagationSpeed::model_alpha(*alpha, *horizon)?;
                if *p == 0.0 && *q == 1.0 {
                    Ok(c)
                } else {
                    c.affine(*p, *q)
                }
            }
            SpeedSelector::Table { path } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let text = std::fs::read_to_string(&full).map_err(|e| Error::Io(format!("{}: {e}", full.display())))?;
                PropagationSpeed::tabulated(full.display().to_string(), TabulatedProfile::parse(&text)?)
            }
        }
    }

    fn collect_problems(&self, problems: &mut Vec<String>) {
        match *self {
            SpeedSelector::Constant { value, horizon } => {
                if !(value > 0.0 && value.is_finite()) {
                    problems.push(format!("speed: constant value must be positive, got {value}"));
                }
                if !(horizon > 0.0 && horizon.is_finite()) {
                    problems.push(format!("speed: horizon must be positive, got {horizon}"));
                }
            }
            SpeedSelector::ModelAlpha { alpha, horizon, q, .. } => {
                if !(0.0..=1.0).contains(&alpha) {
                    problems.push(format!("speed: alpha must lie in [0, 1], got {alpha}"));
                }
                if !(horizon > 0.0 && horizon < 1.0) {
                    problems.push(format!("speed: model horizon must lie in (0, 1), got {horizon}"));
                }
                if !(q > 0.0) {
                    problems.push(format!("speed: affine slope must be positive, got {q}"));
                }
            }
            SpeedSelector::Table { .. } => {}
        }
    }
}

/// Envelope parameters. `k0` defaults to the smallest admissible value on the check grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecConfig {
    pub mu1: f64,
    pub mu2: f64,
    pub t0: f64,
    pub omega: RateFn,
    pub psi: RateFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    pub order: ClassOrder,
}

impl SpecConfig {
    pub fn to_spec(&self, grid: &[f64]) -> SpeedClassSpec {
        let mut spec = SpeedClassSpec {
            mu1: self.mu1,
            mu2: self.mu2,
            t0: self.t0,
            omega: self.omega,
            psi: self.psi,
            k0: self.k0.unwrap_or(1.0),
            order: self.order,
        };
        if self.k0.is_none() {
            spec.k0 = spec.minimal_k0(grid);
        }
        spec
    }
}

/// `start · ratio^k` for `k < count`; `count = 0` is the empty grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricGrid {
    pub start: f64,
    pub ratio: f64,
    pub count: usize,
}

impl GeometricGrid {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.start * self.ratio.powi(k as i32)).collect()
    }

    fn collect_problems(&self, name: &str, problems: &mut Vec<String>) {
        if !(self.start > 0.0 && self.start.is_finite()) {
            problems.push(format!("{name}: start must be positive, got {}", self.start));
        }
        if self.count > 1 && !(self.ratio > 1.0 && self.ratio.is_finite()) {
            problems.push(format!("{name}: ratio must exceed 1 for a strictly increasing grid, got {}", self.ratio));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub integrator: f64,
    /// Relative room for the loss-exponent boundedness test.
    pub slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { integrator: 1e-10, slack: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdlConfig {
    pub form: EquationForm,
    pub data: DataSets,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_ceiling: Option<f64>,
    pub outputs: usize,
}

impl Default for FdlConfig {
    fn default() -> Self {
        Self { form: EquationForm::Squared, data: DataSets::Both, slope_ceiling: None, outputs: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActivatorConfig {
    pub schedule: Schedule,
    pub checkpoints: Vec<f64>,
    pub use_integrator: bool,
    /// Points per half-period added to the check grid inside windows.
    pub per_half_period: usize,
}

impl Default for ActivatorConfig {
    fn default() -> Self {
        Self { schedule: Schedule::C1, checkpoints: vec![0.125, 0.25, 0.5], use_integrator: true, per_half_period: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterateConfig {
    pub stages: usize,
    pub margin: f64,
    pub schedule: Schedule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    pub lambda_start: f64,
    pub lambda_max: f64,
    pub betas: Vec<f64>,
}

impl Default for IterateConfig {
    fn default() -> Self {
        Self {
            stages: 3,
            margin: 0.05,
            schedule: Schedule::C1,
            level: None,
            lambda_start: 256.0,
            lambda_max: 2f64.powi(60),
            betas: vec![0.0, 1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// `c_n = c_∞ + A 2^-n`.
    Shift,
    /// `c_n = c_∞ + A 2^-n sin(n t)`.
    #[default]
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DependenceConfig {
    pub lambda: f64,
    pub t1: f64,
    pub n_min: u32,
    pub n_max: u32,
    pub amplitude: f64,
    pub perturbation: PerturbationKind,
    pub grid_points: usize,
    /// Largest accepted ratio between consecutive deviations.
    pub max_ratio: f64,
}

impl Default for DependenceConfig {
    fn default() -> Self {
        Self { lambda: 10.0, t1: 1.0, n_min: 4, n_max: 10, amplitude: 1.0, perturbation: PerturbationKind::Sine, grid_points: 2000, max_ratio: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "one_worker")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    /// Log-grid density of class checks.
    #[serde(default = "per_decade")]
    pub per_decade: usize,
    pub speed: SpeedSelector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<GeometricGrid>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fdl: Option<FdlConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activator: Option<ActivatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate: Option<IterateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<GeometricGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependence: Option<DependenceConfig>,
}

fn one_worker() -> usize {
    1
}

fn per_decade() -> usize {
    crate::speeds::grid::PER_DECADE
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Every problem found, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.workers == 0 {
            p.push("workers must be at least 1".into());
        }
        if self.per_decade < 16 {
            p.push(format!("per_decade must be at least 16, got {}", self.per_decade));
        }
        let tol = self.tolerances.integrator;
        if !(1e-14..=1e-3).contains(&tol) {
            p.push(format!("tolerances.integrator must lie in [1e-14, 1e-3], got {tol}"));
        }
        if !(self.tolerances.slack >= 0.0) {
            p.push(format!("tolerances.slack must be nonnegative, got {}", self.tolerances.slack));
        }
        self.speed.collect_problems(&mut p);
        if let Some(s) = &self.spec {
            let spec = SpeedClassSpec {
                mu1: s.mu1,
                mu2: s.mu2,
                t0: s.t0,
                omega: s.omega,
                psi: s.psi,
                k0: s.k0.unwrap_or(1.0),
                order: s.order,
            };
            for q in {
                let mut v = Vec::new();
                spec.collect_problems(&mut v);
                v
            } {
                p.push(format!("spec: {q}"));
            }
        }
        if let Some(g) = &self.lambda {
            g.collect_problems("lambda", &mut p);
        }
        let need = |p: &mut Vec<String>, ok: bool, what: &str| {
            if !ok {
                p.push(format!("kind {:?} needs a [{what}] section", self.kind));
            }
        };
        match self.kind {
            ExperimentKind::Membership => need(&mut p, self.spec.is_some(), "spec"),
            ExperimentKind::FdlSweep => {
                need(&mut p, self.spec.is_some(), "spec");
                need(&mut p, self.lambda.is_some(), "lambda");
                if let Some(g) = &self.lambda {
                    if g.start <= std::f64::consts::E {
                        p.push(format!("lambda: frequencies must exceed e, got start {}", g.start));
                    }
                }
                if let Some(s) = &self.spec {
                    if !(s.t0 < 1.0) {
                        p.push(format!("spec: the loss sweep needs t0 < 1, got {}", s.t0));
                    }
                }
            }
            ExperimentKind::Activator => {
                need(&mut p, self.spec.is_some(), "spec");
                need(&mut p, self.lambda.is_some(), "lambda");
            }
            ExperimentKind::Iterate => {
                need(&mut p, self.spec.is_some(), "spec");
                if let Some(it) = &self.iterate {
                    if !(1..=8).contains(&it.stages) {
                        p.push(format!("iterate: stages must lie in 1..=8, got {}", it.stages));
                    }
                    if !(it.margin > 0.0 && it.margin < 0.5) {
                        p.push(format!("iterate: margin must lie in (0, 0.5), got {}", it.margin));
                    }
                }
            }
            ExperimentKind::Density => {
                need(&mut p, self.spec.is_some(), "spec");
                need(&mut p, self.density.is_some(), "density");
                if let Some(d) = &self.density {
                    if d.count > 0 && !(d.ratio > 0.0 && d.ratio < 1.0) {
                        p.push(format!("density: ratio must lie in (0, 1) so deltas decrease, got {}", d.ratio));
                    }
                    if !(d.start > 0.0) || d.count == 0 {
                        p.push("density: need a positive start and count >= 1".into());
                    }
                }
            }
            ExperimentKind::Dependence => {
                let d = self.dependence.clone().unwrap_or_default();
                if !(d.lambda > 0.0) {
                    p.push(format!("dependence: lambda must be positive, got {}", d.lambda));
                }
                if !(d.t1 > 0.0) {
                    p.push(format!("dependence: t1 must be positive, got {}", d.t1));
                }
                if d.n_min == 0 || d.n_min > d.n_max {
                    p.push(format!("dependence: need 1 <= n_min <= n_max, got {}..{}", d.n_min, d.n_max));
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}
