//! Config-driven experiments: validation, orchestration on a worker pool, table emission.

pub mod config;
pub mod emit;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{
    ActivatorConfig, DependenceConfig, ExperimentConfig, ExperimentKind, FdlConfig, GeometricGrid, IterateConfig,
    OutputConfig, OutputFormat, PerturbationKind, SpecConfig, SpeedSelector, Tolerances,
};
pub use emit::{emit, Cell, Table};

use crate::activators::{
    build_activator, iterate_universal, sobolev_divergence_check, verify_convergence, verify_growth, GrowthCertificate,
    GrowthOptions, IterationConfig, Requirement,
};
use crate::error::{Error, Result};
use crate::fdl_verifier::{measure_loss_exponent, LossConfig, LossReport};
use crate::oscillator::continuous_dependence_probe;
use crate::speeds::{density_check, grid, membership_report, CutoffFunction, PropagationSpeed, SpeedClassSpec, T_MIN};

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    AssertionFailed,
    ConfigError,
    ComputationFailed,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::AssertionFailed => 1,
            ExitStatus::ConfigError => 2,
            ExitStatus::ComputationFailed => 3,
        }
    }

    pub fn of_error(err: &Error) -> Self {
        match err {
            Error::Config(_) | Error::Parse(_) => ExitStatus::ConfigError,
            _ => ExitStatus::ComputationFailed,
        }
    }
}

/// Command-line verbs; each accepts a fixed set of experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    CheckSpeed,
    SweepFdl,
    BuildActivator,
    VerifyActivator,
    IterateUniversal,
    ProbeDependence,
    /// Whatever the config's kind asks for.
    Run,
}

impl Verb {
    pub fn accepts(self, kind: ExperimentKind) -> bool {
        use ExperimentKind as K;
        match self {
            Verb::CheckSpeed => matches!(kind, K::Membership | K::Density),
            Verb::SweepFdl => kind == K::FdlSweep,
            Verb::BuildActivator | Verb::VerifyActivator => kind == K::Activator,
            Verb::IterateUniversal => kind == K::Iterate,
            Verb::ProbeDependence => kind == K::Dependence,
            Verb::Run => true,
        }
    }
}

/// Tables of one experiment and its verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// `None` for reporting-only experiments.
    pub passed: Option<bool>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn status(&self) -> ExitStatus {
        match self.passed {
            Some(false) => ExitStatus::AssertionFailed,
            _ => ExitStatus::Success,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Runs the experiment on a pool of `cfg.workers` threads. Relative table paths
/// resolve against `base`.
pub fn execute(cfg: &ExperimentConfig, verb: Verb, base: &Path) -> Result<Outcome> {
    cfg.validate()?;
    if !verb.accepts(cfg.kind) {
        return Err(Error::Config(vec![format!("verb {verb:?} cannot run an experiment of kind {:?}", cfg.kind)]));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Domain(format!("worker pool: {e}")))?;
    pool.install(|| dispatch(cfg, verb, base))
}

/// [`execute`], then writes every table and the resolved config into the output directory.
pub fn run(cfg: &ExperimentConfig, verb: Verb, base: &Path) -> (ExitStatus, Result<(Outcome, Vec<PathBuf>)>) {
    let outcome = match execute(cfg, verb, base) {
        Ok(o) => o,
        Err(e) => return (ExitStatus::of_error(&e), Err(e)),
    };
    let written = cfg.to_toml().and_then(|text| {
        let mut paths = emit(&outcome.tables, &cfg.output.dir, cfg.output.format)?;
        let path = cfg.output.dir.join("config.toml");
        std::fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        paths.push(path);
        Ok(paths)
    });
    match written {
        Ok(paths) => (outcome.status(), Ok((outcome, paths))),
        Err(e) => (ExitStatus::ComputationFailed, Err(e)),
    }
}

fn dispatch(cfg: &ExperimentConfig, verb: Verb, base: &Path) -> Result<Outcome> {
    let c = cfg.speed.build(base)?;
    match cfg.kind {
        ExperimentKind::Membership => membership(cfg, &c),
        ExperimentKind::Density => density(cfg, &c),
        ExperimentKind::FdlSweep => fdl_sweep(cfg, &c),
        ExperimentKind::Activator => activator(cfg, &c, verb),
        ExperimentKind::Iterate => iterate(cfg),
        ExperimentKind::Dependence => dependence(cfg, &c),
    }
}

fn spec_and_grid(cfg: &ExperimentConfig, c: &PropagationSpeed) -> Result<(SpeedClassSpec, Vec<f64>)> {
    let s = cfg.spec.as_ref().ok_or_else(|| Error::Config(vec!["missing [spec] section".into()]))?;
    if s.t0 > c.horizon() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("spec T0 = {} exceeds the speed horizon {}", s.t0, c.horizon())));
    }
    let grid = grid::log_grid(c.start_time().max(T_MIN), s.t0, cfg.per_decade)?;
    Ok((s.to_spec(&c.resolving_grid(&grid, 8)), grid))
}

fn lambdas(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.lambda.map_or_else(Vec::new, |g| g.values())
}

fn membership(cfg: &ExperimentConfig, c: &PropagationSpeed) -> Result<Outcome> {
    let (spec, base) = spec_and_grid(cfg, c)?;
    let report = membership_report(c, &spec, &c.resolving_grid(&base, 8))?;
    let coarse = grid::log_grid(c.start_time().max(T_MIN), spec.t0, 64)?;
    let pass = report.pass;
    Ok(Outcome {
        tables: vec![
            emit::membership_table("membership", &[(c.label().to_owned(), report)]),
            emit::speed_table("speed", c, &coarse)?,
        ],
        passed: Some(pass),
        notes: vec![format!("K0 = {}", spec.k0)],
    })
}

fn density(cfg: &ExperimentConfig, c: &PropagationSpeed) -> Result<Outcome> {
    let (spec, base) = spec_and_grid(cfg, c)?;
    let deltas = cfg.density.map_or_else(Vec::new, |g| g.values());
    let theta = CutoffFunction::new();
    let rows: Vec<_> = deltas
        .par_iter()
        .map(|&d| density_check(c, &spec, &[d], &theta, &base).map(|mut r| r.remove(0)))
        .collect::<Result<_>>()?;
    let pass = rows.iter().all(|r| r.pass);
    Ok(Outcome { tables: vec![emit::density_table(&rows)], passed: Some(pass), notes: Vec::new() })
}

fn fdl_sweep(cfg: &ExperimentConfig, c: &PropagationSpeed) -> Result<Outcome> {
    let (spec, _) = spec_and_grid(cfg, c)?;
    let f = cfg.fdl.clone().unwrap_or_default();
    let loss = LossConfig {
        form: f.form,
        tol: cfg.tolerances.integrator,
        slack: cfg.tolerances.slack,
        slope_ceiling: f.slope_ceiling,
        outputs: f.outputs,
        data: f.data,
    };
    let grid = lambdas(cfg);
    if grid.is_empty() {
        let empty = LossReport { rows: Vec::new(), slope_fit: f64::NAN, bounded: true, pass: true };
        return Ok(Outcome {
            tables: vec![emit::loss_table(&empty), emit::zone_table(&empty)],
            passed: None,
            notes: vec!["empty lambda grid".into()],
        });
    }
    let report = measure_loss_exponent(c, &grid, &spec, &loss)?;
    let notes = report
        .rows
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|m| format!("lambda = {}: {m}", r.lambda)))
        .collect();
    Ok(Outcome {
        tables: vec![emit::loss_table(&report), emit::zone_table(&report)],
        passed: Some(report.pass),
        notes,
    })
}

fn activator(cfg: &ExperimentConfig, host: &PropagationSpeed, verb: Verb) -> Result<Outcome> {
    let (spec, base) = spec_and_grid(cfg, host)?;
    let a = cfg.activator.clone().unwrap_or_default();
    let theta = CutoffFunction::new();
    let rows = verify_convergence(host, &spec, &lambdas(cfg), a.schedule, &theta, &base)?;
    let mut tables = vec![emit::window_table(&rows), emit::convergence_table(&rows)];
    let mut notes = Vec::new();
    let feasible: Vec<_> = rows.iter().filter_map(|r| r.window).collect();
    if verb != Verb::VerifyActivator {
        let coarse = grid::log_grid(host.start_time().max(T_MIN), spec.t0, 64)?;
        for (k, w) in feasible.iter().enumerate() {
            let act = build_activator(host, w, &theta)?;
            tables.push(emit::speed_table(&format!("activator_{k}"), &act.speed, &act.speed.resolving_grid(&coarse, 4))?);
        }
    }
    if verb != Verb::BuildActivator {
        let opts = GrowthOptions {
            use_integrator: a.use_integrator,
            tol: cfg.tolerances.integrator,
            requirement: Requirement::Asymptotic,
            mu2: Some(spec.mu2),
        };
        let results: Vec<(f64, Result<GrowthCertificate>)> = feasible
            .par_iter()
            .map(|w| {
                let cps: Vec<f64> = a.checkpoints.iter().copied().filter(|&t| t > w.b && t <= spec.t0).collect();
                (w.lambda, build_activator(host, w, &theta).and_then(|act| verify_growth(&act, &cps, &opts)))
            })
            .collect();
        let mut certs = Vec::new();
        let mut failures = Table::new("failures", &["lambda", "message"]);
        for (lambda, r) in results {
            match r {
                Ok(c) => certs.push(c),
                Err(e) => {
                    notes.push(format!("lambda = {lambda}: {e}"));
                    failures.push(vec![lambda.into(), e.to_string().into()]);
                }
            }
        }
        let (main, cps) = emit::certificate_tables(&certs);
        tables.extend([main, cps, failures]);
    }
    Ok(Outcome { tables, passed: None, notes })
}

fn iterate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = cfg.spec.as_ref().ok_or_else(|| Error::Config(vec!["missing [spec] section".into()]))?;
    let it = cfg.iterate.clone().unwrap_or_default();
    let grid = grid::log_grid(T_MIN, s.t0, cfg.per_decade)?;
    let spec = s.to_spec(&grid);
    let icfg = IterationConfig {
        spec,
        stages: it.stages,
        margin: it.margin,
        schedule: it.schedule,
        level: it.level,
        tol: cfg.tolerances.integrator,
        lambda_start: it.lambda_start,
        lambda_max: it.lambda_max,
        per_decade: cfg.per_decade,
    };
    let report = match iterate_universal(&icfg, &CutoffFunction::new()) {
        Ok(r) => r,
        Err(e @ Error::SearchExhausted { .. }) => {
            return Ok(Outcome {
                tables: vec![emit::stage_table(&[])],
                passed: Some(false),
                notes: vec![format!("stage unreachable at margin {}: {e}", it.margin)],
            })
        }
        Err(e) => return Err(e),
    };
    let finals = report.final_certificates();
    let (main, cps) = emit::certificate_tables(finals);
    let times = [spec.t0, spec.t0 / 2.0];
    let sob = sobolev_divergence_check(finals, &it.betas, &times);
    let mut tables = vec![emit::stage_table(&report.stages), emit::stage_certificate_table(&report.stages), main, cps];
    tables.extend(sob.summaries.iter().any(|_| true).then(|| emit::sobolev_tables(&sob)).into_iter().flatten());
    let pass = report.stages.len() == it.stages && finals.iter().all(|c| c.pass);
    let notes = sob
        .summaries
        .iter()
        .filter(|s| s.insufficient_range)
        .map(|s| format!("beta = {}, t = {}: insufficient frequency range", s.beta, s.t))
        .collect();
    Ok(Outcome { tables, passed: Some(pass), notes })
}

fn dependence(cfg: &ExperimentConfig, c: &PropagationSpeed) -> Result<Outcome> {
    let d = cfg.dependence.clone().unwrap_or_default();
    let ns: Vec<u32> = (d.n_min..=d.n_max).collect();
    let seq = ns
        .iter()
        .map(|&n| {
            let amp = d.amplitude * 0.5f64.powi(n as i32);
            match d.perturbation {
                PerturbationKind::Sine => c.perturb(amp, f64::from(n)),
                PerturbationKind::Shift => c.affine(amp, 1.0),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let dev = continuous_dependence_probe(&seq, c, d.lambda, d.t1, d.grid_points, cfg.tolerances.integrator)?;
    let pass = dev.windows(2).all(|w| w[1] <= d.max_ratio * w[0]);
    Ok(Outcome { tables: vec![emit::dependence_table(&ns, &dev)], passed: Some(pass), notes: Vec::new() })
}
