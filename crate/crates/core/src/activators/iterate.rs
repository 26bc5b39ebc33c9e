use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{activation_certificate, build_activator, ActivatorWindow, GrowthCertificate, Schedule};
use crate::error::{Error, Result};
use crate::speeds::{grid, membership_report, CutoffFunction, MembershipReport, PropagationSpeed, SpeedClassSpec, T_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub spec: SpeedClassSpec,
    pub stages: usize,
    /// Relative slack required in every class inequality and in the activation bound.
    pub margin: f64,
    pub schedule: Schedule,
    /// Constant level of the initial speed; `(μ1 + μ2)/2` when absent.
    pub level: Option<f64>,
    pub tol: f64,
    pub lambda_start: f64,
    pub lambda_max: f64,
    /// Log-grid density of the membership checks.
    pub per_decade: usize,
}

impl IterationConfig {
    pub fn new(spec: SpeedClassSpec, stages: usize) -> Self {
        Self {
            spec,
            stages,
            margin: 0.05,
            schedule: Schedule::C1,
            level: None,
            tol: 1e-10,
            lambda_start: 256.0,
            lambda_max: 2f64.powi(60),
            per_decade: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub index: usize,
    pub lambda: f64,
    pub window: ActivatorWindow,
    pub membership: MembershipReport,
    /// `sup |γ_n - γ_{n-1}|` on the check grid.
    pub max_change: f64,
    /// Candidates tried by the doubling search.
    pub attempts: usize,
    /// Certificates for `λ_1, …, λ_n` under `γ_n`.
    pub certificates: Vec<GrowthCertificate>,
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    /// `γ_0, γ_1, …, γ_n`.
    pub speeds: Vec<PropagationSpeed>,
    pub stages: Vec<Stage>,
}

impl IterationReport {
    pub fn last_speed(&self) -> &PropagationSpeed {
        self.speeds.last().expect("the initial speed is always present")
    }

    /// The final certificates, one per frequency.
    pub fn final_certificates(&self) -> &[GrowthCertificate] {
        self.stages.last().map_or(&[], |s| &s.certificates)
    }
}

fn validate(cfg: &IterationConfig) -> Result<()> {
    let mut problems = Vec::new();
    cfg.spec.collect_problems(&mut problems);
    if !(1..=8).contains(&cfg.stages) {
        problems.push(format!("stages must lie in 1..=8, got {}", cfg.stages));
    }
    if !(cfg.margin > 0.0 && cfg.margin < 0.5) {
        problems.push(format!("margin must lie in (0, 0.5), got {}", cfg.margin));
    }
    if !(cfg.lambda_start > 1.0 && cfg.lambda_start < cfg.lambda_max) {
        problems.push(format!("need 1 < lambda_start < lambda_max, got {} and {}", cfg.lambda_start, cfg.lambda_max));
    }
    if let Some(l) = cfg.level {
        if !(l > cfg.spec.mu1 && l < cfg.spec.mu2) {
            problems.push(format!("level {l} must lie strictly between mu1 and mu2"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

/// Staged construction: each stage modulates the previous speed inside its constant
/// prefix, at the smallest doubled frequency meeting every stage condition.
pub fn iterate_universal(cfg: &IterationConfig, theta: &CutoffFunction) -> Result<IterationReport> {
    validate(cfg)?;
    let spec = &cfg.spec;
    let level = cfg.level.unwrap_or((spec.mu1 + spec.mu2) / 2.0);
    let mut speeds = vec![PropagationSpeed::constant(level, spec.t0)?];
    let mut stages: Vec<Stage> = Vec::new();
    let base = grid::log_grid(T_MIN, spec.t0, cfg.per_decade)?;

    for n in 1..=cfg.stages {
        let host = speeds[n - 1].clone();
        let prefix = host.prefix().ok_or_else(|| Error::PrefixMismatch(format!("stage {n} host has no prefix")))?;
        let gamma = prefix.value.sqrt();
        let bound = 0.5f64.powi(n as i32);
        let mut lambda = cfg.lambda_start.max(n as f64);
        if let Some(prev) = stages.last() {
            lambda = lambda.max(2.0 * prev.lambda);
        }
        let mut attempts = 0;
        let accepted = loop {
            if lambda > cfg.lambda_max {
                return Err(Error::SearchExhausted { stage: n });
            }
            attempts += 1;
            let candidate = lambda;
            lambda *= 2.0;
            let Ok(w) = cfg.schedule.window(candidate, gamma, &spec.omega, &spec.psi) else { continue };
            if w.b > bound || w.b >= prefix.t1 {
                continue;
            }
            let act = build_activator(&host, &w, theta)?;
            let grid = act.speed.resolving_grid(&base, 8);
            let report = membership_report(&act.speed, spec, &grid)?;
            if !report.passes_with_slack(spec.mu1, spec.mu2, cfg.margin) {
                continue;
            }
            let max_change = grid
                .iter()
                .filter(|&&t| t >= w.a && t <= w.b)
                .map(|&t| (act.speed.raw_jet(t).c - host.raw_jet(t).c).abs())
                .fold(0.0, f64::max);
            if max_change > bound {
                continue;
            }
            let windows: Vec<ActivatorWindow> =
                stages.iter().map(|s| s.window).chain(std::iter::once(w)).collect();
            let certificates = windows
                .par_iter()
                .enumerate()
                .map(|(i, wi)| {
                    let from = spec.t0 / 2f64.powi(i as i32 + 1);
                    activation_certificate(&act.speed, wi, theta, from, cfg.margin, cfg.tol, i + 1 == n)
                })
                .collect::<Result<Vec<_>>>()?;
            if certificates.iter().all(|c| c.pass) {
                break (act, report, max_change, certificates);
            }
        };
        let (act, membership, max_change, certificates) = accepted;
        stages.push(Stage {
            index: n,
            lambda: act.window.lambda,
            window: act.window,
            membership,
            max_change,
            attempts,
            certificates,
        });
        speeds.push(act.speed);
    }
    Ok(IterationReport { speeds, stages })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevRow {
    pub beta: f64,
    pub t: f64,
    pub stage: usize,
    pub lambda: f64,
    pub phi: f64,
    /// `log(a_i² E_Kov,i(t) λ_i^(-2β))` with `a_i = exp(-φ_i/4)`.
    pub log_term: f64,
    /// Largest `log_term` over stages up to this one.
    pub running_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevSummary {
    pub beta: f64,
    pub t: f64,
    /// The maximal term over the first `k` stages does not decrease in `k`.
    pub max_nondecreasing: bool,
    /// The terms themselves do not decrease from stage to stage.
    pub terms_nondecreasing: bool,
    /// The available frequencies are too small for the terms to grow at this β.
    pub insufficient_range: bool,
}

/// `log(a_i² λ_i^(2α) λ_i) = -φ_i/2 + (2α + 1) log λ_i`, nonpositive when the data are smooth enough.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataRegularityRow {
    pub alpha: f64,
    pub lambda: f64,
    pub log_value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevReport {
    pub rows: Vec<SobolevRow>,
    pub summaries: Vec<SobolevSummary>,
    pub data_regularity: Vec<DataRegularityRow>,
}

pub fn sobolev_divergence_check(certs: &[GrowthCertificate], betas: &[f64], times: &[f64]) -> SobolevReport {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &beta in betas {
        for &t in times {
            let mut running = f64::NEG_INFINITY;
            let mut terms = Vec::new();
            let mut maxima = Vec::new();
            for (i, c) in certs.iter().enumerate() {
                let Some(l) = c.log_ekov_at(t) else { continue };
                let log_term = -c.phi / 2.0 + l - 2.0 * beta * c.lambda.ln();
                running = running.max(log_term);
                terms.push(log_term);
                maxima.push(running);
                rows.push(SobolevRow { beta, t, stage: i + 1, lambda: c.lambda, phi: c.phi, log_term, running_max: running });
            }
            let terms_nondecreasing = terms.windows(2).all(|w| w[1] >= w[0]);
            summaries.push(SobolevSummary {
                beta,
                t,
                max_nondecreasing: maxima.windows(2).all(|w| w[1] >= w[0]),
                terms_nondecreasing,
                insufficient_range: !terms_nondecreasing,
            });
        }
    }
    let data_regularity = betas
        .iter()
        .flat_map(|&alpha| {
            certs.iter().map(move |c| {
                let log_value = -c.phi / 2.0 + (2.0 * alpha + 1.0) * c.lambda.ln();
                DataRegularityRow { alpha, lambda: c.lambda, log_value, holds: log_value <= 0.0 }
            })
        })
        .collect();
    SobolevReport { rows, summaries, data_regularity }
}
