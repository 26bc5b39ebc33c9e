//! Three-zone finite-loss analysis: split times, zone ceilings and measured exponents.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::{energies, integrate, EquationForm, IntegratorOptions, OscState};
use crate::quad::{geometric_breaks, integrate_panels, QuadOptions};
use crate::speeds::{grid, PropagationSpeed, SegmentKind, SpeedClassSpec, T_MIN};

/// `a = log λ / λ`, `b = a exp(ψ(1/λ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitTimes {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    /// `1/λ < a < b < T0`.
    pub ordered: bool,
}

pub fn split_times(lambda: f64, spec: &SpeedClassSpec) -> SplitTimes {
    let a = lambda.ln() / lambda;
    let b = a * spec.psi.eval(1.0 / lambda).exp();
    SplitTimes { lambda, a, b, ordered: 1.0 / lambda < a && a < b && b < spec.t0 }
}

/// A quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Per-zone inputs of the analytic chain. Quadratures are taken in the root speed
/// `r` (the speed itself for the squared form, `sqrt(c)` for the direct form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneIngredients {
    pub form: EquationForm,
    /// `λ (1 + sup C) a` with `C` the equation coefficient.
    pub kov_exponent: f64,
    /// `∫ |C'| / C` over `[a, b]`.
    pub hyp_integral: Quadrature,
    /// `(f ω(a) / μ1) log(b/a)`, `f = 2` for the squared form.
    pub hyp_chain_ceiling: f64,
    /// `(f K0 / μ1) log λ`.
    pub hyp_analytic_ceiling: f64,
    /// grid sup over `[b, T0]` of `|r'| / λ`.
    pub tarama_c1_sup: f64,
    /// `(1/λ) ∫ (|r''| + r'²)` over `[b, T0]`.
    pub tarama_c2_integral: Quadrature,
    /// `2 K0² log λ`.
    pub tarama_analytic_ceiling: f64,
}

/// Equivalence constants of the Tarama zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaramaConstants {
    pub k: f64,
    pub eps1: f64,
    pub eps0: f64,
    pub m2: f64,
    pub m3: f64,
}

impl TaramaConstants {
    /// Constants for a root speed in `[r1, r2]` with `|r'| ≤ k λ`.
    pub fn new(r1: f64, r2: f64, k: f64) -> Self {
        let q = k * k / (4.0 * r1.powi(4));
        let eps1 = 2.0 / ((2.0 + q) + (q * q + 4.0 * q).sqrt());
        let eps0 = eps1 * r1.min(1.0).powi(2) / r2;
        let m2 = 1.0 / r1 + r2 + k * k / (4.0 * r1.powi(3)) + k / (2.0 * r1 * r1);
        let m3 = (k / (2.0 * r1.powi(3)) + 1.0 / (2.0 * r1 * r1)) / eps0 * (3.0 / (2.0 * r1)).max(1.0);
        Self { k, eps1, eps0, m2, m3 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    coef_lo: f64,
    coef_hi: f64,
    root_lo: f64,
    root_hi: f64,
    factor: f64,
}

fn bounds(spec: &SpeedClassSpec, form: EquationForm) -> Bounds {
    match form {
        EquationForm::Squared => Bounds {
            coef_lo: spec.mu1 * spec.mu1,
            coef_hi: spec.mu2 * spec.mu2,
            root_lo: spec.mu1,
            root_hi: spec.mu2,
            factor: 2.0,
        },
        EquationForm::Direct => Bounds {
            coef_lo: spec.mu1,
            coef_hi: spec.mu2,
            root_lo: spec.mu1.sqrt(),
            root_hi: spec.mu2.sqrt(),
            factor: 1.0,
        },
    }
}

/// Root speed jet `(r, r', r'')`.
fn root_jet(c: &PropagationSpeed, t: f64, form: EquationForm) -> (f64, f64, f64) {
    let j = c.raw_jet(t);
    match form {
        EquationForm::Squared => (j.c, j.c1, j.c2),
        EquationForm::Direct => {
            let r = j.c.sqrt();
            (r, j.c1 / (2.0 * r), j.c2 / (2.0 * r) - j.c1 * j.c1 / (4.0 * j.c * r))
        }
    }
}

/// Break points for quadrature over `[lo, hi]`: geometric panels, segment ends and
/// half-periods of any activator window.
pub fn quadrature_breaks(c: &PropagationSpeed, lo: f64, hi: f64) -> Vec<f64> {
    let mut extra: Vec<f64> = Vec::new();
    for s in c.segments() {
        extra.push(s.start);
        extra.push(s.end);
        if let SegmentKind::ActivatorWindow { gamma, lambda } = s.kind {
            let half = std::f64::consts::PI / (gamma * lambda);
            let (l, h) = (s.start.max(lo), s.end.min(hi));
            if h > l && (h - l) / half < 2e6 {
                let n = ((h - l) / half).ceil() as usize;
                extra.extend((0..n).map(|k| l + k as f64 * half));
            }
        }
    }
    geometric_breaks(lo.max(T_MIN), hi, 64, &extra)
}

fn quad(c: &PropagationSpeed, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Quadrature {
    if hi <= lo {
        return Quadrature { value: 0.0, error: 0.0, converged: true };
    }
    let breaks = quadrature_breaks(c, lo, hi);
    let opts = QuadOptions { rel_tol: 1e-6, abs_tol: 1e-14, max_intervals: 400_000 };
    let mut g = f;
    let r = integrate_panels(&mut g, &breaks, opts);
    Quadrature { value: r.value, error: r.error, converged: r.converged }
}

pub fn zone_bound_ingredients(
    c: &PropagationSpeed,
    st: &SplitTimes,
    spec: &SpeedClassSpec,
    form: EquationForm,
) -> Result<ZoneIngredients> {
    let bd = bounds(spec, form);
    let lambda = st.lambda;
    let t0 = spec.t0.min(c.horizon());
    let a = st.a.min(t0);
    let b = st.b.clamp(a, t0);
    c.check_time(a)?;
    let hyp_integral = quad(c, a, b, |s| {
        let (r, r1, _) = root_jet(c, s, form);
        bd.factor * r1.abs() / r
    });
    let grid = c.resolving_grid(&grid::log_grid(b.max(T_MIN), t0.max(b * (1.0 + 1e-12)), 4096)?, 16);
    let tarama_c1_sup = grid
        .iter()
        .filter(|&&t| t >= b && t <= t0)
        .map(|&t| root_jet(c, t, form).1.abs() / lambda)
        .fold(0.0, f64::max);
    let mut tarama_c2_integral = quad(c, b, t0, |s| {
        let (_, r1, r2) = root_jet(c, s, form);
        r2.abs() + r1 * r1
    });
    tarama_c2_integral.value /= lambda;
    tarama_c2_integral.error /= lambda;
    let log_ratio = if b > a { (b / a).ln() } else { 0.0 };
    Ok(ZoneIngredients {
        form,
        kov_exponent: lambda * (1.0 + bd.coef_hi) * a,
        hyp_integral,
        hyp_chain_ceiling: bd.factor * spec.omega.eval(a) / spec.mu1 * log_ratio,
        hyp_analytic_ceiling: bd.factor * spec.k0 / spec.mu1 * lambda.ln(),
        tarama_c1_sup,
        tarama_c2_integral,
        tarama_analytic_ceiling: 2.0 * spec.k0 * spec.k0 * lambda.ln(),
    })
}

/// Which canonical initial data enter the worst case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSets {
    /// `(0, 1)` and `(1, 0)`.
    #[default]
    Both,
    /// `(0, 1)` only.
    Sine,
    /// `(1, 0)` only.
    Cosine,
}

impl DataSets {
    pub fn states(self, t: f64, lambda: f64) -> Vec<OscState> {
        match self {
            DataSets::Both => vec![OscState::sine(t, lambda), OscState::cosine(t, lambda)],
            DataSets::Sine => vec![OscState::sine(t, lambda)],
            DataSets::Cosine => vec![OscState::cosine(t, lambda)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub form: EquationForm,
    pub tol: f64,
    /// Relative room allowed when checking that `δ̂` does not increase.
    pub slack: f64,
    pub slope_ceiling: Option<f64>,
    pub outputs: usize,
    pub data: DataSets,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { form: EquationForm::Squared, tol: 1e-10, slack: 0.05, slope_ceiling: None, outputs: 2048, data: DataSets::Both }
    }
}

/// Measured and analytic log-gains `log(E_Kov(t)/E_Kov(0))` at the zone ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneChain {
    pub split: SplitTimes,
    pub ingredients: ZoneIngredients,
    pub constants: TaramaConstants,
    pub two_zone: bool,
    pub log_band: f64,
    /// Cumulative ceilings at `a`, `b`, `T0`.
    pub ceilings: [f64; 3],
    /// Worst measured gain over `[0, a]`, `(a, b]`, `(b, T0]`.
    pub measured: [f64; 3],
    pub margins: [f64; 3],
    pub sup_log_gain: f64,
    pub pass: bool,
}

fn output_times(start: f64, a: f64, b: f64, t0: f64, n: usize) -> Vec<f64> {
    let half = (n / 2).max(2);
    let lo = start.max(T_MIN);
    let mut out = Vec::with_capacity(n + 4);
    if a > lo {
        let r = (a / lo).ln();
        out.extend((0..half).map(|k| lo * (r * k as f64 / half as f64).exp()));
    }
    let from = a.max(lo);
    out.extend((0..=half).map(|k| from + (t0 - from) * k as f64 / half as f64));
    out.extend([start, a, b, t0].into_iter().filter(|&t| t >= start && t <= t0));
    grid::merge(out, [])
}

/// Integrates both canonical data sets at one frequency and checks every zone ceiling.
pub fn verify_zone_chain(c: &PropagationSpeed, lambda: f64, spec: &SpeedClassSpec, cfg: &LossConfig) -> Result<ZoneChain> {
    if !(lambda > std::f64::consts::E) {
        return Err(Error::Domain(format!("frequency must exceed e, got {lambda}")));
    }
    let split = split_times(lambda, spec);
    let t0 = spec.t0.min(c.horizon());
    let ingredients = zone_bound_ingredients(c, &split, spec, cfg.form)?;
    let bd = bounds(spec, cfg.form);
    let log_band = (bd.coef_hi.max(1.0) / bd.coef_lo.min(1.0)).ln();
    let k = spec.k0.max(ingredients.tarama_c1_sup * (1.0 + 1e-9));
    let constants = TaramaConstants::new(bd.root_lo, bd.root_hi, k);

    let two_zone = !split.ordered;
    let a = split.a.min(t0);
    let b = if two_zone { t0 } else { split.b };
    let kov = lambda * (1.0 + bd.coef_hi) * a;
    let hyp = if two_zone {
        let hyp_full = quad(c, a, t0, |s| {
            let (r, r1, _) = root_jet(c, s, cfg.form);
            bd.factor * r1.abs() / r
        });
        hyp_full.value + hyp_full.error
    } else {
        ingredients.hyp_integral.value + ingredients.hyp_integral.error
    };
    let ceil_b = kov + if a < t0 { log_band + hyp } else { 0.0 };
    let tar = (constants.m2 / constants.eps0).ln()
        + constants.m3 * (ingredients.tarama_c2_integral.value + ingredients.tarama_c2_integral.error);
    let ceil_t0 = if two_zone { ceil_b } else { ceil_b + tar };
    let ceilings = [kov, ceil_b, ceil_t0];

    let start = c.start_time();
    let outs = output_times(start, a, b, t0, cfg.outputs);
    let coef = cfg.form.coefficient(c);
    let opts = IntegratorOptions::new(cfg.tol);
    let mut measured = [f64::NEG_INFINITY; 3];
    for s0 in cfg.data.states(start, lambda) {
        let e0 = s0.log_ekov()?;
        let traj = integrate(&coef, s0, &outs, opts)?;
        for s in &traj.states {
            let gain = energies(s, c, cfg.form)?.log_ekov - e0;
            let zone = if s.t <= a { 0 } else if s.t <= b { 1 } else { 2 };
            measured[zone] = measured[zone].max(gain);
        }
    }
    // an empty zone inherits the previous ceiling's role and cannot fail
    let mut margins = [0.0; 3];
    for i in 0..3 {
        margins[i] = if measured[i].is_finite() { ceilings[i] - measured[i] } else { f64::INFINITY };
    }
    let sup_log_gain = measured.iter().copied().fold(0.0, f64::max);
    Ok(ZoneChain {
        split,
        ingredients,
        constants,
        two_zone,
        log_band,
        ceilings,
        measured,
        margins,
        sup_log_gain,
        pass: margins.iter().all(|&m| m >= 0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub sup_log_gain: f64,
    pub delta_hat: f64,
    pub kov_exp: f64,
    pub hyp_ceiling: f64,
    pub tar_ceiling: f64,
    pub pass: bool,
    pub chain: Option<ZoneChain>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub rows: Vec<LossRow>,
    pub slope_fit: f64,
    /// `δ̂` does not increase by more than the slack over the top half of the grid.
    pub bounded: bool,
    pub pass: bool,
}

impl LossReport {
    pub fn delta_hat(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.delta_hat).collect()
    }
}

/// Runs [`verify_zone_chain`] on every frequency (in parallel) and fits the growth.
pub fn measure_loss_exponent(
    c: &PropagationSpeed,
    lambda_grid: &[f64],
    spec: &SpeedClassSpec,
    cfg: &LossConfig,
) -> Result<LossReport> {
    if lambda_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !lambda_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("frequency grid must be strictly increasing".into()));
    }
    let rows: Vec<LossRow> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let split = split_times(lambda, spec);
            match verify_zone_chain(c, lambda, spec, cfg) {
                Ok(ch) => LossRow {
                    lambda,
                    a: split.a,
                    b: split.b,
                    sup_log_gain: ch.sup_log_gain,
                    delta_hat: ch.sup_log_gain / lambda.ln(),
                    kov_exp: ch.ceilings[0],
                    hyp_ceiling: ch.ceilings[1] - ch.ceilings[0],
                    tar_ceiling: ch.ceilings[2] - ch.ceilings[1],
                    pass: ch.pass,
                    chain: Some(ch),
                    failure: None,
                },
                Err(e) => LossRow {
                    lambda,
                    a: split.a,
                    b: split.b,
                    sup_log_gain: f64::NAN,
                    delta_hat: f64::NAN,
                    kov_exp: f64::NAN,
                    hyp_ceiling: f64::NAN,
                    tar_ceiling: f64::NAN,
                    pass: false,
                    chain: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();

    let done: Vec<&LossRow> = rows.iter().filter(|r| r.failure.is_none()).collect();
    let slope_fit = slope(&done.iter().map(|r| (r.lambda.ln(), r.sup_log_gain)).collect::<Vec<_>>());
    let top = &done[done.len() / 2..];
    let bounded = top.windows(2).all(|w| w[1].delta_hat <= w[0].delta_hat * (1.0 + cfg.slack));
    let by_slope = cfg.slope_ceiling.is_some_and(|s| slope_fit <= s);
    let pass = done.len() == rows.len() && (bounded || by_slope);
    Ok(LossReport { rows, slope_fit, bounded, pass })
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
