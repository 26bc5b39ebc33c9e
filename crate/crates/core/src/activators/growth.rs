use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_activator, Activator, ActivatorClosedForm, ActivatorWindow, LimitTrends, Schedule};
use crate::error::{Error, Result};
use crate::fdl_verifier::quadrature_breaks;
use crate::oscillator::{integrate, IntegratorOptions, OscState};
use crate::quad::{integrate_panels, QuadOptions};
use crate::rate::RateFn;
use crate::speeds::{
    distance_ps1, distance_ps2, grid, membership_report, ClassOrder, CutoffFunction, MembershipReport, PropagationSpeed,
    SpeedClassSpec,
};

/// Lower bound a certificate must clear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Requirement {
    /// `log E_Kov ≥ 2φ + log M_δ`.
    Asymptotic,
    /// `log E_Kov > φ + log(1 + margin)`.
    Universal { margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    pub use_integrator: bool,
    pub tol: f64,
    pub requirement: Requirement,
    /// Upper speed bound in `M_δ`; defaults to the host's upper bound.
    pub mu2: Option<f64>,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self { use_integrator: true, tol: 1e-11, requirement: Requirement::Asymptotic, mu2: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub log_ekov: f64,
    pub margin: f64,
}

/// Measured growth at one frequency against the required lower bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCertificate {
    pub lambda: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub omega_l: f64,
    pub phi: f64,
    /// `∫_a^b ε_λ sin²(γλs) ds` by quadrature.
    pub exponent_integral: f64,
    /// `(ω_λ/4) log(b/a)`.
    pub integral_lower_bound: f64,
    pub log_gain_at_b: f64,
    pub log_m_delta: f64,
    pub required: f64,
    /// Relative closed-form/integrator gap in `E_Kov(b)`.
    pub closed_form_gap: Option<f64>,
    /// Integrated `u(b)` relative to the running scale.
    pub u_at_b: Option<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Smallest measured value over the dense sample, when one was taken.
    pub dense_min: Option<Checkpoint>,
    pub margin: f64,
    pub pass: bool,
}

impl GrowthCertificate {
    pub fn log_ekov_at(&self, t: f64) -> Option<f64> {
        self.checkpoints.iter().find(|c| (c.t - t).abs() <= 1e-12 * t.abs().max(1e-300)).map(|c| c.log_ekov)
    }
}

fn closed_form_gap(c: &PropagationSpeed, cf: &ActivatorClosedForm, tol: f64) -> Result<(f64, f64)> {
    let w = cf.window();
    let traj = integrate(c, OscState::sine(0.0, w.lambda), &[w.b], IntegratorOptions::new(tol))?;
    let st = traj.last();
    let exact = cf.state(w.b)?;
    let gap = (st.log_ekov()? - exact.log_ekov()?).exp_m1().abs();
    if gap > 1e-6 {
        return Err(Error::ClosedFormMismatch { t: w.b, gap });
    }
    Ok((gap, st.u))
}

/// `log M_δ = log min{1, 1/μ2} - ∫_{T1}^{T0} |c*'|/c*`.
fn log_m_delta(host: &PropagationSpeed, mu2: f64) -> f64 {
    let t1 = host.prefix().map_or(host.start_time(), |p| p.t1);
    let t0 = host.horizon();
    let integral = if t1 < t0 {
        let breaks = quadrature_breaks(host, t1, t0);
        let mut f = |s: f64| {
            let j = host.raw_jet(s);
            j.c1.abs() / j.c
        };
        let r = integrate_panels(&mut f, &breaks, QuadOptions::rel(1e-8));
        r.value + r.error
    } else {
        0.0
    };
    (1.0f64).min(1.0 / mu2).ln() - integral
}

fn required(req: Requirement, phi: f64, log_m: f64) -> f64 {
    match req {
        Requirement::Asymptotic => 2.0 * phi + log_m,
        Requirement::Universal { margin } => phi + margin.ln_1p(),
    }
}

fn checkpoint_times(checkpoints: &[f64], b: f64, t0: f64) -> Result<Vec<f64>> {
    let mut ts = checkpoints.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if let Some(&bad) = ts.iter().find(|&&t| !(t > b && t <= t0)) {
        return Err(Error::Domain(format!("checkpoint {bad} outside ({b}, {t0}]")));
    }
    Ok(ts)
}

/// Closed form up to `b`, then integration through the rest of the horizon.
pub fn verify_growth(act: &Activator, checkpoints: &[f64], opts: &GrowthOptions) -> Result<GrowthCertificate> {
    let w = &act.window;
    let c = &act.speed;
    let ts = checkpoint_times(checkpoints, w.b, c.horizon())?;
    let cf = ActivatorClosedForm::new(w, &act.theta);
    let at_b = cf.state(w.b)?;
    let log_gain_at_b = at_b.log_ekov()?;
    let (closed_form_gap, u_at_b) = if opts.use_integrator {
        let (g, u) = closed_form_gap(c, &cf, opts.tol)?;
        (Some(g), Some(u))
    } else {
        (None, None)
    };
    let log_m = log_m_delta(&act.host, opts.mu2.unwrap_or(act.host.upper_bound()));
    let phi = w.phi();
    let req = required(opts.requirement, phi, log_m);
    let traj = if ts.is_empty() {
        Vec::new()
    } else {
        integrate(c, at_b, &ts, IntegratorOptions::new(opts.tol))?.states
    };
    let mut cps = Vec::with_capacity(ts.len());
    for st in &traj {
        let l = st.log_ekov()?;
        cps.push(Checkpoint { t: st.t, log_ekov: l, margin: l - req });
    }
    let margin = cps.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    Ok(GrowthCertificate {
        lambda: w.lambda,
        gamma: w.gamma,
        a: w.a,
        b: w.b,
        omega_l: w.omega_l,
        phi,
        exponent_integral: cf.full_integral(),
        integral_lower_bound: w.integral_lower_bound(),
        log_gain_at_b,
        log_m_delta: log_m,
        required: req,
        closed_form_gap,
        u_at_b,
        pass: cps.iter().all(|c| c.margin > 0.0),
        checkpoints: cps,
        dense_min: None,
        margin,
    })
}

/// Integrates from `t = 0` at the window's frequency through the whole speed `c`,
/// which may carry further windows, and checks `log E_Kov > φ + log(1 + margin)`
/// at the dyadic checkpoints `T0/2^j ≥ from`. The minimum over a dense linear
/// sample of `[from, T0]` is reported alongside.
pub fn activation_certificate(
    c: &PropagationSpeed,
    w: &ActivatorWindow,
    theta: &CutoffFunction,
    from: f64,
    margin: f64,
    tol: f64,
    cross_check: bool,
) -> Result<GrowthCertificate> {
    let t0 = c.horizon();
    if !(from > w.b && from <= t0) {
        return Err(Error::Domain(format!("activation start {from} outside ({}, {t0}]", w.b)));
    }
    let cf = ActivatorClosedForm::new(w, theta);
    let dyadic: Vec<f64> = (0..64).map(|j| t0 / 2f64.powi(j)).take_while(|&t| t >= from * (1.0 - 1e-15)).collect();
    let dense = grid::linear_grid(from, t0, 2048);
    let outs = grid::merge(dense, dyadic.iter().copied().chain([w.b]));
    let traj = integrate(c, OscState::sine(0.0, w.lambda), &outs, IntegratorOptions::new(tol))?;
    let at_b = traj.at(w.b)?;
    let log_gain_at_b = at_b.log_ekov()?;
    let closed_form_gap = if cross_check {
        let gap = (log_gain_at_b - cf.state(w.b)?.log_ekov()?).exp_m1().abs();
        if gap > 1e-6 {
            return Err(Error::ClosedFormMismatch { t: w.b, gap });
        }
        Some(gap)
    } else {
        None
    };
    let phi = w.phi();
    let req = required(Requirement::Universal { margin }, phi, 0.0);
    let mut cps = Vec::new();
    let mut dense_min: Option<Checkpoint> = None;
    for st in traj.states.iter().filter(|s| s.t >= from) {
        let l = st.log_ekov()?;
        let cp = Checkpoint { t: st.t, log_ekov: l, margin: l - req };
        if dense_min.is_none_or(|m| cp.margin < m.margin) {
            dense_min = Some(cp);
        }
        if dyadic.contains(&st.t) {
            cps.push(cp);
        }
    }
    let worst = cps.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    Ok(GrowthCertificate {
        lambda: w.lambda,
        gamma: w.gamma,
        a: w.a,
        b: w.b,
        omega_l: w.omega_l,
        phi,
        exponent_integral: cf.full_integral(),
        integral_lower_bound: w.integral_lower_bound(),
        log_gain_at_b,
        log_m_delta: 0.0,
        required: req,
        closed_form_gap,
        u_at_b: cross_check.then_some(at_b.u),
        checkpoints: cps,
        dense_min,
        margin: worst,
        pass: worst > 0.0,
    })
}

/// Smallest `start·2^k ≤ max` whose window exists and whose exponent integral
/// clears `(ω_λ/4) log(b/a)`.
pub fn growth_threshold(
    schedule: Schedule,
    gamma: f64,
    omega: &RateFn,
    psi: &RateFn,
    theta: &CutoffFunction,
    start: f64,
    max: f64,
) -> Result<f64> {
    let mut lambda = start;
    while lambda <= max {
        if let Ok(w) = schedule.window(lambda, gamma, omega, psi) {
            if ActivatorClosedForm::new(&w, theta).full_integral() >= w.integral_lower_bound() {
                return Ok(lambda);
            }
        }
        lambda *= 2.0;
    }
    Err(Error::SearchExhausted { stage: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub lambda: f64,
    pub feasible: bool,
    pub reason: Option<String>,
    pub window: Option<ActivatorWindow>,
    pub membership: Option<MembershipReport>,
    pub distance: f64,
    pub sup_gap: f64,
    pub sup_gap_bound: f64,
    pub trends: Option<LimitTrends>,
}

impl ConvergenceRow {
    fn infeasible(lambda: f64, reason: String) -> Self {
        Self {
            lambda,
            feasible: false,
            reason: Some(reason),
            window: None,
            membership: None,
            distance: f64::NAN,
            sup_gap: f64::NAN,
            sup_gap_bound: f64::NAN,
            trends: None,
        }
    }

    pub fn pass(&self) -> bool {
        self.membership.as_ref().is_some_and(|m| m.pass)
    }
}

/// Builds `c_λ` along `lambda_grid` and reports membership and distance to `c_star`.
pub fn verify_convergence(
    c_star: &PropagationSpeed,
    spec: &SpeedClassSpec,
    lambda_grid: &[f64],
    schedule: Schedule,
    theta: &CutoffFunction,
    base_grid: &[f64],
) -> Result<Vec<ConvergenceRow>> {
    let prefix = c_star
        .prefix()
        .ok_or_else(|| Error::PrefixMismatch(format!("host {} is not initially constant", c_star.label())))?;
    let gamma = prefix.value.sqrt();
    lambda_grid
        .par_iter()
        .map(|&lambda| {
            let act = match schedule
                .window(lambda, gamma, &spec.omega, &spec.psi)
                .and_then(|w| build_activator(c_star, &w, theta))
            {
                Ok(a) => a,
                Err(e @ (Error::InfeasibleWindow(_) | Error::Domain(_))) => {
                    return Ok(ConvergenceRow::infeasible(lambda, e.to_string()))
                }
                Err(e) => return Err(e),
            };
            let w = act.window;
            let grid = act.speed.resolving_grid(base_grid, 8);
            let report = membership_report(&act.speed, spec, &grid)?;
            let distance = match spec.order {
                ClassOrder::First => distance_ps1(&act.speed, c_star, spec, &grid)?,
                ClassOrder::Second => distance_ps2(&act.speed, c_star, spec, &grid)?,
            };
            let sup_gap = grid
                .iter()
                .filter(|&&t| t >= w.a && t <= w.b)
                .map(|&t| (act.speed.raw_jet(t).c - c_star.raw_jet(t).c).abs())
                .fold(0.0, f64::max);
            Ok(ConvergenceRow {
                lambda,
                feasible: true,
                reason: None,
                window: Some(w),
                membership: Some(report),
                distance,
                sup_gap,
                sup_gap_bound: w.sup_gap_bound(theta),
                trends: Some(LimitTrends::of(&w, &spec.omega, &spec.psi)),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activators::schedule_c1;

    #[test]
    fn degenerate_window_passes_trivially() {
        let theta = CutoffFunction::new();
        let host = PropagationSpeed::constant(1.0, 0.5).unwrap();
        let w = ActivatorWindow::from_counts(1.0, 1e4, 10, 100, 0.0).unwrap();
        let act = build_activator(&host, &w, &theta).unwrap();
        let opts = GrowthOptions { mu2: Some(2.0), ..GrowthOptions::default() };
        let cert = verify_growth(&act, &[0.1, 0.5], &opts).unwrap();
        assert_eq!(cert.phi, 0.0);
        assert!(cert.log_gain_at_b.abs() < 1e-12);
        assert!(cert.pass && (cert.margin - 2f64.ln()).abs() < 1e-9);
        // c* ≡ 1 means E_Kov is conserved after b
        assert!((cert.checkpoints[0].log_ekov - cert.checkpoints[1].log_ekov).abs() < 1e-10);
    }

    #[test]
    fn growth_at_moderate_frequency() {
        let theta = CutoffFunction::new();
        let host = PropagationSpeed::constant(1.0, 0.5).unwrap();
        let w = schedule_c1(1e4, 1.0, &RateFn::Log).unwrap();
        let act = build_activator(&host, &w, &theta).unwrap();
        let cert = verify_growth(&act, &[0.07, 0.125, 0.25, 0.5], &GrowthOptions::default()).unwrap();
        assert!(cert.closed_form_gap.unwrap() < 1e-6);
        assert!(cert.u_at_b.unwrap().abs() < 1e-8);
        assert!(cert.exponent_integral >= cert.integral_lower_bound);
        assert!(cert.log_gain_at_b >= 2.0 * cert.phi);
        assert!(cert.pass);
        let l0 = cert.checkpoints[0].log_ekov;
        assert!(cert.checkpoints.iter().all(|c| (c.log_ekov - l0).abs() < 1e-9));
        assert!(verify_growth(&act, &[w.a], &GrowthOptions::default()).is_err());
    }

    #[test]
    fn activation_certificate_matches_closed_form() {
        let theta = CutoffFunction::new();
        let host = PropagationSpeed::constant(2.0, 0.5).unwrap();
        let w = schedule_c1(2048.0, 2f64.sqrt(), &RateFn::Log).unwrap();
        let act = build_activator(&host, &w, &theta).unwrap();
        let cert = activation_certificate(&act.speed, &w, &theta, 0.25, 0.05, 1e-11, true).unwrap();
        assert!(cert.closed_form_gap.unwrap() < 1e-6);
        assert_eq!(cert.checkpoints.len(), 2);
        assert!(cert.dense_min.unwrap().margin <= cert.checkpoints[0].margin);
    }
}
