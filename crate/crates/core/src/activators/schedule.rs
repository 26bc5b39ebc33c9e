use serde::{Deserialize, Serialize};

use super::ActivatorWindow;
use crate::error::{Error, Result};
use crate::rate::RateFn;

/// The two parameter schedules: powers of λ, or the `ψ_λ` construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    C1,
    C2,
}

impl Schedule {
    pub fn window(self, lambda: f64, gamma: f64, omega: &RateFn, psi: &RateFn) -> Result<ActivatorWindow> {
        match self {
            Schedule::C1 => schedule_c1(lambda, gamma, omega),
            Schedule::C2 => schedule_c2(lambda, gamma, omega, psi).map(|(w, _)| w),
        }
    }
}

fn count(x: f64) -> Result<u64> {
    if !(x.is_finite() && (0.0..9.0e15).contains(&x)) {
        return Err(Error::InfeasibleWindow(format!("period count {x} is not representable")));
    }
    Ok(x.floor() as u64)
}

/// `na = ⌊λ^(1/4)⌋`, `nb = ⌊λ^(1/2)⌋`.
pub fn schedule_c1(lambda: f64, gamma: f64, omega: &RateFn) -> Result<ActivatorWindow> {
    ActivatorWindow::with_rate(gamma, lambda, count(lambda.powf(0.25))?, count(lambda.sqrt())?, omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleC2Params {
    pub lambda: f64,
    /// `Γ_λ = ω(λ^(-1/2)) ψ(λ^(-1/2)) / log λ`.
    pub gamma_l: f64,
    /// `ψ_λ = min{log λ / 8, ψ(λ^(-1/2))/4 + log Γ_λ / 4}`.
    pub psi_l: f64,
    pub na: u64,
    pub nb: u64,
    pub a: f64,
    pub b: f64,
    pub omega_l: f64,
    /// `Γ_λ ≤ 1`, so the second branch carries a nonpositive logarithm.
    pub gamma_at_most_one: bool,
    /// `b ≤ λ^(-1/2)`.
    pub b_below_sqrt: bool,
    /// The counts satisfy `nb > 4 na ≥ 4`.
    pub feasible: bool,
    pub trends: LimitTrends,
}

/// Parameters of the second schedule, whether or not the window is feasible yet.
pub fn schedule_c2_params(lambda: f64, gamma: f64, omega: &RateFn, psi: &RateFn) -> Result<ScheduleC2Params> {
    if !(lambda > 1.0 && gamma > 0.0) {
        return Err(Error::Domain(format!("need lambda > 1 and gamma > 0, got {lambda}, {gamma}")));
    }
    let log_l = lambda.ln();
    let root = lambda.sqrt().recip();
    let (w_root, p_root) = (omega.eval(root), psi.eval(root));
    let gamma_l = w_root * p_root / log_l;
    if !(gamma_l > 0.0 && gamma_l.is_finite()) {
        return Err(Error::InfeasibleWindow(format!("Gamma_lambda = {gamma_l} is not finite and positive")));
    }
    let psi_l = (log_l / 8.0).min(p_root / 4.0 + gamma_l.ln() / 4.0);
    let na = count(log_l * psi_l.exp())?;
    let nb = count(log_l * (2.0 * psi_l).exp())?;
    let unit = 2.0 * std::f64::consts::PI / (gamma * lambda);
    let (a, b) = (unit * na as f64, unit * nb as f64);
    let omega_l = omega.eval(b).min(log_l);
    Ok(ScheduleC2Params {
        lambda,
        gamma_l,
        psi_l,
        na,
        nb,
        a,
        b,
        omega_l,
        gamma_at_most_one: gamma_l <= 1.0,
        b_below_sqrt: b <= root,
        feasible: na >= 1 && nb > 4 * na,
        trends: LimitTrends::from_parts(lambda, a, b, omega_l, omega, psi),
    })
}

/// `na = ⌊log λ e^(ψ_λ)⌋`, `nb = ⌊log λ e^(2ψ_λ)⌋`.
pub fn schedule_c2(lambda: f64, gamma: f64, omega: &RateFn, psi: &RateFn) -> Result<(ActivatorWindow, ScheduleC2Params)> {
    let p = schedule_c2_params(lambda, gamma, omega, psi)?;
    let w = ActivatorWindow::with_rate(gamma, lambda, p.na, p.nb, omega)?;
    Ok((w, p))
}

/// The quantities whose limits drive growth and convergence, at one λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitTrends {
    /// `ω_λ / (λa)`, should tend to 0.
    pub omega_over_lambda_a: f64,
    /// `b/a`, should tend to infinity.
    pub b_over_a: f64,
    /// `(ω_λ / log λ) log(b/a)`, should tend to infinity.
    pub rate_over_log: f64,
    /// `λ b e^(-ψ(b)) / ω(b)`, should tend to 0.
    pub second_ratio_1: f64,
    /// `ω_λ e^(-ψ(b)) / ω(b)`, should tend to 0.
    pub second_ratio_2: f64,
}

impl LimitTrends {
    pub fn of(w: &ActivatorWindow, omega: &RateFn, psi: &RateFn) -> Self {
        Self::from_parts(w.lambda, w.a, w.b, w.omega_l, omega, psi)
    }

    pub fn from_parts(lambda: f64, a: f64, b: f64, omega_l: f64, omega: &RateFn, psi: &RateFn) -> Self {
        let (wb, pb) = (omega.eval(b), psi.eval(b));
        Self {
            omega_over_lambda_a: omega_l / (lambda * a),
            b_over_a: b / a,
            rate_over_log: omega_l / lambda.ln() * (b / a).ln(),
            second_ratio_1: lambda * b * (-pb).exp() / wb,
            second_ratio_2: omega_l * (-pb).exp() / wb,
        }
    }
}
