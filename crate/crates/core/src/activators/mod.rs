//! Asymptotic activators: modulated windows on an initially constant host speed,
//! their parameter schedules, growth certificates and the staged universal construction.

mod growth;
mod iterate;
mod schedule;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::OscState;
use crate::quad::gk15;
use crate::rate::RateFn;
use crate::speeds::{clip_segments, CutoffFunction, Jet, Prefix, PropagationSpeed, Segment, SegmentKind, SpeedProfile};

pub use growth::{
    activation_certificate, growth_threshold, verify_convergence, verify_growth, Checkpoint, ConvergenceRow,
    GrowthCertificate, GrowthOptions, Requirement,
};
pub use iterate::{
    iterate_universal, sobolev_divergence_check, IterationConfig, IterationReport, SobolevReport, SobolevRow,
    SobolevSummary, Stage,
};
pub use schedule::{schedule_c1, schedule_c2, schedule_c2_params, LimitTrends, Schedule, ScheduleC2Params};

/// Window `[a, b]` with `γλa/2π = na` and `γλb/2π = nb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivatorWindow {
    pub gamma: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub omega_l: f64,
    pub na: u64,
    pub nb: u64,
}

impl ActivatorWindow {
    /// Builds `a` and `b` from the period counts.
    pub fn from_counts(gamma: f64, lambda: f64, na: u64, nb: u64, omega_l: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite() && lambda > 1.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("need gamma > 0 and lambda > 1, got {gamma}, {lambda}")));
        }
        if na == 0 || nb <= 4 * na {
            return Err(Error::InfeasibleWindow(format!("counts na = {na}, nb = {nb} violate nb > 4 na >= 4")));
        }
        if !(omega_l >= 0.0 && omega_l.is_finite()) {
            return Err(Error::Domain(format!("window amplitude must be nonnegative, got {omega_l}")));
        }
        let unit = 2.0 * PI / (gamma * lambda);
        Ok(Self { gamma, lambda, a: unit * na as f64, b: unit * nb as f64, omega_l, na, nb })
    }

    /// As [`from_counts`](Self::from_counts) with `ω_λ = min(ω(b), log λ)`.
    pub fn with_rate(gamma: f64, lambda: f64, na: u64, nb: u64, omega: &RateFn) -> Result<Self> {
        let mut w = Self::from_counts(gamma, lambda, na, nb, 0.0)?;
        w.omega_l = omega.eval(w.b).min(lambda.ln());
        Ok(w)
    }

    /// `φ(λ) = ω_λ log(b/a) / (32 γ²)`.
    pub fn phi(&self) -> f64 {
        self.omega_l / (32.0 * self.gamma * self.gamma) * (self.nb as f64 / self.na as f64).ln()
    }

    pub fn half_period(&self) -> f64 {
        PI / (self.gamma * self.lambda)
    }

    /// `γλ(t - a)`, which agrees with `γλt` modulo `2π`.
    pub fn phase(&self, t: f64) -> f64 {
        self.gamma * self.lambda * (t - self.a)
    }

    /// `(ω_λ/4) log(b/a)`, the lower bound for the exponent integral.
    pub fn integral_lower_bound(&self) -> f64 {
        self.omega_l / 4.0 * (self.nb as f64 / self.na as f64).ln()
    }

    /// `(ω_λ/2)(log(b/4a) - 1/(4γλa))`, the bound obtained by integrating by parts.
    pub fn integral_by_parts_bound(&self) -> f64 {
        let gla = self.gamma * self.lambda * self.a;
        self.omega_l / 2.0 * ((self.b / (4.0 * self.a)).ln() - 1.0 / (4.0 * gla))
    }

    /// Ceiling for `sup |c_λ - c*|` over the window.
    pub fn sup_gap_bound(&self, theta: &CutoffFunction) -> f64 {
        let g = self.gamma;
        let x = self.omega_l / (self.lambda * self.a);
        let y = 1.0 / (self.lambda * self.a);
        let k1 = epsilon_constants(theta)[0];
        x / (4.0 * g) + k1 / (8.0 * g * g) * x * y + x * x / (64.0 * g.powi(4))
    }
}

/// Constants `K_m` with `|ε^(m)(t)| ≤ K_m ω_λ / t^(m+1)` on the window, `m = 1, 2, 3`.
pub fn epsilon_constants(theta: &CutoffFunction) -> [f64; 3] {
    let norms = [1.0, theta.k(1), theta.k(2), theta.k(3)];
    let mut out = [0.0; 3];
    for m in 1..=3usize {
        out[m - 1] = (0..=m)
            .map(|i| binom(m, i) * norms[i] * 2f64.powi(i as i32) * factorial(m - i))
            .sum();
    }
    out
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `ε_λ` and its first three derivatives at `t`.
pub fn epsilon_jet(w: &ActivatorWindow, theta: &CutoffFunction, t: f64) -> [f64; 4] {
    let (a, b) = (w.a, w.b);
    if t <= a || t >= b {
        return [0.0; 4];
    }
    let inv = 1.0 / t;
    let g = [
        w.omega_l * inv,
        -w.omega_l * inv * inv,
        2.0 * w.omega_l * inv.powi(3),
        -6.0 * w.omega_l * inv.powi(4),
    ];
    let rho = if t < 2.0 * a {
        let d = theta.derivatives((t - a) / a);
        [d[0], d[1] / a, d[2] / (a * a), d[3] / (a * a * a)]
    } else if t <= b / 2.0 {
        return g;
    } else {
        let s = -2.0 / b;
        let d = theta.derivatives(2.0 * (b - t) / b);
        [d[0], d[1] * s, d[2] * s * s, d[3] * s * s * s]
    };
    [
        g[0] * rho[0],
        g[1] * rho[0] + g[0] * rho[1],
        g[2] * rho[0] + 2.0 * g[1] * rho[1] + g[0] * rho[2],
        g[3] * rho[0] + 3.0 * g[2] * rho[1] + 3.0 * g[1] * rho[2] + g[0] * rho[3],
    ]
}

/// `ε_λ^(order)(t)`.
pub fn epsilon_profile(w: &ActivatorWindow, theta: &CutoffFunction, t: f64, order: usize) -> Result<f64> {
    if order > 3 {
        return Err(Error::Domain(format!("derivative order must be at most 3, got {order}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(epsilon_jet(w, theta, t)[order])
}

/// `c_λ = c* - ε sin(2γλt)/(4γλ) - ε' sin²(γλt)/(8γ²λ²) - ε² sin⁴(γλt)/(64γ⁴λ²)`.
#[derive(Debug, Clone)]
pub struct ActivatorProfile {
    host: PropagationSpeed,
    window: ActivatorWindow,
    theta: CutoffFunction,
}

impl SpeedProfile for ActivatorProfile {
    fn jet(&self, t: f64) -> Jet {
        let w = &self.window;
        if t <= w.a || t >= w.b {
            return self.host.raw_jet(t);
        }
        let h = self.host.raw_jet(t);
        let [e0, e1, e2, e3] = epsilon_jet(w, &self.theta, t);
        let g = w.gamma;
        let gl = g * w.lambda;
        let (s, c) = w.phase(t).sin_cos();
        let (s2, c2) = (2.0 * s * c, c * c - s * s);
        let (ss, s3, s4) = (s * s, s * s * s, s * s * s * s);
        let g4l2 = g * g * gl * gl;

        let value = e0 / (4.0 * gl) * s2 + e1 / (8.0 * gl * gl) * ss + e0 * e0 / (64.0 * g4l2) * s4;
        let first = [
            0.5 * e0 * c2,
            e0 * e0 / (16.0 * g * g * gl) * s3 * c,
            3.0 / (8.0 * gl) * e1 * s2,
            e0 * e1 / (32.0 * g4l2) * s4,
            e2 / (8.0 * gl * gl) * ss,
        ];
        let second = [
            -gl * e0 * s2,
            e0 * e0 / (16.0 * g * g) * (3.0 * ss * c * c - s4),
            1.25 * e1 * c2,
            e1 * e1 / (32.0 * g4l2) * s4,
            e0 * e1 / (4.0 * g * g * gl) * s3 * c,
            e2 / (2.0 * gl) * s2,
            e0 * e2 / (32.0 * g4l2) * s4,
            e3 / (8.0 * gl * gl) * ss,
        ];
        Jet {
            c: h.c - value,
            c1: h.c1 - first.iter().sum::<f64>(),
            c2: h.c2 - second.iter().sum::<f64>(),
        }
    }

    fn has_second_derivative(&self) -> bool {
        self.host.has_second_derivative()
    }
}

/// A built activator together with the host speed it modulates.
#[derive(Debug, Clone)]
pub struct Activator {
    pub speed: PropagationSpeed,
    pub host: PropagationSpeed,
    pub window: ActivatorWindow,
    pub theta: CutoffFunction,
}

pub fn build_activator(c_star: &PropagationSpeed, w: &ActivatorWindow, theta: &CutoffFunction) -> Result<Activator> {
    let prefix = c_star
        .prefix()
        .ok_or_else(|| Error::PrefixMismatch(format!("host {} is not initially constant", c_star.label())))?;
    let g2 = w.gamma * w.gamma;
    if (prefix.value - g2).abs() > 1e-12 * g2 {
        return Err(Error::PrefixMismatch(format!(
            "host prefix value {} differs from gamma^2 = {g2}",
            prefix.value
        )));
    }
    if !(w.b < prefix.t1) {
        return Err(Error::InfeasibleWindow(format!(
            "window end {} is not inside the host prefix [0, {}]",
            w.b, prefix.t1
        )));
    }
    let value = prefix.value;
    let mut segments = vec![
        Segment { start: 0.0, end: w.a, kind: SegmentKind::Constant { value } },
        Segment { start: w.a, end: w.b, kind: SegmentKind::ActivatorWindow { gamma: w.gamma, lambda: w.lambda } },
    ];
    segments.extend(clip_segments(c_star.segments(), w.b, c_star.horizon()));
    let pad = w.sup_gap_bound(theta);
    let speed = PropagationSpeed::from_parts(
        format!("activator({}, lambda={})", c_star.label(), w.lambda),
        c_star.horizon(),
        Arc::new(ActivatorProfile { host: c_star.clone(), window: *w, theta: *theta }),
        Some(Prefix { t1: w.a, value }),
        segments,
        ((c_star.lower_bound().min(value - pad)), c_star.upper_bound().max(value + pad)),
    )?;
    Ok(Activator { speed, host: c_star.clone(), window: *w, theta: *theta })
}

/// The exact solution with data `(0, 1)` across the window, through a cumulative
/// table of `J(t) = (1/8γ²) ∫_a^t ε sin²(γλs) ds` on quarter-period panels.
#[derive(Debug, Clone)]
pub struct ActivatorClosedForm {
    window: ActivatorWindow,
    theta: CutoffFunction,
    panel: f64,
    table: Vec<f64>,
}

impl ActivatorClosedForm {
    pub fn new(w: &ActivatorWindow, theta: &CutoffFunction) -> Self {
        let n = 4 * (w.nb - w.na) as usize;
        let panel = (w.b - w.a) / n as f64;
        let scale = 1.0 / (8.0 * w.gamma * w.gamma);
        let mut f = |s: f64| epsilon_jet(w, theta, s)[0] * w.phase(s).sin().powi(2);
        let mut table = Vec::with_capacity(n + 1);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        table.push(0.0);
        for k in 0..n {
            let lo = w.a + k as f64 * panel;
            let hi = if k + 1 == n { w.b } else { w.a + (k + 1) as f64 * panel };
            let x = gk15(&mut f, lo, hi).0 * scale;
            // Neumaier summation
            let t = sum + x;
            comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
            sum = t;
            table.push(sum + comp);
        }
        Self { window: *w, theta: *theta, panel, table }
    }

    pub fn window(&self) -> &ActivatorWindow {
        &self.window
    }

    fn check(&self, t: f64) -> Result<()> {
        let w = &self.window;
        if t < w.a || t > w.b {
            return Err(Error::Domain(format!("time {t} outside the window [{}, {}]", w.a, w.b)));
        }
        Ok(())
    }

    /// `J(t)`.
    pub fn exponent(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let w = &self.window;
        let k = (((t - w.a) / self.panel).floor() as usize).min(self.table.len() - 1);
        let lo = w.a + k as f64 * self.panel;
        if t <= lo || k + 1 == self.table.len() {
            return Ok(self.table[k]);
        }
        let mut f = |s: f64| epsilon_jet(w, &self.theta, s)[0] * w.phase(s).sin().powi(2);
        Ok(self.table[k] + gk15(&mut f, lo, t).0 / (8.0 * w.gamma * w.gamma))
    }

    /// `∫_a^b ε_λ sin²(γλs) ds`.
    pub fn full_integral(&self) -> f64 {
        let g = self.window.gamma;
        self.table[self.table.len() - 1] * 8.0 * g * g
    }

    /// `log u'(b)`.
    pub fn log_uprime_b(&self) -> f64 {
        self.table[self.table.len() - 1]
    }

    /// `u = sin(γλt) e^J / (γλ)`, `u' = e^J (cos(γλt) + sin(γλt) J'(t) / (γλ))`.
    pub fn state(&self, t: f64) -> Result<OscState> {
        let j = self.exponent(t)?;
        let w = &self.window;
        let gl = w.gamma * w.lambda;
        let (s, c) = w.phase(t).sin_cos();
        let jp = epsilon_jet(w, &self.theta, t)[0] * s * s / (8.0 * w.gamma * w.gamma);
        let mut st = OscState::new(t, s / gl, c + s * jp / gl, w.lambda);
        st.logscale = j;
        Ok(st)
    }
}
