//! Frequency components `u'' + λ² c(t) u = 0` and their energies.

mod adiabatic;
mod magnus;

use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::speeds::{PropagationSpeed, SegmentKind};

/// Renormalized solution state: the true solution is `(u, v) * exp(logscale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscState {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub logscale: f64,
    pub lambda: f64,
}

impl OscState {
    pub fn new(t: f64, u: f64, v: f64, lambda: f64) -> Self {
        Self { t, u, v, logscale: 0.0, lambda }
    }

    /// Data `u = 0, u' = 1`.
    pub fn sine(t: f64, lambda: f64) -> Self {
        Self::new(t, 0.0, 1.0, lambda)
    }

    /// Data `u = 1, u' = 0`.
    pub fn cosine(t: f64, lambda: f64) -> Self {
        Self::new(t, 1.0, 0.0, lambda)
    }

    pub fn true_u(&self) -> f64 {
        self.u * self.logscale.exp()
    }

    pub fn true_v(&self) -> f64 {
        self.v * self.logscale.exp()
    }

    /// `log(|u'|² + λ²|u|²)` of the true solution.
    pub fn log_ekov(&self) -> Result<f64> {
        let e = self.v * self.v + self.lambda * self.lambda * self.u * self.u;
        if e == 0.0 {
            return Err(Error::DegenerateState(self.t));
        }
        Ok(e.ln() + 2.0 * self.logscale)
    }

    /// Moves powers of two into `logscale` when `max(|u|, |v|)` leaves `[2^-32, 2^32]`.
    pub fn renormalize(&mut self) -> Result<bool> {
        let m = self.u.abs().max(self.v.abs());
        if m == 0.0 || !m.is_finite() {
            return Err(Error::DegenerateState(self.t));
        }
        if (RENORM_LO..=RENORM_HI).contains(&m) {
            return Ok(false);
        }
        let k = m.log2().floor() as i32;
        let scale = 2f64.powi(-k);
        self.u *= scale;
        self.v *= scale;
        self.logscale += k as f64 * LN_2;
        Ok(true)
    }
}

const RENORM_LO: f64 = 1.0 / 4_294_967_296.0;
const RENORM_HI: f64 = 4_294_967_296.0;

/// Which coefficient the equation carries: `c` itself or `c²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EquationForm {
    Direct,
    #[default]
    Squared,
}

impl EquationForm {
    /// The speed whose values enter the equation as the coefficient.
    pub fn coefficient(self, c: &PropagationSpeed) -> PropagationSpeed {
        match self {
            EquationForm::Direct => c.clone(),
            EquationForm::Squared => c.squared(),
        }
    }
}

/// Exact solution of `u'' + λ²γ² u = 0` over `dt`.
pub fn propagate_constant(state: OscState, gamma: f64, dt: f64) -> Result<OscState> {
    if !(dt >= 0.0) {
        return Err(Error::Domain(format!("propagation step must be nonnegative, got {dt}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if dt == 0.0 {
        return Ok(state);
    }
    let w = gamma * state.lambda;
    let (s, c) = (w * dt).sin_cos();
    Ok(OscState {
        t: state.t + dt,
        u: state.u * c + state.v * s / w,
        v: -state.u * w * s + state.v * c,
        ..state
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub tol: f64,
    pub max_steps: usize,
    /// Allows the adiabatic frame inside slowly modulated windows.
    pub adiabatic: bool,
}

impl IntegratorOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_steps: 500_000_000, adiabatic: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub exact_segments: usize,
    /// Accepted steps taken in the adiabatic frame.
    pub adiabatic: usize,
    pub renormalizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub lambda: f64,
    pub states: Vec<OscState>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn last(&self) -> &OscState {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn at(&self, t: f64) -> Result<&OscState> {
        let i = self.states.partition_point(|s| s.t < t);
        match self.states.get(i) {
            Some(s) if s.t == t => Ok(s),
            _ => Err(Error::MissingTime(t)),
        }
    }

    /// Writes `t,u,v,logscale,log_ekov,log_ehyp,log_etar` rows.
    pub fn export<W: Write>(&self, c: &PropagationSpeed, form: EquationForm, out: &mut W) -> Result<()> {
        writeln!(out, "t,u,v,logscale,log_ekov,log_ehyp,log_etar")?;
        for s in &self.states {
            let e = energies(s, c, form)?;
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.u, s.v, s.logscale, e.log_ekov, e.log_ehyp, e.log_etar
            )?;
        }
        Ok(())
    }
}

/// Integrates `u'' + λ² c(t) u = 0` from `state0` and records the state at every
/// requested output time (sorted, not before `state0.t`).
///
/// `c` is the coefficient as it appears in the equation; pass `c.squared()` for the
/// squared form. Constant segments use the exact rotation, everything else the
/// adaptive Magnus scheme with step ceiling `1 / (10 λ sqrt(sup c))`. Activator windows
/// whose modulation is slower than the solution by [`ADIABATIC_RATIO`] are stepped in
/// the adiabatic frame instead, with steps bounded by the modulation alone.
pub fn integrate(c: &PropagationSpeed, state0: OscState, outputs: &[f64], opts: IntegratorOptions) -> Result<Trajectory> {
    if !(1e-14..=1e-3).contains(&opts.tol) {
        return Err(Error::Domain(format!("tolerance must lie in [1e-14, 1e-3], got {:e}", opts.tol)));
    }
    if !(state0.lambda > 0.0 && state0.lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {}", state0.lambda)));
    }
    if !outputs.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::Domain("output times must be sorted".into()));
    }
    if let Some(&first) = outputs.first() {
        if first < state0.t {
            return Err(Error::Domain(format!("output time {first} precedes the initial time {}", state0.t)));
        }
    }
    let t_end = outputs.last().copied().unwrap_or(state0.t);
    c.check_time(state0.t)?;
    c.check_time(t_end)?;

    let mut run = Runner::new(c, opts, state0);
    let mut states = Vec::with_capacity(outputs.len());
    for &target in outputs {
        run.advance_to(target)?;
        states.push(run.state);
    }
    Ok(Trajectory { lambda: state0.lambda, states, stats: run.stats })
}

/// Final state at `t1`.
pub fn integrate_to(c: &PropagationSpeed, state0: OscState, t1: f64, tol: f64) -> Result<OscState> {
    let traj = integrate(c, state0, &[t1], IntegratorOptions::new(tol))?;
    Ok(*traj.last())
}

/// Solution-to-modulation frequency ratio above which windows use the adiabatic frame.
pub const ADIABATIC_RATIO: f64 = 64.0;

struct Runner<'a> {
    c: &'a PropagationSpeed,
    opts: IntegratorOptions,
    state: OscState,
    h: f64,
    h_cap: f64,
    h_adiabatic: f64,
    stats: IntegrationStats,
    steps: usize,
    c_start: Option<(f64, f64)>,
}

impl<'a> Runner<'a> {
    fn new(c: &'a PropagationSpeed, opts: IntegratorOptions, state: OscState) -> Self {
        let h_cap = 1.0 / (10.0 * state.lambda * c.upper_bound().max(c.lower_bound()).sqrt());
        Self { c, opts, state, h: h_cap, h_cap, h_adiabatic: f64::INFINITY, stats: IntegrationStats::default(), steps: 0, c_start: None }
    }

    fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.state.t < target {
            let t = self.state.t;
            let seg = segment_at(self.c, t);
            let stop = seg.end.min(target);
            match seg.kind {
                SegmentKind::Constant { value } => {
                    self.state = propagate_constant(self.state, value.sqrt(), stop - t)?;
                    self.state.t = stop;
                    self.stats.exact_segments += 1;
                    self.renorm()?;
                }
                SegmentKind::ActivatorWindow { gamma, lambda } => {
                    let cap = self.h_cap.min(std::f64::consts::PI / (60.0 * gamma * lambda));
                    let slow = self.opts.adiabatic
                        && self.state.lambda * self.c.lower_bound().sqrt() >= ADIABATIC_RATIO * gamma * lambda;
                    if slow {
                        self.adiabatic(stop, std::f64::consts::PI / (2.0 * gamma * lambda), cap)?;
                    } else {
                        self.adaptive(stop, cap)?;
                    }
                }
                SegmentKind::Generic => self.adaptive(stop, self.h_cap)?,
            }
        }
        Ok(())
    }

    fn renorm(&mut self) -> Result<()> {
        if self.state.renormalize()? {
            self.stats.renormalizations += 1;
        }
        Ok(())
    }

    fn count_step(&mut self) -> Result<()> {
        self.steps += 1;
        if self.steps > self.opts.max_steps {
            return Err(Error::StepBudget(self.opts.max_steps));
        }
        Ok(())
    }

    /// `magnus_cap` bounds the Magnus steps used where a step would be too short
    /// to hold enough oscillations for collocation.
    fn adiabatic(&mut self, stop: f64, cap: f64, magnus_cap: f64) -> Result<()> {
        let lambda = self.state.lambda;
        let omega_lo = lambda * self.c.lower_bound().sqrt();
        let min_h = 4.0 * adiabatic::DEGREE as f64 / omega_lo;
        let tol = self.opts.tol;
        self.h_adiabatic = self.h_adiabatic.min(cap);
        while self.state.t < stop {
            let t = self.state.t;
            let remaining = stop - t;
            let (h, last) = if self.h_adiabatic >= remaining { (remaining, true) } else { (self.h_adiabatic, false) };
            if h < min_h {
                self.adaptive(stop.min(t + 2.0 * min_h), magnus_cap)?;
                self.h_adiabatic = self.h_adiabatic.max(2.0 * min_h).min(cap);
                continue;
            }
            self.count_step()?;
            let t_next = if last { stop } else { t + h };
            let h = t_next - t;
            let tau = adiabatic::nodes(h);
            let q: Vec<f64> = tau.iter().map(|&x| self.c.raw_jet((t + x).min(stop)).c).collect();
            let omega: Vec<f64> = q.iter().map(|v| lambda * v.sqrt()).collect();
            let kappa = adiabatic::kappa_from_values(h, &q);
            let Some(st) = adiabatic::step(h, &omega, &kappa) else {
                self.stats.rejected += 1;
                self.h_adiabatic = h / 2.0;
                continue;
            };
            let factor = if st.err == 0.0 { 2.0 } else { (0.9 * (tol / st.err).powf(0.25)).clamp(0.2, 2.0) };
            if st.err <= tol {
                let (w0, w1) = (omega[adiabatic::DEGREE].sqrt(), omega[0].sqrt());
                let w = num_complex::Complex64::new(w0 * self.state.u, self.state.v / w0);
                let z = st.alpha * w + st.beta * w.conj();
                let wn = z * num_complex::Complex64::from_polar(1.0, -st.phase);
                self.state.u = wn.re / w1;
                self.state.v = wn.im * w1;
                self.state.t = t_next;
                self.c_start = None;
                self.stats.accepted += 1;
                self.stats.adiabatic += 1;
                self.renorm()?;
                if !last || factor < 1.0 {
                    self.h_adiabatic = (h * factor).min(cap);
                }
            } else {
                self.stats.rejected += 1;
                self.h_adiabatic = h * factor;
            }
        }
        Ok(())
    }

    fn adaptive(&mut self, stop: f64, cap: f64) -> Result<()> {
        let lambda = self.state.lambda;
        let span = (stop - self.state.t).max(f64::MIN_POSITIVE);
        let tol = self.opts.tol;
        self.h = self.h.min(cap);
        while self.state.t < stop {
            let t = self.state.t;
            let remaining = stop - t;
            let (h, last) = if self.h >= remaining { (remaining, true) } else { (self.h, false) };
            if h < 1e-16 * span && !last {
                return Err(Error::StepUnderflow { t, h });
            }
            // step by the increment the clock can represent
            let t_next = if last { stop } else { t + h };
            let h = t_next - t;
            self.count_step()?;
            let coef = magnus::NODES.map(|x| self.c.raw_jet(t + x * h).c);
            let c_end = self.c.raw_jet(t_next).c;
            let c_start = match self.c_start {
                Some((ts, v)) if ts == t => v,
                _ => self.c.raw_jet(t).c,
            };
            let (m6, m4) = magnus::step_matrices(lambda, h, coef);
            let mut err = 0.0f64;
            for i in 0..2 {
                for j in 0..2 {
                    err = err.max((m6[i][j] - m4[i][j]).abs());
                }
            }
            // under-resolved coefficients alias on the Gauss nodes; compare their mean with Simpson's
            let gauss = (5.0 * coef[0] + 8.0 * coef[1] + 5.0 * coef[2]) / 18.0;
            let simpson = (c_start + 4.0 * coef[1] + c_end) / 6.0;
            err = err.max(lambda * h * (gauss - simpson).abs());
            let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
            if err <= tol {
                let y6 = magnus::apply(&m6, [lambda * self.state.u, self.state.v]);
                self.state.u = y6[0] / lambda;
                self.state.v = y6[1];
                self.state.t = t_next;
                self.c_start = Some((self.state.t, c_end));
                self.stats.accepted += 1;
                self.renorm()?;
                // a clipped final step says nothing about the natural size
                if !last || factor < 1.0 {
                    self.h = (h * factor).min(cap);
                }
            } else {
                self.stats.rejected += 1;
                self.h = h * factor;
            }
        }
        Ok(())
    }
}

fn segment_at(c: &PropagationSpeed, t: f64) -> crate::speeds::Segment {
    let segs = c.segments();
    let i = segs.partition_point(|s| s.end <= t);
    segs[i.min(segs.len() - 1)]
}

/// Natural logs of the three energies of the true solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyTriple {
    pub log_ekov: f64,
    pub log_ehyp: f64,
    pub log_etar: f64,
}

/// Energies of `state` for speed `c`. In the squared form the equation coefficient is `c²`.
pub fn energies(state: &OscState, c: &PropagationSpeed, form: EquationForm) -> Result<EnergyTriple> {
    let j = c.jet(state.t)?;
    let (u, v, l) = (state.u, state.v, state.lambda);
    let l2u2 = l * l * u * u;
    let (ehyp, etar) = match form {
        EquationForm::Direct => {
            let rc = j.c.sqrt();
            let w = v + j.c1 * u / (4.0 * j.c);
            (v * v + j.c * l2u2, w * w / rc + rc * l2u2)
        }
        EquationForm::Squared => {
            let w = v + j.c1 * u / (2.0 * j.c);
            (v * v + j.c * j.c * l2u2, w * w / j.c + j.c * l2u2)
        }
    };
    let ekov = v * v + l2u2;
    if ekov == 0.0 {
        return Err(Error::DegenerateState(state.t));
    }
    let shift = 2.0 * state.logscale;
    Ok(EnergyTriple { log_ekov: ekov.ln() + shift, log_ehyp: ehyp.ln() + shift, log_etar: etar.ln() + shift })
}

/// Time derivatives of `E_Hyp` and `E_Tar` along the solution through `state`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRates {
    pub d_ehyp: f64,
    pub d_etar: f64,
}

/// Closed-form energy derivatives; needs `c''`.
pub fn energy_rates(state: &OscState, c: &PropagationSpeed, form: EquationForm) -> Result<EnergyRates> {
    if !c.has_second_derivative() {
        return Err(Error::MissingSecondDerivative(c.label().to_string()));
    }
    let j = c.jet(state.t)?;
    let (u, v, l) = (state.u, state.v, state.lambda);
    let scale = (2.0 * state.logscale).exp();
    let (d_ehyp, d_etar) = match form {
        EquationForm::Direct => {
            let w = v + j.c1 * u / (4.0 * j.c);
            (
                l * l * j.c1 * u * u,
                u * w * (j.c2 - 1.25 * j.c1 * j.c1 / j.c) / (2.0 * j.c * j.c.sqrt()),
            )
        }
        EquationForm::Squared => (
            2.0 * j.c * j.c1 * l * l * u * u,
            (u * u * j.c1 / (2.0 * j.c.powi(3)) + u * v / (j.c * j.c)) * (j.c2 - 1.5 * j.c1 * j.c1 / j.c),
        ),
    };
    Ok(EnergyRates { d_ehyp: d_ehyp * scale, d_etar: d_etar * scale })
}

/// `u1 v2 - u2 v1` of the true solutions at `t`.
pub fn wronskian(a: &Trajectory, b: &Trajectory, t: f64) -> Result<f64> {
    let (s1, s2) = (a.at(t)?, b.at(t)?);
    Ok((s1.u * s2.v - s2.u * s1.v) * (s1.logscale + s2.logscale).exp())
}

/// For each `c_n`, the sup over the output grid of `max(|u_n - u_∞|, |u_n' - u_∞'|)`,
/// all runs started from `u = 0, u' = 1`.
pub fn continuous_dependence_probe(
    c_seq: &[PropagationSpeed],
    c_inf: &PropagationSpeed,
    lambda: f64,
    t1: f64,
    grid_points: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let t0 = c_seq.iter().chain(std::iter::once(c_inf)).map(|c| c.start_time()).fold(0.0, f64::max);
    for c in c_seq {
        if c.horizon() != c_inf.horizon() {
            return Err(Error::HorizonMismatch(c.horizon(), c_inf.horizon()));
        }
    }
    let grid = crate::speeds::grid::linear_grid(t0, t1, grid_points.max(1));
    let opts = IntegratorOptions::new(tol);
    let reference = integrate(c_inf, OscState::sine(t0, lambda), &grid, opts)?;
    let run = |c: &PropagationSpeed| -> Result<f64> {
        let traj = integrate(c, OscState::sine(t0, lambda), &grid, opts)?;
        let mut sup = 0.0f64;
        for (x, y) in traj.states.iter().zip(&reference.states) {
            sup = sup.max((x.true_u() - y.true_u()).abs()).max((x.true_v() - y.true_v()).abs());
        }
        Ok(sup)
    };
    use rayon::prelude::*;
    c_seq.par_iter().map(run).collect()
}
