use serde::{Deserialize, Serialize};

use super::{CutoffFunction, PropagationSpeed};
use crate::error::{Error, Result};
use crate::rate::RateFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassOrder {
    First,
    Second,
}

/// Envelope `(μ1, μ2, T0, ω, ψ, K0)` of a class of speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedClassSpec {
    pub mu1: f64,
    pub mu2: f64,
    pub t0: f64,
    pub omega: RateFn,
    pub psi: RateFn,
    pub k0: f64,
    pub order: ClassOrder,
}

impl SpeedClassSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        self.collect_problems(&mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn collect_problems(&self, problems: &mut Vec<String>) {
        if !(self.mu1 > 0.0 && self.mu1 < self.mu2 && self.mu2.is_finite()) {
            problems.push(format!("class: need 0 < mu1 < mu2, got mu1 = {}, mu2 = {}", self.mu1, self.mu2));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            problems.push(format!("class: T0 must be positive, got {}", self.t0));
        }
        if !(self.k0 > 0.0) {
            problems.push(format!("class: K0 must be positive, got {}", self.k0));
        }
        self.omega.validate("class.omega", problems);
        self.psi.validate("class.psi", problems);
    }

    /// Checks that ω and ψ are nonincreasing on the grid.
    pub fn rates_nonincreasing(&self, grid: &[f64]) -> bool {
        [self.omega, self.psi]
            .iter()
            .all(|f| grid.windows(2).all(|w| f.eval(w[1]) <= f.eval(w[0])))
    }

    /// Smallest `K0` with `ω(t)(1 + ψ(t)) ≤ K0 |log t|` on the grid.
    pub fn minimal_k0(&self, grid: &[f64]) -> f64 {
        grid.iter()
            .map(|&t| self.omega.eval(t) * (1.0 + self.psi.eval(t)) / t.ln().abs())
            .fold(0.0, f64::max)
    }

    /// The finite-loss envelope condition on the grid, requires `T0 < 1`.
    pub fn envelope_holds(&self, grid: &[f64]) -> bool {
        self.t0 < 1.0 && self.minimal_k0(grid) <= self.k0
    }
}

/// Worst-case ratios of a membership test. The suprema are grid maxima.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub pass: bool,
    pub points: usize,
    pub min_c: f64,
    pub min_c_at: f64,
    pub max_c: f64,
    pub max_c_at: f64,
    /// max of `|c'| t / ω(t)`.
    pub d1_ratio: f64,
    pub d1_at: f64,
    /// max of `|c''| t² exp(-ψ) / ω²` when the class is of second order.
    pub d2_ratio: Option<f64>,
    pub d2_at: Option<f64>,
}

impl MembershipReport {
    /// Strict membership: every bound holds with relative room `margin`.
    pub fn passes_with_slack(&self, mu1: f64, mu2: f64, margin: f64) -> bool {
        self.min_c >= mu1 * (1.0 + margin)
            && self.max_c <= mu2 * (1.0 - margin)
            && self.d1_ratio <= 1.0 - margin
            && self.d2_ratio.is_none_or(|r| r <= 1.0 - margin)
    }
}

pub fn membership_report(c: &PropagationSpeed, spec: &SpeedClassSpec, grid: &[f64]) -> Result<MembershipReport> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let second = spec.order == ClassOrder::Second;
    if second && !c.has_second_derivative() {
        return Err(Error::MissingSecondDerivative(c.label().to_string()));
    }
    let mut r = MembershipReport {
        pass: false,
        points: grid.len(),
        min_c: f64::INFINITY,
        min_c_at: grid[0],
        max_c: f64::NEG_INFINITY,
        max_c_at: grid[0],
        d1_ratio: 0.0,
        d1_at: grid[0],
        d2_ratio: second.then_some(0.0),
        d2_at: second.then_some(grid[0]),
    };
    for &t in grid {
        let j = c.jet(t)?;
        if j.c < r.min_c {
            r.min_c = j.c;
            r.min_c_at = t;
        }
        if j.c > r.max_c {
            r.max_c = j.c;
            r.max_c_at = t;
        }
        let w = spec.omega.eval(t);
        let q1 = j.c1.abs() * t / w;
        if q1 > r.d1_ratio {
            r.d1_ratio = q1;
            r.d1_at = t;
        }
        if second {
            let q2 = j.c2.abs() * t * t * (-spec.psi.eval(t)).exp() / (w * w);
            if q2 > r.d2_ratio.unwrap() {
                r.d2_ratio = Some(q2);
                r.d2_at = Some(t);
            }
        }
    }
    r.pass = r.min_c >= spec.mu1
        && r.max_c <= spec.mu2
        && r.d1_ratio <= 1.0
        && r.d2_ratio.is_none_or(|q| q <= 1.0);
    Ok(r)
}

fn check_pair(c1: &PropagationSpeed, c2: &PropagationSpeed, grid: &[f64]) -> Result<()> {
    if c1.horizon() != c2.horizon() {
        return Err(Error::HorizonMismatch(c1.horizon(), c2.horizon()));
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(())
}

fn ps1_parts(c1: &PropagationSpeed, c2: &PropagationSpeed, spec: &SpeedClassSpec, grid: &[f64]) -> Result<(f64, f64)> {
    check_pair(c1, c2, grid)?;
    let (mut s0, mut s1) = (0.0f64, 0.0f64);
    for &t in grid {
        let (a, b) = (c1.jet(t)?, c2.jet(t)?);
        s0 = s0.max((a.c - b.c).abs());
        s1 = s1.max(t * t / spec.omega.eval(t) * (a.c1 - b.c1).abs());
    }
    Ok((s0, s1))
}

/// `sup |c1 - c2| + sup t²/ω(t) |c1' - c2'|` as grid maxima.
pub fn distance_ps1(c1: &PropagationSpeed, c2: &PropagationSpeed, spec: &SpeedClassSpec, grid: &[f64]) -> Result<f64> {
    let (s0, s1) = ps1_parts(c1, c2, spec, grid)?;
    Ok(s0 + s1)
}

/// `distance_ps1 + sup t³ exp(-ψ(t))/ω(t)² |c1'' - c2''|` as grid maxima.
pub fn distance_ps2(c1: &PropagationSpeed, c2: &PropagationSpeed, spec: &SpeedClassSpec, grid: &[f64]) -> Result<f64> {
    for c in [c1, c2] {
        if !c.has_second_derivative() {
            return Err(Error::MissingSecondDerivative(c.label().to_string()));
        }
    }
    let (s0, s1) = ps1_parts(c1, c2, spec, grid)?;
    let mut s2 = 0.0f64;
    for &t in grid {
        let (a, b) = (c1.jet(t)?, c2.jet(t)?);
        let w = spec.omega.eval(t);
        s2 = s2.max(t.powi(3) * (-spec.psi.eval(t)).exp() / (w * w) * (a.c2 - b.c2).abs());
    }
    Ok(s0 + s1 + s2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub delta: f64,
    pub pass: bool,
    pub distance: f64,
    /// `max |c*(t) - c*(δ)|` over `[0, 2δ]` on the grid.
    pub gamma_delta: f64,
    /// `2 K1 Γ_δ / ω(2δ)`, the blend-interval contribution to the derivative ratio.
    pub blend_ratio: f64,
}

/// Smooths `c_star` at each `delta` and reports membership and distance to `c_star`.
pub fn density_check(
    c_star: &PropagationSpeed,
    spec: &SpeedClassSpec,
    deltas: &[f64],
    theta: &CutoffFunction,
    grid: &[f64],
) -> Result<Vec<DensityRow>> {
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let smooth = c_star.smooth_to_initially_constant(delta, theta)?;
        let full = super::grid::merge(grid.to_vec(), blend_points(delta));
        let report = membership_report(&smooth, spec, &full)?;
        let distance = match spec.order {
            ClassOrder::First => distance_ps1(&smooth, c_star, spec, &full)?,
            ClassOrder::Second => distance_ps2(&smooth, c_star, spec, &full)?,
        };
        let base = c_star.raw_jet(delta).c;
        let gamma_delta = full
            .iter()
            .take_while(|&&t| t <= 2.0 * delta)
            .map(|&t| (c_star.raw_jet(t).c - base).abs())
            .fold(0.0, f64::max);
        rows.push(DensityRow {
            delta,
            pass: report.pass,
            distance,
            gamma_delta,
            blend_ratio: 2.0 * theta.k(1) * gamma_delta / spec.omega.eval(2.0 * delta),
        });
    }
    Ok(rows)
}

fn blend_points(delta: f64) -> impl Iterator<Item = f64> {
    (0..=256).map(move |k| delta * (1.0 + k as f64 / 256.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speeds::grid::log_grid;

    fn spec(omega: RateFn) -> SpeedClassSpec {
        SpeedClassSpec {
            mu1: 0.5,
            mu2: 3.5,
            t0: 0.5,
            omega,
            psi: RateFn::constant(1.0),
            k0: 6.0,
            order: ClassOrder::First,
        }
    }

    #[test]
    fn model_zero_in_class() {
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let grid = log_grid(1e-4, 0.5, 3000).unwrap();
        assert!(grid.len() >= 10_000);
        let r = membership_report(&c, &spec(RateFn::constant(2.0)), &grid).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.d1_ratio <= 1.0);
    }

    #[test]
    fn model_zero_fails_tight_omega() {
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let grid = log_grid(1e-4, 0.5, 3000).unwrap();
        let r = membership_report(&c, &spec(RateFn::constant(0.5)), &grid).unwrap();
        assert!(!r.pass);
        assert!(r.d1_ratio > 1.0);
    }

    #[test]
    fn constant_at_lower_bound() {
        let c = PropagationSpeed::constant(0.5, 0.5).unwrap();
        let grid = log_grid(1e-6, 0.5, 100).unwrap();
        let mut s = spec(RateFn::Log);
        s.order = ClassOrder::Second;
        let r = membership_report(&c, &s, &grid).unwrap();
        assert!(r.pass);
        assert_eq!(r.d1_ratio, 0.0);
        assert_eq!(r.d2_ratio, Some(0.0));
    }

    #[test]
    fn membership_errors() {
        let c = PropagationSpeed::constant(1.0, 0.5).unwrap();
        assert_eq!(membership_report(&c, &spec(RateFn::Log), &[]), Err(Error::EmptyGrid));
    }

    #[test]
    fn distance_examples() {
        let s = spec(RateFn::constant(2.0));
        let grid = log_grid(1e-3, 0.5, 200).unwrap();
        let a = PropagationSpeed::constant(2.0, 0.5).unwrap();
        let b = PropagationSpeed::constant(2.5, 0.5).unwrap();
        assert_eq!(distance_ps1(&a, &a, &s, &grid).unwrap(), 0.0);
        assert_eq!(distance_ps1(&a, &b, &s, &grid).unwrap(), 0.5);
        assert_eq!(distance_ps2(&a, &b, &s, &grid).unwrap(), 0.5);
        let other = PropagationSpeed::constant(2.0, 0.4).unwrap();
        assert!(matches!(distance_ps1(&a, &other, &s, &grid), Err(Error::HorizonMismatch(..))));
    }

    #[test]
    fn distance_brute_force_oracle() {
        let s = spec(RateFn::constant(2.0));
        let grid = log_grid(1e-6, 0.5, 20_000).unwrap();
        assert!(grid.len() >= 100_000);
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let two = PropagationSpeed::constant(2.0, 0.5).unwrap();
        let d = distance_ps1(&c, &two, &s, &grid).unwrap();
        let (mut s0, mut s1) = (0.0f64, 0.0f64);
        for &t in &grid {
            let (sn, cs) = (1.0 / t).sin_cos();
            s0 = s0.max((t * sn).abs());
            s1 = s1.max(t * t / 2.0 * (sn - cs / t).abs());
        }
        assert!((d - (s0 + s1)).abs() < 1e-12);
    }
}
