//! Propagation speeds with two coded derivatives, model families, smoothing and class metrics.

mod class;
mod cutoff;
pub mod grid;
mod profiles;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use class::{
    density_check, distance_ps1, distance_ps2, membership_report, ClassOrder, DensityRow, MembershipReport,
    SpeedClassSpec,
};
pub use cutoff::CutoffFunction;
pub use profiles::{
    AffineProfile, ConstantProfile, ModelAlpha, SineShiftProfile, SmoothedProfile, SquaredProfile, TabulatedProfile,
};

/// Evaluation floor for speeds without a constant prefix.
pub const T_MIN: f64 = 1e-12;

/// Value and first two derivatives of a speed at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Jet {
    pub fn constant(c: f64) -> Self {
        Self { c, c1: 0.0, c2: 0.0 }
    }
}

/// Raw evaluator behind a [`PropagationSpeed`]. Domain checks live in the wrapper.
pub trait SpeedProfile: Send + Sync + fmt::Debug {
    fn jet(&self, t: f64) -> Jet;

    fn has_second_derivative(&self) -> bool {
        true
    }
}

/// Initially-constant segment `c(t) = value` on `[0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prefix {
    pub t1: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    /// `c ≡ value`; the integrator uses the exact rotation here.
    Constant { value: f64 },
    /// Oscillatory activator modulation at frequency `gamma * lambda`.
    ActivatorWindow { gamma: f64, lambda: f64 },
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
}

#[derive(Clone)]
pub struct PropagationSpeed {
    label: String,
    horizon: f64,
    profile: Arc<dyn SpeedProfile>,
    prefix: Option<Prefix>,
    segments: Vec<Segment>,
    lower_bound: f64,
    upper_bound: f64,
}

impl fmt::Debug for PropagationSpeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PropagationSpeed")
            .field("label", &self.label)
            .field("horizon", &self.horizon)
            .field("prefix", &self.prefix)
            .field("segments", &self.segments.len())
            .finish()
    }
}

impl PropagationSpeed {
    /// Assembles a speed from parts. `segments` must partition `[0, horizon]`;
    /// an empty list means one generic segment.
    pub fn from_parts(
        label: impl Into<String>,
        horizon: f64,
        profile: Arc<dyn SpeedProfile>,
        prefix: Option<Prefix>,
        segments: Vec<Segment>,
        bounds: (f64, f64),
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        let segments = if segments.is_empty() {
            vec![Segment { start: 0.0, end: horizon, kind: SegmentKind::Generic }]
        } else {
            segments
        };
        check_partition(&segments, horizon)?;
        if let Some(p) = prefix {
            if !(p.t1 > 0.0 && p.t1 <= horizon) {
                return Err(Error::Domain(format!("prefix end {} outside (0, {horizon}]", p.t1)));
            }
        }
        Ok(Self {
            label: label.into(),
            horizon,
            profile,
            prefix,
            segments: coalesce(segments),
            lower_bound: bounds.0,
            upper_bound: bounds.1,
        })
    }

    /// `c ≡ value` on `[0, horizon]`.
    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Domain(format!("constant speed must be positive, got {value}")));
        }
        Self::from_parts(
            format!("constant({value})"),
            horizon,
            Arc::new(ConstantProfile { value }),
            Some(Prefix { t1: horizon, value }),
            vec![Segment { start: 0.0, end: horizon, kind: SegmentKind::Constant { value } }],
            (value, value),
        )
    }

    /// `c_α(t) = 2 + exp(-|log t|^(1-α)) sin(|log t|^(2α) exp(|log t|^(1-α)))`.
    pub fn model_alpha(alpha: f64, horizon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(horizon > 0.0 && horizon < 1.0) {
            return Err(Error::Domain(format!("model speeds need 0 < T0 < 1, got {horizon}")));
        }
        Self::from_parts(
            format!("c_alpha({alpha})"),
            horizon,
            Arc::new(ModelAlpha { alpha }),
            None,
            Vec::new(),
            (1.0, 3.0),
        )
    }

    /// Cubic Hermite interpolant of a `t,c,c1[,c2]` table.
    pub fn tabulated(label: impl Into<String>, profile: TabulatedProfile) -> Result<Self> {
        let horizon = profile.horizon();
        let (lo, hi) = profile.range();
        Self::from_parts(label, horizon, Arc::new(profile), None, Vec::new(), (lo, hi))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn prefix(&self) -> Option<Prefix> {
        self.prefix
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Conservative upper bound of `c` used for step ceilings.
    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn has_second_derivative(&self) -> bool {
        self.profile.has_second_derivative()
    }

    /// Evaluation without domain checks. Composite profiles call this on their
    /// inner speeds so that delegated values are bit-identical.
    pub fn raw_jet(&self, t: f64) -> Jet {
        match self.prefix {
            Some(p) if t <= p.t1 => Jet::constant(p.value),
            _ => self.profile.jet(t),
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 || t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::OutsideHorizon { t, horizon: self.horizon });
        }
        let covered = matches!(self.prefix, Some(p) if t <= p.t1);
        if !covered && t < T_MIN {
            return Err(Error::BelowFloor { t, floor: T_MIN });
        }
        Ok(())
    }

    pub fn jet(&self, t: f64) -> Result<Jet> {
        self.check_time(t)?;
        Ok(self.raw_jet(t))
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        self.jet(t).map(|j| j.c)
    }

    pub fn d1(&self, t: f64) -> Result<f64> {
        self.jet(t).map(|j| j.c1)
    }

    pub fn d2(&self, t: f64) -> Result<f64> {
        if !self.has_second_derivative() {
            return Err(Error::MissingSecondDerivative(self.label.clone()));
        }
        self.jet(t).map(|j| j.c2)
    }

    /// Earliest time the speed can be evaluated at.
    pub fn start_time(&self) -> f64 {
        if self.prefix.is_some() {
            0.0
        } else {
            T_MIN
        }
    }

    /// The coefficient `c²`, for the squared equation form.
    pub fn squared(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                kind: match s.kind {
                    SegmentKind::Constant { value } => SegmentKind::Constant { value: value * value },
                    k => k,
                },
                ..*s
            })
            .collect();
        Self {
            label: format!("({})^2", self.label),
            horizon: self.horizon,
            profile: Arc::new(SquaredProfile { inner: self.clone() }),
            prefix: self.prefix.map(|p| Prefix { t1: p.t1, value: p.value * p.value }),
            segments,
            lower_bound: self.lower_bound * self.lower_bound,
            upper_bound: self.upper_bound * self.upper_bound,
        }
    }

    /// `p + q c(t)`.
    pub fn affine(&self, p: f64, q: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("affine map needs a positive slope, got {q}")));
        }
        let map = |x: f64| p + q * x;
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                kind: match s.kind {
                    SegmentKind::Constant { value } => SegmentKind::Constant { value: map(value) },
                    k => k,
                },
                ..*s
            })
            .collect();
        Ok(Self {
            label: format!("{p} + {q}*({})", self.label),
            horizon: self.horizon,
            profile: Arc::new(AffineProfile { inner: self.clone(), p, q }),
            prefix: self.prefix.map(|pr| Prefix { t1: pr.t1, value: map(pr.value) }),
            segments,
            lower_bound: map(self.lower_bound),
            upper_bound: map(self.upper_bound),
        })
    }

    /// `c(t) + amplitude·sin(frequency·t)`. Segments become generic.
    pub fn perturb(&self, amplitude: f64, frequency: f64) -> Result<Self> {
        let lower = self.lower_bound - amplitude.abs();
        if !(lower > 0.0) {
            return Err(Error::Domain(format!("perturbation {amplitude} makes the speed nonpositive")));
        }
        Self::from_parts(
            format!("{} + {amplitude}*sin({frequency}t)", self.label),
            self.horizon,
            Arc::new(SineShiftProfile { inner: self.clone(), amplitude, frequency }),
            None,
            Vec::new(),
            (lower, self.upper_bound + amplitude.abs()),
        )
    }

    /// The map `A_ε` sending `[μ1, μ2]` onto `[(1+ε)μ1, (1-ε)μ2]`.
    pub fn desaturate(&self, eps: f64, mu1: f64, mu2: f64) -> Result<Self> {
        if !(mu1 < mu2) || !(eps > 0.0) || (1.0 + eps) * mu1 >= (1.0 - eps) * mu2 {
            return Err(Error::Domain(format!("desaturation needs mu1 < mu2 and small eps > 0, got {eps}")));
        }
        let q = ((1.0 - eps) * mu2 - (1.0 + eps) * mu1) / (mu2 - mu1);
        let p = (1.0 + eps) * mu1 - q * mu1;
        self.affine(p, q)
    }

    /// `c_δ(t) = c*(δ) + θ((t-δ)/δ)(c*(t) - c*(δ))`, constant on `[0, δ]` and equal to `c*` on `[2δ, T0]`.
    pub fn smooth_to_initially_constant(&self, delta: f64, theta: &CutoffFunction) -> Result<Self> {
        if !(delta > 0.0 && delta < self.horizon / 2.0) {
            return Err(Error::Domain(format!("delta must lie in (0, {}), got {delta}", self.horizon / 2.0)));
        }
        if delta < T_MIN && self.prefix.is_none() {
            return Err(Error::BelowFloor { t: delta, floor: T_MIN });
        }
        let base = self.raw_jet(delta).c;
        let mut segments = vec![
            Segment { start: 0.0, end: delta, kind: SegmentKind::Constant { value: base } },
            Segment { start: delta, end: 2.0 * delta, kind: SegmentKind::Generic },
        ];
        segments.extend(clip_segments(&self.segments, 2.0 * delta, self.horizon));
        // a constant input stays constant on the blend interval too
        if let Some(p) = self.prefix {
            if p.t1 >= 2.0 * delta {
                segments[1].kind = SegmentKind::Constant { value: base };
            }
        }
        Ok(Self {
            label: format!("smooth({}, {delta})", self.label),
            horizon: self.horizon,
            profile: Arc::new(SmoothedProfile::new(self.clone(), delta, *theta)),
            prefix: Some(Prefix { t1: delta, value: base }),
            segments,
            lower_bound: self.lower_bound,
            upper_bound: self.upper_bound,
        })
    }

    /// Grid of `base` plus the points needed to resolve activator windows:
    /// `per_half_period` samples in every half-period of the modulation.
    pub fn resolving_grid(&self, base: &[f64], per_half_period: usize) -> Vec<f64> {
        let mut extra = Vec::new();
        for s in &self.segments {
            if let SegmentKind::ActivatorWindow { gamma, lambda } = s.kind {
                let half = std::f64::consts::PI / (gamma * lambda);
                let n = (((s.end - s.start) / half).ceil() as usize).max(1) * per_half_period;
                extra.extend((0..=n).map(|k| s.start + (s.end - s.start) * k as f64 / n as f64));
            }
        }
        grid::merge(base.to_vec(), extra)
    }

    /// Writes `t,c,c1[,c2]` rows at full double precision.
    pub fn export_table<W: Write>(&self, grid: &[f64], out: &mut W) -> Result<()> {
        let second = self.has_second_derivative();
        writeln!(out, "{}", if second { "t,c,c1,c2" } else { "t,c,c1" })?;
        for &t in grid {
            let j = self.jet(t)?;
            if second {
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", t, j.c, j.c1, j.c2)?;
            } else {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", t, j.c, j.c1)?;
            }
        }
        Ok(())
    }
}

fn check_partition(segments: &[Segment], horizon: f64) -> Result<()> {
    let bad = |msg: String| Err(Error::Domain(format!("segments must partition [0, {horizon}]: {msg}")));
    if segments[0].start != 0.0 {
        return bad(format!("first segment starts at {}", segments[0].start));
    }
    for w in segments.windows(2) {
        if w[0].end != w[1].start {
            return bad(format!("gap or overlap at {} / {}", w[0].end, w[1].start));
        }
    }
    for s in segments {
        if !(s.end > s.start) {
            return bad(format!("empty segment [{}, {}]", s.start, s.end));
        }
    }
    let last = segments[segments.len() - 1].end;
    if (last - horizon).abs() > 1e-12 * horizon {
        return bad(format!("last segment ends at {last}"));
    }
    Ok(())
}

fn coalesce(segments: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for s in segments {
        match out.last_mut() {
            Some(prev) if prev.kind == s.kind && prev.end == s.start => prev.end = s.end,
            _ => out.push(s),
        }
    }
    out
}

/// The pieces of `segments` inside `[lo, hi]`.
pub fn clip_segments(segments: &[Segment], lo: f64, hi: f64) -> Vec<Segment> {
    segments
        .iter()
        .filter(|s| s.end > lo && s.start < hi)
        .map(|s| Segment { start: s.start.max(lo), end: s.end.min(hi), kind: s.kind })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_speed_at_zero() {
        let c = PropagationSpeed::constant(2.25, 1.0).unwrap();
        assert_eq!(c.value(0.0).unwrap(), 2.25);
        assert_eq!(c.d1(0.5).unwrap(), 0.0);
        assert!(c.value(1.5).is_err());
    }

    #[test]
    fn floor_without_prefix() {
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        assert!(matches!(c.value(1e-13), Err(Error::BelowFloor { .. })));
        assert!(c.value(1e-12).is_ok());
    }

    #[test]
    fn model_alpha_examples() {
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let pi = std::f64::consts::PI;
        assert!((c.value(1.0 / pi).unwrap() - 2.0).abs() < 1e-15);
        let t = 0.2;
        assert!((c.value(t).unwrap() - (2.0 + t * (1.0 / t).sin())).abs() < 1e-15);
        assert!(PropagationSpeed::model_alpha(1.5, 0.5).is_err());
        assert!(PropagationSpeed::model_alpha(-0.1, 0.5).is_err());
    }

    #[test]
    fn model_alpha_one_is_literal_formula() {
        let c = PropagationSpeed::model_alpha(1.0, 0.5).unwrap();
        let t: f64 = 0.01;
        let l = -t.ln();
        let literal = 2.0 + (-1.0f64).exp() * (std::f64::consts::E * l * l).sin();
        assert!((c.value(t).unwrap() - literal).abs() < 1e-14);
    }

    #[test]
    fn smoothing_examples() {
        let theta = CutoffFunction::new();
        let star = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let s = star.smooth_to_initially_constant(0.05, &theta).unwrap();
        let base = star.value(0.05).unwrap();
        for &t in &[0.0, 1e-9, 0.01, 0.05] {
            assert_eq!(s.value(t).unwrap(), base);
            assert_eq!(s.d1(t).unwrap(), 0.0);
        }
        assert_eq!(s.value(0.2).unwrap(), 2.0 + 0.2 * 5f64.sin());
        for &t in &[0.1, 0.13, 0.3, 0.5] {
            assert_eq!(s.jet(t).unwrap(), star.jet(t).unwrap());
        }
        assert!(star.smooth_to_initially_constant(0.3, &theta).is_err());

        let k = PropagationSpeed::constant(2.0, 0.5).unwrap();
        let ks = k.smooth_to_initially_constant(0.1, &theta).unwrap();
        for i in 0..=50 {
            let t = 0.5 * i as f64 / 50.0;
            assert_eq!(ks.jet(t).unwrap(), Jet::constant(2.0));
        }
    }

    #[test]
    fn desaturate_maps_band() {
        let c = PropagationSpeed::constant(1.0, 0.5).unwrap();
        let d = c.desaturate(0.1, 1.0, 3.0).unwrap();
        assert!((d.value(0.2).unwrap() - 1.1).abs() < 1e-15);
        let c = PropagationSpeed::constant(3.0, 0.5).unwrap();
        let d = c.desaturate(0.1, 1.0, 3.0).unwrap();
        assert!((d.value(0.2).unwrap() - 2.7).abs() < 1e-15);
    }

    #[test]
    fn export_has_full_precision() {
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let mut buf = Vec::new();
        c.export_table(&[0.1, 0.2], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,c,c1,c2"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row[1], c.value(0.1).unwrap());
        assert_eq!(row[2], c.d1(0.1).unwrap());
    }

    #[test]
    fn segments_must_partition() {
        let prof: Arc<dyn SpeedProfile> = Arc::new(ConstantProfile { value: 1.0 });
        let segs = vec![
            Segment { start: 0.0, end: 0.3, kind: SegmentKind::Generic },
            Segment { start: 0.4, end: 1.0, kind: SegmentKind::Generic },
        ];
        assert!(PropagationSpeed::from_parts("x", 1.0, prof, None, segs, (1.0, 1.0)).is_err());
    }
}
