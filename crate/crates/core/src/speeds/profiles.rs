use super::{CutoffFunction, Jet, PropagationSpeed, SpeedProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ConstantProfile {
    pub value: f64,
}

impl SpeedProfile for ConstantProfile {
    fn jet(&self, _t: f64) -> Jet {
        Jet::constant(self.value)
    }
}

/// The model family `c_α`, differentiated in the variable `L = -log t`.
#[derive(Debug, Clone, Copy)]
pub struct ModelAlpha {
    pub alpha: f64,
}

impl SpeedProfile for ModelAlpha {
    fn jet(&self, t: f64) -> Jet {
        let a = self.alpha;
        let l = -t.ln();
        let g = l.powf(1.0 - a);
        let g1 = (1.0 - a) * l.powf(-a);
        let g2 = -a * (1.0 - a) * l.powf(-a - 1.0);

        let e = (-g).exp();
        let e1 = -g1 * e;
        let e2 = (g1 * g1 - g2) * e;

        // P = L^{2a} e^g
        let eg = g.exp();
        let q0 = l.powf(2.0 * a);
        let q1 = if a == 0.0 { 0.0 } else { 2.0 * a * l.powf(2.0 * a - 1.0) };
        let q2 = if a == 0.0 || a == 0.5 { 0.0 } else { 2.0 * a * (2.0 * a - 1.0) * l.powf(2.0 * a - 2.0) };
        let p = q0 * eg;
        let p1 = eg * (q1 + q0 * g1);
        let p2 = eg * (g1 * (q1 + q0 * g1) + q2 + q1 * g1 + q0 * g2);

        let (sp, cp) = p.sin_cos();
        let f = e * sp;
        let f1 = e1 * sp + e * cp * p1;
        let f2 = e2 * sp + 2.0 * e1 * cp * p1 - e * sp * p1 * p1 + e * cp * p2;
        Jet { c: 2.0 + f, c1: -f1 / t, c2: (f2 + f1) / (t * t) }
    }
}

#[derive(Debug, Clone)]
pub struct SquaredProfile {
    pub inner: PropagationSpeed,
}

impl SpeedProfile for SquaredProfile {
    fn jet(&self, t: f64) -> Jet {
        let j = self.inner.raw_jet(t);
        Jet { c: j.c * j.c, c1: 2.0 * j.c * j.c1, c2: 2.0 * (j.c1 * j.c1 + j.c * j.c2) }
    }

    fn has_second_derivative(&self) -> bool {
        self.inner.has_second_derivative()
    }
}

#[derive(Debug, Clone)]
pub struct AffineProfile {
    pub inner: PropagationSpeed,
    pub p: f64,
    pub q: f64,
}

impl SpeedProfile for AffineProfile {
    fn jet(&self, t: f64) -> Jet {
        let j = self.inner.raw_jet(t);
        Jet { c: self.p + self.q * j.c, c1: self.q * j.c1, c2: self.q * j.c2 }
    }

    fn has_second_derivative(&self) -> bool {
        self.inner.has_second_derivative()
    }
}

/// `c(t) + A sin(ωt)`.
#[derive(Debug, Clone)]
pub struct SineShiftProfile {
    pub inner: PropagationSpeed,
    pub amplitude: f64,
    pub frequency: f64,
}

impl SpeedProfile for SineShiftProfile {
    fn jet(&self, t: f64) -> Jet {
        let j = self.inner.raw_jet(t);
        let (s, c) = (self.frequency * t).sin_cos();
        let (a, w) = (self.amplitude, self.frequency);
        Jet { c: j.c + a * s, c1: j.c1 + a * w * c, c2: j.c2 - a * w * w * s }
    }

    fn has_second_derivative(&self) -> bool {
        self.inner.has_second_derivative()
    }
}

#[derive(Debug, Clone)]
pub struct SmoothedProfile {
    star: PropagationSpeed,
    delta: f64,
    base: f64,
    theta: CutoffFunction,
}

impl SmoothedProfile {
    pub fn new(star: PropagationSpeed, delta: f64, theta: CutoffFunction) -> Self {
        let base = star.raw_jet(delta).c;
        Self { star, delta, base, theta }
    }
}

impl SpeedProfile for SmoothedProfile {
    fn jet(&self, t: f64) -> Jet {
        let d = self.delta;
        if t >= 2.0 * d {
            return self.star.raw_jet(t);
        }
        if t <= d {
            return Jet::constant(self.base);
        }
        let s = self.star.raw_jet(t);
        let [th, th1, th2, _] = self.theta.derivatives((t - d) / d);
        let gap = s.c - self.base;
        Jet {
            c: self.base + th * gap,
            c1: th1 / d * gap + th * s.c1,
            c2: th2 / (d * d) * gap + 2.0 * th1 / d * s.c1 + th * s.c2,
        }
    }

    fn has_second_derivative(&self) -> bool {
        self.star.has_second_derivative()
    }
}

/// Hermite interpolation of tabulated samples `(t, c, c1)`, with `c2` linearly
/// interpolated when the table carries it.
#[derive(Debug, Clone)]
pub struct TabulatedProfile {
    t: Vec<f64>,
    c: Vec<f64>,
    c1: Vec<f64>,
    c2: Option<Vec<f64>>,
}

impl TabulatedProfile {
    pub fn new(t: Vec<f64>, c: Vec<f64>, c1: Vec<f64>, c2: Option<Vec<f64>>) -> Result<Self> {
        let n = t.len();
        if n < 2 || c.len() != n || c1.len() != n || c2.as_ref().is_some_and(|v| v.len() != n) {
            return Err(Error::Parse(format!("table needs at least two rows of equal length, got {n}")));
        }
        if !t.windows(2).all(|w| w[0] < w[1]) || t[0] <= 0.0 {
            return Err(Error::Parse("table times must be positive and strictly increasing".into()));
        }
        if c.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Parse("table speeds must be positive and finite".into()));
        }
        Ok(Self { t, c, c1, c2 })
    }

    /// Parses a `t,c,c1[,c2]` table with a header line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty table".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let second = match cols.as_slice() {
            ["t", "c", "c1"] => false,
            ["t", "c", "c1", "c2"] => true,
            _ => return Err(Error::Parse(format!("unexpected header `{header}`"))),
        };
        let (mut t, mut c, mut c1, mut c2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
            if vals.len() != cols.len() {
                return Err(Error::Parse(format!("row {}: expected {} columns", i + 2, cols.len())));
            }
            t.push(vals[0]);
            c.push(vals[1]);
            c1.push(vals[2]);
            if second {
                c2.push(vals[3]);
            }
        }
        Self::new(t, c, c1, second.then_some(c2))
    }

    pub fn horizon(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self.c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.c.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    }
}

impl SpeedProfile for TabulatedProfile {
    fn jet(&self, t: f64) -> Jet {
        let n = self.t.len();
        let i = match self.t.partition_point(|&x| x <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.c[i], self.c[i + 1]);
        let (m0, m1) = (self.c1[i] * h, self.c1[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let c = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
        let d1 = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1) / h;
        let c2 = match &self.c2 {
            Some(v) => v[i] + s * (v[i + 1] - v[i]),
            None => ((12.0 * s - 6.0) * y0 + (6.0 * s - 4.0) * m0 + (6.0 - 12.0 * s) * y1 + (6.0 * s - 2.0) * m1) / (h * h),
        };
        Jet { c, c1: d1, c2 }
    }

    fn has_second_derivative(&self) -> bool {
        self.c2.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(speed: &PropagationSpeed, times: &[f64]) {
        for &t in times {
            let h = 1e-6 * t;
            let j = speed.jet(t).unwrap();
            let jp = speed.jet(t + h).unwrap();
            let jm = speed.jet(t - h).unwrap();
            let d1 = (jp.c - jm.c) / (2.0 * h);
            let d2 = (jp.c1 - jm.c1) / (2.0 * h);
            assert!((d1 - j.c1).abs() <= 1e-6 * j.c1.abs().max(1.0), "{} c1 at {t}: {d1} vs {}", speed.label(), j.c1);
            assert!((d2 - j.c2).abs() <= 1e-5 * j.c2.abs().max(1.0), "{} c2 at {t}: {d2} vs {}", speed.label(), j.c2);
        }
    }

    #[test]
    fn model_family_derivatives() {
        let times = [0.0123, 0.05, 0.1234, 0.3, 0.45];
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let c = PropagationSpeed::model_alpha(alpha, 0.5).unwrap();
            fd_check(&c, &times);
        }
    }

    #[test]
    fn alpha_zero_closed_form_derivatives() {
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let t: f64 = 0.037;
        let j = c.jet(t).unwrap();
        let (s, co) = (1.0 / t).sin_cos();
        assert!((j.c1 - (s - co / t)).abs() < 1e-10);
        assert!((j.c2 - (-s / t.powi(3))).abs() < 1e-7 * (s / t.powi(3)).abs());
    }

    #[test]
    fn composite_derivatives() {
        let theta = CutoffFunction::new();
        let base = PropagationSpeed::model_alpha(0.5, 0.5).unwrap();
        let sm = base.smooth_to_initially_constant(0.05, &theta).unwrap();
        fd_check(&sm, &[0.055, 0.07, 0.08, 0.095]);
        fd_check(&sm.squared(), &[0.055, 0.07, 0.2]);
        fd_check(&base.desaturate(0.05, 1.0, 3.0).unwrap(), &[0.01, 0.2]);
    }

    #[test]
    fn table_round_trip() {
        let c = PropagationSpeed::model_alpha(0.0, 0.5).unwrap();
        let grid = crate::speeds::grid::linear_grid(0.1, 0.5, 4000);
        let mut buf = Vec::new();
        c.export_table(&grid, &mut buf).unwrap();
        let tab = TabulatedProfile::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        let back = PropagationSpeed::tabulated("tab", tab).unwrap();
        for &t in &[0.1, 0.1234, 0.3, 0.5] {
            assert!((back.value(t).unwrap() - c.value(t).unwrap()).abs() < 1e-9);
            assert!((back.d1(t).unwrap() - c.d1(t).unwrap()).abs() < 1e-5);
        }
        assert!(TabulatedProfile::parse("t,x\n1,2\n").is_err());
    }
}
