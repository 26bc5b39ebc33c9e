use serde::{Deserialize, Serialize};

/// The C-infinity step `θ(σ) = f(σ) / (f(σ) + f(1 - σ))` with `f(σ) = exp(-1/σ)`.
///
/// Written as a logistic of `h(σ) = 1/(1-σ) - 1/σ`, which keeps the derivatives
/// finite in floating point. Within `FLAT` of either end the function is
/// constant to far below machine precision and is returned as exactly 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFunction {
    km: [f64; 3],
}

const FLAT: f64 = 1e-3;

fn logistic(h: f64) -> f64 {
    if h >= 0.0 {
        1.0 / (1.0 + (-h).exp())
    } else {
        let e = h.exp();
        e / (1.0 + e)
    }
}

impl Default for CutoffFunction {
    fn default() -> Self {
        Self::new()
    }
}

impl CutoffFunction {
    pub fn new() -> Self {
        let mut km = [0.0; 3];
        for (m, slot) in km.iter_mut().enumerate() {
            *slot = sup_abs_derivative(m + 1) * (1.0 + 1e-9);
        }
        Self { km }
    }

    /// Sup-norm bounds of θ', θ'', θ'''.
    pub fn km(&self) -> [f64; 3] {
        self.km
    }

    /// `K_m` for `m` in 1..=3.
    pub fn k(&self, m: usize) -> f64 {
        self.km[m - 1]
    }

    pub fn theta(&self, sigma: f64) -> f64 {
        derivatives(sigma)[0]
    }

    /// `[θ, θ', θ'', θ''']` at `sigma`.
    pub fn derivatives(&self, sigma: f64) -> [f64; 4] {
        derivatives(sigma)
    }

    pub fn derivative(&self, sigma: f64, order: usize) -> f64 {
        derivatives(sigma)[order.min(3)]
    }
}

fn derivatives(sigma: f64) -> [f64; 4] {
    if sigma <= FLAT {
        return [0.0; 4];
    }
    if sigma >= 1.0 - FLAT {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let p = 1.0 - sigma;
    let h = 1.0 / p - 1.0 / sigma;
    let s = logistic(h);
    let q = logistic(-h);
    let s1 = s * q;
    let s2 = s1 * (q - s);
    let s3 = s1 * (1.0 - 6.0 * s * q);
    let h1 = 1.0 / (p * p) + 1.0 / (sigma * sigma);
    let h2 = 2.0 / (p * p * p) - 2.0 / (sigma * sigma * sigma);
    let h3 = 6.0 / p.powi(4) + 6.0 / sigma.powi(4);
    [
        s,
        s1 * h1,
        s2 * h1 * h1 + s1 * h2,
        s3 * h1 * h1 * h1 + 3.0 * s2 * h1 * h2 + s1 * h3,
    ]
}

fn sup_abs_derivative(m: usize) -> f64 {
    let f = |x: f64| derivatives(x)[m].abs();
    let n = 20_000;
    let step = 1.0 / n as f64;
    let (mut best_i, mut best) = (0, 0.0);
    for i in 0..=n {
        let v = f(i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement on the bracketing cell pair
    let (mut lo, mut hi) = ((best_i as f64 - 1.0) * step, (best_i as f64 + 1.0) * step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    best.max(f1).max(f2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constraints() {
        let th = CutoffFunction::new();
        assert_eq!(th.theta(-1.0), 0.0);
        assert_eq!(th.theta(0.0), 0.0);
        assert_eq!(th.theta(1.0), 1.0);
        assert_eq!(th.theta(3.0), 1.0);
        assert!((th.theta(0.5) - 0.5).abs() < 1e-15);
        for k in 0..=1000 {
            let v = th.theta(k as f64 / 1000.0);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let th = CutoffFunction::new();
        let h = 1e-5;
        for &s in &[0.1, 0.25, 0.4, 0.5, 0.63, 0.8, 0.93] {
            for m in 0..3 {
                let fd = (th.derivative(s + h, m) - th.derivative(s - h, m)) / (2.0 * h);
                let exact = th.derivative(s, m + 1);
                assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "m={m} s={s} {fd} {exact}");
            }
        }
    }

    #[test]
    fn km_bounds_dominate_samples() {
        let th = CutoffFunction::new();
        let km = th.km();
        assert!((km[0] - 2.0).abs() < 1e-6, "K1 = {}", km[0]);
        for k in 0..=100_000 {
            let s = k as f64 / 100_000.0;
            let d = th.derivatives(s);
            for m in 0..3 {
                assert!(d[m + 1].abs() <= km[m]);
            }
        }
    }

    #[test]
    fn flat_near_ends() {
        let th = CutoffFunction::new();
        let d = th.derivatives(0.0005);
        assert_eq!(d, [0.0; 4]);
        let d = th.derivatives(0.9995);
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0]);
        // the true values at the guard are below 1e-300
        assert!(th.theta(0.0011) < 1e-300);
    }
}
