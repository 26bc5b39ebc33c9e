//! Steps in the adiabatic frame for frequencies far above the coefficient's own.
//!
//! With `ω = λ√q` and `w = √ω u + i u'/√ω`, the equation `u'' + ω² u = 0` becomes
//! `w' = -iω w + κ w̄` with `κ = q'/(4q)`. Removing the phase `Φ = ∫ω` leaves
//! `z' = κ e^{2iΦ} z̄`, whose Picard terms are oscillatory integrals evaluated by
//! Levin collocation on Chebyshev points. Step sizes then follow the coefficient
//! and not the solution frequency.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

/// Collocation degree; the error estimate repeats the step on every other node.
pub(crate) const DEGREE: usize = 16;

struct Cheb {
    n: usize,
    /// `x_j = cos(jπ/n)`, so `j = 0` is the right end.
    x: Vec<f64>,
    d: Vec<Vec<f64>>,
    /// `(S f)_j = ∫_{-1}^{x_j} f`.
    s: Vec<Vec<f64>>,
}

impl Cheb {
    fn new(n: usize) -> Self {
        let x: Vec<f64> = (0..=n).map(|j| (j as f64 * PI / n as f64).cos()).collect();
        let cw = |j: usize| (if j == 0 || j == n { 2.0 } else { 1.0 }) * if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut d = vec![vec![0.0; n + 1]; n + 1];
        for i in 0..=n {
            let mut sum = 0.0;
            for j in 0..=n {
                if i != j {
                    d[i][j] = cw(i) / cw(j) / (x[i] - x[j]);
                    sum += d[i][j];
                }
            }
            d[i][i] = -sum;
        }
        let mut s = vec![vec![0.0; n + 1]; n + 1];
        for k in 0..=n {
            // Chebyshev coefficients of the k-th cardinal function
            let mut a = vec![0.0; n + 1];
            for (m, am) in a.iter_mut().enumerate() {
                let half = if k == 0 || k == n { 0.5 } else { 1.0 };
                *am = 2.0 / n as f64 * half * (m as f64 * k as f64 * PI / n as f64).cos();
            }
            a[0] /= 2.0;
            a[n] /= 2.0;
            // antiderivative coefficients, degree n + 1
            let mut b = vec![0.0; n + 2];
            for m in 0..=n {
                let am = a[m];
                match m {
                    0 => b[1] += am,
                    1 => b[2] += am / 4.0,
                    _ => {
                        b[m + 1] += am / (2.0 * (m + 1) as f64);
                        b[m - 1] -= am / (2.0 * (m - 1) as f64);
                    }
                }
            }
            let eval = |xv: f64| {
                let th = xv.clamp(-1.0, 1.0).acos();
                b.iter().enumerate().map(|(m, bm)| bm * (m as f64 * th).cos()).sum::<f64>()
            };
            let left = eval(-1.0);
            for j in 0..=n {
                s[j][k] = eval(x[j]) - left;
            }
        }
        Self { n, x, d, s }
    }

    fn integrate_real(&self, f: &[f64]) -> Vec<f64> {
        self.s.iter().map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    fn integrate(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.s.iter().map(|row| row.iter().zip(f).map(|(a, b)| b * a).sum()).collect()
    }
}

fn cheb(n: usize) -> &'static Cheb {
    static FINE: OnceLock<Cheb> = OnceLock::new();
    static COARSE: OnceLock<Cheb> = OnceLock::new();
    if n == DEGREE {
        FINE.get_or_init(|| Cheb::new(DEGREE))
    } else {
        COARSE.get_or_init(|| Cheb::new(DEGREE / 2))
    }
}

/// LU factors with partial pivoting.
struct Lu {
    n: usize,
    a: Vec<Complex64>,
    piv: Vec<usize>,
}

impl Lu {
    fn new(mut a: Vec<Complex64>, n: usize) -> Option<Self> {
        let mut piv = vec![0; n];
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].norm().total_cmp(&a[j * n + k].norm()))?;
            if a[p * n + k].norm() == 0.0 {
                return None;
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let inv = a[k * n + k].inv();
            for i in k + 1..n {
                let f = a[i * n + k] * inv;
                a[i * n + k] = f;
                for j in k + 1..n {
                    let t = a[k * n + j];
                    a[i * n + j] -= f * t;
                }
            }
        }
        Some(Self { n, a, piv })
    }

    fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut b = rhs.to_vec();
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for k in 0..n {
            for i in k + 1..n {
                let t = b[k];
                b[i] -= self.a[i * n + k] * t;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..n {
                s -= self.a[k * n + j] * b[j];
            }
            b[k] = s / self.a[k * n + k];
        }
        b
    }
}

/// Propagator of one step: `z(h) = alpha w + beta w̄`, then `w(h) = e^{-iΦ} z(h)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub phase: f64,
    pub err: f64,
}

struct Terms {
    phase: f64,
    i1: Complex64,
    i2: Complex64,
    i3: Complex64,
}

/// `omega[j]`, `kappa[j]` at the nodes of `cb` on a step of length `h`.
fn terms(cb: &Cheb, h: f64, omega: &[f64], kappa: &[f64], third: bool) -> Option<Terms> {
    let n = cb.n + 1;
    let half = h / 2.0;
    let phi: Vec<f64> = cb.integrate_real(omega).into_iter().map(|v| v * half).collect();
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = Complex64::new(cb.d[i][j] / half, 0.0);
        }
        a[i * n + i] += Complex64::new(0.0, 2.0 * omega[i]);
    }
    let lu = Lu::new(a, n)?;
    let kap: Vec<Complex64> = kappa.iter().map(|&k| Complex64::new(k, 0.0)).collect();
    let p = lu.solve(&kap);
    let last = cb.n;
    let rot = Complex64::from_polar(1.0, 2.0 * phi[0]);
    let i1 = p[0] * rot - p[last];
    let kp: Vec<Complex64> = p.iter().zip(kappa).map(|(pj, &k)| pj * k).collect();
    let kpc: Vec<Complex64> = kp.iter().map(|v| v.conj()).collect();
    let int_kpc = cb.integrate(&kpc)[0] * half;
    let i2 = int_kpc - p[last].conj() * i1;
    let i3 = if third {
        let q: Vec<Complex64> = cb.integrate(&kp).into_iter().map(|v| v * half).collect();
        let rhs: Vec<Complex64> = q.iter().zip(kappa).map(|(qj, &k)| qj * k).collect();
        let p3 = lu.solve(&rhs);
        p3[0] * rot - p3[last] - p[last] * i2
    } else {
        Complex64::new(0.0, 0.0)
    };
    Some(Terms { phase: phi[0], i1, i2, i3 })
}

/// Node offsets in `[0, h]` for the fine rule, right end first.
pub(crate) fn nodes(h: f64) -> Vec<f64> {
    cheb(DEGREE).x.iter().map(|x| (x + 1.0) * h / 2.0).collect()
}

/// `q'/(4q)` from values of `q` on [`nodes`], by spectral differentiation.
pub(crate) fn kappa_from_values(h: f64, q: &[f64]) -> Vec<f64> {
    let cb = cheb(DEGREE);
    cb.d.iter()
        .zip(q)
        .map(|(row, &qi)| row.iter().zip(q).map(|(d, qj)| d * qj).sum::<f64>() * 2.0 / h / (4.0 * qi))
        .collect()
}

/// One step given `ω` and `κ` on [`nodes`]; `None` when collocation breaks down.
pub(crate) fn step(h: f64, omega: &[f64], kappa: &[f64]) -> Option<Step> {
    let fine = terms(cheb(DEGREE), h, omega, kappa, true)?;
    let om: Vec<f64> = omega.iter().step_by(2).copied().collect();
    let ka: Vec<f64> = kappa.iter().step_by(2).copied().collect();
    let coarse = terms(cheb(DEGREE / 2), h, &om, &ka, false)?;
    let resolution = (fine.phase - coarse.phase).abs() + (fine.i1 - coarse.i1).norm() + (fine.i2 - coarse.i2).norm();
    let truncation = fine.i2.norm() * fine.i2.norm() + fine.i1.norm() * fine.i3.norm();
    // rounding of the accumulated phase
    let floor = 4.0 * f64::EPSILON * fine.phase.abs();
    Some(Step {
        alpha: Complex64::new(1.0, 0.0) + fine.i2,
        beta: fine.i1 + fine.i3,
        phase: fine.phase,
        err: resolution + truncation + floor,
    })
}
