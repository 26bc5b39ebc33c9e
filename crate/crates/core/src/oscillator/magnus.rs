//! Sixth-order Magnus stepping on three Gauss nodes with an embedded fourth-order estimate.
//!
//! The state is scaled as `y = (λu, v)` so that `y' = λ [[0, 1], [-c, 0]] y`.
//! Traceless 2x2 matrices are stored as `(p, q, r)` meaning `[[p, q], [r, -p]]`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Traceless {
    p: f64,
    q: f64,
    r: f64,
}

impl Traceless {
    fn new(p: f64, q: f64, r: f64) -> Self {
        Self { p, q, r }
    }

    fn add(self, o: Self) -> Self {
        Self::new(self.p + o.p, self.q + o.q, self.r + o.r)
    }

    fn scale(self, k: f64) -> Self {
        Self::new(k * self.p, k * self.q, k * self.r)
    }

    fn comm(self, o: Self) -> Self {
        Self::new(
            self.q * o.r - o.q * self.r,
            2.0 * (self.p * o.q - o.p * self.q),
            2.0 * (self.r * o.p - o.r * self.p),
        )
    }

    /// `exp(Ω)` in closed form.
    fn exp(self) -> Mat {
        let d = self.p * self.p + self.q * self.r;
        let (c, s) = if d.abs() < 1e-8 {
            (1.0 + d / 2.0 + d * d / 24.0, 1.0 + d / 6.0 + d * d / 120.0)
        } else if d < 0.0 {
            let w = (-d).sqrt();
            (w.cos(), w.sin() / w)
        } else {
            let w = d.sqrt();
            (w.cosh(), w.sinh() / w)
        };
        [[c + s * self.p, s * self.q], [s * self.r, c - s * self.p]]
    }
}

const SQRT15: f64 = 3.872_983_346_207_417;

/// Node offsets of the three-point Gauss rule on `[0, 1]`.
pub(crate) const NODES: [f64; 3] = [0.5 - SQRT15 / 10.0, 0.5, 0.5 + SQRT15 / 10.0];

pub(crate) type Mat = [[f64; 2]; 2];

pub(crate) fn apply(m: &Mat, y: [f64; 2]) -> [f64; 2] {
    [m[0][0] * y[0] + m[0][1] * y[1], m[1][0] * y[0] + m[1][1] * y[1]]
}

/// Propagators of the sixth- and fourth-order schemes over a step of length `h`,
/// given the coefficient at the Gauss nodes.
pub(crate) fn step_matrices(lambda: f64, h: f64, coef: [f64; 3]) -> (Mat, Mat) {
    let a = coef.map(|c| Traceless::new(0.0, lambda, -lambda * c));
    let a1 = a[1].scale(h);
    let a2 = a[2].add(a[0].scale(-1.0)).scale(SQRT15 * h / 3.0);
    let a3 = a[2].add(a[1].scale(-2.0)).add(a[0]).scale(10.0 * h / 3.0);
    let c1 = a1.comm(a2);
    let c2 = a1.comm(a3.scale(2.0).add(c1)).scale(-1.0 / 60.0);
    let base = a1.add(a3.scale(1.0 / 12.0));
    let left = a1.scale(-20.0).add(a3.scale(-1.0)).add(c1);
    let omega6 = base.add(left.comm(a2.add(c2)).scale(1.0 / 240.0));
    let omega4 = base.add(c1.scale(-1.0 / 12.0));
    (omega6.exp(), omega4.exp())
}

#[cfg(test)]
pub(crate) fn step(lambda: f64, h: f64, coef: [f64; 3], y: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let (m6, m4) = step_matrices(lambda, h, coef);
    (apply(&m6, y), apply(&m4, y))
}
