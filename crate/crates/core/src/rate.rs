//! Named catalog of the nonincreasing rate functions used for ω and ψ.

use serde::{Deserialize, Serialize};

/// A positive nonincreasing function on (0, 1).
///
/// `LogPower { scale, power }` is `scale * |log t|^power`; `power = 1, scale = 1`
/// is the plain logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateFn {
    Constant { value: f64 },
    Log,
    LogPower { power: f64, #[serde(default = "one")] scale: f64 },
}

fn one() -> f64 {
    1.0
}

impl RateFn {
    pub fn constant(value: f64) -> Self {
        RateFn::Constant { value }
    }

    pub fn log_power(power: f64, scale: f64) -> Self {
        RateFn::LogPower { power, scale }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            RateFn::Constant { value } => value,
            RateFn::Log => t.ln().abs(),
            RateFn::LogPower { power, scale } => scale * t.ln().abs().powf(power),
        }
    }

    /// True when the function blows up as t -> 0+.
    pub fn diverges_at_zero(&self) -> bool {
        match *self {
            RateFn::Constant { .. } => false,
            RateFn::Log => true,
            RateFn::LogPower { power, scale } => power > 0.0 && scale > 0.0,
        }
    }

    pub fn validate(&self, name: &str, problems: &mut Vec<String>) {
        match *self {
            RateFn::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                problems.push(format!("{name}: constant value must be positive, got {value}"))
            }
            RateFn::LogPower { power, scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    problems.push(format!("{name}: scale must be positive, got {scale}"));
                }
                if !(power >= 0.0 && power.is_finite()) {
                    problems.push(format!("{name}: power must be nonnegative, got {power}"));
                }
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        let t = (-8.0f64).exp();
        assert_eq!(RateFn::constant(2.0).eval(t), 2.0);
        assert!((RateFn::Log.eval(t) - 8.0).abs() < 1e-14);
        assert!((RateFn::log_power(0.5, 1.0).eval(t) - 8.0f64.sqrt()).abs() < 1e-14);
        assert!((RateFn::log_power(1.0, 3.0).eval(t) - 24.0).abs() < 1e-13);
    }

    #[test]
    fn nonincreasing_on_unit_interval() {
        for f in [RateFn::Log, RateFn::log_power(0.5, 2.0), RateFn::constant(1.0)] {
            let mut prev = f64::INFINITY;
            for k in 1..200 {
                let t = k as f64 / 200.0;
                let v = f.eval(t);
                assert!(v <= prev);
                prev = v;
            }
        }
    }
}
