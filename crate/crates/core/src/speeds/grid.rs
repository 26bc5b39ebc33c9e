//! Sample grids for class metrics.

use crate::error::{Error, Result};

/// Default log-grid density.
pub const PER_DECADE: usize = 4096;

/// Log-spaced points from `lo` to `hi` inclusive, `per_decade` points per factor ten.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(format!("log grid needs 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let n = (((hi / lo).log10() * per_decade as f64).ceil() as usize).max(1);
    let ratio = (hi / lo).ln() / n as f64;
    let mut out: Vec<f64> = (0..n).map(|k| lo * (ratio * k as f64).exp()).collect();
    out.push(hi);
    Ok(out)
}

/// `n + 1` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let mut out: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    out.push(hi);
    out
}

/// Sorted union of grids with exact duplicates removed.
pub fn merge(mut grid: Vec<f64>, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    grid.extend(extra);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Doubles the density of a sorted grid by inserting geometric midpoints.
pub fn refine(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len() * 2);
    for w in grid.windows(2) {
        out.push(w[0]);
        let mid = if w[0] > 0.0 { (w[0] * w[1]).sqrt() } else { 0.5 * (w[0] + w[1]) };
        out.push(mid);
    }
    if let Some(&last) = grid.last() {
        out.push(last);
    }
    out
}
