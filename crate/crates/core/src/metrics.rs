//! Distances and summary statistics for populations on `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::cavity::Population;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

pub(crate) fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// W1 between two equal-size samples that are already sorted ascending.
pub fn wasserstein_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(invalid("empty sample"));
    }
    let total: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.len() as f64)
}

/// Exact 1-D Wasserstein-1 distance between two empirical measures of equal
/// size. Matching order statistics is the optimal coupling on the line.
pub fn wasserstein_1d(a: &Population, b: &Population) -> Result<DistanceResult> {
    let (xa, xb) = (a.members(), b.members());
    if xa.len() != xb.len() {
        return Err(Error::SizeMismatch(xa.len(), xb.len()));
    }
    let value = wasserstein_sorted(&sorted(xa), &sorted(xb))?;
    Ok(DistanceResult {
        value,
        n_a: xa.len(),
        n_b: xb.len(),
    })
}

pub const SUMMARY_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<Quantile>,
}

/// Quantile of a sorted sample, linear interpolation between order
/// statistics at position `(n - 1) * level`.
pub fn quantile_sorted(xs: &[f64], level: f64) -> f64 {
    let h = (xs.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(xs.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        xs[lo]
    } else {
        xs[lo] + frac * (xs[hi] - xs[lo])
    }
}

pub fn summarize(pop: &Population) -> Summary {
    let xs = sorted(pop.members());
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let quantiles = SUMMARY_LEVELS
        .iter()
        .map(|&level| Quantile {
            level,
            value: quantile_sorted(&xs, level),
        })
        .collect();
    Summary { n, mean, sd, quantiles }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(xs: &[f64]) -> Population {
        Population::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = pop(&[0.3, -0.2, 0.9]);
        assert_eq!(wasserstein_1d(&a, &a).unwrap().value, 0.0);
        let c = pop(&[0.25; 50]);
        let d = pop(&[-0.5; 50]);
        assert_eq!(wasserstein_1d(&c, &d).unwrap().value, 0.75);
        let r = wasserstein_1d(&pop(&[0.0, 1.0]), &pop(&[0.5, 0.5])).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!((r.n_a, r.n_b), (2, 2));
    }

    #[test]
    fn distance_ignores_member_order() {
        let a = pop(&[0.1, -0.7, 0.4, 1.0]);
        let b = pop(&[1.0, 0.4, 0.1, -0.7]);
        assert_eq!(wasserstein_1d(&a, &b).unwrap().value, 0.0);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(matches!(
            wasserstein_1d(&pop(&[0.0]), &pop(&[0.0, 1.0])),
            Err(Error::SizeMismatch(1, 2))
        ));
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&pop(&[0.0; 10]));
        assert_eq!((s.mean, s.sd), (0.0, 0.0));
        assert!(s.quantiles.iter().all(|q| q.value == 0.0));

        let s = summarize(&pop(&[1.0, -1.0]));
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.quantiles[3].value, 0.0);

        let grid: Vec<f64> = (0..=100).map(|k| -1.0 + 0.02 * k as f64).collect();
        let s = summarize(&pop(&grid));
        assert!(s.quantiles[3].value.abs() < 1e-12);
        assert!((s.quantiles[2].value + 0.5).abs() < 1e-12);
        assert!((s.quantiles[4].value - 0.5).abs() < 1e-12);
    }
}
