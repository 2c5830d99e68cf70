//! Model parameters, the clause function and disorder sampling.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::RngStream;

/// Slack allowed on `|sigma_i| <= 1` before an input counts as out of range.
pub const SPIN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Clause arity.
    pub p: usize,
    /// Connectivity: expected clauses per site.
    pub alpha: f64,
    /// Inverse temperature.
    pub beta: f64,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(p: usize, alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        let params = Self { p, alpha, beta, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(domain(format!("clause arity p = {} must be at least 2", self.p)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(domain(format!("alpha = {} must be finite and >= 0", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(domain(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        Ok(())
    }

    /// Mean number of clauses attached to one spin, `alpha * p`.
    pub fn degree_mean(&self) -> f64 {
        self.alpha * self.p as f64
    }

    /// Root random stream of a run.
    pub fn stream(&self, label: &str) -> RngStream {
        RngStream::new(self.seed, label)
    }
}

/// Literal signs `J` of one clause, each exactly `+1` or `-1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseSigns(Vec<i8>);

impl ClauseSigns {
    pub fn new(j: Vec<i8>) -> Result<Self> {
        if j.len() < 2 {
            return Err(domain(format!("a clause needs at least 2 signs, got {}", j.len())));
        }
        if let Some(bad) = j.iter().find(|&&s| s != 1 && s != -1) {
            return Err(domain(format!("clause sign {bad} is not +1 or -1")));
        }
        Ok(Self(j))
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    /// The same clause with every sign flipped.
    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

/// `prod_i (1 + J_i sigma_i) / 2`, the smoothed violation indicator.
#[inline]
pub(crate) fn violation_product(signs: &[i8], sigma: impl IntoIterator<Item = f64>) -> f64 {
    signs
        .iter()
        .zip(sigma)
        .map(|(&j, s)| 0.5 * (1.0 + f64::from(j) * s))
        .product()
}

/// `log(1 + (e^{-beta} - 1) * product)`, clamped to `[-beta, 0]`.
///
/// `penalty` must be `expm1(-beta)`. A product of exactly one is the
/// hypercube violation case and returns `-beta` with no rounding.
#[inline]
pub(crate) fn theta_from_product(product: f64, penalty: f64, beta: f64) -> f64 {
    if product >= 1.0 {
        return -beta;
    }
    (penalty * product).ln_1p().clamp(-beta, 0.0)
}

fn checked_spin(s: f64) -> Result<f64> {
    if !s.is_finite() || s.abs() > 1.0 + SPIN_TOLERANCE {
        return Err(domain(format!("spin value {s} outside [-1, 1]")));
    }
    Ok(s.clamp(-1.0, 1.0))
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(domain(format!("beta = {beta} must be finite and >= 0")));
    }
    Ok(())
}

/// Clause function extended to `[-1, 1]^p`:
/// `log(1 + (e^{-beta} - 1) prod_i (1 + J_i sigma_i) / 2)`, valued in `[-beta, 0]`.
pub fn theta_eval(signs: &ClauseSigns, sigma: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if sigma.len() != signs.arity() {
        return Err(domain(format!(
            "clause has arity {} but {} spins were given",
            signs.arity(),
            sigma.len()
        )));
    }
    let spins = sigma.iter().map(|&s| checked_spin(s)).collect::<Result<Vec<_>>>()?;
    let product = violation_product(signs.as_slice(), spins);
    Ok(theta_from_product(product, (-beta).exp_m1(), beta))
}

pub(crate) fn draw_signs_into<R: Rng + ?Sized>(rng: &mut R, out: &mut [i8]) {
    for s in out {
        *s = if rng.random::<bool>() { 1 } else { -1 };
    }
}

/// Independent fair signs for one clause of arity `p`.
pub fn sample_clause_signs(p: usize, rng: &mut RngStream) -> ClauseSigns {
    let mut j = vec![0i8; p];
    draw_signs_into(rng, &mut j);
    ClauseSigns(j)
}

pub(crate) fn poisson_sampler(mean: f64) -> Result<Option<Poisson<f64>>> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(domain(format!("Poisson mean {mean} must be finite and >= 0")));
    }
    if mean == 0.0 {
        return Ok(None);
    }
    Poisson::new(mean)
        .map(Some)
        .map_err(|e| domain(format!("Poisson mean {mean}: {e}")))
}

#[inline]
pub(crate) fn draw_poisson<R: Rng + ?Sized>(sampler: &Option<Poisson<f64>>, rng: &mut R) -> u64 {
    match sampler {
        None => 0,
        Some(d) => d.sample(rng) as u64,
    }
}

pub fn sample_poisson(mean: f64, rng: &mut RngStream) -> Result<u64> {
    let sampler = poisson_sampler(mean)?;
    Ok(draw_poisson(&sampler, rng))
}
