//! Monte Carlo evaluation of the replica-symmetric functional
//!
//! `P(zeta) = log 2 + E log Av_eps exp sum_{k <= Poisson(p alpha)} theta_k(z_1k, .., z_{p-1,k}, eps)
//!            - (p - 1) alpha E theta(z_1, .., z_p)`
//!
//! for a law `zeta` represented by a population.

use std::f64::consts::LN_2;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{cavity_fields, Population};
use crate::error::{invalid, Result};
use crate::exact::Estimate;
use crate::model::{draw_poisson, draw_signs_into, poisson_sampler, theta_from_product, violation_product, ModelParams};
use crate::rng::RngStream;

pub const MIN_MC_TRIALS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsBreakdown {
    pub log2_term: f64,
    /// `E log Av exp sum theta_k`.
    pub cavity_term: Estimate,
    /// `(p - 1) alpha E theta`, subtracted from the total.
    pub correction_term: Estimate,
    pub total: Estimate,
}

/// `log((e^a + e^b) / 2)` without overflow.
fn log_av_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + (0.5 * ((a - m).exp() + (b - m).exp())).ln()
}

pub fn rs_eval(pop: &Population, params: &ModelParams, n_mc: usize, rng: &RngStream) -> Result<RsBreakdown> {
    params.validate()?;
    if n_mc < MIN_MC_TRIALS {
        return Err(invalid(format!("n_mc = {n_mc} is below the minimum of {MIN_MC_TRIALS}")));
    }
    if params.alpha == 0.0 || params.beta == 0.0 {
        // Both stochastic terms vanish identically.
        let zero = Estimate { value: 0.0, std_error: 0.0, n_samples: n_mc };
        return Ok(RsBreakdown {
            log2_term: LN_2,
            cavity_term: zero,
            correction_term: zero,
            total: zero.shifted(LN_2),
        });
    }
    let p = params.p;
    let beta = params.beta;
    let penalty = (-beta).exp_m1();
    let sampler = poisson_sampler(params.degree_mean())?;
    let z = pop.members();

    let cavity_stream = rng.fork("cavity");
    let cavity: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map_init(
            || (Vec::<i8>::new(), Vec::<f64>::new()),
            |(signs, sigma), t| {
                let mut s = cavity_stream.fork_index(t as u64);
                let r = draw_poisson(&sampler, &mut s) as usize;
                if r == 0 {
                    return 0.0;
                }
                signs.clear();
                signs.resize(r * p, 0);
                sigma.clear();
                for k in 0..r {
                    draw_signs_into(&mut s, &mut signs[k * p..(k + 1) * p]);
                    for _ in 0..p - 1 {
                        sigma.push(z[s.random_range(0..z.len())]);
                    }
                }
                let (plus, minus) = cavity_fields(p, signs, sigma, penalty, beta);
                log_av_exp(plus, minus)
            },
        )
        .collect();

    let correction_stream = rng.fork("correction");
    let thetas: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map_init(
            || (vec![0i8; p], vec![0.0f64; p]),
            |(signs, sigma), t| {
                let mut s = correction_stream.fork_index(t as u64);
                draw_signs_into(&mut s, signs);
                for x in sigma.iter_mut() {
                    *x = z[s.random_range(0..z.len())];
                }
                theta_from_product(violation_product(signs, sigma.iter().copied()), penalty, beta)
            },
        )
        .collect();

    let cavity_term = Estimate::from_samples(&cavity);
    let correction_term = Estimate::from_samples(&thetas).scaled((p - 1) as f64 * params.alpha);
    let total = Estimate {
        value: LN_2 + (cavity_term.value - correction_term.value),
        std_error: cavity_term.std_error.hypot(correction_term.std_error),
        n_samples: n_mc,
    };
    Ok(RsBreakdown {
        log2_term: LN_2,
        cavity_term,
        correction_term,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::Init;

    fn uniform_pop(m: usize) -> Population {
        Population::preset(Init::Uniform, m, &mut RngStream::new(1, "pop")).unwrap()
    }

    #[test]
    fn degenerate_parameters_give_log2() {
        let pop = uniform_pop(1000);
        for prm in [ModelParams::new(3, 0.0, 1.0, 1).unwrap(), ModelParams::new(3, 0.4, 0.0, 1).unwrap()] {
            let rs = rs_eval(&pop, &prm, 1000, &RngStream::new(1, "rs")).unwrap();
            assert_eq!(rs.total.value, LN_2);
            assert_eq!(rs.total.std_error, 0.0);
            assert_eq!(rs.log2_term, LN_2);
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        let prm = ModelParams::new(3, 0.1, 1.0, 1).unwrap();
        assert!(rs_eval(&uniform_pop(10), &prm, 99, &RngStream::new(1, "rs")).is_err());
    }

    #[test]
    fn terms_respect_bounds() {
        let prm = ModelParams::new(4, 0.3, 2.0, 1).unwrap();
        let rs = rs_eval(&uniform_pop(2000), &prm, 20_000, &RngStream::new(1, "rs")).unwrap();
        let (p, a, b) = (4.0, 0.3, 2.0);
        assert!(rs.correction_term.value <= 0.0 && rs.correction_term.value >= -(p - 1.0) * a * b);
        assert!(rs.cavity_term.value <= 0.0 && rs.cavity_term.value >= -a * p * b * 3.0);
        let recombined = rs.log2_term + rs.cavity_term.value - rs.correction_term.value;
        assert!((recombined - rs.total.value).abs() < 1e-15);
    }

    #[test]
    fn log_av_exp_stable() {
        assert_eq!(log_av_exp(0.0, 0.0), 0.0);
        assert!((log_av_exp(-1000.0, -1000.0) + 1000.0).abs() < 1e-12);
        assert!((log_av_exp(0.0, -800.0) + LN_2).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let prm = ModelParams::new(3, 0.2, 1.0, 1).unwrap();
        let pop = uniform_pop(500);
        let a = rs_eval(&pop, &prm, 500, &RngStream::new(1, "rs")).unwrap();
        let b = rs_eval(&pop, &prm, 500, &RngStream::new(1, "rs")).unwrap();
        assert_eq!(a, b);
    }
}
