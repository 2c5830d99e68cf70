//! Finite-size ground truth by exhaustive enumeration.
//!
//! Configurations are visited in Gray-code order so each step flips a single
//! spin and only the clauses touching it are re-examined. On the hypercube a
//! clause contributes either `0` or `-beta`, so the partition function only
//! depends on the histogram of violated-clause counts.

use std::f64::consts::LN_2;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{check_beta, poisson_sampler, draw_poisson, sample_clause_signs, ClauseSigns, ModelParams};
use crate::rng::RngStream;

pub const DEFAULT_ENUMERATION_CAP: usize = 24;
pub const DEFAULT_CLAUSE_CAP: u64 = 1_000_000;

/// Monte Carlo scalar with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl Estimate {
    /// Mean and `sd / sqrt(n)` of the samples. The mean is accumulated
    /// relative to the first sample, so identical samples give that sample
    /// back bit-for-bit with zero error.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n > 0, "estimate of an empty sample");
        let x0 = xs[0];
        let shift = xs.iter().map(|x| x - x0).sum::<f64>() / n as f64;
        let value = x0 + shift;
        let std_error = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - x0 - shift).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            value,
            std_error,
            n_samples: n,
        }
    }

    /// Same uncertainty, value shifted by a constant.
    pub fn shifted(self, offset: f64) -> Self {
        Self {
            value: self.value + offset,
            ..self
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            std_error: self.std_error * factor.abs(),
            ..self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub signs: ClauseSigns,
    pub sites: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    n_sites: usize,
    clauses: Vec<Clause>,
}

impl Instance {
    pub fn new(n_sites: usize, clauses: Vec<Clause>) -> Result<Self> {
        if n_sites == 0 {
            return Err(invalid("an instance needs at least one site"));
        }
        for c in &clauses {
            if c.sites.len() != c.signs.arity() {
                return Err(invalid(format!(
                    "clause with {} signs but {} sites",
                    c.signs.arity(),
                    c.sites.len()
                )));
            }
            if let Some(&s) = c.sites.iter().find(|&&s| s >= n_sites) {
                return Err(invalid(format!("site index {s} out of range for {n_sites} sites")));
            }
        }
        Ok(Self { n_sites, clauses })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }
}

pub fn sample_instance(params: &ModelParams, n_sites: usize, rng: &mut RngStream) -> Result<Instance> {
    sample_instance_with_cap(params, n_sites, DEFAULT_CLAUSE_CAP, rng)
}

/// Poisson(`alpha * n_sites`) clauses, each with fresh signs and `p` sites
/// drawn uniformly with replacement.
pub fn sample_instance_with_cap(
    params: &ModelParams,
    n_sites: usize,
    clause_cap: u64,
    rng: &mut RngStream,
) -> Result<Instance> {
    params.validate()?;
    if n_sites == 0 {
        return Err(invalid("an instance needs at least one site"));
    }
    let count = draw_poisson(&poisson_sampler(params.alpha * n_sites as f64)?, rng);
    if count > clause_cap {
        return Err(Error::ClauseCap {
            clauses: count,
            cap: clause_cap,
        });
    }
    let clauses = (0..count)
        .map(|_| {
            let signs = sample_clause_signs(params.p, rng);
            let sites = (0..params.p).map(|_| rng.random_range(0..n_sites)).collect();
            Clause { signs, sites }
        })
        .collect();
    Ok(Instance { n_sites, clauses })
}

fn check_cap(instance: &Instance, cap: usize) -> Result<()> {
    if instance.n_sites > cap || instance.n_sites >= usize::BITS as usize {
        return Err(Error::EnumerationCap {
            n_sites: instance.n_sites,
            cap,
        });
    }
    Ok(())
}

/// Walks `{-1,1}^N` in Gray-code order tracking the number of violated
/// clauses. Bit `i` of the mask set means `sigma_i = -1`.
struct GrayWalk<'a> {
    instance: &'a Instance,
    occurrences: Vec<Vec<(u32, i8)>>,
}

impl<'a> GrayWalk<'a> {
    fn new(instance: &'a Instance) -> Self {
        let mut occurrences = vec![Vec::new(); instance.n_sites];
        for (c, clause) in instance.clauses.iter().enumerate() {
            for (&site, &j) in clause.sites.iter().zip(clause.signs.as_slice()) {
                occurrences[site].push((c as u32, j));
            }
        }
        Self { instance, occurrences }
    }

    /// Calls `visit(mask, violated)` once per configuration.
    fn run(&self, mut visit: impl FnMut(usize, usize)) {
        let n = self.instance.n_sites;
        // A clause is violated when every literal matches its sign, i.e.
        // sigma at each of its sites equals J there.
        let mut matched: Vec<u32> = self
            .instance
            .clauses
            .iter()
            .map(|c| c.signs.as_slice().iter().filter(|&&j| j > 0).count() as u32)
            .collect();
        let arity: Vec<u32> = self.instance.clauses.iter().map(|c| c.signs.arity() as u32).collect();
        let mut violated = matched.iter().zip(&arity).filter(|(m, a)| m == a).count();
        let mut mask = 0usize;
        visit(mask, violated);
        for step in 1usize..(1usize << n) {
            let site = step.trailing_zeros() as usize;
            let before: i8 = if mask >> site & 1 == 1 { -1 } else { 1 };
            for &(c, j) in &self.occurrences[site] {
                let c = c as usize;
                if before == j {
                    if matched[c] == arity[c] {
                        violated -= 1;
                    }
                    matched[c] -= 1;
                } else {
                    matched[c] += 1;
                    if matched[c] == arity[c] {
                        violated += 1;
                    }
                }
            }
            mask ^= 1 << site;
            visit(mask, violated);
        }
    }
}

/// Number of configurations with exactly `v` violated clauses, for every `v`.
pub fn violation_histogram(instance: &Instance, cap: usize) -> Result<Vec<u64>> {
    check_cap(instance, cap)?;
    let mut counts = vec![0u64; instance.clauses.len() + 1];
    GrayWalk::new(instance).run(|_, v| counts[v] += 1);
    while counts.len() > 1 && counts.last() == Some(&0) {
        counts.pop();
    }
    Ok(counts)
}

/// `log(Z / 2^N)`, evaluated relative to the least-violated configurations.
fn log_partition_excess(counts: &[u64], n_sites: usize, beta: f64) -> f64 {
    let v_min = counts.iter().position(|&c| c > 0).unwrap_or(0);
    let scale = (n_sites as f64).exp2();
    let sum: f64 = counts[v_min..]
        .iter()
        .enumerate()
        .map(|(dv, &c)| (c as f64 / scale) * (-beta * dv as f64).exp())
        .sum();
    sum.ln() - beta * v_min as f64
}

pub fn log_partition(instance: &Instance, beta: f64) -> Result<f64> {
    log_partition_with_cap(instance, beta, DEFAULT_ENUMERATION_CAP)
}

/// `log sum_sigma exp(-H(sigma))` by full enumeration.
pub fn log_partition_with_cap(instance: &Instance, beta: f64, cap: usize) -> Result<f64> {
    check_beta(beta)?;
    let counts = violation_histogram(instance, cap)?;
    let n = instance.n_sites;
    Ok(n as f64 * LN_2 + log_partition_excess(&counts, n, beta))
}

/// Per-instance result of a disorder average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub n_sites: usize,
    pub instance: usize,
    pub clauses: usize,
    pub log_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergy {
    pub estimate: Estimate,
    pub records: Vec<InstanceRecord>,
}

pub fn free_energy(params: &ModelParams, n_sites: usize, n_disorder: usize, rng: &RngStream) -> Result<Estimate> {
    free_energy_with_records(params, n_sites, n_disorder, DEFAULT_ENUMERATION_CAP, rng).map(|f| f.estimate)
}

/// Mean and standard error of `log Z / N` over independent instances.
/// Instance `d` is drawn from `rng.fork_index(d)`.
pub fn free_energy_with_records(
    params: &ModelParams,
    n_sites: usize,
    n_disorder: usize,
    cap: usize,
    rng: &RngStream,
) -> Result<FreeEnergy> {
    params.validate()?;
    if n_disorder < 2 {
        return Err(invalid(format!("n_disorder = {n_disorder} must be at least 2")));
    }
    let per_instance: Vec<(f64, InstanceRecord)> = (0..n_disorder)
        .into_par_iter()
        .map(|d| {
            let instance = sample_instance(params, n_sites, &mut rng.fork_index(d as u64))?;
            let counts = violation_histogram(&instance, cap)?;
            let excess = log_partition_excess(&counts, n_sites, params.beta);
            let record = InstanceRecord {
                n_sites,
                instance: d,
                clauses: instance.clauses.len(),
                log_z: n_sites as f64 * LN_2 + excess,
            };
            Ok((excess / n_sites as f64, record))
        })
        .collect::<Result<_>>()?;
    let (densities, records): (Vec<f64>, Vec<InstanceRecord>) = per_instance.into_iter().unzip();
    Ok(FreeEnergy {
        estimate: Estimate::from_samples(&densities).shifted(LN_2),
        records,
    })
}

pub fn write_records_csv<W: Write>(mut out: W, records: &[InstanceRecord]) -> Result<()> {
    writeln!(out, "n_sites,instance,clauses,log_z")?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.n_sites, r.instance, r.clauses, r.log_z)?;
    }
    out.flush()?;
    Ok(())
}

/// Exact one- and two-point Gibbs averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsMoments {
    pub site_means: Vec<f64>,
    /// Row-major `N x N` matrix of `<sigma_i sigma_j>`.
    pub pair_corr: Vec<Vec<f64>>,
}

/// Unnormalized Walsh-Hadamard transform in place.
fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

pub fn gibbs_moments(instance: &Instance, beta: f64) -> Result<GibbsMoments> {
    gibbs_moments_with_cap(instance, beta, DEFAULT_ENUMERATION_CAP)
}

/// Since `sigma_i = (-1)^{bit i}`, the Walsh-Hadamard coefficient of the
/// Gibbs weights at mask `S` is the unnormalized average of
/// `prod_{i in S} sigma_i`.
pub fn gibbs_moments_with_cap(instance: &Instance, beta: f64, cap: usize) -> Result<GibbsMoments> {
    check_beta(beta)?;
    let counts = violation_histogram(instance, cap)?;
    let v_min = counts.iter().position(|&c| c > 0).unwrap_or(0);
    let table: Vec<f64> = (0..counts.len())
        .map(|v| if v < v_min { 0.0 } else { (-beta * (v - v_min) as f64).exp() })
        .collect();
    let n = instance.n_sites;
    let mut weights = vec![0.0f64; 1 << n];
    GrayWalk::new(instance).run(|mask, v| weights[mask] = table[v]);
    walsh_hadamard(&mut weights);
    let z = weights[0];
    let site_means = (0..n).map(|i| (weights[1 << i] / z).clamp(-1.0, 1.0)).collect();
    let pair_corr = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        (weights[(1 << i) | (1 << j)] / z).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    Ok(GibbsMoments { site_means, pair_corr })
}

impl GibbsMoments {
    /// `(1/N^2) sum_ij <sigma_i sigma_j>^2`, the Gibbs mean of `R12^2`.
    pub fn overlap_sq(&self) -> f64 {
        let n = self.site_means.len() as f64;
        let s: f64 = self.pair_corr.iter().flatten().map(|c| c * c).sum();
        s / (n * n)
    }

    /// `((1/N) sum_i <sigma_i>^2)^2`, the Gibbs mean of `R12 R34`.
    pub fn overlap_product(&self) -> f64 {
        let n = self.site_means.len() as f64;
        let q = self.site_means.iter().map(|m| m * m).sum::<f64>() / n;
        q * q
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapMoments {
    pub n_sites: usize,
    pub r12_sq: Estimate,
    pub r12_r34: Estimate,
    /// Disorder average of `r12_sq - r12_r34` taken instance by instance.
    pub gap: Estimate,
}

pub fn overlap_moment_gap(
    params: &ModelParams,
    n_sites: usize,
    n_disorder: usize,
    rng: &RngStream,
) -> Result<OverlapMoments> {
    params.validate()?;
    if n_disorder < 2 {
        return Err(invalid(format!("n_disorder = {n_disorder} must be at least 2")));
    }
    let per_instance: Vec<(f64, f64)> = (0..n_disorder)
        .into_par_iter()
        .map(|d| {
            let instance = sample_instance(params, n_sites, &mut rng.fork_index(d as u64))?;
            let g = gibbs_moments(&instance, params.beta)?;
            Ok((g.overlap_sq(), g.overlap_product()))
        })
        .collect::<Result<_>>()?;
    let sq: Vec<f64> = per_instance.iter().map(|x| x.0).collect();
    let prod: Vec<f64> = per_instance.iter().map(|x| x.1).collect();
    let gap: Vec<f64> = per_instance.iter().map(|x| x.0 - x.1).collect();
    Ok(OverlapMoments {
        n_sites,
        r12_sq: Estimate::from_samples(&sq),
        r12_r34: Estimate::from_samples(&prod),
        gap: Estimate::from_samples(&gap),
    })
}
