//! Cavity map and population dynamics for the distributional fixed point.
//!
//! A law on `[-1, 1]` is represented by a population of `M` magnetizations.
//! One step of the distributional map replaces every member by the cavity
//! field induced on a fresh spin by `Poisson(alpha p)` random clauses whose
//! other `p - 1` endpoints are resampled from the previous generation.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::metrics::{sorted, wasserstein_sorted};
use crate::model::{
    check_beta, draw_poisson, draw_signs_into, poisson_sampler, theta_from_product,
    violation_product, ClauseSigns, ModelParams, SPIN_TOLERANCE,
};
use crate::rng::RngStream;

/// Smallest population the fixed-point solver accepts.
pub const MIN_SOLVER_POPULATION: usize = 1_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    members: Vec<f64>,
    generation: u64,
}

impl Population {
    /// Members slightly outside `[-1, 1]` from rounding are projected back.
    pub fn new(members: Vec<f64>) -> Result<Self> {
        Self::with_generation(members, 0)
    }

    pub fn with_generation(mut members: Vec<f64>, generation: u64) -> Result<Self> {
        if members.is_empty() {
            return Err(invalid("population must have at least one member"));
        }
        for x in &mut members {
            if !x.is_finite() || x.abs() > 1.0 + SPIN_TOLERANCE {
                return Err(domain(format!("population member {x} outside [-1, 1]")));
            }
            *x = x.clamp(-1.0, 1.0);
        }
        Ok(Self { members, generation })
    }

    pub fn preset(init: Init, m: usize, rng: &mut RngStream) -> Result<Self> {
        let members = match init {
            Init::Zeros => vec![0.0; m],
            Init::PlusOne => vec![1.0; m],
            Init::MinusOne => vec![-1.0; m],
            Init::Uniform => (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        };
        Self::new(members)
    }

    pub fn members(&self) -> &[f64] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Same empirical law with members in ascending order.
    pub fn sorted(&self) -> Self {
        Self {
            members: sorted(&self.members),
            generation: self.generation,
        }
    }
}

/// Starting population for the fixed-point iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    #[default]
    Zeros,
    PlusOne,
    MinusOne,
    Uniform,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" | "zero" | "0" => Ok(Self::Zeros),
            "plus-one" | "plus" | "+1" => Ok(Self::PlusOne),
            "minus-one" | "minus" | "-1" => Ok(Self::MinusOne),
            "uniform" => Ok(Self::Uniform),
            other => Err(invalid(format!(
                "unknown init preset `{other}` (expected zeros, plus-one, minus-one, uniform)"
            ))),
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zeros => "zeros",
            Self::PlusOne => "plus-one",
            Self::MinusOne => "minus-one",
            Self::Uniform => "uniform",
        })
    }
}

/// Arguments of one cavity map evaluation: `r` clauses, each with `p` signs
/// (the last one multiplies the cavity spin) and `p - 1` input spins.
#[derive(Clone, Debug, PartialEq)]
pub struct CavityInput {
    p: usize,
    signs: Vec<i8>,
    sigma: Vec<f64>,
}

impl CavityInput {
    /// `sigma[k]` holds the `p - 1` inputs of clause `k`.
    pub fn new(signs: Vec<ClauseSigns>, sigma: Vec<Vec<f64>>) -> Result<Self> {
        if signs.len() != sigma.len() {
            return Err(invalid(format!(
                "{} clauses but {} input rows",
                signs.len(),
                sigma.len()
            )));
        }
        let p = signs.first().map_or(2, ClauseSigns::arity);
        let mut flat_signs = Vec::with_capacity(p * signs.len());
        let mut flat_sigma = Vec::with_capacity((p - 1) * signs.len());
        for (j, row) in signs.iter().zip(&sigma) {
            if j.arity() != p || row.len() != p - 1 {
                return Err(invalid(format!(
                    "clause of arity {} with {} inputs, expected arity {p} with {}",
                    j.arity(),
                    row.len(),
                    p - 1
                )));
            }
            flat_signs.extend_from_slice(j.as_slice());
            for &s in row {
                if !s.is_finite() || s.abs() > 1.0 + SPIN_TOLERANCE {
                    return Err(domain(format!("cavity input {s} outside [-1, 1]")));
                }
                flat_sigma.push(s.clamp(-1.0, 1.0));
            }
        }
        Ok(Self {
            p,
            signs: flat_signs,
            sigma: flat_sigma,
        })
    }

    pub fn clauses(&self) -> usize {
        self.signs.len() / self.p
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Same clauses with different inputs.
    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.sigma.len() {
            return Err(Error::SizeMismatch(self.sigma.len(), sigma.len()));
        }
        if let Some(bad) = sigma.iter().find(|s| !s.is_finite() || s.abs() > 1.0 + SPIN_TOLERANCE) {
            return Err(domain(format!("cavity input {bad} outside [-1, 1]")));
        }
        Ok(Self {
            p: self.p,
            signs: self.signs.clone(),
            sigma: sigma.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        })
    }

    /// Flip the cavity-slot sign `J_{p,k}` of every clause.
    pub fn with_cavity_signs_negated(&self) -> Self {
        let mut signs = self.signs.clone();
        for chunk in signs.chunks_exact_mut(self.p) {
            chunk[self.p - 1] = -chunk[self.p - 1];
        }
        Self {
            p: self.p,
            signs,
            sigma: self.sigma.clone(),
        }
    }
}

/// Cavity fields `(A(+1), A(-1))` for flat sign and input buffers.
///
/// Clause `k` only contributes to `A(J_{p,k})`; for the other value of the
/// cavity spin its smoothed violation indicator vanishes.
#[inline]
pub(crate) fn cavity_fields(p: usize, signs: &[i8], sigma: &[f64], penalty: f64, beta: f64) -> (f64, f64) {
    let mut plus = 0.0;
    let mut minus = 0.0;
    for (j, s) in signs.chunks_exact(p).zip(sigma.chunks_exact(p - 1)) {
        let theta = theta_from_product(violation_product(&j[..p - 1], s.iter().copied()), penalty, beta);
        if j[p - 1] > 0 {
            plus += theta;
        } else {
            minus += theta;
        }
    }
    (plus, minus)
}

#[inline]
pub(crate) fn cavity_value(p: usize, signs: &[i8], sigma: &[f64], penalty: f64, beta: f64) -> f64 {
    let (plus, minus) = cavity_fields(p, signs, sigma, penalty, beta);
    // Av eps e^{A(eps)} / Av e^{A(eps)} for a two-point average.
    (0.5 * (plus - minus)).tanh()
}

/// Magnetization of a cavity spin attached to the given clauses. Zero clauses
/// give zero.
pub fn cavity_map(input: &CavityInput, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(cavity_value(
        input.p,
        &input.signs,
        &input.sigma,
        (-beta).exp_m1(),
        beta,
    ))
}

/// Reusable per-worker buffers for one population update.
#[derive(Default)]
struct Scratch {
    signs: Vec<i8>,
    sigma: Vec<f64>,
}

/// Draws the clause count, signs and resampling indices for one member in a
/// fixed order that does not depend on member values, so two populations
/// updated with the same stream are coupled index-by-index.
fn member_update(
    old: &[f64],
    params: &ModelParams,
    sampler: &Option<rand_distr::Poisson<f64>>,
    penalty: f64,
    rng: &mut RngStream,
    scratch: &mut Scratch,
) -> f64 {
    let p = params.p;
    let r = draw_poisson(sampler, rng) as usize;
    if r == 0 {
        return 0.0;
    }
    scratch.signs.clear();
    scratch.signs.resize(r * p, 0);
    scratch.sigma.clear();
    for k in 0..r {
        draw_signs_into(rng, &mut scratch.signs[k * p..(k + 1) * p]);
        for _ in 0..p - 1 {
            scratch.sigma.push(old[rng.random_range(0..old.len())]);
        }
    }
    cavity_value(p, &scratch.signs, &scratch.sigma, penalty, params.beta)
}

/// One synchronous application of the distributional map. Member `i` of the
/// new generation uses the stream `rng.fork_index(i)`; the old population is
/// read-only, so the result does not depend on the number of workers.
pub fn population_step(pop: &Population, params: &ModelParams, rng: &RngStream) -> Result<Population> {
    params.validate()?;
    let sampler = poisson_sampler(params.degree_mean())?;
    let penalty = (-params.beta).exp_m1();
    let old = pop.members();
    if params.alpha == 0.0 || params.beta == 0.0 {
        // Every clause count is zero or every clause term vanishes.
        return Ok(Population {
            members: vec![0.0; old.len()],
            generation: pop.generation + 1,
        });
    }
    let members: Vec<f64> = (0..old.len())
        .into_par_iter()
        .map_init(Scratch::default, |scratch, i| {
            let mut stream = rng.fork_index(i as u64);
            member_update(old, params, &sampler, penalty, &mut stream, scratch)
        })
        .collect();
    Ok(Population {
        members,
        generation: pop.generation + 1,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub population: Population,
    /// Distance between consecutive generations, one entry per iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FixedPointResult {
    pub fn final_distance(&self) -> Option<f64> {
        self.trace.last().copied()
    }
}

/// Consecutive sub-tolerance steps required to declare convergence.
pub const CONVERGENCE_STREAK: usize = 3;

/// Iterates the distributional map until the W1 distance between successive
/// generations stays below `tol` for [`CONVERGENCE_STREAK`] iterations, or a
/// step leaves the population exactly unchanged, or `max_iters` is hit.
/// Non-convergence is reported in the result, not as an error.
pub fn solve_fixed_point(
    params: &ModelParams,
    m: usize,
    max_iters: usize,
    tol: f64,
    init: Init,
    rng: &RngStream,
) -> Result<FixedPointResult> {
    params.validate()?;
    if m < MIN_SOLVER_POPULATION {
        return Err(invalid(format!(
            "population size {m} is below the solver minimum {MIN_SOLVER_POPULATION}"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid(format!("tolerance {tol} must be positive")));
    }
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    let mut pop = Population::preset(init, m, &mut rng.fork("init"))?;
    let generations = rng.fork("generation");
    let mut prev_sorted = sorted(pop.members());
    let mut trace = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    while trace.len() < max_iters {
        let next = population_step(&pop, params, &generations.fork_index(pop.generation()))?;
        let next_sorted = sorted(next.members());
        let d = wasserstein_sorted(&prev_sorted, &next_sorted)?;
        trace.push(d);
        pop = next;
        prev_sorted = next_sorted;
        if d == 0.0 {
            converged = true;
            break;
        }
        streak = if d < tol { streak + 1 } else { 0 };
        if streak >= CONVERGENCE_STREAK {
            converged = true;
            break;
        }
    }
    Ok(FixedPointResult {
        population: pop,
        iterations: trace.len(),
        trace,
        converged,
    })
}

/// Header line of a population snapshot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub p: usize,
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
    pub generation: u64,
    pub seed: u64,
}

impl SnapshotHeader {
    pub fn new(params: &ModelParams, pop: &Population) -> Self {
        Self {
            p: params.p,
            alpha: params.alpha,
            beta: params.beta,
            m: pop.len(),
            generation: pop.generation(),
            seed: params.seed,
        }
    }
}

impl fmt::Display for SnapshotHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# p={} alpha={} beta={} M={} generation={} seed={}",
            self.p, self.alpha, self.beta, self.m, self.generation, self.seed
        )
    }
}

fn parse_field<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        what: "snapshot header",
        detail: format!("bad value `{value}` for {key}"),
    })
}

impl FromStr for SnapshotHeader {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |detail: String| Error::Parse {
            what: "snapshot header",
            detail,
        };
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| bad(format!("expected `#` header, got `{line}`")))?;
        let (mut p, mut alpha, mut beta, mut m, mut generation, mut seed) = (None, None, None, None, None, None);
        for field in body.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("field `{field}` is not key=value")))?;
            match key {
                "p" => p = Some(parse_field(value, key)?),
                "alpha" => alpha = Some(parse_field(value, key)?),
                "beta" => beta = Some(parse_field(value, key)?),
                "M" => m = Some(parse_field(value, key)?),
                "generation" => generation = Some(parse_field(value, key)?),
                "seed" => seed = Some(parse_field(value, key)?),
                _ => return Err(bad(format!("unknown field `{key}`"))),
            }
        }
        let missing = |k: &str| bad(format!("missing field `{k}`"));
        Ok(Self {
            p: p.ok_or_else(|| missing("p"))?,
            alpha: alpha.ok_or_else(|| missing("alpha"))?,
            beta: beta.ok_or_else(|| missing("beta"))?,
            m: m.ok_or_else(|| missing("M"))?,
            generation: generation.ok_or_else(|| missing("generation"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        })
    }
}

/// Header line, then one member per line in shortest round-trip decimal form.
pub fn write_snapshot<W: Write>(mut out: W, params: &ModelParams, pop: &Population) -> Result<()> {
    writeln!(out, "{}", SnapshotHeader::new(params, pop))?;
    for x in pop.members() {
        writeln!(out, "{x}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<(SnapshotHeader, Population)> {
    let mut lines = input.lines();
    let header: SnapshotHeader = lines
        .next()
        .ok_or_else(|| Error::Parse {
            what: "snapshot",
            detail: "empty file".into(),
        })??
        .parse()?;
    let mut members = Vec::with_capacity(header.m);
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        members.push(line.parse::<f64>().map_err(|_| Error::Parse {
            what: "snapshot",
            detail: format!("bad member `{line}`"),
        })?);
    }
    if members.len() != header.m {
        return Err(Error::Parse {
            what: "snapshot",
            detail: format!("header says M={} but {} members follow", header.m, members.len()),
        });
    }
    let pop = Population::with_generation(members, header.generation)?;
    Ok((header, pop))
}

/// `iteration,distance` rows, iterations counted from 1.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[f64]) -> Result<()> {
    writeln!(out, "iteration,distance")?;
    for (i, d) in trace.iter().enumerate() {
        writeln!(out, "{},{d}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}
