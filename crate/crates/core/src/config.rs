//! Run configuration shared by every CLI command.
//!
//! Resolution order: built-in defaults, then a `key = value` config file,
//! then explicit flags. The resolved [`RunConfig`] is echoed into every
//! JSON report and is enough to reproduce the run.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::cavity::Init;
use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::regions::PairSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    /// Worker cap; `None` uses every core. Results do not depend on it.
    pub threads: Option<usize>,
    /// Population size.
    pub m: usize,
    pub n_mc: usize,
    pub n_disorder: usize,
    /// System sizes for exact enumeration.
    pub sizes: Vec<usize>,
    pub tol: f64,
    pub max_iters: usize,
    pub init: Init,
    pub trials: usize,
    pub r_max: usize,
    pub pairs: usize,
    pub pair_source: PairSource,
    /// Finite-size slack `C` in the `C / N` term of the comparison tolerance.
    pub c_slack: f64,
    pub enumeration_cap: usize,
    pub snapshot: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub ratios_csv: Option<PathBuf>,
    /// Population snapshot to evaluate instead of solving for a fixed point.
    pub population: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams {
                p: 3,
                alpha: 0.05,
                beta: 1.0,
                seed: 0,
            },
            threads: None,
            m: 100_000,
            n_mc: 1_000_000,
            n_disorder: 200,
            sizes: vec![10, 12, 14],
            tol: 1e-2,
            max_iters: 200,
            init: Init::Zeros,
            trials: 100_000,
            r_max: 8,
            pairs: 20,
            pair_source: PairSource::Mixed,
            c_slack: 1.0,
            enumeration_cap: crate::exact::DEFAULT_ENUMERATION_CAP,
            snapshot: None,
            trace: None,
            records: None,
            ratios_csv: None,
            population: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(format!("bad value `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            what: "config file",
            detail: format!("line {}: expected `key = value`, got `{raw}`", lineno + 1),
        })?;
        out.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(out)
}

/// Every knob as an optional override; shared by the config file and the
/// command-line flags.
#[derive(Args, Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Clause arity.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads; output is identical for any value.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Population size M.
    #[arg(long)]
    pub m: Option<usize>,
    /// Monte Carlo trials for the RS functional.
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// Disorder samples per system size.
    #[arg(long)]
    pub n_disorder: Option<usize>,
    /// A single system size (shorthand for --n-list N).
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated system sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Fixed-point tolerance on successive W1 distances.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Initial population: zeros, plus-one, minus-one or uniform.
    #[arg(long)]
    pub init: Option<Init>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub r_max: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Contraction pairs: extremes, random or mixed.
    #[arg(long)]
    pub pair_source: Option<PairSource>,
    #[arg(long)]
    pub c_slack: Option<f64>,
    #[arg(long)]
    pub enumeration_cap: Option<usize>,
    /// Write the final population here.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Write the per-iteration distance trace (CSV) here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write per-instance exact records (CSV) here.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Write contraction ratios (CSV) here.
    #[arg(long)]
    pub ratios_csv: Option<PathBuf>,
    /// Evaluate this population snapshot instead of solving for one.
    #[arg(long)]
    pub population: Option<PathBuf>,
}

impl Overrides {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut o = Self::default();
        for (key, value) in map {
            let k = key.as_str();
            match k {
                "p" => o.p = Some(parse(k, value)?),
                "alpha" => o.alpha = Some(parse(k, value)?),
                "beta" => o.beta = Some(parse(k, value)?),
                "seed" => o.seed = Some(parse(k, value)?),
                "threads" => o.threads = Some(parse(k, value)?),
                "m" | "M" => o.m = Some(parse(k, value)?),
                "n_mc" => o.n_mc = Some(parse(k, value)?),
                "n_disorder" => o.n_disorder = Some(parse(k, value)?),
                "n" => o.n = Some(parse(k, value)?),
                "n_list" | "sizes" => o.n_list = Some(parse_list(k, value)?),
                "tol" => o.tol = Some(parse(k, value)?),
                "max_iters" => o.max_iters = Some(parse(k, value)?),
                "init" => o.init = Some(value.parse()?),
                "trials" => o.trials = Some(parse(k, value)?),
                "r_max" => o.r_max = Some(parse(k, value)?),
                "pairs" => o.pairs = Some(parse(k, value)?),
                "pair_source" => o.pair_source = Some(value.parse()?),
                "c_slack" => o.c_slack = Some(parse(k, value)?),
                "enumeration_cap" => o.enumeration_cap = Some(parse(k, value)?),
                "snapshot" => o.snapshot = Some(value.into()),
                "trace" => o.trace = Some(value.into()),
                "records" => o.records = Some(value.into()),
                "ratios_csv" => o.ratios_csv = Some(value.into()),
                "population" => o.population = Some(value.into()),
                other => return Err(invalid(format!("unknown config key `{other}`"))),
            }
        }
        Ok(o)
    }
}

macro_rules! take {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src.clone() {
            $dst = v;
        }
    };
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        take!(self.params.p, o.p);
        take!(self.params.alpha, o.alpha);
        take!(self.params.beta, o.beta);
        take!(self.params.seed, o.seed);
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        take!(self.m, o.m);
        take!(self.n_mc, o.n_mc);
        take!(self.n_disorder, o.n_disorder);
        take!(self.sizes, o.n_list);
        if let Some(n) = o.n {
            self.sizes = vec![n];
        }
        take!(self.tol, o.tol);
        take!(self.max_iters, o.max_iters);
        take!(self.init, o.init);
        take!(self.trials, o.trials);
        take!(self.r_max, o.r_max);
        take!(self.pairs, o.pairs);
        take!(self.pair_source, o.pair_source);
        take!(self.c_slack, o.c_slack);
        take!(self.enumeration_cap, o.enumeration_cap);
        for (dst, src) in [
            (&mut self.snapshot, &o.snapshot),
            (&mut self.trace, &o.trace),
            (&mut self.records, &o.records),
            (&mut self.ratios_csv, &o.ratios_csv),
            (&mut self.population, &o.population),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(file: Option<&Overrides>, flags: &Overrides) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.apply(f);
        }
        cfg.apply(flags);
        cfg.params.validate()?;
        if cfg.sizes.is_empty() {
            return Err(invalid("at least one system size is required"));
        }
        if cfg.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        Ok(cfg)
    }
}
