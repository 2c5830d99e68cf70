//! Command-line front end. Every command prints one JSON document on
//! standard output (the regions grid mode prints CSV) and progress on
//! standard error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::cavity::{read_snapshot, solve_fixed_point, write_snapshot, write_trace_csv, FixedPointResult, Population};
use crate::config::{parse_config_text, Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::exact::{free_energy_with_records, overlap_moment_gap, write_records_csv};
use crate::metrics::summarize;
use crate::regions::{
    contraction_test, coverage_scan, linspace_step, lipschitz_test, logspace, region_check, RegionGrid,
    DEFAULT_ALPHA_POINTS,
};
use crate::rs::rs_eval;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "ksat", version, about = "Replica-symmetric K-sat solver and bound checks")]
pub struct Cli {
    /// `key = value` config file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the parameter-region conditions.
    Regions {
        #[command(flatten)]
        knobs: Overrides,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Solve for the cavity fixed point by population dynamics.
    Fixedpoint {
        #[command(flatten)]
        knobs: Overrides,
    },
    /// Compare exact finite-size free energies with the RS functional.
    Compare {
        #[command(flatten)]
        knobs: Overrides,
    },
    /// Exact overlap moments and the pure-state gap.
    Overlap {
        #[command(flatten)]
        knobs: Overrides,
    },
    /// Randomized check of the cavity-map Lipschitz bound.
    Lipschitz {
        #[command(flatten)]
        knobs: Overrides,
    },
    /// Coupled Wasserstein contraction ratios of the distributional map.
    Contraction {
        #[command(flatten)]
        knobs: Overrides,
    },
    /// Exact free energy by enumeration and disorder averaging.
    Exact {
        #[command(flatten)]
        knobs: Overrides,
    },
    /// Evaluate the RS functional at a population.
    Rs {
        #[command(flatten)]
        knobs: Overrides,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct GridArgs {
    /// Stream CSV rows over a parameter grid instead of one point.
    #[arg(long)]
    pub grid: bool,
    /// Check that the pure-state region is covered by the small-alpha and
    /// small-beta regions on the grid; JSON output.
    #[arg(long)]
    pub coverage: bool,
    #[arg(long, default_value_t = 2)]
    pub p_min: usize,
    #[arg(long, default_value_t = 6)]
    pub p_max: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_POINTS)]
    pub alpha_points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 4.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub beta_step: f64,
}

impl GridArgs {
    fn grid(&self) -> RegionGrid {
        RegionGrid {
            p: (self.p_min..=self.p_max).collect(),
            alpha: logspace(self.alpha_min, self.alpha_max, self.alpha_points),
            beta: linspace_step(self.beta_min, self.beta_max, self.beta_step),
        }
    }

    fn serialize(&self) -> Value {
        json!({
            "p_min": self.p_min, "p_max": self.p_max,
            "alpha_min": self.alpha_min, "alpha_max": self.alpha_max, "alpha_points": self.alpha_points,
            "beta_min": self.beta_min, "beta_max": self.beta_max, "beta_step": self.beta_step,
        })
    }
}

/// Result of one command: what goes to stdout and the exit code.
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

impl Outcome {
    fn json(value: Value, code: i32) -> Self {
        let mut stdout = serde_json::to_string_pretty(&value).expect("JSON values always serialize");
        stdout.push('\n');
        Self { stdout, code }
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_FAILURE,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        // --help and --version go to stdout; usage errors to stderr.
        Err(e) if !e.use_stderr() => {
            return Outcome {
                stdout: e.to_string(),
                code: EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("{e}");
            return Outcome {
                stdout: String::new(),
                code: EXIT_INPUT,
            };
        }
    };
    match dispatch(cli) {
        Ok(outcome) => outcome,
        Err(err) => {
            eprintln!("error: {err}");
            Outcome::json(json!({ "error": err.to_string() }), exit_code_for(&err))
        }
    }
}

fn load_file_overrides(path: Option<&Path>) -> Result<Option<Overrides>> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)?;
    Ok(Some(Overrides::from_map(&parse_config_text(&text)?)?))
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    let file = load_file_overrides(cli.config.as_deref())?;
    let knobs = match &cli.command {
        Command::Regions { knobs, .. }
        | Command::Fixedpoint { knobs }
        | Command::Compare { knobs }
        | Command::Overlap { knobs }
        | Command::Lipschitz { knobs }
        | Command::Contraction { knobs }
        | Command::Exact { knobs }
        | Command::Rs { knobs } => knobs,
    };
    let cfg = RunConfig::resolve(file.as_ref(), knobs)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Regions { grid, .. } => cmd_regions(&cfg, grid),
        Command::Fixedpoint { .. } => cmd_fixedpoint(&cfg),
        Command::Compare { .. } => cmd_compare(&cfg),
        Command::Overlap { .. } => cmd_overlap(&cfg),
        Command::Lipschitz { .. } => cmd_lipschitz(&cfg),
        Command::Contraction { .. } => cmd_contraction(&cfg),
        Command::Exact { .. } => cmd_exact(&cfg),
        Command::Rs { .. } => cmd_rs(&cfg),
    })
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types always serialize")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn cmd_regions(cfg: &RunConfig, grid: &GridArgs) -> Result<Outcome> {
    if grid.coverage {
        let g = grid.grid();
        let violations = coverage_scan(&g)?;
        let code = if violations.is_empty() { EXIT_OK } else { EXIT_INVARIANT };
        return Ok(Outcome::json(
            json!({
                "config": to_value(cfg),
                "grid": grid.serialize(),
                "grid_points": g.len(),
                "violations": to_value(&violations),
            }),
            code,
        ));
    }
    if grid.grid {
        let g = grid.grid();
        let mut out = String::from(
            "p,alpha,beta,pure_state_lhs,contraction_lhs,small_beta_lhs,pure_state,contraction,small_beta,small_alpha\n",
        );
        for (p, alpha, beta) in g.points() {
            let r = region_check(&crate::ModelParams::new(p, alpha, beta, cfg.params.seed)?)?;
            out.push_str(&format!(
                "{p},{alpha},{beta},{},{},{},{},{},{},{}\n",
                r.pure_state.lhs,
                r.contraction.lhs,
                r.small_beta.lhs,
                r.pure_state.pass,
                r.contraction.pass,
                r.small_beta.pass,
                r.small_alpha.pass
            ));
        }
        return Ok(Outcome { stdout: out, code: EXIT_OK });
    }
    let report = region_check(&cfg.params)?;
    Ok(Outcome::json(json!({ "config": to_value(cfg), "report": to_value(&report) }), EXIT_OK))
}

fn solve(cfg: &RunConfig) -> Result<FixedPointResult> {
    eprintln!(
        "solving fixed point: p={} alpha={} beta={} M={} init={}",
        cfg.params.p, cfg.params.alpha, cfg.params.beta, cfg.m, cfg.init
    );
    let res = solve_fixed_point(&cfg.params, cfg.m, cfg.max_iters, cfg.tol, cfg.init, &cfg.params.stream("fixed-point"))?;
    eprintln!("  {} iterations, converged={}", res.iterations, res.converged);
    Ok(res)
}

fn fixed_point_json(res: &FixedPointResult) -> Value {
    json!({
        "converged": res.converged,
        "iterations": res.iterations,
        "final_distance": res.final_distance(),
        "generation": res.population.generation(),
        "summary": to_value(&summarize(&res.population)),
    })
}

pub fn cmd_fixedpoint(cfg: &RunConfig) -> Result<Outcome> {
    let res = solve(cfg)?;
    if let Some(path) = &cfg.snapshot {
        write_snapshot(create(path)?, &cfg.params, &res.population)?;
    }
    if let Some(path) = &cfg.trace {
        write_trace_csv(create(path)?, &res.trace)?;
    }
    let mut doc = fixed_point_json(&res);
    doc["config"] = to_value(cfg);
    doc["trace"] = to_value(&res.trace);
    doc["region"] = to_value(&region_check(&cfg.params)?);
    let code = if res.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok(Outcome::json(doc, code))
}

/// The population to evaluate the functional at: a snapshot if one was
/// given, otherwise the solver output.
fn rs_population(cfg: &RunConfig) -> Result<(Population, Option<FixedPointResult>)> {
    if let Some(path) = &cfg.population {
        let (_, pop) = read_snapshot(BufReader::new(File::open(path)?))?;
        return Ok((pop, None));
    }
    let res = solve(cfg)?;
    Ok((res.population.clone(), Some(res)))
}

fn rs_json(cfg: &RunConfig, pop: &Population, rs: &crate::rs::RsBreakdown) -> Value {
    json!({
        "p": cfg.params.p,
        "alpha": cfg.params.alpha,
        "beta": cfg.params.beta,
        "M": pop.len(),
        "n_mc": cfg.n_mc,
        "log2_term": rs.log2_term,
        "cavity_term": to_value(&rs.cavity_term),
        "correction_term": to_value(&rs.correction_term),
        "total": rs.total.value,
        "std_error": rs.total.std_error,
    })
}

pub fn cmd_rs(cfg: &RunConfig) -> Result<Outcome> {
    let (pop, fp) = rs_population(cfg)?;
    eprintln!("evaluating RS functional with {} trials", cfg.n_mc);
    let rs = rs_eval(&pop, &cfg.params, cfg.n_mc, &cfg.params.stream("rs"))?;
    let mut doc = rs_json(cfg, &pop, &rs);
    doc["config"] = to_value(cfg);
    if let Some(fp) = &fp {
        doc["fixed_point"] = fixed_point_json(fp);
    }
    let code = match fp {
        Some(fp) if !fp.converged => EXIT_NOT_CONVERGED,
        _ => EXIT_OK,
    };
    Ok(Outcome::json(doc, code))
}

pub fn cmd_exact(cfg: &RunConfig) -> Result<Outcome> {
    let mut estimates = Vec::new();
    let mut records = Vec::new();
    for &n in &cfg.sizes {
        eprintln!("enumerating N={n} over {} instances", cfg.n_disorder);
        let fe = free_energy_with_records(&cfg.params, n, cfg.n_disorder, cfg.enumeration_cap, &cfg.params.stream("exact").fork_index(n as u64))?;
        estimates.push((n, fe.estimate));
        records.extend(fe.records);
    }
    if let Some(path) = &cfg.records {
        write_records_csv(create(path)?, &records)?;
    }
    let results: Vec<Value> = estimates
        .iter()
        .map(|(n, e)| json!({ "n_sites": n, "estimate": to_value(e) }))
        .collect();
    let mut doc = json!({ "config": to_value(cfg), "results": results });
    if let [(_, single)] = estimates.as_slice() {
        doc["value"] = json!(single.value);
        doc["std_error"] = json!(single.std_error);
    }
    Ok(Outcome::json(doc, EXIT_OK))
}

/// Two estimates agree within `k` combined standard errors.
fn within(a: f64, se_a: f64, b: f64, se_b: f64, k: f64) -> bool {
    a - b <= k * se_a.hypot(se_b)
}

pub fn cmd_overlap(cfg: &RunConfig) -> Result<Outcome> {
    let mut results = Vec::new();
    for &n in &cfg.sizes {
        eprintln!("overlap moments N={n} over {} instances", cfg.n_disorder);
        results.push(overlap_moment_gap(&cfg.params, n, cfg.n_disorder, &cfg.params.stream("overlap").fork_index(n as u64))?);
    }
    let mut by_size = results.clone();
    by_size.sort_by_key(|m| m.n_sites);
    let nonincreasing = by_size
        .windows(2)
        .all(|w| within(w[1].gap.value, w[1].gap.std_error, w[0].gap.value, w[0].gap.std_error, 3.0));
    let mut doc = json!({
        "config": to_value(cfg),
        "results": to_value(&results),
        "gap_nonincreasing": nonincreasing,
    });
    if let [single] = results.as_slice() {
        doc["gap"] = json!(single.gap.value);
    }
    Ok(Outcome::json(doc, EXIT_OK))
}

pub fn cmd_lipschitz(cfg: &RunConfig) -> Result<Outcome> {
    let report = lipschitz_test(&cfg.params, cfg.r_max, cfg.trials, &cfg.params.stream("lipschitz"))?;
    let code = if report.violations == 0 { EXIT_OK } else { EXIT_INVARIANT };
    let mut doc = to_value(&report);
    doc["config"] = to_value(cfg);
    Ok(Outcome::json(doc, code))
}

pub fn cmd_contraction(cfg: &RunConfig) -> Result<Outcome> {
    let report = contraction_test(&cfg.params, cfg.m, cfg.pairs, cfg.pair_source, &cfg.params.stream("contraction"))?;
    if let Some(path) = &cfg.ratios_csv {
        let mut out = create(path)?;
        writeln!(out, "pair,ratio")?;
        for (i, r) in report.ratios.iter().enumerate() {
            writeln!(out, "{i},{r}")?;
        }
        out.flush()?;
    }
    let region = region_check(&cfg.params)?;
    // The bound is only guaranteed inside the contraction region.
    let code = if region.contraction.pass && !report.within_bound {
        EXIT_INVARIANT
    } else {
        EXIT_OK
    };
    let mut doc = to_value(&report);
    doc["config"] = to_value(cfg);
    doc["region"] = to_value(&region);
    Ok(Outcome::json(doc, code))
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Outcome> {
    let region = region_check(&cfg.params)?;
    let mut warnings = Vec::new();
    if !region.pure_state.pass {
        warnings.push("pure-state condition fails: the RS value is not known to equal the limit");
    }
    if !region.contraction.pass {
        warnings.push("contraction condition fails: the fixed point may not be unique and the RS value is only an upper-bound candidate");
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut doc = json!({
        "config": to_value(cfg),
        "region": to_value(&region),
        "warnings": warnings,
    });

    let (pop, fp) = rs_population(cfg)?;
    if let Some(fp) = &fp {
        doc["fixed_point"] = fixed_point_json(fp);
    }
    eprintln!("evaluating RS functional with {} trials", cfg.n_mc);
    let rs = rs_eval(&pop, &cfg.params, cfg.n_mc, &cfg.params.stream("rs"))?;
    doc["rs"] = rs_json(cfg, &pop, &rs);
    doc["rs_total"] = json!(rs.total.value);
    doc["rs_label"] = json!(if region.contraction.pass { "fixed-point value" } else { "upper-bound candidate" });

    let mut rows = Vec::new();
    let mut all_within = true;
    for &n in &cfg.sizes {
        eprintln!("enumerating N={n} over {} instances", cfg.n_disorder);
        let fe = match free_energy_with_records(&cfg.params, n, cfg.n_disorder, cfg.enumeration_cap, &cfg.params.stream("exact").fork_index(n as u64)) {
            Ok(fe) => fe,
            Err(err) => {
                // Flush what was computed so far.
                doc["exact"] = json!(rows);
                doc["error"] = json!(err.to_string());
                return Ok(Outcome::json(doc, exit_code_for(&err)));
            }
        };
        let e = fe.estimate;
        let gap = (e.value - rs.total.value).abs();
        let combined = e.std_error.hypot(rs.total.std_error);
        let tolerance = 3.0 * combined + cfg.c_slack / n as f64;
        let ok = gap <= tolerance;
        all_within &= ok;
        rows.push(json!({
            "n_sites": n,
            "exact": to_value(&e),
            "gap": gap,
            "combined_std_error": combined,
            "tolerance": tolerance,
            "within_tolerance": ok,
        }));
    }
    doc["exact"] = json!(rows);
    doc["all_within_tolerance"] = json!(all_within);
    let converged = fp.as_ref().is_none_or(|f| f.converged);
    let code = if !converged {
        EXIT_NOT_CONVERGED
    } else if region.pure_state.pass && region.contraction.pass && !all_within {
        EXIT_INVARIANT
    } else {
        EXIT_OK
    };
    Ok(Outcome::json(doc, code))
}
