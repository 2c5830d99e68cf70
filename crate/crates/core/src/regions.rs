//! Parameter-region predicates and empirical checks of the cavity-map bounds.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{cavity_value, population_step, Population};
use crate::error::{invalid, Result};
use crate::metrics::{sorted, wasserstein_sorted};
use crate::model::{draw_signs_into, ModelParams};
use crate::rng::RngStream;

/// Absolute slack on ratio tests separating rounding from real violations.
pub const RATIO_TOLERANCE: f64 = 1e-9;

/// Smallest population accepted by [`contraction_test`].
pub const MIN_CONTRACTION_POPULATION: usize = 10_000;

/// A left-hand side compared against 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub lhs: f64,
    pub pass: bool,
}

impl Condition {
    fn new(lhs: f64) -> Self {
        Self { lhs, pass: lhs < 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    /// `min(4 beta, 1) (p - 1) p alpha < 1`: the system is in a pure state.
    pub pure_state: Condition,
    /// `(e^beta - 1) (p - 1) p alpha / 2 < 1`: the distributional map is a
    /// W1 contraction with this factor.
    pub contraction: Condition,
    /// `(p - 1) p alpha beta exp(2 beta + alpha p (e^{2 beta} - 1)) < 1`.
    pub small_beta: Condition,
    /// `(p - 1) p alpha < 1`.
    pub small_alpha: Condition,
}

pub fn region_check(params: &ModelParams) -> Result<RegionReport> {
    params.validate()?;
    let (p, alpha, beta) = (params.p as f64, params.alpha, params.beta);
    let degree = (p - 1.0) * p * alpha;
    let weight = (p - 1.0) * p * alpha * beta;
    let small_beta = if weight == 0.0 {
        0.0
    } else {
        let log_lhs = weight.ln() + 2.0 * beta + alpha * p * (2.0 * beta).exp_m1();
        // Past zero the condition already fails; saturate instead of overflowing.
        if log_lhs > 0.0 {
            log_lhs.min(f64::MAX.ln()).exp().min(f64::MAX)
        } else {
            log_lhs.exp()
        }
    };
    Ok(RegionReport {
        pure_state: Condition::new((4.0 * beta).min(1.0) * degree),
        contraction: Condition::new(0.5 * beta.exp_m1() * degree),
        small_beta: Condition::new(small_beta),
        small_alpha: Condition::new(degree),
    })
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// `lo, lo + step, ...` up to `hi`, computed by multiplication.
pub fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || hi < lo {
        return vec![];
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub p: Vec<usize>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

pub const DEFAULT_ALPHA_POINTS: usize = 200;

impl Default for RegionGrid {
    /// `p` in 2..=6, 200 log-spaced `alpha` in `[1e-3, 10]`, `beta` in
    /// `(0, 4]` with step 0.01.
    fn default() -> Self {
        Self {
            p: (2..=6).collect(),
            alpha: logspace(1e-3, 10.0, DEFAULT_ALPHA_POINTS),
            beta: (1..=400).map(|k| k as f64 * 0.01).collect(),
        }
    }
}

impl RegionGrid {
    pub fn len(&self) -> usize {
        self.p.len() * self.alpha.len() * self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.p.iter().flat_map(move |&p| {
            self.alpha
                .iter()
                .flat_map(move |&a| self.beta.iter().map(move |&b| (p, a, b)))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridViolation {
    pub p: usize,
    pub alpha: f64,
    pub beta: f64,
    pub report: RegionReport,
}

/// Points where the pure-state condition holds but neither the small-alpha
/// nor the small-beta condition does. The pure-state region is covered by
/// those two, so the list should come back empty.
pub fn coverage_scan(grid: &RegionGrid) -> Result<Vec<GridViolation>> {
    let mut out = Vec::new();
    for (p, alpha, beta) in grid.points() {
        let report = region_check(&ModelParams::new(p, alpha, beta, 0)?)?;
        if report.pure_state.pass && !(report.small_alpha.pass || report.small_beta.pass) {
            out.push(GridViolation { p, alpha, beta, report });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub trials: usize,
    pub skipped: usize,
    /// Largest `|T(s) - T(s')| / ((e^beta - 1)/2 * |s - s'|_1)` seen.
    pub max_ratio: f64,
    pub violations: usize,
}

/// Randomized check of the cavity-map Lipschitz bound
/// `|T(s) - T(s')| <= (e^beta - 1)/2 * sum |s_jk - s'_jk|` for fixed signs.
///
/// Each trial draws `r` uniformly in `1..=r_max`. Half the trials compare
/// independent inputs, the other half compare an input with a small
/// perturbation of it, where the bound is nearly tight.
pub fn lipschitz_test(params: &ModelParams, r_max: usize, n_trials: usize, rng: &RngStream) -> Result<LipschitzReport> {
    params.validate()?;
    if n_trials == 0 || r_max == 0 {
        return Err(invalid("lipschitz_test needs n_trials >= 1 and r_max >= 1"));
    }
    let p = params.p;
    let beta = params.beta;
    let penalty = (-beta).exp_m1();
    let constant = 0.5 * beta.exp_m1();
    let ratios: Vec<Option<f64>> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut s = rng.fork_index(t as u64);
            let r = s.random_range(1..=r_max);
            let mut signs = vec![0i8; r * p];
            draw_signs_into(&mut s, &mut signs);
            let a: Vec<f64> = (0..r * (p - 1)).map(|_| s.random_range(-1.0..=1.0)).collect();
            let b: Vec<f64> = if s.random::<bool>() {
                (0..r * (p - 1)).map(|_| s.random_range(-1.0..=1.0)).collect()
            } else {
                let h = 10f64.powf(-s.random_range(1.0..6.0));
                a.iter().map(|x| (x + s.random_range(-h..=h)).clamp(-1.0, 1.0)).collect()
            };
            let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            if l1 == 0.0 {
                return None;
            }
            let diff = (cavity_value(p, &signs, &a, penalty, beta) - cavity_value(p, &signs, &b, penalty, beta)).abs();
            let bound = constant * l1;
            Some(if bound > 0.0 {
                diff / bound
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            })
        })
        .collect();
    let checked: Vec<f64> = ratios.iter().flatten().copied().collect();
    Ok(LipschitzReport {
        trials: n_trials,
        skipped: n_trials - checked.len(),
        max_ratio: checked.iter().copied().fold(0.0, f64::max),
        violations: checked.iter().filter(|&&x| x > 1.0 + RATIO_TOLERANCE).count(),
    })
}

/// How [`contraction_test`] chooses its starting pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSource {
    /// Every pair is (all +1, all -1).
    Extremes,
    /// Each population uniform on its own random subinterval of `[-1, 1]`.
    Random,
    /// First pair extreme, the rest random.
    #[default]
    Mixed,
}

impl std::str::FromStr for PairSource {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extremes" => Ok(Self::Extremes),
            "random" => Ok(Self::Random),
            "mixed" => Ok(Self::Mixed),
            other => Err(invalid(format!("unknown pair source `{other}` (expected extremes, random, mixed)"))),
        }
    }
}

fn random_interval_population(m: usize, rng: &mut RngStream) -> Result<Population> {
    let (x, y) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
    let (lo, hi): (f64, f64) = if x <= y { (x, y) } else { (y, x) };
    Population::new((0..m).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
}

/// Applies one population step to both inputs with all randomness shared.
/// Both populations are sorted first, so resampling index `i` from each
/// picks the same quantile: the optimal coupling between them.
pub fn coupled_step(a: &Population, b: &Population, params: &ModelParams, rng: &RngStream) -> Result<(Population, Population)> {
    if a.len() != b.len() {
        return Err(crate::error::Error::SizeMismatch(a.len(), b.len()));
    }
    Ok((
        population_step(&a.sorted(), params, rng)?,
        population_step(&b.sorted(), params, rng)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub ratios: Vec<f64>,
    pub skipped: usize,
    pub mean_ratio: f64,
    /// Contraction factor `(e^beta - 1)(p - 1) p alpha / 2`.
    pub bound: f64,
    /// Sampling slack `5 / sqrt(M)` allowed on the mean ratio.
    pub slack: f64,
    pub within_bound: bool,
}

pub fn contraction_test(
    params: &ModelParams,
    m: usize,
    n_pairs: usize,
    source: PairSource,
    rng: &RngStream,
) -> Result<ContractionReport> {
    params.validate()?;
    if m < MIN_CONTRACTION_POPULATION {
        return Err(invalid(format!(
            "population size {m} is below the minimum {MIN_CONTRACTION_POPULATION}"
        )));
    }
    if n_pairs == 0 {
        return Err(invalid("contraction_test needs at least one pair"));
    }
    let pair_streams = rng.fork("pair");
    let step_streams = rng.fork("step");
    let mut ratios = Vec::with_capacity(n_pairs);
    let mut skipped = 0;
    for k in 0..n_pairs {
        let extreme = match source {
            PairSource::Extremes => true,
            PairSource::Random => false,
            PairSource::Mixed => k == 0,
        };
        let (a, b) = if extreme {
            (Population::new(vec![1.0; m])?, Population::new(vec![-1.0; m])?)
        } else {
            let mut s = pair_streams.fork_index(k as u64);
            (random_interval_population(m, &mut s)?, random_interval_population(m, &mut s)?)
        };
        let before = wasserstein_sorted(&sorted(a.members()), &sorted(b.members()))?;
        if before < 10.0 * f64::EPSILON {
            skipped += 1;
            continue;
        }
        let (ta, tb) = coupled_step(&a, &b, params, &step_streams.fork_index(k as u64))?;
        let after = wasserstein_sorted(&sorted(ta.members()), &sorted(tb.members()))?;
        ratios.push(after / before);
    }
    let mean_ratio = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    let bound = region_check(params)?.contraction.lhs;
    let slack = 5.0 / (m as f64).sqrt();
    Ok(ContractionReport {
        within_bound: mean_ratio <= bound + slack,
        ratios,
        skipped,
        mean_ratio,
        bound,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: usize, alpha: f64, beta: f64) -> ModelParams {
        ModelParams::new(p, alpha, beta, 3).unwrap()
    }

    #[test]
    fn reference_point() {
        let r = region_check(&params(3, 0.05, 1.0)).unwrap();
        assert!((r.pure_state.lhs - 0.3).abs() < 1e-15);
        assert!(r.pure_state.pass);
        let want = 0.5 * (1f64.exp() - 1.0) * 0.3;
        assert!((r.contraction.lhs - want).abs() < 1e-15);
        assert!((r.contraction.lhs - 0.2577).abs() < 1e-4);
        assert!(r.contraction.pass);
    }

    #[test]
    fn infinite_temperature_passes_everything() {
        for (p, alpha) in [(2, 1.0), (5, 30.0)] {
            let r = region_check(&params(p, alpha, 0.0)).unwrap();
            assert_eq!(r.pure_state.lhs, 0.0);
            assert_eq!(r.contraction.lhs, 0.0);
            assert_eq!(r.small_beta.lhs, 0.0);
            assert!(r.pure_state.pass && r.contraction.pass && r.small_beta.pass);
        }
    }

    #[test]
    fn contraction_fails_at_low_temperature() {
        let r = region_check(&params(2, 0.4, 2.0)).unwrap();
        assert!((r.pure_state.lhs - 0.8).abs() < 1e-15);
        assert!(r.pure_state.pass);
        assert!((r.contraction.lhs - 0.5 * (2f64.exp() - 1.0) * 0.8).abs() < 1e-14);
        assert!((r.contraction.lhs - 2.556).abs() < 1e-3);
        assert!(!r.contraction.pass);
    }

    #[test]
    fn small_beta_saturates_instead_of_overflowing() {
        let r = region_check(&params(6, 10.0, 4.0)).unwrap();
        assert!(r.small_beta.lhs.is_finite());
        assert!(!r.small_beta.pass);
    }

    #[test]
    fn small_beta_matches_direct_formula() {
        let (p, a, b) = (3.0, 0.02, 0.2);
        let r = region_check(&params(3, a, b)).unwrap();
        let direct = (p - 1.0) * p * a * b * (2.0 * b + a * p * ((2.0 * b).exp() - 1.0)).exp();
        assert!((r.small_beta.lhs - direct).abs() < 1e-14);
    }

    #[test]
    fn lhs_monotone_on_grid() {
        let alphas = logspace(1e-3, 10.0, 40);
        let betas = linspace_step(0.0, 4.0, 0.1);
        for p in 2..=6 {
            for pair in alphas.windows(2) {
                for &b in &betas {
                    let lo = region_check(&params(p, pair[0], b)).unwrap();
                    let hi = region_check(&params(p, pair[1], b)).unwrap();
                    assert!(lo.pure_state.lhs <= hi.pure_state.lhs);
                    assert!(lo.contraction.lhs <= hi.contraction.lhs);
                    assert!(lo.small_beta.lhs <= hi.small_beta.lhs);
                }
            }
            for &a in &alphas {
                for pair in betas.windows(2) {
                    let lo = region_check(&params(p, a, pair[0])).unwrap();
                    let hi = region_check(&params(p, a, pair[1])).unwrap();
                    assert!(lo.pure_state.lhs <= hi.pure_state.lhs);
                    assert!(lo.contraction.lhs <= hi.contraction.lhs);
                    assert!(lo.small_beta.lhs <= hi.small_beta.lhs);
                }
            }
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = RegionGrid::default();
        assert_eq!(g.p, vec![2, 3, 4, 5, 6]);
        assert_eq!(g.alpha.len(), DEFAULT_ALPHA_POINTS);
        assert!((g.alpha[0] - 1e-3).abs() < 1e-15 && (g.alpha[DEFAULT_ALPHA_POINTS - 1] - 10.0).abs() < 1e-12);
        assert_eq!(g.beta.len(), 400);
        assert_eq!(g.beta[399], 4.0);
        assert_eq!(g.points().count(), g.len());
    }

    #[test]
    fn scan_single_point_and_high_beta() {
        let single = RegionGrid { p: vec![3], alpha: vec![0.05], beta: vec![1.0] };
        assert!(coverage_scan(&single).unwrap().is_empty());

        let grid = RegionGrid {
            p: (2..=6).collect(),
            alpha: logspace(1e-3, 10.0, 60),
            beta: linspace_step(0.25, 4.0, 0.05),
        };
        for (p, a, b) in grid.points() {
            let r = region_check(&params(p, a, b)).unwrap();
            if r.pure_state.pass {
                assert!(r.small_alpha.pass, "p={p} alpha={a} beta={b}");
            }
        }
    }

    #[test]
    fn lipschitz_trivial_cases() {
        let rep = lipschitz_test(&params(3, 0.1, 0.0), 5, 2000, &RngStream::new(1, "l")).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.max_ratio, 0.0);
        assert!(lipschitz_test(&params(3, 0.1, 1.0), 0, 10, &RngStream::new(1, "l")).is_err());
    }

    #[test]
    fn lipschitz_holds() {
        let rep = lipschitz_test(&params(3, 0.1, 1.0), 5, 100_000, &RngStream::new(1, "l")).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.max_ratio > 0.0 && rep.max_ratio <= 1.0 + RATIO_TOLERANCE);
    }

    #[test]
    fn coupled_identical_inputs_stay_identical() {
        let pop = Population::preset(crate::cavity::Init::Uniform, 3000, &mut RngStream::new(2, "u")).unwrap();
        let (a, b) = coupled_step(&pop, &pop, &params(3, 0.3, 1.0), &RngStream::new(2, "c")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn contraction_trivial_and_validation() {
        let rep = contraction_test(&params(3, 0.05, 0.0), 10_000, 3, PairSource::Mixed, &RngStream::new(1, "c")).unwrap();
        assert!(rep.ratios.iter().all(|&r| r == 0.0));
        assert!(contraction_test(&params(3, 0.05, 1.0), 9_999, 3, PairSource::Mixed, &RngStream::new(1, "c")).is_err());
    }

    #[test]
    fn contraction_within_bound_small() {
        let rep = contraction_test(&params(3, 0.05, 1.0), 10_000, 4, PairSource::Mixed, &RngStream::new(1, "c")).unwrap();
        assert_eq!(rep.ratios.len(), 4);
        assert!(rep.within_bound, "{rep:?}");
    }

    #[test]
    fn grid_helpers() {
        assert_eq!(linspace_step(0.0, 1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(linspace_step(1.0, 0.0, 0.1).is_empty());
        assert_eq!(logspace(1.0, 100.0, 1), vec![1.0]);
        let l = logspace(1.0, 100.0, 3);
        assert!((l[1] - 10.0).abs() < 1e-12);
    }
}
