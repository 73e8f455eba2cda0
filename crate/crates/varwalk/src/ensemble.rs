//! Monte-Carlo harness: convergence-probability curves over independent
//! runs, algebraic-rate fits against the predicted exponents, basin
//! statistics over multiple minimizers, and A/B policy comparison.
//!
//! Every run's seed is derived from `(master_seed, run_index)`, and
//! aggregation is an index-ordered reduction, so results are bitwise
//! identical under any parallel schedule.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::optimizer::{run_with_observer, IterationConfig};
use crate::seed::derive_run_seed;
use crate::stats::{mean, median, ols_line, wilson_interval};

/// Convergence threshold: either a fixed radius δ or a shrinking radius
/// `n^(−ν)` evaluated at each checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceRadius {
    Fixed { delta: f64 },
    Shrinking { nu: f64 },
}

impl ConvergenceRadius {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConvergenceRadius::Fixed { delta } => {
                if delta > 0.0 && delta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("convergence radius: delta must be positive"))
                }
            }
            ConvergenceRadius::Shrinking { nu } => {
                if nu > 0.0 && nu.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("convergence radius: nu must be positive"))
                }
            }
        }
    }

    pub fn radius_at(&self, n: u64) -> f64 {
        match *self {
            ConvergenceRadius::Fixed { delta } => delta,
            ConvergenceRadius::Shrinking { nu } => (n as f64).powf(-nu),
        }
    }
}

/// Configuration of one ensemble: the per-run iteration config, the number
/// of i.i.d. runs, the checkpoint grid, the convergence radius, optional
/// explicit targets (defaulting to the objective's declared minimizers),
/// the master seed, and an optional shared fixed starting point.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub base: IterationConfig,
    pub runs: u64,
    pub checkpoints: Vec<u64>,
    pub radius: ConvergenceRadius,
    pub targets: Option<Vec<Vec<f64>>>,
    pub master_seed: u64,
    pub fixed_start: Option<Vec<f64>>,
}

impl EnsembleConfig {
    pub fn new(base: IterationConfig, runs: u64, checkpoints: Vec<u64>, delta: f64) -> Self {
        EnsembleConfig {
            base,
            runs,
            checkpoints,
            radius: ConvergenceRadius::Fixed { delta },
            targets: None,
            master_seed: 0,
            fixed_start: None,
        }
    }

    pub fn validate(&self, objective: &Objective) -> Result<()> {
        self.base.validate()?;
        self.radius.validate()?;
        if self.runs < 2 {
            return Err(Error::invalid("ensemble: at least 2 runs required"));
        }
        let mut prev = 0u64;
        for &c in &self.checkpoints {
            if c == 0 {
                return Err(Error::invalid("ensemble: checkpoints start at iteration 1"));
            }
            if c <= prev && prev != 0 {
                return Err(Error::invalid("ensemble: checkpoints must be strictly increasing"));
            }
            if c > self.base.max_iters {
                return Err(Error::invalid(format!(
                    "ensemble: checkpoint {c} exceeds max_iters {}",
                    self.base.max_iters
                )));
            }
            prev = c;
        }
        if let Some(ts) = &self.targets {
            if ts.is_empty() {
                return Err(Error::invalid("ensemble: explicit target list is empty"));
            }
            for t in ts {
                objective.domain().check_dim(t)?;
            }
        } else if objective.minimizers().is_none() {
            return Err(Error::invalid(
                "ensemble: objective declares no minimizers and no targets were configured",
            ));
        }
        if let Some(x0) = &self.fixed_start {
            objective.domain().check_dim(x0)?;
        }
        Ok(())
    }

    fn resolved_targets(&self, objective: &Objective) -> Vec<Vec<f64>> {
        match &self.targets {
            Some(ts) => ts.clone(),
            None => objective.minimizers().unwrap_or_default().to_vec(),
        }
    }
}

/// One checkpoint of a convergence curve: `p_hat` is the fraction of runs
/// whose iterate sits farther than the radius from every target, with its
/// 95% Wilson interval, plus the mean and median objective value.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurvePoint {
    pub n: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_f: f64,
    pub median_f: f64,
}

/// Aggregated non-convergence probability curve of one ensemble.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvergenceCurve {
    pub points: Vec<CurvePoint>,
    pub runs: u64,
}

struct RunOutcome {
    /// Torus distance to the nearest target at each checkpoint.
    dists: Vec<f64>,
    /// Objective value at each checkpoint.
    fs: Vec<f64>,
    final_x: Vec<f64>,
}

fn run_outcomes(objective: &Objective, config: &EnsembleConfig) -> Result<Vec<RunOutcome>> {
    config.validate(objective)?;
    let targets = config.resolved_targets(objective);
    let domain = objective.domain();
    let results: Vec<Result<RunOutcome>> = (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.base.clone();
            cfg.seed = derive_run_seed(config.master_seed, i);
            // Ensemble aggregation never reads intermediate records; keep
            // only the endpoints to bound memory. The stride does not
            // affect the dynamics or the RNG stream.
            cfg.record_stride = cfg.max_iters.max(1);
            let mut dists = Vec::with_capacity(config.checkpoints.len());
            let mut fs = Vec::with_capacity(config.checkpoints.len());
            let mut next = 0usize;
            let traj = run_with_observer(
                &cfg,
                objective,
                config.fixed_start.as_deref(),
                &mut |state| {
                    if next < config.checkpoints.len() && state.n() == config.checkpoints[next] {
                        let d = targets
                            .iter()
                            .map(|t| domain.torus_distance(state.x(), t).expect("dim checked"))
                            .fold(f64::INFINITY, f64::min);
                        dists.push(d);
                        fs.push(state.f());
                        next += 1;
                    }
                },
            )?;
            Ok(RunOutcome { dists, fs, final_x: traj.final_x })
        })
        .collect();
    results.into_iter().collect()
}

/// Estimate `P(torus distance to nearest target > radius)` at each
/// checkpoint over `runs` independent trajectories.
pub fn estimate_probability_curve(
    objective: &Objective,
    config: &EnsembleConfig,
) -> Result<ConvergenceCurve> {
    let outcomes = run_outcomes(objective, config)?;
    let mut points = Vec::with_capacity(config.checkpoints.len());
    for (ci, &n) in config.checkpoints.iter().enumerate() {
        let radius = config.radius.radius_at(n);
        let successes = outcomes.iter().filter(|o| o.dists[ci] > radius).count() as u64;
        let (ci_low, ci_high) = wilson_interval(successes, config.runs)?;
        let fs: Vec<f64> = outcomes.iter().map(|o| o.fs[ci]).collect();
        points.push(CurvePoint {
            n,
            p_hat: successes as f64 / config.runs as f64,
            ci_low,
            ci_high,
            mean_f: mean(&fs)?,
            median_f: median(&fs)?,
        });
    }
    Ok(ConvergenceCurve { points, runs: config.runs })
}

/// Predicted algebraic exponents for schedule exponent α, variance
/// exponent β, and dimension d: `γ = 1 − (d/2β + 3/2)·α` and
/// `κ = min(γ, (1 − d/2β)·α)`. The prediction `applies` when
/// `α ∈ (0, 1/2] ∩ (0, 2β/(d+3β))`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TheoryPrediction {
    pub gamma: f64,
    pub kappa: f64,
    pub applies: bool,
}

pub fn theory_exponents(alpha: f64, beta: f64, dim: usize) -> Result<TheoryPrediction> {
    if !(alpha > 0.0) || !(beta > 0.0) || dim == 0 {
        return Err(Error::invalid("theory_exponents: need alpha > 0, beta > 0, dim >= 1"));
    }
    let d = dim as f64;
    let ratio = d / (2.0 * beta);
    let gamma = 1.0 - (ratio + 1.5) * alpha;
    let kappa = gamma.min((1.0 - ratio) * alpha);
    let applies = alpha <= 0.5 && alpha < 2.0 * beta / (d + 3.0 * beta);
    Ok(TheoryPrediction { gamma, kappa, applies })
}

/// Log-log rate fit of a convergence curve over a checkpoint window.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RateReport {
    pub fit_window: (u64, u64),
    /// Slope of `log p_hat` against `log n` (≈ −κ when the prediction
    /// holds).
    pub slope: f64,
    pub slope_stderr: f64,
    /// κ, attached when the supplied prediction applies.
    pub predicted: Option<f64>,
}

/// Default fit window: the last decade of iterations.
pub fn default_fit_window(max_iters: u64) -> (u64, u64) {
    ((max_iters / 10).max(1), max_iters)
}

/// Ordinary least squares of `log p_hat` against `log n` over checkpoints
/// inside `window` with `p_hat > 0`.
pub fn fit_algebraic_rate(
    curve: &ConvergenceCurve,
    window: (u64, u64),
    theory: Option<TheoryPrediction>,
) -> Result<RateReport> {
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in &curve.points {
        if p.n >= lo && p.n <= hi && p.p_hat > 0.0 {
            xs.push((p.n as f64).ln());
            ys.push(p.p_hat.ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::degenerate_fit(format!(
            "rate fit needs >= 3 checkpoints with positive p_hat in [{lo}, {hi}]; found {}",
            xs.len()
        )));
    }
    let (slope, _, slope_stderr) = ols_line(&xs, &ys)?;
    Ok(RateReport {
        fit_window: window,
        slope,
        slope_stderr,
        predicted: theory.filter(|t| t.applies).map(|t| t.kappa),
    })
}

/// Terminal-iterate classification against the declared minimizers.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BasinReport {
    pub minimizers: Vec<Vec<f64>>,
    /// Runs whose terminal iterate lies within the radius of each
    /// minimizer (ties resolved to the nearest).
    pub counts: Vec<u64>,
    pub fractions: Vec<f64>,
    pub residual_count: u64,
    pub residual: f64,
    pub runs: u64,
}

/// Classify each run's terminal iterate to the nearest target within the
/// radius (evaluated at the final iteration), else to the residual class.
pub fn basin_statistics(objective: &Objective, config: &EnsembleConfig) -> Result<BasinReport> {
    let outcomes = run_outcomes(objective, config)?;
    let targets = config.resolved_targets(objective);
    let domain = objective.domain();
    let radius = config.radius.radius_at(config.base.max_iters);
    let mut counts = vec![0u64; targets.len()];
    let mut residual_count = 0u64;
    for o in &outcomes {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (ti, t) in targets.iter().enumerate() {
            let d = domain.torus_distance(&o.final_x, t)?;
            if d < best_d {
                best_d = d;
                best = ti;
            }
        }
        if best_d <= radius {
            counts[best] += 1;
        } else {
            residual_count += 1;
        }
    }
    let r = config.runs as f64;
    Ok(BasinReport {
        minimizers: targets,
        fractions: counts.iter().map(|&c| c as f64 / r).collect(),
        counts,
        residual_count,
        residual: residual_count as f64 / r,
        runs: config.runs,
    })
}

/// Pairwise outcome at one checkpoint: `lower` is the variant index with
/// strictly lower `p_hat` (`None` for an exact tie); `ci_overlap` reports
/// whether the two Wilson intervals intersect.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PairwiseDominance {
    pub a: usize,
    pub b: usize,
    pub lower: Option<usize>,
    pub ci_overlap: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CheckpointDominance {
    pub n: u64,
    pub pairs: Vec<PairwiseDominance>,
}

/// Aligned curves for several policies plus the per-checkpoint dominance
/// summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonTable {
    pub names: Vec<String>,
    pub curves: Vec<ConvergenceCurve>,
    pub checkpoints: Vec<u64>,
    pub dominance: Vec<CheckpointDominance>,
}

/// Compare several policies on one objective. All variants must share the
/// checkpoint grid, run count, and radius definition so the curves align.
pub fn compare_policies(
    objective: &Objective,
    variants: &[(String, EnsembleConfig)],
) -> Result<ComparisonTable> {
    if variants.len() < 2 {
        return Err(Error::invalid("compare_policies needs at least two variants"));
    }
    let (_, first) = &variants[0];
    for (name, cfg) in variants.iter().skip(1) {
        if cfg.checkpoints != first.checkpoints {
            return Err(Error::invalid(format!(
                "compare_policies: variant '{name}' has a mismatched checkpoint grid"
            )));
        }
        if cfg.runs != first.runs {
            return Err(Error::invalid(format!(
                "compare_policies: variant '{name}' has a mismatched run count"
            )));
        }
        if cfg.radius != first.radius {
            return Err(Error::invalid(format!(
                "compare_policies: variant '{name}' has a mismatched convergence radius"
            )));
        }
    }
    let mut names = Vec::with_capacity(variants.len());
    let mut curves = Vec::with_capacity(variants.len());
    for (name, cfg) in variants {
        names.push(name.clone());
        curves.push(estimate_probability_curve(objective, cfg)?);
    }
    let mut dominance = Vec::with_capacity(first.checkpoints.len());
    for (ci, &n) in first.checkpoints.iter().enumerate() {
        let mut pairs = Vec::new();
        for a in 0..curves.len() {
            for b in (a + 1)..curves.len() {
                let pa = &curves[a].points[ci];
                let pb = &curves[b].points[ci];
                let lower = if pa.p_hat < pb.p_hat {
                    Some(a)
                } else if pb.p_hat < pa.p_hat {
                    Some(b)
                } else {
                    None
                };
                let ci_overlap = pa.ci_low <= pb.ci_high && pb.ci_low <= pa.ci_high;
                pairs.push(PairwiseDominance { a, b, lower, ci_overlap });
            }
        }
        dominance.push(CheckpointDominance { n, pairs });
    }
    Ok(ComparisonTable { names, curves, checkpoints: first.checkpoints.clone(), dominance })
}
