//! Stochastic iteration kernels and run orchestration.
//!
//! Two update rules share one state machine: the derivative-free kernel
//! `X_{n+1} = wrap(X_n + √η·σ_n·ζ_n)` and the gradient-assisted kernel
//! `X_{n+1} = wrap(X_n − η_g·Ḡ(X_n) + η·σ_n·ζ_n)`, where `σ_n` comes from
//! the configured variance rule and `Ḡ` is either a weighted secant
//! estimate over the recent history or the objective's exact gradient.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::noise::{EpsilonSchedule, FMinEstimator, FMinState, VarianceRule, VarianceState};
use crate::objective::Objective;

/// Prefactor applied to `σ_n·ζ_n`.
///
/// The derivative-free kernel defaults to `√η` (so η rescales time); the
/// gradient-assisted kernel defaults to the plain factor `η`. Both are
/// selectable so either convention can be reproduced exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseScaling {
    SqrtEta,
    Eta,
}

/// Where the gradient-assisted kernel gets its drift vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradSource {
    /// Weighted secant estimate over the iterate history.
    Secant,
    /// The objective's exact gradient (errors if unavailable).
    Analytic,
}

/// Full per-run configuration: kernel parameters, variance policy,
/// minimum-estimation mode, and run limits.
#[derive(Debug, Clone)]
pub struct IterationConfig {
    /// Noise step scale η > 0.
    pub eta: f64,
    /// Gradient step scale η_g ≥ 0 (ignored when `grad_window = 0`).
    pub eta_g: f64,
    pub rule: VarianceRule,
    pub eps_schedule: EpsilonSchedule,
    pub fmin_estimator: FMinEstimator,
    /// Number of secant terms I; 0 selects the derivative-free kernel.
    pub grad_window: usize,
    /// Geometric weight decay γ_w ∈ (0,1) for secant terms (used when
    /// `grad_window ≥ 1`).
    pub grad_decay: f64,
    pub grad_source: GradSource,
    /// `None` resolves to `SqrtEta` for the derivative-free kernel and
    /// `Eta` for the gradient-assisted one.
    pub noise_scaling: Option<NoiseScaling>,
    pub max_iters: u64,
    pub seed: u64,
    /// Keep every `record_stride`-th record (the initial and terminal
    /// states are always kept).
    pub record_stride: u64,
}

impl IterationConfig {
    /// Derivative-free configuration with the conventional defaults
    /// (η = 1, no gradient term, every iterate recorded).
    pub fn new(
        rule: VarianceRule,
        eps_schedule: EpsilonSchedule,
        fmin_estimator: FMinEstimator,
        max_iters: u64,
    ) -> Self {
        IterationConfig {
            eta: 1.0,
            eta_g: 0.0,
            rule,
            eps_schedule,
            fmin_estimator,
            grad_window: 0,
            grad_decay: 0.5,
            grad_source: GradSource::Secant,
            noise_scaling: None,
            max_iters,
            seed: 0,
            record_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta must be positive and finite"));
        }
        if !(self.eta_g >= 0.0 && self.eta_g.is_finite()) {
            return Err(Error::invalid("eta_g must be nonnegative and finite"));
        }
        if self.grad_window >= 1 && !(self.grad_decay > 0.0 && self.grad_decay < 1.0) {
            return Err(Error::invalid("grad_decay must lie in (0, 1) when grad_window >= 1"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be >= 1"));
        }
        self.rule.validate()?;
        self.eps_schedule.validate()?;
        self.fmin_estimator.validate()?;
        Ok(())
    }

    pub fn resolved_noise_scaling(&self) -> NoiseScaling {
        self.noise_scaling.unwrap_or(if self.grad_window >= 1 {
            NoiseScaling::Eta
        } else {
            NoiseScaling::SqrtEta
        })
    }

}

/// One derivative-free update: `wrap(x + factor·σ·ζ)` with `factor` given
/// by the scaling convention. Pure; exposed for direct kernel checks.
pub fn derivative_free_update(
    x: &[f64],
    sigma: f64,
    zeta: &[f64],
    eta: f64,
    scaling: NoiseScaling,
    domain: &DomainSpec,
) -> Result<Vec<f64>> {
    if x.len() != zeta.len() {
        return Err(Error::invalid("kernel update: dimension mismatch"));
    }
    let factor = match scaling {
        NoiseScaling::SqrtEta => eta.sqrt(),
        NoiseScaling::Eta => eta,
    };
    let moved: Vec<f64> = x.iter().zip(zeta).map(|(xi, zi)| xi + factor * sigma * zi).collect();
    domain.wrap(&moved)
}

/// One gradient-assisted update: `wrap(x − η_g·g + factor·σ·ζ)`.
pub fn gradient_assisted_update(
    x: &[f64],
    grad: &[f64],
    sigma: f64,
    zeta: &[f64],
    eta: f64,
    eta_g: f64,
    scaling: NoiseScaling,
    domain: &DomainSpec,
) -> Result<Vec<f64>> {
    if x.len() != zeta.len() || x.len() != grad.len() {
        return Err(Error::invalid("kernel update: dimension mismatch"));
    }
    let factor = match scaling {
        NoiseScaling::SqrtEta => eta.sqrt(),
        NoiseScaling::Eta => eta,
    };
    let moved: Vec<f64> = x
        .iter()
        .zip(grad)
        .zip(zeta)
        .map(|((xi, gi), zi)| xi - eta_g * gi + factor * sigma * zi)
        .collect();
    domain.wrap(&moved)
}

/// Weighted secant estimate of the gradient from an ordered history of
/// (point, value) pairs (oldest first, current point last).
///
/// Term `i` (i = 1 the most recent pair) uses the minimal-image
/// displacement `Δ_i`; its contribution is `(Δf_i/|Δ_i|²)·Δ_i` with weight
/// proportional to `decay^i`, normalized over the included terms.
/// Coincident consecutive points contribute no term. Returns the zero
/// vector and `true` when no valid term exists.
pub fn secant_gradient(
    history: &[(Vec<f64>, f64)],
    domain: &DomainSpec,
    decay: f64,
    window: usize,
) -> Result<(Vec<f64>, bool)> {
    let d = domain.dim();
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::invalid("secant gradient: decay must lie in (0, 1)"));
    }
    let mut grad = vec![0.0; d];
    let pairs = history.len().saturating_sub(1).min(window);
    if pairs == 0 {
        return Ok((grad, true));
    }
    let newest = history.len() - 1;
    let mut weight_sum = 0.0;
    let mut weight = 1.0;
    for i in 1..=pairs {
        weight *= decay; // decay^i
        let (ref x_new, f_new) = history[newest - i + 1];
        let (ref x_old, f_old) = history[newest - i];
        let disp = domain.min_image_disp(x_new, x_old)?;
        let norm2: f64 = disp.iter().map(|c| c * c).sum();
        if norm2 == 0.0 {
            continue;
        }
        let coeff = weight * (f_new - f_old) / norm2;
        for (g, dl) in grad.iter_mut().zip(&disp) {
            *g += coeff * dl;
        }
        weight_sum += weight;
    }
    if weight_sum == 0.0 {
        return Ok((vec![0.0; d], true));
    }
    for g in &mut grad {
        *g /= weight_sum;
    }
    Ok((grad, false))
}

/// Mutable state of one run: current iterate, its value, the minimum
/// estimate, the secant history, the variance rule's cutoff, and the RNG.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    n: u64,
    x: Vec<f64>,
    f_x: f64,
    fmin: FMinState,
    variance: VarianceState,
    history: VecDeque<(Vec<f64>, f64)>,
    rng: ChaCha8Rng,
    degenerate_grad_steps: u64,
}

impl OptimizerState {
    /// Initialize with a uniform starting point drawn from the run's RNG.
    pub fn init(config: &IterationConfig, objective: &Objective) -> Result<Self> {
        Self::init_inner(config, objective, None)
    }

    /// Initialize at a caller-fixed starting point (must lie in the domain
    /// in canonical coordinates after wrapping).
    pub fn init_at(config: &IterationConfig, objective: &Objective, x0: &[f64]) -> Result<Self> {
        Self::init_inner(config, objective, Some(x0))
    }

    fn init_inner(
        config: &IterationConfig,
        objective: &Objective,
        x0: Option<&[f64]>,
    ) -> Result<Self> {
        config.validate()?;
        let domain = objective.domain();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let x = match x0 {
            Some(p) => {
                domain.check_dim(p)?;
                domain.wrap(p)?
            }
            None => domain.sample_uniform(&mut rng),
        };
        let f_x = objective.evaluate(&x);
        if !f_x.is_finite() {
            return Err(Error::numerical(format!("objective non-finite at start: f = {f_x}")));
        }
        let f_explore0 = if matches!(config.fmin_estimator, FMinEstimator::HistoryMinExplore { .. })
        {
            let y = domain.sample_uniform(&mut rng);
            let fy = objective.evaluate(&y);
            if !fy.is_finite() {
                return Err(Error::numerical("objective non-finite at initial explore sample"));
            }
            Some(fy)
        } else {
            None
        };
        let fmin = FMinState::init(config.fmin_estimator, f_x, f_explore0)?;
        let mut history = VecDeque::new();
        if config.grad_window >= 1 {
            history.push_back((x.clone(), f_x));
        }
        Ok(OptimizerState {
            n: 0,
            x,
            f_x,
            fmin,
            variance: VarianceState::new(config.rule),
            history,
            rng,
            degenerate_grad_steps: 0,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn f(&self) -> f64 {
        self.f_x
    }

    pub fn fmin_estimate(&self) -> f64 {
        self.fmin.estimate()
    }

    /// Steps on which the secant estimate had no valid term and the drift
    /// fell back to zero.
    pub fn degenerate_grad_steps(&self) -> u64 {
        self.degenerate_grad_steps
    }

    /// Noise amplitude the next step will use: the variance rule evaluated
    /// at the current value with the step-(n+1) regularization and cutoff.
    /// This is also the `sigma` field recorded for the current state.
    pub fn sigma_next(&self, config: &IterationConfig) -> Result<f64> {
        let k = self.n + 1;
        let eps = config.eps_schedule.epsilon_at(k)?;
        let est = self.fmin.estimate();
        if matches!(config.rule, VarianceRule::TwoStage { .. }) {
            let mut preview = self.variance.clone();
            preview.update_cutoff(k, est)?;
            preview.sigma(self.f_x, est, eps)
        } else {
            self.variance.sigma(self.f_x, est, eps)
        }
    }

    /// Advance one iteration. The kernel is selected by `grad_window`
    /// (0 → derivative-free); the RNG draw order is fixed: d standard
    /// normals, then d uniforms when an explore sample is due.
    pub fn step(&mut self, config: &IterationConfig, objective: &Objective) -> Result<()> {
        let domain = objective.domain();
        let d = domain.dim();
        let k = self.n + 1;

        let eps = config.eps_schedule.epsilon_at(k)?;
        let est = self.fmin.estimate();
        if matches!(config.rule, VarianceRule::TwoStage { .. }) {
            self.variance.update_cutoff(k, est)?;
        }
        let sigma = self.variance.sigma(self.f_x, est, eps)?;
        if !sigma.is_finite() {
            return Err(Error::numerical(format!("sigma non-finite at iteration {k}")));
        }

        let zeta: Vec<f64> = (0..d).map(|_| self.rng.sample(StandardNormal)).collect();

        let x_new = if config.grad_window >= 1 {
            let grad = match config.grad_source {
                GradSource::Secant => {
                    let hist: &[(Vec<f64>, f64)] = self.history.make_contiguous();
                    let (g, degenerate) =
                        secant_gradient(hist, domain, config.grad_decay, config.grad_window)?;
                    if degenerate {
                        self.degenerate_grad_steps += 1;
                    }
                    g
                }
                GradSource::Analytic => objective.gradient(&self.x)?,
            };
            gradient_assisted_update(
                &self.x,
                &grad,
                sigma,
                &zeta,
                config.eta,
                config.eta_g,
                config.resolved_noise_scaling(),
                domain,
            )?
        } else {
            derivative_free_update(
                &self.x,
                sigma,
                &zeta,
                config.eta,
                config.resolved_noise_scaling(),
                domain,
            )?
        };

        let f_new = objective.evaluate(&x_new);
        if !f_new.is_finite() {
            return Err(Error::numerical(format!(
                "objective non-finite at iteration {k}: f = {f_new}"
            )));
        }

        let f_explore = if self.fmin.wants_explore_sample(k) {
            let y = domain.sample_uniform(&mut self.rng);
            let fy = objective.evaluate(&y);
            if !fy.is_finite() {
                return Err(Error::numerical(format!(
                    "objective non-finite at explore sample, iteration {k}"
                )));
            }
            Some(fy)
        } else {
            None
        };

        self.fmin.update(f_new, f_explore)?;
        self.x = x_new;
        self.f_x = f_new;
        self.n = k;
        if config.grad_window >= 1 {
            self.history.push_back((self.x.clone(), self.f_x));
            while self.history.len() > config.grad_window + 1 {
                self.history.pop_front();
            }
        }
        Ok(())
    }
}

/// One logged state: iteration index, canonical point, value, the noise
/// amplitude the next step uses, and the current minimum estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrajectoryRecord {
    pub n: u64,
    pub x: Vec<f64>,
    pub f: f64,
    pub sigma: f64,
    pub fmin_est: f64,
}

/// Thinned log of a run plus its terminal state.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub final_x: Vec<f64>,
    pub final_f: f64,
    pub final_fmin_est: f64,
    pub iters: u64,
    pub degenerate_grad_steps: u64,
}

/// Run to completion from a uniform starting point.
pub fn run(config: &IterationConfig, objective: &Objective) -> Result<Trajectory> {
    run_inner(config, objective, None, &mut |_| {})
}

/// Run to completion from a fixed starting point.
pub fn run_from(config: &IterationConfig, objective: &Objective, x0: &[f64]) -> Result<Trajectory> {
    run_inner(config, objective, Some(x0), &mut |_| {})
}

/// Run to completion, invoking `observer` on the initial state and after
/// every step (regardless of the record stride).
pub fn run_with_observer(
    config: &IterationConfig,
    objective: &Objective,
    x0: Option<&[f64]>,
    observer: &mut dyn FnMut(&OptimizerState),
) -> Result<Trajectory> {
    run_inner(config, objective, x0, observer)
}

fn run_inner(
    config: &IterationConfig,
    objective: &Objective,
    x0: Option<&[f64]>,
    observer: &mut dyn FnMut(&OptimizerState),
) -> Result<Trajectory> {
    let mut state = match x0 {
        Some(p) => OptimizerState::init_at(config, objective, p)?,
        None => OptimizerState::init(config, objective)?,
    };
    observer(&state);
    let mut records = Vec::with_capacity(
        (config.max_iters / config.record_stride.max(1)) as usize + 2,
    );
    records.push(make_record(&state, config)?);
    for k in 1..=config.max_iters {
        state.step(config, objective)?;
        observer(&state);
        if k % config.record_stride == 0 || k == config.max_iters {
            records.push(make_record(&state, config)?);
        }
    }
    Ok(Trajectory {
        final_x: state.x.clone(),
        final_f: state.f_x,
        final_fmin_est: state.fmin.estimate(),
        iters: state.n,
        degenerate_grad_steps: state.degenerate_grad_steps,
        records,
    })
}

fn make_record(state: &OptimizerState, config: &IterationConfig) -> Result<TrajectoryRecord> {
    Ok(TrajectoryRecord {
        n: state.n,
        x: state.x.clone(),
        f: state.f_x,
        sigma: state.sigma_next(config)?,
        fmin_est: state.fmin.estimate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::objective::Objective;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn square_domain() -> DomainSpec {
        DomainSpec::cube(2, 0.0, 4.0).unwrap()
    }

    fn constant_objective(dim: usize, edge: f64, value: f64) -> Objective {
        let domain = DomainSpec::cube(dim, 0.0, edge).unwrap();
        Objective::custom(
            "constant",
            domain,
            move |_: &[f64]| value,
            None,
            Some(value),
            Some(vec![vec![edge / 2.0; dim]]),
        )
        .unwrap()
    }

    fn centered_quadratic(dim: usize, edge: f64) -> Objective {
        // f(x) = |x - center|^2 with exact gradient; edge large enough that
        // test trajectories stay far from the wrap seam.
        let center = edge / 2.0;
        let domain = DomainSpec::cube(dim, 0.0, edge).unwrap();
        Objective::custom(
            "centered_quadratic",
            domain,
            move |x: &[f64]| x.iter().map(|xi| (xi - center) * (xi - center)).sum(),
            Some(Arc::new(move |x: &[f64]| {
                x.iter().map(|xi| 2.0 * (xi - center)).collect()
            })),
            Some(0.0),
            Some(vec![vec![center; dim]]),
        )
        .unwrap()
    }

    fn base_config(max_iters: u64) -> IterationConfig {
        IterationConfig::new(
            VarianceRule::AdaptivePower { beta: 2.0 },
            EpsilonSchedule::Power { c: 1e-3, alpha: 0.6 },
            FMinEstimator::HistoryMin,
            max_iters,
        )
    }

    #[test]
    fn derivative_free_update_direct_arithmetic() {
        let x = derivative_free_update(
            &[2.0, 2.0],
            1.0,
            &[0.5, -0.5],
            1.0,
            NoiseScaling::SqrtEta,
            &square_domain(),
        )
        .unwrap();
        assert_eq!(x, vec![2.5, 1.5]);
    }

    #[test]
    fn zero_sigma_is_a_bitwise_fixed_point() {
        // Estimate above every objective value and a zero floor force
        // sigma = 0; the iterate must not move at all.
        let obj = Objective::cosine_quadratic(2).unwrap();
        let mut cfg = base_config(100);
        cfg.eps_schedule = EpsilonSchedule::Zero;
        cfg.fmin_estimator = FMinEstimator::Known { value: 2.0 };
        cfg.seed = 7;
        let traj = run(&cfg, &obj).unwrap();
        let x0 = traj.records[0].x.clone();
        for rec in &traj.records {
            assert_eq!(rec.x, x0);
            assert_eq!(rec.sigma, 0.0);
        }
    }

    #[test]
    fn noise_increments_match_random_walk_law() {
        // Constant objective, known estimate, constant floor: sigma = 1
        // exactly. Per-step minimal-image increments are N(0, eta·sigma^2)
        // per axis; check mean (4 SE) and variance (5%) over 1e5 steps.
        let obj = constant_objective(1, 100.0, 0.3);
        let mut cfg = IterationConfig::new(
            VarianceRule::AdaptivePower { beta: 1.0 },
            EpsilonSchedule::Constant { c: 0.5 },
            FMinEstimator::Known { value: 0.3 },
            100_000,
        );
        cfg.seed = 11;
        let traj = run(&cfg, &obj).unwrap();
        assert_eq!(traj.records.len(), 100_001);
        let mut incs = Vec::with_capacity(100_000);
        for w in traj.records.windows(2) {
            let d = obj.domain().min_image_disp(&w[1].x, &w[0].x).unwrap();
            incs.push(d[0]);
        }
        let n = incs.len() as f64;
        let mean = incs.iter().sum::<f64>() / n;
        let var = incs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se_mean = (1.0 / n).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean}, se {se_mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn noise_scaling_switch_rescales_variance() {
        let obj = constant_objective(1, 100.0, 0.3);
        let mut cfg = IterationConfig::new(
            VarianceRule::AdaptivePower { beta: 1.0 },
            EpsilonSchedule::Constant { c: 0.5 },
            FMinEstimator::Known { value: 0.3 },
            20_000,
        );
        cfg.seed = 13;
        // sqrt_eta with eta = 4: per-step variance = eta·sigma^2 = 4.
        cfg.eta = 4.0;
        cfg.noise_scaling = Some(NoiseScaling::SqrtEta);
        let var_sqrt = increment_variance(&run(&cfg, &obj).unwrap(), &obj);
        assert!((var_sqrt - 4.0).abs() / 4.0 < 0.05, "{var_sqrt}");
        // eta scaling with eta = 0.5: per-step variance = eta^2·sigma^2 = 0.25.
        cfg.eta = 0.5;
        cfg.noise_scaling = Some(NoiseScaling::Eta);
        let var_eta = increment_variance(&run(&cfg, &obj).unwrap(), &obj);
        assert!((var_eta - 0.25).abs() / 0.25 < 0.05, "{var_eta}");
    }

    fn increment_variance(traj: &Trajectory, obj: &Objective) -> f64 {
        let mut incs = Vec::new();
        for w in traj.records.windows(2) {
            let d = obj.domain().min_image_disp(&w[1].x, &w[0].x).unwrap();
            incs.push(d[0]);
        }
        let n = incs.len() as f64;
        let mean = incs.iter().sum::<f64>() / n;
        incs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn secant_of_linear_function_is_exact() {
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        let history = vec![(vec![0.0], 0.0), (vec![1.0], 1.0)];
        let (g, degenerate) = secant_gradient(&history, &domain, 0.5, 1).unwrap();
        assert!(!degenerate);
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn secant_of_constant_function_is_zero() {
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        let history = vec![(vec![0.5], 0.7), (vec![1.5], 0.7), (vec![2.5], 0.7)];
        let (g, degenerate) = secant_gradient(&history, &domain, 0.5, 2).unwrap();
        assert!(!degenerate);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn secant_of_quadratic_matches_midpoint_derivative() {
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        let history = vec![(vec![1.0], 1.0), (vec![1.2], 1.44)];
        let (g, _) = secant_gradient(&history, &domain, 0.5, 1).unwrap();
        assert!((g[0] - 2.2).abs() < 1e-12, "{}", g[0]);
    }

    #[test]
    fn secant_weights_are_geometric_and_normalized() {
        // f(x) = x^2 on three points: terms are the midpoint derivatives
        // 2.4 (recent) and 2.1 (older); with decay 0.5 the weights are
        // 2/3 and 1/3.
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        let history = vec![(vec![1.0], 1.0), (vec![1.1], 1.21), (vec![1.3], 1.69)];
        let (g, _) = secant_gradient(&history, &domain, 0.5, 2).unwrap();
        assert!((g[0] - (2.0 / 3.0 * 2.4 + 1.0 / 3.0 * 2.1)).abs() < 1e-12, "{}", g[0]);
        // Window 1 uses only the most recent pair.
        let (g1, _) = secant_gradient(&history, &domain, 0.5, 1).unwrap();
        assert!((g1[0] - 2.4).abs() < 1e-12);
    }

    #[test]
    fn secant_skips_coincident_pairs_and_flags_empty() {
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        // Older pair coincident: renormalizes onto the valid recent pair.
        let history = vec![(vec![1.0], 1.0), (vec![1.0], 1.0), (vec![1.2], 1.44)];
        let (g, degenerate) = secant_gradient(&history, &domain, 0.5, 2).unwrap();
        assert!(!degenerate);
        assert!((g[0] - 2.2).abs() < 1e-12);
        // All pairs coincident: zero vector, flagged.
        let stuck = vec![(vec![1.0], 1.0), (vec![1.0], 1.0)];
        let (g, degenerate) = secant_gradient(&stuck, &domain, 0.5, 1).unwrap();
        assert!(degenerate);
        assert_eq!(g, vec![0.0]);
        // Too-short history is also degenerate.
        let single = vec![(vec![1.0], 1.0)];
        let (_, degenerate) = secant_gradient(&single, &domain, 0.5, 3).unwrap();
        assert!(degenerate);
    }

    #[test]
    fn analytic_drift_contracts_toward_minimizer() {
        // sigma ≡ 0 (estimate above all values, zero floor) leaves pure
        // gradient descent; on a quadratic the distance to the minimizer
        // must strictly decrease every step.
        let obj = centered_quadratic(1, 10.0);
        let mut cfg = IterationConfig::new(
            VarianceRule::AdaptivePower { beta: 2.0 },
            EpsilonSchedule::Zero,
            FMinEstimator::Known { value: 100.0 },
            20,
        );
        cfg.grad_window = 1;
        cfg.grad_source = GradSource::Analytic;
        cfg.eta_g = 0.1;
        let traj = run_from(&cfg, &obj, &[7.0]).unwrap();
        let mut prev = f64::INFINITY;
        for rec in &traj.records {
            let dist = (rec.x[0] - 5.0).abs();
            assert!(dist < prev, "n = {}: {} !< {}", rec.n, dist, prev);
            prev = dist;
        }
        assert!(prev < 2.0 * 0.8f64.powi(20) + 1e-9);
    }

    #[test]
    fn secant_drift_from_fixed_point_is_degenerate() {
        // With sigma ≡ 0 and a single-point history the secant estimate
        // has no valid term, so the iterate never moves and every step is
        // counted as degenerate.
        let obj = centered_quadratic(1, 10.0);
        let mut cfg = IterationConfig::new(
            VarianceRule::AdaptivePower { beta: 2.0 },
            EpsilonSchedule::Zero,
            FMinEstimator::Known { value: 100.0 },
            5,
        );
        cfg.grad_window = 2;
        cfg.eta_g = 0.1;
        let traj = run_from(&cfg, &obj, &[7.0]).unwrap();
        assert_eq!(traj.final_x, vec![7.0]);
        assert_eq!(traj.degenerate_grad_steps, 5);
    }

    #[test]
    fn zero_gradient_step_matches_derivative_free_bitwise() {
        // eta_g = 0 with eta = 1 (where both scaling conventions coincide)
        // must reproduce the derivative-free trajectory exactly.
        let obj = Objective::cosine_quadratic(2).unwrap();
        let mut df = base_config(200);
        df.seed = 99;
        let mut ga = df.clone();
        ga.grad_window = 2;
        ga.eta_g = 0.0;
        ga.noise_scaling = Some(NoiseScaling::Eta);
        let t_df = run(&df, &obj).unwrap();
        let t_ga = run(&ga, &obj).unwrap();
        assert_eq!(t_df.records.len(), t_ga.records.len());
        for (a, b) in t_df.records.iter().zip(&t_ga.records) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.f, b.f);
        }
    }

    #[test]
    fn empty_run_keeps_only_initial_record() {
        let obj = Objective::cosine_quadratic(2).unwrap();
        let cfg = base_config(0);
        let traj = run(&cfg, &obj).unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.records[0].n, 0);
        assert_eq!(traj.iters, 0);
        assert_eq!(traj.final_x, traj.records[0].x);
    }

    #[test]
    fn fixed_seed_reproduces_bitwise() {
        let obj = Objective::cosine_quadratic(2).unwrap();
        let mut cfg = base_config(500);
        cfg.seed = 4242;
        cfg.fmin_estimator = FMinEstimator::HistoryMinExplore { thin: 3 };
        let a = run(&cfg, &obj).unwrap();
        let b = run(&cfg, &obj).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn records_are_canonical_thinned_and_monotone() {
        let obj = Objective::cosine_quadratic(2).unwrap();
        let mut cfg = base_config(1000);
        cfg.seed = 3;
        cfg.record_stride = 7;
        let traj = run(&cfg, &obj).unwrap();
        let mut prev_n = None;
        let mut prev_est = f64::INFINITY;
        for rec in &traj.records {
            if let Some(p) = prev_n {
                assert!(rec.n > p);
            }
            prev_n = Some(rec.n);
            // Canonical coordinates: wrapping is the identity.
            assert_eq!(obj.domain().wrap(&rec.x).unwrap(), rec.x);
            // History-min estimates never increase.
            assert!(rec.fmin_est <= prev_est);
            prev_est = rec.fmin_est;
        }
        // Terminal record present even though 1000 % 7 != 0.
        assert_eq!(traj.records.last().unwrap().n, 1000);
    }

    #[test]
    fn recorded_sigma_is_the_next_step_amplitude() {
        let obj = Objective::cosine_quadratic(2).unwrap();
        let mut cfg = base_config(50);
        cfg.seed = 21;
        let traj = run(&cfg, &obj).unwrap();
        for rec in &traj.records {
            let eps = cfg.eps_schedule.epsilon_at(rec.n + 1).unwrap();
            let surplus = (rec.f - rec.fmin_est).max(0.0);
            let expect = (2.0 * (surplus.powf(2.0) + eps)).sqrt();
            assert_eq!(rec.sigma, expect);
        }
    }

    #[test]
    fn two_stage_records_use_refreshed_cutoff() {
        let obj = Objective::cosine_quadratic(2).unwrap();
        let rule = VarianceRule::TwoStage {
            sigma_minus: 0.05,
            sigma_plus: 0.8,
            cutoff_scale: 1.0,
            cutoff_exponent: 0.5,
        };
        let mut cfg = IterationConfig::new(
            rule,
            EpsilonSchedule::Zero,
            FMinEstimator::Known { value: 0.0 },
            200,
        );
        cfg.seed = 17;
        let traj = run(&cfg, &obj).unwrap();
        for rec in &traj.records {
            let cutoff = rule.cutoff_at(rec.n + 1, rec.fmin_est).unwrap();
            let expect = if rec.f <= cutoff { 0.05 } else { 0.8 };
            assert_eq!(rec.sigma, expect, "n = {}", rec.n);
        }
        // Both branches must actually occur over the run.
        assert!(traj.records.iter().any(|r| r.sigma == 0.05));
        assert!(traj.records.iter().any(|r| r.sigma == 0.8));
    }

    #[test]
    fn observer_sees_every_state_in_order() {
        let obj = Objective::cosine_quadratic(1).unwrap();
        let mut cfg = base_config(25);
        cfg.record_stride = 10;
        let mut seen = Vec::new();
        run_with_observer(&cfg, &obj, None, &mut |s| seen.push(s.n())).unwrap();
        assert_eq!(seen, (0..=25).collect::<Vec<u64>>());
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let obj = Objective::cosine_quadratic(1).unwrap();
        let mut cfg = base_config(1);
        cfg.eta = 0.0;
        assert!(OptimizerState::init(&cfg, &obj).is_err());
        let mut cfg = base_config(1);
        cfg.record_stride = 0;
        assert!(OptimizerState::init(&cfg, &obj).is_err());
        let mut cfg = base_config(1);
        cfg.grad_window = 2;
        cfg.grad_decay = 1.0;
        assert!(OptimizerState::init(&cfg, &obj).is_err());
    }

    #[test]
    fn non_finite_objective_aborts_with_diagnostic() {
        let domain = DomainSpec::cube(1, 0.0, 4.0).unwrap();
        let obj = Objective::custom(
            "spiky",
            domain,
            |x: &[f64]| if x[0] > 2.0 { f64::INFINITY } else { x[0] },
            None,
            Some(0.0),
            Some(vec![vec![0.0]]),
        )
        .unwrap();
        let mut cfg = IterationConfig::new(
            VarianceRule::AdaptivePower { beta: 1.0 },
            EpsilonSchedule::Constant { c: 1.0 },
            FMinEstimator::Known { value: 0.0 },
            10_000,
        );
        cfg.seed = 5;
        let err = run_from(&cfg, &obj, &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn secant_equals_midpoint_derivative_on_quadratics(
            a in 0.1..5.0f64,
            c in -10.0..10.0f64,
            x1 in -20.0..20.0f64,
            gap in 0.01..5.0f64,
        ) {
            let domain = DomainSpec::cube(1, -100.0, 200.0).unwrap();
            let x2 = x1 + gap;
            let f = |x: f64| a * (x - c) * (x - c);
            let history = vec![(vec![x1], f(x1)), (vec![x2], f(x2))];
            let (g, degenerate) = secant_gradient(&history, &domain, 0.5, 1).unwrap();
            prop_assert!(!degenerate);
            let mid = 0.5 * (x1 + x2);
            let exact = 2.0 * a * (mid - c);
            prop_assert!((g[0] - exact).abs() <= 1e-10 * exact.abs().max(1.0),
                "secant {} vs exact {}", g[0], exact);
        }

        #[test]
        fn iterates_stay_canonical(seed in 0..1000u64) {
            let obj = Objective::cosine_quadratic(2).unwrap();
            let mut cfg = base_config(50);
            cfg.seed = seed;
            let traj = run(&cfg, &obj).unwrap();
            for rec in &traj.records {
                for (i, &xi) in rec.x.iter().enumerate() {
                    prop_assert!((0.0..4.0).contains(&xi), "coord {i} = {xi}");
                }
            }
        }
    }
}
