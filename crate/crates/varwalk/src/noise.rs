//! Variance policies: regularization schedules, the adaptive diffusion
//! coefficient, minimum-value estimators, and the two-stage step-variance
//! baseline.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Additive regularization floor inside the squared noise amplitude.
///
/// The discrete schedule is indexed from 1: `epsilon_at(0)` is an error.
/// The continuous-time counterpart used by the diffusion solver is
/// [`EpsilonSchedule::epsilon_continuous`], `c·(1+t)^(−α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    Zero,
    Constant { c: f64 },
    Power { c: f64, alpha: f64 },
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonSchedule::Zero => Ok(()),
            EpsilonSchedule::Constant { c } => {
                if c >= 0.0 && c.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("epsilon schedule: c must be nonnegative"))
                }
            }
            EpsilonSchedule::Power { c, alpha } => {
                if !(c >= 0.0 && c.is_finite()) {
                    Err(Error::invalid("epsilon schedule: c must be nonnegative"))
                } else if !(alpha > 0.0) {
                    Err(Error::invalid("epsilon schedule: alpha must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Discrete schedule value at iteration `n ≥ 1`.
    pub fn epsilon_at(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::invalid("epsilon schedule is indexed from 1; got n = 0"));
        }
        Ok(match *self {
            EpsilonSchedule::Zero => 0.0,
            EpsilonSchedule::Constant { c } => c,
            EpsilonSchedule::Power { c, alpha } => c * (n as f64).powf(-alpha),
        })
    }

    /// Continuous form `c·(1+t)^(−α)` for `t ≥ 0` (constant/zero kinds are
    /// flat), used by the Fokker-Planck solver.
    pub fn epsilon_continuous(&self, t: f64) -> f64 {
        match *self {
            EpsilonSchedule::Zero => 0.0,
            EpsilonSchedule::Constant { c } => c,
            EpsilonSchedule::Power { c, alpha } => c * (1.0 + t).powf(-alpha),
        }
    }
}

/// How the step noise amplitude depends on the objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceRule {
    /// `σ = √(2·[((f − f*_min)⁺)^β + ε])` — smooth, vanishing at the
    /// estimated minimum up to the `√(2ε)` floor.
    AdaptivePower { beta: f64 },
    /// Piecewise-constant baseline: `σ⁻` at or below a decaying cutoff
    /// `f_n = f*_min + C_f·n^(−α_f)`, `σ⁺` above it.
    TwoStage {
        sigma_minus: f64,
        sigma_plus: f64,
        cutoff_scale: f64,
        cutoff_exponent: f64,
    },
}

impl VarianceRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            VarianceRule::AdaptivePower { beta } => {
                if beta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("variance rule: beta must be positive"))
                }
            }
            VarianceRule::TwoStage { sigma_minus, sigma_plus, cutoff_scale, cutoff_exponent } => {
                if !(sigma_minus > 0.0 && sigma_plus > 0.0) {
                    Err(Error::invalid("two-stage rule: sigma levels must be positive"))
                } else if sigma_minus >= sigma_plus {
                    Err(Error::invalid("two-stage rule: sigma_minus must be < sigma_plus"))
                } else if !(cutoff_scale >= 0.0) {
                    Err(Error::invalid("two-stage rule: cutoff_scale must be nonnegative"))
                } else if !(cutoff_exponent > 0.0) {
                    Err(Error::invalid("two-stage rule: cutoff_exponent must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Cutoff value `f_n = f_min_est + C_f·n^(−α_f)` at iteration `n ≥ 1`
    /// (pure form of [`VarianceState::update_cutoff`]).
    pub fn cutoff_at(&self, n: u64, f_min_est: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::invalid("cutoff schedule is indexed from 1; got n = 0"));
        }
        match *self {
            VarianceRule::TwoStage { cutoff_scale, cutoff_exponent, .. } => {
                Ok(f_min_est + cutoff_scale * (n as f64).powf(-cutoff_exponent))
            }
            VarianceRule::AdaptivePower { .. } => {
                Err(Error::invalid("cutoff_at requires a two-stage rule"))
            }
        }
    }
}

/// A variance rule plus the mutable cutoff of the two-stage kind. Adaptive
/// rules carry no state; the wrapper keeps one call surface for both.
#[derive(Debug, Clone)]
pub struct VarianceState {
    rule: VarianceRule,
    cutoff: f64,
}

impl VarianceState {
    pub fn new(rule: VarianceRule) -> Self {
        // Before the first update every value counts as "below cutoff"; the
        // stepping loop refreshes the cutoff before each noise draw.
        VarianceState { rule, cutoff: f64::INFINITY }
    }

    pub fn rule(&self) -> &VarianceRule {
        &self.rule
    }

    /// Refresh and return the two-stage cutoff for iteration `n ≥ 1`.
    pub fn update_cutoff(&mut self, n: u64, f_min_est: f64) -> Result<f64> {
        let f_n = self.rule.cutoff_at(n, f_min_est)?;
        self.cutoff = f_n;
        Ok(f_n)
    }

    /// Noise amplitude for the current objective value.
    ///
    /// Adaptive: `√(2·[max(f − f*_min, 0)^β + ε])`; two-stage: `σ⁻` if
    /// `f ≤ f_n` else `σ⁺`, where `f_n` comes from the internal state.
    pub fn sigma(&self, f_value: f64, f_min_est: f64, epsilon: f64) -> Result<f64> {
        if !(epsilon >= 0.0) {
            return Err(Error::invalid("sigma: epsilon must be nonnegative"));
        }
        Ok(match self.rule {
            VarianceRule::AdaptivePower { beta } => {
                let surplus = (f_value - f_min_est).max(0.0);
                (2.0 * (surplus.powf(beta) + epsilon)).sqrt()
            }
            VarianceRule::TwoStage { sigma_minus, sigma_plus, .. } => {
                if f_value <= self.cutoff {
                    sigma_minus
                } else {
                    sigma_plus
                }
            }
        })
    }
}

/// Estimator of the (possibly unknown) minimum objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FMinEstimator {
    /// The true minimum is supplied.
    Known { value: f64 },
    /// Running minimum over the iterate's own evaluations.
    HistoryMin,
    /// Running minimum that also folds in an independent uniform explore
    /// sample every `thin` iterations (`thin = 1`: one per iteration).
    HistoryMinExplore { thin: u64 },
    /// Minimum over the last `m` iterate evaluations only.
    HistoryMinWindow { m: usize },
}

impl FMinEstimator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FMinEstimator::Known { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("known f_min must be finite"))
                }
            }
            FMinEstimator::HistoryMin => Ok(()),
            FMinEstimator::HistoryMinExplore { thin } => {
                if thin >= 1 {
                    Ok(())
                } else {
                    Err(Error::invalid("explore thinning must be >= 1"))
                }
            }
            FMinEstimator::HistoryMinWindow { m } => {
                if m >= 1 {
                    Ok(())
                } else {
                    Err(Error::invalid("window size must be >= 1"))
                }
            }
        }
    }
}

/// Mutable estimator state owned by a single run.
#[derive(Debug, Clone)]
pub struct FMinState {
    kind: FMinEstimator,
    est: f64,
    window: VecDeque<f64>,
    /// Iterations seen since initialization (update calls).
    steps: u64,
}

impl FMinState {
    /// Initialize from the evaluations available before the first step: the
    /// initial iterate value, plus the initial explore sample when the
    /// explore kind is configured.
    pub fn init(kind: FMinEstimator, f0: f64, f_explore0: Option<f64>) -> Result<Self> {
        kind.validate()?;
        let est = match kind {
            FMinEstimator::Known { value } => value,
            FMinEstimator::HistoryMin => f0,
            FMinEstimator::HistoryMinExplore { .. } => {
                let fy = f_explore0.ok_or_else(|| {
                    Error::invalid("explore estimator initialized without an explore sample")
                })?;
                f0.min(fy)
            }
            FMinEstimator::HistoryMinWindow { .. } => f0,
        };
        let mut window = VecDeque::new();
        if let FMinEstimator::HistoryMinWindow { .. } = kind {
            window.push_back(f0);
        }
        Ok(FMinState { kind, est, window, steps: 0 })
    }

    pub fn kind(&self) -> FMinEstimator {
        self.kind
    }

    pub fn estimate(&self) -> f64 {
        self.est
    }

    /// Whether the estimator expects an explore sample at iteration `n ≥ 1`.
    pub fn wants_explore_sample(&self, n: u64) -> bool {
        match self.kind {
            FMinEstimator::HistoryMinExplore { thin } => n % thin == 0,
            _ => false,
        }
    }

    /// Fold in the evaluations of iteration `n = steps + 1` and return the
    /// updated estimate. An explore-kind update on a due iteration must
    /// supply the explore value.
    pub fn update(&mut self, f_at_iterate: f64, f_at_explore: Option<f64>) -> Result<f64> {
        self.steps += 1;
        match self.kind {
            FMinEstimator::Known { .. } => {}
            FMinEstimator::HistoryMin => {
                self.est = self.est.min(f_at_iterate);
            }
            FMinEstimator::HistoryMinExplore { thin } => {
                let due = self.steps % thin == 0;
                let fy = match (due, f_at_explore) {
                    (true, Some(v)) => v,
                    (true, None) => {
                        return Err(Error::invalid(
                            "explore estimator updated without the due explore sample",
                        ))
                    }
                    (false, opt) => opt.unwrap_or(f64::INFINITY),
                };
                self.est = self.est.min(f_at_iterate).min(fy);
            }
            FMinEstimator::HistoryMinWindow { m } => {
                self.window.push_back(f_at_iterate);
                while self.window.len() > m {
                    self.window.pop_front();
                }
                self.est = self.window.iter().copied().fold(f64::INFINITY, f64::min);
            }
        }
        Ok(self.est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn epsilon_power_examples() {
        let s = EpsilonSchedule::Power { c: 1e-3, alpha: 0.6 };
        assert_eq!(s.epsilon_at(1).unwrap(), 1e-3);
        let v = s.epsilon_at(100_000).unwrap();
        assert!((v - 1e-6).abs() < 1e-18, "{v}");
    }

    #[test]
    fn epsilon_zero_kind() {
        let s = EpsilonSchedule::Zero;
        for n in [1u64, 7, 1_000_000] {
            assert_eq!(s.epsilon_at(n).unwrap(), 0.0);
        }
    }

    #[test]
    fn epsilon_rejects_index_zero() {
        assert!(EpsilonSchedule::Power { c: 1e-3, alpha: 0.6 }.epsilon_at(0).is_err());
        assert!(EpsilonSchedule::Zero.epsilon_at(0).is_err());
    }

    #[test]
    fn epsilon_strictly_decreasing() {
        let s = EpsilonSchedule::Power { c: 1e-3, alpha: 0.6 };
        let mut prev = f64::INFINITY;
        for n in 1..1000u64 {
            let v = s.epsilon_at(n).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn epsilon_continuous_form() {
        let s = EpsilonSchedule::Power { c: 2.0, alpha: 0.5 };
        assert_eq!(s.epsilon_continuous(0.0), 2.0);
        assert!((s.epsilon_continuous(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigma_degenerate_at_estimated_minimum() {
        let v = VarianceState::new(VarianceRule::AdaptivePower { beta: 2.0 });
        assert_eq!(v.sigma(0.37, 0.37, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sigma_direct_substitution() {
        let v = VarianceState::new(VarianceRule::AdaptivePower { beta: 2.0 });
        let s = v.sigma(1.0, 0.0, 0.0).unwrap();
        assert!((s - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((s - 1.41421).abs() < 1e-5);

        let v1 = VarianceState::new(VarianceRule::AdaptivePower { beta: 1.0 });
        let s1 = v1.sigma(0.5, 0.0, 1e-3).unwrap();
        assert!((s1 - (2.0 * 0.501f64).sqrt()).abs() < 1e-15);
        assert!((s1 - 1.00100).abs() < 1e-5);
    }

    #[test]
    fn sigma_floor_is_sqrt_two_epsilon_exactly() {
        let v = VarianceState::new(VarianceRule::AdaptivePower { beta: 2.0 });
        for eps in [1e-3, 1e-6, 0.25] {
            assert_eq!(v.sigma(0.8, 0.8, eps).unwrap(), (2.0 * eps).sqrt());
        }
    }

    #[test]
    fn sigma_two_stage_branches() {
        let rule = VarianceRule::TwoStage {
            sigma_minus: 0.1,
            sigma_plus: 1.0,
            cutoff_scale: 1.0,
            cutoff_exponent: 0.5,
        };
        let mut v = VarianceState::new(rule);
        v.update_cutoff(4, 0.0).unwrap(); // cutoff = 0.5
        assert_eq!(v.sigma(0.3, 0.0, 0.0).unwrap(), 0.1);
        assert_eq!(v.sigma(0.7, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn sigma_rejects_negative_epsilon() {
        let v = VarianceState::new(VarianceRule::AdaptivePower { beta: 2.0 });
        assert!(v.sigma(1.0, 0.0, -1e-9).is_err());
    }

    #[test]
    fn cutoff_examples() {
        let rule = VarianceRule::TwoStage {
            sigma_minus: 0.1,
            sigma_plus: 1.0,
            cutoff_scale: 1.0,
            cutoff_exponent: 0.5,
        };
        assert_eq!(rule.cutoff_at(4, 0.0).unwrap(), 0.5);
        // Decays toward the estimate.
        assert!((rule.cutoff_at(1_000_000_000_000, 0.2).unwrap() - 0.2).abs() < 1e-5);
        assert!(rule.cutoff_at(0, 0.0).is_err());

        let degenerate = VarianceRule::TwoStage {
            sigma_minus: 0.1,
            sigma_plus: 1.0,
            cutoff_scale: 0.0,
            cutoff_exponent: 0.5,
        };
        for n in [1u64, 10, 1000] {
            assert_eq!(degenerate.cutoff_at(n, 0.3).unwrap(), 0.3);
        }
    }

    #[test]
    fn cutoff_requires_two_stage() {
        assert!(VarianceRule::AdaptivePower { beta: 1.0 }.cutoff_at(1, 0.0).is_err());
    }

    #[test]
    fn fmin_history_examples() {
        let mut s = FMinState::init(FMinEstimator::HistoryMin, 0.4, None).unwrap();
        assert_eq!(s.update(0.25, None).unwrap(), 0.25);
        assert_eq!(s.update(0.9, None).unwrap(), 0.25);
    }

    #[test]
    fn fmin_explore_three_way_min() {
        let mut s =
            FMinState::init(FMinEstimator::HistoryMinExplore { thin: 1 }, 0.25, Some(0.7)).unwrap();
        assert_eq!(s.update(0.9, Some(0.1)).unwrap(), 0.1);
    }

    #[test]
    fn fmin_explore_missing_sample_errors() {
        let mut s =
            FMinState::init(FMinEstimator::HistoryMinExplore { thin: 1 }, 0.5, Some(0.6)).unwrap();
        assert!(s.update(0.4, None).is_err());
        // A thinned estimator only expects the sample on due iterations.
        let mut t =
            FMinState::init(FMinEstimator::HistoryMinExplore { thin: 2 }, 0.5, Some(0.6)).unwrap();
        assert!(t.update(0.4, None).is_ok()); // step 1: not due
        assert!(t.update(0.4, None).is_err()); // step 2: due
    }

    #[test]
    fn fmin_window_forgets() {
        let mut s = FMinState::init(FMinEstimator::HistoryMinWindow { m: 2 }, 0.5, None).unwrap();
        s.update(0.1, None).unwrap();
        assert_eq!(s.estimate(), 0.1);
        s.update(0.3, None).unwrap();
        assert_eq!(s.estimate(), 0.1);
        s.update(0.4, None).unwrap(); // 0.1 left the window
        assert_eq!(s.estimate(), 0.3);
    }

    #[test]
    fn fmin_known_is_constant() {
        let mut s = FMinState::init(FMinEstimator::Known { value: 0.0 }, 0.9, None).unwrap();
        assert_eq!(s.update(-5.0, None).unwrap(), 0.0);
        assert_eq!(s.estimate(), 0.0);
    }

    proptest! {
        #[test]
        fn sigma_monotone_in_objective_value(
            f1 in -2.0..2.0f64,
            f2 in -2.0..2.0f64,
            fm in -2.0..0.0f64,
            eps in 0.0..1.0f64,
            beta in 0.25..4.0f64,
        ) {
            let v = VarianceState::new(VarianceRule::AdaptivePower { beta });
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            prop_assert!(v.sigma(lo, fm, eps).unwrap() <= v.sigma(hi, fm, eps).unwrap());
        }

        #[test]
        fn sigma_two_stage_image(f in -1.0..3.0f64, n in 1..1000u64) {
            let rule = VarianceRule::TwoStage {
                sigma_minus: 0.2, sigma_plus: 0.9, cutoff_scale: 1.0, cutoff_exponent: 0.5,
            };
            let mut v = VarianceState::new(rule);
            v.update_cutoff(n, 0.0).unwrap();
            let s = v.sigma(f, 0.0, 0.0).unwrap();
            prop_assert!(s == 0.2 || s == 0.9);
        }

        #[test]
        fn estimator_dominance(stream in prop::collection::vec(0.0..1.0f64, 1..40)) {
            // Non-window estimators track the running minimum of everything
            // they saw and never undershoot the true minimum of the stream.
            let mut s = FMinState::init(FMinEstimator::HistoryMin, stream[0], None).unwrap();
            let mut seen_min = stream[0];
            for &f in &stream[1..] {
                s.update(f, None).unwrap();
                seen_min = seen_min.min(f);
                prop_assert_eq!(s.estimate(), seen_min);
            }
        }

        #[test]
        fn estimator_monotone_nonincreasing(stream in prop::collection::vec(0.0..1.0f64, 1..40)) {
            let mut s = FMinState::init(FMinEstimator::HistoryMin, stream[0], None).unwrap();
            let mut prev = s.estimate();
            for &f in &stream[1..] {
                let e = s.update(f, None).unwrap();
                prop_assert!(e <= prev);
                prev = e;
            }
        }
    }
}
