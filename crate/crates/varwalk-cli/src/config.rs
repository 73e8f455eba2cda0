use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use varwalk::ensemble::{ConvergenceRadius, EnsembleConfig};
use varwalk::noise::{EpsilonSchedule, FMinEstimator, VarianceRule};
use varwalk::optimizer::{GradSource, IterationConfig, NoiseScaling};
use varwalk::Objective;

use crate::error::{config, CliError};

/// Typed view of a run configuration. Every section rejects unknown keys
/// so typos surface as errors instead of silently falling back to
/// defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Dispatch key used by `bench`: "optimize", "ensemble", "fp.evolve",
    /// "fp.equilibrium", or "fp.zscaling". Ignored by the explicit
    /// subcommands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default)]
    pub master_seed: u64,
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp: Option<FpSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    /// "cosine_quadratic", "four_minima", or "rastrigin".
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Rastrigin only: half-width of the centered box domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// "adaptive" (default) or "two_stage".
    #[serde(default = "default_policy_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_plus: Option<f64>,
    #[serde(default = "default_cutoff_scale")]
    pub cutoff_scale: f64,
    #[serde(default = "default_cutoff_exponent")]
    pub cutoff_exponent: f64,
    /// "known" (default), "history_min", "history_min_explore", or
    /// "history_min_window".
    #[serde(default = "default_fmin_kind")]
    pub fmin: String,
    /// Value used by the "known" estimator; defaults to the objective's
    /// declared minimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmin_value: Option<f64>,
    /// Explore-sample thinning for "history_min_explore" (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_thin: Option<u64>,
    /// Window length for "history_min_window".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default)]
    pub epsilon: EpsilonSection,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            kind: default_policy_kind(),
            beta: None,
            sigma_minus: None,
            sigma_plus: None,
            cutoff_scale: default_cutoff_scale(),
            cutoff_exponent: default_cutoff_exponent(),
            fmin: default_fmin_kind(),
            fmin_value: None,
            explore_thin: None,
            window: None,
            epsilon: EpsilonSection::default(),
        }
    }
}

fn default_policy_kind() -> String {
    "adaptive".to_string()
}

fn default_cutoff_scale() -> f64 {
    1.0
}

fn default_cutoff_exponent() -> f64 {
    0.5
}

fn default_fmin_kind() -> String {
    "known".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSection {
    /// "zero" (default), "constant", or "power".
    #[serde(default = "default_epsilon_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Default for EpsilonSection {
    fn default() -> Self {
        EpsilonSection { kind: default_epsilon_kind(), c: None, alpha: None }
    }
}

fn default_epsilon_kind() -> String {
    "zero".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub eta_g: f64,
    /// Gradient history window; 0 disables the drift term entirely.
    #[serde(default)]
    pub grad_window: usize,
    #[serde(default = "default_grad_decay")]
    pub grad_decay: f64,
    /// "secant" (default) or "analytic".
    #[serde(default = "default_grad_source")]
    pub grad_source: String,
    /// "sqrt_eta" or "eta"; default follows the kernel in use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scaling: Option<String>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            eta: default_eta(),
            eta_g: 0.0,
            grad_window: 0,
            grad_decay: default_grad_decay(),
            grad_source: default_grad_source(),
            noise_scaling: None,
        }
    }
}

fn default_eta() -> f64 {
    1.0
}

fn default_grad_decay() -> f64 {
    0.5
}

fn default_grad_source() -> String {
    "secant".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_max_iters")]
    pub max_iters: u64,
    /// Trajectory recording stride; defaults to max(max_iters/1000, 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<u64>,
    /// Fixed starting point (also pins every ensemble run's start).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Seed of a single `optimize` trajectory; defaults to master_seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { max_iters: default_max_iters(), record_stride: None, x0: None, seed: None }
    }
}

fn default_max_iters() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub runs: u64,
    pub checkpoints: Vec<u64>,
    /// Fixed convergence radius (mutually exclusive with `nu`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Shrinking radius exponent: radius n^(-nu) at checkpoint n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Rate-fit window [lo, hi]; defaults to the last decade.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpSection {
    pub points_per_dim: usize,
    pub beta: f64,
    /// Minimum value of the objective; defaults to its declared minimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_decade: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decades: Option<usize>,
    /// Objective level whose sublevel-set mass is tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sublevel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
    /// Scalar epsilon for a single equilibrium dump.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Epsilon sweep for zscaling / concentration tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Subset of {"csv", "json"}; both by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: None, formats: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Named override tables merged onto the base config, one ensemble
    /// variant per entry. BTreeMap keeps variant order deterministic.
    pub variants: std::collections::BTreeMap<String, toml::Table>,
}

/// A parsed configuration: the merged TOML table (after --set/--seed/--out
/// overrides), its typed view, and the canonical serialized form that is
/// echoed to `config.effective.toml`.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub table: toml::Table,
    pub file: ConfigFile,
    pub effective: String,
}

pub fn load(
    path: &Path,
    sets: &[String],
    seed: Option<u64>,
    out: Option<&str>,
) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    from_text(&text, path, sets, seed, out)
}

pub fn from_text(
    text: &str,
    path: &Path,
    sets: &[String],
    seed: Option<u64>,
    out: Option<&str>,
) -> Result<LoadedConfig, CliError> {
    // Typed parse first: its errors carry line/column anchors into the
    // original file, which the post-merge reparse below cannot provide.
    let _typed: ConfigFile = toml::from_str(text)
        .map_err(|e| config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = toml::from_str(text)
        .map_err(|e| config(format!("{}: {e}", path.display())))?;
    for kv in sets {
        apply_set(&mut table, kv)?;
    }
    if let Some(s) = seed {
        let v = i64::try_from(s)
            .map_err(|_| config("--seed exceeds the integer range of the config format"))?;
        table.insert("master_seed".to_string(), toml::Value::Integer(v));
    }
    if let Some(dir) = out {
        let entry = table
            .entry("output".to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let out_tbl = entry
            .as_table_mut()
            .ok_or_else(|| config("output must be a table"))?;
        out_tbl.insert("dir".to_string(), toml::Value::String(dir.to_string()));
    }
    let file: ConfigFile =
        table.clone().try_into().map_err(|e| config(e.to_string()))?;
    let effective = toml::to_string_pretty(&table)
        .map_err(|e| config(format!("cannot serialize effective config: {e}")))?;
    Ok(LoadedConfig { table, file, effective })
}

/// Apply one `--set key.path=value` override. The value is parsed as a
/// TOML literal when possible (numbers, booleans, arrays) and kept as a
/// string otherwise.
fn apply_set(table: &mut toml::Table, kv: &str) -> Result<(), CliError> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(config("--set expects a non-empty key"));
    }
    let value = parse_toml_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config(format!("--set {key}: '{part}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("probe key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Merge `overlay` into `base`, recursing through nested tables and
/// replacing everything else.
pub fn deep_merge(base: &mut toml::Table, overlay: &toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(bt)), toml::Value::Table(ot)) => deep_merge(bt, ot),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Sections a compare variant may override. Everything that would break
/// curve alignment (objective, seeds, the shared ensemble grid) is fixed
/// by the base config.
const VARIANT_SECTIONS: &[&str] = &["policy", "kernel"];

/// Resolve one compare variant into a full typed config by overlaying its
/// table on the base.
pub fn variant_config(
    base: &toml::Table,
    name: &str,
    overlay: &toml::Table,
) -> Result<ConfigFile, CliError> {
    for key in overlay.keys() {
        if !VARIANT_SECTIONS.contains(&key.as_str()) {
            return Err(config(format!(
                "compare.variants.{name}: only {{policy, kernel}} may be overridden, got '{key}'"
            )));
        }
    }
    let mut merged = base.clone();
    merged.remove("compare");
    deep_merge(&mut merged, overlay);
    merged
        .try_into()
        .map_err(|e| config(format!("compare.variants.{name}: {e}")))
}

pub fn build_objective(cfg: &ConfigFile) -> Result<Objective, CliError> {
    let sec = &cfg.objective;
    let dim = sec.dim.unwrap_or(2);
    if dim == 0 {
        return Err(config("objective.dim must be at least 1"));
    }
    if sec.half_width.is_some() && sec.id != "rastrigin" {
        return Err(config("objective.half_width only applies to rastrigin"));
    }
    let built = match sec.id.as_str() {
        "cosine_quadratic" => Objective::cosine_quadratic(dim),
        "four_minima" => {
            if dim != 2 {
                return Err(config("objective.dim: four_minima is two-dimensional"));
            }
            Objective::four_minima()
        }
        "rastrigin" => match sec.half_width {
            Some(w) => Objective::rastrigin_on(dim, w),
            None => Objective::rastrigin(dim),
        },
        other => {
            return Err(config(format!(
                "objective.id: unknown objective '{other}' \
                 (expected cosine_quadratic, four_minima, or rastrigin)"
            )))
        }
    };
    built.map_err(|e| config(format!("objective: {e}")))
}

fn build_rule(policy: &PolicySection) -> Result<VarianceRule, CliError> {
    match policy.kind.as_str() {
        "adaptive" => {
            let beta = policy
                .beta
                .ok_or_else(|| config("policy.beta is required for the adaptive rule"))?;
            if !(beta > 0.0) {
                return Err(config("policy.beta must be positive"));
            }
            Ok(VarianceRule::AdaptivePower { beta })
        }
        "two_stage" => {
            let sigma_minus = policy
                .sigma_minus
                .ok_or_else(|| config("policy.sigma_minus is required for the two-stage rule"))?;
            let sigma_plus = policy
                .sigma_plus
                .ok_or_else(|| config("policy.sigma_plus is required for the two-stage rule"))?;
            Ok(VarianceRule::TwoStage {
                sigma_minus,
                sigma_plus,
                cutoff_scale: policy.cutoff_scale,
                cutoff_exponent: policy.cutoff_exponent,
            })
        }
        other => Err(config(format!(
            "policy.kind: unknown rule '{other}' (expected adaptive or two_stage)"
        ))),
    }
}

fn build_epsilon(eps: &EpsilonSection) -> Result<EpsilonSchedule, CliError> {
    match eps.kind.as_str() {
        "zero" => Ok(EpsilonSchedule::Zero),
        "constant" => {
            let c = eps
                .c
                .ok_or_else(|| config("policy.epsilon.c is required for the constant schedule"))?;
            Ok(EpsilonSchedule::Constant { c })
        }
        "power" => {
            let c = eps
                .c
                .ok_or_else(|| config("policy.epsilon.c is required for the power schedule"))?;
            let alpha = eps.alpha.ok_or_else(|| {
                config("policy.epsilon.alpha is required for the power schedule")
            })?;
            Ok(EpsilonSchedule::Power { c, alpha })
        }
        other => Err(config(format!(
            "policy.epsilon.kind: unknown schedule '{other}' (expected zero, constant, or power)"
        ))),
    }
}

fn build_estimator(
    policy: &PolicySection,
    objective: &Objective,
) -> Result<FMinEstimator, CliError> {
    match policy.fmin.as_str() {
        "known" => {
            let value = match policy.fmin_value.or_else(|| objective.known_fmin()) {
                Some(v) => v,
                None => {
                    return Err(config(
                        "policy.fmin_value is required: the objective declares no known minimum",
                    ))
                }
            };
            Ok(FMinEstimator::Known { value })
        }
        "history_min" => Ok(FMinEstimator::HistoryMin),
        "history_min_explore" => {
            Ok(FMinEstimator::HistoryMinExplore { thin: policy.explore_thin.unwrap_or(1) })
        }
        "history_min_window" => {
            let m = policy.window.ok_or_else(|| {
                config("policy.window is required for the history_min_window estimator")
            })?;
            Ok(FMinEstimator::HistoryMinWindow { m })
        }
        other => Err(config(format!(
            "policy.fmin: unknown estimator '{other}' (expected known, history_min, \
             history_min_explore, or history_min_window)"
        ))),
    }
}

fn build_grad_source(kernel: &KernelSection) -> Result<GradSource, CliError> {
    match kernel.grad_source.as_str() {
        "secant" => Ok(GradSource::Secant),
        "analytic" => Ok(GradSource::Analytic),
        other => Err(config(format!(
            "kernel.grad_source: unknown source '{other}' (expected secant or analytic)"
        ))),
    }
}

fn build_noise_scaling(kernel: &KernelSection) -> Result<Option<NoiseScaling>, CliError> {
    match kernel.noise_scaling.as_deref() {
        None => Ok(None),
        Some("sqrt_eta") => Ok(Some(NoiseScaling::SqrtEta)),
        Some("eta") => Ok(Some(NoiseScaling::Eta)),
        Some(other) => Err(config(format!(
            "kernel.noise_scaling: unknown scaling '{other}' (expected sqrt_eta or eta)"
        ))),
    }
}

/// Map the [policy]/[kernel]/[run] sections onto an iteration config.
/// The seed is the master seed; callers override it per run as needed.
pub fn build_iteration(cfg: &ConfigFile, objective: &Objective) -> Result<IterationConfig, CliError> {
    let rule = build_rule(&cfg.policy)?;
    let eps = build_epsilon(&cfg.policy.epsilon)?;
    let estimator = build_estimator(&cfg.policy, objective)?;
    let mut iter = IterationConfig::new(rule, eps, estimator, cfg.run.max_iters);
    iter.eta = cfg.kernel.eta;
    iter.eta_g = cfg.kernel.eta_g;
    iter.grad_window = cfg.kernel.grad_window;
    iter.grad_decay = cfg.kernel.grad_decay;
    iter.grad_source = build_grad_source(&cfg.kernel)?;
    iter.noise_scaling = build_noise_scaling(&cfg.kernel)?;
    iter.seed = cfg.run.seed.unwrap_or(cfg.master_seed);
    iter.record_stride = cfg.run.record_stride.unwrap_or((cfg.run.max_iters / 1000).max(1));
    iter.validate().map_err(|e| config(format!("policy/kernel: {e}")))?;
    if let Some(x0) = &cfg.run.x0 {
        if x0.len() != objective.dim() {
            return Err(config(format!(
                "run.x0 has {} coordinates but the objective is {}-dimensional",
                x0.len(),
                objective.dim()
            )));
        }
    }
    Ok(iter)
}

/// Map the [ensemble] section onto an ensemble config around `base`.
pub fn build_ensemble(
    cfg: &ConfigFile,
    objective: &Objective,
    base: IterationConfig,
) -> Result<EnsembleConfig, CliError> {
    let sec = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| config("the [ensemble] section is required for this command"))?;
    let radius = match (sec.delta, sec.nu) {
        (Some(delta), None) => ConvergenceRadius::Fixed { delta },
        (None, Some(nu)) => ConvergenceRadius::Shrinking { nu },
        (None, None) => {
            return Err(config("ensemble: exactly one of delta or nu is required"))
        }
        (Some(_), Some(_)) => {
            return Err(config("ensemble: delta and nu are mutually exclusive"))
        }
    };
    let mut ens = EnsembleConfig::new(base, sec.runs, sec.checkpoints.clone(), 0.1);
    ens.radius = radius;
    ens.master_seed = cfg.master_seed;
    ens.fixed_start = cfg.run.x0.clone();
    ens.validate(objective).map_err(|e| config(format!("ensemble: {e}")))?;
    Ok(ens)
}

/// Fit window from the [ensemble] section, defaulting to the last decade
/// of iterations.
pub fn fit_window(cfg: &ConfigFile, max_iters: u64) -> Result<(u64, u64), CliError> {
    match cfg.ensemble.as_ref().and_then(|e| e.fit_window.as_ref()) {
        Some(w) => {
            if w.len() != 2 || w[0] >= w[1] {
                return Err(config("ensemble.fit_window must be [lo, hi] with lo < hi"));
            }
            Ok((w[0], w[1]))
        }
        None => Ok(varwalk::ensemble::default_fit_window(max_iters)),
    }
}

/// Which artifact formats to emit. CSV and JSON are both on by default.
#[derive(Debug, Clone, Copy)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

pub fn formats(cfg: &ConfigFile) -> Result<Formats, CliError> {
    match &cfg.output.formats {
        None => Ok(Formats { csv: true, json: true }),
        Some(list) => {
            let mut fmt = Formats { csv: false, json: false };
            for item in list {
                match item.as_str() {
                    "csv" => fmt.csv = true,
                    "json" => fmt.json = true,
                    other => {
                        return Err(config(format!(
                            "output.formats: unknown format '{other}' (expected csv or json)"
                        )))
                    }
                }
            }
            if !fmt.csv && !fmt.json {
                return Err(config("output.formats must list at least one format"));
            }
            Ok(fmt)
        }
    }
}
