use std::fs;
use std::path::Path;

use serde::Serialize;
use varwalk::ensemble::{
    basin_statistics, compare_policies, default_fit_window, estimate_probability_curve,
    fit_algebraic_rate, theory_exponents, BasinReport, CheckpointDominance, ConvergenceCurve,
    CurvePoint, RateReport, TheoryPrediction,
};
use varwalk::fp::{
    a2_bound, concentration_mass, equilibrium, evolve, partition_scaling,
    predicted_partition_exponent, ConcentrationMass, DensityField, EvolveParams, Grid,
    PartitionScaling,
};
use varwalk::objective::Objective;
use varwalk::optimizer::{run, run_from, Trajectory};
use varwalk::stats::ols_line;

use crate::config::{self, ConfigFile, LoadedConfig};
use crate::error::{config as config_err, CliError};
use crate::output::{csv_bytes, fmt_f64, fmt_opt_f64, ArtifactSink};

/// Map a library error onto an exit class: precondition violations are
/// configuration mistakes, everything else (resolution limits, numerical
/// aborts, degenerate fits) is a runtime failure.
fn lib_err(e: varwalk::Error) -> CliError {
    match e {
        varwalk::Error::InvalidArgument(_) | varwalk::Error::Unsupported(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn sink_for(loaded: &LoadedConfig, command: &str) -> Result<ArtifactSink, CliError> {
    let dir = loaded.file.output.dir.clone().unwrap_or_else(|| "out".to_string());
    ArtifactSink::create(
        Path::new(&dir),
        command,
        &loaded.effective,
        loaded.file.master_seed,
    )
}

/// Artifact name carrying the short config hash and the master seed, so
/// parallel sweeps into one directory cannot silently overwrite each
/// other.
fn tagged(stem: &str, sink: &ArtifactSink, seed: u64, ext: &str) -> String {
    format!("{stem}-{}-s{seed}.{ext}", &sink.config_sha256()[..8])
}

pub fn dispatch_mode(loaded: &LoadedConfig) -> Result<(), CliError> {
    let mode = loaded
        .file
        .mode
        .clone()
        .ok_or_else(|| config_err("mode is required (set it in the config top level)"))?;
    match mode.as_str() {
        "optimize" => cmd_optimize(loaded),
        "ensemble" => cmd_ensemble(loaded),
        "fp.evolve" => cmd_fp(loaded, FpMode::Evolve),
        "fp.equilibrium" => cmd_fp(loaded, FpMode::Equilibrium),
        "fp.zscaling" => cmd_fp(loaded, FpMode::Zscaling),
        other => Err(config_err(format!(
            "mode: unknown mode '{other}' (expected optimize, ensemble, fp.evolve, \
             fp.equilibrium, or fp.zscaling)"
        ))),
    }
}

// ---------------------------------------------------------------- optimize

fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>, CliError> {
    let dim = traj.final_x.len();
    let mut header = vec!["n".to_string()];
    for i in 1..=dim {
        header.push(format!("x_{i}"));
    }
    header.extend(["f", "sigma", "fmin_est"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = traj.records.iter().map(|r| {
        let mut row = Vec::with_capacity(dim + 4);
        row.push(r.n.to_string());
        row.extend(r.x.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(r.f));
        row.push(fmt_f64(r.sigma));
        row.push(fmt_f64(r.fmin_est));
        row
    });
    csv_bytes(&header_refs, rows)
}

pub fn cmd_optimize(loaded: &LoadedConfig) -> Result<(), CliError> {
    let cfg = &loaded.file;
    let fmt = config::formats(cfg)?;
    let objective = config::build_objective(cfg)?;
    let iter = config::build_iteration(cfg, &objective)?;
    let traj = match &cfg.run.x0 {
        Some(x0) => run_from(&iter, &objective, x0),
        None => run(&iter, &objective),
    }
    .map_err(lib_err)?;
    let mut sink = sink_for(loaded, "optimize")?;
    if fmt.csv {
        sink.write("trajectory.csv", &trajectory_csv(&traj)?)?;
    }
    if fmt.json {
        sink.write_json("trajectory.json", &traj)?;
    }
    let dir = sink.finish()?;
    println!(
        "optimize: {} iterations, final f = {} (artifacts in {})",
        traj.iters,
        traj.final_f,
        dir.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

// ---------------------------------------------------------------- ensemble

#[derive(Serialize)]
struct RateEntry {
    name: String,
    theory: Option<TheoryPrediction>,
    rate: Option<RateReport>,
    fit_error: Option<String>,
}

#[derive(Serialize)]
struct EnsembleSummary {
    checkpoints: Vec<u64>,
    names: Vec<String>,
    curves: Vec<ConvergenceCurve>,
    dominance: Option<Vec<CheckpointDominance>>,
    rates: Vec<RateEntry>,
    basins: Option<BasinReport>,
}

/// Predicted exponents for an adaptive rule under a power schedule; other
/// policies have no algebraic prediction to attach.
fn theory_for(cfg: &ConfigFile, dim: usize) -> Option<TheoryPrediction> {
    if cfg.policy.kind != "adaptive" || cfg.policy.epsilon.kind != "power" {
        return None;
    }
    let beta = cfg.policy.beta?;
    let alpha = cfg.policy.epsilon.alpha?;
    theory_exponents(alpha, beta, dim).ok()
}

fn curve_csv(curve: &ConvergenceCurve) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["n", "p_hat", "ci_low", "ci_high", "mean_f", "median_f"],
        curve.points.iter().map(|p| {
            vec![
                p.n.to_string(),
                fmt_f64(p.p_hat),
                fmt_f64(p.ci_low),
                fmt_f64(p.ci_high),
                fmt_f64(p.mean_f),
                fmt_f64(p.median_f),
            ]
        }),
    )
}

pub fn cmd_ensemble(loaded: &LoadedConfig) -> Result<(), CliError> {
    let cfg = &loaded.file;
    let fmt = config::formats(cfg)?;
    let objective = config::build_objective(cfg)?;
    let window = config::fit_window(cfg, cfg.run.max_iters)?;
    let seed = cfg.master_seed;

    let (names, curves, dominance, variant_cfgs, basins) = match &cfg.compare {
        Some(cmp) => {
            let mut variant_cfgs = Vec::new();
            let mut ens_list = Vec::new();
            for (name, overlay) in &cmp.variants {
                let vcfg = config::variant_config(&loaded.table, name, overlay)?;
                let iter = config::build_iteration(&vcfg, &objective)?;
                let ens = config::build_ensemble(&vcfg, &objective, iter)?;
                ens_list.push((name.clone(), ens));
                variant_cfgs.push(vcfg);
            }
            let table = compare_policies(&objective, &ens_list).map_err(lib_err)?;
            (table.names, table.curves, Some(table.dominance), variant_cfgs, None)
        }
        None => {
            let iter = config::build_iteration(cfg, &objective)?;
            let ens = config::build_ensemble(cfg, &objective, iter)?;
            let curve = estimate_probability_curve(&objective, &ens).map_err(lib_err)?;
            let basins = if objective.minimizers().map_or(false, |m| m.len() >= 2) {
                Some(basin_statistics(&objective, &ens).map_err(lib_err)?)
            } else {
                None
            };
            (vec!["curve".to_string()], vec![curve], None, vec![cfg.clone()], basins)
        }
    };

    let mut rates = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let theory = theory_for(&variant_cfgs[i], objective.dim());
        let entry = match fit_algebraic_rate(&curves[i], window, theory) {
            Ok(rate) => RateEntry { name: name.clone(), theory, rate: Some(rate), fit_error: None },
            Err(e) => RateEntry {
                name: name.clone(),
                theory,
                rate: None,
                fit_error: Some(e.to_string()),
            },
        };
        rates.push(entry);
    }

    let mut sink = sink_for(loaded, "ensemble")?;
    if fmt.csv {
        for (name, curve) in names.iter().zip(&curves) {
            let stem = if cfg.compare.is_some() {
                format!("curve-{name}")
            } else {
                "curve".to_string()
            };
            sink.write(&tagged(&stem, &sink, seed, "csv"), &curve_csv(curve)?)?;
        }
    }
    let checkpoints = curves[0].points.iter().map(|p| p.n).collect();
    let summary =
        EnsembleSummary { checkpoints, names, curves, dominance, rates, basins };
    if fmt.json {
        sink.write_json(&tagged("summary", &sink, seed, "json"), &summary)?;
    }
    let dir = sink.finish()?;
    for (name, curve) in summary.names.iter().zip(&summary.curves) {
        if let Some(p) = curve.points.last() {
            println!("ensemble[{name}]: p_hat({}) = {}", p.n, p.p_hat);
        }
    }
    println!("ensemble: artifacts in {}", dir.parent().unwrap_or(Path::new(".")).display());
    Ok(())
}

// ---------------------------------------------------------------------- fp

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FpMode {
    /// Evolve a density under the annealed diffusion and track its decay.
    Evolve,
    /// Dump the instantaneous equilibrium (or an epsilon concentration sweep).
    Equilibrium,
    /// Fit how the partition constant scales as epsilon vanishes.
    Zscaling,
}

#[derive(Serialize)]
struct DecayFit {
    t_lo: f64,
    t_hi: f64,
    slope: f64,
    stderr: f64,
    points: usize,
}

#[derive(Serialize)]
struct EvolveSummary {
    beta: f64,
    alpha: f64,
    c: f64,
    t_end: f64,
    f_min: f64,
    sublevel: Option<f64>,
    points_per_dim: usize,
    steps: u64,
    clipped_mass: f64,
    samples: usize,
    final_s: f64,
    final_mass: f64,
    decay_fit: Option<DecayFit>,
    fit_error: Option<String>,
}

#[derive(Serialize)]
struct EquilibriumSummary {
    beta: f64,
    epsilon: f64,
    f_min: f64,
    z: f64,
    a2_bound: f64,
    concentration: Option<ConcentrationMass>,
}

#[derive(Serialize)]
struct ConcentrationRow {
    epsilon: f64,
    z: f64,
    mass_sublevel: f64,
    nodes_in_set: usize,
    resolution_warning: bool,
}

#[derive(Serialize)]
struct ConcentrationSummary {
    beta: f64,
    f_min: f64,
    sublevel: f64,
    rows: Vec<ConcentrationRow>,
}

#[derive(Serialize)]
struct ZscalingSummary {
    beta: f64,
    f_min: f64,
    epsilons: Vec<f64>,
    z: Vec<f64>,
    predicted_exponent: f64,
    scaling: PartitionScaling,
}

pub fn cmd_fp(loaded: &LoadedConfig, mode: FpMode) -> Result<(), CliError> {
    let cfg = &loaded.file;
    let fmt = config::formats(cfg)?;
    let objective = config::build_objective(cfg)?;
    let sec = cfg
        .fp
        .as_ref()
        .ok_or_else(|| config_err("the [fp] section is required for this command"))?;
    let grid = Grid::new(objective.domain(), sec.points_per_dim)
        .map_err(|e| CliError::Config(format!("fp: {e}")))?;
    let f_min = sec.f_min.or_else(|| objective.known_fmin()).ok_or_else(|| {
        config_err("fp.f_min is required: the objective declares no known minimum")
    })?;

    match mode {
        FpMode::Evolve => {
            let alpha =
                sec.alpha.ok_or_else(|| config_err("fp.alpha is required for evolve"))?;
            let c = sec.c.ok_or_else(|| config_err("fp.c is required for evolve"))?;
            let t_end =
                sec.t_end.ok_or_else(|| config_err("fp.t_end is required for evolve"))?;
            let mut params = EvolveParams::new(sec.beta, alpha, c, t_end, f_min);
            if let Some(s) = sec.samples_per_decade {
                params.samples_per_decade = s;
            }
            if let Some(d) = sec.decades {
                params.decades = d;
            }
            params.sublevel = sec.sublevel;
            params.max_dt = sec.max_dt;
            params.validate().map_err(|e| CliError::Config(format!("fp: {e}")))?;
            let u0 = DensityField::uniform(&grid);
            let series = evolve(&grid, &u0, &objective, &params).map_err(lib_err)?;

            let mut sink = sink_for(loaded, "fp.evolve")?;
            if fmt.csv {
                let rows = series.samples.iter().map(|s| {
                    vec![
                        fmt_f64(s.t),
                        fmt_f64(s.s),
                        fmt_f64(s.z),
                        fmt_opt_f64(s.mass_sublevel),
                        fmt_f64(s.eps),
                        fmt_f64(s.mass),
                    ]
                });
                let bytes =
                    csv_bytes(&["t", "s", "z", "mass_sublevel", "eps", "mass"], rows)?;
                sink.write("decay.csv", &bytes)?;
            }

            // Log-log decay slope over the final decade of sampled times.
            let t_lo = t_end / 10.0;
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for s in &series.samples {
                if s.t >= t_lo && s.t > 0.0 && s.s > 0.0 {
                    xs.push(s.t.ln());
                    ys.push(s.s.ln());
                }
            }
            let (decay_fit, fit_error) = if xs.len() >= 3 {
                match ols_line(&xs, &ys) {
                    Ok((slope, _, stderr)) => (
                        Some(DecayFit { t_lo, t_hi: t_end, slope, stderr, points: xs.len() }),
                        None,
                    ),
                    Err(e) => (None, Some(e.to_string())),
                }
            } else {
                (None, Some(format!("only {} usable samples in the final decade", xs.len())))
            };

            let last = series.samples.last().expect("evolve always samples t_end");
            let summary = EvolveSummary {
                beta: sec.beta,
                alpha,
                c,
                t_end,
                f_min,
                sublevel: sec.sublevel,
                points_per_dim: sec.points_per_dim,
                steps: series.steps,
                clipped_mass: series.clipped_mass,
                samples: series.samples.len(),
                final_s: last.s,
                final_mass: last.mass,
                decay_fit: summary_fit_clone(&decay_fit),
                fit_error,
            };
            if fmt.json {
                sink.write_json("decay.json", &summary)?;
            }
            let dir = sink.finish()?;
            println!(
                "fp evolve: {} steps, final s = {} (artifacts in {})",
                summary.steps,
                summary.final_s,
                dir.parent().unwrap_or(Path::new(".")).display()
            );
            Ok(())
        }
        FpMode::Equilibrium => match (sec.epsilon, &sec.epsilon_list) {
            (Some(eps), None) => {
                let (field, z) =
                    equilibrium(&grid, &objective, sec.beta, eps, f_min).map_err(lib_err)?;
                let a2 = a2_bound(&grid, &objective, sec.beta, eps, f_min).map_err(lib_err)?;
                let concentration = match sec.sublevel {
                    Some(level) => Some(
                        concentration_mass(&grid, &field, &objective, level).map_err(lib_err)?,
                    ),
                    None => None,
                };
                let mut sink = sink_for(loaded, "fp.equilibrium")?;
                if fmt.csv {
                    sink.write("equilibrium.csv", &field_csv(&grid, &objective, &field)?)?;
                }
                let summary = EquilibriumSummary {
                    beta: sec.beta,
                    epsilon: eps,
                    f_min,
                    z,
                    a2_bound: a2,
                    concentration,
                };
                if fmt.json {
                    sink.write_json("equilibrium.json", &summary)?;
                }
                let dir = sink.finish()?;
                println!(
                    "fp equilibrium: Z = {z} (artifacts in {})",
                    dir.parent().unwrap_or(Path::new(".")).display()
                );
                Ok(())
            }
            (None, Some(list)) => {
                let level = sec.sublevel.ok_or_else(|| {
                    config_err("fp.sublevel is required for an epsilon_list concentration sweep")
                })?;
                let mut rows = Vec::with_capacity(list.len());
                for &eps in list {
                    let (field, z) =
                        equilibrium(&grid, &objective, sec.beta, eps, f_min).map_err(lib_err)?;
                    let conc = concentration_mass(&grid, &field, &objective, level)
                        .map_err(lib_err)?;
                    rows.push(ConcentrationRow {
                        epsilon: eps,
                        z,
                        mass_sublevel: conc.mass,
                        nodes_in_set: conc.nodes_in_set,
                        resolution_warning: conc.resolution_warning,
                    });
                }
                let mut sink = sink_for(loaded, "fp.equilibrium")?;
                if fmt.csv {
                    let bytes = csv_bytes(
                        &["epsilon", "z", "mass_sublevel", "nodes_in_set"],
                        rows.iter().map(|r| {
                            vec![
                                fmt_f64(r.epsilon),
                                fmt_f64(r.z),
                                fmt_f64(r.mass_sublevel),
                                r.nodes_in_set.to_string(),
                            ]
                        }),
                    )?;
                    sink.write("concentration.csv", &bytes)?;
                }
                let summary =
                    ConcentrationSummary { beta: sec.beta, f_min, sublevel: level, rows };
                if fmt.json {
                    sink.write_json("concentration.json", &summary)?;
                }
                let dir = sink.finish()?;
                if let Some(last) = summary.rows.last() {
                    println!(
                        "fp equilibrium: mass({level}; eps = {}) = {}",
                        last.epsilon, last.mass_sublevel
                    );
                }
                println!(
                    "fp equilibrium: artifacts in {}",
                    dir.parent().unwrap_or(Path::new(".")).display()
                );
                Ok(())
            }
            (None, None) => {
                Err(config_err("fp.epsilon or fp.epsilon_list is required for equilibrium"))
            }
            (Some(_), Some(_)) => {
                Err(config_err("fp.epsilon and fp.epsilon_list are mutually exclusive"))
            }
        },
        FpMode::Zscaling => {
            let list = sec.epsilon_list.as_ref().ok_or_else(|| {
                config_err("fp.epsilon_list is required for zscaling")
            })?;
            if sec.epsilon.is_some() {
                return Err(config_err("fp.epsilon and fp.epsilon_list are mutually exclusive"));
            }
            let scaling =
                partition_scaling(&grid, &objective, sec.beta, list).map_err(lib_err)?;
            let mut zs = Vec::with_capacity(list.len());
            for &eps in list {
                let (_, z) =
                    equilibrium(&grid, &objective, sec.beta, eps, f_min).map_err(lib_err)?;
                zs.push(z);
            }
            let mut sink = sink_for(loaded, "fp.zscaling")?;
            if fmt.csv {
                let bytes = csv_bytes(
                    &["epsilon", "z"],
                    list.iter().zip(&zs).map(|(&e, &z)| vec![fmt_f64(e), fmt_f64(z)]),
                )?;
                sink.write("zscaling.csv", &bytes)?;
            }
            let summary = ZscalingSummary {
                beta: sec.beta,
                f_min,
                epsilons: list.clone(),
                z: zs,
                predicted_exponent: predicted_partition_exponent(sec.beta, objective.dim()),
                scaling,
            };
            if fmt.json {
                sink.write_json("zscaling.json", &summary)?;
            }
            let dir = sink.finish()?;
            match &summary.scaling {
                PartitionScaling::Power { fitted, predicted, .. } => {
                    println!("fp zscaling: fitted exponent {fitted} (predicted {predicted})");
                }
                PartitionScaling::Logarithmic { coefficient, r_squared } => {
                    println!(
                        "fp zscaling: logarithmic growth, coefficient {coefficient} \
                         (R^2 = {r_squared})"
                    );
                }
            }
            println!(
                "fp zscaling: artifacts in {}",
                dir.parent().unwrap_or(Path::new(".")).display()
            );
            Ok(())
        }
    }
}

// DecayFit is tiny; cloning it for the summary keeps the fit/printing
// paths free of borrow gymnastics.
fn summary_fit_clone(fit: &Option<DecayFit>) -> Option<DecayFit> {
    fit.as_ref().map(|f| DecayFit {
        t_lo: f.t_lo,
        t_hi: f.t_hi,
        slope: f.slope,
        stderr: f.stderr,
        points: f.points,
    })
}

fn field_csv(grid: &Grid, objective: &Objective, field: &DensityField) -> Result<Vec<u8>, CliError> {
    let dim = grid.dim();
    let mut header = Vec::with_capacity(dim + 2);
    for i in 1..=dim {
        header.push(format!("x_{i}"));
    }
    header.extend(["f", "u"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..grid.num_nodes()).map(|j| {
        let x = grid.node_coord(j);
        let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        row.push(fmt_f64(objective.evaluate(&x)));
        row.push(fmt_f64(field.values()[j]));
        row
    });
    csv_bytes(&header_refs, rows)
}

// -------------------------------------------------------------------- bench

pub const PRESETS: &[(&str, &str)] = &[
    ("fig32-alpha-sweep", include_str!("../../../presets/fig32-alpha-sweep.toml")),
    ("fig42-43-history-min", include_str!("../../../presets/fig42-43-history-min.toml")),
    ("fig45-four-minima", include_str!("../../../presets/fig45-four-minima.toml")),
    ("fig46-47-gradient", include_str!("../../../presets/fig46-47-gradient.toml")),
    ("fig51-rastrigin-compare", include_str!("../../../presets/fig51-rastrigin-compare.toml")),
    ("thm31-1d", include_str!("../../../presets/thm31-1d.toml")),
    ("lemma31-zscaling", include_str!("../../../presets/lemma31-zscaling.toml")),
    ("lemma32-concentration", include_str!("../../../presets/lemma32-concentration.toml")),
];

pub fn cmd_bench(
    list: bool,
    names: &[String],
    out_root: &str,
    seed: Option<u64>,
    sets: &[String],
) -> Result<(), CliError> {
    if list {
        for (name, _) in PRESETS {
            println!("{name}");
        }
        return Ok(());
    }
    let selected: Vec<(&str, &str)> = if names.is_empty() {
        PRESETS.to_vec()
    } else {
        let mut out = Vec::with_capacity(names.len());
        for want in names {
            match PRESETS.iter().find(|(n, _)| n == want) {
                Some(&entry) => out.push(entry),
                None => {
                    return Err(config_err(format!(
                        "unknown preset '{want}' (run `varwalk bench --list`)"
                    )))
                }
            }
        }
        out
    };
    for (name, text) in selected {
        let out_dir = format!("{out_root}/{name}");
        let loaded = config::from_text(text, Path::new(name), sets, seed, Some(&out_dir))?;
        println!("bench {name} -> {out_dir}");
        dispatch_mode(&loaded)?;
    }
    Ok(())
}

// ------------------------------------------------------------------- report

const CURVE_HEADER: [&str; 6] = ["n", "p_hat", "ci_low", "ci_high", "mean_f", "median_f"];

fn read_curve(raw: &[u8]) -> Result<ConvergenceCurve, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(raw);
    let headers = rdr
        .headers()
        .map_err(|e| config_err(format!("curve file: {e}")))?
        .clone();
    if headers.iter().ne(CURVE_HEADER) {
        return Err(config_err(format!(
            "curve file header must be {}",
            CURVE_HEADER.join(",")
        )));
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| config_err(format!("curve file row {}: {e}", i + 1)))?;
        let field = |j: usize| -> Result<f64, CliError> {
            rec[j]
                .parse::<f64>()
                .map_err(|e| config_err(format!("curve file row {}, {}: {e}", i + 1, CURVE_HEADER[j])))
        };
        let n = rec[0]
            .parse::<u64>()
            .map_err(|e| config_err(format!("curve file row {}, n: {e}", i + 1)))?;
        points.push(CurvePoint {
            n,
            p_hat: field(1)?,
            ci_low: field(2)?,
            ci_high: field(3)?,
            mean_f: field(4)?,
            median_f: field(5)?,
        });
    }
    if points.is_empty() {
        return Err(config_err("curve file has no data rows"));
    }
    // The run count behind the curve is not recorded in the CSV; 0 marks
    // it unknown. The rate fit only reads the points.
    Ok(ConvergenceCurve { points, runs: 0 })
}

#[derive(Serialize)]
struct ReportSummary {
    input_rows: usize,
    theory: Option<TheoryPrediction>,
    rate: RateReport,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_report(
    input: &Path,
    window: Option<&str>,
    alpha: Option<f64>,
    beta: Option<f64>,
    dim: Option<usize>,
    out: Option<&str>,
) -> Result<(), CliError> {
    let raw = fs::read(input)
        .map_err(|e| config_err(format!("cannot read {}: {e}", input.display())))?;
    let curve = read_curve(&raw)?;
    let max_n = curve.points.iter().map(|p| p.n).max().unwrap_or(1);
    let window = match window {
        Some(spec) => {
            let (lo, hi) = spec
                .split_once(',')
                .ok_or_else(|| config_err("--window expects LO,HI"))?;
            let lo = lo.trim().parse::<u64>().map_err(|e| config_err(format!("--window: {e}")))?;
            let hi = hi.trim().parse::<u64>().map_err(|e| config_err(format!("--window: {e}")))?;
            if lo >= hi {
                return Err(config_err("--window expects LO < HI"));
            }
            (lo, hi)
        }
        None => default_fit_window(max_n),
    };
    let theory = match (alpha, beta, dim) {
        (None, None, None) => None,
        (Some(a), Some(b), Some(d)) => {
            Some(theory_exponents(a, b, d).map_err(|e| config_err(e.to_string()))?)
        }
        _ => return Err(config_err("--alpha, --beta, and --dim must be given together")),
    };
    let rate = fit_algebraic_rate(&curve, window, theory).map_err(lib_err)?;
    let mut sink = ArtifactSink::create_for_input(
        Path::new(out.unwrap_or("out")),
        "report",
        &raw,
        0,
    )?;
    let summary = ReportSummary { input_rows: curve.points.len(), theory, rate };
    sink.write_json("rate.json", &summary)?;
    sink.finish()?;
    println!(
        "report: slope = {} +/- {} over n in [{}, {}]",
        summary.rate.slope, summary.rate.slope_stderr, window.0, window.1
    );
    Ok(())
}
