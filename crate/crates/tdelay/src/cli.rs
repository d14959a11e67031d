//! Subcommand front end: JSON configs in, CSV data plus JSON summaries and
//! a run manifest out. Every run is fully determined by (config, seed);
//! worker count only affects wall time.
//!
//! Exit codes: 0 success, 2 assertion failure, 3 configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dimension::{box_counting_dim, correlation_dim, geometric_grid, information_dim};
use crate::embed::{delay_vectors, DelayParams, TimeSeries};
use crate::experiments::{
    counterexample_experiment, deviation_bound_check, interpolation_certificate,
    scaling_experiment, stratified_interval_pair_measure,
};
use crate::fnn::embedding_dimension;
use crate::io::{format_float, read_series_csv, write_cloud_csv, CsvWriter};
use crate::linalg::Matrix;
use crate::orbitcomb::{mc_slope, verify_rank_predict, verify_sigma_k_positive, CASE_NAMES};
use crate::predict::{fs_predict, fs_variance, PredictionQuery};
use crate::rng::SplitMix64;
use crate::systems::{
    builtin_system, iterate, polynomial_probe_family, EmpiricalMeasure, Observable,
};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUT_DIR_ENV: &str = "TDELAY_OUT_DIR";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub max: f64,
    pub min: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        if !(self.max > self.min && self.min > 0.0 && self.points >= 2) {
            return Err(Error::Config("grid needs max > min > 0 and points >= 2".into()));
        }
        Ok(geometric_grid(self.max, self.min, self.points))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub system: SystemSpec,
    pub x0: Vec<f64>,
    pub n: usize,
    #[serde(default)]
    pub burn_in: usize,
    /// Coordinate read off as the scalar observable.
    #[serde(default)]
    pub observe_coord: usize,
}

impl OrbitSpec {
    fn series(&self) -> Result<TimeSeries> {
        let sys = builtin_system(&self.system.name, &self.system.params)?;
        let orbit = iterate(&sys, &self.x0, self.n, self.burn_in)?;
        if self.observe_coord >= sys.state_dim() {
            return Err(Error::Config("observe_coord out of range".into()));
        }
        let values: Vec<f64> = (0..orbit.len())
            .map(|i| orbit.point(i)[self.observe_coord])
            .collect();
        TimeSeries::new(values, format!("{}@{:?}", self.system.name, self.x0))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesSource {
    File { input: PathBuf, #[serde(default)] has_header: bool },
    Orbit { orbit: OrbitSpec },
}

impl SeriesSource {
    fn load(&self) -> Result<TimeSeries> {
        match self {
            SeriesSource::File { input, has_header } => read_series_csv(input, *has_header),
            SeriesSource::Orbit { orbit } => orbit.series(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub source: SeriesSource,
    pub k: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictConfig {
    pub source: SeriesSource,
    pub k: usize,
    pub epsilon: f64,
    /// Optional CSV of query points (k columns, no header). Defaults to the
    /// final delay vector: one-step-ahead prediction of the series.
    #[serde(default)]
    pub queries: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorScalingConfig {
    pub k: usize,
    pub delta: f64,
    pub theta: f64,
    pub eps_grid: GridSpec,
    pub atoms_per_branch: usize,
    pub alpha_radius: f64,
    pub seed: u64,
}

impl Default for ErrorScalingConfig {
    fn default() -> Self {
        ErrorScalingConfig {
            k: 2,
            delta: 0.1,
            theta: 0.1,
            eps_grid: GridSpec { max: 0.1, min: 1e-3, points: 9 },
            atoms_per_branch: 50_000,
            alpha_radius: 0.05,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub n_lo: usize,
    pub n_hi: usize,
    pub n_max_truncation: usize,
    /// Exceedance threshold; derived from the realized geometry when absent.
    #[serde(default)]
    pub delta: Option<f64>,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            n_lo: 7,
            n_hi: 12,
            n_max_truncation: 16,
            delta: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionConfig {
    pub source: SeriesSource,
    pub k: usize,
    pub grid: GridSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FnnConfig {
    pub source: SeriesSource,
    pub k_max: usize,
    pub r_tol: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyCombConfig {
    pub max_states: usize,
    pub k_lo: usize,
    pub k_hi: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for VerifyCombConfig {
    fn default() -> Self {
        VerifyCombConfig {
            max_states: 12,
            k_lo: 2,
            k_hi: 5,
            trials: 100,
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckLemmasConfig {
    pub mc_trials: usize,
    pub mc_grid: GridSpec,
    pub mc_count_floor: usize,
    pub deviation_trials: usize,
    pub seed: u64,
}

impl Default for CheckLemmasConfig {
    fn default() -> Self {
        CheckLemmasConfig {
            mc_trials: 100_000,
            mc_grid: GridSpec { max: 0.1, min: 0.01, points: 8 },
            mc_count_floor: 20,
            deviation_trials: 1000,
            seed: 505,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub csv_header: bool,
}

fn parse_args(args: &[String]) -> Result<RunOptions> {
    if args.is_empty() {
        return Err(Error::Config(
            "usage: tdelay <subcommand> [--config <path>] [--seed <u64>] [--workers <n>] [--out <dir>] [--csv-no-header]".into(),
        ));
    }
    let subcommand = args[0].clone();
    let mut config_path = None;
    let mut seed_override = None;
    let mut workers = None;
    let mut out_dir: Option<PathBuf> = None;
    let mut csv_header = true;
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--config" => {
                i += 1;
                config_path = Some(PathBuf::from(args.get(i).ok_or_else(|| {
                    Error::Config("--config needs a path".into())
                })?));
            }
            "--seed" => {
                i += 1;
                let raw = args.get(i).ok_or_else(|| Error::Config("--seed needs a value".into()))?;
                seed_override = Some(raw.parse().map_err(|_| Error::Config("bad --seed".into()))?);
            }
            "--workers" => {
                i += 1;
                let raw = args.get(i).ok_or_else(|| Error::Config("--workers needs a value".into()))?;
                workers = Some(raw.parse().map_err(|_| Error::Config("bad --workers".into()))?);
            }
            "--out" => {
                i += 1;
                out_dir = Some(PathBuf::from(args.get(i).ok_or_else(|| {
                    Error::Config("--out needs a path".into())
                })?));
            }
            "--csv-no-header" => csv_header = false,
            other => return Err(Error::Config(format!("unknown flag '{other}'"))),
        }
        i += 1;
    }
    let out_dir = out_dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tdelay_out"));
    Ok(RunOptions {
        subcommand,
        config_path,
        seed_override,
        workers,
        out_dir,
        csv_header,
    })
}

fn load_config<T: for<'de> Deserialize<'de>>(path: &Option<PathBuf>) -> Result<Option<T>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let raw = std::fs::read_to_string(p)?;
            let cfg = serde_json::from_str(&raw)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Ok(Some(cfg))
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, format!("{:#}\n", value))?;
    Ok(())
}

fn write_manifest(opts: &RunOptions, config_echo: serde_json::Value, seed: Option<u64>) -> Result<()> {
    let manifest = json!({
        "tool": "tdelay",
        "version": VERSION,
        "subcommand": opts.subcommand,
        "seed": seed,
        "config": config_echo,
    });
    write_json(&opts.out_dir.join("manifest.json"), &manifest)
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_main(args: &[String]) -> i32 {
    let opts = match parse_args(args) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return 3;
        }
    };
    let run = || -> Result<bool> {
        match opts.workers {
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
                pool.install(|| dispatch(&opts))
            }
            None => dispatch(&opts),
        }
    };
    match run() {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(Error::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            3
        }
        Err(e) => {
            eprintln!("{e}");
            match e {
                Error::Io(_) | Error::InvalidInput(_) => 3,
                _ => 2,
            }
        }
    }
}

fn dispatch(opts: &RunOptions) -> Result<bool> {
    match opts.subcommand.as_str() {
        "embed" => cmd_embed(opts),
        "predict" => cmd_predict(opts),
        "error-scaling" => cmd_error_scaling(opts),
        "counterexample" => cmd_counterexample(opts),
        "dimension" => cmd_dimension(opts),
        "fnn" => cmd_fnn(opts),
        "verify-comb" => cmd_verify_comb(opts),
        "check-lemmas" => cmd_check_lemmas(opts),
        other => Err(Error::Config(format!("unknown subcommand '{other}'"))),
    }
}

fn cmd_embed(opts: &RunOptions) -> Result<bool> {
    let cfg: EmbedConfig = load_config(&opts.config_path)?
        .ok_or_else(|| Error::Config("embed requires --config".into()))?;
    let series = cfg.source.load()?;
    let cloud = delay_vectors(&series, DelayParams::new(cfg.k)?)?;
    write_cloud_csv(&opts.out_dir.join("embed.csv"), &cloud, opts.csv_header)?;
    let summary = json!({
        "points": cloud.len(),
        "k": cfg.k,
        "series_len": series.len(),
    });
    write_json(&opts.out_dir.join("embed_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), None)?;
    Ok(true)
}

fn cmd_predict(opts: &RunOptions) -> Result<bool> {
    let cfg: PredictConfig = load_config(&opts.config_path)?
        .ok_or_else(|| Error::Config("predict requires --config".into()))?;
    let series = cfg.source.load()?;
    let cloud = delay_vectors(&series, DelayParams::new(cfg.k)?)?;
    let queries: Vec<Vec<f64>> = match &cfg.queries {
        Some(path) => {
            let file = std::fs::read_to_string(path)?;
            file.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split(',')
                        .map(|f| f.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<f64>, _>>()
                        .map_err(|_| Error::Config(format!("bad query row '{l}'")))
                })
                .collect::<Result<_>>()?
        }
        None => vec![cloud.point(cloud.len() - 1).to_vec()],
    };
    let mut names: Vec<String> = (0..cfg.k).map(|i| format!("q{i}")).collect();
    names.extend((0..cfg.k).map(|i| format!("pred{i}")));
    names.push("neighbors".into());
    names.push("variance".into());
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut w = CsvWriter::create(
        &opts.out_dir.join("predict.csv"),
        opts.csv_header.then_some(refs.as_slice()),
    )?;
    let mut predicted = 0usize;
    for q in &queries {
        let query = PredictionQuery::new(q.clone(), cfg.epsilon)?;
        match fs_predict(&cloud, &query) {
            Ok(pred) => {
                let var = fs_variance(&cloud, &query)?;
                let neighbors = crate::embed::radius_query(&cloud, q, cfg.epsilon)?.len();
                let mut row: Vec<f64> = q.clone();
                row.extend(pred);
                row.push(neighbors as f64);
                row.push(var);
                w.numeric_row(&row)?;
                predicted += 1;
            }
            Err(Error::NoNeighbors) => {
                let mut row: Vec<String> = q.iter().map(|v| format_float(*v)).collect();
                row.extend((0..cfg.k).map(|_| "nan".to_string()));
                row.push("0".into());
                row.push("nan".into());
                w.row(&row)?;
            }
            Err(e) => return Err(e),
        }
    }
    w.finish()?;
    let summary = json!({
        "queries": queries.len(),
        "predicted": predicted,
        "epsilon": cfg.epsilon,
        "k": cfg.k,
    });
    write_json(&opts.out_dir.join("predict_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), None)?;
    Ok(true)
}

fn cmd_error_scaling(opts: &RunOptions) -> Result<bool> {
    let mut cfg: ErrorScalingConfig =
        load_config(&opts.config_path)?.unwrap_or_default();
    if let Some(s) = opts.seed_override {
        cfg.seed = s;
    }
    let (measure, succ) = stratified_interval_pair_measure(cfg.atoms_per_branch);
    let grid = cfg.eps_grid.build()?;
    let result = scaling_experiment(
        &crate::systems::MapSystem::IntervalPair,
        &Observable::Coordinate(1),
        &measure,
        &succ,
        cfg.k,
        cfg.delta,
        cfg.theta,
        &grid,
        cfg.alpha_radius,
        cfg.seed,
    )?;
    let mut w = CsvWriter::create(
        &opts.out_dir.join("error_scaling.csv"),
        opts.csv_header
            .then_some(["delta", "epsilon", "fraction", "sample_size", "exceed_count"].as_slice()),
    )?;
    for (i, &(eps, frac)) in result.rows.iter().enumerate() {
        w.row(&[
            format_float(cfg.delta),
            format_float(eps),
            format_float(frac),
            measure.len().to_string(),
            result.exceed_counts[i].to_string(),
        ])?;
    }
    w.finish()?;
    let summary = json!({
        "fitted_slope": result.fitted_slope,
        "d_estimate": result.d_estimate,
        "theory_floor": result.theory_floor,
        "verdict": result.verdict,
        "degenerate": result.degenerate,
        "dim_warning": result.dim_warning,
        "k": cfg.k,
        "delta": cfg.delta,
        "theta": cfg.theta,
    });
    write_json(&opts.out_dir.join("error_scaling_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), Some(cfg.seed))?;
    Ok(result.verdict)
}

fn cmd_counterexample(opts: &RunOptions) -> Result<bool> {
    let cfg: CounterexampleConfig = load_config(&opts.config_path)?.unwrap_or_default();
    let result = counterexample_experiment(
        cfg.n_lo..=cfg.n_hi,
        cfg.n_max_truncation,
        &Observable::Coordinate(1),
        cfg.delta,
    )?;
    let dyadic =
        crate::systems::dyadic_atomic_measure(&crate::systems::inverse_square_betas(
            cfg.n_max_truncation,
        ))?;
    crate::io::write_measure_csv(
        &opts.out_dir.join("counterexample_measure.csv"),
        &dyadic.measure,
        opts.csv_header,
    )?;
    let mut w = CsvWriter::create(
        &opts.out_dir.join("counterexample.csv"),
        opts.csv_header
            .then_some(["n", "epsilon", "measured_fraction", "floor", "pass"].as_slice()),
    )?;
    for r in &result.rows {
        w.row(&[
            r.n.to_string(),
            format_float(r.epsilon),
            format_float(r.measured_fraction),
            format_float(r.floor),
            (r.pass as u8).to_string(),
        ])?;
    }
    w.finish()?;
    let summary = json!({
        "delta_used": result.delta_used,
        "gamma": result.gamma,
        "min_cluster_ratio": result.min_cluster_ratio,
        "window_counts": result.y_counts,
        "all_pass": result.all_pass,
    });
    write_json(&opts.out_dir.join("counterexample_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), None)?;
    Ok(result.all_pass)
}

fn cmd_dimension(opts: &RunOptions) -> Result<bool> {
    let cfg: DimensionConfig = load_config(&opts.config_path)?
        .ok_or_else(|| Error::Config("dimension requires --config".into()))?;
    let series = cfg.source.load()?;
    let cloud = delay_vectors(&series, DelayParams::new(cfg.k)?)?;
    let grid = cfg.grid.build()?;
    let boxd = box_counting_dim(&cloud, &grid, None)?;
    let corr = correlation_dim(&cloud, &grid)?;
    let n = cloud.len();
    let flat: Vec<f64> = (0..n).flat_map(|i| cloud.point(i).to_vec()).collect();
    let measure = EmpiricalMeasure::new(cfg.k, flat, vec![1.0 / n as f64; n])?;
    let info = information_dim(&measure, &grid)?;
    for (name, est) in [("box", &boxd), ("correlation", &corr), ("information", &info)] {
        let mut w = CsvWriter::create(
            &opts.out_dir.join(format!("dimension_{name}.csv")),
            opts.csv_header.then_some(["delta", "statistic"].as_slice()),
        )?;
        for &(s, v) in &est.per_scale {
            w.numeric_row(&[s, v])?;
        }
        w.finish()?;
    }
    let block = |e: &crate::dimension::DimensionEstimate| {
        json!({
            "slope": e.slope,
            "lower": e.lower_slope,
            "upper": e.upper_slope,
            "fit_range": [e.fit_range.0, e.fit_range.1],
        })
    };
    let summary = json!({
        "box": block(&boxd),
        "correlation": block(&corr),
        "information": block(&info),
        "k": cfg.k,
    });
    write_json(&opts.out_dir.join("dimension_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), None)?;
    Ok(true)
}

fn cmd_fnn(opts: &RunOptions) -> Result<bool> {
    let cfg: FnnConfig = load_config(&opts.config_path)?
        .ok_or_else(|| Error::Config("fnn requires --config".into()))?;
    let series = cfg.source.load()?;
    let profile = embedding_dimension(&series, cfg.k_max, cfg.r_tol, cfg.rate)?;
    let mut w = CsvWriter::create(
        &opts.out_dir.join("fnn.csv"),
        opts.csv_header.then_some(["k", "fraction"].as_slice()),
    )?;
    for &(k, f) in &profile.per_k {
        w.row(&[k.to_string(), format_float(f)])?;
    }
    w.finish()?;
    let summary = json!({
        "chosen_k": profile.chosen_k,
        "not_reached": profile.not_reached,
        "degenerate": profile.degenerate,
        "r_tol": profile.r_tol,
        "rate": profile.rate,
    });
    write_json(&opts.out_dir.join("fnn_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), None)?;
    Ok(true)
}

fn cmd_verify_comb(opts: &RunOptions) -> Result<bool> {
    let mut cfg: VerifyCombConfig = load_config(&opts.config_path)?.unwrap_or_default();
    if let Some(s) = opts.seed_override {
        cfg.seed = s;
    }
    if cfg.k_lo < 1 || cfg.k_hi < cfg.k_lo {
        return Err(Error::Config("need 1 <= k_lo <= k_hi".into()));
    }
    let mut w = CsvWriter::create(
        &opts.out_dir.join("verify_comb.csv"),
        opts.csv_header.then_some(
            ["k", "structures", "rank_deficient", "nested_cycles", "sigma_deficient", "violations"]
                .as_slice(),
        ),
    )?;
    let mut blocks = Vec::new();
    let mut total_violations = 0usize;
    for k in cfg.k_lo..=cfg.k_hi {
        let growth = verify_rank_predict(cfg.max_states, k, cfg.trials, cfg.seed);
        let sigma = verify_sigma_k_positive(cfg.max_states, k, cfg.trials, cfg.seed);
        total_violations += growth.violations.len() + sigma.violations.len();
        w.row(&[
            k.to_string(),
            growth.structures_total.to_string(),
            growth.rank_deficient.to_string(),
            growth.nested_cycles_structures.to_string(),
            sigma.sigma_deficient.to_string(),
            (growth.violations.len() + sigma.violations.len()).to_string(),
        ])?;
        let cases: BTreeMap<&str, serde_json::Value> = CASE_NAMES
            .iter()
            .enumerate()
            .map(|(i, &name)| {
                let ratio = growth.max_ratio_by_case[i];
                (
                    name,
                    json!({
                        "rank_deficient": growth.case_counts[i],
                        "max_ratio": if ratio.is_finite() { Some(ratio) } else { None },
                    }),
                )
            })
            .collect();
        blocks.push(json!({
            "k": k,
            "structures": growth.structures_total,
            "rank_deficient": growth.rank_deficient,
            "nested_cycles": growth.nested_cycles_structures,
            "trials_per_structure": growth.trials_per_structure,
            "growth_violations": growth.violations.len(),
            "sigma_deficient": sigma.sigma_deficient,
            "sigma_realizations": sigma.realizations_checked,
            "sigma_violations": sigma.violations.len(),
            "cases": cases,
        }));
    }
    w.finish()?;
    let summary = json!({
        "max_states": cfg.max_states,
        "violations": total_violations,
        "per_k": blocks,
    });
    write_json(&opts.out_dir.join("verify_comb_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), Some(cfg.seed))?;
    Ok(total_violations == 0)
}

fn cmd_check_lemmas(opts: &RunOptions) -> Result<bool> {
    let mut cfg: CheckLemmasConfig = load_config(&opts.config_path)?.unwrap_or_default();
    if let Some(s) = opts.seed_override {
        cfg.seed = s;
    }
    let grid = cfg.mc_grid.build()?;
    let mut rows: Vec<(String, f64, f64, bool)> = Vec::new();

    // parameter-measure bound: slope of the hit fraction in eps matches p
    for p in [1usize, 2] {
        let psi = Matrix::identity(p);
        let z = vec![0.0; p];
        let (slope, _) = mc_slope(
            &psi,
            &z,
            1.0,
            &grid,
            p,
            cfg.mc_trials,
            cfg.seed + p as u64,
            cfg.mc_count_floor,
        )?;
        let slope = slope.ok_or(Error::InsufficientScales)?;
        let pass = (slope - p as f64).abs() <= 0.1;
        rows.push((format!("mc_slope_p{p}"), slope, p as f64, pass));
    }

    // two-cluster deviation floor over randomized inputs
    let mut rng = SplitMix64::new(cfg.seed ^ 0xdead_beef);
    let mut dev_failures = 0usize;
    let mut dev_checked = 0usize;
    while dev_checked < cfg.deviation_trials {
        let gamma = rng.uniform(0.1, 2.0);
        let p = rng.uniform(0.05, 0.45);
        let spread = 0.2 * gamma;
        let atoms = vec![
            -rng.uniform(0.0, spread),
            -rng.uniform(0.0, spread),
            gamma + spread + rng.uniform(0.0, spread),
            gamma + spread + rng.uniform(0.0, spread),
        ];
        let m_first = rng.uniform(p + 0.02, 1.0 - p - 0.02);
        let masses = vec![m_first / 2.0, m_first / 2.0, (1.0 - m_first) / 2.0, (1.0 - m_first) / 2.0];
        let measure = EmpiricalMeasure::new(1, atoms, masses)?;
        match deviation_bound_check(&measure, &[true, true, false, false], gamma, p) {
            Ok(check) => {
                dev_checked += 1;
                if !check.pass {
                    dev_failures += 1;
                }
            }
            Err(Error::Precondition(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    rows.push((
        "deviation_floor_failures".into(),
        dev_failures as f64,
        0.0,
        dev_failures == 0,
    ));

    // interpolation certificates
    let mut rng2 = SplitMix64::new(cfg.seed ^ 0x1234_5678);
    let family1 = polynomial_probe_family(1, 4);
    let sample1: Vec<Vec<f64>> = (0..50).map(|_| vec![rng2.uniform(-2.0, 2.0)]).collect();
    let cert1 = interpolation_certificate(&family1, &sample1, 4, cfg.seed + 17)?;
    rows.push((
        "interpolation_1d_deg3".into(),
        cert1.worst_conditioning,
        1e-9,
        cert1.pass,
    ));
    let family2 = polynomial_probe_family(2, 4);
    let sample2: Vec<Vec<f64>> = (0..60)
        .map(|_| vec![rng2.uniform(-1.0, 1.0), rng2.uniform(-1.0, 1.0)])
        .collect();
    let cert2 = interpolation_certificate(&family2, &sample2, 4, cfg.seed + 18)?;
    rows.push((
        "interpolation_2d_deg3".into(),
        cert2.worst_conditioning,
        1e-9,
        cert2.pass,
    ));

    let mut w = CsvWriter::create(
        &opts.out_dir.join("check_lemmas.csv"),
        opts.csv_header
            .then_some(["check", "statistic", "reference", "pass"].as_slice()),
    )?;
    for (name, stat, reference, pass) in &rows {
        w.row(&[
            name.clone(),
            format_float(*stat),
            format_float(*reference),
            (*pass as u8).to_string(),
        ])?;
    }
    w.finish()?;
    let all_pass = rows.iter().all(|r| r.3);
    let summary = json!({
        "checks": rows.iter().map(|(n, s, r, p)| json!({
            "name": n, "statistic": s, "reference": r, "pass": p,
        })).collect::<Vec<_>>(),
        "all_pass": all_pass,
    });
    write_json(&opts.out_dir.join("check_lemmas_summary.json"), &summary)?;
    write_manifest(opts, serde_json::to_value(&cfg).unwrap(), Some(cfg.seed))?;
    Ok(all_pass)
}
