//! Batch front end: simulate plants, fit models, optimize libraries,
//! predict, and compare strategies, emitting plot-ready CSV artifacts.
//!
//! Configuration precedence: built-in defaults < TOML config file <
//! `SINDY_LOM_*` environment variables < command-line flags. Usage
//! mistakes exit with 2, module errors with 1; a diverged prediction is
//! data, not an error.

mod artifacts;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use sindy_lom::dataset::TimeSeriesDataset;
use sindy_lom::liboptim::{
    dataset_comparison, optimize, run_strategy_comparison, StrategyMode, StrategySpec,
};
use sindy_lom::library::LibrarySpec;
use sindy_lom::loss::j_os;
use sindy_lom::model_io::{load_model_full, save_model_full, Provenance};
use sindy_lom::rollout::SindyModel;
use sindy_lom::stlsq::{fit_with_solver, SolverKind};
use sindy_lom::synth::plant_by_name;

use artifacts::*;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "sindy-lom",
    version,
    about = "Sparse identification of discrete-time dynamics with library optimization"
)]
struct Cli {
    /// TOML configuration file (all fields optional).
    #[arg(long, global = true, env = "SINDY_LOM_CONFIG")]
    config: Option<PathBuf>,

    /// Directory output artifacts are written into.
    #[arg(long, global = true, env = "SINDY_LOM_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Master seed for anything random (GA, random Φ, excitation).
    #[arg(long, global = true, env = "SINDY_LOM_SEED", default_value_t = 0)]
    seed: u64,

    /// Override of the STLSQ threshold λ.
    #[arg(long, global = true, env = "SINDY_LOM_LAMBDA")]
    lambda: Option<f64>,

    /// Override of the sparsity weight κ.
    #[arg(long, global = true, env = "SINDY_LOM_KAPPA")]
    kappa: Option<f64>,

    /// Worker threads for population evaluation (default: all cores).
    #[arg(long, global = true, env = "SINDY_LOM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Sparse-regression dataset CSV.
    #[arg(long)]
    sr: Option<PathBuf>,

    /// Loss-evaluation dataset CSV (repeatable). The SR dataset is
    /// reused when none is given.
    #[arg(long = "ll")]
    ll: Vec<PathBuf>,

    /// Number of state columns in the CSVs.
    #[arg(long)]
    n_state: Option<usize>,

    /// Number of input columns in the CSVs.
    #[arg(long)]
    m_input: Option<usize>,

    /// Polynomial degree of the library.
    #[arg(long)]
    degree: Option<u32>,

    /// Number of Gaussian RBFs appended to the library.
    #[arg(long)]
    rbf_count: Option<usize>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PredictMode {
    OneStep,
    Rlt,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a built-in plant and write its dataset CSV.
    Simulate {
        /// Plant name (see `linear2`, `quadratic2`, `rbf1`, `margin1`).
        #[arg(long)]
        plant: String,
        /// Trajectory length in samples.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Initial state, comma-separated (plant default when omitted).
        #[arg(long)]
        x0: Option<String>,
        /// Observation-noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Output CSV path (default: <out-dir>/<plant>_s<seed>.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a sparse model with a fixed library (random Φ if RBFs are present).
    Fit(DataArgs),
    /// Optimize the RBF parameters Φ, then fit and save the final model.
    Lom(DataArgs),
    /// Predict a dataset with a saved model.
    Predict {
        /// Model JSON file.
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV (dimensions are taken from the model).
        #[arg(long)]
        dataset: PathBuf,
        /// one-step: evaluate on true samples; rlt: recurse from x(0).
        #[arg(long, value_enum, default_value_t = PredictMode::Rlt)]
        mode: PredictMode,
    },
    /// Fit the configured strategies on shared data and tabulate errors.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of poly,rbf-random,rbf-optimized.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
    },
    /// Print a saved model in readable form.
    ModelInfo {
        /// Model JSON file.
        #[arg(long)]
        model: PathBuf,
    },
}

enum CliError {
    /// Invocation problem (missing required inputs): exit code 2.
    Usage(String),
    /// Failure inside the toolkit: exit code 1.
    Module(sindy_lom::Error),
}

impl From<sindy_lom::Error> for CliError {
    fn from(e: sindy_lom::Error) -> Self {
        CliError::Module(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure: the global pool can only be built once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Module(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(lambda) = cli.lambda {
        cfg.stlsq.lambda = lambda;
    }
    if let Some(kappa) = cli.kappa {
        cfg.loss.kappa = kappa;
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(|source| sindy_lom::Error::Io {
        path: cli.out_dir.display().to_string(),
        source,
    })?;

    match &cli.command {
        Command::Simulate {
            plant,
            samples,
            x0,
            noise,
            out,
        } => cmd_simulate(&cli, plant, *samples, x0.as_deref(), *noise, out.as_deref()),
        Command::Fit(data) => cmd_fit(&cli, &cfg, data),
        Command::Lom(data) => cmd_lom(&cli, &cfg, data),
        Command::Predict {
            model,
            dataset,
            mode,
        } => cmd_predict(&cli, &cfg, model, dataset, *mode),
        Command::Compare { data, strategies } => cmd_compare(&cli, &cfg, data, strategies),
        Command::ModelInfo { model } => cmd_model_info(model),
    }
}

fn parse_f64_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("not a number: '{p}'")))
        })
        .collect()
}

/// Resolved dataset/library inputs shared by fit, lom and compare.
struct ResolvedData {
    sr: TimeSeriesDataset,
    ll: Vec<TimeSeriesDataset>,
    degree: u32,
    rbf_count: usize,
}

impl ResolvedData {
    /// LL references for the loss; the SR dataset doubles as the only
    /// loss dataset when no LL files were supplied.
    fn ll_refs(&self) -> Vec<&TimeSeriesDataset> {
        if self.ll.is_empty() {
            vec![&self.sr]
        } else {
            self.ll.iter().collect()
        }
    }
}

fn resolve_data(cfg: &RunConfig, data: &DataArgs) -> CliResult<ResolvedData> {
    let sr_path = data
        .sr
        .clone()
        .or_else(|| cfg.data.sr.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("missing SR dataset path (--sr or [data].sr)".into()))?;
    let n_state = data
        .n_state
        .or(cfg.data.n_state)
        .ok_or_else(|| CliError::Usage("missing state dimension (--n-state or [data].n_state)".into()))?;
    let m_input = data
        .m_input
        .or(cfg.data.m_input)
        .ok_or_else(|| CliError::Usage("missing input dimension (--m-input or [data].m_input)".into()))?;
    let ll_paths: Vec<PathBuf> = if data.ll.is_empty() {
        cfg.data.ll.iter().map(PathBuf::from).collect()
    } else {
        data.ll.clone()
    };
    let sr = TimeSeriesDataset::load_csv(&sr_path, n_state, m_input)?;
    let ll = ll_paths
        .iter()
        .map(|p| TimeSeriesDataset::load_csv(p, n_state, m_input))
        .collect::<sindy_lom::Result<Vec<_>>>()?;
    Ok(ResolvedData {
        sr,
        ll,
        degree: data.degree.unwrap_or(cfg.library.degree),
        rbf_count: data.rbf_count.unwrap_or(cfg.library.rbf_count),
    })
}

fn cmd_simulate(
    cli: &Cli,
    plant_name: &str,
    samples: usize,
    x0: Option<&str>,
    noise: f64,
    out: Option<&Path>,
) -> CliResult<()> {
    let plant = plant_by_name(plant_name)?.with_noise(noise);
    let x0 = match x0 {
        Some(s) => DVector::from_vec(parse_f64_list(s)?),
        None => plant.default_x0().clone(),
    };
    let ds = plant.simulate(plant.default_excitation(), &x0, samples, cli.seed)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out_dir.join(format!("{}_s{}.csv", plant_name, cli.seed)));
    ds.save_csv(&path)?;
    println!(
        "wrote {} ({} samples, {} states, {} inputs)",
        path.display(),
        ds.len(),
        ds.n_state(),
        ds.m_input()
    );
    Ok(())
}

fn build_library(n_state: usize, m_input: usize, degree: u32, rbf_count: usize) -> sindy_lom::Result<LibrarySpec> {
    let poly = LibrarySpec::polynomial(n_state, m_input, degree)?;
    Ok(if rbf_count > 0 {
        poly.with_rbfs(rbf_count)
    } else {
        poly
    })
}

fn cmd_fit(cli: &Cli, cfg: &RunConfig, data: &DataArgs) -> CliResult<()> {
    let solver = SolverKind::from_name(&cfg.stlsq.solver)?;
    let d = resolve_data(cfg, data)?;
    let spec = build_library(d.sr.n_state(), d.sr.m_input(), d.degree, d.rbf_count)?;
    let ll = d.ll_refs();
    let lom = cfg.lom_config(spec.phi_dim(), ll.len(), d.sr.n_state(), cli.seed)?;

    // RBF-bearing libraries get one random Φ from the init interval
    // (the fixed-random-Φ strategy); RBF-free ones have no parameters.
    let phi: Vec<f64> = if spec.phi_dim() > 0 {
        match StrategySpec::random_phi("fit", spec.clone(), cfg.ga.init_low, cfg.ga.init_high, cli.seed).mode
        {
            StrategyMode::FixedPhi(phi) => phi,
            StrategyMode::OptimizePhi => unreachable!(),
        }
    } else {
        vec![]
    };

    let xi = fit_with_solver(solver, &spec, &d.sr.shifted(), &phi, &lom.stlsq)?;
    let model = SindyModel::new(spec, phi, xi)?;
    let os = j_os(&model, &d.sr)?;
    let report = sindy_lom::loss::j_ms_with_penalty(
        &model,
        &ll,
        &lom.weights,
        lom.divergence_bound,
        lom.divergence_penalty,
    )?;

    let model_path = cli.out_dir.join("model.json");
    let provenance = Provenance {
        seed: Some(cli.seed),
        sr_dataset: Some(d.sr.name().to_string()),
        ll_datasets: ll.iter().map(|ds| ds.name().to_string()).collect(),
        config: Some(lom),
        loss: Some(report.clone()),
    };
    save_model_full(&model, &provenance, &model_path)?;
    write_loss_report(&cli.out_dir.join("loss_report.txt"), &report)?;

    println!("l0 = {}", model.xi().l0_norm());
    println!("j_os = {os:.6e}");
    println!("j_ms = {:.6e}", report.j_ms);
    println!("model: {}", model_path.display());
    Ok(())
}

fn cmd_lom(cli: &Cli, cfg: &RunConfig, data: &DataArgs) -> CliResult<()> {
    SolverKind::from_name(&cfg.stlsq.solver)?;
    let d = resolve_data(cfg, data)?;
    let spec = build_library(d.sr.n_state(), d.sr.m_input(), d.degree, d.rbf_count)?;
    let ll = d.ll_refs();
    let lom = cfg.lom_config(spec.phi_dim(), ll.len(), d.sr.n_state(), cli.seed)?;

    let trace = optimize(&spec, &d.sr, &ll, &lom)?;

    let model_path = cli.out_dir.join("model.json");
    let provenance = Provenance {
        seed: Some(cli.seed),
        sr_dataset: Some(d.sr.name().to_string()),
        ll_datasets: ll.iter().map(|ds| ds.name().to_string()).collect(),
        config: Some(lom),
        loss: Some(trace.report.clone()),
    };
    save_model_full(&trace.model, &provenance, &model_path)?;
    write_convergence_csv(&cli.out_dir.join("convergence.csv"), &trace.generations)?;
    write_loss_report(&cli.out_dir.join("loss_report.txt"), &trace.report)?;

    println!("generations = {}", trace.generations.len());
    println!("j_ms = {:.6e}", trace.final_j_ms());
    println!("l0 = {}", trace.model.xi().l0_norm());
    let phi_str: Vec<String> = trace.best_phi().iter().map(|v| format!("{v:.6e}")).collect();
    println!("phi* = [{}]", phi_str.join(", "));
    println!("model: {}", model_path.display());
    Ok(())
}

fn cmd_predict(
    cli: &Cli,
    cfg: &RunConfig,
    model_path: &Path,
    dataset_path: &Path,
    mode: PredictMode,
) -> CliResult<()> {
    let (model, _) = load_model_full(model_path)?;
    let ds = TimeSeriesDataset::load_csv(dataset_path, model.n_state(), model.m_input())?;
    let bound = cfg.rollout.divergence_bound;
    let comparison = dataset_comparison(&model, &ds, bound)?;

    let n = model.n_state();
    let rows = match mode {
        PredictMode::Rlt => {
            let r = model.predict_rlt(&ds, bound)?;
            let rows = (0..r.len())
                .map(|k| {
                    let truth = (0..n).map(|j| ds.state(k)[j]).collect();
                    let pred = (0..n).map(|j| r.trajectory[(j, k)]).collect();
                    (k, truth, pred, false)
                })
                .collect();
            if let Some(at) = r.diverged_at {
                println!("status: diverged at k = {at}");
            } else {
                println!("status: completed");
            }
            rows
        }
        PredictMode::OneStep => {
            let p = model.predict_one_step(&ds)?;
            println!(
                "status: {}",
                if p.any_diverged() { "diverged" } else { "completed" }
            );
            (0..p.predictions.ncols())
                .map(|k| {
                    let truth = (0..n).map(|j| ds.state(k + 1)[j]).collect();
                    let pred = (0..n).map(|j| p.predictions[(j, k)]).collect();
                    (k + 1, truth, pred, p.diverged[k])
                })
                .collect()
        }
    };
    let csv_path = cli.out_dir.join("predictions.csv");
    write_predictions_csv(&csv_path, &PredictionRows { n_state: n, rows })?;

    for j in 0..n {
        let cell = match mode {
            PredictMode::Rlt => &comparison.rlt_errors[j],
            PredictMode::OneStep => &comparison.one_step_errors[j],
        };
        match cell {
            Some(v) => println!("x{}: 2-norm error = {v:.6e}", j + 1),
            None => println!("x{}: diverged", j + 1),
        }
    }
    println!("predictions: {}", csv_path.display());
    Ok(())
}

fn cmd_compare(
    cli: &Cli,
    cfg: &RunConfig,
    data: &DataArgs,
    strategy_flags: &[String],
) -> CliResult<()> {
    let d = resolve_data(cfg, data)?;
    let names: Vec<String> = if strategy_flags.is_empty() {
        cfg.compare.strategies.clone()
    } else {
        strategy_flags.to_vec()
    };
    let poly = LibrarySpec::polynomial(d.sr.n_state(), d.sr.m_input(), d.degree)?;
    let needs_rbf = names.iter().any(|n| n != "poly");
    if needs_rbf && d.rbf_count == 0 {
        return Err(CliError::Module(sindy_lom::Error::InvalidConfig(
            "RBF strategies requested but rbf_count is 0".into(),
        )));
    }
    let rbf_spec = poly.with_rbfs(d.rbf_count);

    let mut strategies = Vec::new();
    for name in &names {
        match name.as_str() {
            "poly" => strategies.push(StrategySpec::fixed("poly", poly.clone())),
            "rbf-random" => strategies.push(StrategySpec::random_phi(
                "rbf-random",
                rbf_spec.clone(),
                cfg.compare.random_phi_low,
                cfg.compare.random_phi_high,
                cli.seed,
            )),
            "rbf-optimized" => {
                strategies.push(StrategySpec::optimized("rbf-optimized", rbf_spec.clone()))
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown strategy '{other}' (expected poly, rbf-random, rbf-optimized)"
                )))
            }
        }
    }

    let ll = d.ll_refs();
    let lom = cfg.lom_config(rbf_spec.phi_dim(), ll.len(), d.sr.n_state(), cli.seed)?;
    let report = run_strategy_comparison(&strategies, &d.sr, &ll, &lom)?;

    write_comparison_csv(&cli.out_dir.join("comparison.csv"), &report)?;
    write_xi_patterns_csv(&cli.out_dir.join("xi_patterns.csv"), &report)?;
    for outcome in &report.strategies {
        if let Some(trace) = &outcome.trace {
            write_convergence_csv(
                &cli.out_dir.join(format!("convergence_{}.csv", outcome.label)),
                trace,
            )?;
        }
    }
    print!("{}", render_comparison_table(&report));
    for outcome in &report.strategies {
        println!(
            "{}: j_ms = {:.6e}, l0 = {}",
            outcome.label,
            outcome.report.j_ms,
            outcome.model.xi().l0_norm()
        );
    }
    Ok(())
}

fn cmd_model_info(model_path: &Path) -> CliResult<()> {
    let (model, provenance) = load_model_full(model_path)?;
    print!("{}", render_model_summary(&model));
    if let Some(seed) = provenance.seed {
        println!("seed: {seed}");
    }
    if let Some(sr) = &provenance.sr_dataset {
        println!("sr dataset: {sr}");
    }
    if !provenance.ll_datasets.is_empty() {
        println!("ll datasets: {}", provenance.ll_datasets.join(", "));
    }
    if let Some(loss) = &provenance.loss {
        println!("stored loss: j_ms = {:.6e}, l0 = {}", loss.j_ms, loss.l0_count);
    }
    Ok(())
}
