//! `qrem` — readout-error-mitigation benchmark CLI.
//!
//! Each subcommand maps to one experiment protocol; all take a JSON run
//! configuration (`--config`) or a named preset where noted. Exit codes:
//! 0 success, 1 validation error, 2 numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qrem_core::dataset::{self, BitOrder, Dataset};
use qrem_core::error::{Error, Result};
use qrem_core::li::{LiSolver, ResponseMatrix};
use qrem_core::metrics::{self, MetricKind};
use qrem_core::nn::{cross_validate, train, MlpModel};
use qrem_core::seeds::derive_seed;
use qrem_core::ProbabilityDistribution;
use qrem_harness::config::{RunConfig, RunMode};
use qrem_harness::report::{emit_drift_series, emit_report, CSV_HEADER};
use qrem_harness::run::{
    calibrate_for, run_drift, run_standard, run_subsample, run_transfer, transfer_partner,
};

#[derive(Parser)]
#[command(name = "qrem", version, about = "Quantum readout-error mitigation benchmarks")]
struct Cli {
    /// Master seed; overrides QREM_SEED and the config file value.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run configuration JSON (see README for the schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "qrem-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Nn,
    Li,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test datasets from the configured channel, or ingest
    /// an external counts file.
    GenData {
        /// Ingest a counts JSON export instead of simulating.
        #[arg(long)]
        from_counts: Option<PathBuf>,
        /// Reverse bit-string keys while ingesting (for exports whose first
        /// character is the least significant qubit).
        #[arg(long)]
        reverse_bits: bool,
    },
    /// Measure the response matrix of the configured channel.
    Calibrate,
    /// Train the NN mitigator on a dataset file.
    Train {
        /// Training dataset (JSONL).
        #[arg(long)]
        train: PathBuf,
    },
    /// K-fold cross-validation over hidden-layer counts.
    CrossValidate {
        /// Training dataset (JSONL).
        #[arg(long)]
        train: PathBuf,
        /// Hidden-layer-count candidates, e.g. 1,2,4.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Mitigate the observed distributions of a dataset file.
    Mitigate {
        /// Dataset (JSONL) whose observed rows are mitigated.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Trained model JSON (for --method nn).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Response matrix JSON (for --method li).
        #[arg(long)]
        rm: Option<PathBuf>,
    },
    /// Metric means over a dataset, with optional mitigated outputs.
    Evaluate {
        /// Dataset (JSONL) with ideal and observed rows.
        #[arg(long)]
        data: PathBuf,
        /// Output of `mitigate` to score alongside the unmitigated row.
        #[arg(long)]
        mitigated: Option<PathBuf>,
    },
    /// Full benchmark for the config's mode (standard, subsample, drift,
    /// or transfer).
    Benchmark {
        /// Named preset instead of --config (paper-a-n2 … paper-b-n5).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Drift benchmark: train once, evaluate over a drifting channel.
    Drift {
        /// Named preset; its channel is made to drift (ramp on eps10).
        #[arg(long)]
        preset: Option<String>,
        /// Number of time steps (defaults to the config's horizon, or 10).
        #[arg(long)]
        horizon: Option<usize>,
        /// Ramp rate used with --preset.
        #[arg(long, default_value_t = 0.001)]
        rate: f64,
    },
    /// Transfer benchmark: train on channel A, evaluate on channel B
    /// (config mode must be "transfer" with an embedded channel_b).
    Transfer,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// --seed beats QREM_SEED beats the config file.
fn resolve_seed(cli: &Cli, config: &mut RunConfig) -> Result<()> {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    } else if let Ok(raw) = std::env::var("QREM_SEED") {
        config.seed = raw
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("QREM_SEED={raw:?} is not a u64")))?;
    }
    Ok(())
}

fn load_config(cli: &Cli, preset: Option<&str>) -> Result<RunConfig> {
    let mut config = match (&cli.config, preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "no configuration: pass --config <path> or --preset <name>".into(),
            ))
        }
    };
    resolve_seed(cli, &mut config)?;
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData { from_counts, reverse_bits } => {
            gen_data(cli, from_counts.as_deref(), *reverse_bits)
        }
        Command::Calibrate => {
            let config = load_config(cli, None)?;
            let rm = calibrate_for(&config)?;
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("response_matrix.json");
            rm.save(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Train { train: train_path } => run_train(cli, train_path),
        Command::CrossValidate { train, layers, folds } => {
            run_cross_validate(cli, train, layers, *folds)
        }
        Command::Mitigate { data, method, model, rm } => {
            run_mitigate(cli, data, *method, model.as_deref(), rm.as_deref())
        }
        Command::Evaluate { data, mitigated } => run_evaluate(cli, data, mitigated.as_deref()),
        Command::Benchmark { preset } => run_benchmark(cli, preset.as_deref()),
        Command::Drift { preset, horizon, rate } => {
            run_drift_cmd(cli, preset.as_deref(), *horizon, *rate)
        }
        Command::Transfer => {
            let config = load_config(cli, None)?;
            let partner = transfer_partner(&config)?;
            let report = run_transfer(&config, &partner)?;
            let paths = emit_report(&report, &cli.out, "transfer")?;
            print_report_summary(&report);
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn gen_data(cli: &Cli, from_counts: Option<&Path>, reverse_bits: bool) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    if let Some(counts_path) = from_counts {
        let config = load_config(cli, None)?;
        let order = if reverse_bits { BitOrder::Reversed } else { BitOrder::Normal };
        let data = dataset::ingest_counts_file(counts_path, config.n, order)?;
        let path = cli.out.join("ingested.jsonl");
        data.save(&path)?;
        println!("wrote {} ({} records)", path.display(), data.len());
        return Ok(());
    }
    let config = load_config(cli, None)?;
    let channel = config.channel.build()?;
    let channel = match channel {
        qrem_core::NoiseChannel::Drifting(d) => d.drift_at(0)?,
        other => other,
    };
    let pool = dataset::generate(
        config.n,
        config.train_size + config.test_size,
        &channel,
        config.shots,
        derive_seed(config.seed, "data"),
    )?;
    let (train_set, test_set) =
        dataset::split_train_test(&pool, config.test_size, derive_seed(config.seed, "split"))?;
    let train_path = cli.out.join("train.jsonl");
    let test_path = cli.out.join("test.jsonl");
    train_set.save(&train_path)?;
    test_set.save(&test_path)?;
    println!("wrote {} ({} records)", train_path.display(), train_set.len());
    println!("wrote {} ({} records)", test_path.display(), test_set.len());
    Ok(())
}

fn run_train(cli: &Cli, train_path: &Path) -> Result<()> {
    let config = load_config(cli, None)?;
    let data = Dataset::load(train_path)?;
    if data.num_qubits() != config.n {
        return Err(Error::InvalidConfig(format!(
            "dataset is for n={}, config for n={}",
            data.num_qubits(),
            config.n
        )));
    }
    let mut nn_config = config.nn.clone();
    nn_config.seed = derive_seed(config.seed, "nn");
    let model = MlpModel::init(config.n, &nn_config)?;
    let (model, history) = train(model, &data, &nn_config)?;
    std::fs::create_dir_all(&cli.out)?;
    let model_path = cli.out.join("model.json");
    model.save(&model_path)?;
    let history_path = cli.out.join("loss_history.csv");
    let mut w = BufWriter::new(File::create(&history_path)?);
    writeln!(w, "epoch,loss")?;
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(w, "{epoch},{loss}")?;
    }
    w.flush()?;
    println!("wrote {}", model_path.display());
    println!("wrote {}", history_path.display());
    if let Some(last) = history.last() {
        println!("final training loss: {last}");
    }
    Ok(())
}

fn run_cross_validate(cli: &Cli, train_path: &Path, layers: &[usize], folds: usize) -> Result<()> {
    let config = load_config(cli, None)?;
    let data = Dataset::load(train_path)?;
    let mut nn_config = config.nn.clone();
    nn_config.seed = derive_seed(config.seed, "nn");
    let cv = cross_validate(&data, layers, folds, &nn_config)?;
    std::fs::create_dir_all(&cli.out)?;
    let path = cli.out.join("cross_validation.json");
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &cv)?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("layers  mean-IF");
    for (layers, score) in &cv.scores {
        println!("{layers:>6}  {score:.6e}");
    }
    println!("best: {} hidden layers", cv.best_layer_count);
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct MitigatedFile {
    method: String,
    n: usize,
    mitigated: Vec<Vec<f64>>,
}

fn run_mitigate(
    cli: &Cli,
    data_path: &Path,
    method: Method,
    model_path: Option<&Path>,
    rm_path: Option<&Path>,
) -> Result<()> {
    let data = Dataset::load(data_path)?;
    let outputs: Vec<ProbabilityDistribution> = match method {
        Method::Nn => {
            let path = model_path.ok_or_else(|| {
                Error::InvalidConfig("--method nn needs --model <model.json>".into())
            })?;
            let model = MlpModel::load(path)?;
            qrem_core::nn::mitigate_nn_batch(
                &model,
                &data.records().iter().map(|r| r.observed.clone()).collect::<Vec<_>>(),
            )?
        }
        Method::Li => {
            let path = rm_path.ok_or_else(|| {
                Error::InvalidConfig("--method li needs --rm <response_matrix.json>".into())
            })?;
            let rm = ResponseMatrix::load(path)?;
            let solver = LiSolver::new(&rm)?;
            data.records()
                .iter()
                .map(|r| solver.mitigate(&r.observed))
                .collect::<Result<Vec<_>>>()?
        }
    };
    std::fs::create_dir_all(&cli.out)?;
    let out_path = cli.out.join("mitigated.json");
    let file = MitigatedFile {
        method: match method {
            Method::Nn => "nn".into(),
            Method::Li => "li".into(),
        },
        n: data.num_qubits(),
        mitigated: outputs.iter().map(|p| p.values().to_vec()).collect(),
    };
    let mut w = BufWriter::new(File::create(&out_path)?);
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("wrote {} ({} rows)", out_path.display(), outputs.len());
    Ok(())
}

#[derive(serde::Deserialize)]
struct MitigatedFileIn {
    method: String,
    n: usize,
    mitigated: Vec<Vec<f64>>,
}

fn run_evaluate(cli: &Cli, data_path: &Path, mitigated_path: Option<&Path>) -> Result<()> {
    let data = Dataset::load(data_path)?;
    let mut rows: Vec<(String, MetricKind, f64, f64)> = Vec::new();
    let mut add_rows = |label: &str, outputs: Vec<ProbabilityDistribution>| -> Result<()> {
        for kind in MetricKind::ALL {
            let values: Vec<f64> = data
                .records()
                .iter()
                .zip(&outputs)
                .map(|(r, out)| metrics::evaluate(kind, &r.ideal, out))
                .collect::<Result<Vec<f64>>>()?;
            let (mean, stderr) = metrics::mean_stderr(&values);
            rows.push((label.to_string(), kind, mean, stderr));
        }
        Ok(())
    };
    add_rows(
        "unmitigated",
        data.records().iter().map(|r| r.observed.clone()).collect(),
    )?;
    if let Some(path) = mitigated_path {
        let file: MitigatedFileIn =
            serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        if file.n != data.num_qubits() {
            return Err(Error::InvalidConfig(format!(
                "mitigated file is for n={}, dataset for n={}",
                file.n,
                data.num_qubits()
            )));
        }
        if file.mitigated.len() != data.len() {
            return Err(Error::InvalidConfig(format!(
                "mitigated file has {} rows, dataset {}",
                file.mitigated.len(),
                data.len()
            )));
        }
        let outputs: Vec<ProbabilityDistribution> = file
            .mitigated
            .into_iter()
            .map(|v| ProbabilityDistribution::new(data.num_qubits(), v))
            .collect::<Result<Vec<_>>>()?;
        add_rows(&file.method, outputs)?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let csv_path = cli.out.join("evaluation.csv");
    let mut w = BufWriter::new(File::create(&csv_path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for (method, kind, mean, stderr) in &rows {
        writeln!(w, "{},{method},{},{mean},{stderr}", data.num_qubits(), kind.name())?;
    }
    w.flush()?;
    for (method, kind, mean, stderr) in &rows {
        println!("{method:>12}  {:>3}  mean {mean:.6e}  stderr {stderr:.6e}", kind.name());
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn print_report_summary(report: &qrem_harness::report::BenchmarkReport) {
    println!("n={} channel: {}", report.n, report.channel);
    println!("{CSV_HEADER}");
    for (n, method, metric, mean, stderr) in report.csv_rows() {
        println!("{n},{method},{metric},{mean:.6e},{stderr:.6e}");
    }
    let show = |name: &str, r: Option<f64>| match r {
        Some(v) => println!("R_{name} = {v:.2}%"),
        None => println!("R_{name} undefined (NN error exactly zero)"),
    };
    show("mse", report.improvement_ratios.mse);
    show("kld", report.improvement_ratios.kld);
    show("if", report.improvement_ratios.infidelity);
}

fn run_benchmark(cli: &Cli, preset: Option<&str>) -> Result<()> {
    let config = load_config(cli, preset)?;
    match config.mode.clone() {
        RunMode::Standard => {
            let report = run_standard(&config)?;
            print_report_summary(&report);
            for p in emit_report(&report, &cli.out, "report")? {
                println!("wrote {}", p.display());
            }
        }
        RunMode::Subsample { fraction } => {
            let (full, half) = run_subsample(&config, fraction)?;
            print_report_summary(&full);
            print_report_summary(&half);
            for p in emit_report(&full, &cli.out, "report_full")? {
                println!("wrote {}", p.display());
            }
            for p in emit_report(&half, &cli.out, "report_subsampled")? {
                println!("wrote {}", p.display());
            }
        }
        RunMode::Drift { horizon } => {
            let reports = run_drift(&config, horizon)?;
            for p in emit_drift_series(&reports, &cli.out, "drift")? {
                println!("wrote {}", p.display());
            }
        }
        RunMode::Transfer { .. } => {
            let partner = transfer_partner(&config)?;
            let report = run_transfer(&config, &partner)?;
            print_report_summary(&report);
            for p in emit_report(&report, &cli.out, "transfer")? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn run_drift_cmd(
    cli: &Cli,
    preset: Option<&str>,
    horizon: Option<usize>,
    rate: f64,
) -> Result<()> {
    let config = match (preset, &cli.config) {
        (Some(name), None) => {
            let mut cfg = RunConfig::preset_drift(name, horizon.unwrap_or(10), rate)?;
            resolve_seed(cli, &mut cfg)?;
            cfg
        }
        _ => load_config(cli, None)?,
    };
    let steps = match (&config.mode, horizon) {
        (_, Some(h)) => h,
        (RunMode::Drift { horizon }, None) => *horizon,
        _ => 10,
    };
    let reports = run_drift(&config, steps)?;
    println!("t,R_mse,R_kld,R_if");
    for r in &reports {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.2}"));
        println!(
            "{},{},{},{}",
            r.time_index.unwrap_or_default(),
            fmt(r.improvement_ratios.mse),
            fmt(r.improvement_ratios.kld),
            fmt(r.improvement_ratios.infidelity)
        );
    }
    for p in emit_drift_series(&reports, &cli.out, "drift")? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
