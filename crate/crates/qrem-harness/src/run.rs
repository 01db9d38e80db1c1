//! Benchmark orchestration: the standard, drift, subsample, and transfer
//! protocols. Each runner generates data, calibrates the linear baseline,
//! trains the network, evaluates all three method rows on a held-out test
//! set, and assembles a [`BenchmarkReport`].

use std::time::Instant;

use qrem_core::channel::NoiseChannel;
use qrem_core::dataset::{generate, split_train_test, subsample, Dataset};
use qrem_core::error::{Error, Result};
use qrem_core::li::{calibrate, LiSolver, ResponseMatrix};
use qrem_core::metrics::{self, improvement_ratio, MetricKind};
use qrem_core::nn::{train, MlpModel};
use qrem_core::seeds::{derive_seed, derive_seed_indexed};

use crate::config::{RunConfig, RunMode};
use crate::report::{
    BenchmarkReport, ImprovementRatios, MethodStats, MethodTable, Stat, Timings,
};

fn ratio_or_sentinel(li: f64, nn: f64) -> Result<Option<f64>> {
    match improvement_ratio(li, nn) {
        Ok(v) => Ok(Some(v)),
        Err(Error::NnExact) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per-record metric collection for the three method rows.
fn evaluate_methods(
    test: &Dataset,
    solver: &LiSolver,
    model: &MlpModel,
) -> Result<(MethodTable, ImprovementRatios)> {
    let mut values: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); 3]; 3];
    for record in test.records() {
        let mitigated_li = solver.mitigate(&record.observed)?;
        let mitigated_nn = model.forward(&record.observed)?;
        let rows = [&record.observed, &mitigated_li, &mitigated_nn];
        for (m, mitigated) in rows.iter().enumerate() {
            for (k, kind) in MetricKind::ALL.iter().enumerate() {
                values[m][k].push(metrics::evaluate(*kind, &record.ideal, mitigated)?);
            }
        }
    }
    let stats = |m: usize| -> MethodStats {
        let s = |k: usize| {
            let (mean, stderr) = metrics::mean_stderr(&values[m][k]);
            Stat { mean, stderr }
        };
        MethodStats { mse: s(0), kld: s(1), infidelity: s(2) }
    };
    let table =
        MethodTable { unmitigated: stats(0), li: stats(1), nn: stats(2) };
    let ratios = ImprovementRatios {
        mse: ratio_or_sentinel(table.li.mse.mean, table.nn.mse.mean)?,
        kld: ratio_or_sentinel(table.li.kld.mean, table.nn.kld.mean)?,
        infidelity: ratio_or_sentinel(table.li.infidelity.mean, table.nn.infidelity.mean)?,
    };
    Ok((table, ratios))
}

struct TrainedPipeline {
    model: MlpModel,
    solver: LiSolver,
    train_size: usize,
    timings: Timings,
}

/// Data generation, calibration, and training against one concrete channel.
/// Returns the trained pipeline and the held-out test set.
fn build_pipeline(
    config: &RunConfig,
    channel: &NoiseChannel,
) -> Result<(TrainedPipeline, Dataset)> {
    let mut timings = Timings::default();

    let started = Instant::now();
    let pool = generate(
        config.n,
        config.train_size + config.test_size,
        channel,
        config.shots,
        derive_seed(config.seed, "data"),
    )?;
    let (train_set, test_set) =
        split_train_test(&pool, config.test_size, derive_seed(config.seed, "split"))?;
    timings.data_gen = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let response_matrix = calibrate(channel, config.li_shots, derive_seed(config.seed, "calib"))?;
    let solver = LiSolver::new(&response_matrix)?;
    timings.calibration = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mut nn_config = config.nn.clone();
    nn_config.seed = derive_seed(config.seed, "nn");
    let model = MlpModel::init(config.n, &nn_config)?;
    let (model, _history) = train(model, &train_set, &nn_config)?;
    timings.training = started.elapsed().as_secs_f64();

    Ok((
        TrainedPipeline {
            model,
            solver,
            train_size: train_set.len(),
            timings,
        },
        test_set,
    ))
}

fn assemble_report(
    config: &RunConfig,
    channel: &NoiseChannel,
    pipeline: &TrainedPipeline,
    test_set: &Dataset,
    time_index: Option<i64>,
) -> Result<BenchmarkReport> {
    let started = Instant::now();
    let (methods, improvement_ratios) =
        evaluate_methods(test_set, &pipeline.solver, &pipeline.model)?;
    let mut timings = pipeline.timings;
    timings.inference = started.elapsed().as_secs_f64();
    Ok(BenchmarkReport {
        n: config.n,
        channel: channel.description(),
        time_index,
        train_size: pipeline.train_size,
        test_size: test_set.len(),
        methods,
        improvement_ratios,
        config_fingerprint: config.fingerprint(),
        train_fingerprint: pipeline
            .model
            .train_fingerprint()
            .unwrap_or_default()
            .to_string(),
        timings,
    })
}

/// The standard protocol: generate, split, calibrate, train, evaluate.
pub fn run_standard(config: &RunConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let channel = config.channel.build()?;
    if matches!(channel, NoiseChannel::Drifting(_)) {
        return Err(Error::InvalidConfig(
            "standard mode needs a concrete channel; use drift mode".into(),
        ));
    }
    let (pipeline, test_set) = build_pipeline(config, &channel)?;
    assemble_report(config, &channel, &pipeline, &test_set, None)
}

/// Drift protocol: train and calibrate once at t = 0, then evaluate fixed
/// mitigators on fresh test sets drawn from the drifted channel at
/// t = 1..=horizon.
pub fn run_drift(config: &RunConfig, horizon: usize) -> Result<Vec<BenchmarkReport>> {
    config.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidConfig("drift horizon must be >= 1".into()));
    }
    let drifting = match config.channel.build()? {
        NoiseChannel::Drifting(d) => d,
        _ => return Err(Error::InvalidConfig("drift mode needs a drifting channel".into())),
    };
    let base = drifting.drift_at(0)?;
    let (pipeline, _base_test) = build_pipeline(config, &base)?;
    let mut reports = Vec::with_capacity(horizon);
    for t in 1..=horizon as i64 {
        let channel_t = drifting.drift_at(t)?;
        let mut test_t = generate(
            config.n,
            config.test_size,
            &channel_t,
            config.shots,
            derive_seed_indexed(config.seed, "drift-test", t as u64),
        )?;
        test_t.set_time_index(t);
        reports.push(assemble_report(config, &channel_t, &pipeline, &test_t, Some(t))?);
    }
    Ok(reports)
}

/// Subsample ablation: the standard run and a rerun with the training set cut
/// to ⌈fraction·N⌉ records, sharing the test set and LI calibration. Returns
/// (full, subsampled) reports.
pub fn run_subsample(
    config: &RunConfig,
    fraction: f64,
) -> Result<(BenchmarkReport, BenchmarkReport)> {
    config.validate()?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "subsample fraction {fraction} outside (0, 1); use run_standard for the full set"
        )));
    }
    let channel = config.channel.build()?;
    if matches!(channel, NoiseChannel::Drifting(_)) {
        return Err(Error::InvalidConfig("subsample mode needs a concrete channel".into()));
    }

    let mut timings = Timings::default();
    let started = Instant::now();
    let pool = generate(
        config.n,
        config.train_size + config.test_size,
        &channel,
        config.shots,
        derive_seed(config.seed, "data"),
    )?;
    let (train_full, test_set) =
        split_train_test(&pool, config.test_size, derive_seed(config.seed, "split"))?;
    let train_half = subsample(&train_full, fraction, derive_seed(config.seed, "subsample"))?;
    timings.data_gen = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let response_matrix =
        calibrate(&channel, config.li_shots, derive_seed(config.seed, "calib"))?;
    let solver = LiSolver::new(&response_matrix)?;
    timings.calibration = started.elapsed().as_secs_f64();

    let mut nn_config = config.nn.clone();
    nn_config.seed = derive_seed(config.seed, "nn");
    let train_one = |set: &Dataset| -> Result<(MlpModel, f64)> {
        let started = Instant::now();
        let model = MlpModel::init(config.n, &nn_config)?;
        let (model, _) = train(model, set, &nn_config)?;
        Ok((model, started.elapsed().as_secs_f64()))
    };
    let (model_full, t_full) = train_one(&train_full)?;
    let (model_half, t_half) = train_one(&train_half)?;

    let report_for = |model: &MlpModel, train_len: usize, train_secs: f64| -> Result<BenchmarkReport> {
        let pipeline = TrainedPipeline {
            model: model.clone(),
            solver: solver.clone(),
            train_size: train_len,
            timings: Timings { training: train_secs, ..timings },
        };
        assemble_report(config, &channel, &pipeline, &test_set, None)
    };
    Ok((
        report_for(&model_full, train_full.len(), t_full)?,
        report_for(&model_half, train_half.len(), t_half)?,
    ))
}

/// Transfer protocol: train the NN and calibrate LI against channel A, then
/// evaluate both on a test set drawn from channel B.
pub fn run_transfer(config_a: &RunConfig, config_b: &RunConfig) -> Result<BenchmarkReport> {
    config_a.validate()?;
    if config_a.n != config_b.n {
        return Err(Error::InvalidConfig(format!(
            "transfer needs matching qubit counts, got {} and {}",
            config_a.n, config_b.n
        )));
    }
    let channel_a = config_a.channel.build()?;
    let channel_b = config_b.channel.build()?;
    if matches!(channel_a, NoiseChannel::Drifting(_))
        || matches!(channel_b, NoiseChannel::Drifting(_))
    {
        return Err(Error::InvalidConfig("transfer mode needs concrete channels".into()));
    }
    let (pipeline, _test_a) = build_pipeline(config_a, &channel_a)?;
    let test_b = generate(
        config_b.n,
        config_b.test_size,
        &channel_b,
        config_b.shots,
        derive_seed(config_b.seed, "transfer-test"),
    )?;
    let mut report = assemble_report(config_a, &channel_b, &pipeline, &test_b, None)?;
    report.channel = format!(
        "transfer: trained on {}, evaluated on {}",
        channel_a.description(),
        channel_b.description()
    );
    Ok(report)
}

/// The transfer partner embedded in a transfer-mode config: the same run
/// parameters pointed at channel B.
pub fn transfer_partner(config: &RunConfig) -> Result<RunConfig> {
    match &config.mode {
        RunMode::Transfer { channel_b } => {
            let mut partner = config.clone();
            partner.channel = channel_b.clone();
            partner.mode = RunMode::Standard;
            Ok(partner)
        }
        _ => Err(Error::InvalidConfig("config is not in transfer mode".into())),
    }
}

/// Exposes the calibrated response matrix exactly as `run_standard` would
/// build it (for the `calibrate` subcommand).
pub fn calibrate_for(config: &RunConfig) -> Result<ResponseMatrix> {
    let channel = config.channel.build()?;
    let channel = match channel {
        NoiseChannel::Drifting(d) => d.drift_at(0)?,
        other => other,
    };
    calibrate(&channel, config.li_shots, derive_seed(config.seed, "calib"))
}
