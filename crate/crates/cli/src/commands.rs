use std::path::{Path, PathBuf};

use iqn_rnn::data::{gmm_true_quantile, split, write_csv, write_jsonl, DataFormat, GmmSpec};
use iqn_rnn::evaluation::{
    backtest, pooled_quantiles, write_item_csv, write_report_json, write_report_text, Clairvoyant, Forecaster,
    MetricConfig, SeasonalNaiveSampler,
};
use iqn_rnn::forecaster::{write_forecasts_csv, ForecastRequest, ModelConfig};
use iqn_rnn::gradcheck::{gradient_check, GradCheckConfig};

use crate::args::{
    Baseline, Cli, Command, EvaluateArgs, ForecastArgs, GradcheckArgs, ModelArgs, Precision, SynthArgs, TrainArgs,
};
use crate::config::{
    data_source, defaults_for, gmm_spec, read_json, DataSource, EvaluateConfig, ForecastConfig, SynthConfig,
    TrainConfig, CHECKPOINT, TRAIN_CONFIG,
};
use crate::error::{CliError, CliResult};
use crate::model::AnyModel;
use crate::staging::Staging;

pub fn run(cli: Cli) -> CliResult<()> {
    let out = cli.out_dir;
    match cli.command {
        Command::Train(a) => train(a, &out),
        Command::Forecast(a) => forecast(a, &out),
        Command::Evaluate(a) => evaluate(a, &out),
        Command::Synth(a) => synth(a, &out),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn train(args: TrainArgs, out: &Path) -> CliResult<()> {
    let base: Option<TrainConfig> = args.config.as_deref().map(read_json).transpose()?;
    let data = data_source(&args.data, base.as_ref().map(|b| &b.data))?
        .ok_or_else(|| CliError::Config("one of --data, --synth-gmm or --config is required".into()))?;
    let (mut model, default_windows) = match &base {
        Some(b) => (b.model.clone(), b.windows),
        None => defaults_for(&data, args.model.domain, args.model.freq, args.model.prediction_length),
    };
    args.model.apply(&mut model);
    model.validate()?;
    let cfg = TrainConfig {
        data,
        model,
        precision: args
            .precision
            .or(base.as_ref().map(|b| b.precision))
            .unwrap_or(Precision::F32),
        windows: args.windows.unwrap_or(default_windows),
    };

    let dataset = cfg
        .data
        .load(cfg.model.domain, cfg.model.freq, cfg.model.prediction_length)?;
    let parts = split(&dataset, cfg.windows)?;
    log::info!(
        "{} series, {} windows withheld, {} training points",
        dataset.len(),
        cfg.windows,
        parts.train.series().iter().map(|s| s.len()).sum::<usize>()
    );
    if args.dry_run {
        let mut staging = Staging::new(out)?;
        staging.write_json(TRAIN_CONFIG, &cfg)?;
        report_written(&staging.commit()?);
        return Ok(());
    }
    let mut net = AnyModel::new(cfg.model.clone(), cfg.precision)?;
    let started = std::time::Instant::now();
    let report = net.fit(&parts.train)?;
    log::info!(
        "trained {} epochs in {:.1?}",
        report.epoch_losses.len(),
        started.elapsed()
    );
    if report.skipped_series > 0 {
        log::warn!("{} series too short for a training window", report.skipped_series);
    }

    let mut staging = Staging::new(out)?;
    staging.write(CHECKPOINT, |w| Ok(net.save(w)?))?;
    staging.write("loss_trace.csv", |w| {
        writeln!(w, "epoch,loss")?;
        for (i, l) in report.epoch_losses.iter().enumerate() {
            writeln!(w, "{},{l}", i + 1)?;
        }
        Ok(())
    })?;
    staging.write_json(TRAIN_CONFIG, &cfg)?;
    report_written(&staging.commit()?);
    if let Some(l) = report.epoch_losses.last() {
        println!("final_loss={l}");
    }
    Ok(())
}

/// The training config stored beside a checkpoint, if any.
fn sibling_train_config(checkpoint: &Path) -> CliResult<Option<TrainConfig>> {
    let path = checkpoint.with_file_name(TRAIN_CONFIG);
    if path.exists() {
        read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn load_checked(checkpoint: &Path, flags: &ModelArgs, expected: Option<&ModelConfig>) -> CliResult<AnyModel> {
    let net = AnyModel::load(checkpoint)?;
    let mut problems = flags.conflicts(net.config());
    if let Some(e) = expected {
        problems.extend(config_differences(e, net.config()));
    }
    if !problems.is_empty() {
        return Err(CliError::Config(format!(
            "checkpoint {} does not match the requested model: {}",
            checkpoint.display(),
            problems.join("; ")
        )));
    }
    Ok(net)
}

fn config_differences(a: &ModelConfig, b: &ModelConfig) -> Vec<String> {
    let (Ok(serde_json::Value::Object(a)), Ok(serde_json::Value::Object(b))) =
        (serde_json::to_value(a), serde_json::to_value(b))
    else {
        return vec!["unserialisable config".into()];
    };
    a.iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, v)| format!("{k} {v} vs checkpoint {}", b.get(k).unwrap_or(&serde_json::Value::Null)))
        .collect()
}

fn forecast(args: ForecastArgs, out: &Path) -> CliResult<()> {
    let base: Option<ForecastConfig> = args.config.as_deref().map(read_json).transpose()?;
    let checkpoint = args
        .checkpoint
        .clone()
        .or_else(|| base.as_ref().map(|b| b.checkpoint.clone()))
        .unwrap_or_else(|| out.join(CHECKPOINT));
    let trained = sibling_train_config(&checkpoint)?;
    let net = load_checked(&checkpoint, &args.model, None)?;
    let fallback = base.as_ref().map(|b| &b.data).or(trained.as_ref().map(|t| &t.data));
    let data = data_source(&args.data, fallback)?
        .ok_or_else(|| CliError::Config("no data source: pass --data or --synth-gmm".into()))?;
    let m = net.config().clone();
    let cfg = ForecastConfig {
        checkpoint,
        data,
        num_samples: args
            .num_samples
            .or(base.as_ref().map(|b| b.num_samples))
            .unwrap_or(m.num_parallel_samples),
        seed: args.sample_seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(m.seed),
    };
    let dataset = cfg.data.load(m.domain, m.freq, m.prediction_length)?;
    let requests: Vec<ForecastRequest<'_>> = dataset
        .series()
        .iter()
        .zip(0u64..)
        .map(|(s, stream)| ForecastRequest {
            series: s,
            history_len: s.len(),
            stream,
        })
        .collect();
    let sets = net.forecast(&requests, m.prediction_length, cfg.num_samples, cfg.seed)?;

    let mut staging = Staging::new(out)?;
    staging.write("forecasts.csv", |w| Ok(write_forecasts_csv(&sets, w)?))?;
    staging.write_json("forecast_config.json", &cfg)?;
    report_written(&staging.commit()?);
    Ok(())
}

fn evaluate(args: EvaluateArgs, out: &Path) -> CliResult<()> {
    let base: Option<EvaluateConfig> = args.config.as_deref().map(read_json).transpose()?;
    let baseline = match (&args.baseline, &args.checkpoint) {
        (Some(b), _) => Some(*b),
        (None, Some(_)) => None,
        (None, None) => base.as_ref().and_then(|b| b.baseline),
    };
    let checkpoint = match baseline {
        Some(_) => None,
        None => Some(
            args.checkpoint
                .clone()
                .or_else(|| base.as_ref().and_then(|b| b.checkpoint.clone()))
                .unwrap_or_else(|| out.join(CHECKPOINT)),
        ),
    };
    let trained = checkpoint.as_deref().map(sibling_train_config).transpose()?.flatten();
    let fallback = base.as_ref().map(|b| &b.data).or(trained.as_ref().map(|t| &t.data));
    let data = data_source(&args.data, fallback)?
        .ok_or_else(|| CliError::Config("no data source: pass --data or --synth-gmm".into()))?;

    let (forecaster, model): (Box<dyn Forecaster>, ModelConfig) = match (&checkpoint, baseline) {
        (Some(path), _) => {
            let net = load_checked(path, &args.model, base.as_ref().map(|b| &b.model))?;
            let m = net.config().clone();
            (Box::new(net), m)
        }
        (None, Some(kind)) => {
            let mut m = match &base {
                Some(b) => b.model.clone(),
                None => defaults_for(&data, args.model.domain, args.model.freq, args.model.prediction_length).0,
            };
            args.model.apply(&mut m);
            m.validate()?;
            let f: Box<dyn Forecaster> = match kind {
                Baseline::Clairvoyant => Box::new(Clairvoyant),
                Baseline::SeasonalNaive => Box::new(SeasonalNaiveSampler {
                    seasonality: m.freq.seasonality(),
                    seasons: m.freq.default_windows(),
                }),
            };
            (f, m)
        }
        (None, None) => unreachable!("either a checkpoint or a baseline is selected"),
    };

    let default_windows = match &data {
        DataSource::SynthGmm { .. } => 1,
        DataSource::File { .. } => model.freq.default_windows(),
    };
    let mut metrics = base
        .as_ref()
        .map(|b| b.metrics.clone())
        .unwrap_or_else(|| MetricConfig::new(model.freq.seasonality()));
    if let Some(m) = args.seasonality {
        metrics.seasonality = m;
    }
    if let Some(a) = args.alpha {
        metrics.alpha = a;
    }
    if let Some(g) = &args.quantile_grid {
        metrics.quantile_grid = g.clone();
    }
    let cfg = EvaluateConfig {
        checkpoint,
        baseline,
        windows: args
            .windows
            .or(base.as_ref().map(|b| b.windows))
            .or(trained.as_ref().map(|t| t.windows))
            .unwrap_or(default_windows),
        num_samples: args
            .num_samples
            .or(base.as_ref().map(|b| b.num_samples))
            .unwrap_or(model.num_parallel_samples),
        seed: args.sample_seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(model.seed),
        metrics,
        model,
        data,
    };

    let dataset = cfg
        .data
        .load(cfg.model.domain, cfg.model.freq, cfg.model.prediction_length)?;
    let result = backtest(
        forecaster.as_ref(),
        &dataset,
        cfg.windows,
        cfg.num_samples,
        cfg.seed,
        &cfg.metrics,
    )?;

    let mut staging = Staging::new(out)?;
    staging.write("metrics.txt", |w| Ok(write_report_text(&result.report, w)?))?;
    staging.write("metrics.json", |w| Ok(write_report_json(&result.report, w)?))?;
    staging.write("per_series.csv", |w| {
        Ok(write_item_csv(&result.items, &cfg.metrics, w)?)
    })?;
    if let Some(spec) = cfg.data.gmm_spec() {
        let rows = quantile_function(&result.forecasts, spec)?;
        staging.write("quantile_function.csv", |w| {
            writeln!(w, "tau,q_hat,q_true")?;
            for (t, q, truth) in &rows {
                writeln!(w, "{t},{q},{truth}")?;
            }
            Ok(())
        })?;
    }
    staging.write_json("evaluate_config.json", &cfg)?;
    let written = staging.commit()?;
    for (k, v) in result.report.entries() {
        println!("{k}={v}");
    }
    report_written(&written);
    Ok(())
}

/// `(τ, Q̂(τ), Q(τ))` for `τ = 0.01, …, 0.99`, pooling every sampled value.
fn quantile_function(
    forecasts: &[iqn_rnn::forecaster::ForecastSampleSet],
    spec: &GmmSpec,
) -> CliResult<Vec<(f64, f64, f64)>> {
    let taus: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let est = pooled_quantiles(forecasts, &taus)?;
    taus.iter()
        .zip(est)
        .map(|(&t, q)| Ok((t, q, gmm_true_quantile(spec, t)?)))
        .collect()
}

fn synth(args: SynthArgs, out: &Path) -> CliResult<()> {
    let cfg = SynthConfig {
        spec: gmm_spec(&args.gmm, GmmSpec::default()),
        seed: args.gmm.gmm_seed.unwrap_or(0),
        format: args.format,
    };
    let format: DataFormat = cfg.format.parse()?;
    let dataset = DataSource::SynthGmm {
        spec: cfg.spec.clone(),
        seed: cfg.seed,
    }
    .load(iqn_rnn::data::Domain::Real, iqn_rnn::data::Freq::Daily, 2)?;
    let mut staging = Staging::new(out)?;
    match format {
        DataFormat::JsonLines => staging.write("gmm.jsonl", |w| Ok(write_jsonl(&dataset, w)?))?,
        DataFormat::Csv => staging.write("gmm.csv", |w| Ok(write_csv(&dataset, w)?))?,
    }
    staging.write_json("synth_config.json", &cfg)?;
    report_written(&staging.commit()?);
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> CliResult<()> {
    let cfg = GradCheckConfig {
        seed: args.seed,
        domain: args.domain,
        num_layers: args.num_layers,
        ..GradCheckConfig::default()
    };
    let report = gradient_check(&cfg)?;
    println!("{report}");
    println!("max_rel_error={}", report.max_rel_error);
    if report.passed() {
        println!("gradcheck: pass");
        Ok(())
    } else {
        Err(CliError::GradCheck(format!(
            "{} of {} scalars exceed relative error {}",
            report.failures.len(),
            report.checked,
            cfg.rel_tol
        )))
    }
}
