use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use retinode::data::{
    fit_normalizer, generate_with_truth, load_recording, make_windows, perturb_noise, save_recording, ChannelNormalizer,
    RecordingSet, Split, SynthConfig,
};
use retinode::eval::{
    bench_inference, ci95, comparison_table, noise_table_csv, predict_windows, to_csv, BenchConfig, EvalReport,
    NoiseCondition, NoiseStudy, ReportMeta, RunGroup, RunResult, ScaleRow, TimingRow,
};
use retinode::model::{Model, ModelKind};
use retinode::train::{curves_csv, preset, train_with_progress, Checkpoint, TrainConfig};

use crate::args::{BenchArgs, Cli, Command, EvalArgs, NoiseArgs, SplitArg, SweepArgs, SynthArgs, TrainArgs};
use crate::sweep::{rows, run_sweep, Budget, SweepOptions, SweepSpec};

pub fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    match &cli.command {
        Command::Synth(a) => synth(&cli, a),
        Command::Train(a) => train_cmd(&cli, a),
        Command::Eval(a) => eval_cmd(&cli, a),
        Command::Bench(a) => bench_cmd(&cli, a),
        Command::NoiseEval(a) => noise_cmd(&cli, a),
        Command::Sweep(a) => sweep_cmd(&cli, a),
        Command::Presets => {
            for (name, _) in retinode::train::PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    }
}

/// Config from `--config` (file or `preset:NAME`) with `--seed` applied.
pub fn load_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match cli.config.as_deref() {
        None => TrainConfig::default(),
        Some(spec) => match spec.strip_prefix("preset:") {
            Some(name) => preset(name)?,
            None => TrainConfig::load(spec).with_context(|| format!("loading config {spec}"))?,
        },
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(path: &Path) -> Result<RecordingSet> {
    load_recording(path).with_context(|| format!("loading recording {}", path.display()))
}

fn dataset_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write(path, &serde_json::to_string_pretty(value)?)
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    path: String,
    frames: usize,
    channels: usize,
    seed: u64,
    lags: Vec<usize>,
    zero_fraction: f64,
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        t: a.t,
        n: a.n,
        seed: cli.seed.unwrap_or(0),
        ..SynthConfig::default()
    };
    if let Some(lo) = a.lag_min {
        cfg.lag_range[0] = lo;
    }
    if let Some(hi) = a.lag_max {
        cfg.lag_range[1] = hi;
    }
    if let Some(s) = a.sparsity {
        cfg.sparsity_target = s;
    }
    let synthetic = generate_with_truth(&cfg)?;
    let path = a.output.clone().unwrap_or_else(|| cli.out_dir.join("synthetic.rgcd"));
    save_recording(&synthetic.recording, &path).with_context(|| format!("writing {}", path.display()))?;
    let r = synthetic.recording.responses();
    let summary = SynthSummary {
        path: path.display().to_string(),
        frames: cfg.t,
        channels: cfg.n,
        seed: cfg.seed,
        lags: synthetic.channels.iter().map(|c| c.lag).collect(),
        zero_fraction: r.iter().filter(|&&v| v == 0.0).count() as f64 / r.len() as f64,
    };
    let json_path = path.with_extension("json");
    write_json(&json_path, &summary)?;
    println!("wrote {} ({} frames, {} channels)", path.display(), cfg.t, cfg.n);
    Ok(())
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct TrainSummary {
    pub variant: String,
    pub model: ModelKind,
    pub dataset: String,
    pub seed: u64,
    pub params: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub diverged: Option<String>,
    pub best_validation: usize,
    pub best_val_rho: f64,
    pub last_val_rho: f64,
    pub train_seconds: f64,
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    ensure!(a.repeat >= 1, "--repeat must be at least 1");
    let base = load_config(cli)?;
    let rec = load_data(&a.data)?;
    let dataset = dataset_id(&a.data);
    let mut failures = Vec::new();
    for r in 0..a.repeat {
        let mut cfg = base.clone();
        cfg.seed = base.seed.wrapping_add(r as u64);
        let dir = if a.repeat == 1 {
            cli.out_dir.clone()
        } else {
            cli.out_dir.join(format!("run-{r}"))
        };
        std::fs::create_dir_all(&dir)?;
        let label = cfg.variant_label();
        let out = train_with_progress(&cfg, &rec, &mut |p| {
            eprintln!(
                "[{label} seed {}] validation {} (epoch {}): train loss {:.5} val loss {:.5} val rho {:.4}{}",
                cfg.seed,
                p.index,
                p.epoch,
                p.train_loss,
                p.val_loss,
                p.val_rho,
                if p.improved { " *" } else { "" }
            );
        })?;
        out.best.save(dir.join("best.rgck"))?;
        out.last.save(dir.join("last.rgck"))?;
        write(&dir.join("curves.csv"), &curves_csv(&out.curves))?;
        write(&dir.join("config.toml"), &cfg.to_toml_string())?;
        let summary = TrainSummary {
            variant: label.clone(),
            model: cfg.model,
            dataset: dataset.clone(),
            seed: cfg.seed,
            params: out.best.params.iter().map(|p| p.numel()).sum(),
            epochs_run: out.epochs_run,
            stopped_early: out.stopped_early,
            diverged: out.diverged.clone(),
            best_validation: out.best_validation(),
            best_val_rho: out.best.val_rho(),
            last_val_rho: out.last.val_rho(),
            train_seconds: out.train_seconds,
        };
        write_json(&dir.join("train.json"), &summary)?;
        println!(
            "{label} seed {}: best val rho {:.4} at validation {} ({} epochs, {:.1}s) -> {}",
            cfg.seed,
            summary.best_val_rho,
            summary.best_validation,
            summary.epochs_run,
            summary.train_seconds,
            dir.display()
        );
        if let Some(reason) = out.diverged {
            failures.push(format!("seed {}: {reason}", cfg.seed));
        }
    }
    if !failures.is_empty() {
        bail!("training diverged ({}); partial curves and checkpoints were written", failures.join("; "));
    }
    Ok(())
}

/// A model to score plus everything needed to report it.
struct Scored {
    run_id: String,
    config: TrainConfig,
    model: Model,
    normalizer: ChannelNormalizer,
    train_seconds: f64,
}

fn from_checkpoint(path: &Path) -> Result<Scored> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let model = ckpt.model()?;
    // training time lives next to the checkpoint so checkpoints stay reproducible
    let train_seconds = path
        .parent()
        .map(|d| d.join("train.json"))
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str::<TrainSummary>(&s).ok())
        .map_or(f64::NAN, |s| s.train_seconds);
    Ok(Scored {
        run_id: path.display().to_string(),
        config: ckpt.meta.config.clone(),
        model,
        normalizer: ckpt.meta.normalizer.clone(),
        train_seconds,
    })
}

fn fresh(base: &TrainConfig, kind: &str, rec: &RecordingSet) -> Result<Scored> {
    let mut config = base.clone();
    config.name = String::new();
    config.model = kind.parse()?;
    let model = Model::new(config.model_config(rec.channels()))?;
    Ok(Scored {
        run_id: format!("fresh-{}", config.model),
        normalizer: fit_normalizer(rec, rec.range(Split::Train))?,
        config,
        model,
        train_seconds: f64::NAN,
    })
}

fn report(s: &Scored, rec: &RecordingSet, dataset: &str, split: Split) -> Result<EvalReport> {
    let windows = make_windows(rec, &s.config.plan, rec.range(split))?;
    let preds = predict_windows(&s.model, rec, &windows, &s.normalizer, s.config.eval_batch)?;
    let meta = ReportMeta {
        run_id: &s.run_id,
        model: s.config.model,
        variant: &s.config.variant_label(),
        dataset,
        split: split_name(split),
        params: s.model.count_params(),
    };
    Ok(EvalReport::new(meta, &preds.scores()?, preds.samples())?)
}

#[derive(Debug, Serialize)]
struct EvalRow<'a> {
    run_id: &'a str,
    model: String,
    variant: &'a str,
    dataset: &'a str,
    split: &'a str,
    samples: usize,
    rho: f64,
    mae: f64,
    params: usize,
    degenerate_channels: usize,
}

#[derive(Debug, Serialize)]
struct ChannelLine<'a> {
    run_id: &'a str,
    channel: usize,
    rho: f64,
    mae: f64,
    degenerate: bool,
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    ensure!(!a.checkpoints.is_empty() || !a.fresh.is_empty(), "nothing to evaluate: pass --checkpoint or --fresh");
    let rec = load_data(&a.data)?;
    let dataset = dataset_id(&a.data);
    let split = split_of(a.split);
    let mut scored = Vec::new();
    for p in &a.checkpoints {
        scored.push(from_checkpoint(p)?);
    }
    if !a.fresh.is_empty() {
        let base = load_config(cli)?;
        for kind in &a.fresh {
            scored.push(fresh(&base, kind, &rec)?);
        }
    }
    let mut reports = Vec::new();
    for s in &scored {
        let r = report(s, &rec, &dataset, split)?;
        println!("{}: {} rho {:.4} mae {:.4} ({} samples)", r.run_id, r.variant, r.rho, r.mae, r.samples);
        reports.push(r);
    }
    write_json(&cli.out_dir.join("eval.json"), &reports)?;
    let summary: Vec<EvalRow> = reports
        .iter()
        .map(|r| EvalRow {
            run_id: &r.run_id,
            model: r.model.to_string(),
            variant: &r.variant,
            dataset: &r.dataset,
            split: &r.split,
            samples: r.samples,
            rho: r.rho,
            mae: r.mae,
            params: r.params,
            degenerate_channels: r.channels.iter().filter(|c| c.degenerate).count(),
        })
        .collect();
    write(&cli.out_dir.join("eval.csv"), &to_csv(&summary)?)?;
    let lines: Vec<ChannelLine> = reports
        .iter()
        .flat_map(|r| {
            r.channels.iter().map(|c| ChannelLine {
                run_id: &r.run_id,
                channel: c.channel,
                rho: c.rho,
                mae: c.mae,
                degenerate: c.degenerate,
            })
        })
        .collect();
    write(&cli.out_dir.join("channels.csv"), &to_csv(&lines)?)?;

    // variants in first-seen order, each with all of its runs
    let mut groups: Vec<RunGroup> = Vec::new();
    for (r, s) in reports.iter().zip(&scored) {
        let run = RunResult {
            rho: r.rho,
            mae: r.mae,
            params: r.params,
            train_seconds: s.train_seconds,
        };
        match groups.iter_mut().find(|g| g.model == r.variant) {
            Some(g) => g.runs.push(run),
            None => groups.push(RunGroup {
                model: r.variant.clone(),
                runs: vec![run],
            }),
        }
    }
    let scales: Vec<ScaleRow> = groups
        .iter()
        .map(|g| {
            let k = g.runs.len() as f64;
            ScaleRow {
                dataset: dataset.clone(),
                model: g.model.clone(),
                rho: g.runs.iter().map(|r| r.rho).sum::<f64>() / k,
                mae: g.runs.iter().map(|r| r.mae).sum::<f64>() / k,
                params: g.runs[0].params,
                train_seconds: g.runs.iter().map(|r| r.train_seconds).sum::<f64>() / k,
            }
        })
        .collect();
    write(&cli.out_dir.join("multiscale.csv"), &to_csv(&scales)?)?;
    write_json(&cli.out_dir.join("multiscale.json"), &scales)?;
    if groups.iter().all(|g| g.runs.len() >= 2) {
        let table = comparison_table(&dataset, &groups)?;
        write(&cli.out_dir.join("comparison.csv"), &to_csv(&table)?)?;
        write_json(&cli.out_dir.join("comparison.json"), &table)?;
        for row in &table {
            println!(
                "{} rho {:.3} [{:.3}, {:.3}] mae {:.4} anova p {}",
                row.model,
                row.rho,
                row.ci_low,
                row.ci_high,
                row.mae,
                row.anova_p.map_or("-".into(), |p| format!("{p:.3e}"))
            );
        }
    } else {
        eprintln!("comparison table skipped: every variant needs at least two runs");
    }
    Ok(())
}

fn bench_cmd(cli: &Cli, a: &BenchArgs) -> Result<()> {
    ensure!(!a.checkpoints.is_empty() || !a.models.is_empty(), "nothing to time: pass --checkpoint or --models");
    let rec = load_data(&a.data)?;
    let dataset = dataset_id(&a.data);
    let mut scored = Vec::new();
    for p in &a.checkpoints {
        scored.push(from_checkpoint(p)?);
    }
    if !a.models.is_empty() {
        let base = load_config(cli)?;
        for kind in &a.models {
            scored.push(fresh(&base, kind, &rec)?);
        }
    }
    let mut rows = Vec::new();
    for s in &scored {
        let cfg = BenchConfig {
            batch: a.batch.unwrap_or(s.config.eval_batch),
            repetitions: a.repetitions,
            warmup: a.warmup,
            max_samples: a.max_samples,
        };
        let test = make_windows(&rec, &s.config.plan, rec.range(Split::Test))?;
        let train_windows = make_windows(&rec, &s.config.plan, rec.range(Split::Train))?.len();
        let t = bench_inference(&s.model, &rec, &test, train_windows, &cfg)?;
        let row = TimingRow::new(&s.config.variant_label(), &dataset, &t);
        println!(
            "{}: {:.3e} s/sample at batch 1, {:.3e} s/sample at batch {}",
            row.model, row.batch1_seconds, row.batch_seconds, row.batch_size
        );
        rows.push(row);
    }
    if let Some(conv) = rows.iter().find(|r| r.model.starts_with("ConvNet")) {
        for r in rows.iter().filter(|r| r.model.starts_with("LTC") || r.model.starts_with("CfC")) {
            let verdict = if r.batch1_seconds < conv.batch1_seconds { "faster" } else { "not faster" };
            println!("{} is {verdict} than {} at batch 1 on this machine", r.model, conv.model);
        }
    }
    write(&cli.out_dir.join("timing.csv"), &to_csv(&rows)?)?;
    write_json(&cli.out_dir.join("timing.json"), &rows)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct NoiseReport {
    study: NoiseStudy,
    relative_diffs: Vec<(f64, f64)>,
}

fn noise_cmd(cli: &Cli, a: &NoiseArgs) -> Result<()> {
    ensure!(
        a.sigmas.first() == Some(&0.0),
        "the σ list must start with 0 (the clean reference), got {:?}",
        a.sigmas
    );
    let rec = load_data(&a.data)?;
    let dataset = dataset_id(&a.data);
    let seed = cli.seed.unwrap_or(0);
    // one perturbed copy per σ, shared by every model
    let mut variants = Vec::with_capacity(a.sigmas.len());
    for (i, &sigma) in a.sigmas.iter().enumerate() {
        variants.push(if sigma == 0.0 {
            rec.clone()
        } else {
            rec.with_frames(perturb_noise(rec.frames(), sigma, seed.wrapping_add(i as u64))?)?
        });
    }
    let mut studies = Vec::new();
    for p in &a.checkpoints {
        let s = from_checkpoint(p)?;
        let mut conditions = Vec::new();
        for (sigma, data) in a.sigmas.iter().zip(&variants) {
            let r = report(&s, data, &dataset, Split::Test)?;
            println!("{} sigma {sigma}: rho {:.4}", s.config.variant_label(), r.rho);
            conditions.push(NoiseCondition { sigma: *sigma, rho: r.rho });
        }
        studies.push(NoiseStudy {
            model: s.config.variant_label(),
            dataset: dataset.clone(),
            conditions,
        });
    }
    write(&cli.out_dir.join("noise.csv"), &noise_table_csv(&studies)?)?;
    let reports = studies
        .into_iter()
        .map(|study| {
            let relative_diffs = study.relative_diffs()?;
            Ok(NoiseReport { study, relative_diffs })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&cli.out_dir.join("noise.json"), &reports)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Retrained {
    seeds: Vec<u64>,
    test_rho: Vec<f64>,
    mean: f64,
    ci_low: f64,
    ci_high: f64,
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let base = load_config(cli)?;
    let rec = load_data(&a.data)?;
    let spec: SweepSpec = match &a.space {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing search space {}", p.display()))?
        }
        None => SweepSpec::default(),
    };
    let budget = match (a.budget_runs, a.budget_seconds) {
        (Some(n), _) => Budget::Runs(n),
        (None, Some(s)) => Budget::Seconds(s),
        (None, None) => bail!("pass --budget-runs or --budget-seconds"),
    };
    let opts = SweepOptions {
        budget,
        epochs: a.epochs,
        workers: a.workers,
        seed: base.seed,
    };
    let runs = run_sweep(&base, &rec, &spec, &opts, &|r| {
        eprintln!(
            "run {}: {} n={} batch={} latent={} hidden={} lr {:.2e}/{:.2e} -> val rho {:.4} ({:.1}s)",
            r.index,
            r.trial.model,
            r.trial.subsequence,
            r.trial.batch_size,
            r.trial.latent_size,
            r.trial.hidden_size,
            r.trial.encoder_lr,
            r.trial.predictor_lr,
            r.val_rho,
            r.seconds
        );
    })?;
    write(&cli.out_dir.join("sweep.csv"), &to_csv(&rows(&runs))?)?;
    let best = runs.first().context("sweep finished without any run")?;
    let mut best_cfg = best.trial.apply(&base);
    best_cfg.seed = best.seed;
    write(&cli.out_dir.join("best.toml"), &best_cfg.to_toml_string())?;
    println!(
        "best of {} runs: run {} val rho {:.4} -> {}",
        runs.len(),
        best.index,
        best.val_rho,
        cli.out_dir.join("best.toml").display()
    );

    let mut json = BTreeMap::new();
    json.insert("space", serde_json::to_value(&spec)?);
    json.insert("runs", serde_json::to_value(&runs)?);
    if a.retrain > 0 {
        let r = retrain(&best_cfg, &rec, a.retrain)?;
        println!(
            "best config retrained {}x: test rho = {:.2} (±{:.2})",
            a.retrain,
            r.mean,
            (r.ci_high - r.ci_low) / 2.0
        );
        json.insert("retrained", serde_json::to_value(&r)?);
    }
    write_json(&cli.out_dir.join("sweep.json"), &json)?;
    Ok(())
}

fn retrain(cfg: &TrainConfig, rec: &RecordingSet, times: usize) -> Result<Retrained> {
    ensure!(times >= 2, "retraining needs at least 2 runs for an interval");
    let mut seeds = Vec::new();
    let mut test_rho = Vec::new();
    for j in 0..times {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(1000 + j as u64);
        let out = train_with_progress(&c, rec, &mut |_| {})?;
        let ckpt = out.selected();
        let s = Scored {
            run_id: format!("retrain-{j}"),
            config: c.clone(),
            model: ckpt.model()?,
            normalizer: ckpt.meta.normalizer.clone(),
            train_seconds: out.train_seconds,
        };
        let r = report(&s, rec, "retrain", Split::Test)?;
        seeds.push(c.seed);
        test_rho.push(r.rho);
    }
    let ci = ci95(&test_rho)?;
    Ok(Retrained {
        seeds,
        test_rho,
        mean: ci.mean,
        ci_low: ci.low,
        ci_high: ci.high,
    })
}

/// Paths written by `train` into `dir`.
pub fn train_artifacts(dir: &Path) -> [PathBuf; 5] {
    ["best.rgck", "last.rgck", "curves.csv", "config.toml", "train.json"].map(|f| dir.join(f))
}
