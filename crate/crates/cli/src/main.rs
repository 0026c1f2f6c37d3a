//! `tdcsem` command-line entry point.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tdcsem::classical_inversion::{
    benchmark_cases, benchmark_run, benchmark_table, multi_start_invert, setup_for, BenchmarkMethod, StartPolicy,
};
use tdcsem::em_forward::{
    dense_grid_correlations, reference_models, whole_space_check, FrequencyGrid, SampleLayout, SurveyGeometry,
    Transient,
};
use tdcsem::evaluation::{
    amplitude_sweep, bootstrap_ci, emit_report, metrics_table, r2_metrics, snr_sweep, ReportTable, RunManifest,
    SnrLevel, SweepInput,
};
use tdcsem::synth_data::{
    generate_dataset, parameter_names, AmplitudeAug, Curriculum, Dataset, Record, Split, TrainNoise, WaveformNoise,
};
use tdcsem::tcn_core::{Architecture, Network};
use tdcsem::training::{predict_params, record_tensors, train_with_progress, write_epoch_log, ModelCheckpoint, TrainConfig};
use tdcsem::uq::{uq_report, uq_table};

use config::RunConfig;

/// Failure of one command; usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime { module: &'static str, source: tdcsem::Error },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Runtime { module, source } => write!(f, "{module}: {source}"),
        }
    }
}

trait Context<T> {
    fn ctx(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for tdcsem::Result<T> {
    fn ctx(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            tdcsem::Error::Usage(m) => CliError::Usage(m),
            source => CliError::Runtime { module, source },
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn ctx(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime { module, source: e.into() })
    }
}

#[derive(Parser, Debug)]
#[command(name = "tdcsem", version, about = "Time-domain marine CSEM inversion toolkit")]
struct Cli {
    /// TOML file with [generate], [train], [invert], [benchmark], [uq] and [eval] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Arch {
    DualTcn,
    TcnOnly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    Standard,
    Ratio,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Augment {
    /// No augmentation.
    Clean,
    /// White waveform noise only.
    White,
    /// White waveform noise plus curriculum-scheduled random amplitude noise.
    AmpAug,
    /// White waveform noise plus curriculum-scheduled per-receiver bias.
    RecvBias,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset file.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network; writes the best checkpoint and an epoch CSV next to it.
    Train {
        #[arg(long = "in")]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        arch: Option<Arch>,
        #[arg(long, value_enum)]
        layout: Option<Layout>,
        #[arg(long, value_enum)]
        augment: Option<Augment>,
    },
    /// Per-sample parameter estimates from a checkpoint or classical inversion.
    Invert {
        #[arg(long = "in")]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Network checkpoint; without it the classical solver is used.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Invert at most this many samples.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the classical solvers on a noise-free subset.
    Benchmark {
        #[arg(long = "in")]
        data: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        /// Adds warm-started variants seeded with this network's estimates.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interval coverage of MC dropout, temperature scaling, conformal and ensembles.
    Uq {
        #[arg(long = "in")]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Extra ensemble members.
        #[arg(long)]
        member: Vec<PathBuf>,
        #[arg(long)]
        passes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean metrics plus noise and amplitude sweeps.
    Eval {
        #[arg(long = "in")]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the forward solver with the whole-space field and the dense grid.
    ValidateForward {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Runtime { .. } => 1,
            })
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let preset = match &cli.command {
        Command::Train { preset: Preset::Full, .. } => TrainConfig::default(),
        _ => TrainConfig::desk(),
    };
    let mut cfg = RunConfig::load(cli.config.as_deref(), preset)?;
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate { n, seed, layers, out } => {
            let g = &mut cfg.generate;
            g.n = n.unwrap_or(g.n);
            g.seed = seed.unwrap_or(g.seed);
            g.layers = layers.unwrap_or(g.layers);
            cmd_generate(&cfg, &out)
        }
        Command::Train { data, out, epochs, batch_size, lr, seed, arch, layout, augment, .. } => {
            let t = &mut cfg.train;
            t.epochs = epochs.unwrap_or(t.epochs);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            t.peak_lr = lr.unwrap_or(t.peak_lr);
            t.seed = seed.unwrap_or(t.seed);
            if let Some(a) = arch {
                t.network.architecture = match a {
                    Arch::DualTcn => Architecture::DualTcn,
                    Arch::TcnOnly => Architecture::TcnOnly,
                };
            }
            if let Some(l) = layout {
                t.layout = match l {
                    Layout::Standard => SampleLayout::Standard,
                    Layout::Ratio => SampleLayout::Ratio,
                };
            }
            if let Some(a) = augment {
                t.noise = augment_preset(a, t.epochs);
            }
            t.checkpoint = Some(out.clone());
            cmd_train(&cfg, &data, &out)
        }
        Command::Invert { data, split, checkpoint, limit, out } => {
            cmd_invert(&cfg, &data, split, checkpoint.as_deref(), limit, &out)
        }
        Command::Benchmark { data, samples, checkpoint, out } => {
            cfg.benchmark.samples = samples.unwrap_or(cfg.benchmark.samples);
            cmd_benchmark(&cfg, &data, checkpoint.as_deref(), &out)
        }
        Command::Uq { data, checkpoint, member, passes, seed, out } => {
            cfg.uq.passes = passes.unwrap_or(cfg.uq.passes);
            cfg.uq.seed = seed.unwrap_or(cfg.uq.seed);
            cmd_uq(&cfg, &data, &checkpoint, &member, &out)
        }
        Command::Eval { data, checkpoint, seed, repeats, out } => {
            cfg.eval.seed = seed.unwrap_or(cfg.eval.seed);
            cfg.eval.repeats = repeats.unwrap_or(cfg.eval.repeats);
            cmd_eval(&cfg, &data, &checkpoint, &out)
        }
        Command::ValidateForward { out } => cmd_validate_forward(&cfg, &out),
    }
}

/// Curriculum-scheduled amplitude augmentation: clean for the first fifth
/// of training, full strength from two fifths on.
fn augment_preset(a: Augment, epochs: usize) -> TrainNoise {
    let curriculum = Some(Curriculum { clean_until: epochs as f64 / 5.0, ramp_until: 2.0 * epochs as f64 / 5.0 });
    match a {
        Augment::Clean => TrainNoise::clean(),
        Augment::White => TrainNoise::default(),
        Augment::AmpAug => TrainNoise { waveform: WaveformNoise::White, amplitude: AmplitudeAug::amp_aug(), curriculum },
        Augment::RecvBias => TrainNoise { waveform: WaveformNoise::White, amplitude: AmplitudeAug::recv_bias(), curriculum },
    }
}

fn section_json(value: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn manifest(command: &str, config: &impl Serialize, seeds: Vec<u64>, datasets: &[&Path]) -> Result<RunManifest, CliError> {
    let mut m = RunManifest::new(command, section_json(config));
    m.seeds = seeds;
    for d in datasets {
        m = m.with_dataset(d).ctx("evaluation")?;
    }
    Ok(m)
}

fn write_manifest(path: &Path, m: &RunManifest) -> Result<(), CliError> {
    std::fs::write(path, m.render().ctx("evaluation")?).ctx("cli")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load(path).ctx("synth_data")
}

fn load_checkpoint(path: &Path) -> Result<(ModelCheckpoint, Network), CliError> {
    let ck = ModelCheckpoint::load(path).ctx("training")?;
    let net = ck.to_network().ctx("training")?;
    Ok((ck, net))
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = generate_dataset(&cfg.generate, out).ctx("synth_data")?;
    let m = manifest("generate", &cfg.generate, vec![cfg.generate.seed], &[out])?;
    write_manifest(&sibling(out, ".manifest.txt"), &m)?;
    let [tr, va, te] = [Split::Train, Split::Val, Split::Test].map(|s| ds.split(s).len());
    println!("wrote {} samples ({tr}/{va}/{te} train/val/test) to {}", ds.len(), out.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), CliError> {
    let mut t = cfg.train.clone();
    let ds = load_dataset(data)?;
    t.network.in_channels = t.layout.channels(ds.header.receivers());
    t.network.outputs = ds.header.targets();
    if t.loss.weights.len() != t.network.outputs {
        t.loss = tdcsem::training::LossConfig::for_outputs(t.network.outputs);
    }
    let outcome = train_with_progress(&ds, &t, |r| {
        eprintln!("epoch {:>3}  train {:.5}  val {:.5}  lr {:.2e}", r.epoch, r.train_loss, r.val_loss, r.lr)
    })
    .ctx("training")?;
    let log_path = sibling(out, ".epochs.csv");
    write_epoch_log(std::fs::File::create(&log_path).ctx("cli")?, t.network.outputs, &outcome.log).ctx("training")?;
    let m = manifest("train", &t, vec![t.seed], &[data])?;
    write_manifest(&sibling(out, ".manifest.txt"), &m)?;
    println!(
        "best validation loss {:.6} at epoch {}; checkpoint {}, log {}",
        outcome.best.best_val_loss,
        outcome.best.epoch,
        out.display(),
        log_path.display()
    );
    Ok(())
}

/// Observed traces of a stored record: waveform times peak.
fn record_transient(r: &Record) -> tdcsem::Result<Transient> {
    Transient::new(
        r.waveforms
            .iter()
            .zip(&r.log_peaks)
            .map(|(w, &l)| {
                let a = 10f64.powf(l as f64);
                w.iter().map(|&v| v as f64 * a).collect()
            })
            .collect(),
    )
}

fn cmd_invert(
    cfg: &RunConfig,
    data: &Path,
    split: Split,
    checkpoint: Option<&Path>,
    limit: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let offset = ds.indices(split).start;
    let records = ds.split(split);
    let records = &records[..limit.unwrap_or(records.len()).min(records.len())];
    let k = ds.header.targets();
    let names = parameter_names(k);
    let mut header: Vec<&str> = vec!["index"];
    header.extend(names);
    let mut table;
    let m;
    if let Some(path) = checkpoint {
        let (ck, net) = load_checkpoint(path)?;
        let pred = predict_params(&net, &record_tensors(records, ck.layout).ctx("training")?, 256).ctx("training")?;
        table = ReportTable::new("invert", &header);
        for (i, p) in pred.iter().enumerate() {
            let mut row = vec![(offset + i).to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            table.push(row);
        }
        m = manifest("invert --network", &serde_json::json!({"checkpoint": path, "split": split}), vec![], &[data, path])?;
    } else {
        header.extend(["objective", "evals"]);
        table = ReportTable::new("invert", &header);
        let setup = setup_for(&ds.header);
        use rayon::prelude::*;
        let results = records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let obs = record_transient(r)?;
                multi_start_invert(&obs, &setup, k, &cfg.invert, None, (offset + i) as u64)
            })
            .collect::<tdcsem::Result<Vec<_>>>()
            .ctx("classical_inversion")?;
        for (i, r) in results.iter().enumerate() {
            let mut row = vec![(offset + i).to_string()];
            row.extend(r.theta.iter().map(|v| v.to_string()));
            row.extend([r.objective.to_string(), r.evals.to_string()]);
            table.push(row);
        }
        m = manifest("invert --classical", &cfg.invert, vec![cfg.invert.seed], &[data])?;
    }
    table.write_csv(std::fs::File::create(out).ctx("cli")?).ctx("evaluation")?;
    write_manifest(&sibling(out, ".manifest.txt"), &m)?;
    println!("wrote {} estimates to {}", table.rows.len(), out.display());
    Ok(())
}

fn cmd_benchmark(cfg: &RunConfig, data: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let b = &cfg.benchmark;
    let range = ds.indices(b.split);
    let indices: Vec<usize> = range.clone().take(b.samples).collect();
    let setup = setup_for(&ds.header);
    let mut cases = benchmark_cases(&ds.header, &indices, &setup).ctx("classical_inversion")?;
    let mut methods = b.methods.clone();
    let mut inputs: Vec<&Path> = vec![data];
    if let Some(path) = checkpoint {
        let (ck, net) = load_checkpoint(path)?;
        let recs: Vec<Record> = indices.iter().map(|&i| ds.records[i].clone()).collect();
        let warm = predict_params(&net, &record_tensors(&recs, ck.layout).ctx("training")?, 256).ctx("training")?;
        for (c, w) in cases.iter_mut().zip(warm) {
            c.warm = Some(w);
        }
        methods.extend(b.methods.iter().map(|m| BenchmarkMethod {
            name: format!("{}-warm", m.name),
            config: tdcsem::classical_inversion::InversionConfig { starts: StartPolicy::Warm, ..m.config.clone() },
        }));
        inputs.push(path);
    }
    let reports = benchmark_run(&cases, &methods, &setup).ctx("classical_inversion")?;
    let m = manifest("benchmark", &b, b.methods.iter().map(|m| m.config.seed).collect(), &inputs)?;
    emit_report(out, &[benchmark_table(&reports)], &m).ctx("evaluation")?;
    for r in &reports {
        println!(
            "{:<24} mean R2 {:>8}  {:.2} s/sample  {:.0} evals",
            r.name,
            r.metrics.mean_r2.map_or("n/a".into(), |v| format!("{v:.4}")),
            r.seconds_per_sample,
            r.mean_evals
        );
    }
    Ok(())
}

fn cmd_uq(cfg: &RunConfig, data: &Path, checkpoint: &Path, members: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let (ck, net) = load_checkpoint(checkpoint)?;
    let extra = members.iter().map(|p| load_checkpoint(p).map(|(_, n)| n)).collect::<Result<Vec<_>, _>>()?;
    let cal = SweepInput::from_records(ds.split(Split::Val));
    let test = SweepInput::from_records(ds.split(Split::Test));
    let rows = uq_report(&net, &extra, ck.layout, &cal, &test, &cfg.uq).ctx("uq")?;
    let mut inputs: Vec<&Path> = vec![data, checkpoint];
    inputs.extend(members.iter().map(PathBuf::as_path));
    let m = manifest("uq", &cfg.uq, vec![cfg.uq.seed], &inputs)?;
    emit_report(out, &[uq_table(&rows, ds.header.targets())], &m).ctx("evaluation")?;
    for r in rows.iter().filter(|r| (r.coverage.level - 0.9).abs() < 1e-12) {
        let picp: Vec<String> = r.coverage.picp.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:<24} PICP90 [{}]", r.method, picp.join(", "));
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let (ck, net) = load_checkpoint(checkpoint)?;
    let e = &cfg.eval;
    let input = SweepInput::from_records(ds.split(e.split));
    let x = input.tensors(ck.layout).ctx("evaluation")?;
    let pred = predict_params(&net, &x, 256).ctx("training")?;
    let names = parameter_names(ds.header.targets());
    let mut clean = r2_metrics(&pred, &input.targets, names, "clean").ctx("evaluation")?;
    if e.bootstrap > 0 {
        clean.ci = Some(bootstrap_ci(&pred, &input.targets, e.bootstrap, 0.95, e.seed).ctx("evaluation")?);
    }
    let mut levels = vec![SnrLevel::Clean];
    levels.extend(e.snr_db.iter().map(|&d| SnrLevel::Db(d)));
    let snr = snr_sweep(&net, ck.layout, &input, &levels, e.seed, e.repeats).ctx("evaluation")?;
    let amp = amplitude_sweep(&net, ck.layout, &input, &e.amplitude_grid, e.seed).ctx("evaluation")?;
    let m = manifest("eval", e, vec![e.seed], &[data, checkpoint])?;
    emit_report(
        out,
        &[metrics_table("clean", &[clean.clone()]), metrics_table("snr", &snr), metrics_table("amplitude", &amp)],
        &m,
    )
    .ctx("evaluation")?;
    let r2: Vec<String> = clean.params.iter().map(|p| format!("{}={}", p.name, p.r2.map_or("n/a".into(), |v| format!("{v:.4}")))).collect();
    println!("clean: {}", r2.join("  "));
    Ok(())
}

fn cmd_validate_forward(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let geom = SurveyGeometry::default();
    let ws = whole_space_check(1.0, &geom, &FrequencyGrid::paper64()).ctx("em_forward")?;
    let corr = dense_grid_correlations(&reference_models(), &geom).ctx("em_forward")?;
    let mut t_ws = ReportTable::new("whole_space", &["offset_m", "frequency_hz", "rel_error"]);
    for p in &ws {
        t_ws.push(vec![p.offset.to_string(), p.frequency.to_string(), p.rel_error.to_string()]);
    }
    let mut t_c = ReportTable::new("dense_grid", &["model", "offset_m", "correlation"]);
    for c in &corr {
        t_c.push(vec![c.model.clone(), c.offset.to_string(), c.r.to_string()]);
    }
    let m = manifest("validate-forward", &serde_json::json!({"geometry": geom, "threads": cfg.threads}), vec![], &[])?;
    emit_report(out, &[t_ws, t_c], &m).ctx("evaluation")?;
    let max = ws.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    println!("whole-space max relative error: {max:.3e}");
    for c in &corr {
        println!("dense vs paper64  model {}  offset {:>5} m  r = {:.4}", c.model, c.offset, c.r);
    }
    Ok(())
}
