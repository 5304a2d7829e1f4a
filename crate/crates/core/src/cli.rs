//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal failure, 2 input error, 3 config error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::{Distance, RankingConfig};
use crate::datagen::{generate, BenchmarkSpec};
use crate::error::{Error, Result};
use crate::io::{self, EmbeddingFile, Format, RankingReport};
use crate::metrics::{evaluate, EvaluationReport, RSR_GRID};
use crate::ranking::rank_all;
use crate::trainer::{train, train_from, TrainConfig, TrainMode, TrainOutcome};
use crate::weighting::WeightSchedule;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "icsr", version, about = "Sample ranking and weighted self-training for clustering")]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "ICSR_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank every cluster into confidence groups and emit a JSON report.
    Rank(RankCmd),
    /// Print the group weight schedule as CSV.
    Weights(WeightsCmd),
    /// Score predicted labels against ground truth.
    Evaluate(EvaluateCmd),
    /// Run weighted self-training.
    Train(TrainCmd),
    /// Write a synthetic Gaussian-mixture embedding file.
    Generate(GenerateCmd),
    /// Train once per beta0 value and report final accuracy.
    Sweep(SweepCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FileFormat {
    Binary,
    Csv,
}

fn resolve_format(explicit: Option<FileFormat>, path: &Path) -> Format {
    match explicit {
        Some(FileFormat::Binary) => Format::Binary,
        Some(FileFormat::Csv) => Format::Csv,
        None => Format::from_path(path),
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long = "k0-frac")]
    pub k0_frac: Option<f64>,
    #[arg(long = "kmax-frac")]
    pub kmax_frac: Option<f64>,
    #[arg(long = "k-step")]
    pub k_step: Option<usize>,
    /// Number of groups; `--p` must list as many fractions when it differs from 5.
    #[arg(long)]
    pub m: Option<usize>,
    /// Comma-separated cumulative fractions, e.g. `0.15,0.35,0.55,0.75,0.95`.
    #[arg(long)]
    pub p: Option<String>,
    /// `euclidean` or `cosine`.
    #[arg(long)]
    pub metric: Option<String>,
    /// L2-normalise features before ranking.
    #[arg(long)]
    pub normalize: bool,
}

impl RankArgs {
    pub fn to_config(&self) -> Result<RankingConfig> {
        let mut cfg = RankingConfig::default();
        if let Some(v) = self.k0_frac {
            cfg.k0_fraction = v;
        }
        if let Some(v) = self.kmax_frac {
            cfg.kmax_fraction = v;
        }
        if let Some(v) = self.k_step {
            cfg.k_step = v;
        }
        if let Some(p) = &self.p {
            cfg.p_fractions = parse_f64_list(p, "p")?;
        }
        if let Some(m) = self.m {
            if self.p.is_none() && m != cfg.p_fractions.len() {
                return Err(Error::config("p", format!("--m {m} needs --p with {m} fractions")));
            }
            cfg.m = m;
        } else {
            cfg.m = cfg.p_fractions.len();
        }
        if let Some(metric) = &self.metric {
            cfg.distance = metric.parse::<Distance>()?;
        }
        cfg.normalize_features = self.normalize;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_f64_list(s: &str, field: &'static str) -> Result<Vec<f64>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::config(field, "empty list"));
    }
    items
        .into_iter()
        .map(|t| t.parse::<f64>().map_err(|_| Error::config(field, format!("`{t}` is not a number"))))
        .collect()
}

fn parse_usize_list(s: &str, field: &'static str) -> Result<Vec<usize>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::config(field, "empty list"));
    }
    items
        .into_iter()
        .map(|t| t.parse::<usize>().map_err(|_| Error::config(field, format!("`{t}` is not an integer"))))
        .collect()
}

#[derive(Debug, Args)]
pub struct RankCmd {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
    #[command(flatten)]
    pub ranking: RankArgs,
    /// Epoch used for the window increments.
    #[arg(long, default_value_t = 0)]
    pub epoch: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightsCmd {
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = 0.02, allow_hyphen_values = true)]
    pub beta0: f64,
    /// Comma-separated epochs.
    #[arg(long, default_value = "0")]
    pub epochs: String,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    /// Predicted labels: a label file (one per line) or an embedding file,
    /// whose assignments are used.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth: a label file or an embedding file with a truth block.
    #[arg(long)]
    pub truth: PathBuf,
    /// Ranking report whose group order is used for the R_sr curves.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long = "lr", default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    pub momentum: f64,
    #[arg(long = "batch-size", default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long = "sigma", default_value_t = TrainConfig::default().augment_sigma)]
    pub augment_sigma: f64,
    /// Strong views drawn per sample.
    #[arg(long = "pairs", default_value_t = TrainConfig::default().augment_pairs)]
    pub augment_pairs: usize,
    #[arg(long = "rerank-every", default_value_t = TrainConfig::default().rerank_every)]
    pub rerank_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Width of the hidden ReLU layer; linear model when absent.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Multiply the learning rate by 0.1 from this epoch on.
    #[arg(long = "lr-drop-epoch")]
    pub lr_drop_epoch: Option<usize>,
    /// Restart the weight schedule every this many epochs.
    #[arg(long = "schedule-restart")]
    pub schedule_restart: Option<usize>,
    /// Weight of samples left outside every group.
    #[arg(long = "residual-weight", default_value_t = 0.0)]
    pub residual_weight: f64,
    /// Control run: `unweighted` or `topk-only`.
    #[arg(long)]
    pub baseline: Option<String>,
    #[command(flatten)]
    pub ranking: RankArgs,
}

impl TrainArgs {
    pub fn to_config(&self, beta0: f64) -> Result<TrainConfig> {
        let mode = match &self.baseline {
            None => TrainMode::Icsr,
            Some(b) => match b.parse::<TrainMode>()? {
                TrainMode::Icsr => return Err(Error::config("baseline", "expected `unweighted` or `topk-only`")),
                m => m,
            },
        };
        let cfg = TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            beta0,
            augment_sigma: self.augment_sigma,
            augment_pairs: self.augment_pairs,
            rerank_every: self.rerank_every,
            seed: self.seed,
            hidden: self.hidden,
            lr_drop_epoch: self.lr_drop_epoch,
            schedule_restart: self.schedule_restart,
            residual_weight: self.residual_weight,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
    /// Ground-truth labels for per-epoch metrics; defaults to the input's truth block.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = TrainConfig::default().beta0, allow_hyphen_values = true)]
    pub beta0: f64,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Write the final model and generator state here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint written by a previous run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Final predicted labels, one per line.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateCmd {
    #[arg(long, default_value_t = BenchmarkSpec::standard(0).num_classes)]
    pub classes: usize,
    #[arg(long = "per-cluster", default_value_t = BenchmarkSpec::standard(0).per_cluster)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = BenchmarkSpec::standard(0).dim)]
    pub dim: usize,
    #[arg(long, default_value_t = BenchmarkSpec::standard(0).dominant_fraction)]
    pub dominant: f64,
    #[arg(long = "signal-std", default_value_t = BenchmarkSpec::standard(0).signal_std)]
    pub signal_std: f64,
    #[arg(long = "noise-std", default_value_t = BenchmarkSpec::standard(0).noise_std)]
    pub noise_std: f64,
    #[arg(long, default_value_t = BenchmarkSpec::standard(0).center_separation)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Omit the truth block.
    #[arg(long = "no-truth")]
    pub no_truth: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Comma-separated beta0 values.
    #[arg(long = "beta0", allow_hyphen_values = true)]
    pub beta0: String,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Per-epoch ACC for every beta0 as CSV.
    #[arg(long = "per-epoch")]
    pub per_epoch: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: invalid config field `threads`: must be >= 1");
            return EXIT_CONFIG;
        }
        // a pool set up by an earlier call in the same process is kept
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            info!("thread pool already initialised; --threads {n} ignored");
        }
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut impl Write) -> Result<()> {
    match cmd {
        Command::Rank(c) => cmd_rank(&c, out),
        Command::Weights(c) => cmd_weights(&c, out),
        Command::Evaluate(c) => cmd_evaluate(&c, out),
        Command::Train(c) => cmd_train(&c, out),
        Command::Generate(c) => cmd_generate(&c),
        Command::Sweep(c) => cmd_sweep(&c, out),
    }
}

fn write_output(path: Option<&Path>, text: &str, out: &mut impl Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Io(e.to_string()))
}

pub fn cmd_rank(c: &RankCmd, out: &mut impl Write) -> Result<()> {
    let cfg = c.ranking.to_config()?;
    let file = io::read_embeddings(&c.input, resolve_format(c.format, &c.input))?;
    let ranked = rank_all(&file.set, &cfg, c.epoch)?;
    let report = RankingReport::new(&cfg, c.epoch, &ranked)?;
    write_output(c.out.as_deref(), &to_json(&report)?, out)
}

pub fn cmd_weights(c: &WeightsCmd, out: &mut impl Write) -> Result<()> {
    let schedule = WeightSchedule::new(c.m, c.beta0)?;
    let epochs = parse_usize_list(&c.epochs, "epochs")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epoch".to_string()];
    header.extend((1..=c.m).map(|i| format!("w_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for t in epochs {
        let mut rec = vec![t.to_string()];
        rec.extend(schedule.row(t).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Labels plus, for embedding files, the sample ids of each row.
struct LabelSource {
    labels: Vec<usize>,
    sample_ids: Option<Vec<u64>>,
}

fn is_embedding_file(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut magic = [0u8; 4];
    let mut f = std::fs::File::open(path)?;
    let n = f.read(&mut magic)?;
    Ok(n == 4 && &magic == io::EMBEDDING_MAGIC)
}

fn read_label_source(path: &Path, use_truth: bool, field: &'static str) -> Result<LabelSource> {
    let embedding = if is_embedding_file(path)? {
        Some(io::read_embeddings(path, Format::Binary)?)
    } else if Format::from_path(path) == Format::Csv {
        Some(io::read_embeddings(path, Format::Csv)?)
    } else {
        None
    };
    match embedding {
        Some(EmbeddingFile { set, truth }) => {
            let labels = if use_truth {
                truth.ok_or_else(|| Error::input(field, format!("{} has no truth labels", path.display())))?
            } else {
                set.assignments
            };
            Ok(LabelSource {
                labels,
                sample_ids: Some(set.sample_ids),
            })
        }
        None => Ok(LabelSource {
            labels: io::parse_labels(&std::fs::read_to_string(path)?)?,
            sample_ids: None,
        }),
    }
}

pub fn cmd_evaluate(c: &EvaluateCmd, out: &mut impl Write) -> Result<()> {
    let pred = read_label_source(&c.pred, false, "pred")?;
    let truth = read_label_source(&c.truth, true, "truth")?;
    if pred.labels.len() != truth.labels.len() {
        return Err(Error::LengthMismatch {
            left: pred.labels.len(),
            right: truth.labels.len(),
        });
    }
    let orders = match &c.ranking {
        Some(path) => {
            let report: RankingReport = serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::format("ranking", e.to_string()))?;
            let n = pred.labels.len();
            let row_of: std::collections::HashMap<u64, usize> = match &pred.sample_ids {
                Some(ids) => ids.iter().enumerate().map(|(i, &id)| (id, i)).collect(),
                None => (0..n).map(|i| (i as u64, i)).collect(),
            };
            let orders = report
                .ranked_groups()
                .into_iter()
                .map(|g| {
                    let rows = g
                        .ordered()
                        .into_iter()
                        .map(|id| {
                            row_of
                                .get(&id)
                                .copied()
                                .ok_or_else(|| Error::input("ranking", format!("sample id {id} is not in the label set")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((g.cluster_id, rows))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(orders)
        }
        None => None,
    };
    let report = evaluate(&pred.labels, &truth.labels, orders.as_deref(), &RSR_GRID)?;
    eprint!("{}", render_table(&report));
    write_output(c.out.as_deref(), &to_json(&report)?, out)
}

fn render_table(r: &EvaluationReport) -> String {
    let mut s = format!("ACC {:.4}  NMI {:.4}  ARI {:.4}\n", r.acc, r.nmi, r.ari);
    if let Some(first) = r.rsr.first() {
        s.push_str(&format!("{:>8} {:>6}", "cluster", "signal"));
        for (p, _) in &first.points {
            s.push_str(&format!(" {:>8}", format!("R({p})")));
        }
        s.push('\n');
        for curve in &r.rsr {
            let id = curve.cluster_id.map_or("pooled".to_string(), |c| c.to_string());
            let signal = curve.signal_class.map_or("-".to_string(), |c| c.to_string());
            s.push_str(&format!("{id:>8} {signal:>6}"));
            for (_, v) in &curve.points {
                s.push_str(&format!(" {v:>8.4}"));
            }
            s.push('\n');
        }
    }
    s
}

fn load_training_input(
    input: &Path,
    format: Option<FileFormat>,
    truth: Option<&Path>,
) -> Result<(crate::dataset::EmbeddingSet, Option<Vec<usize>>)> {
    let file = io::read_embeddings(input, resolve_format(format, input))?;
    let truth = match truth {
        Some(p) => Some(read_label_source(p, true, "truth")?.labels),
        None => file.truth,
    };
    if let Some(t) = &truth {
        if t.len() != file.set.len() {
            return Err(Error::LengthMismatch {
                left: file.set.len(),
                right: t.len(),
            });
        }
    }
    Ok((file.set, truth))
}

fn write_metrics_csv(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["epoch", "loss", "mean_weight", "acc", "nmi", "ari"]).map_err(csv_error)?;
    for r in &outcome.history {
        let (acc, nmi, ari) = match &r.report {
            Some(m) => (format!("{:?}", m.acc), format!("{:?}", m.nmi), format!("{:?}", m.ari)),
            None => Default::default(),
        };
        w.write_record([r.epoch.to_string(), format!("{:?}", r.loss), format!("{:?}", r.mean_weight), acc, nmi, ari])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(serde::Serialize)]
struct TrainSummary<'a> {
    mode: TrainMode,
    epochs: usize,
    initial: Option<EvaluationReport>,
    final_report: Option<&'a EvaluationReport>,
}

pub fn cmd_train(c: &TrainCmd, out: &mut impl Write) -> Result<()> {
    let ranking = c.train.ranking.to_config()?;
    let cfg = c.train.to_config(c.beta0)?;
    let (set, truth) = load_training_input(&c.input, c.format, c.truth.as_deref())?;
    let initial = match &truth {
        Some(t) => Some(evaluate(&set.assignments, t, None, &[])?),
        None => None,
    };

    let outcome = match &c.resume {
        Some(path) => {
            let state = io::decode_checkpoint(&std::fs::read(path)?)?;
            if state.epoch >= cfg.epochs {
                return Err(Error::config(
                    "epochs",
                    format!("checkpoint is at epoch {}; --epochs must exceed it", state.epoch),
                ));
            }
            train_from(&set, truth.as_deref(), &ranking, &cfg, state)?
        }
        None => train(&set, truth.as_deref(), &ranking, &cfg)?,
    };

    if let Some(path) = &c.checkpoint {
        std::fs::write(path, io::encode_checkpoint(&outcome.state)?)?;
    }
    if let Some(path) = &c.metrics {
        write_metrics_csv(path, &outcome)?;
    }
    if let Some(path) = &c.predictions {
        std::fs::write(path, io::format_labels(&outcome.assignments))?;
    }
    let summary = TrainSummary {
        mode: cfg.mode,
        epochs: cfg.epochs,
        initial,
        final_report: outcome.final_report(),
    };
    out.write_all(to_json(&summary)?.as_bytes())?;
    Ok(())
}

pub fn cmd_generate(c: &GenerateCmd) -> Result<()> {
    let spec = BenchmarkSpec {
        num_classes: c.classes,
        per_cluster: c.per_cluster,
        dim: c.dim,
        dominant_fraction: c.dominant,
        signal_std: c.signal_std,
        noise_std: c.noise_std,
        center_separation: c.separation,
        seed: c.seed,
    };
    let (set, truth) = generate(&spec)?;
    let file = EmbeddingFile {
        set,
        truth: (!c.no_truth).then_some(truth),
    };
    io::write_embeddings(&c.out, &file, resolve_format(c.format, &c.out))
}

pub fn cmd_sweep(c: &SweepCmd, out: &mut impl Write) -> Result<()> {
    let betas = parse_f64_list(&c.beta0, "beta0")?;
    let ranking = c.train.ranking.to_config()?;
    let configs = betas.iter().map(|&b| c.train.to_config(b)).collect::<Result<Vec<_>>>()?;
    let (set, truth) = load_training_input(&c.input, c.format, c.truth.as_deref())?;
    let truth = truth.ok_or_else(|| Error::input("truth", "sweep needs ground truth labels"))?;

    let mut summary = csv::Writer::from_writer(out);
    summary.write_record(["beta0", "final_acc", "final_nmi", "final_ari"]).map_err(csv_error)?;
    let mut per_epoch = match &c.per_epoch {
        Some(p) => {
            let mut w = csv::Writer::from_path(p).map_err(csv_error)?;
            w.write_record(["beta0", "epoch", "acc"]).map_err(csv_error)?;
            Some(w)
        }
        None => None,
    };
    for cfg in &configs {
        let outcome = train(&set, Some(&truth), &ranking, cfg)?;
        let last = outcome
            .final_report()
            .ok_or_else(|| Error::Io("training produced no epochs".into()))?;
        info!("beta0 {}: final acc {:.4}", cfg.beta0, last.acc);
        summary
            .write_record([format!("{:?}", cfg.beta0), format!("{:?}", last.acc), format!("{:?}", last.nmi), format!("{:?}", last.ari)])
            .map_err(csv_error)?;
        if let Some(w) = per_epoch.as_mut() {
            for r in &outcome.history {
                let acc = r.report.as_ref().map_or(f64::NAN, |m| m.acc);
                w.write_record([format!("{:?}", cfg.beta0), r.epoch.to_string(), format!("{acc:?}")])
                    .map_err(csv_error)?;
            }
        }
    }
    summary.flush()?;
    if let Some(mut w) = per_epoch {
        w.flush()?;
    }
    Ok(())
}
