//! Command-line front end: corpus generation, training, evaluation,
//! benchmarking and gradient checks over a working directory.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fop_core::benchlosses::{bench, bench_csv, default_sizes, BenchConfig};
use fop_core::dataio::{
    read_bank, read_labels, write_bank, write_labels, write_splits, write_trials, EmbeddingBank, LabelTable,
};
use fop_core::evalsuite::{
    analytics_csv, feature_analytics, match_1_to_n, matching_csv, roc_csv, verification_csv, verify, ProjectionScorer, RocCurve,
};
use fop_core::fopmodel::{read_checkpoint, write_checkpoint, FopParams};
use fop_core::losses::LossKind;
use fop_core::synthgen::generate;
use fop_core::trainer::{gradcheck, history_csv, train, GradcheckConfig};
use fop_core::Rng;
use thiserror::Error;

pub use config::RunConfig;

/// Relative-error bound for `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<fop_core::Error> for CliError {
    fn from(e: fop_core::Error) -> Self {
        if e.is_numeric_failure() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fop", version, about = "Face-voice fusion workbench")]
struct Cli {
    /// Directory that holds inputs and receives outputs.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Run configuration file, relative to the working directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus: banks, labels and splits.
    Synth,
    /// Train the fusion head; writes the checkpoint and history.csv.
    Train,
    /// Cross-modal verification; writes verification.csv and ROC curves.
    EvalVerify {
        /// Comma-separated strata among none, G, N, A, GNA.
        #[arg(long)]
        stratify: Option<String>,
    },
    /// 1:n_c matching; writes matching.csv.
    EvalMatch {
        /// Comma-separated gallery sizes.
        #[arg(long)]
        nc: Option<String>,
        /// v2f (voice probe) or f2v (face probe).
        #[arg(long)]
        direction: Option<String>,
    },
    /// Orthogonality and similarity of fused embeddings; writes analytics.csv.
    Analyze,
    /// Loss runtime scaling; writes bench.csv.
    BenchLoss {
        /// Comma-separated loss kinds.
        #[arg(long)]
        loss: Option<String>,
    },
    /// Analytic against numeric gradients for every loss; writes gradcheck.csv.
    Gradcheck {
        #[arg(long)]
        seeds: Option<u64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::EvalVerify { .. } => "eval-verify",
            Command::EvalMatch { .. } => "eval-match",
            Command::Analyze => "analyze",
            Command::BenchLoss { .. } => "bench-loss",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }

    /// Subcommand flags expressed as config overrides.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match self {
            Command::EvalVerify { stratify: Some(s) } => out.push(("stratify", s.clone())),
            Command::EvalMatch { nc, direction } => {
                if let Some(nc) = nc {
                    out.push(("match_nc", nc.clone()));
                }
                if let Some(d) = direction {
                    out.push(("match_direction", d.clone()));
                }
            }
            Command::BenchLoss { loss: Some(l) } => out.push(("bench_losses", l.clone())),
            Command::Gradcheck { seeds: Some(n) } => out.push(("gradcheck_seeds", n.to_string())),
            _ => {}
        }
        out
    }
}

struct Workdir {
    root: PathBuf,
    cfg: RunConfig,
}

impl Workdir {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }

    fn banks(&self) -> Result<(EmbeddingBank, EmbeddingBank, LabelTable), CliError> {
        let faces = read_bank(&self.path(&self.cfg.faces))?;
        let voices = read_bank(&self.path(&self.cfg.voices))?;
        let labels = read_labels(&self.path(&self.cfg.labels), &self.path(&self.cfg.splits))?;
        labels.validate_bank(&faces)?;
        labels.validate_bank(&voices)?;
        Ok((faces, voices, labels))
    }

    fn checkpoint(&self) -> Result<FopParams<f64>, CliError> {
        Ok(read_checkpoint(&self.path(&self.cfg.checkpoint))?)
    }

    /// Independent random stream for one command, derived from `seed`.
    fn rng(&self, stream: u64) -> Rng {
        Rng::stream(self.cfg.train.seed, stream)
    }
}

/// Parses `args` (program name first), runs the command and writes a short
/// report to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };

    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg = RunConfig::load(&cli.workdir.join(path))?;
    }
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in cli.command.overrides() {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;

    std::fs::create_dir_all(&cli.workdir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cli.workdir.display())))?;
    let wd = Workdir {
        root: cli.workdir.clone(),
        cfg,
    };
    wd.write(&format!("{}.cfg", cli.command.name()), &wd.cfg.to_text())?;
    let report = match &cli.command {
        Command::Synth => cmd_synth(&wd)?,
        Command::Train => cmd_train(&wd)?,
        Command::EvalVerify { .. } => cmd_verify(&wd)?,
        Command::EvalMatch { .. } => cmd_match(&wd)?,
        Command::Analyze => cmd_analyze(&wd)?,
        Command::BenchLoss { .. } => cmd_bench(&wd)?,
        Command::Gradcheck { .. } => cmd_gradcheck(&wd, out)?,
    };
    let _ = out.write_all(report.as_bytes());
    Ok(())
}

/// Runs the command line and returns the process exit code, reporting
/// errors on stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut stdout = std::io::stdout();
    match run(args, &mut stdout) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprint!("{msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_synth(wd: &Workdir) -> Result<String, CliError> {
    let corpus = generate(&wd.cfg.synth)?;
    write_bank(&corpus.faces, &wd.path(&wd.cfg.faces))?;
    write_bank(&corpus.voices, &wd.path(&wd.cfg.voices))?;
    write_labels(&corpus.labels, &wd.path(&wd.cfg.labels))?;
    write_splits(&corpus.labels, &wd.path(&wd.cfg.splits))?;
    Ok(format!(
        "synth: {} identities, {} face and {} voice instances\n",
        wd.cfg.synth.n_identities,
        corpus.faces.len(),
        corpus.voices.len()
    ))
}

fn cmd_train(wd: &Workdir) -> Result<String, CliError> {
    let (faces, voices, labels) = wd.banks()?;
    let outcome = train::<f64>(&faces, &voices, &labels, &wd.cfg.train)?;
    write_checkpoint(&outcome.params, &wd.path(&wd.cfg.checkpoint))?;
    wd.write("history.csv", &history_csv(&outcome.history))?;
    let mut report = format!("train: {} classes, {} epochs\n", outcome.classes.len(), outcome.history.len());
    if let Some(last) = outcome.history.last() {
        let _ = writeln!(report, "final loss {} ce {} oc {}", last.loss, last.ce_term, last.oc_term);
    }
    Ok(report)
}

fn cmd_verify(wd: &Workdir) -> Result<String, CliError> {
    let (faces, voices, labels) = wd.banks()?;
    let params = wd.checkpoint()?;
    let scorer = ProjectionScorer::new(&params, &faces, &voices)?;
    let mut rng = wd.rng(3);
    let mut rows = Vec::new();
    for &stratum in &wd.cfg.stratify {
        let r = verify(&scorer, &faces, &voices, &labels, wd.cfg.eval_subset, stratum, wd.cfg.neg_per_pos, &mut rng)?;
        let curve = RocCurve::from_scores(&r.trials.scored())?;
        wd.write(&format!("roc_{stratum}.csv"), &roc_csv(&curve))?;
        write_trials(&r.trials, &wd.path(&format!("trials_{stratum}.txt")))?;
        rows.push(r);
    }
    let csv = verification_csv(&rows);
    wd.write("verification.csv", &csv)?;
    Ok(csv)
}

fn cmd_match(wd: &Workdir) -> Result<String, CliError> {
    let (faces, voices, labels) = wd.banks()?;
    let params = wd.checkpoint()?;
    let scorer = ProjectionScorer::new(&params, &faces, &voices)?;
    let mut rng = wd.rng(4);
    let rows = wd
        .cfg
        .match_nc
        .iter()
        .map(|&n_c| {
            match_1_to_n(
                &scorer,
                &faces,
                &voices,
                &labels,
                wd.cfg.eval_subset,
                n_c,
                wd.cfg.match_trials,
                wd.cfg.match_direction,
                &mut rng,
            )
        })
        .collect::<fop_core::Result<Vec<_>>>()?;
    let csv = matching_csv(&rows);
    wd.write("matching.csv", &csv)?;
    Ok(csv)
}

fn cmd_analyze(wd: &Workdir) -> Result<String, CliError> {
    let (faces, voices, labels) = wd.banks()?;
    let params = wd.checkpoint()?;
    let stats = feature_analytics(
        &params,
        &faces,
        &voices,
        &labels,
        wd.cfg.eval_subset,
        wd.cfg.analytics_max_pairs,
        &mut wd.rng(5),
    )?;
    let csv = analytics_csv(&stats);
    wd.write("analytics.csv", &csv)?;
    Ok(csv)
}

fn cmd_bench(wd: &Workdir) -> Result<String, CliError> {
    let cfg = BenchConfig {
        reps: wd.cfg.bench_reps,
        ..Default::default()
    };
    let mut rng = wd.rng(6);
    let reports = wd
        .cfg
        .bench_losses
        .iter()
        .map(|&kind| bench(kind, &default_sizes(kind), &cfg, &mut rng))
        .collect::<fop_core::Result<Vec<_>>>()?;
    let csv = bench_csv(&reports);
    wd.write("bench.csv", &csv)?;
    Ok(csv)
}

/// Writes per-loss results, then fails with a numeric error if any loss
/// exceeds the tolerance.
fn cmd_gradcheck(wd: &Workdir, out: &mut dyn Write) -> Result<String, CliError> {
    let cfg = GradcheckConfig {
        seeds: wd.cfg.gradcheck_seeds,
        tolerance: GRADCHECK_TOLERANCE,
        ..Default::default()
    };
    let mut csv = String::from("loss,max_rel_err,n_checked,passed\n");
    let mut failed = Vec::new();
    for kind in LossKind::ALL {
        let r = gradcheck(kind, &wd.cfg.train.loss, &cfg)?;
        let ok = r.passed(cfg.tolerance);
        let _ = writeln!(csv, "{kind},{:e},{},{ok}", r.max_rel_err, r.n_checked);
        if !ok {
            failed.push(format!("{kind} ({:e} at seed {} {}[{}])", r.max_rel_err, r.worst.0, r.worst.1, r.worst.2));
        }
    }
    wd.write("gradcheck.csv", &csv)?;
    if failed.is_empty() {
        Ok(csv)
    } else {
        let _ = out.write_all(csv.as_bytes());
        Err(CliError::Numeric(format!(
            "gradient check above {:e}: {}",
            cfg.tolerance,
            failed.join(", ")
        )))
    }
}
