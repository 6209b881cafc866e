//! Command-line subcommands over the run configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::anchor::write_sidecar;
use crate::config::{AblationGrid, RunConfig};
use crate::corpus::{build_dataset, read_dataset, FindingVector, ReportSample};
use crate::denoiser::{grad_check, init_params, load_checkpoint, prepare_examples, save_checkpoint, train, GradCheckOptions};
use crate::eval::{
    evaluate, run_ablation, sensitivity_hierarchy_variants, sensitivity_rewriting_variants, training_variants,
    write_results_csv, AblationRow, MetricsReport,
};
use crate::inference::{decode, write_trace};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mdlm", version, about = "Anchor-guided masked-diffusion report generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint to read (decode, eval) or write (train).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the training and evaluation datasets.
    GenData(Common),
    /// Train a denoiser on the training dataset.
    Train(Common),
    /// Generate reports for a set of conditions.
    Decode {
        #[command(flatten)]
        common: Common,
        /// JSONL of conditions or dataset records; defaults to the evaluation set.
        #[arg(long)]
        conditions: Option<PathBuf>,
    },
    /// Decode the evaluation set and score it.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Dataset to score against; defaults to the evaluation set.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train and evaluate an ablation grid.
    Ablate(Common),
    /// Compare analytic and finite-difference gradients.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Ignore token weights in the backward pass (should fail).
        #[arg(long)]
        drop_weights: bool,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenData(c) | Command::Train(c) | Command::Ablate(c) => c,
            Command::Decode { common, .. } | Command::Eval { common, .. } | Command::GradCheck { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Decode { .. } => "decode",
            Command::Eval { .. } => "eval",
            Command::Ablate(_) => "ablate",
            Command::GradCheck { .. } => "grad-check",
        }
    }
}

/// Context shared by every subcommand.
struct Run {
    config: RunConfig,
    out: PathBuf,
    checkpoint: Option<PathBuf>,
}

impl Run {
    fn path(&self, p: &Path) -> PathBuf {
        self.config.resolve_path(&self.out, p)
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.path(&self.config.paths.checkpoints).join("model.ckpt"))
    }

    fn results_dir(&self, sub: &str) -> Result<PathBuf> {
        let dir = self.path(&self.config.paths.results).join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

/// Runs a parsed command, writing human-readable progress to `log`.
pub fn run(cli: Cli, log: &mut dyn Write) -> Result<()> {
    let common = cli.command.common();
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    let config = config.resolve()?;
    let run = Run { config, out: common.out.clone(), checkpoint: common.checkpoint.clone() };
    fs::create_dir_all(&run.out).map_err(|e| Error::io(&run.out, e))?;
    run.config.write_echo(&run.out.join(format!("{}.config.json", cli.command.name())))?;

    match &cli.command {
        Command::GenData(_) => gen_data(&run, log),
        Command::Train(_) => train_cmd(&run, log),
        Command::Decode { conditions, .. } => decode_cmd(&run, conditions.as_deref(), log),
        Command::Eval { dataset, .. } => eval_cmd(&run, dataset.as_deref(), log),
        Command::Ablate(_) => ablate(&run, log),
        Command::GradCheck { drop_weights, .. } => grad_check_cmd(&run, *drop_weights, log),
    }
}

fn say(log: &mut dyn Write, msg: impl AsRef<str>) {
    let _ = writeln!(log, "{}", msg.as_ref());
}

fn gen_data(run: &Run, log: &mut dyn Write) -> Result<()> {
    let c = &run.config;
    let train_path = run.path(&c.paths.dataset);
    let eval_path = run.path(&c.paths.eval_dataset);
    for p in [&train_path, &eval_path] {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    build_dataset(c.data.train_reports, &c.corpus, seed::derive(c.seed, "train-data"), &train_path)?;
    build_dataset(c.data.eval_reports, &c.corpus, seed::derive(c.seed, "eval-data"), &eval_path)?;
    let samples = read_dataset(&train_path)?;
    write_sidecar(&samples, &c.hierarchy, &train_path.with_extension("annotations.jsonl"))?;
    say(log, format!("wrote {} training and {} evaluation reports", c.data.train_reports, c.data.eval_reports));
    Ok(())
}

fn train_cmd(run: &Run, log: &mut dyn Write) -> Result<()> {
    let c = &run.config;
    let vocab = c.corpus.vocab()?;
    let samples = read_dataset(&run.path(&c.paths.dataset))?;
    let examples = prepare_examples(&samples, &vocab, &c.hierarchy)?;
    let mut ck = init_params(&c.denoiser, c.denoiser.seed)?;
    let mut lines = Vec::new();
    train(&mut ck, &examples, c.train, vocab, seed::derive(c.seed, "train"), |r| {
        lines.push(
            serde_json::json!({"step": r.step, "lr": r.learning_rate, "loss": r.mean_loss, "grad_norm": r.grad_norm})
                .to_string(),
        );
        if r.step % 50 == 0 {
            say(log, format!("step {} loss {:.4}", r.step, r.mean_loss));
        }
    })?;
    let path = run.checkpoint_path();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&ck, &path)?;
    let log_path = path.with_extension("log.jsonl");
    fs::write(&log_path, lines.join("\n") + "\n").map_err(|e| Error::io(&log_path, e))?;
    say(log, format!("saved {}", path.display()));
    Ok(())
}

fn read_conditions(path: &Path) -> Result<Vec<FindingVector>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let field = format!("line {}", n + 1);
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::parse(&field, e.to_string()))?;
        let cond = value.get("condition").cloned().unwrap_or(value);
        out.push(serde_json::from_value(cond).map_err(|e| Error::parse(&field, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct DecodedReport<'a> {
    index: usize,
    condition: &'a FindingVector,
    text: String,
    forward_passes: usize,
    revisions: usize,
}

fn decode_cmd(run: &Run, conditions: Option<&Path>, log: &mut dyn Write) -> Result<()> {
    let c = &run.config;
    let ck = load_checkpoint(&run.checkpoint_path())?;
    let vocab = c.corpus.vocab()?;
    let conds = match conditions {
        Some(p) => read_conditions(p)?,
        None => read_conditions(&run.path(&c.paths.eval_dataset))?,
    };
    let dir = run.results_dir("decode")?;
    let mut reports = String::new();
    let mut trace = Vec::new();
    for (i, cond) in conds.iter().enumerate() {
        let out = decode(&ck.model, &vocab, cond, &c.inference)?;
        let line = DecodedReport {
            index: i,
            condition: cond,
            text: out.tokens.join(" "),
            forward_passes: out.state.forward_passes,
            revisions: out.state.revisions.len(),
        };
        reports.push_str(&serde_json::to_string(&line)?);
        reports.push('\n');
        trace.extend(out.trace);
    }
    let rp = dir.join("reports.jsonl");
    fs::write(&rp, reports).map_err(|e| Error::io(&rp, e))?;
    write_trace(&trace, &dir.join("traces.jsonl"))?;
    say(log, format!("decoded {} reports into {}", conds.len(), dir.display()));
    Ok(())
}

#[derive(Serialize)]
struct MetricsFile {
    metrics: MetricsReport,
    forward_passes: usize,
    revisions: usize,
    bleu_smoothing: &'static str,
}

fn eval_cmd(run: &Run, dataset: Option<&Path>, log: &mut dyn Write) -> Result<()> {
    let c = &run.config;
    let ck = load_checkpoint(&run.checkpoint_path())?;
    let vocab = c.corpus.vocab()?;
    let refs: Vec<ReportSample> = read_dataset(&dataset.map_or_else(|| run.path(&c.paths.eval_dataset), Path::to_path_buf))?;
    let e = evaluate(&ck.model, &vocab, &refs, &c.inference)?;
    let dir = run.results_dir("eval")?;
    let m = e.metrics;
    let row = AblationRow {
        variant: "eval".into(),
        seed: c.seed,
        bleu1: m.bleu[0],
        bleu2: m.bleu[1],
        bleu3: m.bleu[2],
        bleu4: m.bleu[3],
        rouge_l: m.rouge_l,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        forward_passes: e.forward_passes as f64 / refs.len().max(1) as f64,
        revisions: e.revisions,
    };
    write_results_csv(&[row], &dir.join("metrics.csv"))?;
    let file = MetricsFile {
        metrics: m,
        forward_passes: e.forward_passes,
        revisions: e.revisions,
        bleu_smoothing: "sentence-level; zero n-gram matches replaced by 1/(2*candidate_length)",
    };
    let jp = dir.join("metrics.json");
    fs::write(&jp, serde_json::to_string_pretty(&file)? + "\n").map_err(|e| Error::io(&jp, e))?;
    let trace: Vec<_> = e.outputs.into_iter().flat_map(|o| o.trace).collect();
    write_trace(&trace, &dir.join("traces.jsonl"))?;
    say(log, format!("F1 {:.4} P {:.4} R {:.4} BLEU-4 {:.4} ROUGE-L {:.4}", m.f1, m.precision, m.recall, m.bleu[3], m.rouge_l));
    Ok(())
}

fn ablate(run: &Run, log: &mut dyn Write) -> Result<()> {
    let c = &run.config;
    let vocab = c.corpus.vocab()?;
    let train_set = prepare_examples(&read_dataset(&run.path(&c.paths.dataset))?, &vocab, &c.hierarchy)?;
    let eval_set = read_dataset(&run.path(&c.paths.eval_dataset))?;
    let variants = match c.ablation.grid {
        AblationGrid::Training => training_variants(&c.train, &c.inference),
        AblationGrid::Hierarchy => sensitivity_hierarchy_variants(&c.train, &c.inference),
        AblationGrid::Rewriting => sensitivity_rewriting_variants(&c.train, &c.inference),
    };
    let dir = run.results_dir("ablation")?;
    let rows = run_ablation(&train_set, &eval_set, &vocab, &c.denoiser, &variants, &c.ablation.seeds, Some(&dir.join("cells")), |m| {
        say(log, m)
    })?;
    write_results_csv(&rows, &dir.join("results.csv"))?;
    say(log, format!("wrote {} rows to {}", rows.len(), dir.join("results.csv").display()));
    Ok(())
}

fn grad_check_cmd(run: &Run, drop_weights: bool, log: &mut dyn Write) -> Result<()> {
    let c = &run.config;
    let vocab = c.corpus.vocab()?;
    let samples = crate::corpus::generate_dataset(2, &c.corpus, seed::derive(c.seed, "grad-check-data"))?;
    let examples = prepare_examples(&samples, &vocab, &c.hierarchy)?;
    let ck = init_params(&c.denoiser, c.denoiser.seed)?;
    let opts = GradCheckOptions { seed: c.seed, drop_weights, ..GradCheckOptions::default() };
    let report = grad_check(&ck.model, &examples, &vocab, &c.hierarchy, c.train.mode, &opts)?;
    let path = run.results_dir("grad-check")?.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&path, e))?;
    if report.passed {
        say(log, format!("pass max_rel_err={:.3e}", report.max_rel_err));
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
            report.max_rel_err, report.tolerance
        )))
    }
}

/// One-line machine-readable rendering of an error.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({"error": e.kind(), "message": e.to_string()}).to_string()
}
