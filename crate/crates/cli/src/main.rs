use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use precritic::critic::{Critic, CriticModel, OracleCritic};
use precritic::data::{make_splits, Dataset, NegativeMode, SplitTag};
use precritic::error::Error;
use precritic::eval::{render_report, ReportFormat};
use precritic::experiment::{
    ablate, build_worlds, collect, dynamic_eval, load_worlds, preset, read_collection, split_by_name, train_critic,
    write_collection, write_run, ExperimentConfig, PRESETS,
};
use precritic::generate::{generate_world, Family, GenParams};

#[derive(Parser)]
#[command(name = "precritic", version, about = "Pre-operative GUI action critic lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one world and write it as JSON.
    GenWorld(GenWorldArgs),
    /// Build the train/test splits and the critic training sets.
    Collect(CollectArgs),
    /// Train a critic on a collection directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the oracle) statically and/or dynamically.
    Eval(EvalArgs),
    /// Run an ablation preset and report static metrics per variant.
    Ablate(AblateArgs),
    /// Collect, train and evaluate end to end.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mobile,
    Web,
}

#[derive(Args)]
struct GenWorldArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "mobile")]
    family: FamilyArg,
    #[arg(long, default_value_t = 10)]
    screens: usize,
    /// Minimum interactive elements per screen.
    #[arg(long, default_value_t = 3)]
    branching: usize,
    /// Probability that an extra element is an irreversible trap, in [0, 1).
    #[arg(long, default_value_t = 0.25)]
    trap_prob: f64,
    #[arg(long, default_value_t = 8)]
    tasks: usize,
    /// Shortest start-to-goal distance of every task.
    #[arg(long, default_value_t = 2)]
    min_task_len: u32,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overrides shared by commands that build or train from a configuration.
#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NegativesArg {
    /// Negatives sampled from the noisy action proposer.
    Proposer,
    /// Random replacement of the optimal decision.
    Random,
}

#[derive(Args)]
struct PipelineArgs {
    /// Keep the noisy labels instead of filtering them with the judge.
    #[arg(long)]
    no_filter: bool,
    #[arg(long, value_enum)]
    negatives: Option<NegativesArg>,
    /// Skip reasoning bootstrapping; train on D_c_action only.
    #[arg(long)]
    no_cot: bool,
    #[arg(long)]
    label_noise: Option<f64>,
    /// Negatives kept per positive.
    #[arg(long)]
    neg_ratio: Option<f64>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    rft_epochs: Option<usize>,
    /// S-GRPO epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda_f: Option<f64>,
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    group_size: Option<usize>,
}

#[derive(Args)]
struct CollectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory of world files named mobile-*, scenario-* and web-*;
    /// generated from the configuration when omitted.
    #[arg(long)]
    worlds: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Collection directory written by `collect`.
    #[arg(long)]
    data: PathBuf,
    /// JSON experiment configuration; defaults to the one recorded by `collect`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CriticArg {
    Oracle,
}

#[derive(Args)]
struct EvalArgs {
    /// Collection directory written by `collect`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, required_unless_present = "critic", conflicts_with = "critic")]
    checkpoint: Option<PathBuf>,
    /// Evaluate a built-in critic instead of a checkpoint.
    #[arg(long, value_enum)]
    critic: Option<CriticArg>,
    /// Comma-separated static splits, e.g. test-I,test-S.
    #[arg(long, value_delimiter = ',')]
    splits: Option<Vec<String>>,
    /// Also run the paired baseline/pre/post episode suite.
    #[arg(long)]
    dynamic: bool,
    #[arg(long, default_value = "json")]
    format: String,
    /// Report directory; reports are printed to stdout either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// One of data-pipeline, rewards, sweep-lambda.
    #[arg(long)]
    preset: String,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

fn read_config(path: &Path) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(format!("{}: {other}", path.display())),
    })
}

fn load_config(args: &ConfigArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_pipeline(cfg: &mut ExperimentConfig, p: &PipelineArgs) {
    if p.no_filter {
        cfg.pipeline.filter = false;
    }
    if p.no_cot {
        cfg.pipeline.cot = false;
    }
    match p.negatives {
        Some(NegativesArg::Random) => cfg.pipeline.negatives = NegativeMode::Random,
        Some(NegativesArg::Proposer) => cfg.pipeline.negatives = NegativeMode::Proposer,
        None => {}
    }
    if let Some(v) = p.label_noise {
        cfg.pipeline.label_noise = v;
    }
    if let Some(v) = p.neg_ratio {
        cfg.pipeline.neg_ratio = v;
    }
}

fn apply_train(cfg: &mut ExperimentConfig, t: &TrainFlags) {
    let tc = &mut cfg.train;
    if let Some(v) = t.rft_epochs {
        tc.rft_epochs = v;
    }
    if let Some(v) = t.epochs {
        tc.epochs = v;
    }
    if let Some(v) = t.lambda_f {
        tc.lambda_f = v;
    }
    if let Some(v) = t.lambda_s {
        tc.lambda_s = v;
    }
    if let Some(v) = t.group_size {
        tc.group_size = v;
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_world(a: GenWorldArgs) -> anyhow::Result<()> {
    let family = match a.family {
        FamilyArg::Mobile => Family::Mobile,
        FamilyArg::Web => Family::Web,
    };
    let params = GenParams {
        family,
        screens: a.screens,
        branching: a.branching,
        trap_prob: a.trap_prob,
        tasks: a.tasks,
        min_task_len: a.min_task_len,
    };
    let world = generate_world(a.seed, &params)?;
    match a.out {
        Some(p) => world.save(&p)?,
        None => print!("{}", world.to_json()),
    }
    Ok(())
}

fn collect_cmd(a: CollectArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&a.cfg)?;
    apply_pipeline(&mut cfg, &a.pipeline);
    cfg.validate()?;
    let (worlds, split) = match &a.worlds {
        Some(dir) => {
            let worlds = load_worlds(dir)?;
            let split = split_by_name(&worlds, &cfg)?;
            (worlds, split)
        }
        None => build_worlds(&cfg)?,
    };
    let c = collect(&cfg, &worlds, &split)?;
    create_dir(&a.out)?;
    write_collection(&a.out, &cfg, &worlds, &split, &c)?;
    let t = &c.training;
    eprintln!(
        "collected train {} / test-I {} / test-S {} / test-W {}; D_c_action {}, D_c_cot {} ({} of {} bootstrapped)",
        c.splits.train.len(),
        c.splits.test_i.len(),
        c.splits.test_s.len(),
        c.splits.test_w.len(),
        t.action.len(),
        t.cot.len(),
        t.bootstrap.retained,
        t.bootstrap.inputs,
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let dir = read_collection(&a.data)?;
    let mut cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => dir.cfg,
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    apply_train(&mut cfg, &a.train);
    cfg.validate()?;
    let action = Dataset::load(a.data.join("d_c_action.jsonl"))?;
    let cot = Dataset::load(a.data.join("d_c_cot.jsonl"))?;
    action.validate(&dir.worlds)?;
    cot.validate(&dir.worlds)?;
    let (model, log) = train_critic(&cfg, &dir.worlds, &action, &cot)?;
    create_dir(&a.out)?;
    model.save(a.out.join("critic.ckpt"))?;
    log.save(a.out.join("train_log.jsonl"))?;
    write_file(&a.out.join("config.json"), &cfg.to_json())?;
    eprintln!("trained {} ({} log records)", model.policy.version, log.records.len());
    Ok(())
}

fn parse_splits(names: &[String]) -> anyhow::Result<Vec<SplitTag>> {
    names
        .iter()
        .map(|n| {
            match [SplitTag::Train, SplitTag::TestI, SplitTag::TestS, SplitTag::TestW]
                .into_iter()
                .find(|t| t.as_str() == n.trim())
            {
                Some(t) => Ok(t),
                None => Err(Error::Unknown { what: "split", name: n.clone() }.into()),
            }
        })
        .collect()
}

fn emit(out: Option<&Path>, stem: &str, format: ReportFormat, text: &str) -> anyhow::Result<()> {
    print!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join(format!("{stem}.{}", format.extension())), text)?;
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> anyhow::Result<()> {
    let format = ReportFormat::parse(&a.format)?;
    let dir = read_collection(&a.data)?;
    let tags = match &a.splits {
        Some(names) => parse_splits(names)?,
        None => dir.cfg.eval_splits.clone(),
    };
    let model;
    let critic: &dyn Critic = match (a.critic, &a.checkpoint) {
        (Some(CriticArg::Oracle), _) => &OracleCritic,
        (None, Some(path)) => {
            let expected = CriticModel::for_worlds(dir.worlds.values());
            model = CriticModel::load_expecting(path, &expected.vocab, &expected.featurizer)?;
            &model
        }
        (None, None) => bail!("either --checkpoint or --critic is required"),
    };
    if !tags.is_empty() {
        let splits = tags
            .iter()
            .map(|t| {
                let p = a.data.join(format!("split-{}.jsonl", t.as_str()));
                Dataset::load(p)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut reports = Vec::new();
        for (t, ds) in tags.iter().zip(&splits) {
            reports.push(precritic::eval::static_report(t.as_str(), &dir.worlds, ds, critic)?);
        }
        emit(a.out.as_deref(), "static", format, &render_report(&reports, format))?;
    }
    if a.dynamic {
        let plan = make_splits(&dir.worlds, &dir.split)?;
        let (_, reports) = dynamic_eval(&dir.cfg, &dir.worlds, &plan, critic)?;
        emit(a.out.as_deref(), "dynamic", format, &render_report(&reports, format))?;
    }
    Ok(())
}

fn ablate_cmd(a: AblateArgs) -> anyhow::Result<()> {
    let format = ReportFormat::parse(&a.format)?;
    let variants = preset(&a.preset).with_context(|| format!("presets are {}", PRESETS.join(", ")))?;
    let cfg = load_config(&a.cfg)?;
    let rows = ablate(&cfg, &variants)?;
    emit(a.out.as_deref(), &format!("ablate-{}", a.preset), format, &render_report(&rows, format))
}

fn run_cmd(a: RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&a.cfg)?;
    apply_pipeline(&mut cfg, &a.pipeline);
    apply_train(&mut cfg, &a.train);
    let artifacts = precritic::experiment::run(&cfg)?;
    write_run(&a.out, &cfg, &artifacts)?;
    print!("{}", render_report(&artifacts.static_reports, ReportFormat::Csv));
    print!("{}", render_report(&artifacts.dynamic_reports, ReportFormat::Csv));
    Ok(())
}

/// Configuration and parameter problems are the caller's fault.
fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_) | Error::Unknown { .. })))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenWorld(a) => gen_world(a),
        Command::Collect(a) => collect_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Run(a) => run_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
