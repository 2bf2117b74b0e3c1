//! End-to-end experiment: worlds, data, training, static and dynamic
//! evaluation, and the ablation presets built on top of them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agent::{run_suite, AgentPolicy, CriticMode, SuiteConfig, SuiteResult};
use crate::critic::{Critic, CriticModel, Vocab};
use crate::data::{
    build_splits, build_training_data, make_splits, world_set, Dataset, NegativeMode, PipelineConfig, SplitConfig,
    SplitPlan, SplitTag, Splits, TrainingData, WorldSet,
};
use crate::error::{Error, Result};
use crate::eval::{
    dynamic_reports, render_report, static_report, CsvRow, DynamicReport, EarRule, ReportFormat, StaticReport,
};
use crate::generate::{generate_world, Family, GenParams};
use crate::rng::derive_seed;
use crate::trainer::{train, TrainConfig, TrainLog};
use crate::world::World;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldsConfig {
    pub mobile: GenParams,
    pub web: GenParams,
    /// Mobile worlds used for training and instruction generalization.
    pub train_worlds: usize,
    /// Unseen mobile worlds.
    pub scenario_worlds: usize,
    pub web_worlds: usize,
    /// Tasks per training world used for training; the rest form test-I.
    pub train_tasks: usize,
}

impl Default for WorldsConfig {
    fn default() -> Self {
        WorldsConfig {
            mobile: GenParams {
                family: Family::Mobile,
                screens: 20,
                branching: 2,
                trap_prob: 0.1,
                tasks: 8,
                min_task_len: 5,
            },
            web: GenParams {
                family: Family::Web,
                screens: 20,
                branching: 2,
                trap_prob: 0.1,
                tasks: 8,
                min_task_len: 5,
            },
            train_worlds: 10,
            scenario_worlds: 2,
            web_worlds: 2,
            train_tasks: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicConfig {
    /// Error rate of the acting agent.
    pub agent_eta: f64,
    /// Episode seeds per task.
    pub episodes_per_task: usize,
    /// Which training-world tasks the suite runs on.
    pub tasks: SplitTag,
    pub ear_rule: EarRule,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig { agent_eta: 0.3, episodes_per_task: 4, tasks: SplitTag::Train, ear_rule: EarRule::AllConsistent }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every other seed is derived from it. The trainer seed in
    /// `train` is overwritten.
    pub seed: u64,
    pub worlds: WorldsConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub dynamic: DynamicConfig,
    /// Splits reported by static evaluation.
    pub eval_splits: Vec<SplitTag>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            worlds: WorldsConfig::default(),
            pipeline: PipelineConfig { neg_ratio: 3.0, proposals_per_state: 8, ..PipelineConfig::default() },
            train: TrainConfig {
                lr: 0.5,
                rft_lr: 0.3,
                batch_size: 16,
                epochs: 10,
                rft_epochs: 60,
                ..TrainConfig::default()
            },
            dynamic: DynamicConfig::default(),
            eval_splits: SplitTag::TESTS.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::json("experiment config", &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.worlds;
        w.mobile.validate()?;
        w.web.validate()?;
        if w.mobile.family != Family::Mobile || w.web.family != Family::Web {
            return Err(Error::Config("worlds.mobile and worlds.web must use their own family".into()));
        }
        if w.train_worlds == 0 || w.scenario_worlds == 0 || w.web_worlds == 0 {
            return Err(Error::Config("every world family needs at least one world".into()));
        }
        if w.train_tasks == 0 || w.train_tasks >= w.mobile.tasks {
            return Err(Error::Config(format!(
                "train_tasks must lie in 1..{} so that test-I keeps some tasks",
                w.mobile.tasks
            )));
        }
        self.pipeline.validate()?;
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.dynamic.agent_eta) || self.dynamic.episodes_per_task == 0 {
            return Err(Error::Config("dynamic.agent_eta must lie in [0, 1) and episodes_per_task >= 1".into()));
        }
        if !matches!(self.dynamic.tasks, SplitTag::Train | SplitTag::TestI) {
            return Err(Error::Config("dynamic.tasks must be train or test-I".into()));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, "train"), ..self.train.clone() }
    }
}

/// Generates every world named by the configuration together with the split
/// assignment over them.
pub fn build_worlds(cfg: &ExperimentConfig) -> Result<(WorldSet, SplitConfig)> {
    let w = &cfg.worlds;
    let mut worlds = Vec::new();
    let mut names = |prefix: &str, n: usize, params: &GenParams| -> Result<Vec<String>> {
        (0..n)
            .map(|i| {
                let name = format!("{prefix}-{i}");
                let world = generate_world(derive_seed(cfg.seed, &format!("world/{name}")), params)?;
                worlds.push(world.with_name(&name));
                Ok(name)
            })
            .collect()
    };
    let train_worlds = names("mobile", w.train_worlds, &w.mobile)?;
    let scenario_worlds = names("scenario", w.scenario_worlds, &w.mobile)?;
    let web_worlds = names("web", w.web_worlds, &w.web)?;
    let split = SplitConfig {
        train_worlds,
        train_tasks: (0..w.train_tasks).map(|i| format!("task{i}")).collect(),
        test_i_tasks: (w.train_tasks..w.mobile.tasks).map(|i| format!("task{i}")).collect(),
        scenario_worlds,
        web_worlds,
    };
    Ok((world_set(worlds), split))
}

/// Datasets produced by collection.
#[derive(Clone, Debug)]
pub struct Collected {
    pub vocab: Vocab,
    pub plan: SplitPlan,
    pub splits: Splits,
    pub training: TrainingData,
}

pub fn collect(cfg: &ExperimentConfig, worlds: &WorldSet, split: &SplitConfig) -> Result<Collected> {
    let vocab = Vocab::from_worlds(worlds.values());
    let plan = make_splits(worlds, split)?;
    let data_seed = derive_seed(cfg.seed, "data");
    let splits = build_splits(worlds, &vocab, &plan, &cfg.pipeline, data_seed)?;
    let training = build_training_data(worlds, &vocab, &splits.train, &cfg.pipeline, data_seed)?;
    Ok(Collected { vocab, plan, splits, training })
}

/// Trains a fresh critic over the vocabulary of `worlds` on `D_c_action` and
/// `D_c_cot`.
pub fn train_critic(
    cfg: &ExperimentConfig,
    worlds: &WorldSet,
    action: &Dataset,
    cot: &Dataset,
) -> Result<(CriticModel, TrainLog)> {
    let model = CriticModel::for_worlds(worlds.values());
    train(&model, worlds, action, cot, &cfg.train_config())
}

pub fn static_eval(
    worlds: &WorldSet,
    splits: &Splits,
    critic: &dyn Critic,
    tags: &[SplitTag],
) -> Result<Vec<StaticReport>> {
    tags.iter().map(|&t| static_report(t.as_str(), worlds, splits.get(t), critic)).collect()
}

/// Paired suite on the training worlds: baseline, pre-critic and post-critic
/// under the same episode seeds.
pub fn dynamic_eval(
    cfg: &ExperimentConfig,
    worlds: &WorldSet,
    plan: &SplitPlan,
    critic: &dyn Critic,
) -> Result<(Vec<SuiteResult>, Vec<DynamicReport>)> {
    let agent = AgentPolicy::noisy(cfg.dynamic.agent_eta)?;
    let tasks = plan.tasks(cfg.dynamic.tasks);
    let seeds: Vec<u64> = (0..cfg.dynamic.episodes_per_task as u64)
        .map(|i| derive_seed(cfg.seed, &format!("episode-seed/{i}")))
        .collect();
    let configs = [
        SuiteConfig { name: "baseline".into(), mode: CriticMode::None, critic: None },
        SuiteConfig { name: "pre".into(), mode: CriticMode::Pre, critic: Some(critic) },
        SuiteConfig { name: "post".into(), mode: CriticMode::Post, critic: Some(critic) },
    ];
    let results = run_suite(worlds, &tasks, &agent, &configs, &seeds)?;
    let reports = dynamic_reports(&results, "baseline", cfg.dynamic.ear_rule)?;
    Ok((results, reports))
}

/// Everything one end-to-end run produces.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub worlds: WorldSet,
    pub split: SplitConfig,
    pub collected: Collected,
    pub model: CriticModel,
    pub log: TrainLog,
    pub static_reports: Vec<StaticReport>,
    pub episodes: Vec<SuiteResult>,
    pub dynamic_reports: Vec<DynamicReport>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let (worlds, split) = build_worlds(cfg)?;
    let collected = collect(cfg, &worlds, &split)?;
    let (model, log) = train_critic(cfg, &worlds, &collected.training.action, &collected.training.cot)?;
    let static_reports = static_eval(&worlds, &collected.splits, &model, &cfg.eval_splits)?;
    let (episodes, dynamic_reports) = dynamic_eval(cfg, &worlds, &collected.plan, &model)?;
    Ok(RunArtifacts { worlds, split, collected, model, log, static_reports, episodes, dynamic_reports })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes worlds, split files, training sets and a manifest into `dir`.
pub fn write_collection(
    dir: &Path,
    cfg: &ExperimentConfig,
    worlds: &WorldSet,
    split: &SplitConfig,
    c: &Collected,
) -> Result<()> {
    let wdir = dir.join("worlds");
    create_dir(&wdir)?;
    for (name, w) in worlds {
        w.save(wdir.join(format!("{name}.json")))?;
    }
    for tag in [SplitTag::Train, SplitTag::TestI, SplitTag::TestS, SplitTag::TestW] {
        c.splits.get(tag).save(dir.join(format!("split-{}.jsonl", tag.as_str())))?;
    }
    c.training.action.save(dir.join("d_c_action.jsonl"))?;
    c.training.cot.save(dir.join("d_c_cot.jsonl"))?;
    let counts = |d: &Dataset| {
        let (neg, pos) = d.label_counts();
        json!({ "n": d.len(), "negatives": neg, "positives": pos })
    };
    let manifest = json!({
        "config": cfg,
        "split": split,
        "counts": {
            "train": counts(&c.splits.train),
            "test-I": counts(&c.splits.test_i),
            "test-S": counts(&c.splits.test_s),
            "test-W": counts(&c.splits.test_w),
            "d_c_action": counts(&c.training.action),
            "d_c_cot": counts(&c.training.cot),
        },
        "bootstrap": c.training.bootstrap,
        "vocab_hash": c.vocab.hash(),
    });
    write(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest") + "\n")
}

/// Writes the complete output of [`run`] into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, a: &RunArtifacts) -> Result<()> {
    create_dir(dir)?;
    write_collection(dir, cfg, &a.worlds, &a.split, &a.collected)?;
    a.model.save(dir.join("critic.ckpt"))?;
    a.log.save(dir.join("train_log.jsonl"))?;
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        let ext = format.extension();
        write(&dir.join(format!("static.{ext}")), render_report(&a.static_reports, format))?;
        write(&dir.join(format!("dynamic.{ext}")), render_report(&a.dynamic_reports, format))?;
    }
    Ok(())
}

/// Loads every `*.json` world file in `dir`, named by file stem.
pub fn load_worlds(dir: &Path) -> Result<WorldSet> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::Config(format!("no world files in {}", dir.display())));
    }
    paths.sort();
    Ok(world_set(paths.iter().map(World::load).collect::<Result<Vec<_>>>()?))
}

/// Split assignment for worlds named the way [`build_worlds`] names them:
/// `mobile-*`, `scenario-*` and `web-*`.
pub fn split_by_name(worlds: &WorldSet, cfg: &ExperimentConfig) -> Result<SplitConfig> {
    let with = |prefix: &str| -> Vec<String> { worlds.keys().filter(|n| n.starts_with(prefix)).cloned().collect() };
    let train_worlds = with("mobile-");
    let Some(first) = train_worlds.first() else {
        return Err(Error::Split("no mobile-* worlds to train on".into()));
    };
    let ids: Vec<String> = worlds[first].tasks().iter().map(|t| t.id.clone()).collect();
    let k = cfg.worlds.train_tasks.min(ids.len());
    Ok(SplitConfig {
        train_worlds,
        train_tasks: ids[..k].to_vec(),
        test_i_tasks: ids[k..].to_vec(),
        scenario_worlds: with("scenario-"),
        web_worlds: with("web-"),
    })
}

/// A directory written by [`write_collection`], read back.
#[derive(Clone, Debug)]
pub struct CollectionDir {
    pub cfg: ExperimentConfig,
    pub worlds: WorldSet,
    pub split: SplitConfig,
}

pub fn read_collection(dir: &Path) -> Result<CollectionDir> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json("manifest.json", &e))?;
    let cfg: ExperimentConfig = serde_json::from_value(manifest["config"].take())
        .map_err(|e| Error::Config(format!("manifest config: {e}")))?;
    let split: SplitConfig =
        serde_json::from_value(manifest["split"].take()).map_err(|e| Error::Config(format!("manifest split: {e}")))?;
    let worlds = load_worlds(&dir.join("worlds"))?;
    Ok(CollectionDir { cfg, worlds, split })
}

/// The knob a variant turns, relative to the base configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    Full,
    RandomNegatives,
    NoFilter,
    NoCot,
    RftOnly,
    NoRft,
    LambdaF(f64),
    LambdaS(f64),
    GroupSize(usize),
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::Full => "full".into(),
            Variant::RandomNegatives => "w/o NOS".into(),
            Variant::NoFilter => "w/o DF".into(),
            Variant::NoCot => "w/o GCG".into(),
            Variant::RftOnly => "RFT only".into(),
            Variant::NoRft => "w/o RFT".into(),
            Variant::LambdaF(v) => format!("lambda_f={v}"),
            Variant::LambdaS(v) => format!("lambda_s={v}"),
            Variant::GroupSize(g) => format!("group_size={g}"),
        }
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        match *self {
            Variant::Full => {}
            Variant::RandomNegatives => c.pipeline.negatives = NegativeMode::Random,
            Variant::NoFilter => c.pipeline.filter = false,
            Variant::NoCot => c.pipeline.cot = false,
            Variant::RftOnly => c.train.epochs = 0,
            Variant::NoRft => c.train.rft_epochs = 0,
            Variant::LambdaF(v) => c.train.lambda_f = v,
            Variant::LambdaS(v) => c.train.lambda_s = v,
            Variant::GroupSize(g) => c.train.group_size = g,
        }
        c
    }

    /// Variants that only change training can reuse the base run's data.
    fn same_data(&self) -> bool {
        !matches!(self, Variant::RandomNegatives | Variant::NoFilter | Variant::NoCot)
    }
}

pub const PRESETS: [&str; 3] = ["data-pipeline", "rewards", "sweep-lambda"];

pub fn preset(name: &str) -> Result<Vec<Variant>> {
    Ok(match name {
        "data-pipeline" => vec![Variant::Full, Variant::RandomNegatives, Variant::NoFilter, Variant::NoCot],
        "rewards" => {
            vec![Variant::Full, Variant::RftOnly, Variant::NoRft, Variant::LambdaF(0.0), Variant::LambdaS(0.0)]
        }
        "sweep-lambda" => {
            let mut v: Vec<Variant> = [0.0, 0.05, 0.1, 0.2, 0.4].into_iter().map(Variant::LambdaS).collect();
            v.extend([2, 4, 6, 8].into_iter().map(Variant::GroupSize));
            v
        }
        other => return Err(Error::Unknown { what: "ablation preset", name: other.to_string() }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub split: String,
    pub critic_acc: f64,
    pub sugg_acc: f64,
    pub n: usize,
}

impl CsvRow for AblationRow {
    const HEADER: &'static str = "variant,split,critic_acc,sugg_acc,n";

    fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.variant, self.split, self.critic_acc, self.sugg_acc, self.n)
    }
}

/// Trains one critic per variant on the base configuration's worlds and
/// reports static metrics on the configured splits.
pub fn ablate(base: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let (worlds, split) = build_worlds(base)?;
    let base_data = collect(base, &worlds, &split)?;
    let mut rows = Vec::new();
    for v in variants {
        let cfg = v.apply(base);
        cfg.validate()?;
        let fresh;
        let data = if v.same_data() {
            &base_data
        } else {
            fresh = collect(&cfg, &worlds, &split)?;
            &fresh
        };
        let (model, _) = train_critic(&cfg, &worlds, &data.training.action, &data.training.cot)?;
        for r in static_eval(&worlds, &base_data.splits, &model, &cfg.eval_splits)? {
            rows.push(AblationRow {
                variant: v.name(),
                split: r.split,
                critic_acc: r.critic_acc,
                sugg_acc: r.sugg_acc,
                n: r.n,
            });
        }
    }
    Ok(rows)
}
