//! Data collection: positives from shortest trajectories, negatives from a
//! fallible proposer, label-noise filtering against a judge, and reasoning
//! bootstrapping that keeps only generations agreeing with the annotation.
//!
//! All stages draw per-sample random streams keyed on the sample identity, so
//! results do not depend on iteration order or thread count.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{lookup, Dataset, Sample, SplitTag, WorldSet};
use crate::agent::{AgentPolicy, Proposer};
use crate::critic::{encode, oracle_critic, parse, predict_thinking, CriticModel, Parsed, TokenId, Vocab, MAX_LEN};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, Rng};
use crate::world::{Action, EnvState, World};

/// Walks one shortest trajectory per task (smallest optimal action at every
/// step) and labels each step positive.
pub fn collect_positives(world: &World, tasks: &[String], split: SplitTag) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for task in tasks {
        let mut state = world.initial_state(task)?;
        loop {
            let action = world.optimal_actions(&state)?.swap_remove(0);
            let suggestion = action.clone();
            out.push(Sample {
                world: world.name().to_string(),
                state: state.clone(),
                action: action.clone(),
                label: 1,
                suggestion,
                thinking: None,
                split,
            });
            if action.is_done() {
                break;
            }
            state = world.step(&state, &action).state;
        }
    }
    Ok(out)
}

/// Replaces the decision with a uniformly random action template drawn from
/// the whole action vocabulary, ignoring what the screen offers.
#[derive(Clone, Debug)]
pub struct RandomReplacement {
    pub actions: Vec<Action>,
}

impl Proposer for RandomReplacement {
    fn propose(&self, _: &World, _: &EnvState, rng: &mut Rng) -> Action {
        self.actions.choose(rng).cloned().unwrap_or_else(Action::done)
    }
}

/// Asks `proposer` for `attempts` actions at each positive state and keeps
/// the distinct ones that are not optimal. Each kept sample inherits the
/// positive's suggestion.
pub fn sample_negatives(
    world: &World,
    positives: &[Sample],
    proposer: &dyn Proposer,
    attempts: usize,
    seed: u64,
) -> Vec<Sample> {
    positives
        .par_iter()
        .flat_map_iter(|pos| {
            let mut rng = substream(seed, &format!("negatives/{}", pos.key_string()));
            let optimal = world.optimal_actions(&pos.state).unwrap_or_default();
            let mut seen = HashSet::new();
            let mut kept = Vec::new();
            for _ in 0..attempts {
                let a = proposer.propose(world, &pos.state, &mut rng);
                if !optimal.contains(&a) && seen.insert(a.clone()) {
                    kept.push(Sample { action: a, label: 0, thinking: None, ..pos.clone() });
                }
            }
            kept
        })
        .collect()
}

/// Scores a `(state, action)` pair as 1 (correct) or 0.
pub trait Judge: Sync {
    fn judge(&self, world: &World, state: &EnvState, action: &Action, rng: &mut Rng) -> u8;
}

/// Oracle verdict flipped with probability `error_rate`.
#[derive(Clone, Copy, Debug)]
pub struct OracleJudge {
    pub error_rate: f64,
}

impl Judge for OracleJudge {
    fn judge(&self, world: &World, state: &EnvState, action: &Action, rng: &mut Rng) -> u8 {
        let truth = u8::from(world.is_optimal(state, action));
        if rng.gen::<f64>() < self.error_rate {
            1 - truth
        } else {
            truth
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantJudge(pub u8);

impl Judge for ConstantJudge {
    fn judge(&self, _: &World, _: &EnvState, _: &Action, _: &mut Rng) -> u8 {
        self.0
    }
}

impl Judge for CriticModel {
    fn judge(&self, world: &World, state: &EnvState, action: &Action, _: &mut Rng) -> u8 {
        use crate::critic::Critic;
        self.critique(world, state, action).map_or(0, |p| p.score)
    }
}

fn flip_labels(samples: &[Sample], label_noise: f64, seed: u64) -> Vec<(Sample, Rng)> {
    samples
        .iter()
        .map(|s| {
            let mut rng = substream(seed, &format!("filter/{}", s.key_string()));
            let mut s = s.clone();
            if rng.gen::<f64>() < label_noise {
                s.label = 1 - s.label;
            }
            (s, rng)
        })
        .collect()
}

/// Flips each label with probability `label_noise`, then keeps the samples
/// whose (possibly corrupted) label agrees with the judge.
pub fn filter(
    worlds: &WorldSet,
    samples: &[Sample],
    judge: &dyn Judge,
    label_noise: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    if !(0.0..0.5).contains(&label_noise) {
        return Err(Error::Config(format!("label noise must lie in [0, 0.5), got {label_noise}")));
    }
    let mut kept = Vec::new();
    for (s, mut rng) in flip_labels(samples, label_noise, seed) {
        let w = lookup(worlds, &s.world)?;
        if judge.judge(w, &s.state, &s.action, &mut rng) == s.label {
            kept.push(s);
        }
    }
    Ok(kept)
}

/// Produces a complete critic output for `(state, action)` without seeing labels.
pub trait CotGenerator: Sync {
    fn generate(&self, world: &World, state: &EnvState, action: &Action, rng: &mut Rng) -> Vec<TokenId>;
}

/// Oracle reasoning with independent corruption: with probability `epsilon`
/// the score is redrawn uniformly from {0, 1}; independently, with
/// probability `epsilon` the suggestion is redrawn uniformly from the
/// available actions. The critique verdict always matches the emitted score.
#[derive(Clone, Debug)]
pub struct NoisyOracleGenerator {
    pub vocab: Vocab,
    pub epsilon: f64,
}

impl CotGenerator for NoisyOracleGenerator {
    fn generate(&self, world: &World, state: &EnvState, action: &Action, rng: &mut Rng) -> Vec<TokenId> {
        let Ok(truth) = oracle_critic(world, state, action) else {
            return Vec::new();
        };
        let mut score = truth.score;
        let mut suggestion = truth.suggestion;
        if rng.gen::<f64>() < self.epsilon {
            score = rng.gen_range(0..=1);
        }
        if rng.gen::<f64>() < self.epsilon {
            suggestion = world.available_actions(state).choose(rng).cloned().unwrap_or_else(Action::done);
        }
        let out = Parsed { score, suggestion, thinking: Some(predict_thinking(world, state, action, score)) };
        encode(&self.vocab, &out).unwrap_or_default()
    }
}

/// Samples from a trained policy.
impl CotGenerator for CriticModel {
    fn generate(&self, world: &World, state: &EnvState, action: &Action, rng: &mut Rng) -> Vec<TokenId> {
        match self.featurize(world, state, action) {
            Ok(x) => self.policy.sample(&x, rng, MAX_LEN).tokens,
            Err(_) => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStats {
    pub inputs: usize,
    pub retained: usize,
    pub generations: usize,
}

/// Draws up to `max` generations per sample from `generator` and keeps the
/// first whose parsed score and suggestion both equal the annotation, with its
/// thinking. Generations without a thinking block never qualify.
pub fn bootstrap_cot(
    worlds: &WorldSet,
    vocab: &Vocab,
    samples: &[Sample],
    generator: &dyn CotGenerator,
    max: usize,
    seed: u64,
) -> Result<(Dataset, BootstrapStats)> {
    if max == 0 {
        return Err(Error::Config("bootstrap max must be >= 1".into()));
    }
    let results: Vec<(Option<Sample>, usize)> = samples
        .par_iter()
        .map(|s| {
            let w = lookup(worlds, &s.world)?;
            let mut rng = substream(seed, &format!("bootstrap/{}", s.key_string()));
            for i in 0..max {
                let tokens = generator.generate(w, &s.state, &s.action, &mut rng);
                if let Some(p) = parse(vocab, &tokens) {
                    if p.thinking.is_some() && p.score == s.label && p.suggestion == s.suggestion {
                        return Ok((Some(Sample { thinking: p.thinking, ..s.clone() }), i + 1));
                    }
                }
            }
            Ok((None, max))
        })
        .collect::<Result<_>>()?;
    let stats = BootstrapStats {
        inputs: samples.len(),
        retained: results.iter().filter(|(s, _)| s.is_some()).count(),
        generations: results.iter().map(|(_, n)| n).sum(),
    };
    let kept = results.into_iter().filter_map(|(s, _)| s).collect();
    let ds = Dataset::new(kept, json!({ "stage": "bootstrap_cot", "max": max, "seed": seed }))?;
    Ok((ds, stats))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// Fallible agent proposals judged by the optimality rule.
    Proposer,
    /// Random decision replacement over the whole action vocabulary.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub negatives: NegativeMode,
    /// Error rate of the proposer agent used for negative sampling.
    pub proposer_eta: f64,
    pub proposals_per_state: usize,
    /// Negatives kept per positive.
    pub neg_ratio: f64,
    /// Annotation noise applied to training labels.
    pub label_noise: f64,
    pub filter: bool,
    pub judge_error: f64,
    /// Maximum bootstrap generations per sample.
    pub bootstrap_max: usize,
    pub bootstrap_epsilon: f64,
    /// Build the reasoning (CoT) subset at all.
    pub cot: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            negatives: NegativeMode::Proposer,
            proposer_eta: 0.5,
            proposals_per_state: 4,
            neg_ratio: 1.0,
            label_noise: 0.2,
            filter: true,
            judge_error: 0.05,
            bootstrap_max: 3,
            bootstrap_epsilon: 0.5,
            cot: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.proposer_eta) {
            return Err(Error::Config("proposer_eta must lie in [0, 1)".into()));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::Config("label_noise must lie in [0, 0.5)".into()));
        }
        if !(0.0..0.5).contains(&self.judge_error) {
            return Err(Error::Config("judge_error must lie in [0, 0.5)".into()));
        }
        if self.neg_ratio < 0.0 || self.proposals_per_state == 0 || self.bootstrap_max == 0 {
            return Err(Error::Config("neg_ratio must be >= 0; proposals_per_state and bootstrap_max >= 1".into()));
        }
        Ok(())
    }
}

/// Which `(world, task)` pairs go to which split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Family-A worlds shared by train and test-I.
    pub train_worlds: Vec<String>,
    /// Task ids used for training on family-A worlds.
    pub train_tasks: Vec<String>,
    /// Held-out task ids on family-A worlds.
    pub test_i_tasks: Vec<String>,
    /// Unseen worlds of the same family (all tasks).
    pub scenario_worlds: Vec<String>,
    /// Worlds of the structurally different family (all tasks).
    pub web_worlds: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    pub assignments: Vec<(String, String, SplitTag)>,
}

impl SplitPlan {
    pub fn tasks(&self, split: SplitTag) -> Vec<(String, String)> {
        self.assignments.iter().filter(|(_, _, s)| *s == split).map(|(w, t, _)| (w.clone(), t.clone())).collect()
    }
}

/// Assigns `(world, task)` pairs to splits, rejecting overlaps.
pub fn make_splits(worlds: &WorldSet, cfg: &SplitConfig) -> Result<SplitPlan> {
    for (family, list) in [("train", &cfg.train_worlds), ("scenario", &cfg.scenario_worlds), ("web", &cfg.web_worlds)] {
        if list.is_empty() {
            return Err(Error::Split(format!("missing world family {family}")));
        }
        for w in list {
            lookup(worlds, w)?;
        }
    }
    let train_tasks: BTreeSet<&String> = cfg.train_tasks.iter().collect();
    if let Some(t) = cfg.test_i_tasks.iter().find(|t| train_tasks.contains(t)) {
        return Err(Error::Split(format!("task {t} requested in both train and test-I")));
    }
    if cfg.train_tasks.is_empty() || cfg.test_i_tasks.is_empty() {
        return Err(Error::Split("train and test-I task lists must be non-empty".into()));
    }
    let mut seen_world = BTreeSet::new();
    for w in cfg.train_worlds.iter().chain(&cfg.scenario_worlds).chain(&cfg.web_worlds) {
        if !seen_world.insert(w) {
            return Err(Error::Split(format!("world {w} assigned to more than one family")));
        }
    }
    let mut assignments = Vec::new();
    for w in &cfg.train_worlds {
        let world = lookup(worlds, w)?;
        for (tasks, tag) in [(&cfg.train_tasks, SplitTag::Train), (&cfg.test_i_tasks, SplitTag::TestI)] {
            for t in tasks {
                world.task(t)?;
                assignments.push((w.clone(), t.clone(), tag));
            }
        }
    }
    for (list, tag) in [(&cfg.scenario_worlds, SplitTag::TestS), (&cfg.web_worlds, SplitTag::TestW)] {
        for w in list {
            for t in lookup(worlds, w)?.tasks() {
                assignments.push((w.clone(), t.id.clone(), tag));
            }
        }
    }
    let mut keys = HashSet::new();
    for (w, t, _) in &assignments {
        if !keys.insert((w, t)) {
            return Err(Error::Split(format!("({w}, {t}) assigned twice")));
        }
    }
    Ok(SplitPlan { assignments })
}

/// Action-level data for a set of tasks: positives plus sampled negatives,
/// before any label noise.
fn collect_action_data(
    worlds: &WorldSet,
    vocab: &Vocab,
    tasks: &[(String, String)],
    split: SplitTag,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<Sample>> {
    let proposer_agent = AgentPolicy::noisy(cfg.proposer_eta)?;
    let random = RandomReplacement { actions: vocab.actions().to_vec() };
    let proposer: &dyn Proposer = match cfg.negatives {
        NegativeMode::Proposer => &proposer_agent,
        NegativeMode::Random => &random,
    };
    let mut samples = Vec::new();
    let mut negatives = Vec::new();
    let mut by_world: Vec<(&String, Vec<String>)> = Vec::new();
    for (w, t) in tasks {
        match by_world.iter_mut().find(|(name, _)| *name == w) {
            Some((_, list)) => list.push(t.clone()),
            None => by_world.push((w, vec![t.clone()])),
        }
    }
    for (w, list) in by_world {
        let world = lookup(worlds, w)?;
        let pos = collect_positives(world, &list, split)?;
        negatives.extend(sample_negatives(world, &pos, proposer, cfg.proposals_per_state, seed));
        samples.extend(pos);
    }
    let target = (cfg.neg_ratio * samples.len() as f64).round() as usize;
    negatives.sort_by_key(|s| s.key());
    negatives.dedup_by_key(|s| s.key());
    if negatives.len() > target {
        let mut rng = substream(seed, &format!("neg-subsample/{split}"));
        negatives.shuffle(&mut rng);
        negatives.truncate(target);
    }
    samples.extend(negatives);
    Ok(samples)
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub test_i: Dataset,
    pub test_s: Dataset,
    pub test_w: Dataset,
}

impl Splits {
    pub fn get(&self, tag: SplitTag) -> &Dataset {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::TestI => &self.test_i,
            SplitTag::TestS => &self.test_s,
            SplitTag::TestW => &self.test_w,
        }
    }
}

/// Builds the four splits. Test splits carry oracle labels; the train split
/// goes through label noise and filtering (or random selection of the same
/// size when filtering is disabled).
pub fn build_splits(
    worlds: &WorldSet,
    vocab: &Vocab,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Splits> {
    cfg.validate()?;
    let provenance = |tag: SplitTag| json!({ "split": tag.as_str(), "seed": seed, "pipeline": cfg });
    let build = |tag: SplitTag| -> Result<Dataset> {
        let sub = derive_seed(seed, tag.as_str());
        let raw = collect_action_data(worlds, vocab, &plan.tasks(tag), tag, cfg, sub)?;
        let samples = if tag == SplitTag::Train {
            let judge = OracleJudge { error_rate: cfg.judge_error };
            let filtered = filter(worlds, &raw, &judge, cfg.label_noise, sub)?;
            if cfg.filter {
                filtered
            } else {
                let mut noisy: Vec<Sample> =
                    flip_labels(&raw, cfg.label_noise, sub).into_iter().map(|(s, _)| s).collect();
                let mut rng = substream(sub, "random-selection");
                noisy.shuffle(&mut rng);
                noisy.truncate(filtered.len());
                noisy
            }
        } else {
            raw
        };
        Dataset::new(samples, provenance(tag))
    };
    Ok(Splits {
        train: build(SplitTag::Train)?,
        test_i: build(SplitTag::TestI)?,
        test_s: build(SplitTag::TestS)?,
        test_w: build(SplitTag::TestW)?,
    })
}

/// Everything the trainer consumes: the action-level set and the reasoning set.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub action: Dataset,
    pub cot: Dataset,
    pub bootstrap: BootstrapStats,
}

pub fn build_training_data(
    worlds: &WorldSet,
    vocab: &Vocab,
    train: &Dataset,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<TrainingData> {
    let (cot, bootstrap) = if cfg.cot {
        let generator = NoisyOracleGenerator { vocab: vocab.clone(), epsilon: cfg.bootstrap_epsilon };
        bootstrap_cot(worlds, vocab, train.samples(), &generator, cfg.bootstrap_max, derive_seed(seed, "cot"))?
    } else {
        (Dataset::new(Vec::new(), json!({ "stage": "bootstrap_cot", "disabled": true }))?, BootstrapStats::default())
    };
    Ok(TrainingData { action: train.clone(), cot, bootstrap })
}
