//! Supervised cold-start followed by suggestion-aware GRPO.

mod rewards;
mod sgrpo;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use rewards::{
    combine_rewards, group_advantages, kl_term, reward_accuracy, reward_format, reward_suggestion, similar,
    RewardBreakdown,
};
pub use sgrpo::{rollout, sgrpo_objective, sgrpo_step, Group, OutputStat, StepStats};

use crate::critic::{encode, CriticModel, CriticPolicy, FeatureVector, Parsed, TokenId};
use crate::data::{lookup, Dataset, WorldSet};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::world::Action;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda_f: f64,
    pub lambda_s: f64,
    pub group_size: usize,
    pub clip_eps: f64,
    pub beta: f64,
    /// Step size of the S-GRPO ascent.
    pub lr: f64,
    /// Step size of the supervised cold-start.
    pub rft_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rft_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_f: 0.1,
            lambda_s: 0.1,
            group_size: 6,
            clip_eps: 0.2,
            beta: 1e-2,
            lr: 1e-2,
            rft_lr: 1e-2,
            batch_size: 32,
            epochs: 10,
            rft_epochs: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.lambda_f < 0.0 || self.lambda_s < 0.0 || self.lambda_f + self.lambda_s >= 1.0 {
            return bad("reward weights must be non-negative with lambda_f + lambda_s < 1");
        }
        if self.group_size < 2 {
            return bad("group size must be at least 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip epsilon must lie in (0, 1)");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if !(self.lr > 0.0 && self.rft_lr > 0.0) || !self.lr.is_finite() || !self.rft_lr.is_finite() {
            return bad("learning rates must be positive and finite");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

/// A teacher-forcing target for the cold-start.
#[derive(Clone, Debug)]
pub struct RftExample {
    pub x: FeatureVector,
    pub target: Vec<TokenId>,
}

/// An S-GRPO input: features plus what the rewards are checked against.
#[derive(Clone, Debug)]
pub struct GrpoInput {
    pub x: FeatureVector,
    pub label: u8,
    pub suggestion: Action,
    pub optimal: Vec<Action>,
}

/// Short-form targets for samples without reasoning, full-form targets for
/// samples that carry a thinking block.
pub fn rft_examples(model: &CriticModel, worlds: &WorldSet, datasets: &[&Dataset]) -> Result<Vec<RftExample>> {
    let mut out = Vec::new();
    for ds in datasets {
        for s in ds.samples() {
            let w = lookup(worlds, &s.world)?;
            let parsed = Parsed { score: s.label, suggestion: s.suggestion.clone(), thinking: s.thinking.clone() };
            out.push(RftExample {
                x: model.featurize(w, &s.state, &s.action)?,
                target: encode(&model.vocab, &parsed)?,
            });
        }
    }
    Ok(out)
}

pub fn grpo_inputs(model: &CriticModel, worlds: &WorldSet, ds: &Dataset) -> Result<Vec<GrpoInput>> {
    ds.samples()
        .iter()
        .map(|s| {
            let w = lookup(worlds, &s.world)?;
            Ok(GrpoInput {
                x: model.featurize(w, &s.state, &s.action)?,
                label: s.label,
                suggestion: s.suggestion.clone(),
                optimal: w.optimal_actions(&s.state).unwrap_or_default(),
            })
        })
        .collect()
}

/// Mean teacher-forced negative log-likelihood and its gradient with respect
/// to the weights (descent direction is the negation).
pub fn rft_loss_and_grad(policy: &CriticPolicy, batch: &[&RftExample]) -> Result<(f64, crate::critic::Gradient)> {
    let mut grad = policy.zero_gradient();
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let k = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        loss -= k * policy.accumulate_grad(&ex.x, &ex.target, -k, &mut grad)?;
    }
    Ok((loss, grad))
}

/// One descent step on the mean NLL of `batch`. Returns the pre-step loss.
pub fn rft_step(policy: &mut CriticPolicy, batch: &[&RftExample], lr: f64) -> Result<f64> {
    let (loss, grad) = rft_loss_and_grad(policy, batch)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("cold-start loss {loss} on a batch of {}", batch.len())));
    }
    policy.apply(&grad, -lr);
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum LogRecord {
    Rft { epoch: usize, loss: f64, wall_ms: u64 },
    Sgrpo { epoch: usize, mean_r: f64, mean_r_f: f64, mean_r_a: f64, mean_r_s: f64, mean_kl: f64, wall_ms: u64 },
}

impl LogRecord {
    /// The record without its timing field, for reproducibility checks.
    pub fn untimed(&self) -> LogRecord {
        let mut r = self.clone();
        match &mut r {
            LogRecord::Rft { wall_ms, .. } | LogRecord::Sgrpo { wall_ms, .. } => *wall_ms = 0,
        }
        r
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("log record serializes") + "\n").collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn sgrpo(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(|r| matches!(r, LogRecord::Sgrpo { .. }))
    }
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Runs the cold-start over action and reasoning data, freezes the result as
/// the reference, then runs S-GRPO over the action data.
pub fn train(
    model: &CriticModel,
    worlds: &WorldSet,
    action: &Dataset,
    cot: &Dataset,
    cfg: &TrainConfig,
) -> Result<(CriticModel, TrainLog)> {
    cfg.validate()?;
    let mut policy = model.policy.clone();
    let mut log = TrainLog::default();

    let examples = rft_examples(model, worlds, &[action, cot])?;
    for epoch in 0..cfg.rft_epochs {
        let t = Instant::now();
        let mut order: Vec<&RftExample> = examples.iter().collect();
        order.shuffle(&mut substream(cfg.seed, &format!("rft/{epoch}")));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            total += rft_step(&mut policy, batch, cfg.rft_lr)? * batch.len() as f64;
        }
        let loss = if order.is_empty() { 0.0 } else { total / order.len() as f64 };
        log.records.push(LogRecord::Rft { epoch, loss, wall_ms: elapsed_ms(t) });
    }

    let reference = policy.clone();
    let inputs = grpo_inputs(model, worlds, action)?;
    for epoch in 0..cfg.epochs {
        let t = Instant::now();
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut substream(cfg.seed, &format!("sgrpo/{epoch}")));
        let mut sums = [0.0f64; 5];
        let mut n = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let seed = derive_seed(cfg.seed, &format!("sgrpo/{epoch}/{b}"));
            let stats = sgrpo_step(&mut policy, &reference, &model.vocab, &inputs, batch, cfg, seed)?;
            for (g, o) in stats.groups.iter().flat_map(|g| g.rewards.iter()).zip(&stats.outputs) {
                sums[0] += g.r;
                sums[1] += f64::from(g.r_f);
                sums[2] += f64::from(g.r_a);
                sums[3] += f64::from(g.r_s);
                sums[4] += o.kl;
                n += 1;
            }
        }
        let m = |i: usize| if n == 0 { 0.0 } else { sums[i] / n as f64 };
        log.records.push(LogRecord::Sgrpo {
            epoch,
            mean_r: m(0),
            mean_r_f: m(1),
            mean_r_a: m(2),
            mean_r_s: m(3),
            mean_kl: m(4),
            wall_ms: elapsed_ms(t),
        });
    }
    policy.version = format!("rft{}-sgrpo{}-seed{}", cfg.rft_epochs, cfg.epochs, cfg.seed);
    Ok((model.with_policy(policy), log))
}
