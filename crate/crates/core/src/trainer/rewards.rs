use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::critic::{parse, Parsed, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::world::{Action, EnvState, World};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_f: u8,
    pub r_a: u8,
    pub r_s: u8,
    pub r: f64,
}

/// 1 iff the tokens form a complete, grammatical critic output.
pub fn reward_format(vocab: &Vocab, tokens: &[TokenId]) -> u8 {
    u8::from(parse(vocab, tokens).is_some())
}

pub fn reward_accuracy(parsed: Option<&Parsed>, label: u8) -> u8 {
    u8::from(parsed.is_some_and(|p| p.score == label))
}

/// Two suggestions are similar when they are the same action or both lie on a
/// shortest path from `state`.
pub fn similar(world: &World, state: &EnvState, a: &Action, b: &Action) -> bool {
    a == b || world.optimal_actions(state).is_ok_and(|opt| similar_in(&opt, a, b))
}

pub(crate) fn similar_in(optimal: &[Action], a: &Action, b: &Action) -> bool {
    a == b || (optimal.contains(a) && optimal.contains(b))
}

pub fn reward_suggestion(parsed: Option<&Parsed>, annotated: &Action, world: &World, state: &EnvState) -> u8 {
    u8::from(parsed.is_some_and(|p| similar(world, state, &p.suggestion, annotated)))
}

pub fn combine_rewards(cfg: &TrainConfig, r_f: u8, r_a: u8, r_s: u8) -> f64 {
    cfg.lambda_f * f64::from(r_f) + cfg.lambda_s * f64::from(r_s) + (1.0 - cfg.lambda_f - cfg.lambda_s) * f64::from(r_a)
}

/// Scores one sampled output against the annotation, with the optimal action
/// set of the input state precomputed.
pub(crate) fn score_output(
    cfg: &TrainConfig,
    vocab: &Vocab,
    tokens: &[TokenId],
    label: u8,
    suggestion: &Action,
    optimal: &[Action],
) -> RewardBreakdown {
    let parsed = parse(vocab, tokens);
    let r_f = u8::from(parsed.is_some());
    let r_a = reward_accuracy(parsed.as_ref(), label);
    let r_s = u8::from(parsed.as_ref().is_some_and(|p| similar_in(optimal, &p.suggestion, suggestion)));
    RewardBreakdown { r_f, r_a, r_s, r: combine_rewards(cfg, r_f, r_a, r_s) }
}

/// Group-normalized advantages with the population standard deviation; all
/// zero when the group is (numerically) constant.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std < 1e-8 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// `ratio - ln(ratio) - 1` for `ratio = π_ref(o) / π(o)`.
pub fn kl_term(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::NonFinite(format!("KL ratio must be positive and finite, got {ratio}")));
    }
    Ok(ratio - ratio.ln() - 1.0)
}
