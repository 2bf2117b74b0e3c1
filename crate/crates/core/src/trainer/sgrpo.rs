use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rewards::{group_advantages, kl_term, score_output, RewardBreakdown};
use super::{GrpoInput, TrainConfig};
use crate::critic::{CriticPolicy, Gradient, TokenId, Vocab, MAX_LEN};
use crate::error::{Error, Result};
use crate::rng::substream;

/// G sampled outputs for one input, scored and normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub input: usize,
    pub outputs: Vec<Vec<TokenId>>,
    pub old_logprobs: Vec<f64>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
}

/// Per-output terms of the objective, in group order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputStat {
    /// `π(o) / π_old(o)`.
    pub ratio: f64,
    pub advantage: f64,
    /// `min(ratio·A, clip(ratio)·A)`.
    pub surrogate: f64,
    /// `π_ref(o) / π(o)`.
    pub ref_ratio: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub groups: Vec<Group>,
    pub outputs: Vec<OutputStat>,
    /// Objective value at the pre-step policy.
    pub objective: f64,
}

/// Samples `cfg.group_size` outputs from `old` for each selected input.
pub fn rollout(
    old: &CriticPolicy,
    vocab: &Vocab,
    inputs: &[GrpoInput],
    batch: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Vec<Group> {
    batch
        .par_iter()
        .map(|&i| {
            let input = &inputs[i];
            let mut rng = substream(seed, &format!("group/{i}"));
            let mut outputs = Vec::with_capacity(cfg.group_size);
            let mut old_logprobs = Vec::with_capacity(cfg.group_size);
            let mut rewards = Vec::with_capacity(cfg.group_size);
            for _ in 0..cfg.group_size {
                let g = old.sample(&input.x, &mut rng, MAX_LEN);
                rewards.push(score_output(cfg, vocab, &g.tokens, input.label, &input.suggestion, &input.optimal));
                outputs.push(g.tokens);
                old_logprobs.push(g.logprob);
            }
            let r: Vec<f64> = rewards.iter().map(|b| b.r).collect();
            Group { input: i, outputs, old_logprobs, rewards, advantages: group_advantages(&r) }
        })
        .collect()
}

/// Mean over all outputs of `min(ρA, clip(ρ)A) − β·D`, with `ρ = π/π_old`
/// and `D = π_ref/π − ln(π_ref/π) − 1` on whole sequences. When `grad` is
/// given, the exact gradient with respect to the policy weights is added.
pub fn sgrpo_objective(
    policy: &CriticPolicy,
    reference: &CriticPolicy,
    inputs: &[GrpoInput],
    groups: &[Group],
    cfg: &TrainConfig,
    mut grad: Option<&mut Gradient>,
) -> Result<(f64, Vec<OutputStat>)> {
    let n: usize = groups.iter().map(|g| g.outputs.len()).sum();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let k = 1.0 / n as f64;
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let mut value = 0.0;
    let mut stats = Vec::with_capacity(n);
    for g in groups {
        let x = &inputs[g.input].x;
        for (o, tokens) in g.outputs.iter().enumerate() {
            let lp = policy.logprob(x, tokens)?;
            let lp_ref = reference.logprob(x, tokens)?;
            let a = g.advantages[o];
            let ratio = (lp - g.old_logprobs[o]).exp();
            let ref_ratio = (lp_ref - lp).exp();
            let kl = kl_term(ref_ratio).map_err(|e| dump(g, o, e))?;
            let unclipped = ratio * a;
            let clipped = ratio.clamp(lo, hi) * a;
            let surrogate = unclipped.min(clipped);
            let term = surrogate - cfg.beta * kl;
            if !term.is_finite() {
                return Err(dump(g, o, Error::NonFinite(format!("objective term {term}"))));
            }
            value += k * term;
            stats.push(OutputStat { ratio, advantage: a, surrogate, ref_ratio, kl });
            if let Some(grad) = grad.as_deref_mut() {
                // d(ρA)/dθ = ρA ∇log π on the unclipped branch, 0 once clipping binds;
                // dD/dθ = (1 − π_ref/π) ∇log π.
                let surrogate_coef = if unclipped <= clipped { unclipped } else { 0.0 };
                let coef = surrogate_coef - cfg.beta * (1.0 - ref_ratio);
                if coef != 0.0 {
                    policy.accumulate_grad(x, tokens, k * coef, grad)?;
                }
            }
        }
    }
    Ok((value, stats))
}

fn dump(g: &Group, o: usize, e: Error) -> Error {
    Error::NonFinite(format!(
        "{e}; group for input {} output {o}: tokens {:?}, old logprobs {:?}, rewards {:?}, advantages {:?}",
        g.input, g.outputs[o], g.old_logprobs, g.rewards, g.advantages
    ))
}

/// Snapshots the policy as `π_old`, rolls out groups for `batch` and takes
/// one ascent step of size `cfg.lr` on the objective.
pub fn sgrpo_step(
    policy: &mut CriticPolicy,
    reference: &CriticPolicy,
    vocab: &Vocab,
    inputs: &[GrpoInput],
    batch: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<StepStats> {
    let old = policy.clone();
    let groups = rollout(&old, vocab, inputs, batch, cfg, seed);
    let mut grad = policy.zero_gradient();
    let (objective, outputs) = sgrpo_objective(policy, reference, inputs, &groups, cfg, Some(&mut grad))?;
    policy.apply(&grad, cfg.lr);
    Ok(StepStats { groups, outputs, objective })
}
