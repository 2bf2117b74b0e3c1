//! Episode runner: a fallible agent acting in a world, optionally guarded by a
//! critic before execution (pre) or after it (post).

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critic::Critic;
use crate::data::{lookup, WorldSet};
use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::world::{Action, EnvState, World};

/// Anything that proposes the next action for a state.
pub trait Proposer: Sync {
    fn propose(&self, world: &World, state: &EnvState, rng: &mut Rng) -> Action;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AgentPolicy {
    Oracle,
    NoisyOptimal { eta: f64 },
    UniformRandom,
}

impl AgentPolicy {
    pub fn noisy(eta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::Config(format!("agent error rate must lie in [0, 1), got {eta}")));
        }
        Ok(AgentPolicy::NoisyOptimal { eta })
    }

    /// Proposal restricted to `available \ excluded`; returns `excluded` when
    /// nothing else is left.
    pub fn propose_excluding(&self, world: &World, state: &EnvState, excluded: &Action, rng: &mut Rng) -> Action {
        let available: Vec<Action> = world.available_actions(state).into_iter().filter(|a| a != excluded).collect();
        if available.is_empty() {
            return excluded.clone();
        }
        self.choose(world, state, available, rng)
    }

    fn choose(&self, world: &World, state: &EnvState, available: Vec<Action>, rng: &mut Rng) -> Action {
        let optimal: Vec<Action> = match world.optimal_actions(state) {
            Ok(o) => o.into_iter().filter(|a| available.contains(a)).collect(),
            Err(_) => Vec::new(),
        };
        match *self {
            AgentPolicy::Oracle => optimal.first().cloned().unwrap_or_else(Action::done),
            AgentPolicy::UniformRandom => available.choose(rng).cloned().unwrap_or_else(Action::done),
            AgentPolicy::NoisyOptimal { eta } => {
                let wrong: Vec<&Action> = available.iter().filter(|a| !optimal.contains(a)).collect();
                let err = rng.gen::<f64>() < eta;
                if (err || optimal.is_empty()) && !wrong.is_empty() {
                    (*wrong.choose(rng).unwrap()).clone()
                } else if let Some(a) = optimal.choose(rng) {
                    a.clone()
                } else {
                    Action::done()
                }
            }
        }
    }
}

impl Proposer for AgentPolicy {
    fn propose(&self, world: &World, state: &EnvState, rng: &mut Rng) -> Action {
        self.choose(world, state, world.available_actions(state), rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    None,
    Pre,
    Post,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub screen: String,
    pub proposed: Action,
    /// Critic score for the proposal, when a critic ran and produced one.
    pub verdict: Option<u8>,
    pub suggestion: Option<Action>,
    /// Actions actually executed for this decision, in order.
    pub executed: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub world: String,
    pub task: String,
    pub success: bool,
    /// Executed actions, remedial ones included.
    pub steps: usize,
    pub penalties: usize,
    pub trajectory: Vec<TrajectoryStep>,
}

struct Episode<'a> {
    world: &'a World,
    state: EnvState,
    max_steps: usize,
    penalties: usize,
}

impl Episode<'_> {
    fn live(&self) -> bool {
        !self.state.is_terminal() && self.state.step_count < self.max_steps
    }

    fn exec(&mut self, action: &Action, executed: &mut Vec<Action>) {
        if !self.live() {
            return;
        }
        let r = self.world.step(&self.state, action);
        self.penalties += usize::from(r.penalized);
        self.state = r.state;
        executed.push(action.clone());
    }
}

pub fn run_episode(
    world: &World,
    task: &str,
    agent: &AgentPolicy,
    mode: CriticMode,
    critic: Option<&dyn Critic>,
    rng: &mut Rng,
) -> Result<EpisodeResult> {
    if (mode == CriticMode::None) != critic.is_none() {
        return Err(Error::Config("a critic is required exactly when the critic mode is not none".into()));
    }
    let max_steps = world.task(task)?.max_steps as usize;
    let mut ep = Episode { world, state: world.initial_state(task)?, max_steps, penalties: 0 };
    let mut trajectory = Vec::new();

    while ep.live() {
        let before = ep.state.clone();
        let proposed = agent.propose(world, &before, rng);
        let mut step = TrajectoryStep {
            screen: before.screen.clone(),
            proposed: proposed.clone(),
            verdict: None,
            suggestion: None,
            executed: Vec::new(),
        };
        match (mode, critic) {
            (CriticMode::Pre, Some(critic)) => {
                let verdict = critic.critique(world, &before, &proposed);
                step.verdict = verdict.as_ref().map(|v| v.score);
                step.suggestion = verdict.as_ref().map(|v| v.suggestion.clone());
                match verdict {
                    Some(v) if v.score == 0 => {
                        let second = if world.is_available(&before, &v.suggestion) {
                            v.suggestion
                        } else {
                            agent.propose_excluding(world, &before, &proposed, rng)
                        };
                        ep.exec(&second, &mut step.executed);
                    }
                    _ => ep.exec(&proposed, &mut step.executed),
                }
            }
            (CriticMode::Post, Some(critic)) => {
                ep.exec(&proposed, &mut step.executed);
                let verdict = critic.critique(world, &before, &proposed);
                step.verdict = verdict.as_ref().map(|v| v.score);
                step.suggestion = verdict.as_ref().map(|v| v.suggestion.clone());
                if let Some(v) = verdict.filter(|v| v.score == 0) {
                    if ep.live() && world.is_available(&ep.state, &Action::back()) {
                        ep.exec(&Action::back(), &mut step.executed);
                        let here = ep.state.clone();
                        let second = if world.is_available(&here, &v.suggestion) {
                            v.suggestion
                        } else {
                            agent.propose_excluding(world, &here, &proposed, rng)
                        };
                        ep.exec(&second, &mut step.executed);
                    }
                }
            }
            _ => ep.exec(&proposed, &mut step.executed),
        }
        trajectory.push(step);
    }

    Ok(EpisodeResult {
        world: world.name().to_string(),
        task: task.to_string(),
        success: world.is_success(&ep.state),
        steps: ep.state.step_count,
        penalties: ep.penalties,
        trajectory,
    })
}

/// A named critic configuration for a suite.
pub struct SuiteConfig<'a> {
    pub name: String,
    pub mode: CriticMode,
    pub critic: Option<&'a dyn Critic>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub config: String,
    pub seed: u64,
    pub result: EpisodeResult,
}

impl SuiteResult {
    /// Pairing key shared by all configurations: `(world, task, seed)`.
    pub fn pair_key(&self) -> (String, String, u64) {
        (self.result.world.clone(), self.result.task.clone(), self.seed)
    }
}

/// Runs every `(task, seed, config)` combination. The agent's random stream
/// depends only on `(world, task, seed)`, so configurations see identical
/// proposals until their trajectories diverge.
pub fn run_suite(
    worlds: &WorldSet,
    tasks: &[(String, String)],
    agent: &AgentPolicy,
    configs: &[SuiteConfig<'_>],
    seeds: &[u64],
) -> Result<Vec<SuiteResult>> {
    let mut jobs = Vec::new();
    for cfg in configs {
        for (world, task) in tasks {
            for &seed in seeds {
                jobs.push((cfg, world, task, seed));
            }
        }
    }
    jobs.par_iter()
        .map(|(cfg, world, task, seed)| {
            let w = lookup(worlds, world)?;
            let mut rng = substream(*seed, &format!("episode/{world}/{task}"));
            let result = run_episode(w, task, agent, cfg.mode, cfg.critic, &mut rng)?;
            Ok(SuiteResult { config: cfg.name.clone(), seed: *seed, result })
        })
        .collect()
}
