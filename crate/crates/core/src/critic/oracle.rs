use super::grammar::{Parsed, Thinking};
use crate::error::Result;
use crate::world::{Action, EnvState, World};

/// Exact critic derived from the BFS oracle: the action is correct iff it lies
/// on a shortest path; the suggestion is the smallest optimal action.
pub fn oracle_critic(world: &World, state: &EnvState, action: &Action) -> Result<Parsed> {
    let optimal = world.optimal_actions(state)?;
    let score = u8::from(optimal.contains(action));
    let suggestion = optimal[0].clone();
    Ok(Parsed { score, suggestion, thinking: Some(predict_thinking(world, state, action, score)) })
}

/// Observation and predicted next screen for `action`, with the given verdict.
pub fn predict_thinking(world: &World, state: &EnvState, action: &Action, crit: u8) -> Thinking {
    let pred = world.target_of(&state.screen, action).unwrap_or(&state.screen).to_string();
    Thinking { obs: state.screen.clone(), pred, crit }
}
