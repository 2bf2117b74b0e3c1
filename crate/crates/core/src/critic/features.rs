//! Fixed-length input encoding of `(state, candidate action)`.
//!
//! Layout, in order:
//!
//! | block              | size                        |
//! |--------------------|-----------------------------|
//! | bias               | 1                           |
//! | instruction        | `instruction_buckets`       |
//! | screen             | `screen_buckets`            |
//! | history kinds      | `history_k * 7`             |
//! | progress           | 1                           |
//! | instruction×screen | `task_screen_buckets`       |
//! | **action block**   |                             |
//! | action one-hot     | number of action templates  |
//! | screen×action      | `screen_action_buckets`     |
//! | instr×screen×action| `task_screen_action_buckets`|
//!
//! Hashed blocks are keyed on the world name so equal symbolic ids in
//! different worlds do not share a bucket by construction (collisions aside).

use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::world::{Action, ActionKind, EnvState, World};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub instruction_buckets: usize,
    pub screen_buckets: usize,
    pub history_k: usize,
    pub task_screen_buckets: usize,
    pub screen_action_buckets: usize,
    pub task_screen_action_buckets: usize,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Non-zero entries as `(index, value)`.
    pub fn active(&self) -> Vec<(usize, f64)> {
        self.0.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect()
    }
}

fn bucket(parts: &[&str], n: usize) -> usize {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write(p.as_bytes());
        h.write_u8(0x1f);
    }
    (h.finish() % n as u64) as usize
}

/// A [`FeatureSpec`] with its action lookup table.
#[derive(Clone, Debug)]
pub struct Featurizer {
    spec: FeatureSpec,
    action_pos: HashMap<Action, usize>,
}

impl Featurizer {
    pub fn new(spec: FeatureSpec) -> Self {
        let action_pos = spec.actions.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Featurizer { spec, action_pos }
    }

    pub fn with_actions(actions: &[Action]) -> Self {
        Featurizer::new(FeatureSpec {
            instruction_buckets: 64,
            screen_buckets: 128,
            history_k: 3,
            task_screen_buckets: 1024,
            screen_action_buckets: 1024,
            task_screen_action_buckets: 4096,
            actions: actions.to_vec(),
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.spec).expect("feature spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn history_dim(&self) -> usize {
        self.spec.history_k * ActionKind::ALL.len()
    }

    /// Offset of the first action-dependent entry.
    pub fn action_block_start(&self) -> usize {
        1 + self.spec.instruction_buckets
            + self.spec.screen_buckets
            + self.history_dim()
            + 1
            + self.spec.task_screen_buckets
    }

    pub fn dim(&self) -> usize {
        self.action_block_start()
            + self.spec.actions.len()
            + self.spec.screen_action_buckets
            + self.spec.task_screen_action_buckets
    }

    pub fn featurize(&self, world: &World, state: &EnvState, action: &Action) -> Result<FeatureVector> {
        let action_idx = *self
            .action_pos
            .get(action)
            .ok_or_else(|| Error::Unknown { what: "action template", name: action.to_string() })?;
        let task = world.task(&state.task)?;
        let s = &self.spec;
        let wname = world.name();
        let instr = task.instruction_id.to_string();
        let act = action.to_string();

        let mut x = vec![0.0; self.dim()];
        let mut off = 0;
        x[off] = 1.0;
        off += 1;
        x[off + bucket(&[wname, &instr], s.instruction_buckets)] = 1.0;
        off += s.instruction_buckets;
        x[off + bucket(&[wname, &state.screen], s.screen_buckets)] = 1.0;
        off += s.screen_buckets;
        for (slot, a) in state.history.iter().rev().take(s.history_k).enumerate() {
            x[off + slot * ActionKind::ALL.len() + a.kind().index()] = 1.0;
        }
        off += self.history_dim();
        x[off] = (state.step_count as f64 / task.max_steps as f64).min(1.0);
        off += 1;
        x[off + bucket(&[wname, &instr, &state.screen], s.task_screen_buckets)] = 1.0;
        off += s.task_screen_buckets;
        debug_assert_eq!(off, self.action_block_start());
        x[off + action_idx] = 1.0;
        off += s.actions.len();
        x[off + bucket(&[wname, &state.screen, &act], s.screen_action_buckets)] = 1.0;
        off += s.screen_action_buckets;
        x[off + bucket(&[wname, &instr, &state.screen, &act], s.task_screen_action_buckets)] = 1.0;
        Ok(FeatureVector(x))
    }
}
