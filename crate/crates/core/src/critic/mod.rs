//! The critic: output grammar, token policy, featurization and the exact
//! oracle critic used as teacher and judge.

mod features;
mod grammar;
mod oracle;
mod policy;
mod vocab;

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{FeatureSpec, FeatureVector, Featurizer};
pub use grammar::{encode, parse, Parsed, Thinking, FULL_LEN, SHORT_LEN};
pub use oracle::{oracle_critic, predict_thinking};
pub use policy::{CriticPolicy, Generation, Gradient, LENGTH_SLOTS};
pub use vocab::{Symbol, TokenId, Vocab, VocabSpec};

use crate::error::{Error, Result};
use crate::world::{Action, EnvState, World};

/// Generation budget: the full grammar needs 12 tokens.
pub const MAX_LEN: usize = 16;

const CHECKPOINT_FORMAT: &str = "precritic-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Anything that can critique a proposed action.
pub trait Critic: Sync {
    /// `None` means the critic produced no parseable verdict.
    fn critique(&self, world: &World, state: &EnvState, action: &Action) -> Option<Parsed>;
}

/// The BFS oracle as a [`Critic`]. Returns `None` where no goal is reachable.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleCritic;

impl Critic for OracleCritic {
    fn critique(&self, world: &World, state: &EnvState, action: &Action) -> Option<Parsed> {
        oracle_critic(world, state, action).ok()
    }
}

/// Always emits the same score and suggestion.
#[derive(Clone, Debug)]
pub struct ConstantCritic {
    pub score: u8,
    pub suggestion: Action,
}

impl Critic for ConstantCritic {
    fn critique(&self, _: &World, _: &EnvState, _: &Action) -> Option<Parsed> {
        Some(Parsed { score: self.score, suggestion: self.suggestion.clone(), thinking: None })
    }
}

/// Policy together with the vocabulary and featurizer it was built for.
#[derive(Clone, Debug)]
pub struct CriticModel {
    pub vocab: Vocab,
    pub featurizer: Featurizer,
    pub policy: CriticPolicy,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format: String,
    version: u32,
    policy_version: String,
    vocab_hash: String,
    feature_hash: String,
    vocab_size: usize,
    feature_dim: usize,
    vocab: VocabSpec,
    features: FeatureSpec,
}

impl CriticModel {
    /// Zero-initialized model over the union vocabulary of `worlds`.
    pub fn for_worlds<'a>(worlds: impl IntoIterator<Item = &'a World>) -> Self {
        let vocab = Vocab::from_worlds(worlds);
        let featurizer = Featurizer::with_actions(vocab.actions());
        CriticModel::new(vocab, featurizer)
    }

    pub fn new(vocab: Vocab, featurizer: Featurizer) -> Self {
        let policy = CriticPolicy::zeros(vocab.len(), featurizer.dim());
        CriticModel { vocab, featurizer, policy }
    }

    pub fn with_policy(&self, policy: CriticPolicy) -> Self {
        CriticModel { vocab: self.vocab.clone(), featurizer: self.featurizer.clone(), policy }
    }

    pub fn featurize(&self, world: &World, state: &EnvState, action: &Action) -> Result<FeatureVector> {
        self.featurizer.featurize(world, state, action)
    }

    pub fn greedy(&self, world: &World, state: &EnvState, action: &Action) -> Result<Generation> {
        let x = self.featurize(world, state, action)?;
        Ok(self.policy.greedy(&x, MAX_LEN))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            policy_version: self.policy.version.clone(),
            vocab_hash: self.vocab.hash(),
            feature_hash: self.featurizer.hash(),
            vocab_size: self.policy.vocab_size(),
            feature_dim: self.policy.feature_dim(),
            vocab: self.vocab.spec().clone(),
            features: self.featurizer.spec().clone(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.reserve(self.policy.weights().len() * 8);
        for w in self.policy.weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl =
            bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::json("checkpoint header", &e))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format {} v{}", header.format, header.version)));
        }
        let vocab = Vocab::from_spec(header.vocab);
        let featurizer = Featurizer::new(header.features);
        if vocab.hash() != header.vocab_hash {
            return Err(Error::Checkpoint("vocab hash mismatch".into()));
        }
        if featurizer.hash() != header.feature_hash {
            return Err(Error::Checkpoint("feature spec hash mismatch".into()));
        }
        if vocab.len() != header.vocab_size || featurizer.dim() != header.feature_dim {
            return Err(Error::Checkpoint("declared shape disagrees with specs".into()));
        }
        let payload = &bytes[nl + 1..];
        if payload.len() % 8 != 0 {
            return Err(Error::Checkpoint("truncated weight payload".into()));
        }
        let weights = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut policy = CriticPolicy::from_weights(vocab.len(), featurizer.dim(), weights)?;
        policy.version = header.policy_version;
        Ok(CriticModel { vocab, featurizer, policy })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        CriticModel::from_bytes(&bytes)
    }

    /// Loads a checkpoint and checks it was built for the given vocab and features.
    pub fn load_expecting(path: impl AsRef<Path>, vocab: &Vocab, featurizer: &Featurizer) -> Result<Self> {
        let model = CriticModel::load(path)?;
        if model.vocab.hash() != vocab.hash() {
            return Err(Error::Checkpoint("vocab hash does not match the expected vocab".into()));
        }
        if model.featurizer.hash() != featurizer.hash() {
            return Err(Error::Checkpoint("feature spec hash does not match the expected features".into()));
        }
        Ok(model)
    }
}

/// Greedy-decoded policy as a [`Critic`].
impl Critic for CriticModel {
    fn critique(&self, world: &World, state: &EnvState, action: &Action) -> Option<Parsed> {
        let g = self.greedy(world, state, action).ok()?;
        parse(&self.vocab, &g.tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::fixtures;

    #[test]
    fn checkpoint_round_trip_and_hash_check() {
        let w = fixtures::trap();
        let mut m = CriticModel::for_worlds([&w]);
        m.policy.weights_mut()[5] = 0.25;
        m.policy.version = "v7".into();
        let back = CriticModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.policy, m.policy);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        m.save(&p).unwrap();
        CriticModel::load_expecting(&p, &m.vocab, &m.featurizer).unwrap();
        let other = Vocab::from_worlds([&fixtures::chain()]);
        assert!(matches!(CriticModel::load_expecting(&p, &other, &m.featurizer), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn corrupted_checkpoint_rejected() {
        let m = CriticModel::for_worlds([&fixtures::chain()]);
        let mut bytes = m.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(CriticModel::from_bytes(&bytes).is_err());
        let text = String::from_utf8_lossy(&m.to_bytes()[..40]).replace("precritic", "other");
        assert!(CriticModel::from_bytes(text.as_bytes()).is_err());
    }
}
