//! Critic datasets and the collection pipeline that builds them.

mod pipeline;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use pipeline::{
    bootstrap_cot, build_splits, build_training_data, collect_positives, filter, make_splits, sample_negatives,
    BootstrapStats, ConstantJudge, CotGenerator, Judge, NegativeMode, NoisyOracleGenerator, OracleJudge,
    PipelineConfig, RandomReplacement, SplitConfig, SplitPlan, Splits, TrainingData,
};

use crate::critic::Thinking;
use crate::error::{Error, Result};
use crate::world::{Action, EnvState, World};

/// Worlds by name, iterated in name order.
pub type WorldSet = BTreeMap<String, World>;

pub fn world_set(worlds: impl IntoIterator<Item = World>) -> WorldSet {
    worlds.into_iter().map(|w| (w.name().to_string(), w)).collect()
}

pub(crate) fn lookup<'a>(worlds: &'a WorldSet, name: &str) -> Result<&'a World> {
    worlds.get(name).ok_or_else(|| Error::Unknown { what: "world", name: name.to_string() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitTag {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "test-I")]
    TestI,
    #[serde(rename = "test-S")]
    TestS,
    #[serde(rename = "test-W")]
    TestW,
}

impl SplitTag {
    pub const TESTS: [SplitTag; 3] = [SplitTag::TestI, SplitTag::TestS, SplitTag::TestW];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::TestI => "test-I",
            SplitTag::TestS => "test-S",
            SplitTag::TestW => "test-W",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One critic example: a state, a candidate action, its label and the
/// annotated suggestion, plus a reasoning trace for the CoT subset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sample {
    pub world: String,
    pub state: EnvState,
    pub action: Action,
    pub label: u8,
    pub suggestion: Action,
    pub thinking: Option<Thinking>,
    pub split: SplitTag,
}

/// Identity of a sample: world, task, history and candidate action.
pub type SampleKey = (String, String, Vec<Action>, Action);

impl Sample {
    pub fn key(&self) -> SampleKey {
        (self.world.clone(), self.state.task.clone(), self.state.history.clone(), self.action.clone())
    }

    pub fn key_string(&self) -> String {
        let hist: Vec<String> = self.state.history.iter().map(Action::to_string).collect();
        format!("{}/{}/{}/{}", self.world, self.state.task, hist.join(","), self.action)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    world: String,
    task: String,
    screen: String,
    history: Vec<Action>,
    action: Action,
    label: u8,
    suggestion: Action,
    thinking: Option<Thinking>,
    split: SplitTag,
}

impl From<&Sample> for Record {
    fn from(s: &Sample) -> Self {
        Record {
            world: s.world.clone(),
            task: s.state.task.clone(),
            screen: s.state.screen.clone(),
            history: s.state.history.clone(),
            action: s.action.clone(),
            label: s.label,
            suggestion: s.suggestion.clone(),
            thinking: s.thinking.clone(),
            split: s.split,
        }
    }
}

impl From<Record> for Sample {
    fn from(r: Record) -> Self {
        let step_count = r.history.len();
        Sample {
            world: r.world,
            state: EnvState { task: r.task, screen: r.screen, history: r.history, step_count },
            action: r.action,
            label: r.label,
            suggestion: r.suggestion,
            thinking: r.thinking,
            split: r.split,
        }
    }
}

/// Samples in canonical (key) order with no duplicate `(state, action)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    pub provenance: serde_json::Value,
}

impl Dataset {
    pub fn new(mut samples: Vec<Sample>, provenance: serde_json::Value) -> Result<Self> {
        samples.sort_by_key(|s| s.key());
        for pair in samples.windows(2) {
            if pair[0].key() == pair[1].key() {
                return Err(Error::Config(format!("duplicate sample {}", pair[0].key_string())));
            }
        }
        if let Some(s) = samples.iter().find(|s| s.label > 1) {
            return Err(Error::Config(format!("label must be 0 or 1 in {}", s.key_string())));
        }
        Ok(Dataset { samples, provenance })
    }

    /// Builds a dataset keeping the first sample for each key.
    pub fn dedup(samples: Vec<Sample>, provenance: serde_json::Value) -> Self {
        let mut seen = HashSet::new();
        let unique = samples.into_iter().filter(|s| seen.insert(s.key())).collect();
        Dataset::new(unique, provenance).expect("deduplicated")
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(negatives, positives)`.
    pub fn label_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        (self.samples.len() - pos, pos)
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.samples.iter_mut().for_each(|s| s.split = split);
        self
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(&Record::from(s)).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
                context: "dataset".into(),
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            samples.push(Sample::from(rec));
        }
        Dataset::new(samples, serde_json::Value::Null)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_jsonl(&text)
    }

    /// Checks every sample against its world: the recorded screen must match a
    /// replay of the history.
    pub fn validate(&self, worlds: &WorldSet) -> Result<()> {
        for s in &self.samples {
            let w = lookup(worlds, &s.world)?;
            let replayed = w.replay(&s.state.task, &s.state.history)?;
            if replayed.screen != s.state.screen {
                return Err(Error::Config(format!(
                    "sample {} records screen {} but history leads to {}",
                    s.key_string(),
                    s.state.screen,
                    replayed.screen
                )));
            }
        }
        Ok(())
    }
}
