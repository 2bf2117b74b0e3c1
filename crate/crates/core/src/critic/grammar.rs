//! Structured critic output.
//!
//! ```text
//! [THINK_OPEN OBS PRED (CRIT_OK|CRIT_BAD) THINK_CLOSE]
//! SCORE_OPEN (CORRECT|INCORRECT) SCORE_CLOSE SUGG_OPEN ACT SUGG_CLOSE EOS
//! ```

use serde::{Deserialize, Serialize};

use super::vocab::{Symbol, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::world::Action;

/// Observation, predicted result and critique verdict.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thinking {
    pub obs: String,
    pub pred: String,
    pub crit: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Parsed {
    /// 1 = correct, 0 = incorrect.
    pub score: u8,
    pub suggestion: Action,
    pub thinking: Option<Thinking>,
}

pub const SHORT_LEN: usize = 7;
pub const FULL_LEN: usize = 12;

/// Parses a complete output. Total: any mismatch, unknown token or trailing
/// token yields `None`.
pub fn parse(vocab: &Vocab, tokens: &[TokenId]) -> Option<Parsed> {
    let sym = |i: usize| tokens.get(i).and_then(|&t| vocab.symbol(t));
    let mut i = 0;
    let thinking = if sym(0) == Some(&Symbol::ThinkOpen) {
        let obs = match sym(1)? {
            Symbol::Obs(s) => s.clone(),
            _ => return None,
        };
        let pred = match sym(2)? {
            Symbol::Pred(s) => s.clone(),
            _ => return None,
        };
        let crit = match sym(3)? {
            Symbol::CritOk => 1,
            Symbol::CritBad => 0,
            _ => return None,
        };
        if sym(4)? != &Symbol::ThinkClose {
            return None;
        }
        i = 5;
        Some(Thinking { obs, pred, crit })
    } else {
        None
    };
    if sym(i)? != &Symbol::ScoreOpen {
        return None;
    }
    let score = match sym(i + 1)? {
        Symbol::Correct => 1,
        Symbol::Incorrect => 0,
        _ => return None,
    };
    if sym(i + 2)? != &Symbol::ScoreClose || sym(i + 3)? != &Symbol::SuggOpen {
        return None;
    }
    let suggestion = match sym(i + 4)? {
        Symbol::Act(a) => a.clone(),
        _ => return None,
    };
    if sym(i + 5)? != &Symbol::SuggClose || sym(i + 6)? != &Symbol::Eos {
        return None;
    }
    if tokens.len() != i + 7 {
        return None;
    }
    Some(Parsed { score, suggestion, thinking })
}

pub fn encode(vocab: &Vocab, out: &Parsed) -> Result<Vec<TokenId>> {
    let mut tokens = Vec::with_capacity(FULL_LEN);
    if let Some(t) = &out.thinking {
        let unknown = |s: &str| Error::Unknown { what: "screen token", name: s.to_string() };
        tokens.push(vocab.think_open());
        tokens.push(vocab.obs(&t.obs).ok_or_else(|| unknown(&t.obs))?);
        tokens.push(vocab.pred(&t.pred).ok_or_else(|| unknown(&t.pred))?);
        tokens.push(if t.crit == 1 { vocab.crit_ok() } else { vocab.crit_bad() });
        tokens.push(vocab.think_close());
    }
    tokens.push(vocab.score_open());
    tokens.push(if out.score == 1 { vocab.correct() } else { vocab.incorrect() });
    tokens.push(vocab.score_close());
    tokens.push(vocab.sugg_open());
    tokens.push(
        vocab
            .act(&out.suggestion)
            .ok_or_else(|| Error::Unknown { what: "action template", name: out.suggestion.to_string() })?,
    );
    tokens.push(vocab.sugg_close());
    tokens.push(vocab.eos());
    Ok(tokens)
}
