use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::world::{Action, World};

pub type TokenId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    ThinkOpen,
    Obs(String),
    Pred(String),
    CritOk,
    CritBad,
    ThinkClose,
    ScoreOpen,
    Correct,
    Incorrect,
    ScoreClose,
    SuggOpen,
    Act(Action),
    SuggClose,
    Eos,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::ThinkOpen => f.write_str("<thinking>"),
            Symbol::Obs(s) => write!(f, "OBS:{s}"),
            Symbol::Pred(s) => write!(f, "PRED:{s}"),
            Symbol::CritOk => f.write_str("CRIT:ok"),
            Symbol::CritBad => f.write_str("CRIT:bad"),
            Symbol::ThinkClose => f.write_str("</thinking>"),
            Symbol::ScoreOpen => f.write_str("<score>"),
            Symbol::Correct => f.write_str("Correct"),
            Symbol::Incorrect => f.write_str("Incorrect"),
            Symbol::ScoreClose => f.write_str("</score>"),
            Symbol::SuggOpen => f.write_str("<suggestion>"),
            Symbol::Act(a) => write!(f, "ACT:{a}"),
            Symbol::SuggClose => f.write_str("</suggestion>"),
            Symbol::Eos => f.write_str("<eos>"),
        }
    }
}

/// Serializable description from which a [`Vocab`] is rebuilt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub screens: Vec<String>,
    pub actions: Vec<Action>,
}

/// Dense token ids in the fixed order
/// `THINK_OPEN, OBS(*), PRED(*), CRIT_OK, CRIT_BAD, THINK_CLOSE, SCORE_OPEN,
/// CORRECT, INCORRECT, SCORE_CLOSE, SUGG_OPEN, ACT(*), SUGG_CLOSE, EOS`.
/// EOS is always the last id.
#[derive(Clone, Debug)]
pub struct Vocab {
    spec: VocabSpec,
    symbols: Vec<Symbol>,
    screen_pos: HashMap<String, usize>,
    action_pos: HashMap<Action, usize>,
}

impl Vocab {
    pub fn new(screens: BTreeSet<String>, actions: BTreeSet<Action>) -> Self {
        let mut actions = actions;
        actions.insert(Action::done());
        let spec = VocabSpec { screens: screens.into_iter().collect(), actions: actions.into_iter().collect() };
        Vocab::from_spec(spec)
    }

    /// Screens are sorted and actions deduplicated; Done is always present.
    pub fn from_spec(spec: VocabSpec) -> Self {
        let screens: BTreeSet<String> = spec.screens.into_iter().collect();
        let mut actions: BTreeSet<Action> = spec.actions.into_iter().collect();
        actions.insert(Action::done());
        let spec = VocabSpec { screens: screens.into_iter().collect(), actions: actions.into_iter().collect() };
        let mut symbols = vec![Symbol::ThinkOpen];
        symbols.extend(spec.screens.iter().cloned().map(Symbol::Obs));
        symbols.extend(spec.screens.iter().cloned().map(Symbol::Pred));
        symbols.extend([
            Symbol::CritOk,
            Symbol::CritBad,
            Symbol::ThinkClose,
            Symbol::ScoreOpen,
            Symbol::Correct,
            Symbol::Incorrect,
            Symbol::ScoreClose,
            Symbol::SuggOpen,
        ]);
        symbols.extend(spec.actions.iter().cloned().map(Symbol::Act));
        symbols.extend([Symbol::SuggClose, Symbol::Eos]);
        let screen_pos = spec.screens.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let action_pos = spec.actions.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Vocab { spec, symbols, screen_pos, action_pos }
    }

    /// Union of screens and action templates over a set of worlds.
    pub fn from_worlds<'a>(worlds: impl IntoIterator<Item = &'a World>) -> Self {
        let mut screens = BTreeSet::new();
        let mut actions = BTreeSet::new();
        for w in worlds {
            screens.extend(w.screens().iter().map(|s| s.id.clone()));
            actions.extend(w.action_templates());
        }
        Vocab::new(screens, actions)
    }

    pub fn spec(&self) -> &VocabSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: TokenId) -> Option<&Symbol> {
        self.symbols.get(id)
    }

    pub fn actions(&self) -> &[Action] {
        &self.spec.actions
    }

    pub fn screens(&self) -> &[String] {
        &self.spec.screens
    }

    fn n_screens(&self) -> usize {
        self.spec.screens.len()
    }

    pub fn think_open(&self) -> TokenId {
        0
    }

    pub fn obs(&self, screen: &str) -> Option<TokenId> {
        self.screen_pos.get(screen).map(|i| 1 + i)
    }

    pub fn pred(&self, screen: &str) -> Option<TokenId> {
        self.screen_pos.get(screen).map(|i| 1 + self.n_screens() + i)
    }

    fn fixed(&self, offset: usize) -> TokenId {
        1 + 2 * self.n_screens() + offset
    }

    pub fn crit_ok(&self) -> TokenId {
        self.fixed(0)
    }

    pub fn crit_bad(&self) -> TokenId {
        self.fixed(1)
    }

    pub fn think_close(&self) -> TokenId {
        self.fixed(2)
    }

    pub fn score_open(&self) -> TokenId {
        self.fixed(3)
    }

    pub fn correct(&self) -> TokenId {
        self.fixed(4)
    }

    pub fn incorrect(&self) -> TokenId {
        self.fixed(5)
    }

    pub fn score_close(&self) -> TokenId {
        self.fixed(6)
    }

    pub fn sugg_open(&self) -> TokenId {
        self.fixed(7)
    }

    pub fn act(&self, action: &Action) -> Option<TokenId> {
        self.action_pos.get(action).map(|i| self.fixed(8) + i)
    }

    pub fn sugg_close(&self) -> TokenId {
        self.len() - 2
    }

    pub fn eos(&self) -> TokenId {
        self.len() - 1
    }

    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| match self.symbol(t) {
                Some(s) => s.to_string(),
                None => format!("<unk:{t}>"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.spec).expect("vocab spec serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::fixtures;

    #[test]
    fn ids_are_dense_and_ordered() {
        let v = Vocab::from_worlds([&fixtures::chain()]);
        // 1 + 3 OBS + 3 PRED + 8 fixed + 3 actions (click e1, click e2, done) + 2
        assert_eq!(v.len(), 1 + 3 + 3 + 8 + 3 + 2);
        for id in 0..v.len() {
            assert!(v.symbol(id).is_some());
        }
        assert_eq!(v.symbol(v.eos()), Some(&Symbol::Eos));
        assert_eq!(v.symbol(v.sugg_close()), Some(&Symbol::SuggClose));
        assert_eq!(v.symbol(v.act(&Action::done()).unwrap()), Some(&Symbol::Act(Action::done())));
        assert_eq!(v.symbol(v.obs("s1").unwrap()), Some(&Symbol::Obs("s1".into())));
        assert_eq!(v.symbol(v.pred("s2").unwrap()), Some(&Symbol::Pred("s2".into())));
        assert_eq!(v.symbol(v.incorrect()), Some(&Symbol::Incorrect));
    }

    #[test]
    fn hash_is_stable_for_equal_specs() {
        let a = Vocab::from_worlds([&fixtures::chain(), &fixtures::trap()]);
        let b = Vocab::from_worlds([&fixtures::trap(), &fixtures::chain()]);
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), Vocab::from_worlds([&fixtures::chain()]).hash());
    }
}
