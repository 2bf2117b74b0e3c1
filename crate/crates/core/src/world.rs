//! Deterministic simulated GUI device.
//!
//! A [`World`] is a finite screen graph. Nodes are screens holding symbolic
//! element ids, edges are labelled with an [`Action`] and may be flagged
//! irreversible. Tasks name a start screen and a set of goal screens. All
//! shortest-path quantities are exact: distances are precomputed per task by a
//! reverse breadth-first search when the world is built.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    LongPress,
    Type,
    Scroll,
    Home,
    Back,
    Done,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::Click,
        ActionKind::LongPress,
        ActionKind::Type,
        ActionKind::Scroll,
        ActionKind::Home,
        ActionKind::Back,
        ActionKind::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::LongPress => "long_press",
            ActionKind::Type => "type",
            ActionKind::Scroll => "scroll",
            ActionKind::Home => "home",
            ActionKind::Back => "back",
            ActionKind::Done => "done",
        }
    }

    pub fn parse(s: &str) -> Option<ActionKind> {
        ActionKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Click, LongPress and Type address an element; Scroll carries a direction.
    pub fn takes_target(self) -> bool {
        matches!(self, ActionKind::Click | ActionKind::LongPress | ActionKind::Type | ActionKind::Scroll)
    }

    pub fn index(self) -> usize {
        ActionKind::ALL.iter().position(|k| *k == self).unwrap()
    }
}

/// A GUI operation. Ordering is lexicographic on `(kind name, target)`, which
/// is the tie-break used wherever a single optimal action must be chosen.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ActionJson", into = "ActionJson")]
pub struct Action {
    kind: ActionKind,
    target: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionJson {
    kind: String,
    target: Option<String>,
}

impl TryFrom<ActionJson> for Action {
    type Error = String;

    fn try_from(j: ActionJson) -> std::result::Result<Self, String> {
        let kind = ActionKind::parse(&j.kind).ok_or_else(|| format!("unknown action kind {:?}", j.kind))?;
        Action::new(kind, j.target).map_err(|e| e.to_string())
    }
}

impl From<Action> for ActionJson {
    fn from(a: Action) -> Self {
        ActionJson { kind: a.kind.as_str().to_string(), target: a.target }
    }
}

impl Action {
    pub fn new(kind: ActionKind, target: Option<String>) -> Result<Self> {
        match (kind.takes_target(), &target) {
            (true, None) => Err(Error::InvalidWorld(format!("action {} requires a target", kind.as_str()))),
            (false, Some(t)) => {
                Err(Error::InvalidWorld(format!("action {} takes no target, got {t:?}", kind.as_str())))
            }
            (true, Some(t)) if kind == ActionKind::Scroll && t != "up" && t != "down" => {
                Err(Error::InvalidWorld(format!("scroll direction must be \"up\" or \"down\", got {t:?}")))
            }
            _ => Ok(Action { kind, target }),
        }
    }

    pub fn click(target: &str) -> Self {
        Action::new(ActionKind::Click, Some(target.to_string())).unwrap()
    }

    pub fn long_press(target: &str) -> Self {
        Action::new(ActionKind::LongPress, Some(target.to_string())).unwrap()
    }

    pub fn type_into(target: &str) -> Self {
        Action::new(ActionKind::Type, Some(target.to_string())).unwrap()
    }

    pub fn scroll_up() -> Self {
        Action::new(ActionKind::Scroll, Some("up".into())).unwrap()
    }

    pub fn scroll_down() -> Self {
        Action::new(ActionKind::Scroll, Some("down".into())).unwrap()
    }

    pub fn home() -> Self {
        Action { kind: ActionKind::Home, target: None }
    }

    pub fn back() -> Self {
        Action { kind: ActionKind::Back, target: None }
    }

    pub fn done() -> Self {
        Action { kind: ActionKind::Done, target: None }
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn is_done(&self) -> bool {
        self.kind == ActionKind::Done
    }
}

impl Ord for Action {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.kind.as_str(), self.target.as_deref()).cmp(&(other.kind.as_str(), other.target.as_deref()))
    }
}

impl PartialOrd for Action {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.target {
            Some(t) => write!(f, "{}({t})", self.kind.as_str()),
            None => f.write_str(self.kind.as_str()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Screen {
    pub id: String,
    pub elements: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub action: Action,
    pub to: String,
    pub irreversible: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    /// Symbolic stand-in for the natural-language instruction.
    pub instruction_id: u32,
    pub start: String,
    pub goal: Vec<String>,
    pub max_steps: u32,
}

/// On-disk layout of a world file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub screens: Vec<Screen>,
    pub edges: Vec<Edge>,
    pub home: String,
    pub tasks: Vec<Task>,
}

#[derive(Clone, Debug)]
struct OutEdge {
    action: Action,
    to: usize,
    irreversible: bool,
}

/// Validated, immutable screen graph.
#[derive(Clone, Debug)]
pub struct World {
    name: String,
    file: WorldFile,
    screen_index: HashMap<String, usize>,
    /// Outgoing edges per screen, sorted by action.
    out: Vec<Vec<OutEdge>>,
    home: usize,
    task_index: HashMap<String, usize>,
    /// Per task, per screen: shortest number of navigation edges to a goal screen.
    nav_dist: Vec<Vec<Option<u32>>>,
    goal_sets: Vec<Vec<bool>>,
}

/// Environment state: the task being solved, the current screen and the
/// actions taken so far.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub task: String,
    pub screen: String,
    pub history: Vec<Action>,
    pub step_count: usize,
}

impl EnvState {
    /// An episode ends when Done is emitted.
    pub fn is_terminal(&self) -> bool {
        self.history.last().is_some_and(Action::is_done)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepResult {
    pub state: EnvState,
    /// Set when the action was not available and was ignored by the device.
    pub penalized: bool,
}

impl World {
    pub fn from_file(name: impl Into<String>, file: WorldFile) -> Result<Self> {
        let name = name.into();
        let mut screen_index = HashMap::new();
        for (i, s) in file.screens.iter().enumerate() {
            if screen_index.insert(s.id.clone(), i).is_some() {
                return Err(Error::InvalidWorld(format!("duplicate screen id {:?}", s.id)));
            }
            let mut seen = HashSet::new();
            for e in &s.elements {
                if !seen.insert(e) {
                    return Err(Error::InvalidWorld(format!("duplicate element {e:?} on screen {:?}", s.id)));
                }
            }
        }
        let home = *screen_index
            .get(&file.home)
            .ok_or_else(|| Error::InvalidWorld(format!("home screen {:?} does not exist", file.home)))?;

        let mut out: Vec<Vec<OutEdge>> = vec![Vec::new(); file.screens.len()];
        for edge in &file.edges {
            let from = *screen_index
                .get(&edge.from)
                .ok_or_else(|| Error::InvalidWorld(format!("edge references unknown screen {:?}", edge.from)))?;
            let to = *screen_index
                .get(&edge.to)
                .ok_or_else(|| Error::InvalidWorld(format!("edge references unknown screen {:?}", edge.to)))?;
            match edge.action.kind() {
                ActionKind::Done => {
                    return Err(Error::InvalidWorld(format!(
                        "screen {:?} has a done edge; done is implicit",
                        edge.from
                    )))
                }
                ActionKind::Home if to != home => {
                    return Err(Error::InvalidWorld(format!(
                        "home edge from {:?} points to {:?}, not home screen {:?}",
                        edge.from, edge.to, file.home
                    )))
                }
                ActionKind::Click | ActionKind::LongPress | ActionKind::Type => {
                    let target = edge.action.target().unwrap_or_default();
                    if !file.screens[from].elements.iter().any(|e| e == target) {
                        return Err(Error::InvalidWorld(format!(
                            "edge from {:?} targets element {target:?} not on that screen",
                            edge.from
                        )));
                    }
                }
                _ => {}
            }
            if out[from].iter().any(|o| o.action == edge.action) {
                return Err(Error::InvalidWorld(format!("duplicate edge {} from {:?}", edge.action, edge.from)));
            }
            out[from].push(OutEdge { action: edge.action.clone(), to, irreversible: edge.irreversible });
        }
        for edges in &mut out {
            edges.sort_by(|a, b| a.action.cmp(&b.action));
        }

        let mut world = World {
            name,
            screen_index,
            out,
            home,
            task_index: HashMap::new(),
            nav_dist: Vec::new(),
            goal_sets: Vec::new(),
            file,
        };
        world.index_tasks()?;
        Ok(world)
    }

    fn index_tasks(&mut self) -> Result<()> {
        let n = self.file.screens.len();
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (from, edges) in self.out.iter().enumerate() {
            for e in edges {
                reverse[e.to].push(from);
            }
        }
        for (ti, task) in self.file.tasks.iter().enumerate() {
            if self.task_index.insert(task.id.clone(), ti).is_some() {
                return Err(Error::InvalidTask { task: task.id.clone(), reason: "duplicate task id".into() });
            }
            let start = *self.screen_index.get(&task.start).ok_or_else(|| Error::InvalidTask {
                task: task.id.clone(),
                reason: format!("start screen {:?} does not exist", task.start),
            })?;
            if task.goal.is_empty() {
                return Err(Error::InvalidTask { task: task.id.clone(), reason: "empty goal set".into() });
            }
            if task.max_steps == 0 {
                return Err(Error::InvalidTask { task: task.id.clone(), reason: "max_steps must be positive".into() });
            }
            let mut goal = vec![false; n];
            for g in &task.goal {
                let gi = *self.screen_index.get(g).ok_or_else(|| Error::InvalidTask {
                    task: task.id.clone(),
                    reason: format!("goal screen {g:?} does not exist"),
                })?;
                goal[gi] = true;
            }
            let dist = reverse_bfs(&reverse, &goal);
            if dist[start].is_none() {
                return Err(Error::InvalidTask {
                    task: task.id.clone(),
                    reason: format!("no goal screen is reachable from start {:?}", task.start),
                });
            }
            self.nav_dist.push(dist);
            self.goal_sets.push(goal);
        }
        Ok(())
    }

    pub fn from_json_str(name: impl Into<String>, json: &str) -> Result<Self> {
        let name = name.into();
        let file: WorldFile = serde_json::from_str(json).map_err(|e| Error::json(format!("world {name}"), &e))?;
        World::from_file(name, file)
    }

    /// Loads a world file; the world takes its name from the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "world".into());
        World::from_json_str(name, &text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.file).expect("world serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn file(&self) -> &WorldFile {
        &self.file
    }

    pub fn screens(&self) -> &[Screen] {
        &self.file.screens
    }

    pub fn edges(&self) -> &[Edge] {
        &self.file.edges
    }

    pub fn tasks(&self) -> &[Task] {
        &self.file.tasks
    }

    pub fn home(&self) -> &str {
        &self.file.screens[self.home].id
    }

    pub fn task(&self, id: &str) -> Result<&Task> {
        self.task_index
            .get(id)
            .map(|&i| &self.file.tasks[i])
            .ok_or_else(|| Error::Unknown { what: "task", name: id.to_string() })
    }

    fn task_idx(&self, id: &str) -> Result<usize> {
        self.task_index.get(id).copied().ok_or_else(|| Error::Unknown { what: "task", name: id.to_string() })
    }

    fn screen_idx(&self, id: &str) -> Result<usize> {
        self.screen_index.get(id).copied().ok_or_else(|| Error::Unknown { what: "screen", name: id.to_string() })
    }

    pub fn has_screen(&self, id: &str) -> bool {
        self.screen_index.contains_key(id)
    }

    pub fn is_goal(&self, task: &str, screen: &str) -> Result<bool> {
        let ti = self.task_idx(task)?;
        Ok(self.goal_sets[ti][self.screen_idx(screen)?])
    }

    pub fn initial_state(&self, task: &str) -> Result<EnvState> {
        let t = self.task(task)?;
        Ok(EnvState { task: t.id.clone(), screen: t.start.clone(), history: Vec::new(), step_count: 0 })
    }

    /// Rebuilds a state by replaying `history` from the task start.
    pub fn replay(&self, task: &str, history: &[Action]) -> Result<EnvState> {
        let mut state = self.initial_state(task)?;
        for a in history {
            state = self.step(&state, a).state;
        }
        Ok(state)
    }

    fn edge(&self, screen: usize, action: &Action) -> Option<&OutEdge> {
        self.out[screen].binary_search_by(|e| e.action.cmp(action)).ok().map(|i| &self.out[screen][i])
    }

    /// Screen reached by `action` from `screen`, or `None` when the action has
    /// no edge there (Done stays put and is reported as `None` too).
    pub fn target_of(&self, screen: &str, action: &Action) -> Option<&str> {
        let si = self.screen_index.get(screen)?;
        self.edge(*si, action).map(|e| self.file.screens[e.to].id.as_str())
    }

    pub fn is_irreversible(&self, screen: &str, action: &Action) -> bool {
        self.screen_index.get(screen).and_then(|&si| self.edge(si, action)).is_some_and(|e| e.irreversible)
    }

    pub fn is_available(&self, state: &EnvState, action: &Action) -> bool {
        action.is_done() || self.screen_index.get(&state.screen).is_some_and(|&si| self.edge(si, action).is_some())
    }

    /// Every action with an outgoing edge from the current screen, plus Done.
    /// Sorted.
    pub fn available_actions(&self, state: &EnvState) -> Vec<Action> {
        let mut acts: Vec<Action> = self
            .screen_index
            .get(&state.screen)
            .map(|&si| self.out[si].iter().map(|e| e.action.clone()).collect())
            .unwrap_or_default();
        acts.push(Action::done());
        acts.sort();
        acts
    }

    pub fn step(&self, state: &EnvState, action: &Action) -> StepResult {
        let mut next = state.clone();
        next.history.push(action.clone());
        next.step_count += 1;
        if state.is_terminal() {
            return StepResult { state: next, penalized: true };
        }
        if action.is_done() {
            return StepResult { state: next, penalized: false };
        }
        let target = self.screen_index.get(&state.screen).and_then(|&si| self.edge(si, action)).map(|e| e.to);
        match target {
            Some(to) => {
                next.screen = self.file.screens[to].id.clone();
                StepResult { state: next, penalized: false }
            }
            None => StepResult { state: next, penalized: true },
        }
    }

    pub fn is_success(&self, state: &EnvState) -> bool {
        state.is_terminal() && self.is_goal(&state.task, &state.screen).unwrap_or(false)
    }

    fn nav_distance(&self, task: &str, screen: &str) -> Option<u32> {
        let ti = self.task_idx(task).ok()?;
        let si = self.screen_idx(screen).ok()?;
        self.nav_dist[ti][si]
    }

    /// Shortest number of actions to finish the task, counting the final Done.
    /// `Some(0)` once a successful Done was emitted, `None` when no goal is
    /// reachable (including after a premature Done).
    pub fn distance_to_goal(&self, state: &EnvState) -> Option<u32> {
        if state.is_terminal() {
            return self.is_success(state).then_some(0);
        }
        self.nav_distance(&state.task, &state.screen).map(|d| d + 1)
    }

    /// Actions that reduce the distance to goal by exactly one. At a goal screen
    /// this is `{Done}`. Sorted; the first element is the tie-break choice.
    pub fn optimal_actions(&self, state: &EnvState) -> Result<Vec<Action>> {
        let d = self
            .distance_to_goal(state)
            .ok_or_else(|| Error::Unreachable { task: state.task.clone(), screen: state.screen.clone() })?;
        if d == 0 {
            return Err(Error::Unreachable {
                task: state.task.clone(),
                screen: format!("{} (episode already finished)", state.screen),
            });
        }
        if self.is_goal(&state.task, &state.screen)? {
            return Ok(vec![Action::done()]);
        }
        let si = self.screen_idx(&state.screen)?;
        let ti = self.task_idx(&state.task)?;
        let here = self.nav_dist[ti][si].expect("checked above");
        Ok(self.out[si]
            .iter()
            .filter(|e| self.nav_dist[ti][e.to].is_some_and(|d2| d2 + 1 == here))
            .map(|e| e.action.clone())
            .collect())
    }

    pub fn is_optimal(&self, state: &EnvState, action: &Action) -> bool {
        self.optimal_actions(state).map(|o| o.contains(action)).unwrap_or(false)
    }

    /// Distinct action templates appearing on edges of this world.
    pub fn action_templates(&self) -> BTreeSet<Action> {
        self.file.edges.iter().map(|e| e.action.clone()).collect()
    }

    pub fn irreversible_edge_count(&self) -> usize {
        self.file.edges.iter().filter(|e| e.irreversible).count()
    }

    /// Number of edges on a shortest path between two screens.
    pub fn shortest_path_len(&self, from: &str, to: &str) -> Option<u32> {
        let from = *self.screen_index.get(from)?;
        let to = *self.screen_index.get(to)?;
        let mut dist = vec![None; self.file.screens.len()];
        dist[from] = Some(0u32);
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            if s == to {
                return dist[s];
            }
            for e in &self.out[s] {
                if dist[e.to].is_none() {
                    dist[e.to] = Some(dist[s].unwrap() + 1);
                    queue.push_back(e.to);
                }
            }
        }
        None
    }

    /// Screens reachable from `screen` by any sequence of edges (including itself).
    pub fn reachable_from(&self, screen: &str) -> BTreeSet<String> {
        let mut seen = vec![false; self.file.screens.len()];
        let mut queue = VecDeque::new();
        if let Some(&s) = self.screen_index.get(screen) {
            seen[s] = true;
            queue.push_back(s);
        }
        while let Some(s) = queue.pop_front() {
            for e in &self.out[s] {
                if !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
        seen.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| self.file.screens[i].id.clone()).collect()
    }
}

fn reverse_bfs(reverse: &[Vec<usize>], goal: &[bool]) -> Vec<Option<u32>> {
    let mut dist = vec![None; goal.len()];
    let mut queue = VecDeque::new();
    for (i, &g) in goal.iter().enumerate() {
        if g {
            dist[i] = Some(0);
            queue.push_back(i);
        }
    }
    while let Some(s) = queue.pop_front() {
        let d = dist[s].unwrap();
        for &p in &reverse[s] {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Small hand-authored worlds used throughout the tests and examples.
pub mod fixtures {
    use super::*;

    fn edge(from: &str, action: Action, to: &str, irreversible: bool) -> Edge {
        Edge { from: from.into(), action, to: to.into(), irreversible }
    }

    fn screen(id: &str, elements: &[&str]) -> Screen {
        Screen { id: id.into(), elements: elements.iter().map(|s| s.to_string()).collect() }
    }

    fn task(id: &str, start: &str, goal: &[&str], max_steps: u32) -> Task {
        Task {
            id: id.into(),
            instruction_id: 0,
            start: start.into(),
            goal: goal.iter().map(|s| s.to_string()).collect(),
            max_steps,
        }
    }

    /// s0 -click(e1)-> s1 -click(e2)-> s2 (goal).
    pub fn chain() -> World {
        let file = WorldFile {
            screens: vec![screen("s0", &["e1"]), screen("s1", &["e2"]), screen("s2", &[])],
            edges: vec![edge("s0", Action::click("e1"), "s1", false), edge("s1", Action::click("e2"), "s2", false)],
            home: "s0".into(),
            tasks: vec![task("t0", "s0", &["s2"], 10), task("at_goal", "s2", &["s2"], 10)],
        };
        World::from_file("chain", file).unwrap()
    }

    /// Two equal-length branches s0->a->g and s0->b->g, plus a longer detour
    /// s0->c->d->g.
    pub fn diamond() -> World {
        let file = WorldFile {
            screens: vec![
                screen("s0", &["ea", "eb", "ec"]),
                screen("a", &["ga"]),
                screen("b", &["gb"]),
                screen("c", &["cd"]),
                screen("d", &["dg"]),
                screen("g", &[]),
            ],
            edges: vec![
                edge("s0", Action::click("ea"), "a", false),
                edge("s0", Action::click("eb"), "b", false),
                edge("s0", Action::click("ec"), "c", false),
                edge("a", Action::click("ga"), "g", false),
                edge("b", Action::click("gb"), "g", false),
                edge("c", Action::click("cd"), "d", false),
                edge("d", Action::click("dg"), "g", false),
                edge("a", Action::back(), "s0", false),
                edge("b", Action::back(), "s0", false),
                edge("c", Action::back(), "s0", false),
            ],
            home: "s0".into(),
            tasks: vec![task("t0", "s0", &["g"], 12)],
        };
        World::from_file("diamond", file).unwrap()
    }

    /// Chain with a delete button on s1 leading irreversibly to a dead-end trap,
    /// a reversible wrong turn on s1, and Back/Home edges.
    pub fn trap() -> World {
        let file = WorldFile {
            screens: vec![
                screen("s0", &["e1"]),
                screen("s1", &["e2", "e_delete", "e_wrong"]),
                screen("s2", &["e3"]),
                screen("s3", &[]),
                screen("w", &[]),
                screen("s_trap", &[]),
            ],
            edges: vec![
                edge("s0", Action::click("e1"), "s1", false),
                edge("s1", Action::click("e2"), "s2", false),
                edge("s1", Action::click("e_delete"), "s_trap", true),
                edge("s1", Action::click("e_wrong"), "w", false),
                edge("s1", Action::back(), "s0", false),
                edge("s2", Action::click("e3"), "s3", false),
                edge("s2", Action::back(), "s1", false),
                edge("s2", Action::home(), "s0", false),
                edge("w", Action::back(), "s1", false),
                edge("w", Action::home(), "s0", false),
            ],
            home: "s0".into(),
            tasks: vec![task("t0", "s0", &["s3"], 12)],
        };
        World::from_file("trap", file).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn at(world: &World, task: &str, history: &[Action]) -> EnvState {
        world.replay(task, history).unwrap()
    }

    #[test]
    fn chain_loads_with_three_screens_two_edges() {
        let w = chain();
        assert_eq!(w.screens().len(), 3);
        assert_eq!(w.edges().len(), 2);
    }

    #[test]
    fn step_follows_edge_and_extends_history() {
        let w = chain();
        let s0 = w.initial_state("t0").unwrap();
        let r = w.step(&s0, &Action::click("e1"));
        assert!(!r.penalized);
        assert_eq!(r.state.screen, "s1");
        assert_eq!(r.state.history, vec![Action::click("e1")]);
        assert_eq!(r.state.step_count, 1);
    }

    #[test]
    fn done_at_goal_is_success() {
        let w = chain();
        let s = at(&w, "t0", &[Action::click("e1"), Action::click("e2")]);
        let r = w.step(&s, &Action::done());
        assert!(r.state.is_terminal());
        assert!(w.is_success(&r.state));
        assert_eq!(r.state.screen, "s2");
        assert_eq!(w.distance_to_goal(&r.state), Some(0));
    }

    #[test]
    fn done_before_goal_is_failure() {
        let w = chain();
        let s = w.initial_state("t0").unwrap();
        let r = w.step(&s, &Action::done());
        assert!(r.state.is_terminal());
        assert!(!w.is_success(&r.state));
        assert_eq!(w.distance_to_goal(&r.state), None);
    }

    #[test]
    fn irreversible_edge_lands_in_trap() {
        let w = trap();
        let s1 = at(&w, "t0", &[Action::click("e1")]);
        let r = w.step(&s1, &Action::click("e_delete"));
        assert_eq!(r.state.screen, "s_trap");
        assert!(w.is_irreversible("s1", &Action::click("e_delete")));
        assert_eq!(w.distance_to_goal(&r.state), None);
        assert_eq!(w.available_actions(&r.state), vec![Action::done()]);
    }

    #[test]
    fn unavailable_action_is_penalized_noop() {
        let w = chain();
        let s0 = w.initial_state("t0").unwrap();
        let r = w.step(&s0, &Action::click("e2"));
        assert!(r.penalized);
        assert_eq!(r.state.screen, "s0");
        assert_eq!(r.state.step_count, 1);
    }

    #[test]
    fn available_actions_include_done() {
        let w = chain();
        let s0 = w.initial_state("t0").unwrap();
        assert_eq!(w.available_actions(&s0), vec![Action::click("e1"), Action::done()]);
        let t = trap();
        let s2 = at(&t, "t0", &[Action::click("e1"), Action::click("e2")]);
        let acts = t.available_actions(&s2);
        assert!(acts.contains(&Action::back()));
        assert!(acts.contains(&Action::home()));
    }

    #[test]
    fn chain_distances() {
        let w = chain();
        let s0 = w.initial_state("t0").unwrap();
        assert_eq!(w.distance_to_goal(&s0), Some(3));
        let g = w.initial_state("at_goal").unwrap();
        assert_eq!(w.distance_to_goal(&g), Some(1));
        assert_eq!(w.optimal_actions(&g).unwrap(), vec![Action::done()]);
        assert_eq!(w.optimal_actions(&s0).unwrap(), vec![Action::click("e1")]);
    }

    #[test]
    fn diamond_has_two_optimal_branches() {
        let w = diamond();
        let s0 = w.initial_state("t0").unwrap();
        assert_eq!(w.distance_to_goal(&s0), Some(3));
        assert_eq!(w.optimal_actions(&s0).unwrap(), vec![Action::click("ea"), Action::click("eb")]);
    }

    #[test]
    fn optimal_actions_errors_when_unreachable() {
        let w = trap();
        let s = at(&w, "t0", &[Action::click("e1"), Action::click("e_delete")]);
        assert!(matches!(w.optimal_actions(&s), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn rejects_unknown_screen_and_unreachable_goal() {
        let bad = r#"{"screens":[{"id":"s0","elements":["e1"]}],
            "edges":[{"from":"s0","action":{"kind":"click","target":"e1"},"to":"s9","irreversible":false}],
            "home":"s0","tasks":[]}"#;
        let err = World::from_json_str("bad", bad).unwrap_err().to_string();
        assert!(err.contains("s9"), "{err}");

        let unreachable = r#"{"screens":[{"id":"s0","elements":[]},{"id":"s1","elements":[]}],
            "edges":[],"home":"s0",
            "tasks":[{"id":"t","instruction_id":1,"start":"s0","goal":["s1"],"max_steps":3}]}"#;
        match World::from_json_str("u", unreachable).unwrap_err() {
            Error::InvalidTask { task, .. } => assert_eq!(task, "t"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_unknown_fields_and_reports_position() {
        let extra = r#"{"screens":[],"edges":[],"home":"s0","tasks":[],"colour":1}"#;
        match World::from_json_str("x", extra).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("colour"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn action_json_shape() {
        let a = Action::long_press("x");
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"kind":"long_press","target":"x"}"#);
        assert_eq!(serde_json::to_string(&Action::done()).unwrap(), r#"{"kind":"done","target":null}"#);
        assert!(serde_json::from_str::<Action>(r#"{"kind":"done","target":"x"}"#).is_err());
        assert!(serde_json::from_str::<Action>(r#"{"kind":"click","target":null}"#).is_err());
        assert!(serde_json::from_str::<Action>(r#"{"kind":"scroll","target":"left"}"#).is_err());
    }

    #[test]
    fn world_json_round_trips() {
        let w = trap();
        let again = World::from_json_str("trap", &w.to_json()).unwrap();
        assert_eq!(again.file(), w.file());
    }
}
