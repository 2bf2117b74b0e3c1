//! Procedural world generation.
//!
//! Two families share the same construction (a random spanning tree of
//! reversible navigation edges plus cross links and irreversible traps) but
//! differ in their action-kind mix: `mobile` uses click / long-press / type
//! elements and has Home edges, `web` uses click / type elements, scroll
//! edges, and no Home.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::world::{Action, ActionKind, Edge, Screen, Task, World, WorldFile};

const MAX_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mobile,
    Web,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Mobile => "mobile",
            Family::Web => "web",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "mobile" => Some(Family::Mobile),
            "web" => Some(Family::Web),
            _ => None,
        }
    }

    /// Cumulative distribution over element kinds.
    fn element_kinds(self) -> &'static [(ActionKind, f64)] {
        match self {
            Family::Mobile => &[(ActionKind::Click, 0.70), (ActionKind::LongPress, 0.85), (ActionKind::Type, 1.0)],
            Family::Web => &[(ActionKind::Click, 0.55), (ActionKind::Type, 1.0)],
        }
    }

    fn scroll_prob(self) -> f64 {
        match self {
            Family::Mobile => 0.1,
            Family::Web => 0.6,
        }
    }

    fn has_home(self) -> bool {
        matches!(self, Family::Mobile)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub family: Family,
    pub screens: usize,
    /// Minimum number of interactive elements per screen.
    pub branching: usize,
    /// Probability that a non-tree element leads irreversibly to a dead end.
    pub trap_prob: f64,
    pub tasks: usize,
    /// Shortest start-to-goal path length a task may have.
    #[serde(default = "default_min_task_len")]
    pub min_task_len: u32,
}

fn default_min_task_len() -> u32 {
    2
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { family: Family::Mobile, screens: 10, branching: 3, trap_prob: 0.25, tasks: 8, min_task_len: 2 }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.screens < 3 {
            return Err(Error::Config(format!("screen count must be >= 3, got {}", self.screens)));
        }
        if self.branching < 1 {
            return Err(Error::Config("branching factor must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.trap_prob) {
            return Err(Error::Config(format!("trap probability must lie in [0, 1), got {}", self.trap_prob)));
        }
        if self.tasks < 1 {
            return Err(Error::Config("task count must be >= 1".into()));
        }
        if self.min_task_len < 1 {
            return Err(Error::Config("minimum task length must be >= 1".into()));
        }
        Ok(())
    }
}

/// Generates a valid world. The same `(seed, params)` always yields the same world.
pub fn generate_world(seed: u64, params: &GenParams) -> Result<World> {
    params.validate()?;
    let mut rng = substream(seed, &format!("world/{}", params.family.as_str()));
    let mut last_err = String::new();
    for _ in 0..MAX_ATTEMPTS {
        match try_generate(&mut rng, params) {
            Ok(w) => return Ok(w),
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::Generation { attempts: MAX_ATTEMPTS, reason: last_err })
}

fn pick_kind(rng: &mut Rng, family: Family) -> ActionKind {
    let u: f64 = rng.gen();
    family.element_kinds().iter().find(|(_, c)| u < *c).map(|(k, _)| *k).unwrap_or(ActionKind::Click)
}

fn element_action(kind: ActionKind, element: &str) -> Action {
    Action::new(kind, Some(element.to_string())).expect("element kinds take targets")
}

fn try_generate(rng: &mut Rng, p: &GenParams) -> Result<World> {
    let n = p.screens;
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut elements: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut edges: Vec<Edge> = Vec::new();
    let mut trap_screens: Vec<String> = Vec::new();

    let new_element = |elements: &mut Vec<Vec<String>>, screen: usize| -> String {
        let id = format!("{}_e{}", ids[screen], elements[screen].len());
        elements[screen].push(id.clone());
        id
    };

    let mut parent = vec![0usize; n];
    for child in 1..n {
        parent[child] = rng.gen_range(0..child);
        let el = new_element(&mut elements, parent[child]);
        let kind = pick_kind(rng, p.family);
        edges.push(Edge {
            from: ids[parent[child]].clone(),
            action: element_action(kind, &el),
            to: ids[child].clone(),
            irreversible: false,
        });
        edges.push(Edge {
            from: ids[child].clone(),
            action: Action::back(),
            to: ids[parent[child]].clone(),
            irreversible: false,
        });
    }

    for screen in 0..n {
        while elements[screen].len() < p.branching {
            let el = new_element(&mut elements, screen);
            let kind = pick_kind(rng, p.family);
            if rng.gen::<f64>() < p.trap_prob {
                let trap = format!("x{}", trap_screens.len());
                trap_screens.push(trap.clone());
                edges.push(Edge {
                    from: ids[screen].clone(),
                    action: element_action(kind, &el),
                    to: trap,
                    irreversible: true,
                });
            } else {
                let mut to = rng.gen_range(0..n - 1);
                if to >= screen {
                    to += 1;
                }
                edges.push(Edge {
                    from: ids[screen].clone(),
                    action: element_action(kind, &el),
                    to: ids[to].clone(),
                    irreversible: false,
                });
            }
        }
        if rng.gen::<f64>() < p.family.scroll_prob() {
            let mut to = rng.gen_range(0..n - 1);
            if to >= screen {
                to += 1;
            }
            edges.push(Edge {
                from: ids[screen].clone(),
                action: Action::scroll_down(),
                to: ids[to].clone(),
                irreversible: false,
            });
        }
        if p.family.has_home() && screen != 0 {
            edges.push(Edge {
                from: ids[screen].clone(),
                action: Action::home(),
                to: ids[0].clone(),
                irreversible: false,
            });
        }
    }

    if p.trap_prob > 0.0 && trap_screens.is_empty() {
        // Force one trap: redirect a random cross link.
        let candidates: Vec<usize> = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.action.target().is_some() && e.action.kind() != ActionKind::Scroll && !is_tree_edge(e, &ids, &parent)
            })
            .map(|(i, _)| i)
            .collect();
        let Some(&i) = candidates.choose(rng) else {
            return Err(Error::Generation {
                attempts: 1,
                reason: "no cross link available to turn into a trap".into(),
            });
        };
        trap_screens.push("x0".into());
        edges[i].to = "x0".into();
        edges[i].irreversible = true;
    }

    let mut screens: Vec<Screen> =
        ids.iter().zip(elements).map(|(id, elements)| Screen { id: id.clone(), elements }).collect();
    screens.extend(trap_screens.iter().map(|t| Screen { id: t.clone(), elements: Vec::new() }));

    let skeleton = World::from_file(
        "skeleton",
        WorldFile { screens: screens.clone(), edges: edges.clone(), home: ids[0].clone(), tasks: vec![] },
    )?;

    let mut pairs: Vec<(usize, usize, u32)> = Vec::new();
    for s in 0..n {
        for g in 0..n {
            if s == g {
                continue;
            }
            if let Some(d) = skeleton.shortest_path_len(&ids[s], &ids[g]) {
                if d >= p.min_task_len {
                    pairs.push((s, g, d));
                }
            }
        }
    }
    if pairs.len() < p.tasks {
        return Err(Error::Generation {
            attempts: 1,
            reason: format!("only {} start/goal pairs for {} tasks", pairs.len(), p.tasks),
        });
    }
    pairs.shuffle(rng);
    let mut used = HashSet::new();
    let tasks: Vec<Task> = pairs
        .into_iter()
        .filter(|(s, g, _)| used.insert((*s, *g)))
        .take(p.tasks)
        .enumerate()
        .map(|(k, (s, g, d))| Task {
            id: format!("task{k}"),
            instruction_id: g as u32,
            start: ids[s].clone(),
            goal: vec![ids[g].clone()],
            max_steps: 2 * (d + 1) + 6,
        })
        .collect();

    World::from_file("generated", WorldFile { screens, edges, home: ids[0].clone(), tasks })
}

fn is_tree_edge(e: &Edge, ids: &[String], parent: &[usize]) -> bool {
    ids.iter().position(|id| *id == e.to).is_some_and(|child| child > 0 && ids[parent[child]] == e.from)
}
