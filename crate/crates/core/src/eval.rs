//! Static metrics on labelled splits and dynamic metrics on paired episode
//! suites, plus report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{EpisodeResult, SuiteResult};
use crate::critic::{Critic, Parsed};
use crate::data::{lookup, Dataset, WorldSet};
use crate::error::{Error, Result};
use crate::trainer::similar;

/// Counts indexed by `[label][verdict]`, verdict 0, 1 or 2 for unparseable.
pub type Confusion = [[usize; 3]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticReport {
    pub split: String,
    pub critic_acc: f64,
    pub sugg_acc: f64,
    pub n: usize,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicReport {
    pub config: String,
    pub sr: f64,
    /// `None` when no pair had a consistent outcome.
    pub ear: Option<f64>,
    pub n: usize,
    pub n_consistent: usize,
    pub mean_steps: f64,
}

struct Judged {
    label: u8,
    verdict: Option<u8>,
    sugg_ok: bool,
}

fn judge_all(worlds: &WorldSet, ds: &Dataset, critic: &dyn Critic) -> Result<Vec<Judged>> {
    if ds.is_empty() {
        return Err(Error::Metric("empty dataset".into()));
    }
    ds.samples()
        .par_iter()
        .map(|s| {
            let w = lookup(worlds, &s.world)?;
            let out: Option<Parsed> = critic.critique(w, &s.state, &s.action);
            Ok(Judged {
                label: s.label,
                verdict: out.as_ref().map(|p| p.score),
                sugg_ok: out.is_some_and(|p| similar(w, &s.state, &p.suggestion, &s.suggestion)),
            })
        })
        .collect()
}

fn fraction(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

/// Share of samples whose greedy verdict equals the label.
pub fn critic_accuracy(worlds: &WorldSet, ds: &Dataset, critic: &dyn Critic) -> Result<f64> {
    let j = judge_all(worlds, ds, critic)?;
    Ok(fraction(j.iter().filter(|j| j.verdict == Some(j.label)).count(), j.len()))
}

/// Share of samples whose suggestion is similar to the annotated one.
pub fn suggestion_accuracy(worlds: &WorldSet, ds: &Dataset, critic: &dyn Critic) -> Result<f64> {
    let j = judge_all(worlds, ds, critic)?;
    Ok(fraction(j.iter().filter(|j| j.sugg_ok).count(), j.len()))
}

pub fn static_report(split: &str, worlds: &WorldSet, ds: &Dataset, critic: &dyn Critic) -> Result<StaticReport> {
    let j = judge_all(worlds, ds, critic)?;
    let mut confusion = [[0usize; 3]; 2];
    for x in &j {
        confusion[x.label as usize][x.verdict.map_or(2, usize::from)] += 1;
    }
    Ok(StaticReport {
        split: split.to_string(),
        critic_acc: fraction(confusion[0][0] + confusion[1][1], j.len()),
        sugg_acc: fraction(j.iter().filter(|j| j.sugg_ok).count(), j.len()),
        n: j.len(),
        confusion,
    })
}

pub fn success_rate(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Metric("no episodes".into()));
    }
    Ok(fraction(results.iter().filter(|r| r.success).count(), results.len()))
}

/// Which consistent pairs enter the efficiency comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarRule {
    /// Pairs that both succeeded or both failed.
    #[default]
    AllConsistent,
    /// Only pairs that both succeeded.
    SuccessOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarStats {
    pub advantaged: usize,
    pub consistent: usize,
}

impl EarStats {
    pub fn value(&self) -> Option<f64> {
        (self.consistent > 0).then(|| fraction(self.advantaged, self.consistent))
    }
}

type PairKey = (String, String, u64);

fn keyed(results: &[SuiteResult], side: &str) -> Result<BTreeMap<PairKey, (bool, usize)>> {
    let mut out = BTreeMap::new();
    for r in results {
        if out.insert(r.pair_key(), (r.result.success, r.result.steps)).is_some() {
            let (w, t, s) = r.pair_key();
            return Err(Error::Metric(format!("duplicate {side} episode for ({w}, {t}, seed {s})")));
        }
    }
    if out.is_empty() {
        return Err(Error::Metric(format!("no {side} episodes")));
    }
    Ok(out)
}

/// Among pairs with the same outcome, the share where the critic run used
/// strictly fewer steps.
pub fn ear(baseline: &[SuiteResult], critic: &[SuiteResult], rule: EarRule) -> Result<EarStats> {
    let b = keyed(baseline, "baseline")?;
    let c = keyed(critic, "critic")?;
    let bk: BTreeSet<&PairKey> = b.keys().collect();
    let ck: BTreeSet<&PairKey> = c.keys().collect();
    let unpaired: Vec<String> = bk.symmetric_difference(&ck).map(|(w, t, s)| format!("({w}, {t}, seed {s})")).collect();
    if !unpaired.is_empty() {
        return Err(Error::Metric(format!("unpaired episodes: {}", unpaired.join(", "))));
    }
    let mut stats = EarStats { advantaged: 0, consistent: 0 };
    for (k, &(b_ok, b_steps)) in &b {
        let (c_ok, c_steps) = c[k];
        if b_ok != c_ok || (rule == EarRule::SuccessOnly && !b_ok) {
            continue;
        }
        stats.consistent += 1;
        stats.advantaged += usize::from(c_steps < b_steps);
    }
    Ok(stats)
}

/// One report per configuration (in first-seen order), each compared against
/// the `baseline` configuration.
pub fn dynamic_reports(results: &[SuiteResult], baseline: &str, rule: EarRule) -> Result<Vec<DynamicReport>> {
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if !names.contains(&r.config.as_str()) {
            names.push(&r.config);
        }
    }
    let of = |name: &str| -> Vec<SuiteResult> { results.iter().filter(|r| r.config == name).cloned().collect() };
    let base = of(baseline);
    if base.is_empty() {
        return Err(Error::Metric(format!("baseline configuration {baseline} has no episodes")));
    }
    names
        .into_iter()
        .map(|name| {
            let runs = of(name);
            let episodes: Vec<EpisodeResult> = runs.iter().map(|r| r.result.clone()).collect();
            let stats = ear(&base, &runs, rule)?;
            Ok(DynamicReport {
                config: name.to_string(),
                sr: success_rate(&episodes)?,
                ear: stats.value(),
                n: episodes.len(),
                n_consistent: stats.consistent,
                mean_steps: episodes.iter().map(|e| e.steps as f64).sum::<f64>() / episodes.len() as f64,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Unknown { what: "report format", name: other.to_string() }),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

/// A report that can be written as a CSV row.
pub trait CsvRow: Serialize {
    const HEADER: &'static str;
    fn csv_row(&self) -> String;
}

impl CsvRow for StaticReport {
    const HEADER: &'static str = "split,critic_acc,sugg_acc,n";

    fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.split, self.critic_acc, self.sugg_acc, self.n)
    }
}

impl CsvRow for DynamicReport {
    const HEADER: &'static str = "config,sr,ear,n,n_consistent,mean_steps";

    fn csv_row(&self) -> String {
        let ear = self.ear.map(|e| e.to_string()).unwrap_or_default();
        format!("{},{},{},{},{},{}", self.config, self.sr, ear, self.n, self.n_consistent, self.mean_steps)
    }
}

pub fn render_report<T: CsvRow>(reports: &[T], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(reports).expect("reports serialize") + "\n",
        ReportFormat::Csv => {
            let mut out = String::from(T::HEADER);
            out.push('\n');
            for r in reports {
                out.push_str(&r.csv_row());
                out.push('\n');
            }
            out
        }
    }
}

pub fn emit_report<T: CsvRow>(reports: &[T], path: impl AsRef<Path>, format: &str) -> Result<()> {
    let format = ReportFormat::parse(format)?;
    let path = path.as_ref();
    std::fs::write(path, render_report(reports, format)).map_err(|e| Error::io(path, e))
}
