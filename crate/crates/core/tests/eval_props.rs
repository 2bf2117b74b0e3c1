use precritic::agent::{run_suite, AgentPolicy, CriticMode, EpisodeResult, SuiteConfig, SuiteResult};
use precritic::critic::{Critic, OracleCritic};
use precritic::data::{SplitTag, WorldSet};
use precritic::eval::{dynamic_reports, ear, static_report, EarRule};
use precritic::experiment::{build_worlds, collect, ExperimentConfig};
use precritic::generate::{Family, GenParams};
use precritic::trainer::similar;
use proptest::prelude::*;

fn suite_result(config: &str, task: usize, seed: u64, success: bool, steps: usize) -> SuiteResult {
    SuiteResult {
        config: config.into(),
        seed,
        result: EpisodeResult {
            world: "w".into(),
            task: format!("t{task}"),
            success,
            steps,
            penalties: 0,
            trajectory: vec![],
        },
    }
}

fn outcomes() -> impl Strategy<Value = Vec<(bool, usize, bool, usize)>> {
    prop::collection::vec((any::<bool>(), 1usize..20, any::<bool>(), 1usize..20), 1..30)
}

/// EAR by direct counting over the pair list.
fn ear_by_hand(pairs: &[(bool, usize, bool, usize)], success_only: bool) -> Option<f64> {
    let consistent: Vec<_> = pairs.iter().filter(|p| p.0 == p.2 && (!success_only || p.0)).collect();
    if consistent.is_empty() {
        return None;
    }
    Some(consistent.iter().filter(|p| p.3 < p.1).count() as f64 / consistent.len() as f64)
}

proptest! {
    #[test]
    fn ear_is_a_pure_function_of_the_pairs(pairs in outcomes(), rot in 0usize..30, seed in any::<u64>()) {
        let base: Vec<SuiteResult> = pairs.iter().enumerate().map(|(i, p)| suite_result("baseline", i, 1, p.0, p.1)).collect();
        let crit: Vec<SuiteResult> = pairs.iter().enumerate().map(|(i, p)| suite_result("pre", i, 1, p.2, p.3)).collect();
        for (rule, only) in [(EarRule::AllConsistent, false), (EarRule::SuccessOnly, true)] {
            let stats = ear(&base, &crit, rule).unwrap();
            prop_assert_eq!(stats.value(), ear_by_hand(&pairs, only));

            let mut b2 = base.clone();
            b2.rotate_left(rot % base.len());
            let mut c2 = crit.clone();
            c2.reverse();
            use rand::seq::SliceRandom;
            c2.shuffle(&mut precritic::rng::from_seed(seed));
            prop_assert_eq!(ear(&b2, &c2, rule).unwrap(), stats);
        }
        // the consistent-pair count is the report's denominator
        let all: Vec<SuiteResult> = base.iter().chain(&crit).cloned().collect();
        let reports = dynamic_reports(&all, "baseline", EarRule::AllConsistent).unwrap();
        let pre = &reports[1];
        prop_assert_eq!(pre.n_consistent, pairs.iter().filter(|p| p.0 == p.2).count());
        prop_assert_eq!(pre.sr, pairs.iter().filter(|p| p.2).count() as f64 / pairs.len() as f64);
        let mean = pairs.iter().map(|p| p.3 as f64).sum::<f64>() / pairs.len() as f64;
        prop_assert!((pre.mean_steps - mean).abs() < 1e-12);
    }

    #[test]
    fn unpaired_or_duplicate_episodes_are_rejected(pairs in outcomes()) {
        let base: Vec<SuiteResult> = pairs.iter().enumerate().map(|(i, p)| suite_result("baseline", i, 1, p.0, p.1)).collect();
        let mut crit: Vec<SuiteResult> = pairs.iter().enumerate().map(|(i, p)| suite_result("pre", i, 1, p.2, p.3)).collect();
        let extra = suite_result("pre", 99, 1, true, 3);
        crit.push(extra.clone());
        prop_assert!(ear(&base, &crit, EarRule::AllConsistent).is_err());
        crit.pop();
        crit.push(crit[0].clone());
        prop_assert!(ear(&base, &crit, EarRule::AllConsistent).is_err());
    }
}

fn small() -> (ExperimentConfig, WorldSet, precritic::experiment::Collected) {
    let mut cfg = ExperimentConfig::default();
    cfg.worlds.mobile =
        GenParams { family: Family::Mobile, screens: 8, branching: 2, trap_prob: 0.2, tasks: 5, min_task_len: 2 };
    cfg.worlds.web = GenParams { family: Family::Web, ..cfg.worlds.mobile.clone() };
    cfg.worlds.train_worlds = 3;
    cfg.worlds.train_tasks = 3;
    let (worlds, split) = build_worlds(&cfg).unwrap();
    let c = collect(&cfg, &worlds, &split).unwrap();
    (cfg, worlds, c)
}

#[test]
fn oracle_scores_perfectly_on_every_split() {
    let (_, worlds, c) = small();
    for tag in [SplitTag::TestI, SplitTag::TestS, SplitTag::TestW] {
        let r = static_report(tag.as_str(), &worlds, c.splits.get(tag), &OracleCritic).unwrap();
        assert_eq!((r.critic_acc, r.sugg_acc), (1.0, 1.0), "{}", tag);
        assert_eq!(r.confusion[0][1] + r.confusion[1][0] + r.confusion[0][2] + r.confusion[1][2], 0);
    }
}

#[test]
fn static_metrics_recompute_from_raw_verdicts() {
    let (_, worlds, c) = small();
    // a deliberately imperfect critic: right about states, wrong about suggestions
    struct Contrarian;
    impl Critic for Contrarian {
        fn critique(
            &self,
            w: &precritic::world::World,
            s: &precritic::world::EnvState,
            a: &precritic::world::Action,
        ) -> Option<precritic::critic::Parsed> {
            let mut p = precritic::critic::oracle_critic(w, s, a).ok()?;
            if s.history.len() % 2 == 1 {
                p.score = 1 - p.score;
            }
            if s.history.len() % 3 == 2 {
                return None;
            }
            p.suggestion = precritic::world::Action::done();
            Some(p)
        }
    }
    let ds = c.splits.get(SplitTag::TestI);
    let r = static_report("test-I", &worlds, ds, &Contrarian).unwrap();
    let (mut right, mut sugg) = (0, 0);
    for s in ds.samples() {
        let w = &worlds[&s.world];
        if let Some(p) = Contrarian.critique(w, &s.state, &s.action) {
            right += usize::from(p.score == s.label);
            sugg += usize::from(similar(w, &s.state, &p.suggestion, &s.suggestion));
        }
    }
    assert_eq!(r.n, ds.len());
    assert_eq!(r.critic_acc, right as f64 / ds.len() as f64);
    assert_eq!(r.sugg_acc, sugg as f64 / ds.len() as f64);
    assert!(r.critic_acc < 1.0 && r.sugg_acc < 1.0);
}

#[test]
fn dynamic_reports_recompute_from_episodes() {
    let (_, worlds, c) = small();
    let tasks = c.plan.tasks(SplitTag::Train);
    let configs = [
        SuiteConfig { name: "baseline".into(), mode: CriticMode::None, critic: None },
        SuiteConfig { name: "pre".into(), mode: CriticMode::Pre, critic: Some(&OracleCritic) },
    ];
    let agent = AgentPolicy::noisy(0.3).unwrap();
    let results = run_suite(&worlds, &tasks, &agent, &configs, &[1, 2, 3]).unwrap();
    let reports = dynamic_reports(&results, "baseline", EarRule::AllConsistent).unwrap();
    for r in &reports {
        let mine: Vec<&SuiteResult> = results.iter().filter(|x| x.config == r.config).collect();
        assert_eq!(r.n, mine.len());
        assert_eq!(r.sr, mine.iter().filter(|x| x.result.success).count() as f64 / mine.len() as f64);
    }
    assert_eq!(reports[0].ear, Some(0.0));
    assert_eq!(reports[1].sr, 1.0);
}
