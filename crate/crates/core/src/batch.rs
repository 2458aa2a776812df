//! Bulk scoring and replay sweeps.
//!
//! Every function takes an [`Execution`] mode. With the `parallel` feature
//! (on by default) `Execution::Parallel` spreads work over the rayon pool;
//! without it the same call runs sequentially. Results are always in input
//! order and identical across modes.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{CauseWeights, NodeId, NodeKind, Project, StateVector};
use crate::runtime::{Phase, RuntimeError, Session, SessionOptions, StateEdit};
use crate::scoring::{apply_effect, cause_score, color_class, ColorClass, Score, ScoringError, SelectionPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn map_ordered<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// One cause score to evaluate.
#[derive(Debug, Clone)]
pub struct ScoreJob {
    pub cause: CauseWeights,
    pub player: StateVector,
    pub npc: StateVector,
}

pub fn score_batch(jobs: &[ScoreJob], exec: Execution) -> Vec<Result<Score, ScoringError>> {
    map_ordered(jobs, exec, |j| cause_score(&j.cause, &j.player, &j.npc))
}

/// `(states, effects)` pairs through [`apply_effect`].
pub fn effect_batch(jobs: &[(StateVector, Vec<f64>)], exec: Execution) -> Vec<Result<StateVector, ScoringError>> {
    map_ordered(jobs, exec, |(s, e)| apply_effect(s, e))
}

/// Color class of every item and termination that carries a cause.
pub fn color_classes(project: &Project, exec: Execution) -> BTreeMap<NodeId, ColorClass> {
    let causes: Vec<(&NodeId, &CauseWeights)> = project
        .nodes()
        .filter_map(|n| match &n.kind {
            NodeKind::Item(item) => item.cause.as_ref().map(|c| (&n.id, c)),
            NodeKind::Termination { cause: Some(c), .. } => Some((&n.id, c)),
            _ => None,
        })
        .collect();
    map_ordered(&causes, exec, |(id, c)| ((*id).clone(), color_class(c)))
        .into_iter()
        .collect()
}

/// How the simulated player picks from each menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlayerStrategy {
    /// Always the first option.
    #[default]
    First,
    /// Uniformly at random, seeded per run.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub start: String,
    /// NPC selection. For softmax the per-run seed replaces the one given here.
    pub policy: SelectionPolicy,
    pub player: PlayerStrategy,
    /// Runs still awaiting a choice after this many menus stop as unfinished.
    pub max_choices: usize,
    pub max_steps: usize,
    pub overrides: Vec<StateEdit>,
}

impl SweepConfig {
    pub fn new(start: impl Into<String>) -> Self {
        SweepConfig {
            start: start.into(),
            policy: SelectionPolicy::Argmax,
            player: PlayerStrategy::First,
            max_choices: 256,
            max_steps: crate::runtime::DEFAULT_MAX_STEPS,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub seed: u64,
    /// Player choices made.
    pub choices: Vec<NodeId>,
    /// `None` when the run was cut off by `max_choices`.
    pub ending: Option<Ending>,
    pub final_player: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Ending {
    pub direction: String,
    pub value: Option<String>,
}

impl Ending {
    pub fn label(&self) -> String {
        match &self.value {
            Some(v) => format!("{} => {v}", self.direction),
            None => self.direction.clone(),
        }
    }
}

fn run_one(project: &Arc<Project>, config: &SweepConfig, seed: u64) -> Result<SweepRun, RuntimeError> {
    let policy = match config.policy {
        SelectionPolicy::Argmax => SelectionPolicy::Argmax,
        SelectionPolicy::SoftmaxSample { temperature, .. } => SelectionPolicy::SoftmaxSample { temperature, seed },
    };
    let options = SessionOptions {
        policy,
        max_steps: config.max_steps,
    };
    let mut session = Session::start(Arc::clone(project), &config.start, options, &config.overrides)?;
    // separate stream from the NPC sampler so player picks do not shift it
    let mut player_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut choices = Vec::new();
    while matches!(session.phase(), Phase::AwaitingChoice) && choices.len() < config.max_choices {
        let menu = session.menu_options()?;
        let pick = match config.player {
            PlayerStrategy::First => menu.first(),
            PlayerStrategy::Random => menu.choose(&mut player_rng),
        }
        .ok_or_else(|| RuntimeError::NoCandidates(session.current_node().clone()))?;
        let id = pick.node.clone();
        session.choose(&id)?;
        choices.push(id);
    }
    let ending = match session.phase() {
        Phase::Ended {
            direction,
            termination_value,
        } => Some(Ending {
            direction: direction.clone(),
            value: termination_value.clone(),
        }),
        Phase::AwaitingChoice => None,
    };
    Ok(SweepRun {
        seed,
        choices,
        ending,
        final_player: session.player_states().values().to_vec(),
    })
}

/// Plays one conversation per seed.
pub fn sweep(
    project: &Arc<Project>,
    config: &SweepConfig,
    seeds: &[u64],
    exec: Execution,
) -> Vec<Result<SweepRun, RuntimeError>> {
    map_ordered(seeds, exec, |&seed| run_one(project, config, seed))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EndingDistribution {
    pub counts: BTreeMap<Ending, usize>,
    pub unfinished: usize,
    pub failed: usize,
}

impl EndingDistribution {
    pub fn total(&self) -> usize {
        self.counts.values().sum::<usize>() + self.unfinished + self.failed
    }
}

/// Tallies how often each ending is reached over `seeds`.
pub fn ending_distribution(
    project: &Arc<Project>,
    config: &SweepConfig,
    seeds: &[u64],
    exec: Execution,
) -> EndingDistribution {
    let mut dist = EndingDistribution::default();
    for run in sweep(project, config, seeds, exec) {
        match run {
            Ok(SweepRun { ending: Some(e), .. }) => *dist.counts.entry(e).or_default() += 1,
            Ok(_) => dist.unfinished += 1,
            Err(_) => dist.failed += 1,
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Actor, DialogItem, Edge, Scope, StateDeclaration};

    fn fork() -> Arc<Project> {
        let mut b = Project::builder();
        b.actor(Actor::player("pc", "Player")).unwrap();
        b.actor(Actor::npc("amy", "Amy")).unwrap();
        b.state(StateDeclaration::new("mood", Scope::Npc, 0.0)).unwrap();
        b.page("p").unwrap();
        b.node("p", "s", NodeKind::start("go")).unwrap();
        b.node("p", "hi", NodeKind::Item(DialogItem::new("pc").with_cue("hi"))).unwrap();
        b.node("p", "yo", NodeKind::Item(DialogItem::new("pc").with_cue("yo"))).unwrap();
        b.node("p", "a", NodeKind::termination_with_value("left", "a")).unwrap();
        b.node("p", "b", NodeKind::termination_with_value("left", "b")).unwrap();
        b.edge(Edge::new("s", "hi", 0));
        b.edge(Edge::new("s", "yo", 1));
        b.edge(Edge::new("hi", "a", 0));
        b.edge(Edge::new("yo", "b", 0));
        Arc::new(b.build())
    }

    #[test]
    fn modes_agree() {
        let p = fork();
        let mut cfg = SweepConfig::new("go");
        cfg.player = PlayerStrategy::Random;
        let seeds: Vec<u64> = (0..200).collect();
        let a = sweep(&p, &cfg, &seeds, Execution::Sequential);
        let b = sweep(&p, &cfg, &seeds, Execution::Parallel);
        assert_eq!(a, b);
        let dist = ending_distribution(&p, &cfg, &seeds, Execution::Parallel);
        assert_eq!(dist.total(), 200);
        assert_eq!(dist.counts.len(), 2);
        assert!(dist.counts.values().all(|&c| c > 60), "{dist:?}");
    }

    #[test]
    fn first_strategy_is_deterministic() {
        let dist = ending_distribution(&fork(), &SweepConfig::new("go"), &[1, 2, 3], Execution::default());
        let only: Vec<_> = dist.counts.iter().map(|(e, c)| (e.label(), *c)).collect();
        assert_eq!(only, vec![("left => a".to_owned(), 3)]);
    }

    #[test]
    fn unknown_start_counts_as_failed() {
        let dist = ending_distribution(&fork(), &SweepConfig::new("nope"), &[1], Execution::Sequential);
        assert_eq!(dist.failed, 1);
    }

    #[test]
    fn score_batch_matches_single_calls() {
        let jobs: Vec<ScoreJob> = (0..50)
            .map(|i| {
                let x = i as f64 / 50.0;
                ScoreJob {
                    cause: CauseWeights::new(0.1, vec![x], vec![-x, 0.5]),
                    player: StateVector::from_values(&[0.3]),
                    npc: StateVector::from_values(&[x - 0.5, 0.2]),
                }
            })
            .collect();
        let par = score_batch(&jobs, Execution::Parallel);
        for (j, s) in jobs.iter().zip(&par) {
            assert_eq!(s, &cause_score(&j.cause, &j.player, &j.npc));
        }
        assert_eq!(par, score_batch(&jobs, Execution::Sequential));
    }
}
