//! Cause scores, effect application, NPC response selection and cause-based
//! node coloring.
//!
//! A cause score is the general weight plus the inner products of the player
//! and conversant weight vectors with the current states. Effects are added to
//! states and clamped back into `[-1, 1]`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{clamp_state, CauseWeights, NodeId, StateVector};

/// Half-width of the band around zero that still counts as a neutral color.
pub const NEUTRAL_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("{what}: expected {expected} components, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("no candidate responses to choose from")]
    NoCandidates,
    #[error("softmax temperature must be positive, got {0}")]
    InvalidTemperature(f64),
}

/// Selection score of a dialog item. Unbounded; its magnitude is at most one
/// plus the number of declared states.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(pub f64);

impl Score {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ScoringError> {
    if expected == got {
        Ok(())
    } else {
        Err(ScoringError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

/// `general + player_weights · player_states + npc_weights · npc_states`.
pub fn cause_score(
    cause: &CauseWeights,
    player_states: &StateVector,
    npc_states: &StateVector,
) -> Result<Score, ScoringError> {
    check_len("player cause weights", player_states.len(), cause.player.len())?;
    check_len("npc cause weights", npc_states.len(), cause.npc.len())?;
    let player_terms = cause.player.iter().zip(player_states.values());
    let npc_terms = cause.npc.iter().zip(npc_states.values());
    let total = player_terms
        .chain(npc_terms)
        .fold(cause.general, |acc, (w, s)| acc + w * s);
    Ok(Score(total))
}

/// Adds `effects` to `states` componentwise and clamps each result into
/// `[-1, 1]`. The input vector is left untouched.
pub fn apply_effect(states: &StateVector, effects: &[f64]) -> Result<StateVector, ScoringError> {
    check_len("effects", states.len(), effects.len())?;
    let values = states
        .values()
        .iter()
        .zip(effects)
        .map(|(s, e)| clamp_state(s + e))
        .collect();
    Ok(states.with_values(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// Highest score wins; ties go to the lowest edge order.
    #[default]
    Argmax,
    /// Samples proportionally to `exp(score / temperature)`.
    SoftmaxSample { temperature: f64, seed: u64 },
}

impl SelectionPolicy {
    pub fn softmax(temperature: f64, seed: u64) -> Result<Self, ScoringError> {
        if temperature > 0.0 && temperature.is_finite() {
            Ok(SelectionPolicy::SoftmaxSample { temperature, seed })
        } else {
            Err(ScoringError::InvalidTemperature(temperature))
        }
    }

    /// Seed for the session generator. Argmax never draws from it.
    pub fn seed(&self) -> u64 {
        match self {
            SelectionPolicy::Argmax => 0,
            SelectionPolicy::SoftmaxSample { seed, .. } => *seed,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}

/// One possible NPC continuation, listed in edge order.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub node: &'a NodeId,
    pub cause: &'a CauseWeights,
    /// State vector of the NPC the line belongs to.
    pub npc_states: &'a StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Position in the candidate list.
    pub index: usize,
    pub node: NodeId,
    pub score: Score,
}

/// Picks the NPC response among `candidates` using `policy`, drawing from
/// `rng` when sampling.
pub fn select_npc_response<R: Rng + ?Sized>(
    candidates: &[Candidate<'_>],
    player_states: &StateVector,
    policy: &SelectionPolicy,
    rng: &mut R,
) -> Result<Selection, ScoringError> {
    if candidates.is_empty() {
        return Err(ScoringError::NoCandidates);
    }
    let scores = candidates
        .iter()
        .map(|c| cause_score(c.cause, player_states, c.npc_states).map(Score::value))
        .collect::<Result<Vec<_>, _>>()?;
    let index = match *policy {
        SelectionPolicy::Argmax => argmax_first(&scores),
        SelectionPolicy::SoftmaxSample { temperature, .. } => {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(ScoringError::InvalidTemperature(temperature));
            }
            softmax_sample(&scores, temperature, rng.random::<f64>())
        }
    };
    Ok(Selection {
        index,
        node: candidates[index].node.clone(),
        score: Score(scores[index]),
    })
}

/// Convenience wrapper that seeds a fresh generator from the policy.
pub fn select_npc_response_seeded(
    candidates: &[Candidate<'_>],
    player_states: &StateVector,
    policy: &SelectionPolicy,
) -> Result<Selection, ScoringError> {
    select_npc_response(candidates, player_states, policy, &mut policy.rng())
}

/// Index of the first maximum. Strict comparison keeps the earliest on ties.
fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw over softmax weights for a uniform `u` in `[0, 1)`.
fn softmax_sample(scores: &[f64], temperature: f64, u: f64) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Softmax probabilities for a score list; exposed for diagnostics and tests.
pub fn softmax_probabilities(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Background color class of a node, derived from the mean cause weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "intensity", rename_all = "lowercase")]
pub enum ColorClass {
    Neutral,
    Positive(f64),
    Negative(f64),
}

impl ColorClass {
    pub fn name(self) -> &'static str {
        match self {
            ColorClass::Neutral => "neutral",
            ColorClass::Positive(_) => "positive",
            ColorClass::Negative(_) => "negative",
        }
    }

    pub fn intensity(self) -> f64 {
        match self {
            ColorClass::Neutral => 0.0,
            ColorClass::Positive(i) | ColorClass::Negative(i) => i,
        }
    }
}

/// Mean over every weight component, general weight included.
pub fn color_class(cause: &CauseWeights) -> ColorClass {
    let count = 1 + cause.player.len() + cause.npc.len();
    let mean = cause.components().sum::<f64>() / count as f64;
    if mean > NEUTRAL_EPSILON {
        ColorClass::Positive(mean.min(1.0))
    } else if mean < -NEUTRAL_EPSILON {
        ColorClass::Negative((-mean).min(1.0))
    } else {
        ColorClass::Neutral
    }
}
