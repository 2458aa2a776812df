//! Conversation playback.
//!
//! A [`Session`] walks the dialog graph: the player picks from menus, NPC
//! lines are chosen by cause score, references jump to other starts and
//! subdialogs push a return point that their termination value resolves.
//! Between calls a session always rests either on a player menu or at an
//! ending.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ActorId, CauseWeights, DialogItem, NodeId, NodeKind, Project, Scope, StateVector,
};
use crate::scoring::{apply_effect, select_npc_response, Candidate, Score, ScoringError, SelectionPolicy};

pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("no start node named `{0}`")]
    StartNotFound(String),
    #[error("node `{0}` not found")]
    NodeNotFound(NodeId),
    #[error("operation needs a pending player menu, session is {0}")]
    InvalidPhase(&'static str),
    #[error("`{0}` is not one of the offered menu options")]
    InvalidChoice(String),
    #[error("no continuation after node `{0}`")]
    NoCandidates(NodeId),
    #[error("subdialog `{subdialog}` has no branch matching termination value {value:?}")]
    UnmatchedBranch {
        subdialog: NodeId,
        value: Option<String>,
    },
    #[error("auto-advance exceeded {max_steps} steps without reaching a menu or an ending")]
    CycleOverflow { max_steps: usize },
    #[error("unknown {target} state `{name}`")]
    StateNotFound { target: String, name: String },
    #[error("at node `{node}`: {source}")]
    Scoring {
        node: NodeId,
        #[source]
        source: ScoringError,
    },
}

/// Whose state an edit addresses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateTarget {
    Player,
    Npc(ActorId),
}

impl std::fmt::Display for StateTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateTarget::Player => f.write_str("player"),
            StateTarget::Npc(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEdit {
    pub target: StateTarget,
    pub name: String,
    pub value: f64,
}

impl StateEdit {
    pub fn new(target: StateTarget, name: impl Into<String>, value: f64) -> Self {
        Self {
            target,
            name: name.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum Phase {
    AwaitingChoice,
    Ended {
        direction: String,
        termination_value: Option<String>,
    },
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::AwaitingChoice => "awaiting-choice",
            Phase::Ended { .. } => "ended",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Start,
    Line,
    Termination,
    Reference,
    Subdialog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub node: NodeId,
    pub kind: EntryKind,
    pub actor: Option<ActorId>,
    pub cue: Option<String>,
    pub direction: Option<String>,
    /// Start name, jump target or termination value, depending on kind.
    pub detail: Option<String>,
    pub score: Option<Score>,
    pub player_states: StateVector,
    pub conversant: Option<ActorId>,
    pub conversant_states: Option<StateVector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuOption {
    pub node: NodeId,
    pub label: String,
    pub order: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionOptions {
    pub policy: SelectionPolicy,
    pub max_steps: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            policy: SelectionPolicy::Argmax,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl SessionOptions {
    pub fn with_policy(policy: SelectionPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }
}

/// Live traversal state of one conversation.
#[derive(Debug, Clone)]
pub struct Session {
    project: Arc<Project>,
    options: SessionOptions,
    rng: ChaCha8Rng,
    current: NodeId,
    phase: Phase,
    player_states: StateVector,
    npc_states: BTreeMap<ActorId, StateVector>,
    conversant: Option<ActorId>,
    /// Subdialog nodes waiting for their entered graph to terminate.
    stack: Vec<NodeId>,
    transcript: Vec<TranscriptEntry>,
}

enum Move {
    Rest(Phase),
    Go(NodeId, Option<Score>),
}

impl Session {
    /// Enters the start named `start_name`: states take their declared
    /// defaults, the start's effect is applied, then `overrides`, and the
    /// session auto-advances to the first menu or ending.
    pub fn start(
        project: Arc<Project>,
        start_name: &str,
        options: SessionOptions,
        overrides: &[StateEdit],
    ) -> Result<Self, RuntimeError> {
        let start = project
            .start_node(start_name)
            .ok_or_else(|| RuntimeError::StartNotFound(start_name.to_owned()))?
            .id
            .clone();
        let player_states = StateVector::from_declarations(project.state_declarations(Scope::Player));
        let npc_template = StateVector::from_declarations(project.state_declarations(Scope::Npc));
        let npc_states = project
            .npcs()
            .map(|a| (a.id.clone(), npc_template.clone()))
            .collect();
        let mut session = Session {
            rng: options.policy.rng(),
            project,
            options,
            current: start.clone(),
            phase: Phase::AwaitingChoice,
            player_states,
            npc_states,
            conversant: None,
            stack: Vec::new(),
            transcript: Vec::new(),
        };
        session.execute(&start, None)?;
        for edit in overrides {
            session.set_state(&edit.target, &edit.name, edit.value)?;
        }
        session.settle()?;
        Ok(session)
    }

    pub fn project(&self) -> &Arc<Project> {
        &self.project
    }

    pub fn options(&self) -> &SessionOptions {
        &self.options
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn current_node(&self) -> &NodeId {
        &self.current
    }

    pub fn player_states(&self) -> &StateVector {
        &self.player_states
    }

    pub fn npc_states(&self) -> &BTreeMap<ActorId, StateVector> {
        &self.npc_states
    }

    pub fn npc_state(&self, npc: &ActorId) -> Option<&StateVector> {
        self.npc_states.get(npc)
    }

    /// NPC most recently involved in a spoken line.
    pub fn conversant(&self) -> Option<&ActorId> {
        self.conversant.as_ref()
    }

    pub fn subdialog_depth(&self) -> usize {
        self.stack.len()
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn into_transcript(self) -> Vec<TranscriptEntry> {
        self.transcript
    }

    /// Player lines following the resting node, in edge order.
    pub fn menu_options(&self) -> Result<Vec<MenuOption>, RuntimeError> {
        if self.phase != Phase::AwaitingChoice {
            return Err(RuntimeError::InvalidPhase(self.phase.label()));
        }
        Ok(self.player_menu())
    }

    fn player_menu(&self) -> Vec<MenuOption> {
        self.project
            .outgoing_edges(&self.current)
            .filter_map(|edge| {
                let node = self.project.node(&edge.to)?;
                let item = node.as_item()?;
                if !self.project.is_player_item(item) {
                    return None;
                }
                let label = [&item.menu_label, &item.cue, &item.direction]
                    .into_iter()
                    .flatten()
                    .find(|s| !s.is_empty())
                    .cloned()
                    .unwrap_or_else(|| node.id.to_string());
                Some(MenuOption {
                    node: node.id.clone(),
                    label,
                    order: edge.order,
                })
            })
            .collect()
    }

    /// Speaks the chosen player line and advances until the next menu or an
    /// ending. An invalid choice leaves the session untouched.
    pub fn choose(&mut self, option: &NodeId) -> Result<(), RuntimeError> {
        let menu = self.menu_options()?;
        if !menu.iter().any(|m| &m.node == option) {
            return Err(RuntimeError::InvalidChoice(option.to_string()));
        }
        self.execute(option, None)?;
        self.settle()
    }

    /// Chooses by 1-based menu position.
    pub fn choose_index(&mut self, index: usize) -> Result<NodeId, RuntimeError> {
        let menu = self.menu_options()?;
        let node = index
            .checked_sub(1)
            .and_then(|i| menu.get(i))
            .map(|m| m.node.clone())
            .ok_or_else(|| RuntimeError::InvalidChoice(index.to_string()))?;
        self.choose(&node)?;
        Ok(node)
    }

    /// Overwrites one state, clamped into `[-1, 1]`. Never advances the
    /// conversation. Returns the stored value.
    pub fn set_state(&mut self, target: &StateTarget, name: &str, value: f64) -> Result<f64, RuntimeError> {
        let not_found = || RuntimeError::StateNotFound {
            target: target.to_string(),
            name: name.to_owned(),
        };
        let vector = match target {
            StateTarget::Player => &mut self.player_states,
            StateTarget::Npc(id) => self.npc_states.get_mut(id).ok_or_else(not_found)?,
        };
        vector.set(name, value).ok_or_else(not_found)
    }

    fn scoring_error(&self, source: ScoringError) -> RuntimeError {
        RuntimeError::Scoring {
            node: self.current.clone(),
            source,
        }
    }

    /// Runs a node: applies its effect and records it.
    fn execute(&mut self, id: &NodeId, score: Option<Score>) -> Result<(), RuntimeError> {
        let project = Arc::clone(&self.project);
        let node = project
            .node(id)
            .ok_or_else(|| RuntimeError::NodeNotFound(id.clone()))?;
        self.current = id.clone();
        let mut entry_conversant = None;
        let (kind, actor, cue, direction, detail) = match &node.kind {
            NodeKind::Start { name, effect } => {
                self.player_states = apply_effect(&self.player_states, &effect.player)
                    .map_err(|e| self.scoring_error(e))?;
                // the start's NPC effect seeds every NPC's initial state
                let npcs: Vec<ActorId> = self.npc_states.keys().cloned().collect();
                for npc in npcs {
                    let updated = apply_effect(&self.npc_states[&npc], &effect.npc)
                        .map_err(|e| self.scoring_error(e))?;
                    self.npc_states.insert(npc, updated);
                }
                (EntryKind::Start, None, None, None, Some(name.clone()))
            }
            NodeKind::Item(item) => {
                self.player_states = apply_effect(&self.player_states, &item.effect.player)
                    .map_err(|e| self.scoring_error(e))?;
                if let Some(npc) = project.npc_party(item) {
                    if let Some(states) = self.npc_states.get(npc) {
                        let updated =
                            apply_effect(states, &item.effect.npc).map_err(|e| self.scoring_error(e))?;
                        self.npc_states.insert(npc.clone(), updated);
                    }
                    self.conversant = Some(npc.clone());
                    entry_conversant = Some(npc.clone());
                }
                (
                    EntryKind::Line,
                    Some(item.actor.clone()),
                    item.cue.clone(),
                    item.direction.clone(),
                    None,
                )
            }
            NodeKind::Termination {
                direction,
                termination_value,
                ..
            } => (
                EntryKind::Termination,
                None,
                None,
                Some(direction.clone()),
                termination_value.clone(),
            ),
            NodeKind::Reference { target_start } => {
                (EntryKind::Reference, None, None, None, Some(target_start.clone()))
            }
            NodeKind::Subdialog { target_start } => {
                (EntryKind::Subdialog, None, None, None, Some(target_start.clone()))
            }
        };
        let conversant_states = entry_conversant
            .as_ref()
            .and_then(|c| self.npc_states.get(c))
            .cloned();
        self.transcript.push(TranscriptEntry {
            node: id.clone(),
            kind,
            actor,
            cue,
            direction,
            detail,
            score,
            player_states: self.player_states.clone(),
            conversant: entry_conversant,
            conversant_states,
        });
        Ok(())
    }

    /// Auto-advances until a menu or an ending. Executes at most `max_steps`
    /// nodes before giving up with [`RuntimeError::CycleOverflow`].
    fn settle(&mut self) -> Result<(), RuntimeError> {
        let mut steps = 0;
        loop {
            match self.next_move()? {
                Move::Rest(phase) => {
                    self.phase = phase;
                    return Ok(());
                }
                Move::Go(next, score) => {
                    if steps == self.options.max_steps {
                        return Err(RuntimeError::CycleOverflow {
                            max_steps: self.options.max_steps,
                        });
                    }
                    steps += 1;
                    self.execute(&next, score)?;
                }
            }
        }
    }

    fn start_id(&self, name: &str) -> Result<NodeId, RuntimeError> {
        self.project
            .start_node(name)
            .map(|n| n.id.clone())
            .ok_or_else(|| RuntimeError::StartNotFound(name.to_owned()))
    }

    fn next_move(&mut self) -> Result<Move, RuntimeError> {
        let project = Arc::clone(&self.project);
        let node = project
            .node(&self.current)
            .ok_or_else(|| RuntimeError::NodeNotFound(self.current.clone()))?;
        match &node.kind {
            NodeKind::Termination {
                direction,
                termination_value,
                ..
            } => {
                let Some(sub) = self.stack.pop() else {
                    return Ok(Move::Rest(Phase::Ended {
                        direction: direction.clone(),
                        termination_value: termination_value.clone(),
                    }));
                };
                let edge = match termination_value {
                    Some(value) => project
                        .outgoing_edges(&sub)
                        .find(|e| e.branch.as_deref() == Some(value.as_str())),
                    None => {
                        let mut unlabeled = project.outgoing_edges(&sub).filter(|e| e.branch.is_none());
                        match (unlabeled.next(), unlabeled.next()) {
                            (Some(e), None) => Some(e),
                            _ => None,
                        }
                    }
                };
                let edge = edge.ok_or_else(|| RuntimeError::UnmatchedBranch {
                    subdialog: sub.clone(),
                    value: termination_value.clone(),
                })?;
                Ok(Move::Go(edge.to.clone(), None))
            }
            NodeKind::Reference { target_start } => Ok(Move::Go(self.start_id(target_start)?, None)),
            NodeKind::Subdialog { target_start } => {
                let target = self.start_id(target_start)?;
                self.stack.push(self.current.clone());
                Ok(Move::Go(target, None))
            }
            NodeKind::Start { .. } | NodeKind::Item(_) => self.next_from_line(),
        }
    }

    fn next_from_line(&mut self) -> Result<Move, RuntimeError> {
        let project = Arc::clone(&self.project);
        let successors = project
            .successors(&self.current)
            .map_err(|_| RuntimeError::NodeNotFound(self.current.clone()))?;
        let offers_player_line = successors
            .iter()
            .any(|n| n.as_item().is_some_and(|i| project.is_player_item(i)));
        if offers_player_line {
            return Ok(Move::Rest(Phase::AwaitingChoice));
        }

        let np = project.state_declarations(Scope::Player).len();
        let nn = project.state_declarations(Scope::Npc).len();
        let zero = CauseWeights::zero(np, nn);
        let neutral_npc = StateVector::from_declarations(project.state_declarations(Scope::Npc));
        let npc_states_for = |item: &DialogItem| {
            project
                .npc_party(item)
                .and_then(|npc| self.npc_states.get(npc))
                .unwrap_or(&neutral_npc)
        };
        // Everything except start nodes competes; nodes without a cause
        // score as all-zero weights.
        let candidates: Vec<Candidate<'_>> = successors
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Item(item) => Some(Candidate {
                    node: &n.id,
                    cause: item.cause.as_ref().unwrap_or(&zero),
                    npc_states: npc_states_for(item),
                }),
                NodeKind::Termination { cause, .. } => Some(Candidate {
                    node: &n.id,
                    cause: cause.as_ref().unwrap_or(&zero),
                    npc_states: self
                        .conversant
                        .as_ref()
                        .and_then(|c| self.npc_states.get(c))
                        .unwrap_or(&neutral_npc),
                }),
                NodeKind::Reference { .. } | NodeKind::Subdialog { .. } => Some(Candidate {
                    node: &n.id,
                    cause: &zero,
                    npc_states: &neutral_npc,
                }),
                NodeKind::Start { .. } => None,
            })
            .collect();
        if candidates.is_empty() {
            return Err(RuntimeError::NoCandidates(self.current.clone()));
        }
        let selection = select_npc_response(&candidates, &self.player_states, &self.options.policy, &mut self.rng)
            .map_err(|e| RuntimeError::Scoring {
                node: self.current.clone(),
                source: e,
            })?;
        let is_line = matches!(project.node(&selection.node).map(|n| &n.kind), Some(NodeKind::Item(_)));
        Ok(Move::Go(selection.node, is_line.then_some(selection.score)))
    }
}

/// How a scripted choice names its option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Choice {
    /// 1-based menu position.
    Index(usize),
    Node(NodeId),
}

impl Choice {
    /// Digits are a menu index, anything else a node id.
    pub fn parse(token: &str) -> Self {
        let token = token.trim();
        match token.parse::<usize>() {
            Ok(i) => Choice::Index(i),
            Err(_) => Choice::Node(NodeId::new(token)),
        }
    }
}

/// A state edit applied just before the choice with the given 0-based index;
/// an index equal to the number of choices applies after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEdit {
    pub before_choice: usize,
    pub edit: StateEdit,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step}: {source}")]
pub struct ReplayError {
    /// 0 for the start, otherwise the 1-based choice number.
    pub step: usize,
    #[source]
    pub source: RuntimeError,
}

impl Session {
    /// Applies one scripted choice.
    pub fn apply_choice(&mut self, choice: &Choice) -> Result<NodeId, RuntimeError> {
        match choice {
            Choice::Index(i) => self.choose_index(*i),
            Choice::Node(id) => self.choose(id).map(|_| id.clone()),
        }
    }
}

/// Plays a conversation headlessly and returns the final session. Stops
/// early, without error, if the choices run out before the conversation ends.
pub fn replay_session(
    project: Arc<Project>,
    start_name: &str,
    choices: &[Choice],
    edits: &[TimedEdit],
    options: SessionOptions,
    overrides: &[StateEdit],
) -> Result<Session, ReplayError> {
    let mut session =
        Session::start(project, start_name, options, overrides).map_err(|source| ReplayError { step: 0, source })?;
    let apply_edits = |session: &mut Session, at: usize, step: usize| -> Result<(), ReplayError> {
        for timed in edits.iter().filter(|t| t.before_choice == at) {
            session
                .set_state(&timed.edit.target, &timed.edit.name, timed.edit.value)
                .map_err(|source| ReplayError { step, source })?;
        }
        Ok(())
    };
    for (i, choice) in choices.iter().enumerate() {
        apply_edits(&mut session, i, i + 1)?;
        session
            .apply_choice(choice)
            .map_err(|source| ReplayError { step: i + 1, source })?;
    }
    apply_edits(&mut session, choices.len(), choices.len())?;
    Ok(session)
}

/// Transcript of a headless run; see [`replay_session`].
pub fn replay(
    project: Arc<Project>,
    start_name: &str,
    choices: &[Choice],
    edits: &[TimedEdit],
    options: SessionOptions,
) -> Result<Vec<TranscriptEntry>, ReplayError> {
    replay_session(project, start_name, choices, edits, options, &[]).map(Session::into_transcript)
}

/// Four decimals, never printing a negative zero.
pub fn format_state_value(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_owned()
    } else {
        s
    }
}

fn write_states(out: &mut String, label: &str, states: &StateVector) {
    let parts: Vec<String> = states
        .iter()
        .map(|(n, v)| format!("{n}={}", format_state_value(v)))
        .collect();
    let _ = write!(out, "{label}({})", parts.join(", "));
}

/// Plain-text transcript, one two-line block per entry.
pub fn render_transcript(project: &Project, transcript: &[TranscriptEntry]) -> String {
    render_entries(project, transcript, 1)
}

/// Like [`render_transcript`], numbering the first entry `first_number`.
pub fn render_entries(project: &Project, transcript: &[TranscriptEntry], first_number: usize) -> String {
    let mut out = String::new();
    for (i, e) in transcript.iter().enumerate() {
        let _ = write!(out, "{:>3}. [{}] ", i + first_number, e.node);
        match e.kind {
            EntryKind::Start => {
                let _ = write!(out, "START {}", e.detail.as_deref().unwrap_or(""));
            }
            EntryKind::Line => {
                let speaker = e
                    .actor
                    .as_ref()
                    .map(|a| project.actor(a).map_or(a.as_str(), |x| x.display_name.as_str()))
                    .unwrap_or("?");
                let _ = write!(out, "{speaker}:");
                if let Some(d) = &e.direction {
                    let _ = write!(out, " [{d}]");
                }
                if let Some(c) = &e.cue {
                    let _ = write!(out, " {c}");
                }
                if let Some(s) = e.score {
                    let _ = write!(out, "  (score {})", format_state_value(s.value()));
                }
            }
            EntryKind::Termination => {
                let _ = write!(out, "END {}", e.direction.as_deref().unwrap_or(""));
                if let Some(v) = &e.detail {
                    let _ = write!(out, " => {v}");
                }
            }
            EntryKind::Reference => {
                let _ = write!(out, "REFERENCE -> {}", e.detail.as_deref().unwrap_or(""));
            }
            EntryKind::Subdialog => {
                let _ = write!(out, "SUBDIALOG -> {}", e.detail.as_deref().unwrap_or(""));
            }
        }
        out.push_str("\n     ");
        write_states(&mut out, "player", &e.player_states);
        if let (Some(c), Some(states)) = (&e.conversant, &e.conversant_states) {
            out.push(' ');
            write_states(&mut out, c.as_str(), states);
        }
        out.push('\n');
    }
    out
}

/// Final status line for a headless run.
pub fn render_phase(phase: &Phase) -> String {
    match phase {
        Phase::AwaitingChoice => "phase: awaiting-choice\n".to_owned(),
        Phase::Ended {
            direction,
            termination_value: Some(v),
        } => format!("phase: ended ({direction}) => {v}\n"),
        Phase::Ended { direction, .. } => format!("phase: ended ({direction})\n"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Actor, Edge, EffectWeights, StateDeclaration};

    /// Start -> "How are you doing" -> {well (+mood), lost (-mood)} -> end.
    fn mood_project() -> Arc<Project> {
        let mut b = Project::builder();
        b.actor(Actor::player("pc", "Player")).unwrap();
        b.actor(Actor::npc("amy", "Amy")).unwrap();
        b.state(StateDeclaration::new("confidence", Scope::Player, 0.0)).unwrap();
        b.state(StateDeclaration::new("mood", Scope::Npc, 0.0)).unwrap();
        b.page("main").unwrap();
        b.node(
            "main",
            "s",
            NodeKind::Start {
                name: "intro".into(),
                effect: EffectWeights::new(vec![0.4], vec![0.0]),
            },
        )
        .unwrap();
        b.node(
            "main",
            "ask",
            NodeKind::Item(
                DialogItem::new("pc")
                    .with_cue("How are you doing?")
                    .with_menu_label("Ask about her day")
                    .with_effect(EffectWeights::zero(1, 1)),
            ),
        )
        .unwrap();
        for (id, cue, w, e) in [("well", "Very well, thank you", 1.0, 0.3), ("lost", "Get lost, creep", -1.0, -0.6)] {
            b.node(
                "main",
                id,
                NodeKind::Item(
                    DialogItem::new("amy")
                        .with_cue(cue)
                        .with_cause(CauseWeights::new(0.0, vec![0.0], vec![w]))
                        .with_effect(EffectWeights::new(vec![e], vec![0.0])),
                ),
            )
            .unwrap();
        }
        b.node("main", "t", NodeKind::termination("scene over")).unwrap();
        b.edge(Edge::new("s", "ask", 0));
        b.edge(Edge::new("ask", "well", 0));
        b.edge(Edge::new("ask", "lost", 1));
        b.edge(Edge::new("well", "t", 0));
        b.edge(Edge::new("lost", "t", 0));
        Arc::new(b.build())
    }

    #[test]
    fn start_applies_effect_and_rests_on_menu() {
        let s = Session::start(mood_project(), "intro", SessionOptions::default(), &[]).unwrap();
        assert_eq!(s.player_states().get("confidence"), Some(0.4));
        assert_eq!(s.phase(), &Phase::AwaitingChoice);
        let menu = s.menu_options().unwrap();
        assert_eq!(menu.len(), 1);
        assert_eq!(menu[0].label, "Ask about her day");
    }

    #[test]
    fn unknown_start() {
        let err = Session::start(mood_project(), "nope", SessionOptions::default(), &[]).unwrap_err();
        assert_eq!(err, RuntimeError::StartNotFound("nope".into()));
    }

    #[test]
    fn mood_selects_reply() {
        for (mood, expected) in [(0.5, "well"), (-0.5, "lost"), (0.0, "well")] {
            let amy = StateTarget::Npc("amy".into());
            let overrides = [StateEdit::new(amy, "mood", mood)];
            let mut s = Session::start(mood_project(), "intro", SessionOptions::default(), &overrides).unwrap();
            s.choose(&"ask".into()).unwrap();
            let lines: Vec<&str> = s.transcript().iter().map(|e| e.node.as_str()).collect();
            assert_eq!(lines, ["s", "ask", expected, "t"], "mood {mood}");
            assert_eq!(
                s.phase(),
                &Phase::Ended {
                    direction: "scene over".into(),
                    termination_value: None
                }
            );
        }
    }

    #[test]
    fn reply_effect_updates_player() {
        let mut s = Session::start(mood_project(), "intro", SessionOptions::default(), &[]).unwrap();
        s.set_state(&StateTarget::Npc("amy".into()), "mood", -0.5).unwrap();
        s.choose(&"ask".into()).unwrap();
        // 0.4 - 0.6
        assert!((s.player_states().get("confidence").unwrap() - -0.2).abs() < 1e-12);
    }

    #[test]
    fn menu_at_end_is_invalid_phase() {
        let mut s = Session::start(mood_project(), "intro", SessionOptions::default(), &[]).unwrap();
        s.choose(&"ask".into()).unwrap();
        assert_eq!(s.menu_options().unwrap_err(), RuntimeError::InvalidPhase("ended"));
        assert!(s.choose(&"ask".into()).is_err());
    }

    #[test]
    fn invalid_choice_leaves_session_alone() {
        let mut s = Session::start(mood_project(), "intro", SessionOptions::default(), &[]).unwrap();
        let before = s.transcript().len();
        assert!(matches!(s.choose(&"well".into()), Err(RuntimeError::InvalidChoice(_))));
        assert!(matches!(s.choose_index(2), Err(RuntimeError::InvalidChoice(_))));
        assert_eq!(s.transcript().len(), before);
        assert_eq!(s.phase(), &Phase::AwaitingChoice);
    }

    #[test]
    fn set_state_clamps_and_keeps_menu() {
        let mut s = Session::start(mood_project(), "intro", SessionOptions::default(), &[]).unwrap();
        let menu = s.menu_options().unwrap();
        let amy = StateTarget::Npc("amy".into());
        assert_eq!(s.set_state(&amy, "mood", 0.5).unwrap(), 0.5);
        assert_eq!(s.set_state(&amy, "mood", 7.0).unwrap(), 1.0);
        assert_eq!(s.npc_state(&"amy".into()).unwrap().get("mood"), Some(1.0));
        assert_eq!(s.menu_options().unwrap(), menu);
        assert!(matches!(
            s.set_state(&StateTarget::Player, "mood", 0.0),
            Err(RuntimeError::StateNotFound { .. })
        ));
        assert!(matches!(
            s.set_state(&StateTarget::Npc("zed".into()), "mood", 0.0),
            Err(RuntimeError::StateNotFound { .. })
        ));
    }

    #[test]
    fn replay_is_deterministic_and_matches_interactive() {
        let policy = SelectionPolicy::softmax(0.7, 42).unwrap();
        let opts = SessionOptions::with_policy(policy);
        let a = replay(mood_project(), "intro", &[Choice::Index(1)], &[], opts).unwrap();
        let b = replay(mood_project(), "intro", &[Choice::Index(1)], &[], opts).unwrap();
        assert_eq!(a, b);
        let mut s = Session::start(mood_project(), "intro", opts, &[]).unwrap();
        s.choose_index(1).unwrap();
        assert_eq!(s.transcript(), a.as_slice());
    }

    #[test]
    fn replay_reports_failing_step() {
        let err = replay(
            mood_project(),
            "intro",
            &[Choice::Index(1), Choice::Index(1)],
            &[],
            SessionOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err.step, 2);
        assert_eq!(err.to_string(), "step 2: operation needs a pending player menu, session is ended");
    }

    #[test]
    fn empty_choices_keep_only_start() {
        let t = replay(mood_project(), "intro", &[], &[], SessionOptions::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].kind, EntryKind::Start);
    }

    #[test]
    fn format_never_negative_zero() {
        assert_eq!(format_state_value(-0.0), "0.0000");
        assert_eq!(format_state_value(-0.00001), "0.0000");
        assert_eq!(format_state_value(-0.25), "-0.2500");
    }
}
