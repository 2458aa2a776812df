//! JSON payloads. Field names are camelCase; the shapes are version 1 of the
//! simulator API.

use std::collections::BTreeMap;

use branchtalk::runtime::EntryKind;
use branchtalk::{color_class, ColorClass, NodeKind, Phase, Project, Scope, Session, StateVector, TranscriptEntry};
use serde::{Deserialize, Serialize};

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateValue {
    pub name: String,
    pub value: f64,
}

pub fn state_values(v: &StateVector) -> Vec<StateValue> {
    v.iter()
        .map(|(name, value)| StateValue {
            name: name.to_owned(),
            value,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeView {
    pub id: String,
    pub kind: String,
    pub page: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conversant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cue: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    /// Start name for starts; target start for references and subdialogs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination_value: Option<String>,
    pub color_class: String,
    pub intensity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeView {
    pub from: String,
    pub to: String,
    pub order: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorView {
    pub id: String,
    pub name: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatesView {
    pub player: Vec<StateValue>,
    pub npc: Vec<StateValue>,
}

/// `GET /project`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectView {
    pub api_version: u32,
    pub title: String,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
    pub actors: Vec<ActorView>,
    /// Declared states with their defaults.
    pub states: StatesView,
    pub starts: Vec<String>,
}

fn color_of(kind: &NodeKind) -> ColorClass {
    match kind {
        NodeKind::Item(item) => item.cause.as_ref().map(color_class),
        NodeKind::Termination { cause, .. } => cause.as_ref().map(color_class),
        _ => None,
    }
    .unwrap_or(ColorClass::Neutral)
}

impl ProjectView {
    pub fn new(project: &Project) -> Self {
        let nodes = project
            .nodes()
            .map(|n| {
                let color = color_of(&n.kind);
                let position = project
                    .page(&n.page)
                    .and_then(|p| p.layout.get(&n.id))
                    .map(|&(x, y)| Position { x, y });
                let mut view = NodeView {
                    id: n.id.to_string(),
                    kind: n.kind.tag().to_owned(),
                    page: n.page.clone(),
                    actor: None,
                    conversant: None,
                    label: None,
                    cue: None,
                    direction: None,
                    start_name: None,
                    target: None,
                    termination_value: None,
                    color_class: color.name().to_owned(),
                    intensity: color.intensity(),
                    position,
                };
                match &n.kind {
                    NodeKind::Start { name, .. } => view.start_name = Some(name.clone()),
                    NodeKind::Item(item) => {
                        view.actor = Some(item.actor.to_string());
                        view.conversant = item.conversant.as_ref().map(ToString::to_string);
                        view.label = item.menu_label.clone();
                        view.cue = item.cue.clone();
                        view.direction = item.direction.clone();
                    }
                    NodeKind::Termination {
                        direction,
                        termination_value,
                        ..
                    } => {
                        view.direction = Some(direction.clone());
                        view.termination_value = termination_value.clone();
                    }
                    NodeKind::Reference { target_start } | NodeKind::Subdialog { target_start } => {
                        view.target = Some(target_start.clone())
                    }
                }
                view
            })
            .collect();
        let edges = project
            .edges()
            .iter()
            .map(|e| EdgeView {
                from: e.from.to_string(),
                to: e.to.to_string(),
                order: e.order,
                branch_label: e.branch.clone(),
            })
            .collect();
        let actors = project
            .actors()
            .map(|a| ActorView {
                id: a.id.to_string(),
                name: a.display_name.clone(),
                kind: a.kind.as_str().to_owned(),
                color: a.color.clone(),
            })
            .collect();
        let decls = |scope| {
            project
                .state_declarations(scope)
                .iter()
                .map(|d| StateValue {
                    name: d.name.clone(),
                    value: d.default,
                })
                .collect()
        };
        ProjectView {
            api_version: API_VERSION,
            title: project.metadata().title.clone(),
            nodes,
            edges,
            actors,
            states: StatesView {
                player: decls(Scope::Player),
                npc: decls(Scope::Npc),
            },
            starts: project.start_names().map(str::to_owned).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntryView {
    pub node_id: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cue: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub player_states: Vec<StateValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conversant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conversant_states: Option<Vec<StateValue>>,
}

impl From<&TranscriptEntry> for EntryView {
    fn from(e: &TranscriptEntry) -> Self {
        let kind = match e.kind {
            EntryKind::Start => "start",
            EntryKind::Line => "line",
            EntryKind::Termination => "termination",
            EntryKind::Reference => "reference",
            EntryKind::Subdialog => "subdialog",
        };
        EntryView {
            node_id: e.node.to_string(),
            kind: kind.to_owned(),
            actor: e.actor.as_ref().map(ToString::to_string),
            cue: e.cue.clone(),
            direction: e.direction.clone(),
            detail: e.detail.clone(),
            score: e.score.map(|s| s.0),
            player_states: state_values(&e.player_states),
            conversant: e.conversant.as_ref().map(ToString::to_string),
            conversant_states: e.conversant_states.as_ref().map(state_values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MenuView {
    pub node_id: String,
    pub label: String,
    pub order: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EndingView {
    pub direction: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination_value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversantView {
    pub id: String,
    pub states: Vec<StateValue>,
}

/// Everything about a session except its transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LiveView {
    /// `awaiting-choice` or `ended`.
    pub phase: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ending: Option<EndingView>,
    pub current_node: String,
    pub menu: Vec<MenuView>,
    pub player_states: Vec<StateValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conversant: Option<ConversantView>,
    pub npc_states: BTreeMap<String, Vec<StateValue>>,
    pub subdialog_depth: usize,
}

impl LiveView {
    pub fn new(session: &Session) -> Self {
        let ending = match session.phase() {
            Phase::Ended {
                direction,
                termination_value,
            } => Some(EndingView {
                direction: direction.clone(),
                termination_value: termination_value.clone(),
            }),
            Phase::AwaitingChoice => None,
        };
        let menu = session
            .menu_options()
            .unwrap_or_default()
            .into_iter()
            .map(|m| MenuView {
                node_id: m.node.to_string(),
                label: m.label,
                order: m.order,
            })
            .collect();
        let conversant = session.conversant().and_then(|id| {
            session.npc_state(id).map(|s| ConversantView {
                id: id.to_string(),
                states: state_values(s),
            })
        });
        LiveView {
            phase: session.phase().label().to_owned(),
            ending,
            current_node: session.current_node().to_string(),
            menu,
            player_states: state_values(session.player_states()),
            conversant,
            npc_states: session
                .npc_states()
                .iter()
                .map(|(id, s)| (id.to_string(), state_values(s)))
                .collect(),
            subdialog_depth: session.subdialog_depth(),
        }
    }
}

/// Full session state, returned by every session endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub session_id: String,
    /// Bumped on every accepted mutation.
    pub version: u64,
    #[serde(flatten)]
    pub live: LiveView,
    pub transcript: Vec<EntryView>,
}

/// Payload of one `delta` server-sent event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Delta {
    pub session_id: String,
    pub version: u64,
    /// `choose` or `state`.
    pub cause: String,
    #[serde(flatten)]
    pub live: LiveView,
    /// Transcript entries added by this mutation.
    pub new_entries: Vec<EntryView>,
    pub transcript_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateSession {
    pub start_name: String,
    /// `argmax` (default) or `softmax`.
    #[serde(default)]
    pub policy: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Created {
    pub session_id: String,
    pub snapshot: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChooseRequest {
    pub node_id: String,
}

/// `scope` is `player` or `npc`. An NPC edit goes to `actor` when given,
/// else to the current conversant, else to the only NPC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRequest {
    pub scope: String,
    #[serde(default)]
    pub actor: Option<String>,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
