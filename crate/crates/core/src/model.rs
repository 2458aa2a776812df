//! Domain types for a dialog project: actors, state declarations, pages and
//! the directed dialog graph.
//!
//! A [`Project`] is immutable once built. All construction goes through
//! [`ProjectBuilder`], which rejects things that cannot be represented at all
//! (duplicate ids, nodes on unknown pages). Everything else, including weight
//! ranges and dangling references, is reported by [`crate::validate`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest value any state, cause weight or effect weight may take.
pub const STATE_MIN: f64 = -1.0;
/// Highest value any state, cause weight or effect weight may take.
pub const STATE_MAX: f64 = 1.0;

pub(crate) fn clamp_state(value: f64) -> f64 {
    // NaN has no meaningful position in the range; treat it as neutral.
    if value.is_nan() {
        return 0.0;
    }
    value.clamp(STATE_MIN, STATE_MAX)
}

pub(crate) fn in_range(value: f64) -> bool {
    (STATE_MIN..=STATE_MAX).contains(&value)
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a node in the dialog graph.
    NodeId
);
string_id!(
    /// Identifier of an actor (player or NPC).
    ActorId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Player,
    Npc,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Player => "player",
            Scope::Npc => "npc",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDeclaration {
    pub name: String,
    pub scope: Scope,
    pub default: f64,
}

impl StateDeclaration {
    pub fn new(name: impl Into<String>, scope: Scope, default: f64) -> Self {
        Self {
            name: name.into(),
            scope,
            default,
        }
    }
}

/// Named, ordered state values, each kept inside `[-1, 1]`.
///
/// Ordering follows the declaration list, so the values can be used directly
/// as a vector in inner products with cause weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl StateVector {
    /// Builds a vector initialised to the declared defaults (clamped).
    pub fn from_declarations(decls: &[StateDeclaration]) -> Self {
        Self {
            names: decls.iter().map(|d| d.name.clone()).collect(),
            values: decls.iter().map(|d| clamp_state(d.default)).collect(),
        }
    }

    /// Builds a vector from explicit pairs. Values are clamped into range.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        let (names, values) = pairs
            .into_iter()
            .map(|(n, v)| (n.into(), clamp_state(v)))
            .unzip();
        Self { names, values }
    }

    /// Unnamed vector, states are called `s0`, `s1`, ...
    pub fn from_values(values: &[f64]) -> Self {
        Self::from_pairs(values.iter().enumerate().map(|(i, v)| (format!("s{i}"), *v)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    /// Sets a state, clamping into `[-1, 1]`. Returns the stored value, or
    /// `None` if the state does not exist.
    pub fn set(&mut self, name: &str, value: f64) -> Option<f64> {
        let i = self.index_of(name)?;
        self.values[i] = clamp_state(value);
        Some(self.values[i])
    }

    /// Same vector shape with new values; callers guarantee the range.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.names.len());
        debug_assert!(values.iter().all(|v| in_range(*v)));
        Self {
            names: self.names.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Player,
    Npc,
}

impl ActorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActorKind::Player => "player",
            ActorKind::Npc => "npc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub display_name: String,
    pub kind: ActorKind,
    pub attributes: BTreeMap<String, String>,
    /// Render hint for cue bars, e.g. `#c03030`.
    pub color: Option<String>,
}

impl Actor {
    pub fn new(id: impl Into<ActorId>, display_name: impl Into<String>, kind: ActorKind) -> Self {
        Self {
            id: id.into(),
            display_name: display_name.into(),
            kind,
            attributes: BTreeMap::new(),
            color: None,
        }
    }

    pub fn player(id: impl Into<ActorId>, display_name: impl Into<String>) -> Self {
        Self::new(id, display_name, ActorKind::Player)
    }

    pub fn npc(id: impl Into<ActorId>, display_name: impl Into<String>) -> Self {
        Self::new(id, display_name, ActorKind::Npc)
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn with_color(mut self, color: impl Into<String>) -> Self {
        self.color = Some(color.into());
        self
    }

    pub fn is_player(&self) -> bool {
        self.kind == ActorKind::Player
    }
}

/// Coefficients used to score an NPC line against the current states.
///
/// `player` and `npc` are positional, aligned with the project's player and
/// NPC state declarations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CauseWeights {
    pub general: f64,
    pub player: Vec<f64>,
    pub npc: Vec<f64>,
}

impl CauseWeights {
    pub fn new(general: f64, player: Vec<f64>, npc: Vec<f64>) -> Self {
        Self {
            general,
            player,
            npc,
        }
    }

    /// All-zero weights sized for the given declaration counts.
    pub fn zero(player_states: usize, npc_states: usize) -> Self {
        Self::new(0.0, vec![0.0; player_states], vec![0.0; npc_states])
    }

    /// General weight first, then player weights, then NPC weights.
    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.general)
            .chain(self.player.iter().copied())
            .chain(self.npc.iter().copied())
    }
}

/// Per-state increments applied when a line is spoken or a start is entered.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectWeights {
    pub player: Vec<f64>,
    pub npc: Vec<f64>,
}

impl EffectWeights {
    pub fn new(player: Vec<f64>, npc: Vec<f64>) -> Self {
        Self { player, npc }
    }

    pub fn zero(player_states: usize, npc_states: usize) -> Self {
        Self::new(vec![0.0; player_states], vec![0.0; npc_states])
    }

    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.player.iter().chain(self.npc.iter()).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetRole {
    Audio,
    LipSync,
    Other,
}

impl AssetRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AssetRole::Audio => "audio",
            AssetRole::LipSync => "lipsync",
            AssetRole::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "audio" => Some(AssetRole::Audio),
            "lipsync" => Some(AssetRole::LipSync),
            "other" => Some(AssetRole::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub role: AssetRole,
    pub path: String,
}

impl Asset {
    pub fn new(role: AssetRole, path: impl Into<String>) -> Self {
        Self {
            role,
            path: path.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogItem {
    pub actor: ActorId,
    /// Who a line is addressed to. Required on player lines when the project
    /// has more than one NPC; otherwise the single NPC is implied.
    pub conversant: Option<ActorId>,
    pub cue: Option<String>,
    pub direction: Option<String>,
    pub menu_label: Option<String>,
    /// Present exactly when the speaker is an NPC.
    pub cause: Option<CauseWeights>,
    pub effect: EffectWeights,
    pub assets: Vec<Asset>,
}

impl DialogItem {
    pub fn new(actor: impl Into<ActorId>) -> Self {
        Self {
            actor: actor.into(),
            conversant: None,
            cue: None,
            direction: None,
            menu_label: None,
            cause: None,
            effect: EffectWeights::default(),
            assets: Vec::new(),
        }
    }

    pub fn with_cue(mut self, cue: impl Into<String>) -> Self {
        self.cue = Some(cue.into());
        self
    }

    pub fn with_direction(mut self, direction: impl Into<String>) -> Self {
        self.direction = Some(direction.into());
        self
    }

    pub fn with_menu_label(mut self, label: impl Into<String>) -> Self {
        self.menu_label = Some(label.into());
        self
    }

    pub fn with_conversant(mut self, conversant: impl Into<ActorId>) -> Self {
        self.conversant = Some(conversant.into());
        self
    }

    pub fn with_cause(mut self, cause: CauseWeights) -> Self {
        self.cause = Some(cause);
        self
    }

    pub fn with_effect(mut self, effect: EffectWeights) -> Self {
        self.effect = effect;
        self
    }

    pub fn with_asset(mut self, role: AssetRole, path: impl Into<String>) -> Self {
        self.assets.push(Asset::new(role, path));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeKind {
    Start {
        name: String,
        effect: EffectWeights,
    },
    Item(DialogItem),
    Termination {
        direction: String,
        termination_value: Option<String>,
        /// Optional cause so an ending can compete with NPC lines.
        cause: Option<CauseWeights>,
    },
    Reference {
        target_start: String,
    },
    Subdialog {
        target_start: String,
    },
}

impl NodeKind {
    pub fn start(name: impl Into<String>) -> Self {
        NodeKind::Start {
            name: name.into(),
            effect: EffectWeights::default(),
        }
    }

    pub fn termination(direction: impl Into<String>) -> Self {
        NodeKind::Termination {
            direction: direction.into(),
            termination_value: None,
            cause: None,
        }
    }

    pub fn termination_with_value(direction: impl Into<String>, value: impl Into<String>) -> Self {
        NodeKind::Termination {
            direction: direction.into(),
            termination_value: Some(value.into()),
            cause: None,
        }
    }

    pub fn reference(target: impl Into<String>) -> Self {
        NodeKind::Reference {
            target_start: target.into(),
        }
    }

    pub fn subdialog(target: impl Into<String>) -> Self {
        NodeKind::Subdialog {
            target_start: target.into(),
        }
    }

    /// Replaces empty weight vectors with zeros of the declared length, so
    /// `EffectWeights::default()` means "no effect" in any project.
    fn size_empty_weights(&mut self, player_states: usize, npc_states: usize) {
        fn fill(v: &mut Vec<f64>, n: usize) {
            if v.is_empty() {
                v.resize(n, 0.0);
            }
        }
        let effect = |e: &mut EffectWeights| {
            fill(&mut e.player, player_states);
            fill(&mut e.npc, npc_states);
        };
        let cause = |c: &mut CauseWeights| {
            fill(&mut c.player, player_states);
            fill(&mut c.npc, npc_states);
        };
        match self {
            NodeKind::Start { effect: e, .. } => effect(e),
            NodeKind::Item(item) => {
                effect(&mut item.effect);
                if let Some(c) = &mut item.cause {
                    cause(c);
                }
            }
            NodeKind::Termination { cause: Some(c), .. } => cause(c),
            _ => {}
        }
    }

    /// Short type tag, as used in the XML `type` attribute.
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Start { .. } => "start",
            NodeKind::Item(_) => "item",
            NodeKind::Termination { .. } => "termination",
            NodeKind::Reference { .. } => "reference",
            NodeKind::Subdialog { .. } => "subdialog",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub page: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn as_item(&self) -> Option<&DialogItem> {
        match &self.kind {
            NodeKind::Item(item) => Some(item),
            _ => None,
        }
    }

    pub fn start_name(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Start { name, .. } => Some(name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub order: i64,
    /// Only meaningful on edges leaving a subdialog node; matched against the
    /// termination value of the subdialog's ending.
    pub branch: Option<String>,
}

impl Edge {
    pub fn new(from: impl Into<NodeId>, to: impl Into<NodeId>, order: i64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            order,
            branch: None,
        }
    }

    pub fn with_branch(mut self, label: impl Into<String>) -> Self {
        self.branch = Some(label.into());
        self
    }
}

/// Organisational grouping of nodes. Has no runtime meaning.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Page {
    pub name: String,
    /// Optional viewer positions per node.
    pub layout: BTreeMap<NodeId, (f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub title: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate actor id `{0}`")]
    DuplicateActor(ActorId),
    #[error("duplicate {scope} state `{name}`")]
    DuplicateState { scope: Scope, name: String },
    #[error("duplicate page `{0}`")]
    DuplicatePage(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("unknown page `{0}`")]
    UnknownPage(String),
    #[error("layout entry for node `{node}` which is not on page `{page}`")]
    LayoutOutsidePage { page: String, node: NodeId },
    #[error("node `{0}` not found")]
    NodeNotFound(NodeId),
}

/// The complete authored artifact.
#[derive(Debug, Clone, Default)]
pub struct Project {
    metadata: Metadata,
    actors: BTreeMap<ActorId, Actor>,
    player_states: Vec<StateDeclaration>,
    npc_states: Vec<StateDeclaration>,
    pages: BTreeMap<String, Page>,
    nodes: BTreeMap<NodeId, Node>,
    /// Sorted by (from, order, to, branch).
    edges: Vec<Edge>,
    outgoing: HashMap<NodeId, Vec<usize>>,
    starts: HashMap<String, NodeId>,
}

impl PartialEq for Project {
    fn eq(&self, other: &Self) -> bool {
        self.metadata == other.metadata
            && self.actors == other.actors
            && self.player_states == other.player_states
            && self.npc_states == other.npc_states
            && self.pages == other.pages
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl Project {
    pub fn builder() -> ProjectBuilder {
        ProjectBuilder::default()
    }

    /// Starts a builder seeded with this project's contents.
    pub fn to_builder(&self) -> ProjectBuilder {
        ProjectBuilder {
            metadata: self.metadata.clone(),
            actors: self.actors.clone(),
            player_states: self.player_states.clone(),
            npc_states: self.npc_states.clone(),
            pages: self.pages.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn actors(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values()
    }

    pub fn actor(&self, id: &ActorId) -> Option<&Actor> {
        self.actors.get(id)
    }

    pub fn npcs(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values().filter(|a| a.kind == ActorKind::Npc)
    }

    pub fn players(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values().filter(|a| a.kind == ActorKind::Player)
    }

    pub fn state_declarations(&self, scope: Scope) -> &[StateDeclaration] {
        match scope {
            Scope::Player => &self.player_states,
            Scope::Npc => &self.npc_states,
        }
    }

    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.pages.values()
    }

    pub fn page(&self, name: &str) -> Option<&Page> {
        self.pages.get(name)
    }

    /// Node ids that belong to a page, in id order.
    pub fn page_nodes<'a>(&'a self, page: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.nodes.values().filter(move |n| n.page == page)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing edges of a node, sorted by ascending order.
    pub fn outgoing_edges<'a>(&'a self, id: &NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.outgoing
            .get(id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
            .iter()
            .map(move |&i| &self.edges[i])
    }

    /// Nodes reachable by one edge, sorted by edge order ascending.
    pub fn successors(&self, id: &NodeId) -> Result<Vec<&Node>, ModelError> {
        if !self.nodes.contains_key(id) {
            return Err(ModelError::NodeNotFound(id.clone()));
        }
        Ok(self
            .outgoing_edges(id)
            .filter_map(|e| self.nodes.get(&e.to))
            .collect())
    }

    /// Start node with the given name. When several share a name the one with
    /// the lowest id wins; validation reports the duplicate.
    pub fn start_node(&self, name: &str) -> Option<&Node> {
        self.starts.get(name).and_then(|id| self.nodes.get(id))
    }

    pub fn start_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.values().filter_map(Node::start_name)
    }

    /// The NPC whose state vector a line reads and writes: an explicit NPC
    /// conversant, else the speaker if it is an NPC, else the only NPC.
    pub fn npc_party(&self, item: &DialogItem) -> Option<&ActorId> {
        if let Some(c) = &item.conversant {
            if let Some(a) = self.actors.get(c) {
                if a.kind == ActorKind::Npc {
                    return Some(&a.id);
                }
            }
        }
        if let Some(a) = self.actors.get(&item.actor) {
            if a.kind == ActorKind::Npc {
                return Some(&a.id);
            }
        }
        let mut npcs = self.npcs();
        match (npcs.next(), npcs.next()) {
            (Some(only), None) => Some(&only.id),
            _ => None,
        }
    }

    pub fn is_player_item(&self, item: &DialogItem) -> bool {
        self.actors
            .get(&item.actor)
            .is_some_and(|a| a.kind == ActorKind::Player)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProjectBuilder {
    metadata: Metadata,
    actors: BTreeMap<ActorId, Actor>,
    player_states: Vec<StateDeclaration>,
    npc_states: Vec<StateDeclaration>,
    pages: BTreeMap<String, Page>,
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
}

impl ProjectBuilder {
    pub fn metadata(&mut self, title: impl Into<String>, version: impl Into<String>) -> &mut Self {
        self.metadata = Metadata {
            title: title.into(),
            version: version.into(),
        };
        self
    }

    pub fn actor(&mut self, actor: Actor) -> Result<&mut Self, ModelError> {
        if self.actors.contains_key(&actor.id) {
            return Err(ModelError::DuplicateActor(actor.id));
        }
        self.actors.insert(actor.id.clone(), actor);
        Ok(self)
    }

    pub fn has_actor(&self, id: &ActorId) -> bool {
        self.actors.contains_key(id)
    }

    pub fn actors(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values()
    }

    pub fn state(&mut self, decl: StateDeclaration) -> Result<&mut Self, ModelError> {
        let list = match decl.scope {
            Scope::Player => &mut self.player_states,
            Scope::Npc => &mut self.npc_states,
        };
        if list.iter().any(|d| d.name == decl.name) {
            return Err(ModelError::DuplicateState {
                scope: decl.scope,
                name: decl.name,
            });
        }
        list.push(decl);
        Ok(self)
    }

    pub fn state_count(&self, scope: Scope) -> usize {
        match scope {
            Scope::Player => self.player_states.len(),
            Scope::Npc => self.npc_states.len(),
        }
    }

    pub fn page(&mut self, name: impl Into<String>) -> Result<&mut Self, ModelError> {
        let name = name.into();
        if self.pages.contains_key(&name) {
            return Err(ModelError::DuplicatePage(name));
        }
        self.pages.insert(
            name.clone(),
            Page {
                name,
                layout: BTreeMap::new(),
            },
        );
        Ok(self)
    }

    pub fn has_page(&self, name: &str) -> bool {
        self.pages.contains_key(name)
    }

    pub fn node(
        &mut self,
        page: &str,
        id: impl Into<NodeId>,
        kind: NodeKind,
    ) -> Result<&mut Self, ModelError> {
        let id = id.into();
        if !self.pages.contains_key(page) {
            return Err(ModelError::UnknownPage(page.to_owned()));
        }
        if self.nodes.contains_key(&id) {
            return Err(ModelError::DuplicateNode(id));
        }
        self.nodes.insert(
            id.clone(),
            Node {
                id,
                page: page.to_owned(),
                kind,
            },
        );
        Ok(self)
    }

    pub fn has_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Mutable access to an existing node's kind, for post-hoc edits.
    pub fn node_kind_mut(&mut self, id: &NodeId) -> Option<&mut NodeKind> {
        self.nodes.get_mut(id).map(|n| &mut n.kind)
    }

    pub fn remove_node(&mut self, id: &NodeId) -> Option<Node> {
        let node = self.nodes.remove(id)?;
        if let Some(page) = self.pages.get_mut(&node.page) {
            page.layout.remove(id);
        }
        Some(node)
    }

    pub fn layout(&mut self, page: &str, node: &NodeId, x: f64, y: f64) -> Result<&mut Self, ModelError> {
        let on_page = self.nodes.get(node).is_some_and(|n| n.page == page);
        let p = self
            .pages
            .get_mut(page)
            .ok_or_else(|| ModelError::UnknownPage(page.to_owned()))?;
        if !on_page {
            return Err(ModelError::LayoutOutsidePage {
                page: page.to_owned(),
                node: node.clone(),
            });
        }
        p.layout.insert(node.clone(), (x, y));
        Ok(self)
    }

    /// Edges are not checked here; dangling endpoints are a validation error.
    pub fn edge(&mut self, edge: Edge) -> &mut Self {
        self.edges.push(edge);
        self
    }

    pub fn remove_edges_from(&mut self, id: &NodeId) {
        self.edges.retain(|e| &e.from != id);
    }

    pub fn build(&self) -> Project {
        let mut edges = self.edges.clone();
        edges.sort_by(|a, b| {
            (&a.from, a.order, &a.to, &a.branch).cmp(&(&b.from, b.order, &b.to, &b.branch))
        });
        let mut outgoing: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            outgoing.entry(e.from.clone()).or_default().push(i);
        }
        let mut starts = HashMap::new();
        for node in self.nodes.values() {
            if let Some(name) = node.start_name() {
                starts.entry(name.to_owned()).or_insert_with(|| node.id.clone());
            }
        }
        // Pages drop layout entries for nodes that moved or vanished.
        let mut pages = self.pages.clone();
        for page in pages.values_mut() {
            let members: BTreeSet<&NodeId> = self
                .nodes
                .values()
                .filter(|n| n.page == page.name)
                .map(|n| &n.id)
                .collect();
            page.layout.retain(|id, _| members.contains(id));
        }
        let mut nodes = self.nodes.clone();
        let (np, nn) = (self.player_states.len(), self.npc_states.len());
        for node in nodes.values_mut() {
            node.kind.size_empty_weights(np, nn);
        }
        Project {
            metadata: self.metadata.clone(),
            actors: self.actors.clone(),
            player_states: self.player_states.clone(),
            npc_states: self.npc_states.clone(),
            pages,
            nodes,
            edges,
            outgoing,
            starts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fan_out() -> Project {
        let mut b = Project::builder();
        b.actor(Actor::player("pc", "Player")).unwrap();
        b.actor(Actor::npc("amy", "Amy")).unwrap();
        b.page("main").unwrap();
        b.node("main", "s", NodeKind::start("intro")).unwrap();
        for id in ["a", "b", "c"] {
            b.node("main", id, NodeKind::termination(id)).unwrap();
        }
        b.edge(Edge::new("s", "a", 2));
        b.edge(Edge::new("s", "b", 0));
        b.edge(Edge::new("s", "c", 1));
        b.build()
    }

    #[test]
    fn successors_sorted_by_order() {
        let p = fan_out();
        let ids: Vec<_> = p
            .successors(&"s".into())
            .unwrap()
            .iter()
            .map(|n| n.id.as_str().to_owned())
            .collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn successors_of_leaf_is_empty() {
        let p = fan_out();
        assert!(p.successors(&"a".into()).unwrap().is_empty());
    }

    #[test]
    fn successors_unknown_node() {
        let p = fan_out();
        assert_eq!(
            p.successors(&"zz".into()).unwrap_err(),
            ModelError::NodeNotFound("zz".into())
        );
    }

    #[test]
    fn successors_is_pure() {
        let p = fan_out();
        let first: Vec<_> = p.successors(&"s".into()).unwrap().into_iter().cloned().collect();
        let second: Vec<_> = p.successors(&"s".into()).unwrap().into_iter().cloned().collect();
        assert_eq!(first, second);
    }

    #[test]
    fn builder_rejects_duplicates() {
        let mut b = Project::builder();
        b.actor(Actor::player("pc", "P")).unwrap();
        assert!(matches!(
            b.actor(Actor::npc("pc", "Q")),
            Err(ModelError::DuplicateActor(_))
        ));
        b.state(StateDeclaration::new("mood", Scope::Npc, 0.0)).unwrap();
        assert!(b.state(StateDeclaration::new("mood", Scope::Npc, 0.0)).is_err());
        // same name in the other scope is fine
        b.state(StateDeclaration::new("mood", Scope::Player, 0.0)).unwrap();
        assert!(matches!(
            b.node("nope", "x", NodeKind::start("s")),
            Err(ModelError::UnknownPage(_))
        ));
    }

    #[test]
    fn state_vector_clamps() {
        let mut v = StateVector::from_pairs([("mood", 0.0)]);
        assert_eq!(v.set("mood", 7.0), Some(1.0));
        assert_eq!(v.get("mood"), Some(1.0));
        assert_eq!(v.set("mood", -3.0), Some(-1.0));
        assert_eq!(v.set("nope", 0.2), None);
        let d = StateVector::from_declarations(&[StateDeclaration::new("x", Scope::Player, 4.0)]);
        assert_eq!(d.values(), &[1.0]);
    }

    #[test]
    fn npc_party_resolution() {
        let p = fan_out();
        let player_line = DialogItem::new("pc").with_cue("hi");
        assert_eq!(p.npc_party(&player_line).map(ActorId::as_str), Some("amy"));
        let npc_line = DialogItem::new("amy").with_cue("hello");
        assert_eq!(p.npc_party(&npc_line).map(ActorId::as_str), Some("amy"));
    }
}
