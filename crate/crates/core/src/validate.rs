//! Structural validation of a [`Project`].
//!
//! Errors mark projects the runtime cannot play faithfully. Cycles and
//! unreachable nodes are legal graph shapes and only produce warnings.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::model::{in_range, ActorKind, CauseWeights, EffectWeights, NodeId, NodeKind, Project, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

/// Machine-readable reason for a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Code {
    NoPlayer,
    EmptyStateName,
    StateDefaultOutOfRange,
    UnknownActor,
    ItemWithoutContent,
    PlayerItemWithCause,
    NpcItemWithoutCause,
    MenuLabelOnNpcItem,
    MissingConversant,
    WeightOutOfRange,
    WeightDimensionMismatch,
    EmptyStartName,
    DuplicateStartName,
    StartHasIncoming,
    TerminalHasOutgoing,
    DanglingEdge,
    DanglingTarget,
    DuplicateEdgeOrder,
    BranchOnNonSubdialog,
    MixedSuccessors,
    DeadEnd,
    Unreachable,
    Cycle,
    /// Produced by the script importer.
    ActorCreated,
}

impl Code {
    pub fn severity(self) -> Severity {
        use Code::*;
        match self {
            NoPlayer | MenuLabelOnNpcItem | MixedSuccessors | DeadEnd | Unreachable | Cycle => Severity::Warning,
            ActorCreated => Severity::Info,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub node: Option<NodeId>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: Code, node: Option<NodeId>, message: impl Into<String>) -> Self {
        Self {
            severity: code.severity(),
            code,
            node,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Some(id) => write!(f, "{}: node `{}`: {}", self.severity, id, self.message),
            None => write!(f, "{}: {}", self.severity, self.message),
        }
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}

struct Checker<'a> {
    project: &'a Project,
    out: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn push(&mut self, code: Code, node: Option<&NodeId>, message: impl Into<String>) {
        self.out.push(Diagnostic::new(code, node.cloned(), message));
    }

    fn weights(&mut self, node: &NodeId, what: &str, general: Option<f64>, player: &[f64], npc: &[f64]) {
        let np = self.project.state_declarations(Scope::Player).len();
        let nn = self.project.state_declarations(Scope::Npc).len();
        if player.len() != np || npc.len() != nn {
            self.push(
                Code::WeightDimensionMismatch,
                Some(node),
                format!(
                    "{what} has {}/{} player/npc weights, project declares {np}/{nn} states",
                    player.len(),
                    npc.len()
                ),
            );
        }
        let bad = general
            .into_iter()
            .chain(player.iter().copied())
            .chain(npc.iter().copied())
            .find(|w| !in_range(*w));
        if let Some(w) = bad {
            self.push(
                Code::WeightOutOfRange,
                Some(node),
                format!("{what} weight {w} outside [-1, 1]"),
            );
        }
    }

    fn cause(&mut self, node: &NodeId, cause: &CauseWeights) {
        self.weights(node, "cause", Some(cause.general), &cause.player, &cause.npc);
    }

    fn effect(&mut self, node: &NodeId, effect: &EffectWeights) {
        self.weights(node, "effect", None, &effect.player, &effect.npc);
    }
}

/// Checks every structural invariant of `project`. An empty result means the
/// project is fully valid.
pub fn validate(project: &Project) -> Vec<Diagnostic> {
    let mut c = Checker {
        project,
        out: Vec::new(),
    };

    if project.players().next().is_none() {
        c.push(Code::NoPlayer, None, "project has no player actor");
    }
    for scope in [Scope::Player, Scope::Npc] {
        for decl in project.state_declarations(scope) {
            if decl.name.trim().is_empty() {
                c.push(Code::EmptyStateName, None, format!("{scope} state with empty name"));
            }
            if !in_range(decl.default) {
                c.push(
                    Code::StateDefaultOutOfRange,
                    None,
                    format!("{scope} state `{}` default {} outside [-1, 1]", decl.name, decl.default),
                );
            }
        }
    }

    let npc_count = project.npcs().count();
    let mut start_names: BTreeMap<&str, Vec<&NodeId>> = BTreeMap::new();

    for node in project.nodes() {
        let id = &node.id;
        match &node.kind {
            NodeKind::Start { name, effect } => {
                if name.trim().is_empty() {
                    c.push(Code::EmptyStartName, Some(id), "start node has an empty name");
                }
                start_names.entry(name.as_str()).or_default().push(id);
                c.effect(id, effect);
            }
            NodeKind::Item(item) => {
                let actor = project.actor(&item.actor);
                if actor.is_none() {
                    c.push(Code::UnknownActor, Some(id), format!("unknown actor `{}`", item.actor));
                }
                if item.cue.is_none() && item.direction.is_none() {
                    c.push(Code::ItemWithoutContent, Some(id), "dialog item has neither cue nor direction");
                }
                let is_player = actor.is_some_and(|a| a.kind == ActorKind::Player);
                let is_npc = actor.is_some_and(|a| a.kind == ActorKind::Npc);
                match (&item.cause, is_player, is_npc) {
                    (Some(_), true, _) => {
                        c.push(Code::PlayerItemWithCause, Some(id), "player line carries cause weights")
                    }
                    (None, _, true) => c.push(Code::NpcItemWithoutCause, Some(id), "NPC line has no cause weights"),
                    _ => {}
                }
                if is_npc && item.menu_label.is_some() {
                    c.push(Code::MenuLabelOnNpcItem, Some(id), "menu label on an NPC line is never shown");
                }
                if let Some(conv) = &item.conversant {
                    if project.actor(conv).is_none() {
                        c.push(Code::UnknownActor, Some(id), format!("unknown conversant `{conv}`"));
                    }
                }
                if is_player && npc_count > 0 && project.npc_party(item).is_none() {
                    c.push(
                        Code::MissingConversant,
                        Some(id),
                        "player line needs an NPC conversant when the project has several NPCs",
                    );
                }
                if let Some(cause) = &item.cause {
                    c.cause(id, cause);
                }
                c.effect(id, &item.effect);
            }
            NodeKind::Termination { cause, .. } => {
                if let Some(cause) = cause {
                    c.cause(id, cause);
                }
            }
            NodeKind::Reference { target_start } | NodeKind::Subdialog { target_start } => {
                if project.start_node(target_start).is_none() {
                    c.push(
                        Code::DanglingTarget,
                        Some(id),
                        format!("{} targets unknown start `{target_start}`", node.kind.tag()),
                    );
                }
            }
        }
    }

    for (name, ids) in &start_names {
        if ids.len() > 1 {
            for id in &ids[1..] {
                c.push(Code::DuplicateStartName, Some(id), format!("start name `{name}` already used"));
            }
        }
    }

    let mut seen_orders: HashSet<(&NodeId, i64)> = HashSet::new();
    for edge in project.edges() {
        let from = project.node(&edge.from);
        let to = project.node(&edge.to);
        if from.is_none() {
            c.push(Code::DanglingEdge, Some(&edge.from), format!("edge from unknown node `{}`", edge.from));
        }
        if to.is_none() {
            c.push(
                Code::DanglingEdge,
                from.map(|n| &n.id),
                format!("edge from `{}` to unknown node `{}`", edge.from, edge.to),
            );
        }
        if !seen_orders.insert((&edge.from, edge.order)) {
            c.push(
                Code::DuplicateEdgeOrder,
                Some(&edge.from),
                format!("two outgoing edges share order {}", edge.order),
            );
        }
        if let Some(from) = from {
            match from.kind {
                NodeKind::Termination { .. } | NodeKind::Reference { .. } => c.push(
                    Code::TerminalHasOutgoing,
                    Some(&from.id),
                    format!("{} node cannot have outgoing edges", from.kind.tag()),
                ),
                NodeKind::Subdialog { .. } => {}
                _ if edge.branch.is_some() => c.push(
                    Code::BranchOnNonSubdialog,
                    Some(&from.id),
                    "branch label on an edge that does not leave a subdialog node",
                ),
                _ => {}
            }
        }
        if let Some(to) = to {
            if matches!(to.kind, NodeKind::Start { .. }) {
                c.push(Code::StartHasIncoming, Some(&to.id), format!("start node has incoming edge from `{}`", edge.from));
            }
        }
    }

    for node in project.nodes() {
        let succ = project.successors(&node.id).unwrap_or_default();
        let players = succ
            .iter()
            .filter(|n| n.as_item().is_some_and(|i| project.is_player_item(i)))
            .count();
        if players > 0 && players < succ.len() {
            c.push(
                Code::MixedSuccessors,
                Some(&node.id),
                "player and non-player successors mixed; only player lines are offered",
            );
        }
        let needs_successor = matches!(
            node.kind,
            NodeKind::Start { .. } | NodeKind::Item(_) | NodeKind::Subdialog { .. }
        );
        if needs_successor && succ.is_empty() {
            c.push(Code::DeadEnd, Some(&node.id), "node has no outgoing edges and is not an ending");
        }
    }

    reachability(&mut c);
    cycles(&mut c);
    c.out
}

/// Nodes not reachable from any start, following edges and jump targets.
fn reachability(c: &mut Checker<'_>) {
    let project = c.project;
    let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
    let mut queue: VecDeque<&NodeId> = project
        .nodes()
        .filter(|n| n.start_name().is_some())
        .map(|n| &n.id)
        .collect();
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id) {
            continue;
        }
        for e in project.outgoing_edges(id) {
            if project.node(&e.to).is_some() {
                queue.push_back(&e.to);
            }
        }
        if let Some(node) = project.node(id) {
            if let NodeKind::Reference { target_start } | NodeKind::Subdialog { target_start } = &node.kind {
                if let Some(start) = project.start_node(target_start) {
                    queue.push_back(&start.id);
                }
            }
        }
    }
    let unreachable: Vec<NodeId> = project
        .nodes()
        .filter(|n| !seen.contains(&n.id))
        .map(|n| n.id.clone())
        .collect();
    for id in unreachable {
        c.push(Code::Unreachable, Some(&id), "node is not reachable from any start");
    }
}

/// One warning per strongly connected component that contains a cycle.
fn cycles(c: &mut Checker<'_>) {
    let project = c.project;
    let mut graph = DiGraph::<&NodeId, ()>::new();
    let mut index = BTreeMap::new();
    for node in project.nodes() {
        index.insert(&node.id, graph.add_node(&node.id));
    }
    for e in project.edges() {
        if let (Some(&a), Some(&b)) = (index.get(&e.from), index.get(&e.to)) {
            graph.add_edge(a, b, ());
        }
    }
    let mut found = Vec::new();
    for scc in tarjan_scc(&graph) {
        let cyclic = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        if cyclic {
            let mut members: Vec<&NodeId> = scc.iter().map(|i| graph[*i]).collect();
            members.sort();
            found.push(members);
        }
    }
    found.sort();
    for members in found {
        let names: Vec<&str> = members.iter().map(|m| m.as_str()).collect();
        c.push(
            Code::Cycle,
            Some(members[0]),
            format!("cycle through {}", names.join(" -> ")),
        );
    }
}
