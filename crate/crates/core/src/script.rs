//! Screenplay-style script import.
//!
//! Accepted input is a linear script of actor-labelled lines, where a leading
//! `[...]` holds the stage direction:
//!
//! ```text
//! Jack: There we go. A little something to put us in the mood.
//! [starts some music]
//! Jack: [Shows some of his legs] Okay first thing you gotta do is show a little leg.
//! ```
//!
//! Only square brackets are special; round parentheses stay in the cue text.
//! The importer produces a straight chain `Start -> lines... -> Termination`
//! that authors then branch by hand.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    Actor, ActorId, ActorKind, CauseWeights, DialogItem, Edge, ModelError, NodeId, NodeKind, Project,
};
use crate::validate::{Code, Diagnostic};

/// Direction given to the termination node of every imported graph.
pub const IMPORT_END_DIRECTION: &str = "imported script end";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: stage direction before any speaker")]
    OrphanDirection { line: usize },
    #[error("page `{0}` already exists")]
    PageExists(String),
    #[error("start `{0}` already exists")]
    StartExists(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("`{0}` is not a linear imported graph")]
    NotLinear(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Cue,
    StandaloneDirection,
    Blank,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptLine {
    pub kind: LineKind,
    pub actor: Option<String>,
    pub direction: Option<String>,
    pub cue: Option<String>,
    /// 1-based line number in the source text.
    pub line_number: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> ScriptError {
    ScriptError::Parse {
        line,
        message: message.into(),
    }
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_owned())
}

/// Splits `[direction] rest`; `text` must start with `[`.
fn split_direction(text: &str, line: usize) -> Result<(Option<String>, &str), ScriptError> {
    let close = text
        .find(']')
        .ok_or_else(|| parse_err(line, "unclosed `[`"))?;
    Ok((non_empty(&text[1..close]), &text[close + 1..]))
}

fn check_brackets(text: &str, line: usize) -> Result<(), ScriptError> {
    let mut open = false;
    for ch in text.chars() {
        match ch {
            '[' if open => return Err(parse_err(line, "nested `[`")),
            '[' => open = true,
            ']' if !open => return Err(parse_err(line, "`]` without matching `[`")),
            ']' => open = false,
            _ => {}
        }
    }
    if open {
        return Err(parse_err(line, "unclosed `[`"));
    }
    Ok(())
}

/// Parses script text into classified lines. Continuation lines (no colon,
/// no brackets) are folded into the preceding cue.
pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ScriptError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out: Vec<ScriptLine> = Vec::new();
    // whether the previous physical line was a cue that can be continued
    let mut open_cue = false;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            out.push(ScriptLine {
                kind: LineKind::Blank,
                actor: None,
                direction: None,
                cue: None,
                line_number: n,
            });
            open_cue = false;
            continue;
        }
        check_brackets(line, n)?;
        if line.starts_with('[') {
            let (direction, rest) = split_direction(line, n)?;
            if !rest.trim().is_empty() {
                return Err(parse_err(n, "text after a stage direction needs an `Actor:` label"));
            }
            let direction = direction.ok_or_else(|| parse_err(n, "empty stage direction"))?;
            out.push(ScriptLine {
                kind: LineKind::StandaloneDirection,
                actor: None,
                direction: Some(direction),
                cue: None,
                line_number: n,
            });
            open_cue = false;
            continue;
        }
        if let Some(colon) = line.find(':') {
            let actor = line[..colon].trim();
            if actor.is_empty() {
                return Err(parse_err(n, "missing actor name before `:`"));
            }
            if actor.contains('[') {
                return Err(parse_err(n, "stage direction inside an actor name"));
            }
            let rest = line[colon + 1..].trim();
            let (direction, cue) = if rest.starts_with('[') {
                let (d, r) = split_direction(rest, n)?;
                (d, non_empty(r))
            } else {
                (None, non_empty(rest))
            };
            out.push(ScriptLine {
                kind: LineKind::Cue,
                actor: Some(actor.to_owned()),
                direction,
                cue,
                line_number: n,
            });
            open_cue = true;
            continue;
        }
        if line.contains('[') {
            return Err(parse_err(n, "stage direction inside a continuation line"));
        }
        if !open_cue {
            return Err(parse_err(n, "expected `Actor: text`"));
        }
        let prev = out.last_mut().expect("open cue implies a previous line");
        prev.cue = Some(match prev.cue.take() {
            Some(c) => format!("{c} {line}"),
            None => line.to_owned(),
        });
    }
    if let Some(empty) = out
        .iter()
        .find(|l| l.kind == LineKind::Cue && l.cue.is_none() && l.direction.is_none())
    {
        return Err(parse_err(empty.line_number, "cue line has no text"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportOptions {
    pub page: String,
    pub start: String,
    /// Script names that denote player characters (case-insensitive).
    pub player_names: Vec<String>,
}

impl ImportOptions {
    pub fn new(page: impl Into<String>, start: impl Into<String>) -> Self {
        Self {
            page: page.into(),
            start: start.into(),
            player_names: Vec::new(),
        }
    }

    pub fn with_player(mut self, name: impl Into<String>) -> Self {
        self.player_names.push(name.into());
        self
    }
}

fn normalize(name: &str) -> String {
    name.trim().to_lowercase()
}

fn slug(name: &str) -> String {
    let mut s: String = name
        .trim()
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    let s = s.trim_matches('-').to_owned();
    if s.is_empty() {
        "x".to_owned()
    } else {
        s
    }
}

/// Builds a linear graph from parsed lines on a new page of `project`.
///
/// Unknown speakers become NPCs (or players, when listed in
/// `options.player_names`), each reported with an info diagnostic. All
/// cause and effect weights are zero.
pub fn build_graph(
    lines: &[ScriptLine],
    project: &Project,
    options: &ImportOptions,
) -> Result<(Project, Vec<Diagnostic>), ScriptError> {
    if project.page(&options.page).is_some() {
        return Err(ScriptError::PageExists(options.page.clone()));
    }
    if project.start_node(&options.start).is_some() {
        return Err(ScriptError::StartExists(options.start.clone()));
    }

    // (speaker, direction, cue, source line)
    let mut utterances: Vec<(String, Option<String>, Option<String>)> = Vec::new();
    let mut last_speaker: Option<String> = None;
    for line in lines {
        match line.kind {
            LineKind::Blank => {}
            LineKind::Cue => {
                let actor = line.actor.clone().unwrap_or_default();
                last_speaker = Some(actor.clone());
                utterances.push((actor, line.direction.clone(), line.cue.clone()));
            }
            LineKind::StandaloneDirection => {
                let speaker = last_speaker.clone().ok_or(ScriptError::OrphanDirection {
                    line: line.line_number,
                })?;
                utterances.push((speaker, line.direction.clone(), None));
            }
        }
    }

    let mut builder = project.to_builder();
    let mut diagnostics = Vec::new();
    let players: Vec<String> = options.player_names.iter().map(|n| normalize(n)).collect();

    // resolve speakers to actors, creating missing ones
    let mut by_name: BTreeMap<String, ActorId> = BTreeMap::new();
    for actor in project.actors() {
        by_name.entry(normalize(actor.id.as_str())).or_insert_with(|| actor.id.clone());
        by_name.entry(normalize(&actor.display_name)).or_insert_with(|| actor.id.clone());
    }
    let mut speaker_ids = Vec::with_capacity(utterances.len());
    for (speaker, _, _) in &utterances {
        let key = normalize(speaker);
        let id = match by_name.get(&key) {
            Some(id) => id.clone(),
            None => {
                let base = slug(speaker);
                let mut id = ActorId::new(base.clone());
                let mut k = 2;
                while builder.has_actor(&id) {
                    id = ActorId::new(format!("{base}-{k}"));
                    k += 1;
                }
                let kind = if players.contains(&key) {
                    ActorKind::Player
                } else {
                    ActorKind::Npc
                };
                builder.actor(Actor::new(id.clone(), speaker.trim(), kind))?;
                diagnostics.push(Diagnostic::new(
                    Code::ActorCreated,
                    None,
                    format!("created {} actor `{id}` for script name `{}`", kind.as_str(), speaker.trim()),
                ));
                by_name.insert(key, id.clone());
                id
            }
        };
        speaker_ids.push(id);
    }

    let kinds: BTreeMap<ActorId, ActorKind> = builder.actors().map(|a| (a.id.clone(), a.kind)).collect();
    let npc_count = kinds.values().filter(|k| **k == ActorKind::Npc).count();
    let is_npc = |id: &ActorId| kinds.get(id) == Some(&ActorKind::Npc);

    builder.page(options.page.clone())?;
    let prefix = {
        let base = slug(&options.page);
        let mut prefix = base.clone();
        let mut k = 2;
        while builder.has_node(&NodeId::new(format!("{prefix}.start"))) || builder.has_node(&NodeId::new(format!("{prefix}.end"))) || (1..=utterances.len()).any(|i| builder.has_node(&NodeId::new(format!("{prefix}.{i}")))) {
            prefix = format!("{base}-{k}");
            k += 1;
        }
        prefix
    };

    let start_id = NodeId::new(format!("{prefix}.start"));
    let end_id = NodeId::new(format!("{prefix}.end"));
    builder.node(&options.page, start_id.clone(), NodeKind::start(options.start.clone()))?;
    let mut chain = vec![start_id];
    for (i, ((_, direction, cue), actor)) in utterances.iter().zip(&speaker_ids).enumerate() {
        let mut item = DialogItem::new(actor.clone());
        item.direction = direction.clone();
        item.cue = cue.clone();
        if is_npc(actor) {
            item.cause = Some(CauseWeights::default());
        } else if npc_count > 1 {
            // address the nearest NPC speaker, looking ahead first
            let ahead = speaker_ids[i + 1..].iter().find(|a| is_npc(a));
            let behind = speaker_ids[..i].iter().rev().find(|a| is_npc(a));
            item.conversant = ahead.or(behind).cloned();
        }
        let id = NodeId::new(format!("{prefix}.{}", i + 1));
        builder.node(&options.page, id.clone(), NodeKind::Item(item))?;
        chain.push(id);
    }
    builder.node(&options.page, end_id.clone(), NodeKind::termination(IMPORT_END_DIRECTION))?;
    chain.push(end_id);

    for (i, pair) in chain.windows(2).enumerate() {
        builder.edge(Edge::new(pair[0].clone(), pair[1].clone(), 0));
        builder.layout(&options.page, &pair[0], 0.0, 100.0 * i as f64)?;
    }
    let last = chain.last().expect("chain has start and end");
    builder.layout(&options.page, last, 0.0, 100.0 * (chain.len() - 1) as f64)?;

    Ok((builder.build(), diagnostics))
}

/// Parses `text` and imports it; see [`parse_script`] and [`build_graph`].
pub fn import_script(
    text: &str,
    project: &Project,
    options: &ImportOptions,
) -> Result<(Project, Vec<Diagnostic>), ScriptError> {
    let lines = parse_script(text)?;
    build_graph(&lines, project, options)
}

/// Renders a linear graph back to script text. A direction-only line by the
/// same speaker as the line before becomes a standalone `[...]` line.
pub fn render_script(project: &Project, start: &str) -> Result<String, ScriptError> {
    let not_linear = || ScriptError::NotLinear(start.to_owned());
    let mut node = project.start_node(start).ok_or_else(not_linear)?;
    let mut out = String::new();
    let mut previous: Option<&ActorId> = None;
    let mut guard = project.node_count();
    loop {
        let mut next = project.outgoing_edges(&node.id);
        let edge = match (next.next(), next.next()) {
            (Some(e), None) => e,
            (None, None) if matches!(node.kind, NodeKind::Termination { .. }) => break,
            _ => return Err(not_linear()),
        };
        node = project.node(&edge.to).ok_or_else(not_linear)?;
        guard = guard.checked_sub(1).ok_or_else(not_linear)?;
        let item = match &node.kind {
            NodeKind::Item(item) => item,
            NodeKind::Termination { .. } => continue,
            _ => return Err(not_linear()),
        };
        let name = project
            .actor(&item.actor)
            .map_or(item.actor.as_str(), |a| a.display_name.as_str());
        match (&item.direction, &item.cue) {
            (Some(d), None) if previous == Some(&item.actor) => out.push_str(&format!("[{d}]\n")),
            (Some(d), Some(c)) => out.push_str(&format!("{name}: [{d}] {c}\n")),
            (Some(d), None) => out.push_str(&format!("{name}: [{d}]\n")),
            (None, Some(c)) => out.push_str(&format!("{name}: {c}\n")),
            (None, None) => return Err(not_linear()),
        }
        previous = Some(&item.actor);
    }
    Ok(out)
}
