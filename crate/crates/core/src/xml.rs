//! XML project files, format version 1.
//!
//! Output is canonical: actors, pages and nodes sorted by id, edges by
//! `(from, order)`, weights in declaration order, two-space indentation and
//! `\n` line endings. Saving the same project twice gives identical bytes.
//! Floats use Rust's shortest round-trip representation.
//!
//! ```xml
//! <?xml version="1.0" encoding="UTF-8"?>
//! <simdialog version="1">
//!   <metadata title="Bar scene" version="3"/>
//!   <actors>
//!     <actor id="amy" kind="npc" name="Amy"/>
//!     <actor id="pc" kind="player" name="Player"/>
//!   </actors>
//!   <states scope="player"/>
//!   <states scope="npc">
//!     <state name="mood" default="0"/>
//!   </states>
//!   <pages>
//!     <page name="main">
//!       <node id="s" type="start" name="intro"/>
//!       <node id="t" type="termination">
//!         <direction>scene over</direction>
//!       </node>
//!     </page>
//!   </pages>
//!   <edges>
//!     <edge from="s" to="t" order="0"/>
//!   </edges>
//! </simdialog>
//! ```
//!
//! Zero weights are not written, and a missing `<w>` loads as zero. An
//! `<effect>` with no nonzero weight is left out entirely.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quick_xml::escape::{partial_escape, unescape};
use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use crate::model::{
    in_range, Actor, ActorKind, AssetRole, CauseWeights, DialogItem, Edge, EffectWeights, NodeKind, Project,
    ProjectBuilder, Scope, StateDeclaration,
};
use crate::validate::{has_errors, validate, Diagnostic};

pub const FORMAT_VERSION: u32 = 1;
pub const ROOT_ELEMENT: &str = "simdialog";

#[derive(Debug, Error)]
pub enum XmlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed XML at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported format version `{0}`")]
    UnsupportedVersion(String),
    #[error("schema error in <{element}> at line {line}: {message}")]
    Schema {
        element: String,
        line: usize,
        message: String,
    },
    #[error("refusing to save a project with {} error(s); first: {}", .0.iter().filter(|d| d.is_error()).count(), .0.iter().find(|d| d.is_error()).map(ToString::to_string).unwrap_or_default())]
    RefusedInvalid(Vec<Diagnostic>),
}

// ---------------------------------------------------------------- writing

fn attr_escape(value: &str) -> String {
    partial_escape(value)
        .replace('"', "&quot;")
        .replace('\n', "&#10;")
        .replace('\r', "&#13;")
        .replace('\t', "&#9;")
}

fn text_escape(value: &str) -> String {
    partial_escape(value).replace('\r', "&#13;")
}

struct Out {
    buf: String,
}

impl Out {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.buf.push_str("  ");
        }
    }

    fn open_tag(&mut self, depth: usize, name: &str, attrs: &[(&str, String)]) {
        self.indent(depth);
        self.buf.push('<');
        self.buf.push_str(name);
        for (k, v) in attrs {
            let _ = write!(self.buf, " {k}=\"{}\"", attr_escape(v));
        }
    }

    fn empty(&mut self, depth: usize, name: &str, attrs: &[(&str, String)]) {
        self.open_tag(depth, name, attrs);
        self.buf.push_str("/>\n");
    }

    fn start(&mut self, depth: usize, name: &str, attrs: &[(&str, String)]) {
        self.open_tag(depth, name, attrs);
        self.buf.push_str(">\n");
    }

    fn end(&mut self, depth: usize, name: &str) {
        self.indent(depth);
        let _ = writeln!(self.buf, "</{name}>");
    }

    fn text_element(&mut self, depth: usize, name: &str, text: &str) {
        self.indent(depth);
        let _ = writeln!(self.buf, "<{name}>{}</{name}>", text_escape(text));
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn weight_entries(project: &Project, player: &[f64], npc: &[f64]) -> Vec<[(&'static str, String); 3]> {
    let mut out = Vec::new();
    for (scope, values) in [(Scope::Player, player), (Scope::Npc, npc)] {
        for (decl, v) in project.state_declarations(scope).iter().zip(values) {
            if *v == 0.0 {
                continue;
            }
            out.push([
                ("scope", scope.as_str().to_owned()),
                ("state", decl.name.clone()),
                ("value", num(*v)),
            ]);
        }
    }
    out
}

fn write_cause(out: &mut Out, depth: usize, project: &Project, cause: &CauseWeights) {
    let entries = weight_entries(project, &cause.player, &cause.npc);
    let attrs = [("general", num(cause.general))];
    if entries.is_empty() {
        out.empty(depth, "cause", &attrs);
        return;
    }
    out.start(depth, "cause", &attrs);
    for e in &entries {
        out.empty(depth + 1, "w", e);
    }
    out.end(depth, "cause");
}

fn write_effect(out: &mut Out, depth: usize, project: &Project, effect: &EffectWeights) {
    let entries = weight_entries(project, &effect.player, &effect.npc);
    if entries.is_empty() {
        return;
    }
    out.start(depth, "effect", &[]);
    for e in &entries {
        out.empty(depth + 1, "w", e);
    }
    out.end(depth, "effect");
}

/// Serialises without validating. Prefer [`save`] for files.
pub fn to_xml_string(project: &Project) -> String {
    let mut out = Out { buf: String::new() };
    out.buf.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.start(0, ROOT_ELEMENT, &[("version", FORMAT_VERSION.to_string())]);
    let meta = project.metadata();
    out.empty(
        1,
        "metadata",
        &[("title", meta.title.clone()), ("version", meta.version.clone())],
    );

    let actors: Vec<&Actor> = project.actors().collect();
    if actors.is_empty() {
        out.empty(1, "actors", &[]);
    } else {
        out.start(1, "actors", &[]);
        for a in actors {
            let mut attrs = vec![
                ("id", a.id.to_string()),
                ("kind", a.kind.as_str().to_owned()),
                ("name", a.display_name.clone()),
            ];
            if let Some(c) = &a.color {
                attrs.push(("color", c.clone()));
            }
            if a.attributes.is_empty() {
                out.empty(2, "actor", &attrs);
            } else {
                out.start(2, "actor", &attrs);
                for (k, v) in &a.attributes {
                    out.empty(3, "attribute", &[("key", k.clone()), ("value", v.clone())]);
                }
                out.end(2, "actor");
            }
        }
        out.end(1, "actors");
    }

    for scope in [Scope::Player, Scope::Npc] {
        let decls = project.state_declarations(scope);
        let attrs = [("scope", scope.as_str().to_owned())];
        if decls.is_empty() {
            out.empty(1, "states", &attrs);
            continue;
        }
        out.start(1, "states", &attrs);
        for d in decls {
            out.empty(2, "state", &[("name", d.name.clone()), ("default", num(d.default))]);
        }
        out.end(1, "states");
    }

    let pages: Vec<_> = project.pages().collect();
    if pages.is_empty() {
        out.empty(1, "pages", &[]);
    } else {
        out.start(1, "pages", &[]);
        for page in pages {
            let nodes: Vec<_> = project.page_nodes(&page.name).collect();
            let attrs = [("name", page.name.clone())];
            if nodes.is_empty() && page.layout.is_empty() {
                out.empty(2, "page", &attrs);
                continue;
            }
            out.start(2, "page", &attrs);
            for node in nodes {
                write_node(&mut out, project, node);
            }
            if !page.layout.is_empty() {
                out.start(3, "layout", &[]);
                for (id, (x, y)) in &page.layout {
                    out.empty(4, "position", &[("node", id.to_string()), ("x", num(*x)), ("y", num(*y))]);
                }
                out.end(3, "layout");
            }
            out.end(2, "page");
        }
        out.end(1, "pages");
    }

    if project.edges().is_empty() {
        out.empty(1, "edges", &[]);
    } else {
        out.start(1, "edges", &[]);
        for e in project.edges() {
            let mut attrs = vec![
                ("from", e.from.to_string()),
                ("to", e.to.to_string()),
                ("order", e.order.to_string()),
            ];
            if let Some(b) = &e.branch {
                attrs.push(("branch", b.clone()));
            }
            out.empty(2, "edge", &attrs);
        }
        out.end(1, "edges");
    }
    out.end(0, ROOT_ELEMENT);
    out.buf
}

fn write_node(out: &mut Out, project: &Project, node: &crate::model::Node) {
    let d = 3;
    let mut attrs = vec![("id", node.id.to_string()), ("type", node.kind.tag().to_owned())];
    let mut body = Out { buf: String::new() };
    match &node.kind {
        NodeKind::Start { name, effect } => {
            attrs.push(("name", name.clone()));
            write_effect(&mut body, d + 1, project, effect);
        }
        NodeKind::Item(item) => {
            attrs.push(("actor", item.actor.to_string()));
            if let Some(c) = &item.conversant {
                attrs.push(("conversant", c.to_string()));
            }
            if let Some(l) = &item.menu_label {
                body.text_element(d + 1, "label", l);
            }
            if let Some(c) = &item.cue {
                body.text_element(d + 1, "cue", c);
            }
            if let Some(dir) = &item.direction {
                body.text_element(d + 1, "direction", dir);
            }
            if let Some(cause) = &item.cause {
                write_cause(&mut body, d + 1, project, cause);
            }
            write_effect(&mut body, d + 1, project, &item.effect);
            for a in &item.assets {
                body.empty(d + 1, "asset", &[("role", a.role.as_str().to_owned()), ("path", a.path.clone())]);
            }
        }
        NodeKind::Termination {
            direction,
            termination_value,
            cause,
        } => {
            if let Some(v) = termination_value {
                attrs.push(("value", v.clone()));
            }
            body.text_element(d + 1, "direction", direction);
            if let Some(cause) = cause {
                write_cause(&mut body, d + 1, project, cause);
            }
        }
        NodeKind::Reference { target_start } | NodeKind::Subdialog { target_start } => {
            attrs.push(("target", target_start.clone()));
        }
    }
    if body.buf.is_empty() {
        out.empty(d, "node", &attrs);
    } else {
        out.start(d, "node", &attrs);
        out.buf.push_str(&body.buf);
        out.end(d, "node");
    }
}

/// Validates and writes `project` to `path`. Warnings do not block saving.
pub fn save(project: &Project, path: impl AsRef<Path>) -> Result<(), XmlError> {
    let diagnostics = validate(project);
    if has_errors(&diagnostics) {
        return Err(XmlError::RefusedInvalid(diagnostics));
    }
    let path = path.as_ref();
    fs::write(path, to_xml_string(project)).map_err(|source| XmlError::Io {
        path: path.to_owned(),
        source,
    })
}

// ---------------------------------------------------------------- reading

#[derive(Debug)]
struct El {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<El>,
    text: String,
    line: usize,
}

impl El {
    fn err(&self, message: impl Into<String>) -> XmlError {
        XmlError::Schema {
            element: self.name.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn req(&self, name: &str) -> Result<&str, XmlError> {
        self.attr(name)
            .ok_or_else(|| self.err(format!("missing attribute `{name}`")))
    }

    fn allow_attrs(&self, allowed: &[&str]) -> Result<(), XmlError> {
        match self.attrs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, _)) => Err(self.err(format!("unexpected attribute `{k}`"))),
            None => Ok(()),
        }
    }

    fn no_text(&self) -> Result<(), XmlError> {
        if self.text.trim().is_empty() {
            Ok(())
        } else {
            Err(self.err("unexpected text content"))
        }
    }

    fn float(&self, name: &str) -> Result<f64, XmlError> {
        let raw = self.req(name)?;
        raw.trim()
            .parse::<f64>()
            .map_err(|_| self.err(format!("attribute `{name}` is not a number: `{raw}`")))
    }

    fn weight(&self, name: &str) -> Result<f64, XmlError> {
        let v = self.float(name)?;
        if !in_range(v) {
            return Err(self.err(format!("attribute `{name}` value {v} outside [-1, 1]")));
        }
        Ok(v)
    }

    fn text_only(&self) -> Result<String, XmlError> {
        if let Some(child) = self.children.first() {
            return Err(child.err(format!("unexpected element inside <{}>", self.name)));
        }
        self.allow_attrs(&[])?;
        Ok(self.text.clone())
    }
}

fn line_of(input: &str, pos: usize) -> usize {
    let pos = pos.min(input.len());
    input.as_bytes()[..pos].iter().filter(|b| **b == b'\n').count() + 1
}

fn parse_tree(input: &str) -> Result<El, XmlError> {
    let mut reader = Reader::from_str(input);
    reader.config_mut().check_end_names = true;
    let mut stack: Vec<El> = Vec::new();
    let mut root: Option<El> = None;
    let parse_err = |pos: u64, message: String| XmlError::Parse {
        line: line_of(input, pos as usize),
        message,
    };
    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| parse_err(reader.error_position(), e.to_string()))?;
        let line = line_of(input, pos as usize);
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let mut attrs = Vec::new();
                for a in e.attributes() {
                    let a = a.map_err(|err| parse_err(pos, err.to_string()))?;
                    let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
                    let value = a
                        .unescape_value()
                        .map_err(|err| parse_err(pos, err.to_string()))?
                        .into_owned();
                    attrs.push((key, value));
                }
                let el = El {
                    name,
                    attrs,
                    children: Vec::new(),
                    text: String::new(),
                    line,
                };
                if matches!(event, Event::Start(_)) {
                    stack.push(el);
                } else {
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(el),
                        None if root.is_none() => root = Some(el),
                        None => return Err(parse_err(pos, "multiple root elements".into())),
                    }
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or_else(|| parse_err(pos, "unbalanced end tag".into()))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err(parse_err(pos, "multiple root elements".into())),
                }
            }
            Event::Text(t) => {
                let raw = t.decode().map_err(|e| parse_err(pos, e.to_string()))?;
                let text = unescape(&raw).map_err(|e| parse_err(pos, e.to_string()))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&text),
                    None if text.trim().is_empty() => {}
                    None => return Err(parse_err(pos, "text outside the root element".into())),
                }
            }
            Event::GeneralRef(r) => {
                let name = r.decode().map_err(|e| parse_err(pos, e.to_string()))?;
                let entity = format!("&{name};");
                let text = unescape(&entity).map_err(|e| parse_err(pos, e.to_string()))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&text),
                    None => return Err(parse_err(pos, "entity outside the root element".into())),
                }
            }
            Event::CData(c) => {
                let text = c.decode().map_err(|e| parse_err(pos, e.to_string()))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&text),
                    None => return Err(parse_err(pos, "CDATA outside the root element".into())),
                }
            }
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err(XmlError::Parse {
            line: line_of(input, input.len()),
            message: format!("unclosed element <{}>", open.name),
        });
    }
    root.ok_or_else(|| XmlError::Parse {
        line: 1,
        message: "document has no root element".into(),
    })
}

/// Reads `<w>` children into positional vectors. Missing states are zero.
fn read_weights(
    el: &El,
    player_decls: &[StateDeclaration],
    npc_decls: &[StateDeclaration],
) -> Result<(Vec<f64>, Vec<f64>), XmlError> {
    let mut player = vec![0.0; player_decls.len()];
    let mut npc = vec![0.0; npc_decls.len()];
    let mut seen = BTreeSet::new();
    for w in &el.children {
        if w.name != "w" {
            return Err(w.err(format!("unexpected element inside <{}>", el.name)));
        }
        w.allow_attrs(&["scope", "state", "value"])?;
        w.no_text()?;
        let scope = w.req("scope")?;
        let state = w.req("state")?;
        let (decls, values) = match scope {
            "player" => (player_decls, &mut player),
            "npc" => (npc_decls, &mut npc),
            other => return Err(w.err(format!("unknown scope `{other}`"))),
        };
        let idx = decls
            .iter()
            .position(|d| d.name == state)
            .ok_or_else(|| w.err(format!("undeclared {scope} state `{state}`")))?;
        if !seen.insert((scope.to_owned(), state.to_owned())) {
            return Err(w.err(format!("duplicate weight for {scope} state `{state}`")));
        }
        values[idx] = w.weight("value")?;
    }
    el.no_text()?;
    Ok((player, npc))
}

fn schema(el: &El) -> impl Fn(crate::model::ModelError) -> XmlError + '_ {
    move |e| el.err(e.to_string())
}

/// Parses a project document from a string.
pub fn from_xml_str(input: &str) -> Result<Project, XmlError> {
    let root = parse_tree(input)?;
    if root.name != ROOT_ELEMENT {
        return Err(root.err(format!("root element must be <{ROOT_ELEMENT}>")));
    }
    let version = root.req("version")?;
    if version.trim() != FORMAT_VERSION.to_string() {
        return Err(XmlError::UnsupportedVersion(version.to_owned()));
    }
    root.allow_attrs(&["version"])?;
    root.no_text()?;

    let mut b = Project::builder();
    let mut seen_sections = BTreeSet::new();
    // states must be known before weights are read
    for section in &root.children {
        if section.name == "states" {
            section.allow_attrs(&["scope"])?;
            section.no_text()?;
            let scope = match section.req("scope")? {
                "player" => Scope::Player,
                "npc" => Scope::Npc,
                other => return Err(section.err(format!("unknown scope `{other}`"))),
            };
            if !seen_sections.insert(format!("states:{}", scope.as_str())) {
                return Err(section.err("duplicate states section"));
            }
            for s in &section.children {
                if s.name != "state" {
                    return Err(s.err("expected <state>"));
                }
                s.allow_attrs(&["name", "default"])?;
                s.no_text()?;
                let default = s.weight("default")?;
                b.state(StateDeclaration::new(s.req("name")?, scope, default))
                    .map_err(schema(s))?;
            }
        }
    }
    let project_so_far = b.build();
    let player_decls = project_so_far.state_declarations(Scope::Player).to_vec();
    let npc_decls = project_so_far.state_declarations(Scope::Npc).to_vec();

    for section in &root.children {
        match section.name.as_str() {
            "states" => {}
            "metadata" => {
                section.allow_attrs(&["title", "version"])?;
                section.no_text()?;
                if !section.children.is_empty() {
                    return Err(section.err("unexpected child element"));
                }
                b.metadata(section.attr("title").unwrap_or(""), section.attr("version").unwrap_or(""));
            }
            "actors" => read_actors(&mut b, section)?,
            "pages" => read_pages(&mut b, section, &player_decls, &npc_decls)?,
            "edges" => {
                section.allow_attrs(&[])?;
                section.no_text()?;
                for e in &section.children {
                    if e.name != "edge" {
                        return Err(e.err("expected <edge>"));
                    }
                    e.allow_attrs(&["from", "to", "order", "branch"])?;
                    e.no_text()?;
                    let order = e
                        .req("order")?
                        .trim()
                        .parse::<i64>()
                        .map_err(|_| e.err("attribute `order` is not an integer"))?;
                    let mut edge = Edge::new(e.req("from")?, e.req("to")?, order);
                    edge.branch = e.attr("branch").map(str::to_owned);
                    b.edge(edge);
                }
            }
            other => return Err(section.err(format!("unknown section <{other}>"))),
        }
        if section.name != "states" && !seen_sections.insert(section.name.clone()) {
            return Err(section.err("duplicate section"));
        }
    }
    Ok(b.build())
}

fn read_actors(b: &mut ProjectBuilder, section: &El) -> Result<(), XmlError> {
    section.allow_attrs(&[])?;
    section.no_text()?;
    for a in &section.children {
        if a.name != "actor" {
            return Err(a.err("expected <actor>"));
        }
        a.allow_attrs(&["id", "kind", "name", "color"])?;
        a.no_text()?;
        let kind = match a.req("kind")? {
            "player" => ActorKind::Player,
            "npc" => ActorKind::Npc,
            other => return Err(a.err(format!("unknown actor kind `{other}`"))),
        };
        let mut actor = Actor::new(a.req("id")?, a.req("name")?, kind);
        actor.color = a.attr("color").map(str::to_owned);
        for attr in &a.children {
            if attr.name != "attribute" {
                return Err(attr.err("expected <attribute>"));
            }
            attr.allow_attrs(&["key", "value"])?;
            attr.no_text()?;
            let key = attr.req("key")?.to_owned();
            if actor.attributes.contains_key(&key) {
                return Err(attr.err(format!("duplicate attribute `{key}`")));
            }
            actor.attributes.insert(key, attr.req("value")?.to_owned());
        }
        b.actor(actor).map_err(schema(a))?;
    }
    Ok(())
}

fn read_pages(
    b: &mut ProjectBuilder,
    section: &El,
    player_decls: &[StateDeclaration],
    npc_decls: &[StateDeclaration],
) -> Result<(), XmlError> {
    section.allow_attrs(&[])?;
    section.no_text()?;
    for p in &section.children {
        if p.name != "page" {
            return Err(p.err("expected <page>"));
        }
        p.allow_attrs(&["name"])?;
        p.no_text()?;
        let page = p.req("name")?;
        b.page(page).map_err(schema(p))?;
        let mut layouts = Vec::new();
        for n in &p.children {
            match n.name.as_str() {
                "node" => {
                    let kind = read_node(n, player_decls, npc_decls)?;
                    b.node(page, n.req("id")?, kind).map_err(schema(n))?;
                }
                "layout" => {
                    n.allow_attrs(&[])?;
                    n.no_text()?;
                    layouts.push(n);
                }
                other => return Err(n.err(format!("unexpected <{other}> in page"))),
            }
        }
        for layout in layouts {
            for pos in &layout.children {
                if pos.name != "position" {
                    return Err(pos.err("expected <position>"));
                }
                pos.allow_attrs(&["node", "x", "y"])?;
                pos.no_text()?;
                let id = pos.req("node")?.into();
                b.layout(page, &id, pos.float("x")?, pos.float("y")?)
                    .map_err(schema(pos))?;
            }
        }
    }
    Ok(())
}

fn read_node(n: &El, player_decls: &[StateDeclaration], npc_decls: &[StateDeclaration]) -> Result<NodeKind, XmlError> {
    let ty = n.req("type")?;
    n.no_text()?;
    let mut effect: Option<EffectWeights> = None;
    let mut cause: Option<CauseWeights> = None;
    let mut texts: [Option<String>; 3] = [None, None, None]; // label, cue, direction
    let mut assets = Vec::new();
    for c in &n.children {
        let once = |present: bool| -> Result<(), XmlError> {
            if present {
                Err(c.err("element given twice"))
            } else {
                Ok(())
            }
        };
        match c.name.as_str() {
            "effect" => {
                once(effect.is_some())?;
                c.allow_attrs(&[])?;
                let (p, q) = read_weights(c, player_decls, npc_decls)?;
                effect = Some(EffectWeights::new(p, q));
            }
            "cause" => {
                once(cause.is_some())?;
                c.allow_attrs(&["general"])?;
                let general = c.weight("general")?;
                let (p, q) = read_weights(c, player_decls, npc_decls)?;
                cause = Some(CauseWeights::new(general, p, q));
            }
            "label" | "cue" | "direction" => {
                let slot = match c.name.as_str() {
                    "label" => 0,
                    "cue" => 1,
                    _ => 2,
                };
                once(texts[slot].is_some())?;
                texts[slot] = Some(c.text_only()?);
            }
            "asset" => {
                c.allow_attrs(&["role", "path"])?;
                c.no_text()?;
                let role = AssetRole::parse(c.req("role")?)
                    .ok_or_else(|| c.err(format!("unknown asset role `{}`", c.req("role").unwrap_or(""))))?;
                assets.push(crate::model::Asset::new(role, c.req("path")?));
            }
            other => return Err(c.err(format!("unexpected <{other}> in node"))),
        }
    }
    let [label, cue, direction] = texts;
    let refuse = |what: &str, present: bool| -> Result<(), XmlError> {
        if present {
            Err(n.err(format!("{ty} node cannot have {what}")))
        } else {
            Ok(())
        }
    };
    let zero_effect = || EffectWeights::zero(player_decls.len(), npc_decls.len());
    let kind = match ty {
        "start" => {
            n.allow_attrs(&["id", "type", "name"])?;
            refuse("cause", cause.is_some())?;
            refuse("text", label.is_some() || cue.is_some() || direction.is_some())?;
            refuse("assets", !assets.is_empty())?;
            NodeKind::Start {
                name: n.req("name")?.to_owned(),
                effect: effect.unwrap_or_else(zero_effect),
            }
        }
        "item" => {
            n.allow_attrs(&["id", "type", "actor", "conversant"])?;
            let mut item = DialogItem::new(n.req("actor")?);
            item.conversant = n.attr("conversant").map(Into::into);
            item.menu_label = label;
            item.cue = cue;
            item.direction = direction;
            item.cause = cause;
            item.effect = effect.unwrap_or_else(zero_effect);
            item.assets = assets;
            NodeKind::Item(item)
        }
        "termination" => {
            n.allow_attrs(&["id", "type", "value"])?;
            refuse("effect", effect.is_some())?;
            refuse("label or cue", label.is_some() || cue.is_some())?;
            refuse("assets", !assets.is_empty())?;
            NodeKind::Termination {
                direction: direction.unwrap_or_default(),
                termination_value: n.attr("value").map(str::to_owned),
                cause,
            }
        }
        "reference" | "subdialog" => {
            n.allow_attrs(&["id", "type", "target"])?;
            refuse("cause", cause.is_some())?;
            refuse("effect", effect.is_some())?;
            refuse("text", label.is_some() || cue.is_some() || direction.is_some())?;
            refuse("assets", !assets.is_empty())?;
            let target = n.req("target")?.to_owned();
            if ty == "reference" {
                NodeKind::Reference { target_start: target }
            } else {
                NodeKind::Subdialog { target_start: target }
            }
        }
        other => return Err(n.err(format!("unknown node type `{other}`"))),
    };
    Ok(kind)
}

pub fn load(path: impl AsRef<Path>) -> Result<Project, XmlError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| XmlError::Io {
        path: path.to_owned(),
        source,
    })?;
    from_xml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Actor, DialogItem, Edge};

    fn sample() -> Project {
        let mut b = Project::builder();
        b.metadata("Bar <scene> & \"more\"", "2");
        b.actor(Actor::player("pc", "Player").with_attribute("age", "34").with_color("#c03030"))
            .unwrap();
        b.actor(Actor::npc("amy", "Amy")).unwrap();
        b.state(StateDeclaration::new("confidence", Scope::Player, 0.25)).unwrap();
        b.state(StateDeclaration::new("mood", Scope::Npc, -0.1)).unwrap();
        b.page("main").unwrap();
        b.node("main", "s", NodeKind::start("intro")).unwrap();
        b.node(
            "main",
            "ask",
            NodeKind::Item(
                DialogItem::new("pc")
                    .with_cue("  How are\nyou?\r\n ")
                    .with_menu_label("Ask")
                    .with_asset(AssetRole::Audio, "pc_01.wav")
                    .with_effect(EffectWeights::new(vec![0.1], vec![-0.30000000000000004])),
            ),
        )
        .unwrap();
        b.node(
            "main",
            "well",
            NodeKind::Item(
                DialogItem::new("amy")
                    .with_cue("Very well, thank you")
                    .with_direction("smiles")
                    .with_cause(CauseWeights::new(0.1, vec![0.0], vec![1.0])),
            ),
        )
        .unwrap();
        b.node("main", "t", NodeKind::termination_with_value("scene over", "done")).unwrap();
        b.layout("main", &"s".into(), 0.0, -12.5).unwrap();
        b.edge(Edge::new("s", "ask", 0));
        b.edge(Edge::new("ask", "well", 0));
        b.edge(Edge::new("well", "t", 0));
        b.build()
    }

    #[test]
    fn round_trip_and_determinism() {
        let p = sample();
        let a = to_xml_string(&p);
        let q = from_xml_str(&a).unwrap();
        assert_eq!(p, q);
        assert_eq!(a, to_xml_string(&q));
    }

    #[test]
    fn rejects_out_of_range_weight() {
        let xml = to_xml_string(&sample()).replace("value=\"1\"", "value=\"1.5\"");
        match from_xml_str(&xml).unwrap_err() {
            XmlError::Schema { element, .. } => assert_eq!(element, "w"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let xml = to_xml_string(&sample()).replace("<simdialog version=\"1\">", "<simdialog version=\"2\">");
        assert!(matches!(from_xml_str(&xml).unwrap_err(), XmlError::UnsupportedVersion(v) if v == "2"));
    }

    #[test]
    fn malformed_xml_reports_line() {
        let err = from_xml_str("<simdialog version=\"1\">\n  <actors>\n</simdialog>").unwrap_err();
        assert!(matches!(err, XmlError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn unknown_state_in_weight() {
        let xml = to_xml_string(&sample()).replace("state=\"mood\" value", "state=\"anger\" value");
        let err = from_xml_str(&xml).unwrap_err();
        assert!(err.to_string().contains("undeclared npc state `anger`"), "{err}");
    }

    #[test]
    fn save_refuses_invalid() {
        let mut b = Project::builder();
        b.page("p").unwrap();
        b.node("p", "s", NodeKind::start("x")).unwrap();
        b.node("p", "r", NodeKind::reference("nowhere")).unwrap();
        b.edge(Edge::new("s", "r", 0));
        let dir = tempfile::tempdir().unwrap();
        let err = save(&b.build(), dir.path().join("x.xml")).unwrap_err();
        assert!(matches!(err, XmlError::RefusedInvalid(_)));
    }
}
