//! Asset inventory: every audio, lip-sync or other file referenced by a
//! dialog item, deduplicated by `(path, role)`.
//!
//! Relative paths are checked against the asset root passed in, never
//! against the location of the project file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::model::{AssetRole, NodeId, NodeKind, Project};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InventoryEntry {
    pub path: String,
    pub role: AssetRole,
    /// Sorted, one id per referencing item (an item listing the same asset
    /// twice counts once).
    pub nodes: Vec<NodeId>,
    /// `None` when no asset root was given.
    pub exists: Option<bool>,
}

impl InventoryEntry {
    pub fn ref_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InventorySummary {
    pub assets: usize,
    pub references: usize,
    pub audio: usize,
    pub lipsync: usize,
    pub other: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InventoryReport {
    /// Sorted by path, then role.
    pub entries: Vec<InventoryEntry>,
    pub summary: InventorySummary,
}

pub fn inventory(project: &Project, asset_root: Option<&Path>) -> InventoryReport {
    let mut grouped: BTreeMap<(String, AssetRole), Vec<NodeId>> = BTreeMap::new();
    for node in project.nodes() {
        let NodeKind::Item(item) = &node.kind else { continue };
        for asset in &item.assets {
            let ids = grouped.entry((asset.path.clone(), asset.role)).or_default();
            if ids.last() != Some(&node.id) {
                ids.push(node.id.clone());
            }
        }
    }

    let mut summary = InventorySummary::default();
    let entries: Vec<InventoryEntry> = grouped
        .into_iter()
        .map(|((path, role), nodes)| {
            let exists = asset_root.map(|root| root.join(&path).is_file());
            summary.assets += 1;
            summary.references += nodes.len();
            match role {
                AssetRole::Audio => summary.audio += 1,
                AssetRole::LipSync => summary.lipsync += 1,
                AssetRole::Other => summary.other += 1,
            }
            if exists == Some(false) {
                summary.missing += 1;
            }
            InventoryEntry {
                path,
                role,
                nodes,
                exists,
            }
        })
        .collect();
    InventoryReport { entries, summary }
}

fn exists_label(exists: Option<bool>) -> &'static str {
    match exists {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    }
}

impl InventoryReport {
    /// One tab-separated record per line: `path role refCount exists`.
    pub fn machine_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let exists = match e.exists {
                Some(true) => "true",
                Some(false) => "false",
                None => "unknown",
            };
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.path, e.role.as_str(), e.ref_count(), exists));
        }
        out
    }
}

/// Aligned table for people.
impl fmt::Display for InventoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path_w = self.entries.iter().map(|e| e.path.chars().count()).max().unwrap_or(0).max(4);
        writeln!(f, "{:<path_w$}  {:<7}  {:>4}  {:<6}  nodes", "PATH", "ROLE", "REFS", "EXISTS")?;
        for e in &self.entries {
            let nodes: Vec<&str> = e.nodes.iter().map(NodeId::as_str).collect();
            writeln!(
                f,
                "{:<path_w$}  {:<7}  {:>4}  {:<6}  {}",
                e.path,
                e.role.as_str(),
                e.ref_count(),
                exists_label(e.exists),
                nodes.join(",")
            )?;
        }
        let s = &self.summary;
        write!(
            f,
            "{} asset(s), {} reference(s): {} audio, {} lipsync, {} other",
            s.assets, s.references, s.audio, s.lipsync, s.other
        )?;
        if s.missing > 0 {
            write!(f, "; {} missing", s.missing)?;
        }
        writeln!(f)
    }
}
