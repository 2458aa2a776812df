//! Shared helpers for the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use branchtalk::{
    Actor, AssetRole, CauseWeights, DialogItem, Edge, EffectWeights, NodeKind, Project, Scope, StateDeclaration,
};
use proptest::prelude::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load_fixture(name: &str) -> Project {
    branchtalk::xml::load(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Text that needs escaping, keeps surrounding whitespace and mixes scripts.
pub fn arb_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-Z0-9 <>&\"'\\t\\n\\r=/;#é漢😀-]{0,12}").unwrap()
}

pub fn arb_weight() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(1.0),
        Just(-1.0),
        Just(0.1 + 0.2),
        -1.0f64..=1.0,
    ]
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(arb_weight(), n)
}

#[derive(Debug, Clone)]
enum KindSeed {
    Start(String, Vec<f64>, Vec<f64>),
    Item {
        actor: usize,
        conversant: Option<usize>,
        label: Option<String>,
        cue: Option<String>,
        direction: Option<String>,
        cause: Option<(f64, Vec<f64>, Vec<f64>)>,
        effect: (Vec<f64>, Vec<f64>),
        assets: Vec<(u8, String)>,
    },
    Termination(String, Option<String>, Option<(f64, Vec<f64>, Vec<f64>)>),
    Reference(String),
    Subdialog(String),
}

fn arb_kind(np: usize, nn: usize, actors: usize) -> impl Strategy<Value = KindSeed> {
    let cause = || (arb_weight(), weights(np), weights(nn));
    prop_oneof![
        (arb_text(), weights(np), weights(nn)).prop_map(|(n, p, q)| KindSeed::Start(n, p, q)),
        (
            0..actors,
            proptest::option::of(0..actors),
            proptest::option::of(arb_text()),
            proptest::option::of(arb_text()),
            proptest::option::of(arb_text()),
            proptest::option::of(cause()),
            (weights(np), weights(nn)),
            proptest::collection::vec((0u8..3, arb_text()), 0..3),
        )
            .prop_map(|(actor, conversant, label, cue, direction, cause, effect, assets)| KindSeed::Item {
                actor,
                conversant,
                label,
                cue,
                direction,
                cause,
                effect,
                assets
            }),
        (arb_text(), proptest::option::of(arb_text()), proptest::option::of(cause()))
            .prop_map(|(d, v, c)| KindSeed::Termination(d, v, c)),
        arb_text().prop_map(KindSeed::Reference),
        arb_text().prop_map(KindSeed::Subdialog),
    ]
}

/// Any representable project: structurally arbitrary (it may not validate),
/// but with weight vectors sized to the declarations.
pub fn arb_project() -> impl Strategy<Value = Project> {
    (0usize..3, 0usize..3, 1usize..4).prop_flat_map(|(np, nn, actors)| {
        let nodes = proptest::collection::vec(
            (0usize..3, arb_kind(np, nn, actors), proptest::option::of((-1e4f64..1e4, -1e4f64..1e4))),
            0..10,
        );
        (
            (arb_text(), arb_text()),
            proptest::collection::vec((arb_text(), any::<bool>(), proptest::option::of(arb_text())), actors),
            proptest::collection::vec((arb_text(), arb_weight()), np),
            proptest::collection::vec((arb_text(), arb_weight()), nn),
            proptest::collection::vec(arb_text(), 1..4),
            nodes,
            proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), -5i64..5, proptest::option::of(arb_text())), 0..12),
        )
            .prop_map(|(meta, actor_seeds, pstates, nstates, page_names, node_seeds, edge_seeds)| {
                let mut b = Project::builder();
                b.metadata(meta.0, meta.1);
                let actor_ids: Vec<String> = (0..actor_seeds.len()).map(|i| format!("a{i}")).collect();
                for (i, (name, player, color)) in actor_seeds.into_iter().enumerate() {
                    let mut a = if player {
                        Actor::player(actor_ids[i].as_str(), name)
                    } else {
                        Actor::npc(actor_ids[i].as_str(), name)
                    };
                    a.color = color;
                    if i == 0 {
                        a = a.with_attribute("k<&>", "v\"'");
                    }
                    b.actor(a).unwrap();
                }
                for (scope, seeds) in [(Scope::Player, pstates), (Scope::Npc, nstates)] {
                    for (i, (name, default)) in seeds.into_iter().enumerate() {
                        b.state(StateDeclaration::new(format!("{i}{name}"), scope, default)).unwrap();
                    }
                }
                let pages: Vec<String> = page_names.into_iter().enumerate().map(|(i, n)| format!("{i}{n}")).collect();
                for p in &pages {
                    b.page(p.as_str()).unwrap();
                }
                let mut ids = Vec::new();
                for (i, (page, kind, pos)) in node_seeds.into_iter().enumerate() {
                    let page = &pages[page % pages.len()];
                    let id = format!("n{i}<\"&'>");
                    let kind = match kind {
                        KindSeed::Start(n, p, q) => NodeKind::Start {
                            name: n,
                            effect: EffectWeights::new(p, q),
                        },
                        KindSeed::Item {
                            actor,
                            conversant,
                            label,
                            cue,
                            direction,
                            cause,
                            effect,
                            assets,
                        } => {
                            let mut item = DialogItem::new(actor_ids[actor].as_str());
                            item.conversant = conversant.map(|c| actor_ids[c].as_str().into());
                            item.menu_label = label;
                            item.cue = cue;
                            item.direction = direction;
                            item.cause = cause.map(|(g, p, q)| CauseWeights::new(g, p, q));
                            item.effect = EffectWeights::new(effect.0, effect.1);
                            for (role, path) in assets {
                                let role = [AssetRole::Audio, AssetRole::LipSync, AssetRole::Other][role as usize];
                                item = item.with_asset(role, path);
                            }
                            NodeKind::Item(item)
                        }
                        KindSeed::Termination(d, v, c) => NodeKind::Termination {
                            direction: d,
                            termination_value: v,
                            cause: c.map(|(g, p, q)| CauseWeights::new(g, p, q)),
                        },
                        KindSeed::Reference(t) => NodeKind::reference(t),
                        KindSeed::Subdialog(t) => NodeKind::subdialog(t),
                    };
                    b.node(page.as_str(), id.as_str(), kind).unwrap();
                    if let Some((x, y)) = pos {
                        b.layout(page, &id.as_str().into(), x, y).unwrap();
                    }
                    ids.push(id);
                }
                if !ids.is_empty() {
                    for (from, to, order, branch) in edge_seeds {
                        let mut e = Edge::new(from.get(&ids).as_str(), to.get(&ids).as_str(), order);
                        e.branch = branch;
                        b.edge(e);
                    }
                }
                b.build()
            })
    })
}
