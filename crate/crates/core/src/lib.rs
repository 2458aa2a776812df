//! Branching game dialog as directed graphs.
//!
//! NPC responses are picked by state-weighted cause scores; every spoken line
//! nudges bounded player and NPC states through its effect weights.
//!
//! * [`model`]: actors, states, pages and the dialog graph.
//! * [`validate`]: structural diagnostics.
//! * [`scoring`]: cause scores, effects, response selection, node colors.
//! * [`runtime`]: the conversation state machine and headless replay.
//! * [`script`]: screenplay-style script import.
//! * [`xml`] and [`inventory`]: project files and asset listings.
//! * [`batch`]: data-parallel scoring and replay sweeps.

pub mod batch;
pub mod inventory;
pub mod model;
pub mod runtime;
pub mod scoring;
pub mod script;
pub mod validate;
pub mod xml;

pub use model::{
    Actor, ActorId, ActorKind, Asset, AssetRole, CauseWeights, DialogItem, Edge, EffectWeights, ModelError, Node,
    NodeId, NodeKind, Page, Project, ProjectBuilder, Scope, StateDeclaration, StateVector,
};
pub use runtime::{
    replay, replay_session, Choice, MenuOption, Phase, RuntimeError, Session, SessionOptions, StateEdit,
    StateTarget, TimedEdit, TranscriptEntry,
};
pub use scoring::{apply_effect, cause_score, color_class, ColorClass, Score, SelectionPolicy};
pub use validate::{validate, Code, Diagnostic, Severity};
