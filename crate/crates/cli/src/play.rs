//! `play`: headless replay from a choice file and the terminal prompt.

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use branchtalk::runtime::{render_entries, render_phase, render_transcript};
use branchtalk::{replay_session, ActorId, ActorKind, Choice, Phase, Project, Session, SessionOptions, StateEdit, StateTarget, TimedEdit};

use crate::{write_out, Failure};

/// Resolves `scope.state` and a value. `npc` expands to every NPC.
fn assignment(project: &Project, key: &str, value: &str) -> Result<Vec<StateEdit>, Failure> {
    let (scope, state) = key
        .split_once('.')
        .ok_or_else(|| Failure::usage(format!("`{key}`: expected <scope>.<state>")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("`{value}` is not a number")))?;
    let state = state.trim().to_owned();
    let targets = match scope.trim() {
        "player" => vec![StateTarget::Player],
        "npc" => project.npcs().map(|a| StateTarget::Npc(a.id.clone())).collect(),
        actor => match project.actor(&ActorId::new(actor)) {
            Some(a) if a.kind == ActorKind::Npc => vec![StateTarget::Npc(a.id.clone())],
            Some(a) if a.kind == ActorKind::Player => vec![StateTarget::Player],
            _ => return Err(Failure::domain(format!("unknown scope `{actor}`"))),
        },
    };
    Ok(targets
        .into_iter()
        .map(|t| StateEdit::new(t, state.clone(), value))
        .collect())
}

/// `--set scope.state=value` arguments.
pub fn parse_overrides(project: &Project, args: &[String]) -> Result<Vec<StateEdit>, Failure> {
    let mut edits = Vec::new();
    for arg in args {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set `{arg}`: expected <scope>.<state>=<value>")))?;
        edits.extend(assignment(project, key, value)?);
    }
    Ok(edits)
}

/// `set scope.state value` or `set scope.state=value`.
fn parse_set_command(project: &Project, rest: &str) -> Result<Vec<StateEdit>, Failure> {
    let rest = rest.trim();
    let (key, value) = rest
        .split_once('=')
        .or_else(|| rest.split_once(char::is_whitespace))
        .ok_or_else(|| Failure::usage(format!("`set {rest}`: expected set <scope>.<state> <value>")))?;
    assignment(project, key.trim(), value)
}

pub struct ChoiceScript {
    pub choices: Vec<Choice>,
    pub edits: Vec<TimedEdit>,
}

pub fn parse_choice_file(project: &Project, text: &str) -> Result<ChoiceScript, Failure> {
    let mut script = ChoiceScript {
        choices: Vec::new(),
        edits: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("set ") {
            let edits = parse_set_command(project, rest).map_err(|f| Failure {
                code: f.code,
                message: format!("choices line {}: {}", i + 1, f.message),
            })?;
            let at = script.choices.len();
            script
                .edits
                .extend(edits.into_iter().map(|edit| TimedEdit { before_choice: at, edit }));
        } else {
            script.choices.push(Choice::parse(line));
        }
    }
    Ok(script)
}

pub fn headless(
    project: Arc<Project>,
    start: &str,
    choices: Option<&Path>,
    options: SessionOptions,
    overrides: &[StateEdit],
) -> Result<(), Failure> {
    let script = match choices {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
            parse_choice_file(&project, &text)?
        }
        None => ChoiceScript {
            choices: Vec::new(),
            edits: Vec::new(),
        },
    };
    let session = replay_session(
        Arc::clone(&project),
        start,
        &script.choices,
        &script.edits,
        options,
        overrides,
    )
    .map_err(|e| Failure::domain(e.to_string()))?;
    let mut text = render_transcript(&project, session.transcript());
    text.push_str(&render_phase(session.phase()));
    write_out(&text)
}

fn print_menu(session: &Session) -> Result<(), Failure> {
    let mut text = String::new();
    if let Ok(menu) = session.menu_options() {
        for (i, m) in menu.iter().enumerate() {
            text.push_str(&format!("  {}) {}\n", i + 1, m.label));
        }
        text.push_str("> ");
    }
    write_out(&text)
}

/// Numbered menu on stdout; reads choices, `set <scope>.<state> <value>`
/// and `quit` from stdin.
pub fn interactive(
    project: Arc<Project>,
    start: &str,
    options: SessionOptions,
    overrides: &[StateEdit],
) -> Result<(), Failure> {
    let mut session = Session::start(Arc::clone(&project), start, options, overrides)
        .map_err(|e| Failure::domain(e.to_string()))?;
    let mut shown = 0;
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        let fresh = &session.transcript()[shown..];
        write_out(&render_entries(&project, fresh, shown + 1))?;
        shown = session.transcript().len();
        if matches!(session.phase(), Phase::Ended { .. }) {
            break;
        }
        print_menu(&session)?;
        let Some(line) = lines.next() else {
            write_out("\n")?;
            break;
        };
        let line = line.map_err(|e| Failure::domain(format!("reading input: {e}")))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "quit" || line == "q" {
            break;
        }
        let outcome = if let Some(rest) = line.strip_prefix("set ") {
            parse_set_command(&project, rest).and_then(|edits| {
                for edit in edits {
                    let stored = session
                        .set_state(&edit.target, &edit.name, edit.value)
                        .map_err(|e| Failure::domain(e.to_string()))?;
                    write_out(&format!("{} {} = {}\n", edit.target, edit.name, stored))?;
                }
                Ok(())
            })
        } else {
            session
                .apply_choice(&Choice::parse(line))
                .map(|_| ())
                .map_err(|e| Failure::domain(e.to_string()))
        };
        if let Err(f) = outcome {
            // stay in the loop; the session is unchanged
            eprintln!("error: {}", f.message);
            let _ = io::stderr().flush();
        }
    }
    write_out(&render_phase(session.phase()))
}
