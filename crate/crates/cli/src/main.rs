//! `branchtalk`: validate, import, play, inventory and serve dialog projects.
//!
//! Exit codes: 0 success, 1 domain error (invalid project, parse error,
//! invalid choice), 2 usage error. Data goes to stdout, diagnostics to
//! stderr.

mod play;

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use branchtalk::inventory::inventory;
use branchtalk::script::{import_script, ImportOptions};
use branchtalk::validate::{validate, Severity};
use branchtalk::{xml, Project};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "branchtalk", version, about = "Branching game dialog toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Argmax,
    Softmax,
}

#[derive(Subcommand)]
enum Command {
    /// Check a project file and list diagnostics.
    Validate { project: PathBuf },
    /// Import a screenplay-style script as a new page. Creates the project
    /// file if it does not exist.
    Import {
        script: PathBuf,
        project: PathBuf,
        /// Name of the new page.
        #[arg(long)]
        page: String,
        /// Name of the new start node.
        #[arg(long)]
        start: String,
        /// Script speaker that is a player character (repeatable).
        #[arg(long = "player-name")]
        player_names: Vec<String>,
    },
    /// Play a conversation, headless from a choice file or interactively.
    Play {
        project: PathBuf,
        #[arg(long)]
        start: String,
        /// One choice per line: a 1-based menu index or a node id. Lines
        /// `set <scope>.<state> <value>` edit a state before the next choice;
        /// `#` starts a comment.
        #[arg(long, conflicts_with = "interactive")]
        choices: Option<PathBuf>,
        /// Prompt for each choice on the terminal.
        #[arg(long)]
        interactive: bool,
        #[arg(long, value_enum, default_value = "argmax")]
        policy: PolicyArg,
        /// Softmax temperature.
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Seed for softmax sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial state override, `<scope>.<state>=<value>`; scope is
        /// `player`, `npc` (every NPC) or an actor id. Repeatable.
        #[arg(long = "set", value_name = "SCOPE.STATE=VALUE")]
        set: Vec<String>,
        /// Nodes executed per advance before reporting a cycle.
        #[arg(long, default_value_t = branchtalk::runtime::DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
    /// List referenced audio, lip-sync and other asset files.
    Inventory {
        project: PathBuf,
        /// Directory relative asset paths are checked against.
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Tab-separated `path role refCount exists` lines.
        #[arg(long)]
        machine: bool,
    },
    /// Run the local simulation server.
    Serve {
        project: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Default seed for sessions that do not give one.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failed command: message for stderr plus exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn domain(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load(path: &Path) -> Result<Project, Failure> {
    xml::load(path).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

fn write_out(text: &str) -> CmdResult {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::domain(format!("writing output: {e}")))
}

fn cmd_validate(path: &Path) -> CmdResult {
    let project = load(path)?;
    let diagnostics = validate(&project);
    let mut text = String::new();
    for d in &diagnostics {
        text.push_str(&format!("{d}\n"));
    }
    let count = |s| diagnostics.iter().filter(|d| d.severity == s).count();
    let errors = count(Severity::Error);
    text.push_str(&format!("{errors} errors, {} warnings\n", count(Severity::Warning)));
    write_out(&text)?;
    if errors > 0 {
        return Err(Failure {
            code: 1,
            message: String::new(),
        });
    }
    Ok(())
}

fn cmd_import(script: &Path, project_path: &Path, options: ImportOptions) -> CmdResult {
    let text = std::fs::read_to_string(script)
        .map_err(|e| Failure::domain(format!("{}: {e}", script.display())))?;
    let project = if project_path.exists() {
        load(project_path)?
    } else {
        Project::builder().build()
    };
    let (updated, diagnostics) = import_script(&text, &project, &options)
        .map_err(|e| Failure::domain(format!("{}: {e}", script.display())))?;
    for d in &diagnostics {
        eprintln!("{d}");
    }
    xml::save(&updated, project_path).map_err(|e| Failure::domain(format!("{}: {e}", project_path.display())))?;
    let nodes = updated.page_nodes(&options.page).count();
    write_out(&format!(
        "imported {nodes} nodes into page `{}` of {}\n",
        options.page,
        project_path.display()
    ))
}

fn cmd_inventory(path: &Path, assets: Option<&Path>, machine: bool) -> CmdResult {
    let project = load(path)?;
    let report = inventory(&project, assets);
    if machine {
        write_out(&report.machine_lines())
    } else {
        write_out(&report.to_string())
    }
}

fn cmd_serve(path: &Path, port: u16, seed: u64) -> CmdResult {
    let project = Arc::new(load(path)?);
    for d in validate(&project).iter().filter(|d| d.severity != Severity::Info) {
        eprintln!("{d}");
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::domain(e.to_string()))?;
    runtime.block_on(async move {
        let (listener, addr) = branchtalk_server::bind_localhost(port)
            .await
            .map_err(|e| Failure::domain(format!("binding port {port}: {e}")))?;
        write_out(&format!("listening on http://{addr}\n"))?;
        let config = branchtalk_server::ServerConfig {
            default_seed: seed,
            ..Default::default()
        };
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        branchtalk_server::serve(listener, project, config, shutdown)
            .await
            .map_err(|e| Failure::domain(e.to_string()))
    })
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate { project } => cmd_validate(&project),
        Command::Import {
            script,
            project,
            page,
            start,
            player_names,
        } => {
            let mut options = ImportOptions::new(page, start);
            options.player_names = player_names;
            cmd_import(&script, &project, options)
        }
        Command::Play {
            project,
            start,
            choices,
            interactive,
            policy,
            temperature,
            seed,
            set,
            max_steps,
        } => {
            let loaded = Arc::new(load(&project)?);
            let policy = match policy {
                PolicyArg::Argmax => branchtalk::SelectionPolicy::Argmax,
                PolicyArg::Softmax => branchtalk::SelectionPolicy::softmax(temperature, seed)
                    .map_err(|e| Failure::usage(e.to_string()))?,
            };
            let options = branchtalk::SessionOptions { policy, max_steps };
            let overrides = play::parse_overrides(&loaded, &set)?;
            if interactive {
                play::interactive(loaded, &start, options, &overrides)
            } else {
                play::headless(loaded, &start, choices.as_deref(), options, &overrides)
            }
        }
        Command::Inventory {
            project,
            assets,
            machine,
        } => cmd_inventory(&project, assets.as_deref(), machine),
        Command::Serve { project, port, seed } => cmd_serve(&project, port, seed),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
