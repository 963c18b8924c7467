use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use goalflow::app::{build_engine, now_ms, App, TurnResponse};
use goalflow::config::Config;
use goalflow::nl2goal;
use goalflow::repo_yaml::{self, serialize_workflow, RepoFileError};
use goalflow::service;
use goalflow_core::engine::{Engine, Session};
use goalflow_core::qa::DEFAULT_TOP_K;
use serde_json::json;

#[derive(Parser)]
#[command(name = "goalflow", version, about = "Goal-driven task-oriented dialogue engine")]
struct Cli {
    /// Configuration file; defaults to $GOALFLOW_CONFIG, then the bundled demo.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive chat. Lines starting with `/` are commands: /state, /reset, /exit.
    Chat {
        /// Talk to a running service instead of an in-process engine.
        #[arg(long)]
        url: Option<String>,
        /// Print one JSON diagnostics line per turn on stderr.
        #[arg(long)]
        debug: bool,
    },
    /// Goal repository tools.
    Goals {
        #[command(subcommand)]
        command: GoalsCommand,
    },
    /// Translate a prose goal description into workflow YAML.
    Nl2goal {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Use the enumeration parser only; never call a model.
        #[arg(long)]
        offline: bool,
    },
    /// Run the HTTP service.
    Serve,
    /// Knowledge-base tools.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
}

#[derive(Subcommand)]
enum GoalsCommand {
    /// Parse and validate a goal file; exit code 0 iff it is clean.
    Validate { file: PathBuf },
    /// List goals from a file, or from the configured repository.
    List { file: Option<PathBuf> },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Rank knowledge-base passages for a query.
    Search {
        query: String,
        #[arg(short, default_value_t = DEFAULT_TOP_K)]
        k: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = || Config::resolve(cli.config.as_deref()).context("loading configuration");
    match &cli.command {
        Command::Chat { url: Some(url), debug } => chat_remote(url, *debug),
        Command::Chat { url: None, debug } => chat_local(&build_engine(&config()?)?, *debug),
        Command::Goals {
            command: GoalsCommand::Validate { file },
        } => goals_validate(file),
        Command::Goals {
            command: GoalsCommand::List { file },
        } => goals_list(file.as_deref(), config),
        Command::Nl2goal { file, output, offline } => translate(file, output.as_deref(), *offline, config),
        Command::Serve => serve(&config()?),
        Command::Kb {
            command: KbCommand::Search { query, k },
        } => {
            let engine = build_engine(&config()?)?;
            for hit in engine.kb().search(query, *k) {
                println!("{}", serde_json::to_string(&hit)?);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn goals_validate(file: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    match repo_yaml::parse_repository(&text) {
        Ok(repo) => {
            println!("ok: {} goal(s)", repo.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(RepoFileError::Invalid(violations)) => {
            for v in &violations {
                eprintln!("{v}");
            }
            eprintln!("{}: {} violation(s)", file.display(), violations.len());
            Ok(ExitCode::FAILURE)
        }
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            Ok(ExitCode::FAILURE)
        }
    }
}

fn goals_list(file: Option<&Path>, config: impl FnOnce() -> Result<Config>) -> Result<ExitCode> {
    let repo = match file {
        Some(f) => repo_yaml::load(f)?,
        None => build_engine(&config()?)?.repo().clone(),
    };
    for w in repo.workflows() {
        let size = w.steps.len().max(w.slots.len());
        let paradigm = serde_json::to_value(w.paradigm())?;
        println!("{}\t{}\t{}\t{}", w.id, paradigm.as_str().unwrap_or(""), size, w.goal);
    }
    Ok(ExitCode::SUCCESS)
}

fn translate(file: &Path, output: Option<&Path>, offline: bool, config: impl FnOnce() -> Result<Config>) -> Result<ExitCode> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let t = if offline {
        nl2goal::offline(&text)?
    } else {
        let cfg = config()?;
        let llm = goalflow::provider::build(&cfg)?;
        nl2goal::translate(&text, llm.as_ref())?
    };
    if let Some(e) = &t.gateway_error {
        eprintln!("model unavailable ({e}); used the offline parser");
    }
    let yaml = serialize_workflow(&t.workflow);
    match output {
        Some(path) => {
            goalflow::fsutil::write_atomic(path, yaml.as_bytes()).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{yaml}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(cfg: &Config) -> Result<ExitCode> {
    // Providers use blocking clients, so build everything before the
    // runtime exists.
    let app = Arc::new(App::from_config(cfg)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .with_context(|| format!("binding {}", cfg.listen))?;
        println!("listening on {}", listener.local_addr()?);
        std::io::stdout().flush()?;
        service::serve(app, listener, service::shutdown_signal()).await?;
        eprintln!("shut down");
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(ExitCode::SUCCESS)
}

/// Line-per-utterance loop. `on_line` returns false to stop. Piped input
/// is echoed so transcripts read like a conversation.
fn repl(mut on_line: impl FnMut(&str) -> Result<bool>) -> Result<ExitCode> {
    let interactive = std::io::stdin().is_terminal();
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            print!("> ");
            std::io::stdout().flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !interactive {
            println!("> {line}");
        }
        if !on_line(line)? {
            break;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn debug_line(r: &TurnResponse) -> serde_json::Value {
    json!({
        "turn": r.turn_index,
        "intent": r.intent.label,
        "action": r.action.as_ref().map(|a| a.name()),
        "phase": r.state.phase,
        "sub_state": r.state.sub_state.name(),
        "active_goal": r.state.active_goal,
        "step_cursor": r.state.step_cursor,
        "skipped_steps": r.state.skipped_steps,
        "diagnostics": r.diagnostics,
    })
}

fn chat_local(engine: &Engine, debug: bool) -> Result<ExitCode> {
    let new_session = || Session::new(&uuid::Uuid::new_v4().simple().to_string(), now_ms());
    let mut session = new_session();
    repl(|line| {
        match line {
            "/exit" | "/quit" => return Ok(false),
            "/state" => println!("{}", serde_json::to_string_pretty(&session.dialogue_state)?),
            "/reset" => {
                session = new_session();
                println!("(new session)");
            }
            cmd if cmd.starts_with('/') => eprintln!("unknown command {cmd}; try /state, /reset or /exit"),
            text => {
                let reply = engine
                    .handle_turn(&mut session, text, now_ms())
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                let r = TurnResponse::new(&session, reply);
                println!("{}\n", r.reply);
                if debug {
                    eprintln!("{}", debug_line(&r));
                }
            }
        }
        Ok(true)
    })
}

fn chat_remote(url: &str, debug: bool) -> Result<ExitCode> {
    let base = url.trim_end_matches('/').to_string();
    let client = reqwest::blocking::Client::new();
    let create = |client: &reqwest::blocking::Client| -> Result<String> {
        let resp = client
            .post(format!("{base}/sessions"))
            .send()
            .with_context(|| format!("connecting to {base}"))?;
        if !resp.status().is_success() {
            bail!("creating a session failed with HTTP {}", resp.status());
        }
        let v: serde_json::Value = resp.json()?;
        v["session_id"].as_str().map(str::to_string).context("response has no session_id")
    };
    let mut id = create(&client)?;
    repl(|line| {
        match line {
            "/exit" | "/quit" => return Ok(false),
            "/state" => {
                let v: serde_json::Value = client.get(format!("{base}/sessions/{id}")).send()?.json()?;
                println!("{}", serde_json::to_string_pretty(&v["dialogue_state"])?);
            }
            "/reset" => {
                id = create(&client)?;
                println!("(new session)");
            }
            cmd if cmd.starts_with('/') => eprintln!("unknown command {cmd}; try /state, /reset or /exit"),
            text => {
                let resp = client
                    .post(format!("{base}/sessions/{id}/messages"))
                    .json(&json!({ "text": text }))
                    .send()
                    .with_context(|| format!("connecting to {base}"))?;
                if !resp.status().is_success() {
                    let status = resp.status();
                    bail!("HTTP {status}: {}", resp.text().unwrap_or_default());
                }
                let r: TurnResponse = resp.json()?;
                println!("{}\n", r.reply);
                if debug {
                    eprintln!("{}", debug_line(&r));
                }
            }
        }
        Ok(true)
    })
}
