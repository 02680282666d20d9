//! `ehazop`: validate studies, list examination cells, replay journals,
//! print result tables and run the workshop service.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 corrupt input,
//! 3 I/O failure.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ehazop_core::formats::{self, Journal};
use ehazop_core::model::{EnumerationConfig, GuideWord, SubjectShape};
use ehazop_core::reporting::{self, ReportFormat};
use ehazop_core::{enumerate_cells, generate_prompt, CellId, FormatError, Session};
use ehazop_service::{AppState, Loaded};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "ehazop",
    version,
    about = "Ethical-hazard (EHAZOP) studies for assistive robots"
)]
struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a study file; prints OK or the list of violations.
    Validate { study: PathBuf },
    /// List the examination cells of a study with their what-if prompts.
    Cells {
        study: PathBuf,
        /// Also enumerate pairs of functions.
        #[arg(long)]
        pairs: bool,
        /// Leave out subjects that involve a characteristic.
        #[arg(long)]
        no_characteristics: bool,
        #[arg(long)]
        json: bool,
    },
    /// Replay a session journal and print its totals.
    Replay {
        journal: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print the result table for one subject, or for every subject.
    Report {
        journal: PathBuf,
        /// Function id, `A+B` pair, characteristic id, or `all`.
        #[arg(long, default_value = "all")]
        subject: String,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: ReportFormat,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API for a study file or an existing journal.
    Serve {
        /// A study file, or a journal to continue.
        file: PathBuf,
        #[arg(long, env = "EHAZOP_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "EHAZOP_PORT", default_value_t = 8080)]
        port: u16,
        /// Keep a journal file per new session in this directory.
        #[arg(long)]
        journal_dir: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<FormatError> for Failure {
    fn from(err: FormatError) -> Self {
        let code = match &err {
            FormatError::Io { .. } | FormatError::AlreadyExists(_) | FormatError::Locked(_) => 3,
            e if e.is_corrupt() => 2,
            _ => 1,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn validation(message: impl ToString) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn io_failure(path: &Path, err: std::io::Error) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {err}", path.display()),
    }
}

/// ANSI decoration, off when `NO_COLOR` is set or stdout is not a terminal.
struct Style {
    enabled: bool,
}

impl Style {
    fn detect() -> Self {
        let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
        Self {
            enabled: !no_color && std::io::stdout().is_terminal(),
        }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.enabled {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_env("EHAZOP_LOG")
        .init();
    let mut out = std::io::stdout().lock();
    match run(cli.command, &mut out, &Style::detect()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let _ = out.flush();
            eprintln!("ehazop: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Cmd, out: &mut impl Write, style: &Style) -> Result<u8, Failure> {
    let write_err = |e: std::io::Error| io_failure(Path::new("<stdout>"), e);
    match command {
        Cmd::Validate { study } => match formats::load_study(&study) {
            Ok(_) => {
                writeln!(out, "{}", style.paint("32", "OK")).map_err(write_err)?;
                Ok(0)
            }
            Err(FormatError::Invalid(report)) => {
                for v in &report.violations {
                    writeln!(out, "{} {v}", style.paint("31", "-")).map_err(write_err)?;
                }
                Ok(1)
            }
            Err(e) => Err(e.into()),
        },
        Cmd::Cells {
            study,
            pairs,
            no_characteristics,
            json,
        } => {
            let doc = formats::load_study(&study)?;
            let mut config = doc.enumeration_config;
            config.include_function_pairs |= pairs;
            if no_characteristics {
                config.include_function_characteristic = false;
                config.include_generic_characteristic = false;
            }
            print_cells(out, &doc.system, config, json).map_err(|e| match e {
                CellsError::Write(e) => write_err(e),
                CellsError::Engine(m) => validation(m),
            })?;
            Ok(0)
        }
        Cmd::Replay { journal, json } => {
            let session = formats::replay_file(&journal)?;
            let summary = reporting::summary(session.state());
            if json {
                let body = serde_json::json!({
                    "findings": summary.total_findings,
                    "novel": summary.novel_findings,
                    "coverage": summary.coverage_fraction,
                    "last_seq": session.state().last_seq(),
                    "closed": session.state().is_closed(),
                    "summary": summary,
                });
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&body).expect("summary serializes")
                )
                .map_err(write_err)?;
            } else {
                writeln!(out, "{}", replay_line(&session)).map_err(write_err)?;
            }
            Ok(0)
        }
        Cmd::Report {
            journal,
            subject,
            format,
            out: target,
        } => {
            let session = Journal::read(&journal)?.replay()?;
            let text = reporting::render_report(session.state(), &subject, format).map_err(validation)?;
            match target {
                Some(path) => std::fs::write(&path, text).map_err(|e| io_failure(&path, e))?,
                None => out.write_all(text.as_bytes()).map_err(write_err)?,
            }
            Ok(0)
        }
        Cmd::Serve {
            file,
            host,
            port,
            journal_dir,
        } => serve(&file, &host, port, journal_dir, out).map(|()| 0),
    }
}

/// `findings=<n> novel=<m> coverage=<p>%`
fn replay_line(session: &Session) -> String {
    let summary = reporting::summary(session.state());
    format!(
        "findings={} novel={} coverage={:.1}%",
        summary.total_findings,
        summary.novel_findings,
        summary.coverage_fraction * 100.0
    )
}

enum CellsError {
    Write(std::io::Error),
    Engine(String),
}

#[derive(Serialize)]
struct CellLine {
    id: CellId,
    guideword: GuideWord,
    shape: SubjectShape,
    prompt: String,
}

fn print_cells(
    out: &mut impl Write,
    model: &ehazop_core::SystemModel,
    config: EnumerationConfig,
    json: bool,
) -> Result<(), CellsError> {
    let cells = enumerate_cells(model, &config).map_err(|e| CellsError::Engine(e.to_string()))?;
    let lines = cells
        .iter()
        .map(|cell| {
            Ok(CellLine {
                id: cell.id.clone(),
                guideword: cell.guideword,
                shape: cell.subject.shape(),
                prompt: generate_prompt(cell, model).map_err(|e| CellsError::Engine(e.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if json {
        let text = serde_json::to_string_pretty(&lines).expect("cells serialize");
        writeln!(out, "{text}").map_err(CellsError::Write)
    } else {
        for line in &lines {
            writeln!(out, "{}\t{}", line.id, line.prompt).map_err(CellsError::Write)?;
        }
        Ok(())
    }
}

fn serve(
    file: &Path,
    host: &str,
    port: u16,
    journal_dir: Option<PathBuf>,
    out: &mut impl Write,
) -> Result<(), Failure> {
    let state = AppState::new(journal_dir);
    let loaded = state.load(file)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| io_failure(file, e))?;
    runtime.block_on(async {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| io_failure(Path::new(&addr), e))?;
        let local = listener
            .local_addr()
            .map_err(|e| io_failure(Path::new(&addr), e))?;
        let announce = match &loaded {
            Loaded::Study { study_id } => format!("listening on http://{local}/v1/ (study {study_id})"),
            Loaded::Journal { study_id, session_id } => {
                format!("listening on http://{local}/v1/ (study {study_id}, session {session_id})")
            }
        };
        writeln!(out, "{announce}")
            .and_then(|()| out.flush())
            .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
        // Event streams never end on their own, so stop on the first
        // interrupt rather than waiting for clients to disconnect.
        tokio::select! {
            served = ehazop_service::serve(listener, state, std::future::pending()) => {
                served.map_err(|e| io_failure(Path::new(&addr), e))
            }
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}
