use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Parser, Subcommand};
use hydrotwin_core::datastore::{load, parse_historian_csv, parse_weather_csv, save, RunStore, WEATHER_HEADER};
use hydrotwin_core::learner::Model;
use hydrotwin_core::{Error, Result};
use serde::Serialize;

use crate::config::{ServiceConfig, CONFIG_ENV, DEFAULT_PORT, PORT_ENV};
use crate::history::History;
use crate::pipeline;
use crate::service::{Service, MODEL_FILE, RUNS_FILE};

#[derive(Debug, Parser)]
#[command(name = "hydrotwin", version, about = "Storage-tank scheduling and operating-point advice for a thermal-hydrolysis plant")]
pub struct Cli {
    /// Directory holding the plant history, trained model and run log.
    #[arg(long, global = true, env = "HYDROTWIN_DATA_DIR", default_value = "hydrotwin-data")]
    pub data_dir: PathBuf,
    /// JSON configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service (port from HYDROTWIN_PORT, default 8080).
    Serve,
    /// Simulate both policies on seeded episodes and write one CSV per episode.
    Simulate {
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        steps: usize,
    },
    /// Fit and select a model on a historian export and store it.
    Train {
        /// Directory with historian.csv (and optionally weather.csv), or a historian CSV.
        #[arg(long)]
        data: PathBuf,
    },
    /// Print a recommendation for the next H steps.
    Plan {
        #[arg(long)]
        horizon: usize,
    },
    /// Compare the plan-based policy with the deadband baseline.
    Evaluate {
        #[arg(long)]
        episodes: usize,
    },
    /// Append a historian or weather CSV to the stored plant history.
    Ingest {
        #[arg(long)]
        file: PathBuf,
    },
}

/// Output of one command: JSON for stdout and an optional human summary
/// for stderr.
pub struct Output {
    pub json: String,
    pub summary: Option<String>,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_model(data_dir: &Path) -> Result<Model> {
    let path = data_dir.join(MODEL_FILE);
    if !path.is_file() {
        return Err(Error::Untrained);
    }
    load(&path)
}

fn load_history(data_dir: &Path) -> Result<History> {
    History::load_if_present(data_dir)?.ok_or_else(|| {
        Error::NotFound(format!(
            "no plant history in {}; run `ingest` or `train` first",
            data_dir.display()
        ))
    })
}

#[derive(Serialize)]
struct IngestOutput {
    kind: &'static str,
    accepted_rows: usize,
    row_errors: Vec<hydrotwin_core::datastore::RowIssue>,
    history_rows: usize,
}

/// Run every command except `serve`.
pub fn run(cli: &Cli, config: &ServiceConfig) -> Result<Output> {
    let dir = &cli.data_dir;
    match &cli.command {
        Command::Serve => Err(Error::Config("serve runs through `serve()`".into())),
        Command::Train { data } => {
            let (history, issues) = History::load(data)?;
            let (model, report) = pipeline::train(&history, &issues, config)?;
            std::fs::create_dir_all(dir)?;
            save(&dir.join(MODEL_FILE), &model)?;
            history.save(dir)?;
            Ok(Output {
                json: json(&report)?,
                summary: Some(format!("trained {} on {} rows\n", report.selected, report.rows)),
            })
        }
        Command::Plan { horizon } => {
            let model = load_model(dir)?;
            let history = load_history(dir)?;
            let rec = pipeline::plan_from_history(&history, None, Some(&model), config, &config.plan, *horizon)?;
            let mut runs = RunStore::open(&dir.join(RUNS_FILE))?;
            let run = runs.append(rec.clone(), Utc::now())?;
            Ok(Output {
                json: json(&rec)?,
                summary: Some(format!("recorded run {}\n", run.run_id)),
            })
        }
        Command::Ingest { file } => {
            let text = std::fs::read_to_string(file).map_err(|e| Error::Io(format!("{}: {e}", file.display())))?;
            let mut history = History::load_if_present(dir)?.unwrap_or_default();
            let is_weather = text.lines().next().is_some_and(|h| h.trim() == WEATHER_HEADER.join(","));
            let out = if is_weather {
                let p = parse_weather_csv(&text)?;
                let accepted_rows = p.records.len();
                history.merge_weather(p.records);
                IngestOutput {
                    kind: "weather",
                    accepted_rows,
                    row_errors: p.errors,
                    history_rows: history.weather.len(),
                }
            } else {
                let p = parse_historian_csv(&text)?;
                let accepted_rows = p.records.len();
                history.merge_historian(p.records);
                IngestOutput {
                    kind: "historian",
                    accepted_rows,
                    row_errors: p.errors,
                    history_rows: history.historian.len(),
                }
            };
            history.save(dir)?;
            Ok(Output {
                json: json(&out)?,
                summary: None,
            })
        }
        Command::Evaluate { episodes } => {
            let summary = pipeline::evaluate_policies(config, *episodes)?;
            Ok(Output {
                json: json(&summary)?,
                summary: Some(summary.table()),
            })
        }
        Command::Simulate { episodes, steps } => {
            let out = pipeline::simulate(config, *episodes, *steps, &dir.join("episodes"))?;
            Ok(Output {
                json: json(&out)?,
                summary: Some(out.evaluation.table()),
            })
        }
    }
}

pub fn port_from_env() -> Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{PORT_ENV}={v} is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

pub async fn serve(data_dir: &Path, config: ServiceConfig, port: u16) -> Result<()> {
    let service = Service::open(config, data_dir)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    eprintln!("hydrotwin listening on {}", listener.local_addr()?);
    axum::serve(listener, crate::api::router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
