use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fibersense::config::PipelineConfig;
use fibersense::extract::{dataset_from_records, extract_file};
use fibersense::jsonl::{read_jsonl_file, write_jsonl, FeatureRecord};
use fibersense::model_io::{load_model, save_model};
use fibersense::offline::detect_file;
use fibersense::pipeline::{self, RunState, Source};
use fibersense::potd;
use fibersense::server;
use fibersense_core::classify::{train_tree, TrainParams};
use fibersense_core::sim::{run_scenario, LabelSpan, ScenarioScript};
use tokio::net::TcpListener;

#[derive(Parser)]
#[command(name = "fibersense", version, about = "Simulated phase-OTDR event detection and classification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scripted scenario and record it with its ground-truth labels.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a decision tree on a feature dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TrainParams::default().max_depth)]
        max_depth: usize,
        #[arg(long, default_value_t = TrainParams::default().min_leaf)]
        min_leaf: usize,
    },
    /// Detect and classify events in a recording, as fast as possible.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the live service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve a recording through the pipeline, exiting when it ends.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
        /// Multiple of real time; 0 replays as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a labeled feature dataset from a recording and its labels.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().cmd {
        Cmd::Simulate { scenario, out, labels, seed, config } => {
            let cfg = load_config(config.as_deref())?;
            let layout = cfg.layout()?;
            let text = fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let mut script: ScenarioScript =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", scenario.display()))?;
            if let Some(s) = seed {
                script.seed = s;
            }
            let mut w = potd::create(&out, &layout).with_context(|| format!("creating {}", out.display()))?;
            let spans = run_scenario(&script, &layout, cfg.sim, cfg.block_size_traces, |b| w.write_block(&b))?;
            w.finalize()?;
            write_jsonl(&labels, &spans)?;
            tracing::info!(spans = spans.len(), "wrote {}", out.display());
        }
        Cmd::Train { data, out, max_depth, min_leaf } => {
            let records: Vec<FeatureRecord> = read_jsonl_file(&data)?;
            let dataset = dataset_from_records(&records)?;
            let model = train_tree(&dataset, &TrainParams { max_depth, min_leaf, ..TrainParams::default() })?;
            save_model(&out, &model)?;
            tracing::info!(rows = dataset.len(), nodes = model.nodes.len(), depth = model.depth(), "trained");
        }
        Cmd::Detect { input, model, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let layout = cfg.layout()?;
            let model = model.or(cfg.model_path.clone()).as_deref().map(load_model).transpose()?;
            let started = std::time::Instant::now();
            let records = detect_file(&input, &layout, cfg.engine.clone(), model, cfg.block_size_traces)?;
            write_jsonl(&out, &records)?;
            tracing::info!(records = records.len(), elapsed_s = started.elapsed().as_secs_f64(), "detected");
        }
        Cmd::Serve { config } => {
            let cfg = load_config(config.as_deref())?;
            run_service(cfg, true)?;
        }
        Cmd::Replay { input, speed, config } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.replay_path = Some(input);
            cfg.replay_speed = speed;
            cfg.validate()?;
            run_service(cfg, false)?;
        }
        Cmd::Extract { input, labels, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let layout = cfg.layout()?;
            let spans: Vec<LabelSpan> = read_jsonl_file(&labels)?;
            let records = extract_file(&input, spans, &layout, cfg.engine.clone(), cfg.block_size_traces)?;
            write_jsonl(&out, &records)?;
            tracing::info!(rows = records.len(), "extracted");
        }
    }
    Ok(())
}

/// Runs the pipeline behind the HTTP API. With `keep_serving` false the
/// process exits once the source is exhausted.
fn run_service(cfg: PipelineConfig, keep_serving: bool) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener =
            TcpListener::bind(&cfg.listen_addr).await.with_context(|| format!("binding {}", cfg.listen_addr))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        let handle = pipeline::start(cfg.clone(), Source::from_config(&cfg))?;
        let shared = Arc::clone(handle.shared());
        let watch = Arc::clone(&shared);
        let shutdown = async move {
            if keep_serving {
                let _ = tokio::signal::ctrl_c().await;
            } else {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = async {
                        while watch.status().state == RunState::Running {
                            tokio::time::sleep(std::time::Duration::from_millis(200)).await;
                        }
                    } => {}
                }
            }
        };
        server::serve(listener, Arc::clone(&shared), shutdown).await?;
        handle.stop();
        let status = tokio::task::spawn_blocking(move || handle.join()).await?;
        tracing::info!(blocks = status.blocks_processed, records = status.records, "stopped");
        if status.state == RunState::Failed {
            bail!(status.error.unwrap_or_default());
        }
        Ok(())
    })
}
