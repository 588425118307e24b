//! The real-time pipeline: a source thread (simulator, scripted scenario or
//! replay) feeds a single detector thread through a bounded blocking queue,
//! and the detector publishes records and tiles to the fan-out hub.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use fibersense_core::engine::{Engine, EngineError, EventRecord};
use fibersense_core::sim::{
    run_scenario, ControlCommand, FiberLayout, RunError, ScenarioScript, Simulator, WaterfallBlock,
};
use serde::Serialize;
use tokio::sync::oneshot;

use crate::config::{ConfigError, PipelineConfig};
use crate::fanout::Hub;
use crate::model_io::{load_model, ModelFileError};
use crate::potd::{self, PotdReader};
use crate::store::EventStore;
use crate::tile::make_tile;

const CONTROL_QUEUE: usize = 32;
const LATENCY_WINDOW: usize = 6000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Replay,
    Scenario,
}

/// Where blocks come from.
#[derive(Clone, Debug)]
pub enum Source {
    /// Free-running simulator steered by control commands, paced in real
    /// time.
    Live,
    /// A POTD recording paced at `speed` times real time (0 = unpaced).
    Replay { path: PathBuf, speed: f64 },
    /// A scripted scenario paced at `speed` times real time (0 = unpaced).
    Scenario { script: ScenarioScript, speed: f64 },
}

impl Source {
    /// The source a config describes: replay when it names a recording,
    /// live otherwise.
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        match &cfg.replay_path {
            Some(path) => Source::Replay { path: path.clone(), speed: cfg.replay_speed },
            None => Source::Live,
        }
    }

    fn mode(&self) -> Mode {
        match self {
            Source::Live => Mode::Live,
            Source::Replay { .. } => Mode::Replay,
            Source::Scenario { .. } => Mode::Scenario,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Finished,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Status {
    pub mode: Mode,
    pub state: RunState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// End time of the last processed block.
    pub t_s: f64,
    pub blocks_processed: u64,
    pub tiles_published: u64,
    pub records: usize,
    pub live_events: usize,
    pub subscribers: usize,
    pub dropped_tiles: u64,
    pub classifying: bool,
    pub latency_p95_ms: Option<f64>,
    pub latency_max_ms: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(#[from] ModelFileError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Format(#[from] potd::FormatError),
    #[error("{what} {path}: {source}")]
    Io { what: &'static str, path: PathBuf, source: std::io::Error },
    #[error("simulator: {0}")]
    Sim(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("control commands are only accepted by a live simulator (pipeline is in {0:?} mode)")]
    Mode(Mode),
    #[error("{0}")]
    Invalid(String),
    #[error("the simulator is not accepting commands")]
    Unavailable,
}

struct ControlRequest {
    cmd: ControlCommand,
    reply: oneshot::Sender<Result<f64, String>>,
}

struct BlockMsg {
    block: WaterfallBlock,
    available_at: Instant,
}

#[derive(Default)]
struct Progress {
    state: Option<RunState>,
    error: Option<String>,
    t_s: f64,
    blocks: u64,
    tiles: u64,
    latency_ms: VecDeque<f64>,
}

/// State shared between the pipeline threads and the service front end.
pub struct Shared {
    config: PipelineConfig,
    mode: Mode,
    classifying: bool,
    hub: Arc<Hub>,
    store: Mutex<EventStore>,
    progress: Mutex<Progress>,
    control: Option<Sender<ControlRequest>>,
    stop: AtomicBool,
}

impl Shared {
    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    pub fn query(&self, since_t_s: Option<f64>, id: Option<u64>) -> Vec<EventRecord> {
        self.store.lock().unwrap().query(since_t_s, id)
    }

    pub fn records(&self) -> Vec<EventRecord> {
        self.store.lock().unwrap().records().to_vec()
    }

    pub fn status(&self) -> Status {
        let records = self.store.lock().unwrap().len();
        let p = self.progress.lock().unwrap();
        let mut lat: Vec<f64> = p.latency_ms.iter().copied().collect();
        lat.sort_by(f64::total_cmp);
        Status {
            mode: self.mode,
            state: p.state.unwrap_or(RunState::Running),
            error: p.error.clone(),
            t_s: p.t_s,
            blocks_processed: p.blocks,
            tiles_published: p.tiles,
            records,
            live_events: self.hub.live_events().len(),
            subscribers: self.hub.subscriber_count(),
            dropped_tiles: self.hub.dropped_tiles(),
            classifying: self.classifying,
            latency_p95_ms: percentile(&lat, 0.95),
            latency_max_ms: lat.last().copied(),
        }
    }

    /// Hands `cmd` to the simulator and resolves to the simulation time at
    /// which it takes effect.
    pub async fn control(&self, cmd: ControlCommand) -> Result<f64, ControlError> {
        cmd.validate().map_err(|e| ControlError::Invalid(e.to_string()))?;
        let tx = self.control.as_ref().ok_or(ControlError::Mode(self.mode))?;
        let (reply, rx) = oneshot::channel();
        match tx.try_send(ControlRequest { cmd, reply }) {
            Ok(()) => {}
            Err(TrySendError::Full(_) | TrySendError::Disconnected(_)) => return Err(ControlError::Unavailable),
        }
        match tokio::time::timeout(Duration::from_secs(5), rx).await {
            Ok(Ok(Ok(t))) => Ok(t),
            Ok(Ok(Err(e))) => Err(ControlError::Invalid(e)),
            _ => Err(ControlError::Unavailable),
        }
    }

    fn fail(&self, msg: String) {
        tracing::error!("{msg}");
        let mut p = self.progress.lock().unwrap();
        p.state = Some(RunState::Failed);
        p.error.get_or_insert(msg);
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// A running pipeline. Dropping the handle stops it.
pub struct PipelineHandle {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl PipelineHandle {
    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    /// Asks the source to stop after its current block.
    pub fn stop(&self) {
        self.shared.stop.store(true, Ordering::SeqCst);
    }

    /// Waits for both threads to exit and returns the final status.
    pub fn join(mut self) -> Status {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self.shared.status()
    }

    pub fn is_finished(&self) -> bool {
        self.threads.iter().all(|t| t.is_finished())
    }
}

impl Drop for PipelineHandle {
    fn drop(&mut self) {
        self.stop();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Validates `cfg`, loads the model, opens the source and log, and starts
/// the source and detector threads.
pub fn start(cfg: PipelineConfig, source: Source) -> Result<PipelineHandle, StartError> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let model = cfg.model_path.as_deref().map(load_model).transpose()?;
    let classifying = model.is_some();
    let engine = Engine::new(&layout, cfg.engine.clone(), model)?;
    let store = match &cfg.event_log_path {
        Some(p) => {
            EventStore::with_log(p).map_err(|source| StartError::Io { what: "event log", path: p.clone(), source })?
        }
        None => EventStore::in_memory(),
    };
    if let (Source::Replay { path, .. }, Some(rec)) = (&source, &cfg.record_path) {
        if same_file(path, rec) {
            return Err(ConfigError::Invalid("record_path would overwrite the recording being replayed".into()).into());
        }
    }
    let mode = source.mode();
    let feed = open_feed(&cfg, &layout, source)?;
    let (control_tx, control_rx) = if mode == Mode::Live {
        let (tx, rx) = bounded(CONTROL_QUEUE);
        (Some(tx), Some(rx))
    } else {
        (None, None)
    };
    let shared = Arc::new(Shared {
        config: cfg.clone(),
        mode,
        classifying,
        hub: Arc::new(Hub::default()),
        store: Mutex::new(store),
        progress: Mutex::new(Progress::default()),
        control: control_tx,
        stop: AtomicBool::new(false),
    });
    let recorder = match &cfg.record_path {
        Some(p) => Some(potd::create(p, &layout).map_err(|source| StartError::Io {
            what: "recording",
            path: p.clone(),
            source,
        })?),
        None => None,
    };
    let (block_tx, block_rx) = bounded::<BlockMsg>(cfg.source_queue_blocks);
    let src = {
        let shared = shared.clone();
        let cfg = cfg.clone();
        thread::Builder::new()
            .name("fs-source".into())
            .spawn(move || run_source(feed, &cfg, &shared, block_tx, control_rx, recorder))
            .expect("spawn source thread")
    };
    let det = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("fs-detector".into())
            .spawn(move || run_detector(engine, &layout, &shared, block_rx))
            .expect("spawn detector thread")
    };
    Ok(PipelineHandle { shared, threads: vec![src, det] })
}

fn same_file(a: &std::path::Path, b: &std::path::Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

enum Feed {
    Live(Box<Simulator>),
    Replay(PotdReader<std::io::BufReader<std::fs::File>>, f64),
    Scenario(ScenarioScript, FiberLayout, f64),
}

fn open_feed(cfg: &PipelineConfig, layout: &FiberLayout, source: Source) -> Result<Feed, StartError> {
    Ok(match source {
        Source::Live => Feed::Live(Box::new(
            Simulator::new(layout.clone(), cfg.seed, cfg.sim, cfg.sources)
                .map_err(|e| StartError::Sim(e.to_string()))?,
        )),
        Source::Replay { path, speed } => {
            let reader = PotdReader::open(&path)?;
            reader.check_layout(layout)?;
            Feed::Replay(reader, speed)
        }
        Source::Scenario { script, speed } => {
            script.validate().map_err(|e| StartError::Sim(e.to_string()))?;
            Feed::Scenario(script, layout.clone(), speed)
        }
    })
}

/// Sleeps until the wall-clock time at which a block ending at `t_end_s`
/// is due, for a source paced at `speed` times real time.
fn pace(start: Instant, t_end_s: f64, speed: f64) {
    if speed > 0.0 {
        let due = start + Duration::from_secs_f64(t_end_s / speed);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
    }
}

type Recorder = potd::PotdWriter<std::io::BufWriter<std::fs::File>>;

fn run_source(
    feed: Feed,
    cfg: &PipelineConfig,
    shared: &Shared,
    tx: Sender<BlockMsg>,
    controls: Option<Receiver<ControlRequest>>,
    mut recorder: Option<Recorder>,
) {
    let n = cfg.block_size_traces;
    let start = Instant::now();
    let stopped = || shared.stop.load(Ordering::SeqCst);
    // Blocks are quantized to the recording precision before use so that a
    // replay of the recording reproduces the live run exactly.
    let mut emit = |mut block: WaterfallBlock, speed: f64, rate: f64| -> Result<(), String> {
        block.quantize_f32();
        if let Some(w) = &mut recorder {
            w.write_block(&block).map_err(|e| format!("recording: {e}"))?;
        }
        pace(start, block.t0_s() + block.n_traces() as f64 / rate, speed);
        tx.send(BlockMsg { block, available_at: Instant::now() }).map_err(|_| "detector stopped".to_string())
    };
    let result = match feed {
        Feed::Live(mut sim) => {
            let rate = sim.layout().pulse_rate_hz();
            let controls = controls.expect("live mode has a control queue");
            loop {
                if stopped() {
                    break Ok(());
                }
                while let Ok(req) = controls.try_recv() {
                    let applied = sim.time_s();
                    let r = sim.apply_control(&req.cmd).map(|()| applied).map_err(|e| e.to_string());
                    let _ = req.reply.send(r);
                }
                let block = match sim.synthesize_block(n) {
                    Ok(b) => b,
                    Err(e) => break Err(e.to_string()),
                };
                if let Err(e) = emit(block, 1.0, rate) {
                    break Err(e);
                }
            }
        }
        Feed::Replay(mut reader, speed) => {
            let rate = f64::from(reader.header().pulse_rate_hz);
            loop {
                if stopped() {
                    break Ok(());
                }
                match reader.read_block(n) {
                    Ok(Some(block)) => {
                        if let Err(e) = emit(block, speed, rate) {
                            break Err(e);
                        }
                    }
                    Ok(None) => break Ok(()),
                    Err(e) => break Err(e.to_string()),
                }
            }
        }
        Feed::Scenario(script, layout, speed) => {
            let rate = layout.pulse_rate_hz();
            let r = run_scenario(&script, &layout, cfg.sim, n, |block| {
                if stopped() {
                    return Err("stopped".to_string());
                }
                emit(block, speed, rate)
            });
            match r {
                Ok(_) => Ok(()),
                Err(RunError::Sink(e)) if e == "stopped" => Ok(()),
                Err(e) => Err(e.to_string()),
            }
        }
    };
    if let Some(w) = recorder {
        if let Err(e) = w.finalize() {
            shared.fail(format!("recording: {e}"));
        }
    }
    if let Err(e) = result {
        shared.fail(format!("source: {e}"));
    }
}

fn run_detector(mut engine: Engine, layout: &FiberLayout, shared: &Shared, rx: Receiver<BlockMsg>) {
    let ds = shared.config.stream_downsample;
    for msg in rx {
        let t_end = msg.block.t0_s() + msg.block.n_traces() as f64 / layout.pulse_rate_hz();
        let records = match engine.process_block(&msg.block) {
            Ok(r) => r,
            Err(e) => {
                shared.fail(format!("engine: {e}"));
                break;
            }
        };
        {
            let mut store = shared.store.lock().unwrap();
            for r in &records {
                if let Err(e) = store.append(r.clone()) {
                    shared.fail(format!("event log: {e}"));
                }
            }
        }
        for r in records {
            shared.hub.publish_event(r);
        }
        let latency = msg.available_at.elapsed().as_secs_f64() * 1e3;
        shared.hub.publish_tile(make_tile(&msg.block, layout, ds));
        let mut p = shared.progress.lock().unwrap();
        p.t_s = t_end;
        p.blocks += 1;
        p.tiles += 1;
        if p.latency_ms.len() == LATENCY_WINDOW {
            p.latency_ms.pop_front();
        }
        p.latency_ms.push_back(latency);
    }
    {
        let mut p = shared.progress.lock().unwrap();
        p.state.get_or_insert(RunState::Finished);
    }
    shared.hub.close();
}
