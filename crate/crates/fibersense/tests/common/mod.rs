#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use fibersense::extract::{dataset_from_records, Extractor};
use fibersense::pipeline::Shared;
use fibersense::{potd, server};
use fibersense_core::classify::{train_tree, TrainParams, TreeModel};
use fibersense_core::engine::EngineConfig;
use fibersense_core::sim::{
    run_scenario, CarAction, ControlCommand, FiberLayout, LabelSpan, ScenarioScript, SignalKind, SimParams,
};

pub fn audio(signal: SignalKind, on: bool) -> ControlCommand {
    ControlCommand::SetAudio { signal, on }
}

pub fn fan(on: bool) -> ControlCommand {
    ControlCommand::SetFan { on }
}

pub fn car(speed_mps: f64) -> ControlCommand {
    ControlCommand::Car { command: CarAction::Start, speed_mps }
}

pub fn car_stop() -> ControlCommand {
    ControlCommand::Car { command: CarAction::Stop, speed_mps: 0.0 }
}

/// Speaker, fan and car switched on after warmup and off again before the
/// end.
pub fn three_sources(seed: u64, duration_s: f64, on_s: f64, off_s: f64) -> ScenarioScript {
    ScenarioScript::new(duration_s, seed)
        .at(on_s, audio(SignalKind::Tone, true))
        .at(on_s + 1.0, fan(true))
        .at(on_s + 2.0, car(2.0))
        .at(off_s, audio(SignalKind::Tone, false))
        .at(off_s + 0.5, fan(false))
        .at(off_s + 1.0, car_stop())
}

/// A tree trained on three-source scenarios with the given seeds.
pub fn train_model(seeds: impl IntoIterator<Item = u64>) -> TreeModel {
    let layout = FiberLayout::default();
    let mut rows = Vec::new();
    for seed in seeds {
        let script = three_sources(seed, 25.0, 6.0, 20.0);
        let labels = script.label_spans(&layout);
        let mut ex = Extractor::new(&layout, EngineConfig::default(), labels).unwrap();
        run_scenario::<(), _>(&script, &layout, SimParams::default(), 100, |b| {
            rows.extend(ex.push_block(&b).unwrap());
            Ok(())
        })
        .unwrap();
    }
    train_tree(&dataset_from_records(&rows).unwrap(), &TrainParams::default()).unwrap()
}

/// Writes `script` to a POTD file and returns its label spans.
pub fn record_scenario(script: &ScenarioScript, path: &Path) -> Vec<LabelSpan> {
    let layout = FiberLayout::default();
    let mut w = potd::create(path, &layout).unwrap();
    let spans = run_scenario(script, &layout, SimParams::default(), 100, |b| w.write_block(&b)).unwrap();
    w.finalize().unwrap();
    spans
}

/// Serves the API for `shared` on an ephemeral local port.
pub async fn spawn_server(shared: Arc<Shared>) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(server::serve(listener, shared, std::future::pending()));
    addr
}
