//! HTTP curation service: reviewers walk a queue of concepts, inspect the
//! ranked candidates, and record verdicts into an append-only log.

mod api;
mod error;
mod log;
mod queue;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use kbalign_core::candgen::read_candidates;
use kbalign_core::corpus::{read_concepts, read_entities};
use tracing::info;

pub use api::{record_decision, router, AppState, SharedState};
pub use error::{Error, Result};
pub use log::{replay_bytes, replay_file, DecisionLog, Replay};
pub use queue::{
    export_alignments, CandidateDetail, Catalog, Decision, Entry, QueueState, Resolution, Status, Verdict,
};

pub const DEFAULT_PORT: u16 = 7860;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub candidates: PathBuf,
    pub concepts: PathBuf,
    pub entities: PathBuf,
    pub decisions: PathBuf,
    pub metrics: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub addr: SocketAddr,
}

/// Loads the run, replays the decision log and opens it for appending.
pub fn load_state(config: &ServiceConfig) -> Result<AppState> {
    let concepts = read_concepts(&config.concepts)?;
    let entities = read_entities(&config.entities)?;
    let lists = read_candidates(&config.candidates)?;
    let catalog = Catalog::new(&concepts, &entities, &lists)?;
    let replay = replay_file(&config.decisions, &catalog)?;
    let queue = QueueState::from_decisions(&replay.decisions);
    info!(
        concepts = catalog.len(),
        decisions = replay.decisions.len(),
        skipped = replay.skipped,
        "loaded run"
    );
    let metrics = match &config.metrics {
        Some(p) => Some(serde_json::from_slice(&std::fs::read(p)?)?),
        None => None,
    };
    Ok(AppState {
        catalog,
        queue: RwLock::new(queue),
        log: Mutex::new(DecisionLog::open(&config.decisions)?),
        metrics,
        static_dir: config.static_dir.clone(),
    })
}

/// Serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let state = Arc::new(load_state(&config)?);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
