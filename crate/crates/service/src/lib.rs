//! HTTP task service: authenticated uploads, an asynchronous FIFO of
//! linkage jobs, and result archives that expire seven days after
//! completion.
//!
//! The clock is injected everywhere; see [`clock::ManualClock`] for tests.

pub mod api;
pub mod auth;
pub mod clock;
pub mod config;
pub mod manager;
pub mod notify;
pub mod task;
pub mod worker;

use std::sync::Arc;
use std::time::Duration;

use arealink_core::catalog::CatalogStore;
use arealink_core::linkage::{LinkOptions, ResolverContext};
use arealink_core::spatial::{Crosswalk, SpatialIndex};
use thiserror::Error;
use tokio::sync::Notify;

pub use api::{router, AppState};
pub use auth::TokenStore;
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::ServiceConfig;
pub use manager::{TaskManager, RETENTION};
pub use notify::{DeliveryRecord, Notifier};
pub use task::{LinkageTask, TaskStatus};
pub use worker::{process_one, Runner};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("Unauthorized: missing or unknown bearer token")]
    Unauthorized,
    #[error("PayloadTooLarge: request body exceeds {0} bytes")]
    PayloadTooLarge(usize),
    #[error("InvalidSelection: {0}")]
    InvalidSelection(String),
    #[error("MalformedUpload: {0}")]
    MalformedUpload(String),
    #[error("BadRequest: {0}")]
    BadRequest(String),
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("NotReady: task {task} is {status}")]
    NotReady { task: String, status: TaskStatus },
    #[error("Gone: the result of task {0} has expired and was deleted")]
    Gone(String),
    #[error("illegal transition for task {task}: {from} -> {to}")]
    IllegalTransition { task: String, from: TaskStatus, to: TaskStatus },
    #[error("io: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
}

/// Everything a running service holds. Built separately from [`serve`] so
/// tests can drive it with their own clock and without sockets.
pub struct Service {
    pub state: AppState,
    pub runner: Arc<Runner>,
    pub notifier: Arc<Notifier>,
}

impl Service {
    pub fn build(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let tokens = TokenStore::load(&config.token_file)?;
        if tokens.is_empty() {
            log::warn!("token file {} lists no tokens; every request will be refused", config.token_file.display());
        }
        let store = CatalogStore::open(&config.catalog_dir).map_err(|e| ServiceError::Config(e.to_string()))?;
        let mut ctx = ResolverContext::new();
        if let Some(p) = &config.boundary_index {
            ctx.index = Some(SpatialIndex::load(p).map_err(|e| ServiceError::Config(e.to_string()))?);
        }
        for p in &config.crosswalks {
            ctx.add_crosswalk(Crosswalk::load(p).map_err(|e| ServiceError::Config(e.to_string()))?);
        }
        let manager = TaskManager::open(&config.data_dir, clock)?;
        let notifier = match &config.webhook_url {
            Some(url) => Notifier::webhook(url),
            None => Notifier::log(),
        };
        let store = Arc::new(store);
        let ctx = Arc::new(ctx);
        let state = AppState {
            manager: Arc::new(manager),
            tokens: Arc::new(tokens),
            store: store.clone(),
            ctx: ctx.clone(),
            wake: Arc::new(Notify::new()),
            max_upload_bytes: config.max_upload_bytes,
        };
        let runner = Arc::new(Runner { store, ctx, options: LinkOptions::default() });
        Ok(Service { state, runner, notifier: Arc::new(notifier) })
    }
}

/// Binds, starts workers and the retention sweeper, and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let service = Service::build(&config, Arc::new(SystemClock))?;
    let Service { state, runner, notifier } = service;
    worker::spawn_workers(config.workers, state.manager.clone(), runner, notifier, state.wake.clone());
    // the queue may hold tasks recovered from a previous run
    state.wake.notify_one();

    let manager = state.manager.clone();
    let every = Duration::from_secs(config.sweep_interval_secs);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let m = manager.clone();
            match tokio::task::spawn_blocking(move || m.sweep_expired()).await {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => log::error!("retention sweep: {e}"),
                Err(e) => log::error!("retention sweep: {e}"),
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| ServiceError::Io(format!("bind {}: {e}", config.bind)))?;
    log::info!("listening on {}", config.bind);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Io(e.to_string()))
}
