use std::sync::Arc;

use arealink_core::catalog::CatalogStore;
use arealink_core::linkage::{link_archive, KeySpec, LinkOptions, ResolverContext};
use tokio::sync::Notify;
use tokio::task::JoinHandle;

use crate::manager::{Claim, TaskManager};
use crate::notify::Notifier;
use crate::task::LinkageTask;
use crate::ServiceError;

/// Runs one claimed task through the linkage engine.
#[derive(Debug, Clone)]
pub struct Runner {
    pub store: Arc<CatalogStore>,
    pub ctx: Arc<ResolverContext>,
    pub options: LinkOptions,
}

impl Runner {
    pub fn run(&self, claim: &Claim) -> Result<Vec<u8>, String> {
        let upload = std::fs::read(&claim.upload).map_err(|e| format!("upload unavailable: {e}"))?;
        link_archive(&upload, &KeySpec::Auto, &claim.selection, &self.store, &self.ctx, &self.options)
            .map(|(zip, _)| zip)
            .map_err(|e| e.to_string())
    }
}

fn run_guarded(runner: &Runner, claim: &Claim) -> Result<Vec<u8>, String> {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| runner.run(claim)))
        .unwrap_or_else(|_| Err("internal error while linking".into()))
}

/// Claims, runs and finishes the next queued task on the calling thread.
pub fn process_one(manager: &TaskManager, runner: &Runner, notifier: &Notifier) -> Result<Option<LinkageTask>, ServiceError> {
    let Some(claim) = manager.claim_next()? else { return Ok(None) };
    let outcome = run_guarded(runner, &claim);
    let task = manager.finish(&claim.task_id, outcome)?;
    notifier.notify(&task);
    Ok(Some(task))
}

/// Long-running workers pulling FIFO from the queue. `wake` is signalled on
/// every submit.
pub fn spawn_workers(
    count: usize,
    manager: Arc<TaskManager>,
    runner: Arc<Runner>,
    notifier: Arc<Notifier>,
    wake: Arc<Notify>,
) -> Vec<JoinHandle<()>> {
    (0..count)
        .map(|n| {
            let (manager, runner, notifier, wake) = (manager.clone(), runner.clone(), notifier.clone(), wake.clone());
            tokio::spawn(async move {
                loop {
                    let (m, r, no) = (manager.clone(), runner.clone(), notifier.clone());
                    match tokio::task::spawn_blocking(move || process_one(&m, &r, &no)).await {
                        Ok(Ok(Some(task))) => log::info!("worker {n}: task {} {}", task.task_id, task.status),
                        Ok(Ok(None)) => wake.notified().await,
                        Ok(Err(e)) => {
                            log::error!("worker {n}: {e}");
                            tokio::time::sleep(std::time::Duration::from_secs(1)).await;
                        }
                        Err(e) => log::error!("worker {n}: {e}"),
                    }
                }
            })
        })
        .collect()
}
