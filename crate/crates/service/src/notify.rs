use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use crate::task::{LinkageTask, TaskStatus};

/// Body of every notification, in the log line and the webhook POST.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Notice {
    pub task_id: String,
    pub status: TaskStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryRecord {
    pub notice: Notice,
    pub channel: &'static str,
    pub delivered: bool,
    pub error: Option<String>,
}

enum Channel {
    Log,
    Webhook { url: String, agent: ureq::Agent },
}

/// Dispatches completion notices. Failures are recorded and logged but never
/// reach the task lifecycle.
pub struct Notifier {
    channel: Channel,
    history: Mutex<Vec<DeliveryRecord>>,
}

impl std::fmt::Debug for Notifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ch = match &self.channel {
            Channel::Log => "log".to_string(),
            Channel::Webhook { url, .. } => format!("webhook {url}"),
        };
        f.debug_struct("Notifier").field("channel", &ch).finish_non_exhaustive()
    }
}

const HISTORY_CAP: usize = 1_000;

impl Notifier {
    pub fn log() -> Self {
        Notifier { channel: Channel::Log, history: Mutex::new(Vec::new()) }
    }

    pub fn webhook(url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(10)))
            .http_status_as_error(true)
            .build()
            .into();
        Notifier { channel: Channel::Webhook { url: url.into(), agent }, history: Mutex::new(Vec::new()) }
    }

    /// Blocking; call from a blocking context when a webhook is configured.
    pub fn notify(&self, task: &LinkageTask) -> DeliveryRecord {
        let notice = Notice {
            task_id: task.task_id.clone(),
            status: task.status,
            failure_reason: task.failure_reason.clone(),
        };
        let body = serde_json::to_string(&notice).expect("notice serializes");
        let record = match &self.channel {
            Channel::Log => {
                log::info!(target: "arealink::notify", "{body}");
                DeliveryRecord { notice, channel: "log", delivered: true, error: None }
            }
            Channel::Webhook { url, agent } => {
                let res = agent.post(url).header("content-type", "application/json").send(body.as_bytes());
                let error = res.err().map(|e| e.to_string());
                if let Some(e) = &error {
                    log::warn!(target: "arealink::notify", "webhook delivery failed for {}: {e}", notice.task_id);
                }
                DeliveryRecord { notice, channel: "webhook", delivered: error.is_none(), error }
            }
        };
        let mut h = self.history.lock().unwrap_or_else(|p| p.into_inner());
        if h.len() == HISTORY_CAP {
            h.remove(0);
        }
        h.push(record.clone());
        record
    }

    /// Most recent delivery attempts, oldest first.
    pub fn history(&self) -> Vec<DeliveryRecord> {
        self.history.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}
