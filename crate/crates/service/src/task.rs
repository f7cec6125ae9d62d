use std::fmt;
use std::path::PathBuf;

use arealink_core::linkage::LinkSelection;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Expired,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 5] =
        [TaskStatus::Queued, TaskStatus::Running, TaskStatus::Succeeded, TaskStatus::Failed, TaskStatus::Expired];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Queued => "QUEUED",
            TaskStatus::Running => "RUNNING",
            TaskStatus::Succeeded => "SUCCEEDED",
            TaskStatus::Failed => "FAILED",
            TaskStatus::Expired => "EXPIRED",
        }
    }

    /// The lifecycle edges. Startup recovery (RUNNING back to QUEUED) is
    /// the only other move and goes through its own path.
    pub fn can_become(self, next: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!((self, next), (Queued, Running) | (Running, Succeeded) | (Running, Failed) | (Succeeded, Expired))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Failed | TaskStatus::Expired)
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageTask {
    pub task_id: String,
    pub owner: String,
    pub filename: String,
    pub selection: LinkSelection,
    pub status: TaskStatus,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default)]
    pub expires_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub failure_reason: Option<String>,
    /// Archive on disk; present only while SUCCEEDED.
    #[serde(default)]
    pub result: Option<PathBuf>,
    /// Submission order, used for FIFO dispatch.
    pub seq: u64,
}

impl LinkageTask {
    /// `id:year` labels for the task table.
    pub fn dataset_labels(&self) -> Vec<String> {
        self.selection.entries.iter().map(|e| format!("{}:{}", e.dataset_id, e.year)).collect()
    }
}

/// One row of the task table shown to users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: String,
    pub filename: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub status: TaskStatus,
    pub datasets: Vec<String>,
    /// Relative download URL while the archive is available.
    pub download: Option<String>,
}

impl From<&LinkageTask> for TaskRow {
    fn from(t: &LinkageTask) -> Self {
        TaskRow {
            task_id: t.task_id.clone(),
            filename: t.filename.clone(),
            created_at: t.created_at,
            updated_at: t.updated_at,
            status: t.status,
            datasets: t.dataset_labels(),
            download: (t.status == TaskStatus::Succeeded).then(|| format!("/api/tasks/{}/download", t.task_id)),
        }
    }
}

/// Full record for `GET /api/tasks/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDetail {
    #[serde(flatten)]
    pub row: TaskRow,
    pub selection: LinkSelection,
    pub expires_at: Option<DateTime<Utc>>,
    pub failure_reason: Option<String>,
}

impl From<&LinkageTask> for TaskDetail {
    fn from(t: &LinkageTask) -> Self {
        TaskDetail {
            row: TaskRow::from(t),
            selection: t.selection.clone(),
            expires_at: t.expires_at,
            failure_reason: t.failure_reason.clone(),
        }
    }
}
