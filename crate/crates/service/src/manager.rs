//! Task metadata store and lifecycle.
//!
//! All mutations go through one mutex and end with an atomic rewrite of
//! `tasks.json`, so the file always holds a state the service passed through.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use arealink_core::linkage::LinkSelection;
use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::task::{LinkageTask, TaskStatus};
use crate::ServiceError;

/// How long a finished archive stays downloadable.
pub const RETENTION: Duration = Duration::days(7);

const TASKS_FILE: &str = "tasks.json";

#[derive(Debug, Default, Serialize, Deserialize)]
struct Persisted {
    next_seq: u64,
    tasks: Vec<LinkageTask>,
}

#[derive(Debug, Default)]
struct Inner {
    next_seq: u64,
    tasks: BTreeMap<String, LinkageTask>,
    queue: VecDeque<String>,
}

/// A task handed to a worker.
#[derive(Debug, Clone)]
pub struct Claim {
    pub task_id: String,
    pub upload: PathBuf,
    pub selection: LinkSelection,
}

pub struct TaskManager {
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for TaskManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaskManager").field("dir", &self.dir).finish_non_exhaustive()
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::Io(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(io(path))
}

fn remove_if_present(path: &Path) -> Result<(), ServiceError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io(path)(e)),
        _ => Ok(()),
    }
}

fn new_task_id() -> String {
    hex::encode(rand::rng().random::<[u8; 16]>())
}

impl TaskManager {
    /// Opens (or creates) the store under `dir`. Tasks left RUNNING by a
    /// previous process go back to the queue.
    pub fn open(dir: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        for sub in ["uploads", "results"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io(&p))?;
        }
        let path = dir.join(TASKS_FILE);
        let persisted: Persisted = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Persisted::default(),
            Err(e) => return Err(io(&path)(e)),
        };
        let now = clock.now();
        let mut inner = Inner { next_seq: persisted.next_seq, ..Default::default() };
        let mut recovered = 0;
        for mut t in persisted.tasks {
            if t.status == TaskStatus::Running {
                t.status = TaskStatus::Queued;
                t.updated_at = now;
                recovered += 1;
            }
            inner.next_seq = inner.next_seq.max(t.seq + 1);
            inner.tasks.insert(t.task_id.clone(), t);
        }
        let mut queued: Vec<&LinkageTask> = inner.tasks.values().filter(|t| t.status == TaskStatus::Queued).collect();
        queued.sort_by_key(|t| t.seq);
        inner.queue = queued.into_iter().map(|t| t.task_id.clone()).collect();
        if recovered > 0 {
            log::warn!("requeued {recovered} task(s) interrupted by a restart");
        }
        let m = TaskManager { dir, clock, inner: Mutex::new(inner) };
        m.persist(&m.lock())?;
        Ok(m)
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn persist(&self, inner: &Inner) -> Result<(), ServiceError> {
        let mut tasks: Vec<LinkageTask> = inner.tasks.values().cloned().collect();
        tasks.sort_by_key(|t| t.seq);
        let p = Persisted { next_seq: inner.next_seq, tasks };
        let bytes = serde_json::to_vec_pretty(&p).map_err(|e| ServiceError::Io(e.to_string()))?;
        write_atomic(&self.dir.join(TASKS_FILE), &bytes)
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn upload_path(&self, id: &str) -> PathBuf {
        self.dir.join("uploads").join(id)
    }

    fn result_path(&self, id: &str) -> PathBuf {
        self.dir.join("results").join(format!("{id}.zip"))
    }

    fn transition(t: &mut LinkageTask, to: TaskStatus, now: DateTime<Utc>) -> Result<(), ServiceError> {
        if !t.status.can_become(to) {
            return Err(ServiceError::IllegalTransition { task: t.task_id.clone(), from: t.status, to });
        }
        t.status = to;
        t.updated_at = now;
        Ok(())
    }

    /// Stores the upload and queues a new task. Validation happens before this.
    pub fn submit(&self, owner: &str, filename: &str, upload: &[u8], selection: LinkSelection) -> Result<LinkageTask, ServiceError> {
        let now = self.clock.now();
        let mut inner = self.lock();
        let mut id = new_task_id();
        while inner.tasks.contains_key(&id) {
            id = new_task_id();
        }
        let up = self.upload_path(&id);
        write_atomic(&up, upload)?;
        let task = LinkageTask {
            task_id: id.clone(),
            owner: owner.to_string(),
            filename: filename.to_string(),
            selection,
            status: TaskStatus::Queued,
            created_at: now,
            updated_at: now,
            expires_at: None,
            failure_reason: None,
            result: None,
            seq: inner.next_seq,
        };
        inner.next_seq += 1;
        inner.tasks.insert(id.clone(), task.clone());
        inner.queue.push_back(id.clone());
        if let Err(e) = self.persist(&inner) {
            inner.tasks.remove(&id);
            inner.queue.pop_back();
            inner.next_seq -= 1;
            let _ = fs::remove_file(&up);
            return Err(e);
        }
        Ok(task)
    }

    /// Takes the oldest queued task and marks it RUNNING.
    pub fn claim_next(&self) -> Result<Option<Claim>, ServiceError> {
        let now = self.clock.now();
        let mut inner = self.lock();
        while let Some(id) = inner.queue.pop_front() {
            let Some(t) = inner.tasks.get_mut(&id) else { continue };
            if t.status != TaskStatus::Queued {
                continue;
            }
            let before = t.clone();
            Self::transition(t, TaskStatus::Running, now)?;
            let claim = Claim { task_id: id.clone(), upload: self.upload_path(&id), selection: t.selection.clone() };
            if let Err(e) = self.persist(&inner) {
                inner.tasks.insert(id.clone(), before);
                inner.queue.push_front(id);
                return Err(e);
            }
            return Ok(Some(claim));
        }
        Ok(None)
    }

    /// Records a worker's outcome and removes the upload.
    pub fn finish(&self, task_id: &str, outcome: Result<Vec<u8>, String>) -> Result<LinkageTask, ServiceError> {
        let now = self.clock.now();
        let mut inner = self.lock();
        let t = inner.tasks.get_mut(task_id).ok_or_else(|| ServiceError::NotFound(task_id.to_string()))?;
        let before = t.clone();
        let result_path = self.result_path(task_id);
        match outcome {
            Ok(archive) => {
                Self::transition(t, TaskStatus::Succeeded, now)?;
                write_atomic(&result_path, &archive).inspect_err(|_| *t = before.clone())?;
                t.expires_at = Some(now + RETENTION);
                t.result = Some(result_path.clone());
            }
            Err(reason) => {
                Self::transition(t, TaskStatus::Failed, now)?;
                t.failure_reason = Some(reason);
            }
        }
        let done = t.clone();
        if let Err(e) = self.persist(&inner) {
            inner.tasks.insert(task_id.to_string(), before);
            let _ = fs::remove_file(&result_path);
            return Err(e);
        }
        drop(inner);
        remove_if_present(&self.upload_path(task_id))?;
        Ok(done)
    }

    /// Expires every SUCCEEDED task with `expires_at <= now` and deletes its
    /// archive. Returns how many tasks changed.
    pub fn sweep_expired_at(&self, now: DateTime<Utc>) -> Result<usize, ServiceError> {
        let mut inner = self.lock();
        let due: Vec<String> = inner
            .tasks
            .values()
            .filter(|t| t.status == TaskStatus::Succeeded && t.expires_at.is_some_and(|e| e <= now))
            .map(|t| t.task_id.clone())
            .collect();
        if due.is_empty() {
            return Ok(0);
        }
        // delete first: a crash between the two steps leaves a SUCCEEDED
        // task without a file, which download reports as gone
        for id in &due {
            remove_if_present(&self.result_path(id))?;
        }
        for id in &due {
            let t = inner.tasks.get_mut(id).expect("collected above");
            Self::transition(t, TaskStatus::Expired, now)?;
            t.result = None;
        }
        self.persist(&inner)?;
        log::info!("expired {} task result(s)", due.len());
        Ok(due.len())
    }

    pub fn sweep_expired(&self) -> Result<usize, ServiceError> {
        self.sweep_expired_at(self.clock.now())
    }

    /// Caller's tasks, newest first.
    pub fn list(&self, owner: &str) -> Result<Vec<LinkageTask>, ServiceError> {
        self.sweep_expired()?;
        let inner = self.lock();
        let mut v: Vec<LinkageTask> = inner.tasks.values().filter(|t| t.owner == owner).cloned().collect();
        v.sort_by_key(|t| std::cmp::Reverse(t.seq));
        Ok(v)
    }

    /// A task owned by `owner`. Foreign ids look exactly like unknown ones.
    pub fn get(&self, owner: &str, task_id: &str) -> Result<LinkageTask, ServiceError> {
        self.sweep_expired()?;
        let inner = self.lock();
        match inner.tasks.get(task_id) {
            Some(t) if t.owner == owner => Ok(t.clone()),
            _ => Err(ServiceError::NotFound(task_id.to_string())),
        }
    }

    /// Path of a downloadable archive.
    pub fn download_path(&self, owner: &str, task_id: &str) -> Result<PathBuf, ServiceError> {
        let t = self.get(owner, task_id)?;
        match t.status {
            TaskStatus::Succeeded => match t.result {
                Some(p) if p.exists() => Ok(p),
                _ => Err(ServiceError::Gone(task_id.to_string())),
            },
            TaskStatus::Expired => Err(ServiceError::Gone(task_id.to_string())),
            s => Err(ServiceError::NotReady { task: task_id.to_string(), status: s }),
        }
    }

    /// Every task regardless of owner, in submission order.
    pub fn snapshot(&self) -> Vec<LinkageTask> {
        let inner = self.lock();
        let mut v: Vec<LinkageTask> = inner.tasks.values().cloned().collect();
        v.sort_by_key(|t| t.seq);
        v
    }

    pub fn queue_len(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn upload_exists(&self, task_id: &str) -> bool {
        self.upload_path(task_id).exists()
    }

    pub fn result_exists(&self, task_id: &str) -> bool {
        self.result_path(task_id).exists()
    }
}
