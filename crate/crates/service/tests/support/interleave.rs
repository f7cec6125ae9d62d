#![allow(dead_code)]
//! Randomized interleavings of submits, claims, completions, clock moves,
//! sweeps, reads and restarts. After every step the observed state must only
//! have moved along lifecycle edges, and files on disk must match statuses.

use std::collections::HashMap;
use std::sync::Arc;

use arealink_core::linkage::{LinkSelection, SelectionEntry};
use arealink_service::{Clock, ManualClock, ServiceError, TaskManager, TaskStatus};
use chrono::{Duration, TimeZone, Utc};
use rand::Rng;

pub const OWNERS: [&str; 2] = ["site-a", "site-b"];

pub struct World {
    pub dir: tempfile::TempDir,
    pub clock: Arc<ManualClock>,
    pub m: TaskManager,
    running: Vec<String>,
    seen: HashMap<String, TaskStatus>,
}

impl World {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()));
        let m = TaskManager::open(dir.path(), clock.clone()).unwrap();
        World { dir, clock, m, running: Vec::new(), seen: HashMap::new() }
    }

    fn check(&mut self, restarted: bool, ctx: &str) {
        let now = self.clock.now();
        for t in self.m.snapshot() {
            if let Some(&prev) = self.seen.get(&t.task_id) {
                let ok = prev == t.status
                    || prev.can_become(t.status)
                    || (restarted && prev == TaskStatus::Running && t.status == TaskStatus::Queued);
                assert!(ok, "{ctx}: {} moved {prev} -> {}", t.task_id, t.status);
            } else {
                assert_eq!(t.status, TaskStatus::Queued, "{ctx}: new task not QUEUED");
            }
            let reached_success = matches!(t.status, TaskStatus::Succeeded | TaskStatus::Expired);
            assert_eq!(t.expires_at.is_some(), reached_success, "{ctx}: expires_at for {}", t.status);
            assert_eq!(self.m.result_exists(&t.task_id), t.status == TaskStatus::Succeeded, "{ctx}: result file for {}", t.status);
            assert_eq!(t.result.is_some(), t.status == TaskStatus::Succeeded, "{ctx}");
            let pending = matches!(t.status, TaskStatus::Queued | TaskStatus::Running);
            assert_eq!(self.m.upload_exists(&t.task_id), pending, "{ctx}: upload file for {}", t.status);
            assert_eq!(t.failure_reason.is_some(), t.status == TaskStatus::Failed, "{ctx}");
            if let Some(e) = t.expires_at {
                assert!(t.status != TaskStatus::Expired || e <= now, "{ctx}: expired early");
            }
            self.seen.insert(t.task_id.clone(), t.status);
        }
    }

    /// Reads sweep first, so what they return must already honour retention.
    fn observe(&mut self, owner: &str) {
        let now = self.clock.now();
        let listed = self.m.list(owner).unwrap();
        assert!(listed.iter().all(|t| t.owner == owner));
        for t in self.m.snapshot() {
            if t.status == TaskStatus::Succeeded {
                assert!(now < t.expires_at.unwrap(), "downloadable past expiry");
            }
            let dl = self.m.download_path(owner, &t.task_id);
            match (t.owner == owner, t.status, dl) {
                (false, _, Err(ServiceError::NotFound(_))) => {}
                (true, TaskStatus::Succeeded, Ok(p)) => assert!(p.exists()),
                (true, TaskStatus::Expired, Err(ServiceError::Gone(_))) => {}
                (true, TaskStatus::Queued | TaskStatus::Running | TaskStatus::Failed, Err(ServiceError::NotReady { .. })) => {}
                (mine, s, r) => panic!("download by owner={mine} of {s} gave {r:?}"),
            }
        }
    }
}

pub fn selection() -> LinkSelection {
    LinkSelection::new(vec![SelectionEntry::all("svi", 2020)])
}

/// One seeded run of 10 to 40 random steps; panics on the first violation.
pub fn run_one(seed: u64) {
    let mut rng = arealink_testkit::rng(seed);
    let mut w = World::new();
    let steps = rng.random_range(10..40);
    for step in 0..steps {
        let ctx = format!("seed {seed} step {step}");
        let mut restarted = false;
        match rng.random_range(0..100) {
            0..=19 => {
                let owner = OWNERS[rng.random_range(0..2)];
                w.m.submit(owner, "c.csv", b"fips\n12001000100\n", selection()).unwrap();
            }
            20..=34 => {
                if let Some(c) = w.m.claim_next().unwrap() {
                    w.running.push(c.task_id);
                }
            }
            35..=52 if !w.running.is_empty() => {
                let id = w.running.swap_remove(rng.random_range(0..w.running.len()));
                let outcome = if rng.random_bool(0.75) { Ok(vec![b'P', b'K', step as u8]) } else { Err("engine error".into()) };
                w.m.finish(&id, outcome).unwrap();
            }
            53..=57 => {
                // completing something that is not RUNNING must be refused and change nothing
                let snap = w.m.snapshot();
                if let Some(t) = snap.iter().find(|t| t.status != TaskStatus::Running) {
                    let before = w.m.snapshot();
                    assert!(matches!(w.m.finish(&t.task_id, Ok(vec![0])), Err(ServiceError::IllegalTransition { .. })), "{ctx}");
                    assert_eq!(before, w.m.snapshot(), "{ctx}");
                }
            }
            58..=69 => {
                let snap = w.m.snapshot();
                // clocks only move forward; aim at a pending expiry edge
                let now = w.clock.now();
                let edge = snap.iter().filter_map(|t| t.expires_at).filter(|e| *e - Duration::milliseconds(1) > now).min();
                match (rng.random_range(0..3), edge) {
                    (0, Some(e)) => w.clock.set(e - Duration::milliseconds(1)),
                    (1, Some(e)) => w.clock.set(e),
                    _ => w.clock.advance(Duration::seconds(rng.random_range(0..(10 * 86_400)))),
                }
            }
            70..=79 => {
                let n = w.m.sweep_expired().unwrap();
                assert_eq!(w.m.sweep_expired().unwrap(), 0, "{ctx}: sweep not idempotent after {n}");
            }
            80..=91 => {
                let owner = OWNERS[rng.random_range(0..2)];
                w.observe(owner);
            }
            92..=99 => {
                let clock = w.clock.clone();
                let dir = w.dir.path().to_path_buf();
                w.m = TaskManager::open(dir, clock).unwrap();
                w.running.clear();
                restarted = true;
            }
            _ => {}
        }
        w.check(restarted, &ctx);
    }
    w.observe(OWNERS[0]);
    w.check(false, "final");
}

