//! FIFO job queue with a single worker thread.
//!
//! Handlers only ever take the state lock briefly to read or enqueue; the
//! worker is the only writer of run state. Cancellation is a flag checked at
//! iteration boundaries.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Instant;

use serde::Serialize;
use splatedit_core::optimizer::{self, Control, IterationLog, Progress, RunConfig, RunReport, ViewSnapshot};
use splatedit_core::Scene;

use crate::artifacts;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running { t: u32, total: u32 },
    Done,
    Failed { reason: String },
    Cancelled,
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Done | JobState::Failed { .. } | JobState::Cancelled)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub id: String,
    #[serde(flatten)]
    pub state: JobState,
    pub config: RunConfig,
    /// Iterations logged so far.
    pub iterations: Vec<IterationLog>,
    pub report: Option<RunReport>,
    pub artifacts: Option<PathBuf>,
}

struct Job {
    view: JobView,
    cancel: Arc<AtomicBool>,
}

/// Latest iteration-boundary state of the running (or last) job.
#[derive(Debug, Clone)]
pub struct LiveSnapshot {
    pub job_id: String,
    pub t: u32,
    pub layers: Vec<u32>,
    pub views: Vec<ViewSnapshot>,
}

#[derive(Default)]
struct Inner {
    jobs: BTreeMap<String, Job>,
    queue: VecDeque<String>,
    next_id: u64,
    live: Option<Arc<LiveSnapshot>>,
    last_scene: Option<Arc<Scene>>,
    shutdown: bool,
}

struct Shared {
    inner: Mutex<Inner>,
    wake: Condvar,
    scenario: Arc<Scenario>,
    runs_dir: PathBuf,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum JobError {
    #[error("unknown job {0}")]
    NotFound(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub struct JobManager {
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl JobManager {
    /// Starts the worker. Artifacts go to `<runs_dir>/<job_id>/`.
    pub fn start(scenario: Arc<Scenario>, runs_dir: PathBuf) -> Self {
        let shared = Arc::new(Shared {
            inner: Mutex::new(Inner::default()),
            wake: Condvar::new(),
            scenario,
            runs_dir,
        });
        let worker_shared = Arc::clone(&shared);
        let worker = std::thread::Builder::new()
            .name("job-runner".into())
            .spawn(move || worker_loop(&worker_shared))
            .expect("spawning the job runner");
        JobManager { shared, worker: Some(worker) }
    }

    pub fn submit(&self, config: RunConfig) -> Result<String, JobError> {
        config.validate().map_err(|e| JobError::InvalidConfig(e.to_string()))?;
        if let Some(key) = &config.key_view {
            if self.shared.scenario.view(key).is_none() {
                return Err(JobError::InvalidConfig(format!("key view {key} is not in the scenario")));
            }
        }
        if let Some(missing) = config.layers.iter().find(|l| !self.shared.scenario.layers.contains(l)) {
            return Err(JobError::InvalidConfig(format!("layer {missing} has no attention maps")));
        }
        let mut inner = self.shared.lock();
        inner.next_id += 1;
        let id = format!("job-{:04}", inner.next_id);
        let view = JobView {
            id: id.clone(),
            state: JobState::Queued,
            config,
            iterations: Vec::new(),
            report: None,
            artifacts: None,
        };
        inner.jobs.insert(id.clone(), Job { view, cancel: Arc::new(AtomicBool::new(false)) });
        inner.queue.push_back(id.clone());
        drop(inner);
        self.shared.wake.notify_all();
        Ok(id)
    }

    pub fn poll(&self, id: &str) -> Result<JobView, JobError> {
        self.shared.lock().jobs.get(id).map(|j| j.view.clone()).ok_or_else(|| JobError::NotFound(id.into()))
    }

    /// Queued jobs are cancelled at once; running ones at the next
    /// iteration boundary.
    pub fn cancel(&self, id: &str) -> Result<JobView, JobError> {
        let mut inner = self.shared.lock();
        let job = inner.jobs.get_mut(id).ok_or_else(|| JobError::NotFound(id.into()))?;
        job.cancel.store(true, Ordering::SeqCst);
        if job.view.state == JobState::Queued {
            job.view.state = JobState::Cancelled;
        }
        let view = job.view.clone();
        inner.queue.retain(|q| q != id);
        Ok(view)
    }

    pub fn list(&self) -> Vec<JobView> {
        self.shared.lock().jobs.values().map(|j| j.view.clone()).collect()
    }

    pub fn live(&self) -> Option<Arc<LiveSnapshot>> {
        self.shared.lock().live.clone()
    }

    /// Scene of the most recent finished run.
    pub fn last_scene(&self) -> Option<Arc<Scene>> {
        self.shared.lock().last_scene.clone()
    }

    /// Report of the most recent job that completed.
    pub fn last_report(&self) -> Option<RunReport> {
        self.shared.lock().jobs.values().rev().find(|j| j.view.state == JobState::Done).and_then(|j| j.view.report.clone())
    }

    /// Blocks until the job reaches a terminal state.
    pub fn wait(&self, id: &str) -> Result<JobView, JobError> {
        let mut inner = self.shared.lock();
        loop {
            let job = inner.jobs.get(id).ok_or_else(|| JobError::NotFound(id.into()))?;
            if job.view.state.is_terminal() {
                return Ok(job.view.clone());
            }
            inner = self.shared.wake.wait(inner).unwrap_or_else(|e| e.into_inner());
        }
    }
}

impl Drop for JobManager {
    fn drop(&mut self) {
        {
            let mut inner = self.shared.lock();
            inner.shutdown = true;
            for job in inner.jobs.values() {
                job.cancel.store(true, Ordering::SeqCst);
            }
        }
        self.shared.wake.notify_all();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn worker_loop(shared: &Shared) {
    loop {
        let (id, config, cancel) = {
            let mut inner = shared.lock();
            loop {
                if inner.shutdown {
                    return;
                }
                if let Some(id) = inner.queue.pop_front() {
                    let job = inner.jobs.get_mut(&id).expect("queued job exists");
                    job.view.state = JobState::Running { t: 0, total: job.view.config.iterations };
                    break (id.clone(), job.view.config.clone(), Arc::clone(&job.cancel));
                }
                inner = shared.wake.wait(inner).unwrap_or_else(|e| e.into_inner());
            }
        };
        shared.wake.notify_all();
        run_job(shared, &id, &config, &cancel);
        shared.wake.notify_all();
    }
}

fn run_job(shared: &Shared, id: &str, config: &RunConfig, cancel: &AtomicBool) {
    let scenario = &shared.scenario;
    let out_dir = shared.runs_dir.join(id);
    let started = Instant::now();
    let mut observer = |p: &Progress<'_>| {
        if let Some(every) = config.dump_every {
            if every > 0 && p.log.t.is_multiple_of(every) {
                if let Err(e) = artifacts::dump_progress(&out_dir, p) {
                    tracing::warn!(job = id, "dump failed: {e:#}");
                }
            }
        }
        let mut inner = shared.lock();
        inner.live = Some(Arc::new(LiveSnapshot {
            job_id: id.into(),
            t: p.log.t,
            layers: p.layers.to_vec(),
            views: p.views.to_vec(),
        }));
        if let Some(job) = inner.jobs.get_mut(id) {
            job.view.state = JobState::Running { t: p.log.t, total: p.total };
            job.view.iterations.push(p.log.clone());
        }
        drop(inner);
        shared.wake.notify_all();
        if cancel.load(Ordering::SeqCst) {
            Control::Cancel
        } else {
            Control::Continue
        }
    };
    let result = optimizer::run_edit(scenario.scene.clone(), &scenario.edit_inputs(), config, &mut observer);
    let elapsed = started.elapsed().as_secs_f64();

    let (state, report, artifacts_dir) = match result {
        Ok(mut outcome) => {
            outcome.report.wall_time_s = elapsed;
            let written = artifacts::write_run(&out_dir, config, &outcome, scenario);
            let state = match (&written, outcome.report.cancelled) {
                (Err(e), _) => JobState::Failed { reason: format!("writing artifacts: {e:#}") },
                (Ok(()), true) => JobState::Cancelled,
                (Ok(()), false) => JobState::Done,
            };
            if state == JobState::Done {
                shared.lock().last_scene = Some(Arc::new(outcome.scene));
            }
            (state, Some(outcome.report), written.is_ok().then_some(out_dir))
        }
        Err(e) => (JobState::Failed { reason: e.to_string() }, None, None),
    };
    tracing::info!(job = id, ?state, "job finished in {elapsed:.2}s");
    let mut inner = shared.lock();
    if let Some(job) = inner.jobs.get_mut(id) {
        job.view.state = state;
        job.view.report = report;
        job.view.artifacts = artifacts_dir;
    }
}
