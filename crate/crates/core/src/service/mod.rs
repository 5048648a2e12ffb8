//! Trial sessions for the browser task: condition order, overlays, trace
//! submission and export.
//!
//! Session state is a fold over an append-only event list. When a log
//! directory is configured every event is written to `<session_id>.ndjson`
//! before it is applied, and [`GuidanceService::new`] replays whatever it
//! finds there.

pub mod http;
pub mod overlay;

pub use overlay::{lift_to_surface, Overlay, OverlayGeometry, Projection};

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{format_metrics_csv, score_trial, ScoringOptions, TrialMetrics};
use crate::planning::ResectionPlan;
use crate::registration::io::{format_result, parse_fiducials};
use crate::registration::register;
use crate::rng;
use crate::sim::{Condition, CutTrace, CHANNEL_ORDER};
use crate::stats::{analyze, DEFAULT_ALPHA};

pub const LOG_EXTENSION: &str = "ndjson";

#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub scoring: ScoringOptions,
    pub alpha: f64,
    /// Offer the palpation region on unguided overlays.
    pub palpation_hint: bool,
    pub log_dir: Option<PathBuf>,
    /// Seeds sessions created without an explicit seed.
    pub seed: u64,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            scoring: ScoringOptions::default(),
            alpha: DEFAULT_ALPHA,
            palpation_hint: true,
            log_dir: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        participant_id: String,
        seed: u64,
        order: [Condition; 2],
        created_at_ms: u64,
        plan: String,
    },
    Registered {
        fre_rms: f64,
        record: String,
    },
    TraceSubmitted {
        trial: usize,
        trace: String,
        lifted: bool,
        metrics: TrialMetrics,
    },
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialState {
    pub index: usize,
    pub condition: Condition,
    #[serde(skip)]
    pub trace: Option<String>,
    pub lifted: bool,
    pub metrics: Option<TrialMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSession {
    pub session_id: String,
    pub participant_id: String,
    pub seed: u64,
    pub order: [Condition; 2],
    pub created_at_ms: u64,
    pub plan: String,
    pub trials: [TrialState; 2],
    pub registration: Option<String>,
    pub registration_fre_rms: Option<f64>,
    pub closed: bool,
    /// Events applied so far.
    pub events: usize,
}

impl TrialSession {
    /// Builds a session from its event list.
    pub fn fold(events: &[Event]) -> Result<Self> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty event list".into()))?;
        let Event::Created {
            session_id,
            participant_id,
            seed,
            order,
            created_at_ms,
            plan,
        } = first
        else {
            return Err(Error::InvalidArgument("first event must be 'created'".into()));
        };
        if order[0] == order[1] {
            return Err(Error::InvalidArgument(format!("order {order:?} is not a permutation")));
        }
        let trial = |index: usize| TrialState {
            index,
            condition: order[index],
            trace: None,
            lifted: false,
            metrics: None,
        };
        let mut s = Self {
            session_id: session_id.clone(),
            participant_id: participant_id.clone(),
            seed: *seed,
            order: *order,
            created_at_ms: *created_at_ms,
            plan: plan.clone(),
            trials: [trial(0), trial(1)],
            registration: None,
            registration_fre_rms: None,
            closed: false,
            events: 1,
        };
        for e in rest {
            s.apply(e)?;
        }
        Ok(s)
    }

    fn check(&self, e: &Event) -> Result<()> {
        if self.closed {
            return Err(Error::Conflict(format!("session {} is closed", self.session_id)));
        }
        match e {
            Event::Created { .. } => Err(Error::Conflict(format!("session {} already exists", self.session_id))),
            Event::TraceSubmitted { trial, metrics, .. } => {
                let t = self
                    .trials
                    .get(*trial)
                    .ok_or_else(|| Error::NotFound(format!("trial {trial} in session {}", self.session_id)))?;
                if t.metrics.is_some() {
                    return Err(Error::Conflict(format!("trial {trial} already submitted")));
                }
                if self.current_trial() != Some(*trial) {
                    return Err(Error::Conflict(format!(
                        "trial {trial} is not open; current trial is {:?}",
                        self.current_trial()
                    )));
                }
                if metrics.condition != t.condition {
                    return Err(Error::InvalidTrace(format!(
                        "trace condition {} does not match trial {trial} ({})",
                        metrics.condition, t.condition
                    )));
                }
                Ok(())
            }
            Event::Registered { .. } | Event::Closed => Ok(()),
        }
    }

    fn apply(&mut self, e: &Event) -> Result<()> {
        self.check(e)?;
        match e {
            Event::Created { .. } => unreachable!("rejected by check"),
            Event::Registered { fre_rms, record } => {
                self.registration = Some(record.clone());
                self.registration_fre_rms = Some(*fre_rms);
            }
            Event::TraceSubmitted {
                trial,
                trace,
                lifted,
                metrics,
            } => {
                let t = &mut self.trials[*trial];
                t.trace = Some(trace.clone());
                t.lifted = *lifted;
                t.metrics = Some(metrics.clone());
            }
            Event::Closed => self.closed = true,
        }
        self.events += 1;
        Ok(())
    }

    /// First trial without a submission, unless the session is closed.
    pub fn current_trial(&self) -> Option<usize> {
        if self.closed {
            return None;
        }
        self.trials.iter().position(|t| t.metrics.is_none())
    }

    pub fn is_complete(&self) -> bool {
        self.trials.iter().all(|t| t.metrics.is_some())
    }

    /// Occupies its participant until both trials are in or it is closed.
    fn holds_participant(&self) -> bool {
        !self.closed && !self.is_complete()
    }

    pub fn guided_first(&self) -> bool {
        self.order[0] == Condition::Guided
    }
}

/// Condition order for a session seed.
pub fn session_order(seed: u64) -> [Condition; 2] {
    if rng::substream(seed, CHANNEL_ORDER, 1).random_bool(0.5) {
        [Condition::Guided, Condition::Unguided]
    } else {
        [Condition::Unguided, Condition::Guided]
    }
}

pub fn session_id(n: u64) -> String {
    format!("s-{n:06}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Export {
    pub metrics_csv: String,
    pub report: String,
    pub stats_csv: String,
    pub sessions: usize,
    /// Sessions left out for missing a trial.
    pub excluded: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: TrialSession,
    pub current_trial: Option<usize>,
}

struct Entry {
    session: Mutex<TrialSession>,
    events: Mutex<Vec<Event>>,
}

#[derive(Default)]
struct Registry {
    sessions: BTreeMap<String, Arc<Entry>>,
    open_participants: BTreeSet<String>,
    next_id: u64,
}

pub struct GuidanceService {
    plan: Arc<ResectionPlan>,
    plan_label: String,
    options: ServiceOptions,
    geometry: OverlayGeometry,
    registry: Mutex<Registry>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl GuidanceService {
    /// Starts the service, replaying the logs in `options.log_dir` if any.
    pub fn new(plan: ResectionPlan, plan_label: impl Into<String>, options: ServiceOptions) -> Result<Self> {
        let svc = Self {
            geometry: OverlayGeometry::new(&plan),
            plan: Arc::new(plan),
            plan_label: plan_label.into(),
            options,
            registry: Mutex::new(Registry::default()),
        };
        if let Some(dir) = &svc.options.log_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            svc.replay(dir)?;
        }
        Ok(svc)
    }

    fn replay(&self, dir: &Path) -> Result<()> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == LOG_EXTENSION))
            .collect();
        files.sort();
        let mut reg = lock(&self.registry);
        for path in files {
            let events = read_log(&path)?;
            let session = TrialSession::fold(&events)?;
            if let Some(n) = session.session_id.strip_prefix("s-").and_then(|n| n.parse::<u64>().ok()) {
                reg.next_id = reg.next_id.max(n);
            }
            if session.holds_participant() && !reg.open_participants.insert(session.participant_id.clone()) {
                return Err(Error::Conflict(format!(
                    "log {} reopens participant {}",
                    path.display(),
                    session.participant_id
                )));
            }
            reg.sessions.insert(
                session.session_id.clone(),
                Arc::new(Entry {
                    session: Mutex::new(session),
                    events: Mutex::new(events),
                }),
            );
        }
        Ok(())
    }

    pub fn plan(&self) -> &ResectionPlan {
        &self.plan
    }

    pub fn plan_label(&self) -> &str {
        &self.plan_label
    }

    pub fn options(&self) -> &ServiceOptions {
        &self.options
    }

    pub fn geometry(&self) -> &OverlayGeometry {
        &self.geometry
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.options
            .log_dir
            .as_ref()
            .map(|d| d.join(format!("{id}.{LOG_EXTENSION}")))
    }

    /// Validates `event` against the session, persists it, then applies it.
    fn commit(&self, entry: &Entry, session: &mut TrialSession, event: Event) -> Result<()> {
        session.check(&event)?;
        if let Some(path) = self.log_path(&session.session_id) {
            append_event(&path, &event)?;
        }
        session.apply(&event)?;
        lock(&entry.events).push(event);
        Ok(())
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>> {
        lock(&self.registry)
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    pub fn create_session(&self, participant_id: &str, seed: Option<u64>) -> Result<TrialSession> {
        let participant_id = participant_id.trim();
        if participant_id.is_empty() || participant_id.contains([',', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "participant id '{participant_id}' must be non-empty without commas or newlines"
            )));
        }
        let mut reg = lock(&self.registry);
        if reg.open_participants.contains(participant_id) {
            return Err(Error::Conflict(format!("participant {participant_id} already has an open session")));
        }
        reg.next_id += 1;
        let n = reg.next_id;
        let id = session_id(n);
        let seed = seed.unwrap_or_else(|| rng::derive_seed(self.options.seed, n));
        let event = Event::Created {
            session_id: id.clone(),
            participant_id: participant_id.to_string(),
            seed,
            order: session_order(seed),
            created_at_ms: now_ms(),
            plan: self.plan_label.clone(),
        };
        if let Some(path) = self.log_path(&id) {
            append_event(&path, &event)?;
        }
        let session = TrialSession::fold(std::slice::from_ref(&event))?;
        reg.open_participants.insert(participant_id.to_string());
        reg.sessions.insert(
            id,
            Arc::new(Entry {
                session: Mutex::new(session.clone()),
                events: Mutex::new(vec![event]),
            }),
        );
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<TrialSession> {
        Ok(lock(&self.entry(id)?.session).clone())
    }

    pub fn session_view(&self, id: &str) -> Result<SessionView> {
        let session = self.session(id)?;
        Ok(SessionView {
            current_trial: session.current_trial(),
            session,
        })
    }

    pub fn session_ids(&self) -> Vec<String> {
        lock(&self.registry).sessions.keys().cloned().collect()
    }

    pub fn events(&self, id: &str) -> Result<Vec<Event>> {
        Ok(lock(&self.entry(id)?.events).clone())
    }

    /// Overlay payload for the open trial.
    pub fn overlay(&self, id: &str, trial: usize) -> Result<Overlay> {
        let entry = self.entry(id)?;
        let s = lock(&entry.session);
        let t = s
            .trials
            .get(trial)
            .ok_or_else(|| Error::NotFound(format!("trial {trial} in session {id}")))?;
        if s.current_trial() != Some(trial) {
            return Err(Error::Conflict(format!("trial {trial} of session {id} is not open")));
        }
        Ok(self.geometry.payload(id, trial, t.condition, self.options.palpation_hint))
    }

    /// Registers captured fiducials (model and measured columns) for the session.
    pub fn register(&self, id: &str, fiducial_table: &str) -> Result<String> {
        let f = parse_fiducials(fiducial_table)?;
        let r = register(&f)?;
        let record = format_result(&r, f.labels());
        let entry = self.entry(id)?;
        let mut s = lock(&entry.session);
        self.commit(
            &entry,
            &mut s,
            Event::Registered {
                fre_rms: r.fre_rms,
                record: record.clone(),
            },
        )?;
        Ok(record)
    }

    /// Scores a trace in the trace text format and closes the trial. With
    /// `lift`, samples are first dropped onto the capsule along the view
    /// direction, for input captured on the projection plane.
    pub fn submit_trace(&self, id: &str, trial: usize, text: &str, lift: bool) -> Result<TrialMetrics> {
        let entry = self.entry(id)?;
        let mut s = lock(&entry.session);
        if s.closed {
            return Err(Error::Conflict(format!("session {id} is closed")));
        }
        if trial >= s.trials.len() {
            return Err(Error::NotFound(format!("trial {trial} in session {id}")));
        }
        let parsed = CutTrace::parse(text)?;
        let trace = if lift {
            lift_to_surface(&parsed, self.plan.liver(), &self.geometry.projection)?
        } else {
            parsed
        };
        if trace.condition() != s.trials[trial].condition {
            return Err(Error::InvalidTrace(format!(
                "trace condition {} does not match trial {trial} ({})",
                trace.condition(),
                s.trials[trial].condition
            )));
        }
        let metrics = score_trial(&s.participant_id, &trace, &self.plan, &self.options.scoring)?;
        self.commit(
            &entry,
            &mut s,
            Event::TraceSubmitted {
                trial,
                trace: text.to_string(),
                lifted: lift,
                metrics: metrics.clone(),
            },
        )?;
        if s.is_complete() {
            lock(&self.registry).open_participants.remove(&s.participant_id);
        }
        Ok(metrics)
    }

    pub fn trial_metrics(&self, id: &str, trial: usize) -> Result<TrialMetrics> {
        let s = self.session(id)?;
        let t = s
            .trials
            .get(trial)
            .ok_or_else(|| Error::NotFound(format!("trial {trial} in session {id}")))?;
        t.metrics
            .clone()
            .ok_or_else(|| Error::NotFound(format!("no metrics yet for trial {trial} of session {id}")))
    }

    pub fn close_session(&self, id: &str) -> Result<TrialSession> {
        let entry = self.entry(id)?;
        let mut s = lock(&entry.session);
        self.commit(&entry, &mut s, Event::Closed)?;
        lock(&self.registry).open_participants.remove(&s.participant_id);
        Ok(s.clone())
    }

    /// Metrics CSV, report and statistics over every complete session, in
    /// session order. Incomplete sessions are listed in `excluded`.
    pub fn export(&self) -> Result<Export> {
        let sessions: Vec<TrialSession> = {
            let reg = lock(&self.registry);
            reg.sessions.values().map(|e| lock(&e.session).clone()).collect()
        };
        let mut trials = Vec::new();
        let mut excluded = Vec::new();
        let mut complete = 0;
        for s in &sessions {
            if s.is_complete() {
                complete += 1;
                trials.extend(s.trials.iter().filter_map(|t| t.metrics.clone()));
            } else {
                let done = s.trials.iter().filter(|t| t.metrics.is_some()).count();
                excluded.push(format!("{} participant={} trials={done}/2", s.session_id, s.participant_id));
            }
        }
        if complete < 2 {
            return Err(Error::InvalidArgument(format!(
                "{complete} complete session(s), at least 2 required"
            )));
        }
        let analysis = analyze(&trials, self.options.alpha)?;
        Ok(Export {
            metrics_csv: format_metrics_csv(&trials),
            report: analysis.report_text(),
            stats_csv: analysis.stats_csv(),
            sessions: complete,
            excluded,
        })
    }
}

fn append_event(path: &Path, event: &Event) -> Result<()> {
    let mut line = serde_json::to_string(event).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// Reads one session log.
pub fn read_log(path: &Path) -> Result<Vec<Event>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(line.trim()).map_err(|e| Error::parse(offset, e.to_string()))?);
        }
        offset += line.len();
    }
    Ok(events)
}
