use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use groundplan::graph::SemanticGraph;
use groundplan::mission::{LoopEvent, MissionReport, MissionSession, ModelClient, Phase};
use groundplan::GraphDiff;
use serde::{Deserialize, Serialize};
use tokio::sync::{watch, Notify};

/// A loop event with its position in the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub event: LoopEvent,
}

/// Coarse state as shown to operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Planning,
    AwaitingApproval,
    Executing,
    AwaitingOperator,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub spec: String,
    pub scenario_id: String,
    pub step_mode: bool,
    pub state: SessionState,
    pub phase: Phase,
    pub events: u64,
    pub report: MissionReport,
}

struct Core {
    session: MissionSession,
    client: Box<dyn ModelClient>,
}

struct Snapshot {
    phase: Phase,
    report: MissionReport,
}

/// Mission session shared between HTTP handlers and its driver task.
///
/// The driver alone touches `core`. Handlers talk to it through the inbox
/// and the approval flag, and read the snapshot and log, so no request ever
/// waits behind a model call.
pub struct SessionHandle {
    pub id: String,
    pub spec: String,
    pub scenario_id: String,
    pub step_mode: bool,
    core: Mutex<Core>,
    snapshot: Mutex<Snapshot>,
    log: Mutex<Vec<SeqEvent>>,
    inbox: Mutex<Vec<String>>,
    approved: AtomicBool,
    executing: AtomicBool,
    finished: AtomicBool,
    len_tx: watch::Sender<u64>,
    wake: Notify,
}

impl SessionHandle {
    pub(crate) fn new(
        id: String,
        scenario_id: String,
        step_mode: bool,
        session: MissionSession,
        client: Box<dyn ModelClient>,
    ) -> Arc<Self> {
        let spec = session.report().spec;
        let session = session.with_step_mode(step_mode);
        let snapshot = Snapshot {
            phase: session.phase().clone(),
            report: session.report(),
        };
        // Consoles start from an empty map, so the first frame carries the
        // whole initial map.
        let initial = GraphDiff::between(&SemanticGraph::empty(), session.known());
        let (len_tx, _) = watch::channel(0);
        let h = Arc::new(Self {
            id,
            spec,
            scenario_id,
            step_mode,
            core: Mutex::new(Core { session, client }),
            snapshot: Mutex::new(snapshot),
            log: Mutex::new(Vec::new()),
            inbox: Mutex::new(Vec::new()),
            approved: AtomicBool::new(false),
            executing: AtomicBool::new(false),
            finished: AtomicBool::new(false),
            len_tx,
            wake: Notify::new(),
        });
        let text = initial.render_text();
        h.publish(vec![LoopEvent::MapDiff {
            diff: initial,
            text,
        }]);
        h
    }

    fn publish(&self, events: Vec<LoopEvent>) {
        if events.is_empty() {
            return;
        }
        let mut log = self.log.lock().expect("log lock");
        for event in events {
            if matches!(event, LoopEvent::Done { .. }) {
                self.finished.store(true, Ordering::SeqCst);
            }
            let seq = log.len() as u64;
            log.push(SeqEvent { seq, event });
        }
        self.len_tx.send_replace(log.len() as u64);
    }

    pub fn event(&self, seq: u64) -> Option<SeqEvent> {
        self.log
            .lock()
            .expect("log lock")
            .get(seq as usize)
            .cloned()
    }

    pub fn events_from(&self, from: u64) -> Vec<SeqEvent> {
        let log = self.log.lock().expect("log lock");
        log.iter().skip(from as usize).cloned().collect()
    }

    /// True once the done event is in the log.
    pub fn finished(&self) -> bool {
        self.finished.load(Ordering::SeqCst)
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.len_tx.subscribe()
    }

    pub fn view(&self) -> SessionView {
        let snap = self.snapshot.lock().expect("snapshot lock");
        let state = match &snap.phase {
            Phase::Done { .. } => SessionState::Done,
            _ if self.executing.load(Ordering::SeqCst) => SessionState::Executing,
            Phase::Planning => SessionState::Planning,
            Phase::AwaitingApproval { .. } => SessionState::AwaitingApproval,
            Phase::AwaitingOperator { .. } => SessionState::AwaitingOperator,
        };
        SessionView {
            id: self.id.clone(),
            spec: self.spec.clone(),
            scenario_id: self.scenario_id.clone(),
            step_mode: self.step_mode,
            state,
            phase: snap.phase.clone(),
            events: self.log.lock().expect("log lock").len() as u64,
            report: snap.report.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(
            self.snapshot.lock().expect("snapshot lock").phase,
            Phase::Done { .. }
        )
    }

    pub fn awaiting_approval(&self) -> bool {
        matches!(
            self.snapshot.lock().expect("snapshot lock").phase,
            Phase::AwaitingApproval { .. }
        )
    }

    /// Queues an operator message for the driver.
    pub(crate) fn post(&self, text: String) {
        self.inbox.lock().expect("inbox lock").push(text);
        self.wake.notify_one();
    }

    pub(crate) fn approve(&self) {
        self.approved.store(true, Ordering::SeqCst);
        self.wake.notify_one();
    }

    /// One unit of driver work. Blocking: may call the model.
    fn advance(&self) -> Phase {
        let mut core = self.core.lock().expect("core lock");
        let Core { session, client } = &mut *core;
        for text in self.inbox.lock().expect("inbox lock").drain(..) {
            session.post_operator(text);
        }
        match session.phase() {
            Phase::Planning => {
                session.step(client.as_mut());
            }
            Phase::AwaitingApproval { .. } if self.approved.swap(false, Ordering::SeqCst) => {
                self.executing.store(true, Ordering::SeqCst);
                session.approve();
            }
            _ => {}
        }
        self.executing.store(false, Ordering::SeqCst);
        let events = session.drain_events();
        let phase = session.phase().clone();
        *self.snapshot.lock().expect("snapshot lock") = Snapshot {
            phase: phase.clone(),
            report: session.report(),
        };
        self.publish(events);
        phase
    }

    /// Runs the session until it is done, sleeping whenever it waits on the
    /// operator.
    pub(crate) async fn drive(self: Arc<Self>) {
        loop {
            let h = Arc::clone(&self);
            let phase = match tokio::task::spawn_blocking(move || h.advance()).await {
                Ok(p) => p,
                Err(e) => {
                    tracing::error!(session = %self.id, error = %e, "session driver failed");
                    return;
                }
            };
            match phase {
                Phase::Planning => {}
                Phase::Done { .. } => return,
                Phase::AwaitingApproval { .. } | Phase::AwaitingOperator { .. } => {
                    let pending = !self.inbox.lock().expect("inbox lock").is_empty()
                        || self.approved.load(Ordering::SeqCst);
                    if !pending {
                        self.wake.notified().await;
                    }
                }
            }
        }
    }
}
