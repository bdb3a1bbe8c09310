use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::client::ModelClient;
use super::session::{run_mission, LoopConfig, MissionReport};
use crate::sim::WorldScenario;

/// One specification to run `runs` times.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub spec_id: String,
    pub spec: String,
    pub scenario: WorldScenario,
    pub runs: usize,
}

/// Aggregate for one specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub spec_id: String,
    pub spec: String,
    pub successes: usize,
    pub runs: usize,
    pub avg_distance_m: f64,
    /// Runs exhibiting each failure mode.
    pub failure_modes: BTreeMap<String, usize>,
}

impl SuiteRow {
    pub fn outcome(&self) -> String {
        format!("{}/{}", self.successes, self.runs)
    }

    /// Mean distance rounded to whole meters.
    pub fn avg_distance_text(&self) -> String {
        if self.runs == 0 {
            return "N/A".into();
        }
        format!("{}", self.avg_distance_m.round() as i64)
    }

    pub fn failure_modes_text(&self) -> String {
        if self.failure_modes.is_empty() {
            return "N/A".into();
        }
        self.failure_modes
            .iter()
            .map(|(m, n)| {
                if *n > 1 {
                    format!("{m} (x{n})")
                } else {
                    m.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    /// Per-spec reports, in run order.
    pub reports: Vec<Vec<MissionReport>>,
}

pub const TABLE_HEADER: &str = "| Specification | Outcome | Avg. Distance (m) | Failure modes |";
const TABLE_RULE: &str = "|---|---|---|---|";

impl SuiteReport {
    pub fn table(&self) -> String {
        let mut lines = vec![TABLE_HEADER.to_string(), TABLE_RULE.to_string()];
        for r in &self.rows {
            lines.push(format!(
                "| {} | {} | {} | {} |",
                r.spec_id,
                r.outcome(),
                r.avg_distance_text(),
                r.failure_modes_text()
            ));
        }
        lines.join("\n") + "\n"
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("suite serializes");
        s.push('\n');
        s
    }

    pub fn successes(&self) -> usize {
        self.rows.iter().map(|r| r.successes).sum()
    }

    pub fn runs(&self) -> usize {
        self.rows.iter().map(|r| r.runs).sum()
    }
}

/// Aggregates the reports of one specification.
pub fn summarize(spec_id: &str, spec: &str, reports: &[MissionReport]) -> SuiteRow {
    let runs = reports.len();
    let mut failure_modes = BTreeMap::new();
    for r in reports {
        for m in &r.failure_modes {
            *failure_modes.entry(m.clone()).or_insert(0) += 1;
        }
    }
    SuiteRow {
        spec_id: spec_id.to_string(),
        spec: spec.to_string(),
        successes: reports.iter().filter(|r| r.outcome.is_success()).count(),
        runs,
        avg_distance_m: if runs == 0 {
            0.0
        } else {
            reports.iter().map(|r| r.distance_m).sum::<f64>() / runs as f64
        },
        failure_modes,
    }
}

/// Runs every entry `runs` times on up to `jobs` threads. `client_for`
/// builds a fresh client for (entry, run index). Results do not depend on
/// `jobs`.
pub fn run_suite<F>(
    entries: &[SuiteEntry],
    client_for: F,
    cfg: &LoopConfig,
    jobs: usize,
) -> SuiteReport
where
    F: Fn(&SuiteEntry, usize) -> Box<dyn ModelClient> + Sync,
{
    let work: Vec<(usize, usize)> = entries
        .iter()
        .enumerate()
        .flat_map(|(i, e)| (0..e.runs).map(move |r| (i, r)))
        .collect();
    let slots: Vec<Mutex<Option<MissionReport>>> = work.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(i, r)) = work.get(k) else { break };
        let entry = &entries[i];
        let mut client = client_for(entry, r);
        let report = run_mission(&entry.spec, &entry.scenario, &mut client, cfg);
        *slots[k].lock().expect("slot lock") = Some(report);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(work.len().max(1)) {
            s.spawn(worker);
        }
    });

    let mut reports: Vec<Vec<MissionReport>> = entries.iter().map(|_| Vec::new()).collect();
    for ((i, _), slot) in work.iter().zip(slots) {
        reports[*i].push(slot.into_inner().expect("slot lock").expect("run finished"));
    }
    let rows = entries
        .iter()
        .zip(&reports)
        .map(|(e, rs)| summarize(&e.spec_id, &e.spec, rs))
        .collect();
    SuiteReport { rows, reports }
}
