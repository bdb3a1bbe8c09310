use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetRecord, RecordMeta};
use crate::mission::{run_mission, ClientError, LoopConfig, ModelClient, Outcome};
use crate::plan::{serialize_plan, Prompt};
use crate::sim::WorldScenario;

/// One mission to hand to the expert.
#[derive(Debug, Clone)]
pub struct CollectItem {
    pub spec: String,
    pub scenario: WorldScenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectReport {
    pub records: Vec<DatasetRecord>,
    /// (scenario id, spec, outcome) for missions that were left out.
    pub skipped: Vec<(String, String, Outcome)>,
}

/// Remembers every prompt it forwards, keyed by digest.
struct Recorder<'a> {
    inner: &'a mut dyn ModelClient,
    seen: BTreeMap<String, Prompt>,
}

impl ModelClient for Recorder<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, ClientError> {
        self.seen.insert(prompt.digest(), prompt.clone());
        self.inner.complete(prompt)
    }
}

/// Runs every item with the expert and keeps one record per validated
/// plan. Missions the expert did not complete are skipped whole, since a
/// plan that led nowhere is poor supervision.
pub fn collect(
    items: &[CollectItem],
    expert: &mut dyn ModelClient,
    cfg: &LoopConfig,
) -> CollectReport {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for item in items {
        let mut rec = Recorder {
            inner: &mut *expert,
            seen: BTreeMap::new(),
        };
        let report = run_mission(&item.spec, &item.scenario, &mut rec, cfg);
        if !report.outcome.is_success() {
            tracing::warn!(scenario = %item.scenario.id, spec = %item.spec, outcome = report.outcome.as_str(), "skipping mission");
            skipped.push((item.scenario.id.clone(), item.spec.clone(), report.outcome));
            continue;
        }
        for t in &report.trace {
            let (Some(plan), Some(v), Some(digest)) = (&t.plan, &t.validation, &t.prompt_digest)
            else {
                continue;
            };
            if !v.ok {
                continue;
            }
            let prompt = &rec.seen[digest];
            records.push(DatasetRecord::new(
                prompt.system.clone(),
                prompt.user.clone(),
                serialize_plan(plan).expect("validated plan serializes"),
                RecordMeta {
                    scenario_id: item.scenario.id.clone(),
                    iteration: t.iteration,
                    expert_model: report.client.clone(),
                    profile: item.scenario.profile.clone(),
                },
            ));
        }
    }
    CollectReport { records, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::{generate_specs, revalidate_record, synth_world, GreedyExpert};

    fn items(n: u64) -> Vec<CollectItem> {
        (0..n)
            .flat_map(|seed| {
                let w = synth_world(seed);
                generate_specs(&w.initial_state().known, 2, seed)
                    .into_iter()
                    .map(move |spec| CollectItem {
                        spec,
                        scenario: w.clone(),
                    })
            })
            .collect()
    }

    #[test]
    fn one_record_per_validated_iteration() {
        let items = items(4);
        let mut e = GreedyExpert::new();
        let out = collect(&items, &mut e, &LoopConfig::default());
        assert!(out.skipped.is_empty(), "{:?}", out.skipped);
        let mut expected = 0;
        for it in &items {
            let r = run_mission(
                &it.spec,
                &it.scenario,
                &mut GreedyExpert::new(),
                &LoopConfig::default(),
            );
            expected += r
                .trace
                .iter()
                .filter(|t| t.validation.as_ref().is_some_and(|v| v.ok))
                .count();
        }
        assert_eq!(out.records.len(), expected);
        for r in &out.records {
            assert_eq!(r.messages.len(), 3);
            assert_eq!(r.meta.expert_model, "greedy-expert");
            assert!(revalidate_record(r).unwrap().ok);
        }
    }

    #[test]
    fn failed_missions_are_skipped() {
        let w = synth_world(0);
        let items = vec![CollectItem {
            spec: "Find the moon".into(),
            scenario: w,
        }];
        let out = collect(&items, &mut GreedyExpert::new(), &LoopConfig::default());
        assert!(out.records.is_empty());
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].2, Outcome::FailureClarification);
    }
}
