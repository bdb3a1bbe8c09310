//! The closed planning loop.
//!
//! Each iteration renders a prompt from the robot's known map and history,
//! asks a [`ModelClient`] for a plan, validates it (feeding violations back
//! on failure), then executes tasks in the simulator until the map changes
//! or the mission ends.

mod client;
mod session;
mod suite;

pub use client::{
    ClientError, ModelClient, RemoteClient, RemoteConfig, ScriptRule, ScriptedClient, ENV_API_KEY,
    ENV_ENDPOINT, ENV_MODEL, ENV_TEMPERATURE,
};
pub use session::{
    run_mission, LoopConfig, LoopEvent, MissionReport, MissionSession, Outcome, Phase, StepRecord,
    TraceRecord, FAILURE_COMMS, FAILURE_OBSTACLE, FAILURE_ODOMETRY, ODOMETRY_TOLERANCE,
};
pub use suite::{run_suite, summarize, SuiteEntry, SuiteReport, SuiteRow, TABLE_HEADER};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{shortest_path, NodeId};
    use crate::sim::{CommSite, GoalPredicate, WorldScenario};
    use crate::validate::ViolationKind;

    const WORLD: &str = r#"{
      "id": "campus",
      "graph": {"nodes": [
          {"id":"home","kind":"region","class":"base","x":5,"y":5},
          {"id":"road","kind":"region","class":"road","x":20,"y":5},
          {"id":"lot","kind":"region","class":"parking_lot","x":40,"y":5},
          {"id":"island","kind":"region","class":"field","x":55,"y":55},
          {"id":"car_1","kind":"object","class":"car","x":42,"y":8,"desc":"white van, engine running","visible":false}
        ],
        "edges": [
          {"a":"home","b":"road","kind":"traversability"},
          {"a":"lot","b":"road","kind":"traversability"},
          {"a":"car_1","b":"lot","kind":"containment"}
        ]},
      "grid": {"width": 64, "height": 64, "resolution": 1.0, "origin": [0, 0]},
      "start_node": "lot",
      "goal": {"visit_node": "home"}
    }"#;

    fn world() -> WorldScenario {
        WorldScenario::from_json(WORLD).unwrap()
    }

    fn plan(tasks: &str) -> String {
        format!("Thinking about it.\n```json\n{{\"reasoning\": \"r\", \"tasks\": [{tasks}]}}\n```")
    }

    fn goto(id: &str) -> String {
        format!(r#"{{"behavior": "goto", "args": {{"node": "{id}"}}}}"#)
    }

    #[test]
    fn single_goto_mission() {
        let w = world();
        let mut c = ScriptedClient::new(vec![plan(&goto("home"))]);
        let r = run_mission("Return to home", &w, &mut c, &LoopConfig::default());
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.llm_calls, 1);
        let expect = shortest_path(
            &w.truth,
            &NodeId::new("lot").unwrap(),
            &NodeId::new("home").unwrap(),
        )
        .unwrap()
        .length_m;
        assert!((r.distance_m - expect).abs() < 1e-9);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].steps.len(), 1);
    }

    fn repair_client() -> ScriptedClient {
        ScriptedClient::default()
            .with_rule(&["[feedback]"], plan(&goto("home")))
            .with_fallback(plan(&goto("island")))
    }

    #[test]
    fn feedback_repairs_a_faulty_plan() {
        let w = world();
        let r = run_mission(
            "Return to home",
            &w,
            &mut repair_client(),
            &LoopConfig::default(),
        );
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.llm_calls, 2);
        let first = r.trace[0].validation.as_ref().unwrap();
        assert!(first.has_kind(ViolationKind::Reachability));
        assert!(first
            .feedback_text
            .starts_with("Task 0 (goto): reachability violation"));
        assert!(first.feedback_text.contains("island"));

        let cfg = LoopConfig {
            feedback_enabled: false,
            ..LoopConfig::default()
        };
        let r = run_mission("Return to home", &w, &mut repair_client(), &cfg);
        assert_eq!(r.outcome, Outcome::FailureValidationExhausted);
        assert_eq!(r.llm_calls, 3);
    }

    #[test]
    fn replans_after_map_update() {
        let w = WorldScenario {
            goal: GoalPredicate::AnswerContains("van".into()),
            start_node: NodeId::new("home").unwrap(),
            ..world()
        };
        // The first plan's goto reveals car_1 and stops execution; the
        // second plan sees the car in the graph.
        let second = plan(&format!(
            r#"{}, {{"behavior": "inspect", "args": {{"node": "car_1", "query": "what is it?"}}}}"#,
            goto("lot")
        ));
        let answer = plan(r#"{"behavior": "answer", "args": {"text": "a white van"}}"#);
        let mut c = ScriptedClient::new(vec![
            plan(&format!(
                r#"{}, {{"behavior": "answer", "args": {{"text": "nothing"}}}}"#,
                goto("lot")
            )),
            second,
            answer,
        ]);
        let r = run_mission(
            "What is parked in the lot?",
            &w,
            &mut c,
            &LoopConfig::default(),
        );
        assert_eq!(r.outcome, Outcome::Success, "{}", r.to_json());
        assert_eq!(r.iterations, 3);
        assert_eq!(r.trace[0].steps.len(), 1);
        assert!(!r.trace[0].steps[0].result.diff.is_empty());
        assert_eq!(r.answer.as_deref(), Some("a white van"));
        let total: f64 = r
            .trace
            .iter()
            .flat_map(|t| &t.steps)
            .map(|s| s.result.distance_m)
            .sum();
        assert!((total - r.distance_m).abs() < 1e-9);
    }

    #[test]
    fn terminal_outcomes() {
        let w = WorldScenario {
            goal: GoalPredicate::AnswerContains("yes".into()),
            ..world()
        };
        let mut c = ScriptedClient::new(vec![plan(
            r#"{"behavior": "answer", "args": {"text": "no"}}"#,
        )]);
        let r = run_mission("x", &w, &mut c, &LoopConfig::default());
        assert_eq!(r.outcome, Outcome::FailureGoalNotMet);

        let mut c = ScriptedClient::new(vec![plan(
            r#"{"behavior": "clarify", "args": {"question": "which lot?"}}"#,
        )]);
        let r = run_mission("x", &w, &mut c, &LoopConfig::default());
        assert_eq!(r.outcome, Outcome::FailureClarification);

        let mut c = ScriptedClient::new(vec![]);
        let r = run_mission("x", &w, &mut c, &LoopConfig::default());
        assert_eq!(r.outcome, Outcome::FailureModelError);
        assert!(r.trace[0].error.as_ref().unwrap().contains("exhausted"));

        let mut c = ScriptedClient::default().with_fallback(plan(&goto("road")));
        let cfg = LoopConfig {
            max_iterations: 4,
            ..LoopConfig::default()
        };
        let r = run_mission("x", &w, &mut c, &cfg);
        assert_eq!(r.outcome, Outcome::FailureMaxIterations);
        assert_eq!(r.iterations, 4);
        assert!(r.llm_calls <= cfg.max_iterations * cfg.max_validation_retries);
    }

    #[test]
    fn operator_resumes_after_clarify() {
        let w = world();
        let mut c = ScriptedClient::default()
            .with_rule(&["northern"], plan(&goto("home")))
            .with_fallback(plan(
                r#"{"behavior": "clarify", "args": {"question": "which one?"}}"#,
            ));
        let mut s = MissionSession::new("go to the lot", w, LoopConfig::default());
        s.step(&mut c);
        assert!(matches!(s.phase(), Phase::AwaitingOperator { .. }));
        s.post_operator("I meant the northern lot");
        assert_eq!(s.phase(), &Phase::Planning);
        s.step(&mut c);
        assert_eq!(
            s.phase(),
            &Phase::Done {
                outcome: Outcome::Success
            }
        );
        let evs = s.drain_events();
        assert!(evs
            .iter()
            .any(|e| matches!(e, LoopEvent::Clarification { .. })));
        assert!(matches!(evs.last(), Some(LoopEvent::Done { .. })));
    }

    #[test]
    fn step_mode_waits_for_approval() {
        let mut c = ScriptedClient::new(vec![plan(&goto("home"))]);
        let mut s =
            MissionSession::new("home", world(), LoopConfig::default()).with_step_mode(true);
        s.step(&mut c);
        assert!(matches!(s.phase(), Phase::AwaitingApproval { .. }));
        assert_eq!(s.state().odometer_m, 0.0);
        s.approve();
        assert!(s.is_done());
        assert!(s.state().odometer_m > 0.0);
    }

    #[test]
    fn comm_gating_returns_before_planning() {
        let mut w = world();
        w.comm_sites = vec![CommSite {
            x: 5.0,
            y: 5.0,
            range_m: 20.0,
        }];
        // The robot starts at lot (40, 5), outside coverage.
        let mut c = ScriptedClient::new(vec![plan(&goto("home"))]);
        let r = run_mission("home", &w, &mut c, &LoopConfig::default());
        assert_eq!(r.outcome, Outcome::Success);
        assert!(r.trace[0].steps[0].action.is_none());
        assert!(r.trace[0].steps[0]
            .result
            .events
            .contains(&crate::sim::SimEvent::CommRestored));

        let cfg = LoopConfig {
            comm_gating: false,
            ..LoopConfig::default()
        };
        let mut c = ScriptedClient::new(vec![plan(&goto("home"))]);
        let r2 = run_mission("home", &w, &mut c, &cfg);
        assert_eq!(r2.outcome, Outcome::Success);
        assert!(r2.trace[0].steps[0].action.is_some());

        w.comm_sites = vec![CommSite {
            x: 500.0,
            y: 500.0,
            range_m: 1.0,
        }];
        let mut c = ScriptedClient::new(vec![plan(&goto("home"))]);
        let r3 = run_mission("home", &w, &mut c, &LoopConfig::default());
        assert_eq!(r3.outcome, Outcome::FailureComm);
        assert_eq!(r3.llm_calls, 0);
    }

    #[test]
    fn odometry_drift_is_a_failure_mode() {
        let mut w = world();
        w.failures.odometry_drift_rate = 0.2;
        let mut c = ScriptedClient::new(vec![plan(&goto("home"))]);
        let r = run_mission("home", &w, &mut c, &LoopConfig::default());
        assert_eq!(r.failure_modes, vec![FAILURE_ODOMETRY.to_string()]);
    }

    #[test]
    fn reports_are_byte_stable() {
        let run = || {
            let r = run_mission(
                "Return to home",
                &world(),
                &mut repair_client(),
                &LoopConfig::default(),
            );
            (r.to_json(), r.trace_jsonl())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn suite_rows_and_parallelism() {
        let entries = vec![
            SuiteEntry {
                spec_id: "S1".into(),
                spec: "home".into(),
                scenario: world(),
                runs: 3,
            },
            SuiteEntry {
                spec_id: "S2".into(),
                spec: "home".into(),
                scenario: world(),
                runs: 2,
            },
        ];
        let client_for = |e: &SuiteEntry, run: usize| -> Box<dyn ModelClient> {
            let ok = e.spec_id == "S2" || run == 1;
            let text = if ok {
                plan(&goto("home"))
            } else {
                plan(&goto("nowhere"))
            };
            Box::new(ScriptedClient::default().with_fallback(text))
        };
        let a = run_suite(&entries, client_for, &LoopConfig::default(), 1);
        let b = run_suite(&entries, client_for, &LoopConfig::default(), 4);
        assert_eq!(a.to_json(), b.to_json());
        let outcomes: Vec<String> = a.rows.iter().map(|r| r.outcome()).collect();
        assert_eq!(outcomes, vec!["1/3", "2/2"]);
        let table = a.table();
        assert!(table.starts_with(TABLE_HEADER));
        assert!(table.contains("| S2 | 2/2 | 35 | N/A |"));
        let empty = run_suite(&[], client_for, &LoopConfig::default(), 2);
        assert_eq!(empty.table().lines().count(), 2);
    }

    #[test]
    fn average_distance_rounds_to_meters() {
        let mut r = run_mission(
            "home",
            &world(),
            &mut ScriptedClient::new(vec![plan(&goto("home"))]),
            &LoopConfig::default(),
        );
        r.distance_m = 100.0;
        let mut r2 = r.clone();
        r2.distance_m = 200.0;
        let row = summarize("S", "x", &[r, r2]);
        assert_eq!(row.avg_distance_text(), "150");
    }
}
