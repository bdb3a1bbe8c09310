//! `groundplan`: run missions and suites, the feedback ablation, dataset
//! collection, planner evaluation, and the session service.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use groundplan::distill::{
    collect, evaluate, export_corpus, generate_specs, load_eval_cases, revalidate_record,
    synth_world, CollectItem, GreedyExpert,
};
use groundplan::mission::{
    run_mission, run_suite, LoopConfig, ModelClient, RemoteClient, RemoteConfig, ScriptedClient,
    SuiteEntry,
};
use groundplan::repair::run_repair_suite;
use groundplan::sim::WorldScenario;
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "groundplan",
    version,
    about = "Closed-loop mission planning over semantic maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission; exits 0 iff it succeeds.
    Run(RunArgs),
    /// Run a suite file and print the outcome table.
    Suite(SuiteArgs),
    /// Run the built-in repair suite with and without validator feedback.
    Ablation(AblationArgs),
    /// Generate missions, run them with an expert and write a JSONL corpus.
    Collect(CollectArgs),
    /// Score a planner on labelled single-step cases.
    Eval(EvalArgs),
    /// Serve mission sessions over HTTP.
    Serve(ServeArgs),
}

/// Which planner answers prompts. With neither flag the chat endpoint from
/// GROUNDPLAN_ENDPOINT / GROUNDPLAN_MODEL / GROUNDPLAN_API_KEY is used.
#[derive(Args, Clone)]
struct PlannerArgs {
    /// Scripted responses (JSON) instead of a live model.
    #[arg(long, value_name = "FILE", conflicts_with = "greedy")]
    scripted: Option<PathBuf>,
    /// The built-in rule-based planner.
    #[arg(long)]
    greedy: bool,
}

#[derive(Args, Clone)]
struct LoopArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Do not feed validator violations back to the planner.
    #[arg(long)]
    no_feedback: bool,
    /// Plan even when the robot is out of communication range.
    #[arg(long)]
    no_comm_gating: bool,
    #[arg(long, default_value_t = 20)]
    max_iterations: u32,
    /// Planning attempts per iteration, the first one included.
    #[arg(long, default_value_t = 3)]
    retries: u32,
}

impl LoopArgs {
    fn config(&self) -> LoopConfig {
        LoopConfig {
            max_iterations: self.max_iterations,
            max_validation_retries: self.retries,
            feedback_enabled: !self.no_feedback,
            comm_gating: !self.no_comm_gating,
            seed: self.seed,
            ..LoopConfig::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Mission text.
    #[arg(long)]
    spec: String,
    #[command(flatten)]
    planner: PlannerArgs,
    #[command(flatten)]
    loop_args: LoopArgs,
    /// Directory for `<scenario>.trace.jsonl` and `<scenario>.report.json`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite file: {"entries": [{"spec_id", "spec", "scenario", "runs", "scripts"?}]}.
    /// Run r of an entry uses scripts[r % len]. Relative paths resolve
    /// against the suite file.
    suite: PathBuf,
    #[command(flatten)]
    planner: PlannerArgs,
    #[command(flatten)]
    loop_args: LoopArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblationArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CollectArgs {
    /// Scenario files to generate missions in.
    #[arg(long, num_args = 1.., required_unless_present = "synthetic")]
    scenarios: Vec<PathBuf>,
    /// Also use this many generated worlds, seeded from --seed.
    #[arg(long, default_value_t = 0)]
    synthetic: u64,
    /// Missions per scenario, from the templates.
    #[arg(long, default_value_t = 5)]
    per_scenario: usize,
    /// Use these missions (one per line) instead of templates.
    #[arg(long)]
    specs: Option<PathBuf>,
    #[command(flatten)]
    planner: PlannerArgs,
    #[command(flatten)]
    loop_args: LoopArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON array of cases.
    #[arg(long)]
    cases: PathBuf,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory of scenario files.
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[command(flatten)]
    planner: PlannerArgs,
    #[command(flatten)]
    loop_args: LoopArgs,
}

#[derive(Clone)]
enum Planner {
    Scripted(ScriptedClient),
    Greedy,
    Remote(RemoteConfig),
}

impl Planner {
    fn from_args(a: &PlannerArgs, seed: u64) -> Result<Self> {
        if let Some(path) = &a.scripted {
            return Ok(Planner::Scripted(ScriptedClient::load(path)?));
        }
        if a.greedy {
            return Ok(Planner::Greedy);
        }
        let mut cfg = RemoteConfig::from_env().context(
            "no planner configured: pass --scripted or --greedy, or set the endpoint variables",
        )?;
        cfg.seed = Some(seed);
        Ok(Planner::Remote(cfg))
    }

    fn make(&self) -> Box<dyn ModelClient> {
        match self {
            Planner::Scripted(s) => Box::new(s.clone()),
            Planner::Greedy => Box::new(GreedyExpert::new()),
            Planner::Remote(cfg) => match RemoteClient::new(cfg.clone()) {
                Ok(c) => Box::new(c),
                Err(e) => Box::new(Broken(e.to_string())),
            },
        }
    }
}

/// Stands in for a client that could not be built, so the failure shows up
/// as a model error in the report rather than a panic.
struct Broken(String);

impl ModelClient for Broken {
    fn name(&self) -> &str {
        "unavailable"
    }

    fn complete(
        &mut self,
        _: &groundplan::plan::Prompt,
    ) -> Result<String, groundplan::mission::ClientError> {
        Err(groundplan::mission::ClientError::Config(self.0.clone()))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_run(a: RunArgs) -> Result<bool> {
    let world = WorldScenario::load(&a.scenario)?;
    let planner = Planner::from_args(&a.planner, a.loop_args.seed)?;
    let mut client = planner.make();
    let report = run_mission(&a.spec, &world, client.as_mut(), &a.loop_args.config());
    write(
        &a.out_dir.join(format!("{}.trace.jsonl", world.id)),
        &report.trace_jsonl(),
    )?;
    write(
        &a.out_dir.join(format!("{}.report.json", world.id)),
        &report.to_json(),
    )?;
    println!(
        "{}: {} after {} iterations, {:.1} m",
        world.id,
        report.outcome.as_str(),
        report.iterations,
        report.distance_m
    );
    if let Some(answer) = &report.answer {
        println!("answer: {answer}");
    }
    Ok(report.outcome.is_success())
}

#[derive(Deserialize)]
struct SuiteFile {
    entries: Vec<SuiteFileEntry>,
}

#[derive(Deserialize)]
struct SuiteFileEntry {
    spec_id: String,
    spec: String,
    scenario: PathBuf,
    runs: usize,
    #[serde(default)]
    scripts: Vec<PathBuf>,
}

fn cmd_suite(a: SuiteArgs) -> Result<bool> {
    let text = fs::read_to_string(&a.suite)
        .with_context(|| format!("cannot read {}", a.suite.display()))?;
    let file: SuiteFile = serde_json::from_str(&text)
        .with_context(|| format!("invalid suite {}", a.suite.display()))?;
    let base = a.suite.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut planners = Vec::new();
    for e in file.entries {
        let scenario = WorldScenario::load(base.join(&e.scenario))?;
        let per_run = if e.scripts.is_empty() {
            vec![Planner::from_args(&a.planner, a.loop_args.seed)?]
        } else {
            e.scripts
                .iter()
                .map(|p| Ok(Planner::Scripted(ScriptedClient::load(base.join(p))?)))
                .collect::<Result<Vec<_>>>()?
        };
        planners.push(per_run);
        entries.push(SuiteEntry {
            spec_id: e.spec_id,
            spec: e.spec,
            scenario,
            runs: e.runs,
        });
    }
    let report = run_suite(
        &entries,
        |entry, run| {
            let i = entries
                .iter()
                .position(|e| std::ptr::eq(e, entry))
                .expect("entry from this suite");
            planners[i][run % planners[i].len()].make()
        },
        &a.loop_args.config(),
        a.jobs,
    );
    print!("{}", report.table());
    if let Some(out) = &a.out {
        write(out, &report.to_json())?;
    }
    Ok(true)
}

fn cmd_ablation(a: AblationArgs) -> Result<bool> {
    let on = run_repair_suite(&LoopConfig::default());
    let off = run_repair_suite(&LoopConfig {
        feedback_enabled: false,
        ..LoopConfig::default()
    });
    let pct = |s: &groundplan::repair::RepairSummary| {
        groundplan::distill::format_rate(100.0 * s.successes as f64 / s.total.max(1) as f64)
    };
    println!("| Validation feedback | Success | Rate |");
    println!("|---|---|---|");
    println!("| on | {} | {} |", on.rate_text(), pct(&on));
    println!("| off | {} | {} |", off.rate_text(), pct(&off));
    if let Some(out) = &a.out {
        let json = serde_json::json!({
            "feedback_on": {"successes": on.successes, "total": on.total},
            "feedback_off": {"successes": off.successes, "total": off.total},
        });
        write(out, &(serde_json::to_string_pretty(&json)? + "\n"))?;
    }
    Ok(true)
}

fn cmd_collect(a: CollectArgs) -> Result<bool> {
    let fixed: Option<Vec<String>> = match &a.specs {
        Some(p) => Some(
            fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        ),
        None => None,
    };
    let mut worlds = a
        .scenarios
        .iter()
        .map(WorldScenario::load)
        .collect::<Result<Vec<_>, _>>()?;
    worlds.extend((0..a.synthetic).map(|k| synth_world(a.loop_args.seed + k)));
    let mut items = Vec::new();
    for (i, world) in worlds.into_iter().enumerate() {
        let specs = match &fixed {
            Some(s) => s.clone(),
            None => generate_specs(
                &world.initial_state().known,
                a.per_scenario,
                a.loop_args.seed + i as u64,
            ),
        };
        items.extend(specs.into_iter().map(|spec| CollectItem {
            spec,
            scenario: world.clone(),
        }));
    }
    let planner = Planner::from_args(&a.planner, a.loop_args.seed)?;
    let mut expert = planner.make();
    let out = collect(&items, expert.as_mut(), &a.loop_args.config());
    for rec in &out.records {
        let v = revalidate_record(rec)?;
        if !v.ok {
            bail!("collected record failed revalidation: {}", v.feedback_text);
        }
    }
    for (scenario, spec, outcome) in &out.skipped {
        eprintln!("skipped {scenario}: {spec} ({})", outcome.as_str());
    }
    export_corpus(&out.records, &a.out)?;
    println!(
        "{} records from {} missions ({} skipped) -> {}",
        out.records.len(),
        items.len(),
        out.skipped.len(),
        a.out.display()
    );
    Ok(true)
}

fn cmd_eval(a: EvalArgs) -> Result<bool> {
    let cases = load_eval_cases(&a.cases)?;
    if cases.is_empty() {
        bail!("{} has no cases", a.cases.display());
    }
    let planner = Planner::from_args(&a.planner, a.seed)?;
    let mut client = planner.make();
    let report = evaluate(client.as_mut(), &cases, a.repeats);
    print!("{}", report.table());
    for c in report.per_case.iter().filter(|c| !c.failures.is_empty()) {
        println!("case {}: {} ({})", c.index, c.failures.join(", "), c.spec);
    }
    if let Some(out) = &a.out {
        write(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(true)
}

fn cmd_serve(a: ServeArgs) -> Result<bool> {
    let scenarios = groundplan_service::load_scenarios(&a.scenarios)?;
    if scenarios.is_empty() {
        bail!("no scenarios in {}", a.scenarios.display());
    }
    let planner = Planner::from_args(&a.planner, a.loop_args.seed)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("invalid address {}:{}", a.host, a.port))?;
    let cfg = groundplan_service::ServiceConfig {
        scenarios,
        clients: Arc::new(move |_, _| planner.make()),
        loop_config: a.loop_args.config(),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(groundplan_service::serve(cfg, addr, |bound| {
        println!("listening on http://{bound}");
    }))?;
    Ok(true)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Ablation(a) => cmd_ablation(a),
        Command::Collect(a) => cmd_collect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            // Library errors often repeat their source in their own text.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
