//! `searchmesh`: solve the two MDP levels, simulate missions against the
//! solved policies, analyze policy trends and serve a live mission.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use searchmesh_core::analytics::{fleet_policy_trends, uav_policy_trends};
use searchmesh_core::config::MissionConfig;
use searchmesh_core::fleet::build_fleet_mdp;
use searchmesh_core::mdp::{self, SolveOptions};
use searchmesh_core::sim::{baseline_csv, compare_baselines, run_scenario, Assigner, MissionScenario, OutcomeMode, Policies};
use searchmesh_core::snapshot::{ModelKind, PolicySnapshot};
use searchmesh_core::uav::build_uav_mdp;
use searchmesh_service::{spawn_mission, Mission, ServiceConfig};

const UAV_SNAPSHOT: &str = "uav_policy.bin";
const FLEET_SNAPSHOT: &str = "fleet_policy.bin";

#[derive(Parser)]
#[command(name = "searchmesh", version, about = "Fault-tolerant UAV task assignment")]
struct Cli {
    /// Threads for solving and Monte-Carlo runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and solve both MDP levels, writing policy snapshots.
    Solve(SolveArgs),
    /// Run a scenario against solved snapshots.
    Simulate(SimulateArgs),
    /// Tabulate which decisions the solved policies take, and where.
    Analyze(AnalyzeArgs),
    /// Run a live mission behind the command and telemetry endpoints.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Mission config; the bundled case study when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stopping tolerance, overriding the config.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value = "artifacts")]
    out: PathBuf,
}

#[derive(Args)]
struct SnapshotArgs {
    /// Directory holding uav_policy.bin and fleet_policy.bin.
    #[arg(long, default_value = "artifacts")]
    snapshots: PathBuf,
    /// Checked against the config stored in the snapshots.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sampled,
    Expected,
}

#[derive(Clone, Copy, ValueEnum)]
enum AssignerArg {
    Mdp,
    Greedy,
    Random,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    snap: SnapshotArgs,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// More than one run compares all assigners over independent streams.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, value_enum, default_value = "mdp")]
    assigner: AssignerArg,
    #[arg(long, default_value = "artifacts/sim")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    snap: SnapshotArgs,
    #[arg(long, default_value = "artifacts/analysis")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    snap: SnapshotArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Epoch period in milliseconds; 0 advances only on stepOnce.
    #[arg(long, default_value_t = 1000)]
    tick_ms: u64,
    #[arg(long)]
    paused: bool,
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Convergence {
    model: String,
    states: usize,
    build_seconds: f64,
    solve_seconds: f64,
    sweeps: usize,
    residual: f64,
    eta: f64,
    converged: bool,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: Option<String>,
    seed: Option<u64>,
    out: String,
    snapshots: Vec<String>,
    seconds: f64,
    convergence: Vec<Convergence>,
    artifacts: Vec<Artifact>,
}

impl RunManifest {
    fn new(command: &str, out: &Path) -> Self {
        Self {
            command: command.into(),
            config: None,
            seed: None,
            out: out.display().to_string(),
            snapshots: Vec::new(),
            seconds: 0.0,
            convergence: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn write(&mut self, out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        let path = out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(Artifact {
            path: name.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn finish(mut self, out: &Path, started: Instant) -> Result<()> {
        self.seconds = started.elapsed().as_secs_f64();
        let path = out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn solve(args: SolveArgs) -> Result<bool> {
    let started = Instant::now();
    let cfg = match &args.config {
        Some(p) => MissionConfig::load(p)?,
        None => MissionConfig::case_study(),
    };
    let eta = args.eta.unwrap_or(cfg.problem.eta);
    if !(eta > 0.0) {
        bail!("--eta must be positive, got {eta}");
    }
    let opts = SolveOptions::new(eta).max_sweeps(cfg.problem.max_sweeps);
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("solve", &args.out);
    manifest.config = args.config.as_ref().map(|p| p.display().to_string());
    let mut log = String::from("model,sweep,residual\n");
    let mut all_converged = true;
    for kind in [ModelKind::Uav, ModelKind::Fleet] {
        let t = Instant::now();
        let model = match kind {
            ModelKind::Uav => build_uav_mdp(&cfg)?.mdp,
            ModelKind::Fleet => build_fleet_mdp(&cfg)?.mdp,
        };
        let build_seconds = t.elapsed().as_secs_f64();
        let name = match kind {
            ModelKind::Uav => "uav",
            ModelKind::Fleet => "fleet",
        };
        log::info!("{name}: {} states, {} transitions", model.state_count(), model.nonzeros());
        let t = Instant::now();
        let sol = mdp::solve(&model, &opts)?;
        let solve_seconds = t.elapsed().as_secs_f64();
        for (i, r) in sol.residuals.iter().enumerate() {
            log.push_str(&format!("{name},{},{r:e}\n", i + 1));
        }
        let snap = PolicySnapshot::from_solution(kind, &cfg, &model, &sol, eta);
        let file = if kind == ModelKind::Uav { UAV_SNAPSHOT } else { FLEET_SNAPSHOT };
        manifest.write(&args.out, file, &snap.to_bytes())?;
        manifest.snapshots.push(file.into());
        println!(
            "{name}: {} states, {} sweeps, residual {:.3e}, {}",
            model.state_count(),
            snap.sweeps,
            snap.residual,
            if snap.converged { "converged" } else { "NOT converged" }
        );
        all_converged &= snap.converged;
        manifest.convergence.push(Convergence {
            model: name.into(),
            states: model.state_count(),
            build_seconds,
            solve_seconds,
            sweeps: snap.sweeps,
            residual: snap.residual,
            eta,
            converged: snap.converged,
        });
    }
    manifest.write(&args.out, "convergence.csv", log.as_bytes())?;
    manifest.finish(&args.out, started)?;
    Ok(all_converged)
}

fn load_policies(args: &SnapshotArgs) -> Result<Policies> {
    let read = |name: &str| {
        let path = args.snapshots.join(name);
        if !path.exists() {
            bail!("snapshot {} not found; run `searchmesh solve --out {}` first", path.display(), args.snapshots.display());
        }
        PolicySnapshot::load(&path).with_context(|| format!("loading {}", path.display()))
    };
    let uav = read(UAV_SNAPSHOT)?;
    let fleet = read(FLEET_SNAPSHOT)?;
    if let Some(p) = &args.config {
        if MissionConfig::load(p)? != uav.config {
            bail!("{} differs from the config the snapshots were solved for", p.display());
        }
    }
    Ok(Policies::from_snapshots(&uav, &fleet)?)
}

fn load_scenario(path: &Path, seed: Option<u64>, mode: Option<ModeArg>) -> Result<MissionScenario> {
    let mut sc = MissionScenario::load(path)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    match mode {
        Some(ModeArg::Sampled) => sc.mode = OutcomeMode::Sampled,
        Some(ModeArg::Expected) => sc.mode = OutcomeMode::Expected,
        None => {}
    }
    Ok(sc)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let policies = load_policies(&args.snap)?;
    let sc = load_scenario(&args.scenario, args.seed, args.mode)?;
    sc.validate(&policies.config)?;
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("simulate", &args.out);
    manifest.config = args.snap.config.as_ref().map(|p| p.display().to_string());
    manifest.seed = Some(sc.seed);
    manifest.snapshots = [UAV_SNAPSHOT, FLEET_SNAPSHOT]
        .iter()
        .map(|f| args.snap.snapshots.join(f).display().to_string())
        .collect();
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    if args.runs == 1 {
        let assigner = match args.assigner {
            AssignerArg::Mdp => Assigner::Mdp,
            AssignerArg::Greedy => Assigner::GreedyNearest,
            AssignerArg::Random => Assigner::RandomFeasible,
        };
        let trace = run_scenario(&sc, &policies, assigner)?;
        trace.check_consistency()?;
        manifest.write(&args.out, "trace.csv", trace.to_csv().as_bytes())?;
        manifest.write(&args.out, "trace.jsonl", trace.to_json_lines().as_bytes())?;
        manifest.write(&args.out, "trace_long.csv", trace.to_long_format().as_bytes())?;
        let seq: Vec<String> = trace.assignment_sequence().iter().map(|a| format!("{a:?}")).collect();
        println!("scenario {} ({})", sc.name, assigner.name());
        println!("assignments: {}", if seq.is_empty() { "none".into() } else { seq.join(" -> ") });
        match trace.completed_at {
            Some(e) => println!("all goals cleared by epoch {e}"),
            None => println!("goals still open after {} epochs", trace.records.len()),
        }
        println!("discounted cost {:.3}", trace.discounted_cost);
    } else {
        let stats = compare_baselines(
            &sc,
            &policies,
            &[Assigner::Mdp, Assigner::GreedyNearest, Assigner::RandomFeasible],
            args.runs,
        )?;
        let csv = baseline_csv(&stats);
        manifest.write(&args.out, "baselines.csv", csv.as_bytes())?;
        println!("{} runs of {} (seed {})", args.runs, sc.name, sc.seed);
        for s in &stats {
            println!(
                "{:<16} cost {:>10.2} +/- {:<8.2} latency {:>6.2} +/- {:<6.2} completed {}",
                s.assigner.name(),
                s.mean_cost,
                s.stderr_cost,
                s.mean_latency,
                s.stderr_latency,
                s.completed
            );
        }
    }
    manifest.finish(&args.out, started)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let started = Instant::now();
    let policies = load_policies(&args.snap)?;
    let cfg = &policies.config;
    let uav_snap = PolicySnapshot::load(&args.snap.snapshots.join(UAV_SNAPSHOT))?;
    let fleet_snap = PolicySnapshot::load(&args.snap.snapshots.join(FLEET_SNAPSHOT))?;
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("analyze", &args.out);
    manifest.snapshots = [UAV_SNAPSHOT, FLEET_SNAPSHOT]
        .iter()
        .map(|f| args.snap.snapshots.join(f).display().to_string())
        .collect();

    let policy = |s: &PolicySnapshot| s.policy.iter().map(|&a| a as usize).collect::<Vec<_>>();
    let uav = build_uav_mdp(cfg)?;
    let report = uav_policy_trends(&uav, &policy(&uav_snap));
    drop(uav);
    manifest.write(&args.out, "uav_trends.txt", report.to_text().as_bytes())?;
    manifest.write(&args.out, "uav_trends.csv", report.to_csv().as_bytes())?;
    print!("{}", report.to_text());

    let fleet = build_fleet_mdp(cfg)?;
    let report = fleet_policy_trends(&fleet, &fleet_snap.value_function(), &policy(&fleet_snap));
    manifest.write(&args.out, "fleet_trends.txt", report.to_text().as_bytes())?;
    manifest.write(&args.out, "fleet_trends.csv", report.to_csv().as_bytes())?;
    println!();
    print!("{}", report.to_text());
    manifest.finish(&args.out, started)
}

fn serve(args: ServeArgs) -> Result<()> {
    let policies = Arc::new(load_policies(&args.snap)?);
    let sc = load_scenario(&args.scenario, args.seed, args.mode)?;
    let mission = Mission::new(policies, sc)?;
    let cfg = ServiceConfig {
        tick: (args.tick_ms > 0).then(|| Duration::from_millis(args.tick_ms)),
        start_paused: args.paused,
        ..ServiceConfig::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.bind.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.bind, args.port))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        let handle = spawn_mission(mission, cfg);
        searchmesh_service::serve(listener, handle).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEARCHMESH_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Cmd::Solve(a) => solve(a).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: value iteration did not reach eta within the sweep budget");
                ExitCode::from(2)
            }
        }),
        Cmd::Simulate(a) => simulate(a).map(|_| ExitCode::SUCCESS),
        Cmd::Analyze(a) => analyze(a).map(|_| ExitCode::SUCCESS),
        Cmd::Serve(a) => serve(a).map(|_| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
