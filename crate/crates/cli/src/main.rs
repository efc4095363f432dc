//! Command line front end. Exit status 0 on success, 2 on configuration
//! errors (bad flags, malformed files, incompatible checkpoints), 1 on
//! runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use swarmsearch::comms::{calibrate, packet_loss_probability};
use swarmsearch::ddql::{self, ExplorationSchedule, TrainerConfig};
use swarmsearch::harness::ingest::{parse_height_grid, save_obstacle_grid, threshold_obstacles};
use swarmsearch::harness::report::{
    load_reports, save_reports, summary_tsv, traces_tsv, write_plot_exports,
};
use swarmsearch::harness::{evaluate, MetricsReport, PolicySpec, Scenario};
use swarmsearch::map::MapFile;
use swarmsearch::nn::load_checkpoint;
use swarmsearch::rng::{substream, Domain};
use swarmsearch::{Error, Result};

#[derive(Parser)]
#[command(
    name = "swarm",
    version,
    about = "UAV swarm target search: simulate, train, and evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw mission maps from a scenario and save or print them.
    GenMap(GenMapArgs),
    /// Train a Q-network from scratch on a scenario.
    Train(TrainArgs),
    /// Continue training from an existing checkpoint on a new scenario.
    Transfer(TransferArgs),
    /// Evaluate one policy over Monte Carlo missions.
    Eval(EvalArgs),
    /// Evaluate several policies on identical missions.
    Compare(CompareArgs),
    /// Fit the channel's reference path loss to its outage anchor.
    CalibrateChannel(CalibrateArgs),
    /// Threshold a terrain height grid into an obstacle grid.
    IngestHeightmap(IngestArgs),
    /// Re-export plot data from a saved report file.
    ExportPlots(ExportArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file; built-in defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Dotted-path override, e.g. --set map.m=30 or --set channel.mode="none".
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        Scenario::load_with_overrides(self.scenario.as_deref(), &self.set)
    }
}

#[derive(Args)]
struct GenMapArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of maps to draw.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Output file; with --count > 1 an index is appended per map.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print each map as text.
    #[arg(long)]
    render: bool,
}

#[derive(Args)]
struct TrainerArgs {
    /// Trainer TOML file; built-in defaults apply when omitted.
    #[arg(long)]
    trainer: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u32>,
    #[arg(long)]
    warmup_episodes: Option<u32>,
    #[arg(long)]
    even_len: Option<u32>,
    #[arg(long)]
    odd_len: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    target_sync: Option<u64>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    #[arg(long)]
    eval_every: Option<u32>,
    #[arg(long)]
    eval_episodes: Option<u32>,
    /// Seed for network init, replay sampling, and training missions.
    #[arg(long)]
    train_seed: Option<u64>,
    /// Exploration family: softmax or epsilon-greedy.
    #[arg(long)]
    explore: Option<String>,
    #[arg(long)]
    explore_start: Option<f64>,
    #[arg(long)]
    explore_end: Option<f64>,
    /// Softmax temperature used by evaluation rollouts.
    #[arg(long)]
    test_tau: Option<f64>,
}

impl TrainerArgs {
    fn trainer_config(&self) -> Result<TrainerConfig> {
        let mut cfg = match &self.trainer {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str(&text)
                    .map_err(|e| Error::config(format!("trainer file {}: {e}", path.display())))?
            }
            None => TrainerConfig::default(),
        };
        macro_rules! take {
            ($field:ident, $arg:expr) => {
                if let Some(v) = $arg {
                    cfg.$field = v;
                }
            };
        }
        take!(episodes, self.episodes);
        take!(warmup_episodes, self.warmup_episodes);
        take!(even_len, self.even_len);
        take!(odd_len, self.odd_len);
        take!(batch_size, self.batch_size);
        take!(gamma, self.gamma);
        take!(learning_rate, self.learning_rate);
        take!(target_sync, self.target_sync);
        take!(replay_capacity, self.replay_capacity);
        take!(eval_every, self.eval_every);
        take!(eval_episodes, self.eval_episodes);
        take!(seed, self.train_seed);
        Ok(cfg)
    }

    fn schedule(&self) -> Result<ExplorationSchedule> {
        let mut schedule = match self.explore.as_deref() {
            None | Some("softmax") => ExplorationSchedule::default(),
            Some("epsilon-greedy") => ExplorationSchedule::epsilon_greedy(),
            Some(other) => {
                return Err(Error::config(format!(
                    "unknown exploration family {other:?}; use softmax or epsilon-greedy"
                )))
            }
        };
        if let Some(v) = self.explore_start {
            schedule.start = v;
        }
        if let Some(v) = self.explore_end {
            schedule.end = v;
        }
        if let Some(v) = self.test_tau {
            schedule.test_tau = v;
        }
        Ok(schedule)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    trainer: TrainerArgs,
    /// Run directory for checkpoints, the training curve, and the manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    trainer: TrainerArgs,
    /// Checkpoint to continue from.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Policy: la(N), ddql-greedy:CKPT, ddql-soft:CKPT, ddql-soft(TAU):CKPT.
    #[arg(long)]
    policy: String,
    #[arg(long, default_value_t = 500)]
    episodes: u32,
    /// Report JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for plot-ready TSV exports.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Per-step rollout log output path.
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Policy to evaluate; repeat for each contender.
    #[arg(long, required = true)]
    policy: Vec<String>,
    #[arg(long, default_value_t = 500)]
    episodes: u32,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Extra link distances (meters) to tabulate.
    #[arg(long = "probe", value_name = "METERS")]
    probe: Vec<f64>,
}

#[derive(Args)]
struct IngestArgs {
    /// Whitespace- or comma-separated height grid, first row on top.
    #[arg(long)]
    heights: PathBuf,
    /// Cells at or above this height become obstacles.
    #[arg(long)]
    threshold_m: f64,
    /// Obstacle grid output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Report JSON produced by eval or compare.
    #[arg(long)]
    report: PathBuf,
    /// Directory for the TSV exports.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    episodes: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policies: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    from_checkpoint: Option<String>,
    scenario: &'a Scenario,
    #[serde(skip_serializing_if = "Option::is_none")]
    trainer: Option<&'a TrainerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exploration: Option<&'a ExplorationSchedule>,
}

impl RunManifest<'_> {
    fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("manifest serialization: {e}")))?;
        fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Dying quietly on a closed pipe beats a panic when output feeds `head`.
#[cfg(unix)]
fn restore_default_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn restore_default_sigpipe() {}

fn main() -> ExitCode {
    restore_default_sigpipe();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::Domain(_)
                | Error::MapFile { .. }
                | Error::IncompatibleCheckpoint(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenMap(args) => gen_map(args),
        Command::Train(args) => train(args),
        Command::Transfer(args) => transfer(args),
        Command::Eval(args) => eval(args),
        Command::Compare(args) => compare(args),
        Command::CalibrateChannel(args) => calibrate_channel(args),
        Command::IngestHeightmap(args) => ingest_heightmap(args),
        Command::ExportPlots(args) => export_plots(args),
    }
}

fn gen_map(args: GenMapArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let source = swarmsearch::harness::MapSource::new(&scenario)?;
    for k in 0..args.count {
        let mut rng = substream(scenario.seed, Domain::Episode, k);
        let (map, starts) = source.make(&mut rng)?;
        let file = MapFile::from_map(&map, scenario.u, scenario.map.eta, scenario.seed);
        println!(
            "map {k}: side {}, {} targets, obstacle coverage {:.3}, starts {:?}",
            map.side(),
            map.targets().len(),
            map.obstacle_fraction(),
            starts.iter().map(|c| (c.x, c.y)).collect::<Vec<_>>(),
        );
        if args.render {
            print!("{}", file.render());
        }
        if let Some(out) = &args.out {
            let path = if args.count == 1 {
                out.clone()
            } else {
                out.with_extension(format!("{k}.map"))
            };
            ensure_parent(&path)?;
            file.save(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn print_curve_header() {
    println!("episode\tsuccess\tmean_reward\texplore\tmean_loss");
}

fn curve_printer(point: &ddql::CurvePoint) {
    println!(
        "{}\t{:.3}\t{:.3}\t{:.4}\t{:.6}",
        point.episode, point.success, point.mean_reward, point.explore, point.mean_loss
    );
}

fn train(args: TrainArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let cfg = args.trainer.trainer_config()?;
    let schedule = args.trainer.schedule()?;
    RunManifest {
        command: "train",
        episodes: None,
        policies: None,
        from_checkpoint: None,
        scenario: &scenario,
        trainer: Some(&cfg),
        exploration: Some(&schedule),
    }
    .write(&args.out)?;
    print_curve_header();
    let mut printer = curve_printer as fn(&ddql::CurvePoint);
    let output = ddql::train(&scenario, &cfg, &schedule, Some(&args.out), Some(&mut printer))?;
    println!(
        "trained {} episodes: {} env steps, {} gradient steps, replay {}",
        cfg.episodes, output.env_steps, output.grad_steps, output.replay_len
    );
    println!("checkpoint: {}", args.out.join("final.ckpt").display());
    Ok(())
}

fn transfer(args: TransferArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let cfg = args.trainer.trainer_config()?;
    let schedule = args.trainer.schedule()?;
    let ckpt = load_checkpoint(&args.from)?;
    RunManifest {
        command: "transfer",
        episodes: None,
        policies: None,
        from_checkpoint: Some(args.from.display().to_string()),
        scenario: &scenario,
        trainer: Some(&cfg),
        exploration: Some(&schedule),
    }
    .write(&args.out)?;
    print_curve_header();
    let mut printer = curve_printer as fn(&ddql::CurvePoint);
    let output = ddql::transfer(
        &ckpt,
        &scenario,
        &cfg,
        &schedule,
        Some(&args.out),
        Some(&mut printer),
    )?;
    println!(
        "transferred for {} episodes: {} env steps, {} gradient steps",
        cfg.episodes, output.env_steps, output.grad_steps
    );
    println!("checkpoint: {}", args.out.join("final.ckpt").display());
    Ok(())
}

fn summarize(report: &MetricsReport) {
    let completion = report
        .mean_completion_step
        .map_or("-".to_string(), |v| format!("{v:.1}"));
    println!(
        "{}: success {:.3} [{:.3}, {:.3}] over {} episodes, \
         mean completion {}, mean on-target {:.2}, {:.1} us/decision",
        report.policy,
        report.success,
        report.success_ci_low,
        report.success_ci_high,
        report.episodes,
        completion,
        report.mean_on_target,
        report.mean_decision_micros,
    );
}

fn eval(args: EvalArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let spec = PolicySpec::parse(&args.policy)?;
    let policy = spec.load(&scenario)?;
    let (report, results) = evaluate(&policy, &scenario, args.episodes)?;
    summarize(&report);
    if let Some(out) = &args.out {
        ensure_parent(out)?;
        save_reports(std::slice::from_ref(&report), out)?;
        let manifest_dir = out.parent().unwrap_or(Path::new("."));
        RunManifest {
            command: "eval",
            episodes: Some(args.episodes),
            policies: Some(vec![args.policy.clone()]),
            from_checkpoint: None,
            scenario: &scenario,
            trainer: None,
            exploration: None,
        }
        .write(manifest_dir)?;
        println!("wrote {}", out.display());
    }
    if let Some(dir) = &args.plots {
        write_plot_exports(std::slice::from_ref(&report), dir)?;
        println!("wrote plots under {}", dir.display());
    }
    if let Some(path) = &args.traces {
        ensure_parent(path)?;
        fs::write(path, traces_tsv(&results))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let specs = args
        .policy
        .iter()
        .map(|p| PolicySpec::parse(p))
        .collect::<Result<Vec<_>>>()?;
    let reports = swarmsearch::harness::compare(&specs, &scenario, args.episodes)?;
    print!("{}", summary_tsv(&reports));
    for later in &reports[1..] {
        let base = &reports[0];
        if base.mean_decision_micros > 0.0 {
            println!(
                "decision time {} vs {}: {:.2}x",
                later.policy,
                base.policy,
                later.mean_decision_micros / base.mean_decision_micros
            );
        }
    }
    if let Some(out) = &args.out {
        ensure_parent(out)?;
        save_reports(&reports, out)?;
        let manifest_dir = out.parent().unwrap_or(Path::new("."));
        RunManifest {
            command: "compare",
            episodes: Some(args.episodes),
            policies: Some(args.policy.clone()),
            from_checkpoint: None,
            scenario: &scenario,
            trainer: None,
            exploration: None,
        }
        .write(manifest_dir)?;
        println!("wrote {}", out.display());
    }
    if let Some(dir) = &args.plots {
        write_plot_exports(&reports, dir)?;
        println!("wrote plots under {}", dir.display());
    }
    Ok(())
}

fn calibrate_channel(args: CalibrateArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let cfg = calibrate(&scenario.channel)?;
    println!("reference path loss: {:.3} dB", cfg.pathloss_ref_db);
    let mut distances = vec![cfg.cell_side_m, 110.0, 200.0, 300.0, 500.0];
    distances.extend_from_slice(&args.probe);
    distances.sort_by(f64::total_cmp);
    distances.dedup();
    println!("distance_m\tpacket_loss");
    for d in distances {
        println!("{d}\t{:.4}", packet_loss_probability(&cfg, d)?);
    }
    Ok(())
}

fn ingest_heightmap(args: IngestArgs) -> Result<()> {
    let text = fs::read_to_string(&args.heights)?;
    let heights = parse_height_grid(&text)?;
    let (omega, coverage) = threshold_obstacles(&heights, args.threshold_m)?;
    ensure_parent(&args.out)?;
    save_obstacle_grid(&omega, &args.out)?;
    let (rows, cols) = (omega.dim().1, omega.dim().0);
    println!(
        "{}x{} grid, obstacle coverage {coverage:.3}, wrote {}",
        cols,
        rows,
        args.out.display()
    );
    Ok(())
}

fn export_plots(args: ExportArgs) -> Result<()> {
    let reports = load_reports(&args.report)?;
    write_plot_exports(&reports, &args.out)?;
    println!(
        "exported {} report(s) to {}",
        reports.len(),
        args.out.display()
    );
    Ok(())
}
