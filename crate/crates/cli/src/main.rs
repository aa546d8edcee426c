//! `hopcurve`: map reward landscapes, run learners and curricula, and
//! analyse funnels between training environments.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hopcurve_core::curriculum::run_curriculum;
use hopcurve_core::io::{funnel_svg, landscape_svg, read_landscape_csv, write_landscape_csv, write_trajectory_csv};
use hopcurve_core::landscape::{extract_sgs, map_landscape, DEFAULT_THRESHOLD};
use hopcurve_core::learner::{run_learning, RolloutOracle};
use hopcurve_core::{criteria_report, make_environment, rollout, seed, EnvLevel, Error, FailureKind, PolicyParams};

use crate::config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn simulation(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::usage(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser, Debug)]
#[command(name = "hopcurve", version, about = "Hopping-leg reward landscapes and training-wheel curricula")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// JSON run configuration (see docs/config.md)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; falls back to the config file, then HOPCURVE_SEED
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for rollouts (0 = all cores); never changes results
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Map the reward landscape of one environment over the parameter box
    Map {
        #[arg(long)]
        env: EnvLevel,
        /// Grid spacing, deg
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Heatmap with the SGS outline
        #[arg(long)]
        svg: Option<PathBuf>,
        /// SGS threshold, m/s
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient ascent in one environment
    Learn {
        #[arg(long)]
        env: EnvLevel,
        /// Initial policy `theta0,theta1`, deg
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Learn across the environment sequence and write a run directory
    Curriculum {
        /// Run directory; defaults to `output_dir` from the config
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        init: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// SGS statistics and funnel checks over landscape CSVs, easiest first
    Analyze {
        #[arg(required = true, num_args = 2..)]
        landscapes: Vec<PathBuf>,
        /// Comma-separated names; defaults to the file stems
        #[arg(long)]
        labels: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Report JSON; printed to stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
        /// Funnel overlay with each peak as a triangle
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// One rollout, optionally dumping the trajectory
    Rollout {
        #[arg(long)]
        env: EnvLevel,
        /// `theta0,theta1`, deg
        #[arg(long)]
        params: String,
        #[arg(long)]
        dump: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).and_then(|_| f.flush()).map_err(|e| CliError::io(path, e))
}

fn parse_params(flag: &str, text: &str) -> Result<PolicyParams, CliError> {
    PolicyParams::parse_pair(text).map_err(|e| CliError::usage(format!("{flag}: {e}")))
}

fn threshold_of(flag: Option<f64>, cfg: &RunConfig) -> Result<f64, CliError> {
    let t = flag.or(cfg.threshold).unwrap_or(DEFAULT_THRESHOLD);
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CliError::usage(format!("--threshold must be >= 0, got {t}")));
    }
    Ok(t)
}

fn cmd_map(env: EnvLevel, grid: Option<f64>, out: &Path, svg: Option<&Path>, threshold: Option<f64>, common: &Common) -> CliResult {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let resolution = grid.or(cfg.grid_resolution).unwrap_or(1.0);
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(CliError::usage(format!("--grid must be > 0, got {resolution}")));
    }
    let threshold = threshold_of(threshold, &cfg)?;
    let robot = make_environment(env, &cfg.robot()?);
    let rollout_cfg = cfg.rollout.with_seed(cfg.master_seed(common.seed)?);
    let (grid, stats) = map_landscape(&robot, env.label(), &cfg.bounds(), resolution, &rollout_cfg, common.jobs)?;

    let mut f = create(out)?;
    write_landscape_csv(&grid, &mut f)?;
    f.flush().map_err(|e| CliError::io(out, e))?;
    let sgs = extract_sgs(&grid, threshold)?;
    if let Some(path) = svg {
        write_text(path, &landscape_svg(&grid, &sgs))?;
    }
    let failed: usize = stats.failures.values().sum();
    println!(
        "{}: {} nodes, {} failed, SGS {:.1}% of box, peak {:.4} m/s at ({}, {}) deg",
        env,
        stats.nodes,
        failed,
        100.0 * sgs.area_fraction,
        sgs.peak_reward,
        sgs.peak[0],
        sgs.peak[1]
    );
    let diverged = stats.count(FailureKind::Diverged);
    if 2 * diverged > stats.nodes {
        return Err(CliError::simulation(format!("simulation diverged on {diverged} of {} nodes", stats.nodes)));
    }
    Ok(())
}

fn cmd_learn(env: EnvLevel, init: Option<&str>, steps: Option<usize>, out: &Path, common: &Common) -> CliResult {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let init = match (init, cfg.init) {
        (Some(text), _) => parse_params("--init", text)?,
        (None, Some([a, b])) => PolicyParams::new(a, b),
        (None, None) => return Err(CliError::usage("--init is required (or `init` in the config)")),
    };
    let master = cfg.master_seed(common.seed)?;
    let mut learner = cfg.learner(master);
    if let Some(n) = steps {
        learner.max_steps = n;
    }
    init.validate(&learner.bounds).map_err(|e| CliError::usage(format!("--init: {e}")))?;
    let oracle = RolloutOracle { env: make_environment(env, &cfg.robot()?), cfg: cfg.rollout.clone(), jobs: common.jobs };
    let trace = run_learning(init, &oracle, &learner, env.label())?;
    let mut f = create(out)?;
    trace.write_csv(&mut f)?;
    f.flush().map_err(|e| CliError::io(out, e))?;
    if let Some(last) = trace.last() {
        println!(
            "{} steps, {} rollouts; last ({:.3}, {:.3}) deg at {:.4} m/s",
            trace.len(),
            last.rollouts,
            last.params[0],
            last.params[1],
            last.reward
        );
    }
    Ok(())
}

fn cmd_curriculum(out: Option<&Path>, init: Option<&str>, common: &Common) -> CliResult {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::usage("--out is required (or `output_dir` in the config)"))?;
    let init = match (init, cfg.init) {
        (Some(text), _) => parse_params("--init", text)?,
        (None, Some([a, b])) => PolicyParams::new(a, b),
        (None, None) => return Err(CliError::usage("--init is required (or `init` in the config)")),
    };
    let master = cfg.master_seed(common.seed)?;
    let spec = cfg.curriculum_spec(master);
    spec.validate()?;
    init.validate(&spec.learner.bounds).map_err(|e| CliError::usage(format!("init: {e}")))?;
    let base = cfg.robot()?;
    let result = run_curriculum(init, &spec, &base, &cfg.rollout, common.jobs)?;

    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut per_env: Vec<(String, hopcurve_core::LearningTrace)> = Vec::new();
    for st in &result.stages {
        match per_env.iter_mut().find(|(e, _)| *e == st.env) {
            Some((_, t)) => t.records.extend(st.trace.records.iter().cloned()),
            None => per_env.push((st.env.clone(), st.trace.clone())),
        }
    }
    for (env, trace) in &per_env {
        let path = dir.join(format!("trace_{env}.csv"));
        let mut f = create(&path)?;
        trace.write_csv(&mut f)?;
        f.flush().map_err(|e| CliError::io(&path, e))?;
    }
    let memory = serde_json::to_string_pretty(&result.memory).expect("memory serializes");
    write_text(&dir.join("memory.json"), &(memory + "\n"))?;

    // score the final policy in the last environment, outside the budget
    let last = *spec.levels.last().expect("validated non-empty");
    let env = make_environment(last, &base);
    let n_eval = cfg.curriculum.evaluation_rollouts;
    let mut total = 0.0;
    for k in 0..n_eval {
        let s = seed::derive(master, &[0xE7A1, k as u64]);
        total += rollout(&result.final_params, &env, &cfg.rollout.with_seed(s))?.reward;
    }
    let final_reward = if n_eval > 0 { total / n_eval as f64 } else { f64::NAN };
    let stages: Vec<serde_json::Value> = result
        .stages
        .iter()
        .map(|s| {
            serde_json::json!({
                "env": s.env,
                "steps": s.trace.len(),
                "probe_rollouts": s.probe_rollouts,
                "best_reward": s.trace.records.iter().map(|r| r.reward).fold(0.0, f64::max),
            })
        })
        .collect();
    let report = serde_json::json!({
        "init": init.as_array(),
        "final_params": result.final_params.as_array(),
        "final_env": last.label(),
        "final_reward_mps": final_reward,
        "evaluation_rollouts": n_eval,
        "total_rollouts": result.total_rollouts,
        "budget": spec.total_budget,
        "stages": stages,
        "seed": master,
    });
    write_text(&dir.join("report.json"), &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;

    let mut summary = String::new();
    summary.push_str(&format!("init            {:.3}, {:.3} deg\n", init.theta0, init.theta1));
    for s in &result.stages {
        summary.push_str(&format!("stage {:<12} {:>3} steps, {:>3} probe rollouts\n", s.env, s.trace.len(), s.probe_rollouts));
    }
    summary.push_str(&format!(
        "final           {:.3}, {:.3} deg\nfinal reward    {:.4} m/s in {} (mean of {})\nrollouts        {}\n",
        result.final_params.theta0, result.final_params.theta1, final_reward, last, n_eval, result.total_rollouts
    ));
    write_text(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_analyze(paths: &[PathBuf], labels: Option<&str>, threshold: Option<f64>, out: Option<&Path>, svg: Option<&Path>) -> CliResult {
    let threshold = threshold_of(threshold, &RunConfig::default())?;
    let labels: Vec<String> = match labels {
        Some(text) => text.split(',').map(|s| s.trim().to_string()).collect(),
        None => paths
            .iter()
            .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
            .collect(),
    };
    if labels.len() != paths.len() {
        return Err(CliError::usage(format!("--labels names {} landscapes but {} were given", labels.len(), paths.len())));
    }
    let mut grids = Vec::new();
    for (path, label) in paths.iter().zip(&labels) {
        let f = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let grid = read_landscape_csv(BufReader::new(f), label).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        grids.push(grid);
    }
    let report = criteria_report(&grids, threshold)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    if let Some(path) = svg {
        let sums: Vec<_> = report.environments.iter().map(|e| e.sgs.clone()).collect();
        write_text(path, &funnel_svg(&grids, &sums))?;
    }
    for e in &report.environments {
        eprintln!("{:<14} SGS {:5.1}%  peak {:.4} m/s at ({}, {})", e.env, 100.0 * e.sgs.area_fraction, e.sgs.peak_reward, e.sgs.peak[0], e.sgs.peak[1]);
    }
    for f in &report.funnels {
        eprintln!(
            "{} -> {}: peak {} (margin {:.2} deg)",
            f.source_env,
            f.target_env,
            if f.peak_contained { "contained" } else { "NOT contained" },
            f.margin
        );
    }
    Ok(())
}

fn cmd_rollout(env: EnvLevel, params: &str, dump: Option<&Path>, common: &Common) -> CliResult {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let policy = parse_params("--params", params)?;
    policy.validate(&cfg.bounds()).map_err(|e| CliError::usage(format!("--params: {e}")))?;
    let robot = make_environment(env, &cfg.robot()?);
    let mut rc = cfg.rollout.with_seed(cfg.master_seed(common.seed)?);
    rc.record_trajectory = dump.is_some();
    let result = rollout(&policy, &robot, &rc)?;
    if let (Some(path), Some(traj)) = (dump, result.trajectory.as_ref()) {
        let mut f = create(path)?;
        write_trajectory_csv(traj, &mut f)?;
        f.flush().map_err(|e| CliError::io(path, e))?;
    }
    println!(
        "reward {:.4} m/s  failure {}  displacement {:.4} m  hops {}  peak height {:.4} m",
        result.reward,
        result.failure.map_or_else(|| "none".to_string(), |k| k.to_string()),
        result.displacement,
        result.hop_count,
        result.peak_height
    );
    if result.failure == Some(FailureKind::Diverged) {
        return Err(CliError::simulation("simulation diverged"));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Map { env, grid, out, svg, threshold, common } => cmd_map(*env, *grid, out, svg.as_deref(), *threshold, common),
        Command::Learn { env, init, steps, out, common } => cmd_learn(*env, init.as_deref(), *steps, out, common),
        Command::Curriculum { out, init, common } => cmd_curriculum(out.as_deref(), init.as_deref(), common),
        Command::Analyze { landscapes, labels, threshold, out, svg } => {
            cmd_analyze(landscapes, labels.as_deref(), *threshold, out.as_deref(), svg.as_deref())
        }
        Command::Rollout { env, params, dump, common } => cmd_rollout(*env, params, dump.as_deref(), common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
