//! Command-line surface. Every command is batch and non-interactive.
//!
//! Exit codes: 0 success, 1 bad input or I/O, 2 training divergence or a
//! failed gradient check.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::ddpg::{self, DdpgError};
use crate::geometry::Vec2;
use crate::metrics::{self, MetricsReport};
use crate::plot::render_svg;
use crate::scene::{self, Scene, SceneRef};
use crate::sim::write_trajectory_csv;

pub const POLICY_FILE: &str = "policy.ckpt";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const CONFIG_ECHO_FILE: &str = "config.json";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const SCENE_FILE: &str = "scene.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";

/// Worst relative error the gradient suite tolerates.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "skysmooth", version, about = "Train and evaluate smooth UAV avoidance policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a policy and write checkpoint, training log and config echo.
    Train {
        /// JSON run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Builtin scene name, "empty", or a scene file.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, env = "SKYSMOOTH_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Enable or disable the smoothness reward.
        #[arg(long, value_enum)]
        smooth: Option<Switch>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted override such as rewards.C3=1.0; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run greedy episodes and write one trajectory per episode plus a report.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        /// Defaults to the scene the policy was trained on.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, env = "SKYSMOOTH_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides on the sim and rewards sections of the training config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score a directory of trajectory CSVs.
    Metrics {
        /// Trajectory directory, or an eval output directory.
        dir: PathBuf,
        /// Scene for the route length; defaults to the scene saved by eval.
        #[arg(long)]
        scene: Option<String>,
        /// Print the one-row CSV instead of JSON.
        #[arg(long)]
        csv: bool,
    },
    /// Draw trajectories over a scene as SVG.
    Plot {
        /// A trajectory CSV, a directory of them, or an eval output directory.
        input: PathBuf,
        /// Defaults to the scene saved by eval.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a builtin scene to a file.
    Scene { name: String, out: PathBuf },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        Self {
            code: 1,
            error: e.into(),
        }
    }
}

type CliResult = Result<(), CliError>;

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Train {
            config,
            scene,
            seed,
            episodes,
            smooth,
            out,
            overrides,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            for o in &overrides {
                cfg = cfg.with_override(o)?;
            }
            if let Some(s) = scene {
                cfg.scene = SceneRef(s);
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(n) = episodes {
                cfg.train.episodes = n;
            }
            if let Some(s) = smooth {
                cfg.rewards.smooth_enabled = matches!(s, Switch::On);
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            cmd_train(&cfg)
        }
        Command::Eval {
            policy,
            scene,
            episodes,
            seed,
            out,
            overrides,
        } => cmd_eval(&policy, scene.as_deref(), episodes, seed, &out, &overrides),
        Command::Metrics { dir, scene, csv } => cmd_metrics(&dir, scene.as_deref(), csv),
        Command::Plot { input, scene, out } => cmd_plot(&input, scene.as_deref(), &out),
        Command::Scene { name, out } => cmd_scene(&name, &out),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

fn resolve_scene(r: &SceneRef) -> anyhow::Result<Scene> {
    r.resolve().with_context(|| format!("cannot load scene '{r}'"))
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult {
    cfg.validate()?;
    let scene = resolve_scene(&cfg.scene)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    write_file(&cfg.out.join(CONFIG_ECHO_FILE), &cfg.to_json())?;

    let (mut policy, log) = match ddpg::train(&scene, &cfg.sim, &cfg.rewards, &cfg.train) {
        Ok(r) => r,
        Err(e @ DdpgError::DivergedAt { .. }) | Err(e @ DdpgError::Diverged) => {
            return Err(CliError {
                code: 2,
                error: e.into(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    // The output directory is not part of the model; leaving it out keeps
    // checkpoints from the same seed byte-identical wherever they are written.
    let mut echo = serde_json::to_value(cfg).expect("config serializes");
    if let Some(map) = echo.as_object_mut() {
        map.remove("out");
    }
    policy.echo = echo;

    let log_path = cfg.out.join(TRAINING_LOG_FILE);
    let f = File::create(&log_path).with_context(|| format!("cannot write {}", log_path.display()))?;
    ddpg::write_training_log(&log, BufWriter::new(f))?;
    ddpg::save_policy(&policy, &cfg.out.join(POLICY_FILE))?;
    println!(
        "trained {} episodes ({} steps); last greedy success rate {}",
        log.episodes.len(),
        log.total_steps,
        log.last_eval_sr()
            .map(|v| format!("{v:.1}%"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

/// The training config stored in a checkpoint, or defaults for a bare one.
fn training_config(policy: &ddpg::Policy) -> anyhow::Result<RunConfig> {
    if policy.echo.is_null() {
        return Ok(RunConfig::default());
    }
    serde_json::from_value(policy.echo.clone()).context("checkpoint carries an unreadable config")
}

pub fn cmd_eval(
    policy_path: &Path,
    scene: Option<&str>,
    episodes: usize,
    seed: u64,
    out: &Path,
    overrides: &[String],
) -> CliResult {
    let policy = ddpg::load_policy(policy_path)
        .with_context(|| format!("cannot load policy {}", policy_path.display()))?;
    let mut cfg = training_config(&policy)?;
    for o in overrides {
        if !(o.starts_with("sim.") || o.starts_with("rewards.")) {
            return Err(anyhow!("eval only accepts sim.* and rewards.* overrides, got '{o}'").into());
        }
        cfg = cfg.with_override(o)?;
    }
    if let Some(s) = scene {
        cfg.scene = SceneRef(s.to_string());
    }
    cfg.out = out.to_path_buf();
    if episodes == 0 {
        return Err(anyhow!("--episodes must be at least 1").into());
    }
    let scene = resolve_scene(&cfg.scene)?;
    let eps = ddpg::evaluate(&policy, &scene, &cfg.sim, &cfg.rewards, episodes, seed)?;

    let traj_dir = out.join(TRAJECTORY_DIR);
    fs::create_dir_all(&traj_dir).with_context(|| format!("cannot create {}", traj_dir.display()))?;
    let mut trajs = Vec::with_capacity(eps.len());
    for (i, ep) in eps.iter().enumerate() {
        let path = traj_dir.join(format!("ep_{i:04}.csv"));
        let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        write_trajectory_csv(&ep.log, BufWriter::new(f))?;
        trajs.push(metrics::Trajectory::from_log(&ep.log)?);
    }
    scene::save(&scene, &out.join(SCENE_FILE))?;
    let mut echo = serde_json::to_value(&cfg).expect("config serializes");
    echo["eval"] = serde_json::json!({"episodes": episodes, "seed": seed, "policy": policy_path});
    write_file(
        &out.join(CONFIG_ECHO_FILE),
        &(serde_json::to_string_pretty(&echo).expect("json") + "\n"),
    )?;
    let report = metrics::report(&trajs, scene.route_length())?;
    write_report(out, &report)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(())
}

fn write_report(out: &Path, r: &MetricsReport) -> anyhow::Result<()> {
    write_file(
        &out.join(REPORT_JSON_FILE),
        &(serde_json::to_string_pretty(r).expect("json") + "\n"),
    )?;
    let path = out.join(REPORT_CSV_FILE);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    metrics::write_report_csv(r, BufWriter::new(f))?;
    Ok(())
}

/// Trajectory directory and scene for a path that may be an eval output dir.
fn eval_inputs(input: &Path, scene: Option<&str>) -> anyhow::Result<(PathBuf, Scene)> {
    let (traj, root) = if input.join(TRAJECTORY_DIR).is_dir() {
        (input.join(TRAJECTORY_DIR), input.to_path_buf())
    } else if input.is_file() {
        (input.to_path_buf(), input.parent().and_then(Path::parent).unwrap_or(Path::new(".")).to_path_buf())
    } else {
        (input.to_path_buf(), input.parent().unwrap_or(Path::new(".")).to_path_buf())
    };
    if !traj.exists() {
        return Err(anyhow!("{} does not exist", traj.display()));
    }
    let scene = match scene {
        Some(s) => resolve_scene(&SceneRef(s.to_string()))?,
        None => {
            let saved = root.join(SCENE_FILE);
            if !saved.is_file() {
                return Err(anyhow!(
                    "no --scene given and no {} next to the trajectories",
                    SCENE_FILE
                ));
            }
            scene::load(&saved)?
        }
    };
    Ok((traj, scene))
}

pub fn cmd_metrics(dir: &Path, scene: Option<&str>, csv: bool) -> CliResult {
    let (traj_dir, scene) = eval_inputs(dir, scene)?;
    let report = metrics::aggregate_report(&traj_dir, scene.route_length())?;
    if csv {
        metrics::write_report_csv(&report, std::io::stdout().lock())?;
    } else {
        println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    }
    Ok(())
}

pub fn cmd_plot(input: &Path, scene: Option<&str>, out: &Path) -> CliResult {
    let (traj, scene) = eval_inputs(input, scene)?;
    let files = if traj.is_file() {
        vec![traj]
    } else {
        metrics::trajectory_files(&traj)?
    };
    let paths: Vec<Vec<Vec2>> = files
        .iter()
        .map(|f| metrics::load_trajectory(f).map(|t| t.points))
        .collect::<Result<_, _>>()?;
    write_file(out, &render_svg(&scene, &paths))?;
    Ok(())
}

pub fn cmd_scene(name: &str, out: &Path) -> CliResult {
    let s = scene::builtin(name)?;
    scene::save(&s, out)?;
    Ok(())
}

pub fn cmd_gradcheck(seed: u64) -> CliResult {
    let report = ddpg::gradient_suite(seed);
    for (name, r) in &report.checks {
        println!("{name:<14} max rel err {:.3e} over {} params", r.max_rel_err, r.checked);
    }
    println!("worst {:.3e} (tolerance {GRADCHECK_TOL:e})", report.max_rel_err());
    if report.passed(GRADCHECK_TOL) {
        Ok(())
    } else {
        Err(CliError {
            code: 2,
            error: anyhow!("gradient check failed"),
        })
    }
}
