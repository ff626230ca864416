use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use medoe::env::Task;
use medoe::harness::{self, BoostParam, EnvKind, ExperimentConfig, RunLog};
use medoe::rng::component_rng;

/// Sub-team curriculum training and MEDoE fine-tuning.
#[derive(Parser)]
#[command(name = "medoe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file, or the name of one under `configs/`.
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of parallel environments (overrides `parallel_environments`).
    #[arg(long = "parallel-envs")]
    parallel_envs: Option<usize>,
    /// Total step budget per run (overrides `budget.total_steps`).
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train (or load cached) source sub-teams.
    TrainSource(Common),
    /// Train DoE classifiers from source buffers for every composed team.
    TrainClassifier(Common),
    /// Pair source checkpoints into teams and write `teams.json`.
    Compose(Common),
    /// Run the configured baseline on every team and seed.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        force: bool,
    },
    /// One-at-a-time boost sensitivity sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// B_T, B_alpha, B_kappa or B_delta.
        #[arg(long)]
        param: String,
        #[arg(long, default_value_t = 1024)]
        samples: usize,
        #[arg(long)]
        force: bool,
    },
    /// Replay periodic adjustment checkpoints in the source tasks.
    EvalForgetting(Common),
    /// Normalised area under the return curve of a run log.
    Auc {
        #[arg(long)]
        log: PathBuf,
        /// Only this run; by default every run is reported.
        #[arg(long)]
        run: Option<String>,
    },
    /// Print a rollout of the target task.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
}

fn resolve_config(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let named = Path::new("configs").join(format!("{name}.toml"));
    if named.is_file() {
        return Ok(named);
    }
    bail!("config {name:?} not found (also tried {})", named.display())
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let path = resolve_config(&common.config)?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = common.parallel_envs {
        let mut ppo = cfg.ppo();
        ppo.parallel_environments = n;
        cfg.ppo = Some(ppo);
    }
    if let Some(b) = common.budget {
        cfg.budget.total_steps = b;
    }
    cfg.validate().with_context(|| format!("after overrides to {}", path.display()))?;
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn render(cfg: &ExperimentConfig, steps: usize) -> Result<()> {
    let mut rng = component_rng(cfg.seed, "render");
    match cfg.environment.kind {
        EnvKind::Chainball => {
            let setup = harness::chainball_setup(cfg)?;
            let task = &setup.target;
            let (mut state, _) = task.reset(&mut rng)?;
            println!("{}", task.render(&state));
            for _ in 0..steps {
                let actions = task.tables().optimal_actions(state.s);
                let tr = task.step(&mut state, &actions, &mut rng)?;
                println!("{} r={}", task.render(&state), tr.reward);
                if tr.done || tr.truncated {
                    break;
                }
            }
        }
        EnvKind::Overcooked => {
            let setup = harness::kitchen_setup();
            let task = &setup.target;
            let (mut state, _) = task.reset(&mut rng)?;
            println!("{}", task.render(&state));
            for _ in 0..steps {
                let actions: Vec<usize> = (0..2).map(|i| task.scripted_action(&state, i)).collect();
                let tr = task.step(&mut state, &actions, &mut rng)?;
                println!("actions {actions:?} reward {}\n{}", tr.reward, task.render(&state));
                if tr.done || tr.truncated {
                    break;
                }
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSource(c) => {
            let (cfg, out) = load(&c)?;
            for s in harness::run_source_stage(&cfg, &out)? {
                println!(
                    "{}-{}\tsteps {}\tattempts {}\tconverged {}\treturn {:.4}\tmax {:.4}",
                    s.task, s.index, s.steps, s.attempts, s.converged, s.source_return, s.max_return
                );
            }
        }
        Command::TrainClassifier(c) => {
            let (cfg, out) = load(&c)?;
            for (team, agent, bce) in harness::train_classifiers(&cfg, &out)? {
                println!("team {team}\tagent {}\ttest BCE {bce:.4}", agent + 1);
            }
        }
        Command::Compose(c) => {
            let (cfg, out) = load(&c)?;
            for t in harness::compose_from_checkpoints(&cfg, &out)? {
                println!(
                    "team {}\t{}\t{}\tsource steps {}",
                    t.team.team_id,
                    t.first.display(),
                    t.second.display(),
                    t.source_steps
                );
            }
        }
        Command::Run { common, force } => {
            let (cfg, out) = load(&common)?;
            let log = harness::run_experiment(&cfg, &out, force)?;
            for (id, rows) in log.runs() {
                let last = rows.last().expect("runs are non-empty");
                println!(
                    "{id}\tfinal {:.4} ± {:.4}\tauc {:.4}",
                    last.mean_return,
                    last.ci95,
                    harness::run_auc(&rows)?
                );
            }
            println!("{}", harness::log_path(&cfg, &out).display());
        }
        Command::Sweep {
            common,
            param,
            samples,
            force,
        } => {
            let (cfg, out) = load(&common)?;
            let param: BoostParam = param.parse()?;
            for r in harness::run_sweep(&cfg, param, samples, &out, force)? {
                println!("{}\t{}={:.4}\tauc {:.4}", r.sample, r.parameter, r.value, r.auc);
            }
        }
        Command::EvalForgetting(c) => {
            let (cfg, out) = load(&c)?;
            harness::evaluate_forgetting(&cfg, &out)?;
            println!("{}", harness::log_path(&cfg, &out).display());
        }
        Command::Auc { log, run } => {
            let log = RunLog::read_csv(&log)?;
            let runs: Vec<_> = log
                .runs()
                .into_iter()
                .filter(|(id, _)| run.as_ref().map_or(true, |r| r == id))
                .collect();
            match runs.as_slice() {
                [] => bail!("no matching runs in the log"),
                [(_, rows)] => println!("{}", harness::run_auc(rows)?),
                many => {
                    for (id, rows) in many {
                        println!("{id}\t{}", harness::run_auc(rows)?);
                    }
                }
            }
        }
        Command::Render { common, steps } => {
            let (cfg, _) = load(&common)?;
            render(&cfg, steps)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEDOE_LOG_LEVEL", "info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
