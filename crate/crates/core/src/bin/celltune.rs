use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use celltune::harness::output::report_fields;
use celltune::harness::runner::sweep_parameter;
use celltune::harness::{run_evaluate, run_sweep, run_train, Algorithm, RunConfig, RunResult, Scenario};

#[derive(Parser)]
#[command(name = "celltune", version, about = "Cellular cluster simulator with learned power control and fault management")]
struct Cli {
    #[command(subcommand)]
    scenario: ScenarioCmd,
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Indoor VoLTE downlink power control.
    VoltePc {
        #[command(subcommand)]
        mode: Mode,
    },
    /// Outdoor SON fault management.
    SonFm {
        #[command(subcommand)]
        mode: Mode,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file overriding the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// proposed, fpa, maxsinr, random or fifo.
    #[arg(long)]
    algorithm: Option<String>,
    /// Training episodes for train; evaluation episodes for evaluate and sweep.
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Mode {
    /// Train the proposed agent (if selected), then evaluate it.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write per-TTI mean observable series.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Evaluate a baseline, or a trained checkpoint of the proposed agent.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by train; defaults to the one in --out.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Compare every algorithm of the scenario across parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// UEs per cell (son-fm), comma separated.
        #[arg(long, value_delimiter = ',')]
        q: Vec<usize>,
        /// PPP intensities in users per square metre (volte-pc), comma separated.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
    },
}

fn build_config(scenario: Scenario, common: &Common, eval_episodes: bool) -> celltune::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p, Some(scenario))?,
        None => RunConfig::defaults(scenario),
    };
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if let Some(a) = &common.algorithm {
        cfg.run.algorithm = a.parse::<Algorithm>()?;
    }
    if let Some(n) = common.episodes {
        if eval_episodes {
            cfg.run.eval_episodes = n;
        } else {
            cfg.run.train_episodes = n;
        }
    }
    if let Some(o) = &common.out {
        cfg.run.out_dir = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_result(cfg: &RunConfig, r: &RunResult) {
    println!("scenario    {}", cfg.run.scenario);
    println!("algorithm   {}", cfg.run.algorithm);
    for (k, v) in report_fields(&r.report) {
        println!("{k:<36}{v:.6}");
    }
    println!("{:<36}{:.6}", "target_attainment", r.target_attainment);
    println!("{:<36}{}", "commands", r.commands);
    println!("trace       {} (sha256 {})", r.trace_path.display(), r.trace_digest);
    println!("metrics     {}", r.metrics_path.display());
    if let Some(p) = &r.checkpoint_path {
        println!("checkpoint  {}", p.display());
    }
    if let Some(p) = &r.plot_data_path {
        println!("plot data   {}", p.display());
    }
    println!("elapsed     {:.2} s", r.wall_clock_s);
}

fn run(cli: Cli) -> celltune::Result<()> {
    let (scenario, mode) = match cli.scenario {
        ScenarioCmd::VoltePc { mode } => (Scenario::VoltePc, mode),
        ScenarioCmd::SonFm { mode } => (Scenario::SonFm, mode),
    };
    match mode {
        Mode::Train { common, emit_plot_data } => {
            let cfg = build_config(scenario, &common, false)?;
            let r = run_train(&cfg, &PathBuf::from(&cfg.run.out_dir), emit_plot_data)?;
            print_result(&cfg, &r);
        }
        Mode::Evaluate {
            common,
            checkpoint,
            emit_plot_data,
        } => {
            let cfg = build_config(scenario, &common, true)?;
            let out = PathBuf::from(&cfg.run.out_dir);
            let ckpt = match (cfg.run.algorithm, checkpoint) {
                (Algorithm::Proposed, None) => Some(out.join(celltune::harness::Agent::checkpoint_name(cfg.run.backend))),
                (_, c) => c,
            };
            let r = run_evaluate(&cfg, ckpt.as_deref(), &out, emit_plot_data)?;
            print_result(&cfg, &r);
        }
        Mode::Sweep { common, q, lambda } => {
            let cfg = build_config(scenario, &common, true)?;
            let values: Vec<f64> = match scenario {
                Scenario::SonFm if !lambda.is_empty() => {
                    return Err(celltune::Error::Config("--lambda applies to volte-pc; use --q".into()));
                }
                Scenario::VoltePc if !q.is_empty() => {
                    return Err(celltune::Error::Config("--q applies to son-fm; use --lambda".into()));
                }
                Scenario::SonFm if q.is_empty() => vec![5.0, 10.0, 50.0],
                Scenario::SonFm => q.iter().map(|&v| v as f64).collect(),
                Scenario::VoltePc if lambda.is_empty() => vec![cfg.volte.ppp_intensity],
                Scenario::VoltePc => lambda,
            };
            let p = run_sweep(&cfg, &values, &PathBuf::from(&cfg.run.out_dir))?;
            println!("swept {} over {:?}", sweep_parameter(scenario), values);
            println!("sweep table {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
