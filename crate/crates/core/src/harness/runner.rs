//! Training, evaluation and sweep loops.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{Algorithm, Backend, RunConfig, Scenario};
use super::output::{
    report_fields, trace_csv, write_bytes, write_metrics, write_plot_data, write_sweep, MetricsRow,
    Phase, SweepRow, TraceRow,
};
use super::rng::{episode_seed, eval_episode_seed, stream, Stream};
use crate::agents::{
    select_action, tabular_update, DqnModel, EpsilonSchedule, Experience, QTable, ReplayMemory,
};
use crate::baselines::{fifo_clear, max_sinr_reset, random_clear, FifoClear};
use crate::env::{Environment, SonEnv, VolteEnv};
use crate::error::{Error, Result};
use crate::metrics::{
    spectral_efficiency, throughput_percentiles, ue_throughput_mbps, MetricsReport,
    RetainabilityCounter,
};
use crate::radio::db_to_linear;

/// Trained policy of the proposed algorithm.
#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Tabular(QTable),
    Dqn(DqnModel),
}

impl Agent {
    pub fn new(cfg: &RunConfig, n_states: usize, n_actions: usize, obs_len: usize) -> Result<Self> {
        match cfg.run.backend {
            Backend::Tabular => Ok(Agent::Tabular(QTable::new(
                n_states,
                n_actions,
                cfg.agent.learning_rate,
                cfg.agent.discount,
            )?)),
            Backend::Dqn => Ok(Agent::Dqn(DqnModel::new(obs_len, n_actions, cfg.dqn, cfg.run.seed)?)),
        }
    }

    pub fn q_row(&self, state: usize, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Agent::Tabular(t) => {
                if state >= t.n_states() {
                    return Err(Error::Shape {
                        expected: t.n_states(),
                        actual: state,
                    });
                }
                Ok(t.row(state).to_vec())
            }
            Agent::Dqn(m) => m.forward(obs),
        }
    }

    pub fn checkpoint_name(backend: Backend) -> &'static str {
        match backend {
            Backend::Tabular => "qtable.csv",
            Backend::Dqn => "dqn.ckpt",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Agent::Tabular(t) => t.save_csv(path),
            Agent::Dqn(m) => m.save(path),
        }
    }

    /// Loads a checkpoint and checks it against the environment's shape.
    pub fn load(path: &Path, cfg: &RunConfig, n_states: usize, n_actions: usize, obs_len: usize) -> Result<Self> {
        let agent = match cfg.run.backend {
            Backend::Tabular => Agent::Tabular(QTable::load_csv(path, cfg.agent.learning_rate, cfg.agent.discount)?),
            Backend::Dqn => Agent::Dqn(DqnModel::load(path)?),
        };
        let (rows, cols) = match &agent {
            Agent::Tabular(t) => (t.n_states(), t.n_actions()),
            Agent::Dqn(m) => (m.n_inputs(), m.n_outputs()),
        };
        let want_rows = if cfg.run.backend == Backend::Tabular { n_states } else { obs_len };
        if rows != want_rows {
            return Err(Error::Shape {
                expected: want_rows,
                actual: rows,
            });
        }
        if cols != n_actions {
            return Err(Error::Shape {
                expected: n_actions,
                actual: cols,
            });
        }
        Ok(agent)
    }
}

enum Scene {
    Volte(VolteEnv),
    Son(SonEnv),
}

impl Scene {
    fn build(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.run.scenario {
            Scenario::VoltePc => Scene::Volte(VolteEnv::new(cfg.radio.clone(), cfg.events.clone(), cfg.volte.clone())?),
            Scenario::SonFm => Scene::Son(SonEnv::new(cfg.radio.clone(), cfg.events.clone(), cfg.son.clone())?),
        })
    }

    fn env(&mut self) -> &mut dyn Environment {
        match self {
            Scene::Volte(e) => e,
            Scene::Son(e) => e,
        }
    }

    fn env_ref(&self) -> &dyn Environment {
        match self {
            Scene::Volte(e) => e,
            Scene::Son(e) => e,
        }
    }

    fn reached_goal(&self) -> bool {
        match self {
            Scene::Volte(e) => e.gamma_eff_db() >= e.params().gamma_target_db,
            Scene::Son(e) => e.faults().register().is_empty(),
        }
    }

    /// Bandwidth available to one UE in one TTI, Hz.
    fn share_hz(&self) -> f64 {
        match self {
            Scene::Volte(e) => {
                e.radio().bandwidth_hz * f64::from(e.params().n_prb_ue) / f64::from(e.radio().n_prb)
            }
            Scene::Son(e) => e.radio().bandwidth_hz / e.n_ues() as f64,
        }
    }

    fn antennas(&self) -> (usize, usize) {
        let r = match self {
            Scene::Volte(e) => e.radio(),
            Scene::Son(e) => e.radio(),
        };
        (r.n_rx_antennas as usize, r.n_tx_antennas as usize)
    }
}

fn rayleigh<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Accumulates per-sample link metrics across evaluation episodes.
struct MetricsAccumulator {
    retained: RetainabilityCounter,
    mos: Vec<f64>,
    cell_tp: Vec<f64>,
    ue_tp: Vec<f64>,
    se_sum: f64,
    se_n: u64,
}

impl MetricsAccumulator {
    fn new() -> Self {
        Self {
            retained: RetainabilityCounter::default(),
            mos: Vec::new(),
            cell_tp: Vec::new(),
            ue_tp: Vec::new(),
            se_sum: 0.0,
            se_n: 0,
        }
    }

    /// `samples[t][ue]` are the per-UE SINRs after each step of one episode.
    fn add_episode(&mut self, cfg: &RunConfig, scene: &Scene, samples: &[Vec<f64>], channel: &mut ChaCha8Rng) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::invalid("episode produced no samples"));
        }
        let m = &cfg.metrics;
        let (rows, cols) = scene.antennas();
        let share = scene.share_hz();
        let n_ue = samples[0].len();
        let mut per_sum = 0.0;
        let mut ue_sum = vec![0.0; n_ue];
        let mut cell_sum = 0.0;
        for row in samples {
            self.retained.extend(row, m.gamma_min_db);
            for (i, &g_db) in row.iter().enumerate() {
                let g = db_to_linear(g_db);
                let per = m.error_model.packet_error_rate(g)?;
                let se = spectral_efficiency(&rayleigh(channel, rows, cols), g, 1.0, m.modulation_order)?;
                let tp = ue_throughput_mbps(se, share, per);
                per_sum += per;
                ue_sum[i] += tp;
                cell_sum += tp;
                self.se_sum += se;
                self.se_n += 1;
            }
        }
        let n_t = samples.len() as f64;
        self.mos.push(m.mos.mos(per_sum / (n_t * n_ue as f64))?);
        self.cell_tp.push(cell_sum / n_t);
        self.ue_tp.extend(ue_sum.iter().map(|s| s / n_t));
        Ok(())
    }

    fn report(&self) -> Result<MetricsReport> {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let p = throughput_percentiles(&self.ue_tp)?;
        Ok(MetricsReport {
            retainability: self.retained.value()?,
            mos: mean(&self.mos),
            avg_cell_throughput_mbps: mean(&self.cell_tp),
            ue_throughput_peak_mbps: p.peak,
            ue_throughput_avg_mbps: p.avg,
            ue_throughput_edge_mbps: p.edge,
            avg_spectral_efficiency_bits_per_cu: self.se_sum / self.se_n as f64,
        })
    }
}

/// Per-episode summary of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub seed: u64,
    pub steps: u32,
    pub total_reward: f64,
    /// Target met (power control) or register emptied (fault management).
    pub reached_goal: bool,
    /// Non-no-op actions issued.
    pub commands: u64,
    /// Observable at t = 0 and after every step.
    pub observable: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub algorithm: Algorithm,
    pub report: MetricsReport,
    pub target_attainment: f64,
    pub commands: u64,
    pub episodes: Vec<EpisodeSummary>,
    pub rows: Vec<TraceRow>,
}

impl Evaluation {
    /// Mean observable per TTI, holding each episode's last value after
    /// it ends.
    pub fn mean_observable_series(&self, horizon: u32) -> Vec<f64> {
        let n = self.episodes.len() as f64;
        (0..=horizon as usize)
            .map(|t| {
                self.episodes
                    .iter()
                    .map(|e| e.observable[t.min(e.observable.len() - 1)])
                    .sum::<f64>()
                    / n
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub agent: Agent,
    pub rows: Vec<TraceRow>,
    pub final_epsilon: f64,
}

/// Runs the configured number of training episodes of the proposed
/// algorithm. Episode `e` uses seed `episode_seed(master, e)`; exploration
/// and replay sampling share the master's agent stream.
pub fn train(cfg: &RunConfig) -> Result<Training> {
    cfg.validate()?;
    let mut scene = Scene::build(cfg)?;
    let (n_s, n_a, obs_len) = {
        let env = scene.env_ref();
        (env.n_states(), env.n_actions(), env.observation_len())
    };
    let mut agent = Agent::new(cfg, n_s, n_a, obs_len)?;
    let mut schedule = cfg.agent.exploration;
    let mut rng = stream(cfg.run.seed, Stream::Agent);
    let mut memory = ReplayMemory::new(cfg.dqn.replay_capacity, cfg.dqn.batch_size)?;
    let mut rows = Vec::new();
    for ep in 0..cfg.run.train_episodes {
        let env = scene.env();
        env.reset(episode_seed(cfg.run.seed, ep))?;
        while !env.is_done() {
            let s = env.state();
            let obs = env.observation();
            let action = select_action(&agent.q_row(s, &obs)?, &mut schedule, &mut rng)?;
            let tr = env.step(action)?;
            match &mut agent {
                Agent::Tabular(t) => {
                    tabular_update(t, s, action, tr.reward, tr.state)?;
                }
                Agent::Dqn(m) => {
                    memory.push(Experience {
                        state: s,
                        obs,
                        action,
                        reward: tr.reward,
                        next_state: tr.state,
                        next_obs: env.observation(),
                        terminal: tr.terminal,
                    });
                    if memory.len() >= memory.batch_size() {
                        m.train_step(&memory, &mut rng)?;
                    }
                }
            }
            rows.push(TraceRow {
                phase: Phase::Train,
                episode: ep,
                tti: tr.tti,
                state: tr.state,
                action,
                event_id: tr.event_id,
                event_delta_db: tr.event_delta_db,
                observable: tr.observable,
                reward: tr.reward,
                epsilon: schedule.epsilon,
            });
        }
        if (ep + 1) % 100 == 0 {
            log::info!("trained {} of {} episodes, epsilon {:.4}", ep + 1, cfg.run.train_episodes, schedule.epsilon);
        }
    }
    Ok(Training {
        agent,
        rows,
        final_epsilon: schedule.epsilon,
    })
}

/// Evaluates `cfg.run.algorithm` on the evaluation seed set. The proposed
/// algorithm needs `agent` and acts ε-greedily at `run.eval_epsilon`;
/// baselines ignore it.
pub fn evaluate(cfg: &RunConfig, agent: Option<&Agent>) -> Result<Evaluation> {
    cfg.validate()?;
    let alg = cfg.run.algorithm;
    let agent = match (alg, agent) {
        (Algorithm::Proposed, None) => {
            return Err(Error::invalid("the proposed algorithm needs a trained agent"));
        }
        (Algorithm::Proposed, a) => a,
        _ => None,
    };
    let mut scene = Scene::build(cfg)?;
    let mut acc = MetricsAccumulator::new();
    let mut episodes = Vec::new();
    let mut rows = Vec::new();
    let eval_eps = cfg.run.eval_epsilon;
    for ep in 0..cfg.run.eval_episodes {
        let seed = eval_episode_seed(cfg.run.seed, ep);
        let mut rng = stream(seed, Stream::Agent);
        let mut channel = stream(seed, Stream::Channel);
        let mut schedule = EpsilonSchedule::new(eval_eps, 1.0, eval_eps)?;
        let mut fifo = FifoClear::new();
        match (&mut scene, alg) {
            (Scene::Volte(env), Algorithm::MaxSinr) => {
                max_sinr_reset(env, seed)?;
            }
            (scene, _) => {
                scene.env().reset(seed)?;
            }
        }
        let mut summary = EpisodeSummary {
            episode: ep,
            seed,
            steps: 0,
            total_reward: 0.0,
            reached_goal: false,
            commands: 0,
            observable: vec![scene.env_ref().observable()],
        };
        let mut samples = Vec::new();
        while !scene.env_ref().is_done() {
            let action = match (&scene, alg) {
                (_, Algorithm::Proposed) => {
                    let env = scene.env_ref();
                    let row = agent
                        .expect("checked above")
                        .q_row(env.state(), &env.observation())?;
                    select_action(&row, &mut schedule, &mut rng)?
                }
                (_, Algorithm::Fpa | Algorithm::MaxSinr) => 0,
                (Scene::Son(env), Algorithm::Random) => random_clear(env.faults().register(), &mut rng)?,
                (Scene::Son(env), Algorithm::Fifo) => {
                    fifo_clear(&mut fifo, env.faults().register(), env.arrivals())?
                }
                _ => unreachable!("validate rejects algorithm/scenario mismatches"),
            };
            let tr = scene.env().step(action)?;
            samples.push(scene.env_ref().per_ue_sinr_db());
            summary.steps += 1;
            summary.total_reward += tr.reward;
            summary.commands += u64::from(action != 0);
            summary.observable.push(tr.observable);
            rows.push(TraceRow {
                phase: Phase::Eval,
                episode: ep,
                tti: tr.tti,
                state: tr.state,
                action,
                event_id: tr.event_id,
                event_delta_db: tr.event_delta_db,
                observable: tr.observable,
                reward: tr.reward,
                epsilon: schedule.epsilon,
            });
        }
        summary.reached_goal = scene.reached_goal();
        acc.add_episode(cfg, &scene, &samples, &mut channel)?;
        episodes.push(summary);
    }
    let n = episodes.len() as f64;
    log::info!("evaluated {} over {} episodes", alg, episodes.len());
    Ok(Evaluation {
        algorithm: alg,
        report: acc.report()?,
        target_attainment: episodes.iter().filter(|e| e.reached_goal).count() as f64 / n,
        commands: episodes.iter().map(|e| e.commands).sum(),
        episodes,
        rows,
    })
}

/// Trains (proposed only) and evaluates.
pub fn train_and_evaluate(cfg: &RunConfig) -> Result<(Option<Training>, Evaluation)> {
    if cfg.run.algorithm == Algorithm::Proposed {
        let t = train(cfg)?;
        let e = evaluate(cfg, Some(&t.agent))?;
        Ok((Some(t), e))
    } else {
        Ok((None, evaluate(cfg, None)?))
    }
}

/// Files written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace_path: PathBuf,
    pub trace_digest: String,
    pub metrics_path: PathBuf,
    pub checkpoint_path: Option<PathBuf>,
    pub plot_data_path: Option<PathBuf>,
    pub report: MetricsReport,
    pub target_attainment: f64,
    pub commands: u64,
    pub wall_clock_s: f64,
}

fn horizon(cfg: &RunConfig) -> u32 {
    match cfg.run.scenario {
        Scenario::VoltePc => cfg.volte.horizon,
        Scenario::SonFm => cfg.son.horizon,
    }
}

fn q_of(cfg: &RunConfig) -> usize {
    match cfg.run.scenario {
        Scenario::VoltePc => cfg.volte.max_ues,
        Scenario::SonFm => cfg.son.q,
    }
}

fn create_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))
}

fn write_outputs(
    cfg: &RunConfig,
    out: &Path,
    started: Instant,
    training: Option<&Training>,
    eval: &Evaluation,
    emit_plot_data: bool,
) -> Result<RunResult> {
    let mut rows: Vec<TraceRow> = training.map(|t| t.rows.clone()).unwrap_or_default();
    rows.extend(eval.rows.iter().cloned());
    let bytes = trace_csv(&cfg.run.run_id, cfg.run.scenario, &rows)?;

    let plot_series = if emit_plot_data {
        // The power-control figure pairs the run against fixed power on the
        // same seeds; fault management plots the run alone.
        let mut series = vec![(eval.algorithm, eval.mean_observable_series(horizon(cfg)))];
        if cfg.run.scenario == Scenario::VoltePc && eval.algorithm != Algorithm::Fpa {
            let mut fpa = cfg.clone();
            fpa.run.algorithm = Algorithm::Fpa;
            series.push((Algorithm::Fpa, evaluate(&fpa, None)?.mean_observable_series(horizon(cfg))));
        }
        Some(series)
    } else {
        None
    };

    create_dir(out)?;
    let trace_path = out.join("trace.csv");
    write_bytes(&trace_path, &bytes)?;
    let metrics_path = out.join("metrics.csv");
    write_metrics(
        &metrics_path,
        &[MetricsRow {
            run_id: cfg.run.run_id.clone(),
            scenario: cfg.run.scenario,
            algorithm: eval.algorithm,
            q: q_of(cfg),
            report: eval.report.clone(),
            target_attainment: eval.target_attainment,
            commands: eval.commands,
        }],
    )?;
    let checkpoint_path = match training {
        Some(t) => {
            let p = out.join(Agent::checkpoint_name(cfg.run.backend));
            t.agent.save(&p)?;
            Some(p)
        }
        None => None,
    };
    let plot_data_path = match plot_series {
        Some(series) => {
            let p = out.join("plot_data.csv");
            write_plot_data(&p, cfg.run.scenario, &series)?;
            Some(p)
        }
        None => None,
    };
    write_bytes(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    Ok(RunResult {
        trace_path,
        trace_digest: super::output::sha256_hex(&bytes),
        metrics_path,
        checkpoint_path,
        plot_data_path,
        report: eval.report.clone(),
        target_attainment: eval.target_attainment,
        commands: eval.commands,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// `train` subcommand: trains (proposed only), persists the model, then
/// evaluates. Nothing is written unless every stage succeeds.
pub fn run_train(cfg: &RunConfig, out: &Path, emit_plot_data: bool) -> Result<RunResult> {
    let started = Instant::now();
    let (training, eval) = train_and_evaluate(cfg)?;
    write_outputs(cfg, out, started, training.as_ref(), &eval, emit_plot_data)
}

/// `evaluate` subcommand. The checkpoint is only read.
pub fn run_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path, emit_plot_data: bool) -> Result<RunResult> {
    let started = Instant::now();
    cfg.validate()?;
    let agent = match (cfg.run.algorithm, checkpoint) {
        (Algorithm::Proposed, None) => {
            return Err(Error::Config("evaluating the proposed algorithm needs a checkpoint".into()));
        }
        (Algorithm::Proposed, Some(p)) => {
            let env = Scene::build(cfg)?;
            let e = env.env_ref();
            Some(Agent::load(p, cfg, e.n_states(), e.n_actions(), e.observation_len())?)
        }
        _ => None,
    };
    let eval = evaluate(cfg, agent.as_ref())?;
    write_outputs(cfg, out, started, None, &eval, emit_plot_data)
}

/// Values swept by `sweep`: UEs per cell (fault management) or PPP
/// intensity (power control).
pub fn sweep_parameter(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::VoltePc => "lambda",
        Scenario::SonFm => "q",
    }
}

/// Evaluates every algorithm of the scenario at every value, one worker
/// thread per (algorithm, value).
pub fn sweep(cfg: &RunConfig, values: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut jobs = Vec::new();
    for &v in values {
        for alg in cfg.run.scenario.algorithms() {
            let mut c = cfg.clone();
            c.run.algorithm = alg;
            match cfg.run.scenario {
                Scenario::SonFm => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::Config(format!("q must be a positive integer, got {v}")));
                    }
                    c.son.q = v as usize;
                }
                Scenario::VoltePc => c.volte.ppp_intensity = v,
            }
            c.validate()?;
            jobs.push((alg, v, c));
        }
    }
    let results: Vec<Result<Evaluation>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(_, _, c)| s.spawn(move || train_and_evaluate(c).map(|(_, e)| e)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::invalid("sweep worker panicked"))))
            .collect()
    });
    let mut rows = Vec::new();
    for ((alg, v, _), res) in jobs.iter().zip(results) {
        let e = res?;
        for (metric, result) in report_fields(&e.report) {
            rows.push(SweepRow {
                algorithm: *alg,
                value: *v,
                metric,
                result,
            });
        }
        rows.push(SweepRow {
            algorithm: *alg,
            value: *v,
            metric: "target_attainment",
            result: e.target_attainment,
        });
    }
    Ok(rows)
}

/// `sweep` subcommand; writes `sweep.csv`.
pub fn run_sweep(cfg: &RunConfig, values: &[f64], out: &Path) -> Result<PathBuf> {
    let rows = sweep(cfg, values)?;
    create_dir(out)?;
    let p = out.join("sweep.csv");
    write_sweep(&p, sweep_parameter(cfg.run.scenario), &rows)?;
    Ok(p)
}
