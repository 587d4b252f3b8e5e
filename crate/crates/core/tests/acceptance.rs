//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use celltune::agents::{argmax, tabular_update, DqnConfig, DqnModel, Experience, QTable};
use celltune::env::{Environment, VolteEnv};
use celltune::events::{
    apply_event, catalog, event, sample_event, Contribution, EnvKind, EventRates, FaultRegister, FaultState,
};
use celltune::harness::{run_train, train_and_evaluate, Algorithm, RunConfig, Scenario};
use celltune::metrics::{spectral_efficiency, sum_rate_bits, waterfill};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn volte(alg: Algorithm) -> celltune::harness::Evaluation {
    let mut cfg = RunConfig::defaults(Scenario::VoltePc);
    cfg.run.algorithm = alg;
    assert!(cfg.run.eval_episodes >= 500);
    train_and_evaluate(&cfg).expect("volte run").1
}

fn c1_retainability() -> Outcome {
    let prop = volte(Algorithm::Proposed);
    let fpa = volte(Algorithm::Fpa);
    let max = volte(Algorithm::MaxSinr);
    let gap = prop.report.retainability - fpa.report.retainability;
    (
        max.report.retainability == 1.0 && gap >= 0.10,
        format!(
            "max-sinr {:.4}, proposed {:.4}, fpa {:.4}, gap {:.4} (need 1.0 and >= 0.10)",
            max.report.retainability, prop.report.retainability, fpa.report.retainability, gap
        ),
    )
}

fn c2_attainment() -> Outcome {
    let prop = volte(Algorithm::Proposed);
    let fpa = volte(Algorithm::Fpa);
    (
        prop.target_attainment >= 0.8 && fpa.commands == 0,
        format!(
            "proposed attainment {:.3} (need >= 0.8), fpa commands {}",
            prop.target_attainment, fpa.commands
        ),
    )
}

fn c3_mos() -> Outcome {
    let prop = volte(Algorithm::Proposed);
    let fpa = volte(Algorithm::Fpa);
    (
        prop.report.mos >= fpa.report.mos,
        format!("proposed mos {:.3}, fpa mos {:.3}", prop.report.mos, fpa.report.mos),
    )
}

fn son(alg: Algorithm, q: usize) -> celltune::metrics::MetricsReport {
    let mut cfg = RunConfig::defaults(Scenario::SonFm);
    cfg.run.algorithm = alg;
    cfg.son.q = q;
    cfg.dqn.learning_rate = 1e-3;
    assert!(cfg.run.eval_episodes >= 300);
    train_and_evaluate(&cfg).expect("son run").1.report
}

fn c4_son_ordering() -> Outcome {
    let algs = [Algorithm::Proposed, Algorithm::Fifo, Algorithm::Random];
    let r10: Vec<_> = algs.iter().map(|&a| son(a, 10)).collect();
    let ordered = |f: fn(&celltune::metrics::MetricsReport) -> f64| {
        f(&r10[0]) >= f(&r10[1]) && f(&r10[1]) >= f(&r10[2])
    };
    let avg = |r: &celltune::metrics::MetricsReport| r.ue_throughput_avg_mbps;
    let se = |r: &celltune::metrics::MetricsReport| r.avg_spectral_efficiency_bits_per_cu;
    let ok10 = ordered(avg) && ordered(se);

    let r50: Vec<f64> = algs.iter().map(|&a| son(a, 50).ue_throughput_avg_mbps).collect();
    let hi = r50.iter().copied().fold(f64::MIN, f64::max);
    let lo = r50.iter().copied().fold(f64::MAX, f64::min);
    let spread = (hi - lo) / hi;
    (
        ok10 && spread <= 0.02,
        format!(
            "q=10 avg {:.4}/{:.4}/{:.4} se {:.4}/{:.4}/{:.4}; q=50 spread {:.4}",
            r10[0].ue_throughput_avg_mbps,
            r10[1].ue_throughput_avg_mbps,
            r10[2].ue_throughput_avg_mbps,
            r10[0].avg_spectral_efficiency_bits_per_cu,
            r10[1].avg_spectral_efficiency_bits_per_cu,
            r10[2].avg_spectral_efficiency_bits_per_cu,
            spread
        ),
    )
}

fn c5_bellman() -> Outcome {
    let mut t = QTable::new(3, 5, 0.2, 0.995).unwrap();
    let a = tabular_update(&mut t, 0, 1, 1.0, 2).unwrap();
    let mut t = QTable::new(3, 5, 0.7, 0.995).unwrap();
    let b = tabular_update(&mut t, 1, 3, 0.0, 0).unwrap();
    let mut t = QTable::new(3, 5, 0.2, 0.995).unwrap();
    t.set(0, 0, 1.0);
    t.set(1, 4, 1.0);
    let c = tabular_update(&mut t, 0, 0, 0.0, 1).unwrap();
    let expect_c = 0.8 * 1.0 + 0.2 * 0.995;
    (
        a == 0.2 && b == 0.0 && c == expect_c,
        format!("{a}, {b}, {c}"),
    )
}

fn exp(obs: Vec<f64>, action: usize, reward: f64, next_obs: Vec<f64>, terminal: bool) -> Experience {
    Experience {
        state: 0,
        obs,
        action,
        reward,
        next_state: 0,
        next_obs,
        terminal,
    }
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn gradient_check() -> (usize, f64) {
    let mut worst = 0.0f64;
    let instances = 10;
    for inst in 0..instances as u64 {
        let m = DqnModel::new(7, 5, DqnConfig::default(), 500 + inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(inst);
        let batch: Vec<Experience> = (0..8)
            .map(|_| {
                let obs: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
                let next: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
                exp(obs, rng.random_range(0..5), rng.random_range(-1.0..1.0), next, rng.random())
            })
            .collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let y = m.targets(&refs).unwrap();
        let (_, g) = m.loss_and_grad(&refs, &y).unwrap();
        let p0 = m.params();
        let h = 1e-6;
        let mut probe = m.clone();
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] += h;
            probe.set_params(&p).unwrap();
            let up = probe.loss_and_grad(&refs, &y).unwrap().0;
            p[k] -= 2.0 * h;
            probe.set_params(&p).unwrap();
            let down = probe.loss_and_grad(&refs, &y).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let denom = g[k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((g[k] - fd).abs() / denom);
        }
    }
    (instances, worst)
}

fn toy_step(s: usize, a: usize) -> (f64, usize, bool) {
    match (s, a) {
        (0, 0) => (0.05, 0, false),
        (0, _) => (0.0, 1, false),
        (1, 0) => (0.0, 0, false),
        (1, _) => (0.0, 2, false),
        (2, 0) => (0.5, 0, true),
        _ => (1.2, 0, true),
    }
}

fn toy_mdp_gap() -> (bool, f64) {
    let gamma = 0.9;
    let mut oracle = [[0.0f64; 2]; 3];
    for _ in 0..2000 {
        let mut next = oracle;
        for (s, row) in next.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (r, s2, term) = toy_step(s, a);
                *v = r + if term { 0.0 } else { gamma * oracle[s2][0].max(oracle[s2][1]) };
            }
        }
        oracle = next;
    }
    let cfg = DqnConfig {
        discount: gamma,
        learning_rate: 1e-3,
        ..DqnConfig::default()
    };
    let mut m = DqnModel::new(3, 2, cfg, 21).unwrap();
    let data: Vec<Experience> = (0..3)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| {
            let (r, s2, term) = toy_step(s, a);
            exp(one_hot(s, 3), a, r, one_hot(s2, 3), term)
        })
        .collect();
    let refs: Vec<&Experience> = data.iter().collect();
    for _ in 0..200 {
        let y = m.targets(&refs).unwrap();
        for _ in 0..100 {
            m.fit_targets(&refs, &y).unwrap();
        }
    }
    let mut same_policy = true;
    let mut gap = 0.0f64;
    for (s, row) in oracle.iter().enumerate() {
        let q = m.forward(&one_hot(s, 3)).unwrap();
        same_policy &= argmax(&q).unwrap() == argmax(row).unwrap();
        for a in 0..2 {
            gap = gap.max((q[a] - row[a]).abs());
        }
    }
    (same_policy, gap)
}

fn c6_dqn() -> Outcome {
    let (n, worst) = gradient_check();
    let (policy, gap) = toy_mdp_gap();
    let mut m = DqnModel::new(3, 5, DqnConfig::conservative(), 9).unwrap();
    let e = exp(one_hot(1, 3), 3, 2.0, one_hot(0, 3), true);
    for _ in 0..500 {
        m.fit_batch(&[&e]).unwrap();
    }
    let fit = (2.0 - m.forward(&e.obs).unwrap()[3]).powi(2);
    (
        n >= 10 && worst < 1e-4 && policy && gap < 0.05 && fit < 1e-4,
        format!(
            "{n} gradient checks, worst rel err {worst:.2e}; toy mdp greedy match {policy}, max |q - q*| {gap:.4}; overfit loss {fit:.2e}"
        ),
    )
}

fn rayleigh(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

fn c7_waterfilling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kkt = 0.0f64;
    let mut beaten = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let gains: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..10.0)).collect();
        let power = rng.random_range(0.1..10.0);
        let noise = rng.random_range(0.1..2.0);
        let p = waterfill(&gains, power, noise).unwrap();
        kkt = kkt.max((p.iter().sum::<f64>() - power).abs());
        let level = gains
            .iter()
            .zip(&p)
            .filter(|(_, &pk)| pk > 0.0)
            .map(|(g, pk)| pk + noise / g)
            .fold(f64::NAN, f64::max);
        for (g, &pk) in gains.iter().zip(&p) {
            kkt = kkt.max((-pk).max(0.0));
            if pk > 0.0 {
                kkt = kkt.max((pk + noise / g - level).abs());
            } else {
                kkt = kkt.max((level - noise / g).max(0.0));
            }
        }
        let equal = vec![power / n as f64; n];
        if sum_rate_bits(&gains, &p, noise) < sum_rate_bits(&gains, &equal, noise) - 1e-12 {
            beaten += 1;
        }
    }

    // Two-channel grid search oracle.
    let mut grid_gap = 0.0f64;
    for _ in 0..50 {
        let gains = [rng.random_range(0.05..5.0), rng.random_range(0.05..5.0)];
        let power = rng.random_range(0.1..5.0);
        let wf = sum_rate_bits(&gains, &waterfill(&gains, power, 1.0).unwrap(), 1.0);
        let best = (0..=20_000)
            .map(|i| {
                let x = power * i as f64 / 20_000.0;
                sum_rate_bits(&gains, &[x, power - x], 1.0)
            })
            .fold(f64::MIN, f64::max);
        grid_gap = grid_gap.max((wf - best).abs());
    }

    let mut se_over = 0;
    for _ in 0..200 {
        let h = rayleigh(&mut rng, 4, 4);
        if spectral_efficiency(&h, 1e4, 1.0, 64).unwrap() > 6.0 + 1e-12 {
            se_over += 1;
        }
    }
    (
        kkt < 1e-9 && beaten == 0 && grid_gap < 1e-3 && se_over == 0,
        format!(
            "kkt residual {kkt:.1e}, equal power wins {beaten}/1000, grid gap {grid_gap:.1e} bits, se above log2 M {se_over}"
        ),
    )
}

fn c8_events() -> Outcome {
    // Fault then clear restores every UE offset.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut reversal = 0.0f64;
    for _ in 0..2000 {
        let mut fs = FaultState::new(EnvKind::Indoor, 6);
        let before: Vec<f64> = (0..6).map(|u| fs.offset_db(u)).collect();
        let order: Vec<u8> = (1..=3).collect();
        for &f in &order {
            let c = Contribution::PerUe((0..6).map(|_| rng.random_range(-12.0..3.0)).collect());
            fs.apply(&event(EnvKind::Indoor, f).unwrap(), |_| Ok(c)).unwrap();
        }
        for &f in order.iter().rev() {
            fs.clear(f).unwrap();
        }
        for (u, b) in before.iter().enumerate() {
            reversal = reversal.max((fs.offset_db(u) - b).abs());
        }
    }

    let mut env = VolteEnv::with_defaults().unwrap();
    let mut accounting = 0.0f64;
    for seed in 0..300 {
        env.reset(seed).unwrap();
        let g0 = env.gamma_eff_db();
        let mut sum = 0.0;
        while !env.is_done() {
            let tr = env.step(rng.random_range(0..5)).unwrap();
            sum += tr.action_delta_db + tr.event_delta_db;
        }
        accounting = accounting.max((env.gamma_eff_db() - (g0 + sum)).abs());
    }

    let kind = EnvKind::Indoor;
    let all = (1..=3u8).fold(FaultRegister::for_kind(kind), |r, f| {
        apply_event(&r, &event(kind, f).unwrap()).unwrap()
    });
    let rates = EventRates::indoor();
    let n = 1_000_000;
    let mut counts = vec![0usize; catalog(kind).len()];
    for _ in 0..n {
        counts[usize::from(sample_event(kind, &rates, &all, &mut rng).event_id)] += 1;
    }
    let p = 1.0 / 11.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    let worst_z = counts[1..]
        .iter()
        .map(|&c| (c as f64 - n as f64 * p).abs() / sd)
        .fold(0.0, f64::max);

    let one = apply_event(&FaultRegister::for_kind(kind), &event(kind, 1).unwrap()).unwrap();
    let mut ineligible = 0;
    for _ in 0..200_000 {
        let e = sample_event(kind, &rates, &one, &mut rng);
        if let Some(f) = e.paired_fault_id {
            if !one.is_active(f) {
                ineligible += 1;
            }
        }
    }
    (
        reversal < 1e-9 && accounting < 1e-9 && worst_z <= 3.0 && ineligible == 0,
        format!(
            "reversal {reversal:.1e} dB, accounting {accounting:.1e} dB, worst rate z {worst_z:.2}, ineligible clears {ineligible}"
        ),
    )
}

fn small_volte() -> RunConfig {
    let mut cfg = RunConfig::defaults(Scenario::VoltePc);
    cfg.run.train_episodes = 50;
    cfg
}

fn binary_digest(out: &std::path::Path) -> String {
    let o = Command::new(env!("CARGO_BIN_EXE_celltune"))
        .args(["volte-pc", "train", "--episodes", "50", "--out"])
        .arg(out)
        .output()
        .expect("spawn celltune");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    text.split("(sha256 ")
        .nth(1)
        .and_then(|s| s.split(')').next())
        .expect("digest in output")
        .to_string()
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_volte();
    let a = run_train(&cfg, &dir.path().join("a"), false).unwrap().trace_digest;
    let b = run_train(&cfg, &dir.path().join("b"), false).unwrap().trace_digest;
    let c = binary_digest(&dir.path().join("c"));
    let d = binary_digest(&dir.path().join("d"));
    let mut other = cfg.clone();
    other.run.seed = 1;
    let e = run_train(&other, &dir.path().join("e"), false).unwrap().trace_digest;
    (
        a == b && c == d && a == c && a != e,
        format!(
            "in-process {} / {}, processes {} / {}, other seed differs {}",
            &a[..12],
            &b[..12],
            &c[..12],
            &d[..12],
            a != e
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("volte retainability", c1_retainability),
        ("volte target attainment", c2_attainment),
        ("volte mos", c3_mos),
        ("son throughput ordering", c4_son_ordering),
        ("bellman update", c5_bellman),
        ("dqn gradients and convergence", c6_dqn),
        ("waterfilling", c7_waterfilling),
        ("event accounting and sampling", c8_events),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!("criterion {}: {} {name}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
