//! CSV artifacts and trace digests.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::{Algorithm, Scenario};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One environment step as written to `trace.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub phase: Phase,
    pub episode: u64,
    pub tti: u32,
    pub state: usize,
    pub action: usize,
    pub event_id: u8,
    /// Change in effective SINR caused by the event, dB.
    pub event_delta_db: f64,
    /// γ̄ in dB (power control) or active alarm count (fault management).
    pub observable: f64,
    pub reward: f64,
    pub epsilon: f64,
}

pub fn observable_column(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::VoltePc => "gamma_eff_db",
        Scenario::SonFm => "popcount",
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Trace CSV bytes. Floats use the shortest round-trip representation so
/// the bytes, and hence the digest, are a function of the values alone.
pub fn trace_csv(run_id: &str, scenario: Scenario, rows: &[TraceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let here = Path::new("<trace>");
    w.write_record([
        "run_id",
        "phase",
        "episode",
        "tti",
        "state",
        "action",
        "event_id",
        "event_delta_db",
        observable_column(scenario),
        "reward",
        "epsilon",
    ])
    .map_err(csv_err(here))?;
    for r in rows {
        w.write_record([
            run_id.to_string(),
            r.phase.name().to_string(),
            r.episode.to_string(),
            r.tti.to_string(),
            r.state.to_string(),
            r.action.to_string(),
            r.event_id.to_string(),
            r.event_delta_db.to_string(),
            r.observable.to_string(),
            r.reward.to_string(),
            r.epsilon.to_string(),
        ])
        .map_err(csv_err(here))?;
    }
    w.into_inner()
        .map_err(|e| Error::io("flushing trace buffer", e.into_error()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn trace_digest(run_id: &str, scenario: Scenario, rows: &[TraceRow]) -> Result<String> {
    Ok(sha256_hex(&trace_csv(run_id, scenario, rows)?))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Metric names and values in report order.
pub fn report_fields(r: &MetricsReport) -> [(&'static str, f64); 7] {
    [
        ("retainability", r.retainability),
        ("mos", r.mos),
        ("avg_cell_throughput_mbps", r.avg_cell_throughput_mbps),
        ("ue_throughput_peak_mbps", r.ue_throughput_peak_mbps),
        ("ue_throughput_avg_mbps", r.ue_throughput_avg_mbps),
        ("ue_throughput_edge_mbps", r.ue_throughput_edge_mbps),
        ("avg_spectral_efficiency_bits_per_cu", r.avg_spectral_efficiency_bits_per_cu),
    ]
}

/// One evaluated configuration in `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub q: usize,
    pub report: MetricsReport,
    pub target_attainment: f64,
    pub commands: u64,
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["run_id", "scenario", "algorithm", "q"];
    header.extend(report_fields(&rows[0].report).map(|(k, _)| k));
    header.extend(["target_attainment", "commands"]);
    w.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut rec = vec![
            r.run_id.clone(),
            r.scenario.name().to_string(),
            r.algorithm.name().to_string(),
            r.q.to_string(),
        ];
        rec.extend(report_fields(&r.report).map(|(_, v)| v.to_string()));
        rec.push(r.target_attainment.to_string());
        rec.push(r.commands.to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// `(algorithm, tti, mean observable)` series.
pub fn write_plot_data(path: &Path, scenario: Scenario, series: &[(Algorithm, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["algorithm", "tti", observable_column(scenario)])
        .map_err(csv_err(path))?;
    for (alg, ys) in series {
        for (t, y) in ys.iter().enumerate() {
            w.write_record([alg.name().to_string(), t.to_string(), y.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// One row per (algorithm, swept value, metric).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub value: f64,
    pub metric: &'static str,
    pub result: f64,
}

pub fn write_sweep(path: &Path, swept: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["algorithm", swept, "metric", "value"]).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.algorithm.name().to_string(),
            r.value.to_string(),
            r.metric.to_string(),
            r.result.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ep: u64, obs: f64) -> TraceRow {
        TraceRow {
            phase: Phase::Eval,
            episode: ep,
            tti: 1,
            state: 1,
            action: 4,
            event_id: 0,
            event_delta_db: 0.0,
            observable: obs,
            reward: 1.0,
            epsilon: 0.01,
        }
    }

    #[test]
    fn trace_layout() {
        let bytes = trace_csv("r1", Scenario::VoltePc, &[row(0, 4.25)]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text,
            "run_id,phase,episode,tti,state,action,event_id,event_delta_db,gamma_eff_db,reward,epsilon\n\
             r1,eval,0,1,1,4,0,0,4.25,1,0.01\n"
        );
    }

    #[test]
    fn digest_tracks_content() {
        let a = trace_digest("r", Scenario::SonFm, &[row(0, 1.0)]).unwrap();
        assert_eq!(a, trace_digest("r", Scenario::SonFm, &[row(0, 1.0)]).unwrap());
        assert_ne!(a, trace_digest("r", Scenario::SonFm, &[row(1, 1.0)]).unwrap());
        assert_eq!(a.len(), 64);
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sweep_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = vec![SweepRow {
            algorithm: Algorithm::Fifo,
            value: 10.0,
            metric: "mos",
            result: 3.5,
        }];
        write_sweep(&p, "q", &rows).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "algorithm,q,metric,value\nfifo,10,mos,3.5\n");
    }
}
