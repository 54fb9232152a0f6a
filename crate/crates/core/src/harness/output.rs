//! CSV and wire-dump encoders. Floats use Rust's shortest round-trip
//! formatting, so identical runs give identical bytes; absent values are
//! empty fields.

use std::fmt::Write;

use crate::metrics::proxy_coverage;
use crate::sim::{RunOutput, SimConfig, WireRecord};

use super::Job;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// The world could not be spawned, e.g. too many robots for the arena.
    Skipped,
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub cell: usize,
    pub seed: u64,
    pub n_robots: usize,
    pub arena_side: f64,
    pub n_carriers: usize,
    pub behaviour: &'static str,
    pub t_message: f64,
    pub v_c_agg: f64,
    pub status: RunStatus,
    pub t_conv: Option<f64>,
    pub t_met_half_median: Option<f64>,
    /// Share of robots whose `beta · t_met_half` covers `t_conv`.
    pub coverage: Option<f64>,
    /// Means over the second half of the run.
    pub s_error_ss: Option<f64>,
    pub flops_s: Option<f64>,
    pub bytes_s: Option<f64>,
    pub end_time: f64,
    pub note: String,
}

impl RunRow {
    fn base(job: &Job, cfg: &SimConfig, status: RunStatus) -> Self {
        Self {
            cell: job.cell,
            seed: job.seed,
            n_robots: cfg.world.n_robots,
            arena_side: cfg.world.arena_side,
            n_carriers: cfg.world.n_carriers,
            behaviour: cfg.behaviour.name(),
            t_message: cfg.world.t_message,
            v_c_agg: cfg.world.v_c_agg,
            status,
            t_conv: None,
            t_met_half_median: None,
            coverage: None,
            s_error_ss: None,
            flops_s: None,
            bytes_s: None,
            end_time: 0.0,
            note: String::new(),
        }
    }

    pub fn skipped(job: &Job, cfg: &SimConfig, reason: String) -> Self {
        Self {
            note: reason.replace([',', '\n'], ";"),
            ..Self::base(job, cfg, RunStatus::Skipped)
        }
    }

    pub fn completed(job: &Job, cfg: &SimConfig, out: &RunOutput) -> Self {
        let m = &out.metrics;
        let t0 = out.end_time / 2.0;
        Self {
            t_conv: m.t_conv,
            t_met_half_median: m.t_met_half_median(),
            coverage: proxy_coverage(&m.proxy_pairs(), cfg.world.beta),
            s_error_ss: m.mean_s_error_from(t0),
            flops_s: m.mean_flops_from(t0),
            bytes_s: m.mean_bytes_from(t0),
            end_time: out.end_time,
            ..Self::base(job, cfg, RunStatus::Completed)
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn runs_header() -> String {
    "cell,seed,n_robots,arena_side,n_carriers,behaviour,t_message,v_c_agg,status,t_conv,t_met_half_median,coverage,s_error_ss,flops_s,bytes_s,end_time,note\n".to_string()
}

pub fn runs_row(r: &RunRow) -> String {
    let status = match r.status {
        RunStatus::Completed => "completed",
        RunStatus::Skipped => "skipped",
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        r.cell,
        r.seed,
        r.n_robots,
        r.arena_side,
        r.n_carriers,
        r.behaviour,
        r.t_message,
        r.v_c_agg,
        status,
        opt(r.t_conv),
        opt(r.t_met_half_median),
        opt(r.coverage),
        opt(r.s_error_ss),
        opt(r.flops_s),
        opt(r.bytes_s),
        r.end_time,
        r.note
    )
}

pub fn series_csv(out: &RunOutput) -> String {
    let mut s = String::from("t,r_error,s_error,flops_s,bytes_s,in_shape\n");
    for x in &out.metrics.samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            x.t,
            opt(x.r_error),
            opt(x.s_error),
            x.flops_s,
            x.bytes_s,
            opt(x.in_shape)
        );
    }
    s
}

pub fn snapshots_csv(out: &RunOutput) -> String {
    let mut s = String::from("t,kind,id,x,y,est_x,est_y\n");
    for r in &out.snapshots {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.t,
            r.kind.name(),
            r.id,
            r.pos.x,
            r.pos.y,
            opt(r.est.map(|e| e.x)),
            opt(r.est.map(|e| e.y))
        );
    }
    s
}

/// Each message as a little-endian `u32` length followed by its bytes.
pub fn wire_dump(records: &[WireRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.iter().map(|r| 4 + r.bytes.len()).sum());
    for r in records {
        out.extend_from_slice(&(r.bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&r.bytes);
    }
    out
}
