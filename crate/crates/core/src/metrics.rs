//! Simulator-side measurements of how well the swarm shares a frame.

use crate::behaviors::CarrierKnowledge;
use crate::Vec2;

/// Mean distance of each robot's origin estimate from their centroid.
pub fn r_error(origins: &[Vec2]) -> f64 {
    if origins.is_empty() {
        return 0.0;
    }
    let n = origins.len() as f64;
    let centroid = origins.iter().sum::<Vec2>() / n;
    origins.iter().map(|o| (o - centroid).norm()).sum::<f64>() / n
}

/// First sample time with `r_error < 2σ_position`.
pub fn detect_convergence(series: &[(f64, f64)], sigma_position: f64) -> Option<f64> {
    series
        .iter()
        .find(|&&(_, e)| e < 2.0 * sigma_position)
        .map(|&(t, _)| t)
}

/// Mean error of every robot's carrier estimates against the carriers'
/// true positions expressed in that robot's frame. `None` until every robot
/// has an estimate of every carrier.
pub fn s_error(carriers_gt: &[Vec2], knowledge: &[&CarrierKnowledge], origins: &[Vec2]) -> Option<f64> {
    if carriers_gt.is_empty() || knowledge.iter().any(|k| !k.all_observed()) {
        return None;
    }
    let mut total = 0.0;
    for (k, origin) in knowledge.iter().zip(origins) {
        for (e, gt) in k.entries.iter().zip(carriers_gt) {
            total += (e.mu - (gt - origin)).norm();
        }
    }
    Some(total / (knowledge.len() * carriers_gt.len()) as f64)
}

/// Fraction of `(t_conv, t_met_half)` pairs where `beta · t_met_half` is at
/// least `t_conv`.
pub fn proxy_coverage(pairs: &[(f64, f64)], beta: f64) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let covered = pairs.iter().filter(|&&(t_conv, t_half)| beta * t_half >= t_conv).count();
    Some(covered as f64 / pairs.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// One 1 Hz sample of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub t: f64,
    pub r_error: Option<f64>,
    pub s_error: Option<f64>,
    /// Per-robot mean over the last second.
    pub flops_s: f64,
    pub bytes_s: f64,
    pub in_shape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub samples: Vec<Sample>,
    pub t_conv: Option<f64>,
    pub t_met_half: Vec<Option<f64>>,
}

impl RunMetrics {
    pub fn t_met_half_median(&self) -> Option<f64> {
        let v: Vec<f64> = self.t_met_half.iter().flatten().copied().collect();
        median(&v)
    }

    /// `(t_conv, t_met_half)` for every robot that met half the swarm, if
    /// the run converged.
    pub fn proxy_pairs(&self) -> Vec<(f64, f64)> {
        match self.t_conv {
            Some(tc) => self.t_met_half.iter().flatten().map(|&th| (tc, th)).collect(),
            None => Vec::new(),
        }
    }

    fn mean_from(&self, t0: f64, f: impl Fn(&Sample) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.samples.iter().filter(|s| s.t >= t0).filter_map(f).collect();
        mean(&v)
    }

    pub fn mean_s_error_from(&self, t0: f64) -> Option<f64> {
        self.mean_from(t0, |s| s.s_error)
    }

    pub fn mean_flops_from(&self, t0: f64) -> Option<f64> {
        self.mean_from(t0, |s| Some(s.flops_s))
    }

    pub fn mean_bytes_from(&self, t0: f64) -> Option<f64> {
        self.mean_from(t0, |s| Some(s.bytes_s))
    }
}
