//! Evaluation: per-horizon longitudinal/lateral error metrics, the
//! constant-velocity and zero-motion baselines, and recursive multi-step
//! prediction.
//!
//! Output channel k predicts the scene at lead time (k+1)·dt. Metrics
//! are computed per channel by associating extracted positions against
//! the true positions of vehicles that were present in the last input
//! frame; unmatched targets count as missed, unmatched estimates as
//! spurious, and neither contaminates the error means.

use ndarray::{s, Array3, Axis};
use rayon::prelude::*;

use crate::assoc::associate;
use crate::bev::{build_sample, BevGrid, GridSpec};
use crate::error::{Error, Result};
use crate::extract::{extract_positions, ExtractConfig};
use crate::net::Network;
use crate::scenes::{Frame, SceneSequence};
use crate::train::valid_sample_positions;

/// Error statistics for one prediction horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonMetrics {
    pub horizon_s: f64,
    /// Mean absolute longitudinal error over matched pairs; `None` when
    /// nothing was matched (absent, not zero).
    pub eps_x: Option<f64>,
    /// Mean absolute lateral error over matched pairs.
    pub eps_y: Option<f64>,
    pub n_matched: usize,
    /// Targets no estimate was assigned to.
    pub n_missed: usize,
    /// Estimates no target was assigned to.
    pub n_spurious: usize,
}

/// Running error totals for one horizon; merging is associative, so
/// evaluation can reduce over time indices in parallel.
#[derive(Debug, Clone, Default)]
pub struct HorizonAccum {
    sum_abs_dx: f64,
    sum_abs_dy: f64,
    matched: usize,
    missed: usize,
    spurious: usize,
}

impl HorizonAccum {
    /// Associate one frame's estimates with its targets and absorb the
    /// outcome.
    pub fn observe(&mut self, estimates: &[(f64, f64)], targets: &[(f64, f64)]) {
        let assignment = associate(estimates, targets);
        for &(ei, ti, _) in &assignment.pairs {
            self.sum_abs_dx += (estimates[ei].0 - targets[ti].0).abs();
            self.sum_abs_dy += (estimates[ei].1 - targets[ti].1).abs();
            self.matched += 1;
        }
        self.missed += assignment.unmatched_targets.len();
        self.spurious += assignment.unmatched_estimates.len();
    }

    pub fn merge(&mut self, other: &HorizonAccum) {
        self.sum_abs_dx += other.sum_abs_dx;
        self.sum_abs_dy += other.sum_abs_dy;
        self.matched += other.matched;
        self.missed += other.missed;
        self.spurious += other.spurious;
    }

    pub fn metrics(&self, horizon_s: f64) -> HorizonMetrics {
        let (eps_x, eps_y) = if self.matched > 0 {
            (
                Some(self.sum_abs_dx / self.matched as f64),
                Some(self.sum_abs_dy / self.matched as f64),
            )
        } else {
            (None, None)
        };
        HorizonMetrics {
            horizon_s,
            eps_x,
            eps_y,
            n_matched: self.matched,
            n_missed: self.missed,
            n_spurious: self.spurious,
        }
    }
}

/// Single-shot metrics: one (estimates, targets) pair per output
/// channel; channel k is scored at horizon (k+1)·dt.
#[allow(clippy::type_complexity)] // (estimates, targets) per horizon channel
pub fn horizon_errors(
    channels: &[(Vec<(f64, f64)>, Vec<(f64, f64)>)],
    dt_s: f64,
) -> Vec<HorizonMetrics> {
    channels
        .iter()
        .enumerate()
        .map(|(k, (est, tgt))| {
            let mut acc = HorizonAccum::default();
            acc.observe(est, tgt);
            acc.metrics((k + 1) as f64 * dt_s)
        })
        .collect()
}

/// Evaluation results over a scene sequence.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub horizons: Vec<HorizonMetrics>,
    /// Number of time positions evaluated.
    pub n_positions: usize,
}

impl EvalReport {
    /// CSV rendering: `horizon_s,eps_x,eps_y,matched,missed,spurious`,
    /// with absent errors as empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon_s,eps_x,eps_y,matched,missed,spurious\n");
        for m in &self.horizons {
            let fmt = |v: Option<f64>| v.map(|e| format!("{e:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.3},{},{},{},{},{}\n",
                m.horizon_s,
                fmt(m.eps_x),
                fmt(m.eps_y),
                m.n_matched,
                m.n_missed,
                m.n_spurious
            ));
        }
        out
    }
}

/// True positions for channel k of the sample at position `t`: vehicles
/// of frame t+1+k that were present in frame t (newly appearing vehicles
/// are not prediction targets).
fn channel_targets(seq: &SceneSequence, t: usize, k: usize) -> Vec<(f64, f64)> {
    let present: std::collections::HashSet<u64> =
        seq.frames[t].vehicles.iter().map(|v| v.id).collect();
    seq.frames[t + 1 + k]
        .vehicles
        .iter()
        .filter(|v| present.contains(&v.id))
        .map(|v| (v.cx, v.cy))
        .collect()
}

/// Core evaluation loop: for every position with full history and
/// future, obtain per-channel position estimates from `predict` and
/// score them against the true targets. Parallel over positions.
pub fn evaluate_with<F>(seq: &SceneSequence, d: usize, predict: F) -> Result<EvalReport>
where
    F: Fn(usize) -> Result<Vec<Vec<(f64, f64)>>> + Sync,
{
    let positions = valid_sample_positions(seq, d);
    if positions.is_empty() {
        return Err(Error::Range(format!(
            "sequence of {} frames is too short to evaluate with d={d} (needs at least {})",
            seq.frames.len(),
            2 * d
        )));
    }
    let dt = 1.0 / seq.rate_hz;
    let accums = positions
        .par_iter()
        .map(|&t| -> Result<Vec<HorizonAccum>> {
            let estimates = predict(t)?;
            if estimates.len() != d {
                return Err(Error::Shape(format!(
                    "predictor returned {} channels, expected {d}",
                    estimates.len()
                )));
            }
            let mut accs = vec![HorizonAccum::default(); d];
            for k in 0..d {
                accs[k].observe(&estimates[k], &channel_targets(seq, t, k));
            }
            Ok(accs)
        })
        .try_reduce(
            || vec![HorizonAccum::default(); d],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b.iter()) {
                    x.merge(y);
                }
                Ok(a)
            },
        )?;
    Ok(EvalReport {
        horizons: accums
            .iter()
            .enumerate()
            .map(|(k, acc)| acc.metrics((k + 1) as f64 * dt))
            .collect(),
        n_positions: positions.len(),
    })
}

/// Evaluate a trained network: render input stacks, run the forward
/// pass, extract per-channel positions, and score them.
pub fn evaluate_net(
    net: &Network,
    seq: &SceneSequence,
    gspec: &GridSpec,
    d: usize,
    ecfg: &ExtractConfig,
) -> Result<EvalReport> {
    evaluate_with(seq, d, |t| {
        let sample = build_sample(seq, t, d, gspec)?;
        let out = net.forward(&sample.input)?;
        (0..d)
            .map(|k| {
                let grid = BevGrid::from_values(*gspec, out.index_axis(Axis(0), k).to_owned())?;
                Ok(extract_positions(&grid, ecfg)
                    .iter()
                    .map(|p| (p.x, p.y))
                    .collect())
            })
            .collect()
    })
}

/// Zero-motion baseline: every vehicle present at t is predicted to
/// stay where it is, at every horizon.
pub fn evaluate_zero_motion(seq: &SceneSequence, d: usize) -> Result<EvalReport> {
    evaluate_with(seq, d, |t| {
        let here: Vec<(f64, f64)> = seq.frames[t].vehicles.iter().map(|v| (v.cx, v.cy)).collect();
        Ok(vec![here; d])
    })
}

/// Constant-velocity extrapolation from the last two history frames.
/// Velocity is estimated from positions, not taken from the stored
/// state; a vehicle seen in only one frame is carried at rest.
pub fn constant_velocity_oracle(history: &[Frame], dt_s: f64, horizons: &[f64]) -> Vec<Frame> {
    let last = match history.last() {
        Some(f) => f,
        None => return Vec::new(),
    };
    let prev = history.len().checked_sub(2).map(|i| &history[i]);
    horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| Frame {
            t_index: last.t_index + k + 1,
            vehicles: last
                .vehicles
                .iter()
                .map(|v| {
                    let (vx, vy) = prev
                        .and_then(|p| p.vehicle(v.id))
                        .map(|pv| ((v.cx - pv.cx) / dt_s, (v.cy - pv.cy) / dt_s))
                        .unwrap_or((0.0, 0.0));
                    crate::scenes::VehicleState {
                        cx: v.cx + vx * h,
                        cy: v.cy + vy * h,
                        vx,
                        vy,
                        ..*v
                    }
                })
                .collect(),
        })
        .collect()
}

/// Constant-velocity baseline over a whole sequence.
pub fn evaluate_constant_velocity(seq: &SceneSequence, d: usize) -> Result<EvalReport> {
    let dt = 1.0 / seq.rate_hz;
    let horizons: Vec<f64> = (1..=d).map(|k| k as f64 * dt).collect();
    evaluate_with(seq, d, |t| {
        let history = &seq.frames[t.saturating_sub(1)..=t];
        let predicted = constant_velocity_oracle(history, dt, &horizons);
        Ok(predicted
            .iter()
            .map(|f| f.vehicles.iter().map(|v| (v.cx, v.cy)).collect())
            .collect())
    })
}

/// Run the network `steps` times, each time dropping the oldest input
/// channel and appending the first output channel (the next-frame
/// prediction becomes the newest observation). Returns every
/// intermediate output stack.
pub fn recursive_predict(
    net: &Network,
    input: &Array3<f32>,
    steps: usize,
) -> Result<Vec<Array3<f32>>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let d = input.dim().0;
    let mut current = input.clone();
    let mut outputs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let out = net.forward(&current)?;
        let mut next = Array3::zeros(current.dim());
        next.slice_mut(s![..d - 1, .., ..])
            .assign(&current.slice(s![1.., .., ..]));
        next.slice_mut(s![d - 1, .., ..])
            .assign(&out.index_axis(Axis(0), 0));
        current = next;
        outputs.push(out);
    }
    Ok(outputs)
}
