//! Step-response metrics per reference segment.

use serde::Serialize;

use crate::error::{BrakeError, Result};
use crate::sim::Trace;

/// Settling band as a fraction of the step magnitude.
pub const SETTLING_BAND: f64 = 0.02;
/// Output-rate samples below this fraction of the step magnitude per second
/// are treated as flat when counting derivative sign changes.
pub const DY_NOISE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub segment: usize,
    pub p_ref: f64,
    /// Signed step from the previous level (or the initial pressure).
    pub step: f64,
    /// Percent of the step magnitude.
    pub overshoot: f64,
    /// Seconds from segment start until the output stays in the band;
    /// `None` when it is outside the band at the end of the segment.
    pub settling_time: Option<f64>,
    /// 10 % to 90 % rise time.
    pub rise_time: Option<f64>,
    /// Terminal `|y - p_ref|`, bar.
    pub steady_state_error: f64,
    /// Sign changes of `dy/dt` after the output first enters the band.
    pub zero_crossings_of_dy: usize,
}

impl StepMetrics {
    pub fn settled(&self) -> bool {
        self.settling_time.is_some()
    }

    /// No overshoot beyond 1 % and at most one derivative reversal.
    pub fn is_aperiodic(&self) -> bool {
        self.settled() && self.overshoot <= 1.0 && self.zero_crossings_of_dy <= 1
    }
}

pub fn step_metrics(trace: &Trace, segment: usize) -> Result<StepMetrics> {
    if segment >= trace.segment_count() {
        return Err(BrakeError::SegmentTooShort { segment, samples: 0 });
    }
    let range = trace.segment_range(segment);
    let rows = &trace.rows[range];
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.p_sup).collect();
    let p_ref = trace.schedule[segment].1;
    let prev = if segment == 0 { trace.rows[0].p_sup } else { trace.schedule[segment - 1].1 };
    let mut m = metrics_from_samples(&t, &y, p_ref, prev)
        .map_err(|_| BrakeError::SegmentTooShort { segment, samples: rows.len() })?;
    m.segment = segment;
    Ok(m)
}

/// Metrics of a response `y(t)` to a step from `prev` to `p_ref` starting at
/// `t[0]`. Requires at least 10 uniformly spaced samples.
pub fn metrics_from_samples(t: &[f64], y: &[f64], p_ref: f64, prev: f64) -> Result<StepMetrics> {
    let n = t.len().min(y.len());
    if n < 10 {
        return Err(BrakeError::SegmentTooShort { segment: 0, samples: n });
    }
    let step = p_ref - prev;
    let mag = step.abs();
    let scale = if mag > 0.0 { mag } else { p_ref.abs().max(f64::MIN_POSITIVE) };
    let band = SETTLING_BAND * scale;
    let dir = if step >= 0.0 { 1.0 } else { -1.0 };

    let overshoot = if mag > 0.0 {
        let peak = y[..n].iter().map(|v| (v - p_ref) * dir).fold(0.0, f64::max);
        peak / mag * 100.0
    } else {
        0.0
    };

    let outside = |v: &f64| (v - p_ref).abs() > band;
    let settling_time = match y[..n].iter().rposition(outside) {
        None => Some(0.0),
        Some(i) if i + 1 == n => None,
        Some(i) => Some(t[i + 1] - t[0]),
    };

    let rise_time = if mag > 0.0 {
        let cross = |frac: f64| y[..n].iter().position(|v| (v - prev) * dir >= frac * mag);
        match (cross(0.1), cross(0.9)) {
            (Some(a), Some(b)) => Some(t[b] - t[a]),
            _ => None,
        }
    } else {
        None
    };

    let zero_crossings_of_dy = match y[..n].iter().position(|v| !outside(v)) {
        None => 0,
        Some(entry) => {
            let floor = DY_NOISE_FLOOR * scale;
            let mut last_sign = 0.0;
            let mut count = 0;
            for k in entry..n - 1 {
                let dy = (y[k + 1] - y[k]) / (t[k + 1] - t[k]);
                if dy.abs() <= floor {
                    continue;
                }
                let sign = dy.signum();
                if last_sign != 0.0 && sign != last_sign {
                    count += 1;
                }
                last_sign = sign;
            }
            count
        }
    };

    Ok(StepMetrics {
        segment: 0,
        p_ref,
        step,
        overshoot,
        settling_time,
        rise_time,
        steady_state_error: (y[n - 1] - p_ref).abs(),
        zero_crossings_of_dy,
    })
}
