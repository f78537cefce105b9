use super::{ContinuationError, CyclePoint};
use crate::stepper::{FlowState, PoiseuilleStepper};

/// One row of a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientRecord {
    pub t: f64,
    pub grad_p: f64,
    pub vw: f64,
    /// Flow rate recomputed from the state.
    pub q: f64,
    /// `t1` at `y = 0.5`.
    pub t1_mid: f64,
}

fn record(stepper: &PoiseuilleStepper, u: &FlowState, grad_p: f64) -> TransientRecord {
    TransientRecord {
        t: u.t,
        grad_p,
        vw: u.slip_velocity(),
        q: stepper.flow_rate(u),
        t1_mid: stepper.t1_mid(u),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Oscillation {
    /// One maximum per detected cycle.
    pub peak_times: Vec<f64>,
    pub peaks: Vec<f64>,
    pub troughs: Vec<f64>,
    /// Sample index of the last maximum.
    pub last_peak_index: usize,
    /// Mean cycle length over the last cycles.
    pub period: f64,
    /// `(max - min) / mean` of the last peak-to-peak amplitudes.
    pub amplitude_spread: f64,
}

impl Oscillation {
    pub fn last_amplitude(&self) -> f64 {
        self.peaks.last().unwrap() - self.troughs.last().unwrap()
    }
}

/// Finds a sustained oscillation in the second half of `y(t)`: at least
/// `cycles` complete cycles whose peak-to-peak amplitudes agree to
/// `max_spread`. Cycles are delimited by up-crossings with hysteresis around
/// the mid-range (re-armed below `mid - r/4`, triggered above `mid + r/4`, `r`
/// the half range), so secondary maxima inside a cycle do not split it.
pub fn detect_oscillation(t: &[f64], y: &[f64], cycles: usize, max_spread: f64) -> Option<Oscillation> {
    let n = y.len();
    if n < 4 || cycles < 1 {
        return None;
    }
    let t_half = 0.5 * (t[0] + t[n - 1]);
    let start = t.iter().position(|&s| s >= t_half)?;
    let win = &y[start..];
    let (lo, hi) = win
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    if !(half > 1e-9 * (1.0 + mid.abs())) {
        return None;
    }
    let (arm, trigger) = (mid - 0.25 * half, mid + 0.25 * half);
    let mut ups = Vec::new();
    let mut armed = false;
    for i in start..n {
        if y[i] < arm {
            armed = true;
        } else if armed && y[i] >= trigger && i > 0 {
            ups.push(i);
            armed = false;
        }
    }
    if ups.len() < cycles + 1 {
        return None;
    }
    let mut peak_times = Vec::new();
    let mut peaks = Vec::new();
    let mut troughs = Vec::new();
    let mut last_peak_index = 0;
    for w in ups.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (imax, &vmax) = y[a..b]
            .iter()
            .enumerate()
            .max_by(|p, q| p.1.partial_cmp(q.1).unwrap())
            .unwrap();
        let vmin = y[a..b].iter().copied().fold(f64::INFINITY, f64::min);
        peak_times.push(t[a + imax]);
        peaks.push(vmax);
        troughs.push(vmin);
        last_peak_index = a + imax;
    }
    let k = peaks.len();
    let amps: Vec<f64> = (k - cycles..k).map(|i| peaks[i] - troughs[i]).collect();
    let amp_mean = amps.iter().sum::<f64>() / cycles as f64;
    let spread = (amps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - amps.iter().copied().fold(f64::INFINITY, f64::min))
        / amp_mean;
    if spread >= max_spread {
        return None;
    }
    // interpolated trigger crossings are steadier than argmax times
    let cross = |i: usize| t[i - 1] + (trigger - y[i - 1]) / (y[i] - y[i - 1]) * (t[i] - t[i - 1]);
    let m = ups.len();
    let period = (cross(ups[m - 1]) - cross(ups[m - 1 - cycles])) / cycles as f64;
    Some(Oscillation {
        peak_times,
        peaks,
        troughs,
        last_peak_index,
        period,
        amplitude_spread: spread,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientRun {
    /// Initial state first, then one row per step.
    pub records: Vec<TransientRecord>,
    pub oscillation: Option<Oscillation>,
    /// State at the last maximum of `-grad_p` and the period estimate.
    pub seed: Option<(FlowState, f64)>,
}

const CHECKPOINT_EVERY: usize = 1000;

/// Integrates `u0` at flow rate `q` up to `t_max`, recording every step, and
/// looks for a sustained oscillation of `-grad_p` (three cycles, 2% spread).
pub fn transient_capture(
    stepper: &PoiseuilleStepper,
    u0: &FlowState,
    q: f64,
    t_max: f64,
) -> Result<TransientRun, ContinuationError> {
    let mut start = u0.clone();
    start.t = 0.0;
    let mut records = vec![record(stepper, &start, stepper.pressure_gradient(&start))];
    let mut checkpoints = vec![(0usize, start.clone())];
    let mut steps = 0usize;
    stepper.evolve_recorded(&start, q, t_max, |u, g| {
        records.push(record(stepper, u, g));
        steps += 1;
        if steps % CHECKPOINT_EVERY == 0 {
            checkpoints.push((steps, u.clone()));
        }
    })?;

    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let y: Vec<f64> = records.iter().map(|r| -r.grad_p).collect();
    let oscillation = detect_oscillation(&t, &y, 3, 0.02);
    let seed = match &oscillation {
        Some(osc) => {
            let target = osc.last_peak_index;
            let (mut at, mut u) = checkpoints
                .iter()
                .rev()
                .find(|(s, _)| *s <= target)
                .cloned()
                .expect("checkpoint at step 0");
            while at < target {
                u = stepper.step(&u, q)?.0;
                at += 1;
            }
            Some((u, osc.period))
        }
        None => None,
    };
    Ok(TransientRun {
        records,
        oscillation,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BistabilityOutcome {
    SteadyState,
    StableCycle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BistabilityRun {
    pub outcome: BistabilityOutcome,
    pub records: Vec<TransientRecord>,
}

/// Starts on `unstable` (a cycle of the stepper) and switches the flow rate
/// to `q_new`. Integrates in chunks of one cycle period until the oscillation
/// of `-grad_p` has died out (amplitude below `1e-4`: steady state) or has
/// settled on repeating cycles (1% spread) that differ from the starting
/// orbit.
pub fn bistability_probe(
    stepper: &PoiseuilleStepper,
    unstable: &CyclePoint,
    q_new: f64,
    t_max: f64,
) -> Result<BistabilityRun, ContinuationError> {
    let (outcome, records) = bistability_trajectory(stepper, unstable, q_new, t_max)?;
    match outcome {
        Some(outcome) => Ok(BistabilityRun { outcome, records }),
        None => Err(ContinuationError::Undecided { t_max }),
    }
}

/// [`bistability_probe`] that keeps the trajectory when no outcome is reached
/// by `t_max` (`None`).
pub fn bistability_trajectory(
    stepper: &PoiseuilleStepper,
    unstable: &CyclePoint,
    q_new: f64,
    t_max: f64,
) -> Result<(Option<BistabilityOutcome>, Vec<TransientRecord>), ContinuationError> {
    let mut u = stepper.state_from_slice(&unstable.u0)?;
    let mut records = vec![record(stepper, &u, stepper.pressure_gradient(&u))];
    let chunk = unstable.period;
    let amp0 = unstable.monitor_max - unstable.monitor_min;
    let mut chunk_starts = vec![0usize];
    while u.t < t_max {
        u = stepper.evolve_recorded(&u, q_new, chunk, |s, g| records.push(record(stepper, s, g)))?;
        chunk_starts.push(records.len() - 1);
        let c = chunk_starts.len();
        if c < 4 {
            continue;
        }
        // amplitude over the last two chunks
        let recent = &records[chunk_starts[c - 3]..];
        let (lo, hi) = recent.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(-r.grad_p), hi.max(-r.grad_p))
        });
        if hi - lo < 1e-4 {
            return Ok((Some(BistabilityOutcome::SteadyState), records));
        }
        if c >= 9 {
            let window = &records[chunk_starts[c - 9]..];
            let t: Vec<f64> = window.iter().map(|r| r.t).collect();
            let y: Vec<f64> = window.iter().map(|r| -r.grad_p).collect();
            if let Some(osc) = detect_oscillation(&t, &y, 3, 0.01) {
                if (osc.last_amplitude() - amp0).abs() > 0.02 * amp0 {
                    return Ok((Some(BistabilityOutcome::StableCycle), records));
                }
            }
        }
    }
    Ok((None, records))
}
