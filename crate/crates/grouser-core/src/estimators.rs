//! Trial-level estimators: slip ratio, drawbar energy from current samples,
//! stroke travel time, finite-difference velocity, and campaign aggregation.
//!
//! Energy integrates bus voltage times current with composite Simpson's
//! rule; an odd sample count (even interval count) yields the pure rule,
//! otherwise the final interval falls back to the trapezoid and the result
//! is flagged. Travel time interpolates the stroke crossing between frames,
//! so it does not quantize to the frame period.

use thiserror::Error;

/// Nominal bus voltage for drawbar energy, volts.
pub const BUS_VOLTAGE_V: f64 = 12.0;

/// Errors from estimator inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("wheel radius {0} m must be positive")]
    NonPositiveRadius(f64),
    #[error("angular velocity {0} rad/s must be positive")]
    NonPositiveAngularVelocity(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("time step {0} s must be positive")]
    NonPositiveTimestep(f64),
    #[error("timestamps must be strictly increasing")]
    NonMonotonicTime,
    #[error("series lengths differ: {times} timestamps vs {values} values")]
    LengthMismatch { times: usize, values: usize },
    #[error("stroke length {0} m must be positive")]
    NonPositiveStroke(f64),
    #[error("no complete trials to aggregate")]
    NoCompleteTrials,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Slip ratio with a flag for wheel overrun (ground faster than rim).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipEstimate {
    /// 1 - v / (r * omega); 0 is pure rolling, 1 is full slip.
    pub slip: f64,
    /// True when slip is negative (carriage outran the rim).
    pub overrun: bool,
}

/// Slip ratio from carriage speed, wheel speed, and wheel radius.
pub fn slip_ratio(
    carriage_speed_m_s: f64,
    wheel_speed_rad_s: f64,
    wheel_radius_m: f64,
) -> Result<SlipEstimate, EstimatorError> {
    if !wheel_radius_m.is_finite() || wheel_radius_m <= 0.0 {
        return Err(EstimatorError::NonPositiveRadius(wheel_radius_m));
    }
    if !wheel_speed_rad_s.is_finite() || wheel_speed_rad_s <= 0.0 {
        return Err(EstimatorError::NonPositiveAngularVelocity(wheel_speed_rad_s));
    }
    if !carriage_speed_m_s.is_finite() {
        return Err(EstimatorError::NonFinite("carriage speed"));
    }
    let slip = 1.0 - carriage_speed_m_s / (wheel_radius_m * wheel_speed_rad_s);
    Ok(SlipEstimate { slip, overrun: slip < 0.0 })
}

/// Integrated electrical energy with the rule actually applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEstimate {
    pub joules: f64,
    /// True when an odd interval count forced a trapezoid tail.
    pub mixed_rule_tail: bool,
}

/// Composite Simpson integration of bus power over uniform current samples.
pub fn drawbar_energy(
    currents_a: &[f64],
    dt_s: f64,
    bus_voltage_v: f64,
) -> Result<EnergyEstimate, EstimatorError> {
    if currents_a.len() < 3 {
        return Err(EstimatorError::TooFewSamples { needed: 3, got: currents_a.len() });
    }
    if !dt_s.is_finite() || dt_s <= 0.0 {
        return Err(EstimatorError::NonPositiveTimestep(dt_s));
    }
    if !bus_voltage_v.is_finite() {
        return Err(EstimatorError::NonFinite("bus voltage"));
    }
    if currents_a.iter().any(|c| !c.is_finite()) {
        return Err(EstimatorError::NonFinite("current sample"));
    }
    let n = currents_a.len();
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 2 };
    let mut sum = 0.0;
    let mut j = 2;
    while j <= simpson_end {
        sum += currents_a[j - 2] + 4.0 * currents_a[j - 1] + currents_a[j];
        j += 2;
    }
    let mut integral = dt_s / 3.0 * sum;
    let mixed = simpson_end != n - 1;
    if mixed {
        integral += dt_s * 0.5 * (currents_a[n - 2] + currents_a[n - 1]);
    }
    Ok(EnergyEstimate { joules: bus_voltage_v * integral, mixed_rule_tail: mixed })
}

/// Streaming wrapper over [`drawbar_energy`] for in-loop accumulation.
#[derive(Debug, Clone)]
pub struct EnergyAccumulator {
    samples: Vec<f64>,
    dt_s: f64,
    bus_voltage_v: f64,
}

impl EnergyAccumulator {
    pub fn new(dt_s: f64, bus_voltage_v: f64) -> Self {
        Self { samples: Vec::new(), dt_s, bus_voltage_v }
    }

    pub fn push(&mut self, current_a: f64) {
        self.samples.push(current_a);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Integrates everything pushed so far. Pure Simpson when the sample
    /// count is odd at finalization.
    pub fn finalize(&self) -> Result<EnergyEstimate, EstimatorError> {
        drawbar_energy(&self.samples, self.dt_s, self.bus_voltage_v)
    }
}

/// Time when position first crosses the stroke length, interpolated between
/// samples; `None` when the stroke was never completed.
pub fn travel_time(
    times_s: &[f64],
    positions_m: &[f64],
    stroke_m: f64,
) -> Result<Option<f64>, EstimatorError> {
    if times_s.len() != positions_m.len() {
        return Err(EstimatorError::LengthMismatch {
            times: times_s.len(),
            values: positions_m.len(),
        });
    }
    if times_s.is_empty() {
        return Err(EstimatorError::TooFewSamples { needed: 1, got: 0 });
    }
    if !stroke_m.is_finite() || stroke_m <= 0.0 {
        return Err(EstimatorError::NonPositiveStroke(stroke_m));
    }
    if times_s.iter().any(|t| !t.is_finite()) || positions_m.iter().any(|p| !p.is_finite()) {
        return Err(EstimatorError::NonFinite("trajectory sample"));
    }
    for pair in times_s.windows(2) {
        if pair[1] <= pair[0] {
            return Err(EstimatorError::NonMonotonicTime);
        }
    }
    if positions_m[0] >= stroke_m {
        return Ok(Some(times_s[0]));
    }
    for i in 1..times_s.len() {
        if positions_m[i] >= stroke_m {
            let t = (stroke_m - positions_m[i - 1]) / (positions_m[i] - positions_m[i - 1]);
            return Ok(Some(times_s[i - 1] + (times_s[i] - times_s[i - 1]) * t));
        }
    }
    Ok(None)
}

/// Velocity by centered differences (one-sided at the ends).
pub fn velocity_series(
    times_s: &[f64],
    positions_m: &[f64],
) -> Result<Vec<f64>, EstimatorError> {
    if times_s.len() != positions_m.len() {
        return Err(EstimatorError::LengthMismatch {
            times: times_s.len(),
            values: positions_m.len(),
        });
    }
    if times_s.len() < 2 {
        return Err(EstimatorError::TooFewSamples { needed: 2, got: times_s.len() });
    }
    if times_s.iter().any(|t| !t.is_finite()) || positions_m.iter().any(|p| !p.is_finite()) {
        return Err(EstimatorError::NonFinite("trajectory sample"));
    }
    for pair in times_s.windows(2) {
        if pair[1] <= pair[0] {
            return Err(EstimatorError::NonMonotonicTime);
        }
    }
    let n = times_s.len();
    let mut v = Vec::with_capacity(n);
    v.push((positions_m[1] - positions_m[0]) / (times_s[1] - times_s[0]));
    for i in 1..n - 1 {
        v.push((positions_m[i + 1] - positions_m[i - 1]) / (times_s[i + 1] - times_s[i - 1]));
    }
    v.push((positions_m[n - 1] - positions_m[n - 2]) / (times_s[n - 1] - times_s[n - 2]));
    Ok(v)
}

/// Mean and spread over the completed subset of a trial batch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Unbiased sample standard deviation; `None` below 2 complete trials.
    pub std_dev: Option<f64>,
    pub n_complete: usize,
    pub n_total: usize,
}

impl Aggregate {
    pub fn completion_rate(&self) -> f64 {
        self.n_complete as f64 / self.n_total as f64
    }
}

/// Aggregates per-trial values where `None` marks an incomplete trial.
pub fn aggregate(values: &[Option<f64>]) -> Result<Aggregate, EstimatorError> {
    if values.is_empty() {
        return Err(EstimatorError::TooFewSamples { needed: 1, got: 0 });
    }
    let complete: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if complete.iter().any(|v| !v.is_finite()) {
        return Err(EstimatorError::NonFinite("trial value"));
    }
    if complete.is_empty() {
        return Err(EstimatorError::NoCompleteTrials);
    }
    let n = complete.len();
    let mean = complete.iter().sum::<f64>() / n as f64;
    let std_dev = if n >= 2 {
        let ss = complete.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        Some((ss / (n - 1) as f64).sqrt())
    } else {
        None
    };
    Ok(Aggregate { mean, std_dev, n_complete: n, n_total: values.len() })
}
