//! Closed-loop grouser height control: a discrete PID acting on the
//! cam-wheel angular offset, plus the encoder arithmetic that recovers
//! grouser height from motor and cam counts.
//!
//! The integral term accumulates by the trapezoid rule and is clamped for
//! anti-windup; the derivative is a backward difference softened by a filter
//! time constant. The measured height comes from wrapping the cam-minus-
//! wheel angle into the deployment span and querying the polar table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{deploy_span_rad, CamError, PolarTable};
use crate::{real, Real};

/// Encoder counts per wheel revolution: 48 counts per motor turn through a
/// 9.68:1 gearbox and the 10:1 external drive.
pub const WHEEL_COUNTS_PER_REV: f64 = 48.0 * 9.68 * 10.0;
/// Resolution of the absolute cam encoder.
pub const CAM_ENCODER_COUNTS: u16 = 4096;
/// Offsets this far beyond the deployment span clamp instead of faulting.
pub const DEFAULT_DESYNC_TOLERANCE_RAD: f64 = 0.035;

/// Errors from height measurement and gain validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("cam count {0} exceeds the {CAM_ENCODER_COUNTS}-count encoder")]
    CamCountOutOfRange(u16),
    #[error("cam-wheel offset {offset_rad} rad is outside the deployment span; encoders desynced")]
    DesyncFault { offset_rad: f64 },
    #[error("gain {name} = {value} is invalid")]
    BadGain { name: &'static str, value: f64 },
    #[error(transparent)]
    Table(#[from] CamError),
}

/// PID gains and loop constants. Errors are in mm; output is a unitless
/// servo command in [-output_limit, output_limit].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains<F: Real = f64> {
    pub kp: F,
    pub ki: F,
    pub kd: F,
    /// Controller period, seconds.
    pub ts_s: F,
    /// Derivative filter time constant, seconds.
    pub derivative_filter_s: F,
    /// Saturation bound on the command.
    pub output_limit: F,
    /// Anti-windup clamp on the error integral, mm*s.
    pub integral_limit: F,
}

impl<F: Real> Default for PidGains<F> {
    fn default() -> Self {
        Self {
            kp: real(2.0),
            ki: real(1.0),
            kd: real(0.01),
            ts_s: real(0.01),
            derivative_filter_s: real(0.001),
            output_limit: real(1.0),
            integral_limit: real(0.15),
        }
    }
}

impl<F: Real> PidGains<F> {
    /// Rejects non-finite or non-positive loop constants and negative gains.
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |name: &'static str, value: F| ControlError::BadGain {
            name,
            value: value.to_f64().unwrap_or(f64::NAN),
        };
        for (name, value) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !value.is_finite() || value < F::zero() {
                return Err(bad(name, value));
            }
        }
        if !self.ts_s.is_finite() || self.ts_s <= F::zero() {
            return Err(bad("ts_s", self.ts_s));
        }
        if !self.derivative_filter_s.is_finite() || self.derivative_filter_s < F::zero() {
            return Err(bad("derivative_filter_s", self.derivative_filter_s));
        }
        if !self.output_limit.is_finite() || self.output_limit <= F::zero() {
            return Err(bad("output_limit", self.output_limit));
        }
        if !self.integral_limit.is_finite() || self.integral_limit < F::zero() {
            return Err(bad("integral_limit", self.integral_limit));
        }
        Ok(())
    }
}

/// Mutable controller state between steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState<F: Real = f64> {
    pub integral: F,
    prev_error: Option<F>,
}

impl<F: Real> Default for PidState<F> {
    fn default() -> Self {
        Self { integral: F::zero(), prev_error: None }
    }
}

impl<F: Real> PidState<F> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears accumulated state (use when retargeting after a fault).
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One controller update; returns the saturated servo command.
///
/// The first call after a reset applies proportional action only, so there
/// is no derivative kick and the integral matches a cumulative-trapezoid
/// reference over the error history.
pub fn pid_step<F: Real>(gains: &PidGains<F>, state: &mut PidState<F>, error: F) -> F {
    let half = real::<F>(0.5);
    let (integral, derivative) = match state.prev_error {
        None => (state.integral, F::zero()),
        Some(prev) => (
            state.integral + gains.ts_s * half * (error + prev),
            (error - prev) / (gains.ts_s + gains.derivative_filter_s),
        ),
    };
    let integral = integral.max(-gains.integral_limit).min(gains.integral_limit);
    state.integral = integral;
    state.prev_error = Some(error);
    let u = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    u.max(-gains.output_limit).min(gains.output_limit)
}

/// Wheel angle from cumulative motor encoder counts, radians.
pub fn wheel_angle_rad<F: Real>(motor_counts: i64) -> F {
    real::<F>(motor_counts as f64) * F::TAU() / real(WHEEL_COUNTS_PER_REV)
}

/// Cam angle from the absolute 12-bit encoder, radians in [0, 2pi).
pub fn cam_angle_rad<F: Real>(cam_counts: u16) -> Result<F, ControlError> {
    if cam_counts >= CAM_ENCODER_COUNTS {
        return Err(ControlError::CamCountOutOfRange(cam_counts));
    }
    Ok(real::<F>(cam_counts as f64) * F::TAU() / real(CAM_ENCODER_COUNTS as f64))
}

/// Wraps an angle into (-pi, pi].
fn wrap_pi<F: Real>(angle: F) -> F {
    let tau = F::TAU();
    let mut a = angle % tau;
    if a > F::PI() {
        a = a - tau;
    } else if a <= -F::PI() {
        a = a + tau;
    }
    a
}

/// Grouser height from raw encoder counts, mm.
///
/// The cam-minus-wheel offset must land inside the deployment span; within
/// `desync_tolerance_rad` beyond either edge it clamps to the edge, farther
/// out it is a desync fault.
pub fn measure_height<F: Real>(
    motor_counts: i64,
    cam_counts: u16,
    table: &PolarTable<F>,
    desync_tolerance_rad: F,
) -> Result<F, ControlError> {
    let offset = wrap_pi(cam_angle_rad::<F>(cam_counts)? - wheel_angle_rad::<F>(motor_counts));
    let span = deploy_span_rad::<F>();
    if offset > desync_tolerance_rad || offset < -span - desync_tolerance_rad {
        return Err(ControlError::DesyncFault {
            offset_rad: offset.to_f64().unwrap_or(f64::NAN),
        });
    }
    let clamped = offset.max(-span).min(F::zero());
    Ok(table.height_from_offset(clamped)?)
}
