//! Simulation, control, and analysis library for a wheel with cam-actuated
//! retractable grousers.
//!
//! The wheel carries sixteen radially sliding grousers driven by a single
//! internal cam: rotating the cam relative to the wheel moves every follower
//! along a spiral slot and deploys the grousers between 0 and 17.5 mm. This
//! crate models that mechanism end to end so the control and analysis stack
//! can run against a simulated testbed:
//!
//! - [`wheel`]: wheel and drivetrain geometry, grouser spacing bound.
//! - [`cam`]: cam slot spline, polar conversion, offset-to-height tables.
//! - [`controller`]: discrete PID height regulator and encoder-based
//!   height measurement.
//! - [`terrain`]: calibrated per-terrain slip and current response models.
//! - [`sim`]: fixed-step testbed plant with quantized sensors.
//! - [`estimators`]: slip, energy, travel-time, and aggregate statistics.
//! - [`psd`]: sieve-analysis particle size distributions and percentile
//!   diameters.
//! - [`scaling`]: grouser-height vs. particle-size scaling-law fits.
//! - [`telemetry`]: binary sensor frame format and trial log files.
//! - [`campaign`]: multi-terrain, multi-height batch trial runner.
//! - [`config`]: TOML files for terrain calibration, campaign grids, and
//!   controller gains.
//!
//! Numeric kernels are generic over the scalar type through [`Real`];
//! `f64` is the default everywhere and the campaign/simulation layers are
//! concrete `f64`.

pub mod cam;
pub mod campaign;
pub mod config;
pub mod controller;
pub mod estimators;
pub mod psd;
pub mod scaling;
pub mod sim;
pub mod telemetry;
pub mod terrain;
pub mod wheel;

use core::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type for the numeric kernels. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar type.
///
/// Lossless for `f64`; rounds to nearest for `f32`. Used for fixed model
/// constants, which are all exactly representable or insensitive to the
/// rounding.
pub(crate) fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant converts to scalar type")
}

/// Single-precision cam slot profile.
pub type CamProfile32 = cam::CamProfile<f32>;
/// Single-precision polar offset-to-height table.
pub type PolarTable32 = cam::PolarTable<f32>;
/// Single-precision wheel geometry.
pub type WheelGeometry32 = wheel::WheelGeometry<f32>;
/// Single-precision controller gains.
pub type PidGains32 = controller::PidGains<f32>;
/// Single-precision scaling-law fit.
pub type ScalingFit32 = scaling::ScalingFit<f32>;
