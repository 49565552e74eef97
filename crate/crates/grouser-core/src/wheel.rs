//! Wheel and drivetrain geometry: fixed wheel constants, planetary and
//! external gear ratios, and the grouser angular-spacing bound.
//!
//! All angles are radians; degrees appear only at CLI/report boundaries.

use thiserror::Error;

use crate::{real, Real};

/// Millimetres per metre, for mixed-unit normalization.
const MM_PER_M: f64 = 1000.0;

/// Errors from geometry and drivetrain computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WheelError {
    #[error("tooth count must be >= 1, got {0}")]
    InvalidToothCount(i64),
    #[error("slip must lie in [0, 1), got {0}")]
    SlipOutOfRange(f64),
    #[error("normalized argument out of range: {0}")]
    ArgumentOutOfRange(&'static str),
    #[error("negative radicand: (1+h)^2 < (1-z)^2")]
    NegativeRadicand,
    #[error("radius must be positive, got {0} m")]
    NonPositiveRadius(f64),
    #[error("grouser height {0} mm outside [0, {1}] mm")]
    HeightOutOfRange(f64, f64),
}

/// Fixed wheel geometry. Defaults are the tested hardware's dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct WheelGeometry<F: Real = f64> {
    /// Rim radius in metres.
    pub radius_m: F,
    /// Rim width in millimetres.
    pub width_mm: F,
    /// Number of grousers around the rim.
    pub grouser_count: u32,
    /// Maximum deployable grouser height in millimetres.
    pub grouser_height_max_mm: F,
    /// Width of the main grouser body in millimetres.
    pub main_grouser_width_mm: F,
    /// Width of the grouser top face in millimetres.
    pub top_grouser_width_mm: F,
    /// Side chamfer angle in degrees.
    pub chamfer_deg: F,
}

impl<F: Real> Default for WheelGeometry<F> {
    fn default() -> Self {
        Self {
            radius_m: real(0.0625),
            width_mm: real(42.0),
            grouser_count: 16,
            grouser_height_max_mm: real(17.5),
            main_grouser_width_mm: real(25.0),
            top_grouser_width_mm: real(15.0),
            chamfer_deg: real(45.0),
        }
    }
}

impl<F: Real> WheelGeometry<F> {
    /// Angular spacing between adjacent grousers, `2*pi / grouser_count`.
    pub fn angular_pitch_rad(&self) -> F {
        F::TAU() / real(self.grouser_count as f64)
    }

    /// Checks a commanded grouser height against `[0, grouser_height_max_mm]`.
    pub fn validate_height(&self, h_mm: F) -> Result<(), WheelError> {
        if h_mm.is_finite() && h_mm >= F::zero() && h_mm <= self.grouser_height_max_mm {
            Ok(())
        } else {
            Err(WheelError::HeightOutOfRange(
                h_mm.to_f64().unwrap_or(f64::NAN),
                self.grouser_height_max_mm.to_f64().unwrap_or(f64::NAN),
            ))
        }
    }

    /// Maximum grouser height normalized by the wheel radius.
    pub fn normalized_max_height(&self) -> F {
        normalize(self.grouser_height_max_mm, self.radius_m).expect("default radius is positive")
    }
}

/// Planetary drive stage: servo on the sun gear, cam on the ring gear.
#[derive(Debug, Clone, PartialEq)]
pub struct GearTrain<F: Real = f64> {
    pub ring_teeth: u32,
    pub sun_teeth: u32,
    /// Servo stall torque at the sun gear, kg*cm.
    pub input_torque_kg_cm: F,
}

impl<F: Real> Default for GearTrain<F> {
    fn default() -> Self {
        Self { ring_teeth: 90, sun_teeth: 12, input_torque_kg_cm: real(45.0) }
    }
}

impl<F: Real> GearTrain<F> {
    /// Creates a gear train, requiring `ring_teeth > sun_teeth > 0`.
    pub fn new(ring_teeth: u32, sun_teeth: u32, input_torque_kg_cm: F) -> Result<Self, WheelError> {
        if sun_teeth == 0 {
            return Err(WheelError::InvalidToothCount(0));
        }
        if ring_teeth <= sun_teeth {
            return Err(WheelError::InvalidToothCount(ring_teeth as i64));
        }
        Ok(Self { ring_teeth, sun_teeth, input_torque_kg_cm })
    }

    /// Signed reduction ratio `-ring/sun`.
    pub fn ratio(&self) -> F {
        gear_ratio(self.ring_teeth as i64, self.sun_teeth as i64)
            .expect("constructor validated tooth counts")
    }

    /// Output torque after the reduction, kg*cm.
    pub fn output_torque_kg_cm(&self) -> F {
        output_torque(self.ratio(), self.input_torque_kg_cm)
    }
}

/// Default external spur reduction between drive motor and wheel (15T -> 150T).
pub const EXTERNAL_DRIVE_RATIO: f64 = 10.0;

/// Signed planetary gear ratio `-ring_teeth / sun_teeth`.
///
/// The sign records the direction reversal between sun input and ring output.
pub fn gear_ratio<F: Real>(ring_teeth: i64, sun_teeth: i64) -> Result<F, WheelError> {
    if ring_teeth < 1 {
        return Err(WheelError::InvalidToothCount(ring_teeth));
    }
    if sun_teeth < 1 {
        return Err(WheelError::InvalidToothCount(sun_teeth));
    }
    Ok(-real::<F>(ring_teeth as f64) / real(sun_teeth as f64))
}

/// Torque after a reduction: `|ratio| * input_torque`.
pub fn output_torque<F: Real>(ratio: F, input_torque: F) -> F {
    ratio.abs() * input_torque
}

/// Plain external spur ratio `driven_teeth / driver_teeth` (always positive).
pub fn external_drive_ratio<F: Real>(driver_teeth: i64, driven_teeth: i64) -> Result<F, WheelError> {
    if driver_teeth < 1 {
        return Err(WheelError::InvalidToothCount(driver_teeth));
    }
    if driven_teeth < 1 {
        return Err(WheelError::InvalidToothCount(driven_teeth));
    }
    Ok(real::<F>(driven_teeth as f64) / real(driver_teeth as f64))
}

/// Upper bound on grouser angular spacing (radians) for penetration to keep
/// at least one grouser engaged.
///
/// Computes `(1/(1-s)) * (sqrt((1+h)^2 - (1-z)^2) - sqrt(1 - (1-z)^2))` with
/// `h` the grouser height and `z` the sinkage, both normalized by wheel
/// radius. At `z = 0` the second radical vanishes and the bound reduces to
/// `(1/(1-s)) * sqrt(h^2 + 2h)`.
pub fn grouser_spacing_bound<F: Real>(slip: F, h_hat: F, z_hat: F) -> Result<F, WheelError> {
    let one = F::one();
    if !slip.is_finite() || slip < F::zero() || slip >= one {
        return Err(WheelError::SlipOutOfRange(slip.to_f64().unwrap_or(f64::NAN)));
    }
    if !h_hat.is_finite() || h_hat < F::zero() {
        return Err(WheelError::ArgumentOutOfRange("h_hat must be >= 0"));
    }
    if !z_hat.is_finite() || z_hat < F::zero() || z_hat > one {
        return Err(WheelError::ArgumentOutOfRange("z_hat must lie in [0, 1]"));
    }
    let reach = one + h_hat;
    let depth = one - z_hat;
    let first = reach * reach - depth * depth;
    if first < F::zero() {
        return Err(WheelError::NegativeRadicand);
    }
    let second = one - depth * depth;
    Ok((first.sqrt() - second.max(F::zero()).sqrt()) / (one - slip))
}

/// Normalizes a millimetre length by a metre radius: `value_mm / (radius_m * 1000)`.
pub fn normalize<F: Real>(value_mm: F, radius_m: F) -> Result<F, WheelError> {
    if !radius_m.is_finite() || radius_m <= F::zero() {
        return Err(WheelError::NonPositiveRadius(radius_m.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(value_mm / (radius_m * real(MM_PER_M)))
}
