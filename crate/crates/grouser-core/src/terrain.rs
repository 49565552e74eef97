//! Calibrated terrain response models: mean slip versus grouser height,
//! trial-to-trial slip scatter, immobilization thresholds, and motor
//! current draw.
//!
//! Each model interpolates piecewise-linearly between slip anchors. Anchor
//! provenance records whether a value is a published measurement, a value
//! derived from published ratios, or an interpolation chosen to connect
//! them. Sampled slip adds Gaussian scatter, clamps to [0, cap], and pins
//! to 1 when the commanded height immobilizes the wheel.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::HEIGHT_MAX_MM;

/// Ceiling on sampled slip for non-immobilized trials; keeps travel times
/// finite while staying above every calibrated mean.
pub const SLIP_CAP: f64 = 0.995;

/// Errors from terrain lookup and model validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerrainError {
    #[error("unknown terrain {0:?}")]
    UnknownTerrain(String),
    #[error("height {height_mm} mm outside [0, {max_mm}] mm")]
    HeightOutOfRange { height_mm: f64, max_mm: f64 },
    #[error("malformed terrain model: {0}")]
    MalformedModel(&'static str),
}

/// Where an anchor value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Reported directly in the reference measurements.
    #[serde(rename = "paper")]
    Published,
    /// Computed from published ratios or deltas.
    #[serde(rename = "derived")]
    DerivedFromPublished,
    /// Chosen to connect published anchors smoothly.
    #[serde(rename = "free")]
    Interpolated,
}

/// Mean slip at one grouser height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipAnchor {
    pub height_mm: f64,
    pub slip_mean: f64,
    pub provenance: Provenance,
}

/// Sand bed preparation, where applicable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackingState {
    Loose,
    Dense,
}

/// How a terrain immobilizes the wheel at insufficient grouser height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImmobilizationMode {
    /// Wheel spins in place at full slip.
    FullSlip,
    /// Wheel jams against the surface and stops turning.
    Stall,
}

/// Immobilization threshold and behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Immobilization {
    /// Commanded heights strictly below this immobilize the wheel, mm.
    pub below_mm: f64,
    pub mode: ImmobilizationMode,
}

/// Motor current draw as a function of slip and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentModel {
    pub baseline_a: f64,
    pub slip_gain_a: f64,
    /// Repetition rate of load spikes from discrete obstacles, Hz (0 = none).
    pub spike_rate_hz: f64,
    pub spike_amp_a: f64,
}

impl CurrentModel {
    /// Instantaneous current, amps. Spikes are half-rectified sinusoids.
    pub fn instantaneous(&self, slip: f64, t_s: f64) -> f64 {
        let mut i = self.baseline_a + self.slip_gain_a * slip;
        if self.spike_rate_hz > 0.0 && self.spike_amp_a > 0.0 {
            let phase = (std::f64::consts::TAU * self.spike_rate_hz * t_s).sin();
            i += self.spike_amp_a * phase.max(0.0);
        }
        i
    }
}

/// One terrain's calibrated response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainModel {
    pub name: String,
    pub packing: Option<PackingState>,
    pub anchors: Vec<SlipAnchor>,
    /// Trial-to-trial slip standard deviation.
    pub slip_noise_sigma: f64,
    pub immobilization: Option<Immobilization>,
    pub current: CurrentModel,
    /// Median grain size for scaling analysis, mm (None for non-granular).
    pub d50_mm: Option<f64>,
}

impl TerrainModel {
    /// Validates anchor ordering, coverage, and value ranges.
    pub fn validate(&self) -> Result<(), TerrainError> {
        if self.anchors.len() < 2 {
            return Err(TerrainError::MalformedModel("need at least 2 anchors"));
        }
        if self.anchors[0].height_mm != 0.0 {
            return Err(TerrainError::MalformedModel("first anchor must sit at 0 mm"));
        }
        if self.anchors[self.anchors.len() - 1].height_mm != HEIGHT_MAX_MM {
            return Err(TerrainError::MalformedModel("last anchor must sit at full height"));
        }
        for pair in self.anchors.windows(2) {
            if pair[1].height_mm <= pair[0].height_mm {
                return Err(TerrainError::MalformedModel("anchor heights must increase"));
            }
        }
        for a in &self.anchors {
            if !a.slip_mean.is_finite() || !(0.0..=1.0).contains(&a.slip_mean) {
                return Err(TerrainError::MalformedModel("anchor slip outside [0, 1]"));
            }
        }
        if !self.slip_noise_sigma.is_finite() || self.slip_noise_sigma < 0.0 {
            return Err(TerrainError::MalformedModel("negative noise sigma"));
        }
        if let Some(imm) = &self.immobilization {
            if !imm.below_mm.is_finite() || imm.below_mm < 0.0 {
                return Err(TerrainError::MalformedModel("negative immobilization threshold"));
            }
        }
        Ok(())
    }

    /// Mean slip at a grouser height, by piecewise-linear interpolation.
    pub fn slip_response(&self, height_mm: f64) -> Result<f64, TerrainError> {
        if !height_mm.is_finite() || !(0.0..=HEIGHT_MAX_MM).contains(&height_mm) {
            return Err(TerrainError::HeightOutOfRange { height_mm, max_mm: HEIGHT_MAX_MM });
        }
        let mut i = 1;
        while self.anchors[i].height_mm < height_mm {
            i += 1;
        }
        let (a, b) = (&self.anchors[i - 1], &self.anchors[i]);
        let t = (height_mm - a.height_mm) / (b.height_mm - a.height_mm);
        Ok(a.slip_mean + (b.slip_mean - a.slip_mean) * t)
    }

    /// True when this commanded height cannot produce forward progress.
    pub fn is_immobilizing(&self, height_mm: f64) -> bool {
        self.immobilization.map(|imm| height_mm < imm.below_mm).unwrap_or(false)
    }

    /// Draws one trial's slip: mean response plus Gaussian scatter, clamped
    /// to [0, [`SLIP_CAP`]]; exactly 1 when immobilized.
    pub fn sample_slip<R: Rng + ?Sized>(
        &self,
        height_mm: f64,
        rng: &mut R,
    ) -> Result<f64, TerrainError> {
        if self.is_immobilizing(height_mm) {
            return Ok(1.0);
        }
        let mean = self.slip_response(height_mm)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok((mean + self.slip_noise_sigma * z).clamp(0.0, SLIP_CAP))
    }
}

/// The five calibrated testbed surfaces.
pub fn default_catalog() -> Vec<TerrainModel> {
    use ImmobilizationMode::{FullSlip, Stall};
    use Provenance::{DerivedFromPublished, Interpolated, Published};
    let anchor = |height_mm: f64, slip_mean: f64, provenance| SlipAnchor {
        height_mm,
        slip_mean,
        provenance,
    };
    vec![
        TerrainModel {
            name: "vinyl".into(),
            packing: None,
            anchors: vec![
                anchor(0.0, 0.992677, DerivedFromPublished),
                anchor(3.5, 0.694874, DerivedFromPublished),
                anchor(7.0, 0.72, Interpolated),
                anchor(10.5, 0.75, Interpolated),
                anchor(14.0, 0.78, Interpolated),
                anchor(17.5, 0.81, Interpolated),
            ],
            slip_noise_sigma: 0.0403,
            immobilization: None,
            current: CurrentModel {
                baseline_a: 0.8,
                slip_gain_a: 1.5,
                spike_rate_hz: 0.0,
                spike_amp_a: 0.0,
            },
            d50_mm: None,
        },
        TerrainModel {
            name: "loose_sand".into(),
            packing: Some(PackingState::Loose),
            anchors: vec![
                anchor(0.0, 1.0, DerivedFromPublished),
                anchor(3.5, 0.9240476, DerivedFromPublished),
                anchor(14.0, 0.464, Published),
                anchor(17.5, 0.3881, Published),
            ],
            slip_noise_sigma: 0.0227,
            immobilization: Some(Immobilization { below_mm: 1.0, mode: FullSlip }),
            current: CurrentModel {
                baseline_a: 0.8,
                slip_gain_a: 1.5,
                spike_rate_hz: 0.0,
                spike_amp_a: 0.0,
            },
            d50_mm: Some(0.33),
        },
        TerrainModel {
            name: "dense_sand".into(),
            packing: Some(PackingState::Dense),
            anchors: vec![
                anchor(0.0, 1.0, DerivedFromPublished),
                anchor(3.5, 0.8316, Interpolated),
                anchor(14.0, 0.390, Published),
                anchor(17.5, 0.3556, Published),
            ],
            slip_noise_sigma: 0.0228,
            immobilization: Some(Immobilization { below_mm: 1.0, mode: FullSlip }),
            current: CurrentModel {
                baseline_a: 0.8,
                slip_gain_a: 1.5,
                spike_rate_hz: 0.0,
                spike_amp_a: 0.0,
            },
            d50_mm: Some(0.33),
        },
        TerrainModel {
            name: "pea_gravel".into(),
            packing: None,
            anchors: vec![
                anchor(0.0, 0.513799, DerivedFromPublished),
                anchor(3.5, 0.40, Interpolated),
                anchor(7.0, 0.3016, Published),
                anchor(10.5, 0.33, Interpolated),
                anchor(14.0, 0.36, Interpolated),
                anchor(17.5, 0.39, Interpolated),
            ],
            slip_noise_sigma: 0.0181,
            immobilization: None,
            current: CurrentModel {
                baseline_a: 0.9,
                slip_gain_a: 1.5,
                spike_rate_hz: 2.0,
                spike_amp_a: 0.8,
            },
            d50_mm: Some(9.7),
        },
        TerrainModel {
            name: "coarse_rock".into(),
            packing: None,
            anchors: vec![
                anchor(0.0, 1.0, DerivedFromPublished),
                anchor(3.5, 0.178287, DerivedFromPublished),
                anchor(7.0, 0.1166, Published),
                anchor(10.5, 0.13, Interpolated),
                anchor(14.0, 0.145, Interpolated),
                anchor(17.5, 0.16, Interpolated),
            ],
            slip_noise_sigma: 0.0079,
            immobilization: Some(Immobilization { below_mm: 1.0, mode: Stall }),
            current: CurrentModel {
                baseline_a: 0.9,
                slip_gain_a: 1.2,
                spike_rate_hz: 1.5,
                spike_amp_a: 1.0,
            },
            d50_mm: Some(35.1),
        },
    ]
}

/// Looks a terrain up by name.
pub fn by_name<'a>(
    catalog: &'a [TerrainModel],
    name: &str,
) -> Result<&'a TerrainModel, TerrainError> {
    catalog
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| TerrainError::UnknownTerrain(name.to_string()))
}
