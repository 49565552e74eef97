//! Particle-size distribution analysis: sieve stacks, cumulative
//! percent-passing curves, percentile diameters, and packing fraction.
//!
//! A sieve dataset lists mass retained per aperture plus the pan. Percent
//! passing an aperture is 100 times the mass finer than it over the total.
//! Percentile lookups interpolate in (log diameter, percent) space by
//! default, matching the conventional semi-log gradation plot; a linear
//! diameter mode is available for comparison.

use std::io::Read;

use thiserror::Error;

/// Errors from sieve data handling and curve queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsdError {
    #[error("dataset has no sieve bins")]
    EmptyDataset,
    #[error("aperture {0} mm must be positive and finite")]
    BadAperture(f64),
    #[error("duplicate aperture {0} mm")]
    DuplicateAperture(f64),
    #[error("mass {0} g must be non-negative and finite")]
    BadMass(f64),
    #[error("total retained mass is zero")]
    ZeroTotalMass,
    #[error("curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve points must have positive increasing diameters and non-decreasing percents")]
    MalformedCurve,
    #[error("percentile {0} outside (0, 100)")]
    PercentileOutOfRange(f64),
    #[error("percentile {p} lies outside the measured curve [{lo}, {hi}]; refusing to extrapolate")]
    OutsideCurve { p: f64, lo: f64, hi: f64 },
    #[error("diameter {0} mm outside the measured curve; refusing to extrapolate")]
    DiameterOutsideCurve(f64),
    #[error("bulk density {bulk} exceeds particle density {particle}")]
    PhysicallyInvalid { bulk: f64, particle: f64 },
    #[error("solid fills the whole volume; not a granular packing")]
    NonGranular,
    #[error("density {0} must be positive and finite")]
    BadDensity(f64),
    #[error("volume {0} must be positive and finite")]
    BadVolume(f64),
    #[error("csv parse failed: {0}")]
    Csv(String),
}

/// Interpolation space for curve queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpSpace {
    /// Interpolate percent against log10(diameter).
    #[default]
    LogDiameter,
    /// Interpolate percent against diameter directly.
    Linear,
}

/// Mass retained on one sieve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SieveBin {
    pub aperture_mm: f64,
    pub mass_retained_g: f64,
}

/// A sieve stack with the pan catch.
#[derive(Debug, Clone, PartialEq)]
pub struct SieveDataset {
    bins: Vec<SieveBin>,
    pan_mass_g: f64,
}

impl SieveDataset {
    /// Validates and sorts a sieve stack (ascending aperture).
    pub fn new(mut bins: Vec<SieveBin>, pan_mass_g: f64) -> Result<Self, PsdError> {
        if bins.is_empty() {
            return Err(PsdError::EmptyDataset);
        }
        for b in &bins {
            if !b.aperture_mm.is_finite() || b.aperture_mm <= 0.0 {
                return Err(PsdError::BadAperture(b.aperture_mm));
            }
            if !b.mass_retained_g.is_finite() || b.mass_retained_g < 0.0 {
                return Err(PsdError::BadMass(b.mass_retained_g));
            }
        }
        if !pan_mass_g.is_finite() || pan_mass_g < 0.0 {
            return Err(PsdError::BadMass(pan_mass_g));
        }
        bins.sort_by(|a, b| a.aperture_mm.total_cmp(&b.aperture_mm));
        for pair in bins.windows(2) {
            if pair[0].aperture_mm == pair[1].aperture_mm {
                return Err(PsdError::DuplicateAperture(pair[0].aperture_mm));
            }
        }
        let total: f64 = pan_mass_g + bins.iter().map(|b| b.mass_retained_g).sum::<f64>();
        if total <= 0.0 {
            return Err(PsdError::ZeroTotalMass);
        }
        Ok(Self { bins, pan_mass_g })
    }

    /// Reads `aperture_mm,mass_retained_g` rows; an aperture of 0 is the pan.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, PsdError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut bins = Vec::new();
        let mut pan = 0.0;
        for record in rdr.records() {
            let record = record.map_err(|e| PsdError::Csv(e.to_string()))?;
            if record.len() < 2 {
                return Err(PsdError::Csv(format!("expected 2 columns, got {}", record.len())));
            }
            let aperture: f64 =
                record[0].parse().map_err(|_| PsdError::Csv(format!("bad number {:?}", &record[0])))?;
            let mass: f64 =
                record[1].parse().map_err(|_| PsdError::Csv(format!("bad number {:?}", &record[1])))?;
            if aperture == 0.0 {
                pan += mass;
            } else {
                bins.push(SieveBin { aperture_mm: aperture, mass_retained_g: mass });
            }
        }
        Self::new(bins, pan)
    }

    pub fn bins(&self) -> &[SieveBin] {
        &self.bins
    }

    pub fn pan_mass_g(&self) -> f64 {
        self.pan_mass_g
    }

    pub fn total_mass_g(&self) -> f64 {
        self.pan_mass_g + self.bins.iter().map(|b| b.mass_retained_g).sum::<f64>()
    }

    /// Cumulative percent-passing curve, one point per sieve.
    pub fn cumulative_curve(&self) -> Result<PsdCurve, PsdError> {
        let total = self.total_mass_g();
        let mut finer = self.pan_mass_g;
        let mut points = Vec::with_capacity(self.bins.len());
        for b in &self.bins {
            points.push(PsdPoint {
                diameter_mm: b.aperture_mm,
                percent_passing: 100.0 * finer / total,
            });
            finer += b.mass_retained_g;
        }
        PsdCurve::from_points(points)
    }
}

/// One gradation point: percent of mass finer than the diameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdPoint {
    pub diameter_mm: f64,
    pub percent_passing: f64,
}

/// A validated cumulative gradation curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCurve {
    points: Vec<PsdPoint>,
}

impl PsdCurve {
    /// Requires positive strictly increasing diameters and non-decreasing
    /// percents in [0, 100].
    pub fn from_points(points: Vec<PsdPoint>) -> Result<Self, PsdError> {
        if points.len() < 2 {
            return Err(PsdError::TooFewPoints(points.len()));
        }
        for p in &points {
            if !p.diameter_mm.is_finite()
                || p.diameter_mm <= 0.0
                || !p.percent_passing.is_finite()
                || !(0.0..=100.0).contains(&p.percent_passing)
            {
                return Err(PsdError::MalformedCurve);
            }
        }
        for pair in points.windows(2) {
            if pair[1].diameter_mm <= pair[0].diameter_mm
                || pair[1].percent_passing < pair[0].percent_passing
            {
                return Err(PsdError::MalformedCurve);
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[PsdPoint] {
        &self.points
    }

    /// Percent passing at a diameter inside the measured range.
    pub fn percent_passing(&self, diameter_mm: f64, space: InterpSpace) -> Result<f64, PsdError> {
        let first = &self.points[0];
        let last = &self.points[self.points.len() - 1];
        if !diameter_mm.is_finite()
            || diameter_mm < first.diameter_mm
            || diameter_mm > last.diameter_mm
        {
            return Err(PsdError::DiameterOutsideCurve(diameter_mm));
        }
        let mut lo = 0;
        let mut hi = self.points.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.points[mid].diameter_mm <= diameter_mm {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (&self.points[lo], &self.points[hi]);
        let t = match space {
            InterpSpace::LogDiameter => {
                (diameter_mm.log10() - a.diameter_mm.log10())
                    / (b.diameter_mm.log10() - a.diameter_mm.log10())
            }
            InterpSpace::Linear => {
                (diameter_mm - a.diameter_mm) / (b.diameter_mm - a.diameter_mm)
            }
        };
        Ok((a.percent_passing + (b.percent_passing - a.percent_passing) * t).clamp(0.0, 100.0))
    }

    /// Diameter at which `p` percent of the mass is finer (e.g. p = 50 for
    /// the median grain size). Refuses to extrapolate beyond the curve.
    pub fn percentile_diameter(&self, p: f64, space: InterpSpace) -> Result<f64, PsdError> {
        if !p.is_finite() || p <= 0.0 || p >= 100.0 {
            return Err(PsdError::PercentileOutOfRange(p));
        }
        let first = &self.points[0];
        let last = &self.points[self.points.len() - 1];
        if p < first.percent_passing || p > last.percent_passing {
            return Err(PsdError::OutsideCurve {
                p,
                lo: first.percent_passing,
                hi: last.percent_passing,
            });
        }
        if p == first.percent_passing {
            return Ok(first.diameter_mm);
        }
        // First segment whose upper percent reaches p; its lower percent is
        // strictly below p, so the interpolation is well defined even across
        // plateaus from empty sieves.
        let mut i = 1;
        while self.points[i].percent_passing < p {
            i += 1;
        }
        let (a, b) = (&self.points[i - 1], &self.points[i]);
        let t = (p - a.percent_passing) / (b.percent_passing - a.percent_passing);
        Ok(match space {
            InterpSpace::LogDiameter => {
                let log_d = a.diameter_mm.log10()
                    + (b.diameter_mm.log10() - a.diameter_mm.log10()) * t;
                10f64.powf(log_d)
            }
            InterpSpace::Linear => a.diameter_mm + (b.diameter_mm - a.diameter_mm) * t,
        })
    }
}

/// Solid volume fraction from bulk and particle density.
pub fn volume_fraction(bulk_density: f64, particle_density: f64) -> Result<f64, PsdError> {
    if !bulk_density.is_finite() || bulk_density <= 0.0 {
        return Err(PsdError::BadDensity(bulk_density));
    }
    if !particle_density.is_finite() || particle_density <= 0.0 {
        return Err(PsdError::BadDensity(particle_density));
    }
    if bulk_density > particle_density {
        return Err(PsdError::PhysicallyInvalid { bulk: bulk_density, particle: particle_density });
    }
    if bulk_density == particle_density {
        return Err(PsdError::NonGranular);
    }
    Ok(bulk_density / particle_density)
}

/// Solid volume fraction from solid and total volume.
pub fn volume_fraction_from_volumes(
    solid_volume: f64,
    total_volume: f64,
) -> Result<f64, PsdError> {
    if !solid_volume.is_finite() || solid_volume <= 0.0 {
        return Err(PsdError::BadVolume(solid_volume));
    }
    if !total_volume.is_finite() || total_volume <= 0.0 {
        return Err(PsdError::BadVolume(total_volume));
    }
    if solid_volume > total_volume {
        return Err(PsdError::PhysicallyInvalid { bulk: solid_volume, particle: total_volume });
    }
    if solid_volume == total_volume {
        return Err(PsdError::NonGranular);
    }
    Ok(solid_volume / total_volume)
}
