//! Granularity scaling: fits the slip-minimizing grouser height against
//! median grain size, selects among power, logarithmic, and exponential
//! families, and reproduces the validation comparison table.
//!
//! Each family has a linearizing transform (power: log h vs log D; exp:
//! log h vs D; log: h vs log D) fit by ordinary least squares, plus an
//! original-space mode that refines the transformed seed by damped
//! Gauss-Newton on the untransformed residuals. Family comparison uses the
//! original-space R^2 so the three families are scored on the same
//! residuals.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::HEIGHT_MAX_MM;
use crate::terrain::Provenance;
use crate::{real, Real};

/// Grouser heights exercised by the test campaign, mm.
pub const TESTED_HEIGHTS_MM: [f64; 6] = [0.0, 3.5, 7.0, 10.5, 14.0, 17.5];

/// Errors from fitting and prediction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("points are degenerate in the fit space (no spread in the regressor)")]
    DegeneratePoints,
    #[error("diameter {0} mm must be positive")]
    NonPositiveDiameter(f64),
    #[error("height {0} mm must be positive for log-transformed families")]
    NonPositiveHeight(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Candidate functional forms for h*(D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    /// h = a * D^b
    Power,
    /// h = a + b * ln(D)
    Logarithmic,
    /// h = a * exp(b * D)
    Exponential,
}

impl fmt::Display for FitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitFamily::Power => "power",
            FitFamily::Logarithmic => "log",
            FitFamily::Exponential => "exp",
        })
    }
}

/// Where the least-squares problem was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// OLS in the family's linearizing transform.
    #[default]
    Linearized,
    /// Damped Gauss-Newton on untransformed residuals, seeded by the
    /// linearized solution.
    OriginalSpace,
}

/// One terrain's observed optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumPoint {
    pub terrain: String,
    pub d50_mm: f64,
    pub h_star_mm: f64,
    pub source: Provenance,
}

/// A fitted h*(D) relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit<F: Real = f64> {
    pub family: FitFamily,
    pub a: F,
    pub b: F,
    /// R^2 in the space the least squares was solved in.
    pub r_squared_fit_space: F,
    /// R^2 against the untransformed heights (family comparison metric).
    pub r_squared_original: F,
    pub mode: FitMode,
}

impl<F: Real> ScalingFit<F> {
    /// Evaluates the family at a diameter.
    pub fn evaluate(&self, d50_mm: F) -> Result<F, ScalingError> {
        if !d50_mm.is_finite() || d50_mm <= F::zero() {
            return Err(ScalingError::NonPositiveDiameter(d50_mm.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(match self.family {
            FitFamily::Power => self.a * d50_mm.powf(self.b),
            FitFamily::Logarithmic => self.a + self.b * d50_mm.ln(),
            FitFamily::Exponential => self.a * (self.b * d50_mm).exp(),
        })
    }
}

/// A clamped height prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction<F: Real = f64> {
    pub height_mm: F,
    /// True when the raw model output fell outside [0, 17.5] mm.
    pub clamped: bool,
}

/// Evaluates a fit and clamps to the actuation range.
pub fn predict_height<F: Real>(
    fit: &ScalingFit<F>,
    d50_mm: F,
) -> Result<Prediction<F>, ScalingError> {
    let raw = fit.evaluate(d50_mm)?;
    if !raw.is_finite() {
        return Err(ScalingError::NonFinite("model output"));
    }
    let max = real::<F>(HEIGHT_MAX_MM);
    let clamped = raw < F::zero() || raw > max;
    Ok(Prediction { height_mm: raw.max(F::zero()).min(max), clamped })
}

/// Fits one family to raw (diameter, height) pairs.
pub fn fit_points<F: Real>(
    d50_mm: &[F],
    h_star_mm: &[F],
    family: FitFamily,
    mode: FitMode,
) -> Result<ScalingFit<F>, ScalingError> {
    if d50_mm.len() != h_star_mm.len() || d50_mm.len() < 3 {
        return Err(ScalingError::TooFewPoints { needed: 3, got: d50_mm.len().min(h_star_mm.len()) });
    }
    for &d in d50_mm {
        if !d.is_finite() || d <= F::zero() {
            return Err(ScalingError::NonPositiveDiameter(d.to_f64().unwrap_or(f64::NAN)));
        }
    }
    for &h in h_star_mm {
        if !h.is_finite() {
            return Err(ScalingError::NonFinite("height"));
        }
        if h <= F::zero() && matches!(family, FitFamily::Power | FitFamily::Exponential) {
            return Err(ScalingError::NonPositiveHeight(h.to_f64().unwrap_or(f64::NAN)));
        }
    }
    let (xs, ys): (Vec<F>, Vec<F>) = match family {
        FitFamily::Power => (
            d50_mm.iter().map(|d| d.ln()).collect(),
            h_star_mm.iter().map(|h| h.ln()).collect(),
        ),
        FitFamily::Logarithmic => {
            (d50_mm.iter().map(|d| d.ln()).collect(), h_star_mm.to_vec())
        }
        FitFamily::Exponential => {
            (d50_mm.to_vec(), h_star_mm.iter().map(|h| h.ln()).collect())
        }
    };
    let (slope, intercept) = ols(&xs, &ys)?;
    let (mut a, mut b) = match family {
        FitFamily::Power | FitFamily::Exponential => (intercept.exp(), slope),
        FitFamily::Logarithmic => (intercept, slope),
    };
    if mode == FitMode::OriginalSpace {
        match family {
            // Linear in its parameters, so the OLS solution already
            // minimizes original-space residuals.
            FitFamily::Logarithmic => {}
            FitFamily::Power => {
                (a, b) = refine(d50_mm, h_star_mm, a, b, |d, a, b| {
                    let basis = d.powf(b);
                    (a * basis, basis, a * basis * d.ln())
                });
            }
            FitFamily::Exponential => {
                (a, b) = refine(d50_mm, h_star_mm, a, b, |d, a, b| {
                    let basis = (b * d).exp();
                    (a * basis, basis, a * basis * d)
                });
            }
        }
    }
    let fit = ScalingFit {
        family,
        a,
        b,
        r_squared_fit_space: F::zero(),
        r_squared_original: F::zero(),
        mode,
    };
    let predicted_orig: Vec<F> =
        d50_mm.iter().map(|&d| fit.evaluate(d)).collect::<Result<_, _>>()?;
    let r2_original = r_squared(h_star_mm, &predicted_orig);
    let r2_fit_space = match mode {
        FitMode::OriginalSpace => r2_original,
        FitMode::Linearized => {
            let predicted_fit: Vec<F> = xs.iter().map(|&x| intercept + slope * x).collect();
            r_squared(&ys, &predicted_fit)
        }
    };
    Ok(ScalingFit { r_squared_fit_space: r2_fit_space, r_squared_original: r2_original, ..fit })
}

/// Fits one family to observed optima.
pub fn fit_family(
    points: &[OptimumPoint],
    family: FitFamily,
    mode: FitMode,
) -> Result<ScalingFit<f64>, ScalingError> {
    let d: Vec<f64> = points.iter().map(|p| p.d50_mm).collect();
    let h: Vec<f64> = points.iter().map(|p| p.h_star_mm).collect();
    fit_points(&d, &h, family, mode)
}

/// Fits all three families and keeps the best original-space R^2.
pub fn select_best(
    points: &[OptimumPoint],
    mode: FitMode,
) -> Result<ScalingFit<f64>, ScalingError> {
    let mut best: Option<ScalingFit<f64>> = None;
    for family in [FitFamily::Power, FitFamily::Logarithmic, FitFamily::Exponential] {
        let fit = fit_family(points, family, mode)?;
        if best.map(|b| fit.r_squared_original > b.r_squared_original).unwrap_or(true) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one family fit"))
}

/// The observed optima entering the reference fit. Dense sand shares loose
/// sand's grain size and optimum, so it only adds a duplicate point when
/// explicitly requested for sensitivity analysis.
pub fn reference_optimum_points(include_dense_sand: bool) -> Vec<OptimumPoint> {
    let point = |terrain: &str, d50_mm: f64, h_star_mm: f64| OptimumPoint {
        terrain: terrain.into(),
        d50_mm,
        h_star_mm,
        source: Provenance::Published,
    };
    let mut points = vec![
        point("loose_sand", 0.33, 17.5),
        point("pea_gravel", 9.7, 7.0),
        point("coarse_rock", 35.1, 7.0),
    ];
    if include_dense_sand {
        points.push(point("dense_sand", 0.33, 17.5));
    }
    points
}

fn ols<F: Real>(xs: &[F], ys: &[F]) -> Result<(F, F), ScalingError> {
    let n = real::<F>(xs.len() as f64);
    let mean_x = xs.iter().fold(F::zero(), |s, &x| s + x) / n;
    let mean_y = ys.iter().fold(F::zero(), |s, &y| s + y) / n;
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx = sxx + (x - mean_x) * (x - mean_x);
        sxy = sxy + (x - mean_x) * (y - mean_y);
    }
    if sxx <= F::zero() {
        return Err(ScalingError::DegeneratePoints);
    }
    let slope = sxy / sxx;
    Ok((slope, mean_y - slope * mean_x))
}

fn r_squared<F: Real>(observed: &[F], predicted: &[F]) -> F {
    let n = real::<F>(observed.len() as f64);
    let mean = observed.iter().fold(F::zero(), |s, &y| s + y) / n;
    let mut ssr = F::zero();
    let mut sst = F::zero();
    for (&y, &yhat) in observed.iter().zip(predicted) {
        ssr = ssr + (y - yhat) * (y - yhat);
        sst = sst + (y - mean) * (y - mean);
    }
    if sst == F::zero() {
        return if ssr <= F::epsilon() { F::one() } else { F::zero() };
    }
    F::one() - ssr / sst
}

/// Damped Gauss-Newton on original-space residuals. `model` returns
/// (value, d/da, d/db) at one diameter.
fn refine<F: Real>(
    d: &[F],
    h: &[F],
    mut a: F,
    mut b: F,
    model: impl Fn(F, F, F) -> (F, F, F),
) -> (F, F) {
    let sse = |a: F, b: F| {
        d.iter().zip(h).fold(F::zero(), |s, (&di, &hi)| {
            let (f, _, _) = model(di, a, b);
            s + (hi - f) * (hi - f)
        })
    };
    let mut lambda = real::<F>(1e-3);
    let mut current = sse(a, b);
    for _ in 0..200 {
        let mut jaa = F::zero();
        let mut jab = F::zero();
        let mut jbb = F::zero();
        let mut ga = F::zero();
        let mut gb = F::zero();
        for (&di, &hi) in d.iter().zip(h) {
            let (f, da, db) = model(di, a, b);
            let r = hi - f;
            jaa = jaa + da * da;
            jab = jab + da * db;
            jbb = jbb + db * db;
            ga = ga + da * r;
            gb = gb + db * r;
        }
        let mut stepped = false;
        for _ in 0..40 {
            let maa = jaa * (F::one() + lambda);
            let mbb = jbb * (F::one() + lambda);
            let det = maa * mbb - jab * jab;
            if det.abs() <= F::epsilon() {
                break;
            }
            let step_a = (ga * mbb - gb * jab) / det;
            let step_b = (gb * maa - ga * jab) / det;
            let trial = sse(a + step_a, b + step_b);
            if trial < current {
                a = a + step_a;
                b = b + step_b;
                let shrunk = current - trial;
                current = trial;
                lambda = (lambda * real(0.25)).max(real(1e-12));
                stepped = true;
                let scale = current.max(real(1e-30));
                if shrunk / scale < real(1e-14) {
                    return (a, b);
                }
                break;
            }
            lambda = lambda * real(8.0);
        }
        if !stepped {
            break;
        }
    }
    (a, b)
}

/// Slip statistic as mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipStat {
    pub mean: f64,
    pub std_dev: f64,
}

/// One terrain's validation measurements: slip at the previously tested
/// best height versus slip at the model-predicted height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMeasurement {
    pub terrain: String,
    pub volume_fraction: Option<f64>,
    pub d50_mm: Option<f64>,
    pub previous_height_mm: f64,
    pub predicted_height_mm: f64,
    pub previous_slip: SlipStat,
    pub predicted_slip: SlipStat,
}

/// One row of the validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub measurement: ValidationMeasurement,
    /// (previous - predicted) / previous, percent; positive is improvement.
    pub percent_change: f64,
    /// Model height recomputed from the fit when the grain size is known.
    pub model_height_mm: Option<f64>,
    /// Set when the quoted previous height is not one of the tested heights.
    pub off_grid_previous_height: bool,
}

/// Table of per-terrain validation rows plus completeness flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub missing_terrains: Vec<String>,
}

impl ValidationReport {
    /// True when expected terrains were absent from the measurements.
    pub fn partial(&self) -> bool {
        !self.missing_terrains.is_empty()
    }

    /// CSV mirror of the report columns.
    pub fn to_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "terrain,volume_fraction,previous_height_mm,predicted_height_mm,\
             previous_slip_mean,previous_slip_std,predicted_slip_mean,predicted_slip_std,\
             percent_change,model_height_mm,off_grid_previous_height"
        )?;
        for row in &self.rows {
            let m = &row.measurement;
            let vf = m.volume_fraction.map(|v| format!("{v:.3}")).unwrap_or_default();
            let mh = row.model_height_mm.map(|v| format!("{v:.2}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.2},{},{}",
                m.terrain,
                vf,
                m.previous_height_mm,
                m.predicted_height_mm,
                m.previous_slip.mean,
                m.previous_slip.std_dev,
                m.predicted_slip.mean,
                m.predicted_slip.std_dev,
                row.percent_change,
                mh,
                row.off_grid_previous_height,
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>5} {:>9} {:>10} {:>19} {:>19} {:>8}",
            "terrain", "phi", "prev h", "pred h", "slip at prev", "slip at pred", "change"
        )?;
        for row in &self.rows {
            let m = &row.measurement;
            let phi = m.volume_fraction.map(|v| format!("{v:.3}")).unwrap_or_else(|| "--".into());
            let flag = if row.off_grid_previous_height { "*" } else { "" };
            writeln!(
                f,
                "{:<12} {:>5} {:>8.1}{} {:>10.2} {:>9.4} +- {:>6.4} {:>9.4} +- {:>6.4} {:>7.2}%",
                m.terrain,
                phi,
                m.previous_height_mm,
                flag,
                m.predicted_height_mm,
                m.previous_slip.mean,
                m.previous_slip.std_dev,
                m.predicted_slip.mean,
                m.predicted_slip.std_dev,
                row.percent_change,
            )?;
        }
        if self.rows.iter().any(|r| r.off_grid_previous_height) {
            writeln!(f, "* previous height not in the tested grid; quoted verbatim")?;
        }
        if self.partial() {
            writeln!(f, "missing terrains: {}", self.missing_terrains.join(", "))?;
        }
        Ok(())
    }
}

/// Builds the validation report for a fit against measured slip pairs.
///
/// Previous heights are quoted verbatim; rows whose previous height is not
/// one of the tested heights are flagged rather than corrected. Expected
/// terrains without a measurement are listed as missing.
pub fn validate_table(
    fit: &ScalingFit<f64>,
    measurements: &[ValidationMeasurement],
    expected_terrains: &[&str],
) -> ValidationReport {
    let rows = measurements
        .iter()
        .map(|m| {
            let percent_change =
                (m.previous_slip.mean - m.predicted_slip.mean) / m.previous_slip.mean * 100.0;
            let model_height_mm =
                m.d50_mm.and_then(|d| predict_height(fit, d).ok()).map(|p| p.height_mm);
            let off_grid = !TESTED_HEIGHTS_MM
                .iter()
                .any(|&h| (h - m.previous_height_mm).abs() < 1e-9);
            ValidationRow {
                measurement: m.clone(),
                percent_change,
                model_height_mm,
                off_grid_previous_height: off_grid,
            }
        })
        .collect::<Vec<_>>();
    let missing_terrains = expected_terrains
        .iter()
        .filter(|name| !measurements.iter().any(|m| m.terrain == **name))
        .map(|name| name.to_string())
        .collect();
    ValidationReport { rows, missing_terrains }
}

/// The published validation measurements (previous best versus predicted
/// height, slip mean and standard deviation over 25 trials each).
pub fn reference_validation_measurements() -> Vec<ValidationMeasurement> {
    vec![
        ValidationMeasurement {
            terrain: "coarse_rock".into(),
            volume_fraction: None,
            d50_mm: Some(35.1),
            previous_height_mm: 7.5,
            predicted_height_mm: 6.10,
            previous_slip: SlipStat { mean: 0.1166, std_dev: 0.0058 },
            predicted_slip: SlipStat { mean: 0.1087, std_dev: 0.0054 },
        },
        ValidationMeasurement {
            terrain: "pea_gravel".into(),
            volume_fraction: None,
            d50_mm: Some(9.7),
            previous_height_mm: 7.5,
            predicted_height_mm: 7.93,
            previous_slip: SlipStat { mean: 0.3016, std_dev: 0.0151 },
            predicted_slip: SlipStat { mean: 0.2848, std_dev: 0.0142 },
        },
        ValidationMeasurement {
            terrain: "loose_sand".into(),
            volume_fraction: Some(0.574),
            d50_mm: Some(0.33),
            previous_height_mm: 17.5,
            predicted_height_mm: 17.4,
            previous_slip: SlipStat { mean: 0.3881, std_dev: 0.0194 },
            predicted_slip: SlipStat { mean: 0.3887, std_dev: 0.0745 },
        },
        ValidationMeasurement {
            terrain: "dense_sand".into(),
            volume_fraction: Some(0.601),
            d50_mm: Some(0.33),
            previous_height_mm: 17.5,
            predicted_height_mm: 17.4,
            previous_slip: SlipStat { mean: 0.3556, std_dev: 0.0180 },
            predicted_slip: SlipStat { mean: 0.3557, std_dev: 0.0452 },
        },
    ]
}
