//! Cam slot kinematics: the printed cubic spline segments, their numerical
//! polar conversion, and the bidirectional mapping between cam-wheel angular
//! offset and grouser height.
//!
//! The slot is given as two cubic pieces `y(x) = a3(x-b)^3 + a2(x-b)^2 +
//! a1(x-b) + a0` over x in [0, 32.94] mm. Evaluated as printed, the pieces
//! disagree by about 4.03 mm at the x = 17.1 junction; [`SplineMode`] selects
//! between evaluating them verbatim and shifting the second piece down onto
//! the first. The polar table converts slot samples through `r = sqrt(x^2 +
//! y^2)`, `theta = atan2(y, x)` and anchors grouser height h = 0 at zero
//! offset and h = 17.5 mm at the -64.5 degree offset endpoint.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{real, Real};

/// Upper end of the slot's Cartesian domain, mm.
pub const SLOT_X_MAX_MM: f64 = 32.94;
/// Full grouser deployment height, mm.
pub const HEIGHT_MAX_MM: f64 = 17.5;
/// Angular offset span between retracted and fully deployed, degrees.
pub const DEPLOY_SPAN_DEG: f64 = 64.5;
/// Interpolation error budget for a polar table, mm.
pub const DEFAULT_INTERP_BUDGET_MM: f64 = 0.01;
/// Junction mismatch above this threshold is flagged in diagnostics, mm.
pub const DEFAULT_JUNCTION_TOLERANCE_MM: f64 = 0.01;

/// Offset span in radians (negative end of the table).
pub fn deploy_span_rad<F: Real>() -> F {
    real::<F>(DEPLOY_SPAN_DEG).to_radians()
}

/// Errors from spline evaluation and polar table construction/queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CamError {
    #[error("x = {0} mm outside slot domain [0, {SLOT_X_MAX_MM}] mm")]
    XOutOfRange(f64),
    #[error("segment index {0} out of bounds")]
    SegmentIndex(usize),
    #[error("polar sampling needs at least 64 points, got {0}")]
    TooFewSamples(usize),
    #[error("interpolation error {achieved_mm} mm exceeds budget {budget_mm} mm; increase n")]
    ResolutionBudget { budget_mm: f64, achieved_mm: f64 },
    #[error("offset {0} rad outside table span")]
    OffsetOutOfSpan(f64),
    #[error("height {0} mm outside [0, {HEIGHT_MAX_MM}] mm")]
    HeightOutOfRange(f64),
    #[error("degenerate slot geometry: {0}")]
    DegenerateProfile(&'static str),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// How the printed junction mismatch is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplineMode {
    /// Evaluate each printed segment verbatim, keeping the C0 jump.
    #[default]
    AsPrinted,
    /// Shift each later segment so it starts where the previous one ended.
    ContinuityEnforced,
}

/// One cubic piece in the shifted basis (x - b).
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSegment<F: Real = f64> {
    pub a3: F,
    pub a2: F,
    pub a1: F,
    pub a0: F,
    /// Left break b; equals the interval's lower end.
    pub b: F,
    pub x_lo: F,
    pub x_hi: F,
}

impl<F: Real> SplineSegment<F> {
    /// Horner evaluation at x (caller checks the interval).
    fn eval_with_a0(&self, x: F, a0: F) -> F {
        let u = x - self.b;
        ((self.a3 * u + self.a2) * u + self.a1) * u + a0
    }
}

/// Report for one inter-segment junction.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionReport<F: Real = f64> {
    /// Junction abscissa, mm.
    pub x_mm: F,
    /// Left segment evaluated at the junction (printed coefficients), mm.
    pub left_y_mm: F,
    /// Right segment evaluated at the junction (printed coefficients), mm.
    pub right_y_mm: F,
    /// |right - left|, mm.
    pub mismatch_mm: F,
    /// True when the mismatch exceeds the profile's junction tolerance.
    pub flagged: bool,
}

/// The cam slot as an ordered list of printed spline segments.
#[derive(Debug, Clone, PartialEq)]
pub struct CamProfile<F: Real = f64> {
    segments: Vec<SplineSegment<F>>,
    /// Effective a0 per segment after applying the mode.
    effective_a0: Vec<F>,
    pub junction_tolerance_mm: F,
    pub mode: SplineMode,
}

impl<F: Real> Default for CamProfile<F> {
    fn default() -> Self {
        Self::from_printed_table(SplineMode::AsPrinted)
    }
}

impl<F: Real> CamProfile<F> {
    /// The printed two-segment slot table.
    pub fn from_printed_table(mode: SplineMode) -> Self {
        let segments = vec![
            SplineSegment {
                a3: real(-1.49455e-4),
                a2: real(5.10785e-3),
                a1: real(-1.63208e-2),
                a0: real(19.0),
                b: real(0.0),
                x_lo: real(0.0),
                x_hi: real(17.1),
            },
            SplineSegment {
                a3: real(1.42438e-4),
                a2: real(-9.69534e-3),
                a1: real(-1.16216e-1),
                a0: real(23.5),
                b: real(17.1),
                x_lo: real(17.1),
                x_hi: real(SLOT_X_MAX_MM),
            },
        ];
        Self::from_segments(segments, mode, real(DEFAULT_JUNCTION_TOLERANCE_MM))
            .expect("printed table is well formed")
    }

    /// Builds a profile from contiguous segments.
    pub fn from_segments(
        segments: Vec<SplineSegment<F>>,
        mode: SplineMode,
        junction_tolerance_mm: F,
    ) -> Result<Self, CamError> {
        if segments.is_empty() {
            return Err(CamError::DegenerateProfile("no segments"));
        }
        for seg in &segments {
            if seg.x_hi.partial_cmp(&seg.x_lo) != Some(Ordering::Greater) || seg.b != seg.x_lo {
                return Err(CamError::DegenerateProfile("segment interval malformed"));
            }
        }
        for pair in segments.windows(2) {
            if pair[0].x_hi != pair[1].x_lo {
                return Err(CamError::DegenerateProfile("segments not contiguous"));
            }
        }
        let mut effective_a0: Vec<F> = segments.iter().map(|s| s.a0).collect();
        if mode == SplineMode::ContinuityEnforced {
            for i in 1..segments.len() {
                let left_end =
                    segments[i - 1].eval_with_a0(segments[i - 1].x_hi, effective_a0[i - 1]);
                effective_a0[i] = left_end;
            }
        }
        Ok(Self { segments, effective_a0, junction_tolerance_mm, mode })
    }

    pub fn segments(&self) -> &[SplineSegment<F>] {
        &self.segments
    }

    /// Domain of the slot, mm.
    pub fn x_domain(&self) -> (F, F) {
        (self.segments[0].x_lo, self.segments[self.segments.len() - 1].x_hi)
    }

    fn segment_index(&self, x: F) -> usize {
        for (i, seg) in self.segments.iter().enumerate() {
            if x < seg.x_hi {
                return i;
            }
        }
        self.segments.len() - 1
    }

    /// Evaluates the slot ordinate y(x). At interior junctions the right
    /// segment owns the break point.
    pub fn eval(&self, x: F) -> Result<F, CamError> {
        let (lo, hi) = self.x_domain();
        if !x.is_finite() || x < lo || x > hi {
            return Err(CamError::XOutOfRange(x.to_f64().unwrap_or(f64::NAN)));
        }
        let i = self.segment_index(x);
        Ok(self.segments[i].eval_with_a0(x, self.effective_a0[i]))
    }

    /// Evaluates one segment on its closed interval, using the profile mode's
    /// effective coefficients.
    pub fn eval_segment(&self, index: usize, x: F) -> Result<F, CamError> {
        let seg = self.segments.get(index).ok_or(CamError::SegmentIndex(index))?;
        if !x.is_finite() || x < seg.x_lo || x > seg.x_hi {
            return Err(CamError::XOutOfRange(x.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(seg.eval_with_a0(x, self.effective_a0[index]))
    }

    /// Reports every interior junction's printed-coefficient mismatch.
    ///
    /// The mismatch is a property of the printed table, so it is evaluated
    /// from the printed coefficients regardless of mode.
    pub fn junction_reports(&self) -> Vec<JunctionReport<F>> {
        self.segments
            .windows(2)
            .map(|pair| {
                let x = pair[0].x_hi;
                let left = pair[0].eval_with_a0(x, pair[0].a0);
                let right = pair[1].eval_with_a0(x, pair[1].a0);
                let mismatch = (right - left).abs();
                JunctionReport {
                    x_mm: x,
                    left_y_mm: left,
                    right_y_mm: right,
                    mismatch_mm: mismatch,
                    flagged: mismatch > self.junction_tolerance_mm,
                }
            })
            .collect()
    }

    /// Samples the slot into a polar offset-to-height table. See
    /// [`sample_polar`].
    pub fn sample_polar(&self, n: usize) -> Result<PolarTable<F>, CamError> {
        sample_polar(self, n)
    }
}

/// One polar table row: cam-wheel offset, follower radius, grouser height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarSample<F: Real = f64> {
    /// Angular offset from the retracted reference, radians (<= 0).
    pub theta_rad: F,
    /// Follower radius from the cam axis, mm.
    pub r_mm: F,
    /// Grouser height, mm.
    pub h_mm: F,
}

/// Construction diagnostics for a [`PolarTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct TableDiagnostics<F: Real = f64> {
    /// Printed junction mismatch at each interior break, mm.
    pub junctions: Vec<JunctionReport<F>>,
    /// Samples dropped before the minimum-radius (retracted) anchor.
    pub dropped_head: usize,
    /// Samples dropped to keep theta strictly monotone across the junction.
    pub dropped_overlap: usize,
    /// Slot angular span before rescaling to the deploy span, radians.
    pub raw_span_rad: F,
    /// Factor applied to raw angles so the table spans exactly 64.5 degrees.
    pub angle_scale: F,
    /// Factor applied to (r - r_min) so the table tops out at exactly 17.5 mm.
    pub height_scale_per_mm: F,
    /// Largest measured deviation between the table polyline and the slot
    /// curve at pair midpoints, mm (junction-straddling pairs excluded).
    pub max_interp_error_mm: F,
}

/// Immutable sampled offset-to-height map. Rows are ordered by ascending
/// offset, from full deployment (-64.5 deg, 17.5 mm) to retracted (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarTable<F: Real = f64> {
    samples: Vec<PolarSample<F>>,
    diagnostics: TableDiagnostics<F>,
    mode: SplineMode,
}

/// Converts slot samples to polar form and anchors the height map.
///
/// `n` points are taken uniformly in x. The retracted anchor is the
/// minimum-radius sample (the printed first segment dips about 2 um below its
/// start, so the true retracted point sits slightly inside the slot); samples
/// ahead of it are dropped, as are any samples that would move theta backwards
/// across the as-printed junction. Offsets and heights are then scaled so the
/// endpoints land exactly on (0, 0 mm) and (-64.5 deg, 17.5 mm).
pub fn sample_polar<F: Real>(profile: &CamProfile<F>, n: usize) -> Result<PolarTable<F>, CamError> {
    sample_polar_with_budget(profile, n, real(DEFAULT_INTERP_BUDGET_MM))
}

/// [`sample_polar`] with an explicit interpolation error budget in mm.
pub fn sample_polar_with_budget<F: Real>(
    profile: &CamProfile<F>,
    n: usize,
    budget_mm: F,
) -> Result<PolarTable<F>, CamError> {
    if n < 64 {
        return Err(CamError::TooFewSamples(n));
    }
    let (x_lo, x_hi) = profile.x_domain();
    let step = (x_hi - x_lo) / real((n - 1) as f64);

    struct Raw<F> {
        x: F,
        theta: F,
        r: F,
        segment: usize,
        index: usize,
    }
    let polar = |x: F| -> Result<(F, F), CamError> {
        let y = profile.eval(x)?;
        Ok((y.atan2(x), (x * x + y * y).sqrt()))
    };
    let mut raw: Vec<Raw<F>> = Vec::with_capacity(n);
    for i in 0..n {
        let x = if i + 1 == n { x_hi } else { x_lo + step * real(i as f64) };
        let (theta, r) = polar(x)?;
        raw.push(Raw { x, theta, r, segment: profile.segment_index(x), index: i });
    }

    // Retracted anchor: global minimum radius, refined by a parabolic fit
    // through the neighbors so the anchor does not jitter with n.
    let mut i_min = 0;
    for (i, s) in raw.iter().enumerate() {
        if s.r < raw[i_min].r {
            i_min = i;
        }
    }
    let x_star = if i_min > 0 && i_min + 1 < n {
        let (ra, rb, rc) = (raw[i_min - 1].r, raw[i_min].r, raw[i_min + 1].r);
        let denom = ra - rb - rb + rc;
        if denom > F::zero() {
            let shift = step * real::<F>(0.5) * (ra - rc) / denom;
            (raw[i_min].x + shift).max(raw[i_min - 1].x).min(raw[i_min + 1].x)
        } else {
            raw[i_min].x
        }
    } else {
        raw[i_min].x
    };
    let (theta0_est, r0_est) = polar(x_star)?;
    let anchor = Raw {
        x: x_star,
        theta: theta0_est,
        r: r0_est,
        segment: profile.segment_index(x_star),
        index: usize::MAX,
    };

    // Keep theta strictly decreasing from the anchor on.
    let mut kept: Vec<&Raw<F>> = Vec::with_capacity(n + 1 - i_min);
    kept.push(&anchor);
    let mut dropped_head = 0;
    let mut dropped_overlap = 0;
    for s in &raw {
        if s.x <= x_star || s.r <= r0_est {
            dropped_head += 1;
            continue;
        }
        if s.theta < kept.last().expect("kept is non-empty").theta {
            kept.push(s);
        } else if kept.len() == 1 {
            dropped_head += 1;
        } else {
            dropped_overlap += 1;
        }
    }
    if kept.len() < 2 {
        return Err(CamError::DegenerateProfile("monotone sweep left fewer than 2 samples"));
    }
    for pair in kept.windows(2) {
        if pair[1].r < pair[0].r {
            return Err(CamError::DegenerateProfile("radius decreases along the slot"));
        }
    }

    let theta0 = kept[0].theta;
    let r0 = kept[0].r;
    let theta_end = kept[kept.len() - 1].theta;
    let r_end = kept[kept.len() - 1].r;
    let raw_span = theta0 - theta_end;
    if raw_span.partial_cmp(&F::zero()) != Some(Ordering::Greater)
        || r_end.partial_cmp(&r0) != Some(Ordering::Greater)
    {
        return Err(CamError::DegenerateProfile("slot spans no angle or no radius"));
    }
    let angle_scale = deploy_span_rad::<F>() / raw_span;
    let height_scale = real::<F>(HEIGHT_MAX_MM) / (r_end - r0);

    let mut samples: Vec<PolarSample<F>> = kept
        .iter()
        .map(|s| PolarSample {
            theta_rad: (s.theta - theta0) * angle_scale,
            r_mm: s.r,
            h_mm: (s.r - r0) * height_scale,
        })
        .collect();
    samples.reverse();

    // Midpoint deviation against the slot curve, skipping pairs that are not
    // x-adjacent or that straddle a segment break (the as-printed jump is a
    // modeling choice surfaced in diagnostics, not an interpolation error).
    let mut max_err = F::zero();
    for pair in kept.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.index == usize::MAX || b.index != a.index + 1 || a.segment != b.segment {
            continue;
        }
        let xm = (a.x + b.x) * real(0.5);
        let ym = profile.eval(xm)?;
        let theta_m = ym.atan2(xm);
        let r_m = (xm * xm + ym * ym).sqrt();
        let offset_m = (theta_m - theta0) * angle_scale;
        let h_true = (r_m - r0) * height_scale;
        let off_a = (a.theta - theta0) * angle_scale;
        let off_b = (b.theta - theta0) * angle_scale;
        let t = (offset_m - off_a) / (off_b - off_a);
        let h_a = (a.r - r0) * height_scale;
        let h_b = (b.r - r0) * height_scale;
        let h_interp = h_a + (h_b - h_a) * t;
        let err = (h_interp - h_true).abs();
        if err > max_err {
            max_err = err;
        }
    }
    if max_err > budget_mm {
        return Err(CamError::ResolutionBudget {
            budget_mm: budget_mm.to_f64().unwrap_or(f64::NAN),
            achieved_mm: max_err.to_f64().unwrap_or(f64::NAN),
        });
    }

    Ok(PolarTable {
        samples,
        diagnostics: TableDiagnostics {
            junctions: profile.junction_reports(),
            dropped_head,
            dropped_overlap,
            raw_span_rad: raw_span,
            angle_scale,
            height_scale_per_mm: height_scale,
            max_interp_error_mm: max_err,
        },
        mode: profile.mode,
    })
}

impl<F: Real> PolarTable<F> {
    pub fn samples(&self) -> &[PolarSample<F>] {
        &self.samples
    }

    pub fn diagnostics(&self) -> &TableDiagnostics<F> {
        &self.diagnostics
    }

    pub fn mode(&self) -> SplineMode {
        self.mode
    }

    /// Table offset span as (most negative, zero) radians.
    pub fn span_rad(&self) -> (F, F) {
        (self.samples[0].theta_rad, self.samples[self.samples.len() - 1].theta_rad)
    }

    /// Grouser height at a cam-wheel offset, mm. The offset must lie within
    /// the table span; the interpolated height is clamped to [0, 17.5] mm to
    /// absorb floating-point residue at the endpoints.
    pub fn height_from_offset(&self, delta_theta: F) -> Result<F, CamError> {
        let (lo, hi) = self.span_rad();
        let slack = real::<F>(1e-12);
        if !delta_theta.is_finite() || delta_theta < lo - slack || delta_theta > hi + slack {
            return Err(CamError::OffsetOutOfSpan(delta_theta.to_f64().unwrap_or(f64::NAN)));
        }
        let x = delta_theta.max(lo).min(hi);
        let i = self.bracket_by(|s| s.theta_rad, x);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let t = (x - a.theta_rad) / (b.theta_rad - a.theta_rad);
        let h = a.h_mm + (b.h_mm - a.h_mm) * t;
        Ok(h.max(F::zero()).min(real(HEIGHT_MAX_MM)))
    }

    /// Cam-wheel offset producing a grouser height, radians.
    pub fn offset_from_height(&self, h_mm: F) -> Result<F, CamError> {
        let max = real::<F>(HEIGHT_MAX_MM);
        let slack = real::<F>(1e-9);
        if !h_mm.is_finite() || h_mm < -slack || h_mm > max + slack {
            return Err(CamError::HeightOutOfRange(h_mm.to_f64().unwrap_or(f64::NAN)));
        }
        let h = h_mm.max(F::zero()).min(max);
        // h decreases with ascending offset; find i with h[i] >= h >= h[i+1].
        let mut lo = 0usize;
        let mut hi = self.samples.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.samples[mid].h_mm >= h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (&self.samples[lo], &self.samples[hi]);
        if a.h_mm == b.h_mm {
            return Ok(a.theta_rad);
        }
        let t = (h - a.h_mm) / (b.h_mm - a.h_mm);
        let (span_lo, span_hi) = self.span_rad();
        Ok((a.theta_rad + (b.theta_rad - a.theta_rad) * t).max(span_lo).min(span_hi))
    }

    fn bracket_by(&self, key: impl Fn(&PolarSample<F>) -> F, x: F) -> usize {
        let mut lo = 0usize;
        let mut hi = self.samples.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if key(&self.samples[mid]) <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Writes the table as CSV with columns `theta_rad,r_mm,h_mm`.
    pub fn export_csv<W: Write>(&self, mut out: W) -> Result<(), CamError> {
        let emit = |out: &mut W, line: String| {
            out.write_all(line.as_bytes()).map_err(|e| CamError::Export(e.to_string()))
        };
        emit(&mut out, "theta_rad,r_mm,h_mm\n".to_string())?;
        for s in &self.samples {
            emit(&mut out, format!("{:.9},{:.6},{:.6}\n", s.theta_rad, s.r_mm, s.h_mm))?;
        }
        Ok(())
    }
}
