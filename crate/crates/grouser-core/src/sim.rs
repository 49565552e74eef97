//! Fixed-step plant simulation of the gantry testbed.
//!
//! The plant integrates wheel rotation, carriage translation under sampled
//! slip, and the servo-driven cam offset at a 1 ms inner step, then emits
//! sensor frames quantized to the real encoders (motor counts, 12-bit
//! absolute cam counts, 5 um linear counts, 1 mA current). A trial locks the
//! carriage while the controller settles the commanded height, then releases
//! it and runs closed loop until the stroke completes or the wheel
//! immobilizes. Slip is drawn once per trial from the terrain model, so a
//! trial's kinematics are exact given its sample.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{CamError, CamProfile, PolarTable, SplineMode, HEIGHT_MAX_MM};
use crate::controller::{
    measure_height, pid_step, ControlError, PidGains, PidState, CAM_ENCODER_COUNTS,
    DEFAULT_DESYNC_TOLERANCE_RAD, WHEEL_COUNTS_PER_REV,
};
use crate::estimators::{
    drawbar_energy, slip_ratio, travel_time, EstimatorError, BUS_VOLTAGE_V,
};
use crate::telemetry::{
    self, TelemetryError, WireFrame, FLAG_IMMOBILIZED, FLAG_SATURATED, FLAG_STALLED,
};
use crate::terrain::{ImmobilizationMode, TerrainError, TerrainModel};
use crate::wheel::WheelGeometry;

/// Rail stroke between the carriage end stops, metres.
pub const DEFAULT_STROKE_M: f64 = 0.4325;
/// Commanded wheel surface speed, m/s (recovers 100,000 linear counts/s).
pub const DEFAULT_SURFACE_SPEED_MPS: f64 = 0.5;
/// Linear encoder resolution, metres per count.
pub const LINEAR_M_PER_COUNT: f64 = 5e-6;
/// Plant integration step, seconds.
pub const DEFAULT_INNER_DT_S: f64 = 0.001;
/// Wall-clock ceiling on a single trial, seconds.
pub const DEFAULT_TRIAL_TIMEOUT_S: f64 = 300.0;
/// Carriage-locked settling phase before the stroke begins, seconds.
pub const DEFAULT_SETTLE_S: f64 = 3.0;
/// Trial aborts as immobilized after this long without carriage progress.
pub const STALL_WINDOW_S: f64 = 5.0;
/// Minimum carriage progress that resets the stall watchdog, metres.
pub const STALL_PROGRESS_M: f64 = 0.001;
/// Trial log schema version.
pub const TRIAL_LOG_SCHEMA: u32 = 1;

/// Simulation failures.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Table(#[from] CamError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

/// Servo actuation limits for the cam offset drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoLimits {
    /// Peak cam-relative rotation rate, rad/s.
    pub max_rate_rad_s: f64,
    /// Slew limit on the unit actuator command, 1/s.
    pub command_slew_per_s: f64,
}

impl Default for ServoLimits {
    fn default() -> Self {
        Self { max_rate_rad_s: 0.9, command_slew_per_s: 50.0 }
    }
}

/// A scheduled cam backdrive disturbance during the stroke phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Stroke-phase time at which the offset is perturbed, seconds.
    pub at_s: f64,
    /// Offset perturbation, radians (positive retracts).
    pub delta_theta_rad: f64,
}

/// Full configuration for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub stroke_m: f64,
    pub nominal_surface_speed_mps: f64,
    pub wheel_radius_m: f64,
    /// Plant integration step, seconds.
    pub dt_s: f64,
    pub seed: u64,
    pub terrain: TerrainModel,
    pub initial_height_mm: f64,
    pub commanded_height_mm: f64,
    pub gains: PidGains<f64>,
    pub servo_limits: ServoLimits,
    pub trial_timeout_s: f64,
    /// Carriage-locked settling phase duration, seconds.
    pub settle_s: f64,
    /// Sensor frame recording period, seconds.
    pub frame_period_s: f64,
    pub cam_mode: SplineMode,
    /// Polar table resolution used by both plant and controller.
    pub table_samples: usize,
    /// Resample slip around the terrain mean at every control tick instead of
    /// once per trial.
    pub per_step_slip_noise: bool,
    /// Route controller sensing through wire encode/decode.
    pub wire_loop: bool,
    pub disturbances: Vec<Disturbance>,
}

impl SimConfig {
    /// Trial config with testbed defaults for one terrain and height.
    pub fn for_terrain(terrain: TerrainModel, commanded_height_mm: f64, seed: u64) -> Self {
        let gains = PidGains::<f64>::default();
        Self {
            stroke_m: DEFAULT_STROKE_M,
            nominal_surface_speed_mps: DEFAULT_SURFACE_SPEED_MPS,
            wheel_radius_m: WheelGeometry::<f64>::default().radius_m,
            dt_s: DEFAULT_INNER_DT_S,
            seed,
            terrain,
            initial_height_mm: 0.0,
            commanded_height_mm,
            frame_period_s: gains.ts_s,
            gains,
            servo_limits: ServoLimits::default(),
            trial_timeout_s: DEFAULT_TRIAL_TIMEOUT_S,
            settle_s: DEFAULT_SETTLE_S,
            cam_mode: SplineMode::ContinuityEnforced,
            table_samples: 4096,
            per_step_slip_noise: false,
            wire_loop: false,
            disturbances: Vec::new(),
        }
    }

    /// Checks ranges and step alignment before any stepping.
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("stroke_m", self.stroke_m),
            ("nominal_surface_speed_mps", self.nominal_surface_speed_mps),
            ("wheel_radius_m", self.wheel_radius_m),
            ("dt_s", self.dt_s),
            ("trial_timeout_s", self.trial_timeout_s),
            ("frame_period_s", self.frame_period_s),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(SimError::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.settle_s.is_finite() || self.settle_s < 0.0 {
            return Err(SimError::Config(format!(
                "settle_s must be non-negative, got {}",
                self.settle_s
            )));
        }
        for (name, h) in [
            ("initial_height_mm", self.initial_height_mm),
            ("commanded_height_mm", self.commanded_height_mm),
        ] {
            if !h.is_finite() || !(0.0..=HEIGHT_MAX_MM).contains(&h) {
                return Err(SimError::Config(format!(
                    "{name} must lie in [0, {HEIGHT_MAX_MM}] mm, got {h}"
                )));
            }
        }
        if self.servo_limits.max_rate_rad_s <= 0.0 || self.servo_limits.command_slew_per_s <= 0.0 {
            return Err(SimError::Config("servo limits must be positive".into()));
        }
        self.gains.validate()?;
        self.terrain.validate()?;
        steps_per(self.gains.ts_s, self.dt_s, "control period")?;
        steps_per(self.frame_period_s, self.dt_s, "frame period")?;
        Ok(())
    }
}

/// Whole multiple of the inner step, validated to 1 ns.
fn steps_per(period_s: f64, dt_s: f64, what: &str) -> Result<u64, SimError> {
    let k = (period_s / dt_s).round();
    if k < 1.0 || (k * dt_s - period_s).abs() > 1e-9 {
        return Err(SimError::Config(format!(
            "{what} {period_s} s is not a whole multiple of dt {dt_s} s"
        )));
    }
    Ok(k as u64)
}

/// One quantized sensor snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t_s: f64,
    pub motor_encoder_counts: i64,
    /// Absolute cam encoder reading, 0..=4095.
    pub cam_encoder_counts: u16,
    /// Carriage position in 5 um counts.
    pub linear_encoder_counts: i64,
    /// Bus current quantized to 1 mA.
    pub current_a: f64,
    pub flags: u8,
}

impl SensorFrame {
    /// Converts to the wire representation (microsecond timestamps, mA).
    pub fn to_wire(&self) -> Result<WireFrame, TelemetryError> {
        let motor = i32::try_from(self.motor_encoder_counts)
            .map_err(|_| TelemetryError::Io("motor counts exceed the i32 wire field".into()))?;
        let linear = i32::try_from(self.linear_encoder_counts)
            .map_err(|_| TelemetryError::Io("linear counts exceed the i32 wire field".into()))?;
        Ok(WireFrame {
            timestamp_us: (self.t_s * 1e6).round() as u64,
            motor_counts: motor,
            cam_counts: self.cam_encoder_counts,
            linear_counts: linear,
            current_ma: (self.current_a * 1e3).round().clamp(0.0, 65535.0) as u16,
            flags: self.flags,
        })
    }

    /// Reconstructs a frame from its wire representation.
    pub fn from_wire(wire: &WireFrame) -> Self {
        Self {
            t_s: wire.timestamp_us as f64 * 1e-6,
            motor_encoder_counts: wire.motor_counts as i64,
            cam_encoder_counts: wire.cam_counts,
            linear_encoder_counts: wire.linear_counts as i64,
            current_a: wire.current_ma as f64 * 1e-3,
            flags: wire.flags,
        }
    }
}

/// Why a trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    Immobilized,
    TimedOut,
}

/// One simulated trial: recorded frames plus derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: SimConfig,
    pub frames: Vec<SensorFrame>,
    pub completed: bool,
    pub end_reason: EndReason,
    /// Slip the plant actually applied this trial.
    pub slip_true: f64,
    /// Slip reconstructed from quantized sensors; completed trials only.
    pub slip_est: Option<f64>,
    /// Drawbar energy over the recorded stroke, joules; completed only.
    pub energy_j: Option<f64>,
    /// Interpolated stroke completion time, seconds; completed only.
    pub travel_time_s: Option<f64>,
}

/// Trial log header line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLogHeader {
    pub schema: u32,
    pub config: SimConfig,
}

/// Trial log footer line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLogFooter {
    pub completed: bool,
    pub end_reason: EndReason,
    pub slip_true: f64,
    pub slip_est: Option<f64>,
    pub energy_j: Option<f64>,
    pub travel_time_s: Option<f64>,
}

impl TrialRecord {
    /// Writes the record as a line-delimited log (header, frames, footer).
    pub fn write_log(&self, path: &Path) -> Result<(), SimError> {
        let header = TrialLogHeader { schema: TRIAL_LOG_SCHEMA, config: self.config.clone() };
        let footer = TrialLogFooter {
            completed: self.completed,
            end_reason: self.end_reason,
            slip_true: self.slip_true,
            slip_est: self.slip_est,
            energy_j: self.energy_j,
            travel_time_s: self.travel_time_s,
        };
        telemetry::write_trial_log(path, &header, &self.frames, &footer)?;
        Ok(())
    }

    /// Reads a record back from [`TrialRecord::write_log`] output.
    pub fn read_log(path: &Path) -> Result<Self, SimError> {
        let (header, frames, footer): (TrialLogHeader, Vec<SensorFrame>, TrialLogFooter) =
            telemetry::read_trial_log(path)?;
        if header.schema != TRIAL_LOG_SCHEMA {
            return Err(SimError::Config(format!(
                "unsupported trial log schema {}",
                header.schema
            )));
        }
        Ok(Self {
            config: header.config,
            frames,
            completed: footer.completed,
            end_reason: footer.end_reason,
            slip_true: footer.slip_true,
            slip_est: footer.slip_est,
            energy_j: footer.energy_j,
            travel_time_s: footer.travel_time_s,
        })
    }
}

/// Plant state stepped at the inner dt.
#[derive(Debug, Clone)]
pub struct SimState {
    table: PolarTable<f64>,
    steps: u64,
    moving_steps: u64,
    wheel_angle_rad: f64,
    offset_rad: f64,
    linear_pos_m: f64,
    command_u: f64,
    target_u: f64,
    slip: f64,
    immobilized: bool,
    stalled: bool,
    carriage_locked: bool,
    rng: ChaCha8Rng,
}

impl SimState {
    /// Builds the plant at the configured initial height with slip sampled
    /// for that height.
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        let profile = CamProfile::from_printed_table(config.cam_mode);
        let table = profile.sample_polar(config.table_samples)?;
        Self::with_table(config, table)
    }

    /// [`SimState::new`] with a prebuilt polar table (campaigns share one).
    pub fn with_table(config: &SimConfig, table: PolarTable<f64>) -> Result<Self, SimError> {
        config.validate()?;
        let offset_rad = table.offset_from_height(config.initial_height_mm)?;
        let mut state = Self {
            table,
            steps: 0,
            moving_steps: 0,
            wheel_angle_rad: 0.0,
            offset_rad,
            linear_pos_m: 0.0,
            command_u: 0.0,
            target_u: 0.0,
            slip: 0.0,
            immobilized: false,
            stalled: false,
            carriage_locked: false,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        state.resample_slip(config)?;
        Ok(state)
    }

    /// Stroke-phase time, seconds.
    pub fn t_s(&self, config: &SimConfig) -> f64 {
        self.steps as f64 * config.dt_s
    }

    pub fn linear_position_m(&self) -> f64 {
        self.linear_pos_m
    }

    pub fn offset_rad(&self) -> f64 {
        self.offset_rad
    }

    /// Grouser height the plant is physically at, mm.
    pub fn ground_truth_height_mm(&self) -> Result<f64, SimError> {
        Ok(self.table.height_from_offset(self.offset_rad)?)
    }

    pub fn slip(&self) -> f64 {
        self.slip
    }

    pub fn is_immobilized(&self) -> bool {
        self.immobilized
    }

    pub fn table(&self) -> &PolarTable<f64> {
        &self.table
    }

    /// Locks or releases the carriage (locked during the settle phase).
    pub fn set_carriage_locked(&mut self, locked: bool) {
        self.carriage_locked = locked;
    }

    /// Sets the controller output the servo slews toward.
    pub fn set_actuator_command(&mut self, u: f64) {
        self.target_u = u;
    }

    /// Perturbs the cam-wheel offset, clamped at the slot hard stops.
    pub fn inject_backdrive(&mut self, delta_theta_rad: f64) {
        let (lo, hi) = self.table.span_rad();
        self.offset_rad = (self.offset_rad + delta_theta_rad).clamp(lo, hi);
    }

    /// Redraws slip and the immobilization latch from the current height.
    fn resample_slip(&mut self, config: &SimConfig) -> Result<(), SimError> {
        let height = self.table.height_from_offset(self.offset_rad)?;
        self.immobilized = config.terrain.is_immobilizing(height);
        self.stalled = self.immobilized
            && config
                .terrain
                .immobilization
                .map(|i| i.mode == ImmobilizationMode::Stall)
                .unwrap_or(false);
        self.slip = config.terrain.sample_slip(height, &mut self.rng)?;
        Ok(())
    }

    /// Rebases the state for the stroke phase: time and position restart at
    /// zero and the trial slip is drawn at the settled height.
    pub fn rebase_for_stroke(&mut self, config: &SimConfig) -> Result<(), SimError> {
        self.steps = 0;
        self.moving_steps = 0;
        self.linear_pos_m = 0.0;
        self.resample_slip(config)
    }

    /// Effective wheel speed, rad/s (zero when torque-stalled).
    fn omega_rad_s(&self, config: &SimConfig) -> f64 {
        if self.stalled {
            0.0
        } else {
            config.nominal_surface_speed_mps / config.wheel_radius_m
        }
    }

    /// Advances one inner step and returns the post-step sensor frame.
    pub fn step(&mut self, config: &SimConfig) -> SensorFrame {
        let dt = config.dt_s;
        let omega = self.omega_rad_s(config);
        self.wheel_angle_rad += omega * dt;
        if !self.carriage_locked {
            self.moving_steps += 1;
            let advance_m = config.wheel_radius_m * omega * (1.0 - self.slip) * dt;
            if config.per_step_slip_noise {
                self.linear_pos_m += advance_m;
            } else {
                // Constant per-trial slip: derive position multiplicatively so
                // count boundaries land exactly (0.5 m/s for 1 s = 100000).
                self.linear_pos_m = self.moving_steps as f64 * advance_m;
            }
        }
        let max_du = config.servo_limits.command_slew_per_s * dt;
        self.command_u += (self.target_u - self.command_u).clamp(-max_du, max_du);
        let (lo, hi) = self.table.span_rad();
        self.offset_rad = (self.offset_rad
            - config.servo_limits.max_rate_rad_s * self.command_u * dt)
            .clamp(lo, hi);
        self.steps += 1;
        self.sense(config)
    }

    /// Reads all four sensors at their hardware quantization.
    pub fn sense(&self, config: &SimConfig) -> SensorFrame {
        // Nudge quantizer inputs by a billionth of a count so values that
        // are exact count boundaries in real arithmetic do not fall one
        // count short after floating-point division.
        let quantize = |x: f64| (x + 1e-9).floor();
        let tau = std::f64::consts::TAU;
        let motor = quantize(self.wheel_angle_rad / tau * WHEEL_COUNTS_PER_REV) as i64;
        let cam_abs = (self.wheel_angle_rad + self.offset_rad).rem_euclid(tau);
        let cam = (quantize(cam_abs / tau * CAM_ENCODER_COUNTS as f64) as u16)
            .min(CAM_ENCODER_COUNTS - 1);
        let linear = quantize(self.linear_pos_m / LINEAR_M_PER_COUNT) as i64;
        let slip_for_current = if self.immobilized { 1.0 } else { self.slip };
        let current =
            config.terrain.current.instantaneous(slip_for_current, self.t_s(config));
        let mut flags = 0u8;
        if self.command_u.abs() >= config.gains.output_limit - 1e-9 {
            flags |= FLAG_SATURATED;
        }
        if self.immobilized {
            flags |= FLAG_IMMOBILIZED;
        }
        if self.stalled {
            flags |= FLAG_STALLED;
        }
        SensorFrame {
            t_s: self.t_s(config),
            motor_encoder_counts: motor,
            cam_encoder_counts: cam,
            linear_encoder_counts: linear,
            current_a: (current * 1e3).round().max(0.0) / 1e3,
            flags,
        }
    }

    /// Height the controller sees, from quantized counts through the table.
    pub fn measured_height_mm(&self, frame: &SensorFrame) -> Result<f64, ControlError> {
        measure_height(
            frame.motor_encoder_counts,
            frame.cam_encoder_counts,
            &self.table,
            DEFAULT_DESYNC_TOLERANCE_RAD,
        )
    }
}

/// Controller sensing path: optionally round-trips the frame over the wire.
fn controller_frame(state: &SimState, config: &SimConfig) -> Result<SensorFrame, SimError> {
    let frame = state.sense(config);
    if !config.wire_loop {
        return Ok(frame);
    }
    let bytes = telemetry::encode_frame(&frame.to_wire()?)?;
    Ok(SensorFrame::from_wire(&telemetry::decode_frame(&bytes)?))
}

/// Runs one closed-loop trial: settle, stroke, then metric extraction.
pub fn run_trial(config: &SimConfig) -> Result<TrialRecord, SimError> {
    let profile = CamProfile::from_printed_table(config.cam_mode);
    let table = profile.sample_polar(config.table_samples)?;
    run_trial_with_table(config, table)
}

/// [`run_trial`] with a prebuilt polar table.
pub fn run_trial_with_table(
    config: &SimConfig,
    table: PolarTable<f64>,
) -> Result<TrialRecord, SimError> {
    let mut state = SimState::with_table(config, table)?;
    let control_every = steps_per(config.gains.ts_s, config.dt_s, "control period")?;
    let frame_every = steps_per(config.frame_period_s, config.dt_s, "frame period")?;
    let mut pid = PidState::<f64>::new();

    state.set_carriage_locked(true);
    let settle_steps = (config.settle_s / config.dt_s).round() as u64;
    for k in 0..settle_steps {
        if k % control_every == 0 {
            let frame = controller_frame(&state, config)?;
            let measured = state.measured_height_mm(&frame)?;
            let u = pid_step(&config.gains, &mut pid, config.commanded_height_mm - measured);
            state.set_actuator_command(u);
        }
        state.step(config);
    }
    state.rebase_for_stroke(config)?;
    state.set_carriage_locked(false);

    let mut disturbances = config.disturbances.clone();
    disturbances.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
    let mut next_disturbance = 0usize;

    let mut frames = vec![state.sense(config)];
    let mut progress_mark_m = 0.0;
    let mut progress_t_s = 0.0;
    let mut step_idx: u64 = 0;
    let end_reason;
    loop {
        if step_idx % control_every == 0 {
            let frame = controller_frame(&state, config)?;
            let measured = state.measured_height_mm(&frame)?;
            let u = pid_step(&config.gains, &mut pid, config.commanded_height_mm - measured);
            state.set_actuator_command(u);
            if config.per_step_slip_noise && step_idx > 0 {
                state.resample_slip(config)?;
            }
        }
        let frame = state.step(config);
        step_idx += 1;
        let t = state.t_s(config);
        while next_disturbance < disturbances.len() && disturbances[next_disturbance].at_s <= t {
            state.inject_backdrive(disturbances[next_disturbance].delta_theta_rad);
            next_disturbance += 1;
        }
        if step_idx % frame_every == 0 {
            frames.push(frame);
        }
        if state.linear_position_m() >= config.stroke_m {
            if step_idx % frame_every != 0 {
                frames.push(frame);
            }
            end_reason = EndReason::Completed;
            break;
        }
        if state.linear_position_m() - progress_mark_m >= STALL_PROGRESS_M {
            progress_mark_m = state.linear_position_m();
            progress_t_s = t;
        } else if t - progress_t_s >= STALL_WINDOW_S {
            end_reason = EndReason::Immobilized;
            break;
        }
        if t >= config.trial_timeout_s {
            end_reason = EndReason::TimedOut;
            break;
        }
    }

    let completed = end_reason == EndReason::Completed;
    let (slip_est, energy_j, travel_time_s) = if completed {
        (
            Some(estimate_slip(&frames, config)?),
            Some(estimate_energy(&frames, config)?),
            estimate_travel_time(&frames, config)?,
        )
    } else {
        (None, None, None)
    };
    Ok(TrialRecord {
        config: config.clone(),
        frames,
        completed,
        end_reason,
        slip_true: state.slip(),
        slip_est,
        energy_j,
        travel_time_s,
    })
}

/// Whole-stroke slip from first and last frame count deltas.
fn estimate_slip(frames: &[SensorFrame], config: &SimConfig) -> Result<f64, SimError> {
    let (first, last) = (&frames[0], &frames[frames.len() - 1]);
    let dt = last.t_s - first.t_s;
    if dt <= 0.0 {
        return Err(SimError::Config("trial too short for slip estimation".into()));
    }
    let tau = std::f64::consts::TAU;
    let v = (last.linear_encoder_counts - first.linear_encoder_counts) as f64
        * LINEAR_M_PER_COUNT
        / dt;
    let omega = (last.motor_encoder_counts - first.motor_encoder_counts) as f64
        / WHEEL_COUNTS_PER_REV
        * tau
        / dt;
    Ok(slip_ratio(v, omega, config.wheel_radius_m)?.slip)
}

/// Simpson drawbar energy over the uniformly spaced recorded frames.
fn estimate_energy(frames: &[SensorFrame], config: &SimConfig) -> Result<f64, SimError> {
    let uniform = uniform_prefix_len(frames, config.frame_period_s);
    let currents: Vec<f64> = frames[..uniform].iter().map(|f| f.current_a).collect();
    Ok(drawbar_energy(&currents, config.frame_period_s, BUS_VOLTAGE_V)?.joules)
}

/// Stroke-crossing time from the recorded frames.
fn estimate_travel_time(
    frames: &[SensorFrame],
    config: &SimConfig,
) -> Result<Option<f64>, SimError> {
    let times: Vec<f64> = frames.iter().map(|f| f.t_s).collect();
    let positions: Vec<f64> =
        frames.iter().map(|f| f.linear_encoder_counts as f64 * LINEAR_M_PER_COUNT).collect();
    Ok(travel_time(&times, &positions, config.stroke_m)?)
}

/// Leading frame count whose spacing matches the frame period (the appended
/// stroke-crossing frame may sit off the uniform grid).
fn uniform_prefix_len(frames: &[SensorFrame], frame_period_s: f64) -> usize {
    let mut n = 1;
    while n < frames.len() && (frames[n].t_s - frames[n - 1].t_s - frame_period_s).abs() < 1e-9 {
        n += 1;
    }
    n
}
