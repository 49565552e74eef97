//! Acceptance gate: one test per release criterion, each printing a PASS
//! line (run with `--nocapture` to see them; a failing criterion fails its
//! test). Numbers come from the published hardware and trial statistics.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grouser_core::cam::{deploy_span_rad, CamProfile, SplineMode};
use grouser_core::campaign::{run_campaign, CampaignConfig};
use grouser_core::controller::{pid_step, PidState};
use grouser_core::estimators::drawbar_energy;
use grouser_core::psd::volume_fraction;
use grouser_core::scaling::{
    fit_family, predict_height, reference_validation_measurements, validate_table, FitFamily,
    FitMode, OptimumPoint, ScalingFit,
};
use grouser_core::sim::{run_trial, Disturbance, SimConfig, SimState};
use grouser_core::telemetry::{crc16_ccitt_false, decode_frame, encode_frame, WireFrame};
use grouser_core::terrain::{
    CurrentModel, Provenance, SlipAnchor, TerrainModel,
};
use grouser_core::wheel::{gear_ratio, grouser_spacing_bound, output_torque};

fn pass(line: &str) {
    println!("[PASS] {line}");
}

/// Noise-free flat-slip terrain for plant kinematics checks.
fn quiet_terrain(slip: f64) -> TerrainModel {
    TerrainModel {
        name: "quiet".into(),
        packing: None,
        anchors: vec![
            SlipAnchor { height_mm: 0.0, slip_mean: slip, provenance: Provenance::Interpolated },
            SlipAnchor { height_mm: 17.5, slip_mean: slip, provenance: Provenance::Interpolated },
        ],
        slip_noise_sigma: 0.0,
        immobilization: None,
        current: CurrentModel {
            baseline_a: 0.8,
            slip_gain_a: 1.5,
            spike_rate_hz: 0.0,
            spike_amp_a: 0.0,
        },
        d50_mm: None,
    }
}

fn reference_points() -> Vec<OptimumPoint> {
    [("loose_sand", 0.33, 17.5), ("pea_gravel", 9.7, 7.0), ("coarse_rock", 35.1, 7.0)]
        .into_iter()
        .map(|(terrain, d50_mm, h_star_mm)| OptimumPoint {
            terrain: terrain.into(),
            d50_mm,
            h_star_mm,
            source: Provenance::Published,
        })
        .collect()
}

fn published_fit() -> ScalingFit<f64> {
    ScalingFit {
        family: FitFamily::Power,
        a: 13.489,
        b: -0.228,
        r_squared_fit_space: 0.971,
        r_squared_original: 0.971,
        mode: FitMode::OriginalSpace,
    }
}

#[test]
fn acceptance_01_gear_ratio_and_output_torque_exact() {
    let ratio: f64 = gear_ratio(90, 12).unwrap();
    assert_eq!(ratio, -7.5);
    assert_eq!(output_torque(ratio, 45.0), 337.5);
    pass("01 gear ratio -7.5 and output torque 337.5 kg*cm, exact");
}

#[test]
fn acceptance_02_volume_fractions_match_packing_table() {
    let loose = volume_fraction(1520.0, 2650.0).unwrap();
    let dense = volume_fraction(1593.0, 2650.0).unwrap();
    assert!((loose - 0.574).abs() <= 0.001, "loose {loose}");
    assert!((dense - 0.601).abs() <= 0.001, "dense {dense}");
    pass("02 volume fractions 0.574 / 0.601 within 0.001");
}

#[test]
fn acceptance_03_spline_endpoints_and_junction_mismatch() {
    let profile = CamProfile::<f64>::from_printed_table(SplineMode::AsPrinted);
    assert_eq!(profile.eval(0.0).unwrap(), 19.0);
    let junction_x = profile.segments()[1].x_lo;
    assert_eq!(profile.eval_segment(1, junction_x).unwrap(), 23.5);
    let reports = profile.junction_reports();
    assert_eq!(reports.len(), 1);
    let mismatch = reports[0].mismatch_mm;
    assert!((mismatch - 4.03).abs() <= 0.01, "mismatch {mismatch}");
    let left = profile.eval_segment(0, junction_x).unwrap();
    assert!((left - 19.4672).abs() < 1e-4, "left {left}");
    assert!((mismatch - (23.5 - left)).abs() < 1e-12);
    assert!(reports[0].flagged);
    pass("03 spline endpoints 19.0 / 23.5 exact, junction mismatch 4.03 mm");
}

#[test]
fn acceptance_04_kinematic_endpoints_and_inverse_round_trip() {
    let profile = CamProfile::<f64>::from_printed_table(SplineMode::ContinuityEnforced);
    let table = profile.sample_polar(4096).unwrap();
    let h_retracted = table.height_from_offset(0.0).unwrap();
    let h_deployed = table.height_from_offset(-deploy_span_rad::<f64>()).unwrap();
    assert!(h_retracted.abs() <= 0.01, "retracted height {h_retracted}");
    assert!((h_deployed - 17.5).abs() <= 0.01, "deployed height {h_deployed}");
    let mut worst = 0.0_f64;
    for i in 0..1000 {
        let h = 17.5 * i as f64 / 999.0;
        let offset = table.offset_from_height(h).unwrap();
        let back = table.height_from_offset(offset).unwrap();
        worst = worst.max((back - h).abs());
    }
    assert!(worst <= 0.01, "worst round-trip error {worst} mm");
    pass("04 kinematic endpoints 0 / 17.5 mm and 1000-sample round trip within 0.01 mm");
}

#[test]
fn acceptance_05_controller_settles_and_rejects_backdrive() {
    // Step response: grousers retracted, command full deployment, carriage
    // locked as in the per-trial settle phase.
    let config = SimConfig::for_terrain(quiet_terrain(0.0), 17.5, 1);
    let mut state = SimState::new(&config).unwrap();
    state.set_carriage_locked(true);
    let control_every = (config.gains.ts_s / config.dt_s).round() as u64;
    let mut pid = PidState::<f64>::new();
    let mut settled_at = None;
    for k in 0..3000u64 {
        if k % control_every == 0 {
            let frame = state.sense(&config);
            let measured = state.measured_height_mm(&frame).unwrap();
            let u = pid_step(&config.gains, &mut pid, config.commanded_height_mm - measured);
            state.set_actuator_command(u);
        }
        state.step(&config);
        let err = (state.ground_truth_height_mm().unwrap() - 17.5).abs();
        match settled_at {
            None if err <= 0.1 => settled_at = Some(k),
            Some(_) => assert!(err <= 0.1, "error {err} mm left the band at step {k}"),
            None => {}
        }
    }
    let settled_at = settled_at.expect("step response settled") as f64 * config.dt_s;
    assert!(settled_at < 3.0);

    // Backdrive rejection: 5 degree cam disturbance mid-stroke.
    let mut disturbed = SimConfig::for_terrain(quiet_terrain(0.0), 10.5, 1);
    disturbed.stroke_m = 1.0;
    disturbed.disturbances = vec![Disturbance { at_s: 0.4, delta_theta_rad: 5f64.to_radians() }];
    let record = run_trial(&disturbed).unwrap();
    assert!(record.completed);
    let probe = SimState::new(&disturbed).unwrap();
    let mut spike = 0.0_f64;
    for frame in &record.frames {
        let err = (probe.measured_height_mm(frame).unwrap() - 10.5).abs();
        if (0.4..1.4).contains(&frame.t_s) {
            spike = spike.max(err);
        } else if frame.t_s >= 1.4 {
            assert!(err <= 0.1, "error {err} mm at t={} after recovery", frame.t_s);
        }
    }
    assert!(spike > 0.1, "backdrive injection had no effect (spike {spike})");
    pass(&format!(
        "05 step settles to 0.1 mm in {settled_at:.2} s and holds; 5 deg backdrive recovers"
    ));
}

#[test]
fn acceptance_06_simpson_energy_identities() {
    let constant = drawbar_energy(&vec![1.0; 1001], 0.001, 12.0).unwrap();
    assert_eq!(constant.joules, 12.0);
    assert!(!constant.mixed_rule_tail);

    // Simpson integrates cubics exactly: i(t) = t^3 - t^2 + 2 over [0, 2].
    let dt = 0.01;
    let currents: Vec<f64> =
        (0..=200).map(|k| (k as f64 * dt).powi(3) - (k as f64 * dt).powi(2) + 2.0).collect();
    let cubic = drawbar_energy(&currents, dt, 12.0).unwrap();
    let analytic = 12.0 * (2f64.powi(4) / 4.0 - 2f64.powi(3) / 3.0 + 2.0 * 2.0);
    assert!((cubic.joules - analytic).abs() < 1e-9, "{} vs {analytic}", cubic.joules);

    // Seeded smooth random integrand against its antiderivative.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let terms: Vec<(f64, f64, f64)> = (1..=5)
        .map(|k| (rng.random_range(0.1..1.0), k as f64, rng.random_range(0.0..1.0)))
        .collect();
    let dt = 5e-4;
    let n = 2000;
    let series: Vec<f64> = (0..=n)
        .map(|j| {
            let t = j as f64 * dt;
            2.0 + terms.iter().map(|&(a, w, p)| a * (w * t + p).sin()).sum::<f64>()
        })
        .collect();
    let t_end = n as f64 * dt;
    let exact: f64 = 2.0 * t_end
        + terms.iter().map(|&(a, w, p)| a / w * (p.cos() - (w * t_end + p).cos())).sum::<f64>();
    let smooth = drawbar_energy(&series, dt, 12.0).unwrap();
    let rel = (smooth.joules - 12.0 * exact).abs() / (12.0 * exact);
    assert!(rel < 1e-6, "relative error {rel}");
    pass("06 Simpson energy: 12 J exact, cubic exact, smooth random within 1e-6 relative");
}

#[test]
fn acceptance_07_zero_slip_linear_count_rate_exact() {
    let config = SimConfig::for_terrain(quiet_terrain(0.0), 0.0, 1);
    let mut state = SimState::new(&config).unwrap();
    for _ in 0..1000 {
        state.step(&config);
    }
    let frame = state.sense(&config);
    assert_eq!(frame.linear_encoder_counts, 100_000);
    assert!((frame.t_s - 1.0).abs() < 1e-12);
    pass("07 zero-slip travel at 0.5 m/s: 100000 linear counts/s exactly");
}

#[test]
fn acceptance_08_predictions_from_published_constants() {
    let fit = published_fit();
    let cases = [(35.1, 6.10, 0.03), (9.7, 7.93, 0.03), (0.33, 17.4, 0.01)];
    for (d50, quoted, tol) in cases {
        let h = predict_height(&fit, d50).unwrap().height_mm;
        assert!(
            (h - quoted).abs() <= tol * quoted,
            "D={d50}: predicted {h} vs quoted {quoted} outside {:.0}%",
            tol * 100.0
        );
    }
    pass("08 predictions 6.10 / 7.93 / 17.4 mm within 3% / 3% / 1%");
}

#[test]
fn acceptance_09_power_fit_property_and_family_ordering() {
    let points = reference_points();
    // Independent closed-form least squares on the (ln D, ln h) pairs.
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.d50_mm.ln()).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.h_star_mm.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for p in &points {
        let dx = p.d50_mm.ln() - mean_x;
        sxx += dx * dx;
        sxy += dx * (p.h_star_mm.ln() - mean_y);
    }
    let b_oracle = sxy / sxx;
    let a_oracle = (mean_y - b_oracle * mean_x).exp();

    let power = fit_family(&points, FitFamily::Power, FitMode::Linearized).unwrap();
    assert!((power.a - a_oracle).abs() < 1e-9, "a {} vs oracle {a_oracle}", power.a);
    assert!((power.b - b_oracle).abs() < 1e-9, "b {} vs oracle {b_oracle}", power.b);
    assert!((12.5..=14.5).contains(&power.a), "a = {}", power.a);
    assert!((-0.24..=-0.20).contains(&power.b), "b = {}", power.b);

    let log = fit_family(&points, FitFamily::Logarithmic, FitMode::Linearized).unwrap();
    let exp = fit_family(&points, FitFamily::Exponential, FitMode::Linearized).unwrap();
    assert!(power.r_squared_original > log.r_squared_original);
    assert!(log.r_squared_original > exp.r_squared_original);
    pass("09 log-log power fit matches closed-form oracle; R2 order power > log > exp");
}

#[test]
fn acceptance_10_validation_report_percent_changes() {
    let report = validate_table(
        &published_fit(),
        &reference_validation_measurements(),
        &["coarse_rock", "pea_gravel", "loose_sand", "dense_sand"],
    );
    assert!(!report.partial());
    let expected =
        [("coarse_rock", 6.8), ("pea_gravel", 5.6), ("loose_sand", -0.15), ("dense_sand", -0.03)];
    for (terrain, quoted) in expected {
        let row = report
            .rows
            .iter()
            .find(|r| r.measurement.terrain == terrain)
            .unwrap_or_else(|| panic!("missing row {terrain}"));
        assert!(
            (row.percent_change - quoted).abs() <= 0.1,
            "{terrain}: {} vs {quoted}",
            row.percent_change
        );
    }
    pass("10 validation percent changes 6.8 / 5.6 / -0.15 / -0.03 within 0.1 pp");
}

#[test]
fn acceptance_11_default_campaign_statistics() {
    let config = CampaignConfig::default();
    let report = run_campaign(&config).unwrap();
    assert_eq!(report.total_trials, 750);
    assert_eq!(report.cells.len(), 30);
    assert!(report.cells.iter().all(|c| c.n_trials == 25));
    assert_eq!(report.cells.iter().map(|c| c.n_faulted).sum::<usize>(), 0);

    let best: HashMap<&str, f64> =
        report.optima.iter().map(|o| (o.terrain.as_str(), o.best_height_mm)).collect();
    assert_eq!(best["vinyl"], 3.5);
    assert_eq!(best["pea_gravel"], 7.0);
    assert_eq!(best["coarse_rock"], 7.0);
    assert_eq!(best["loose_sand"], 17.5);
    assert_eq!(best["dense_sand"], 17.5);

    let slip_stat = |terrain: &str, h: f64| {
        report.cell(terrain, h).unwrap().slip.unwrap_or_else(|| panic!("no slip at {terrain} {h}"))
    };
    let loose_mean = slip_stat("loose_sand", 17.5).mean;
    let budget = 3.0 * 0.0227 / 25f64.sqrt();
    assert!((loose_mean - 0.3881).abs() <= budget, "loose mean {loose_mean}");

    for (terrain, h, sigma) in [
        ("vinyl", 3.5, 0.0403),
        ("loose_sand", 17.5, 0.0227),
        ("dense_sand", 17.5, 0.0228),
        ("pea_gravel", 7.0, 0.0181),
        ("coarse_rock", 7.0, 0.0079),
    ] {
        let sd = slip_stat(terrain, h).std_dev.unwrap();
        assert!((sd - sigma).abs() <= 0.30 * sigma, "{terrain} sd {sd} vs sigma {sigma}");
    }

    let reduction = |terrain: &str, from_h: f64, to_h: f64| {
        100.0 * (1.0 - slip_stat(terrain, to_h).mean / slip_stat(terrain, from_h).mean)
    };
    let checks = [
        ("loose_sand", 3.5, 17.5, 58.0),
        ("pea_gravel", 0.0, 7.0, 41.3),
        ("coarse_rock", 3.5, 7.0, 34.6),
    ];
    for (terrain, from_h, to_h, quoted) in checks {
        let delta = reduction(terrain, from_h, to_h);
        assert!((delta - quoted).abs() <= 1.0, "{terrain} reduction {delta} vs {quoted}");
    }
    pass("11 750-trial campaign: argmins, loose-sand mean, sigmas, consistency deltas");
}

#[test]
fn acceptance_12_telemetry_round_trip_bit_flips_and_golden() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100_000 {
        let frame = WireFrame {
            timestamp_us: rng.random(),
            motor_counts: rng.random(),
            cam_counts: rng.random_range(0..=4095),
            linear_counts: rng.random(),
            current_ma: rng.random(),
            flags: rng.random(),
        };
        let decoded = decode_frame(&encode_frame(&frame).unwrap()).unwrap();
        assert_eq!(decoded, frame);
    }

    let frame = WireFrame {
        timestamp_us: 0x0123_4567_89AB_CDEF,
        motor_counts: -123_456,
        cam_counts: 2048,
        linear_counts: 86_500,
        current_ma: 1_250,
        flags: 0b0101,
    };
    let bytes = encode_frame(&frame).unwrap();
    for byte in 0..bytes.len() {
        for bit in 0..8 {
            let mut corrupted = bytes;
            corrupted[byte] ^= 1 << bit;
            assert!(
                decode_frame(&corrupted).is_err(),
                "flip of byte {byte} bit {bit} went undetected"
            );
        }
    }

    assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
    let zero = WireFrame {
        timestamp_us: 0,
        motor_counts: 0,
        cam_counts: 0,
        linear_counts: 0,
        current_ma: 0,
        flags: 0,
    };
    let golden: String = encode_frame(&zero).unwrap().iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(golden, "aa5501000000000000000000000000000000000000000000b9f6");
    pass("12 telemetry: 100000-frame round trip, all 208 bit flips detected, golden stable");
}

#[test]
fn acceptance_13_spacing_bound_value_and_monotonicity() {
    let bound: f64 = grouser_spacing_bound(0.0, 0.28, 0.0).unwrap();
    assert!((bound - 0.7990).abs() < 1e-4, "bound {bound}");
    assert!(bound > std::f64::consts::TAU / 16.0);

    let slips = [0.0, 0.2, 0.4, 0.6];
    let heights: Vec<f64> = (1..=20).map(|i| i as f64 * 0.02).collect();
    let sinkages = [0.0, 0.1, 0.3];
    for &z in &sinkages {
        for &h in &heights {
            for w in slips.windows(2) {
                let lo: f64 = grouser_spacing_bound(w[0], h, z).unwrap();
                let hi: f64 = grouser_spacing_bound(w[1], h, z).unwrap();
                assert!(hi > lo, "bound not increasing in slip at h={h} z={z}");
            }
        }
        for &s in &slips {
            for w in heights.windows(2) {
                let lo: f64 = grouser_spacing_bound(s, w[0], z).unwrap();
                let hi: f64 = grouser_spacing_bound(s, w[1], z).unwrap();
                assert!(hi > lo, "bound not increasing in height at s={s} z={z}");
            }
        }
    }
    for &s in &slips {
        for &h in &heights {
            for w in sinkages.windows(2) {
                let shallow: f64 = grouser_spacing_bound(s, h, w[0]).unwrap();
                let deep: f64 = grouser_spacing_bound(s, h, w[1]).unwrap();
                assert!(deep < shallow, "bound not decreasing in sinkage at s={s} h={h}");
            }
        }
    }
    pass("13 spacing bound 0.7990 rad > 2*pi/16; monotone in slip, height, sinkage");
}
