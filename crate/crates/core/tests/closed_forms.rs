mod common;

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use approx::assert_relative_eq;
use uav_insar::comm::{self, PowerMode, SlotProfile};
use uav_insar::geometry::{self, MissionConfig, Position};
use uav_insar::metrics::{self, MetricsError};
use uav_insar::{ExperimentConfig, SchemeId};

use common::*;

const XT: f64 = 20.0;

#[test]
fn along_track_grid() {
    let m = MissionConfig::new(3, 1.0, 4.3, XT, FRAC_PI_4).unwrap();
    let y = geometry::along_track_positions(&m);
    assert_eq!(y.len(), 3);
    assert_relative_eq!(y[1], 4.3);
    assert_relative_eq!(y[2], 8.6);

    let one = MissionConfig::new(1, 0.5, 9.0, XT, FRAC_PI_4).unwrap();
    assert_eq!(geometry::along_track_positions(&one), vec![0.0]);

    let full = MissionConfig::new(80, 1.0, 4.3, XT, FRAC_PI_4).unwrap();
    let y = geometry::along_track_positions(&full);
    assert_relative_eq!(*y.last().unwrap(), 79.0 * 4.3, max_relative = 1e-12);
    assert_relative_eq!(*y.last().unwrap(), 339.7, max_relative = 1e-12);
}

#[test]
fn ranges_and_angles() {
    let q = Position::new(-54.0, 74.0);
    assert_relative_eq!(geometry::slant_range(q, XT), 74.0 * SQRT_2, max_relative = 1e-12);
    assert!((geometry::slant_range(q, XT) - 104.652).abs() < 5e-4);
    assert_relative_eq!(geometry::slant_range(Position::new(XT, 31.0), XT), 31.0);
    assert!((geometry::slant_range(Position::new(-41.0, 61.0), XT) - 86.267).abs() < 5e-4);

    assert_relative_eq!(geometry::look_angle(q, XT), FRAC_PI_4, max_relative = 1e-12);
    let z = 37.0;
    let q40 = Position::new(XT - z * 40f64.to_radians().tan(), z);
    assert_relative_eq!(geometry::look_angle(q40, XT), 40f64.to_radians(), max_relative = 1e-12);
    let a = geometry::look_angle(Position::new(-22.0, 45.0), XT).to_degrees();
    assert_relative_eq!(a, (42.0f64 / 45.0).atan().to_degrees(), max_relative = 1e-12);
    assert!((a - 43.03).abs() < 5e-3);
}

#[test]
fn swath_examples() {
    let th = 33.44f64.to_radians();
    let s = geometry::swath_width(Position::new(-54.0, 74.0), XT, th);
    assert_relative_eq!(s, th * 74.0 * SQRT_2 / FRAC_PI_4.cos(), max_relative = 1e-12);
    assert!((s - 86.38).abs() < 5e-3 * 86.38);
    assert_relative_eq!(geometry::swath_width(Position::new(XT, 12.0), XT, th), th * 12.0, max_relative = 1e-12);
    let s2 = geometry::swath_width(Position::new(-41.0, 61.0), XT, th);
    assert!((s2 - 71.20).abs() < 5e-3 * 71.2);
}

#[test]
fn baselines() {
    assert_relative_eq!(geometry::baseline(Position::new(0.0, 10.0), Position::new(3.0, 14.0)), 5.0);
    assert_eq!(geometry::baseline(Position::new(1.0, 2.0), Position::new(1.0, 2.0)), 0.0);
    assert_relative_eq!(geometry::baseline(Position::new(-54.0, 74.0), Position::new(-50.0, 74.0)), 4.0);

    let on_los = Position::new(XT - 33.0 * FRAC_PI_4.tan(), 33.0);
    assert!(geometry::perpendicular_baseline(on_los, XT, FRAC_PI_4) < 1e-12);
    let b = geometry::perpendicular_baseline(Position::new(-22.0, 45.0), XT, FRAC_PI_4);
    assert_relative_eq!(b, 3.0 / SQRT_2, max_relative = 1e-12);
    assert!((b - 2.121).abs() < 5e-4);
}

#[test]
fn snr_examples() {
    let s = table_i();
    let mut r = s.radar;
    r.radar_constant = 1.0;
    assert_relative_eq!(metrics::monostatic_snr(1.0, &r), 1.0);
    r.radar_constant = 5e5;
    assert_relative_eq!(metrics::monostatic_snr(20.0, &r) / metrics::monostatic_snr(40.0, &r), 8.0, max_relative = 1e-12);

    let gm = s.radar.radar_constant;
    let r0 = 74.0 * SQRT_2;
    assert_relative_eq!(metrics::monostatic_snr(r0, &s.radar), gm / r0.powi(3), max_relative = 1e-12);
    assert!((r0.powi(3) - 1.1463e6).abs() < 2e-4 * 1.1463e6);

    r.radar_constant = 1e6;
    assert_relative_eq!(metrics::bistatic_snr_approx(100.0, 50.0, &r), 2.0, max_relative = 1e-12);
    assert_relative_eq!(metrics::bistatic_snr_approx(63.0, 63.0, &r), metrics::monostatic_snr(63.0, &r), max_relative = 1e-12);
    assert_relative_eq!(
        metrics::bistatic_snr_approx(70.0, 30.0, &r) / metrics::bistatic_snr_approx(70.0, 60.0, &r),
        2.0,
        max_relative = 1e-12
    );

    assert_relative_eq!(metrics::snr_decorrelation(1.0, 1.0), 0.5, max_relative = 1e-12);
    assert!(metrics::snr_decorrelation(1e15, 1e15) > 1.0 - 1e-14);
    let v = metrics::snr_decorrelation(10.0, 5.0);
    assert_relative_eq!(v, 1.0 / (1.1f64 * 1.2).sqrt(), max_relative = 1e-12);
    assert!((v - 0.8704).abs() < 5e-5);
}

#[test]
fn baseline_coherence_examples() {
    let s = table_i();
    let bp = s.radar.pulse_bandwidth / s.radar.center_frequency;
    assert_relative_eq!(bp, 1.2, max_relative = 1e-12);
    let q = Position::new(XT - 50.0, 50.0);
    assert_relative_eq!(metrics::baseline_decorrelation(q, XT, FRAC_PI_4, &s.radar).unwrap(), 1.0, max_relative = 1e-12);

    let x = metrics::look_angle_ratio(FRAC_PI_4, 40f64.to_radians());
    assert_relative_eq!(x, ratio_x(FRAC_PI_4, 40f64.to_radians()), max_relative = 1e-12);
    assert!((x - 1.04764).abs() < 1e-5);
    let z = 60.0;
    let q40 = Position::new(XT - z * 40f64.to_radians().tan(), z);
    assert_relative_eq!(
        metrics::baseline_decorrelation(q40, XT, FRAC_PI_4, &s.radar).unwrap(),
        f_of_x(x, bp),
        max_relative = 1e-12
    );

    let mut prev = f64::INFINITY;
    for i in 0..1000 {
        let x = 1.0 + i as f64 * 0.999e-3;
        let g = metrics::baseline_coherence_of_ratio(x, bp).unwrap();
        assert!(g < prev, "f not decreasing at X = {x}");
        prev = g;
    }
}

#[test]
fn inverse_examples() {
    let s = table_i();
    let bp = 1.2;
    assert_relative_eq!(metrics::inverse_baseline_decorrelation(1.0, &s.radar).unwrap(), 1.0, max_relative = 1e-12);
    let h = metrics::inverse_baseline_decorrelation(0.8, &s.radar).unwrap();
    assert_relative_eq!(h, h_of_gamma(0.8, bp), max_relative = 1e-12);
    assert!((f_of_x(h, bp) - 0.8).abs() <= 1e-10);
    assert!(matches!(
        metrics::inverse_baseline_decorrelation(0.3, &s.radar),
        Err(MetricsError::Domain { .. })
    ));
    let lo = f_of_x(2.0, bp);
    let mut prev = f64::INFINITY;
    for i in 1..=500 {
        let g = lo + (1.0 - lo) * i as f64 / 500.0;
        let x = metrics::inverse_baseline_decorrelation(g, &s.radar).unwrap();
        assert!(x < prev);
        prev = x;
    }
}

#[test]
fn height_of_ambiguity_examples() {
    let s = table_i();
    let r0 = 104.652;
    let h = metrics::height_of_ambiguity(r0, FRAC_PI_4, 1.0, &s.radar).unwrap();
    assert_relative_eq!(h, 0.12 * r0 * FRAC_PI_4.sin(), max_relative = 1e-12);
    assert!((h - 8.879).abs() < 2e-3);
    assert_relative_eq!(metrics::height_of_ambiguity(r0, FRAC_PI_4, 2.0, &s.radar).unwrap(), h / 2.0, max_relative = 1e-12);
    let b = h / 1.2;
    assert!((b - 7.399).abs() < 2e-3);
    assert_relative_eq!(metrics::height_of_ambiguity(r0, FRAC_PI_4, b, &s.radar).unwrap(), 1.2, max_relative = 1e-12);
    assert_eq!(
        metrics::height_of_ambiguity(r0, FRAC_PI_4, 0.0, &s.radar),
        Err(MetricsError::InfiniteHeightOfAmbiguity)
    );
}

#[test]
fn phase_and_height_error_examples() {
    assert_eq!(metrics::crb_phase_std(1.0, 4).unwrap(), 0.0);
    let a = 0.8 * 0.8 * 0.6;
    let v = metrics::crb_phase_std(a, 4).unwrap();
    assert_relative_eq!(v, crb(a, 4), max_relative = 1e-12);
    assert!((v - 0.8500).abs() < 5e-4);
    assert_relative_eq!(
        metrics::crb_phase_std(0.9, 16).unwrap(),
        metrics::crb_phase_std(0.9, 4).unwrap() / 2.0,
        max_relative = 1e-12
    );
    assert!(metrics::crb_phase_std(0.0, 4).is_err());

    assert_relative_eq!(metrics::pair_height_error(2.0 * PI, 1.0), 1.0, max_relative = 1e-12);
    let e = metrics::pair_height_error(8.879, 0.85);
    assert_relative_eq!(e, 8.879 * 0.85 / (2.0 * PI), max_relative = 1e-12);
    assert!((e - 1.2012).abs() < 5e-5);
    assert_eq!(metrics::pair_height_error(3.0, 0.0), 0.0);
}

#[test]
fn fusion_examples() {
    assert_relative_eq!(metrics::fused_height_error(0.3, 0.3), 0.3 / SQRT_2, max_relative = 1e-12);
    assert_relative_eq!(metrics::fused_height_error(3.0, 4.0), 2.4, max_relative = 1e-12);
    assert_relative_eq!(metrics::fused_height_error(0.7, 1e12), 0.7, max_relative = 1e-12);
    let w = [1.0 / 9.0, 1.0 / 16.0];
    assert_relative_eq!(metrics::weighted_fusion_error(&w, &[3.0, 4.0]), 2.4, max_relative = 1e-12);
}

#[test]
fn worst_case_bound_examples() {
    let s = table_i();
    let r0 = 104.652;
    let one = metrics::worst_case_height_error(r0, FRAC_PI_4, 5.0, 0.0, &s.radar, &s.limits).unwrap();
    let a = 0.8 * 0.8 * 0.6;
    let single = 0.12 * r0 * FRAC_PI_4.sin() / (2.0 * PI * 5.0 * a) * ((1.0 - a * a) / 8.0).sqrt();
    assert_relative_eq!(one, single, max_relative = 1e-12);
    let eq = metrics::worst_case_height_error(r0, FRAC_PI_4, 5.0, 5.0, &s.radar, &s.limits).unwrap();
    assert_relative_eq!(eq, single / SQRT_2, max_relative = 1e-12);

    // chained pair error at the worst coherence, then the fused equal-pair gain
    let b = 7.399;
    let v = metrics::worst_case_height_error(r0, FRAC_PI_4, b, b, &s.radar, &s.limits).unwrap();
    let chain = metrics::pair_height_error(metrics::height_of_ambiguity(r0, FRAC_PI_4, b, &s.radar).unwrap(), crb(a, 4)) / SQRT_2;
    assert_relative_eq!(v, chain, max_relative = 1e-12);
    assert_relative_eq!(v, bound(&s, r0, b, b), max_relative = 1e-12);
    assert!((v - 0.1148).abs() < 1e-4, "{v}");

    assert_eq!(
        metrics::worst_case_height_error(r0, FRAC_PI_4, 0.0, 0.0, &s.radar, &s.limits),
        Err(MetricsError::NoBaseline)
    );
}

#[test]
fn link_examples() {
    let s = table_i();
    let c = &s.comm;
    let g = c.gs_position;
    let d = comm::slot_distance(Position::new(-54.0, 74.0), 149.37, g);
    assert_relative_eq!(d, (124f64.powi(2) + 49f64.powi(2)).sqrt(), max_relative = 1e-12);
    assert!((d - 133.33).abs() < 5e-3);
    assert_eq!(comm::slot_distance(Position::new(g[0], g[2]), g[1], g), 0.0);
    assert!(comm::throughput(1.0, 0.0, c, 1).is_err());

    assert_eq!(comm::throughput(0.0, 50.0, c, 1).unwrap(), 0.0);
    let beta = 10f64.powf(1.869);
    assert_relative_eq!(c.ref_gain_over_noise[1], beta, max_relative = 1e-12);
    let t = comm::throughput(1.0, 100.0, c, 1).unwrap();
    assert_relative_eq!(t, throughput(1.0, 100.0, 1e9, beta), max_relative = 1e-12);
    assert!((t - 1.064e7).abs() < 1e-3 * 1.064e7);
    let ratio = comm::throughput(1e-3, 200.0, c, 1).unwrap() / comm::throughput(1e-3, 100.0, c, 1).unwrap();
    assert!((ratio - 0.25).abs() < 1e-4);

    assert_eq!(comm::min_power_for_rate(0.0, 80.0, c, 1), 0.0);
    let p = comm::min_power_for_rate(16.95e6, 133.33, c, 1);
    assert_relative_eq!(p, (2f64.powf(0.01695) - 1.0) * 133.33f64.powi(2) / beta, max_relative = 1e-12);
    assert!((p - 2.838).abs() < 5e-3);
    assert!(p < c.max_power);
}

#[test]
fn power_report_examples() {
    let s = table_i();
    let q = [Position::new(-54.0, 74.0), Position::new(-33.0, 61.0), Position::new(-40.0, 66.0)];
    let n = s.mission.n_slots;
    let zero = comm::PowerSchedule::uniform(n, 0.0, &[0, 1, 2]);
    let rep = comm::check_power_constraints(&zero, &q, &[0, 1, 2], &s.mission, &s.comm);
    for u in &rep.per_uav {
        assert!(!u.rate_ok);
        assert_eq!(u.rate_violations, n);
    }

    let profile = SlotProfile::new(&s.mission, &s.comm);
    let mut tight = comm::PowerSchedule::empty();
    for k in 0..3 {
        tight.per_uav[k] = comm::min_power_schedule(q[k], &profile, &s.comm, k);
    }
    let rep = comm::check_power_constraints(&tight, &q, &[0, 1, 2], &s.mission, &s.comm);
    for u in &rep.per_uav {
        assert!(u.rate_slack.abs() < 1e-9, "uav {} slack {}", u.uav, u.rate_slack);
    }

    // at 1 W every slot, the far slots miss the rate floor first
    let low = comm::PowerSchedule::uniform(n, 1.0, &[0, 1, 2]);
    let rep = comm::check_power_constraints(&low, &q, &[0, 1, 2], &s.mission, &s.comm);
    let u1 = &rep.per_uav[1];
    assert!(!u1.rate_ok);
    let first = (0..n)
        .find(|&i| low.per_uav[1][i] < tight.per_uav[1][i])
        .expect("some slot is short");
    assert_eq!(u1.rate_worst_slot.map(|w| w >= first), Some(true));
}

// ---- shipped default parameters ----

#[test]
fn default_parameters_ingest() {
    let cfg = ExperimentConfig::table_i();
    let s = cfg.scenario().unwrap();
    assert_eq!(s.mission.n_slots, 80);
    assert_relative_eq!(s.mission.velocity, 4.3);
    assert_relative_eq!(s.mission.master_look_angle, FRAC_PI_4, max_relative = 1e-15);
    assert_relative_eq!(s.limits.h_amb_min, 1.2);
    assert_relative_eq!(s.limits.d_min, 1.5);
    assert_relative_eq!(s.limits.s_min, 55.0);
    assert_relative_eq!(s.radar.wavelength, 0.12);
    assert_eq!(s.radar.looks, 4);
    assert_relative_eq!(s.comm.max_power, 10f64.powf(1.01), max_relative = 1e-12);
    assert_relative_eq!(s.comm.max_energy, 594.0);
    assert_eq!(s.comm.gs_position, [70.0, 149.37, 25.0]);
    assert_eq!(s.comm.rate_floor, [10e6, 16.95e6, 1e6]);
}

#[test]
fn static_power_level() {
    let s = table_i();
    let p = s.comm.max_energy / s.mission.n_slots as f64;
    assert_relative_eq!(p, 7.425, max_relative = 1e-12);
    assert_eq!(SchemeId::Bench3.name(), "bench3");
}

#[test]
fn fixed_master_positions_are_admissible() {
    let s = table_i();
    let profile = SlotProfile::new(&s.mission, &s.comm);
    let q = Position::new(-54.0, 74.0);
    assert!(s.master_admissible(q, PowerMode::Optimize, &profile));

    let cfg = ExperimentConfig::table_i();
    let mut fig4 = cfg.clone();
    fig4.p_com_max_dbw = 9.0;
    let s4 = fig4.scenario().unwrap();
    let profile4 = SlotProfile::new(&s4.mission, &s4.comm);
    assert!(s4.master_admissible(Position::new(-41.0, 61.0), PowerMode::Optimize, &profile4));
}
