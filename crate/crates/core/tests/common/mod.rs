//! Closed forms written out independently of the library, used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use uav_insar::{ExperimentConfig, Position, Scenario};

pub fn table_i() -> Scenario {
    ExperimentConfig::table_i().scenario().expect("shipped defaults are valid")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn range(q: Position, xt: f64) -> f64 {
    ((q.x - xt).powi(2) + q.z.powi(2)).sqrt()
}

pub fn look(q: Position, xt: f64) -> f64 {
    ((xt - q.x) / q.z).atan()
}

/// Perpendicular baseline as the projection of `qk - q0` on the normal of the master line of sight.
pub fn b_perp_projection(q0: Position, qk: Position, th0: f64) -> f64 {
    ((qk.x - q0.x) * th0.cos() + (qk.z - q0.z) * th0.sin()).abs()
}

/// Perpendicular baseline as the distance of `qk` to the master line of sight.
pub fn b_perp_distance(qk: Position, xt: f64, th0: f64) -> f64 {
    ((xt - qk.x) - th0.tan() * qk.z).abs() / (th0.tan().powi(2) + 1.0).sqrt()
}

pub fn ratio_x(th0: f64, thk: f64) -> f64 {
    let (s0, sk) = (th0.sin(), thk.sin());
    if thk < th0 {
        2.0 * s0 / (s0 + sk)
    } else {
        2.0 * sk / (s0 + sk)
    }
}

pub fn f_of_x(x: f64, bp: f64) -> f64 {
    ((2.0 + bp) / (1.0 + x) - (2.0 - bp) / (1.0 + 1.0 / x)) / bp
}

pub fn h_of_gamma(g: f64, bp: f64) -> f64 {
    (bp * g - 2.0 - bp) / (bp - 2.0 - g * bp)
}

pub fn crb(g: f64, looks: u32) -> f64 {
    ((1.0 - g * g) / (2.0 * looks as f64)).sqrt() / g
}

pub fn fused(s1: f64, s2: f64) -> f64 {
    (1.0 / (1.0 / (s1 * s1) + 1.0 / (s2 * s2))).sqrt()
}

pub fn snr_coherence(gm: f64, r0: f64, rk: f64) -> f64 {
    let s0 = gm / r0.powi(3);
    let sk = gm / (r0 * r0 * rk);
    1.0 / ((1.0 + 1.0 / s0) * (1.0 + 1.0 / sk)).sqrt()
}

/// Height error of one pair from the full coherence chain.
pub fn pair_sigma(s: &Scenario, q0: Position, qk: Position) -> f64 {
    let xt = s.mission.target_x;
    let th0 = s.mission.master_look_angle;
    let r0 = range(q0, xt);
    let rk = range(qk, xt);
    let bp = s.radar.pulse_bandwidth / s.radar.center_frequency;
    let g = snr_coherence(s.radar.radar_constant, r0, rk)
        * f_of_x(ratio_x(th0, look(qk, xt)), bp)
        * s.radar.other_coherence;
    let hoa = s.radar.wavelength * r0 * th0.sin() / b_perp_projection(q0, qk, th0);
    hoa * crb(g, s.radar.looks) / (2.0 * PI)
}

/// Worst-case fused bound written from the closed form.
pub fn bound(s: &Scenario, r0: f64, b1: f64, b2: f64) -> f64 {
    let a = s.limits.gamma_rg_min * s.limits.gamma_snr_min * s.radar.other_coherence;
    let th0 = s.mission.master_look_angle;
    let lam = s.radar.wavelength;
    let num = lam * lam * r0 * r0 * th0.sin().powi(2) * (1.0 - a * a);
    let den = 8.0 * PI * PI * a * a * s.radar.looks as f64 * (b1 * b1 + b2 * b2);
    (num / den).sqrt()
}

pub fn throughput(p: f64, d: f64, bandwidth: f64, beta: f64) -> f64 {
    bandwidth * (1.0 + p * beta / (d * d)).log2()
}

/// `(max - min) / min`.
pub fn max_relative_spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo
}
