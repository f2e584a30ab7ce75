//! Convex inner approximations of the master and slave block problems.
//!
//! Variable layout: `[x, z, P[0], ..., P[N-1]]`; the power block is absent
//! when powers are fixed.

use serde::{Deserialize, Serialize};

use crate::comm::PowerMode;
use crate::convex::{ConvexProgram, Sparse};
use crate::geometry::{self, Position};
use crate::metrics;
use crate::problem::Scenario;

use super::{OptimizerError, ScaState};

pub const X: usize = 0;
pub const Z: usize = 1;
const P0: usize = 2;

/// Half-space of slave positions relative to the master line of sight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Look angle at or below the master's: `(x_t - x) - tan(theta0) z <= 0`.
    Ia,
    /// Look angle above the master's.
    Ib,
}

/// Largest master range meeting the SNR coherence floor against every slave range, by bisection.
pub fn master_range_cap(scenario: &Scenario, slave_ranges: &[f64]) -> f64 {
    let gmin = scenario.limits.gamma_snr_min;
    let ok = |r0: f64| slave_ranges.iter().all(|&rk| scenario.snr_coherence(r0, rk) >= gmin);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ok(hi) {
        hi *= 2.0;
        if hi > 1e9 {
            return hi;
        }
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Largest slave range meeting the SNR coherence floor for a master at `r0`.
/// Negative when no slave range works.
pub fn slave_range_cap(scenario: &Scenario, r0: f64) -> f64 {
    let gm = scenario.radar.radar_constant;
    let g = scenario.limits.gamma_snr_min;
    let m = 1.0 / (g * g * (1.0 + r0.powi(3) / gm));
    (m - 1.0) * gm / (r0 * r0)
}

/// Tangents of the look-angle limits equivalent to the range-spectral coherence floor.
/// `alpha_b` is `None` when the floor puts no limit above the master look angle.
pub fn branch_slopes(scenario: &Scenario) -> Result<(f64, Option<f64>), metrics::MetricsError> {
    let h = metrics::inverse_baseline_decorrelation(scenario.limits.gamma_rg_min, &scenario.radar)?;
    let s0 = scenario.theta0().sin();
    let alpha_a = ((2.0 - h) / h * s0).asin().tan();
    let arg_b = h / (2.0 - h) * s0;
    let alpha_b = if arg_b < 1.0 { Some(arg_b.asin().tan()) } else { None };
    Ok((alpha_a, alpha_b))
}

fn n_vars(scenario: &Scenario, power: PowerMode) -> usize {
    match power {
        PowerMode::Optimize => 2 + scenario.mission.n_slots,
        PowerMode::Fixed(_) => 2,
    }
}

/// Linear minorant of `||q - p||^2` around `qi`, constrained to `>= d_min^2`.
fn add_separation(
    prog: &mut ConvexProgram,
    label: String,
    qi: Position,
    p: Position,
    d_min: f64,
) -> Result<(), OptimizerError> {
    let mut qi = qi;
    if qi == p {
        log::warn!("{label}: expansion point coincides with the other UAV; perturbing by 1e-6 m");
        qi.x += 1e-6;
    }
    // 2 (qi - p) . q - |qi|^2 + |p|^2 >= d^2
    let coeffs = vec![(X, -2.0 * (qi.x - p.x)), (Z, -2.0 * (qi.z - p.z))];
    let rhs = -qi.norm_sq() + p.norm_sq() - d_min * d_min;
    prog.add_linear(label, coeffs, rhs)?;
    Ok(())
}

/// `||(x - x_t, z)|| <= cap`
fn add_range_cap(prog: &mut ConvexProgram, label: &str, target_x: f64, cap: f64) -> Result<(), OptimizerError> {
    prog.add_soc(label, vec![(vec![(X, 1.0)], -target_x), (vec![(Z, 1.0)], 0.0)], vec![], cap)?;
    Ok(())
}

/// C9 bounds, C10 per slot and C11 for UAV `uav`.
fn add_power_block(prog: &mut ConvexProgram, scenario: &Scenario, uav: usize, power: PowerMode) -> Result<(), OptimizerError> {
    let comm = &scenario.comm;
    let k = comm.power_per_sq_meter(uav);
    let [gx, gy, gz] = comm.gs_position;
    let ys = geometry::along_track_positions(&scenario.mission);
    let q = nalgebra::DMatrix::identity(2, 2) * k;
    for (n, y) in ys.iter().enumerate() {
        let dy2 = (y - gy).powi(2);
        let mut coeffs: Sparse = vec![(X, -2.0 * k * gx), (Z, -2.0 * k * gz)];
        let base = -k * (gx * gx + gz * gz + dy2);
        let rhs = match power {
            PowerMode::Optimize => {
                coeffs.push((P0 + n, -1.0));
                base
            }
            PowerMode::Fixed(p) => base + p,
        };
        prog.add_quadratic(format!("C10 rate u{uav} n{n}"), vec![X, Z], q.clone(), coeffs, rhs)?;
    }
    if let PowerMode::Optimize = power {
        for n in 0..ys.len() {
            prog.set_bounds(P0 + n, 0.0, comm.max_power)?;
        }
        let w = comm.energy_weight(scenario.mission.slot_duration);
        let coeffs = (0..ys.len()).map(|n| (P0 + n, w)).collect();
        prog.add_linear(format!("C11 energy u{uav}"), coeffs, comm.max_energy)?;
    }
    Ok(())
}

/// Master block: minimizes `z0` on the line of sight (equivalent to minimizing
/// the worst-case height bound at fixed baselines).
pub fn build_master_subproblem(
    state: &ScaState,
    scenario: &Scenario,
    power: PowerMode,
) -> Result<ConvexProgram, OptimizerError> {
    let l = &scenario.limits;
    let th0 = scenario.theta0();
    let (t0, c0, s0) = (th0.tan(), th0.cos(), th0.sin());
    let tx = scenario.target_x();
    let q = &state.formation;
    let slaves = scenario.layout.slaves();
    let mut prog = ConvexProgram::new(n_vars(scenario, power));

    let mut obj = vec![0.0; prog.variable_count()];
    obj[Z] = 1.0;
    prog.minimize(obj, 0.0)?;
    prog.set_bounds(Z, l.z_min, l.z_max)?;
    prog.add_equality("C2 line of sight", vec![(X, 1.0), (Z, t0)], tx)?;
    // (x_t - x) >= tan(theta_min) z and <= tan(theta_max) z
    prog.add_linear("C3 lower look angle", vec![(X, 1.0), (Z, l.theta_min.tan())], tx)?;
    prog.add_linear("C3 upper look angle", vec![(X, -1.0), (Z, -l.theta_max.tan())], -tx)?;
    for &k in slaves {
        add_separation(&mut prog, format!("C4 separation u0-u{k}"), q[0], q[k], l.d_min)?;
    }
    // swath on the line of sight: Theta r0 / cos(theta0) >= S_min, r0 = z0 / cos(theta0)
    prog.add_linear("C5 swath", vec![(Z, -1.0)], -l.s_min * c0 * c0 / scenario.radar.beamwidth)?;
    let ranges: Vec<f64> = slaves.iter().map(|&k| geometry::slant_range(q[k], tx)).collect();
    add_range_cap(&mut prog, "C6 snr range cap", tx, master_range_cap(scenario, &ranges))?;
    for &k in slaves {
        let b = geometry::perpendicular_baseline(q[k], tx, th0);
        // b <= lambda r0 sin(theta0) / h_min with r0 = z0 / cos(theta0)
        let floor = l.h_amb_min * b * c0 / (scenario.radar.wavelength * s0);
        prog.add_linear(format!("C8 ambiguity u{k}"), vec![(Z, -1.0)], -floor)?;
    }
    add_power_block(&mut prog, scenario, 0, power)?;
    Ok(prog)
}

/// Slave block on one branch: maximizes the signed baseline offset.
pub fn build_slave_subproblem(
    state: &ScaState,
    scenario: &Scenario,
    slave: usize,
    branch: Branch,
    power: PowerMode,
) -> Result<ConvexProgram, OptimizerError> {
    let l = &scenario.limits;
    let th0 = scenario.theta0();
    let (t0, c0) = (th0.tan(), th0.cos());
    let tx = scenario.target_x();
    let q = &state.formation;
    let qi = q[slave];
    let mut prog = ConvexProgram::new(n_vars(scenario, power));

    // w = (x_t - x) - tan(theta0) z; branch Ia maximizes -w, Ib maximizes w
    let sign = match branch {
        Branch::Ia => 1.0,
        Branch::Ib => -1.0,
    };
    let mut obj = vec![0.0; prog.variable_count()];
    obj[X] = -sign;
    obj[Z] = -sign * t0;
    prog.minimize(obj, sign * tx)?;

    prog.set_bounds(Z, l.z_min, l.z_max)?;
    prog.set_bounds(X, tx - l.theta_max.tan() * l.z_max - 1.0, tx + 1.0)?;
    prog.add_linear("C3 lower look angle", vec![(X, 1.0), (Z, l.theta_min.tan())], tx)?;
    prog.add_linear("C3 upper look angle", vec![(X, -1.0), (Z, -l.theta_max.tan())], -tx)?;
    for &j in scenario.layout.uavs() {
        if j != slave {
            add_separation(&mut prog, format!("C4 separation u{slave}-u{j}"), qi, q[j], l.d_min)?;
        }
    }
    // r^2 minorant at qi >= (S_min / Theta) z
    let ri2 = (qi.x - tx).powi(2) + qi.z * qi.z;
    let kswath = l.s_min / scenario.radar.beamwidth;
    prog.add_linear(
        "C5 swath",
        vec![(X, -2.0 * (qi.x - tx)), (Z, kswath - 2.0 * qi.z)],
        ri2 - 2.0 * (qi.x - tx) * qi.x - 2.0 * qi.z * qi.z,
    )?;
    let r0 = geometry::slant_range(q[0], tx);
    add_range_cap(&mut prog, "C6 snr range cap", tx, slave_range_cap(scenario, r0))?;
    let (alpha_a, alpha_b) = branch_slopes(scenario)?;
    let wcap = scenario.baseline_cap(r0) / c0;
    match branch {
        Branch::Ia => {
            prog.add_linear("C7a look-angle floor", vec![(X, 1.0), (Z, alpha_a)], tx)?;
            prog.add_linear("C8 ambiguity", vec![(X, 1.0), (Z, t0)], tx + wcap)?;
            prog.add_linear("branch Ia", vec![(X, -1.0), (Z, -t0)], -tx)?;
        }
        Branch::Ib => {
            if let Some(ab) = alpha_b {
                prog.add_linear("C7b look-angle cap", vec![(X, -1.0), (Z, -ab)], -tx)?;
            }
            prog.add_linear("C8 ambiguity", vec![(X, -1.0), (Z, -t0)], wcap - tx)?;
            prog.add_linear("branch Ib", vec![(X, 1.0), (Z, t0)], tx)?;
        }
    }
    add_power_block(&mut prog, scenario, slave, power)?;
    Ok(prog)
}

/// Warm start for a block program from the current state.
pub fn warm_start(state: &ScaState, uav: usize, power: PowerMode) -> Vec<f64> {
    let mut v = vec![state.formation[uav].x, state.formation[uav].z];
    if let PowerMode::Optimize = power {
        v.extend_from_slice(&state.schedule.per_uav[uav]);
    }
    v
}
