//! Deterministic feasible starting point.
//!
//! Master on the line of sight at the middle of its admissible altitude
//! interval (then alternately above and below in 0.5 m steps). Slaves at look
//! angles just off the master's, slave 1 below and slave 2 above, ranges
//! scanned outward from the master range. Placement keeps twice the minimum
//! separation and 90 % of the ambiguity baseline cap.

use crate::comm::{self, PowerMode, PowerSchedule, SlotProfile};
use crate::geometry::{self, Position};
use crate::problem::{self, Scenario, AUDIT_TOLERANCE};

use super::subproblem::slave_range_cap;
use super::{OptimizerError, OptimizerSettings, ScaState};

const Z_STEP: f64 = 0.5;
const R_STEP: f64 = 0.05;
const SEPARATION_MARGIN: f64 = 2.0;
const CAP_MARGIN: f64 = 0.9;

fn schedules(scenario: &Scenario, q: &[Position; 3], power: PowerMode, profile: &SlotProfile) -> Option<PowerSchedule> {
    let n = scenario.mission.n_slots;
    let uavs = scenario.layout.uavs();
    match power {
        PowerMode::Fixed(p) => Some(PowerSchedule::uniform(n, p, uavs)),
        PowerMode::Optimize => {
            let mut s = PowerSchedule::empty();
            for &k in uavs {
                s.per_uav[k] =
                    comm::feasible_schedule(q[k], profile, &scenario.comm, k, scenario.mission.slot_duration)?;
            }
            Some(s)
        }
    }
}

/// Builds schedules for a given formation and checks C1-C11 exactly.
pub fn state_for_formation(
    scenario: &Scenario,
    settings: &OptimizerSettings,
    formation: [Position; 3],
) -> Result<ScaState, OptimizerError> {
    let profile = SlotProfile::new(&scenario.mission, &scenario.comm);
    let sched = match schedules(scenario, &formation, settings.power, &profile) {
        Some(s) => s,
        // report through the audit with zero powers
        None => PowerSchedule::uniform(scenario.mission.n_slots, 0.0, scenario.layout.uavs()),
    };
    let audit = problem::audit(scenario, &formation, &sched);
    if !audit.passes(AUDIT_TOLERANCE) {
        return Err(OptimizerError::InfeasibleStart(audit.violations(AUDIT_TOLERANCE)));
    }
    Ok(ScaState::new(formation, sched))
}

fn look_angle_candidates(scenario: &Scenario, slave: usize) -> Vec<f64> {
    let th0 = scenario.theta0();
    let l = &scenario.limits;
    let below = slave == 1;
    let mut v = Vec::new();
    for first in [below, !below] {
        for d in [1.0f64, 0.5, 0.25] {
            v.push(if first { th0 - d.to_radians() } else { th0 + d.to_radians() });
        }
    }
    // remaining window, nearest to the master look angle first
    let mut rest: Vec<f64> = Vec::new();
    let mut t = l.theta_min;
    while t <= l.theta_max {
        rest.push(t);
        t += 0.25f64.to_radians();
    }
    rest.sort_by(|a, b| (a - th0).abs().total_cmp(&(b - th0).abs()));
    v.extend(rest);
    v.retain(|t| *t >= l.theta_min && *t <= l.theta_max);
    v
}

fn place_slave(
    scenario: &Scenario,
    slave: usize,
    q0: Position,
    placed: &[Position],
    power: PowerMode,
    profile: &SlotProfile,
) -> Option<Position> {
    let tx = scenario.target_x();
    let r0 = geometry::slant_range(q0, tx);
    let r_cap = slave_range_cap(scenario, r0);
    if !(r_cap > 0.0) {
        return None;
    }
    let r_max = r_cap.min(tx.abs() + 2.0 * scenario.limits.z_max + 200.0);
    let steps_up = ((r_max - r0) / R_STEP).max(0.0) as usize;
    let steps_down = (r0 / R_STEP) as usize;
    let ranges = (0..=steps_up)
        .map(|j| r0 + j as f64 * R_STEP)
        .chain((1..=steps_down).map(|j| r0 - j as f64 * R_STEP));
    let ranges: Vec<f64> = ranges.filter(|r| *r > 0.0).collect();
    let dmin = SEPARATION_MARGIN * scenario.limits.d_min;
    let cap = CAP_MARGIN * scenario.baseline_cap(r0);
    for th in look_angle_candidates(scenario, slave) {
        for &r in &ranges {
            let q = Position::new(tx - r * th.sin(), r * th.cos());
            if placed.iter().any(|p| p.distance(&q) < dmin) {
                continue;
            }
            if geometry::perpendicular_baseline(q, tx, scenario.theta0()) > cap {
                continue;
            }
            if scenario.slave_admissible(q0, q, slave, power, profile) {
                return Some(q);
            }
        }
    }
    None
}

fn try_master(
    scenario: &Scenario,
    settings: &OptimizerSettings,
    q0: Position,
    profile: &SlotProfile,
) -> Option<ScaState> {
    if !scenario.master_admissible(q0, settings.power, profile) {
        return None;
    }
    let mut q = [q0; 3];
    let mut placed = vec![q0];
    for &k in scenario.layout.slaves() {
        let qk = place_slave(scenario, k, q0, &placed, settings.power, profile)?;
        q[k] = qk;
        placed.push(qk);
    }
    if scenario.layout.slaves().len() == 1 {
        // absent slave: parked far away so that no constraint sees it
        q[2] = Position::new(f64::NAN, f64::NAN);
    }
    let sched = schedules(scenario, &q, settings.power, profile)?;
    let audit = problem::audit(scenario, &q, &sched);
    audit.passes(0.0).then(|| ScaState::new(q, sched))
}

/// Deterministic feasible starting state, or an error when none is found.
pub fn initial_state(scenario: &Scenario, settings: &OptimizerSettings) -> Result<ScaState, OptimizerError> {
    let profile = SlotProfile::new(&scenario.mission, &scenario.comm);
    let l = &scenario.limits;
    let tx = scenario.target_x();
    // master-alone admissible altitudes, with the slave range equal to the master's
    let n = ((l.z_max - l.z_min) / Z_STEP).floor() as usize;
    let zs: Vec<f64> = (0..=n)
        .map(|j| l.z_min + j as f64 * Z_STEP)
        .filter(|&z| {
            let q0 = scenario.mission.master_on_locus(z);
            let r0 = geometry::slant_range(q0, tx);
            scenario.master_admissible(q0, settings.power, &profile)
                && scenario.snr_coherence(r0, r0) >= l.gamma_snr_min
        })
        .collect();
    let (Some(&lo), Some(&hi)) = (zs.first(), zs.last()) else {
        return Err(OptimizerError::NoFeasibleStart("no admissible master altitude".into()));
    };
    let mid = 0.5 * (lo + hi);
    let reach = ((hi - lo) / Z_STEP).ceil() as usize + 1;
    for j in 0..=2 * reach {
        let offset = (j as f64 / 2.0).ceil() * Z_STEP * if j % 2 == 1 { 1.0 } else { -1.0 };
        let z = mid + offset;
        if z < lo || z > hi {
            continue;
        }
        if let Some(s) = try_master(scenario, settings, scenario.mission.master_on_locus(z), &profile) {
            return Ok(s);
        }
    }
    Err(OptimizerError::NoFeasibleStart("no slave placement works for any master altitude".into()))
}

/// Starting state with the master held at `q0`.
pub fn initial_state_with_master(
    scenario: &Scenario,
    settings: &OptimizerSettings,
    q0: Position,
) -> Result<ScaState, OptimizerError> {
    let profile = SlotProfile::new(&scenario.mission, &scenario.comm);
    try_master(scenario, settings, q0, &profile).ok_or_else(|| {
        OptimizerError::NoFeasibleStart(format!("no feasible formation around the fixed master ({}, {})", q0.x, q0.z))
    })
}
