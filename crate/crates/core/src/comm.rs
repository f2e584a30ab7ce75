//! FDMA air-to-ground offloading link with free-space path loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, MissionConfig, Position};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommError {
    #[error("UAV {0} coincides with the ground station; free-space model breaks down")]
    ZeroDistance(usize),
    #[error("invalid communication configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommConfig {
    /// Ground station position (x, y, z), meters.
    pub gs_position: [f64; 3],
    /// Per-UAV bandwidth, Hz.
    pub bandwidth: [f64; 3],
    /// Per-UAV reference channel gain over noise power (linear, at 1 m).
    pub ref_gain_over_noise: [f64; 3],
    /// Per-UAV minimum data rate, bit/s.
    pub rate_floor: [f64; 3],
    /// Peak transmit power, W.
    pub max_power: f64,
    /// Budget on the summed slot powers (or slot energies, see the switch below).
    pub max_energy: f64,
    /// When set, the budget applies to `sum(P[n] * slot_duration)` instead of `sum(P[n])`.
    pub energy_includes_slot_duration: bool,
}

impl CommConfig {
    pub fn validate(&self) -> Result<(), CommError> {
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.bandwidth) || !positive(&self.ref_gain_over_noise) {
            return Err(CommError::InvalidConfig("bandwidths and gains must be positive"));
        }
        if !self.rate_floor.iter().all(|r| *r >= 0.0 && r.is_finite()) {
            return Err(CommError::InvalidConfig("rate floors must be finite and non-negative"));
        }
        if !(self.max_power > 0.0 && self.max_energy > 0.0) {
            return Err(CommError::InvalidConfig("power and energy caps must be positive"));
        }
        Ok(())
    }

    /// `(2^(R_min/B) - 1) / beta`: minimal power per squared meter of link distance.
    pub fn power_per_sq_meter(&self, uav: usize) -> f64 {
        (2f64.powf(self.rate_floor[uav] / self.bandwidth[uav]) - 1.0) / self.ref_gain_over_noise[uav]
    }

    /// Factor converting a slot power into its contribution to the energy budget.
    pub fn energy_weight(&self, slot_duration: f64) -> f64 {
        if self.energy_includes_slot_duration {
            slot_duration
        } else {
            1.0
        }
    }
}

/// Per-UAV transmit powers, one vector of `N` slot powers for each UAV.
/// Absent UAVs carry an empty vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSchedule {
    pub per_uav: [Vec<f64>; 3],
}

impl PowerSchedule {
    pub fn empty() -> Self {
        Self {
            per_uav: [Vec::new(), Vec::new(), Vec::new()],
        }
    }

    pub fn uniform(n_slots: usize, power: f64, uavs: &[usize]) -> Self {
        let mut s = Self::empty();
        for &k in uavs {
            s.per_uav[k] = vec![power; n_slots];
        }
        s
    }
}

pub fn slot_distance(q: Position, y_n: f64, gs: [f64; 3]) -> f64 {
    let dx = q.x - gs[0];
    let dy = y_n - gs[1];
    let dz = q.z - gs[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn throughput(power: f64, distance: f64, comm: &CommConfig, uav: usize) -> Result<f64, CommError> {
    if distance <= 0.0 {
        return Err(CommError::ZeroDistance(uav));
    }
    Ok(comm.bandwidth[uav]
        * (power * comm.ref_gain_over_noise[uav] / (distance * distance)).ln_1p()
        / std::f64::consts::LN_2)
}

pub fn min_power_for_rate(rate_floor: f64, distance: f64, comm: &CommConfig, uav: usize) -> f64 {
    (2f64.powf(rate_floor / comm.bandwidth[uav]) - 1.0) * distance * distance
        / comm.ref_gain_over_noise[uav]
}

/// Along-track offsets from the ground station, precomputed once per mission.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotProfile {
    pub ys: Vec<f64>,
    /// `sum_n (y[n] - g_y)^2`
    pub sum_dy2: f64,
    /// `max_n (y[n] - g_y)^2`
    pub max_dy2: f64,
}

impl SlotProfile {
    pub fn new(mission: &MissionConfig, comm: &CommConfig) -> Self {
        let ys = geometry::along_track_positions(mission);
        let dy2 = ys.iter().map(|y| (y - comm.gs_position[1]).powi(2));
        let sum_dy2 = dy2.clone().sum();
        let max_dy2 = dy2.fold(0.0, f64::max);
        Self { ys, sum_dy2, max_dy2 }
    }

    pub fn n_slots(&self) -> usize {
        self.ys.len()
    }

    /// Squared distance to the ground station in the across-track plane.
    pub fn planar_sq(q: Position, comm: &CommConfig) -> f64 {
        (q.x - comm.gs_position[0]).powi(2) + (q.z - comm.gs_position[2]).powi(2)
    }
}

pub fn min_power_schedule(q: Position, profile: &SlotProfile, comm: &CommConfig, uav: usize) -> Vec<f64> {
    let k = comm.power_per_sq_meter(uav);
    let h2 = SlotProfile::planar_sq(q, comm);
    profile
        .ys
        .iter()
        .map(|y| k * (h2 + (y - comm.gs_position[1]).powi(2)))
        .collect()
}

/// Whether some schedule meets C9-C11 for this UAV at `q`, in O(1).
pub fn schedulable(q: Position, profile: &SlotProfile, comm: &CommConfig, uav: usize, slot_duration: f64) -> bool {
    let k = comm.power_per_sq_meter(uav);
    let h2 = SlotProfile::planar_sq(q, comm);
    let peak = k * (h2 + profile.max_dy2);
    let total = k * (profile.n_slots() as f64 * h2 + profile.sum_dy2) * comm.energy_weight(slot_duration);
    peak <= comm.max_power && total <= comm.max_energy
}

/// Whether a fixed per-slot power meets C10 at every slot (C9/C11 checked separately).
pub fn fixed_power_supports_rate(q: Position, power: f64, profile: &SlotProfile, comm: &CommConfig, uav: usize) -> bool {
    let k = comm.power_per_sq_meter(uav);
    k * (SlotProfile::planar_sq(q, comm) + profile.max_dy2) <= power
}

/// A strictly feasible schedule for `q`: per-slot minimum power inflated by
/// 10 %, capped at the peak power, falling back to an even split of the
/// remaining energy headroom when the inflated schedule breaks the budget.
pub fn feasible_schedule(
    q: Position,
    profile: &SlotProfile,
    comm: &CommConfig,
    uav: usize,
    slot_duration: f64,
) -> Option<Vec<f64>> {
    let pmin = min_power_schedule(q, profile, comm, uav);
    let peak = pmin.iter().copied().fold(0.0, f64::max);
    let w = comm.energy_weight(slot_duration);
    let total: f64 = pmin.iter().sum::<f64>() * w;
    if peak >= comm.max_power || total >= comm.max_energy {
        return None;
    }
    let inflated: Vec<f64> = pmin.iter().map(|p| (1.1 * p).min(comm.max_power)).collect();
    // the cap may make an inflated slot exactly P_max; keep strict interiors
    let interior = inflated.iter().all(|p| *p < comm.max_power)
        && inflated.iter().sum::<f64>() * w < comm.max_energy;
    if interior && pmin.iter().all(|p| *p > 0.0) {
        return Some(inflated);
    }
    let headroom_energy = (comm.max_energy / w - pmin.iter().sum::<f64>()) / pmin.len() as f64;
    let delta = 0.5 * headroom_energy.min(comm.max_power - peak);
    Some(pmin.iter().map(|p| p + delta).collect())
}

/// How transmit powers are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PowerMode {
    /// Powers are optimization variables.
    Optimize,
    /// Every UAV transmits this power in every slot, W.
    Fixed(f64),
}

impl PowerMode {
    /// Whether C9-C11 can hold for UAV `uav` at `q`.
    pub fn supports(self, q: Position, profile: &SlotProfile, comm: &CommConfig, uav: usize, slot_duration: f64) -> bool {
        match self {
            PowerMode::Optimize => schedulable(q, profile, comm, uav, slot_duration),
            PowerMode::Fixed(p) => {
                let total = p * profile.n_slots() as f64 * comm.energy_weight(slot_duration);
                p >= 0.0
                    && p <= comm.max_power
                    && total <= comm.max_energy
                    && fixed_power_supports_rate(q, p, profile, comm, uav)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavPowerReport {
    pub uav: usize,
    /// C9: `0 <= P[n] <= P_max`.
    pub peak_ok: bool,
    pub peak_worst_slot: Option<usize>,
    /// C10: rate floor in every slot.
    pub rate_ok: bool,
    pub rate_worst_slot: Option<usize>,
    /// Smallest `(R[n] - R_min) / max(R_min, 1)` over the slots.
    pub rate_slack: f64,
    pub rate_violations: usize,
    /// C11: energy budget.
    pub energy_ok: bool,
    pub energy_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerReport {
    pub per_uav: Vec<UavPowerReport>,
}

impl PowerReport {
    pub fn all_ok(&self) -> bool {
        self.per_uav
            .iter()
            .all(|r| r.peak_ok && r.rate_ok && r.energy_ok)
    }
}

/// Checks C9-C11 for the listed UAVs. Never fails: violations are reported.
pub fn check_power_constraints(
    schedule: &PowerSchedule,
    q: &[Position; 3],
    uavs: &[usize],
    mission: &MissionConfig,
    comm: &CommConfig,
) -> PowerReport {
    let ys = geometry::along_track_positions(mission);
    let per_uav = uavs
        .iter()
        .map(|&k| {
            let p = &schedule.per_uav[k];
            let mut peak_ok = p.len() == ys.len();
            let mut peak_worst = None;
            let mut worst_excess = 0.0;
            for (n, &pn) in p.iter().enumerate() {
                let excess = if pn < 0.0 { -pn } else { pn - comm.max_power };
                if excess > worst_excess {
                    worst_excess = excess;
                    peak_worst = Some(n);
                    peak_ok = false;
                }
            }
            let floor = comm.rate_floor[k];
            let mut rate_slack = f64::INFINITY;
            let mut rate_worst = None;
            let mut violations = 0;
            for (n, y) in ys.iter().enumerate() {
                let pn = p.get(n).copied().unwrap_or(0.0);
                let d = slot_distance(q[k], *y, comm.gs_position);
                let rate = throughput(pn.max(0.0), d, comm, k).unwrap_or(f64::INFINITY);
                let slack = (rate - floor) / floor.max(1.0);
                if slack < 0.0 {
                    violations += 1;
                }
                if slack < rate_slack {
                    rate_slack = slack;
                    rate_worst = Some(n);
                }
            }
            let energy_used = p.iter().sum::<f64>() * comm.energy_weight(mission.slot_duration);
            UavPowerReport {
                uav: k,
                peak_ok,
                peak_worst_slot: peak_worst,
                rate_ok: violations == 0,
                rate_worst_slot: if violations > 0 { rate_worst } else { None },
                rate_slack,
                rate_violations: violations,
                energy_ok: energy_used <= comm.max_energy,
                energy_used,
            }
        })
        .collect();
    PowerReport { per_uav }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn comm() -> CommConfig {
        let beta = 10f64.powf(1.869);
        CommConfig {
            gs_position: [70.0, 149.37, 25.0],
            bandwidth: [1e9; 3],
            ref_gain_over_noise: [beta; 3],
            rate_floor: [10e6, 16.95e6, 1e6],
            max_power: 10f64.powf(1.01),
            max_energy: 594.0,
            energy_includes_slot_duration: false,
        }
    }

    fn mission() -> MissionConfig {
        MissionConfig::new(80, 1.0, 4.3, 20.0, std::f64::consts::FRAC_PI_4).unwrap()
    }

    #[test]
    fn slot_distance_examples() {
        let c = comm();
        let d = slot_distance(Position::new(-54.0, 74.0), 149.37, c.gs_position);
        assert_relative_eq!(d, (124.0f64 * 124.0 + 49.0 * 49.0).sqrt(), max_relative = 1e-12);
        assert!((d - 133.33).abs() < 0.01);
        assert_eq!(slot_distance(Position::new(70.0, 25.0), 149.37, c.gs_position), 0.0);
        let m = mission();
        let ys = geometry::along_track_positions(&m);
        let q = Position::new(-54.0, 74.0);
        let best = (0..ys.len())
            .min_by(|&a, &b| {
                slot_distance(q, ys[a], c.gs_position)
                    .total_cmp(&slot_distance(q, ys[b], c.gs_position))
            })
            .unwrap();
        let closest_y = (0..ys.len())
            .min_by(|&a, &b| (ys[a] - 149.37).abs().total_cmp(&(ys[b] - 149.37).abs()))
            .unwrap();
        assert_eq!(best, closest_y);
    }

    #[test]
    fn throughput_examples() {
        let c = comm();
        assert_eq!(throughput(0.0, 100.0, &c, 1).unwrap(), 0.0);
        let r = throughput(1.0, 100.0, &c, 1).unwrap();
        assert_relative_eq!(r, 1e9 * (1.0 + c.ref_gain_over_noise[1] / 1e4).log2(), max_relative = 1e-12);
        assert!((r / 1.064e7 - 1.0).abs() < 1e-3);
        let far = throughput(1e-3, 200.0, &c, 1).unwrap();
        let near = throughput(1e-3, 100.0, &c, 1).unwrap();
        assert!((near / far - 4.0).abs() < 1e-3);
        assert_eq!(throughput(1.0, 0.0, &c, 2), Err(CommError::ZeroDistance(2)));
    }

    #[test]
    fn min_power_examples() {
        let c = comm();
        assert_eq!(min_power_for_rate(0.0, 50.0, &c, 0), 0.0);
        let p = min_power_for_rate(16.95e6, 133.33, &c, 1);
        let expect = (2f64.powf(0.01695) - 1.0) * 133.33f64.powi(2) / c.ref_gain_over_noise[1];
        assert_relative_eq!(p, expect, max_relative = 1e-12);
        assert!((p - 2.84).abs() < 0.01);
        assert!(p < c.max_power);
    }

    #[test]
    fn report_flags_zero_schedule() {
        let m = mission();
        let c = comm();
        let q = [Position::new(-54.0, 74.0), Position::new(-30.0, 60.0), Position::new(-20.0, 50.0)];
        let zero = PowerSchedule::uniform(80, 0.0, &[0, 1, 2]);
        let rep = check_power_constraints(&zero, &q, &[0, 1, 2], &m, &c);
        assert!(rep.per_uav.iter().all(|r| !r.rate_ok && r.rate_violations == 80));
        assert!(rep.per_uav.iter().all(|r| r.peak_ok && r.energy_ok));
    }

    #[test]
    fn minimal_schedule_is_tight() {
        let m = mission();
        let c = comm();
        let profile = SlotProfile::new(&m, &c);
        let q = [Position::new(-54.0, 74.0), Position::new(-30.0, 60.0), Position::new(-20.0, 50.0)];
        let mut s = PowerSchedule::empty();
        for k in 0..3 {
            s.per_uav[k] = min_power_schedule(q[k], &profile, &c, k);
        }
        let rep = check_power_constraints(&s, &q, &[0, 1, 2], &m, &c);
        for r in &rep.per_uav {
            assert!(r.rate_slack.abs() < 1e-9, "slack {}", r.rate_slack);
        }
    }

    #[test]
    fn uniform_schedule_finds_first_violation() {
        let m = mission();
        let mut c = comm();
        c.rate_floor[1] = 17.5e6;
        let q = [Position::new(-54.0, 74.0), Position::new(-40.0, 60.0), Position::new(-20.0, 50.0)];
        let s = PowerSchedule::uniform(80, 594.0 / 80.0, &[0, 1, 2]);
        let rep = check_power_constraints(&s, &q, &[1], &m, &c);
        let r = &rep.per_uav[0];
        assert!(!r.rate_ok);
        // the far end of the track is farthest from the station
        assert_eq!(r.rate_worst_slot, Some(79));
    }

    #[test]
    fn feasible_schedule_is_interior() {
        let m = mission();
        let c = comm();
        let profile = SlotProfile::new(&m, &c);
        let q = Position::new(-30.0, 60.0);
        let s = feasible_schedule(q, &profile, &c, 1, 1.0).unwrap();
        let pmin = min_power_schedule(q, &profile, &c, 1);
        assert!(s.iter().zip(&pmin).all(|(a, b)| a > b && *a < c.max_power));
        assert!(s.iter().sum::<f64>() < c.max_energy);
        assert!(schedulable(q, &profile, &c, 1, 1.0));
        assert!(feasible_schedule(Position::new(-900.0, 60.0), &profile, &c, 1, 1.0).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn min_power_inverts_throughput(rate in 0.0..5e7f64, d in 1.0..500.0f64) {
                let c = comm();
                let p = min_power_for_rate(rate, d, &c, 0);
                let back = throughput(p, d, &c, 0).unwrap();
                prop_assert!((back - rate).abs() <= 1e-9 * rate.max(1.0));
            }

            #[test]
            fn rate_constraint_quadratic_form(p in 0.0..12.0f64, x in -100.0..60.0f64,
                                              z in 1.0..100.0f64, y in 0.0..340.0f64, r in 1e5..3e7f64) {
                let mut c = comm();
                c.rate_floor[1] = r;
                let d = slot_distance(Position::new(x, z), y, c.gs_position);
                let direct = throughput(p, d, &c, 1).unwrap() >= r;
                let lhs = p * c.ref_gain_over_noise[1];
                let rhs = (2f64.powf(r / 1e9) - 1.0) * d * d;
                // skip razor-thin ties where rounding decides
                prop_assume!((lhs - rhs).abs() > 1e-9 * rhs.max(1e-12));
                prop_assert_eq!(direct, lhs >= rhs);
            }

            #[test]
            fn feasible_schedules_dominate_minimum(x in -80.0..20.0f64, z in 1.0..100.0f64,
                                                   extra in proptest::collection::vec(0.0..2.0f64, 80)) {
                let m = mission();
                let c = comm();
                let profile = SlotProfile::new(&m, &c);
                let q = [Position::new(x, z); 3];
                let pmin = min_power_schedule(q[1], &profile, &c, 1);
                let mut s = PowerSchedule::empty();
                s.per_uav[1] = pmin.iter().zip(&extra).map(|(a, e)| a * (1.0 + 1e-9) + e).collect();
                let rep = check_power_constraints(&s, &q, &[1], &m, &c);
                prop_assert!(rep.per_uav[0].rate_ok);
                // shaving any slot below its minimum breaks C10
                let mut t = s.clone();
                t.per_uav[1][17] = pmin[17] * 0.999;
                let rep = check_power_constraints(&t, &q, &[1], &m, &c);
                prop_assert!(!rep.per_uav[0].rate_ok);
            }
        }
    }
}
