//! Problem data shared by the optimizer, the benchmarks and the oracles, and
//! the exact (non-convexified) constraint audit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::{self, CommConfig, PowerMode, PowerSchedule, SlotProfile};
use crate::geometry::{self, MissionConfig, Position};
use crate::metrics::{self, RadarConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid constraint configuration: {0}")]
    InvalidLimits(&'static str),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Comm(#[from] comm::CommError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub z_min: f64,
    pub z_max: f64,
    /// Slave look-angle window, radians.
    pub theta_min: f64,
    pub theta_max: f64,
    pub d_min: f64,
    /// Minimum swath width, meters.
    pub s_min: f64,
    pub gamma_snr_min: f64,
    pub gamma_rg_min: f64,
    /// Minimum height of ambiguity, meters.
    pub h_amb_min: f64,
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.z_min > 0.0 && self.z_min < self.z_max) {
            return Err(ProblemError::InvalidLimits("need 0 < z_min < z_max"));
        }
        if !(self.theta_min > 0.0 && self.theta_min < self.theta_max && self.theta_max < std::f64::consts::FRAC_PI_2) {
            return Err(ProblemError::InvalidLimits("need 0 < theta_min < theta_max < pi/2"));
        }
        if !(self.d_min > 0.0 && self.s_min > 0.0 && self.h_amb_min > 0.0) {
            return Err(ProblemError::InvalidLimits("d_min, s_min and h_amb_min must be positive"));
        }
        let unit = |g: f64| g > 0.0 && g < 1.0;
        if !(unit(self.gamma_snr_min) && unit(self.gamma_rg_min)) {
            return Err(ProblemError::InvalidLimits("coherence thresholds must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Which UAVs take part in the acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Master plus two slaves.
    Dual,
    /// Master plus slave 1 only.
    Single,
}

impl Layout {
    pub fn slaves(self) -> &'static [usize] {
        match self {
            Layout::Dual => &[1, 2],
            Layout::Single => &[1],
        }
    }

    pub fn uavs(self) -> &'static [usize] {
        match self {
            Layout::Dual => &[0, 1, 2],
            Layout::Single => &[0, 1],
        }
    }
}

/// Everything that defines one instance of the formation/power problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mission: MissionConfig,
    pub radar: RadarConfig,
    pub comm: CommConfig,
    pub limits: ConstraintConfig,
    pub layout: Layout,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ProblemError> {
        self.radar.validate()?;
        self.comm.validate()?;
        self.limits.validate()
    }

    pub fn theta0(&self) -> f64 {
        self.mission.master_look_angle
    }

    pub fn target_x(&self) -> f64 {
        self.mission.target_x
    }

    /// Worst-case height bound for a formation under this layout.
    pub fn bound(&self, q: &[Position; 3]) -> f64 {
        metrics::formation_height_bound(q, self.layout.slaves(), &self.mission, &self.radar, &self.limits)
    }

    /// Actual fused height error of a formation under this layout.
    pub fn height_error(&self, q: &[Position; 3]) -> Result<f64, metrics::MetricsError> {
        metrics::formation_height_error(q, self.layout.slaves(), &self.mission, &self.radar)
    }

    /// Largest perpendicular baseline allowed by the ambiguity floor for a master at range `r0`.
    pub fn baseline_cap(&self, r0: f64) -> f64 {
        self.radar.wavelength * r0 * self.theta0().sin() / self.limits.h_amb_min
    }

    /// Exact master-only conditions: C1, C2, C3, C5 and C9-C11.
    pub fn master_admissible(&self, q0: Position, power: PowerMode, profile: &SlotProfile) -> bool {
        let l = &self.limits;
        let tx = self.target_x();
        let th = geometry::look_angle(q0, tx);
        q0.z >= l.z_min
            && q0.z <= l.z_max
            && (th - self.theta0()).abs() <= 1e-12
            && th >= l.theta_min
            && th <= l.theta_max
            && geometry::swath_width(q0, tx, self.radar.beamwidth) >= l.s_min
            && power.supports(q0, profile, &self.comm, 0, self.mission.slot_duration)
    }

    /// Exact conditions on slave `k` given the master: C1, C3, C5-C8 and C9-C11.
    pub fn slave_admissible(&self, q0: Position, qk: Position, k: usize, power: PowerMode, profile: &SlotProfile) -> bool {
        let l = &self.limits;
        let tx = self.target_x();
        if !(qk.z >= l.z_min && qk.z <= l.z_max) {
            return false;
        }
        let th = geometry::look_angle(qk, tx);
        if !(th >= l.theta_min && th <= l.theta_max) {
            return false;
        }
        if geometry::swath_width(qk, tx, self.radar.beamwidth) < l.s_min {
            return false;
        }
        let r0 = geometry::slant_range(q0, tx);
        let rk = geometry::slant_range(qk, tx);
        if self.snr_coherence(r0, rk) < l.gamma_snr_min {
            return false;
        }
        match metrics::baseline_decorrelation(qk, tx, self.theta0(), &self.radar) {
            Ok(g) if g >= l.gamma_rg_min => {}
            _ => return false,
        }
        if geometry::perpendicular_baseline(qk, tx, self.theta0()) > self.baseline_cap(r0) {
            return false;
        }
        power.supports(qk, profile, &self.comm, k, self.mission.slot_duration)
    }

    /// SNR coherence of slave pair `k` for the given ranges.
    pub fn snr_coherence(&self, r0: f64, rk: f64) -> f64 {
        metrics::snr_decorrelation(
            metrics::monostatic_snr(r0, &self.radar),
            metrics::bistatic_snr_approx(r0, rk, &self.radar),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
}

/// One evaluated constraint; `slack >= 0` means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub id: ConstraintId,
    /// UAV index (the lower index for pairwise constraints).
    pub uav: usize,
    /// Second UAV for pairwise constraints.
    pub other: Option<usize>,
    /// `(value - bound) / max(|bound|, 1)`, oriented so that negative means violated.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<ConstraintCheck>,
}

/// Default audit tolerance on normalized slacks.
pub const AUDIT_TOLERANCE: f64 = 1e-8;

impl AuditReport {
    pub fn min_slack(&self) -> f64 {
        self.checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }

    /// Largest violation, zero when every check passes.
    pub fn max_violation(&self) -> f64 {
        (-self.min_slack()).max(0.0)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.min_slack() >= -tol
    }

    pub fn violations(&self, tol: f64) -> Vec<ConstraintCheck> {
        self.checks.iter().copied().filter(|c| c.slack < -tol).collect()
    }
}

fn normalized(value: f64, bound: f64) -> f64 {
    (value - bound) / bound.abs().max(1.0)
}

/// Exact C1-C11 evaluation for the UAVs of `scenario.layout`.
pub fn audit(scenario: &Scenario, q: &[Position; 3], schedule: &PowerSchedule) -> AuditReport {
    let Scenario { mission, radar, comm, limits, layout } = scenario;
    let tx = mission.target_x;
    let theta0 = mission.master_look_angle;
    let uavs = layout.uavs();
    let mut checks = Vec::new();
    let mut push = |id, uav, other, slack: f64| {
        // NaN never passes
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        checks.push(ConstraintCheck { id, uav, other, slack })
    };

    for &k in uavs {
        push(ConstraintId::C1, k, None, normalized(q[k].z, limits.z_min));
        push(ConstraintId::C1, k, None, normalized(limits.z_max, q[k].z));
    }

    let theta_master = geometry::look_angle(q[0], tx);
    push(ConstraintId::C2, 0, None, -(theta_master - theta0).abs() / theta0.max(1.0));

    for &k in uavs {
        let th = geometry::look_angle(q[k], tx);
        push(ConstraintId::C3, k, None, normalized(th, limits.theta_min));
        push(ConstraintId::C3, k, None, normalized(limits.theta_max, th));
    }

    for (i, &a) in uavs.iter().enumerate() {
        for &b in &uavs[i + 1..] {
            push(ConstraintId::C4, a, Some(b), normalized(q[a].distance(&q[b]), limits.d_min));
        }
    }

    for &k in uavs {
        let s = geometry::swath_width(q[k], tx, radar.beamwidth);
        push(ConstraintId::C5, k, None, normalized(s, limits.s_min));
    }

    let r0 = geometry::slant_range(q[0], tx);
    for &k in layout.slaves() {
        let rk = geometry::slant_range(q[k], tx);
        push(ConstraintId::C6, k, None, normalized(scenario.snr_coherence(r0, rk), limits.gamma_snr_min));
        let rg = metrics::baseline_decorrelation(q[k], tx, theta0, radar).unwrap_or(f64::NEG_INFINITY);
        push(ConstraintId::C7, k, None, normalized(rg, limits.gamma_rg_min));
        let b = geometry::perpendicular_baseline(q[k], tx, theta0);
        // compared as b <= lambda r0 sin(theta0) / h_min so that b = 0 is finite
        push(ConstraintId::C8, k, None, normalized(scenario.baseline_cap(r0), b));
    }

    let report = comm::check_power_constraints(schedule, q, uavs, mission, comm);
    for r in &report.per_uav {
        let p = &schedule.per_uav[r.uav];
        let peak_slack = if p.len() != mission.n_slots {
            f64::NEG_INFINITY
        } else {
            p.iter()
                .map(|&pn| normalized(pn, 0.0).min(normalized(comm.max_power, pn)))
                .fold(f64::INFINITY, f64::min)
        };
        push(ConstraintId::C9, r.uav, None, peak_slack);
        push(ConstraintId::C10, r.uav, None, r.rate_slack);
        push(ConstraintId::C11, r.uav, None, normalized(comm.max_energy, r.energy_used));
    }

    AuditReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::SlotProfile;

    fn scenario() -> Scenario {
        crate::experiment::ExperimentConfig::table_i().scenario().unwrap()
    }

    #[test]
    fn audit_flags_each_family() {
        let s = scenario();
        let q0 = s.mission.master_on_locus(74.0);
        let q = [q0, Position::new(-33.0, 61.0), Position::new(-40.0, 66.0)];
        let profile = SlotProfile::new(&s.mission, &s.comm);
        let mut sched = PowerSchedule::empty();
        for k in 0..3 {
            sched.per_uav[k] = comm::min_power_schedule(q[k], &profile, &s.comm, k)
                .iter()
                .map(|p| p * 1.01)
                .collect();
        }
        let rep = audit(&s, &q, &sched);
        assert_eq!(rep.checks.iter().filter(|c| c.id == ConstraintId::C4).count(), 3);

        let mut bad = q;
        bad[0].x += 1.0;
        let rep = audit(&s, &bad, &sched);
        assert!(rep.violations(AUDIT_TOLERANCE).iter().any(|c| c.id == ConstraintId::C2));

        let mut low = sched.clone();
        low.per_uav[2][5] *= 0.5;
        let rep = audit(&s, &q, &low);
        assert!(rep.violations(AUDIT_TOLERANCE).iter().any(|c| c.id == ConstraintId::C10 && c.uav == 2));
    }

    #[test]
    fn single_layout_ignores_slave_two() {
        let mut s = scenario();
        s.layout = Layout::Single;
        let q0 = s.mission.master_on_locus(74.0);
        let q = [q0, Position::new(-33.0, 61.0), Position::new(f64::NAN, f64::NAN)];
        let rep = audit(&s, &q, &PowerSchedule::empty());
        assert!(rep.checks.iter().all(|c| c.uav != 2 && c.other != Some(2)));
    }

    #[test]
    fn zero_baseline_meets_ambiguity_floor() {
        let s = scenario();
        let q0 = s.mission.master_on_locus(74.0);
        let on_los = s.mission.master_on_locus(60.0);
        let q = [q0, on_los, Position::new(-40.0, 66.0)];
        let rep = audit(&s, &q, &PowerSchedule::empty());
        let c8 = rep.checks.iter().find(|c| c.id == ConstraintId::C8 && c.uav == 1).unwrap();
        assert!(c8.slack > 0.0);
    }
}
