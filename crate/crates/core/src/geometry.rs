//! Mission and swarm geometry in the across-track plane.
//!
//! All three UAVs fly the same straight along-track line `y[n]`, so the
//! formation is fully described by one `(x, z)` pair per UAV. Ranges, look
//! angles, swath widths and baselines are pure functions of those pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("altitude must be strictly positive, got z = {0}")]
    NonPositiveAltitude(f64),
    #[error("formation positions {0} and {1} coincide")]
    CoincidentPositions(usize, usize),
    #[error("invalid mission parameter: {0}")]
    InvalidMission(&'static str),
}

/// Position of one UAV in the across-track (x, z) plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    /// Checked constructor: UAVs must be above ground.
    pub fn airborne(x: f64, z: f64) -> Result<Self, GeometryError> {
        if z > 0.0 && z.is_finite() && x.is_finite() {
            Ok(Self { x, z })
        } else {
            Err(GeometryError::NonPositiveAltitude(z))
        }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.z * self.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    /// Number of time slots `N`.
    pub n_slots: usize,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Along-track velocity in m/s.
    pub velocity: f64,
    /// Across-track coordinate of the imaged reference line, meters.
    pub target_x: f64,
    /// Fixed master look angle, radians.
    pub master_look_angle: f64,
}

impl MissionConfig {
    pub fn new(
        n_slots: usize,
        slot_duration: f64,
        velocity: f64,
        target_x: f64,
        master_look_angle: f64,
    ) -> Result<Self, GeometryError> {
        if n_slots == 0 {
            return Err(GeometryError::InvalidMission("n_slots must be at least 1"));
        }
        if !(slot_duration > 0.0) {
            return Err(GeometryError::InvalidMission("slot_duration must be positive"));
        }
        if !(velocity > 0.0) {
            return Err(GeometryError::InvalidMission("velocity must be positive"));
        }
        if !(master_look_angle > 0.0 && master_look_angle < std::f64::consts::FRAC_PI_2) {
            return Err(GeometryError::InvalidMission(
                "master look angle must lie in (0, pi/2)",
            ));
        }
        Ok(Self {
            n_slots,
            slot_duration,
            velocity,
            target_x,
            master_look_angle,
        })
    }

    /// Point on the master line-of-sight locus at altitude `z`.
    pub fn master_on_locus(&self, z: f64) -> Position {
        Position::new(self.target_x - z * self.master_look_angle.tan(), z)
    }
}

/// Across-track positions of the master (index 0) and the two slaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwarmFormation {
    pub q: [Position; 3],
}

impl SwarmFormation {
    pub fn new(q0: Position, q1: Position, q2: Position) -> Result<Self, GeometryError> {
        let q = [q0, q1, q2];
        for p in &q {
            if !(p.z > 0.0) {
                return Err(GeometryError::NonPositiveAltitude(p.z));
            }
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                if q[i] == q[j] {
                    return Err(GeometryError::CoincidentPositions(i, j));
                }
            }
        }
        Ok(Self { q })
    }

    pub fn master(&self) -> Position {
        self.q[0]
    }
}

/// Shared along-track coordinates `y[1..=N]`, starting at zero.
pub fn along_track_positions(mission: &MissionConfig) -> Vec<f64> {
    let step = mission.velocity * mission.slot_duration;
    (0..mission.n_slots).map(|n| n as f64 * step).collect()
}

/// Slant range to the reference line; independent of the slot.
pub fn slant_range(q: Position, target_x: f64) -> f64 {
    (q.x - target_x).hypot(q.z)
}

/// Look angle with respect to the vertical that centers the beam on the target line.
pub fn look_angle(q: Position, target_x: f64) -> f64 {
    ((target_x - q.x) / q.z).atan()
}

/// Approximate ground swath width for an elevation beamwidth in radians.
pub fn swath_width(q: Position, target_x: f64, beamwidth: f64) -> f64 {
    beamwidth * slant_range(q, target_x) / look_angle(q, target_x).cos()
}

/// Interferometric baseline between two sensors.
pub fn baseline(q0: Position, qk: Position) -> f64 {
    q0.distance(&qk)
}

/// Perpendicular baseline of slave `qk` for a master on its line-of-sight locus.
///
/// Only depends on the slave position and the master look angle.
pub fn perpendicular_baseline(qk: Position, target_x: f64, theta0: f64) -> f64 {
    signed_baseline_offset(qk, target_x, theta0).abs() * theta0.cos()
}

/// `(x_t - x_k) - tan(theta0) * z_k`: negative below the master look angle
/// and positive above it. The perpendicular baseline is its magnitude
/// scaled by `cos(theta0)`.
pub fn signed_baseline_offset(qk: Position, target_x: f64, theta0: f64) -> f64 {
    (target_x - qk.x) - theta0.tan() * qk.z
}

/// Perpendicular baseline as the projection `b_k cos(theta0 - alpha_k)` of the
/// baseline vector onto the normal of the master line of sight.
pub fn perpendicular_baseline_projected(q0: Position, qk: Position, theta0: f64) -> f64 {
    let b = baseline(q0, qk);
    if b == 0.0 {
        return 0.0;
    }
    let alpha = (qk.z - q0.z).atan2(qk.x - q0.x);
    (b * (theta0 - alpha).cos()).abs()
}
