//! The proposed scheme and the three comparison schemes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::{PowerMode, PowerSchedule, SlotProfile};
use crate::geometry::Position;
use crate::optimizer::{self, OptimizerError, OptimizerSettings, ScaState, TraceRecord};
use crate::problem::{self, Layout, Scenario, AUDIT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeId {
    Proposed,
    /// Single baseline: master and slave 1 only.
    Bench1,
    /// Master fixed at a given position.
    Bench2,
    /// Constant power `E_max / N` in every slot.
    Bench3,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::Proposed, SchemeId::Bench1, SchemeId::Bench2, SchemeId::Bench3];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Proposed => "proposed",
            SchemeId::Bench1 => "bench1",
            SchemeId::Bench2 => "bench2",
            SchemeId::Bench3 => "bench3",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown scheme `{0}` (expected proposed, bench1, bench2 or bench3)")]
pub struct UnknownScheme(pub String);

impl FromStr for SchemeId {
    type Err = UnknownScheme;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s.trim())
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("fixed master position ({x}, {z}) is infeasible: {reason}")]
    InfeasibleFixedMaster { x: f64, z: f64, reason: String },
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: SchemeId,
    pub feasible: bool,
    /// Fused (or single-pair) height error at the returned formation, meters.
    pub sigma_h: Option<f64>,
    /// Worst-case bound at the returned formation, meters.
    pub sigma_h_bound: Option<f64>,
    /// Positions of the participating UAVs, master first.
    pub formation: Option<Vec<Position>>,
    pub schedules: Option<PowerSchedule>,
    /// Accepted SCA iterates.
    pub iterations: usize,
    pub ao_iterations: usize,
    pub converged: bool,
    pub layout: Layout,
    pub power: PowerMode,
    /// Why the scheme is infeasible, when it is.
    pub reason: Option<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl SchemeResult {
    fn infeasible(scheme: SchemeId, scenario: &Scenario, power: PowerMode, reason: String) -> Self {
        Self {
            scheme,
            feasible: false,
            sigma_h: None,
            sigma_h_bound: None,
            formation: None,
            schedules: None,
            iterations: 0,
            ao_iterations: 0,
            converged: false,
            layout: scenario.layout,
            power,
            reason: Some(reason),
            trace: Vec::new(),
        }
    }

    fn from_state(scheme: SchemeId, scenario: &Scenario, power: PowerMode, state: ScaState) -> Self {
        let audit = problem::audit(scenario, &state.formation, &state.schedule);
        let feasible = audit.passes(AUDIT_TOLERANCE);
        let uavs = scenario.layout.uavs();
        Self {
            scheme,
            feasible,
            sigma_h: scenario.height_error(&state.formation).ok(),
            sigma_h_bound: Some(scenario.bound(&state.formation)),
            formation: Some(uavs.iter().map(|&k| state.formation[k]).collect()),
            schedules: Some(state.schedule.clone()),
            iterations: state.iteration,
            ao_iterations: state.ao_iterations,
            converged: state.converged,
            layout: scenario.layout,
            power,
            reason: (!feasible).then(|| format!("final audit failed, max violation {:e}", audit.max_violation())),
            trace: state.trace,
        }
    }

    /// Formation as a fixed array; an absent slave is NaN.
    pub fn formation_array(&self) -> Option<[Position; 3]> {
        let f = self.formation.as_ref()?;
        let nan = Position::new(f64::NAN, f64::NAN);
        Some([f[0], f.get(1).copied().unwrap_or(nan), f.get(2).copied().unwrap_or(nan)])
    }
}

fn outcome(
    scheme: SchemeId,
    scenario: &Scenario,
    settings: &OptimizerSettings,
    start: Result<ScaState, OptimizerError>,
) -> Result<SchemeResult, BenchmarkError> {
    let state = match start {
        Ok(s) => s,
        Err(e @ (OptimizerError::NoFeasibleStart(_) | OptimizerError::InfeasibleStart(_))) => {
            return Ok(SchemeResult::infeasible(scheme, scenario, settings.power, e.to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let state = optimizer::alternating_optimize(state, scenario, settings)?;
    Ok(SchemeResult::from_state(scheme, scenario, settings.power, state))
}

/// Joint master, slave and power optimization of the dual-baseline swarm.
pub fn run_proposed(scenario: &Scenario, settings: &OptimizerSettings) -> Result<SchemeResult, BenchmarkError> {
    let mut s = scenario.clone();
    s.layout = Layout::Dual;
    let mut settings = *settings;
    settings.power = PowerMode::Optimize;
    settings.fix_master = false;
    outcome(SchemeId::Proposed, &s, &settings, optimizer::initial_state(&s, &settings))
}

/// Master and slave 1 only; the bound and the error are those of the single pair.
pub fn benchmark_single_baseline(scenario: &Scenario, settings: &OptimizerSettings) -> Result<SchemeResult, BenchmarkError> {
    let mut s = scenario.clone();
    s.layout = Layout::Single;
    let mut settings = *settings;
    settings.power = PowerMode::Optimize;
    settings.fix_master = false;
    outcome(SchemeId::Bench1, &s, &settings, optimizer::initial_state(&s, &settings))
}

/// Slaves and powers optimized around a fixed master.
pub fn benchmark_fixed_master(
    scenario: &Scenario,
    settings: &OptimizerSettings,
    q0_fixed: Position,
) -> Result<SchemeResult, BenchmarkError> {
    let mut s = scenario.clone();
    s.layout = Layout::Dual;
    let mut settings = *settings;
    settings.power = PowerMode::Optimize;
    settings.fix_master = true;
    let profile = SlotProfile::new(&s.mission, &s.comm);
    if !s.master_admissible(q0_fixed, settings.power, &profile) {
        return Err(BenchmarkError::InfeasibleFixedMaster {
            x: q0_fixed.x,
            z: q0_fixed.z,
            reason: "violates C1, C2, C3, C5 or C9-C11 on its own".into(),
        });
    }
    outcome(SchemeId::Bench2, &s, &settings, optimizer::initial_state_with_master(&s, &settings, q0_fixed))
}

/// Formation optimized with every slot power fixed at `E_max / N`.
pub fn benchmark_static_power(scenario: &Scenario, settings: &OptimizerSettings) -> Result<SchemeResult, BenchmarkError> {
    let mut s = scenario.clone();
    s.layout = Layout::Dual;
    let mut settings = *settings;
    let n = s.mission.n_slots as f64;
    let p = s.comm.max_energy / (n * s.comm.energy_weight(s.mission.slot_duration));
    settings.power = PowerMode::Fixed(p);
    settings.fix_master = false;
    outcome(SchemeId::Bench3, &s, &settings, optimizer::initial_state(&s, &settings))
}

pub fn run_scheme(
    scheme: SchemeId,
    scenario: &Scenario,
    settings: &OptimizerSettings,
    q0_fixed: Position,
) -> Result<SchemeResult, BenchmarkError> {
    match scheme {
        SchemeId::Proposed => run_proposed(scenario, settings),
        SchemeId::Bench1 => benchmark_single_baseline(scenario, settings),
        SchemeId::Bench2 => benchmark_fixed_master(scenario, settings, q0_fixed),
        SchemeId::Bench3 => benchmark_static_power(scenario, settings),
    }
}
