//! Successive convex approximation per block inside alternating optimization
//! over the master and the slaves.

mod init;
pub mod subproblem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::{PowerMode, PowerSchedule};
use crate::convex::{self, ConvexError, SolveStatus, Tolerances};
use crate::geometry::Position;
use crate::metrics::MetricsError;
use crate::problem::{self, ConstraintCheck, Scenario, AUDIT_TOLERANCE};

pub use init::{initial_state, initial_state_with_master, state_for_formation};
pub use subproblem::{
    branch_slopes, build_master_subproblem, build_slave_subproblem, master_range_cap, slave_range_cap, Branch,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("starting point violates the original constraints: {}", describe(.0))]
    InfeasibleStart(Vec<ConstraintCheck>),
    #[error("no feasible starting point found: {0}")]
    NoFeasibleStart(String),
    #[error("subproblem infeasible at the first iterate ({0})")]
    SubproblemInfeasible(String),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn describe(v: &[ConstraintCheck]) -> String {
    v.iter()
        .map(|c| match c.other {
            Some(o) => format!("{:?}(u{}, u{}) slack {:.3e}", c.id, c.uav, o, c.slack),
            None => format!("{:?}(u{}) slack {:.3e}", c.id, c.uav, c.slack),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoOrdering {
    /// Each block sees the blocks already updated in the same pass.
    GaussSeidel,
    /// All blocks start from the previous pass; the combined iterate is audited.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub epsilon_master: f64,
    pub epsilon_slave: f64,
    pub epsilon_ao: f64,
    pub max_sca_iterations: usize,
    pub max_ao_iterations: usize,
    pub ordering: AoOrdering,
    pub power: PowerMode,
    /// Keep the master where the initial state puts it.
    pub fix_master: bool,
    pub tolerances: Tolerances,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            epsilon_master: 1e-2,
            epsilon_slave: 1e-2,
            epsilon_ao: 1e-2,
            max_sca_iterations: 50,
            max_ao_iterations: 30,
            ordering: AoOrdering::GaussSeidel,
            power: PowerMode::Optimize,
            fix_master: false,
            tolerances: Tolerances::default(),
        }
    }
}

/// One JSON-lines trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub phase: String,
    pub iteration: usize,
    pub bound: f64,
    pub sigma_h: Option<f64>,
    pub branch: Option<Branch>,
    pub solver_status: Option<SolveStatus>,
    pub max_constraint_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaState {
    /// Accepted iterates so far.
    pub iteration: usize,
    pub formation: [Position; 3],
    pub schedule: PowerSchedule,
    /// Worst-case bound after each accepted iterate.
    pub bound_trace: Vec<f64>,
    /// Branch chosen for each accepted slave iterate.
    pub branch_trace: Vec<(usize, Branch)>,
    /// Outer AO passes completed.
    pub ao_iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
}

impl ScaState {
    pub fn new(formation: [Position; 3], schedule: PowerSchedule) -> Self {
        Self {
            iteration: 0,
            formation,
            schedule,
            bound_trace: Vec::new(),
            branch_trace: Vec::new(),
            ao_iterations: 0,
            converged: false,
            trace: Vec::new(),
        }
    }

    fn record(&mut self, scenario: &Scenario, phase: &str, iteration: usize, branch: Option<Branch>, status: Option<SolveStatus>) {
        let audit = problem::audit(scenario, &self.formation, &self.schedule);
        self.trace.push(TraceRecord {
            phase: phase.to_string(),
            iteration,
            bound: scenario.bound(&self.formation),
            sigma_h: scenario.height_error(&self.formation).ok(),
            branch,
            solver_status: status,
            max_constraint_violation: audit.max_violation(),
        });
    }

    /// Trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace serializes") + "\n")
            .collect()
    }
}

/// Relative change used by every stopping rule.
fn relative_change(prev: f64, cur: f64) -> f64 {
    if prev == cur {
        0.0
    } else {
        ((prev - cur) / cur).abs()
    }
}

struct Candidate {
    q: Position,
    powers: Option<Vec<f64>>,
    bound: f64,
    status: SolveStatus,
}

fn apply(state: &ScaState, uav: usize, cand: &Candidate) -> ([Position; 3], PowerSchedule) {
    let mut q = state.formation;
    q[uav] = cand.q;
    let mut sched = state.schedule.clone();
    if let Some(p) = &cand.powers {
        // interior-point powers can sit a rounding error outside [0, P_max]
        sched.per_uav[uav] = p.clone();
    }
    (q, sched)
}

fn accept_if_better(state: &mut ScaState, scenario: &Scenario, uav: usize, cand: &Candidate) -> bool {
    let (q, sched) = apply(state, uav, cand);
    let prev = scenario.bound(&state.formation);
    if !(cand.bound <= prev) {
        return false;
    }
    if !problem::audit(scenario, &q, &sched).passes(AUDIT_TOLERANCE) {
        log::debug!("u{uav} iterate rejected by the exact audit");
        return false;
    }
    state.formation = q;
    state.schedule = sched;
    state.iteration += 1;
    state.bound_trace.push(cand.bound);
    true
}

fn solve_master_once(state: &ScaState, scenario: &Scenario, settings: &OptimizerSettings) -> Result<Candidate, OptimizerError> {
    let prog = build_master_subproblem(state, scenario, settings.power)?;
    let warm = subproblem::warm_start(state, 0, settings.power);
    let res = convex::solve(&prog, Some(&warm), &settings.tolerances);
    let z = res.x[subproblem::Z];
    // snap onto the line of sight, exact up to the equality residual
    let q = scenario.mission.master_on_locus(z);
    let mut f = state.formation;
    f[0] = q;
    Ok(Candidate {
        q,
        powers: power_part(&res.x, settings.power),
        bound: scenario.bound(&f),
        status: res.status,
    })
}

fn power_part(x: &[f64], power: PowerMode) -> Option<Vec<f64>> {
    match power {
        PowerMode::Optimize => Some(x[2..].to_vec()),
        PowerMode::Fixed(_) => None,
    }
}

/// SCA on the master block until the relative bound change drops below `epsilon_master`.
pub fn sca_master(state: &mut ScaState, scenario: &Scenario, settings: &OptimizerSettings) -> Result<(), OptimizerError> {
    let mut prev = scenario.bound(&state.formation);
    for i in 1..=settings.max_sca_iterations {
        let cand = solve_master_once(state, scenario, settings)?;
        if cand.status != SolveStatus::Optimal {
            state.record(scenario, "master", i, None, Some(cand.status));
            if i == 1 && cand.status == SolveStatus::Infeasible {
                return Err(OptimizerError::SubproblemInfeasible("master".into()));
            }
            break;
        }
        let accepted = accept_if_better(state, scenario, 0, &cand);
        state.record(scenario, "master", i, None, Some(cand.status));
        if !accepted {
            break;
        }
        let cur = scenario.bound(&state.formation);
        if relative_change(prev, cur) < settings.epsilon_master {
            break;
        }
        prev = cur;
    }
    Ok(())
}

fn solve_slave_branch(
    state: &ScaState,
    scenario: &Scenario,
    slave: usize,
    branch: Branch,
    settings: &OptimizerSettings,
) -> Result<Candidate, OptimizerError> {
    let prog = build_slave_subproblem(state, scenario, slave, branch, settings.power)?;
    let warm = subproblem::warm_start(state, slave, settings.power);
    let res = convex::solve(&prog, Some(&warm), &settings.tolerances);
    let q = Position::new(res.x[subproblem::X], res.x[subproblem::Z]);
    let mut f = state.formation;
    f[slave] = q;
    Ok(Candidate {
        q,
        powers: power_part(&res.x, settings.power),
        bound: scenario.bound(&f),
        status: res.status,
    })
}

/// Outcome of SCA confined to one branch.
struct BranchRun {
    branch: Branch,
    /// Last exactly feasible iterate; `None` when the first solve failed.
    best: Option<Candidate>,
    iterations: usize,
    first_status: SolveStatus,
}

/// SCA inside one branch, starting from the current state and moving its own expansion point.
fn branch_sca(
    state: &ScaState,
    scenario: &Scenario,
    slave: usize,
    branch: Branch,
    settings: &OptimizerSettings,
) -> Result<BranchRun, OptimizerError> {
    let mut local = ScaState::new(state.formation, state.schedule.clone());
    let mut run = BranchRun { branch, best: None, iterations: 0, first_status: SolveStatus::Optimal };
    for i in 1..=settings.max_sca_iterations {
        let cand = solve_slave_branch(&local, scenario, slave, branch, settings)?;
        if i == 1 {
            run.first_status = cand.status;
        }
        if cand.status != SolveStatus::Optimal || !cand.bound.is_finite() {
            break;
        }
        let (q, sched) = apply(&local, slave, &cand);
        if !problem::audit(scenario, &q, &sched).passes(AUDIT_TOLERANCE) {
            log::debug!("u{slave} {branch:?} iterate rejected by the exact audit");
            break;
        }
        let prev = run.best.as_ref().map(|c| c.bound);
        let cur = cand.bound;
        local.formation = q;
        local.schedule = sched;
        run.iterations = i;
        run.best = Some(cand);
        if prev.is_some_and(|p| relative_change(p, cur) < settings.epsilon_slave) {
            break;
        }
    }
    Ok(run)
}

/// SCA on slave `slave`: both branches are iterated concurrently to convergence and the smaller
/// bound is kept (ties go to `Ia`); the result is accepted only if it does not raise the bound.
pub fn sca_slave(
    state: &mut ScaState,
    scenario: &Scenario,
    slave: usize,
    settings: &OptimizerSettings,
) -> Result<(), OptimizerError> {
    let phase = format!("slave{slave}");
    let (a, b) = rayon::join(
        || branch_sca(state, scenario, slave, Branch::Ia, settings),
        || branch_sca(state, scenario, slave, Branch::Ib, settings),
    );
    let (a, b) = (a?, b?);
    let pick = match (&a.best, &b.best) {
        (Some(ca), Some(cb)) if cb.bound < ca.bound => Some(&b),
        (Some(_), _) => Some(&a),
        (None, Some(_)) => Some(&b),
        (None, None) => None,
    };
    let Some(run) = pick else {
        let both_infeasible = a.first_status == SolveStatus::Infeasible && b.first_status == SolveStatus::Infeasible;
        state.record(scenario, &phase, 0, None, Some(a.first_status));
        if both_infeasible {
            return Err(OptimizerError::SubproblemInfeasible(phase));
        }
        return Ok(());
    };
    let cand = run.best.as_ref().expect("picked run has an iterate");
    if accept_if_better(state, scenario, slave, cand) {
        state.iteration += run.iterations - 1;
        state.branch_trace.push((slave, run.branch));
    }
    state.record(scenario, &phase, run.iterations, Some(run.branch), Some(cand.status));
    Ok(())
}

/// Runs a block; a subproblem that cannot improve on a feasible point keeps the block unchanged.
fn run_block(
    state: &mut ScaState,
    scenario: &Scenario,
    uav: usize,
    settings: &OptimizerSettings,
) -> Result<(), OptimizerError> {
    let r = if uav == 0 {
        sca_master(state, scenario, settings)
    } else {
        sca_slave(state, scenario, uav, settings)
    };
    match r {
        Err(OptimizerError::SubproblemInfeasible(phase)) => {
            log::warn!("{phase} subproblem reported infeasible around a feasible point; block kept");
            Ok(())
        }
        other => other,
    }
}

fn blocks(scenario: &Scenario, settings: &OptimizerSettings) -> Vec<usize> {
    let mut v = Vec::new();
    if !settings.fix_master {
        v.push(0);
    }
    v.extend_from_slice(scenario.layout.slaves());
    v
}

/// Alternating optimization from a feasible starting state.
pub fn alternating_optimize(
    initial: ScaState,
    scenario: &Scenario,
    settings: &OptimizerSettings,
) -> Result<ScaState, OptimizerError> {
    let audit = problem::audit(scenario, &initial.formation, &initial.schedule);
    if !audit.passes(AUDIT_TOLERANCE) {
        return Err(OptimizerError::InfeasibleStart(audit.violations(AUDIT_TOLERANCE)));
    }
    let mut state = initial;
    if state.bound_trace.is_empty() {
        state.bound_trace.push(scenario.bound(&state.formation));
    }
    state.record(scenario, "init", 0, None, None);
    let order = blocks(scenario, settings);
    let mut prev = scenario.bound(&state.formation);
    for m in 1..=settings.max_ao_iterations {
        match settings.ordering {
            AoOrdering::GaussSeidel => {
                for &u in &order {
                    run_block(&mut state, scenario, u, settings)?;
                }
            }
            AoOrdering::Jacobi => {
                let base = state.clone();
                let mut results = Vec::new();
                for &u in &order {
                    let mut s = base.clone();
                    s.trace.clear();
                    run_block(&mut s, scenario, u, settings)?;
                    results.push((u, s));
                }
                let mut q = base.formation;
                let mut sched = base.schedule.clone();
                for (u, s) in &results {
                    q[*u] = s.formation[*u];
                    sched.per_uav[*u] = s.schedule.per_uav[*u].clone();
                }
                let combined = problem::audit(scenario, &q, &sched);
                let bound = scenario.bound(&q);
                if combined.passes(AUDIT_TOLERANCE) && bound <= prev {
                    state.formation = q;
                    state.schedule = sched;
                    state.iteration += 1;
                    state.bound_trace.push(bound);
                } else {
                    // joint move broke a coupling constraint: keep the best single-block move
                    let best = results
                        .iter()
                        .map(|(u, s)| (*u, scenario.bound(&s.formation)))
                        .filter(|&(_, b)| b < prev)
                        .min_by(|a, b| a.1.total_cmp(&b.1));
                    let Some((u, b)) = best else {
                        log::info!("no block improves at pass {m}; stopping");
                        state.ao_iterations = m;
                        state.record(scenario, "ao", m, None, None);
                        break;
                    };
                    let s = &results.iter().find(|(v, _)| *v == u).expect("block present").1;
                    state.formation[u] = s.formation[u];
                    state.schedule.per_uav[u] = s.schedule.per_uav[u].clone();
                    state.iteration += 1;
                    state.bound_trace.push(b);
                }
            }
        }
        state.ao_iterations = m;
        state.record(scenario, "ao", m, None, None);
        let cur = scenario.bound(&state.formation);
        if relative_change(prev, cur) <= settings.epsilon_ao {
            state.converged = true;
            break;
        }
        prev = cur;
    }
    Ok(state)
}
