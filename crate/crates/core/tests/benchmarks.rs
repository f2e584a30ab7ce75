mod common;

use std::sync::OnceLock;

use uav_insar::benchmarks::{self, SchemeId};
use uav_insar::comm::{self, PowerMode};
use uav_insar::problem::{self, Layout, AUDIT_TOLERANCE};
use uav_insar::{ExperimentConfig, SchemeResult};

use common::*;

fn results() -> &'static Vec<SchemeResult> {
    static R: OnceLock<Vec<SchemeResult>> = OnceLock::new();
    R.get_or_init(|| {
        let cfg = ExperimentConfig::table_i();
        let s = cfg.scenario().unwrap();
        SchemeId::ALL
            .iter()
            .map(|&id| benchmarks::run_scheme(id, &s, &cfg.settings(), cfg.q0_fixed()).unwrap())
            .collect()
    })
}

fn get(id: SchemeId) -> &'static SchemeResult {
    results().iter().find(|r| r.scheme == id).unwrap()
}

#[test]
fn all_schemes_feasible_at_defaults() {
    for r in results() {
        assert!(r.feasible, "{:?}: {:?}", r.scheme, r.reason);
        assert!(r.sigma_h.unwrap() <= r.sigma_h_bound.unwrap());
    }
}

#[test]
fn joint_optimization_has_the_smallest_dual_bound() {
    let p = get(SchemeId::Proposed).sigma_h_bound.unwrap();
    for id in [SchemeId::Bench1, SchemeId::Bench2, SchemeId::Bench3] {
        let b = get(id).sigma_h_bound.unwrap();
        assert!(p <= b * (1.0 + 1e-9), "{id:?}: proposed {p} vs {b}");
    }
}

#[test]
fn feasible_results_pass_the_exact_audit() {
    let base = table_i();
    for r in results() {
        let q = r.formation_array().unwrap();
        let mut s = base.clone();
        s.layout = r.layout;
        let rep = problem::audit(&s, &q, r.schedules.as_ref().unwrap());
        assert!(rep.passes(AUDIT_TOLERANCE), "{:?}: {:?}", r.scheme, rep.violations(AUDIT_TOLERANCE));
    }
}

#[test]
fn single_baseline_reports_the_single_pair() {
    let s = table_i();
    let r = get(SchemeId::Bench1);
    assert_eq!(r.layout, Layout::Single);
    let q = r.formation_array().unwrap();
    assert!(rel(r.sigma_h.unwrap(), pair_sigma(&s, q[0], q[1])) < 1e-9);
    let xt = s.mission.target_x;
    let th0 = s.mission.master_look_angle;
    let b = bound(&s, range(q[0], xt), b_perp_distance(q[1], xt, th0), 0.0);
    assert!(rel(r.sigma_h_bound.unwrap(), b) < 1e-9);
}

#[test]
fn fixed_master_stays_put() {
    let cfg = ExperimentConfig::table_i();
    let q = get(SchemeId::Bench2).formation_array().unwrap();
    assert_eq!(q[0], cfg.q0_fixed());
}

#[test]
fn static_power_uses_equal_energy_slots() {
    let s = table_i();
    let r = get(SchemeId::Bench3);
    let PowerMode::Fixed(p) = r.power else { panic!("expected fixed powers, got {:?}", r.power) };
    let sched = r.schedules.as_ref().unwrap();
    for k in 0..3 {
        assert!(sched.per_uav[k].iter().all(|&v| v == p));
    }
    let q = r.formation_array().unwrap();
    let rep = comm::check_power_constraints(sched, &q, &[0, 1, 2], &s.mission, &s.comm);
    for u in &rep.per_uav {
        assert!(u.energy_used <= s.comm.max_energy * (1.0 + 1e-12));
    }
}

#[test]
fn inadmissible_fixed_master_is_an_error() {
    let cfg = ExperimentConfig::table_i();
    let s = cfg.scenario().unwrap();
    // off the master line of sight
    let far = uav_insar::Position::new(0.0, 50.0);
    assert!(benchmarks::benchmark_fixed_master(&s, &cfg.settings(), far).is_err());
}
