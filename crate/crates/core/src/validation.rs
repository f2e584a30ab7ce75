//! Independent oracles: Monte Carlo interferometric phase and brute-force formation search.
//!
//! Phase model: per look, a jointly circular complex Gaussian pair with unit
//! power and correlation `coherence`. The interferogram is the sum of
//! `s1 * conj(s2)` over the looks; its argument is the phase estimate.
//!
//! Random streams are ChaCha8 seeded with the user seed, one stream per chunk
//! of [`CHUNK`] samples; chunk results are reduced in index order, so the
//! output does not depend on the thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::{self, PowerMode, PowerSchedule, SlotProfile};
use crate::geometry::{self, Position};
use crate::metrics;
use crate::problem::{self, Layout, Scenario, AUDIT_TOLERANCE};

/// Samples per random stream.
pub const CHUNK: usize = 4096;

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), stream = chunk index";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("coherence {0} outside (0, 1)")]
    Coherence(f64),
    #[error("looks must be positive and samples at least two")]
    EmptySpec,
    #[error("grid step {0} m below 0.1 m")]
    GridStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub coherence: f64,
    pub looks: u32,
    pub samples: usize,
    pub seed: u64,
}

impl MonteCarloSpec {
    fn validate(&self) -> Result<(), ValidationError> {
        if !(self.coherence > 0.0 && self.coherence < 1.0) {
            return Err(ValidationError::Coherence(self.coherence));
        }
        if self.looks == 0 || self.samples < 2 {
            return Err(ValidationError::EmptySpec);
        }
        Ok(())
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    (a * std::f64::consts::FRAC_1_SQRT_2, b * std::f64::consts::FRAC_1_SQRT_2)
}

/// One multilook interferometric phase with true phase zero.
fn multilook_phase(rng: &mut ChaCha8Rng, coherence: f64, looks: u32) -> f64 {
    let c = (1.0 - coherence * coherence).sqrt();
    let (mut re, mut im) = (0.0, 0.0);
    for _ in 0..looks {
        let (ar, ai) = complex_normal(rng);
        let (br, bi) = complex_normal(rng);
        let (s2r, s2i) = (coherence * ar + c * br, coherence * ai + c * bi);
        // s1 * conj(s2)
        re += ar * s2r + ai * s2i;
        im += ai * s2r - ar * s2i;
    }
    im.atan2(re)
}

fn chunked<T: Send>(samples: usize, seed: u64, draw: impl Fn(&mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<T>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Sample standard deviation (n - 1 normalization).
pub fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Simulated phases, in sample order.
pub fn simulate_phases(spec: &MonteCarloSpec) -> Result<Vec<f64>, ValidationError> {
    spec.validate()?;
    let (g, l) = (spec.coherence, spec.looks);
    Ok(chunked(spec.samples, spec.seed, |rng| multilook_phase(rng, g, l)))
}

/// Standard deviation of the multilook phase estimate, radians.
pub fn simulate_phase_std(spec: &MonteCarloSpec) -> Result<f64, ValidationError> {
    Ok(sample_std(&simulate_phases(spec)?))
}

/// One interferometric pair as seen by the fusion oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub coherence: f64,
    /// Height of ambiguity, meters.
    pub hoa: f64,
}

impl PairSpec {
    /// Model height error of this pair.
    pub fn model_sigma(&self, looks: u32) -> f64 {
        metrics::crb_phase_std(self.coherence, looks)
            .map(|s| metrics::pair_height_error(self.hoa, s))
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub pairs: [PairSpec; 2],
    pub looks: u32,
    pub samples: usize,
    pub seed: u64,
}

impl FusionSpec {
    /// Pairs taken from a dual-baseline formation.
    pub fn from_formation(
        scenario: &Scenario,
        q: &[Position; 3],
        samples: usize,
        seed: u64,
    ) -> Result<Self, metrics::MetricsError> {
        let pair = |k: usize| -> Result<PairSpec, metrics::MetricsError> {
            let p = metrics::pair_quality(q[0], q[k], &scenario.mission, &scenario.radar)?;
            Ok(PairSpec { coherence: p.coherence.total, hoa: p.height_of_ambiguity })
        };
        Ok(Self { pairs: [pair(1)?, pair(2)?], looks: scenario.radar.looks, samples, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedMonteCarlo {
    /// Empirical std of the fused height estimate, meters.
    pub fused_std: f64,
    /// Empirical std of each pair's height estimate, meters.
    pub pair_std: [f64; 2],
    /// Inverse-variance weights from the model errors.
    pub weights: [f64; 2],
    /// Weighted-average error with the model weights and the empirical pair errors.
    pub predicted_from_pairs: f64,
    /// Fused error with model weights and model pair errors.
    pub predicted_model: f64,
}

/// Per-pair DEM errors `hoa * phi / 2 pi` fused with inverse-variance model weights.
pub fn simulate_fused_height_error(spec: &FusionSpec) -> Result<FusedMonteCarlo, ValidationError> {
    for p in &spec.pairs {
        MonteCarloSpec { coherence: p.coherence, looks: spec.looks, samples: spec.samples, seed: spec.seed }
            .validate()?;
    }
    let sig = spec.pairs.map(|p| p.model_sigma(spec.looks));
    let w = sig.map(|s| s.powi(-2));
    let [p1, p2] = spec.pairs;
    let looks = spec.looks;
    let draws = chunked(spec.samples, spec.seed, |rng| {
        let h1 = p1.hoa * multilook_phase(rng, p1.coherence, looks) / (2.0 * PI);
        let h2 = p2.hoa * multilook_phase(rng, p2.coherence, looks) / (2.0 * PI);
        (h1, h2, (w[0] * h1 + w[1] * h2) / (w[0] + w[1]))
    });
    let h1: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let h2: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let fused: Vec<f64> = draws.iter().map(|d| d.2).collect();
    let pair_std = [sample_std(&h1), sample_std(&h2)];
    Ok(FusedMonteCarlo {
        fused_std: sample_std(&fused),
        pair_std,
        weights: w,
        predicted_from_pairs: metrics::weighted_fusion_error(&w, &pair_std),
        predicted_model: metrics::weighted_fusion_error(&w, &sig),
    })
}

/// Formation and its bound.
type Best = ([Position; 3], f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub grid_step: f64,
    /// Best formation (absent slave NaN) and its bound; `None` when the grid is infeasible.
    pub best: Option<([Position; 3], f64)>,
    /// Admissible (master, slave) candidate pairs summed over master altitudes and slaves.
    pub feasible_candidates: usize,
    pub masters_checked: usize,
    /// Whether the best formation passes the exact audit with minimal-power schedules.
    pub audit_passed: bool,
}

impl GridResult {
    pub fn bound(&self) -> Option<f64> {
        self.best.map(|b| b.1)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    q: Position,
    b2: f64,
}

/// Exhaustive search: master on the line of sight at `grid_step` altitude
/// spacing, slaves on the `grid_step` lattice of the altitude and look-angle box.
pub fn grid_search_formation(
    scenario: &Scenario,
    power: PowerMode,
    grid_step: f64,
) -> Result<GridResult, ValidationError> {
    if !(grid_step >= 0.1) {
        return Err(ValidationError::GridStep(grid_step));
    }
    let l = &scenario.limits;
    let tx = scenario.target_x();
    let th0 = scenario.theta0();
    let profile = SlotProfile::new(&scenario.mission, &scenario.comm);
    let slaves = scenario.layout.slaves();

    let x_lo = tx - l.theta_max.tan() * l.z_max;
    let x_hi = tx - l.theta_min.tan() * l.z_min;
    let nx = ((x_hi - x_lo) / grid_step).floor() as usize;
    let nz = ((l.z_max - l.z_min) / grid_step).floor() as usize;
    let lattice: Vec<Position> = (0..=nz)
        .flat_map(|j| {
            (0..=nx).map(move |i| Position::new(x_lo + i as f64 * grid_step, l.z_min + j as f64 * grid_step))
        })
        .collect();

    // master-independent filtering: C1, C3, C5, C7 and the link constraints
    let static_ok = |q: Position, k: usize| -> bool {
        let th = geometry::look_angle(q, tx);
        q.z >= l.z_min
            && q.z <= l.z_max
            && th >= l.theta_min
            && th <= l.theta_max
            && geometry::swath_width(q, tx, scenario.radar.beamwidth) >= l.s_min
            && matches!(metrics::baseline_decorrelation(q, tx, th0, &scenario.radar), Ok(g) if g >= l.gamma_rg_min)
            && power.supports(q, &profile, &scenario.comm, k, scenario.mission.slot_duration)
    };
    let mut pools: Vec<Vec<Candidate>> = slaves
        .iter()
        .map(|&k| {
            lattice
                .par_iter()
                .filter(|&&q| static_ok(q, k))
                .map(|&q| Candidate { q, b2: geometry::perpendicular_baseline(q, tx, th0).powi(2) })
                .collect()
        })
        .collect();
    for pool in &mut pools {
        pool.sort_by(|a, b| b.b2.total_cmp(&a.b2));
    }

    let nm = ((l.z_max - l.z_min) / grid_step).floor() as usize;
    let masters: Vec<Position> = (0..=nm)
        .map(|j| scenario.mission.master_on_locus(l.z_min + j as f64 * grid_step))
        .filter(|&q0| scenario.master_admissible(q0, power, &profile))
        .collect();

    let per_master: Vec<(usize, Option<Best>)> = masters
        .par_iter()
        .map(|&q0| {
            let r0 = geometry::slant_range(q0, tx);
            let cap2 = scenario.baseline_cap(r0).powi(2);
            let lists: Vec<Vec<Candidate>> = pools
                .iter()
                .map(|pool| {
                    pool.iter()
                        .filter(|c| {
                            c.b2 <= cap2
                                && c.q.distance(&q0) >= l.d_min
                                && scenario.snr_coherence(r0, geometry::slant_range(c.q, tx)) >= l.gamma_snr_min
                        })
                        .copied()
                        .collect()
                })
                .collect();
            let count = lists.iter().map(Vec::len).sum();
            let nan = Position::new(f64::NAN, f64::NAN);
            let best = match lists.as_slice() {
                [a] => a.first().map(|c| [q0, c.q, nan]),
                [a, b] => best_pair(a, b, l.d_min).map(|(p, s)| [q0, p, s]),
                _ => None,
            };
            (count, best.map(|q| (q, scenario.bound(&q))))
        })
        .collect();

    let feasible_candidates = per_master.iter().map(|p| p.0).sum();
    let mut best: Option<([Position; 3], f64)> = None;
    for (_, cand) in per_master {
        if let Some((q, v)) = cand {
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((q, v));
            }
        }
    }
    let audit_passed = match best {
        Some((q, _)) => {
            let sched = minimal_schedule(scenario, &q, power, &profile);
            problem::audit(scenario, &q, &sched).passes(AUDIT_TOLERANCE)
        }
        None => false,
    };
    Ok(GridResult { grid_step, best, feasible_candidates, masters_checked: masters.len(), audit_passed })
}

/// Largest `b1^2 + b2^2` over separated pairs; inputs sorted by `b2` descending.
fn best_pair(a: &[Candidate], b: &[Candidate], d_min: f64) -> Option<(Position, Position)> {
    let top_b = b.first()?.b2;
    let mut best: Option<(f64, Position, Position)> = None;
    for ca in a {
        let floor = best.map_or(f64::NEG_INFINITY, |x| x.0);
        if ca.b2 + top_b <= floor {
            break;
        }
        for cb in b {
            let v = ca.b2 + cb.b2;
            if v <= floor {
                break;
            }
            if ca.q.distance(&cb.q) >= d_min {
                best = Some((v, ca.q, cb.q));
                break;
            }
        }
    }
    best.map(|(_, p, q)| (p, q))
}

/// Minimal-power schedules (or the fixed power) for the UAVs of the layout.
pub fn minimal_schedule(scenario: &Scenario, q: &[Position; 3], power: PowerMode, profile: &SlotProfile) -> PowerSchedule {
    let uavs = scenario.layout.uavs();
    match power {
        PowerMode::Fixed(p) => PowerSchedule::uniform(scenario.mission.n_slots, p, uavs),
        PowerMode::Optimize => {
            let mut s = PowerSchedule::empty();
            for &k in uavs {
                s.per_uav[k] = comm::min_power_schedule(q[k], profile, &scenario.comm, k);
            }
            s
        }
    }
}

/// Grid search for the single-baseline layout of the same scenario.
pub fn grid_search_single(scenario: &Scenario, power: PowerMode, grid_step: f64) -> Result<GridResult, ValidationError> {
    let mut s = scenario.clone();
    s.layout = Layout::Single;
    grid_search_formation(&s, power, grid_step)
}
