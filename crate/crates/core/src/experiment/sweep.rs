use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use crate::benchmarks::{self, SchemeId, SchemeResult};
use crate::optimizer::subproblem::branch_slopes;
use crate::problem::{self, ConstraintCheck, AUDIT_TOLERANCE};
use crate::validation::RNG_ALGORITHM;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("bad sweep `{spec}`: {reason}")]
    Sweep { spec: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Csv { path: path.to_path_buf(), source }
}

/// One swept configuration key and its values, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// Checks that values are strictly monotone and that the key is a numeric config key.
    pub fn validate(&self, base: &ExperimentConfig) -> Result<(), ExperimentError> {
        let bad = |reason: &str| ExperimentError::Sweep { spec: self.key.clone(), reason: reason.into() };
        if self.values.is_empty() {
            return Err(bad("no values"));
        }
        let inc = self.values.windows(2).all(|w| w[1] > w[0]);
        let dec = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(bad("values must be strictly monotone"));
        }
        base.with_override(&self.key, self.values[0])?;
        Ok(())
    }
}

/// Rounds away binary noise of `start + i * step`.
fn tidy(v: f64) -> f64 {
    let s = format!("{v:.9e}");
    s.parse().unwrap_or(v)
}

impl FromStr for SweepSpec {
    type Err = ExperimentError;

    /// `KEY=START:STOP:STEP`, both ends included.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| ExperimentError::Sweep { spec: s.to_string(), reason: reason.into() };
        let (key, range) = s.split_once('=').ok_or_else(|| bad("expected KEY=START:STOP:STEP"))?;
        if key.trim().is_empty() {
            return Err(bad("empty KEY"));
        }
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("START, STOP and STEP must be numbers"))?;
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected three fields START:STOP:STEP"));
        };
        if !(step != 0.0 && step.is_finite()) || (stop - start) * step < 0.0 {
            return Err(bad("STEP must be nonzero and point from START to STOP"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        let values = (0..=n).map(|i| tidy(start + i as f64 * step)).collect();
        Ok(Self { key: key.trim().to_string(), values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub config: ExperimentConfig,
    pub config_path: Option<PathBuf>,
    pub sweep: Option<SweepSpec>,
    pub schemes: Vec<SchemeId>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(config: ExperimentConfig) -> Self {
        Self { config, config_path: None, sweep: None, schemes: SchemeId::ALL.to_vec(), out_dir: None, seed: 0 }
    }

    /// Configuration at each sweep point; a single point without a sweep.
    pub fn points(&self) -> Result<Vec<(Option<f64>, ExperimentConfig)>, ExperimentError> {
        match &self.sweep {
            None => Ok(vec![(None, self.config.clone())]),
            Some(sw) => {
                sw.validate(&self.config)?;
                sw.values
                    .iter()
                    .map(|&v| Ok((Some(v), self.config.with_override(&sw.key, v)?)))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: Option<f64>,
    pub scheme: SchemeId,
    pub feasible: bool,
    pub sigma_h: Option<f64>,
    pub sigma_h_bound: Option<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Set when the scheme could not be run at this point.
    pub error: Option<String>,
    pub result: Option<SchemeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub key: Option<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn rows_for(&self, scheme: SchemeId) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    pub fn any_feasible(&self) -> bool {
        self.rows.iter().any(|r| r.feasible)
    }
}

fn run_point(value: Option<f64>, cfg: &ExperimentConfig, scheme: SchemeId) -> ResultRow {
    let start = Instant::now();
    let outcome = cfg
        .scenario()
        .map_err(|e| e.to_string())
        .and_then(|sc| benchmarks::run_scheme(scheme, &sc, &cfg.settings(), cfg.q0_fixed()).map_err(|e| e.to_string()));
    let wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(r) => ResultRow {
            sweep_value: value,
            scheme,
            feasible: r.feasible,
            sigma_h: r.sigma_h.filter(|_| r.feasible),
            sigma_h_bound: r.sigma_h_bound.filter(|_| r.feasible),
            iterations: r.iterations,
            wall_time_s,
            error: None,
            result: Some(r),
        },
        Err(e) => {
            log::warn!("{scheme} at {value:?}: {e}");
            ResultRow {
                sweep_value: value,
                scheme,
                feasible: false,
                sigma_h: None,
                sigma_h_bound: None,
                iterations: 0,
                wall_time_s,
                error: Some(e),
                result: None,
            }
        }
    }
}

/// Runs every (sweep value, scheme) pair in parallel; rows come back in sweep order, then scheme order.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<ResultTable, ExperimentError> {
    let points = spec.points()?;
    let jobs: Vec<(Option<f64>, &ExperimentConfig, SchemeId)> = points
        .iter()
        .flat_map(|(v, cfg)| spec.schemes.iter().map(move |&s| (*v, cfg, s)))
        .collect();
    let rows = jobs.par_iter().map(|&(v, cfg, s)| run_point(v, cfg, s)).collect();
    Ok(ResultTable { key: spec.sweep.as_ref().map(|s| s.key.clone()), rows })
}

/// Stable plot-data schema; infeasible points leave the sigma cells empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub sweep_value: Option<f64>,
    pub scheme: SchemeId,
    pub feasible: bool,
    pub sigma_h_m: Option<f64>,
    pub sigma_h_bound_m: Option<f64>,
}

impl From<&ResultRow> for PlotRow {
    fn from(r: &ResultRow) -> Self {
        Self {
            sweep_value: r.sweep_value,
            scheme: r.scheme,
            feasible: r.feasible,
            sigma_h_m: r.sigma_h,
            sigma_h_bound_m: r.sigma_h_bound,
        }
    }
}

fn write_csv<'a>(path: &Path, rows: impl Iterator<Item = &'a ResultRow>) -> Result<(), ExperimentError> {
    // header is written even for an empty table
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    w.write_record(["sweep_value", "scheme", "feasible", "sigma_h_m", "sigma_h_bound_m"])
        .map_err(csv_err(path))?;
    for r in rows {
        w.serialize(PlotRow::from(r)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes `<scheme>.csv` for each scheme in the table plus `combined.csv`.
pub fn emit_plot_data(table: &ResultTable, schemes: &[SchemeId], dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for &s in schemes {
        let path = dir.join(format!("{s}.csv"));
        write_csv(&path, table.rows_for(s))?;
        written.push(path);
    }
    let path = dir.join("combined.csv");
    write_csv(&path, table.rows.iter())?;
    written.push(path);
    Ok(written)
}

pub fn read_plot_data(path: &Path) -> Result<Vec<PlotRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

/// Values derived from the configuration, in SI and linear units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedValues {
    pub master_look_angle_rad: f64,
    pub theta_min_rad: f64,
    pub theta_max_rad: f64,
    pub beamwidth_rad: f64,
    pub fractional_bandwidth: f64,
    pub radar_constant: f64,
    pub comm_ref_gain_linear: f64,
    pub p_com_max_w: f64,
    pub static_power_w: f64,
    pub baseline_ratio_limit: f64,
    pub lower_look_angle_slope: f64,
    pub upper_look_angle_slope: Option<f64>,
}

/// Modelling switches that are not plain parameter values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSwitches {
    pub ao_ordering: String,
    pub energy_includes_slot_duration: bool,
    pub master_objective: &'static str,
    pub separation_linearization_rhs: &'static str,
    pub slave_branch_rule: &'static str,
    pub acceptance_rule: &'static str,
    pub fixed_master_comm_limit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub config_path: Option<PathBuf>,
    pub config: ExperimentConfig,
    pub derived: DerivedValues,
    pub switches: DesignSwitches,
    pub sweep: Option<SweepSpec>,
    pub schemes: Vec<SchemeId>,
    pub seed: u64,
    pub rng: &'static str,
}

pub fn run_metadata(spec: &ExperimentSpec) -> Result<RunMetadata, ExperimentError> {
    let sc = spec.config.scenario()?;
    let slopes = branch_slopes(&sc).map_err(|e| ConfigError::BadValue {
        key: "gamma_rg_min".into(),
        value: spec.config.gamma_rg_min.to_string(),
        reason: e.to_string(),
    })?;
    let h = crate::metrics::inverse_baseline_decorrelation(sc.limits.gamma_rg_min, &sc.radar).unwrap_or(f64::NAN);
    let settings = spec.config.settings();
    Ok(RunMetadata {
        config_path: spec.config_path.clone(),
        config: spec.config.clone(),
        derived: DerivedValues {
            master_look_angle_rad: sc.theta0(),
            theta_min_rad: sc.limits.theta_min,
            theta_max_rad: sc.limits.theta_max,
            beamwidth_rad: sc.radar.beamwidth,
            fractional_bandwidth: sc.radar.fractional_bandwidth(),
            radar_constant: sc.radar.radar_constant,
            comm_ref_gain_linear: sc.comm.ref_gain_over_noise[0],
            p_com_max_w: sc.comm.max_power,
            static_power_w: sc.comm.max_energy
                / (sc.mission.n_slots as f64 * sc.comm.energy_weight(sc.mission.slot_duration)),
            baseline_ratio_limit: h,
            lower_look_angle_slope: slopes.0,
            upper_look_angle_slope: slopes.1,
        },
        switches: DesignSwitches {
            ao_ordering: format!("{:?}", settings.ordering),
            energy_includes_slot_duration: sc.comm.energy_includes_slot_duration,
            master_objective: "minimize master altitude on the line of sight",
            separation_linearization_rhs: "d_min^2",
            slave_branch_rule: "solve both look-angle branches, keep the smaller bound (ties: below)",
            acceptance_rule: "accept an iterate only if the bound does not increase and the exact audit passes",
            fixed_master_comm_limit: "p_com_max_dbw applies to every scheme",
        },
        sweep: spec.sweep.clone(),
        schemes: spec.schemes.clone(),
        seed: spec.seed,
        rng: RNG_ALGORITHM,
    })
}

/// One entry of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedResult {
    pub sweep_value: Option<f64>,
    pub scheme: SchemeId,
    pub result: Option<SchemeResult>,
}

/// Exact re-check of one saved result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavedAudit {
    pub sweep_value: Option<f64>,
    pub scheme: SchemeId,
    pub claimed_feasible: bool,
    /// `None` when the result carries no formation.
    pub passes: Option<bool>,
    pub max_violation: Option<f64>,
    pub violations: Vec<ConstraintCheck>,
}

impl SavedAudit {
    /// A result claimed feasible must pass the audit.
    pub fn consistent(&self) -> bool {
        !self.claimed_feasible || self.passes == Some(true)
    }
}

#[derive(Deserialize)]
struct SavedMetadata {
    config: ExperimentConfig,
    sweep: Option<SweepSpec>,
}

/// Re-audits `results.json` in `dir` against the configuration recorded in `metadata.json`.
pub fn audit_saved(dir: &Path) -> Result<Vec<SavedAudit>, ExperimentError> {
    let meta_path = dir.join("metadata.json");
    let meta: SavedMetadata =
        serde_json::from_str(&fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?)?;
    let res_path = dir.join("results.json");
    let saved: Vec<SavedResult> = serde_json::from_str(&fs::read_to_string(&res_path).map_err(io_err(&res_path))?)?;
    saved
        .iter()
        .map(|s| {
            let cfg = match (&meta.sweep, s.sweep_value) {
                (Some(sw), Some(v)) => meta.config.with_override(&sw.key, v)?,
                _ => meta.config.clone(),
            };
            let mut scenario = cfg.scenario()?;
            let claimed = s.result.as_ref().is_some_and(|r| r.feasible);
            let (q, sched) = match &s.result {
                Some(r) => (r.formation_array(), r.schedules.clone()),
                None => (None, None),
            };
            let (passes, max_violation, violations) = match (q, sched, &s.result) {
                (Some(q), Some(sched), Some(r)) => {
                    scenario.layout = r.layout;
                    let rep = problem::audit(&scenario, &q, &sched);
                    (Some(rep.passes(AUDIT_TOLERANCE)), Some(rep.max_violation()), rep.violations(AUDIT_TOLERANCE))
                }
                _ => (None, None, Vec::new()),
            };
            Ok(SavedAudit { sweep_value: s.sweep_value, scheme: s.scheme, claimed_feasible: claimed, passes, max_violation, violations })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TimingRow<'a> {
    sweep_value: Option<f64>,
    scheme: SchemeId,
    iterations: usize,
    wall_time_s: f64,
    error: &'a Option<String>,
}

/// Writes plot CSVs, `metadata.json`, `results.json` and `timing.json` (the only non-deterministic file).
pub fn write_outputs(spec: &ExperimentSpec, table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = emit_plot_data(table, &spec.schemes, dir)?;
    let mut put = |name: &str, text: String| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    put("metadata.json", serde_json::to_string_pretty(&run_metadata(spec)?)? + "\n")?;
    let saved: Vec<SavedResult> = table
        .rows
        .iter()
        .map(|r| SavedResult { sweep_value: r.sweep_value, scheme: r.scheme, result: r.result.clone() })
        .collect();
    put("results.json", serde_json::to_string_pretty(&saved)? + "\n")?;
    let timing: Vec<TimingRow> = table
        .rows
        .iter()
        .map(|r| TimingRow {
            sweep_value: r.sweep_value,
            scheme: r.scheme,
            iterations: r.iterations,
            wall_time_s: r.wall_time_s,
            error: &r.error,
        })
        .collect();
    put("timing.json", serde_json::to_string_pretty(&timing)? + "\n")?;
    Ok(written)
}
