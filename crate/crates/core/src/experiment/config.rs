//! Flat key-value configuration with units in the key names.
//!
//! Angles are given in degrees and powers/gains in dB; everything is
//! converted to radians and linear scale once, in [`ExperimentConfig::scenario`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::CommConfig;
use crate::geometry::{GeometryError, MissionConfig, Position};
use crate::metrics::{RadarConfig, RadarConstants};
use crate::optimizer::{AoOrdering, OptimizerSettings};
use crate::problem::{ConstraintConfig, Layout, ProblemError, Scenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}` cannot take value {value}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("radar constant missing: give radar_constant_db or the full physical constant list")]
    MissingRadarConstant,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Every tunable quantity of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_slots: usize,
    pub slot_duration_s: f64,
    pub velocity_mps: f64,
    pub target_x_m: f64,
    pub master_look_angle_deg: f64,

    pub z_min_m: f64,
    pub z_max_m: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub d_min_m: f64,
    pub s_min_m: f64,
    pub gamma_snr_min: f64,
    pub gamma_rg_min: f64,
    pub h_amb_min_m: f64,

    pub wavelength_m: f64,
    pub center_frequency_hz: f64,
    pub pulse_bandwidth_hz: f64,
    pub looks: u32,
    pub other_coherence: f64,
    pub beamwidth_deg: f64,
    /// Direct aggregate radar constant; wins over the physical list when both are set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar_constant_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backscatter_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar_tx_power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_gain_dbi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_gain_dbi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_duty_product: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_temperature_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_figure_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses_db: Option<f64>,

    pub gs_x_m: f64,
    pub gs_y_m: f64,
    pub gs_z_m: f64,
    pub comm_bandwidth_hz: f64,
    /// Reference channel gain over noise power at 1 m.
    pub comm_ref_gain_db: f64,
    pub rate_floor_0_bps: f64,
    pub rate_floor_1_bps: f64,
    pub rate_floor_2_bps: f64,
    pub p_com_max_dbw: f64,
    pub e_com_max_j: f64,
    #[serde(default)]
    pub energy_includes_slot_duration: bool,

    pub epsilon_master: f64,
    pub epsilon_slave: f64,
    pub epsilon_ao: f64,
    pub max_sca_iterations: usize,
    pub max_ao_iterations: usize,
    pub ao_ordering: AoOrdering,

    /// Fixed master position of the fixed-master benchmark.
    pub q0_fixed_x_m: f64,
    pub q0_fixed_z_m: f64,

    pub mc_samples: usize,
}

const TABLE_I: &str = include_str!("../../../../configs/table_i.toml");

impl ExperimentConfig {
    /// The shipped defaults (`configs/table_i.toml`).
    pub fn table_i() -> Self {
        Self::from_toml_str(TABLE_I).expect("shipped config parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Returns a copy with one key replaced; the value is parsed with the key's type.
    pub fn with_override(&self, key: &str, value: f64) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(&self.to_toml_string())?;
        let existing = match table.get(key) {
            Some(v) => v.clone(),
            None if Self::optional_keys().contains(&key) => toml::Value::Float(0.0),
            None => return Err(ConfigError::UnknownKey(key.to_string())),
        };
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        let new = match existing {
            toml::Value::Float(_) => toml::Value::Float(value),
            toml::Value::Integer(_) => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(bad("expected a non-negative integer"));
                }
                toml::Value::Integer(value as i64)
            }
            _ => return Err(bad("key is not numeric")),
        };
        table.insert(key.to_string(), new);
        Ok(toml::from_str(&toml::to_string(&table).expect("table serializes"))?)
    }

    fn optional_keys() -> &'static [&'static str] {
        &[
            "radar_constant_db",
            "backscatter_db",
            "radar_tx_power_dbm",
            "tx_gain_dbi",
            "rx_gain_dbi",
            "pulse_duty_product",
            "system_temperature_k",
            "noise_figure_db",
            "losses_db",
        ]
    }

    pub fn mission(&self) -> Result<MissionConfig, ConfigError> {
        Ok(MissionConfig::new(
            self.n_slots,
            self.slot_duration_s,
            self.velocity_mps,
            self.target_x_m,
            self.master_look_angle_deg.to_radians(),
        )?)
    }

    fn radar_constants(&self) -> Option<RadarConstants> {
        Some(RadarConstants {
            backscatter: db_to_linear(self.backscatter_db?),
            tx_power: dbm_to_watts(self.radar_tx_power_dbm?),
            tx_gain: db_to_linear(self.tx_gain_dbi?),
            rx_gain: db_to_linear(self.rx_gain_dbi?),
            duty_product: self.pulse_duty_product?,
            system_temperature: self.system_temperature_k?,
            noise_figure: db_to_linear(self.noise_figure_db?),
            losses: db_to_linear(self.losses_db?),
            velocity: self.velocity_mps,
        })
    }

    pub fn radar(&self) -> Result<RadarConfig, ConfigError> {
        let theta0 = self.master_look_angle_deg.to_radians();
        let constants = self.radar_constants();
        let from_constants =
            constants.map(|c| c.radar_constant(self.wavelength_m, self.pulse_bandwidth_hz, theta0));
        let radar_constant = match (self.radar_constant_db, from_constants) {
            (Some(db), Some(derived)) => {
                let direct = db_to_linear(db);
                if (direct / derived - 1.0).abs() > 1e-3 {
                    log::warn!(
                        "radar_constant_db = {db} dB ({direct:e}) disagrees with the physical constants ({derived:e}); using the direct value"
                    );
                }
                direct
            }
            (Some(db), None) => db_to_linear(db),
            (None, Some(derived)) => derived,
            (None, None) => return Err(ConfigError::MissingRadarConstant),
        };
        let radar = RadarConfig {
            wavelength: self.wavelength_m,
            center_frequency: self.center_frequency_hz,
            pulse_bandwidth: self.pulse_bandwidth_hz,
            looks: self.looks,
            other_coherence: self.other_coherence,
            beamwidth: self.beamwidth_deg.to_radians(),
            radar_constant,
            constants,
        };
        radar.validate().map_err(ProblemError::from)?;
        Ok(radar)
    }

    pub fn comm(&self) -> CommConfig {
        CommConfig {
            gs_position: [self.gs_x_m, self.gs_y_m, self.gs_z_m],
            bandwidth: [self.comm_bandwidth_hz; 3],
            ref_gain_over_noise: [db_to_linear(self.comm_ref_gain_db); 3],
            rate_floor: [self.rate_floor_0_bps, self.rate_floor_1_bps, self.rate_floor_2_bps],
            max_power: db_to_linear(self.p_com_max_dbw),
            max_energy: self.e_com_max_j,
            energy_includes_slot_duration: self.energy_includes_slot_duration,
        }
    }

    pub fn limits(&self) -> ConstraintConfig {
        ConstraintConfig {
            z_min: self.z_min_m,
            z_max: self.z_max_m,
            theta_min: self.theta_min_deg.to_radians(),
            theta_max: self.theta_max_deg.to_radians(),
            d_min: self.d_min_m,
            s_min: self.s_min_m,
            gamma_snr_min: self.gamma_snr_min,
            gamma_rg_min: self.gamma_rg_min,
            h_amb_min: self.h_amb_min_m,
        }
    }

    /// Dual-baseline scenario with every unit converted.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let s = Scenario {
            mission: self.mission()?,
            radar: self.radar()?,
            comm: self.comm(),
            limits: self.limits(),
            layout: Layout::Dual,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            epsilon_master: self.epsilon_master,
            epsilon_slave: self.epsilon_slave,
            epsilon_ao: self.epsilon_ao,
            max_sca_iterations: self.max_sca_iterations,
            max_ao_iterations: self.max_ao_iterations,
            ordering: self.ao_ordering,
            ..OptimizerSettings::default()
        }
    }

    pub fn q0_fixed(&self) -> Position {
        Position::new(self.q0_fixed_x_m, self.q0_fixed_z_m)
    }
}
