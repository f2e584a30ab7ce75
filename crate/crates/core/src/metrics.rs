//! InSAR quality model: SNR, coherence, height of ambiguity and height error.
//!
//! Everything here is linear scale. Conversions from dB happen once, when a
//! configuration file is ingested.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, MissionConfig, Position};
use crate::problem::ConstraintConfig;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("perpendicular baseline is zero: height of ambiguity is unbounded")]
    InfiniteHeightOfAmbiguity,
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("both perpendicular baselines are zero")]
    NoBaseline,
    #[error("radar configuration carries no physical constants; exact bistatic SNR unavailable")]
    MissingRadarConstants,
    #[error("invalid radar configuration: {0}")]
    InvalidConfig(&'static str),
}

fn domain(what: &'static str, value: f64, domain: &'static str) -> MetricsError {
    MetricsError::Domain {
        what,
        value,
        domain,
    }
}

/// Physical constants that make up the aggregate radar constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConstants {
    /// Normalized backscatter coefficient (linear).
    pub backscatter: f64,
    /// Radar transmit power, W.
    pub tx_power: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Pulse duration times pulse repetition frequency.
    pub duty_product: f64,
    /// Receiver system temperature, K.
    pub system_temperature: f64,
    /// Noise figure (linear).
    pub noise_figure: f64,
    /// Total radar losses (linear).
    pub losses: f64,
    /// Platform velocity, m/s.
    pub velocity: f64,
}

impl RadarConstants {
    /// Aggregate mono-static radar constant, m^3.
    pub fn radar_constant(&self, wavelength: f64, pulse_bandwidth: f64, theta0: f64) -> f64 {
        self.backscatter
            * self.tx_power
            * self.tx_gain
            * self.rx_gain
            * wavelength.powi(3)
            * SPEED_OF_LIGHT
            * self.duty_product
            / (256.0
                * PI.powi(3)
                * self.velocity
                * theta0.sin()
                * BOLTZMANN
                * self.system_temperature
                * pulse_bandwidth
                * self.noise_figure
                * self.losses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub wavelength: f64,
    pub center_frequency: f64,
    pub pulse_bandwidth: f64,
    pub looks: u32,
    pub other_coherence: f64,
    /// Elevation -3 dB beamwidth, radians.
    pub beamwidth: f64,
    /// Aggregate radar constant `gamma_m`, linear, m^3.
    pub radar_constant: f64,
    pub constants: Option<RadarConstants>,
}

impl RadarConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.wavelength > 0.0) {
            return Err(MetricsError::InvalidConfig("wavelength must be positive"));
        }
        if !(self.center_frequency > 0.0 && self.pulse_bandwidth > 0.0) {
            return Err(MetricsError::InvalidConfig("frequencies must be positive"));
        }
        if (self.wavelength - SPEED_OF_LIGHT / self.center_frequency).abs() / self.wavelength
            > 1e-6
        {
            // Nominal wavelengths are usually rounded (0.12 m at 2.5 GHz);
            // the mismatch is reported rather than rejected.
            log::debug!(
                "wavelength {} m differs from c/f0 = {} m",
                self.wavelength,
                SPEED_OF_LIGHT / self.center_frequency
            );
        }
        if self.looks == 0 {
            return Err(MetricsError::InvalidConfig("looks must be at least 1"));
        }
        if !(self.other_coherence > 0.0 && self.other_coherence <= 1.0) {
            return Err(MetricsError::InvalidConfig("other_coherence must lie in (0, 1]"));
        }
        if !(self.beamwidth > 0.0) {
            return Err(MetricsError::InvalidConfig("beamwidth must be positive"));
        }
        if !(self.radar_constant > 0.0) {
            return Err(MetricsError::InvalidConfig("radar constant must be positive"));
        }
        Ok(())
    }

    pub fn fractional_bandwidth(&self) -> f64 {
        self.pulse_bandwidth / self.center_frequency
    }
}

/// Transmit/receive geometry of one bistatic acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BistaticGeometry {
    pub tx_slant_range: f64,
    pub rx_slant_range: f64,
    pub tx_incidence: f64,
    pub rx_incidence: f64,
    pub aperture_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceBreakdown {
    pub snr_decorrelation: f64,
    pub baseline_decorrelation: f64,
    pub other: f64,
    pub total: f64,
}

impl CoherenceBreakdown {
    pub fn new(snr_decorrelation: f64, baseline_decorrelation: f64, other: f64) -> Self {
        Self {
            snr_decorrelation,
            baseline_decorrelation,
            other,
            total: snr_decorrelation * baseline_decorrelation * other,
        }
    }
}

pub fn monostatic_snr(r0: f64, radar: &RadarConfig) -> f64 {
    radar.radar_constant / (r0 * r0 * r0)
}

/// Small-bistatic-angle approximation of the slave image SNR.
pub fn bistatic_snr_approx(r0: f64, rk: f64, radar: &RadarConfig) -> f64 {
    radar.radar_constant / (r0 * r0 * rk)
}

/// Image SNR of a bistatic acquisition from the distributed-target radar
/// equation, with the resolution cell built from the bistatic range and
/// azimuth resolutions (no small-angle approximation).
pub fn bistatic_snr_exact(geom: &BistaticGeometry, radar: &RadarConfig) -> Result<f64, MetricsError> {
    let k = radar.constants.ok_or(MetricsError::MissingRadarConstants)?;
    let (rt, rr) = (geom.tx_slant_range, geom.rx_slant_range);
    let range_res =
        SPEED_OF_LIGHT / (radar.pulse_bandwidth * (geom.tx_incidence.sin() + geom.rx_incidence.sin()));
    let r_eff = 0.5 * (rt + rr);
    let azimuth_res = radar.wavelength * r_eff * rr / (geom.aperture_length * (rt + rr));
    let cell = range_res * azimuth_res;
    Ok(k.backscatter
        * cell
        * k.tx_power
        * k.tx_gain
        * k.rx_gain
        * radar.wavelength.powi(2)
        * k.duty_product
        * geom.aperture_length
        / ((4.0 * PI).powi(3)
            * rt
            * rt
            * rr
            * rr
            * k.velocity
            * BOLTZMANN
            * k.system_temperature
            * k.noise_figure
            * k.losses))
}

pub fn snr_decorrelation(snr0: f64, snrk: f64) -> f64 {
    1.0 / (1.0 + 1.0 / snr0).sqrt() / (1.0 + 1.0 / snrk).sqrt()
}

/// Look-angle ratio entering the range-spectral decorrelation, always in `[1, 2)`.
pub fn look_angle_ratio(theta0: f64, thetak: f64) -> f64 {
    let (s0, sk) = (theta0.sin(), thetak.sin());
    let num = if theta0 > thetak { s0 } else { sk };
    2.0 * num / (s0 + sk)
}

/// Baseline decorrelation as a function of the look-angle ratio.
pub fn baseline_coherence_of_ratio(ratio: f64, fractional_bandwidth: f64) -> Result<f64, MetricsError> {
    let bp = fractional_bandwidth;
    if !(bp > 0.0 && bp < 2.0) {
        return Err(domain("fractional bandwidth", bp, "(0, 2)"));
    }
    if !(0.0..=2.0).contains(&ratio) {
        return Err(domain("look-angle ratio", ratio, "[0, 2]"));
    }
    Ok((2.0 + bp - (2.0 - bp) * ratio) / (bp * (1.0 + ratio)))
}

pub fn baseline_decorrelation(
    qk: Position,
    target_x: f64,
    theta0: f64,
    radar: &RadarConfig,
) -> Result<f64, MetricsError> {
    let thetak = geometry::look_angle(qk, target_x);
    baseline_coherence_of_ratio(look_angle_ratio(theta0, thetak), radar.fractional_bandwidth())
}

/// Inverse of [`baseline_coherence_of_ratio`] on `[0, 2]`.
pub fn inverse_baseline_decorrelation(gamma: f64, radar: &RadarConfig) -> Result<f64, MetricsError> {
    let bp = radar.fractional_bandwidth();
    let hi = baseline_coherence_of_ratio(0.0, bp)?;
    let lo = baseline_coherence_of_ratio(2.0, bp)?;
    if !(gamma >= lo && gamma <= hi) {
        return Err(domain("baseline coherence", gamma, "range of f over [0, 2]"));
    }
    Ok((bp * gamma - 2.0 - bp) / (bp - 2.0 - gamma * bp))
}

pub fn height_of_ambiguity(
    r0: f64,
    theta0: f64,
    b_perp: f64,
    radar: &RadarConfig,
) -> Result<f64, MetricsError> {
    if b_perp <= 0.0 {
        return Err(MetricsError::InfiniteHeightOfAmbiguity);
    }
    Ok(radar.wavelength * r0 * theta0.sin() / b_perp)
}

/// Cramér–Rao phase standard deviation for `looks` independent looks.
pub fn crb_phase_std(coherence: f64, looks: u32) -> Result<f64, MetricsError> {
    if !(coherence > 0.0 && coherence <= 1.0) {
        return Err(domain("coherence", coherence, "(0, 1]"));
    }
    if looks == 0 {
        return Err(domain("looks", 0.0, "[1, inf)"));
    }
    if coherence == 1.0 {
        return Ok(0.0);
    }
    Ok(((1.0 - coherence * coherence) / (2.0 * looks as f64)).sqrt() / coherence)
}

pub fn pair_height_error(hoa: f64, phase_std: f64) -> f64 {
    hoa * phase_std / (2.0 * PI)
}

/// Height error of a weighted average of independent DEMs.
pub fn weighted_fusion_error(weights: &[f64], sigmas: &[f64]) -> f64 {
    let num: f64 = weights
        .iter()
        .zip(sigmas)
        .map(|(w, s)| w * w * s * s)
        .sum();
    let den: f64 = weights.iter().sum();
    num.sqrt() / den
}

/// Inverse-variance fused height error of two DEMs.
pub fn fused_height_error(sigma1: f64, sigma2: f64) -> f64 {
    1.0 / (sigma1.powi(-2) + sigma2.powi(-2)).sqrt()
}

/// Worst-case coherence `gamma_rg_min * gamma_snr_min * gamma_other`.
pub fn worst_case_coherence(radar: &RadarConfig, limits: &ConstraintConfig) -> f64 {
    limits.gamma_rg_min * limits.gamma_snr_min * radar.other_coherence
}

/// Upper bound on the fused height error using the worst admissible coherence.
pub fn worst_case_height_error(
    r0: f64,
    theta0: f64,
    b_perp1: f64,
    b_perp2: f64,
    radar: &RadarConfig,
    limits: &ConstraintConfig,
) -> Result<f64, MetricsError> {
    let a = worst_case_coherence(radar, limits);
    if !(a > 0.0 && a < 1.0) {
        return Err(domain("worst-case coherence", a, "(0, 1)"));
    }
    let b2 = b_perp1 * b_perp1 + b_perp2 * b_perp2;
    if b2 <= 0.0 {
        return Err(MetricsError::NoBaseline);
    }
    let lam = radar.wavelength * r0 * theta0.sin();
    Ok((lam * lam * (1.0 - a * a) / (8.0 * PI * PI * a * a * radar.looks as f64 * b2)).sqrt())
}

/// Full quality chain for one interferometric pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairQuality {
    pub coherence: CoherenceBreakdown,
    pub perpendicular_baseline: f64,
    pub height_of_ambiguity: f64,
    pub phase_std: f64,
    pub height_error: f64,
}

pub fn pair_quality(
    q0: Position,
    qk: Position,
    mission: &MissionConfig,
    radar: &RadarConfig,
) -> Result<PairQuality, MetricsError> {
    let theta0 = mission.master_look_angle;
    let r0 = geometry::slant_range(q0, mission.target_x);
    let rk = geometry::slant_range(qk, mission.target_x);
    let snr = snr_decorrelation(monostatic_snr(r0, radar), bistatic_snr_approx(r0, rk, radar));
    let rg = baseline_decorrelation(qk, mission.target_x, theta0, radar)?;
    let coherence = CoherenceBreakdown::new(snr, rg, radar.other_coherence);
    let b_perp = geometry::perpendicular_baseline_projected(q0, qk, theta0);
    let hoa = height_of_ambiguity(r0, theta0, b_perp, radar)?;
    let phase_std = crb_phase_std(coherence.total, radar.looks)?;
    Ok(PairQuality {
        coherence,
        perpendicular_baseline: b_perp,
        height_of_ambiguity: hoa,
        phase_std,
        height_error: pair_height_error(hoa, phase_std),
    })
}

/// Actual fused height error of a formation; `slaves` lists the participating slave indices.
pub fn formation_height_error(
    q: &[Position; 3],
    slaves: &[usize],
    mission: &MissionConfig,
    radar: &RadarConfig,
) -> Result<f64, MetricsError> {
    let mut inv = 0.0;
    for &k in slaves {
        match pair_quality(q[0], q[k], mission, radar) {
            Ok(p) => inv += p.height_error.powi(-2),
            // A pair with no baseline carries no height information.
            Err(MetricsError::InfiniteHeightOfAmbiguity) => {}
            Err(e) => return Err(e),
        }
    }
    if inv == 0.0 {
        return Err(MetricsError::NoBaseline);
    }
    Ok(inv.sqrt().recip())
}

/// Worst-case bound of a formation, using the closed-form perpendicular baseline.
pub fn formation_height_bound(
    q: &[Position; 3],
    slaves: &[usize],
    mission: &MissionConfig,
    radar: &RadarConfig,
    limits: &ConstraintConfig,
) -> f64 {
    let theta0 = mission.master_look_angle;
    let r0 = geometry::slant_range(q[0], mission.target_x);
    let mut b = [0.0; 2];
    for (slot, &k) in slaves.iter().enumerate() {
        b[slot] = geometry::perpendicular_baseline(q[k], mission.target_x, theta0);
    }
    worst_case_height_error(r0, theta0, b[0], b[1], radar, limits).unwrap_or(f64::INFINITY)
}
