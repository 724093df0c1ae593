//! Exact throughput, secrecy, power and efficiency evaluation for a given
//! beamformer set. Every surrogate is checked against these functions.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{gram, identity, logdet_pd, logdet_whitened, CMat};
use crate::model::{BeamformerSet, ChannelSet, SystemConfig};

fn check(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<()> {
    ch.check_dims(cfg)?;
    v.check_dims(cfg)
}

/// Interference covariance `Σ_{l≠j} (H_{l,j} V_l)(·)ᴴ` at user `j`.
pub fn user_interference(ch: &ChannelSet, v: &BeamformerSet, j: usize) -> CMat {
    let n_r = ch.user[0][0].nrows();
    let mut psi = CMat::zeros(n_r, n_r);
    for (l, vl) in v.v.iter().enumerate() {
        if l != j {
            psi += gram(&(&ch.user[l][j] * vl));
        }
    }
    psi
}

/// Covariance `Σ_{l≠j} (H_{l,e} V_l)(·)ᴴ` of the other users' signals at the
/// eavesdropper.
pub fn eve_interference(ch: &ChannelSet, v: &BeamformerSet, j: usize) -> CMat {
    let n_e = ch.eve[0].nrows();
    let mut psi = CMat::zeros(n_e, n_e);
    for (l, vl) in v.v.iter().enumerate() {
        if l != j {
            psi += gram(&(&ch.eve[l] * vl));
        }
    }
    psi
}

/// Achievable rate of user `j` in nats, treating interference as noise.
pub fn user_throughput(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig, j: usize) -> Result<f64> {
    check(ch, v, cfg)?;
    let signal = &ch.user[j][j] * &v.v[j];
    let noise = user_interference(ch, v, j) + identity(cfg.rx_antennas).scale(cfg.noise_var(j));
    logdet_whitened(&gram(&signal), &noise, "user interference-plus-noise")
}

/// Rate at which the eavesdropper can decode user `j`'s stream, in nats.
pub fn eavesdropper_throughput(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig, j: usize) -> Result<f64> {
    check(ch, v, cfg)?;
    let signal = &ch.eve[j] * &v.v[j];
    let noise = eve_interference(ch, v, j) + identity(cfg.eve_antennas).scale(cfg.eve_noise_var());
    logdet_whitened(&gram(&signal), &noise, "eavesdropper interference-plus-noise")
}

/// The wiretap rate as a difference of two log-determinants,
/// `ln|I + M_{j,e}/σ_e²| − ln|I + Ψ_{j,e}/σ_e²|`.
pub fn eavesdropper_throughput_split(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig, j: usize) -> Result<f64> {
    check(ch, v, cfg)?;
    let s2 = cfg.eve_noise_var();
    let psi = eve_interference(ch, v, j);
    let total = &psi + gram(&(&ch.eve[j] * &v.v[j]));
    let eye = identity(cfg.eve_antennas);
    let with_signal = logdet_pd(&(&eye + total.unscale(s2)), "eavesdropper total covariance")?;
    let without = logdet_pd(&(&eye + psi.unscale(s2)), "eavesdropper interference covariance")?;
    Ok(with_signal - without)
}

pub fn secrecy_throughput(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig, j: usize) -> Result<f64> {
    Ok(user_throughput(ch, v, cfg, j)? - eavesdropper_throughput(ch, v, cfg, j)?)
}

/// `ζ Σ_j ‖V_j‖² + P_c`, Watts.
pub fn total_power(v: &BeamformerSet, cfg: &SystemConfig) -> f64 {
    cfg.zeta * v.total_power() + cfg.circuit_power
}

/// Secrecy energy efficiency `Σ_j (f_j − f_{j,e}) / P_tot`, nats per Joule
/// per unit bandwidth.
pub fn see_objective(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<f64> {
    let mut sum = 0.0;
    for j in 0..cfg.users {
        sum += secrecy_throughput(ch, v, cfg, j)?;
    }
    Ok(sum / total_power(v, cfg))
}

/// Plain energy efficiency `Σ_j f_j / P_tot`.
pub fn ee_objective(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<f64> {
    let mut sum = 0.0;
    for j in 0..cfg.users {
        sum += user_throughput(ch, v, cfg, j)?;
    }
    Ok(sum / total_power(v, cfg))
}

pub fn sum_secrecy(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<f64> {
    (0..cfg.users).map(|j| secrecy_throughput(ch, v, cfg, j)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub user_rate: Vec<f64>,
    pub eve_rate: Vec<f64>,
    pub secrecy_rate: Vec<f64>,
    pub total_power: f64,
    pub see: f64,
    pub feasible_qos: Vec<bool>,
}

pub fn evaluate(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig) -> Result<MetricsReport> {
    let mut user_rate = Vec::with_capacity(cfg.users);
    let mut eve_rate = Vec::with_capacity(cfg.users);
    for j in 0..cfg.users {
        user_rate.push(user_throughput(ch, v, cfg, j)?);
        eve_rate.push(eavesdropper_throughput(ch, v, cfg, j)?);
    }
    let secrecy_rate: Vec<f64> = user_rate.iter().zip(&eve_rate).map(|(f, fe)| f - fe).collect();
    let p_tot = total_power(v, cfg);
    let see = secrecy_rate.iter().sum::<f64>() / p_tot;
    let feasible_qos = secrecy_rate.iter().zip(&cfg.qos_nats).map(|(fs, r)| fs >= r).collect();
    Ok(MetricsReport { user_rate, eve_rate, secrecy_rate, total_power: p_tot, see, feasible_qos })
}

/// Per-constraint slacks of the power budget and the secrecy QoS.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `P_max − ‖V_j‖²`.
    pub power_slack: Vec<f64>,
    /// `f_{j,s} − r_j`.
    pub qos_slack: Vec<f64>,
    pub power_ok: Vec<bool>,
    pub qos_ok: Vec<bool>,
}

impl FeasibilityReport {
    pub fn all_ok(&self) -> bool {
        self.power_ok.iter().chain(&self.qos_ok).all(|&b| b)
    }

    pub fn power_ok_all(&self) -> bool {
        self.power_ok.iter().all(|&b| b)
    }

    pub fn min_slack(&self) -> f64 {
        self.power_slack.iter().chain(&self.qos_slack).fold(f64::INFINITY, |m, &s| m.min(s))
    }
}

pub fn check_feasible(ch: &ChannelSet, v: &BeamformerSet, cfg: &SystemConfig, tol: f64) -> Result<FeasibilityReport> {
    check(ch, v, cfg)?;
    let power_slack: Vec<f64> = (0..cfg.users).map(|j| cfg.p_max - v.power(j)).collect();
    let qos_slack = (0..cfg.users)
        .map(|j| Ok(secrecy_throughput(ch, v, cfg, j)? - cfg.qos_nats[j]))
        .collect::<Result<Vec<f64>>>()?;
    Ok(FeasibilityReport {
        power_ok: power_slack.iter().map(|&s| s >= -tol).collect(),
        qos_ok: qos_slack.iter().map(|&s| s >= -tol).collect(),
        power_slack,
        qos_slack,
    })
}
