//! Problem instances: system configuration, Rayleigh channel draws and the
//! beamformer container.

use std::f64::consts::LN_2;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{c, fro_norm_sq, is_finite, CMat};

/// Identifier of the random-number pipeline used for channel draws. Stored
/// next to every result so runs can be reproduced bit-for-bit.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9/seed_from_u64+rand_distr-0.5/StandardNormal";

/// Converts a decibel power figure to linear Watts.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * LN_2
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

/// Scalar problem parameters. Rates are in nats, powers in Watts and noise
/// levels are standard deviations (formulas use `σ²`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub eve_antennas: usize,
    pub streams: usize,
    pub sigma_user: Vec<f64>,
    pub sigma_eve: f64,
    pub qos_nats: Vec<f64>,
    pub zeta: f64,
    pub circuit_power: f64,
    pub p_max: f64,
    /// Cap on the wiretapped rate for the energy-efficiency variant; may be
    /// `+∞` to drop the cap.
    pub eps_secrecy: f64,
    pub eps_stop: f64,
    pub max_outer_iters: usize,
}

impl SystemConfig {
    /// The three-pair, 12-antenna setup used for the reference experiments:
    /// `P_c = 7 dB`, `P_max = 10 dB`, QoS of one bit per user.
    pub fn reference_defaults() -> Self {
        Self {
            users: 3,
            tx_antennas: 12,
            rx_antennas: 6,
            eve_antennas: 9,
            streams: 3,
            sigma_user: vec![1.0; 3],
            sigma_eve: 1.0,
            qos_nats: vec![LN_2; 3],
            zeta: 1.0,
            circuit_power: db_to_linear(7.0),
            p_max: db_to_linear(10.0),
            eps_secrecy: bits_to_nats(0.05),
            eps_stop: 1e-3,
            max_outer_iters: 200,
        }
    }

    /// Small instance with every dimension set explicitly and the remaining
    /// parameters at their defaults.
    pub fn with_dims(users: usize, tx: usize, rx: usize, eve: usize, streams: usize) -> Self {
        Self {
            users,
            tx_antennas: tx,
            rx_antennas: rx,
            eve_antennas: eve,
            streams,
            sigma_user: vec![1.0; users],
            qos_nats: vec![LN_2; users],
            ..Self::reference_defaults()
        }
    }

    pub fn with_p_max_db(mut self, db: f64) -> Self {
        self.p_max = db_to_linear(db);
        self
    }

    pub fn with_circuit_power_db(mut self, db: f64) -> Self {
        self.circuit_power = db_to_linear(db);
        self
    }

    pub fn with_qos_bits(mut self, bits: f64) -> Self {
        self.qos_nats = vec![bits_to_nats(bits); self.users];
        self
    }

    pub fn noise_var(&self, j: usize) -> f64 {
        self.sigma_user[j] * self.sigma_user[j]
    }

    pub fn eve_noise_var(&self) -> f64 {
        self.sigma_eve * self.sigma_eve
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Error::InvalidValue { key: key.to_string(), reason };
        if self.users < 1 {
            return Err(bad("D", "need at least one transmitter/user pair".into()));
        }
        if self.tx_antennas < 1 {
            return Err(bad("N", "need at least one transmit antenna".into()));
        }
        if self.rx_antennas < 1 {
            return Err(bad("N_r", "need at least one receive antenna".into()));
        }
        if self.eve_antennas < 1 {
            return Err(bad("N_e", "need at least one eavesdropper antenna".into()));
        }
        let max_streams = self.tx_antennas.min(self.rx_antennas);
        if self.streams < 1 || self.streams > max_streams {
            return Err(bad("d_1", format!("must lie in [1, min(N, N_r)] = [1, {max_streams}], got {}", self.streams)));
        }
        if self.sigma_user.len() != self.users {
            return Err(bad("sigma_u", format!("expected {} entries, got {}", self.users, self.sigma_user.len())));
        }
        if self.qos_nats.len() != self.users {
            return Err(bad("r_bits", format!("expected {} entries, got {}", self.users, self.qos_nats.len())));
        }
        for &s in &self.sigma_user {
            if !(s > 0.0 && s.is_finite()) {
                return Err(bad("sigma_u", format!("noise levels must be positive, got {s}")));
            }
        }
        if !(self.sigma_eve > 0.0 && self.sigma_eve.is_finite()) {
            return Err(bad("sigma_e", format!("must be positive, got {}", self.sigma_eve)));
        }
        for &r in &self.qos_nats {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(bad("r_bits", format!("QoS thresholds must be non-negative, got {r}")));
            }
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(bad("zeta", format!("must be positive, got {}", self.zeta)));
        }
        if !(self.circuit_power > 0.0 && self.circuit_power.is_finite()) {
            return Err(bad("P_c_dB", format!("circuit power must be positive, got {}", self.circuit_power)));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(bad("P_max_dB_list", format!("power budget must be positive, got {}", self.p_max)));
        }
        if self.eps_secrecy.is_nan() || self.eps_secrecy < 0.0 {
            return Err(bad("eps_secrecy_bits", format!("must be non-negative, got {}", self.eps_secrecy)));
        }
        if !(self.eps_stop > 0.0 && self.eps_stop.is_finite()) {
            return Err(bad("eps_stop", format!("must be positive, got {}", self.eps_stop)));
        }
        if self.max_outer_iters < 1 {
            return Err(bad("max_outer_iters", "must be at least 1".into()));
        }
        Ok(())
    }
}

/// A parsed configuration file: the base system plus the sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Base system, with `p_max` and `circuit_power` set from the first entry
    /// of the respective lists.
    pub system: SystemConfig,
    pub p_max_db: Vec<f64>,
    pub p_c_db: Vec<f64>,
    pub seeds: Vec<u64>,
}

const CONFIG_KEYS: [&str; 15] = [
    "D",
    "N",
    "N_r",
    "N_e",
    "d_1",
    "sigma_u",
    "sigma_e",
    "r_bits",
    "zeta",
    "P_c_dB",
    "P_max_dB_list",
    "eps_secrecy_bits",
    "eps_stop",
    "max_outer_iters",
    "seeds",
];

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue { key: key.to_string(), reason: reason.into() }
}

fn get<'a>(doc: &'a serde_json::Map<String, Value>, key: &str) -> Result<&'a Value> {
    doc.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))
}

fn as_count(v: &Value, key: &str) -> Result<usize> {
    match v.as_u64() {
        Some(n) => Ok(n as usize),
        None => Err(invalid(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_real(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| invalid(key, "not representable as f64")),
        Value::String(s) if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") => Ok(f64::INFINITY),
        _ => Err(invalid(key, format!("expected a number, got {v}"))),
    }
}

/// Scalar or list; a scalar is broadcast to `len` entries.
fn as_real_list(v: &Value, key: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let out = match v {
        Value::Array(items) => items.iter().map(|x| as_real(x, key)).collect::<Result<Vec<_>>>()?,
        _ => {
            let x = as_real(v, key)?;
            vec![x; len.unwrap_or(1)]
        }
    };
    if out.is_empty() {
        return Err(invalid(key, "list must not be empty"));
    }
    if let Some(n) = len {
        if out.len() != n {
            return Err(invalid(key, format!("expected {n} entries, got {}", out.len())));
        }
    }
    Ok(out)
}

/// Parses the JSON configuration document. QoS thresholds and the secrecy
/// level are given in bits and stored in nats; powers are given in dB.
pub fn load_config(source: &str) -> Result<ExperimentConfig> {
    let doc: Value = serde_json::from_str(source)?;
    let doc = doc.as_object().ok_or_else(|| invalid("<root>", "expected a JSON object"))?;
    if let Some(unknown) = doc.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(invalid(unknown, "unknown configuration key"));
    }

    let users = as_count(get(doc, "D")?, "D")?;
    let system_dims = (
        as_count(get(doc, "N")?, "N")?,
        as_count(get(doc, "N_r")?, "N_r")?,
        as_count(get(doc, "N_e")?, "N_e")?,
        as_count(get(doc, "d_1")?, "d_1")?,
    );
    let sigma_user = as_real_list(get(doc, "sigma_u")?, "sigma_u", Some(users))?;
    let sigma_eve = as_real(get(doc, "sigma_e")?, "sigma_e")?;
    let qos_nats = as_real_list(get(doc, "r_bits")?, "r_bits", Some(users))?
        .into_iter()
        .map(bits_to_nats)
        .collect();
    let zeta = as_real(get(doc, "zeta")?, "zeta")?;
    let p_c_db = as_real_list(get(doc, "P_c_dB")?, "P_c_dB", None)?;
    let p_max_db = as_real_list(get(doc, "P_max_dB_list")?, "P_max_dB_list", None)?;
    let eps_secrecy = match doc.get("eps_secrecy_bits") {
        None => bits_to_nats(0.05),
        Some(Value::Null) => f64::INFINITY,
        Some(v) => bits_to_nats(as_real(v, "eps_secrecy_bits")?),
    };
    let eps_stop = match doc.get("eps_stop") {
        None => 1e-3,
        Some(v) => as_real(v, "eps_stop")?,
    };
    let max_outer_iters = match doc.get("max_outer_iters") {
        None => 200,
        Some(v) => as_count(v, "max_outer_iters")?,
    };
    let seeds = match doc.get("seeds") {
        None => (0..20).collect(),
        Some(v) => parse_seeds(v)?,
    };
    for &db in p_max_db.iter().chain(&p_c_db) {
        if !db.is_finite() {
            return Err(invalid("P_max_dB_list", format!("dB values must be finite, got {db}")));
        }
    }

    let (tx, rx, eve, streams) = system_dims;
    let system = SystemConfig {
        users,
        tx_antennas: tx,
        rx_antennas: rx,
        eve_antennas: eve,
        streams,
        sigma_user,
        sigma_eve,
        qos_nats,
        zeta,
        circuit_power: db_to_linear(p_c_db[0]),
        p_max: db_to_linear(p_max_db[0]),
        eps_secrecy,
        eps_stop,
        max_outer_iters,
    };
    system.validate()?;
    Ok(ExperimentConfig { system, p_max_db, p_c_db, seeds })
}

fn parse_seeds(v: &Value) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = match v {
        Value::Number(n) => (0..n.as_u64().ok_or_else(|| invalid("seeds", "count must be a non-negative integer"))?).collect(),
        Value::Array(items) => items
            .iter()
            .map(|x| x.as_u64().ok_or_else(|| invalid("seeds", format!("seed {x} is not a non-negative integer"))))
            .collect::<Result<_>>()?,
        _ => return Err(invalid("seeds", "expected a count or a list of seeds")),
    };
    if seeds.is_empty() {
        return Err(invalid("seeds", "need at least one seed"));
    }
    Ok(seeds)
}

pub fn load_config_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    load_config(&text)
}

/// Hex SHA-256 of the canonical JSON serialization of a value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex_digest(&json)
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// All channel matrices of one Rayleigh draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `user[l][j]`: transmitter `l` to user `j`, `N_r × N`.
    pub user: Vec<Vec<CMat>>,
    /// `eve[l]`: transmitter `l` to the eavesdropper, `N_e × N`.
    pub eve: Vec<CMat>,
    pub seed: u64,
}

impl ChannelSet {
    pub fn users(&self) -> usize {
        self.eve.len()
    }

    /// SHA-256 over the seed and the bit patterns of every entry.
    pub fn hash(&self) -> String {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        for m in self.user.iter().flatten().chain(&self.eve) {
            for z in m.iter() {
                bytes.extend_from_slice(&z.re.to_bits().to_le_bytes());
                bytes.extend_from_slice(&z.im.to_bits().to_le_bytes());
            }
        }
        hex_digest(&bytes)
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        let d = cfg.users;
        let ok_shape = self.user.len() == d
            && self.eve.len() == d
            && self.user.iter().all(|row| {
                row.len() == d && row.iter().all(|h| h.shape() == (cfg.rx_antennas, cfg.tx_antennas))
            })
            && self.eve.iter().all(|h| h.shape() == (cfg.eve_antennas, cfg.tx_antennas));
        if !ok_shape {
            return Err(Error::DimensionMismatch("channel set does not match the configuration".into()));
        }
        if !self.user.iter().flatten().chain(&self.eve).all(is_finite) {
            return Err(Error::NonFiniteInput("channel set"));
        }
        Ok(())
    }
}

fn cn01(rng: &mut ChaCha20Rng) -> crate::linalg::C64 {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re * scale, im * scale)
}

/// Draws a random `rows × cols` matrix with i.i.d. `CN(0, 1)` entries.
pub fn random_cn_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> CMat {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut m = CMat::zeros(rows, cols);
    for col in 0..cols {
        for row in 0..rows {
            m[(row, col)] = cn01(rng);
        }
    }
    m
}

/// Rayleigh channels, i.i.d. `CN(0, 1)` entries. Draw order: user links
/// transmitter-major (`l` outer, `j` inner), then eavesdropper links.
pub fn generate_channels(cfg: &SystemConfig, seed: u64) -> ChannelSet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = cfg.users;
    let user = (0..d)
        .map(|_| (0..d).map(|_| random_cn_matrix(&mut rng, cfg.rx_antennas, cfg.tx_antennas)).collect())
        .collect();
    let eve = (0..d).map(|_| random_cn_matrix(&mut rng, cfg.eve_antennas, cfg.tx_antennas)).collect();
    ChannelSet { user, eve, seed }
}

/// Independent generator for the randomized parts of the optimizers, on a
/// separate ChaCha stream from the channel draw of the same seed.
pub fn auxiliary_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream + 1);
    rng
}

/// The `D` transmit beamformers `V_j ∈ C^{N×d_1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub v: Vec<CMat>,
}

impl BeamformerSet {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self { v: vec![CMat::zeros(cfg.tx_antennas, cfg.streams); cfg.users] }
    }

    pub fn users(&self) -> usize {
        self.v.len()
    }

    pub fn power(&self, j: usize) -> f64 {
        fro_norm_sq(&self.v[j])
    }

    pub fn total_power(&self) -> f64 {
        (0..self.users()).map(|j| self.power(j)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { v: self.v.iter().map(|m| m.scale(factor)).collect() }
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        if self.v.len() != cfg.users || self.v.iter().any(|m| m.shape() != (cfg.tx_antennas, cfg.streams)) {
            return Err(Error::DimensionMismatch(format!(
                "beamformers must be {} matrices of size {}x{}",
                cfg.users, cfg.tx_antennas, cfg.streams
            )));
        }
        if !self.v.iter().all(is_finite) {
            return Err(Error::NonFiniteInput("beamformer set"));
        }
        Ok(())
    }
}
