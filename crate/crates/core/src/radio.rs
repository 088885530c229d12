//! Physical layer: path loss, shadowing, fading, noise, SINR, rate and delay.
//!
//! Every function is a pure function of its inputs and an explicitly passed
//! RNG.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::math;
use crate::world::Point;
use crate::{Error, Result};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Small-scale fading model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fading {
    /// Unit-mean exponential power fade (Rayleigh envelope), redrawn every slot.
    Rayleigh,
    /// Fade pinned to 1.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub pathloss_exponent: f64,
    /// Log-normal shadowing standard deviation; drawn once per link per episode.
    pub shadowing_sigma_db: f64,
    pub fading: Fading,
    pub noise_figure_db: f64,
    pub noise_temperature_k: f64,
    pub tx_power_min_dbm: f64,
    pub tx_power_max_dbm: f64,
    /// Threshold spectral efficiency in bps/Hz; `R_th = rate_threshold_se * bandwidth_hz`.
    pub rate_threshold_se: f64,
    pub payload_bits: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            carrier_hz: 6e9,
            pathloss_exponent: 2.7,
            shadowing_sigma_db: 7.0,
            fading: Fading::Rayleigh,
            noise_figure_db: 10.0,
            noise_temperature_k: 290.0,
            tx_power_min_dbm: 0.0,
            tx_power_max_dbm: 20.0,
            rate_threshold_se: 0.05,
            payload_bits: 64.0 * 8.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.bandwidth_hz) {
            return Err(Error::Config { key: "bandwidth_hz", reason: "must be > 0" });
        }
        if !pos(self.carrier_hz) {
            return Err(Error::Config { key: "carrier_hz", reason: "must be > 0" });
        }
        if !pos(self.pathloss_exponent) {
            return Err(Error::Config { key: "pathloss_exponent", reason: "must be > 0" });
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(Error::Config { key: "shadowing_sigma_db", reason: "must be >= 0" });
        }
        if !pos(self.noise_temperature_k) {
            return Err(Error::Config { key: "noise_temperature_k", reason: "must be > 0" });
        }
        if !self.noise_figure_db.is_finite() {
            return Err(Error::Config { key: "noise_figure_db", reason: "must be finite" });
        }
        if !(self.tx_power_min_dbm.is_finite()
            && self.tx_power_max_dbm.is_finite()
            && self.tx_power_min_dbm <= self.tx_power_max_dbm)
        {
            return Err(Error::Config {
                key: "tx_power_min_dbm",
                reason: "must be finite and <= tx_power_max_dbm",
            });
        }
        if !pos(self.rate_threshold_se) {
            return Err(Error::Config { key: "rate_threshold_se", reason: "must be > 0" });
        }
        if !pos(self.payload_bits) {
            return Err(Error::Config { key: "payload_bits", reason: "must be > 0" });
        }
        Ok(())
    }

    pub fn p_min_w(&self) -> f64 {
        math::dbm_to_w(self.tx_power_min_dbm)
    }

    pub fn p_max_w(&self) -> f64 {
        math::dbm_to_w(self.tx_power_max_dbm)
    }

    /// Threshold rate in bps.
    pub fn rate_threshold_bps(&self) -> f64 {
        self.rate_threshold_se * self.bandwidth_hz
    }

    /// SINR at which the link rate equals the threshold rate.
    pub fn threshold_sinr(&self) -> f64 {
        math::powf(2.0, self.rate_threshold_se) - 1.0
    }
}

/// Linear power gains for one slot. Entry `(l, m)` is the gain from the
/// transmitter of subnetwork `l` to the device of subnetwork `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    size: usize,
    gains: Vec<f64>,
}

impl ChannelMatrix {
    /// Builds a matrix from row-major gains. Every entry must be finite and > 0.
    pub fn from_rows(size: usize, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != size * size {
            return Err(Error::DimensionMismatch { expected: size * size, got: gains.len() });
        }
        if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Domain("channel gains must be finite and > 0"));
        }
        Ok(Self { size, gains })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Gain from transmitter `from` to the device of subnetwork `to`.
    #[inline]
    pub fn gain(&self, from: usize, to: usize) -> f64 {
        self.gains[from * self.size + to]
    }

    /// Gains seen at the device of `m`: column `m`.
    pub fn incoming(&self, m: usize) -> Vec<f64> {
        (0..self.size).map(|l| self.gain(l, m)).collect()
    }

    /// Gains produced by the transmitter of `m`: row `m`.
    pub fn outgoing(&self, m: usize) -> Vec<f64> {
        self.gains[m * self.size..(m + 1) * self.size].to_vec()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gains
    }
}

/// Log-distance path loss with a free-space intercept at 1 m.
pub fn path_loss_db(distance_m: f64, cfg: &RadioConfig) -> Result<f64> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::Domain("path loss distance must be > 0"));
    }
    let fspl_1m = 20.0 * math::log10(4.0 * core::f64::consts::PI * cfg.carrier_hz / SPEED_OF_LIGHT);
    Ok(fspl_1m + 10.0 * cfg.pathloss_exponent * math::log10(distance_m))
}

/// Thermal noise power `K T B 10^(NF/10)` in Watts.
pub fn noise_power_w(cfg: &RadioConfig) -> f64 {
    BOLTZMANN * cfg.noise_temperature_k * cfg.bandwidth_hz * math::db_to_lin(cfg.noise_figure_db)
}

/// Per-link shadowing in dB, fixed for an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowingMap {
    size: usize,
    db: Vec<f64>,
}

impl ShadowingMap {
    pub fn zero(size: usize) -> Self {
        Self { size, db: vec![0.0; size * size] }
    }

    pub fn draw<R: Rng + ?Sized>(size: usize, cfg: &RadioConfig, rng: &mut R) -> Self {
        let db = (0..size * size)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * cfg.shadowing_sigma_db
            })
            .collect();
        Self { size, db }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn db(&self, from: usize, to: usize) -> f64 {
        self.db[from * self.size + to]
    }
}

/// Draws one small-scale power fade.
pub fn draw_fade<R: Rng + ?Sized>(fading: Fading, rng: &mut R) -> f64 {
    match fading {
        Fading::Rayleigh => Exp1.sample(rng),
        Fading::None => 1.0,
    }
}

/// Draws the slot's channel between transmitters `tx` and devices `rx`:
/// `gain(l, m) = 10^(-PL(d_lm)/10) * 10^(S_lm/10) * F_lm`.
pub fn draw_channel<R: Rng + ?Sized>(
    tx: &[Point],
    rx: &[Point],
    shadowing: &ShadowingMap,
    cfg: &RadioConfig,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let size = tx.len();
    if rx.len() != size {
        return Err(Error::DimensionMismatch { expected: size, got: rx.len() });
    }
    if shadowing.size() != size {
        return Err(Error::DimensionMismatch { expected: size, got: shadowing.size() });
    }
    let mut gains = Vec::with_capacity(size * size);
    for (l, from) in tx.iter().enumerate() {
        for (m, to) in rx.iter().enumerate() {
            let pl = path_loss_db(from.distance(to), cfg)?;
            let fade = draw_fade(cfg.fading, rng);
            let g = math::db_to_lin(shadowing.db(l, m) - pl) * fade;
            // an exponential draw of exactly 0 is possible in principle
            gains.push(if g > 0.0 { g } else { f64::MIN_POSITIVE });
        }
    }
    ChannelMatrix::from_rows(size, gains)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinr {
    pub sinr: f64,
    /// Sum interference `I_m` in Watts.
    pub interference_w: f64,
}

/// SINR of the desired link of subnetwork `m` under transmit powers `p`
/// (Watts; non-transmitting subnetworks carry 0).
pub fn sinr(h: &ChannelMatrix, p: &[f64], m: usize, noise_w: f64) -> Result<Sinr> {
    let size = h.size();
    if p.len() != size {
        return Err(Error::DimensionMismatch { expected: size, got: p.len() });
    }
    if m >= size {
        return Err(Error::IndexOutOfRange { index: m, len: size });
    }
    let interference_w: f64 = (0..size).filter(|&l| l != m).map(|l| p[l] * h.gain(l, m)).sum();
    Ok(Sinr { sinr: p[m] * h.gain(m, m) / (interference_w + noise_w), interference_w })
}

/// Shannon rate `B log2(1 + gamma)` in bps.
pub fn link_rate_bps(gamma: f64, cfg: &RadioConfig) -> f64 {
    cfg.bandwidth_hz * math::ln_1p(gamma) / core::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Seconds(f64),
    /// Zero rate: the packet never arrives.
    Undeliverable,
}

impl Delay {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Delay::Seconds(s) => Some(s),
            Delay::Undeliverable => None,
        }
    }
}

/// Packet delay `A / R + tau`.
pub fn packet_delay_s(rate_bps: f64, buffer_wait_s: f64, cfg: &RadioConfig) -> Delay {
    if rate_bps > 0.0 {
        Delay::Seconds(cfg.payload_bits / rate_bps + buffer_wait_s)
    } else {
        Delay::Undeliverable
    }
}
