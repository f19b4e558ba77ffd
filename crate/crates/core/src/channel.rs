//! RF and THz link budgets.
//!
//! Everything in this module is a pure function of its inputs. Randomness
//! (fading, beam alignment) is drawn by the caller through the `sample_*`
//! helpers and passed in as a [`ChannelDraw`], so link evaluation itself is
//! deterministic and can be checked against an independent evaluator.
//!
//! All gains and powers are linear. Use [`db_to_linear`] at the config
//! boundary when a value is given in dB.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Thermal noise power `k_B * T * W` in watts.
pub fn thermal_noise_w(temperature_k: f64, bandwidth_hz: f64) -> f64 {
    BOLTZMANN * temperature_k * bandwidth_hz
}

/// Free-space wavelength factor `(c / (4 pi f))^2`.
fn wavelength_factor(carrier_hz: f64) -> f64 {
    let k = SPEED_OF_LIGHT / (4.0 * PI * carrier_hz);
    k * k
}

/// Sub-6GHz tier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub tx_power_w: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub carrier_hz: f64,
    pub pathloss_exp: f64,
    pub noise_w: f64,
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tx_power_w", self.tx_power_w),
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("carrier_hz", self.carrier_hz),
            ("noise_w", self.noise_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "rf {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.pathloss_exp >= 2.0 && self.pathloss_exp.is_finite()) {
            return Err(Error::invalid(format!(
                "rf pathloss_exp must be >= 2, got {}",
                self.pathloss_exp
            )));
        }
        Ok(())
    }
}

/// Which antenna end a gain refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AntennaSide {
    Tx,
    Rx,
}

/// How THz interferer beam alignment enters the interference and noise sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Deterministic `G_max^2 * F_tx * F_rx` factor per interferer.
    #[default]
    Expected,
    /// Per-interferer gain product `D` taken from the draw.
    Sampled,
}

/// THz tier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThzParams {
    pub tx_power_w: f64,
    pub main_gain_tx: f64,
    pub main_gain_rx: f64,
    pub side_gain_tx: f64,
    pub side_gain_rx: f64,
    pub carrier_hz: f64,
    pub absorption_per_m: f64,
    pub thermal_noise_w: f64,
    pub beamwidth_tx_rad: f64,
    pub beamwidth_rx_rad: f64,
    pub align_prob_tx: f64,
    pub align_prob_rx: f64,
}

impl ThzParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tx_power_w", self.tx_power_w),
            ("main_gain_tx", self.main_gain_tx),
            ("main_gain_rx", self.main_gain_rx),
            ("carrier_hz", self.carrier_hz),
            ("thermal_noise_w", self.thermal_noise_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "thz {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.absorption_per_m >= 0.0) {
            return Err(Error::invalid("thz absorption_per_m must be >= 0"));
        }
        for (name, p) in [
            ("align_prob_tx", self.align_prob_tx),
            ("align_prob_rx", self.align_prob_rx),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "thz {name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if !(0.0..=self.main_gain_tx).contains(&self.side_gain_tx)
            || !(0.0..=self.main_gain_rx).contains(&self.side_gain_rx)
        {
            return Err(Error::invalid(
                "thz side-lobe gains must lie in [0, main gain]",
            ));
        }
        Ok(())
    }

    fn main_gain(&self, side: AntennaSide) -> f64 {
        match side {
            AntennaSide::Tx => self.main_gain_tx,
            AntennaSide::Rx => self.main_gain_rx,
        }
    }

    fn side_gain(&self, side: AntennaSide) -> f64 {
        match side {
            AntennaSide::Tx => self.side_gain_tx,
            AntennaSide::Rx => self.side_gain_rx,
        }
    }

    fn beamwidth(&self, side: AntennaSide) -> f64 {
        match side {
            AntennaSide::Tx => self.beamwidth_tx_rad,
            AntennaSide::Rx => self.beamwidth_rx_rad,
        }
    }

    /// Expected interferer gain product `E[D]` under the alignment law.
    pub fn expected_alignment(&self) -> f64 {
        let (ft, fr) = (self.align_prob_tx, self.align_prob_rx);
        ft * fr * self.main_gain_tx * self.main_gain_rx
            + ft * (1.0 - fr) * self.main_gain_tx * self.side_gain_rx
            + (1.0 - ft) * fr * self.side_gain_tx * self.main_gain_rx
            + (1.0 - ft) * (1.0 - fr) * self.side_gain_tx * self.side_gain_rx
    }
}

/// Distances from one AV to its serving BS and to each interferer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub serving_dist_m: f64,
    pub interferer_dists_m: Vec<f64>,
}

/// Random quantities for one evaluation of a link.
///
/// `interferer_alignments` is only read by the THz model in
/// [`InterferenceMode::Sampled`]; it may be empty otherwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelDraw {
    pub serving_fade: f64,
    pub interferer_fades: Vec<f64>,
    pub interferer_alignments: Vec<f64>,
}

impl ChannelDraw {
    /// Unit fades everywhere, no alignment samples.
    pub fn unit(n_interferers: usize) -> Self {
        Self {
            serving_fade: 1.0,
            interferer_fades: vec![1.0; n_interferers],
            interferer_alignments: Vec::new(),
        }
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Contract(format!(
            "{what}: expected {expected} entries to match interferers, got {got}"
        )));
    }
    Ok(())
}

/// `gamma_R = G_tx * G_rx * (c / 4 pi f_R)^2`.
pub fn rf_constant(params: &RfParams) -> f64 {
    params.tx_gain * params.rx_gain * wavelength_factor(params.carrier_hz)
}

/// `gamma_T = G_max^tx * G_max^rx * (c / 4 pi f_T)^2`.
pub fn thz_constant(params: &ThzParams) -> f64 {
    params.main_gain_tx * params.main_gain_rx * wavelength_factor(params.carrier_hz)
}

/// Downlink SINR from an RBS with Rayleigh fading and co-tier interference.
pub fn rf_sinr(params: &RfParams, geom: &LinkGeometry, draw: &ChannelDraw) -> Result<f64> {
    check_len(
        "interferer_fades",
        geom.interferer_dists_m.len(),
        draw.interferer_fades.len(),
    )?;
    let gamma = rf_constant(params);
    let p = params.tx_power_w;
    let interference: f64 = geom
        .interferer_dists_m
        .iter()
        .zip(&draw.interferer_fades)
        .map(|(&r, &h)| p * gamma * r.powf(-params.pathloss_exp) * h)
        .sum();
    let signal = gamma * p * draw.serving_fade;
    Ok(signal / (geom.serving_dist_m.powf(params.pathloss_exp) * (params.noise_w + interference)))
}

fn interferer_factors(
    params: &ThzParams,
    geom: &LinkGeometry,
    alignments: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let wl = wavelength_factor(params.carrier_hz);
    match alignments {
        Some(d) => {
            check_len(
                "interferer_alignments",
                geom.interferer_dists_m.len(),
                d.len(),
            )?;
            Ok(d.iter().map(|&d| d * wl).collect())
        }
        None => {
            let g = thz_constant(params) * params.align_prob_tx * params.align_prob_rx;
            Ok(vec![g; geom.interferer_dists_m.len()])
        }
    }
}

/// Thermal plus molecular-absorption noise at the AV.
///
/// With `alignments = None` each interferer contributes through the expected
/// factor `gamma_T * F_tx * F_rx`; otherwise through `D_k * (c / 4 pi f)^2`.
pub fn thz_noise(
    params: &ThzParams,
    geom: &LinkGeometry,
    alignments: Option<&[f64]>,
) -> Result<f64> {
    let factors = interferer_factors(params, geom, alignments)?;
    let gamma = thz_constant(params);
    let ka = params.absorption_per_m;
    let p = params.tx_power_w;
    let r = geom.serving_dist_m;
    let serving = p * gamma * r.powi(-2) * (-(-ka * r).exp_m1());
    let others: f64 = geom
        .interferer_dists_m
        .iter()
        .zip(&factors)
        .map(|(&rk, &g)| g * p * rk.powi(-2) * (-(-ka * rk).exp_m1()))
        .sum();
    Ok(params.thermal_noise_w + serving + others)
}

/// Line-of-sight THz SINR with absorption loss, absorption noise and
/// interference from other TBSs.
pub fn thz_sinr(
    params: &ThzParams,
    geom: &LinkGeometry,
    draw: &ChannelDraw,
    mode: InterferenceMode,
) -> Result<f64> {
    let alignments = match mode {
        InterferenceMode::Expected => None,
        InterferenceMode::Sampled => Some(draw.interferer_alignments.as_slice()),
    };
    let factors = interferer_factors(params, geom, alignments)?;
    let noise = thz_noise(params, geom, alignments)?;
    let gamma = thz_constant(params);
    let ka = params.absorption_per_m;
    let p = params.tx_power_w;
    let r = geom.serving_dist_m;
    let interference: f64 = geom
        .interferer_dists_m
        .iter()
        .zip(&factors)
        .map(|(&rk, &g)| g * p * rk.powi(-2) * (-ka * rk).exp())
        .sum();
    let signal = gamma * p * (-ka * r).exp() * r.powi(-2);
    Ok(signal / (noise + interference))
}

/// Sectored antenna pattern: main-lobe gain inside the beamwidth, side-lobe
/// gain outside. Angles are wrapped into `[-pi, pi)` first.
pub fn antenna_gain(params: &ThzParams, theta_rad: f64, side: AntennaSide) -> f64 {
    let theta = wrap_angle(theta_rad);
    if theta.abs() <= params.beamwidth(side) {
        params.main_gain(side)
    } else {
        params.side_gain(side)
    }
}

fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Draws the interferer gain product `D`.
pub fn sample_alignment<R: Rng + ?Sized>(params: &ThzParams, rng: &mut R) -> f64 {
    let tx = if rng.gen::<f64>() < params.align_prob_tx {
        params.main_gain_tx
    } else {
        params.side_gain_tx
    };
    let rx = if rng.gen::<f64>() < params.align_prob_rx {
        params.main_gain_rx
    } else {
        params.side_gain_rx
    };
    tx * rx
}

/// Inverse-CDF map of a uniform `u in [0, 1)` to a unit-mean exponential.
pub fn fading_from_uniform(u: f64) -> f64 {
    -(-u).ln_1p()
}

/// Rayleigh fading power sample (unit-mean exponential).
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    fading_from_uniform(rng.gen::<f64>())
}

/// Shannon rate `W * log2(1 + SINR)` in bits/s.
pub fn link_rate(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2
}

/// SINR from every RBS in `dists` at once, treating all the others as
/// interferers. Equivalent to calling [`rf_sinr`] per BS, in O(n).
pub fn rf_sinr_all(params: &RfParams, dists: &[f64], fades: &[f64], out: &mut Vec<f64>) {
    debug_assert_eq!(dists.len(), fades.len());
    out.clear();
    let gamma = rf_constant(params);
    let p = params.tx_power_w;
    let rx: Vec<f64> = dists
        .iter()
        .zip(fades)
        .map(|(&r, &h)| p * gamma * r.powf(-params.pathloss_exp) * h)
        .collect();
    for (i, &own) in rx.iter().enumerate() {
        // Summing the others explicitly keeps the result identical to rf_sinr.
        let interference: f64 = rx
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &v)| v)
            .sum();
        out.push(own / (params.noise_w + interference));
    }
}

/// SINR from every TBS in `dists` at once. `alignments` follows the same
/// convention as [`thz_noise`] but indexed per BS; each BS's own entry is
/// ignored when it is the serving one.
pub fn thz_sinr_all(
    params: &ThzParams,
    dists: &[f64],
    alignments: Option<&[f64]>,
    out: &mut Vec<f64>,
) {
    out.clear();
    let gamma = thz_constant(params);
    let wl = wavelength_factor(params.carrier_hz);
    let expected = gamma * params.align_prob_tx * params.align_prob_rx;
    let ka = params.absorption_per_m;
    let p = params.tx_power_w;
    let base: Vec<(f64, f64)> = dists
        .iter()
        .map(|&r| {
            let a = p * r.powi(-2);
            (a * (-ka * r).exp(), a * (-(-ka * r).exp_m1()))
        })
        .collect();
    for (i, &(sig, absn)) in base.iter().enumerate() {
        let mut others = 0.0;
        for (k, &(s, n)) in base.iter().enumerate() {
            if k == i {
                continue;
            }
            let g = alignments.map_or(expected, |d| d[k] * wl);
            others += g * n + g * s;
        }
        out.push(gamma * sig / (params.thermal_noise_w + gamma * absn + others));
    }
}
