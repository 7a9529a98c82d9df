//! Noise models for quantum inner-product and distance estimation.
//!
//! Distribution mode samples the exact phase-estimation outcome law; Gaussian
//! mode replaces it by additive normal noise scaled by the vector norms.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{dot, median, norm, normal};

pub const MAX_PHASE_QUBITS: u32 = 24;

/// Default per-copy success probability of amplitude estimation, `√(8/π²)`.
pub fn default_alpha() -> f64 {
    (8.0 / (PI * PI)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseModel {
    pub n_qubits: u32,
}

impl PhaseModel {
    pub fn new(n_qubits: u32) -> Result<Self> {
        if !(1..=MAX_PHASE_QUBITS).contains(&n_qubits) {
            return Err(Error::invalid(format!("n_qubits must lie in 1..={MAX_PHASE_QUBITS}")));
        }
        Ok(Self { n_qubits })
    }

    pub fn grid(&self) -> u64 {
        1u64 << self.n_qubits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpeMode {
    Distribution,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boost {
    None,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpeConfig {
    pub mode: IpeMode,
    pub n_qubits: u32,
    pub epsilon: f64,
    pub delta_prob: f64,
    pub boost: Boost,
    pub alpha: f64,
}

impl Default for IpeConfig {
    fn default() -> Self {
        Self {
            mode: IpeMode::Gaussian,
            n_qubits: 8,
            epsilon: 0.0,
            delta_prob: 0.01,
            boost: Boost::None,
            alpha: default_alpha(),
        }
    }
}

impl IpeConfig {
    pub fn gaussian(epsilon: f64) -> Self {
        Self { mode: IpeMode::Gaussian, epsilon, ..Self::default() }
    }

    pub fn distribution(n_qubits: u32) -> Self {
        Self { mode: IpeMode::Distribution, n_qubits, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_prob > 0.0 && self.delta_prob < 0.5) {
            return Err(Error::invalid("delta_prob must lie in (0, 0.5)"));
        }
        match self.mode {
            IpeMode::Gaussian if self.epsilon < 0.0 => Err(Error::invalid("epsilon must be nonnegative")),
            IpeMode::Distribution => PhaseModel::new(self.n_qubits).map(|_| ()),
            _ => Ok(()),
        }
    }

    fn copies(&self) -> Result<usize> {
        match self.boost {
            Boost::None => Ok(1),
            Boost::Median => median_copies(self.delta_prob, self.alpha),
        }
    }
}

fn nearest_grid(omega: f64, grid: u64) -> (u64, f64) {
    let scaled = omega * grid as f64;
    let b = scaled.round();
    let delta = omega - b / grid as f64;
    ((b as u64) % grid, delta)
}

/// Outcome probability of grid index `k` for phase `omega`.
fn pe_prob(omega: f64, k: u64, grid: u64) -> f64 {
    let m = grid as f64;
    let num = (PI * m * omega).sin();
    let den = (PI * (omega - k as f64 / m)).sin();
    num * num / (m * m * den * den)
}

fn on_grid(delta: f64, grid: u64) -> bool {
    (delta * grid as f64).abs() < 1e-12
}

/// Probability of each grid outcome `ℓ/2^n` when estimating phase `omega`.
pub fn pe_distribution(omega: f64, model: PhaseModel) -> Vec<f64> {
    let omega = omega.rem_euclid(1.0);
    let grid = model.grid();
    let (b, delta) = nearest_grid(omega, grid);
    let mut p = vec![0.0; grid as usize];
    if on_grid(delta, grid) {
        p[b as usize] = 1.0;
        return p;
    }
    for (k, pk) in p.iter_mut().enumerate() {
        *pk = pe_prob(omega, k as u64, grid);
    }
    p
}

/// Draws a grid index from the phase-estimation outcome law.
///
/// Inverse-CDF sampling that walks outward from the nearest grid point, so
/// the expected cost is small even for large registers.
pub fn sample_phase_index<R: Rng + ?Sized>(omega: f64, model: PhaseModel, rng: &mut R) -> u64 {
    let omega = omega.rem_euclid(1.0);
    let grid = model.grid();
    let (b, delta) = nearest_grid(omega, grid);
    if on_grid(delta, grid) {
        return b;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = b;
    for step in 0..grid {
        let off = if step % 2 == 0 { (step / 2) as i64 } else { -(step.div_ceil(2) as i64) };
        let k = (b as i64 + off).rem_euclid(grid as i64) as u64;
        acc += pe_prob(omega, k, grid);
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

pub fn sample_phase<R: Rng + ?Sized>(omega: f64, model: PhaseModel, rng: &mut R) -> f64 {
    sample_phase_index(omega, model, rng) as f64 / model.grid() as f64
}

/// `L = ⌈ln(1/Δ) / (2(α − ½)²)⌉` copies for median boosting.
pub fn median_copies(delta: f64, alpha: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("Δ must lie in (0, 1)"));
    }
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::invalid("α must lie in (1/2, 1]"));
    }
    let l = ((1.0 / delta).ln() / (2.0 * (alpha - 0.5).powi(2))).ceil();
    Ok((l as usize).max(1))
}

fn norms(v: &[f64], w: &[f64]) -> Result<(f64, f64, f64)> {
    if v.len() != w.len() {
        return Err(Error::DimMismatch { expected: v.len(), got: w.len() });
    }
    let (nv, nw) = (norm(v), norm(w));
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let cos = (dot(v, w) / (nv * nw)).clamp(-1.0, 1.0);
    Ok((nv, nw, cos))
}

/// Amplitude `a ∈ [0,1]` recovered through a sampled phase.
fn noisy_amplitude<R: Rng + ?Sized>(a: f64, model: PhaseModel, rng: &mut R) -> f64 {
    let omega = a.clamp(0.0, 1.0).asin() / PI;
    (PI * sample_phase(omega, model, rng)).sin()
}

fn boosted<R: Rng + ?Sized>(cfg: &IpeConfig, rng: &mut R, mut one: impl FnMut(&mut R) -> f64) -> Result<f64> {
    let copies = cfg.copies()?;
    if copies == 1 {
        return Ok(one(rng));
    }
    let mut draws: Vec<f64> = (0..copies).map(|_| one(rng)).collect();
    Ok(median(&mut draws))
}

/// Noisy estimate of `(v, w)`.
pub fn estimate_inner_product<R: Rng + ?Sized>(v: &[f64], w: &[f64], cfg: &IpeConfig, rng: &mut R) -> Result<f64> {
    cfg.validate()?;
    let (nv, nw, cos) = norms(v, w)?;
    let scale = nv * nw;
    match cfg.mode {
        IpeMode::Distribution => {
            let model = PhaseModel::new(cfg.n_qubits)?;
            let a = 0.5 * (1.0 + cos);
            boosted(cfg, rng, |r| scale * (2.0 * noisy_amplitude(a, model, r) - 1.0))
        }
        IpeMode::Gaussian => {
            let exact = scale * cos;
            if cfg.epsilon == 0.0 {
                return Ok(exact);
            }
            boosted(cfg, rng, |r| exact + cfg.epsilon * scale * normal(r))
        }
    }
}

/// Noisy estimate of `‖v − w‖²`.
pub fn estimate_sq_distance<R: Rng + ?Sized>(v: &[f64], w: &[f64], cfg: &IpeConfig, rng: &mut R) -> Result<f64> {
    cfg.validate()?;
    let (nv, nw, cos) = norms(v, w)?;
    let scale = nv * nw;
    let base = nv * nv + nw * nw;
    match cfg.mode {
        IpeMode::Distribution => {
            let model = PhaseModel::new(cfg.n_qubits)?;
            let a = 0.5 * (1.0 - cos);
            boosted(cfg, rng, |r| {
                let ip = 1.0 - 2.0 * noisy_amplitude(a, model, r);
                base - 2.0 * scale * ip
            })
        }
        IpeMode::Gaussian => {
            let exact = (base - 2.0 * scale * cos).max(0.0);
            if cfg.epsilon == 0.0 {
                return Ok(exact);
            }
            boosted(cfg, rng, |r| exact + cfg.epsilon * scale * normal(r))
        }
    }
}
