//! Shot-based recovery of classical vectors from quantum states.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{multinomial, norm};

/// Sign-decision threshold on `n(0,i) / (N p_i)`.
pub const SIGN_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Linf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyConfig {
    pub delta: f64,
    pub norm_mode: NormMode,
    #[serde(default)]
    pub shots_override: Option<u64>,
}

impl TomographyConfig {
    pub fn linf(delta: f64) -> Self {
        Self { delta, norm_mode: NormMode::Linf, shots_override: None }
    }

    pub fn l2(delta: f64) -> Self {
        Self { delta, norm_mode: NormMode::L2, shots_override: None }
    }

    pub fn shots(&self, d: usize) -> u64 {
        if let Some(n) = self.shots_override {
            return n.max(1);
        }
        match self.norm_mode {
            NormMode::Linf => linf_shots(d, self.delta),
            NormMode::L2 => l2_shots(d, self.delta),
        }
    }
}

/// `N = ⌈36 ln d / δ²⌉`.
pub fn linf_shots(d: usize, delta: f64) -> u64 {
    ((36.0 * (d as f64).ln() / (delta * delta)).ceil() as u64).max(1)
}

/// `N = ⌈36 d ln d / δ²⌉`.
pub fn l2_shots(d: usize, delta: f64) -> u64 {
    ((36.0 * d as f64 * (d as f64).ln() / (delta * delta)).ceil() as u64).max(1)
}

pub fn tomography<R: Rng + ?Sized>(x: &[f64], cfg: &TomographyConfig, rng: &mut R) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("tomography needs d >= 1"));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::invalid("tomography delta must lie in (0, 1)"));
    }
    let nrm = norm(x);
    if (nrm - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnit(nrm));
    }
    let shots = cfg.shots(x.len());
    let probs: Vec<f64> = x.iter().map(|v| v * v).collect();
    let counts = multinomial(rng, shots, &probs);
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();

    // interference of |x> with the estimated √p; leftover mass is a sink outcome
    let d = x.len();
    let mut q = Vec::with_capacity(2 * d);
    q.extend(x.iter().zip(&p).map(|(xi, pi)| 0.25 * (xi + pi.sqrt()).powi(2)));
    q.extend(x.iter().zip(&p).map(|(xi, pi)| 0.25 * (xi - pi.sqrt()).powi(2)));
    let inter = multinomial(rng, shots, &q);

    let mut out: Vec<f64> = (0..d)
        .map(|i| {
            let plus = inter[i] as f64 > SIGN_THRESHOLD * shots as f64 * p[i];
            if plus {
                p[i].sqrt()
            } else {
                -p[i].sqrt()
            }
        })
        .collect();
    let on = norm(&out);
    if on > 0.0 {
        out.iter_mut().for_each(|v| *v /= on);
    }
    Ok(out)
}

pub fn linf_tomography<R: Rng + ?Sized>(x: &[f64], delta: f64, rng: &mut R) -> Result<Vec<f64>> {
    tomography(x, &TomographyConfig::linf(delta), rng)
}

pub fn l2_tomography<R: Rng + ?Sized>(x: &[f64], delta: f64, rng: &mut R) -> Result<Vec<f64>> {
    tomography(x, &TomographyConfig::l2(delta), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceConfig {
    SigmaRatio(f64),
    Nu(f64),
}

impl ImportanceConfig {
    /// Threshold `ν = 1/√(σ·size)`.
    pub fn nu(&self, size: usize) -> f64 {
        match *self {
            ImportanceConfig::SigmaRatio(s) => 1.0 / (s * size as f64).sqrt(),
            ImportanceConfig::Nu(nu) => nu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ImportanceConfig::SigmaRatio(s) if !(s > 0.0 && s <= 1.0) => Err(Error::invalid("σ must lie in (0, 1]")),
            ImportanceConfig::Nu(nu) if !(nu > 0.0) => Err(Error::invalid("ν must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub values: Vec<f64>,
    pub kept: Vec<bool>,
}

/// Keeps the entries observed under amplitude-proportional sampling, plus
/// every entry whose normalized amplitude reaches `ν`; zeroes the rest.
pub fn importance_sample_mask<R: Rng + ?Sized>(values: &[f64], cfg: &ImportanceConfig, rng: &mut R) -> Result<Sampled> {
    cfg.validate()?;
    if values.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("importance sampling expects nonnegative values"));
    }
    let nrm = norm(values);
    if nrm == 0.0 {
        return Ok(Sampled { values: vec![0.0; values.len()], kept: vec![false; values.len()] });
    }
    let nu = cfg.nu(values.len());
    let draws = (1.0 / (nu * nu)).ceil() as u64;
    let probs: Vec<f64> = values.iter().map(|v| (v / nrm).powi(2)).collect();
    let counts = multinomial(rng, draws, &probs);
    let kept: Vec<bool> = values
        .iter()
        .zip(&counts)
        .map(|(v, &c)| v / nrm >= nu || c > 0)
        .collect();
    let out = values.iter().zip(&kept).map(|(v, &k)| if k { *v } else { 0.0 }).collect();
    Ok(Sampled { values: out, kept })
}

pub fn importance_sample<R: Rng + ?Sized>(values: &[f64], cfg: &ImportanceConfig, rng: &mut R) -> Result<Vec<f64>> {
    Ok(importance_sample_mask(values, cfg, rng)?.values)
}

/// Joint outcome law `Pr[b, e_j] = ¼(y_j ± 1/√n)²` of the signed readout;
/// the first `n` entries are `b = 0`, the next `n` are `b = 1`.
pub fn signed_outcome_probs(y: &[f64]) -> Vec<f64> {
    let s = 1.0 / (y.len() as f64).sqrt();
    let mut q: Vec<f64> = y.iter().map(|v| 0.25 * (v + s).powi(2)).collect();
    q.extend(y.iter().map(|v| 0.25 * (v - s).powi(2)));
    q
}

/// Signed estimates of the layer outputs `y_j = W_j x` from `shots` samples
/// of the control-qubit interference circuit.
pub fn signed_layer_estimate<R: Rng + ?Sized>(y: &[f64], shots: u64, rng: &mut R) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 || shots == 0 {
        return Err(Error::invalid("signed readout needs outputs and shots"));
    }
    let nrm = norm(y);
    if nrm > 1.0 + 1e-9 {
        return Err(Error::NonUnit(nrm));
    }
    let counts = multinomial(rng, shots, &signed_outcome_probs(y));
    let s = 1.0 / (n as f64).sqrt();
    Ok((0..n)
        .map(|j| {
            let (c0, c1) = (counts[j], counts[n + j]);
            if c0 == 0 && c1 == 0 {
                0.0
            } else if c0 >= c1 {
                2.0 * (c0 as f64 / shots as f64).sqrt() - s
            } else {
                -(2.0 * (c1 as f64 / shots as f64).sqrt() - s)
            }
        })
        .collect())
}
