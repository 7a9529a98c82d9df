//! Theoretical running-time formulas, evaluated with unit constants.
//!
//! Hidden polylogarithmic factors are dropped; a logarithm only appears when
//! a formula writes it explicitly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    QmeansGeneral,
    QmeansWc,
    KmeansClassical,
    SpectralQuantum,
    SpectralClassical,
    CnnClassical,
    CnnQuantum,
    OrthonnQff,
    OrthonnCff,
    OrthonnTrain,
    SvbTrain,
}

impl CostModel {
    pub const ALL: [CostModel; 11] = [
        CostModel::QmeansGeneral,
        CostModel::QmeansWc,
        CostModel::KmeansClassical,
        CostModel::SpectralQuantum,
        CostModel::SpectralClassical,
        CostModel::CnnClassical,
        CostModel::CnnQuantum,
        CostModel::OrthonnQff,
        CostModel::OrthonnCff,
        CostModel::OrthonnTrain,
        CostModel::SvbTrain,
    ];

    pub fn formula(&self) -> &'static str {
        match self {
            CostModel::QmeansGeneral => "k d eta/delta^2 kappa (mu + k eta/delta) + k^2 eta^1.5/delta^2 kappa mu",
            CostModel::QmeansWc => "k^2 d eta^2.5/delta^3 + k^2.5 eta^2/delta^3",
            CostModel::KmeansClassical => "n k d",
            CostModel::SpectralQuantum => "t_s eta_s/(eps_dist eps_b) mu_b kappa_l/eps_lambda k^3 eta_l^2.5/delta^3",
            CostModel::SpectralClassical => "n^3",
            CostModel::CnnClassical => "h_out w_out d_out * kh kw d_in",
            CostModel::CnnQuantum => "sigma h_out w_out d_out * m sqrt(c)/(eps sqrt(mean_f))",
            CostModel::OrthonnQff => "2 n/delta^2",
            CostModel::OrthonnCff => "2 n (n-1)",
            CostModel::OrthonnTrain => "n^2",
            CostModel::SvbTrain => "n^3",
        }
    }

    /// Parameters the formula needs; `t_s` defaults to 1 when absent.
    pub fn required(&self) -> &'static [&'static str] {
        match self {
            CostModel::QmeansGeneral => &["k", "d", "eta", "delta", "kappa", "mu"],
            CostModel::QmeansWc => &["k", "d", "eta", "delta"],
            CostModel::KmeansClassical => &["n", "k", "d"],
            CostModel::SpectralQuantum => &["eta_s", "eps_dist", "eps_b", "mu_b", "kappa_l", "eps_lambda", "k", "eta_l", "delta"],
            CostModel::SpectralClassical => &["n"],
            CostModel::CnnClassical => &["h_out", "w_out", "d_out", "kh", "kw", "d_in"],
            CostModel::CnnQuantum => &["sigma", "h_out", "w_out", "d_out", "m", "c", "eps", "mean_f"],
            CostModel::OrthonnQff => &["n", "delta"],
            CostModel::OrthonnCff | CostModel::OrthonnTrain | CostModel::SvbTrain => &["n"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostQuery {
    pub model_id: CostModel,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEval {
    pub model_id: CostModel,
    pub formula: String,
    pub value: f64,
    pub params: BTreeMap<String, f64>,
}

impl CostQuery {
    pub fn new(model_id: CostModel, params: &[(&str, f64)]) -> Self {
        Self { model_id, params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    fn get(&self, name: &str) -> Result<f64> {
        let v = *self.params.get(name).ok_or_else(|| Error::MissingParam(name.into()))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("parameter `{name}` must be positive, got {v}")));
        }
        Ok(v)
    }
}

pub fn evaluate_cost(q: &CostQuery) -> Result<CostEval> {
    let p = |name: &str| q.get(name);
    let value = match q.model_id {
        CostModel::QmeansGeneral => {
            let (k, d, eta, delta, kappa, mu) = (p("k")?, p("d")?, p("eta")?, p("delta")?, p("kappa")?, p("mu")?);
            k * d * eta / delta.powi(2) * kappa * (mu + k * eta / delta) + k * k * eta.powf(1.5) / delta.powi(2) * kappa * mu
        }
        CostModel::QmeansWc => {
            let (k, d, eta, delta) = (p("k")?, p("d")?, p("eta")?, p("delta")?);
            k * k * d * eta.powf(2.5) / delta.powi(3) + k.powf(2.5) * eta * eta / delta.powi(3)
        }
        CostModel::KmeansClassical => p("n")? * p("k")? * p("d")?,
        CostModel::SpectralQuantum => {
            let t_s = match q.params.get("t_s") {
                Some(_) => p("t_s")?,
                None => 1.0,
            };
            t_s * p("eta_s")? / (p("eps_dist")? * p("eps_b")?) * p("mu_b")? * p("kappa_l")? / p("eps_lambda")? * p("k")?.powi(3)
                * p("eta_l")?.powf(2.5)
                / p("delta")?.powi(3)
        }
        CostModel::SpectralClassical => p("n")?.powi(3),
        CostModel::CnnClassical => p("h_out")? * p("w_out")? * p("d_out")? * p("kh")? * p("kw")? * p("d_in")?,
        CostModel::CnnQuantum => {
            p("sigma")? * p("h_out")? * p("w_out")? * p("d_out")? * p("m")? * p("c")?.sqrt() / (p("eps")? * p("mean_f")?.sqrt())
        }
        CostModel::OrthonnQff => 2.0 * p("n")? / p("delta")?.powi(2),
        CostModel::OrthonnCff => {
            let n = p("n")?;
            2.0 * n * (n - 1.0)
        }
        CostModel::OrthonnTrain => p("n")?.powi(2),
        CostModel::SvbTrain => p("n")?.powi(3),
    };
    Ok(CostEval { model_id: q.model_id, formula: q.model_id.formula().to_string(), value, params: q.params.clone() })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Quantum and classical spectral-clustering costs over a sweep of `N`, with
/// the worst case `μ(B) = N` and the remaining parameters fixed.
pub fn spectral_sweep(ns: &[f64], base: &BTreeMap<String, f64>) -> Result<Vec<(f64, f64, f64)>> {
    ns.iter()
        .map(|&n| {
            let mut params = base.clone();
            params.insert("mu_b".into(), n);
            params.insert("n".into(), n);
            let quantum = evaluate_cost(&CostQuery { model_id: CostModel::SpectralQuantum, params: params.clone() })?.value;
            let classical = evaluate_cost(&CostQuery { model_id: CostModel::SpectralClassical, params })?.value;
            Ok((n, quantum, classical))
        })
        .collect()
}

/// Fixed parameters of the circles experiment for [`spectral_sweep`].
pub fn spectral_defaults() -> BTreeMap<String, f64> {
    [
        ("eta_s", 1.0),
        ("eps_dist", 0.1),
        ("eps_b", 0.1),
        ("kappa_l", 1.0),
        ("eps_lambda", 0.9),
        ("k", 2.0),
        ("eta_l", 1.0),
        ("delta", 0.9),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), *v))
    .collect()
}
