//! One runner per subcommand. Each takes a resolved config and a seed and
//! returns that seed's report entries.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qmldesk_core::clustering::{self, delta_kmeans, lloyd_kmeans, qmeans, rmsec, KMeansRun};
use qmldesk_core::costmodel::{evaluate_cost, loglog_slope, spectral_defaults, CostEval, CostModel, CostQuery};
use qmldesk_core::estimators::{default_alpha, median_copies, pe_distribution, sample_phase, sample_phase_index};
use qmldesk_core::pyramid::{argmax, Nonlinearity};
use qmldesk_core::qconv::{ConvMode, QcnnNet};
use qmldesk_core::report::SeedReport;
use qmldesk_core::rng::{stream, SimRng};
use qmldesk_core::sampling::{median, norm, normal};
use qmldesk_core::spectral::spectral_cluster;
use qmldesk_core::tomography::{tomography, ImportanceConfig, NormMode, TomographyConfig};
use qmldesk_core::{ConvLayerConfig, Dataset, KMeansConfig, OrthoNet, PhaseModel, QMeansConfig, RunReport, SpectralConfig, Tensor3};

use crate::config::{require_data, DataSource};
use crate::error::{CliError, CliResult};

fn rng_for(seed: u64, command: &str, trial: u64) -> SimRng {
    stream(seed, command, trial, "run")
}

fn labels_of(ds: &Dataset) -> CliResult<&[usize]> {
    ds.labels.as_deref().ok_or_else(|| CliError::config("this command needs labelled data"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub data: Option<DataSource>,
    pub min_norm: bool,
    pub seeds: Option<Vec<u64>>,
}

pub fn gen_data(cfg: &GenDataConfig, seed: u64) -> CliResult<Dataset> {
    require_data(&cfg.data)?.load(seed, cfg.min_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterAlgo {
    Lloyd,
    Delta,
    Qmeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub data: Option<DataSource>,
    pub min_norm: bool,
    pub kmeans: KMeansConfig,
    /// δ values for `delta-kmeans`; one report entry per seed and δ.
    pub deltas: Vec<f64>,
    pub qmeans: QMeansConfig,
    /// Also run Lloyd on the same stream and report the final RMSEC.
    pub compare_lloyd: bool,
    pub seeds: Option<Vec<u64>>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            data: None,
            min_norm: false,
            kmeans: KMeansConfig::default(),
            deltas: vec![0.5],
            qmeans: QMeansConfig::default(),
            compare_lloyd: true,
            seeds: None,
        }
    }
}

fn run_entry(run: &KMeansRun, truth: Option<&[usize]>, seed: u64) -> CliResult<SeedReport> {
    let mut r = SeedReport::new(seed);
    r.metrics.insert("rss".into(), run.history.iter().map(|h| h.rss).collect());
    r.metrics.insert("shift".into(), run.history.iter().map(|h| h.shift).collect());
    r.metrics.insert("centroid_noise".into(), run.history.iter().map(|h| h.centroid_noise).collect());
    if let Some(t) = truth {
        let acc = run.history.iter().map(|h| clustering::accuracy(&h.labels, t)).collect::<Result<Vec<_>, _>>()?;
        r.metrics.insert("accuracy".into(), acc.clone());
        r.summary.insert("accuracy".into(), clustering::accuracy(&run.model.labels, t)?);
    }
    r.summary.insert("iterations".into(), run.model.iteration as f64);
    r.summary.insert("converged".into(), if run.converged { 1.0 } else { 0.0 });
    r.summary.insert("rss".into(), run.history.last().map_or(f64::NAN, |h| h.rss));
    r.artifacts = json!({ "centroids": run.model.centroids });
    Ok(r)
}

pub fn cluster(cfg: &ClusterConfig, algo: ClusterAlgo, seed: u64) -> CliResult<Vec<SeedReport>> {
    let data = require_data(&cfg.data)?.load(seed, cfg.min_norm)?;
    let truth = data.labels.as_deref();
    let lloyd = lloyd_kmeans(&data, &cfg.kmeans, &mut rng_for(seed, "clustering", 0))?;
    let runs: Vec<(Option<f64>, KMeansRun)> = match algo {
        ClusterAlgo::Lloyd => vec![(None, lloyd.clone())],
        ClusterAlgo::Delta => {
            if cfg.deltas.is_empty() {
                return Err(CliError::config("`deltas` must not be empty"));
            }
            cfg.deltas
                .iter()
                .map(|&d| Ok((Some(d), delta_kmeans(&data, &cfg.kmeans, d, &mut rng_for(seed, "clustering", 0))?)))
                .collect::<CliResult<_>>()?
        }
        ClusterAlgo::Qmeans => vec![(Some(cfg.qmeans.delta), qmeans(&data, &cfg.kmeans, &cfg.qmeans, &mut rng_for(seed, "clustering", 0))?)],
    };
    runs.iter()
        .map(|(delta, run)| {
            let mut r = run_entry(run, truth, seed)?;
            if let Some(d) = delta {
                r.summary.insert("delta".into(), *d);
            }
            if cfg.compare_lloyd && algo != ClusterAlgo::Lloyd {
                r.summary.insert("rmsec_vs_lloyd".into(), rmsec(&run.model.centroids, &lloyd.model.centroids)?);
            }
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralRunConfig {
    pub data: Option<DataSource>,
    pub min_norm: bool,
    pub spectral: SpectralConfig,
    pub seeds: Option<Vec<u64>>,
}

impl SpectralRunConfig {
    pub fn classical() -> Self {
        Self { data: None, min_norm: false, spectral: SpectralConfig::default(), seeds: None }
    }

    pub fn quantum() -> Self {
        Self { spectral: SpectralConfig::quantum(2), ..Self::classical() }
    }
}

impl Default for SpectralRunConfig {
    fn default() -> Self {
        Self::classical()
    }
}

pub fn spectral(cfg: &SpectralRunConfig, seed: u64) -> CliResult<SeedReport> {
    let data = require_data(&cfg.data)?.load(seed, cfg.min_norm)?;
    let (model, rep) = spectral_cluster(&data, &cfg.spectral, &mut rng_for(seed, "spectral", 0))?;
    let mut r = SeedReport::new(seed);
    if let Some(t) = data.labels.as_deref() {
        r.summary.insert("accuracy".into(), clustering::accuracy(&model.labels, t)?);
    }
    r.summary.insert("d_min".into(), rep.d_min);
    r.summary.insert("edges".into(), rep.edges as f64);
    r.summary.insert("iterations".into(), rep.iterations as f64);
    r.summary.insert("materialized".into(), if rep.materialized { 1.0 } else { 0.0 });
    r.artifacts = json!({
        "eigenvalues": rep.eigenvalues,
        "noisy_eigenvalues": rep.noisy_eigenvalues,
        "labels": model.labels,
    });
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrthoTrainConfig {
    pub data: Option<DataSource>,
    /// Layer widths, input first. Defaults to `[d, classes]`.
    pub dims: Option<Vec<usize>>,
    pub nonlinearity: Nonlinearity,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub init_scale: f64,
    /// Shots per layer for a shot-based accuracy after training.
    pub shots: Option<u64>,
    pub seeds: Option<Vec<u64>>,
}

impl Default for OrthoTrainConfig {
    fn default() -> Self {
        Self {
            data: None,
            dims: None,
            nonlinearity: Nonlinearity::Sigmoid,
            epochs: 50,
            lr: 0.5,
            batch: 10,
            init_scale: 1.0,
            shots: None,
            seeds: None,
        }
    }
}

fn unit_rows(ds: &Dataset) -> CliResult<Vec<Vec<f64>>> {
    ds.rows()
        .iter()
        .map(|r| {
            let n = norm(r);
            if n == 0.0 {
                return Err(CliError::config("zero row cannot be unit-encoded"));
            }
            Ok(r.iter().map(|v| v / n).collect())
        })
        .collect()
}

fn shot_accuracy(net: &OrthoNet, xs: &[Vec<f64>], labels: &[usize], shots: u64, rng: &mut SimRng) -> CliResult<f64> {
    let mut hit = 0;
    for (x, &l) in xs.iter().zip(labels) {
        if argmax(&net.quantum_forward(x, shots, rng)?) == l {
            hit += 1;
        }
    }
    Ok(hit as f64 / xs.len() as f64)
}

pub fn orthonn_train(cfg: &OrthoTrainConfig, seed: u64) -> CliResult<SeedReport> {
    let data = require_data(&cfg.data)?.load(seed, false)?;
    let labels = labels_of(&data)?.to_vec();
    let classes = labels.iter().max().map_or(1, |m| m + 1).max(2);
    let dims = cfg.dims.clone().unwrap_or_else(|| vec![data.dim(), classes]);
    if dims.first() != Some(&data.dim()) {
        return Err(CliError::config(format!("dims[0] must equal the data dimension {}", data.dim())));
    }
    if dims.last().is_some_and(|&o| o < classes) {
        return Err(CliError::config(format!("the last layer needs at least {classes} outputs")));
    }
    let xs = unit_rows(&data)?;
    let mut net = OrthoNet::new(&dims, cfg.nonlinearity)?;
    net.randomize(cfg.init_scale, &mut stream(seed, "orthonn", 0, "init"));
    let curve = net.train(&xs, &labels, cfg.epochs, cfg.lr, cfg.batch, &mut rng_for(seed, "orthonn", 0))?;
    let mut r = SeedReport::new(seed);
    r.metrics.insert("loss".into(), curve.loss.clone());
    r.metrics.insert("accuracy".into(), curve.accuracy.clone());
    r.summary.insert("accuracy".into(), net.accuracy(&xs, &labels)?);
    r.summary.insert("max_orthogonality_error".into(), curve.max_orthogonality_error);
    if let Some(shots) = cfg.shots {
        r.summary.insert("shot_accuracy".into(), shot_accuracy(&net, &xs, &labels, shots, &mut stream(seed, "orthonn", 0, "shots"))?);
    }
    r.artifacts = json!({ "net": net });
    Ok(r)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrthoInferConfig {
    /// A net JSON file, or a report written by `orthonn-train`.
    pub model: Option<PathBuf>,
    pub data: Option<DataSource>,
    pub shots: Option<u64>,
    pub seeds: Option<Vec<u64>>,
}

pub fn load_net(path: &std::path::Path) -> CliResult<OrthoNet> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    if v.get("schema_version").is_some() {
        let report: RunReport = serde_json::from_value(v)?;
        let net = report
            .seeds
            .first()
            .and_then(|s| s.artifacts.get("net"))
            .cloned()
            .ok_or_else(|| CliError::config("report has no trained net"))?;
        return Ok(serde_json::from_value(net)?);
    }
    Ok(serde_json::from_value(v)?)
}

pub fn orthonn_infer(cfg: &OrthoInferConfig, net: &OrthoNet, seed: u64) -> CliResult<SeedReport> {
    let data = require_data(&cfg.data)?.load(seed, false)?;
    let xs = unit_rows(&data)?;
    let preds = xs.iter().map(|x| net.predict(x)).collect::<Result<Vec<_>, _>>()?;
    let mut r = SeedReport::new(seed);
    if let Some(t) = data.labels.as_deref() {
        r.summary.insert("accuracy".into(), preds.iter().zip(t).filter(|(p, l)| p == l).count() as f64 / t.len() as f64);
    }
    let mut artifacts = json!({ "predictions": preds });
    if let Some(shots) = cfg.shots {
        let mut rng = rng_for(seed, "orthonn", 0);
        let shot_preds =
            xs.iter().map(|x| net.quantum_forward(x, shots, &mut rng).map(|y| argmax(&y))).collect::<Result<Vec<_>, _>>()?;
        let agree = shot_preds.iter().zip(&preds).filter(|(a, b)| a == b).count();
        r.summary.insert("shot_agreement".into(), agree as f64 / preds.len() as f64);
        if let Some(t) = data.labels.as_deref() {
            r.summary.insert("shot_accuracy".into(), shot_preds.iter().zip(t).filter(|(p, l)| p == l).count() as f64 / t.len() as f64);
        }
        artifacts["shot_predictions"] = json!(shot_preds);
    }
    r.artifacts = artifacts;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QconvTrainConfig {
    pub data: Option<DataSource>,
    pub c1: usize,
    pub c2: usize,
    pub layer: ConvLayerConfig,
    pub epochs: usize,
    pub lr: f64,
    pub seeds: Option<Vec<u64>>,
}

impl Default for QconvTrainConfig {
    fn default() -> Self {
        Self {
            data: None,
            c1: 4,
            c2: 4,
            layer: ConvLayerConfig {
                eps: 0.01,
                sampling: Some(ImportanceConfig::SigmaRatio(0.3)),
                backprop_delta: 0.01,
                mode: ConvMode::Noisy,
                ..ConvLayerConfig::default()
            },
            epochs: 4,
            lr: 0.05,
            seeds: None,
        }
    }
}

pub fn qconv_train(cfg: &QconvTrainConfig, seed: u64) -> CliResult<SeedReport> {
    cfg.layer.validate()?;
    let data = require_data(&cfg.data)?.load(seed, false)?;
    let labels = labels_of(&data)?.to_vec();
    let side = (data.dim() as f64).sqrt().round() as usize;
    if side * side != data.dim() {
        return Err(CliError::config("rows must be square single-channel images"));
    }
    let classes = labels.iter().max().map_or(1, |m| m + 1).max(2);
    let xs = data.rows().iter().map(|r| Tensor3::from_vec(side, side, 1, r.clone())).collect::<Result<Vec<_>, _>>()?;
    let mut net = QcnnNet::toy(side, cfg.c1, cfg.c2, classes, cfg.layer, &mut stream(seed, "qconv", 0, "init"))?;
    let curve = net.train(&xs, &labels, cfg.epochs, cfg.lr, &mut rng_for(seed, "qconv", 0))?;
    let mut r = SeedReport::new(seed);
    r.summary.insert("accuracy".into(), curve.accuracy.last().copied().unwrap_or(f64::NAN));
    r.metrics.insert("loss".into(), curve.loss);
    r.metrics.insert("accuracy".into(), curve.accuracy);
    r.artifacts = json!({ "net": net });
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyBenchConfig {
    pub d: usize,
    pub trials: usize,
    pub tomography: TomographyConfig,
    pub seeds: Option<Vec<u64>>,
}

impl Default for TomographyBenchConfig {
    fn default() -> Self {
        Self { d: 256, trials: 1000, tomography: TomographyConfig::linf(0.1), seeds: None }
    }
}

pub fn tomography_bench(cfg: &TomographyBenchConfig, seed: u64) -> CliResult<SeedReport> {
    if cfg.d == 0 || cfg.trials == 0 {
        return Err(CliError::config("`d` and `trials` must be positive"));
    }
    let t = &cfg.tomography;
    let bound = match t.norm_mode {
        NormMode::Linf => (1.0 + 2f64.sqrt()) * t.delta,
        NormMode::L2 => t.delta,
    };
    let mut errors = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials as u64 {
        let mut rng = rng_for(seed, "tomography", trial);
        let v: Vec<f64> = (0..cfg.d).map(|_| normal(&mut rng)).collect();
        let n = norm(&v);
        let x: Vec<f64> = v.iter().map(|a| a / n).collect();
        let est = tomography(&x, t, &mut rng)?;
        let diff = x.iter().zip(&est).map(|(a, b)| a - b);
        errors.push(match t.norm_mode {
            NormMode::Linf => diff.fold(0.0f64, |m, e| m.max(e.abs())),
            NormMode::L2 => diff.map(|e| e * e).sum::<f64>().sqrt(),
        });
    }
    let mut r = SeedReport::new(seed);
    r.summary.insert("shots".into(), t.shots(cfg.d) as f64);
    r.summary.insert("bound".into(), bound);
    r.summary.insert("within_bound".into(), errors.iter().filter(|e| **e <= bound).count() as f64 / errors.len() as f64);
    r.summary.insert("max_error".into(), errors.iter().cloned().fold(0.0, f64::max));
    r.summary.insert("mean_error".into(), errors.iter().sum::<f64>() / errors.len() as f64);
    r.metrics.insert("error".into(), errors);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpeBenchConfig {
    pub n_qubits: Vec<u32>,
    /// Random phases per register size.
    pub phases: usize,
    pub samples: usize,
    /// Failure probability Δ for the median copy count.
    pub delta_prob: f64,
    pub median_trials: usize,
    pub seeds: Option<Vec<u64>>,
}

impl Default for IpeBenchConfig {
    fn default() -> Self {
        Self { n_qubits: vec![3, 6, 8], phases: 20, samples: 100_000, delta_prob: 0.01, median_trials: 10_000, seeds: None }
    }
}

pub fn ipe_bench(cfg: &IpeBenchConfig, seed: u64) -> CliResult<SeedReport> {
    if cfg.n_qubits.is_empty() || cfg.phases == 0 || cfg.samples == 0 {
        return Err(CliError::config("`n_qubits`, `phases` and `samples` must be non-empty"));
    }
    let mut tv = Vec::new();
    let mut qubits = Vec::new();
    for &n in &cfg.n_qubits {
        let model = PhaseModel::new(n)?;
        for trial in 0..cfg.phases as u64 {
            let mut rng = stream(seed, "estimators", trial + 1000 * n as u64, "phase");
            let omega: f64 = rand::Rng::random(&mut rng);
            let p = pe_distribution(omega, model);
            let mut counts = vec![0u64; p.len()];
            for _ in 0..cfg.samples {
                counts[sample_phase_index(omega, model, &mut rng) as usize] += 1;
            }
            tv.push(0.5 * counts.iter().zip(&p).map(|(c, q)| (*c as f64 / cfg.samples as f64 - q).abs()).sum::<f64>());
            qubits.push(n as f64);
        }
    }
    let copies = median_copies(cfg.delta_prob, default_alpha())?;
    let model = PhaseModel::new(*cfg.n_qubits.iter().max().expect("non-empty"))?;
    let tol = 1.0 / model.grid() as f64;
    let (mut failures, mut hits) = (0usize, 0usize);
    for trial in 0..cfg.median_trials as u64 {
        let mut rng = stream(seed, "estimators", trial, "median");
        let omega = rand::Rng::random_range(&mut rng, 0.25..0.75);
        let mut draws: Vec<f64> = (0..copies).map(|_| sample_phase(omega, model, &mut rng)).collect();
        hits += draws.iter().filter(|w| (*w - omega).abs() <= tol).count();
        if (median(&mut draws) - omega).abs() > tol {
            failures += 1;
        }
    }
    let mut r = SeedReport::new(seed);
    r.summary.insert("max_total_variation".into(), tv.iter().cloned().fold(0.0, f64::max));
    r.summary.insert("median_copies".into(), copies as f64);
    r.summary.insert("per_copy_success".into(), hits as f64 / (copies * cfg.median_trials.max(1)) as f64);
    r.summary.insert("per_copy_success_floor".into(), 8.0 / (PI * PI));
    r.summary.insert("median_failure_rate".into(), failures as f64 / cfg.median_trials.max(1) as f64);
    r.metrics.insert("total_variation".into(), tv);
    r.metrics.insert("n_qubits".into(), qubits);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ns: Vec<f64>,
    pub params: BTreeMap<String, f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { ns: (3..=10).map(|i| 100.0 * i as f64).collect(), params: spectral_defaults() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub queries: Vec<CostQuery>,
    /// Spectral quantum against classical cost over `N`, with `μ(B) = N`.
    pub spectral_sweep: Option<SweepConfig>,
    pub seeds: Option<Vec<u64>>,
}

pub fn cost(cfg: &CostConfig, seed: u64) -> CliResult<(Vec<CostEval>, Option<SeedReport>)> {
    if cfg.queries.is_empty() && cfg.spectral_sweep.is_none() {
        return Err(CliError::config("give `queries`, `spectral_sweep`, or both"));
    }
    let mut evals = cfg.queries.iter().map(evaluate_cost).collect::<Result<Vec<_>, _>>()?;
    let Some(sw) = &cfg.spectral_sweep else {
        return Ok((evals, None));
    };
    if sw.ns.len() < 2 {
        return Err(CliError::config("`spectral_sweep.ns` needs at least two sizes"));
    }
    let (mut q, mut c) = (Vec::new(), Vec::new());
    for &n in &sw.ns {
        let mut params = sw.params.clone();
        params.insert("mu_b".into(), n);
        params.insert("n".into(), n);
        let quantum = evaluate_cost(&CostQuery { model_id: CostModel::SpectralQuantum, params: params.clone() })?;
        let classical = evaluate_cost(&CostQuery { model_id: CostModel::SpectralClassical, params })?;
        q.push(quantum.value);
        c.push(classical.value);
        evals.extend([quantum, classical]);
    }
    let mut r = SeedReport::new(seed);
    r.summary.insert("quantum_slope".into(), loglog_slope(&sw.ns, &q));
    r.summary.insert("classical_slope".into(), loglog_slope(&sw.ns, &c));
    r.metrics.insert("n".into(), sw.ns.clone());
    r.metrics.insert("quantum".into(), q);
    r.metrics.insert("classical".into(), c);
    Ok((evals, Some(r)))
}
