//! Lloyd's k-means, δ-k-means and simulated q-means, plus the data
//! parameters and metrics used to study them.
//!
//! All three algorithms share one loop so that with zero noise they follow
//! bit-identical trajectories. Ties always resolve to the lowest index.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_sq_distance, IpeConfig, IpeMode, MAX_PHASE_QUBITS};
use crate::sampling::{categorical, norm, normal, sq_dist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Random,
    Kpp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub tau: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 2, tau: 1e-4, max_iter: 100, init: Init::Random }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QMeansConfig {
    pub delta: f64,
    pub eps1: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub eta_override: Option<f64>,
    pub noise_mode: IpeMode,
    /// Reject datasets whose minimum row norm is not 1.
    pub strict: bool,
}

impl Default for QMeansConfig {
    fn default() -> Self {
        Self {
            delta: 0.5,
            eps1: 0.0,
            eps3: 0.0,
            eps4: 0.0,
            eta_override: None,
            noise_mode: IpeMode::Gaussian,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub rss: f64,
    /// Mean centroid displacement against the previous iteration.
    pub shift: f64,
    /// Largest distance between a perturbed centroid and its exact mean.
    pub centroid_noise: f64,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansRun {
    pub model: ClusterModel,
    pub history: Vec<IterRecord>,
    pub converged: bool,
}

impl KMeansRun {
    pub fn rss_curve(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.rss).collect()
    }
}

enum Variant<'a> {
    Lloyd,
    Delta(f64),
    QMeans(&'a QMeansConfig),
}

fn check_k(data: &Dataset, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > data.len() {
        return Err(Error::invalid(format!("k = {k} exceeds N = {}", data.len())));
    }
    Ok(())
}

fn argmin(d: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..d.len() {
        if d[j] < d[best] {
            best = j;
        }
    }
    best
}

/// Noisy squared distance with absolute standard deviation `eps1`.
fn q_distance<R: Rng + ?Sized>(v: &[f64], c: &[f64], eps1: f64, mode: IpeMode, rng: &mut R) -> Result<f64> {
    let scale = norm(v) * norm(c);
    if eps1 == 0.0 || scale == 0.0 {
        return Ok(sq_dist(v, c));
    }
    let cfg = match mode {
        IpeMode::Gaussian => IpeConfig::gaussian(eps1 / scale),
        IpeMode::Distribution => {
            let bits = (4.0 * std::f64::consts::PI * scale / eps1).log2().ceil();
            IpeConfig::distribution(bits.clamp(1.0, MAX_PHASE_QUBITS as f64) as u32)
        }
    };
    estimate_sq_distance(v, c, &cfg, rng)
}

fn rss_of(data: &Dataset, labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    data.rows()
        .iter()
        .zip(labels)
        .map(|(v, &l)| sq_dist(v, &centroids[l]))
        .sum()
}

/// Rotates the unit vector `u` toward a random orthogonal direction so that
/// the chord between old and new direction is exactly `chord`.
fn rotate_by_chord<R: Rng + ?Sized>(u: &[f64], chord: f64, rng: &mut R) -> Vec<f64> {
    if u.len() < 2 || chord == 0.0 {
        return u.to_vec();
    }
    let perp = loop {
        let g: Vec<f64> = (0..u.len()).map(|_| normal(rng)).collect();
        let proj: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
        let p: Vec<f64> = g.iter().zip(u).map(|(a, b)| a - proj * b).collect();
        let n = norm(&p);
        if n > 1e-12 {
            break p.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    let phi = 2.0 * (chord.min(2.0) / 2.0).asin();
    let (s, c) = phi.sin_cos();
    u.iter().zip(&perp).map(|(a, b)| c * a + s * b).collect()
}

fn run<R: Rng + ?Sized>(data: &Dataset, cfg: &KMeansConfig, variant: Variant, rng: &mut R) -> Result<KMeansRun> {
    check_k(data, cfg.k)?;
    let (n, d, k) = (data.len(), data.dim(), cfg.k);
    let quantum_init = match variant {
        Variant::QMeans(q) if q.eps1 > 0.0 => Some(q.eps1),
        _ => None,
    };
    let seeds = match cfg.init {
        Init::Random => index::sample(rng, n, k).into_vec(),
        Init::Kpp => kmeanspp_init(data, k, quantum_init, rng)?,
    };
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| data.row(i).to_vec()).collect();
    let threshold = cfg.tau
        + match variant {
            Variant::Lloyd => 0.0,
            Variant::Delta(delta) => delta / 2.0,
            Variant::QMeans(q) => q.delta / 2.0,
        };
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut dist = vec![0.0; k];

    for _ in 0..cfg.max_iter {
        for (i, v) in data.rows().iter().enumerate() {
            match variant {
                Variant::QMeans(q) => {
                    for (j, c) in centroids.iter().enumerate() {
                        dist[j] = q_distance(v, c, q.eps1, q.noise_mode, rng)?;
                    }
                    labels[i] = argmin(&dist);
                }
                _ => {
                    for (j, c) in centroids.iter().enumerate() {
                        dist[j] = sq_dist(v, c);
                    }
                    let best = argmin(&dist);
                    labels[i] = match variant {
                        Variant::Delta(delta) if delta > 0.0 => {
                            let window: Vec<usize> = (0..k).filter(|&j| (dist[j] - dist[best]).abs() <= delta).collect();
                            window[rng.random_range(0..window.len())]
                        }
                        _ => best,
                    };
                }
            }
        }

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in data.rows().iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            if counts[j] == 0 {
                next.push(data.row(rng.random_range(0..n)).to_vec());
            } else {
                let inv = counts[j] as f64;
                next.push(sums[j].iter().map(|s| s / inv).collect::<Vec<f64>>());
            }
        }

        let mut noise = 0.0f64;
        match variant {
            Variant::Delta(delta) if delta > 0.0 => {
                let sd = delta / (4.0 * (d as f64).sqrt());
                for c in next.iter_mut() {
                    let g = loop {
                        let g: Vec<f64> = (0..d).map(|_| sd * normal(rng)).collect();
                        if norm(&g) < delta / 2.0 {
                            break g;
                        }
                    };
                    noise = noise.max(norm(&g));
                    c.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
            }
            Variant::QMeans(q) if q.eps3 > 0.0 || q.eps4 > 0.0 => {
                for c in next.iter_mut() {
                    let r = norm(c);
                    if r == 0.0 {
                        continue;
                    }
                    let u: Vec<f64> = c.iter().map(|x| x / r).collect();
                    let r_bar = r * (1.0 + q.eps3 * rng.random_range(-1.0..=1.0));
                    let u_bar = rotate_by_chord(&u, q.eps4 * rng.random::<f64>(), rng);
                    let c_bar: Vec<f64> = u_bar.iter().map(|x| x * r_bar).collect();
                    noise = noise.max(sq_dist(&c_bar, c).sqrt());
                    *c = c_bar;
                }
            }
            _ => {}
        }

        let shift = centroids.iter().zip(&next).map(|(a, b)| sq_dist(a, b).sqrt()).sum::<f64>() / k as f64;
        centroids = next;
        history.push(IterRecord {
            rss: rss_of(data, &labels, &centroids),
            shift,
            centroid_noise: noise,
            centroids: centroids.clone(),
            labels: labels.clone(),
        });
        if shift <= threshold {
            converged = true;
            break;
        }
    }
    let iteration = history.len();
    Ok(KMeansRun {
        model: ClusterModel { centroids, labels, iteration },
        history,
        converged,
    })
}

pub fn lloyd_kmeans<R: Rng + ?Sized>(data: &Dataset, cfg: &KMeansConfig, rng: &mut R) -> Result<KMeansRun> {
    run(data, cfg, Variant::Lloyd, rng)
}

pub fn delta_kmeans<R: Rng + ?Sized>(data: &Dataset, cfg: &KMeansConfig, delta: f64, rng: &mut R) -> Result<KMeansRun> {
    if !(delta >= 0.0) {
        return Err(Error::invalid("δ must be nonnegative"));
    }
    run(data, cfg, Variant::Delta(delta), rng)
}

pub fn qmeans<R: Rng + ?Sized>(data: &Dataset, cfg: &KMeansConfig, qcfg: &QMeansConfig, rng: &mut R) -> Result<KMeansRun> {
    if [qcfg.delta, qcfg.eps1, qcfg.eps3, qcfg.eps4].iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("q-means precision parameters must be nonnegative"));
    }
    if qcfg.strict {
        let lo = data.row_norms().iter().cloned().fold(f64::INFINITY, f64::min);
        if (lo - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("q-means expects data normalized to minimum norm 1"));
        }
    }
    run(data, cfg, Variant::QMeans(qcfg), rng)
}

/// Bound `√η(ε3 + ε4)` on the per-iteration centroid perturbation of q-means.
pub fn qmeans_centroid_bound(data: &Dataset, qcfg: &QMeansConfig) -> f64 {
    qcfg.eta_override.unwrap_or_else(|| data.eta()).sqrt() * (qcfg.eps3 + qcfg.eps4)
}

/// k-means++ seeding; with `quantum_eps1` every squared distance carries
/// additive Gaussian noise of that standard deviation before sampling.
pub fn kmeanspp_init<R: Rng + ?Sized>(data: &Dataset, k: usize, quantum_eps1: Option<f64>, rng: &mut R) -> Result<Vec<usize>> {
    check_k(data, k)?;
    let n = data.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = data.row(*chosen.last().expect("non-empty"));
        for (i, v) in data.rows().iter().enumerate() {
            let mut d2 = sq_dist(v, last);
            if let Some(eps) = quantum_eps1 {
                d2 = (d2 + eps * normal(rng)).max(0.0);
            }
            best[i] = best[i].min(d2);
        }
        let mut w = best.clone();
        for &c in &chosen {
            w[c] = 0.0;
        }
        let next = if w.iter().sum::<f64>() > 0.0 {
            categorical(rng, &w)
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
    }
    Ok(chosen)
}

pub fn rss(data: &Dataset, model: &ClusterModel) -> Result<f64> {
    if model.labels.len() != data.len() {
        return Err(Error::DimMismatch { expected: data.len(), got: model.labels.len() });
    }
    if model.labels.iter().any(|&l| l >= model.centroids.len()) {
        return Err(Error::invalid("label exceeds centroid count"));
    }
    Ok(rss_of(data, &model.labels, &model.centroids))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataParams {
    pub eta: f64,
    pub mu: f64,
    pub frobenius: f64,
    pub spectral_norm: f64,
    pub kappa: f64,
    pub kappa_tau: Option<f64>,
    /// `‖V − V_{≥τ}‖_F` for the thresholded reconstruction.
    pub tau_residual: Option<f64>,
    pub tau: Option<f64>,
}

/// `s_p(A) = max_i ‖A_i‖_p^p` over rows, with `0^0 = 0`.
fn s_p(rows: &[Vec<f64>], p: f64) -> f64 {
    rows.iter()
        .map(|r| {
            r.iter()
                .filter(|v| **v != 0.0)
                .map(|v| if p == 0.0 { 1.0 } else { v.abs().powf(p) })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `μ(A) = min_p min(‖A‖_F, √(s_{2p}(A) s_{2(1-p)}(Aᵀ)))` over `p ∈ {0, 0.01, …, 1}`.
pub fn mu(a: &DMatrix<f64>) -> f64 {
    let rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| a.row(i).iter().cloned().collect()).collect();
    let cols: Vec<Vec<f64>> = (0..a.ncols()).map(|j| a.column(j).iter().cloned().collect()).collect();
    let fro = a.norm();
    (0..=100)
        .map(|i| {
            let p = i as f64 / 100.0;
            (s_p(&rows, 2.0 * p) * s_p(&cols, 2.0 * (1.0 - p))).sqrt()
        })
        .fold(fro, f64::min)
}

/// Data parameters of `v`; `tau` is `(ε_τ, k)` for the thresholded
/// condition number with `τ = ε_τ ‖V‖_F / √k`.
pub fn data_params(v: &DMatrix<f64>, tau: Option<(f64, usize)>) -> Result<DataParams> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite values"));
    }
    let sv = v.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(Error::invalid("zero matrix has no condition number"));
    }
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let norms: Vec<f64> = (0..v.nrows()).map(|i| v.row(i).norm()).collect();
    let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().cloned().fold(0.0, f64::max);
    let fro = v.norm();
    let (kappa_tau, tau_residual, tau_value) = match tau {
        Some((eps_tau, k)) => {
            let t = eps_tau * fro / (k.max(1) as f64).sqrt();
            let kept_min = sv.iter().cloned().filter(|s| *s >= t).fold(f64::INFINITY, f64::min);
            let resid = sv.iter().filter(|s| **s < t).map(|s| s * s).sum::<f64>().sqrt();
            (Some(smax / kept_min.max(t)), Some(resid), Some(t))
        }
        None => (None, None, None),
    };
    Ok(DataParams {
        eta: if lo > 0.0 { (hi * hi) / (lo * lo) } else { f64::INFINITY },
        mu: mu(v),
        frobenius: fro,
        spectral_norm: smax,
        kappa: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        kappa_tau,
        tau_residual,
        tau: tau_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellClusterableReport {
    pub holds: bool,
    /// `min pairwise centroid distance − ξ`.
    pub separation_margin: f64,
    /// Fraction of points within β of their nearest centroid, minus λ.
    pub proximity_margin: f64,
    /// `(ξ² − 2√η β) − 4√η √(λβ² + (1−λ)4η)`.
    pub inequality_margin: f64,
    /// Admissible δ interval; empty when `lo > hi`.
    pub delta_window: (f64, f64),
}

pub fn well_clusterable_check(v: &Dataset, centroids: &[Vec<f64>], xi: f64, beta: f64, lambda: f64) -> Result<WellClusterableReport> {
    if centroids.is_empty() || xi <= 0.0 || beta <= 0.0 || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("well-clusterable check needs centroids and positive ξ, β, λ ∈ [0,1]"));
    }
    let mut min_sep = f64::INFINITY;
    for (a, b) in centroids.iter().tuple_combinations() {
        min_sep = min_sep.min(sq_dist(a, b).sqrt());
    }
    let close = v
        .rows()
        .iter()
        .filter(|r| centroids.iter().map(|c| sq_dist(r, c).sqrt()).fold(f64::INFINITY, f64::min) <= beta)
        .count();
    let frac = close as f64 / v.len() as f64;
    let se = v.eta().sqrt();
    let lo = 4.0 * se * (lambda * beta * beta + (1.0 - lambda) * 4.0 * se * se).sqrt();
    let hi = xi * xi - 2.0 * se * beta;
    let separation_margin = min_sep - xi;
    let proximity_margin = frac - lambda;
    let inequality_margin = hi - lo;
    Ok(WellClusterableReport {
        holds: separation_margin >= 0.0 && proximity_margin >= 0.0 && inequality_margin >= 0.0,
        separation_margin,
        proximity_margin,
        inequality_margin,
        delta_window: (lo, hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub rss: f64,
    pub rmsec: Option<f64>,
}

/// Best assignment of `k` rows to `k` columns maximizing `score`:
/// exhaustive for `k <= 8`, greedy otherwise.
fn best_matching(k: usize, score: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    if k <= 8 {
        let mut best = (f64::NEG_INFINITY, (0..k).collect::<Vec<_>>());
        for perm in (0..k).permutations(k) {
            let s: f64 = perm.iter().enumerate().map(|(i, &j)| score(i, j)).sum();
            if s > best.0 {
                best = (s, perm);
            }
        }
        best.1
    } else {
        let mut pairs: Vec<(usize, usize)> = (0..k).cartesian_product(0..k).collect();
        pairs.sort_by(|a, b| score(b.0, b.1).total_cmp(&score(a.0, a.1)));
        let mut out = vec![usize::MAX; k];
        let mut used = vec![false; k];
        for (i, j) in pairs {
            if out[i] == usize::MAX && !used[j] {
                out[i] = j;
                used[j] = true;
            }
        }
        out
    }
}

/// Fraction of labels matching the truth under the best relabelling.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimMismatch { expected: truth.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Ok(1.0);
    }
    let k = pred.iter().chain(truth).max().map_or(1, |m| m + 1);
    let mut conf = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        conf[p][t] += 1;
    }
    let perm = best_matching(k, |i, j| conf[i][j] as f64);
    let hits: usize = perm.iter().enumerate().map(|(i, &j)| conf[i][j]).sum();
    Ok(hits as f64 / pred.len() as f64)
}

/// Root-mean-square distance between optimally matched centroid sets.
pub fn rmsec(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimMismatch { expected: b.len(), got: a.len() });
    }
    let perm = best_matching(a.len(), |i, j| -sq_dist(&a[i], &b[j]));
    let ms: f64 = perm.iter().enumerate().map(|(i, &j)| sq_dist(&a[i], &b[j])).sum::<f64>() / a.len() as f64;
    Ok(ms.sqrt())
}

pub fn evaluate(data: &Dataset, model: &ClusterModel, truth: &[usize], reference: Option<&[Vec<f64>]>) -> Result<Evaluation> {
    Ok(Evaluation {
        accuracy: accuracy(&model.labels, truth)?,
        rss: rss(data, model)?,
        rmsec: reference.map(|r| rmsec(&model.centroids, r)).transpose()?,
    })
}
