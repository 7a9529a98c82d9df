//! Spectral clustering through the signed incidence matrix, classically and
//! with the noise of the quantum pipeline.
//!
//! The incidence matrix has one column per unordered pair `(p, q)`, `p < q`,
//! so it is only materialized for small graphs. Above that the normalized
//! Laplacian `Bn Bnᵀ` is assembled from a closed form for the row products.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{delta_kmeans, lloyd_kmeans, ClusterModel, Init, KMeansConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_sq_distance, IpeConfig};
use crate::sampling::{normal, sq_dist};

/// Largest node count for which the incidence matrix is built explicitly.
pub const MATERIALIZE_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DMin {
    Value(f64),
    /// Percentile (in percent) of all pairwise distances.
    Percentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    KLowest,
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub k: usize,
    pub d_min: DMin,
    pub eps_b: f64,
    pub eps_dist: f64,
    pub eps_lambda: f64,
    pub selection: Selection,
    pub delta: f64,
    pub max_iter: usize,
    pub strict: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            k: 2,
            d_min: DMin::Percentile(10.0),
            eps_b: 0.0,
            eps_dist: 0.0,
            eps_lambda: 0.0,
            selection: Selection::KLowest,
            delta: 0.0,
            max_iter: 100,
            strict: false,
        }
    }
}

impl SpectralConfig {
    /// Precision parameters of the quantum experiments on concentric circles.
    pub fn quantum(k: usize) -> Self {
        Self { k, eps_b: 0.1, eps_dist: 0.1, eps_lambda: 0.9, delta: 0.9, ..Self::default() }
    }

    pub fn is_classical(&self) -> bool {
        self.eps_b == 0.0 && self.eps_dist == 0.0 && self.eps_lambda == 0.0 && self.delta == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    pub a: DMatrix<f64>,
    pub b: Option<DMatrix<f64>>,
    pub bn: Option<DMatrix<f64>>,
    pub l: DMatrix<f64>,
}

pub fn resolve_d_min(s: &Dataset, rule: DMin) -> Result<f64> {
    match rule {
        DMin::Value(v) if v > 0.0 => Ok(v),
        DMin::Value(_) => Err(Error::invalid("d_min must be positive")),
        DMin::Percentile(q) => {
            if !(q > 0.0 && q <= 100.0) {
                return Err(Error::invalid("d_min percentile must lie in (0, 100]"));
            }
            let n = s.len();
            let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    d.push(sq_dist(s.row(i), s.row(j)).sqrt());
                }
            }
            if d.is_empty() {
                return Err(Error::invalid("percentile rule needs at least two points"));
            }
            d.sort_by(|a, b| a.total_cmp(b));
            let idx = ((q / 100.0) * (d.len() - 1) as f64).round() as usize;
            Ok(d[idx])
        }
    }
}

/// 0/1 adjacency with `a_ij = [d̄²(s_i, s_j) ≤ d_min²]`.
pub fn build_adjacency<R: Rng + ?Sized>(s: &Dataset, d_min: f64, eps_dist: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(d_min > 0.0) {
        return Err(Error::invalid("d_min must be positive"));
    }
    let n = s.len();
    let cfg = IpeConfig::gaussian(eps_dist);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d2 = if eps_dist > 0.0 && s.row_norms()[i] > 0.0 && s.row_norms()[j] > 0.0 {
                estimate_sq_distance(s.row(i), s.row(j), &cfg, rng)?
            } else {
                sq_dist(s.row(i), s.row(j))
            };
            if d2 <= d_min * d_min {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    Ok(a)
}

fn pair_columns(n: usize) -> Vec<(usize, usize)> {
    let mut cols = Vec::with_capacity(n * (n - 1) / 2);
    for p in 0..n {
        for q in p + 1..n {
            cols.push((p, q));
        }
    }
    cols
}

/// Incidence matrix `B` and its row-normalized form `Bn`.
pub fn build_incidence(a: &DMatrix<f64>, eps_b: f64, strict: bool) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if eps_b < 0.0 {
        return Err(Error::invalid("ε_B must be nonnegative"));
    }
    let cols = pair_columns(n);
    let mut b = DMatrix::from_element(n, cols.len(), eps_b);
    for (c, &(p, q)) in cols.iter().enumerate() {
        let w = a[(p, q)];
        if w != 0.0 {
            b[(p, c)] = w;
            b[(q, c)] = -w;
        }
    }
    let mut bn = b.clone();
    for i in 0..n {
        let rn = b.row(i).norm();
        if rn == 0.0 {
            if strict {
                return Err(Error::Numeric(format!("node {i} is isolated and ε_B = 0")));
            }
            continue;
        }
        bn.row_mut(i).scale_mut(1.0 / rn);
    }
    Ok((b, bn))
}

pub fn laplacian(bn: &DMatrix<f64>) -> DMatrix<f64> {
    bn * bn.transpose()
}

/// `Bn Bnᵀ` computed from the adjacency without building `B`.
pub fn laplacian_closed_form(a: &DMatrix<f64>, eps_b: f64, strict: bool) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let nf = n as f64;
    let m = nf * (nf - 1.0) / 2.0;
    let e2 = eps_b * eps_b;
    let entry = |p: usize, r: usize| -> f64 {
        if a[(p, r)] != 0.0 {
            if p < r {
                a[(p, r)]
            } else {
                -a[(p, r)]
            }
        } else {
            eps_b
        }
    };
    let mut row_sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for p in 0..n {
        for r in 0..n {
            if r != p {
                let e = entry(p, r);
                row_sum[p] += e;
                sq[p] += e * e;
            }
        }
    }
    let norms: Vec<f64> = (0..n).map(|p| (sq[p] + (m - (nf - 1.0)) * e2).sqrt()).collect();
    let mut l = DMatrix::zeros(n, n);
    for p in 0..n {
        if norms[p] == 0.0 {
            if strict {
                return Err(Error::Numeric(format!("node {p} is isolated and ε_B = 0")));
            }
            continue;
        }
        l[(p, p)] = 1.0;
        for q in p + 1..n {
            if norms[q] == 0.0 {
                continue;
            }
            let (bpq, bqp) = (entry(p, q), entry(q, p));
            let shared = bpq * bqp;
            let dot = shared + eps_b * (row_sum[p] - bpq) + eps_b * (row_sum[q] - bqp) + (m - 2.0 * nf + 3.0) * e2;
            let v = dot / (norms[p] * norms[q]);
            l[(p, q)] = v;
            l[(q, p)] = v;
        }
    }
    Ok(l)
}

pub fn build_graph<R: Rng + ?Sized>(s: &Dataset, d_min: f64, eps_dist: f64, eps_b: f64, strict: bool, rng: &mut R) -> Result<GraphBundle> {
    let a = build_adjacency(s, d_min, eps_dist, rng)?;
    if a.nrows() <= MATERIALIZE_LIMIT {
        let (b, bn) = build_incidence(&a, eps_b, strict)?;
        let l = laplacian(&bn);
        Ok(GraphBundle { a, b: Some(b), bn: Some(bn), l })
    } else {
        let l = laplacian_closed_form(&a, eps_b, strict)?;
        Ok(GraphBundle { a, b: None, bn: None, l })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `N × k'` matrix whose columns are the selected eigenvectors.
    pub embedding: DMatrix<f64>,
    /// Exact eigenvalues of the selected columns.
    pub eigenvalues: Vec<f64>,
    /// Noisy eigenvalue estimates of the selected columns.
    pub noisy_eigenvalues: Vec<f64>,
    /// `‖L̃^(k)_i‖ = √(Σ_sel u_ij² λ_j²)`.
    pub row_norms: Vec<f64>,
    pub p00: Vec<f64>,
    pub nu: f64,
}

/// Projection of the normalized Laplacian onto its lowest eigenvectors, with
/// additive Gaussian noise of scale `eps_lambda` on the singular values of
/// `Bn` before squaring.
pub fn project_laplacian<R: Rng + ?Sized>(l: &DMatrix<f64>, k: usize, eps_lambda: f64, selection: Selection, rng: &mut R) -> Result<Projection> {
    let n = l.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let eig = SymmetricEigen::new(l.clone());
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let noisy: Vec<f64> = lambda
        .iter()
        .map(|&lam| {
            let sigma = lam.sqrt();
            let s_bar = if eps_lambda > 0.0 { (sigma + eps_lambda * normal(rng)).max(0.0) } else { sigma };
            s_bar * s_bar
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| noisy[i].total_cmp(&noisy[j]).then(lambda[i].total_cmp(&lambda[j])).then(i.cmp(&j)));
    let selected: Vec<usize> = match selection {
        Selection::KLowest => order[..k].to_vec(),
        Selection::Threshold(nu) => order.iter().cloned().filter(|&j| noisy[j] <= nu).collect(),
    };
    if selected.is_empty() {
        return Err(Error::Numeric("no eigenvalue below the threshold".into()));
    }
    let embedding = DMatrix::from_fn(n, selected.len(), |i, c| eig.eigenvectors[(i, selected[c])]);
    let eigenvalues: Vec<f64> = selected.iter().map(|&j| lambda[j]).collect();
    let noisy_eigenvalues: Vec<f64> = selected.iter().map(|&j| noisy[j]).collect();
    let nu = match selection {
        Selection::Threshold(nu) => nu,
        Selection::KLowest => eigenvalues.iter().cloned().fold(0.0, f64::max),
    };
    let row_norms: Vec<f64> = (0..n)
        .map(|i| {
            (0..selected.len())
                .map(|c| (embedding[(i, c)] * eigenvalues[c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let p00 = row_norms.iter().map(|r| if nu > 0.0 { (r / nu).powi(2) } else { 0.0 }).collect();
    Ok(Projection { embedding, eigenvalues, noisy_eigenvalues, row_norms, p00, nu })
}

/// Frobenius distance between the orthogonal projectors onto the column
/// spaces of two matrices with orthonormal columns.
pub fn projector_distance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    (u * u.transpose() - v * v.transpose()).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub d_min: f64,
    pub edges: usize,
    pub eigenvalues: Vec<f64>,
    pub noisy_eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub materialized: bool,
}

/// Ng-style pipeline: graph, Laplacian, projection, then k-means on the
/// row-normalized embedding (Lloyd classically, δ-k-means otherwise).
pub fn spectral_cluster<R: Rng + ?Sized>(s: &Dataset, cfg: &SpectralConfig, rng: &mut R) -> Result<(ClusterModel, SpectralReport)> {
    if cfg.k == 0 || cfg.k > s.len() {
        return Err(Error::invalid("spectral clustering needs 1 <= k <= N"));
    }
    let d_min = resolve_d_min(s, cfg.d_min)?;
    let g = build_graph(s, d_min, cfg.eps_dist, cfg.eps_b, cfg.strict, rng)?;
    let proj = project_laplacian(&g.l, cfg.k, cfg.eps_lambda, cfg.selection, rng)?;
    let rows: Vec<Vec<f64>> = (0..s.len())
        .map(|i| {
            let r: Vec<f64> = proj.embedding.row(i).iter().cloned().collect();
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                r.iter().map(|v| v / n).collect()
            } else {
                r
            }
        })
        .collect();
    let emb = Dataset::new(rows, None)?;
    let kcfg = KMeansConfig { k: cfg.k, tau: 1e-6, max_iter: cfg.max_iter, init: Init::Kpp };
    let run = if cfg.delta > 0.0 { delta_kmeans(&emb, &kcfg, cfg.delta, rng)? } else { lloyd_kmeans(&emb, &kcfg, rng)? };
    let edges = g.a.iter().filter(|v| **v != 0.0).count() / 2;
    let report = SpectralReport {
        d_min,
        edges,
        eigenvalues: proj.eigenvalues.clone(),
        noisy_eigenvalues: proj.noisy_eigenvalues.clone(),
        iterations: run.model.iteration,
        materialized: g.b.is_some(),
    };
    Ok((run.model, report))
}
