//! Datasets, synthetic generators and CSV I/O.
//!
//! CSV layout: one row per sample, numeric feature columns, and an optional
//! final integer label column. No header.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{norm, normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<Vec<f64>>,
    row_norms: Vec<f64>,
    pub labels: Option<Vec<usize>>,
    pub normalized_min_norm: bool,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("dataset has no rows"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::invalid("dataset has no columns"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimMismatch { expected: d, got: r.len() });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::DimMismatch { expected: rows.len(), got: l.len() });
            }
        }
        let row_norms = rows.iter().map(|r| norm(r)).collect();
        Ok(Self { rows, row_norms, labels, normalized_min_norm: false })
    }

    pub fn from_matrix(v: &DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let rows = (0..v.nrows()).map(|i| v.row(i).iter().cloned().collect()).collect();
        Self::new(rows, labels)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim(), |i, j| self.rows[i][j])
    }

    /// `max ‖v‖² / min ‖v‖²`.
    pub fn eta(&self) -> f64 {
        let (lo, hi) = self
            .row_norms
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &n| (lo.min(n), hi.max(n)));
        (hi * hi) / (lo * lo)
    }

    /// Scales every row so the smallest norm is 1.
    pub fn min_norm_normalized(&self) -> Result<Self> {
        let lo = self.row_norms.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let rows = self.rows.iter().map(|r| r.iter().map(|v| v / lo).collect()).collect();
        let mut out = Self::new(rows, self.labels.clone())?;
        out.normalized_min_norm = true;
        Ok(out)
    }

    /// Remaps every row norm affinely onto `[1, √eta]`, keeping directions.
    pub fn radial_normalized(&self, eta: f64) -> Result<Self> {
        if eta < 1.0 {
            return Err(Error::invalid("target η must be at least 1"));
        }
        let lo = self.row_norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.row_norms.iter().cloned().fold(0.0, f64::max);
        if lo <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let top = eta.sqrt();
        let rows = self
            .rows
            .iter()
            .zip(&self.row_norms)
            .map(|(r, &n)| {
                let target = if hi > lo { 1.0 + (n - lo) / (hi - lo) * (top - 1.0) } else { 1.0 };
                r.iter().map(|v| v / n * target).collect()
            })
            .collect();
        let mut out = Self::new(rows, self.labels.clone())?;
        out.normalized_min_norm = true;
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV; when `labelled` the final column is parsed as labels.
    pub fn read_csv<R: Read>(reader: R, labelled: bool) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut vals: Vec<&str> = rec.iter().collect();
            if labelled {
                let l = vals.pop().ok_or_else(|| Error::invalid("empty CSV row"))?;
                labels.push(l.trim().parse::<usize>().map_err(|e| Error::invalid(format!("bad label `{l}`: {e}")))?);
            }
            let row = vals
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad value `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(rows, labelled.then_some(labels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    GaussianBlobs {
        n: usize,
        k: usize,
        d: usize,
        std: f64,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        eta: Option<f64>,
    },
    ConcentricCircles {
        n: usize,
        #[serde(default = "default_circle_noise")]
        noise: f64,
        #[serde(default = "default_factor")]
        factor: f64,
    },
    HalfMoons {
        n: usize,
        #[serde(default = "default_moon_noise")]
        noise: f64,
    },
    ToyShapes {
        n: usize,
        #[serde(default = "default_side")]
        side: usize,
        #[serde(default = "default_pixel_noise")]
        noise: f64,
    },
}

fn default_radius() -> f64 {
    40.0
}
fn default_circle_noise() -> f64 {
    0.05
}
fn default_factor() -> f64 {
    0.4
}
fn default_moon_noise() -> f64 {
    0.05
}
fn default_side() -> usize {
    8
}
fn default_pixel_noise() -> f64 {
    0.1
}

pub fn generate<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Result<Dataset> {
    match *spec {
        DatasetSpec::GaussianBlobs { n, k, d, std, radius, eta } => {
            let ds = gaussian_blobs(n, k, d, std, radius, rng)?;
            match eta {
                Some(e) => ds.radial_normalized(e),
                None => Ok(ds),
            }
        }
        DatasetSpec::ConcentricCircles { n, noise, factor } => concentric_circles(n, noise, factor, rng),
        DatasetSpec::HalfMoons { n, noise } => half_moons(n, noise, rng),
        DatasetSpec::ToyShapes { n, side, noise } => toy_shapes(n, side, noise, rng),
    }
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Isotropic clusters around `k` centres at distance `radius` from the
/// origin; centres are mutually orthogonal when `k <= d`.
pub fn gaussian_blobs<R: Rng + ?Sized>(n: usize, k: usize, d: usize, std: f64, radius: f64, rng: &mut R) -> Result<Dataset> {
    if n == 0 || k == 0 || d == 0 || k > n || std < 0.0 {
        return Err(Error::invalid("gaussian_blobs needs n >= k >= 1, d >= 1 and std >= 0"));
    }
    let centers: Vec<Vec<f64>> = if k <= d {
        let g = DMatrix::from_fn(d, k, |_, _| normal(rng));
        let q = g.qr().q();
        (0..k).map(|j| q.column(j).iter().map(|v| v * radius).collect()).collect()
    } else {
        (0..k).map(|_| random_unit(d, rng).into_iter().map(|v| v * radius).collect()).collect()
    };
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        rows.push(centers[c].iter().map(|m| m + std * normal(rng)).collect());
        labels.push(c);
    }
    Dataset::new(rows, Some(labels))
}

/// Two noisy concentric circles of radii 1 and `factor`, `n/2` points each.
pub fn concentric_circles<R: Rng + ?Sized>(n: usize, noise: f64, factor: f64, rng: &mut R) -> Result<Dataset> {
    if n < 2 || !(factor > 0.0 && factor < 1.0) {
        return Err(Error::invalid("concentric_circles needs n >= 2 and factor in (0, 1)"));
    }
    let outer = n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (cls, idx, count, r) = if i < outer { (0, i, outer, 1.0) } else { (1, i - outer, n - outer, factor) };
        let t = 2.0 * PI * idx as f64 / count as f64;
        rows.push(vec![r * t.cos() + noise * normal(rng), r * t.sin() + noise * normal(rng)]);
        labels.push(cls);
    }
    Dataset::new(rows, Some(labels))
}

/// Two interleaved half circles.
pub fn half_moons<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid("half_moons needs n >= 2"));
    }
    let first = n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (cls, idx, count) = if i < first { (0, i, first) } else { (1, i - first, n - first) };
        let t = PI * idx as f64 / (count.max(2) - 1) as f64;
        let (x, y) = if cls == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        rows.push(vec![x + noise * normal(rng), y + noise * normal(rng)]);
        labels.push(cls);
    }
    Dataset::new(rows, Some(labels))
}

/// `side × side` grey images flattened row-major: class 0 draws a
/// horizontal bar, class 1 a vertical bar, at random offsets.
pub fn toy_shapes<R: Rng + ?Sized>(n: usize, side: usize, noise: f64, rng: &mut R) -> Result<Dataset> {
    if n == 0 || side < 4 {
        return Err(Error::invalid("toy_shapes needs n >= 1 and side >= 4"));
    }
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let cls = i % 2;
        let mut img = vec![0.0; side * side];
        let line = rng.random_range(1..side - 1);
        let start = rng.random_range(0..side / 4 + 1);
        let len = side - side / 4;
        for t in start..(start + len).min(side) {
            let (r, c) = if cls == 0 { (line, t) } else { (t, line) };
            img[r * side + c] = 1.0;
        }
        for v in img.iter_mut() {
            *v = (*v + noise * normal(rng)).max(0.0);
        }
        rows.push(img);
        labels.push(cls);
    }
    Dataset::new(rows, Some(labels))
}
