//! Pyramidal circuits of RBS gates as orthogonal neural-network layers.
//!
//! Gates are laid out on diagonals `m = 1..n` of a triangle. Gate `p` of
//! diagonal `m` acts on wires `(n-1-m+p, n-m+p)` at timestep `m-1+p`, and
//! angles are stored diagonal by diagonal. A rectangular layer with
//! `n_out < n_in` keeps the first `n_out` gates of each diagonal and reads
//! its output from the first `n_out` wires.
//!
//! Counting gates from 1 in storage order, gate `g` has angle
//! `angles[g - 1]`, and for `n = 8` the three-path entry `W56` is
//! `matrix_of()[(2, 1)]`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_basis::{rotate_pair, RbsGate};
use crate::sampling::norm;
use crate::tomography::signed_layer_estimate;

pub fn angle_count(n_in: usize, n_out: usize) -> Result<usize> {
    if n_out == 0 || n_out > n_in {
        return Err(Error::invalid(format!("need 1 <= n_out <= n_in, got ({n_in}, {n_out})")));
    }
    Ok((2 * n_in - 1 - n_out) * n_out / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateSlot {
    /// Upper wire; the gate acts on `(wire, wire + 1)`.
    pub wire: usize,
    pub timestep: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LayerSpec", into = "LayerSpec")]
pub struct PyramidLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub angles: Vec<f64>,
    slots: Vec<GateSlot>,
    schedule: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct LayerSpec {
    n_in: usize,
    n_out: usize,
    angles: Vec<f64>,
}

impl From<LayerSpec> for PyramidLayer {
    fn from(s: LayerSpec) -> Self {
        let mut layer = PyramidLayer::zeros(s.n_in, s.n_out).expect("valid layer dims");
        layer.angles = s.angles;
        layer
    }
}

impl From<PyramidLayer> for LayerSpec {
    fn from(l: PyramidLayer) -> Self {
        LayerSpec { n_in: l.n_in, n_out: l.n_out, angles: l.angles }
    }
}

fn layout(n_in: usize, n_out: usize) -> Vec<GateSlot> {
    let n = n_in;
    let mut slots = Vec::new();
    for m in 1..n {
        for p in 0..m.min(n_out) {
            slots.push(GateSlot { wire: n - 1 - m + p, timestep: m - 1 + p });
        }
    }
    slots
}

impl PyramidLayer {
    pub fn zeros(n_in: usize, n_out: usize) -> Result<Self> {
        let count = angle_count(n_in, n_out)?;
        let slots = layout(n_in, n_out);
        debug_assert_eq!(slots.len(), count);
        let steps = slots.iter().map(|s| s.timestep + 1).max().unwrap_or(0);
        let mut schedule = vec![Vec::new(); steps];
        for (g, s) in slots.iter().enumerate() {
            schedule[s.timestep].push(g);
        }
        Ok(Self { n_in, n_out, angles: vec![0.0; count], slots, schedule })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::zeros(n, n)
    }

    pub fn with_angles(n_in: usize, n_out: usize, angles: Vec<f64>) -> Result<Self> {
        let mut layer = Self::zeros(n_in, n_out)?;
        if angles.len() != layer.angles.len() {
            return Err(Error::DimMismatch { expected: layer.angles.len(), got: angles.len() });
        }
        layer.angles = angles;
        Ok(layer)
    }

    pub fn random<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeros(n_in, n_out)?;
        for a in layer.angles.iter_mut() {
            *a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        }
        Ok(layer)
    }

    pub fn slots(&self) -> &[GateSlot] {
        &self.slots
    }

    /// Gate indices grouped by timestep.
    pub fn schedule(&self) -> &[Vec<usize>] {
        &self.schedule
    }

    pub fn timesteps(&self) -> usize {
        self.schedule.len()
    }

    pub fn gates(&self) -> Vec<RbsGate> {
        self.schedule
            .iter()
            .flatten()
            .map(|&g| RbsGate::new(self.angles[g], self.slots[g].wire, self.slots[g].wire + 1))
            .collect()
    }

    /// Index of the angle for gate `p` of diagonal `m`.
    pub fn angle_index(&self, m: usize, p: usize) -> Option<usize> {
        if m == 0 || m >= self.n_in || p >= m.min(self.n_out) {
            return None;
        }
        let before: usize = (1..m).map(|mm| mm.min(self.n_out)).sum();
        Some(before + p)
    }

    fn step(&self, t: usize, z: &mut [f64]) {
        for &g in &self.schedule[t] {
            let w = self.slots[g].wire;
            rotate_pair(z, w, w + 1, self.angles[g]);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, TimestepTrace)> {
        if x.len() != self.n_in {
            return Err(Error::DimMismatch { expected: self.n_in, got: x.len() });
        }
        let mut layers = Vec::with_capacity(self.timesteps() + 1);
        let mut z = x.to_vec();
        layers.push(z.clone());
        for t in 0..self.timesteps() {
            self.step(t, &mut z);
            layers.push(z.clone());
        }
        let y = z[..self.n_out].to_vec();
        Ok((y, TimestepTrace { layers }))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::DimMismatch { expected: self.n_in, got: x.len() });
        }
        let mut z = x.to_vec();
        for t in 0..self.timesteps() {
            self.step(t, &mut z);
        }
        z.truncate(self.n_out);
        Ok(z)
    }

    /// The `n_out × n_in` matrix realised by the layer.
    pub fn matrix_of(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n_out, self.n_in);
        let mut e = vec![0.0; self.n_in];
        for c in 0..self.n_in {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let y = self.apply(&e).expect("matching dims");
            w.column_mut(c).copy_from_slice(&y);
        }
        w
    }

    /// Angle gradients and the input error `δ^0` for an output error `delta_out`.
    pub fn backward(&self, trace: &TimestepTrace, delta_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if delta_out.len() != self.n_out {
            return Err(Error::DimMismatch { expected: self.n_out, got: delta_out.len() });
        }
        if trace.layers.len() != self.timesteps() + 1 || trace.layers.iter().any(|z| z.len() != self.n_in) {
            return Err(Error::invalid("trace does not belong to this layer"));
        }
        let mut delta = vec![0.0; self.n_in];
        delta[..self.n_out].copy_from_slice(delta_out);
        let mut grads = vec![0.0; self.angles.len()];
        for t in (0..self.timesteps()).rev() {
            let zeta = &trace.layers[t];
            for &g in &self.schedule[t] {
                let i = self.slots[g].wire;
                let (s, c) = self.angles[g].sin_cos();
                let (zi, zj) = (zeta[i], zeta[i + 1]);
                let (di, dj) = (delta[i], delta[i + 1]);
                grads[g] = di * (-s * zi + c * zj) + dj * (-c * zi - s * zj);
                delta[i] = c * di - s * dj;
                delta[i + 1] = s * di + c * dj;
            }
        }
        Ok((grads, delta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepTrace {
    pub layers: Vec<Vec<f64>>,
}

fn orthogonality_error(w: &DMatrix<f64>) -> f64 {
    let g = w.transpose() * w - DMatrix::identity(w.ncols(), w.ncols());
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Pyramid angles realising `w ∈ SO(n)`, found by Givens elimination of one
/// diagonal at a time, starting from the last.
pub fn angles_from_orthogonal(w: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = w.nrows();
    if n != w.ncols() || n == 0 {
        return Err(Error::invalid("expected a square matrix"));
    }
    if orthogonality_error(w) > 1e-8 {
        return Err(Error::invalid("matrix is not orthogonal"));
    }
    let mut rest = w.clone();
    let mut diagonals: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
    // after peeling r diagonals, rows/cols r.. hold a pyramid on n-r wires
    for r in 0..n.saturating_sub(1) {
        let size = n - r;
        let mut col: Vec<f64> = (r..n).map(|i| rest[(i, r)]).collect();
        let mut thetas = vec![0.0; size - 1];
        for k in (0..size - 1).rev() {
            let theta = (-col[k + 1]).atan2(col[k]);
            rotate_pair(&mut col, k, k + 1, -theta);
            thetas[k] = theta;
        }
        // rest <- Dᵀ rest, undoing gates (k, k+1) in reverse application order
        for k in (0..size - 1).rev() {
            let (s, c) = thetas[k].sin_cos();
            let (a, b) = (r + k, r + k + 1);
            for j in 0..n {
                let (x, y) = (rest[(a, j)], rest[(b, j)]);
                rest[(a, j)] = c * x - s * y;
                rest[(b, j)] = s * x + c * y;
            }
        }
        diagonals.push(thetas);
    }
    if rest[(n - 1, n - 1)] < 0.0 {
        return Err(Error::invalid("determinant is -1; pyramids only reach SO(n)"));
    }
    // peeled order is m = n-1, n-2, ..., 1; storage order is m ascending
    Ok(diagonals.into_iter().rev().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "cap")]
pub enum Nonlinearity {
    Sigmoid,
    CapRelu(f64),
    None,
}

impl Nonlinearity {
    fn apply(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Nonlinearity::CapRelu(c) => x.clamp(0.0, c),
            Nonlinearity::None => x,
        }
    }

    fn grad(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Nonlinearity::CapRelu(c) => {
                if (0.0..=c).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::None => 1.0,
        }
    }
}

/// Stack of pyramid layers with a softmax head on the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoNet {
    pub layers: Vec<PyramidLayer>,
    pub nonlinearity: Nonlinearity,
    pub renormalize_between_layers: bool,
    /// Multiplier applied to the last layer's outputs before the softmax.
    pub logit_scale: f64,
}

#[derive(Debug, Clone)]
struct NetTrace {
    inputs: Vec<Vec<f64>>,
    traces: Vec<TimestepTrace>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCurve {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub max_orthogonality_error: f64,
}

impl OrthoNet {
    pub fn new(dims: &[usize], nonlinearity: Nonlinearity) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("a net needs at least an input and an output size"));
        }
        let layers = dims
            .windows(2)
            .map(|w| PyramidLayer::zeros(w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, nonlinearity, renormalize_between_layers: true, logit_scale: 4.0 })
    }

    pub fn randomize<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        for l in &mut self.layers {
            for a in l.angles.iter_mut() {
                *a = rng.random_range(-scale..scale);
            }
        }
    }

    fn run(&self, x: &[f64]) -> Result<(Vec<f64>, NetTrace)> {
        let mut tr = NetTrace { inputs: vec![], traces: vec![], pre: vec![], post: vec![] };
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            tr.inputs.push(h.clone());
            let (z, trace) = layer.forward(&h)?;
            tr.traces.push(trace);
            if li == last {
                h = z.iter().map(|v| v * self.logit_scale).collect();
                tr.pre.push(z);
                tr.post.push(h.clone());
            } else {
                let a: Vec<f64> = z.iter().map(|v| self.nonlinearity.apply(*v)).collect();
                tr.pre.push(z);
                tr.post.push(a.clone());
                h = if self.renormalize_between_layers { normalized(&a) } else { a };
            }
        }
        Ok((h, tr))
    }

    /// Logits of the output layer.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(x)?.0)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Negative log-likelihood and angle gradients for one sample.
    pub fn loss_and_grad(&self, x: &[f64], label: usize) -> Result<(f64, Vec<Vec<f64>>)> {
        let (logits, tr) = self.run(x)?;
        if label >= logits.len() {
            return Err(Error::invalid("label exceeds output size"));
        }
        let p = softmax(&logits);
        let loss = -p[label].max(1e-300).ln();
        let mut upstream: Vec<f64> = p.iter().enumerate().map(|(i, pi)| pi - if i == label { 1.0 } else { 0.0 }).collect();
        let mut grads = vec![Vec::new(); self.layers.len()];
        let last = self.layers.len() - 1;
        for li in (0..self.layers.len()).rev() {
            let delta_out: Vec<f64> = if li == last {
                upstream.iter().map(|g| g * self.logit_scale).collect()
            } else {
                // through renormalization, then the nonlinearity
                let a = &tr.post[li];
                let g = if self.renormalize_between_layers {
                    let n = norm(a);
                    if n == 0.0 {
                        upstream.clone()
                    } else {
                        let ah: Vec<f64> = a.iter().map(|v| v / n).collect();
                        let proj: f64 = ah.iter().zip(&upstream).map(|(x, y)| x * y).sum();
                        upstream.iter().zip(&ah).map(|(u, h)| (u - proj * h) / n).collect()
                    }
                } else {
                    upstream.clone()
                };
                g.iter().zip(&tr.pre[li]).map(|(gi, zi)| gi * self.nonlinearity.grad(*zi)).collect()
            };
            let (ga, d0) = self.layers[li].backward(&tr.traces[li], &delta_out)?;
            grads[li] = ga;
            upstream = d0;
        }
        Ok((loss, grads))
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let mut hit = 0usize;
        for (x, &l) in xs.iter().zip(labels) {
            if self.predict(x)? == l {
                hit += 1;
            }
        }
        Ok(hit as f64 / xs.len().max(1) as f64)
    }

    pub fn max_orthogonality_error(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let w = l.matrix_of();
                let g = &w * w.transpose() - DMatrix::identity(w.nrows(), w.nrows());
                g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }

    /// Minibatch SGD on the angles.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        xs: &[Vec<f64>],
        labels: &[usize],
        epochs: usize,
        lr: f64,
        batch: usize,
        rng: &mut R,
    ) -> Result<TrainCurve> {
        if xs.len() != labels.len() {
            return Err(Error::DimMismatch { expected: xs.len(), got: labels.len() });
        }
        let batch = batch.max(1);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut curve = TrainCurve { loss: vec![], accuracy: vec![], max_orthogonality_error: 0.0 };
        for _ in 0..epochs {
            use rand::seq::SliceRandom;
            order.shuffle(rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                let mut acc: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.angles.len()]).collect();
                for &i in chunk {
                    let (loss, g) = self.loss_and_grad(&xs[i], labels[i])?;
                    total += loss;
                    for (a, gl) in acc.iter_mut().zip(&g) {
                        a.iter_mut().zip(gl).for_each(|(s, v)| *s += v);
                    }
                }
                let scale = lr / chunk.len() as f64;
                for (layer, g) in self.layers.iter_mut().zip(&acc) {
                    layer.angles.iter_mut().zip(g).for_each(|(t, v)| *t -= scale * v);
                }
            }
            curve.loss.push(total / xs.len().max(1) as f64);
            curve.accuracy.push(self.accuracy(xs, labels)?);
            curve.max_orthogonality_error = curve.max_orthogonality_error.max(self.max_orthogonality_error());
        }
        Ok(curve)
    }

    /// Layer-by-layer inference where every layer output is read out by
    /// signed shot-based tomography before the classical nonlinearity.
    pub fn quantum_forward<R: Rng + ?Sized>(&self, x: &[f64], shots: u64, rng: &mut R) -> Result<Vec<f64>> {
        let mut h = normalized(x);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let exact = layer.apply(&h)?;
            let y = signed_layer_estimate(&exact, shots, rng)?;
            if li == last {
                h = y.iter().map(|v| v * self.logit_scale).collect();
            } else {
                let a: Vec<f64> = y.iter().map(|v| self.nonlinearity.apply(*v)).collect();
                h = if self.renormalize_between_layers { normalized(&a) } else { a };
            }
        }
        Ok(h)
    }
}
