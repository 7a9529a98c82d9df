//! Quantum convolution layer simulated through its matrix formulation.
//!
//! A layer input `X` (H×W×D) is expanded into `A` whose row `p` holds the
//! receptive field of output pixel `p`; the kernel becomes `F` with one
//! column per output channel, and the layer output is `Y = A F`. Row `p`
//! maps to pixel `(i, j) = (p mod H', ⌊p/H'⌋)`; within a row, entries are
//! stacked channel by channel and column-first inside each region.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::normal;
use crate::tomography::{importance_sample_mask, ImportanceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(h: usize, w: usize, d: usize) -> Self {
        Self { h, w, d, data: vec![0.0; h * w * d] }
    }

    pub fn from_vec(h: usize, w: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::invalid("tensor dimensions must be positive"));
        }
        if data.len() != h * w * d {
            return Err(Error::DimMismatch { expected: h * w * d, got: data.len() });
        }
        Ok(Self { h, w, d, data })
    }

    pub fn random<R: Rng + ?Sized>(h: usize, w: usize, d: usize, rng: &mut R) -> Self {
        Self { h, w, d, data: (0..h * w * d).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.w + j) * self.d + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.idx(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let k = self.idx(i, j, c);
        self.data[k] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Kernel of shape `kh × kw × d_in × d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub kh: usize,
    pub kw: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(kh: usize, kw: usize, d_in: usize, d_out: usize) -> Self {
        Self { kh, kw, d_in, d_out, data: vec![0.0; kh * kw * d_in * d_out] }
    }

    pub fn random<R: Rng + ?Sized>(kh: usize, kw: usize, d_in: usize, d_out: usize, scale: f64, rng: &mut R) -> Self {
        let n = kh * kw * d_in * d_out;
        Self { kh, kw, d_in, d_out, data: (0..n).map(|_| scale * normal(rng)).collect() }
    }

    #[inline]
    pub fn idx(&self, a: usize, b: usize, c: usize, q: usize) -> usize {
        ((a * self.kw + b) * self.d_in + c) * self.d_out + q
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, q: usize) -> f64 {
        self.data[self.idx(a, b, c, q)]
    }

    /// Column index of kernel offset `(a, b)` in channel `c` within a row of `A`.
    #[inline]
    pub fn col(&self, a: usize, b: usize, c: usize) -> usize {
        c * self.kh * self.kw + b * self.kh + a
    }

    /// The `(kh·kw·d_in) × d_out` matrix `F`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.kh * self.kw * self.d_in, self.d_out);
        for a in 0..self.kh {
            for b in 0..self.kw {
                for c in 0..self.d_in {
                    for q in 0..self.d_out {
                        f[(self.col(a, b, c), q)] = self.get(a, b, c, q);
                    }
                }
            }
        }
        f
    }

    pub fn from_matrix(&self, f: &DMatrix<f64>) -> Self {
        let mut out = self.clone();
        for a in 0..self.kh {
            for b in 0..self.kw {
                for c in 0..self.d_in {
                    for q in 0..self.d_out {
                        let k = out.idx(a, b, c, q);
                        out.data[k] = f[(self.col(a, b, c), q)];
                    }
                }
            }
        }
        out
    }
}

fn out_dims(x: &Tensor3, kh: usize, kw: usize) -> Result<(usize, usize)> {
    if kh == 0 || kw == 0 || kh > x.h || kw > x.w {
        return Err(Error::invalid(format!("kernel {kh}x{kw} does not fit input {}x{}", x.h, x.w)));
    }
    Ok((x.h - kh + 1, x.w - kw + 1))
}

/// `(p, q) ↦ (i, j, d)` from matrix to tensor indices of the layer output.
pub fn y_to_x(p: usize, q: usize, h_out: usize) -> (usize, usize, usize) {
    (p % h_out, p / h_out, q)
}

pub fn expand_im2col(x: &Tensor3, kh: usize, kw: usize) -> Result<DMatrix<f64>> {
    let (ho, wo) = out_dims(x, kh, kw)?;
    let cols = kh * kw * x.d;
    let mut a = DMatrix::zeros(ho * wo, cols);
    for p in 0..ho * wo {
        let (i, j, _) = y_to_x(p, 0, ho);
        for c in 0..x.d {
            for b in 0..kw {
                for r in 0..kh {
                    a[(p, c * kh * kw + b * kh + r)] = x.get(i + r, j + b, c);
                }
            }
        }
    }
    Ok(a)
}

/// Reshapes `Y` (H'W' × D') to a tensor through the index map.
pub fn y_to_tensor(y: &DMatrix<f64>, h_out: usize, w_out: usize) -> Tensor3 {
    let mut t = Tensor3::zeros(h_out, w_out, y.ncols());
    for p in 0..y.nrows() {
        for q in 0..y.ncols() {
            let (i, j, d) = y_to_x(p, q, h_out);
            t.set(i, j, d, y[(p, q)]);
        }
    }
    t
}

pub fn tensor_to_y(t: &Tensor3) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(t.h * t.w, t.d);
    for j in 0..t.w {
        for i in 0..t.h {
            for d in 0..t.d {
                y[(j * t.h + i, d)] = t.get(i, j, d);
            }
        }
    }
    y
}

pub fn conv_forward(x: &Tensor3, k: &Tensor4) -> Result<(DMatrix<f64>, Tensor3)> {
    if x.d != k.d_in {
        return Err(Error::DimMismatch { expected: k.d_in, got: x.d });
    }
    let (ho, wo) = out_dims(x, k.kh, k.kw)?;
    let y = expand_im2col(x, k.kh, k.kw)? * k.to_matrix();
    let t = y_to_tensor(&y, ho, wo);
    Ok((y, t))
}

/// Direct four-fold sum, used as an oracle for the matrix form.
pub fn conv_direct(x: &Tensor3, k: &Tensor4) -> Result<Tensor3> {
    if x.d != k.d_in {
        return Err(Error::DimMismatch { expected: k.d_in, got: x.d });
    }
    let (ho, wo) = out_dims(x, k.kh, k.kw)?;
    let mut out = Tensor3::zeros(ho, wo, k.d_out);
    for i in 0..ho {
        for j in 0..wo {
            for q in 0..k.d_out {
                let mut s = 0.0;
                for a in 0..k.kh {
                    for b in 0..k.kw {
                        for c in 0..k.d_in {
                            s += x.get(i + a, j + b, c) * k.get(a, b, c, q);
                        }
                    }
                }
                out.set(i, j, q, s);
            }
        }
    }
    Ok(out)
}

pub fn cap_relu(x: f64, cap: f64) -> f64 {
    x.clamp(0.0, cap)
}

pub fn cap_relu_grad(x: f64, cap: f64) -> f64 {
    if (0.0..=cap).contains(&x) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub out: Tensor3,
    /// For each output entry, the input indices it was computed from that
    /// receive gradient: the argmax for max pooling, the whole block for
    /// average pooling.
    pub selected: Vec<Vec<usize>>,
}

pub fn pool(x: &Tensor3, p: usize, kind: PoolKind) -> Result<Pooled> {
    if p == 0 {
        return Err(Error::invalid("pool size must be at least 1"));
    }
    if kind == PoolKind::None || p == 1 {
        return Ok(Pooled { out: x.clone(), selected: (0..x.len()).map(|i| vec![i]).collect() });
    }
    if !x.h.is_multiple_of(p) || !x.w.is_multiple_of(p) {
        return Err(Error::invalid(format!("{}x{} is not divisible by pool size {p}", x.h, x.w)));
    }
    let mut out = Tensor3::zeros(x.h / p, x.w / p, x.d);
    let mut selected = vec![Vec::new(); out.len()];
    for oi in 0..out.h {
        for oj in 0..out.w {
            for c in 0..x.d {
                let mut block: Vec<usize> = Vec::with_capacity(p * p);
                for a in 0..p {
                    for b in 0..p {
                        block.push(x.idx(oi * p + a, oj * p + b, c));
                    }
                }
                block.sort_unstable();
                let o = out.idx(oi, oj, c);
                match kind {
                    PoolKind::Max => {
                        let mut best = block[0];
                        for &k in &block[1..] {
                            if x.data[k] > x.data[best] {
                                best = k;
                            }
                        }
                        out.data[o] = x.data[best];
                        selected[o] = vec![best];
                    }
                    PoolKind::Avg => {
                        out.data[o] = block.iter().map(|&k| x.data[k]).sum::<f64>() / block.len() as f64;
                        selected[o] = block;
                    }
                    PoolKind::None => unreachable!(),
                }
            }
        }
    }
    Ok(Pooled { out, selected })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMode {
    Exact,
    /// Gaussian noise of standard deviation `2ε‖A_p‖‖F_q‖`.
    Noisy,
    /// Uniform noise in `±2ε‖A_p‖‖F_q‖`, a hard version of the bound.
    Clipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvLayerConfig {
    pub eps: f64,
    pub cap: f64,
    /// `None` keeps every output entry.
    pub sampling: Option<ImportanceConfig>,
    pub pool: usize,
    pub pool_kind: PoolKind,
    pub backprop_delta: f64,
    pub mode: ConvMode,
}

impl Default for ConvLayerConfig {
    fn default() -> Self {
        Self {
            eps: 0.0,
            cap: 10.0,
            sampling: None,
            pool: 1,
            pool_kind: PoolKind::None,
            backprop_delta: 0.0,
            mode: ConvMode::Exact,
        }
    }
}

impl ConvLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cap > 0.0) {
            return Err(Error::invalid("cap C must be positive"));
        }
        if self.pool == 0 {
            return Err(Error::invalid("pool size must be at least 1"));
        }
        if self.eps < 0.0 || self.backprop_delta < 0.0 {
            return Err(Error::invalid("ε and δ must be nonnegative"));
        }
        if let Some(s) = &self.sampling {
            s.validate()?;
        }
        Ok(())
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub input_shape: (usize, usize, usize),
    pub kernel_hw: (usize, usize),
    pub a: DMatrix<f64>,
    pub f: DMatrix<f64>,
    /// Noisy pre-activation `Ȳ`.
    pub y_bar: DMatrix<f64>,
    /// Exact activation `f(Y)` in tensor layout.
    pub exact: Tensor3,
    /// Noisy activation `f(Ȳ)` before sampling.
    pub activated: Tensor3,
    pub sampled: Vec<bool>,
    pub pooled: Pooled,
    /// `M = max_{p,q} ‖A_p‖‖F_q‖`.
    pub m: f64,
}

impl LayerState {
    pub fn output(&self) -> &Tensor3 {
        &self.pooled.out
    }

    /// `‖f(Ȳ) − f(Y)‖∞` before sampling and pooling.
    pub fn activation_error(&self) -> f64 {
        self.activated
            .data
            .iter()
            .zip(&self.exact.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn noisy_layer_forward<R: Rng + ?Sized>(x: &Tensor3, k: &Tensor4, cfg: &ConvLayerConfig, rng: &mut R) -> Result<LayerState> {
    cfg.validate()?;
    if x.d != k.d_in {
        return Err(Error::DimMismatch { expected: k.d_in, got: x.d });
    }
    let (ho, wo) = out_dims(x, k.kh, k.kw)?;
    let a = expand_im2col(x, k.kh, k.kw)?;
    let f = k.to_matrix();
    let y = &a * &f;
    let a_norms: Vec<f64> = (0..a.nrows()).map(|p| a.row(p).norm()).collect();
    let f_norms: Vec<f64> = (0..f.ncols()).map(|q| f.column(q).norm()).collect();
    let m = a_norms.iter().cloned().fold(0.0, f64::max) * f_norms.iter().cloned().fold(0.0, f64::max);
    let mut y_bar = y.clone();
    if cfg.eps > 0.0 && cfg.mode != ConvMode::Exact {
        for p in 0..y.nrows() {
            for q in 0..y.ncols() {
                let scale = 2.0 * cfg.eps * a_norms[p] * f_norms[q];
                y_bar[(p, q)] += match cfg.mode {
                    ConvMode::Noisy => scale * normal(rng),
                    ConvMode::Clipped => scale * rng.random_range(-1.0..=1.0),
                    ConvMode::Exact => 0.0,
                };
            }
        }
    }
    let exact = y_to_tensor(&y.map(|v| cap_relu(v, cfg.cap)), ho, wo);
    let activated = y_to_tensor(&y_bar.map(|v| cap_relu(v, cfg.cap)), ho, wo);
    let (sampled_t, sampled) = match &cfg.sampling {
        Some(s) => {
            let res = importance_sample_mask(&activated.data, s, rng)?;
            (Tensor3 { data: res.values, ..activated.clone() }, res.kept)
        }
        None => (activated.clone(), vec![true; activated.len()]),
    };
    let pooled = pool(&sampled_t, cfg.pool, cfg.pool_kind)?;
    Ok(LayerState { input_shape: (x.h, x.w, x.d), kernel_hw: (k.kh, k.kw), a, f, y_bar, exact, activated, sampled, pooled, m })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_f: DMatrix<f64>,
    pub d_x: Tensor3,
}

/// Gradients of the loss with respect to the kernel and the layer input,
/// given the gradient with respect to the (pooled) layer output.
pub fn backprop(state: &LayerState, d_out: &Tensor3, cfg: &ConvLayerConfig) -> Result<Gradients> {
    let pooled = &state.pooled;
    if d_out.len() != pooled.out.len() {
        return Err(Error::DimMismatch { expected: pooled.out.len(), got: d_out.len() });
    }
    let act = &state.activated;
    let mut d_act = Tensor3::zeros(act.h, act.w, act.d);
    for (o, sel) in pooled.selected.iter().enumerate() {
        let share = d_out.data[o] / sel.len() as f64;
        for &k in sel {
            d_act.data[k] += share;
        }
    }
    for (g, &kept) in d_act.data.iter_mut().zip(&state.sampled) {
        if !kept {
            *g = 0.0;
        }
    }
    let mut d_y = tensor_to_y(&d_act);
    for (g, yb) in d_y.iter_mut().zip(state.y_bar.iter()) {
        *g *= cap_relu_grad(*yb, cfg.cap);
    }
    let d_f = state.a.transpose() * &d_y;
    let d_a = &d_y * state.f.transpose();
    let (h, w, d) = state.input_shape;
    let (kh, kw) = state.kernel_hw;
    let h_out = act.h;
    let mut d_x = Tensor3::zeros(h, w, d);
    for p in 0..d_a.nrows() {
        let (i, j, _) = y_to_x(p, 0, h_out);
        for c in 0..d {
            for b in 0..kw {
                for r in 0..kh {
                    let k = d_x.idx(i + r, j + b, c);
                    d_x.data[k] += d_a[(p, c * kh * kw + b * kh + r)];
                }
            }
        }
    }
    Ok(Gradients { d_f, d_x })
}

/// `F ← F − λ(∂L/∂F + noise)` with per-entry Gaussian noise of standard
/// deviation `δ‖∂L/∂F‖₂`.
pub fn noisy_update<R: Rng + ?Sized>(k: &Tensor4, d_f: &DMatrix<f64>, lr: f64, delta: f64, rng: &mut R) -> Tensor4 {
    let scale = delta * d_f.norm();
    let mut f = k.to_matrix();
    for (w, g) in f.iter_mut().zip(d_f.iter()) {
        let noise = if scale > 0.0 { scale * normal(rng) } else { 0.0 };
        *w -= lr * (g + noise);
    }
    k.from_matrix(&f)
}

/// Two quantum convolution layers followed by a classical softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcnnNet {
    pub kernels: Vec<Tensor4>,
    pub layer_cfg: Vec<ConvLayerConfig>,
    pub fc: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcnnCurve {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl QcnnNet {
    /// Net for `side × side` single-channel images: a 3×3 conv to `c1`
    /// channels with 2×2 pooling, a 2×2 conv to `c2` channels, then a dense
    /// head over `classes`.
    pub fn toy<R: Rng + ?Sized>(side: usize, c1: usize, c2: usize, classes: usize, base: ConvLayerConfig, rng: &mut R) -> Result<Self> {
        let h1 = side.checked_sub(2).filter(|h| *h >= 2 && h % 2 == 0).ok_or_else(|| Error::invalid("side must be even and at least 6"))?;
        let h2 = h1 / 2 - 1;
        let k1 = Tensor4::random(3, 3, 1, c1, (2.0 / 9.0f64).sqrt(), rng);
        let k2 = Tensor4::random(2, 2, c1, c2, (2.0 / (4 * c1) as f64).sqrt(), rng);
        let features = h2 * h2 * c2;
        let fc = (0..classes)
            .map(|_| (0..features).map(|_| normal(rng) * (1.0 / features as f64).sqrt()).collect())
            .collect();
        let first = ConvLayerConfig { pool: 2, pool_kind: PoolKind::Max, ..base };
        let second = ConvLayerConfig { pool: 1, pool_kind: PoolKind::None, ..base };
        Ok(Self { kernels: vec![k1, k2], layer_cfg: vec![first, second], fc, bias: vec![0.0; classes] })
    }

    fn forward_states<R: Rng + ?Sized>(&self, x: &Tensor3, rng: &mut R) -> Result<(Vec<LayerState>, Vec<f64>)> {
        let mut states = Vec::with_capacity(self.kernels.len());
        let mut h = x.clone();
        for (k, cfg) in self.kernels.iter().zip(&self.layer_cfg) {
            let st = noisy_layer_forward(&h, k, cfg, rng)?;
            h = st.output().clone();
            states.push(st);
        }
        if h.len() != self.fc[0].len() {
            return Err(Error::DimMismatch { expected: self.fc[0].len(), got: h.len() });
        }
        let logits = self
            .fc
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(&h.data).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect();
        Ok((states, logits))
    }

    pub fn predict<R: Rng + ?Sized>(&self, x: &Tensor3, rng: &mut R) -> Result<usize> {
        let (_, logits) = self.forward_states(x, rng)?;
        Ok(crate::pyramid::argmax(&logits))
    }

    /// One SGD step on a single sample; returns the loss.
    pub fn step<R: Rng + ?Sized>(&mut self, x: &Tensor3, label: usize, lr: f64, rng: &mut R) -> Result<f64> {
        let (states, logits) = self.forward_states(x, rng)?;
        let p = softmax(&logits);
        let loss = -p[label].max(1e-300).ln();
        let g: Vec<f64> = p.iter().enumerate().map(|(i, v)| v - if i == label { 1.0 } else { 0.0 }).collect();
        let feat = &states.last().expect("layers").output().data;
        let mut d_feat = vec![0.0; feat.len()];
        for (c, gc) in g.iter().enumerate() {
            for (f, df) in d_feat.iter_mut().enumerate() {
                *df += gc * self.fc[c][f];
            }
        }
        for (c, gc) in g.iter().enumerate() {
            for (w, v) in self.fc[c].iter_mut().zip(feat) {
                *w -= lr * gc * v;
            }
            self.bias[c] -= lr * gc;
        }
        let last = states.last().expect("layers").output();
        let mut upstream = Tensor3 { data: d_feat, ..last.clone() };
        for li in (0..self.kernels.len()).rev() {
            let cfg = self.layer_cfg[li];
            let grads = backprop(&states[li], &upstream, &cfg)?;
            self.kernels[li] = noisy_update(&self.kernels[li], &grads.d_f, lr, cfg.backprop_delta, rng);
            upstream = grads.d_x;
        }
        Ok(loss)
    }

    pub fn accuracy<R: Rng + ?Sized>(&self, xs: &[Tensor3], labels: &[usize], rng: &mut R) -> Result<f64> {
        let mut hit = 0;
        for (x, &l) in xs.iter().zip(labels) {
            if self.predict(x, rng)? == l {
                hit += 1;
            }
        }
        Ok(hit as f64 / xs.len().max(1) as f64)
    }

    pub fn train<R: Rng + ?Sized>(&mut self, xs: &[Tensor3], labels: &[usize], epochs: usize, lr: f64, rng: &mut R) -> Result<QcnnCurve> {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut curve = QcnnCurve { loss: vec![], accuracy: vec![] };
        for _ in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for &i in &order {
                total += self.step(&xs[i], labels[i], lr, rng)?;
            }
            curve.loss.push(total / xs.len().max(1) as f64);
            curve.accuracy.push(self.accuracy(xs, labels, rng)?);
        }
        Ok(curve)
    }
}
