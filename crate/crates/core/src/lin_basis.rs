//! Circuits restricted to the unary basis of an n-wire register.
//!
//! Amplitude `amps[i]` sits on the basis state with a single excitation on
//! wire `i`. A dense simulator over all 2^n basis states is provided as an
//! oracle for small registers; there basis index `b` has wire `w` excited iff
//! bit `w` of `b` is set.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{multinomial, norm};

pub const MAX_DENSE_WIRES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnaryState {
    pub amps: Vec<f64>,
    pub discarded: f64,
}

impl UnaryState {
    pub fn new(amps: Vec<f64>, discarded: f64) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::invalid("unary state needs at least one wire"));
        }
        if discarded < 0.0 {
            return Err(Error::invalid("discarded mass must be nonnegative"));
        }
        let total = amps.iter().map(|a| a * a).sum::<f64>() + discarded;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnit(total.sqrt()));
        }
        Ok(Self { amps, discarded })
    }

    /// The state with its single excitation on wire `k`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut amps = vec![0.0; n];
        amps[k] = 1.0;
        Self { amps, discarded: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.amps.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum::<f64>() + self.discarded
    }

    /// Moves a fraction `mass` of the probability into the discard bucket,
    /// shrinking every amplitude uniformly.
    pub fn with_discarded(&self, mass: f64) -> Result<Self> {
        let kept: f64 = self.amps.iter().map(|a| a * a).sum();
        if !(0.0..=kept).contains(&mass) {
            return Err(Error::invalid("discarded mass exceeds available mass"));
        }
        let scale = ((kept - mass) / kept).sqrt();
        Ok(Self {
            amps: self.amps.iter().map(|a| a * scale).collect(),
            discarded: self.discarded + mass,
        })
    }
}

/// Reconfigurable beam splitter between wires `i` and `j`.
///
/// On the pair `(a_i, a_j)` it acts as `[[cos, sin], [-sin, cos]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbsGate {
    pub theta: f64,
    pub i: usize,
    pub j: usize,
}

impl RbsGate {
    pub fn new(theta: f64, i: usize, j: usize) -> Self {
        Self { theta, i, j }
    }

    pub fn inverse(&self) -> Self {
        Self { theta: -self.theta, ..*self }
    }

    fn check(&self, n: usize) -> Result<()> {
        for idx in [self.i, self.j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
        }
        if self.i == self.j {
            return Err(Error::invalid("RBS gate needs two distinct wires"));
        }
        Ok(())
    }
}

#[inline]
pub fn rotate_pair(amps: &mut [f64], i: usize, j: usize, theta: f64) {
    let (s, c) = theta.sin_cos();
    let (ai, aj) = (amps[i], amps[j]);
    amps[i] = c * ai + s * aj;
    amps[j] = -s * ai + c * aj;
}

pub fn rbs_apply(state: &UnaryState, gate: &RbsGate) -> Result<UnaryState> {
    gate.check(state.n())?;
    let mut out = state.clone();
    rotate_pair(&mut out.amps, gate.i, gate.j, gate.theta);
    Ok(out)
}

pub fn apply_circuit(state: &UnaryState, gates: &[RbsGate]) -> Result<UnaryState> {
    let mut out = state.clone();
    for g in gates {
        g.check(out.n())?;
        rotate_pair(&mut out.amps, g.i, g.j, g.theta);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoaderLayout {
    Diagonal,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoaderPlan {
    pub layout: LoaderLayout,
    pub angles: Vec<f64>,
    pub source_norm: f64,
    pub dim: usize,
}

fn check_unit(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("cannot load an empty vector"));
    }
    let nrm = norm(x);
    if (nrm - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnit(nrm));
    }
    if x.len() == 1 && x[0] < 0.0 {
        return Err(Error::invalid("a one-wire loader cannot produce a negative amplitude"));
    }
    Ok(nrm)
}

/// Angles of the diagonal (cascade) loader.
pub fn loader_angles(x: &[f64]) -> Result<LoaderPlan> {
    let nrm = check_unit(x)?;
    let d = x.len();
    let xs: Vec<f64> = x.iter().map(|v| v / nrm).collect();
    let mut angles = vec![0.0; d.saturating_sub(1)];
    let mut sines = 1.0f64;
    for k in 0..d.saturating_sub(1) {
        if sines < 1e-12 {
            break;
        }
        angles[k] = if k + 2 == d {
            // the last angle also carries the sign of the final entry
            (xs[k + 1] / sines).atan2(xs[k] / sines)
        } else {
            (xs[k] / sines).clamp(-1.0, 1.0).acos()
        };
        sines *= angles[k].sin();
    }
    Ok(LoaderPlan {
        layout: LoaderLayout::Diagonal,
        angles,
        source_norm: nrm,
        dim: d,
    })
}

/// Binary-tree splits `(lo, mid, hi)` in breadth-first order.
fn tree_nodes(d: usize) -> Vec<(usize, usize, usize)> {
    let mut nodes = Vec::with_capacity(d.saturating_sub(1));
    let mut level = vec![(0usize, d)];
    while !level.is_empty() {
        let mut next = Vec::new();
        for (lo, hi) in level {
            if hi - lo < 2 {
                continue;
            }
            let mid = lo + (hi - lo) / 2;
            nodes.push((lo, mid, hi));
            next.push((lo, mid));
            next.push((mid, hi));
        }
        level = next;
    }
    nodes
}

/// Angles of the log-depth tree loader.
pub fn parallel_loader_angles(x: &[f64]) -> Result<LoaderPlan> {
    let nrm = check_unit(x)?;
    let xs: Vec<f64> = x.iter().map(|v| v / nrm).collect();
    let side = |lo: usize, hi: usize| {
        if hi - lo == 1 {
            xs[lo]
        } else {
            norm(&xs[lo..hi])
        }
    };
    let angles = tree_nodes(xs.len())
        .into_iter()
        .map(|(lo, mid, hi)| side(mid, hi).atan2(side(lo, mid)))
        .collect();
    Ok(LoaderPlan {
        layout: LoaderLayout::Parallel,
        angles,
        source_norm: nrm,
        dim: xs.len(),
    })
}

pub fn loader_plan(x: &[f64], layout: LoaderLayout) -> Result<LoaderPlan> {
    match layout {
        LoaderLayout::Diagonal => loader_angles(x),
        LoaderLayout::Parallel => parallel_loader_angles(x),
    }
}

impl LoaderPlan {
    /// Gate list that maps the ground state `e_0` to the loaded vector.
    ///
    /// Loader gates move amplitude from a lower wire to a higher one, so they
    /// name the higher wire first.
    pub fn gates(&self) -> Vec<RbsGate> {
        match self.layout {
            LoaderLayout::Diagonal => self
                .angles
                .iter()
                .enumerate()
                .map(|(k, &t)| RbsGate::new(t, k + 1, k))
                .collect(),
            LoaderLayout::Parallel => tree_nodes(self.dim)
                .into_iter()
                .zip(&self.angles)
                .map(|((lo, mid, _), &t)| RbsGate::new(t, mid, lo))
                .collect(),
        }
    }

    /// Circuit depth, counting gates on disjoint wires as one step.
    pub fn depth(&self) -> usize {
        match self.layout {
            LoaderLayout::Diagonal => self.angles.len(),
            LoaderLayout::Parallel => {
                let mut depth = 0;
                let mut width = self.dim;
                while width > 1 {
                    depth += 1;
                    width = width.div_ceil(2);
                }
                depth
            }
        }
    }

    pub fn load(&self) -> UnaryState {
        let mut amps = vec![0.0; self.dim];
        amps[0] = 1.0;
        for g in self.gates() {
            rotate_pair(&mut amps, g.i, g.j, g.theta);
        }
        UnaryState { amps, discarded: 0.0 }
    }

    /// Applies the adjoint loader, mapping the loaded vector back to `e_0`.
    pub fn unload(&self, state: &UnaryState) -> Result<UnaryState> {
        let gates: Vec<RbsGate> = self.gates().iter().rev().map(RbsGate::inverse).collect();
        apply_circuit(state, &gates)
    }
}

pub fn load_vector(x: &[f64], layout: LoaderLayout) -> Result<UnaryState> {
    Ok(loader_plan(x, layout)?.load())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureCounts {
    pub counts: Vec<u64>,
    pub discarded: u64,
    pub shots: u64,
}

impl MeasureCounts {
    pub fn retained(&self) -> u64 {
        self.shots - self.discarded
    }

    /// Outcome frequencies over retained shots only.
    pub fn frequencies(&self) -> Vec<f64> {
        let kept = self.retained();
        if kept == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / kept as f64).collect()
    }
}

/// Samples `shots` measurements, discarding non-unary outcomes.
pub fn measure_mitigated<R: Rng + ?Sized>(state: &UnaryState, shots: u64, rng: &mut R) -> Result<MeasureCounts> {
    if shots == 0 {
        return Err(Error::invalid("shots must be at least 1"));
    }
    let probs: Vec<f64> = state.amps.iter().map(|a| a * a).collect();
    let counts = multinomial(rng, shots, &probs);
    let kept: u64 = counts.iter().sum();
    Ok(MeasureCounts {
        counts,
        discarded: shots - kept,
        shots,
    })
}

/// Shot-based estimate of the normalized inner product of `v` and `w`.
///
/// The unsigned circuit loads `v`, applies the adjoint loader of `w` and reads
/// the probability of `e_0`. The signed circuit prepares
/// `(|0>|v> + |1>|w>)/√2`, applies a Hadamard on the control and then the
/// adjoint loader of `w`; the amplitude of `|0>|e_0>` is `(1 + <v,w>)/2`.
pub fn unary_inner_product<R: Rng + ?Sized>(
    v: &[f64],
    w: &[f64],
    shots: u64,
    signed: bool,
    rng: &mut R,
) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::DimMismatch { expected: v.len(), got: w.len() });
    }
    let (nv, nw) = (norm(v), norm(w));
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let vh: Vec<f64> = v.iter().map(|x| x / nv).collect();
    let wh: Vec<f64> = w.iter().map(|x| x / nw).collect();
    let plan_w = loader_angles(&wh)?;
    let loaded_v = loader_angles(&vh)?.load();
    if !signed {
        let out = plan_w.unload(&loaded_v)?;
        let m = measure_mitigated(&out, shots, rng)?;
        return Ok(m.frequencies()[0].sqrt());
    }
    let loaded_w = plan_w.load();
    let plus: Vec<f64> = loaded_v.amps.iter().zip(&loaded_w.amps).map(|(a, b)| 0.5 * (a + b)).collect();
    let minus: Vec<f64> = loaded_v.amps.iter().zip(&loaded_w.amps).map(|(a, b)| 0.5 * (a - b)).collect();
    let plus = plan_w.unload(&UnaryState { amps: plus, discarded: 0.0 })?;
    let minus = plan_w.unload(&UnaryState { amps: minus, discarded: 0.0 })?;
    let probs: Vec<f64> = plus.amps.iter().chain(&minus.amps).map(|a| a * a).collect();
    let counts = multinomial(rng, shots, &probs);
    let a = (counts[0] as f64 / shots as f64).sqrt();
    Ok(2.0 * a - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseState {
    pub n: usize,
    pub amps: Vec<f64>,
}

impl DenseState {
    pub fn from_unary(state: &UnaryState) -> Result<Self> {
        let n = state.n();
        if n > MAX_DENSE_WIRES {
            return Err(Error::invalid(format!("dense simulation limited to {MAX_DENSE_WIRES} wires")));
        }
        let mut amps = vec![0.0; 1 << n];
        for (w, &a) in state.amps.iter().enumerate() {
            amps[1 << w] = a;
        }
        Ok(Self { n, amps })
    }

    /// Largest amplitude magnitude outside the single-excitation sector.
    pub fn leakage(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(b, _)| b.count_ones() != 1)
            .map(|(_, a)| a.abs())
            .fold(0.0, f64::max)
    }

    pub fn unary_part(&self) -> Vec<f64> {
        (0..self.n).map(|w| self.amps[1 << w]).collect()
    }
}

fn dense_rotate(amps: &mut [f64], g: &RbsGate) {
    let (s, c) = g.theta.sin_cos();
    let (bi, bj) = (1usize << g.i, 1usize << g.j);
    for b in 0..amps.len() {
        // visit each {i set, j clear} / {i clear, j set} pair once
        if b & bi != 0 && b & bj == 0 {
            let partner = (b & !bi) | bj;
            let (x, y) = (amps[b], amps[partner]);
            amps[b] = c * x + s * y;
            amps[partner] = -s * x + c * y;
        }
    }
}

pub fn dense_apply(state: &DenseState, gates: &[RbsGate]) -> Result<DenseState> {
    let mut out = state.clone();
    for g in gates {
        g.check(state.n)?;
        dense_rotate(&mut out.amps, g);
    }
    Ok(out)
}

/// Full 2^n × 2^n matrix of a gate sequence.
pub fn dense_simulate(gates: &[RbsGate], n: usize) -> Result<DMatrix<f64>> {
    if n > MAX_DENSE_WIRES {
        return Err(Error::invalid(format!("dense simulation limited to {MAX_DENSE_WIRES} wires")));
    }
    let dim = 1usize << n;
    for g in gates {
        g.check(n)?;
    }
    let mut u = DMatrix::identity(dim, dim);
    let mut col = vec![0.0; dim];
    for c in 0..dim {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[c] = 1.0;
        for g in gates {
            dense_rotate(&mut col, g);
        }
        u.column_mut(c).copy_from_slice(&col);
    }
    Ok(u)
}

/// Restriction of a dense unitary to the single-excitation sector.
pub fn unary_restriction(u: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |r, c| u[(1 << r, 1 << c)])
}
