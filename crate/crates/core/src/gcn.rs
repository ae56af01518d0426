//! Two-layer graph convolutional network `Â · relu(Â X W1 + b1) · W2 + b2`
//! with softmax cross-entropy, written out by hand: forward pass with cached
//! activations, reverse-mode gradient, and a forward-over-reverse
//! Hessian-vector product.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize, Graph, NormalizedAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

impl GcnShape {
    /// `d·h + h + h·K + K`.
    pub fn n_params(&self) -> usize {
        let (d, h, k) = (self.input_dim, self.hidden_dim, self.n_classes);
        d * h + h + h * k + k
    }

    fn offsets(&self) -> [usize; 4] {
        let (d, h, k) = (self.input_dim, self.hidden_dim, self.n_classes);
        [0, d * h, d * h + h, d * h + h + h * k]
    }

    pub fn w1_range(&self) -> std::ops::Range<usize> {
        let o = self.offsets();
        o[0]..o[1]
    }

    pub fn b1_range(&self) -> std::ops::Range<usize> {
        let o = self.offsets();
        o[1]..o[2]
    }

    pub fn w2_range(&self) -> std::ops::Range<usize> {
        let o = self.offsets();
        o[2]..o[3]
    }

    pub fn b2_range(&self) -> std::ops::Range<usize> {
        self.offsets()[3]..self.n_params()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub l2_reg: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_seed: u64,
}

impl GcnConfig {
    /// Defaults: hidden 16, weight decay 5e-4 on every parameter, lr 0.5, 400 epochs.
    pub fn new(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 16,
            n_classes,
            l2_reg: 5e-4,
            learning_rate: 0.5,
            epochs: 400,
            init_seed: 0,
        }
    }

    pub fn for_graph(g: &Graph) -> Self {
        Self::new(g.feature_dim(), g.n_classes())
    }

    pub fn shape(&self) -> GcnShape {
        GcnShape {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            n_classes: self.n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.n_classes == 0 {
            return Err(Error::invalid("GCN dimensions must be positive"));
        }
        if !(self.l2_reg > 0.0) {
            return Err(Error::invalid("l2_reg must be > 0"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive and finite"));
        }
        Ok(())
    }
}

/// Flat parameter vector laid out as `W1 (d×h, row-major), b1, W2 (h×K, row-major), b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += a · x`
    pub fn axpy(&mut self, a: f64, x: &ParamVector) {
        assert_eq!(self.len(), x.len());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, a: f64) -> ParamVector {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Writes one value per line under a header recording the layout.
    pub fn write_csv(&self, shape: GcnShape, path: &Path) -> Result<()> {
        assert_eq!(self.len(), shape.n_params());
        let mut out = format!(
            "# d={} h={} k={} order=w1_row_major,b1,w2_row_major,b2\nvalue\n",
            shape.input_dim, shape.hidden_dim, shape.n_classes
        );
        for v in &self.0 {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<(GcnShape, ParamVector)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        let field = |key: &str| -> Result<usize> {
            header
                .split_whitespace()
                .find_map(|tok| tok.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(path, 1, format!("header lacks `{key}`")))
        };
        let shape = GcnShape {
            input_dim: field("d=")?,
            hidden_dim: field("h=")?,
            n_classes: field("k=")?,
        };
        if lines.next() != Some("value") {
            return Err(Error::parse(path, 2, "expected `value` column header"));
        }
        let values = lines
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, i + 3, format!("bad value `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != shape.n_params() {
            return Err(Error::parse(
                path,
                0,
                format!("{} values for {} parameters", values.len(), shape.n_params()),
            ));
        }
        Ok((shape, ParamVector(values)))
    }
}

struct Weights<'a> {
    w1: ArrayView2<'a, f64>,
    b1: ArrayView1<'a, f64>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
}

fn split<'a>(shape: GcnShape, theta: &'a ParamVector) -> Weights<'a> {
    assert_eq!(theta.len(), shape.n_params(), "parameter length mismatch");
    let s = theta.as_slice();
    let (d, h, k) = (shape.input_dim, shape.hidden_dim, shape.n_classes);
    Weights {
        w1: ArrayView2::from_shape((d, h), &s[shape.w1_range()]).expect("w1 shape"),
        b1: ArrayView1::from(&s[shape.b1_range()]),
        w2: ArrayView2::from_shape((h, k), &s[shape.w2_range()]).expect("w2 shape"),
        b2: ArrayView1::from(&s[shape.b2_range()]),
    }
}

fn pack(shape: GcnShape, w1: &Array2<f64>, b1: &Array1<f64>, w2: &Array2<f64>, b2: &Array1<f64>) -> ParamVector {
    let mut out = Vec::with_capacity(shape.n_params());
    out.extend(w1.iter());
    out.extend(b1.iter());
    out.extend(w2.iter());
    out.extend(b2.iter());
    ParamVector(out)
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(cfg: &GcnConfig) -> ParamVector {
    let shape = cfg.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut theta = ParamVector::zeros(shape.n_params());
    let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
    let b1 = glorot(cfg.input_dim, cfg.hidden_dim);
    for v in &mut theta.as_mut_slice()[shape.w1_range()] {
        *v = rng.random_range(-b1..b1);
    }
    let b2 = glorot(cfg.hidden_dim, cfg.n_classes);
    for v in &mut theta.as_mut_slice()[shape.w2_range()] {
        *v = rng.random_range(-b2..b2);
    }
    theta
}

/// Graph-side inputs that stay fixed across parameter updates: `Â` and `ÂX`.
#[derive(Debug, Clone)]
pub struct GcnInput {
    adj: NormalizedAdjacency,
    propagated: Array2<f64>,
}

impl GcnInput {
    pub fn new(adj: NormalizedAdjacency, features: &Array2<f64>) -> Self {
        let propagated = adj.matmul(features);
        Self { adj, propagated }
    }

    pub fn from_graph(g: &Graph) -> Self {
        Self::new(normalize(g), g.features())
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.n_rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.propagated.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `ÂXW1 + b1`
    pub pre_activation: Array2<f64>,
    pub hidden: Array2<f64>,
    /// `Â · hidden`
    pub aggregated: Array2<f64>,
    /// Last-layer representation `M`.
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

impl ForwardCache {
    pub fn relu_active(&self, i: usize, j: usize) -> bool {
        self.pre_activation[[i, j]] > 0.0
    }
}

fn row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    probs
}

pub fn forward(input: &GcnInput, shape: GcnShape, theta: &ParamVector) -> Result<ForwardCache> {
    if input.feature_dim() != shape.input_dim {
        return Err(Error::invalid(format!(
            "feature dim {} but model expects {}",
            input.feature_dim(),
            shape.input_dim
        )));
    }
    if !theta.is_finite() {
        return Err(Error::numerical("non-finite parameters"));
    }
    if !input.propagated.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical("non-finite features"));
    }
    let w = split(shape, theta);
    let pre_activation = input.propagated.dot(&w.w1) + &w.b1;
    let hidden = pre_activation.mapv(|v| v.max(0.0));
    let aggregated = input.adj.matmul(&hidden);
    let logits = aggregated.dot(&w.w2) + &w.b2;
    let probs = row_softmax(&logits);
    Ok(ForwardCache {
        pre_activation,
        hidden,
        aggregated,
        logits,
        probs,
    })
}

/// What a per-node cross-entropy term is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossTarget {
    /// `−log f_k`
    Class(usize),
    /// `−log(1 − f_m)`: the φ-weighted runner-up loss `−φ_k log f_k` with
    /// `φ_k = log_{f_k}(1 − f_m)` evaluated as a function of the parameters.
    NotClass(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerm {
    pub node: usize,
    pub target: LossTarget,
    pub weight: f64,
}

/// Hard-label terms for `nodes`, each weighted by `weight`.
pub fn label_terms(nodes: &[usize], labels: &[usize], weight: f64) -> Vec<LossTerm> {
    nodes
        .iter()
        .map(|&node| LossTerm {
            node,
            target: LossTarget::Class(labels[node]),
            weight,
        })
        .collect()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn term_loss(cache: &ForwardCache, node: usize, target: LossTarget) -> f64 {
    let row = cache.logits.row(node);
    let all = log_sum_exp(row.iter().copied());
    match target {
        LossTarget::Class(k) => all - row[k],
        LossTarget::NotClass(m) => {
            let rest = log_sum_exp(
                row.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != m)
                    .map(|(_, &v)| v),
            );
            all - rest
        }
    }
}

/// Softmax of a logit row with coordinate `m` excluded (zero there).
fn excluded_softmax(row: ArrayView1<f64>, m: usize) -> Array1<f64> {
    let max = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != m)
        .fold(f64::NEG_INFINITY, |acc, (_, &v)| acc.max(v));
    let mut out = row.mapv(|v| (v - max).exp());
    out[m] = 0.0;
    let s = out.sum();
    out.mapv_inplace(|v| v / s);
    out
}

/// `∂L/∂M_i` for one term.
fn logit_gradient(cache: &ForwardCache, node: usize, target: LossTarget) -> Array1<f64> {
    let mut g = cache.probs.row(node).to_owned();
    match target {
        LossTarget::Class(k) => g[k] -= 1.0,
        LossTarget::NotClass(m) => g -= &excluded_softmax(cache.logits.row(node), m),
    }
    g
}

/// `(diag p − p pᵀ) u`
fn softmax_jvp(p: ArrayView1<f64>, u: ArrayView1<f64>) -> Array1<f64> {
    let pu = p.dot(&u);
    &p * &u - &(&p * pu)
}

/// `∂²L/∂M_i² · u` for one term.
fn logit_hessian_apply(cache: &ForwardCache, node: usize, target: LossTarget, u: ArrayView1<f64>) -> Array1<f64> {
    let p = cache.probs.row(node);
    let mut out = softmax_jvp(p, u);
    if let LossTarget::NotClass(m) = target {
        let q = excluded_softmax(cache.logits.row(node), m);
        out -= &softmax_jvp(q.view(), u);
    }
    out
}

/// Per-node losses and the risk built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskBreakdown {
    pub losses: Vec<f64>,
    pub mean_loss: f64,
    pub reg_term: f64,
    pub risk: f64,
}

/// Mean cross-entropy over `nodes`, plus `(λ/2)‖θ‖²` when `l2_reg` is given.
pub fn risk(
    cache: &ForwardCache,
    labels: &[usize],
    nodes: &[usize],
    theta: &ParamVector,
    l2_reg: Option<f64>,
) -> RiskBreakdown {
    assert!(!nodes.is_empty(), "risk over an empty node set");
    let losses: Vec<f64> = nodes
        .iter()
        .map(|&i| term_loss(cache, i, LossTarget::Class(labels[i])))
        .collect();
    let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    let reg_term = l2_reg.map_or(0.0, |l| 0.5 * l * theta.dot(theta));
    RiskBreakdown {
        losses,
        mean_loss,
        reg_term,
        risk: mean_loss + reg_term,
    }
}

/// `Σ w · L` over the terms, without regularization.
pub fn weighted_loss(cache: &ForwardCache, terms: &[LossTerm]) -> f64 {
    terms
        .iter()
        .map(|t| t.weight * term_loss(cache, t.node, t.target))
        .sum()
}

fn logit_seeds(cache: &ForwardCache, terms: &[LossTerm]) -> Array2<f64> {
    let mut seeds = Array2::zeros(cache.logits.raw_dim());
    for t in terms {
        let g = logit_gradient(cache, t.node, t.target);
        seeds.row_mut(t.node).scaled_add(t.weight, &g);
    }
    seeds
}

fn mask_inactive(cache: &ForwardCache, m: &mut Array2<f64>) {
    ndarray::Zip::from(m)
        .and(&cache.pre_activation)
        .for_each(|v, &z| {
            if z <= 0.0 {
                *v = 0.0
            }
        });
}

/// Reverse pass from logit seeds `∂/∂M`.
fn backward(input: &GcnInput, shape: GcnShape, theta: &ParamVector, cache: &ForwardCache, seeds: &Array2<f64>) -> ParamVector {
    let w = split(shape, theta);
    let dw2 = cache.aggregated.t().dot(seeds);
    let db2 = seeds.sum_axis(Axis(0));
    let d_agg = seeds.dot(&w.w2.t());
    let mut d_pre = input.adj.matmul(&d_agg);
    mask_inactive(cache, &mut d_pre);
    let dw1 = input.propagated.t().dot(&d_pre);
    let db1 = d_pre.sum_axis(Axis(0));
    pack(shape, &dw1, &db1, &dw2, &db2)
}

/// Exact gradient of `Σ w·L` over the terms at the cached forward pass.
pub fn terms_gradient(
    input: &GcnInput,
    shape: GcnShape,
    theta: &ParamVector,
    cache: &ForwardCache,
    terms: &[LossTerm],
) -> ParamVector {
    backward(input, shape, theta, cache, &logit_seeds(cache, terms))
}

/// Gradient of the mean loss over `nodes` (plus `λθ` when `include_reg`).
pub fn gradient(
    input: &GcnInput,
    shape: GcnShape,
    labels: &[usize],
    nodes: &[usize],
    theta: &ParamVector,
    l2_reg: f64,
    include_reg: bool,
) -> Result<ParamVector> {
    let cache = forward(input, shape, theta)?;
    let weight = if nodes.is_empty() {
        0.0
    } else {
        1.0 / nodes.len() as f64
    };
    let mut g = terms_gradient(input, shape, theta, &cache, &label_terms(nodes, labels, weight));
    if include_reg {
        g.axpy(l2_reg, theta);
    }
    Ok(g)
}

/// Directional derivative of `terms_gradient` along `v`, holding the ReLU
/// pattern of `cache` fixed. Regularization is not included.
pub fn terms_hvp(
    input: &GcnInput,
    shape: GcnShape,
    theta: &ParamVector,
    cache: &ForwardCache,
    terms: &[LossTerm],
    v: &ParamVector,
) -> ParamVector {
    let w = split(shape, theta);
    let dv = split(shape, v);

    // tangent forward
    let mut d_hidden = input.propagated.dot(&dv.w1) + &dv.b1;
    mask_inactive(cache, &mut d_hidden);
    let d_agg = input.adj.matmul(&d_hidden);
    let d_logits = d_agg.dot(&w.w2) + cache.aggregated.dot(&dv.w2) + &dv.b2;

    let seeds = logit_seeds(cache, terms);
    let mut d_seeds = Array2::zeros(seeds.raw_dim());
    for t in terms {
        let hu = logit_hessian_apply(cache, t.node, t.target, d_logits.row(t.node));
        d_seeds.row_mut(t.node).scaled_add(t.weight, &hu);
    }

    // tangent of the reverse pass
    let dw2 = d_agg.t().dot(&seeds) + cache.aggregated.t().dot(&d_seeds);
    let db2 = d_seeds.sum_axis(Axis(0));
    let dd_agg = d_seeds.dot(&w.w2.t()) + seeds.dot(&dv.w2.t());
    let mut dd_pre = input.adj.matmul(&dd_agg);
    mask_inactive(cache, &mut dd_pre);
    let dw1 = input.propagated.t().dot(&dd_pre);
    let db1 = dd_pre.sum_axis(Axis(0));
    pack(shape, &dw1, &db1, &dw2, &db2)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamVector,
    /// Regularized objective at the start of each epoch.
    pub history: Vec<f64>,
}

/// Full-batch gradient descent on `Σ w·L + (λ/2)‖θ‖²` from `init_params(cfg)`.
pub fn train_terms(input: &GcnInput, cfg: &GcnConfig, terms: &[LossTerm]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let shape = cfg.shape();
    let mut theta = init_params(cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let cache = forward(input, shape, &theta)?;
        let objective = weighted_loss(&cache, terms) + 0.5 * cfg.l2_reg * theta.dot(&theta);
        if !objective.is_finite() {
            return Err(Error::numerical(format!(
                "training diverged at epoch {epoch} (objective {objective}); lower learning_rate"
            )));
        }
        history.push(objective);
        let mut g = terms_gradient(input, shape, &theta, &cache, terms);
        g.axpy(cfg.l2_reg, &theta);
        theta.axpy(-cfg.learning_rate, &g);
    }
    if !theta.is_finite() {
        return Err(Error::numerical("training produced non-finite parameters"));
    }
    Ok(TrainOutcome {
        params: theta,
        history,
    })
}

/// Trains on the graph's training mask with its current labels.
pub fn train(g: &Graph, cfg: &GcnConfig) -> Result<TrainOutcome> {
    let train = &g.masks().train;
    if train.is_empty() {
        return Err(Error::invalid("training mask is empty"));
    }
    if cfg.input_dim != g.feature_dim() || cfg.n_classes != g.n_classes() {
        return Err(Error::invalid("GCN config does not match graph dimensions"));
    }
    let input = GcnInput::from_graph(g);
    let terms = label_terms(train, g.labels(), 1.0 / train.len() as f64);
    train_terms(&input, cfg, &terms)
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub classes: Vec<usize>,
    pub probs: Array2<f64>,
}

impl Prediction {
    pub fn accuracy(&self, labels: &[usize], nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        let hits = nodes
            .iter()
            .filter(|&&i| self.classes[i] == labels[i])
            .count();
        hits as f64 / nodes.len() as f64
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn predict(input: &GcnInput, shape: GcnShape, theta: &ParamVector) -> Result<Prediction> {
    let cache = forward(input, shape, theta)?;
    let classes = cache.probs.rows().into_iter().map(argmax).collect();
    Ok(Prediction {
        classes,
        probs: cache.probs,
    })
}

pub fn write_history(history: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_risk\n");
    for (e, r) in history.iter().enumerate() {
        out.push_str(&format!("{e},{r}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RoleMasks;
    use ndarray::array;

    fn toy_cache(logits: Array2<f64>) -> ForwardCache {
        let probs = row_softmax(&logits);
        let n = logits.nrows();
        ForwardCache {
            pre_activation: Array2::zeros((n, 1)),
            hidden: Array2::zeros((n, 1)),
            aggregated: Array2::zeros((n, 1)),
            logits,
            probs,
        }
    }

    #[test]
    fn param_count() {
        let shape = GcnShape {
            input_dim: 4,
            hidden_dim: 2,
            n_classes: 2,
        };
        assert_eq!(shape.n_params(), 16);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let mut cfg = GcnConfig::new(5, 3);
        cfg.init_seed = 4;
        let a = init_params(&cfg);
        assert_eq!(a, init_params(&cfg));
        let shape = cfg.shape();
        assert!(a.as_slice()[shape.b1_range()].iter().all(|&v| v == 0.0));
        assert!(a.as_slice()[shape.b2_range()].iter().all(|&v| v == 0.0));
        let bound = (6.0f64 / 21.0).sqrt();
        assert!(a.as_slice()[shape.w1_range()].iter().all(|v| v.abs() <= bound));
        cfg.init_seed = 5;
        assert_ne!(a, init_params(&cfg));
    }

    #[test]
    fn uniform_probs_at_zero_params() {
        let g = Graph::new(
            array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]],
            [(0, 1)],
            vec![0, 1, 2],
            3,
            RoleMasks::default(),
        )
        .unwrap();
        let cfg = GcnConfig::new(2, 3);
        let cache = forward(&GcnInput::from_graph(&g), cfg.shape(), &ParamVector::zeros(cfg.shape().n_params())).unwrap();
        assert!(cache.probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn uniform_loss_is_log_k() {
        let cache = toy_cache(Array2::zeros((1, 7)));
        assert!((term_loss(&cache, 0, LossTarget::Class(3)) - 7f64.ln()).abs() < 1e-12);
        assert!((7f64.ln() - 1.945_910_149).abs() < 1e-9);
    }

    #[test]
    fn confident_loss_vanishes() {
        let cache = toy_cache(array![[800.0, 0.0]]);
        assert!(term_loss(&cache, 0, LossTarget::Class(0)) < 1e-300);
        assert!(term_loss(&cache, 0, LossTarget::Class(1)).is_finite());
    }

    #[test]
    fn toy_losses_are_softplus() {
        // −log softmax([a, b])_y = softplus(other − own)
        let softplus = |x: f64| (1.0 + x.exp()).ln();
        let cache = toy_cache(array![[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]]);
        let theta = ParamVector::zeros(3);
        let r = risk(&cache, &[0, 1, 0], &[0, 1, 2], &theta, None);
        let want = [softplus(-1.0), softplus(-1.0), softplus(-2.0)];
        for (got, w) in r.losses.iter().zip(want) {
            assert!((got - w).abs() < 1e-14);
        }
        // 0.31326168751822286, 0.12692801104297263
        assert!((want[0] - 0.313_261_687_518_222_8).abs() < 1e-15);
        assert!((want[2] - 0.126_928_011_042_972_6).abs() < 1e-15);
        assert!((r.mean_loss - want.iter().sum::<f64>() / 3.0).abs() < 1e-14);
    }

    #[test]
    fn risk_includes_reg() {
        let cache = toy_cache(array![[0.3, -0.2]]);
        let theta = ParamVector::from_vec(vec![1.0, -2.0, 0.5]);
        let r = risk(&cache, &[1], &[0], &theta, Some(0.1));
        assert!((r.risk - (r.mean_loss + 0.05 * 5.25)).abs() < 1e-12);
    }

    #[test]
    fn not_class_loss_matches_definition() {
        let cache = toy_cache(array![[0.4, -1.2, 2.0]]);
        let f = cache.probs.row(0);
        let want = -(1.0 - f[2]).ln();
        assert!((term_loss(&cache, 0, LossTarget::NotClass(2)) - want).abs() < 1e-13);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(array![0.25, 0.25, 0.25, 0.25].view()), 0);
        assert_eq!(argmax(array![0.1, 0.5, 0.4].view()), 1);
        assert_eq!(argmax(array![0.2, 0.4, 0.4].view()), 1);
    }

    #[test]
    fn params_csv_round_trip() {
        let cfg = GcnConfig::new(3, 2);
        let theta = init_params(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.csv");
        theta.write_csv(cfg.shape(), &path).unwrap();
        let (shape, back) = ParamVector::read_csv(&path).unwrap();
        assert_eq!(shape, cfg.shape());
        assert_eq!(back, theta);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let g = Graph::new(
            array![[1.0, 0.0], [0.0, 1.0]],
            [(0, 1)],
            vec![0, 1],
            2,
            RoleMasks::new(vec![0, 1], vec![], vec![], vec![]),
        )
        .unwrap();
        let mut cfg = GcnConfig::for_graph(&g);
        cfg.epochs = 0;
        let out = train(&g, &cfg).unwrap();
        assert_eq!(out.params, init_params(&cfg));
        assert!(out.history.is_empty());
    }

    #[test]
    fn divergence_is_reported() {
        let g = Graph::new(
            array![[50.0, 0.0], [0.0, 50.0]],
            [],
            vec![0, 1],
            2,
            RoleMasks::new(vec![0, 1], vec![], vec![], vec![]),
        )
        .unwrap();
        let mut cfg = GcnConfig::for_graph(&g);
        cfg.learning_rate = 1e6;
        cfg.epochs = 50;
        assert!(matches!(train(&g, &cfg), Err(Error::Numerical(_))));
    }
}
