//! Recurrent dueling Q-network: two valid 3x3 convolutions, a dense
//! projection, an LSTM cell, a linear identity embedding concatenated to the
//! LSTM output, a dense layer and value/advantage heads combined as
//! `Q = V + A - mean(A)`.
//!
//! Parameters live in one flat vector so gradients and optimiser state share
//! its layout. Gradients are derived by hand and backpropagated through time
//! across a window of consecutive steps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{sigmoid, sqrt, tanh};
use crate::rng::SimRng;
use crate::world::Action;

use super::PolicyError;

pub const N_ACTIONS: usize = Action::COUNT;
pub const NETWORK_SCHEMA: &str = "predprey.qnet/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Observation channels (4 or 7).
    pub channels: usize,
    /// Observation side length; at least 5.
    pub obs_side: usize,
    pub conv1: usize,
    pub conv2: usize,
    /// Width of the dense projection and of the LSTM state.
    pub hidden: usize,
    pub id_dim: usize,
    pub id_embed: usize,
    pub post: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { channels: 4, obs_side: 11, conv1: 16, conv2: 32, hidden: 64, id_dim: 16, id_embed: 32, post: 64 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.obs_side < 5 {
            return Err(PolicyError::Shape("observation side must be at least 5"));
        }
        if [self.channels, self.conv1, self.conv2, self.hidden, self.post].contains(&0) {
            return Err(PolicyError::Shape("layer widths must be positive"));
        }
        Ok(())
    }

    fn s1(&self) -> usize {
        self.obs_side - 2
    }

    fn s2(&self) -> usize {
        self.obs_side - 4
    }

    /// Length of the flattened second convolution output.
    pub fn flat(&self) -> usize {
        self.conv2 * self.s2() * self.s2()
    }

    pub fn obs_len(&self) -> usize {
        self.channels * self.obs_side * self.obs_side
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum L {
    Conv1W,
    Conv1B,
    Conv2W,
    Conv2B,
    DenseW,
    DenseB,
    LstmWx,
    LstmWh,
    LstmB,
    EmbedW,
    EmbedB,
    PostW,
    PostB,
    ValueW,
    ValueB,
    AdvW,
    AdvB,
}

const LAYERS: [(L, &str); 17] = [
    (L::Conv1W, "conv1.weight"),
    (L::Conv1B, "conv1.bias"),
    (L::Conv2W, "conv2.weight"),
    (L::Conv2B, "conv2.bias"),
    (L::DenseW, "dense.weight"),
    (L::DenseB, "dense.bias"),
    (L::LstmWx, "lstm.weight_input"),
    (L::LstmWh, "lstm.weight_hidden"),
    (L::LstmB, "lstm.bias"),
    (L::EmbedW, "id_embed.weight"),
    (L::EmbedB, "id_embed.bias"),
    (L::PostW, "post.weight"),
    (L::PostB, "post.bias"),
    (L::ValueW, "value.weight"),
    (L::ValueB, "value.bias"),
    (L::AdvW, "advantage.weight"),
    (L::AdvB, "advantage.bias"),
];

fn shape(c: &NetworkConfig, l: L) -> Vec<usize> {
    let (h, e, p) = (c.hidden, c.id_embed, c.post);
    match l {
        L::Conv1W => vec![c.conv1, c.channels, 3, 3],
        L::Conv1B => vec![c.conv1],
        L::Conv2W => vec![c.conv2, c.conv1, 3, 3],
        L::Conv2B => vec![c.conv2],
        L::DenseW => vec![h, c.flat()],
        L::DenseB => vec![h],
        L::LstmWx => vec![4 * h, h],
        L::LstmWh => vec![4 * h, h],
        L::LstmB => vec![4 * h],
        L::EmbedW => vec![e, c.id_dim],
        L::EmbedB => vec![e],
        L::PostW => vec![p, h + e],
        L::PostB => vec![p],
        L::ValueW => vec![1, p],
        L::ValueB => vec![1],
        L::AdvW => vec![N_ACTIONS, p],
        L::AdvB => vec![N_ACTIONS],
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    offsets: [usize; 18],
}

impl Layout {
    fn new(c: &NetworkConfig) -> Self {
        let mut offsets = [0; 18];
        for (k, (l, _)) in LAYERS.iter().enumerate() {
            offsets[k + 1] = offsets[k] + shape(c, *l).iter().product::<usize>();
        }
        Layout { offsets }
    }

    #[inline]
    fn range(&self, l: L) -> core::ops::Range<usize> {
        let k = l as usize;
        self.offsets[k]..self.offsets[k + 1]
    }

    fn total(&self) -> usize {
        self.offsets[17]
    }
}

/// LSTM hidden and cell vectors. An empty state stands for all zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(h: usize) -> Self {
        RecurrentState { hidden: vec![0.0; h], cell: vec![0.0; h] }
    }

    pub fn is_zero(&self) -> bool {
        self.hidden.iter().chain(&self.cell).all(|&v| v == 0.0)
    }

    fn sized(&self, h: usize) -> RecurrentState {
        if self.hidden.len() == h && self.cell.len() == h {
            self.clone()
        } else {
            RecurrentState::zeros(h)
        }
    }
}

/// All learnable parameters of one network, flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetworkParams {
    config: NetworkConfig,
    layout: Layout,
    values: Vec<f64>,
}

/// One named tensor of a parameter checkpoint, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub schema: String,
    pub config: NetworkConfig,
    pub layers: Vec<LayerRecord>,
}

impl QNetworkParams {
    pub fn zeros(config: NetworkConfig) -> Self {
        let layout = Layout::new(&config);
        let values = vec![0.0; layout.total()];
        QNetworkParams { config, layout, values }
    }

    /// Uniform initialisation: He bounds for rectified layers, `1/sqrt(fan_in)`
    /// for the LSTM, embedding and heads; zero biases except a unit forget bias.
    pub fn init(config: NetworkConfig, rng: &mut SimRng) -> Self {
        let mut p = QNetworkParams::zeros(config);
        let c = p.config.clone();
        let fill = |p: &mut QNetworkParams, l: L, bound: f64, rng: &mut SimRng| {
            for v in &mut p.values[p.layout.range(l)] {
                *v = rng.random_range(-bound..bound);
            }
        };
        fill(&mut p, L::Conv1W, sqrt(6.0 / (c.channels * 9) as f64), rng);
        fill(&mut p, L::Conv2W, sqrt(6.0 / (c.conv1 * 9) as f64), rng);
        fill(&mut p, L::DenseW, sqrt(6.0 / c.flat() as f64), rng);
        let lb = 1.0 / sqrt(c.hidden as f64);
        fill(&mut p, L::LstmWx, lb, rng);
        fill(&mut p, L::LstmWh, lb, rng);
        fill(&mut p, L::EmbedW, 1.0 / sqrt(c.id_dim.max(1) as f64), rng);
        fill(&mut p, L::PostW, sqrt(6.0 / (c.hidden + c.id_embed) as f64), rng);
        fill(&mut p, L::ValueW, 1.0 / sqrt(c.post as f64), rng);
        fill(&mut p, L::AdvW, 1.0 / sqrt(c.post as f64), rng);
        let h = c.hidden;
        let b = p.layout.range(L::LstmB);
        for v in &mut p.values[b.start + h..b.start + 2 * h] {
            *v = 1.0;
        }
        p
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Names, shapes and flat ranges of every tensor, in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, core::ops::Range<usize>)> {
        LAYERS.iter().map(|(l, n)| (*n, shape(&self.config, *l), self.layout.range(*l))).collect()
    }

    /// Flat range of a named tensor.
    pub fn tensor_range(&self, name: &str) -> Option<core::ops::Range<usize>> {
        LAYERS.iter().find(|(_, n)| *n == name).map(|(l, _)| self.layout.range(*l))
    }

    #[inline]
    fn w(&self, l: L) -> &[f64] {
        &self.values[self.layout.range(l)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_checkpoint(&self) -> NetworkCheckpoint {
        NetworkCheckpoint {
            schema: NETWORK_SCHEMA.into(),
            config: self.config.clone(),
            layers: self
                .tensors()
                .into_iter()
                .map(|(name, shape, r)| LayerRecord { name: name.into(), shape, values: self.values[r].to_vec() })
                .collect(),
        }
    }

    /// Rebuilds parameters, rejecting unknown schemas and any tensor whose
    /// name, shape or length differs from what `config` implies.
    pub fn from_checkpoint(cp: &NetworkCheckpoint) -> Result<Self, PolicyError> {
        if cp.schema != NETWORK_SCHEMA {
            return Err(PolicyError::Checkpoint("unsupported network schema"));
        }
        cp.config.validate()?;
        let mut p = QNetworkParams::zeros(cp.config.clone());
        if cp.layers.len() != LAYERS.len() {
            return Err(PolicyError::Checkpoint("wrong number of tensors"));
        }
        for ((l, name), rec) in LAYERS.iter().zip(&cp.layers) {
            if rec.name != *name || rec.shape != shape(&p.config, *l) {
                return Err(PolicyError::Checkpoint("tensor name or shape mismatch"));
            }
            let r = p.layout.range(*l);
            if rec.values.len() != r.len() {
                return Err(PolicyError::Checkpoint("tensor length does not match its shape"));
            }
            p.values[r].copy_from_slice(&rec.values);
        }
        Ok(p)
    }
}

/// Intermediate values of one forward step, kept for backpropagation.
#[derive(Clone, Debug)]
struct StepCache {
    a1: Vec<f64>,
    a2: Vec<f64>,
    e: Vec<f64>,
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    p: Vec<f64>,
    q: [f64; N_ACTIONS],
}

fn conv3x3(input: &[f64], cin: usize, s: usize, w: &[f64], b: &[f64], cout: usize, out: &mut [f64]) {
    let so = s - 2;
    for o in 0..cout {
        let out_o = &mut out[o * so * so..(o + 1) * so * so];
        out_o.fill(b[o]);
        for ci in 0..cin {
            let inp = &input[ci * s * s..(ci + 1) * s * s];
            let wk = &w[(o * cin + ci) * 9..(o * cin + ci) * 9 + 9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = wk[ky * 3 + kx];
                    for y in 0..so {
                        let src = &inp[(y + ky) * s + kx..(y + ky) * s + kx + so];
                        let dst = &mut out_o[y * so..(y + 1) * so];
                        for (d, x) in dst.iter_mut().zip(src) {
                            *d += wv * x;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients of a valid 3x3 convolution and, when
/// `din` is given, the gradient with respect to its input.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    s: usize,
    w: &[f64],
    cout: usize,
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let so = s - 2;
    for o in 0..cout {
        let dz_o = &dz[o * so * so..(o + 1) * so * so];
        db[o] += dz_o.iter().sum::<f64>();
        for ci in 0..cin {
            let inp = &input[ci * s * s..(ci + 1) * s * s];
            let base = (o * cin + ci) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = 0.0;
                    for y in 0..so {
                        let src = &inp[(y + ky) * s + kx..(y + ky) * s + kx + so];
                        let g = &dz_o[y * so..(y + 1) * so];
                        acc += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    }
                    dw[base + ky * 3 + kx] += acc;
                    if let Some(din) = din.as_deref_mut() {
                        let wv = w[base + ky * 3 + kx];
                        let dplane = &mut din[ci * s * s..(ci + 1) * s * s];
                        for y in 0..so {
                            let dst = &mut dplane[(y + ky) * s + kx..(y + ky) * s + kx + so];
                            let g = &dz_o[y * so..(y + 1) * so];
                            for (d, gv) in dst.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out = W x + b` for a row-major `W` of shape `[out.len(), x.len()]`.
#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = b[i] + dot(&w[i * n..(i + 1) * n], x);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise without reassociating.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// `dw += g x^T`, `db += g`, and `dx += W^T g` when requested.
#[inline]
fn affine_backward(w: &[f64], x: &[f64], g: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let n = x.len();
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        db[i] += gi;
        for (d, xv) in dw[i * n..(i + 1) * n].iter_mut().zip(x) {
            *d += gi * xv;
        }
    }
    if let Some(dx) = dx {
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            for (d, wv) in dx.iter_mut().zip(&w[i * n..(i + 1) * n]) {
                *d += gi * wv;
            }
        }
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

impl QNetworkParams {
    fn check_inputs(&self, obs: &[f64], identity: &[f64]) -> Result<(), PolicyError> {
        if obs.len() != self.config.obs_len() {
            return Err(PolicyError::Shape("observation length does not match the encoder"));
        }
        if identity.len() != self.config.id_dim {
            return Err(PolicyError::Shape("identity length does not match the embedding"));
        }
        Ok(())
    }

    fn embed(&self, identity: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.config.id_embed];
        affine(self.w(L::EmbedW), self.w(L::EmbedB), identity, &mut u);
        u
    }

    fn step(&self, obs: &[f64], state: &RecurrentState, u: &[f64]) -> StepCache {
        let c = &self.config;
        let h = c.hidden;
        let mut a1 = vec![0.0; c.conv1 * c.s1() * c.s1()];
        conv3x3(obs, c.channels, c.obs_side, self.w(L::Conv1W), self.w(L::Conv1B), c.conv1, &mut a1);
        relu_inplace(&mut a1);
        let mut a2 = vec![0.0; c.flat()];
        conv3x3(&a1, c.conv1, c.s1(), self.w(L::Conv2W), self.w(L::Conv2B), c.conv2, &mut a2);
        relu_inplace(&mut a2);
        let mut e = vec![0.0; h];
        affine(self.w(L::DenseW), self.w(L::DenseB), &a2, &mut e);
        relu_inplace(&mut e);

        let mut gates = vec![0.0; 4 * h];
        affine(self.w(L::LstmWx), self.w(L::LstmB), &e, &mut gates);
        let wh = self.w(L::LstmWh);
        for (k, g) in gates.iter_mut().enumerate() {
            *g += dot(&wh[k * h..(k + 1) * h], &state.hidden);
        }
        for k in 0..h {
            gates[k] = sigmoid(gates[k]);
            gates[h + k] = sigmoid(gates[h + k]);
            gates[2 * h + k] = tanh(gates[2 * h + k]);
            gates[3 * h + k] = sigmoid(gates[3 * h + k]);
        }
        let mut cell = vec![0.0; h];
        let mut hid = vec![0.0; h];
        for k in 0..h {
            cell[k] = gates[h + k] * state.cell[k] + gates[k] * gates[2 * h + k];
            hid[k] = gates[3 * h + k] * tanh(cell[k]);
        }

        let mut z = Vec::with_capacity(h + c.id_embed);
        z.extend_from_slice(&hid);
        z.extend_from_slice(u);
        let mut p = vec![0.0; c.post];
        affine(self.w(L::PostW), self.w(L::PostB), &z, &mut p);
        relu_inplace(&mut p);
        let v = self.w(L::ValueB)[0] + dot(self.w(L::ValueW), &p);
        let mut adv = [0.0; N_ACTIONS];
        affine(self.w(L::AdvW), self.w(L::AdvB), &p, &mut adv);
        let mean = adv.iter().sum::<f64>() / N_ACTIONS as f64;
        let q = core::array::from_fn(|a| v + adv[a] - mean);
        StepCache {
            a1,
            a2,
            e,
            gates,
            c_prev: state.cell.clone(),
            h_prev: state.hidden.clone(),
            c: cell,
            h: hid,
            p,
            q,
        }
    }

    /// One step of the network: Q-values for the four actions and the next
    /// recurrent state. An empty `state` is read as zeros.
    pub fn forward(
        &self,
        obs: &[f64],
        state: &RecurrentState,
        identity: &[f64],
    ) -> Result<([f64; N_ACTIONS], RecurrentState), PolicyError> {
        self.check_inputs(obs, identity)?;
        let state = state.sized(self.config.hidden);
        let u = self.embed(identity);
        let s = self.step(obs, &state, &u);
        Ok((s.q, RecurrentState { hidden: s.h, cell: s.c }))
    }

    /// Runs a whole sequence from `init`, returning the Q-values of every step.
    pub fn forward_sequence(
        &self,
        obs: &[&[f64]],
        identity: &[f64],
        init: &RecurrentState,
    ) -> Result<Vec<[f64; N_ACTIONS]>, PolicyError> {
        let mut state = init.sized(self.config.hidden);
        let mut out = Vec::with_capacity(obs.len());
        for o in obs {
            let (q, next) = self.forward(o, &state, identity)?;
            out.push(q);
            state = next;
        }
        Ok(out)
    }
}

/// Squared-error target for one step of a window; inactive steps add nothing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdTarget {
    pub action: Action,
    pub target: f64,
    pub active: bool,
}

/// Flat gradient with the same layout as [`QNetworkParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &QNetworkParams) -> Self {
        Gradients { values: vec![0.0; p.len()] }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.values {
            *v *= k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Forward activations of a window, reusable for one backward pass.
#[derive(Clone, Debug)]
pub struct SequenceCache {
    steps: Vec<StepCache>,
    u: Vec<f64>,
}

impl SequenceCache {
    /// Q-values of every cached step.
    pub fn q(&self) -> Vec<[f64; N_ACTIONS]> {
        self.steps.iter().map(|s| s.q).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl QNetworkParams {
    /// Forward pass over consecutive observations from `init`, keeping every
    /// intermediate needed by [`QNetworkParams::backward_cached`].
    pub fn forward_cached(
        &self,
        obs: &[&[f64]],
        identity: &[f64],
        init: &RecurrentState,
    ) -> Result<SequenceCache, PolicyError> {
        for o in obs {
            self.check_inputs(o, identity)?;
        }
        let u = self.embed(identity);
        let mut state = init.sized(self.config.hidden);
        let mut steps = Vec::with_capacity(obs.len());
        for o in obs {
            let s = self.step(o, &state, &u);
            state = RecurrentState { hidden: s.h.clone(), cell: s.c.clone() };
            steps.push(s);
        }
        Ok(SequenceCache { steps, u })
    }

    /// Exact gradient of `sum_t active_t * (target_t - Q_t[action_t])^2` over a
    /// window of consecutive observations starting from `init`, accumulated
    /// into `grads`, backpropagated through time. Returns the loss.
    pub fn backward(
        &self,
        obs: &[&[f64]],
        identity: &[f64],
        init: &RecurrentState,
        targets: &[TdTarget],
        grads: &mut Gradients,
    ) -> Result<f64, PolicyError> {
        if obs.len() != targets.len() {
            return Err(PolicyError::Shape("one target per observation is required"));
        }
        let horizon = targets.iter().rposition(|t| t.active).map_or(0, |k| k + 1);
        let cache = self.forward_cached(&obs[..horizon], identity, init)?;
        self.backward_cached(&cache, &obs[..horizon], identity, &targets[..horizon], grads)
    }

    /// Backward pass over a cache built from the same `obs` and `identity`.
    /// `targets` may be shorter than the cache; later steps are ignored.
    pub fn backward_cached(
        &self,
        cache: &SequenceCache,
        obs: &[&[f64]],
        identity: &[f64],
        targets: &[TdTarget],
        grads: &mut Gradients,
    ) -> Result<f64, PolicyError> {
        if grads.values.len() != self.len() {
            return Err(PolicyError::Shape("gradient buffer does not match the parameters"));
        }
        if targets.len() > cache.steps.len() || obs.len() < targets.len() {
            return Err(PolicyError::Shape("more targets than cached steps"));
        }
        // Steps after the last active one cannot influence the loss.
        let horizon = targets.iter().rposition(|t| t.active).map_or(0, |k| k + 1);
        let caches = &cache.steps;
        let u = &cache.u;
        let mut loss = 0.0;
        let mut dqs = vec![[0.0; N_ACTIONS]; horizon];
        for (t, tg) in targets[..horizon].iter().enumerate() {
            if tg.active {
                let err = tg.target - caches[t].q[tg.action.index()];
                loss += err * err;
                dqs[t][tg.action.index()] = -2.0 * err;
            }
        }
        if !loss.is_finite() {
            return Err(PolicyError::NonFinite);
        }

        let c = &self.config;
        let h = c.hidden;
        let lay = &self.layout;
        let g = &mut grads.values;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut du = vec![0.0; c.id_embed];
        let mut dz = vec![0.0; h + c.id_embed];
        let mut dp = vec![0.0; c.post];
        let mut dgates = vec![0.0; 4 * h];
        let mut de = vec![0.0; h];
        let mut da2 = vec![0.0; c.flat()];
        let mut da1 = vec![0.0; c.conv1 * c.s1() * c.s1()];
        let mut zbuf = Vec::with_capacity(h + c.id_embed);
        for t in (0..horizon).rev() {
            let s = &caches[t];
            let dq = dqs[t];
            let dv: f64 = dq.iter().sum();
            let mean = dv / N_ACTIONS as f64;
            let dadv: [f64; N_ACTIONS] = core::array::from_fn(|a| dq[a] - mean);

            dp.fill(0.0);
            {
                let (gv, gvb) = split2(g, lay.range(L::ValueW), lay.range(L::ValueB));
                affine_backward(self.w(L::ValueW), &s.p, &[dv], gv, gvb, Some(&mut dp));
            }
            {
                let (ga, gab) = split2(g, lay.range(L::AdvW), lay.range(L::AdvB));
                affine_backward(self.w(L::AdvW), &s.p, &dadv, ga, gab, Some(&mut dp));
            }
            for (d, &pv) in dp.iter_mut().zip(&s.p) {
                if pv <= 0.0 {
                    *d = 0.0;
                }
            }
            zbuf.clear();
            zbuf.extend_from_slice(&s.h);
            zbuf.extend_from_slice(u);
            dz.fill(0.0);
            {
                let (gw, gb) = split2(g, lay.range(L::PostW), lay.range(L::PostB));
                affine_backward(self.w(L::PostW), &zbuf, &dp, gw, gb, Some(&mut dz));
            }
            for k in 0..c.id_embed {
                du[k] += dz[h + k];
            }

            // LSTM cell
            let (gi, gf, gg, go) = (&s.gates[..h], &s.gates[h..2 * h], &s.gates[2 * h..3 * h], &s.gates[3 * h..]);
            for k in 0..h {
                let dh = dz[k] + dh_next[k];
                let tc = tanh(s.c[k]);
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * go[k] * (1.0 - tc * tc);
                let d_i = dc * gg[k];
                let d_g = dc * gi[k];
                let d_f = dc * s.c_prev[k];
                dc_next[k] = dc * gf[k];
                dgates[k] = d_i * gi[k] * (1.0 - gi[k]);
                dgates[h + k] = d_f * gf[k] * (1.0 - gf[k]);
                dgates[2 * h + k] = d_g * (1.0 - gg[k] * gg[k]);
                dgates[3 * h + k] = d_o * go[k] * (1.0 - go[k]);
            }
            de.fill(0.0);
            {
                let (gw, gb) = split2(g, lay.range(L::LstmWx), lay.range(L::LstmB));
                affine_backward(self.w(L::LstmWx), &s.e, &dgates, gw, gb, Some(&mut de));
            }
            dh_next.fill(0.0);
            {
                let wh = self.w(L::LstmWh);
                let gw = &mut g[lay.range(L::LstmWh)];
                for (r, &gr) in dgates.iter().enumerate() {
                    if gr == 0.0 {
                        continue;
                    }
                    for k in 0..h {
                        gw[r * h + k] += gr * s.h_prev[k];
                        dh_next[k] += gr * wh[r * h + k];
                    }
                }
            }

            for (d, &ev) in de.iter_mut().zip(&s.e) {
                if ev <= 0.0 {
                    *d = 0.0;
                }
            }
            da2.fill(0.0);
            {
                let (gw, gb) = split2(g, lay.range(L::DenseW), lay.range(L::DenseB));
                affine_backward(self.w(L::DenseW), &s.a2, &de, gw, gb, Some(&mut da2));
            }
            for (d, &av) in da2.iter_mut().zip(&s.a2) {
                if av <= 0.0 {
                    *d = 0.0;
                }
            }
            da1.fill(0.0);
            {
                let (gw, gb) = split2(g, lay.range(L::Conv2W), lay.range(L::Conv2B));
                conv3x3_backward(&s.a1, c.conv1, c.s1(), self.w(L::Conv2W), c.conv2, &da2, gw, gb, Some(&mut da1));
            }
            for (d, &av) in da1.iter_mut().zip(&s.a1) {
                if av <= 0.0 {
                    *d = 0.0;
                }
            }
            {
                let (gw, gb) = split2(g, lay.range(L::Conv1W), lay.range(L::Conv1B));
                conv3x3_backward(obs[t], c.channels, c.obs_side, self.w(L::Conv1W), c.conv1, &da1, gw, gb, None);
            }
        }
        {
            let (gw, gb) = split2(g, lay.range(L::EmbedW), lay.range(L::EmbedB));
            affine_backward(self.w(L::EmbedW), identity, &du, gw, gb, None);
        }
        Ok(loss)
    }
}

/// Disjoint mutable views of two ranges of `v`; `a` must precede `b`.
fn split2(v: &mut [f64], a: core::ops::Range<usize>, b: core::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = v.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}
