//! Feed-forward networks with analytic backpropagation and Adam.
//!
//! Parameters of an [`Mlp`] live in one flat buffer. Layer `l` occupies a
//! weight block of `out * in` values (row-major, one row per output unit)
//! followed by `out` biases. Gradients use the same layout.
//!
//! Forward passes over a batch are pure. Training passes return a [`Tape`]
//! holding every layer's activations, which [`Mlp::backward`] consumes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid network file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub const fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, activation }
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub grad_clip_norm: f64,
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimConfig {
    pub fn critic() -> Self {
        Self { l2: 2e-4, ..Self::actor() }
    }

    pub fn actor() -> Self {
        Self { lr: 1e-3, grad_clip_norm: 1.0, l2: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0) {
            return Err("lr must be positive".into());
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err("grad_clip_norm must be positive".into());
        }
        if !(self.l2 >= 0.0) {
            return Err("l2 must be non-negative".into());
        }
        Ok(())
    }
}

/// First and second Adam moments plus the shared step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    specs: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    pub adam: AdamState,
}

/// Activations recorded by a training forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape always holds the input")
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as [`Mlp::params`].
    pub params: Vec<f64>,
    /// `batch * in_dim`, present when requested.
    pub input: Option<Vec<f64>>,
}

/// `c = a * b + beta * c` for row-major `m x k` times `k x n` given by strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() >= m * n);
    // SAFETY: the asserted extents keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Zero-parameter network; fails if consecutive dims do not chain.
    pub fn zeros(specs: &[LayerSpec]) -> Result<Self, NeuralError> {
        if specs.is_empty() {
            return Err(NeuralError::Shape { expected: 1, got: 0 });
        }
        let mut offsets = Vec::with_capacity(specs.len());
        let mut total = 0;
        for (i, s) in specs.iter().enumerate() {
            if s.in_dim == 0 || s.out_dim == 0 {
                return Err(NeuralError::Shape { expected: 1, got: 0 });
            }
            if i > 0 && specs[i - 1].out_dim != s.in_dim {
                return Err(NeuralError::Shape { expected: specs[i - 1].out_dim, got: s.in_dim });
            }
            offsets.push(total);
            total += s.param_count();
        }
        Ok(Self { specs: specs.to_vec(), offsets, params: vec![0.0; total], adam: AdamState::default() })
    }

    /// He-uniform weights for relu layers, Xavier-uniform otherwise, zero biases.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(specs)?;
        let mut rng = SimRng::new(seed);
        for l in 0..net.specs.len() {
            let s = net.specs[l];
            let bound = match s.activation {
                Activation::Relu => (6.0 / s.in_dim as f64).sqrt(),
                _ => (6.0 / (s.in_dim + s.out_dim) as f64).sqrt(),
            };
            let off = net.offsets[l];
            for w in &mut net.params[off..off + s.out_dim * s.in_dim] {
                *w = rng.uniform(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn in_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight block and bias vector of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let s = self.specs[l];
        let off = self.offsets[l];
        let nw = s.out_dim * s.in_dim;
        (&self.params[off..off + nw], &self.params[off + nw..off + nw + s.out_dim])
    }

    fn check_input(&self, input: &[f64], batch: usize) -> Result<(), NeuralError> {
        let expected = batch * self.in_dim();
        if input.len() != expected {
            return Err(NeuralError::Shape { expected, got: input.len() });
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &[f64], batch: usize) -> Vec<f64> {
        let s = self.specs[l];
        let (w, b) = self.layer(l);
        let mut y = Vec::with_capacity(batch * s.out_dim);
        for _ in 0..batch {
            y.extend_from_slice(b);
        }
        gemm(batch, s.in_dim, s.out_dim, x, (s.in_dim, 1), w, (1, s.in_dim), 1.0, &mut y);
        for v in &mut y {
            *v = s.activation.apply(*v);
        }
        y
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.forward_batch(input, 1)
    }

    /// Forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Vec<f64>, NeuralError> {
        self.check_input(input, batch)?;
        let mut x = input.to_vec();
        for l in 0..self.specs.len() {
            x = self.layer_forward(l, &x, batch);
        }
        Ok(x)
    }

    /// Forward pass that records activations for [`Mlp::backward`].
    pub fn forward_train(&self, input: &[f64], batch: usize) -> Result<Tape, NeuralError> {
        self.check_input(input, batch)?;
        let mut acts = Vec::with_capacity(self.specs.len() + 1);
        acts.push(input.to_vec());
        for l in 0..self.specs.len() {
            let y = self.layer_forward(l, &acts[l], batch);
            acts.push(y);
        }
        Ok(Tape { batch, acts })
    }

    /// Gradients of `sum(output .* upstream)` with respect to every
    /// parameter and, if `want_input`, the input.
    pub fn backward(&self, tape: &Tape, upstream: &[f64], want_input: bool) -> Result<Gradients, NeuralError> {
        self.backward_impl(tape, upstream, None, want_input)
    }

    /// Pre-activation values of the output layer for a recorded pass.
    pub fn output_pre_activation(&self, tape: &Tape) -> Result<Vec<f64>, NeuralError> {
        let l = self.specs.len() - 1;
        let s = self.specs[l];
        let x = &tape.acts[l];
        if tape.acts.len() != self.specs.len() + 1 || x.len() != tape.batch * s.in_dim {
            return Err(NeuralError::Shape { expected: tape.batch * s.in_dim, got: x.len() });
        }
        let (w, b) = self.layer(l);
        let mut z: Vec<f64> = b.iter().copied().cycle().take(tape.batch * s.out_dim).collect();
        gemm(tape.batch, s.in_dim, s.out_dim, x, (s.in_dim, 1), w, (1, s.in_dim), 1.0, &mut z);
        Ok(z)
    }

    /// As [`Mlp::backward`], with `pre_upstream` added to the gradient with
    /// respect to the output layer's pre-activation.
    pub fn backward_with_pre(
        &self,
        tape: &Tape,
        upstream: &[f64],
        pre_upstream: &[f64],
        want_input: bool,
    ) -> Result<Gradients, NeuralError> {
        if pre_upstream.len() != upstream.len() {
            return Err(NeuralError::Shape { expected: upstream.len(), got: pre_upstream.len() });
        }
        self.backward_impl(tape, upstream, Some(pre_upstream), want_input)
    }

    fn backward_impl(
        &self,
        tape: &Tape,
        upstream: &[f64],
        pre_upstream: Option<&[f64]>,
        want_input: bool,
    ) -> Result<Gradients, NeuralError> {
        let n = tape.batch;
        let expected = n * self.out_dim();
        if upstream.len() != expected {
            return Err(NeuralError::Shape { expected, got: upstream.len() });
        }
        if tape.acts.len() != self.specs.len() + 1 || tape.acts[0].len() != n * self.in_dim() {
            return Err(NeuralError::Shape { expected: self.specs.len() + 1, got: tape.acts.len() });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.to_vec();
        let mut input_grad = None;
        for l in (0..self.specs.len()).rev() {
            let s = self.specs[l];
            let y = &tape.acts[l + 1];
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d *= s.activation.slope(yv);
            }
            if let (Some(extra), true) = (pre_upstream, l + 1 == self.specs.len()) {
                for (d, e) in delta.iter_mut().zip(extra) {
                    *d += e;
                }
            }
            let x = &tape.acts[l];
            let off = self.offsets[l];
            let nw = s.out_dim * s.in_dim;
            let (gw, gb) = grads[off..off + nw + s.out_dim].split_at_mut(nw);
            gemm(s.out_dim, n, s.in_dim, &delta, (1, s.out_dim), x, (s.in_dim, 1), 0.0, gw);
            for row in delta.chunks_exact(s.out_dim) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 || want_input {
                let (w, _) = self.layer(l);
                let mut dx = vec![0.0; n * s.in_dim];
                gemm(n, s.out_dim, s.in_dim, &delta, (s.out_dim, 1), w, (s.in_dim, 1), 0.0, &mut dx);
                if l == 0 {
                    input_grad = Some(dx);
                } else {
                    delta = dx;
                }
            }
        }
        Ok(Gradients { params: grads, input: input_grad })
    }

    /// One Adam step on this network alone.
    pub fn adam_step(&mut self, grads: &[f64], cfg: &OptimConfig) -> Result<(), NeuralError> {
        adam_step_group(&mut [self], &[grads], cfg)
    }

    /// `self <- tau * online + (1 - tau) * self`, parameters only.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<(), NeuralError> {
        if online.specs != self.specs {
            return Err(NeuralError::Shape { expected: self.params.len(), got: online.params.len() });
        }
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    const MAGIC: &'static [u8; 4] = b"EVNN";
    const VERSION: u32 = 1;

    /// Versioned little-endian dump: magic, version, layer manifest, params.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NeuralError> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.specs.len() as u32).to_le_bytes())?;
        for s in &self.specs {
            w.write_all(&(s.in_dim as u32).to_le_bytes())?;
            w.write_all(&(s.out_dim as u32).to_le_bytes())?;
            w.write_all(&[s.activation.code()])?;
        }
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NeuralError> {
        fn u32_of<R: Read>(r: &mut R) -> Result<u32, NeuralError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(NeuralError::Format("bad magic".into()));
        }
        let version = u32_of(r)?;
        if version != Self::VERSION {
            return Err(NeuralError::Format(format!("unsupported version {version}")));
        }
        let n_layers = u32_of(r)? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(NeuralError::Format(format!("implausible layer count {n_layers}")));
        }
        let mut specs = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_dim = u32_of(r)? as usize;
            let out_dim = u32_of(r)? as usize;
            let mut c = [0u8; 1];
            r.read_exact(&mut c)?;
            let activation =
                Activation::from_code(c[0]).ok_or_else(|| NeuralError::Format(format!("activation code {}", c[0])))?;
            specs.push(LayerSpec { in_dim, out_dim, activation });
        }
        let mut net = Self::zeros(&specs)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if count != net.params.len() {
            return Err(NeuralError::Format(format!("parameter count {count} does not match manifest")));
        }
        for p in &mut net.params {
            r.read_exact(&mut b8)?;
            *p = f64::from_le_bytes(b8);
        }
        if !net.is_finite() {
            return Err(NeuralError::Format("non-finite parameter".into()));
        }
        Ok(net)
    }
}

/// One Adam step over several networks treated as a single parameter
/// vector: L2 is added per parameter, then the global gradient norm across
/// all networks is clipped to `cfg.grad_clip_norm`.
pub fn adam_step_group(nets: &mut [&mut Mlp], grads: &[&[f64]], cfg: &OptimConfig) -> Result<(), NeuralError> {
    if nets.len() != grads.len() {
        return Err(NeuralError::Shape { expected: nets.len(), got: grads.len() });
    }
    let mut total: Vec<Vec<f64>> = Vec::with_capacity(nets.len());
    let mut sq = 0.0;
    for (net, g) in nets.iter().zip(grads) {
        if g.len() != net.params.len() {
            return Err(NeuralError::Shape { expected: net.params.len(), got: g.len() });
        }
        let eff: Vec<f64> = g.iter().zip(&net.params).map(|(&gi, &p)| gi + cfg.l2 * p).collect();
        sq += eff.iter().map(|x| x * x).sum::<f64>();
        total.push(eff);
    }
    let norm = sq.sqrt();
    let scale = if norm > cfg.grad_clip_norm { cfg.grad_clip_norm / norm } else { 1.0 };
    for (net, mut eff) in nets.iter_mut().zip(total) {
        if scale != 1.0 {
            for g in &mut eff {
                *g *= scale;
            }
        }
        let n = net.params.len();
        let st = &mut net.adam;
        if st.m.len() != n {
            st.m = vec![0.0; n];
            st.v = vec![0.0; n];
        }
        st.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(st.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(st.t as i32);
        for i in 0..n {
            let g = eff[i];
            st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
            st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = st.m[i] / bc1;
            let vhat = st.v[i] / bc2;
            net.params[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 1;

pub fn actor_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(STATE_DIM, 64, Activation::Relu),
        LayerSpec::new(64, 32, Activation::Relu),
        LayerSpec::new(32, ACTION_DIM, Activation::Sigmoid),
    ]
}

pub fn critic_state_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(STATE_DIM, 64, Activation::Relu),
        LayerSpec::new(64, 64, Activation::Relu),
        LayerSpec::new(64, 32, Activation::Relu),
    ]
}

pub fn critic_action_specs() -> Vec<LayerSpec> {
    vec![LayerSpec::new(ACTION_DIM, 64, Activation::Relu)]
}

pub fn critic_merged_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(96, 64, Activation::Relu),
        LayerSpec::new(64, 32, Activation::Relu),
        LayerSpec::new(32, 1, Activation::Linear),
    ]
}

/// Q-network: separate state and action paths, concatenated (state
/// features first) into a merged path with a scalar linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub state_path: Mlp,
    pub action_path: Mlp,
    pub merged: Mlp,
}

#[derive(Debug, Clone)]
pub struct CriticTape {
    state: Tape,
    action: Tape,
    merged: Tape,
}

impl CriticTape {
    pub fn output(&self) -> &[f64] {
        self.merged.output()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticGradients {
    pub state_path: Vec<f64>,
    pub action_path: Vec<f64>,
    pub merged: Vec<f64>,
    /// dQ/da per batch element.
    pub action_input: Vec<f64>,
}

impl Critic {
    pub fn new(state_path: Mlp, action_path: Mlp, merged: Mlp) -> Result<Self, NeuralError> {
        let cat = state_path.out_dim() + action_path.out_dim();
        if merged.in_dim() != cat {
            return Err(NeuralError::Shape { expected: cat, got: merged.in_dim() });
        }
        if merged.out_dim() != 1 {
            return Err(NeuralError::Shape { expected: 1, got: merged.out_dim() });
        }
        Ok(Self { state_path, action_path, merged })
    }

    /// Standard topology, each path seeded from `seed`.
    pub fn init(seed: u64) -> Self {
        let s = Mlp::init(&critic_state_specs(), crate::rng::splitmix64(seed ^ 1)).expect("static topology");
        let a = Mlp::init(&critic_action_specs(), crate::rng::splitmix64(seed ^ 2)).expect("static topology");
        let m = Mlp::init(&critic_merged_specs(), crate::rng::splitmix64(seed ^ 3)).expect("static topology");
        Self::new(s, a, m).expect("static topology")
    }

    pub fn param_count(&self) -> usize {
        self.state_path.param_count() + self.action_path.param_count() + self.merged.param_count()
    }

    fn concat(&self, fs: &[f64], fa: &[f64], batch: usize) -> Vec<f64> {
        let ds = self.state_path.out_dim();
        let da = self.action_path.out_dim();
        let mut cat = Vec::with_capacity(batch * (ds + da));
        for (rs, ra) in fs.chunks_exact(ds).zip(fa.chunks_exact(da)) {
            cat.extend_from_slice(rs);
            cat.extend_from_slice(ra);
        }
        cat
    }

    pub fn forward_batch(&self, states: &[f64], actions: &[f64], batch: usize) -> Result<Vec<f64>, NeuralError> {
        let fs = self.state_path.forward_batch(states, batch)?;
        let fa = self.action_path.forward_batch(actions, batch)?;
        self.merged.forward_batch(&self.concat(&fs, &fa, batch), batch)
    }

    pub fn forward_train(&self, states: &[f64], actions: &[f64], batch: usize) -> Result<CriticTape, NeuralError> {
        let state = self.state_path.forward_train(states, batch)?;
        let action = self.action_path.forward_train(actions, batch)?;
        let cat = self.concat(state.output(), action.output(), batch);
        let merged = self.merged.forward_train(&cat, batch)?;
        Ok(CriticTape { state, action, merged })
    }

    /// Gradients of `sum(Q .* upstream)`.
    pub fn backward(&self, tape: &CriticTape, upstream: &[f64]) -> Result<CriticGradients, NeuralError> {
        let gm = self.merged.backward(&tape.merged, upstream, true)?;
        let dcat = gm.input.expect("requested");
        let ds = self.state_path.out_dim();
        let da = self.action_path.out_dim();
        let mut up_s = Vec::with_capacity(tape.merged.batch * ds);
        let mut up_a = Vec::with_capacity(tape.merged.batch * da);
        for row in dcat.chunks_exact(ds + da) {
            up_s.extend_from_slice(&row[..ds]);
            up_a.extend_from_slice(&row[ds..]);
        }
        let gs = self.state_path.backward(&tape.state, &up_s, false)?;
        let ga = self.action_path.backward(&tape.action, &up_a, true)?;
        Ok(CriticGradients {
            state_path: gs.params,
            action_path: ga.params,
            merged: gm.params,
            action_input: ga.input.expect("requested"),
        })
    }

    pub fn adam_step(&mut self, g: &CriticGradients, cfg: &OptimConfig) -> Result<(), NeuralError> {
        adam_step_group(
            &mut [&mut self.state_path, &mut self.action_path, &mut self.merged],
            &[&g.state_path, &g.action_path, &g.merged],
            cfg,
        )
    }

    pub fn soft_update_from(&mut self, online: &Critic, tau: f64) -> Result<(), NeuralError> {
        self.state_path.soft_update_from(&online.state_path, tau)?;
        self.action_path.soft_update_from(&online.action_path, tau)?;
        self.merged.soft_update_from(&online.merged, tau)
    }

    pub fn is_finite(&self) -> bool {
        self.state_path.is_finite() && self.action_path.is_finite() && self.merged.is_finite()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NeuralError> {
        self.state_path.write_to(w)?;
        self.action_path.write_to(w)?;
        self.merged.write_to(w)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NeuralError> {
        let s = Mlp::read_from(r)?;
        let a = Mlp::read_from(r)?;
        let m = Mlp::read_from(r)?;
        Self::new(s, a, m)
    }
}

pub fn actor_init(seed: u64) -> Mlp {
    Mlp::init(&actor_specs(), seed).expect("static topology")
}
