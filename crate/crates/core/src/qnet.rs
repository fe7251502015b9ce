//! Autoregressive decomposed Q-network.
//!
//! Every decision step feeds `[state, token(previous bin)]` through an
//! embedding, a stack of selective SSM blocks and a LeakyReLU head that emits
//! one Q-value per bin. The hidden state threads through all K decisions of a
//! generation and on into the next generation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{OptimizationState, Policy, Trajectory, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::ssm::{SsmCache, SsmConfig, SsmHiddenState, SsmParameters};
use crate::tensor::Matrix;

/// Width of the block output fed to the Q head.
pub const HEAD_WIDTH: usize = 16;
pub const LEAKY_SLOPE: f64 = 0.01;
const MAGIC: &str = "DACQ-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QConfig {
    /// Number of controlled hyper-parameters.
    pub k: usize,
    /// Bins per hyper-parameter.
    pub m: usize,
    pub d_model: usize,
    pub d_state: usize,
    pub depth: usize,
}

impl QConfig {
    pub fn new(k: usize, m: usize) -> Self {
        Self { k, m, d_model: 64, d_state: 16, depth: 1 }
    }

    /// Token width: enough bits for `m - 1` plus a leading bit reserved for START.
    pub fn token_bits(&self) -> usize {
        token_bits(self.m)
    }

    pub fn input_dim(&self) -> usize {
        NUM_FEATURES + self.token_bits()
    }

    pub fn ssm(&self) -> SsmConfig {
        SsmConfig { d_model: self.d_model, d_state: self.d_state }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m < 2 || self.d_model == 0 || self.d_state == 0 || self.depth == 0 {
            return Err(Error::InvalidParameter(format!("degenerate model config {self:?}")));
        }
        Ok(())
    }
}

pub fn token_bits(m: usize) -> usize {
    let mut bits = 0;
    while (1usize << bits) < m {
        bits += 1;
    }
    bits + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Start,
    Bin(usize),
}

/// Big-endian binary code of a bin; START is all ones.
pub fn tokenize(token: Token, m: usize) -> Result<Vec<f64>> {
    let bits = token_bits(m);
    match token {
        Token::Start => Ok(vec![1.0; bits]),
        Token::Bin(b) if b < m => Ok((0..bits).rev().map(|k| ((b >> k) & 1) as f64).collect()),
        Token::Bin(b) => Err(Error::BinOutOfRange { dim: 0, bin: b, limit: m }),
    }
}

pub fn detokenize(code: &[f64]) -> Token {
    if code.iter().all(|&v| v == 1.0) {
        return Token::Start;
    }
    Token::Bin(code.iter().fold(0, |acc, &v| (acc << 1) | usize::from(v == 1.0)))
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn leaky_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Index of the largest of the first `limit` entries; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], limit: usize) -> usize {
    let mut best = 0;
    for j in 1..limit.min(q.len()) {
        if q[j] > q[best] {
            best = j;
        }
    }
    best
}

/// Hidden state of every block.
#[derive(Clone, Debug, PartialEq)]
pub struct QHidden {
    pub layers: Vec<SsmHiddenState>,
}

impl QHidden {
    pub fn zeros(config: &QConfig) -> Self {
        Self { layers: (0..config.depth).map(|_| SsmHiddenState::zeros(config.ssm())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(SsmHiddenState::is_finite)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub config: QConfig,
    pub w_emb: Matrix,
    pub b_emb: Matrix,
    pub blocks: Vec<SsmParameters>,
    pub w_proj: Matrix,
    pub b_proj: Matrix,
    pub w_head: Matrix,
    pub b_head: Matrix,
}

/// Forward intermediates for a teacher-forced sequence.
pub struct QCache {
    inputs: Vec<Vec<f64>>,
    blocks: Vec<SsmCache>,
    block_out: Vec<Vec<f64>>,
    proj: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl QNetwork {
    pub fn init(config: QConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let inv = |fan: usize| 1.0 / (fan as f64).sqrt();
        let inp = config.input_dim();
        Ok(Self {
            config,
            w_emb: Matrix::uniform(d, inp, inv(inp), rng),
            b_emb: Matrix::uniform(d, 1, inv(inp), rng),
            blocks: (0..config.depth).map(|_| SsmParameters::init(config.ssm(), rng)).collect(),
            w_proj: Matrix::uniform(HEAD_WIDTH, d, inv(d), rng),
            b_proj: Matrix::uniform(HEAD_WIDTH, 1, inv(d), rng),
            w_head: Matrix::uniform(config.m, HEAD_WIDTH, inv(HEAD_WIDTH), rng),
            b_head: Matrix::uniform(config.m, 1, inv(HEAD_WIDTH), rng),
        })
    }

    pub fn zeros(config: QConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        Ok(Self {
            config,
            w_emb: Matrix::zeros(d, config.input_dim()),
            b_emb: Matrix::zeros(d, 1),
            blocks: (0..config.depth).map(|_| SsmParameters::zeros(config.ssm())).collect(),
            w_proj: Matrix::zeros(HEAD_WIDTH, d),
            b_proj: Matrix::zeros(HEAD_WIDTH, 1),
            w_head: Matrix::zeros(config.m, HEAD_WIDTH),
            b_head: Matrix::zeros(config.m, 1),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    /// Named tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("w_emb".to_string(), &self.w_emb), ("b_emb".to_string(), &self.b_emb)];
        for (l, b) in self.blocks.iter().enumerate() {
            out.extend(b.tensors().into_iter().map(|(n, t)| (format!("block{l}.{n}"), t)));
        }
        out.extend([
            ("w_proj".to_string(), &self.w_proj),
            ("b_proj".to_string(), &self.b_proj),
            ("w_head".to_string(), &self.w_head),
            ("b_head".to_string(), &self.b_head),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![("w_emb".to_string(), &mut self.w_emb), ("b_emb".to_string(), &mut self.b_emb)];
        for (l, b) in self.blocks.iter_mut().enumerate() {
            out.extend(b.tensors_mut().into_iter().map(|(n, t)| (format!("block{l}.{n}"), t)));
        }
        out.extend([
            ("w_proj".to_string(), &mut self.w_proj),
            ("b_proj".to_string(), &mut self.b_proj),
            ("w_head".to_string(), &mut self.w_head),
            ("b_head".to_string(), &mut self.b_head),
        ]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.data.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), got: flat.len() });
        }
        let mut off = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn input(&self, state: &OptimizationState, token: Token) -> Result<Vec<f64>> {
        if state.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state fed to the Q-network".into()));
        }
        let mut v = state.0.to_vec();
        v.extend(tokenize(token, self.config.m)?);
        Ok(v)
    }

    fn embed(&self, input: &[f64]) -> Vec<f64> {
        let mut e = self.w_emb.matvec(input);
        for (a, b) in e.iter_mut().zip(&self.b_emb.data) {
            *a += b;
        }
        e
    }

    /// Returns (projection, head pre-activation, Q-values).
    fn head(&self, block_out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut o = self.w_proj.matvec(block_out);
        for (a, b) in o.iter_mut().zip(&self.b_proj.data) {
            *a += b;
        }
        let mut pre = self.w_head.matvec(&o);
        for (a, b) in pre.iter_mut().zip(&self.b_head.data) {
            *a += b;
        }
        let q = pre.iter().map(|&v| leaky(v)).collect();
        (o, pre, q)
    }

    /// One decision step; `h` is advanced in place.
    pub fn q_step(&self, state: &OptimizationState, token: Token, h: &mut QHidden) -> Result<Vec<f64>> {
        let mut x = self.embed(&self.input(state, token)?);
        for (block, hs) in self.blocks.iter().zip(h.layers.iter_mut()) {
            x = block.step(hs, &x)?;
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("hidden state".into()));
        }
        Ok(self.head(&x).2)
    }

    /// Greedy autoregressive decoding of one generation's K bins.
    pub fn decode_episode_actions(
        &self,
        state: &OptimizationState,
        limits: &[usize],
        h: &mut QHidden,
    ) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
        if limits.len() != self.config.k {
            return Err(Error::ShapeMismatch(format!("{} limits for K = {}", limits.len(), self.config.k)));
        }
        let mut token = Token::Start;
        let mut bins = Vec::with_capacity(limits.len());
        let mut slices = Vec::with_capacity(limits.len());
        for &limit in limits {
            let q = self.q_step(state, token, h)?;
            let b = masked_argmax(&q, limit);
            token = Token::Bin(b);
            bins.push(b);
            slices.push(q);
        }
        Ok((bins, slices))
    }

    fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.meta.k != self.config.k || traj.meta.m != self.config.m {
            return Err(Error::ConfigMismatch(format!(
                "trajectory has K = {}, M = {}; model has K = {}, M = {}",
                traj.meta.k, traj.meta.m, self.config.k, self.config.m
            )));
        }
        Ok(())
    }

    /// Model inputs under teacher forcing: `T·K` rows, START before each generation's first bin.
    pub fn teacher_inputs(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        self.check_trajectory(traj)?;
        let mut rows = Vec::with_capacity(traj.steps.len() * self.config.k);
        for step in &traj.steps {
            if step.actions.len() != self.config.k {
                return Err(Error::ShapeMismatch(format!("{} actions for K = {}", step.actions.len(), self.config.k)));
            }
            let mut token = Token::Start;
            for &a in &step.actions {
                rows.push(self.input(&step.state, token)?);
                token = Token::Bin(a);
            }
        }
        Ok(rows)
    }

    /// Teacher-forced Q-values, one row per decision (`T·K` rows of `M`).
    pub fn q_values_for_trajectory(&self, traj: &Trajectory) -> Result<(Vec<Vec<f64>>, QCache)> {
        let inputs = self.teacher_inputs(traj)?;
        let mut x: Vec<Vec<f64>> = inputs.iter().map(|i| self.embed(i)).collect();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (ys, _, cache) = block.forward_sequential(&SsmHiddenState::zeros(block.config), &x)?;
            caches.push(cache);
            x = ys;
        }
        let mut proj = Vec::with_capacity(x.len());
        let mut pre = Vec::with_capacity(x.len());
        let mut qs = Vec::with_capacity(x.len());
        for out in &x {
            let (o, p, q) = self.head(out);
            proj.push(o);
            pre.push(p);
            qs.push(q);
        }
        Ok((qs, QCache { inputs, blocks: caches, block_out: x, proj, pre }))
    }

    /// Parameter gradients given `dL/dQ` for every row of a teacher-forced pass.
    pub fn backward(&self, cache: &QCache, dq: &[Vec<f64>]) -> Result<QNetwork> {
        if dq.len() != cache.pre.len() {
            return Err(Error::ShapeMismatch(format!("{} gradient rows for {} outputs", dq.len(), cache.pre.len())));
        }
        let mut g = self.zeros_like();
        let mut dout = Vec::with_capacity(dq.len());
        for (t, dqt) in dq.iter().enumerate() {
            let dpre: Vec<f64> = dqt.iter().zip(&cache.pre[t]).map(|(d, p)| d * leaky_grad(*p)).collect();
            g.w_head.outer_acc(&dpre, &cache.proj[t]);
            for (b, d) in g.b_head.data.iter_mut().zip(&dpre) {
                *b += d;
            }
            let mut dproj = vec![0.0; HEAD_WIDTH];
            self.w_head.matvec_t_acc(&dpre, &mut dproj);
            g.w_proj.outer_acc(&dproj, &cache.block_out[t]);
            for (b, d) in g.b_proj.data.iter_mut().zip(&dproj) {
                *b += d;
            }
            let mut dx = vec![0.0; self.config.d_model];
            self.w_proj.matvec_t_acc(&dproj, &mut dx);
            dout.push(dx);
        }
        for (l, block) in self.blocks.iter().enumerate().rev() {
            let (gb, gx, _) = block.backward(&cache.blocks[l], &dout, None)?;
            g.blocks[l] = gb;
            dout = gx;
        }
        for (t, dx) in dout.iter().enumerate() {
            g.w_emb.outer_acc(dx, &cache.inputs[t]);
            for (b, d) in g.b_emb.data.iter_mut().zip(dx) {
                *b += d;
            }
        }
        Ok(g)
    }
}

/// Greedy policy driven by a trained network.
pub struct QPolicy<'a> {
    net: &'a QNetwork,
    hidden: QHidden,
}

impl<'a> QPolicy<'a> {
    pub fn new(net: &'a QNetwork) -> Self {
        Self { net, hidden: QHidden::zeros(&net.config) }
    }
}

impl Policy for QPolicy<'_> {
    fn reset(&mut self, _episode_seed: u64) {
        self.hidden = QHidden::zeros(&self.net.config);
    }

    fn act(&mut self, state: &OptimizationState, _step: usize, limits: &[usize]) -> Result<Vec<usize>> {
        Ok(self.net.decode_episode_actions(state, limits, &mut self.hidden)?.0)
    }
}

/// AdamW moment buffers, stored alongside parameters in checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: QNetwork,
    /// Number of completed epochs.
    pub epoch: usize,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: QConfig,
    epoch: usize,
    tensors: Vec<TensorHeader>,
    optimizer_step: Option<u64>,
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|_| Error::Checkpoint("truncated tensor data".into()))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

impl Checkpoint {
    /// Magic line, one JSON header line, then little-endian f64 tensor data.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.network.config,
            epoch: self.epoch,
            tensors: self
                .network
                .tensors()
                .into_iter()
                .map(|(name, t)| TensorHeader { name, rows: t.rows, cols: t.cols })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
        };
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (_, t) in self.network.tensors() {
            write_f64s(w, &t.data)?;
        }
        if let Some(opt) = &self.optimizer {
            write_f64s(w, &opt.m)?;
            write_f64s(w, &opt.v)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut lines = bytes.splitn(3, |&b| b == b'\n');
        let magic = lines.next().unwrap_or_default();
        if magic != MAGIC.as_bytes() {
            return Err(Error::Checkpoint("missing checkpoint magic".into()));
        }
        let header_line = lines.next().ok_or_else(|| Error::Checkpoint("missing header".into()))?;
        let header: Header = serde_json::from_slice(header_line)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Version { expected: CHECKPOINT_VERSION.to_string(), found: header.version.to_string() });
        }
        let mut network = QNetwork::zeros(header.config)?;
        let mut body: &[u8] = lines.next().unwrap_or_default();
        {
            let tensors = network.tensors_mut();
            if tensors.len() != header.tensors.len() {
                return Err(Error::Checkpoint("tensor count does not match config".into()));
            }
            for ((name, t), th) in tensors.into_iter().zip(&header.tensors) {
                if name != th.name || t.rows != th.rows || t.cols != th.cols {
                    return Err(Error::Checkpoint(format!("tensor {} has unexpected shape", th.name)));
                }
                t.data = read_f64s(&mut body, t.rows * t.cols)?;
            }
        }
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let n = network.num_params();
                let m = read_f64s(&mut body, n)?;
                let v = read_f64s(&mut body, n)?;
                Some(OptimizerState { step, m, v })
            }
            None => None,
        };
        if !body.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len())));
        }
        Ok(Self { network, epoch: header.epoch, optimizer })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}
