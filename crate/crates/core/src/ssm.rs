//! Selective state-space block.
//!
//! One block maps a sequence of `d_model` vectors to a sequence of the same
//! width:
//!
//! ```text
//! [xp, z] = W_in x            u = silu(xp)
//! Δ = softplus(W_dt u + b_dt)  B = W_B u   C = W_C u   A = -exp(a_log)
//! h = exp(Δ A) h + (exp(Δ A) - 1)/A · B u
//! y = C·h + D u               out = x + W_out (y · silu(z))
//! ```
//!
//! A is diagonal per channel so zero-order hold has a closed form. The state
//! `h` holds `d_state` values for each of the `d_model` inner channels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{silu, silu_grad, sigmoid, softplus, Matrix};
use rand::Rng as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsmConfig {
    pub d_model: usize,
    pub d_state: usize,
}

impl Default for SsmConfig {
    fn default() -> Self {
        Self { d_model: 64, d_state: 16 }
    }
}

/// `expm1(x) / x`, continuous at 0.
fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0))
    } else {
        x.exp_m1() / x
    }
}

/// Derivative of [`expm1_ratio`].
fn expm1_ratio_grad(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x * (1.0 / 3.0 + x * (0.125 + x / 30.0))
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

/// Zero-order hold for one diagonal entry: returns `(Ā, B̄)` with
/// `Ā = exp(ΔA)` and `B̄ = (Ā - 1)/A · B`, which tends to `Δ·B` as `A → 0`.
pub fn discretize(a: f64, b: f64, delta: f64) -> (f64, f64) {
    let x = delta * a;
    (x.exp(), delta * expm1_ratio(x) * b)
}

/// Composition of two affine maps `h ↦ a h + b`, applying `first` then `second`.
pub fn scan_combine(first: (&[f64], &[f64]), second: (&[f64], &[f64])) -> (Vec<f64>, Vec<f64>) {
    let a = first.0.iter().zip(second.0).map(|(a1, a2)| a2 * a1).collect();
    let b = first
        .1
        .iter()
        .zip(second.0)
        .zip(second.1)
        .map(|((b1, a2), b2)| a2 * b1 + b2)
        .collect();
    (a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmParameters {
    pub config: SsmConfig,
    pub w_in: Matrix,
    pub w_dt: Matrix,
    pub b_dt: Matrix,
    pub w_b: Matrix,
    pub w_c: Matrix,
    pub a_log: Matrix,
    pub d_skip: Matrix,
    pub w_out: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsmHiddenState {
    /// Row-major `d_model × d_state`.
    pub h: Vec<f64>,
}

impl SsmHiddenState {
    pub fn zeros(config: SsmConfig) -> Self {
        Self { h: vec![0.0; config.d_model * config.d_state] }
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.is_finite())
    }
}

/// Per-step quantities that depend only on the step's input.
#[derive(Clone, Debug)]
struct Projection {
    x: Vec<f64>,
    xp: Vec<f64>,
    u: Vec<f64>,
    z: Vec<f64>,
    dt_pre: Vec<f64>,
    delta: Vec<f64>,
    bv: Vec<f64>,
    cv: Vec<f64>,
    /// `exp(Δ A)`, row-major channel × state.
    abar: Vec<f64>,
    /// `(Ā - 1)/A`.
    phi: Vec<f64>,
}

#[derive(Clone, Debug)]
struct StepCache {
    proj: Projection,
    h_prev: Vec<f64>,
    h: Vec<f64>,
    y: Vec<f64>,
    g: Vec<f64>,
}

/// Intermediates retained by [`SsmParameters::forward_sequential`].
#[derive(Clone, Debug)]
pub struct SsmCache {
    steps: Vec<StepCache>,
    fingerprint: u64,
}

impl SsmCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl SsmParameters {
    /// Linear layers use U(±1/√fan_in); A starts in [-1, -0.01] and Δ in [0.001, 0.1].
    pub fn init(config: SsmConfig, rng: &mut Rng) -> Self {
        let (d, e, n) = (config.d_model, config.d_model, config.d_state);
        let inv = |fan: usize| 1.0 / (fan as f64).sqrt();
        let w_in = Matrix::uniform(2 * e, d, inv(d), rng);
        let w_dt = Matrix::uniform(e, e, inv(e), rng);
        let b_dt = Matrix {
            rows: e,
            cols: 1,
            data: (0..e)
                .map(|_| {
                    let dt: f64 = (rng.random_range(0.001f64.ln()..0.1f64.ln())).exp();
                    // inverse softplus
                    dt.exp_m1().ln()
                })
                .collect(),
        };
        let w_b = Matrix::uniform(n, e, inv(e), rng);
        let w_c = Matrix::uniform(n, e, inv(e), rng);
        let a_log = Matrix {
            rows: e,
            cols: n,
            data: (0..e * n).map(|_| rng.random_range(0.01f64..=1.0).ln()).collect(),
        };
        let d_skip = Matrix::filled(e, 1, 1.0);
        let w_out = Matrix::uniform(d, e, inv(e), rng);
        Self { config, w_in, w_dt, b_dt, w_b, w_c, a_log, d_skip, w_out }
    }

    pub fn zeros(config: SsmConfig) -> Self {
        let (d, e, n) = (config.d_model, config.d_model, config.d_state);
        Self {
            config,
            w_in: Matrix::zeros(2 * e, d),
            w_dt: Matrix::zeros(e, e),
            b_dt: Matrix::zeros(e, 1),
            w_b: Matrix::zeros(n, e),
            w_c: Matrix::zeros(n, e),
            a_log: Matrix::zeros(e, n),
            d_skip: Matrix::zeros(e, 1),
            w_out: Matrix::zeros(d, e),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &Matrix); 8] {
        [
            ("w_in", &self.w_in),
            ("w_dt", &self.w_dt),
            ("b_dt", &self.b_dt),
            ("w_b", &self.w_b),
            ("w_c", &self.w_c),
            ("a_log", &self.a_log),
            ("d_skip", &self.d_skip),
            ("w_out", &self.w_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 8] {
        [
            ("w_in", &mut self.w_in),
            ("w_dt", &mut self.w_dt),
            ("b_dt", &mut self.b_dt),
            ("w_b", &mut self.w_b),
            ("w_c", &mut self.w_c),
            ("a_log", &mut self.a_log),
            ("d_skip", &mut self.d_skip),
            ("w_out", &mut self.w_out),
        ]
    }

    /// Hash of every parameter bit pattern; used to detect stale caches.
    pub fn fingerprint(&self) -> u64 {
        let mut acc = 0x9e37_79b9_7f4a_7c15u64;
        for (_, t) in self.tensors() {
            for v in &t.data {
                acc = (acc ^ v.to_bits()).wrapping_mul(0x1000_0000_01b3).rotate_left(17);
            }
        }
        acc
    }

    /// Continuous-time diagonal `A = -exp(a_log)`.
    pub fn a_matrix(&self) -> Vec<f64> {
        self.a_log.data.iter().map(|v| -v.exp()).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.d_model {
            return Err(Error::DimensionMismatch { expected: self.config.d_model, got: x.len() });
        }
        Ok(())
    }

    fn check_state(&self, h: &SsmHiddenState) -> Result<()> {
        let want = self.config.d_model * self.config.d_state;
        if h.h.len() != want {
            return Err(Error::DimensionMismatch { expected: want, got: h.h.len() });
        }
        Ok(())
    }

    fn project(&self, x: &[f64], a: &[f64]) -> Projection {
        let e = self.config.d_model;
        let n = self.config.d_state;
        let xz = self.w_in.matvec(x);
        let xp = xz[..e].to_vec();
        let z = xz[e..].to_vec();
        let u: Vec<f64> = xp.iter().map(|&v| silu(v)).collect();
        let mut dt_pre = self.w_dt.matvec(&u);
        for (d, b) in dt_pre.iter_mut().zip(&self.b_dt.data) {
            *d += b;
        }
        let delta: Vec<f64> = dt_pre.iter().map(|&v| softplus(v)).collect();
        let bv = self.w_b.matvec(&u);
        let cv = self.w_c.matvec(&u);
        let mut abar = vec![0.0; e * n];
        let mut phi = vec![0.0; e * n];
        for ch in 0..e {
            for s in 0..n {
                let k = ch * n + s;
                let xa = delta[ch] * a[k];
                abar[k] = xa.exp();
                phi[k] = delta[ch] * expm1_ratio(xa);
            }
        }
        Projection { x: x.to_vec(), xp, u, z, dt_pre, delta, bv, cv, abar, phi }
    }

    /// Input term of the recurrence, `B̄ u`, row-major channel × state.
    fn drive(&self, p: &Projection) -> Vec<f64> {
        let n = self.config.d_state;
        p.phi
            .iter()
            .enumerate()
            .map(|(k, phi)| phi * p.bv[k % n] * p.u[k / n])
            .collect()
    }

    /// Readout for a step whose new state `h` is known: returns `(y, g, out)`.
    fn readout(&self, p: &Projection, h: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let e = self.config.d_model;
        let n = self.config.d_state;
        let mut y = vec![0.0; e];
        let mut g = vec![0.0; e];
        for ch in 0..e {
            let hs = &h[ch * n..(ch + 1) * n];
            y[ch] = hs.iter().zip(&p.cv).map(|(a, b)| a * b).sum::<f64>() + self.d_skip.data[ch] * p.u[ch];
            g[ch] = y[ch] * silu(p.z[ch]);
        }
        let mut out = self.w_out.matvec(&g);
        for (o, xi) in out.iter_mut().zip(&p.x) {
            *o += xi;
        }
        (y, g, out)
    }

    /// One recurrent step without caching.
    pub fn step(&self, h: &mut SsmHiddenState, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_state(h)?;
        let p = self.project(x, &self.a_matrix());
        let drive = self.drive(&p);
        for ((hv, a), b) in h.h.iter_mut().zip(&p.abar).zip(&drive) {
            *hv = a * *hv + b;
        }
        Ok(self.readout(&p, &h.h).2)
    }

    /// Exact recurrence, keeping everything needed by [`Self::backward`].
    pub fn forward_sequential(
        &self,
        h0: &SsmHiddenState,
        xs: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, SsmHiddenState, SsmCache)> {
        self.check_state(h0)?;
        for x in xs {
            self.check_input(x)?;
        }
        let a = self.a_matrix();
        let mut h = h0.h.clone();
        let mut ys = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let proj = self.project(x, &a);
            let drive = self.drive(&proj);
            let h_prev = h.clone();
            for ((hv, ab), b) in h.iter_mut().zip(&proj.abar).zip(&drive) {
                *hv = ab * *hv + b;
            }
            let (y, g, out) = self.readout(&proj, &h);
            ys.push(out);
            steps.push(StepCache { proj, h_prev, h: h.clone(), y, g });
        }
        let cache = SsmCache { steps, fingerprint: self.fingerprint() };
        Ok((ys, SsmHiddenState { h }, cache))
    }

    /// Same outputs as [`Self::forward_sequential`], computed with a two-level
    /// prefix scan over the affine maps `h ↦ Ā_t h + B̄_t u_t`.
    pub fn forward_scan(&self, h0: &SsmHiddenState, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, SsmHiddenState)> {
        self.forward_scan_chunked(h0, xs, 64)
    }

    pub fn forward_scan_chunked(
        &self,
        h0: &SsmHiddenState,
        xs: &[Vec<f64>],
        chunk: usize,
    ) -> Result<(Vec<Vec<f64>>, SsmHiddenState)> {
        self.check_state(h0)?;
        for x in xs {
            self.check_input(x)?;
        }
        if xs.is_empty() {
            return Ok((Vec::new(), h0.clone()));
        }
        let chunk = chunk.max(1);
        let a = self.a_matrix();
        let projs: Vec<Projection> = xs.par_iter().map(|x| self.project(x, &a)).collect();
        let elems: Vec<(Vec<f64>, Vec<f64>)> = projs.par_iter().map(|p| (p.abar.clone(), self.drive(p))).collect();

        // Up-sweep: one aggregate per chunk, folded left to right.
        let aggregates: Vec<(Vec<f64>, Vec<f64>)> = elems
            .par_chunks(chunk)
            .map(|c| {
                let mut acc = c[0].clone();
                for el in &c[1..] {
                    acc = scan_combine((&acc.0, &acc.1), (&el.0, &el.1));
                }
                acc
            })
            .collect();
        // Carry: state entering each chunk.
        let mut starts = Vec::with_capacity(aggregates.len());
        let mut h = h0.h.clone();
        for (ag_a, ag_b) in &aggregates {
            starts.push(h.clone());
            h = h.iter().zip(ag_a).zip(ag_b).map(|((hv, a), b)| a * hv + b).collect();
        }
        let h_final = h;
        // Down-sweep: expand within each chunk from its start state.
        let states: Vec<Vec<Vec<f64>>> = elems
            .par_chunks(chunk)
            .zip(starts.par_iter())
            .map(|(c, start)| {
                let mut h = start.clone();
                c.iter()
                    .map(|(a, b)| {
                        h = h.iter().zip(a).zip(b).map(|((hv, a), b)| a * hv + b).collect();
                        h.clone()
                    })
                    .collect()
            })
            .collect();
        let states: Vec<Vec<f64>> = states.into_iter().flatten().collect();
        let ys = projs
            .par_iter()
            .zip(states.par_iter())
            .map(|(p, h)| self.readout(p, &h).2)
            .collect();
        Ok((ys, SsmHiddenState { h: h_final }))
    }

    /// Reverse-mode gradients of the sequential recurrence.
    ///
    /// Returns parameter gradients, gradients w.r.t. each input and w.r.t. `h0`.
    pub fn backward(
        &self,
        cache: &SsmCache,
        grad_ys: &[Vec<f64>],
        grad_h_final: Option<&[f64]>,
    ) -> Result<(SsmParameters, Vec<Vec<f64>>, Vec<f64>)> {
        if cache.fingerprint != self.fingerprint() {
            return Err(Error::StaleCache);
        }
        if grad_ys.len() != cache.steps.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} output gradients for {} cached steps",
                grad_ys.len(),
                cache.steps.len()
            )));
        }
        let e = self.config.d_model;
        let n = self.config.d_state;
        let a = self.a_matrix();
        let mut grads = self.zeros_like();
        let mut grad_xs = vec![Vec::new(); grad_ys.len()];
        let mut dh_carry = match grad_h_final {
            Some(g) if g.len() == e * n => g.to_vec(),
            Some(g) => return Err(Error::DimensionMismatch { expected: e * n, got: g.len() }),
            None => vec![0.0; e * n],
        };
        let mut da = vec![0.0; e * n];
        for (t, st) in cache.steps.iter().enumerate().rev() {
            let p = &st.proj;
            let dout = &grad_ys[t];
            if dout.len() != e {
                return Err(Error::DimensionMismatch { expected: e, got: dout.len() });
            }
            let mut dx = dout.clone();
            grads.w_out.outer_acc(dout, &st.g);
            let mut dg = vec![0.0; e];
            self.w_out.matvec_t_acc(dout, &mut dg);

            let mut dy = vec![0.0; e];
            let mut dz = vec![0.0; e];
            for ch in 0..e {
                dy[ch] = dg[ch] * silu(p.z[ch]);
                dz[ch] = dg[ch] * st.y[ch] * silu_grad(p.z[ch]);
            }
            let mut du = vec![0.0; e];
            let mut dcv = vec![0.0; n];
            let mut dbv = vec![0.0; n];
            let mut ddelta = vec![0.0; e];
            let mut dh_prev = vec![0.0; e * n];
            for ch in 0..e {
                du[ch] += dy[ch] * self.d_skip.data[ch];
                grads.d_skip.data[ch] += dy[ch] * p.u[ch];
                for s in 0..n {
                    let k = ch * n + s;
                    let dh = dh_carry[k] + dy[ch] * p.cv[s];
                    dcv[s] += dy[ch] * st.h[k];
                    // h = abar h_prev + phi bv u
                    let dabar = dh * st.h_prev[k];
                    let dphi = dh * p.bv[s] * p.u[ch];
                    dbv[s] += dh * p.phi[k] * p.u[ch];
                    du[ch] += dh * p.phi[k] * p.bv[s];
                    dh_prev[k] = dh * p.abar[k];
                    // abar = exp(Δ a), phi = Δ expm1_ratio(Δ a)
                    let xa = p.delta[ch] * a[k];
                    ddelta[ch] += dabar * p.abar[k] * a[k] + dphi * p.abar[k];
                    let dak = dabar * p.abar[k] * p.delta[ch] + dphi * p.delta[ch] * p.delta[ch] * expm1_ratio_grad(xa);
                    da[k] += dak;
                }
            }
            grads.w_c.outer_acc(&dcv, &p.u);
            self.w_c.matvec_t_acc(&dcv, &mut du);
            grads.w_b.outer_acc(&dbv, &p.u);
            self.w_b.matvec_t_acc(&dbv, &mut du);
            let ddt: Vec<f64> = ddelta.iter().zip(&p.dt_pre).map(|(g, v)| g * sigmoid(*v)).collect();
            grads.w_dt.outer_acc(&ddt, &p.u);
            for (gb, d) in grads.b_dt.data.iter_mut().zip(&ddt) {
                *gb += d;
            }
            self.w_dt.matvec_t_acc(&ddt, &mut du);
            let mut dxz = vec![0.0; 2 * e];
            for ch in 0..e {
                dxz[ch] = du[ch] * silu_grad(p.xp[ch]);
                dxz[e + ch] = dz[ch];
            }
            grads.w_in.outer_acc(&dxz, &p.x);
            self.w_in.matvec_t_acc(&dxz, &mut dx);
            grad_xs[t] = dx;
            dh_carry = dh_prev;
        }
        // A = -exp(a_log)  =>  dA/da_log = A
        for ((g, d), av) in grads.a_log.data.iter_mut().zip(&da).zip(&a) {
            *g += d * av;
        }
        Ok((grads, grad_xs, dh_carry))
    }
}
