//! Emission network with hand-written layer-local backward passes.
//!
//! Architecture: a shared linear encoder maps the raw start and goal
//! embeddings to encoded vectors; their concatenation is projected to one
//! hidden token per plan step (plus a learned positional embedding),
//! optionally mixed by a single self-attention block, and pushed through a
//! shared two-layer MLP head with a sigmoid to produce the emission matrix
//! b in [0,1]^{T x N}. A linear task head reads the same concatenation.
//!
//! All parameters live in one flat vector so the optimizer, finite
//! difference checks, and checkpoints treat the model uniformly.

use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::viterbi::EmissionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_actions: usize,
    pub n_tasks: usize,
    pub horizon: usize,
    /// Opt-in single-head self-attention block over the step tokens.
    pub attention: bool,
    pub dropout: f64,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0
            || self.hidden_dim == 0
            || self.n_actions == 0
            || self.n_tasks == 0
            || self.horizon == 0
        {
            return Err(Error::InvalidArgument("all network dimensions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Offsets of each weight block inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w_enc: usize,
    b_enc: usize,
    w_proj: usize,
    b_proj: usize,
    pos: usize,
    w_q: usize,
    w_k: usize,
    w_v: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w_task: usize,
    b_task: usize,
    total: usize,
}

impl Layout {
    fn new(c: &NetConfig) -> Self {
        let (e, h, n, k, t) = (c.embed_dim, c.hidden_dim, c.n_actions, c.n_tasks, c.horizon);
        let attn = if c.attention { h * h } else { 0 };
        let mut off = 0;
        let mut take = |len: usize| {
            let at = off;
            off += len;
            at
        };
        let w_enc = take(e * e);
        let b_enc = take(e);
        let w_proj = take(h * 2 * e);
        let b_proj = take(h);
        let pos = take(t * h);
        let w_q = take(attn);
        let w_k = take(attn);
        let w_v = take(attn);
        let w1 = take(h * h);
        let b1 = take(h);
        let w2 = take(n * h);
        let b2 = take(n);
        let w_task = take(k * 2 * e);
        let b_task = take(k);
        Self { w_enc, b_enc, w_proj, b_proj, pos, w_q, w_k, w_v, w1, b1, w2, b2, w_task, b_task, total: off }
    }
}

/// y = W x + b with row-major W (rows x cols).
fn linear(w: &[f64], b: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        y[r] = acc;
    }
}

/// Accumulate dL/dW += g ⊗ x and dL/dx += W^T g.
fn linear_backward(
    w: &[f64],
    rows: usize,
    cols: usize,
    x: &[f64],
    g_y: &[f64],
    g_w: &mut [f64],
    g_b: &mut [f64],
    g_x: &mut [f64],
) {
    for r in 0..rows {
        let g = g_y[r];
        g_b[r] += g;
        let wrow = &w[r * cols..(r + 1) * cols];
        let grow = &mut g_w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            grow[c] += g * x[c];
            g_x[c] += wrow[c] * g;
        }
    }
}

fn softmax_inplace(x: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in x.iter_mut() {
        *v /= z;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
struct AttnTrace {
    q: Mat,
    k: Mat,
    v: Mat,
    weights: Mat,
}

/// Saved intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub enc_start: Vec<f64>,
    pub enc_goal: Vec<f64>,
    z: Vec<f64>,
    h_pre: Mat,
    h: Mat,
    attn: Option<AttnTrace>,
    u: Mat,
    m_pre: Mat,
    m: Mat,
    /// Inverted-dropout multipliers: 0 or 1/(1-p); all-ones in eval mode.
    drop: Mat,
    pub emissions: EmissionMatrix,
    pub task_scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EmissionNet {
    pub cfg: NetConfig,
    pub params: Vec<f64>,
}

impl EmissionNet {
    /// Uniform init at 1/sqrt(fan_in) per layer, biases zero, positional
    /// embeddings small.
    pub fn init(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let l = Layout::new(&cfg);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = vec![0.0; l.total];
        let fill = |range: std::ops::Range<usize>, scale: f64, rng: &mut ChaCha12Rng, p: &mut [f64]| {
            for v in &mut p[range] {
                *v = rng.gen_range(-scale..scale);
            }
        };
        let (e, h, n, k, t) = (cfg.embed_dim, cfg.hidden_dim, cfg.n_actions, cfg.n_tasks, cfg.horizon);
        fill(l.w_enc..l.w_enc + e * e, 1.0 / (e as f64).sqrt(), &mut rng, &mut params);
        fill(l.w_proj..l.w_proj + h * 2 * e, 1.0 / (2.0 * e as f64).sqrt(), &mut rng, &mut params);
        fill(l.pos..l.pos + t * h, 0.1, &mut rng, &mut params);
        if cfg.attention {
            let s = 1.0 / (h as f64).sqrt();
            fill(l.w_q..l.w_q + h * h, s, &mut rng, &mut params);
            fill(l.w_k..l.w_k + h * h, s, &mut rng, &mut params);
            fill(l.w_v..l.w_v + h * h, s, &mut rng, &mut params);
        }
        fill(l.w1..l.w1 + h * h, 1.0 / (h as f64).sqrt(), &mut rng, &mut params);
        fill(l.w2..l.w2 + n * h, 1.0 / (h as f64).sqrt(), &mut rng, &mut params);
        fill(l.w_task..l.w_task + k * 2 * e, 1.0 / (2.0 * e as f64).sqrt(), &mut rng, &mut params);
        Ok(Self { cfg, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_inputs(&self, start: &[f64], goal: &[f64]) -> Result<()> {
        let e = self.cfg.embed_dim;
        if start.len() != e || goal.len() != e {
            return Err(Error::DimensionMismatch(format!(
                "embeddings of dim {}/{} vs network embed_dim {e}",
                start.len(),
                goal.len()
            )));
        }
        if start.iter().chain(goal).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite input embedding".into()));
        }
        Ok(())
    }

    /// Forward pass. `dropout_rng` enables training mode; `None` is eval
    /// mode (deterministic, dropout off).
    pub fn forward(
        &self,
        start: &[f64],
        goal: &[f64],
        dropout_rng: Option<&mut ChaCha12Rng>,
    ) -> Result<ForwardTrace> {
        self.check_inputs(start, goal)?;
        let c = &self.cfg;
        let l = Layout::new(c);
        let (e, h, n, k, t) = (c.embed_dim, c.hidden_dim, c.n_actions, c.n_tasks, c.horizon);
        let p = &self.params;

        let mut enc_start = vec![0.0; e];
        let mut enc_goal = vec![0.0; e];
        linear(&p[l.w_enc..], &p[l.b_enc..l.b_enc + e], e, e, start, &mut enc_start);
        linear(&p[l.w_enc..], &p[l.b_enc..l.b_enc + e], e, e, goal, &mut enc_goal);
        let mut z = Vec::with_capacity(2 * e);
        z.extend_from_slice(&enc_start);
        z.extend_from_slice(&enc_goal);

        let mut h_pre = Mat::zeros(t, h);
        let mut h_act = Mat::zeros(t, h);
        for step in 0..t {
            let row = h_pre.row_mut(step);
            linear(&p[l.w_proj..], &p[l.b_proj..l.b_proj + h], h, 2 * e, &z, row);
            let pos = &p[l.pos + step * h..l.pos + (step + 1) * h];
            for (v, q) in row.iter_mut().zip(pos) {
                *v += q;
            }
            for (a, &b) in h_act.row_mut(step).iter_mut().zip(h_pre.row(step)) {
                *a = b.max(0.0);
            }
        }

        let (attn, u) = if c.attention {
            let scale = 1.0 / (h as f64).sqrt();
            let zeros = vec![0.0; h];
            let mut q = Mat::zeros(t, h);
            let mut kk = Mat::zeros(t, h);
            let mut v = Mat::zeros(t, h);
            for step in 0..t {
                linear(&p[l.w_q..], &zeros, h, h, h_act.row(step), q.row_mut(step));
                linear(&p[l.w_k..], &zeros, h, h, h_act.row(step), kk.row_mut(step));
                linear(&p[l.w_v..], &zeros, h, h, h_act.row(step), v.row_mut(step));
            }
            let mut weights = Mat::zeros(t, t);
            for a in 0..t {
                for b in 0..t {
                    weights[(a, b)] = scale
                        * q.row(a).iter().zip(kk.row(b)).map(|(x, y)| x * y).sum::<f64>();
                }
                softmax_inplace(weights.row_mut(a));
            }
            let mut u = h_act.clone();
            for a in 0..t {
                for b in 0..t {
                    let w = weights[(a, b)];
                    for (ui, &vi) in u.row_mut(a).iter_mut().zip(v.row(b)) {
                        *ui += w * vi;
                    }
                }
            }
            (Some(AttnTrace { q, k: kk, v, weights }), u)
        } else {
            (None, h_act.clone())
        };

        let mut drop = Mat::zeros(t, h);
        match dropout_rng {
            Some(rng) if c.dropout > 0.0 => {
                let keep = 1.0 - c.dropout;
                for m in drop.data_mut() {
                    *m = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                }
            }
            _ => drop.data_mut().fill(1.0),
        }

        let mut m_pre = Mat::zeros(t, h);
        let mut m_act = Mat::zeros(t, h);
        let mut logits = Mat::zeros(t, n);
        let mut emissions = Mat::zeros(t, n);
        for step in 0..t {
            linear(&p[l.w1..], &p[l.b1..l.b1 + h], h, h, u.row(step), m_pre.row_mut(step));
            for i in 0..h {
                m_act[(step, i)] = m_pre[(step, i)].max(0.0) * drop[(step, i)];
            }
            linear(&p[l.w2..], &p[l.b2..l.b2 + n], n, h, m_act.row(step), logits.row_mut(step));
            for (b, &x) in emissions.row_mut(step).iter_mut().zip(logits.row(step)) {
                *b = sigmoid(x);
            }
        }

        let mut task_scores = vec![0.0; k];
        linear(&p[l.w_task..], &p[l.b_task..l.b_task + k], k, 2 * e, &z, &mut task_scores);

        Ok(ForwardTrace {
            enc_start,
            enc_goal,
            z,
            h_pre,
            h: h_act,
            attn,
            u,
            m_pre,
            m: m_act,
            drop,
            emissions,
            task_scores,
        })
    }

    /// Eval-mode emission prediction.
    pub fn predict_emissions(&self, start: &[f64], goal: &[f64]) -> Result<EmissionMatrix> {
        Ok(self.forward(start, goal, None)?.emissions)
    }

    /// Reverse pass. `g_emissions` is dL/db, `g_task` dL/d(task scores),
    /// `g_enc_start`/`g_enc_goal` extra gradients flowing directly into the
    /// encoded embeddings (the alignment loss). Returns dL/dparams.
    pub fn backward(
        &self,
        start: &[f64],
        goal: &[f64],
        trace: &ForwardTrace,
        g_emissions: &Mat,
        g_task: &[f64],
        g_enc_start: &[f64],
        g_enc_goal: &[f64],
    ) -> Result<Vec<f64>> {
        let c = &self.cfg;
        let l = Layout::new(c);
        let (e, h, n, k, t) = (c.embed_dim, c.hidden_dim, c.n_actions, c.n_tasks, c.horizon);
        if g_emissions.rows() != t || g_emissions.cols() != n || g_task.len() != k {
            return Err(Error::DimensionMismatch("upstream gradient shapes".into()));
        }
        let p = &self.params;
        let mut g = vec![0.0; p.len()];
        let mut g_u = Mat::zeros(t, h);

        for step in 0..t {
            // Sigmoid, then the shared head.
            let mut g_logits = vec![0.0; n];
            for j in 0..n {
                let b = trace.emissions[(step, j)];
                g_logits[j] = g_emissions[(step, j)] * b * (1.0 - b);
            }
            let mut g_m = vec![0.0; h];
            {
                let (gw2, rest) = g[l.w2..].split_at_mut(n * h);
                linear_backward(
                    &p[l.w2..],
                    n,
                    h,
                    trace.m.row(step),
                    &g_logits,
                    gw2,
                    &mut rest[..n],
                    &mut g_m,
                );
            }
            let mut g_m_pre = vec![0.0; h];
            for i in 0..h {
                if trace.m_pre[(step, i)] > 0.0 {
                    g_m_pre[i] = g_m[i] * trace.drop[(step, i)];
                }
            }
            let (gw1, rest) = g[l.w1..].split_at_mut(h * h);
            linear_backward(
                &p[l.w1..],
                h,
                h,
                trace.u.row(step),
                &g_m_pre,
                gw1,
                &mut rest[..h],
                g_u.row_mut(step),
            );
        }

        let mut g_h = Mat::zeros(t, h);
        if let Some(attn) = &trace.attn {
            let scale = 1.0 / (h as f64).sqrt();
            // Residual.
            for (gh, gu) in g_h.data_mut().iter_mut().zip(g_u.data()) {
                *gh += gu;
            }
            let mut g_weights = Mat::zeros(t, t);
            let mut g_v = Mat::zeros(t, h);
            for a in 0..t {
                for b in 0..t {
                    g_weights[(a, b)] = g_u
                        .row(a)
                        .iter()
                        .zip(attn.v.row(b))
                        .map(|(x, y)| x * y)
                        .sum();
                    let w = attn.weights[(a, b)];
                    for (gv, &gu) in g_v.row_mut(b).iter_mut().zip(g_u.row(a)) {
                        *gv += w * gu;
                    }
                }
            }
            // Softmax rows.
            let mut g_scores = Mat::zeros(t, t);
            for a in 0..t {
                let w = attn.weights.row(a);
                let inner: f64 = g_weights.row(a).iter().zip(w).map(|(x, y)| x * y).sum();
                for b in 0..t {
                    g_scores[(a, b)] = w[b] * (g_weights[(a, b)] - inner);
                }
            }
            let mut g_q = Mat::zeros(t, h);
            let mut g_k = Mat::zeros(t, h);
            for a in 0..t {
                for b in 0..t {
                    let gs = g_scores[(a, b)] * scale;
                    for i in 0..h {
                        g_q[(a, i)] += gs * attn.k[(b, i)];
                        g_k[(b, i)] += gs * attn.q[(a, i)];
                    }
                }
            }
            let mut bias_sink = vec![0.0; h];
            for step in 0..t {
                let (gwq, _) = g[l.w_q..].split_at_mut(h * h);
                linear_backward(&p[l.w_q..], h, h, trace.h.row(step), g_q.row(step), gwq, &mut bias_sink, g_h.row_mut(step));
                let (gwk, _) = g[l.w_k..].split_at_mut(h * h);
                linear_backward(&p[l.w_k..], h, h, trace.h.row(step), g_k.row(step), gwk, &mut bias_sink, g_h.row_mut(step));
                let (gwv, _) = g[l.w_v..].split_at_mut(h * h);
                linear_backward(&p[l.w_v..], h, h, trace.h.row(step), g_v.row(step), gwv, &mut bias_sink, g_h.row_mut(step));
            }
        } else {
            g_h = g_u;
        }

        let mut g_z = vec![0.0; 2 * e];
        for step in 0..t {
            let mut g_h_pre = vec![0.0; h];
            for i in 0..h {
                if trace.h_pre[(step, i)] > 0.0 {
                    g_h_pre[i] = g_h[(step, i)];
                }
            }
            for (gp, gh) in g[l.pos + step * h..l.pos + (step + 1) * h].iter_mut().zip(&g_h_pre) {
                *gp += gh;
            }
            let (gwp, rest) = g[l.w_proj..].split_at_mut(h * 2 * e);
            linear_backward(&p[l.w_proj..], h, 2 * e, &trace.z, &g_h_pre, gwp, &mut rest[..h], &mut g_z);
        }

        {
            let (gwt, rest) = g[l.w_task..].split_at_mut(k * 2 * e);
            linear_backward(&p[l.w_task..], k, 2 * e, &trace.z, g_task, gwt, &mut rest[..k], &mut g_z);
        }

        let mut g_es = g_z[..e].to_vec();
        let mut g_eg = g_z[e..].to_vec();
        for (a, b) in g_es.iter_mut().zip(g_enc_start) {
            *a += b;
        }
        for (a, b) in g_eg.iter_mut().zip(g_enc_goal) {
            *a += b;
        }
        let mut sink = vec![0.0; e];
        {
            let (gwe, rest) = g[l.w_enc..].split_at_mut(e * e);
            linear_backward(&p[l.w_enc..], e, e, start, &g_es, gwe, &mut rest[..e], &mut sink);
            linear_backward(&p[l.w_enc..], e, e, goal, &g_eg, gwe, &mut rest[..e], &mut sink);
        }
        Ok(g)
    }
}

/// Checkpoint: config echo plus the raw parameter vector as base64 of
/// little-endian f64 bytes; reloads bit-exact.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    config: NetConfig,
    params_b64: String,
}

pub fn save_checkpoint(path: &std::path::Path, net: &EmissionNet) -> Result<()> {
    let mut bytes = Vec::with_capacity(net.params.len() * 8);
    for v in &net.params {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let file = CheckpointFile {
        config: net.cfg,
        params_b64: base64::engine::general_purpose::STANDARD.encode(bytes),
    };
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, &file)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<EmissionNet> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let file: CheckpointFile = serde_json::from_reader(f)?;
    file.config.validate()?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(file.params_b64.as_bytes())
        .map_err(|e| Error::Malformed(format!("checkpoint parameter blob: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Malformed("checkpoint parameter blob length".into()));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let expected = Layout::new(&file.config).total;
    if params.len() != expected {
        return Err(Error::Malformed(format!(
            "checkpoint has {} parameters, config implies {expected}",
            params.len()
        )));
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Malformed("non-finite checkpoint parameter".into()));
    }
    Ok(EmissionNet { cfg: file.config, params })
}
