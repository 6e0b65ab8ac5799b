//! Parameterized building blocks. A layer owns [`ParamId`]s plus hyperparams;
//! `forward` records ops on a caller-supplied [`Graph`].

use crate::graph::{Graph, Var};
use crate::store::{ParamId, ParamStore};
use crate::{init, Arr};
use rand_chacha::ChaCha8Rng;

pub struct Dense {
    pub w: ParamId, // (in, out)
    pub b: Option<ParamId>,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        dim_in: usize,
        dim_out: usize,
        bias: bool,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            init::xavier_uniform(rng, &[dim_in, dim_out], dim_in, dim_out),
        );
        let b = bias.then(|| store.add(format!("{name}.b"), init::zeros(&[dim_out])));
        Self { w, b }
    }

    /// Zero-initialized weights (used for output heads that must start at 0).
    pub fn new_zeroed(
        store: &mut ParamStore,
        name: &str,
        dim_in: usize,
        dim_out: usize,
        bias: bool,
    ) -> Self {
        let w = store.add(format!("{name}.w"), init::zeros(&[dim_in, dim_out]));
        let b = bias.then(|| store.add(format!("{name}.b"), init::zeros(&[dim_out])));
        Self { w, b }
    }

    /// x: (N, in) -> (N, out)
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_bias(y, b, 1)
            }
            None => y,
        }
    }
}

pub struct Conv2d {
    pub w: ParamId, // (Cout, Cin, kh, kw)
    pub b: Option<ParamId>,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let w = store.add(
            format!("{name}.w"),
            init::he_normal(rng, &[cout, cin, kernel.0, kernel.1], fan_in),
        );
        let b = Some(store.add(format!("{name}.b"), init::zeros(&[cout])));
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

pub struct Conv3d {
    pub w: ParamId, // (Cout, Cin, kt, kh, kw)
    pub b: Option<ParamId>,
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

impl Conv3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize, usize),
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1 * kernel.2;
        let w = store.add(
            format!("{name}.w"),
            init::he_normal(rng, &[cout, cin, kernel.0, kernel.1, kernel.2], fan_in),
        );
        let b = Some(store.add(format!("{name}.b"), init::zeros(&[cout])));
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        g.conv3d(x, w, b, self.stride, self.pad)
    }
}

pub struct ConvTranspose3d {
    pub w: ParamId, // (Cin, Cout, kt, kh, kw)
    pub b: Option<ParamId>,
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

impl ConvTranspose3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize, usize),
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1 * kernel.2;
        let w = store.add(
            format!("{name}.w"),
            init::he_normal(rng, &[cin, cout, kernel.0, kernel.1, kernel.2], fan_in),
        );
        let b = Some(store.add(format!("{name}.b"), init::zeros(&[cout])));
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        g.conv_transpose3d(x, w, b, self.stride, self.pad)
    }
}

pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), init::full(&[dim], 1.0)),
            beta: store.add(format!("{name}.beta"), init::zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, self.eps)
    }
}

pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Self {
        assert_eq!(channels % groups, 0);
        Self {
            gamma: store.add(format!("{name}.gamma"), init::full(&[channels], 1.0)),
            beta: store.add(format!("{name}.beta"), init::zeros(&[channels])),
            groups,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.group_norm(x, gamma, beta, self.groups, self.eps)
    }
}

pub struct Embedding {
    pub table: ParamId, // (K, d)
}

impl Embedding {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, k: usize, d: usize) -> Self {
        Self {
            table: store.add(format!("{name}.table"), init::normal(rng, &[k, d], 0.02)),
        }
    }

    /// ids -> (len, d)
    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let table = g.param(self.table);
        g.embedding(table, ids)
    }
}

/// Multi-head attention over a single sequence (no batch axis; callers loop
/// over batch items). Supports self- and cross-attention plus an optional
/// additive mask on the score matrix.
pub struct MultiHeadAttention {
    pub wq: Dense,
    pub wk: Dense,
    pub wv: Dense,
    pub wo: Dense,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        assert_eq!(dim % heads, 0, "attention dim must divide into heads");
        Self {
            wq: Dense::new(store, rng, &format!("{name}.wq"), dim, dim, false),
            wk: Dense::new(store, rng, &format!("{name}.wk"), dim, dim, false),
            wv: Dense::new(store, rng, &format!("{name}.wv"), dim, dim, false),
            wo: Dense::new(store, rng, &format!("{name}.wo"), dim, dim, true),
            heads,
            dim,
        }
    }

    /// q_in: (Lq, dim); kv_in: (Lk, dim); mask: optional (Lq, Lk) additive.
    pub fn forward(&self, g: &mut Graph, q_in: Var, kv_in: Var, mask: Option<Var>) -> Var {
        let dh = self.dim / self.heads;
        let q = self.wq.forward(g, q_in);
        let k = self.wk.forward(g, kv_in);
        let v = self.wv.forward(g, kv_in);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut head_outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_axis(q, 1, h * dh, (h + 1) * dh); // (Lq, dh)
            let kh = g.slice_axis(k, 1, h * dh, (h + 1) * dh); // (Lk, dh)
            let vh = g.slice_axis(v, 1, h * dh, (h + 1) * dh); // (Lk, dh)
            let kt = g.transpose(kh, &[1, 0]);
            let scores = g.matmul(qh, kt);
            let scores = g.scale(scores, scale);
            let scores = match mask {
                Some(m) => g.add(scores, m),
                None => scores,
            };
            let attn = g.softmax_last(scores);
            head_outs.push(g.matmul(attn, vh)); // (Lq, dh)
        }
        let merged = g.concat(&head_outs, 1); // (Lq, dim)
        self.wo.forward(g, merged)
    }
}

/// Additive causal mask: 0 on/below the diagonal, -1e30 above.
pub fn causal_mask(len: usize) -> Arr {
    let mut m = ndarray::Array2::<f64>::zeros((len, len));
    for i in 0..len {
        for j in (i + 1)..len {
            m[(i, j)] = -1e30;
        }
    }
    m.into_dyn()
}
