//! The autodiff tape: eagerly-evaluated ops recorded in creation order,
//! differentiated by a single reverse sweep.

use crate::store::{Grads, ParamId, ParamStore};
use crate::Arr;
use ndarray::{s, Array1, Array2, Array4, ArrayView4, Axis, IxDyn, Slice};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

pub(crate) struct Node {
    pub value: Arr,
    op: Op,
}

/// Convolution geometry for one spatial axis triple (t, h, w).
#[derive(Debug, Clone, Copy)]
pub struct Conv3Geom {
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

enum Op {
    Input,
    Const,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    /// x + bias broadcast along `axis` (bias is 1-D of len x.shape()[axis]).
    AddBias {
        x: Var,
        bias: Var,
        axis: usize,
    },
    /// 2-D matrix product (m,k)·(k,n).
    Matmul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Sqrt(Var),
    /// Softmax over the last axis.
    SoftmaxLast(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Transpose(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    SliceAxis {
        x: Var,
        axis: usize,
        start: usize,
        end: usize,
    },
    #[allow(dead_code)] // parent kept for tape readability
    Detach(Var),
    /// Row gather from a (K, d) table.
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    /// x: (N, Cin, T, H, W); w: (Cout, Cin, kt, kh, kw).
    Conv3d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: Conv3Geom,
        cols: Vec<Array2<f64>>,
    },
    /// x: (N, Cin, T, H, W); w: (Cin, Cout, kt, kh, kw). Adjoint of Conv3d.
    ConvTranspose3d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: Conv3Geom,
    },
    /// x: (N, C, H, W); bank: (P, k, k); stride 1, same padding.
    /// out: (N, C*P, H, W), out[n, c*P+p] = x[n, c] ⋆ bank[p].
    BankConv2d {
        x: Var,
        bank: Var,
        cols: Vec<Array2<f64>>,
    },
    MaxPool2d {
        x: Var,
        argmax: Vec<usize>,
    },
    /// Nearest-neighbour 2x spatial upsampling of (N, C, H, W).
    Upsample2x(Var),
    /// Normalize over the last axis; gamma/beta are 1-D of that length.
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Arr,
        rstd: Arr,
    },
    /// Normalize (N, C, ...) per sample over channel groups.
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        mean: Array2<f64>,
        rstd: Array2<f64>,
    },
    /// Mean squared error between two same-shaped tensors (scalar out).
    Mse(Var, Var),
    /// Mean negative log-likelihood of targets under softmax(logits).
    /// logits: (N, K); cached probs share that shape.
    CrossEntropyLogits {
        logits: Var,
        targets: Vec<usize>,
        probs: Array2<f64>,
    },
}

/// Eager computation tape over a read-only [`ParamStore`].
pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Arr {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        assert_eq!(val.len(), 1, "scalar() on non-scalar node");
        *val.iter().next().unwrap()
    }

    fn push(&mut self, value: Arr, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Arr) -> Var {
        self.push(value, Op::Input)
    }

    /// A tensor that never receives gradient (masks, targets, etc.).
    pub fn constant(&mut self, value: Arr) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.value(id).clone();
        self.push(value, Op::Param(id))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(value, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| -x);
        self.push(value, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| c * x);
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var, axis: usize) -> Var {
        let bshape = self.shape(bias);
        assert_eq!(bshape.len(), 1, "bias must be 1-D");
        assert_eq!(bshape[0], self.shape(x)[axis], "bias length mismatch");
        let mut value = self.nodes[x.0].value.clone();
        let b = self.nodes[bias.0].value.clone();
        let b1 = b.into_dimensionality::<ndarray::Ix1>().unwrap();
        for (i, mut lane) in value.axis_iter_mut(Axis(axis)).enumerate() {
            lane += b1[i];
        }
        self.push(value, Op::AddBias { x, bias, axis })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let a2 = as2(av);
        let b2 = as2(bv);
        assert_eq!(a2.shape()[1], b2.shape()[0], "matmul inner dim mismatch");
        let value = a2.dot(&b2).into_dyn();
        self.push(value, Op::Matmul(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// Element-wise square root; gradient is defined as 0 where the input is 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    pub fn softmax_last(&mut self, a: Var) -> Var {
        let mut value = self.nodes[a.0].value.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(value, Op::SoftmaxLast(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = ndarray::arr0(self.nodes[a.0].value.sum()).into_dyn();
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len() as f64;
        let value = ndarray::arr0(self.nodes[a.0].value.sum() / n).into_dyn();
        self.push(value, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.nodes[a.0]
            .value
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape size mismatch");
        self.push(value, Op::Reshape(a))
    }

    pub fn transpose(&mut self, a: Var, perm: &[usize]) -> Var {
        let value = self.nodes[a.0]
            .value
            .clone()
            .permuted_axes(IxDyn(perm))
            .as_standard_layout()
            .to_owned();
        self.push(value, Op::Transpose(a, perm.to_vec()))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch");
        self.push(value, Op::Concat(parts.to_vec(), axis))
    }

    pub fn slice_axis(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Var {
        let value = self.nodes[x.0]
            .value
            .slice_axis(Axis(axis), Slice::from(start..end))
            .as_standard_layout()
            .to_owned();
        self.push(value, Op::SliceAxis { x, axis, start, end })
    }

    /// Stop-gradient: forward identity, backward blocks.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.clone();
        self.push(value, Op::Detach(a))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = as2(&self.nodes[table.0].value);
        let d = t.shape()[1];
        let mut value = Array2::<f64>::zeros((ids.len(), d));
        for (i, &id) in ids.iter().enumerate() {
            value.row_mut(i).assign(&t.row(id));
        }
        self.push(
            value.into_dyn(),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mse shape mismatch");
        let diff = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let value = ndarray::arr0(diff.iter().map(|x| x * x).sum::<f64>() / diff.len() as f64);
        self.push(value.into_dyn(), Op::Mse(a, b))
    }

    pub fn cross_entropy_logits(&mut self, logits: Var, targets: &[usize]) -> Var {
        let l = as2(&self.nodes[logits.0].value);
        let (n, _k) = (l.shape()[0], l.shape()[1]);
        assert_eq!(n, targets.len(), "one target per logits row");
        let mut probs = l.to_owned();
        let mut loss = 0.0;
        for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|x| x / sum);
            loss -= row[targets[i]].max(1e-300).ln();
        }
        loss /= n as f64;
        self.push(
            ndarray::arr0(loss).into_dyn(),
            Op::CrossEntropyLogits {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let d = *xv.shape().last().expect("layer_norm on 0-d") as f64;
        let rows = xv.len() / d as usize;
        let x2 = xv
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((rows, d as usize))
            .unwrap();
        let g1 = as1(&self.nodes[gamma.0].value);
        let b1 = as1(&self.nodes[beta.0].value);
        let mut out = Array2::<f64>::zeros(x2.raw_dim());
        let mut mean = Array1::<f64>::zeros(rows);
        let mut rstd = Array1::<f64>::zeros(rows);
        for (i, row) in x2.rows().into_iter().enumerate() {
            let m = row.sum() / d;
            let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d;
            let r = 1.0 / (var + eps).sqrt();
            mean[i] = m;
            rstd[i] = r;
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = (v - m) * r * g1[j] + b1[j];
            }
        }
        let value = out.into_dyn().into_shape_with_order(xv.raw_dim()).unwrap();
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean: mean.into_dyn(),
                rstd: rstd.into_dyn(),
            },
        )
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize, eps: f64) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let shape = xv.shape().to_vec();
        assert!(shape.len() >= 2, "group_norm expects (N, C, ...)");
        let (n, c) = (shape[0], shape[1]);
        assert_eq!(c % groups, 0, "channels must divide into groups");
        let spatial: usize = shape[2..].iter().product::<usize>().max(1);
        let gsize = (c / groups) * spatial;
        let x3 = xv
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((n, groups, gsize))
            .unwrap();
        let mut out = x3.clone();
        let mut mean = Array2::<f64>::zeros((n, groups));
        let mut rstd = Array2::<f64>::zeros((n, groups));
        for i in 0..n {
            for g in 0..groups {
                let lane = x3.slice(s![i, g, ..]);
                let m = lane.sum() / gsize as f64;
                let var = lane.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / gsize as f64;
                let r = 1.0 / (var + eps).sqrt();
                mean[(i, g)] = m;
                rstd[(i, g)] = r;
                let mut o = out.slice_mut(s![i, g, ..]);
                o.mapv_inplace(|v| (v - m) * r);
            }
        }
        // Per-channel affine.
        let g1 = as1(&self.nodes[gamma.0].value);
        let b1 = as1(&self.nodes[beta.0].value);
        let mut out4 = out.into_shape_with_order((n, c, spatial)).unwrap();
        for ch in 0..c {
            let mut lane = out4.slice_mut(s![.., ch, ..]);
            lane.mapv_inplace(|v| v * g1[ch]);
            lane += b1[ch];
        }
        let value = out4.into_dyn().into_shape_with_order(IxDyn(&shape)).unwrap();
        self.push(
            value,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean,
                rstd,
            },
        )
    }

    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let wv = self.nodes[w.0].value.clone();
        let xs = xv.shape().to_vec();
        let ws = wv.shape().to_vec();
        assert_eq!(xs.len(), 5, "conv3d input must be (N,C,T,H,W)");
        assert_eq!(ws.len(), 5, "conv3d weight must be (Cout,Cin,kt,kh,kw)");
        assert_eq!(xs[1], ws[1], "conv3d channel mismatch");
        let geom = Conv3Geom {
            kernel: (ws[2], ws[3], ws[4]),
            stride,
            pad,
        };
        let (n, cin) = (xs[0], xs[1]);
        let idim = (xs[2], xs[3], xs[4]);
        let odim = conv_out_dims(idim, geom);
        let cout = ws[0];
        let k3 = ws[2] * ws[3] * ws[4];
        let wmat = wv
            .into_shape_with_order((cout, cin * k3))
            .expect("weight reshape");
        let mut out5 = Vec::with_capacity(n);
        let mut cols_cache = Vec::with_capacity(n);
        let x5 = xv.into_dimensionality::<ndarray::Ix5>().unwrap();
        for i in 0..n {
            let cols = im2col3d(&x5.index_axis(Axis(0), i), geom, odim);
            let o = wmat.dot(&cols); // (cout, T'H'W')
            out5.push(o);
            cols_cache.push(cols);
        }
        let mut value = Arr::zeros(IxDyn(&[n, cout, odim.0, odim.1, odim.2]));
        for (i, o) in out5.iter().enumerate() {
            let o5 = o
                .view()
                .into_shape_with_order((cout, odim.0, odim.1, odim.2))
                .unwrap();
            value.index_axis_mut(Axis(0), i).assign(&o5);
        }
        if let Some(b) = bias {
            let b1 = as1(&self.nodes[b.0].value).to_owned();
            for (ch, mut lane) in value.axis_iter_mut(Axis(1)).enumerate() {
                lane += b1[ch];
            }
        }
        self.push(
            value,
            Op::Conv3d {
                x,
                w,
                bias,
                geom,
                cols: cols_cache,
            },
        )
    }

    /// 2-D convolution as a thin wrapper over the 3-D machinery (T = 1).
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be (N,C,H,W)");
        assert_eq!(ws.len(), 4, "conv2d weight must be (Cout,Cin,kh,kw)");
        let x5 = self.reshape(x, &[xs[0], xs[1], 1, xs[2], xs[3]]);
        let w5 = self.reshape(w, &[ws[0], ws[1], 1, ws[2], ws[3]]);
        let out = self.conv3d(x5, w5, bias, (1, stride.0, stride.1), (0, pad.0, pad.1));
        let os = self.shape(out).to_vec();
        self.reshape(out, &[os[0], os[1], os[3], os[4]])
    }

    pub fn conv_transpose3d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let wv = self.nodes[w.0].value.clone();
        let xs = xv.shape().to_vec();
        let ws = wv.shape().to_vec();
        assert_eq!(xs.len(), 5, "conv_transpose3d input must be (N,C,T,H,W)");
        assert_eq!(ws.len(), 5, "conv_transpose3d weight must be (Cin,Cout,k..)");
        assert_eq!(xs[1], ws[0], "conv_transpose3d channel mismatch");
        let geom = Conv3Geom {
            kernel: (ws[2], ws[3], ws[4]),
            stride,
            pad,
        };
        let (n, cin, cout) = (xs[0], xs[1], ws[1]);
        let idim = (xs[2], xs[3], xs[4]);
        // Output dims invert the conv formula (no output padding).
        let odim = (
            (idim.0 - 1) * stride.0 + geom.kernel.0 - 2 * pad.0,
            (idim.1 - 1) * stride.1 + geom.kernel.1 - 2 * pad.1,
            (idim.2 - 1) * stride.2 + geom.kernel.2 - 2 * pad.2,
        );
        let k3 = geom.kernel.0 * geom.kernel.1 * geom.kernel.2;
        // (cin, cout*k3) -> transposed to (cout*k3, cin)
        let wmat = wv
            .into_shape_with_order((cin, cout * k3))
            .expect("weight reshape");
        let x5 = xv.into_dimensionality::<ndarray::Ix5>().unwrap();
        let mut value = Arr::zeros(IxDyn(&[n, cout, odim.0, odim.1, odim.2]));
        for i in 0..n {
            let xmat = x5
                .index_axis(Axis(0), i)
                .as_standard_layout()
                .to_owned()
                .into_shape_with_order((cin, idim.0 * idim.1 * idim.2))
                .unwrap();
            let cols = wmat.t().dot(&xmat); // (cout*k3, THW)
            let o = col2im3d(&cols, cout, geom, idim, odim);
            value
                .index_axis_mut(Axis(0), i)
                .assign(&o.into_shape_with_order((cout, odim.0, odim.1, odim.2)).unwrap());
        }
        if let Some(b) = bias {
            let b1 = as1(&self.nodes[b.0].value).to_owned();
            for (ch, mut lane) in value.axis_iter_mut(Axis(1)).enumerate() {
                lane += b1[ch];
            }
        }
        self.push(value, Op::ConvTranspose3d { x, w, bias, geom })
    }

    /// Applies each of the P bank filters to every input channel
    /// (stride 1, odd kernel, same padding).
    pub fn bank_conv2d(&mut self, x: Var, bank: Var) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let bv = self.nodes[bank.0].value.clone();
        let xs = xv.shape().to_vec();
        let bs = bv.shape().to_vec();
        assert_eq!(xs.len(), 4, "bank_conv2d input must be (N,C,H,W)");
        assert_eq!(bs.len(), 3, "bank must be (P,k,k)");
        assert_eq!(bs[1] % 2, 1, "bank kernel must be odd");
        assert_eq!(bs[1], bs[2], "bank kernel must be square");
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (p, k) = (bs[0], bs[1]);
        let pad = k / 2;
        let geom = Conv3Geom {
            kernel: (1, k, k),
            stride: (1, 1, 1),
            pad: (0, pad, pad),
        };
        let bmat = bv.into_shape_with_order((p, k * k)).unwrap();
        let x4 = xv.into_dimensionality::<ndarray::Ix4>().unwrap();
        let mut value = Arr::zeros(IxDyn(&[n, c * p, h, w]));
        let mut cols_cache = Vec::with_capacity(n * c);
        for i in 0..n {
            for ch in 0..c {
                let plane = x4
                    .slice(s![i, ch, .., ..])
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order((1, 1, h, w))
                    .unwrap();
                let cols = im2col3d(&plane.view().into_dimensionality().unwrap(), geom, (1, h, w));
                let o = bmat.dot(&cols); // (P, HW)
                for q in 0..p {
                    let dst_ch = ch * p + q;
                    value
                        .slice_mut(s![i, dst_ch, .., ..])
                        .assign(&o.row(q).into_shape_with_order((h, w)).unwrap());
                }
                cols_cache.push(cols);
            }
        }
        self.push(
            value,
            Op::BankConv2d {
                x,
                bank,
                cols: cols_cache,
            },
        )
    }

    pub fn max_pool2d(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize)) -> Var {
        let xv = self.nodes[x.0].value.clone();
        let xs = xv.shape().to_vec();
        assert_eq!(xs.len(), 4, "max_pool2d input must be (N,C,H,W)");
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let oh = (h - kernel.0) / stride.0 + 1;
        let ow = (w - kernel.1) / stride.1 + 1;
        let x4 = xv.into_dimensionality::<ndarray::Ix4>().unwrap();
        let mut value = Array4::<f64>::zeros((n, c, oh, ow));
        let mut argmax = vec![0usize; n * c * oh * ow];
        let mut idx = 0;
        for i in 0..n {
            for ch in 0..c {
                for y in 0..oh {
                    for xcol in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_pos = 0;
                        for ky in 0..kernel.0 {
                            for kx in 0..kernel.1 {
                                let (sy, sx) = (y * stride.0 + ky, xcol * stride.1 + kx);
                                let v = x4[(i, ch, sy, sx)];
                                if v > best {
                                    best = v;
                                    best_pos = sy * w + sx;
                                }
                            }
                        }
                        value[(i, ch, y, xcol)] = best;
                        argmax[idx] = best_pos;
                        idx += 1;
                    }
                }
            }
        }
        self.push(
            value.into_dyn(),
            Op::MaxPool2d { x, argmax },
        )
    }

    pub fn upsample2x(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let xs = xv.shape().to_vec();
        assert_eq!(xs.len(), 4, "upsample2x input must be (N,C,H,W)");
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let x4 = xv.view().into_dimensionality::<ndarray::Ix4>().unwrap();
        let mut value = Array4::<f64>::zeros((n, c, 2 * h, 2 * w));
        for i in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for xcol in 0..w {
                        let v = x4[(i, ch, y, xcol)];
                        value[(i, ch, 2 * y, 2 * xcol)] = v;
                        value[(i, ch, 2 * y + 1, 2 * xcol)] = v;
                        value[(i, ch, 2 * y, 2 * xcol + 1)] = v;
                        value[(i, ch, 2 * y + 1, 2 * xcol + 1)] = v;
                    }
                }
            }
        }
        self.push(value.into_dyn(), Op::Upsample2x(x))
    }

    /// Reverse sweep from `loss` (must be a scalar node). Returns gradients
    /// for every parameter reachable from it.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward needs a scalar loss"
        );
        let mut adj: Vec<Option<Arr>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Arr::ones(self.nodes[loss.0].value.raw_dim()));
        let mut grads = Grads::new(self.store.len());
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            self.backprop_node(id, g, &mut adj, &mut grads);
        }
        grads
    }

    fn backprop_node(&self, id: usize, g: Arr, adj: &mut Vec<Option<Arr>>, grads: &mut Grads) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Input | Op::Const => {}
            Op::Param(pid) => grads.accumulate(*pid, g),
            Op::Add(a, b) => {
                accum(adj, *a, g.clone());
                accum(adj, *b, g);
            }
            Op::Sub(a, b) => {
                accum(adj, *a, g.clone());
                accum(adj, *b, g.mapv(|x| -x));
            }
            Op::Mul(a, b) => {
                accum(adj, *a, &g * &self.nodes[b.0].value);
                accum(adj, *b, &g * &self.nodes[a.0].value);
            }
            Op::Neg(a) => accum(adj, *a, g.mapv(|x| -x)),
            Op::Scale(a, c) => accum(adj, *a, g.mapv(|x| c * x)),
            Op::AddBias { x, bias, axis } => {
                let mut db = Array1::<f64>::zeros(self.nodes[bias.0].value.len());
                for (i, lane) in g.axis_iter(Axis(*axis)).enumerate() {
                    db[i] += lane.sum();
                }
                accum(adj, *x, g);
                accum(adj, *bias, db.into_dyn());
            }
            Op::Matmul(a, b) => {
                let g2 = as2(&g);
                let av = as2(&self.nodes[a.0].value);
                let bv = as2(&self.nodes[b.0].value);
                accum(adj, *a, g2.dot(&bv.t()).into_dyn());
                accum(adj, *b, av.t().dot(&g2).into_dyn());
            }
            Op::Relu(a) => {
                let mask = self.nodes[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                accum(adj, *a, &g * &mask);
            }
            Op::Sigmoid(a) => {
                let sg = node.value.mapv(|s| s * (1.0 - s));
                accum(adj, *a, &g * &sg);
            }
            Op::Tanh(a) => {
                let tg = node.value.mapv(|t| 1.0 - t * t);
                accum(adj, *a, &g * &tg);
            }
            Op::Sqrt(a) => {
                let dg = node.value.mapv(|y| if y > 0.0 { 0.5 / y } else { 0.0 });
                accum(adj, *a, &g * &dg);
            }
            Op::SoftmaxLast(a) => {
                // dx = y ⊙ (g − sum_last(g ⊙ y))
                let y = &node.value;
                let last = y.ndim() - 1;
                let mut dx = (&g * y).into_dyn();
                let sums = dx.sum_axis(Axis(last));
                let sums = sums.as_standard_layout();
                for ((mut drow, yrow), s) in dx
                    .rows_mut()
                    .into_iter()
                    .zip(y.rows())
                    .zip(sums.iter())
                {
                    for (dv, yv) in drow.iter_mut().zip(yrow.iter()) {
                        *dv -= s * yv;
                    }
                }
                accum(adj, *a, dx);
            }
            Op::Sum(a) => {
                let gs = *g.iter().next().unwrap();
                accum(
                    adj,
                    *a,
                    Arr::from_elem(self.nodes[a.0].value.raw_dim(), gs),
                );
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len() as f64;
                let gs = *g.iter().next().unwrap() / n;
                accum(
                    adj,
                    *a,
                    Arr::from_elem(self.nodes[a.0].value.raw_dim(), gs),
                );
            }
            Op::Reshape(a) => {
                let back = g
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order(self.nodes[a.0].value.raw_dim())
                    .unwrap();
                accum(adj, *a, back);
            }
            Op::Transpose(a, perm) => {
                let mut inv = vec![0usize; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let back = g
                    .permuted_axes(IxDyn(&inv))
                    .as_standard_layout()
                    .to_owned();
                accum(adj, *a, back);
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for part in parts {
                    let len = self.nodes[part.0].value.shape()[*axis];
                    let piece = g
                        .slice_axis(Axis(*axis), Slice::from(offset..offset + len))
                        .to_owned();
                    accum(adj, *part, piece);
                    offset += len;
                }
            }
            Op::SliceAxis { x, axis, start, end } => {
                let mut back = Arr::zeros(self.nodes[x.0].value.raw_dim());
                back.slice_axis_mut(Axis(*axis), Slice::from(*start..*end))
                    .assign(&g);
                accum(adj, *x, back);
            }
            Op::Detach(_) => {}
            Op::Embedding { table, ids } => {
                let g2 = as2(&g);
                let mut dt = Array2::<f64>::zeros(as2(&self.nodes[table.0].value).raw_dim());
                for (i, &id) in ids.iter().enumerate() {
                    let mut row = dt.row_mut(id);
                    row += &g2.row(i);
                }
                accum(adj, *table, dt.into_dyn());
            }
            Op::Conv3d {
                x,
                w,
                bias,
                geom,
                cols,
            } => self.backprop_conv3d(*x, *w, *bias, *geom, cols, &g, adj),
            Op::ConvTranspose3d { x, w, bias, geom } => {
                self.backprop_conv_transpose3d(*x, *w, *bias, *geom, &g, adj)
            }
            Op::BankConv2d { x, bank, cols } => self.backprop_bank_conv2d(*x, *bank, cols, &g, adj),
            Op::MaxPool2d { x, argmax } => {
                let xs = self.nodes[x.0].value.shape().to_vec();
                let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let gs = g.shape().to_vec();
                let (oh, ow) = (gs[2], gs[3]);
                let g4 = g.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let mut dx = Array4::<f64>::zeros((n, c, h, w));
                let mut idx = 0;
                for i in 0..n {
                    for ch in 0..c {
                        for y in 0..oh {
                            for xcol in 0..ow {
                                let pos = argmax[idx];
                                dx[(i, ch, pos / w, pos % w)] += g4[(i, ch, y, xcol)];
                                idx += 1;
                            }
                        }
                    }
                }
                accum(adj, *x, dx.into_dyn());
            }
            Op::Upsample2x(x) => {
                let xs = self.nodes[x.0].value.shape().to_vec();
                let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let g4 = g.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let mut dx = Array4::<f64>::zeros((n, c, h, w));
                for i in 0..n {
                    for ch in 0..c {
                        for y in 0..h {
                            for xcol in 0..w {
                                dx[(i, ch, y, xcol)] = g4[(i, ch, 2 * y, 2 * xcol)]
                                    + g4[(i, ch, 2 * y + 1, 2 * xcol)]
                                    + g4[(i, ch, 2 * y, 2 * xcol + 1)]
                                    + g4[(i, ch, 2 * y + 1, 2 * xcol + 1)];
                            }
                        }
                    }
                }
                accum(adj, *x, dx.into_dyn());
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let xv = &self.nodes[x.0].value;
                let d = *xv.shape().last().unwrap();
                let rows = xv.len() / d;
                let x2 = xv
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order((rows, d))
                    .unwrap();
                let g2 = g
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order((rows, d))
                    .unwrap();
                let gam = as1(&self.nodes[gamma.0].value).to_owned();
                let mut dx = Array2::<f64>::zeros((rows, d));
                let mut dgamma = Array1::<f64>::zeros(d);
                let mut dbeta = Array1::<f64>::zeros(d);
                let mean1 = as1(mean);
                let rstd1 = as1(rstd);
                for i in 0..rows {
                    let m = mean1[i];
                    let r = rstd1[i];
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for j in 0..d {
                        let xhat = (x2[(i, j)] - m) * r;
                        let go = g2[(i, j)];
                        dgamma[j] += go * xhat;
                        dbeta[j] += go;
                        let dxhat = go * gam[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    let dinv = 1.0 / d as f64;
                    for j in 0..d {
                        let xhat = (x2[(i, j)] - m) * r;
                        let dxhat = g2[(i, j)] * gam[j];
                        dx[(i, j)] =
                            r * (dxhat - dinv * sum_dxhat - xhat * dinv * sum_dxhat_xhat);
                    }
                }
                accum(
                    adj,
                    *x,
                    dx.into_dyn().into_shape_with_order(xv.raw_dim()).unwrap(),
                );
                accum(adj, *gamma, dgamma.into_dyn());
                accum(adj, *beta, dbeta.into_dyn());
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean,
                rstd,
            } => {
                let xv = &self.nodes[x.0].value;
                let shape = xv.shape().to_vec();
                let (n, c) = (shape[0], shape[1]);
                let spatial: usize = shape[2..].iter().product::<usize>().max(1);
                let cpg = c / groups;
                let gsize = cpg * spatial;
                let x3 = xv
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order((n, c, spatial))
                    .unwrap();
                let g3 = g
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order((n, c, spatial))
                    .unwrap();
                let gam = as1(&self.nodes[gamma.0].value).to_owned();
                let mut dx = ndarray::Array3::<f64>::zeros((n, c, spatial));
                let mut dgamma = Array1::<f64>::zeros(c);
                let mut dbeta = Array1::<f64>::zeros(c);
                for i in 0..n {
                    for grp in 0..*groups {
                        let m = mean[(i, grp)];
                        let r = rstd[(i, grp)];
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for cc in 0..cpg {
                            let ch = grp * cpg + cc;
                            for sidx in 0..spatial {
                                let xhat = (x3[(i, ch, sidx)] - m) * r;
                                let go = g3[(i, ch, sidx)];
                                dgamma[ch] += go * xhat;
                                dbeta[ch] += go;
                                let dxhat = go * gam[ch];
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * xhat;
                            }
                        }
                        let minv = 1.0 / gsize as f64;
                        for cc in 0..cpg {
                            let ch = grp * cpg + cc;
                            for sidx in 0..spatial {
                                let xhat = (x3[(i, ch, sidx)] - m) * r;
                                let dxhat = g3[(i, ch, sidx)] * gam[ch];
                                dx[(i, ch, sidx)] = r
                                    * (dxhat - minv * sum_dxhat - xhat * minv * sum_dxhat_xhat);
                            }
                        }
                    }
                }
                accum(
                    adj,
                    *x,
                    dx.into_dyn().into_shape_with_order(xv.raw_dim()).unwrap(),
                );
                accum(adj, *gamma, dgamma.into_dyn());
                accum(adj, *beta, dbeta.into_dyn());
            }
            Op::Mse(a, b) => {
                let gs = *g.iter().next().unwrap();
                let diff = &self.nodes[a.0].value - &self.nodes[b.0].value;
                let scale = 2.0 * gs / diff.len() as f64;
                accum(adj, *a, diff.mapv(|x| x * scale));
                accum(adj, *b, diff.mapv(|x| -x * scale));
            }
            Op::CrossEntropyLogits {
                logits,
                targets,
                probs,
            } => {
                let gs = *g.iter().next().unwrap();
                let n = targets.len() as f64;
                let mut dl = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    dl[(i, t)] -= 1.0;
                }
                dl.mapv_inplace(|x| x * gs / n);
                accum(adj, *logits, dl.into_dyn());
            }
        }
    }

    fn backprop_conv3d(
        &self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: Conv3Geom,
        cols: &[Array2<f64>],
        g: &Arr,
        adj: &mut Vec<Option<Arr>>,
    ) {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let ws = self.nodes[w.0].value.shape().to_vec();
        let (n, cin, cout) = (xs[0], xs[1], ws[0]);
        let idim = (xs[2], xs[3], xs[4]);
        let odim = conv_out_dims(idim, geom);
        let k3 = geom.kernel.0 * geom.kernel.1 * geom.kernel.2;
        let opos = odim.0 * odim.1 * odim.2;
        let wmat = self.nodes[w.0]
            .value
            .view()
            .into_shape_with_order((cout, cin * k3))
            .unwrap()
            .to_owned();
        let mut dw = Array2::<f64>::zeros((cout, cin * k3));
        let mut dx = Arr::zeros(IxDyn(&xs));
        let g5 = g.view().into_dimensionality::<ndarray::Ix5>().unwrap();
        for i in 0..n {
            let go = g5
                .index_axis(Axis(0), i)
                .as_standard_layout()
                .to_owned()
                .into_shape_with_order((cout, opos))
                .unwrap();
            dw += &go.dot(&cols[i].t());
            let dcols = wmat.t().dot(&go); // (cin*k3, opos)
            let dxi = col2im3d(&dcols, cin, geom, odim, idim);
            dx.index_axis_mut(Axis(0), i).assign(
                &dxi.into_shape_with_order((cin, idim.0, idim.1, idim.2))
                    .unwrap(),
            );
        }
        accum(adj, x, dx);
        accum(
            adj,
            w,
            dw.into_dyn().into_shape_with_order(IxDyn(&ws)).unwrap(),
        );
        if let Some(b) = bias {
            let mut db = Array1::<f64>::zeros(cout);
            for (ch, lane) in g.axis_iter(Axis(1)).enumerate() {
                db[ch] = lane.sum();
            }
            accum(adj, b, db.into_dyn());
        }
    }

    fn backprop_conv_transpose3d(
        &self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: Conv3Geom,
        g: &Arr,
        adj: &mut Vec<Option<Arr>>,
    ) {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let ws = self.nodes[w.0].value.shape().to_vec();
        let (n, cin, cout) = (xs[0], xs[1], ws[1]);
        let idim = (xs[2], xs[3], xs[4]);
        let k3 = geom.kernel.0 * geom.kernel.1 * geom.kernel.2;
        let ipos = idim.0 * idim.1 * idim.2;
        let wmat = self.nodes[w.0]
            .value
            .view()
            .into_shape_with_order((cin, cout * k3))
            .unwrap()
            .to_owned();
        let g5 = g.view().into_dimensionality::<ndarray::Ix5>().unwrap();
        let x5 = self.nodes[x.0]
            .value
            .view()
            .into_dimensionality::<ndarray::Ix5>()
            .unwrap();
        let mut dw = Array2::<f64>::zeros((cin, cout * k3));
        let mut dx = Arr::zeros(IxDyn(&xs));
        for i in 0..n {
            // im2col of the output-side gradient, with the same geometry the
            // forward used to scatter: this is the exact adjoint pairing.
            let dcols = im2col3d(&g5.index_axis(Axis(0), i), geom, idim); // (cout*k3, ipos)
            let xmat = x5
                .index_axis(Axis(0), i)
                .as_standard_layout()
                .to_owned()
                .into_shape_with_order((cin, ipos))
                .unwrap();
            dw += &xmat.dot(&dcols.t());
            let dxi = wmat.dot(&dcols); // (cin, ipos)
            dx.index_axis_mut(Axis(0), i).assign(
                &dxi.into_shape_with_order((cin, idim.0, idim.1, idim.2))
                    .unwrap(),
            );
        }
        accum(adj, x, dx);
        accum(
            adj,
            w,
            dw.into_dyn().into_shape_with_order(IxDyn(&ws)).unwrap(),
        );
        if let Some(b) = bias {
            let mut db = Array1::<f64>::zeros(cout);
            for (ch, lane) in g.axis_iter(Axis(1)).enumerate() {
                db[ch] = lane.sum();
            }
            accum(adj, b, db.into_dyn());
        }
    }

    fn backprop_bank_conv2d(
        &self,
        x: Var,
        bank: Var,
        cols: &[Array2<f64>],
        g: &Arr,
        adj: &mut Vec<Option<Arr>>,
    ) {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let bs = self.nodes[bank.0].value.shape().to_vec();
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (p, k) = (bs[0], bs[1]);
        let pad = k / 2;
        let geom = Conv3Geom {
            kernel: (1, k, k),
            stride: (1, 1, 1),
            pad: (0, pad, pad),
        };
        let bmat = self.nodes[bank.0]
            .value
            .view()
            .into_shape_with_order((p, k * k))
            .unwrap()
            .to_owned();
        let g4 = g.view().into_dimensionality::<ndarray::Ix4>().unwrap();
        let mut dbank = Array2::<f64>::zeros((p, k * k));
        let mut dx = Arr::zeros(IxDyn(&xs));
        for i in 0..n {
            for ch in 0..c {
                let mut go = Array2::<f64>::zeros((p, h * w));
                for q in 0..p {
                    let lane = g4.slice(s![i, ch * p + q, .., ..]);
                    go.row_mut(q)
                        .assign(&lane.as_standard_layout().into_shape_with_order(h * w).unwrap());
                }
                dbank += &go.dot(&cols[i * c + ch].t());
                let dcols = bmat.t().dot(&go); // (k2, HW)
                let dplane = col2im3d(&dcols, 1, geom, (1, h, w), (1, h, w));
                let dp = dplane.into_shape_with_order((h, w)).unwrap();
                let mut dst = dx.slice_mut(s![i, ch, .., ..]);
                dst += &dp;
            }
        }
        accum(adj, x, dx);
        accum(
            adj,
            bank,
            dbank.into_dyn().into_shape_with_order(IxDyn(&bs)).unwrap(),
        );
    }
}

fn accum(adj: &mut [Option<Arr>], v: Var, g: Arr) {
    match &mut adj[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

fn as2<'a>(a: &'a Arr) -> ndarray::ArrayView2<'a, f64> {
    a.view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("expected 2-D tensor")
}

fn as1<'a>(a: &'a Arr) -> ndarray::ArrayView1<'a, f64> {
    a.view()
        .into_dimensionality::<ndarray::Ix1>()
        .expect("expected 1-D tensor")
}

pub(crate) fn conv_out_dims(
    idim: (usize, usize, usize),
    geom: Conv3Geom,
) -> (usize, usize, usize) {
    let o = |i: usize, k: usize, st: usize, p: usize| {
        assert!(i + 2 * p >= k, "kernel larger than padded input");
        (i + 2 * p - k) / st + 1
    };
    (
        o(idim.0, geom.kernel.0, geom.stride.0, geom.pad.0),
        o(idim.1, geom.kernel.1, geom.stride.1, geom.pad.1),
        o(idim.2, geom.kernel.2, geom.stride.2, geom.pad.2),
    )
}

/// Gather sliding windows of `x` (C,T,H,W) into a (C*kt*kh*kw, T'*H'*W')
/// matrix. Out-of-bounds (zero padding) entries stay 0.
pub(crate) fn im2col3d(
    x: &ArrayView4<f64>,
    geom: Conv3Geom,
    odim: (usize, usize, usize),
) -> Array2<f64> {
    let (c, t, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (kt, kh, kw) = geom.kernel;
    let (st, sh, sw) = geom.stride;
    let (pt, ph, pw) = geom.pad;
    let (ot, oh, ow) = odim;
    let mut cols = Array2::<f64>::zeros((c * kt * kh * kw, ot * oh * ow));
    for ch in 0..c {
        for it in 0..kt {
            for ih in 0..kh {
                for iw in 0..kw {
                    let row = ((ch * kt + it) * kh + ih) * kw + iw;
                    let mut dst = cols.row_mut(row);
                    let mut col = 0;
                    for t_out in 0..ot {
                        let ti = (t_out * st + it) as isize - pt as isize;
                        for h_out in 0..oh {
                            let hi = (h_out * sh + ih) as isize - ph as isize;
                            for w_out in 0..ow {
                                let wi = (w_out * sw + iw) as isize - pw as isize;
                                if ti >= 0
                                    && (ti as usize) < t
                                    && hi >= 0
                                    && (hi as usize) < h
                                    && wi >= 0
                                    && (wi as usize) < w
                                {
                                    dst[col] = x[(ch, ti as usize, hi as usize, wi as usize)];
                                }
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3d`]: scatter-add columns back into a (C,T,H,W) image.
pub(crate) fn col2im3d(
    cols: &Array2<f64>,
    c: usize,
    geom: Conv3Geom,
    odim: (usize, usize, usize),
    idim: (usize, usize, usize),
) -> Arr {
    let (kt, kh, kw) = geom.kernel;
    let (st, sh, sw) = geom.stride;
    let (pt, ph, pw) = geom.pad;
    let (ot, oh, ow) = odim;
    let (t, h, w) = idim;
    let mut img = Array4::<f64>::zeros((c, t, h, w));
    for ch in 0..c {
        for it in 0..kt {
            for ih in 0..kh {
                for iw in 0..kw {
                    let row = ((ch * kt + it) * kh + ih) * kw + iw;
                    let src = cols.row(row);
                    let mut col = 0;
                    for t_out in 0..ot {
                        let ti = (t_out * st + it) as isize - pt as isize;
                        for h_out in 0..oh {
                            let hi = (h_out * sh + ih) as isize - ph as isize;
                            for w_out in 0..ow {
                                let wi = (w_out * sw + iw) as isize - pw as isize;
                                if ti >= 0
                                    && (ti as usize) < t
                                    && hi >= 0
                                    && (hi as usize) < h
                                    && wi >= 0
                                    && (wi as usize) < w
                                {
                                    img[(ch, ti as usize, hi as usize, wi as usize)] += src[col];
                                }
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    img.into_dyn()
}
