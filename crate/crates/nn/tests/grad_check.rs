//! Finite-difference verification of every op's backward pass.
//!
//! For each op we build a tiny graph ending in a scalar loss, compute
//! analytic parameter gradients, and compare against central differences
//! evaluated by re-running the forward pass on a perturbed store.

use ndarray::IxDyn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skygpt_nn::{init, Arr, Graph, ParamId, ParamStore};

const FD_EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

/// Relative-or-absolute agreement between analytic and numeric gradients.
fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= TOL || diff <= TOL * analytic.abs().max(numeric.abs())
}

/// Check d(loss)/d(params) for a forward function against central differences.
fn check_grads<F>(store: &mut ParamStore, forward: F)
where
    F: Fn(&mut Graph) -> skygpt_nn::Var,
{
    let grads = {
        let mut g = Graph::new(store);
        let loss = forward(&mut g);
        g.backward(loss)
    };
    let ids: Vec<ParamId> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        let n = store.value(id).len();
        for flat in 0..n {
            let orig = store.value(id).as_slice().unwrap()[flat];
            set_flat(store, id, flat, orig + FD_EPS);
            let up = eval(store, &forward);
            set_flat(store, id, flat, orig - FD_EPS);
            let down = eval(store, &forward);
            set_flat(store, id, flat, orig);
            let numeric = (up - down) / (2.0 * FD_EPS);
            let analytic = grads
                .get(id)
                .map(|g| g.as_slice().unwrap()[flat])
                .unwrap_or(0.0);
            assert!(
                close(analytic, numeric),
                "param {} [{}]: analytic {} vs numeric {}",
                store.name(id),
                flat,
                analytic,
                numeric
            );
        }
    }
}

fn eval<F>(store: &ParamStore, forward: &F) -> f64
where
    F: Fn(&mut Graph) -> skygpt_nn::Var,
{
    let mut g = Graph::new(store);
    let loss = forward(&mut g);
    g.scalar(loss)
}

fn set_flat(store: &mut ParamStore, id: ParamId, flat: usize, value: f64) {
    store.value_mut(id).as_slice_mut().unwrap()[flat] = value;
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(42)
}

#[test]
fn elementwise_and_reductions() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let a = store.add("a", init::normal(&mut rng, &[3, 4], 1.0));
    let b = store.add("b", init::normal(&mut rng, &[3, 4], 1.0));
    check_grads(&mut store, |g| {
        let av = g.param(a);
        let bv = g.param(b);
        let s = g.add(av, bv);
        let d = g.sub(s, bv);
        let m = g.mul(d, av);
        let n = g.neg(m);
        let sc = g.scale(n, 0.7);
        let r = g.relu(sc);
        let t = g.tanh(r);
        let sg = g.sigmoid(t);
        g.mean(sg)
    });
}

#[test]
fn sqrt_guarded_at_zero() {
    let mut store = ParamStore::new();
    let a = store.add("a", init::full(&[3], 2.0));
    check_grads(&mut store, |g| {
        let av = g.param(a);
        let sq = g.sqrt(av);
        g.sum(sq)
    });
    // zero input: gradient defined as 0, forward must not produce NaN
    let mut store2 = ParamStore::new();
    let z = store2.add("z", init::zeros(&[2]));
    let mut g = Graph::new(&store2);
    let zv = g.param(z);
    let sq = g.sqrt(zv);
    let loss = g.sum(sq);
    let grads = g.backward(loss);
    assert_eq!(grads.get(z).unwrap().as_slice().unwrap(), &[0.0, 0.0]);
}

#[test]
fn matmul_bias_softmax() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let a = store.add("a", init::normal(&mut rng, &[4, 3], 1.0));
    let b = store.add("b", init::normal(&mut rng, &[3, 5], 1.0));
    let bias = store.add("bias", init::normal(&mut rng, &[5], 0.5));
    check_grads(&mut store, |g| {
        let av = g.param(a);
        let bv = g.param(b);
        let biasv = g.param(bias);
        let mm = g.matmul(av, bv);
        let mb = g.add_bias(mm, biasv, 1);
        let sm = g.softmax_last(mb);
        let sq = g.mul(sm, sm);
        g.sum(sq)
    });
}

#[test]
fn reshape_transpose_concat_slice() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let a = store.add("a", init::normal(&mut rng, &[2, 3, 4], 1.0));
    let b = store.add("b", init::normal(&mut rng, &[2, 3, 4], 1.0));
    check_grads(&mut store, |g| {
        let av = g.param(a);
        let bv = g.param(b);
        let cat = g.concat(&[av, bv], 1); // (2, 6, 4)
        let tr = g.transpose(cat, &[2, 0, 1]); // (4, 2, 6)
        let sl = g.slice_axis(tr, 2, 1, 5); // (4, 2, 4)
        let rs = g.reshape(sl, &[8, 4]);
        let sq = g.mul(rs, rs);
        g.mean(sq)
    });
}

#[test]
fn detach_blocks_gradient() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let a = store.add("a", init::normal(&mut rng, &[3], 1.0));
    let mut g = Graph::new(&store);
    let av = g.param(a);
    let d = g.detach(av);
    let m = g.mul(d, av); // grad wrt a flows only through the second factor
    let loss = g.sum(m);
    let grads = g.backward(loss);
    let expected = store.value(a).clone();
    let got = grads.get(a).unwrap();
    for (e, b) in expected.iter().zip(got.iter()) {
        assert!((e - b).abs() < 1e-12, "straight-through grad mismatch");
    }
}

#[test]
fn embedding_gather() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let table = store.add("table", init::normal(&mut rng, &[5, 3], 1.0));
    let ids = vec![0usize, 3, 3, 1];
    check_grads(&mut store, move |g| {
        let t = g.param(table);
        let e = g.embedding(t, &ids);
        let sq = g.mul(e, e);
        g.sum(sq)
    });
}

#[test]
fn losses() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let a = store.add("a", init::normal(&mut rng, &[4, 3], 1.0));
    let b = store.add("b", init::normal(&mut rng, &[4, 3], 1.0));
    check_grads(&mut store, |g| {
        let av = g.param(a);
        let bv = g.param(b);
        g.mse(av, bv)
    });
    let logits = store.add("logits", init::normal(&mut rng, &[4, 6], 1.0));
    let targets = vec![2usize, 0, 5, 5];
    check_grads(&mut store, move |g| {
        let l = g.param(logits);
        g.cross_entropy_logits(l, &targets)
    });
}

#[test]
fn layer_norm_grad() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let x = store.add("x", init::normal(&mut rng, &[3, 4, 5], 1.0));
    let gamma = store.add("gamma", init::normal(&mut rng, &[5], 0.3));
    let beta = store.add("beta", init::normal(&mut rng, &[5], 0.3));
    check_grads(&mut store, |g| {
        let xv = g.param(x);
        let ga = g.param(gamma);
        let be = g.param(beta);
        let ln = g.layer_norm(xv, ga, be, 1e-5);
        let sq = g.mul(ln, ln);
        g.mean(sq)
    });
}

#[test]
fn group_norm_grad() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let x = store.add("x", init::normal(&mut rng, &[2, 4, 3, 3], 1.0));
    let gamma = store.add("gamma", init::normal(&mut rng, &[4], 0.3));
    let beta = store.add("beta", init::normal(&mut rng, &[4], 0.3));
    check_grads(&mut store, |g| {
        let xv = g.param(x);
        let ga = g.param(gamma);
        let be = g.param(beta);
        let gn = g.group_norm(xv, ga, be, 2, 1e-5);
        let sq = g.mul(gn, gn);
        g.mean(sq)
    });
}

#[test]
fn conv3d_grad() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let x = store.add("x", init::normal(&mut rng, &[2, 2, 3, 5, 5], 1.0));
    let w = store.add("w", init::normal(&mut rng, &[3, 2, 2, 3, 3], 0.5));
    let b = store.add("b", init::normal(&mut rng, &[3], 0.5));
    check_grads(&mut store, |g| {
        let xv = g.param(x);
        let wv = g.param(w);
        let bv = g.param(b);
        let y = g.conv3d(xv, wv, Some(bv), (1, 2, 2), (0, 1, 1));
        let sq = g.mul(y, y);
        g.mean(sq)
    });
}

#[test]
fn conv2d_grad() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let x = store.add("x", init::normal(&mut rng, &[2, 3, 6, 6], 1.0));
    let w = store.add("w", init::normal(&mut rng, &[4, 3, 3, 3], 0.5));
    let b = store.add("b", init::normal(&mut rng, &[4], 0.5));
    check_grads(&mut store, |g| {
        let xv = g.param(x);
        let wv = g.param(w);
        let bv = g.param(b);
        let y = g.conv2d(xv, wv, Some(bv), (2, 2), (1, 1));
        let sq = g.mul(y, y);
        g.mean(sq)
    });
}

#[test]
fn conv_transpose3d_grad() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let x = store.add("x", init::normal(&mut rng, &[2, 3, 2, 3, 3], 1.0));
    let w = store.add("w", init::normal(&mut rng, &[3, 2, 2, 4, 4], 0.5));
    let b = store.add("b", init::normal(&mut rng, &[2], 0.5));
    check_grads(&mut store, |g| {
        let xv = g.param(x);
        let wv = g.param(w);
        let bv = g.param(b);
        let y = g.conv_transpose3d(xv, wv, Some(bv), (2, 2, 2), (1, 1, 1));
        let sq = g.mul(y, y);
        g.mean(sq)
    });
}

#[test]
fn conv_transpose3d_is_adjoint_of_conv3d() {
    // <conv(x), y> must equal <x, conv_transpose(y)> for matching geometry.
    // The conv weight (Cout, Cin, k..) doubles as the transpose-side weight
    // (Cin', Cout', k..) with Cin' = Cout.
    let mut rng = rng();
    let store = ParamStore::new();
    let x = init::normal(&mut rng, &[1, 2, 4, 7, 7], 1.0);
    let w = init::normal(&mut rng, &[3, 2, 2, 3, 3], 0.5);
    let mut g = Graph::new(&store);
    let xv = g.input(x.clone());
    let wv = g.input(w.clone());
    let cx = g.conv3d(xv, wv, None, (2, 2, 2), (0, 1, 1));
    let y = init::normal(&mut rng, g.shape(cx), 1.0);
    let inner1: f64 = (g.value(cx) * &y).sum();

    let mut g2 = Graph::new(&store);
    let yv = g2.input(y);
    let wv2 = g2.input(w);
    let ty = g2.conv_transpose3d(yv, wv2, None, (2, 2, 2), (0, 1, 1));
    let inner2: f64 = (g2.value(ty) * &x).sum();
    assert!(
        (inner1 - inner2).abs() < 1e-9,
        "adjoint identity violated: {inner1} vs {inner2}"
    );
}

#[test]
fn bank_conv2d_grad() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let x = store.add("x", init::normal(&mut rng, &[2, 2, 5, 5], 1.0));
    let bank = store.add("bank", init::normal(&mut rng, &[3, 3, 3], 0.5));
    check_grads(&mut store, |g| {
        let xv = g.param(x);
        let bv = g.param(bank);
        let y = g.bank_conv2d(xv, bv);
        let sq = g.mul(y, y);
        g.mean(sq)
    });
}

#[test]
fn max_pool_and_upsample_grad() {
    let mut rng = rng();
    let mut store = ParamStore::new();
    let x = store.add("x", init::normal(&mut rng, &[2, 2, 4, 4], 1.0));
    check_grads(&mut store, |g| {
        let xv = g.param(x);
        let p = g.max_pool2d(xv, (2, 2), (2, 2));
        let u = g.upsample2x(p);
        let sq = g.mul(u, u);
        g.mean(sq)
    });
}

#[test]
fn attention_layer_grad() {
    use skygpt_nn::layers::{causal_mask, MultiHeadAttention};
    let mut rng = rng();
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, &mut rng, "attn", 8, 2);
    let xid = store.add("x", init::normal(&mut rng, &[5, 8], 1.0));
    check_grads(&mut store, move |g| {
        let x = g.param(xid);
        let mask = g.constant(causal_mask(5));
        let y = mha.forward(g, x, x, Some(mask));
        let sq = g.mul(y, y);
        g.mean(sq)
    });
}

#[test]
fn dense_layers_grad() {
    use skygpt_nn::layers::Dense;
    let mut rng = rng();
    let mut store = ParamStore::new();
    let fc1 = Dense::new(&mut store, &mut rng, "fc1", 4, 6, true);
    let fc2 = Dense::new(&mut store, &mut rng, "fc2", 6, 2, true);
    let xid = store.add("x", init::normal(&mut rng, &[3, 4], 1.0));
    check_grads(&mut store, move |g| {
        let x = g.param(xid);
        let h = fc1.forward(g, x);
        let h = g.relu(h);
        let y = fc2.forward(g, h);
        let sq = g.mul(y, y);
        g.mean(sq)
    });
}
