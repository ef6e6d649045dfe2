//! Forward/backward primitives over row-major token matrices.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::params::{Gradients, Parameters};

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) fn linear(x: ArrayView2<f64>, p: &Parameters, prefix: &str) -> Array2<f64> {
    let mut y = x.dot(&p.mat(&format!("{prefix}.w")));
    y += &p.vector(&format!("{prefix}.b"));
    y
}

/// Returns `dx`; weight gradients go to `grads` when trainable.
pub(crate) fn linear_backward(
    dy: ArrayView2<f64>,
    x: ArrayView2<f64>,
    p: &Parameters,
    prefix: &str,
    grads: &mut Gradients,
) -> Array2<f64> {
    let (w, b) = (format!("{prefix}.w"), format!("{prefix}.b"));
    if p.is_trainable(&w) {
        grads.add(p, &w, x.t().dot(&dy).into_dyn());
    }
    if p.is_trainable(&b) {
        grads.add(p, &b, dy.sum_axis(Axis(0)).into_dyn());
    }
    dy.dot(&p.mat(&w).t())
}

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

pub(crate) fn layer_norm(x: ArrayView2<f64>, p: &Parameters, prefix: &str) -> (Array2<f64>, LnCache) {
    let g = p.vector(&format!("{prefix}.g"));
    let b = p.vector(&format!("{prefix}.b"));
    let n = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / n;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *r = 1.0 / (var + LN_EPS).sqrt();
        row *= *r;
    }
    let mut y = &xhat * &g;
    y += &b;
    (y, LnCache { xhat, rstd })
}

pub(crate) fn layer_norm_row(x: ArrayView1<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    Zip::from(&x).and(&g).and(&b).map_collect(|&x, &g, &b| (x - mean) * rstd * g + b)
}

pub(crate) fn layer_norm_backward(
    dy: ArrayView2<f64>,
    cache: &LnCache,
    p: &Parameters,
    prefix: &str,
    grads: &mut Gradients,
) -> Array2<f64> {
    let (gname, bname) = (format!("{prefix}.g"), format!("{prefix}.b"));
    if p.is_trainable(&gname) {
        grads.add(p, &gname, (&dy * &cache.xhat).sum_axis(Axis(0)).into_dyn());
    }
    if p.is_trainable(&bname) {
        grads.add(p, &bname, dy.sum_axis(Axis(0)).into_dyn());
    }
    let g = p.vector(&gname);
    let n = dy.ncols() as f64;
    let mut dx = &dy * &g;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
        let mean_d = row.sum() / n;
        let mean_dx = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        Zip::from(&mut row).and(&xh).for_each(|d, &x| *d = r * (*d - mean_d - x * mean_dx));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) struct FfnCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

/// Two-layer GELU feed-forward block.
pub(crate) fn ffn(x: ArrayView2<f64>, p: &Parameters, prefix: &str) -> (Array2<f64>, FfnCache) {
    let pre = linear(x, p, &format!("{prefix}.1"));
    let act = pre.mapv(gelu);
    let y = linear(act.view(), p, &format!("{prefix}.2"));
    (y, FfnCache { x: x.to_owned(), pre, act })
}

pub(crate) fn ffn_backward(dy: ArrayView2<f64>, c: &FfnCache, p: &Parameters, prefix: &str, grads: &mut Gradients) -> Array2<f64> {
    let mut dact = linear_backward(dy, c.act.view(), p, &format!("{prefix}.2"), grads);
    Zip::from(&mut dact).and(&c.pre).for_each(|d, &x| *d *= gelu_grad(x));
    linear_backward(dact.view(), c.x.view(), p, &format!("{prefix}.1"), grads)
}

pub(crate) struct AdapterCache {
    x: Array2<f64>,
    act: Array2<f64>,
}

/// `x + up(relu(down(x)))`.
pub(crate) fn adapter(x: ArrayView2<f64>, p: &Parameters, prefix: &str) -> (Array2<f64>, AdapterCache) {
    let act = linear(x, p, &format!("{prefix}.down")).mapv(|v| v.max(0.0));
    let y = &x + &linear(act.view(), p, &format!("{prefix}.up"));
    (y, AdapterCache { x: x.to_owned(), act })
}

pub(crate) fn adapter_backward(
    dy: ArrayView2<f64>,
    c: &AdapterCache,
    p: &Parameters,
    prefix: &str,
    grads: &mut Gradients,
) -> Array2<f64> {
    let mut dact = linear_backward(dy, c.act.view(), p, &format!("{prefix}.up"), grads);
    Zip::from(&mut dact).and(&c.act).for_each(|d, &a| {
        if a <= 0.0 {
            *d = 0.0;
        }
    });
    let dx = linear_backward(dact.view(), c.x.view(), p, &format!("{prefix}.down"), grads);
    dx + dy
}

/// Query/key row ranges of one sentence inside the concatenated batch.
#[derive(Debug, Clone)]
pub(crate) struct Span {
    pub q: Range<usize>,
    pub k: Range<usize>,
}

pub(crate) struct AttnCache {
    q_in: Array2<f64>,
    kv_in: Option<Array2<f64>>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

/// Multi-head attention. With `kv_in = None` the queries attend to
/// themselves; `causal` hides later positions within each span.
pub(crate) fn attention(
    q_in: ArrayView2<f64>,
    kv_in: Option<ArrayView2<f64>>,
    spans: &[Span],
    causal: bool,
    n_heads: usize,
    p: &Parameters,
    prefix: &str,
) -> (Array2<f64>, AttnCache) {
    let src = kv_in.unwrap_or(q_in);
    let q = linear(q_in, p, &format!("{prefix}.q"));
    let k = linear(src, p, &format!("{prefix}.k"));
    let v = linear(src, p, &format!("{prefix}.v"));
    let d = q.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = Array2::zeros((q.nrows(), d));
    let mut probs = Vec::with_capacity(spans.len() * n_heads);
    for sp in spans {
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![sp.q.clone(), cols.clone()]);
            let kh = k.slice(s![sp.k.clone(), cols.clone()]);
            let vh = v.slice(s![sp.k.clone(), cols.clone()]);
            let mut sc = qh.dot(&kh.t());
            sc *= scale;
            for (i, mut row) in sc.rows_mut().into_iter().enumerate() {
                let row = row.as_slice_mut().expect("contiguous");
                if causal {
                    row[i + 1..].fill(f64::NEG_INFINITY);
                }
                softmax_in_place(row);
            }
            ctx.slice_mut(s![sp.q.clone(), cols]).assign(&sc.dot(&vh));
            probs.push(sc);
        }
    }
    let out = linear(ctx.view(), p, &format!("{prefix}.o"));
    let cache = AttnCache {
        q_in: q_in.to_owned(),
        kv_in: kv_in.map(|x| x.to_owned()),
        q,
        k,
        v,
        probs,
        ctx,
    };
    (out, cache)
}

/// Returns `(d q_in, d kv_in)`; for self-attention both contributions are
/// summed into the first element and the second is `None`.
pub(crate) fn attention_backward(
    dout: ArrayView2<f64>,
    c: &AttnCache,
    spans: &[Span],
    n_heads: usize,
    p: &Parameters,
    prefix: &str,
    grads: &mut Gradients,
) -> (Array2<f64>, Option<Array2<f64>>) {
    let dctx = linear_backward(dout, c.ctx.view(), p, &format!("{prefix}.o"), grads);
    let d = c.q.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    let mut pi = 0;
    for sp in spans {
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let pr = &c.probs[pi];
            pi += 1;
            let dc = dctx.slice(s![sp.q.clone(), cols.clone()]);
            let vh = c.v.slice(s![sp.k.clone(), cols.clone()]);
            let qh = c.q.slice(s![sp.q.clone(), cols.clone()]);
            let kh = c.k.slice(s![sp.k.clone(), cols.clone()]);
            dv.slice_mut(s![sp.k.clone(), cols.clone()]).assign(&pr.t().dot(&dc));
            let mut ds = dc.dot(&vh.t());
            for (mut drow, prow) in ds.rows_mut().into_iter().zip(pr.rows()) {
                let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                Zip::from(&mut drow).and(&prow).for_each(|dd, &pp| *dd = pp * (*dd - dot) * scale);
            }
            dq.slice_mut(s![sp.q.clone(), cols.clone()]).assign(&ds.dot(&kh));
            dk.slice_mut(s![sp.k.clone(), cols]).assign(&ds.t().dot(&qh));
        }
    }
    let src = c.kv_in.as_ref().unwrap_or(&c.q_in);
    let dq_in = linear_backward(dq.view(), c.q_in.view(), p, &format!("{prefix}.q"), grads);
    let mut dsrc = linear_backward(dk.view(), src.view(), p, &format!("{prefix}.k"), grads);
    dsrc += &linear_backward(dv.view(), src.view(), p, &format!("{prefix}.v"), grads);
    match c.kv_in {
        Some(_) => (dq_in, Some(dsrc)),
        None => (dq_in + dsrc, None),
    }
}
