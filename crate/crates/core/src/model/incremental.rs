use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::layers::{gelu, layer_norm_row, linear, softmax_in_place};
use super::params::Model;
use super::transformer::log_softmax_rows;
use crate::bitext::Lang;
use crate::error::Result;

struct SourceCache {
    /// Per decoder layer: cross-attention keys and values over the source.
    keys: Vec<Array2<f64>>,
    values: Vec<Array2<f64>>,
}

#[derive(Clone)]
struct RowCache {
    source: usize,
    /// Per decoder layer: self-attention keys and values so far.
    keys: Vec<Array2<f64>>,
    values: Vec<Array2<f64>>,
}

/// Step-by-step decoder over any number of rows, each attached to one of
/// the encoded sources. Equivalent to the full forward pass.
pub struct IncrementalDecoder<'m> {
    model: &'m Model,
    tgt_lang: usize,
    sources: Vec<SourceCache>,
    rows: Vec<RowCache>,
    step: usize,
}

fn ln_rows(x: ArrayView2<f64>, m: &Model, prefix: &str) -> Array2<f64> {
    let g = m.params.vector(&format!("{prefix}.g"));
    let b = m.params.vector(&format!("{prefix}.b"));
    let mut out = Array2::zeros(x.raw_dim());
    for (mut o, r) in out.rows_mut().into_iter().zip(x.rows()) {
        o.assign(&layer_norm_row(r, g, b));
    }
    out
}

fn attend(q: ArrayView1<f64>, keys: ArrayView2<f64>, values: ArrayView2<f64>, n_heads: usize) -> Array1<f64> {
    let d = q.len();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array1::zeros(d);
    let mut w = vec![0.0; keys.nrows()];
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let qh = q.slice(s![cols.clone()]);
        for (wi, k) in w.iter_mut().zip(keys.slice(s![.., cols.clone()]).rows()) {
            *wi = qh.dot(&k) * scale;
        }
        softmax_in_place(&mut w);
        let mut oh = out.slice_mut(s![cols.clone()]);
        for (wi, v) in w.iter().zip(values.slice(s![.., cols.clone()]).rows()) {
            oh.scaled_add(*wi, &v);
        }
    }
    out
}

fn adapter_rows(x: Array2<f64>, m: &Model, prefix: &str) -> Array2<f64> {
    if !m.params.contains(&format!("{prefix}.up.w")) {
        return x;
    }
    let act = linear(x.view(), &m.params, &format!("{prefix}.down")).mapv(|v| v.max(0.0));
    &x + &linear(act.view(), &m.params, &format!("{prefix}.up"))
}

impl<'m> IncrementalDecoder<'m> {
    /// Encodes `sources` and starts one row per source.
    pub fn new(model: &'m Model, sources: &[Vec<u32>], src_lang: Lang, tgt_lang: Lang) -> Result<Self> {
        let mut caches = Vec::with_capacity(sources.len());
        for src in sources {
            let enc = model.encode(src, src_lang)?;
            let mut keys = Vec::with_capacity(model.config.n_layers_dec);
            let mut values = Vec::with_capacity(model.config.n_layers_dec);
            for l in 0..model.config.n_layers_dec {
                keys.push(linear(enc.view(), &model.params, &format!("dec.{l}.cross.k")));
                values.push(linear(enc.view(), &model.params, &format!("dec.{l}.cross.v")));
            }
            caches.push(SourceCache { keys, values });
        }
        let d = model.config.d_model;
        let empty = || (0..model.config.n_layers_dec).map(|_| Array2::zeros((0, d))).collect::<Vec<_>>();
        let rows = (0..sources.len())
            .map(|i| RowCache { source: i, keys: empty(), values: empty() })
            .collect();
        Ok(IncrementalDecoder {
            model,
            tgt_lang: tgt_lang.index(),
            sources: caches,
            rows,
            step: 0,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Keeps (and possibly duplicates) the rows at `indices`, in order.
    pub fn select_rows(&mut self, indices: &[usize]) {
        self.rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
    }

    /// Feeds one token per row and returns next-token log-probabilities.
    /// Returns `None` when the position would exceed `max_len`.
    pub fn step(&mut self, tokens: &[u32]) -> Option<Array2<f64>> {
        assert_eq!(tokens.len(), self.rows.len(), "one token per row");
        let m = self.model;
        if self.step >= m.config.max_len {
            return None;
        }
        let p = &m.params;
        let h = m.config.n_heads;
        let n = tokens.len();
        let mut x = m.embed(tokens, &vec![self.step; n], &vec![self.tgt_lang; n]);
        for l in 0..m.config.n_layers_dec {
            let a_in = ln_rows(x.view(), m, &format!("dec.{l}.self_ln"));
            let q = linear(a_in.view(), p, &format!("dec.{l}.self.q"));
            let k = linear(a_in.view(), p, &format!("dec.{l}.self.k"));
            let v = linear(a_in.view(), p, &format!("dec.{l}.self.v"));
            let mut ctx = Array2::zeros(x.raw_dim());
            for (r, row) in self.rows.iter_mut().enumerate() {
                row.keys[l].push_row(k.row(r)).expect("width matches");
                row.values[l].push_row(v.row(r)).expect("width matches");
                ctx.row_mut(r).assign(&attend(q.row(r), row.keys[l].view(), row.values[l].view(), h));
            }
            x += &linear(ctx.view(), p, &format!("dec.{l}.self.o"));

            let c_in = ln_rows(x.view(), m, &format!("dec.{l}.cross_ln"));
            let q = linear(c_in.view(), p, &format!("dec.{l}.cross.q"));
            let mut ctx = Array2::zeros(x.raw_dim());
            for (r, row) in self.rows.iter().enumerate() {
                let src = &self.sources[row.source];
                ctx.row_mut(r).assign(&attend(q.row(r), src.keys[l].view(), src.values[l].view(), h));
            }
            let c = linear(ctx.view(), p, &format!("dec.{l}.cross.o"));
            x += &adapter_rows(c, m, &format!("dec.{l}.cross_adapter"));

            let f_in = ln_rows(x.view(), m, &format!("dec.{l}.ffn_ln"));
            let hid = linear(f_in.view(), p, &format!("dec.{l}.ffn.1")).mapv(gelu);
            let f = linear(hid.view(), p, &format!("dec.{l}.ffn.2"));
            x += &adapter_rows(f, m, &format!("dec.{l}.adapter"));
        }
        let z = ln_rows(x.view(), m, "dec.final_ln");
        let (_, w) = m.output_weight();
        let mut logits = z.dot(&w.t());
        logits += &p.vector("out.b");
        self.step += 1;
        Some(log_softmax_rows(logits))
    }
}
