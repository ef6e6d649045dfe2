use std::ops::Range;

use ndarray::{s, Array2, ArrayView2, Axis};

use super::layers::{
    adapter, adapter_backward, attention, attention_backward, ffn, ffn_backward, layer_norm, layer_norm_backward,
    AdapterCache, AttnCache, FfnCache, LnCache, Span,
};
use super::params::{Gradients, Model, Parameters};
use crate::bitext::{Direction, Lang};
use crate::error::{Error, Result};
use crate::subword::{BOS, EOS, PAD};

/// One training example. The encoder reads `src` followed by `</s>`; the
/// decoder reads `dec_in` and predicts `dec_out` position by position, with
/// decoder positions starting at `dec_offset`. Trailing `PAD`s are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub src: Vec<u32>,
    pub src_lang: Lang,
    pub dec_in: Vec<u32>,
    pub dec_out: Vec<u32>,
    pub tgt_lang: Lang,
    pub dec_offset: usize,
}

fn strip_pads(ids: &[u32]) -> &[u32] {
    let n = ids.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
    &ids[..n]
}

impl Example {
    /// Decoder input `<s> y`, output `y </s>`.
    pub fn translation(src: &[u32], tgt: &[u32], dir: Direction) -> Self {
        let tgt = strip_pads(tgt);
        let mut dec_in = Vec::with_capacity(tgt.len() + 1);
        dec_in.push(BOS);
        dec_in.extend_from_slice(tgt);
        let mut dec_out = tgt.to_vec();
        dec_out.push(EOS);
        Example {
            src: strip_pads(src).to_vec(),
            src_lang: dir.src,
            dec_in,
            dec_out,
            tgt_lang: dir.tgt,
            dec_offset: 0,
        }
    }

    /// Fragment reconstruction: the decoder sees `<s>` plus the fragment
    /// shifted right, at the fragment's original positions.
    pub fn fragment(masked_src: Vec<u32>, fragment: &[u32], start: usize, lang: Lang) -> Self {
        let mut dec_in = Vec::with_capacity(fragment.len());
        dec_in.push(BOS);
        dec_in.extend_from_slice(&fragment[..fragment.len().saturating_sub(1)]);
        Example {
            src: masked_src,
            src_lang: lang,
            dec_in,
            dec_out: fragment.to_vec(),
            tgt_lang: lang,
            dec_offset: start,
        }
    }
}

/// Result of a forward/backward pass.
#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Label-smoothed cross-entropy averaged over target tokens.
    pub loss: f64,
    pub grads: Gradients,
    /// `ln p(gold)` for each target token, per example.
    pub token_logprobs: Vec<Vec<f64>>,
    /// Summed label-smoothed loss per example.
    pub sentence_losses: Vec<f64>,
    pub tokens: usize,
}

impl LossOutput {
    /// Summed negative log-likelihood without smoothing.
    pub fn nll(&self) -> f64 {
        -self.token_logprobs.iter().flatten().sum::<f64>()
    }
}

pub(crate) struct Prepared {
    src_ids: Vec<u32>,
    src_pos: Vec<usize>,
    src_lang: Vec<usize>,
    tgt_ids: Vec<u32>,
    tgt_pos: Vec<usize>,
    tgt_lang: Vec<usize>,
    gold: Vec<u32>,
    enc_spans: Vec<Span>,
    self_spans: Vec<Span>,
    cross_spans: Vec<Span>,
    tgt_ranges: Vec<Range<usize>>,
}

impl Model {
    fn check_id(&self, id: u32) -> Result<()> {
        if id as usize >= self.config.vocab_size {
            return Err(Error::TokenOutOfRange { id, vocab_size: self.config.vocab_size });
        }
        Ok(())
    }

    fn check_lang(&self, lang: Lang) -> Result<usize> {
        if lang.index() >= self.config.n_langs {
            return Err(Error::InvalidBatch(format!("language {} out of range", lang.0)));
        }
        Ok(lang.index())
    }

    pub(crate) fn prepare(&self, batch: &[Example]) -> Result<Prepared> {
        if batch.is_empty() {
            return Err(Error::InvalidBatch("empty batch".into()));
        }
        let max_len = self.config.max_len;
        let mut p = Prepared {
            src_ids: Vec::new(),
            src_pos: Vec::new(),
            src_lang: Vec::new(),
            tgt_ids: Vec::new(),
            tgt_pos: Vec::new(),
            tgt_lang: Vec::new(),
            gold: Vec::new(),
            enc_spans: Vec::new(),
            self_spans: Vec::new(),
            cross_spans: Vec::new(),
            tgt_ranges: Vec::new(),
        };
        for ex in batch {
            let src = strip_pads(&ex.src);
            let out = strip_pads(&ex.dec_out);
            if ex.dec_in.len() < out.len() || ex.dec_in[out.len()..].iter().any(|&t| t != PAD) {
                return Err(Error::InvalidBatch("decoder input and output lengths differ".into()));
            }
            let dec_in = &ex.dec_in[..out.len()];
            if src.iter().chain(out).chain(dec_in).any(|&t| t == PAD) {
                return Err(Error::InvalidBatch("padding must be trailing".into()));
            }
            if src.len() + 1 > max_len {
                return Err(Error::SequenceTooLong { pos: src.len(), max_len });
            }
            if !out.is_empty() && ex.dec_offset + out.len() > max_len {
                return Err(Error::SequenceTooLong { pos: ex.dec_offset + out.len() - 1, max_len });
            }
            let (sl, tl) = (self.check_lang(ex.src_lang)?, self.check_lang(ex.tgt_lang)?);
            let s0 = p.src_ids.len();
            for (i, &t) in src.iter().chain([&EOS]).enumerate() {
                self.check_id(t)?;
                p.src_ids.push(t);
                p.src_pos.push(i);
                p.src_lang.push(sl);
            }
            let srange = s0..p.src_ids.len();
            let t0 = p.tgt_ids.len();
            for (i, (&a, &b)) in dec_in.iter().zip(out).enumerate() {
                self.check_id(a)?;
                self.check_id(b)?;
                p.tgt_ids.push(a);
                p.gold.push(b);
                p.tgt_pos.push(ex.dec_offset + i);
                p.tgt_lang.push(tl);
            }
            let trange = t0..p.tgt_ids.len();
            p.enc_spans.push(Span { q: srange.clone(), k: srange.clone() });
            if !trange.is_empty() {
                p.self_spans.push(Span { q: trange.clone(), k: trange.clone() });
                p.cross_spans.push(Span { q: trange.clone(), k: srange });
            }
            p.tgt_ranges.push(trange);
        }
        if p.gold.is_empty() {
            return Err(Error::InvalidBatch("no target tokens".into()));
        }
        Ok(p)
    }

    pub(crate) fn embed(&self, ids: &[u32], pos: &[usize], lang: &[usize]) -> Array2<f64> {
        let p = &self.params;
        let tok = p.mat("tok_emb");
        let pe = p.mat("pos_emb");
        let mut x = Array2::zeros((ids.len(), self.config.d_model));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row.assign(&tok.row(ids[i] as usize));
            row += &pe.row(pos[i]);
        }
        if self.config.use_lang_embeddings {
            let le = p.mat("lang_emb");
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                row += &le.row(lang[i]);
            }
        }
        x
    }

    fn embed_backward(&self, dx: ArrayView2<f64>, ids: &[u32], pos: &[usize], lang: &[usize], grads: &mut Gradients) {
        let p = &self.params;
        let scatter = |name: &str, rows: usize, idx: &mut dyn Iterator<Item = usize>| {
            let mut g = Array2::<f64>::zeros((rows, self.config.d_model));
            for (i, r) in idx.enumerate() {
                let mut row = g.row_mut(r);
                row += &dx.row(i);
            }
            (name.to_owned(), g)
        };
        if p.is_trainable("tok_emb") {
            let (n, g) = scatter("tok_emb", self.config.vocab_size, &mut ids.iter().map(|&i| i as usize));
            grads.add(p, &n, g.into_dyn());
        }
        if p.is_trainable("pos_emb") {
            let (n, g) = scatter("pos_emb", self.config.max_len, &mut pos.iter().copied());
            grads.add(p, &n, g.into_dyn());
        }
        if self.config.use_lang_embeddings && p.is_trainable("lang_emb") {
            let (n, g) = scatter("lang_emb", self.config.n_langs, &mut lang.iter().copied());
            grads.add(p, &n, g.into_dyn());
        }
    }

    pub(crate) fn output_weight(&self) -> (&'static str, ArrayView2<'_, f64>) {
        if self.config.tie_output {
            ("tok_emb", self.params.mat("tok_emb"))
        } else {
            ("out.w", self.params.mat("out.w"))
        }
    }

    /// Label-smoothed loss, gradients for trainable tensors and per-token
    /// log-probabilities.
    pub fn forward_loss_backward(&self, batch: &[Example]) -> Result<LossOutput> {
        self.run(batch, true)
    }

    /// Same as [`Model::forward_loss_backward`] without the backward pass;
    /// `grads` is empty.
    pub fn forward_loss(&self, batch: &[Example]) -> Result<LossOutput> {
        self.run(batch, false)
    }

    /// Full log-softmax rows of the decoder, one matrix per example.
    pub fn log_probs(&self, batch: &[Example]) -> Result<Vec<Array2<f64>>> {
        let prep = self.prepare(batch)?;
        let logp = log_softmax_rows(self.forward_pass(&prep).logits);
        Ok(prep.tgt_ranges.iter().map(|r| logp.slice(s![r.clone(), ..]).to_owned()).collect())
    }

    /// Raw decoder logits, one matrix per example.
    pub fn logits(&self, batch: &[Example]) -> Result<Vec<Array2<f64>>> {
        let prep = self.prepare(batch)?;
        let logits = self.forward_pass(&prep).logits;
        Ok(prep.tgt_ranges.iter().map(|r| logits.slice(s![r.clone(), ..]).to_owned()).collect())
    }

    fn run(&self, batch: &[Example], backward: bool) -> Result<LossOutput> {
        let prep = self.prepare(batch)?;
        let fwd = self.forward_pass(&prep);
        let n = prep.gold.len();
        let v = self.config.vocab_size;
        let eps = self.config.label_smoothing;
        let logp = log_softmax_rows(fwd.logits.clone());

        let mut token_loss = Vec::with_capacity(n);
        let mut gold_lp = Vec::with_capacity(n);
        for (row, &g) in logp.rows().into_iter().zip(&prep.gold) {
            let lp = row[g as usize];
            let mean = row.sum() / v as f64;
            token_loss.push(-(1.0 - eps) * lp - eps * mean);
            gold_lp.push(lp);
        }
        let loss = token_loss.iter().sum::<f64>() / n as f64;
        let token_logprobs = prep.tgt_ranges.iter().map(|r| gold_lp[r.clone()].to_vec()).collect();
        let sentence_losses = prep.tgt_ranges.iter().map(|r| token_loss[r.clone()].iter().sum()).collect();

        let mut grads = Gradients::default();
        if backward {
            let mut dlogits = logp;
            let inv_n = 1.0 / n as f64;
            let uniform = eps / v as f64;
            for (mut row, &g) in dlogits.rows_mut().into_iter().zip(&prep.gold) {
                row.mapv_inplace(|lp| (lp.exp() - uniform) * inv_n);
                row[g as usize] -= (1.0 - eps) * inv_n;
            }
            self.backward_pass(&prep, &fwd, dlogits, &mut grads);
        }
        Ok(LossOutput {
            loss,
            grads,
            token_logprobs,
            sentence_losses,
            tokens: n,
        })
    }
}

pub(crate) fn log_softmax_rows(mut x: Array2<f64>) -> Array2<f64> {
    for mut row in x.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row -= lse;
    }
    x
}

struct EncLayer {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    ffn: FfnCache,
    adapter: Option<AdapterCache>,
}

struct DecLayer {
    ln1: LnCache,
    self_attn: AttnCache,
    ln2: LnCache,
    cross: AttnCache,
    cross_adapter: Option<AdapterCache>,
    ln3: LnCache,
    ffn: FfnCache,
    adapter: Option<AdapterCache>,
}

struct Forward {
    enc: Vec<EncLayer>,
    enc_ln: LnCache,
    enc_out: Array2<f64>,
    dec: Vec<DecLayer>,
    dec_ln: LnCache,
    dec_out: Array2<f64>,
    logits: Array2<f64>,
}

fn has(p: &Parameters, prefix: &str) -> bool {
    p.contains(&format!("{prefix}.up.w"))
}

impl Model {
    fn encode_prepared(&self, ids: &[u32], pos: &[usize], lang: &[usize], spans: &[Span]) -> (Array2<f64>, Vec<EncLayer>, LnCache) {
        let p = &self.params;
        let h = self.config.n_heads;
        let mut x = self.embed(ids, pos, lang);
        let mut layers = Vec::with_capacity(self.config.n_layers_enc);
        for l in 0..self.config.n_layers_enc {
            let (a_in, ln1) = layer_norm(x.view(), p, &format!("enc.{l}.attn_ln"));
            let (a, attn) = attention(a_in.view(), None, spans, false, h, p, &format!("enc.{l}.attn"));
            x += &a;
            let (f_in, ln2) = layer_norm(x.view(), p, &format!("enc.{l}.ffn_ln"));
            let (mut f, ffn_c) = ffn(f_in.view(), p, &format!("enc.{l}.ffn"));
            let ad = format!("enc.{l}.adapter");
            let adapter_c = if has(p, &ad) {
                let (y, c) = adapter(f.view(), p, &ad);
                f = y;
                Some(c)
            } else {
                None
            };
            x += &f;
            layers.push(EncLayer { ln1, attn, ln2, ffn: ffn_c, adapter: adapter_c });
        }
        let (out, ln) = layer_norm(x.view(), p, "enc.final_ln");
        (out, layers, ln)
    }

    /// Encoder output rows for one source sentence (with `</s>` appended).
    pub fn encode(&self, src: &[u32], lang: Lang) -> Result<Array2<f64>> {
        let src = strip_pads(src);
        if src.len() + 1 > self.config.max_len {
            return Err(Error::SequenceTooLong { pos: src.len(), max_len: self.config.max_len });
        }
        let l = self.check_lang(lang)?;
        let mut ids = src.to_vec();
        ids.push(EOS);
        for &t in &ids {
            self.check_id(t)?;
        }
        let n = ids.len();
        let pos: Vec<usize> = (0..n).collect();
        let spans = [Span { q: 0..n, k: 0..n }];
        Ok(self.encode_prepared(&ids, &pos, &vec![l; n], &spans).0)
    }

    fn forward_pass(&self, prep: &Prepared) -> Forward {
        let p = &self.params;
        let h = self.config.n_heads;
        let (enc_out, enc, enc_ln) = self.encode_prepared(&prep.src_ids, &prep.src_pos, &prep.src_lang, &prep.enc_spans);

        let mut x = self.embed(&prep.tgt_ids, &prep.tgt_pos, &prep.tgt_lang);
        let mut dec = Vec::with_capacity(self.config.n_layers_dec);
        for l in 0..self.config.n_layers_dec {
            let (a_in, ln1) = layer_norm(x.view(), p, &format!("dec.{l}.self_ln"));
            let (a, self_attn) = attention(a_in.view(), None, &prep.self_spans, true, h, p, &format!("dec.{l}.self"));
            x += &a;
            let (c_in, ln2) = layer_norm(x.view(), p, &format!("dec.{l}.cross_ln"));
            let (mut c, cross) =
                attention(c_in.view(), Some(enc_out.view()), &prep.cross_spans, false, h, p, &format!("dec.{l}.cross"));
            let cad = format!("dec.{l}.cross_adapter");
            let cross_adapter = if has(p, &cad) {
                let (y, cc) = adapter(c.view(), p, &cad);
                c = y;
                Some(cc)
            } else {
                None
            };
            x += &c;
            let (f_in, ln3) = layer_norm(x.view(), p, &format!("dec.{l}.ffn_ln"));
            let (mut f, ffn_c) = ffn(f_in.view(), p, &format!("dec.{l}.ffn"));
            let ad = format!("dec.{l}.adapter");
            let adapter_c = if has(p, &ad) {
                let (y, cc) = adapter(f.view(), p, &ad);
                f = y;
                Some(cc)
            } else {
                None
            };
            x += &f;
            dec.push(DecLayer {
                ln1,
                self_attn,
                ln2,
                cross,
                cross_adapter,
                ln3,
                ffn: ffn_c,
                adapter: adapter_c,
            });
        }
        let (dec_out, dec_ln) = layer_norm(x.view(), p, "dec.final_ln");
        let (_, w) = self.output_weight();
        let mut logits = dec_out.dot(&w.t());
        logits += &p.vector("out.b");
        Forward { enc, enc_ln, enc_out, dec, dec_ln, dec_out, logits }
    }

    fn backward_pass(&self, prep: &Prepared, fwd: &Forward, dlogits: Array2<f64>, grads: &mut Gradients) {
        let p = &self.params;
        let h = self.config.n_heads;
        let (wname, w) = self.output_weight();
        if p.is_trainable(wname) {
            grads.add(p, wname, dlogits.t().dot(&fwd.dec_out).into_dyn());
        }
        if p.is_trainable("out.b") {
            grads.add(p, "out.b", dlogits.sum_axis(Axis(0)).into_dyn());
        }
        let dz = dlogits.dot(&w);
        let mut dx = layer_norm_backward(dz.view(), &fwd.dec_ln, p, "dec.final_ln", grads);
        let mut d_enc = Array2::<f64>::zeros(fwd.enc_out.raw_dim());
        for l in (0..self.config.n_layers_dec).rev() {
            let c = &fwd.dec[l];
            let mut df = dx.clone();
            if let Some(ac) = &c.adapter {
                df = adapter_backward(df.view(), ac, p, &format!("dec.{l}.adapter"), grads);
            }
            let df_in = ffn_backward(df.view(), &c.ffn, p, &format!("dec.{l}.ffn"), grads);
            dx += &layer_norm_backward(df_in.view(), &c.ln3, p, &format!("dec.{l}.ffn_ln"), grads);

            let mut dc = dx.clone();
            if let Some(ac) = &c.cross_adapter {
                dc = adapter_backward(dc.view(), ac, p, &format!("dec.{l}.cross_adapter"), grads);
            }
            let (dc_in, de) = attention_backward(dc.view(), &c.cross, &prep.cross_spans, h, p, &format!("dec.{l}.cross"), grads);
            d_enc += &de.expect("cross-attention returns encoder gradient");
            dx += &layer_norm_backward(dc_in.view(), &c.ln2, p, &format!("dec.{l}.cross_ln"), grads);

            let (da_in, _) = attention_backward(dx.view(), &c.self_attn, &prep.self_spans, h, p, &format!("dec.{l}.self"), grads);
            dx += &layer_norm_backward(da_in.view(), &c.ln1, p, &format!("dec.{l}.self_ln"), grads);
        }
        self.embed_backward(dx.view(), &prep.tgt_ids, &prep.tgt_pos, &prep.tgt_lang, grads);

        let mut dx = layer_norm_backward(d_enc.view(), &fwd.enc_ln, p, "enc.final_ln", grads);
        for l in (0..self.config.n_layers_enc).rev() {
            let c = &fwd.enc[l];
            let mut df = dx.clone();
            if let Some(ac) = &c.adapter {
                df = adapter_backward(df.view(), ac, p, &format!("enc.{l}.adapter"), grads);
            }
            let df_in = ffn_backward(df.view(), &c.ffn, p, &format!("enc.{l}.ffn"), grads);
            dx += &layer_norm_backward(df_in.view(), &c.ln2, p, &format!("enc.{l}.ffn_ln"), grads);
            let (da_in, _) = attention_backward(dx.view(), &c.attn, &prep.enc_spans, h, p, &format!("enc.{l}.attn"), grads);
            dx += &layer_norm_backward(da_in.view(), &c.ln1, p, &format!("enc.{l}.attn_ln"), grads);
        }
        self.embed_backward(dx.view(), &prep.src_ids, &prep.src_pos, &prep.src_lang, grads);
    }
}
