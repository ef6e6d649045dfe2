use std::collections::{BTreeMap, BTreeSet};

use ndarray::{concatenate, Array1, Array2, ArrayD, ArrayView1, ArrayView2, Axis, Ix1, Ix2, IxDyn};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng;
use crate::subword::Vocabulary;

pub type Tensor = ArrayD<f64>;

/// Named tensors plus the set of frozen names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Parameters {
    tensors: BTreeMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

impl Parameters {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    /// Mutable access for in-place updates. Frozen tensors are refused.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        if self.frozen.contains(name) {
            return Err(Error::UnknownTensor(name.to_owned()));
        }
        self.tensors.get_mut(name).ok_or_else(|| Error::UnknownTensor(name.to_owned()))
    }

    /// Overwrites a tensor regardless of freezing, keeping its shape.
    pub fn set(&mut self, name: &str, t: Tensor) -> Result<()> {
        let cur = self.tensors.get_mut(name).ok_or_else(|| Error::UnknownTensor(name.to_owned()))?;
        if cur.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                name: name.to_owned(),
                expected: cur.shape().to_vec(),
                got: t.shape().to_vec(),
            });
        }
        *cur = t;
        Ok(())
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.tensors.contains_key(name) && !self.frozen.contains(name)
    }

    pub fn frozen(&self) -> &BTreeSet<String> {
        &self.frozen
    }

    pub fn freeze(&mut self, name: &str) -> Result<()> {
        if !self.tensors.contains_key(name) {
            return Err(Error::UnknownTensor(name.to_owned()));
        }
        self.frozen.insert(name.to_owned());
        Ok(())
    }

    pub fn clear_freeze(&mut self) {
        self.frozen.clear();
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.names().filter(|n| !self.frozen.contains(*n))
    }

    pub(crate) fn mat(&self, name: &str) -> ArrayView2<'_, f64> {
        self.tensors[name].view().into_dimensionality::<Ix2>().expect("matrix tensor")
    }

    pub(crate) fn vector(&self, name: &str) -> ArrayView1<'_, f64> {
        self.tensors[name].view().into_dimensionality::<Ix1>().expect("vector tensor")
    }
}

/// Model configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

fn xavier(rows: usize, cols: usize, seed: u64) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    let mut r = rng::rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut r)).into_dyn()
}

fn normal_rows(rows: usize, d: usize, seed: u64) -> Array2<f64> {
    let dist = Normal::new(0.0, (d as f64).powf(-0.5)).expect("positive std");
    let mut r = rng::rng(seed);
    Array2::from_shape_simple_fn((rows, d), || r.sample(dist))
}

fn zeros(shape: &[usize]) -> Tensor {
    ArrayD::zeros(IxDyn(shape))
}

fn ones(n: usize) -> Tensor {
    ArrayD::ones(IxDyn(&[n]))
}

struct Init<'a> {
    params: &'a mut Parameters,
    seed: u64,
}

impl Init<'_> {
    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        let w = format!("{prefix}.w");
        let t = xavier(fan_in, fan_out, rng::derive_named(self.seed, &w));
        self.params.insert(w, t);
        self.params.insert(format!("{prefix}.b"), zeros(&[fan_out]));
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) {
        self.params.insert(format!("{prefix}.g"), ones(d));
        self.params.insert(format!("{prefix}.b"), zeros(&[d]));
    }

    fn attention(&mut self, prefix: &str, d: usize) {
        for p in ["q", "k", "v", "o"] {
            self.linear(&format!("{prefix}.{p}"), d, d);
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) {
        self.linear(&format!("{prefix}.1"), d, f);
        self.linear(&format!("{prefix}.2"), f, d);
    }

    fn adapter(&mut self, prefix: &str, d: usize, a: usize) {
        self.linear(&format!("{prefix}.down"), d, a);
        self.params.insert(format!("{prefix}.up.w"), zeros(&[a, d]));
        self.params.insert(format!("{prefix}.up.b"), zeros(&[d]));
    }
}

/// Builds a model with deterministic weights: Xavier-uniform linear maps,
/// zero biases, unit layer-norm gains and `N(0, 1/√d)` embeddings. Each
/// tensor draws from its own stream derived from `seed` and its name.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let (d, f, v) = (config.d_model, config.d_ffn, config.vocab_size);
    let mut params = Parameters::default();
    let mut init = Init { params: &mut params, seed };
    init.params.insert("tok_emb", normal_rows(v, d, rng::derive_named(seed, "tok_emb")).into_dyn());
    init.params.insert("pos_emb", normal_rows(config.max_len, d, rng::derive_named(seed, "pos_emb")).into_dyn());
    if config.use_lang_embeddings {
        init.params.insert("lang_emb", normal_rows(config.n_langs, d, rng::derive_named(seed, "lang_emb")).into_dyn());
    }
    for l in 0..config.n_layers_enc {
        init.layer_norm(&format!("enc.{l}.attn_ln"), d);
        init.attention(&format!("enc.{l}.attn"), d);
        init.layer_norm(&format!("enc.{l}.ffn_ln"), d);
        init.ffn(&format!("enc.{l}.ffn"), d, f);
    }
    init.layer_norm("enc.final_ln", d);
    for l in 0..config.n_layers_dec {
        init.layer_norm(&format!("dec.{l}.self_ln"), d);
        init.attention(&format!("dec.{l}.self"), d);
        init.layer_norm(&format!("dec.{l}.cross_ln"), d);
        init.attention(&format!("dec.{l}.cross"), d);
        init.layer_norm(&format!("dec.{l}.ffn_ln"), d);
        init.ffn(&format!("dec.{l}.ffn"), d, f);
    }
    init.layer_norm("dec.final_ln", d);
    if !config.tie_output {
        let t = xavier(v, d, rng::derive_named(seed, "out.w"));
        init.params.insert("out.w", t);
    }
    init.params.insert("out.b", zeros(&[v]));
    let mut model = Model {
        config: ModelConfig {
            adapters_enabled: false,
            cross_attention_adapter: false,
            ..config.clone()
        },
        params,
    };
    if config.adapters_enabled || config.cross_attention_adapter {
        model = insert_adapters_with(&model, config.cross_attention_adapter, seed)?;
        model.params.clear_freeze();
    }
    Ok(model)
}

/// Grows the token embedding, output projection and bias from `old` to
/// `new`. Rows of existing ids are copied bit-exactly; new rows are freshly
/// initialized.
pub fn extend_embeddings(model: &Model, old: &Vocabulary, new: &Vocabulary, seed: u64) -> Result<Model> {
    if model.config.vocab_size != old.len() {
        return Err(Error::VocabMismatch(format!(
            "model has {} rows, old vocabulary {} entries",
            model.config.vocab_size,
            old.len()
        )));
    }
    if new.len() < old.len() {
        return Err(Error::VocabMismatch(format!("new vocabulary shrinks from {} to {}", old.len(), new.len())));
    }
    for id in 0..old.len() as u32 {
        if old.token(id) != new.token(id) {
            return Err(Error::VocabMismatch(format!(
                "id {id} is {:?} in the old vocabulary but {:?} in the new",
                old.token(id),
                new.token(id)
            )));
        }
    }
    let mut out = model.clone();
    let extra = new.len() - old.len();
    if extra == 0 {
        return Ok(out);
    }
    let d = model.config.d_model;
    let grow = |name: &str, fresh: Array2<f64>| -> Tensor {
        let cur = model.params.mat(name);
        concatenate(Axis(0), &[cur, fresh.view()]).expect("matching widths").into_dyn()
    };
    out.params.tensors.insert(
        "tok_emb".into(),
        grow("tok_emb", normal_rows(extra, d, rng::derive_named(seed, "tok_emb.extend"))),
    );
    if !model.config.tie_output {
        let fresh = xavier(new.len(), d, rng::derive_named(seed, "out.w.extend"))
            .slice_move(ndarray::s![..extra, ..])
            .into_dimensionality::<Ix2>()
            .expect("matrix");
        out.params.tensors.insert("out.w".into(), grow("out.w", fresh));
    }
    let b = model.params.vector("out.b");
    let b = concatenate(Axis(0), &[b, Array1::zeros(extra).view()]).expect("vectors");
    out.params.tensors.insert("out.b".into(), b.into_dyn());
    out.config.vocab_size = new.len();
    Ok(out)
}

fn is_adapter(name: &str) -> bool {
    name.contains(".adapter.") || name.contains(".cross_adapter.")
}

fn stays_trainable(name: &str, cross_adapter: bool) -> bool {
    if is_adapter(name) || name.starts_with("out.") || name.ends_with("_emb") {
        return true;
    }
    let cross = name.contains(".cross.") || name.contains(".cross_ln.");
    name.starts_with("dec.") && cross && !cross_adapter
}

/// Adds a zero-initialized bottleneck adapter after each layer's FFN and
/// freezes everything except the output layer, the embeddings, the
/// decoder's cross-attention and the adapters.
pub fn insert_adapters(model: &Model, seed: u64) -> Result<Model> {
    insert_adapters_with(model, model.config.cross_attention_adapter, seed)
}

fn insert_adapters_with(model: &Model, cross_adapter: bool, seed: u64) -> Result<Model> {
    if model.params.names().any(is_adapter) {
        return Err(Error::AdaptersPresent);
    }
    let mut config = model.config.clone();
    config.adapters_enabled = true;
    config.cross_attention_adapter = cross_adapter;
    config.validate()?;
    let (d, a) = (config.d_model, config.d_adapter);
    let mut params = model.params.clone();
    let mut init = Init { params: &mut params, seed };
    for l in 0..config.n_layers_enc {
        init.adapter(&format!("enc.{l}.adapter"), d, a);
    }
    for l in 0..config.n_layers_dec {
        init.adapter(&format!("dec.{l}.adapter"), d, a);
        if cross_adapter {
            init.adapter(&format!("dec.{l}.cross_adapter"), d, a);
        }
    }
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    params.frozen = names.into_iter().filter(|n| !stays_trainable(n, cross_adapter)).collect();
    Ok(Model { config, params })
}

/// Per-tensor gradients; frozen tensors never appear.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    pub(crate) tensors: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.values().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn insert(&mut self, name: impl Into<String>, g: Tensor) {
        self.tensors.insert(name.into(), g);
    }

    /// Multiplies every gradient by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.values_mut() {
            t.mapv_inplace(|x| x * factor);
        }
    }

    /// Adds `other` into `self`, creating missing entries.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (k, v) in &other.tensors {
            match self.tensors.get_mut(k) {
                Some(t) => *t += v,
                None => {
                    self.tensors.insert(k.clone(), v.clone());
                }
            }
        }
    }

    pub(crate) fn add(&mut self, params: &Parameters, name: &str, g: Tensor) {
        if !params.is_trainable(name) {
            return;
        }
        match self.tensors.get_mut(name) {
            Some(t) => *t += &g,
            None => {
                self.tensors.insert(name.to_owned(), g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let c = ModelConfig::desk(50);
        assert_eq!(init_model(&c, 3).unwrap(), init_model(&c, 3).unwrap());
        assert_ne!(init_model(&c, 3).unwrap(), init_model(&c, 4).unwrap());
    }

    #[test]
    fn nothing_frozen_after_init() {
        let c = ModelConfig { adapters_enabled: true, ..ModelConfig::desk(50) };
        let m = init_model(&c, 1).unwrap();
        assert!(m.params.frozen().is_empty());
        assert!(m.params.contains("enc.1.adapter.up.w"));
    }

    #[test]
    fn double_insertion_fails() {
        let m = init_model(&ModelConfig::desk(20), 1).unwrap();
        let m = insert_adapters(&m, 2).unwrap();
        assert!(matches!(insert_adapters(&m, 2), Err(Error::AdaptersPresent)));
    }

    #[test]
    fn freeze_mask_after_insertion() {
        let m = insert_adapters(&init_model(&ModelConfig::desk(20), 1).unwrap(), 2).unwrap();
        for n in m.params.names() {
            let self_or_ffn = n.contains(".attn.") || n.contains(".self.") || n.contains(".ffn.");
            if self_or_ffn {
                assert!(m.params.is_frozen(n), "{n}");
            }
        }
        for n in ["dec.0.cross.q.w", "dec.1.cross_ln.g", "out.w", "out.b", "tok_emb", "pos_emb", "lang_emb"] {
            assert!(m.params.is_trainable(n), "{n}");
        }
        let mut m = m;
        m.params.clear_freeze();
        assert!(m.params.frozen().is_empty());
    }

    #[test]
    fn cross_adapter_variant_freezes_cross_attention() {
        let c = ModelConfig { cross_attention_adapter: true, ..ModelConfig::desk(20) };
        let m = insert_adapters(&init_model(&ModelConfig::desk(20), 1).unwrap(), 2).unwrap();
        assert!(!m.params.contains("dec.0.cross_adapter.up.w"));
        let m = insert_adapters(&Model { config: c, params: init_model(&ModelConfig::desk(20), 1).unwrap().params }, 2).unwrap();
        assert!(m.params.is_frozen("dec.0.cross.q.w"));
        assert!(m.params.is_trainable("dec.0.cross_adapter.down.w"));
    }

    #[test]
    fn frozen_tensor_refuses_mutation() {
        let mut m = insert_adapters(&init_model(&ModelConfig::desk(20), 1).unwrap(), 2).unwrap();
        assert!(m.params.get_mut("enc.0.attn.q.w").is_err());
        assert!(m.params.get_mut("out.b").is_ok());
    }
}
