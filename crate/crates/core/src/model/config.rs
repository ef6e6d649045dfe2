use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub adapters_enabled: bool,
    pub d_adapter: usize,
    /// Freeze cross-attention too and put an extra adapter on its output.
    pub cross_attention_adapter: bool,
    pub use_lang_embeddings: bool,
    pub n_langs: usize,
    pub label_smoothing: f64,
    /// Reuse the token embedding as the output projection.
    pub tie_output: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(0)
    }
}

impl ModelConfig {
    /// 2 encoder / 2 decoder layers, d=64, ffn 256, 4 heads.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            n_layers_enc: 2,
            n_layers_dec: 2,
            d_model: 64,
            d_ffn: 256,
            n_heads: 4,
            vocab_size,
            max_len: 128,
            adapters_enabled: false,
            d_adapter: 16,
            cross_attention_adapter: false,
            use_lang_embeddings: true,
            n_langs: 2,
            label_smoothing: 0.1,
            tie_output: false,
        }
    }

    /// 6/6 layers, d=1024, ffn 4096, 8 heads.
    pub fn full(vocab_size: usize) -> Self {
        ModelConfig {
            n_layers_enc: 6,
            n_layers_dec: 6,
            d_model: 1024,
            d_ffn: 4096,
            n_heads: 8,
            max_len: 256,
            d_adapter: 256,
            ..Self::desk(vocab_size)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d_model == 0 || self.d_ffn == 0 || self.n_heads == 0 {
            return bad("d_model, d_ffn and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab_size <= crate::subword::MASK as usize {
            return bad(format!("vocab_size {} leaves no room for specials", self.vocab_size));
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        if (self.adapters_enabled || self.cross_attention_adapter) && (self.d_adapter == 0 || self.d_adapter >= self.d_model) {
            return bad(format!("d_adapter {} must be in 1..{}", self.d_adapter, self.d_model));
        }
        if self.n_langs == 0 {
            return bad("n_langs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing {} outside [0,1)", self.label_smoothing));
        }
        Ok(())
    }
}
