use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LstmAttn,
    LstmCopy,
    LstmMaxout,
    Transformer,
    TransformerCopy,
    MultiSourceTransformer,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::LstmAttn,
        Family::LstmCopy,
        Family::LstmMaxout,
        Family::Transformer,
        Family::TransformerCopy,
        Family::MultiSourceTransformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::LstmAttn => "lstm-attn",
            Family::LstmCopy => "lstm-copy",
            Family::LstmMaxout => "lstm-maxout",
            Family::Transformer => "transformer",
            Family::TransformerCopy => "transformer-copy",
            Family::MultiSourceTransformer => "multi-source-transformer",
        }
    }

    pub fn is_lstm(self) -> bool {
        matches!(self, Family::LstmAttn | Family::LstmCopy | Family::LstmMaxout)
    }

    pub fn has_copy(self) -> bool {
        matches!(self, Family::LstmCopy | Family::LstmMaxout | Family::TransformerCopy)
    }

    pub fn is_multi_source(self) -> bool {
        self == Family::MultiSourceTransformer
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown model family {s:?}")))
    }
}

/// How the two encoder-attention reads of the multi-source decoder combine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combine {
    #[default]
    Parallel,
    Serial,
}

impl FromStr for Combine {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Combine::Parallel),
            "serial" => Ok(Combine::Serial),
            _ => Err(ModelError::Config(format!("unknown combine mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Positional {
    #[default]
    Sinusoidal,
    Learned,
}

impl FromStr for Positional {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoidal" => Ok(Positional::Sinusoidal),
            "learned" => Ok(Positional::Learned),
            _ => Err(ModelError::Config(format!("unknown positional encoding {s:?}"))),
        }
    }
}

pub const DEFAULT_MAX_SRC_LEN: usize = 250;
pub const DEFAULT_MAX_TGT_LEN: usize = 40;

/// Architecture family plus every size and regularisation setting. For the
/// LSTM families `d_model` is both the embedding and the hidden size and
/// `heads`/`d_ffn` are unused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    #[serde(default)]
    pub combine: Combine,
    #[serde(default)]
    pub positional: Positional,
    /// Bidirectional LSTM encoder (each direction gets `d_model / 2`).
    #[serde(default)]
    pub bidirectional: bool,
    /// Share the target embedding table with the output projection.
    #[serde(default)]
    pub tie_embeddings: bool,
    #[serde(default)]
    pub preset: Option<String>,
}

impl Default for ModelConfig {
    /// 5 + 5 layers, dropout 0.3.
    fn default() -> Self {
        ModelConfig {
            family: Family::Transformer,
            enc_layers: 5,
            dec_layers: 5,
            heads: 8,
            d_model: 512,
            d_ffn: 2048,
            dropout: 0.3,
            vocab_size: 0,
            max_src_len: DEFAULT_MAX_SRC_LEN,
            max_tgt_len: DEFAULT_MAX_TGT_LEN,
            combine: Combine::Parallel,
            positional: Positional::Sinusoidal,
            bidirectional: false,
            tie_embeddings: false,
            preset: None,
        }
    }
}

pub const PRESETS: [&str; 3] = ["iwslt_de_en", "wmt_en_de_big", "wmt_en_fr_big"];

impl ModelConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (layers, heads, d_model, d_ffn) = match name {
            "iwslt_de_en" => (6, 16, 1024, 4096),
            "wmt_en_de_big" => (6, 4, 1024, 1024),
            "wmt_en_fr_big" => (16, 16, 1024, 4096),
            _ => {
                return Err(ModelError::Config(format!(
                    "unknown preset {name:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(ModelConfig {
            enc_layers: layers,
            dec_layers: layers,
            heads,
            d_model,
            d_ffn,
            preset: Some(name.to_string()),
            ..ModelConfig::default()
        })
    }

    /// A small configuration suitable for tests and toy corpora.
    pub fn tiny(family: Family, vocab_size: usize) -> Self {
        ModelConfig {
            family,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            d_model: 32,
            d_ffn: 64,
            dropout: 0.0,
            vocab_size,
            max_src_len: 64,
            max_tgt_len: 16,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return fail(format!(
                "layer counts must be >= 1 (enc {}, dec {})",
                self.enc_layers, self.dec_layers
            ));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.vocab_size <= laqg_data::vocab::RESERVED.len() {
            return fail(format!(
                "vocab_size {} leaves no room beyond the reserved ids",
                self.vocab_size
            ));
        }
        if self.max_src_len == 0 || self.max_tgt_len == 0 {
            return fail("maximum lengths must be >= 1".into());
        }
        if self.family.is_lstm() {
            if self.bidirectional && self.d_model % 2 != 0 {
                return fail("a bidirectional encoder needs an even d_model".into());
            }
        } else {
            if self.d_ffn == 0 {
                return fail("d_ffn must be >= 1".into());
            }
            if self.positional == Positional::Sinusoidal && self.d_model % 2 != 0 {
                return fail(format!("sinusoidal positions need an even d_model, got {}", self.d_model));
            }
            if self.bidirectional {
                return fail("bidirectional applies to LSTM families only".into());
            }
        }
        Ok(())
    }
}
