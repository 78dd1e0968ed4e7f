//! The hierarchical text interaction network: parameters, word-level
//! encoder, review-level interaction, prediction head, and the full
//! per-example forward/backward pass.

pub mod checkpoint;
mod forward;
pub mod interaction;
pub mod predictor;
pub mod word_encoder;

use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{HtiError, Result};
use crate::numerics::{ConvGeom, ParamId, ParamTape, Tensor};
use crate::scalar::Scalar;

pub use checkpoint::{CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{ForwardOptions, ForwardTrace, ReviewTrace};

/// Which aggregation each level uses. `Full` is the complete model; the
/// others swap one level for plain pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Full,
    /// Mean over word vectors instead of pair-specific word attention.
    Wavg,
    /// Max over word vectors instead of pair-specific word attention.
    Wmax,
    /// Mean over review representations instead of review interaction.
    Davg,
    /// Max over review representations instead of review interaction.
    Dmax,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::Wavg,
        Variant::Wmax,
        Variant::Davg,
        Variant::Dmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Wavg => "wavg",
            Variant::Wmax => "wmax",
            Variant::Davg => "davg",
            Variant::Dmax => "dmax",
        }
    }

    pub fn word_pooling(self) -> WordPooling {
        match self {
            Variant::Wavg => WordPooling::Mean,
            Variant::Wmax => WordPooling::Max,
            _ => WordPooling::Attention,
        }
    }

    pub fn review_pooling(self) -> ReviewPooling {
        match self {
            Variant::Davg => ReviewPooling::Mean,
            Variant::Dmax => ReviewPooling::Max,
            _ => ReviewPooling::Interaction,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = HtiError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            HtiError::config(format!(
                "unknown variant '{s}' (expected full, wavg, wmax, davg or dmax)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordPooling {
    Attention,
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewPooling {
    Interaction,
    Mean,
    Max,
}

/// Architecture of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Vocabulary size V; the embedding table has V + 1 rows.
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Feature maps per first-layer kernel size.
    pub conv1_maps: usize,
    pub conv1_kernels: Vec<usize>,
    pub conv2_kernel: usize,
    /// Latent factor width; also the second conv layer's output width.
    pub latent_dim: usize,
    pub dropout: f64,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn for_corpus(corpus: &Corpus, embed_dim: usize, conv1_maps: usize, latent_dim: usize) -> Self {
        ModelConfig {
            n_users: corpus.n_users(),
            n_items: corpus.n_items(),
            vocab_size: corpus.vocabulary.len(),
            embed_dim,
            conv1_maps,
            conv1_kernels: vec![3, 5],
            conv2_kernel: 5,
            latent_dim,
            dropout: 0.5,
            variant: Variant::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kernels_odd = self
            .conv1_kernels
            .iter()
            .chain([&self.conv2_kernel])
            .all(|&s| s % 2 == 1);
        if !kernels_odd {
            return Err(HtiError::config("convolution kernel sizes must be odd"));
        }
        if self.conv1_kernels.is_empty() {
            return Err(HtiError::config("at least one first-layer kernel size is required"));
        }
        let dims = [
            self.embed_dim,
            self.conv1_maps,
            self.latent_dim,
            self.n_users,
            self.n_items,
        ];
        if dims.contains(&0) {
            return Err(HtiError::config("model dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(HtiError::config("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Widths of h_0, the hidden layers and the scalar output.
    pub fn mlp_widths(&self) -> [usize; 4] {
        let h0 = 3 * self.latent_dim;
        let h1 = h0.div_ceil(2);
        let h2 = h1.div_ceil(2);
        [h0, h1, h2, 1]
    }

    pub fn conv1_width(&self) -> usize {
        self.conv1_maps * self.conv1_kernels.len()
    }

    pub(crate) fn conv1_geoms(&self) -> Vec<ConvGeom> {
        self.conv1_kernels
            .iter()
            .map(|&kernel| ConvGeom {
                kernel,
                in_dim: self.embed_dim,
                out_dim: self.conv1_maps,
            })
            .collect()
    }

    pub(crate) fn conv2_geom(&self) -> ConvGeom {
        ConvGeom {
            kernel: self.conv2_kernel,
            in_dim: self.conv1_width(),
            out_dim: self.latent_dim,
        }
    }
}

/// Handles to every parameter tensor in the tape.
#[derive(Debug, Clone)]
pub struct ParamIds {
    pub embedding: ParamId,
    pub conv1: Vec<(ParamId, ParamId)>,
    pub conv2: (ParamId, ParamId),
    pub word_att_w: ParamId,
    pub word_att_b: ParamId,
    pub int_wu: ParamId,
    pub int_wvu: ParamId,
    pub int_v1: ParamId,
    pub int_bu: ParamId,
    pub int_wv: ParamId,
    pub int_wuv: ParamId,
    pub int_v2: ParamId,
    pub int_bv: ParamId,
    pub gate_w1: ParamId,
    pub gate_w2: ParamId,
    pub gate_b: ParamId,
    pub user_factors: ParamId,
    pub item_factors: ParamId,
    pub mlp: Vec<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
pub struct HtiModel<S: Scalar> {
    pub config: ModelConfig,
    pub tape: ParamTape<S>,
    pub ids: ParamIds,
}

impl<S: Scalar> AsMut<ParamTape<S>> for HtiModel<S> {
    fn as_mut(&mut self) -> &mut ParamTape<S> {
        &mut self.tape
    }
}

fn xavier<S: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| S::from_f64_lossy(dist.sample(rng))).collect()).unwrap()
}

impl<S: Scalar> HtiModel<S> {
    /// Randomly initialized model: embeddings U(−0.05, 0.05) with a zero
    /// padding row, latent factors N(0, 0.1²), Xavier-uniform weights and
    /// zero biases.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let k = c.latent_dim;
        let mut tape = ParamTape::new();

        let emb_dist = Uniform::new_inclusive(-0.05, 0.05).unwrap();
        let mut emb: Vec<S> = (0..(c.vocab_size + 1) * c.embed_dim)
            .map(|_| S::from_f64_lossy(emb_dist.sample(rng)))
            .collect();
        emb[..c.embed_dim].iter_mut().for_each(|x| *x = S::zero());
        let embedding = tape.register(
            "embedding",
            Tensor::from_vec(&[c.vocab_size + 1, c.embed_dim], emb)?,
            c.embed_dim,
        );

        let mut conv1 = Vec::new();
        for g in c.conv1_geoms() {
            let fan_in = g.kernel * g.in_dim;
            let w = tape.register(
                &format!("conv1_k{}_w", g.kernel),
                xavier(&[g.out_dim, fan_in], fan_in, g.out_dim, rng),
                0,
            );
            let b = tape.register(&format!("conv1_k{}_b", g.kernel), Tensor::zeros(&[g.out_dim]), 0);
            conv1.push((w, b));
        }
        let g2 = c.conv2_geom();
        let fan2 = g2.kernel * g2.in_dim;
        let conv2 = (
            tape.register("conv2_w", xavier(&[g2.out_dim, fan2], fan2, g2.out_dim, rng), 0),
            tape.register("conv2_b", Tensor::zeros(&[g2.out_dim]), 0),
        );

        let word_att_w = tape.register("word_att_w", xavier(&[2 * k, k], 2 * k, k, rng), 0);
        let word_att_b = tape.register("word_att_b", Tensor::zeros(&[k]), 0);

        let mut square = |tape: &mut ParamTape<S>, name: &str| tape.register(name, xavier(&[k, k], k, k, rng), 0);
        let int_wu = square(&mut tape, "int_user_guide_w");
        let int_wvu = square(&mut tape, "int_user_review_w");
        let int_wv = square(&mut tape, "int_item_guide_w");
        let int_wuv = square(&mut tape, "int_item_review_w");
        let gate_w1 = square(&mut tape, "gate_initial_w");
        let gate_w2 = square(&mut tape, "gate_intermediate_w");
        let int_v1 = tape.register("int_user_score_v", xavier(&[k], k, 1, rng), 0);
        let int_bu = tape.register("int_user_b", Tensor::zeros(&[k]), 0);
        let int_v2 = tape.register("int_item_score_v", xavier(&[k], k, 1, rng), 0);
        let int_bv = tape.register("int_item_b", Tensor::zeros(&[k]), 0);
        let gate_b = tape.register("gate_b", Tensor::zeros(&[k]), 0);

        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut gaussian = |rows: usize| -> Tensor<S> {
            Tensor::from_vec(
                &[rows, k],
                (0..rows * k).map(|_| S::from_f64_lossy(normal.sample(rng))).collect(),
            )
            .unwrap()
        };
        let user_factors = tape.register("user_factors", gaussian(c.n_users), 0);
        let item_factors = tape.register("item_factors", gaussian(c.n_items), 0);

        let widths = c.mlp_widths();
        let mut mlp = Vec::new();
        for l in 0..3 {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let w = tape.register(&format!("mlp{}_w", l + 1), xavier(&[fi, fo], fi, fo, rng), 0);
            let b = tape.register(&format!("mlp{}_b", l + 1), Tensor::zeros(&[fo]), 0);
            mlp.push((w, b));
        }

        Ok(HtiModel {
            config,
            tape,
            ids: ParamIds {
                embedding,
                conv1,
                conv2,
                word_att_w,
                word_att_b,
                int_wu,
                int_wvu,
                int_v1,
                int_bu,
                int_wv,
                int_wuv,
                int_v2,
                int_bv,
                gate_w1,
                gate_w2,
                gate_b,
                user_factors,
                item_factors,
                mlp,
            },
        })
    }

    /// Same architecture and parameter values with a different variant.
    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut m = self.clone();
        m.config.variant = variant;
        m
    }

    pub fn k(&self) -> usize {
        self.config.latent_dim
    }

    pub(crate) fn p(&self, id: ParamId) -> &[S] {
        self.tape.value(id)
    }

    pub fn user_factor(&self, user: usize) -> &[S] {
        let k = self.k();
        &self.p(self.ids.user_factors)[user * k..(user + 1) * k]
    }

    pub fn item_factor(&self, item: usize) -> &[S] {
        let k = self.k();
        &self.p(self.ids.item_factors)[item * k..(item + 1) * k]
    }

    pub fn set_output_bias(&mut self, value: S) {
        let (_, b) = self.ids.mlp[2];
        self.tape.value_mut(b)[0] = value;
    }

    /// Row 0 of the embedding table.
    pub fn pad_row(&self) -> &[S] {
        &self.p(self.ids.embedding)[..self.config.embed_dim]
    }

    /// Overwrites embedding rows of tokens found in a whitespace-separated
    /// `token v1 … v_dim` text file. Returns the number of rows replaced.
    pub fn load_pretrained_embeddings(&mut self, path: &Path, vocab: &Vocabulary) -> Result<usize> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let dim = self.config.embed_dim;
        let id = self.ids.embedding;
        let mut hits = 0;
        for line in reader.lines() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let Some(row) = vocab.id(token) else { continue };
            let values: Vec<f64> = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| HtiError::data(format!("embedding for '{token}': {e}")))?;
            if values.len() != dim {
                return Err(HtiError::data(format!(
                    "embedding for '{token}' has {} values, expected {dim}",
                    values.len()
                )));
            }
            let dst = &mut self.tape.value_mut(id)[row as usize * dim..(row as usize + 1) * dim];
            for (d, v) in dst.iter_mut().zip(values) {
                *d = S::from_f64_lossy(v);
            }
            hits += 1;
        }
        Ok(hits)
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<T: Scalar>(&self) -> HtiModel<T> {
        let mut tape = ParamTape::new();
        for p in self.tape.params() {
            tape.register(&p.name, p.value.cast(), p.frozen_prefix);
        }
        HtiModel {
            config: self.config.clone(),
            tape,
            ids: self.ids.clone(),
        }
    }
}
