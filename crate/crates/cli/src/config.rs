use std::path::{Path, PathBuf};

use hti::corpus::{PaddingLimits, PreprocessConfig, SplitRatios};
use hti::model::Variant;
use hti::trainer::HyperParams;
use hti::{HtiError, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const TRAIN_RATIOS: [f64; 3] = [0.8, 0.6, 0.4];
pub const MAX_SEEDS: usize = 10;

/// Every setting of a run. Keys are flat; a JSON config file supplies any
/// subset and `--set key=value` flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub dropout: f64,
    pub embed_dim: usize,
    pub conv1_maps: usize,
    pub latent_dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub grad_clip: f64,
    pub variant: Variant,
    /// Run the λ grid search before training.
    pub search_lambda: bool,
    pub lambda_grid: Vec<f64>,
    /// `"f32"` or `"f64"`.
    pub dtype: String,

    pub seeds: Vec<u64>,
    pub train_ratio: f64,
    pub vocab_size: usize,
    pub quantile: f64,
    pub stopwords: Option<PathBuf>,
    pub max_review_len: Option<usize>,
    pub max_user_reviews: Option<usize>,
    pub max_item_reviews: Option<usize>,

    pub input: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        let pre = PreprocessConfig::default();
        RunConfig {
            batch_size: hp.batch_size,
            learning_rate: hp.learning_rate,
            lambda: hp.lambda,
            dropout: hp.dropout,
            embed_dim: hp.embed_dim,
            conv1_maps: hp.conv1_maps,
            latent_dim: hp.latent_dim,
            max_epochs: hp.max_epochs,
            patience: hp.patience,
            seed: hp.seed,
            grad_clip: hp.grad_clip,
            variant: hp.variant,
            search_lambda: false,
            lambda_grid: hti::trainer::LAMBDA_GRID.to_vec(),
            dtype: "f32".into(),
            seeds: vec![0, 1, 2],
            train_ratio: pre.ratios.train,
            vocab_size: pre.vocab_size,
            quantile: pre.quantile,
            stopwords: None,
            max_review_len: None,
            max_user_reviews: None,
            max_item_reviews: None,
            input: None,
            corpus: None,
            embeddings: None,
            checkpoint: None,
            output_dir: None,
        }
    }
}

/// Parses `value` as JSON, falling back to a plain string so that paths and
/// names need no quoting.
fn override_value(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

impl RunConfig {
    /// Reads the optional config file and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut map = match path {
            Some(p) => {
                if !p.is_file() {
                    return Err(HtiError::config(format!("config file {} not found", p.display())));
                }
                let text = std::fs::read_to_string(p)?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(HtiError::config("config file must hold a JSON object")),
                    Err(e) => return Err(HtiError::config(format!("config file {}: {e}", p.display()))),
                }
            }
            None => Map::new(),
        };
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| HtiError::config(format!("override '{o}' is not key=value")))?;
            map.insert(key.trim().to_string(), override_value(value.trim()));
        }
        let config: RunConfig =
            serde_json::from_value(Value::Object(map)).map_err(|e| HtiError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams().validate()?;
        if !TRAIN_RATIOS.iter().any(|r| (r - self.train_ratio).abs() < 1e-9) {
            return Err(HtiError::config(format!(
                "train_ratio must be one of {TRAIN_RATIOS:?}, got {}",
                self.train_ratio
            )));
        }
        if self.seeds.is_empty() || self.seeds.len() > MAX_SEEDS {
            return Err(HtiError::config(format!("seeds must list 1 to {MAX_SEEDS} values")));
        }
        if !matches!(self.dtype.as_str(), "f32" | "f64") {
            return Err(HtiError::config(format!(
                "dtype must be f32 or f64, got '{}'",
                self.dtype
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(HtiError::config("dropout must lie in [0, 1)"));
        }
        if self.search_lambda && self.lambda_grid.is_empty() {
            return Err(HtiError::config("lambda_grid is empty"));
        }
        for p in [&self.input, &self.corpus, &self.embeddings, &self.stopwords]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(HtiError::config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> HyperParams {
        HyperParams {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            lambda: self.lambda,
            dropout: self.dropout,
            embed_dim: self.embed_dim,
            conv1_maps: self.conv1_maps,
            latent_dim: self.latent_dim,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            grad_clip: self.grad_clip,
            variant: self.variant,
            embeddings: self.embeddings.clone(),
        }
    }

    pub fn preprocess(&self) -> Result<PreprocessConfig> {
        let mut pre = PreprocessConfig {
            vocab_size: self.vocab_size,
            quantile: self.quantile,
            ratios: SplitRatios::with_train(self.train_ratio),
            seed: self.seed,
            ..PreprocessConfig::default()
        };
        if let Some(p) = &self.stopwords {
            pre.stopwords = hti::corpus::text::parse_stopwords(&std::fs::read_to_string(p)?);
        }
        Ok(pre)
    }

    /// Padding limits with any configured caps applied.
    pub fn padding(&self, base: PaddingLimits) -> PaddingLimits {
        PaddingLimits {
            max_review_len: self.max_review_len.unwrap_or(base.max_review_len),
            max_user_reviews: self.max_user_reviews.unwrap_or(base.max_user_reviews),
            max_item_reviews: self.max_item_reviews.unwrap_or(base.max_item_reviews),
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| HtiError::config(format!("missing '{key}' (set it in the config or pass --{key})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_or_strings() {
        let c = RunConfig::load(
            None,
            &["max_epochs=3".into(), "variant=wavg".into(), "seeds=[4,5]".into()],
        )
        .unwrap();
        assert_eq!(c.max_epochs, 3);
        assert_eq!(c.variant, Variant::Wavg);
        assert_eq!(c.seeds, vec![4, 5]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::load(None, &["epochs=3".into()]),
            Err(HtiError::Config(_))
        ));
    }

    #[test]
    fn train_ratio_is_restricted() {
        assert!(RunConfig::load(None, &["train_ratio=0.5".into()]).is_err());
        assert!(RunConfig::load(None, &["train_ratio=0.4".into()]).is_ok());
    }

    #[test]
    fn defaults_match_hyperparams() {
        assert_eq!(RunConfig::default().hyperparams(), HyperParams::default());
    }
}
