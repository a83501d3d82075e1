//! Flat `key=value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::embeddings::EmbeddingFormat;
use crate::features::FeatureConfig;
use crate::network::NetworkConfig;
use crate::predictor::DecodeConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected key=value")]
    Syntax { path: String, line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub corpus: Option<PathBuf>,
    pub parses: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub test_parses: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub embedding_format: EmbeddingFormat,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: NetworkConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            corpus: None,
            parses: None,
            test_corpus: None,
            test_parses: None,
            embeddings: None,
            embedding_format: EmbeddingFormat::Auto,
            model: None,
            output: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        reason: format!("{value:?}: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.to_string(),
            reason: format!("{value:?} is not a boolean"),
        }),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn format_name(f: EmbeddingFormat) -> &'static str {
    match f {
        EmbeddingFormat::Binary => "binary",
        EmbeddingFormat::Text => "text",
        EmbeddingFormat::Auto => "auto",
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "unit_dim" => self.network.unit_dim = parse(key, value)?,
            "mwe_hidden" => self.network.mwe_hidden = parse(key, value)?,
            "sense_hidden" => self.network.sense_hidden = parse(key, value)?,
            "distance_into_composer" => {
                self.network.distance_into_composer = parse_bool(key, value)?
            }
            "mean_vector" => self.network.mean_vector_feature = parse_bool(key, value)?,
            "bias" => self.network.bias = parse_bool(key, value)?,
            "recurrency" => self.network.recurrency = parse_bool(key, value)?,
            "hash_dim" => self.features.hash_dim = parse(key, value)?,
            "hash_mode" => self.features.hash_mode = parse(key, value)?,
            "hash_alpha_only" => self.features.hash_alpha_only = parse_bool(key, value)?,
            "lemmatize" => self.features.lemmatize = parse_bool(key, value)?,
            "gap_mode" => self.features.gap_mode = parse(key, value)?,
            "ablation" => {
                self.features.ablation = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "epochs" => self.train.epochs = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "lookahead" => {
                let l = parse(key, value)?;
                self.train.sampling.lookahead = l;
                self.decode.lookahead = l;
            }
            "neg_prob_cap" => self.train.sampling.neg_prob_cap = parse(key, value)?,
            "downweight" => self.train.sampling.downweight = parse(key, value)?,
            "sense_error_divisor" => {
                self.train.sense_error_divisor = match value {
                    "n_senses" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "shuffle" => self.train.shuffle = parse_bool(key, value)?,
            "theta_start" => self.decode.theta_start = parse(key, value)?,
            "theta_extend" => self.decode.theta_extend = parse(key, value)?,
            "max_depth" => self.decode.max_depth = parse(key, value)?,
            "corpus" => self.corpus = path(value),
            "parses" => self.parses = path(value),
            "test_corpus" => self.test_corpus = path(value),
            "test_parses" => self.test_parses = path(value),
            "embeddings" => self.embeddings = path(value),
            "embedding_format" => {
                self.embedding_format = match value {
                    "binary" => EmbeddingFormat::Binary,
                    "text" => EmbeddingFormat::Text,
                    "auto" => EmbeddingFormat::Auto,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            reason: format!("{value:?} is not binary, text or auto"),
                        })
                    }
                }
            }
            "model" => self.model = path(value),
            "output" => self.output = path(value),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`; blank lines and `#` comments are skipped.
    pub fn apply_str(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_string(),
                line: k + 1,
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, file: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io {
            path: file.display().to_string(),
            source,
        })?;
        self.apply_str(&text, &file.display().to_string())
    }

    /// Every settable key with its current value, in a fixed order. Feeding
    /// the output back through [`apply_str`](Self::apply_str) reproduces the config.
    pub fn dump(&self) -> String {
        let n = &self.network;
        let f = &self.features;
        let t = &self.train;
        let d = &self.decode;
        let pairs: Vec<(&str, String)> = vec![
            ("unit_dim", n.unit_dim.to_string()),
            ("mwe_hidden", n.mwe_hidden.to_string()),
            ("sense_hidden", n.sense_hidden.to_string()),
            (
                "distance_into_composer",
                n.distance_into_composer.to_string(),
            ),
            ("mean_vector", n.mean_vector_feature.to_string()),
            ("bias", n.bias.to_string()),
            ("recurrency", n.recurrency.to_string()),
            ("hash_dim", f.hash_dim.to_string()),
            ("hash_mode", f.hash_mode.to_string()),
            ("hash_alpha_only", f.hash_alpha_only.to_string()),
            ("lemmatize", f.lemmatize.to_string()),
            ("gap_mode", f.gap_mode.to_string()),
            (
                "ablation",
                f.ablation.map_or_else(|| "none".into(), |a| a.to_string()),
            ),
            ("epochs", t.epochs.to_string()),
            ("lr", t.lr.to_string()),
            ("seed", t.seed.to_string()),
            ("lookahead", t.sampling.lookahead.to_string()),
            ("neg_prob_cap", t.sampling.neg_prob_cap.to_string()),
            ("downweight", t.sampling.downweight.to_string()),
            (
                "sense_error_divisor",
                t.sense_error_divisor
                    .map_or_else(|| "n_senses".into(), |x| x.to_string()),
            ),
            ("shuffle", t.shuffle.to_string()),
            ("theta_start", d.theta_start.to_string()),
            ("theta_extend", d.theta_extend.to_string()),
            ("max_depth", d.max_depth.to_string()),
            ("corpus", show_path(&self.corpus)),
            ("parses", show_path(&self.parses)),
            ("test_corpus", show_path(&self.test_corpus)),
            ("test_parses", show_path(&self.test_parses)),
            ("embeddings", show_path(&self.embeddings)),
            (
                "embedding_format",
                format_name(self.embedding_format).to_string(),
            ),
            ("model", show_path(&self.model)),
            ("output", show_path(&self.output)),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_DUMP: &str = "\
unit_dim=300
mwe_hidden=1024
sense_hidden=256
distance_into_composer=true
mean_vector=true
bias=true
recurrency=true
hash_dim=16
hash_mode=all_words
hash_alpha_only=false
lemmatize=false
gap_mode=intervening
ablation=none
epochs=10
lr=0.01
seed=1
lookahead=9
neg_prob_cap=0.25
downweight=accept
sense_error_divisor=n_senses
shuffle=true
theta_start=-0.15
theta_extend=0
max_depth=2
corpus=
parses=
test_corpus=
test_parses=
embeddings=
embedding_format=auto
model=
output=
";

    #[test]
    fn default_dump_snapshot() {
        assert_eq!(RunConfig::default().dump(), DEFAULT_DUMP);
    }

    #[test]
    fn dump_round_trips() {
        let mut c = RunConfig::default();
        c.apply_str(
            "# comment\nunit_dim = 40\nhash_mode=unknown_only\nablation=word_hash\n\nlookahead=4 # trailing\nmodel=/tmp/m.bin\nsense_error_divisor=1\n",
            "test",
        )
        .unwrap();
        assert_eq!(c.network.unit_dim, 40);
        assert_eq!(c.decode.lookahead, 4);
        assert_eq!(c.train.sampling.lookahead, 4);
        let mut back = RunConfig::default();
        back.apply_str(&c.dump(), "dump").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors() {
        let mut c = RunConfig::default();
        assert!(matches!(
            c.set("nope", "1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            c.set("epochs", "x"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            c.set("bias", "maybe"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            c.apply_str("just text", "t"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }
}
