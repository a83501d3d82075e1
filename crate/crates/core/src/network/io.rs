//! Binary model container.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "SEMUNIT" | version u8
//! config block:    len, UTF-8 `key=value` lines
//! POS tags:        count, then (len, bytes) per tag
//! sense inventory: count, then (len, bytes) per label
//! tensors:         count, then (name len, name, rows, cols, rows*cols f32) each
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ModelParams, NetworkConfig, PosTagSet};
use crate::features::{FeatureConfig, GapMode, HashMode};
use crate::scalar::Scalar;

const MAGIC: &[u8; 7] = b"SEMUNIT";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("unsupported model file version {0}")]
    Version(u8),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to run prediction with a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile<T> {
    pub params: ModelParams<T>,
    pub features: FeatureConfig,
    pub sense_inventory: Vec<String>,
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn config_pairs(n: &NetworkConfig, f: &FeatureConfig) -> Vec<(String, String)> {
    [
        ("unit_dim", n.unit_dim.to_string()),
        ("embedding_dim", n.embedding_dim.to_string()),
        ("hash_dim", n.hash_dim.to_string()),
        ("mwe_hidden", n.mwe_hidden.to_string()),
        ("sense_hidden", n.sense_hidden.to_string()),
        ("n_senses", n.n_senses.to_string()),
        (
            "distance_into_composer",
            bool_str(n.distance_into_composer).into(),
        ),
        ("mean_vector", bool_str(n.mean_vector_feature).into()),
        ("bias", bool_str(n.bias).into()),
        ("recurrency", bool_str(n.recurrency).into()),
        ("hash_mode", f.hash_mode.to_string()),
        ("hash_alpha_only", bool_str(f.hash_alpha_only).into()),
        ("lemmatize", bool_str(f.lemmatize).into()),
        ("gap_mode", f.gap_mode.to_string()),
        (
            "ablation",
            f.ablation
                .map_or_else(|| "none".to_string(), |a| a.to_string()),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::other("value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len())?;
    w.write_all(s.as_bytes())
}

pub fn write_model<T: Scalar, W: Write>(
    model: &ModelFile<T>,
    mut w: W,
) -> Result<(), ModelFileError> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let cfg: String = config_pairs(&model.params.config, &model.features)
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    put_str(&mut w, &cfg)?;
    let tags = model.params.config.pos_tags.tags();
    put_u32(&mut w, tags.len())?;
    for t in tags {
        put_str(&mut w, t)?;
    }
    put_u32(&mut w, model.sense_inventory.len())?;
    for s in &model.sense_inventory {
        put_str(&mut w, s)?;
    }
    let tensors = model.params.tensors();
    put_u32(&mut w, tensors.len())?;
    for t in tensors {
        put_str(&mut w, &t.name)?;
        put_u32(&mut w, t.rows)?;
        put_u32(&mut w, t.cols)?;
        for x in t.data {
            w.write_all(&x.as_f32().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_model<T: Scalar>(model: &ModelFile<T>, path: &Path) -> Result<(), ModelFileError> {
    write_model(model, BufWriter::new(File::create(path)?))
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn u32(&mut self) -> Result<usize, ModelFileError> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b) as usize)
    }

    fn string(&mut self) -> Result<String, ModelFileError> {
        let len = self.u32()?;
        let mut b = vec![0u8; len];
        self.inner.read_exact(&mut b)?;
        String::from_utf8(b).map_err(|_| ModelFileError::Malformed("string is not UTF-8".into()))
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ModelFileError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ModelFileError::Malformed(format!(
            "{key}: expected true/false, got {v:?}"
        ))),
    }
}

pub fn read_model<T: Scalar, R: Read>(r: R) -> Result<ModelFile<T>, ModelFileError> {
    let mut c = Cursor { inner: r };
    let mut magic = [0u8; 7];
    c.inner
        .read_exact(&mut magic)
        .map_err(|_| ModelFileError::Magic)?;
    if &magic != MAGIC {
        return Err(ModelFileError::Magic);
    }
    let mut version = [0u8; 1];
    c.inner.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(ModelFileError::Version(version[0]));
    }
    let text = c.string()?;
    let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| -> Result<&str, ModelFileError> {
        kv.get(k)
            .copied()
            .ok_or_else(|| ModelFileError::Malformed(format!("config key {k} missing")))
    };
    let num = |k: &str| -> Result<usize, ModelFileError> {
        get(k)?
            .parse()
            .map_err(|_| ModelFileError::Malformed(format!("config key {k} is not a number")))
    };
    let flag = |k: &str| -> Result<bool, ModelFileError> { parse_bool(k, get(k)?) };
    let bad = |e: String| ModelFileError::Malformed(e);

    let n_tags = c.u32()?;
    let tags = (0..n_tags)
        .map(|_| c.string())
        .collect::<Result<Vec<_>, _>>()?;
    let n_senses = c.u32()?;
    let senses = (0..n_senses)
        .map(|_| c.string())
        .collect::<Result<Vec<_>, _>>()?;

    let config = NetworkConfig {
        unit_dim: num("unit_dim")?,
        embedding_dim: num("embedding_dim")?,
        hash_dim: num("hash_dim")?,
        mwe_hidden: num("mwe_hidden")?,
        sense_hidden: num("sense_hidden")?,
        n_senses: num("n_senses")?,
        pos_tags: PosTagSet::new(tags),
        distance_into_composer: flag("distance_into_composer")?,
        mean_vector_feature: flag("mean_vector")?,
        bias: flag("bias")?,
        recurrency: flag("recurrency")?,
    };
    if config.n_senses != senses.len() {
        return Err(bad(format!(
            "config has {} senses, inventory lists {}",
            config.n_senses,
            senses.len()
        )));
    }
    let features = FeatureConfig {
        hash_dim: config.hash_dim,
        hash_mode: get("hash_mode")?.parse::<HashMode>().map_err(bad)?,
        hash_alpha_only: flag("hash_alpha_only")?,
        lemmatize: flag("lemmatize")?,
        gap_mode: get("gap_mode")?.parse::<GapMode>().map_err(bad)?,
        ablation: match get("ablation")? {
            "none" => None,
            a => Some(a.parse().map_err(bad)?),
        },
    };

    let mut params = ModelParams::<T>::zeros(&config);
    let n_tensors = c.u32()?;
    let expected = params.tensors().len();
    if n_tensors != expected {
        return Err(bad(format!(
            "expected {expected} tensors, found {n_tensors}"
        )));
    }
    for t in params.tensors_mut() {
        let name = c.string()?;
        let (rows, cols) = (c.u32()?, c.u32()?);
        if name != t.name || rows * cols != t.data.len() {
            return Err(bad(format!(
                "tensor {name} ({rows}x{cols}) does not match expected {}",
                t.name
            )));
        }
        for x in t.data.iter_mut() {
            let mut b = [0u8; 4];
            c.inner.read_exact(&mut b)?;
            *x = T::of_f32(f32::from_le_bytes(b));
        }
    }
    params.check_shapes().map_err(|e| bad(e.to_string()))?;
    Ok(ModelFile {
        params,
        features,
        sense_inventory: senses,
    })
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<ModelFile<T>, ModelFileError> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::super::init_params;
    use super::*;
    use crate::features::Ablation;

    fn model() -> ModelFile<f32> {
        let config = NetworkConfig {
            unit_dim: 3,
            embedding_dim: 2,
            hash_dim: 4,
            mwe_hidden: 5,
            sense_hidden: 2,
            n_senses: 3,
            pos_tags: PosTagSet::new(["NOUN", "VERB"]),
            distance_into_composer: false,
            ..NetworkConfig::default()
        };
        let mut params = init_params(&config, 5);
        params.seed = vec![0.25, -1.5, 3.0];
        ModelFile {
            params,
            features: FeatureConfig {
                hash_dim: 4,
                ablation: Some(Ablation::Distance),
                ..FeatureConfig::default()
            },
            sense_inventory: vec!["unknown".into(), "n.act".into(), "v.body".into()],
        }
    }

    #[test]
    fn round_trip() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..7], b"SEMUNIT");
        assert_eq!(buf[7], 1);
        let back: ModelFile<f32> = read_model(&buf[..]).unwrap();
        assert_eq!(back, m);

        let wide: ModelFile<f64> = read_model(&buf[..]).unwrap();
        assert_eq!(wide.params.seed, [0.25, -1.5, 3.0]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            read_model::<f32, _>(&b"NOTAMODEL"[..]),
            Err(ModelFileError::Magic)
        ));
        let mut buf = Vec::new();
        write_model(&model(), &mut buf).unwrap();
        buf[7] = 9;
        assert!(matches!(
            read_model::<f32, _>(&buf[..]),
            Err(ModelFileError::Version(9))
        ));
        let mut buf = Vec::new();
        write_model(&model(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_model::<f32, _>(&buf[..]).is_err());
    }
}
