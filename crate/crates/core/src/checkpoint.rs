//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "SHOPCKPT"
//! version   u32      1
//! sections  u32      number of sections
//! per section:
//!   name_len u32, name (UTF-8)
//!   kind     u8      0 = f64 array, 1 = text
//!   array:   ndims u32, dims u64 × ndims, values f64 × prod(dims)
//!   text:    len u64, bytes (UTF-8)
//! ```
//!
//! Sections written: `model_config` (JSON), `catalog` (JSON),
//! `catalog_hash`, and two arrays per latent named `<latent>.mean` and
//! `<latent>.std` (Gaussian) or `<latent>.shape` and `<latent>.mean` (gamma).

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::block::Block;
use crate::data::Catalog;
use crate::error::{Result, ShopperError};
use crate::model::{Latent, ModelConfig};
use crate::variational::{Factor, VariationalState};

pub const MAGIC: &[u8; 8] = b"SHOPCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    Array { dims: Vec<u64>, values: Vec<f64> },
    Text(String),
}

/// A fitted model with everything needed to evaluate it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub catalog: Catalog,
    pub state: VariationalState,
}

fn param_names(latent: Latent) -> [String; 2] {
    let n = latent.name();
    if latent.is_positive() {
        [format!("{n}.shape"), format!("{n}.mean")]
    } else {
        [format!("{n}.mean"), format!("{n}.std")]
    }
}

impl Checkpoint {
    pub fn to_sections(&self) -> Result<Vec<(String, Section)>> {
        let mut out = vec![
            ("model_config".to_string(), Section::Text(to_json(&self.config)?)),
            ("catalog".to_string(), Section::Text(to_json(&self.catalog)?)),
            ("catalog_hash".to_string(), Section::Text(self.catalog.hash())),
        ];
        for latent in Latent::ALL {
            let (a, b) = self.state.factor(latent).params();
            let [na, nb] = param_names(latent);
            for (name, block) in [(na, a), (nb, b)] {
                out.push((
                    name,
                    Section::Array {
                        dims: vec![block.rows() as u64, block.cols() as u64],
                        values: block.as_slice().to_vec(),
                    },
                ));
            }
        }
        Ok(out)
    }

    pub fn from_sections(sections: Vec<(String, Section)>) -> Result<Self> {
        let mut map: BTreeMap<String, Section> = sections.into_iter().collect();
        let mut text = |name: &str| -> Result<String> {
            match map.remove(name) {
                Some(Section::Text(s)) => Ok(s),
                _ => Err(ShopperError::Checkpoint(format!("missing text section `{name}`"))),
            }
        };
        let config: ModelConfig = serde_json::from_str(&text("model_config")?)
            .map_err(|e| ShopperError::Checkpoint(format!("model_config: {e}")))?;
        let mut catalog: Catalog = serde_json::from_str(&text("catalog")?)
            .map_err(|e| ShopperError::Checkpoint(format!("catalog: {e}")))?;
        catalog.rebuild_index()?;
        let stored_hash = text("catalog_hash")?;
        if stored_hash != catalog.hash() {
            return Err(ShopperError::CatalogMismatch {
                expected: stored_hash,
                found: catalog.hash(),
            });
        }
        let shapes = config.shapes(catalog.n_items(), catalog.n_users());
        let mut array = |name: &str, shape: (usize, usize)| -> Result<Block> {
            match map.remove(name) {
                Some(Section::Array { dims, values }) => {
                    if dims != [shape.0 as u64, shape.1 as u64] {
                        return Err(ShopperError::Checkpoint(format!(
                            "section `{name}` has shape {dims:?}, expected {shape:?}"
                        )));
                    }
                    Ok(Block::from_vec(shape.0, shape.1, values))
                }
                _ => Err(ShopperError::Checkpoint(format!("missing array section `{name}`"))),
            }
        };
        let mut factors = Vec::with_capacity(8);
        for latent in Latent::ALL {
            let [na, nb] = param_names(latent);
            let shape = shapes[latent.index()];
            let (a, b) = (array(&na, shape)?, array(&nb, shape)?);
            factors.push(if latent.is_positive() {
                Factor::Gamma { shape: a, mean: b }
            } else {
                Factor::Gaussian { mean: a, std: b }
            });
        }
        let factors: [Factor; 8] = factors
            .try_into()
            .map_err(|_| ShopperError::Checkpoint("wrong number of factors".into()))?;
        let state = VariationalState::from_factors(factors)
            .map_err(|e| ShopperError::Checkpoint(e.to_string()))?;
        Ok(Self {
            config,
            catalog,
            state,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = encode(&self.to_sections()?);
        std::fs::write(path, bytes).map_err(|e| ShopperError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| ShopperError::io(path, e))?;
        Self::from_sections(decode(&bytes)?)
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| ShopperError::Checkpoint(e.to_string()))
}

pub fn encode(sections: &[(String, Section)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, section) in sections {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        match section {
            Section::Array { dims, values } => {
                out.push(0);
                out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
                for d in dims {
                    out.extend_from_slice(&d.to_le_bytes());
                }
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Section::Text(s) => {
                out.push(1);
                out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ShopperError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ShopperError::Checkpoint("section text is not UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Section)>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(ShopperError::Checkpoint("not a checkpoint file".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(ShopperError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = cur.u32()?;
    let mut sections = Vec::new();
    for _ in 0..n {
        let name_len = cur.u32()? as usize;
        let name = cur.string(name_len)?;
        let section = match cur.u8()? {
            0 => {
                let ndims = cur.u32()? as usize;
                let dims = (0..ndims).map(|_| cur.u64()).collect::<Result<Vec<u64>>>()?;
                let count = dims
                    .iter()
                    .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                    .filter(|&c| c.saturating_mul(8) <= bytes.len() as u64)
                    .ok_or_else(|| ShopperError::Checkpoint(format!("bad dimensions in `{name}`")))?;
                let values = cur
                    .take(count as usize * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Section::Array { dims, values }
            }
            1 => {
                let len = cur.u64()? as usize;
                Section::Text(cur.string(len)?)
            }
            k => return Err(ShopperError::Checkpoint(format!("unknown section kind {k}"))),
        };
        sections.push((name, section));
    }
    if cur.pos != bytes.len() {
        return Err(ShopperError::Checkpoint("trailing bytes after last section".into()));
    }
    Ok(sections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn round_trip_preserves_everything() {
        let catalog = Catalog::new(vec!["a".into(), "b".into()], vec!["u".into()]).unwrap();
        let config = ModelConfig {
            k_items: 2,
            k_price: 1,
            k_season: 1,
            ..ModelConfig::default()
        };
        let mut rng = stream_rng(1, "ckpt");
        let state = VariationalState::initialize(&config, catalog.n_items(), 1, 0.1, &mut rng);
        let ckpt = Checkpoint {
            config: config.clone(),
            catalog: catalog.clone(),
            state: state.clone(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.config, config);
        assert_eq!(back.state, state);
        assert_eq!(back.catalog.hash(), catalog.hash());
        assert_eq!(back.catalog.item_index("b"), Some(1));
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(decode(b"NOTACKPT").is_err());
        let mut bytes = encode(&[("x".into(), Section::Text("hi".into()))]);
        assert_eq!(decode(&bytes).unwrap().len(), 1);
        bytes.pop();
        assert!(decode(&bytes).is_err());
        let mut bad_version = encode(&[]);
        bad_version[8] = 9;
        assert!(decode(&bad_version).is_err());
    }
}
