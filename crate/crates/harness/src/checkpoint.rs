//! Versioned binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "TAGICKPT" | version u32 | scalar bytes u8 | config hash u64
//! sigma_v f64 | eta f64 | epoch u64 | table length u32 | table (UTF-8)
//! layer count u32 | per layer: weight count u64, bias count u64
//! per layer: weight means, weight variances, bias means, bias variances
//! ```
//!
//! The hash is FNV-1a over the rendered network table, so a checkpoint refuses
//! to load against a different architecture.

use std::path::Path;

use tagi::inference::{LayerParams, ObservationModel};
use tagi::{GaussianVector, NetworkConfig, ParameterStore, Scalar};

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"TAGICKPT";
pub const VERSION: u32 = 1;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn config_hash(cfg: &NetworkConfig) -> u64 {
    let mut text = cfg.to_table();
    if cfg.identity_norm {
        text.push_str("identity-norm\n");
    }
    fnv1a(text.as_bytes())
}

/// A trained network's parameters together with its configuration and noise state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: NetworkConfig,
    pub params: ParameterStore<T>,
    pub obs: ObservationModel,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::BYTES as u8);
        out.extend_from_slice(&config_hash(&self.config).to_le_bytes());
        out.extend_from_slice(&self.obs.sigma_v.to_le_bytes());
        out.extend_from_slice(&self.obs.eta.to_le_bytes());
        out.extend_from_slice(&(self.obs.epoch as u64).to_le_bytes());
        let table = self.config.to_table();
        out.extend_from_slice(&(table.len() as u32).to_le_bytes());
        out.extend_from_slice(table.as_bytes());
        out.push(self.config.identity_norm as u8);
        out.extend_from_slice(&(self.params.layers.len() as u32).to_le_bytes());
        for l in &self.params.layers {
            out.extend_from_slice(&(l.weights.len() as u64).to_le_bytes());
            out.extend_from_slice(&(l.biases.len() as u64).to_le_bytes());
        }
        out.extend(self.params.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(HarnessError::Data("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(HarnessError::Data(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let width = r.take(1)?[0] as usize;
        if width != T::BYTES {
            return Err(HarnessError::Data(format!("checkpoint stores {width}-byte scalars, reader expects {}", T::BYTES)));
        }
        let hash = r.u64()?;
        let sigma_v = r.f64()?;
        let eta = r.f64()?;
        let epoch = r.u64()? as usize;
        let table_len = r.u32()? as usize;
        let table = std::str::from_utf8(r.take(table_len)?)
            .map_err(|_| HarnessError::Data("checkpoint table is not UTF-8".into()))?;
        let mut config = NetworkConfig::parse(table)?;
        config.identity_norm = r.take(1)?[0] != 0;
        if config_hash(&config) != hash {
            return Err(HarnessError::Data("checkpoint config hash mismatch".into()));
        }
        let mut obs = ObservationModel::new(sigma_v, eta)?;
        obs.epoch = epoch;
        let n_layers = r.u32()? as usize;
        let counts: Vec<(usize, usize)> = (0..n_layers).map(|_| Ok((r.u64()? as usize, r.u64()? as usize))).collect::<Result<_>>()?;
        let mut read = |n: usize| -> Result<Vec<T>> {
            let raw = r.take(n.checked_mul(T::BYTES).ok_or_else(|| HarnessError::Data("layer size overflow".into()))?)?;
            Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
        };
        let mut layers = Vec::with_capacity(n_layers);
        for (nw, nb) in counts {
            let (wm, wv, bm, bv) = (read(nw)?, read(nw)?, read(nb)?, read(nb)?);
            layers.push(LayerParams { weights: GaussianVector::new(wm, wv)?, biases: GaussianVector::new(bm, bv)? });
        }
        if r.pos != bytes.len() {
            return Err(HarnessError::Data(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        Ok(Self { config, params: ParameterStore { layers }, obs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            HarnessError::Data(m) => HarnessError::Data(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Fails unless the checkpoint was written for `expected`.
    pub fn expect_config(&self, expected: &NetworkConfig) -> Result<()> {
        if config_hash(expected) != config_hash(&self.config) {
            return Err(HarnessError::Config(format!(
                "checkpoint was trained for `{}`, not `{}`",
                self.config.name, expected.name
            )));
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| HarnessError::Data("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tagi::preset;

    fn sample() -> Checkpoint<f32> {
        let config = preset("mnist-cnn").unwrap();
        let (_, params) = tagi::build::<f32>(config.clone(), 3).unwrap();
        let mut obs = ObservationModel::new(1.0, 0.975).unwrap();
        obs.epoch = 2;
        obs.sigma_v = 0.950625;
        Checkpoint { config, params, obs }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = sample();
        let back = Checkpoint::<f32>::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.params.to_bytes(), c.params.to_bytes());
    }

    #[test]
    fn header_fields_are_where_documented() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), VERSION);
        assert_eq!(bytes[12], 4);
        assert_eq!(u64::from_le_bytes(bytes[13..21].try_into().unwrap()), config_hash(&preset("mnist-cnn").unwrap()));
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
        let mut hash = bytes.clone();
        hash[13] ^= 1;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&hash), Err(HarnessError::Data(m)) if m.contains("hash")));
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::<f32>::from_bytes(&longer).is_err());
    }

    #[test]
    fn architecture_check() {
        let c = sample();
        assert!(c.expect_config(&preset("mnist-cnn").unwrap()).is_ok());
        assert!(c.expect_config(&preset("cifar10-3conv").unwrap()).is_err());
    }
}
