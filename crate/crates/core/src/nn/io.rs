//! Binary model container.
//!
//! All integers are little-endian `u32`, floats are little-endian IEEE-754
//! `f64`, strings are a `u32` byte length followed by UTF-8.
//!
//! ```text
//! magic     8 bytes   "TDNMODEL"
//! version   u32       FORMAT_VERSION
//! role      u8        0 network, 1 vae, 2 idn, 3 tdn
//! meta      u32 count, then count x (key: str, value: str)
//! networks  u32 count, then per network:
//!             name    str
//!             layers  u32 count, then per layer:
//!               in_dim u32, out_dim u32, activation u8, frozen u8
//!               weight  out_dim*in_dim f64, row-major
//!               bias    out_dim f64
//! scaler    u8 flag; when 1: dim u32, mean dim f64, std dim f64
//! ```
//!
//! Layers are written in order, weights before biases, so a round trip is
//! bit-exact. Meta entries are written in key order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Dense, Network};
use crate::error::{Error, LoadError, Result};
use crate::transfer::Scaler;

pub const MAGIC: &[u8; 8] = b"TDNMODEL";
pub const FORMAT_VERSION: u32 = 1;

/// What a model file contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelRole {
    Network,
    Vae,
    Idn,
    Tdn,
}

impl ModelRole {
    fn tag(self) -> u8 {
        match self {
            ModelRole::Network => 0,
            ModelRole::Vae => 1,
            ModelRole::Idn => 2,
            ModelRole::Tdn => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        [ModelRole::Network, ModelRole::Vae, ModelRole::Idn, ModelRole::Tdn]
            .into_iter()
            .find(|r| r.tag() == tag)
    }
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Network => "network",
            ModelRole::Vae => "vae",
            ModelRole::Idn => "idn",
            ModelRole::Tdn => "tdn",
        })
    }
}

/// Named networks plus metadata and an optional scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub role: ModelRole,
    pub meta: BTreeMap<String, String>,
    pub networks: Vec<Network>,
    pub scaler: Option<Scaler>,
}

impl ModelFile {
    pub fn new(role: ModelRole) -> Self {
        Self {
            role,
            meta: BTreeMap::new(),
            networks: Vec::new(),
            scaler: None,
        }
    }

    pub fn network(&self, name: &str) -> std::result::Result<&Network, LoadError> {
        self.networks
            .iter()
            .find(|n| n.name() == name)
            .ok_or_else(|| LoadError::Dimension(format!("missing network `{name}`")))
    }

    pub fn meta_value(&self, key: &str) -> std::result::Result<&str, LoadError> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| LoadError::Dimension(format!("missing metadata `{key}`")))
    }

    pub fn expect_role(&self, role: ModelRole) -> std::result::Result<(), LoadError> {
        if self.role == role {
            Ok(())
        } else {
            Err(LoadError::Role {
                expected: role.to_string(),
                found: self.role.to_string(),
            })
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        out.push(self.role.tag());
        put_u32(&mut out, self.meta.len() as u32);
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.networks.len() as u32);
        for net in &self.networks {
            write_network(&mut out, net);
        }
        match &self.scaler {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                put_u32(&mut out, s.dim() as u32);
                s.mean().iter().for_each(|&v| put_f64(&mut out, v));
                s.std().iter().for_each(|&v| put_f64(&mut out, v));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, LoadError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(LoadError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(LoadError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let tag = r.u8("role")?;
        let role = ModelRole::from_tag(tag).ok_or(LoadError::UnknownTag { what: "role", tag })?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32("meta count")? {
            let k = r.string("meta key")?;
            let v = r.string("meta value")?;
            meta.insert(k, v);
        }
        let n_nets = r.u32("network count")?;
        let mut networks = Vec::new();
        for _ in 0..n_nets {
            networks.push(read_network(&mut r)?);
        }
        let scaler = match r.u8("scaler flag")? {
            0 => None,
            1 => {
                let dim = r.u32("scaler dim")? as usize;
                let mean = r.f64s(dim, "scaler mean")?;
                let std = r.f64s(dim, "scaler std")?;
                Some(
                    Scaler::from_parts(Array1::from(mean), Array1::from(std))
                        .map_err(|e| LoadError::Dimension(e.to_string()))?,
                )
            }
            tag => return Err(LoadError::UnknownTag { what: "scaler flag", tag }),
        };
        if r.pos != bytes.len() {
            return Err(LoadError::Trailing);
        }
        Ok(Self {
            role,
            meta,
            networks,
            scaler,
        })
    }

    /// Write atomically: a temporary sibling file is renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::artifact::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

fn write_network(out: &mut Vec<u8>, net: &Network) {
    put_str(out, net.name());
    put_u32(out, net.layers().len() as u32);
    for l in net.layers() {
        put_u32(out, l.in_dim() as u32);
        put_u32(out, l.out_dim() as u32);
        out.push(l.activation.tag());
        out.push(l.frozen as u8);
        // iter() walks in logical (row-major) order regardless of memory layout
        l.weight.iter().for_each(|&v| put_f64(out, v));
        l.bias.iter().for_each(|&v| put_f64(out, v));
    }
}

fn read_network(r: &mut Reader<'_>) -> std::result::Result<Network, LoadError> {
    let name = r.string("network name")?;
    let n_layers = r.u32("layer count")?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let in_dim = r.u32("layer in_dim")? as usize;
        let out_dim = r.u32("layer out_dim")? as usize;
        let tag = r.u8("activation")?;
        let activation = Activation::from_tag(tag).ok_or(LoadError::UnknownTag { what: "activation", tag })?;
        let frozen = match r.u8("frozen flag")? {
            0 => false,
            1 => true,
            tag => return Err(LoadError::UnknownTag { what: "frozen flag", tag }),
        };
        let n_w = in_dim
            .checked_mul(out_dim)
            .ok_or_else(|| LoadError::Dimension(format!("layer {in_dim}x{out_dim} too large")))?;
        let weight = Array2::from_shape_vec((out_dim, in_dim), r.f64s(n_w, "weights")?)
            .map_err(|e| LoadError::Dimension(e.to_string()))?;
        let bias = Array1::from(r.f64s(out_dim, "biases")?);
        layers.push(Dense {
            activation,
            weight,
            bias,
            frozen,
        });
    }
    Network::from_layers(name, layers).map_err(|e| LoadError::Dimension(e.to_string()))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], LoadError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(LoadError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> std::result::Result<u8, LoadError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> std::result::Result<Vec<f64>, LoadError> {
        let bytes = self.take(n.checked_mul(8).ok_or(LoadError::Truncated(what))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self, what: &'static str) -> std::result::Result<String, LoadError> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| LoadError::Dimension(format!("{what} is not UTF-8")))
    }
}
