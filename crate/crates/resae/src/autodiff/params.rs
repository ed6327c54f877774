//! Named parameter store and the binary checkpoint format.
//!
//! Checkpoints are versioned little-endian binary: magic, version, RNG seed,
//! then `name -> shape -> raw f64 payload` entries in sorted-name order. The
//! round trip is bit exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{ResaeError, Result};

const CKPT_MAGIC: &[u8; 6] = b"RESAE\0";
const CKPT_VERSION: u32 = 1;

/// Ordered map of parameter path to tensor. Iteration order is the sorted
/// name order, which makes optimizer sweeps and checkpoints deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    pub seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(
            !self.params.contains_key(&name),
            "param store: duplicate parameter {}",
            name
        );
        self.params.insert(name, tensor);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("param store: unknown parameter {}", name))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("param store: unknown parameter {}", name))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    /// Serialize to the versioned binary checkpoint format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CKPT_MAGIC);
        buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for (name, tensor) in &self.params {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(tensor.ndim() as u32).to_le_bytes());
            for &dim in tensor.shape() {
                buf.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for &v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| ResaeError::io(parent, e))?;
            }
        }
        let mut file = fs::File::create(path).map_err(|e| ResaeError::io(path, e))?;
        file.write_all(&buf).map_err(|e| ResaeError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| ResaeError::io(path, e))?;
        let mut cursor = Cursor { buf: &buf, pos: 0 };
        let magic = cursor.bytes(6)?;
        if magic != CKPT_MAGIC {
            return Err(ResaeError::Checkpoint(format!(
                "{}: bad magic, not a checkpoint file",
                path.display()
            )));
        }
        let version = cursor.u32()?;
        if version != CKPT_VERSION {
            return Err(ResaeError::Checkpoint(format!(
                "{}: unsupported version {}",
                path.display(),
                version
            )));
        }
        let seed = cursor.u64()?;
        let count = cursor.u64()? as usize;
        let mut store = ParamStore::new(seed);
        for _ in 0..count {
            let name_len = cursor.u32()? as usize;
            let name = String::from_utf8(cursor.bytes(name_len)?.to_vec())
                .map_err(|e| ResaeError::Checkpoint(format!("bad parameter name: {}", e)))?;
            let ndim = cursor.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cursor.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(cursor.bytes(8)?.try_into().unwrap()));
            }
            store.params.insert(name, Tensor::new(shape, data));
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(ResaeError::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

/// Tape handles for every parameter of a store, registered as leaves.
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("param vars: unknown parameter {}", name))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vars.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

impl Tape {
    /// Register every parameter as a gradient-bearing leaf, in name order.
    pub fn register_params(&self, store: &ParamStore) -> ParamVars {
        let mut vars = BTreeMap::new();
        for (name, tensor) in store.iter() {
            vars.insert(name.clone(), self.leaf(tensor.clone()));
        }
        ParamVars { vars }
    }
}
