//! Parameter storage shared by all models, plus the gradient container
//! produced by [`crate::Graph::backward`].

use crate::Arr;
use ndarray::IxDyn;
use std::io::{self, Read, Write};
use std::path::Path;

/// Handle to one parameter tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

struct Slot {
    name: String,
    value: Arr,
}

/// Named parameter tensors with stable insertion order.
///
/// The order of insertion defines parameter indices, so a model built twice
/// from the same seed produces bit-identical stores.
#[derive(Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self { slots: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Arr) -> ParamId {
        self.slots.push(Slot {
            name: name.into(),
            value,
        });
        ParamId(self.slots.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Arr {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Arr {
        &mut self.slots[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Arr)> {
        self.slots
            .iter()
            .enumerate()
            .map(|(i, s)| (ParamId(i), s.name.as_str(), &s.value))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    /// Serialize all parameters to a little-endian binary blob.
    ///
    /// Layout: magic `NNWB`, u32 version, u64 slot count, then per slot:
    /// u32 name length, name bytes, u32 ndim, u64 dims, f64 data.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"NNWB")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.slots.len() as u64).to_le_bytes())?;
        for s in &self.slots {
            let name = s.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            let shape = s.value.shape();
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            debug_assert!(s.value.is_standard_layout());
            for &x in s.value.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`ParamStore::save`]. Fails on magic/version mismatch.
    pub fn load(path: &Path) -> io::Result<Self> {
        let mut r = io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"NNWB" {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "not a weight blob (bad magic)",
            ));
        }
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported weight blob version {version}"),
            ));
        }
        let count = read_u64(&mut r)? as usize;
        let mut slots = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let ndim = read_u32(&mut r)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(read_u64(&mut r)? as usize);
            }
            let len: usize = dims.iter().product();
            let mut data = vec![0f64; len];
            for x in data.iter_mut() {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                *x = f64::from_le_bytes(buf);
            }
            let value = Arr::from_shape_vec(IxDyn(&dims), data)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
            slots.push(Slot {
                name: String::from_utf8_lossy(&name).into_owned(),
                value,
            });
        }
        Ok(Self { slots })
    }

    /// Copy values from another store with identical layout (names + shapes).
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<(), String> {
        if self.slots.len() != other.slots.len() {
            return Err(format!(
                "parameter count mismatch: {} vs {}",
                self.slots.len(),
                other.slots.len()
            ));
        }
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(format!(
                    "parameter layout mismatch at `{}` ({:?}) vs `{}` ({:?})",
                    mine.name,
                    mine.value.shape(),
                    theirs.name,
                    theirs.value.shape()
                ));
            }
            mine.value.assign(&theirs.value);
        }
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Per-parameter gradients, indexed like the originating [`ParamStore`].
pub struct Grads {
    pub(crate) by_param: Vec<Option<Arr>>,
}

impl Grads {
    pub fn new(n_params: usize) -> Self {
        Self {
            by_param: (0..n_params).map(|_| None).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Arr> {
        self.by_param.get(id.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: Arr) {
        match &mut self.by_param[id.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    /// Sum another gradient set into this one (fixed order, deterministic).
    pub fn merge(&mut self, other: Grads) {
        assert_eq!(self.by_param.len(), other.by_param.len());
        for (i, g) in other.by_param.into_iter().enumerate() {
            if let Some(g) = g {
                match &mut self.by_param[i] {
                    Some(acc) => *acc += &g,
                    slot @ None => *slot = Some(g),
                }
            }
        }
    }

    /// Scale all gradients in place (e.g. averaging over batch shards).
    pub fn scale(&mut self, factor: f64) {
        for g in self.by_param.iter_mut().flatten() {
            g.mapv_inplace(|x| x * factor);
        }
    }

    /// Euclidean norm over every gradient element.
    pub fn global_norm(&self) -> f64 {
        self.by_param
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn has_nan(&self) -> bool {
        self.by_param
            .iter()
            .flatten()
            .any(|g| g.iter().any(|x| !x.is_finite()))
    }
}
