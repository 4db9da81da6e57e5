//! Named parameter storage, the Adam step, and checkpoint files.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;

use super::NncoreError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ParamEntry {
    value: Array2<f64>,
    m: Array2<f64>,
    v: Array2<f64>,
}

/// Ordered map of named parameter matrices with their Adam moments and a
/// global step counter. Insertion order is the serialization order, so a
/// store built by the same code path always round-trips bit-exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) -> Result<(), NncoreError> {
        if self.entries.contains_key(name) {
            return Err(NncoreError::DuplicateParam { name: name.to_string() });
        }
        let m = Array2::zeros(value.raw_dim());
        let v = Array2::zeros(value.raw_dim());
        self.entries.insert(name.to_string(), ParamEntry { value, m, v });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn set(&mut self, name: &str, value: Array2<f64>) -> Result<(), NncoreError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NncoreError::UnknownParam { name: name.to_string() })?;
        if entry.value.raw_dim() != value.raw_dim() {
            return Err(NncoreError::ShapeMismatch {
                context: format!(
                    "set {name:?}: expected {:?}, got {:?}",
                    entry.value.shape(),
                    value.shape()
                ),
            });
        }
        entry.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Overwrite our values with another store's (used for target-network
    /// sync). Names and shapes must match.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<(), NncoreError> {
        for (name, entry) in &other.entries {
            let ours = self
                .entries
                .get_mut(name)
                .ok_or_else(|| NncoreError::UnknownParam { name: name.clone() })?;
            ours.value = entry.value.clone();
        }
        Ok(())
    }

    /// One Adam update with bias correction. Parameters without a gradient
    /// entry stay untouched; non-finite gradients are rejected by name.
    pub fn adam_step(
        &mut self,
        grads: &[(String, Array2<f64>)],
        cfg: AdamConfig,
    ) -> Result<(), NncoreError> {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (name, grad) in grads {
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(NncoreError::NonFiniteGradient { name: name.clone() });
            }
            let entry = self
                .entries
                .get_mut(name)
                .ok_or_else(|| NncoreError::UnknownParam { name: name.clone() })?;
            if entry.value.raw_dim() != grad.raw_dim() {
                return Err(NncoreError::ShapeMismatch {
                    context: format!(
                        "gradient for {name:?}: expected {:?}, got {:?}",
                        entry.value.shape(),
                        grad.shape()
                    ),
                });
            }
            let ParamEntry { value, m, v } = entry;
            m.zip_mut_with(grad, |m, &g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
            v.zip_mut_with(grad, |v, &g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
            ndarray::Zip::from(value).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            });
        }
        Ok(())
    }

    /// Write a checkpoint: version header, opaque metadata string, step
    /// counter, then per-parameter name, shape, values, and Adam moments as
    /// little-endian f64. Deterministic, so identical training runs produce
    /// byte-identical files.
    pub fn save(&self, path: impl AsRef<Path>, metadata: &str) -> Result<(), NncoreError> {
        let display = path.as_ref().display().to_string();
        let file = std::fs::File::create(path.as_ref()).map_err(|source| NncoreError::Io {
            path: display.clone(),
            source,
        })?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<std::fs::File>, bytes: &[u8]| {
            out.write_all(bytes).map_err(|source| NncoreError::Io {
                path: display.clone(),
                source,
            })
        };
        write(&mut out, b"THCKPT\0")?;
        write(&mut out, &1u32.to_le_bytes())?;
        write(&mut out, &(metadata.len() as u64).to_le_bytes())?;
        write(&mut out, metadata.as_bytes())?;
        write(&mut out, &self.step.to_le_bytes())?;
        write(&mut out, &(self.entries.len() as u64).to_le_bytes())?;
        for (name, entry) in &self.entries {
            write(&mut out, &(name.len() as u64).to_le_bytes())?;
            write(&mut out, name.as_bytes())?;
            write(&mut out, &(entry.value.nrows() as u64).to_le_bytes())?;
            write(&mut out, &(entry.value.ncols() as u64).to_le_bytes())?;
            for arr in [&entry.value, &entry.m, &entry.v] {
                for &x in arr.iter() {
                    write(&mut out, &x.to_le_bytes())?;
                }
            }
        }
        out.flush().map_err(|source| NncoreError::Io { path: display.clone(), source })
    }

    /// Load a checkpoint, returning the store and its metadata string.
    pub fn load(path: impl AsRef<Path>) -> Result<(ParamStore, String), NncoreError> {
        let display = path.as_ref().display().to_string();
        let file = std::fs::File::open(path.as_ref()).map_err(|source| NncoreError::Io {
            path: display.clone(),
            source,
        })?;
        let mut input = BufReader::new(file);
        read_checkpoint(&mut input).map_err(|e| NncoreError::CorruptCheckpoint {
            path: display,
            message: e.to_string(),
        })
    }
}

fn read_checkpoint<R: Read>(input: &mut R) -> std::io::Result<(ParamStore, String)> {
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |input: &mut R| -> std::io::Result<u64> {
        input.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };

    let mut magic = [0u8; 7];
    input.read_exact(&mut magic)?;
    if &magic != b"THCKPT\0" {
        return Err(bad("bad checkpoint magic"));
    }
    let mut verbuf = [0u8; 4];
    input.read_exact(&mut verbuf)?;
    if u32::from_le_bytes(verbuf) != 1 {
        return Err(bad("unsupported checkpoint version"));
    }
    let meta_len = read_u64(input)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    input.read_exact(&mut meta_bytes)?;
    let metadata = String::from_utf8(meta_bytes).map_err(|e| bad(&e.to_string()))?;
    let step = read_u64(input)?;
    let count = read_u64(input)? as usize;

    let mut store = ParamStore { entries: IndexMap::new(), step };
    for _ in 0..count {
        let name_len = read_u64(input)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        input.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes).map_err(|e| bad(&e.to_string()))?;
        let rows = read_u64(input)? as usize;
        let cols = read_u64(input)? as usize;
        let mut arrays = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut data = Vec::with_capacity(rows * cols);
            let mut f64buf = [0u8; 8];
            for _ in 0..rows * cols {
                input.read_exact(&mut f64buf)?;
                data.push(f64::from_le_bytes(f64buf));
            }
            arrays.push(
                Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(&e.to_string()))?,
            );
        }
        let v = arrays.pop().unwrap();
        let m = arrays.pop().unwrap();
        let value = arrays.pop().unwrap();
        if store.entries.insert(name.clone(), ParamEntry { value, m, v }).is_some() {
            return Err(bad(&format!("duplicate parameter {name:?}")));
        }
    }
    Ok((store, metadata))
}
