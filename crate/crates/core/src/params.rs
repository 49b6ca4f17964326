//! Named, seed-initialized trainable tensors and their on-disk format.
//!
//! A checkpoint is a JSON manifest listing every tensor (name, shape, dtype,
//! element offset) next to a blob of little-endian `f32` values concatenated
//! in manifest order.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: Vec<(String, Var)>,
    dtype: DType,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            entries: Vec::new(),
            dtype,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        if self.get(name).is_some() {
            return Err(Error::InvalidConfig(format!(
                "parameter `{name}` defined twice"
            )));
        }
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let tensor = var.as_tensor().clone();
        self.entries.push((name.to_string(), var));
        Ok(tensor)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, shape, values)
    }

    pub fn normal(
        &mut self,
        name: &str,
        shape: &[usize],
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let n = shape.iter().product();
        let values = (0..n)
            .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        self.insert(name, shape, values)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        self.insert(name, shape, vec![value; n])
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Var)] {
        &self.entries
    }

    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.entries
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Raw values of one parameter, as f64.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        let var = self
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        Ok(var
            .as_tensor()
            .flatten_all()?
            .to_dtype(DType::F64)?
            .to_vec1()?)
    }

    /// FNV-1a over the exact bit patterns of every parameter, in store order.
    pub fn checksum(&self) -> Result<u64> {
        self.checksum_filtered(|_| true)
    }

    pub fn checksum_filtered(&self, keep: impl Fn(&str) -> bool) -> Result<u64> {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for (name, var) in &self.entries {
            if !keep(name) {
                continue;
            }
            for b in name.bytes() {
                hash = (hash ^ u64::from(b)).wrapping_mul(0x1000_0000_01b3);
            }
            let values: Vec<f64> = var
                .as_tensor()
                .flatten_all()?
                .to_dtype(DType::F64)?
                .to_vec1()?;
            for v in values {
                for b in v.to_bits().to_le_bytes() {
                    hash = (hash ^ u64::from(b)).wrapping_mul(0x1000_0000_01b3);
                }
            }
        }
        Ok(hash)
    }

    /// Overwrites `name` with `values` (same element count).
    pub fn assign(&self, name: &str, values: &Tensor) -> Result<()> {
        let var = self
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        let values = values.to_dtype(self.dtype)?.reshape(var.shape())?;
        var.set(&values)?;
        Ok(())
    }

    /// Copies every parameter whose name exists in both stores.
    pub fn copy_from(&self, other: &ParamStore, keep: impl Fn(&str) -> bool) -> Result<usize> {
        let mut copied = 0;
        for (name, var) in &other.entries {
            if keep(name) && self.get(name).is_some() {
                self.assign(name, var.as_tensor())?;
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn save(&self, manifest_path: &Path, extra: serde_json::Value) -> Result<()> {
        let blob_path = blob_path(manifest_path);
        let mut blob = std::io::BufWriter::new(std::fs::File::create(&blob_path)?);
        let mut tensors = Vec::with_capacity(self.entries.len());
        let mut offset = 0usize;
        for (name, var) in &self.entries {
            let values: Vec<f32> = var
                .as_tensor()
                .flatten_all()?
                .to_dtype(DType::F32)?
                .to_vec1()?;
            for v in &values {
                blob.write_all(&v.to_le_bytes())?;
            }
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: var.dims().to_vec(),
                dtype: "f32".to_string(),
                offset,
            });
            offset += values.len();
        }
        blob.flush()?;
        let manifest = Manifest {
            blob: blob_path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            tensors,
            config: extra,
        };
        std::fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Loads values for every parameter in this store from a checkpoint.
    /// Every store parameter must be present with a matching shape.
    pub fn load_values(&self, manifest_path: &Path) -> Result<()> {
        let manifest = read_manifest(manifest_path)?;
        let blob = read_blob(manifest_path, &manifest)?;
        for (name, var) in &self.entries {
            let entry = manifest
                .tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if entry.shape != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    entry.shape,
                    var.dims()
                )));
            }
            let n: usize = entry.shape.iter().product();
            let slice = blob
                .get(entry.offset..entry.offset + n)
                .ok_or_else(|| Error::Checkpoint(format!("blob too short for `{name}`")))?;
            let t = Tensor::from_slice(slice, entry.shape.as_slice(), &Device::Cpu)?;
            self.assign(name, &t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
    pub config: serde_json::Value,
}

pub fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_blob(manifest_path: &Path, manifest: &Manifest) -> Result<Vec<f32>> {
    let path = manifest_path.with_file_name(&manifest.blob);
    let mut bytes = Vec::new();
    std::fs::File::open(&path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Checkpoint(
            "blob length is not a multiple of 4".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}
