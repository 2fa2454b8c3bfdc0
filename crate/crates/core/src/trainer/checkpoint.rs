//! Single-file checkpoint container: a JSON manifest (config hash, counters,
//! run history) followed by raw little-endian tensor blobs. Raw bytes make
//! the save -> load -> save round trip bit-identical.

use crate::error::{Error, Result};
use crate::nn::{Adam, ParamStore};
use crate::scalar::{Dtype, Scalar};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use serde::{de::DeserializeOwned, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"RMITCKPT";
const FORMAT_VERSION: u32 = 1;

pub struct CheckpointWriter<T: Scalar> {
    tensors: Vec<(String, ArrayD<T>)>,
}

impl<T: Scalar> Default for CheckpointWriter<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> CheckpointWriter<T> {
    pub fn new() -> Self {
        CheckpointWriter {
            tensors: Vec::new(),
        }
    }

    pub fn add_tensor(&mut self, name: impl Into<String>, value: ArrayD<T>) {
        self.tensors.push((name.into(), value));
    }

    /// All parameters and Adam moments of one named section.
    pub fn add_store(&mut self, section: &str, store: &ParamStore<T>, adam: &Adam<T>) {
        for (name, value) in store.names().iter().zip(store.values()) {
            self.add_tensor(format!("{section}/param/{name}"), value.clone());
            let idx = store.by_name(name).unwrap().0;
            self.add_tensor(format!("{section}/adam_m/{name}"), adam.m[idx].clone());
            self.add_tensor(format!("{section}/adam_v/{name}"), adam.v[idx].clone());
        }
    }

    pub fn write<M: Serialize>(&self, path: &Path, manifest: &M) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(MAGIC)?;
        file.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        let manifest_json = serde_json::to_vec(manifest)?;
        file.write_u64::<LittleEndian>(manifest_json.len() as u64)?;
        file.write_all(&manifest_json)?;
        file.write_u64::<LittleEndian>(self.tensors.len() as u64)?;
        for (name, tensor) in &self.tensors {
            let name_bytes = name.as_bytes();
            file.write_u64::<LittleEndian>(name_bytes.len() as u64)?;
            file.write_all(name_bytes)?;
            file.write_u8(T::DTYPE.tag())?;
            file.write_u64::<LittleEndian>(tensor.ndim() as u64)?;
            for &d in tensor.shape() {
                file.write_u64::<LittleEndian>(d as u64)?;
            }
            match T::DTYPE {
                Dtype::F32 => {
                    for &v in tensor.iter() {
                        file.write_f32::<LittleEndian>(v.as_f64() as f32)?;
                    }
                }
                Dtype::F64 => {
                    for &v in tensor.iter() {
                        file.write_f64::<LittleEndian>(v.as_f64())?;
                    }
                }
            }
        }
        file.flush()?;
        Ok(())
    }
}

/// Parse only the manifest header (cheap; used to probe resumability).
pub fn read_manifest<M: DeserializeOwned>(path: &Path) -> Result<M> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = file.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let manifest_len = file.read_u64::<LittleEndian>()? as usize;
    let mut manifest_json = vec![0u8; manifest_len];
    file.read_exact(&mut manifest_json)?;
    Ok(serde_json::from_slice(&manifest_json)?)
}

pub struct CheckpointReader<T: Scalar> {
    pub tensors: BTreeMap<String, ArrayD<T>>,
    manifest_json: Vec<u8>,
}

impl<T: Scalar> CheckpointReader<T> {
    pub fn read(path: &Path) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint file",
                path.display()
            )));
        }
        let version = file.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let manifest_len = file.read_u64::<LittleEndian>()? as usize;
        let mut manifest_json = vec![0u8; manifest_len];
        file.read_exact(&mut manifest_json)?;
        let count = file.read_u64::<LittleEndian>()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = file.read_u64::<LittleEndian>()? as usize;
            let mut name = vec![0u8; name_len];
            file.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("invalid tensor name".to_string()))?;
            let dtype = file.read_u8()?;
            if dtype != T::DTYPE.tag() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has dtype tag {dtype}, expected {}",
                    T::DTYPE.tag()
                )));
            }
            let ndim = file.read_u64::<LittleEndian>()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(file.read_u64::<LittleEndian>()? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            match T::DTYPE {
                Dtype::F32 => {
                    for _ in 0..len {
                        data.push(T::from_f64(file.read_f32::<LittleEndian>()? as f64));
                    }
                }
                Dtype::F64 => {
                    for _ in 0..len {
                        data.push(T::from_f64(file.read_f64::<LittleEndian>()?));
                    }
                }
            }
            let tensor = ArrayD::from_shape_vec(IxDyn(&shape), data)
                .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
            tensors.insert(name, tensor);
        }
        Ok(CheckpointReader {
            tensors,
            manifest_json,
        })
    }

    pub fn manifest<M: DeserializeOwned>(&self) -> Result<M> {
        Ok(serde_json::from_slice(&self.manifest_json)?)
    }

    /// Restore one section's parameters and Adam moments in place.
    pub fn load_store(
        &self,
        section: &str,
        store: &mut ParamStore<T>,
        adam: &mut Adam<T>,
    ) -> Result<()> {
        for name in store.names().to_vec() {
            let id = store.by_name(&name).unwrap();
            let param = self
                .tensors
                .get(&format!("{section}/param/{name}"))
                .ok_or_else(|| {
                    Error::Checkpoint(format!("missing tensor {section}/param/{name}"))
                })?;
            store.set_value(id, param.clone());
            adam.m[id.0] = self
                .tensors
                .get(&format!("{section}/adam_m/{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing adam_m for {name}")))?
                .clone();
            adam.v[id.0] = self
                .tensors
                .get(&format!("{section}/adam_v/{name}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing adam_v for {name}")))?
                .clone();
        }
        Ok(())
    }
}
