//! Named-tensor container on top of the safetensors format.
//!
//! Tensors are stored little-endian as `F32` or `F64`; either can be loaded
//! into any [`Scalar`]. A free-form string map travels in the header, which
//! is where extractor manifests and similar descriptions live.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of named tensors plus header metadata.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TensorStore<T> {
    pub tensors: BTreeMap<String, NamedTensor<T>>,
    pub metadata: BTreeMap<String, String>,
}

const META_KEY: &str = "landmark_sr";

fn dtype_of<T: Scalar>() -> Dtype {
    match T::DTYPE {
        "F32" => Dtype::F32,
        "F64" => Dtype::F64,
        other => unreachable!("unsupported scalar dtype {other}"),
    }
}

impl<T: Scalar> TensorStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.insert(name.into(), NamedTensor { shape, data });
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing tensor `{name}`")))
    }

    /// Fetches `name` and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&[T]> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::Weights(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                t.shape, shape
            )));
        }
        Ok(&t.data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let mut bytes = Vec::with_capacity(t.data.len() * T::BYTES);
                for &v in &t.data {
                    v.write_le(&mut bytes);
                }
                (name.clone(), t.shape.clone(), bytes)
            })
            .collect();
        let views = buffers
            .iter()
            .map(|(name, shape, bytes)| {
                TensorView::new(dtype_of::<T>(), shape.clone(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| Error::Weights(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        // One header entry keeps the byte layout independent of hash ordering.
        let meta = if self.metadata.is_empty() {
            None
        } else {
            Some(HashMap::from([(
                META_KEY.to_string(),
                serde_json::to_string(&self.metadata)?,
            )]))
        };
        safetensors::serialize(views, meta)
            .map_err(|e| Error::Weights(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Weights(e.to_string()))?;
        let (_, header) =
            SafeTensors::read_metadata(bytes).map_err(|e| Error::Weights(e.to_string()))?;
        let raw_meta = header.metadata().clone().unwrap_or_default();
        let metadata = match raw_meta.get(META_KEY) {
            Some(json) => serde_json::from_str(json)?,
            None => raw_meta.into_iter().collect(),
        };
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            let raw = view.data();
            let data: Vec<T> = match view.dtype() {
                Dtype::F32 => raw.chunks_exact(4).map(|c| T::of(f32::read_le(c) as f64)).collect(),
                Dtype::F64 => raw.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect(),
                other => {
                    return Err(Error::Weights(format!(
                        "tensor `{name}` has unsupported dtype {other:?}"
                    )))
                }
            };
            tensors.insert(
                name,
                NamedTensor {
                    shape: view.shape().to_vec(),
                    data,
                },
            );
        }
        Ok(Self { tensors, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_cross_precision_load() {
        let mut s = TensorStore::<f32>::new();
        s.insert("a.weight", vec![2, 3], vec![0.5, -1.0, 2.0, 3.25, 0.0, 1e-3]);
        s.insert("a.bias", vec![2], vec![1.0, -2.0]);
        s.metadata.insert("kind".into(), "test".into());
        let bytes = s.to_bytes().unwrap();
        let back = TensorStore::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        let wide = TensorStore::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(wide.expect("a.bias", &[2]).unwrap(), &[1.0, -2.0]);
        assert!(wide.expect("a.bias", &[3]).is_err());
        assert!(wide.get("missing").is_err());
    }

    #[test]
    fn serialization_is_deterministic() {
        let mut s = TensorStore::<f64>::new();
        s.insert("z", vec![1], vec![1.0]);
        s.insert("a", vec![1], vec![2.0]);
        s.metadata.insert("m".into(), "1".into());
        s.metadata.insert("n".into(), "2".into());
        assert_eq!(s.to_bytes().unwrap(), s.to_bytes().unwrap());
    }
}
