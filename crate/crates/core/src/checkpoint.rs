//! Model checkpoints: a safetensors weights file plus a JSON sidecar.
//!
//! `best.safetensors` is paired with `best.json`. The sidecar carries the
//! architecture, degradation, seed and epoch so a checkpoint is self-describing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DegradationConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, UNet};
use crate::scalar::Scalar;
use crate::weights::TensorStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub degradation: DegradationConfig,
    pub seed: u64,
    pub epoch: usize,
    pub score: Option<f64>,
    /// File name of the optimizer state next to the weights, if saved.
    pub optimizer_state: Option<String>,
}

/// `foo.safetensors` -> `foo.json`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

pub fn model_store<T: Scalar>(net: &UNet<T>) -> TensorStore<T> {
    let mut store = TensorStore::new();
    for (name, shape, data) in net.named_parameters() {
        store.insert(name, shape, data.to_vec());
    }
    store
}

pub fn save_checkpoint<T: Scalar>(weights: &Path, net: &UNet<T>, meta: &CheckpointMeta) -> Result<()> {
    if &meta.model != net.config() {
        return Err(Error::invalid_config("checkpoint metadata does not describe this network"));
    }
    if let Some(dir) = weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model_store(net).save(weights)?;
    let side = sidecar_path(weights);
    std::fs::write(&side, serde_json::to_string_pretty(meta)? + "\n").map_err(|e| Error::io(&side, e))
}

/// Loads weights into a network built from `config`; every tensor must be present with the right shape.
pub fn load_weights<T: Scalar>(store: &TensorStore<T>, config: &ModelConfig) -> Result<UNet<T>> {
    let mut net = UNet::zeroed(config)?;
    let names = net.layer_names().to_vec();
    for (name, conv) in names.iter().zip(net.convs_mut()) {
        let wshape = [conv.out_channels, conv.in_channels, conv.kernel, conv.kernel];
        conv.weight = store.expect(&format!("{name}.weight"), &wshape)?.to_vec();
        conv.bias = store.expect(&format!("{name}.bias"), &[conv.out_channels])?.to_vec();
    }
    let expected = 2 * names.len();
    if store.tensors.len() != expected {
        return Err(Error::Weights(format!(
            "weights file holds {} tensors, architecture expects {expected}",
            store.tensors.len()
        )));
    }
    Ok(net)
}

pub fn load_checkpoint<T: Scalar>(weights: &Path) -> Result<(UNet<T>, CheckpointMeta)> {
    let side = sidecar_path(weights);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)
        .map_err(|e| Error::invalid_config(format!("{}: {e}", side.display())))?;
    meta.model.validate()?;
    let store = TensorStore::load(weights)?;
    let net = load_weights(&store, &meta.model)
        .map_err(|e| Error::invalid_config(format!("checkpoint does not match its config: {e}")))?;
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_mismatch() {
        let cfg = ModelConfig::narrow(4, 1);
        let net = UNet::<f32>::build(&cfg, 9).unwrap();
        let meta = CheckpointMeta {
            model: cfg.clone(),
            degradation: DegradationConfig::default(),
            seed: 9,
            epoch: 3,
            score: Some(-1.5),
            optimizer_state: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("best.safetensors");
        save_checkpoint(&p, &net, &meta).unwrap();
        let (back, m) = load_checkpoint::<f32>(&p).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back.convs(), net.convs());

        let mut wrong = meta.clone();
        wrong.model = ModelConfig::narrow(4, 2);
        std::fs::write(sidecar_path(&p), serde_json::to_string(&wrong).unwrap()).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&p), Err(Error::InvalidConfig(_))));
    }
}
