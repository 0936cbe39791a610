//! Parameter checkpoints: a JSON manifest next to a little-endian `f64`
//! blob holding every parameter tensor in layer order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{FeatureShape, LayerSpec, Sequential};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub layers: Vec<LayerSpec>,
    pub input_steps: usize,
    pub input_features: usize,
    pub shapes: Vec<Vec<usize>>,
    pub seed: u64,
}

pub fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

pub fn encode(net: &Sequential, seed: u64) -> Result<(Manifest, Vec<u8>)> {
    let FeatureShape::Sequence { steps, width } = net.input else {
        return Err(Error::BadCheckpoint("only sequence-input networks are supported".into()));
    };
    let params = net.params();
    let manifest = Manifest {
        layers: net.specs.clone(),
        input_steps: steps,
        input_features: width,
        shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        seed,
    };
    let mut blob = Vec::with_capacity(8 * net.param_count());
    for p in params {
        for v in p.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok((manifest, blob))
}

pub fn decode(manifest: &Manifest, blob: &[u8]) -> Result<Sequential> {
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut net = Sequential::build(manifest.layers.clone(), manifest.input_steps, manifest.input_features, &mut rng)?;
    let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();
    if shapes != manifest.shapes {
        return Err(Error::BadCheckpoint("parameter shapes disagree with the layer specs".into()));
    }
    if blob.len() != 8 * net.param_count() {
        return Err(Error::BadCheckpoint(format!(
            "blob holds {} bytes, expected {}",
            blob.len(),
            8 * net.param_count()
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    Ok(net)
}

pub fn save(net: &Sequential, seed: u64, manifest_path: &Path) -> Result<()> {
    let (manifest, blob) = encode(net, seed)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    let bin = blob_path(manifest_path);
    fs::write(&bin, blob).map_err(|e| Error::io(&bin, e))
}

pub fn load(manifest_path: &Path) -> Result<Sequential> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::BadCheckpoint(e.to_string()))?;
    let bin = blob_path(manifest_path);
    let blob = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    decode(&manifest, &blob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::layers::Activation;

    #[test]
    fn checkpoint_round_trip() {
        let specs = vec![
            LayerSpec::dense("d", 3, Activation::Relu),
            LayerSpec::bilstm("r", 4, true),
            LayerSpec::flatten("f"),
            LayerSpec::dense("out", 2, Activation::Softmax),
        ];
        let net = Sequential::build(specs, 5, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&net, 3, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, net);
        let (_, mut blob) = encode(&net, 3).unwrap();
        blob.pop();
        let (manifest, _) = encode(&net, 3).unwrap();
        assert!(matches!(decode(&manifest, &blob), Err(Error::BadCheckpoint(_))));
    }
}
