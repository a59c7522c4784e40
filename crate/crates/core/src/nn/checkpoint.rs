//! `.swemb` checkpoints: one line of JSON header, then every tensor as
//! little-endian `f32` in layer order (weights before biases).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, Network, NetworkSpec};
use crate::error::{Error, Result};

pub const FORMAT: &str = "swemb";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "swemb";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub tensors: Vec<TensorInfo>,
    /// Free-form echo of the training configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn tensor_layout(spec: &NetworkSpec) -> Vec<TensorInfo> {
    let mut out = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let (w, b) = match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (vec![out_channels, in_channels, kernel, kernel], out_channels),
            LayerSpec::Linear { inputs, outputs } => (vec![outputs, inputs], outputs),
            LayerSpec::Relu => continue,
        };
        out.push(TensorInfo {
            name: format!("layer{i}.weight"),
            shape: w,
        });
        out.push(TensorInfo {
            name: format!("layer{i}.bias"),
            shape: vec![b],
        });
    }
    out
}

pub fn encode(net: &Network<f32>, config: serde_json::Value) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        spec: net.spec().clone(),
        tensors: tensor_layout(net.spec()),
        config,
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| Error::format("checkpoint header", e))?;
    out.push(b'\n');
    out.reserve(net.params().len() * 4);
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Network<f32>, Header)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("checkpoint", "missing header line"))?;
    let header: Header =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::format("checkpoint header", e))?;
    if header.format != FORMAT || header.version != FORMAT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    if header.tensors != tensor_layout(&header.spec) {
        return Err(Error::format("checkpoint", "tensor list does not match layer spec"));
    }
    let body = &bytes[nl + 1..];
    let count = header.spec.param_count();
    if body.len() != count * 4 {
        return Err(Error::format(
            "checkpoint",
            format!("{} payload bytes, expected {}", body.len(), count * 4),
        ));
    }
    let params = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let net = Network::from_params(header.spec.clone(), params)
        .map_err(|e| Error::format("checkpoint", e.to_string()))?;
    Ok((net, header))
}

pub fn save(path: &Path, net: &Network<f32>, config: serde_json::Value) -> Result<()> {
    fs::write(path, encode(net, config)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Network<f32>, Header)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Network::<f32>::init(NetworkSpec::default_embedding(), &mut rng).unwrap();
        let cfg = serde_json::json!({"margin": 1.0});
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.swemb");
        save(&path, &net, cfg.clone()).unwrap();
        let (back, header) = load(&path).unwrap();
        assert_eq!(header.config, cfg);
        assert_eq!(back.params(), net.params());
        let img: Vec<f32> = (0..2500).map(|i| (i % 17) as f32 / 16.0).collect();
        let a = net.forward(&img).unwrap();
        let b = back.forward(&img).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn layout_lists_weights_then_biases() {
        let t = tensor_layout(&NetworkSpec::default_embedding());
        assert_eq!(t.len(), 12);
        assert_eq!(t[0].shape, vec![8, 1, 5, 5]);
        assert_eq!(t[1].shape, vec![8]);
        assert_eq!(t[6].shape, vec![256, 1568]);
        let total: usize = t.iter().map(|x| x.shape.iter().product::<usize>()).sum();
        assert_eq!(total, NetworkSpec::default_embedding().param_count());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = Network::<f32>::zeros(NetworkSpec::default_embedding()).unwrap();
        let bytes = encode(&net, serde_json::Value::Null).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"not json\n").is_err());
        assert!(decode(b"").is_err());
        let mut bad = bytes.clone();
        let s = String::from_utf8_lossy(&bad[..20]).replace("swemb", "other");
        bad.splice(..20, s.into_bytes());
        assert!(decode(&bad).is_err());
    }
}
