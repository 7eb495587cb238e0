//! Model checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (model config, tensor table, optimizer state, seeds), then every
//! tensor as little-endian `f32` in table order.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::nets::{build_model, Forecaster, ModelKind, ModelsConfig};
use crate::trainer::Adam;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FCSTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub train_seed: u64,
    pub experiment_id: Option<usize>,
    pub target: String,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    role: Role,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    features: usize,
    config: serde_json::Value,
    init_seed: u64,
    meta: CheckpointMeta,
    optimizer: Option<Adam>,
    tensors: Vec<TensorEntry>,
}

/// A decoded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub features: usize,
    pub config: serde_json::Value,
    pub meta: CheckpointMeta,
    pub optimizer: Option<Adam>,
    pub params: Vec<(String, ArrayD<f64>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn save_checkpoint(
    path: &Path,
    model: &dyn Forecaster,
    optimizer: Option<&Adam>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let store = model.params();
    let mut tensors = Vec::new();
    let mut body: Vec<u8> = Vec::with_capacity(store.num_scalars() * 12);
    let mut push = |name: &str, role: Role, a: &ArrayD<f64>| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            role,
            shape: a.shape().to_vec(),
        });
        for &v in a.iter() {
            body.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    for (_, name, a) in store.iter() {
        push(name, Role::Param, a);
    }
    if let Some(opt) = optimizer {
        for (role, moments) in [(Role::AdamM, &opt.m), (Role::AdamV, &opt.v)] {
            for ((_, name, _), m) in store.iter().zip(moments) {
                push(name, role, m);
            }
        }
    }
    let config = model.config_json();
    let init_seed = config.get("init_seed").and_then(|v| v.as_u64()).unwrap_or(0);
    let header = Header {
        kind: model.kind(),
        features: model.features(),
        config,
        init_seed,
        meta: meta.clone(),
        optimizer: optimizer.cloned(),
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + body.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&body);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body_start = 20usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[20..body_start]).map_err(|e| bad(format!("header: {e}")))?;
    let mut body = &bytes[body_start..];
    let mut params = Vec::new();
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        if body.len() < 4 * n {
            return Err(bad(format!("tensor `{}` truncated", t.name)));
        }
        let data: Vec<f64> = body[..4 * n]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        body = &body[4 * n..];
        let a = ArrayD::from_shape_vec(IxDyn(&t.shape), data).expect("size checked");
        match t.role {
            Role::Param => params.push((t.name.clone(), a)),
            Role::AdamM => m.push(a),
            Role::AdamV => v.push(a),
        }
    }
    if !body.is_empty() {
        return Err(bad(format!("{} trailing bytes", body.len())));
    }
    let optimizer = header.optimizer.map(|mut o| {
        o.m = m;
        o.v = v;
        o
    });
    if let Some(o) = &optimizer {
        if o.m.len() != params.len() || o.v.len() != params.len() {
            return Err(bad("optimizer moments do not match the parameters"));
        }
    }
    Ok(Checkpoint {
        kind: header.kind,
        features: header.features,
        config: header.config,
        meta: header.meta,
        optimizer,
        params,
    })
}

impl Checkpoint {
    /// Rebuilds the model from the stored config and loads its weights.
    pub fn into_model(&self) -> Result<Box<dyn Forecaster>> {
        let mut cfg = ModelsConfig::default();
        let parse_err = |e: serde_json::Error| bad(format!("stored config: {e}"));
        let c = self.config.clone();
        match self.kind {
            ModelKind::WeatherModel => cfg.weather_model = serde_json::from_value(c).map_err(parse_err)?,
            ModelKind::Convlstm => cfg.convlstm = serde_json::from_value(c).map_err(parse_err)?,
            ModelKind::Unet => cfg.unet = serde_json::from_value(c).map_err(parse_err)?,
            ModelKind::Sma => cfg.sma = serde_json::from_value(c).map_err(parse_err)?,
        }
        let mut model = build_model(self.kind, &cfg, self.features)?;
        load_params(model.params_mut(), &self.params)?;
        Ok(model)
    }
}

/// Copies named tensors into `store`; names and shapes must match exactly.
pub fn load_params(store: &mut ParamStore, params: &[(String, ArrayD<f64>)]) -> Result<()> {
    if params.len() != store.len() {
        return Err(bad(format!(
            "checkpoint has {} tensors, model has {}",
            params.len(),
            store.len()
        )));
    }
    for (name, a) in params {
        let id = store
            .find(name)
            .ok_or_else(|| bad(format!("model has no parameter `{name}`")))?;
        let dst = store.get_mut(id);
        if dst.shape() != a.shape() {
            return Err(bad(format!(
                "`{name}`: checkpoint shape {:?}, model shape {:?}",
                a.shape(),
                dst.shape()
            )));
        }
        dst.assign(a);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{SmaConfig, UNetConfig};

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            train_seed: 3,
            experiment_id: Some(1),
            target: "t".into(),
            feature_names: vec!["t".into()],
        }
    }

    #[test]
    fn roundtrip_with_optimizer() {
        let cfg = ModelsConfig {
            unet: UNetConfig {
                base_channels: 2,
                depth: 1,
                t_in: 2,
                t_out: 1,
                init_seed: 9,
            },
            ..ModelsConfig::default()
        };
        let model = build_model(ModelKind::Unet, &cfg, 1).unwrap();
        let mut opt = Adam::new(model.params(), 0.01);
        opt.step = 7;
        opt.m[0].fill(0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, model.as_ref(), Some(&opt), &meta()).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.meta, meta());
        let back = ck.into_model().unwrap();
        for ((_, n1, a), (_, n2, b)) in model.params().iter().zip(back.params().iter()) {
            assert_eq!(n1, n2);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*y, f64::from(*x as f32));
            }
        }
        let o = ck.optimizer.unwrap();
        assert_eq!((o.step, o.lr), (7, 0.01));
        assert!(o.m[0].iter().all(|&x| x == 0.5));
    }

    #[test]
    fn corrupt_files_rejected() {
        let model = build_model(
            ModelKind::Sma,
            &ModelsConfig {
                sma: SmaConfig {
                    t_in: 3,
                    t_out: 1,
                    init_seed: 0,
                },
                ..ModelsConfig::default()
            },
            1,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, model.as_ref(), None, &meta()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"garbage").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(Error::Checkpoint(_))));
    }
}
