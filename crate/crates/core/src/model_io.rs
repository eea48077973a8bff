//! JSON model files.
//!
//! Floats are written in shortest round-trip form, so save followed by load
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::fuzzy::{AdditiveDynamics, Dynamics, FodeDynamics, FuzzyModel, ModelKind, ModelMeta, SingleInputFls};
use crate::membership::{AntecedentChain, Strategy};
use crate::state_repr::{StateConfig, StateMode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockFile {
    /// Chain raw parameters; for FODE all centers then all encoded spreads.
    raw_chain_params: Vec<f64>,
    consequents: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model_kind: String,
    strategy: String,
    #[serde(rename = "P")]
    rules: usize,
    n_u: usize,
    n_y: usize,
    m: usize,
    sr_mode: u8,
    norm_stats: Option<NormStats>,
    blocks: Vec<BlockFile>,
    metadata: ModelMeta,
}

pub fn to_json(model: &FuzzyModel) -> Result<String> {
    let blocks = match &model.dynamics {
        Dynamics::Additive(a) => a
            .blocks
            .iter()
            .map(|b| BlockFile { raw_chain_params: b.chain.raw.clone(), consequents: b.consequents.clone() })
            .collect(),
        Dynamics::Fode(f) => vec![BlockFile {
            raw_chain_params: f.centers.iter().chain(&f.sigma_raw).copied().collect(),
            consequents: f.consequents.clone(),
        }],
    };
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        model_kind: model.kind.name().to_string(),
        strategy: model.kind.strategy().to_string(),
        rules: model.rules,
        n_u: model.n_u,
        n_y: model.n_y,
        m: model.state.m,
        sr_mode: model.state.mode.code(),
        norm_stats: model.norm.clone(),
        blocks,
        metadata: model.meta.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn from_json(text: &str) -> Result<FuzzyModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported format_version {}", file.format_version)));
    }
    let strategy: Strategy = file.strategy.parse()?;
    let kind = match file.model_kind.as_str() {
        "xfode" => ModelKind::Xfode(strategy),
        "afode" => ModelKind::Afode,
        "fode" => ModelKind::Fode,
        other => return Err(Error::ModelFormat(format!("unknown model_kind {other:?}"))),
    };
    let state = StateConfig::new(StateMode::from_code(file.sr_mode)?, file.m);
    let n_x = state.n_x(file.n_y);
    let n_z = n_x + file.n_u;
    if let Some(stats) = &file.norm_stats {
        if stats.mean.len() != file.n_u + file.n_y || stats.std.len() != stats.mean.len() {
            return Err(Error::ModelFormat("norm_stats length does not match n_u + n_y".into()));
        }
    }
    let bad = |e: Error| Error::ModelFormat(e.to_string());
    let dynamics = match kind {
        ModelKind::Fode => {
            let [block] = file.blocks.as_slice() else {
                return Err(Error::ModelFormat("FODE models have exactly one block".into()));
            };
            let half = file.rules * n_z;
            if block.raw_chain_params.len() != 2 * half || block.consequents.len() != file.rules * n_x * (n_z + 1) {
                return Err(Error::ModelFormat("FODE block has the wrong parameter count".into()));
            }
            Dynamics::Fode(FodeDynamics {
                rules: file.rules,
                n_x,
                n_u: file.n_u,
                centers: block.raw_chain_params[..half].to_vec(),
                sigma_raw: block.raw_chain_params[half..].to_vec(),
                consequents: block.consequents.clone(),
            })
        }
        _ => {
            let blocks = file
                .blocks
                .iter()
                .map(|b| {
                    let chain = AntecedentChain::new(kind.strategy(), file.rules, b.raw_chain_params.clone())?;
                    SingleInputFls::new(chain, b.consequents.clone(), n_x)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(bad)?;
            Dynamics::Additive(AdditiveDynamics::new(blocks, n_x, file.n_u).map_err(bad)?)
        }
    };
    Ok(FuzzyModel {
        kind,
        rules: file.rules,
        n_u: file.n_u,
        n_y: file.n_y,
        state,
        norm: file.norm_stats,
        dynamics,
        meta: file.metadata,
    })
}

pub fn save(model: &FuzzyModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<FuzzyModel> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<FuzzyModel> {
        let st = StateConfig::new(StateMode::Incremental, 1);
        [ModelKind::Xfode(Strategy::Ps3), ModelKind::Afode, ModelKind::Fode]
            .into_iter()
            .map(|k| {
                let mut m = FuzzyModel::init(k, 4, 2, 1, st, &[(-1.3, 0.7); 4], 9).unwrap();
                m.norm = Some(NormStats { mean: vec![0.1, 0.2, 1.0 / 3.0], std: vec![1.0, 2.0, 0.7] });
                m.meta.final_loss = Some(0.1 + 0.2);
                m
            })
            .collect()
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        for m in models() {
            let back = from_json(&to_json(&m).unwrap()).unwrap();
            let a: Vec<u64> = m.dynamics.params().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.dynamics.params().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
            assert_eq!(back, m);
        }
    }

    #[test]
    fn rejects_bad_files() {
        let m = &models()[0];
        let text = to_json(m).unwrap();
        assert!(from_json(&text.replace("\"xfode\"", "\"node\"")).is_err());
        assert!(from_json(&text.replace("\"format_version\": 1", "\"format_version\": 7")).is_err());
        assert!(from_json("{}").is_err());
        assert!(matches!(load("/nonexistent/model.json"), Err(Error::MissingFile(_))));
    }

    #[test]
    fn file_has_documented_fields() {
        let v: serde_json::Value = serde_json::from_str(&to_json(&models()[0]).unwrap()).unwrap();
        for key in ["format_version", "model_kind", "strategy", "P", "n_u", "n_y", "m", "sr_mode", "norm_stats", "blocks", "metadata"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["blocks"].as_array().unwrap().len(), 4);
        assert!(v["blocks"][0].get("raw_chain_params").is_some());
        assert!(v["metadata"].get("final_loss").is_some());
    }
}
