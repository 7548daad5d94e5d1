//! SRNC checkpoints: magic `SRNC`, u32 version = 1, u32 block count, then
//! per block a u16 name length, the UTF-8 name, u32 rows, u32 cols and
//! row-major f32 little-endian data.

use std::path::Path;

use ndarray::Array2;

use super::adam::Adam;
use super::model::{CFMConfig, FlowModel, LossParts, MelNorm};
use crate::error::{Error, Result};
use crate::formats::{push_f32s, read_f32s, read_u16, read_u32, write_atomic};

pub const SRNC_MAGIC: [u8; 4] = *b"SRNC";
pub const SRNC_VERSION: u32 = 1;

/// Model, optimizer state and per-step loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FlowModel,
    pub adam: Adam,
    pub history: Vec<LossParts>,
}

impl Checkpoint {
    pub fn new(model: FlowModel) -> Self {
        let adam = Adam::new(&model.params);
        Self { model, adam, history: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.adam.step
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::decode(&std::fs::read(path)?, path)
    }

    pub fn encode(&self) -> Vec<u8> {
        let m = &self.model;
        let c = &m.cfg;
        let seed_parts = (0..4).map(|i| ((m.seed >> (16 * i)) & 0xffff) as f64);
        let meta: Vec<f64> = [
            c.n_mels as f64,
            c.channels as f64,
            c.style_dim as f64,
            c.style_tokens as f64,
            c.head_dim as f64,
            c.sigma_min,
            c.euler_steps as f64,
            c.learning_rate,
        ]
        .into_iter()
        .chain(seed_parts)
        .collect();
        let mut blocks: Vec<(String, Array2<f64>)> = vec![
            ("meta.config".into(), Array2::from_shape_vec((1, meta.len()), meta).expect("row")),
            ("norm.mel".into(), Array2::from_shape_vec((1, 2), vec![m.norm.mean, m.norm.std]).expect("row")),
        ];
        for (name, v) in m.params.iter() {
            blocks.push((format!("param.{name}"), v.clone()));
        }
        for (i, (name, _)) in m.params.iter().enumerate() {
            blocks.push((format!("adam.m.{name}"), self.adam.m[i].clone()));
            blocks.push((format!("adam.v.{name}"), self.adam.v[i].clone()));
        }
        blocks.push(("adam.step".into(), Array2::from_elem((1, 1), self.adam.step as f64)));
        let hist = Array2::from_shape_fn((self.history.len(), 3), |(i, j)| {
            let h = &self.history[i];
            [h.total, h.cfm, h.prior][j]
        });
        blocks.push(("train.history".into(), hist));

        let mut out = Vec::new();
        out.extend_from_slice(&SRNC_MAGIC);
        out.extend_from_slice(&SRNC_VERSION.to_le_bytes());
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, data) in &blocks {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(data.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(data.ncols() as u32).to_le_bytes());
            push_f32s(&mut out, data.iter().copied());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(path, reason);
        let mut r = bytes;
        if r.len() < 12 || r[..4] != SRNC_MAGIC {
            return Err(bad("bad SRNC magic"));
        }
        r = &r[4..];
        let version = read_u32(&mut r)?;
        if version != SRNC_VERSION {
            return Err(Error::format(path, format!("unsupported SRNC version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        let mut blocks = std::collections::HashMap::new();
        for _ in 0..count {
            let len = read_u16(&mut r).map_err(|_| bad("truncated block header"))? as usize;
            if r.len() < len {
                return Err(bad("truncated block name"));
            }
            let name = std::str::from_utf8(&r[..len]).map_err(|_| bad("block name is not UTF-8"))?.to_string();
            r = &r[len..];
            let rows = read_u32(&mut r).map_err(|_| bad("truncated block header"))? as usize;
            let cols = read_u32(&mut r).map_err(|_| bad("truncated block header"))? as usize;
            let data = read_f32s(&mut r, rows * cols).map_err(|_| bad("truncated block data"))?;
            let m = Array2::from_shape_vec((rows, cols), data.into_iter().map(f64::from).collect())
                .expect("shape matches length");
            blocks.insert(name, m);
        }
        let mut take = |name: &str| blocks.remove(name).ok_or_else(|| Error::format(path, format!("missing block {name}")));

        let meta = take("meta.config")?;
        if meta.len() != 12 {
            return Err(bad("meta.config has wrong length"));
        }
        let mv: Vec<f64> = meta.iter().copied().collect();
        let cfg = CFMConfig {
            n_mels: mv[0] as usize,
            channels: mv[1] as usize,
            style_dim: mv[2] as usize,
            style_tokens: mv[3] as usize,
            head_dim: mv[4] as usize,
            sigma_min: mv[5],
            euler_steps: mv[6] as usize,
            learning_rate: mv[7],
        };
        let seed = (0..4).fold(0u64, |acc, i| acc | ((mv[8 + i] as u64) << (16 * i)));
        let mut model = FlowModel::new(cfg, seed).map_err(|e| Error::format(path, e.to_string()))?;
        let norm = take("norm.mel")?;
        if norm.len() != 2 {
            return Err(bad("norm.mel has wrong length"));
        }
        model.norm = MelNorm { mean: norm[[0, 0]], std: norm[[0, 1]] };

        let ids: Vec<_> = model.params.ids().collect();
        let mut adam = Adam::new(&model.params);
        for (i, id) in ids.into_iter().enumerate() {
            let name = model.params.name(id).to_string();
            let shape = model.params.get(id).dim();
            for (prefix, slot) in [("param.", 0usize), ("adam.m.", 1), ("adam.v.", 2)] {
                let block = take(&format!("{prefix}{name}"))?;
                if block.dim() != shape {
                    return Err(Error::format(path, format!("block {prefix}{name} has shape {:?}", block.dim())));
                }
                match slot {
                    0 => *model.params.get_mut(id) = block,
                    1 => adam.m[i] = block,
                    _ => adam.v[i] = block,
                }
            }
        }
        adam.step = take("adam.step")?.iter().next().copied().unwrap_or(0.0) as u64;
        let hist = take("train.history")?;
        if hist.ncols() != 3 && hist.nrows() > 0 {
            return Err(bad("train.history must have 3 columns"));
        }
        let history = hist
            .rows()
            .into_iter()
            .map(|r| LossParts { total: r[0], cfm: r[1], prior: r[2] })
            .collect();
        Ok(Self { model, adam, history })
    }
}
