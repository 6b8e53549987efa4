use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::{Model, ModelConfig, NamedTensor, RunningStats, TrainingMeta};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ANDICKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained weights with their configuration and provenance.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub meta: Option<TrainingMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values from the start of the data section.
    pub offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: Option<TrainingMeta>,
    manifest: Vec<ManifestEntry>,
}

const RUNNING_MEAN: &str = ".running_mean";
const RUNNING_VAR: &str = ".running_var";

impl Checkpoint {
    /// Arrays in declaration order: parameters, then running statistics.
    fn arrays(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut out: Vec<(String, Vec<usize>, &[f32])> = self
            .model
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec(), p.value.data()))
            .collect();
        for r in self.model.running_stats() {
            out.push((format!("{}{RUNNING_MEAN}", r.name), vec![r.mean.len()], &r.mean));
            out.push((format!("{}{RUNNING_VAR}", r.name), vec![r.var.len()], &r.var));
        }
        out
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let mut offset = 0;
        self.arrays()
            .into_iter()
            .map(|(name, shape, data)| {
                let e = ManifestEntry { name, shape, offset };
                offset += data.len();
                e
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            config: self.model.config().clone(),
            meta: self.meta.clone(),
            manifest: self.manifest(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        let mut buf = Vec::new();
        for (_, _, data) in self.arrays() {
            buf.clear();
            buf.extend(data.iter().flat_map(|v| v.to_le_bytes()));
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.write(&mut v)?;
        Ok(v)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::format("checkpoint", "truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = usize::try_from(u64::from_le_bytes(len))
            .map_err(|_| Error::format("checkpoint", "header length overflow"))?;
        let mut json = Vec::new();
        (&mut input).take(len as u64).read_to_end(&mut json)?;
        if json.len() != len {
            return Err(Error::format("checkpoint", "truncated header"));
        }
        let header: Header = serde_json::from_slice(&json)?;
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        if data.len() % 4 != 0 {
            return Err(Error::format("checkpoint", "data section is not a whole number of floats"));
        }
        let values: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let mut params = Vec::new();
        let mut running: Vec<RunningStats<f32>> = Vec::new();
        let mut expected_offset = 0;
        for e in &header.manifest {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.offset + n > values.len() {
                return Err(Error::format("checkpoint", format!("array `{}` has a bad offset", e.name)));
            }
            expected_offset += n;
            let slice = values[e.offset..e.offset + n].to_vec();
            if let Some(base) = e.name.strip_suffix(RUNNING_MEAN) {
                running.push(RunningStats {
                    name: base.to_string(),
                    mean: slice,
                    var: Vec::new(),
                });
            } else if let Some(base) = e.name.strip_suffix(RUNNING_VAR) {
                match running.last_mut() {
                    Some(r) if r.name == base && r.var.is_empty() => r.var = slice,
                    _ => return Err(Error::format("checkpoint", format!("`{}` without its mean", e.name))),
                }
            } else {
                params.push(NamedTensor {
                    name: e.name.clone(),
                    value: Arc::new(Tensor::new(e.shape.clone(), slice)?),
                });
            }
        }
        if expected_offset != values.len() {
            return Err(Error::format("checkpoint", "trailing data after the last array"));
        }
        Ok(Self {
            model: Model::from_parts(header.config, params, running)?,
            meta: header.meta,
        })
    }
}
