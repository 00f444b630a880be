use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TensorId};
use crate::networks::spec::{InitKind, NetworkSpec};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PCLABWT\0";
const VERSION: u32 = 1;

/// One parameter tensor with its flat row-major values.
#[derive(Debug, Clone)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
    pub data: Vec<f64>,
}

/// A network's full parameter set, tied to the spec that shaped it.
#[derive(Debug, Clone)]
pub struct WeightBlob {
    pub spec: NetworkSpec,
    pub tensors: Vec<NamedTensor>,
}

impl WeightBlob {
    /// Allocate and initialize parameters for `spec`. Weights draw from
    /// U(-sqrt(3/fan_in), sqrt(3/fan_in)); biases and norm shifts start at 0,
    /// norm scales and running variances at 1, the attention balance at 0.
    pub fn init<R: Rng>(spec: &NetworkSpec, rng: &mut R) -> Result<WeightBlob> {
        let mut tensors = Vec::new();
        for p in spec.layout()? {
            let n = p.rows * p.cols;
            let data = match p.init {
                InitKind::FanInUniform => {
                    let bound = (3.0 / p.rows as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                }
                InitKind::Zero => vec![0.0; n],
                InitKind::One => vec![1.0; n],
            };
            tensors.push(NamedTensor {
                name: p.name,
                rows: p.rows,
                cols: p.cols,
                trainable: p.trainable,
                data,
            });
        }
        Ok(WeightBlob {
            spec: spec.clone(),
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::WeightMismatch(format!("missing tensor '{}'", name)))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut NamedTensor> {
        self.tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::WeightMismatch(format!("missing tensor '{}'", name)))
    }

    /// Total count of trainable scalars.
    pub fn trainable_len(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.data.len())
            .sum()
    }

    /// Place every tensor as a leaf on `tape`, returning a name -> id map.
    /// Call once per tape so all forwards in a step share the same leaves and
    /// a single backward accumulates gradients across them.
    pub fn place(&self, tape: &mut Tape) -> Result<PlacedWeights> {
        let mut ids = HashMap::new();
        let mut order = Vec::new();
        for t in &self.tensors {
            let id = tape.leaf(t.rows, t.cols, t.data.clone())?;
            ids.insert(t.name.clone(), id);
            order.push(id);
        }
        Ok(PlacedWeights { ids, order })
    }

    /// Ids of trainable tensors in layout order, for gradient requests.
    pub fn trainable_ids(&self, placed: &PlacedWeights) -> Vec<TensorId> {
        self.tensors
            .iter()
            .zip(&placed.order)
            .filter(|(t, _)| t.trainable)
            .map(|(_, id)| *id)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = FileHeader {
            fingerprint: self.spec.fingerprint(),
            spec: self.spec.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorHeader {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    trainable: t.trainable,
                })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(header_json.len() as u64).to_le_bytes())?;
        f.write_all(&header_json)?;
        for t in &self.tensors {
            for v in &t.data {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Load weights and verify they were saved for `expected` exactly.
    pub fn load(path: &Path, expected: &NetworkSpec) -> Result<WeightBlob> {
        let blob = Self::load_any(path)?;
        let want = expected.fingerprint();
        let got = blob.spec.fingerprint();
        if want != got {
            return Err(Error::WeightMismatch(format!(
                "weight file {} was saved for {} (fingerprint {}), expected {} (fingerprint {})",
                path.display(),
                blob.spec.kind.name(),
                &got[..12],
                expected.kind.name(),
                &want[..12],
            )));
        }
        Ok(blob)
    }

    /// Load weights along with whatever spec the file declares.
    pub fn load_any(path: &Path) -> Result<WeightBlob> {
        let bytes = std::fs::read(path)?;
        let corrupt = |why: &str| Error::Parse(format!("corrupt weight file: {}", why));
        if bytes.len() < MAGIC.len() + 4 + 8 {
            return Err(corrupt("shorter than fixed header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {}", version)));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = 20usize;
        if bytes.len() < body + hlen {
            return Err(corrupt("truncated header"));
        }
        let header: FileHeader = serde_json::from_slice(&bytes[body..body + hlen])
            .map_err(|e| corrupt(&format!("header does not parse: {}", e)))?;
        let mut tensors = Vec::new();
        let mut reader = &bytes[body + hlen..];
        for th in &header.tensors {
            let n = th.rows * th.cols;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut buf = [0u8; 8];
                if reader.read_exact(&mut buf).is_err() {
                    return Err(corrupt(&format!("truncated data for tensor '{}'", th.name)));
                }
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push(NamedTensor {
                name: th.name.clone(),
                rows: th.rows,
                cols: th.cols,
                trainable: th.trainable,
                data,
            });
        }
        if !reader.is_empty() {
            return Err(corrupt("trailing bytes after tensor data"));
        }
        Ok(WeightBlob {
            spec: header.spec,
            tensors,
        })
    }
}

/// Tape ids of placed weights, keyed by tensor name.
pub struct PlacedWeights {
    ids: HashMap<String, TensorId>,
    order: Vec<TensorId>,
}

impl PlacedWeights {
    pub fn id(&self, name: &str) -> Result<TensorId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::WeightMismatch(format!("no placed tensor '{}'", name)))
    }

    pub fn ids_in_order(&self) -> &[TensorId] {
        &self.order
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    fingerprint: String,
    spec: NetworkSpec,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
    trainable: bool,
}
