//! Binary checkpoint: model spec, vocabulary, every tensor, optimizer state
//! and epoch counter.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "LYSEPCKP" | version u8 | header_len u64 | header JSON
//! n_tensors u64 | per tensor: name_len u32, name, trainable u8, ndim u32, dims u64.., data f64..
//! per tensor (only if the header says so): m_len u64, m f64.., v_len u64, v f64..
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyrics::PhonemeVocabulary;
use crate::model::{ModelBundle, ModelSpec};
use crate::optim::{Adam, OptimizerConfig};

pub const MAGIC: &[u8; 8] = b"LYSEPCKP";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    config: OptimizerConfig,
    lr: f64,
    step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    vocabulary: Option<Vec<String>>,
    vocabulary_hash: Option<String>,
    epoch: u64,
    optimizer: Option<OptimizerHeader>,
}

/// Everything restored from a checkpoint.
pub struct Checkpoint {
    pub model: ModelBundle,
    pub optimizer: Option<Adam>,
    pub epoch: u64,
}

pub fn to_bytes(model: &ModelBundle, optimizer: Option<&Adam>, epoch: u64) -> Result<Vec<u8>> {
    let header = Header {
        spec: model.spec.clone(),
        vocabulary: model.vocabulary.as_ref().map(|v| v.symbols().to_vec()),
        vocabulary_hash: model.vocabulary.as_ref().map(PhonemeVocabulary::hash),
        epoch,
        optimizer: optimizer.map(|o| OptimizerHeader {
            config: o.config.clone(),
            lr: o.lr,
            step: o.step,
        }),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.store.len() as u64).to_le_bytes());
    for (name, t) in model.store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(u8::from(t.requires_grad()));
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put_f64s(&mut out, t.data());
    }
    if let Some(o) = optimizer {
        for (m, v) in o.m.iter().zip(&o.v) {
            for s in [m, v] {
                out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                put_f64s(&mut out, s);
            }
        }
    }
    Ok(out)
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("implausible length {n}")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let hlen = r.len()?;
    let header: Header = serde_json::from_slice(r.take(hlen)?)?;
    let vocab = header
        .vocabulary
        .as_ref()
        .map(|s| PhonemeVocabulary::parse(&s.join("\n")))
        .transpose()?;
    if let (Some(v), Some(h)) = (&vocab, &header.vocabulary_hash) {
        if &v.hash() != h {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
    }
    let mut model = ModelBundle::new(&header.spec, vocab.as_ref(), 0)?;
    if model.vocabulary != vocab {
        return Err(Error::Checkpoint("vocabulary does not match the input mode".into()));
    }
    let n = r.len()?;
    if n != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {n} tensors, model expects {}",
            model.store.len()
        )));
    }
    for id in model.store.ids().collect::<Vec<_>>() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let trainable = r.u8()? != 0;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let expected = model.store.get(id);
        if name != model.store.name(id) || dims != expected.shape() || trainable != expected.requires_grad() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` {dims:?} does not match model tensor `{}` {:?}",
                model.store.name(id),
                expected.shape()
            )));
        }
        let data = r.f64s(dims.iter().product())?;
        model.store.get_mut(id).data_mut().copy_from_slice(&data);
    }
    let optimizer = match header.optimizer {
        Some(h) => {
            let mut adam = Adam::new(h.config, &model.store)?;
            adam.lr = h.lr;
            adam.step = h.step;
            for k in 0..model.store.len() {
                for slot in [&mut adam.m[k], &mut adam.v[k]] {
                    let len = r.len()?;
                    if len != slot.len() {
                        return Err(Error::Checkpoint("optimizer state shape mismatch".into()));
                    }
                    *slot = r.f64s(len)?;
                }
            }
            Some(adam)
        }
        None => None,
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        model,
        optimizer,
        epoch: header.epoch,
    })
}

pub fn save(path: &Path, model: &ModelBundle, optimizer: Option<&Adam>, epoch: u64) -> Result<()> {
    let bytes = to_bytes(model, optimizer, epoch)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
