//! Binary checkpoint: configuration, model sizes and every named tensor.
//!
//! Layout (little-endian): magic `OTKG`, `u32` version, `u64`-prefixed
//! config TOML, four `u64` sizes (entities, concepts, relations, ontology
//! relations), `u64` tensor count, then per tensor a `u32`-prefixed UTF-8
//! name, `u32` rank, `u64` dims and `f64` values.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelDims};
use crate::params::ParamStore;

const MAGIC: &[u8; 4] = b"OTKG";
const VERSION: u32 = 1;

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = model.cfg.to_toml_string();
    w.write_all(&(cfg.len() as u64).to_le_bytes())?;
    w.write_all(cfg.as_bytes())?;
    let d = model.dims;
    for v in [d.entities, d.concepts, d.relations, d.onto_relations] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&(model.params.len() as u64).to_le_bytes())?;
    for (name, t) in model.params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &s in t.shape() {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint("truncated file".into()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, limit: u64, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > limit {
            return Err(Error::Checkpoint(format!("implausible {what} {v}")));
        }
        Ok(v as usize)
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.bytes(n)?).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

pub fn load(path: &Path) -> Result<Model> {
    let file = std::fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    if r.bytes(4)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.len(1 << 20, "config length")?;
    let cfg = TrainConfig::from_toml_str(&r.string(n)?)?;
    let mut sizes = [0usize; 4];
    for s in &mut sizes {
        *s = r.len(1 << 40, "size")?;
    }
    let dims = ModelDims {
        entities: sizes[0],
        concepts: sizes[1],
        relations: sizes[2],
        onto_relations: sizes[3],
    };
    let count = r.len(1 << 20, "tensor count")?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = r.string(n)?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("`{name}` has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| r.len(1 << 40, "dimension"))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.bytes(len * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.insert(name, Tensor::new(shape, data)?);
    }
    if r.bytes(1).is_ok() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Model::from_parts(cfg, dims, params)
}

/// Fails with a data error when `model` was trained on differently sized data.
pub fn check_compatible(model: &Model, dims: ModelDims) -> Result<()> {
    if model.dims != dims {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained for {:?}, dataset has {:?}",
            model.dims, dims
        )));
    }
    Ok(())
}
