//! Versioned binary checkpoints. Layout, all integers little-endian:
//!
//! ```text
//! b"SCRBCKPT"  u32 version
//! u32 n, n bytes of UTF-8 `key = value` lines (training config, class
//!     count, iteration)
//! u32 layers, then per layer: u8 relu, kernel tensor, bias tensor
//!     tensor = u32 rank, rank × u32 dims, f64 values
//! u32 n, n × f64 loss history
//! ```
//!
//! Floats are stored bit-exactly, so a round trip reproduces the network.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::model::{Layer, SegNet};
use crate::tensor::Tensor;
use crate::train::{Checkpoint, TrainConfig};

const MAGIC: &[u8; 8] = b"SCRBCKPT";
pub const VERSION: u32 = 1;

fn config_text(ckpt: &Checkpoint) -> String {
    let c = &ckpt.config;
    let mut s = String::new();
    let _ = writeln!(s, "head = {}", c.head.name());
    let _ = writeln!(s, "num_classes = {}", ckpt.net.num_classes);
    let _ = writeln!(s, "iteration = {}", ckpt.iteration);
    let _ = writeln!(s, "base_lr = {}", c.base_lr);
    let _ = writeln!(s, "classifier_lr = {}", c.classifier_lr);
    let _ = writeln!(s, "weight_decay = {}", c.weight_decay);
    let _ = writeln!(s, "momentum = {}", c.momentum);
    let _ = writeln!(s, "batch_size = {}", c.batch_size);
    let _ = writeln!(s, "total_iters = {}", c.total_iters);
    let _ = writeln!(s, "crop_size = {}", c.crop_size);
    let _ = writeln!(s, "scale_min = {}", c.scale_range.0);
    let _ = writeln!(s, "scale_max = {}", c.scale_range.1);
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "poly_power = {}", c.poly_power);
    s
}

pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = config_text(ckpt);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(ckpt.net.layers.len() as u32).to_le_bytes());
    let tensor = |out: &mut Vec<u8>, t: &Tensor| {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for layer in &ckpt.net.layers {
        out.push(u8::from(layer.relu));
        tensor(&mut out, &layer.kernel);
        tensor(&mut out, &layer.bias);
    }
    out.extend_from_slice(&(ckpt.loss_history.len() as u32).to_le_bytes());
    for v in &ckpt.loss_history {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl Reader<'_> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_path_buf(),
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated: wanted {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(self.fail(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(self.fail("tensor larger than the remaining file"));
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape, data).map_err(|e| self.fail(e.to_string()))
    }
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, origin };
    if r.take(8)? != MAGIC {
        r.pos = 0;
        return Err(r.fail("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32()? as usize;
    let start = r.pos;
    r.take(len)?;
    let text = std::str::from_utf8(&bytes[start..start + len]).map_err(|_| r.fail("config block is not UTF-8"))?;
    let mut kv = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    fn field<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str, r: &Reader) -> Result<T> {
        kv.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| r.fail(format!("missing or invalid config field `{key}`")))
    }
    let head: HeadKind = field(&kv, "head", &r)?;
    let num_classes: usize = field(&kv, "num_classes", &r)?;
    let config = TrainConfig {
        head,
        base_lr: field(&kv, "base_lr", &r)?,
        classifier_lr: field(&kv, "classifier_lr", &r)?,
        weight_decay: field(&kv, "weight_decay", &r)?,
        momentum: field(&kv, "momentum", &r)?,
        batch_size: field(&kv, "batch_size", &r)?,
        total_iters: field(&kv, "total_iters", &r)?,
        crop_size: field(&kv, "crop_size", &r)?,
        scale_range: (field(&kv, "scale_min", &r)?, field(&kv, "scale_max", &r)?),
        seed: field(&kv, "seed", &r)?,
        poly_power: field(&kv, "poly_power", &r)?,
    };
    let iteration = field(&kv, "iteration", &r)?;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let relu = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(r.fail(format!("bad activation flag {b}"))),
        };
        let kernel = r.tensor()?;
        let bias = r.tensor()?;
        layers.push(Layer { kernel, bias, relu });
    }
    let n = r.u32()? as usize;
    if n > (bytes.len() - r.pos) / 8 {
        return Err(r.fail("loss history larger than the remaining file"));
    }
    let loss_history = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }
    let expected = SegNet::new(head, num_classes, 0).map_err(|e| r.fail(e.to_string()))?;
    let shapes_match = expected.layers.len() == layers.len()
        && expected
            .layers
            .iter()
            .zip(&layers)
            .all(|(a, b)| a.kernel.shape() == b.kernel.shape() && a.bias.shape() == b.bias.shape() && a.relu == b.relu);
    if !shapes_match {
        return Err(r.fail(format!("layer shapes do not match a {head} network with {num_classes} classes")));
    }
    Ok(Checkpoint {
        net: SegNet {
            head,
            num_classes,
            layers,
        },
        config,
        iteration,
        loss_history,
    })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, to_bytes(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let cfg = TrainConfig {
            head: HeadKind::Scribe,
            base_lr: 0.1 + 0.2,
            seed: 77,
            ..Default::default()
        };
        let mut c = Checkpoint::initial(&cfg, 5).unwrap();
        c.iteration = 12;
        c.loss_history = vec![1.0 / 3.0, 0.25, f64::MIN_POSITIVE];
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = to_bytes(&c);
        let back = from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn damaged_files_are_errors() {
        let bytes = to_bytes(&sample());
        let p = Path::new("mem");
        assert!(from_bytes(&bytes[..bytes.len() - 3], p).is_err());
        assert!(from_bytes(b"nonsense", p).is_err());
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(from_bytes(&v, p), Err(Error::Parse { .. })));
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes(&extra, p).is_err());
    }
}
