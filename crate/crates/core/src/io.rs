//! Binary PPM (P6) images, binary PGM (P5) label maps, and the on-disk
//! dataset layout:
//!
//! ```text
//! <root>/manifest.txt        # "classes = k", then one "<id> <split>" per line
//! <root>/images/<id>.ppm
//! <root>/labels/<id>.pgm
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{split_of, Sample, Split};
use crate::error::{Error, Result};
use crate::heads::LabelMap;
use crate::tensor::Tensor;

pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    let (h, w, c) = image.hwc()?;
    if c != 3 {
        return Err(Error::usage(format!("PPM needs 3 channels, got {c}")));
    }
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, data) = parse_netpbm(path, &bytes, b"P6")?;
    let n = header.width * header.height * 3;
    let scale = header.maxval as f64;
    let values = data[..n].iter().map(|&b| b as f64 / scale).collect();
    Tensor::new(vec![header.height, header.width, 3], values)
}

pub fn write_label(path: &Path, label: &LabelMap) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", label.width(), label.height()).into_bytes();
    bytes.extend_from_slice(label.classes());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a label map and checks every index against `num_classes`.
pub fn read_label(path: &Path, num_classes: usize) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, data) = parse_netpbm(path, &bytes, b"P5")?;
    let label = LabelMap::new(header.height, header.width, data[..header.width * header.height].to_vec())?;
    label.validate(num_classes)?;
    Ok(label)
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
}

fn parse_netpbm<'a>(path: &Path, bytes: &'a [u8], magic: &[u8]) -> Result<(Header, &'a [u8])> {
    let err = |offset: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        offset,
        msg: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(err(0, &format!("expected magic {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, "header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(err(pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(err(pos, "only 8-bit maxval (1..=255) is supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err(pos, "expected whitespace after header"));
    }
    pos += 1;
    let channels = if magic == b"P6" { 3 } else { 1 };
    let need = width * height * channels;
    if bytes.len() - pos < need {
        return Err(err(bytes.len(), &format!("truncated pixel data: need {need} bytes")));
    }
    Ok((
        Header {
            width,
            height,
            maxval,
        },
        &bytes[pos..],
    ))
}

pub fn image_path(root: &Path, id: &str) -> PathBuf {
    root.join("images").join(format!("{id}.ppm"))
}

pub fn label_path(root: &Path, id: &str) -> PathBuf {
    root.join("labels").join(format!("{id}.pgm"))
}

pub fn write_dataset(root: &Path, samples: &[Sample], num_classes: usize, val_percent: u64) -> Result<()> {
    for dir in ["images", "labels"] {
        fs::create_dir_all(root.join(dir)).map_err(|e| Error::io(root.join(dir), e))?;
    }
    let mut manifest = format!("classes = {num_classes}\n");
    for s in samples {
        write_image(&image_path(root, &s.id), &s.image)?;
        write_label(&label_path(root, &s.id), &s.label)?;
        manifest.push_str(&format!("{} {}\n", s.id, split_of(&s.id, val_percent).name()));
    }
    let path = root.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// A dataset read back from disk: class count and samples with their split.
pub struct StoredDataset {
    pub num_classes: usize,
    pub samples: Vec<(Sample, Split)>,
}

impl StoredDataset {
    pub fn split(&self, which: Split) -> Vec<Sample> {
        self.samples
            .iter()
            .filter(|(_, s)| *s == which)
            .map(|(x, _)| x.clone())
            .collect()
    }
}

pub fn read_dataset(root: &Path) -> Result<StoredDataset> {
    let path = root.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let bad = |line: usize, msg: &str| Error::data(format!("{}:{}: {msg}", path.display(), line + 1));
    let (_, first) = lines.next().ok_or_else(|| bad(0, "empty manifest"))?;
    let num_classes: usize = first
        .strip_prefix("classes")
        .and_then(|r| r.trim().strip_prefix('='))
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| bad(0, "expected `classes = <k>`"))?;
    let mut samples = Vec::new();
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let (Some(id), Some(split), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(i, "expected `<id> <split>`"));
        };
        let split = match split {
            "train" => Split::Train,
            "val" => Split::Val,
            other => return Err(bad(i, &format!("unknown split `{other}`"))),
        };
        let image = read_image(&image_path(root, id))?;
        let label = read_label(&label_path(root, id), num_classes)?;
        if (label.height(), label.width()) != (image.shape()[0], image.shape()[1]) {
            return Err(bad(i, &format!("image and label sizes differ for `{id}`")));
        }
        samples.push((
            Sample {
                id: id.to_string(),
                image,
                label,
                shapes: Vec::new(),
            },
            split,
        ));
    }
    Ok(StoredDataset {
        num_classes,
        samples,
    })
}
