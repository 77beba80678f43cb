//! Plain `section.key = value` run configuration. Every key has a default;
//! a file and `--set` overrides replace values, and the resolved form lists
//! every key so a run can be reproduced from it alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use scribe_core::corrupt::{corruption_suite, CorruptionSpec, SeverityTable};
use scribe_core::dataset::SyntheticSceneSpec;
use scribe_core::eval::{MscAverage, MscConfig};
use scribe_core::train::TrainConfig;
use scribe_core::{Error, HeadKind, Result};

/// (key, default, description)
const KEYS: &[(&str, &str, &str)] = &[
    ("run.name", "default", "run directory name under runs/"),
    ("run.seed", "0", "seed for data, initialisation, augmentation and corruption"),
    ("run.seeds", "0 1 2", "seeds visited by repro"),
    ("run.workers", "0", "worker threads, 0 for all available cores"),
    ("data.count", "80", "number of generated samples"),
    ("data.image_size", "48", "side of the square images"),
    ("data.num_classes", "4", "classes including background"),
    ("data.min_shapes", "1", "fewest shapes per image"),
    ("data.max_shapes", "3", "most shapes per image"),
    ("data.radius_min", "0.1", "smallest shape radius, fraction of the side"),
    ("data.radius_max", "0.22", "largest shape radius, fraction of the side"),
    ("data.texture_octaves", "3", "octaves of the fill texture"),
    ("data.texture_strength", "0.35", "amplitude of the fill texture"),
    ("data.noise_floor", "0.02", "std-dev of per-pixel noise"),
    ("data.val_percent", "20", "share of ids in the validation split"),
    ("train.heads", "baseline ibe scribe", "heads trained by repro"),
    ("train.base_lr", "0.01", "learning rate of the hidden layers"),
    ("train.classifier_lr", "0.1", "learning rate of the output layer"),
    ("train.weight_decay", "5e-5", "decoupled weight decay on kernels"),
    ("train.momentum", "0.9", "SGD momentum"),
    ("train.batch_size", "4", "images per step"),
    ("train.total_iters", "400", "optimisation steps"),
    ("train.crop_size", "32", "training crop side"),
    ("train.scale_min", "0.75", "smallest random rescale"),
    ("train.scale_max", "1.25", "largest random rescale"),
    ("train.poly_power", "0.9", "exponent of the poly schedule"),
    ("bench.severities", "1 2 3 4 5", "severities in the corruption suite"),
    ("bench.max_images", "8", "validation images evaluated, 0 for all"),
    ("bench.msc", "true", "also evaluate with multi-scale inference"),
    ("bench.msc_scales", "0.75 1 1.25", "multi-scale factors"),
    ("bench.msc_flip", "true", "add mirrored copies to multi-scale inference"),
    ("bench.msc_average", "probabilities", "probabilities or logits"),
    ("bench.severity_table", "", "severity table file, empty for the built-in one"),
    ("analysis.max_images", "16", "validation images gathered, 0 for all"),
    ("analysis.threshold", "0.95", "explained-variance threshold for effective dimension"),
    ("analysis.centered_autocorrelation", "false", "mean-centre responses before autocorrelation"),
    ("analysis.centered_covariance", "true", "mean-centre responses before the covariance"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn parse_pair(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let pair =
                parse_pair(line).ok_or_else(|| Error::usage(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            pairs.push(pair);
        }
        self.apply(pairs)
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        let pairs = sets
            .iter()
            .map(|s| parse_pair(s).ok_or_else(|| Error::usage(format!("override `{s}` is not `key=value`"))))
            .collect::<Result<Vec<_>>>()?;
        self.apply(pairs)
    }

    fn apply(&mut self, pairs: Vec<(String, String)>) -> Result<()> {
        let unknown: Vec<&str> = pairs
            .iter()
            .map(|(k, _)| k.as_str())
            .filter(|k| !self.values.contains_key(*k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::usage(format!("unknown config keys: {}", unknown.join(", "))));
        }
        for (k, v) in pairs {
            self.values.insert(k, v);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        assert!(self.values.contains_key(key), "unknown key {key}");
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Every key with its value, one per line, with descriptions.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (k, _, doc) in KEYS {
            let s = k.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            out.push_str(&format!("# {doc}\n{k} = {}\n", self.values[*k]));
        }
        out
    }

    pub fn raw(&self, key: &str) -> &str {
        &self.values[key]
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::usage(format!("config `{key}`: cannot parse `{v}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.raw(key)
            .split_whitespace()
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::usage(format!("config `{key}`: cannot parse `{v}`")))
            })
            .collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("run.seed")
    }

    pub fn workers(&self) -> Result<usize> {
        self.get("run.workers")
    }

    pub fn scene_spec(&self) -> Result<SyntheticSceneSpec> {
        let spec = SyntheticSceneSpec {
            seed: self.seed()?,
            image_size: self.get("data.image_size")?,
            num_classes: self.get("data.num_classes")?,
            min_shapes: self.get("data.min_shapes")?,
            max_shapes: self.get("data.max_shapes")?,
            radius_range: (self.get("data.radius_min")?, self.get("data.radius_max")?),
            texture_octaves: self.get("data.texture_octaves")?,
            texture_strength: self.get("data.texture_strength")?,
            noise_floor: self.get("data.noise_floor")?,
            val_percent: self.get("data.val_percent")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self, head: HeadKind) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            head,
            base_lr: self.get("train.base_lr")?,
            classifier_lr: self.get("train.classifier_lr")?,
            weight_decay: self.get("train.weight_decay")?,
            momentum: self.get("train.momentum")?,
            batch_size: self.get("train.batch_size")?,
            total_iters: self.get("train.total_iters")?,
            crop_size: self.get("train.crop_size")?,
            scale_range: (self.get("train.scale_min")?, self.get("train.scale_max")?),
            seed: self.seed()?,
            poly_power: self.get("train.poly_power")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn heads(&self) -> Result<Vec<HeadKind>> {
        self.list("train.heads")
    }

    pub fn suite(&self) -> Result<Vec<CorruptionSpec>> {
        corruption_suite(&self.list::<u8>("bench.severities")?, self.seed()?)
    }

    pub fn msc(&self) -> Result<Option<MscConfig>> {
        if !self.get::<bool>("bench.msc")? {
            return Ok(None);
        }
        let average = match self.raw("bench.msc_average") {
            "probabilities" => MscAverage::Probabilities,
            "logits" => MscAverage::Logits,
            other => {
                return Err(Error::usage(format!(
                    "bench.msc_average must be `probabilities` or `logits`, got `{other}`"
                )))
            }
        };
        let cfg = MscConfig {
            scales: self.list("bench.msc_scales")?,
            flip: self.get("bench.msc_flip")?,
            average,
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn severity_table(&self) -> Result<SeverityTable> {
        match self.raw("bench.severity_table") {
            "" => Ok(SeverityTable::default()),
            path => SeverityTable::load(&PathBuf::from(path)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["train.total_iters=7".into(), "run.seed = 5".into()]).unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.resolved(), "resolved").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.train_config(HeadKind::Ibe).unwrap().total_iters, 7);
        assert_eq!(back.seed().unwrap(), 5);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_text("train.lr = 3\ndata.count = 4\nbench.colour = red\n", "f")
            .unwrap_err()
            .to_string();
        assert!(err.contains("train.lr") && err.contains("bench.colour") && !err.contains("data.count"));
        assert!(cfg.apply_overrides(&["oops".into()]).is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.scene_spec().unwrap();
        cfg.train_config(HeadKind::Scribe).unwrap();
        assert_eq!(cfg.heads().unwrap(), HeadKind::BENCHMARKED.to_vec());
        assert_eq!(cfg.suite().unwrap().len(), 75);
        assert!(cfg.msc().unwrap().is_some());
        cfg.severity_table().unwrap();
    }
}
