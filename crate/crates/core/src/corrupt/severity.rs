use std::collections::BTreeMap;
use std::path::Path;

use super::CorruptionKind;
use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/severity.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct KindParams {
    pub names: Vec<String>,
    /// `+1` when degradation grows with the value, `−1` when it shrinks, `0` when fixed.
    pub directions: Vec<i8>,
    pub levels: [Vec<f64>; 5],
}

/// Parameter tuples per (kind, severity 1..=5).
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityTable {
    kinds: BTreeMap<CorruptionKind, KindParams>,
}

impl Default for SeverityTable {
    fn default() -> Self {
        SeverityTable::parse(DEFAULT_TABLE, Path::new("<built-in severity table>"))
            .expect("built-in severity table is valid")
    }
}

impl SeverityTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn default_text() -> &'static str {
        DEFAULT_TABLE
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::data(format!("{}:{}: {msg}", origin.display(), line + 1));
        let mut names: BTreeMap<CorruptionKind, Vec<String>> = BTreeMap::new();
        let mut dirs: BTreeMap<CorruptionKind, Vec<i8>> = BTreeMap::new();
        let mut levels: BTreeMap<(CorruptionKind, usize), Vec<f64>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, rhs) = line
                .split_once('=')
                .ok_or_else(|| bad(i, format!("expected `key = value`, got `{line}`")))?;
            let (kind, field) = lhs
                .trim()
                .split_once('.')
                .ok_or_else(|| bad(i, "expected `<kind>.<field>`".into()))?;
            let kind: CorruptionKind = kind.parse().map_err(|e: Error| bad(i, e.to_string()))?;
            let values: Vec<&str> = rhs.split_whitespace().collect();
            match field {
                "params" => {
                    names.insert(kind, values.iter().map(|s| s.to_string()).collect());
                }
                "monotone" => {
                    let d = values
                        .iter()
                        .map(|v| match *v {
                            "+" => Ok(1),
                            "-" => Ok(-1),
                            "=" => Ok(0),
                            other => Err(bad(i, format!("monotone entries are +, - or =, got `{other}`"))),
                        })
                        .collect::<Result<Vec<i8>>>()?;
                    dirs.insert(kind, d);
                }
                level => {
                    let s: usize = level
                        .parse()
                        .ok()
                        .filter(|s| (1..=5).contains(s))
                        .ok_or_else(|| bad(i, format!("unknown field `{level}`")))?;
                    let v = values
                        .iter()
                        .map(|v| v.parse::<f64>().map_err(|_| bad(i, format!("bad number `{v}`"))))
                        .collect::<Result<Vec<f64>>>()?;
                    levels.insert((kind, s), v);
                }
            }
        }
        let mut kinds = BTreeMap::new();
        for kind in CorruptionKind::ALL {
            let missing = |what: &str| Error::data(format!("{}: {kind} is missing {what}", origin.display()));
            let n = names.remove(&kind).ok_or_else(|| missing("`params`"))?;
            let d = dirs.remove(&kind).ok_or_else(|| missing("`monotone`"))?;
            if d.len() != n.len() || n.len() != kind.param_count() {
                return Err(Error::data(format!(
                    "{}: {kind} needs {} parameters",
                    origin.display(),
                    kind.param_count()
                )));
            }
            let mut lv: [Vec<f64>; 5] = Default::default();
            for (s, slot) in lv.iter_mut().enumerate() {
                let v = levels
                    .remove(&(kind, s + 1))
                    .ok_or_else(|| missing(&format!("severity {}", s + 1)))?;
                if v.len() != n.len() {
                    return Err(Error::data(format!(
                        "{}: {kind}.{} has {} values, expected {}",
                        origin.display(),
                        s + 1,
                        v.len(),
                        n.len()
                    )));
                }
                *slot = v;
            }
            kinds.insert(
                kind,
                KindParams {
                    names: n,
                    directions: d,
                    levels: lv,
                },
            );
        }
        Ok(SeverityTable { kinds })
    }

    pub fn kind(&self, kind: CorruptionKind) -> &KindParams {
        &self.kinds[&kind]
    }

    /// Parameter tuple for `severity` in `1..=5`.
    pub fn params(&self, kind: CorruptionKind, severity: u8) -> &[f64] {
        &self.kinds[&kind].levels[severity as usize - 1]
    }
}
