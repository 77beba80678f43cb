//! Multi-scale prediction and the corruption benchmark runner.

use std::collections::BTreeMap;

use crate::corrupt::{corrupt_with, CorruptionKind, CorruptionSpec, Group, SeverityTable};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::heads::{argmax, class_probabilities, class_scores, LabelMap};
use crate::metrics::ConfusionMatrix;
use crate::model::SegNet;
use crate::par::Exec;
use crate::tensor::{bilinear_resize, Tensor};

/// What multi-scale inference averages across scales and flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MscAverage {
    #[default]
    Probabilities,
    Logits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MscConfig {
    pub scales: Vec<f64>,
    pub flip: bool,
    pub average: MscAverage,
}

impl Default for MscConfig {
    fn default() -> Self {
        MscConfig {
            scales: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            flip: true,
            average: MscAverage::Probabilities,
        }
    }
}

impl MscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::usage("MSC needs at least one scale"));
        }
        if let Some(s) = self.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::usage(format!("MSC scale {s} must be positive")));
        }
        Ok(())
    }
}

/// `[H, W, k]` per-pixel class maps in class order: probabilities under the
/// head's own rule, or raw class scores.
pub fn class_maps(net: &SegNet, image: &Tensor, average: MscAverage) -> Result<Tensor> {
    let logits = net.forward(image)?;
    let (h, w, c) = logits.logits().hwc()?;
    let k = net.num_classes;
    let head = net.head;
    let mut out = Tensor::zeros(&[h, w, k]);
    for (src, dst) in logits.logits().data().chunks(c).zip(out.data_mut().chunks_mut(k)) {
        match average {
            MscAverage::Probabilities => class_probabilities(head, src, dst),
            MscAverage::Logits => class_scores(head, src, dst),
        }
    }
    Ok(out)
}

fn argmax_map(maps: &Tensor) -> Result<LabelMap> {
    let (h, w, k) = maps.hwc()?;
    let classes = maps.data().chunks(k).map(|v| argmax(v) as u8).collect();
    LabelMap::new(h, w, classes)
}

/// Plain single-scale prediction.
pub fn predict_image(net: &SegNet, image: &Tensor) -> Result<LabelMap> {
    Ok(crate::heads::predict(&net.forward(image)?))
}

/// Averages class maps over rescaled (and optionally mirrored) copies of the
/// image, resized back to the input resolution, then takes the argmax.
pub fn msc_predict(net: &SegNet, image: &Tensor, cfg: &MscConfig) -> Result<LabelMap> {
    cfg.validate()?;
    let (h, w, _) = image.hwc()?;
    let mut acc = Tensor::zeros(&[h, w, net.num_classes]);
    for &s in &cfg.scales {
        let sh = ((h as f64 * s).round() as usize).max(1);
        let sw = ((w as f64 * s).round() as usize).max(1);
        let scaled = bilinear_resize(image, sh, sw)?;
        let mut add = |maps: Tensor| -> Result<()> {
            let back = bilinear_resize(&maps, h, w)?;
            for (a, b) in acc.data_mut().iter_mut().zip(back.data()) {
                *a += b;
            }
            Ok(())
        };
        add(class_maps(net, &scaled, cfg.average)?)?;
        if cfg.flip {
            let mirrored = class_maps(net, &scaled.flip_horizontal()?, cfg.average)?;
            add(mirrored.flip_horizontal()?)?;
        }
    }
    argmax_map(&acc)
}

/// A benchmarked network and the name it is reported under.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub net: SegNet,
}

/// One evaluated condition: clean inputs (`kind == None`, severity 0) or a
/// corruption at a severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub kind: Option<CorruptionKind>,
    pub severity: u8,
}

impl Condition {
    pub const CLEAN: Condition = Condition {
        kind: None,
        severity: 0,
    };

    pub fn name(&self) -> &'static str {
        self.kind.map_or("clean", |k| k.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    /// mIOU on the 0 to 100 scale; `None` if no class was present.
    pub miou: Option<f64>,
    pub miou_msc: Option<f64>,
}

/// mIOU per (condition, model), single-scale and with MSC.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkReport {
    pub models: Vec<String>,
    pub cells: BTreeMap<(Condition, usize), Scores>,
}

impl BenchmarkReport {
    pub fn new(models: Vec<String>) -> Self {
        BenchmarkReport {
            models,
            cells: BTreeMap::new(),
        }
    }

    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.models.iter().position(|m| m == name)
    }

    pub fn conditions(&self) -> Vec<Condition> {
        let mut c: Vec<Condition> = self.cells.keys().map(|(c, _)| *c).collect();
        c.dedup();
        c
    }

    pub fn severities(&self) -> Vec<u8> {
        let mut s: Vec<u8> = self.conditions().iter().filter(|c| c.kind.is_some()).map(|c| c.severity).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn kinds(&self) -> Vec<CorruptionKind> {
        let mut k: Vec<CorruptionKind> = self.conditions().iter().filter_map(|c| c.kind).collect();
        k.sort_unstable();
        k.dedup();
        k
    }

    pub fn get(&self, cond: Condition, model: usize, msc: bool) -> Option<f64> {
        self.cells
            .get(&(cond, model))
            .and_then(|s| if msc { s.miou_msc } else { s.miou })
    }

    fn mean_where(&self, model: usize, msc: bool, keep: impl Fn(&Condition) -> bool) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|((c, m), _)| *m == model && keep(c))
            .filter_map(|(_, s)| if msc { s.miou_msc } else { s.miou })
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn clean(&self, model: usize, msc: bool) -> Option<f64> {
        self.get(Condition::CLEAN, model, msc)
    }

    /// Mean over corruption kinds at one severity; severity 0 is the clean score.
    pub fn severity_mean(&self, model: usize, severity: u8, msc: bool) -> Option<f64> {
        if severity == 0 {
            return self.clean(model, msc);
        }
        self.mean_where(model, msc, |c| c.kind.is_some() && c.severity == severity)
    }

    /// Mean over all severities of one kind.
    pub fn kind_mean(&self, model: usize, kind: CorruptionKind, msc: bool) -> Option<f64> {
        self.mean_where(model, msc, |c| c.kind == Some(kind))
    }

    /// Mean over every kind of a group and every severity.
    pub fn group_mean(&self, model: usize, group: Group, msc: bool) -> Option<f64> {
        self.mean_where(model, msc, |c| c.kind.is_some_and(|k| k.group() == group))
    }

    /// Mean over every corrupted cell.
    pub fn corrupted_mean(&self, model: usize, msc: bool) -> Option<f64> {
        self.mean_where(model, msc, |c| c.kind.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub suite: Vec<CorruptionSpec>,
    /// Multi-scale settings; `None` skips the MSC columns.
    pub msc: Option<MscConfig>,
    pub table: SeverityTable,
}

/// Evaluates every model on clean images and under every spec in the suite.
/// Each corrupted image is produced once and shared by all models.
pub fn run_benchmark(models: &[Model], images: &[Sample], cfg: &BenchmarkConfig, exec: Exec) -> Result<BenchmarkReport> {
    if models.is_empty() {
        return Err(Error::usage("benchmark needs at least one model"));
    }
    if images.is_empty() {
        return Err(Error::usage("benchmark needs at least one image"));
    }
    let k = models[0].net.num_classes;
    if let Some(m) = models.iter().find(|m| m.net.num_classes != k) {
        return Err(Error::usage(format!(
            "model `{}` has {} classes, expected {k}",
            m.name, m.net.num_classes
        )));
    }
    if let Some(msc) = &cfg.msc {
        msc.validate()?;
    }
    let mut conditions: Vec<(Condition, Option<CorruptionSpec>)> = vec![(Condition::CLEAN, None)];
    conditions.extend(cfg.suite.iter().map(|s| {
        (
            Condition {
                kind: Some(s.kind),
                severity: s.severity,
            },
            Some(*s),
        )
    }));

    let n = images.len();
    // one task per (condition, image); each yields per-model matrices
    let per_task = exec.map_indexed(conditions.len() * n, |t| -> Result<Vec<(ConfusionMatrix, ConfusionMatrix)>> {
        let (spec, sample) = (&conditions[t / n].1, &images[t % n]);
        let input = match spec {
            Some(s) => corrupt_with(&sample.image, &s.for_image(&sample.id), &cfg.table)?,
            None => sample.image.clone(),
        };
        models
            .iter()
            .map(|m| {
                let mut plain = ConfusionMatrix::new(k);
                plain.accumulate(&predict_image(&m.net, &input)?, &sample.label)?;
                let mut msc = ConfusionMatrix::new(k);
                if let Some(c) = &cfg.msc {
                    msc.accumulate(&msc_predict(&m.net, &input, c)?, &sample.label)?;
                }
                Ok((plain, msc))
            })
            .collect()
    });

    let mut report = BenchmarkReport::new(models.iter().map(|m| m.name.clone()).collect());
    let mut tasks = per_task.into_iter();
    for (cond, _) in &conditions {
        let mut totals = vec![(ConfusionMatrix::new(k), ConfusionMatrix::new(k)); models.len()];
        for _ in 0..n {
            let task = tasks.next().expect("one result per task")?;
            for (acc, (p, m)) in totals.iter_mut().zip(task) {
                acc.0.merge(&p)?;
                acc.1.merge(&m)?;
            }
        }
        for (mi, (p, m)) in totals.iter().enumerate() {
            report.cells.insert(
                (*cond, mi),
                Scores {
                    miou: p.miou_percent(),
                    miou_msc: cfg.msc.as_ref().and_then(|_| m.miou_percent()),
                },
            );
        }
    }
    Ok(report)
}
