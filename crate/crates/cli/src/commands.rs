use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use scribe_core::analysis::{
    autocorrelation, effective_dim, ev_csv, ev_svg, explained_variance, gather_responses,
    heatmap_svg, matrix_csv, EvCurve,
};
use scribe_core::checkpoint;
use scribe_core::corrupt::{corrupt_with, Group};
use scribe_core::dataset::{generate_with, Sample, Split};
use scribe_core::eval::{predict_image, run_benchmark, BenchmarkConfig, BenchmarkReport, Model};
use scribe_core::io::{read_dataset, read_image, write_dataset, write_image};
use scribe_core::metrics::ConfusionMatrix;
use scribe_core::report;
use scribe_core::train::{train_with_progress, Checkpoint};
use scribe_core::{Error, Exec, HeadKind, Result, Tensor};

use crate::config::RunConfig;

/// Shared state of one command invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub run_dir: PathBuf,
    pub svg: bool,
    pub exec: Exec,
}

const INCOMPLETE: &str = "INCOMPLETE";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Key-value record of a command's outputs and headline numbers.
#[derive(Default)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    fn add(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text: String = self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        write(path, text)
    }
}

impl Ctx {
    /// Marks the run directory as in progress and records the config.
    fn begin(&self, command: &str) -> Result<()> {
        write(
            &self.run_dir.join(INCOMPLETE),
            format!("`{command}` started here and has not finished; outputs may be partial\n"),
        )?;
        write(&self.run_dir.join("config.resolved"), self.cfg.resolved())
    }

    fn finish(&self, command: &str, manifest: &Manifest) -> Result<()> {
        manifest.write(&self.run_dir.join(format!("{command}.manifest")))?;
        let marker = self.run_dir.join(INCOMPLETE);
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))
    }

    fn dataset_dir(&self, data: Option<&Path>) -> PathBuf {
        data.map_or_else(|| self.run_dir.join("dataset"), Path::to_path_buf)
    }

    fn checkpoint_path(&self, head: HeadKind) -> PathBuf {
        self.run_dir.join("checkpoints").join(format!("{}.ckpt", head.name()))
    }
}

fn capped(mut samples: Vec<Sample>, max: usize) -> Vec<Sample> {
    if max > 0 {
        samples.truncate(max);
    }
    samples
}

pub fn gen(ctx: &Ctx) -> Result<()> {
    ctx.begin("gen")?;
    let spec = ctx.cfg.scene_spec()?;
    let count: usize = ctx.cfg.get("data.count")?;
    if count == 0 {
        return Err(Error::usage("data.count must be at least 1"));
    }
    let samples = generate_with(&spec, count, ctx.exec)?;
    let dir = ctx.dataset_dir(None);
    write_dataset(&dir, &samples, spec.num_classes, spec.val_percent)?;
    let val = samples
        .iter()
        .filter(|s| scribe_core::dataset::split_of(&s.id, spec.val_percent) == Split::Val)
        .count();
    eprintln!("gen: {count} samples ({val} val) in {}", dir.display());
    let mut m = Manifest::default();
    m.add("dataset", "dataset/manifest.txt");
    m.add("samples", count);
    m.add("samples.val", val);
    ctx.finish("gen", &m)
}

fn miou_on(net: &scribe_core::model::SegNet, samples: &[Sample], exec: Exec) -> Result<Option<f64>> {
    let parts = exec.map(samples, |s| -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::new(net.num_classes);
        cm.accumulate(&predict_image(net, &s.image)?, &s.label)?;
        Ok(cm)
    });
    let mut total = ConfusionMatrix::new(net.num_classes);
    for p in parts {
        total.merge(&p?)?;
    }
    Ok(total.miou_percent())
}

/// Returns the checkpoint and its clean train-split mIOU.
pub fn train(ctx: &Ctx, head: HeadKind, data: Option<&Path>) -> Result<(Checkpoint, Option<f64>)> {
    ctx.begin("train")?;
    let stored = read_dataset(&ctx.dataset_dir(data))?;
    let samples = stored.split(Split::Train);
    let cfg = ctx.cfg.train_config(head)?;
    let start = Instant::now();
    let every = (cfg.total_iters / 10).max(1);
    let ckpt = train_with_progress(&cfg, &samples, stored.num_classes, ctx.exec, |i, loss| {
        if (i + 1) % every == 0 {
            eprintln!("train {head}: iter {:>5}/{} loss {loss:.4}", i + 1, cfg.total_iters);
        }
    })?;
    let train_miou = miou_on(&ckpt.net, &samples, ctx.exec)?;
    eprintln!(
        "train {head}: done in {:.1}s, train-split mIOU {}",
        start.elapsed().as_secs_f64(),
        train_miou.map_or("-".into(), |v| format!("{v:.1}"))
    );
    let path = ctx.checkpoint_path(head);
    write(&path, checkpoint::to_bytes(&ckpt))?;
    let mut loss = String::from("iteration,loss\n");
    for (i, l) in ckpt.loss_history.iter().enumerate() {
        let _ = writeln!(loss, "{},{l}", i + 1);
    }
    write(&path.with_extension("loss.csv"), loss)?;
    let mut m = Manifest::default();
    m.add(format!("checkpoint.{}", head.name()), path.strip_prefix(&ctx.run_dir).unwrap_or(&path).display());
    if let Some(v) = train_miou {
        m.add(format!("train_miou.{}", head.name()), v);
    }
    ctx.finish(&format!("train-{}", head.name()), &m)?;
    Ok((ckpt, train_miou))
}

/// Corrupts every `.ppm` under `input` (or `input/images`) into
/// `output/<kind>/<severity>/<id>.ppm`.
pub fn corrupt(ctx: &Ctx, input: &Path, output: &Path) -> Result<()> {
    let dir = if input.join("images").is_dir() { input.join("images") } else { input.to_path_buf() };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::usage(format!("no .ppm images in {}", dir.display())));
    }
    write(&output.join(INCOMPLETE), "corruption in progress\n")?;
    let suite = ctx.cfg.suite()?;
    let table = ctx.cfg.severity_table()?;
    let images = files
        .iter()
        .map(|f| Ok((f.file_stem().unwrap_or_default().to_string_lossy().into_owned(), read_image(f)?)))
        .collect::<Result<Vec<(String, Tensor)>>>()?;
    let n = images.len();
    let results = ctx.exec.map_indexed(suite.len() * n, |t| -> Result<()> {
        let (spec, (id, img)) = (&suite[t / n], &images[t % n]);
        let out = corrupt_with(img, &spec.for_image(id), &table)?;
        let path = output
            .join(spec.kind.name())
            .join(spec.severity.to_string())
            .join(format!("{id}.ppm"));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_image(&path, &out)
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    write(&output.join("config.resolved"), ctx.cfg.resolved())?;
    eprintln!("corrupt: {n} images × {} specs into {}", suite.len(), output.display());
    let marker = output.join(INCOMPLETE);
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))
}

fn load_models(ctx: &Ctx, checkpoints: &[PathBuf]) -> Result<Vec<Model>> {
    let paths: Vec<PathBuf> = if checkpoints.is_empty() {
        ctx.cfg.heads()?.into_iter().map(|h| ctx.checkpoint_path(h)).collect()
    } else {
        checkpoints.to_vec()
    };
    let missing: Vec<String> = paths.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::usage(format!("missing checkpoints: {}", missing.join(", "))));
    }
    let mut models: Vec<Model> = Vec::new();
    for p in &paths {
        let ck = checkpoint::load(p)?;
        let mut name = ck.net.head.label().to_string();
        let dup = models.iter().filter(|m| m.name.starts_with(&name)).count();
        if dup > 0 {
            name = format!("{name}#{}", dup + 1);
        }
        models.push(Model { name, net: ck.net });
    }
    Ok(models)
}

pub fn bench(ctx: &Ctx, data: Option<&Path>, checkpoints: &[PathBuf]) -> Result<BenchmarkReport> {
    ctx.begin("bench")?;
    let models = load_models(ctx, checkpoints)?;
    let stored = read_dataset(&ctx.dataset_dir(data))?;
    let val = capped(stored.split(Split::Val), ctx.cfg.get("bench.max_images")?);
    if val.is_empty() {
        return Err(Error::data("the dataset has no validation images"));
    }
    let cfg = BenchmarkConfig {
        suite: ctx.cfg.suite()?,
        msc: ctx.cfg.msc()?,
        table: ctx.cfg.severity_table()?,
    };
    let start = Instant::now();
    let rep = run_benchmark(&models, &val, &cfg, ctx.exec)?;
    eprintln!(
        "bench: {} models × {} conditions × {} images in {:.1}s",
        models.len(),
        cfg.suite.len() + 1,
        val.len(),
        start.elapsed().as_secs_f64()
    );
    let dir = ctx.run_dir.join("reports");
    write(&dir.join("benchmark.csv"), report::to_csv(&rep))?;
    write(&dir.join("grid.txt"), report::render_grid(&rep, false))?;
    if cfg.msc.is_some() {
        write(&dir.join("grid_msc.txt"), report::render_grid(&rep, true))?;
    }
    let summary = report::render_summary(&report::summary(&rep));
    write(&dir.join("summary.txt"), &summary)?;
    write(&dir.join("severity.csv"), report::severity_csv(&rep))?;
    if ctx.svg {
        write(&dir.join("severity.svg"), report::severity_svg(&rep))?;
    }
    eprint!("{summary}");
    let mut m = Manifest::default();
    m.add("report.csv", "reports/benchmark.csv");
    m.add("report.summary", "reports/summary.txt");
    m.add("images", val.len());
    for (i, name) in rep.models.iter().enumerate() {
        let mut put = |key: &str, v: Option<f64>| {
            if let Some(v) = v {
                m.add(format!("{key}.{name}"), v);
            }
        };
        put("val", rep.clean(i, false));
        put("val_msc", rep.clean(i, true));
        put("cor", rep.corrupted_mean(i, false));
        put("cor_msc", rep.corrupted_mean(i, true));
    }
    ctx.finish("bench", &m)?;
    Ok(rep)
}

/// Per-model representation summary.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub model: String,
    pub effective_dim: usize,
    pub curve: EvCurve,
    /// Mean over classes of the per-class off-diagonal autocorrelation.
    pub orthogonality: Option<f64>,
}

pub fn analyze(ctx: &Ctx, data: Option<&Path>, checkpoints: &[PathBuf]) -> Result<Vec<Diagnostics>> {
    ctx.begin("analyze")?;
    let models = load_models(ctx, checkpoints)?;
    let stored = read_dataset(&ctx.dataset_dir(data))?;
    let images: Vec<Tensor> = capped(stored.split(Split::Val), ctx.cfg.get("analysis.max_images")?)
        .into_iter()
        .map(|s| s.image)
        .collect();
    if images.is_empty() {
        return Err(Error::data("the dataset has no validation images"));
    }
    let threshold: f64 = ctx.cfg.get("analysis.threshold")?;
    let centered_r: bool = ctx.cfg.get("analysis.centered_autocorrelation")?;
    let centered_c: bool = ctx.cfg.get("analysis.centered_covariance")?;
    let dir = ctx.run_dir.join("analysis");
    let mut out = Vec::new();
    let mut summary = String::from("model,effective_dim,orthogonality\n");
    let mut m = Manifest::default();
    for model in &models {
        let v = gather_responses(&model.net, &images, None, ctx.exec)?;
        let curve = explained_variance(&v, centered_c)?;
        let dim = effective_dim(&curve, threshold)?;
        let sub = dir.join(model.name.to_lowercase());
        write(&sub.join("ev.csv"), ev_csv(&curve))?;
        let all = autocorrelation(&v, centered_r)?;
        write(&sub.join("autocorrelation.csv"), matrix_csv(&all))?;
        let mut per_class = vec![None; model.net.num_classes];
        let mut per = String::from("class,predicted_pixels,off_diagonal_mean\n");
        for c in 0..model.net.num_classes {
            let v = gather_responses(&model.net, &images, Some(c), ctx.exec)?;
            if v.len() >= 2 {
                let r = autocorrelation(&v, centered_r)?;
                per_class[c] = Some(r.off_diagonal_mean(c));
                write(&sub.join(format!("autocorrelation_class{c}.csv")), matrix_csv(&r))?;
                if ctx.svg {
                    write(
                        &sub.join(format!("autocorrelation_class{c}.svg")),
                        heatmap_svg(&r, &format!("{}: pixels predicted as class {c}", model.name)),
                    )?;
                }
            }
            let _ = writeln!(per, "{c},{},{}", v.len(), per_class[c].map_or(String::new(), |x| x.to_string()));
        }
        write(&sub.join("orthogonality.csv"), per)?;
        if ctx.svg {
            write(&sub.join("autocorrelation.svg"), heatmap_svg(&all, &format!("{}: all pixels", model.name)))?;
        }
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let orth = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        let _ = writeln!(summary, "{},{dim},{}", model.name, orth.map_or(String::new(), |x| x.to_string()));
        m.add(format!("effective_dim.{}", model.name), dim);
        if let Some(o) = orth {
            m.add(format!("orthogonality.{}", model.name), o);
        }
        eprintln!(
            "analyze {}: effective dim {dim} at {threshold}, mean off-diagonal autocorrelation {}",
            model.name,
            orth.map_or("-".into(), |x| format!("{x:.3}"))
        );
        out.push(Diagnostics {
            model: model.name.clone(),
            effective_dim: dim,
            curve,
            orthogonality: orth,
        });
    }
    write(&dir.join("summary.csv"), summary)?;
    if ctx.svg {
        let curves: Vec<(String, EvCurve)> = out.iter().map(|d| (d.model.clone(), d.curve.clone())).collect();
        write(&dir.join("ev.svg"), ev_svg(&curves))?;
    }
    ctx.finish("analyze", &m)?;
    Ok(out)
}

const REPRO_COLUMNS: &str = "seed,model,train_miou,val,val_msc,cor,cor_msc,noise,effective_dim,orthogonality";

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// gen, train every head, bench and analyze for each seed, then a summary
/// across seeds.
pub fn repro(ctx: &Ctx) -> Result<()> {
    let seeds: Vec<u64> = ctx.cfg.list("run.seeds")?;
    if seeds.is_empty() {
        return Err(Error::usage("run.seeds is empty"));
    }
    let heads = ctx.cfg.heads()?;
    write(&ctx.run_dir.join(INCOMPLETE), "`repro` started here and has not finished\n")?;
    write(&ctx.run_dir.join("config.resolved"), ctx.cfg.resolved())?;
    let mut csv = format!("{REPRO_COLUMNS}\n");
    let mut per_seed = Vec::new();
    for &seed in &seeds {
        let mut cfg = ctx.cfg.clone();
        cfg.set("run.seed", seed);
        let sub = Ctx {
            cfg,
            run_dir: ctx.run_dir.join(format!("seed-{seed}")),
            svg: ctx.svg,
            exec: ctx.exec,
        };
        eprintln!("repro: seed {seed}");
        gen(&sub)?;
        let mut train_miou = Vec::new();
        for &h in &heads {
            train_miou.push(train(&sub, h, None)?.1);
        }
        let rep = bench(&sub, None, &[])?;
        let diag = analyze(&sub, None, &[])?;
        for (i, name) in rep.models.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{seed},{name},{},{},{},{},{},{},{},{}",
                num(train_miou[i]),
                num(rep.clean(i, false)),
                num(rep.clean(i, true)),
                num(rep.corrupted_mean(i, false)),
                num(rep.corrupted_mean(i, true)),
                num(rep.group_mean(i, Group::Noise, false)),
                diag[i].effective_dim,
                num(diag[i].orthogonality)
            );
        }
        per_seed.push(rep);
    }
    write(&ctx.run_dir.join("repro.csv"), &csv)?;
    let text = repro_summary(&per_seed);
    write(&ctx.run_dir.join("repro_summary.txt"), &text)?;
    eprint!("{text}");
    let mut m = Manifest::default();
    m.add("repro.csv", "repro.csv");
    m.add("repro.summary", "repro_summary.txt");
    m.add("seeds", seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "));
    m.write(&ctx.run_dir.join("repro.manifest"))?;
    let marker = ctx.run_dir.join(INCOMPLETE);
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))
}

/// The four summary columns averaged over seeds.
fn repro_summary(reports: &[BenchmarkReport]) -> String {
    let models = reports.first().map(|r| r.models.clone()).unwrap_or_default();
    let mean = |f: &dyn Fn(&BenchmarkReport, usize) -> Option<f64>, m: usize| -> Option<f64> {
        let v: Vec<f64> = reports.iter().filter_map(|r| f(r, m)).collect();
        (v.len() == reports.len() && !v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let rows: Vec<report::SummaryRow> = models
        .iter()
        .enumerate()
        .map(|(m, name)| report::SummaryRow {
            model: name.clone(),
            val: mean(&|r, m| r.clean(m, false), m),
            val_msc: mean(&|r, m| r.clean(m, true), m),
            cor: mean(&|r, m| r.corrupted_mean(m, false), m),
            cor_msc: mean(&|r, m| r.corrupted_mean(m, true), m),
        })
        .collect();
    format!("# mean over {} seeds\n{}", reports.len(), report::render_summary(&rows))
}
