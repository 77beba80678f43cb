use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scribe_core::corrupt::{corrupt, corruption_suite, SeverityTable};
use scribe_core::dataset::{generate, Sample, SyntheticSceneSpec};
use scribe_core::eval::{run_benchmark, BenchmarkConfig, Model};
use scribe_core::model::SegNet;
use scribe_core::{Exec, HeadKind, LabelMap, Tensor};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn samples(count: usize) -> Vec<Sample> {
    let spec = SyntheticSceneSpec {
        image_size: 48,
        ..Default::default()
    };
    generate(&spec, count).unwrap()
}

fn corruption_suite_bench(c: &mut Criterion) {
    let image = samples(1).remove(0).image;
    let suite = corruption_suite(&[3], 0).unwrap();
    let mut g = c.benchmark_group("corruption_suite");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(&suite, |spec| corrupt(&image, spec).unwrap()))
        });
    }
    g.finish();
}

fn batch_backward(c: &mut Criterion) {
    let data = samples(8);
    let images: Vec<Tensor> = data.iter().map(|s| s.image.clone()).collect();
    let labels: Vec<LabelMap> = data.iter().map(|s| s.label.clone()).collect();
    let net = SegNet::new(HeadKind::Scribe, 4, 0).unwrap();
    let mut g = c.benchmark_group("batch_backward");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| net.backward(&images, &labels, exec).unwrap())
        });
    }
    g.finish();
}

fn benchmark_run(c: &mut Criterion) {
    let data = samples(2);
    let models = vec![Model {
        name: "SCrIBE".into(),
        net: SegNet::new(HeadKind::Scribe, 4, 0).unwrap(),
    }];
    let cfg = BenchmarkConfig {
        suite: corruption_suite(&[1], 0).unwrap(),
        msc: None,
        table: SeverityTable::default(),
    };
    let mut g = c.benchmark_group("benchmark");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_benchmark(&models, &data, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, corruption_suite_bench, batch_backward, benchmark_run);
criterion_main!(benches);
