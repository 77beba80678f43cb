use scribe_core::corrupt::rng::Stream;
use scribe_core::corrupt::{corruption_suite, SeverityTable};
use scribe_core::dataset::{generate, split, SyntheticSceneSpec};
use scribe_core::eval::{run_benchmark, BenchmarkConfig, Model, MscConfig};
use scribe_core::model::SegNet;
use scribe_core::train::{train, TrainConfig};
use scribe_core::{checkpoint, Exec, HeadKind};

fn scenes(size: usize, count: usize, seed: u64) -> Vec<scribe_core::dataset::Sample> {
    let spec = SyntheticSceneSpec {
        image_size: size,
        seed,
        ..Default::default()
    };
    generate(&spec, count).unwrap()
}

/// Central differences of the full network loss on a sample of parameters.
#[test]
fn network_gradient_matches_finite_differences() {
    let sample = scenes(16, 1, 3).remove(0);
    let pick = Stream::new(&[9]);
    for head in HeadKind::ALL {
        let net = SegNet::new(head, 4, 1).unwrap();
        let (_, grads) = net.backward_one(&sample.image, &sample.label).unwrap();
        let loss = |n: &SegNet| n.backward_one(&sample.image, &sample.label).unwrap().0;
        let mut worst = 0.0f64;
        for (li, layer) in net.layers.iter().enumerate() {
            for j in 0..8u64 {
                let bias = j >= 6;
                let len = if bias { layer.bias.len() } else { layer.kernel.len() };
                let idx = (pick.bits(((li as u64) << 8) ^ j) % len as u64) as usize;
                let eps = 1e-5;
                let shifted = |delta: f64| {
                    let mut n = net.clone();
                    let t = if bias { &mut n.layers[li].bias } else { &mut n.layers[li].kernel };
                    t.data_mut()[idx] += delta;
                    loss(&n)
                };
                let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
                let g = if bias { &grads.biases[li] } else { &grads.kernels[li] };
                let an = g.data()[idx];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
            }
        }
        assert!(worst < 1e-4, "{head}: worst relative error {worst:e}");
    }
}

#[test]
fn training_reduces_loss_and_checkpoints_round_trip() {
    let (train_set, _) = split(scenes(24, 16, 2), 20);
    let cfg = TrainConfig {
        head: HeadKind::Scribe,
        total_iters: 30,
        crop_size: 16,
        batch_size: 2,
        seed: 4,
        ..Default::default()
    };
    let ckpt = train(&cfg, &train_set, 4, Exec::Parallel).unwrap();
    let h = &ckpt.loss_history;
    let head: f64 = h[..5].iter().sum();
    let tail: f64 = h[h.len() - 5..].iter().sum();
    assert!(tail < head, "loss did not fall: {head} -> {tail}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scribe.ckpt");
    checkpoint::save(&path, &ckpt).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.net, ckpt.net);
    assert_eq!(back.loss_history, ckpt.loss_history);

    let again = train(&cfg, &train_set, 4, Exec::Sequential).unwrap();
    assert_eq!(again.net, ckpt.net, "training depends on the executor");
}

#[test]
fn benchmark_is_identical_sequential_and_parallel() {
    let (_, val) = split(scenes(24, 20, 5), 40);
    let models: Vec<Model> = HeadKind::BENCHMARKED
        .iter()
        .map(|&h| Model {
            name: h.label().into(),
            net: SegNet::new(h, 4, 8).unwrap(),
        })
        .collect();
    let cfg = BenchmarkConfig {
        suite: corruption_suite(&[2, 5], 1).unwrap(),
        msc: Some(MscConfig {
            scales: vec![0.75, 1.0],
            ..Default::default()
        }),
        table: SeverityTable::default(),
    };
    let a = run_benchmark(&models, &val[..2], &cfg, Exec::Sequential).unwrap();
    let b = run_benchmark(&models, &val[..2], &cfg, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.conditions().len(), 31);
}
