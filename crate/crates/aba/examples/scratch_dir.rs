use aba::augment::AugmenterSpec;
use aba::classifier::Architecture;
use aba::data::{make_domain, synth_digits, ShiftKind};
use aba::trainer::{train, Mode, Timing, TrainConfig};
use std::time::Instant;

fn main() {
    let iters: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let lr: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let train_ds = synth_digits::<f32>(2000, 1001).unwrap();
    let mut test = synth_digits::<f32>(1000, 2002).unwrap();
    test.name = "source".into();
    let mut evals = vec![test.clone()];
    for kind in ShiftKind::ALL {
        evals.push(make_domain(&test, kind, 77).unwrap());
    }
    let eval_refs: Vec<&_> = evals.iter().collect();
    let arch = Architecture::desknet((3, 28, 28), 10);
    let spec = AugmenterSpec {
        layers: 3,
        kernel_choices: vec![1, 3, 5],
        hidden_width: 16,
        image_channels: 3,
        leaky_slope: 0.01,
    };

    for mode in [Mode::Erm, Mode::RandConv, Mode::Aba] {
        let mut cfg = TrainConfig::digits_defaults();
        cfg.mode = mode;
        cfg.iterations = iters;
        cfg.warmup = 5;
        cfg.batch_size = 32;
        cfg.adv_steps = 5;
        cfg.classifier_lr = lr;
        cfg.eval_interval = (iters / 4).max(1);
        cfg.seed = 0;
        let t0 = Instant::now();
        let out = train(&cfg, &spec, &arch, &train_ds, &eval_refs, Timing::Deterministic).unwrap();
        let accs = out.metrics.last().unwrap().accuracy.clone().unwrap();
        let tavg: f64 = accs[1..].iter().sum::<f64>() / 4.0;
        println!(
            "{:9} iters {} | src {:.3} | inv {:.3} tint {:.3} noise {:.3} contr {:.3} | target-avg {:.3} | {:.0}s",
            mode.name(), iters, accs[0], accs[1], accs[2], accs[3], accs[4], tavg,
            t0.elapsed().as_secs_f64()
        );
    }
}
