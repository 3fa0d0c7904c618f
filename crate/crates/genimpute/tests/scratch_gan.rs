// Scratch harness for tuning the adversarial imputer on the 4-Gaussian
// task. Run with --nocapture to inspect the conditional histogram.

use genimpute::data::{make_four_gaussians, normalize, split, NormMode};
use genimpute::imputer::{train_imputer, ImputerTrainConfig, VariantConfig};
use genimpute::masking::{apply_mask, Mask, MissingnessSpec};
use ndarray::array;

#[test]
#[ignore]
fn four_gaussian_conditional_histogram() {
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(300);
    let seed: u64 = std::env::var("SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(7);
    let raw = make_four_gaussians(5000, 0.1, 42).unwrap();
    let ds = split(&raw, 0.8, 43).unwrap();
    let ds = normalize(&ds, NormMode::Unity).unwrap();
    let spec = MissingnessSpec::uniform(0.5, 0).unwrap();
    let lr_g: f64 = std::env::var("LRG").ok().and_then(|v| v.parse().ok()).unwrap_or(0.0001);
    let lr_d: f64 = std::env::var("LRD").ok().and_then(|v| v.parse().ok()).unwrap_or(0.0005);
    let cfg = ImputerTrainConfig {
        epochs,
        lr_generator: lr_g,
        lr_discriminator: lr_d,
        plateau: std::env::var("PLATEAU").ok().map(|_| Default::default()),
        ..ImputerTrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (model, log) = train_imputer(&ds, &spec, &VariantConfig::default(), &cfg, seed).unwrap();
    println!("trained {epochs} epochs in {:.1}s", t0.elapsed().as_secs_f64());
    for e in log.epochs.iter().step_by((epochs / 10).max(1)) {
        println!(
            "epoch {:4} loss_d {:.4} loss_g {:?} rmse {:?} lr_g {:.2e}",
            e.epoch, e.loss_discriminator, e.loss_generator, e.holdout_rmse, e.lr_generator
        );
    }

    // Conditional sampling at x2 = 0.1 (original units), x1 missing.
    let x2_norm = ds.columns[1].norm.as_ref().unwrap().apply(0.1);
    let probe = array![f64::NAN, x2_norm];
    let sample = apply_mask(probe.view(), &Mask::from_bits(vec![false, true])).unwrap();
    let mut near0 = 0usize;
    let mut near1 = 0usize;
    let n = 1000;
    let mut values = Vec::new();
    for i in 0..n {
        let imputed = model.impute(&sample, 1000 + i as u64).unwrap();
        let x1 = ds.columns[0].norm.as_ref().unwrap().invert(imputed[0]);
        values.push(x1);
        if (x1 - 0.0).abs() <= 0.25 {
            near0 += 1;
        }
        if (x1 - 1.0).abs() <= 0.25 {
            near1 += 1;
        }
    }
    let mean: f64 = values.iter().sum::<f64>() / n as f64;
    let var: f64 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    println!(
        "near0 {:.3} near1 {:.3} mean {mean:.3} std {:.3}",
        near0 as f64 / n as f64,
        near1 as f64 / n as f64,
        var.sqrt()
    );
    let mut hist = [0usize; 20];
    for v in &values {
        let idx = (((v + 0.5) / 2.0 * 20.0).floor() as isize).clamp(0, 19) as usize;
        hist[idx] += 1;
    }
    for (b, count) in hist.iter().enumerate() {
        println!("{:+.2} {}", -0.5 + (b as f64 + 0.5) * 0.1, "#".repeat(count / 5));
    }
}
