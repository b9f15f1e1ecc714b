use pcdiff_core::denoiser::{fit, fit_with, Architecture, DenoiserParams, TrainConfig};
use pcdiff_core::diffusion::DiffusionSchedule;
use pcdiff_core::pipeline::training_cloud;
use pcdiff_core::synthetic::{make_dataset, PhantomSpec, Variation};
use pcdiff_core::{Error, PointCloud};

fn toy_clouds(n: usize, points_n: usize, points_m: usize) -> Vec<PointCloud> {
    let (phantoms, _) = make_dataset(n, &PhantomSpec::default(), &Variation::default(), 17).unwrap();
    phantoms
        .iter()
        .enumerate()
        .map(|(i, p)| training_cloud(&p.defective, &p.implant, points_n, points_m, i as u64).unwrap())
        .collect()
}

#[test]
fn loss_decreases_on_a_small_dataset() {
    let clouds = toy_clouds(20, 96, 16);
    let sched = DiffusionSchedule::scaled_linear(100).unwrap();
    let params = DenoiserParams::new(Architecture::toy(), 1).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        epochs: 200,
        ..Default::default()
    };
    let (_, history) = fit(&params, &clouds, &config, &sched, 2).unwrap();
    assert_eq!(history.len(), 200);
    let head: f64 = history[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = history[180..].iter().sum::<f64>() / 20.0;
    assert!(tail < head, "first 20 epochs {head:.4}, last 20 {tail:.4}");
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let clouds = toy_clouds(4, 64, 8);
    let sched = DiffusionSchedule::scaled_linear(100).unwrap();
    let params = DenoiserParams::new(Architecture::toy(), 3).unwrap();
    let config = TrainConfig {
        learning_rate: 0.0,
        batch_size: 2,
        epochs: 2,
        ..Default::default()
    };
    let (after, history) = fit(&params, &clouds, &config, &sched, 0).unwrap();
    assert_eq!(history.len(), 2);
    assert!(after.values().iter().zip(params.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn zero_epochs_is_a_no_op() {
    let clouds = toy_clouds(2, 64, 8);
    let sched = DiffusionSchedule::scaled_linear(100).unwrap();
    let params = DenoiserParams::new(Architecture::toy(), 3).unwrap();
    let config = TrainConfig {
        epochs: 0,
        ..Default::default()
    };
    let (after, history) = fit(&params, &clouds, &config, &sched, 0).unwrap();
    assert!(history.is_empty());
    assert_eq!(after.values(), params.values());
}

#[test]
fn training_is_deterministic() {
    let clouds = toy_clouds(4, 64, 8);
    let sched = DiffusionSchedule::scaled_linear(100).unwrap();
    let params = DenoiserParams::new(Architecture::toy(), 5).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 3,
        epochs: 3,
        ..Default::default()
    };
    let a = fit(&params, &clouds, &config, &sched, 9).unwrap();
    let b = fit(&params, &clouds, &config, &sched, 9).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.values(), b.0.values());
}

#[test]
fn divergence_is_reported() {
    let clouds = toy_clouds(2, 64, 8);
    let sched = DiffusionSchedule::scaled_linear(100).unwrap();
    let mut params = DenoiserParams::new(Architecture::toy(), 3).unwrap();
    let (off, spec) = params.tensor("head.weight").unwrap();
    for v in &mut params.values_mut()[off..off + spec.len()] {
        *v = 1e300;
    }
    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 2,
        epochs: 3,
        ..Default::default()
    };
    let mut seen = 0;
    let err = fit_with(&params, &clouds, &config, &sched, 0, &mut |_, _| seen += 1).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch: 0, .. }), "{err}");
    assert_eq!(seen, 0);
}

#[test]
fn empty_dataset_is_rejected() {
    let sched = DiffusionSchedule::scaled_linear(100).unwrap();
    let params = DenoiserParams::new(Architecture::toy(), 3).unwrap();
    assert!(fit(&params, &[], &TrainConfig::default(), &sched, 0).is_err());
}

#[test]
fn two_hundred_triples_within_a_minute() {
    let start = std::time::Instant::now();
    let (phantoms, manifest) = make_dataset(200, &PhantomSpec::default(), &Variation::default(), 2024).unwrap();
    assert!(start.elapsed().as_secs() < 60);
    assert_eq!(phantoms.len(), 200);
    assert_eq!(manifest.specs.len(), 200);
    for p in &phantoms {
        assert!(p.implant.count_ones() > 0 && p.defective.count_ones() > 0);
    }
}
