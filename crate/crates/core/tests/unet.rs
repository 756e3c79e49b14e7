use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocaltrack_core::augment::AugmentConfig;
use vocaltrack_core::losses::{LossConfig, Objective};
use vocaltrack_core::synth::{generate_synthetic_clip, SyntheticSpec};
use vocaltrack_core::unet::{train, AttentionGate, TrainConfig, TrainSample, UNet, UNetConfig};
use vocaltrack_nn::{Module, Tensor};

fn tiny(attention: bool) -> UNetConfig {
    UNetConfig {
        depth: 2,
        base_channels: 4,
        norm_groups: 2,
        attention,
        coord_channels: true,
        seed: 9,
        ..Default::default()
    }
}

fn samples(n: usize, seed: u64) -> Vec<TrainSample> {
    let clip = generate_synthetic_clip(&SyntheticSpec { seed, frames: n, ..Default::default() }, "c").unwrap();
    clip.frames
        .iter()
        .enumerate()
        .map(|(t, f)| TrainSample { frame: f.clone(), points: clip.trajectory.frame(t) })
        .collect()
}

#[test]
fn gate_parameters_account_for_the_whole_difference() {
    for depth in 1..=4 {
        for base in [4, 8, 16] {
            let cfg = |attention| UNetConfig { depth, base_channels: base, norm_groups: 4, attention, ..Default::default() };
            let gated = UNet::build(&cfg(true)).unwrap();
            let plain = UNet::build(&cfg(false)).unwrap();
            // Two 1×1 projections to ch/2 channels and a 1×1 projection to one
            // channel, all with biases, per decoder level.
            let expected: usize = (0..depth)
                .map(|l| {
                    let ch = base << l;
                    let inter = (ch / 2).max(1);
                    2 * (ch * inter + inter) + inter + 1
                })
                .sum();
            assert_eq!(gated.param_count() - plain.param_count(), expected);
            assert_eq!(gated.gate_param_count(), expected);
            assert_eq!(plain.gate_param_count(), 0);
        }
    }
}

#[test]
fn zero_psi_gives_half_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut gate = AttentionGate::new("g", 6, 6, 3, &mut rng);
    gate.psi.visit_params_mut(&mut |p| p.value.iter_mut().for_each(|v| *v = 0.0));
    let random = |rng: &mut ChaCha8Rng| {
        Tensor::new(&[2, 6, 5, 5], (0..300).map(|_| rng.random_range(-2.0f32..2.0)).collect())
    };
    let skip = random(&mut rng);
    let (out, mask) = gate.forward(&skip, &random(&mut rng));
    assert!(mask.data().iter().all(|m| *m == 0.5));
    for (o, s) in out.data().iter().zip(skip.data()) {
        assert_eq!(*o, s * 0.5);
    }
}

#[test]
fn every_parameter_receives_gradient() {
    let mut model = UNet::build(&tiny(true)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::new(&[2, 1, 96, 96], (0..2 * 96 * 96).map(|_| rng.random::<f32>()).collect());
    let (out, ctx) = model.forward_train(&x).unwrap();
    let dy = Tensor::new(out.shape(), (0..out.data().len()).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    model.zero_grad();
    model.backward(ctx, &dy);
    let mut dead = Vec::new();
    model.visit_params(&mut |p| {
        if p.grad.iter().all(|g| *g == 0.0) {
            dead.push(p.name.clone());
        }
    });
    assert!(dead.is_empty(), "no gradient for {dead:?}");
}

fn probe_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 1,
        learning_rate: 3e-3,
        warmup_steps: 20,
        augment: AugmentConfig::none(),
        seed,
        ..Default::default()
    }
}

#[test]
fn single_sample_loss_falls_steadily() {
    let data = samples(1, 4);
    let mut model = UNet::build(&tiny(true)).unwrap();
    let report = train(&mut model, &data, &[], &probe_config(200, 0)).unwrap();
    let losses = &report.step_losses;
    assert_eq!(losses.len(), 200);
    // Window means after warmup never rise.
    let means: Vec<f64> = losses[20..].chunks(20).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in means.windows(2) {
        assert!(pair[1] <= pair[0], "{means:?}");
    }
    assert!(losses[199] < 0.75 * losses[0], "{} -> {}", losses[0], losses[199]);
}

#[test]
fn fixed_seed_reproduces_training() {
    let data = samples(6, 5);
    let run = || {
        let mut model = UNet::build(&tiny(true)).unwrap();
        let cfg = TrainConfig {
            batch_size: 3,
            augment: AugmentConfig::default(),
            loss: LossConfig { objective: Objective::Kl, ..Default::default() },
            ..probe_config(2, 17)
        };
        train(&mut model, &data, &data[..2], &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    let (fa, fb) = (a.final_loss().unwrap(), b.final_loss().unwrap());
    assert!((fa - fb).abs() <= 1e-6 * fa.abs().max(1.0));
    assert_eq!(a.step_losses, b.step_losses);
}
