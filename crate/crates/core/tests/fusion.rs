use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocaltrack_core::fusion::{
    align_features, train_fusion, FeatureExtractor, FeatureSequence, FusionConfig, FusionModel, FusionSample,
    FusionTrainConfig, MelStub,
};
use vocaltrack_core::synth::{generate_synthetic_clip, SyntheticSpec};
use vocaltrack_core::types::{Trajectory, FRAME_RATE, NUM_COORDS};
use vocaltrack_nn::Module;

const STEP: f32 = 1e-3;

fn small(audio_dim: usize) -> FusionConfig {
    FusionConfig { audio_dim, width: 16, depth: 2, heads: 2, seed: 4, ..Default::default() }
}

fn random_inputs(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> (Trajectory, FeatureSequence) {
    let coords = (0..t * NUM_COORDS).map(|_| rng.random_range(0.5f32..4.0)).collect();
    let feats = (0..t * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    (
        Trajectory::from_flat("c", FRAME_RATE, coords).unwrap(),
        FeatureSequence::new(FRAME_RATE, 0.0, dim, feats).unwrap(),
    )
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut model = FusionModel::build(&small(5)).unwrap();
    // Move away from the zero-initialized heads so every path carries signal.
    model.visit_params_mut(&mut |p| p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.1f32..0.1)));
    let (kp, feats) = random_inputs(&mut rng, 3, 5);
    let out = model.forward(&kp, Some(&feats)).unwrap();
    let rc: Vec<f32> = (0..out.coords.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rp: Vec<f32> = (0..out.pitch_hz.len()).map(|_| rng.random_range(-0.01..0.01)).collect();
    let objective = |m: &FusionModel| {
        let o = m.forward(&kp, Some(&feats)).unwrap();
        let a: f64 = o.coords.iter().zip(&rc).map(|(x, r)| *x as f64 * *r as f64).sum();
        a + o.pitch_hz.iter().zip(&rp).map(|(x, r)| *x as f64 * *r as f64).sum::<f64>()
    };
    let mut trained = model.clone();
    trained.zero_grad();
    let (_, ctx) = trained.forward_train(&kp, Some(&feats)).unwrap();
    trained.backward(ctx, &rc, &rp);
    let mut grads = Vec::new();
    trained.visit_params(&mut |p| grads.push((p.name.clone(), p.grad.clone())));
    for (pi, (name, grad)) in grads.iter().enumerate() {
        let dir: Vec<f32> = (0..grad.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let perturbed = |sign: f32| {
            let mut m = model.clone();
            let mut idx = 0;
            m.visit_params_mut(&mut |p| {
                if idx == pi {
                    p.value.iter_mut().zip(&dir).for_each(|(v, d)| *v += sign * STEP * d);
                }
                idx += 1;
            });
            objective(&m)
        };
        let numeric = (perturbed(1.0) - perturbed(-1.0)) / (2.0 * STEP as f64);
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| *g as f64 * *d as f64).sum();
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        // f32 forward passes and ReLU kinks limit whole-model differences;
        // this catches wiring errors, the layers are checked tightly in
        // vocaltrack-nn.
        assert!(rel < 0.1, "{name}: analytic {analytic} numeric {numeric}");
    }
}

#[test]
fn inference_is_deterministic_and_pitch_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let model = FusionModel::build(&small(3)).unwrap();
    let (kp, feats) = random_inputs(&mut rng, 11, 3);
    let a = model.forward(&kp, Some(&feats)).unwrap();
    let b = model.forward(&kp, Some(&feats)).unwrap();
    assert_eq!(a.coords, b.coords);
    assert_eq!(a.pitch_hz, b.pitch_hz);
    assert!(a.pitch_hz.iter().all(|p| p.is_finite() && *p >= 0.0));
    // Zero-initialized trajectory head: the untrained model passes keypoints through.
    assert_eq!(a.coords, kp.coords());
    let (short, _) = random_inputs(&mut rng, 4, 3);
    assert!(model.forward(&short, Some(&feats)).is_err());
}

fn synthetic_sample(seed: u64, frames: usize) -> FusionSample {
    let clip = generate_synthetic_clip(&SyntheticSpec { seed, frames, ..Default::default() }, "c").unwrap();
    let feats = align_features(&MelStub::default().extract(&clip.audio).unwrap(), frames).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = clip
        .trajectory
        .coords()
        .iter()
        .map(|v| v + rng.random_range(-1.5f32..1.5))
        .collect();
    FusionSample {
        keypoints: clip.trajectory.with_coords(noisy).unwrap(),
        features: Some(feats),
        target: clip.trajectory,
        pitch: clip.pitch,
    }
}

#[test]
fn one_clip_training_halves_the_loss() {
    let sample = synthetic_sample(61, 40);
    let mut model = FusionModel::build(&FusionConfig { width: 32, ..small(40) }).unwrap();
    let cfg = FusionTrainConfig { epochs: 300, learning_rate: 2e-3, ..Default::default() };
    let report = train_fusion(&mut model, std::slice::from_ref(&sample), &[], &cfg).unwrap();
    let first = report.step_losses[0];
    let last = report.epochs.last().unwrap().train_loss;
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn fixed_seed_reproduces_fusion_training() {
    let data = vec![synthetic_sample(62, 30), synthetic_sample(63, 30)];
    let run = || {
        let mut model = FusionModel::build(&small(40)).unwrap();
        let cfg = FusionTrainConfig { epochs: 3, window: Some(16), seed: 8, ..Default::default() };
        train_fusion(&mut model, &data, &data[..1], &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.step_losses, b.step_losses);
}
