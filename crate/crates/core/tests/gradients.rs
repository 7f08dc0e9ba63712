//! Analytic gradients against central finite differences.

mod common;

use common::*;
use isomax::heads::{IsoMaxHead, LogMode, SoftMaxHead};
use isomax::{FeatureExtractor, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

/// Objective `Σ g ⊙ f(x)` so that `g` is the upstream gradient.
fn weighted_output(net: &FeatureExtractor, x: &Tensor, g: &Tensor) -> f64 {
    let y = net.infer(x).unwrap();
    y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn extractor_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mut net = FeatureExtractor::random(&[3, 6, 4], &mut rng).unwrap();
        let x = random_tensor(&mut rng, vec![5, 3], 2.0);
        let g = random_tensor(&mut rng, vec![5, 4], 1.0);
        net.forward(&x).unwrap();
        let grads = net.backward(&g).unwrap();

        for l in 0..net.layers().len() {
            for which in 0..2 {
                let analytic = if which == 0 {
                    grads.layers[l].weights.data().to_vec()
                } else {
                    grads.layers[l].bias.data().to_vec()
                };
                for (i, &a) in analytic.iter().enumerate() {
                    let mut probe = net.clone();
                    let orig = {
                        let layer = &probe.layers()[l];
                        if which == 0 {
                            layer.weights.data()[i]
                        } else {
                            layer.bias.data()[i]
                        }
                    };
                    let mut eval = |v: f64| {
                        let layer = &mut probe.layers_mut()[l];
                        let t = if which == 0 {
                            &mut layer.weights
                        } else {
                            &mut layer.bias
                        };
                        t.data_mut()[i] = v;
                        weighted_output(&probe, &x, &g)
                    };
                    let numeric = (eval(orig + H) - eval(orig - H)) / (2.0 * H);
                    let err = relative_error(a, numeric);
                    worst = worst.max(err);
                    assert!(err < 1e-5, "layer {l} param {which}/{i}: {a} vs {numeric}");
                }
            }
        }

        let mut xd = x.data().to_vec();
        for (i, &a) in grads.inputs.data().iter().enumerate() {
            let numeric = central_difference(&mut xd, i, H, |v| {
                weighted_output(&net, &Tensor::new(vec![5, 3], v.to_vec()).unwrap(), &g)
            });
            assert!(
                relative_error(a, numeric) < 1e-5,
                "input {i}: {a} vs {numeric}"
            );
        }
    }
    assert!(worst < 1e-5);
}

fn check_isomax(rng: &mut ChaCha8Rng, mode: LogMode) {
    let (b, c, f) = (
        rng.random_range(1..4),
        rng.random_range(2..6),
        rng.random_range(1..5),
    );
    let head = random_isomax(rng, c, f);
    let x = random_tensor(rng, vec![b, f], 2.0);
    let targets: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
    let r = head.loss_with(&x, &targets, mode).unwrap();

    let mut xd = x.data().to_vec();
    for (i, &a) in r.grad_features.data().iter().enumerate() {
        let n = central_difference(&mut xd, i, H, |v| {
            head.loss_with(
                &Tensor::new(vec![b, f], v.to_vec()).unwrap(),
                &targets,
                mode,
            )
            .unwrap()
            .loss
        });
        assert!(relative_error(a, n) < 1e-4, "feature {i}: {a} vs {n}");
    }
    let mut pd = head.prototypes.data().to_vec();
    for (i, &a) in r.grad_params[0].data().iter().enumerate() {
        let n = central_difference(&mut pd, i, H, |v| {
            let h = IsoMaxHead::with_prototypes(
                Tensor::new(vec![c, f], v.to_vec()).unwrap(),
                head.entropic_scale,
            )
            .unwrap();
            h.loss_with(&x, &targets, mode).unwrap().loss
        });
        assert!(relative_error(a, n) < 1e-4, "prototype {i}: {a} vs {n}");
    }
}

fn check_softmax(rng: &mut ChaCha8Rng) {
    let (b, c, f) = (
        rng.random_range(1..4),
        rng.random_range(2..6),
        rng.random_range(1..5),
    );
    let head = random_softmax(rng, c, f);
    let x = random_tensor(rng, vec![b, f], 2.0);
    let targets: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
    let r = head.loss(&x, &targets).unwrap();

    let mut xd = x.data().to_vec();
    for (i, &a) in r.grad_features.data().iter().enumerate() {
        let n = central_difference(&mut xd, i, H, |v| {
            head.loss(&Tensor::new(vec![b, f], v.to_vec()).unwrap(), &targets)
                .unwrap()
                .loss
        });
        assert!(relative_error(a, n) < 1e-4, "feature {i}: {a} vs {n}");
    }
    let mut wd = head.weights.data().to_vec();
    for (i, &a) in r.grad_params[0].data().iter().enumerate() {
        let n = central_difference(&mut wd, i, H, |v| {
            let h = SoftMaxHead::new(
                Tensor::new(vec![c, f], v.to_vec()).unwrap(),
                head.biases.clone(),
            )
            .unwrap();
            h.loss(&x, &targets).unwrap().loss
        });
        assert!(relative_error(a, n) < 1e-4, "weight {i}: {a} vs {n}");
    }
    let mut bd = head.biases.data().to_vec();
    for (i, &a) in r.grad_params[1].data().iter().enumerate() {
        let n = central_difference(&mut bd, i, H, |v| {
            let h = SoftMaxHead::new(
                head.weights.clone(),
                Tensor::new(vec![c], v.to_vec()).unwrap(),
            )
            .unwrap();
            h.loss(&x, &targets).unwrap().loss
        });
        assert!(relative_error(a, n) < 1e-4, "bias {i}: {a} vs {n}");
    }
}

#[test]
fn isomax_gradients_sequential() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        check_isomax(&mut rng, LogMode::Sequential);
    }
}

#[test]
fn isomax_gradients_fused() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        check_isomax(&mut rng, LogMode::Fused);
    }
}

#[test]
fn softmax_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        check_softmax(&mut rng);
    }
}

#[test]
fn isomax_gradient_finite_at_prototype() {
    // Zero prototypes and a zero feature: the stabilized distance keeps it finite.
    let head = IsoMaxHead::new(3, 4, 10.0).unwrap();
    let r = head.loss(&Tensor::zeros(vec![2, 3]), &[0, 3]).unwrap();
    assert!(r.grad_features.is_finite());
    assert!(r.grad_params[0].is_finite());
}
