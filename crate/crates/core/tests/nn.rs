mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reclaim_core::nn::{Activation, AdamState, CopyMode, DenseLayer, DenseNet, Gradients, Loss};

use common::{gradient_check, straight_line_forward};

const RELU3: [Activation; 3] = [Activation::Relu, Activation::Relu, Activation::Linear];

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn actor_and_critic_shapes_pass_gradient_check() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for dims in [[10, 16, 16, 1], [11, 32, 32, 1]] {
            let net = DenseNet::new(&dims, &RELU3, &mut rng).unwrap();
            let x = random_vec(&mut rng, dims[0]);
            let worst = gradient_check(&net, &x, &[1.0], 1e-5);
            assert!(worst < 1e-4, "seed {seed} dims {dims:?}: rel err {worst}");
        }
    }
}

#[test]
fn multi_output_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = DenseNet::new(&[4, 6, 3], &[Activation::Relu, Activation::Linear], &mut rng).unwrap();
    let x = random_vec(&mut rng, 4);
    assert!(gradient_check(&net, &x, &[0.3, -1.2, 0.7], 1e-5) < 1e-4);
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = DenseNet::new(&[11, 32, 32, 1], &RELU3, &mut rng).unwrap();
    let x = random_vec(&mut rng, 11);
    let (_, input_grad) = net.backward(&x, &[1.0]).unwrap();
    let h = 1e-5;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let fd = (net.forward(&xp).unwrap()[0] - net.forward(&xm).unwrap()[0]) / (2.0 * h);
        assert!(common::relative_error(input_grad[i], fd) < 1e-4);
    }
}

#[test]
fn forward_matches_straight_line_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let net = DenseNet::new(&[10, 16, 16, 1], &RELU3, &mut rng).unwrap();
    for _ in 0..100 {
        let x = random_vec(&mut rng, 10);
        let a = net.forward(&x).unwrap()[0];
        let b = straight_line_forward(&net, &x)[0];
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn identity_and_relu_kill() {
    let mut id = DenseLayer::zeros(3, 3, Activation::Linear);
    let mut neg = DenseLayer::zeros(3, 3, Activation::Relu);
    for i in 0..3 {
        id.weights[i * 3 + i] = 1.0;
        neg.weights[i * 3 + i] = -1.0;
    }
    let x = [0.2, 0.5, 0.9];
    assert_eq!(DenseNet::from_layers(vec![id]).unwrap().forward(&x).unwrap(), x);
    assert_eq!(DenseNet::from_layers(vec![neg]).unwrap().forward(&x).unwrap(), [0.0; 3]);
}

#[test]
fn linear_layer_weight_gradient_is_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = DenseNet::new(&[3, 2], &[Activation::Linear], &mut rng).unwrap();
    let x = [0.5, -1.5, 2.0];
    let up = [0.25, -3.0];
    let (g, _) = net.backward(&x, &up).unwrap();
    for o in 0..2 {
        for i in 0..3 {
            assert_eq!(g.layers[0].weights[o * 3 + i], up[o] * x[i]);
        }
        assert_eq!(g.layers[0].bias[o], up[o]);
    }
    let (zero, input) = net.backward(&x, &[0.0, 0.0]).unwrap();
    assert!(zero.flatten().iter().all(|v| *v == 0.0));
    assert!(input.iter().all(|v| *v == 0.0));
}

#[test]
fn positive_homogeneity_without_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = DenseNet::new(&[10, 16, 16, 1], &RELU3, &mut rng).unwrap();
    let layers: Vec<DenseLayer> = net
        .layers()
        .iter()
        .map(|l| DenseLayer {
            bias: vec![0.0; l.outputs],
            ..l.clone()
        })
        .collect();
    net = DenseNet::from_layers(layers).unwrap();
    for c in [0.5, 2.0, 7.25] {
        let x = random_vec(&mut rng, 10);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = net.forward(&cx).unwrap()[0];
        let b = c * net.forward(&x).unwrap()[0];
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net = DenseNet::new(&[4, 5, 1], &[Activation::Relu, Activation::Linear], &mut rng).unwrap();
    let before: Vec<f64> = (0..net.param_count()).map(|i| *net.param_mut(i).unwrap()).collect();
    let (grads, _) = net.backward(&[0.3, -0.2, 0.9, 0.1], &[1.0]).unwrap();
    let g = grads.flatten();
    let mut adam = AdamState::new(&net, 0.001);
    adam.apply(&mut net, &grads).unwrap();
    for i in 0..net.param_count() {
        let step = *net.param_mut(i).unwrap() - before[i];
        let expected = if g[i] == 0.0 { 0.0 } else { -0.001 * g[i].signum() };
        assert!((step - expected).abs() < 1e-6, "param {i}: {step} vs {expected}");
    }
}

#[test]
fn adam_zero_gradient_and_nonfinite_rejection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = DenseNet::new(&[3, 4, 1], &[Activation::Relu, Activation::Linear], &mut rng).unwrap();
    let snapshot = net.clone();
    let mut adam = AdamState::new(&net, 0.001);
    let zeros = Gradients::zeros_like(&net);
    adam.apply(&mut net, &zeros).unwrap();
    assert_eq!(net, snapshot);
    assert_eq!(adam.step, 1);

    let mut bad = Gradients::zeros_like(&net);
    bad.layers[0].weights[0] = f64::NAN;
    assert!(adam.apply(&mut net, &bad).is_err());
    assert_eq!(net, snapshot);
    assert_eq!(adam.step, 1);
}

#[test]
fn adam_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = DenseNet::new(&[3, 4, 1], &[Activation::Relu, Activation::Linear], &mut rng).unwrap();
    let (grads, _) = net.backward(&[0.1, 0.2, 0.3], &[1.0]).unwrap();
    let (mut a, mut b) = (net.clone(), net.clone());
    let (mut sa, mut sb) = (AdamState::new(&a, 0.001), AdamState::new(&b, 0.001));
    for _ in 0..5 {
        sa.apply(&mut a, &grads).unwrap();
        sb.apply(&mut b, &grads).unwrap();
    }
    assert_eq!(a, b);
}

fn batch_mae(net: &DenseNet, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| Loss::Mae.value(net.forward(x).unwrap()[0], *y))
        .sum::<f64>()
        / xs.len() as f64
}

#[test]
fn adam_reduces_mae_on_regression_batches() {
    let mut improved = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = DenseNet::new(&[10, 16, 16, 1], &RELU3, &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..32).map(|_| random_vec(&mut rng, 10)).collect();
        let ys: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut adam = AdamState::new(&net, 0.001);
        let mut losses = vec![batch_mae(&net, &xs, &ys)];
        for _ in 0..50 {
            let mut g = Gradients::zeros_like(&net);
            for (x, y) in xs.iter().zip(&ys) {
                let trace = net.forward_trace(x).unwrap();
                let d = Loss::Mae.gradient(trace.output()[0], *y) / xs.len() as f64;
                net.backward_into(&trace, &[d], &mut g).unwrap();
            }
            adam.apply(&mut net, &g).unwrap();
            losses.push(batch_mae(&net, &xs, &ys));
        }
        if losses.windows(2).all(|w| w[1] < w[0]) {
            improved += 1;
        }
    }
    assert!(improved >= 45, "strictly decreasing in {improved}/50 seeds");
}

#[test]
fn hard_copy_is_by_value_and_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut source = DenseNet::new(&[10, 16, 16, 1], &RELU3, &mut rng).unwrap();
    let mut target = DenseNet::new(&[10, 16, 16, 1], &RELU3, &mut rng).unwrap();
    target.copy_from(&source, CopyMode::Hard).unwrap();
    let x = random_vec(&mut rng, 10);
    assert_eq!(source.forward(&x).unwrap(), target.forward(&x).unwrap());
    let copied = target.clone();
    target.copy_from(&source, CopyMode::Hard).unwrap();
    assert_eq!(target, copied);
    *source.param_mut(0).unwrap() += 1.0;
    assert_eq!(target, copied);

    let wrong = DenseNet::new(&[11, 32, 32, 1], &RELU3, &mut rng).unwrap();
    assert!(target.copy_from(&wrong, CopyMode::Hard).is_err());
}

#[test]
fn checkpoint_round_trip_reproduces_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let net = DenseNet::new(&[11, 32, 32, 1], &RELU3, &mut rng).unwrap();
    let back = DenseNet::from_checkpoint(&net.to_checkpoint()).unwrap();
    for _ in 0..20 {
        let x = random_vec(&mut rng, 11);
        assert!((net.forward(&x).unwrap()[0] - back.forward(&x).unwrap()[0]).abs() <= 1e-12);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = DenseNet::new(&[10, 16, 16, 1], &RELU3, &mut rng).unwrap();
    assert!(net.forward(&[0.0; 9]).is_err());
    assert!(net.backward(&[0.0; 10], &[1.0, 2.0]).is_err());
}
