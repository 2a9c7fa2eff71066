//! Finite-difference checks of whole-model backpropagation in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const H: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn arch(act: Activation, dense_act: Activation, kernels: Vec<usize>) -> Architecture {
    Architecture {
        input_shape: [2, 6, 6],
        num_classes: 3,
        modules: vec![
            ModuleArch { kernels, filters: 3, pool: 2 },
            ModuleArch { kernels: vec![1], filters: 3, pool: 1 },
        ],
        highway_activation: act,
        dense_units: vec![5, 4],
        dense_activation: dense_act,
    }
}

fn loss(model: &mut Model<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let logits = model.forward(x.clone(), Mode::Train).unwrap();
    softmax_cross_entropy(&logits, labels).unwrap().0
}

/// Perturbs every parameter and compares against the accumulated gradient.
fn check_model(act: Activation, dense_act: Activation, kernels: Vec<usize>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::<f64>::from_architecture(arch(act, dense_act, kernels), &mut rng).unwrap();
    // Nudge gate biases towards 0 so both highway paths carry gradient.
    for layer in model.layers_mut() {
        if let Layer::Highway(h) = layer {
            h.params.gate_bias.fill(0.3);
        }
    }
    let x = Tensor::from_fn(&[3, 2, 6, 6], |_| rng.gen_range(-1.0..1.0));
    let labels = [0, 2, 1];
    let logits = model.forward(x.clone(), Mode::Train).unwrap();
    let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
    model.zero_grad();
    model.backward(grad).unwrap();

    let mut analytic = Vec::new();
    for layer in model.layers_mut() {
        layer.for_each_param(|_, g, _, _| analytic.extend_from_slice(g));
    }
    let total = analytic.len();
    let mut worst = 0.0f64;
    for idx in 0..total {
        let mut eval = |delta: f64| {
            let mut seen = 0;
            for layer in model.layers_mut() {
                layer.for_each_param(|v, _, _, _| {
                    if idx >= seen && idx < seen + v.len() {
                        v[idx - seen] += delta;
                    }
                    seen += v.len();
                });
            }
            loss(&mut model, &x, &labels)
        };
        let plus = eval(H);
        let minus = eval(-2.0 * H);
        eval(H);
        let numeric = (plus - minus) / (2.0 * H);
        worst = worst.max(rel_err(analytic[idx], numeric));
    }
    worst
}

#[test]
fn model_gradients_elu() {
    let e = check_model(Activation::Elu, Activation::Softsign, vec![3, 2], 1);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn model_gradients_prelu() {
    let e = check_model(Activation::Prelu, Activation::Prelu, vec![2], 2);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn model_gradients_softsign() {
    let e = check_model(Activation::Softsign, Activation::Elu, vec![1, 1], 3);
    assert!(e < 1e-4, "{e}");
}
