//! End-to-end gradients of the full network against central differences.
//!
//! Every parameter tensor is probed at one random element. The step is 1e-6
//! and the tolerance mixes absolute and relative error: conv biases feeding a
//! train-mode batch norm have a true gradient of zero, and a larger step moves
//! enough activations across ReLU and max-pool kinks to bias the quotient.

mod common;

use fragnet::arch::{Network, NetworkConfig};
use fragnet::optim::word_loss;
use fragnet::Mode;
use fragnet_tensor::gradcheck::{check_gradients, DEFAULT_FLOOR};
use rand::Rng;

#[test]
fn fragnet16_gradients_match_central_differences() {
    let config = NetworkConfig::fragnet(16, 4);
    let (words, _) = common::synthetic(4, 1, 1, 23, &config);
    let (image, labels) = words.batch::<f64>(&[1]);
    let net = Network::<f64>::new(config.clone(), 21).unwrap();
    let mut r = common::rng(22);
    let std = (2.0 / config.classifier_input_dim() as f64).sqrt();
    for v in net.params().get("classifier.weight").unwrap().data_mut().iter_mut() {
        *v = r.random_range(-1.0..1.0) * std * 3f64.sqrt();
    }
    let named: Vec<(String, _)> = net.params().trainable().map(|(n, t)| (n.to_string(), t.clone())).collect();
    let leaves: Vec<_> = named.iter().map(|(_, t)| t.clone()).collect();
    let coords: Vec<(usize, usize)> = leaves.iter().enumerate().map(|(t, l)| (t, r.random_range(0..l.len()))).collect();
    let rep = check_gradients(&leaves, &coords, 1e-6, DEFAULT_FLOOR, || {
        let out = net.forward(&image, Mode::Train).unwrap();
        Ok(word_loss(&out.logits, out.fragments, &labels).unwrap())
    })
    .unwrap();
    for e in &rep.entries {
        let tol = 1e-6 + 1e-3 * e.numeric.abs();
        assert!(
            (e.analytic - e.numeric).abs() <= tol,
            "{}[{}]: analytic {:e}, numeric {:e}",
            named[e.tensor].0,
            e.index,
            e.analytic,
            e.numeric
        );
    }
}
