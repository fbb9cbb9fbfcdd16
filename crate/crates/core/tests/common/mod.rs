#![allow(dead_code)]

use fragnet::arch::NetworkConfig;
use fragnet::data::synth::{synthesize, SynthConfig, SynthWord};
use fragnet::data::WordSet;
use fragnet::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn word_set(words: &[SynthWord], config: &NetworkConfig) -> WordSet {
    let mut set = WordSet::empty(config.input_height, config.input_width);
    for w in words {
        set.push(&w.image, w.writer, &w.page_id, Some(w.text.clone())).unwrap();
    }
    set
}

/// Train and test sets of a synthetic corpus at the network's input size.
pub fn synthetic(writers: usize, train: usize, test: usize, seed: u64, config: &NetworkConfig) -> (WordSet, WordSet) {
    let data = synthesize(&SynthConfig::new(writers, train, test, seed)).unwrap();
    (word_set(&data.train, config), word_set(&data.test, config))
}

/// FragNet or WordImgNet with reduced stage widths, for fast tests.
pub fn narrow(mut config: NetworkConfig) -> NetworkConfig {
    config.widths = [4, 8, 8, 16];
    config
}

pub fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| T::of(rng.random_range(0.0..1.0))).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
