//! (P)-CBR blocks and the named parameter registry.

use fragnet_tensor::ops::{self, Mode};
use fragnet_tensor::{Scalar, Tensor};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::arch::NetworkConfig;
use crate::error::{FragError, Result};

/// Ordered map from parameter path (e.g. `pyramid.block2.conv1.kernel`) to
/// tensor. Insertion order is the iteration order, which fixes checkpoint
/// layout and optimizer state order.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet<T: Scalar = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        ParameterSet {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(FragError::Invalid(format!("duplicate parameter name {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub(crate) fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| FragError::Config(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Parameters updated by the optimizer (running statistics excluded).
    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.iter().filter(|(_, t)| t.tracks_grad())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn trainable_element_count(&self) -> usize {
        self.trainable().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&self) {
        self.tensors.values().for_each(Tensor::zero_grad);
    }

    /// Deep copy in another precision; tracking flags are preserved.
    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast::<U>()))
                .collect(),
        }
    }

    /// Deep copy sharing no storage with `self`.
    pub fn deep_clone(&self) -> Self {
        self.cast::<T>()
    }
}

/// One max-pool(optional) -> conv 3x3 -> batchnorm -> ReLU unit.
#[derive(Debug, Clone)]
pub struct CbrBlock<T: Scalar = f32> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub leading_pool: bool,
}

impl<T: Scalar> CbrBlock<T> {
    pub(crate) fn from_params(params: &ParameterSet<T>, prefix: &str, leading_pool: bool) -> Result<Self> {
        let get = |suffix: &str| params.require(&format!("{prefix}.{suffix}")).cloned();
        Ok(CbrBlock {
            kernel: get("kernel")?,
            bias: get("bias")?,
            gamma: get("gamma")?,
            beta: get("beta")?,
            running_mean: get("running_mean")?,
            running_var: get("running_var")?,
            leading_pool,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[3]
    }
}

pub fn cbr_forward<T: Scalar>(block: &CbrBlock<T>, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    let pooled;
    let x = if block.leading_pool {
        pooled = ops::maxpool2x2(input)?;
        &pooled
    } else {
        input
    };
    let y = ops::conv2d(x, &block.kernel, &block.bias)?;
    let y = ops::batchnorm(&y, &block.gamma, &block.beta, &block.running_mean, &block.running_var, mode)?;
    Ok(ops::relu(&y))
}

/// He-style initialization: conv weights ~ N(0, 2 / fan_in), biases and
/// beta zero, gamma one, running statistics (0, 1). The classifier starts at
/// zero so step-0 predictions are uniform over writers.
pub fn init_parameters<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<ParameterSet<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    for layer in config.conv_layers() {
        let fan_in = 9 * layer.in_channels;
        let kernel = normal(&mut rng, 9 * layer.in_channels * layer.out_channels, (2.0 / fan_in as f64).sqrt());
        let c = layer.out_channels;
        let p = &layer.name;
        params.insert(format!("{p}.kernel"), Tensor::parameter([layer.in_channels, 3, 3, c], kernel)?)?;
        params.insert(format!("{p}.bias"), Tensor::parameter([c], vec![T::zero(); c])?)?;
        params.insert(format!("{p}.gamma"), Tensor::parameter([c], vec![T::one(); c])?)?;
        params.insert(format!("{p}.beta"), Tensor::parameter([c], vec![T::zero(); c])?)?;
        params.insert(format!("{p}.running_mean"), Tensor::zeros([c]))?;
        params.insert(format!("{p}.running_var"), Tensor::full([c], T::one()))?;
    }
    let (d, m) = (config.classifier_input_dim(), config.writers);
    params.insert("classifier.weight", Tensor::parameter([d, m], vec![T::zero(); d * m])?)?;
    params.insert("classifier.bias", Tensor::parameter([m], vec![T::zero(); m])?)?;
    Ok(params)
}

fn normal<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<T> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z * std)
        })
        .collect()
}
