//! Adam, the step learning-rate schedule and the fragment-summed loss.

use fragnet_tensor::ops::{self, Target};
use fragnet_tensor::{Scalar, Tensor};

use crate::blocks::ParameterSet;
use crate::error::{FragError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers, one pair per trainable parameter in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub config: AdamConfig,
    pub t: u64,
    pub names: Vec<String>,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParameterSet<T>, config: AdamConfig) -> Self {
        let (mut names, mut m, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (name, p) in params.trainable() {
            names.push(name.to_string());
            m.push(vec![T::zero(); p.len()]);
            v.push(vec![T::zero(); p.len()]);
        }
        AdamState { config, t: 0, names, m, v }
    }

    fn check(&self, params: &ParameterSet<T>) -> Result<()> {
        let trainable: Vec<_> = params.trainable().collect();
        let ok = trainable.len() == self.names.len()
            && trainable
                .iter()
                .zip(&self.names)
                .zip(&self.m)
                .all(|(((name, p), expect), m)| name == expect && p.len() == m.len());
        if ok {
            Ok(())
        } else {
            Err(FragError::Invalid("optimizer state does not match the parameter set".into()))
        }
    }
}

/// One bias-corrected Adam update of every trainable parameter, then the
/// gradients are cleared. Parameters without a gradient are treated as
/// having a zero gradient.
pub fn adam_step<T: Scalar>(params: &ParameterSet<T>, state: &mut AdamState<T>, rate: f64) -> Result<()> {
    state.check(params)?;
    let grads: Vec<Option<Vec<T>>> = params.trainable().map(|(_, p)| p.grad()).collect();
    for ((name, _), g) in params.trainable().zip(&grads) {
        if let Some(g) = g {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(FragError::NonFinite(format!(
                    "gradient of {name} is {} at index {i} (step {})",
                    g[i],
                    state.t + 1
                )));
            }
        }
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (k, ((_, p), g)) in params.trainable().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        let mut data = p.data_mut();
        for i in 0..data.len() {
            let gi = g.as_ref().map_or(0.0, |g| g[i].as_f64());
            let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * gi;
            let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * gi * gi;
            m[i] = T::of(mi);
            v[i] = T::of(vi);
            let update = rate * (mi / c1) / ((vi / c2).sqrt() + eps);
            data[i] = T::of(data[i].as_f64() - update);
        }
        drop(data);
        p.zero_grad();
    }
    Ok(())
}

/// Piecewise-constant learning rate: `(first_epoch, rate)` pairs in
/// increasing epoch order, the first starting at epoch 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    steps: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn new(steps: Vec<(usize, f64)>) -> Result<Self> {
        if steps.first().map(|s| s.0) != Some(0) {
            return Err(FragError::Config("learning-rate schedule must start at epoch 0".into()));
        }
        if steps.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(FragError::Config("learning-rate schedule epochs must increase".into()));
        }
        if steps.iter().any(|s| !(s.1 > 0.0 && s.1.is_finite())) {
            return Err(FragError::Config("learning rates must be positive".into()));
        }
        Ok(LrSchedule { steps })
    }

    /// 1e-4, halved at epochs 10 and 20, 1e-5 for the last 5 of 30 epochs.
    pub fn paper() -> Self {
        LrSchedule::new(vec![(0, 1e-4), (10, 5e-5), (20, 2.5e-5), (25, 1e-5)]).expect("valid schedule")
    }

    pub fn constant(rate: f64) -> Result<Self> {
        LrSchedule::new(vec![(0, rate)])
    }

    pub fn steps(&self) -> &[(usize, f64)] {
        &self.steps
    }

    /// Parses `0:1e-4,10:5e-5`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || FragError::Config(format!("bad learning-rate schedule {text:?}, expected epoch:rate,..."));
        let steps = text
            .split(',')
            .map(|part| {
                let (e, r) = part.trim().split_once(':').ok_or_else(bad)?;
                Ok((e.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
            })
            .collect::<Result<Vec<_>>>()?;
        LrSchedule::new(steps)
    }

    pub fn format(&self) -> String {
        self.steps
            .iter()
            .map(|(e, r)| format!("{e}:{r:e}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn rate(&self, epoch: usize) -> f64 {
        self.steps.iter().rev().find(|s| s.0 <= epoch).expect("starts at 0").1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub epochs: usize,
    /// Words per mini-batch.
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables intermediate
    /// checkpoints).
    pub checkpoint_every: usize,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            epochs: 30,
            batch_size: 10,
            schedule: LrSchedule::paper(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(FragError::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(FragError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

pub fn lr_at(plan: &TrainPlan, epoch: usize) -> Result<f64> {
    if epoch >= plan.epochs {
        return Err(FragError::Config(format!(
            "epoch {epoch} outside the {}-epoch plan",
            plan.epochs
        )));
    }
    Ok(plan.schedule.rate(epoch))
}

/// Mean over the `batch` words of each word's summed per-fragment
/// cross-entropy. `logits` rows are fragment-major (`n * batch + b`).
pub fn word_loss<T: Scalar>(logits: &Tensor<T>, fragments: usize, labels: &[usize]) -> Result<Tensor<T>> {
    let batch = labels.len();
    if fragments == 0 || batch == 0 || logits.shape().first() != Some(&(fragments * batch)) {
        return Err(FragError::Invalid(format!(
            "{fragments} fragments x {batch} words do not match logits {:?}",
            logits.shape()
        )));
    }
    let targets: Vec<usize> = (0..fragments).flat_map(|_| labels.iter().copied()).collect();
    let (losses, _) = ops::softmax_cross_entropy(logits, Target::Classes(&targets))?;
    Ok(ops::scale(&ops::sum(&losses), T::of(1.0 / batch as f64)))
}
