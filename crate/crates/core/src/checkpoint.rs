//! Single-file checkpoints: a text header followed by raw little-endian
//! `f32` tensors.
//!
//! ```text
//! fragnet-checkpoint
//! format_version=1
//! config.kind=fragnet
//! ...
//! tensors=98
//! tensor pyramid.block1.conv1.kernel 1,3,3,64 0 576
//! ...
//! end_header
//! <payload>
//! ```
//!
//! Tensor lines give name, shape, byte offset into the payload and element
//! count. Optimizer moments are stored as `adam.m/<param>` and
//! `adam.v/<param>`. Values are always written as `f32`, so a 64-bit network
//! is rounded on save.

use std::collections::BTreeMap;
use std::path::Path;

use fragnet_tensor::Scalar;

use crate::arch::{ArchKind, Network, NetworkConfig};
use crate::error::{FragError, Result};
use crate::optim::{AdamConfig, AdamState, LrSchedule, TrainPlan};
use crate::train::Trainer;

pub const MAGIC: &str = "fragnet-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub plan: TrainPlan,
    /// Epochs completed.
    pub epoch: usize,
    pub step: u64,
    pub adam_t: u64,
    pub adam: AdamConfig,
    /// Parameters in registry order, then optimizer moments.
    pub tensors: Vec<TensorEntry>,
}

fn to_f32<T: Scalar>(v: &[T]) -> Vec<f32> {
    v.iter().map(|x| x.as_f64() as f32).collect()
}

impl Checkpoint {
    pub fn from_trainer<T: Scalar>(trainer: &Trainer<T>) -> Self {
        let mut tensors: Vec<TensorEntry> = trainer
            .network
            .params()
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: to_f32(&t.data()),
            })
            .collect();
        let adam = &trainer.adam;
        for (prefix, moments) in [("adam.m/", &adam.m), ("adam.v/", &adam.v)] {
            for (name, m) in adam.names.iter().zip(moments) {
                let shape = trainer.network.params().get(name).expect("moment has a parameter").shape().to_vec();
                tensors.push(TensorEntry {
                    name: format!("{prefix}{name}"),
                    shape,
                    data: to_f32(m),
                });
            }
        }
        Checkpoint {
            config: trainer.network.config().clone(),
            plan: trainer.plan.clone(),
            epoch: trainer.epoch,
            step: trainer.step,
            adam_t: adam.t,
            adam: adam.config,
            tensors,
        }
    }

    fn header(&self) -> String {
        let c = &self.config;
        let p = &self.plan;
        let mut h = format!("{MAGIC}\nformat_version={FORMAT_VERSION}\n");
        let widths: Vec<String> = c.widths.iter().map(|w| w.to_string()).collect();
        for (k, v) in [
            ("config.kind", c.kind.name().to_string()),
            ("config.fragment_size", c.fragment_size.to_string()),
            ("config.base_stride", c.base_stride.to_string()),
            ("config.input_height", c.input_height.to_string()),
            ("config.input_width", c.input_width.to_string()),
            ("config.widths", widths.join(",")),
            ("config.writers", c.writers.to_string()),
            ("plan.epochs", p.epochs.to_string()),
            ("plan.batch_size", p.batch_size.to_string()),
            ("plan.schedule", p.schedule.format()),
            ("plan.seed", p.seed.to_string()),
            ("plan.checkpoint_every", p.checkpoint_every.to_string()),
            ("epoch", self.epoch.to_string()),
            ("step", self.step.to_string()),
            ("adam.t", self.adam_t.to_string()),
            ("adam.beta1", self.adam.beta1.to_string()),
            ("adam.beta2", self.adam.beta2.to_string()),
            ("adam.eps", self.adam.eps.to_string()),
            ("tensors", self.tensors.len().to_string()),
        ] {
            h.push_str(&format!("{k}={v}\n"));
        }
        let mut offset = 0;
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            h.push_str(&format!("tensor {} {} {offset} {}\n", t.name, dims.join(","), t.data.len()));
            offset += 4 * t.data.len();
        }
        h.push_str("end_header\n");
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header().into_bytes();
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| FragError::Invalid(format!("malformed checkpoint: {m}"));
        let end = b"end_header\n";
        let split = bytes
            .windows(end.len())
            .position(|w| w == end)
            .ok_or_else(|| bad("no end_header line".into()))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8".into()))?;
        let payload = &bytes[split + end.len()..];
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing magic line".into()));
        }
        let mut keys = BTreeMap::new();
        let mut entries = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("tensor ") {
                let f: Vec<&str> = rest.split(' ').collect();
                if f.len() != 4 {
                    return Err(bad(format!("tensor line {line:?}")));
                }
                let shape = f[1]
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("shape in {line:?}")))?;
                let offset: usize = f[2].parse().map_err(|_| bad(format!("offset in {line:?}")))?;
                let len: usize = f[3].parse().map_err(|_| bad(format!("length in {line:?}")))?;
                if shape.iter().product::<usize>() != len || offset + 4 * len > payload.len() {
                    return Err(bad(format!("tensor {} does not fit the payload", f[0])));
                }
                let data = payload[offset..offset + 4 * len]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
                entries.push(TensorEntry {
                    name: f[0].to_string(),
                    shape,
                    data,
                });
            } else {
                let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {line:?}")))?;
                keys.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| keys.get(k).ok_or_else(|| bad(format!("missing {k}")));
        fn num<N: std::str::FromStr>(k: &str, v: &str) -> Result<N> {
            v.parse()
                .map_err(|_| FragError::Invalid(format!("malformed checkpoint: {k}={v}")))
        }
        let version: u32 = num("format_version", get("format_version")?)?;
        if version != FORMAT_VERSION {
            return Err(FragError::Config(format!(
                "checkpoint format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let widths: Vec<usize> = get("config.widths")?
            .split(',')
            .map(|w| num("config.widths", w))
            .collect::<Result<_>>()?;
        let config = NetworkConfig {
            kind: ArchKind::parse(get("config.kind")?)?,
            fragment_size: num("config.fragment_size", get("config.fragment_size")?)?,
            base_stride: num("config.base_stride", get("config.base_stride")?)?,
            input_height: num("config.input_height", get("config.input_height")?)?,
            input_width: num("config.input_width", get("config.input_width")?)?,
            widths: widths
                .try_into()
                .map_err(|_| bad("config.widths needs 4 values".into()))?,
            writers: num("config.writers", get("config.writers")?)?,
        };
        config.validate()?;
        let plan = TrainPlan {
            epochs: num("plan.epochs", get("plan.epochs")?)?,
            batch_size: num("plan.batch_size", get("plan.batch_size")?)?,
            schedule: LrSchedule::parse(get("plan.schedule")?)?,
            seed: num("plan.seed", get("plan.seed")?)?,
            checkpoint_every: num("plan.checkpoint_every", get("plan.checkpoint_every")?)?,
        };
        let count: usize = num("tensors", get("tensors")?)?;
        if count != entries.len() {
            return Err(bad(format!("header announces {count} tensors, found {}", entries.len())));
        }
        Ok(Checkpoint {
            config,
            plan,
            epoch: num("epoch", get("epoch")?)?,
            step: num("step", get("step")?)?,
            adam_t: num("adam.t", get("adam.t")?)?,
            adam: AdamConfig {
                beta1: num("adam.beta1", get("adam.beta1")?)?,
                beta2: num("adam.beta2", get("adam.beta2")?)?,
                eps: num("adam.eps", get("adam.eps")?)?,
            },
            tensors: entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| FragError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| FragError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    /// Fails unless the stored configuration equals `expected`.
    pub fn expect_config(&self, expected: &NetworkConfig) -> Result<()> {
        if &self.config != expected {
            return Err(FragError::Config(format!(
                "checkpoint holds {} with {} writers, expected {} with {} writers",
                self.config.label(),
                self.config.writers,
                expected.label(),
                expected.writers
            )));
        }
        Ok(())
    }

    fn entry(&self, name: &str) -> Result<&TensorEntry> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| FragError::Config(format!("checkpoint lacks tensor {name}")))
    }

    pub fn network<T: Scalar>(&self) -> Result<Network<T>> {
        let network = Network::<T>::new(self.config.clone(), 0)?;
        for (name, t) in network.params().iter() {
            let e = self.entry(name)?;
            if e.shape != t.shape() {
                return Err(FragError::Config(format!(
                    "tensor {name} has shape {:?} in the checkpoint, expected {:?}",
                    e.shape,
                    t.shape()
                )));
            }
            let mut d = t.data_mut();
            for (dst, &src) in d.iter_mut().zip(&e.data) {
                *dst = T::of(src as f64);
            }
        }
        Ok(network)
    }

    /// Trainer positioned after the stored epoch, optimizer state restored.
    pub fn trainer<T: Scalar>(&self) -> Result<Trainer<T>> {
        let mut trainer = Trainer::new(self.network()?, self.plan.clone())?;
        let mut adam = AdamState::new(trainer.network.params(), self.adam);
        adam.t = self.adam_t;
        for (prefix, moments) in [("adam.m/", &mut adam.m), ("adam.v/", &mut adam.v)] {
            for (name, m) in adam.names.iter().zip(moments.iter_mut()) {
                let e = self.entry(&format!("{prefix}{name}"))?;
                if e.data.len() != m.len() {
                    return Err(FragError::Config(format!("optimizer moment {prefix}{name} has the wrong size")));
                }
                *m = e.data.iter().map(|&v| T::of(v as f64)).collect();
            }
        }
        trainer.adam = adam;
        trainer.epoch = self.epoch;
        trainer.step = self.step;
        Ok(trainer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Trainer<f32> {
        let mut cfg = NetworkConfig::wordimgnet(3);
        cfg.widths = [2, 2, 2, 2];
        Trainer::new(Network::new(cfg, 5).unwrap(), TrainPlan::default()).unwrap()
    }

    #[test]
    fn byte_identical_round_trip() {
        let trainer = small();
        let bytes = Checkpoint::from_trainer(&trainer).to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let again = Checkpoint::from_trainer(&back.trainer::<f32>().unwrap()).to_bytes();
        assert_eq!(again, bytes);
    }

    #[test]
    fn rejects_other_versions_and_configs() {
        let ck = Checkpoint::from_trainer(&small());
        let mut bytes = ck.to_bytes();
        let at = bytes.windows(15).position(|w| w == b"format_version=").unwrap() + 15;
        bytes[at] = b'2';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
        assert!(ck.expect_config(&NetworkConfig::wordimgnet(4)).is_err());
        assert!(ck.expect_config(&ck.config.clone()).is_ok());
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }
}
