use fragnet_tensor::ops::{self, Mode, Window};
use fragnet_tensor::{Scalar, Tensor};

use crate::arch::grid::{make_grid, FragmentGrid, FragmentSpec, LEVELS};
use crate::arch::{ArchKind, NetworkConfig};
use crate::blocks::{cbr_forward, init_parameters, CbrBlock, ParameterSet};
use crate::error::{FragError, Result};

/// Output of the (fragment) pathway and classifier.
#[derive(Debug, Clone)]
pub struct PathwayOutput<T: Scalar> {
    /// Pooled features fed to the classifier, `R x D`.
    pub features: Tensor<T>,
    /// `R x M` logits; for FragNet row `n * batch + b` is fragment `n` of
    /// word `b`.
    pub logits: Tensor<T>,
    pub fragments: usize,
    pub batch: usize,
}

/// Fragment-averaged writer evidence of a batch of words.
#[derive(Debug, Clone)]
pub struct WordOutput<T: Scalar> {
    /// `B x M`, each row sums to one.
    pub word_probs: Tensor<T>,
    /// One `B x M` softmax per fragment, in grid order.
    pub fragment_probs: Vec<Tensor<T>>,
}

/// FragNet-q or WordImgNet with its parameters.
///
/// The blocks hold handles to the tensors in the parameter set, so every
/// fragment shares one set of pathway weights and optimizer updates are
/// seen by all forward passes.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    config: NetworkConfig,
    params: ParameterSet<T>,
    pyramid: Vec<CbrBlock<T>>,
    pathway: Vec<CbrBlock<T>>,
    classifier_weight: Tensor<T>,
    classifier_bias: Tensor<T>,
    grid: Option<FragmentGrid>,
}

impl<T: Scalar> Network<T> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let params = init_parameters(&config, seed)?;
        Self::from_parameters(config, params)
    }

    /// Assembles a network from existing tensors; names and shapes must
    /// match the configuration exactly.
    pub fn from_parameters(config: NetworkConfig, params: ParameterSet<T>) -> Result<Self> {
        config.validate()?;
        let expected = init_shapes(&config);
        if expected.len() != params.len() {
            return Err(FragError::Config(format!(
                "{} expects {} parameter tensors, got {}",
                config.label(),
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let t = params.require(name)?;
            if t.shape() != shape.as_slice() {
                return Err(FragError::Config(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut pyramid = Vec::new();
        let mut pathway = Vec::new();
        for layer in config.conv_layers() {
            let block = CbrBlock::from_params(&params, &layer.name, layer.leading_pool)?;
            match layer.section {
                crate::arch::Section::Pyramid => pyramid.push(block),
                crate::arch::Section::Pathway => pathway.push(block),
            }
        }
        let grid = match config.kind {
            ArchKind::FragNet => Some(make_grid(&config)?),
            ArchKind::WordImgNet => None,
        };
        Ok(Network {
            classifier_weight: params.require("classifier.weight")?.clone(),
            classifier_bias: params.require("classifier.bias")?.clone(),
            config,
            params,
            pyramid,
            pathway,
            grid,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    pub fn grid(&self) -> Option<&FragmentGrid> {
        self.grid.as_ref()
    }

    /// Number of predictions averaged per word (1 for WordImgNet).
    pub fn fragment_count(&self) -> usize {
        self.grid.as_ref().map_or(1, FragmentGrid::len)
    }

    /// Copy of the network in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network::from_parameters(self.config.clone(), self.params.cast())
            .expect("cast preserves names and shapes")
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<()> {
        let s = image.shape();
        if s.len() != 4 || s[1] != self.config.input_height || s[2] != self.config.input_width || s[3] != 1 {
            return Err(FragError::Config(format!(
                "expected B x {} x {} x 1 images, got {s:?}",
                self.config.input_height, self.config.input_width
            )));
        }
        Ok(())
    }

    /// Feature pyramid maps `[G1, G2, G3, G4]`.
    pub fn pyramid_forward(&self, image: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        if self.config.kind != ArchKind::FragNet {
            return Err(FragError::Unsupported("WordImgNet has no feature pyramid".into()));
        }
        self.check_image(image)?;
        let mut maps = Vec::with_capacity(4);
        let mut x = image.clone();
        for pair in self.pyramid.chunks(2) {
            x = cbr_forward(&pair[0], &x, mode)?;
            x = cbr_forward(&pair[1], &x, mode)?;
            maps.push(x.clone());
        }
        Ok(maps)
    }

    /// Fragment pathway for the given fragments of every image.
    ///
    /// `F0` is the image crop; stage `i` computes `M_i` from `F_{i-1}` and
    /// concatenates the lateral crop `A_i` of `G_i`. Rows of the result are
    /// fragment-major.
    pub fn fragments_forward(
        &self,
        pyramid: &[Tensor<T>],
        image: &Tensor<T>,
        chains: &[[FragmentSpec; LEVELS]],
        mode: Mode,
    ) -> Result<PathwayOutput<T>> {
        if self.config.kind != ArchKind::FragNet {
            return Err(FragError::Unsupported("WordImgNet has no fragment pathway".into()));
        }
        if pyramid.len() != 4 {
            return Err(FragError::Config(format!("expected 4 pyramid maps, got {}", pyramid.len())));
        }
        self.check_image(image)?;
        for chain in chains {
            for level in 1..LEVELS {
                if chain[level] != crate::arch::downmap(chain[level - 1])? {
                    return Err(FragError::Config(format!("inconsistent fragment chain {chain:?}")));
                }
            }
        }
        let windows = |level: usize| chains.iter().map(|c| c[level].window()).collect::<Vec<Window>>();
        let f0 = ops::crop_many(image, &windows(0))?;
        let laterals = (1..LEVELS)
            .map(|level| ops::crop_many(&pyramid[level - 1], &windows(level)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut out = self.run_pathway(f0, Some(&laterals), mode)?;
        out.fragments = chains.len();
        out.batch = image.shape()[0];
        Ok(out)
    }

    /// Pathway for a single fragment; logits are `B x M`.
    pub fn fragment_forward(
        &self,
        pyramid: &[Tensor<T>],
        image: &Tensor<T>,
        chain: &[FragmentSpec; LEVELS],
        mode: Mode,
    ) -> Result<PathwayOutput<T>> {
        self.fragments_forward(pyramid, image, std::slice::from_ref(chain), mode)
    }

    pub fn wordimgnet_forward(&self, image: &Tensor<T>, mode: Mode) -> Result<PathwayOutput<T>> {
        if self.config.kind != ArchKind::WordImgNet {
            return Err(FragError::Unsupported("not a WordImgNet configuration".into()));
        }
        self.check_image(image)?;
        let mut out = self.run_pathway(image.clone(), None, mode)?;
        out.batch = image.shape()[0];
        Ok(out)
    }

    /// Logits for every prediction the architecture makes on the batch.
    pub fn forward(&self, image: &Tensor<T>, mode: Mode) -> Result<PathwayOutput<T>> {
        match (&self.config.kind, &self.grid) {
            (ArchKind::FragNet, Some(grid)) => {
                let pyramid = self.pyramid_forward(image, mode)?;
                let chains: Vec<_> = (0..grid.len()).map(|i| *grid.chain(i)).collect();
                self.fragments_forward(&pyramid, image, &chains, mode)
            }
            _ => self.wordimgnet_forward(image, mode),
        }
    }

    /// Softmax per fragment, then the average over fragments.
    pub fn word_forward(&self, image: &Tensor<T>, mode: Mode) -> Result<WordOutput<T>> {
        let out = self.forward(image, mode)?;
        Ok(average_fragment_probs(&out.logits, out.fragments, out.batch))
    }

    fn run_pathway(&self, mut f: Tensor<T>, laterals: Option<&[Tensor<T>]>, mode: Mode) -> Result<PathwayOutput<T>> {
        let rows = f.shape()[0];
        for (stage, pair) in self.pathway.chunks(2).enumerate() {
            f = cbr_forward(&pair[0], &f, mode)?;
            f = cbr_forward(&pair[1], &f, mode)?;
            if let Some(lat) = laterals {
                f = ops::concat_channels(&f, &lat[stage]).map_err(|e| {
                    FragError::Invalid(format!("lateral crop misaligned at stage {}: {e}", stage + 1))
                })?;
            }
        }
        let features = ops::global_avg_pool(&f)?;
        let logits = ops::linear(&features, &self.classifier_weight, &self.classifier_bias)?;
        Ok(PathwayOutput {
            features,
            logits,
            fragments: 1,
            batch: rows,
        })
    }
}

/// Splits fragment-major logits into per-fragment softmaxes and averages them.
pub fn average_fragment_probs<T: Scalar>(logits: &Tensor<T>, fragments: usize, batch: usize) -> WordOutput<T> {
    let m = logits.shape()[1];
    let probs = ops::softmax_rows(&logits.data(), m);
    let mut acc = vec![0.0f64; batch * m];
    let mut fragment_probs = Vec::with_capacity(fragments);
    for n in 0..fragments {
        let block = &probs[n * batch * m..(n + 1) * batch * m];
        for (a, p) in acc.iter_mut().zip(block) {
            *a += p.as_f64();
        }
        fragment_probs.push(Tensor::from_vec([batch, m], block.to_vec()).expect("block shape"));
    }
    let inv = 1.0 / fragments as f64;
    let word = acc.into_iter().map(|v| T::of(v * inv)).collect();
    WordOutput {
        word_probs: Tensor::from_vec([batch, m], word).expect("word shape"),
        fragment_probs,
    }
}

fn init_shapes(config: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    let mut shapes = Vec::new();
    for layer in config.conv_layers() {
        let c = layer.out_channels;
        shapes.push((format!("{}.kernel", layer.name), vec![layer.in_channels, 3, 3, c]));
        for suffix in ["bias", "gamma", "beta", "running_mean", "running_var"] {
            shapes.push((format!("{}.{suffix}", layer.name), vec![c]));
        }
    }
    shapes.push(("classifier.weight".into(), vec![config.classifier_input_dim(), config.writers]));
    shapes.push(("classifier.bias".into(), vec![config.writers]));
    shapes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_examples() {
        // two fragments, batch 1, logits strongly one-hot on classes 0 and 2
        let logits = Tensor::<f64>::from_vec([2, 3], vec![800.0, 0.0, 0.0, 0.0, 0.0, 800.0]).unwrap();
        let out = average_fragment_probs(&logits, 2, 1);
        let p = out.word_probs.to_vec();
        assert!((p[0] - 0.5).abs() < 1e-12 && p[1].abs() < 1e-12 && (p[2] - 0.5).abs() < 1e-12);

        // identical fragments reproduce the fragment distribution
        let logits = Tensor::<f64>::from_vec([3, 2], vec![0.3, -0.2, 0.3, -0.2, 0.3, -0.2]).unwrap();
        let out = average_fragment_probs(&logits, 3, 1);
        let single = ops::softmax_rows(&[0.3, -0.2], 2);
        for (a, b) in out.word_probs.to_vec().iter().zip(&single) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_foreign_parameters() {
        let cfg = NetworkConfig::fragnet(64, 4);
        let params = init_parameters::<f32>(&NetworkConfig::fragnet(64, 5), 0).unwrap();
        assert!(Network::from_parameters(cfg, params).is_err());
        let params = init_parameters::<f32>(&NetworkConfig::wordimgnet(4), 0).unwrap();
        assert!(Network::from_parameters(NetworkConfig::fragnet(32, 4), params).is_err());
    }
}
