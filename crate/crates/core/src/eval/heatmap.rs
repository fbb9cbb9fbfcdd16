//! Fragment evidence maps.
//!
//! Fragment `k` with target-class probability `p_k` spreads the mass
//! `p_k * (H * W) / N` evenly over its `q x q` window. Overlapping windows
//! add up, so the map's spatial mean is exactly the word evidence
//! `(1 / N) * sum_k p_k`. With a tiling grid (no overlap) the map is flat
//! whenever all fragments agree.

use fragnet_tensor::ops::Mode;
use fragnet_tensor::{Scalar, Tensor};

use crate::arch::{FragmentGrid, FragmentSpec, Network};
use crate::data::GrayImage;
use crate::error::{FragError, Result};
use crate::eval::metrics::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major evidence density.
    pub values: Vec<f64>,
    pub target: usize,
    /// Averaged fragment probability of the target class.
    pub evidence: f64,
    /// Per-fragment target probability, grid order.
    pub fragment_evidence: Vec<f64>,
    /// Fragment with the highest target probability (lowest index on ties).
    pub best: FragmentSpec,
}

/// Evidence density for per-fragment values over a `height x width` image.
pub fn evidence_map(grid: &FragmentGrid, evidence: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
    if evidence.len() != grid.len() || grid.is_empty() {
        return Err(FragError::Invalid(format!(
            "{} evidence values for {} fragments",
            evidence.len(),
            grid.len()
        )));
    }
    let mut map = vec![0.0; height * width];
    let total = (height * width) as f64 / grid.len() as f64;
    for (spec, &p) in grid.specs().iter().zip(evidence) {
        spec.window().check_inside(height, width)?;
        let density = p * total / (spec.h * spec.w) as f64;
        for y in spec.x..spec.x + spec.h {
            for v in &mut map[y * width + spec.y..y * width + spec.y + spec.w] {
                *v += density;
            }
        }
    }
    Ok(map)
}

/// Evidence map of one `1 x H x W x 1` image for `target`, or for the
/// predicted writer when `target` is `None`.
pub fn heatmap<T: Scalar>(network: &Network<T>, image: &Tensor<T>, target: Option<usize>) -> Result<Heatmap> {
    let grid = network
        .grid()
        .ok_or_else(|| FragError::Unsupported("heatmaps need a FragNet checkpoint (WordImgNet has no fragments)".into()))?;
    if image.shape().first() != Some(&1) {
        return Err(FragError::Invalid("heatmaps take a single image".into()));
    }
    let out = network.word_forward(image, Mode::Eval)?;
    let word: Vec<f64> = out.word_probs.to_vec().iter().map(|v| v.as_f64()).collect();
    let target = target.unwrap_or_else(|| argmax(&word));
    if target >= word.len() {
        return Err(FragError::Config(format!("class {target} out of range for {} writers", word.len())));
    }
    let fragment_evidence: Vec<f64> = out
        .fragment_probs
        .iter()
        .map(|p| p.data()[target].as_f64())
        .collect();
    let (h, w) = (network.config().input_height, network.config().input_width);
    let values = evidence_map(grid, &fragment_evidence, h, w)?;
    Ok(Heatmap {
        height: h,
        width: w,
        evidence: fragment_evidence.iter().sum::<f64>() / fragment_evidence.len() as f64,
        best: grid.specs()[argmax(&fragment_evidence)],
        values,
        target,
        fragment_evidence,
    })
}

impl Heatmap {
    pub fn spatial_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Divisor that brings the map into [0, 1] for display.
    pub fn display_scale(&self) -> f64 {
        self.values.iter().copied().fold(1.0, f64::max)
    }

    /// 8-bit rendering of `values / display_scale()`, bright = evidence.
    pub fn to_image(&self) -> GrayImage {
        let s = self.display_scale();
        let pixels = self.values.iter().map(|v| (v / s * 255.0).round() as u8).collect();
        GrayImage::new(self.width, self.height, pixels).expect("map size")
    }

    /// Text summary written next to the PNG.
    pub fn describe(&self) -> String {
        let b = &self.best;
        let mut s = format!(
            "target {}\nevidence {}\nscale {}\nbest_fragment level={} x={} y={} h={} w={}\nbest_probability {}\n",
            self.target,
            self.evidence,
            self.display_scale(),
            b.level,
            b.x,
            b.y,
            b.h,
            b.w,
            self.fragment_evidence[argmax(&self.fragment_evidence)]
        );
        for (i, p) in self.fragment_evidence.iter().enumerate() {
            s.push_str(&format!("fragment {i} {p}\n"));
        }
        s
    }
}
