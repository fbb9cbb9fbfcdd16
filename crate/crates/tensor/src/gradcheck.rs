//! Central finite-difference checks of analytic gradients.
//!
//! The numeric side only evaluates the loss closure, so it never touches
//! the backward code it is checking.

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so gradients that are zero by
/// construction compare on an absolute scale.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn fraction_below(&self, tol: f64) -> f64 {
        if self.entries.is_empty() {
            return 1.0;
        }
        let ok = self.entries.iter().filter(|e| e.rel_error < tol).count();
        ok as f64 / self.entries.len() as f64
    }

    /// `< tight` on at least `fraction` of coordinates and `< loose` on all.
    pub fn passes(&self, tight: f64, fraction: f64, loose: f64) -> bool {
        self.fraction_below(tight) >= fraction && self.max_rel_error() < loose
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Every `(tensor, element)` pair of the given leaves.
pub fn all_coordinates(leaves: &[Tensor<f64>]) -> Vec<(usize, usize)> {
    leaves
        .iter()
        .enumerate()
        .flat_map(|(t, leaf)| (0..leaf.len()).map(move |i| (t, i)))
        .collect()
}

/// Compares backward gradients of `loss` with central differences at the
/// given `(tensor, element)` coordinates of `leaves`.
pub fn check_gradients<F>(
    leaves: &[Tensor<f64>],
    coords: &[(usize, usize)],
    step: f64,
    floor: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut() -> Result<Tensor<f64>>,
{
    for leaf in leaves {
        leaf.zero_grad();
    }
    loss()?.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.len()]))
        .collect();

    let mut report = GradCheckReport::default();
    for &(t, i) in coords {
        let leaf = &leaves[t];
        let original = leaf.data()[i];
        leaf.data_mut()[i] = original + step;
        let plus = loss()?.item();
        leaf.data_mut()[i] = original - step;
        let minus = loss()?.item();
        leaf.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[t][i];
        report.entries.push(GradCheckEntry {
            tensor: t,
            index: i,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric, floor),
        });
    }
    for leaf in leaves {
        leaf.zero_grad();
    }
    Ok(report)
}
