//! Sliding-window fragments and their per-level coordinates.

use fragnet_tensor::Window;

use crate::arch::{ArchKind, NetworkConfig};
use crate::error::{FragError, Result};

/// Level 0 is the input image, levels 1..=4 the pyramid maps G1..G4.
pub const LEVELS: usize = 5;

/// A crop `(x, y, h, w)` on one level: `x`/`y` are row/column offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FragmentSpec {
    pub level: usize,
    pub x: usize,
    pub y: usize,
    pub h: usize,
    pub w: usize,
}

impl FragmentSpec {
    pub fn new(level: usize, x: usize, y: usize, h: usize, w: usize) -> Self {
        FragmentSpec { level, x, y, h, w }
    }

    pub fn window(&self) -> Window {
        Window::new(self.x, self.y, self.h, self.w)
    }
}

/// Maps a spec on level `i` to level `i + 1`.
///
/// G1 is computed at input resolution, so 0 -> 1 is the identity; every
/// later step crosses one 2x2 pooling and halves all four numbers.
pub fn downmap(spec: FragmentSpec) -> Result<FragmentSpec> {
    if spec.level + 1 >= LEVELS {
        return Err(FragError::Config(format!("level {} has no successor", spec.level)));
    }
    if spec.level == 0 {
        return Ok(FragmentSpec { level: 1, ..spec });
    }
    let [x, y, h, w] = [spec.x, spec.y, spec.h, spec.w];
    if [x, y, h, w].iter().any(|v| v % 2 != 0) || h < 2 || w < 2 {
        return Err(FragError::Config(format!(
            "fragment {spec:?} cannot be halved to integer coordinates"
        )));
    }
    Ok(FragmentSpec::new(spec.level + 1, x / 2, y / 2, h / 2, w / 2))
}

/// Level-0 specs followed by the derived spec on every level.
pub fn spec_chain(spec: FragmentSpec) -> Result<[FragmentSpec; LEVELS]> {
    let mut chain = [spec; LEVELS];
    for level in 1..LEVELS {
        chain[level] = downmap(chain[level - 1])?;
    }
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentGrid {
    chains: Vec<[FragmentSpec; LEVELS]>,
}

impl FragmentGrid {
    pub fn from_specs(specs: &[FragmentSpec]) -> Result<Self> {
        let chains = specs.iter().map(|s| spec_chain(*s)).collect::<Result<Vec<_>>>()?;
        Ok(FragmentGrid { chains })
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    /// Level-0 specs in row-major order.
    pub fn specs(&self) -> Vec<FragmentSpec> {
        self.chains.iter().map(|c| c[0]).collect()
    }

    pub fn chain(&self, i: usize) -> &[FragmentSpec; LEVELS] {
        &self.chains[i]
    }

    pub fn windows_at(&self, level: usize) -> Vec<Window> {
        self.chains.iter().map(|c| c[level].window()).collect()
    }
}

/// All fully-inside `q x q` windows at the configured stride, row-major.
pub fn make_grid(config: &NetworkConfig) -> Result<FragmentGrid> {
    if config.kind != ArchKind::FragNet {
        return Err(FragError::Unsupported(format!("{} has no fragments", config.label())));
    }
    config.validate()?;
    let (q, s) = (config.fragment_size, config.base_stride);
    let mut specs = Vec::new();
    for x in (0..=config.input_height - q).step_by(s) {
        for y in (0..=config.input_width - q).step_by(s) {
            specs.push(FragmentSpec::new(0, x, y, q, q));
        }
    }
    FragmentGrid::from_specs(&specs)
}
