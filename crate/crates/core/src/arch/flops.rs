//! Convolution cost model: `c_in * h * w * k_h * k_w * c_out` per layer.

use crate::arch::{make_grid, ArchKind, NetworkConfig, Section};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerFlops {
    pub name: String,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: (usize, usize),
    pub out_channels: usize,
    /// Executions per word (the fragment count for FragNet pathway layers).
    pub repeats: u64,
    /// Cost of one execution.
    pub per_call: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub label: String,
    pub layers: Vec<LayerFlops>,
    pub total: u64,
}

pub fn conv_flops(in_channels: usize, height: usize, width: usize, kernel: (usize, usize), out_channels: usize) -> u64 {
    [in_channels, height, width, kernel.0, kernel.1, out_channels]
        .iter()
        .map(|v| *v as u64)
        .product()
}

/// Per-layer and total convolution cost of one word image.
pub fn estimate_flops(config: &NetworkConfig) -> Result<FlopsReport> {
    config.validate()?;
    let fragments = match config.kind {
        ArchKind::FragNet => make_grid(config)?.len() as u64,
        ArchKind::WordImgNet => 1,
    };
    let layers: Vec<LayerFlops> = config
        .conv_layers()
        .into_iter()
        .map(|l| {
            let repeats = if l.section == Section::Pathway { fragments } else { 1 };
            let per_call = conv_flops(l.in_channels, l.height, l.width, (3, 3), l.out_channels);
            LayerFlops {
                name: l.name,
                in_channels: l.in_channels,
                height: l.height,
                width: l.width,
                kernel: (3, 3),
                out_channels: l.out_channels,
                repeats,
                per_call,
                total: per_call * repeats,
            }
        })
        .collect();
    let total = layers.iter().map(|l| l.total).sum();
    Ok(FlopsReport {
        label: config.label(),
        layers,
        total,
    })
}

impl FlopsReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<24} {:>6} {:>9} {:>6} {:>7} {:>15} {:>15}\n",
            "layer", "c_in", "h x w", "c_out", "repeat", "per call", "total"
        );
        for l in &self.layers {
            s.push_str(&format!(
                "{:<24} {:>6} {:>9} {:>6} {:>7} {:>15} {:>15}\n",
                l.name,
                l.in_channels,
                format!("{}x{}", l.height, l.width),
                l.out_channels,
                l.repeats,
                l.per_call,
                l.total
            ));
        }
        s.push_str(&format!(
            "{:<24} {:>63}   ({:.3}G)\n",
            format!("total {}", self.label),
            self.total,
            self.total as f64 / 1e9
        ));
        s
    }
}
