//! FragNet-q, the WordImgNet baseline, fragment grids and the cost model.

mod config;
pub mod flops;
pub mod grid;
mod network;

pub use config::{
    ArchKind, ConvLayer, NetworkConfig, Section, DEFAULT_STRIDE, DEFAULT_WIDTHS, FRAGMENT_SIZES, INPUT_HEIGHT,
    INPUT_WIDTH,
};
pub use flops::{estimate_flops, FlopsReport, LayerFlops};
pub use grid::{downmap, make_grid, spec_chain, FragmentGrid, FragmentSpec, LEVELS};
pub use network::{average_fragment_probs, Network, PathwayOutput, WordOutput};
