use crate::error::{FragError, Result};

pub const INPUT_HEIGHT: usize = 64;
pub const INPUT_WIDTH: usize = 128;
pub const DEFAULT_WIDTHS: [usize; 4] = [64, 128, 256, 512];
pub const DEFAULT_STRIDE: usize = 16;
/// Fragment sizes evaluated for FragNet.
pub const FRAGMENT_SIZES: [usize; 3] = [16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    /// Feature pyramid plus fragment pathway with lateral crops.
    FragNet,
    /// The fragment pathway alone, applied to the whole word image.
    WordImgNet,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::FragNet => "fragnet",
            ArchKind::WordImgNet => "wordimgnet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fragnet" => Ok(ArchKind::FragNet),
            "wordimgnet" => Ok(ArchKind::WordImgNet),
            other => Err(FragError::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub kind: ArchKind,
    /// Fragment side `q` in input pixels; unused by WordImgNet.
    pub fragment_size: usize,
    /// Sliding-window stride on the input image.
    pub base_stride: usize,
    pub input_height: usize,
    pub input_width: usize,
    /// Output channels of the four stages.
    pub widths: [usize; 4],
    /// Number of writers `M`, the classifier width.
    pub writers: usize,
}

/// Which half of the network a convolution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Pyramid,
    Pathway,
}

/// Static geometry of one convolution layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayer {
    pub name: String,
    pub section: Section,
    /// Stage 1..=4.
    pub stage: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Spatial size the convolution runs at (after any leading pool).
    pub height: usize,
    pub width: usize,
    pub leading_pool: bool,
}

impl NetworkConfig {
    pub fn fragnet(fragment_size: usize, writers: usize) -> Self {
        NetworkConfig {
            kind: ArchKind::FragNet,
            fragment_size,
            base_stride: DEFAULT_STRIDE,
            input_height: INPUT_HEIGHT,
            input_width: INPUT_WIDTH,
            widths: DEFAULT_WIDTHS,
            writers,
        }
    }

    pub fn wordimgnet(writers: usize) -> Self {
        NetworkConfig {
            kind: ArchKind::WordImgNet,
            fragment_size: 0,
            ..Self::fragnet(0, writers)
        }
    }

    /// Short label such as `FragNet-64` or `WordImgNet`.
    pub fn label(&self) -> String {
        match self.kind {
            ArchKind::FragNet => format!("FragNet-{}", self.fragment_size),
            ArchKind::WordImgNet => "WordImgNet".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FragError::Config(msg));
        if self.writers < 2 {
            return bad(format!("need at least 2 writers, got {}", self.writers));
        }
        if self.widths.contains(&0) {
            return bad("stage widths must be positive".into());
        }
        if self.input_height % 8 != 0 || self.input_width % 8 != 0 || self.input_height == 0 || self.input_width == 0 {
            return bad(format!(
                "input {}x{} must be divisible by 8",
                self.input_height, self.input_width
            ));
        }
        if self.kind == ArchKind::FragNet {
            let (q, s) = (self.fragment_size, self.base_stride);
            if q % 8 != 0 || q / 8 < 2 {
                return bad(format!("fragment size {q} must be a multiple of 8 and at least 16"));
            }
            if s == 0 || s > q || s % 8 != 0 {
                return bad(format!("stride {s} must be a positive multiple of 8 no larger than q={q}"));
            }
            if q > self.input_height || q > self.input_width {
                return bad(format!(
                    "fragment size {q} exceeds input {}x{}",
                    self.input_height, self.input_width
                ));
            }
            if (self.input_height - q) % s != 0 || (self.input_width - q) % s != 0 {
                return bad(format!("stride {s} does not tile the input exactly with q={q}"));
            }
        }
        Ok(())
    }

    /// Input channels of the first convolution of each pathway stage.
    pub fn pathway_in_channels(&self) -> [usize; 4] {
        let w = self.widths;
        match self.kind {
            ArchKind::FragNet => [1, 2 * w[0], 2 * w[1], 2 * w[2]],
            ArchKind::WordImgNet => [1, w[0], w[1], w[2]],
        }
    }

    pub fn pyramid_in_channels(&self) -> [usize; 4] {
        [1, self.widths[0], self.widths[1], self.widths[2]]
    }

    /// Length of the pooled feature vector fed to the classifier.
    pub fn classifier_input_dim(&self) -> usize {
        match self.kind {
            ArchKind::FragNet => 2 * self.widths[3],
            ArchKind::WordImgNet => self.widths[3],
        }
    }

    /// Spatial size of pyramid level `stage` (1..=4).
    pub fn level_size(&self, stage: usize) -> (usize, usize) {
        let f = 1 << (stage - 1);
        (self.input_height / f, self.input_width / f)
    }

    /// Every convolution in execution order: pyramid first, then pathway.
    pub fn conv_layers(&self) -> Vec<ConvLayer> {
        let mut layers = Vec::new();
        if self.kind == ArchKind::FragNet {
            self.push_stages(&mut layers, Section::Pyramid, self.pyramid_in_channels(), (self.input_height, self.input_width));
        }
        let pathway_input = match self.kind {
            ArchKind::FragNet => (self.fragment_size, self.fragment_size),
            ArchKind::WordImgNet => (self.input_height, self.input_width),
        };
        self.push_stages(&mut layers, Section::Pathway, self.pathway_in_channels(), pathway_input);
        layers
    }

    fn push_stages(&self, layers: &mut Vec<ConvLayer>, section: Section, inputs: [usize; 4], (h, w): (usize, usize)) {
        let prefix = match section {
            Section::Pyramid => "pyramid",
            Section::Pathway => "pathway",
        };
        for stage in 1..=4 {
            let f = 1 << (stage - 1);
            let out = self.widths[stage - 1];
            for conv in 1..=2 {
                layers.push(ConvLayer {
                    name: format!("{prefix}.block{stage}.conv{conv}"),
                    section,
                    stage,
                    in_channels: if conv == 1 { inputs[stage - 1] } else { out },
                    out_channels: out,
                    height: h / f,
                    width: w / f,
                    leading_pool: conv == 1 && stage > 1,
                });
            }
        }
    }
}
