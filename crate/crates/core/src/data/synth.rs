//! Synthetic handwriting: pseudo-words drawn from stroke and arc glyphs in
//! per-writer styles, for experiments without licensed corpora.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{save_image, GrayImage, Manifest, ManifestRecord, Split};
use crate::error::{FragError, Result};

/// Letters the generator can draw.
pub const ALPHABET: &str = "abcdeghiklmnoprstuvwxz";

pub const SLANT_RANGE: (f64, f64) = (-30.0, 30.0);
pub const STROKE_RANGE: (f64, f64) = (1.2, 4.0);
pub const JITTER_RANGE: (f64, f64) = (0.0, 3.0);
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.25);
pub const CURVATURE_RANGE: (f64, f64) = (-0.3, 0.3);
pub const WIDTH_FACTOR_RANGE: (f64, f64) = (0.75, 1.3);
pub const SPACING_RANGE: (f64, f64) = (0.05, 0.45);
pub const INK_RANGE: (f64, f64) = (0.0, 90.0);

/// Two writers differ by at least this fraction of some parameter's range.
pub const MIN_SEPARATION: f64 = 0.2;

const X_HEIGHT: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriterStyle {
    /// Degrees; positive leans right.
    pub slant: f64,
    /// Pen width in pixels.
    pub stroke_width: f64,
    /// Vertical wobble of glyphs around the baseline, in pixels.
    pub baseline_jitter: f64,
    pub glyph_scale: f64,
    /// Signed bow applied to every stroke, as a fraction of its chord.
    pub curvature: f64,
    /// Horizontal stretch of glyphs.
    pub width_factor: f64,
    /// Gap between glyphs in x-height units.
    pub spacing: f64,
    /// Gray level of full ink (0 = black).
    pub ink: f64,
    /// Seeds the writer's own glyph shapes.
    pub seed: u64,
}

fn ranges() -> [(f64, f64); 8] {
    [
        SLANT_RANGE,
        STROKE_RANGE,
        JITTER_RANGE,
        SCALE_RANGE,
        CURVATURE_RANGE,
        WIDTH_FACTOR_RANGE,
        SPACING_RANGE,
        INK_RANGE,
    ]
}

impl WriterStyle {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let v: Vec<f64> = ranges().iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect();
        WriterStyle {
            slant: v[0],
            stroke_width: v[1],
            baseline_jitter: v[2],
            glyph_scale: v[3],
            curvature: v[4],
            width_factor: v[5],
            spacing: v[6],
            ink: v[7],
            seed: rng.random(),
        }
    }

    fn values(&self) -> [f64; 8] {
        [
            self.slant,
            self.stroke_width,
            self.baseline_jitter,
            self.glyph_scale,
            self.curvature,
            self.width_factor,
            self.spacing,
            self.ink,
        ]
    }

    /// Largest parameter difference, as a fraction of that parameter's range.
    pub fn separation(&self, other: &WriterStyle) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .zip(ranges())
            .map(|((a, b), (lo, hi))| (a - b).abs() / (hi - lo))
            .fold(0.0, f64::max)
    }

    pub fn in_range(&self) -> bool {
        self.values()
            .iter()
            .zip(ranges())
            .all(|(v, (lo, hi))| (lo..=hi).contains(v))
    }
}

/// Writer styles with pairwise separation of at least [`MIN_SEPARATION`].
pub fn sample_styles(writers: usize, rng: &mut impl Rng) -> Vec<WriterStyle> {
    let mut styles: Vec<WriterStyle> = Vec::with_capacity(writers);
    while styles.len() < writers {
        let s = WriterStyle::sample(rng);
        if styles.iter().all(|o| o.separation(&s) >= MIN_SEPARATION) {
            styles.push(s);
        }
    }
    styles
}

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64) -> Stroke {
    let n = 18;
    (0..=n)
        .map(|i| {
            let a = (from + (to - from) * i as f64 / n as f64).to_radians();
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn line(points: &[(f64, f64)]) -> Stroke {
    points.to_vec()
}

/// Glyph strokes in x-height units (baseline y = 0, up is positive) and
/// the advance width.
fn glyph(c: char) -> (Vec<Stroke>, f64) {
    let bowl = || arc(0.42, 0.5, 0.36, 0.5, 0.0, 360.0);
    let hump = |x0: f64| {
        let mut s = arc(x0 + 0.3, 0.6, 0.3, 0.4, 180.0, 0.0);
        s.push((x0 + 0.6, 0.0));
        s
    };
    match c {
        'a' => (vec![bowl(), line(&[(0.78, 1.0), (0.78, 0.0)])], 0.95),
        'b' => (vec![line(&[(0.06, 1.8), (0.06, 0.0)]), bowl()], 0.9),
        'c' => (vec![arc(0.42, 0.5, 0.36, 0.5, 40.0, 320.0)], 0.8),
        'd' => (vec![bowl(), line(&[(0.78, 1.8), (0.78, 0.0)])], 0.95),
        'e' => {
            let mut s = line(&[(0.08, 0.5), (0.78, 0.5)]);
            s.extend(arc(0.43, 0.5, 0.35, 0.5, 0.0, 320.0));
            (vec![s], 0.85)
        }
        'g' => {
            let mut stem = line(&[(0.78, 1.0)]);
            stem.extend(arc(0.44, -0.4, 0.34, 0.4, 0.0, -180.0));
            (vec![bowl(), stem], 0.95)
        }
        'h' => (vec![line(&[(0.08, 1.8), (0.08, 0.0)]), hump(0.08)], 0.8),
        'i' => (vec![line(&[(0.2, 1.0), (0.2, 0.0)]), line(&[(0.2, 1.4), (0.24, 1.48)])], 0.45),
        'k' => (
            vec![line(&[(0.08, 1.8), (0.08, 0.0)]), line(&[(0.65, 1.0), (0.1, 0.45), (0.7, 0.0)])],
            0.8,
        ),
        'l' => (vec![line(&[(0.2, 1.8), (0.2, 0.0)])], 0.45),
        'm' => (vec![line(&[(0.06, 1.0), (0.06, 0.0)]), hump(0.06), hump(0.66)], 1.35),
        'n' => (vec![line(&[(0.08, 1.0), (0.08, 0.0)]), hump(0.08)], 0.8),
        'o' => (vec![bowl()], 0.85),
        'p' => (vec![line(&[(0.06, 1.0), (0.06, -0.8)]), bowl()], 0.9),
        'r' => (
            vec![line(&[(0.08, 1.0), (0.08, 0.0)]), arc(0.4, 0.55, 0.32, 0.4, 180.0, 45.0)],
            0.7,
        ),
        's' => {
            let mut s = arc(0.38, 0.75, 0.3, 0.25, 20.0, 270.0);
            s.extend(arc(0.38, 0.25, 0.3, 0.25, 90.0, -160.0));
            (vec![s], 0.75)
        }
        't' => (
            vec![line(&[(0.3, 1.6), (0.3, 0.0), (0.55, 0.05)]), line(&[(0.02, 1.0), (0.6, 1.0)])],
            0.65,
        ),
        'u' => {
            let mut s = line(&[(0.08, 1.0)]);
            s.extend(arc(0.38, 0.4, 0.3, 0.4, 180.0, 360.0));
            (vec![s, line(&[(0.68, 1.0), (0.68, 0.0)])], 0.8)
        }
        'v' => (vec![line(&[(0.02, 1.0), (0.37, 0.0), (0.72, 1.0)])], 0.78),
        'w' => (
            vec![line(&[(0.02, 1.0), (0.27, 0.0), (0.52, 0.8), (0.77, 0.0), (1.02, 1.0)])],
            1.08,
        ),
        'x' => (vec![line(&[(0.05, 1.0), (0.7, 0.0)]), line(&[(0.7, 1.0), (0.05, 0.0)])], 0.78),
        'z' => (vec![line(&[(0.05, 1.0), (0.7, 1.0), (0.05, 0.0), (0.72, 0.0)])], 0.8),
        _ => panic!("no glyph for {c:?}"),
    }
}

/// Per-writer shape habit of one letter: an affine distortion near identity.
#[derive(Debug, Clone, Copy)]
struct Allograph {
    sx: f64,
    sy: f64,
    shear: f64,
    lift: f64,
}

fn allographs(style: &WriterStyle) -> Vec<Allograph> {
    let mut rng = ChaCha8Rng::seed_from_u64(style.seed);
    ALPHABET
        .chars()
        .map(|_| Allograph {
            sx: rng.random_range(0.8..1.2),
            sy: rng.random_range(0.8..1.2),
            shear: rng.random_range(-0.2..0.2),
            lift: rng.random_range(-0.12..0.12),
        })
        .collect()
}

/// Bows a stroke sideways by `curvature * chord * sin(pi t)`.
fn bend(stroke: &Stroke, curvature: f64) -> Stroke {
    let (a, b) = (stroke[0], stroke[stroke.len() - 1]);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let chord = (dx * dx + dy * dy).sqrt();
    if chord < 1e-9 {
        return stroke.clone();
    }
    let (nx, ny) = (-dy / chord, dx / chord);
    // resample so straight strokes can bend
    let mut dense = vec![stroke[0]];
    for w in stroke.windows(2) {
        for k in 1..=6 {
            let t = k as f64 / 6.0;
            dense.push((w[0].0 + (w[1].0 - w[0].0) * t, w[0].1 + (w[1].1 - w[0].1) * t));
        }
    }
    let n = dense.len() - 1;
    dense
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let off = curvature * chord * (PI * i as f64 / n as f64).sin();
            (p.0 + nx * off, p.1 + ny * off)
        })
        .collect()
}

/// Draws `text` in the writer's style; `rng` supplies per-sample variation.
pub fn render_word(style: &WriterStyle, text: &str, rng: &mut impl Rng) -> Result<GrayImage> {
    if text.is_empty() {
        return Err(FragError::Invalid("cannot render an empty word".into()));
    }
    let forms = allographs(style);
    let small = Normal::new(0.0, 1.0).expect("unit normal");
    let slant = (style.slant + 2.0 * small.sample(rng)).to_radians().tan();
    let xh = X_HEIGHT * style.glyph_scale * (1.0 + 0.04 * small.sample(rng));
    let pen = (style.stroke_width * (1.0 + 0.06 * small.sample(rng))).max(0.8);

    let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
    let mut cursor = 0.0;
    for c in text.chars() {
        let idx = ALPHABET
            .find(c)
            .ok_or_else(|| FragError::Invalid(format!("no glyph for {c:?}")))?;
        let form = forms[idx];
        let (strokes, advance) = glyph(c);
        let dy = style.baseline_jitter * small.sample(rng) / xh + form.lift;
        let wobble = 0.03 * small.sample(rng);
        for stroke in &strokes {
            let curved = bend(stroke, style.curvature + 0.03 * small.sample(rng));
            let pts: Vec<(f64, f64)> = curved
                .iter()
                .map(|&(x, y)| {
                    let gx = x * form.sx * (1.0 + wobble) + form.shear * y;
                    let gy = y * form.sy + dy;
                    let ux = cursor + gx * style.width_factor + slant * gy;
                    (ux * xh, -gy * xh)
                })
                .collect();
            segments.extend(pts.windows(2).map(|w| (w[0], w[1])));
        }
        let gap = style.spacing + 0.05 * small.sample(rng);
        cursor += advance * form.sx * style.width_factor + gap.max(0.0);
    }

    let margin = pen + 2.0;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (a, b) in &segments {
        for p in [a, b] {
            x0 = x0.min(p.0);
            y0 = y0.min(p.1);
            x1 = x1.max(p.0);
            y1 = y1.max(p.1);
        }
    }
    let width = (x1 - x0 + 2.0 * margin).ceil() as usize;
    let height = (y1 - y0 + 2.0 * margin).ceil() as usize;
    let shift = |p: (f64, f64)| (p.0 - x0 + margin, p.1 - y0 + margin);

    let mut cover = vec![0.0f64; width * height];
    let r = pen / 2.0;
    for (a, b) in &segments {
        let (a, b) = (shift(*a), shift(*b));
        let lo_x = (a.0.min(b.0) - r - 1.0).floor().max(0.0) as usize;
        let hi_x = ((a.0.max(b.0) + r + 1.0).ceil() as usize).min(width);
        let lo_y = (a.1.min(b.1) - r - 1.0).floor().max(0.0) as usize;
        let hi_y = ((a.1.max(b.1) + r + 1.0).ceil() as usize).min(height);
        for y in lo_y..hi_y {
            for x in lo_x..hi_x {
                let d = segment_distance((x as f64 + 0.5, y as f64 + 0.5), a, b);
                let c = (r + 0.5 - d).clamp(0.0, 1.0);
                let cell = &mut cover[y * width + x];
                *cell = cell.max(c);
            }
        }
    }
    let pixels = cover
        .iter()
        .map(|c| (255.0 - c * (255.0 - style.ink)).round() as u8)
        .collect();
    GrayImage::new(width, height, pixels)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

pub fn random_text(rng: &mut impl Rng) -> String {
    let letters: Vec<char> = ALPHABET.chars().collect();
    let len = rng.random_range(2..=7);
    (0..len).map(|_| letters[rng.random_range(0..letters.len())]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub writers: usize,
    pub train_words: usize,
    pub test_words: usize,
    pub words_per_page: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(writers: usize, train_words: usize, test_words: usize, seed: u64) -> Self {
        SynthConfig {
            writers,
            train_words,
            test_words,
            words_per_page: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.writers < 2 {
            return Err(FragError::Config(format!("need at least 2 writers, got {}", self.writers)));
        }
        if self.words_per_page == 0 {
            return Err(FragError::Config("words per page must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWord {
    pub image: GrayImage,
    pub writer: usize,
    pub page_id: String,
    pub text: String,
    /// Relative location `writerNNN/pagePP/wordKKKK.png`.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSet {
    pub styles: Vec<WriterStyle>,
    pub train: Vec<SynthWord>,
    pub test: Vec<SynthWord>,
}

/// Renders the whole dataset in memory. Train pages are numbered first,
/// then test pages, so page ids never repeat across splits.
pub fn synthesize(config: &SynthConfig) -> Result<SynthSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let styles = sample_styles(config.writers, &mut rng);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (w, style) in styles.iter().enumerate() {
        let mut word_no = 0;
        let mut page_base = 0;
        for (count, out) in [(config.train_words, &mut train), (config.test_words, &mut test)] {
            for k in 0..count {
                let page = page_base + k / config.words_per_page;
                let text = random_text(&mut rng);
                let image = render_word(style, &text, &mut rng)?;
                out.push(SynthWord {
                    image,
                    writer: w,
                    page_id: format!("writer{w:03}-page{page:02}"),
                    text,
                    path: PathBuf::from(format!("writer{w:03}/page{page:02}/word{word_no:04}.png")),
                });
                word_no += 1;
            }
            page_base += count.div_ceil(config.words_per_page);
        }
    }
    Ok(SynthSet { styles, train, test })
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub styles: Vec<WriterStyle>,
    pub train: Manifest,
    pub test: Manifest,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
}

pub const TRAIN_MANIFEST: &str = "train.tsv";
pub const TEST_MANIFEST: &str = "test.tsv";

/// Writes the images and `train.tsv` / `test.tsv` under `out_dir`.
pub fn generate_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    let set = synthesize(config)?;
    let mut manifests = Vec::new();
    for (split, words) in [(Split::Train, &set.train), (Split::Test, &set.test)] {
        let mut m = Manifest::new(split, out_dir);
        for w in words {
            let full = out_dir.join(&w.path);
            let dir = full.parent().expect("word path has a parent");
            std::fs::create_dir_all(dir).map_err(|e| FragError::io(dir, e))?;
            save_image(&full, &w.image)?;
            m.records.push(ManifestRecord {
                image_path: w.path.clone(),
                writer_id: w.writer,
                page_id: w.page_id.clone(),
                word_text: Some(w.text.clone()),
            });
        }
        manifests.push(m);
    }
    let test = manifests.pop().expect("two splits");
    let train = manifests.pop().expect("two splits");
    let train_path = out_dir.join(TRAIN_MANIFEST);
    let test_path = out_dir.join(TEST_MANIFEST);
    train.save(&train_path)?;
    test.save(&test_path)?;
    Ok(SynthOutput {
        styles: set.styles,
        train,
        test,
        train_path,
        test_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_letter_renders() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let style = WriterStyle::sample(&mut rng);
        for c in ALPHABET.chars() {
            let img = render_word(&style, &c.to_string(), &mut rng).unwrap();
            assert!(img.pixels.iter().any(|&p| p < 128), "{c} has no ink");
        }
        assert!(render_word(&style, "q1", &mut rng).is_err());
    }

    #[test]
    fn styles_are_separated_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let styles = sample_styles(30, &mut rng);
        for (i, a) in styles.iter().enumerate() {
            assert!(a.in_range());
            for b in &styles[i + 1..] {
                assert!(a.separation(b) >= MIN_SEPARATION);
            }
        }
    }

    #[test]
    fn counts_pages_and_paths() {
        let set = synthesize(&SynthConfig::new(3, 7, 3, 5)).unwrap();
        assert_eq!((set.train.len(), set.test.len()), (21, 9));
        let train_pages: std::collections::HashSet<_> = set.train.iter().map(|w| &w.page_id).collect();
        assert!(set.test.iter().all(|w| !train_pages.contains(&w.page_id)));
        assert_eq!(set.train[6].page_id, "writer000-page01");
        assert_eq!(set.test[0].path, PathBuf::from("writer000/page02/word0007.png"));
        assert!(set.train.iter().all(|w| (2..=7).contains(&w.text.len())));
        assert!(synthesize(&SynthConfig::new(1, 1, 1, 0)).is_err());
    }
}
