use fragnet_tensor::{Scalar, Tensor};

use crate::data::{load_image, resize_pad_values, GrayImage, Manifest};
use crate::error::{FragError, Result};

/// Preprocessed word images held in memory, ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSet {
    pub height: usize,
    pub width: usize,
    /// `len * height * width` values in [0, 1].
    pub pixels: Vec<f32>,
    pub labels: Vec<usize>,
    pub page_ids: Vec<String>,
    pub texts: Vec<Option<String>>,
}

impl WordSet {
    pub fn empty(height: usize, width: usize) -> Self {
        WordSet {
            height,
            width,
            pixels: Vec::new(),
            labels: Vec::new(),
            page_ids: Vec::new(),
            texts: Vec::new(),
        }
    }

    pub fn push(&mut self, image: &GrayImage, label: usize, page_id: &str, text: Option<String>) -> Result<()> {
        let values = resize_pad_values(image, self.height, self.width)?;
        self.pixels.extend(values.into_iter().map(|v| v as f32));
        self.labels.push(label);
        self.page_ids.push(page_id.to_string());
        self.texts.push(text);
        Ok(())
    }

    /// Loads and normalizes every record; labels must be below `writers`.
    pub fn from_manifest(manifest: &Manifest, height: usize, width: usize, writers: usize) -> Result<Self> {
        let mut set = WordSet::empty(height, width);
        for r in &manifest.records {
            if r.writer_id >= writers {
                return Err(FragError::Config(format!(
                    "writer id {} in the {} manifest is out of range for {writers} writers",
                    r.writer_id, manifest.split
                )));
            }
            let image = load_image(&manifest.resolve(r))?;
            set.push(&image, r.writer_id, &r.page_id, r.word_text.clone())?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy holding only the given items, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = WordSet::empty(self.height, self.width);
        let n = self.height * self.width;
        for &i in indices {
            out.pixels.extend_from_slice(&self.pixels[i * n..(i + 1) * n]);
            out.labels.push(self.labels[i]);
            out.page_ids.push(self.page_ids[i].clone());
            out.texts.push(self.texts[i].clone());
        }
        out
    }

    /// `B x H x W x 1` image batch and its labels.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let n = self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend(self.pixels[i * n..(i + 1) * n].iter().map(|&v| T::of(v as f64)));
        }
        let t = Tensor::from_vec([indices.len(), self.height, self.width, 1], data).expect("batch shape");
        (t, indices.iter().map(|&i| self.labels[i]).collect())
    }
}
