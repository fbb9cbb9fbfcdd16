use std::path::Path;

use fragnet_tensor::{Scalar, Tensor};
use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma};

use crate::error::{FragError, Result};

/// 8-bit grayscale image, 0 = ink, 255 = paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major pixels.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(FragError::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    fn to_buffer(&self) -> ImageBuffer<Luma<u8>, Vec<u8>> {
        ImageBuffer::from_raw(self.width as u32, self.height as u32, self.pixels.clone()).expect("buffer size")
    }
}

/// Reads a PNG or PGM (chosen by extension) as 8-bit grayscale.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => FragError::io(path, io),
        other => FragError::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let luma = img.to_luma8();
    let (w, h) = luma.dimensions();
    GrayImage::new(w as usize, h as usize, luma.into_raw())
}

/// Writes an 8-bit grayscale PNG or PGM depending on the extension.
pub fn save_image(path: &Path, image: &GrayImage) -> Result<()> {
    image.to_buffer().save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => FragError::io(path, io),
        other => FragError::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Fits the image into `height x width` without changing its aspect ratio
/// (bilinear), anchors it top-left, pads with white and scales to [0, 1].
pub fn resize_pad_values(image: &GrayImage, height: usize, width: usize) -> Result<Vec<f64>> {
    if image.is_empty() {
        return Err(FragError::Invalid("cannot resize an empty image".into()));
    }
    let scale = (height as f64 / image.height as f64).min(width as f64 / image.width as f64);
    let nh = ((image.height as f64 * scale).round() as usize).clamp(1, height);
    let nw = ((image.width as f64 * scale).round() as usize).clamp(1, width);
    let resized = if (nh, nw) == (image.height, image.width) {
        image.to_buffer()
    } else {
        imageops::resize(&image.to_buffer(), nw as u32, nh as u32, FilterType::Triangle)
    };
    let mut out = vec![1.0; height * width];
    for (y, row) in resized.rows().enumerate() {
        for (x, px) in row.enumerate() {
            out[y * width + x] = px.0[0] as f64 / 255.0;
        }
    }
    Ok(out)
}

/// [`resize_pad_values`] as a `1 x height x width x 1` tensor.
pub fn resize_pad<T: Scalar>(image: &GrayImage, height: usize, width: usize) -> Result<Tensor<T>> {
    let values = resize_pad_values(image, height, width)?;
    Ok(Tensor::from_vec([1, height, width, 1], values.into_iter().map(T::of).collect())?)
}
