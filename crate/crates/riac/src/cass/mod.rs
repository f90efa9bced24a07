//! CASS rendering: part trajectory matrices drawn into square RGB images
//! with temporal color coding, plus augmentation and PPM I/O.

mod augment;
mod color;
mod ppm;
mod render;

pub use augment::{augment, AugmentationSpec, Transform};
pub use color::temporal_color;
pub use ppm::{read_ppm, write_ppm};
pub use render::render_cass;

use crate::error::{Error, Result};
use crate::skeleton::PartLabel;

/// A rendered W x H x 3 eight-bit image of one part's trajectories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CassImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<u8>,
    pub part: PartLabel,
    pub sequence_id: String,
}

impl CassImage {
    pub fn new(size: usize, part: PartLabel, sequence_id: &str) -> Self {
        CassImage {
            width: size,
            height: size,
            pixels: vec![0; size * size * 3],
            part,
            sequence_id: sequence_id.to_string(),
        }
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Pixel bytes mapped to reals in [0, 1], channels-last [H, W, 3].
    pub fn to_tensor(&self) -> crate::tensor::Tensor {
        let data = self.pixels.iter().map(|&b| b as f64 / 255.0).collect();
        crate::tensor::Tensor::new(vec![self.height, self.width, 3], data).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// Square image side length.
    pub size: usize,
    /// Hue sweep endpoints in degrees; defaults run blue (240) to red (0).
    pub hue_start: f64,
    pub hue_end: f64,
    /// Bone line width in pixels.
    pub line_width: usize,
    /// Fraction of the image left empty around the drawing box.
    pub margin: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { size: 224, hue_start: 240.0, hue_end: 0.0, line_width: 1, margin: 0.10 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        if !(0.0..=0.4).contains(&self.margin) {
            return Err(Error::InvalidArgument(format!(
                "margin must be in [0, 0.4], got {}",
                self.margin
            )));
        }
        for h in [self.hue_start, self.hue_end] {
            if !(0.0..360.0).contains(&h) {
                return Err(Error::InvalidArgument(format!("hue {h} outside [0, 360)")));
            }
        }
        if self.line_width == 0 {
            return Err(Error::InvalidArgument("line width must be positive".into()));
        }
        Ok(())
    }
}
