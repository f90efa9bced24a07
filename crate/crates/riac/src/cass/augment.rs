use super::CassImage;
use crate::error::{Error, Result};

/// The fixed augmentation menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Transform {
    /// Central 90% crop, resized back to the full resolution.
    CenterCrop,
    HorizontalFlip,
    VerticalFlip,
    RotatePlus45,
    RotateMinus45,
}

impl Transform {
    pub const MENU: [Transform; 5] = [
        Transform::CenterCrop,
        Transform::HorizontalFlip,
        Transform::VerticalFlip,
        Transform::RotatePlus45,
        Transform::RotateMinus45,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Transform::CenterCrop => "crop",
            Transform::HorizontalFlip => "hflip",
            Transform::VerticalFlip => "vflip",
            Transform::RotatePlus45 => "rot45p",
            Transform::RotateMinus45 => "rot45n",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentationSpec {
    pub transforms: Vec<Transform>,
    pub keep_original: bool,
}

impl AugmentationSpec {
    pub fn full() -> Self {
        AugmentationSpec { transforms: Transform::MENU.to_vec(), keep_original: true }
    }

    pub fn none() -> Self {
        AugmentationSpec { transforms: Vec::new(), keep_original: true }
    }
}

/// Applies every enabled transform; outputs are `(suffix, image)` pairs,
/// the original (suffix empty) first when kept.
pub fn augment(image: &CassImage, spec: &AugmentationSpec) -> Result<Vec<(String, CassImage)>> {
    if image.width != image.height {
        return Err(Error::InvalidArgument(format!(
            "augmentation expects a square image, got {}x{}",
            image.width, image.height
        )));
    }
    let mut out = Vec::new();
    if spec.keep_original {
        out.push((String::new(), image.clone()));
    }
    for t in &spec.transforms {
        let img = match t {
            Transform::CenterCrop => center_crop_resize(image, 0.9),
            Transform::HorizontalFlip => hflip(image),
            Transform::VerticalFlip => vflip(image),
            Transform::RotatePlus45 => rotate(image, 45.0_f64.to_radians()),
            Transform::RotateMinus45 => rotate(image, (-45.0_f64).to_radians()),
        };
        out.push((t.as_str().to_string(), img));
    }
    Ok(out)
}

pub fn hflip(image: &CassImage) -> CassImage {
    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            out.put(image.width - 1 - x, y, image.get(x, y));
        }
    }
    out
}

pub fn vflip(image: &CassImage) -> CassImage {
    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            out.put(x, image.height - 1 - y, image.get(x, y));
        }
    }
    out
}

fn center_crop_resize(image: &CassImage, fraction: f64) -> CassImage {
    let size = image.width;
    let crop = (size as f64 * fraction).round().max(1.0) as usize;
    let off = (size - crop) as f64 / 2.0;
    let mut out = image.clone();
    for y in 0..size {
        for x in 0..size {
            // Map the output pixel into the crop window, then sample.
            let sx = off + (x as f64 + 0.5) * crop as f64 / size as f64 - 0.5;
            let sy = off + (y as f64 + 0.5) * crop as f64 / size as f64 - 0.5;
            out.put(x, y, bilinear(image, sx, sy));
        }
    }
    out
}

fn rotate(image: &CassImage, angle: f64) -> CassImage {
    let size = image.width as f64;
    let c = (size - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            // Inverse rotation about the image center, black outside.
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            let sx = c + cos * dx + sin * dy;
            let sy = c - sin * dx + cos * dy;
            let rgb = if sx < 0.0 || sy < 0.0 || sx > size - 1.0 || sy > size - 1.0 {
                [0, 0, 0]
            } else {
                bilinear(image, sx, sy)
            };
            out.put(x, y, rgb);
        }
    }
    out
}

fn bilinear(image: &CassImage, x: f64, y: f64) -> [u8; 3] {
    let max = (image.width - 1) as f64;
    let x = x.clamp(0.0, max);
    let y = y.clamp(0.0, max);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(image.width - 1);
    let y1 = (y0 + 1).min(image.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let mut rgb = [0u8; 3];
    for ch in 0..3 {
        let p00 = image.get(x0, y0)[ch] as f64;
        let p10 = image.get(x1, y0)[ch] as f64;
        let p01 = image.get(x0, y1)[ch] as f64;
        let p11 = image.get(x1, y1)[ch] as f64;
        let v = p00 * (1.0 - fx) * (1.0 - fy)
            + p10 * fx * (1.0 - fy)
            + p01 * (1.0 - fx) * fy
            + p11 * fx * fy;
        rgb[ch] = v.round().clamp(0.0, 255.0) as u8;
    }
    rgb
}
