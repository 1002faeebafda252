use std::path::Path;

use image::imageops::FilterType;
use image::{DynamicImage, ImageReader, Rgb32FImage};
use ndarray::Array3;

use crate::error::{Error, Result};
use crate::model::{ChannelStats, ImageInput, IMAGE_SIZE};

/// How an image file becomes an [`ImageInput`]: alpha over `background`,
/// bilinear resize to 224², then `(v - mean) / std` per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessSpec {
    pub size: usize,
    pub stats: ChannelStats,
    pub background: [f32; 3],
}

impl PreprocessSpec {
    pub fn new(stats: ChannelStats) -> Self {
        Self {
            size: IMAGE_SIZE,
            stats,
            background: [1.0, 1.0, 1.0],
        }
    }

    /// Normalized values lie in `[(0 - mean) / std, (1 - mean) / std]` per channel.
    pub fn value_range(&self, channel: usize) -> (f32, f32) {
        let (m, s) = (self.stats.mean[channel], self.stats.std[channel]);
        (-m / s, (1.0 - m) / s)
    }
}

pub fn load_rgb(path: &Path, background: [f32; 3]) -> Result<Rgb32FImage> {
    let unreadable = |reason: String| Error::UnreadableImage {
        path: path.to_path_buf(),
        reason,
    };
    if !path.is_file() {
        return Err(Error::FileMissing(path.to_path_buf()));
    }
    let img: DynamicImage = ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?
        .decode()
        .map_err(|e| unreadable(e.to_string()))?;
    Ok(composite(&img, background))
}

/// Converts to RGB, blending any alpha channel over `background`.
pub fn composite(img: &DynamicImage, background: [f32; 3]) -> Rgb32FImage {
    let rgba = img.to_rgba32f();
    Rgb32FImage::from_fn(rgba.width(), rgba.height(), |x, y| {
        let p = rgba.get_pixel(x, y).0;
        let a = p[3];
        image::Rgb([0, 1, 2].map(|c| a * p[c] + (1.0 - a) * background[c]))
    })
}

/// Resizes and normalizes an RGB image into network layout.
pub fn to_input(rgb: &Rgb32FImage, spec: &PreprocessSpec) -> Result<ImageInput> {
    let size = spec.size as u32;
    let resized;
    let src = if rgb.dimensions() == (size, size) {
        rgb
    } else {
        resized = image::imageops::resize(rgb, size, size, FilterType::Triangle);
        &resized
    };
    let s = spec.size;
    let px = Array3::from_shape_fn((3, s, s), |(c, y, x)| {
        let v = src.get_pixel(x as u32, y as u32).0[c].clamp(0.0, 1.0);
        (v - spec.stats.mean[c]) / spec.stats.std[c]
    });
    ImageInput::new(px)
}

pub fn preprocess_image(path: &Path, spec: &PreprocessSpec) -> Result<ImageInput> {
    to_input(&load_rgb(path, spec.background)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::backbone::{HALF_STATS, IMAGENET_STATS};
    use image::{Rgba, RgbaImage};

    #[test]
    fn rgba_composited_over_white() {
        let img = RgbaImage::from_fn(2, 2, |x, y| match (x, y) {
            (0, 0) => Rgba([255, 0, 0, 255]),
            (1, 0) => Rgba([0, 0, 255, 0]),
            (0, 1) => Rgba([0, 255, 0, 128]),
            _ => Rgba([51, 102, 153, 64]),
        });
        let out = composite(&DynamicImage::ImageRgba8(img.clone()), [1.0; 3]);
        for (x, y, p) in img.enumerate_pixels() {
            let a = p.0[3] as f32 / 255.0;
            for c in 0..3 {
                let manual = a * (p.0[c] as f32 / 255.0) + (1.0 - a);
                assert!((out.get_pixel(x, y).0[c] - manual).abs() < 1e-6);
            }
        }
        assert_eq!(out.get_pixel(1, 0).0, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn render_resized_and_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.png");
        RgbaImage::from_fn(137, 137, |x, y| Rgba([(x * 2) as u8, (y * 2) as u8, 90, if x > 60 { 255 } else { 0 }]))
            .save(&path)
            .unwrap();
        let spec = PreprocessSpec::new(IMAGENET_STATS);
        let img = preprocess_image(&path, &spec).unwrap();
        assert_eq!(img.pixels().shape(), &[3, 224, 224]);
        for c in 0..3 {
            let (lo, hi) = spec.value_range(c);
            assert!(img.pixels().index_axis(ndarray::Axis(0), c).iter().all(|&v| v >= lo - 1e-6 && v <= hi + 1e-6));
        }
        assert_eq!(img, preprocess_image(&path, &spec).unwrap());
    }

    #[test]
    fn native_size_is_not_resampled() {
        let rgb = Rgb32FImage::from_fn(224, 224, |x, y| image::Rgb([x as f32 / 224.0, y as f32 / 224.0, 0.25]));
        let img = to_input(&rgb, &PreprocessSpec::new(HALF_STATS)).unwrap();
        assert!((img.pixels()[[0, 10, 100]] - ((100.0 / 224.0) - 0.5) / 0.5).abs() < 1e-6);
        assert!((img.pixels()[[2, 0, 0]] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn grayscale_expands_and_garbage_fails() {
        let dir = tempfile::tempdir().unwrap();
        let gray = dir.path().join("g.png");
        image::GrayImage::from_pixel(10, 10, image::Luma([255])).save(&gray).unwrap();
        let img = preprocess_image(&gray, &PreprocessSpec::new(HALF_STATS)).unwrap();
        assert!(img.pixels().iter().all(|&v| (v - 1.0).abs() < 1e-6));

        let bad = dir.path().join("b.png");
        fs_write(&bad);
        assert!(matches!(
            preprocess_image(&bad, &PreprocessSpec::new(HALF_STATS)),
            Err(Error::UnreadableImage { .. })
        ));
    }

    fn fs_write(p: &Path) {
        std::fs::write(p, b"\x89PNG garbage").unwrap();
    }
}
