use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::diffusion::LatentGrid;
use crate::fsutil::write_atomic;

/// Latent value drawn as black.
pub const PNG_LOW: f32 = -3.0;
/// Latent value drawn as white.
pub const PNG_HIGH: f32 = 3.0;

/// `round(255 * (v - PNG_LOW) / (PNG_HIGH - PNG_LOW))`, clamped to 0..=255.
pub fn to_byte(v: f32) -> u8 {
    let scaled = (v - PNG_LOW) / (PNG_HIGH - PNG_LOW) * 255.0;
    scaled.round().clamp(0.0, 255.0) as u8
}

/// Inspection image: channels 0..3 as RGB when there are at least three,
/// otherwise channel 0 as gray. Each cell becomes a `scale × scale` block.
pub fn latent_to_image(grid: &LatentGrid, scale: u32) -> DynamicImage {
    let scale = scale.max(1);
    let (w, h) = (grid.width() as u32 * scale, grid.height() as u32 * scale);
    let cell = |x: u32, y: u32| grid.cell((y / scale) as usize, (x / scale) as usize);
    if grid.channels() >= 3 {
        DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| {
            let c = cell(x, y);
            image::Rgb([to_byte(c[0]), to_byte(c[1]), to_byte(c[2])])
        }))
    } else {
        DynamicImage::ImageLuma8(GrayImage::from_fn(w, h, |x, y| image::Luma([to_byte(cell(x, y)[0])])))
    }
}

pub fn png_bytes(grid: &LatentGrid, scale: u32) -> Result<Vec<u8>, image::ImageError> {
    let mut out = std::io::Cursor::new(Vec::new());
    latent_to_image(grid, scale).write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, grid: &LatentGrid, scale: u32) -> std::io::Result<()> {
    let bytes = png_bytes(grid, scale).map_err(std::io::Error::other)?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::LatentShape;

    #[test]
    fn affine_map_endpoints() {
        assert_eq!(to_byte(PNG_LOW), 0);
        assert_eq!(to_byte(PNG_HIGH), 255);
        assert_eq!(to_byte(0.0), 128);
        assert_eq!(to_byte(-10.0), 0);
        assert_eq!(to_byte(10.0), 255);
    }

    #[test]
    fn gray_and_rgb() {
        let g = LatentGrid::from_fn(LatentShape::new(1, 2, 2), |_, x, _| if x == 0 { -3.0 } else { 3.0 });
        let img = latent_to_image(&g, 2).to_luma8();
        assert_eq!(img.dimensions(), (4, 2));
        assert_eq!(img.get_pixel(1, 1).0, [0]);
        assert_eq!(img.get_pixel(2, 0).0, [255]);
        let rgb = LatentGrid::from_fn(LatentShape::new(1, 1, 4), |_, _, c| c as f32 - 1.0);
        assert_eq!(latent_to_image(&rgb, 1).to_rgb8().get_pixel(0, 0).0, [85, 128, 170]);
        let bytes = png_bytes(&rgb, 1).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
