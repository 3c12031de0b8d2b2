use std::io::{self, Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::DiffusionError;
use crate::layout::{Canvas, RegionRect};

pub const RPGL_MAGIC: &[u8; 4] = b"RPGL";
pub const RPGL_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 12;

/// Height, width, and channel count of a latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatentShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LatentShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        LatentShape { height, width, channels }
    }

    pub fn of_canvas(canvas: Canvas, channels: usize) -> Self {
        LatentShape::new(canvas.height as usize, canvas.width as usize, channels)
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn canvas(&self) -> Canvas {
        Canvas { width: self.width as u32, height: self.height as u32 }
    }
}

impl std::fmt::Display for LatentShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// An `H x W x C` raster of finite `f32` values stored row-major as `(y, x, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    shape: LatentShape,
    data: Vec<f32>,
}

impl LatentGrid {
    pub fn new(shape: LatentShape, data: Vec<f32>) -> Result<Self, DiffusionError> {
        if shape.height == 0 || shape.width == 0 || shape.channels == 0 {
            return Err(DiffusionError::BadShape(shape));
        }
        if data.len() != shape.len() {
            return Err(DiffusionError::BadShape(shape));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite { index: i });
        }
        Ok(LatentGrid { shape, data })
    }

    pub fn filled(shape: LatentShape, value: f32) -> Self {
        assert!(value.is_finite());
        assert!(!shape.is_empty(), "latent dimensions must be at least 1");
        LatentGrid { shape, data: vec![value; shape.len()] }
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn from_fn(shape: LatentShape, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                for c in 0..shape.channels {
                    data.push(f(y, x, c));
                }
            }
        }
        LatentGrid::new(shape, data).expect("from_fn produced a non-finite value")
    }

    /// I.i.d. standard normal entries.
    pub fn standard_normal(shape: LatentShape, rng: &mut impl Rng) -> Self {
        let data = (0..shape.len()).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        LatentGrid { shape, data }
    }

    /// Builds a grid from values computed elsewhere, checking only that they
    /// are finite.
    pub(crate) fn from_raw(shape: LatentShape, data: Vec<f32>) -> Result<Self, DiffusionError> {
        debug_assert_eq!(data.len(), shape.len());
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite { index: i });
        }
        Ok(LatentGrid { shape, data })
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn canvas(&self) -> Canvas {
        self.shape.canvas()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    fn offset(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape.width + x) * self.shape.channels + c
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.offset(y, x, c)]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f32) {
        assert!(value.is_finite());
        let i = self.offset(y, x, c);
        self.data[i] = value;
    }

    /// The channel vector of one cell.
    pub fn cell(&self, y: usize, x: usize) -> &[f32] {
        let start = self.offset(y, x, 0);
        &self.data[start..start + self.shape.channels]
    }

    pub fn ensure_shape(&self, expected: LatentShape) -> Result<(), DiffusionError> {
        if self.shape != expected {
            return Err(DiffusionError::ShapeMismatch { expected, got: self.shape });
        }
        Ok(())
    }

    pub fn crop(&self, rect: &RegionRect) -> Result<LatentGrid, DiffusionError> {
        if !rect.fits(self.canvas()) {
            return Err(DiffusionError::RegionOutOfBounds(*rect));
        }
        let shape = LatentShape::new(rect.h as usize, rect.w as usize, self.shape.channels);
        let row_len = rect.w as usize * self.shape.channels;
        let mut data = Vec::with_capacity(shape.len());
        for y in rect.y0 as usize..(rect.y0 + rect.h) as usize {
            let start = self.offset(y, rect.x0 as usize, 0);
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        Ok(LatentGrid { shape, data })
    }

    /// Writes `patch` into this grid with its top-left corner at `rect`.
    pub fn paste(&mut self, rect: &RegionRect, patch: &LatentGrid) -> Result<(), DiffusionError> {
        let expected = LatentShape::new(rect.h as usize, rect.w as usize, self.shape.channels);
        patch.ensure_shape(expected)?;
        if !rect.fits(self.canvas()) {
            return Err(DiffusionError::RegionOutOfBounds(*rect));
        }
        let row_len = rect.w as usize * self.shape.channels;
        for (dy, y) in (rect.y0 as usize..(rect.y0 + rect.h) as usize).enumerate() {
            let dst = self.offset(y, rect.x0 as usize, 0);
            let src = dy * row_len;
            self.data[dst..dst + row_len].copy_from_slice(&patch.data[src..src + row_len]);
        }
        Ok(())
    }

    /// Per-channel mean over the cells of `rect`.
    pub fn region_mean(&self, rect: &RegionRect) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.shape.channels];
        for y in rect.y0 as usize..(rect.y0 + rect.h) as usize {
            for x in rect.x0 as usize..(rect.x0 + rect.w) as usize {
                for (a, v) in acc.iter_mut().zip(self.cell(y, x)) {
                    *a += *v as f64;
                }
            }
        }
        let n = rect.area() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn to_rpgl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        self.write_rpgl(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Serializes as RPGL: magic, version byte, `u32` height/width/channels,
    /// then little-endian `f32` data in `(y, x, c)` order.
    pub fn write_rpgl(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(RPGL_MAGIC)?;
        w.write_all(&[RPGL_VERSION])?;
        for dim in [self.shape.height, self.shape.width, self.shape.channels] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn from_rpgl_bytes(bytes: &[u8]) -> Result<Self, DiffusionError> {
        Self::read_rpgl(bytes)
    }

    pub fn read_rpgl(mut r: impl Read) -> Result<Self, DiffusionError> {
        let bad = |msg: &str| DiffusionError::BadLatentFile(msg.to_string());
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[..4] != RPGL_MAGIC {
            return Err(bad("missing RPGL magic"));
        }
        if header[4] != RPGL_VERSION {
            return Err(bad(&format!("unsupported version {}", header[4])));
        }
        let dim = |i: usize| u32::from_le_bytes(header[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
        let shape = LatentShape::new(dim(0), dim(1), dim(2));
        let mut payload = Vec::new();
        r.read_to_end(&mut payload).map_err(|e| bad(&e.to_string()))?;
        if payload.len() != 4 * shape.len() {
            return Err(bad(&format!("expected {} data bytes for {shape}, found {}", 4 * shape.len(), payload.len())));
        }
        let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        LatentGrid::new(shape, data)
    }

    /// Hex SHA-256 of the RPGL encoding.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_rpgl_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rpgl_layout_is_bit_exact() {
        let g = LatentGrid::new(LatentShape::new(1, 2, 1), vec![1.0, -2.5]).unwrap();
        let bytes = g.to_rpgl_bytes();
        let mut expected = b"RPGL\x01".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(LatentGrid::from_rpgl_bytes(b"RPGX\x01").is_err());
        let mut bytes = LatentGrid::zeros(LatentShape::new(2, 2, 1)).to_rpgl_bytes();
        bytes.pop();
        assert!(LatentGrid::from_rpgl_bytes(&bytes).is_err());
        bytes[4] = 2;
        assert!(LatentGrid::from_rpgl_bytes(&bytes).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let shape = LatentShape::new(1, 1, 1);
        assert!(matches!(LatentGrid::new(shape, vec![f32::NAN]), Err(DiffusionError::NonFinite { index: 0 })));
        assert!(LatentGrid::new(LatentShape::new(0, 1, 1), vec![]).is_err());
    }

    #[test]
    fn crop_and_paste_are_inverse() {
        let shape = LatentShape::new(4, 5, 2);
        let g = LatentGrid::from_fn(shape, |y, x, c| (y * 100 + x * 10 + c) as f32);
        let rect = RegionRect::new(1, 2, 3, 2, 0);
        let patch = g.crop(&rect).unwrap();
        assert_eq!(patch.get(0, 0, 1), g.get(2, 1, 1));
        let mut blank = LatentGrid::zeros(shape);
        blank.paste(&rect, &patch).unwrap();
        assert_eq!(blank.get(3, 3, 0), g.get(3, 3, 0));
        assert_eq!(blank.get(0, 0, 0), 0.0);
    }

    proptest! {
        #[test]
        fn rpgl_roundtrip(h in 1usize..5, w in 1usize..5, c in 1usize..4, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = LatentGrid::standard_normal(LatentShape::new(h, w, c), &mut rng);
            let back = LatentGrid::from_rpgl_bytes(&g.to_rpgl_bytes()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
