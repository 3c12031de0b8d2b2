use std::str::FromStr;

use super::{DiffusionError, LatentGrid, LatentShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizeMode {
    Nearest,
    #[default]
    Bilinear,
}

impl FromStr for ResizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "nearest" => Ok(ResizeMode::Nearest),
            "bilinear" => Ok(ResizeMode::Bilinear),
            other => Err(format!("unknown resize mode `{other}`")),
        }
    }
}

impl std::fmt::Display for ResizeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResizeMode::Nearest => "nearest",
            ResizeMode::Bilinear => "bilinear",
        })
    }
}

/// Spatial per-channel resampling.
///
/// `Nearest` picks source index `floor(i * src / dst)`, which is exact
/// subsampling for integer factors. `Bilinear` uses a corner-aligned grid:
/// output index `i` samples source coordinate `i * (src - 1) / (dst - 1)`,
/// and a single output cell samples the source centre.
pub fn resize_latent(
    grid: &LatentGrid,
    target_w: usize,
    target_h: usize,
    mode: ResizeMode,
) -> Result<LatentGrid, DiffusionError> {
    if target_w == 0 || target_h == 0 {
        return Err(DiffusionError::BadTarget { width: target_w, height: target_h });
    }
    if target_w == grid.width() && target_h == grid.height() {
        return Ok(grid.clone());
    }
    let shape = LatentShape::new(target_h, target_w, grid.channels());
    let out = match mode {
        ResizeMode::Nearest => LatentGrid::from_fn(shape, |y, x, c| {
            let sy = (y * grid.height() / target_h).min(grid.height() - 1);
            let sx = (x * grid.width() / target_w).min(grid.width() - 1);
            grid.get(sy, sx, c)
        }),
        ResizeMode::Bilinear => {
            let ys: Vec<_> = (0..target_h).map(|y| source_coord(y, grid.height(), target_h)).collect();
            let xs: Vec<_> = (0..target_w).map(|x| source_coord(x, grid.width(), target_w)).collect();
            LatentGrid::from_fn(shape, |y, x, c| {
                let (y0, y1, fy) = ys[y];
                let (x0, x1, fx) = xs[x];
                let top = lerp(grid.get(y0, x0, c), grid.get(y0, x1, c), fx);
                let bottom = lerp(grid.get(y1, x0, c), grid.get(y1, x1, c), fx);
                (top + (bottom - top) * fy) as f32
            })
        }
    };
    Ok(out)
}

fn lerp(a: f32, b: f32, f: f64) -> f64 {
    a as f64 + (b as f64 - a as f64) * f
}

/// Lower/upper source indices and the fractional weight of the upper one.
fn source_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let pos = if dst == 1 { (src - 1) as f64 / 2.0 } else { (i * (src - 1)) as f64 / (dst - 1) as f64 };
    let lo = (pos.floor() as usize).min(src - 1);
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let g = LatentGrid::from_fn(LatentShape::new(3, 4, 2), |y, x, c| (y * 7 + x * 3 + c) as f32 * 0.1);
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
            assert_eq!(resize_latent(&g, 4, 3, mode).unwrap(), g);
        }
    }

    #[test]
    fn constants_stay_constant() {
        let g = LatentGrid::filled(LatentShape::new(4, 4, 1), 0.3);
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
            for (w, h) in [(1, 1), (3, 7), (9, 2), (16, 16)] {
                let out = resize_latent(&g, w, h, mode).unwrap();
                assert!(out.data().iter().all(|v| *v == 0.3));
            }
        }
    }

    #[test]
    fn bilinear_upsample_hand_grid() {
        // [[0,1],[2,3]] is the plane v = 2y + x, and corner-aligned sampling
        // of a 4x4 grid lands on y, x in {0, 1/3, 2/3, 1}.
        let g = LatentGrid::new(LatentShape::new(2, 2, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = resize_latent(&g, 4, 4, ResizeMode::Bilinear).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expected = (2.0 * y as f64 + x as f64) / 3.0;
                assert!((out.get(y, x, 0) as f64 - expected).abs() < 1e-6);
            }
        }
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(out.get(3, 3, 0), 3.0);
    }

    #[test]
    fn nearest_downsample_subsamples() {
        let g = LatentGrid::from_fn(LatentShape::new(4, 4, 1), |y, x, _| (y * 4 + x) as f32);
        let out = resize_latent(&g, 2, 2, ResizeMode::Nearest).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn zero_target_rejected() {
        let g = LatentGrid::zeros(LatentShape::new(2, 2, 1));
        assert!(matches!(resize_latent(&g, 0, 2, ResizeMode::Bilinear), Err(DiffusionError::BadTarget { .. })));
    }
}
