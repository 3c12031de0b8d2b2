use super::{
    ddpm_step_with_noise, q_sample, Denoiser, DiffusionError, LatentGrid, LatentShape, NoiseSchedule, SamplerConfig,
};
use crate::denoisers::CondEmbedding;
use crate::layout::{Canvas, RegionRect};

/// Binary editability mask; `true` cells are regenerated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(canvas: Canvas, cells: Vec<bool>) -> Result<Self, DiffusionError> {
        let (width, height) = (canvas.width as usize, canvas.height as usize);
        if cells.len() != width * height {
            return Err(DiffusionError::BadShape(LatentShape::new(height, width, 1)));
        }
        Ok(Mask { width, height, cells })
    }

    pub fn empty(canvas: Canvas) -> Self {
        Mask {
            width: canvas.width as usize,
            height: canvas.height as usize,
            cells: vec![false; canvas.area() as usize],
        }
    }

    pub fn full(canvas: Canvas) -> Self {
        Mask { width: canvas.width as usize, height: canvas.height as usize, cells: vec![true; canvas.area() as usize] }
    }

    /// Ones inside `rect`, zeros elsewhere.
    pub fn from_rect(rect: &RegionRect, canvas: Canvas) -> Result<Self, DiffusionError> {
        if !rect.fits(canvas) {
            return Err(DiffusionError::RegionOutOfBounds(*rect));
        }
        let mut mask = Mask::empty(canvas);
        for y in rect.y0..rect.y0 + rect.h {
            for x in rect.x0..rect.x0 + rect.w {
                mask.set(y as usize, x as usize, true);
            }
        }
        Ok(mask)
    }

    pub fn canvas(&self) -> Canvas {
        Canvas { width: self.width as u32, height: self.height as u32 }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.cells[y * self.width + x] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Single-channel latent of zeros and ones, the on-disk mask form.
    pub fn to_latent(&self) -> LatentGrid {
        let data = self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        LatentGrid::new(LatentShape::new(self.height, self.width, 1), data).expect("mask dims are positive")
    }

    pub fn from_latent(grid: &LatentGrid) -> Result<Self, DiffusionError> {
        if grid.channels() != 1 {
            return Err(DiffusionError::BadLatentFile(format!("mask must have 1 channel, found {}", grid.channels())));
        }
        let cells = grid
            .data()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(DiffusionError::BadLatentFile(format!("mask value {other} is not 0 or 1"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(Mask { width: grid.width(), height: grid.height(), cells })
    }

    /// Masked cells from `inside`, the rest from `outside`.
    fn merge(&self, inside: &LatentGrid, outside: &LatentGrid) -> LatentGrid {
        let c = inside.channels();
        let data = inside
            .data()
            .iter()
            .zip(outside.data())
            .enumerate()
            .map(|(i, (&a, &b))| if self.cells[i / c] { a } else { b })
            .collect();
        LatentGrid::new(inside.shape(), data).expect("merged values are finite")
    }
}

/// Mask-and-inpaint sampling. Inside the mask cells are denoised under
/// `cond`; outside they are replaced at every step by the source noised to
/// the same level with that step's noise, which at `t = 0` is the source
/// itself.
pub fn sample_inpaint(
    source_x0: &LatentGrid,
    mask: &Mask,
    cond: &CondEmbedding,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
) -> Result<LatentGrid, DiffusionError> {
    config.validate(schedule)?;
    let shape = source_x0.shape();
    if mask.canvas() != source_x0.canvas() {
        return Err(DiffusionError::ShapeMismatch {
            expected: shape,
            got: LatentShape::new(mask.height, mask.width, shape.channels),
        });
    }
    if mask.is_empty() {
        return Err(DiffusionError::EmptyMask);
    }
    let steps = schedule.steps();
    let source = config.noise();
    let init = source.initial(shape);
    let known = q_sample(source_x0, steps, &init, schedule)?;
    let mut z = mask.merge(&init, &known);
    for t in (1..=steps).rev() {
        let noise = source.step(t, shape);
        let x0 = denoiser.predict_x0(&z, t, cond, schedule)?;
        x0.ensure_shape(shape)?;
        let inside = ddpm_step_with_noise(&z, t, &x0, schedule, &noise)?;
        let outside = q_sample(source_x0, t - 1, &noise, schedule)?;
        z = mask.merge(&inside, &outside);
    }
    Ok(z)
}
