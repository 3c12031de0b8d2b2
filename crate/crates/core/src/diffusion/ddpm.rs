use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiffusionError, LatentGrid, LatentShape, NoiseSchedule};

/// Forward process: `sqrt(ab_t) * x0 + sqrt(1 - ab_t) * noise`.
pub fn q_sample(
    x0: &LatentGrid,
    t: usize,
    noise: &LatentGrid,
    schedule: &NoiseSchedule,
) -> Result<LatentGrid, DiffusionError> {
    noise.ensure_shape(x0.shape())?;
    check_t(t, 0, schedule)?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0.data().iter().zip(noise.data()).map(|(&x, &n)| (a * x as f64 + b * n as f64) as f32).collect();
    LatentGrid::from_raw(x0.shape(), data)
}

/// One ancestral DDPM step from `z_t` to `z_{t-1}`, drawing fresh noise.
pub fn ddpm_step(
    z_t: &LatentGrid,
    t: usize,
    x0_pred: &LatentGrid,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<LatentGrid, DiffusionError> {
    let noise = LatentGrid::standard_normal(z_t.shape(), rng);
    ddpm_step_with_noise(z_t, t, x0_pred, schedule, &noise)
}

/// DDPM posterior mean given `(z_t, x0_pred)` plus `sqrt(variance) * noise`.
/// At `t = 1` the variance is zero and `noise` is ignored.
pub fn ddpm_step_with_noise(
    z_t: &LatentGrid,
    t: usize,
    x0_pred: &LatentGrid,
    schedule: &NoiseSchedule,
    noise: &LatentGrid,
) -> Result<LatentGrid, DiffusionError> {
    x0_pred.ensure_shape(z_t.shape())?;
    noise.ensure_shape(z_t.shape())?;
    check_t(t, 1, schedule)?;
    let (c_x0, c_zt, var) = schedule.posterior(t);
    let sigma = var.sqrt();
    let data = z_t
        .data()
        .iter()
        .zip(x0_pred.data())
        .zip(noise.data())
        .map(|((&z, &x0), &n)| (c_x0 * x0 as f64 + c_zt * z as f64 + sigma * n as f64) as f32)
        .collect();
    LatentGrid::from_raw(z_t.shape(), data)
}

fn check_t(t: usize, min: usize, schedule: &NoiseSchedule) -> Result<(), DiffusionError> {
    if t < min || t > schedule.steps() {
        return Err(DiffusionError::StepOutOfRange { t, steps: schedule.steps() });
    }
    Ok(())
}

/// Deterministic noise derived from a seed. The initial latent uses ChaCha
/// stream 0 and step `t` uses stream `t`, so every draw is independent of
/// how many other draws were made before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    /// `z_T`.
    pub fn initial(&self, shape: LatentShape) -> LatentGrid {
        LatentGrid::standard_normal(shape, &mut self.stream(0))
    }

    /// Posterior noise for the step out of `z_t`.
    pub fn step(&self, t: usize, shape: LatentShape) -> LatentGrid {
        LatentGrid::standard_normal(shape, &mut self.stream(t as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, ScheduleKind};

    fn shape() -> LatentShape {
        LatentShape::new(2, 3, 2)
    }

    fn ramp() -> LatentGrid {
        LatentGrid::from_fn(shape(), |y, x, c| y as f32 - 0.5 * x as f32 + 0.25 * c as f32)
    }

    #[test]
    fn q_sample_at_zero_is_identity() {
        let s = make_schedule(50, ScheduleKind::Linear).unwrap();
        let noise = NoiseSource::new(1).initial(shape());
        assert_eq!(q_sample(&ramp(), 0, &noise, &s).unwrap(), ramp());
    }

    #[test]
    fn q_sample_without_noise_scales() {
        let s = make_schedule(50, ScheduleKind::Linear).unwrap();
        let out = q_sample(&ramp(), 30, &LatentGrid::zeros(shape()), &s).unwrap();
        let a = s.alpha_bar(30).sqrt();
        for (o, x) in out.data().iter().zip(ramp().data()) {
            assert_eq!(*o, (a * *x as f64) as f32);
        }
    }

    #[test]
    fn q_sample_of_pure_noise_at_t_max() {
        let s = make_schedule(50, ScheduleKind::Linear).unwrap();
        let out = q_sample(&LatentGrid::zeros(shape()), 50, &LatentGrid::filled(shape(), 1.0), &s).unwrap();
        let expected = (1.0 - s.alpha_bar(50)).sqrt() as f32;
        assert!(out.data().iter().all(|v| *v == expected));
    }

    #[test]
    fn q_sample_rejects_shape_mismatch() {
        let s = make_schedule(5, ScheduleKind::Linear).unwrap();
        let other = LatentGrid::zeros(LatentShape::new(3, 3, 2));
        assert!(matches!(q_sample(&ramp(), 1, &other, &s), Err(DiffusionError::ShapeMismatch { .. })));
    }

    #[test]
    fn final_step_adds_no_noise() {
        let s = make_schedule(10, ScheduleKind::Linear).unwrap();
        let z = NoiseSource::new(3).initial(shape());
        let a = ddpm_step(&z, 1, &ramp(), &s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = ddpm_step(&z, 1, &ramp(), &s, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, ramp());
    }

    #[test]
    fn vanishing_beta_is_a_fixed_point() {
        let s = NoiseSchedule::from_betas(vec![0.01, 1e-14]).unwrap();
        let z = ramp();
        let noise = NoiseSource::new(9).step(2, shape());
        let out = ddpm_step_with_noise(&z, 2, &z, &s, &noise).unwrap();
        for (o, x) in out.data().iter().zip(z.data()) {
            assert!((o - x).abs() < 1e-5, "{o} vs {x}");
        }
    }

    /// Straight-line scalar form of the DDPM posterior, written independently
    /// of `NoiseSchedule::posterior`.
    fn scalar_posterior(betas: &[f64], t: usize, z: f64, x0: f64, n: f64) -> f64 {
        let ab = |k: usize| betas[..k].iter().map(|b| 1.0 - b).product::<f64>();
        let beta = betas[t - 1];
        let mean = (ab(t - 1).sqrt() * beta / (1.0 - ab(t))) * x0
            + ((1.0 - beta).sqrt() * (1.0 - ab(t - 1)) / (1.0 - ab(t))) * z;
        let var = (1.0 - ab(t - 1)) / (1.0 - ab(t)) * beta;
        mean + var.sqrt() * n
    }

    #[test]
    fn step_matches_scalar_oracle() {
        let s = make_schedule(20, ScheduleKind::Linear).unwrap();
        let z = NoiseSource::new(4).initial(shape());
        let noise = NoiseSource::new(4).step(7, shape());
        let x0 = ramp();
        let out = ddpm_step_with_noise(&z, 7, &x0, &s, &noise).unwrap();
        for i in 0..shape().len() {
            let expected =
                scalar_posterior(s.betas(), 7, z.data()[i] as f64, x0.data()[i] as f64, noise.data()[i] as f64);
            assert!((out.data()[i] as f64 - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn step_rejects_t_zero() {
        let s = make_schedule(5, ScheduleKind::Linear).unwrap();
        let z = ramp();
        assert!(matches!(ddpm_step_with_noise(&z, 0, &z, &s, &z), Err(DiffusionError::StepOutOfRange { .. })));
    }

    #[test]
    fn noise_streams_are_reproducible_and_distinct() {
        let src = NoiseSource::new(11);
        assert_eq!(src.step(5, shape()), src.step(5, shape()));
        assert_ne!(src.step(5, shape()), src.step(6, shape()));
        assert_ne!(src.initial(shape()), NoiseSource::new(12).initial(shape()));
    }
}
