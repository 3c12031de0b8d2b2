use super::DiffusionError;

const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 2e-2;
const REFERENCE_STEPS: f64 = 1000.0;
const BETA_MAX: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    /// Betas spaced linearly from `1e-4` to `2e-2` at 1000 steps, with both
    /// endpoints scaled by `1000 / T` for other step counts.
    #[default]
    Linear,
}

/// Per-step variances and their cumulative products. Timesteps run `1..=T`;
/// `alpha_bar(0)` is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule, DiffusionError> {
    if steps == 0 {
        return Err(DiffusionError::BadStepCount(steps));
    }
    let betas = match kind {
        ScheduleKind::Linear => {
            let scale = REFERENCE_STEPS / steps as f64;
            let (start, end) = (BETA_START * scale, BETA_END * scale);
            (0..steps)
                .map(|i| {
                    let frac = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                    (start + (end - start) * frac).min(BETA_MAX)
                })
                .collect()
        }
    };
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    /// Builds a schedule from explicit betas, `betas[0]` being step 1.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, DiffusionError> {
        if betas.is_empty() {
            return Err(DiffusionError::BadStepCount(0));
        }
        if let Some(&b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(DiffusionError::BadBeta(b));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "timestep {t} outside 1..={}", self.steps());
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Coefficients of the DDPM posterior `q(z_{t-1} | z_t, x0)`:
    /// `(coef_x0, coef_zt, variance)` so that the mean is
    /// `coef_x0 * x0 + coef_zt * z_t`.
    pub fn posterior(&self, t: usize) -> (f64, f64, f64) {
        if t == 1 {
            // alpha_bar(0) = 1: the posterior collapses onto x0.
            return (1.0, 0.0, 0.0);
        }
        let beta = self.beta(t);
        let ab_t = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let denom = 1.0 - ab_t;
        let coef_x0 = ab_prev.sqrt() * beta / denom;
        let coef_zt = (1.0 - beta).sqrt() * (1.0 - ab_prev) / denom;
        let variance = beta * (1.0 - ab_prev) / denom;
        (coef_x0, coef_zt, variance)
    }
}
