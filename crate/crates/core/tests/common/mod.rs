#![allow(dead_code)]

use std::path::PathBuf;

use rpg::denoisers::{CondMixture, GmmWorld, Mixture1d};
use rpg::diffusion::LatentGrid;
use rpg::layout::RegionRect;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn gaussian(mean: f64, var: f64) -> CondMixture {
    CondMixture::uniform(Mixture1d::gaussian(mean, var))
}

/// Equal-weight mixture of the given `(mean, var)` components, same on
/// every channel.
pub fn mixture(parts: &[(f64, f64)]) -> CondMixture {
    let w = 1.0 / parts.len() as f64;
    let comps = parts.iter().map(|&(m, v)| rpg::denoisers::Component { weight: w, mean: m, var: v }).collect();
    CondMixture::uniform(Mixture1d::new(comps).unwrap())
}

pub fn world(entries: &[(&str, CondMixture)]) -> GmmWorld {
    entries.iter().fold(GmmWorld::new(), |w, (id, m)| w.with(id, m.clone()))
}

/// Running mean and standard error over scalar observations.
#[derive(Debug, Default, Clone, Copy)]
pub struct Stats {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Stats {
    pub fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(mut self, other: Stats) -> Stats {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n
    }

    pub fn variance(&self) -> f64 {
        (self.sum_sq - self.sum * self.sum / self.n) / (self.n - 1.0)
    }

    pub fn se(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }
}

/// Per-channel stats of every cell inside `rect`.
pub fn region_stats(grid: &LatentGrid, rect: &RegionRect) -> Vec<Stats> {
    let mut out = vec![Stats::default(); grid.channels()];
    for y in rect.y0..rect.y0 + rect.h {
        for x in rect.x0..rect.x0 + rect.w {
            for (c, s) in out.iter_mut().enumerate() {
                s.push(grid.get(y as usize, x as usize, c) as f64);
            }
        }
    }
    out
}

pub fn merge_all(parts: impl IntoIterator<Item = Vec<Stats>>) -> Vec<Stats> {
    parts.into_iter().reduce(|a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()).unwrap_or_default()
}

/// `|a - b|` in units of the combined standard error.
pub fn z_score(a: &Stats, b: &Stats) -> f64 {
    (a.mean() - b.mean()).abs() / (a.se().powi(2) + b.se().powi(2)).sqrt()
}

/// `E[x | z]` for `z = sqrt(ab) x + sqrt(1 - ab) e` by Simpson's rule on a
/// fine grid, with the integrand kept in log space until normalization.
pub fn posterior_mean_by_quadrature(components: &[(f64, f64, f64)], z: f64, ab: f64) -> f64 {
    let lo = components.iter().map(|&(_, m, v)| m - 12.0 * v.sqrt()).fold(f64::INFINITY, f64::min);
    let hi = components.iter().map(|&(_, m, v)| m + 12.0 * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
    let n = 400_000usize;
    let h = (hi - lo) / n as f64;
    let noise_var = 1.0 - ab;
    let log_f = |x: f64| {
        let prior = components
            .iter()
            .map(|&(w, m, v)| w * (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
            .sum::<f64>();
        prior.ln() - (z - ab.sqrt() * x).powi(2) / (2.0 * noise_var)
    };
    let logs: Vec<f64> = (0..=n).map(|i| log_f(lo + i as f64 * h)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, l) in logs.iter().enumerate() {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = (l - top).exp();
        num += w * p * (lo + i as f64 * h);
        den += w * p;
    }
    num / den
}
