use super::GmmWorld;
use crate::diffusion::LatentGrid;
use crate::layout::{validate_partition, PartitionViolation, RegionRect};

/// Labels each region with the cond whose per-channel mixture means are
/// nearest (squared distance) to the region's mean latent. Ties go to the
/// lexicographically smaller id.
pub fn oracle_caption(
    latent: &LatentGrid,
    regions: &[RegionRect],
    world: &GmmWorld,
) -> Result<Vec<String>, PartitionViolation> {
    validate_partition(regions, latent.canvas())?;
    let channels = latent.channels();
    let centers: Vec<(&str, Vec<f64>)> =
        world.iter().filter(|(_, m)| m.supports(channels)).map(|(id, m)| (id, m.means(channels))).collect();
    Ok(regions
        .iter()
        .map(|rect| {
            let mean = latent.region_mean(rect);
            let mut best: Option<(&str, f64)> = None;
            for (id, center) in &centers {
                let dist: f64 = mean.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(_, d)| dist < d) {
                    best = Some((id, dist));
                }
            }
            best.map(|(id, _)| id.to_string()).unwrap_or_default()
        })
        .collect())
}
