use std::fmt;

use super::{Canvas, LayoutError, RegionRect, SplitRatio, SplitSpec};

/// Splits `total` units in proportion to `weights` with the largest-remainder
/// method. Every share is the floor of its exact quota, and the leftover units
/// go to the largest remainders, earlier index first on ties.
pub fn allocate(total: u32, weights: &[SplitRatio]) -> Vec<u32> {
    if weights.is_empty() {
        return Vec::new();
    }
    // Bring every weight onto a common denominator. Denominators divide 10^6,
    // so the lcm does too.
    let lcm = weights.iter().fold(1u64, |acc, w| lcm(acc, w.denom()));
    let ints: Vec<u128> = weights.iter().map(|w| w.numer() as u128 * (lcm / w.denom()) as u128).collect();
    let sum: u128 = ints.iter().sum();
    let total_wide = total as u128;

    let mut shares: Vec<u32> = ints.iter().map(|&a| (total_wide * a / sum) as u32).collect();
    let assigned: u32 = shares.iter().sum();
    let mut order: Vec<(u128, usize)> = ints.iter().enumerate().map(|(i, &a)| (total_wide * a % sum, i)).collect();
    // Descending remainder, ascending index.
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in order.iter().take((total - assigned) as usize) {
        shares[i] += 1;
    }
    shares
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Resolves a split onto a canvas as row-major rectangles that tile it
/// exactly.
pub fn resolve_regions(spec: &SplitSpec, canvas: Canvas) -> Result<Vec<RegionRect>, LayoutError> {
    if canvas.width == 0 || canvas.height == 0 {
        return Err(LayoutError::InvalidCanvas { width: canvas.width, height: canvas.height });
    }
    let heights: Vec<SplitRatio> = spec.rows().iter().map(|r| r.height).collect();
    let row_heights = allocate(canvas.height, &heights);

    let mut rects = Vec::with_capacity(spec.region_count());
    let mut y0 = 0;
    for (row, &h) in spec.rows().iter().zip(&row_heights) {
        let widths = allocate(canvas.width, &row.columns);
        let mut x0 = 0;
        for &w in &widths {
            let index = rects.len();
            if w == 0 || h == 0 {
                return Err(LayoutError::CanvasTooSmall { region: index, width: canvas.width, height: canvas.height });
            }
            rects.push(RegionRect { x0, y0, w, h, index });
            x0 += w;
        }
        y0 += h;
    }
    Ok(rects)
}

/// Why a set of rectangles fails to tile a canvas. Rect positions refer to
/// the order of the slice handed to [`validate_partition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionViolation {
    InvalidCanvas,
    EmptyRect { position: usize },
    OutOfBounds { position: usize },
    Overlap { first: usize, second: usize, x: u32, y: u32 },
    Uncovered { x: u32, y: u32 },
}

impl fmt::Display for PartitionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionViolation::InvalidCanvas => write!(f, "canvas has a zero dimension"),
            PartitionViolation::EmptyRect { position } => write!(f, "rect {position} is empty"),
            PartitionViolation::OutOfBounds { position } => {
                write!(f, "rect {position} extends past the canvas")
            }
            PartitionViolation::Overlap { first, second, x, y } => {
                write!(f, "rects {first} and {second} overlap at ({x},{y})")
            }
            PartitionViolation::Uncovered { x, y } => write!(f, "cell ({x},{y}) is not covered"),
        }
    }
}

impl std::error::Error for PartitionViolation {}

/// Checks that `rects` are pairwise disjoint and cover `canvas` exactly.
/// Reports the first overlap found while painting in list order, otherwise
/// the first uncovered cell in row-major order.
pub fn validate_partition(rects: &[RegionRect], canvas: Canvas) -> Result<(), PartitionViolation> {
    if canvas.width == 0 || canvas.height == 0 {
        return Err(PartitionViolation::InvalidCanvas);
    }
    let width = canvas.width as usize;
    let mut owner: Vec<Option<usize>> = vec![None; width * canvas.height as usize];
    for (position, rect) in rects.iter().enumerate() {
        if rect.w == 0 || rect.h == 0 {
            return Err(PartitionViolation::EmptyRect { position });
        }
        if !rect.fits(canvas) {
            return Err(PartitionViolation::OutOfBounds { position });
        }
        for y in rect.y0..rect.y0 + rect.h {
            for x in rect.x0..rect.x0 + rect.w {
                let cell = &mut owner[y as usize * width + x as usize];
                if let Some(first) = *cell {
                    return Err(PartitionViolation::Overlap { first, second: position, x, y });
                }
                *cell = Some(position);
            }
        }
    }
    if let Some(i) = owner.iter().position(Option::is_none) {
        return Err(PartitionViolation::Uncovered { x: (i % width) as u32, y: (i / width) as u32 });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::parse_split;

    fn canvas(w: u32, h: u32) -> Canvas {
        Canvas::new(w, h).unwrap()
    }

    fn boxes(rects: &[RegionRect]) -> Vec<(u32, u32, u32, u32)> {
        rects.iter().map(|r| (r.x0, r.y0, r.w, r.h)).collect()
    }

    #[test]
    fn two_columns_split_evenly() {
        let rects = resolve_regions(&parse_split("1,1").unwrap(), canvas(8, 8)).unwrap();
        assert_eq!(boxes(&rects), vec![(0, 0, 4, 8), (4, 0, 4, 8)]);
    }

    #[test]
    fn two_rows_split_evenly() {
        let rects = resolve_regions(&parse_split("1;1").unwrap(), canvas(8, 8)).unwrap();
        assert_eq!(boxes(&rects), vec![(0, 0, 8, 4), (0, 4, 8, 4)]);
    }

    #[test]
    fn earliest_index_wins_remainder_ties() {
        let rects = resolve_regions(&parse_split("1,1,1").unwrap(), canvas(10, 4)).unwrap();
        let widths: Vec<u32> = rects.iter().map(|r| r.w).collect();
        assert_eq!(widths, vec![4, 3, 3]);
    }

    #[test]
    fn unequal_remainders_go_to_largest() {
        // quotas 10 * [1,2,3] / 6 = 1.67, 3.33, 5.0
        let w = allocate(10, &parse_split("1,2,3").unwrap().rows()[0].columns);
        assert_eq!(w, vec![2, 3, 5]);
    }

    #[test]
    fn starved_region_is_reported() {
        let err = resolve_regions(&parse_split("1,1,1").unwrap(), canvas(2, 2)).unwrap_err();
        assert_eq!(err, LayoutError::CanvasTooSmall { region: 2, width: 2, height: 2 });
        let err = resolve_regions(&parse_split("1;1;1,1").unwrap(), canvas(4, 2)).unwrap_err();
        assert_eq!(err, LayoutError::CanvasTooSmall { region: 2, width: 4, height: 2 });
    }

    #[test]
    fn resolved_output_is_a_partition() {
        let c = canvas(13, 7);
        let rects = resolve_regions(&parse_split("1,2;3,1,1;0.5").unwrap(), c).unwrap();
        assert_eq!(validate_partition(&rects, c), Ok(()));
        assert!(rects.iter().enumerate().all(|(i, r)| r.index == i));
    }

    #[test]
    fn identical_rects_overlap() {
        let r = RegionRect::new(0, 0, 4, 4, 0);
        assert_eq!(
            validate_partition(&[r, r], canvas(4, 4)),
            Err(PartitionViolation::Overlap { first: 0, second: 1, x: 0, y: 0 })
        );
    }

    #[test]
    fn half_cover_reports_first_gap() {
        let r = RegionRect::new(0, 0, 4, 8, 0);
        assert_eq!(validate_partition(&[r], canvas(8, 8)), Err(PartitionViolation::Uncovered { x: 4, y: 0 }));
    }

    #[test]
    fn out_of_bounds_and_empty_rects() {
        let c = canvas(4, 4);
        assert_eq!(
            validate_partition(&[RegionRect::new(2, 0, 4, 4, 0)], c),
            Err(PartitionViolation::OutOfBounds { position: 0 })
        );
        assert_eq!(
            validate_partition(&[RegionRect::new(0, 0, 0, 4, 0)], c),
            Err(PartitionViolation::EmptyRect { position: 0 })
        );
    }
}
