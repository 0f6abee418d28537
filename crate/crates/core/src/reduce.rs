//! Compensated, order-fixed summation.
//!
//! Every reduction in the crate goes through [`tiled_sum`] or [`CompensatedSum`] so that the
//! result does not depend on how many worker threads ran: tiles have a fixed size, each tile
//! is summed sequentially, and tile partials are combined in index order.

use crate::par;

/// Number of terms in one reduction tile.
pub const TILE: usize = 2048;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Sum `term(i)` for `i in 0..len` with fixed tiling.
pub fn tiled_sum<F>(len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let tiles = len.div_ceil(TILE);
    let partials = par::map_range(tiles, |t| {
        let lo = t * TILE;
        let hi = (lo + TILE).min(len);
        (lo..hi).map(&term).collect::<CompensatedSum>().value()
    });
    partials.into_iter().collect::<CompensatedSum>().value()
}

pub fn sum_slice(values: &[f64]) -> f64 {
    tiled_sum(values.len(), |i| values[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..1000 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert!((acc.value() - 1e-13).abs() < 1e-25);
    }

    #[test]
    fn tiled_sum_matches_exact_integers() {
        let n = 3 * TILE + 17;
        let s = tiled_sum(n, |i| i as f64);
        assert_eq!(s, (n * (n - 1) / 2) as f64);
    }
}
