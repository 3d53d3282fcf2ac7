//! Brownian paths stored as increments on the finest grid.
//!
//! Every coarser scheme consumes block sums of the same increments, which is
//! what couples a scheme with its reference solution.
//!
//! All sums of increments use one fixed association: a pairwise tree that
//! splits a range of `n` terms after its largest power of two below `n`.
//! For dyadic grids and dyadic coarsening factors the block sums are then
//! subtrees of the full tree, so `W` at any coarse node is bit-identical
//! whether computed from fine or from coarse increments.

use crate::error::{domain, Result};
use crate::grid::TimeGrid;
use crate::rng::{tags, RandomStream};

/// `m`-dimensional Wiener increments `W_{t_{k+1}} - W_{t_k}` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    dim: usize,
    grid: TimeGrid,
    // Row-major: increment k occupies [k*dim, (k+1)*dim).
    increments: Vec<f64>,
    master_seed: u64,
    sample_index: u64,
}

impl BrownianPath {
    /// Draws `N` increments with law `N(0, h I_m)` from the stream
    /// `(seed, BROWNIAN, sample_index)`.
    pub fn sample(seed: u64, sample_index: u64, grid: TimeGrid, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(domain("Brownian dimension must be at least 1"));
        }
        let mut stream = RandomStream::new(seed, tags::BROWNIAN, sample_index);
        let mut increments = vec![0.0; grid.steps() * dim];
        stream.fill_normal(&mut increments, grid.step_size().sqrt());
        Ok(Self {
            dim,
            grid,
            increments,
            master_seed: seed,
            sample_index,
        })
    }

    /// Wraps explicit increments (row-major, `grid.steps() * dim` values).
    pub fn from_increments(grid: TimeGrid, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(domain("Brownian dimension must be at least 1"));
        }
        if increments.len() != grid.steps() * dim {
            return Err(domain(format!(
                "expected {} increments, got {}",
                grid.steps() * dim,
                increments.len()
            )));
        }
        Ok(Self {
            dim,
            grid,
            increments,
            master_seed: 0,
            sample_index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// Block sums of `factor` consecutive increments.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        let grid = self.grid.coarsen(factor)?;
        let mut increments = vec![0.0; grid.steps() * self.dim];
        for (j, out) in increments.chunks_exact_mut(self.dim).enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o = self.tree_sum(c, j * factor, (j + 1) * factor);
            }
        }
        Ok(BrownianPath {
            dim: self.dim,
            grid,
            increments,
            master_seed: self.master_seed,
            sample_index: self.sample_index,
        })
    }

    /// Coarsens to a grid with `steps` steps.
    pub fn coarsen_to(&self, steps: usize) -> Result<BrownianPath> {
        if steps == 0 || !self.grid.steps().is_multiple_of(steps) {
            return Err(domain(format!(
                "{steps} steps is not a coarsening of {} steps",
                self.grid.steps()
            )));
        }
        self.coarsen(self.grid.steps() / steps)
    }

    /// `W_{t_to} - W_{t_from}`.
    pub fn increment_between(&self, from: usize, to: usize) -> Vec<f64> {
        (0..self.dim).map(|c| self.tree_sum(c, from, to)).collect()
    }

    fn tree_sum(&self, component: usize, from: usize, to: usize) -> f64 {
        match to.saturating_sub(from) {
            0 => 0.0,
            1 => self.increments[from * self.dim + component],
            n => {
                let split = from + (n.next_power_of_two() >> 1);
                self.tree_sum(component, from, split) + self.tree_sum(component, split, to)
            }
        }
    }

    /// `W` at node `k` (with `W_0 = 0`).
    pub fn value(&self, k: usize) -> Vec<f64> {
        self.increment_between(0, k)
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.value(self.grid.steps())
    }

    /// Copy of the path with increment `k` shifted by `delta`.
    pub fn perturbed(&self, k: usize, delta: &[f64]) -> BrownianPath {
        let mut out = self.clone();
        for (v, d) in out.increments[k * self.dim..(k + 1) * self.dim].iter_mut().zip(delta) {
            *v += d;
        }
        out
    }
}

/// Shorthand for [`BrownianPath::sample`].
pub fn sample_brownian(seed: u64, sample_index: u64, grid: TimeGrid, dim: usize) -> Result<BrownianPath> {
    BrownianPath::sample(seed, sample_index, grid, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;

    #[test]
    fn deterministic_regeneration() {
        let g = make_grid(1.0, 64).unwrap();
        let a = sample_brownian(42, 9, g, 3).unwrap();
        let b = sample_brownian(42, 9, g, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian(42, 10, g, 3).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn block_sums() {
        let g = make_grid(1.0, 4).unwrap();
        let p = BrownianPath::from_increments(g, 1, vec![0.1, 0.2, -0.3, 0.7]).unwrap();
        assert_eq!(p.coarsen(1).unwrap(), p);
        let c = p.coarsen(2).unwrap();
        assert_eq!(c.increments(), &[0.1 + 0.2, -0.3 + 0.7]);
        assert_eq!(c.grid().steps(), 2);
        assert!(p.coarsen(3).is_err());
        assert!(p.coarsen(0).is_err());
    }

    #[test]
    fn rejects_zero_dimension() {
        let g = make_grid(1.0, 4).unwrap();
        assert!(sample_brownian(1, 0, g, 0).is_err());
        assert!(BrownianPath::from_increments(g, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn perturbation_touches_one_increment() {
        let g = make_grid(1.0, 8).unwrap();
        let p = sample_brownian(3, 0, g, 2).unwrap();
        let q = p.perturbed(5, &[1.0, -1.0]);
        for k in 0..8 {
            if k == 5 {
                assert_ne!(p.increment(k), q.increment(k));
            } else {
                assert_eq!(p.increment(k), q.increment(k));
            }
        }
    }

    proptest! {
        #[test]
        fn terminal_value_survives_coarsening(seed in any::<u64>(), idx in 0u64..1000, log_f in 0u32..6) {
            let g = make_grid(1.0, 64).unwrap();
            let p = sample_brownian(seed, idx, g, 2).unwrap();
            let f = 1usize << log_f;
            let c = p.coarsen(f).unwrap();
            prop_assert_eq!(p.terminal(), c.terminal());
            for j in 0..=c.grid().steps() {
                prop_assert_eq!(p.value(j * f), c.value(j));
            }
            // Coarsening in two stages equals coarsening in one.
            let two_stage = p.coarsen(2).unwrap().coarsen(f).unwrap();
            let one_stage = p.coarsen(2 * f).unwrap();
            prop_assert_eq!(two_stage.increments(), one_stage.increments());
        }
    }
}
