//! Uniform time grids on `[0, T]`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform grid `0 = t_0 < t_1 < ... < t_N = T` with spacing `h = T / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        if steps == 0 {
            return Err(domain("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `k * T / N`; the last node is exactly `T`.
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node(k))
    }

    /// True when every node of `coarse` is a node of `self`.
    pub fn refines(&self, coarse: &TimeGrid) -> bool {
        self.horizon == coarse.horizon && coarse.steps > 0 && self.steps.is_multiple_of(coarse.steps)
    }

    /// Grid with `steps / factor` steps over the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(domain(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.steps
            )));
        }
        TimeGrid::new(self.horizon, self.steps / factor)
    }

    /// Index of the largest node `<= t` (the grid floor).
    pub fn floor_index(&self, t: f64) -> usize {
        let k = (t / self.step_size()).floor();
        (k.max(0.0) as usize).min(self.steps)
    }

    /// Index of the smallest node `>= t` (the grid ceiling).
    pub fn ceil_index(&self, t: f64) -> usize {
        let k = (t / self.step_size()).ceil();
        (k.max(0.0) as usize).min(self.steps)
    }
}

/// Shorthand for [`TimeGrid::new`].
pub fn make_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn single_interval() {
        let g = make_grid(1.0, 1).unwrap();
        assert_eq!(g.step_size(), 1.0);
        assert_eq!(g.nodes().collect::<Vec<_>>(), vec![0.0, 1.0]);
    }

    #[test]
    fn quarter_nodes() {
        let g = make_grid(2.0, 4).unwrap();
        assert_eq!(g.nodes().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(make_grid(1.0, 0), Err(Error::Domain(_))));
        assert!(matches!(make_grid(0.0, 3), Err(Error::Domain(_))));
        assert!(matches!(make_grid(-1.0, 3), Err(Error::Domain(_))));
        assert!(matches!(make_grid(f64::NAN, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn last_node_is_horizon() {
        let g = make_grid(0.3, 7).unwrap();
        assert_eq!(g.node(7), 0.3);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn dyadic_refinement() {
        let coarse = make_grid(1.0, 8).unwrap();
        let fine = make_grid(1.0, 16).unwrap();
        assert!(fine.refines(&coarse));
        assert!(!coarse.refines(&fine));
        for k in 0..=8 {
            assert_eq!(coarse.node(k), fine.node(2 * k));
        }
        assert_eq!(fine.coarsen(2).unwrap(), coarse);
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn floor_and_ceil() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.floor_index(0.3), 1);
        assert_eq!(g.ceil_index(0.3), 2);
        assert_eq!(g.floor_index(0.5), 2);
        assert_eq!(g.ceil_index(0.5), 2);
        assert_eq!(g.ceil_index(1.0), 4);
    }
}
