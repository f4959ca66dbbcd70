//! Recombining binomial tree for Brownian motion on `[0, T]`.

use crate::claim::TerminalClaim;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Node `(i, j)` sits at time `i dt` and state `(2j - i) sqrt(dt)`; each
/// step moves up or down by `sqrt(dt)` with probability 1/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeGrid<S> {
    horizon: S,
    n_steps: usize,
    dt: S,
    sqrt_dt: S,
}

impl<S: Scalar> LatticeGrid<S> {
    pub fn new(horizon: S, n_steps: usize) -> Result<Self> {
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(Error::Domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        let dt = horizon / S::from_usize(n_steps).unwrap();
        Ok(Self {
            horizon,
            n_steps,
            dt,
            sqrt_dt: dt.sqrt(),
        })
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    pub fn sqrt_dt(&self) -> S {
        self.sqrt_dt
    }

    /// Time of step `i`; the last step is exactly the horizon.
    pub fn time(&self, i: usize) -> S {
        if i >= self.n_steps {
            self.horizon
        } else {
            self.dt * S::from_usize(i).unwrap()
        }
    }

    pub fn node_state(&self, i: usize, j: usize) -> S {
        debug_assert!(j <= i && i <= self.n_steps);
        let k = S::from_usize(2 * j).unwrap() - S::from_usize(i).unwrap();
        k * self.sqrt_dt
    }

    /// Largest reachable `|W|`.
    pub fn max_state(&self) -> S {
        self.node_state(self.n_steps, self.n_steps)
    }

    /// The first `steps` steps of this grid, with the same `dt`.
    pub fn truncated(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps > self.n_steps {
            return Err(Error::Domain(format!(
                "cannot truncate {} steps to {steps}",
                self.n_steps
            )));
        }
        Ok(Self {
            horizon: self.time(steps),
            n_steps: steps,
            ..*self
        })
    }

    /// `f` evaluated at the terminal nodes, `j = 0..=n_steps`.
    pub fn terminal_slice(&self, f: &TerminalClaim<S>) -> Vec<S> {
        (0..=self.n_steps)
            .map(|j| f.eval(self.node_state(self.n_steps, j)))
            .collect()
    }

    /// Averages of `f` over `[x_j - sqrt(dt), x_j + sqrt(dt)]` at the terminal
    /// nodes, the cells of width `2 sqrt(dt)` that tile the line. For claims
    /// with jumps this removes the `O(n^(-1/2))` bias that point evaluation
    /// picks up from where a jump falls between nodes.
    pub fn terminal_cell_averages(&self, f: &TerminalClaim<S>) -> Vec<S> {
        let h = self.sqrt_dt;
        let width = h + h;
        (0..=self.n_steps)
            .map(|j| {
                let x = self.node_state(self.n_steps, j);
                f.integral(x - h, x + h) / width
            })
            .collect()
    }

    /// Probabilities of the nodes at step `i`, by Pascal recursion.
    pub fn node_weights(&self, i: usize) -> Vec<S> {
        let half = S::lit(0.5);
        let mut w = vec![S::one()];
        for _ in 0..i.min(self.n_steps) {
            let mut next = vec![S::zero(); w.len() + 1];
            for (j, &p) in w.iter().enumerate() {
                next[j] = next[j] + half * p;
                next[j + 1] = next[j + 1] + half * p;
            }
            w = next;
        }
        w
    }

    /// Plain expectation of terminal values under the binomial weights.
    pub fn expectation(&self, terminal: &[S]) -> S {
        self.node_weights(self.n_steps)
            .iter()
            .zip(terminal)
            .map(|(&w, &v)| w * v)
            .sum()
    }
}
