//! g-capacities `V(A) = E_g[I{W_T in A}]` and Choquet integrals against them.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::bsde::{check_driver, g_expectation, value_from_terminal};
use crate::claim::{comonotonic_check, Interval, IntervalSet, TerminalClaim};
use crate::driver::DriverSpec;
use crate::error::{Error, Result};
use crate::lattice::LatticeGrid;
use crate::scalar::{format_sig17, Scalar};

/// Probe grid size used when [`additivity_gaps`] checks comonotonicity.
pub const COMONOTONIC_PROBES: usize = 401;

/// The set function `A -> E_g[I{W_T in A}]` on a fixed lattice.
///
/// Two sets that contain the same terminal nodes have the same capacity, so
/// values are cached by terminal membership; a cache hit returns exactly the
/// value a fresh solve would.
pub struct Capacity<S: Scalar> {
    driver: DriverSpec<S>,
    grid: LatticeGrid<S>,
    cache: Mutex<HashMap<Vec<u64>, S>>,
}

impl<S: Scalar> fmt::Debug for Capacity<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Capacity")
            .field("driver", &self.driver)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> Clone for Capacity<S> {
    fn clone(&self) -> Self {
        Self {
            driver: self.driver.clone(),
            grid: self.grid,
            cache: Mutex::new(self.cache.lock().expect("capacity cache").clone()),
        }
    }
}

impl<S: Scalar> Capacity<S> {
    pub fn new(driver: DriverSpec<S>, horizon: S, n_steps: usize) -> Result<Self> {
        let grid = LatticeGrid::new(horizon, n_steps)?;
        check_driver(&grid, &driver)?;
        Ok(Self {
            driver,
            grid,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn driver(&self) -> &DriverSpec<S> {
        &self.driver
    }

    pub fn horizon(&self) -> S {
        self.grid.horizon()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn grid(&self) -> &LatticeGrid<S> {
        &self.grid
    }

    /// `V(A)`.
    pub fn g_capacity(&self, set: &IntervalSet<S>) -> Result<S> {
        let n = self.grid.n_steps();
        let mut key = vec![0u64; n / 64 + 1];
        let mut terminal = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let inside = set.contains(self.grid.node_state(n, j));
            if inside {
                key[j / 64] |= 1 << (j % 64);
            }
            terminal.push(if inside { S::one() } else { S::zero() });
        }
        if let Some(&v) = self.cache.lock().expect("capacity cache").get(&key) {
            return Ok(v);
        }
        let v = value_from_terminal(&self.grid, terminal, &self.driver)?;
        self.cache.lock().expect("capacity cache").insert(key, v);
        Ok(v)
    }

    /// `V` of a list of intervals, which must be sorted and disjoint.
    pub fn g_capacity_of(&self, intervals: Vec<Interval<S>>) -> Result<S> {
        self.g_capacity(&IntervalSet::new(intervals)?)
    }

    /// Number of distinct terminal sets solved so far.
    pub fn cached_sets(&self) -> usize {
        self.cache.lock().expect("capacity cache").len()
    }
}

/// Layer-cake quadrature of one claim against a capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoquetResult<S> {
    pub value: S,
    pub n_thresholds: usize,
    /// `|value(n) - value(n / 2)|`.
    pub quadrature_error_estimate: S,
    /// `(s, V(f >= s), running integral after the cell around s)`.
    pub per_threshold: Vec<(S, S, S)>,
}

impl<S: Scalar> ChoquetResult<S> {
    /// Writes the per-threshold table as CSV with header `s,V,partial_integral`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,V,partial_integral")?;
        for &(s, v, p) in &self.per_threshold {
            writeln!(
                out,
                "{},{},{}",
                format_sig17(s.to_f64_lossy()),
                format_sig17(v.to_f64_lossy()),
                format_sig17(p.to_f64_lossy())
            )?;
        }
        Ok(())
    }
}

/// `(s, V(f >= s), running integral)` for one threshold cell.
type Layer<S> = (S, S, S);

/// Midpoint layer cake with `n` cells on `[f_min, f_max]`, split at 0:
/// `C = int_{-inf}^0 (V(f >= s) - 1) ds + int_0^inf V(f >= s) ds`.
fn layer_cake<S: Scalar>(
    cap: &Capacity<S>,
    f: &TerminalClaim<S>,
    n: usize,
) -> Result<(S, Vec<Layer<S>>)> {
    let (lo, hi) = f.bounds();
    let zero = S::zero();
    if lo == hi {
        return Ok((lo, Vec::new()));
    }
    let width = (hi - lo) / S::from_usize(n).unwrap();
    let half = S::lit(0.5);
    let cells: Vec<(S, S, S)> = (0..n)
        .map(|k| {
            let a = lo + width * S::from_usize(k).unwrap();
            let b = if k + 1 == n {
                hi
            } else {
                lo + width * S::from_usize(k + 1).unwrap()
            };
            (a, b, half * (a + b))
        })
        .collect();
    let capacities = cells
        .par_iter()
        .map(|&(_, _, s)| cap.g_capacity(&f.superlevel_set(s)))
        .collect::<Result<Vec<S>>>()?;

    // Below f_min the superlevel set is everything and above f_max it is
    // empty, so only the parts of [0, f_min] or [f_max, 0] survive there.
    let mut total = lo.max(zero) + hi.min(zero);
    let mut rows = Vec::with_capacity(n);
    for (&(a, b, s), &v) in cells.iter().zip(&capacities) {
        let positive = (b.max(zero) - a.max(zero)).max(zero);
        let negative = (b.min(zero) - a.min(zero)).max(zero);
        total = total + v * positive + (v - S::one()) * negative;
        rows.push((s, v, total));
    }
    Ok((total, rows))
}

/// `C(f)` with `n_thresholds` midpoint cells (at least 2).
pub fn choquet_expectation<S: Scalar>(
    cap: &Capacity<S>,
    f: &TerminalClaim<S>,
    n_thresholds: usize,
) -> Result<ChoquetResult<S>> {
    if n_thresholds < 2 {
        return Err(Error::Domain("n_thresholds must be at least 2".into()));
    }
    let (value, per_threshold) = layer_cake(cap, f, n_thresholds)?;
    let (coarse, _) = layer_cake(cap, f, n_thresholds / 2)?;
    Ok(ChoquetResult {
        value,
        n_thresholds,
        quadrature_error_estimate: (value - coarse).abs(),
        per_threshold,
    })
}

/// Non-additivity of `E_g` and of the Choquet integral on a comonotonic pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditivityGaps<S> {
    /// `E_g[f] + E_g[h]`
    pub e_g_parts: S,
    pub e_g_joint: S,
    /// `E_g[f + h] - E_g[f] - E_g[h]`
    pub g_gap: S,
    /// `|g_gap(n) - g_gap(n / 2)|`
    pub g_gap_error: S,
    /// `C(f) + C(h)`
    pub choquet_parts: S,
    pub choquet_joint: S,
    pub choquet_gap: S,
    /// Sum of the three quadrature estimates plus a rounding allowance.
    pub choquet_gap_error: S,
}

fn gap_at<S: Scalar>(
    driver: &DriverSpec<S>,
    f: &TerminalClaim<S>,
    h: &TerminalClaim<S>,
    joint: &TerminalClaim<S>,
    horizon: S,
    n: usize,
) -> Result<(S, S)> {
    let ef = g_expectation(f, driver, horizon, n)?;
    let eh = g_expectation(h, driver, horizon, n)?;
    let ej = g_expectation(joint, driver, horizon, n)?;
    Ok((ef + eh, ej))
}

/// Additivity gaps of `E_g` and `C` on `(f, h)`, which must be comonotonic.
pub fn additivity_gaps<S: Scalar>(
    driver: &DriverSpec<S>,
    f: &TerminalClaim<S>,
    h: &TerminalClaim<S>,
    horizon: S,
    n_steps: usize,
    n_thresholds: usize,
) -> Result<AdditivityGaps<S>> {
    let check = comonotonic_check(f, h, COMONOTONIC_PROBES)?;
    if let Some((x, y)) = check.witness {
        return Err(Error::Precondition(format!(
            "claims {} and {} are not comonotonic: they move in opposite directions between {x} and {y}",
            f.label(),
            h.label()
        )));
    }
    if n_steps < 2 {
        return Err(Error::Domain(
            "n_steps must be at least 2 for the error estimate".into(),
        ));
    }
    let joint = f.sum(h);
    let (e_g_parts, e_g_joint) = gap_at(driver, f, h, &joint, horizon, n_steps)?;
    let (coarse_parts, coarse_joint) = gap_at(driver, f, h, &joint, horizon, n_steps / 2)?;
    let g_gap = e_g_joint - e_g_parts;
    let g_gap_error = (g_gap - (coarse_joint - coarse_parts)).abs();

    let cap = Capacity::new(driver.clone(), horizon, n_steps)?;
    let cf = choquet_expectation(&cap, f, n_thresholds)?;
    let ch = choquet_expectation(&cap, h, n_thresholds)?;
    let cj = choquet_expectation(&cap, &joint, n_thresholds)?;
    let choquet_parts = cf.value + ch.value;
    let choquet_gap = cj.value - choquet_parts;
    let scale = cf.value.abs() + ch.value.abs() + cj.value.abs();
    let rounding = S::epsilon() * S::from_usize(4 * n_thresholds).unwrap() * scale.max(S::one());
    let choquet_gap_error = cf.quadrature_error_estimate
        + ch.quadrature_error_estimate
        + cj.quadrature_error_estimate
        + rounding;
    Ok(AdditivityGaps {
        e_g_parts,
        e_g_joint,
        g_gap,
        g_gap_error,
        choquet_parts,
        choquet_joint: cj.value,
        choquet_gap,
        choquet_gap_error,
    })
}
