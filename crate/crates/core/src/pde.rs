//! Explicit finite differences for `u_t = u_xx / 2 + g(u, u_x)`, `u(0, x) = f(x)`,
//! and the cross-check `u(t, x) = E_g[f(W_t + x)]` against the lattice.

use std::io::Write;

use rayon::prelude::*;

use crate::bsde::value_from_terminal;
use crate::claim::TerminalClaim;
use crate::driver::DriverSpec;
use crate::error::{Error, Result};
use crate::lattice::LatticeGrid;
use crate::scalar::{format_sig17, linspace, Scalar};

/// The domain must extend this many `sqrt(t_end)` beyond the claim's active region.
pub const PADDING_SIGMAS: f64 = 6.0;

/// Time levels kept in a [`PdeSurface`] besides the initial and final ones.
pub const SNAPSHOTS: usize = 10;

/// Solution of [`solve_nonlinear_heat`], kept at roughly [`SNAPSHOTS`]
/// evenly spaced time levels (always including `t = 0` and `t = t_end`).
#[derive(Clone, Debug, PartialEq)]
pub struct PdeSurface<S> {
    levels: Vec<(usize, S, Vec<S>)>,
    x_grid: Vec<S>,
    dt: S,
    dx: S,
    n_levels: usize,
}

impl<S: Scalar> PdeSurface<S> {
    pub fn x_grid(&self) -> &[S] {
        &self.x_grid
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    pub fn dx(&self) -> S {
        self.dx
    }

    /// Number of time steps taken.
    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    /// Stored `(level index, time, u)` rows in increasing time.
    pub fn snapshots(&self) -> &[(usize, S, Vec<S>)] {
        &self.levels
    }

    pub fn initial(&self) -> &[S] {
        &self.levels[0].2
    }

    pub fn terminal(&self) -> &[S] {
        &self.levels[self.levels.len() - 1].2
    }

    pub fn t_end(&self) -> S {
        self.levels[self.levels.len() - 1].1
    }

    /// `u(t_end, x)` by linear interpolation; `x` must lie in the grid.
    pub fn value_at(&self, x: S) -> Result<S> {
        let (lo, hi) = (self.x_grid[0], self.x_grid[self.x_grid.len() - 1]);
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!("x = {x} outside [{lo}, {hi}]")));
        }
        let u = self.terminal();
        let pos = (x - lo) / self.dx;
        let m = pos.floor().to_usize().unwrap_or(0).min(u.len() - 2);
        let w = pos - S::from_usize(m).unwrap();
        Ok(u[m] + w * (u[m + 1] - u[m]))
    }

    /// Writes the stored levels as CSV with header `t,x,u`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,u")?;
        for (_, t, row) in &self.levels {
            for (&x, &u) in self.x_grid.iter().zip(row) {
                writeln!(
                    out,
                    "{},{},{}",
                    format_sig17(t.to_f64_lossy()),
                    format_sig17(x.to_f64_lossy()),
                    format_sig17(u.to_f64_lossy())
                )?;
            }
        }
        Ok(())
    }
}

/// Time step for the scheme: `safety dx^2 / 2`, shrunk by the driver's
/// Lipschitz bound and then rounded down so it divides `t_end`.
fn time_step<S: Scalar>(dx: S, lipschitz: S, safety: S, t_end: S) -> (S, usize) {
    let dt0 = safety * dx * dx / S::lit(2.0);
    let dt = dt0 / (S::one() + dt0 * lipschitz);
    let steps = (t_end / dt).ceil().to_usize().unwrap_or(1).max(1);
    (t_end / S::from_usize(steps).unwrap(), steps)
}

/// Solves the nonlinear heat equation on `[x_lo, x_hi]` with `nx` points up
/// to `t_end`, holding `u` at `f(x_lo)` and `f(x_hi)` on the boundary.
///
/// The driver must be time-homogeneous; custom drivers are evaluated at
/// `t = 0`. The scheme is monotone, hence obeys the comparison principle,
/// when `L dx <= 1`, which is enforced.
pub fn solve_nonlinear_heat<S: Scalar>(
    spec: &DriverSpec<S>,
    f: &TerminalClaim<S>,
    t_end: S,
    x_lo: S,
    x_hi: S,
    nx: usize,
    safety: S,
) -> Result<PdeSurface<S>> {
    if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
        return Err(Error::Domain(format!(
            "need x_lo < x_hi, got [{x_lo}, {x_hi}]"
        )));
    }
    if nx < 3 {
        return Err(Error::Domain(format!("nx must be at least 3, got {nx}")));
    }
    if !(safety > S::zero() && safety < S::one()) {
        return Err(Error::Domain(format!(
            "safety must lie in (0, 1), got {safety}"
        )));
    }
    if !(t_end > S::zero()) || !t_end.is_finite() {
        return Err(Error::Domain(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if !spec.is_time_homogeneous() {
        return Err(Error::Config(
            "the PDE solver needs a driver with constant coefficients".into(),
        ));
    }
    if let Some((a, b)) = f.active_region() {
        let pad = S::lit(PADDING_SIGMAS) * t_end.sqrt();
        if x_lo > a - pad || x_hi < b + pad {
            return Err(Error::Config(format!(
                "domain [{x_lo}, {x_hi}] must extend {pad} beyond the claim's active region [{a}, {b}]"
            )));
        }
    }
    let x_grid = linspace(x_lo, x_hi, nx);
    let dx = (x_hi - x_lo) / S::from_usize(nx - 1).unwrap();
    let lipschitz = spec.lipschitz_bound();
    if lipschitz * dx > S::one() {
        return Err(Error::Config(format!(
            "Lipschitz bound x dx = {} exceeds 1; increase nx",
            lipschitz * dx
        )));
    }
    let (dt, steps) = time_step(dx, lipschitz, safety, t_end);
    let g = spec.frozen_at(S::zero())?;

    let diffusion = dt / (S::lit(2.0) * dx * dx);
    let inv_2dx = S::one() / (S::lit(2.0) * dx);
    let stride = (steps / SNAPSHOTS).max(1);
    let mut u: Vec<S> = x_grid.iter().map(|&x| f.eval(x)).collect();
    let mut next = u.clone();
    let mut levels = vec![(0, S::zero(), u.clone())];
    for k in 1..=steps {
        let prev = &u;
        next[1..nx - 1]
            .par_iter_mut()
            .enumerate()
            .for_each(|(m, out)| {
                let (l, c, r) = (prev[m], prev[m + 1], prev[m + 2]);
                *out = c + diffusion * (l - c - c + r) + dt * g.eval(c, (r - l) * inv_2dx);
            });
        std::mem::swap(&mut u, &mut next);
        if k % stride == 0 || k == steps {
            let t = if k == steps {
                t_end
            } else {
                dt * S::from_usize(k).unwrap()
            };
            levels.push((k, t, u.clone()));
        }
    }
    Ok(PdeSurface {
        levels,
        x_grid,
        dt,
        dx,
        n_levels: steps,
    })
}

/// One row of [`feynman_kac_compare`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeynmanKacRow<S> {
    pub x: S,
    pub u_pde: S,
    pub e_g_lattice: S,
    pub abs_diff: S,
}

/// Uniform grid with spacing close to `(hi - lo) / (nx - 1)` covering
/// `[lo, hi]`, placed so that the first and last jumps of `f` fall halfway
/// between grid points. A jump sampled exactly at a node biases the scheme
/// by `O(dx)`; between nodes the bias is `O(dx^2)`.
fn aligned_grid<S: Scalar>(f: &TerminalClaim<S>, lo: S, hi: S, nx: usize) -> (S, S, usize) {
    let nx = nx.max(3);
    let mut dx = (hi - lo) / S::from_usize(nx - 1).unwrap();
    let jumps = f.jumps();
    let (Some(&first), Some(&last)) = (jumps.first(), jumps.last()) else {
        return (lo, hi, nx);
    };
    if last > first {
        let cells = ((last - first) / dx).ceil().max(S::one());
        dx = (last - first) / cells;
    }
    let half = S::lit(0.5);
    let below = ((first - lo) / dx - half).ceil().max(S::zero());
    let x_lo = first - (below + half) * dx;
    let points = ((hi - x_lo) / dx).ceil().to_usize().unwrap_or(nx) + 1;
    (x_lo, x_lo + dx * S::from_usize(points - 1).unwrap(), points)
}

/// Compares the PDE value `u(t_end, x)` with the lattice `E_g[f(W_t_end + x)]`
/// at each `x`.
///
/// Both sides treat jumps of `f` the same way: the PDE grid puts them between
/// nodes and the lattice starts from cell averages
/// ([`LatticeGrid::terminal_cell_averages`]), so neither carries the
/// first-order bias of sampling a jump at a node.
///
/// The PDE domain is the claim's active region together with the requested
/// points, padded by `6 sqrt(t_end) + 1`, on a grid of about `nx` points
/// aligned so that the outermost jumps of `f` sit between nodes.
pub fn feynman_kac_compare<S: Scalar>(
    spec: &DriverSpec<S>,
    f: &TerminalClaim<S>,
    t_end: S,
    x_points: &[S],
    nx: usize,
    n_steps: usize,
) -> Result<Vec<FeynmanKacRow<S>>> {
    if x_points.is_empty() {
        return Err(Error::Domain("need at least one x point".into()));
    }
    if x_points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("x points must be finite".into()));
    }
    if !(t_end > S::zero()) {
        return Err(Error::Domain(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let xmin = x_points.iter().copied().fold(S::infinity(), S::min);
    let xmax = x_points.iter().copied().fold(S::neg_infinity(), S::max);
    let pad = S::lit(PADDING_SIGMAS) * t_end.sqrt() + S::one();
    let (a, b) = f.active_region().unwrap_or((xmin, xmax));
    let (x_lo, x_hi, points) = aligned_grid(f, a.min(xmin) - pad, b.max(xmax) + pad, nx);
    let surface = solve_nonlinear_heat(spec, f, t_end, x_lo, x_hi, points, S::lit(0.9))?;
    let grid = LatticeGrid::new(t_end, n_steps)?;
    x_points
        .iter()
        .map(|&x| {
            let u_pde = surface.value_at(x)?;
            let terminal = grid.terminal_cell_averages(&f.shifted(x));
            let e_g_lattice = value_from_terminal(&grid, terminal, spec)?;
            Ok(FeynmanKacRow {
                x,
                u_pde,
                e_g_lattice,
                abs_diff: (u_pde - e_g_lattice).abs(),
            })
        })
        .collect()
}
