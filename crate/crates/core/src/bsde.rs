//! Backward induction for `y_t = xi + int_t^T g(y, z, s) ds - int_t^T z dW`
//! on the binomial lattice.
//!
//! At node `(i, j)` the scheme sets
//! `z = (y[i+1][j+1] - y[i+1][j]) / (2 sqrt(dt))`, `ybar` = mean of the two
//! children, and solves `y = ybar + g(y, z, t_i) dt` by fixed-point
//! iteration started at `ybar`. The iteration is a contraction when
//! `L dt < 1/2`. The scheme is monotone in the terminal data, and so obeys
//! the comparison theorem exactly, when additionally `L sqrt(dt) <= 1`.

use crate::claim::{IntervalSet, TerminalClaim};
use crate::driver::{sample_grid, validate_hypotheses, DriverSpec, FrozenDriver};
use crate::error::{Error, Result};
use crate::lattice::LatticeGrid;
use crate::scalar::{linspace, Scalar};

/// Successive fixed-point iterates closer than this stop the iteration.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-12;
pub const MAX_FIXED_POINT_ITERATIONS: usize = 100;

/// `|z|` at or below this counts as zero in [`ZSignReport`].
pub const Z_ZERO_BAND: f64 = 1e-12;

/// The `(y, z)` tables produced by [`solve_bsde`]; `y[i][j]` is the
/// conditional g-expectation at node `(i, j)`.
#[derive(Clone, Debug)]
pub struct SolutionSurface<S: Scalar> {
    y: Vec<Vec<S>>,
    z: Vec<Vec<S>>,
    grid: LatticeGrid<S>,
    driver: DriverSpec<S>,
    claim: Option<TerminalClaim<S>>,
}

impl<S: Scalar> SolutionSurface<S> {
    pub fn grid(&self) -> &LatticeGrid<S> {
        &self.grid
    }

    pub fn driver(&self) -> &DriverSpec<S> {
        &self.driver
    }

    /// `None` when solved from raw terminal values.
    pub fn claim(&self) -> Option<&TerminalClaim<S>> {
        self.claim.as_ref()
    }

    pub fn y(&self, i: usize, j: usize) -> S {
        self.y[i][j]
    }

    /// Defined for `i < n_steps`.
    pub fn z(&self, i: usize, j: usize) -> S {
        self.z[i][j]
    }

    pub fn y_slice(&self, i: usize) -> &[S] {
        &self.y[i]
    }

    pub fn z_slice(&self, i: usize) -> &[S] {
        &self.z[i]
    }

    /// The g-expectation `y[0][0]`.
    pub fn value(&self) -> S {
        self.y[0][0]
    }

    /// `(node_state(i, j), y[i][j])` for `j = 0..=i`.
    pub fn conditional_slice(&self, i: usize) -> Result<Vec<(S, S)>> {
        if i > self.grid.n_steps() {
            return Err(Error::Domain(format!(
                "step {i} out of range 0..={}",
                self.grid.n_steps()
            )));
        }
        Ok(self.y[i]
            .iter()
            .enumerate()
            .map(|(j, &v)| (self.grid.node_state(i, j), v))
            .collect())
    }

    /// Signs of `z` weighted by node probability times `dt`, normalised by `T`.
    pub fn z_sign_report(&self) -> ZSignReport<S> {
        let band = S::lit(Z_ZERO_BAND);
        let n = self.grid.n_steps();
        let half = S::lit(0.5);
        let mut weights = vec![S::one()];
        let (mut neg, mut pos) = (S::zero(), S::zero());
        let (mut min_z, mut max_z) = (S::infinity(), S::neg_infinity());
        for i in 0..n {
            for (j, &z) in self.z[i].iter().enumerate() {
                min_z = min_z.min(z);
                max_z = max_z.max(z);
                if z < -band {
                    neg = neg + weights[j];
                } else if z > band {
                    pos = pos + weights[j];
                }
            }
            let mut next = vec![S::zero(); weights.len() + 1];
            for (j, &w) in weights.iter().enumerate() {
                next[j] = next[j] + half * w;
                next[j + 1] = next[j + 1] + half * w;
            }
            weights = next;
        }
        let steps = S::from_usize(n).unwrap();
        let dt = self.grid.dt();
        let horizon = self.grid.horizon();
        ZSignReport {
            min_z,
            max_z,
            fraction_negative: neg * dt / horizon,
            fraction_positive: pos * dt / horizon,
            zero_band: band,
            steps,
        }
    }
}

/// Summary of the martingale-representation integrand over the lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZSignReport<S> {
    pub min_z: S,
    pub max_z: S,
    /// `P x Lebesgue` mass of `{z < -band}`, as a fraction of `[0, T]`.
    pub fraction_negative: S,
    pub fraction_positive: S,
    pub zero_band: S,
    pub steps: S,
}

pub(crate) fn check_driver<S: Scalar>(grid: &LatticeGrid<S>, spec: &DriverSpec<S>) -> Result<()> {
    spec.check_covers(grid.horizon())?;
    let contraction = spec.lipschitz_bound() * grid.dt();
    if !(contraction < S::lit(0.5)) {
        return Err(Error::Config(format!(
            "Lipschitz bound x dt = {contraction} must be below 1/2; increase n_steps"
        )));
    }
    if let DriverSpec::Custom(_) = spec {
        let ys = linspace(S::lit(-5.0), S::lit(5.0), 11);
        let ts = linspace(S::zero(), grid.horizon(), 11);
        let report = validate_hypotheses(spec, &sample_grid(&ys, &[S::zero()], &ts))?;
        if let Some(v) = report.zero_z_violations.first() {
            return Err(Error::Precondition(format!(
                "driver violates g(y, 0, t) = 0: g({}, 0, {}) = {}",
                v.y, v.t, v.value
            )));
        }
    }
    Ok(())
}

#[inline]
fn solve_node<S: Scalar>(
    g: &FrozenDriver<'_, S>,
    depends_on_y: bool,
    ybar: S,
    z: S,
    dt: S,
    at: (usize, usize),
) -> Result<S> {
    let mut y = ybar + g.eval(ybar, z) * dt;
    if !depends_on_y {
        return Ok(y);
    }
    for _ in 1..MAX_FIXED_POINT_ITERATIONS {
        let next = ybar + g.eval(y, z) * dt;
        if (next - y).abs() <= S::tol(FIXED_POINT_TOLERANCE, next) {
            return Ok(next);
        }
        y = next;
    }
    Err(Error::NotConverged {
        step: at.0,
        node: at.1,
        iterations: MAX_FIXED_POINT_ITERATIONS,
    })
}

/// One backward step: fills `y_out` (length `i + 1`) and `z_out` from the
/// `i + 2` children values.
fn backward_step<S: Scalar>(
    grid: &LatticeGrid<S>,
    spec: &DriverSpec<S>,
    i: usize,
    children: &[S],
    y_out: &mut Vec<S>,
    z_out: &mut Vec<S>,
) -> Result<()> {
    let g = spec.frozen_at(grid.time(i))?;
    let depends_on_y = spec.depends_on_y();
    let half = S::lit(0.5);
    let inv = S::one() / (S::lit(2.0) * grid.sqrt_dt());
    let dt = grid.dt();
    y_out.clear();
    z_out.clear();
    for j in 0..=i {
        let (lo, hi) = (children[j], children[j + 1]);
        let z = (hi - lo) * inv;
        let ybar = half * (lo + hi);
        y_out.push(solve_node(&g, depends_on_y, ybar, z, dt, (i, j))?);
        z_out.push(z);
    }
    Ok(())
}

fn check_terminal<S: Scalar>(grid: &LatticeGrid<S>, terminal: &[S]) -> Result<()> {
    if terminal.len() != grid.n_steps() + 1 {
        return Err(Error::Domain(format!(
            "terminal slice has {} values, the lattice has {} terminal nodes",
            terminal.len(),
            grid.n_steps() + 1
        )));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("terminal values must be finite".into()));
    }
    Ok(())
}

/// Solves from arbitrary terminal node values, keeping every slice.
pub fn solve_from_terminal<S: Scalar>(
    grid: &LatticeGrid<S>,
    terminal: Vec<S>,
    spec: &DriverSpec<S>,
) -> Result<SolutionSurface<S>> {
    check_driver(grid, spec)?;
    check_terminal(grid, &terminal)?;
    let n = grid.n_steps();
    let mut y: Vec<Vec<S>> = vec![Vec::new(); n + 1];
    let mut z: Vec<Vec<S>> = vec![Vec::new(); n];
    y[n] = terminal;
    for i in (0..n).rev() {
        let (head, tail) = y.split_at_mut(i + 1);
        let mut zi = Vec::with_capacity(i + 1);
        backward_step(grid, spec, i, &tail[0], &mut head[i], &mut zi)?;
        z[i] = zi;
    }
    Ok(SolutionSurface {
        y,
        z,
        grid: *grid,
        driver: spec.clone(),
        claim: None,
    })
}

/// Full `(y, z)` surface for `xi = f(W_T)`.
pub fn solve_bsde<S: Scalar>(
    grid: &LatticeGrid<S>,
    f: &TerminalClaim<S>,
    spec: &DriverSpec<S>,
) -> Result<SolutionSurface<S>> {
    let mut surface = solve_from_terminal(grid, grid.terminal_slice(f), spec)?;
    surface.claim = Some(f.clone());
    Ok(surface)
}

/// `y[0][0]` from terminal node values, with `O(n)` memory.
pub fn value_from_terminal<S: Scalar>(
    grid: &LatticeGrid<S>,
    terminal: Vec<S>,
    spec: &DriverSpec<S>,
) -> Result<S> {
    check_driver(grid, spec)?;
    check_terminal(grid, &terminal)?;
    let mut current = terminal;
    let mut next = Vec::with_capacity(current.len());
    let mut z = Vec::with_capacity(current.len());
    for i in (0..grid.n_steps()).rev() {
        backward_step(grid, spec, i, &current, &mut next, &mut z)?;
        std::mem::swap(&mut current, &mut next);
    }
    Ok(current[0])
}

/// The g-expectation `E_g[f(W_T)] = y_0`.
pub fn g_expectation<S: Scalar>(
    f: &TerminalClaim<S>,
    spec: &DriverSpec<S>,
    horizon: S,
    n_steps: usize,
) -> Result<S> {
    let grid = LatticeGrid::new(horizon, n_steps)?;
    value_from_terminal(&grid, grid.terminal_slice(f), spec)
}

/// `P_g(A) = E_g[I{W_T in A}]`.
pub fn g_probability<S: Scalar>(
    set: &IntervalSet<S>,
    spec: &DriverSpec<S>,
    horizon: S,
    n_steps: usize,
) -> Result<S> {
    g_expectation(&set.indicator_claim(), spec, horizon, n_steps)
}

/// A lattice quantity at `n` steps paired with the same quantity at `n / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Richardson<S> {
    pub fine: S,
    pub coarse: S,
    /// `|fine - coarse|`
    pub estimate: S,
    /// `(fine + coarse) / 2`. Claims with jumps converge like `n^(-1/2)`
    /// with a coefficient that depends on where the jump falls between
    /// nodes and typically changes sign from `n` to `2n`; the classical
    /// `2 fine - coarse` amplifies that term while the midpoint damps it.
    pub extrapolated: S,
}

impl<S: Scalar> Richardson<S> {
    pub fn new(fine: S, coarse: S) -> Self {
        Self {
            fine,
            coarse,
            estimate: (fine - coarse).abs(),
            extrapolated: S::lit(0.5) * (fine + coarse),
        }
    }
}

/// Evaluates `at(n)` and `at(n / 2)`; `n` must be at least 2.
pub fn richardson<S: Scalar>(n: usize, at: impl Fn(usize) -> Result<S>) -> Result<Richardson<S>> {
    if n < 2 {
        return Err(Error::Domain("Richardson pairing needs n >= 2".into()));
    }
    Ok(Richardson::new(at(n)?, at(n / 2)?))
}

/// `(s, (E_g[b W_s] - E[b W_s]) / s)` for each horizon `s`, solved with
/// `n_steps` steps on `[0, s]`. The slopes approach `g(0, b, 0)` as `s -> 0`.
pub fn representation_slope<S: Scalar>(
    spec: &DriverSpec<S>,
    b: S,
    horizons: &[S],
    n_steps: usize,
) -> Result<Vec<(S, S)>> {
    if !b.is_finite() {
        return Err(Error::Domain("b must be finite".into()));
    }
    horizons
        .iter()
        .map(|&s| {
            if !(s > S::zero()) {
                return Err(Error::Domain(format!("horizon {s} must be positive")));
            }
            let grid = LatticeGrid::new(s, n_steps)?;
            let cap = grid.max_state() + S::one();
            let claim = TerminalClaim::identity(cap)?.scaled(b);
            let plain = grid.expectation(&grid.terminal_slice(&claim));
            let value = value_from_terminal(&grid, grid.terminal_slice(&claim), spec)?;
            Ok((s, (value - plain) / s))
        })
        .collect()
}
