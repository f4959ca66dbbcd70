//! BSDE drivers `g(y, z, t)`: representation, hypothesis checks and the
//! `mu(t)|z| + nu(t) z` decomposition.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{linspace, Scalar};

/// Absolute tolerance for `g(y, 0, t) = 0`.
pub const ZERO_Z_TOLERANCE: f64 = 1e-12;

/// Default tolerance on `sup |mu_hat|` below which a driver is declared linear in `z`.
pub const LINEARITY_TOLERANCE: f64 = 1e-9;

/// A continuous function of time, stored as a piecewise-linear interpolant.
///
/// A constant function is defined on `[0, inf)`; a sampled one on
/// `[0, t_last]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFunction<S> {
    repr: Repr<S>,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr<S> {
    Constant(S),
    Sampled(Vec<(S, S)>),
}

impl<S: Scalar> TimeFunction<S> {
    pub fn constant(value: S) -> Self {
        Self {
            repr: Repr::Constant(value),
        }
    }

    /// Builds an interpolant from `(t, value)` samples. The first sample must
    /// sit at `t = 0` and sample times must be strictly increasing.
    pub fn sampled(samples: Vec<(S, S)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain(
                "a sampled time function needs at least two samples".into(),
            ));
        }
        if samples
            .iter()
            .any(|(t, v)| !t.is_finite() || !v.is_finite())
        {
            return Err(Error::Domain("time function samples must be finite".into()));
        }
        if samples[0].0 != S::zero() {
            return Err(Error::Domain("first sample time must be 0".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain(
                "sample times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            repr: Repr::Sampled(samples),
        })
    }

    /// End of the domain, `None` for constants.
    pub fn horizon(&self) -> Option<S> {
        match &self.repr {
            Repr::Constant(_) => None,
            Repr::Sampled(s) => Some(s[s.len() - 1].0),
        }
    }

    pub fn samples(&self) -> Option<&[(S, S)]> {
        match &self.repr {
            Repr::Constant(_) => None,
            Repr::Sampled(s) => Some(s),
        }
    }

    /// Returns the value if the function is constant in time.
    pub fn as_constant(&self) -> Option<S> {
        match &self.repr {
            Repr::Constant(v) => Some(*v),
            Repr::Sampled(s) => {
                let v = s[0].1;
                s.iter().all(|(_, w)| *w == v).then_some(v)
            }
        }
    }

    fn clamp_to_domain(&self, t: S) -> Result<S> {
        let end = self.horizon();
        let slack = S::tol(1e-12, end.unwrap_or_else(S::one));
        if !t.is_finite() || t < -slack || end.is_some_and(|e| t > e + slack) {
            return Err(Error::Domain(format!(
                "time {t} outside [0, {}]",
                end.map_or_else(|| "inf".to_string(), |e| e.to_string())
            )));
        }
        let t = t.max(S::zero());
        Ok(match end {
            Some(e) => t.min(e),
            None => t,
        })
    }

    pub fn eval(&self, t: S) -> Result<S> {
        let t = self.clamp_to_domain(t)?;
        Ok(self.eval_clamped(t))
    }

    fn eval_clamped(&self, t: S) -> S {
        match &self.repr {
            Repr::Constant(v) => *v,
            Repr::Sampled(s) => {
                let k = s.partition_point(|(ti, _)| *ti <= t);
                if k == 0 {
                    return s[0].1;
                }
                if k == s.len() {
                    return s[s.len() - 1].1;
                }
                let (t0, v0) = s[k - 1];
                let (t1, v1) = s[k];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Exact integral of the interpolant over `[a, b]`.
    pub fn integral(&self, a: S, b: S) -> Result<S> {
        if b < a {
            return Ok(-self.integral(b, a)?);
        }
        let a = self.clamp_to_domain(a)?;
        let b = self.clamp_to_domain(b)?;
        Ok(match &self.repr {
            Repr::Constant(v) => *v * (b - a),
            Repr::Sampled(s) => {
                let mut nodes = vec![a];
                nodes.extend(s.iter().map(|(t, _)| *t).filter(|t| *t > a && *t < b));
                nodes.push(b);
                let half = S::lit(0.5);
                nodes
                    .windows(2)
                    .map(|w| {
                        half * (self.eval_clamped(w[0]) + self.eval_clamped(w[1])) * (w[1] - w[0])
                    })
                    .sum()
            }
        })
    }

    pub fn sup_abs(&self) -> S {
        match &self.repr {
            Repr::Constant(v) => v.abs(),
            Repr::Sampled(s) => s.iter().fold(S::zero(), |m, (_, v)| m.max(v.abs())),
        }
    }

    pub fn inf(&self) -> S {
        match &self.repr {
            Repr::Constant(v) => *v,
            Repr::Sampled(s) => s.iter().fold(S::infinity(), |m, (_, v)| m.min(*v)),
        }
    }

    /// Largest absolute slope of the interpolant, i.e. its Lipschitz constant in `t`.
    pub fn max_abs_slope(&self) -> S {
        match &self.repr {
            Repr::Constant(_) => S::zero(),
            Repr::Sampled(s) => s.windows(2).fold(S::zero(), |m, w| {
                m.max(((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            }),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            repr: match &self.repr {
                Repr::Constant(v) => Repr::Constant(f(*v)),
                Repr::Sampled(s) => Repr::Sampled(s.iter().map(|(t, v)| (*t, f(*v))).collect()),
            },
        }
    }

    /// Parses a constant (`0.3`) or a JSON sample file (`@path.json`, an array
    /// of `[t, value]` pairs).
    pub fn parse(literal: &str) -> Result<Self> {
        let literal = literal.trim();
        if let Some(path) = literal.strip_prefix('@') {
            return Self::from_json_file(Path::new(path));
        }
        let v: f64 = literal
            .parse()
            .map_err(|_| Error::Parse(format!("`{literal}` is not a number")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("`{literal}` is not finite")));
        }
        Ok(Self::constant(S::lit(v)))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        let pairs: Vec<(f64, f64)> = serde_json::from_str(&text).map_err(|e| {
            Error::Parse(format!(
                "{}: expected [[t, value], ...]: {e}",
                path.display()
            ))
        })?;
        Self::sampled(
            pairs
                .into_iter()
                .map(|(t, v)| (S::lit(t), S::lit(v)))
                .collect(),
        )
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

impl<S: Scalar> fmt::Display for TimeFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Constant(v) => write!(f, "{v}"),
            Repr::Sampled(s) => write!(f, "<{} samples on [0, {}]>", s.len(), s[s.len() - 1].0),
        }
    }
}

type DriverFn<S> = dyn Fn(S, S, S) -> S + Send + Sync;

/// A user supplied driver with declared Lipschitz metadata.
#[derive(Clone)]
pub struct CustomDriver<S> {
    name: String,
    g: Arc<DriverFn<S>>,
    lipschitz_bound: S,
    time_modulus: Option<S>,
    depends_on_y: bool,
}

impl<S: Scalar> CustomDriver<S> {
    /// Bound on `|g(t, y', z') - g(t, y, z)| / |t' - t|` used by the continuity check.
    pub fn with_time_modulus(mut self, modulus: S) -> Self {
        self.time_modulus = Some(modulus);
        self
    }

    /// Declares that `g` ignores `y`, letting the solver skip the fixed-point loop.
    pub fn independent_of_y(mut self) -> Self {
        self.depends_on_y = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl<S: fmt::Debug> fmt::Debug for CustomDriver<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDriver")
            .field("name", &self.name)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("time_modulus", &self.time_modulus)
            .finish_non_exhaustive()
    }
}

/// The driver `g(y, z, t)` of the backward equation.
#[derive(Clone, Debug)]
pub enum DriverSpec<S: Scalar> {
    Zero,
    /// `g = nu(t) z`
    Linear {
        nu: TimeFunction<S>,
    },
    /// `g = mu(t)|z| + nu(t) z`
    KappaIgnorance {
        mu: TimeFunction<S>,
        nu: TimeFunction<S>,
    },
    Custom(CustomDriver<S>),
}

impl<S: Scalar> DriverSpec<S> {
    pub fn linear(nu: S) -> Self {
        Self::Linear {
            nu: TimeFunction::constant(nu),
        }
    }

    pub fn kappa(mu: S, nu: S) -> Self {
        Self::KappaIgnorance {
            mu: TimeFunction::constant(mu),
            nu: TimeFunction::constant(nu),
        }
    }

    /// Wraps a closure. The bound must be a positive Lipschitz constant of `g`
    /// in `(y, z)`; it is only checked empirically.
    pub fn custom(
        name: impl Into<String>,
        lipschitz_bound: S,
        g: impl Fn(S, S, S) -> S + Send + Sync + 'static,
    ) -> Result<CustomDriver<S>> {
        if !(lipschitz_bound > S::zero()) || !lipschitz_bound.is_finite() {
            return Err(Error::Domain(
                "lipschitz bound must be positive and finite".into(),
            ));
        }
        Ok(CustomDriver {
            name: name.into(),
            g: Arc::new(g),
            lipschitz_bound,
            time_modulus: None,
            depends_on_y: true,
        })
    }

    /// Common end of the time functions' domains; `None` when every
    /// component is defined on `[0, inf)`.
    pub fn horizon(&self) -> Option<S> {
        match self {
            Self::Zero | Self::Custom(_) => None,
            Self::Linear { nu } => nu.horizon(),
            Self::KappaIgnorance { mu, nu } => match (mu.horizon(), nu.horizon()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
        }
    }

    /// Checks that the driver is defined on all of `[0, horizon]`.
    pub fn check_covers(&self, horizon: S) -> Result<()> {
        match self.horizon() {
            Some(end) if end + S::tol(1e-12, end) < horizon => Err(Error::Domain(format!(
                "driver is defined on [0, {end}] but the problem needs [0, {horizon}]"
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, y: S, z: S, t: S) -> Result<S> {
        if !t.is_finite() || t < -S::tol(1e-12, S::one()) {
            return Err(Error::Domain(format!("time {t} is negative")));
        }
        Ok(match self {
            Self::Zero => S::zero(),
            Self::Linear { nu } => nu.eval(t)? * z,
            Self::KappaIgnorance { mu, nu } => mu.eval(t)? * z.abs() + nu.eval(t)? * z,
            Self::Custom(c) => (c.g)(y, z, t.max(S::zero())),
        })
    }

    /// Declared (or, for the built-in families, exact) Lipschitz constant in `(y, z)`.
    pub fn lipschitz_bound(&self) -> S {
        match self {
            Self::Zero => S::zero(),
            Self::Linear { nu } => nu.sup_abs(),
            Self::KappaIgnorance { mu, nu } => mu.sup_abs() + nu.sup_abs(),
            Self::Custom(c) => c.lipschitz_bound,
        }
    }

    pub fn depends_on_y(&self) -> bool {
        matches!(self, Self::Custom(c) if c.depends_on_y)
    }

    /// Bound on `|g(y, z, t') - g(y, z, t)| / |t' - t|` at fixed `(y, z)`.
    pub fn time_modulus_at(&self, z: S) -> Option<S> {
        match self {
            Self::Zero => Some(S::zero()),
            Self::Linear { nu } => Some(nu.max_abs_slope() * z.abs()),
            Self::KappaIgnorance { mu, nu } => {
                Some((mu.max_abs_slope() + nu.max_abs_slope()) * z.abs())
            }
            Self::Custom(c) => c.time_modulus,
        }
    }

    /// `Some((mu, nu))` for drivers that do not depend on `t`; custom drivers
    /// are assumed time-homogeneous and are not decomposed here.
    pub fn constant_coefficients(&self) -> Option<(S, S)> {
        match self {
            Self::Zero => Some((S::zero(), S::zero())),
            Self::Linear { nu } => Some((S::zero(), nu.as_constant()?)),
            Self::KappaIgnorance { mu, nu } => Some((mu.as_constant()?, nu.as_constant()?)),
            Self::Custom(_) => None,
        }
    }

    pub fn is_time_homogeneous(&self) -> bool {
        matches!(self, Self::Custom(_)) || self.constant_coefficients().is_some()
    }

    /// Parses `zero`, `linear:<nu>`, `kappa:<mu>,<nu>` or `kappa:<mu>` where
    /// each coefficient is a number or `@file.json`.
    pub fn parse(literal: &str) -> Result<Self> {
        let literal = literal.trim();
        let (head, args) = literal.split_once(':').unwrap_or((literal, ""));
        match head {
            "zero" if args.is_empty() => Ok(Self::Zero),
            "linear" => Ok(Self::Linear {
                nu: TimeFunction::parse(args)?,
            }),
            "kappa" => {
                let mut parts = args.split(',');
                let mu = TimeFunction::parse(parts.next().unwrap_or(""))?;
                let nu = match parts.next() {
                    Some(p) => TimeFunction::parse(p)?,
                    None => TimeFunction::constant(S::zero()),
                };
                if parts.next().is_some() {
                    return Err(Error::Parse(format!(
                        "`{literal}`: kappa takes at most two coefficients"
                    )));
                }
                Ok(Self::KappaIgnorance { mu, nu })
            }
            _ => Err(Error::Parse(format!(
                "unknown driver `{literal}` (expected zero, linear:<nu> or kappa:<mu>,<nu>)"
            ))),
        }
    }
}

/// A driver with its time coefficients evaluated at one instant.
pub(crate) enum FrozenDriver<'a, S: Scalar> {
    MuNu { mu: S, nu: S },
    Custom { g: &'a DriverFn<S>, t: S },
}

impl<S: Scalar> FrozenDriver<'_, S> {
    #[inline]
    pub(crate) fn eval(&self, y: S, z: S) -> S {
        match self {
            Self::MuNu { mu, nu } => *mu * z.abs() + *nu * z,
            Self::Custom { g, t } => g(y, z, *t),
        }
    }
}

impl<S: Scalar> DriverSpec<S> {
    pub(crate) fn frozen_at(&self, t: S) -> Result<FrozenDriver<'_, S>> {
        Ok(match self {
            Self::Zero => FrozenDriver::MuNu {
                mu: S::zero(),
                nu: S::zero(),
            },
            Self::Linear { nu } => FrozenDriver::MuNu {
                mu: S::zero(),
                nu: nu.eval(t)?,
            },
            Self::KappaIgnorance { mu, nu } => FrozenDriver::MuNu {
                mu: mu.eval(t)?,
                nu: nu.eval(t)?,
            },
            Self::Custom(c) => {
                if !t.is_finite() || t < -S::tol(1e-12, S::one()) {
                    return Err(Error::Domain(format!("time {t} is negative")));
                }
                FrozenDriver::Custom {
                    g: c.g.as_ref(),
                    t: t.max(S::zero()),
                }
            }
        })
    }
}

impl<S: Scalar> fmt::Display for DriverSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Linear { nu } => write!(f, "linear:{nu}"),
            Self::KappaIgnorance { mu, nu } => write!(f, "kappa:{mu},{nu}"),
            Self::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

/// Cartesian product of sample coordinates, `(y, z, t)` ordered with `t` slowest.
pub fn sample_grid<S: Scalar>(ys: &[S], zs: &[S], ts: &[S]) -> Vec<(S, S, S)> {
    let mut out = Vec::with_capacity(ys.len() * zs.len() * ts.len());
    for &t in ts {
        for &y in ys {
            for &z in zs {
                out.push((y, z, t));
            }
        }
    }
    out
}

/// y in [-5, 5] (11 points), z in [-10, 10] (21 points), t in [0, horizon] (11 points).
pub fn default_sample_grid<S: Scalar>(horizon: S) -> Vec<(S, S, S)> {
    sample_grid(
        &linspace(S::lit(-5.0), S::lit(5.0), 11),
        &linspace(S::lit(-10.0), S::lit(10.0), 21),
        &linspace(S::zero(), horizon, 11),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroZViolation<S> {
    pub y: S,
    pub t: S,
    /// `g(y, 0, t)`
    pub value: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzViolation<S> {
    pub a: (S, S, S),
    pub b: (S, S, S),
    pub ratio: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityDefect<S> {
    pub y: S,
    pub z: S,
    pub t0: S,
    pub t1: S,
    pub jump: S,
    pub allowed: S,
}

/// Outcome of [`validate_hypotheses`]. Nothing here is a proof; the
/// Lipschitz and continuity checks only look at the sampled points.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport<S> {
    pub zero_z_violations: Vec<ZeroZViolation<S>>,
    pub lipschitz_declared: S,
    /// Largest `|g(p) - g(q)| / (|y_p - y_q| + |z_p - z_q|)` over sample pairs sharing `t`.
    pub lipschitz_estimate: S,
    pub lipschitz_violations: Vec<LipschitzViolation<S>>,
    pub continuity_defects: Vec<ContinuityDefect<S>>,
    /// False when the driver declares no time modulus.
    pub continuity_checked: bool,
}

impl<S: Scalar> ValidationReport<S> {
    pub fn vanishes_at_zero_z(&self) -> bool {
        self.zero_z_violations.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.zero_z_violations.is_empty()
            && self.lipschitz_violations.is_empty()
            && self.continuity_defects.is_empty()
    }
}

fn sort_dedup<S: Scalar>(mut v: Vec<S>) -> Vec<S> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    v.dedup();
    v
}

/// Samples the driver on `grid` and reports violations of `g(y, 0, t) = 0`,
/// of the declared Lipschitz bound and of continuity in `t`.
pub fn validate_hypotheses<S: Scalar>(
    spec: &DriverSpec<S>,
    grid: &[(S, S, S)],
) -> Result<ValidationReport<S>> {
    if grid.is_empty() {
        return Err(Error::Precondition("sample grid is empty".into()));
    }
    if grid
        .iter()
        .any(|(y, z, t)| !(y.is_finite() && z.is_finite() && t.is_finite()))
    {
        return Err(Error::Precondition("sample grid must be finite".into()));
    }
    let values = grid
        .iter()
        .map(|&(y, z, t)| spec.eval(y, z, t))
        .collect::<Result<Vec<_>>>()?;

    let ys = sort_dedup(grid.iter().map(|p| p.0).collect());
    let ts = sort_dedup(grid.iter().map(|p| p.2).collect());
    let zero_tol = S::lit(ZERO_Z_TOLERANCE);
    let mut zero_z_violations = Vec::new();
    for &t in &ts {
        for &y in &ys {
            let value = spec.eval(y, S::zero(), t)?;
            if value.abs() > zero_tol {
                zero_z_violations.push(ZeroZViolation { y, t, value });
            }
        }
    }

    let declared = spec.lipschitz_bound();
    let allowed = declared * S::lit(1.0 + 1e-9) + S::lit(1e-12);
    let mut estimate = S::zero();
    let mut lipschitz_violations = Vec::new();
    for &t in &ts {
        let idx: Vec<usize> = (0..grid.len()).filter(|&k| grid[k].2 == t).collect();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let dist = (grid[i].0 - grid[j].0).abs() + (grid[i].1 - grid[j].1).abs();
                if dist == S::zero() {
                    continue;
                }
                let ratio = (values[i] - values[j]).abs() / dist;
                estimate = estimate.max(ratio);
                if ratio > allowed {
                    lipschitz_violations.push(LipschitzViolation {
                        a: grid[i],
                        b: grid[j],
                        ratio,
                    });
                }
            }
        }
    }

    let mut continuity_defects = Vec::new();
    let mut continuity_checked = true;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| {
        (grid[i].0, grid[i].1, grid[i].2)
            .partial_cmp(&(grid[j].0, grid[j].1, grid[j].2))
            .expect("finite samples")
    });
    for w in order.windows(2) {
        let (p, q) = (grid[w[0]], grid[w[1]]);
        if p.0 != q.0 || p.1 != q.1 || p.2 == q.2 {
            continue;
        }
        let Some(modulus) = spec.time_modulus_at(p.1) else {
            continuity_checked = false;
            break;
        };
        let jump = (values[w[1]] - values[w[0]]).abs();
        let allowed = modulus * (q.2 - p.2) * S::lit(1.0 + 1e-9) + S::lit(1e-12);
        if jump > allowed {
            continuity_defects.push(ContinuityDefect {
                y: p.0,
                z: p.1,
                t0: p.2,
                t1: q.2,
                jump,
                allowed,
            });
        }
    }

    Ok(ValidationReport {
        zero_z_violations,
        lipschitz_declared: declared,
        lipschitz_estimate: estimate,
        lipschitz_violations,
        continuity_defects,
        continuity_checked,
    })
}

/// Result of [`classify_linearity`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinearityVerdict<S> {
    pub is_linear_in_z: bool,
    pub mu_hat: TimeFunction<S>,
    pub nu_hat: TimeFunction<S>,
    /// Largest deviation of `g` from `mu_hat(t)|z| + nu_hat(t) z` on the sample grid.
    pub max_residual: S,
    pub tolerance: S,
}

impl<S: Scalar> LinearityVerdict<S> {
    /// Linear in `z` and of the form `nu(t) z`, the case in which the
    /// g-expectation is a classical expectation.
    pub fn is_pure_linear(&self) -> bool {
        self.is_linear_in_z && self.max_residual <= self.tolerance
    }
}

/// Recovers `mu_hat(t) = (g(0,1,t) + g(0,-1,t)) / 2` and
/// `nu_hat(t) = (g(0,1,t) - g(0,-1,t)) / 2` on `time_grid`.
///
/// `time_grid` must start at 0 and be strictly increasing. The residual is
/// sampled on `y` in `[-5, 5]`, `z` in `[-10, 10]`.
pub fn classify_linearity<S: Scalar>(
    spec: &DriverSpec<S>,
    time_grid: &[S],
    tol: S,
) -> Result<LinearityVerdict<S>> {
    if !(tol > S::zero()) {
        return Err(Error::Domain("linearity tolerance must be positive".into()));
    }
    if time_grid.len() < 2 {
        return Err(Error::Domain("time grid needs at least two points".into()));
    }
    let ys = linspace(S::lit(-5.0), S::lit(5.0), 11);
    let zero_check = validate_hypotheses(spec, &sample_grid(&ys, &[S::zero()], time_grid))?;
    if let Some(v) = zero_check.zero_z_violations.first() {
        return Err(Error::Precondition(format!(
            "driver violates g(y, 0, t) = 0: g({}, 0, {}) = {}",
            v.y, v.t, v.value
        )));
    }

    let half = S::lit(0.5);
    let mut mu = Vec::with_capacity(time_grid.len());
    let mut nu = Vec::with_capacity(time_grid.len());
    for &t in time_grid {
        let up = spec.eval(S::zero(), S::one(), t)?;
        let down = spec.eval(S::zero(), -S::one(), t)?;
        mu.push((t, (up + down) * half));
        nu.push((t, (up - down) * half));
    }

    let zs = linspace(S::lit(-10.0), S::lit(10.0), 41);
    let mut max_residual = S::zero();
    for (k, &t) in time_grid.iter().enumerate() {
        let (m, n) = (mu[k].1, nu[k].1);
        for &y in &ys {
            for &z in &zs {
                let r = (spec.eval(y, z, t)? - m * z.abs() - n * z).abs();
                max_residual = max_residual.max(r);
            }
        }
    }

    let sup_mu = mu.iter().fold(S::zero(), |a, (_, v)| a.max(v.abs()));
    Ok(LinearityVerdict {
        is_linear_in_z: sup_mu <= tol,
        mu_hat: TimeFunction::sampled(mu)?,
        nu_hat: TimeFunction::sampled(nu)?,
        max_residual,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_t(n: usize) -> Vec<f64> {
        linspace(0.0, 1.0, n)
    }

    #[test]
    fn eval_examples() {
        let zero = DriverSpec::<f64>::Zero;
        assert_eq!(zero.eval(3.0, -2.0, 0.5).unwrap(), 0.0);
        assert_eq!(
            DriverSpec::kappa(0.5, 0.0).eval(0.0, 2.0, 0.3).unwrap(),
            1.0
        );
        let lin = DriverSpec::linear(0.3).eval(7.0, -2.0, 0.9).unwrap();
        assert!(f64::abs(lin + 0.6) < 1e-15);
    }

    #[test]
    fn eval_outside_sampled_domain_is_error() {
        let nu = TimeFunction::sampled(vec![(0.0, 0.1), (1.0, 0.3)]).unwrap();
        let d = DriverSpec::Linear { nu };
        assert!(d.eval(0.0, 1.0, 1.5).is_err());
        assert!(d.eval(0.0, 1.0, -0.1).is_err());
        assert!(f64::abs(d.eval(0.0, 1.0, 0.5).unwrap() - 0.2) < 1e-15);
    }

    #[test]
    fn time_function_integral_is_exact() {
        let f = TimeFunction::sampled(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert!(f64::abs(f.integral(0.0, 2.0).unwrap() - 1.5) < 1e-15);
        assert!(f64::abs(f.integral(0.5, 1.5).unwrap() - (0.375 + 0.5)) < 1e-15);
        assert!(TimeFunction::<f64>::sampled(vec![(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(TimeFunction::<f64>::sampled(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn kappa_passes_validation() {
        let r =
            validate_hypotheses(&DriverSpec::kappa(0.5, 0.3), &default_sample_grid(1.0)).unwrap();
        assert!(r.is_clean(), "{r:?}");
        assert!(f64::abs(r.lipschitz_estimate - 0.8) < 1e-12);
    }

    #[test]
    fn quadratic_driver_breaks_lipschitz_bound() {
        let d = DriverSpec::Custom(DriverSpec::custom("z2", 1.0, |_, z: f64, _| z * z).unwrap());
        let r = validate_hypotheses(&d, &default_sample_grid(1.0)).unwrap();
        assert!(r.vanishes_at_zero_z());
        assert!(!r.lipschitz_violations.is_empty());
        // |z^2 - z'^2| / |z - z'| = |z + z'| peaks at 19 for neighbours 9, 10
        // and at 20 in the limit; the grid reaches 19 exactly via (9, 10).
        assert!(r.lipschitz_estimate >= 19.0 && r.lipschitz_estimate <= 20.0);
    }

    #[test]
    fn offset_driver_is_nonzero_at_zero_z() {
        let d = DriverSpec::Custom(
            DriverSpec::custom("abs+0.1", 1.0, |_, z: f64, _| z.abs() + 0.1).unwrap(),
        );
        let r = validate_hypotheses(&d, &default_sample_grid(1.0)).unwrap();
        assert!(!r.vanishes_at_zero_z());
        assert!(r
            .zero_z_violations
            .iter()
            .all(|v| (v.value - 0.1).abs() < 1e-15));
        assert!(classify_linearity(&d, &grid_t(5), 1e-9).is_err());
    }

    #[test]
    fn continuity_defect_is_reported() {
        let d = DriverSpec::Custom(
            DriverSpec::custom(
                "step",
                1.0,
                |_, z: f64, t: f64| if t > 0.5 { z } else { 0.0 },
            )
            .unwrap()
            .with_time_modulus(1.0),
        );
        let r = validate_hypotheses(&d, &default_sample_grid(1.0)).unwrap();
        assert!(r.continuity_checked);
        assert!(!r.continuity_defects.is_empty());
        let undeclared =
            DriverSpec::Custom(DriverSpec::custom("z", 1.0, |_, z: f64, _| z).unwrap());
        assert!(
            !validate_hypotheses(&undeclared, &default_sample_grid(1.0))
                .unwrap()
                .continuity_checked
        );
    }

    #[test]
    fn classify_examples() {
        let v = classify_linearity(&DriverSpec::kappa(0.5, 0.3), &grid_t(11), 1e-9).unwrap();
        assert!(!v.is_linear_in_z);
        for &(_, m) in v.mu_hat.samples().unwrap() {
            assert!((m - 0.5).abs() <= 1e-9);
        }
        for &(_, n) in v.nu_hat.samples().unwrap() {
            assert!((n - 0.3).abs() <= 1e-9);
        }
        assert!(v.max_residual <= 1e-12);

        let z = classify_linearity(&DriverSpec::<f64>::Zero, &grid_t(11), 1e-9).unwrap();
        assert!(z.is_linear_in_z && z.is_pure_linear());
        assert_eq!(z.mu_hat.sup_abs(), 0.0);
    }

    #[test]
    fn classify_flags_y_modulated_driver() {
        let g = |y: f64, z: f64, _t: f64| z * (0.3 + 0.2 * y.sin());
        let d = DriverSpec::Custom(DriverSpec::custom("mod", 0.5 + 0.2 * 10.0, g).unwrap());
        let v = classify_linearity(&d, &grid_t(3), 1e-9).unwrap();
        // direct sampling: mu_hat = 0, nu_hat = 0.3, residual = max |0.2 sin(y) z|
        let mut expected = 0.0f64;
        for y in linspace(-5.0, 5.0, 11) {
            for z in linspace(-10.0, 10.0, 41) {
                expected = expected.max((g(y, z, 0.0) - 0.3 * z).abs());
            }
        }
        assert!(v.is_linear_in_z);
        assert!(!v.is_pure_linear());
        assert!((v.max_residual - expected).abs() < 1e-12);
        assert!(v.max_residual > 1.0);
    }

    #[test]
    fn parse_literals() {
        assert!(matches!(
            DriverSpec::<f64>::parse("zero").unwrap(),
            DriverSpec::Zero
        ));
        let k = DriverSpec::<f64>::parse("kappa:0.5,0.3").unwrap();
        assert_eq!(k.constant_coefficients(), Some((0.5, 0.3)));
        assert_eq!(
            DriverSpec::<f64>::parse("kappa:0.5")
                .unwrap()
                .constant_coefficients(),
            Some((0.5, 0.0))
        );
        assert_eq!(
            DriverSpec::<f64>::parse("linear:-0.3")
                .unwrap()
                .constant_coefficients(),
            Some((0.0, -0.3))
        );
        assert!(DriverSpec::<f64>::parse("quadratic:1").is_err());
        assert!(DriverSpec::<f64>::parse("linear:abc").is_err());
        assert!(DriverSpec::<f64>::parse("kappa:1,2,3").is_err());
    }

    #[test]
    fn parse_sampled_file() {
        let dir = std::env::temp_dir().join(format!("nlx-driver-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mu.json");
        std::fs::write(&path, "[[0, 0.5], [0.5, 0.25], [1, 0.5]]").unwrap();
        let d = DriverSpec::<f64>::parse(&format!("kappa:@{},0.1", path.display())).unwrap();
        assert_eq!(d.horizon(), Some(1.0));
        assert!((d.eval(0.0, 1.0, 0.25).unwrap() - (0.375 + 0.1)).abs() < 1e-15);
        assert!(d.check_covers(2.0).is_err());
        std::fs::write(&path, "{\"not\": \"pairs\"}").unwrap();
        assert!(DriverSpec::<f64>::parse(&format!("kappa:@{}", path.display())).is_err());
    }

    proptest! {
        #[test]
        fn builtins_vanish_at_zero_z(mu in -2.0f64..2.0, nu in -2.0f64..2.0, y in -50.0f64..50.0, t in 0.0f64..5.0) {
            for d in [DriverSpec::Zero, DriverSpec::linear(nu), DriverSpec::kappa(mu, nu)] {
                prop_assert_eq!(d.eval(y, 0.0, t).unwrap(), 0.0);
            }
        }

        #[test]
        fn kappa_is_positively_homogeneous(mu in -2.0f64..2.0, nu in -2.0f64..2.0, z in -10.0f64..10.0, lambda in 0.0f64..10.0) {
            let d = DriverSpec::kappa(mu, nu);
            let lhs = d.eval(1.0, lambda * z, 0.2).unwrap();
            let rhs = lambda * d.eval(1.0, z, 0.2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn classify_inverts_kappa_exactly(
            mu0 in -1.0f64..1.0, mu1 in -1.0f64..1.0, nu0 in -1.0f64..1.0, nu1 in -1.0f64..1.0,
        ) {
            let mu = TimeFunction::sampled(vec![(0.0, mu0), (1.0, mu1)]).unwrap();
            let nu = TimeFunction::sampled(vec![(0.0, nu0), (1.0, nu1)]).unwrap();
            let d = DriverSpec::KappaIgnorance { mu: mu.clone(), nu: nu.clone() };
            let grid = grid_t(7);
            let v = classify_linearity(&d, &grid, 1e-9).unwrap();
            for &t in &grid {
                prop_assert!((v.mu_hat.eval(t).unwrap() - mu.eval(t).unwrap()).abs() <= 1e-12);
                prop_assert!((v.nu_hat.eval(t).unwrap() - nu.eval(t).unwrap()).abs() <= 1e-12);
            }
        }
    }
}
