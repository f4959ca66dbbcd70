//! Terminal claims `xi = f(W_T)` for bounded piecewise-linear `f` with jumps,
//! their superlevel sets, and pairwise comonotonicity.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scalar::{linspace, Scalar};

/// Default number of knots used to approximate `logistic:k`.
pub const LOGISTIC_KNOTS: usize = 801;

/// Logistic knots cover `|k x| <= LOGISTIC_SPAN`; the tails are flat beyond.
pub const LOGISTIC_SPAN: f64 = 20.0;

/// A point where the claim may jump or change slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakpoint<S> {
    pub x: S,
    /// `f(x)` itself.
    pub point: S,
    /// Right limit `f(x+)`.
    pub right: S,
    /// Slope on `(x, next breakpoint)`.
    pub slope: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    None,
}

/// A bounded piecewise-linear function of the terminal Brownian state.
///
/// Left of the first breakpoint the claim equals `left_tail`; right of the
/// last one it is flat. At a breakpoint the stored `point` value is returned,
/// which for the right-continuous builtins is the right limit.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalClaim<S> {
    left_tail: S,
    breaks: Vec<Breakpoint<S>>,
    bounds: (S, S),
    nondecreasing: bool,
    nonincreasing: bool,
    label: String,
}

impl<S: Scalar> TerminalClaim<S> {
    pub fn new(left_tail: S, breaks: Vec<Breakpoint<S>>) -> Result<Self> {
        if !left_tail.is_finite()
            || breaks.iter().any(|b| {
                !(b.x.is_finite()
                    && b.point.is_finite()
                    && b.right.is_finite()
                    && b.slope.is_finite())
            })
        {
            return Err(Error::Domain("claim data must be finite".into()));
        }
        if breaks.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(Error::Domain(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if let Some(last) = breaks.last() {
            if last.slope != S::zero() {
                return Err(Error::Domain(
                    "the last piece must be flat so the claim stays bounded".into(),
                ));
            }
        }
        let mut claim = Self {
            left_tail,
            breaks,
            bounds: (left_tail, left_tail),
            nondecreasing: true,
            nonincreasing: true,
            label: String::new(),
        };
        claim.analyse();
        claim.label = claim.describe_pieces();
        Ok(claim)
    }

    fn analyse(&mut self) {
        let (mut lo, mut hi) = (self.left_tail, self.left_tail);
        let mut up = true;
        let mut down = true;
        for k in 0..self.breaks.len() {
            let b = self.breaks[k];
            let left = self.left_limit(k);
            let end = self.segment_end(k);
            for v in [left, b.point, b.right, end] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            // Left limits are recomputed from the previous piece, so allow
            // rounding noise when comparing them with the stored values.
            let slack = S::epsilon() * S::lit(64.0) * left.abs().max(b.point.abs()).max(S::one());
            up &= left <= b.point + slack && b.point <= b.right && b.slope >= S::zero();
            down &= left + slack >= b.point && b.point >= b.right && b.slope <= S::zero();
        }
        self.bounds = (lo, hi);
        self.nondecreasing = up;
        self.nonincreasing = down;
    }

    fn describe_pieces(&self) -> String {
        format!("piecewise[{} breakpoints]", self.breaks.len())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn constant(c: S) -> Result<Self> {
        Ok(Self::new(c, Vec::new())?.with_label(format!("const:{c}")))
    }

    /// `I[x >= a]`
    pub fn threshold(a: S) -> Result<Self> {
        let b = Breakpoint {
            x: a,
            point: S::one(),
            right: S::one(),
            slope: S::zero(),
        };
        Ok(Self::new(S::zero(), vec![b])?.with_label(format!("threshold:{a}")))
    }

    /// `I[a <= x <= b]`, closed at both ends.
    pub fn indicator(a: S, b: S) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Domain(format!(
                "indicator needs a < b, got {a}, {b}"
            )));
        }
        let one = S::one();
        let zero = S::zero();
        let breaks = vec![
            Breakpoint {
                x: a,
                point: one,
                right: one,
                slope: zero,
            },
            Breakpoint {
                x: b,
                point: one,
                right: zero,
                slope: zero,
            },
        ];
        Ok(Self::new(zero, breaks)?.with_label(format!("indicator:{a},{b}")))
    }

    /// `x` clamped to `[-cap, cap]`.
    pub fn identity(cap: S) -> Result<Self> {
        if !(cap > S::zero()) {
            return Err(Error::Domain("identity cap must be positive".into()));
        }
        let breaks = vec![
            Breakpoint {
                x: -cap,
                point: -cap,
                right: -cap,
                slope: S::one(),
            },
            Breakpoint {
                x: cap,
                point: cap,
                right: cap,
                slope: S::zero(),
            },
        ];
        Ok(Self::new(-cap, breaks)?.with_label(format!("identity:{cap}")))
    }

    /// Piecewise-linear interpolant of `1 / (1 + exp(-k x))` on `knots`
    /// equally spaced points covering `|k x| <= 20`, flat beyond.
    pub fn logistic(k: S, knots: usize) -> Result<Self> {
        if k == S::zero() || !k.is_finite() {
            return Err(Error::Domain("logistic steepness must be non-zero".into()));
        }
        if knots < 2 {
            return Err(Error::Domain("logistic needs at least two knots".into()));
        }
        let reach = S::lit(LOGISTIC_SPAN) / k.abs();
        let xs = linspace(-reach, reach, knots);
        let f = |x: S| S::one() / (S::one() + (-k * x).exp());
        let mut breaks: Vec<Breakpoint<S>> = xs
            .iter()
            .map(|&x| Breakpoint {
                x,
                point: f(x),
                right: f(x),
                slope: S::zero(),
            })
            .collect();
        for i in 0..knots - 1 {
            breaks[i].slope = (breaks[i + 1].point - breaks[i].point) / (xs[i + 1] - xs[i]);
        }
        let label = if knots == LOGISTIC_KNOTS {
            format!("logistic:{k}")
        } else {
            format!("logistic:{k},{knots}")
        };
        Ok(Self::new(f(xs[0]), breaks)?.with_label(label))
    }

    pub fn eval(&self, x: S) -> S {
        let k = self.breaks.partition_point(|b| b.x <= x);
        if k == 0 {
            return self.left_tail;
        }
        let b = &self.breaks[k - 1];
        if x == b.x {
            b.point
        } else {
            b.right + b.slope * (x - b.x)
        }
    }

    /// Right limit and right slope at `x`.
    fn right_piece(&self, x: S) -> (S, S) {
        let k = self.breaks.partition_point(|b| b.x <= x);
        if k == 0 {
            return (self.left_tail, S::zero());
        }
        let b = &self.breaks[k - 1];
        (b.right + b.slope * (x - b.x), b.slope)
    }

    /// Left limit `f(x_k-)` at breakpoint `k`.
    fn left_limit(&self, k: usize) -> S {
        if k == 0 {
            self.left_tail
        } else {
            let p = &self.breaks[k - 1];
            p.right + p.slope * (self.breaks[k].x - p.x)
        }
    }

    /// Left limit at the end of the segment starting at breakpoint `k`.
    fn segment_end(&self, k: usize) -> S {
        match self.breaks.get(k + 1) {
            Some(n) => {
                let b = &self.breaks[k];
                b.right + b.slope * (n.x - b.x)
            }
            None => self.breaks[k].right,
        }
    }

    /// `int_a^b f(x) dx` for finite `a <= b`, exact for the piecewise-linear form.
    pub fn integral(&self, a: S, b: S) -> S {
        let half = S::lit(0.5);
        let mut total = S::zero();
        let mut lo = a;
        // Pieces: (-inf, x_0) then [x_k, x_{k+1}) and [x_last, inf).
        let first = self.breaks.first().map_or(b, |p| p.x.min(b));
        if lo < first {
            total = total + self.left_tail * (first - lo);
            lo = first;
        }
        for (k, p) in self.breaks.iter().enumerate() {
            let end = self.breaks.get(k + 1).map_or(b, |n| n.x.min(b));
            let start = lo.max(p.x);
            if end > start {
                total = total + (end - start) * (p.right + p.slope * (half * (start + end) - p.x));
                lo = end;
            }
            if lo >= b {
                break;
            }
        }
        total
    }

    /// Breakpoints where the claim is discontinuous.
    pub fn jumps(&self) -> Vec<S> {
        (0..self.breaks.len())
            .filter(|&k| {
                let b = self.breaks[k];
                let left = self.left_limit(k);
                let slack =
                    S::epsilon() * S::lit(64.0) * left.abs().max(b.right.abs()).max(S::one());
                (left - b.point).abs() > slack || (b.point - b.right).abs() > slack
            })
            .map(|k| self.breaks[k].x)
            .collect()
    }

    pub fn breakpoints(&self) -> &[Breakpoint<S>] {
        &self.breaks
    }

    pub fn left_tail(&self) -> S {
        self.left_tail
    }

    /// `(f_min, f_max)`; every value of the claim lies in this range.
    pub fn bounds(&self) -> (S, S) {
        self.bounds
    }

    /// Range of the breakpoints; the claim is constant outside it.
    pub fn active_region(&self) -> Option<(S, S)> {
        Some((self.breaks.first()?.x, self.breaks.last()?.x))
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.nondecreasing
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.nonincreasing
    }

    /// Constant claims report `Increasing`.
    pub fn monotonicity(&self) -> Monotonicity {
        if self.nondecreasing {
            Monotonicity::Increasing
        } else if self.nonincreasing {
            Monotonicity::Decreasing
        } else {
            Monotonicity::None
        }
    }

    pub fn is_constant(&self) -> bool {
        self.bounds.0 == self.bounds.1
    }

    fn map_values(&self, f: impl Fn(S) -> S, slope: impl Fn(S) -> S, label: String) -> Self {
        let breaks = self
            .breaks
            .iter()
            .map(|b| Breakpoint {
                x: b.x,
                point: f(b.point),
                right: f(b.right),
                slope: slope(b.slope),
            })
            .collect();
        Self::new(f(self.left_tail), breaks)
            .expect("value map preserves claim invariants")
            .with_label(label)
    }

    /// `lambda * f`
    pub fn scaled(&self, lambda: S) -> Self {
        self.map_values(
            |v| lambda * v,
            |m| lambda * m,
            format!("{lambda}*({})", self.label),
        )
    }

    pub fn negated(&self) -> Self {
        self.map_values(|v| -v, |m| -m, format!("neg:{}", self.label))
    }

    /// `c + f`
    pub fn offset(&self, c: S) -> Self {
        self.map_values(|v| c + v, |m| m, format!("{c}+({})", self.label))
    }

    /// `x -> f(x + dx)`
    pub fn shifted(&self, dx: S) -> Self {
        let breaks = self
            .breaks
            .iter()
            .map(|b| Breakpoint { x: b.x - dx, ..*b })
            .collect();
        Self::new(self.left_tail, breaks)
            .expect("shift preserves claim invariants")
            .with_label(format!("{}@{dx}", self.label))
    }

    /// Pointwise sum, exact on the merged breakpoints.
    pub fn sum(&self, other: &Self) -> Self {
        let mut xs: Vec<S> = self
            .breaks
            .iter()
            .chain(&other.breaks)
            .map(|b| b.x)
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        xs.dedup();
        let breaks = xs
            .into_iter()
            .map(|x| {
                let (r1, m1) = self.right_piece(x);
                let (r2, m2) = other.right_piece(x);
                Breakpoint {
                    x,
                    point: self.eval(x) + other.eval(x),
                    right: r1 + r2,
                    slope: m1 + m2,
                }
            })
            .collect();
        Self::new(self.left_tail + other.left_tail, breaks)
            .expect("sum of bounded claims is a bounded claim")
            .with_label(format!("{}+{}", self.label, other.label))
    }

    /// Parses a builtin literal: `threshold:a`, `indicator:a,b`,
    /// `identity:cap`, `logistic:k[,knots]`, `const:c`, `neg:<claim>`, or
    /// `@file.json` for a custom claim.
    pub fn parse(literal: &str) -> Result<Self> {
        let literal = literal.trim();
        if let Some(path) = literal.strip_prefix('@') {
            return Self::from_json_file(Path::new(path));
        }
        let (head, args) = literal
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("claim `{literal}` has no `kind:` prefix")))?;
        if head == "neg" {
            return Ok(Self::parse(args)?.negated());
        }
        let nums = args
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Parse(format!("claim `{literal}`: `{a}` is not a finite number"))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let wrap = |r: Result<Self>| r.map_err(|e| Error::Parse(format!("claim `{literal}`: {e}")));
        match (head, nums.as_slice()) {
            ("threshold", [a]) => wrap(Self::threshold(S::lit(*a))),
            ("indicator", [a, b]) => wrap(Self::indicator(S::lit(*a), S::lit(*b))),
            ("identity", [cap]) => wrap(Self::identity(S::lit(*cap))),
            ("logistic", [k]) => wrap(Self::logistic(S::lit(*k), LOGISTIC_KNOTS)),
            ("logistic", [k, n]) if n.fract() == 0.0 && *n >= 0.0 => wrap(Self::logistic(S::lit(*k), *n as usize)),
            ("const", [c]) => wrap(Self::constant(S::lit(*c))),
            _ => Err(Error::Parse(format!(
                "unknown claim `{literal}` (expected threshold:a, indicator:a,b, identity:cap, logistic:k, const:c, neg:<claim> or @file.json)"
            ))),
        }
    }

    /// Loads `{"breakpoints": [...], "left_values": [...], "right_slopes": [...]}`.
    ///
    /// `left_values[k]` is the value at the left end of the piece starting at
    /// `breakpoints[k]`. Optional keys: `left_tail` (value left of the first
    /// breakpoint, default `left_values[0]`) and `point_values` (default: the
    /// right-continuous choice `left_values`).
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
            .map(|c| c.with_label(format!("@{}", path.display())))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            breakpoints: Vec<f64>,
            left_values: Vec<f64>,
            right_slopes: Vec<f64>,
            left_tail: Option<f64>,
            point_values: Option<Vec<f64>>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let n = raw.breakpoints.len();
        if n == 0 || raw.left_values.len() != n || raw.right_slopes.len() != n {
            return Err(Error::Parse(
                "breakpoints, left_values and right_slopes must be non-empty and of equal length"
                    .into(),
            ));
        }
        let points = raw.point_values.unwrap_or_else(|| raw.left_values.clone());
        if points.len() != n {
            return Err(Error::Parse(
                "point_values must match breakpoints in length".into(),
            ));
        }
        let breaks = (0..n)
            .map(|k| Breakpoint {
                x: S::lit(raw.breakpoints[k]),
                point: S::lit(points[k]),
                right: S::lit(raw.left_values[k]),
                slope: S::lit(raw.right_slopes[k]),
            })
            .collect();
        Self::new(S::lit(raw.left_tail.unwrap_or(raw.left_values[0])), breaks)
    }

    /// `{x : f(x) >= s}` as a sorted union of disjoint intervals.
    pub fn superlevel_set(&self, s: S) -> IntervalSet<S> {
        let mut out = IntervalSet::empty();
        let inf = S::infinity();
        if self.breaks.is_empty() {
            if self.left_tail >= s {
                out.push_merge(Interval::everything());
            }
            return out;
        }
        if self.left_tail >= s {
            out.push_merge(Interval {
                lo: -inf,
                hi: self.breaks[0].x,
                lo_closed: false,
                hi_closed: false,
            });
        }
        for k in 0..self.breaks.len() {
            let b = self.breaks[k];
            if b.point >= s {
                out.push_merge(Interval::point(b.x));
            }
            let r = self.breaks.get(k + 1).map_or(inf, |n| n.x);
            let open = Interval {
                lo: b.x,
                hi: r,
                lo_closed: false,
                hi_closed: false,
            };
            if b.slope == S::zero() {
                if b.right >= s {
                    out.push_merge(open);
                }
                continue;
            }
            let cross = b.x + (s - b.right) / b.slope;
            if b.slope > S::zero() {
                if cross <= b.x {
                    out.push_merge(open);
                } else if cross < r {
                    out.push_merge(Interval {
                        lo: cross,
                        hi: r,
                        lo_closed: true,
                        hi_closed: false,
                    });
                }
            } else if cross >= r {
                out.push_merge(open);
            } else if cross > b.x {
                out.push_merge(Interval {
                    lo: b.x,
                    hi: cross,
                    lo_closed: false,
                    hi_closed: true,
                });
            }
        }
        out
    }
}

impl<S: Scalar> fmt::Display for TerminalClaim<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// An interval of the real line; infinite ends are always open.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<S> {
    pub lo: S,
    pub hi: S,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl<S: Scalar> Interval<S> {
    pub fn new(lo: S, hi: S, lo_closed: bool, hi_closed: bool) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Domain(format!("invalid interval bounds {lo}, {hi}")));
        }
        let iv = Self {
            lo,
            hi,
            lo_closed: lo_closed && lo.is_finite(),
            hi_closed: hi_closed && hi.is_finite(),
        };
        if iv.is_empty() {
            return Err(Error::Domain(format!(
                "interval with bounds {lo}, {hi} is empty"
            )));
        }
        Ok(iv)
    }

    /// `[a, b]`, with infinite ends opened.
    pub fn closed(a: S, b: S) -> Result<Self> {
        Self::new(a, b, true, true)
    }

    pub fn at_least(a: S) -> Self {
        Self {
            lo: a,
            hi: S::infinity(),
            lo_closed: true,
            hi_closed: false,
        }
    }

    pub fn everything() -> Self {
        Self {
            lo: S::neg_infinity(),
            hi: S::infinity(),
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn point(x: S) -> Self {
        Self {
            lo: x,
            hi: x,
            lo_closed: true,
            hi_closed: true,
        }
    }

    fn is_empty(&self) -> bool {
        self.lo == self.hi && !(self.lo_closed && self.hi_closed)
    }

    pub fn contains(&self, x: S) -> bool {
        let above = if self.lo_closed {
            x >= self.lo
        } else {
            x > self.lo
        };
        let below = if self.hi_closed {
            x <= self.hi
        } else {
            x < self.hi
        };
        above && below
    }

    /// True when some point just right of `x` belongs to the interval.
    fn continues_right_of(&self, x: S) -> bool {
        self.lo <= x && x < self.hi
    }
}

impl<S: Scalar> fmt::Display for Interval<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{},{}{r}", fmt_bound(self.lo), fmt_bound(self.hi))
    }
}

fn fmt_bound<S: Scalar>(x: S) -> String {
    if x == S::infinity() {
        "inf".into()
    } else if x == S::neg_infinity() {
        "-inf".into()
    } else {
        x.to_string()
    }
}

/// A finite union of disjoint intervals, sorted by left end.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct IntervalSet<S> {
    parts: Vec<Interval<S>>,
}

impl<S: Scalar> IntervalSet<S> {
    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    /// Validates that `parts` are sorted and pairwise disjoint. Touching
    /// intervals such as `[1, 2)` and `[2, 3]` are allowed and merged.
    pub fn new(parts: Vec<Interval<S>>) -> Result<Self> {
        let mut out = Self::empty();
        for p in parts {
            if p.is_empty() || p.lo > p.hi {
                return Err(Error::Domain(format!("interval {p} is empty or reversed")));
            }
            if let Some(last) = out.parts.last() {
                let overlap = p.lo < last.hi || (p.lo == last.hi && p.lo_closed && last.hi_closed);
                if overlap {
                    return Err(Error::Domain(format!(
                        "intervals {last} and {p} overlap or are unsorted"
                    )));
                }
            }
            out.push_merge(p);
        }
        Ok(out)
    }

    fn push_merge(&mut self, iv: Interval<S>) {
        if let Some(last) = self.parts.last_mut() {
            if last.hi == iv.lo && (last.hi_closed || iv.lo_closed) {
                last.hi = iv.hi;
                last.hi_closed = iv.hi_closed;
                return;
            }
        }
        self.parts.push(iv);
    }

    pub fn intervals(&self) -> &[Interval<S>] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, x: S) -> bool {
        self.parts.iter().any(|p| p.contains(x))
    }

    pub fn is_everything(&self) -> bool {
        self.parts.len() == 1 && self.parts[0] == Interval::everything()
    }

    /// Indicator `I_A` as a terminal claim.
    pub fn indicator_claim(&self) -> TerminalClaim<S> {
        let mut xs: Vec<S> = self
            .parts
            .iter()
            .flat_map(|p| [p.lo, p.hi])
            .filter(|x| x.is_finite())
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite bounds"));
        xs.dedup();
        let ind = |b: bool| if b { S::one() } else { S::zero() };
        let breaks = xs
            .into_iter()
            .map(|x| Breakpoint {
                x,
                point: ind(self.contains(x)),
                right: ind(self.parts.iter().any(|p| p.continues_right_of(x))),
                slope: S::zero(),
            })
            .collect();
        let left = ind(self
            .parts
            .first()
            .is_some_and(|p| p.lo == S::neg_infinity()));
        TerminalClaim::new(left, breaks)
            .expect("indicator of an interval set is a valid claim")
            .with_label(format!("I{self}"))
    }

    /// Parses `[a,b]`, `(a,b)`, `[a,inf)` ... joined by `;`. An empty
    /// string or `{}` is the empty set.
    pub fn parse(literal: &str) -> Result<Self> {
        let literal = literal.trim();
        if literal.is_empty() || literal == "{}" {
            return Ok(Self::empty());
        }
        let parts = literal
            .split(';')
            .map(|raw| {
                let p = raw.trim();
                let err = || {
                    Error::Parse(format!(
                        "bad interval `{p}` (expected e.g. [1,2] or [1,inf))"
                    ))
                };
                let lo_closed = match p.chars().next() {
                    Some('[') => true,
                    Some('(') => false,
                    _ => return Err(err()),
                };
                let hi_closed = match p.chars().last() {
                    Some(']') => true,
                    Some(')') => false,
                    _ => return Err(err()),
                };
                let (a, b) = p[1..p.len() - 1].split_once(',').ok_or_else(err)?;
                let num = |s: &str| -> Result<S> {
                    match s.trim() {
                        "inf" | "+inf" => Ok(S::infinity()),
                        "-inf" => Ok(S::neg_infinity()),
                        t => t.parse::<f64>().map(S::lit).map_err(|_| err()),
                    }
                };
                Interval::new(num(a)?, num(b)?, lo_closed, hi_closed)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }
}

impl<S: Scalar> fmt::Display for IntervalSet<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return f.write_str("{}");
        }
        let parts: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Result of [`comonotonic_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct Comonotonicity<S> {
    pub comonotonic: bool,
    /// `(x, x')` with `(f(x) - f(x')) (h(x) - h(x')) < 0`.
    pub witness: Option<(S, S)>,
    pub probes: usize,
}

/// All-pairs comonotonicity test on the merged breakpoints (and points just
/// either side of them), segment midpoints and a uniform probe grid.
pub fn comonotonic_check<S: Scalar>(
    f: &TerminalClaim<S>,
    h: &TerminalClaim<S>,
    probe_points: usize,
) -> Result<Comonotonicity<S>> {
    if probe_points < 2 {
        return Err(Error::Precondition(
            "comonotonic check needs at least 2 probe points".into(),
        ));
    }
    let mut bps: Vec<S> = f.breaks.iter().chain(&h.breaks).map(|b| b.x).collect();
    bps.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    bps.dedup();
    let (lo, hi) = match (bps.first(), bps.last()) {
        (Some(&a), Some(&b)) => (a - S::one(), b + S::one()),
        _ => (-S::one(), S::one()),
    };
    let eps = S::lit(1e-9);
    let mut xs = linspace(lo, hi, probe_points);
    for w in bps.windows(2) {
        xs.push(S::lit(0.5) * (w[0] + w[1]));
    }
    for &b in &bps {
        let d = eps * b.abs().max(S::one());
        xs.extend([b - d, b, b + d]);
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite probes"));
    xs.dedup();

    let vals: Vec<(S, S)> = xs.iter().map(|&x| (f.eval(x), h.eval(x))).collect();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if (vals[i].0 - vals[j].0) * (vals[i].1 - vals[j].1) < S::zero() {
                return Ok(Comonotonicity {
                    comonotonic: false,
                    witness: Some((xs[i], xs[j])),
                    probes: xs.len(),
                });
            }
        }
    }
    Ok(Comonotonicity {
        comonotonic: true,
        witness: None,
        probes: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tent() -> TerminalClaim<f64> {
        TerminalClaim::new(
            0.0,
            vec![
                Breakpoint {
                    x: -1.0,
                    point: 0.0,
                    right: 0.0,
                    slope: 1.0,
                },
                Breakpoint {
                    x: 0.0,
                    point: 1.0,
                    right: 1.0,
                    slope: -1.0,
                },
                Breakpoint {
                    x: 1.0,
                    point: 0.0,
                    right: 0.0,
                    slope: 0.0,
                },
            ],
        )
        .unwrap()
    }

    fn builtins() -> Vec<TerminalClaim<f64>> {
        vec![
            TerminalClaim::threshold(1.0).unwrap(),
            TerminalClaim::indicator(1.0, 2.0).unwrap(),
            TerminalClaim::identity(10.0).unwrap(),
            TerminalClaim::logistic(2.0, 201).unwrap(),
            tent(),
            TerminalClaim::logistic(1.0, 101).unwrap().negated(),
        ]
    }

    #[test]
    fn eval_examples() {
        assert_eq!(TerminalClaim::threshold(1.0).unwrap().eval(0.999), 0.0);
        assert_eq!(TerminalClaim::threshold(1.0).unwrap().eval(1.0), 1.0);
        let ind = TerminalClaim::indicator(1.0, 2.0).unwrap();
        assert_eq!(ind.eval(1.5), 1.0);
        assert_eq!(ind.eval(1.0), 1.0);
        assert_eq!(ind.eval(2.0), 1.0);
        assert_eq!(ind.eval(2.0000001), 0.0);
        let id = TerminalClaim::identity(10.0).unwrap();
        assert_eq!(id.eval(-3.2), -3.2);
        assert_eq!(id.eval(42.0), 10.0);
        assert_eq!(id.eval(-42.0), -10.0);
    }

    #[test]
    fn integral_is_exact_on_pieces() {
        let ind = TerminalClaim::<f64>::indicator(1.0, 2.0).unwrap();
        assert_eq!(ind.integral(0.0, 5.0), 1.0);
        assert_eq!(ind.integral(1.5, 1.75), 0.25);
        assert!((tent().integral(-2.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((tent().integral(-0.5, 0.5) - 0.75).abs() < 1e-15);
        let c = TerminalClaim::<f64>::constant(2.0).unwrap();
        assert_eq!(c.integral(-1.0, 2.0), 6.0);
        let th = TerminalClaim::<f64>::threshold(0.0)
            .unwrap()
            .negated()
            .offset(3.0);
        assert_eq!(th.integral(-1.0, 1.0), 3.0 + 2.0);
    }

    #[test]
    fn jump_locations() {
        assert_eq!(
            TerminalClaim::<f64>::indicator(1.0, 2.0).unwrap().jumps(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            TerminalClaim::<f64>::threshold(-0.5).unwrap().jumps(),
            vec![-0.5]
        );
        assert!(TerminalClaim::<f64>::logistic(2.0, LOGISTIC_KNOTS)
            .unwrap()
            .jumps()
            .is_empty());
        assert!(tent().jumps().is_empty());
    }

    #[test]
    fn bounds_and_monotonicity() {
        let ind = TerminalClaim::<f64>::indicator(1.0, 2.0).unwrap();
        assert_eq!(ind.bounds(), (0.0, 1.0));
        assert_eq!(ind.monotonicity(), Monotonicity::None);
        assert_eq!(
            TerminalClaim::<f64>::threshold(1.0).unwrap().monotonicity(),
            Monotonicity::Increasing
        );
        let lg = TerminalClaim::<f64>::logistic(2.0, 101).unwrap();
        assert_eq!(lg.monotonicity(), Monotonicity::Increasing);
        assert_eq!(lg.negated().monotonicity(), Monotonicity::Decreasing);
        assert!(lg.bounds().0 > 0.0 && lg.bounds().1 < 1.0);
        assert_eq!(
            TerminalClaim::<f64>::identity(3.0).unwrap().bounds(),
            (-3.0, 3.0)
        );
    }

    #[test]
    fn rejects_unbounded_last_piece() {
        let b = Breakpoint {
            x: 0.0,
            point: 0.0,
            right: 0.0,
            slope: 1.0,
        };
        assert!(TerminalClaim::new(0.0, vec![b]).is_err());
        assert!(TerminalClaim::<f64>::indicator(2.0, 1.0).is_err());
    }

    #[test]
    fn superlevel_examples() {
        let ind = TerminalClaim::<f64>::indicator(1.0, 2.0).unwrap();
        assert_eq!(ind.superlevel_set(0.5).to_string(), "[1,2]");
        assert_eq!(
            TerminalClaim::<f64>::threshold(1.0)
                .unwrap()
                .superlevel_set(1.0)
                .to_string(),
            "[1,inf)"
        );
        // tent: 1 - |x| on [-1, 1]; 1 - |x| >= 0.5 <=> |x| <= 0.5
        assert_eq!(tent().superlevel_set(0.5).to_string(), "[-0.5,0.5]");
        assert!(ind.superlevel_set(1.5).is_empty());
        assert!(ind.superlevel_set(0.0).is_everything());
        assert!(ind.superlevel_set(-3.0).is_everything());
        let id = TerminalClaim::<f64>::identity(10.0).unwrap();
        assert_eq!(id.superlevel_set(2.5).to_string(), "[2.5,inf)");
        assert_eq!(id.negated().superlevel_set(2.5).to_string(), "(-inf,-2.5]");
    }

    #[test]
    fn superlevel_of_sum_has_nested_sets() {
        let s = TerminalClaim::<f64>::threshold(1.0)
            .unwrap()
            .sum(&TerminalClaim::indicator(1.0, 2.0).unwrap());
        assert_eq!(s.eval(1.5), 2.0);
        assert_eq!(s.eval(2.0), 2.0);
        assert_eq!(s.eval(2.5), 1.0);
        assert_eq!(s.superlevel_set(0.5).to_string(), "[1,inf)");
        assert_eq!(s.superlevel_set(1.5).to_string(), "[1,2]");
    }

    #[test]
    fn indicator_claim_round_trip() {
        let set = IntervalSet::<f64>::parse("(-inf,-1);[1,2)").unwrap();
        let c = set.indicator_claim();
        for x in [-3.0, -1.0, 0.0, 1.0, 1.5, 2.0, 3.0] {
            assert_eq!(c.eval(x) == 1.0, set.contains(x), "x = {x}");
        }
        assert!(IntervalSet::<f64>::parse("[1,3];[2,4]").is_err());
        assert!(IntervalSet::<f64>::parse("[1,2];[2,4]").is_err());
        assert_eq!(
            IntervalSet::<f64>::parse("[1,2);[2,4]")
                .unwrap()
                .to_string(),
            "[1,4]"
        );
        assert!(IntervalSet::<f64>::parse("").unwrap().is_empty());
        assert!(IntervalSet::<f64>::parse("[1,2").is_err());
    }

    #[test]
    fn comonotonic_examples() {
        let t = TerminalClaim::<f64>::threshold(1.0).unwrap();
        let ind = TerminalClaim::indicator(1.0, 2.0).unwrap();
        assert!(comonotonic_check(&t, &ind, 50).unwrap().comonotonic);
        let id = TerminalClaim::identity(10.0).unwrap();
        let r = comonotonic_check(&id, &id.negated(), 50).unwrap();
        assert!(!r.comonotonic);
        let (x, y) = r.witness.unwrap();
        assert!((id.eval(x) - id.eval(y)) * (-id.eval(x) + id.eval(y)) < 0.0);
        assert!(
            comonotonic_check(
                &id,
                &TerminalClaim::logistic(1.0, LOGISTIC_KNOTS).unwrap(),
                50
            )
            .unwrap()
            .comonotonic
        );
        assert!(comonotonic_check(&id, &id, 1).is_err());
    }

    #[test]
    fn all_pairs_catches_non_adjacent_conflict() {
        // steps (df, dh) = (1, 0) then (0, -1): adjacent pairs pass, (first, last) fails
        let f = TerminalClaim::<f64>::threshold(0.0).unwrap();
        let h = TerminalClaim::<f64>::threshold(1.0).unwrap().negated();
        let r = comonotonic_check(&f, &h, 2).unwrap();
        assert!(!r.comonotonic);
    }

    #[test]
    fn parse_literals() {
        for lit in [
            "threshold:1",
            "indicator:1,2",
            "identity:10",
            "logistic:2",
            "const:0.5",
            "neg:logistic:1",
        ] {
            TerminalClaim::<f64>::parse(lit).unwrap();
        }
        assert_eq!(
            TerminalClaim::<f64>::parse("logistic:2")
                .unwrap()
                .breakpoints()
                .len(),
            LOGISTIC_KNOTS
        );
        assert_eq!(
            TerminalClaim::<f64>::parse("logistic:2,11")
                .unwrap()
                .breakpoints()
                .len(),
            11
        );
        for bad in [
            "threshold",
            "threshold:x",
            "indicator:1",
            "identity:-1",
            "unknown:1",
            "logistic:0",
        ] {
            assert!(TerminalClaim::<f64>::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_claims() {
        let c = TerminalClaim::<f64>::from_json_str(
            r#"{"breakpoints":[-1,0,1],"left_values":[0,1,0],"right_slopes":[1,-1,0]}"#,
        )
        .unwrap();
        assert_eq!(c.superlevel_set(0.5), tent().superlevel_set(0.5));
        let step = TerminalClaim::<f64>::from_json_str(
            r#"{"breakpoints":[0],"left_values":[1],"right_slopes":[0],"left_tail":0,"point_values":[0]}"#,
        )
        .unwrap();
        assert_eq!(step.eval(0.0), 0.0);
        assert_eq!(step.eval(1e-9), 1.0);
        assert_eq!(step.superlevel_set(0.5).to_string(), "(0,inf)");
        assert!(
            TerminalClaim::<f64>::from_json_str(r#"{"breakpoints":[0],"left_values":[]}"#).is_err()
        );
    }

    proptest! {
        #[test]
        fn layer_cake_reconstructs_values(idx in 0usize..6, x in -15.0f64..15.0) {
            let f = &builtins()[idx];
            let (lo, hi) = f.bounds();
            let n = 4000;
            let h = (hi - lo) / n as f64;
            let layers: f64 = (0..n)
                .map(|k| lo + (k as f64 + 0.5) * h)
                .filter(|&s| f.superlevel_set(s).contains(x))
                .count() as f64 * h;
            let tol = h * (hi - lo).abs().max(1.0);
            prop_assert!((lo + layers - f.eval(x)).abs() <= tol, "{} vs {}", lo + layers, f.eval(x));
        }

        #[test]
        fn superlevel_sets_are_antitone(idx in 0usize..6, a in -12.0f64..12.0, b in -12.0f64..12.0, x in -15.0f64..15.0) {
            let f = &builtins()[idx];
            let (s1, s2) = if a <= b { (a, b) } else { (b, a) };
            if f.superlevel_set(s2).contains(x) {
                prop_assert!(f.superlevel_set(s1).contains(x));
            }
        }

        #[test]
        fn superlevel_membership_matches_eval(idx in 0usize..6, s in -12.0f64..12.0, x in -15.0f64..15.0) {
            let f = &builtins()[idx];
            prop_assert_eq!(f.superlevel_set(s).contains(x), f.eval(x) >= s);
        }

        #[test]
        fn comonotonic_check_is_symmetric(i in 0usize..6, j in 0usize..6) {
            let all = builtins();
            let a = comonotonic_check(&all[i], &all[j], 64).unwrap().comonotonic;
            let b = comonotonic_check(&all[j], &all[i], 64).unwrap().comonotonic;
            prop_assert_eq!(a, b);
            if all[i].monotonicity() != Monotonicity::None && all[i].monotonicity() == all[j].monotonicity() {
                prop_assert!(a);
            }
        }

        #[test]
        fn sum_is_pointwise(i in 0usize..6, j in 0usize..6, x in -15.0f64..15.0) {
            let all = builtins();
            let s = all[i].sum(&all[j]);
            prop_assert!((s.eval(x) - all[i].eval(x) - all[j].eval(x)).abs() <= 1e-12);
        }
    }
}
