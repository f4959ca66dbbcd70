//! Analytic reference values: Gaussian integrals of piecewise-linear claims,
//! Girsanov solutions for drivers linear in `z`, the explicit threshold and
//! window formulas for `mu|z|` drivers, and monotone-claim values under
//! kappa-ignorance.

use crate::claim::TerminalClaim;
use crate::driver::TimeFunction;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

// Rational approximations of erf/erfc from FreeBSD's s_erf.c (SunPro, 1993).
const ERX: f64 = 8.45062911510467529297e-01;
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 5] = [
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 6] = [
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 8] = [
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 7] = [
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

/// `c[0] + c[1] x + ...`
fn poly<S: Scalar>(c: &[f64], x: S) -> S {
    c.iter()
        .rev()
        .fold(S::zero(), |acc, &k| acc * x + S::lit(k))
}

/// `1 + c[0] x + c[1] x^2 + ...`
fn poly1<S: Scalar>(c: &[f64], x: S) -> S {
    S::one() + x * poly(c, x)
}

/// Complementary error function, absolute error below 1e-15 in `f64`.
pub fn erfc<S: Scalar>(x: S) -> S {
    if x.is_nan() {
        return x;
    }
    let one = S::one();
    let two = S::lit(2.0);
    let neg = x < S::zero();
    let a = x.abs();
    if a < S::lit(0.84375) {
        let z = a * a;
        let y = poly(&PP, z) / poly1(&QQ, z);
        let erf_a = a + a * y;
        return if neg { one + erf_a } else { one - erf_a };
    }
    if a < S::lit(1.25) {
        let s = a - one;
        let ratio = poly(&PA, s) / poly1(&QA, s);
        return if neg {
            one + S::lit(ERX) + ratio
        } else {
            one - S::lit(ERX) - ratio
        };
    }
    if a >= S::lit(28.0) {
        return if neg { two } else { S::zero() };
    }
    let s = one / (a * a);
    let ratio = if a < S::lit(1.0 / 0.35) {
        poly(&RA, s) / poly1(&SA, s)
    } else {
        if neg && a > S::lit(6.0) {
            return two;
        }
        poly(&RB, s) / poly1(&SB, s)
    };
    let r = (-a * a - S::lit(0.5625) + ratio).exp() / a;
    if neg {
        two - r
    } else {
        r
    }
}

/// Standard normal density.
pub fn normal_pdf<S: Scalar>(x: S) -> S {
    (-S::lit(0.5) * x * x).exp() / (S::TAU()).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf<S: Scalar>(x: S) -> S {
    S::lit(0.5) * erfc(-x / S::SQRT_2())
}

/// Standard normal survival function `1 - cdf(x)`, accurate in the upper tail.
pub fn normal_sf<S: Scalar>(x: S) -> S {
    S::lit(0.5) * erfc(x / S::SQRT_2())
}

/// `P(a <= Z <= b)` for standard normal `Z`, without cancellation in either tail.
pub fn normal_mass<S: Scalar>(a: S, b: S) -> S {
    if a >= S::zero() {
        normal_sf(a) - normal_sf(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// A normal law `N(mean, variance)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSpec<S> {
    pub mean: S,
    pub variance: S,
}

impl<S: Scalar> GaussianSpec<S> {
    pub fn new(mean: S, variance: S) -> Result<Self> {
        if !(variance > S::zero()) || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::Domain(format!(
                "invalid gaussian N({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> S {
        self.variance.sqrt()
    }

    pub fn pdf(&self, x: S) -> S {
        let sd = self.std_dev();
        normal_pdf((x - self.mean) / sd) / sd
    }

    pub fn sf(&self, x: S) -> S {
        normal_sf((x - self.mean) / self.std_dev())
    }

    /// `E[f(X)]`, integrating each linear piece against the density in closed form.
    pub fn expectation(&self, f: &TerminalClaim<S>) -> S {
        let sd = self.std_dev();
        let m = self.mean;
        let std = |x: S| (x - m) / sd;
        let bps = f.breakpoints();
        let Some(first) = bps.first() else {
            return f.left_tail();
        };
        let mut total = f.left_tail() * normal_cdf(std(first.x));
        for (k, b) in bps.iter().enumerate() {
            let a = std(b.x);
            let piece = match bps.get(k + 1) {
                None => b.right * normal_sf(a),
                Some(next) => {
                    let hi = std(next.x);
                    let level = b.right + b.slope * (m - b.x);
                    level * normal_mass(a, hi) + b.slope * sd * (normal_pdf(a) - normal_pdf(hi))
                }
            };
            total = total + piece;
        }
        total
    }
}

/// `E[f(N(int_0^T nu, T))]`: the g-expectation of `f(W_T)` under `g = nu(t) z`.
pub fn girsanov_linear_expectation<S: Scalar>(
    f: &TerminalClaim<S>,
    nu: &TimeFunction<S>,
    horizon: S,
) -> Result<S> {
    let drift = nu.integral(S::zero(), horizon)?;
    Ok(GaussianSpec::new(drift, horizon)?.expectation(f))
}

fn check_before_horizon<S: Scalar>(horizon: S, t: S) -> Result<()> {
    if !(horizon > S::zero()) {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(t >= S::zero() && t < horizon) {
        return Err(Error::Domain(format!(
            "time {t} must lie in [0, {horizon})"
        )));
    }
    Ok(())
}

/// `(y_t, z_t)` for `xi = I[W_T >= 1]` under `g = mu_t |z|`, as functions of
/// the drift-shifted state `w_bar = W_t - int_0^t mu`.
///
/// `y` is the `N(0, T - t)` survival at `1 - int_0^T mu - w_bar` and `z` the
/// density there. Equivalently the point is `1 - W_t - int_t^T mu`.
pub fn kappa_threshold_solution<S: Scalar>(
    mu: &TimeFunction<S>,
    horizon: S,
    t: S,
    w_bar: S,
) -> Result<(S, S)> {
    check_before_horizon(horizon, t)?;
    let law = GaussianSpec::new(S::zero(), horizon - t)?;
    let p = S::one() - mu.integral(S::zero(), horizon)? - w_bar;
    Ok((law.sf(p), law.pdf(p)))
}

/// `z_t` for `xi = I[1 <= W_T <= 2]` under the linearised `mu_t z` driver:
/// the difference of `N(0, T - t)` densities at `1 - int_0^T mu - w_bar` and
/// `2 - int_0^T mu - w_bar`. Negative once `w_bar > 3/2 - int_0^T mu`.
pub fn kappa_window_z<S: Scalar>(mu: &TimeFunction<S>, horizon: S, t: S, w_bar: S) -> Result<S> {
    check_before_horizon(horizon, t)?;
    let law = GaussianSpec::new(S::zero(), horizon - t)?;
    let m = mu.integral(S::zero(), horizon)?;
    Ok(law.pdf(S::one() - m - w_bar) - law.pdf(S::lit(2.0) - m - w_bar))
}

/// g-expectation of a monotone claim under `g = kappa_t |z|`, `kappa >= 0`:
/// the extremal drift `+int kappa` for increasing claims, `-int kappa` for
/// decreasing ones. Non-monotone claims are refused.
pub fn monotone_kappa_expectation<S: Scalar>(
    f: &TerminalClaim<S>,
    kappa: &TimeFunction<S>,
    horizon: S,
) -> Result<S> {
    if kappa.inf() < S::zero() {
        return Err(Error::Precondition("kappa must be non-negative".into()));
    }
    let k = kappa.integral(S::zero(), horizon)?;
    let drift = if f.is_nondecreasing() {
        k
    } else if f.is_nonincreasing() {
        -k
    } else {
        return Err(Error::Precondition(format!(
            "claim {f} is not monotone; use the lattice solver"
        )));
    };
    Ok(GaussianSpec::new(drift, horizon)?.expectation(f))
}
