//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! lines are printed whether or not anything fails.

use std::time::Instant;

use nlx_core::bsde::{representation_slope, richardson, solve_bsde, value_from_terminal};
use nlx_core::choquet::{additivity_gaps, choquet_expectation, Capacity};
use nlx_core::claim::{Interval, IntervalSet, TerminalClaim};
use nlx_core::closedform::{girsanov_linear_expectation, normal_sf};
use nlx_core::driver::{classify_linearity, DriverSpec, TimeFunction, LINEARITY_TOLERANCE};
use nlx_core::lattice::LatticeGrid;
use nlx_core::pde::feynman_kac_compare;
use nlx_core::scalar::linspace;
use nlx_core::Result;

type Outcome = Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Outcome);

fn claim(lit: &str) -> TerminalClaim<f64> {
    TerminalClaim::parse(lit).unwrap()
}

/// Richardson midpoint of the lattice value at (n, 2n).
fn paired(f: &TerminalClaim<f64>, d: &DriverSpec<f64>, n: usize) -> Result<(f64, f64, f64)> {
    let r = richardson(2 * n, |m| nlx_core::bsde::g_expectation(f, d, 1.0, m))?;
    Ok((r.coarse, r.extrapolated, r.estimate))
}

fn linear_oracle() -> Outcome {
    let mut worst_lattice = 0.0f64;
    let mut worst_raw = 0.0f64;
    let mut worst_choquet = 0.0f64;
    let mut ok = true;
    for nu in [0.0, 0.3, -0.3] {
        let d = DriverSpec::linear(nu);
        let caps = [
            Capacity::new(d.clone(), 1.0, 2000)?,
            Capacity::new(d.clone(), 1.0, 4000)?,
        ];
        for lit in ["threshold:1", "indicator:1,2", "logistic:2"] {
            let f = claim(lit);
            let oracle = girsanov_linear_expectation(&f, &TimeFunction::constant(nu), 1.0)?;
            let (raw, mid, _) = paired(&f, &d, 2000)?;
            let err = (mid - oracle).abs();
            ok &= err <= 2e-3;
            worst_lattice = worst_lattice.max(err);
            worst_raw = worst_raw.max((raw - oracle).abs());

            let c0 = choquet_expectation(&caps[0], &f, 200)?;
            let c1 = choquet_expectation(&caps[1], &f, 200)?;
            let quad = c0
                .quadrature_error_estimate
                .max(c1.quadrature_error_estimate);
            let c_err = (0.5 * (c0.value + c1.value) - oracle).abs();
            ok &= c_err <= 2e-3 + quad;
            worst_choquet = worst_choquet.max(c_err - quad);
        }
    }
    Ok((ok, format!("max paired lattice error {worst_lattice:.2e} (n=2000 alone {worst_raw:.2e}), max Choquet error beyond quadrature {worst_choquet:.2e}")))
}

fn kappa_threshold() -> Outcome {
    let oracle = normal_sf(0.5);
    let (raw, mid, est) = paired(&claim("threshold:1"), &DriverSpec::kappa(0.5, 0.0), 2000)?;
    let err = (mid - oracle).abs();
    let consistent = (raw - oracle).abs() <= est;
    Ok((
        err <= 2e-3 && consistent && (oracle - 0.308538).abs() < 5e-7,
        format!("n=2000 {raw:.6}, paired {mid:.6}, oracle {oracle:.6}, error {err:.2e}, estimate {est:.2e}"),
    ))
}

fn strict_gap() -> Outcome {
    let g = additivity_gaps(
        &DriverSpec::kappa(0.5, 0.0),
        &claim("threshold:1"),
        &claim("indicator:1,2"),
        1.0,
        2000,
        200,
    )?;
    Ok((
        g.g_gap < 0.0
            && g.g_gap.abs() > 5.0 * g.g_gap_error
            && g.choquet_gap.abs() <= g.choquet_gap_error,
        format!(
            "g_gap {:.3e} (error {:.1e}), choquet_gap {:.1e} (error {:.1e})",
            g.g_gap, g.g_gap_error, g.choquet_gap, g.choquet_gap_error
        ),
    ))
}

fn z_signs() -> Outcome {
    let grid = LatticeGrid::new(1.0, 1000)?;
    let d = DriverSpec::kappa(0.5, 0.0);
    let mut min_increasing = f64::INFINITY;
    for lit in ["threshold:1", "logistic:2", "identity:40"] {
        min_increasing =
            min_increasing.min(solve_bsde(&grid, &claim(lit), &d)?.z_sign_report().min_z);
    }
    let mixed = solve_bsde(&grid, &claim("indicator:1,2"), &d)?.z_sign_report();
    Ok((
        min_increasing >= -1e-12 && mixed.fraction_negative > 0.0 && mixed.fraction_positive > 0.0,
        format!(
            "increasing claims min_z {min_increasing:.1e}; indicator negative {:.3}, positive {:.3}",
            mixed.fraction_negative, mixed.fraction_positive
        ),
    ))
}

fn slopes() -> Outcome {
    let horizons = [0.1, 0.05, 0.025];
    let mut worst = 0.0f64;
    for b in [2.0, -1.0] {
        for (d, expect) in [
            (DriverSpec::kappa(0.5, 0.0), 0.5 * f64::abs(b)),
            (DriverSpec::linear(0.3), 0.3 * b),
        ] {
            for (_, slope) in representation_slope(&d, b, &horizons, 400)? {
                worst = worst.max((slope - expect).abs());
            }
        }
    }
    Ok((worst <= 5e-3, format!("max slope error {worst:.2e}")))
}

fn shrink() -> DriverSpec<f64> {
    DriverSpec::Custom(
        DriverSpec::custom("shrink", 1.0, |y: f64, z: f64, _| {
            0.5 * z.abs() - 0.5 * y * z.abs().min(1.0)
        })
        .unwrap(),
    )
}

fn solver_invariants() -> Outcome {
    let grid = LatticeGrid::new(1.0, 400)?;
    let drivers = [
        DriverSpec::linear(0.3),
        DriverSpec::kappa(0.5, 0.2),
        shrink(),
    ];
    let claims = ["threshold:1", "indicator:1,2", "logistic:2", "identity:40"].map(claim);
    let bump = claim("threshold:0");
    let (mut constant, mut comparison, mut tower) = (0.0f64, 0.0f64, 0.0f64);
    for d in &drivers {
        let c = solve_bsde(&grid, &claim("const:0.7"), d)?;
        for i in 0..=grid.n_steps() {
            constant = c
                .y_slice(i)
                .iter()
                .fold(constant, |m, y| m.max((y - 0.7).abs()));
        }
        for f in &claims {
            let lo = solve_bsde(&grid, f, d)?;
            let hi = solve_bsde(&grid, &f.sum(&bump), d)?;
            for i in 0..=grid.n_steps() {
                for (a, b) in lo.y_slice(i).iter().zip(hi.y_slice(i)) {
                    comparison = comparison.max(a - b);
                }
            }
            for i in [1, 57, 200, 399] {
                let again = value_from_terminal(&grid.truncated(i)?, lo.y_slice(i).to_vec(), d)?;
                tower = tower.max((again - lo.value()).abs());
            }
        }
    }
    Ok((
        constant <= 1e-12 && comparison <= 1e-12 && tower <= 1e-12,
        format!(
            "constants {constant:.1e}, comparison violation {comparison:.1e}, tower {tower:.1e}"
        ),
    ))
}

fn sub_super_additivity() -> Outcome {
    let lits = [
        "threshold:1",
        "indicator:1,2",
        "logistic:2",
        "identity:40",
        "const:0.3",
    ];
    let claims = lits.map(claim);
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for (mu, sign) in [(0.5, 1.0), (-0.5, -1.0)] {
        let d = DriverSpec::kappa(mu, 0.0);
        let e = |f: &TerminalClaim<f64>| nlx_core::bsde::g_expectation(f, &d, 1.0, 1000);
        for i in 0..claims.len() {
            for j in i..claims.len() {
                let excess =
                    sign * (e(&claims[i].sum(&claims[j]))? - e(&claims[i])? - e(&claims[j])?);
                worst = worst.max(excess);
                pairs += 1;
            }
        }
    }
    Ok((
        worst <= 1e-12,
        format!("{pairs} ordered checks, worst violation {worst:.1e}"),
    ))
}

fn capacity_axioms() -> Outcome {
    let cap: Capacity<f64> = Capacity::new(DriverSpec::kappa(0.5, 0.0), 1.0, 1000)?;
    let empty = cap.g_capacity(&IntervalSet::empty())?;
    let whole = cap.g_capacity_of(vec![Interval::everything()])?;
    let mut ok = empty.abs() <= 1e-12 && (whole - 1.0).abs() <= 1e-12;

    let mut previous = 0.0;
    let mut monotone = true;
    for a in linspace(3.0, -3.0, 25) {
        let v = cap.g_capacity_of(vec![Interval::at_least(a)])?;
        monotone &= v >= previous - 1e-12;
        previous = v;
    }
    let inner = cap.g_capacity_of(vec![Interval::closed(1.2, 1.8)?])?;
    let outer = cap.g_capacity_of(vec![Interval::closed(1.0, 2.0)?])?;
    monotone &= inner <= outer + 1e-12;
    ok &= monotone;

    let set: IntervalSet<f64> = IntervalSet::new(vec![Interval::closed(1.0, 2.0)?])?;
    let agreement = (choquet_expectation(&cap, &set.indicator_claim(), 50)?.value
        - cap.g_capacity(&set)?)
    .abs();
    ok &= agreement <= 1e-12;

    let f = claim("logistic:2");
    let cf = choquet_expectation(&cap, &f, 200)?;
    let c_scaled = choquet_expectation(&cap, &f.scaled(2.5), 200)?;
    let homogeneity = (c_scaled.value - 2.5 * cf.value).abs();
    ok &= homogeneity
        <= c_scaled.quadrature_error_estimate + 2.5 * cf.quadrature_error_estimate + 1e-12;

    let bigger = f.sum(&claim("threshold:1"));
    let cb = choquet_expectation(&cap, &bigger, 200)?;
    ok &= cf.value <= cb.value + cf.quadrature_error_estimate + cb.quadrature_error_estimate;

    let g = additivity_gaps(cap.driver(), &f, &claim("threshold:1"), 1.0, 1000, 200)?;
    ok &= g.choquet_gap.abs() <= g.choquet_gap_error;
    Ok((
        ok,
        format!(
            "V(empty) {empty:.1e}, V(R) {whole:.15}, monotone {monotone}, C(I_A)-V(A) {agreement:.1e}, homogeneity {homogeneity:.1e}, comonotonic gap {:.1e}",
            g.choquet_gap
        ),
    ))
}

fn feynman_kac() -> Outcome {
    let cases = [
        (DriverSpec::Zero, "threshold:1"),
        (DriverSpec::kappa(0.5, 0.0), "indicator:1,2"),
        (DriverSpec::linear(0.3), "logistic:2"),
    ];
    let mut worst = 0.0f64;
    for (d, lit) in &cases {
        for row in feynman_kac_compare(d, &claim(lit), 1.0, &[-1.0, 0.0, 1.0], 1201, 2000)? {
            worst = worst.max(row.abs_diff);
        }
    }
    Ok((worst <= 5e-3, format!("max |u_pde - lattice| {worst:.2e}")))
}

fn classify() -> Outcome {
    let times = linspace(0.0, 1.0, 11);
    let sampled = |f: fn(f64) -> f64| {
        TimeFunction::sampled(
            linspace(0.0, 1.0, 21)
                .into_iter()
                .map(|t| (t, f(t)))
                .collect(),
        )
    };
    let kappas = [
        (
            DriverSpec::kappa(0.5, 0.3),
            (|_| 0.5) as fn(f64) -> f64,
            (|_| 0.3) as fn(f64) -> f64,
        ),
        (DriverSpec::kappa(-0.5, 0.2), |_| -0.5, |_| 0.2),
        (
            DriverSpec::KappaIgnorance {
                mu: sampled(|t| 0.5 + 0.2 * t)?,
                nu: sampled(|t| -0.1 * t)?,
            },
            |t| 0.5 + 0.2 * t,
            |t| -0.1 * t,
        ),
    ];
    let mut worst = 0.0f64;
    let mut ok = true;
    for (d, mu, nu) in &kappas {
        let v = classify_linearity(d, &times, LINEARITY_TOLERANCE)?;
        ok &= !v.is_linear_in_z;
        for &t in &times {
            worst = worst
                .max((v.mu_hat.eval(t)? - mu(t)).abs())
                .max((v.nu_hat.eval(t)? - nu(t)).abs());
        }
    }
    let linear = [
        DriverSpec::Zero,
        DriverSpec::linear(0.3),
        DriverSpec::Linear {
            nu: sampled(|t| 0.2 - t)?,
        },
    ];
    for d in &linear {
        let v = classify_linearity(d, &times, LINEARITY_TOLERANCE)?;
        ok &= v.is_linear_in_z && v.is_pure_linear();
    }
    Ok((
        ok && worst <= 1e-9,
        format!("max coefficient error {worst:.1e}, linear drivers declared linear: {ok}"),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("linear drivers match the Girsanov oracle", linear_oracle),
        (
            "kappa threshold matches the normal survival",
            kappa_threshold,
        ),
        ("strict g-gap, Choquet additive", strict_gap),
        ("z sign structure", z_signs),
        ("representation slopes", slopes),
        ("constants, comparison, tower", solver_invariants),
        ("sub/super-additivity", sub_super_additivity),
        ("capacity axioms and Choquet properties", capacity_axioms),
        ("PDE and lattice agree", feynman_kac),
        ("linearity classification", classify),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
