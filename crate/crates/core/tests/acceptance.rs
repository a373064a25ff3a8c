//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (run with `--nocapture` to see them). Tolerances are pinned in
//! the assertions.

mod common;

use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sublim::clt::{
    self, diagonal_extract, dictionary_default, domination_check, StepFamily, TestFunction,
};
use sublim::expr::parse_expr;
use sublim::grid::GridSpec;
use sublim::measures::{AmbiguitySet, DiscreteMeasure, Event, RandomVariable};
use sublim::pde::{self, GParams1D, PdeConfig};

fn report(number: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {number:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number:02} {name} failed: {detail}");
}

fn rademacher_family() -> StepFamily {
    StepFamily::new(
        AmbiguitySet::new(vec![
            DiscreteMeasure::rademacher(1.0).unwrap(),
            DiscreteMeasure::rademacher(2.0).unwrap(),
        ])
        .unwrap(),
    )
    .unwrap()
}

#[test]
fn c01_exact_moment_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let family = random_step_family(&mut rng, true);
        for n in 1..=8 {
            let upper = clt::value_exact(&family, |x| x * x, n).unwrap();
            let lower = clt::value_exact(&family, |x| -x * x, n).unwrap();
            worst = worst.max((upper - family.sigma_max_sq()).abs());
            worst = worst.max((lower + family.sigma_min_sq()).abs());
            assert!(
                (upper - family.sigma_max_sq()).abs() <= 1e-10,
                "case {case}, n = {n}: {upper} vs {}",
                family.sigma_max_sq()
            );
            assert!(
                (lower + family.sigma_min_sq()).abs() <= 1e-10,
                "case {case}, n = {n}: {lower} vs -{}",
                family.sigma_min_sq()
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "exact-moment-identities",
        worst <= 1e-10 && elapsed < 10.0,
        &format!("20 families, n = 1..8, worst gap {worst:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn c02_dp_exact_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let grid = GridSpec::with_dx(0.005);
    let functions: Vec<TestFunction> = vec![
        TestFunction::new("cos(x)", 1.0, 1.0, f64::cos),
        TestFunction::new("tanh(x)", 1.0, 1.0, f64::tanh),
        TestFunction::new("sin(0.7x)", 1.0, 0.7, |x: f64| (0.7 * x).sin()),
        TestFunction::new("min(|x|,2)", 2.0, 1.0, |x: f64| x.abs().min(2.0)),
        TestFunction::new("cos(2x)+0.3", 1.3, 2.0, |x: f64| (2.0 * x).cos() + 0.3),
    ];
    let mut worst_ratio = 0.0f64;
    for _ in 0..10 {
        let family = random_step_family(&mut rng, false);
        for phi in &functions {
            for n in 1..=8 {
                let dp = clt::value_dp(&family, phi, n, &grid).unwrap();
                let exact = clt::value_exact(&family, |x| phi.eval(x), n).unwrap();
                let allowance = 10.0 * grid.dx * phi.lipschitz();
                let gap = (dp - exact).abs();
                worst_ratio = worst_ratio.max(gap / allowance);
                assert!(
                    gap <= allowance,
                    "{}: n = {n}, gap {gap:.3e} > {allowance:.3e}",
                    phi.label()
                );
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        "dp-exact-agreement",
        worst_ratio <= 1.0 && elapsed < 60.0,
        &format!("400 runs, worst gap/bound {worst_ratio:.3}, {elapsed:.2}s"),
    );
}

#[test]
fn c03_clt_pde_convergence() {
    let start = Instant::now();
    let family = rademacher_family();
    let phi = TestFunction::cosine();
    let grid = GridSpec {
        half_width: Some(14.0),
        dx: 0.01,
    };
    let g = pde::g_from_family(&family);
    let cfg = PdeConfig::new(14.0, 0.01, 1.0).unwrap();
    let reference = pde::gnormal_value(&g, &phi, &cfg).unwrap();

    let mut errors = Vec::new();
    for n in [4u32, 16, 64, 256] {
        let dp = clt::value_dp(&family, &phi, n, &grid).unwrap();
        errors.push((dp - reference).abs());
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] + 0.01);
    let final_ok = errors[3] <= 0.05;
    let elapsed = start.elapsed().as_secs_f64();
    report(
        3,
        "clt-pde-convergence",
        monotone && final_ok && elapsed < 120.0,
        &format!(
            "abs_err = [{:.4}, {:.4}, {:.4}, {:.4}], {elapsed:.2}s",
            errors[0], errors[1], errors[2], errors[3]
        ),
    );
}

#[test]
fn c04_classical_limit_regression() {
    let g = GParams1D::new(1.0, 1.0).unwrap();
    let cfg = PdeConfig::new(8.0, 0.01, 1.0).unwrap();
    let probes = [-3.0, -1.5, 0.0, 0.7, 2.2, 4.0];
    let mut worst = 0.0f64;
    for (label, f) in [
        ("cos", f64::cos as fn(f64) -> f64),
        ("tanh", f64::tanh as fn(f64) -> f64),
    ] {
        let phi = TestFunction::new(label, 1.0, 1.0, f);
        let sol = pde::solve_gheat(&g, &phi, &cfg).unwrap();
        let grid = &sol.last().grid;
        for &x in &probes {
            let oracle = gauss_convolve(&f, x, 1.0, 100_000);
            worst = worst.max((grid.eval(x) - oracle).abs());
        }
    }
    report(
        4,
        "classical-limit-regression",
        worst <= 5e-3,
        &format!("worst deviation {worst:.2e} over {} probes x 2 functions", probes.len()),
    );
}

#[test]
fn c05_convex_selection() {
    let g = GParams1D::new(1.0, 4.0).unwrap();
    let clamp_abs = |x: f64| x.abs().min(5.0);
    let phi = TestFunction::new("clamp(|x|,0,5)", 5.0, 1.0, clamp_abs);
    let cfg = PdeConfig::new(14.0, 0.01, 1.0).unwrap();
    let value = pde::gnormal_value(&g, &phi, &cfg).unwrap();
    let closed_form = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let oracle = gauss_convolve(&clamp_abs, 0.0, 4.0, 100_000);
    let pass = (value - closed_form).abs() <= 2e-2 && (value - oracle).abs() <= 2e-2;
    report(
        5,
        "convex-selection",
        pass,
        &format!("u(1,0) = {value:.6}, closed form {closed_form:.6}, convolution {oracle:.6}"),
    );
}

#[test]
fn c06_semigroup_residual() {
    let g = GParams1D::new(1.0, 4.0).unwrap();
    let phi = TestFunction::cosine();
    let cfg = PdeConfig::new(8.0, 0.01, 1.0).unwrap();
    let mut worst = 0.0f64;
    for (t, s) in [(0.5, 0.5), (0.36, 0.64)] {
        let r = pde::semigroup_check(&g, &phi, t, s, &cfg).unwrap();
        worst = worst.max(r);
    }
    // the scaling alias must agree bit for bit
    let half = 0.5f64.sqrt();
    let via_stability = pde::stability_check(&g, &phi, half, half, &cfg).unwrap();
    let via_semigroup = pde::semigroup_check(&g, &phi, half * half, half * half, &cfg).unwrap();
    let alias_ok = via_stability.to_bits() == via_semigroup.to_bits();
    report(
        6,
        "semigroup-residual",
        worst <= 5e-3 && alias_ok,
        &format!("max residual {worst:.2e}, stability alias bit-exact: {alias_ok}"),
    );
}

#[test]
fn c07_time_holder_bound() {
    let g = GParams1D::new(1.0, 4.0).unwrap();
    let phi = TestFunction::cosine();
    let cfg = PdeConfig::new(8.0, 0.01, 1.0).unwrap();
    let mut violations = 0;
    let mut detail = String::new();
    for s in [0.01, 0.04, 0.25] {
        let hc = pde::time_holder_check(&g, &phi, 0.5, s, &cfg).unwrap();
        if !hc.pass {
            violations += 1;
        }
        detail.push_str(&format!(
            "s={s}: lhs {:.4} <= bound {:.4}+{:.4}; ",
            hc.lhs, hc.bound, hc.slack
        ));
    }
    report(7, "time-holder-bound", violations == 0, detail.trim_end());
}

#[test]
fn c08_capacity_sublinearity_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    const CASES: usize = 1000;
    const TOL: f64 = 1e-10;
    let mut failures = [0usize; 6];

    // monotonicity, subadditivity, positive homogeneity
    for _ in 0..CASES {
        let dim = rng.gen_range(1..4usize);
        let family = random_ambiguity_set(&mut rng, dim);
        let x = random_rv(&mut rng);
        let gap = random_nonneg_rv(&mut rng);
        let y = RandomVariable::new("x-gap", {
            let x = x.clone();
            let gap = gap.clone();
            move |p: &[f64]| x.eval(p) - gap.eval(p)
        });
        let ex = family.upper_expectation(&x).unwrap().value;
        let ey = family.upper_expectation(&y).unwrap().value;
        if ex < ey - TOL {
            failures[0] += 1;
        }
        let z = random_rv(&mut rng);
        let ez = family.upper_expectation(&z).unwrap().value;
        let e_sum = family.upper_expectation(&x.add(&z)).unwrap().value;
        if e_sum > ex + ez + TOL {
            failures[1] += 1;
        }
        let lambda = rng.gen_range(0.0..4.0);
        let e_scaled = family.upper_expectation(&x.scale(lambda)).unwrap().value;
        if (e_scaled - lambda * ex).abs() > TOL * lambda.max(1.0) {
            failures[2] += 1;
        }
    }

    // capacity subadditivity, continuity from below, tail bounds
    for _ in 0..CASES {
        let dim = rng.gen_range(1..4usize);
        let family = random_ambiguity_set(&mut rng, dim);
        let scale = family.max_atom_norm() * 1.2 + 0.5;
        let count = rng.gen_range(2..6usize);
        let events: Vec<Event> = (0..count)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Event::norm_gt(rng.gen_range(0.0..scale))
                } else {
                    Event::norm_ge(rng.gen_range(0.0..scale))
                }
            })
            .collect();
        let caps: Vec<f64> = events.iter().map(|e| family.capacity(e)).collect();
        let union_cap = family.capacity(&Event::union_of(&events));
        if union_cap > caps.iter().sum::<f64>() + TOL {
            failures[3] += 1;
        }
        let mut envelope_caps = Vec::with_capacity(count);
        for n in 1..=count {
            envelope_caps.push(family.capacity(&Event::union_of(&events[..n])));
        }
        let nondecreasing = envelope_caps.windows(2).all(|w| w[1] >= w[0] - TOL);
        let exhausts = (envelope_caps.last().unwrap() - union_cap).abs() <= TOL;
        if !(nondecreasing && exhausts) {
            failures[4] += 1;
        }
        let tails = family.borel_cantelli_tail(&events).unwrap();
        let mut tails_ok = tails.windows(2).all(|w| w[1] <= w[0] + TOL);
        for n in 0..count {
            tails_ok &= tails[n] <= caps[n..].iter().sum::<f64>() + TOL;
        }
        if !tails_ok {
            failures[5] += 1;
        }
    }

    let total: usize = failures.iter().sum();
    report(
        8,
        "capacity-sublinearity-suites",
        total == 0,
        &format!("6 suites x {CASES} instances, failures {failures:?}"),
    );
}

#[test]
fn c09_tightness_certificates() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut failures = 0usize;
    for case in 0..100 {
        let dim = rng.gen_range(1..4usize);
        let family = random_ambiguity_set(&mut rng, dim);
        let l = [1.0, 2.0, 4.0][case % 3];
        for epsilon in [0.1, 0.01] {
            let cert = family.tightness_radius(epsilon, l).unwrap();
            if !cert.verified {
                failures += 1;
            }
        }
    }
    report(
        9,
        "tightness-certificates",
        failures == 0,
        &format!("100 families x 2 epsilons, {failures} unverified"),
    );
}

#[test]
fn c10_domination_and_diagonal() {
    // domination on the trigonometric dictionary
    let family = rademacher_family();
    let dict = dictionary_default(5.0, 8).unwrap();
    let mut pairs = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                pairs.push((dict[i].clone(), dict[j].clone()));
            }
        }
    }
    let grid = GridSpec::with_dx(0.02);
    let dom = domination_check(&family, &pairs, &[2, 8, 32], &grid).unwrap();

    // diagonal extraction on synthetic tables
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let eps = 0.1;
    let mut cauchy_ok = true;
    for _ in 0..50 {
        let cols = rng.gen_range(1..6usize);
        let rows = rng.gen_range(1..12usize);
        let base: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tables: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                base.iter()
                    .map(|b| b + rng.gen_range(-eps / 2.0..eps / 2.0))
                    .collect()
            })
            .collect();
        let kept = diagonal_extract(&tables, eps).unwrap();
        cauchy_ok &= kept.len() == rows;
    }
    let mut cluster_ok = true;
    for m in [2usize, 5, 8] {
        let a = vec![0.2, -0.4, 0.9];
        let b: Vec<f64> = a.iter().map(|v| v + 3.0 * eps).collect();
        let tables: Vec<Vec<f64>> = (0..m)
            .map(|i| if i % 2 == 0 { a.clone() } else { b.clone() })
            .collect();
        let kept = diagonal_extract(&tables, eps).unwrap();
        let expected: Vec<usize> = (0..m).step_by(2).collect();
        cluster_ok &= kept == expected;
    }
    report(
        10,
        "domination-and-diagonal",
        dom.pass() && cauchy_ok && cluster_ok,
        &format!(
            "domination: {} checks, {} violations; diagonal: cauchy {}, clusters {}",
            dom.checks,
            dom.violations.len(),
            cauchy_ok,
            cluster_ok
        ),
    );
}

#[test]
fn c11_parser_suite() {
    let precedence_ok = parse_expr("2+3*4").unwrap().eval(0.0) == 14.0
        && parse_expr("2^3^2").unwrap().eval(0.0) == 512.0
        && parse_expr("-x^2").unwrap().eval(3.0) == -9.0;

    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut parsed = 0usize;
    for _ in 0..100_000 {
        let len = rng.gen_range(0..32usize);
        let bytes: Vec<u8> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.7) {
                    // bias toward grammar bytes so the parser goes deep
                    *b"0123456789.xX+-*/^(), cosinexptanhabsminmaxclamp"
                        [..]
                        .get(rng.gen_range(0..48))
                        .unwrap()
                } else {
                    rng.gen()
                }
            })
            .collect();
        if let Ok(text) = std::str::from_utf8(&bytes) {
            if parse_expr(text).is_ok() {
                parsed += 1;
            }
        }
    }
    report(
        11,
        "parser-suite",
        precedence_ok,
        &format!("precedence exact, 100000 fuzz strings without a crash ({parsed} parsed)"),
    );
}
