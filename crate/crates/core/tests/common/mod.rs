//! Shared oracles and randomized generators for the integration suites.
//!
//! Everything here is independent of the library's evaluation paths: the
//! Gaussian oracle is plain Simpson quadrature against the normal
//! density, and the generators only use constructors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sublim::clt::StepFamily;
use sublim::measures::{AmbiguitySet, DiscreteMeasure, RandomVariable};

/// `E[phi(x + sqrt(variance) Z)]` by Simpson quadrature over ten standard
/// deviations of the standard normal.
pub fn gauss_convolve(phi: &dyn Fn(f64) -> f64, x: f64, variance: f64, points: usize) -> f64 {
    let sd = variance.sqrt();
    let lo = -10.0;
    let hi = 10.0;
    let n = points + points % 2;
    let h = (hi - lo) / n as f64;
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for i in 0..=n {
        let z = lo + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * phi(x + sd * z) * density(z);
    }
    acc * h / 3.0
}

/// A random two-point measure recentered to mean zero.
pub fn random_zero_mean_measure(rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    loop {
        let a = rng.gen_range(0.2..2.5);
        let b = -rng.gen_range(0.2..2.5);
        let w = rng.gen_range(0.1..0.9);
        let mean = w * a + (1.0 - w) * b;
        let atoms: [f64; 2] = [a - mean, b - mean];
        if (atoms[0] - atoms[1]).abs() < 1e-6 {
            continue;
        }
        if let Ok(m) = DiscreteMeasure::scalar(&atoms, &[w, 1.0 - w]) {
            return m;
        }
    }
}

/// A symmetric three-point measure `{-c, 0, c}`, exactly zero mean.
pub fn symmetric_triple(rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let c = rng.gen_range(0.4..2.5);
    let w = rng.gen_range(0.1..0.45);
    DiscreteMeasure::scalar(&[-c, 0.0, c], &[w, 1.0 - 2.0 * w, w]).unwrap()
}

/// A zero-mean step family with a controlled shift count (at most five
/// per-step displacements, so exact enumeration stays small).
pub fn random_step_family(rng: &mut ChaCha8Rng, allow_triple: bool) -> StepFamily {
    let mut measures = vec![random_zero_mean_measure(rng)];
    if rng.gen_bool(0.7) {
        measures.push(random_zero_mean_measure(rng));
    } else if allow_triple {
        measures.push(symmetric_triple(rng));
    }
    StepFamily::new(AmbiguitySet::new(measures).unwrap()).unwrap()
}

/// A random ambiguity set in the given dimension (atoms need not be
/// centered).
pub fn random_ambiguity_set(rng: &mut ChaCha8Rng, dim: usize) -> AmbiguitySet {
    let n_measures = rng.gen_range(1..4usize);
    let mut measures = Vec::with_capacity(n_measures);
    for _ in 0..n_measures {
        loop {
            let n_atoms = rng.gen_range(1..5usize);
            let atoms: Vec<Vec<f64>> = (0..n_atoms)
                .map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect();
            let mut weights: Vec<f64> = (0..n_atoms).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            if let Ok(m) = DiscreteMeasure::new(atoms, weights) {
                measures.push(m);
                break;
            }
        }
    }
    AmbiguitySet::new(measures).unwrap()
}

/// A random bounded smooth function of the first coordinate combined with
/// the Euclidean norm, so it exercises every dimension.
pub fn random_rv(rng: &mut ChaCha8Rng) -> RandomVariable {
    let a = rng.gen_range(-2.0..2.0);
    let b = rng.gen_range(0.2..2.0);
    let c = rng.gen_range(-3.0..3.0);
    let d = rng.gen_range(-2.0..2.0);
    RandomVariable::new("random", move |p: &[f64]| {
        let norm_sq: f64 = p.iter().map(|v| v * v).sum();
        a * (b * p[0] + c).cos() + d * (norm_sq.sqrt()).tanh()
    })
}

/// A random nonnegative function, used to build pointwise-dominated
/// pairs.
pub fn random_nonneg_rv(rng: &mut ChaCha8Rng) -> RandomVariable {
    let a = rng.gen_range(0.0..2.0);
    let b = rng.gen_range(0.2..2.0);
    RandomVariable::new("nonneg", move |p: &[f64]| a * (b * p[0]).cos().abs())
}
