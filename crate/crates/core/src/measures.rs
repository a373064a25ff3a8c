//! Discrete measures, ambiguity sets, upper expectations, Choquet
//! capacities and tightness certificates.
//!
//! An ambiguity set is a finite family of finitely supported probability
//! measures on ℝᵈ. Its upper expectation `Ê[X] = max_θ E_θ[X]` is a
//! sublinear expectation (monotone, constant preserving, subadditive,
//! positively homogeneous), and `c(A) = max_θ P_θ(A)` is a Choquet
//! capacity: monotone, subadditive and continuous from below. Everything
//! here is exactly computable because the supports are finite.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Weight sums may drift from 1 by at most this much before a measure is
/// rejected; smaller deficits are renormalized away at construction.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Tolerance for the sublinear-expectation axiom checks.
pub const AXIOM_TOL: f64 = 1e-10;

/// Quantization step for tightness radii.
pub const RADIUS_STEP: f64 = 0.5;

/// A finitely supported probability measure on ℝᵈ.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Build a measure from atoms and weights.
    ///
    /// Weights must be nonnegative and sum to 1 within [`WEIGHT_SUM_TOL`]
    /// (they are renormalized to an exact unit sum on success). Atoms must
    /// be pairwise distinct under exact coordinate equality, share one
    /// dimension d ≥ 1, and match the weight count.
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let invalid = |message: String| Error::Invalid {
            what: "DiscreteMeasure",
            message,
        };
        if atoms.is_empty() {
            return Err(invalid("needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(invalid(format!(
                "atom count {} does not match weight count {}",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(invalid("atoms must have dimension at least 1".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.len() != dim {
                return Err(invalid(format!(
                    "atom {i} has dimension {} but atom 0 has {dim}",
                    a.len()
                )));
            }
            if a.iter().any(|c| !c.is_finite()) {
                return Err(invalid(format!("atom {i} has a non-finite coordinate")));
            }
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i] == atoms[j] {
                    return Err(invalid(format!("atoms {i} and {j} coincide")));
                }
            }
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(invalid(format!("weight {i} is {w}, must be >= 0")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("weights sum to {sum}, not 1")));
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Ok(Self { atoms, weights })
    }

    /// Convenience constructor for measures on ℝ¹.
    pub fn scalar(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(atoms.iter().map(|&a| vec![a]).collect(), weights.to_vec())
    }

    /// Symmetric two-point measure at ±`a` with weight ½ each.
    pub fn rademacher(a: f64) -> Result<Self> {
        Self::scalar(&[-a, a], &[0.5, 0.5])
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E_P[X]`, failing on a non-finite evaluation and naming the atom.
    pub fn expectation(&self, x: &RandomVariable) -> Result<f64> {
        let mut acc = 0.0;
        for (atom, w) in self.atoms.iter().zip(&self.weights) {
            acc += w * x.eval_checked(atom)?;
        }
        Ok(acc)
    }

    /// `P(A)`: total weight of atoms satisfying the event.
    pub fn probability(&self, a: &Event) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(atom, _)| a.contains(atom))
            .map(|(_, w)| w)
            .sum()
    }

    /// Per-coordinate mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (atom, w) in self.atoms.iter().zip(&self.weights) {
            for (mi, c) in m.iter_mut().zip(atom) {
                *mi += w * c;
            }
        }
        m
    }

    /// Variance of coordinate `k`.
    pub fn variance(&self, k: usize) -> f64 {
        let mean = self.mean()[k];
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(atom, w)| w * (atom[k] - mean) * (atom[k] - mean))
            .sum()
    }
}

/// A nonempty finite family of discrete measures sharing one dimension.
#[derive(Debug, Clone)]
pub struct AmbiguitySet {
    measures: Vec<DiscreteMeasure>,
}

/// Result of an upper-expectation evaluation: the value and the least
/// measure index attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperExpectation {
    pub value: f64,
    pub argmax: usize,
}

impl AmbiguitySet {
    pub fn new(measures: Vec<DiscreteMeasure>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::Invalid {
                what: "AmbiguitySet",
                message: "needs at least one measure".into(),
            });
        }
        let dim = measures[0].dim();
        if let Some((i, m)) = measures.iter().enumerate().find(|(_, m)| m.dim() != dim) {
            return Err(Error::Invalid {
                what: "AmbiguitySet",
                message: format!("measure {i} has dimension {}, expected {dim}", m.dim()),
            });
        }
        Ok(Self { measures })
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    /// Largest Euclidean atom norm over every member support.
    pub fn max_atom_norm(&self) -> f64 {
        self.measures
            .iter()
            .flat_map(|m| m.atoms())
            .map(|a| norm(a))
            .fold(0.0, f64::max)
    }

    /// Upper expectation `Ê[X] = max_θ E_θ[X]`, with the least attaining
    /// index. Ties break toward the lowest measure index.
    pub fn upper_expectation(&self, x: &RandomVariable) -> Result<UpperExpectation> {
        let mut best = f64::NEG_INFINITY;
        let mut argmax = 0;
        for (i, m) in self.measures.iter().enumerate() {
            let v = m.expectation(x)?;
            if v > best {
                best = v;
                argmax = i;
            }
        }
        Ok(UpperExpectation {
            value: best,
            argmax,
        })
    }

    /// Choquet capacity `c(A) = max_θ P_θ(A)`; always in [0, 1].
    pub fn capacity(&self, a: &Event) -> f64 {
        self.measures
            .iter()
            .map(|m| m.probability(a))
            .fold(0.0, f64::max)
    }

    /// Whether `A` is polar, i.e. every member assigns it zero weight.
    /// Exact on finite supports.
    pub fn polar_check(&self, a: &Event) -> bool {
        self.capacity(a) == 0.0
    }

    /// Checks the four sublinear-expectation axioms on a concrete instance:
    /// monotonicity (when `X >= Y` holds on every atom), constant
    /// preservation, subadditivity and positive homogeneity, each within
    /// [`AXIOM_TOL`].
    pub fn verify_sublinearity(
        &self,
        x: &RandomVariable,
        y: &RandomVariable,
        lambda: f64,
        c: f64,
    ) -> Result<SublinearityReport> {
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        if !c.is_finite() {
            return Err(Error::Parameter(format!("constant must be finite, got {c}")));
        }
        let ex = self.upper_expectation(x)?.value;
        let ey = self.upper_expectation(y)?.value;

        // X >= Y on every atom of every member?
        let mut dominates = true;
        'outer: for m in &self.measures {
            for atom in m.atoms() {
                if x.eval_checked(atom)? < y.eval_checked(atom)? {
                    dominates = false;
                    break 'outer;
                }
            }
        }
        let monotone_ok = !dominates || ex >= ey - AXIOM_TOL;

        let e_const = self
            .upper_expectation(&RandomVariable::constant(c))?
            .value;
        let constant_ok = (e_const - c).abs() <= AXIOM_TOL;

        let e_sum = self.upper_expectation(&x.add(y))?.value;
        let subadditive_ok = e_sum <= ex + ey + AXIOM_TOL;

        let e_scaled = self.upper_expectation(&x.scale(lambda))?.value;
        let homogeneous_ok = (e_scaled - lambda * ex).abs() <= AXIOM_TOL * lambda.max(1.0);

        Ok(SublinearityReport {
            ex,
            ey,
            pointwise_dominates: dominates,
            monotone_ok,
            constant_value: e_const,
            constant_expected: c,
            constant_ok,
            e_sum,
            subadditive_ok,
            lambda,
            e_scaled,
            homogeneous_ok,
        })
    }

    /// Verifies the capacity laws on a finite list of events:
    /// monotonicity under inclusion (tested on the atom set),
    /// subadditivity `c(A_1 ∪ … ∪ A_n) <= Σ c(A_k)` along every prefix,
    /// and continuity from below along the increasing envelope
    /// `B_n = A_1 ∪ … ∪ A_n`.
    pub fn capacity_properties_check(&self, events: &[Event]) -> Result<CapacityReport> {
        if events.is_empty() {
            return Err(Error::Parameter("events list must be nonempty".into()));
        }
        let caps: Vec<f64> = events.iter().map(|a| self.capacity(a)).collect();
        let atoms: Vec<&Vec<f64>> = self
            .measures
            .iter()
            .flat_map(|m| m.atoms().iter())
            .collect();

        let mut monotone_ok = true;
        let mut monotone_witness = None;
        for i in 0..events.len() {
            for j in 0..events.len() {
                if i == j {
                    continue;
                }
                // A_i ⊂ A_j on the atom set?
                let subset = atoms
                    .iter()
                    .all(|a| !events[i].contains(a) || events[j].contains(a));
                if subset && caps[i] > caps[j] + AXIOM_TOL {
                    monotone_ok = false;
                    monotone_witness = Some((i, j, caps[i], caps[j]));
                }
            }
        }

        let mut subadditive_ok = true;
        let mut subadditive_witness = None;
        let mut envelope = Vec::new();
        let mut envelope_caps = Vec::with_capacity(events.len());
        let mut partial_sum = 0.0;
        for (n, (a, &ca)) in events.iter().zip(&caps).enumerate() {
            envelope.push(a.clone());
            partial_sum += ca;
            let cb = self.capacity(&Event::union_of(&envelope));
            if cb > partial_sum + AXIOM_TOL {
                subadditive_ok = false;
                subadditive_witness = Some((n, cb, partial_sum));
            }
            envelope_caps.push(cb);
        }

        // The envelope is increasing, so its capacities must be
        // nondecreasing and exhaust the capacity of the full union.
        let mut continuity_ok = true;
        for w in envelope_caps.windows(2) {
            if w[1] < w[0] - AXIOM_TOL {
                continuity_ok = false;
            }
        }
        let union_cap = *envelope_caps.last().unwrap();
        let sup_cap = envelope_caps.iter().cloned().fold(0.0, f64::max);
        if (union_cap - sup_cap).abs() > AXIOM_TOL {
            continuity_ok = false;
        }

        Ok(CapacityReport {
            capacities: caps,
            envelope_capacities: envelope_caps,
            monotone_ok,
            monotone_witness,
            subadditive_ok,
            subadditive_witness,
            continuity_ok,
            pass: monotone_ok && subadditive_ok && continuity_ok,
        })
    }

    /// Tail capacities `t_n = c(∪_{k>=n} A_k)` for `n = 1..=m`.
    ///
    /// The sequence is nonincreasing and dominated by the tail sums
    /// `Σ_{k>=n} c(A_k)`, which is the quantitative Borel–Cantelli bound
    /// on a finite list.
    pub fn borel_cantelli_tail(&self, events: &[Event]) -> Result<Vec<f64>> {
        if events.is_empty() {
            return Err(Error::Parameter("events list must be nonempty".into()));
        }
        let mut tails = Vec::with_capacity(events.len());
        for n in 0..events.len() {
            let union = Event::union_of(&events[n..]);
            tails.push(self.capacity(&union));
        }
        Ok(tails)
    }

    /// `Ê[|x|^l]` for the identity variable, where `|x|` is the Euclidean
    /// norm.
    pub fn upper_norm_moment(&self, l: f64) -> Result<f64> {
        let moment = RandomVariable::new("|x|^l", move |p: &[f64]| norm(p).powf(l));
        Ok(self.upper_expectation(&moment)?.value)
    }

    /// Chebyshev tightness certificate: the smallest radius of the form
    /// `k * 0.5` whose `l`-th power strictly exceeds `Ê[|x|^l] / ε`,
    /// together with the direct check `c({|x| > N}) < ε`.
    ///
    /// Requires `ε` in (0, 1] and `l > 0`.
    pub fn tightness_radius(&self, epsilon: f64, l: f64) -> Result<TightnessCertificate> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::Parameter(format!("l must be positive, got {l}")));
        }
        let moment = self.upper_norm_moment(l)?;
        let ratio = moment / epsilon;
        // Smallest k with (k * 0.5)^l > ratio, found by jumping near the
        // analytic threshold and adjusting for rounding.
        let threshold = ratio.max(0.0).powf(1.0 / l);
        let mut k = ((threshold / RADIUS_STEP).floor() as i64).max(1);
        while (k as f64 * RADIUS_STEP).powf(l) <= ratio {
            k += 1;
        }
        while k > 1 && ((k - 1) as f64 * RADIUS_STEP).powf(l) > ratio {
            k -= 1;
        }
        let radius = k as f64 * RADIUS_STEP;
        let escape = self.capacity(&Event::norm_gt(radius));
        Ok(TightnessCertificate {
            radius,
            moment,
            verified: escape < epsilon,
            escape_capacity: escape,
        })
    }
}

/// Euclidean norm of a point.
pub fn norm(p: &[f64]) -> f64 {
    p.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Witnesses for one sublinearity check.
#[derive(Debug, Clone)]
pub struct SublinearityReport {
    pub ex: f64,
    pub ey: f64,
    /// Whether `X >= Y` held at every atom (the monotonicity hypothesis).
    pub pointwise_dominates: bool,
    /// Vacuously true when the hypothesis fails.
    pub monotone_ok: bool,
    pub constant_value: f64,
    pub constant_expected: f64,
    pub constant_ok: bool,
    pub e_sum: f64,
    pub subadditive_ok: bool,
    pub lambda: f64,
    pub e_scaled: f64,
    pub homogeneous_ok: bool,
}

impl SublinearityReport {
    pub fn pass(&self) -> bool {
        self.monotone_ok && self.constant_ok && self.subadditive_ok && self.homogeneous_ok
    }
}

/// Witnesses for the capacity-law checks.
#[derive(Debug, Clone)]
pub struct CapacityReport {
    pub capacities: Vec<f64>,
    pub envelope_capacities: Vec<f64>,
    pub monotone_ok: bool,
    /// (i, j, c(A_i), c(A_j)) for a violated inclusion, if any.
    pub monotone_witness: Option<(usize, usize, f64, f64)>,
    pub subadditive_ok: bool,
    /// (prefix length, c(union), partial sum) for a violation, if any.
    pub subadditive_witness: Option<(usize, f64, f64)>,
    pub continuity_ok: bool,
    pub pass: bool,
}

/// A tightness radius and its direct verification.
#[derive(Debug, Clone, Copy)]
pub struct TightnessCertificate {
    pub radius: f64,
    pub moment: f64,
    pub verified: bool,
    pub escape_capacity: f64,
}

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type PointPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// An evaluable real function on ℝᵈ, optionally carrying a sup-norm bound
/// and a Lipschitz bound.
#[derive(Clone)]
pub struct RandomVariable {
    f: PointFn,
    label: String,
    pub sup_bound: Option<f64>,
    pub lipschitz: Option<f64>,
}

impl std::fmt::Debug for RandomVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RandomVariable")
            .field("label", &self.label)
            .field("sup_bound", &self.sup_bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl RandomVariable {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            label: label.into(),
            sup_bound: None,
            lipschitz: None,
        }
    }

    pub fn with_bounds(mut self, sup_bound: f64, lipschitz: f64) -> Self {
        self.sup_bound = Some(sup_bound);
        self.lipschitz = Some(lipschitz);
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_: &[f64]| c).with_bounds(c.abs(), 0.0)
    }

    /// First coordinate of the point.
    pub fn coordinate() -> Self {
        Self::new("x", |p: &[f64]| p[0])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        (self.f)(point)
    }

    /// Evaluate and fail with the offending atom on a non-finite result.
    pub fn eval_checked(&self, point: &[f64]) -> Result<f64> {
        let v = (self.f)(point);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                what: self.label.clone(),
                point: point.to_vec(),
                value: v,
            })
        }
    }

    pub fn add(&self, other: &RandomVariable) -> Self {
        let f = self.f.clone();
        let g = other.f.clone();
        Self {
            f: Arc::new(move |p: &[f64]| f(p) + g(p)),
            label: format!("({}) + ({})", self.label, other.label),
            sup_bound: match (self.sup_bound, other.sup_bound) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
            lipschitz: match (self.lipschitz, other.lipschitz) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
        }
    }

    pub fn scale(&self, lambda: f64) -> Self {
        let f = self.f.clone();
        Self {
            f: Arc::new(move |p: &[f64]| lambda * f(p)),
            label: format!("{lambda} * ({})", self.label),
            sup_bound: self.sup_bound.map(|m| m * lambda.abs()),
            lipschitz: self.lipschitz.map(|l| l * lambda.abs()),
        }
    }
}

/// A deterministic membership test on ℝᵈ.
#[derive(Clone)]
pub struct Event {
    p: PointPredicate,
    label: String,
}

impl std::fmt::Debug for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Event({})", self.label)
    }
}

impl Event {
    pub fn new(label: impl Into<String>, p: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Self {
            p: Arc::new(p),
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        (self.p)(point)
    }

    pub fn everything() -> Self {
        Self::new("all", |_: &[f64]| true)
    }

    pub fn nothing() -> Self {
        Self::new("empty", |_: &[f64]| false)
    }

    /// `{ |x| > r }` in the Euclidean norm.
    pub fn norm_gt(r: f64) -> Self {
        Self::new(format!("|x| > {r}"), move |p: &[f64]| norm(p) > r)
    }

    /// `{ |x| >= r }` in the Euclidean norm.
    pub fn norm_ge(r: f64) -> Self {
        Self::new(format!("|x| >= {r}"), move |p: &[f64]| norm(p) >= r)
    }

    /// Union of a finite list of events.
    pub fn union_of(events: &[Event]) -> Self {
        let parts: Vec<Event> = events.to_vec();
        let label = parts
            .iter()
            .map(|e| e.label.clone())
            .collect::<Vec<_>>()
            .join(" u ");
        Self::new(label, move |p: &[f64]| parts.iter().any(|e| e.contains(p)))
    }
}
