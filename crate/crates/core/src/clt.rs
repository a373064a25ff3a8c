//! Central-limit evaluation under ambiguity: exact nested maximization for
//! small step counts, grid dynamic programming for large ones, and
//! convergence-in-law diagnostics.
//!
//! With zero-mean step families the normalized sums `S_n / sqrt(n)` are
//! evaluated by the backward recursion
//!
//! ```text
//! u_n = phi,   u_k(x) = max_theta sum_j w_{theta,j} u_{k+1}(x + a_{theta,j} / sqrt(n))
//! ```
//!
//! whose root value `u_0(0)` is the sublinear expectation of
//! `phi(S_n / sqrt(n))` under sequential (adapted) maximization over the
//! family. As `n` grows these values approach the G-normal expectation
//! computed independently by the `pde` module.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measures::AmbiguitySet;
use crate::parallel;

/// Member means must vanish within this tolerance.
pub const MEAN_TOL: f64 = 1e-12;

/// Default cap on the total number of distinct reachable positions in the
/// exact evaluator.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Reachable positions are deduplicated after rounding to this absolute
/// quantum, which recombines lattice-commensurate atoms without merging
/// genuinely distinct states.
pub const POSITION_QUANTUM: f64 = 1e-12;

/// A family of zero-mean step distributions on the line.
#[derive(Debug, Clone)]
pub struct StepFamily {
    set: AmbiguitySet,
    variances: Vec<f64>,
    sigma_min_sq: f64,
    sigma_max_sq: f64,
}

impl StepFamily {
    /// Validates that the family lives on ℝ¹, every member has mean zero
    /// within [`MEAN_TOL`], and the largest variance is positive.
    pub fn new(set: AmbiguitySet) -> Result<Self> {
        if set.dim() != 1 {
            return Err(Error::Invalid {
                what: "StepFamily",
                message: format!("requires dimension 1, got {}", set.dim()),
            });
        }
        for (i, m) in set.measures().iter().enumerate() {
            let mean = m.mean()[0];
            if mean.abs() > MEAN_TOL {
                return Err(Error::Invalid {
                    what: "StepFamily",
                    message: format!("measure {i} has mean {mean}, must vanish"),
                });
            }
        }
        let variances: Vec<f64> = set
            .measures()
            .iter()
            .map(|m| m.variance(0))
            .collect();
        let sigma_min_sq = variances.iter().cloned().fold(f64::INFINITY, f64::min);
        let sigma_max_sq = variances.iter().cloned().fold(0.0, f64::max);
        if !(sigma_max_sq > 0.0) {
            return Err(Error::Invalid {
                what: "StepFamily",
                message: "largest variance must be positive".into(),
            });
        }
        Ok(Self {
            set,
            variances,
            sigma_min_sq,
            sigma_max_sq,
        })
    }

    pub fn set(&self) -> &AmbiguitySet {
        &self.set
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn sigma_min_sq(&self) -> f64 {
        self.sigma_min_sq
    }

    pub fn sigma_max_sq(&self) -> f64 {
        self.sigma_max_sq
    }

    /// Largest atom magnitude across the family.
    pub fn max_atom_abs(&self) -> f64 {
        self.set.max_atom_norm()
    }
}

/// A family of joint (step, drift) distributions on ℝ², with zero-mean
/// step marginals.
#[derive(Debug, Clone)]
pub struct DriftStepFamily {
    set: AmbiguitySet,
    step_variances: Vec<f64>,
    drift_means: Vec<f64>,
}

impl DriftStepFamily {
    pub fn new(set: AmbiguitySet) -> Result<Self> {
        if set.dim() != 2 {
            return Err(Error::Invalid {
                what: "DriftStepFamily",
                message: format!("requires dimension 2, got {}", set.dim()),
            });
        }
        for (i, m) in set.measures().iter().enumerate() {
            let mean = m.mean()[0];
            if mean.abs() > MEAN_TOL {
                return Err(Error::Invalid {
                    what: "DriftStepFamily",
                    message: format!("measure {i} has step-marginal mean {mean}, must vanish"),
                });
            }
        }
        let step_variances = set.measures().iter().map(|m| m.variance(0)).collect();
        let drift_means = set.measures().iter().map(|m| m.mean()[1]).collect();
        Ok(Self {
            set,
            step_variances,
            drift_means,
        })
    }

    pub fn set(&self) -> &AmbiguitySet {
        &self.set
    }

    pub fn step_variances(&self) -> &[f64] {
        &self.step_variances
    }

    pub fn drift_means(&self) -> &[f64] {
        &self.drift_means
    }

    pub fn sigma_max_sq(&self) -> f64 {
        self.step_variances.iter().cloned().fold(0.0, f64::max)
    }

    fn max_abs_coord(&self, k: usize) -> f64 {
        self.set
            .measures()
            .iter()
            .flat_map(|m| m.atoms())
            .map(|a| a[k].abs())
            .fold(0.0, f64::max)
    }
}

/// A bounded test function of one real variable with explicit sup-norm and
/// Lipschitz bounds.
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
    sup_bound: f64,
    lipschitz: f64,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("sup_bound", &self.sup_bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        label: impl Into<String>,
        sup_bound: f64,
        lipschitz: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            label: label.into(),
            sup_bound,
            lipschitz,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), c.abs(), 0.0, move |_| c)
    }

    pub fn cosine() -> Self {
        Self::new("cos(x)", 1.0, 1.0, f64::cos)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Pointwise difference, with summed bounds.
    pub fn sub(&self, other: &TestFunction) -> Self {
        let f = self.f.clone();
        let g = other.f.clone();
        Self {
            f: Arc::new(move |x| f(x) - g(x)),
            label: format!("({}) - ({})", self.label, other.label),
            sup_bound: self.sup_bound + other.sup_bound,
            lipschitz: self.lipschitz + other.lipschitz,
        }
    }
}

/// One diagnostic row: step count, value and gap to the previous row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub value: f64,
    /// `|value - previous value|`; zero by convention on the first row.
    pub delta: f64,
}

/// Values of `Ê[phi(S_n / sqrt(n))]` along an increasing list of `n`.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Which evaluator backs a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    Dp,
}

// ---------------------------------------------------------------------------
// shift tables
// ---------------------------------------------------------------------------

/// Flattened per-step displacements and weights, grouped by measure.
struct ShiftTable {
    shifts: Vec<f64>,
    weights: Vec<f64>,
    measure_ranges: Vec<std::ops::Range<usize>>,
}

impl ShiftTable {
    fn steps(family: &StepFamily, n: u32) -> Self {
        let scale = 1.0 / (n as f64).sqrt();
        let mut shifts = Vec::new();
        let mut weights = Vec::new();
        let mut measure_ranges = Vec::new();
        for m in family.set.measures() {
            let start = shifts.len();
            for (atom, w) in m.atoms().iter().zip(m.weights()) {
                shifts.push(atom[0] * scale);
                weights.push(*w);
            }
            measure_ranges.push(start..shifts.len());
        }
        Self {
            shifts,
            weights,
            measure_ranges,
        }
    }

    fn drift_steps(family: &DriftStepFamily, n: u32) -> Self {
        let root_scale = 1.0 / (n as f64).sqrt();
        let lin_scale = 1.0 / n as f64;
        let mut shifts = Vec::new();
        let mut weights = Vec::new();
        let mut measure_ranges = Vec::new();
        for m in family.set.measures() {
            let start = shifts.len();
            for (atom, w) in m.atoms().iter().zip(m.weights()) {
                shifts.push(atom[0] * root_scale + atom[1] * lin_scale);
                weights.push(*w);
            }
            measure_ranges.push(start..shifts.len());
        }
        Self {
            shifts,
            weights,
            measure_ranges,
        }
    }

    fn len(&self) -> usize {
        self.shifts.len()
    }
}

// ---------------------------------------------------------------------------
// exact evaluator
// ---------------------------------------------------------------------------

#[derive(Default)]
struct MixHasher(u64);

impl Hasher for MixHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
    }

    fn write_i128(&mut self, i: i128) {
        let mut h = (i as u64) ^ ((i >> 64) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        self.0 = h;
    }
}

fn quantize(x: f64) -> i128 {
    (x / POSITION_QUANTUM).round() as i128
}

/// Exact nested-maximization value of `Ê[phi(S_n / sqrt(n))]`.
///
/// Enumerates every reachable position layer by layer, recombining states
/// that agree after rounding to [`POSITION_QUANTUM`]. Unbounded `phi`
/// (polynomials) are fine here. Fails with a size error when the distinct
/// position count would exceed [`DEFAULT_STATE_CAP`].
pub fn value_exact<F>(family: &StepFamily, phi: F, n: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    value_exact_capped(family, phi, n, DEFAULT_STATE_CAP)
}

/// [`value_exact`] with an explicit cap on distinct reachable positions.
pub fn value_exact_capped<F>(family: &StepFamily, phi: F, n: u32, cap: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if n == 0 {
        return Err(Error::Parameter("step count n must be at least 1".into()));
    }
    let table = ShiftTable::steps(family, n);
    let n_shifts = table.len();

    // Forward pass: enumerate reachable positions and record, for every
    // (state, shift), the index of the child state in the next layer.
    type KeyMap = HashMap<i128, u32, BuildHasherDefault<MixHasher>>;
    let mut layers: Vec<Vec<f64>> = vec![vec![0.0]];
    let mut transitions: Vec<Vec<u32>> = Vec::with_capacity(n as usize);
    let mut total_states = 1usize;
    for _ in 0..n {
        let current = layers.last().unwrap();
        let mut index: KeyMap =
            KeyMap::with_capacity_and_hasher(current.len() * n_shifts, Default::default());
        let mut next: Vec<f64> = Vec::new();
        let mut trans: Vec<u32> = Vec::with_capacity(current.len() * n_shifts);
        for &x in current {
            for &s in &table.shifts {
                let child = x + s;
                let idx = *index.entry(quantize(child)).or_insert_with(|| {
                    next.push(child);
                    (next.len() - 1) as u32
                });
                trans.push(idx);
            }
        }
        total_states += next.len();
        if total_states > cap {
            return Err(Error::Size(format!(
                "reachable-state count exceeds the cap of {cap}; \
                 use the grid evaluator value_dp for this step count"
            )));
        }
        layers.push(next);
        transitions.push(trans);
    }

    // Backward pass.
    let top = layers.last().unwrap();
    let mut values: Vec<f64> = Vec::with_capacity(top.len());
    for &x in top {
        let v = phi(x);
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "phi evaluates to {v} at reachable position {x}"
            )));
        }
        values.push(v);
    }
    for k in (0..n as usize).rev() {
        let trans = &transitions[k];
        let states = layers[k].len();
        let mut new_values = Vec::with_capacity(states);
        for i in 0..states {
            let base = i * n_shifts;
            let mut best = f64::NEG_INFINITY;
            for range in &table.measure_ranges {
                let mut acc = 0.0;
                for j in range.clone() {
                    acc += table.weights[j] * values[trans[base + j] as usize];
                }
                if acc > best {
                    best = acc;
                }
            }
            new_values.push(best);
        }
        values = new_values;
    }
    Ok(values[0])
}

// ---------------------------------------------------------------------------
// grid evaluator
// ---------------------------------------------------------------------------

struct DpGrid {
    x_min: f64,
    dx: f64,
    nodes: usize,
    center: usize,
}

impl DpGrid {
    /// Symmetric grid with 0 as the exact center node, spanning at least
    /// the required half-width.
    fn build(spec: &GridSpec, required_half_width: f64) -> Result<Self> {
        spec.validate()?;
        let half_width = match spec.half_width {
            Some(h) => {
                if h < required_half_width - 1e-9 {
                    return Err(Error::Domain(format!(
                        "grid half-width {h} is below the required {required_half_width}"
                    )));
                }
                h
            }
            None => required_half_width,
        };
        let m_half = ((half_width / spec.dx) - 1e-9).ceil().max(1.0) as usize;
        let nodes = 2 * m_half + 1;
        if nodes > 50_000_000 {
            return Err(Error::Size(format!(
                "grid would need {nodes} nodes; widen dx or shrink the span"
            )));
        }
        Ok(Self {
            x_min: -(m_half as f64) * spec.dx,
            dx: spec.dx,
            nodes,
            center: m_half,
        })
    }

    fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    // Same clamped interpolation rule as `ValueGrid::eval`, including the
    // exact-node snap.
    fn interp(&self, values: &[f64], x: f64) -> f64 {
        let last = self.nodes - 1;
        if x <= self.x_min {
            return values[0];
        }
        let pos = (x - self.x_min) / self.dx;
        if pos >= last as f64 {
            return values[last];
        }
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return values[(nearest as usize).min(last)];
        }
        let i = (pos.floor() as usize).min(last - 1);
        let frac = pos - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

fn dp_run(table: &ShiftTable, grid: &DpGrid, phi: &TestFunction, n: u32) -> Result<f64> {
    let m = phi.sup_bound();
    let mut values: Vec<f64> = (0..grid.nodes).map(|i| phi.eval(grid.node(i))).collect();
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "initial function evaluates to {v} at x = {}",
                grid.node(i)
            )));
        }
        if v.abs() > m * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Parameter(format!(
                "initial function violates its sup bound {m} at x = {} (value {v})",
                grid.node(i)
            )));
        }
    }
    let mut scratch = vec![0.0; grid.nodes];
    for step in 0..n {
        parallel::fill_indexed(&mut scratch, |i| {
            let x = grid.node(i);
            let mut best = f64::NEG_INFINITY;
            for range in &table.measure_ranges {
                let mut acc = 0.0;
                for j in range.clone() {
                    acc += table.weights[j] * grid.interp(&values, x + table.shifts[j]);
                }
                if acc > best {
                    best = acc;
                }
            }
            best
        });
        std::mem::swap(&mut values, &mut scratch);
        if !values[grid.center].is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value at step {step} of {n}"
            )));
        }
    }
    let out = values[grid.center];
    debug_assert!(out.abs() <= m * (1.0 + 1e-9) + 1e-9);
    Ok(out)
}

/// Default half-width for the step-family grid: six standard deviations
/// plus the largest single-step displacement, measured from the
/// evaluation point at the origin.
pub fn default_half_width(family: &StepFamily) -> f64 {
    6.0 * family.sigma_max_sq().sqrt() + family.max_atom_abs()
}

/// Backward-induction value of `Ê[phi(S_n / sqrt(n))]` on a uniform grid
/// with clamped linear interpolation.
///
/// Requires a bounded `phi`; the grid must span at least the default
/// half-width so the boundary clamp stays out of reach of the bulk of the
/// mass.
pub fn value_dp(family: &StepFamily, phi: &TestFunction, n: u32, grid: &GridSpec) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parameter("step count n must be at least 1".into()));
    }
    let dp = DpGrid::build(grid, default_half_width(family))?;
    let table = ShiftTable::steps(family, n);
    dp_run(&table, &dp, phi, n)
}

/// Grid value for joint (step, drift) families, with per-step displacement
/// `a_x / sqrt(n) + a_y / n`.
pub fn generalized_value_dp(
    family: &DriftStepFamily,
    phi: &TestFunction,
    n: u32,
    grid: &GridSpec,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parameter("step count n must be at least 1".into()));
    }
    let required = 6.0 * family.sigma_max_sq().sqrt()
        + family.max_abs_coord(0)
        + family.max_abs_coord(1);
    let dp = DpGrid::build(grid, required)?;
    let table = ShiftTable::drift_steps(family, n);
    dp_run(&table, &dp, phi, n)
}

/// One value per `n` in a strictly increasing list, with successive
/// absolute differences.
pub fn convergence_table(
    family: &StepFamily,
    phi: &TestFunction,
    n_list: &[u32],
    grid: &GridSpec,
    mode: EvalMode,
) -> Result<ConvergenceTable> {
    if n_list.is_empty() {
        return Err(Error::Parameter("n_list must be nonempty".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(
            "n_list must be strictly increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    let mut prev: Option<f64> = None;
    for &n in n_list {
        let value = match mode {
            EvalMode::Exact => value_exact(family, |x| phi.eval(x), n)?,
            EvalMode::Dp => value_dp(family, phi, n, grid)?,
        };
        let delta = prev.map(|p| (value - p).abs()).unwrap_or(0.0);
        rows.push(ConvergenceRow { n, value, delta });
        prev = Some(value);
    }
    Ok(ConvergenceTable { rows })
}

// ---------------------------------------------------------------------------
// domination
// ---------------------------------------------------------------------------

/// A single domination failure.
#[derive(Debug, Clone, Copy)]
pub struct DominationViolation {
    pub pair: usize,
    pub n: u32,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of [`domination_check`].
#[derive(Debug, Clone, Default)]
pub struct DominationReport {
    pub violations: Vec<DominationViolation>,
    /// Per pair, the largest value of `phi - psi` over the `n` list — the
    /// finite-list stand-in for the enveloping sublinear expectation.
    pub sup_diff: Vec<f64>,
    pub checks: usize,
}

impl DominationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every pair `(phi, psi)` and every `n`, verifies the domination
/// chain `value_n(phi) - value_n(psi) <= value_n(phi - psi) <= sup_n
/// value_n(phi - psi)` within 1e-9 plus a small interpolation headroom.
pub fn domination_check(
    family: &StepFamily,
    pairs: &[(TestFunction, TestFunction)],
    n_list: &[u32],
    grid: &GridSpec,
) -> Result<DominationReport> {
    if pairs.is_empty() {
        return Err(Error::Parameter("pairs list must be nonempty".into()));
    }
    if n_list.is_empty() {
        return Err(Error::Parameter("n_list must be nonempty".into()));
    }
    let mut report = DominationReport::default();
    for (p, (phi, psi)) in pairs.iter().enumerate() {
        let diff = phi.sub(psi);
        let tol = 1e-9 + 0.01 * grid.dx * diff.lipschitz();
        let mut diff_values = Vec::with_capacity(n_list.len());
        let mut triples = Vec::with_capacity(n_list.len());
        for &n in n_list {
            let v_phi = value_dp(family, phi, n, grid)?;
            let v_psi = value_dp(family, psi, n, grid)?;
            let v_diff = value_dp(family, &diff, n, grid)?;
            diff_values.push(v_diff);
            triples.push((n, v_phi, v_psi, v_diff));
        }
        let sup_diff = diff_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        report.sup_diff.push(sup_diff);
        for (n, v_phi, v_psi, v_diff) in triples {
            report.checks += 2;
            if v_phi - v_psi > v_diff + tol {
                report.violations.push(DominationViolation {
                    pair: p,
                    n,
                    lhs: v_phi - v_psi,
                    rhs: v_diff,
                });
            }
            if v_diff > sup_diff + tol {
                report.violations.push(DominationViolation {
                    pair: p,
                    n,
                    lhs: v_diff,
                    rhs: sup_diff,
                });
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// diagonal extraction
// ---------------------------------------------------------------------------

/// Greedy diagonal extraction over a shared dictionary of test values.
///
/// `tables[i][j]` is the value of distribution `i` on dictionary entry
/// `j`. The index list is refined one dictionary entry at a time, keeping
/// a largest subset whose pairwise gaps on the entry stay within
/// `epsilon` (ties prefer the subset with the smallest indices). The
/// result is never empty, and a family that is already Cauchy at level
/// `epsilon` on every entry survives in full.
#[allow(clippy::needless_range_loop)] // `entry` indexes across every table
pub fn diagonal_extract(tables: &[Vec<f64>], epsilon: f64) -> Result<Vec<usize>> {
    if tables.is_empty() {
        return Err(Error::Parameter("tables list must be nonempty".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let dict_len = tables[0].len();
    if tables.iter().any(|t| t.len() != dict_len) {
        return Err(Error::Parameter(
            "all tables must share the dictionary length".into(),
        ));
    }
    let mut kept: Vec<usize> = (0..tables.len()).collect();
    for entry in 0..dict_len {
        let mut best: Option<Vec<usize>> = None;
        for &anchor in &kept {
            let lo = tables[anchor][entry];
            let members: Vec<usize> = kept
                .iter()
                .cloned()
                .filter(|&i| {
                    let v = tables[i][entry];
                    v >= lo && v <= lo + epsilon
                })
                .collect();
            let better = match &best {
                None => true,
                Some(b) => members.len() > b.len() || (members.len() == b.len() && members < *b),
            };
            if better {
                best = Some(members);
            }
        }
        kept = best.unwrap_or_default();
    }
    Ok(kept)
}

// ---------------------------------------------------------------------------
// dictionary
// ---------------------------------------------------------------------------

/// Numeric bound on the derivative magnitude of the smooth cutoff below,
/// scaled by 1/L (the true maximum is about 2.17/L).
pub const CUTOFF_SLOPE_BOUND: f64 = 2.2;

/// Smooth cutoff: 1 on `[-L, L]`, 0 beyond `2L`, and
/// `exp(1 - 1/(1 - t^2))` with `t = (|x| - L)/L` in between.
pub fn smooth_cutoff(x: f64, radius: f64) -> f64 {
    let t = (x.abs() - radius) / radius;
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// A bounded trigonometric dictionary: the constant 1 followed by
/// `cos(k pi x / L)` and `sin(k pi x / L)` tapered by the smooth cutoff,
/// for `k = 1 ..= ceil(count / 2)`. Restricted to any compact set inside
/// `[-L, L]` these span a dense subalgebra of the continuous functions,
/// which is what the diagonal-extraction diagnostics need.
pub fn dictionary_default(radius: f64, count: usize) -> Result<Vec<TestFunction>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Parameter(format!(
            "dictionary radius must be positive, got {radius}"
        )));
    }
    if count == 0 {
        return Err(Error::Parameter("dictionary count must be at least 1".into()));
    }
    let mut entries = vec![TestFunction::constant(1.0)];
    let harmonics = count.div_ceil(2);
    for k in 1..=harmonics {
        let freq = k as f64 * std::f64::consts::PI / radius;
        let lip = freq + CUTOFF_SLOPE_BOUND / radius;
        let r = radius;
        entries.push(TestFunction::new(
            format!("cos({k}.pi.x/L).cutoff"),
            1.0,
            lip,
            move |x| (freq * x).cos() * smooth_cutoff(x, r),
        ));
        entries.push(TestFunction::new(
            format!("sin({k}.pi.x/L).cutoff"),
            1.0,
            lip,
            move |x| (freq * x).sin() * smooth_cutoff(x, r),
        ));
    }
    Ok(entries)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
pub(crate) mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn rademacher_family() -> StepFamily {
        StepFamily::new(
            AmbiguitySet::new(vec![
                DiscreteMeasure::rademacher(1.0).unwrap(),
                DiscreteMeasure::rademacher(2.0).unwrap(),
            ])
            .unwrap(),
        )
        .unwrap()
    }

    /// Random zero-mean family with at most `max_measures` two-point
    /// members (atoms are recentered so means vanish to rounding).
    pub(crate) fn random_zero_mean_family(rng: &mut ChaCha8Rng, max_measures: usize) -> StepFamily {
        let n_measures = rng.gen_range(1..=max_measures);
        let mut measures = Vec::new();
        for _ in 0..n_measures {
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
                    measures.push(m);
                    break;
                }
            }
        }
        StepFamily::new(AmbiguitySet::new(measures).unwrap()).unwrap()
    }

    /// Plain tree recursion without deduplication: an independent oracle
    /// for the layered evaluator.
    fn brute_value(family: &StepFamily, phi: &dyn Fn(f64) -> f64, n: u32, k: u32, x: f64) -> f64 {
        if k == n {
            return phi(x);
        }
        let scale = 1.0 / (n as f64).sqrt();
        family
            .set()
            .measures()
            .iter()
            .map(|m| {
                m.atoms()
                    .iter()
                    .zip(m.weights())
                    .map(|(a, w)| w * brute_value(family, phi, n, k + 1, x + a[0] * scale))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value of one fixed measure sequence (no adaptivity): a lower bound
    /// for the nested maximization.
    fn fixed_sequence_value(family: &StepFamily, phi: &dyn Fn(f64) -> f64, seq: &[usize]) -> f64 {
        let n = seq.len() as f64;
        let scale = 1.0 / n.sqrt();
        let mut dist: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        for &theta in seq {
            let m = &family.set().measures()[theta];
            let mut next = Vec::with_capacity(dist.len() * m.len());
            for &(x, p) in &dist {
                for (a, w) in m.atoms().iter().zip(m.weights()) {
                    next.push((x + a[0] * scale, p * w));
                }
            }
            dist = next;
        }
        dist.iter().map(|&(x, p)| p * phi(x)).sum()
    }

    #[test]
    fn exact_trivial_values() {
        let fam = rademacher_family();
        for n in [1, 2, 5] {
            let c = value_exact(&fam, |_| 7.25, n).unwrap();
            assert!((c - 7.25).abs() <= 1e-12);
            let zero = value_exact(&fam, |x| x, n).unwrap();
            assert!(zero.abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_second_moments() {
        let fam = rademacher_family();
        for n in 1..=8 {
            let upper = value_exact(&fam, |x| x * x, n).unwrap();
            assert!((upper - 4.0).abs() <= 1e-10, "n = {n}: {upper}");
            let lower = value_exact(&fam, |x| -x * x, n).unwrap();
            assert!((lower + 1.0).abs() <= 1e-10, "n = {n}: {lower}");
        }
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..12 {
            let fam = random_zero_mean_family(&mut rng, 2);
            let a = rng.gen_range(0.2..1.5);
            let phi = move |x: f64| (x * a).cos() + 0.3 * x;
            for n in 1..=4 {
                let fast = value_exact(&fam, phi, n).unwrap();
                let slow = brute_value(&fam, &phi, n, 0, 0.0);
                assert!(
                    (fast - slow).abs() <= 1e-11,
                    "n = {n}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn exact_dominates_fixed_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let fam = random_zero_mean_family(&mut rng, 3);
            let phi = |x: f64| (1.3 * x).cos();
            let n = 5;
            let sup = value_exact(&fam, phi, n).unwrap();
            for _ in 0..100 {
                let seq: Vec<usize> = (0..n)
                    .map(|_| rng.gen_range(0..fam.set().len()))
                    .collect();
                let fixed = fixed_sequence_value(&fam, &phi, &seq);
                assert!(fixed <= sup + 1e-10, "{fixed} > {sup}");
            }
        }
    }

    #[test]
    fn exact_state_cap_is_enforced() {
        // the integer lattice grows by 4k + 1 states per layer, so 40
        // steps blow past a 500-state cap
        let fam = rademacher_family();
        let err = value_exact_capped(&fam, |x| x, 40, 500).unwrap_err();
        match err {
            Error::Size(msg) => assert!(msg.contains("value_dp")),
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn zero_mean_family_construction_needs_mean_zero() {
        let biased = AmbiguitySet::new(vec![
            DiscreteMeasure::scalar(&[0.0, 1.0], &[0.5, 0.5]).unwrap(),
        ])
        .unwrap();
        assert!(StepFamily::new(biased).is_err());
    }

    #[test]
    fn dp_matches_exact_for_tanh() {
        let fam = rademacher_family();
        let phi = TestFunction::new("tanh(x)", 1.0, 1.0, f64::tanh);
        let grid = GridSpec::with_dx(0.002);
        let dp = value_dp(&fam, &phi, 1, &grid).unwrap();
        let exact = value_exact(&fam, |x| x.tanh(), 1).unwrap();
        assert!((dp - exact).abs() <= 1e-4, "{dp} vs {exact}");
    }

    #[test]
    fn dp_constant_is_constant() {
        let fam = rademacher_family();
        let phi = TestFunction::constant(-2.5);
        for dx in [0.1, 0.01] {
            let v = value_dp(&fam, &phi, 16, &GridSpec::with_dx(dx)).unwrap();
            assert!((v + 2.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn dp_respects_sup_bound_and_grid_floor() {
        let fam = rademacher_family();
        let phi = TestFunction::cosine();
        let v = value_dp(&fam, &phi, 64, &GridSpec::default()).unwrap();
        assert!(v.abs() <= 1.0 + 1e-9);
        // too-small grids are rejected
        let tiny = GridSpec {
            half_width: Some(3.0),
            dx: 0.01,
        };
        match value_dp(&fam, &phi, 4, &tiny) {
            Err(Error::Domain(_)) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn dp_is_monotone_in_phi() {
        let fam = rademacher_family();
        let lo = TestFunction::new("tanh", 1.0, 1.0, f64::tanh);
        let hi = TestFunction::new("tanh+gap", 1.2, 1.0, |x: f64| x.tanh() + 0.07);
        let grid = GridSpec::with_dx(0.02);
        let a = value_dp(&fam, &lo, 12, &grid).unwrap();
        let b = value_dp(&fam, &hi, 12, &grid).unwrap();
        assert!(a <= b + 1e-12);
    }

    #[test]
    fn convergence_table_shapes() {
        let fam = rademacher_family();
        let constant = TestFunction::constant(3.0);
        let t = convergence_table(
            &fam,
            &constant,
            &[1, 2, 4],
            &GridSpec::with_dx(0.05),
            EvalMode::Dp,
        )
        .unwrap();
        assert!(t.rows.iter().all(|r| r.delta == 0.0));

        let square = TestFunction::new("x^2", 100.0, 20.0, |x: f64| x * x);
        let t = convergence_table(
            &fam,
            &square,
            &[1, 2, 4, 8],
            &GridSpec::default(),
            EvalMode::Exact,
        )
        .unwrap();
        for r in &t.rows {
            assert!((r.value - 4.0).abs() <= 1e-10);
        }
        for r in &t.rows[1..] {
            assert!(r.delta <= 1e-10);
        }

        assert!(convergence_table(
            &fam,
            &constant,
            &[4, 4],
            &GridSpec::default(),
            EvalMode::Dp
        )
        .is_err());
        assert!(convergence_table(&fam, &constant, &[], &GridSpec::default(), EvalMode::Dp)
            .is_err());
    }

    #[test]
    fn generalized_pure_drift_maximal_distribution() {
        // steps carry no motion; drifts are the point masses 0 and 1
        let fam = DriftStepFamily::new(
            AmbiguitySet::new(vec![
                DiscreteMeasure::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap(),
                DiscreteMeasure::new(vec![vec![0.0, 1.0]], vec![1.0]).unwrap(),
            ])
            .unwrap(),
        )
        .unwrap();
        let phi = TestFunction::new("-(x-0.5)^2", 25.0, 12.0, |x: f64| -(x - 0.5) * (x - 0.5));
        let n = 64;
        let v = generalized_value_dp(&fam, &phi, n, &GridSpec::with_dx(0.005)).unwrap();
        // oracle: reachable means are k/n, and k = 32 hits 0.5 exactly
        let oracle = (0..=n)
            .map(|k| {
                let y = k as f64 / n as f64;
                -(y - 0.5) * (y - 0.5)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(oracle, 0.0);
        assert!((v - oracle).abs() <= 1e-3, "{v}");
    }

    #[test]
    fn generalized_degenerate_drift_reduces_to_dp() {
        let joint = DriftStepFamily::new(
            AmbiguitySet::new(vec![
                DiscreteMeasure::new(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5])
                    .unwrap(),
                DiscreteMeasure::new(vec![vec![-2.0, 0.0], vec![2.0, 0.0]], vec![0.5, 0.5])
                    .unwrap(),
            ])
            .unwrap(),
        )
        .unwrap();
        let marginal = rademacher_family();
        let phi = TestFunction::cosine();
        let grid = GridSpec {
            half_width: Some(default_half_width(&marginal) + 1.0),
            dx: 0.01,
        };
        let a = generalized_value_dp(&joint, &phi, 16, &grid).unwrap();
        let b = value_dp(&marginal, &phi, 16, &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generalized_constant() {
        let fam = DriftStepFamily::new(
            AmbiguitySet::new(vec![
                DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5])
                    .unwrap(),
            ])
            .unwrap(),
        )
        .unwrap();
        let v = generalized_value_dp(&fam, &TestFunction::constant(4.0), 8, &GridSpec::default())
            .unwrap();
        assert!((v - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn dp_value_is_sublinear_in_phi() {
        let fam = rademacher_family();
        let grid = GridSpec::with_dx(0.02);
        let phi = TestFunction::new("cos", 1.0, 1.0, f64::cos);
        let psi = TestFunction::new("sin(1.3x)", 1.0, 1.3, |x: f64| (1.3 * x).sin());
        let sum = TestFunction::new("cos+sin(1.3x)", 2.0, 2.3, |x: f64| {
            x.cos() + (1.3 * x).sin()
        });
        for n in [1, 4, 16] {
            let v_phi = value_dp(&fam, &phi, n, &grid).unwrap();
            let v_psi = value_dp(&fam, &psi, n, &grid).unwrap();
            let v_sum = value_dp(&fam, &sum, n, &grid).unwrap();
            assert!(v_sum <= v_phi + v_psi + 1e-9);
            for lambda in [0.0, 0.7, 2.0] {
                let scaled = TestFunction::new("l*cos", lambda, lambda, move |x: f64| {
                    lambda * x.cos()
                });
                let v_scaled = value_dp(&fam, &scaled, n, &grid).unwrap();
                assert!((v_scaled - lambda * v_phi).abs() <= 1e-9 * lambda.max(1.0));
            }
        }
    }

    #[test]
    fn domination_holds_on_random_bounded_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let fam = rademacher_family();
        let grid = GridSpec::with_dx(0.05);
        let mut pairs = Vec::new();
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(0.2..2.0));
            let (c, d): (f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(0.2..2.0));
            pairs.push((
                TestFunction::new("a cos(bx)", a.abs(), (a * b).abs(), move |x: f64| {
                    a * (b * x).cos()
                }),
                TestFunction::new("c sin(dx)", c.abs(), (c * d).abs(), move |x: f64| {
                    c * (d * x).sin()
                }),
            ));
        }
        let report = domination_check(&fam, &pairs, &[2, 8], &grid).unwrap();
        assert!(report.pass(), "violations: {:?}", report.violations);
        assert_eq!(report.checks, 400);
    }

    #[test]
    fn domination_identical_pair_and_cos() {
        let fam = rademacher_family();
        let grid = GridSpec::with_dx(0.02);
        let cos = TestFunction::cosine();
        let zero = TestFunction::constant(0.0);
        let report = domination_check(
            &fam,
            &[(cos.clone(), cos.clone()), (cos, zero)],
            &[2, 4, 8],
            &grid,
        )
        .unwrap();
        assert!(report.pass(), "violations: {:?}", report.violations);
        assert!((report.sup_diff[0]).abs() <= 1e-12);
    }

    #[test]
    fn diagonal_extract_examples() {
        // identical tables survive in full
        let t = vec![vec![0.5, 0.2]; 6];
        assert_eq!(diagonal_extract(&t, 0.1).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        // alternating tables split into clusters 3 eps apart
        let eps = 0.05;
        let a = vec![0.0, 1.0];
        let b = vec![3.0 * eps, 1.0 + 3.0 * eps];
        let t = vec![a.clone(), b.clone(), a.clone(), b.clone(), a, b];
        assert_eq!(diagonal_extract(&t, eps).unwrap(), vec![0, 2, 4]);
        // a single table keeps its only index
        assert_eq!(diagonal_extract(&[vec![1.0, 2.0]], 0.5).unwrap(), vec![0]);
        // errors
        assert!(diagonal_extract(&[], 0.5).is_err());
        assert!(diagonal_extract(&[vec![1.0]], 0.0).is_err());
        assert!(diagonal_extract(&[vec![1.0], vec![1.0, 2.0]], 0.5).is_err());
    }

    #[test]
    fn dictionary_shape_and_cutoff() {
        let radius = 5.0;
        let dict = dictionary_default(radius, 8).unwrap();
        assert_eq!(dict.len(), 9);
        for x in [-12.0, -3.0, 0.0, 4.9, 11.0] {
            assert_eq!(dict[0].eval(x), 1.0);
        }
        for f in &dict {
            assert!(f.sup_bound() <= 1.0 + 1e-12);
            for x in [-11.0, -6.4, -2.0, 0.7, 3.0, 9.9, 30.0] {
                assert!(f.eval(x).abs() <= 1.0 + 1e-12);
            }
        }
        assert_eq!(smooth_cutoff(2.0 * radius, radius), 0.0);
        assert_eq!(smooth_cutoff(radius, radius), 1.0);
        let mid = smooth_cutoff(1.5 * radius, radius);
        assert!((mid - (-1.0f64 / 3.0).exp()).abs() <= 1e-12);
        assert!(dictionary_default(0.0, 4).is_err());
        assert!(dictionary_default(1.0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exact_value_is_sublinear_in_phi(seed in 0u64..200, lambda in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fam = random_zero_mean_family(&mut rng, 2);
            let a = rng.gen_range(0.5..2.0);
            let b = rng.gen_range(0.5..2.0);
            let phi = move |x: f64| (a * x).cos();
            let psi = move |x: f64| (b * x).sin();
            let n = 3;
            let v_phi = value_exact(&fam, phi, n).unwrap();
            let v_psi = value_exact(&fam, psi, n).unwrap();
            let v_sum = value_exact(&fam, |x| phi(x) + psi(x), n).unwrap();
            prop_assert!(v_sum <= v_phi + v_psi + 1e-9);
            let v_scaled = value_exact(&fam, |x| lambda * phi(x), n).unwrap();
            prop_assert!((v_scaled - lambda * v_phi).abs() <= 1e-9 * lambda.max(1.0));
        }

        #[test]
        fn diagonal_output_always_meets_the_gap(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = rng.gen_range(2..10usize);
            let cols = rng.gen_range(1..5usize);
            let eps = rng.gen_range(0.05..0.5);
            let tables: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let kept = diagonal_extract(&tables, eps).unwrap();
            prop_assert!(!kept.is_empty());
            for j in 0..cols {
                for &a in &kept {
                    for &b in &kept {
                        prop_assert!((tables[a][j] - tables[b][j]).abs() <= eps + 1e-12);
                    }
                }
            }
        }
    }
}
