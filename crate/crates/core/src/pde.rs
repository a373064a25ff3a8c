//! The G-function and monotone explicit finite-difference solvers for the
//! fully nonlinear heat equation `du/dt = G(D2u)` and its drift-extended
//! form `du/dt = G(Du, D2u)`.
//!
//! In one dimension `G(a) = (sigma_max^2 a^+ - sigma_min^2 a^-) / 2`, so
//! each explicit step applies the worst-case diffusion coefficient
//! nodewise. Under the CFL bounds used here every update is a convex
//! combination of stencil values: the scheme is monotone, satisfies the
//! discrete maximum principle exactly, and converges to the viscosity
//! solution. The value `u(1, 0)` is the G-normal expectation that the
//! `clt` evaluators approach as the step count grows.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::clt::{DriftStepFamily, StepFamily, TestFunction};
use crate::error::{Error, Result};
use crate::grid::ValueGrid;
use crate::measures::AmbiguitySet;
use crate::parallel;

/// Variance and drift rectangles backing the one-dimensional G-function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GParams1D {
    pub sigma_min_sq: f64,
    pub sigma_max_sq: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl GParams1D {
    /// Pure volatility uncertainty, zero drift.
    pub fn new(sigma_min_sq: f64, sigma_max_sq: f64) -> Result<Self> {
        Self::with_drift(sigma_min_sq, sigma_max_sq, 0.0, 0.0)
    }

    pub fn with_drift(
        sigma_min_sq: f64,
        sigma_max_sq: f64,
        mu_min: f64,
        mu_max: f64,
    ) -> Result<Self> {
        let invalid = |message: String| Error::Invalid {
            what: "GParams1D",
            message,
        };
        if !(sigma_min_sq >= 0.0) || !sigma_min_sq.is_finite() {
            return Err(invalid(format!(
                "sigma_min_sq must be finite and >= 0, got {sigma_min_sq}"
            )));
        }
        if !(sigma_max_sq >= sigma_min_sq) || !sigma_max_sq.is_finite() {
            return Err(invalid(format!(
                "sigma_max_sq must be finite and >= sigma_min_sq, got {sigma_max_sq}"
            )));
        }
        if !(sigma_max_sq > 0.0) {
            return Err(invalid("sigma_max_sq must be positive".into()));
        }
        if !(mu_min <= mu_max) || !mu_min.is_finite() || !mu_max.is_finite() {
            return Err(invalid(format!(
                "drift interval [{mu_min}, {mu_max}] is not ordered and finite"
            )));
        }
        Ok(Self {
            sigma_min_sq,
            sigma_max_sq,
            mu_min,
            mu_max,
        })
    }

    /// `G(a) = (sigma_max^2 a^+ - sigma_min^2 a^-) / 2`: positively
    /// homogeneous and subadditive in `a`.
    pub fn evaluate(&self, a: f64) -> f64 {
        if a >= 0.0 {
            0.5 * self.sigma_max_sq * a
        } else {
            0.5 * self.sigma_min_sq * a
        }
    }

    /// Rectangle form of the drift-extended G-function:
    /// `max_{mu} mu p + G(a)` over the drift interval.
    pub fn evaluate_drift(&self, p: f64, a: f64) -> f64 {
        let drift = if p >= 0.0 {
            self.mu_max * p
        } else {
            self.mu_min * p
        };
        drift + self.evaluate(a)
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max_sq.sqrt()
    }

    pub fn max_abs_drift(&self) -> f64 {
        self.mu_min.abs().max(self.mu_max.abs())
    }
}

/// Variance bounds induced by a zero-mean step family.
pub fn g_from_family(family: &StepFamily) -> GParams1D {
    GParams1D {
        sigma_min_sq: family.sigma_min_sq(),
        sigma_max_sq: family.sigma_max_sq(),
        mu_min: 0.0,
        mu_max: 0.0,
    }
}

/// Variance and drift rectangles induced by a joint (step, drift) family.
///
/// The rectangle decouples the drift interval from the variance interval,
/// so it dominates the joint supremum over correlated members; use
/// [`gp_eval_family`] for the exact family form.
pub fn g_from_drift_family(family: &DriftStepFamily) -> GParams1D {
    let variances = family.step_variances();
    let means = family.drift_means();
    GParams1D {
        sigma_min_sq: variances.iter().cloned().fold(f64::INFINITY, f64::min),
        sigma_max_sq: variances.iter().cloned().fold(0.0, f64::max),
        mu_min: means.iter().cloned().fold(f64::INFINITY, f64::min),
        mu_max: means.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Family form of the drift-extended G-function:
/// `max_theta (p mean_Y(theta) + a var_X(theta) / 2)`.
///
/// Never exceeds the rectangle form [`GParams1D::evaluate_drift`].
pub fn gp_eval_family(family: &DriftStepFamily, p: f64, a: f64) -> f64 {
    family
        .drift_means()
        .iter()
        .zip(family.step_variances())
        .map(|(mean_y, var_x)| p * mean_y + 0.5 * a * var_x)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Multi-dimensional G evaluation in trace form:
/// `G(A) = max_theta tr(A Sigma_theta) / 2` over the member covariance
/// matrices. Provided as a pure function; the solvers stay
/// one-dimensional.
pub fn g_trace(set: &AmbiguitySet, a: &[Vec<f64>]) -> Result<f64> {
    let d = set.dim();
    if a.len() != d || a.iter().any(|row| row.len() != d) {
        return Err(Error::Parameter(format!(
            "matrix must be {d} x {d} to match the family dimension"
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for m in set.measures() {
        let mean = m.mean();
        // tr(A Sigma) = sum_{jk} A[j][k] Sigma[k][j]
        let mut trace = 0.0;
        for j in 0..d {
            for k in 0..d {
                let mut cov = 0.0;
                for (atom, w) in m.atoms().iter().zip(m.weights()) {
                    cov += w * (atom[k] - mean[k]) * (atom[j] - mean[j]);
                }
                trace += a[j][k] * cov;
            }
        }
        best = best.max(0.5 * trace);
    }
    Ok(best)
}

/// Spatial/temporal discretization of a solver run.
#[derive(Debug, Clone)]
pub struct PdeConfig {
    pub half_width: f64,
    pub dx: f64,
    pub t_final: f64,
    pub gamma: f64,
    pub snapshot_times: Vec<f64>,
}

impl PdeConfig {
    pub fn new(half_width: f64, dx: f64, t_final: f64) -> Result<Self> {
        let cfg = Self {
            half_width,
            dx,
            t_final,
            gamma: 0.9,
            snapshot_times: vec![t_final],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Result<Self> {
        self.snapshot_times = times;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::Invalid {
            what: "PdeConfig",
            message,
        };
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(invalid(format!(
                "half-width must be positive, got {}",
                self.half_width
            )));
        }
        if !(self.dx > 0.0) || !self.dx.is_finite() {
            return Err(invalid(format!("dx must be positive, got {}", self.dx)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(invalid(format!(
                "t_final must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        let ratio = 2.0 * self.half_width / self.dx;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(invalid(format!(
                "node count 2L/dx + 1 must be an integer; 2L/dx = {ratio}"
            )));
        }
        if ratio.round() < 2.0 {
            return Err(invalid("need at least 3 nodes".into()));
        }
        for &t in &self.snapshot_times {
            if !(t >= 0.0) || t > self.t_final + 1e-9 {
                return Err(invalid(format!(
                    "snapshot time {t} outside [0, {}]",
                    self.t_final
                )));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        (2.0 * self.half_width / self.dx).round() as usize + 1
    }

    /// Effective spacing consistent with the rounded node count.
    pub fn dx_effective(&self) -> f64 {
        2.0 * self.half_width / (self.nodes() - 1) as f64
    }
}

/// One stored time slice.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Time actually reached (the nearest completed step).
    pub time: f64,
    /// Time that was requested.
    pub requested: f64,
    pub grid: ValueGrid,
}

/// A solver run: initial bounds plus the requested snapshots in time
/// order.
#[derive(Debug, Clone)]
pub struct Solution {
    pub sup_bound: f64,
    pub dt: f64,
    pub steps: usize,
    pub snapshots: Vec<Snapshot>,
}

impl Solution {
    /// Final stored slice.
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("at least one snapshot")
    }
}

enum Scheme {
    Heat(GParams1D),
    Hjb(GParams1D),
}

impl Scheme {
    fn dt(&self, dx: f64, gamma: f64) -> f64 {
        match self {
            Scheme::Heat(g) => gamma * dx * dx / g.sigma_max_sq,
            Scheme::Hjb(g) => {
                let mu = g.max_abs_drift();
                if mu == 0.0 {
                    gamma * dx * dx / g.sigma_max_sq
                } else {
                    gamma / (g.sigma_max_sq / (dx * dx) + mu / dx)
                }
            }
        }
    }

    /// One monotone explicit step on the interior, then copy-neighbor
    /// boundaries (zero second difference, zero outward upwind gradient).
    fn step(&self, u: &[f64], dt: f64, dx: f64, out: &mut [f64]) {
        let n = u.len();
        let dx_sq = dx * dx;
        match self {
            Scheme::Heat(g) => {
                let g = *g;
                parallel::fill_indexed(&mut out[1..n - 1], |j| {
                    let i = j + 1;
                    let second = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / dx_sq;
                    u[i] + dt * g.evaluate(second)
                });
            }
            Scheme::Hjb(g) => {
                let g = *g;
                let controls = [
                    (g.mu_min, g.sigma_min_sq),
                    (g.mu_min, g.sigma_max_sq),
                    (g.mu_max, g.sigma_min_sq),
                    (g.mu_max, g.sigma_max_sq),
                ];
                parallel::fill_indexed(&mut out[1..n - 1], |j| {
                    let i = j + 1;
                    let second = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / dx_sq;
                    let forward = (u[i + 1] - u[i]) / dx;
                    let backward = (u[i] - u[i - 1]) / dx;
                    let mut best = f64::NEG_INFINITY;
                    for (mu, sigma_sq) in controls {
                        let drift = if mu > 0.0 {
                            mu * forward
                        } else if mu < 0.0 {
                            mu * backward
                        } else {
                            0.0
                        };
                        let v = drift + 0.5 * sigma_sq * second;
                        if v > best {
                            best = v;
                        }
                    }
                    u[i] + dt * best
                });
            }
        }
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
}

fn run_scheme(scheme: &Scheme, phi: &TestFunction, config: &PdeConfig) -> Result<Solution> {
    config.validate()?;
    let nodes = config.nodes();
    let dx = config.dx_effective();
    let x_min = -config.half_width;
    let dt = scheme.dt(dx, config.gamma);

    let sup = phi.sup_bound();
    let mut u: Vec<f64> = (0..nodes).map(|i| phi.eval(x_min + i as f64 * dx)).collect();
    for (i, v) in u.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "initial function evaluates to {v} at x = {}",
                x_min + i as f64 * dx
            )));
        }
        if v.abs() > sup * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Parameter(format!(
                "initial function violates its sup bound {sup} at x = {}",
                x_min + i as f64 * dx
            )));
        }
    }

    let steps = (config.t_final / dt).round() as usize;
    let snap_steps: BTreeSet<usize> = config
        .snapshot_times
        .iter()
        .map(|&t| ((t / dt).round() as usize).min(steps))
        .collect();

    let mut snapshots = Vec::with_capacity(snap_steps.len());
    let mut record = |step: usize, values: &[f64]| -> Result<()> {
        let time = step as f64 * dt;
        let requested = config
            .snapshot_times
            .iter()
            .cloned()
            .min_by(|a, b| {
                ((a / dt).round() as usize)
                    .abs_diff(step)
                    .cmp(&((b / dt).round() as usize).abs_diff(step))
            })
            .unwrap_or(time);
        let grid = ValueGrid::new(x_min, config.half_width, values.to_vec())?;
        if grid.sup_norm() > sup * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Numeric(format!(
                "maximum principle violated at step {step}"
            )));
        }
        snapshots.push(Snapshot {
            time,
            requested,
            grid,
        });
        Ok(())
    };

    let need_final = snap_steps.is_empty();
    if snap_steps.contains(&0) {
        record(0, &u)?;
    }
    let mut scratch = vec![0.0; nodes];
    for step in 1..=steps {
        scheme.step(&u, dt, dx, &mut scratch);
        std::mem::swap(&mut u, &mut scratch);
        if step % 1024 == 0 && !u[nodes / 2].is_finite() {
            return Err(Error::Numeric(format!("non-finite value at step {step}")));
        }
        if snap_steps.contains(&step) {
            record(step, &u)?;
        }
    }
    if need_final {
        record(steps, &u)?;
    }
    Ok(Solution {
        sup_bound: sup,
        dt,
        steps,
        snapshots,
    })
}

/// Solve `du/dt = G(D2u)` with initial data `phi` by the explicit
/// monotone scheme with copy-neighbor boundaries. Requires zero drift.
pub fn solve_gheat(g: &GParams1D, phi: &TestFunction, config: &PdeConfig) -> Result<Solution> {
    if g.mu_min != 0.0 || g.mu_max != 0.0 {
        return Err(Error::Parameter(
            "solve_gheat requires a zero drift rectangle; use solve_ghjb".into(),
        ));
    }
    run_scheme(&Scheme::Heat(*g), phi, config)
}

/// Solve `du/dt = G(Du, D2u)` with corner controls
/// `(mu, sigma^2) in {mu_min, mu_max} x {sigma_min^2, sigma_max^2}` and
/// upwinded first differences.
pub fn solve_ghjb(g: &GParams1D, phi: &TestFunction, config: &PdeConfig) -> Result<Solution> {
    run_scheme(&Scheme::Hjb(*g), phi, config)
}

fn evolve(g: &GParams1D, phi: &TestFunction, time: f64, config: &PdeConfig) -> Result<ValueGrid> {
    if time <= 0.0 {
        let nodes = config.nodes();
        let dx = config.dx_effective();
        let values = (0..nodes)
            .map(|i| phi.eval(-config.half_width + i as f64 * dx))
            .collect();
        return ValueGrid::new(-config.half_width, config.half_width, values);
    }
    let mut cfg = config.clone();
    cfg.t_final = time;
    cfg.snapshot_times = vec![time];
    Ok(solve_gheat(g, phi, &cfg)?.last().grid.clone())
}

fn grid_function(phi: &TestFunction, grid: ValueGrid) -> TestFunction {
    let grid = Arc::new(grid);
    TestFunction::new(
        format!("evolved({})", phi.label()),
        phi.sup_bound(),
        phi.lipschitz(),
        move |x| grid.eval(x),
    )
}

/// Residual of the flow property: the largest gap over interior nodes
/// (`|x| <= L/2`) between evolving by `s` then `t` and evolving by
/// `t + s` directly.
pub fn semigroup_check(
    g: &GParams1D,
    phi: &TestFunction,
    t: f64,
    s: f64,
    config: &PdeConfig,
) -> Result<f64> {
    if !(t >= 0.0) || !(s >= 0.0) {
        return Err(Error::Parameter(format!(
            "times must be nonnegative, got t = {t}, s = {s}"
        )));
    }
    if t + s > config.t_final + 1e-9 {
        return Err(Error::Parameter(format!(
            "t + s = {} exceeds the configured horizon {}",
            t + s,
            config.t_final
        )));
    }
    let after_s = evolve(g, phi, s, config)?;
    let two_leg = evolve(g, &grid_function(phi, after_s), t, config)?;
    let direct = evolve(g, phi, t + s, config)?;
    let mut residual = 0.0f64;
    for i in 0..two_leg.len() {
        if two_leg.node(i).abs() <= config.half_width / 2.0 + 1e-12 {
            residual = residual.max((two_leg.values()[i] - direct.values()[i]).abs());
        }
    }
    Ok(residual)
}

/// Distributional stability of the G-normal law: scaling by `(a, b)` is
/// the semigroup relation at times `(a^2, b^2)`, so this delegates to
/// [`semigroup_check`] and returns the identical residual.
pub fn stability_check(
    g: &GParams1D,
    phi: &TestFunction,
    a: f64,
    b: f64,
    config: &PdeConfig,
) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(Error::Parameter(format!(
            "coefficients must be nonnegative, got a = {a}, b = {b}"
        )));
    }
    if a * a + b * b > config.t_final + 1e-9 {
        return Err(Error::Parameter(format!(
            "a^2 + b^2 = {} exceeds the configured horizon {}",
            a * a + b * b,
            config.t_final
        )));
    }
    semigroup_check(g, phi, a * a, b * b, config)
}

/// Measured time regularity against the square-root-of-time bound.
#[derive(Debug, Clone, Copy)]
pub struct HolderCheck {
    /// `max interior |u(t + s, x) - u(t, x)|`.
    pub lhs: f64,
    /// `Lip(phi) * sigma_max * sqrt(s)`.
    pub bound: f64,
    /// Discretization headroom `10 dx Lip(phi)`.
    pub slack: f64,
    pub pass: bool,
}

/// Check `|u(t + s, .) - u(t, .)| <= Lip(phi) sigma_max sqrt(s)` on the
/// interior, with discretization slack.
pub fn time_holder_check(
    g: &GParams1D,
    phi: &TestFunction,
    t: f64,
    s: f64,
    config: &PdeConfig,
) -> Result<HolderCheck> {
    if !(s > 0.0) {
        return Err(Error::Parameter(format!("s must be positive, got {s}")));
    }
    if !(t >= 0.0) || t + s > config.t_final + 1e-9 {
        return Err(Error::Parameter(format!(
            "need 0 <= t and t + s <= {}, got t = {t}, s = {s}",
            config.t_final
        )));
    }
    let mut cfg = config.clone();
    cfg.t_final = t + s;
    cfg.snapshot_times = vec![t, t + s];
    let solution = solve_gheat(g, phi, &cfg)?;
    let early = &solution.snapshots.first().expect("snapshot").grid;
    let late = &solution.last().grid;
    let mut lhs = 0.0f64;
    for i in 0..early.len() {
        if early.node(i).abs() <= config.half_width / 2.0 + 1e-12 {
            lhs = lhs.max((late.values()[i] - early.values()[i]).abs());
        }
    }
    let bound = phi.lipschitz() * g.sigma_max() * s.sqrt();
    let slack = 10.0 * config.dx_effective() * phi.lipschitz();
    Ok(HolderCheck {
        lhs,
        bound,
        slack,
        pass: lhs <= bound + slack,
    })
}

/// Reference G-normal expectation of `phi`: the solution of the G-heat
/// equation at time 1, read off at the origin.
pub fn gnormal_value(g: &GParams1D, phi: &TestFunction, config: &PdeConfig) -> Result<f64> {
    let grid = evolve(g, phi, 1.0, config)?;
    Ok(grid.eval(0.0))
}
