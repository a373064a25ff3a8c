//! Command implementations behind the `sublim` binary.
//!
//! Every command reads one JSON configuration (see [`crate::config`]),
//! writes deterministic output (reports to stdout, tables and plot data
//! to files under `params.output_dir`) and maps failures to exit codes:
//! 0 success, 1 property violation, 2 configuration error, 3 numeric
//! error.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clt::{
    self, dictionary_default, domination_check, ConvergenceRow, ConvergenceTable, EvalMode,
    StepFamily, TestFunction,
};
use crate::config::{snapped_half_width, RunConfig};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measures::{AmbiguitySet, Event, RandomVariable};
use crate::output;
use crate::pde::{self, GParams1D, PdeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Expect,
    Clt,
    Pde,
    Compare,
    Check,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Expect => "expect",
            CommandKind::Clt => "clt",
            CommandKind::Pde => "pde",
            CommandKind::Compare => "compare",
            CommandKind::Check => "check",
        }
    }
}

/// Entry point used by the binary: reads the config file, runs the
/// command against the current directory and stdout, and returns the
/// process exit code.
pub fn run(kind: CommandKind, config_path: &Path) -> i32 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("sublim: cannot read {}: {e}", config_path.display());
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(kind, &text, Path::new("."), &mut lock) {
        Ok(code) => code,
        // a closed pipe (e.g. piping into head) is not a failure
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("sublim: {e}");
            e.exit_code()
        }
    }
}

/// Run a command on already-loaded configuration text. Output files are
/// resolved against `base_dir`; the report stream goes to `out`.
pub fn execute(
    kind: CommandKind,
    config_text: &str,
    base_dir: &Path,
    out: &mut dyn Write,
) -> Result<i32> {
    let config = RunConfig::parse(config_text)?;
    if let Some(declared) = config.command() {
        if declared != kind.name() {
            return Err(Error::Config(format!(
                "config declares command `{declared}` but `{}` was invoked",
                kind.name()
            )));
        }
    }
    match kind {
        CommandKind::Expect => cmd_expect(&config, out),
        CommandKind::Clt => cmd_clt(&config, out),
        CommandKind::Pde => cmd_pde(&config, base_dir, out),
        CommandKind::Compare => cmd_compare(&config, base_dir, out),
        CommandKind::Check => cmd_check(&config, out),
    }
}

fn output_dir(config: &RunConfig, base_dir: &Path) -> Result<PathBuf> {
    let dir = base_dir.join(config.params().output_dir.unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// expect
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct UpperExpectationReport {
    value: f64,
    argmax_index: usize,
}

#[derive(Serialize)]
struct EventReport {
    event: String,
    capacity: f64,
    polar: bool,
}

#[derive(Serialize)]
struct TightnessReport {
    epsilon: f64,
    l: f64,
    radius: f64,
    moment: f64,
    verified: bool,
}

#[derive(Serialize)]
struct ExpectReport {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper_expectation: Option<UpperExpectationReport>,
    events: Vec<EventReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tightness: Option<TightnessReport>,
}

fn realize_events(config: &RunConfig, dim: usize) -> Result<Vec<(String, Event)>> {
    let events = config.events()?;
    if dim != 1 {
        for (label, _) in &events {
            if label.starts_with("x in") || label.ends_with("> 0") {
                return Err(Error::Config(format!(
                    "event `{label}` needs a one-dimensional family, got dimension {dim}"
                )));
            }
        }
    }
    Ok(events)
}

fn cmd_expect(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let family = config.ambiguity_set()?;
    let params = config.params();

    let upper = match config.function_source() {
        Some(_) => {
            if family.dim() != 1 {
                return Err(Error::Config(format!(
                    "expression functions need a one-dimensional family, got dimension {}",
                    family.dim()
                )));
            }
            let rv: RandomVariable = config.random_variable()?;
            let e = family.upper_expectation(&rv)?;
            Some(UpperExpectationReport {
                value: e.value,
                argmax_index: e.argmax,
            })
        }
        None => None,
    };

    let mut event_reports = Vec::new();
    for (label, event) in realize_events(config, family.dim())? {
        let capacity = family.capacity(&event);
        event_reports.push(EventReport {
            event: label,
            capacity,
            polar: capacity == 0.0,
        });
    }

    let tightness = match (params.epsilon, params.l) {
        (Some(epsilon), l) => {
            let l = l.unwrap_or(2.0);
            let cert = family.tightness_radius(epsilon, l)?;
            Some(TightnessReport {
                epsilon,
                l,
                radius: cert.radius,
                moment: cert.moment,
                verified: cert.verified,
            })
        }
        _ => None,
    };

    let report = ExpectReport {
        command: "expect",
        function: config.function_source().map(str::to_string),
        upper_expectation: upper,
        events: event_reports,
        tightness,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// clt
// ---------------------------------------------------------------------------

fn required_n_list(config: &RunConfig) -> Result<Vec<u32>> {
    config
        .params()
        .n_list
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::Config("this command needs a nonempty `params.n_list`".into()))
}

fn cmd_clt(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let params = config.params();
    let n_list = required_n_list(config)?;
    let grid = config.grid_spec()?;
    let mode = match params.mode.as_deref() {
        None | Some("dp") => EvalMode::Dp,
        Some("exact") => EvalMode::Exact,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown mode `{other}`; expected `dp` or `exact`"
            )))
        }
    };

    let table = if params.drift.unwrap_or(false) {
        if mode == EvalMode::Exact {
            return Err(Error::Config(
                "drift families are evaluated on grids; use mode `dp`".into(),
            ));
        }
        let family = config.drift_family()?;
        let radius = grid.half_width.unwrap_or_else(|| {
            6.0 * family.sigma_max_sq().sqrt() + family.set().max_atom_norm()
        });
        let phi = config.bounded_function(radius, true)?;
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(n_list.len());
        for &n in &n_list {
            let value = clt::generalized_value_dp(&family, &phi.function, n, &grid)?;
            let delta = rows.last().map(|r: &ConvergenceRow| (value - r.value).abs());
            rows.push(ConvergenceRow {
                n,
                value,
                delta: delta.unwrap_or(0.0),
            });
        }
        ConvergenceTable { rows }
    } else {
        let family = config.step_family()?;
        let radius = grid
            .half_width
            .unwrap_or_else(|| clt::default_half_width(&family));
        let phi = config.bounded_function(radius, mode == EvalMode::Dp)?;
        clt::convergence_table(&family, &phi.function, &n_list, &grid, mode)?
    };
    output::write_convergence_csv(out, &table)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// pde
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GReport {
    sigma_min_sq: f64,
    sigma_max_sq: f64,
    mu_min: f64,
    mu_max: f64,
}

#[derive(Serialize)]
struct GridReport {
    half_width: f64,
    dx: f64,
    dx_effective: f64,
    nodes: usize,
}

#[derive(Serialize)]
struct TimeReport {
    t_final: f64,
    dt: f64,
    steps: usize,
    gamma: f64,
}

#[derive(Serialize)]
struct FunctionReport {
    source: String,
    sup_bound: f64,
    lipschitz: f64,
    bounds_origin: &'static str,
}

#[derive(Serialize)]
struct SnapshotReport {
    index: usize,
    requested: f64,
    time: f64,
    file: String,
}

#[derive(Serialize)]
struct PdeManifest {
    command: &'static str,
    equation: &'static str,
    g: GReport,
    grid: GridReport,
    time: TimeReport,
    function: FunctionReport,
    threads: usize,
    snapshots: Vec<SnapshotReport>,
}

fn cmd_pde(config: &RunConfig, base_dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let params = config.params();
    let g = config.g_params()?;
    let equation = match params.pde.as_ref().and_then(|p| p.equation.as_deref()) {
        None | Some("gheat") => {
            if g.mu_min != 0.0 || g.mu_max != 0.0 {
                return Err(Error::Config(
                    "nonzero drift bounds need `pde.equation = \"ghjb\"`".into(),
                ));
            }
            "gheat"
        }
        Some("ghjb") => "ghjb",
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown equation `{other}`; expected `gheat` or `ghjb`"
            )))
        }
    };
    let default_half = 6.0 * g.sigma_max() + g.max_abs_drift();
    let cfg = config.pde_config(default_half)?;
    let phi = config.bounded_function(cfg.half_width, true)?;

    let solution = match equation {
        "gheat" => pde::solve_gheat(&g, &phi.function, &cfg)?,
        _ => pde::solve_ghjb(&g, &phi.function, &cfg)?,
    };

    let dir = output_dir(config, base_dir)?;
    let mut snapshot_reports = Vec::with_capacity(solution.snapshots.len());
    for (index, snap) in solution.snapshots.iter().enumerate() {
        let file = format!("snapshot_{index:02}.tsv");
        let mut buf = Vec::new();
        output::write_grid_tsv(&mut buf, &snap.grid)?;
        std::fs::write(dir.join(&file), buf)?;
        snapshot_reports.push(SnapshotReport {
            index,
            requested: snap.requested,
            time: snap.time,
            file,
        });
    }

    let manifest = PdeManifest {
        command: "pde",
        equation,
        g: GReport {
            sigma_min_sq: g.sigma_min_sq,
            sigma_max_sq: g.sigma_max_sq,
            mu_min: g.mu_min,
            mu_max: g.mu_max,
        },
        grid: GridReport {
            half_width: cfg.half_width,
            dx: cfg.dx,
            dx_effective: cfg.dx_effective(),
            nodes: cfg.nodes(),
        },
        time: TimeReport {
            t_final: cfg.t_final,
            dt: solution.dt,
            steps: solution.steps,
            gamma: cfg.gamma,
        },
        function: FunctionReport {
            source: phi.source.clone(),
            sup_bound: phi.sup,
            lipschitz: phi.lipschitz,
            bounds_origin: phi.bounds_origin,
        },
        threads: crate::parallel_thread_cap(),
        snapshots: snapshot_reports,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), format!("{manifest_json}\n"))?;
    writeln!(out, "{manifest_json}")?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

fn cmd_compare(config: &RunConfig, base_dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let family = config.step_family()?;
    let n_list = required_n_list(config)?;
    let grid = config.grid_spec()?;
    let radius = grid
        .half_width
        .unwrap_or_else(|| clt::default_half_width(&family));
    let phi = config.bounded_function(radius, true)?;

    let g = config.g_params()?;
    let pde_cfg = config.pde_config(radius)?;
    let reference = pde::gnormal_value(&g, &phi.function, &pde_cfg)?;

    let mut rows = Vec::with_capacity(n_list.len());
    for &n in &n_list {
        let dp = clt::value_dp(&family, &phi.function, n, &grid)?;
        rows.push((n, dp, reference, (dp - reference).abs()));
    }
    output::write_compare_csv(out, &rows)?;

    let dir = output_dir(config, base_dir)?;
    let mut buf = Vec::new();
    let errs: Vec<(u32, f64)> = rows.iter().map(|r| (r.0, r.3)).collect();
    output::write_loglog_tsv(&mut buf, &errs)?;
    std::fs::write(dir.join("compare_loglog.tsv"), buf)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

struct SuiteOutcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn random_function(rng: &mut ChaCha8Rng) -> RandomVariable {
    let a = rng.gen_range(-2.0..2.0);
    let b = rng.gen_range(0.2..2.0);
    let c = rng.gen_range(-3.0..3.0);
    let d = rng.gen_range(-2.0..2.0);
    let e = rng.gen_range(0.2..1.5);
    RandomVariable::new("random", move |p: &[f64]| {
        let x = p[0];
        a * (b * x + c).cos() + d * (e * x).tanh()
    })
}

fn random_event(rng: &mut ChaCha8Rng, scale: f64) -> Event {
    match rng.gen_range(0..3) {
        0 => Event::norm_gt(rng.gen_range(0.0..scale)),
        1 => Event::norm_ge(rng.gen_range(0.0..scale)),
        _ => {
            let a = rng.gen_range(-scale..scale);
            let b = rng.gen_range(-scale..scale);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            Event::new(format!("x in [{a}, {b}]"), move |p: &[f64]| {
                p[0] >= a && p[0] <= b
            })
        }
    }
}

fn suite_sublinearity(family: &AmbiguitySet, cases: u64, seed: u64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    for _ in 0..cases {
        let x = random_function(&mut rng);
        let y = random_function(&mut rng);
        let lambda = rng.gen_range(0.0..3.0);
        let c = rng.gen_range(-5.0..5.0);
        match family.verify_sublinearity(&x, &y, lambda, c) {
            Ok(report) if report.pass() => {}
            _ => failures += 1,
        }
    }
    SuiteOutcome {
        name: "sublinearity",
        pass: failures == 0,
        detail: format!("{cases} instances, {failures} failures"),
    }
}

fn suite_capacity(family: &AmbiguitySet, cases: u64, seed: u64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let scale = family.max_atom_norm() * 1.2 + 1.0;
    let mut failures = 0usize;
    for _ in 0..cases {
        let count = rng.gen_range(2..6usize);
        let events: Vec<Event> = (0..count).map(|_| random_event(&mut rng, scale)).collect();
        let laws_ok = family
            .capacity_properties_check(&events)
            .map(|r| r.pass)
            .unwrap_or(false);
        let caps: Vec<f64> = events.iter().map(|e| family.capacity(e)).collect();
        let tails_ok = match family.borel_cantelli_tail(&events) {
            Ok(tails) => {
                let mut ok = tails.windows(2).all(|w| w[1] <= w[0] + 1e-12);
                for n in 0..tails.len() {
                    let bound: f64 = caps[n..].iter().sum();
                    ok &= tails[n] <= bound + 1e-12;
                }
                ok
            }
            Err(_) => false,
        };
        if !(laws_ok && tails_ok) {
            failures += 1;
        }
    }
    SuiteOutcome {
        name: "capacity",
        pass: failures == 0,
        detail: format!("{cases} instances, {failures} failures"),
    }
}

fn suite_semigroup(g: &GParams1D, cfg: &PdeConfig) -> SuiteOutcome {
    let phi = TestFunction::cosine();
    let checks = [(0.5, 0.5), (0.36, 0.64)];
    let mut worst = 0.0f64;
    let mut failed = false;
    for (t, s) in checks {
        match pde::semigroup_check(g, &phi, t, s, cfg) {
            Ok(r) => worst = worst.max(r),
            Err(_) => failed = true,
        }
    }
    // the scaling identity must agree with the semigroup relation bit
    // for bit
    let half = 0.5f64.sqrt();
    let agree = match (
        pde::stability_check(g, &phi, half, half, cfg),
        pde::semigroup_check(g, &phi, half * half, half * half, cfg),
    ) {
        (Ok(a), Ok(b)) => a.to_bits() == b.to_bits(),
        _ => false,
    };
    SuiteOutcome {
        name: "semigroup",
        pass: !failed && agree && worst <= 5e-3,
        detail: format!("max residual {}", output::fmt_sig(worst, 6)),
    }
}

fn suite_holder(g: &GParams1D, cfg: &PdeConfig) -> SuiteOutcome {
    let phi = TestFunction::cosine();
    let mut failures = 0usize;
    let mut worst_ratio = 0.0f64;
    for s in [0.01, 0.04, 0.25] {
        match pde::time_holder_check(g, &phi, 0.5, s, cfg) {
            Ok(hc) => {
                if !hc.pass {
                    failures += 1;
                }
                worst_ratio = worst_ratio.max(hc.lhs / (hc.bound + hc.slack));
            }
            Err(_) => failures += 1,
        }
    }
    SuiteOutcome {
        name: "holder",
        pass: failures == 0,
        detail: format!("worst lhs/bound {}", output::fmt_sig(worst_ratio, 6)),
    }
}

fn suite_domination(
    family: &StepFamily,
    grid: &GridSpec,
    n_list: &[u32],
    dict_radius: f64,
    dict_count: usize,
) -> SuiteOutcome {
    let dict = match dictionary_default(dict_radius, dict_count) {
        Ok(d) => d,
        Err(e) => {
            return SuiteOutcome {
                name: "domination",
                pass: false,
                detail: e.to_string(),
            }
        }
    };
    let take = dict.len().min(4);
    let mut pairs = Vec::new();
    for i in 0..take {
        for j in 0..take {
            if i != j {
                pairs.push((dict[i].clone(), dict[j].clone()));
            }
        }
    }
    match domination_check(family, &pairs, n_list, grid) {
        Ok(report) => SuiteOutcome {
            name: "domination",
            pass: report.pass(),
            detail: format!(
                "{} checks, {} violations",
                report.checks,
                report.violations.len()
            ),
        },
        Err(e) => SuiteOutcome {
            name: "domination",
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn cmd_check(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let params = config.params();
    let family = config.step_family()?;
    let cases = params.cases.unwrap_or(200);
    let seed = params.seed.unwrap_or(0);

    let g = config.g_params()?;
    if g.mu_min != 0.0 || g.mu_max != 0.0 {
        return Err(Error::Config(
            "check runs the zero-drift suites; drop the drift bounds".into(),
        ));
    }
    // coarser default spacing than the solvers: five suites run back to
    // back
    let mut pde_params = params.pde.clone().unwrap_or(crate::config::RawPde {
        half_width: None,
        dx: None,
        t_final: None,
        gamma: None,
        snapshot_times: None,
        equation: None,
        g: None,
    });
    pde_params.dx.get_or_insert(0.05);
    pde_params.t_final.get_or_insert(1.0);
    let dx = pde_params.dx.unwrap();
    let half = pde_params
        .half_width
        .unwrap_or_else(|| snapped_half_width(6.0 * g.sigma_max() + family.max_atom_abs(), dx));
    let pde_cfg = PdeConfig {
        half_width: half,
        dx,
        t_final: pde_params.t_final.unwrap(),
        gamma: pde_params.gamma.unwrap_or(0.9),
        snapshot_times: vec![pde_params.t_final.unwrap()],
    };
    pde_cfg.validate().map_err(|e| Error::Config(e.to_string()))?;

    let mut grid = config.grid_spec()?;
    if grid.half_width.is_none() {
        grid.dx = params.grid.as_ref().and_then(|g| g.dx).unwrap_or(0.02);
    }
    let n_list = params.n_list.unwrap_or_else(|| vec![2, 4, 8]);
    let dict_radius = params.dictionary_radius.unwrap_or(5.0);
    let dict_count = params.dictionary.unwrap_or(4);

    let outcomes = vec![
        suite_sublinearity(family.set(), cases, seed),
        suite_capacity(family.set(), cases, seed),
        suite_semigroup(&g, &pde_cfg),
        suite_holder(&g, &pde_cfg),
        suite_domination(&family, &grid, &n_list, dict_radius, dict_count),
    ];

    let mut violations = 0usize;
    for o in &outcomes {
        writeln!(
            out,
            "check {}: {} ({})",
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        )?;
        if !o.pass {
            violations += 1;
        }
    }
    Ok(if violations > 0 { 1 } else { 0 })
}
