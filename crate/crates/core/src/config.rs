//! JSON run configuration: parsing, validation, canonical re-emission,
//! and realization into domain objects.
//!
//! Top-level keys: `family` (array of `{atoms: [[..]], weights: [..]}`),
//! `function` (expression string or `{builtin, params}`), `command`
//! (optional, must match the invoked subcommand) and `params`. Unknown
//! keys are rejected so typos fail fast with exit code 2.

use serde::{Deserialize, Serialize};

use crate::clt::{DriftStepFamily, StepFamily, TestFunction};
use crate::error::{Error, Result};
use crate::expr::{infer_bounds, parse_expr, BoundsOrigin, Expr, Func};
use crate::grid::GridSpec;
use crate::measures::{AmbiguitySet, DiscreteMeasure, Event, RandomVariable};
use crate::pde::{GParams1D, PdeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMeasure {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Expression(String),
    Builtin {
        builtin: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<BuiltinParams>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvent {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGParams {
    pub sigma_min_sq: f64,
    pub sigma_max_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPde {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<RawGParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionBounds {
    pub sup: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<RawGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<RawPde>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<RawEvent>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_bounds: Option<FunctionBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub family: Vec<RawMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<RawParams>,
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    raw: RawConfig,
    function: Option<(Expr, String)>,
}

/// Realized test function plus provenance of its bounds for manifests.
#[derive(Debug, Clone)]
pub struct BoundedFunction {
    pub function: TestFunction,
    pub source: String,
    pub sup: f64,
    pub lipschitz: f64,
    pub bounds_origin: &'static str,
    pub growth_detected: bool,
}

impl RunConfig {
    /// Parse and validate a JSON configuration.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let function = match &raw.function {
            None => None,
            Some(spec) => {
                let expr = realize_function(spec)?;
                let source = expr.to_string();
                Some((expr, source))
            }
        };
        let cfg = Self { raw, function };
        // realize the family eagerly so malformed measures fail at parse
        cfg.ambiguity_set()?;
        Ok(cfg)
    }

    /// Canonical JSON re-emission; parsing the result reproduces the same
    /// configuration.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.raw).expect("serializable config");
        text.push('\n');
        text
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    pub fn command(&self) -> Option<&str> {
        self.raw.command.as_deref()
    }

    pub fn params(&self) -> RawParams {
        self.raw.params.clone().unwrap_or_default()
    }

    pub fn ambiguity_set(&self) -> Result<AmbiguitySet> {
        let measures = self
            .raw
            .family
            .iter()
            .map(|m| DiscreteMeasure::new(m.atoms.clone(), m.weights.clone()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(e.to_string()))?;
        AmbiguitySet::new(measures).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn step_family(&self) -> Result<StepFamily> {
        StepFamily::new(self.ambiguity_set()?).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn drift_family(&self) -> Result<DriftStepFamily> {
        DriftStepFamily::new(self.ambiguity_set()?).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn expr(&self) -> Result<&Expr> {
        self.function
            .as_ref()
            .map(|(e, _)| e)
            .ok_or_else(|| Error::Config("this command needs a `function` entry".into()))
    }

    pub fn function_source(&self) -> Option<&str> {
        self.function.as_ref().map(|(_, s)| s.as_str())
    }

    /// The function as a random variable on a one-dimensional family.
    pub fn random_variable(&self) -> Result<RandomVariable> {
        let expr = self.expr()?.clone();
        let label = self.function_source().unwrap_or("f").to_string();
        Ok(RandomVariable::new(label, move |p: &[f64]| expr.eval(p[0])))
    }

    /// The function with sup/Lipschitz bounds attached, sampled on
    /// `radius` unless overridden by `params.function_bounds`.
    ///
    /// With `require_bounded`, functions whose sampled magnitude grows
    /// toward the window edge are rejected (grids clamp, which corrupts
    /// unbounded tails).
    pub fn bounded_function(&self, radius: f64, require_bounded: bool) -> Result<BoundedFunction> {
        let expr = self.expr()?.clone();
        let source = self.function_source().unwrap_or("f").to_string();
        let params = self.params();
        let (sup, lipschitz, origin, growth) = match params.function_bounds {
            Some(FunctionBounds { sup, lipschitz }) => {
                if !(sup >= 0.0) || !(lipschitz >= 0.0) {
                    return Err(Error::Config(
                        "function_bounds must be nonnegative".into(),
                    ));
                }
                (sup, lipschitz, "explicit", false)
            }
            None => {
                let b = infer_bounds(&expr, radius).map_err(|e| Error::Config(e.to_string()))?;
                let origin = match b.origin {
                    BoundsOrigin::Exact => "exact",
                    BoundsOrigin::Sampled => "sampled",
                };
                (b.sup, b.lipschitz, origin, b.growth_detected)
            }
        };
        if require_bounded && growth {
            return Err(Error::Config(format!(
                "`{source}` keeps growing on the sampling window and cannot be used \
                 in grid mode; clamp it, supply function_bounds, or use exact mode"
            )));
        }
        let f = TestFunction::new(source.clone(), sup, lipschitz, move |x| expr.eval(x));
        Ok(BoundedFunction {
            function: f,
            source,
            sup,
            lipschitz,
            bounds_origin: origin,
            growth_detected: growth,
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let params = self.params();
        let raw = params.grid.unwrap_or(RawGrid {
            half_width: None,
            dx: None,
        });
        let spec = GridSpec {
            half_width: raw.half_width,
            dx: raw.dx.unwrap_or(0.01),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    /// Variance/drift rectangle: explicit `params.pde.g` wins, otherwise
    /// derived from the (zero-mean) family.
    pub fn g_params(&self) -> Result<GParams1D> {
        let params = self.params();
        if let Some(raw) = params.pde.as_ref().and_then(|p| p.g.as_ref()) {
            return GParams1D::with_drift(
                raw.sigma_min_sq,
                raw.sigma_max_sq,
                raw.mu_min.unwrap_or(0.0),
                raw.mu_max.unwrap_or(0.0),
            )
            .map_err(|e| Error::Config(e.to_string()));
        }
        if self.params().drift.unwrap_or(false) {
            Ok(crate::pde::g_from_drift_family(&self.drift_family()?))
        } else {
            Ok(crate::pde::g_from_family(&self.step_family()?))
        }
    }

    /// Solver discretization; the half-width defaults to `default_half`
    /// rounded up to a whole number of `dx` cells.
    pub fn pde_config(&self, default_half: f64) -> Result<PdeConfig> {
        let params = self.params();
        let raw = params.pde.unwrap_or(RawPde {
            half_width: None,
            dx: None,
            t_final: None,
            gamma: None,
            snapshot_times: None,
            equation: None,
            g: None,
        });
        let dx = raw.dx.unwrap_or(0.01);
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::Config(format!("pde.dx must be positive, got {dx}")));
        }
        let half_width = raw
            .half_width
            .unwrap_or_else(|| snapped_half_width(default_half, dx));
        let t_final = raw.t_final.unwrap_or(1.0);
        let mut cfg = PdeConfig {
            half_width,
            dx,
            t_final,
            gamma: raw.gamma.unwrap_or(0.9),
            snapshot_times: raw.snapshot_times.unwrap_or_else(|| vec![t_final]),
        };
        if cfg.snapshot_times.is_empty() {
            cfg.snapshot_times = vec![t_final];
        }
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn events(&self) -> Result<Vec<(String, Event)>> {
        let params = self.params();
        let raws = params.events.unwrap_or_default();
        let mut events = Vec::with_capacity(raws.len());
        for raw in &raws {
            events.push(realize_event(raw)?);
        }
        Ok(events)
    }
}

/// Round `required` up to a whole number of `dx` cells so the node count
/// stays integral.
pub fn snapped_half_width(required: f64, dx: f64) -> f64 {
    (required / dx).ceil().max(2.0) * dx
}

fn realize_function(spec: &FunctionSpec) -> Result<Expr> {
    match spec {
        FunctionSpec::Expression(text) => {
            parse_expr(text).map_err(|e| Error::Config(e.to_string()))
        }
        FunctionSpec::Builtin { builtin, params } => {
            let func = match builtin.as_str() {
                "cos" => Func::Cos,
                "sin" => Func::Sin,
                "tanh" => Func::Tanh,
                "exp" => Func::Exp,
                other => {
                    return Err(Error::Config(format!(
                        "unknown builtin `{other}`; known: cos, sin, tanh, exp"
                    )))
                }
            };
            let amplitude = params.as_ref().and_then(|p| p.amplitude).unwrap_or(1.0);
            let frequency = params.as_ref().and_then(|p| p.frequency).unwrap_or(1.0);
            if !amplitude.is_finite() || !frequency.is_finite() {
                return Err(Error::Config("builtin params must be finite".into()));
            }
            let inner = Expr::Bin(
                crate::expr::BinOp::Mul,
                Box::new(Expr::Num(frequency)),
                Box::new(Expr::Var),
            );
            let call = Expr::Call(func, vec![inner]);
            Ok(Expr::Bin(
                crate::expr::BinOp::Mul,
                Box::new(Expr::Num(amplitude)),
                Box::new(call),
            ))
        }
    }
}

fn realize_event(raw: &RawEvent) -> Result<(String, Event)> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::Config(format!("event kind `{}` needs `{name}`", raw.kind)))
    };
    match raw.kind.as_str() {
        "norm_gt" => {
            let r = need(raw.r, "r")?;
            Ok((format!("|x| > {r}"), Event::norm_gt(r)))
        }
        "norm_ge" => {
            let r = need(raw.r, "r")?;
            Ok((format!("|x| >= {r}"), Event::norm_ge(r)))
        }
        "interval" => {
            let a = need(raw.a, "a")?;
            let b = need(raw.b, "b")?;
            if a > b {
                return Err(Error::Config(format!(
                    "interval event needs a <= b, got [{a}, {b}]"
                )));
            }
            Ok((
                format!("x in [{a}, {b}]"),
                Event::new(format!("x in [{a}, {b}]"), move |p: &[f64]| {
                    p[0] >= a && p[0] <= b
                }),
            ))
        }
        "expr_pos" => {
            let text = raw
                .expr
                .as_ref()
                .ok_or_else(|| Error::Config("event kind `expr_pos` needs `expr`".into()))?;
            let expr = parse_expr(text).map_err(|e| Error::Config(e.to_string()))?;
            Ok((
                format!("{expr} > 0"),
                Event::new(format!("{expr} > 0"), move |p: &[f64]| expr.eval(p[0]) > 0.0),
            ))
        }
        other => Err(Error::Config(format!(
            "unknown event kind `{other}`; known: norm_gt, norm_ge, interval, expr_pos"
        ))),
    }
}
