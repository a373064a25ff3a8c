//! Uniform 1-D value grids with clamped linear interpolation.

use crate::error::{Error, Result};

/// A uniform grid on `[x_min, x_max]` carrying function values.
///
/// Queries interpolate linearly between nodes; queries outside the span
/// clamp to the nearest boundary value, so every query returns a value
/// between the minimum and maximum stored value.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    x_min: f64,
    x_max: f64,
    dx: f64,
    values: Vec<f64>,
}

impl ValueGrid {
    /// Build a grid from its span and node values. Requires `x_min < x_max`,
    /// at least three nodes and finite values.
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        if !(x_min < x_max) {
            return Err(Error::Invalid {
                what: "ValueGrid",
                message: format!("x_min {x_min} must be below x_max {x_max}"),
            });
        }
        if values.len() < 3 {
            return Err(Error::Invalid {
                what: "ValueGrid",
                message: format!("need at least 3 nodes, got {}", values.len()),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid {
                what: "ValueGrid",
                message: format!("non-finite value {v} at node {i}"),
            });
        }
        let dx = (x_max - x_min) / (values.len() - 1) as f64;
        Ok(Self {
            x_min,
            x_max,
            dx,
            values,
        })
    }

    /// Grid with the given node count over `[x_min, x_max]`, filled by `f`.
    pub fn sample(x_min: f64, x_max: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = (x_max - x_min) / (nodes.saturating_sub(1).max(1)) as f64;
        let values: Vec<f64> = (0..nodes).map(|i| f(x_min + i as f64 * dx)).collect();
        Self::new(x_min, x_max, values)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinate of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    /// Clamped linear interpolation at `x`. Queries within 1e-9 grid
    /// units of a node return the node value exactly, so resampling a
    /// grid at its own nodes reproduces it bit for bit.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.x_min {
            return self.values[0];
        }
        if x >= self.x_max {
            return self.values[self.values.len() - 1];
        }
        let pos = (x - self.x_min) / self.dx;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return self.values[(nearest as usize).min(self.values.len() - 1)];
        }
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Largest magnitude among node values.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Discrete Lipschitz constant `max_i |v_{i+1} - v_i| / dx`.
    pub fn discrete_lipschitz(&self) -> f64 {
        self.values
            .windows(2)
            .fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs()))
            / self.dx
    }
}

/// Requested shape of a DP grid: half-width (defaulted by the caller when
/// absent) and spacing.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub half_width: Option<f64>,
    pub dx: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: None,
            dx: 0.01,
        }
    }
}

impl GridSpec {
    pub fn with_dx(dx: f64) -> Self {
        Self {
            half_width: None,
            dx,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0) || !self.dx.is_finite() {
            return Err(Error::Parameter(format!(
                "grid spacing must be positive and finite, got {}",
                self.dx
            )));
        }
        if let Some(h) = self.half_width {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::Parameter(format!(
                    "grid half-width must be positive and finite, got {h}"
                )));
            }
        }
        Ok(())
    }
}
