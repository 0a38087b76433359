use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]` shared by every coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::invalid(format!("invalid bounds ({lower}, {upper})")));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unit() -> Self {
        Bounds { lower: 0.0, upper: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    /// Maps `u` in [0,1] affinely onto the box.
    pub fn lerp(&self, u: f64) -> f64 {
        self.clamp(self.lower + u * self.width())
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lower..=self.upper).contains(&x)
    }
}

/// Evaluates `f` on every point in parallel, rejecting non-finite values.
pub(crate) fn evaluate_batch<F>(points: &[Vec<f64>], f: &F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    use rayon::prelude::*;
    let values: Vec<f64> = points.par_iter().map(|p| f(p)).collect();
    for (p, &v) in points.iter().zip(&values) {
        if !v.is_finite() {
            return Err(Error::NonFiniteFitness {
                value: v,
                candidate: format!("{p:?}"),
            });
        }
    }
    Ok(values)
}
