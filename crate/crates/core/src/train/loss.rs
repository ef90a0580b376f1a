//! Loss terms. Every term reduces to a real scalar on the tape.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomFn, Var, C64};
use crate::error::{Error, Result};
use crate::modules::Ctx;
use crate::system::System;

/// `mean((|H| − 1)²)` over every element of `h`.
pub fn spectral_flatness<'t>(h: Var<'t>) -> Result<Var<'t>> {
    Ok(h.abs().add_scalar(-1.0)?.abs2().mean())
}

/// `mean(|y − t|²)`.
pub fn mse<'t>(y: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    Ok(y.sub(target)?.abs2().mean())
}

/// Gain-uniformity penalty `1 − ‖v‖₁ / (√n ‖v‖₂)` of a vector.
///
/// It is 0 when all `|vᵢ|` are equal and grows to `1 − 1/√n` for a one-hot
/// vector, independent of the overall scale.
pub fn sparsity<'t>(v: Var<'t>) -> Result<Var<'t>> {
    let n = v.with_value(|a| a.len());
    let l2sq = v.with_value(|a| a.data().iter().map(|z| z.norm_sqr()).sum::<f64>());
    if !(l2sq > 0.0) {
        return Err(Error::Domain("sparsity penalty of a zero vector".into()));
    }
    let l1 = v.abs().sum();
    let l2 = v.abs2().sum().sqrt();
    let ratio = l1.div(l2.scale_real((n as f64).sqrt()))?;
    ratio.neg().add_scalar(1.0)
}

/// `mean(relu(|H| − limit)²)`.
pub fn max_magnitude<'t>(h: Var<'t>, limit: f64) -> Result<Var<'t>> {
    let relu = CustomFn {
        name: "relu",
        f: Arc::new(|z: C64| C64::new(z.re.max(0.0), 0.0)),
        df: Arc::new(|z: C64| C64::new(if z.re > 0.0 { 1.0 } else { 0.0 }, 0.0)),
    };
    Ok(h.abs().add_scalar(-limit)?.custom(relu).abs2().mean())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossKind {
    /// Flatness of the shell output magnitudes.
    SpectralFlatness,
    /// Squared error against the dataset target.
    Mse,
    /// Uniformity of the values of frequency-independent modules. Vectors
    /// count once; matrices contribute one penalty per row.
    Sparsity {
        modules: Vec<String>,
    },
    MaxMagnitude {
        limit: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub name: String,
    pub weight: f64,
    #[serde(flatten)]
    pub kind: LossKind,
}

impl LossTerm {
    pub fn new(name: &str, weight: f64, kind: LossKind) -> Self {
        Self {
            name: name.into(),
            weight,
            kind,
        }
    }

    /// True for terms that depend on the processed output rather than only
    /// on parameters.
    pub fn uses_output(&self) -> bool {
        !matches!(self.kind, LossKind::Sparsity { .. })
    }

    /// Evaluates the term on one output; `target` is required for MSE.
    pub fn on_output<'t>(&self, y: Var<'t>, target: Option<Var<'t>>) -> Result<Var<'t>> {
        match &self.kind {
            LossKind::SpectralFlatness => spectral_flatness(y),
            LossKind::Mse => {
                let t = target.ok_or_else(|| Error::Config(format!("loss '{}' needs a target", self.name)))?;
                mse(y, t)
            }
            LossKind::MaxMagnitude { limit } => max_magnitude(y, *limit),
            LossKind::Sparsity { .. } => Err(Error::Config(format!("loss '{}' does not use outputs", self.name))),
        }
    }

    /// Evaluates a parameter-only term.
    pub fn on_params<'t>(&self, ctx: &Ctx<'t>, system: &System) -> Result<Var<'t>> {
        let LossKind::Sparsity { modules } = &self.kind else {
            return Err(Error::Config(format!("loss '{}' needs outputs", self.name)));
        };
        let mut acc: Option<Var<'t>> = None;
        for name in modules {
            let m = system
                .find(name)
                .ok_or_else(|| Error::Config(format!("loss '{}': no module named '{name}'", self.name)))?;
            if !m.frequency_independent() {
                return Err(Error::Config(format!(
                    "loss '{}': module '{name}' is frequency dependent",
                    self.name
                )));
            }
            let r = m.response_compact(ctx)?;
            let n = r.with_value(|a| a.len());
            let (rows, cols) = if m.is_parallel() || m.n_in() == 1 || m.n_out() == 1 {
                (1, n)
            } else {
                (m.n_out(), m.n_in())
            };
            let r = r.reshape(&[rows, cols])?;
            for i in 0..rows {
                let p = sparsity(r.slice(0, i, 1)?)?;
                acc = Some(match acc {
                    Some(a) => a.add(p)?,
                    None => p,
                });
            }
        }
        acc.ok_or_else(|| Error::Config(format!("loss '{}' lists no modules", self.name)))
    }
}
