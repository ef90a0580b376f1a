//! Parametric filters whose mappings keep every pole inside the unit circle.

mod biquad;
mod geq;
mod svf;

/// Second-order section `(b, a)`.
pub type Sos = ([f64; 3], [f64; 3]);

pub use biquad::{biquad_coeffs, Biquad, BiquadKind};
pub use geq::{geq_design, Geq, GeqDesign, GeqResolution};
pub use svf::{Svf, SvfMode};

use crate::autodiff::Var;
use crate::error::{Error, Result};

/// Per-band attenuation in dB for a delay line of `m` samples so that the
/// line decays by 60 dB over each band's T60: `−60·m / (T60·fs)`.
/// An infinite T60 gives 0 dB.
pub fn t60_to_band_gains(t60: &[f64], m: f64, fs: f64) -> Result<Vec<f64>> {
    if !(fs > 0.0) || !(m >= 0.0) {
        return Err(Error::Domain(format!("need fs > 0 and m ≥ 0, got fs = {fs}, m = {m}")));
    }
    t60.iter()
        .map(|t| {
            if !(*t > 0.0) {
                Err(Error::Domain(format!("T60 must be positive, got {t}")))
            } else {
                Ok(-60.0 * m / (t * fs))
            }
        })
        .collect()
}

pub(crate) fn inverse_sigmoid(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

pub(crate) fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Splits `[P, ch...]` into `P` variables shaped `[ch...]`.
pub(crate) fn split_rows(v: Var<'_>, p: usize) -> Result<Vec<Var<'_>>> {
    let shape = v.shape();
    let rest = shape[1..].to_vec();
    (0..p).map(|i| v.slice(0, i, 1)?.reshape(&rest)).collect()
}

/// Stacks equally shaped variables along a new leading axis.
pub(crate) fn stack_rows<'t>(rows: &[Var<'t>]) -> Result<Var<'t>> {
    let parts = rows
        .iter()
        .map(|r| {
            let mut s = vec![1];
            s.extend(r.shape());
            r.reshape(&s)
        })
        .collect::<Result<Vec<_>>>()?;
    Var::concat(&parts, 0)
}
