//! Time-aliasing mitigation by sampling outside the unit circle.
//!
//! Sampling on radius `1/γ` is the same as sampling the response of
//! `h[n]·γⁿ` on the unit circle. The enveloped impulse response decays
//! faster, so less of it wraps around the `2(M − 1)` sample frame, and the
//! true response is recovered by multiplying with `γ⁻ⁿ`.

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, RealSignal};

/// Smallest allowed envelope value at the wrap point.
pub const NOISE_GUARD: f64 = 1e-12;

/// Envelope parameters for one system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasGuard {
    pub gamma: f64,
    pub wrap_length: usize,
    pub target_floor_db: f64,
}

impl AliasGuard {
    pub fn new(num_bins: usize, target_floor_db: f64) -> Result<Self> {
        Ok(Self {
            gamma: choose_gamma(num_bins, target_floor_db)?,
            wrap_length: 2 * (num_bins.max(1) - 1),
            target_floor_db,
        })
    }

    pub fn grid(&self, grid: &FrequencyGrid) -> Result<FrequencyGrid> {
        enveloped_grid(grid, self.gamma)
    }
}

/// `γ` such that `γ^{2(M−1)}` is `target_floor_db` below 1.
pub fn choose_gamma(num_bins: usize, target_floor_db: f64) -> Result<f64> {
    if num_bins < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 bins, got {num_bins}")));
    }
    if !(target_floor_db >= 0.0) || !target_floor_db.is_finite() {
        return Err(Error::Domain(format!(
            "anti-alias target must be a non-negative number of dB, got {target_floor_db}"
        )));
    }
    if target_floor_db == 0.0 {
        return Ok(1.0);
    }
    let wrap = 2.0 * (num_bins - 1) as f64;
    let gamma = 10f64.powf(-target_floor_db / (20.0 * wrap));
    let floor = gamma.powf(wrap);
    if floor < NOISE_GUARD {
        return Err(Error::Domain(format!(
            "a {target_floor_db} dB envelope leaves {floor:.1e} at the wrap point, below the \
             {NOISE_GUARD:.0e} noise guard; lower the target or use more bins"
        )));
    }
    Ok(gamma)
}

/// Same angles as `grid`, radius `1/γ`.
pub fn enveloped_grid(grid: &FrequencyGrid, gamma: f64) -> Result<FrequencyGrid> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("γ must lie in (0, 1], got {gamma}")));
    }
    grid.with_radius(1.0 / gamma)
}

/// `h[n] = ĥ[n]·γ⁻ⁿ`.
pub fn recover_ir(hat_h: &RealSignal, gamma: f64) -> Result<RealSignal> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("γ must lie in (0, 1], got {gamma}")));
    }
    let mut g = 1.0;
    let inv = 1.0 / gamma;
    let samples = hat_h
        .samples
        .iter()
        .map(|x| {
            let y = x * g;
            g *= inv;
            y
        })
        .collect();
    RealSignal::new(samples, hat_h.sample_rate)
}

/// Multiplies sample `n` by `rⁿ`, undoing the envelope of a radius-`r` grid.
pub(crate) fn undo_radius(signal: RealSignal, radius: f64) -> Result<RealSignal> {
    if radius == 1.0 {
        return Ok(signal);
    }
    recover_ir(&signal, 1.0 / radius)
}
