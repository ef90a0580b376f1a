//! Frequency grid, Hermitian DFT/IDFT, and rational-response evaluation.
//!
//! Real filters are sampled on `M` linearly spaced angles over `[0, π]`,
//! optionally on a circle of radius `r` (see [`crate::antialias`]). The
//! forward transform uses the negative exponent with no scaling, so that
//! `dft(b)[m] = Σ_k b[k] · z_m^{-k}`; the inverse carries the `1/L`
//! normalization with `L = 2(M − 1)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::FftPlanner;

use crate::autodiff::{Array, C64};
use crate::error::{Error, Result};

/// Coefficient counts at or below this use direct summation.
const DIRECT_MAX_TAPS: usize = 32;

#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    num_bins: usize,
    sample_rate: f64,
    radius: f64,
    points: Arc<[C64]>,
}

/// Value identity of a grid; responses may only be combined when these match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId {
    pub num_bins: usize,
    pub sample_rate_bits: u64,
    pub radius_bits: u64,
}

impl PartialEq for FrequencyGrid {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}

impl FrequencyGrid {
    pub fn new(num_bins: usize, sample_rate: f64, radius: f64) -> Result<Self> {
        if num_bins < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 bins, got {num_bins}")));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("radius must be positive, got {radius}")));
        }
        let points: Arc<[C64]> = (0..num_bins)
            .map(|m| {
                if m == 0 {
                    C64::new(radius, 0.0)
                } else if m == num_bins - 1 {
                    C64::new(-radius, 0.0)
                } else {
                    C64::from_polar(radius, PI * m as f64 / (num_bins - 1) as f64)
                }
            })
            .collect();
        Ok(Self {
            num_bins,
            sample_rate,
            radius,
            points,
        })
    }

    /// Unit-circle grid.
    pub fn unit(num_bins: usize, sample_rate: f64) -> Result<Self> {
        Self::new(num_bins, sample_rate, 1.0)
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn id(&self) -> GridId {
        GridId {
            num_bins: self.num_bins,
            sample_rate_bits: self.sample_rate.to_bits(),
            radius_bits: self.radius.to_bits(),
        }
    }

    /// IDFT frame length `2(M − 1)`.
    pub fn frame_len(&self) -> usize {
        2 * (self.num_bins - 1)
    }

    pub fn angle(&self, bin: usize) -> f64 {
        PI * bin as f64 / (self.num_bins - 1) as f64
    }

    pub fn frequency_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate / self.frame_len() as f64
    }

    /// Natural log of each grid point, `ln r + jθ_m`.
    pub fn log_points(&self) -> Vec<C64> {
        let lr = self.radius.ln();
        (0..self.num_bins).map(|m| C64::new(lr, self.angle(m))).collect()
    }

    /// Same angles, different radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.num_bins, self.sample_rate, radius)
    }

    /// `z_m^{-k}` computed from the reduced integer phase.
    fn inv_power(&self, m: usize, k: usize) -> C64 {
        let l = self.frame_len();
        let phase = ((m as u128 * k as u128) % l as u128) as f64;
        let mag = self.radius.powi(-(k.min(i32::MAX as usize) as i32));
        C64::from_polar(mag, -PI * phase / (self.num_bins - 1) as f64)
    }
}

pub fn make_grid(num_bins: usize, sample_rate: f64, radius: f64) -> Result<FrequencyGrid> {
    FrequencyGrid::new(num_bins, sample_rate, radius)
}

/// A sampled response on a known grid. The first axis is the bin axis for
/// module responses, the second for batched signals `B × M × N`.
#[derive(Debug, Clone)]
pub struct ComplexResponse {
    pub data: Array,
    pub grid: FrequencyGrid,
}

impl ComplexResponse {
    pub fn new(data: Array, grid: FrequencyGrid) -> Result<Self> {
        let m = grid.num_bins();
        let ok = match data.shape() {
            [first, ..] if *first == m => true,
            [_, second, ..] if *second == m => true,
            _ => false,
        };
        if !ok {
            return Err(Error::shape("response", &[m], data.shape()));
        }
        Ok(Self { data, grid })
    }

    pub fn grid_id(&self) -> GridId {
        self.grid.id()
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn ensure_same_grid(&self, other: &ComplexResponse) -> Result<()> {
        if self.grid_id() != other.grid_id() {
            return Err(Error::Config(format!(
                "responses sampled on different grids ({:?} vs {:?})",
                self.grid_id(),
                other.grid_id()
            )));
        }
        Ok(())
    }

    /// Values of one channel column, assuming the bin axis is first.
    pub fn column(&self, col: usize) -> Result<Vec<C64>> {
        let m = self.grid.num_bins();
        let cols = self.data.len() / m;
        if col >= cols || self.data.shape()[0] != m {
            return Err(Error::shape("column", &[m, cols], self.data.shape()));
        }
        Ok((0..m).map(|i| self.data.data()[i * cols + col]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealSignal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl RealSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Forward transform of `cols` interleaved columns of length `k`
/// (`x` is `k × cols`, row-major). Returns `M × cols`.
pub(crate) fn dft_columns(x: &[C64], k: usize, cols: usize, grid: &FrequencyGrid) -> Vec<C64> {
    let m = grid.num_bins();
    let mut out = vec![C64::new(0.0, 0.0); m * cols];
    if k <= DIRECT_MAX_TAPS {
        for bin in 0..m {
            for tap in 0..k {
                let w = grid.inv_power(bin, tap);
                for c in 0..cols {
                    out[bin * cols + c] += x[tap * cols + c] * w;
                }
            }
        }
        return out;
    }
    let l = grid.frame_len();
    let fft = FftPlanner::new().plan_fft_forward(l);
    let scale: Vec<f64> = (0..k).map(|t| grid.radius().powi(-(t as i32))).collect();
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for c in 0..cols {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for tap in 0..k {
            buf[tap % l] += x[tap * cols + c] * scale[tap];
        }
        fft.process(&mut buf);
        for bin in 0..m {
            out[bin * cols + c] = buf[bin];
        }
    }
    out
}

/// Adjoint of [`dft_columns`]: `y[k] = Σ_m conj(z_m^{-k}) g[m]`.
pub(crate) fn dft_columns_adjoint(g: &[C64], k: usize, cols: usize, grid: &FrequencyGrid) -> Vec<C64> {
    let m = grid.num_bins();
    let mut out = vec![C64::new(0.0, 0.0); k * cols];
    if k <= DIRECT_MAX_TAPS {
        for bin in 0..m {
            for tap in 0..k {
                let w = grid.inv_power(bin, tap).conj();
                for c in 0..cols {
                    out[tap * cols + c] += g[bin * cols + c] * w;
                }
            }
        }
        return out;
    }
    let l = grid.frame_len();
    let ifft = FftPlanner::new().plan_fft_inverse(l);
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for c in 0..cols {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for bin in 0..m {
            buf[bin] = g[bin * cols + c];
        }
        ifft.process(&mut buf);
        for tap in 0..k {
            out[tap * cols + c] = buf[tap % l] * grid.radius().powi(-(tap as i32));
        }
    }
    out
}

pub fn dft_real(coeffs: &[f64], grid: &FrequencyGrid) -> Result<ComplexResponse> {
    if coeffs.is_empty() {
        return Err(Error::Domain("dft of empty coefficient vector".into()));
    }
    if coeffs.len() > grid.frame_len() {
        log::warn!(
            "{} coefficients exceed the frame length {}; the sampled response will time-alias on inversion",
            coeffs.len(),
            grid.frame_len()
        );
    }
    let x: Vec<C64> = coeffs.iter().map(|&v| C64::new(v, 0.0)).collect();
    let out = dft_columns(&x, coeffs.len(), 1, grid);
    ComplexResponse::new(Array::new(vec![grid.num_bins(), 1, 1], out)?, grid.clone())
}

/// O(M·K) summation path; the reference for the FFT route.
pub fn dft_real_direct(coeffs: &[f64], grid: &FrequencyGrid) -> Vec<C64> {
    (0..grid.num_bins())
        .map(|bin| coeffs.iter().enumerate().map(|(k, &c)| c * grid.inv_power(bin, k)).sum())
        .collect()
}

/// Inverse transform of a Hermitian half spectrum `X[0..M]` into a real
/// signal of length `2(M − 1)`.
pub fn idft_half_spectrum(half: &[C64], sample_rate: f64) -> Result<RealSignal> {
    let m = half.len();
    if m < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 bins, got {m}")));
    }
    let peak = half.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let tol = 1e-6 * peak;
    for bin in [0, m - 1] {
        let imag = half[bin].im.abs();
        if imag > tol {
            return Err(Error::NonHermitian { bin, imag, tol });
        }
    }
    let l = 2 * (m - 1);
    let mut buf = vec![C64::new(0.0, 0.0); l];
    buf[0] = C64::new(half[0].re, 0.0);
    buf[m - 1] = C64::new(half[m - 1].re, 0.0);
    for i in 1..m - 1 {
        buf[i] = half[i];
        buf[l - i] = half[i].conj();
    }
    FftPlanner::new().plan_fft_inverse(l).process(&mut buf);
    let inv = 1.0 / l as f64;
    RealSignal::new(buf.iter().map(|z| z.re * inv).collect(), sample_rate)
}

/// Inverse transform of a single-channel response (shape `M`, `M×1`, or `M×1×1`).
pub fn idft_hermitian(resp: &ComplexResponse) -> Result<RealSignal> {
    let m = resp.grid.num_bins();
    if resp.data.len() != m {
        return Err(Error::shape("idft_hermitian", &[m, 1, 1], resp.data.shape()));
    }
    idft_half_spectrum(resp.data.data(), resp.grid.sample_rate())
}

pub fn evaluate_rational(b: &[f64], a: &[f64], grid: &FrequencyGrid) -> Result<ComplexResponse> {
    match a.first() {
        Some(&a0) if a0 != 0.0 => {}
        _ => return Err(Error::Domain("leading denominator coefficient must be nonzero".into())),
    }
    let num = dft_real(b, grid)?;
    let den = dft_real(a, grid)?;
    let mut out = Vec::with_capacity(grid.num_bins());
    for (bin, (n, d)) in num.data.data().iter().zip(den.data.data()).enumerate() {
        if d.norm() < 1e-12 {
            return Err(Error::NearSingular {
                bin,
                magnitude: d.norm(),
            });
        }
        out.push(n / d);
    }
    ComplexResponse::new(Array::new(vec![grid.num_bins(), 1, 1], out)?, grid.clone())
}
