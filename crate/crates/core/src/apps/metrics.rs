//! Reporting metrics: echo density and loop eigenvalue statistics.

use nalgebra::DMatrix;

use crate::autodiff::{Array, C64};
use crate::error::{Error, Result};
use crate::grid::RealSignal;

/// `erfc(1/√2)`, the fraction of a Gaussian beyond one standard deviation.
pub const ERFC_INV_SQRT2: f64 = 0.317_310_507_862_914_1;

pub const MIN_WINDOW: usize = 64;

/// Windows whose standard deviation is this far below the IR peak count as
/// silence (η = 0), so alias residue before the first arrival is not
/// mistaken for dense noise.
pub const SILENCE_DB: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EchoDensityProfile {
    pub window: usize,
    pub hop: usize,
    /// Window centers in seconds.
    pub times: Vec<f64>,
    pub eta: Vec<f64>,
}

impl EchoDensityProfile {
    /// First time the profile reaches `level`.
    pub fn time_to_reach(&self, level: f64) -> Option<f64> {
        self.eta.iter().position(|e| *e >= level).map(|i| self.times[i])
    }
}

/// Default window: 20 ms.
pub fn default_window(sample_rate: f64) -> usize {
    ((0.02 * sample_rate).round() as usize).max(MIN_WINDOW)
}

/// Rectangular-window echo density: the fraction of samples whose magnitude
/// exceeds the window standard deviation, divided by `erfc(1/√2)`.
/// Windows below the [`SILENCE_DB`] floor give 0.
pub fn echo_density(ir: &RealSignal, window: usize) -> Result<EchoDensityProfile> {
    if window < MIN_WINDOW {
        return Err(Error::Domain(format!(
            "echo density window must be ≥ {MIN_WINDOW}, got {window}"
        )));
    }
    if ir.len() < window {
        return Err(Error::Domain(format!(
            "impulse response of {} samples is shorter than the {window}-sample window",
            ir.len()
        )));
    }
    let hop = window / 2;
    let peak = ir.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let silence = peak * 10f64.powf(-SILENCE_DB / 20.0);
    let mut times = Vec::new();
    let mut eta = Vec::new();
    let mut start = 0;
    while start + window <= ir.len() {
        let seg = &ir.samples[start..start + window];
        let mean = seg.iter().sum::<f64>() / window as f64;
        let var = seg.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / window as f64;
        let sd = var.sqrt();
        let e = if sd > silence && sd > 0.0 {
            let count = seg.iter().filter(|x| x.abs() > sd).count();
            count as f64 / window as f64 / ERFC_INV_SQRT2
        } else {
            0.0
        };
        times.push((start as f64 + window as f64 / 2.0) / ir.sample_rate);
        eta.push(e);
        start += hop;
    }
    Ok(EchoDensityProfile { window, hop, times, eta })
}

/// Eigenvalue magnitudes of each `K×K` bin matrix of `[M, K, K]`.
pub fn eig_magnitudes(loop_response: &Array) -> Result<Vec<Vec<f64>>> {
    let s = loop_response.shape();
    if s.len() != 3 || s[1] != s[2] {
        let k = s.get(1).copied().unwrap_or(0);
        return Err(Error::shape("eigenvalues", &[s.first().copied().unwrap_or(0), k, k], s));
    }
    let k = s[1];
    loop_response
        .data()
        .chunks(k * k)
        .enumerate()
        .map(|(bin, block)| {
            let m = DMatrix::<C64>::from_row_slice(k, k, block);
            let ev = m
                .schur()
                .eigenvalues()
                .ok_or_else(|| Error::Autodiff(format!("eigenvalues failed at bin {bin}")))?;
            Ok(ev.iter().map(|z| z.norm()).collect())
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EigStats {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl EigStats {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            q25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
            max: v.last().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

/// Statistics per bin and over every bin pooled.
pub fn eig_magnitude_distribution(loop_response: &Array) -> Result<(Vec<EigStats>, EigStats)> {
    let mags = eig_magnitudes(loop_response)?;
    let per_bin = mags.iter().map(|m| EigStats::of(m)).collect();
    let all: Vec<f64> = mags.into_iter().flatten().collect();
    Ok((per_bin, EigStats::of(&all)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn erfc_constant() {
        // erfc(x) = 1 − erf(x); erf(1/√2) = P(|Z| < 1) ≈ 0.682689492137086
        assert!((ERFC_INV_SQRT2 - (1.0 - 0.682_689_492_137_085_9)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_noise_is_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..48000).map(|_| n.sample(&mut rng)).collect();
        let p = echo_density(&RealSignal::new(x, 48000.0).unwrap(), 960).unwrap();
        assert!(p.eta.iter().all(|e| (0.9..=1.1).contains(e)), "{:?}", p.eta);
    }

    #[test]
    fn single_impulse_and_silence() {
        let w = 100;
        let mut x = vec![0.0; 400];
        x[10] = 1.0;
        let p = echo_density(&RealSignal::new(x, 1000.0).unwrap(), w).unwrap();
        assert!((p.eta[0] - 1.0 / (w as f64 * ERFC_INV_SQRT2)).abs() < 1e-12);
        assert_eq!(p.eta.last(), Some(&0.0));
        let z = echo_density(&RealSignal::new(vec![0.0; 200], 1000.0).unwrap(), 64).unwrap();
        assert!(z.eta.iter().all(|e| *e == 0.0));
        assert!(echo_density(&RealSignal::new(vec![0.0; 50], 1000.0).unwrap(), 64).is_err());
        assert!(echo_density(&RealSignal::new(vec![0.0; 500], 1000.0).unwrap(), 32).is_err());
    }

    #[test]
    fn residue_below_the_floor_is_silence() {
        let mut x: Vec<f64> = (0..1000).map(|n| 1e-7 * ((n * 7919) % 13) as f64 - 6e-7).collect();
        x[500] = 1.0;
        let p = echo_density(&RealSignal::new(x, 1000.0).unwrap(), 100).unwrap();
        assert_eq!(p.eta[0], 0.0);
        assert!(p.eta.iter().any(|e| *e > 0.0));
    }

    #[test]
    fn eig_examples() {
        let k = 3;
        let mut diag = vec![C64::new(0.0, 0.0); 2 * k * k];
        let mut perm = diag.clone();
        for b in 0..2 {
            for i in 0..k {
                diag[b * k * k + i * k + i] = C64::new(0.5, 0.0);
                perm[b * k * k + i * k + (i + 1) % k] = C64::new(1.0, 0.0);
            }
        }
        let (_, s) = eig_magnitude_distribution(&Array::new(vec![2, k, k], diag).unwrap()).unwrap();
        assert!((s.q25 - 0.5).abs() < 1e-12 && s.iqr().abs() < 1e-12);
        let m = eig_magnitudes(&Array::new(vec![2, k, k], perm).unwrap()).unwrap();
        assert!(m.iter().flatten().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(eig_magnitudes(&Array::zeros(&[2, 2, 3])).is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&[0.0, 1.0], 0.25), 0.25);
    }
}
