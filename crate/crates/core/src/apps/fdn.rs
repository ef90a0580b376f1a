//! Feedback delay networks built from composition primitives.
//!
//! `H(z) = cᵀ [D_m(z)⁻¹ − A]⁻¹ b + d` is assembled as
//! `b → recursion(delays·attenuation, A) → c`, summed with the direct path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filters::{t60_to_band_gains, Geq, GeqResolution};
use crate::grid::{ComplexResponse, FrequencyGrid};
use crate::modules::{Distribution, Gain, Layout, Matrix, MatrixMap, ParallelDelay, ParallelGain};
use crate::shell::{InputLayer, OutputLayer, Shell};
use crate::system::System;

pub const INPUT_GAINS: &str = "input_gains";
pub const OUTPUT_GAINS: &str = "output_gains";
pub const FEEDBACK: &str = "feedback";
pub const DELAYS: &str = "delays";
pub const ATTENUATION: &str = "attenuation";
pub const DIRECT: &str = "direct";

#[derive(Debug, Clone, PartialEq)]
pub enum Attenuation {
    /// Lossless loop.
    None,
    /// Per-line gains giving the same T60 at every frequency.
    Homogeneous { t60: f64 },
    /// Per-line graphic equalizers from per-band T60 targets.
    Geq { t60: Vec<f64>, resolution: GeqResolution },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdnSpec {
    pub sample_rate: f64,
    /// Delay lengths in samples.
    pub delays: Vec<f64>,
    pub fractional_delays: bool,
    pub input_gains: Vec<f64>,
    pub output_gains: Vec<f64>,
    pub direct: f64,
    /// Raw `N×N` feedback parameters, row-major.
    pub matrix: Vec<f64>,
    pub map: MatrixMap,
    /// Fixed scalar applied after the feedback matrix.
    pub feedback_scale: f64,
    pub attenuation: Attenuation,
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// Primes `≥ 1000·4^{i/(N−1)}` scaled to `fs / 48000`, one per line.
pub fn default_delays(n: usize, sample_rate: f64) -> Vec<f64> {
    let scale = sample_rate / 48000.0;
    let mut out: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let mut m = (1000.0 * scale * 4f64.powf(frac)).ceil().max(2.0) as u64;
        while !is_prime(m) || out.contains(&(m as f64)) {
            m += 1;
        }
        out.push(m as f64);
    }
    out
}

impl FdnSpec {
    /// Lossless FDN with integer delays, random orthogonal feedback and
    /// standard-normal input and output gains.
    pub fn random(n: usize, delays: Vec<f64>, sample_rate: f64, seed: u64) -> Result<Self> {
        if n == 0 || delays.len() != n {
            return Err(Error::Config(format!("need {n} delays, got {}", delays.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Distribution::Normal { mean: 0.0, std: 1.0 };
        let matrix = normal.sample(&mut rng, n * n)?;
        let input_gains = normal.sample(&mut rng, n)?;
        let output_gains = normal.sample(&mut rng, n)?;
        Ok(Self {
            sample_rate,
            delays,
            fractional_delays: false,
            input_gains,
            output_gains,
            direct: 0.0,
            matrix,
            map: MatrixMap::Orthogonal,
            feedback_scale: 1.0,
            attenuation: Attenuation::None,
        })
    }

    pub fn size(&self) -> usize {
        self.delays.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.size();
        if n == 0 {
            return Err(Error::Config("FDN needs at least one delay line".into()));
        }
        if self.delays.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config("FDN delays must be positive".into()));
        }
        if self.input_gains.len() != n || self.output_gains.len() != n || self.matrix.len() != n * n {
            return Err(Error::Config(format!(
                "FDN of size {n} needs {n} input gains, {n} output gains and {} matrix entries",
                n * n
            )));
        }
        Ok(())
    }

    /// Per-line attenuation module, if any.
    fn attenuation_module(&self, grid: &FrequencyGrid) -> Result<Option<System>> {
        let fs = self.sample_rate;
        Ok(match &self.attenuation {
            Attenuation::None => None,
            Attenuation::Homogeneous { t60 } => {
                let g = self
                    .delays
                    .iter()
                    .map(|m| Ok(10f64.powf(t60_to_band_gains(&[*t60], *m, fs)?[0] / 20.0)))
                    .collect::<Result<Vec<_>>>()?;
                let mut a = ParallelGain::new(ATTENUATION, grid, &g)?;
                a.param_mut().requires_grad = false;
                Some(a.into())
            }
            Attenuation::Geq { t60, resolution } => {
                let n = self.size();
                let bands = resolution.centers(fs).len();
                if t60.len() != bands && t60.len() != 1 {
                    return Err(Error::Config(format!(
                        "{} GEQ at {fs} Hz has {bands} bands, got {} T60 values",
                        resolution.as_str(),
                        t60.len()
                    )));
                }
                let t60: Vec<f64> = if t60.len() == 1 { vec![t60[0]; bands] } else { t60.clone() };
                let mut commands = vec![0.0; bands * n];
                for (i, m) in self.delays.iter().enumerate() {
                    for (b, g) in t60_to_band_gains(&t60, *m, fs)?.into_iter().enumerate() {
                        commands[b * n + i] = g;
                    }
                }
                let mut g = Geq::new(ATTENUATION, grid, *resolution, Layout::Parallel(n), &commands)?;
                g.param_mut().requires_grad = false;
                Some(g.into())
            }
        })
    }

    /// The FDN as a composed system on `grid`.
    pub fn build(&self, grid: &FrequencyGrid) -> Result<System> {
        self.validate()?;
        if grid.sample_rate() != self.sample_rate {
            return Err(Error::Config(format!(
                "FDN designed for {} Hz evaluated on a {} Hz grid",
                self.sample_rate,
                grid.sample_rate()
            )));
        }
        let n = self.size();
        let delays = ParallelDelay::from_samples(DELAYS, grid, &self.delays, 1.0 / self.sample_rate, self.fractional_delays)?;
        let mut ff = vec![System::from(delays)];
        if let Some(a) = self.attenuation_module(grid)? {
            ff.push(a);
        }
        let mut fb = vec![System::from(Matrix::new(FEEDBACK, grid, n, self.map, &self.matrix)?)];
        if self.feedback_scale != 1.0 {
            let mut s = ParallelGain::new("feedback_scale", grid, &vec![self.feedback_scale; n])?;
            s.param_mut().requires_grad = false;
            fb.push(s.into());
        }
        let recursion = System::recursion(System::series(ff)?, System::series(fb)?)?;
        let wet = System::series(vec![
            Gain::new(INPUT_GAINS, grid, n, 1, &self.input_gains)?.into(),
            recursion,
            Gain::new(OUTPUT_GAINS, grid, 1, n, &self.output_gains)?.into(),
        ])?;
        let mut direct = Gain::new(DIRECT, grid, 1, 1, &[self.direct])?;
        direct.param_mut().requires_grad = false;
        System::sum(vec![wet, direct.into()])
    }

    pub fn shell(&self, grid: &FrequencyGrid) -> Result<Shell> {
        Shell::new(self.build(grid)?, InputLayer::Identity, OutputLayer::Identity)
    }

    /// Sampled transfer function on `grid`.
    pub fn response(&self, grid: &FrequencyGrid) -> Result<ComplexResponse> {
        self.shell(grid)?.get_freq_response(Some(0))
    }

    /// Mapped feedback matrix, row-major, including the fixed scale.
    pub fn feedback_matrix(&self) -> Result<Vec<f64>> {
        let grid = FrequencyGrid::unit(2, self.sample_rate)?;
        let m = Matrix::new(FEEDBACK, &grid, self.size(), self.map, &self.matrix)?;
        Ok(m.mapped()?.into_iter().map(|x| x * self.feedback_scale).collect())
    }

    /// Per-line loop gains of the homogeneous attenuation (ones otherwise).
    pub fn line_gains(&self) -> Result<Vec<f64>> {
        match &self.attenuation {
            Attenuation::Homogeneous { t60 } => self
                .delays
                .iter()
                .map(|m| Ok(10f64.powf(t60_to_band_gains(&[*t60], *m, self.sample_rate)?[0] / 20.0)))
                .collect(),
            Attenuation::None => Ok(vec![1.0; self.size()]),
            Attenuation::Geq { .. } => Err(Error::Config("line gains are frequency dependent for GEQ attenuation".into())),
        }
    }

    /// Copies trained values of `system` (as built by [`FdnSpec::build`]) back.
    pub fn update_from(&mut self, system: &System) -> Result<()> {
        let get = |name: &str| -> Result<Vec<f64>> {
            let m = system
                .find(name)
                .ok_or_else(|| Error::Config(format!("system has no module '{name}'")))?;
            Ok(m.params()[0].values())
        };
        self.input_gains = get(INPUT_GAINS)?;
        self.output_gains = get(OUTPUT_GAINS)?;
        self.matrix = get(FEEDBACK)?;
        self.direct = get(DIRECT)?[0];
        // delays are stored with a one-sample unit
        self.delays = get(DELAYS)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::C64;

    #[test]
    fn default_delays_are_distinct_primes() {
        let d = default_delays(6, 48000.0);
        assert_eq!(d, vec![1009.0, 1321.0, 1747.0, 2309.0, 3037.0, 4001.0]);
        let d = default_delays(4, 8000.0);
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_line_geometric_series() {
        let grid = FrequencyGrid::unit(257, 8000.0).unwrap();
        let g = 0.7;
        let mut spec = FdnSpec::random(1, vec![5.0], 8000.0, 0).unwrap();
        spec.map = MatrixMap::Identity;
        spec.matrix = vec![g];
        spec.input_gains = vec![1.0];
        spec.output_gains = vec![1.0];
        let h = spec.response(&grid).unwrap();
        assert!((h.data.data()[0] - C64::new(1.0 / (1.0 - g), 0.0)).norm() < 1e-12);
        for (k, z) in grid.points().iter().enumerate() {
            let zm = z.powf(-5.0);
            assert!((h.data.data()[k] - zm / (1.0 - g * zm)).norm() < 1e-10);
        }
    }

    #[test]
    fn direct_path_only() {
        let grid = FrequencyGrid::unit(65, 8000.0).unwrap();
        let mut spec = FdnSpec::random(3, vec![3.0, 5.0, 7.0], 8000.0, 1).unwrap();
        spec.input_gains = vec![0.0; 3];
        spec.direct = 1.0;
        spec.attenuation = Attenuation::Homogeneous { t60: 0.1 };
        let h = spec.response(&grid).unwrap();
        assert!(h.data.data().iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn update_roundtrip() {
        let grid = FrequencyGrid::unit(65, 8000.0).unwrap();
        let spec = FdnSpec::random(3, vec![3.0, 5.0, 7.0], 8000.0, 2).unwrap();
        let sys = spec.build(&grid).unwrap();
        let mut back = FdnSpec::random(3, vec![3.0, 5.0, 7.0], 8000.0, 9).unwrap();
        back.update_from(&sys).unwrap();
        assert_eq!(back.matrix, spec.matrix);
        assert_eq!(back.input_gains, spec.input_gains);
    }
}
