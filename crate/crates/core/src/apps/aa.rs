//! Active-acoustics feedback loop `F_MM(z) = G H_LM(z) R(z) U(z)`.
//!
//! Signal order through the loop: microphones → `U` (learnable FIR,
//! loudspeakers × mics) → `R` (fixed noise reverb, loudspeakers ×
//! loudspeakers) → `H_LM` (room, mics × loudspeakers) → `G` (per-mic gain).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::modules::{Fir, Module, ParallelGain};
use crate::shell::{InputLayer, OutputLayer, Shell};
use crate::system::System;

pub const MIXING: &str = "U";
pub const REVERB: &str = "R";
pub const ROOM: &str = "H_LM";
pub const LOOP_GAIN: &str = "G";

/// FIR matrix taps laid out `[K, rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirMatrix {
    pub rows: usize,
    pub cols: usize,
    pub taps: Vec<f64>,
}

impl FirMatrix {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || taps.is_empty() || !taps.len().is_multiple_of(rows * cols) {
            return Err(Error::shape("fir matrix", &[rows, cols], &[taps.len()]));
        }
        Ok(Self { rows, cols, taps })
    }

    pub fn len(&self) -> usize {
        self.taps.len() / (self.rows * self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Impulse response of entry `(r, c)`.
    pub fn entry(&self, r: usize, c: usize) -> Vec<f64> {
        let stride = self.rows * self.cols;
        (0..self.len()).map(|k| self.taps[k * stride + r * self.cols + c]).collect()
    }

    pub fn from_entries(rows: usize, cols: usize, entries: &[Vec<f64>]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::shape("fir matrix", &[rows * cols], &[entries.len()]));
        }
        let k = entries.iter().map(Vec::len).max().unwrap_or(0);
        let mut taps = vec![0.0; k * rows * cols];
        for (i, e) in entries.iter().enumerate() {
            for (n, x) in e.iter().enumerate() {
                taps[n * rows * cols + i] = *x;
            }
        }
        Self::new(rows, cols, taps)
    }
}

/// Exponentially decaying Gaussian noise, `T60·fs` samples per entry, each
/// normalized to unit energy.
pub fn synth_room_responses(rows: usize, cols: usize, t60: f64, fs: f64, seed: u64) -> Result<FirMatrix> {
    if !(t60 > 0.0 && fs > 0.0) {
        return Err(Error::Domain(format!("need T60 > 0 and fs > 0, got {t60}, {fs}")));
    }
    let len = ((t60 * fs).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let decay = -3.0 * std::f64::consts::LN_10 / (t60 * fs);
    let entries: Vec<Vec<f64>> = (0..rows * cols)
        .map(|_| {
            let mut h: Vec<f64> = (0..len).map(|n| normal.sample(&mut rng) * (decay * n as f64).exp()).collect();
            let e = h.iter().map(|x| x * x).sum::<f64>().sqrt();
            h.iter_mut().for_each(|x| *x /= e);
            h
        })
        .collect();
    FirMatrix::from_entries(rows, cols, &entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AaSpec {
    pub mics: usize,
    pub loudspeakers: usize,
    pub room: FirMatrix,
    pub reverb: FirMatrix,
    pub mixing: FirMatrix,
    pub gain: Vec<f64>,
}

impl AaSpec {
    /// Synthetic rooms and reverb, random `U` with variance `1/(K·mics)`,
    /// unit loop gain.
    pub fn synthetic(
        mics: usize,
        loudspeakers: usize,
        room_t60: f64,
        reverb_t60: f64,
        mixing_taps: usize,
        fs: f64,
        seed: u64,
    ) -> Result<Self> {
        let room = synth_room_responses(mics, loudspeakers, room_t60, fs, seed)?;
        let reverb = synth_room_responses(loudspeakers, loudspeakers, reverb_t60, fs, seed.wrapping_add(1))?;
        Self::with_room(room, reverb, mixing_taps, seed.wrapping_add(2))
    }

    pub fn with_room(room: FirMatrix, reverb: FirMatrix, mixing_taps: usize, seed: u64) -> Result<Self> {
        let (mics, loudspeakers) = (room.rows, room.cols);
        if reverb.rows != loudspeakers || reverb.cols != loudspeakers {
            return Err(Error::Config(format!(
                "reverb must be {loudspeakers}×{loudspeakers}, got {}×{}",
                reverb.rows, reverb.cols
            )));
        }
        if mixing_taps == 0 {
            return Err(Error::Config("U needs at least one tap".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / ((mixing_taps * mics) as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let taps = (0..mixing_taps * loudspeakers * mics)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Ok(Self {
            mics,
            loudspeakers,
            room,
            reverb,
            mixing: FirMatrix::new(loudspeakers, mics, taps)?,
            gain: vec![1.0; mics],
        })
    }

    /// The open loop `F_MM` as a series.
    pub fn build(&self, grid: &FrequencyGrid) -> Result<System> {
        let fixed = |name: &str, m: &FirMatrix| -> Result<System> {
            let mut f = Fir::new(name, grid, m.rows, m.cols, &m.taps)?;
            f.params_mut()[0].requires_grad = false;
            Ok(f.into())
        };
        System::series(vec![
            Fir::new(MIXING, grid, self.loudspeakers, self.mics, &self.mixing.taps)?.into(),
            fixed(REVERB, &self.reverb)?,
            fixed(ROOM, &self.room)?,
            ParallelGain::new(LOOP_GAIN, grid, &self.gain)?.into(),
        ])
    }

    pub fn shell(&self, grid: &FrequencyGrid) -> Result<Shell> {
        Shell::new(self.build(grid)?, InputLayer::Identity, OutputLayer::Identity)
    }

    /// Copies trained `U` and `G` back from a built system.
    pub fn update_from(&mut self, system: &System) -> Result<()> {
        let get = |name: &str| -> Result<Vec<f64>> {
            Ok(system
                .find(name)
                .ok_or_else(|| Error::Config(format!("system has no module '{name}'")))?
                .params()[0]
                .values())
        };
        self.mixing.taps = get(MIXING)?;
        self.gain = get(LOOP_GAIN)?;
        Ok(())
    }

    /// Frame length needed to hold the loop IR without wrapping.
    pub fn loop_length(&self) -> usize {
        self.room.len() + self.reverb.len() + self.mixing.len() - 2
    }
}
