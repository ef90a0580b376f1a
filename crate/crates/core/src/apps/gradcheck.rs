//! Gradient checks of every module type and composition against central
//! finite differences.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use super::fdn::{default_delays, FdnSpec};
use crate::antialias::{choose_gamma, enveloped_grid};
use crate::autodiff::{grad_check, Array, GradCheckReport, Tape, Var, C64};
use crate::error::Result;
use crate::filters::{Biquad, BiquadKind, Geq, GeqResolution, Svf, SvfMode};
use crate::grid::FrequencyGrid;
use crate::modules::{Ctx, Delay, Fir, Gain, Layout, Matrix, MatrixMap, ParallelDelay, ParallelFir, ParallelGain};
use crate::system::System;

pub type Builder = fn(&FrequencyGrid, &mut ChaCha8Rng) -> Result<System>;

fn normal(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}

fn gain(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    Ok(Gain::new("gain", g, 3, 2, &normal(r, 6, 1.0))?.into())
}

fn parallel_gain(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    Ok(ParallelGain::new("gain", g, &normal(r, 3, 1.0))?.into())
}

fn orthogonal(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    Ok(Matrix::new("matrix", g, 4, MatrixMap::Orthogonal, &normal(r, 16, 1.0))?.into())
}

fn fir(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    Ok(Fir::new("fir", g, 2, 2, &normal(r, 8 * 4, 0.5))?.into())
}

fn parallel_fir(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    Ok(ParallelFir::new("fir", g, 3, &normal(r, 40 * 3, 0.5))?.into())
}

/// Delays of 2–40 ms with a millisecond unit.
fn delay(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    Ok(ParallelDelay::new("delay", g, &uniform(r, 3, 2.0, 40.0), 1e-3, true)?.into())
}

fn full_delay(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    Ok(Delay::new("delay", g, 2, 2, &uniform(r, 4, 2.0, 40.0), 1e-3, true)?.into())
}

fn biquad(kind: BiquadKind, g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    let mut raw = normal(r, 2, 1.0);
    raw.extend(normal(r, 2, 6.0));
    raw.extend(normal(r, 2, 1.0));
    Ok(Biquad::new("biquad", g, kind, Layout::Parallel(2), &raw)?.into())
}

fn biquad_lp(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    biquad(BiquadKind::Lowpass, g, r)
}
fn biquad_hp(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    biquad(BiquadKind::Highpass, g, r)
}
fn biquad_bp(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    biquad(BiquadKind::Bandpass, g, r)
}

fn svf(mode: SvfMode, g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    let sections = 2;
    let p = mode.num_params();
    let ch = 2;
    let mut raw = Vec::with_capacity(sections * p * ch);
    for _ in 0..sections {
        for k in 0..p {
            // gains in dB get a wider spread than the normalized raw values
            let std = if k == 2 && p == 3 { 6.0 } else { 1.0 };
            raw.extend(normal(r, ch, std));
        }
    }
    Ok(Svf::new("svf", g, mode, Layout::Parallel(ch), sections, &raw)?.into())
}

macro_rules! svf_case {
    ($name:ident, $mode:expr) => {
        fn $name(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
            svf($mode, g, r)
        }
    };
}
svf_case!(svf_lp, SvfMode::Lowpass);
svf_case!(svf_hp, SvfMode::Highpass);
svf_case!(svf_bp, SvfMode::Bandpass);
svf_case!(svf_ls, SvfMode::Lowshelf);
svf_case!(svf_hs, SvfMode::Highshelf);
svf_case!(svf_pk, SvfMode::Peaking);
svf_case!(svf_notch, SvfMode::Notch);
svf_case!(svf_generic, SvfMode::Generic);

fn geq(res: GeqResolution, g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    let bands = res.centers(g.sample_rate()).len();
    Ok(Geq::new("geq", g, res, Layout::Parallel(2), &normal(r, bands * 2, 6.0))?.into())
}

fn geq_octave(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    geq(GeqResolution::Octave, g, r)
}
fn geq_third(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    geq(GeqResolution::ThirdOctave, g, r)
}

fn series(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    System::series(vec![
        Fir::new("fir", g, 2, 1, &normal(r, 6 * 2, 0.5))?.into(),
        biquad(BiquadKind::Lowpass, g, r)?,
        Gain::new("mix", g, 1, 2, &normal(r, 2, 1.0))?.into(),
    ])
}

fn recursion(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    let ff = System::series(vec![
        ParallelDelay::new("delay", g, &uniform(r, 2, 2.0, 10.0), 1e-3, true)?.into(),
        ParallelGain::new("loss", g, &uniform(r, 2, 0.2, 0.6))?.into(),
    ])?;
    let fb: System = Gain::new("feedback", g, 2, 2, &normal(r, 4, 0.5))?.into();
    System::recursion(ff, fb)
}

/// Lossless FDN of four lines on a grid enveloped for 60 dB at the wrap.
fn fdn(g: &FrequencyGrid, r: &mut ChaCha8Rng) -> Result<System> {
    let delays = default_delays(4, g.sample_rate() / 8.0);
    let mut spec = FdnSpec::random(4, delays, g.sample_rate(), r.random())?;
    spec.fractional_delays = true;
    spec.build(g)
}

pub struct Case {
    pub name: &'static str,
    pub build: Builder,
    pub antialiased: bool,
    /// Multiplier on the finite-difference step. Command gains in dB move the
    /// response so little per unit that the default step drowns in round-off;
    /// the long-delay FDN is curved enough that it needs a finer one.
    pub step_scale: f64,
}

/// Every checked case.
pub fn cases() -> Vec<Case> {
    let c = |name, build, antialiased, step_scale| Case {
        name,
        build,
        antialiased,
        step_scale,
    };
    vec![
        c("gain", gain, false, 1.0),
        c("parallel-gain", parallel_gain, false, 1.0),
        c("matrix-orthogonal", orthogonal, false, 1.0),
        c("fir", fir, false, 1.0),
        c("parallel-fir", parallel_fir, false, 1.0),
        c("delay-fractional", delay, false, 1.0),
        c("delay-full-fractional", full_delay, false, 1.0),
        c("biquad-lowpass", biquad_lp, false, 1.0),
        c("biquad-highpass", biquad_hp, false, 1.0),
        c("biquad-bandpass", biquad_bp, false, 1.0),
        c("svf-lowpass", svf_lp, false, 1.0),
        c("svf-highpass", svf_hp, false, 1.0),
        c("svf-bandpass", svf_bp, false, 1.0),
        c("svf-lowshelf", svf_ls, false, 1.0),
        c("svf-highshelf", svf_hs, false, 1.0),
        c("svf-peaking", svf_pk, false, 1.0),
        c("svf-notch", svf_notch, false, 1.0),
        c("svf-generic", svf_generic, false, 1.0),
        c("geq-octave", geq_octave, false, 1e3),
        c("geq-third-octave", geq_third, false, 1e3),
        c("series", series, false, 1.0),
        c("recursion", recursion, false, 1.0),
        c("fdn-antialiased", fdn, true, 0.1),
    ]
}

/// Real loss mixing magnitude and phase of the response: `mean(|H ⊙ W|²) +
/// mean(Re(H ⊙ V))` with fixed random complex weights.
fn probe_loss<'t>(h: Var<'t>, w: &Array, v: &Array) -> Result<Var<'t>> {
    let tape = h.tape();
    let a = h.mul(tape.constant(w.clone()))?.abs2().mean();
    let b = h.mul(tape.constant(v.clone()))?.re().mean();
    a.add(b)
}

fn random_complex(rng: &mut ChaCha8Rng, shape: &[usize]) -> Array {
    let n: usize = shape.iter().product();
    let d = normal(rng, 2 * n, 1.0);
    Array::new(shape.to_vec(), d.chunks(2).map(|c| C64::new(c[0], c[1])).collect()).expect("shape")
}

/// Checks one system: trainable parameters become the checked leaves.
pub fn check_system(system: &System, rng: &mut ChaCha8Rng, step: f64, tol: f64) -> Result<GradCheckReport> {
    let grid = system.grid().expect("non-empty system").clone();
    let shape = [grid.num_bins(), system.n_out(), system.n_in()];
    let w = random_complex(rng, &shape);
    let v = random_complex(rng, &shape);
    let params: Vec<_> = system.params().into_iter().filter(|p| p.requires_grad).collect();
    let values: Vec<Array> = params.iter().map(|p| p.array().clone()).collect();
    grad_check(
        |tape: &Tape, leaves: &[Var]| {
            let ctx = Ctx::new(tape);
            for (p, l) in params.iter().zip(leaves) {
                ctx.bind(p, *l)?;
            }
            let h = system.full_response(&ctx)?.broadcast_to(&shape)?;
            probe_loss(h, &w, &v)
        },
        &values,
        step,
        tol,
    )
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: &'static str,
    pub seeds: usize,
    pub max_rel_err: f64,
    pub passed: bool,
    pub seconds: f64,
    pub failure: Option<String>,
}

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Runs every case for `seeds` seeds on an `M`-bin grid at 48 kHz.
pub fn run_suite(num_bins: usize, seeds: usize, step: f64, tol: f64) -> Result<Vec<CaseResult>> {
    let unit = FrequencyGrid::unit(num_bins, 48000.0)?;
    let aa = enveloped_grid(&unit, choose_gamma(num_bins, 60.0)?)?;
    cases()
        .into_iter()
        .map(|case| {
            let t = Instant::now();
            let grid = if case.antialiased { &aa } else { &unit };
            let mut worst = 0.0f64;
            let mut failure = None;
            for seed in 0..seeds as u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sys = (case.build)(grid, &mut rng)?;
                let r = check_system(&sys, &mut rng, step * case.step_scale, tol)?;
                worst = worst.max(r.max_rel_err());
                if failure.is_none() {
                    if let Some(f) = &r.failure {
                        failure = Some(format!("seed {seed}: {f}"));
                    }
                }
            }
            Ok(CaseResult {
                name: case.name,
                seeds,
                max_rel_err: worst,
                passed: failure.is_none() && worst < tol,
                seconds: t.elapsed().as_secs_f64(),
                failure,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes_on_a_small_grid() {
        for r in run_suite(64, 2, DEFAULT_STEP, DEFAULT_TOL).unwrap() {
            assert!(r.passed, "{}: {:.2e} {:?}", r.name, r.max_rel_err, r.failure);
        }
    }
}
