//! Case studies and tools behind the command-line interface.

pub mod aa;
pub mod config;
pub mod fdn;
pub mod gradcheck;
pub mod metrics;
pub mod wav;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::antialias::{choose_gamma, enveloped_grid};
use crate::error::{Error, Result};
use crate::filters::GeqResolution;
use crate::grid::{FrequencyGrid, RealSignal};
use crate::shell::{InputLayer, OutputLayer, Shell};
use crate::system::System;
use crate::train::{train, Dataset, InputSpec, LossKind, LossTerm, TargetSpec, TrainConfig, TrainReport};

use aa::AaSpec;
use config::{check_schema, AaOptimConfig, FdnOptimConfig, GradcheckConfig, MetricsConfig, RenderConfig, TrainSection};
use fdn::{default_delays, Attenuation, FdnSpec};
use metrics::{default_window, echo_density, eig_magnitude_distribution, EchoDensityProfile, EigStats};

/// Grid of `num_bins` points, enveloped for `antialias_db` at the wrap point.
pub fn antialiased_grid(num_bins: usize, sample_rate: f64, antialias_db: f64) -> Result<FrequencyGrid> {
    let unit = FrequencyGrid::unit(num_bins, sample_rate)?;
    enveloped_grid(&unit, choose_gamma(num_bins, antialias_db)?)
}

fn train_config(t: &TrainSection, seed: u64, out: &Path) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        lr: t.lr,
        optimizer: t.optimizer,
        seed,
        log_every: t.log_every,
        patience: t.patience,
        out_dir: Some(out.to_path_buf()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_echo_density(path: &Path, p: &EchoDensityProfile) -> Result<()> {
    let mut s = String::from("time_s,eta\n");
    for (t, e) in p.times.iter().zip(&p.eta) {
        writeln!(s, "{t},{e}").expect("string write");
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_eig_stats(path: &Path, grid: &FrequencyGrid, per_bin: &[EigStats]) -> Result<()> {
    let mut s = String::from("freq_hz,q25,q75,max\n");
    for (bin, st) in per_bin.iter().enumerate() {
        writeln!(s, "{},{},{},{}", grid.frequency_hz(bin), st.q25, st.q75, st.max).expect("string write");
    }
    fs::write(path, s)?;
    Ok(())
}

fn truncate(mut s: RealSignal, seconds: f64) -> RealSignal {
    let n = ((seconds * s.sample_rate).round() as usize).min(s.len());
    s.samples.truncate(n);
    s
}

fn magnitude_std(shell: &Shell) -> Result<f64> {
    let r = shell.get_freq_response(None)?;
    let mags: Vec<f64> = r.data.data().iter().map(|z| z.norm()).collect();
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    Ok((mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mags.len() as f64).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct FdnOutcome {
    pub seed: u64,
    pub delays: Vec<f64>,
    pub gamma: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub magnitude_std_before: f64,
    pub magnitude_std_after: f64,
    pub magnitude_std_reduction: f64,
    /// First time the echo density reaches 0.9, if it does.
    pub echo_density_09_before: Option<f64>,
    pub echo_density_09_after: Option<f64>,
    pub wav_scale_before: f64,
    pub wav_scale_after: f64,
    #[serde(skip)]
    pub report: Option<TrainReport>,
}

fn render_fdn(spec: &FdnSpec, cfg: &FdnOptimConfig) -> Result<RealSignal> {
    let mut s = spec.clone();
    s.attenuation = Attenuation::Geq {
        t60: cfg.attenuation.t60.clone(),
        resolution: GeqResolution::parse(&cfg.attenuation.resolution)?,
    };
    let grid = antialiased_grid(cfg.render.num_bins, cfg.sample_rate, cfg.render.antialias_db)?;
    let ir = s.shell(&grid)?.get_time_response(Some(0))?.remove(0);
    Ok(truncate(ir, cfg.render.seconds))
}

/// Colorless FDN: optimize a lossless prototype for flatness and density,
/// then render before/after impulse responses with GEQ attenuation.
pub fn run_fdn_optim(cfg: &FdnOptimConfig) -> Result<FdnOutcome> {
    check_schema(&cfg.schema)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let fs_ = cfg.sample_rate;
    let delays = cfg.delays.clone().unwrap_or_else(|| default_delays(cfg.size, fs_));
    if delays.len() != cfg.size {
        return Err(Error::Config(format!("size {} but {} delays", cfg.size, delays.len())));
    }
    let mut spec = FdnSpec::random(cfg.size, delays.clone(), fs_, cfg.seed)?;
    let gamma = choose_gamma(cfg.num_bins, cfg.antialias_db)?;
    let grid = antialiased_grid(cfg.num_bins, fs_, cfg.antialias_db)?;
    let mut shell = spec.shell(&grid)?;

    let w = &cfg.weights;
    let losses: Vec<LossTerm> = [
        LossTerm::new("flatness", w.flatness, LossKind::SpectralFlatness),
        LossTerm::new(
            "gain_sparsity",
            w.gain_sparsity,
            LossKind::Sparsity {
                modules: vec![fdn::INPUT_GAINS.into(), fdn::OUTPUT_GAINS.into()],
            },
        ),
        LossTerm::new(
            "matrix_density",
            w.matrix_density,
            LossKind::Sparsity {
                modules: vec![fdn::FEEDBACK.into()],
            },
        ),
    ]
    .into_iter()
    .filter(|l| l.weight != 0.0)
    .collect();
    let data = Dataset::single(InputSpec::Impulse { channel: None }, TargetSpec::None);

    let std_before = magnitude_std(&shell)?;
    let ir_before = render_fdn(&spec, cfg)?;
    let report = train(&mut shell, &data, &train_config(&cfg.train, cfg.seed, out), &losses)?;
    spec.update_from(shell.core())?;
    let std_after = magnitude_std(&shell)?;
    let ir_after = render_fdn(&spec, cfg)?;

    let window = default_window(fs_);
    let ed_before = echo_density(&ir_before, window)?;
    let ed_after = echo_density(&ir_after, window)?;
    write_echo_density(&out.join("echo_density_before.csv"), &ed_before)?;
    write_echo_density(&out.join("echo_density_after.csv"), &ed_after)?;
    let (_, scale_before) = wav::write_channels(&out.join("ir_before"), &[ir_before])?;
    let (_, scale_after) = wav::write_channels(&out.join("ir_after"), &[ir_after])?;
    let mut attenuated = spec.clone();
    attenuated.attenuation = Attenuation::Geq {
        t60: cfg.attenuation.t60.clone(),
        resolution: GeqResolution::parse(&cfg.attenuation.resolution)?,
    };
    write_json(
        &out.join("fdn_final.json"),
        &attenuated.build(&FrequencyGrid::unit(2, fs_)?)?.snapshot(),
    )?;

    let outcome = FdnOutcome {
        seed: cfg.seed,
        delays,
        gamma,
        initial_loss: report.initial_loss(),
        final_loss: report.final_loss(),
        magnitude_std_before: std_before,
        magnitude_std_after: std_after,
        magnitude_std_reduction: 1.0 - std_after / std_before,
        echo_density_09_before: ed_before.time_to_reach(0.9),
        echo_density_09_after: ed_after.time_to_reach(0.9),
        wav_scale_before: scale_before,
        wav_scale_after: scale_after,
        report: Some(report),
    };
    write_json(&out.join("summary.json"), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct AaOutcome {
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub flatness_before: f64,
    pub flatness_after: f64,
    pub eig_before: EigStats,
    pub eig_after: EigStats,
    pub iqr_before: f64,
    pub iqr_after: f64,
    #[serde(skip)]
    pub report: Option<TrainReport>,
}

/// Active acoustics: optimize `U` and `G` to flatten the loop `F_MM`.
pub fn run_aa_optim(cfg: &AaOptimConfig) -> Result<AaOutcome> {
    check_schema(&cfg.schema)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let fs_ = cfg.sample_rate;
    let mut spec = match &cfg.measured_dir {
        Some(dir) => {
            let room = wav::read_ir_matrix(dir, cfg.mics, cfg.loudspeakers, fs_)?;
            let reverb = aa::synth_room_responses(
                cfg.loudspeakers,
                cfg.loudspeakers,
                cfg.reverb_t60,
                fs_,
                cfg.seed.wrapping_add(1),
            )?;
            AaSpec::with_room(room, reverb, cfg.mixing_taps, cfg.seed.wrapping_add(2))?
        }
        None => AaSpec::synthetic(
            cfg.mics,
            cfg.loudspeakers,
            cfg.room_t60,
            cfg.reverb_t60,
            cfg.mixing_taps,
            fs_,
            cfg.seed,
        )?,
    };
    let grid = antialiased_grid(cfg.num_bins, fs_, cfg.antialias_db)?;
    if spec.loop_length() > grid.frame_len() {
        log::warn!(
            "loop response of {} samples exceeds the {}-sample frame",
            spec.loop_length(),
            grid.frame_len()
        );
    }
    let mut shell = spec.shell(&grid)?;
    let mut losses = vec![LossTerm::new("flatness", cfg.weights.flatness, LossKind::SpectralFlatness)];
    if cfg.weights.max_magnitude != 0.0 {
        losses.push(LossTerm::new(
            "max_magnitude",
            cfg.weights.max_magnitude,
            LossKind::MaxMagnitude {
                limit: cfg.max_magnitude_limit,
            },
        ));
    }
    let data = Dataset::single(InputSpec::IdentityMatrix, TargetSpec::None);

    let (bins_before, eig_before) = eig_magnitude_distribution(&shell.get_full_response()?)?;
    let report = train(&mut shell, &data, &train_config(&cfg.train, cfg.seed, out), &losses)?;
    spec.update_from(shell.core())?;
    let (bins_after, eig_after) = eig_magnitude_distribution(&shell.get_full_response()?)?;
    write_eig_stats(&out.join("eig_before.csv"), &grid, &bins_before)?;
    write_eig_stats(&out.join("eig_after.csv"), &grid, &bins_after)?;

    let outcome = AaOutcome {
        seed: cfg.seed,
        initial_loss: report.initial_loss(),
        final_loss: report.final_loss(),
        flatness_before: report.losses[0].terms[0],
        flatness_after: report.losses.last().expect("evaluated").terms[0],
        eig_before,
        eig_after,
        iqr_before: eig_before.iqr(),
        iqr_after: eig_after.iqr(),
        report: Some(report),
    };
    write_json(&out.join("summary.json"), &outcome)?;
    Ok(outcome)
}

/// Impulse response of a stored system, one WAV per output channel.
pub fn run_render(cfg: &RenderConfig) -> Result<Vec<PathBuf>> {
    check_schema(&cfg.schema)?;
    let grid = antialiased_grid(cfg.num_bins, cfg.sample_rate, cfg.antialias_db)?;
    let system = System::from_snapshot(&cfg.system, &grid)?;
    let shell = Shell::new(system, InputLayer::Identity, OutputLayer::Identity)?;
    let irs = shell.get_time_response(cfg.input_channel)?;
    Ok(wav::write_channels(&cfg.output, &irs)?.0)
}

pub fn run_metrics(cfg: &MetricsConfig) -> Result<PathBuf> {
    match cfg {
        MetricsConfig::EchoDensity {
            schema,
            input,
            window,
            output,
        } => {
            check_schema(schema)?;
            let ir = wav::read_mono(input)?;
            let p = echo_density(&ir, window.unwrap_or_else(|| default_window(ir.sample_rate)))?;
            write_echo_density(output, &p)?;
            Ok(output.clone())
        }
        MetricsConfig::Eig {
            schema,
            system,
            sample_rate,
            num_bins,
            output,
        } => {
            check_schema(schema)?;
            let grid = FrequencyGrid::unit(*num_bins, *sample_rate)?;
            let sys = System::from_snapshot(system, &grid)?;
            let (per_bin, _) = eig_magnitude_distribution(&sys.evaluate()?)?;
            write_eig_stats(output, &grid, &per_bin)?;
            Ok(output.clone())
        }
    }
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<Vec<gradcheck::CaseResult>> {
    check_schema(&cfg.schema)?;
    gradcheck::run_suite(cfg.num_bins, cfg.seeds, cfg.step, cfg.tol)
}
