//! 32-bit float WAV export and import.

use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::aa::FirMatrix;
use crate::error::{Error, Result};
use crate::grid::RealSignal;

/// Writes `<prefix>_ch<k>.wav` per channel, all scaled by one factor so the
/// loudest sample is ±1. Returns the paths and the factor.
pub fn write_channels(prefix: &Path, channels: &[RealSignal]) -> Result<(Vec<PathBuf>, f64)> {
    let peak = channels.iter().map(RealSignal::peak).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let stem = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut paths = Vec::with_capacity(channels.len());
    for (k, ch) in channels.iter().enumerate() {
        let path = prefix.with_file_name(format!("{stem}_ch{k}.wav"));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        write_mono(&path, ch, scale)?;
        paths.push(path);
    }
    log::info!(
        "wrote {} channel(s) with {}, peak scale factor {scale}",
        channels.len(),
        prefix.display()
    );
    Ok((paths, scale))
}

fn write_mono(path: &Path, signal: &RealSignal, scale: f64) -> Result<()> {
    let rate = signal.sample_rate.round();
    if !(rate >= 1.0 && rate <= u32::MAX as f64) {
        return Err(Error::Domain(format!(
            "sample rate {} cannot be stored in a WAV file",
            signal.sample_rate
        )));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for x in &signal.samples {
        w.write_sample((x * scale) as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads a mono WAV file as a signal in [−1, 1].
pub fn read_mono(path: &Path) -> Result<RealSignal> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::Config(format!(
            "{} has {} channels, expected 1",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    RealSignal::new(samples, spec.sample_rate as f64)
}

/// Loads measured responses `mic<i>_ls<j>.wav` (zero-based) from `dir` into
/// a mics × loudspeakers FIR matrix. Every file must share `sample_rate`.
pub fn read_ir_matrix(dir: &Path, mics: usize, loudspeakers: usize, sample_rate: f64) -> Result<FirMatrix> {
    let mut entries = Vec::with_capacity(mics * loudspeakers);
    for i in 0..mics {
        for j in 0..loudspeakers {
            let path = dir.join(format!("mic{i}_ls{j}.wav"));
            let s = read_mono(&path)?;
            if s.sample_rate != sample_rate {
                return Err(Error::Config(format!(
                    "{} is sampled at {} Hz, expected {sample_rate}",
                    path.display(),
                    s.sample_rate
                )));
            }
            entries.push(s.samples);
        }
    }
    FirMatrix::from_entries(mics, loudspeakers, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let a = RealSignal::new(vec![0.0, 2.0, -4.0], 8000.0).unwrap();
        let b = RealSignal::new(vec![1.0, 0.0, 0.0], 8000.0).unwrap();
        let (paths, scale) = write_channels(&dir.path().join("ir"), &[a, b]).unwrap();
        assert_eq!(scale, 0.25);
        assert!(paths[1].ends_with("ir_ch1.wav"));
        let back = read_mono(&paths[0]).unwrap();
        assert_eq!(back.samples, vec![0.0, 0.5, -1.0]);
        assert_eq!(back.sample_rate, 8000.0);
    }

    #[test]
    fn loads_ir_matrix() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..2 {
            let s = RealSignal::new(vec![0.5 * i as f64, 0.25], 8000.0).unwrap();
            write_mono(&dir.path().join(format!("mic{i}_ls0.wav")), &s, 1.0).unwrap();
        }
        let m = read_ir_matrix(dir.path(), 2, 1, 8000.0).unwrap();
        assert_eq!(m.entry(1, 0), vec![0.5, 0.25]);
        assert!(read_ir_matrix(dir.path(), 3, 1, 8000.0).is_err());
    }
}
