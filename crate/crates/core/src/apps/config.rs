//! JSON configuration files, schema `flamo-spec-1`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::SystemSnapshot;
use crate::train::OptimizerKind;

pub const SCHEMA: &str = "flamo-spec-1";
pub const SEED_ENV: &str = "FREQSAMP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "ten")]
    pub log_every: usize,
    #[serde(default)]
    pub patience: Option<usize>,
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdnWeights {
    pub flatness: f64,
    /// Uniformity of the input and output gains.
    pub gain_sparsity: f64,
    /// Uniformity of the feedback matrix rows.
    pub matrix_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuationSection {
    /// One T60 per GEQ band, or a single value for all bands.
    pub t60: Vec<f64>,
    #[serde(default = "octave")]
    pub resolution: String,
}

fn octave() -> String {
    "octave".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    pub num_bins: usize,
    pub antialias_db: f64,
    /// Length of the exported impulse responses.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdnOptimConfig {
    pub schema: String,
    pub seed: u64,
    pub sample_rate: f64,
    pub size: usize,
    /// Delay lengths in samples; primes spanning 1000–4000 at 48 kHz when absent.
    #[serde(default)]
    pub delays: Option<Vec<f64>>,
    pub num_bins: usize,
    pub antialias_db: f64,
    pub train: TrainSection,
    pub weights: FdnWeights,
    pub attenuation: AttenuationSection,
    pub render: RenderSection,
    pub output_dir: PathBuf,
}

impl Default for FdnOptimConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.into(),
            seed: 1,
            sample_rate: 48000.0,
            size: 6,
            delays: None,
            num_bins: 24001,
            antialias_db: 60.0,
            train: TrainSection {
                epochs: 300,
                lr: 1e-2,
                optimizer: OptimizerKind::default(),
                log_every: 10,
                patience: None,
            },
            weights: FdnWeights {
                flatness: 1.0,
                gain_sparsity: 0.1,
                matrix_density: 1.0,
            },
            attenuation: AttenuationSection {
                t60: vec![2.0],
                resolution: octave(),
            },
            render: RenderSection {
                num_bins: 48001,
                antialias_db: 60.0,
                seconds: 1.5,
            },
            output_dir: "fdn_out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AaWeights {
    pub flatness: f64,
    /// Penalty on loop magnitudes above `max_magnitude_limit`; 0 disables.
    #[serde(default)]
    pub max_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AaOptimConfig {
    pub schema: String,
    pub seed: u64,
    pub sample_rate: f64,
    pub mics: usize,
    pub loudspeakers: usize,
    /// T60 of the synthetic room responses.
    pub room_t60: f64,
    /// T60 of the fixed noise reverb.
    pub reverb_t60: f64,
    pub mixing_taps: usize,
    /// Directory of measured `mic<i>_ls<j>.wav` responses replacing the
    /// synthetic room.
    #[serde(default)]
    pub measured_dir: Option<PathBuf>,
    pub num_bins: usize,
    #[serde(default)]
    pub antialias_db: f64,
    pub train: TrainSection,
    pub weights: AaWeights,
    #[serde(default = "one")]
    pub max_magnitude_limit: f64,
    pub output_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

impl Default for AaOptimConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.into(),
            seed: 0,
            sample_rate: 8000.0,
            mics: 4,
            loudspeakers: 4,
            room_t60: 0.3,
            reverb_t60: 0.05,
            mixing_taps: 64,
            measured_dir: None,
            num_bins: 2049,
            antialias_db: 0.0,
            train: TrainSection {
                epochs: 300,
                lr: 1e-2,
                optimizer: OptimizerKind::default(),
                log_every: 10,
                patience: None,
            },
            weights: AaWeights {
                flatness: 1.0,
                max_magnitude: 0.0,
            },
            max_magnitude_limit: 1.0,
            output_dir: "aa_out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub schema: String,
    pub system: SystemSnapshot,
    pub sample_rate: f64,
    pub num_bins: usize,
    #[serde(default)]
    pub antialias_db: f64,
    /// Input channel fed with the impulse; all inputs when absent.
    #[serde(default)]
    pub input_channel: Option<usize>,
    /// Output path prefix; files are `<output>_ch<k>.wav`.
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
pub enum MetricsConfig {
    /// Echo density of a mono WAV file → `time_s,eta`.
    EchoDensity {
        schema: String,
        input: PathBuf,
        #[serde(default)]
        window: Option<usize>,
        output: PathBuf,
    },
    /// Eigenvalue statistics of a square system → `freq_hz,q25,q75,max`.
    Eig {
        schema: String,
        system: SystemSnapshot,
        sample_rate: f64,
        num_bins: usize,
        output: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub schema: String,
    pub num_bins: usize,
    pub seeds: usize,
    #[serde(default = "step")]
    pub step: f64,
    #[serde(default = "tol")]
    pub tol: f64,
}

fn step() -> f64 {
    super::gradcheck::DEFAULT_STEP
}
fn tol() -> f64 {
    super::gradcheck::DEFAULT_TOL
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.into(),
            num_bins: 4096,
            seeds: 10,
            step: step(),
            tol: tol(),
        }
    }
}

pub fn check_schema(schema: &str) -> Result<()> {
    if schema != SCHEMA {
        return Err(Error::Config(format!(
            "unsupported config schema '{schema}', expected '{SCHEMA}'"
        )));
    }
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// `FREQSAMP_SEED` when set, else the configured seed.
pub fn effective_seed(configured: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer"))),
        Err(_) => Ok(configured),
    }
}
