use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use super::Module;
use crate::error::{Error, Result};

/// Initial-value distributions for raw parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl Distribution {
    /// `"normal"` is N(0, 1); `"uniform"` is U[−1, 1].
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "normal" => Ok(Distribution::Normal { mean: 0.0, std: 1.0 }),
            "uniform" => Ok(Distribution::Uniform { low: -1.0, high: 1.0 }),
            _ => Err(Error::Config(format!(
                "unknown distribution '{name}' (expected 'normal' or 'uniform')"
            ))),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<f64>> {
        match *self {
            Distribution::Normal { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?;
                Ok((0..n).map(|_| d.sample(rng)).collect())
            }
            Distribution::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(Error::Config(format!("uniform range [{low}, {high}] is empty")));
                }
                Ok((0..n).map(|_| low + (high - low) * rng.random::<f64>()).collect())
            }
        }
    }
}

/// Redraws every learnable parameter of `module`, deterministically per seed.
pub fn set_initial(module: &mut dyn Module, distribution: &str, seed: u64) -> Result<()> {
    let dist = Distribution::parse(distribution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in module.params_mut() {
        if p.requires_grad {
            let v = dist.sample(&mut rng, p.len())?;
            p.set_values(&v)?;
        }
    }
    Ok(())
}
