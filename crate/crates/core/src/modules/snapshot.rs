use serde::{Deserialize, Serialize};

use super::{Delay, Fir, Gain, Layout, Matrix, MatrixMap, Module, ParallelDelay, ParallelFir, ParallelGain, Param};
use crate::error::{Error, Result};
use crate::filters::{Biquad, BiquadKind, Geq, GeqResolution, Svf, SvfMode};
use crate::grid::FrequencyGrid;

/// Serialized parameter state of one module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSnapshot {
    #[serde(rename = "module-name")]
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    /// Shape of `raw_params`.
    pub shape: Vec<usize>,
    pub map: String,
    /// Row-major raw values.
    pub raw_params: Vec<f64>,
    /// Channel axes: `[N]` for parallel modules, `[N_out, N_in]` otherwise.
    pub channels: Vec<usize>,
    #[serde(default = "yes")]
    pub requires_grad: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractional: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "filter-kind")]
    pub filter_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<String>,
}

fn yes() -> bool {
    true
}

impl ModuleSnapshot {
    pub(crate) fn basic(m: &dyn Module, map: &str, p: &Param) -> Self {
        Self {
            name: m.name().into(),
            kind: m.kind().into(),
            shape: p.shape().to_vec(),
            map: map.into(),
            raw_params: p.values(),
            channels: m.layout().dims(),
            requires_grad: p.requires_grad,
            unit: None,
            fractional: None,
            filter_kind: None,
            mode: None,
            resolution: None,
        }
    }

    fn field<T: Clone>(&self, v: &Option<T>, what: &str) -> Result<T> {
        v.clone()
            .ok_or_else(|| Error::Config(format!("snapshot of '{}' lacks '{what}'", self.name)))
    }
}

/// Rebuilds a module from its snapshot on `grid`.
pub fn module_from_snapshot(s: &ModuleSnapshot, grid: &FrequencyGrid) -> Result<Box<dyn Module>> {
    let expect: usize = s.shape.iter().product();
    if expect != s.raw_params.len() {
        return Err(Error::Config(format!(
            "snapshot of '{}' has shape {:?} but {} values",
            s.name,
            s.shape,
            s.raw_params.len()
        )));
    }
    let layout = Layout::from_dims(&s.channels)?;
    let full = |what: &str| match layout {
        Layout::Full { n_out, n_in } => Ok((n_out, n_in)),
        Layout::Parallel(_) => Err(Error::Config(format!("{what} '{}' needs two channel axes", s.name))),
    };
    let v = &s.raw_params;
    let mut m: Box<dyn Module> = match s.kind.as_str() {
        "gain" => {
            let (o, i) = full("gain")?;
            Box::new(Gain::new(&s.name, grid, o, i, v)?)
        }
        "parallel_gain" => Box::new(ParallelGain::new(&s.name, grid, v)?),
        "matrix" => {
            let (o, _) = full("matrix")?;
            Box::new(Matrix::new(&s.name, grid, o, MatrixMap::parse(&s.map)?, v)?)
        }
        "fir" => {
            let (o, i) = full("fir")?;
            Box::new(Fir::new(&s.name, grid, o, i, v)?)
        }
        "parallel_fir" => Box::new(ParallelFir::new(&s.name, grid, layout.n_in(), v)?),
        "delay" => {
            let (o, i) = full("delay")?;
            let unit = s.field(&s.unit, "unit")?;
            let frac = s.fractional.unwrap_or(true);
            Box::new(Delay::new(&s.name, grid, o, i, v, unit, frac)?)
        }
        "parallel_delay" => {
            let unit = s.field(&s.unit, "unit")?;
            let frac = s.fractional.unwrap_or(true);
            Box::new(ParallelDelay::new(&s.name, grid, v, unit, frac)?)
        }
        "biquad" => {
            let kind = BiquadKind::parse(&s.field(&s.filter_kind, "filter-kind")?)?;
            Box::new(Biquad::new(&s.name, grid, kind, layout, v)?)
        }
        "svf" => {
            let mode = SvfMode::parse(&s.field(&s.mode, "mode")?)?;
            let sections = *s.shape.first().unwrap_or(&1);
            Box::new(Svf::new(&s.name, grid, mode, layout, sections, v)?)
        }
        "geq" => {
            let res = GeqResolution::parse(&s.field(&s.resolution, "resolution")?)?;
            Box::new(Geq::new(&s.name, grid, res, layout, v)?)
        }
        other => return Err(Error::Config(format!("unknown module type '{other}'"))),
    };
    for p in m.params_mut() {
        if !s.requires_grad {
            p.requires_grad = false;
        }
    }
    if m.params().iter().map(|p| p.shape().to_vec()).next() != Some(s.shape.clone()) {
        return Err(Error::Config(format!(
            "snapshot of '{}' has shape {:?}, module expects {:?}",
            s.name,
            s.shape,
            m.params().first().map(|p| p.shape().to_vec())
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_roundtrip() {
        let grid = FrequencyGrid::unit(8, 8000.0).unwrap();
        let d = ParallelDelay::new("lines", &grid, &[1e-3, 2e-3], 1.0, true).unwrap();
        let s = d.snapshot();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"module-name\":\"lines\""));
        let back: ModuleSnapshot = serde_json::from_str(&json).unwrap();
        let m = module_from_snapshot(&back, &grid).unwrap();
        assert_eq!(m.snapshot(), s);
        assert_eq!(m.evaluate().unwrap(), d.evaluate().unwrap());
    }

    #[test]
    fn unknown_type_is_config_error() {
        let grid = FrequencyGrid::unit(8, 8000.0).unwrap();
        let mut s = ParallelGain::new("g", &grid, &[1.0]).unwrap().snapshot();
        s.kind = "mystery".into();
        assert!(matches!(module_from_snapshot(&s, &grid), Err(Error::Config(_))));
    }
}
