use log::warn;

use super::{check_finite, Ctx, Layout, Module, ModuleSnapshot, Param};
use crate::autodiff::{Array, Var};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;

/// Delay lengths `m = raw·unit·fs` samples; response `z^{-m}` per entry.
fn delay_response<'t>(
    ctx: &Ctx<'t>,
    name: &str,
    param: &Param,
    unit: f64,
    fractional: bool,
    grid: &FrequencyGrid,
    dims: &[usize],
) -> Result<Var<'t>> {
    check_finite(name, param)?;
    let scale = unit * grid.sample_rate();
    let samples: Vec<f64> = param.values().iter().map(|r| r * scale).collect();
    let mut shape = vec![1];
    shape.extend(dims);
    let m = if !fractional {
        let rounded: Vec<f64> = samples.iter().map(|m| m.max(0.0).round_ties_even()).collect();
        if samples.iter().any(|m| *m < 0.0) {
            warn!("delay '{name}' has negative lengths; clamped to 0");
        }
        ctx.constant_real(&shape, &rounded)?
    } else if samples.iter().any(|m| *m < 0.0) {
        warn!("delay '{name}' has negative lengths; clamped to 0");
        let mask: Vec<f64> = samples.iter().map(|m| if *m < 0.0 { 0.0 } else { 1.0 }).collect();
        ctx.param(param)
            .scale_real(scale)
            .mul(ctx.constant_real(param.shape(), &mask)?)?
            .reshape(&shape)?
    } else {
        ctx.param(param).scale_real(scale).reshape(&shape)?
    };
    let mut lshape = vec![grid.num_bins()];
    lshape.extend(std::iter::repeat_n(1, dims.len()));
    let ln_z = ctx.constant(Array::new(lshape, grid.log_points())?);
    Ok(m.mul(ln_z)?.neg().exp())
}

macro_rules! delay_accessors {
    () => {
        pub fn unit(&self) -> f64 {
            self.unit
        }

        pub fn fractional(&self) -> bool {
            self.fractional
        }

        /// Switching to integer mode freezes the parameter.
        pub fn set_fractional(&mut self, fractional: bool) {
            self.fractional = fractional;
            if !fractional {
                self.param.requires_grad = false;
            }
        }

        /// Mapped delay lengths in samples (before rounding).
        pub fn samples(&self) -> Vec<f64> {
            let s = self.unit * self.grid.sample_rate();
            self.param.values().iter().map(|r| r * s).collect()
        }

        pub fn param(&self) -> &Param {
            &self.param
        }

        pub fn param_mut(&mut self) -> &mut Param {
            &mut self.param
        }
    };
}

fn check_unit(unit: f64) -> Result<()> {
    if !(unit > 0.0 && unit.is_finite()) {
        return Err(Error::Domain(format!("delay unit must be positive, got {unit}")));
    }
    Ok(())
}

/// Per-channel delays.
#[derive(Debug, Clone)]
pub struct ParallelDelay {
    name: String,
    grid: FrequencyGrid,
    param: Param,
    unit: f64,
    fractional: bool,
}

impl ParallelDelay {
    /// `raw` holds lengths in multiples of `unit` seconds.
    pub fn new(name: &str, grid: &FrequencyGrid, raw: &[f64], unit: f64, fractional: bool) -> Result<Self> {
        check_unit(unit)?;
        if raw.is_empty() {
            return Err(Error::Config(format!("delay '{name}' needs at least one channel")));
        }
        let mut d = Self {
            name: name.into(),
            grid: grid.clone(),
            param: Param::new(&[raw.len()], raw)?,
            unit,
            fractional: true,
        };
        d.set_fractional(fractional);
        Ok(d)
    }

    /// Delays given in samples, stored with `unit` seconds.
    pub fn from_samples(name: &str, grid: &FrequencyGrid, samples: &[f64], unit: f64, fractional: bool) -> Result<Self> {
        check_unit(unit)?;
        let s = unit * grid.sample_rate();
        let raw: Vec<f64> = samples.iter().map(|m| m / s).collect();
        Self::new(name, grid, &raw, unit, fractional)
    }

    delay_accessors!();
}

impl Module for ParallelDelay {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "parallel_delay"
    }
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()> {
        self.grid = grid.clone();
        Ok(())
    }
    fn layout(&self) -> Layout {
        Layout::Parallel(self.param.len())
    }
    fn params(&self) -> Vec<&Param> {
        vec![&self.param]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.param]
    }
    fn response_compact<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        let dims = self.layout().dims();
        delay_response(ctx, &self.name, &self.param, self.unit, self.fractional, &self.grid, &dims)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        let mut s = ModuleSnapshot::basic(self, "identity", &self.param);
        s.unit = Some(self.unit);
        s.fractional = Some(self.fractional);
        s
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

/// Full delay matrix: one delay per (output, input) pair.
#[derive(Debug, Clone)]
pub struct Delay {
    name: String,
    grid: FrequencyGrid,
    layout: Layout,
    param: Param,
    unit: f64,
    fractional: bool,
}

impl Delay {
    /// `raw` is row-major `N_out × N_in`, in multiples of `unit` seconds.
    pub fn new(
        name: &str,
        grid: &FrequencyGrid,
        n_out: usize,
        n_in: usize,
        raw: &[f64],
        unit: f64,
        fractional: bool,
    ) -> Result<Self> {
        check_unit(unit)?;
        if n_out * n_in == 0 || raw.len() != n_out * n_in {
            return Err(Error::shape("delay", &[n_out, n_in], &[raw.len()]));
        }
        let mut d = Self {
            name: name.into(),
            grid: grid.clone(),
            layout: Layout::Full { n_out, n_in },
            param: Param::new(&[n_out, n_in], raw)?,
            unit,
            fractional: true,
        };
        d.set_fractional(fractional);
        Ok(d)
    }

    delay_accessors!();
}

impl Module for Delay {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "delay"
    }
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()> {
        self.grid = grid.clone();
        Ok(())
    }
    fn layout(&self) -> Layout {
        self.layout
    }
    fn params(&self) -> Vec<&Param> {
        vec![&self.param]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.param]
    }
    fn response_compact<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        let dims = self.layout.dims();
        delay_response(ctx, &self.name, &self.param, self.unit, self.fractional, &self.grid, &dims)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        let mut s = ModuleSnapshot::basic(self, "identity", &self.param);
        s.unit = Some(self.unit);
        s.fractional = Some(self.fractional);
        s
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}
