use log::warn;

use super::{check_finite, Ctx, Layout, Module, ModuleSnapshot, Param};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;

fn warn_aliasing(name: &str, taps: usize, grid: &FrequencyGrid) {
    if taps > grid.frame_len() {
        warn!(
            "FIR '{name}' has {taps} taps but the grid frame holds {}; its response will time-alias",
            grid.frame_len()
        );
    }
}

/// FIR filter matrix, taps shaped `[K, N_out, N_in]`.
#[derive(Debug, Clone)]
pub struct Fir {
    name: String,
    grid: FrequencyGrid,
    layout: Layout,
    param: Param,
}

impl Fir {
    /// `taps` is row-major `[K, N_out, N_in]`.
    pub fn new(name: &str, grid: &FrequencyGrid, n_out: usize, n_in: usize, taps: &[f64]) -> Result<Self> {
        let per = n_out * n_in;
        if per == 0 || taps.is_empty() || !taps.len().is_multiple_of(per) {
            return Err(Error::shape("fir", &[0, n_out, n_in], &[taps.len()]));
        }
        let k = taps.len() / per;
        warn_aliasing(name, k, grid);
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            layout: Layout::Full { n_out, n_in },
            param: Param::new(&[k, n_out, n_in], taps)?,
        })
    }

    pub fn num_taps(&self) -> usize {
        self.param.shape()[0]
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    pub fn param_mut(&mut self) -> &mut Param {
        &mut self.param
    }
}

impl Module for Fir {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "fir"
    }
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()> {
        warn_aliasing(&self.name, self.num_taps(), grid);
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
        check_finite(&self.name, &self.param)?;
        ctx.param(&self.param).dft(&self.grid)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        ModuleSnapshot::basic(self, "identity", &self.param)
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

/// Per-channel FIR filters, taps shaped `[K, N]`.
#[derive(Debug, Clone)]
pub struct ParallelFir {
    name: String,
    grid: FrequencyGrid,
    n: usize,
    param: Param,
}

impl ParallelFir {
    /// `taps` is row-major `[K, N]`.
    pub fn new(name: &str, grid: &FrequencyGrid, n: usize, taps: &[f64]) -> Result<Self> {
        if n == 0 || taps.is_empty() || !taps.len().is_multiple_of(n) {
            return Err(Error::shape("parallel_fir", &[0, n], &[taps.len()]));
        }
        let k = taps.len() / n;
        warn_aliasing(name, k, grid);
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            n,
            param: Param::new(&[k, n], taps)?,
        })
    }

    pub fn num_taps(&self) -> usize {
        self.param.shape()[0]
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    pub fn param_mut(&mut self) -> &mut Param {
        &mut self.param
    }
}

impl Module for ParallelFir {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "parallel_fir"
    }
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()> {
        warn_aliasing(&self.name, self.num_taps(), grid);
        self.grid = grid.clone();
        Ok(())
    }
    fn layout(&self) -> Layout {
        Layout::Parallel(self.n)
    }
    fn params(&self) -> Vec<&Param> {
        vec![&self.param]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.param]
    }
    fn response_compact<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        check_finite(&self.name, &self.param)?;
        ctx.param(&self.param).dft(&self.grid)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        ModuleSnapshot::basic(self, "identity", &self.param)
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::C64;

    #[test]
    fn two_tap_average() {
        let grid = FrequencyGrid::unit(3, 48000.0).unwrap();
        let f = Fir::new("f", &grid, 1, 1, &[0.5, 0.5]).unwrap();
        let r = f.evaluate().unwrap();
        assert_eq!(r.shape(), &[3, 1, 1]);
        let expect = [C64::new(1.0, 0.0), C64::new(0.5, -0.5), C64::new(0.0, 0.0)];
        for (z, e) in r.data().iter().zip(expect) {
            assert!((z - e).norm() < 1e-15);
        }
    }

    #[test]
    fn parallel_layout() {
        let grid = FrequencyGrid::unit(5, 48000.0).unwrap();
        let f = ParallelFir::new("f", &grid, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = f.evaluate().unwrap();
        assert_eq!(r.shape(), &[5, 2]);
        assert!((r.data()[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(Fir::new("bad", &grid, 2, 2, &[1.0, 2.0, 3.0]).is_err());
    }
}
