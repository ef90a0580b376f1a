use log::warn;

use super::{check_finite, Ctx, Layout, Module, ModuleSnapshot, Param};
use crate::autodiff::{Array, Var};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;

/// Full `N_out × N_in` gain matrix, constant over frequency.
#[derive(Debug, Clone)]
pub struct Gain {
    name: String,
    grid: FrequencyGrid,
    layout: Layout,
    param: Param,
}

impl Gain {
    /// `values` is row-major `N_out × N_in`.
    pub fn new(name: &str, grid: &FrequencyGrid, n_out: usize, n_in: usize, values: &[f64]) -> Result<Self> {
        let layout = Layout::Full { n_out, n_in };
        if n_out == 0 || n_in == 0 {
            return Err(Error::Config(format!("gain '{name}' needs positive channel counts")));
        }
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            layout,
            param: Param::new(&[n_out, n_in], values)?,
        })
    }

    pub fn identity(name: &str, grid: &FrequencyGrid, n: usize) -> Result<Self> {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        Self::new(name, grid, n, n, &v)
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    pub fn param_mut(&mut self) -> &mut Param {
        &mut self.param
    }
}

impl Module for Gain {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "gain"
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
    fn frequency_independent(&self) -> bool {
        true
    }
    fn response_compact<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        check_finite(&self.name, &self.param)?;
        let mut shape = vec![1];
        shape.extend(self.layout.dims());
        ctx.param(&self.param).reshape(&shape)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        ModuleSnapshot::basic(self, "identity", &self.param)
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

/// Per-channel gains, constant over frequency.
#[derive(Debug, Clone)]
pub struct ParallelGain {
    name: String,
    grid: FrequencyGrid,
    param: Param,
}

impl ParallelGain {
    pub fn new(name: &str, grid: &FrequencyGrid, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config(format!("parallel gain '{name}' needs at least one channel")));
        }
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            param: Param::new(&[values.len()], values)?,
        })
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    pub fn param_mut(&mut self) -> &mut Param {
        &mut self.param
    }
}

impl Module for ParallelGain {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "parallel_gain"
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
    fn frequency_independent(&self) -> bool {
        true
    }
    fn response_compact<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        check_finite(&self.name, &self.param)?;
        ctx.param(&self.param).reshape(&[1, self.param.len()])
    }
    fn snapshot(&self) -> ModuleSnapshot {
        ModuleSnapshot::basic(self, "identity", &self.param)
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixMap {
    Identity,
    Orthogonal,
}

impl MatrixMap {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatrixMap::Identity => "identity",
            MatrixMap::Orthogonal => "orthogonal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(MatrixMap::Identity),
            "orthogonal" => Ok(MatrixMap::Orthogonal),
            _ => Err(Error::Config(format!("unknown matrix map '{s}'"))),
        }
    }
}

/// Square mixing matrix with a raw-to-constrained mapping.
#[derive(Debug, Clone)]
pub struct Matrix {
    name: String,
    grid: FrequencyGrid,
    n: usize,
    map: MatrixMap,
    param: Param,
}

impl Matrix {
    pub fn new(name: &str, grid: &FrequencyGrid, n: usize, map: MatrixMap, raw: &[f64]) -> Result<Self> {
        if n == 0 || raw.len() != n * n {
            return Err(Error::shape("matrix", &[n, n], &[raw.len()]));
        }
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            n,
            map,
            param: Param::new(&[n, n], raw)?,
        })
    }

    pub fn map(&self) -> MatrixMap {
        self.map
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    pub fn param_mut(&mut self) -> &mut Param {
        &mut self.param
    }

    /// The mapped matrix, row-major.
    pub fn mapped(&self) -> Result<Vec<f64>> {
        let tape = crate::autodiff::Tape::new();
        let ctx = Ctx::new(&tape);
        Ok(self.mapped_var(&ctx)?.value().re())
    }

    fn mapped_var<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        let raw = ctx.param(&self.param);
        match self.map {
            MatrixMap::Identity => Ok(raw),
            MatrixMap::Orthogonal => map_orthogonal(raw),
        }
    }
}

impl Module for Matrix {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "matrix"
    }
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()> {
        self.grid = grid.clone();
        Ok(())
    }
    fn layout(&self) -> Layout {
        Layout::Full {
            n_out: self.n,
            n_in: self.n,
        }
    }
    fn params(&self) -> Vec<&Param> {
        vec![&self.param]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.param]
    }
    fn frequency_independent(&self) -> bool {
        true
    }
    fn response_compact<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        check_finite(&self.name, &self.param)?;
        self.mapped_var(ctx)?.reshape(&[1, self.n, self.n])
    }
    fn snapshot(&self) -> ModuleSnapshot {
        ModuleSnapshot::basic(self, self.map.as_str(), &self.param)
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

const TAYLOR_ORDER: usize = 12;

/// Matrix exponential of a square `[N, N]` variable by scaling and squaring
/// with a degree-12 Taylor polynomial (scaled 1-norm ≤ 1/2).
pub fn expm<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let shape = x.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::shape("expm", &[shape[0], shape[0]], &shape));
    }
    let n = shape[0];
    let norm = x.with_value(|a| {
        (0..n)
            .map(|j| (0..n).map(|i| a.data()[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    });
    if norm > 10.0 {
        warn!("matrix exponential of a large argument (1-norm {norm:.2}); accuracy relies on extra squarings");
    }
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let t = x.scale_real(0.5f64.powi(squarings));
    let eye = x.tape().constant(Array::eye(n));
    let mut p = eye;
    for k in (1..=TAYLOR_ORDER).rev() {
        p = eye.add(t.matmul(p)?.scale_real(1.0 / k as f64))?;
    }
    for _ in 0..squarings {
        p = p.matmul(p)?;
    }
    Ok(p)
}

/// Orthogonal matrix `exp((W − Wᵀ)/2)` from an unconstrained square `W`.
pub fn map_orthogonal<'t>(raw: Var<'t>) -> Result<Var<'t>> {
    let shape = raw.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::shape("map_orthogonal", &[shape[0], shape[0]], &shape));
    }
    let skew = raw.sub(raw.transpose()?)?.scale_real(0.5);
    expm(skew)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use std::f64::consts::PI;

    fn orth(raw: &[f64], n: usize) -> Vec<f64> {
        let tape = Tape::new();
        let w = tape.constant_real(&[n, n], raw).unwrap();
        map_orthogonal(w).unwrap().value().re()
    }

    #[test]
    fn zero_maps_to_identity() {
        let a = orth(&[0.0; 9], 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[i * 3 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn quarter_turn_rotation() {
        let a = orth(&[0.0, PI, 0.0, 0.0], 2);
        let expect = [0.0, 1.0, -1.0, 0.0];
        for (x, e) in a.iter().zip(expect) {
            assert!((x - e).abs() < 1e-13, "{a:?}");
        }
    }

    #[test]
    fn rotation_closed_form() {
        for theta in [0.1, 1.3, 2.9, 7.5, 40.0] {
            let a = orth(&[0.0, 2.0 * theta, 0.0, 0.0], 2);
            let expect = [theta.cos(), theta.sin(), -theta.sin(), theta.cos()];
            for (x, e) in a.iter().zip(expect) {
                assert!((x - e).abs() < 1e-11, "theta {theta}: {a:?}");
            }
        }
    }

    #[test]
    fn expm_of_diagonal() {
        let tape = Tape::new();
        let x = tape.constant_real(&[2, 2], &[1.5, 0.0, 0.0, -3.0]).unwrap();
        let e = expm(x).unwrap().value().re();
        assert!((e[0] - 1.5f64.exp()).abs() < 1e-12 * 1.5f64.exp());
        assert!((e[3] - (-3.0f64).exp()).abs() < 1e-14);
    }
}
