//! Learnable LTI processors evaluated on a frequency grid.
//!
//! Response shapes: full modules return `[M, N_out, N_in]`, parallel modules
//! `[M, N]`. Frequency-independent modules may return a leading axis of 1
//! from [`Module::response_compact`]; [`Module::response`] always expands to
//! `M` bins. Signals are `[B, M, N]`.

mod delay;
mod fir;
mod gain;
mod init;
mod snapshot;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};

pub use delay::{Delay, ParallelDelay};
pub use fir::{Fir, ParallelFir};
pub use gain::{expm, map_orthogonal, Gain, Matrix, MatrixMap, ParallelGain};
pub use init::{set_initial, Distribution};
pub use snapshot::{module_from_snapshot, ModuleSnapshot};

use crate::autodiff::{Array, Gradients, Tape, Var, C64};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;

static NEXT_PARAM: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        ParamId(NEXT_PARAM.fetch_add(1, Ordering::Relaxed))
    }
}

/// Raw real parameter array owned by a module.
#[derive(Debug)]
pub struct Param {
    id: ParamId,
    value: Array,
    pub requires_grad: bool,
}

impl Clone for Param {
    /// Clones get a fresh identity so copies are never tied on a tape.
    fn clone(&self) -> Self {
        Self {
            id: ParamId::fresh(),
            value: self.value.clone(),
            requires_grad: self.requires_grad,
        }
    }
}

impl Param {
    pub fn new(shape: &[usize], data: &[f64]) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("parameter values must be finite".into()));
        }
        Ok(Self {
            id: ParamId::fresh(),
            value: Array::from_real(shape.to_vec(), data)?,
            requires_grad: true,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, &vec![0.0; shape.iter().product()]).expect("zeros")
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.value.re()
    }

    pub fn set_values(&mut self, data: &[f64]) -> Result<()> {
        if data.len() != self.value.len() {
            return Err(Error::shape("set_values", &[self.value.len()], &[data.len()]));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("parameter values must be finite".into()));
        }
        for (z, x) in self.value.data_mut().iter_mut().zip(data) {
            *z = C64::new(*x, 0.0);
        }
        Ok(())
    }

    pub fn array(&self) -> &Array {
        &self.value
    }
}

/// Evaluation context: one tape plus the leaf created for each parameter.
pub struct Ctx<'t> {
    tape: &'t Tape,
    leaves: RefCell<HashMap<ParamId, Var<'t>>>,
}

impl<'t> Ctx<'t> {
    pub fn new(tape: &'t Tape) -> Self {
        Self {
            tape,
            leaves: RefCell::new(HashMap::new()),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Leaf for a learnable parameter, constant otherwise. Repeated calls
    /// return the same node.
    pub fn param(&self, p: &Param) -> Var<'t> {
        if let Some(v) = self.leaves.borrow().get(&p.id) {
            return *v;
        }
        let v = if p.requires_grad {
            self.tape.leaf(p.value.clone())
        } else {
            self.tape.constant(p.value.clone())
        };
        self.leaves.borrow_mut().insert(p.id, v);
        v
    }

    /// Uses `v` as the node of `p` from now on.
    pub fn bind(&self, p: &Param, v: Var<'t>) -> Result<()> {
        if v.shape() != p.shape() {
            return Err(Error::shape("bind", p.shape(), &v.shape()));
        }
        self.leaves.borrow_mut().insert(p.id, v);
        Ok(())
    }

    pub fn grad(&self, grads: &Gradients, p: &Param) -> Option<Array> {
        let v = *self.leaves.borrow().get(&p.id)?;
        grads.get(&v).cloned()
    }

    pub fn constant(&self, a: Array) -> Var<'t> {
        self.tape.constant(a)
    }

    pub fn constant_real(&self, shape: &[usize], data: &[f64]) -> Result<Var<'t>> {
        self.tape.constant_real(shape, data)
    }

    pub fn scalar(&self, x: f64) -> Var<'t> {
        self.tape.scalar(x)
    }
}

/// Channel layout of a module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Full { n_out: usize, n_in: usize },
    Parallel(usize),
}

impl Layout {
    pub fn n_in(&self) -> usize {
        match *self {
            Layout::Full { n_in, .. } => n_in,
            Layout::Parallel(n) => n,
        }
    }

    pub fn n_out(&self) -> usize {
        match *self {
            Layout::Full { n_out, .. } => n_out,
            Layout::Parallel(n) => n,
        }
    }

    pub fn is_parallel(&self) -> bool {
        matches!(self, Layout::Parallel(_))
    }

    /// Trailing channel axes of parameter and response arrays.
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Layout::Full { n_out, n_in } => vec![n_out, n_in],
            Layout::Parallel(n) => vec![n],
        }
    }

    pub fn channels(&self) -> usize {
        self.dims().iter().product()
    }

    pub(crate) fn from_dims(dims: &[usize]) -> Result<Self> {
        match *dims {
            [n] if n > 0 => Ok(Layout::Parallel(n)),
            [o, i] if o > 0 && i > 0 => Ok(Layout::Full { n_out: o, n_in: i }),
            _ => Err(Error::Config(format!("invalid channel dimensions {dims:?}"))),
        }
    }
}

pub trait Module: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn set_name(&mut self, name: &str);
    /// Snapshot type tag, e.g. `"parallel_delay"`.
    fn kind(&self) -> &'static str;
    fn grid(&self) -> &FrequencyGrid;
    fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()>;
    fn layout(&self) -> Layout;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    fn snapshot(&self) -> ModuleSnapshot;
    fn clone_box(&self) -> Box<dyn Module>;

    /// Response with a leading axis of `M`, or 1 for frequency-independent modules.
    fn response_compact<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>>;

    fn frequency_independent(&self) -> bool {
        false
    }

    fn n_in(&self) -> usize {
        self.layout().n_in()
    }

    fn n_out(&self) -> usize {
        self.layout().n_out()
    }

    fn is_parallel(&self) -> bool {
        self.layout().is_parallel()
    }

    /// Response in the exact per-bin layout (`[M, N_out, N_in]` or `[M, N]`).
    fn response<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        let r = self.response_compact(ctx)?;
        let mut shape = vec![self.grid().num_bins()];
        shape.extend(self.layout().dims());
        r.broadcast_to(&shape)
    }

    /// Per-bin matrix `[M | 1, N_out, N_in]`; parallel responses become diagonal.
    fn full_response<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        let r = self.response_compact(ctx)?;
        if self.is_parallel() {
            r.diag_embed()
        } else {
            Ok(r)
        }
    }

    /// Processes a `[B, M, N_in]` signal into `[B, M, N_out]`.
    fn apply<'t>(&self, ctx: &Ctx<'t>, signal: Var<'t>) -> Result<Var<'t>> {
        let s = signal.shape();
        check_signal(&s, self.grid(), self.n_in())?;
        let r = self.response_compact(ctx)?;
        if self.is_parallel() {
            let rs = r.shape();
            r.reshape(&[1, rs[0], rs[1]])?.mul(signal)
        } else {
            apply_matrix(r, signal)
        }
    }

    /// Evaluates the response values without keeping a tape.
    fn evaluate(&self) -> Result<Array> {
        let tape = Tape::new();
        let ctx = Ctx::new(&tape);
        Ok(self.response(&ctx)?.value())
    }
}

impl Clone for Box<dyn Module> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub(crate) fn check_signal(shape: &[usize], grid: &FrequencyGrid, n_in: usize) -> Result<()> {
    if shape.len() != 3 || shape[1] != grid.num_bins() || shape[2] != n_in {
        return Err(Error::shape(
            "apply",
            &[shape.first().copied().unwrap_or(1), grid.num_bins(), n_in],
            shape,
        ));
    }
    Ok(())
}

/// `[M|1, O, I] × [B, M, I] → [B, M, O]` per bin.
pub(crate) fn apply_matrix<'t>(h: Var<'t>, signal: Var<'t>) -> Result<Var<'t>> {
    let s = signal.shape();
    let hs = h.shape();
    let x = signal.reshape(&[s[0], s[1], s[2], 1])?;
    let h = h.reshape(&[1, hs[0], hs[1], hs[2]])?;
    let y = h.matmul(x)?;
    let ys = y.shape();
    y.reshape(&[ys[0], ys[1], ys[2]])
}

/// Builds a ones-everywhere impulse spectrum `[1, M, n]`.
pub fn impulse_spectrum(grid: &FrequencyGrid, n: usize) -> Array {
    Array::full(&[1, grid.num_bins(), n], C64::new(1.0, 0.0))
}

/// Evaluates `Σ_k coeffs[k] z^{-k}` on the grid for coefficient arrays
/// `[K, ...]`, and divides by the denominator polynomial when given.
pub(crate) fn rational_response<'t>(num: Var<'t>, den: Option<Var<'t>>, grid: &FrequencyGrid) -> Result<Var<'t>> {
    let b = num.dft(grid)?;
    match den {
        Some(a) => b.div(a.dft(grid)?),
        None => Ok(b),
    }
}

pub(crate) fn check_finite(name: &str, p: &Param) -> Result<()> {
    if !p.array().is_finite() {
        return Err(Error::Config(format!("module '{name}' has non-finite parameters")));
    }
    Ok(())
}
