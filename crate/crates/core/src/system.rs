//! Composition of modules: series chains, feedback loops and parallel sums.
//!
//! A series in declaration order `[H₁, H₂, …, H_k]` processes the signal
//! with `H₁` first, so its per-bin matrix is the right-to-left product
//! `H_k ⋯ H₂ H₁`. A recursion with feedforward `G` and feedback `F` has the
//! response `(I − G F)⁻¹ G`, evaluated as a per-bin linear solve.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Tape, Var, C64};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::modules::{apply_matrix, check_signal, module_from_snapshot, Ctx, Module, ModuleSnapshot, Param};

#[derive(Debug, Clone)]
pub enum System {
    Module(Box<dyn Module>),
    Series(Vec<System>),
    Recursion(Box<Recursion>),
    /// Branches fed the same input, outputs added.
    Sum(Vec<System>),
}

#[derive(Debug, Clone)]
pub struct Recursion {
    pub feedforward: System,
    pub feedback: System,
}

impl<M: Module + 'static> From<M> for System {
    fn from(m: M) -> Self {
        System::Module(Box::new(m))
    }
}

impl System {
    pub fn module(m: impl Module + 'static) -> Self {
        System::Module(Box::new(m))
    }

    /// Series in signal-flow order; nested series are flattened. Fails on
    /// any flow finding.
    pub fn series(stages: Vec<System>) -> Result<Self> {
        let s = Self::series_unchecked(stages);
        s.ensure_valid()?;
        Ok(s)
    }

    pub fn series_unchecked(stages: Vec<System>) -> Self {
        let mut flat = Vec::with_capacity(stages.len());
        for s in stages {
            match s {
                System::Series(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        System::Series(flat)
    }

    pub fn recursion(feedforward: System, feedback: System) -> Result<Self> {
        let s = Self::recursion_unchecked(feedforward, feedback);
        s.ensure_valid()?;
        Ok(s)
    }

    pub fn recursion_unchecked(feedforward: System, feedback: System) -> Self {
        System::Recursion(Box::new(Recursion { feedforward, feedback }))
    }

    pub fn sum(branches: Vec<System>) -> Result<Self> {
        let s = System::Sum(branches);
        s.ensure_valid()?;
        Ok(s)
    }

    fn ensure_valid(&self) -> Result<()> {
        let findings = self.validate_flow();
        if findings.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(findings.join("; ")))
        }
    }

    pub fn n_in(&self) -> usize {
        match self {
            System::Module(m) => m.n_in(),
            System::Series(v) => v.first().map_or(0, |s| s.n_in()),
            System::Recursion(r) => r.feedforward.n_in(),
            System::Sum(v) => v.first().map_or(0, |s| s.n_in()),
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            System::Module(m) => m.n_out(),
            System::Series(v) => v.last().map_or(0, |s| s.n_out()),
            System::Recursion(r) => r.feedforward.n_out(),
            System::Sum(v) => v.first().map_or(0, |s| s.n_out()),
        }
    }

    pub fn modules(&self) -> Vec<&dyn Module> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a dyn Module>) {
        match self {
            System::Module(m) => out.push(m.as_ref()),
            System::Series(v) | System::Sum(v) => v.iter().for_each(|s| s.collect(out)),
            System::Recursion(r) => {
                r.feedforward.collect(out);
                r.feedback.collect(out);
            }
        }
    }

    pub fn modules_mut(&mut self) -> Vec<&mut Box<dyn Module>> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Box<dyn Module>>) {
        match self {
            System::Module(m) => out.push(m),
            System::Series(v) | System::Sum(v) => v.iter_mut().for_each(|s| s.collect_mut(out)),
            System::Recursion(r) => {
                r.feedforward.collect_mut(out);
                r.feedback.collect_mut(out);
            }
        }
    }

    pub fn find(&self, name: &str) -> Option<&dyn Module> {
        self.modules().into_iter().find(|m| m.name() == name)
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut Box<dyn Module>> {
        self.modules_mut().into_iter().find(|m| m.name() == name)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.modules().into_iter().flat_map(|m| m.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.modules_mut().into_iter().flat_map(|m| m.params_mut()).collect()
    }

    /// Grid of the first module.
    pub fn grid(&self) -> Option<&FrequencyGrid> {
        self.modules().first().map(|m| m.grid())
    }

    pub fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()> {
        for m in self.modules_mut() {
            m.set_grid(grid)?;
        }
        Ok(())
    }

    /// Every grid and channel inconsistency, naming the modules involved.
    pub fn validate_flow(&self) -> Vec<String> {
        let mut findings = Vec::new();
        let mods = self.modules();
        if let Some(first) = mods.first() {
            let g0 = first.grid();
            for m in &mods[1..] {
                let g = m.grid();
                if g.num_bins() != g0.num_bins() {
                    findings.push(format!(
                        "'{}' has M = {} but '{}' has M = {}",
                        first.name(),
                        g0.num_bins(),
                        m.name(),
                        g.num_bins()
                    ));
                }
                if g.sample_rate() != g0.sample_rate() {
                    findings.push(format!(
                        "'{}' has fs = {} but '{}' has fs = {}",
                        first.name(),
                        g0.sample_rate(),
                        m.name(),
                        g.sample_rate()
                    ));
                }
                if g.radius() != g0.radius() {
                    findings.push(format!(
                        "'{}' has grid radius {} but '{}' has {}",
                        first.name(),
                        g0.radius(),
                        m.name(),
                        g.radius()
                    ));
                }
            }
        } else {
            findings.push("system contains no modules".into());
        }
        self.check_channels(&mut findings);
        findings
    }

    fn label(&self) -> String {
        match self {
            System::Module(m) => format!("'{}'", m.name()),
            System::Series(_) => "series".into(),
            System::Recursion(_) => "recursion".into(),
            System::Sum(_) => "sum".into(),
        }
    }

    fn check_channels(&self, findings: &mut Vec<String>) {
        match self {
            System::Module(_) => {}
            System::Series(v) => {
                for w in v.windows(2) {
                    if w[0].n_out() != w[1].n_in() {
                        findings.push(format!(
                            "{} outputs {} channels but {} expects {}",
                            w[0].label(),
                            w[0].n_out(),
                            w[1].label(),
                            w[1].n_in()
                        ));
                    }
                }
                v.iter().for_each(|s| s.check_channels(findings));
            }
            System::Recursion(r) => {
                let (g, f) = (&r.feedforward, &r.feedback);
                if g.n_out() != f.n_in() {
                    findings.push(format!(
                        "feedforward {} outputs {} channels but feedback {} expects {}",
                        g.label(),
                        g.n_out(),
                        f.label(),
                        f.n_in()
                    ));
                }
                if f.n_out() != g.n_in() {
                    findings.push(format!(
                        "feedback {} outputs {} channels but feedforward {} expects {}",
                        f.label(),
                        f.n_out(),
                        g.label(),
                        g.n_in()
                    ));
                }
                g.check_channels(findings);
                f.check_channels(findings);
            }
            System::Sum(v) => {
                if let Some(first) = v.first() {
                    for b in &v[1..] {
                        if b.n_in() != first.n_in() || b.n_out() != first.n_out() {
                            findings.push(format!(
                                "sum branch {} is {}→{} but {} is {}→{}",
                                b.label(),
                                b.n_in(),
                                b.n_out(),
                                first.label(),
                                first.n_in(),
                                first.n_out()
                            ));
                        }
                    }
                } else {
                    findings.push("sum with no branches".into());
                }
                v.iter().for_each(|s| s.check_channels(findings));
            }
        }
    }

    /// Per-bin matrix `[M | 1, N_out, N_in]` (leading 1 when the whole
    /// system is frequency independent).
    pub fn full_response<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        match self {
            System::Module(m) => m.full_response(ctx),
            System::Series(v) => {
                let mut it = v.iter();
                let first = it.next().ok_or_else(|| Error::Config("empty series".into()))?;
                let mut acc = first.full_response(ctx)?;
                for s in it {
                    acc = s.full_response(ctx)?.matmul(acc)?;
                }
                Ok(acc)
            }
            System::Recursion(r) => r.response(ctx),
            System::Sum(v) => {
                let mut acc: Option<Var<'t>> = None;
                for s in v {
                    let h = s.full_response(ctx)?;
                    acc = Some(match acc {
                        Some(a) => a.add(h)?,
                        None => h,
                    });
                }
                acc.ok_or_else(|| Error::Config("empty sum".into()))
            }
        }
    }

    /// `[B, M, N_in] → [B, M, N_out]`.
    pub fn apply<'t>(&self, ctx: &Ctx<'t>, signal: Var<'t>) -> Result<Var<'t>> {
        match self {
            System::Module(m) => m.apply(ctx, signal),
            System::Series(v) => {
                let mut x = signal;
                for s in v {
                    x = s.apply(ctx, x)?;
                }
                Ok(x)
            }
            System::Recursion(r) => {
                if let Some(g) = r.feedforward.grid() {
                    check_signal(&signal.shape(), g, r.feedforward.n_in())?;
                }
                apply_matrix(r.response(ctx)?, signal)
            }
            System::Sum(v) => {
                let mut acc: Option<Var<'t>> = None;
                for s in v {
                    let y = s.apply(ctx, signal)?;
                    acc = Some(match acc {
                        Some(a) => a.add(y)?,
                        None => y,
                    });
                }
                acc.ok_or_else(|| Error::Config("empty sum".into()))
            }
        }
    }

    /// Full response values without a persistent tape, expanded to `M` bins.
    pub fn evaluate(&self) -> Result<Array> {
        let tape = Tape::new();
        let ctx = Ctx::new(&tape);
        let h = self.full_response(&ctx)?;
        let m = self
            .grid()
            .ok_or_else(|| Error::Config("system contains no modules".into()))?
            .num_bins();
        let s = h.shape();
        Ok(h.broadcast_to(&[m, s[1], s[2]])?.value())
    }

    pub fn snapshot(&self) -> SystemSnapshot {
        match self {
            System::Module(m) => SystemSnapshot::Module(m.snapshot()),
            System::Series(v) => SystemSnapshot::Series(v.iter().map(System::snapshot).collect()),
            System::Recursion(r) => SystemSnapshot::Recursion {
                feedforward: Box::new(r.feedforward.snapshot()),
                feedback: Box::new(r.feedback.snapshot()),
            },
            System::Sum(v) => SystemSnapshot::Sum(v.iter().map(System::snapshot).collect()),
        }
    }

    pub fn from_snapshot(s: &SystemSnapshot, grid: &FrequencyGrid) -> Result<Self> {
        Ok(match s {
            SystemSnapshot::Module(m) => System::Module(module_from_snapshot(m, grid)?),
            SystemSnapshot::Series(v) => System::series(v.iter().map(|s| Self::from_snapshot(s, grid)).collect::<Result<_>>()?)?,
            SystemSnapshot::Recursion { feedforward, feedback } => {
                System::recursion(Self::from_snapshot(feedforward, grid)?, Self::from_snapshot(feedback, grid)?)?
            }
            SystemSnapshot::Sum(v) => System::sum(v.iter().map(|s| Self::from_snapshot(s, grid)).collect::<Result<_>>()?)?,
        })
    }

    /// Copies raw values from a snapshot with the same topology.
    pub fn load_values(&mut self, s: &SystemSnapshot) -> Result<()> {
        let grid = self
            .grid()
            .cloned()
            .ok_or_else(|| Error::Config("system contains no modules".into()))?;
        let other = Self::from_snapshot(s, &grid)?;
        let src: Vec<Vec<f64>> = other.params().iter().map(|p| p.values()).collect();
        let mut dst = self.params_mut();
        if src.len() != dst.len() {
            return Err(Error::Config("snapshot topology differs from the system".into()));
        }
        for (d, v) in dst.iter_mut().zip(src) {
            d.set_values(&v)?;
        }
        Ok(())
    }
}

impl Recursion {
    /// `(I − G F)⁻¹ G` per bin.
    pub fn response<'t>(&self, ctx: &Ctx<'t>) -> Result<Var<'t>> {
        let g = self.feedforward.full_response(ctx)?;
        let f = self.feedback.full_response(ctx)?;
        let gf = g.matmul(f)?;
        let n = gf.shape()[1];
        let lhs = ctx.constant(Array::eye(n)).sub(gf)?;
        let grid = self.feedforward.grid().cloned();
        lhs.solve(g).map_err(|e| match (e, grid) {
            (Error::IllConditioned { index, cond, .. }, Some(grid)) => Error::IllConditionedBin {
                bin: index,
                freq_hz: grid.frequency_hz(index),
                cond,
            },
            (e, _) => e,
        })
    }
}

/// Serialized topology: `{"module": …}`, `{"series": […]}`,
/// `{"recursion": {"feedforward": …, "feedback": …}}` or `{"sum": […]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum SystemSnapshot {
    Module(ModuleSnapshot),
    Series(Vec<SystemSnapshot>),
    Recursion {
        feedforward: Box<SystemSnapshot>,
        feedback: Box<SystemSnapshot>,
    },
    Sum(Vec<SystemSnapshot>),
}

/// A unit impulse on one input channel (or all when `None`), `[1, M, N]`.
pub fn impulse_input(grid: &FrequencyGrid, n_in: usize, channel: Option<usize>) -> Result<Array> {
    let m = grid.num_bins();
    let mut data = vec![C64::new(0.0, 0.0); m * n_in];
    for bin in 0..m {
        match channel {
            Some(c) if c < n_in => data[bin * n_in + c] = C64::new(1.0, 0.0),
            Some(c) => return Err(Error::shape("impulse", &[n_in], &[c + 1])),
            None => (0..n_in).for_each(|c| data[bin * n_in + c] = C64::new(1.0, 0.0)),
        }
    }
    Array::new(vec![1, m, n_in], data)
}
