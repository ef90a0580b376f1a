//! A system bound to input and output transformations.
//!
//! The shell's `get_*` methods never swap its layers: they evaluate the core
//! directly on an impulse, so its observable state is unchanged and the
//! methods are safe to call through a shared reference.

use crate::antialias::undo_radius;
use crate::autodiff::{Array, Tape, Var, C64};
use crate::error::{Error, Result};
use crate::grid::{idft_half_spectrum, ComplexResponse, FrequencyGrid, RealSignal};
use crate::modules::Ctx;
use crate::system::{impulse_input, System};

/// Maps dataset inputs to the core's `[B, M, N_in]` spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputLayer {
    /// Inputs are already spectra on the core grid.
    Identity,
    /// Inputs are real time signals `[B, T, N_in]`, transformed on the grid.
    Dft,
}

/// Maps core outputs to the domain where losses are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputLayer {
    Identity,
    Magnitude,
}

#[derive(Debug, Clone)]
pub struct Shell {
    input_layer: InputLayer,
    core: System,
    output_layer: OutputLayer,
}

impl Shell {
    pub fn new(core: System, input_layer: InputLayer, output_layer: OutputLayer) -> Result<Self> {
        let findings = core.validate_flow();
        if !findings.is_empty() {
            return Err(Error::Config(findings.join("; ")));
        }
        Ok(Self {
            input_layer,
            core,
            output_layer,
        })
    }

    pub fn core(&self) -> &System {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut System {
        &mut self.core
    }

    pub fn into_core(self) -> System {
        self.core
    }

    pub fn input_layer(&self) -> InputLayer {
        self.input_layer
    }

    pub fn output_layer(&self) -> OutputLayer {
        self.output_layer
    }

    pub fn set_input_layer(&mut self, layer: InputLayer) {
        self.input_layer = layer;
    }

    pub fn set_output_layer(&mut self, layer: OutputLayer) {
        self.output_layer = layer;
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.core.grid().expect("validated shells contain modules")
    }

    pub fn n_in(&self) -> usize {
        self.core.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.core.n_out()
    }

    /// input layer → core → output layer.
    pub fn forward<'t>(&self, ctx: &Ctx<'t>, input: Var<'t>) -> Result<Var<'t>> {
        let x = match self.input_layer {
            InputLayer::Identity => input,
            InputLayer::Dft => self.time_to_spectrum(input)?,
        };
        let y = self.core.apply(ctx, x)?;
        Ok(match self.output_layer {
            OutputLayer::Identity => y,
            OutputLayer::Magnitude => y.abs(),
        })
    }

    fn time_to_spectrum<'t>(&self, input: Var<'t>) -> Result<Var<'t>> {
        let s = input.shape();
        if s.len() != 3 || s[2] != self.n_in() {
            return Err(Error::shape(
                "dft input layer",
                &[1, s.get(1).copied().unwrap_or(1), self.n_in()],
                &s,
            ));
        }
        let grid = self.grid();
        let parts = (0..s[0])
            .map(|b| {
                input
                    .slice(0, b, 1)?
                    .reshape(&[s[1], s[2]])?
                    .dft(grid)?
                    .reshape(&[1, grid.num_bins(), s[2]])
            })
            .collect::<Result<Vec<_>>>()?;
        Var::concat(&parts, 0)
    }

    /// Core response to an impulse on `channel` (all inputs when `None`),
    /// shaped `[M, N_out]`.
    pub fn get_freq_response(&self, channel: Option<usize>) -> Result<ComplexResponse> {
        let tape = Tape::new();
        let ctx = Ctx::new(&tape);
        let grid = self.grid().clone();
        let x = ctx.constant(impulse_input(&grid, self.n_in(), channel)?);
        let y = self.core.apply(&ctx, x)?;
        let data = y.reshape(&[grid.num_bins(), self.n_out()])?.value();
        ComplexResponse::new(data, grid)
    }

    /// Impulse response per output channel for an impulse on `channel`,
    /// with the grid-radius envelope removed.
    pub fn get_time_response(&self, channel: Option<usize>) -> Result<Vec<RealSignal>> {
        let resp = self.get_freq_response(channel)?;
        let grid = resp.grid.clone();
        (0..self.n_out())
            .map(|c| {
                let col: Vec<C64> = resp.column(c)?;
                undo_radius(idft_half_spectrum(&col, grid.sample_rate())?, grid.radius())
            })
            .collect()
    }

    /// Per-bin matrix `[M, N_out, N_in]` of the core.
    pub fn get_full_response(&self) -> Result<Array> {
        self.core.evaluate()
    }
}
