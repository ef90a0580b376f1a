use std::f64::consts::{LN_10, PI};

use super::{inverse_sigmoid, inverse_softplus, stack_rows, Sos};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::modules::{check_finite, rational_response, Ctx, Layout, Module, ModuleSnapshot, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvfMode {
    Lowpass,
    Highpass,
    Bandpass,
    Lowshelf,
    Highshelf,
    Peaking,
    Notch,
    /// Mixing coefficients learned directly.
    Generic,
}

impl SvfMode {
    pub const ALL: [SvfMode; 8] = [
        SvfMode::Lowpass,
        SvfMode::Highpass,
        SvfMode::Bandpass,
        SvfMode::Lowshelf,
        SvfMode::Highshelf,
        SvfMode::Peaking,
        SvfMode::Notch,
        SvfMode::Generic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SvfMode::Lowpass => "lowpass",
            SvfMode::Highpass => "highpass",
            SvfMode::Bandpass => "bandpass",
            SvfMode::Lowshelf => "lowshelf",
            SvfMode::Highshelf => "highshelf",
            SvfMode::Peaking => "peaking",
            SvfMode::Notch => "notch",
            SvfMode::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown SVF mode '{s}'")))
    }

    /// Raw values per section and channel: cutoff and resonance, then a gain
    /// in dB for shelves/peaking or `(m_LP, m_BP, m_HP)` for generic.
    pub fn num_params(&self) -> usize {
        match self {
            SvfMode::Lowshelf | SvfMode::Highshelf | SvfMode::Peaking => 3,
            SvfMode::Generic => 5,
            _ => 2,
        }
    }
}

/// Cascade of state-variable sections.
///
/// Per section, with `f = tan(ω_c/2)`, `ω_c = π·σ(raw_f)` and
/// `R = softplus(raw_R)`:
///
/// ```text
/// H(z) = [m_HP (1 − z⁻¹)² + m_BP f (1 − z⁻²) + m_LP f² (1 + z⁻¹)²]
///        / [(1 + 2Rf + f²) + 2(f² − 1) z⁻¹ + (1 − 2Rf + f²) z⁻²]
/// ```
///
/// Mode mixes with `K = 10^(gain/20)`: lowshelf `(K, 2R√K, 1)`, highshelf
/// `(1, 2R√K, K)`, peaking `(1, 2RK, 1)` as `(m_LP, m_BP, m_HP)`; a
/// lowpass section with resonance `R` equals the cookbook lowpass with
/// `Q = 1/(2R)` at the same cutoff.
///
/// Raw parameters are shaped `[sections, P, channels...]`.
#[derive(Debug, Clone)]
pub struct Svf {
    name: String,
    grid: FrequencyGrid,
    mode: SvfMode,
    layout: Layout,
    sections: usize,
    param: Param,
}

impl Svf {
    pub fn new(name: &str, grid: &FrequencyGrid, mode: SvfMode, layout: Layout, sections: usize, raw: &[f64]) -> Result<Self> {
        let mut shape = vec![sections, mode.num_params()];
        shape.extend(layout.dims());
        if sections == 0 || raw.len() != shape.iter().product::<usize>() {
            return Err(Error::shape("svf", &shape, &[raw.len()]));
        }
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            mode,
            layout,
            sections,
            param: Param::new(&shape, raw)?,
        })
    }

    /// Single-channel, single-section filter from constrained values:
    /// cutoff `ω_c` in rad/sample, resonance `R > 0`, and the mode's extra
    /// values (gain in dB, or raw mixing coefficients for generic).
    pub fn from_params(name: &str, grid: &FrequencyGrid, mode: SvfMode, wc: f64, r: f64, extra: &[f64]) -> Result<Self> {
        let mut raw = vec![inverse_sigmoid(wc / PI), inverse_softplus(r)];
        raw.extend_from_slice(extra);
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("SVF parameters outside the mapped ranges".into()));
        }
        Self::new(name, grid, mode, Layout::Parallel(1), 1, &raw)
    }

    pub fn mode(&self) -> SvfMode {
        self.mode
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    pub fn param_mut(&mut self) -> &mut Param {
        &mut self.param
    }

    /// `(b, a)` per section `[s][channel]`, from the mapped parameters.
    pub fn coefficients(&self) -> Result<Vec<Vec<Sos>>> {
        let tape = Tape::new();
        let ctx = Ctx::new(&tape);
        let (b, a) = self.coefficient_vars(&ctx)?;
        let (b, a) = (b.value().re(), a.value().re());
        let n = self.layout.channels();
        let per = self.sections * n;
        Ok((0..self.sections)
            .map(|s| {
                (0..n)
                    .map(|c| {
                        let i = s * n + c;
                        ([b[i], b[per + i], b[2 * per + i]], [a[i], a[per + i], a[2 * per + i]])
                    })
                    .collect()
            })
            .collect())
    }

    /// Numerator and denominator coefficient arrays `[3, sections, channels...]`.
    fn coefficient_vars<'t>(&self, ctx: &Ctx<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let raw = ctx.param(&self.param);
        // [S, P, ch...] → P rows of [S, ch...]
        let chans = self.layout.dims();
        let mut row_shape = vec![self.sections];
        row_shape.extend(&chans);
        let rows = (0..self.mode.num_params())
            .map(|p| raw.slice(1, p, 1)?.reshape(&row_shape))
            .collect::<Result<Vec<_>>>()?;
        let f = rows[0].sigmoid().scale_real(PI / 2.0).tan();
        let r = rows[1].softplus();
        let two_r = r.scale_real(2.0);
        let gain = |row: Var<'t>, scale: f64| row.scale_real(scale * LN_10 / 20.0).exp();
        let one = || ctx.scalar(1.0).broadcast_to(&row_shape);
        let zero = || ctx.scalar(0.0).broadcast_to(&row_shape);
        let (lp, bp, hp) = match self.mode {
            SvfMode::Lowpass => (one()?, zero()?, zero()?),
            SvfMode::Highpass => (zero()?, zero()?, one()?),
            SvfMode::Bandpass => (zero()?, two_r, zero()?),
            SvfMode::Notch => (one()?, zero()?, one()?),
            SvfMode::Peaking => (one()?, two_r.mul(gain(rows[2], 1.0))?, one()?),
            SvfMode::Lowshelf => (gain(rows[2], 1.0), two_r.mul(gain(rows[2], 0.5))?, one()?),
            SvfMode::Highshelf => (one()?, two_r.mul(gain(rows[2], 0.5))?, gain(rows[2], 1.0)),
            SvfMode::Generic => (rows[2], rows[3], rows[4]),
        };
        let f2 = f.mul(f)?;
        let bpf = bp.mul(f)?;
        let lpf2 = lp.mul(f2)?;
        let b0 = hp.add(bpf)?.add(lpf2)?;
        let b1 = lpf2.sub(hp)?.scale_real(2.0);
        let b2 = hp.sub(bpf)?.add(lpf2)?;
        let rf2 = two_r.mul(f)?;
        let f2p1 = f2.add_scalar(1.0)?;
        let a0 = f2p1.add(rf2)?;
        let a1 = f2.add_scalar(-1.0)?.scale_real(2.0);
        let a2 = f2p1.sub(rf2)?;
        Ok((stack_rows(&[b0, b1, b2])?, stack_rows(&[a0, a1, a2])?))
    }
}

impl Module for Svf {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "svf"
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
        check_finite(&self.name, &self.param)?;
        let (b, a) = self.coefficient_vars(ctx)?;
        // [M, S, ch...] → product over sections
        let h = rational_response(b, Some(a), &self.grid)?;
        let mut out_shape = vec![self.grid.num_bins()];
        out_shape.extend(self.layout.dims());
        let mut acc = h.slice(1, 0, 1)?;
        for s in 1..self.sections {
            acc = acc.mul(h.slice(1, s, 1)?)?;
        }
        acc.reshape(&out_shape)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        let mut s = ModuleSnapshot::basic(self, "svf", &self.param);
        s.mode = Some(self.mode.as_str().into());
        s
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::C64;
    use crate::filters::{biquad_coeffs, BiquadKind};

    fn grid() -> FrequencyGrid {
        FrequencyGrid::unit(257, 48000.0).unwrap()
    }

    fn first(m: &Svf) -> ([f64; 3], [f64; 3]) {
        m.coefficients().unwrap()[0][0]
    }

    fn at(b: &[f64; 3], a: &[f64; 3], z: C64) -> C64 {
        let zi = 1.0 / z;
        (b[0] + b[1] * zi + b[2] * zi * zi) / (a[0] + a[1] * zi + a[2] * zi * zi)
    }

    #[test]
    fn dc_and_nyquist_by_mode() {
        let g = grid();
        let one = C64::new(1.0, 0.0);
        let k = 10f64.powf(6.0 / 20.0);
        let cases: [(SvfMode, Vec<f64>, f64, f64); 6] = [
            (SvfMode::Lowpass, vec![], 1.0, 0.0),
            (SvfMode::Highpass, vec![], 0.0, 1.0),
            (SvfMode::Notch, vec![], 1.0, 1.0),
            (SvfMode::Lowshelf, vec![6.0], k, 1.0),
            (SvfMode::Highshelf, vec![6.0], 1.0, k),
            (SvfMode::Peaking, vec![6.0], 1.0, 1.0),
        ];
        for (mode, extra, dc, ny) in cases {
            let m = Svf::from_params("s", &g, mode, 0.4, 0.6, &extra).unwrap();
            let (b, a) = first(&m);
            assert!((at(&b, &a, one).norm() - dc).abs() < 1e-12, "{mode:?} dc");
            assert!((at(&b, &a, -one).norm() - ny).abs() < 1e-12, "{mode:?} nyquist");
        }
    }

    #[test]
    fn peaking_gain_at_center() {
        let m = Svf::from_params("s", &grid(), SvfMode::Peaking, 0.7, 0.3, &[9.0]).unwrap();
        let (b, a) = first(&m);
        let z = C64::from_polar(1.0, 0.7);
        assert!((at(&b, &a, z).norm() - 10f64.powf(9.0 / 20.0)).abs() < 1e-12);
    }

    #[test]
    fn lowpass_matches_cookbook() {
        let g = grid();
        for (wc, r) in [(0.2, 0.3), (1.1, 0.75), (2.7, 2.0)] {
            let m = Svf::from_params("s", &g, SvfMode::Lowpass, wc, r, &[]).unwrap();
            let resp = m.evaluate().unwrap();
            let (b, a) = biquad_coeffs(BiquadKind::Lowpass, wc, 0.0, 1.0 / (2.0 * r)).unwrap();
            for (bin, z) in g.points().iter().enumerate() {
                let d = resp.data()[bin].norm() - at(&b, &a, *z).norm();
                assert!(d.abs() < 1e-9, "wc {wc} bin {bin}");
            }
        }
    }

    #[test]
    fn cascade_multiplies_sections() {
        let g = FrequencyGrid::unit(33, 16000.0).unwrap();
        let raw = [0.3, -0.2, 1.2, 0.8];
        let two = Svf::new("s", &g, SvfMode::Lowpass, Layout::Parallel(1), 2, &raw).unwrap();
        let a = Svf::new("a", &g, SvfMode::Lowpass, Layout::Parallel(1), 1, &raw[..2]).unwrap();
        let b = Svf::new("b", &g, SvfMode::Lowpass, Layout::Parallel(1), 1, &raw[2..]).unwrap();
        let (r2, ra, rb) = (two.evaluate().unwrap(), a.evaluate().unwrap(), b.evaluate().unwrap());
        for i in 0..33 {
            assert!((r2.data()[i] - ra.data()[i] * rb.data()[i]).norm() < 1e-14);
        }
    }
}
