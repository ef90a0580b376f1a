use std::f64::consts::PI;

use super::{inverse_sigmoid, inverse_softplus, split_rows, stack_rows};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::modules::{check_finite, rational_response, Ctx, Layout, Module, ModuleSnapshot, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiquadKind {
    Lowpass,
    Highpass,
    Bandpass,
}

impl BiquadKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BiquadKind::Lowpass => "lowpass",
            BiquadKind::Highpass => "highpass",
            BiquadKind::Bandpass => "bandpass",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lowpass" => Ok(BiquadKind::Lowpass),
            "highpass" => Ok(BiquadKind::Highpass),
            "bandpass" => Ok(BiquadKind::Bandpass),
            _ => Err(Error::Config(format!("unknown biquad kind '{s}'"))),
        }
    }
}

/// Cookbook coefficients normalized to `a[0] = 1`. `gain_db` scales the
/// numerator (passband level); the bandpass has 0 dB peak gain before it.
pub fn biquad_coeffs(kind: BiquadKind, w0: f64, gain_db: f64, q: f64) -> Result<([f64; 3], [f64; 3])> {
    if !(w0 > 0.0 && w0 < PI) {
        return Err(Error::Domain(format!("cutoff {w0} rad/sample outside (0, π)")));
    }
    if !(q > 0.0) {
        return Err(Error::Domain(format!("quality factor must be positive, got {q}")));
    }
    let (c, s) = (w0.cos(), w0.sin());
    let alpha = s / (2.0 * q);
    let g = 10f64.powf(gain_db / 20.0);
    let b = match kind {
        BiquadKind::Lowpass => [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
        BiquadKind::Highpass => [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
        BiquadKind::Bandpass => [alpha, 0.0, -alpha],
    };
    let a0 = 1.0 + alpha;
    Ok((
        [g * b[0] / a0, g * b[1] / a0, g * b[2] / a0],
        [1.0, -2.0 * c / a0, (1.0 - alpha) / a0],
    ))
}

/// Cookbook biquad with raw parameters `[3, channels...]`: cutoff (mapped
/// to `π·σ(raw)`), gain in dB, and quality (mapped through softplus).
#[derive(Debug, Clone)]
pub struct Biquad {
    name: String,
    grid: FrequencyGrid,
    kind: BiquadKind,
    layout: Layout,
    param: Param,
}

impl Biquad {
    pub fn new(name: &str, grid: &FrequencyGrid, kind: BiquadKind, layout: Layout, raw: &[f64]) -> Result<Self> {
        let mut shape = vec![3];
        shape.extend(layout.dims());
        if raw.len() != 3 * layout.channels() {
            return Err(Error::shape("biquad", &shape, &[raw.len()]));
        }
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            kind,
            layout,
            param: Param::new(&shape, raw)?,
        })
    }

    /// Builds from constrained values, one per channel: cutoff in rad/sample,
    /// gain in dB and Q.
    pub fn from_params(
        name: &str,
        grid: &FrequencyGrid,
        kind: BiquadKind,
        layout: Layout,
        w0: &[f64],
        gain_db: &[f64],
        q: &[f64],
    ) -> Result<Self> {
        let n = layout.channels();
        if w0.len() != n || gain_db.len() != n || q.len() != n {
            return Err(Error::shape("biquad", &[n], &[w0.len()]));
        }
        let mut raw = Vec::with_capacity(3 * n);
        raw.extend(w0.iter().map(|w| inverse_sigmoid(w / PI)));
        raw.extend_from_slice(gain_db);
        raw.extend(q.iter().map(|q| inverse_softplus(*q)));
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("biquad parameters outside the mapped ranges".into()));
        }
        Self::new(name, grid, kind, layout, &raw)
    }

    pub fn kind(&self) -> BiquadKind {
        self.kind
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    /// Mapped `(b, a)` per channel.
    pub fn coefficients(&self) -> Result<Vec<([f64; 3], [f64; 3])>> {
        let raw = self.param.values();
        let n = self.layout.channels();
        (0..n)
            .map(|i| {
                let w0 = PI * sigmoid(raw[i]);
                let q = softplus(raw[2 * n + i]);
                biquad_coeffs(self.kind, w0, raw[n + i], q)
            })
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Module for Biquad {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "biquad"
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
        let rows = split_rows(ctx.param(&self.param), 3)?;
        let w0 = rows[0].sigmoid().scale_real(PI);
        let gain = rows[1].scale_real(std::f64::consts::LN_10 / 20.0).exp();
        let q = rows[2].softplus();
        let (c, s) = (w0.cos(), w0.sin());
        let alpha = s.div(q.scale_real(2.0))?;
        let one_minus_c = c.neg().add_scalar(1.0)?;
        let one_plus_c = c.add_scalar(1.0)?;
        let b = match self.kind {
            BiquadKind::Lowpass => {
                let h = one_minus_c.scale_real(0.5);
                [h, one_minus_c, h]
            }
            BiquadKind::Highpass => {
                let h = one_plus_c.scale_real(0.5);
                [h, one_plus_c.neg(), h]
            }
            BiquadKind::Bandpass => [alpha, alpha.scale_real(0.0), alpha.neg()],
        };
        let b = b.iter().map(|x| x.mul(gain)).collect::<Result<Vec<_>>>()?;
        let b = stack_rows(&b)?;
        let a = stack_rows(&[alpha.add_scalar(1.0)?, c.scale_real(-2.0), alpha.neg().add_scalar(1.0)?])?;
        rational_response(b, Some(a), &self.grid)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        let mut s = ModuleSnapshot::basic(self, "cookbook", &self.param);
        s.filter_kind = Some(self.kind.as_str().into());
        s
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::evaluate_rational;

    #[test]
    fn lowpass_dc_and_nyquist() {
        for (w0, q) in [(0.1, 0.7), (1.0, 2.0), (3.0, 0.3)] {
            let (b, a) = biquad_coeffs(BiquadKind::Lowpass, w0, 0.0, q).unwrap();
            let dc = b.iter().sum::<f64>() / a.iter().sum::<f64>();
            let ny = (b[0] - b[1] + b[2]) / (a[0] - a[1] + a[2]);
            assert!((dc - 1.0).abs() < 1e-12);
            assert!(ny.abs() < 1e-12);
            let (b, a) = biquad_coeffs(BiquadKind::Highpass, w0, 0.0, q).unwrap();
            let dc = b.iter().sum::<f64>() / a.iter().sum::<f64>();
            let ny = (b[0] - b[1] + b[2]) / (a[0] - a[1] + a[2]);
            assert!(dc.abs() < 1e-12);
            assert!((ny - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn module_matches_rational_evaluation() {
        let grid = FrequencyGrid::unit(64, 48000.0).unwrap();
        for kind in [BiquadKind::Lowpass, BiquadKind::Highpass, BiquadKind::Bandpass] {
            let m = Biquad::from_params("bq", &grid, kind, Layout::Parallel(2), &[0.3, 2.0], &[0.0, -6.0], &[0.7, 3.0]).unwrap();
            let r = m.evaluate().unwrap();
            for (ch, (b, a)) in m.coefficients().unwrap().into_iter().enumerate() {
                let e = evaluate_rational(&b, &a, &grid).unwrap();
                for bin in 0..64 {
                    let d = r.data()[bin * 2 + ch] - e.data.data()[bin];
                    assert!(d.norm() < 1e-12, "{kind:?} bin {bin}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_cutoff() {
        assert!(biquad_coeffs(BiquadKind::Lowpass, 0.0, 0.0, 1.0).is_err());
        assert!(biquad_coeffs(BiquadKind::Lowpass, PI, 0.0, 1.0).is_err());
    }
}
