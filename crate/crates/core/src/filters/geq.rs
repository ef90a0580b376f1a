use std::f64::consts::{LN_10, LN_2, PI};

use nalgebra::DMatrix;

use super::stack_rows;
use crate::autodiff::{Array, Var, C64};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::modules::{check_finite, rational_response, Ctx, Layout, Module, ModuleSnapshot, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeqResolution {
    Octave,
    ThirdOctave,
}

impl GeqResolution {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeqResolution::Octave => "octave",
            GeqResolution::ThirdOctave => "third-octave",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "octave" => Ok(GeqResolution::Octave),
            "third-octave" | "third_octave" => Ok(GeqResolution::ThirdOctave),
            _ => Err(Error::Config(format!("unknown GEQ resolution '{s}'"))),
        }
    }

    /// Band spacing in octaves.
    pub fn spacing(&self) -> f64 {
        match self {
            GeqResolution::Octave => 1.0,
            GeqResolution::ThirdOctave => 1.0 / 3.0,
        }
    }

    /// Peak-filter bandwidth in octaves, tuned for accuracy at ±12 dB.
    pub fn bandwidth(&self) -> f64 {
        match self {
            GeqResolution::Octave => 1.4,
            GeqResolution::ThirdOctave => 0.5,
        }
    }

    /// Band centers `1000·2^(k·spacing)` Hz (31.25 Hz to 16 kHz for octaves,
    /// 19.7 Hz to 20 kHz for thirds), keeping those below `0.45·fs`.
    pub fn centers(&self, fs: f64) -> Vec<f64> {
        let ks: Vec<f64> = match self {
            GeqResolution::Octave => (-5..=4).map(f64::from).collect(),
            GeqResolution::ThirdOctave => (-17..=13).map(|k| f64::from(k) / 3.0).collect(),
        };
        ks.into_iter()
            .map(|k| 1000.0 * 2f64.powf(k))
            .filter(|f| *f < 0.45 * fs)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    LowShelf,
    Peak,
    HighShelf,
}

/// One second-order section whose gain is set by the design.
#[derive(Debug, Clone, Copy)]
struct Section {
    shape: Shape,
    w0: f64,
    alpha: f64,
}

/// Powers of `s = 10^(g/80)` from −2 to 4.
const POWERS: [i32; 7] = [-2, -1, 0, 1, 2, 3, 4];

impl Section {
    /// Coefficients `(b0, b1, b2, a0, a1, a2)` as polynomials in `s`,
    /// indexed `[coef][power + 2]` (cookbook peaking and shelving forms).
    fn poly(&self) -> [[f64; 7]; 6] {
        let c = self.w0.cos();
        let al = self.alpha;
        let mut k = [[0.0; 7]; 6];
        let idx = |p: i32| (p + 2) as usize;
        match self.shape {
            Shape::Peak => {
                k[0][idx(0)] = 1.0;
                k[0][idx(2)] = al;
                k[1][idx(0)] = -2.0 * c;
                k[2][idx(0)] = 1.0;
                k[2][idx(2)] = -al;
                k[3][idx(0)] = 1.0;
                k[3][idx(-2)] = al;
                k[4][idx(0)] = -2.0 * c;
                k[5][idx(0)] = 1.0;
                k[5][idx(-2)] = -al;
            }
            Shape::LowShelf => {
                k[0][idx(4)] = 1.0 - c;
                k[0][idx(3)] = 2.0 * al;
                k[0][idx(2)] = 1.0 + c;
                k[1][idx(4)] = 2.0 * (1.0 - c);
                k[1][idx(2)] = -2.0 * (1.0 + c);
                k[2][idx(4)] = 1.0 - c;
                k[2][idx(3)] = -2.0 * al;
                k[2][idx(2)] = 1.0 + c;
                k[3][idx(2)] = 1.0 + c;
                k[3][idx(1)] = 2.0 * al;
                k[3][idx(0)] = 1.0 - c;
                k[4][idx(2)] = -2.0 * (1.0 + c);
                k[4][idx(0)] = 2.0 * (1.0 - c);
                k[5][idx(2)] = 1.0 + c;
                k[5][idx(1)] = -2.0 * al;
                k[5][idx(0)] = 1.0 - c;
            }
            Shape::HighShelf => {
                k[0][idx(4)] = 1.0 + c;
                k[0][idx(3)] = 2.0 * al;
                k[0][idx(2)] = 1.0 - c;
                k[1][idx(4)] = -2.0 * (1.0 + c);
                k[1][idx(2)] = 2.0 * (1.0 - c);
                k[2][idx(4)] = 1.0 + c;
                k[2][idx(3)] = -2.0 * al;
                k[2][idx(2)] = 1.0 - c;
                k[3][idx(2)] = 1.0 - c;
                k[3][idx(1)] = 2.0 * al;
                k[3][idx(0)] = 1.0 + c;
                k[4][idx(2)] = 2.0 * (1.0 - c);
                k[4][idx(0)] = -2.0 * (1.0 + c);
                k[5][idx(2)] = 1.0 - c;
                k[5][idx(1)] = -2.0 * al;
                k[5][idx(0)] = 1.0 + c;
            }
        }
        k
    }

    fn coeffs(&self, gain_db: f64) -> ([f64; 3], [f64; 3]) {
        let s = 10f64.powf(gain_db / 80.0);
        let k = self.poly();
        let v: Vec<f64> = k
            .iter()
            .map(|row| row.iter().zip(POWERS).map(|(c, p)| c * s.powi(p)).sum())
            .collect();
        ([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    fn gain_db_at(&self, gain_db: f64, w: f64) -> f64 {
        let (b, a) = self.coeffs(gain_db);
        let zi = C64::from_polar(1.0, -w);
        let h = (b[0] + zi * (b[1] + zi * b[2])) / (a[0] + zi * (a[1] + zi * a[2]));
        20.0 * h.norm().log10()
    }
}

/// Band layout plus the constant least-squares map from command gains to
/// section gains: `g = P·c` with `P = pinv(B)·T`, where `B` holds each
/// section's dB response to a +1 dB prototype at the control frequencies
/// and `T` interpolates commands onto those frequencies.
#[derive(Debug, Clone)]
pub struct GeqDesign {
    centers: Vec<f64>,
    sections: Vec<Section>,
    /// `[sections × bands]`, row-major.
    map: Vec<f64>,
}

const PROTOTYPE_DB: f64 = 1.0;

impl GeqDesign {
    pub fn new(resolution: GeqResolution, fs: f64) -> Result<Self> {
        Self::from_centers(&resolution.centers(fs), resolution.spacing(), resolution.bandwidth(), fs)
    }

    /// Design for arbitrary band centers (any order). Sections are a low
    /// shelf, one peak per band in the given order, and a high shelf.
    pub fn from_centers(centers: &[f64], spacing: f64, bandwidth: f64, fs: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Config("GEQ needs at least one band".into()));
        }
        if !(fs > 0.0) || centers.iter().any(|f| !(*f > 0.0 && *f < 0.5 * fs)) {
            return Err(Error::Config(format!("GEQ band centers must lie in (0, fs/2), fs = {fs}")));
        }
        let nb = centers.len();
        let mut order: Vec<usize> = (0..nb).collect();
        order.sort_by(|a, b| centers[*a].total_cmp(&centers[*b]));
        let (lo, hi) = (order[0], order[nb - 1]);
        let to_w = |f: f64| 2.0 * PI * f / fs;

        let shelf = |shape, w: f64| Section {
            shape,
            w0: w,
            alpha: w.sin() / std::f64::consts::SQRT_2,
        };
        let mut sections = vec![shelf(Shape::LowShelf, to_w(centers[lo] / 2f64.powf(spacing / 2.0)))];
        for &f in centers {
            let w = to_w(f);
            sections.push(Section {
                shape: Shape::Peak,
                w0: w,
                alpha: w.sin() * (LN_2 / 2.0 * bandwidth * w / w.sin()).sinh(),
            });
        }
        let w_hs = to_w(centers[hi] * 2f64.powf(spacing / 2.0)).min(0.95 * PI);
        sections.push(shelf(Shape::HighShelf, w_hs));

        // control frequencies and their targets as combinations of commands
        let mut controls: Vec<(f64, Vec<(usize, f64)>)> = centers.iter().enumerate().map(|(i, f)| (*f, vec![(i, 1.0)])).collect();
        for pair in order.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            controls.push(((centers[a] * centers[b]).sqrt(), vec![(a, 0.5), (b, 0.5)]));
        }
        controls.push((centers[lo] / 2f64.powf(spacing), vec![(lo, 1.0)]));
        controls.push(((centers[hi] * 2f64.powf(spacing)).min(0.49 * fs), vec![(hi, 1.0)]));

        let nc = controls.len();
        let nf = sections.len();
        let b = DMatrix::from_fn(nc, nf, |c, f| {
            sections[f].gain_db_at(PROTOTYPE_DB, to_w(controls[c].0)) / PROTOTYPE_DB
        });
        let mut t = DMatrix::zeros(nc, nb);
        for (c, (_, weights)) in controls.iter().enumerate() {
            for (band, w) in weights {
                t[(c, *band)] += w;
            }
        }
        let pinv = b
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Config(format!("GEQ interaction matrix: {e}")))?;
        let p = pinv * t;
        let map = (0..nf)
            .flat_map(|f| (0..nb).map(move |k| (f, k)))
            .map(|(f, k)| p[(f, k)])
            .collect();
        Ok(Self {
            centers: centers.to_vec(),
            sections,
            map,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn num_bands(&self) -> usize {
        self.centers.len()
    }

    pub fn num_sections(&self) -> usize {
        self.sections.len()
    }

    /// Section gains in dB for the given commands.
    pub fn section_gains(&self, commands: &[f64]) -> Result<Vec<f64>> {
        let nb = self.num_bands();
        if commands.len() != nb {
            return Err(Error::Config(format!(
                "GEQ expects {nb} command gains, got {}",
                commands.len()
            )));
        }
        Ok((0..self.num_sections())
            .map(|f| (0..nb).map(|k| self.map[f * nb + k] * commands[k]).sum())
            .collect())
    }

    /// Second-order sections `(b, a)` for the given commands.
    pub fn cascade(&self, commands: &[f64]) -> Result<Vec<([f64; 3], [f64; 3])>> {
        let g = self.section_gains(commands)?;
        Ok(self.sections.iter().zip(g).map(|(s, g)| s.coeffs(g)).collect())
    }
}

/// Designs the cascade for `commands` (dB per band) at the standard centers.
pub fn geq_design(commands: &[f64], resolution: GeqResolution, fs: f64) -> Result<Vec<([f64; 3], [f64; 3])>> {
    GeqDesign::new(resolution, fs)?.cascade(commands)
}

/// Graphic equalizer with learnable command gains `[bands, channels...]` in dB.
#[derive(Debug, Clone)]
pub struct Geq {
    name: String,
    grid: FrequencyGrid,
    resolution: GeqResolution,
    layout: Layout,
    design: GeqDesign,
    param: Param,
}

impl Geq {
    pub fn new(name: &str, grid: &FrequencyGrid, resolution: GeqResolution, layout: Layout, commands: &[f64]) -> Result<Self> {
        let design = GeqDesign::new(resolution, grid.sample_rate())?;
        let nb = design.num_bands();
        let mut shape = vec![nb];
        shape.extend(layout.dims());
        if commands.len() != nb * layout.channels() {
            return Err(Error::Config(format!(
                "GEQ '{name}' expects {nb} bands × {} channels = {} command gains, got {}",
                layout.channels(),
                nb * layout.channels(),
                commands.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            grid: grid.clone(),
            resolution,
            layout,
            design,
            param: Param::new(&shape, commands)?,
        })
    }

    pub fn resolution(&self) -> GeqResolution {
        self.resolution
    }

    pub fn design(&self) -> &GeqDesign {
        &self.design
    }

    pub fn param(&self) -> &Param {
        &self.param
    }

    pub fn param_mut(&mut self) -> &mut Param {
        &mut self.param
    }
}

impl Module for Geq {
    fn name(&self) -> &str {
        &self.name
    }
    fn set_name(&mut self, name: &str) {
        self.name = name.into();
    }
    fn kind(&self) -> &'static str {
        "geq"
    }
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    fn set_grid(&mut self, grid: &FrequencyGrid) -> Result<()> {
        if grid.sample_rate() != self.grid.sample_rate() {
            let design = GeqDesign::new(self.resolution, grid.sample_rate())?;
            if design.num_bands() != self.design.num_bands() {
                return Err(Error::Config(format!(
                    "GEQ '{}' band count changes with the sample rate",
                    self.name
                )));
            }
            self.design = design;
        }
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
        let nb = self.design.num_bands();
        let nf = self.design.num_sections();
        let nc = self.layout.channels();
        let commands = ctx.param(&self.param).reshape(&[nb, nc])?;
        let map = ctx.constant(Array::from_real(vec![nf, nb], &self.design.map)?);
        let gains = map.matmul(commands)?;
        let powers: Vec<Option<Var<'t>>> = POWERS
            .iter()
            .map(|&p| (p != 0).then(|| gains.scale_real(f64::from(p) * LN_10 / 80.0).exp()))
            .collect();
        let polys: Vec<[[f64; 7]; 6]> = self.design.sections.iter().map(Section::poly).collect();
        let mut coefs = Vec::with_capacity(6);
        for i in 0..6 {
            let mut acc: Option<Var<'t>> = None;
            for (pi, e) in powers.iter().enumerate() {
                let k: Vec<f64> = polys.iter().map(|p| p[i][pi]).collect();
                if k.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let kv = ctx.constant_real(&[nf, 1], &k)?;
                let term = match e {
                    Some(e) => e.mul(kv)?,
                    None => kv.broadcast_to(&[nf, nc])?,
                };
                acc = Some(match acc {
                    Some(a) => a.add(term)?,
                    None => term,
                });
            }
            coefs.push(acc.ok_or_else(|| Error::Autodiff("empty GEQ coefficient".into()))?);
        }
        let b = stack_rows(&coefs[..3])?;
        let a = stack_rows(&coefs[3..])?;
        let h = rational_response(b, Some(a), &self.grid)?;
        let mut acc = h.slice(1, 0, 1)?;
        for f in 1..nf {
            acc = acc.mul(h.slice(1, f, 1)?)?;
        }
        let mut shape = vec![self.grid.num_bins()];
        shape.extend(self.layout.dims());
        acc.reshape(&shape)
    }
    fn snapshot(&self) -> ModuleSnapshot {
        let mut s = ModuleSnapshot::basic(self, "geq-least-squares", &self.param);
        s.resolution = Some(self.resolution.as_str().into());
        s
    }
    fn clone_box(&self) -> Box<dyn Module> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db_at(sections: &[([f64; 3], [f64; 3])], f: f64, fs: f64) -> f64 {
        let zi = C64::from_polar(1.0, -2.0 * PI * f / fs);
        let h: C64 = sections
            .iter()
            .map(|(b, a)| (b[0] + zi * (b[1] + zi * b[2])) / (a[0] + zi * (a[1] + zi * a[2])))
            .product();
        20.0 * h.norm().log10()
    }

    #[test]
    fn band_counts() {
        assert_eq!(GeqResolution::Octave.centers(48000.0).len(), 10);
        assert_eq!(GeqResolution::ThirdOctave.centers(48000.0).len(), 31);
        assert_eq!(GeqResolution::Octave.centers(8000.0).len(), 7);
    }

    #[test]
    fn section_formulas_hit_their_gains() {
        let fs = 48000.0;
        let d = GeqDesign::new(GeqResolution::Octave, fs).unwrap();
        for s in &d.sections {
            let g = 7.5;
            let at = match s.shape {
                Shape::Peak => s.w0,
                Shape::LowShelf => 1e-6,
                Shape::HighShelf => PI - 1e-6,
            };
            assert!((s.gain_db_at(g, at) - g).abs() < 1e-6, "{:?}", s.shape);
        }
    }

    #[test]
    fn zero_commands_are_flat() {
        let fs = 48000.0;
        for res in [GeqResolution::Octave, GeqResolution::ThirdOctave] {
            let n = res.centers(fs).len();
            let sos = geq_design(&vec![0.0; n], res, fs).unwrap();
            for f in [20.0, 100.0, 1000.0, 15000.0] {
                assert!(db_at(&sos, f, fs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn command_count_mismatch() {
        assert!(matches!(
            geq_design(&[0.0; 3], GeqResolution::Octave, 48000.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn module_matches_cascade() {
        let grid = FrequencyGrid::unit(129, 48000.0).unwrap();
        let res = GeqResolution::Octave;
        let cmds: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 1.3).collect();
        let m = Geq::new("eq", &grid, res, Layout::Parallel(1), &cmds).unwrap();
        let r = m.evaluate().unwrap();
        let sos = geq_design(&cmds, res, 48000.0).unwrap();
        for (bin, z) in grid.points().iter().enumerate() {
            let zi = 1.0 / z;
            let h: C64 = sos
                .iter()
                .map(|(b, a)| (b[0] + zi * (b[1] + zi * b[2])) / (a[0] + zi * (a[1] + zi * a[2])))
                .product();
            assert!((r.data()[bin] - h).norm() < 1e-10 * h.norm().max(1.0), "bin {bin}");
        }
    }
}
