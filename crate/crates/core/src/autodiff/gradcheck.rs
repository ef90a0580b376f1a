use super::{Array, Tape, Var, C64};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub param: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tol: f64,
    /// Set when the loss was non-finite somewhere; the check then fails.
    pub failure: Option<String>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.entries.iter().all(|e| e.rel_err < self.tol)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

fn eval<F>(builder: &F, params: &[Array]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    Ok(builder(&tape, &leaves)?.item())
}

/// Compares tape gradients with central differences, `ε = step·max(1, |p|)`.
///
/// The relative error of each element is `|g − fd| / max(|g|, |fd|, floor)`
/// where `floor = max(1e−6, 1e−3·max|g|)`, so elements whose gradient is
/// negligible next to the largest one are compared on the common scale.
pub fn grad_check<F>(builder: F, params: &[Array], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = builder(&tape, &leaves)?;
    let mut report = GradCheckReport {
        entries: Vec::new(),
        tol,
        failure: None,
    };
    if !loss.item().is_finite() {
        report.failure = Some("non-finite loss at the base point".into());
        return Ok(report);
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .zip(params)
        .map(|(l, p)| grads.get(l).map(|g| g.re()).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();
    let gmax = analytic.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (1e-3 * gmax).max(1e-6);

    let mut work: Vec<Array> = params.iter().map(|p| p.map(|z| C64::new(z.re, 0.0))).collect();
    for (pi, p) in params.iter().enumerate() {
        #[allow(clippy::needless_range_loop)]
        for e in 0..p.len() {
            let x = p.data()[e].re;
            let eps = step * x.abs().max(1.0);
            work[pi].data_mut()[e] = C64::new(x + eps, 0.0);
            let lp = eval(&builder, &work);
            work[pi].data_mut()[e] = C64::new(x - eps, 0.0);
            let lm = eval(&builder, &work);
            work[pi].data_mut()[e] = C64::new(x, 0.0);
            let (lp, lm) = match (lp, lm) {
                (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => (a, b),
                (a, b) => {
                    report.failure = Some(format!(
                        "loss not finite at perturbed point (param {pi}, element {e}): {:?} / {:?}",
                        a.map_err(|e| e.to_string()),
                        b.map_err(|e| e.to_string())
                    ));
                    continue;
                }
            };
            let numeric = (lp - lm) / (2.0 * eps);
            let g = analytic[pi][e];
            let rel_err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(floor);
            report.entries.push(GradCheckEntry {
                param: pi,
                element: e,
                analytic: g,
                numeric,
                rel_err,
            });
        }
    }
    Ok(report)
}
