//! Full-batch gradient training of a shell's parameters.

mod loss;
mod optim;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use loss::{max_magnitude, mse, sparsity, spectral_flatness, LossKind, LossTerm};
pub use optim::{Optimizer, OptimizerKind};

use crate::autodiff::{Array, Tape, Var, C64};
use crate::error::{Error, Result};
use crate::modules::Ctx;
use crate::shell::{InputLayer, Shell};
use crate::system::{impulse_input, SystemSnapshot};

#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    /// Unit impulse on one input channel, or on all of them when `None`.
    Impulse { channel: Option<usize> },
    /// One impulse per input channel, batched; the output holds every
    /// column of the system matrix.
    IdentityMatrix,
    /// A stored input in the domain of the shell's input layer.
    Signal(Array),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    None,
    /// Same value at every output element.
    Constant(f64),
    Response(Array),
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub items: Vec<(InputSpec, TargetSpec)>,
}

impl Dataset {
    pub fn new(items: Vec<(InputSpec, TargetSpec)>) -> Self {
        Self { items }
    }

    pub fn single(input: InputSpec, target: TargetSpec) -> Self {
        Self::new(vec![(input, target)])
    }
}

fn expand_input(spec: &InputSpec, shell: &Shell) -> Result<Array> {
    let n = shell.n_in();
    let grid = shell.grid();
    let time = shell.input_layer() == InputLayer::Dft;
    let impulse = |ch: Option<usize>| -> Result<Array> {
        if time {
            let mut d = vec![C64::new(0.0, 0.0); n];
            match ch {
                Some(c) if c < n => d[c] = C64::new(1.0, 0.0),
                Some(c) => return Err(Error::shape("impulse", &[n], &[c + 1])),
                None => d.fill(C64::new(1.0, 0.0)),
            }
            Array::new(vec![1, 1, n], d)
        } else {
            impulse_input(grid, n, ch)
        }
    };
    match spec {
        InputSpec::Impulse { channel } => impulse(*channel),
        InputSpec::IdentityMatrix => {
            let parts = (0..n).map(|c| impulse(Some(c))).collect::<Result<Vec<_>>>()?;
            let t = parts[0].shape()[1];
            let data = parts.into_iter().flat_map(Array::into_data).collect();
            Array::new(vec![n, t, n], data)
        }
        InputSpec::Signal(a) => Ok(a.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub patience: Option<usize>,
    /// Receives `metrics.csv` and `run/<epoch>.json` when set.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_log_every() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: default_lr(),
            optimizer: OptimizerKind::default(),
            seed: 0,
            log_every: default_log_every(),
            patience: None,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub terms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub term_names: Vec<String>,
    /// One entry per evaluated epoch; entry `e` is the loss before step `e`.
    pub losses: Vec<EpochLoss>,
    pub stopped_early: bool,
    /// Epochs with a written snapshot.
    pub logged_epochs: Vec<usize>,
    pub final_snapshot: SystemSnapshot,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0].total
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().map_or(f64::NAN, |l| l.total)
    }
}

/// Loss value, its terms and the gradient of every trainable parameter.
pub struct Evaluation {
    pub total: f64,
    pub terms: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

/// Evaluates `Σ wᵢ·termᵢ` averaged over the dataset and differentiates it.
pub fn evaluate(shell: &Shell, data: &Dataset, losses: &[LossTerm]) -> Result<Evaluation> {
    if data.items.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    if losses.is_empty() {
        return Err(Error::Config("no loss terms".into()));
    }
    let tape = Tape::new();
    let ctx = Ctx::new(&tape);
    let outputs = data
        .items
        .iter()
        .map(|(input, target)| {
            let x = ctx.constant(expand_input(input, shell)?);
            let y = shell.forward(&ctx, x)?;
            check_output(&y)?;
            let t = match target {
                TargetSpec::None => None,
                TargetSpec::Constant(c) => Some(ctx.constant(Array::full(&y.shape(), C64::new(*c, 0.0)))),
                TargetSpec::Response(a) => Some(ctx.constant(a.clone())),
            };
            Ok((y, t))
        })
        .collect::<Result<Vec<_>>>()?;

    let scale = 1.0 / outputs.len() as f64;
    let mut terms = Vec::with_capacity(losses.len());
    let mut total: Option<Var> = None;
    for term in losses {
        let v = if term.uses_output() {
            let mut acc: Option<Var> = None;
            for (y, t) in &outputs {
                let l = term.on_output(*y, *t)?;
                acc = Some(match acc {
                    Some(a) => a.add(l)?,
                    None => l,
                });
            }
            acc.expect("non-empty dataset").scale_real(scale)
        } else {
            term.on_params(&ctx, shell.core())?
        };
        terms.push(v.item());
        let w = v.scale_real(term.weight);
        total = Some(match total {
            Some(a) => a.add(w)?,
            None => w,
        });
    }
    let total = total.expect("non-empty losses");
    let value = total.item();
    if !value.is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            detail: format!("loss evaluated to {value}"),
        });
    }
    let g = tape.backward(total)?;
    let grads = trainable(shell)
        .iter()
        .map(|p| ctx.grad(&g, p).map(|a| a.re()).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();
    Ok(Evaluation {
        total: value,
        terms,
        grads,
    })
}

fn check_output(y: &Var) -> Result<()> {
    y.with_value(|a| {
        let s = a.shape();
        // [B, M, N]: report the bin of the first bad value
        let per_bin = s.get(2).copied().unwrap_or(1);
        let m = s.get(1).copied().unwrap_or(1);
        match a.data().iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                epoch: 0,
                detail: format!("non-finite output magnitude at bin {}", (i / per_bin) % m),
            }),
            None => Ok(()),
        }
    })
}

fn trainable(shell: &Shell) -> Vec<&crate::modules::Param> {
    shell.core().params().into_iter().filter(|p| p.requires_grad).collect()
}

fn param_values(shell: &Shell) -> Vec<Vec<f64>> {
    trainable(shell).iter().map(|p| p.values()).collect()
}

fn set_param_values(shell: &mut Shell, values: &[Vec<f64>]) -> Result<()> {
    let mut ps: Vec<_> = shell
        .core_mut()
        .params_mut()
        .into_iter()
        .filter(|p| p.requires_grad)
        .collect();
    for (p, v) in ps.iter_mut().zip(values) {
        p.set_values(v)?;
    }
    Ok(())
}

fn write_snapshot(path: &Path, snap: &SystemSnapshot) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(snap)?)?;
    Ok(())
}

/// Runs `cfg.epochs` optimizer steps. The loss is evaluated `epochs + 1`
/// times, so the last entry reflects the final parameters.
pub fn train(shell: &mut Shell, data: &Dataset, cfg: &TrainConfig, losses: &[LossTerm]) -> Result<TrainReport> {
    if !(cfg.lr > 0.0) || cfg.log_every == 0 {
        return Err(Error::Config("learning rate and log_every must be positive".into()));
    }
    if data.items.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    if trainable(shell).is_empty() {
        return Err(Error::Config("no parameter requires a gradient".into()));
    }
    let term_names: Vec<String> = losses.iter().map(|l| l.name.clone()).collect();
    let mut csv = match &cfg.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut f = fs::File::create(dir.join("metrics.csv"))?;
            writeln!(f, "epoch,total,{}", term_names.join(","))?;
            Some(f)
        }
        None => None,
    };
    let snap_path = |epoch: usize| cfg.out_dir.as_ref().map(|d| d.join("run").join(format!("{epoch}.json")));

    let sizes: Vec<usize> = trainable(shell).iter().map(|p| p.len()).collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &sizes);
    let mut report = TrainReport {
        term_names,
        losses: Vec::with_capacity(cfg.epochs + 1),
        stopped_early: false,
        logged_epochs: Vec::new(),
        final_snapshot: shell.core().snapshot(),
    };
    let mut last_good = param_values(shell);
    let mut best = (f64::INFINITY, 0usize);

    for epoch in 0..=cfg.epochs {
        let eval = match evaluate(shell, data, losses) {
            Ok(e) if e.grads.iter().flatten().all(|g| g.is_finite()) => e,
            Ok(_) => return abort(shell, &last_good, cfg, epoch, "non-finite gradient".into()),
            Err(Error::NonFinite { detail, .. }) => return abort(shell, &last_good, cfg, epoch, detail),
            Err(e) => return Err(e),
        };
        last_good = param_values(shell);
        if let Some(f) = csv.as_mut() {
            let terms: Vec<String> = eval.terms.iter().map(|t| t.to_string()).collect();
            writeln!(f, "{epoch},{},{}", eval.total, terms.join(","))?;
        }
        report.losses.push(EpochLoss {
            epoch,
            total: eval.total,
            terms: eval.terms.clone(),
        });
        log::debug!("epoch {epoch}: loss {}", eval.total);

        if eval.total < best.0 {
            best = (eval.total, epoch);
        }
        let stop = cfg.patience.is_some_and(|p| epoch - best.1 >= p) && epoch < cfg.epochs;
        let last = epoch == cfg.epochs || stop;
        if epoch % cfg.log_every == 0 || last {
            if let Some(p) = snap_path(epoch) {
                write_snapshot(&p, &shell.core().snapshot())?;
            }
            report.logged_epochs.push(epoch);
        }
        if last {
            report.stopped_early = stop;
            break;
        }
        let mut values = last_good.clone();
        opt.step(&mut values, &eval.grads);
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return abort(
                shell,
                &last_good,
                cfg,
                epoch + 1,
                "optimizer produced non-finite parameters".into(),
            );
        }
        set_param_values(shell, &values)?;
    }
    if let Some(f) = csv.as_mut() {
        f.flush()?;
    }
    report.final_snapshot = shell.core().snapshot();
    Ok(report)
}

fn abort(shell: &mut Shell, good: &[Vec<f64>], cfg: &TrainConfig, epoch: usize, detail: String) -> Result<TrainReport> {
    set_param_values(shell, good)?;
    if let Some(dir) = &cfg.out_dir {
        write_snapshot(&dir.join("run").join("last_good.json"), &shell.core().snapshot())?;
    }
    Err(Error::NonFinite { epoch, detail })
}
