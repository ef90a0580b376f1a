use std::fs;

use freqsamp::grid::{dft_real, FrequencyGrid};
use freqsamp::modules::{Fir, ParallelFir};
use freqsamp::shell::{InputLayer, OutputLayer, Shell};
use freqsamp::system::{System, SystemSnapshot};
use freqsamp::train::{train, Dataset, InputSpec, LossKind, LossTerm, OptimizerKind, TargetSpec, TrainConfig};

const TARGET: [f64; 6] = [0.5, -0.25, 0.125, 0.3, 0.0, -0.1];

fn grid() -> FrequencyGrid {
    FrequencyGrid::unit(64, 8000.0).unwrap()
}

fn fir_shell(taps: &[f64]) -> Shell {
    let core: System = ParallelFir::new("fir", &grid(), 1, taps).unwrap().into();
    Shell::new(core, InputLayer::Identity, OutputLayer::Identity).unwrap()
}

/// Fit the FIR taps to a known response with MSE.
fn fixture() -> (Dataset, Vec<LossTerm>) {
    let h = dft_real(&TARGET, &grid()).unwrap();
    let target = h.data.reshape(&[1, 64, 1]).unwrap();
    (
        Dataset::single(InputSpec::Impulse { channel: None }, TargetSpec::Response(target)),
        vec![
            LossTerm::new("mse", 1.0, LossKind::Mse),
            LossTerm::new("flatness", 0.0, LossKind::SpectralFlatness),
        ],
    )
}

fn config(epochs: usize, out: Option<&std::path::Path>) -> TrainConfig {
    TrainConfig {
        epochs,
        lr: 0.05,
        log_every: 4,
        out_dir: out.map(|p| p.to_path_buf()),
        ..Default::default()
    }
}

#[test]
fn metrics_and_checkpoints_cover_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let (data, losses) = fixture();
    let mut shell = fir_shell(&[0.0; 6]);
    let report = train(&mut shell, &data, &config(10, Some(dir.path())), &losses).unwrap();

    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,total,mse,flatness");
    assert_eq!(lines.len(), 12);
    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[0].parse::<usize>().unwrap(), i);
        assert_eq!(cols[1].parse::<f64>().unwrap(), report.losses[i].total);
    }
    assert_eq!(report.logged_epochs, vec![0, 4, 8, 10]);
    for e in &report.logged_epochs {
        assert!(dir.path().join(format!("run/{e}.json")).exists(), "missing checkpoint {e}");
    }
    assert!(!dir.path().join("run/5.json").exists());
}

#[test]
fn checkpoint_reloads_to_the_trained_system() {
    let dir = tempfile::tempdir().unwrap();
    let (data, losses) = fixture();
    let mut shell = fir_shell(&[0.0; 6]);
    train(&mut shell, &data, &config(7, Some(dir.path())), &losses).unwrap();

    let text = fs::read_to_string(dir.path().join("run/7.json")).unwrap();
    let snap: SystemSnapshot = serde_json::from_str(&text).unwrap();
    let reloaded = System::from_snapshot(&snap, &grid()).unwrap();
    assert_eq!(reloaded.evaluate().unwrap(), shell.core().evaluate().unwrap());
    assert_eq!(reloaded.params()[0].values(), shell.core().params()[0].values());

    // earlier checkpoints load into a live system through load_values
    let early: SystemSnapshot = serde_json::from_str(&fs::read_to_string(dir.path().join("run/0.json")).unwrap()).unwrap();
    let mut sys = shell.core().clone();
    sys.load_values(&early).unwrap();
    assert_eq!(sys.params()[0].values(), vec![0.0; 6]);
}

#[test]
fn same_config_gives_identical_logs() {
    let (data, losses) = fixture();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut shell = fir_shell(&[0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        train(&mut shell, &data, &config(25, Some(dir.path())), &losses).unwrap();
        fs::read(dir.path().join("metrics.csv")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn sgd_descends_monotonically_and_recovers_the_taps() {
    let (data, losses) = fixture();
    let mut shell = fir_shell(&[0.0; 6]);
    let cfg = TrainConfig {
        epochs: 300,
        lr: 0.5,
        optimizer: OptimizerKind::Sgd,
        ..Default::default()
    };
    let report = train(&mut shell, &data, &cfg, &losses).unwrap();
    for w in report.losses.windows(2) {
        assert!(w[1].total <= w[0].total, "loss rose at epoch {}", w[1].epoch);
    }
    let taps = shell.core().params()[0].values();
    for (t, e) in taps.iter().zip(TARGET) {
        assert!((t - e).abs() < 1e-6, "{taps:?}");
    }
}

#[test]
fn adam_reduces_a_multichannel_loss() {
    let grid = grid();
    let core: System = Fir::new("fir", &grid, 2, 2, &[0.3; 4 * 4]).unwrap().into();
    let mut shell = Shell::new(core, InputLayer::Identity, OutputLayer::Magnitude).unwrap();
    let data = Dataset::single(InputSpec::IdentityMatrix, TargetSpec::Constant(1.0));
    let losses = vec![LossTerm::new("mse", 1.0, LossKind::Mse)];
    let cfg = TrainConfig {
        epochs: 100,
        lr: 0.02,
        ..Default::default()
    };
    let r = train(&mut shell, &data, &cfg, &losses).unwrap();
    assert!(
        r.final_loss() < 0.5 * r.initial_loss(),
        "{} -> {}",
        r.initial_loss(),
        r.final_loss()
    );
}

#[test]
fn frozen_parameters_do_not_move() {
    let grid = grid();
    let mut fixed = ParallelFir::new("fixed", &grid, 1, &[1.0, 0.5]).unwrap();
    freqsamp::modules::Module::params_mut(&mut fixed)[0].requires_grad = false;
    let core = System::series(vec![
        ParallelFir::new("fir", &grid, 1, &[0.0; 6]).unwrap().into(),
        fixed.into(),
    ])
    .unwrap();
    let mut shell = Shell::new(core, InputLayer::Identity, OutputLayer::Identity).unwrap();
    let (data, losses) = fixture();
    train(&mut shell, &data, &config(20, None), &losses).unwrap();
    assert_eq!(shell.core().find("fixed").unwrap().params()[0].values(), vec![1.0, 0.5]);
    assert_ne!(shell.core().find("fir").unwrap().params()[0].values(), vec![0.0; 6]);
}
