//! Acceptance suite: one pass/fail line per criterion. Run with
//! `cargo test --release --test acceptance` for realistic timings.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use freqsamp::antialias::{choose_gamma, enveloped_grid};
use freqsamp::apps::config::{AaOptimConfig, FdnOptimConfig};
use freqsamp::apps::fdn::{default_delays, Attenuation, FdnSpec};
use freqsamp::apps::gradcheck::{run_suite, DEFAULT_STEP, DEFAULT_TOL};
use freqsamp::apps::{run_aa_optim, run_fdn_optim};
use freqsamp::autodiff::C64;
use freqsamp::filters::{biquad_coeffs, geq_design, Biquad, BiquadKind, GeqResolution, Svf, SvfMode};
use freqsamp::grid::{dft_real, idft_half_spectrum, FrequencyGrid};
use freqsamp::modules::{Fir, Gain, Layout, MatrixMap, ParallelFir, ParallelGain};
use freqsamp::system::System;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn draws(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

fn gradients() -> Outcome {
    let results = run_suite(4096, 10, DEFAULT_STEP, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let worst = results.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({:.1e})", r.name, r.max_rel_err))
        .collect();
    let detail = format!("{} module types x 10 seeds, worst rel err {worst:.1e}", results.len());
    check(
        failed.is_empty(),
        if failed.is_empty() {
            detail
        } else {
            format!("{detail}; failed: {}", failed.join(", "))
        },
    )
}

/// FDN with integer delays and identity-mapped matrix `a`.
fn fdn(delays: &[f64], a: Vec<f64>, fs: f64, seed: u64) -> FdnSpec {
    let mut s = FdnSpec::random(delays.len(), delays.to_vec(), fs, seed).unwrap();
    s.map = MatrixMap::Identity;
    s.matrix = a;
    s
}

fn oracle(s: &FdnSpec, len: usize) -> Vec<f64> {
    let delays: Vec<usize> = s.delays.iter().map(|m| *m as usize).collect();
    let filters: Vec<SosFilter> = s.line_gains().unwrap().into_iter().map(SosFilter::gain).collect();
    fdn_time(&delays, &s.matrix, &s.input_gains, &s.output_gains, s.direct, &filters, len)
}

fn time_domain_oracle() -> Outcome {
    let fs = 8000.0;
    let mut s = fdn(&[13.0, 17.0, 19.0, 23.0], orthogonal(4, 2), fs, 2);
    s.attenuation = Attenuation::Homogeneous { t60: 0.5 };
    let grid = FrequencyGrid::unit(8000, fs).unwrap();
    let ir = s.shell(&grid).unwrap().get_time_response(Some(0)).unwrap().remove(0);
    let expected = oracle(&s, ir.len());
    let err = max_abs_diff(&ir.samples, &expected);
    let p = peak(&expected);
    check(
        err < 1e-3 * p,
        format!("max error {:.2e} of peak {p:.3} over {} samples", err, ir.len()),
    )
}

fn antialiasing() -> Outcome {
    let fs = 48000.0;
    let m = 96000;
    let delays = default_delays(4, fs);
    let mut s = fdn(&delays, orthogonal(4, 9), fs, 9);
    s.attenuation = Attenuation::Homogeneous { t60: 9.0 };
    let unit = FrequencyGrid::unit(m, fs).unwrap();
    let len = 2 * (m - 1);
    let expected = oracle(&s, len);
    let onset = delays.iter().fold(f64::INFINITY, |a, b| a.min(*b)) as usize;

    let mut errors = Vec::new();
    let mut pre = Vec::new();
    for db in [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0] {
        let grid = enveloped_grid(&unit, choose_gamma(m, db).unwrap()).unwrap();
        let ir = s.shell(&grid).unwrap().get_time_response(Some(0)).unwrap().remove(0);
        let err: f64 = ir.samples.iter().zip(&expected).map(|(x, y)| (x - y).powi(2)).sum();
        errors.push(err);
        pre.push(ir.samples[..onset].iter().map(|x| x * x).sum::<f64>());
    }
    let drop = 10.0 * (pre[0] / pre[6]).log10();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let trace: Vec<String> = errors.iter().map(|e| format!("{:.0}", 10.0 * e.log10())).collect();
    check(
        drop >= 40.0 && monotone,
        format!(
            "pre-onset energy {drop:.1} dB lower; aliasing error dB over 0..60 dB targets [{}]",
            trace.join(", ")
        ),
    )
}

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut roundtrip, mut assoc, mut fixed, mut equiv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for m in [2, 3, 17, 256, 1001, 4097] {
        let grid = FrequencyGrid::unit(m, 1000.0).unwrap();
        let x = draws(&mut rng, grid.frame_len(), 1.0);
        let y = idft_half_spectrum(dft_real(&x, &grid).unwrap().data.data(), 1000.0).unwrap();
        roundtrip = roundtrip.max(max_abs_diff(&x, &y.samples) / peak(&x));
    }
    for _ in 0..20 {
        let grid = FrequencyGrid::unit(65, 8000.0).unwrap();
        let a: System = Fir::new("a", &grid, 3, 2, &draws(&mut rng, 30, 1.0)).unwrap().into();
        let b: System = Biquad::new(
            "b",
            &grid,
            BiquadKind::Bandpass,
            Layout::Parallel(3),
            &draws(&mut rng, 9, 2.0),
        )
        .unwrap()
        .into();
        let c: System = Gain::new("c", &grid, 2, 3, &draws(&mut rng, 6, 1.0)).unwrap().into();
        let (ha, hb, hc) = (a.evaluate().unwrap(), b.evaluate().unwrap(), c.evaluate().unwrap());
        let left = bin_matmul(&bin_matmul(&hc, &hb), &ha);
        let right = bin_matmul(&hc, &bin_matmul(&hb, &ha));
        let nested = System::series_unchecked(vec![System::series_unchecked(vec![a.clone(), b.clone()]), c.clone()]);
        assoc = assoc
            .max(max_rel_diff(&left, &right))
            .max(max_rel_diff(&nested.evaluate().unwrap(), &left))
            .max(max_rel_diff(
                &System::series(vec![a, b, c]).unwrap().evaluate().unwrap(),
                &left,
            ));

        let grid = FrequencyGrid::unit(129, 8000.0).unwrap();
        let g: System = Fir::new("g", &grid, 3, 3, &draws(&mut rng, 36, 0.3)).unwrap().into();
        let f: System = Gain::new("f", &grid, 3, 3, &draws(&mut rng, 9, 0.3)).unwrap().into();
        let h = System::recursion(g.clone(), f.clone()).unwrap().evaluate().unwrap();
        let hg = g.evaluate().unwrap();
        let rhs = bin_matmul(&hg, &bin_matmul(&f.evaluate().unwrap(), &h)).zip_map(&hg, |x, y| x + y);
        fixed = fixed.max(h.zip_map(&rhs, |x, y| x - y).max_abs() / h.max_abs());

        let grid = FrequencyGrid::unit(33, 8000.0).unwrap();
        let n = 3;
        let diag = |v: &[f64], k: usize| {
            let mut out = vec![0.0; k * n * n];
            for t in 0..k {
                for i in 0..n {
                    out[t * n * n + i * n + i] = v[t * n + i];
                }
            }
            out
        };
        let gains = draws(&mut rng, n, 1.0);
        let pg: System = ParallelGain::new("p", &grid, &gains).unwrap().into();
        let fg: System = Gain::new("f", &grid, n, n, &diag(&gains, 1)).unwrap().into();
        let taps = draws(&mut rng, 7 * n, 1.0);
        let pf: System = ParallelFir::new("p", &grid, n, &taps).unwrap().into();
        let ff: System = Fir::new("f", &grid, n, n, &diag(&taps, 7)).unwrap().into();
        equiv = equiv
            .max(max_rel_diff(&pg.evaluate().unwrap(), &fg.evaluate().unwrap()))
            .max(max_rel_diff(&pf.evaluate().unwrap(), &ff.evaluate().unwrap()));
    }
    check(
        roundtrip < 1e-9 && assoc < 1e-12 && fixed < 1e-9 && equiv < 1e-12,
        format!("round trip {roundtrip:.1e}, associativity {assoc:.1e}, fixed point {fixed:.1e}, parallel/full {equiv:.1e}"),
    )
}

fn filters() -> Outcome {
    let mut lp = 0.0f64;
    for w0 in [0.05, 0.3, 1.0, 2.0, 3.0] {
        for q in [0.5, 0.707, 2.0] {
            let s = [biquad_coeffs(BiquadKind::Lowpass, w0, 0.0, q).unwrap()];
            lp = lp
                .max((sos_at(&s, C64::new(1.0, 0.0)).norm() - 1.0).abs())
                .max(sos_at(&s, C64::new(-1.0, 0.0)).norm());
        }
    }

    let grid = FrequencyGrid::unit(9, 48000.0).unwrap();
    let modes = [
        SvfMode::Lowpass,
        SvfMode::Highpass,
        SvfMode::Bandpass,
        SvfMode::Lowshelf,
        SvfMode::Highshelf,
        SvfMode::Peaking,
        SvfMode::Notch,
        SvfMode::Generic,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_pole = 0.0f64;
    for draw in 0..1000 {
        let mode = modes[draw % modes.len()];
        let raw = draws(&mut rng, mode.num_params(), 10.0);
        let svf = Svf::new("s", &grid, mode, Layout::Parallel(1), 1, &raw).unwrap();
        let (_, a) = svf.coefficients().unwrap()[0][0];
        for r in poly_roots(&[C64::new(1.0, 0.0), C64::new(a[1] / a[0], 0.0), C64::new(a[2] / a[0], 0.0)]) {
            worst_pole = worst_pole.max(r.norm());
        }
    }

    let fs = 48000.0;
    let db_at = |s: &[Sos], f: f64| {
        20.0 * sos_at(s, C64::from_polar(1.0, 2.0 * std::f64::consts::PI * f / fs))
            .norm()
            .log10()
    };
    let (mut flat, mut boost) = (0.0f64, 0.0f64);
    for res in [GeqResolution::Octave, GeqResolution::ThirdOctave] {
        let centers = res.centers(fs);
        let s = geq_design(&vec![0.0; centers.len()], res, fs).unwrap();
        for k in 1..1000 {
            flat = flat.max(db_at(&s, 0.5 * fs * k as f64 / 1000.0).abs());
        }
        for (band, fc) in centers.iter().enumerate() {
            let mut cmd = vec![0.0; centers.len()];
            cmd[band] = 12.0;
            let s = geq_design(&cmd, res, fs).unwrap();
            boost = boost.max((db_at(&s, *fc) - 12.0).abs());
        }
    }
    check(
        lp <= 1e-12 && worst_pole < 1.0 && flat <= 0.01 && boost <= 1.0,
        format!(
            "lowpass DC/Nyquist error {lp:.1e}; SVF poles at least {:.1e} inside the unit circle over 1000 draws; \
             GEQ flat within {flat:.1e} dB; +12 dB band off by at most {boost:.2} dB",
            1.0 - worst_pole
        ),
    )
}

fn colorless_fdn(dir: &Path) -> Outcome {
    let cfg = FdnOptimConfig {
        output_dir: dir.join("fdn"),
        ..Default::default()
    };
    let o = run_fdn_optim(&cfg).map_err(|e| e.to_string())?;
    let (before, after) = (o.echo_density_09_before, o.echo_density_09_after);
    let density_ok = match (before, after) {
        (Some(b), Some(a)) => a <= b,
        (None, Some(_)) => true,
        _ => false,
    };
    check(
        o.final_loss < o.initial_loss && o.magnitude_std_reduction >= 0.3 && density_ok,
        format!(
            "seed {}: loss {:.3} -> {:.3}; std|H| {:.3} -> {:.3} ({:.1}% lower); echo density 0.9 at {:?} -> {:?} s",
            o.seed,
            o.initial_loss,
            o.final_loss,
            o.magnitude_std_before,
            o.magnitude_std_after,
            100.0 * o.magnitude_std_reduction,
            before,
            after
        ),
    )
}

fn active_acoustics(dir: &Path) -> Outcome {
    let cfg = AaOptimConfig {
        output_dir: dir.join("aa"),
        ..Default::default()
    };
    let o = run_aa_optim(&cfg).map_err(|e| e.to_string())?;
    let reduction = 1.0 - o.flatness_after / o.flatness_before;
    check(
        o.iqr_after < o.iqr_before && reduction >= 0.5,
        format!(
            "seed {}: eigenvalue IQR {:.3} -> {:.3}; flatness {:.3} -> {:.3} ({:.0}% lower)",
            o.seed,
            o.iqr_before,
            o.iqr_after,
            o.flatness_before,
            o.flatness_after,
            100.0 * reduction
        ),
    )
}

/// All CSV files below `dir`, sorted by relative path.
fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(dir: &Path) -> Outcome {
    let fdn = FdnOptimConfig {
        size: 4,
        num_bins: 4001,
        train: freqsamp::apps::config::TrainSection {
            epochs: 15,
            ..FdnOptimConfig::default().train
        },
        render: freqsamp::apps::config::RenderSection {
            num_bins: 8001,
            antialias_db: 60.0,
            seconds: 0.15,
        },
        ..Default::default()
    };
    let aa = AaOptimConfig {
        num_bins: 513,
        mixing_taps: 16,
        train: freqsamp::apps::config::TrainSection {
            epochs: 15,
            ..AaOptimConfig::default().train
        },
        ..Default::default()
    };
    std::fs::write(dir.join("fdn.json"), serde_json::to_string(&fdn).unwrap()).unwrap();
    std::fs::write(dir.join("aa.json"), serde_json::to_string(&aa).unwrap()).unwrap();

    let mut compared = 0;
    for (cmd, cfg) in [("fdn-optim", "fdn.json"), ("aa-optim", "aa.json")] {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = format!("{cmd}-{k}");
            let run = Command::new(env!("CARGO_BIN_EXE_freqsamp"))
                .args([cmd, "--config", cfg, "--out-dir", &out])
                .current_dir(dir)
                .env("FREQSAMP_SEED", "7")
                .env("RUST_LOG", "warn")
                .output()
                .map_err(|e| e.to_string())?;
            if !run.status.success() {
                return Err(format!(
                    "{cmd} exited with {}: {}",
                    run.status,
                    String::from_utf8_lossy(&run.stderr)
                ));
            }
            runs.push(csv_files(&dir.join(out)));
        }
        if runs[0].is_empty() {
            return Err(format!("{cmd} wrote no CSV files"));
        }
        if runs[0] != runs[1] {
            let names: Vec<&String> = runs[0]
                .iter()
                .zip(&runs[1])
                .filter(|(a, b)| a != b)
                .map(|(a, _)| &a.0)
                .collect();
            return Err(format!("{cmd} differs between runs: {names:?}"));
        }
        compared += runs[0].len();
    }
    Ok(format!(
        "{compared} CSV files identical across two invocations of each optimizer"
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let dir = tmp.path();
    type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("gradient correctness", Duration::from_secs(120), Box::new(gradients)),
        (
            "frequency sampling vs time-domain recursion",
            Duration::from_secs(10),
            Box::new(time_domain_oracle),
        ),
        ("anti-aliasing", Duration::from_secs(120), Box::new(antialiasing)),
        (
            "round-trip and algebra invariants",
            Duration::from_secs(10),
            Box::new(invariants),
        ),
        ("filter contracts", Duration::from_secs(60), Box::new(filters)),
        ("colorless FDN", Duration::from_secs(600), Box::new(|| colorless_fdn(dir))),
        (
            "active acoustics",
            Duration::from_secs(600),
            Box::new(|| active_acoustics(dir)),
        ),
        ("determinism", Duration::from_secs(600), Box::new(|| determinism(dir))),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        let elapsed = t.elapsed();
        let over = elapsed > *budget;
        let (tag, detail) = match &outcome {
            Ok(d) if !over => ("PASS", d.clone()),
            Ok(d) => ("FAIL", format!("{d}; over the {}s budget", budget.as_secs())),
            Err(d) => ("FAIL", d.clone()),
        };
        failed += usize::from(tag == "FAIL");
        println!("criterion {}: {tag} {name} ({:.1}s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
