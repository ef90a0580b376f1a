mod common;

use common::*;
use freqsamp::antialias::{choose_gamma, enveloped_grid};
use freqsamp::autodiff::{Array, Tape, C64};
use freqsamp::filters::{Biquad, BiquadKind, Svf, SvfMode};
use freqsamp::grid::{dft_real, evaluate_rational, idft_half_spectrum, FrequencyGrid};
use freqsamp::modules::{Fir, Gain, Layout, ParallelFir, ParallelGain};
use freqsamp::system::System;
use freqsamp::train::sparsity;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform draws in `[−scale, scale]`.
fn draws(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dft_idft_roundtrip(m in 2usize..300, seed in any::<u64>()) {
        let grid = FrequencyGrid::unit(m, 1000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = draws(&mut rng, grid.frame_len(), 1.0);
        let h = dft_real(&x, &grid).unwrap();
        let y = idft_half_spectrum(h.data.data(), 1000.0).unwrap();
        let err = max_abs_diff(&x, &y.samples);
        prop_assert!(err <= 1e-9 * peak(&x), "{err:e}");
    }

    #[test]
    fn idft_matches_naive_sum(m in 2usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut half: Vec<C64> = (0..m).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        half[0].im = 0.0;
        half[m - 1].im = 0.0;
        let fast = idft_half_spectrum(&half, 1.0).unwrap();
        let slow = naive_idft(&half);
        prop_assert!(max_abs_diff(&fast.samples, &slow) < 1e-12);
    }

    #[test]
    fn series_is_associative(seed in any::<u64>()) {
        let grid = FrequencyGrid::unit(65, 8000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: System = Fir::new("a", &grid, 3, 2, &draws(&mut rng, 5 * 6, 1.0)).unwrap().into();
        let b: System = Biquad::new("b", &grid, BiquadKind::Bandpass, Layout::Parallel(3), &draws(&mut rng, 9, 2.0)).unwrap().into();
        let c: System = Gain::new("c", &grid, 2, 3, &draws(&mut rng, 6, 1.0)).unwrap().into();
        let (ha, hb, hc) = (a.evaluate().unwrap(), b.evaluate().unwrap(), c.evaluate().unwrap());
        let left = bin_matmul(&bin_matmul(&hc, &hb), &ha);
        let right = bin_matmul(&hc, &bin_matmul(&hb, &ha));
        let nested = System::series_unchecked(vec![System::series_unchecked(vec![a.clone(), b.clone()]), c.clone()]);
        let flat = System::series(vec![a, b, c]).unwrap();
        let (hn, hf) = (nested.evaluate().unwrap(), flat.evaluate().unwrap());
        prop_assert!(max_rel_diff(&left, &right) < 1e-12);
        prop_assert!(max_rel_diff(&hn, &left) < 1e-12);
        prop_assert!(max_rel_diff(&hf, &left) < 1e-12);
    }

    #[test]
    fn recursion_solves_its_fixed_point(seed in any::<u64>()) {
        let grid = FrequencyGrid::unit(129, 8000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: System = Fir::new("g", &grid, 3, 3, &draws(&mut rng, 4 * 9, 0.3)).unwrap().into();
        let f: System = Gain::new("f", &grid, 3, 3, &draws(&mut rng, 9, 0.3)).unwrap().into();
        let h = System::recursion(g.clone(), f.clone()).unwrap().evaluate().unwrap();
        let (hg, hf) = (g.evaluate().unwrap(), f.evaluate().unwrap());
        // H = G (I + F H)
        let fh = bin_matmul(&hf, &h);
        let rhs = bin_matmul(&hg, &fh).zip_map(&hg, |x, y| x + y);
        let residual = h.zip_map(&rhs, |x, y| x - y).max_abs() / h.max_abs();
        prop_assert!(residual < 1e-9, "{residual:e}");
    }

    #[test]
    fn parallel_modules_equal_their_diagonal_full_forms(seed in any::<u64>()) {
        let grid = FrequencyGrid::unit(33, 8000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let diag = |v: &[f64], k: usize| -> Vec<f64> {
            let mut out = vec![0.0; k * n * n];
            for t in 0..k {
                for i in 0..n {
                    out[t * n * n + i * n + i] = v[t * n + i];
                }
            }
            out
        };
        let g = draws(&mut rng, n, 1.0);
        let pg: System = ParallelGain::new("p", &grid, &g).unwrap().into();
        let fg: System = Gain::new("f", &grid, n, n, &diag(&g, 1)).unwrap().into();
        prop_assert!(max_rel_diff(&pg.evaluate().unwrap(), &fg.evaluate().unwrap()) < 1e-12);

        let taps = draws(&mut rng, 7 * n, 1.0);
        let pf: System = ParallelFir::new("p", &grid, n, &taps).unwrap().into();
        let ff: System = Fir::new("f", &grid, n, n, &diag(&taps, 7)).unwrap().into();
        prop_assert!(max_rel_diff(&pf.evaluate().unwrap(), &ff.evaluate().unwrap()) < 1e-12);

        // a parallel biquad bank is the diagonal of a full one with the same raw values there
        let raw_p = draws(&mut rng, 3 * n, 1.5);
        let mut raw_f = draws(&mut rng, 3 * n * n, 1.5);
        for p in 0..3 {
            for i in 0..n {
                raw_f[p * n * n + i * n + i] = raw_p[p * n + i];
            }
        }
        let bp: System = Biquad::new("p", &grid, BiquadKind::Lowpass, Layout::Parallel(n), &raw_p).unwrap().into();
        let bf: System = Biquad::new("f", &grid, BiquadKind::Lowpass, Layout::Full { n_out: n, n_in: n }, &raw_f).unwrap().into();
        let (hp, hf) = (bp.evaluate().unwrap(), bf.evaluate().unwrap());
        for bin in 0..grid.num_bins() {
            for i in 0..n {
                let k = bin * n * n + i * n + i;
                prop_assert!((hp.data()[k] - hf.data()[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sparsity_is_bounded(v in prop::collection::vec(-10.0f64..10.0, 2..40)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
        let tape = Tape::new();
        let n = v.len() as f64;
        let s = sparsity(tape.leaf(Array::from_real(vec![v.len()], &v).unwrap())).unwrap().item();
        prop_assert!(s >= -1e-12 && s <= 1.0 - 1.0 / n.sqrt() + 1e-12, "{s}");
    }

    #[test]
    fn enveloped_response_is_the_damped_impulse_response(seed in any::<u64>(), db in 0.0f64..120.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // two sections with poles inside radius 0.95
        let sections: Vec<Sos> = (0..2)
            .map(|_| {
                let r = 0.95 * rng.random::<f64>();
                let th = std::f64::consts::PI * rng.random::<f64>();
                let b = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
                (b, [1.0, -2.0 * r * th.cos(), r * r])
            })
            .collect();
        let unit = FrequencyGrid::unit(1025, 48000.0).unwrap();
        let gamma = choose_gamma(1025, db).unwrap();
        let grid = enveloped_grid(&unit, gamma).unwrap();
        let mut resp = vec![C64::new(1.0, 0.0); grid.num_bins()];
        for (b, a) in &sections {
            let h = evaluate_rational(b, a, &grid).unwrap();
            resp.iter_mut().zip(h.data.data()).for_each(|(x, y)| *x *= y);
        }
        let got = idft_half_spectrum(&resp, 48000.0).unwrap();
        let mut impulse = vec![0.0; grid.frame_len()];
        impulse[0] = 1.0;
        let h = sosfilt(&sections, &impulse);
        let expected: Vec<f64> = h.iter().enumerate().map(|(n, x)| x * gamma.powi(n as i32)).collect();
        prop_assert!(max_abs_diff(&got.samples, &expected) < 1e-8 * peak(&expected));
    }
}

#[test]
fn svf_poles_stay_inside_the_unit_circle() {
    let grid = FrequencyGrid::unit(9, 48000.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
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
    for draw in 0..1000 {
        let mode = modes[draw % modes.len()];
        let raw: Vec<f64> = (0..mode.num_params()).map(|_| 20.0 * rng.random::<f64>() - 10.0).collect();
        let svf = Svf::new("s", &grid, mode, Layout::Parallel(1), 1, &raw).unwrap();
        let (_, a) = svf.coefficients().unwrap()[0][0];
        let roots = poly_roots(&[C64::new(1.0, 0.0), C64::new(a[1] / a[0], 0.0), C64::new(a[2] / a[0], 0.0)]);
        for r in roots {
            assert!(
                r.norm() < 1.0,
                "draw {draw} ({mode:?}, raw {raw:?}): pole {r} on or outside the unit circle"
            );
        }
    }
}
