mod common;

use common::*;
use freqsamp::apps::metrics::{eig_magnitude_distribution, eig_magnitudes};
use freqsamp::autodiff::{Array, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn eigenvalue_magnitudes_match_characteristic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (bins, k) = (20, 3);
    let data: Vec<C64> = (0..bins * k * k)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let arr = Array::new(vec![bins, k, k], data.clone()).unwrap();
    let got = eig_magnitudes(&arr).unwrap();
    for (bin, mags) in got.into_iter().enumerate() {
        let block = &data[bin * k * k..(bin + 1) * k * k];
        let roots = poly_roots(&char_poly(block, k));
        let expected = sorted(roots.iter().map(|r| r.norm()).collect());
        let got = sorted(mags);
        assert!(max_abs_diff(&got, &expected) < 1e-8, "bin {bin}: {got:?} vs {expected:?}");
    }
}

#[test]
fn triangular_blocks_report_their_diagonal() {
    let k = 4;
    let mut data = vec![C64::new(0.0, 0.0); k * k];
    for i in 0..k {
        data[i * k + i] = C64::from_polar(0.5 + 0.25 * i as f64, i as f64);
        for j in i + 1..k {
            data[i * k + j] = C64::new(3.0, -1.0);
        }
    }
    let arr = Array::new(vec![1, k, k], data).unwrap();
    let got = sorted(eig_magnitudes(&arr).unwrap().remove(0));
    assert!(max_abs_diff(&got, &[0.5, 0.75, 1.0, 1.25]) < 1e-10, "{got:?}");
    let (per_bin, all) = eig_magnitude_distribution(&arr).unwrap();
    assert_eq!(per_bin.len(), 1);
    assert!((all.max - 1.25).abs() < 1e-10);
}

#[test]
fn non_square_blocks_are_rejected() {
    let arr = Array::zeros(&[2, 2, 3]);
    assert!(eig_magnitudes(&arr).is_err());
}
