//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here goes through the tape or the frequency grid.
#![allow(dead_code)]

use freqsamp::autodiff::Array;
use num_complex::Complex64 as C64;

pub type Sos = ([f64; 3], [f64; 3]);

/// Cascade of second-order sections, transposed direct form II.
#[derive(Debug, Clone)]
pub struct SosFilter {
    sections: Vec<Sos>,
    state: Vec<[f64; 2]>,
}

impl SosFilter {
    pub fn new(sections: Vec<Sos>) -> Self {
        let state = vec![[0.0; 2]; sections.len()];
        Self { sections, state }
    }

    pub fn gain(g: f64) -> Self {
        Self::new(vec![([g, 0.0, 0.0], [1.0, 0.0, 0.0])])
    }

    pub fn tick(&mut self, mut x: f64) -> f64 {
        for ((b, a), s) in self.sections.iter().zip(&mut self.state) {
            let (b0, b1, b2) = (b[0] / a[0], b[1] / a[0], b[2] / a[0]);
            let (a1, a2) = (a[1] / a[0], a[2] / a[0]);
            let y = b0 * x + s[0];
            s[0] = b1 * x - a1 * y + s[1];
            s[1] = b2 * x - a2 * y;
            x = y;
        }
        x
    }
}

pub fn sosfilt(sections: &[Sos], x: &[f64]) -> Vec<f64> {
    let mut f = SosFilter::new(sections.to_vec());
    x.iter().map(|v| f.tick(*v)).collect()
}

/// Impulse response of a single-input single-output FDN by direct
/// recursion: line `i` holds `m_i` samples, its output passes `filters[i]`,
/// is mixed by `a` (row-major) and fed back with `b·x`.
pub fn fdn_time(delays: &[usize], a: &[f64], b: &[f64], c: &[f64], d: f64, filters: &[SosFilter], len: usize) -> Vec<f64> {
    let n = delays.len();
    let mut filters = filters.to_vec();
    let mut bufs: Vec<Vec<f64>> = delays.iter().map(|m| vec![0.0; *m]).collect();
    let mut ptr = vec![0usize; n];
    let mut y = vec![0.0; len];
    let mut out = vec![0.0; n];
    for (t, yt) in y.iter_mut().enumerate() {
        let x = if t == 0 { 1.0 } else { 0.0 };
        for i in 0..n {
            out[i] = filters[i].tick(bufs[i][ptr[i]]);
        }
        *yt = d * x + (0..n).map(|i| c[i] * out[i]).sum::<f64>();
        for i in 0..n {
            let v: f64 = (0..n).map(|j| a[i * n + j] * out[j]).sum::<f64>() + b[i] * x;
            bufs[i][ptr[i]] = v;
            ptr[i] = (ptr[i] + 1) % delays[i];
        }
    }
    y
}

/// Solves `A x = b` for a dense complex system by Gaussian elimination
/// with partial pivoting.
pub fn solve(mut a: Vec<C64>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|i, j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .unwrap();
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let s: C64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    x
}

/// `cᵀ [diag(z^{m_i} / g_i(z)) − A]⁻¹ b + d` at one point, where `g_i` is the
/// per-line filter response at `z`.
pub fn fdn_direct(z: C64, delays: &[f64], line: &[C64], a: &[f64], b: &[f64], c: &[f64], d: f64) -> C64 {
    let n = delays.len();
    let mut m: Vec<C64> = a.iter().map(|x| C64::new(-x, 0.0)).collect();
    for i in 0..n {
        m[i * n + i] += z.powf(delays[i]) / line[i];
    }
    let x = solve(m, b.iter().map(|v| C64::new(*v, 0.0)).collect());
    x.iter().zip(c).map(|(xi, ci)| xi * ci).sum::<C64>() + d
}

/// Rational response `Σ b_k z^{-k} / Σ a_k z^{-k}` of an SOS cascade at `z`.
pub fn sos_at(sections: &[Sos], z: C64) -> C64 {
    let zi = z.inv();
    sections
        .iter()
        .map(|(b, a)| (b[0] + zi * (b[1] + zi * b[2])) / (a[0] + zi * (a[1] + zi * a[2])))
        .product()
}

/// Plain `O(L²)` inverse DFT of a Hermitian half spectrum of `M` bins to
/// `2(M − 1)` real samples.
pub fn naive_idft(half: &[C64]) -> Vec<f64> {
    let m = half.len();
    let l = 2 * (m - 1);
    (0..l)
        .map(|n| {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..l {
                let h = if k < m { half[k] } else { half[l - k].conj() };
                s += h * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * n % l) as f64 / l as f64);
            }
            s.re / l as f64
        })
        .collect()
}

/// Characteristic polynomial coefficients `[1, c1, …, cK]` of a row-major
/// `K×K` matrix (Faddeev–LeVerrier).
pub fn char_poly(a: &[C64], k: usize) -> Vec<C64> {
    let zero = C64::new(0.0, 0.0);
    let mul = |x: &[C64], y: &[C64]| -> Vec<C64> {
        let mut out = vec![zero; k * k];
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = (0..k).map(|t| x[i * k + t] * y[t * k + j]).sum();
            }
        }
        out
    };
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    let mut m = vec![zero; k * k];
    for step in 1..=k {
        // M_step = A·M_{step−1} + c_{step−1}·I
        let mut next = mul(a, &m);
        for i in 0..k {
            next[i * k + i] += coeffs[step - 1];
        }
        m = next;
        let am = mul(a, &m);
        let tr: C64 = (0..k).map(|i| am[i * k + i]).sum();
        coeffs.push(-tr / step as f64);
    }
    coeffs
}

/// Roots of a monic polynomial by Durand–Kerner iteration.
pub fn poly_roots(coeffs: &[C64]) -> Vec<C64> {
    let deg = coeffs.len() - 1;
    let eval = |x: C64| coeffs.iter().fold(C64::new(0.0, 0.0), |acc, c| acc * x + c);
    let mut roots: Vec<C64> = (0..deg).map(|i| C64::new(0.4, 0.9).powu(i as u32)).collect();
    for _ in 0..500 {
        let prev = roots.clone();
        for i in 0..deg {
            let denom: C64 = (0..deg).filter(|j| *j != i).map(|j| roots[i] - roots[j]).product();
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
        }
        if roots
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).norm() < 1e-15 * (1.0 + a.norm()))
        {
            break;
        }
    }
    roots
}

/// Random orthogonal `N×N` matrix (row-major) from Gram–Schmidt on
/// deterministic pseudo-random columns.
pub fn orthogonal(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for q in &cols {
            let p: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-6 {
            cols.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    (0..n * n).map(|k| cols[k % n][k / n]).collect()
}

pub fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Per-bin `[M, O, K] × [M, K, I]` product.
pub fn bin_matmul(a: &Array, b: &Array) -> Array {
    let (sa, sb) = (a.shape(), b.shape());
    let (m, o, k, i) = (sa[0], sa[1], sa[2], sb[2]);
    assert_eq!(sb[1], k);
    let mut out = vec![C64::new(0.0, 0.0); m * o * i];
    for bin in 0..m {
        for r in 0..o {
            for c in 0..i {
                out[bin * o * i + r * i + c] = (0..k)
                    .map(|t| a.data()[bin * o * k + r * k + t] * b.data()[bin * k * i + t * i + c])
                    .sum();
            }
        }
    }
    Array::new(vec![m, o, i], out).unwrap()
}

pub fn max_rel_diff(a: &Array, b: &Array) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(1e-300);
    a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm())) / scale
}
