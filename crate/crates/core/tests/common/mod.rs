#![allow(dead_code)]

use meanrev_burgers::spectral::FourierState;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random state with `a(-k) = conj(a(k))`, moduli up to `scale`.
pub fn random_hermitian(order: usize, scale: f64, rng: &mut ChaCha8Rng) -> FourierState {
    let mut s = FourierState::zeros(order, 0.0);
    s.set(0, Complex64::new(scale * rng.random_range(-1.0..1.0), 0.0));
    for k in 1..=order as isize {
        let c = Complex64::new(
            scale * rng.random_range(-1.0..1.0),
            scale * rng.random_range(-1.0..1.0),
        );
        s.set(k, c);
        s.set(-k, c.conj());
    }
    s
}

/// `c(k) = Σ_{p+q=k, |p|,|q|<=N} a(p) b(q)`, by a plain double loop.
pub fn brute_convolution(a: &FourierState, b: &FourierState) -> Vec<Complex64> {
    let n = a.order() as isize;
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * n as usize + 1];
    for p in -n..=n {
        for q in -n..=n {
            let k = p + q;
            if k.abs() <= n {
                out[(k + n) as usize] += a.get(p) * b.get(q);
            }
        }
    }
    out
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
