//! Discrete Fourier transform for arbitrary lengths: iterative radix-2 for
//! powers of two, Bluestein's chirp-z reduction otherwise.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use num_complex::Complex64;

fn fft_pow2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<Complex64> =
            (0..half).map(|k| Complex64::new(libm::cos(ang * k as f64), libm::sin(ang * k as f64))).collect();
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }
}

/// Forward DFT `X[k] = sum_n x[n] exp(-2 pi i k n / N)` of a real signal.
pub fn dft_real(signal: &[f64]) -> Vec<Complex64> {
    let n = signal.len();
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if n.is_power_of_two() {
        fft_pow2(&mut buf, false);
        return buf;
    }
    bluestein(&buf)
}

fn bluestein(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let m = (2 * n - 1).next_power_of_two();
    // w[k] = exp(-i pi k^2 / n); k^2 is reduced mod 2n to keep the angle small.
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
            let ang = -PI * k2 / n as f64;
            Complex64::new(libm::cos(ang), libm::sin(ang))
        })
        .collect();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = x[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    fft_pow2(&mut a, false);
    fft_pow2(&mut b, false);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    fft_pow2(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}

/// One-sided power spectrum `|X[k]|^2 / N` for `k = 0..=N/2`.
pub fn power_spectrum(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let spec = dft_real(signal);
    spec.iter().take(n / 2 + 1).map(|c| c.norm_sqr() / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, &v)| {
                    let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    acc + Complex64::new(libm::cos(ang), libm::sin(ang)) * v
                })
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_various_lengths() {
        for n in [1usize, 2, 3, 8, 12, 64, 100, 257, 1000] {
            let x: Vec<f64> = (0..n).map(|i| libm::sin(i as f64 * 0.37) + (i % 7) as f64 * 0.1).collect();
            let fast = dft_real(&x);
            let slow = naive(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-8 * (1.0 + n as f64), "n={n}: {a} vs {b}");
            }
        }
    }
}
