//! Discrete Fourier transform for arbitrary lengths: iterative radix-2 for
//! powers of two, Bluestein's chirp-z otherwise.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, sin};

use crate::C64;

/// Forward transform `X_k = sum_n x_n exp(-2 pi i k n / N)`.
pub(crate) fn fft(input: &[C64]) -> Vec<C64> {
    let n = input.len();
    if n <= 1 {
        return input.to_vec();
    }
    if n.is_power_of_two() {
        let mut buf = input.to_vec();
        radix2(&mut buf, false);
        buf
    } else {
        bluestein(input)
    }
}

fn radix2(buf: &mut [C64], inverse: bool) {
    let n = buf.len();
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
        let tw: Vec<C64> = (0..half)
            .map(|k| C64::new(cos(ang * k as f64), sin(ang * k as f64)))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * tw[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn bluestein(input: &[C64]) -> Vec<C64> {
    let n = input.len();
    let m = (2 * n - 1).next_power_of_two();
    // chirp exp(-i pi k^2 / n), with k^2 reduced mod 2n for accuracy
    let chirp: Vec<C64> = (0..n)
        .map(|k| {
            let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
            let a = -PI * k2 / n as f64;
            C64::new(cos(a), sin(a))
        })
        .collect();
    let mut a = vec![C64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = input[k] * chirp[k];
    }
    let mut b = vec![C64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2(&mut a, false);
    radix2(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    radix2(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}
