//! Independent reference implementations used as test oracles. Nothing
//! here calls into the library's arithmetic; values are plain `u64`
//! residues reduced with `u128` remainders.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn mulmod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

pub fn powmod(mut a: u64, mut e: u64, q: u64) -> u64 {
    let mut r = 1 % q;
    a %= q;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, a, q);
        }
        a = mulmod(a, a, q);
        e >>= 1;
    }
    r
}

/// Inverse by exhaustive-free extended Euclid over `i128`.
pub fn invmod(a: u64, q: u64) -> Option<u64> {
    let (mut t, mut new_t) = (0i128, 1i128);
    let (mut r, mut new_r) = (q as i128, (a % q) as i128);
    while new_r != 0 {
        let quo = r / new_r;
        (t, new_t) = (new_t, t - quo * new_t);
        (r, new_r) = (new_r, r - quo * new_r);
    }
    if r != 1 {
        return None;
    }
    Some(t.rem_euclid(q as i128) as u64)
}

/// `V[i][v] = x_i^v` for `v = 0..len`.
pub fn vandermonde(xs: &[u64], q: u64) -> Vec<Vec<u64>> {
    xs.iter()
        .map(|&x| (0..xs.len() as u64).map(|v| powmod(x, v, q)).collect())
        .collect()
}

/// Gauss-Jordan inverse over F_q; `None` when singular.
pub fn invert(mat: &[Vec<u64>], q: u64) -> Option<Vec<Vec<u64>>> {
    let k = mat.len();
    let mut a: Vec<Vec<u64>> = mat
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..k).map(|j| u64::from(i == j)));
            r
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).find(|&r| a[r][col] != 0)?;
        a.swap(col, pivot);
        let inv = invmod(a[col][col], q)?;
        for v in a[col].iter_mut() {
            *v = mulmod(*v, inv, q);
        }
        for r in 0..k {
            if r != col && a[r][col] != 0 {
                let factor = a[r][col];
                let pivot_row = a[col].clone();
                for (v, p) in a[r].iter_mut().zip(pivot_row) {
                    *v = (*v + q - mulmod(factor, p, q)) % q;
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[k..].to_vec()).collect())
}

/// Evaluates `sum_v coeffs[v] x^v` term by term.
pub fn poly_eval(coeffs: &[u64], x: u64, q: u64) -> u64 {
    coeffs.iter().enumerate().fold(0, |acc, (v, &c)| {
        (acc + mulmod(c, powmod(x, v as u64, q), q)) % q
    })
}

/// `prod_{i=0}^{m} (n - f - i) / (n - i)` as an exact rational.
pub fn prob_rational(n: u64, f: u64, m: u64) -> BigRational {
    (0..=m).fold(BigRational::one(), |acc, i| {
        acc * BigRational::new(BigInt::from(n - f - i), BigInt::from(n - i))
    })
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.numer().to_f64().unwrap() / r.denom().to_f64().unwrap()
}

/// Smallest `T` with `(1 - p0)^T <= rho`, by direct iteration.
pub fn trials_by_iteration(p0: f64, rho: f64) -> u64 {
    if p0 >= 1.0 {
        return 1;
    }
    let mut miss = 1.0f64;
    let mut t = 0;
    while miss > rho {
        miss *= 1.0 - p0;
        t += 1;
    }
    t
}

pub fn is_zero(r: &BigRational) -> bool {
    r.is_zero()
}

pub const M61: u64 = (1 << 61) - 1;
