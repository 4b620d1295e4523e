//! Arbitrary-precision reference implementations. Everything here is slow,
//! obvious, and independent of the RNS/NTT code paths; the test suites treat
//! these as ground truth.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};

use crate::zq::Modulus;

/// Product of the listed moduli.
pub fn modulus_product(moduli: &[Arc<Modulus>]) -> BigUint {
    moduli
        .iter()
        .fold(BigUint::one(), |acc, m| acc * BigUint::from(m.value))
}

/// CRT reconstruction of one integer from its residues, centered into
/// `(-M/2, M/2]` where `M` is the product of the moduli.
pub fn crt_reconstruct(residues: &[u64], moduli: &[Arc<Modulus>]) -> BigInt {
    assert_eq!(residues.len(), moduli.len());
    assert!(!moduli.is_empty());
    let big_m = modulus_product(moduli);
    let mut acc = BigUint::zero();
    for (&r, m) in residues.iter().zip(moduli) {
        let m_i = &big_m / BigUint::from(m.value);
        // (M/m_i)^{-1} mod m_i — reduce the big cofactor into the word field
        let m_i_red = (&m_i % BigUint::from(m.value))
            .iter_u64_digits()
            .next()
            .unwrap_or(0);
        let y = m.inv(m_i_red).expect("moduli are pairwise coprime primes");
        acc += m_i * BigUint::from(m.mul(r, y));
    }
    acc %= &big_m;
    let signed = BigInt::from_biguint(Sign::Plus, acc);
    let big_m = BigInt::from_biguint(Sign::Plus, big_m);
    if &signed * 2 > big_m {
        signed - big_m
    } else {
        signed
    }
}

/// Per-coefficient centered CRT reconstruction of an RNS polynomial given as
/// per-modulus residue rows (`comps[j][coeff]`).
pub fn crt_reconstruct_poly(comps: &[&[u64]], moduli: &[Arc<Modulus>]) -> Vec<BigInt> {
    assert_eq!(comps.len(), moduli.len());
    let n = comps[0].len();
    (0..n)
        .map(|c| {
            let residues: Vec<u64> = comps.iter().map(|row| row[c]).collect();
            crt_reconstruct(&residues, moduli)
        })
        .collect()
}

/// Exact product of two integer polynomials in Z[X]/(X^N + 1).
pub fn negacyclic_mul_exact(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let n = a.len();
    assert_eq!(b.len(), n);
    let mut out = vec![BigInt::zero(); n];
    for i in 0..n {
        if a[i].is_zero() {
            continue;
        }
        for j in 0..n {
            let p = &a[i] * &b[j];
            let k = i + j;
            if k < n {
                out[k] += p;
            } else {
                out[k - n] -= p;
            }
        }
    }
    out
}

/// Exact product of any number of integer polynomials in Z[X]/(X^N + 1),
/// folded left to right.
pub fn exact_ring_product(inputs: &[Vec<BigInt>]) -> Vec<BigInt> {
    assert!(!inputs.is_empty());
    let mut acc = inputs[0].clone();
    for next in &inputs[1..] {
        acc = negacyclic_mul_exact(&acc, next);
    }
    acc
}

/// Canonical residues in `[0, m)`, coefficientwise.
pub fn reduce_poly_mod(poly: &[BigInt], m: &BigUint) -> Vec<BigInt> {
    let m = BigInt::from_biguint(Sign::Plus, m.clone());
    poly.iter()
        .map(|c| {
            let mut r = c % &m;
            if r.sign() == Sign::Minus {
                r += &m;
            }
            r
        })
        .collect()
}

/// Largest coefficient magnitude.
pub fn max_abs(poly: &[BigInt]) -> BigUint {
    poly.iter()
        .map(|c| c.magnitude().clone())
        .max()
        .unwrap_or_else(BigUint::zero)
}

/// log2 of a positive big integer as a float (0 maps to -inf).
pub fn log2_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 52 {
        let digits = x.iter_u64_digits().next().unwrap_or(0);
        return (digits as f64).log2();
    }
    // top 53 bits as mantissa + exponent of the discarded tail
    let shift = bits - 53;
    let top = (x >> shift).iter_u64_digits().next().unwrap_or(0);
    (top as f64).log2() + shift as f64
}

/// Worst-case coefficient error between two integer polynomials, as a log2
/// magnitude — the figure reported by decryption checks.
pub fn noise_measure(got: &[BigInt], expected: &[BigInt]) -> f64 {
    assert_eq!(got.len(), expected.len());
    let diff: Vec<BigInt> = got.iter().zip(expected).map(|(a, b)| a - b).collect();
    log2_big(&max_abs(&diff))
}
