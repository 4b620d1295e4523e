//! Word-sized prime fields: Barrett-reduced arithmetic, deterministic
//! NTT-friendly prime generation, and per-modulus twiddle tables.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A w-bit NTT-friendly prime together with everything the transforms need.
///
/// Invariants established at construction:
/// * `value` is prime, `value ≡ 1 (mod 2·ring_degree)`, `bit_width ≤ 62`;
/// * `psi` is the smallest primitive 2N-th root of unity mod `value`
///   (so `psi^N ≡ −1`), `psi_inv` its inverse, `n_inv · N ≡ 1`;
/// * `psi_rev[i] = psi^bitrev(i)`, likewise for `psi_inv_rev` — the orderings
///   consumed by the decimation-in-time / decimation-in-frequency kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modulus {
    pub value: u64,
    pub bit_width: u32,
    pub ring_degree: usize,
    pub barrett_mu: u128,
    pub psi: u64,
    pub psi_inv: u64,
    pub n_inv: u64,
    pub(crate) psi_rev: Vec<u64>,
    pub(crate) psi_inv_rev: Vec<u64>,
}

impl Modulus {
    /// Builds the full table set for `value` over ring degree `n`.
    pub fn new(value: u64, ring_degree: usize) -> Result<Arc<Modulus>> {
        if !ring_degree.is_power_of_two() {
            return Err(Error::Parameter(format!(
                "ring degree {ring_degree} is not a power of two"
            )));
        }
        let bit_width = 64 - value.leading_zeros();
        if !(2..=62).contains(&bit_width) {
            return Err(Error::Parameter(format!(
                "modulus {value} has {bit_width} bits, supported range is 2..=62"
            )));
        }
        if !is_prime_u64(value) {
            return Err(Error::Parameter(format!("{value} is not prime")));
        }
        let two_n = 2 * ring_degree as u64;
        if value % two_n != 1 {
            return Err(Error::Parameter(format!(
                "{value} is not ≡ 1 (mod {two_n})"
            )));
        }

        // mu = floor(2^(2w) / p); reduce() keeps every intermediate < 2^126.
        let w = bit_width;
        let barrett_mu = if 2 * w == 128 {
            u128::MAX / value as u128
        } else {
            (1u128 << (2 * w)) / value as u128
        };

        let mut m = Modulus {
            value,
            bit_width,
            ring_degree,
            barrett_mu,
            psi: 0,
            psi_inv: 0,
            n_inv: 0,
            psi_rev: Vec::new(),
            psi_inv_rev: Vec::new(),
        };

        let psi = find_min_primitive_root(&m)?;
        m.psi = psi;
        m.psi_inv = m.inv(psi)?;
        m.n_inv = m.inv(ring_degree as u64 % value)?;
        debug_assert_eq!(m.pow(psi, ring_degree as u64), value - 1); // psi^N = −1

        let log_n = ring_degree.trailing_zeros();
        let mut pow_fwd = vec![0u64; ring_degree];
        let mut pow_inv = vec![0u64; ring_degree];
        pow_fwd[0] = 1;
        pow_inv[0] = 1;
        for i in 1..ring_degree {
            pow_fwd[i] = m.mul(pow_fwd[i - 1], m.psi);
            pow_inv[i] = m.mul(pow_inv[i - 1], m.psi_inv);
        }
        m.psi_rev = (0..ring_degree)
            .map(|i| pow_fwd[bit_reverse(i, log_n)])
            .collect();
        m.psi_inv_rev = (0..ring_degree)
            .map(|i| pow_inv[bit_reverse(i, log_n)])
            .collect();
        Ok(Arc::new(m))
    }

    /// Barrett reduction of `x < 2^(2·bit_width)` to `[0, value)`.
    #[inline]
    pub fn reduce(&self, x: u128) -> u64 {
        let w = self.bit_width;
        debug_assert!(w == 64 || x < (1u128 << (2 * w)));
        let q_hat = ((x >> (w - 1)) * self.barrett_mu) >> (w + 1);
        let mut r = (x - q_hat * self.value as u128) as u64;
        if r >= self.value {
            r -= self.value;
        }
        if r >= self.value {
            r -= self.value;
        }
        r
    }

    #[inline]
    pub fn reduce_u64(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            x % self.value
        }
    }

    /// Canonical residue of a signed integer (used when lifting small noise
    /// or ternary coefficients into the field).
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let p = self.value as i64; // value < 2^62, safe
        let r = x % p;
        if r < 0 {
            (r + p) as u64
        } else {
            r as u64
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.value && b < self.value);
        self.reduce(a as u128 * b as u128)
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.value && b < self.value);
        let s = a + b; // both < 2^62, no overflow
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.value && b < self.value);
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        let mut b = self.reduce_u64(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by Fermat (the modulus is prime).
    pub fn inv(&self, a: u64) -> Result<u64> {
        let a = self.reduce_u64(a);
        if a == 0 {
            return Err(Error::NotInvertible);
        }
        Ok(self.pow(a, self.value - 2))
    }
}

/// `(a · b) mod m` for canonical residues.
pub fn mulmod(a: u64, b: u64, m: &Modulus) -> u64 {
    m.mul(a, b)
}

pub fn addmod(a: u64, b: u64, m: &Modulus) -> u64 {
    m.add(a, b)
}

pub fn submod(a: u64, b: u64, m: &Modulus) -> u64 {
    m.sub(a, b)
}

pub fn invmod(a: u64, m: &Modulus) -> Result<u64> {
    m.inv(a)
}

#[inline]
pub(crate) fn bit_reverse(i: usize, bits: u32) -> usize {
    i.reverse_bits() >> (usize::BITS - bits)
}

fn mulmod_wide(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

fn powmod_wide(mut base: u64, mut exp: u64, n: u64) -> u64 {
    let mut acc = 1u64 % n;
    base %= n;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod_wide(acc, base, n);
        }
        base = mulmod_wide(base, base, n);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin; the witness set covers all n < 2^64.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod_wide(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod_wide(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest primitive 2N-th root of unity mod `m.value` as an integer.
///
/// Any generator-derived root can be raised to odd powers to enumerate all
/// primitive roots; taking the integer minimum makes the choice canonical
/// regardless of which quadratic non-residue the search found first.
fn find_min_primitive_root(m: &Modulus) -> Result<u64> {
    let p = m.value;
    let two_n = 2 * m.ring_degree as u64;
    debug_assert_eq!((p - 1) % two_n, 0);
    // smallest quadratic non-residue → generator of the 2-part of Z_p^*
    let mut g = 2u64;
    loop {
        if m.pow(g, (p - 1) / 2) == p - 1 {
            break;
        }
        g += 1;
        if g >= p {
            return Err(Error::NoPrimeFound);
        }
    }
    let psi0 = m.pow(g, (p - 1) / two_n);
    debug_assert_eq!(m.pow(psi0, m.ring_degree as u64), p - 1);
    // minimum over psi0^k for odd k — exactly the primitive 2N-th roots
    let step = m.mul(psi0, psi0);
    let mut cur = psi0;
    let mut best = psi0;
    for _ in 1..m.ring_degree {
        cur = m.mul(cur, step);
        if cur < best {
            best = cur;
        }
    }
    Ok(best)
}

/// Deterministic NTT-friendly prime of exactly `bits` bits: the `(seed+1)`-th
/// prime ≡ 1 (mod 2·ring_degree) found searching downward from `2^bits − 1`.
pub fn generate_ntt_prime(bits: u32, ring_degree: usize, seed: usize) -> Result<Arc<Modulus>> {
    if !(8..=62).contains(&bits) {
        return Err(Error::Parameter(format!(
            "prime width {bits} outside supported range 8..=62"
        )));
    }
    if !ring_degree.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "ring degree {ring_degree} is not a power of two"
        )));
    }
    let two_n = 2 * ring_degree as u64;
    let hi = (1u64 << bits) - 1;
    let lo = 1u64 << (bits - 1);
    // largest candidate ≤ hi that is ≡ 1 mod 2N
    let mut c = hi - (hi - 1) % two_n;
    let mut remaining = seed;
    while c > lo {
        if is_prime_u64(c) {
            if remaining == 0 {
                return Modulus::new(c, ring_degree);
            }
            remaining -= 1;
        }
        if c < two_n {
            break;
        }
        c -= two_n;
    }
    Err(Error::NoPrimeFound)
}

/// Deterministic prime nearest to `2^delta_log2` (breaking distance ties
/// upward); `index` skips past the closest matches, capped at `max_bits` bits.
///
/// Rescaling divides the encrypted value by one such prime while the scale
/// drops by 2^delta_log2, so the relative scale error per level is
/// |q − 2^delta| / 2^delta — keeping q as close as possible to the scale is
/// what makes deep products land near Δ·∏m.
pub fn generate_scaling_prime(
    delta_log2: u32,
    ring_degree: usize,
    index: usize,
    max_bits: u32,
) -> Result<Arc<Modulus>> {
    if !ring_degree.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "ring degree {ring_degree} is not a power of two"
        )));
    }
    let two_n = 2 * ring_degree as u64;
    if delta_log2 < 63 && (1u64 << delta_log2) % two_n != 0 {
        return Err(Error::Parameter(format!(
            "2^{delta_log2} is not a multiple of 2N = {two_n}; no candidates ≡ 1 mod 2N"
        )));
    }
    if delta_log2 + 2 > max_bits && delta_log2 >= max_bits {
        return Err(Error::Parameter(format!(
            "scale 2^{delta_log2} cannot fit below the {max_bits}-bit cap"
        )));
    }
    let center = 1u64 << delta_log2;
    let fits = |c: u64| c > 1 && (64 - c.leading_zeros()) <= max_bits.min(62);
    let mut remaining = index;
    let mut consider = |c: u64| -> Option<u64> {
        if fits(c) && is_prime_u64(c) {
            if remaining == 0 {
                return Some(c);
            }
            remaining -= 1;
        }
        None
    };
    if let Some(c) = consider(center + 1) {
        return Modulus::new(c, ring_degree);
    }
    for k in 1..=(center / two_n) {
        if let Some(c) = consider(center + k * two_n + 1) {
            return Modulus::new(c, ring_degree);
        }
        if let Some(c) = consider(center - k * two_n + 1) {
            return Modulus::new(c, ring_degree);
        }
    }
    Err(Error::NoPrimeFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miller_rabin_agrees_with_trial_division_below_100k() {
        let trial = |n: u64| -> bool {
            if n < 2 {
                return false;
            }
            let mut d = 2;
            while d * d <= n {
                if n % d == 0 {
                    return false;
                }
                d += 1;
            }
            true
        };
        for n in 0..100_000u64 {
            assert_eq!(is_prime_u64(n), trial(n), "disagree at {n}");
        }
    }

    #[test]
    fn ntt_prime_small_example() {
        // 14-bit, 2N = 4096: the search from 16383 downward lands on 12289.
        let m = generate_ntt_prime(14, 2048, 0).unwrap();
        assert_eq!(m.value, 12289);
        assert_eq!(m.value % 4096, 1);
        // ring degree 8 admits more 14-bit candidates; top-most one wins
        let m8 = generate_ntt_prime(14, 8, 0).unwrap();
        assert!(is_prime_u64(m8.value));
        assert_eq!(m8.value % 16, 1);
        assert_eq!(m8.bit_width, 14);
    }

    #[test]
    fn ntt_prime_deterministic_and_distinct_by_seed() {
        let a = generate_ntt_prime(50, 1 << 10, 3).unwrap();
        let b = generate_ntt_prime(50, 1 << 10, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_ntt_prime(50, 1 << 10, 4).unwrap();
        assert_ne!(a.value, c.value);
        assert!(c.value < a.value); // downward search
    }

    #[test]
    fn ntt_prime_wide_congruence() {
        let m = generate_ntt_prime(60, 1 << 16, 7).unwrap();
        assert_eq!(m.value % (1u64 << 17), 1);
        assert_eq!(m.bit_width, 60);
    }

    #[test]
    fn scaling_primes_cluster_around_the_scale() {
        let delta = 45u32;
        let mut seen = Vec::new();
        for i in 0..8 {
            let m = generate_scaling_prime(delta, 1 << 10, i, 50).unwrap();
            let d = (m.value as i128 - (1i128 << delta)).unsigned_abs();
            assert!(d < 1u128 << 25, "prime {} too far from 2^{delta}", m.value);
            assert_eq!(m.value % (1 << 11), 1);
            seen.push(m.value);
        }
        seen.dedup();
        assert_eq!(seen.len(), 8, "indices must yield distinct primes");
        // indices enumerate by increasing distance from the scale
        let d0 = (seen[0] as i128 - (1i128 << delta)).unsigned_abs();
        let d7 = (seen[7] as i128 - (1i128 << delta)).unsigned_abs();
        assert!(d0 <= d7);
    }

    #[test]
    fn barrett_matches_wide_reduction() {
        for bits in [30u32, 50, 60, 62] {
            let m = generate_ntt_prime(bits, 64, 0).unwrap();
            let mut state = 0x9e3779b97f4a7c15u64.wrapping_mul(bits as u64 + 1);
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                state % m.value
            };
            for _ in 0..100_000 {
                let a = next();
                let b = next();
                assert_eq!(m.mul(a, b), mulmod_wide(a, b, m.value));
                assert_eq!(m.add(a, b), ((a as u128 + b as u128) % m.value as u128) as u64);
                let d = if a >= b { a - b } else { a + m.value - b };
                assert_eq!(m.sub(a, b), d % m.value);
            }
        }
    }

    #[test]
    fn mulmod_identities() {
        let m = generate_ntt_prime(50, 64, 0).unwrap();
        assert_eq!(mulmod(0, 12345, &m), 0);
        assert_eq!(mulmod(1, 12345, &m), 12345);
        assert_eq!(addmod(m.value - 1, 1, &m), 0);
        assert_eq!(submod(0, 1, &m), m.value - 1);
    }

    #[test]
    fn inverses_invert() {
        let m = generate_ntt_prime(50, 64, 1).unwrap();
        let mut state = 7u64;
        for _ in 0..10_000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = state % m.value;
            if a == 0 {
                assert!(invmod(a, &m).is_err());
                continue;
            }
            let ai = invmod(a, &m).unwrap();
            assert_eq!(m.mul(a, ai), 1);
        }
    }

    #[test]
    fn psi_is_canonical_and_primitive() {
        let m = generate_ntt_prime(30, 256, 0).unwrap();
        let n = m.ring_degree as u64;
        assert_eq!(m.pow(m.psi, n), m.value - 1);
        assert_eq!(m.pow(m.psi, 2 * n), 1);
        assert_eq!(m.mul(m.psi, m.psi_inv), 1);
        assert_eq!(m.mul(m.n_inv, n % m.value), 1);
        // canonical choice: no smaller primitive 2N-th root exists
        let mut count_smaller = 0;
        for x in 2..m.psi {
            if m.pow(x, n) == m.value - 1 {
                count_smaller += 1;
            }
        }
        assert_eq!(count_smaller, 0);
    }
}
