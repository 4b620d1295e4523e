//! Parameter sets and cross-modulus precomputation.
//!
//! A [`Context`] owns the two prime chains — the L scaling primes q_j that
//! make up the ciphertext modulus Q = q_0…q_{L−1}, and the K ≥ L auxiliary
//! primes p_i whose product P carries intermediate values during key
//! switching — together with every precomputed constant the conversion and
//! rescaling kernels consume. Contexts are immutable once built.

use std::path::Path;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zq::{generate_ntt_prime, generate_scaling_prime, Modulus};

/// An ordered chain of primes plus the fast-conversion constants from this
/// basis into a fixed target basis.
#[derive(Debug, Clone)]
pub struct RnsBasis {
    pub moduli: Vec<Arc<Modulus>>,
    /// The target chain the conversion tables point into.
    pub targets: Vec<Arc<Modulus>>,
    /// `[(Q/q_j)^{-1}]_{q_j}` — the per-source folding factors.
    pub qhat_inv: Vec<u64>,
    /// `[j][i] = [(Q/q_j)]_{t_i}` for each target modulus `t_i`.
    pub qhat_mod_other: Vec<Vec<u64>>,
    /// `[i] = [Q]_{t_i}`.
    pub product_mod_other: Vec<u64>,
}

impl RnsBasis {
    /// Builds conversion tables from `moduli` into `targets`, doing every
    /// product and reduction in exact big-integer arithmetic.
    pub fn new(moduli: Vec<Arc<Modulus>>, targets: &[Arc<Modulus>]) -> Result<RnsBasis> {
        if moduli.is_empty() {
            return Err(Error::Parameter("empty modulus chain".into()));
        }
        let product = moduli
            .iter()
            .fold(BigUint::one(), |acc, m| acc * BigUint::from(m.value));
        let reduce = |x: &BigUint, m: &Modulus| -> u64 {
            (x % BigUint::from(m.value))
                .iter_u64_digits()
                .next()
                .unwrap_or(0)
        };
        let mut qhat_inv = Vec::with_capacity(moduli.len());
        let mut qhat_mod_other = Vec::with_capacity(moduli.len());
        for m in &moduli {
            let qhat = &product / BigUint::from(m.value);
            let inv = m.inv(reduce(&qhat, m))?;
            // invariant: inv · [Q/q_j] ≡ 1 (mod q_j)
            debug_assert_eq!(m.mul(inv, reduce(&qhat, m)), 1);
            qhat_inv.push(inv);
            qhat_mod_other.push(targets.iter().map(|t| reduce(&qhat, t)).collect());
        }
        let product_mod_other = targets.iter().map(|t| reduce(&product, t)).collect();
        Ok(RnsBasis {
            moduli,
            targets: targets.to_vec(),
            qhat_inv,
            qhat_mod_other,
            product_mod_other,
        })
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    /// Product of the chain as a big integer.
    pub fn product(&self) -> BigUint {
        self.moduli
            .iter()
            .fold(BigUint::one(), |acc, m| acc * BigUint::from(m.value))
    }
}

/// Immutable parameter set: prime chains, scale, noise parameters, and all
/// derived tables.
#[derive(Debug, Clone)]
pub struct Context {
    pub ring_degree: usize,
    pub delta_log2: u32,
    pub sigma: f64,
    pub hamming_weight: usize,
    pub seed: u64,
    /// Scaling primes q_0 … q_{L−1}, each within a factor of 4 of 2^delta_log2.
    pub q: Vec<Arc<Modulus>>,
    /// Auxiliary primes p_0 … p_{K−1}, K ≥ L.
    pub p: Vec<Arc<Modulus>>,
    /// `levels[ℓ−1]`: prefix chain q_0…q_{ℓ−1} with conversion targets P.
    levels: Vec<RnsBasis>,
    /// P with conversion targets q_0…q_{L−1} (truncate columns for lower levels).
    pub p_basis: RnsBasis,
    /// `[P^{-1}]_{q_j}`.
    pub p_inv_mod_q: Vec<u64>,
    /// `[i][j] = [p_i^{-1}]_{q_j}` — the folded factors of the scaled conversion.
    pub p_i_inv_mod_q: Vec<Vec<u64>>,
    /// `[P]_{q_j}` — the key-generation lift of the scaling factor P.
    pub p_mod_q: Vec<u64>,
    /// `g[η][a−η−1][t−a] = [(q_a…q_t)^{-1}]_{q_η}` for η < a ≤ t < L.
    g: Vec<Vec<Vec<u64>>>,
    /// `[2^delta_log2]_{q_j}` — the encoding scale.
    pub delta_mod_q: Vec<u64>,
}

/// On-disk form. Only the raw parameters are stored; every derived table is
/// recomputed (and re-verified) on load.
#[derive(Serialize, Deserialize)]
struct ContextFile {
    version: u32,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "K")]
    k: usize,
    delta_log2: u32,
    sigma: f64,
    h: usize,
    seed: u64,
    q_moduli: Vec<String>,
    p_moduli: Vec<String>,
}

const CONTEXT_FILE_VERSION: u32 = 1;

/// Deterministically selects prime chains and builds the full context.
///
/// The q-chain takes the `L` primes ≡ 1 (mod 2N) nearest 2^delta_log2 (at
/// most `w_q` bits each), so each rescale divides by a value as close to the
/// scale as the congruence allows. The p-chain takes the top `K` w_p-bit
/// primes ≡ 1 (mod 2N), maximizing the key-switching headroom P.
#[allow(clippy::too_many_arguments)]
pub fn build_context(
    n: usize,
    l: usize,
    k: usize,
    w_q: u32,
    w_p: u32,
    delta_log2: u32,
    sigma: f64,
    h: usize,
    seed: u64,
) -> Result<Context> {
    if !n.is_power_of_two() || n < 4 {
        return Err(Error::Parameter(format!(
            "ring degree must be a power of two ≥ 4, got {n}"
        )));
    }
    if l < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 levels to rescale, got L = {l}"
        )));
    }
    if k < l {
        return Err(Error::Parameter(format!(
            "auxiliary chain must be at least as long as the scaling chain (K = {k} < L = {l})"
        )));
    }
    if delta_log2 >= w_q + 2 {
        return Err(Error::Parameter(format!(
            "scale 2^{delta_log2} too large for {w_q}-bit scaling primes"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if h == 0 || h > n {
        return Err(Error::Parameter(format!(
            "secret weight must be in 1..=N, got {h}"
        )));
    }

    let q: Vec<Arc<Modulus>> = (0..l)
        .map(|j| generate_scaling_prime(delta_log2, n, j, w_q))
        .collect::<Result<_>>()?;
    let p: Vec<Arc<Modulus>> = (0..k)
        .map(|i| generate_ntt_prime(w_p, n, i))
        .collect::<Result<_>>()?;
    Context::from_chains(n, delta_log2, sigma, h, seed, q, p)
}

impl Context {
    /// Builds every derived table from explicit prime chains, verifying the
    /// parameter invariants.
    pub fn from_chains(
        n: usize,
        delta_log2: u32,
        sigma: f64,
        h: usize,
        seed: u64,
        q: Vec<Arc<Modulus>>,
        p: Vec<Arc<Modulus>>,
    ) -> Result<Context> {
        let l = q.len();
        let k = p.len();
        if l < 2 || k < l {
            return Err(Error::Parameter(format!(
                "invalid chain lengths L = {l}, K = {k} (need 2 ≤ L ≤ K)"
            )));
        }
        let mut all: Vec<u64> = q.iter().chain(&p).map(|m| m.value).collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != l + k {
            return Err(Error::Parameter(
                "modulus chains overlap; q and p primes must be distinct".into(),
            ));
        }
        for m in q.iter().chain(&p) {
            if m.ring_degree != n {
                return Err(Error::Parameter(format!(
                    "modulus {} was built for ring degree {}, context uses {n}",
                    m.value, m.ring_degree
                )));
            }
        }
        // every q_j within a factor of 4 of the scale, so one rescale moves
        // the encrypted value by almost exactly one scale step
        let delta = BigUint::one() << delta_log2;
        for m in &q {
            let v = BigUint::from(m.value);
            if &v * 4u8 <= delta || v >= &delta * 4u8 {
                return Err(Error::Parameter(format!(
                    "scaling prime {} is not within a factor of 4 of 2^{delta_log2}",
                    m.value
                )));
            }
        }

        let levels: Vec<RnsBasis> = (1..=l)
            .map(|lev| RnsBasis::new(q[..lev].to_vec(), &p))
            .collect::<Result<_>>()?;
        let p_basis = RnsBasis::new(p.clone(), &q)?;

        let big_p = p_basis.product();
        let reduce = |x: &BigUint, m: &Modulus| -> u64 {
            (x % BigUint::from(m.value))
                .iter_u64_digits()
                .next()
                .unwrap_or(0)
        };
        let p_mod_q: Vec<u64> = q.iter().map(|m| reduce(&big_p, m)).collect();
        let p_inv_mod_q: Vec<u64> = q
            .iter()
            .zip(&p_mod_q)
            .map(|(m, &pm)| m.inv(pm))
            .collect::<Result<_>>()?;
        let p_i_inv_mod_q: Vec<Vec<u64>> = p
            .iter()
            .map(|pi| {
                q.iter()
                    .map(|m| m.inv(pi.value % m.value))
                    .collect::<Result<Vec<u64>>>()
            })
            .collect::<Result<_>>()?;

        // g[η][a−η−1][t−a] = [(q_a…q_t)^{-1}]_{q_η}: running products per (η,a)
        let mut g = Vec::with_capacity(l);
        for eta in 0..l {
            let m = &q[eta];
            let mut per_a = Vec::new();
            for a in eta + 1..l {
                let mut per_t = Vec::with_capacity(l - a);
                let mut prod = 1u64;
                for t in a..l {
                    prod = m.mul(prod, q[t].value % m.value);
                    per_t.push(m.inv(prod)?);
                }
                per_a.push(per_t);
            }
            g.push(per_a);
        }

        let delta_mod_q: Vec<u64> = q.iter().map(|m| m.pow(2, delta_log2 as u64)).collect();

        let ctx = Context {
            ring_degree: n,
            delta_log2,
            sigma,
            hamming_weight: h,
            seed,
            q,
            p,
            levels,
            p_basis,
            p_inv_mod_q,
            p_i_inv_mod_q,
            p_mod_q,
            g,
            delta_mod_q,
        };
        ctx.verify_tables()?;
        Ok(ctx)
    }

    /// Exhaustive big-integer re-derivation of every precomputed residue.
    fn verify_tables(&self) -> Result<()> {
        let reduce = |x: &BigUint, m: &Modulus| -> u64 {
            (x % BigUint::from(m.value))
                .iter_u64_digits()
                .next()
                .unwrap_or(0)
        };
        let check = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "precomputation self-check failed: {what}"
                )))
            }
        };
        for basis in self.levels.iter().chain(std::iter::once(&self.p_basis)) {
            let prod = basis.product();
            let targets: &[Arc<Modulus>] = if std::ptr::eq(basis, &self.p_basis) {
                &self.q
            } else {
                &self.p
            };
            for (j, m) in basis.moduli.iter().enumerate() {
                let qhat = &prod / BigUint::from(m.value);
                check(
                    m.mul(basis.qhat_inv[j], reduce(&qhat, m)) == 1,
                    "cofactor inverse",
                )?;
                for (i, t) in targets.iter().enumerate() {
                    check(
                        basis.qhat_mod_other[j][i] == reduce(&qhat, t),
                        "cofactor residue",
                    )?;
                }
            }
            for (i, t) in targets.iter().enumerate() {
                check(basis.product_mod_other[i] == reduce(&prod, t), "chain product")?;
            }
        }
        let big_p = self.p_basis.product();
        for (j, m) in self.q.iter().enumerate() {
            check(self.p_mod_q[j] == reduce(&big_p, m), "P residue")?;
            check(
                m.mul(self.p_inv_mod_q[j], self.p_mod_q[j]) == 1,
                "P inverse",
            )?;
            for (i, pi) in self.p.iter().enumerate() {
                check(
                    m.mul(self.p_i_inv_mod_q[i][j], pi.value % m.value) == 1,
                    "p_i inverse",
                )?;
            }
        }
        let l = self.q.len();
        for eta in 0..l {
            let m = &self.q[eta];
            for a in eta + 1..l {
                let mut prod = BigUint::one();
                for t in a..l {
                    prod *= BigUint::from(self.q[t].value);
                    let expect = m.inv(reduce(&prod, m))?;
                    check(self.g_range(eta, a, t) == expect, "g constant")?;
                }
            }
        }
        Ok(())
    }

    pub fn level_count(&self) -> usize {
        self.q.len()
    }

    pub fn aux_count(&self) -> usize {
        self.p.len()
    }

    /// Prefix basis q_0…q_{level−1} with conversion targets P.
    pub fn level_basis(&self, level: usize) -> Result<&RnsBasis> {
        if level == 0 || level > self.q.len() {
            return Err(Error::LevelOutOfRange(level, self.q.len()));
        }
        Ok(&self.levels[level - 1])
    }

    /// `[(q_a…q_t)^{-1}]_{q_η}` by start index; panics on invalid indices
    /// (internal hot path — callers validate).
    pub(crate) fn g_range(&self, eta: usize, a: usize, t: usize) -> u64 {
        self.g[eta][a - eta - 1][t - a]
    }

    /// `g_η^{u,t} = [(q_{L−u}…q_t)^{-1}]_{q_η}`, the precomputed constants of
    /// the combined rescaling; requires 0 ≤ η < L−u ≤ t < L and u ≥ 1.
    pub fn g_constant(&self, eta: usize, u: usize, t: usize) -> Result<u64> {
        let l = self.q.len();
        if u == 0 || u >= l {
            return Err(Error::IndexOutOfRange);
        }
        let a = l - u;
        if eta >= a || t < a || t >= l {
            return Err(Error::IndexOutOfRange);
        }
        Ok(self.g_range(eta, a, t))
    }

    pub fn to_json(&self) -> String {
        let file = ContextFile {
            version: CONTEXT_FILE_VERSION,
            n: self.ring_degree,
            l: self.q.len(),
            k: self.p.len(),
            delta_log2: self.delta_log2,
            sigma: self.sigma,
            h: self.hamming_weight,
            seed: self.seed,
            q_moduli: self.q.iter().map(|m| m.value.to_string()).collect(),
            p_moduli: self.p.iter().map(|m| m.value.to_string()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("context serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Context> {
        let file: ContextFile = serde_json::from_str(text)?;
        if file.version != CONTEXT_FILE_VERSION {
            return Err(Error::FileFormat(format!(
                "unsupported context file version {}",
                file.version
            )));
        }
        let parse_chain = |list: &[String]| -> Result<Vec<Arc<Modulus>>> {
            list.iter()
                .map(|s| {
                    let v: u64 = s
                        .parse()
                        .map_err(|_| Error::FileFormat(format!("bad modulus literal {s:?}")))?;
                    Modulus::new(v, file.n)
                })
                .collect()
        };
        let q = parse_chain(&file.q_moduli)?;
        let p = parse_chain(&file.p_moduli)?;
        if q.len() != file.l || p.len() != file.k {
            return Err(Error::FileFormat(
                "modulus list lengths disagree with L/K header".into(),
            ));
        }
        Context::from_chains(
            file.n,
            file.delta_log2,
            file.sigma,
            file.h,
            file.seed,
            q,
            p,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Context> {
        let text = std::fs::read_to_string(path)?;
        Context::from_json(&text)
    }

    /// Big-integer value of Q_ℓ = q_0…q_{ℓ−1}.
    pub fn q_product(&self, level: usize) -> BigUint {
        self.q[..level]
            .iter()
            .fold(BigUint::one(), |acc, m| acc * BigUint::from(m.value))
    }

    /// Big-integer value of P.
    pub fn p_product(&self) -> BigUint {
        self.p_basis.product()
    }
}

impl PartialEq for Context {
    fn eq(&self, other: &Self) -> bool {
        self.ring_degree == other.ring_degree
            && self.delta_log2 == other.delta_log2
            && self.sigma == other.sigma
            && self.hamming_weight == other.hamming_weight
            && self.seed == other.seed
            && self.q.iter().map(|m| m.value).eq(other.q.iter().map(|m| m.value))
            && self.p.iter().map(|m| m.value).eq(other.p.iter().map(|m| m.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn desk() -> Context {
        build_context(1 << 10, 8, 8, 50, 50, 45, 3.2, 64, 1).unwrap()
    }

    #[test]
    fn desk_parameters_build_sixteen_distinct_congruent_primes() {
        let ctx = desk();
        let mut all: Vec<u64> = ctx.q.iter().chain(&ctx.p).map(|m| m.value).collect();
        assert_eq!(all.len(), 16);
        for &v in &all {
            assert_eq!(v % (1 << 11), 1, "{v} not ≡ 1 mod 2^11");
        }
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        assert!(matches!(
            build_context(1 << 10, 1, 8, 50, 50, 45, 3.2, 64, 1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            build_context(1 << 10, 8, 7, 50, 50, 45, 3.2, 64, 1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            build_context(1000, 8, 8, 50, 50, 45, 3.2, 64, 1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            build_context(1 << 10, 8, 8, 50, 50, 55, 3.2, 64, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn serialization_is_deterministic_and_roundtrips() {
        let a = build_context(1 << 6, 4, 5, 50, 50, 45, 3.2, 16, 7).unwrap();
        let b = build_context(1 << 6, 4, 5, 50, 50, 45, 3.2, 16, 7).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = Context::from_json(&a.to_json()).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.to_json(), c.to_json());
    }

    #[test]
    fn level_basis_prefixes_match_big_integer_recomputation() {
        let ctx = desk();
        assert!(matches!(ctx.level_basis(0), Err(Error::LevelOutOfRange(0, 8))));
        assert!(matches!(ctx.level_basis(9), Err(Error::LevelOutOfRange(9, 8))));
        for lev in 1..=8usize {
            let basis = ctx.level_basis(lev).unwrap();
            assert_eq!(basis.len(), lev);
            let prod = basis.product();
            assert_eq!(prod, ctx.q_product(lev));
            for (j, m) in basis.moduli.iter().enumerate() {
                let qhat = &prod / BigUint::from(m.value);
                let r = (&qhat % BigUint::from(m.value))
                    .iter_u64_digits()
                    .next()
                    .unwrap_or(0);
                assert_eq!(m.mul(basis.qhat_inv[j], r), 1);
            }
        }
        // full-level basis is the whole q chain
        assert_eq!(
            ctx.level_basis(8).unwrap().moduli.len(),
            ctx.q.len()
        );
    }

    #[test]
    fn g_single_factor_is_plain_inverse() {
        let ctx = desk();
        let l = ctx.level_count();
        for eta in 0..l - 1 {
            let m = &ctx.q[eta];
            let expect = m.inv(ctx.q[l - 1].value % m.value).unwrap();
            assert_eq!(ctx.g_constant(eta, 1, l - 1).unwrap(), expect);
        }
    }

    #[test]
    fn g_satisfies_the_chain_recurrence() {
        // q_{L−u}^{-1} · g_η^{u−1,t} ≡ g_η^{u,t}
        let ctx = desk();
        let l = ctx.level_count();
        for u in 2..l {
            for t in l - u..l {
                if t < l - u + 1 {
                    continue;
                }
                for eta in 0..l - u {
                    let m = &ctx.q[eta];
                    let prev = ctx.g_constant(eta, u - 1, t);
                    let cur = ctx.g_constant(eta, u, t).unwrap();
                    if t >= l - (u - 1) {
                        let qinv = m.inv(ctx.q[l - u].value % m.value).unwrap();
                        assert_eq!(m.mul(qinv, prev.unwrap()), cur);
                    }
                }
            }
        }
    }

    #[test]
    fn g_matches_product_then_invert_oracle() {
        let ctx = build_context(1 << 6, 6, 6, 50, 50, 45, 3.2, 16, 3).unwrap();
        let l = ctx.level_count();
        for eta in 0..l {
            for a in eta + 1..l {
                for t in a..l {
                    let m = &ctx.q[eta];
                    let mut prod = BigUint::one();
                    for idx in a..=t {
                        prod *= BigUint::from(ctx.q[idx].value);
                    }
                    let r = (&prod % BigUint::from(m.value))
                        .iter_u64_digits()
                        .next()
                        .unwrap_or(0);
                    assert_eq!(ctx.g_range(eta, a, t), m.inv(r).unwrap());
                }
            }
        }
    }

    #[test]
    fn g_constant_bounds_are_enforced() {
        let ctx = desk();
        assert!(ctx.g_constant(0, 0, 7).is_err());
        assert!(ctx.g_constant(7, 1, 7).is_err()); // eta must be < L−u
        assert!(ctx.g_constant(0, 1, 6).is_err()); // t below L−u
        assert!(ctx.g_constant(0, 8, 7).is_err());
        assert!(ctx.g_constant(0, 2, 6).is_ok());
    }

    #[test]
    fn scaled_conversion_constants_are_consistent() {
        let ctx = desk();
        let big_p = ctx.p_product();
        assert!(!big_p.is_zero());
        for (j, m) in ctx.q.iter().enumerate() {
            assert_eq!(m.mul(ctx.p_inv_mod_q[j], ctx.p_mod_q[j]), 1);
            // Π_i [p_i^{-1}] = [P^{-1}]
            let mut acc = 1u64;
            for i in 0..ctx.p.len() {
                acc = m.mul(acc, ctx.p_i_inv_mod_q[i][j]);
            }
            assert_eq!(acc, ctx.p_inv_mod_q[j]);
        }
    }

    #[test]
    fn scaling_primes_sit_near_the_scale() {
        let ctx = desk();
        for m in &ctx.q {
            let delta = 1i128 << 45;
            let d = (m.value as i128 - delta).unsigned_abs();
            assert!(d * 4 < delta as u128 * 3); // comfortably inside factor 4
        }
    }
}
