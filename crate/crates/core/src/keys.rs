//! Key material, encryption, and generalized-tuple decryption.
//!
//! The evaluation keys are the generalized kind: one key pair per secret
//! power t, each a two-row encryption of P·s^t over the extended basis
//! P ∪ Q. During relinearization a degree-t tuple entry is pushed up to the
//! extended basis, multiplied against ek_t, and divided back down by P —
//! the keys make any tuple length collapse to two rows with one division.
//!
//! All randomness is drawn from seeded ChaCha streams, one per purpose, so
//! every artifact is byte-reproducible from (context, seed).

use std::io::{Read, Write};
use std::path::Path;

use num_bigint::BigInt;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::context::Context;
use crate::error::{Error, Result};
use crate::ntt::{intt_in_place, ntt_forward, ntt_in_place, CoeffVector, Domain};
use crate::oracle;
use crate::poly::{ExtendedPoly, RnsPoly};
use crate::zq::Modulus;

/// One ChaCha stream per purpose: key = seed (little-endian) followed by an
/// ASCII purpose tag, zero-padded to 32 bytes.
fn stream(seed: u64, tag: &str) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let tag_bytes = tag.as_bytes();
    assert!(tag_bytes.len() <= 24);
    key[8..8 + tag_bytes.len()].copy_from_slice(tag_bytes);
    ChaCha12Rng::from_seed(key)
}

/// Uniform residue below `m.value` by rejection under a power-of-two mask
/// (no modulo bias).
fn uniform_residue<R: RngCore>(rng: &mut R, m: &Modulus) -> u64 {
    let mask = if m.bit_width == 64 {
        u64::MAX
    } else {
        (1u64 << m.bit_width) - 1
    };
    loop {
        let x = rng.next_u64() & mask;
        if x < m.value {
            return x;
        }
    }
}

fn uniform_vec<R: RngCore>(rng: &mut R, m: &Modulus, n: usize) -> Vec<u64> {
    (0..n).map(|_| uniform_residue(rng, m)).collect()
}

/// Ternary vector with exactly `weight` nonzero (±1) coefficients.
fn ternary_exact<R: RngCore>(rng: &mut R, n: usize, weight: usize) -> Vec<i8> {
    assert!(weight <= n && n.is_power_of_two());
    let mask = (n - 1) as u64;
    let mut out = vec![0i8; n];
    let mut placed = 0;
    while placed < weight {
        let idx = (rng.next_u64() & mask) as usize;
        if out[idx] == 0 {
            out[idx] = if rng.next_u64() & 1 == 1 { 1 } else { -1 };
            placed += 1;
        }
    }
    out
}

/// Standard-normal quantile (Acklam's rational approximation, relative error
/// below 1.2e-9 — far finer than the integer rounding that follows).
fn inv_norm_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Rounded Gaussian with standard deviation `sigma`, clamped to ±⌊6σ⌋ so a
/// single astronomically unlikely draw can never blow a noise budget.
fn gaussian_rounded<R: RngCore>(rng: &mut R, sigma: f64) -> i64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let z = inv_norm_cdf(u) * sigma;
    let bound = (6.0 * sigma).floor() as i64;
    (z.round() as i64).clamp(-bound, bound)
}

fn gaussian_vec<R: RngCore>(rng: &mut R, sigma: f64, n: usize) -> Vec<i64> {
    (0..n).map(|_| gaussian_rounded(rng, sigma)).collect()
}

/// Lifts small signed coefficients into evaluation-domain components over
/// the given moduli.
fn lift_eval(coeffs: &[i64], moduli: &[std::sync::Arc<Modulus>]) -> Vec<CoeffVector> {
    moduli
        .iter()
        .map(|m| {
            let mut v = CoeffVector::from_coeffs(
                coeffs.iter().map(|&c| m.reduce_i64(c)).collect(),
                m.clone(),
                Domain::Coefficient,
            );
            ntt_forward(&mut v);
            v
        })
        .collect()
}

/// Ternary secret with its evaluation-domain lifts over both chains.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub coeffs: Vec<i8>,
    /// s over the full Q chain, evaluation domain.
    pub q_eval: RnsPoly,
    /// s over the P chain, evaluation domain.
    pub p_eval: Vec<CoeffVector>,
}

impl SecretKey {
    pub fn from_ternary(ctx: &Context, coeffs: Vec<i8>) -> Result<SecretKey> {
        if coeffs.len() != ctx.ring_degree {
            return Err(Error::Parameter(format!(
                "secret has {} coefficients, ring degree is {}",
                coeffs.len(),
                ctx.ring_degree
            )));
        }
        if coeffs.iter().any(|&c| !(-1..=1).contains(&c)) {
            return Err(Error::Parameter("secret coefficients must be ternary".into()));
        }
        let wide: Vec<i64> = coeffs.iter().map(|&c| c as i64).collect();
        let q_eval = RnsPoly {
            comps: lift_eval(&wide, &ctx.q),
        };
        let p_eval = lift_eval(&wide, &ctx.p);
        Ok(SecretKey { coeffs, q_eval, p_eval })
    }

    pub fn weight(&self) -> usize {
        self.coeffs.iter().filter(|&&c| c != 0).count()
    }

    /// s lifted to the extended P∪Q basis at the given level.
    fn extended_eval(&self, level: usize) -> ExtendedPoly {
        ExtendedPoly {
            p: self.p_eval.clone(),
            q: self.q_eval.comps[..level].to_vec(),
        }
    }
}

/// Encryption key: (b, a) with b = −a·s + e over the full Q chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub b: RnsPoly,
    pub a: RnsPoly,
}

/// One generalized evaluation key: a two-row encryption of P·s^t over P∪Q.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalKey {
    pub t: usize,
    pub ek0: ExtendedPoly,
    pub ek1: ExtendedPoly,
}

/// Evaluation keys for every secret power 2..=max_t.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalKeySet {
    pub keys: Vec<EvalKey>,
    pub max_t: usize,
    /// Whether the Q-components have been pre-multiplied by [P^{-1}]_{q_j}
    /// (consumed only by the fused-division relinearization path).
    pub pre_scaled: bool,
}

impl EvalKeySet {
    pub fn key_for(&self, t: usize) -> Result<&EvalKey> {
        if t < 2 || t > self.max_t {
            return Err(Error::MissingEvalKey(t));
        }
        Ok(&self.keys[t - 2])
    }

    /// Folds the final P^{-1} scaling of relinearization into the key
    /// material itself: every Q-component of every key row is multiplied by
    /// [P^{-1}]_{q_j} once, here, instead of per multiplication.
    pub fn prescale(&self, ctx: &Context) -> Result<EvalKeySet> {
        if self.pre_scaled {
            return Err(Error::Parameter("key set is already pre-scaled".into()));
        }
        let scale_rows = |x: &ExtendedPoly| ExtendedPoly {
            p: x.p.clone(),
            q: x
                .q
                .iter()
                .enumerate()
                .map(|(j, c)| c.mul_scalar(ctx.p_inv_mod_q[j]))
                .collect(),
        };
        Ok(EvalKeySet {
            keys: self
                .keys
                .iter()
                .map(|k| EvalKey {
                    t: k.t,
                    ek0: scale_rows(&k.ek0),
                    ek1: scale_rows(&k.ek1),
                })
                .collect(),
            max_t: self.max_t,
            pre_scaled: true,
        })
    }
}

/// A ciphertext tuple (d_0, …, d_{T−1}) decrypting to Σ d_t·s^t.
/// Fresh encryptions have T = 2; tuple products grow T until
/// relinearization folds it back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextTuple {
    pub polys: Vec<RnsPoly>,
    pub level: usize,
    /// The value is (Δ^scale_exp)·(message product) before rescaling brings
    /// the exponent back down.
    pub scale_exp: u32,
    pub domain: Domain,
}

impl CiphertextTuple {
    pub fn tuple_size(&self) -> usize {
        self.polys.len()
    }

    fn validate(&self) -> Result<()> {
        if self.polys.len() < 2 {
            return Err(Error::Parameter("ciphertext tuple needs at least 2 rows".into()));
        }
        for p in &self.polys {
            if p.level() != self.level {
                return Err(Error::LevelMismatch);
            }
            if p.domain() != self.domain {
                return Err(Error::DomainMismatch { expected: self.domain.name() });
            }
        }
        Ok(())
    }

    /// Component-wise homomorphic addition. Operands must agree on level,
    /// domain, and scale; a shorter tuple is padded with zeros.
    pub fn add(&self, other: &CiphertextTuple, ctx: &Context) -> Result<CiphertextTuple> {
        if self.level != other.level {
            return Err(Error::LevelMismatch);
        }
        if self.domain != other.domain {
            return Err(Error::DomainMismatch { expected: self.domain.name() });
        }
        if self.scale_exp != other.scale_exp {
            return Err(Error::Parameter(
                "cannot add ciphertexts at different scales".into(),
            ));
        }
        let t = self.polys.len().max(other.polys.len());
        let zero = RnsPoly::zero(ctx, self.level, self.domain)?;
        let mut polys = Vec::with_capacity(t);
        for i in 0..t {
            let a = self.polys.get(i).unwrap_or(&zero);
            let b = other.polys.get(i).unwrap_or(&zero);
            polys.push(a.add(b)?);
        }
        Ok(CiphertextTuple {
            polys,
            level: self.level,
            scale_exp: self.scale_exp,
            domain: self.domain,
        })
    }
}

/// Secret and public key, deterministic in `seed`.
pub fn keygen(ctx: &Context, seed: u64) -> Result<(SecretKey, PublicKey)> {
    let mut sec_rng = stream(seed, "sec");
    let s = ternary_exact(&mut sec_rng, ctx.ring_degree, ctx.hamming_weight);
    let sk = SecretKey::from_ternary(ctx, s)?;

    let mut pub_rng = stream(seed, "pub");
    let a = RnsPoly {
        comps: ctx
            .q
            .iter()
            .map(|m| {
                CoeffVector::from_coeffs(
                    uniform_vec(&mut pub_rng, m, ctx.ring_degree),
                    m.clone(),
                    Domain::Evaluation,
                )
            })
            .collect(),
    };
    let e = gaussian_vec(&mut pub_rng, ctx.sigma, ctx.ring_degree);
    let e_eval = RnsPoly {
        comps: lift_eval(&e, &ctx.q),
    };
    // b = −a·s + e
    let b = e_eval.sub(&a.mul_pointwise(&sk.q_eval)?)?;
    Ok((sk, PublicKey { b, a }))
}

/// Generalized evaluation keys for t = 2..=max_t.
///
/// Over every component m of P∪Q the rows satisfy
/// `ek_{t,0} = [P]_m·s^t − ek_{t,1}·s + e_t` with ek_{t,1} uniform and one
/// small Gaussian e_t shared across components — on the auxiliary chain
/// [P]_{p_i} = 0, so those components encrypt zero, while the Q-components
/// carry P·s^t.
pub fn keygen_eval(ctx: &Context, sk: &SecretKey, max_t: usize, seed: u64) -> Result<EvalKeySet> {
    if max_t < 2 {
        return Err(Error::Parameter(format!(
            "evaluation keys start at the square term; max_t = {max_t} < 2"
        )));
    }
    let l = ctx.q.len();
    let s_ext = sk.extended_eval(l);
    let mut keys = Vec::with_capacity(max_t - 1);
    // s^t over the extended basis, pointwise
    let mut s_pow = s_ext.mul_pointwise(&s_ext)?; // s²
    for t in 2..=max_t {
        let mut rng = stream(seed, &format!("evk{t}"));
        let ek1 = ExtendedPoly {
            p: ctx
                .p
                .iter()
                .map(|m| {
                    CoeffVector::from_coeffs(
                        uniform_vec(&mut rng, m, ctx.ring_degree),
                        m.clone(),
                        Domain::Evaluation,
                    )
                })
                .collect(),
            q: ctx
                .q
                .iter()
                .map(|m| {
                    CoeffVector::from_coeffs(
                        uniform_vec(&mut rng, m, ctx.ring_degree),
                        m.clone(),
                        Domain::Evaluation,
                    )
                })
                .collect(),
        };
        let e = gaussian_vec(&mut rng, ctx.sigma, ctx.ring_degree);
        let e_p = lift_eval(&e, &ctx.p);
        let e_q = lift_eval(&e, &ctx.q);

        // rows: ek0 = [P]·s^t − ek1·s + e, componentwise
        let mut ek0_p = Vec::with_capacity(ctx.p.len());
        for i in 0..ctx.p.len() {
            // [P]_{p_i} = 0: the s^t term vanishes
            ek0_p.push(e_p[i].sub(&ek1.p[i].mul_pointwise(&s_ext.p[i])));
        }
        let mut ek0_q = Vec::with_capacity(l);
        for j in 0..l {
            let c = s_pow.q[j]
                .mul_scalar(ctx.p_mod_q[j])
                .sub(&ek1.q[j].mul_pointwise(&s_ext.q[j]))
                .add(&e_q[j]);
            ek0_q.push(c);
        }
        keys.push(EvalKey {
            t,
            ek0: ExtendedPoly { p: ek0_p, q: ek0_q },
            ek1,
        });
        if t < max_t {
            s_pow = s_pow.mul_pointwise(&s_ext)?;
        }
    }
    Ok(EvalKeySet { keys, max_t, pre_scaled: false })
}

/// Encrypts a small-norm integer polynomial at scale Δ:
/// ct = (Δm + v·b + e₀, v·a + e₁) with v ternary of weight N/2.
pub fn encrypt(ctx: &Context, pk: &PublicKey, message: &[i64], seed: u64) -> Result<CiphertextTuple> {
    if message.len() != ctx.ring_degree {
        return Err(Error::Parameter(format!(
            "message has {} coefficients, ring degree is {}",
            message.len(),
            ctx.ring_degree
        )));
    }
    let max_m = message.iter().map(|&c| c.unsigned_abs()).max().unwrap_or(0);
    // Δ·‖m‖ must sit far below Q_L/2 or the plaintext wraps immediately
    let l = ctx.q.len();
    let budget = ctx.q_product(l) >> (ctx.delta_log2 + 3);
    if num_bigint::BigUint::from(max_m) > budget {
        return Err(Error::MessageTooLarge);
    }

    let mut rng = stream(seed, "enc");
    let v = ternary_exact(&mut rng, ctx.ring_degree, ctx.ring_degree / 2);
    let e0 = gaussian_vec(&mut rng, ctx.sigma, ctx.ring_degree);
    let e1 = gaussian_vec(&mut rng, ctx.sigma, ctx.ring_degree);

    let v_wide: Vec<i64> = v.iter().map(|&c| c as i64).collect();
    let v_eval = RnsPoly { comps: lift_eval(&v_wide, &ctx.q) };
    let e0_eval = RnsPoly { comps: lift_eval(&e0, &ctx.q) };
    let e1_eval = RnsPoly { comps: lift_eval(&e1, &ctx.q) };

    // Δ·m lifted per component
    let m_eval = RnsPoly { comps: lift_eval(message, &ctx.q) };
    let dm = m_eval.mul_scalar_per_comp(&ctx.delta_mod_q);

    let c0 = dm.add(&v_eval.mul_pointwise(&pk.b)?)?.add(&e0_eval)?;
    let c1 = v_eval.mul_pointwise(&pk.a)?.add(&e1_eval)?;
    Ok(CiphertextTuple {
        polys: vec![c0, c1],
        level: l,
        scale_exp: 1,
        domain: Domain::Evaluation,
    })
}

/// Decrypts a tuple of any length: returns the centered coefficients of
/// Σ_t d_t·s^t mod Q_ℓ (Horner over the evaluation domain, one inverse
/// transform per component at the end).
pub fn decrypt_tuple(ctx: &Context, sk: &SecretKey, ct: &CiphertextTuple) -> Result<Vec<BigInt>> {
    ct.validate()?;
    let level = ct.level;
    let s = sk.q_eval.truncate_level(level)?;
    let mut polys = ct.polys.clone();
    if ct.domain == Domain::Coefficient {
        for p in &mut polys {
            for c in &mut p.comps {
                ntt_in_place(&c.modulus.clone(), &mut c.coeffs);
                c.domain = Domain::Evaluation;
            }
        }
    }
    let t = polys.len();
    let mut acc = polys[t - 1].clone();
    for i in (0..t - 1).rev() {
        acc = acc.mul_pointwise(&s)?.add(&polys[i])?;
    }
    for c in &mut acc.comps {
        intt_in_place(&c.modulus.clone(), &mut c.coeffs);
        c.domain = Domain::Coefficient;
    }
    let rows = acc.residue_rows();
    Ok(oracle::crt_reconstruct_poly(&rows, &ctx.q[..level]))
}

/// Measured fresh-encryption noise ceiling (log2), used by round-trip tests
/// and the verification tooling: ‖v·e‖ ≤ 6σ·N/2 plus the injected e₀, e₁·s
/// terms — 2^16 bounds every desk-scale configuration with a wide margin.
pub fn fresh_noise_budget_log2(ctx: &Context) -> f64 {
    let conv = 6.0 * ctx.sigma * (ctx.ring_degree as f64 / 2.0);
    (2.0 * conv).log2().max(16.0)
}

// ---------------------------------------------------------------------------
// binary formats

const FORMAT_VERSION: u16 = 1;

struct Header {
    magic: [u8; 4],
    n: u32,
    level: u16,
    tuple_size: u16,
    scale_exp: u16,
    domain: u8,
}

impl Header {
    fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.magic)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.n.to_le_bytes())?;
        w.write_all(&self.level.to_le_bytes())?;
        w.write_all(&self.tuple_size.to_le_bytes())?;
        w.write_all(&self.scale_exp.to_le_bytes())?;
        w.write_all(&[self.domain])?;
        Ok(())
    }

    fn read(r: &mut impl Read, expect_magic: &[u8; 4]) -> Result<Header> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != expect_magic {
            return Err(Error::FileFormat(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(expect_magic)
            )));
        }
        let mut buf2 = [0u8; 2];
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf2)?;
        let version = u16::from_le_bytes(buf2);
        if version != FORMAT_VERSION {
            return Err(Error::FileFormat(format!("unsupported file version {version}")));
        }
        r.read_exact(&mut buf4)?;
        let n = u32::from_le_bytes(buf4);
        r.read_exact(&mut buf2)?;
        let level = u16::from_le_bytes(buf2);
        r.read_exact(&mut buf2)?;
        let tuple_size = u16::from_le_bytes(buf2);
        r.read_exact(&mut buf2)?;
        let scale_exp = u16::from_le_bytes(buf2);
        let mut buf1 = [0u8; 1];
        r.read_exact(&mut buf1)?;
        Ok(Header {
            magic,
            n,
            level,
            tuple_size,
            scale_exp,
            domain: buf1[0],
        })
    }
}

fn write_component(w: &mut impl Write, c: &CoeffVector) -> Result<()> {
    for &v in &c.coeffs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_component(
    r: &mut impl Read,
    m: &std::sync::Arc<Modulus>,
    n: usize,
    domain: Domain,
) -> Result<CoeffVector> {
    let mut coeffs = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        let v = u64::from_le_bytes(buf);
        if v >= m.value {
            return Err(Error::FileFormat(format!(
                "residue {v} out of range for modulus {}",
                m.value
            )));
        }
        coeffs.push(v);
    }
    Ok(CoeffVector::from_coeffs(coeffs, m.clone(), domain))
}

fn domain_byte(d: Domain) -> u8 {
    match d {
        Domain::Coefficient => 0,
        Domain::Evaluation => 1,
    }
}

fn parse_domain(b: u8) -> Result<Domain> {
    match b {
        0 => Ok(Domain::Coefficient),
        1 => Ok(Domain::Evaluation),
        _ => Err(Error::FileFormat(format!("unknown domain byte {b}"))),
    }
}

fn check_ring(ctx: &Context, h: &Header) -> Result<()> {
    if h.n as usize != ctx.ring_degree {
        return Err(Error::FileFormat(format!(
            "file was written for ring degree {}, context has {}",
            h.n, ctx.ring_degree
        )));
    }
    Ok(())
}

impl SecretKey {
    /// Stored as the ternary coefficients lifted over Q, coefficient domain.
    pub fn save(&self, ctx: &Context, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let l = ctx.q.len();
        Header {
            magic: *b"SECK",
            n: ctx.ring_degree as u32,
            level: l as u16,
            tuple_size: 1,
            scale_exp: 0,
            domain: domain_byte(Domain::Coefficient),
        }
        .write(&mut f)?;
        for m in &ctx.q {
            let c = CoeffVector::from_coeffs(
                self.coeffs.iter().map(|&v| m.reduce_i64(v as i64)).collect(),
                m.clone(),
                Domain::Coefficient,
            );
            write_component(&mut f, &c)?;
        }
        Ok(())
    }

    pub fn load(ctx: &Context, path: &Path) -> Result<SecretKey> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let h = Header::read(&mut f, b"SECK")?;
        check_ring(ctx, &h)?;
        if h.level as usize != ctx.q.len() || h.tuple_size != 1 {
            return Err(Error::FileFormat("secret key shape mismatch".into()));
        }
        let comps: Vec<CoeffVector> = ctx
            .q
            .iter()
            .map(|m| read_component(&mut f, m, ctx.ring_degree, Domain::Coefficient))
            .collect::<Result<_>>()?;
        // ternary recovery from the first component
        let m0 = &ctx.q[0];
        let coeffs: Vec<i8> = comps[0]
            .coeffs
            .iter()
            .map(|&v| {
                if v == 0 {
                    Ok(0i8)
                } else if v == 1 {
                    Ok(1i8)
                } else if v == m0.value - 1 {
                    Ok(-1i8)
                } else {
                    Err(Error::FileFormat("secret key is not ternary".into()))
                }
            })
            .collect::<Result<_>>()?;
        SecretKey::from_ternary(ctx, coeffs)
    }
}

impl PublicKey {
    pub fn save(&self, ctx: &Context, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        Header {
            magic: *b"PUBK",
            n: ctx.ring_degree as u32,
            level: ctx.q.len() as u16,
            tuple_size: 2,
            scale_exp: 0,
            domain: domain_byte(Domain::Evaluation),
        }
        .write(&mut f)?;
        for poly in [&self.b, &self.a] {
            for c in &poly.comps {
                write_component(&mut f, c)?;
            }
        }
        Ok(())
    }

    pub fn load(ctx: &Context, path: &Path) -> Result<PublicKey> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let h = Header::read(&mut f, b"PUBK")?;
        check_ring(ctx, &h)?;
        if h.level as usize != ctx.q.len() || h.tuple_size != 2 {
            return Err(Error::FileFormat("public key shape mismatch".into()));
        }
        let mut read_poly = || -> Result<RnsPoly> {
            Ok(RnsPoly {
                comps: ctx
                    .q
                    .iter()
                    .map(|m| read_component(&mut f, m, ctx.ring_degree, Domain::Evaluation))
                    .collect::<Result<_>>()?,
            })
        };
        let b = read_poly()?;
        let a = read_poly()?;
        Ok(PublicKey { b, a })
    }
}

impl EvalKeySet {
    /// Layout: keys ascending in t; per key the two rows; per row the K
    /// auxiliary components then the L scaling components. The header packs
    /// the key count in `tuple_size`, max_t in `scale_exp`, and the
    /// pre-scaled flag in bit 1 of the domain byte.
    pub fn save(&self, ctx: &Context, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let domain = domain_byte(Domain::Evaluation) | if self.pre_scaled { 2 } else { 0 };
        Header {
            magic: *b"EVKS",
            n: ctx.ring_degree as u32,
            level: ctx.q.len() as u16,
            tuple_size: self.keys.len() as u16,
            scale_exp: self.max_t as u16,
            domain,
        }
        .write(&mut f)?;
        for key in &self.keys {
            for row in [&key.ek0, &key.ek1] {
                for c in row.p.iter().chain(&row.q) {
                    write_component(&mut f, c)?;
                }
            }
        }
        Ok(())
    }

    pub fn load(ctx: &Context, path: &Path) -> Result<EvalKeySet> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let h = Header::read(&mut f, b"EVKS")?;
        check_ring(ctx, &h)?;
        let max_t = h.scale_exp as usize;
        if h.level as usize != ctx.q.len()
            || max_t < 2
            || h.tuple_size as usize != max_t - 1
        {
            return Err(Error::FileFormat("evaluation key set shape mismatch".into()));
        }
        let pre_scaled = h.domain & 2 != 0;
        parse_domain(h.domain & 1)?;
        let mut keys = Vec::with_capacity(max_t - 1);
        for t in 2..=max_t {
            let mut read_row = || -> Result<ExtendedPoly> {
                let p = ctx
                    .p
                    .iter()
                    .map(|m| read_component(&mut f, m, ctx.ring_degree, Domain::Evaluation))
                    .collect::<Result<_>>()?;
                let q = ctx
                    .q
                    .iter()
                    .map(|m| read_component(&mut f, m, ctx.ring_degree, Domain::Evaluation))
                    .collect::<Result<_>>()?;
                Ok(ExtendedPoly { p, q })
            };
            let ek0 = read_row()?;
            let ek1 = read_row()?;
            keys.push(EvalKey { t, ek0, ek1 });
        }
        Ok(EvalKeySet { keys, max_t, pre_scaled })
    }
}

impl CiphertextTuple {
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        Header {
            magic: *b"CTXT",
            n: self.polys[0].ring_degree() as u32,
            level: self.level as u16,
            tuple_size: self.polys.len() as u16,
            scale_exp: self.scale_exp as u16,
            domain: domain_byte(self.domain),
        }
        .write(&mut f)?;
        for poly in &self.polys {
            for c in &poly.comps {
                write_component(&mut f, c)?;
            }
        }
        Ok(())
    }

    pub fn load(ctx: &Context, path: &Path) -> Result<CiphertextTuple> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let h = Header::read(&mut f, b"CTXT")?;
        check_ring(ctx, &h)?;
        let level = h.level as usize;
        if level == 0 || level > ctx.q.len() {
            return Err(Error::FileFormat(format!("ciphertext level {level} out of range")));
        }
        let domain = parse_domain(h.domain)?;
        let polys: Vec<RnsPoly> = (0..h.tuple_size)
            .map(|_| -> Result<RnsPoly> {
                Ok(RnsPoly {
                    comps: ctx.q[..level]
                        .iter()
                        .map(|m| read_component(&mut f, m, ctx.ring_degree, domain))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        let ct = CiphertextTuple {
            polys,
            level,
            scale_exp: h.scale_exp as u32,
            domain,
        };
        ct.validate()?;
        Ok(ct)
    }
}

/// Noise of a decrypted product versus the expected plaintext product:
/// log2 of the worst coefficient error of `decrypt(ct)` against
/// `Δ^{scale_exp}·Π messages` (all in exact arithmetic, reduced centered
/// mod Q_ℓ).
pub fn product_noise_log2(
    ctx: &Context,
    sk: &SecretKey,
    ct: &CiphertextTuple,
    messages: &[Vec<i64>],
) -> Result<f64> {
    let got = decrypt_tuple(ctx, sk, ct)?;
    let inputs: Vec<Vec<BigInt>> = messages
        .iter()
        .map(|m| m.iter().map(|&c| BigInt::from(c)).collect())
        .collect();
    let mut expect = oracle::exact_ring_product(&inputs);
    let delta = BigInt::from(2u8).pow(ctx.delta_log2 * ct.scale_exp);
    for c in &mut expect {
        *c *= &delta;
    }
    // center both mod Q_ℓ before comparing
    let q = BigInt::from(ctx.q_product(ct.level));
    let center = |v: &BigInt| -> BigInt {
        let mut r = v % &q;
        if r < BigInt::from(0) {
            r += &q;
        }
        if &r * 2 > q {
            r -= &q;
        }
        r
    };
    let diff: Vec<BigInt> = got
        .iter()
        .zip(&expect)
        .map(|(g, e)| center(&(g - e)))
        .collect();
    Ok(oracle::log2_big(&oracle::max_abs(&diff)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::build_context;
    use num_traits::{Signed, Zero};

    fn ctx() -> Context {
        build_context(1 << 6, 5, 5, 50, 50, 45, 3.2, 16, 1).unwrap()
    }

    #[test]
    fn secret_key_has_exact_weight_and_is_deterministic() {
        let ctx = ctx();
        let (sk1, _) = keygen(&ctx, 7).unwrap();
        let (sk2, _) = keygen(&ctx, 7).unwrap();
        let (sk3, _) = keygen(&ctx, 8).unwrap();
        assert_eq!(sk1.weight(), 16);
        assert_eq!(sk1, sk2);
        assert_ne!(sk1.coeffs, sk3.coeffs);
    }

    #[test]
    fn public_key_identity_leaves_only_small_noise() {
        let ctx = ctx();
        let (sk, pk) = keygen(&ctx, 3).unwrap();
        // b + a·s = e
        let e = pk
            .b
            .add(&pk.a.mul_pointwise(&sk.q_eval).unwrap())
            .unwrap();
        let mut e_coeff = e;
        for c in &mut e_coeff.comps {
            intt_in_place(&c.modulus.clone(), &mut c.coeffs);
            c.domain = Domain::Coefficient;
        }
        let centered = crate::poly::to_centered_big(&ctx, &e_coeff).unwrap();
        let bound = BigInt::from((6.0 * ctx.sigma).floor() as i64);
        for c in &centered {
            assert!(c.abs() <= bound, "noise coefficient {c} above 6σ");
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_public_randomness() {
        let ctx = ctx();
        let (_, pk1) = keygen(&ctx, 1).unwrap();
        let (_, pk2) = keygen(&ctx, 2).unwrap();
        assert_ne!(pk1.a, pk2.a);
    }

    #[test]
    fn evaluation_keys_decrypt_to_scaled_secret_powers() {
        let ctx = ctx();
        let (sk, _) = keygen(&ctx, 5).unwrap();
        let eks = keygen_eval(&ctx, &sk, 5, 5).unwrap();
        assert_eq!(eks.keys.len(), 4);
        let all_moduli: Vec<_> = ctx.p.iter().chain(&ctx.q).cloned().collect();
        let s_ext = sk.extended_eval(ctx.q.len());
        for key in &eks.keys {
            // residual = ek0 + ek1·s − [P]·s^t over P∪Q, which telescopes to e_t
            let mut spow = s_ext.clone();
            for _ in 1..key.t {
                spow = spow.mul_pointwise(&s_ext).unwrap();
            }
            let mut resid_comps = Vec::new();
            for (i, c) in key.ek0.p.iter().enumerate() {
                // [P]_{p_i} = 0 — no s^t term on the auxiliary chain
                let r = c.add(&key.ek1.p[i].mul_pointwise(&s_ext.p[i]));
                resid_comps.push(r);
            }
            for (j, c) in key.ek0.q.iter().enumerate() {
                let r = c
                    .add(&key.ek1.q[j].mul_pointwise(&s_ext.q[j]))
                    .sub(&spow.q[j].mul_scalar(ctx.p_mod_q[j]));
                resid_comps.push(r);
            }
            let mut rows = Vec::new();
            for c in &mut resid_comps {
                intt_in_place(&c.modulus.clone(), &mut c.coeffs);
                rows.push(c.coeffs.clone());
            }
            let row_refs: Vec<&[u64]> = rows.iter().map(|r| r.as_slice()).collect();
            let centered = oracle::crt_reconstruct_poly(&row_refs, &all_moduli);
            let bound = BigInt::from((6.0 * ctx.sigma).floor() as i64);
            for c in &centered {
                assert!(c.abs() <= bound, "t={} residual {c} above 6σ", key.t);
            }
        }
    }

    #[test]
    fn evaluation_keys_reject_degenerate_max_t() {
        let ctx = ctx();
        let (sk, _) = keygen(&ctx, 1).unwrap();
        assert!(matches!(
            keygen_eval(&ctx, &sk, 1, 1),
            Err(Error::Parameter(_))
        ));
        let eks = keygen_eval(&ctx, &sk, 3, 1).unwrap();
        assert!(eks.key_for(2).is_ok());
        assert!(eks.key_for(3).is_ok());
        assert!(matches!(eks.key_for(4), Err(Error::MissingEvalKey(4))));
        assert!(matches!(eks.key_for(1), Err(Error::MissingEvalKey(1))));
    }

    #[test]
    fn encrypt_decrypt_roundtrip_stays_within_the_fresh_noise_budget() {
        let ctx = ctx();
        let (sk, pk) = keygen(&ctx, 11).unwrap();
        let budget = fresh_noise_budget_log2(&ctx);
        let mut rng = stream(99, "test");
        for trial in 0..20u64 {
            let m: Vec<i64> = (0..ctx.ring_degree)
                .map(|_| (rng.next_u64() % 17) as i64 - 8)
                .collect();
            let ct = encrypt(&ctx, &pk, &m, 1000 + trial).unwrap();
            let got = decrypt_tuple(&ctx, &sk, &ct).unwrap();
            let delta = BigInt::from(2u8).pow(ctx.delta_log2);
            for (g, &mm) in got.iter().zip(&m) {
                let err = (g - BigInt::from(mm) * &delta).abs();
                let err_log = oracle::log2_big(&err.to_biguint().unwrap());
                assert!(
                    err_log < budget,
                    "fresh noise 2^{err_log:.1} above budget 2^{budget:.1}"
                );
            }
        }
    }

    #[test]
    fn zero_and_constant_messages_roundtrip() {
        let ctx = ctx();
        let (sk, pk) = keygen(&ctx, 13).unwrap();
        let zero = vec![0i64; ctx.ring_degree];
        let ct = encrypt(&ctx, &pk, &zero, 1).unwrap();
        let got = decrypt_tuple(&ctx, &sk, &ct).unwrap();
        let budget = fresh_noise_budget_log2(&ctx);
        for g in &got {
            let l = oracle::log2_big(&g.abs().to_biguint().unwrap());
            assert!(l < budget);
        }
        let mut one = vec![0i64; ctx.ring_degree];
        one[0] = 1;
        let ct1 = encrypt(&ctx, &pk, &one, 2).unwrap();
        let got1 = decrypt_tuple(&ctx, &sk, &ct1).unwrap();
        let delta = BigInt::from(2u8).pow(ctx.delta_log2);
        let err = (&got1[0] - delta).abs();
        assert!(oracle::log2_big(&err.to_biguint().unwrap()) < budget);
    }

    #[test]
    fn homomorphic_addition_commutes_with_decryption() {
        let ctx = ctx();
        let (sk, pk) = keygen(&ctx, 17).unwrap();
        let mut a = vec![0i64; ctx.ring_degree];
        let mut b = vec![0i64; ctx.ring_degree];
        a[0] = 3;
        a[5] = -2;
        b[0] = 4;
        b[9] = 7;
        let ca = encrypt(&ctx, &pk, &a, 21).unwrap();
        let cb = encrypt(&ctx, &pk, &b, 22).unwrap();
        let sum = ca.add(&cb, &ctx).unwrap();
        let d_sum = decrypt_tuple(&ctx, &sk, &sum).unwrap();
        let da = decrypt_tuple(&ctx, &sk, &ca).unwrap();
        let db = decrypt_tuple(&ctx, &sk, &cb).unwrap();
        let q = BigInt::from(ctx.q_product(ctx.q.len()));
        for i in 0..ctx.ring_degree {
            // addition is exact in the ring, so the sums agree modulo Q
            let diff = (&da[i] + &db[i] - &d_sum[i]) % &q;
            assert!(diff.is_zero());
        }
    }

    #[test]
    fn oversized_messages_are_rejected() {
        // two levels ≈ 2^90 of modulus: Δ·‖m‖ with ‖m‖ = 2^63 − 1 leaves no
        // headroom, so the guard must fire
        let ctx = build_context(1 << 6, 2, 2, 50, 50, 45, 3.2, 16, 1).unwrap();
        let (_, pk) = keygen(&ctx, 19).unwrap();
        let mut m = vec![0i64; ctx.ring_degree];
        m[0] = i64::MAX;
        assert!(matches!(
            encrypt(&ctx, &pk, &m, 1),
            Err(Error::MessageTooLarge)
        ));
        m[0] = 1 << 12;
        assert!(encrypt(&ctx, &pk, &m, 1).is_ok());
    }

    #[test]
    fn prescaling_scales_only_the_q_components_once() {
        let ctx = ctx();
        let (sk, _) = keygen(&ctx, 23).unwrap();
        let eks = keygen_eval(&ctx, &sk, 3, 23).unwrap();
        let pre = eks.prescale(&ctx).unwrap();
        assert!(pre.pre_scaled);
        assert!(pre.prescale(&ctx).is_err());
        for (k, kp) in eks.keys.iter().zip(&pre.keys) {
            assert_eq!(k.ek0.p, kp.ek0.p);
            for j in 0..ctx.q.len() {
                assert_eq!(
                    kp.ek0.q[j],
                    k.ek0.q[j].mul_scalar(ctx.p_inv_mod_q[j])
                );
                assert_eq!(
                    kp.ek1.q[j],
                    k.ek1.q[j].mul_scalar(ctx.p_inv_mod_q[j])
                );
            }
        }
    }

    #[test]
    fn binary_roundtrips_preserve_all_material() {
        let ctx = ctx();
        let dir = std::env::temp_dir().join("mimult-key-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let (sk, pk) = keygen(&ctx, 29).unwrap();
        let eks = keygen_eval(&ctx, &sk, 4, 29).unwrap();
        let m: Vec<i64> = (0..ctx.ring_degree as i64).map(|i| i % 5 - 2).collect();
        let ct = encrypt(&ctx, &pk, &m, 31).unwrap();

        let sp = dir.join("k.seck");
        sk.save(&ctx, &sp).unwrap();
        assert_eq!(SecretKey::load(&ctx, &sp).unwrap(), sk);

        let pp = dir.join("k.pubk");
        pk.save(&ctx, &pp).unwrap();
        assert_eq!(PublicKey::load(&ctx, &pp).unwrap(), pk);

        let ep = dir.join("k.evks");
        eks.save(&ctx, &ep).unwrap();
        assert_eq!(EvalKeySet::load(&ctx, &ep).unwrap(), eks);

        let pre = eks.prescale(&ctx).unwrap();
        pre.save(&ctx, &ep).unwrap();
        let back = EvalKeySet::load(&ctx, &ep).unwrap();
        assert!(back.pre_scaled);
        assert_eq!(back, pre);

        let cp = dir.join("m.ctxt");
        ct.save(&cp).unwrap();
        assert_eq!(CiphertextTuple::load(&ctx, &cp).unwrap(), ct);

        // wrong magic is rejected
        assert!(PublicKey::load(&ctx, &sp).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let ctx = ctx();
        let dir = std::env::temp_dir().join("mimult-key-corrupt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let (sk, _) = keygen(&ctx, 37).unwrap();
        let sp = dir.join("k.seck");
        sk.save(&ctx, &sp).unwrap();
        let mut bytes = std::fs::read(&sp).unwrap();
        bytes[4] = 0xFF; // version
        std::fs::write(&sp, &bytes).unwrap();
        assert!(matches!(
            SecretKey::load(&ctx, &sp),
            Err(Error::FileFormat(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn gaussian_sampler_is_clamped_and_centered() {
        let mut rng = stream(1, "gauss");
        let sigma = 3.2f64;
        let bound = (6.0 * sigma).floor() as i64;
        let mut sum = 0i64;
        let mut count_nonzero = 0u64;
        for _ in 0..100_000 {
            let v = gaussian_rounded(&mut rng, sigma);
            assert!(v.abs() <= bound);
            sum += v;
            if v != 0 {
                count_nonzero += 1;
            }
        }
        // mean ≈ 0 within 5σ/√n; plenty of spread
        assert!((sum as f64 / 100_000.0).abs() < 0.1);
        assert!(count_nonzero > 80_000);
    }
}
