//! Basis conversion and modulus switching.
//!
//! The fast conversion computes, for each target modulus,
//! `Σ_j [x_j · q̂_j^{-1}]_{q_j} · q̂_j mod t` — the CRT value of `x` plus an
//! unknown multiple α·Q of the source product, 0 ≤ α < (source length).
//! ModUp and ModDown wrap the conversion with the transforms needed to move
//! between evaluation-domain ciphertext components and coefficient-domain
//! conversion inputs; the fused ModDown variant pulls a pending addition
//! inside the inverse transform so the addend never needs its own.

use crate::context::{Context, RnsBasis};
use crate::cost::OpCounters;
use crate::error::{Error, Result};
use crate::ntt::{intt_in_place, ntt_in_place, CoeffVector, Domain};
use crate::poly::{ExtendedPoly, RnsPoly};

fn check_coefficient(x: &[CoeffVector]) -> Result<()> {
    for c in x {
        if c.domain != Domain::Coefficient {
            return Err(Error::DomainMismatch { expected: "coefficient" });
        }
    }
    Ok(())
}

/// Fast conversion of `x` (residues over `src`) onto the `dst` moduli, which
/// must be a prefix of the chain `src` was built against.
pub fn bconv(
    x: &[CoeffVector],
    src: &RnsBasis,
    dst: &[std::sync::Arc<crate::zq::Modulus>],
    ctr: &mut OpCounters,
) -> Result<Vec<CoeffVector>> {
    if x.len() != src.len() {
        return Err(Error::ModulusMismatch);
    }
    check_coefficient(x)?;
    if dst.len() > src.targets.len() {
        return Err(Error::ModulusMismatch);
    }
    for (d, t) in dst.iter().zip(&src.targets) {
        if d.value != t.value {
            return Err(Error::ModulusMismatch);
        }
    }
    for (c, m) in x.iter().zip(&src.moduli) {
        if c.modulus.value != m.value {
            return Err(Error::ModulusMismatch);
        }
    }
    ctr.bconv += 1;

    let n = x[0].coeffs.len();
    // fold: y_j = [x_j · q̂_j^{-1}]_{q_j}
    let y: Vec<Vec<u64>> = x
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let m = &src.moduli[j];
            let f = src.qhat_inv[j];
            c.coeffs.iter().map(|&v| m.mul(v, f)).collect()
        })
        .collect();

    let mut out = Vec::with_capacity(dst.len());
    for (i, t) in dst.iter().enumerate() {
        let mut coeffs = vec![0u64; n];
        for (j, yj) in y.iter().enumerate() {
            let qhat = src.qhat_mod_other[j][i];
            for (acc, &v) in coeffs.iter_mut().zip(yj) {
                // residues from a foreign modulus may exceed t; reduce first
                *acc = t.add(*acc, t.mul(t.reduce_u64(v), qhat));
            }
        }
        out.push(CoeffVector::from_coeffs(coeffs, t.clone(), Domain::Coefficient));
    }
    Ok(out)
}

/// Conversion from P onto q_0…q_{level−1} with the P^{-1} scaling folded into
/// the constants: `Σ_i [x_i · p̂_i^{-1}]_{p_i} · [p_i^{-1}]_{q_j}`.
/// Bit-identical to `p_inv_mod_q[j] · bconv(x)[j]`.
pub fn sc_bconv(
    x: &[CoeffVector],
    ctx: &Context,
    level: usize,
    ctr: &mut OpCounters,
) -> Result<Vec<CoeffVector>> {
    if x.len() != ctx.p.len() {
        return Err(Error::ModulusMismatch);
    }
    ctx.level_basis(level)?;
    check_coefficient(x)?;
    for (c, m) in x.iter().zip(&ctx.p) {
        if c.modulus.value != m.value {
            return Err(Error::ModulusMismatch);
        }
    }
    ctr.bconv += 1;

    let n = x[0].coeffs.len();
    let y: Vec<Vec<u64>> = x
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let m = &ctx.p[i];
            let f = ctx.p_basis.qhat_inv[i];
            c.coeffs.iter().map(|&v| m.mul(v, f)).collect()
        })
        .collect();

    let mut out = Vec::with_capacity(level);
    for (j, t) in ctx.q[..level].iter().enumerate() {
        let mut coeffs = vec![0u64; n];
        for (i, yi) in y.iter().enumerate() {
            let fold = ctx.p_i_inv_mod_q[i][j];
            for (acc, &v) in coeffs.iter_mut().zip(yi) {
                *acc = t.add(*acc, t.mul(t.reduce_u64(v), fold));
            }
        }
        out.push(CoeffVector::from_coeffs(coeffs, t.clone(), Domain::Coefficient));
    }
    Ok(out)
}

/// Extends a level-ℓ evaluation-domain polynomial onto P ∪ Q_ℓ.
/// The Q-components pass through untouched; the P-components are
/// NTT(bconv(INTT(x))). Costs ℓ INTT + K NTT + one conversion block.
pub fn mod_up(x: &RnsPoly, ctx: &Context, ctr: &mut OpCounters) -> Result<ExtendedPoly> {
    if x.domain() != Domain::Evaluation {
        return Err(Error::DomainMismatch { expected: "evaluation" });
    }
    let level = x.level();
    let basis = ctx.level_basis(level)?;

    let mut coeff_side = x.comps.clone();
    for c in &mut coeff_side {
        intt_in_place(&c.modulus.clone(), &mut c.coeffs);
        c.domain = Domain::Coefficient;
        ctr.intt += 1;
    }
    let mut p_side = bconv(&coeff_side, basis, &ctx.p, ctr)?;
    for c in &mut p_side {
        ntt_in_place(&c.modulus.clone(), &mut c.coeffs);
        c.domain = Domain::Evaluation;
        ctr.ntt += 1;
    }
    Ok(ExtendedPoly { p: p_side, q: x.comps.clone() })
}

/// Divides an extended polynomial by P: `[P^{-1}(x^{(K+j)} − conv_j)]_{q_j}`,
/// where `conv` is the fast conversion of the P-components onto Q_ℓ. The
/// result differs from the exact ⌊x/P⌉ by at most K per coefficient.
/// Costs (K+ℓ) INTT + one conversion block, plus ℓ NTT when evaluation-domain
/// output is requested.
pub fn mod_down(
    x: &ExtendedPoly,
    ctx: &Context,
    out_domain: Domain,
    ctr: &mut OpCounters,
) -> Result<RnsPoly> {
    if x.domain() != Domain::Evaluation {
        return Err(Error::DomainMismatch { expected: "evaluation" });
    }
    let level = x.level();
    ctx.level_basis(level)?;

    let mut p_coeff = x.p.clone();
    for c in &mut p_coeff {
        intt_in_place(&c.modulus.clone(), &mut c.coeffs);
        c.domain = Domain::Coefficient;
        ctr.intt += 1;
    }
    let conv = bconv(&p_coeff, &ctx.p_basis, &ctx.q[..level], ctr)?;

    let mut out = Vec::with_capacity(level);
    for (j, comp) in x.q.iter().enumerate() {
        let m = comp.modulus.clone();
        let mut c = comp.clone();
        intt_in_place(&m, &mut c.coeffs);
        c.domain = Domain::Coefficient;
        ctr.intt += 1;
        c.sub_assign(&conv[j]);
        ctr.modadd += 1;
        c.mul_scalar_assign(ctx.p_inv_mod_q[j]);
        ctr.const_mul += 1;
        if out_domain == Domain::Evaluation {
            ntt_in_place(&m, &mut c.coeffs);
            c.domain = Domain::Evaluation;
            ctr.ntt += 1;
        }
        out.push(c);
    }
    Ok(RnsPoly { comps: out })
}

/// ModDown with a pending addition folded in front of the inverse transform:
/// returns, in the coefficient domain, exactly
/// `INTT(addend) + mod_down(x, Coefficient)` while still spending only
/// (K+ℓ) INTT — the addend is absorbed into the transforms the division
/// already pays for.
///
/// With `q_prescaled` set, the Q-components of `x` are taken to carry the
/// P^{-1} factor already (pre-scaled evaluation keys) and the per-component
/// scalar multiply is skipped.
pub fn mod_down_fused(
    x: &ExtendedPoly,
    addend: &RnsPoly,
    ctx: &Context,
    q_prescaled: bool,
    ctr: &mut OpCounters,
) -> Result<RnsPoly> {
    if x.domain() != Domain::Evaluation || addend.domain() != Domain::Evaluation {
        return Err(Error::DomainMismatch { expected: "evaluation" });
    }
    let level = x.level();
    if addend.level() != level {
        return Err(Error::LevelMismatch);
    }
    ctx.level_basis(level)?;

    let mut p_coeff = x.p.clone();
    for c in &mut p_coeff {
        intt_in_place(&c.modulus.clone(), &mut c.coeffs);
        c.domain = Domain::Coefficient;
        ctr.intt += 1;
    }
    let conv = sc_bconv(&p_coeff, ctx, level, ctr)?;

    let mut out = Vec::with_capacity(level);
    for (j, comp) in x.q.iter().enumerate() {
        let m = comp.modulus.clone();
        // D + P^{-1}·X over q_j, still in the evaluation domain
        let mut c = if q_prescaled {
            comp.clone()
        } else {
            ctr.const_mul += 1;
            comp.mul_scalar(ctx.p_inv_mod_q[j])
        };
        c.add_assign(&addend.comps[j]);
        ctr.modadd += 1;
        intt_in_place(&m, &mut c.coeffs);
        c.domain = Domain::Coefficient;
        ctr.intt += 1;
        c.sub_assign(&conv[j]);
        ctr.modadd += 1;
        out.push(c);
    }
    Ok(RnsPoly { comps: out })
}
