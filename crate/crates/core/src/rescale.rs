//! Rescaling: dividing an encrypted value by the top modulus (or the top μ
//! moduli at once) while dropping the corresponding components.
//!
//! The single-step variants differ only in where the transforms sit:
//! `rs_coeff` works entirely on coefficients and needs none, `rs_ntt` keeps
//! the ciphertext in the evaluation domain at the price of one inverse and
//! ℓ−1 forward transforms, and `rs_star` is the forward-transforming tail of
//! a coefficient-domain pipeline. `multi_rs` collapses μ consecutive
//! rescales into one pass that transforms each component exactly once —
//! μ inverse transforms for the dropped components, one forward transform
//! per surviving component — at the cost of extra scalar multiplications,
//! and produces bit-identical results to μ applications of `rs_ntt`.

use crate::context::Context;
use crate::cost::OpCounters;
use crate::error::{Error, Result};
use crate::ntt::{intt_in_place, ntt_in_place, CoeffVector, Domain};
use crate::poly::RnsPoly;

fn reduce_into(src: &CoeffVector, dst_mod: &std::sync::Arc<crate::zq::Modulus>) -> CoeffVector {
    CoeffVector::from_coeffs(
        src.coeffs.iter().map(|&v| dst_mod.reduce_u64(v)).collect(),
        dst_mod.clone(),
        src.domain,
    )
}

fn check_rescalable(x: &RnsPoly, ctx: &Context, domain: Domain) -> Result<usize> {
    if x.domain() != domain {
        return Err(Error::DomainMismatch { expected: domain.name() });
    }
    let l = x.level();
    ctx.level_basis(l)?;
    if l < 2 {
        return Err(Error::LevelTooLow);
    }
    Ok(l)
}

/// One rescale in the coefficient domain:
/// `out_j = [q_{ℓ−1}^{-1}·(x_j − [x^{(ℓ−1)}]_{q_j})]_{q_j}`. No transforms.
pub fn rs_coeff(x: &RnsPoly, ctx: &Context, ctr: &mut OpCounters) -> Result<RnsPoly> {
    let l = check_rescalable(x, ctx, Domain::Coefficient)?;
    let top = &x.comps[l - 1];
    let mut out = Vec::with_capacity(l - 1);
    for j in 0..l - 1 {
        let m = &ctx.q[j];
        let mut c = x.comps[j].sub(&reduce_into(top, m));
        ctr.modadd += 1;
        c.mul_scalar_assign(ctx.g_range(j, l - 1, l - 1));
        ctr.const_mul += 1;
        out.push(c);
    }
    Ok(RnsPoly { comps: out })
}

/// One rescale in the evaluation domain: the dropped component is inverse-
/// transformed, re-lifted into each surviving modulus, forward-transformed,
/// and divided out. Costs 1 INTT + (ℓ−1) NTT.
pub fn rs_ntt(x: &RnsPoly, ctx: &Context, ctr: &mut OpCounters) -> Result<RnsPoly> {
    let l = check_rescalable(x, ctx, Domain::Evaluation)?;
    let mut top = x.comps[l - 1].clone();
    intt_in_place(&top.modulus.clone(), &mut top.coeffs);
    top.domain = Domain::Coefficient;
    ctr.intt += 1;

    let mut out = Vec::with_capacity(l - 1);
    for j in 0..l - 1 {
        let m = &ctx.q[j];
        let mut lifted = reduce_into(&top, m);
        ntt_in_place(m, &mut lifted.coeffs);
        lifted.domain = Domain::Evaluation;
        ctr.ntt += 1;
        let mut c = x.comps[j].sub(&lifted);
        ctr.modadd += 1;
        c.mul_scalar_assign(ctx.g_range(j, l - 1, l - 1));
        ctr.const_mul += 1;
        out.push(c);
    }
    Ok(RnsPoly { comps: out })
}

/// Coefficient-domain rescale that hands back evaluation-domain components:
/// the forward transforms that a following multiplication would need anyway
/// are fused into the rescale. Costs (ℓ−1) NTT, no INTT.
pub fn rs_star(x: &RnsPoly, ctx: &Context, ctr: &mut OpCounters) -> Result<RnsPoly> {
    let rescaled = rs_coeff(x, ctx, ctr)?;
    let mut comps = rescaled.comps;
    for c in &mut comps {
        ntt_in_place(&c.modulus.clone(), &mut c.coeffs);
        c.domain = Domain::Evaluation;
        ctr.ntt += 1;
    }
    Ok(RnsPoly { comps })
}

/// μ consecutive rescales combined into a single pass, bit-identical to
/// applying [`rs_ntt`] μ times.
///
/// The dropped components are inverse-transformed once, then folded into
/// each other on coefficients (the same cascade the sequential rescales
/// would perform); each surviving component pays a single forward transform
/// and the precomputed divisor constants absorb the chained divisions:
///
/// `out^{(η)} = g_η·A^{(η)} − NTT(Σ_t g_η,t·ā^{(t)})`
///
/// with `g_η,t = [(q_{ℓ−μ}…q_t)^{-1}]_{q_η}` and `g_η = g_η,ℓ−1`.
/// Costs μ INTT + (ℓ−μ) NTT and (μ+1)ℓ − μ(μ+3)/2 scalar multiplications.
pub fn multi_rs(x: &RnsPoly, mu: usize, ctx: &Context, ctr: &mut OpCounters) -> Result<RnsPoly> {
    if x.domain() != Domain::Evaluation {
        return Err(Error::DomainMismatch { expected: "evaluation" });
    }
    let l = x.level();
    ctx.level_basis(l)?;
    if mu == 0 || mu >= l {
        return Err(Error::MuOutOfRange(mu, l.saturating_sub(1)));
    }
    let base = l - mu;

    // drop the top μ components to coefficients (one INTT each)
    let mut a: Vec<CoeffVector> = x.comps[base..]
        .iter()
        .map(|c| {
            let mut cc = c.clone();
            intt_in_place(&cc.modulus.clone(), &mut cc.coeffs);
            cc.domain = Domain::Coefficient;
            ctr.intt += 1;
            cc
        })
        .collect();

    // cascade the dropped components into each other: after stage u the
    // entry for q_t (t ≤ ℓ−1−u) carries the value a sequential pipeline
    // would hold there after u rescales
    for u in 1..mu {
        let top = a[l - u - base].clone(); // finalized in stage u−1
        for t in base..=(l - 1 - u) {
            let m = &ctx.q[t];
            let mut c = a[t - base].sub(&reduce_into(&top, m));
            ctr.modadd += 1;
            c.mul_scalar_assign(ctx.g_range(t, l - u, l - u));
            ctr.const_mul += 1;
            a[t - base] = c;
        }
    }

    // fold the cascade into each surviving component with one NTT apiece
    let mut out = Vec::with_capacity(base);
    for eta in 0..base {
        let m = &ctx.q[eta];
        let mut b = CoeffVector::zero(m.clone(), Domain::Coefficient);
        for t in base..l {
            let term = reduce_into(&a[t - base], m).mul_scalar(ctx.g_range(eta, base, t));
            ctr.const_mul += 1;
            b.add_assign(&term);
            ctr.modadd += 1;
        }
        ntt_in_place(m, &mut b.coeffs);
        b.domain = Domain::Evaluation;
        ctr.ntt += 1;
        let mut c = x.comps[eta].mul_scalar(ctx.g_range(eta, base, l - 1));
        ctr.const_mul += 1;
        c.sub_assign(&b);
        ctr.modadd += 1;
        out.push(c);
    }
    Ok(RnsPoly { comps: out })
}

/// Scalar-multiplication count of [`multi_rs`] at level ℓ with μ steps.
pub fn multi_rs_const_mul_count(l: usize, mu: usize) -> u64 {
    ((l - mu) * (mu + 1) + mu * (mu - 1) / 2) as u64
}
