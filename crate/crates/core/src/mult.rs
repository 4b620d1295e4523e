//! Multi-input ciphertext multiplication: tuple products, generalized
//! relinearization, and plan-driven execution.
//!
//! A product of T-tuples is itself a tuple decrypting to the same message
//! product under Σ d_t·s^t, so relinearization can be deferred: tuples grow
//! through the tree and only the root pays for key switching, using one
//! generalized key per secret power. The three relinearization paths differ
//! in where the basis-division happens:
//!
//! * `Classic`  — divide each key product separately, then sum.
//! * `Fused`    — sum the key products over the extended basis first, then
//!   divide twice (once per output row).
//! * `Improved` — like `Fused`, but the division absorbs the pending d₀/d₁
//!   addition and stays in the coefficient domain so the following rescale
//!   needs no inverse transforms.

use crate::context::Context;
use crate::cost::{OpCounters, StageMeter};
use crate::error::{Error, Result};
use crate::keys::{CiphertextTuple, EvalKeySet};
use crate::ntt::Domain;
use crate::plan::{depth_of, PlanNode};
use crate::poly::{ExtendedPoly, RnsPoly};
use crate::rescale::{multi_rs, rs_coeff, rs_ntt, rs_star};
use crate::switch::{mod_down, mod_down_fused, mod_up};

/// Where the relinearization divides by the auxiliary modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelinMode {
    Classic,
    Fused,
    Improved,
}

fn check_product_operands(ops: &[&CiphertextTuple], ctx: &Context) -> Result<(usize, usize)> {
    if ops.len() < 2 {
        return Err(Error::EmptyOperands);
    }
    let level = ops[0].level;
    ctx.level_basis(level)?;
    for ct in ops {
        if ct.level != level {
            return Err(Error::LevelMismatch);
        }
        if ct.domain != Domain::Evaluation {
            return Err(Error::DomainMismatch { expected: "evaluation" });
        }
    }
    let out_size = ops.iter().map(|ct| ct.tuple_size() - 1).sum::<usize>() + 1;
    Ok((level, out_size))
}

/// Pairwise tuple product with the three-multiplication shortcut:
/// d₀ = a₀b₀, d₂ = a₁b₁, d₁ = (a₀+a₁)(b₀+b₁) − d₀ − d₂.
/// Falls back to the full convolution for larger tuples.
pub fn pm_2(
    a: &CiphertextTuple,
    b: &CiphertextTuple,
    ctx: &Context,
    ctr: &mut OpCounters,
) -> Result<CiphertextTuple> {
    let (level, out_size) = check_product_operands(&[a, b], ctx)?;
    let l = level as u64;
    let polys = if a.tuple_size() == 2 && b.tuple_size() == 2 {
        let d0 = a.polys[0].mul_pointwise(&b.polys[0])?;
        let d2 = a.polys[1].mul_pointwise(&b.polys[1])?;
        let cross = a.polys[0]
            .add(&a.polys[1])?
            .mul_pointwise(&b.polys[0].add(&b.polys[1])?)?;
        ctr.modmul += 3 * l;
        ctr.modadd += 4 * l;
        let d1 = cross.sub(&d0)?.sub(&d2)?;
        vec![d0, d1, d2]
    } else {
        let mut polys = vec![RnsPoly::zero(ctx, level, Domain::Evaluation)?; out_size];
        for (i, pa) in a.polys.iter().enumerate() {
            for (j, pb) in b.polys.iter().enumerate() {
                polys[i + j] = polys[i + j].add(&pa.mul_pointwise(pb)?)?;
                ctr.modmul += l;
                ctr.modadd += l;
            }
        }
        polys
    };
    Ok(CiphertextTuple {
        polys,
        level,
        scale_exp: a.scale_exp + b.scale_exp,
        domain: Domain::Evaluation,
    })
}

/// Three-input tuple product, written out as the four coefficient sums of
/// (c₀¹ + c₁¹s)(c₀² + c₁²s)(c₀³ + c₁³s). Bit-identical to folding
/// [`pm_2`] twice, but evaluated monomial by monomial.
pub fn pm_3(
    a: &CiphertextTuple,
    b: &CiphertextTuple,
    c: &CiphertextTuple,
    ctx: &Context,
    ctr: &mut OpCounters,
) -> Result<CiphertextTuple> {
    let (level, _) = check_product_operands(&[a, b, c], ctx)?;
    for ct in [a, b, c] {
        if ct.tuple_size() != 2 {
            return Err(Error::Parameter(
                "the three-input product takes fresh two-row tuples".into(),
            ));
        }
    }
    let l = level as u64;
    let trip = |i: usize, j: usize, k: usize, ctr: &mut OpCounters| -> Result<RnsPoly> {
        ctr.modmul += 2 * l;
        a.polys[i]
            .mul_pointwise(&b.polys[j])?
            .mul_pointwise(&c.polys[k])
    };
    let d0 = trip(0, 0, 0, ctr)?;
    let d1 = trip(1, 0, 0, ctr)?
        .add(&trip(0, 1, 0, ctr)?)?
        .add(&trip(0, 0, 1, ctr)?)?;
    let d2 = trip(1, 1, 0, ctr)?
        .add(&trip(1, 0, 1, ctr)?)?
        .add(&trip(0, 1, 1, ctr)?)?;
    let d3 = trip(1, 1, 1, ctr)?;
    ctr.modadd += 4 * l;
    Ok(CiphertextTuple {
        polys: vec![d0, d1, d2, d3],
        level,
        scale_exp: a.scale_exp + b.scale_exp + c.scale_exp,
        domain: Domain::Evaluation,
    })
}

/// Product of any number of tuples: a left fold of pairwise products.
/// Output size is Σ(Tᵤ − 1) + 1 and the scale exponents add.
pub fn pm_tuple(
    ops: &[&CiphertextTuple],
    ctx: &Context,
    ctr: &mut OpCounters,
) -> Result<CiphertextTuple> {
    check_product_operands(ops, ctx)?;
    let mut acc = ops[0].clone();
    for ct in &ops[1..] {
        acc = pm_2(&acc, ct, ctx, ctr)?;
    }
    Ok(acc)
}

/// Drops residues so the tuple lives at `target` (a lower or equal level).
pub fn level_align(ct: &CiphertextTuple, target: usize) -> Result<CiphertextTuple> {
    if target > ct.level {
        return Err(Error::LevelOutOfRange(target, ct.level));
    }
    if target == ct.level {
        return Ok(ct.clone());
    }
    Ok(CiphertextTuple {
        polys: ct
            .polys
            .iter()
            .map(|p| p.truncate_level(target))
            .collect::<Result<_>>()?,
        level: target,
        scale_exp: ct.scale_exp,
        domain: ct.domain,
    })
}

fn key_rows_at_level(
    eks: &EvalKeySet,
    t: usize,
    level: usize,
) -> Result<(ExtendedPoly, ExtendedPoly)> {
    let ek = eks.key_for(t)?;
    let cut = |x: &ExtendedPoly| ExtendedPoly {
        p: x.p.clone(),
        q: x.q[..level].to_vec(),
    };
    Ok((cut(&ek.ek0), cut(&ek.ek1)))
}

/// Folds a T-row tuple back to two rows using the generalized keys for
/// s², …, s^{T−1}. The scale exponent is untouched; two-row inputs pass
/// through unchanged. `Classic` and `Fused` hand back evaluation-domain
/// rows; `Improved` hands back coefficient-domain rows (its division runs
/// behind the inverse transforms, so none are spent re-entering the
/// evaluation domain — the next rescale continues on coefficients).
pub fn relinearize(
    ct: &CiphertextTuple,
    eks: &EvalKeySet,
    ctx: &Context,
    mode: RelinMode,
    ctr: &mut OpCounters,
) -> Result<CiphertextTuple> {
    if ct.domain != Domain::Evaluation {
        return Err(Error::DomainMismatch { expected: "evaluation" });
    }
    if ct.tuple_size() == 2 {
        return Ok(ct.clone());
    }
    if eks.pre_scaled && mode != RelinMode::Improved {
        return Err(Error::Parameter(
            "pre-scaled keys fold the divisor in; only the fused-division path can consume them"
                .into(),
        ));
    }
    let level = ct.level;
    let k = ctx.aux_count() as u64;
    let t_size = ct.tuple_size();

    let (out0, out1, domain) = match mode {
        RelinMode::Classic => {
            let mut acc0 = ct.polys[0].clone();
            let mut acc1 = ct.polys[1].clone();
            for t in 2..t_size {
                let (ek0, ek1) = key_rows_at_level(eks, t, level)?;
                let x = mod_up(&ct.polys[t], ctx, ctr)?;
                let prod0 = x.mul_pointwise(&ek0)?;
                let prod1 = x.mul_pointwise(&ek1)?;
                ctr.modmul += 2 * (k + level as u64);
                acc0 = acc0.add(&mod_down(&prod0, ctx, Domain::Evaluation, ctr)?)?;
                acc1 = acc1.add(&mod_down(&prod1, ctx, Domain::Evaluation, ctr)?)?;
                ctr.modadd += 2 * level as u64;
            }
            (acc0, acc1, Domain::Evaluation)
        }
        RelinMode::Fused | RelinMode::Improved => {
            let mut acc0: Option<ExtendedPoly> = None;
            let mut acc1: Option<ExtendedPoly> = None;
            for t in 2..t_size {
                let (ek0, ek1) = key_rows_at_level(eks, t, level)?;
                let x = mod_up(&ct.polys[t], ctx, ctr)?;
                let prod0 = x.mul_pointwise(&ek0)?;
                let prod1 = x.mul_pointwise(&ek1)?;
                ctr.modmul += 2 * (k + level as u64);
                acc0 = Some(match acc0 {
                    None => prod0,
                    Some(a) => {
                        ctr.modadd += k + level as u64;
                        a.add(&prod0)?
                    }
                });
                acc1 = Some(match acc1 {
                    None => prod1,
                    Some(a) => {
                        ctr.modadd += k + level as u64;
                        a.add(&prod1)?
                    }
                });
            }
            let acc0 = acc0.expect("tuple has at least three rows");
            let acc1 = acc1.expect("tuple has at least three rows");
            if mode == RelinMode::Fused {
                let y0 = mod_down(&acc0, ctx, Domain::Evaluation, ctr)?;
                let y1 = mod_down(&acc1, ctx, Domain::Evaluation, ctr)?;
                ctr.modadd += 2 * level as u64;
                (
                    ct.polys[0].add(&y0)?,
                    ct.polys[1].add(&y1)?,
                    Domain::Evaluation,
                )
            } else {
                let y0 = mod_down_fused(&acc0, &ct.polys[0], ctx, eks.pre_scaled, ctr)?;
                let y1 = mod_down_fused(&acc1, &ct.polys[1], ctx, eks.pre_scaled, ctr)?;
                (y0, y1, Domain::Coefficient)
            }
        }
    };
    Ok(CiphertextTuple {
        polys: vec![out0, out1],
        level,
        scale_exp: ct.scale_exp,
        domain,
    })
}

/// Brings every row of an evaluation-domain tuple down `mu` levels in one
/// combined pass per row, dividing the scale exponent back down with it.
pub fn rescale_tuple(
    ct: &CiphertextTuple,
    mu: usize,
    ctx: &Context,
    ctr: &mut OpCounters,
) -> Result<CiphertextTuple> {
    if ct.scale_exp as usize <= mu {
        return Err(Error::Parameter(format!(
            "rescaling {mu} levels needs scale exponent > {mu}, have {}",
            ct.scale_exp
        )));
    }
    let polys: Vec<RnsPoly> = ct
        .polys
        .iter()
        .map(|p| multi_rs(p, mu, ctx, ctr))
        .collect::<Result<_>>()?;
    Ok(CiphertextTuple {
        polys,
        level: ct.level - mu,
        scale_exp: ct.scale_exp - mu as u32,
        domain: Domain::Evaluation,
    })
}

/// The coefficient-domain counterpart: μ−1 transform-free rescales per row,
/// then one that re-enters the evaluation domain on its way out. Takes the
/// coefficient-domain rows the fused-division relinearization produces.
pub fn rescale_tuple_coeff(
    ct: &CiphertextTuple,
    mu: usize,
    ctx: &Context,
    ctr: &mut OpCounters,
) -> Result<CiphertextTuple> {
    if ct.domain != Domain::Coefficient {
        return Err(Error::DomainMismatch { expected: "coefficient" });
    }
    if mu == 0 || ct.scale_exp as usize <= mu {
        return Err(Error::Parameter(format!(
            "rescaling {mu} levels needs scale exponent > {mu}, have {}",
            ct.scale_exp
        )));
    }
    let polys: Vec<RnsPoly> = ct
        .polys
        .iter()
        .map(|p| {
            let mut cur = p.clone();
            for _ in 0..mu - 1 {
                cur = rs_coeff(&cur, ctx, ctr)?;
            }
            rs_star(&cur, ctx, ctr)
        })
        .collect::<Result<_>>()?;
    Ok(CiphertextTuple {
        polys,
        level: ct.level - mu,
        scale_exp: ct.scale_exp - mu as u32,
        domain: Domain::Evaluation,
    })
}

/// Three-input multiplication with the fused-division relinearization and
/// coefficient-domain rescaling: tuple product, one relinearization, and a
/// two-level rescale per output row, re-entering the evaluation domain only
/// at the very end.
pub fn mult3_improved(
    a: &CiphertextTuple,
    b: &CiphertextTuple,
    c: &CiphertextTuple,
    eks: &EvalKeySet,
    ctx: &Context,
    meter: &mut StageMeter,
) -> Result<CiphertextTuple> {
    if a.level < 3 {
        return Err(Error::MuOutOfRange(2, a.level.saturating_sub(1)));
    }
    let prod = pm_3(a, b, c, ctx, &mut meter.pm)?;
    let rl = relinearize(&prod, eks, ctx, RelinMode::Improved, &mut meter.relin)?;
    rescale_tuple_coeff(&rl, 2, ctx, &mut meter.rs)
}

/// Three-input multiplication the way a stock pipeline runs it: tuple
/// product, relinearization with the division summed over the extended
/// basis, then two separate evaluation-domain rescales per output row.
pub fn mult3_prior(
    a: &CiphertextTuple,
    b: &CiphertextTuple,
    c: &CiphertextTuple,
    eks: &EvalKeySet,
    ctx: &Context,
    meter: &mut StageMeter,
) -> Result<CiphertextTuple> {
    if a.level < 3 {
        return Err(Error::MuOutOfRange(2, a.level.saturating_sub(1)));
    }
    let prod = pm_3(a, b, c, ctx, &mut meter.pm)?;
    let rl = relinearize(&prod, eks, ctx, RelinMode::Fused, &mut meter.relin)?;
    let polys: Vec<RnsPoly> = rl
        .polys
        .iter()
        .map(|p| rs_ntt(&rs_ntt(p, ctx, &mut meter.rs)?, ctx, &mut meter.rs))
        .collect::<Result<_>>()?;
    Ok(CiphertextTuple {
        polys,
        level: rl.level - 2,
        scale_exp: rl.scale_exp - 2,
        domain: Domain::Evaluation,
    })
}

fn check_fresh_inputs(cts: &[CiphertextTuple]) -> Result<usize> {
    let mut min_level = usize::MAX;
    for ct in cts {
        if ct.tuple_size() != 2 || ct.scale_exp != 1 {
            return Err(Error::Parameter(
                "plan inputs must be fresh two-row, scale-1 ciphertexts".into(),
            ));
        }
        if ct.domain != Domain::Evaluation {
            return Err(Error::DomainMismatch { expected: "evaluation" });
        }
        min_level = min_level.min(ct.level);
    }
    Ok(min_level)
}

/// The tuple product a subtree feeds upward, before its own rescaling.
/// Inputs are consumed left to right. `entry` is the node's scheduled
/// level: operands are dropped to it before any transform runs, so a group
/// off the critical path does all of its work at its deepest sibling's
/// level (dropping residues is free; everything after is cheaper).
fn subtree_product(
    node: &PlanNode,
    entry: usize,
    inputs: &[CiphertextTuple],
    next: &mut usize,
    ctx: &Context,
    meter: &mut StageMeter,
) -> Result<CiphertextTuple> {
    match node {
        PlanNode::Leaf(g) => {
            let ops: Vec<CiphertextTuple> = inputs[*next..*next + g]
                .iter()
                .map(|ct| level_align(ct, entry))
                .collect::<Result<_>>()?;
            *next += g;
            if *g == 1 {
                return Ok(ops.into_iter().next().unwrap());
            }
            let ops: Vec<&CiphertextTuple> = ops.iter().collect();
            pm_tuple(&ops, ctx, &mut meter.pm)
        }
        PlanNode::Node(ch) => {
            let results: Vec<CiphertextTuple> = ch
                .iter()
                .map(|c| subtree_output(c, entry, inputs, next, ctx, meter))
                .collect::<Result<_>>()?;
            debug_assert!(results.iter().all(|r| r.level == entry));
            let ops: Vec<&CiphertextTuple> = results.iter().collect();
            pm_tuple(&ops, ctx, &mut meter.pm)
        }
    }
}

/// A non-root subtree's scale-1 output at exactly `out_level`: its product,
/// rescaled by the levels it multiplied together.
fn subtree_output(
    node: &PlanNode,
    out_level: usize,
    inputs: &[CiphertextTuple],
    next: &mut usize,
    ctx: &Context,
    meter: &mut StageMeter,
) -> Result<CiphertextTuple> {
    let mu = node.rescale_mu();
    let product = subtree_product(node, out_level + mu, inputs, next, ctx, meter)?;
    match mu {
        0 => Ok(product), // pass-through input
        mu => rescale_tuple(&product, mu, ctx, &mut meter.rs),
    }
}

/// Runs a partition plan over fresh ciphertexts: leaf groups multiply raw
/// inputs, inner nodes multiply their children's outputs, and every node
/// rescales each row of its output in one combined pass. Only the root is
/// relinearized — tuples grow until then — so the key set must reach the
/// root tuple size. The output sits `depth_of(plan)` levels below the
/// inputs at scale 1.
pub fn mult_n(
    plan: &PlanNode,
    cts: &[CiphertextTuple],
    eks: &EvalKeySet,
    ctx: &Context,
    mode: RelinMode,
    meter: &mut StageMeter,
) -> Result<CiphertextTuple> {
    plan.validate()?;
    let n = plan.input_count();
    if n != cts.len() {
        return Err(Error::PlanArityMismatch { expected: n, got: cts.len() });
    }
    if n < 2 {
        return Err(Error::Parameter("a plan needs at least two inputs".into()));
    }
    let top = plan.tuple_size() - 1;
    if eks.max_t < top {
        return Err(Error::MissingEvalKey(top));
    }
    let level = check_fresh_inputs(cts)?;
    let depth = depth_of(plan);
    if depth + 1 > level {
        return Err(Error::DepthBudgetExceeded {
            needed: depth,
            budget: level.saturating_sub(1),
        });
    }
    let inputs: Vec<CiphertextTuple> = cts
        .iter()
        .map(|ct| level_align(ct, level))
        .collect::<Result<_>>()?;

    let mut next = 0usize;
    let entry = level - plan.child_depth();
    let product = subtree_product(plan, entry, &inputs, &mut next, ctx, meter)?;
    debug_assert_eq!(next, n);
    let rl = relinearize(&product, eks, ctx, mode, &mut meter.relin)?;
    let mu_root = rl.scale_exp as usize - 1;
    match mode {
        RelinMode::Improved => rescale_tuple_coeff(&rl, mu_root, ctx, &mut meter.rs),
        RelinMode::Classic | RelinMode::Fused => rescale_tuple(&rl, mu_root, ctx, &mut meter.rs),
    }
}

/// The conventional execution: a balanced tree of complete two-input
/// multipliers (product, relinearization with the s² key, one rescale at
/// every node). Used as the reference point for noise and cost comparisons.
pub fn mult_pairwise_tree(
    cts: &[CiphertextTuple],
    eks: &EvalKeySet,
    ctx: &Context,
    mode: RelinMode,
    meter: &mut StageMeter,
) -> Result<CiphertextTuple> {
    if cts.len() < 2 {
        return Err(Error::EmptyOperands);
    }
    let level = check_fresh_inputs(cts)?;
    let mut layer: Vec<CiphertextTuple> = cts
        .iter()
        .map(|ct| level_align(ct, level))
        .collect::<Result<_>>()?;
    while layer.len() > 1 {
        let mut out = Vec::with_capacity(layer.len().div_ceil(2));
        for pair in layer.chunks(2) {
            if pair.len() == 1 {
                out.push(pair[0].clone());
                continue;
            }
            let floor = pair[0].level.min(pair[1].level);
            if floor < 2 {
                return Err(Error::LevelTooLow);
            }
            let a = level_align(&pair[0], floor)?;
            let b = level_align(&pair[1], floor)?;
            let prod = pm_2(&a, &b, ctx, &mut meter.pm)?;
            let rl = relinearize(&prod, eks, ctx, mode, &mut meter.relin)?;
            let rs = match mode {
                RelinMode::Improved => rescale_tuple_coeff(&rl, 1, ctx, &mut meter.rs)?,
                _ => rescale_tuple(&rl, 1, ctx, &mut meter.rs)?,
            };
            out.push(rs);
        }
        layer = out;
    }
    Ok(layer.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::build_context;
    use crate::keys::{encrypt, keygen, keygen_eval, product_noise_log2};
    use crate::ntt::intt_in_place;
    use crate::plan::{baseline_binary_plan, cost_of, plan_from_string};
    use num_bigint::BigInt;
    use num_traits::Signed;
    use rand::{RngCore, SeedableRng};

    fn ctx_n(levels: usize) -> Context {
        build_context(1 << 6, levels, levels, 50, 50, 45, 3.2, 16, 1).unwrap()
    }

    /// Sparse, small messages keep product noise far below the scale even
    /// for seven-way products at this tiny ring degree.
    fn small_messages(rng: &mut impl RngCore, n: usize, count: usize) -> Vec<Vec<i64>> {
        (0..count)
            .map(|_| {
                let mut m = vec![0i64; n];
                for _ in 0..4 {
                    let pos = (rng.next_u64() as usize) % n;
                    m[pos] = [1, -1, 2, -2][(rng.next_u64() as usize) % 4];
                }
                m
            })
            .collect()
    }

    struct Fixture {
        ctx: Context,
        sk: crate::keys::SecretKey,
        eks: EvalKeySet,
        cts: Vec<CiphertextTuple>,
        msgs: Vec<Vec<i64>>,
    }

    fn fixture(levels: usize, max_t: usize, count: usize, seed: u64) -> Fixture {
        let ctx = ctx_n(levels);
        let (sk, pk) = keygen(&ctx, seed).unwrap();
        let eks = keygen_eval(&ctx, &sk, max_t, seed).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x5eed);
        let msgs = small_messages(&mut rng, ctx.ring_degree, count);
        let cts = msgs
            .iter()
            .enumerate()
            .map(|(i, m)| encrypt(&ctx, &pk, m, seed + 100 + i as u64).unwrap())
            .collect();
        Fixture { ctx, sk, eks, cts, msgs }
    }

    fn noise_ok(f: &Fixture, ct: &CiphertextTuple, used: &[Vec<i64>]) {
        let noise = product_noise_log2(&f.ctx, &f.sk, ct, used).unwrap();
        // far under the 45-bit scale
        assert!(noise < 40.0, "noise 2^{noise} too large");
    }

    #[test]
    fn karatsuba_product_matches_schoolbook() {
        let f = fixture(4, 3, 2, 11);
        let (a, b) = (&f.cts[0], &f.cts[1]);
        let mut ctr = OpCounters::new();
        let fast = pm_2(a, b, &f.ctx, &mut ctr).unwrap();
        let d0 = a.polys[0].mul_pointwise(&b.polys[0]).unwrap();
        let d1 = a.polys[0]
            .mul_pointwise(&b.polys[1])
            .unwrap()
            .add(&a.polys[1].mul_pointwise(&b.polys[0]).unwrap())
            .unwrap();
        let d2 = a.polys[1].mul_pointwise(&b.polys[1]).unwrap();
        assert_eq!(fast.polys, vec![d0, d1, d2]);
        assert_eq!(fast.scale_exp, 2);
        assert_eq!(ctr.modmul, 3 * 4); // three products, four components
    }

    #[test]
    fn product_with_plaintext_one_passes_through() {
        let f = fixture(4, 3, 1, 12);
        let a = &f.cts[0];
        let one = {
            let mut p0 = RnsPoly::zero(&f.ctx, a.level, Domain::Evaluation).unwrap();
            for c in &mut p0.comps {
                c.coeffs.fill(1); // the constant 1 evaluates to 1 everywhere
            }
            CiphertextTuple {
                polys: vec![p0, RnsPoly::zero(&f.ctx, a.level, Domain::Evaluation).unwrap()],
                level: a.level,
                scale_exp: 0,
                domain: Domain::Evaluation,
            }
        };
        let mut ctr = OpCounters::new();
        let out = pm_2(a, &one, &f.ctx, &mut ctr).unwrap();
        assert_eq!(out.polys[0], a.polys[0]);
        assert_eq!(out.polys[1], a.polys[1]);
        assert!(out.polys[2].is_zero());
        assert_eq!(out.scale_exp, 1);
    }

    #[test]
    fn three_input_product_equals_folded_pairs() {
        let f = fixture(4, 3, 3, 13);
        let mut c1 = OpCounters::new();
        let mut c2 = OpCounters::new();
        let direct = pm_3(&f.cts[0], &f.cts[1], &f.cts[2], &f.ctx, &mut c1).unwrap();
        let folded = pm_tuple(&[&f.cts[0], &f.cts[1], &f.cts[2]], &f.ctx, &mut c2).unwrap();
        assert_eq!(direct, folded);
        assert_eq!(direct.tuple_size(), 4);
        assert_eq!(direct.scale_exp, 3);
    }

    #[test]
    fn tuple_product_rejects_degenerate_operand_lists() {
        let f = fixture(4, 3, 1, 14);
        let mut ctr = OpCounters::new();
        assert!(matches!(
            pm_tuple(&[], &f.ctx, &mut ctr),
            Err(Error::EmptyOperands)
        ));
        assert!(matches!(
            pm_tuple(&[&f.cts[0]], &f.ctx, &mut ctr),
            Err(Error::EmptyOperands)
        ));
    }

    #[test]
    fn relinearized_product_still_decrypts_in_every_mode() {
        let f = fixture(5, 4, 3, 15);
        for mode in [RelinMode::Classic, RelinMode::Fused, RelinMode::Improved] {
            let mut meter = StageMeter::new();
            let prod = pm_3(&f.cts[0], &f.cts[1], &f.cts[2], &f.ctx, &mut meter.pm).unwrap();
            let rl = relinearize(&prod, &f.eks, &f.ctx, mode, &mut meter.relin).unwrap();
            assert_eq!(rl.tuple_size(), 2);
            assert_eq!(rl.scale_exp, 3);
            // the tuple still carries scale Δ³; noise is judged at scale 1
            let out = match mode {
                RelinMode::Improved => rescale_tuple_coeff(&rl, 2, &f.ctx, &mut meter.rs),
                _ => rescale_tuple(&rl, 2, &f.ctx, &mut meter.rs),
            }
            .unwrap();
            noise_ok(&f, &out, &f.msgs);
        }
    }

    #[test]
    fn fused_division_output_is_the_inverse_transform_of_the_summed_one() {
        let f = fixture(5, 6, 5, 16);
        let ops: Vec<&CiphertextTuple> = f.cts.iter().collect();
        let mut ctr = OpCounters::new();
        let prod = pm_tuple(&ops, &f.ctx, &mut ctr).unwrap(); // six rows
        let fused = relinearize(&prod, &f.eks, &f.ctx, RelinMode::Fused, &mut ctr).unwrap();
        let improved =
            relinearize(&prod, &f.eks, &f.ctx, RelinMode::Improved, &mut ctr).unwrap();
        assert_eq!(improved.domain, Domain::Coefficient);
        let mut expected = fused.clone();
        for p in &mut expected.polys {
            for c in &mut p.comps {
                intt_in_place(&c.modulus.clone(), &mut c.coeffs);
                c.domain = Domain::Coefficient;
            }
        }
        assert_eq!(improved.polys, expected.polys);
    }

    #[test]
    fn classic_and_fused_differ_by_a_small_integer() {
        let f = fixture(5, 4, 3, 17);
        let mut ctr = OpCounters::new();
        let prod = pm_3(&f.cts[0], &f.cts[1], &f.cts[2], &f.ctx, &mut ctr).unwrap();
        let classic = relinearize(&prod, &f.eks, &f.ctx, RelinMode::Classic, &mut ctr).unwrap();
        let fused = relinearize(&prod, &f.eks, &f.ctx, RelinMode::Fused, &mut ctr).unwrap();
        // summing before the division changes each flooring by a bounded
        // integer: |diff| ≤ (T−1)·K + T
        let bound =
            BigInt::from((prod.tuple_size() - 1) * f.ctx.aux_count() + prod.tuple_size());
        for (pc, pf) in classic.polys.iter().zip(&fused.polys) {
            let mut diff = pc.sub(pf).unwrap();
            for c in &mut diff.comps {
                intt_in_place(&c.modulus.clone(), &mut c.coeffs);
                c.domain = Domain::Coefficient;
            }
            for v in crate::poly::to_centered_big(&f.ctx, &diff).unwrap() {
                assert!(v.abs() <= bound, "difference {v} exceeds {bound}");
            }
        }
        noise_ok(&f, &rescale_tuple(&classic, 2, &f.ctx, &mut ctr).unwrap(), &f.msgs);
        noise_ok(&f, &rescale_tuple(&fused, 2, &f.ctx, &mut ctr).unwrap(), &f.msgs);
    }

    #[test]
    fn prescaled_keys_reproduce_the_improved_path_exactly() {
        let f = fixture(5, 4, 3, 18);
        let pre = f.eks.prescale(&f.ctx).unwrap();
        let mut pm_ctr = OpCounters::new();
        let prod = pm_3(&f.cts[0], &f.cts[1], &f.cts[2], &f.ctx, &mut pm_ctr).unwrap();
        let mut plain_ctr = OpCounters::new();
        let plain =
            relinearize(&prod, &f.eks, &f.ctx, RelinMode::Improved, &mut plain_ctr).unwrap();
        let mut pre_ctr = OpCounters::new();
        let scaled =
            relinearize(&prod, &pre, &f.ctx, RelinMode::Improved, &mut pre_ctr).unwrap();
        assert_eq!(plain.polys, scaled.polys);
        // folding the divisor into the keys saves one scalar pass per
        // surviving component in each of the two divisions
        assert_eq!(pre_ctr.const_mul + 2 * prod.level as u64, plain_ctr.const_mul);
        for bad in [RelinMode::Classic, RelinMode::Fused] {
            assert!(matches!(
                relinearize(&prod, &pre, &f.ctx, bad, &mut OpCounters::new()),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn three_input_pipelines_decrypt_and_meter_like_the_published_counts() {
        for (levels, aux) in [(4usize, 4usize), (8, 8)] {
            let ctx = build_context(1 << 6, levels, aux, 50, 50, 45, 3.2, 16, 1).unwrap();
            let (sk, pk) = keygen(&ctx, 9).unwrap();
            let eks = keygen_eval(&ctx, &sk, 3, 9).unwrap();
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
            let msgs = small_messages(&mut rng, ctx.ring_degree, 3);
            let cts: Vec<CiphertextTuple> = msgs
                .iter()
                .enumerate()
                .map(|(i, m)| encrypt(&ctx, &pk, m, 200 + i as u64).unwrap())
                .collect();
            let (l, k) = (levels as u64, aux as u64);

            let mut improved = StageMeter::new();
            let out_i =
                mult3_improved(&cts[0], &cts[1], &cts[2], &eks, &ctx, &mut improved).unwrap();
            assert_eq!(out_i.level, levels - 2);
            assert_eq!(out_i.scale_exp, 1);
            assert_eq!((improved.pm.ntt, improved.pm.intt), (0, 0));
            assert_eq!(improved.relin.ntt, 2 * k);
            assert_eq!(improved.relin.intt, 4 * l + 2 * k);
            assert_eq!(improved.rs.ntt, 2 * (l - 2));
            assert_eq!(improved.rs.intt, 0);

            let mut prior = StageMeter::new();
            let out_p = mult3_prior(&cts[0], &cts[1], &cts[2], &eks, &ctx, &mut prior).unwrap();
            assert_eq!(out_p.level, levels - 2);
            assert_eq!(prior.relin.ntt, 2 * l + 2 * k);
            assert_eq!(prior.relin.intt, 4 * l + 2 * k);
            assert_eq!(prior.rs.ntt, 4 * l - 6);
            assert_eq!(prior.rs.intt, 4);

            let noise_i = product_noise_log2(&ctx, &sk, &out_i, &msgs).unwrap();
            let noise_p = product_noise_log2(&ctx, &sk, &out_p, &msgs).unwrap();
            assert!(noise_i < 40.0 && noise_p < 40.0, "{noise_i} {noise_p}");
        }
    }

    #[test]
    fn plan_execution_decrypts_across_modes_and_plans() {
        let f = fixture(6, 7, 7, 21);
        for (plan_text, n) in [("(4,3)|(2,2)", 7usize), ("(2,2,1)", 5), ("(3,3)", 6)] {
            let plan = plan_from_string(plan_text).unwrap();
            for mode in [RelinMode::Classic, RelinMode::Fused, RelinMode::Improved] {
                let mut meter = StageMeter::new();
                let out = mult_n(&plan, &f.cts[..n], &f.eks, &f.ctx, mode, &mut meter).unwrap();
                assert_eq!(out.tuple_size(), 2);
                assert_eq!(out.scale_exp, 1);
                assert_eq!(out.level, 6 - depth_of(&plan));
                noise_ok(&f, &out, &f.msgs[..n]);
            }
        }
    }

    #[test]
    fn plan_rescale_transforms_match_the_unit_accounting() {
        let f = fixture(8, 8, 7, 22);
        let plan = plan_from_string("(4,3)|(2,2)").unwrap();
        let cost = cost_of(&plan);
        let mut fused = StageMeter::new();
        mult_n(&plan, &f.cts, &f.eks, &f.ctx, RelinMode::Fused, &mut fused).unwrap();
        assert_eq!(
            fused.rs.ntt + fused.rs.intt,
            cost.eval(8) as u64,
            "fused-mode rescale transforms ≠ unit accounting"
        );

        // an off-critical-path group: the lone pair of (4,2) runs a level
        // down, so the accounting only holds if execution schedules it there
        let unbalanced = plan_from_string("(4,2)|(2,2)").unwrap();
        let mut meter = StageMeter::new();
        let out = mult_n(
            &unbalanced,
            &f.cts[..6],
            &f.eks,
            &f.ctx,
            RelinMode::Fused,
            &mut meter,
        )
        .unwrap();
        assert_eq!(out.level, 8 - depth_of(&unbalanced));
        noise_ok(&f, &out, &f.msgs[..6]);
        assert_eq!(
            meter.rs.ntt + meter.rs.intt,
            cost_of(&unbalanced).eval(8) as u64,
            "off-path group not scheduled at its sibling's level"
        );

        let mut improved = StageMeter::new();
        mult_n(&plan, &f.cts, &f.eks, &f.ctx, RelinMode::Improved, &mut improved).unwrap();
        let root_level = 8 - plan.child_depth();
        let mu_root = plan.rescale_mu();
        // staying on coefficients after the fused division saves the two
        // root rows their inverse transforms and their re-entry transforms
        assert_eq!(
            improved.rs.ntt + improved.rs.intt + 2 * mu_root as u64,
            fused.rs.ntt + fused.rs.intt
        );
        assert_eq!(improved.relin.ntt + 2 * root_level as u64, fused.relin.ntt);
        assert_eq!(improved.relin.intt, fused.relin.intt);
    }

    #[test]
    fn binary_baseline_plan_grows_tuples_without_relinearizing() {
        let f = fixture(6, 5, 5, 23);
        let plan = baseline_binary_plan(5);
        let mut meter = StageMeter::new();
        let out =
            mult_n(&plan, &f.cts[..5], &f.eks, &f.ctx, RelinMode::Fused, &mut meter).unwrap();
        assert_eq!(out.level, 6 - depth_of(&plan));
        noise_ok(&f, &out, &f.msgs[..5]);
        // (4,1)|(2,2): two pair nodes, then the four-node, then the root
        // joins the five-row tuple with the pass-through input
        let cost = cost_of(&plan);
        assert_eq!(cost.rs_units, 11);
        assert_eq!(meter.rs.ntt + meter.rs.intt, cost.eval(6) as u64);
    }

    #[test]
    fn pairwise_tree_of_complete_multipliers_decrypts() {
        let f = fixture(6, 2, 5, 24);
        let mut meter = StageMeter::new();
        let out =
            mult_pairwise_tree(&f.cts, &f.eks, &f.ctx, RelinMode::Improved, &mut meter).unwrap();
        assert_eq!(out.level, 6 - 3); // ⌈log₂5⌉ pairing rounds
        assert_eq!(out.scale_exp, 1);
        noise_ok(&f, &out, &f.msgs);
    }

    #[test]
    fn plan_errors_surface_before_any_work() {
        let f = fixture(4, 3, 4, 25);
        let plan = plan_from_string("(2,2)").unwrap();
        assert!(matches!(
            mult_n(&plan, &f.cts[..3], &f.eks, &f.ctx, RelinMode::Fused, &mut StageMeter::new()),
            Err(Error::PlanArityMismatch { expected: 4, got: 3 })
        ));
        // (3,3) tuples reach seven rows at the root; the key set stops at s³
        let six = fixture(4, 3, 6, 26);
        let plan6 = plan_from_string("(3,3)").unwrap();
        assert!(matches!(
            mult_n(&plan6, &six.cts, &six.eks, &six.ctx, RelinMode::Fused, &mut StageMeter::new()),
            Err(Error::MissingEvalKey(6))
        ));
        // depth-3 plans need level ≥ 4
        let shallow = fixture(3, 7, 7, 27);
        let plan7 = plan_from_string("(4,3)|(2,2)").unwrap();
        assert!(matches!(
            mult_n(
                &plan7,
                &shallow.cts,
                &shallow.eks,
                &shallow.ctx,
                RelinMode::Fused,
                &mut StageMeter::new()
            ),
            Err(Error::DepthBudgetExceeded { needed: 3, budget: 2 })
        ));
    }

    #[test]
    fn level_alignment_drops_residues_only() {
        let f = fixture(5, 3, 1, 28);
        let ct = &f.cts[0];
        let down = level_align(ct, 3).unwrap();
        assert_eq!(down.level, 3);
        assert_eq!(down.polys[0].comps.len(), 3);
        for (a, b) in down.polys[0].comps.iter().zip(&ct.polys[0].comps) {
            assert_eq!(a.coeffs, b.coeffs);
        }
        assert!(level_align(ct, 6).is_err());
        noise_ok(&f, &down, &f.msgs[..1]);
    }
}
