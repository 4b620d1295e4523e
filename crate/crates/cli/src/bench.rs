//! Reference-table reproduction suites. Every cell is recomputed live from
//! the library and printed; with `--check` any deviation from the expected
//! values (or any failed functional trial) makes the command exit nonzero.
//! `FLAG:` lines mark the documented cells where the reference tables
//! disagree with the self-consistent counting convention that all other
//! rows pin down — the convention values are what the checks assert.

use num_bigint::BigInt;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use mimult::cost::{
    mult3_cost, multi_rs_cost, plan_cost_report, Mult3Variant, OpCounters, RescaleCost,
    StageMeter,
};
use mimult::keys::{
    encrypt, keygen, keygen_eval, product_noise_log2, CiphertextTuple, EvalKeySet, PublicKey,
    SecretKey,
};
use mimult::mult::{mult3_improved, mult_n, mult_pairwise_tree, pm_tuple, RelinMode};
use mimult::ntt::{intt_in_place, Domain};
use mimult::oracle::{exact_ring_product, reduce_poly_mod};
use mimult::plan::{
    baseline_binary_plan, cost_of, depth_of, optimize_partition, plan_from_string, LinExpr,
};
use mimult::poly::{to_canonical_big, to_centered_big, RnsPoly};
use mimult::rescale::{multi_rs, rs_ntt};
use mimult::{build_context, Context};

use crate::commands::{ceil_log2, print_report_table, sparse_messages};
use crate::{CmdResult, Failure, Suite};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err(format!($($arg)*));
        }
    };
}

fn lib<T>(r: mimult::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub fn run(suite: Suite, check: bool) -> CmdResult {
    let mut outcomes: Vec<(&'static str, Check)> = Vec::new();
    match suite {
        Suite::TableII => suite_table_ii(&mut outcomes),
        Suite::TableV => suite_table_v(&mut outcomes),
        Suite::All => {
            suite_table_ii(&mut outcomes);
            suite_table_v(&mut outcomes);
            suite_functional(&mut outcomes);
        }
    }

    println!();
    let mut failed = 0usize;
    for (name, result) in &outcomes {
        match result {
            Ok(()) => println!("{name}: PASS"),
            Err(msg) => {
                failed += 1;
                println!("{name}: FAIL — {msg}");
            }
        }
    }
    if failed > 0 {
        let message = format!("{failed} of {} checks failed", outcomes.len());
        if check {
            return Err(Failure::new(5, message));
        }
        println!("{message}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Partition table: rescaling units for 3–12 inputs, plus the 17-input case
// ---------------------------------------------------------------------------

const BASELINE_ROWS: [(usize, u64, LinExpr, LinExpr); 10] = [
    (3, 3, LinExpr { l_coeff: 3, constant: 0 }, LinExpr { l_coeff: 2, constant: -2 }),
    (4, 6, LinExpr { l_coeff: 6, constant: 0 }, LinExpr { l_coeff: 2, constant: -2 }),
    (5, 11, LinExpr { l_coeff: 11, constant: -5 }, LinExpr { l_coeff: 2, constant: -4 }),
    (6, 14, LinExpr { l_coeff: 14, constant: -8 }, LinExpr { l_coeff: 2, constant: -4 }),
    (7, 18, LinExpr { l_coeff: 18, constant: -9 }, LinExpr { l_coeff: 2, constant: -4 }),
    (8, 22, LinExpr { l_coeff: 22, constant: -10 }, LinExpr { l_coeff: 2, constant: -4 }),
    (9, 31, LinExpr { l_coeff: 31, constant: -28 }, LinExpr { l_coeff: 2, constant: -6 }),
    (10, 34, LinExpr { l_coeff: 34, constant: -34 }, LinExpr { l_coeff: 2, constant: -6 }),
    (11, 38, LinExpr { l_coeff: 38, constant: -39 }, LinExpr { l_coeff: 2, constant: -6 }),
    (12, 42, LinExpr { l_coeff: 42, constant: -44 }, LinExpr { l_coeff: 2, constant: -6 }),
];

const PROPOSED_ROWS: [(usize, u64, LinExpr, LinExpr, &str); 10] = [
    (3, 0, LinExpr::ZERO, LinExpr { l_coeff: 2, constant: 0 }, "(1,1,1)"),
    (4, 6, LinExpr { l_coeff: 6, constant: 0 }, LinExpr { l_coeff: 2, constant: -2 }, "(2,2)"),
    (5, 6, LinExpr { l_coeff: 6, constant: 0 }, LinExpr { l_coeff: 2, constant: -2 }, "(2,2,1)"),
    (6, 8, LinExpr { l_coeff: 8, constant: 0 }, LinExpr { l_coeff: 2, constant: -4 }, "(3,3)"),
    (7, 15, LinExpr { l_coeff: 15, constant: -5 }, LinExpr { l_coeff: 2, constant: -4 }, "(4,3)|(2,2)"),
    (
        8,
        22,
        LinExpr { l_coeff: 22, constant: -10 },
        LinExpr { l_coeff: 2, constant: -4 },
        "(4,4)|(2,2),(2,2)",
    ),
    (9, 12, LinExpr { l_coeff: 12, constant: 0 }, LinExpr { l_coeff: 2, constant: -4 }, "(3,3,3)"),
    (
        10,
        19,
        LinExpr { l_coeff: 19, constant: -5 },
        LinExpr { l_coeff: 2, constant: -4 },
        "(4,3,3)|(2,2)",
    ),
    (
        11,
        26,
        LinExpr { l_coeff: 26, constant: -10 },
        LinExpr { l_coeff: 2, constant: -4 },
        "(4,4,3)|(2,2),(2,2)",
    ),
    (
        12,
        30,
        LinExpr { l_coeff: 30, constant: -28 },
        LinExpr { l_coeff: 2, constant: -6 },
        "(6,6)|(3,3),(3,3)",
    ),
];

fn suite_table_ii(outcomes: &mut Vec<(&'static str, Check)>) {
    println!("rescaling units per n-input product (binary baseline vs optimized partition)");
    println!(
        "{:>3}  {:>6} {:<17} | {:<21}{:>6} {:<17}{:>6}",
        "n", "units", "transforms", "plan", "units", "transforms", "depth"
    );
    let mut rows: Vec<usize> = (3..=12).collect();
    rows.push(17);
    for n in rows {
        let base = cost_of(&baseline_binary_plan(n));
        let (tree, found) = optimize_partition(n, None).expect("n is in range");
        println!(
            "{:>3}  {:>6} {:<17} | {:<21}{:>6} {:<17}{:>6}",
            n,
            format!("{}+{}", base.rs_units, base.final_units),
            format!("{} + {}", base.inner_expr, base.final_expr),
            tree.to_string(),
            format!("{}+{}", found.rs_units, found.final_units),
            format!("{} + {}", found.inner_expr, found.final_expr),
            depth_of(&tree),
        );
    }
    println!();
    println!("FLAG: baseline n=3 final term printed as 2L; level-aware convention gives 2(L-1) — convention asserted");
    println!("FLAG: baseline n=10 inner term printed as 34L-32; just-in-time scheduling gives 34L-34 — convention asserted");
    println!("FLAG: proposed n=11 inner term printed as 26L-14; just-in-time scheduling gives 26L-10 — convention asserted");
    println!("FLAG: proposed n=12 inner term printed as 30L-24; just-in-time scheduling gives 30L-28 — convention asserted");
    println!("FLAG: proposed n=12 final term printed as 2(L-2); the depth-4 root sits at L-3, giving 2(L-3) — convention asserted");

    outcomes.push(("partition table (3-12 inputs)", partition_rows()));
    outcomes.push(("17-input unit reduction", seventeen_inputs()));
}

fn partition_rows() -> Check {
    for (n, units, inner, final_e) in BASELINE_ROWS {
        let c = cost_of(&baseline_binary_plan(n));
        ensure!(c.rs_units == units, "baseline units n={n}: {} ≠ {units}", c.rs_units);
        ensure!(c.inner_expr == inner, "baseline inner n={n}: {} ≠ {inner}", c.inner_expr);
        ensure!(c.final_expr == final_e, "baseline final n={n}: {} ≠ {final_e}", c.final_expr);
    }
    for (n, units, inner, final_e, partition) in PROPOSED_ROWS {
        let (tree, found) = lib(optimize_partition(n, None))?;
        ensure!(found.rs_units == units, "proposed units n={n}: {} ≠ {units} (found {tree})", found.rs_units);
        ensure!(found.inner_expr == inner, "proposed inner n={n}: {} ≠ {inner} (found {tree})", found.inner_expr);
        ensure!(found.final_expr == final_e, "proposed final n={n}: {} ≠ {final_e} (found {tree})", found.final_expr);
        ensure!(depth_of(&tree) == ceil_log2(n), "proposed depth n={n}");
        let mut reference = lib(plan_from_string(partition))?;
        reference.canonicalize();
        let ref_cost = cost_of(&reference);
        ensure!(
            (found.rs_units, found.total_expr()) == (ref_cost.rs_units, ref_cost.total_expr()),
            "n={n}: found {tree} does not match reference {partition}"
        );
    }
    Ok(())
}

fn seventeen_inputs() -> Check {
    let (tree, cost) = lib(optimize_partition(17, None))?;
    ensure!(cost.rs_units == 41, "planned units: {} ≠ 41 (found {tree})", cost.rs_units);
    ensure!(depth_of(&tree) == 5, "planned depth: {} ≠ 5", depth_of(&tree));
    let baseline = cost_of(&baseline_binary_plan(17));
    ensure!(baseline.rs_units == 79, "baseline units: {} ≠ 79", baseline.rs_units);
    let percent =
        (100 * (cost.rs_units + 2) + (baseline.rs_units + 2) / 2) / (baseline.rs_units + 2);
    ensure!(percent == 53, "(41+2)/(79+2) rounds to {percent}%, expected 53%");
    Ok(())
}

// ---------------------------------------------------------------------------
// Three-input pipeline, rescaling, and memory tables
// ---------------------------------------------------------------------------

fn suite_table_v(outcomes: &mut Vec<(&'static str, Check)>) {
    for (variant, name) in [(Mult3Variant::Prior, "prior"), (Mult3Variant::Improved, "improved")]
    {
        println!();
        println!("three-input pipeline ({name}) at L = K = 24, N = 2^16:");
        let report = mult3_cost(24, 24, 1 << 16, variant).expect("reference point is valid");
        print_report_table(&report);
    }

    println!();
    println!("rescaling one polynomial by μ of its l active levels:");
    println!("  combined      NTT l−μ   INTT μ   scalars (μ+1)l − μ(μ+3)/2");
    println!("  conventional  NTT l−μ   INTT l   scalars μl − μ(μ+1)/2");
    println!("at l = 24 (NTT/INTT/scalars):");
    for mu in [1usize, 2, 3, 4, 8, 16, 23] {
        let c = multi_rs_cost(mu, 24).expect("μ < l");
        println!(
            "  μ={mu:<3} combined {}/{}/{}   conventional {}/{}/{}",
            c.combined.ntt,
            c.combined.intt,
            c.combined.const_mul,
            c.conventional.ntt,
            c.conventional.intt,
            c.conventional.const_mul,
        );
    }

    println!();
    println!("memory at L = K = 24, N = 2^16, w = 64:");
    let plan = plan_from_string("(1,1,1)").expect("literal plan parses");
    let rpt = plan_cost_report(3, &plan, 24, 24, 1 << 16, 64).expect("reference point is valid");
    println!("  evaluation keys   {} bits ({} MiB)", rpt.memory.eval_key_bits, rpt.memory.eval_key_bits >> 23);
    println!("  resident inputs   {} bits ({} MiB)", rpt.memory.input_bits, rpt.memory.input_bits >> 23);
    println!(
        "  transform buffers {} bits per block × {} blocks",
        (2u64 << 16) * 64 - 2 * 64,
        rpt.counts.ntt + rpt.counts.intt
    );

    outcomes.push(("three-input closed forms", three_input_forms()));
    outcomes.push(("rescale closed forms", rescale_forms()));
    outcomes.push(("memory budget", memory_budget()));
}

fn three_input_forms() -> Check {
    for l in 2..=24usize {
        for k in [4usize, 8, 24] {
            let (lu, ku) = (l as u64, k as u64);
            let prior = lib(mult3_cost(l, k, 1 << 16, Mult3Variant::Prior))?;
            ensure!(prior.counts.ntt == 6 * lu + 2 * ku - 6, "prior NTT at l={l} k={k}");
            ensure!(prior.counts.intt == 4 * lu + 2 * ku + 4, "prior INTT at l={l} k={k}");
            ensure!(prior.counts.bconv == 4, "prior BConv at l={l} k={k}");
            ensure!(prior.counts.modmul == 36 * lu + 8 * ku - 12, "prior ModMul at l={l} k={k}");
            let improved = lib(mult3_cost(l, k, 1 << 16, Mult3Variant::Improved))?;
            ensure!(improved.counts.ntt == 2 * lu + 2 * ku - 4, "improved NTT at l={l} k={k}");
            ensure!(improved.counts.intt == 4 * lu + 2 * ku, "improved INTT at l={l} k={k}");
            ensure!(improved.counts.bconv == 4, "improved BConv at l={l} k={k}");
            ensure!(
                improved.counts.modmul == 32 * lu + 8 * ku - 12,
                "improved ModMul at l={l} k={k}"
            );
        }
    }
    for lg in [10u64, 14, 16] {
        let n = 1u64 << lg;
        let prior = lib(mult3_cost(24, 24, 1usize << lg, Mult3Variant::Prior))?;
        ensure!(prior.latency_clks == 4 * n + 38 + 40 * lg, "prior latency at lg={lg}");
        let improved = lib(mult3_cost(24, 24, 1usize << lg, Mult3Variant::Improved))?;
        ensure!(improved.latency_clks == 2 * n + 34 + 20 * lg, "improved latency at lg={lg}");
    }

    // the instrumented pipeline executes exactly the transform counts the
    // closed forms predict
    for (l, seed) in [(4usize, 0xC4u64), (8, 0xC5)] {
        let ctx = lib(build_context(1 << 6, l, l, 50, 50, 45, 3.2, 16, seed))?;
        let (sk, pk) = lib(keygen(&ctx, seed))?;
        let eks = lib(keygen_eval(&ctx, &sk, 3, seed))?;
        let cts: Vec<CiphertextTuple> = (0..3)
            .map(|i| {
                let mut m = vec![0i64; ctx.ring_degree];
                m[i] = 1;
                m[i + 5] = -1;
                lib(encrypt(&ctx, &pk, &m, seed + i as u64))
            })
            .collect::<Result<_, _>>()?;
        let mut meter = StageMeter::new();
        lib(mult3_improved(&cts[0], &cts[1], &cts[2], &eks, &ctx, &mut meter))?;
        let total = meter.total();
        let model = lib(mult3_cost(l, l, 1 << 16, Mult3Variant::Improved))?;
        ensure!(
            total.ntt == model.counts.ntt,
            "instrumented NTT at l=k={l}: {} ≠ {}",
            total.ntt,
            model.counts.ntt
        );
        ensure!(
            total.intt == model.counts.intt,
            "instrumented INTT at l=k={l}: {} ≠ {}",
            total.intt,
            model.counts.intt
        );
    }
    Ok(())
}

fn rescale_forms() -> Check {
    for l in 2..=24usize {
        for mu in 1..l {
            let (lu, mu_u) = (l as u64, mu as u64);
            let c = lib(multi_rs_cost(mu, l))?;
            ensure!(
                c.combined
                    == RescaleCost {
                        ntt: lu - mu_u,
                        intt: mu_u,
                        const_mul: (mu_u + 1) * lu - mu_u * (mu_u + 3) / 2,
                    },
                "combined row at l={l} μ={mu}"
            );
            ensure!(
                c.conventional
                    == RescaleCost {
                        ntt: lu - mu_u,
                        intt: lu,
                        const_mul: mu_u * lu - mu_u * (mu_u + 1) / 2,
                    },
                "conventional row at l={l} μ={mu}"
            );
        }
    }

    let ctx = lib(build_context(1 << 5, 8, 8, 50, 50, 45, 3.2, 8, 5))?;
    let mut rng = ChaCha12Rng::seed_from_u64(0xC5);
    for level in 2..=8usize {
        for mu in 1..level {
            let x = lib(RnsPoly::random_uniform(&ctx, level, Domain::Evaluation, &mut rng))?;
            let mut ctr = OpCounters::new();
            lib(multi_rs(&x, mu, &ctx, &mut ctr))?;
            let cells = lib(multi_rs_cost(mu, level))?.combined;
            ensure!(
                ctr.ntt == cells.ntt && ctr.intt == cells.intt,
                "instrumented transforms at level={level} μ={mu}"
            );
        }
    }
    Ok(())
}

fn memory_budget() -> Check {
    let plan = lib(plan_from_string("(1,1,1)"))?;
    let rpt = lib(plan_cost_report(3, &plan, 24, 24, 1 << 16, 64))?;
    ensure!(
        rpt.memory.eval_key_bits == 805_306_368 && rpt.memory.eval_key_bits == 2 * 2 * 48 * 65_536 * 64,
        "evaluation-key bits: {}",
        rpt.memory.eval_key_bits
    );
    ensure!(
        rpt.memory.input_bits == 603_979_776 && rpt.memory.input_bits == 3 * 2 * 24 * 65_536 * 64,
        "input bits: {}",
        rpt.memory.input_bits
    );
    let blocks = rpt.counts.ntt + rpt.counts.intt;
    ensure!(
        rpt.memory.transform_buffer_bits == blocks * 8_388_480
            && 8_388_480 == (2 * 65_536 - 2) * 64,
        "transform-buffer bits: {}",
        rpt.memory.transform_buffer_bits
    );
    let total = rpt.memory.eval_key_bits + rpt.memory.input_bits + rpt.memory.transform_buffer_bits;
    ensure!(rpt.memory_bytes == total / 8, "byte total: {}", rpt.memory_bytes);
    Ok(())
}

// ---------------------------------------------------------------------------
// Functional checks: bit-exactness, homomorphism, noise ordering, oracles
// ---------------------------------------------------------------------------

fn suite_functional(outcomes: &mut Vec<(&'static str, Check)>) {
    println!();
    outcomes.push(("combined rescale bit-exactness", combined_rescale_bitwise()));
    outcomes.push(("end-to-end homomorphism", homomorphism_trials()));
    outcomes.push(("noise ordering vs binary tree", noise_ordering()));
    outcomes.push(("exact ring oracle agreement", oracle_agreement()));
}

fn combined_rescale_bitwise() -> Check {
    for (ring_degree, weight) in [(32usize, 8usize), (64, 16), (1024, 32)] {
        let ctx = lib(build_context(ring_degree, 8, 8, 50, 50, 45, 3.2, weight, 1))?;
        let mut rng = ChaCha12Rng::seed_from_u64(0xC1 ^ ring_degree as u64);
        for level in 3..=8usize {
            for mu in 1..level {
                for _ in 0..50 {
                    let x = lib(RnsPoly::random_uniform(&ctx, level, Domain::Evaluation, &mut rng))?;
                    let combined = lib(multi_rs(&x, mu, &ctx, &mut OpCounters::new()))?;
                    let mut stepped = x;
                    for _ in 0..mu {
                        stepped = lib(rs_ntt(&stepped, &ctx, &mut OpCounters::new()))?;
                    }
                    ensure!(
                        combined == stepped,
                        "N={ring_degree} level={level} μ={mu}: combined ≠ stepped"
                    );
                }
            }
        }
    }
    Ok(())
}

struct DeskFixture {
    ctx: Context,
    sk: SecretKey,
    eks: EvalKeySet,
    pk: PublicKey,
}

fn desk_fixture(max_t: usize, seed: u64) -> Result<DeskFixture, String> {
    let ctx = lib(build_context(1 << 10, 8, 8, 50, 50, 45, 3.2, 64, seed))?;
    let (sk, pk) = lib(keygen(&ctx, seed))?;
    let eks = lib(keygen_eval(&ctx, &sk, max_t, seed))?;
    Ok(DeskFixture { ctx, sk, eks, pk })
}

fn homomorphism_trials() -> Check {
    let f = desk_fixture(12, 0xC6)?;
    let mut rng = ChaCha12Rng::seed_from_u64(0xC6C6);
    for n in 3..=12usize {
        let (plan, _) = lib(optimize_partition(n, None))?;
        let mut max_noise = f64::NEG_INFINITY;
        let mut threshold = 0.0f64;
        for trial in 0..20 {
            let msgs = sparse_messages(&mut rng, f.ctx.ring_degree, n);
            let cts: Vec<CiphertextTuple> = msgs
                .iter()
                .map(|m| lib(encrypt(&f.ctx, &f.pk, m, rng.next_u64())))
                .collect::<Result<_, _>>()?;
            let out = lib(mult_n(
                &plan,
                &cts,
                &f.eks,
                &f.ctx,
                RelinMode::Improved,
                &mut StageMeter::new(),
            ))?;
            ensure!(
                out.level == 8 - ceil_log2(n) && out.scale_exp == 1,
                "n={n} trial {trial}: level {} scale {}",
                out.level,
                out.scale_exp
            );
            let noise = lib(product_noise_log2(&f.ctx, &f.sk, &out, &msgs))?;
            threshold = (f.ctx.q[out.level - 1].value as f64).log2() - 2.0;
            ensure!(
                noise < threshold,
                "n={n} trial {trial}: error 2^{noise:.1} ≥ top modulus / 4"
            );
            max_noise = max_noise.max(noise);
        }
        println!(
            "homomorphism n={n:<2} plan {plan}: 20 trials, max error 2^{max_noise:.1} (threshold 2^{threshold:.1})"
        );
    }
    Ok(())
}

fn noise_ordering() -> Check {
    let f = desk_fixture(10, 0xC7)?;
    let mut rng = ChaCha12Rng::seed_from_u64(0xC7C7);
    let mut pooled_grouped = 0.0f64;
    let mut pooled_binary = 0.0f64;
    for n in [3usize, 6, 9] {
        let (plan, _) = lib(optimize_partition(n, None))?;
        let mut grouped_errs = Vec::with_capacity(100);
        let mut binary_errs = Vec::with_capacity(100);
        for _ in 0..100 {
            let msgs = sparse_messages(&mut rng, f.ctx.ring_degree, n);
            let cts: Vec<CiphertextTuple> = msgs
                .iter()
                .map(|m| lib(encrypt(&f.ctx, &f.pk, m, rng.next_u64())))
                .collect::<Result<_, _>>()?;
            let out_g = lib(mult_n(
                &plan,
                &cts,
                &f.eks,
                &f.ctx,
                RelinMode::Fused,
                &mut StageMeter::new(),
            ))?;
            let out_b = lib(mult_pairwise_tree(
                &cts,
                &f.eks,
                &f.ctx,
                RelinMode::Fused,
                &mut StageMeter::new(),
            ))?;
            ensure!(out_g.level == out_b.level, "n={n}: arms landed at different levels");
            grouped_errs.push(lib(product_noise_log2(&f.ctx, &f.sk, &out_g, &msgs))?);
            binary_errs.push(lib(product_noise_log2(&f.ctx, &f.sk, &out_b, &msgs))?);
        }
        let linear_mean = |v: &[f64]| v.iter().map(|x| x.exp2()).sum::<f64>() / v.len() as f64;
        let stats = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (v[0], v[v.len() / 2], v[v.len() - 1])
        };
        let (mean_g, mean_b) = (linear_mean(&grouped_errs), linear_mean(&binary_errs));
        pooled_grouped += mean_g;
        pooled_binary += mean_b;
        let (lo_g, med_g, hi_g) = stats(&mut grouped_errs);
        let (lo_b, med_b, hi_b) = stats(&mut binary_errs);
        println!(
            "noise n={n}: grouped log2 err min/med/max {lo_g:.1}/{med_g:.1}/{hi_g:.1}, \
             binary {lo_b:.1}/{med_b:.1}/{hi_b:.1}, linear mean ratio {:.3}",
            mean_g / mean_b
        );
    }
    let pooled = pooled_grouped / pooled_binary;
    println!("noise pooled mean ratio over all paired trials: {pooled:.3}");
    ensure!(pooled <= 1.0, "grouped plans add noise: pooled mean ratio {pooled:.3}");
    Ok(())
}

fn to_coefficient(p: &RnsPoly) -> RnsPoly {
    let mut out = p.clone();
    for c in &mut out.comps {
        intt_in_place(&c.modulus.clone(), &mut c.coeffs);
        c.domain = Domain::Coefficient;
    }
    out
}

fn oracle_agreement() -> Check {
    let ctx = lib(build_context(1 << 5, 4, 4, 50, 50, 45, 3.2, 8, 9))?;
    let mut rng = ChaCha12Rng::seed_from_u64(0xC9);

    for instance in 0..1000usize {
        let n = 2 + instance % 4;
        let level = 2 + instance % 3;
        let xs: Vec<RnsPoly> = (0..n)
            .map(|_| lib(RnsPoly::random_uniform(&ctx, level, Domain::Evaluation, &mut rng)))
            .collect::<Result<_, _>>()?;
        let mut prod = xs[0].clone();
        for x in &xs[1..] {
            prod = lib(prod.mul_pointwise(x))?;
        }
        let exact_inputs: Vec<Vec<BigInt>> = xs
            .iter()
            .map(|x| lib(to_centered_big(&ctx, &to_coefficient(x))))
            .collect::<Result<_, _>>()?;
        let expected = reduce_poly_mod(&exact_ring_product(&exact_inputs), &ctx.q_product(level));
        let got: Vec<BigInt> = lib(to_canonical_big(&ctx, &to_coefficient(&prod)))?
            .into_iter()
            .map(BigInt::from)
            .collect();
        ensure!(got == expected, "pointwise product ≠ exact CRT at instance {instance}");
    }

    for n in 2..=5usize {
        for trial in 0..5 {
            let level = 3;
            let cts: Vec<CiphertextTuple> = (0..n)
                .map(|_| -> Result<CiphertextTuple, String> {
                    Ok(CiphertextTuple {
                        polys: (0..2)
                            .map(|_| {
                                lib(RnsPoly::random_uniform(
                                    &ctx,
                                    level,
                                    Domain::Evaluation,
                                    &mut rng,
                                ))
                            })
                            .collect::<Result<_, _>>()?,
                        level,
                        scale_exp: 1,
                        domain: Domain::Evaluation,
                    })
                })
                .collect::<Result<_, _>>()?;
            let ops: Vec<&CiphertextTuple> = cts.iter().collect();
            let tuple = lib(pm_tuple(&ops, &ctx, &mut OpCounters::new()))?;
            ensure!(tuple.tuple_size() == n + 1, "tuple size for n={n}");

            let zero = lib(RnsPoly::zero(&ctx, level, Domain::Evaluation))?;
            let mut rows = vec![zero; n + 1];
            for subset in 0..(1u32 << n) {
                let mut term: Option<RnsPoly> = None;
                for (i, ct) in cts.iter().enumerate() {
                    let factor = &ct.polys[(subset >> i & 1) as usize];
                    term = Some(match term {
                        None => factor.clone(),
                        Some(t) => lib(t.mul_pointwise(factor))?,
                    });
                }
                let t = subset.count_ones() as usize;
                rows[t] = lib(rows[t].add(&term.unwrap()))?;
            }
            for (t, row) in rows.iter().enumerate() {
                ensure!(
                    &tuple.polys[t] == row,
                    "row {t} of the {n}-operand tuple ≠ subset-sum expansion (trial {trial})"
                );
            }
        }
    }
    Ok(())
}
