//! The working commands: everything except the benchmark suites.

use std::path::Path;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use mimult::context::{build_context, Context};
use mimult::cost::{mult3_cost, plan_cost_report, CostReport, StageMeter};
use mimult::keys::{
    decrypt_tuple, encrypt as encrypt_message, keygen as generate_keys, keygen_eval,
    product_noise_log2, CiphertextTuple, EvalKeySet, PublicKey, SecretKey,
};
use mimult::mult::mult_n;
use mimult::plan::{
    baseline_binary_plan, cost_of, depth_of, optimize_partition, plan_from_string, PlanCost,
    PlanNode, REFERENCE_L,
};
use mimult::Error;

use crate::{
    CmdResult, CostArgs, DecryptArgs, EncryptArgs, Failure, Format, KeygenArgs, MultiplyArgs,
    ParamsArgs, PlanArgs, VerifyArgs,
};

pub fn ceil_log2(n: usize) -> usize {
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// Aligned key–value output line.
pub fn kv(label: &str, value: impl std::fmt::Display) {
    println!("{label:<15}{value}");
}

/// Thousands-grouped decimal rendering for large counts.
pub fn grouped(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn load_context(path: &Path) -> Result<Context, Failure> {
    Context::load(path)
        .map_err(|e| Failure::new(2, format!("context {}: {e}", path.display())))
}

fn key_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(name)
}

fn load_secret(ctx: &Context, dir: &Path) -> Result<SecretKey, Failure> {
    SecretKey::load(ctx, &key_path(dir, "sk.bin")).map_err(Failure::keys)
}

fn load_public(ctx: &Context, dir: &Path) -> Result<PublicKey, Failure> {
    PublicKey::load(ctx, &key_path(dir, "pk.bin")).map_err(Failure::keys)
}

fn load_eval(ctx: &Context, dir: &Path) -> Result<EvalKeySet, Failure> {
    EvalKeySet::load(ctx, &key_path(dir, "ek.bin")).map_err(Failure::keys)
}

fn chain_log2(moduli: &[std::sync::Arc<mimult::zq::Modulus>]) -> f64 {
    moduli.iter().map(|m| (m.value as f64).log2()).sum()
}

pub fn params(a: &ParamsArgs) -> CmdResult {
    let ctx = build_context(
        a.ring_degree,
        a.l,
        a.k,
        a.wq,
        a.wp,
        a.delta,
        a.sigma,
        a.h,
        a.seed,
    )?;
    ctx.save(&a.out)?;
    kv("ring degree", ctx.ring_degree);
    kv(
        "scaling chain",
        format!("L = {}, log2 Q ≈ {:.1}", ctx.q.len(), chain_log2(&ctx.q)),
    );
    kv(
        "auxiliary",
        format!("K = {}, log2 P ≈ {:.1}", ctx.p.len(), chain_log2(&ctx.p)),
    );
    kv("scale", format!("2^{}", ctx.delta_log2));
    kv("sigma", ctx.sigma);
    kv("secret weight", ctx.hamming_weight);
    kv("seed", ctx.seed);
    let join = |ms: &[std::sync::Arc<mimult::zq::Modulus>]| {
        ms.iter().map(|m| m.value.to_string()).collect::<Vec<_>>().join(", ")
    };
    kv("q primes", join(&ctx.q));
    kv("p primes", join(&ctx.p));
    kv("wrote", a.out.display());
    Ok(())
}

pub fn keygen(a: &KeygenArgs) -> CmdResult {
    let ctx = load_context(&a.ctx)?;
    let (sk, pk) = generate_keys(&ctx, a.seed)?;
    let eks = keygen_eval(&ctx, &sk, a.max_t, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    sk.save(&ctx, &key_path(&a.out, "sk.bin"))?;
    pk.save(&ctx, &key_path(&a.out, "pk.bin"))?;
    eks.save(&ctx, &key_path(&a.out, "ek.bin"))?;
    kv("secret weight", sk.weight());
    kv(
        "eval keys",
        format!("{} (secret powers 2..={})", eks.keys.len(), eks.max_t),
    );
    kv("wrote", format!("{}/{{sk,pk,ek}}.bin", a.out.display()));
    Ok(())
}

fn parse_message(text: &str, ring_degree: usize) -> Result<Vec<i64>, Failure> {
    let mut m = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        m.push(piece.parse::<i64>().map_err(|_| {
            Failure::new(2, format!("message coefficient {piece:?} is not an integer"))
        })?);
    }
    if m.is_empty() {
        return Err(Failure::new(2, "message has no coefficients".to_string()));
    }
    if m.len() > ring_degree {
        return Err(Failure::new(
            2,
            format!("message has {} coefficients, ring degree is {ring_degree}", m.len()),
        ));
    }
    m.resize(ring_degree, 0);
    Ok(m)
}

pub fn encrypt(a: &EncryptArgs) -> CmdResult {
    let ctx = load_context(&a.ctx)?;
    let pk = load_public(&ctx, &a.keys)?;
    let m = parse_message(&a.message, ctx.ring_degree)?;
    let ct = encrypt_message(&ctx, &pk, &m, a.seed)?;
    ct.save(&a.out)?;
    kv("level", ct.level);
    kv("scale exponent", ct.scale_exp);
    kv("nonzero", m.iter().filter(|&&c| c != 0).count());
    kv("wrote", a.out.display());
    Ok(())
}

pub fn decrypt(a: &DecryptArgs) -> CmdResult {
    let ctx = load_context(&a.ctx)?;
    let sk = load_secret(&ctx, &a.keys)?;
    let ct = CiphertextTuple::load(&ctx, &a.input)?;
    let raw = decrypt_tuple(&ctx, &sk, &ct)?;

    let q = BigInt::from(ctx.q_product(ct.level));
    let delta = BigInt::from(1u8) << (ctx.delta_log2 * ct.scale_exp) as usize;
    let half = &delta >> 1usize;
    let center = |v: &BigInt| -> BigInt {
        let mut r = v % &q;
        if r.sign() == Sign::Minus {
            r += &q;
        }
        if &r * 2 > q {
            r -= &q;
        }
        r
    };
    let message: Vec<BigInt> = raw
        .iter()
        .map(|c| (center(c) + &half).div_floor(&delta))
        .collect();

    kv("level", ct.level);
    kv("scale exponent", ct.scale_exp);
    let nonzero: Vec<(usize, &BigInt)> = message
        .iter()
        .enumerate()
        .filter(|(_, v)| v.sign() != Sign::NoSign)
        .collect();
    kv("nonzero", format!("{} of {} coefficients", nonzero.len(), message.len()));
    for (i, v) in nonzero.iter().take(a.limit) {
        println!("  [{i}] {v}");
    }
    if nonzero.len() > a.limit {
        println!("  … {} more", nonzero.len() - a.limit);
    }
    Ok(())
}

/// The plan to run: parsed when given, otherwise the cheapest plan for the
/// input count at its natural depth.
fn resolve_plan(spec: Option<&str>, n: usize) -> Result<PlanNode, Failure> {
    match spec {
        Some(s) => Ok(plan_from_string(s)?),
        None => Ok(optimize_partition(n, None)?.0),
    }
}

pub fn multiply(a: &MultiplyArgs) -> CmdResult {
    let ctx = load_context(&a.ctx)?;
    let eks = load_eval(&ctx, &a.keys)?;
    let cts: Vec<CiphertextTuple> = a
        .inputs
        .iter()
        .map(|p| {
            CiphertextTuple::load(&ctx, p)
                .map_err(|e| Failure::new(2, format!("ciphertext {}: {e}", p.display())))
        })
        .collect::<Result<_, _>>()?;
    if cts.len() < 2 {
        return Err(Failure::new(2, "need at least two input ciphertexts".to_string()));
    }
    let plan = resolve_plan(a.plan.as_deref(), cts.len())?;

    // a deeper plan than the budget allows burns levels for nothing; the
    // binary-tree depth is the natural allowance unless raised explicitly
    let budget = a.depth.unwrap_or_else(|| ceil_log2(cts.len()));
    let needed = depth_of(&plan);
    if needed > budget {
        return Err(Error::DepthBudgetExceeded { needed, budget }.into());
    }

    let mut meter = StageMeter::new();
    let out = mult_n(&plan, &cts, &eks, &ctx, a.mode.into(), &mut meter)?;
    out.save(&a.out)?;

    kv("plan", &plan);
    kv("depth", needed);
    kv("output level", out.level);
    kv("output scale", out.scale_exp);
    kv("wrote", a.out.display());
    kv("product", meter.pm);
    kv("relinearize", meter.relin);
    kv("rescale", meter.rs);
    kv("total", meter.total());

    if let Some(path) = &a.counters {
        let doc = serde_json::json!({
            "pm": meter.pm,
            "relin": meter.relin,
            "rs": meter.rs,
            "total": meter.total(),
        });
        std::fs::write(path, format!("{:#}\n", doc))?;
        kv("counters", path.display());
    }
    Ok(())
}

fn print_plan_cost(cost: &PlanCost) {
    kv("rescale units", format!("{} + {} final", cost.rs_units, cost.final_units));
    kv(
        "transforms",
        format!(
            "{} + {}   (L = {}: {})",
            cost.inner_expr,
            cost.final_expr,
            REFERENCE_L,
            cost.eval(REFERENCE_L)
        ),
    );
    kv("folded levels", cost.rs_singles);
}

pub fn plan(a: &PlanArgs) -> CmdResult {
    if a.n < 2 {
        return Err(Failure::new(2, "a product needs at least two inputs".to_string()));
    }
    let (tree, cost) = if a.baseline {
        let tree = baseline_binary_plan(a.n);
        let cost = cost_of(&tree);
        (tree, cost)
    } else {
        optimize_partition(a.n, a.depth)?
    };
    kv("inputs", a.n);
    kv("plan", &tree);
    kv("depth", depth_of(&tree));
    print_plan_cost(&cost);
    if !a.baseline {
        let base = cost_of(&baseline_binary_plan(a.n));
        kv(
            "baseline units",
            format!("{} + {} final", base.rs_units, base.final_units),
        );
    }
    Ok(())
}

pub fn print_report_table(report: &CostReport) {
    println!(
        "{:<13}{:>8}{:>8}{:>8}{:>10}{:>10}{:>11}{:>15}",
        "stage", "NTT", "INTT", "BConv", "ModMul", "ModAdd", "ConstMul", "latency(clk)"
    );
    let row = |stage: &str, c: &mimult::cost::OpCounters, latency: Option<u64>| {
        println!(
            "{:<13}{:>8}{:>8}{:>8}{:>10}{:>10}{:>11}{:>15}",
            stage,
            c.ntt,
            c.intt,
            c.bconv,
            c.modmul,
            c.modadd,
            c.const_mul,
            latency.map_or(String::from("-"), |v| grouped(v)),
        );
    };
    for s in &report.stages {
        row(s.stage, &s.counts, s.latency_clks);
    }
    row("total", &report.counts, Some(report.latency_clks));
    println!();
    kv("area", format!("{} XOR-equivalent gates", grouped(report.area_xor)));
    kv(
        "memory",
        format!(
            "{} bytes (keys {} + inputs {} + buffers {} bits)",
            grouped(report.memory_bytes),
            grouped(report.memory.eval_key_bits),
            grouped(report.memory.input_bits),
            grouped(report.memory.transform_buffer_bits)
        ),
    );
}

fn print_report_csv(report: &CostReport) {
    println!("stage,ntt,intt,bconv,modmul,modadd,const_mul,latency_clks");
    let row = |stage: &str, c: &mimult::cost::OpCounters, latency: Option<u64>| {
        println!(
            "{},{},{},{},{},{},{},{}",
            stage,
            c.ntt,
            c.intt,
            c.bconv,
            c.modmul,
            c.modadd,
            c.const_mul,
            latency.map_or(String::new(), |v| v.to_string()),
        );
    };
    for s in &report.stages {
        row(s.stage, &s.counts, s.latency_clks);
    }
    row("total", &report.counts, Some(report.latency_clks));
    println!();
    println!("metric,value");
    println!("area_xor,{}", report.area_xor);
    println!("memory_bytes,{}", report.memory_bytes);
    println!("eval_key_bits,{}", report.memory.eval_key_bits);
    println!("input_bits,{}", report.memory.input_bits);
    println!("transform_buffer_bits,{}", report.memory.transform_buffer_bits);
}

pub fn cost(a: &CostArgs) -> CmdResult {
    if !a.ring_degree.is_power_of_two() || a.ring_degree < 4 {
        return Err(Failure::new(
            2,
            format!("ring degree must be a power of two ≥ 4, got {}", a.ring_degree),
        ));
    }

    let mut configuration: Vec<(&str, String)> = Vec::new();
    let report = if let Some(variant) = a.variant {
        if a.n.is_some_and(|n| n != 3) {
            return Err(Failure::new(
                2,
                "--variant describes the three-input pipeline; it needs --n 3".to_string(),
            ));
        }
        configuration.push((
            "variant",
            match variant {
                crate::Variant::Prior => "prior".to_string(),
                crate::Variant::Improved => "improved".to_string(),
            },
        ));
        mult3_cost(a.l, a.k, a.ring_degree, variant.into())?
    } else {
        let plan = match (&a.plan, a.n) {
            (Some(s), _) => plan_from_string(s)?,
            (None, Some(n)) => optimize_partition(n, None)?.0,
            (None, None) => {
                return Err(Failure::new(
                    2,
                    "give --plan, --variant, or --n to choose what to cost".to_string(),
                ))
            }
        };
        configuration.push(("plan", plan.to_string()));
        plan_cost_report(a.n.unwrap_or_else(|| plan.input_count()), &plan, a.l, a.k, a.ring_degree, a.w)?
    };

    match a.format {
        Format::Table => {
            for (label, value) in &configuration {
                kv(label, value);
            }
            kv(
                "parameters",
                format!("L = {}, K = {}, N = {}, w = {}", a.l, a.k, a.ring_degree, a.w),
            );
            println!();
            print_report_table(&report);
        }
        Format::Json => {
            let mut top = serde_json::Map::new();
            for (label, value) in &configuration {
                top.insert((*label).to_string(), serde_json::Value::String(value.clone()));
            }
            top.insert(
                "parameters".to_string(),
                serde_json::json!({"L": a.l, "K": a.k, "N": a.ring_degree, "w": a.w}),
            );
            top.insert("report".to_string(), serde_json::to_value(&report).expect("report serializes"));
            println!("{:#}", serde_json::Value::Object(top));
        }
        Format::Csv => {
            for (label, value) in &configuration {
                println!("{label},\"{value}\"");
            }
            println!();
            print_report_csv(&report);
        }
    }
    Ok(())
}

/// Sparse ±1 test messages: one or two nonzero coefficients keep the exact
/// product norm tiny, so trial error measures machinery noise, not drift.
pub fn sparse_messages(
    rng: &mut ChaCha12Rng,
    ring_degree: usize,
    count: usize,
) -> Vec<Vec<i64>> {
    (0..count)
        .map(|_| {
            let mut m = vec![0i64; ring_degree];
            for _ in 0..rng.gen_range(1..=2usize) {
                let pos = (rng.next_u64() as usize) % ring_degree;
                m[pos] = if rng.next_u64() & 1 == 0 { 1 } else { -1 };
            }
            m
        })
        .collect()
}

pub fn verify(a: &VerifyArgs) -> CmdResult {
    if a.trials == 0 {
        return Err(Failure::new(2, "need at least one trial".to_string()));
    }
    let ctx = load_context(&a.ctx)?;
    let sk = load_secret(&ctx, &a.keys)?;
    let pk = load_public(&ctx, &a.keys)?;
    let eks = load_eval(&ctx, &a.keys)?;

    let n = match (a.n, &a.plan) {
        (Some(n), _) => n,
        (None, Some(s)) => plan_from_string(s)?.input_count(),
        (None, None) => {
            return Err(Failure::new(2, "give --n or --plan".to_string()));
        }
    };
    let plan = resolve_plan(a.plan.as_deref(), n)?;
    if plan.input_count() != n {
        return Err(Error::PlanArityMismatch { expected: plan.input_count(), got: n }.into());
    }

    let levels = ctx.q.len();
    let depth = depth_of(&plan);
    let expected_level = levels
        .checked_sub(depth)
        .filter(|&l| l >= 1)
        .ok_or_else(|| Failure::from(Error::DepthBudgetExceeded { needed: depth, budget: levels - 1 }))?;

    kv("inputs", n);
    kv("plan", &plan);
    kv("mode", match a.mode {
        crate::Mode::Classic => "classic",
        crate::Mode::Fused => "fused",
        crate::Mode::Improved => "improved",
    });
    kv("trials", a.trials);

    let mut rng = ChaCha12Rng::seed_from_u64(a.seed);
    let mut max_noise = f64::NEG_INFINITY;
    let threshold = (ctx.q[expected_level - 1].value as f64).log2() - 2.0;
    for trial in 0..a.trials {
        let msgs = sparse_messages(&mut rng, ctx.ring_degree, n);
        let cts: Vec<CiphertextTuple> = msgs
            .iter()
            .map(|m| encrypt_message(&ctx, &pk, m, rng.next_u64()))
            .collect::<mimult::Result<_>>()?;
        let out = mult_n(&plan, &cts, &eks, &ctx, a.mode.into(), &mut StageMeter::new())?;
        if out.level != expected_level || out.scale_exp != 1 {
            kv("verdict", format!(
                "FAILED: trial {trial} landed at level {} scale {}, expected level {expected_level} scale 1",
                out.level, out.scale_exp
            ));
            return Err(Failure::new(5, format!("trial {trial}: wrong output level or scale")));
        }
        let noise = product_noise_log2(&ctx, &sk, &out, &msgs)?;
        max_noise = max_noise.max(noise);
        if noise >= threshold {
            kv("verdict", format!(
                "FAILED: trial {trial} error 2^{noise:.1} ≥ 2^{threshold:.1} (top modulus / 4)"
            ));
            return Err(Failure::new(5, format!("trial {trial}: error above threshold")));
        }
    }
    kv("output level", format!("{expected_level} (inputs at {levels}, depth {depth})"));
    kv("max error", format!("2^{max_noise:.1}"));
    kv("threshold", format!("2^{threshold:.1} (top modulus / 4)"));
    kv("verdict", "ok");
    Ok(())
}
