//! Operation accounting and the architectural cost model.
//!
//! The first half is software-side plumbing: [`OpCounters`] tallies what the
//! instrumented kernels actually execute, [`StageMeter`] splits a full
//! multiplication into its product / relinearization / rescaling stages, and
//! [`plan_counts`] predicts those tallies symbolically for any partition
//! plan (it mirrors the fused execution path operation for operation).
//!
//! The second half estimates a pipelined hardware realization: per-block
//! resource figures for the 2-parallel transform and conversion blocks
//! ([`block_cost`]), an XOR-equivalent gate model ([`GateModel`]), closed
//! forms for the three-input multiplier and the combined rescale
//! ([`mult3_cost`], [`multi_rs_cost`]), a byte-exact memory budget
//! ([`memory_model`]), and a stage-count latency model for whole plans.
//! Counts are per allocated block — the architecture unrolls fully, one
//! block per scheduled transform.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::plan::{depth_of, PlanNode};

/// Tallies of the primitive operations an instrumented kernel performs.
///
/// Units: `ntt`/`intt` count per-component transforms (one length-N
/// butterfly network each); `bconv` counts basis-conversion block
/// invocations (plain or scaled — one block per call, its internal scalar
/// work is not double-counted elsewhere); `modmul` counts length-N pointwise
/// component products; `const_mul` counts length-N scalar×component
/// products; `modadd` counts length-N elementwise additions/subtractions.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    pub ntt: u64,
    pub intt: u64,
    pub bconv: u64,
    pub modmul: u64,
    pub modadd: u64,
    pub const_mul: u64,
}

impl OpCounters {
    pub fn new() -> OpCounters {
        OpCounters::default()
    }

    pub fn add(&mut self, other: &OpCounters) {
        self.ntt += other.ntt;
        self.intt += other.intt;
        self.bconv += other.bconv;
        self.modmul += other.modmul;
        self.modadd += other.modadd;
        self.const_mul += other.const_mul;
    }
}

impl std::fmt::Display for OpCounters {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ntt={} intt={} bconv={} modmul={} modadd={} const_mul={}",
            self.ntt, self.intt, self.bconv, self.modmul, self.modadd, self.const_mul
        )
    }
}

/// Per-stage accounting for a full multiplication: the tuple product, the
/// relinearization, and the rescaling stage.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageMeter {
    pub pm: OpCounters,
    pub relin: OpCounters,
    pub rs: OpCounters,
}

impl StageMeter {
    pub fn new() -> StageMeter {
        StageMeter::default()
    }

    pub fn total(&self) -> OpCounters {
        let mut t = self.pm;
        t.add(&self.relin);
        t.add(&self.rs);
        t
    }
}

/// Word width of the modeled datapath. Residues are < 2^50 but the reference
/// architecture keeps full 64-bit words everywhere; memory and gate figures
/// assume it.
pub const WORD_BITS: u64 = 64;

// ---------------------------------------------------------------------------
// Gate-level area model
// ---------------------------------------------------------------------------

/// XOR-equivalent weights for the primitive cells, and the composition rules
/// for the arithmetic units built from them. A w-bit adder is w full adders;
/// a w-bit multiplier is w(w−1) full adders (array multiplier); a modular
/// adder is two adders, a comparator (counted as one more adder) and a
/// result mux; a Barrett modular multiplier is three multipliers, three
/// modular adders and a mux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateModel {
    pub fa_xor: f64,
    pub mux_xor: f64,
    pub membit_xor: f64,
    pub register_xor: f64,
}

impl Default for GateModel {
    fn default() -> GateModel {
        GateModel { fa_xor: 4.5, mux_xor: 1.0, membit_xor: 1.0, register_xor: 3.0 }
    }
}

impl GateModel {
    pub fn adder(&self, w: u64) -> f64 {
        w as f64 * self.fa_xor
    }

    pub fn multiplier(&self, w: u64) -> f64 {
        (w * (w - 1)) as f64 * self.fa_xor
    }

    pub fn modadder(&self, w: u64) -> f64 {
        3.0 * self.adder(w) + self.mux_xor
    }

    pub fn barrett_modmul(&self, w: u64) -> f64 {
        3.0 * self.multiplier(w) + 3.0 * self.modadder(w) + self.mux_xor
    }

    pub fn registers(&self, count: u64, w: u64) -> f64 {
        (count * w) as f64 * self.register_xor
    }

    pub fn memory(&self, bits: u64) -> f64 {
        bits as f64 * self.membit_xor
    }
}

// ---------------------------------------------------------------------------
// Per-block resources of the 2-parallel building blocks
// ---------------------------------------------------------------------------

/// The three pipelined building blocks every path is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Block {
    Ntt,
    Intt,
    BConv,
}

/// Resources of one 2-parallel block: arithmetic units, buffer words,
/// pipeline registers (w-bit each), and the fill latency of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockCost {
    pub modmul: u64,
    pub modadd: u64,
    pub memory_words: u64,
    pub registers: u64,
    pub pipeline_clks: u64,
    pub word_bits: u64,
}

impl BlockCost {
    /// Logic area in XOR equivalents: the arithmetic units plus the pipeline
    /// registers. Buffer memory is reported separately (see
    /// [`BlockCost::memory_bits`]).
    pub fn logic_area_xor(&self, gates: &GateModel) -> f64 {
        self.modmul as f64 * gates.barrett_modmul(self.word_bits)
            + self.modadd as f64 * gates.modadder(self.word_bits)
            + gates.registers(self.registers, self.word_bits)
    }

    pub fn memory_bits(&self) -> u64 {
        self.memory_words * self.word_bits
    }
}

fn log2_exact(ring_degree: usize) -> u64 {
    debug_assert!(ring_degree.is_power_of_two());
    ring_degree.trailing_zeros() as u64
}

/// Resource figures for one 2-parallel block instance.
///
/// A transform block streams two coefficients per clock through log₂N
/// butterfly stages — one multiplier and two (forward) or four (inverse)
/// modular adders per stage — buffering 2N−2 words between stages; it fills
/// in N/2−1+5log₂N clocks. A conversion block folds `l` source residues onto
/// `k` targets with 2l+2lk multipliers and 2k(l−1) adders, holding l+lk
/// constant words, and fills in 7 clocks. `l`/`k` are ignored for the
/// transforms.
pub fn block_cost(block: Block, ring_degree: usize, l: usize, k: usize) -> BlockCost {
    let lg = log2_exact(ring_degree);
    let n = ring_degree as u64;
    let (l, k) = (l as u64, k as u64);
    match block {
        Block::Ntt => BlockCost {
            modmul: lg,
            modadd: 2 * lg,
            memory_words: 2 * n - 2,
            registers: 10 * lg,
            pipeline_clks: n / 2 - 1 + 5 * lg,
            word_bits: WORD_BITS,
        },
        Block::Intt => BlockCost {
            modmul: lg,
            modadd: 4 * lg,
            memory_words: 2 * n - 2,
            registers: 10 * lg,
            pipeline_clks: n / 2 - 1 + 5 * lg,
            word_bits: WORD_BITS,
        },
        Block::BConv => BlockCost {
            modmul: 2 * l + 2 * l * k,
            modadd: 2 * k * (l - 1),
            memory_words: l + l * k,
            registers: 6 * l + k + 6 * l * k,
            pipeline_clks: 7,
            word_bits: WORD_BITS,
        },
    }
}

// ---------------------------------------------------------------------------
// Memory budget
// ---------------------------------------------------------------------------

/// The three contributions to on-chip memory: evaluation keys (two extended
/// polynomials each), resident input ciphertexts (two polynomials each), and
/// the inter-stage buffers of the allocated transform blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryModel {
    pub eval_key_bits: u64,
    pub input_bits: u64,
    pub transform_buffer_bits: u64,
}

impl MemoryModel {
    pub fn total_bits(&self) -> u64 {
        self.eval_key_bits + self.input_bits + self.transform_buffer_bits
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bits() / 8
    }
}

/// Memory budget in exact bits. Each evaluation key is 2 polynomials over
/// the l+k extended basis; each resident input is 2 polynomials over the
/// l-level basis; each allocated transform block buffers 2N−2 words.
pub fn memory_model(
    eval_keys: usize,
    inputs: usize,
    l: usize,
    k: usize,
    ring_degree: usize,
    word_bits: u64,
    transform_blocks: u64,
) -> MemoryModel {
    let n = ring_degree as u64;
    MemoryModel {
        eval_key_bits: eval_keys as u64 * 2 * (l + k) as u64 * n * word_bits,
        input_bits: inputs as u64 * 2 * l as u64 * n * word_bits,
        transform_buffer_bits: transform_blocks * (2 * n - 2) * word_bits,
    }
}

// ---------------------------------------------------------------------------
// Cost reports
// ---------------------------------------------------------------------------

/// One pipeline stage of a report: what it executes and, where the stage
/// latency has a closed form, how long its pipeline takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub counts: OpCounters,
    pub latency_clks: Option<u64>,
}

/// Aggregate hardware estimate: operation totals, end-to-end pipeline
/// latency, XOR-equivalent logic area, the exact memory budget (with its
/// component split), and the per-stage breakdown the totals came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub counts: OpCounters,
    pub latency_clks: u64,
    pub area_xor: u64,
    pub memory_bytes: u64,
    pub memory: MemoryModel,
    pub stages: Vec<StageReport>,
}

/// Logic area of a report's allocation: one block per counted transform or
/// conversion, one Barrett multiplier per counted (scalar or pointwise)
/// multiplication, one modular adder per counted addition.
fn counts_area_xor(c: &OpCounters, ring_degree: usize, l: usize, k: usize) -> u64 {
    let gates = GateModel::default();
    let area = c.ntt as f64 * block_cost(Block::Ntt, ring_degree, l, k).logic_area_xor(&gates)
        + c.intt as f64 * block_cost(Block::Intt, ring_degree, l, k).logic_area_xor(&gates)
        + c.bconv as f64 * block_cost(Block::BConv, ring_degree, l, k).logic_area_xor(&gates)
        + (c.modmul + c.const_mul) as f64 * gates.barrett_modmul(WORD_BITS)
        + c.modadd as f64 * gates.modadder(WORD_BITS);
    area.round() as u64
}

// ---------------------------------------------------------------------------
// Closed forms: three-input multiplier
// ---------------------------------------------------------------------------

/// The two three-input pipelines: `Prior` divides in the evaluation domain
/// and rescales twice per output row; `Improved` fuses the division with the
/// pending additions and rescales both levels in one coefficient-domain
/// pass (the software counterparts are `mult3_prior` / `mult3_improved`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mult3Variant {
    Prior,
    Improved,
}

struct StageRow {
    stage: &'static str,
    ntt: u64,
    intt: u64,
    bconv: u64,
    barrett: u64,
    latency: u64,
}

/// Closed-form resource estimate of a full three-input multiplication at
/// `l` active and `k` auxiliary moduli. Transform and conversion counts are
/// exact (the instrumented kernels reproduce them); the Barrett-multiplier
/// column counts the allocated standalone multipliers of the reference
/// architecture, and stage latencies are its pipeline fill times.
pub fn mult3_cost(
    l: usize,
    k: usize,
    ring_degree: usize,
    variant: Mult3Variant,
) -> Result<CostReport> {
    if l < 2 || k < 1 {
        return Err(Error::Parameter(
            "the three-input estimate needs l ≥ 2 active and k ≥ 1 auxiliary moduli".into(),
        ));
    }
    let lg = log2_exact(ring_degree);
    let n = ring_degree as u64;
    let (lu, ku) = (l as u64, k as u64);
    let rows = match variant {
        Mult3Variant::Prior => [
            StageRow { stage: "product", ntt: 0, intt: 0, bconv: 0, barrett: 16 * lu, latency: 8 },
            StageRow {
                stage: "relinearize",
                ntt: 2 * lu + 2 * ku,
                intt: 4 * lu + 2 * ku,
                bconv: 4,
                barrett: 12 * lu + 8 * ku,
                latency: 2 * n + 22 + 20 * lg,
            },
            StageRow {
                stage: "rescale",
                ntt: 4 * lu - 6,
                intt: 4,
                bconv: 0,
                barrett: 8 * lu - 12,
                latency: 2 * n + 8 + 20 * lg,
            },
        ],
        Mult3Variant::Improved => [
            StageRow { stage: "product", ntt: 0, intt: 0, bconv: 0, barrett: 16 * lu, latency: 8 },
            StageRow {
                stage: "relinearize",
                ntt: 2 * ku,
                intt: 4 * lu + 2 * ku,
                bconv: 4,
                barrett: 8 * lu + 8 * ku,
                latency: 3 * n / 2 + 18 + 15 * lg,
            },
            StageRow {
                stage: "rescale",
                ntt: 2 * lu - 4,
                intt: 0,
                bconv: 0,
                barrett: 8 * lu - 12,
                latency: n / 2 + 8 + 5 * lg,
            },
        ],
    };

    let mut counts = OpCounters::new();
    let mut latency = 0u64;
    let stages: Vec<StageReport> = rows
        .iter()
        .map(|r| {
            let c = OpCounters {
                ntt: r.ntt,
                intt: r.intt,
                bconv: r.bconv,
                modmul: r.barrett,
                modadd: 0,
                const_mul: 0,
            };
            counts.add(&c);
            latency += r.latency;
            StageReport { stage: r.stage, counts: c, latency_clks: Some(r.latency) }
        })
        .collect();

    let memory =
        memory_model(2, 3, l, k, ring_degree, WORD_BITS, counts.ntt + counts.intt);
    Ok(CostReport {
        area_xor: counts_area_xor(&counts, ring_degree, l, k),
        memory_bytes: memory.total_bytes(),
        memory,
        latency_clks: latency,
        counts,
        stages,
    })
}

// ---------------------------------------------------------------------------
// Closed forms: combined rescaling
// ---------------------------------------------------------------------------

/// Transform and scalar-multiplication counts of one μ-level rescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RescaleCost {
    pub ntt: u64,
    pub intt: u64,
    pub const_mul: u64,
}

/// The combined single-pass rescale against the conventional roundtrip that
/// inverse-transforms every component, divides stepwise on coefficients,
/// and forward-transforms the survivors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MultiRescaleCost {
    pub combined: RescaleCost,
    pub conventional: RescaleCost,
}

/// Closed-form per-polynomial cost of rescaling μ levels at level `l`.
/// The combined pass transforms each component exactly once (μ inverse,
/// l−μ forward) and pays (μ+1)l − μ(μ+3)/2 scalar multiplications for the
/// folded divisor cascade; the conventional roundtrip transforms all `l`
/// components down, divides step by step (μl − μ(μ+1)/2 scalars), and
/// transforms the l−μ survivors back.
pub fn multi_rs_cost(mu: usize, l: usize) -> Result<MultiRescaleCost> {
    if mu == 0 || mu >= l {
        return Err(Error::MuOutOfRange(mu, l.saturating_sub(1)));
    }
    let (mu, l) = (mu as u64, l as u64);
    Ok(MultiRescaleCost {
        combined: RescaleCost {
            ntt: l - mu,
            intt: mu,
            const_mul: (mu + 1) * l - mu * (mu + 3) / 2,
        },
        conventional: RescaleCost {
            ntt: l - mu,
            intt: l,
            const_mul: mu * l - mu * (mu + 1) / 2,
        },
    })
}

// ---------------------------------------------------------------------------
// Symbolic plan accounting
// ---------------------------------------------------------------------------

fn pm2_counts(ta: u64, tb: u64, l: u64, ctr: &mut OpCounters) -> u64 {
    if ta == 2 && tb == 2 {
        ctr.modmul += 3 * l;
        ctr.modadd += 4 * l;
    } else {
        ctr.modmul += ta * tb * l;
        ctr.modadd += ta * tb * l;
    }
    ta + tb - 1
}

fn pm_tuple_counts(sizes: &[u64], l: u64, ctr: &mut OpCounters) -> u64 {
    let mut acc = sizes[0];
    for &s in &sizes[1..] {
        acc = pm2_counts(acc, s, l, ctr);
    }
    acc
}

fn multi_rs_counts(l: u64, mu: u64, ctr: &mut OpCounters) {
    ctr.intt += mu;
    ctr.ntt += l - mu;
    let scalars = (l - mu) * (mu + 1) + mu * (mu - 1) / 2;
    ctr.const_mul += scalars;
    ctr.modadd += scalars;
}

/// Fused-division relinearization of a t-row tuple at level `l`: t−2 key
/// products over the extended basis, summed there, then two divisions.
fn relin_fused_counts(t: u64, l: u64, k: u64, ctr: &mut OpCounters) {
    let m = t - 2;
    ctr.intt += m * l + 2 * (k + l);
    ctr.ntt += m * k + 2 * l;
    ctr.bconv += m + 2;
    ctr.modmul += 2 * (k + l) * m;
    ctr.modadd += 2 * (k + l) * (m - 1) + 4 * l;
    ctr.const_mul += 2 * l;
}

fn subtree_product_counts(node: &PlanNode, entry: usize, meter: &mut StageMeter) -> u64 {
    match node {
        PlanNode::Leaf(1) => 2,
        PlanNode::Leaf(g) => pm_tuple_counts(&vec![2u64; *g], entry as u64, &mut meter.pm),
        PlanNode::Node(ch) => {
            let sizes: Vec<u64> = ch
                .iter()
                .map(|c| subtree_output_counts(c, entry, meter))
                .collect();
            pm_tuple_counts(&sizes, entry as u64, &mut meter.pm)
        }
    }
}

fn subtree_output_counts(node: &PlanNode, out_level: usize, meter: &mut StageMeter) -> u64 {
    let mu = node.rescale_mu();
    let t = subtree_product_counts(node, out_level + mu, meter);
    if mu > 0 {
        for _ in 0..t {
            multi_rs_counts((out_level + mu) as u64, mu as u64, &mut meter.rs);
        }
    }
    t
}

/// Predicted per-stage operation counts for running `plan` on fresh
/// level-`l` inputs with `k` auxiliary moduli and fused-division
/// relinearization at the root. Mirrors the execution schedule exactly —
/// just-in-time levels, left-fold products, one combined rescale per node —
/// so it equals the instrumented tallies of the same run.
pub fn plan_counts(plan: &PlanNode, l: usize, k: usize) -> Result<StageMeter> {
    plan.validate()?;
    if plan.input_count() < 2 {
        return Err(Error::Parameter("a plan needs at least two inputs".into()));
    }
    let depth = depth_of(plan);
    if depth + 1 > l {
        return Err(Error::DepthBudgetExceeded {
            needed: depth,
            budget: l.saturating_sub(1),
        });
    }
    let mut meter = StageMeter::new();
    let entry = l - plan.child_depth();
    let t = subtree_product_counts(plan, entry, &mut meter);
    relin_fused_counts(t, entry as u64, k as u64, &mut meter.relin);
    for _ in 0..2 {
        multi_rs_counts(entry as u64, plan.rescale_mu() as u64, &mut meter.rs);
    }
    Ok(meter)
}

// ---------------------------------------------------------------------------
// Latency: stage-count model
// ---------------------------------------------------------------------------

/// Fill time of one conventional multiply-relinearize-rescale node at this
/// ring degree. The constant term is calibrated against the reference
/// pipeline at N = 2^16 (131,415 clks per node) rather than derived; the
/// N- and log-terms follow the block fill times.
pub fn node_stage_clks(ring_degree: usize) -> u64 {
    2 * ring_degree as u64 + 23 + 20 * log2_exact(ring_degree)
}

/// Sequential pipeline passes along the critical path of a plan. Every
/// internal node and multiplying leaf group is one pass; the root counts
/// twice (relinearization and the wider final rescale are separate passes);
/// pass-through inputs are free.
pub fn plan_segments(plan: &PlanNode) -> u64 {
    fn segs(node: &PlanNode) -> u64 {
        match node {
            PlanNode::Leaf(1) => 0,
            PlanNode::Leaf(_) => 1,
            PlanNode::Node(ch) => 1 + ch.iter().map(segs).max().unwrap_or(0),
        }
    }
    segs(plan) + 1
}

/// Latency of a plan: critical-path passes at half a conventional node each
/// (a fused pass folds what the conventional pipeline does in two).
pub fn plan_latency_clks(plan: &PlanNode, ring_degree: usize) -> u64 {
    plan_segments(plan) * node_stage_clks(ring_degree) / 2
}

/// Latency of the conventional binary tree over n inputs: ⌈log₂n⌉ full
/// nodes back to back.
pub fn pairwise_latency_clks(n: usize, ring_degree: usize) -> u64 {
    debug_assert!(n >= 2);
    let depth = (usize::BITS - (n - 1).leading_zeros()) as u64;
    depth * node_stage_clks(ring_degree)
}

/// Full hardware estimate for running `plan` over `n` fresh inputs:
/// operation counts from the symbolic schedule, stage-count latency,
/// XOR-equivalent area of the implied allocation, and the exact memory
/// budget (one generalized key per secret power up to the root tuple).
pub fn plan_cost_report(
    n: usize,
    plan: &PlanNode,
    l: usize,
    k: usize,
    ring_degree: usize,
    word_bits: u64,
) -> Result<CostReport> {
    if plan.input_count() != n {
        return Err(Error::PlanArityMismatch { expected: plan.input_count(), got: n });
    }
    let meter = plan_counts(plan, l, k)?;
    let counts = meter.total();
    let memory = memory_model(
        plan.tuple_size() - 2,
        n,
        l,
        k,
        ring_degree,
        word_bits,
        counts.ntt + counts.intt,
    );
    Ok(CostReport {
        counts,
        latency_clks: plan_latency_clks(plan, ring_degree),
        area_xor: counts_area_xor(&counts, ring_degree, l, k),
        memory_bytes: memory.total_bytes(),
        memory,
        stages: vec![
            StageReport { stage: "product", counts: meter.pm, latency_clks: None },
            StageReport { stage: "relinearize", counts: meter.relin, latency_clks: None },
            StageReport { stage: "rescale", counts: meter.rs, latency_clks: None },
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::build_context;
    use crate::ntt::Domain;
    use crate::plan::{baseline_binary_plan, cost_of, plan_from_string};
    use crate::poly::RnsPoly;
    use crate::rescale::{multi_rs, multi_rs_const_mul_count};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// The published depth-optimal partitions for 3–12 inputs.
    const PARTITIONS: [(usize, &str); 10] = [
        (3, "(1,1,1)"),
        (4, "(2,2)"),
        (5, "(2,2,1)"),
        (6, "(3,3)"),
        (7, "(4,3)|(2,2)"),
        (8, "(4,4)|(2,2),(2,2)"),
        (9, "(3,3,3)"),
        (10, "(4,3,3)|(2,2)"),
        (11, "(4,4,3)|(2,2),(2,2)"),
        (12, "(6,6)|(3,3),(3,3)"),
    ];

    #[test]
    fn transform_block_figures() {
        let ntt = block_cost(Block::Ntt, 1 << 16, 24, 24);
        assert_eq!(ntt.modmul, 16);
        assert_eq!(ntt.modadd, 32);
        assert_eq!(ntt.memory_words, 131_070);
        assert_eq!(ntt.registers, 160);
        assert_eq!(ntt.pipeline_clks, 32_847);

        let intt = block_cost(Block::Intt, 1 << 16, 24, 24);
        assert_eq!(intt.modadd, 2 * ntt.modadd);
        assert_eq!(intt.pipeline_clks, ntt.pipeline_clks);

        let conv = block_cost(Block::BConv, 1 << 16, 24, 24);
        assert_eq!(conv.modmul, 1200);
        assert_eq!(conv.modadd, 1104);
        assert_eq!(conv.memory_words, 600);
        assert_eq!(conv.registers, 3624);
        assert_eq!(conv.pipeline_clks, 7);

        let tiny = block_cost(Block::BConv, 1 << 16, 1, 1);
        assert_eq!(tiny.modadd, 0);
    }

    #[test]
    fn gate_model_composition() {
        let g = GateModel::default();
        assert_eq!(g.adder(64), 288.0);
        assert_eq!(g.multiplier(64), 18_144.0);
        assert_eq!(g.modadder(64), 865.0);
        assert_eq!(g.barrett_modmul(64), 57_028.0);
    }

    #[test]
    fn three_input_totals_follow_the_closed_forms() {
        for (l, k) in [(4usize, 4usize), (8, 8), (24, 24), (24, 8)] {
            let (lu, ku) = (l as u64, k as u64);
            let prior = mult3_cost(l, k, 1 << 16, Mult3Variant::Prior).unwrap();
            assert_eq!(prior.counts.ntt, 6 * lu + 2 * ku - 6);
            assert_eq!(prior.counts.intt, 4 * lu + 2 * ku + 4);
            assert_eq!(prior.counts.bconv, 4);
            assert_eq!(prior.counts.modmul, 36 * lu + 8 * ku - 12);
            let improved = mult3_cost(l, k, 1 << 16, Mult3Variant::Improved).unwrap();
            assert_eq!(improved.counts.ntt, 2 * lu + 2 * ku - 4);
            assert_eq!(improved.counts.intt, 4 * lu + 2 * ku);
            assert_eq!(improved.counts.bconv, 4);
            assert_eq!(improved.counts.modmul, 32 * lu + 8 * ku - 12);
        }

        let improved = mult3_cost(24, 24, 1 << 16, Mult3Variant::Improved).unwrap();
        assert_eq!(improved.counts.ntt, 92);
        assert_eq!(improved.counts.intt, 144);
        assert_eq!(improved.counts.modmul, 948);
        assert_eq!(improved.latency_clks, 131_426);
        let prior = mult3_cost(24, 24, 1 << 16, Mult3Variant::Prior).unwrap();
        assert_eq!(prior.latency_clks, 262_822);
    }

    #[test]
    fn three_input_stage_rows() {
        let l = 24u64;
        let k = 24u64;
        let prior = mult3_cost(24, 24, 1 << 16, Mult3Variant::Prior).unwrap();
        assert_eq!(prior.stages[0].counts.modmul, 16 * l);
        assert_eq!(prior.stages[1].counts.ntt, 2 * l + 2 * k);
        assert_eq!(prior.stages[1].counts.intt, 4 * l + 2 * k);
        assert_eq!(prior.stages[2].counts.ntt, 4 * l - 6);
        assert_eq!(prior.stages[2].counts.intt, 4);

        let improved = mult3_cost(24, 24, 1 << 16, Mult3Variant::Improved).unwrap();
        assert_eq!(improved.stages[1].counts.ntt, 2 * k);
        assert_eq!(improved.stages[1].counts.intt, 4 * l + 2 * k);
        assert_eq!(improved.stages[2].counts.ntt, 2 * l - 4);
        assert_eq!(improved.stages[2].counts.intt, 0);
        // stage latencies add up to the end-to-end figure
        for rpt in [&prior, &improved] {
            let sum: u64 = rpt.stages.iter().map(|s| s.latency_clks.unwrap()).sum();
            assert_eq!(sum, rpt.latency_clks);
        }
    }

    #[test]
    fn fused_pipeline_never_costs_more() {
        for l in 2..=32usize {
            let prior = mult3_cost(l, l, 1 << 16, Mult3Variant::Prior).unwrap();
            let improved = mult3_cost(l, l, 1 << 16, Mult3Variant::Improved).unwrap();
            assert!(improved.area_xor < prior.area_xor, "area at l=k={l}");
            assert!(improved.memory_bytes < prior.memory_bytes, "memory at l=k={l}");
            assert!(improved.latency_clks < prior.latency_clks, "latency at l=k={l}");
            assert!(improved.counts.ntt <= prior.counts.ntt);
            assert!(improved.counts.intt <= prior.counts.intt);
            assert!(improved.counts.modmul <= prior.counts.modmul);
        }
    }

    #[test]
    fn rescale_cost_rows() {
        for l in 2..=24usize {
            let lu = l as u64;
            let one = multi_rs_cost(1, l).unwrap();
            assert_eq!(one.combined, RescaleCost { ntt: lu - 1, intt: 1, const_mul: 2 * lu - 2 });
            assert_eq!(
                one.conventional,
                RescaleCost { ntt: lu - 1, intt: lu, const_mul: lu - 1 }
            );
            for mu in 1..l {
                let c = multi_rs_cost(mu, l).unwrap();
                assert_eq!(c.combined.const_mul, multi_rs_const_mul_count(l, mu));
                assert_eq!(c.combined.ntt, c.conventional.ntt);
                assert!(c.combined.intt <= c.conventional.intt);
            }
            let edge = multi_rs_cost(l - 1, l).unwrap();
            assert_eq!(edge.combined.ntt, 1);
        }
        let c = multi_rs_cost(2, 24).unwrap();
        assert_eq!(c.combined.intt, 2);
        assert_eq!(c.combined.const_mul, 67);
        assert!(matches!(multi_rs_cost(0, 8), Err(Error::MuOutOfRange(0, 7))));
        assert!(matches!(multi_rs_cost(8, 8), Err(Error::MuOutOfRange(8, 7))));
    }

    #[test]
    fn rescale_cells_match_the_instrumented_kernel() {
        let ctx = build_context(1 << 5, 8, 8, 50, 50, 45, 3.2, 8, 1).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        for mu in 1..8usize {
            let x = RnsPoly::random_uniform(&ctx, 8, Domain::Evaluation, &mut rng).unwrap();
            let mut ctr = OpCounters::new();
            multi_rs(&x, mu, &ctx, &mut ctr).unwrap();
            let cells = multi_rs_cost(mu, 8).unwrap().combined;
            assert_eq!(ctr.ntt, cells.ntt, "μ={mu}");
            assert_eq!(ctr.intt, cells.intt, "μ={mu}");
            assert_eq!(ctr.const_mul, cells.const_mul, "μ={mu}");
        }
    }

    #[test]
    fn memory_budget_is_bit_exact() {
        let m = memory_model(2, 3, 24, 24, 1 << 16, 64, 1);
        assert_eq!(m.eval_key_bits, 805_306_368);
        assert_eq!(m.input_bits, 603_979_776);
        assert_eq!(m.transform_buffer_bits, 8_388_480);

        let mib = |bytes: u64| (bytes as f64 / (1u64 << 20) as f64).round() as u64;
        let prior = mult3_cost(24, 24, 1 << 16, Mult3Variant::Prior).unwrap();
        assert_eq!(prior.counts.ntt + prior.counts.intt, 334);
        assert_eq!(mib(prior.memory_bytes), 502);
        let improved = mult3_cost(24, 24, 1 << 16, Mult3Variant::Improved).unwrap();
        assert_eq!(improved.counts.ntt + improved.counts.intt, 236);
        assert_eq!(mib(improved.memory_bytes), 404);
    }

    #[test]
    fn plan_counts_match_a_hand_tally() {
        // (1,1,1) on level-8 inputs: one Karatsuba fold, one 3×2 fold, a
        // two-key relinearization at level 8, two μ=2 rescales at level 8
        let plan = plan_from_string("(1,1,1)").unwrap();
        let m = plan_counts(&plan, 8, 8).unwrap();
        assert_eq!(m.pm.modmul, 3 * 8 + 6 * 8);
        assert_eq!(m.pm.modadd, 4 * 8 + 6 * 8);
        assert_eq!(m.relin.ntt, 2 * 8 + 2 * 8);
        assert_eq!(m.relin.intt, 2 * 8 + 2 * 16);
        assert_eq!(m.relin.bconv, 4);
        assert_eq!(m.relin.modmul, 2 * 16 * 2);
        assert_eq!(m.relin.modadd, 2 * 16 + 4 * 8);
        assert_eq!(m.relin.const_mul, 2 * 8);
        assert_eq!(m.rs.intt, 4);
        assert_eq!(m.rs.ntt, 12);
        assert_eq!(m.rs.modadd, 2 * 19);
        assert_eq!(m.rs.const_mul, 2 * 19);
    }

    #[test]
    fn plan_rescale_counts_agree_with_the_unit_accounting() {
        for (n, s) in PARTITIONS {
            let plan = plan_from_string(s).unwrap();
            let m = plan_counts(&plan, 8, 8).unwrap();
            assert_eq!(
                (m.rs.ntt + m.rs.intt) as i64,
                cost_of(&plan).eval(8),
                "n={n} plan {s}"
            );
            let b = baseline_binary_plan(n);
            let mb = plan_counts(&b, 8, 8).unwrap();
            assert_eq!((mb.rs.ntt + mb.rs.intt) as i64, cost_of(&b).eval(8), "baseline n={n}");
        }
    }

    #[test]
    fn latency_stage_counts_and_ratios() {
        assert_eq!(node_stage_clks(1 << 16), 131_415);
        assert_eq!(pairwise_latency_clks(4, 1 << 16), 262_830);
        for n in 5..=8 {
            assert_eq!(pairwise_latency_clks(n, 1 << 16), 394_245);
        }
        for n in 9..=12 {
            assert_eq!(pairwise_latency_clks(n, 1 << 16), 525_660);
        }

        let segments = [2u64, 3, 3, 3, 4, 4, 3, 4, 4, 4];
        let percent = [0.0f64, 75.0, 50.0, 50.0, 66.7, 66.7, 37.5, 50.0, 50.0, 50.0];
        for (i, (n, s)) in PARTITIONS.iter().enumerate() {
            let plan = plan_from_string(s).unwrap();
            assert_eq!(plan_segments(&plan), segments[i], "n={n}");
            if *n >= 4 {
                let ratio = plan_latency_clks(&plan, 1 << 16) as f64
                    / pairwise_latency_clks(*n, 1 << 16) as f64;
                assert!((100.0 * ratio - percent[i]).abs() < 0.06, "n={n}: {ratio}");
            }
        }
    }

    #[test]
    fn plan_report_guards() {
        let plan = plan_from_string("(2,2)").unwrap();
        assert!(matches!(
            plan_cost_report(5, &plan, 8, 8, 1 << 16, 64),
            Err(Error::PlanArityMismatch { expected: 4, got: 5 })
        ));
        assert!(matches!(
            plan_counts(&plan, 2, 8),
            Err(Error::DepthBudgetExceeded { needed: 2, budget: 1 })
        ));
        assert!(mult3_cost(1, 4, 1 << 16, Mult3Variant::Prior).is_err());
    }

    #[test]
    fn plan_report_composes_its_parts() {
        let plan = plan_from_string("(3,3)").unwrap();
        let rpt = plan_cost_report(6, &plan, 8, 8, 1 << 16, 64).unwrap();
        let m = plan_counts(&plan, 8, 8).unwrap();
        assert_eq!(rpt.counts, m.total());
        assert_eq!(rpt.latency_clks, plan_latency_clks(&plan, 1 << 16));
        let mem = memory_model(5, 6, 8, 8, 1 << 16, 64, rpt.counts.ntt + rpt.counts.intt);
        assert_eq!(rpt.memory_bytes, mem.total_bytes());
        assert_eq!(rpt.stages.len(), 3);
        assert_eq!(rpt.stages[2].counts, m.rs);
    }
}
