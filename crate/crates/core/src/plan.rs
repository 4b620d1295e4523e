//! Partition trees for multi-input multiplication: parsing, validation,
//! costing, and optimization under a multiplicative-depth budget.
//!
//! A plan describes how n fresh ciphertexts are grouped into a tree of
//! tuple products. Leaf groups multiply raw inputs directly; internal nodes
//! multiply their children's (already rescaled) outputs. Only the root is
//! relinearized. Rescaling cost is counted in "units": one unit rescales one
//! polynomial of a node's output tuple, and a unit applied at active level ℓ
//! spends exactly ℓ (I)NTT transforms regardless of how many levels are
//! combined — that equality is what makes grouping profitable.
//!
//! Nodes are scheduled just-in-time: dropping residues is free, so a group
//! off the critical path drops its operands to its deepest sibling's level
//! first and runs all of its transforms there. Costing and execution both
//! follow that schedule.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// One node of a partition tree. `Leaf(g)` multiplies g raw ciphertexts in
/// one tuple product (g = 1 is a pass-through input); `Node` multiplies the
/// outputs of its children.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PlanNode {
    Leaf(usize),
    Node(Vec<PlanNode>),
}

impl PlanNode {
    /// Number of raw input ciphertexts consumed by this subtree.
    pub fn input_count(&self) -> usize {
        match self {
            PlanNode::Leaf(g) => *g,
            PlanNode::Node(ch) => ch.iter().map(|c| c.input_count()).sum(),
        }
    }

    /// Size of the polynomial tuple this node outputs (before any root
    /// relinearization). A product of tuples of sizes T_i has size
    /// Σ(T_i − 1) + 1.
    pub fn tuple_size(&self) -> usize {
        match self {
            PlanNode::Leaf(g) => g + 1,
            PlanNode::Node(ch) => ch.iter().map(|c| c.tuple_size() - 1).sum::<usize>() + 1,
        }
    }

    /// Levels this node's own rescaling combines: its output carries scale
    /// exponent (number of factors multiplied) and is brought back to 1.
    pub fn rescale_mu(&self) -> usize {
        match self {
            PlanNode::Leaf(g) => g - 1,
            PlanNode::Node(ch) => ch.len() - 1,
        }
    }

    /// Depth already consumed below this node — the node runs at active
    /// level L − child_depth.
    pub fn child_depth(&self) -> usize {
        match self {
            PlanNode::Leaf(_) => 0,
            PlanNode::Node(ch) => ch.iter().map(|c| c.out_depth()).max().unwrap_or(0),
        }
    }

    /// Total levels consumed by this subtree, including this node's own
    /// rescaling.
    pub fn out_depth(&self) -> usize {
        self.child_depth() + self.rescale_mu()
    }

    /// Structural validation: internal nodes need ≥ 2 children, leaf groups
    /// ≥ 1 input.
    pub fn validate(&self) -> Result<()> {
        match self {
            PlanNode::Leaf(0) => Err(Error::PlanParse("empty leaf group".into())),
            PlanNode::Leaf(_) => Ok(()),
            PlanNode::Node(ch) if ch.len() < 2 => Err(Error::PlanParse(
                "internal nodes must combine at least two groups".into(),
            )),
            PlanNode::Node(ch) => ch.iter().try_for_each(|c| c.validate()),
        }
    }

    /// Sorts every child list into canonical order: larger input counts
    /// first, internal nodes before leaf groups of the same size, then by
    /// rendered string.
    pub fn canonicalize(&mut self) {
        if let PlanNode::Node(ch) = self {
            for c in ch.iter_mut() {
                c.canonicalize();
            }
            ch.sort_by(|a, b| {
                b.input_count()
                    .cmp(&a.input_count())
                    .then_with(|| {
                        let rank = |n: &PlanNode| matches!(n, PlanNode::Leaf(_)) as u8;
                        rank(a).cmp(&rank(b))
                    })
                    .then_with(|| a.to_string().cmp(&b.to_string()))
            });
        }
    }
}

/// Total multiplicative depth of the plan: rescale levels along the heaviest
/// root-leaf path, including the root's own post-relinearization levels.
pub fn depth_of(plan: &PlanNode) -> usize {
    plan.out_depth()
}

/// A linear polynomial a·L + b used for symbolic (I)NTT counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinExpr {
    pub l_coeff: i64,
    pub constant: i64,
}

impl LinExpr {
    pub const ZERO: LinExpr = LinExpr { l_coeff: 0, constant: 0 };

    pub fn new(l_coeff: i64, constant: i64) -> LinExpr {
        LinExpr { l_coeff, constant }
    }

    pub fn eval(&self, l: i64) -> i64 {
        self.l_coeff * l + self.constant
    }

    pub fn add(&self, other: LinExpr) -> LinExpr {
        LinExpr {
            l_coeff: self.l_coeff + other.l_coeff,
            constant: self.constant + other.constant,
        }
    }

    pub fn scale(&self, k: i64) -> LinExpr {
        LinExpr {
            l_coeff: self.l_coeff * k,
            constant: self.constant * k,
        }
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.l_coeff, self.constant) {
            (0, c) => write!(f, "{c}"),
            (1, 0) => write!(f, "L"),
            (a, 0) => write!(f, "{a}L"),
            (1, c) if c < 0 => write!(f, "L\u{2212}{}", -c),
            (1, c) => write!(f, "L+{c}"),
            (a, c) if c < 0 => write!(f, "{a}L\u{2212}{}", -c),
            (a, c) => write!(f, "{a}L+{c}"),
        }
    }
}

/// Rescaling cost of a plan, split into the intermediate units applied at
/// tree nodes and the two final units after the root relinearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanCost {
    /// Combined rescaling passes on intermediate node outputs (one per
    /// polynomial per node).
    pub rs_units: u64,
    /// Equivalent single-level rescalings (units weighted by levels folded).
    pub rs_singles: u64,
    /// Symbolic (I)NTT count of the intermediate units: Σ tuple·(L − depth).
    pub inner_expr: LinExpr,
    /// Final rescaling passes on the two relinearized root outputs.
    pub final_units: u64,
    /// Symbolic (I)NTT count of the final units: 2·(L − depth below root).
    pub final_expr: LinExpr,
}

impl PlanCost {
    pub fn total_expr(&self) -> LinExpr {
        self.inner_expr.add(self.final_expr)
    }

    pub fn eval(&self, l: i64) -> i64 {
        self.total_expr().eval(l)
    }
}

impl fmt::Display for PlanCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}+{} ({} + {})",
            self.rs_units, self.final_units, self.inner_expr, self.final_expr
        )
    }
}

/// Rescaling-unit accounting for a plan. Every node runs just-in-time:
/// operands are dropped (for free) to the lowest level compatible with the
/// node's slot in the schedule before any transform runs, so a group off
/// the critical path rescales at the same, deeper level as its heaviest
/// sibling. Each non-root node with output tuple size T therefore
/// contributes T units at level L − (assigned output depth − μ); the root
/// contributes 2 units (its relinearized outputs) at its own entry level.
/// Pass-through inputs cost nothing.
pub fn cost_of(plan: &PlanNode) -> PlanCost {
    // assigned_out ≥ natural out_depth always: the root hands its children
    // its realized child depth, and each node passes entry = assigned − μ
    // down, which dominates the children's own depths by induction.
    fn walk(node: &PlanNode, assigned_out: usize, cost: &mut PlanCost) {
        if node.input_count() == 1 {
            return;
        }
        let mu = node.rescale_mu();
        let entry = assigned_out - mu;
        let t = node.tuple_size() as i64;
        cost.rs_units += t as u64;
        cost.rs_singles += (t as usize * mu) as u64;
        cost.inner_expr = cost.inner_expr.add(LinExpr::new(t, -t * entry as i64));
        if let PlanNode::Node(ch) = node {
            for c in ch {
                walk(c, entry, cost);
            }
        }
    }
    let mut cost = PlanCost {
        rs_units: 0,
        rs_singles: 0,
        inner_expr: LinExpr::ZERO,
        final_units: 2,
        final_expr: LinExpr::ZERO,
    };
    let entry = plan.child_depth();
    if let PlanNode::Node(ch) = plan {
        for c in ch {
            walk(c, entry, &mut cost);
        }
    }
    cost.final_expr = LinExpr::new(2, -2 * entry as i64);
    cost
}

// ---------------------------------------------------------------------------
// text form

impl fmt::Display for PlanNode {
    /// Layer notation: groups within a layer are comma-separated in
    /// parentheses; each subsequent layer lists, in order, the refinements
    /// of the previous layer's internal groups; layers are joined by '|'.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let root_children: Vec<&PlanNode> = match self {
            PlanNode::Leaf(g) => return write!(f, "({g})"),
            PlanNode::Node(ch) => ch.iter().collect(),
        };
        // first layer: every root group; later layers: the children of the
        // previous layer's internal groups, one parenthesized list each
        let mut text = String::from("(");
        for (i, c) in root_children.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            text.push_str(&c.input_count().to_string());
        }
        text.push(')');
        write!(f, "{text}")?;
        let mut layer = root_children;
        loop {
            let mut text = String::new();
            let mut next: Vec<&PlanNode> = Vec::new();
            for node in &layer {
                if let PlanNode::Node(ch) = node {
                    if !text.is_empty() {
                        text.push(',');
                    }
                    text.push('(');
                    for (i, c) in ch.iter().enumerate() {
                        if i > 0 {
                            text.push(',');
                        }
                        text.push_str(&c.input_count().to_string());
                        next.push(c);
                    }
                    text.push(')');
                }
            }
            if next.is_empty() {
                break;
            }
            write!(f, "|{text}")?;
            layer = next;
        }
        Ok(())
    }
}

fn parse_layer(s: &str) -> Result<Vec<Vec<usize>>> {
    let mut groups = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        if !rest.starts_with('(') {
            return Err(Error::PlanParse(format!("expected '(' at \"{rest}\"")));
        }
        let close = rest
            .find(')')
            .ok_or_else(|| Error::PlanParse(format!("unclosed group in \"{s}\"")))?;
        let inner = &rest[1..close];
        let sizes: Vec<usize> = inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::PlanParse(format!("bad group size \"{t}\"")))
            })
            .collect::<Result<_>>()?;
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::PlanParse("group sizes must be positive".into()));
        }
        groups.push(sizes);
        rest = &rest[close + 1..];
        if let Some(r) = rest.strip_prefix(',') {
            rest = r;
        } else if !rest.is_empty() {
            return Err(Error::PlanParse(format!("expected ',' between groups at \"{rest}\"")));
        }
    }
    if groups.is_empty() {
        return Err(Error::PlanParse("empty layer".into()));
    }
    Ok(groups)
}

/// Parses the layer notation. Refinement lists in each layer attach to the
/// previous layer's groups in descending size order (left-to-right among
/// equals); every refinement must sum to the size of the group it splits.
pub fn plan_from_string(s: &str) -> Result<PlanNode> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(Error::PlanParse("empty plan".into()));
    }
    let mut layers = s.split('|');
    let first = parse_layer(layers.next().unwrap())?;
    if first.len() != 1 {
        return Err(Error::PlanParse(
            "the first layer must be a single parenthesized partition".into(),
        ));
    }
    let mut root_children: Vec<PlanNode> =
        first[0].iter().map(|&g| PlanNode::Leaf(g)).collect();
    if root_children.len() == 1 {
        // a single top group degenerates to one leaf multiplication
        let mut node = root_children.pop().unwrap();
        for layer in layers {
            // refining a lone group replaces it outright
            let groups = parse_layer(layer)?;
            if groups.len() != 1 {
                return Err(Error::RefinementMismatch(
                    "one group admits one refinement per layer".into(),
                ));
            }
            let g = node.input_count();
            let sum: usize = groups[0].iter().sum();
            if sum != g {
                return Err(Error::RefinementMismatch(format!(
                    "refinement sums to {sum}, group holds {g}"
                )));
            }
            if groups[0].len() < 2 {
                return Err(Error::RefinementMismatch(
                    "refinements must split into at least two groups".into(),
                ));
            }
            node = PlanNode::Node(groups[0].iter().map(|&x| PlanNode::Leaf(x)).collect());
        }
        node.validate()?;
        return Ok(node);
    }

    // frontier: leaves created by the previous layer, refinable this layer
    let n_groups = root_children.len();
    let mut root = PlanNode::Node(root_children);
    let mut frontier: Vec<Vec<usize>> = (0..n_groups).map(|i| vec![i]).collect();
    for layer in layers {
        let refinements = parse_layer(layer)?;
        // order the refinable groups by descending size, stable
        let mut order: Vec<(usize, Vec<usize>)> = frontier
            .iter()
            .map(|path| (leaf_size_at(&root, path), path.clone()))
            .collect();
        order.sort_by_key(|(size, _)| Reverse(*size));
        if refinements.len() > order.len() {
            return Err(Error::RefinementMismatch(format!(
                "layer lists {} refinements for {} groups",
                refinements.len(),
                order.len()
            )));
        }
        let mut next_frontier = Vec::new();
        for (refinement, (size, path)) in refinements.iter().zip(&order) {
            let sum: usize = refinement.iter().sum();
            if sum != *size {
                return Err(Error::RefinementMismatch(format!(
                    "refinement sums to {sum}, group holds {size}"
                )));
            }
            if refinement.len() < 2 {
                return Err(Error::RefinementMismatch(
                    "refinements must split into at least two groups".into(),
                ));
            }
            let children: Vec<PlanNode> =
                refinement.iter().map(|&g| PlanNode::Leaf(g)).collect();
            for (i, _) in children.iter().enumerate() {
                let mut p = path.clone();
                p.push(i);
                next_frontier.push(p);
            }
            replace_at(&mut root, path, PlanNode::Node(children));
        }
        frontier = next_frontier;
    }
    root.validate()?;
    Ok(root)
}

fn leaf_size_at(root: &PlanNode, path: &[usize]) -> usize {
    node_at(root, path).input_count()
}

fn node_at<'a>(root: &'a PlanNode, path: &[usize]) -> &'a PlanNode {
    let mut cur = root;
    for &i in path {
        match cur {
            PlanNode::Node(ch) => cur = &ch[i],
            PlanNode::Leaf(_) => unreachable!("path descends into a leaf"),
        }
    }
    cur
}

fn replace_at(root: &mut PlanNode, path: &[usize], new: PlanNode) {
    if path.is_empty() {
        *root = new;
        return;
    }
    match root {
        PlanNode::Node(ch) => replace_at(&mut ch[path[0]], &path[1..], new),
        PlanNode::Leaf(_) => unreachable!("path descends into a leaf"),
    }
}

/// The conventional comparison tree: repeatedly split off the largest power
/// of two, down to pairs, with a single rescaling at every node and one
/// relinearization at the root.
pub fn baseline_binary_plan(n: usize) -> PlanNode {
    fn build(n: usize) -> PlanNode {
        match n {
            1 => PlanNode::Leaf(1),
            2 => PlanNode::Leaf(2),
            _ => {
                let m = if n.is_power_of_two() {
                    n / 2
                } else {
                    usize::pow(2, (usize::BITS - 1 - n.leading_zeros()) as u32)
                };
                PlanNode::Node(vec![build(m), build(n - m)])
            }
        }
    }
    build(n)
}

// ---------------------------------------------------------------------------
// optimization

/// Reference level at which symbolic costs are compared during search.
pub const REFERENCE_L: i64 = 24;

#[derive(Clone)]
struct Candidate {
    tree: PlanNode,
    units: u64,
    singles: u64,
    inner: LinExpr,
}

impl Candidate {
    fn key(&self) -> (i64, u64, usize, String) {
        // prefer terminating leaf groups over equivalent singleton fan-outs
        let leaf_rank = match &self.tree {
            PlanNode::Leaf(_) => 0,
            PlanNode::Node(_) => 1,
        };
        (
            self.inner.eval(REFERENCE_L),
            self.units,
            leaf_rank,
            self.tree.to_string(),
        )
    }
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    a.key() < b.key()
}

type Memo = HashMap<(usize, usize, bool), Option<Candidate>>;

/// Cheapest subtree over `g` fresh inputs scheduled to output at depth `d`:
/// its inputs are pre-dropped as far as the slot allows, so cost is
/// monotone non-increasing in `d`. With `exact`, the structure itself must
/// realize depth `d` naturally — the root needs one such child to pin its
/// entry level. Cost covers every node inside the subtree (all of which
/// are non-root in the full plan).
fn best_subtree(g: usize, d: usize, exact: bool, memo: &mut Memo) -> Option<Candidate> {
    if let Some(hit) = memo.get(&(g, d, exact)) {
        return hit.clone();
    }
    let mut best: Option<Candidate> = None;
    let consider = |cand: Candidate, best: &mut Option<Candidate>| {
        if best.as_ref().map_or(true, |b| better(&cand, b)) {
            *best = Some(cand);
        }
    };
    if g == 1 {
        if !exact || d == 0 {
            consider(
                Candidate {
                    tree: PlanNode::Leaf(1),
                    units: 0,
                    singles: 0,
                    inner: LinExpr::ZERO,
                },
                &mut best,
            );
        }
    } else {
        if d >= g - 1 && (!exact || d == g - 1) {
            // multiply the whole group at once, combine g−1 levels
            let t = (g + 1) as i64;
            let entry = (d - (g - 1)) as i64;
            consider(
                Candidate {
                    tree: PlanNode::Leaf(g),
                    units: (g + 1) as u64,
                    singles: ((g + 1) * (g - 1)) as u64,
                    inner: LinExpr::new(t, -t * entry),
                },
                &mut best,
            );
        }
        for parts in descending_compositions(g) {
            let a = parts.len();
            if a < 2 || a - 1 > d {
                continue;
            }
            let e = d - (a - 1); // children's scheduled output depth
            if !exact {
                if let Some(cand) = assemble(&parts, e, None, memo) {
                    consider(cand, &mut best);
                }
            } else {
                // one child must realize depth e; trying each distinct size
                // once covers all placements
                for j in 0..a {
                    if j > 0 && parts[j] == parts[j - 1] {
                        continue;
                    }
                    if let Some(cand) = assemble(&parts, e, Some(j), memo) {
                        consider(cand, &mut best);
                    }
                }
            }
        }
    }
    memo.insert((g, d, exact), best.clone());
    best
}

/// Assembles an internal node over the given part sizes with every child
/// scheduled at output depth `e`; `realizer` picks the child required to
/// reach `e` naturally.
fn assemble(
    parts: &[usize],
    e: usize,
    realizer: Option<usize>,
    memo: &mut Memo,
) -> Option<Candidate> {
    let mut children: Vec<Candidate> = Vec::with_capacity(parts.len());
    for (i, &p) in parts.iter().enumerate() {
        children.push(best_subtree(p, e, realizer == Some(i), memo)?);
    }
    let tuple: i64 = children
        .iter()
        .map(|c| c.tree.tuple_size() as i64 - 1)
        .sum::<i64>()
        + 1;
    let mu = parts.len() - 1;
    let mut node = PlanNode::Node(children.iter().map(|c| c.tree.clone()).collect());
    node.canonicalize();
    Some(Candidate {
        tree: node,
        units: children.iter().map(|c| c.units).sum::<u64>() + tuple as u64,
        singles: children.iter().map(|c| c.singles).sum::<u64>() + (tuple as usize * mu) as u64,
        inner: children
            .iter()
            .fold(LinExpr::ZERO, |acc, c| acc.add(c.inner))
            .add(LinExpr::new(tuple, -tuple * e as i64)),
    })
}

/// All multisets of part sizes (descending) summing to g.
fn descending_compositions(g: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for p in (1..=rest.min(max)).rev() {
            cur.push(p);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(g, g, &mut Vec::new(), &mut out);
    out
}

/// Finds a cheapest plan for n inputs within the depth budget
/// (⌈log₂ n⌉ by default): minimizes the symbolic (I)NTT count at the
/// reference level, then the unit count, then the rendered string.
pub fn optimize_partition(n: usize, depth_budget: Option<usize>) -> Result<(PlanNode, PlanCost)> {
    if !(2..=24).contains(&n) {
        return Err(Error::Parameter(format!(
            "partition search supports 2..=24 inputs, got {n}"
        )));
    }
    let budget = depth_budget.unwrap_or_else(|| (usize::BITS - (n - 1).leading_zeros()) as usize);
    let min_depth = (usize::BITS - (n - 1).leading_zeros()) as usize;
    if budget < min_depth {
        return Err(Error::DepthBudgetExceeded {
            needed: min_depth,
            budget,
        });
    }
    let mut memo: Memo = HashMap::new();
    let mut best: Option<(PlanNode, PlanCost, (i64, u64, String))> = None;
    for parts in descending_compositions(n) {
        let m = parts.len();
        if m < 2 || m - 1 > budget {
            continue;
        }
        // d_star: the root's realized child depth — one child must reach it
        // naturally, the rest are scheduled (pre-dropped) to it
        for d_star in 0..=(budget - (m - 1)) {
            for j in 0..m {
                if j > 0 && parts[j] == parts[j - 1] {
                    continue;
                }
                let Some(root) = assemble(&parts, d_star, Some(j), &mut memo) else {
                    continue;
                };
                // the assembled node is the root: its tuple product is
                // relinearized, so its own rescale becomes the two final
                // units and drops out of the intermediate accounting
                let t = root.tree.tuple_size() as i64;
                let cost = PlanCost {
                    rs_units: root.units - t as u64,
                    rs_singles: root.singles - (t as usize * (m - 1)) as u64,
                    inner_expr: root.inner.add(LinExpr::new(-t, t * d_star as i64)),
                    final_units: 2,
                    final_expr: LinExpr::new(2, -2 * d_star as i64),
                };
                let key = (
                    cost.eval(REFERENCE_L),
                    cost.rs_units,
                    root.tree.to_string(),
                );
                if best.as_ref().map_or(true, |(_, _, k)| key < *k) {
                    best = Some((root.tree.clone(), cost, key));
                }
            }
        }
    }
    let (tree, cost, _) = best.ok_or(Error::SearchSpaceExhausted)?;
    Ok((tree, cost))
}
