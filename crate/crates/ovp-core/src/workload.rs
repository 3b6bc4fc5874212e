//! The encoder computation DAG and its cycle-accurate placement onto the
//! matrix multiply unit and the nonlinear vector unit.
//!
//! Per encoder and attention head `i` the graph carries the projections
//! `Q_i = X W_Qi`, `K_i = X W_Ki`, `V_i = X W_Vi`, the score matmul
//! `Q_i K_i^T` (scaled by a known constant), softmax, the context matmul
//! with `V_i`, the concatenated output projection, and the two
//! residual-add/layer-norm pairs around the GELU feed-forward block.
//!
//! Scheduling models two regimes. Layer normalization and GELU gate their
//! consumer matmul, so they stream against their producer and any
//! shortfall stalls the MMU (rate matching). Softmax is independent of
//! the other heads' projections, so under the overlap policy the context
//! matmul of head `i` is deferred until after `V_i` and head `i+1`'s
//! projections and score matmul, enlarging softmax's cycle budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("hidden size {hidden} not divisible by head count {heads}")]
    HeadsDivideHidden { hidden: usize, heads: usize },
    #[error("sequence length {0} outside 1..=512")]
    BadSeqLen(usize),
    #[error("config field {0} must be positive")]
    ZeroField(&'static str),
    #[error("graph has a dependency cycle involving node {0}")]
    CyclicGraph(usize),
    #[error("no cycle cost defined for node kind {0:?}")]
    MissingCost(NodeKind),
}

/// Shape parameters of the encoder stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder count (L).
    pub encoders: usize,
    /// Attention heads per encoder (A).
    pub heads: usize,
    /// Hidden size (H).
    pub hidden: usize,
    pub seq_len: usize,
    /// Feed-forward inner size, 4H for the standard configuration.
    pub ff_dim: usize,
}

impl ModelConfig {
    /// The 12-encoder, 12-head, 768-hidden configuration.
    pub fn bert_base(seq_len: usize) -> Self {
        Self { encoders: 12, heads: 12, hidden: 768, seq_len, ff_dim: 3072 }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Softmax pre-scale divisor `sqrt(head_dim)`.
    pub fn attention_scale(&self) -> f64 {
        libm::sqrt(self.head_dim() as f64)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        for (name, v) in [
            ("encoders", self.encoders),
            ("heads", self.heads),
            ("hidden", self.hidden),
            ("ff_dim", self.ff_dim),
        ] {
            if v == 0 {
                return Err(WorkloadError::ZeroField(name));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(WorkloadError::HeadsDivideHidden { hidden: self.hidden, heads: self.heads });
        }
        if self.seq_len == 0 || self.seq_len > 512 {
            return Err(WorkloadError::BadSeqLen(self.seq_len));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeKind {
    Matmul,
    Softmax,
    LayerNorm,
    Gelu,
    AddResidual,
}

/// What a node is for, which decides budgets and the issue order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Role {
    QProj,
    KProj,
    VProj,
    /// `Q_i K_i^T / k`.
    Scores,
    Softmax,
    /// softmax output times `V_i`.
    Context,
    OutProj,
    ResidualA,
    LayerNormA,
    Ff1,
    Gelu,
    Ff2,
    ResidualB,
    LayerNormB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dims {
    Matmul { n: usize, m: usize, k: usize },
    Elementwise { n: usize, m: usize },
}

impl Dims {
    pub fn elements(&self) -> u128 {
        match *self {
            Dims::Matmul { n, m, .. } => n as u128 * m as u128,
            Dims::Elementwise { n, m } => n as u128 * m as u128,
        }
    }

    pub fn mults(&self) -> u128 {
        match *self {
            Dims::Matmul { n, m, k } => n as u128 * m as u128 * k as u128,
            Dims::Elementwise { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub role: Role,
    pub dims: Dims,
    pub deps: Vec<usize>,
    pub encoder: usize,
    pub head: Option<usize>,
}

impl Node {
    /// Stable human-readable name, e.g. `e0.h3.softmax` or `e11.ff2`.
    pub fn label(&self) -> String {
        let role = match self.role {
            Role::QProj => "q_proj",
            Role::KProj => "k_proj",
            Role::VProj => "v_proj",
            Role::Scores => "scores",
            Role::Softmax => "softmax",
            Role::Context => "context",
            Role::OutProj => "out_proj",
            Role::ResidualA => "residual_a",
            Role::LayerNormA => "layernorm_a",
            Role::Ff1 => "ff1",
            Role::Gelu => "gelu",
            Role::Ff2 => "ff2",
            Role::ResidualB => "residual_b",
            Role::LayerNormB => "layernorm_b",
        };
        match self.head {
            Some(h) => format!("e{}.h{}.{}", self.encoder, h, role),
            None => format!("e{}.{}", self.encoder, role),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadGraph {
    cfg: ModelConfig,
    nodes: Vec<Node>,
}

impl WorkloadGraph {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    /// Total multiplies of all matmul nodes in one encoder.
    pub fn mults_per_encoder(&self) -> u128 {
        self.nodes.iter().filter(|n| n.encoder == 0).map(|n| n.dims.mults()).sum()
    }

    /// Kahn pass; returns the offending node on a cycle.
    pub fn check_acyclic(&self) -> Result<(), WorkloadError> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for node in &self.nodes {
            for &d in &node.deps {
                out[d].push(node.id);
                indegree[node.id] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop() {
            seen += 1;
            for &j in &out[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push(j);
                }
            }
        }
        if seen == n {
            Ok(())
        } else {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
            Err(WorkloadError::CyclicGraph(stuck))
        }
    }
}

/// Cycle count of an `n x m x k` matmul at the given multiplier throughput.
pub fn matmul_cycles(n: usize, m: usize, k: usize, mults_per_cycle: u64) -> u64 {
    assert!(n > 0 && m > 0 && k > 0 && mults_per_cycle > 0);
    let mults = n as u128 * m as u128 * k as u128;
    mults.div_ceil(mults_per_cycle as u128) as u64
}

/// Builds one encoder's DAG.
pub fn build_encoder_graph(cfg: &ModelConfig) -> Result<WorkloadGraph, WorkloadError> {
    build_network(&ModelConfig { encoders: 1, ..*cfg })
}

/// Builds the full `encoders`-deep network, chaining encoder outputs.
pub fn build_network(cfg: &ModelConfig) -> Result<WorkloadGraph, WorkloadError> {
    cfg.validate()?;
    let s = cfg.seq_len;
    let h = cfg.hidden;
    let d = cfg.head_dim();
    let ff = cfg.ff_dim;

    let mut nodes: Vec<Node> = Vec::new();
    let mut prev_out: Option<usize> = None;

    let mut push = |nodes: &mut Vec<Node>,
                    kind: NodeKind,
                    role: Role,
                    dims: Dims,
                    deps: Vec<usize>,
                    encoder: usize,
                    head: Option<usize>|
     -> usize {
        let id = nodes.len();
        nodes.push(Node { id, kind, role, dims, deps, encoder, head });
        id
    };

    for e in 0..cfg.encoders {
        let input_dep: Vec<usize> = prev_out.into_iter().collect();
        let mut contexts = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let hd = Some(head);
            let proj = Dims::Matmul { n: s, m: d, k: h };
            let q = push(&mut nodes, NodeKind::Matmul, Role::QProj, proj, input_dep.clone(), e, hd);
            let kp = push(&mut nodes, NodeKind::Matmul, Role::KProj, proj, input_dep.clone(), e, hd);
            let v = push(&mut nodes, NodeKind::Matmul, Role::VProj, proj, input_dep.clone(), e, hd);
            let scores = push(
                &mut nodes,
                NodeKind::Matmul,
                Role::Scores,
                Dims::Matmul { n: s, m: s, k: d },
                vec![q, kp],
                e,
                hd,
            );
            let softmax = push(
                &mut nodes,
                NodeKind::Softmax,
                Role::Softmax,
                Dims::Elementwise { n: s, m: s },
                vec![scores],
                e,
                hd,
            );
            let ctx = push(
                &mut nodes,
                NodeKind::Matmul,
                Role::Context,
                Dims::Matmul { n: s, m: d, k: s },
                vec![softmax, v],
                e,
                hd,
            );
            contexts.push(ctx);
        }
        let out_proj = push(
            &mut nodes,
            NodeKind::Matmul,
            Role::OutProj,
            Dims::Matmul { n: s, m: h, k: h },
            contexts,
            e,
            None,
        );
        let mut add_a_deps = vec![out_proj];
        add_a_deps.extend(input_dep.iter().copied());
        let add_a = push(
            &mut nodes,
            NodeKind::AddResidual,
            Role::ResidualA,
            Dims::Elementwise { n: s, m: h },
            add_a_deps,
            e,
            None,
        );
        let ln_a = push(
            &mut nodes,
            NodeKind::LayerNorm,
            Role::LayerNormA,
            Dims::Elementwise { n: s, m: h },
            vec![add_a],
            e,
            None,
        );
        let ff1 = push(
            &mut nodes,
            NodeKind::Matmul,
            Role::Ff1,
            Dims::Matmul { n: s, m: ff, k: h },
            vec![ln_a],
            e,
            None,
        );
        let gelu = push(
            &mut nodes,
            NodeKind::Gelu,
            Role::Gelu,
            Dims::Elementwise { n: s, m: ff },
            vec![ff1],
            e,
            None,
        );
        let ff2 = push(
            &mut nodes,
            NodeKind::Matmul,
            Role::Ff2,
            Dims::Matmul { n: s, m: h, k: ff },
            vec![gelu],
            e,
            None,
        );
        let add_b = push(
            &mut nodes,
            NodeKind::AddResidual,
            Role::ResidualB,
            Dims::Elementwise { n: s, m: h },
            vec![ff2, ln_a],
            e,
            None,
        );
        let ln_b = push(
            &mut nodes,
            NodeKind::LayerNorm,
            Role::LayerNormB,
            Dims::Elementwise { n: s, m: h },
            vec![add_b],
            e,
            None,
        );
        prev_out = Some(ln_b);
    }

    let graph = WorkloadGraph { cfg: *cfg, nodes };
    graph.check_acyclic()?;
    Ok(graph)
}

/// Whether nonlinear work may run concurrently with independent MMU work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    NoOverlap,
    Overlap,
}

/// How far the context matmul of head `i` is deferred past its score
/// matmul: softmax hides under this many subsequent projection matmuls
/// and score matmuls of later heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapWindow {
    pub projections: u32,
    pub attention_matmuls: u32,
}

impl Default for OverlapWindow {
    fn default() -> Self {
        // V_i plus Q/K/scores of head i+1.
        Self { projections: 3, attention_matmuls: 1 }
    }
}

impl OverlapWindow {
    /// MMU cycles softmax may hide under, for one head in steady state.
    pub fn cycles(&self, cfg: &ModelConfig, mults_per_cycle: u64) -> u64 {
        let s = cfg.seq_len;
        let d = cfg.head_dim();
        let proj = matmul_cycles(s, d, cfg.hidden, mults_per_cycle);
        let att = matmul_cycles(s, s, d, mults_per_cycle);
        self.projections as u64 * proj + self.attention_matmuls as u64 * att
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Unit {
    Mmu,
    Nvu,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleEntry {
    pub node: usize,
    pub unit: Unit,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub entries: Vec<ScheduleEntry>,
    pub total_cycles: u64,
    /// Cycles the MMU spends multiplying.
    pub mmu_busy_cycles: u64,
    /// MMU idle time attributable to waiting on the NVU.
    pub stall_cycles: u64,
}

/// List-schedules the graph. `nvu_cost` prices one NVU node in cycles
/// (zero is legal).
pub fn schedule<F: Fn(&Node) -> u64>(
    graph: &WorkloadGraph,
    nvu_cost: F,
    policy: Policy,
    mults_per_cycle: u64,
) -> Result<Schedule, WorkloadError> {
    graph.check_acyclic()?;
    let order = issue_order(graph, policy);

    let n = graph.nodes.len();
    let mut end = vec![0u64; n];
    let mut start = vec![0u64; n];
    let mut mmu_time = 0u64;
    let mut nvu_free = 0u64;
    let mut mmu_busy = 0u64;
    let mut entries = Vec::with_capacity(n);

    for &id in &order {
        let node = graph.node(id);
        match node.kind {
            NodeKind::Matmul => {
                let Dims::Matmul { n: nn, m, k } = node.dims else { unreachable!() };
                let ready = node.deps.iter().map(|&d| end[d]).max().unwrap_or(0);
                let s = mmu_time.max(ready);
                let cycles = matmul_cycles(nn, m, k, mults_per_cycle);
                start[id] = s;
                end[id] = s + cycles;
                mmu_time = end[id];
                mmu_busy += cycles;
                entries.push(ScheduleEntry { node: id, unit: Unit::Mmu, start: s, end: end[id] });
            }
            _ => {
                let cost = nvu_cost(node);
                let producers_end = node.deps.iter().map(|&d| end[d]).max().unwrap_or(0);
                let s = match policy {
                    Policy::NoOverlap => nvu_free.max(producers_end),
                    Policy::Overlap => {
                        // Rate-matched kernels stream against their
                        // producer; softmax starts once its scores are out.
                        let stream_from = node
                            .deps
                            .iter()
                            .map(|&d| match graph.node(d).kind {
                                NodeKind::Matmul if node.kind != NodeKind::Softmax => start[d],
                                _ => end[d],
                            })
                            .max()
                            .unwrap_or(0);
                        nvu_free.max(stream_from)
                    }
                };
                start[id] = s;
                end[id] = s + cost;
                nvu_free = end[id];
                entries.push(ScheduleEntry { node: id, unit: Unit::Nvu, start: s, end: end[id] });
            }
        }
    }

    let total = entries.iter().map(|e| e.end).max().unwrap_or(0);
    Ok(Schedule {
        entries,
        total_cycles: total,
        mmu_busy_cycles: mmu_busy,
        stall_cycles: total - mmu_busy,
    })
}

/// Deterministic issue order. Under overlap, the context matmul of head
/// `i` is deferred past `V_i` and head `i+1`'s projections and scores.
fn issue_order(graph: &WorkloadGraph, policy: Policy) -> Vec<usize> {
    let cfg = graph.cfg;
    let a = cfg.heads;
    let mut order = Vec::with_capacity(graph.nodes.len());

    // Node ids are assigned in construction order; rebuild them per head.
    let per_head = 6;
    for e in 0..cfg.encoders {
        let base = e * (a * per_head + 8);
        let q = |h: usize| base + h * per_head;
        let kp = |h: usize| base + h * per_head + 1;
        let v = |h: usize| base + h * per_head + 2;
        let scores = |h: usize| base + h * per_head + 3;
        let softmax = |h: usize| base + h * per_head + 4;
        let ctx = |h: usize| base + h * per_head + 5;

        match policy {
            Policy::NoOverlap => {
                for h in 0..a {
                    order.extend([q(h), kp(h), v(h), scores(h), softmax(h), ctx(h)]);
                }
            }
            Policy::Overlap => {
                order.extend([q(0), kp(0), scores(0), softmax(0)]);
                for h in 0..a {
                    order.push(v(h));
                    if h + 1 < a {
                        order.extend([q(h + 1), kp(h + 1), scores(h + 1), softmax(h + 1)]);
                    }
                    order.push(ctx(h));
                }
            }
        }

        let tail = base + a * per_head;
        // out_proj, residual_a, ln_a, ff1, gelu, ff2, residual_b, ln_b
        order.extend(tail..tail + 8);
    }
    debug_assert_eq!(order.len(), graph.nodes.len());
    order
}

/// Renders a schedule as CSV with one row per timeline entry.
pub fn schedule_to_csv(schedule: &Schedule, graph: &WorkloadGraph) -> String {
    let mut out = String::from("node,unit,start_cycle,end_cycle\n");
    for e in &schedule.entries {
        let unit = match e.unit {
            Unit::Mmu => "MMU",
            Unit::Nvu => "NVU",
        };
        out.push_str(&format!("{},{},{},{}\n", graph.node(e.node).label(), unit, e.start, e.end));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bert512() -> ModelConfig {
        ModelConfig::bert_base(512)
    }

    #[test]
    fn config_validation() {
        assert!(bert512().validate().is_ok());
        let bad = ModelConfig { heads: 7, ..bert512() };
        assert_eq!(
            bad.validate(),
            Err(WorkloadError::HeadsDivideHidden { hidden: 768, heads: 7 })
        );
        let bad = ModelConfig { seq_len: 513, ..bert512() };
        assert_eq!(bad.validate(), Err(WorkloadError::BadSeqLen(513)));
    }

    #[test]
    fn encoder_mult_count_matches_closed_form() {
        let g = build_encoder_graph(&bert512()).unwrap();
        // 36 projections + 12 scores + 12 contexts + out_proj + ff1 + ff2.
        let expect: u128 = 12 * 3 * (512 * 768 * 64)
            + 12 * (512 * 512 * 64)
            + 12 * (512 * 64 * 512)
            + 512 * 768 * 768
            + 512 * 768 * 3072
            + 512 * 3072 * 768;
        assert_eq!(g.mults_per_encoder(), expect);
        assert_eq!(expect / 2048, 1_966_080);
    }

    #[test]
    fn encoder_node_census() {
        let g = build_encoder_graph(&bert512()).unwrap();
        let count = |kind: NodeKind| g.nodes().iter().filter(|n| n.kind == kind).count();
        assert_eq!(g.nodes().len(), 80);
        assert_eq!(count(NodeKind::Matmul), 36 + 12 + 12 + 3);
        assert_eq!(count(NodeKind::Softmax), 12);
        assert_eq!(count(NodeKind::LayerNorm), 2);
        assert_eq!(count(NodeKind::Gelu), 1);
        assert_eq!(count(NodeKind::AddResidual), 2);
    }

    #[test]
    fn minimal_shape_still_builds() {
        let cfg = ModelConfig { encoders: 1, heads: 1, hidden: 64, seq_len: 1, ff_dim: 256 };
        let g = build_encoder_graph(&cfg).unwrap();
        g.check_acyclic().unwrap();
        assert_eq!(g.nodes().len(), 6 + 8);
        assert!(g.nodes().iter().any(|n| n.kind == NodeKind::Softmax));
    }

    #[test]
    fn gelu_sits_between_ff1_and_ff2() {
        let g = build_network(&ModelConfig { encoders: 2, ..bert512() }).unwrap();
        for e in 0..2 {
            let gelu = g.nodes().iter().find(|n| n.encoder == e && n.role == Role::Gelu).unwrap();
            let ff1 = g.nodes().iter().find(|n| n.encoder == e && n.role == Role::Ff1).unwrap();
            let ff2 = g.nodes().iter().find(|n| n.encoder == e && n.role == Role::Ff2).unwrap();
            assert_eq!(gelu.deps, vec![ff1.id]);
            assert!(ff2.deps.contains(&gelu.id));
        }
    }

    #[test]
    fn matmul_cycle_formula() {
        assert_eq!(matmul_cycles(512, 512, 64, 2048), 8192);
        assert_eq!(matmul_cycles(512, 768, 768, 2048), 147_456);
        assert_eq!(matmul_cycles(1, 1, 1, 1), 1);
        assert_eq!(matmul_cycles(3, 3, 3, 2048), 1); // ceil
    }

    #[test]
    fn zero_cost_nonlinearities_make_policies_equal() {
        let g = build_network(&ModelConfig::bert_base(128)).unwrap();
        let mmu_sum: u64 = g
            .nodes()
            .iter()
            .filter_map(|n| match n.dims {
                Dims::Matmul { n: nn, m, k } => Some(matmul_cycles(nn, m, k, 2048)),
                _ => None,
            })
            .sum();
        for policy in [Policy::NoOverlap, Policy::Overlap] {
            let s = schedule(&g, |_| 0, policy, 2048).unwrap();
            assert_eq!(s.total_cycles, mmu_sum);
            assert_eq!(s.stall_cycles, 0);
        }
    }

    #[test]
    fn overlap_strictly_beats_no_overlap_with_softmax_cost() {
        let g = build_network(&ModelConfig::bert_base(128)).unwrap();
        let cost = |n: &Node| match n.kind {
            NodeKind::Softmax => 1000,
            _ => 0,
        };
        let a = schedule(&g, cost, Policy::NoOverlap, 2048).unwrap();
        let b = schedule(&g, cost, Policy::Overlap, 2048).unwrap();
        assert!(a.total_cycles > b.total_cycles, "{} vs {}", a.total_cycles, b.total_cycles);
    }

    #[test]
    fn schedule_respects_dependencies_and_unit_exclusivity() {
        let g = build_network(&ModelConfig::bert_base(64)).unwrap();
        let cost = |n: &Node| match n.kind {
            NodeKind::Matmul => 0,
            _ => (n.dims.elements() / 4) as u64 + 17,
        };
        for policy in [Policy::NoOverlap, Policy::Overlap] {
            let s = schedule(&g, cost, policy, 2048).unwrap();
            let by_id: std::collections::HashMap<usize, &ScheduleEntry> =
                s.entries.iter().map(|e| (e.node, e)).collect();
            for e in &s.entries {
                for &d in &g.node(e.node).deps {
                    let dep = by_id[&d];
                    if e.unit == Unit::Mmu || dep.unit == Unit::Nvu {
                        assert!(
                            e.start >= dep.end,
                            "{} starts before {} ends",
                            g.node(e.node).label(),
                            g.node(d).label()
                        );
                    } else {
                        // Streaming: an NVU kernel may overlap its
                        // producer matmul but never precede it.
                        assert!(e.start >= dep.start);
                    }
                }
            }
            for unit in [Unit::Mmu, Unit::Nvu] {
                let mut spans: Vec<(u64, u64)> = s
                    .entries
                    .iter()
                    .filter(|e| e.unit == unit)
                    .map(|e| (e.start, e.end))
                    .collect();
                spans.sort_unstable();
                for w in spans.windows(2) {
                    assert!(w[0].1 <= w[1].0, "unit overlap: {:?}", w);
                }
            }
        }
    }

    #[test]
    fn stall_accounting_adds_up() {
        let g = build_network(&ModelConfig::bert_base(64)).unwrap();
        let cost = |n: &Node| match n.kind {
            NodeKind::Softmax => 50_000,
            _ => 0,
        };
        let s = schedule(&g, cost, Policy::Overlap, 2048).unwrap();
        assert_eq!(s.total_cycles, s.mmu_busy_cycles + s.stall_cycles);
        assert!(s.stall_cycles > 0);
    }

    #[test]
    fn csv_export_has_one_row_per_node() {
        let g = build_encoder_graph(&ModelConfig::bert_base(64)).unwrap();
        let s = schedule(&g, |_| 1, Policy::Overlap, 2048).unwrap();
        let csv = schedule_to_csv(&s, &g);
        assert_eq!(csv.lines().count(), 1 + g.nodes().len());
        assert!(csv.starts_with("node,unit,start_cycle,end_cycle\n"));
        assert!(csv.contains("e0.h0.softmax,NVU"));
    }

    #[test]
    fn overlap_window_cycles() {
        let w = OverlapWindow::default();
        assert_eq!(w.cycles(&bert512(), 2048), 3 * 12_288 + 8192);
        let w0 = OverlapWindow { projections: 0, attention_matmuls: 0 };
        assert_eq!(w0.cycles(&bert512(), 2048), 0);
    }
}
