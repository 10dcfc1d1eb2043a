//! Feed-forward NQS computation graphs.
//!
//! A graph has `n` spin inputs, any number of linear and nonlinear nodes,
//! and exactly one output node. Edges carry complex weights; a source is
//! either a spin (`s_i`, 0-based) or another node.

mod json;
mod reduce;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use crate::activations::Activation;
use crate::error::{NqsError, NqsResult};
use crate::spin::{spin_of, SpinConfig};
use crate::C64;

pub use json::{GraphDoc, GRAPH_SCHEMA_VERSION};
pub use reduce::{feature_reduce, ReducedForm, DEPENDENCE_TOL};

/// Largest real part accepted in a log-amplitude before `exp`.
pub const LOG_AMPLITUDE_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Spin(usize),
    Node(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: Source,
    pub weight: C64,
}

impl Edge {
    pub fn spin(i: usize, w: f64) -> Self {
        Self { from: Source::Spin(i), weight: C64::new(w, 0.0) }
    }

    pub fn node(id: usize, w: f64) -> Self {
        Self { from: Source::Node(id), weight: C64::new(w, 0.0) }
    }

    pub fn node_c(id: usize, w: C64) -> Self {
        Self { from: Source::Node(id), weight: w }
    }

    pub fn spin_c(i: usize, w: C64) -> Self {
        Self { from: Source::Spin(i), weight: w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Amplitude,
    /// The output value is a log-amplitude; `eval` returns its exponential.
    LogAmplitude,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input { index: usize },
    Linear,
    Nonlinear(Activation),
    Output(OutputMode),
}

/// `value = σ(bias + Σ weight · source)`, with σ the identity except for
/// nonlinear nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub inputs: Vec<Edge>,
    pub bias: C64,
}

impl Node {
    pub fn input(id: usize, index: usize) -> Self {
        Self { id, kind: NodeKind::Input { index }, inputs: vec![], bias: C64::new(0.0, 0.0) }
    }

    pub fn linear(id: usize, inputs: Vec<Edge>, bias: f64) -> Self {
        Self { id, kind: NodeKind::Linear, inputs, bias: C64::new(bias, 0.0) }
    }

    pub fn nonlinear(id: usize, act: Activation, inputs: Vec<Edge>, bias: f64) -> Self {
        Self { id, kind: NodeKind::Nonlinear(act), inputs, bias: C64::new(bias, 0.0) }
    }

    pub fn output(id: usize, mode: OutputMode, inputs: Vec<Edge>, bias: C64) -> Self {
        Self { id, kind: NodeKind::Output(mode), inputs, bias }
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(self.kind, NodeKind::Nonlinear(_))
    }
}

/// One step of the compiled forward pass. Slots `0..n` hold spins; node
/// `order[j]` writes slot `n + j`.
#[derive(Debug, Clone)]
struct Op {
    kind: OpKind,
    bias: C64,
    edges: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
enum OpKind {
    Input(usize),
    Affine,
    Nonlinear(Activation),
}

#[derive(Debug, Clone)]
struct Program {
    ops: Vec<Op>,
    edges: Vec<(usize, C64)>,
    ids: Vec<usize>,
}

/// Validated, topologically sorted computation graph.
#[derive(Debug, Clone)]
pub struct ComputationGraph {
    n: usize,
    nodes: Vec<Node>,
    index: HashMap<usize, usize>,
    order: Vec<usize>,
    output: usize,
    output_mode: OutputMode,
    dead: Vec<bool>,
    constant: Vec<bool>,
    program: Program,
}

impl ComputationGraph {
    /// Validate structure and acyclicity, sort, and flag dead nodes.
    pub fn new(n: usize, nodes: Vec<Node>) -> NqsResult<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                return Err(NqsError::Contract(format!("duplicate node id {}", node.id)));
            }
        }
        let outputs: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, v)| matches!(v.kind, NodeKind::Output(_)))
            .map(|(i, _)| i)
            .collect();
        if outputs.len() != 1 {
            return Err(NqsError::Contract(format!(
                "graph needs exactly one output node, found {}",
                outputs.len()
            )));
        }
        let output = outputs[0];
        let output_mode = match nodes[output].kind {
            NodeKind::Output(m) => m,
            _ => unreachable!(),
        };
        for node in &nodes {
            if let NodeKind::Input { index: i } = node.kind {
                if i >= n {
                    return Err(NqsError::Contract(format!("input node {} reads spin {i} >= n = {n}", node.id)));
                }
                if !node.inputs.is_empty() {
                    return Err(NqsError::Contract(format!("input node {} has predecessors", node.id)));
                }
            }
            for e in &node.inputs {
                match e.from {
                    Source::Spin(i) if i >= n => {
                        return Err(NqsError::Contract(format!("node {} reads spin {i} >= n = {n}", node.id)))
                    }
                    Source::Node(u) => match index.get(&u) {
                        None => {
                            return Err(NqsError::Contract(format!("node {} reads unknown node {u}", node.id)))
                        }
                        Some(&ui) if ui == output => {
                            return Err(NqsError::Contract(format!("node {} reads the output node", node.id)))
                        }
                        _ => {}
                    },
                    _ => {}
                }
                if !(e.weight.re.is_finite() && e.weight.im.is_finite()) {
                    return Err(NqsError::Contract(format!("non-finite weight into node {}", node.id)));
                }
            }
            if !(node.bias.re.is_finite() && node.bias.im.is_finite()) {
                return Err(NqsError::Contract(format!("non-finite bias on node {}", node.id)));
            }
        }
        let order = topo_sort(&nodes, &index)?;
        let (dead, constant) = liveness(&nodes, &index, output);
        let program = compile(n, &nodes, &index, &order);
        Ok(Self { n, nodes, index, order, output, output_mode, dead, constant, program })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nonlinear nodes.
    pub fn k(&self) -> usize {
        self.nodes.iter().filter(|v| v.is_nonlinear()).count()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn output_node(&self) -> &Node {
        &self.nodes[self.output]
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    /// Node ids in topological order.
    pub fn topological_order(&self) -> Vec<usize> {
        self.order.iter().map(|&i| self.nodes[i].id).collect()
    }

    /// Ids of nodes with no path to the output.
    pub fn dead_nodes(&self) -> Vec<usize> {
        self.nodes.iter().zip(&self.dead).filter(|(_, &d)| d).map(|(v, _)| v.id).collect()
    }

    /// Ids of nodes whose value does not depend on any spin.
    pub fn constant_nodes(&self) -> Vec<usize> {
        self.nodes.iter().zip(&self.constant).filter(|(_, &c)| c).map(|(v, _)| v.id).collect()
    }

    /// Copy without dead nodes.
    pub fn eliminate_dead(&self) -> ComputationGraph {
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .zip(&self.dead)
            .filter(|(_, &d)| !d)
            .map(|(v, _)| v.clone())
            .collect();
        ComputationGraph::new(self.n, nodes).expect("subgraph of a valid graph is valid")
    }

    /// Nodes in topological order, for consumers that walk the graph.
    pub fn sorted_nodes(&self) -> impl Iterator<Item = &Node> {
        self.order.iter().map(move |&i| &self.nodes[i])
    }

    /// Scratch buffer sized for [`Self::eval_bits_with`].
    pub fn scratch(&self) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.n + self.program.ops.len()]
    }

    /// Amplitude at the configuration `bits`.
    pub fn eval_bits(&self, bits: u64) -> NqsResult<C64> {
        let mut buf = self.scratch();
        self.eval_bits_with(bits, &mut buf)
    }

    pub fn eval_bits_with(&self, bits: u64, buf: &mut [C64]) -> NqsResult<C64> {
        for (i, slot) in buf.iter_mut().enumerate().take(self.n) {
            *slot = C64::new(spin_of(bits, i), 0.0);
        }
        self.run(buf).map_err(|e| match e {
            NqsError::AmplitudeOverflow { .. } => NqsError::AmplitudeOverflow { config: bits },
            other => other,
        })
    }

    /// Evaluate with arbitrary (possibly complex) values on the `n` inputs.
    pub fn eval_inputs(&self, inputs: &[C64]) -> NqsResult<C64> {
        let mut buf = self.scratch();
        self.eval_inputs_with(inputs, &mut buf)
    }

    pub fn eval_inputs_with(&self, inputs: &[C64], buf: &mut [C64]) -> NqsResult<C64> {
        if inputs.len() != self.n {
            return Err(NqsError::Dimension { expected: self.n, got: inputs.len() });
        }
        buf[..self.n].copy_from_slice(inputs);
        self.run(buf)
    }

    fn run(&self, buf: &mut [C64]) -> NqsResult<C64> {
        let p = &self.program;
        for (j, op) in p.ops.iter().enumerate() {
            let v = match &op.kind {
                OpKind::Input(i) => buf[*i],
                OpKind::Affine | OpKind::Nonlinear(_) => {
                    let mut acc = op.bias;
                    for &(slot, w) in &p.edges[op.edges.clone()] {
                        acc += w * buf[slot];
                    }
                    if let OpKind::Nonlinear(act) = &op.kind {
                        if !(acc.re.is_finite() && acc.im.is_finite()) {
                            return Err(NqsError::AmplitudeOverflow { config: 0 });
                        }
                        act.apply_complex(acc).map_err(|e| match e {
                            NqsError::Domain(m) => NqsError::Domain(format!("node {}: {m}", p.ids[j])),
                            other => other,
                        })?
                    } else {
                        acc
                    }
                }
            };
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(NqsError::AmplitudeOverflow { config: 0 });
            }
            buf[self.n + j] = v;
        }
        let out = buf[self.n + p.ops.len() - 1];
        match self.output_mode {
            OutputMode::Amplitude => Ok(out),
            OutputMode::LogAmplitude => {
                if out.re > LOG_AMPLITUDE_LIMIT {
                    return Err(NqsError::AmplitudeOverflow { config: 0 });
                }
                Ok(out.exp())
            }
        }
    }
}

/// Topological order of node ids (Kahn's algorithm, lowest id first).
pub fn validate_and_sort(g: &ComputationGraph) -> Vec<usize> {
    g.topological_order()
}

/// Amplitude of `s` by a forward pass in topological order.
pub fn eval_full(g: &ComputationGraph, s: &SpinConfig) -> NqsResult<C64> {
    if s.n != g.n() {
        return Err(NqsError::Dimension { expected: g.n(), got: s.n });
    }
    g.eval_bits(s.bits)
}

fn predecessors(node: &Node, index: &HashMap<usize, usize>) -> Vec<usize> {
    node.inputs
        .iter()
        .filter_map(|e| match e.from {
            Source::Node(u) => index.get(&u).copied(),
            Source::Spin(_) => None,
        })
        .collect()
}

fn topo_sort(nodes: &[Node], index: &HashMap<usize, usize>) -> NqsResult<Vec<usize>> {
    let m = nodes.len();
    let mut indeg = vec![0usize; m];
    let mut succ: Vec<Vec<usize>> = vec![vec![]; m];
    for (v, node) in nodes.iter().enumerate() {
        for u in predecessors(node, index) {
            indeg[v] += 1;
            succ[u].push(v);
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = nodes
        .iter()
        .enumerate()
        .filter(|(v, _)| indeg[*v] == 0)
        .map(|(v, node)| Reverse((node.id, v)))
        .collect();
    let mut order = Vec::with_capacity(m);
    while let Some(Reverse((_, v))) = heap.pop() {
        order.push(v);
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                heap.push(Reverse((nodes[w].id, w)));
            }
        }
    }
    if order.len() < m {
        return Err(NqsError::Acyclicity { cycle: find_cycle(nodes, index, &indeg) });
    }
    Ok(order)
}

/// Every leftover node of Kahn's algorithm has a leftover predecessor, so
/// walking predecessors from the lowest leftover id must revisit a node.
fn find_cycle(nodes: &[Node], index: &HashMap<usize, usize>, indeg: &[usize]) -> Vec<usize> {
    let start = (0..nodes.len())
        .filter(|&v| indeg[v] > 0)
        .min_by_key(|&v| nodes[v].id)
        .expect("leftover node exists");
    let mut pos: HashMap<usize, usize> = HashMap::new();
    let mut path = vec![];
    let mut v = start;
    while !pos.contains_key(&v) {
        pos.insert(v, path.len());
        path.push(v);
        v = predecessors(&nodes[v], index)
            .into_iter()
            .filter(|&u| indeg[u] > 0)
            .min_by_key(|&u| nodes[u].id)
            .expect("leftover node has leftover predecessor");
    }
    let mut cycle: Vec<usize> = path[pos[&v]..].iter().map(|&i| nodes[i].id).collect();
    cycle.reverse();
    cycle
}

fn liveness(nodes: &[Node], index: &HashMap<usize, usize>, output: usize) -> (Vec<bool>, Vec<bool>) {
    let m = nodes.len();
    let mut live = vec![false; m];
    let mut stack = vec![output];
    live[output] = true;
    while let Some(v) = stack.pop() {
        for u in predecessors(&nodes[v], index) {
            if !live[u] {
                live[u] = true;
                stack.push(u);
            }
        }
    }
    let order = topo_sort(nodes, index).expect("acyclic");
    let mut depends = vec![false; m];
    for &v in &order {
        let node = &nodes[v];
        depends[v] = matches!(node.kind, NodeKind::Input { .. })
            || node.inputs.iter().any(|e| match e.from {
                Source::Spin(_) => true,
                Source::Node(u) => depends[index[&u]],
            });
    }
    (live.iter().map(|l| !l).collect(), depends.iter().map(|d| !d).collect())
}

fn compile(n: usize, nodes: &[Node], index: &HashMap<usize, usize>, order: &[usize]) -> Program {
    let mut slot_of = vec![0usize; nodes.len()];
    for (j, &v) in order.iter().enumerate() {
        slot_of[v] = n + j;
    }
    let mut edges = vec![];
    let mut ops = vec![];
    let mut ids = vec![];
    for &v in order {
        let node = &nodes[v];
        let start = edges.len();
        for e in &node.inputs {
            let slot = match e.from {
                Source::Spin(i) => i,
                Source::Node(u) => slot_of[index[&u]],
            };
            edges.push((slot, e.weight));
        }
        let kind = match &node.kind {
            NodeKind::Input { index } => OpKind::Input(*index),
            NodeKind::Linear | NodeKind::Output(_) => OpKind::Affine,
            NodeKind::Nonlinear(a) => OpKind::Nonlinear(a.clone()),
        };
        ops.push(Op { kind, bias: node.bias, edges: start..edges.len() });
        ids.push(node.id);
    }
    // The output is the only sink reachable last: move it to the end.
    let out_pos = order.iter().position(|&v| matches!(nodes[v].kind, NodeKind::Output(_))).unwrap();
    if out_pos != ops.len() - 1 {
        // Nothing reads the output, so relocating it keeps every slot valid
        // once later slots shift down by one.
        let op = ops.remove(out_pos);
        let id = ids.remove(out_pos);
        let out_slot = n + out_pos;
        for e in edges.iter_mut() {
            if e.0 > out_slot {
                e.0 -= 1;
            }
        }
        ops.push(op);
        ids.push(id);
    }
    Program { ops, edges, ids }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{ActKind, ComplexMode};

    fn tanh() -> Activation {
        Activation::real(ActKind::Tanh)
    }

    #[test]
    fn chain_order() {
        let g = ComputationGraph::new(
            1,
            vec![
                Node::output(5, OutputMode::Amplitude, vec![Edge::node(3, 1.0)], C64::new(0.0, 0.0)),
                Node::nonlinear(3, tanh(), vec![Edge::node(1, 1.0)], 0.0),
                Node::input(1, 0),
            ],
        )
        .unwrap();
        assert_eq!(validate_and_sort(&g), vec![1, 3, 5]);
        assert_eq!(g.k(), 1);
    }

    #[test]
    fn four_by_four_dag_layers() {
        let mut nodes: Vec<Node> = (0..4).map(|i| Node::input(i, i)).collect();
        for h in 0..4 {
            nodes.push(Node::nonlinear(
                4 + h,
                tanh(),
                (0..4).map(|i| Edge::node(i, 0.1 * (i + h) as f64)).collect(),
                0.0,
            ));
        }
        nodes.push(Node::output(8, OutputMode::Amplitude, (4..8).map(|h| Edge::node(h, 1.0)).collect(), C64::new(0.0, 0.0)));
        nodes.reverse();
        let g = ComputationGraph::new(4, nodes).unwrap();
        let order = validate_and_sort(&g);
        assert_eq!(order, vec![0, 1, 2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn self_loop_is_cycle() {
        let r = ComputationGraph::new(
            1,
            vec![
                Node::nonlinear(0, tanh(), vec![Edge::node(0, 1.0)], 0.0),
                Node::output(1, OutputMode::Amplitude, vec![Edge::node(0, 1.0)], C64::new(0.0, 0.0)),
            ],
        );
        match r {
            Err(NqsError::Acyclicity { cycle }) => assert_eq!(cycle, vec![0]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn longer_cycle_named() {
        let r = ComputationGraph::new(
            1,
            vec![
                Node::linear(0, vec![Edge::spin(0, 1.0), Edge::node(2, 1.0)], 0.0),
                Node::nonlinear(1, tanh(), vec![Edge::node(0, 1.0)], 0.0),
                Node::linear(2, vec![Edge::node(1, 1.0)], 0.0),
                Node::output(3, OutputMode::Amplitude, vec![Edge::node(1, 1.0)], C64::new(0.0, 0.0)),
            ],
        );
        match r {
            Err(NqsError::Acyclicity { mut cycle }) => {
                cycle.sort();
                assert_eq!(cycle, vec![0, 1, 2]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let out = Node::output(9, OutputMode::Amplitude, vec![], C64::new(1.0, 0.0));
        assert!(ComputationGraph::new(1, vec![]).is_err());
        assert!(ComputationGraph::new(1, vec![out.clone(), out.clone()]).is_err());
        assert!(ComputationGraph::new(1, vec![Node::linear(0, vec![Edge::spin(1, 1.0)], 0.0), out.clone()]).is_err());
        assert!(ComputationGraph::new(1, vec![Node::linear(0, vec![Edge::node(9, 1.0)], 0.0), out.clone()]).is_err());
        assert!(ComputationGraph::new(1, vec![Node::input(0, 3), out]).is_err());
    }

    #[test]
    fn linear_net_eval() {
        let g = ComputationGraph::new(
            2,
            vec![Node::output(0, OutputMode::Amplitude, vec![Edge::spin(0, 1.0), Edge::spin(1, 1.0)], C64::new(0.0, 0.0))],
        )
        .unwrap();
        assert_eq!(eval_full(&g, &SpinConfig::new(3, 2).unwrap()).unwrap(), C64::new(2.0, 0.0));
        assert_eq!(eval_full(&g, &SpinConfig::new(1, 2).unwrap()).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn log_amplitude_overflow_reported() {
        let g = ComputationGraph::new(
            1,
            vec![Node::output(0, OutputMode::LogAmplitude, vec![Edge::spin(0, 800.0)], C64::new(0.0, 0.0))],
        )
        .unwrap();
        assert!(g.eval_bits(0).is_ok());
        match g.eval_bits(1) {
            Err(NqsError::AmplitudeOverflow { config }) => assert_eq!(config, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dead_nodes_flagged_and_removed() {
        let g = ComputationGraph::new(
            2,
            vec![
                Node::nonlinear(0, tanh(), vec![Edge::spin(0, 0.3)], 0.1),
                Node::nonlinear(1, Activation::new(ActKind::Sin, ComplexMode::Mixed), vec![Edge::spin(1, 0.7)], 0.0),
                Node::linear(2, vec![], 0.5),
                Node::output(3, OutputMode::Amplitude, vec![Edge::node(0, 1.0), Edge::node(2, 1.0)], C64::new(0.0, 0.0)),
            ],
        )
        .unwrap();
        assert_eq!(g.dead_nodes(), vec![1]);
        assert_eq!(g.constant_nodes(), vec![2]);
        let h = g.eliminate_dead();
        assert_eq!(h.nodes().len(), 3);
        for bits in 0..4 {
            assert_eq!(g.eval_bits(bits).unwrap(), h.eval_bits(bits).unwrap());
        }
    }

    #[test]
    fn output_not_last_in_order() {
        // Output id lower than a dead node id: the dead node sorts after it.
        let g = ComputationGraph::new(
            1,
            vec![
                Node::output(0, OutputMode::Amplitude, vec![Edge::spin(0, 2.0)], C64::new(1.0, 0.0)),
                Node::nonlinear(5, tanh(), vec![Edge::spin(0, 1.0)], 0.0),
                Node::nonlinear(6, tanh(), vec![Edge::node(5, 1.0)], 0.0),
            ],
        )
        .unwrap();
        assert_eq!(g.eval_bits(1).unwrap(), C64::new(3.0, 0.0));
        assert_eq!(g.eval_bits(0).unwrap(), C64::new(-1.0, 0.0));
    }
}
