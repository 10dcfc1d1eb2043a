//! Feature reduction: rewrite a graph as `G(t_1(s), .., t_mu(s))`.
//!
//! Every nonlinear node's pre-activation (and the output) splits into a
//! direct affine part in `s` plus an affine combination of nonlinear node
//! values. The direct parts' weight rows are reduced to a basis by
//! Gram-Schmidt; each row is re-expressed in that basis and the remaining
//! constant becomes a residual bias. Linear and input nodes disappear.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{ComputationGraph, Edge, GraphDoc, Node, NodeKind, Source, GRAPH_SCHEMA_VERSION};
use crate::error::{NqsError, NqsResult};
use crate::spin::{AffineFeature, SpinConfig};
use crate::C64;

/// Relative residual below which a row counts as linearly dependent.
pub const DEPENDENCE_TOL: f64 = 1e-10;

/// Reduced representation: `mu` affine features and a residual graph whose
/// `mu` inputs are the feature values.
#[derive(Debug, Clone)]
pub struct ReducedForm {
    pub features: Vec<AffineFeature>,
    pub residual: ComputationGraph,
    /// Nonlinear node count of the original graph.
    pub k: usize,
    n: usize,
}

#[derive(Debug, Clone)]
struct Lin {
    spin: Vec<C64>,
    c: C64,
    nl: BTreeMap<usize, C64>,
}

impl Lin {
    fn zero(n: usize, c: C64) -> Self {
        Self { spin: vec![C64::new(0.0, 0.0); n], c, nl: BTreeMap::new() }
    }

    fn add_scaled(&mut self, other: &Lin, w: C64) {
        for (a, b) in self.spin.iter_mut().zip(&other.spin) {
            *a += w * b;
        }
        self.c += w * other.c;
        for (&id, &x) in &other.nl {
            *self.nl.entry(id).or_insert(C64::new(0.0, 0.0)) += w * x;
        }
    }
}

/// Incremental Gram-Schmidt basis with twice-repeated projection.
struct Basis {
    q: Vec<Vec<f64>>,
    /// Column `j` holds `R[0..=j][j]`.
    r: Vec<Vec<f64>>,
    rows: Vec<(Vec<f64>, f64)>,
}

enum Placement {
    Accepted(usize),
    Dependent(Vec<f64>),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Basis {
    fn new() -> Self {
        Self { q: vec![], r: vec![], rows: vec![] }
    }

    fn place(&mut self, w: &[f64], b: f64) -> Placement {
        let norm = dot(w, w).sqrt();
        let mut res = w.to_vec();
        let mut c = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (j, q) in self.q.iter().enumerate() {
                let p = dot(q, &res);
                c[j] += p;
                for (x, qi) in res.iter_mut().zip(q) {
                    *x -= p * qi;
                }
            }
        }
        let rnorm = dot(&res, &res).sqrt();
        if rnorm <= DEPENDENCE_TOL * norm {
            let mu = self.q.len();
            let mut beta = vec![0.0; mu];
            for j in (0..mu).rev() {
                let mut acc = c[j];
                for (l, bl) in beta.iter().enumerate().skip(j + 1) {
                    acc -= self.r[l][j] * bl;
                }
                beta[j] = acc / self.r[j][j];
            }
            Placement::Dependent(beta)
        } else {
            for x in res.iter_mut() {
                *x /= rnorm;
            }
            c.push(rnorm);
            self.q.push(res);
            self.r.push(c);
            self.rows.push((w.to_vec(), b));
            Placement::Accepted(self.q.len() - 1)
        }
    }
}

struct Record {
    node: Node,
    lin: Lin,
}

/// Express one real row (`w`, `b`) as sparse feature coefficients plus a
/// constant remainder.
fn express(basis: &mut Basis, w: Vec<f64>, b: f64) -> (Vec<(usize, f64)>, f64) {
    if w.iter().all(|&x| x == 0.0) {
        return (vec![], b);
    }
    match basis.place(&w, b) {
        Placement::Accepted(j) => (vec![(j, 1.0)], 0.0),
        Placement::Dependent(beta) => {
            let mut rem = b;
            let mut coeffs = vec![];
            for (j, &bj) in beta.iter().enumerate() {
                if bj != 0.0 {
                    rem -= bj * basis.rows[j].1;
                    coeffs.push((j, bj));
                }
            }
            (coeffs, rem)
        }
    }
}

/// Reduce `g` to at most `k + 1` features (for real-weight graphs).
pub fn feature_reduce(g: &ComputationGraph) -> ReducedForm {
    let k = g.k();
    let g = g.eliminate_dead();
    let n = g.n();
    let mut lin: BTreeMap<usize, Lin> = BTreeMap::new();
    let mut records: Vec<Record> = vec![];
    let mut output: Option<Record> = None;
    for node in g.sorted_nodes() {
        let mut acc = Lin::zero(n, node.bias);
        match &node.kind {
            NodeKind::Input { index } => {
                acc.spin[*index] = C64::new(1.0, 0.0);
                lin.insert(node.id, acc);
                continue;
            }
            _ => {
                for e in &node.inputs {
                    match e.from {
                        Source::Spin(i) => acc.spin[i] += e.weight,
                        Source::Node(u) => match lin.get(&u) {
                            Some(l) => {
                                let l = l.clone();
                                acc.add_scaled(&l, e.weight);
                            }
                            None => *acc.nl.entry(u).or_insert(C64::new(0.0, 0.0)) += e.weight,
                        },
                    }
                }
            }
        }
        match &node.kind {
            NodeKind::Linear => {
                lin.insert(node.id, acc);
            }
            NodeKind::Nonlinear(_) => records.push(Record { node: node.clone(), lin: acc }),
            NodeKind::Output(_) => output = Some(Record { node: node.clone(), lin: acc }),
            NodeKind::Input { .. } => unreachable!(),
        }
    }
    records.extend(output);

    let mut basis = Basis::new();
    let mut rewritten: Vec<(Vec<(usize, C64)>, C64)> = vec![];
    for rec in &records {
        let re: Vec<f64> = rec.lin.spin.iter().map(|z| z.re).collect();
        let im: Vec<f64> = rec.lin.spin.iter().map(|z| z.im).collect();
        let (cre, rre) = express(&mut basis, re, rec.lin.c.re);
        let (cim, rim) = express(&mut basis, im, rec.lin.c.im);
        let mut coeffs: BTreeMap<usize, C64> = BTreeMap::new();
        for (j, x) in cre {
            *coeffs.entry(j).or_insert(C64::new(0.0, 0.0)) += C64::new(x, 0.0);
        }
        for (j, x) in cim {
            *coeffs.entry(j).or_insert(C64::new(0.0, 0.0)) += C64::new(0.0, x);
        }
        rewritten.push((coeffs.into_iter().collect(), C64::new(rre, rim)));
    }

    let mu = basis.rows.len();
    let nodes: Vec<Node> = records
        .iter()
        .zip(rewritten)
        .map(|(rec, (coeffs, rem))| {
            let mut inputs: Vec<Edge> = coeffs.into_iter().map(|(j, x)| Edge::spin_c(j, x)).collect();
            inputs.extend(rec.lin.nl.iter().map(|(&u, &w)| Edge::node_c(u, w)));
            Node { id: rec.node.id, kind: rec.node.kind.clone(), inputs, bias: rem }
        })
        .collect();
    let residual = ComputationGraph::new(mu, nodes).expect("residual of a valid graph is valid");
    let features = basis.rows.into_iter().map(|(w, b)| AffineFeature::new(w, b)).collect();
    ReducedForm { features, residual, k, n }
}

impl ReducedForm {
    pub fn mu(&self) -> usize {
        self.features.len()
    }

    /// Spin count of the original graph.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn feature_values(&self, bits: u64) -> Vec<f64> {
        self.features.iter().map(|f| f.evaluate_bits(bits)).collect()
    }

    /// `G(t_1(s), .., t_mu(s))`.
    pub fn eval_bits(&self, bits: u64) -> NqsResult<C64> {
        let mut buf = self.residual.scratch();
        self.eval_bits_with(bits, &mut buf)
    }

    pub fn eval_bits_with(&self, bits: u64, buf: &mut [C64]) -> NqsResult<C64> {
        let t: Vec<C64> = self.features.iter().map(|f| C64::new(f.evaluate_bits(bits), 0.0)).collect();
        self.residual.eval_inputs_with(&t, buf).map_err(|e| match e {
            NqsError::AmplitudeOverflow { .. } => NqsError::AmplitudeOverflow { config: bits },
            other => other,
        })
    }

    pub fn eval_reduced(&self, s: &SpinConfig) -> NqsResult<C64> {
        if s.n != self.n {
            return Err(NqsError::Dimension { expected: self.n, got: s.n });
        }
        self.eval_bits(s.bits)
    }

    /// Sup-norm bound `Σ|w| + |b|` of each feature.
    pub fn tbar(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.supnorm()).collect()
    }

    pub fn to_doc(&self) -> ReducedDoc {
        ReducedDoc {
            schema_version: GRAPH_SCHEMA_VERSION,
            n: self.n,
            k: self.k,
            mu: self.mu(),
            features: self
                .features
                .iter()
                .map(|f| FeatureDoc { weights: f.weights.clone(), bias: f.bias, supnorm: f.supnorm() })
                .collect(),
            residual: GraphDoc::from_graph(&self.residual),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedDoc {
    pub schema_version: u32,
    pub n: usize,
    pub k: usize,
    pub mu: usize,
    pub features: Vec<FeatureDoc>,
    pub residual: GraphDoc,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureDoc {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub supnorm: f64,
}
