//! JSON interchange for computation graphs.
//!
//! Edge sources are node ids or `"s_i"` spin references (0-based). Weights
//! and biases are numbers, or `[re, im]` pairs for complex values.

use serde::{Deserialize, Serialize};

use super::{ComputationGraph, Edge, Node, NodeKind, OutputMode, Source};
use crate::activations::{ActKind, Activation, ComplexMode};
use crate::error::{NqsError, NqsResult};
use crate::C64;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDoc {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub n: usize,
    pub nodes: Vec<NodeDoc>,
}

fn default_version() -> u32 {
    GRAPH_SCHEMA_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex_mode: Option<String>,
    /// Second activation for `complex_mode = "pair"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_activation: Option<String>,
    #[serde(default)]
    pub inputs: Vec<EdgeDoc>,
    #[serde(default)]
    pub bias: Scalar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_mode: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub from: SourceDoc,
    pub weight: Scalar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceDoc {
    Node(usize),
    Spin(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::Real(0.0)
    }
}

impl From<Scalar> for C64 {
    fn from(s: Scalar) -> C64 {
        match s {
            Scalar::Real(r) => C64::new(r, 0.0),
            Scalar::Complex([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for Scalar {
    fn from(z: C64) -> Scalar {
        if z.im == 0.0 {
            Scalar::Real(z.re)
        } else {
            Scalar::Complex([z.re, z.im])
        }
    }
}

fn parse_spin(s: &str) -> NqsResult<usize> {
    s.strip_prefix("s_")
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| NqsError::Spec(format!("bad input reference {s:?}; expected node id or \"s_i\"")))
}

fn activation_of(doc: &NodeDoc) -> NqsResult<Activation> {
    let name = doc
        .activation
        .as_deref()
        .ok_or_else(|| NqsError::Spec(format!("nonlinear node {} lacks an activation", doc.id)))?;
    let kind = ActKind::from_name(name, doc.beta, doc.coeffs.clone())?;
    let mode = match doc.complex_mode.as_deref().unwrap_or("real_only") {
        "real_only" | "real" => ComplexMode::RealOnly,
        "imag_only" | "imag" => ComplexMode::ImagOnly,
        "mixed" => ComplexMode::Mixed,
        "pair" => {
            let second = doc
                .pair_activation
                .as_deref()
                .ok_or_else(|| NqsError::Spec(format!("node {} uses pair mode without pair_activation", doc.id)))?;
            ComplexMode::Pair(ActKind::from_name(second, doc.beta, doc.coeffs.clone())?)
        }
        other => return Err(NqsError::Spec(format!("unknown complex_mode {other:?}"))),
    };
    Ok(Activation::new(kind, mode))
}

impl GraphDoc {
    pub fn to_graph(&self) -> NqsResult<ComputationGraph> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for d in &self.nodes {
            let inputs = d
                .inputs
                .iter()
                .map(|e| {
                    let from = match &e.from {
                        SourceDoc::Node(id) => Source::Node(*id),
                        SourceDoc::Spin(s) => Source::Spin(parse_spin(s)?),
                    };
                    Ok(Edge { from, weight: e.weight.into() })
                })
                .collect::<NqsResult<Vec<_>>>()?;
            let kind = match d.kind.as_str() {
                "input" => NodeKind::Input {
                    index: d
                        .index
                        .ok_or_else(|| NqsError::Spec(format!("input node {} lacks an index", d.id)))?,
                },
                "linear" => NodeKind::Linear,
                "nonlinear" => NodeKind::Nonlinear(activation_of(d)?),
                "output" => NodeKind::Output(match d.output_mode.as_deref().unwrap_or("amplitude") {
                    "amplitude" => OutputMode::Amplitude,
                    "log_amplitude" => OutputMode::LogAmplitude,
                    other => return Err(NqsError::Spec(format!("unknown output_mode {other:?}"))),
                }),
                other => return Err(NqsError::Spec(format!("unknown node kind {other:?}"))),
            };
            nodes.push(Node { id: d.id, kind, inputs, bias: d.bias.into() });
        }
        ComputationGraph::new(self.n, nodes)
    }

    pub fn from_graph(g: &ComputationGraph) -> Self {
        let nodes = g.nodes().iter().map(node_doc).collect();
        Self { schema_version: GRAPH_SCHEMA_VERSION, n: g.n(), nodes }
    }

    pub fn from_json(text: &str) -> NqsResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph documents serialize")
    }
}

fn node_doc(v: &Node) -> NodeDoc {
    let mut d = NodeDoc {
        id: v.id,
        kind: String::new(),
        index: None,
        activation: None,
        beta: None,
        coeffs: None,
        complex_mode: None,
        pair_activation: None,
        inputs: v
            .inputs
            .iter()
            .map(|e| EdgeDoc {
                from: match e.from {
                    Source::Node(id) => SourceDoc::Node(id),
                    Source::Spin(i) => SourceDoc::Spin(format!("s_{i}")),
                },
                weight: e.weight.into(),
            })
            .collect(),
        bias: v.bias.into(),
        output_mode: None,
    };
    match &v.kind {
        NodeKind::Input { index } => {
            d.kind = "input".into();
            d.index = Some(*index);
        }
        NodeKind::Linear => d.kind = "linear".into(),
        NodeKind::Output(m) => {
            d.kind = "output".into();
            d.output_mode = Some(
                match m {
                    OutputMode::Amplitude => "amplitude",
                    OutputMode::LogAmplitude => "log_amplitude",
                }
                .into(),
            );
        }
        NodeKind::Nonlinear(act) => {
            d.kind = "nonlinear".into();
            d.activation = Some(act.kind.name().into());
            let params = |k: &ActKind, d: &mut NodeDoc| match k {
                ActKind::Softplus { beta } => d.beta = Some(*beta),
                ActKind::Poly { coeffs } => d.coeffs = Some(coeffs.clone()),
                _ => {}
            };
            params(&act.kind, &mut d);
            d.complex_mode = Some(
                match &act.mode {
                    ComplexMode::RealOnly => "real_only",
                    ComplexMode::ImagOnly => "imag_only",
                    ComplexMode::Mixed => "mixed",
                    ComplexMode::Pair(second) => {
                        d.pair_activation = Some(second.name().into());
                        params(second, &mut d);
                        "pair"
                    }
                }
                .into(),
            );
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "n": 2,
      "nodes": [
        {"id": 0, "kind": "input", "index": 0},
        {"id": 1, "kind": "nonlinear", "activation": "tanh",
         "inputs": [{"from": 0, "weight": 0.5}, {"from": "s_1", "weight": [0.0, 1.0]}], "bias": 0.1},
        {"id": 2, "kind": "nonlinear", "activation": "softplus", "beta": 2.0, "complex_mode": "pair",
         "pair_activation": "softplus", "inputs": [{"from": "s_0", "weight": 1.0}], "bias": 0.0},
        {"id": 3, "kind": "output", "output_mode": "log_amplitude",
         "inputs": [{"from": 1, "weight": 1.0}, {"from": 2, "weight": -1.0}], "bias": [0.0, 0.25]}
      ]
    }"#;

    #[test]
    fn parse_and_round_trip() {
        let g = GraphDoc::from_json(SAMPLE).unwrap().to_graph().unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.k(), 2);
        assert_eq!(g.output_mode(), OutputMode::LogAmplitude);
        let text = GraphDoc::from_graph(&g).to_json();
        let h = GraphDoc::from_json(&text).unwrap().to_graph().unwrap();
        for bits in 0..4 {
            assert_eq!(g.eval_bits(bits).unwrap(), h.eval_bits(bits).unwrap());
        }
    }

    #[test]
    fn bad_documents_rejected() {
        let bad_ref = SAMPLE.replace("\"s_1\"", "\"x1\"");
        assert!(GraphDoc::from_json(&bad_ref).unwrap().to_graph().is_err());
        let bad_act = SAMPLE.replace("\"tanh\"", "\"swish\"");
        assert!(GraphDoc::from_json(&bad_act).unwrap().to_graph().is_err());
        let bad_spin = SAMPLE.replace("\"s_1\"", "\"s_2\"");
        assert!(GraphDoc::from_json(&bad_spin).unwrap().to_graph().is_err());
    }
}
