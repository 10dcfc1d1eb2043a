//! Builders for the network families: single-nonlinearity (SN), MLP,
//! transformer, CosNet and the Dicke construction.
//!
//! Vector operations are decomposed into scalar nodes: a product is
//! `xy = ¼[(x+y)² − (x−y)²]` (two square nodes), LayerNorm uses squares and
//! one `rsqrt`, and softmax is `exp(score − ln Σ exp)`.

use serde::{Deserialize, Serialize};

use crate::activations::{ActKind, Activation, ComplexMode};
use crate::error::{NqsError, NqsResult};
use crate::graph::{ComputationGraph, Edge, Node, OutputMode};
use crate::rng::{Rng, RngStream};
use crate::C64;

/// LayerNorm variance offset.
pub const LAYERNORM_EPS: f64 = 1e-5;

fn default_activation() -> String {
    "tanh".into()
}
fn default_mode() -> String {
    "real_only".into()
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn sigma_b() -> f64 {
    0.2
}
fn yes() -> bool {
    true
}

fn activation_from(name: &str, beta: Option<f64>, mode: &str, pair: Option<&str>) -> NqsResult<Activation> {
    let kind = ActKind::from_name(name, beta, None)?;
    let mode = match mode {
        "real_only" | "real" => ComplexMode::RealOnly,
        "imag_only" | "imag" | "phase" => ComplexMode::ImagOnly,
        "mixed" | "general" => ComplexMode::Mixed,
        "pair" => ComplexMode::Pair(ActKind::from_name(
            pair.ok_or_else(|| NqsError::Spec("pair mode needs pair_activation".into()))?,
            beta,
            None,
        )?),
        other => return Err(NqsError::Spec(format!("unknown complex mode {other:?}"))),
    };
    Ok(Activation::new(kind, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `Ψ = exp(σ(wᵀs + b))`.
    #[default]
    WrapExp,
    /// `Ψ ∝ σ(wᵀs + b)`.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnqsSpec {
    pub n: usize,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_mode")]
    pub complex_mode: String,
    #[serde(default)]
    pub pair_activation: Option<String>,
    #[serde(default)]
    pub parameterization: Parameterization,
    #[serde(default = "one")]
    pub weight_std: f64,
    #[serde(default = "half")]
    pub bias_std: f64,
}

impl SnnqsSpec {
    pub fn new(n: usize, activation: &str, complex_mode: &str) -> Self {
        Self {
            n,
            activation: activation.into(),
            beta: None,
            complex_mode: complex_mode.into(),
            pair_activation: None,
            parameterization: Parameterization::WrapExp,
            weight_std: 1.0,
            bias_std: 0.5,
        }
    }
}

pub fn build_snnqs(spec: &SnnqsSpec, rng: &mut Rng) -> NqsResult<ComputationGraph> {
    if spec.n == 0 {
        return Err(NqsError::Spec("SN-NQS needs n >= 1".into()));
    }
    let act = activation_from(&spec.activation, spec.beta, &spec.complex_mode, spec.pair_activation.as_deref())?;
    let w = rng.normals(spec.n, spec.weight_std);
    let b = rng.normal(spec.bias_std);
    let mode = match spec.parameterization {
        Parameterization::WrapExp => OutputMode::LogAmplitude,
        Parameterization::Direct => OutputMode::Amplitude,
    };
    ComputationGraph::new(
        spec.n,
        vec![
            Node::nonlinear(0, act, w.iter().enumerate().map(|(i, &x)| Edge::spin(i, x)).collect(), b),
            Node::output(1, mode, vec![Edge::node(0, 1.0)], C64::new(0.0, 0.0)),
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    /// Both heads have unit weights and zero bias.
    #[default]
    AllOnes,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadTarget {
    /// Heads give the real and imaginary parts of `ln Ψ`.
    #[default]
    LogAmplitude,
    Amplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub n: usize,
    pub width: usize,
    pub depth: usize,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "one")]
    pub sigma_w: f64,
    #[serde(default = "sigma_b")]
    pub sigma_b: f64,
    #[serde(default = "yes")]
    pub layernorm: bool,
    #[serde(default)]
    pub heads: Heads,
    #[serde(default)]
    pub head_target: HeadTarget,
}

impl MlpSpec {
    pub fn new(n: usize, width: usize, depth: usize, activation: &str) -> Self {
        Self {
            n,
            width,
            depth,
            activation: activation.into(),
            beta: None,
            sigma_w: 1.0,
            sigma_b: 0.2,
            layernorm: true,
            heads: Heads::AllOnes,
            head_target: HeadTarget::LogAmplitude,
        }
    }
}

/// Sequential id allocator and node list.
struct Builder {
    nodes: Vec<Node>,
}

impl Builder {
    fn new() -> Self {
        Self { nodes: vec![] }
    }

    fn next_id(&self) -> usize {
        self.nodes.len()
    }

    fn linear(&mut self, inputs: Vec<Edge>, bias: f64) -> usize {
        let id = self.next_id();
        self.nodes.push(Node::linear(id, inputs, bias));
        id
    }

    fn nonlinear(&mut self, act: Activation, inputs: Vec<Edge>, bias: f64) -> usize {
        let id = self.next_id();
        self.nodes.push(Node::nonlinear(id, act, inputs, bias));
        id
    }

    fn square(&mut self, inputs: Vec<Edge>) -> usize {
        self.nonlinear(Activation::real(ActKind::Poly { coeffs: vec![0.0, 0.0, 1.0] }), inputs, 0.0)
    }

    /// Node holding `x·y` for node values `x`, `y`.
    fn product(&mut self, x: usize, y: usize) -> usize {
        let p = self.square(vec![Edge::node(x, 1.0), Edge::node(y, 1.0)]);
        let m = self.square(vec![Edge::node(x, 1.0), Edge::node(y, -1.0)]);
        self.linear(vec![Edge::node(p, 0.25), Edge::node(m, -0.25)], 0.0)
    }

    /// Per-sample LayerNorm without affine parameters.
    fn layernorm(&mut self, z: &[usize]) -> Vec<usize> {
        let w = z.len() as f64;
        let centered: Vec<usize> = (0..z.len())
            .map(|i| {
                let edges = z
                    .iter()
                    .enumerate()
                    .map(|(j, &zj)| Edge::node(zj, if i == j { 1.0 - 1.0 / w } else { -1.0 / w }))
                    .collect();
                self.linear(edges, 0.0)
            })
            .collect();
        let squares: Vec<usize> = centered.iter().map(|&c| self.square(vec![Edge::node(c, 1.0)])).collect();
        let inv_std = self.nonlinear(
            Activation::real(ActKind::Rsqrt),
            squares.iter().map(|&s| Edge::node(s, 1.0 / w)).collect(),
            LAYERNORM_EPS,
        );
        centered.iter().map(|&c| self.product(c, inv_std)).collect()
    }

    fn finish(mut self, n: usize, mode: OutputMode, inputs: Vec<Edge>, bias: C64) -> NqsResult<ComputationGraph> {
        let id = self.next_id();
        self.nodes.push(Node::output(id, mode, inputs, bias));
        ComputationGraph::new(n, self.nodes)
    }
}

/// Edges for a complex head `(w_Rᵀh + b_R) + i(w_Iᵀh + b_I)`.
fn complex_head(h: &[usize], wr: &[f64], wi: &[f64]) -> Vec<Edge> {
    h.iter()
        .enumerate()
        .map(|(j, &id)| Edge::node_c(id, C64::new(wr[j], wi[j])))
        .collect()
}

pub fn build_mlp(spec: &MlpSpec, rng: &mut Rng) -> NqsResult<ComputationGraph> {
    if spec.width == 0 || spec.depth == 0 {
        return Err(NqsError::Spec(format!(
            "MLP needs width >= 1 and depth >= 1, got width {} depth {}",
            spec.width, spec.depth
        )));
    }
    if spec.n == 0 {
        return Err(NqsError::Spec("MLP needs n >= 1".into()));
    }
    let act = activation_from(&spec.activation, spec.beta, "real_only", None)?;
    let mut b = Builder::new();
    let mut prev: Vec<Edge> = (0..spec.n).map(|i| Edge::spin(i, 1.0)).collect();
    let mut h: Vec<usize> = vec![];
    for _ in 0..spec.depth {
        let fan_in = prev.len() as f64;
        let std = spec.sigma_w / fan_in.sqrt();
        let mut pre = vec![];
        for _ in 0..spec.width {
            let w = rng.normals(prev.len(), std);
            let bias = rng.normal(spec.sigma_b);
            let edges: Vec<Edge> = prev.iter().zip(&w).map(|(e, &x)| Edge { from: e.from, weight: C64::new(x, 0.0) }).collect();
            if spec.layernorm {
                pre.push(b.linear(edges, bias));
            } else {
                pre.push(b.nonlinear(act.clone(), edges, bias));
            }
        }
        h = if spec.layernorm {
            let normed = b.layernorm(&pre);
            normed.iter().map(|&y| b.nonlinear(act.clone(), vec![Edge::node(y, 1.0)], 0.0)).collect()
        } else {
            pre
        };
        prev = h.iter().map(|&id| Edge::node(id, 1.0)).collect();
    }
    let (wr, wi, br, bi) = match spec.heads {
        Heads::AllOnes => (vec![1.0; h.len()], vec![1.0; h.len()], 0.0, 0.0),
        Heads::Random => {
            let std = spec.sigma_w / (h.len() as f64).sqrt();
            let wr = rng.normals(h.len(), std);
            let br = rng.normal(spec.sigma_b);
            let wi = rng.normals(h.len(), std);
            let bi = rng.normal(spec.sigma_b);
            (wr, wi, br, bi)
        }
    };
    let mode = match spec.head_target {
        HeadTarget::LogAmplitude => OutputMode::LogAmplitude,
        HeadTarget::Amplitude => OutputMode::Amplitude,
    };
    b.finish(spec.n, mode, complex_head(&h, &wr, &wi), C64::new(br, bi))
}

fn default_patch() -> usize {
    6
}
fn default_stride() -> usize {
    5
}
fn default_heads() -> usize {
    4
}
fn default_layers() -> usize {
    2
}
fn default_ffn() -> usize {
    64
}
fn default_embed() -> Option<usize> {
    Some(32)
}
fn default_frozen_seed() -> u64 {
    0x5EED_F0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub n: usize,
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Token width after the frozen embedding; `None` keeps raw patches.
    #[serde(default = "default_embed")]
    pub embed_dim: Option<usize>,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_ffn")]
    pub ffn_width: usize,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default = "one")]
    pub sigma_w: f64,
    #[serde(default = "sigma_b")]
    pub sigma_b: f64,
    /// Embedding, attention and heads are drawn from this seed when frozen.
    #[serde(default = "yes")]
    pub frozen: bool,
    #[serde(default = "default_frozen_seed")]
    pub frozen_seed: u64,
}

impl TransformerSpec {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            patch: 6,
            stride: 5,
            embed_dim: Some(32),
            heads: 4,
            layers: 2,
            ffn_width: 64,
            activation: "tanh".into(),
            sigma_w: 1.0,
            sigma_b: 0.2,
            frozen: true,
            frozen_seed: default_frozen_seed(),
        }
    }

    /// `⌊(n − P)/Δ⌋ + 1`.
    pub fn tokens(&self) -> usize {
        (self.n - self.patch) / self.stride + 1
    }
}

/// Dense `out = W x` over node values with `W ~ N(0, std²)`.
fn dense(b: &mut Builder, rng: &mut Rng, x: &[usize], out_dim: usize, std: f64) -> Vec<usize> {
    (0..out_dim)
        .map(|_| {
            let w = rng.normals(x.len(), std);
            b.linear(x.iter().zip(&w).map(|(&id, &v)| Edge::node(id, v)).collect(), 0.0)
        })
        .collect()
}

pub fn build_transformer(spec: &TransformerSpec, rng: &mut Rng) -> NqsResult<ComputationGraph> {
    if spec.patch == 0 || spec.patch > spec.n {
        return Err(NqsError::Spec(format!("patch size {} must lie in 1..={}", spec.patch, spec.n)));
    }
    if spec.stride == 0 || spec.heads == 0 || spec.layers == 0 || spec.ffn_width == 0 {
        return Err(NqsError::Spec("stride, heads, layers and ffn width must be positive".into()));
    }
    let d = spec.embed_dim.unwrap_or(spec.patch);
    if d % spec.heads != 0 {
        return Err(NqsError::Spec(format!("token width {d} not divisible by {} heads", spec.heads)));
    }
    let dh = d / spec.heads;
    let act = activation_from(&spec.activation, None, "real_only", None)?;
    let mut frozen_rng = RngStream::new(spec.frozen_seed, 0xF0).rng();
    let m = spec.tokens();
    let mut b = Builder::new();

    let mut tokens: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            let start = j * spec.stride;
            (0..spec.patch).map(|p| b.linear(vec![Edge::spin(start + p, 1.0)], 0.0)).collect()
        })
        .collect();
    if let Some(dim) = spec.embed_dim {
        let r = if spec.frozen { &mut frozen_rng } else { &mut *rng };
        let e: Vec<Vec<f64>> = (0..dim).map(|_| r.normals(spec.patch, 1.0 / (spec.patch as f64).sqrt())).collect();
        tokens = tokens
            .iter()
            .map(|x| {
                e.iter()
                    .map(|row| b.linear(x.iter().zip(row).map(|(&id, &w)| Edge::node(id, w)).collect(), 0.0))
                    .collect()
            })
            .collect();
    }

    for _ in 0..spec.layers {
        let mut heads_out: Vec<Vec<usize>> = vec![vec![]; m];
        for _ in 0..spec.heads {
            let r = if spec.frozen { &mut frozen_rng } else { &mut *rng };
            let wstd = 1.0 / (d as f64).sqrt();
            let wq: Vec<Vec<f64>> = (0..dh).map(|_| r.normals(d, wstd)).collect();
            let wk: Vec<Vec<f64>> = (0..dh).map(|_| r.normals(d, wstd)).collect();
            let wv: Vec<Vec<f64>> = (0..dh).map(|_| r.normals(d, wstd)).collect();
            let proj = |b: &mut Builder, x: &[usize], w: &[Vec<f64>]| -> Vec<usize> {
                w.iter()
                    .map(|row| b.linear(x.iter().zip(row).map(|(&id, &v)| Edge::node(id, v)).collect(), 0.0))
                    .collect()
            };
            let q: Vec<Vec<usize>> = tokens.iter().map(|x| proj(&mut b, x, &wq)).collect();
            let k: Vec<Vec<usize>> = tokens.iter().map(|x| proj(&mut b, x, &wk)).collect();
            let v: Vec<Vec<usize>> = tokens.iter().map(|x| proj(&mut b, x, &wv)).collect();
            let scale = 1.0 / (dh as f64).sqrt();
            for i in 0..m {
                let scores: Vec<usize> = (0..m)
                    .map(|j| {
                        let prods: Vec<usize> = (0..dh).map(|c| b.product(q[i][c], k[j][c])).collect();
                        b.linear(prods.iter().map(|&p| Edge::node(p, scale)).collect(), 0.0)
                    })
                    .collect();
                let exps: Vec<usize> = scores
                    .iter()
                    .map(|&s| b.nonlinear(Activation::real(ActKind::Exp), vec![Edge::node(s, 1.0)], 0.0))
                    .collect();
                let lse = b.nonlinear(
                    Activation::real(ActKind::Ln),
                    exps.iter().map(|&e| Edge::node(e, 1.0)).collect(),
                    0.0,
                );
                let weights: Vec<usize> = scores
                    .iter()
                    .map(|&s| {
                        b.nonlinear(Activation::real(ActKind::Exp), vec![Edge::node(s, 1.0), Edge::node(lse, -1.0)], 0.0)
                    })
                    .collect();
                for c in 0..dh {
                    let terms: Vec<usize> = (0..m).map(|j| b.product(weights[j], v[j][c])).collect();
                    let z = b.linear(terms.iter().map(|&t| Edge::node(t, 1.0)).collect(), 0.0);
                    heads_out[i].push(z);
                }
            }
        }
        tokens = heads_out
            .iter()
            .map(|z| {
                let hidden: Vec<usize> = (0..spec.ffn_width)
                    .map(|_| {
                        let w = rng.normals(d, spec.sigma_w / (d as f64).sqrt());
                        let bias = rng.normal(spec.sigma_b);
                        b.nonlinear(act.clone(), z.iter().zip(&w).map(|(&id, &x)| Edge::node(id, x)).collect(), bias)
                    })
                    .collect();
                let out = dense(&mut b, rng, &hidden, d, spec.sigma_w / (spec.ffn_width as f64).sqrt());
                for &o in &out {
                    let bias = rng.normal(spec.sigma_b);
                    if let Some(node) = b.nodes.get_mut(o) {
                        node.bias = C64::new(bias, 0.0);
                    }
                }
                out
            })
            .collect();
    }

    let flat: Vec<usize> = tokens.concat();
    let hstd = 1.0 / (flat.len() as f64).sqrt();
    let r = if spec.frozen { &mut frozen_rng } else { &mut *rng };
    let wr = r.normals(flat.len(), hstd);
    let wi = r.normals(flat.len(), hstd);
    b.finish(spec.n, OutputMode::LogAmplitude, complex_head(&flat, &wr, &wi), C64::new(0.0, 0.0))
}

fn sigma_a() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosnetSpec {
    pub n: usize,
    pub k: usize,
    #[serde(default = "sigma_a")]
    pub sigma_a: f64,
    #[serde(default = "one")]
    pub sigma_w: f64,
}

impl CosnetSpec {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k, sigma_a: 10.0, sigma_w: 1.0 }
    }
}

/// `Ψ = Σᵢ aᵢ cos(wᵢᵀs + bᵢ) + i Σᵢ a'ᵢ cos(w'ᵢᵀs + b'ᵢ)` with
/// `a ~ N(0, σ_a²/k)`, `w ~ N(0, σ_w²/n)`, `b ~ U[−π, π]`.
pub fn build_cosnet(spec: &CosnetSpec, rng: &mut Rng) -> NqsResult<ComputationGraph> {
    if spec.k == 0 {
        return Err(NqsError::Spec("CosNet needs k >= 1 cosines".into()));
    }
    if spec.n == 0 {
        return Err(NqsError::Spec("CosNet needs n >= 1".into()));
    }
    let pi = std::f64::consts::PI;
    let wstd = spec.sigma_w / (spec.n as f64).sqrt();
    let astd = spec.sigma_a / (spec.k as f64).sqrt();
    let mut b = Builder::new();
    let mut out = vec![];
    for part in 0..2 {
        for _ in 0..spec.k {
            let w = rng.normals(spec.n, wstd);
            let bias = rng.uniform(-pi, pi);
            let a = rng.normal(astd);
            let id = b.nonlinear(
                Activation::real(ActKind::Cos),
                w.iter().enumerate().map(|(i, &x)| Edge::spin(i, x)).collect(),
                bias,
            );
            let weight = if part == 0 { C64::new(a, 0.0) } else { C64::new(0.0, a) };
            out.push(Edge::node_c(id, weight));
        }
    }
    b.finish(spec.n, OutputMode::Amplitude, out, C64::new(0.0, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DickeSpec {
    pub n: usize,
}

/// `Ψ = δ(1ᵀs)` through the ReLU-built integer delta.
pub fn build_dicke(spec: &DickeSpec) -> NqsResult<ComputationGraph> {
    if spec.n == 0 || spec.n % 2 == 1 {
        return Err(NqsError::Spec(format!("Dicke state needs even n >= 2, got {}", spec.n)));
    }
    ComputationGraph::new(
        spec.n,
        vec![
            Node::nonlinear(0, Activation::real(ActKind::DickeDelta), (0..spec.n).map(|i| Edge::spin(i, 1.0)).collect(), 0.0),
            Node::output(1, OutputMode::Amplitude, vec![Edge::node(0, 1.0)], C64::new(0.0, 0.0)),
        ],
    )
}

/// Any supported family, tagged by `"type"` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnsatzSpec {
    Snnqs(SnnqsSpec),
    Mlp(MlpSpec),
    Transformer(TransformerSpec),
    Cosnet(CosnetSpec),
    Dicke(DickeSpec),
}

impl AnsatzSpec {
    pub fn n(&self) -> usize {
        match self {
            AnsatzSpec::Snnqs(s) => s.n,
            AnsatzSpec::Mlp(s) => s.n,
            AnsatzSpec::Transformer(s) => s.n,
            AnsatzSpec::Cosnet(s) => s.n,
            AnsatzSpec::Dicke(s) => s.n,
        }
    }

    /// Copy with the spin count replaced.
    pub fn with_n(&self, n: usize) -> Self {
        let mut s = self.clone();
        match &mut s {
            AnsatzSpec::Snnqs(x) => x.n = n,
            AnsatzSpec::Mlp(x) => x.n = n,
            AnsatzSpec::Transformer(x) => x.n = n,
            AnsatzSpec::Cosnet(x) => x.n = n,
            AnsatzSpec::Dicke(x) => x.n = n,
        }
        s
    }

    /// Hidden-unit count for CosNet; zero for other families.
    pub fn hidden(&self) -> usize {
        match self {
            AnsatzSpec::Cosnet(c) => c.k,
            _ => 0,
        }
    }

    pub fn with_hidden(&self, k: usize) -> Self {
        let mut s = self.clone();
        if let AnsatzSpec::Cosnet(c) = &mut s {
            c.k = k;
        }
        s
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, AnsatzSpec::Dicke(_))
    }

    pub fn build(&self, rng: &mut Rng) -> NqsResult<ComputationGraph> {
        match self {
            AnsatzSpec::Snnqs(s) => build_snnqs(s, rng),
            AnsatzSpec::Mlp(s) => build_mlp(s, rng),
            AnsatzSpec::Transformer(s) => build_transformer(s, rng),
            AnsatzSpec::Cosnet(s) => build_cosnet(s, rng),
            AnsatzSpec::Dicke(s) => build_dicke(s),
        }
    }
}

/// Shape parameters for [`random_dag`].
#[derive(Debug, Clone, Copy)]
pub struct RandomDagSpec {
    pub n: usize,
    pub k: usize,
    pub linear: usize,
}

/// Random real-weight DAG with `k` nonlinear nodes, `linear` linear nodes
/// and occasional explicit input nodes, in random interleaved order.
pub fn random_dag(spec: RandomDagSpec, rng: &mut Rng) -> NqsResult<ComputationGraph> {
    let n = spec.n;
    let acts = |rng: &mut Rng| -> ActKind {
        match rng.below(9) {
            0 => ActKind::Tanh,
            1 => ActKind::Sin,
            2 => ActKind::Cos,
            3 => ActKind::Softplus { beta: 1.0 + rng.below(3) as f64 },
            4 => ActKind::Gelu,
            5 => ActKind::Relu,
            6 => ActKind::Identity,
            7 => ActKind::Poly { coeffs: vec![rng.normal(0.5), rng.normal(0.5), rng.normal(0.3)] },
            _ => ActKind::Exp,
        }
    };
    let mut nodes: Vec<Node> = vec![];
    let inputs = rng.below(3).min(n);
    for i in 0..inputs {
        nodes.push(Node::input(i, rng.below(n)));
    }
    let mut kinds: Vec<bool> = std::iter::repeat_n(true, spec.k).chain(std::iter::repeat_n(false, spec.linear)).collect();
    for i in (1..kinds.len()).rev() {
        let j = rng.below(i + 1);
        kinds.swap(i, j);
    }
    let wstd = 1.0 / (n as f64).sqrt();
    for is_nl in kinds {
        let id = nodes.len();
        let mut edges = vec![];
        for i in 0..n {
            if rng.bernoulli(0.5) {
                edges.push(Edge::spin(i, rng.normal(wstd)));
            }
        }
        for prev in 0..id {
            if rng.bernoulli(0.4) {
                edges.push(Edge::node(prev, rng.normal(0.7)));
            }
        }
        let bias = rng.normal(0.5);
        if is_nl {
            nodes.push(Node::nonlinear(id, Activation::real(acts(rng)), edges, bias));
        } else {
            nodes.push(Node::linear(id, edges, bias));
        }
    }
    let id = nodes.len();
    let log = rng.bernoulli(0.5);
    let mut edges = vec![];
    for prev in 0..id {
        if rng.bernoulli(0.6) {
            // Complex weights only on nonlinear sources, so direct rows stay real.
            let w = if nodes[prev].is_nonlinear() && rng.bernoulli(0.3) { C64::new(rng.normal(0.5), rng.normal(0.5)) } else { C64::new(rng.normal(0.5), 0.0) };
            edges.push(Edge::node_c(prev, w));
        }
    }
    for i in 0..n {
        if rng.bernoulli(0.3) {
            edges.push(Edge::spin(i, rng.normal(wstd)));
        }
    }
    if edges.is_empty() && id > 0 {
        edges.push(Edge::node(id - 1, 1.0));
    }
    let mode = if log { OutputMode::LogAmplitude } else { OutputMode::Amplitude };
    nodes.push(Node::output(id, mode, edges, C64::new(rng.normal(0.2), 0.0)));
    ComputationGraph::new(n, nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::feature_reduce;

    fn rng(seed: u64) -> Rng {
        RngStream::new(seed, 1).rng()
    }

    #[test]
    fn snnqs_shape_and_determinism() {
        let spec = SnnqsSpec::new(6, "tanh", "imag_only");
        let g1 = build_snnqs(&spec, &mut rng(3)).unwrap();
        let g2 = build_snnqs(&spec, &mut rng(3)).unwrap();
        assert_eq!(g1.k(), 1);
        for bits in 0..64 {
            let a = g1.eval_bits(bits).unwrap();
            assert_eq!(a, g2.eval_bits(bits).unwrap());
            assert!((a.norm() - 1.0).abs() < 1e-14);
        }
        assert_eq!(feature_reduce(&g1).mu(), 1);
    }

    #[test]
    fn identity_snnqs_is_product() {
        let spec = SnnqsSpec::new(3, "identity", "real_only");
        let g = build_snnqs(&spec, &mut rng(1)).unwrap();
        // ψ(s) ψ(s') = ψ(s with bit 0 of s') ψ(s' with bit 0 of s)
        let a = |b: u64| g.eval_bits(b).unwrap();
        assert!((a(0b001) * a(0b110) - a(0b000) * a(0b111)).norm() < 1e-12);
    }

    #[test]
    fn mlp_counts_and_reduction() {
        let mut spec = MlpSpec::new(10, 3, 2, "tanh");
        spec.layernorm = false;
        let g = build_mlp(&spec, &mut rng(5)).unwrap();
        assert_eq!(g.k(), 6);
        let r = feature_reduce(&g);
        assert_eq!(r.mu(), 3);
        for bits in 0..1 << 10 {
            let (a, b) = (g.eval_bits(bits).unwrap(), r.eval_bits(bits).unwrap());
            assert!((a - b).norm() / a.norm() < 1e-12);
        }
        let ln = build_mlp(&MlpSpec::new(10, 3, 2, "tanh"), &mut rng(5)).unwrap();
        assert_eq!(ln.k(), 2 * (3 + 1 + 6 + 3));
        assert!(feature_reduce(&ln).mu() <= 3);
        let mut zero_depth = MlpSpec::new(10, 3, 0, "tanh");
        assert!(build_mlp(&zero_depth, &mut rng(1)).is_err());
        zero_depth.depth = 2;
        zero_depth.width = 5;
        assert!(build_mlp(&zero_depth, &mut rng(1)).is_ok());
    }

    #[test]
    fn mlp_with_layernorm_matches_reduced() {
        let g = build_mlp(&MlpSpec::new(10, 3, 2, "tanh"), &mut rng(8)).unwrap();
        let r = feature_reduce(&g);
        for bits in 0..1 << 10 {
            let (a, b) = (g.eval_bits(bits).unwrap(), r.eval_bits(bits).unwrap());
            assert!((a - b).norm() / a.norm() < 1e-12, "bits {bits}");
        }
    }

    #[test]
    fn transformer_tokens() {
        let mut spec = TransformerSpec::new(8);
        spec.patch = 3;
        spec.stride = 2;
        spec.heads = 1;
        spec.layers = 1;
        spec.ffn_width = 4;
        assert_eq!(spec.tokens(), 3);
        let g = build_transformer(&spec, &mut rng(2)).unwrap();
        assert!(g.eval_bits(17).unwrap().norm() > 0.0);
        spec.patch = 9;
        assert!(build_transformer(&spec, &mut rng(2)).is_err());
    }

    #[test]
    fn transformer_single_token_attention_is_identity() {
        let mut spec = TransformerSpec::new(4);
        spec.patch = 4;
        spec.heads = 2;
        spec.layers = 1;
        spec.ffn_width = 2;
        assert_eq!(spec.tokens(), 1);
        let g = build_transformer(&spec, &mut rng(2)).unwrap();
        for bits in 0..16 {
            assert!(g.eval_bits(bits).unwrap().norm().is_finite());
        }
    }

    #[test]
    fn transformer_frozen_parts_shared_across_trials() {
        let spec = TransformerSpec { embed_dim: Some(8), ..TransformerSpec::new(12) };
        let g1 = build_transformer(&spec, &mut rng(1)).unwrap();
        let g2 = build_transformer(&spec, &mut rng(2)).unwrap();
        assert_eq!(g1.nodes().len(), g2.nodes().len());
        // The first embedding node is frozen, FFN nodes are not.
        let emb = 12 / 1 * 0 + 6 * spec.tokens();
        assert_eq!(g1.nodes()[emb].inputs, g2.nodes()[emb].inputs);
    }

    #[test]
    fn cosnet_shape() {
        let g = build_cosnet(&CosnetSpec::new(6, 1), &mut rng(4)).unwrap();
        assert_eq!(g.k(), 2);
        assert!(feature_reduce(&g).mu() <= 3);
        assert!(build_cosnet(&CosnetSpec::new(6, 0), &mut rng(4)).is_err());
    }

    #[test]
    fn cosnet_amplitude_variance_scales() {
        // Var(a) = σ_a²/k: sum of squares over many draws.
        let var = |k: usize| {
            let mut r = rng(11);
            let astd = 10.0 / (k as f64).sqrt();
            let xs = r.normals(20_000, astd);
            xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
        };
        let ratio = var(4) / var(8);
        assert!((ratio - 2.0).abs() < 0.1);
    }

    #[test]
    fn dicke_graph() {
        let g = build_dicke(&DickeSpec { n: 4 }).unwrap();
        let nz: Vec<u64> = (0..16).filter(|&b| g.eval_bits(b).unwrap().norm() > 0.0).collect();
        assert_eq!(nz.len(), 6);
        assert!(nz.iter().all(|b| b.count_ones() == 2));
        assert!(build_dicke(&DickeSpec { n: 3 }).is_err());
    }

    #[test]
    fn random_dags_validate() {
        for seed in 0..50 {
            let mut r = rng(seed);
            let spec = RandomDagSpec { n: 1 + r.below(8), k: r.below(9), linear: r.below(4) };
            let g = random_dag(spec, &mut r).unwrap();
            assert_eq!(g.k(), spec.k);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let s = AnsatzSpec::Snnqs(SnnqsSpec::new(8, "sin", "real_only"));
        let t = serde_json::to_string(&s).unwrap();
        assert!(t.contains("\"type\":\"snnqs\""));
        let back: AnsatzSpec = serde_json::from_str(&t).unwrap();
        assert_eq!(back, s);
        let parsed: AnsatzSpec = serde_json::from_str(r#"{"type":"cosnet","n":12,"k":4}"#).unwrap();
        assert_eq!(parsed, AnsatzSpec::Cosnet(CosnetSpec::new(12, 4)));
    }
}
