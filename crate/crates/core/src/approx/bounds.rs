//! Auxiliary polynomial states, rank and degree formulas, and the assembled
//! entropy bound for a graph and a bipartition.

use num_bigint::BigUint;
use serde::Serialize;

use crate::activations::Analyticity;
use crate::approx::certify::optimize_polyellipse;
use crate::approx::chebyshev::{cheb_fit_multi, ChebyshevApprox, MAX_FIT_MU, MAX_QUADRATURE_POINTS};
use crate::entanglement::{fannes_audenaert_bound, subregion_entropy, LogBase};
use crate::error::{NqsError, NqsResult};
use crate::graph::{feature_reduce, ComputationGraph, NodeKind, OutputMode, ReducedForm, Source};
use crate::spin::Subregion;
use crate::statevector::{materialize, two_norm_distance, FnSource, Statevector};
use crate::C64;

/// Auto degree cap for one feature.
pub const AUTO_DEGREE_CAP_1: usize = 64;
/// Auto degree cap for several features.
pub const AUTO_DEGREE_CAP_MULTI: usize = 24;
/// Auxiliary diagnostics are skipped above this many term evaluations.
pub const AUX_WORK_LIMIT: u128 = 1 << 32;

/// `((d+1)(d+2)/2)^μ`, exact.
pub fn rank_bound(d: usize, mu: usize) -> BigUint {
    let base = BigUint::from(d as u64 + 1) * BigUint::from(d as u64 + 2) / BigUint::from(2u32);
    base.pow(mu as u32)
}

/// `μ ln((d+1)(d+2)/2)` in nats.
pub fn ln_rank_bound(d: usize, mu: usize) -> f64 {
    mu as f64 * (((d as f64 + 1.0) * (d as f64 + 2.0)) / 2.0).ln()
}

/// Smallest `d ≥ 0` with `d ≥ (n/2a) ln 2 + (1/a) ln n + (1/a) ln(8C/(eᵃ−1))`.
pub fn degree_for_n(n: usize, a: f64, c: f64) -> NqsResult<usize> {
    if !(a > 0.0) || !(c > 0.0) {
        return Err(NqsError::Domain(format!("degree_for_n needs a > 0 and C > 0, got a = {a}, C = {c}")));
    }
    let n = n as f64;
    let v = n / (2.0 * a) * std::f64::consts::LN_2 + n.ln() / a + (8.0 * c / a.exp_m1()).ln() / a;
    Ok(if v > 0.0 { v.ceil() as usize } else { 0 })
}

/// Smallest `d ≥ 0` with
/// `d ≥ n ln2/(2 ln ρ) + 2 ln n/ln ρ + ln(C 2^{μ+2} μ (ρ−1)^{−μ} ρ^{μ−1})/ln ρ`.
pub fn degree_for_n_multi(n: usize, rho: f64, c: f64, mu: usize) -> NqsResult<usize> {
    if !(rho > 1.0) {
        return Err(NqsError::Domain(format!("ellipse parameter rho must exceed 1, got {rho}")));
    }
    if !(c > 0.0) || mu == 0 {
        return Err(NqsError::Domain(format!("need C > 0 and mu >= 1, got C = {c}, mu = {mu}")));
    }
    let (lr, m, nf) = (rho.ln(), mu as f64, n as f64);
    let log_const = c.ln() + (m + 2.0) * std::f64::consts::LN_2 + m.ln() - m * (rho - 1.0).ln() + (m - 1.0) * lr;
    let v = nf * std::f64::consts::LN_2 / (2.0 * lr) + 2.0 * nf.ln() / lr + log_const / lr;
    Ok(if v > 0.0 { v.ceil() as usize } else { 0 })
}

/// `w₀ ln[(h^{d₀}+1)(h^{d₀}+2)/2]` for polynomial MLPs.
pub fn poly_mlp_bound(w0: usize, d0: usize, h: usize) -> NqsResult<f64> {
    if w0 == 0 || d0 == 0 || h == 0 {
        return Err(NqsError::Contract(format!("need w0, d0, h >= 1, got {w0}, {d0}, {h}")));
    }
    let hd = (h as f64).powi(d0 as i32);
    Ok(w0 as f64 * ((hd + 1.0) * (hd + 2.0) / 2.0).ln())
}

/// Normalized state with amplitudes `P_d(t_1(s), .., t_μ(s))`.
pub fn auxiliary_state(r: &ReducedForm, p: &ChebyshevApprox) -> NqsResult<Statevector> {
    if p.mu != r.mu() {
        return Err(NqsError::Dimension { expected: r.mu(), got: p.mu });
    }
    for (j, (have, need)) in p.tbar.iter().zip(r.tbar()).enumerate() {
        if *have < need * (1.0 - 1e-12) {
            return Err(NqsError::Contract(format!(
                "fit domain {have} for feature {j} does not cover its sup-norm {need}"
            )));
        }
    }
    materialize(&FnSource { n: r.n(), f: |bits: u64| Ok(p.eval(&r.feature_values(bits))) })
}

/// Total polynomial degree of the residual map, when it is a polynomial.
pub fn residual_poly_degree(g: &ComputationGraph) -> Option<usize> {
    let mut deg = std::collections::HashMap::new();
    for node in g.sorted_nodes() {
        let in_deg = node
            .inputs
            .iter()
            .map(|e| match e.from {
                Source::Spin(_) => 1,
                Source::Node(id) => deg[&id],
            })
            .max()
            .unwrap_or(0);
        let d = match &node.kind {
            NodeKind::Input { .. } => 1,
            NodeKind::Linear | NodeKind::Output(_) => in_deg,
            NodeKind::Nonlinear(act) => act.poly_degree()? * in_deg,
        };
        deg.insert(node.id, d);
    }
    let d = deg[&g.output_node().id];
    match g.output_mode() {
        OutputMode::Amplitude => Some(d),
        OutputMode::LogAmplitude => (d == 0).then_some(0),
    }
}

/// Largest ellipse parameter for which the residual map is analytic on the
/// polyellipse, or the reasons it cannot be certified.
fn certifiable_a_max(r: &ReducedForm) -> Result<f64, Vec<String>> {
    let g = &r.residual;
    let nonlinear: Vec<_> = g.nodes().iter().filter(|n| n.is_nonlinear()).collect();
    let mut reasons = vec![];
    let mut strip = None;
    for node in &nonlinear {
        let NodeKind::Nonlinear(act) = &node.kind else { continue };
        match act.analyticity() {
            Analyticity::Entire => {}
            Analyticity::None => reasons.push(format!("node {}: {} is not analytic", node.id, act.kind.name())),
            Analyticity::Strip(h) => strip = Some((node, h)),
        }
    }
    if !reasons.is_empty() {
        return Err(reasons);
    }
    let Some((node, h)) = strip else { return Ok(f64::INFINITY) };
    if nonlinear.len() > 1 {
        return Err(vec![format!(
            "node {}: strip-analytic activation in a graph with {} nonlinear nodes",
            node.id,
            nonlinear.len()
        )]);
    }
    let tbar = r.tbar();
    let mut reach = 0.0;
    for e in &node.inputs {
        match e.from {
            Source::Spin(j) if e.weight.im == 0.0 => reach += e.weight.re.abs() * tbar[j],
            _ => return Err(vec![format!("node {}: pre-activation is not a real combination of features", node.id)]),
        }
    }
    if node.bias.im != 0.0 {
        return Err(vec![format!("node {}: complex bias", node.id)]);
    }
    Ok(if reach == 0.0 { f64::INFINITY } else { (0.9 * h / reach).asinh() })
}

/// Residual map at rescaled complex arguments `x_j = t_j / t̄_j`.
fn residual_on_ellipse(r: &ReducedForm, x: &[C64]) -> Option<C64> {
    let z: Vec<C64> = x.iter().zip(r.tbar()).map(|(x, s)| x * s).collect();
    r.residual.eval_inputs(&z).ok()
}

/// Certified ellipse parameters `(a, M)` for the residual map at degree `d`,
/// or `None` when the map cannot be certified.
pub fn reduced_ellipse(r: &ReducedForm, d: usize) -> Option<(f64, f64)> {
    let mu = r.mu();
    if mu == 0 || mu > MAX_FIT_MU {
        return None;
    }
    let a_max = certifiable_a_max(r).ok()?;
    optimize_polyellipse(&|x: &[C64]| residual_on_ellipse(r, x), mu, a_max, d)
}

/// Chebyshev fit of the residual map on `[-t̄_j, t̄_j]`.
pub fn fit_reduced(r: &ReducedForm, d: usize, ellipse: Option<(f64, f64)>) -> NqsResult<ChebyshevApprox> {
    let g = |t: &[f64]| -> NqsResult<C64> {
        let z: Vec<C64> = t.iter().map(|&x| C64::new(x, 0.0)).collect();
        r.residual.eval_inputs(&z)
    };
    cheb_fit_multi(&g, &r.tbar(), d, ellipse)
}

/// Degree selection for [`full_bound_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeChoice {
    Fixed(usize),
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundOptions {
    pub degree: DegreeChoice,
    /// `ε_poly = α e^{−β d^γ}` for the normalized amplitude function.
    pub rate: Option<(f64, f64, f64)>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { degree: DegreeChoice::Auto, rate: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuxDiagnostics {
    pub schmidt_rank: usize,
    pub entropy: f64,
    /// Measured `‖ψ − ψ̃‖₂`.
    pub delta_norm: f64,
    /// Largest `|G − P_d|` over the realized feature values, normalized.
    pub eps_on_features: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub k: usize,
    pub mu: usize,
    pub d: usize,
    pub region: String,
    pub region_size: usize,
    /// Decimal string; may exceed 64 bits.
    pub rank_bound: String,
    pub entropy_bound_aux: f64,
    /// Sup error of the fit for the unit-norm amplitude function.
    pub eps_poly: f64,
    /// One of `exact`, `certified`, `empirical`, `rate`.
    pub eps_source: String,
    pub eps_empirical: Option<f64>,
    pub eps_certified: Option<f64>,
    pub delta_norm_bound: f64,
    pub trace_bound: f64,
    pub fa_slack: f64,
    pub entropy_bound_final: f64,
    pub measured_entropy: f64,
    pub bound_holds: bool,
    pub certified: bool,
    pub empirical_only: bool,
    pub empirical_reasons: Vec<String>,
    pub ellipse_a: Option<f64>,
    pub ellipse_sup: Option<f64>,
    /// Ellipse sups are sampled estimates, not rigorous maxima.
    pub sup_is_estimate: bool,
    pub state_norm: f64,
    pub rate: Option<[f64; 3]>,
    pub aux: Option<AuxDiagnostics>,
}

fn auto_cap(mu: usize) -> usize {
    let base = if mu <= 1 { AUTO_DEGREE_CAP_1 } else { AUTO_DEGREE_CAP_MULTI };
    let mut d = base;
    while d > 0 && (4 * (d as u128 + 1)).pow(mu.max(1) as u32) > MAX_QUADRATURE_POINTS as u128 {
        d -= 1;
    }
    d
}

/// Fannes–Audenaert slack for a trace-distance bound `t` on a side of
/// dimension `2^size`; saturates at `ln 2^size` where the bound peaks.
pub fn fa_slack_for_bound(t: f64, size: usize) -> NqsResult<f64> {
    let dim = 2f64.powi(size as i32);
    if t >= 1.0 - 1.0 / dim {
        Ok(size as f64 * std::f64::consts::LN_2)
    } else {
        fannes_audenaert_bound(t, size, LogBase::E)
    }
}

/// Explicit entropy bound for `S_A` of the state of `g`, with every
/// intermediate quantity and the measured entropy.
pub fn full_bound_report(g: &ComputationGraph, a: &Subregion, opts: &BoundOptions) -> NqsResult<BoundReport> {
    if a.n != g.n() {
        return Err(NqsError::Dimension { expected: g.n(), got: a.n });
    }
    let n = g.n();
    let r = feature_reduce(g);
    let mu = r.mu();
    let psi = materialize(g)?;
    let norm = psi.norm_was;
    let measured = subregion_entropy(&psi, a)?.entropy;
    let target = 1.0 / (4.0 * (n as f64).powi(2) * 2f64.powf(n as f64 / 2.0));

    let poly_deg = residual_poly_degree(&r.residual);
    let mut reasons = vec![];
    let a_max = match certifiable_a_max(&r) {
        Ok(x) => Some(x),
        Err(why) => {
            reasons.extend(why);
            None
        }
    };
    if mu > MAX_FIT_MU {
        reasons.push(format!("mu = {mu} exceeds the tensor-fit cap {MAX_FIT_MU}"));
    }
    let fit_ok = mu >= 1 && mu <= MAX_FIT_MU;
    let ellipse_at = |d: usize| -> Option<(f64, f64)> {
        if !fit_ok {
            return None;
        }
        optimize_polyellipse(&|x: &[C64]| residual_on_ellipse(&r, x), mu, a_max?, d)
    };
    let cap = auto_cap(mu);

    let d = match opts.degree {
        DegreeChoice::Fixed(d) => d,
        DegreeChoice::Auto => {
            if mu == 0 {
                0
            } else if let Some((alpha, beta, gamma)) = opts.rate {
                let need = ((alpha / target).ln().max(0.0) / beta).powf(1.0 / gamma);
                (need.ceil() as usize).min(cap)
            } else if let Some(p) = poly_deg {
                p.min(cap)
            } else if a_max.is_some() && fit_ok {
                let mut d = crate::activations::ELLIPSE_DEGREE_HINT.min(cap);
                for _ in 0..4 {
                    let Some((ea, m)) = ellipse_at(d) else { break };
                    let next = degree_for_n_multi(n, ea.exp(), m / norm, mu)?.clamp(1, cap);
                    if next == d {
                        break;
                    }
                    d = next;
                }
                d
            } else if fit_ok {
                let mut chosen = cap;
                for d in [2usize, 4, 6, 8, 12, 16, 24, 32, 48, 64] {
                    if d > cap {
                        break;
                    }
                    let fit = fit_reduced(&r, d, None)?;
                    if fit.error_empirical / norm <= target {
                        chosen = d;
                        break;
                    }
                }
                chosen
            } else {
                cap
            }
        }
    };

    let exact = mu == 0 || poly_deg.is_some_and(|p| d >= p);
    let ellipse = if exact || opts.rate.is_some() { None } else { ellipse_at(d) };
    let fit = if fit_ok { Some(fit_reduced(&r, d, ellipse)?) } else { None };
    let eps_empirical = fit.as_ref().map(|f| f.error_empirical / norm);
    let eps_certified = fit.as_ref().and_then(|f| f.error_bound).map(|b| b / norm);

    let (eps_poly, eps_source) = if let Some((alpha, beta, gamma)) = opts.rate {
        (alpha * (-beta * (d as f64).powf(gamma)).exp(), "rate")
    } else if exact {
        (0.0, "exact")
    } else if let Some(e) = eps_certified {
        (e, "certified")
    } else if let Some(e) = eps_empirical {
        (e, "empirical")
    } else {
        return Err(NqsError::Capacity(format!(
            "no approximation error available for mu = {mu}; supply a rate (alpha, beta, gamma)"
        )));
    };
    let certified = eps_source == "exact" || eps_source == "certified";
    if !certified && eps_source != "rate" && reasons.is_empty() {
        reasons.push("no ellipse parameters found".into());
    }

    let aux = match &fit {
        Some(f) if (1u128 << n) * ((d as u128 + 1).pow(mu as u32)) <= AUX_WORK_LIMIT => {
            let raw: Vec<C64> = crate::statevector::materialize(&FnSource {
                n,
                f: |bits: u64| Ok(f.eval(&r.feature_values(bits))),
            })
            .map(|s| s.amplitudes().iter().map(|z| z * s.norm_was).collect())?;
            let on_features = raw
                .iter()
                .zip(psi.amplitudes())
                .map(|(p, x)| (p - x * norm).norm())
                .fold(0.0, f64::max)
                / norm;
            let aux = Statevector::from_amplitudes(n, raw)?;
            let e = subregion_entropy(&aux, a)?;
            Some(AuxDiagnostics {
                schmidt_rank: e.schmidt_rank,
                entropy: e.entropy,
                delta_norm: two_norm_distance(&psi, &aux)?,
                eps_on_features: on_features,
            })
        }
        _ => None,
    };

    let delta_norm_bound = 2.0 * eps_poly.sqrt() * 2f64.powf(n as f64 / 4.0);
    let trace_bound = delta_norm_bound.min(1.0);
    let side = a.size().min(n - a.size());
    let fa_slack = if trace_bound == 0.0 { 0.0 } else { fa_slack_for_bound(trace_bound, side)? };
    let entropy_bound_aux = ln_rank_bound(d, mu);
    let entropy_bound_final = entropy_bound_aux + fa_slack;
    Ok(BoundReport {
        n,
        k: g.k(),
        mu,
        d,
        region: a.to_hex(),
        region_size: a.size(),
        rank_bound: rank_bound(d, mu).to_string(),
        entropy_bound_aux,
        eps_poly,
        eps_source: eps_source.into(),
        eps_empirical,
        eps_certified,
        delta_norm_bound,
        trace_bound,
        fa_slack,
        entropy_bound_final,
        measured_entropy: measured,
        bound_holds: measured <= entropy_bound_final + 1e-9,
        certified,
        empirical_only: !certified,
        empirical_reasons: if certified { vec![] } else { reasons },
        ellipse_a: ellipse.map(|e| e.0),
        ellipse_sup: ellipse.map(|e| e.1),
        sup_is_estimate: ellipse.is_some(),
        state_norm: norm,
        rate: opts.rate.map(|(x, y, z)| [x, y, z]),
        aux,
    })
}
