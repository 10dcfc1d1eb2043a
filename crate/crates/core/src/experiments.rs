//! Ensemble sweeps over trials, system sizes, hidden-unit counts and
//! subregions, with CSV rows and per-point aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::page_value;
use crate::ansatz::{random_dag, AnsatzSpec, CosnetSpec, DickeSpec, MlpSpec, RandomDagSpec, SnnqsSpec, TransformerSpec};
use crate::entanglement::subregion_entropy;
use crate::error::{NqsError, NqsResult};
use crate::graph::{eval_full, feature_reduce, ComputationGraph};
use crate::rng::RngStream;
use crate::spin::{check_n, SpinConfig, Subregion};
use crate::statevector::materialize;

/// Exact CSV header of sweep output.
pub const CSV_HEADER: &str = "experiment,n,subsystem_size,k,trial,region_mask_hex,seed,entropy_nats";
pub const RESULT_SCHEMA_VERSION: u32 = 1;
/// Largest tolerated fraction of degenerate trials at one point.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// The first `⌊n/2⌋` spins.
    #[default]
    FixedHalf,
    /// The contiguous prefix of each size.
    Sweep,
    /// Windows with a random start and periodic wrap.
    RandomContiguous,
    /// Uniformly random subsets.
    RandomSubset,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_trials() -> usize {
    20
}
fn default_regions() -> usize {
    10
}
fn schema_version() -> u32 {
    RESULT_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub ansatz: AnsatzSpec,
    /// System sizes; defaults to the ansatz's `n`.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    /// Hidden-unit counts (CosNet only).
    #[serde(default)]
    pub k_grid: Option<Vec<usize>>,
    /// Subsystem sizes; `None` means `⌊n/2⌋` for fixed-half and
    /// `1..n` otherwise.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub region_mode: RegionMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_regions")]
    pub regions_per_trial: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(name: &str, ansatz: AnsatzSpec, region_mode: RegionMode) -> Self {
        Self {
            schema_version: RESULT_SCHEMA_VERSION,
            name: name.into(),
            ansatz,
            n_grid: None,
            k_grid: None,
            sizes: None,
            region_mode,
            trials: 20,
            regions_per_trial: 10,
            seed: 0,
            output: None,
        }
    }

    pub fn n_values(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| vec![self.ansatz.n()])
    }

    pub fn k_values(&self) -> Vec<usize> {
        self.k_grid.clone().unwrap_or_else(|| vec![self.ansatz.hidden()])
    }

    /// Subsystem sizes evaluated at system size `n`.
    pub fn sizes_for(&self, n: usize) -> Vec<usize> {
        match (&self.sizes, self.region_mode) {
            (Some(s), _) => s.iter().copied().filter(|&m| m >= 1 && m < n).collect(),
            (None, RegionMode::FixedHalf) => vec![n / 2],
            (None, _) => (1..n).collect(),
        }
    }

    /// Regions drawn per (trial, size).
    pub fn region_count(&self) -> usize {
        match self.region_mode {
            RegionMode::FixedHalf | RegionMode::Sweep => 1,
            _ => self.regions_per_trial,
        }
    }

    pub fn validate(&self) -> NqsResult<()> {
        if self.trials == 0 {
            return Err(NqsError::Spec("trials must be >= 1".into()));
        }
        if self.regions_per_trial == 0 {
            return Err(NqsError::Spec("regions_per_trial must be >= 1".into()));
        }
        if self.schema_version != RESULT_SCHEMA_VERSION {
            return Err(NqsError::Spec(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.k_grid.is_some() && !matches!(self.ansatz, AnsatzSpec::Cosnet(_)) {
            return Err(NqsError::Spec("k_grid applies to CosNet only".into()));
        }
        for n in self.n_values() {
            check_n(n)?;
            if n < 2 {
                return Err(NqsError::Spec(format!("n = {n} admits no bipartition")));
            }
            if self.sizes_for(n).is_empty() {
                return Err(NqsError::Spec(format!("no valid subsystem size at n = {n}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub subsystem_size: usize,
    pub k: usize,
    pub trial: usize,
    pub region_mask_hex: String,
    pub entropy_nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateTrial {
    pub n: usize,
    pub k: usize,
    pub trial: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub n: usize,
    pub k: usize,
    pub subsystem_size: usize,
    /// Mean over trials of the per-trial region average.
    pub mean: f64,
    /// Population standard deviation of the per-trial averages.
    pub std: f64,
    pub stderr: f64,
    pub trials: usize,
    pub page_nats: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
    pub degenerate: Vec<DegenerateTrial>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                self.experiment, r.n, r.subsystem_size, r.k, r.trial, r.region_mask_hex, self.seed, r.entropy_nats
            );
        }
        s
    }

    /// Aggregates and degenerate-trial log, without the rows.
    pub fn aggregate_json(&self, config: &ExperimentConfig) -> String {
        let doc = serde_json::json!({
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "seed": self.seed,
            "config": config,
            "points": self.aggregates,
            "degenerate": self.degenerate,
        });
        serde_json::to_string_pretty(&doc).expect("aggregate serializes")
    }

    pub fn aggregate(&self, n: usize, k: usize, size: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.n == n && a.k == k && a.subsystem_size == size)
    }
}

/// Regions of size `m` for one trial.
pub fn sample_regions(mode: RegionMode, n: usize, m: usize, count: usize, stream: RngStream) -> NqsResult<Vec<Subregion>> {
    match mode {
        RegionMode::FixedHalf | RegionMode::Sweep => Ok(vec![Subregion::contiguous(0, m, n)?]),
        RegionMode::RandomContiguous => {
            let mut r = stream.rng();
            (0..count).map(|_| Subregion::contiguous(r.below(n), m, n)).collect()
        }
        RegionMode::RandomSubset => {
            let mut r = stream.rng();
            (0..count).map(|_| Subregion::from_indices(&r.subset(n, m), n)).collect()
        }
    }
}

/// Rows of one trial, or the error that made it degenerate.
fn run_trial(cfg: &ExperimentConfig, spec: &AnsatzSpec, n: usize, k: usize, trial: usize) -> NqsResult<Vec<SweepRow>> {
    let labels = [n as u64, k as u64, trial as u64];
    let mut rng = RngStream::derived(cfg.seed, &labels).rng();
    let g = spec.build(&mut rng)?;
    let psi = materialize(&g)?;
    let mut rows = vec![];
    for m in cfg.sizes_for(n) {
        let stream = RngStream::derived(cfg.seed, &[n as u64, k as u64, trial as u64, m as u64, 0xA5]);
        for region in sample_regions(cfg.region_mode, n, m, cfg.region_count(), stream)? {
            let s = subregion_entropy(&psi, &region)?.entropy;
            rows.push(SweepRow {
                n,
                subsystem_size: m,
                k,
                trial,
                region_mask_hex: region.to_hex(),
                entropy_nats: s,
            });
        }
    }
    Ok(rows)
}

fn is_degenerate(e: &NqsError) -> bool {
    matches!(e, NqsError::DegenerateState(_) | NqsError::AmplitudeOverflow { .. } | NqsError::Numeric(_))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

/// Run every (n, k, trial) job; deterministic given the config.
pub fn run_sweep(cfg: &ExperimentConfig) -> NqsResult<SweepResult> {
    cfg.validate()?;
    let is_cosnet = matches!(cfg.ansatz, AnsatzSpec::Cosnet(_));
    let mut jobs = vec![];
    for n in cfg.n_values() {
        for k in cfg.k_values() {
            let spec = cfg.ansatz.with_n(n);
            let spec = if is_cosnet { spec.with_hidden(k) } else { spec };
            for trial in 0..cfg.trials {
                jobs.push((n, k, trial, spec.clone()));
            }
        }
    }
    let outcomes: Vec<NqsResult<Vec<SweepRow>>> =
        jobs.par_iter().map(|(n, k, trial, spec)| run_trial(cfg, spec, *n, *k, *trial)).collect();

    let mut rows = vec![];
    let mut degenerate = vec![];
    for ((n, k, trial, _), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(r) => rows.extend(r),
            Err(e) if is_degenerate(&e) => degenerate.push(DegenerateTrial {
                n: *n,
                k: *k,
                trial: *trial,
                kind: e.kind().into(),
                message: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let mut bad: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for d in &degenerate {
        *bad.entry((d.n, d.k)).or_default() += 1;
    }
    for ((n, k), count) in bad {
        if count as f64 > MAX_DEGENERATE_FRACTION * cfg.trials as f64 {
            return Err(NqsError::Experiment(format!(
                "{count} of {} trials degenerate at n = {n}, k = {k}",
                cfg.trials
            )));
        }
    }

    // (n, k, size) -> trial -> entropies, in sorted order.
    let mut per: BTreeMap<(usize, usize, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in &rows {
        per.entry((r.n, r.k, r.subsystem_size)).or_default().entry(r.trial).or_default().push(r.entropy_nats);
    }
    let aggregates = per
        .into_iter()
        .map(|((n, k, m), trials)| {
            let means: Vec<f64> = trials.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            let (mean, std) = mean_std(&means);
            Aggregate {
                n,
                k,
                subsystem_size: m,
                mean,
                std,
                stderr: std / (means.len() as f64).sqrt(),
                trials: means.len(),
                page_nats: if is_cosnet { page_value(m, n).ok() } else { None },
            }
        })
        .collect();
    Ok(SweepResult {
        schema_version: RESULT_SCHEMA_VERSION,
        experiment: cfg.name.clone(),
        seed: cfg.seed,
        rows,
        aggregates,
        degenerate,
    })
}

/// CosNet sweep over hidden-unit counts at fixed subsystem sizes, with the
/// Page value attached to every aggregate.
pub fn run_cosnet_k_sweep(cfg: &ExperimentConfig) -> NqsResult<SweepResult> {
    if !matches!(cfg.ansatz, AnsatzSpec::Cosnet(_)) {
        return Err(NqsError::Spec("k sweep needs a cosnet ansatz".into()));
    }
    if cfg.k_grid.as_ref().is_none_or(|k| k.is_empty()) {
        return Err(NqsError::Spec("k sweep needs a nonempty k_grid".into()));
    }
    run_sweep(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub k: usize,
    pub mu: usize,
    pub samples: usize,
    pub full_seconds: f64,
    pub reduced_seconds: f64,
    /// `full / reduced`.
    pub ratio: f64,
    pub max_rel_diff: f64,
}

/// Time full and reduced evaluation over random configurations; the two
/// paths must agree to `1e-12` relative.
pub fn benchmark_reduction(g: &ComputationGraph, samples: usize, seed: u64) -> NqsResult<BenchReport> {
    let n = g.n();
    let r = feature_reduce(g);
    let mut rng = RngStream::new(seed, 0xBE).rng();
    let mask = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
    let configs: Vec<u64> = (0..samples).map(|_| rng.next_u64() & mask).collect();

    let mut buf = g.scratch();
    let t0 = Instant::now();
    let full: Vec<_> = configs.iter().map(|&b| g.eval_bits_with(b, &mut buf)).collect::<NqsResult<_>>()?;
    let full_seconds = t0.elapsed().as_secs_f64();
    let mut rbuf = r.residual.scratch();
    let t1 = Instant::now();
    let reduced: Vec<_> = configs.iter().map(|&b| r.eval_bits_with(b, &mut rbuf)).collect::<NqsResult<_>>()?;
    let reduced_seconds = t1.elapsed().as_secs_f64();

    let max_rel_diff = full.iter().zip(&reduced).map(|(a, b)| rel_diff(*a, *b)).fold(0.0, f64::max);
    if max_rel_diff > 1e-12 {
        return Err(NqsError::Consistency(format!("reduced evaluation differs by {max_rel_diff:e} relative")));
    }
    Ok(BenchReport {
        n,
        k: g.k(),
        mu: r.mu(),
        samples,
        full_seconds,
        reduced_seconds,
        ratio: full_seconds / reduced_seconds.max(1e-12),
        max_rel_diff,
    })
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: crate::C64, b: crate::C64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub index: usize,
    pub n: usize,
    pub k: usize,
    pub mu: usize,
    /// Largest per-configuration relative difference; infinite when only one
    /// path overflowed.
    pub max_rel_diff: f64,
    /// Largest difference relative to the largest amplitude.
    pub max_norm_diff: f64,
    /// Configurations whose amplitude overflowed on both paths.
    pub overflow: usize,
}

/// Random DAGs with `n ≤ max_n`, `k ≤ max_k`, each reduced and compared
/// against the full forward pass on every configuration.
pub fn reduction_audit(count: usize, max_n: usize, max_k: usize, seed: u64) -> NqsResult<Vec<AuditRow>> {
    (0..count)
        .into_par_iter()
        .map(|index| {
            let mut rng = RngStream::derived(seed, &[index as u64, 0xDA]).rng();
            let spec = RandomDagSpec { n: 1 + rng.below(max_n), k: rng.below(max_k + 1), linear: rng.below(4) };
            let g = random_dag(spec, &mut rng)?;
            let r = feature_reduce(&g);
            let mut worst = 0.0f64;
            let (mut abs_diff, mut scale) = (0.0f64, 0.0f64);
            let mut overflow = 0;
            let mut rbuf = r.residual.scratch();
            for bits in 0..1u64 << spec.n {
                let s = SpinConfig::new(bits, spec.n)?;
                match (eval_full(&g, &s), r.eval_bits_with(bits, &mut rbuf)) {
                    (Ok(a), Ok(b)) => {
                        worst = worst.max(rel_diff(a, b));
                        abs_diff = abs_diff.max((a - b).norm());
                        scale = scale.max(a.norm()).max(b.norm());
                    }
                    (Err(NqsError::AmplitudeOverflow { .. }), Err(NqsError::AmplitudeOverflow { .. })) => overflow += 1,
                    (Err(NqsError::AmplitudeOverflow { .. }), Ok(_)) | (Ok(_), Err(NqsError::AmplitudeOverflow { .. })) => {
                        worst = f64::INFINITY
                    }
                    (Err(e), _) | (_, Err(e)) => return Err(e),
                }
            }
            let max_norm_diff = if worst.is_infinite() {
                f64::INFINITY
            } else if scale == 0.0 {
                0.0
            } else {
                abs_diff / scale
            };
            Ok(AuditRow { index, n: spec.n, k: spec.k, mu: r.mu(), max_rel_diff: worst, max_norm_diff, overflow })
        })
        .collect()
}

pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut s = String::from("index,n,k,mu,max_rel_diff,max_norm_diff,overflow\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.index, r.n, r.k, r.mu, r.max_rel_diff, r.max_norm_diff, r.overflow);
    }
    s
}

/// Preset names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = ["fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b"].iter().map(|s| s.to_string()).collect();
    for family in ["real", "phase", "general"] {
        for act in ["tanh", "sin", "relu", "gelu"] {
            names.push(format!("supp_sn_{family}_{act}"));
        }
    }
    names.extend(["supp_mlp_w2d3", "supp_mlp_w5d2", "supp_mlp_w5d5", "supp_mlp_width", "supp_mlp_n"].map(String::from));
    names
}

/// Desk-scale preset configurations. Sizes default to `n = 16` (12 for the
/// transformer) instead of 22; pass `n` to override.
pub fn preset(name: &str, n: Option<usize>) -> NqsResult<Vec<ExperimentConfig>> {
    let n0 = n.unwrap_or(16);
    let nt = n.unwrap_or(12);
    let sn_phase = AnsatzSpec::Snnqs(SnnqsSpec::new(n0, "tanh", "imag_only"));
    let mlp = |n, w, d| AnsatzSpec::Mlp(MlpSpec::new(n, w, d, "tanh"));
    let tnqs = AnsatzSpec::Transformer(TransformerSpec::new(nt));
    let cfg = |suffix: &str, ansatz: AnsatzSpec, mode: RegionMode| ExperimentConfig::new(&format!("{name}{suffix}"), ansatz, mode);
    let even_grid = |lo: usize, hi: usize| (lo..=hi).step_by(2).collect::<Vec<_>>();
    let out = match name {
        "fig1a" => {
            let mut c = cfg("", AnsatzSpec::Dicke(DickeSpec { n: n0 }), RegionMode::Sweep);
            c.trials = 1;
            vec![c]
        }
        "fig1b" => {
            let mut c = cfg("", AnsatzSpec::Dicke(DickeSpec { n: n0 }), RegionMode::FixedHalf);
            c.trials = 1;
            c.n_grid = Some(even_grid(2, n0));
            vec![c]
        }
        "fig1c" => vec![
            cfg("_sn", sn_phase, RegionMode::Sweep),
            cfg("_mlp", mlp(n0, 3, 2), RegionMode::Sweep),
            cfg("_tnqs", tnqs, RegionMode::Sweep),
        ],
        "fig1d" => {
            let mut a = cfg("_sn", sn_phase, RegionMode::FixedHalf);
            a.n_grid = Some(even_grid(4, n0));
            let mut b = cfg("_mlp", mlp(n0, 3, 2), RegionMode::FixedHalf);
            b.n_grid = Some(even_grid(4, n0));
            let mut c = cfg("_tnqs", tnqs, RegionMode::FixedHalf);
            c.n_grid = Some(even_grid(6, nt));
            vec![a, b, c]
        }
        "fig2a" => {
            let mut c = cfg("", AnsatzSpec::Cosnet(CosnetSpec::new(n0, 1)), RegionMode::RandomSubset);
            c.k_grid = Some((0..=6).map(|e| 1 << e).collect());
            c.regions_per_trial = 5;
            vec![c]
        }
        "fig2b" => {
            let mut c = cfg("", AnsatzSpec::Cosnet(CosnetSpec::new(n0, 1)), RegionMode::RandomSubset);
            c.k_grid = Some((0..=9).map(|e| 1 << e).collect());
            c.sizes = Some(vec![7.min(n0 / 2)]);
            c.regions_per_trial = 5;
            vec![c]
        }
        "supp_mlp_w2d3" | "supp_mlp_w5d2" | "supp_mlp_w5d5" => {
            let (w, d) = match name {
                "supp_mlp_w2d3" => (2, 3),
                "supp_mlp_w5d2" => (5, 2),
                _ => (5, 5),
            };
            let mut c = cfg("", mlp(n0, w, d), RegionMode::RandomContiguous);
            c.regions_per_trial = 5;
            vec![c]
        }
        "supp_mlp_width" => (1..=5)
            .map(|w| {
                let mut c = cfg(&format!("_w{w}"), mlp(n0, w, 2), RegionMode::RandomContiguous);
                c.regions_per_trial = 5;
                c
            })
            .collect(),
        "supp_mlp_n" => {
            let mut c = cfg("", mlp(n0, 5, 2), RegionMode::FixedHalf);
            c.n_grid = Some(even_grid(4, n0));
            vec![c]
        }
        other => {
            let parts: Vec<&str> = other.strip_prefix("supp_sn_").map(|s| s.split('_').collect()).unwrap_or_default();
            let [family, act] = parts[..] else {
                return Err(NqsError::Spec(format!("unknown preset {other:?}; known: {}", preset_names().join(", "))));
            };
            let mode = match family {
                "real" => "real_only",
                "phase" => "imag_only",
                "general" => "mixed",
                _ => return Err(NqsError::Spec(format!("unknown preset {other:?}"))),
            };
            if !["tanh", "sin", "relu", "gelu"].contains(&act) {
                return Err(NqsError::Spec(format!("unknown preset {other:?}")));
            }
            let mut spec = SnnqsSpec::new(n0, act, mode);
            spec.bias_std = 1.0;
            vec![cfg("", AnsatzSpec::Snnqs(spec), RegionMode::Sweep)]
        }
    };
    Ok(out)
}
