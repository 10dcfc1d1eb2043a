//! Acceptance checks. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits nonzero if any fails.

use std::time::{Duration, Instant};

use nqs_core::analytic::{dicke_entropy, dicke_entropy_asymptotic, dicke_entropy_gaussian, page_value};
use nqs_core::ansatz::{build_dicke, build_snnqs, AnsatzSpec, CosnetSpec, DickeSpec, SnnqsSpec};
use nqs_core::approx::{
    auxiliary_state, cheb_fit_1d, fit_reduced, full_bound_report, reduced_ellipse, BoundOptions, DegreeChoice,
};
use nqs_core::entanglement::{fannes_audenaert_bound, reduced_trace_distance, subregion_entropy, LogBase};
use nqs_core::experiments::{audit_csv, reduction_audit, run_sweep, AuditRow, ExperimentConfig, RegionMode};
use nqs_core::graph::{feature_reduce, ComputationGraph};
use nqs_core::rng::RngStream;
use nqs_core::spin::Subregion;
use nqs_core::statevector::{materialize, two_norm_distance, Statevector};
use nqs_core::{NqsResult, C64};

const DICKE_TOL: f64 = 1e-10;
const DICKE_SIZES: [usize; 4] = [4, 8, 12, 14];
const ASYMPTOTIC_N: usize = 1000;
const ASYMPTOTIC_TOL: f64 = 0.01;
const AUDIT_COUNT: usize = 500;
const AUDIT_MAX_N: usize = 12;
const AUDIT_MAX_K: usize = 8;
const AUDIT_REL_TOL: f64 = 1e-12;
const SN_N: usize = 10;
const SN_DEGREES: [usize; 5] = [2, 3, 4, 5, 6];
const RUNGE_SLOPE_REL_TOL: f64 = 0.05;
const PRODUCT_N: usize = 16;
const PRODUCT_TOL: f64 = 1e-10;
const LOG_N: usize = 16;
const LOG_TRIALS: usize = 20;
const LOG_SIGMAS: f64 = 2.0;
const LOG_CONCAVITY_FACTOR: f64 = 1.2;
const COSNET_N: usize = 12;
const COSNET_M: usize = 4;
const COSNET_TRIALS: usize = 20;
const COSNET_REGIONS: usize = 5;
const COSNET_K_WIDE: usize = 512;
const COSNET_K_NARROW: usize = 2;
const COSNET_PAGE_REL_TOL: f64 = 0.15;
const COSNET_NARROW_FRACTION: f64 = 0.6;
const FA_PAIRS: usize = 200;
const FA_N: usize = 8;
const FA_MAX_SIZE: usize = 4;
const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> NqsResult<Outcome>) -> bool {
    let t0 = Instant::now();
    let res = f();
    let dt = t0.elapsed();
    let (pass, detail) = match res {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = limit.is_none_or(|l| dt <= l);
    let ok = pass && in_time;
    let budget = limit.map(|l| format!(" / {:.0}s", l.as_secs_f64())).unwrap_or_default();
    println!(
        "criterion {id}: {} {name}: {detail} [{:.2}s{budget}]",
        if ok { "PASS" } else { "FAIL" },
        dt.as_secs_f64()
    );
    ok
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn sn_sin(n: usize) -> NqsResult<ComputationGraph> {
    build_snnqs(&SnnqsSpec::new(n, "sin", "real_only"), &mut RngStream::derived(SEED, &[4]).rng())
}

fn all_masks(n: usize) -> impl Iterator<Item = Subregion> {
    (1..(1u64 << n) - 1).map(move |m| Subregion::new(m, n).unwrap())
}

fn prefixes(n: usize) -> impl Iterator<Item = Subregion> {
    (1..n).map(move |m| Subregion::contiguous(0, m, n).unwrap())
}

fn criterion_1() -> NqsResult<Outcome> {
    let mut worst = 0.0f64;
    for n in DICKE_SIZES {
        let psi = materialize(&build_dicke(&DickeSpec { n })?)?;
        for m in 1..n {
            let s = subregion_entropy(&psi, &Subregion::contiguous(0, m, n)?)?.entropy;
            worst = worst.max((s - dicke_entropy(n, m)?).abs());
        }
    }
    Ok(Outcome { pass: worst <= DICKE_TOL, detail: format!("max |S - S_exact| = {worst:.3e} (tol {DICKE_TOL:e})") })
}

fn criterion_2() -> NqsResult<Outcome> {
    let mut pass = true;
    let mut parts = vec![];
    for p in [0.25, 0.5] {
        let m = (p * ASYMPTOTIC_N as f64) as usize;
        let exact = dicke_entropy(ASYMPTOTIC_N, m)?;
        let approx = dicke_entropy_asymptotic(ASYMPTOTIC_N, p)?;
        let gap = (exact - approx).abs();
        pass &= gap < ASYMPTOTIC_TOL;
        let finite = (exact - dicke_entropy_gaussian(ASYMPTOTIC_N, p)?).abs();
        parts.push(format!(
            "p={p}: exact {exact:.6}, asymptotic {approx:.6}, gap {gap:.4} (finite-population variance gap {finite:.1e})"
        ));
    }
    Ok(Outcome { pass, detail: format!("{} (tol {ASYMPTOTIC_TOL})", parts.join("; ")) })
}

fn audit() -> NqsResult<Vec<AuditRow>> {
    reduction_audit(AUDIT_COUNT, AUDIT_MAX_N, AUDIT_MAX_K, SEED)
}

fn criterion_3(rows: &[AuditRow]) -> NqsResult<Outcome> {
    let mu_ok = rows.iter().all(|r| r.mu <= r.k + 1);
    let worst = rows.iter().map(|r| r.max_rel_diff).fold(0.0, f64::max);
    let normwise = rows.iter().map(|r| r.max_norm_diff).fold(0.0, f64::max);
    let overflow: usize = rows.iter().map(|r| r.overflow).sum();
    let pass = rows.len() == AUDIT_COUNT && mu_ok && worst <= AUDIT_REL_TOL;
    Ok(Outcome {
        pass,
        detail: format!(
            "{} DAGs, mu <= k+1: {mu_ok}, max per-config rel diff {worst:.3e} (tol {AUDIT_REL_TOL:e}), max diff relative to max |psi| {normwise:.3e}, configs overflowing on both paths {overflow}",
            rows.len()
        ),
    })
}

fn criterion_4() -> NqsResult<Outcome> {
    let g = sn_sin(SN_N)?;
    let r = feature_reduce(&g);
    let tbar = r.tbar();
    let residual = |t: f64| r.residual.eval_inputs(&[C64::new(t, 0.0)]);
    let mut within = true;
    let mut max_rank = 0;
    let mut rank_above_linear = false;
    let mut parts = vec![];
    for d in SN_DEGREES {
        let fit = cheb_fit_1d(&residual, tbar[0], d, None)?;
        let aux = auxiliary_state(&r, &fit)?;
        let cap = (d + 1) * (d + 2) / 2;
        let mut top = 0;
        for a in all_masks(SN_N) {
            let rank = subregion_entropy(&aux, &a)?.schmidt_rank;
            within &= rank <= cap;
            rank_above_linear |= rank > d + 1;
            top = top.max(rank);
        }
        max_rank = max_rank.max(top);
        parts.push(format!("d={d}: max rank {top} (cap {cap}, d+1 = {})", d + 1));
    }
    Ok(Outcome {
        pass: r.mu() == 1 && within && rank_above_linear,
        detail: format!(
            "mu={}, {}; all within cap: {within}; some rank > d+1: {rank_above_linear}",
            r.mu(),
            parts.join("; ")
        ),
    })
}

fn criterion_5() -> NqsResult<Outcome> {
    let g = sn_sin(SN_N)?;
    let r = feature_reduce(&g);
    let psi = materialize(&g)?;
    let scale = (SN_N as f64 / 4.0).exp2();
    let mut norm_ok = true;
    let mut fa_ok = true;
    let mut certified = true;
    let mut parts = vec![];
    for d in SN_DEGREES {
        let ellipse = reduced_ellipse(&r, d);
        certified &= ellipse.is_some();
        let fit = fit_reduced(&r, d, ellipse)?;
        let Some(abs_bound) = fit.error_bound else {
            parts.push(format!("d={d}: not certified"));
            continue;
        };
        let eps = abs_bound / psi.norm_was;
        let aux = auxiliary_state(&r, &fit)?;
        let delta = two_norm_distance(&psi, &aux)?;
        let bound = 2.0 * eps.sqrt() * scale;
        norm_ok &= delta <= bound;
        let mut worst_margin = f64::INFINITY;
        for a in all_masks(SN_N) {
            let t = reduced_trace_distance(&psi, &aux, &a)?;
            let ds = (subregion_entropy(&psi, &a)?.entropy - subregion_entropy(&aux, &a)?.entropy).abs();
            let fa = fannes_audenaert_bound(t, a.size(), LogBase::E)?;
            fa_ok &= ds <= fa;
            worst_margin = worst_margin.min(fa - ds);
        }
        parts.push(format!("d={d}: eps {eps:.2e}, delta {delta:.3e} <= {bound:.3e}, min FA margin {worst_margin:.2e}"));
    }
    Ok(Outcome { pass: certified && norm_ok && fa_ok, detail: parts.join("; ") })
}

fn criterion_6() -> NqsResult<Outcome> {
    let f = |x: f64| Ok(C64::new(1.0 / (1.0 + 4.0 * x * x), 0.0));
    let (mut xs, mut ys) = (vec![], vec![]);
    for d in 4..=40 {
        let fit = cheb_fit_1d(&f, 1.0, d, None)?;
        xs.push(d as f64);
        ys.push(fit.error_empirical.ln());
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let expected = -((1.0 + 5f64.sqrt()) / 2.0).ln();
    let rel = (slope / expected - 1.0).abs();
    Ok(Outcome {
        pass: rel <= RUNGE_SLOPE_REL_TOL,
        detail: format!("slope {slope:.5} vs {expected:.5}, rel err {rel:.4} (tol {RUNGE_SLOPE_REL_TOL})"),
    })
}

fn criterion_7() -> NqsResult<Outcome> {
    let spec = SnnqsSpec::new(PRODUCT_N, "identity", "real_only");
    let psi = materialize(&build_snnqs(&spec, &mut RngStream::derived(SEED, &[7]).rng())?)?;
    let mut worst = 0.0f64;
    for a in prefixes(PRODUCT_N) {
        worst = worst.max(subregion_entropy(&psi, &a)?.entropy);
    }
    Ok(Outcome { pass: worst < PRODUCT_TOL, detail: format!("max S over 15 cuts {worst:.3e} (tol {PRODUCT_TOL:e})") })
}

fn log_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        "acceptance_log",
        AnsatzSpec::Snnqs(SnnqsSpec::new(LOG_N, "tanh", "imag_only")),
        RegionMode::Sweep,
    );
    c.trials = LOG_TRIALS;
    c.sizes = Some((1..=LOG_N / 2).collect());
    c.seed = SEED;
    c
}

fn criterion_8(cfg: &ExperimentConfig) -> NqsResult<(Outcome, String)> {
    let res = run_sweep(cfg)?;
    let at = |m: usize| res.aggregate(LOG_N, cfg.ansatz.hidden(), m).expect("aggregate");
    let mut monotone = true;
    let mut means = vec![];
    for m in 1..=LOG_N / 2 {
        means.push(format!("{:.3}", at(m).mean));
        if m < LOG_N / 2 {
            let (a, b) = (at(m), at(m + 1));
            monotone &= b.mean - a.mean >= -LOG_SIGMAS * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        }
    }
    let (s2, s4, s8) = (at(LOG_N / 8).mean, at(LOG_N / 4).mean, at(LOG_N / 2).mean);
    let (late, early) = (s8 - s4, s4 - s2);
    let concave = late <= LOG_CONCAVITY_FACTOR * early;
    let outcome = Outcome {
        pass: monotone && concave && res.degenerate.is_empty(),
        detail: format!(
            "mean S(1..{}) = [{}]; monotone at {LOG_SIGMAS} sigma: {monotone}; S(n/2)-S(n/4) = {late:.4} <= {LOG_CONCAVITY_FACTOR} x {early:.4}: {concave}; degenerate {}",
            LOG_N / 2,
            means.join(", "),
            res.degenerate.len()
        ),
    };
    Ok((outcome, res.to_csv()))
}

fn cosnet_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        "acceptance_cosnet",
        AnsatzSpec::Cosnet(CosnetSpec::new(COSNET_N, COSNET_K_NARROW)),
        RegionMode::RandomSubset,
    );
    c.k_grid = Some(vec![COSNET_K_NARROW, COSNET_K_WIDE]);
    c.sizes = Some(vec![COSNET_M]);
    c.trials = COSNET_TRIALS;
    c.regions_per_trial = COSNET_REGIONS;
    c.seed = SEED;
    c
}

fn criterion_9(cfg: &ExperimentConfig) -> NqsResult<(Outcome, String)> {
    let res = run_sweep(cfg)?;
    let page = page_value(COSNET_M, COSNET_N)?;
    let wide = res.aggregate(COSNET_N, COSNET_K_WIDE, COSNET_M).expect("aggregate").mean;
    let narrow = res.aggregate(COSNET_N, COSNET_K_NARROW, COSNET_M).expect("aggregate").mean;
    let wide_rel = (wide / page - 1.0).abs();
    let wide_ok = wide_rel <= COSNET_PAGE_REL_TOL;
    let narrow_ok = narrow < COSNET_NARROW_FRACTION * page;
    let outcome = Outcome {
        pass: wide_ok && narrow_ok,
        detail: format!(
            "Page {page:.4}; k={COSNET_K_WIDE}: mean {wide:.4} (rel gap {wide_rel:.3}, tol {COSNET_PAGE_REL_TOL}): {wide_ok}; k={COSNET_K_NARROW}: mean {narrow:.4} < {:.4}: {narrow_ok}",
            COSNET_NARROW_FRACTION * page
        ),
    };
    Ok((outcome, res.to_csv()))
}

fn criterion_10() -> NqsResult<Outcome> {
    let g = sn_sin(SN_N)?;
    let mut runs = 0;
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for d in SN_DEGREES {
        for a in prefixes(SN_N) {
            let rep = full_bound_report(&g, &a, &BoundOptions { degree: DegreeChoice::Fixed(d), rate: None })?;
            if !rep.certified {
                continue;
            }
            runs += 1;
            let margin = rep.entropy_bound_final - rep.measured_entropy;
            min_margin = min_margin.min(margin);
            if margin < 0.0 {
                violations += 1;
            }
        }
    }
    Ok(Outcome {
        pass: runs == SN_DEGREES.len() * (SN_N - 1) && violations == 0,
        detail: format!("{runs} certified runs, {violations} violations, min margin {min_margin:.4} nats"),
    })
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

fn criterion_11(audit_bytes: &str, log_bytes: &str, cosnet_bytes: &str) -> NqsResult<Outcome> {
    let mut parts = vec![];
    let mut pass = true;
    for threads in [1, 3] {
        let a = in_pool(threads, audit).map(|r| audit_csv(&r))?;
        let l = in_pool(threads, || run_sweep(&log_config()).map(|r| r.to_csv()))?;
        let c = in_pool(threads, || run_sweep(&cosnet_config()).map(|r| r.to_csv()))?;
        let same = [a == audit_bytes, l == log_bytes, c == cosnet_bytes];
        pass &= same.iter().all(|&x| x);
        parts.push(format!("{threads} thread(s): audit {}, log {}, cosnet {}", same[0], same[1], same[2]));
    }
    Ok(Outcome {
        pass,
        detail: format!("identical CSV bytes vs {} threads: {}", rayon::current_num_threads(), parts.join("; ")),
    })
}

fn random_state(rng: &mut nqs_core::rng::Rng, n: usize) -> NqsResult<Vec<C64>> {
    Ok((0..1usize << n).map(|_| C64::new(rng.normal(1.0), rng.normal(1.0))).collect())
}

fn criterion_12() -> NqsResult<Outcome> {
    let mut checks = 0;
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    let regions: Vec<Subregion> = all_masks(FA_N).filter(|a| a.size() <= FA_MAX_SIZE).collect();
    for pair in 0..FA_PAIRS {
        let mut rng = RngStream::derived(SEED, &[12, pair as u64]).rng();
        let base = random_state(&mut rng, FA_N)?;
        let other = random_state(&mut rng, FA_N)?;
        // Half the pairs are independent, half are perturbations at log-uniform scales.
        let eta = if pair % 2 == 0 { f64::INFINITY } else { 10f64.powf(-rng.uniform(0.0, 5.0)) };
        let phi: Vec<C64> = if eta.is_infinite() {
            other
        } else {
            base.iter().zip(&other).map(|(b, o)| b + o * eta).collect()
        };
        let psi = Statevector::from_amplitudes(FA_N, base)?;
        let phi = Statevector::from_amplitudes(FA_N, phi)?;
        for a in &regions {
            let t = reduced_trace_distance(&psi, &phi, a)?;
            let ds = (subregion_entropy(&psi, a)?.entropy - subregion_entropy(&phi, a)?.entropy).abs();
            let margin = fannes_audenaert_bound(t, a.size(), LogBase::E)? - ds;
            checks += 1;
            min_margin = min_margin.min(margin);
            if margin < 0.0 {
                violations += 1;
            }
        }
    }
    Ok(Outcome {
        pass: violations == 0,
        detail: format!("{checks} (pair, region) checks, {violations} violations, min margin {min_margin:.3e}"),
    })
}

fn main() {
    let mut results = vec![];
    results.push(report(1, "dicke exactness", secs(30), criterion_1));
    results.push(report(2, "dicke asymptotics", secs(1), criterion_2));

    let mut audit_bytes = String::new();
    results.push(report(3, "feature reduction soundness", secs(300), || {
        let rows = audit()?;
        audit_bytes = audit_csv(&rows);
        criterion_3(&rows)
    }));
    results.push(report(4, "rank bound", secs(60), criterion_4));
    results.push(report(5, "approximation chain", secs(120), criterion_5));
    results.push(report(6, "chebyshev convergence", secs(10), criterion_6));
    results.push(report(7, "product state", secs(60), criterion_7));

    let mut log_bytes = String::new();
    results.push(report(8, "log scaling", secs(600), || {
        let (o, csv) = criterion_8(&log_config())?;
        log_bytes = csv;
        Ok(o)
    }));
    let mut cosnet_bytes = String::new();
    results.push(report(9, "cosnet page approach", secs(900), || {
        let (o, csv) = criterion_9(&cosnet_config())?;
        cosnet_bytes = csv;
        Ok(o)
    }));
    results.push(report(10, "bound dominance", None, criterion_10));
    results.push(report(11, "determinism", None, || criterion_11(&audit_bytes, &log_bytes, &cosnet_bytes)));
    results.push(report(12, "fannes-audenaert validity", secs(120), criterion_12));

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &ok)| !ok).map(|(i, _)| i + 1).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
