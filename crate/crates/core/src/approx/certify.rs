//! Bernstein-ellipse sup estimates.

use std::f64::consts::PI;

use crate::C64;

/// Boundary samples per ellipse.
pub const ELLIPSE_SAMPLES: usize = 10_000;
/// Safety factor applied to sampled maxima.
pub const SUP_INFLATION: f64 = 1.1;

/// Point `cosh(a + iθ)` on the boundary of `B(a)`.
pub fn ellipse_point(a: f64, theta: f64) -> C64 {
    C64::new(a.cosh() * theta.cos(), a.sinh() * theta.sin())
}

/// Sampled `max |f|` on the boundary of `B(a)`; `None` if any sample fails.
pub fn ellipse_sup(f: &dyn Fn(C64) -> Option<C64>, a: f64, samples: usize) -> Option<f64> {
    let mut max = 0.0f64;
    for j in 0..samples {
        let theta = 2.0 * PI * (j as f64 + 0.5) / samples as f64;
        let v = f(ellipse_point(a, theta))?;
        let m = v.norm();
        if !m.is_finite() {
            return None;
        }
        max = max.max(m);
    }
    Some(max)
}

/// One-variable Chebyshev truncation bound `2Cρ^{-d}/(ρ-1)` with `ρ = e^a`.
pub fn bound_1d(a: f64, c: f64, d: usize) -> f64 {
    let rho = a.exp();
    2.0 * c * rho.powi(-(d as i32)) / (rho - 1.0)
}

/// Ellipse parameters `(a, C)` minimizing [`bound_1d`] at degree `d` over a
/// logarithmic grid of `a` up to `a_max`, with `C` the inflated sampled sup.
pub fn optimize_ellipse(f: &dyn Fn(C64) -> Option<C64>, a_max: f64, d: usize) -> Option<(f64, f64)> {
    let hi = a_max.min(4.0);
    let lo = 0.02f64.min(hi);
    let steps = 40;
    let mut best: Option<(f64, f64, f64)> = None;
    for s in 0..=steps {
        let a = if hi == lo { hi } else { lo * (hi / lo).powf(s as f64 / steps as f64) };
        if a <= 0.0 {
            continue;
        }
        let Some(sup) = ellipse_sup(f, a, ELLIPSE_SAMPLES) else { continue };
        let c = SUP_INFLATION * sup;
        let b = bound_1d(a, c, d);
        if b.is_finite() && best.is_none_or(|(_, _, bb)| b < bb) {
            best = Some((a, c, b));
        }
        if hi == lo {
            break;
        }
    }
    best.map(|(a, c, _)| (a, c))
}

/// Samples per axis so that the product grid has about [`ELLIPSE_SAMPLES`]
/// points.
pub fn samples_per_axis(mu: usize) -> usize {
    (ELLIPSE_SAMPLES as f64).powf(1.0 / mu.max(1) as f64).ceil() as usize
}

/// Sampled `max |g|` over the distinguished boundary of the polyellipse
/// `B(a)^μ` (product of boundary ellipses).
pub fn polyellipse_sup(g: &(dyn Fn(&[C64]) -> Option<C64> + Sync), mu: usize, a: f64) -> Option<f64> {
    use rayon::prelude::*;
    if mu == 1 {
        return ellipse_sup(&|z| g(&[z]), a, ELLIPSE_SAMPLES);
    }
    let s = samples_per_axis(mu);
    let pts: Vec<C64> = (0..s).map(|j| ellipse_point(a, 2.0 * PI * (j as f64 + 0.5) / s as f64)).collect();
    let total = s.pow(mu as u32);
    let maxima: Vec<Option<f64>> = (0..total)
        .into_par_iter()
        .with_min_len(256)
        .map(|mut idx| {
            let mut z = vec![C64::new(0.0, 0.0); mu];
            for zj in z.iter_mut().rev() {
                *zj = pts[idx % s];
                idx /= s;
            }
            g(&z).map(|v| v.norm()).filter(|m| m.is_finite())
        })
        .collect();
    maxima.into_iter().try_fold(0.0f64, |m, x| x.map(|x| m.max(x)))
}

/// Multivariable truncation bound `Mμρ^{-1}(2ρ/(ρ-1))^μ ρ^{-d}`; equals
/// [`bound_1d`] at `μ = 1`.
pub fn bound_multi(a: f64, m: f64, mu: usize, d: usize) -> f64 {
    let rho = a.exp();
    m * mu as f64 / rho * (2.0 * rho / (rho - 1.0)).powi(mu as i32) * rho.powi(-(d as i32))
}

/// Ellipse parameters `(a, M)` minimizing [`bound_multi`] at degree `d`.
pub fn optimize_polyellipse(
    g: &(dyn Fn(&[C64]) -> Option<C64> + Sync),
    mu: usize,
    a_max: f64,
    d: usize,
) -> Option<(f64, f64)> {
    let hi = a_max.min(4.0);
    if !(hi > 0.0) {
        return None;
    }
    let lo = 0.02f64.min(hi);
    let steps = if mu == 1 { 40 } else { 16 };
    let mut best: Option<(f64, f64, f64)> = None;
    for s in 0..=steps {
        let a = if hi == lo { hi } else { lo * (hi / lo).powf(s as f64 / steps as f64) };
        let Some(sup) = polyellipse_sup(g, mu, a) else { continue };
        let m = SUP_INFLATION * sup;
        let b = bound_multi(a, m, mu, d);
        if b.is_finite() && best.is_none_or(|(_, _, bb)| b < bb) {
            best = Some((a, m, b));
        }
        if hi == lo {
            break;
        }
    }
    best.map(|(a, m, _)| (a, m))
}
