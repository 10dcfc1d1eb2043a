//! Tensor-product Chebyshev fits on `[-t̄_1, t̄_1] × .. × [-t̄_μ, t̄_μ]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::approx::certify::bound_multi;
use crate::error::{NqsError, NqsResult};
use crate::C64;

/// Largest μ accepted by tensor-product fitting.
pub const MAX_FIT_MU: usize = 4;
/// Largest number of quadrature points in one fit.
pub const MAX_QUADRATURE_POINTS: usize = 1 << 26;
/// Points on the dense error grid (total over all axes).
pub const DENSE_GRID_POINTS: usize = 10_000;
/// Chebyshev to monomial conversion is refused above this degree.
pub const MONOMIAL_MAX_DEGREE: usize = 30;

/// `T_0(x) .. T_d(x)`.
pub fn chebyshev_t(x: f64, d: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(d + 1);
    t.push(1.0);
    if d >= 1 {
        t.push(x);
    }
    for j in 2..=d {
        t.push(2.0 * x * t[j - 1] - t[j - 2]);
    }
    t
}

/// Chebyshev–Gauss nodes `cos(π(k+½)/N)`.
pub fn gauss_nodes(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / count as f64).cos())
        .collect()
}

/// Contract axis `axis` of a row-major tensor with `mat` (`rows × dims[axis]`).
fn contract_axis(data: &[C64], dims: &mut [usize], axis: usize, mat: &[f64], rows: usize) -> Vec<C64> {
    let cols = dims[axis];
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![C64::new(0.0, 0.0); outer * rows * inner];
    out.par_chunks_mut(rows * inner).enumerate().for_each(|(o, block)| {
        let src = &data[o * cols * inner..(o + 1) * cols * inner];
        for r in 0..rows {
            let dst = &mut block[r * inner..(r + 1) * inner];
            for c in 0..cols {
                let w = mat[r * cols + c];
                if w == 0.0 {
                    continue;
                }
                let s = &src[c * inner..(c + 1) * inner];
                for (x, y) in dst.iter_mut().zip(s) {
                    *x += w * y;
                }
            }
        }
    });
    dims[axis] = rows;
    out
}

/// Fit of a function of `μ` real variables with coefficients `c_{n⃗}` on the
/// rescaled arguments `x_j = t_j / t̄_j`. Index `n_1` varies slowest.
#[derive(Debug, Clone, Serialize)]
pub struct ChebyshevApprox {
    pub mu: usize,
    pub d: usize,
    pub tbar: Vec<f64>,
    pub coeffs: Vec<C64>,
    /// Certified sup-norm error, when ellipse parameters were supplied.
    pub error_bound: Option<f64>,
    /// Measured sup error on a dense grid.
    pub error_empirical: f64,
    /// `(a, M)` used for `error_bound`.
    pub ellipse: Option<(f64, f64)>,
}

impl ChebyshevApprox {
    pub fn coeff(&self, idx: &[usize]) -> C64 {
        let flat = idx.iter().fold(0, |acc, &i| acc * (self.d + 1) + i);
        self.coeffs[flat]
    }

    /// Value at rescaled arguments `x ∈ [-1, 1]^μ`.
    pub fn eval_scaled(&self, x: &[f64]) -> C64 {
        let w = self.d + 1;
        let mut cur = self.coeffs.clone();
        for j in (0..self.mu).rev() {
            let t = chebyshev_t(x[j], self.d);
            cur = cur.chunks(w).map(|c| c.iter().zip(&t).map(|(a, b)| a * b).sum()).collect();
        }
        cur[0]
    }

    pub fn eval(&self, t: &[f64]) -> C64 {
        let x: Vec<f64> = t.iter().zip(&self.tbar).map(|(t, s)| t / s).collect();
        self.eval_scaled(&x)
    }
}

fn check_fit_args(tbar: &[f64]) -> NqsResult<()> {
    let mu = tbar.len();
    if mu == 0 {
        return Err(NqsError::Contract("fit needs at least one variable".into()));
    }
    if mu > MAX_FIT_MU {
        return Err(NqsError::Capacity(format!("tensor fit supports mu <= {MAX_FIT_MU}, got {mu}")));
    }
    if tbar.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(NqsError::Contract(format!("domain half-widths must be positive, got {tbar:?}")));
    }
    Ok(())
}

fn grid_points(mu: usize, per_axis: &[f64]) -> impl IndexedParallelIterator<Item = Vec<f64>> + '_ {
    let s = per_axis.len();
    (0..s.pow(mu as u32)).into_par_iter().map(move |mut idx| {
        let mut x = vec![0.0; mu];
        for xj in x.iter_mut().rev() {
            *xj = per_axis[idx % s];
            idx /= s;
        }
        x
    })
}

/// Tensor-product Chebyshev–Gauss quadrature with `4(d+1)` nodes per axis.
///
/// `g` receives unscaled arguments `t`; `ellipse = (a, M)` bounds `|g|` on
/// the polyellipse `B(a)^μ` in rescaled variables.
pub fn cheb_fit_multi(
    g: &(dyn Fn(&[f64]) -> NqsResult<C64> + Sync),
    tbar: &[f64],
    d: usize,
    ellipse: Option<(f64, f64)>,
) -> NqsResult<ChebyshevApprox> {
    check_fit_args(tbar)?;
    let mu = tbar.len();
    let nodes = gauss_nodes(4 * (d + 1));
    let count = nodes.len();
    let total = (count as u128).pow(mu as u32);
    if total > MAX_QUADRATURE_POINTS as u128 {
        return Err(NqsError::Capacity(format!(
            "{total} quadrature points at mu = {mu}, d = {d} exceed {MAX_QUADRATURE_POINTS}"
        )));
    }
    let eval = |x: &[f64]| -> NqsResult<C64> {
        let t: Vec<f64> = x.iter().zip(tbar).map(|(x, s)| x * s).collect();
        let v = g(&t)?;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(NqsError::Numeric(format!("non-finite function value at t = {t:?}")));
        }
        Ok(v)
    };
    let values: Vec<C64> = grid_points(mu, &nodes).map(|x| eval(&x)).collect::<NqsResult<_>>()?;

    let rows = d + 1;
    let mut mat = vec![0.0; rows * count];
    for (k, &x) in nodes.iter().enumerate() {
        for (j, tj) in chebyshev_t(x, d).into_iter().enumerate() {
            let scale = if j == 0 { 1.0 } else { 2.0 };
            mat[j * count + k] = scale * tj / count as f64;
        }
    }
    let mut dims = vec![count; mu];
    let mut coeffs = values;
    for axis in 0..mu {
        coeffs = contract_axis(&coeffs, &mut dims, axis, &mat, rows);
    }

    let mut fit = ChebyshevApprox {
        mu,
        d,
        tbar: tbar.to_vec(),
        coeffs,
        error_bound: ellipse.map(|(a, m)| bound_multi(a, m, mu, d)),
        error_empirical: 0.0,
        ellipse,
    };
    let per_axis = ((DENSE_GRID_POINTS as f64).powf(1.0 / mu as f64).ceil() as usize).max(2);
    let grid: Vec<f64> = (0..per_axis).map(|i| -1.0 + 2.0 * i as f64 / (per_axis - 1) as f64).collect();
    let errs: Vec<f64> = grid_points(mu, &grid)
        .map(|x| eval(&x).map(|v| (v - fit.eval_scaled(&x)).norm()))
        .collect::<NqsResult<_>>()?;
    fit.error_empirical = errs.into_iter().fold(0.0, f64::max);
    Ok(fit)
}

/// One-variable fit; identical to [`cheb_fit_multi`] with `μ = 1`.
pub fn cheb_fit_1d(
    f: &(dyn Fn(f64) -> NqsResult<C64> + Sync),
    tbar: f64,
    d: usize,
    ellipse: Option<(f64, f64)>,
) -> NqsResult<ChebyshevApprox> {
    cheb_fit_multi(&|t: &[f64]| f(t[0]), &[tbar], d, ellipse)
}

/// Coefficients of `T_n` in the monomial basis: row `n`, column `m`.
pub fn chebyshev_to_monomial_table(d: usize) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> = vec![vec![0.0; d + 1]; d + 1];
    t[0][0] = 1.0;
    if d >= 1 {
        t[1][1] = 1.0;
    }
    for n in 2..=d {
        for m in 0..=d {
            let up = if m > 0 { 2.0 * t[n - 1][m - 1] } else { 0.0 };
            t[n][m] = up - t[n - 2][m];
        }
    }
    t
}

/// `P_d(x) = Σ α_{n⃗} x_1^{n_1} .. x_μ^{n_μ}` in the rescaled variables.
#[derive(Debug, Clone, Serialize)]
pub struct MonomialPoly {
    pub mu: usize,
    pub d: usize,
    pub alpha: Vec<C64>,
}

impl MonomialPoly {
    pub fn eval_scaled(&self, x: &[f64]) -> C64 {
        let w = self.d + 1;
        let mut cur = self.alpha.clone();
        for j in (0..self.mu).rev() {
            cur = cur
                .chunks(w)
                .map(|c| c.iter().rev().fold(C64::new(0.0, 0.0), |acc, a| acc * x[j] + a))
                .collect();
        }
        cur[0]
    }
}

/// Exact per-variable change of basis from Chebyshev to monomials.
pub fn monomial_expand(c: &ChebyshevApprox) -> NqsResult<MonomialPoly> {
    if c.d > MONOMIAL_MAX_DEGREE {
        return Err(NqsError::Degree(format!(
            "monomial conversion is ill-conditioned above degree {MONOMIAL_MAX_DEGREE} (got {}); \
             evaluate in the Chebyshev basis instead",
            c.d
        )));
    }
    let w = c.d + 1;
    let table = chebyshev_to_monomial_table(c.d);
    // mat[m][n] = coefficient of x^m in T_n
    let mut mat = vec![0.0; w * w];
    for (n, row) in table.iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            mat[m * w + n] = v;
        }
    }
    let mut dims = vec![w; c.mu];
    let mut alpha = c.coeffs.clone();
    for axis in 0..c.mu {
        alpha = contract_axis(&alpha, &mut dims, axis, &mat, w);
    }
    Ok(MonomialPoly { mu: c.mu, d: c.d, alpha })
}
