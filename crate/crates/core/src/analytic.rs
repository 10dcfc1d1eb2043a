//! Closed-form reference values: Dicke spectra and the Page average.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::error::{NqsError, NqsResult};

/// Largest `n` handled in exact integer arithmetic.
pub const EXACT_DICKE_MAX_N: usize = 64;

/// Reduced spectrum of the `n`-spin Dicke state on `m` spins.
///
/// `eigenvalues[j]` belongs to `indices[j]`, the number of up spins inside
/// the region, over the support `max(0, m - n/2) ..= min(m, n/2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DickeSpectrum {
    pub n: usize,
    pub m: usize,
    pub indices: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    /// Exact numerators over `C(n, n/2)` when `n <= 64`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numerators: Option<Vec<u128>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denominator: Option<u128>,
}

impl DickeSpectrum {
    pub fn sorted_descending(&self) -> Vec<f64> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn entropy(&self) -> f64 {
        -self.eigenvalues.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
    }
}

/// Exact `C(n, k)` for `n <= 64`.
pub fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

fn check_dicke(n: usize, m: usize) -> NqsResult<()> {
    if n % 2 == 1 || n == 0 {
        return Err(NqsError::Domain(format!("Dicke state needs even n >= 2, got {n}")));
    }
    if m == 0 || m >= n {
        return Err(NqsError::Contract(format!("region size {m} outside 1..={}", n - 1)));
    }
    Ok(())
}

pub fn dicke_spectrum(n: usize, m: usize) -> NqsResult<DickeSpectrum> {
    check_dicke(n, m)?;
    let h = n / 2;
    let indices: Vec<usize> = (m.saturating_sub(h)..=m.min(h)).collect();
    if n <= EXACT_DICKE_MAX_N {
        let den = binomial_u128(n, h);
        let nums: Vec<u128> = indices.iter().map(|&i| binomial_u128(n - m, h - i) * binomial_u128(m, i)).collect();
        let total: u128 = nums.iter().sum();
        if total != den {
            return Err(NqsError::Consistency(format!("Dicke spectrum sums to {total}/{den}")));
        }
        let eigenvalues = nums.iter().map(|&x| x as f64 / den as f64).collect();
        return Ok(DickeSpectrum { n, m, indices, eigenvalues, numerators: Some(nums), denominator: Some(den) });
    }
    let ln_den = ln_binomial(n, h);
    let mut eigenvalues: Vec<f64> = indices
        .iter()
        .map(|&i| (ln_binomial(n - m, h - i) + ln_binomial(m, i) - ln_den).exp())
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(NqsError::Consistency(format!("Dicke spectrum sums to {total}")));
    }
    for x in eigenvalues.iter_mut() {
        *x /= total;
    }
    Ok(DickeSpectrum { n, m, indices, eigenvalues, numerators: None, denominator: None })
}

/// Entanglement entropy (nats) of `m` spins of the `n`-spin Dicke state.
pub fn dicke_entropy(n: usize, m: usize) -> NqsResult<f64> {
    Ok(dicke_spectrum(n, m)?.entropy())
}

/// `½ ln(2πe (n/2) p(1-p))` with `p = m/n`.
pub fn dicke_entropy_asymptotic(n: usize, p: f64) -> NqsResult<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NqsError::Domain(format!("p = {p} outside (0, 1)")));
    }
    Ok(0.5 * (2.0 * PI * E * (n as f64 / 2.0) * p * (1.0 - p)).ln())
}

/// Gaussian entropy with the exact hypergeometric variance
/// `n² p(1-p) / (4(n-1))` of the in-region up-spin count.
pub fn dicke_entropy_gaussian(n: usize, p: f64) -> NqsResult<f64> {
    if !(p > 0.0 && p < 1.0) || n < 2 {
        return Err(NqsError::Domain(format!("p = {p} outside (0, 1) or n < 2")));
    }
    let nf = n as f64;
    let var = nf * nf * p * (1.0 - p) / (4.0 * (nf - 1.0));
    Ok(0.5 * (2.0 * PI * E * var).ln())
}

const EULER_SWITCH: u64 = 1 << 20;

/// `H(x) - H(y)` for `x >= y >= 0`, harmonic numbers.
fn harmonic_difference(x: u64, y: u64) -> f64 {
    debug_assert!(x >= y);
    let mid = x.min(y.max(EULER_SWITCH));
    // Exact terms, smallest first.
    let mut exact = 0.0;
    let mut j = mid;
    while j > y {
        exact += 1.0 / j as f64;
        j -= 1;
    }
    let tail = if x > mid {
        let (a, b) = (x as f64, mid as f64);
        let corr = |t: f64| 1.0 / (2.0 * t) - 1.0 / (12.0 * t * t) + 1.0 / (120.0 * t.powi(4));
        (a / b).ln() + corr(a) - corr(b)
    } else {
        0.0
    };
    tail + exact
}

/// Mean entanglement entropy (nats) of `m` spins of a Haar-random `n`-spin
/// state; sizes above `n/2` use the complementary region.
pub fn page_value(m: usize, n: usize) -> NqsResult<f64> {
    if m == 0 || m >= n || n > 62 {
        return Err(NqsError::Contract(format!("Page value needs 1 <= m < n <= 62, got m = {m}, n = {n}")));
    }
    let m = m.min(n - m);
    let big = 1u64 << n;
    let small = 1u64 << (n - m);
    Ok(harmonic_difference(big, small) - ((1u64 << m) - 1) as f64 / (2.0 * small as f64))
}
