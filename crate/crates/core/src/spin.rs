//! Spin configurations, subregions and affine features.
//!
//! Spin `i` of a configuration is `+1` when bit `i` of `bits` is set and `-1`
//! otherwise; the basis index of a configuration is `bits` itself.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{NqsError, NqsResult};

/// Default largest spin count accepted by dense routines.
pub const DEFAULT_MAX_N: usize = 24;
/// Largest spin count reachable through [`set_max_n`].
pub const HARD_MAX_N: usize = 26;

static MAX_N: AtomicUsize = AtomicUsize::new(DEFAULT_MAX_N);

/// Current spin cap for dense enumeration.
pub fn max_n() -> usize {
    MAX_N.load(Ordering::Relaxed)
}

/// Raise or lower the spin cap; values above [`HARD_MAX_N`] are rejected.
pub fn set_max_n(n: usize) -> NqsResult<()> {
    if n == 0 || n > HARD_MAX_N {
        return Err(NqsError::Capacity(format!(
            "spin cap {n} outside 1..={HARD_MAX_N}"
        )));
    }
    MAX_N.store(n, Ordering::Relaxed);
    Ok(())
}

/// Fails unless `1 <= n <= max_n()`.
pub fn check_n(n: usize) -> NqsResult<()> {
    let cap = max_n();
    if n == 0 || n > cap {
        return Err(NqsError::Capacity(format!(
            "n = {n} outside supported range 1..={cap}"
        )));
    }
    Ok(())
}

#[inline]
pub fn spin_of(bits: u64, i: usize) -> f64 {
    if (bits >> i) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    pub bits: u64,
    pub n: usize,
}

impl SpinConfig {
    pub fn new(bits: u64, n: usize) -> NqsResult<Self> {
        if n > 63 || bits >> n != 0 {
            return Err(NqsError::Contract(format!(
                "bits {bits:#x} do not fit in {n} spins"
            )));
        }
        Ok(Self { bits, n })
    }

    #[inline]
    pub fn spin(&self, i: usize) -> f64 {
        spin_of(self.bits, i)
    }

    pub fn spins(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.spin(i)).collect()
    }

    /// Build from a ±1 vector; any nonnegative entry counts as `+1`.
    pub fn from_spins(s: &[f64]) -> Self {
        let bits = s
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &v)| if v >= 0.0 { acc | (1 << i) } else { acc });
        Self { bits, n: s.len() }
    }
}

/// All `2^n` configurations in ascending `bits` order.
pub fn enumerate_configs(n: usize) -> NqsResult<impl Iterator<Item = SpinConfig>> {
    check_n(n)?;
    Ok(enumerate_range(n, 0..1u64 << n))
}

/// Configurations in a sub-range of indices, for disjoint parallel partitions.
pub fn enumerate_range(
    n: usize,
    range: std::ops::Range<u64>,
) -> impl Iterator<Item = SpinConfig> {
    range.map(move |bits| SpinConfig { bits, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Subregion {
    pub mask: u64,
    pub n: usize,
}

impl Subregion {
    pub fn new(mask: u64, n: usize) -> NqsResult<Self> {
        if n == 0 || n > 63 || mask >> n != 0 {
            return Err(NqsError::Contract(format!(
                "mask {mask:#x} does not fit in {n} spins"
            )));
        }
        Ok(Self { mask, n })
    }

    pub fn from_indices(indices: &[usize], n: usize) -> NqsResult<Self> {
        let mut mask = 0u64;
        for &i in indices {
            if i >= n {
                return Err(NqsError::Contract(format!("spin {i} out of range for n = {n}")));
            }
            mask |= 1 << i;
        }
        Self::new(mask, n)
    }

    /// Contiguous block `{start, .., start + len - 1}` with periodic wrap.
    pub fn contiguous(start: usize, len: usize, n: usize) -> NqsResult<Self> {
        let idx: Vec<usize> = (0..len).map(|j| (start + j) % n).collect();
        Self::from_indices(&idx, n)
    }

    /// Parse a hexadecimal mask with or without a `0x` prefix.
    pub fn from_hex(s: &str, n: usize) -> NqsResult<Self> {
        let t = s.trim();
        let t = t
            .strip_prefix("0x")
            .or_else(|| t.strip_prefix("0X"))
            .unwrap_or(t);
        let mask = u64::from_str_radix(t, 16)
            .map_err(|e| NqsError::Contract(format!("bad region mask {s:?}: {e}")))?;
        Self::new(mask, n)
    }

    /// Zero-padded lowercase hexadecimal, `ceil(n/4)` digits.
    pub fn to_hex(&self) -> String {
        let width = self.n.div_ceil(4).max(1);
        format!("{:0width$x}", self.mask, width = width)
    }

    pub fn size(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn complement(&self) -> Self {
        let full = if self.n == 64 { u64::MAX } else { (1u64 << self.n) - 1 };
        Self { mask: !self.mask & full, n: self.n }
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.mask >> i) & 1 == 1
    }

    /// Member indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(i)).collect()
    }
}

/// `t(s) = Σ wᵢ sᵢ + b` over `n = weights.len()` spins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFeature {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl AffineFeature {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Bias first, then weights in ascending index order.
    pub fn evaluate_bits(&self, bits: u64) -> f64 {
        let mut acc = self.bias;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w * spin_of(bits, i);
        }
        acc
    }

    pub fn evaluate(&self, s: &SpinConfig) -> f64 {
        self.evaluate_bits(s.bits)
    }

    /// `Σ|wᵢ| + |b|`, attained at `sᵢ = sign(wᵢ)` when `b >= 0`.
    pub fn supnorm(&self) -> f64 {
        feature_supnorm(self)
    }
}

pub fn feature_supnorm(f: &AffineFeature) -> f64 {
    f.weights.iter().map(|w| w.abs()).sum::<f64>() + f.bias.abs()
}

/// Feature split across a bipartition; both parts carry half the bias.
///
/// `x_part` has one weight per member of `A` in ascending position order and
/// is evaluated on the compressed bits `u` of `A`; `y_part` likewise on `Ā`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFeature {
    pub x_part: AffineFeature,
    pub y_part: AffineFeature,
    pub region: Subregion,
}

impl SplitFeature {
    pub fn x(&self, u: u64) -> f64 {
        self.x_part.evaluate_bits(u)
    }

    pub fn y(&self, v: u64) -> f64 {
        self.y_part.evaluate_bits(v)
    }

    /// Evaluate `x(u) + y(v)` on a full configuration.
    pub fn evaluate(&self, s: &SpinConfig) -> f64 {
        let (u, v) = compress_bits(s.bits, &self.region);
        self.x(u) + self.y(v)
    }
}

pub fn split_feature(f: &AffineFeature, a: &Subregion) -> NqsResult<SplitFeature> {
    if f.n() != a.n {
        return Err(NqsError::Contract(format!(
            "feature over {} spins split by region over {} spins",
            f.n(),
            a.n
        )));
    }
    let pick = |r: &Subregion| AffineFeature {
        weights: r.indices().iter().map(|&i| f.weights[i]).collect(),
        bias: f.bias / 2.0,
    };
    Ok(SplitFeature {
        x_part: pick(a),
        y_part: pick(&a.complement()),
        region: *a,
    })
}

/// Reference value of `f(s)` in the split summation order: the `A` part
/// (half bias, ascending indices) plus the `Ā` part computed the same way.
pub fn evaluate_in_split_order(f: &AffineFeature, a: &Subregion, bits: u64) -> f64 {
    let part = |r: &Subregion| {
        let mut acc = f.bias / 2.0;
        for i in r.indices() {
            acc += f.weights[i] * spin_of(bits, i);
        }
        acc
    };
    part(a) + part(&a.complement())
}

/// Split `bits` into the compressed bits of `A` and of `Ā`.
pub fn compress_bits(bits: u64, a: &Subregion) -> (u64, u64) {
    let (mut u, mut v) = (0u64, 0u64);
    let (mut ju, mut jv) = (0, 0);
    for i in 0..a.n {
        let b = (bits >> i) & 1;
        if a.contains(i) {
            u |= b << ju;
            ju += 1;
        } else {
            v |= b << jv;
            jv += 1;
        }
    }
    (u, v)
}
