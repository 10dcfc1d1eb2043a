//! Reduced density matrices, entropies, Schmidt ranks and trace distances.

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NqsError, NqsResult};
use crate::spin::Subregion;
use crate::statevector::{overlap, Statevector};
use crate::C64;

/// Default relative Schmidt-rank threshold.
pub const RANK_THRESHOLD_REL: f64 = 1e-10;
/// Absolute floor below which eigenvalues never count toward the rank.
pub const RANK_FLOOR_ABS: f64 = 1e-14;
/// Negative eigenvalues down to this magnitude are clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-12;
/// Largest trace drift that is silently renormalized.
pub const TRACE_DRIFT_MAX: f64 = 1e-8;
/// Largest `|A|` for which dense reduced density matrices are formed.
pub const MAX_DENSE_REGION: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LogBase {
    #[default]
    #[serde(rename = "e")]
    E,
    #[serde(rename = "2")]
    Two,
}

impl LogBase {
    pub fn parse(s: &str) -> NqsResult<Self> {
        match s {
            "e" => Ok(LogBase::E),
            "2" => Ok(LogBase::Two),
            other => Err(NqsError::Contract(format!("log base must be \"2\" or \"e\", got {other:?}"))),
        }
    }

    /// Convert a value in nats to this base.
    pub fn from_nats(self, x: f64) -> f64 {
        match self {
            LogBase::E => x,
            LogBase::Two => x / std::f64::consts::LN_2,
        }
    }
}

/// `ψ` laid out as a `2^{|A|} × 2^{n-|A|}` matrix, row-major.
///
/// Bit `j` of a row index `u` is the spin at the `j`-th smallest position of
/// `A`; columns index `Ā` the same way.
#[derive(Debug, Clone)]
pub struct BipartitionMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
    pub region: Subregion,
    row_bits: Vec<u64>,
    col_bits: Vec<u64>,
}

/// Configuration bits contributed by each compressed index of `r`.
pub fn scatter_table(r: &Subregion) -> Vec<u64> {
    let idx = r.indices();
    (0..1u64 << idx.len())
        .map(|u| {
            idx.iter()
                .enumerate()
                .fold(0u64, |acc, (j, &i)| acc | (((u >> j) & 1) << i))
        })
        .collect()
}

impl BipartitionMatrix {
    pub fn get(&self, u: usize, v: usize) -> C64 {
        self.data[u * self.cols + v]
    }

    /// Inverse of [`bipartition`].
    pub fn flatten(&self) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.rows * self.cols];
        for (u, &rb) in self.row_bits.iter().enumerate() {
            for (v, &cb) in self.col_bits.iter().enumerate() {
                out[(rb | cb) as usize] = self.data[u * self.cols + v];
            }
        }
        out
    }
}

pub fn bipartition(psi: &Statevector, a: &Subregion) -> NqsResult<BipartitionMatrix> {
    if a.n != psi.n() {
        return Err(NqsError::Dimension { expected: psi.n(), got: a.n });
    }
    let size = a.size();
    if size == 0 || size == a.n {
        return Err(NqsError::Contract(format!("region must be a proper nonempty subset, got |A| = {size}")));
    }
    let row_bits = scatter_table(a);
    let col_bits = scatter_table(&a.complement());
    let (rows, cols) = (row_bits.len(), col_bits.len());
    let amps = psi.amplitudes();
    let mut data = vec![C64::new(0.0, 0.0); rows * cols];
    data.par_chunks_mut(cols).enumerate().for_each(|(u, row)| {
        let rb = row_bits[u];
        for (v, x) in row.iter_mut().enumerate() {
            *x = amps[(rb | col_bits[v]) as usize];
        }
    });
    Ok(BipartitionMatrix { rows, cols, data, region: *a, row_bits, col_bits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyResult {
    /// Descending, nonnegative, summing to one.
    pub eigenvalues: Vec<f64>,
    /// In units of `log_base`.
    pub entropy: f64,
    pub schmidt_rank: usize,
    pub log_base: LogBase,
}

impl EntropyResult {
    pub fn entropy_nats(&self) -> f64 {
        match self.log_base {
            LogBase::E => self.entropy,
            LogBase::Two => self.entropy * std::f64::consts::LN_2,
        }
    }

    pub fn in_base(mut self, base: LogBase) -> Self {
        self.entropy = base.from_nats(self.entropy_nats());
        self.log_base = base;
        self
    }
}

/// Block count for Gram accumulation; depends only on the shape.
fn gram_blocks(short: usize, long: usize) -> usize {
    let by_memory = ((1usize << 26) / (short * short).max(1)).max(1);
    by_memory.min(8).min(long.div_ceil(64)).max(1)
}

/// `M M†` when `rows <= cols`, else `M† M`, accumulated over fixed blocks of
/// the long dimension and summed in block order.
pub fn gram_smaller_side(m: &BipartitionMatrix) -> Mat<C64> {
    let wide = m.rows <= m.cols;
    let (short, long) = if wide { (m.rows, m.cols) } else { (m.cols, m.rows) };
    let blocks = gram_blocks(short, long);
    let width = long.div_ceil(blocks);
    let at = |s: usize, l: usize| if wide { m.data[s * m.cols + l] } else { m.data[l * m.cols + s] };
    let partials: Vec<Mat<C64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = (b * width).min(long);
            let hi = ((b + 1) * width).min(long);
            let blk = Mat::<C64>::from_fn(short, hi - lo, |s, l| at(s, lo + l));
            &blk * blk.adjoint()
        })
        .collect();
    let mut g = Mat::<C64>::zeros(short, short);
    for p in &partials {
        g += p;
    }
    g
}

fn hermitian_eigenvalues(g: &Mat<C64>) -> NqsResult<Vec<f64>> {
    g.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| NqsError::Numeric(format!("eigensolver failed: {e:?}")))
}

/// Spectrum of a unit-trace Gram matrix as an [`EntropyResult`] in nats.
pub fn entropy_from_spectrum(raw: Vec<f64>, threshold_rel: f64) -> NqsResult<EntropyResult> {
    let mut ev = raw;
    for x in ev.iter_mut() {
        if *x < 0.0 {
            if *x < -NEGATIVE_CLAMP {
                return Err(NqsError::Numeric(format!("reduced density matrix eigenvalue {x} is negative")));
            }
            *x = 0.0;
        }
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    let trace: f64 = ev.iter().sum();
    let drift = (trace - 1.0).abs();
    if drift > TRACE_DRIFT_MAX || trace == 0.0 {
        return Err(NqsError::Consistency(format!("reduced density matrix trace {trace} differs from 1")));
    }
    for x in ev.iter_mut() {
        *x /= trace;
    }
    let entropy = -ev.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
    let cut = (threshold_rel * ev[0]).max(RANK_FLOOR_ABS);
    let schmidt_rank = ev.iter().filter(|&&x| x > cut).count();
    Ok(EntropyResult { eigenvalues: ev, entropy: entropy.max(0.0), schmidt_rank, log_base: LogBase::E })
}

/// Von Neumann entropy (nats) of the reduced state on the matrix's rows.
pub fn entropy(m: &BipartitionMatrix, threshold_rel: f64) -> NqsResult<EntropyResult> {
    let g = gram_smaller_side(m);
    entropy_from_spectrum(hermitian_eigenvalues(&g)?, threshold_rel)
}

pub fn subregion_entropy(psi: &Statevector, a: &Subregion) -> NqsResult<EntropyResult> {
    entropy(&bipartition(psi, a)?, RANK_THRESHOLD_REL)
}

/// `½‖ρ − σ‖₁ = √(1 − |⟨ψ|φ⟩|²)` for normalized pure states.
pub fn pure_trace_distance(psi: &Statevector, phi: &Statevector) -> NqsResult<f64> {
    let o = overlap(psi, phi)?.norm_sqr();
    // Rounding in the overlap alone cannot be distinguished from zero.
    let gap = 1.0 - o;
    Ok(if gap <= 8.0 * f64::EPSILON * psi.amplitudes().len() as f64 { 0.0 } else { gap.sqrt() })
}

/// `ρ_A = Tr_Ā |ψ⟩⟨ψ|` as a dense `2^{|A|}` square matrix.
pub fn reduced_density_matrix(psi: &Statevector, a: &Subregion) -> NqsResult<Mat<C64>> {
    if a.size() > MAX_DENSE_REGION {
        return Err(NqsError::Capacity(format!(
            "|A| = {} exceeds dense reduced-density limit {MAX_DENSE_REGION}",
            a.size()
        )));
    }
    let m = bipartition(psi, a)?;
    let mm = Mat::<C64>::from_fn(m.rows, m.cols, |u, v| m.get(u, v));
    Ok(&mm * mm.adjoint())
}

/// `½‖ρ_A − σ_A‖₁` from the eigenvalues of the Hermitian difference.
pub fn reduced_trace_distance(psi: &Statevector, phi: &Statevector, a: &Subregion) -> NqsResult<f64> {
    if psi.n() != phi.n() {
        return Err(NqsError::Dimension { expected: psi.n(), got: phi.n() });
    }
    let d = reduced_density_matrix(psi, a)? - reduced_density_matrix(phi, a)?;
    let ev = hermitian_eigenvalues(&d)?;
    Ok(0.5 * ev.iter().map(|x| x.abs()).sum::<f64>())
}

/// Binary entropy in nats with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(t: f64) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    h(t) + h(1.0 - t)
}

/// `ln(2^a − 1)` without cancellation.
pub fn ln_pow2_minus_one(a: usize) -> f64 {
    a as f64 * std::f64::consts::LN_2 + (-(0.5f64).powi(a as i32)).ln_1p()
}

/// `T log(2^{|A|} − 1) + H₂(T)`.
pub fn fannes_audenaert_bound(t: f64, size_a: usize, base: LogBase) -> NqsResult<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(NqsError::Domain(format!("trace distance {t} outside [0, 1]")));
    }
    if size_a == 0 {
        return Err(NqsError::Contract("Fannes-Audenaert bound needs |A| >= 1".into()));
    }
    let first = if t == 0.0 { 0.0 } else { t * ln_pow2_minus_one(size_a) };
    Ok(base.from_nats(first + binary_entropy(t)))
}

/// Fannes-Audenaert slack for the entropy difference across `A`, evaluated
/// on the smaller side of the cut.
pub fn fa_slack_pair(psi: &Statevector, phi: &Statevector, a: &Subregion) -> NqsResult<(f64, f64)> {
    let side = if a.size() <= a.n - a.size() { *a } else { a.complement() };
    let t = reduced_trace_distance(psi, phi, &side)?.min(1.0);
    Ok((t, fannes_audenaert_bound(t, side.size(), LogBase::E)?))
}
