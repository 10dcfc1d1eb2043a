//! Entanglement spectra checked against an independent SVD route.

use nalgebra::DMatrix;
use nqs_core::entanglement::subregion_entropy;
use nqs_core::rng::RngStream;
use nqs_core::spin::{compress_bits, Subregion};
use nqs_core::statevector::Statevector;
use nqs_core::C64;
use proptest::prelude::*;

/// Squared singular values of the reshaped amplitude matrix, descending.
fn svd_spectrum(psi: &Statevector, a: &Subregion) -> Vec<f64> {
    let (rows, cols) = (1usize << a.size(), 1usize << (a.n - a.size()));
    let mut m = DMatrix::<C64>::zeros(rows, cols);
    for (bits, amp) in psi.amplitudes().iter().enumerate() {
        let (u, v) = compress_bits(bits as u64, a);
        m[(u as usize, v as usize)] = *amp;
    }
    let mut sv: Vec<f64> = m.singular_values().iter().map(|s| s * s).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

fn random_state(seed: u64, n: usize, rank_hint: usize) -> Statevector {
    let mut rng = RngStream::new(seed, 0x0AC1E).rng();
    // Sum of `rank_hint` random product-like terms over a fixed split keeps
    // some spectra rank-deficient.
    let amps: Vec<C64> = if rank_hint == 0 {
        (0..1usize << n).map(|_| C64::new(rng.normal(1.0), rng.normal(1.0))).collect()
    } else {
        let half = n / 2;
        let mut out = vec![C64::new(0.0, 0.0); 1 << n];
        for _ in 0..rank_hint {
            let x: Vec<C64> = (0..1usize << half).map(|_| C64::new(rng.normal(1.0), rng.normal(1.0))).collect();
            let y: Vec<C64> = (0..1usize << (n - half)).map(|_| C64::new(rng.normal(1.0), rng.normal(1.0))).collect();
            for (bits, o) in out.iter_mut().enumerate() {
                *o += x[bits & ((1 << half) - 1)] * y[bits >> half];
            }
        }
        out
    };
    Statevector::from_amplitudes(n, amps).unwrap()
}

fn entropy_of(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_eigenvalues_match_svd(seed in any::<u64>(), n in 2usize..=9, mask_seed in any::<u64>(), rank_hint in 0usize..4) {
        let psi = random_state(seed, n, rank_hint);
        let full = (1u64 << n) - 1;
        let mask = 1 + mask_seed % (full - 1);
        let a = Subregion::new(mask, n).unwrap();
        let res = subregion_entropy(&psi, &a).unwrap();
        let sv = svd_spectrum(&psi, &a);
        for (i, ev) in res.eigenvalues.iter().enumerate() {
            prop_assert!((ev - sv[i]).abs() < 1e-12, "index {i}: {ev} vs {}", sv[i]);
        }
        for tail in &sv[res.eigenvalues.len()..] {
            prop_assert!(*tail <= 1e-10 * sv[0]);
        }
        prop_assert!((res.entropy - entropy_of(&sv)).abs() < 1e-10);
        let rank = sv.iter().filter(|&&x| x > 1e-10 * sv[0]).count();
        prop_assert_eq!(res.schmidt_rank, rank);
    }
}

#[test]
fn rank_deficient_split_matches_svd_rank() {
    let psi = random_state(3, 8, 2);
    let a = Subregion::contiguous(0, 4, 8).unwrap();
    let res = subregion_entropy(&psi, &a).unwrap();
    assert_eq!(res.schmidt_rank, 2);
    assert_eq!(svd_spectrum(&psi, &a).iter().filter(|&&x| x > 1e-20).count(), 2);
}
