//! Dense normalized statevectors over all `2^n` configurations.
//!
//! Parallel loops use fixed chunks of [`CHUNK`] amplitudes and reduce chunk
//! partials sequentially in chunk order, so results do not depend on the
//! number of worker threads.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{NqsError, NqsResult};
use crate::graph::{ComputationGraph, ReducedForm};
use crate::spin::check_n;
use crate::C64;

pub const CHUNK: usize = 4096;
pub const MAGIC: &[u8; 4] = b"NQSV";
pub const FORMAT_VERSION: u32 = 1;

/// Anything that yields the amplitude of a configuration.
pub trait AmplitudeSource: Sync {
    fn n(&self) -> usize;

    /// Fill `out[j]` with the amplitude of configuration `start + j`.
    fn fill(&self, start: u64, out: &mut [C64]) -> NqsResult<()>;
}

impl AmplitudeSource for ComputationGraph {
    fn n(&self) -> usize {
        ComputationGraph::n(self)
    }

    fn fill(&self, start: u64, out: &mut [C64]) -> NqsResult<()> {
        let mut buf = self.scratch();
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.eval_bits_with(start + j as u64, &mut buf)?;
        }
        Ok(())
    }
}

impl AmplitudeSource for ReducedForm {
    fn n(&self) -> usize {
        ReducedForm::n(self)
    }

    fn fill(&self, start: u64, out: &mut [C64]) -> NqsResult<()> {
        let mut buf = self.residual.scratch();
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.eval_bits_with(start + j as u64, &mut buf)?;
        }
        Ok(())
    }
}

/// Amplitudes given by a closure of the configuration bits.
pub struct FnSource<F> {
    pub n: usize,
    pub f: F,
}

impl<F> AmplitudeSource for FnSource<F>
where
    F: Fn(u64) -> NqsResult<C64> + Sync,
{
    fn n(&self) -> usize {
        self.n
    }

    fn fill(&self, start: u64, out: &mut [C64]) -> NqsResult<()> {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (self.f)(start + j as u64)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amplitudes: Vec<C64>,
    n: usize,
    /// 2-norm before normalization.
    pub norm_was: f64,
}

/// Deterministic 2-norm: chunk maxima, then a scaled sum of squares.
fn stable_norm(v: &[C64]) -> f64 {
    let max = v
        .par_chunks(CHUNK)
        .map(|c| c.iter().fold(0.0f64, |m, z| m.max(z.norm())))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let partials: Vec<f64> = v
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|z| (z / max).norm_sqr()).sum())
        .collect();
    max * partials.into_iter().sum::<f64>().sqrt()
}

impl Statevector {
    /// Normalize raw amplitudes; `amplitudes.len()` must be `2^n`.
    pub fn from_amplitudes(n: usize, mut amplitudes: Vec<C64>) -> NqsResult<Self> {
        if n >= 64 || amplitudes.len() != 1usize << n {
            return Err(NqsError::Dimension { expected: 1usize.checked_shl(n as u32).unwrap_or(0), got: amplitudes.len() });
        }
        if amplitudes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(NqsError::Numeric("non-finite amplitude".into()));
        }
        let norm = stable_norm(&amplitudes);
        if norm == 0.0 {
            return Err(NqsError::DegenerateState("all amplitudes are zero".into()));
        }
        amplitudes.par_iter_mut().for_each(|z| *z /= norm);
        Ok(Self { amplitudes, n, norm_was: norm })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, bits: u64) -> C64 {
        self.amplitudes[bits as usize]
    }

    /// Basis state `|bits⟩`.
    pub fn basis(n: usize, bits: u64) -> NqsResult<Self> {
        let mut a = vec![C64::new(0.0, 0.0); 1 << n];
        a[bits as usize] = C64::new(1.0, 0.0);
        Self::from_amplitudes(n, a)
    }

    pub fn write_to(&self, w: &mut impl Write) -> NqsResult<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        let mut bytes = Vec::with_capacity(16 * self.amplitudes.len());
        for z in &self.amplitudes {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> NqsResult<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(NqsError::Spec("statevector file lacks NQSV magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(NqsError::Spec(format!("unsupported statevector version {version}")));
        }
        let n = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        check_n(n)?;
        let mut bytes = vec![0u8; 16 << n];
        r.read_exact(&mut bytes)?;
        let amps = bytes
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Self::from_amplitudes(n, amps)
    }

    pub fn save(&self, path: &std::path::Path) -> NqsResult<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> NqsResult<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Evaluate every amplitude of `src` and normalize.
pub fn materialize(src: &(impl AmplitudeSource + ?Sized)) -> NqsResult<Statevector> {
    let n = src.n();
    check_n(n)?;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    let results: Vec<NqsResult<()>> = amps
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| src.fill((ci * CHUNK) as u64, chunk))
        .collect();
    for r in results {
        r?;
    }
    Statevector::from_amplitudes(n, amps)
}

fn check_same(psi: &Statevector, phi: &Statevector) -> NqsResult<()> {
    if psi.n != phi.n {
        return Err(NqsError::Dimension { expected: psi.n, got: phi.n });
    }
    Ok(())
}

/// `⟨ψ|φ⟩`, conjugating `ψ`.
pub fn overlap(psi: &Statevector, phi: &Statevector) -> NqsResult<C64> {
    check_same(psi, phi)?;
    let partials: Vec<C64> = psi
        .amplitudes
        .par_chunks(CHUNK)
        .zip(phi.amplitudes.par_chunks(CHUNK))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
        .collect();
    Ok(partials.into_iter().sum())
}

/// `‖ψ − φ‖₂`.
pub fn two_norm_distance(psi: &Statevector, phi: &Statevector) -> NqsResult<f64> {
    check_same(psi, phi)?;
    let partials: Vec<f64> = psi
        .amplitudes
        .par_chunks(CHUNK)
        .zip(phi.amplitudes.par_chunks(CHUNK))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum())
        .collect();
    Ok(partials.into_iter().sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn random_state(n: usize, seed: u64) -> Statevector {
        let mut r = RngStream::new(seed, 0).rng();
        let a = (0..1 << n).map(|_| C64::new(r.normal(1.0), r.normal(1.0))).collect();
        Statevector::from_amplitudes(n, a).unwrap()
    }

    #[test]
    fn normalization_and_degenerate() {
        let s = Statevector::from_amplitudes(1, vec![C64::new(3.0, 0.0), C64::new(0.0, 4.0)]).unwrap();
        assert_eq!(s.norm_was, 5.0);
        assert!((s.amplitude(1) - C64::new(0.0, 0.8)).norm() < 1e-15);
        assert!(matches!(
            Statevector::from_amplitudes(2, vec![C64::new(0.0, 0.0); 4]),
            Err(NqsError::DegenerateState(_))
        ));
        assert!(Statevector::from_amplitudes(2, vec![C64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn huge_amplitudes_normalize() {
        let s = Statevector::from_amplitudes(1, vec![C64::new(1e300, 0.0), C64::new(1e300, 0.0)]).unwrap();
        assert!((s.amplitude(0).re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn basis_overlaps() {
        let a = Statevector::basis(3, 2).unwrap();
        let b = Statevector::basis(3, 5).unwrap();
        assert_eq!(overlap(&a, &b).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(overlap(&a, &a).unwrap(), C64::new(1.0, 0.0));
        assert!(overlap(&a, &Statevector::basis(2, 0).unwrap()).is_err());
    }

    #[test]
    fn distance_examples() {
        let psi = random_state(5, 1);
        let neg = Statevector::from_amplitudes(5, psi.amplitudes().iter().map(|z| -z).collect()).unwrap();
        assert_eq!(two_norm_distance(&psi, &psi).unwrap(), 0.0);
        assert!((two_norm_distance(&psi, &neg).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn binary_round_trip() {
        let psi = random_state(6, 3);
        let mut bytes = vec![];
        psi.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 16 + 16 * 64);
        assert_eq!(&bytes[..4], b"NQSV");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 6);
        let back = Statevector::read_from(&mut bytes.as_slice()).unwrap();
        for (a, b) in psi.amplitudes().iter().zip(back.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
        bytes[0] = b'X';
        assert!(Statevector::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn materialize_independent_of_thread_count() {
        let src = FnSource { n: 14, f: |b: u64| Ok(C64::new((b as f64 * 0.37).sin(), (b as f64).cos())) };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| materialize(&src).unwrap());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| materialize(&src).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn overflow_names_config() {
        let src = FnSource {
            n: 3,
            f: |b: u64| if b == 5 { Err(NqsError::AmplitudeOverflow { config: 5 }) } else { Ok(C64::new(1.0, 0.0)) },
        };
        assert!(matches!(materialize(&src), Err(NqsError::AmplitudeOverflow { config: 5 })));
    }

    proptest! {
        #[test]
        fn distance_overlap_identity(s1 in any::<u64>(), s2 in any::<u64>()) {
            let a = random_state(6, s1);
            let b = random_state(6, s2);
            let d = two_norm_distance(&a, &b).unwrap();
            let o = overlap(&a, &b).unwrap();
            prop_assert!((d * d - (2.0 - 2.0 * o.re)).abs() < 1e-12);
        }

        #[test]
        fn triangle_inequality(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
            let (a, b, c) = (random_state(5, s1), random_state(5, s2), random_state(5, s3));
            let ab = two_norm_distance(&a, &b).unwrap();
            let bc = two_norm_distance(&b, &c).unwrap();
            let ac = two_norm_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-14);
        }
    }
}
