//! Scalar nonlinearities and their complex lifts.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::approx::certify::optimize_ellipse;
use crate::error::{NqsError, NqsResult};
use crate::C64;

/// Real scalar nonlinearity.
///
/// `Ln`, `Recip` and `Rsqrt` are internal building blocks for LayerNorm and
/// softmax; they are not analytic on a neighbourhood of the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ActKind {
    Identity,
    Tanh,
    Sin,
    Cos,
    Relu,
    Gelu,
    Softplus { beta: f64 },
    Exp,
    DickeDelta,
    /// `Σ coeffs[j] x^j`.
    Poly { coeffs: Vec<f64> },
    Ln,
    Recip,
    Rsqrt,
}

/// How a real nonlinearity is lifted to a complex value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexMode {
    RealOnly,
    /// `iσ`.
    ImagOnly,
    /// `(1+i)σ`.
    Mixed,
    /// `σ + iσ₂`.
    Pair(ActKind),
}

/// Region of the complex plane on which an activation is analytic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analyticity {
    Entire,
    /// Analytic on `|Im z| < h`.
    Strip(f64),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActKind,
    pub mode: ComplexMode,
}

fn check_finite(x: f64) -> NqsResult<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(NqsError::Numeric(format!("non-finite activation input {x}")))
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn softplus(beta: f64, x: f64) -> f64 {
    let bx = beta * x;
    relu(x) + (-bx.abs()).exp().ln_1p() / beta
}

fn horner<T>(coeffs: &[f64], x: T) -> T
where
    T: Copy + std::ops::Mul<Output = T> + std::ops::Add<f64, Output = T> + From<f64>,
{
    coeffs.iter().rev().fold(T::from(0.0), |acc, &c| acc * x + c)
}

fn complex_tanh(z: C64) -> C64 {
    if z.re.abs() > 20.0 {
        C64::new(z.re.signum(), 0.0)
    } else {
        z.tanh()
    }
}

impl ActKind {
    pub fn from_name(name: &str, beta: Option<f64>, coeffs: Option<Vec<f64>>) -> NqsResult<Self> {
        Ok(match name {
            "identity" | "linear" => ActKind::Identity,
            "tanh" => ActKind::Tanh,
            "sin" => ActKind::Sin,
            "cos" => ActKind::Cos,
            "relu" => ActKind::Relu,
            "gelu" => ActKind::Gelu,
            "softplus" => {
                let beta = beta.unwrap_or(1.0);
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(NqsError::Spec(format!("softplus beta must be positive, got {beta}")));
                }
                ActKind::Softplus { beta }
            }
            "exp" => ActKind::Exp,
            "dicke_delta" => ActKind::DickeDelta,
            "poly" => ActKind::Poly {
                coeffs: coeffs.ok_or_else(|| NqsError::Spec("poly activation needs coeffs".into()))?,
            },
            "ln" => ActKind::Ln,
            "recip" => ActKind::Recip,
            "rsqrt" => ActKind::Rsqrt,
            other => return Err(NqsError::Spec(format!("unknown activation {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActKind::Identity => "identity",
            ActKind::Tanh => "tanh",
            ActKind::Sin => "sin",
            ActKind::Cos => "cos",
            ActKind::Relu => "relu",
            ActKind::Gelu => "gelu",
            ActKind::Softplus { .. } => "softplus",
            ActKind::Exp => "exp",
            ActKind::DickeDelta => "dicke_delta",
            ActKind::Poly { .. } => "poly",
            ActKind::Ln => "ln",
            ActKind::Recip => "recip",
            ActKind::Rsqrt => "rsqrt",
        }
    }

    pub fn eval(&self, x: f64) -> NqsResult<f64> {
        check_finite(x)?;
        Ok(match self {
            ActKind::Identity => x,
            ActKind::Tanh => x.tanh(),
            ActKind::Sin => x.sin(),
            ActKind::Cos => x.cos(),
            ActKind::Relu => relu(x),
            ActKind::Gelu => 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)),
            ActKind::Softplus { beta } => softplus(*beta, x),
            ActKind::Exp => x.exp(),
            ActKind::DickeDelta => relu(x - 1.0) - 2.0 * relu(x) + relu(x + 1.0),
            ActKind::Poly { coeffs } => horner(coeffs, x),
            ActKind::Ln => {
                if x <= 0.0 {
                    return Err(NqsError::Domain(format!("ln of nonpositive {x}")));
                }
                x.ln()
            }
            ActKind::Recip => {
                if x == 0.0 {
                    return Err(NqsError::Domain("reciprocal of zero".into()));
                }
                1.0 / x
            }
            ActKind::Rsqrt => {
                if x <= 0.0 {
                    return Err(NqsError::Domain(format!("rsqrt of nonpositive {x}")));
                }
                1.0 / x.sqrt()
            }
        })
    }

    /// Analytic continuation; kinds without one accept only real inputs.
    pub fn eval_complex(&self, z: C64) -> NqsResult<C64> {
        check_finite(z.re)?;
        check_finite(z.im)?;
        if z.im == 0.0 {
            return self.eval(z.re).map(|v| C64::new(v, 0.0));
        }
        Ok(match self {
            ActKind::Identity => z,
            ActKind::Tanh => complex_tanh(z),
            ActKind::Sin => z.sin(),
            ActKind::Cos => z.cos(),
            ActKind::Exp => z.exp(),
            ActKind::Softplus { beta } => {
                let bz = z * *beta;
                if bz.re > 30.0 {
                    z + (-bz).exp().ln_1p_c() / *beta
                } else {
                    bz.exp().ln_1p_c() / *beta
                }
            }
            ActKind::Poly { coeffs } => horner(coeffs, z),
            ActKind::Ln => z.ln(),
            ActKind::Recip => z.inv(),
            ActKind::Rsqrt => z.sqrt().inv(),
            ActKind::Relu | ActKind::Gelu | ActKind::DickeDelta => {
                return Err(NqsError::Domain(format!(
                    "{} has no complex extension (input {z})",
                    self.name()
                )))
            }
        })
    }

    pub fn analyticity(&self) -> Analyticity {
        match self {
            ActKind::Identity | ActKind::Sin | ActKind::Cos | ActKind::Exp | ActKind::Poly { .. } => {
                Analyticity::Entire
            }
            ActKind::Tanh => Analyticity::Strip(PI / 2.0),
            ActKind::Softplus { beta } => Analyticity::Strip(PI / beta),
            ActKind::Relu
            | ActKind::Gelu
            | ActKind::DickeDelta
            | ActKind::Ln
            | ActKind::Recip
            | ActKind::Rsqrt => Analyticity::None,
        }
    }

    /// Polynomial degree when the activation is a polynomial.
    pub fn poly_degree(&self) -> Option<usize> {
        match self {
            ActKind::Identity => Some(1),
            ActKind::Poly { coeffs } => Some(
                coeffs
                    .iter()
                    .rposition(|&c| c != 0.0)
                    .unwrap_or(0),
            ),
            _ => None,
        }
    }
}

trait Ln1p {
    fn ln_1p_c(self) -> C64;
}

impl Ln1p for C64 {
    fn ln_1p_c(self) -> C64 {
        if self.norm() < 1e-8 {
            self - self * self / 2.0
        } else {
            (self + 1.0).ln()
        }
    }
}

impl Activation {
    pub fn new(kind: ActKind, mode: ComplexMode) -> Self {
        Self { kind, mode }
    }

    pub fn real(kind: ActKind) -> Self {
        Self::new(kind, ComplexMode::RealOnly)
    }

    pub fn apply(&self, x: f64) -> NqsResult<C64> {
        let s = self.kind.eval(x)?;
        Ok(match &self.mode {
            ComplexMode::RealOnly => C64::new(s, 0.0),
            ComplexMode::ImagOnly => C64::new(0.0, s),
            ComplexMode::Mixed => C64::new(s, s),
            ComplexMode::Pair(second) => C64::new(s, second.eval(x)?),
        })
    }

    pub fn apply_complex(&self, z: C64) -> NqsResult<C64> {
        if z.im == 0.0 {
            return self.apply(z.re);
        }
        let s = self.kind.eval_complex(z)?;
        let i = C64::new(0.0, 1.0);
        Ok(match &self.mode {
            ComplexMode::RealOnly => s,
            ComplexMode::ImagOnly => i * s,
            ComplexMode::Mixed => C64::new(1.0, 1.0) * s,
            ComplexMode::Pair(second) => s + i * second.eval_complex(z)?,
        })
    }

    /// Analyticity of the lifted function (the narrower of both parts for pairs).
    pub fn analyticity(&self) -> Analyticity {
        let a = self.kind.analyticity();
        match &self.mode {
            ComplexMode::Pair(second) => narrower(a, second.analyticity()),
            _ => a,
        }
    }

    pub fn poly_degree(&self) -> Option<usize> {
        let d = self.kind.poly_degree()?;
        match &self.mode {
            ComplexMode::Pair(second) => Some(d.max(second.poly_degree()?)),
            _ => Some(d),
        }
    }
}

pub fn narrower(a: Analyticity, b: Analyticity) -> Analyticity {
    match (a, b) {
        (Analyticity::None, _) | (_, Analyticity::None) => Analyticity::None,
        (Analyticity::Entire, x) | (x, Analyticity::Entire) => x,
        (Analyticity::Strip(h1), Analyticity::Strip(h2)) => Analyticity::Strip(h1.min(h2)),
    }
}

/// Degree at which entire activations tune their ellipse parameter.
pub const ELLIPSE_DEGREE_HINT: usize = 16;

/// Bernstein parameter `a` and inflated sup bound `C` for `f(x) = σ(t̄ x)`
/// on the ellipse `B(a)`, or `None` when `σ` is not analytic near `[-t̄, t̄]`.
///
/// Strip-analytic kinds keep `t̄ sinh a` at 90% of the strip half-width;
/// entire kinds pick `a` minimizing `2Cρ^{-d}/(ρ-1)` at the hint degree.
pub fn analyticity_params(act: &Activation, tbar: f64) -> Option<(f64, f64)> {
    analyticity_params_for_degree(act, tbar, ELLIPSE_DEGREE_HINT)
}

pub fn analyticity_params_for_degree(act: &Activation, tbar: f64, degree: usize) -> Option<(f64, f64)> {
    if !(tbar > 0.0 && tbar.is_finite()) {
        return None;
    }
    let a_max = match act.analyticity() {
        Analyticity::None => return None,
        Analyticity::Entire => f64::INFINITY,
        Analyticity::Strip(h) => (0.9 * h / tbar).asinh(),
    };
    let f = |z: C64| act.apply_complex(z * tbar).ok();
    optimize_ellipse(&f, a_max, degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-14
    }

    #[test]
    fn examples() {
        let tanh = Activation::real(ActKind::Tanh);
        assert_eq!(tanh.apply(0.0).unwrap(), C64::new(0.0, 0.0));
        let d = Activation::real(ActKind::DickeDelta);
        let vals: Vec<f64> = [-2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&x| d.apply(x).unwrap().re)
            .collect();
        assert_eq!(vals, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let sin = Activation::new(ActKind::Sin, ComplexMode::Mixed);
        assert!(close(sin.apply(PI / 2.0).unwrap(), C64::new(1.0, 1.0)));
        let im = Activation::new(ActKind::Cos, ComplexMode::ImagOnly);
        assert!(close(im.apply(0.0).unwrap(), C64::new(0.0, 1.0)));
    }

    #[test]
    fn non_finite_input_rejected() {
        let a = Activation::real(ActKind::Sin);
        assert!(matches!(a.apply(f64::NAN), Err(NqsError::Numeric(_))));
        assert!(matches!(a.apply(f64::INFINITY), Err(NqsError::Numeric(_))));
    }

    #[test]
    fn gelu_exact_erf_form() {
        let g = ActKind::Gelu;
        assert_eq!(g.eval(0.0).unwrap(), 0.0);
        assert!((g.eval(1.0).unwrap() - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((g.eval(-1.0).unwrap() + 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn non_analytic_kinds_reject_complex() {
        for k in [ActKind::Relu, ActKind::Gelu, ActKind::DickeDelta] {
            assert!(k.eval_complex(C64::new(0.3, 0.1)).is_err());
            assert!(k.eval_complex(C64::new(0.3, 0.0)).is_ok());
        }
    }

    #[test]
    fn complex_continuations_match_real() {
        for k in [
            ActKind::Tanh,
            ActKind::Sin,
            ActKind::Cos,
            ActKind::Exp,
            ActKind::Softplus { beta: 2.0 },
            ActKind::Poly { coeffs: vec![1.0, -2.0, 0.5] },
        ] {
            for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
                let eps = 1e-9;
                let z = k.eval_complex(C64::new(x, eps)).unwrap();
                assert!((z.re - k.eval(x).unwrap()).abs() < 1e-7, "{k:?} at {x}");
            }
        }
    }

    #[test]
    fn analyticity_examples() {
        assert!(analyticity_params(&Activation::real(ActKind::Relu), 1.0).is_none());
        assert!(analyticity_params(&Activation::real(ActKind::Gelu), 1.0).is_none());
        let (a, c) = analyticity_params(&Activation::real(ActKind::Tanh), 1.0).unwrap();
        assert!(a.sinh() <= 0.9 * PI / 2.0 + 1e-12);
        assert!(c.is_finite() && c > 1.0);
        let (a, c) = analyticity_params(&Activation::real(ActKind::Sin), 2.0).unwrap();
        assert!(a > 0.0 && c > 0.0);
    }

    #[test]
    fn tanh_ellipse_sup_covers_dense_sampling() {
        let act = Activation::real(ActKind::Tanh);
        let (a, c) = analyticity_params(&act, 1.0).unwrap();
        let mut max = 0.0f64;
        for j in 0..40_000 {
            let th = 2.0 * PI * j as f64 / 40_000.0;
            let z = C64::new(a.cosh() * th.cos(), a.sinh() * th.sin());
            max = max.max(act.apply_complex(z).unwrap().norm());
        }
        assert!(a.sinh() < PI / 2.0);
        assert!(c >= max);
    }

    proptest! {
        #[test]
        fn dicke_delta_is_kronecker_on_integers(x in -30i32..=30) {
            let v = ActKind::DickeDelta.eval(x as f64).unwrap();
            prop_assert_eq!(v, if x == 0 { 1.0 } else { 0.0 });
        }

        #[test]
        fn pair_mode_is_sum(x in -10.0f64..10.0) {
            let a = Activation::new(ActKind::Tanh, ComplexMode::Pair(ActKind::Sin));
            let v = a.apply(x).unwrap();
            prop_assert_eq!(v, C64::new(x.tanh(), x.sin()));
        }

        #[test]
        fn softplus_converges_to_relu(x in -50.0f64..50.0, beta in 0.1f64..100.0) {
            let d = (softplus(beta, x) - relu(x)).abs();
            prop_assert!(d <= std::f64::consts::LN_2 / beta + 1e-12);
        }
    }
}
