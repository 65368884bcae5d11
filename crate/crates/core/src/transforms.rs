//! Channel-wise feature transformations.
//!
//! The central one is `phi_k(x) = 1 / ln(1/x + 1)^k` (with `phi_k(0) = 0`).
//! It is increasing, concave below an inflection point `t(k)` and has an
//! unbounded slope at zero, so applied per channel it lifts weak channels a
//! lot and compresses strong ones while keeping their order.

use serde::{Deserialize, Serialize};

use crate::data::FeatureVector;
use crate::error::{Error, Result};

pub const DEFAULT_K: f64 = 1.3;

/// Step of the central difference used on the analytic first derivative.
const SECOND_DERIVATIVE_STEP: f64 = 1e-5;
const INFLECTION_BRACKET: (f64, f64) = (1e-6, 10.0);
const INFLECTION_SCAN_POINTS: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    None,
    Simple { k: f64 },
    Extended { k: f64 },
    Power { k: f64 },
    Log { a: f64 },
    Piecewise { k: f64, lambda0: f64, x0: f64 },
    Offset { k: f64, r: f64 },
}

impl TransformSpec {
    pub fn simple() -> Self {
        TransformSpec::Simple { k: DEFAULT_K }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be a positive finite number, got {v}")))
            }
        };
        match *self {
            TransformSpec::None => Ok(()),
            TransformSpec::Simple { k } | TransformSpec::Extended { k } | TransformSpec::Power { k } => {
                positive("k", k)
            }
            TransformSpec::Log { a } => positive("a", a),
            TransformSpec::Piecewise { k, lambda0, x0 } => {
                positive("k", k)?;
                positive("lambda0", lambda0)?;
                positive("x0", x0)?;
                if lambda0 >= x0 {
                    return Err(Error::Config(format!(
                        "piecewise transform needs lambda0 < x0, got lambda0={lambda0}, x0={x0}"
                    )));
                }
                Ok(())
            }
            TransformSpec::Offset { k, r } => {
                positive("k", k)?;
                if r.is_finite() && r >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("offset r must be >= 0, got {r}")))
                }
            }
        }
    }

    /// True for the transforms that are strictly increasing on `[0, inf)`.
    pub fn is_strictly_increasing(&self) -> bool {
        matches!(
            self,
            TransformSpec::Simple { .. }
                | TransformSpec::Extended { .. }
                | TransformSpec::Power { .. }
                | TransformSpec::Log { .. }
                | TransformSpec::Offset { .. }
        )
    }

    pub fn accepts_negative(&self) -> bool {
        matches!(self, TransformSpec::None | TransformSpec::Extended { .. })
    }

    /// Short label used for table headers, e.g. `simple_k1.3`.
    pub fn label(&self) -> String {
        match *self {
            TransformSpec::None => "none".into(),
            TransformSpec::Simple { k } => format!("simple_k{k}"),
            TransformSpec::Extended { k } => format!("extended_k{k}"),
            TransformSpec::Power { k } => format!("power_k{k}"),
            TransformSpec::Log { a } => format!("log_a{a}"),
            TransformSpec::Piecewise { k, lambda0, x0 } => format!("piecewise_k{k}_l{lambda0}_x{x0}"),
            TransformSpec::Offset { k, r } => format!("offset_k{k}_r{r}"),
        }
    }

    /// Scalar form of the transform. Prefer [`Transform::new`] when applying
    /// the same spec many times, since it caches piecewise coefficients.
    pub fn eval(&self, x: f64) -> Result<f64> {
        Transform::new(self.clone())?.eval(x)
    }
}

fn check_input(x: f64, allow_negative: bool, name: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("{name} needs a finite input, got {x}")));
    }
    if !allow_negative && x < 0.0 {
        return Err(Error::Domain(format!(
            "{name} is undefined for negative input {x}; use the extended transform for signed features"
        )));
    }
    Ok(())
}

#[inline]
fn phi_unchecked(x: f64, k: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (1.0 / x).ln_1p().powf(-k)
    }
}

/// `1 / ln^k(1/x + 1)`, zero at zero.
pub fn simple_transform(x: f64, k: f64) -> Result<f64> {
    check_input(x, false, "simple transform")?;
    Ok(phi_unchecked(x, k))
}

/// Analytic slope of the simple transform for `x > 0`:
/// `k / (x (1 + x) ln^(k+1)(1/x + 1))`.
pub fn simple_transform_derivative(x: f64, k: f64) -> f64 {
    let u = (1.0 / x).ln_1p();
    k / (x * (1.0 + x) * u.powf(k + 1.0))
}

/// Odd extension to signed inputs: `sign(x) / ln^k(1/|x| + 1)`.
pub fn extended_transform(x: f64, k: f64) -> Result<f64> {
    check_input(x, true, "extended transform")?;
    Ok(x.signum() * phi_unchecked(x.abs(), k))
}

pub fn power_transform(x: f64, k: f64) -> Result<f64> {
    check_input(x, false, "power transform")?;
    Ok(x.powf(k))
}

/// `ln(a x + 1)`.
pub fn log_transform(x: f64, a: f64) -> Result<f64> {
    check_input(x, false, "log transform")?;
    Ok((a * x).ln_1p())
}

/// Simple transform lifted by `r`; zero maps to `r` too.
pub fn offset_transform(x: f64, k: f64, r: f64) -> Result<f64> {
    Ok(simple_transform(x, k)? + r)
}

/// Quadratic branch `a2 x^2 + a1 x + a0` of the piecewise transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCoefficients {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl PiecewiseCoefficients {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a2 * x + self.a1) * x + self.a0
    }

    pub fn extreme_point(&self) -> f64 {
        -self.a1 / (2.0 * self.a2)
    }
}

/// Coefficients that join the quadratic to `phi_k` at `lambda0` with matching
/// value and slope, and put the quadratic's peak at `x0`.
pub fn piecewise_coefficients(k: f64, lambda0: f64, x0: f64) -> Result<PiecewiseCoefficients> {
    TransformSpec::Piecewise { k, lambda0, x0 }.validate()?;
    let slope = simple_transform_derivative(lambda0, k);
    let a2 = slope / (2.0 * (lambda0 - x0));
    let a1 = -2.0 * a2 * x0;
    let a0 = phi_unchecked(lambda0, k) - a2 * lambda0 * lambda0 - a1 * lambda0;
    Ok(PiecewiseCoefficients { a2, a1, a0 })
}

pub fn piecewise_transform(x: f64, coeffs: &PiecewiseCoefficients, k: f64, lambda0: f64) -> Result<f64> {
    check_input(x, false, "piecewise transform")?;
    Ok(if x < lambda0 {
        phi_unchecked(x, k)
    } else {
        coeffs.eval(x)
    })
}

/// A validated [`TransformSpec`] ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct Transform {
    spec: TransformSpec,
    piecewise: Option<PiecewiseCoefficients>,
}

impl Transform {
    pub fn new(spec: TransformSpec) -> Result<Self> {
        spec.validate()?;
        let piecewise = match spec {
            TransformSpec::Piecewise { k, lambda0, x0 } => Some(piecewise_coefficients(k, lambda0, x0)?),
            _ => None,
        };
        Ok(Transform { spec, piecewise })
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match self.spec {
            TransformSpec::None => {
                check_input(x, true, "identity")?;
                Ok(x)
            }
            TransformSpec::Simple { k } => simple_transform(x, k),
            TransformSpec::Extended { k } => extended_transform(x, k),
            TransformSpec::Power { k } => power_transform(x, k),
            TransformSpec::Log { a } => log_transform(x, a),
            TransformSpec::Piecewise { k, lambda0, .. } => {
                piecewise_transform(x, self.piecewise.as_ref().expect("coefficients"), k, lambda0)
            }
            TransformSpec::Offset { k, r } => offset_transform(x, k, r),
        }
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if self.spec == TransformSpec::None {
            return Ok(v.clone());
        }
        let out = v
            .iter()
            .enumerate()
            .map(|(l, &x)| {
                self.eval(x)
                    .map_err(|e| Error::Domain(format!("channel {l}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        FeatureVector::new(out).map_err(|e| Error::Domain(format!("transform overflowed: {e}")))
    }
}

/// Element-wise application of `spec` to `v`.
pub fn apply_channelwise(v: &FeatureVector, spec: &TransformSpec) -> Result<FeatureVector> {
    Transform::new(spec.clone())?.apply(v)
}

fn second_derivative(x: f64, k: f64) -> f64 {
    let h = SECOND_DERIVATIVE_STEP.min(0.5 * x);
    (simple_transform_derivative(x + h, k) - simple_transform_derivative(x - h, k)) / (2.0 * h)
}

/// Point where `phi_k` switches from concave to convex.
///
/// The second derivative is a central difference of the analytic slope. A
/// log-spaced scan of `(1e-6, 10)` finds the first sign change, which is then
/// bisected to below 1e-9. Only `k > 1` has an inflection point; for
/// `k <= 1` the transform is concave on the whole bracket and this returns
/// [`Error::Numeric`].
pub fn inflection_threshold(k: f64) -> Result<f64> {
    if !(0.1..=10.0).contains(&k) {
        return Err(Error::Config(format!("inflection threshold needs k in [0.1, 10], got {k}")));
    }
    let (lo, hi) = INFLECTION_BRACKET;
    let ratio = (hi / lo).ln() / INFLECTION_SCAN_POINTS as f64;
    let grid = |i: usize| if i == INFLECTION_SCAN_POINTS { hi } else { lo * (ratio * i as f64).exp() };

    let mut left = grid(0);
    let mut left_sign = second_derivative(left, k) > 0.0;
    for i in 1..=INFLECTION_SCAN_POINTS {
        let right = grid(i);
        let right_sign = second_derivative(right, k) > 0.0;
        if right_sign != left_sign {
            let (mut a, mut b) = (left, right);
            while b - a > 1e-10 {
                let mid = 0.5 * (a + b);
                if (second_derivative(mid, k) > 0.0) == left_sign {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Ok(0.5 * (a + b));
        }
        left = right;
        left_sign = right_sign;
    }
    Err(Error::Numeric(format!(
        "second derivative of the simple transform keeps one sign on ({lo}, {hi}) for k={k}"
    )))
}
