//! Model parameters: radius laws, sampling windows, and the closed-form
//! integrals that make exact sampling possible.
//!
//! Balls are open throughout the crate. Every geometric predicate downstream
//! is a strict inequality, and no epsilon is applied near tangency; two balls
//! at exactly touching distance do not intersect.
//!
//! Closed forms kept here:
//!
//! | quantity                  | definition                                   |
//! |---------------------------|----------------------------------------------|
//! | `moment(s)`               | `E(R^s)` as an extended real                 |
//! | `tail_mass(d, alpha)`     | `∫_[alpha,∞) r^d dν(r)`                      |
//! | `steiner_volume(w, d, r)` | volume of the dilation `W ⊕ B(0, r)`         |
//! | `tilt_integral(..)`       | mean number of balls meeting the window      |

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Validation and closed-form evaluation errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(u32),
    #[error("intensity must be positive and finite, got {0}")]
    Intensity(f64),
    #[error("radius distribution: {0}")]
    Radius(String),
    #[error(
        "E(R^{dimension}) is infinite, so the occupied region covers all of \
         R^{dimension} almost surely and no cluster observable is non-degenerate"
    )]
    SpaceFilling { dimension: u32 },
    #[error("this quantity requires E(R^{power}) to be finite")]
    InfiniteMoment { power: f64 },
    #[error("window parameter must be positive and finite, got {0}")]
    Window(f64),
    #[error("box windows support dimensions 2 and 3 only, got {0}")]
    BoxDimension(u32),
    #[error("threshold must be positive and finite, got {0}")]
    Threshold(f64),
}

/// An extended-real moment value. Heavy-tailed radius laws make some moments
/// infinite; that is a first-class answer here, never a float overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn is_finite(self) -> bool {
        matches!(self, Moment::Finite(_))
    }

    /// The value, when finite.
    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }
}

impl fmt::Display for Moment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Moment::Finite(v) => write!(f, "{v}"),
            Moment::Infinite => write!(f, "inf"),
        }
    }
}

/// One weighted branch of a mixture radius law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub law: RadiusDistribution,
}

/// Radius law of the balls. Every variant has closed-form moments, tail
/// masses, and tilted sampling; an empirical law should be quantized into a
/// `Mixture` rather than added as a new variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusDistribution {
    /// Every ball has radius `value`.
    Constant { value: f64 },
    /// Uniform density on `[low, high]`.
    Uniform { low: f64, high: f64 },
    /// Pareto law on `[scale, ∞)`: `P(R > r) = (scale / r)^exponent`.
    Pareto { scale: f64, exponent: f64 },
    /// Convex combination of radius laws; weights must sum to one.
    Mixture { components: Vec<MixtureComponent> },
}

impl RadiusDistribution {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Radius(msg));
        match self {
            RadiusDistribution::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return bad(format!("constant radius must be positive and finite, got {value}"));
                }
            }
            RadiusDistribution::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low > 0.0 && low < high) {
                    return bad(format!("uniform support needs 0 < low < high, got [{low}, {high}]"));
                }
            }
            RadiusDistribution::Pareto { scale, exponent } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad(format!("pareto scale must be positive and finite, got {scale}"));
                }
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return bad(format!("pareto exponent must be positive and finite, got {exponent}"));
                }
            }
            RadiusDistribution::Mixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component".into());
                }
                let mut total = 0.0;
                for c in components {
                    if !(c.weight.is_finite() && c.weight > 0.0) {
                        return bad(format!("mixture weights must be positive, got {}", c.weight));
                    }
                    c.law.validate()?;
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights must sum to one, got {total}"));
                }
            }
        }
        Ok(())
    }

    /// `E(R^s)` for real `s >= 0`.
    pub fn moment(&self, s: f64) -> Moment {
        assert!(s.is_finite() && s >= 0.0, "moment order must be finite and non-negative");
        match self {
            RadiusDistribution::Constant { value } => Moment::Finite(value.powf(s)),
            RadiusDistribution::Uniform { low, high } => {
                let p = s + 1.0;
                Moment::Finite((high.powf(p) - low.powf(p)) / (p * (high - low)))
            }
            RadiusDistribution::Pareto { scale, exponent } => {
                if s < *exponent {
                    Moment::Finite(exponent * scale.powf(s) / (exponent - s))
                } else {
                    Moment::Infinite
                }
            }
            RadiusDistribution::Mixture { components } => {
                let mut total = 0.0;
                for c in components {
                    match c.law.moment(s) {
                        Moment::Finite(v) => total += c.weight * v,
                        Moment::Infinite => return Moment::Infinite,
                    }
                }
                Moment::Finite(total)
            }
        }
    }

    /// `∫_[alpha,∞) r^d dν(r)`: the d-th power mass at or above `alpha`.
    ///
    /// Non-increasing in `alpha` and equal to `E(R^d)` as `alpha -> 0+`.
    /// Requires `E(R^d)` finite, which is exactly when the integral is.
    pub fn tail_mass(&self, d: u32, alpha: f64) -> Result<f64, ModelError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::Threshold(alpha));
        }
        if !self.moment(d as f64).is_finite() {
            return Err(ModelError::InfiniteMoment { power: d as f64 });
        }
        Ok(self.tail_mass_unchecked(d, alpha))
    }

    fn tail_mass_unchecked(&self, d: u32, alpha: f64) -> f64 {
        match self {
            RadiusDistribution::Constant { value } => {
                if *value >= alpha {
                    value.powi(d as i32)
                } else {
                    0.0
                }
            }
            RadiusDistribution::Uniform { low, high } => {
                if alpha >= *high {
                    return 0.0;
                }
                let lo = alpha.max(*low);
                let p = d as f64 + 1.0;
                (high.powf(p) - lo.powf(p)) / (p * (high - low))
            }
            RadiusDistribution::Pareto { scale, exponent } => {
                let d = d as f64;
                if alpha <= *scale {
                    exponent * scale.powf(d) / (exponent - d)
                } else {
                    exponent * scale.powf(*exponent) * alpha.powf(d - exponent) / (exponent - d)
                }
            }
            RadiusDistribution::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.law.tail_mass_unchecked(d, alpha))
                .sum(),
        }
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: u32) -> f64 {
    let (mut v, mut k) = if d % 2 == 0 { (1.0, 0) } else { (2.0, 1) };
    while k + 2 <= d {
        k += 2;
        v *= 2.0 * PI / k as f64;
    }
    v
}

/// Sampling window centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Window {
    /// Axis-aligned cube with side length `side`.
    Box { side: f64 },
    /// Euclidean ball with radius `radius`.
    Ball { radius: f64 },
}

impl Window {
    pub fn validate(&self) -> Result<(), ModelError> {
        let p = self.parameter();
        if p.is_finite() && p > 0.0 {
            Ok(())
        } else {
            Err(ModelError::Window(p))
        }
    }

    /// The side length (box) or radius (ball).
    pub fn parameter(&self) -> f64 {
        match self {
            Window::Box { side } => *side,
            Window::Ball { radius } => *radius,
        }
    }

    pub fn volume(&self, d: u32) -> f64 {
        match self {
            Window::Box { side } => side.powi(d as i32),
            Window::Ball { radius } => unit_ball_volume(d) * radius.powi(d as i32),
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut out = 1.0;
    for i in 0..k {
        out *= (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Coefficients `g_0..g_d` with `|W ⊕ B(0, r)| = Σ_k g_k r^k`.
///
/// Ball windows expand `v_d (ρ + r)^d`; box windows have the closed forms
/// `L² + 4Lr + πr²` (d = 2) and `L³ + 6L²r + 3πLr² + (4π/3)r³` (d = 3).
/// Box windows in other dimensions are rejected rather than approximated.
pub fn steiner_coefficients(window: Window, d: u32) -> Result<Vec<f64>, ModelError> {
    if d < 2 {
        return Err(ModelError::Dimension(d));
    }
    window.validate()?;
    match window {
        Window::Ball { radius } => {
            let vd = unit_ball_volume(d);
            Ok((0..=d)
                .map(|k| vd * binomial(d, k) * radius.powi((d - k) as i32))
                .collect())
        }
        Window::Box { side } => match d {
            2 => Ok(vec![side * side, 4.0 * side, PI]),
            3 => Ok(vec![
                side.powi(3),
                6.0 * side * side,
                3.0 * PI * side,
                4.0 * PI / 3.0,
            ]),
            other => Err(ModelError::BoxDimension(other)),
        },
    }
}

/// Volume of the dilated window `W ⊕ B(0, r)`: the region where a center of
/// a radius-`r` ball may sit and still meet the window.
pub fn steiner_volume(window: Window, d: u32, r: f64) -> Result<f64, ModelError> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(ModelError::Threshold(r));
    }
    let coeffs = steiner_coefficients(window, d)?;
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(k, g)| g * r.powi(k as i32))
        .sum())
}

/// `lambda · E|W ⊕ B(0, R)|`: the expected number of process balls meeting
/// the window. This is the Poisson mean used by touching-mode sampling.
pub fn tilt_integral(
    dist: &RadiusDistribution,
    window: Window,
    d: u32,
    lambda: f64,
) -> Result<f64, ModelError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(ModelError::Intensity(lambda));
    }
    let coeffs = steiner_coefficients(window, d)?;
    let mut total = 0.0;
    for (k, g) in coeffs.iter().enumerate() {
        match dist.moment(k as f64) {
            Moment::Finite(m) => total += g * m,
            Moment::Infinite => return Err(ModelError::InfiniteMoment { power: k as f64 }),
        }
    }
    Ok(lambda * total)
}

/// Validated model parameters: dimension, intensity, and radius law.
///
/// Construction rejects radius laws with `E(R^d)` infinite: such a process
/// fills all of space almost surely, so there is nothing to observe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelParams")]
pub struct ModelParams {
    dimension: u32,
    intensity: f64,
    radius: RadiusDistribution,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelParams {
    dimension: u32,
    intensity: f64,
    radius: RadiusDistribution,
}

impl TryFrom<RawModelParams> for ModelParams {
    type Error = ModelError;

    fn try_from(raw: RawModelParams) -> Result<Self, ModelError> {
        ModelParams::new(raw.dimension, raw.intensity, raw.radius)
    }
}

impl ModelParams {
    pub fn new(
        dimension: u32,
        intensity: f64,
        radius: RadiusDistribution,
    ) -> Result<Self, ModelError> {
        if dimension < 2 {
            return Err(ModelError::Dimension(dimension));
        }
        if !(intensity.is_finite() && intensity > 0.0) {
            return Err(ModelError::Intensity(intensity));
        }
        radius.validate()?;
        if !radius.moment(dimension as f64).is_finite() {
            return Err(ModelError::SpaceFilling { dimension });
        }
        Ok(ModelParams { dimension, intensity, radius })
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn radius(&self) -> &RadiusDistribution {
        self.radius_law()
    }

    fn radius_law(&self) -> &RadiusDistribution {
        &self.radius
    }

    /// Same model at a different intensity.
    pub fn with_intensity(&self, intensity: f64) -> Result<Self, ModelError> {
        ModelParams::new(self.dimension, intensity, self.radius.clone())
    }

    /// Whether `E(R^{2d})` is finite, i.e. the ball volume has a finite
    /// second moment. Exponential decay of chain lengths is only guaranteed
    /// in that regime, so experiment outputs carry this flag.
    pub fn volume_second_moment_finite(&self) -> bool {
        self.radius.moment(2.0 * self.dimension as f64).is_finite()
    }
}
