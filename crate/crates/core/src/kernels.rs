//! The kernel h: (0,1) → (0,∞) and the constants derived from it.

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::quadrature::{integrate_open01, OpenIntegral, QuadError};

/// Number of points in the positivity probe for custom kernels.
pub const PROBE_POINTS: usize = 4097;

/// Absolute tolerance for numerically integrated custom kernels.
pub const KERNEL_QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// h(t) = t
    Linear,
    /// h(t) = t^s with 0 < s < 1
    Power(f64),
    /// h(t) = 1/t
    Reciprocal,
    /// h(t) = 1
    One,
    /// User-supplied expression in t.
    Custom(Expr),
}

/// ∫₀¹ h(t) dt as an extended real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelIntegral {
    Finite { value: f64, error_estimate: f64 },
    Infinite,
}

impl KernelIntegral {
    pub fn value(&self) -> f64 {
        match self {
            KernelIntegral::Finite { value, .. } => *value,
            KernelIntegral::Infinite => f64::INFINITY,
        }
    }

    pub fn error_estimate(&self) -> f64 {
        match self {
            KernelIntegral::Finite { error_estimate, .. } => *error_estimate,
            KernelIntegral::Infinite => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, KernelIntegral::Finite { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("power kernel exponent must lie in (0,1), got {s}")]
    Exponent { s: f64 },
    #[error("custom kernel must be written in the variable t, found {found}")]
    Variable { found: char },
    #[error("kernel is not positive: h({t}) = {value}")]
    Nonpositive { t: f64, value: f64 },
    #[error("kernel failed to evaluate at t = {t}: {source}")]
    Domain { t: f64, source: EvalError },
    #[error("kernel argument {t} is outside the open interval (0,1)")]
    OutsideOpenUnit { t: f64 },
    #[error("kernel integral failed: {0}")]
    Quadrature(#[from] QuadError),
    #[error("kernel integral is not symmetric: ∫h(t) = {forward}, ∫h(1-t) = {reflected}")]
    Asymmetric { forward: f64, reflected: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    kind: KernelKind,
    half_value: f64,
    midpoint_coefficient: f64,
    integral: KernelIntegral,
}

/// Chebyshev points of the first kind mapped into (0,1); never touch 0 or 1.
pub fn chebyshev_probe(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| 0.5 - 0.5 * (PI * (2 * k + 1) as f64 / (2 * n) as f64).cos())
}

impl Kernel {
    pub fn new(kind: KernelKind) -> Result<Kernel, KernelError> {
        match kind {
            KernelKind::Linear => Ok(Kernel {
                kind,
                half_value: 0.5,
                midpoint_coefficient: 1.0,
                integral: KernelIntegral::Finite {
                    value: 0.5,
                    error_estimate: 0.0,
                },
            }),
            KernelKind::Power(s) => {
                if !(s > 0.0 && s < 1.0) {
                    return Err(KernelError::Exponent { s });
                }
                Ok(Kernel {
                    kind,
                    half_value: 0.5f64.powf(s),
                    midpoint_coefficient: 2f64.powf(s - 1.0),
                    integral: KernelIntegral::Finite {
                        value: 1.0 / (s + 1.0),
                        error_estimate: 0.0,
                    },
                })
            }
            KernelKind::Reciprocal => Ok(Kernel {
                kind,
                half_value: 2.0,
                midpoint_coefficient: 0.25,
                integral: KernelIntegral::Infinite,
            }),
            KernelKind::One => Ok(Kernel {
                kind,
                half_value: 1.0,
                midpoint_coefficient: 0.5,
                integral: KernelIntegral::Finite {
                    value: 1.0,
                    error_estimate: 0.0,
                },
            }),
            KernelKind::Custom(expr) => Kernel::custom(expr),
        }
    }

    fn custom(expr: Expr) -> Result<Kernel, KernelError> {
        if let Some(v) = expr.variable() {
            if v != 't' {
                return Err(KernelError::Variable { found: v });
            }
        }
        let eval = |t: f64| expr.eval(t).map_err(|source| KernelError::Domain { t, source });
        for t in chebyshev_probe(PROBE_POINTS) {
            let value = eval(t)?;
            if value <= 0.0 {
                return Err(KernelError::Nonpositive { t, value });
            }
        }
        let half_value = eval(0.5)?;
        if half_value <= 0.0 {
            return Err(KernelError::Nonpositive { t: 0.5, value: half_value });
        }
        let integral = match integrate_open01(|t| expr.eval(t), KERNEL_QUAD_TOL)? {
            OpenIntegral::Converged(r) => KernelIntegral::Finite {
                value: r.value,
                error_estimate: r.error_estimate,
            },
            OpenIntegral::Divergent { .. } => KernelIntegral::Infinite,
        };
        Ok(Kernel {
            kind: KernelKind::Custom(expr),
            half_value,
            midpoint_coefficient: 1.0 / (2.0 * half_value),
            integral,
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.kind, KernelKind::Custom(_))
    }

    /// h(1/2).
    pub fn half_value(&self) -> f64 {
        self.half_value
    }

    /// 1 / (2 h(1/2)), the weight on the midpoint value in the midpoint bound.
    pub fn midpoint_coefficient(&self) -> f64 {
        self.midpoint_coefficient
    }

    pub fn integral(&self) -> KernelIntegral {
        self.integral
    }

    /// h(t) for t strictly inside (0,1).
    pub fn value(&self, t: f64) -> Result<f64, KernelError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(KernelError::OutsideOpenUnit { t });
        }
        match &self.kind {
            KernelKind::Linear => Ok(t),
            KernelKind::Power(s) => Ok(t.powf(*s)),
            KernelKind::Reciprocal => Ok(1.0 / t),
            KernelKind::One => Ok(1.0),
            KernelKind::Custom(expr) => {
                let value = expr.eval(t).map_err(|source| KernelError::Domain { t, source })?;
                if value <= 0.0 {
                    return Err(KernelError::Nonpositive { t, value });
                }
                Ok(value)
            }
        }
    }

    /// Checks ∫₀¹h(t)dt = ∫₀¹h(1−t)dt within the combined error estimates.
    /// Built-in kernels pass trivially.
    pub fn check_symmetry(&self) -> Result<(), KernelError> {
        let KernelKind::Custom(expr) = &self.kind else {
            return Ok(());
        };
        let reflected = integrate_open01(|t| expr.eval(1.0 - t), KERNEL_QUAD_TOL)?;
        match (self.integral, reflected) {
            (KernelIntegral::Infinite, OpenIntegral::Divergent { .. }) => Ok(()),
            (KernelIntegral::Finite { value, error_estimate }, OpenIntegral::Converged(r)) => {
                let allowed = error_estimate + r.error_estimate + 4.0 * KERNEL_QUAD_TOL
                    + 1e-12 * value.abs();
                if (value - r.value).abs() <= allowed {
                    Ok(())
                } else {
                    Err(KernelError::Asymmetric {
                        forward: value,
                        reflected: r.value,
                    })
                }
            }
            (forward, reflected) => Err(KernelError::Asymmetric {
                forward: forward.value(),
                reflected: match reflected {
                    OpenIntegral::Converged(r) => r.value,
                    OpenIntegral::Divergent { .. } => f64::INFINITY,
                },
            }),
        }
    }

    /// Short name used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            KernelKind::Linear => "t".to_string(),
            KernelKind::Power(s) => format!("t^{s}"),
            KernelKind::Reciprocal => "1/t".to_string(),
            KernelKind::One => "1".to_string(),
            KernelKind::Custom(expr) => expr.describe(),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h(t) = {}", self.label())
    }
}
