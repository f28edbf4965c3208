//! Both sides of the Hermite-Hadamard-type bounds for (g, φ_h)-convex
//! dominated functions.
//!
//! With m = (φ(a)+φ(b))/2, W = φ(b) − φ(a) and M(u) = (1/W)∫_{φ(a)}^{φ(b)} u:
//!
//! * midpoint: |M(f) − f(m)/(2h(1/2))| ≤ M(g) − g(m)/(2h(1/2))
//! * endpoint: |(f(φ(a)) + f(φ(b)))∫₀¹h − M(f)| ≤ (g(φ(a)) + g(φ(b)))∫₀¹h − M(g)

use serde::Serialize;
use thiserror::Error;

use crate::convexity::{FunctionPair, Tolerance};
use crate::expr::{EvalError, Expr};
use crate::geometry::{AffineMap, Mapping};
use crate::kernels::{Kernel, KernelError, KernelIntegral, KernelKind};
use crate::quadrature::{integrate, QuadError};
use crate::serde_ext::ext_real;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HHOptions {
    /// Total quadrature budget for one report; each side gets a quarter.
    pub quad_tol: f64,
    pub tolerance: Tolerance,
}

impl Default for HHOptions {
    fn default() -> Self {
        HHOptions {
            quad_tol: DEFAULT_QUAD_TOL,
            tolerance: Tolerance::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HadamardError {
    #[error("phi is constant on the interval (phi(a) = phi(b) = {image}); the bounds divide by phi(b) - phi(a)")]
    Degenerate { image: f64 },
    #[error("integral of {role} failed: {source}")]
    Quadrature { role: &'static str, source: QuadError },
    #[error("{role} failed to evaluate at {at}: {source}")]
    Eval {
        role: &'static str,
        at: f64,
        source: EvalError,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Midpoint,
    Endpoint,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Midpoint => "midpoint",
            BoundKind::Endpoint => "endpoint",
        }
    }
}

/// The built-in kernels as named special cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kernel", content = "s", rename_all = "snake_case")]
pub enum Corollary {
    Linear,
    Power(f64),
    Reciprocal,
    One,
}

impl Corollary {
    pub fn kernel_kind(self) -> KernelKind {
        match self {
            Corollary::Linear => KernelKind::Linear,
            Corollary::Power(s) => KernelKind::Power(s),
            Corollary::Reciprocal => KernelKind::Reciprocal,
            Corollary::One => KernelKind::One,
        }
    }

    /// Stable tag used in report labels.
    pub fn tag(self) -> String {
        match self {
            Corollary::Linear => "linear".to_string(),
            Corollary::Power(s) => format!("power(s={s})"),
            Corollary::Reciprocal => "reciprocal".to_string(),
            Corollary::One => "one".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputsEcho {
    pub f: String,
    pub g: String,
    pub h: String,
    pub phi: String,
    pub interval: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HHReport {
    pub bound: BoundKind,
    /// Set when produced through [`corollary_report`].
    pub corollary: Option<String>,
    /// 1/(2h(1/2)) for the midpoint bound, ∫₀¹h for the endpoint bound.
    #[serde(serialize_with = "ext_real")]
    pub coefficient: f64,
    #[serde(serialize_with = "ext_real")]
    pub lhs: f64,
    #[serde(serialize_with = "ext_real")]
    pub rhs: f64,
    /// rhs − lhs; +∞ when the bound is vacuous.
    #[serde(serialize_with = "ext_real")]
    pub margin: f64,
    pub holds: bool,
    /// The right side is +∞ and the bound carries no information.
    pub vacuous: bool,
    pub mean_f: f64,
    pub mean_g: f64,
    /// Combined quadrature error of the two means.
    pub quad_error: f64,
    pub warnings: Vec<String>,
    pub inputs: InputsEcho,
}

struct Means {
    f: f64,
    g: f64,
    error: f64,
}

fn eval_at(e: &Expr, role: &'static str, at: f64) -> Result<f64, HadamardError> {
    e.eval(at).map_err(|source| HadamardError::Eval { role, at, source })
}

fn means(pair: &FunctionPair, phi: &AffineMap, quad_tol: f64) -> Result<Means, HadamardError> {
    let width = phi.image_width();
    if width == 0.0 {
        return Err(HadamardError::Degenerate {
            image: phi.image_a(),
        });
    }
    let (lo, hi) = if width > 0.0 {
        (phi.image_a(), phi.image_b())
    } else {
        (phi.image_b(), phi.image_a())
    };
    let side_tol = quad_tol / 4.0;
    let integral = |e: &Expr, role: &'static str| {
        integrate(|x| e.eval(x), lo, hi, side_tol)
            .map_err(|source| HadamardError::Quadrature { role, source })
    };
    let (rf, rg) = rayon::join(|| integral(&pair.f, "f"), || integral(&pair.g, "g"));
    let (rf, rg) = (rf?, rg?);
    let span = hi - lo;
    Ok(Means {
        f: rf.value / span,
        g: rg.value / span,
        error: (rf.error_estimate + rg.error_estimate) / span,
    })
}

fn echo(pair: &FunctionPair, h: &Kernel, phi: &AffineMap) -> InputsEcho {
    let d = phi.domain();
    InputsEcho {
        f: pair.f.describe(),
        g: pair.g.describe(),
        h: h.label(),
        phi: Mapping::describe(phi),
        interval: [d.a(), d.b()],
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    bound: BoundKind,
    coefficient: f64,
    lhs: f64,
    rhs: f64,
    means: &Means,
    tol: &Tolerance,
    mut warnings: Vec<String>,
    inputs: InputsEcho,
) -> HHReport {
    let vacuous = rhs == f64::INFINITY;
    let margin = if vacuous { f64::INFINITY } else { rhs - lhs };
    let allowance = tol.allowance(lhs.abs().max(rhs.abs()));
    let holds = vacuous || margin >= -allowance;
    if rhs < -allowance {
        warnings.push(format!(
            "right side {rhs} is negative: g does not look phi_h-convex on the image of phi"
        ));
    }
    if vacuous {
        warnings.push("kernel integral diverges: the endpoint bound is vacuous".to_string());
    }
    HHReport {
        bound,
        corollary: None,
        coefficient,
        lhs,
        rhs,
        margin,
        holds,
        vacuous,
        mean_f: means.f,
        mean_g: means.g,
        quad_error: means.error,
        warnings,
        inputs,
    }
}

/// |M(f) − c·f(m)| against M(g) − c·g(m) with c = 1/(2h(1/2)).
pub fn hh_midpoint_report(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &AffineMap,
    opts: &HHOptions,
) -> Result<HHReport, HadamardError> {
    let means = means(pair, phi, opts.quad_tol)?;
    let mid = 0.5 * (phi.image_a() + phi.image_b());
    let c = h.midpoint_coefficient();
    let fm = eval_at(&pair.f, "f", mid)?;
    let gm = eval_at(&pair.g, "g", mid)?;
    let lhs = (means.f - c * fm).abs();
    let rhs = means.g - c * gm;
    Ok(finish(
        BoundKind::Midpoint,
        c,
        lhs,
        rhs,
        &means,
        &opts.tolerance,
        Vec::new(),
        echo(pair, h, phi),
    ))
}

// s·I with the convention 0·∞ = 0.
fn scale_integral(s: f64, integral: &KernelIntegral) -> f64 {
    match integral {
        KernelIntegral::Finite { value, .. } => s * value,
        KernelIntegral::Infinite if s == 0.0 => 0.0,
        KernelIntegral::Infinite => s * f64::INFINITY,
    }
}

/// |(f(φ(a)) + f(φ(b)))∫h − M(f)| against (g(φ(a)) + g(φ(b)))∫h − M(g).
pub fn hh_endpoint_report(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &AffineMap,
    opts: &HHOptions,
) -> Result<HHReport, HadamardError> {
    h.check_symmetry()?;
    let means = means(pair, phi, opts.quad_tol)?;
    let (pa, pb) = (phi.image_a(), phi.image_b());
    let f_sum = eval_at(&pair.f, "f", pa)? + eval_at(&pair.f, "f", pb)?;
    let g_sum = eval_at(&pair.g, "g", pa)? + eval_at(&pair.g, "g", pb)?;
    let integral = h.integral();
    let lhs = (scale_integral(f_sum, &integral) - means.f).abs();
    let rhs = scale_integral(g_sum, &integral) - means.g;
    let mut warnings = Vec::new();
    if let KernelIntegral::Finite { error_estimate, .. } = integral {
        if error_estimate > 0.0 {
            warnings.push(format!("kernel integral carries error estimate {error_estimate:e}"));
        }
    }
    Ok(finish(
        BoundKind::Endpoint,
        integral.value(),
        lhs,
        rhs,
        &means,
        &opts.tolerance,
        warnings,
        echo(pair, h, phi),
    ))
}

/// The bounds for one built-in kernel. The endpoint bound is omitted when
/// the kernel integral diverges, leaving a single midpoint report for
/// h(t) = 1/t.
pub fn corollary_report(
    pair: &FunctionPair,
    phi: &AffineMap,
    which: Corollary,
    opts: &HHOptions,
) -> Result<Vec<HHReport>, HadamardError> {
    let h = Kernel::new(which.kernel_kind())?;
    let mut reports = vec![hh_midpoint_report(pair, &h, phi, opts)?];
    if h.integral().is_finite() {
        reports.push(hh_endpoint_report(pair, &h, phi, opts)?);
    }
    for r in &mut reports {
        r.corollary = Some(which.tag());
    }
    Ok(reports)
}
