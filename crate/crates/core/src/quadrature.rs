//! Adaptive Gauss-Kronrod quadrature.
//!
//! Each panel is integrated with the 15-point Kronrod rule and its embedded
//! 7-point Gauss rule; their difference gives the panel error estimate.
//! The panel with the largest estimate is bisected until the summed
//! estimate falls under the tolerance. The rule is open, so panel endpoints
//! are never sampled, which lets the same routine handle integrands that
//! fault at 0 or 1 on the open unit interval.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;

pub const DEFAULT_MAX_PANELS: usize = 1_000_000;

/// Cut-offs for the improper-integral ladder on (0,1).
pub const OPEN01_LADDER: [f64; 6] = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12];

/// Relative change at the last ladder step above which the integral is
/// declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 0.01;

// Kronrod abscissae on [-1, 1], descending; odd indices are Gauss nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("invalid integration interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("tolerance must be positive and finite, got {tol}")]
    InvalidTolerance { tol: f64 },
    #[error("panel budget of {panels} exhausted with error estimate {error_estimate:e}")]
    Budget {
        panels: usize,
        value: f64,
        error_estimate: f64,
    },
    #[error("integrand failed at x = {x}: {source}")]
    Eval { x: f64, source: EvalError },
}

/// Outcome of integrating over the open unit interval.
#[derive(Debug, Clone, PartialEq)]
pub enum OpenIntegral {
    Converged(QuadResult),
    /// The ε-ladder failed to stabilize. Holds (ε, ∫_ε^{1−ε}) for each rung.
    Divergent { ladder: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    resabs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    // Max-heap on error; among equal errors the leftmost panel wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod_panel<F>(f: &F, a: f64, b: f64) -> Result<Panel, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| f(x).map_err(|source| QuadError::Eval { x, source });

    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = kronrod.abs();
    let mut fv = [(0.0, 0.0); 7];
    for (j, (xk, wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * xk;
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv[j] = (f1, f2);
        kronrod += wk * (f1 + f2);
        resabs += wk * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * kronrod;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        resasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }

    let value = kronrod * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    let roundoff = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && roundoff > error {
        error = roundoff;
    }
    Ok(Panel {
        a,
        b,
        value,
        error,
        resabs,
    })
}

/// Integrates `f` over [a, b] to absolute tolerance `tol` with the default
/// panel budget.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    integrate_with_budget(f, a, b, tol, DEFAULT_MAX_PANELS)
}

pub fn integrate_with_budget<F>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_panels: usize,
) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(QuadError::InvalidInterval { a, b });
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(QuadError::InvalidTolerance { tol });
    }

    let first = kronrod_panel(&f, a, b)?;
    let mut total_error = first.error;
    let mut total_resabs = first.resabs;
    let mut heap = BinaryHeap::from([first]);
    // Panels too narrow to bisect further; they keep contributing their
    // value and error but leave the work queue.
    let mut frozen: Vec<Panel> = Vec::new();
    let mut panels = 1usize;

    loop {
        let roundoff_floor = 50.0 * f64::EPSILON * total_resabs;
        if total_error <= tol || total_error <= roundoff_floor {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            frozen.push(worst);
            continue;
        }
        if panels >= max_panels {
            heap.push(worst);
            let (value, error_estimate) = summarize(heap.iter().chain(frozen.iter()));
            return Err(QuadError::Budget {
                panels,
                value,
                error_estimate,
            });
        }
        let left = kronrod_panel(&f, worst.a, mid)?;
        let right = kronrod_panel(&f, mid, worst.b)?;
        total_error += left.error + right.error - worst.error;
        total_resabs += left.resabs + right.resabs - worst.resabs;
        heap.push(left);
        heap.push(right);
        panels += 1;
    }

    let (value, error_estimate) = summarize(heap.iter().chain(frozen.iter()));
    if error_estimate > tol && heap.is_empty() {
        return Err(QuadError::Budget {
            panels,
            value,
            error_estimate,
        });
    }
    Ok(QuadResult {
        value,
        error_estimate,
        subdivisions: panels,
    })
}

// Sums panel contributions left to right so the result does not depend on
// heap layout.
fn summarize<'a>(panels: impl Iterator<Item = &'a Panel>) -> (f64, f64) {
    let mut all: Vec<&Panel> = panels.collect();
    all.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = all.iter().map(|p| p.value).sum();
    let error = all.iter().map(|p| p.error).sum();
    (value, error)
}

/// Integrates `f` over the open interval (0,1).
///
/// The integral over [ε, 1−ε] is computed for each rung of
/// [`OPEN01_LADDER`]. When the relative change at the last rung exceeds
/// [`DIVERGENCE_THRESHOLD`] the integral is reported as divergent. Otherwise
/// the full integral is computed directly (the open rule never samples 0 or
/// 1); if that exhausts its budget, the ladder is Aitken-extrapolated.
pub fn integrate_open01<F>(f: F, tol: f64) -> Result<OpenIntegral, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let mut ladder = Vec::with_capacity(OPEN01_LADDER.len());
    let mut last_error = 0.0;
    for eps in OPEN01_LADDER {
        let r = integrate(&f, eps, 1.0 - eps, tol)?;
        ladder.push((eps, r.value));
        last_error = r.error_estimate;
    }
    let n = ladder.len();
    let (prev, last) = (ladder[n - 2].1, ladder[n - 1].1);
    let change = (last - prev).abs();
    if change > DIVERGENCE_THRESHOLD * last.abs() {
        return Ok(OpenIntegral::Divergent { ladder });
    }

    match integrate(&f, 0.0, 1.0, tol) {
        Ok(r) => Ok(OpenIntegral::Converged(r)),
        Err(QuadError::Budget { panels, .. }) => {
            let (i0, i1, i2) = (ladder[n - 3].1, ladder[n - 2].1, ladder[n - 1].1);
            let denom = (i2 - i1) - (i1 - i0);
            let value = if denom != 0.0 {
                i2 - (i2 - i1) * (i2 - i1) / denom
            } else {
                i2
            };
            Ok(OpenIntegral::Converged(QuadResult {
                value,
                error_estimate: (value - i2).abs() + change + last_error,
                subdivisions: panels,
            }))
        }
        Err(e) => Err(e),
    }
}
