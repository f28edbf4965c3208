//! Pointwise convexity defects and their sampled certification.
//!
//! A defect is the right side minus the left side of a convexity-type
//! inequality at one sample (x, y, t); it is nonnegative exactly when the
//! inequality holds there. The dominance gap of a pair (f, g) is
//! `defect(g) − |defect(f)|`.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::geometry::{GeometryError, Interval, Mapping};
use crate::kernels::{Kernel, KernelError};
use crate::serde_ext::ext_real;

pub const DEFAULT_T_CLAMP: f64 = 1e-6;
pub const DEFAULT_ATOL: f64 = 1e-9;
pub const DEFAULT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            atol: DEFAULT_ATOL,
            rtol: DEFAULT_RTOL,
        }
    }
}

impl Tolerance {
    /// Amount by which a gap may dip below zero before it counts as a
    /// violation, for sides of magnitude `scale`.
    pub fn allowance(&self, scale: f64) -> f64 {
        self.atol + self.rtol * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Grid { nx: usize, ny: usize, nt: usize },
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("sample counts must be at least 1")]
    EmptyPlan,
    #[error("t clamp must lie in (0, 0.5), got {0}")]
    TClamp(f64),
    #[error("tolerances must be finite and nonnegative (atol = {atol}, rtol = {rtol})")]
    Tolerance { atol: f64, rtol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePlan {
    pub strategy: Strategy,
    pub t_clamp: f64,
    pub tolerance: Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triple {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Triple {
    pub fn new(x: f64, y: f64, t: f64) -> Triple {
        Triple { x, y, t }
    }

    /// Lexicographic order on (x, y, t).
    pub fn lex_cmp(&self, other: &Triple) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.t.total_cmp(&other.t))
    }
}

impl SamplePlan {
    pub fn grid(nx: usize, ny: usize, nt: usize) -> SamplePlan {
        SamplePlan {
            strategy: Strategy::Grid { nx, ny, nt },
            t_clamp: DEFAULT_T_CLAMP,
            tolerance: Tolerance::default(),
        }
    }

    pub fn random(count: usize, seed: u64) -> SamplePlan {
        SamplePlan {
            strategy: Strategy::Random { count, seed },
            t_clamp: DEFAULT_T_CLAMP,
            tolerance: Tolerance::default(),
        }
    }

    pub fn with_t_clamp(mut self, t_clamp: f64) -> SamplePlan {
        self.t_clamp = t_clamp;
        self
    }

    pub fn with_tolerance(mut self, tolerance: Tolerance) -> SamplePlan {
        self.tolerance = tolerance;
        self
    }

    /// Every violated constraint, in a fixed order.
    pub fn problems(&self) -> Vec<PlanError> {
        let mut out = Vec::new();
        let empty = match self.strategy {
            Strategy::Grid { nx, ny, nt } => nx == 0 || ny == 0 || nt == 0,
            Strategy::Random { count, .. } => count == 0,
        };
        if empty {
            out.push(PlanError::EmptyPlan);
        }
        if !(self.t_clamp > 0.0 && self.t_clamp < 0.5) {
            out.push(PlanError::TClamp(self.t_clamp));
        }
        let Tolerance { atol, rtol } = self.tolerance;
        if !(atol >= 0.0 && atol.is_finite() && rtol >= 0.0 && rtol.is_finite()) {
            out.push(PlanError::Tolerance { atol, rtol });
        }
        out
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        match self.problems().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Clamps t into [ε_t, 1 − ε_t].
    pub fn clamp_t(&self, t: f64) -> f64 {
        t.clamp(self.t_clamp, 1.0 - self.t_clamp)
    }

    /// The sample triples in their canonical order.
    pub fn triples(&self, interval: &Interval) -> Vec<Triple> {
        match self.strategy {
            Strategy::Grid { nx, ny, nt } => {
                let xs = uniform_grid(interval, nx);
                let ys = uniform_grid(interval, ny);
                let ts = t_grid(nt, self.t_clamp);
                let mut out = Vec::with_capacity(xs.len() * ys.len() * ts.len());
                for &x in &xs {
                    for &y in &ys {
                        for &t in &ts {
                            out.push(Triple { x, y, t });
                        }
                    }
                }
                out
            }
            Strategy::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (a, b) = (interval.a(), interval.b());
                let (lo, hi) = (self.t_clamp, 1.0 - self.t_clamp);
                (0..count)
                    .map(|_| Triple {
                        x: rng.gen_range(a..=b),
                        y: rng.gen_range(a..=b),
                        t: rng.gen_range(lo..=hi),
                    })
                    .collect()
            }
        }
    }
}

/// n uniformly spaced points including both endpoints; the midpoint if n = 1.
pub fn uniform_grid(interval: &Interval, n: usize) -> Vec<f64> {
    let (a, b) = (interval.a(), interval.b());
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * (i as f64 / (n - 1) as f64)
                }
            })
            .collect(),
    }
}

/// Chebyshev-Lobatto points in [ε, 1−ε] plus t = 1/2, sorted and distinct.
pub fn t_grid(n: usize, eps: f64) -> Vec<f64> {
    let half_width = 0.5 - eps;
    let mut ts: Vec<f64> = match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n)
            .map(|k| {
                if k == 0 {
                    return eps;
                }
                if k == n - 1 {
                    return 1.0 - eps;
                }
                if 2 * k == n - 1 {
                    return 0.5;
                }
                let c = (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
                0.5 - half_width * c
            })
            .collect(),
    };
    if n > 0 {
        ts.push(0.5);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Failure at a single evaluation point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Map(#[from] GeometryError),
    #[error("{role} failed to evaluate at {at}: {source}")]
    Eval {
        role: &'static str,
        at: f64,
        source: EvalError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexityError {
    #[error("evaluation failed at (x, y, t) = ({x}, {y}, {t}): {source}")]
    At {
        x: f64,
        y: f64,
        t: f64,
        source: PointError,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("dominator g is not phi_h-convex on the samples (worst defect {} at x = {}, y = {}, t = {})",
        .0.worst_gap, .0.witness.x, .0.witness.y, .0.witness.t)]
    Precondition(Box<CheckReport>),
}

/// The two sides of h(t)f(u) + h(1−t)f(v) ≥ f(tu + (1−t)v).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectParts {
    /// f(tu + (1−t)v)
    pub lhs: f64,
    /// h(t)f(u) + h(1−t)f(v)
    pub rhs: f64,
    /// Smallest of the three sampled function values.
    pub min_value: f64,
}

impl DefectParts {
    pub fn defect(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn scale(&self) -> f64 {
        self.lhs.abs().max(self.rhs.abs())
    }
}

fn eval_role(f: &Expr, role: &'static str, at: f64) -> Result<f64, PointError> {
    f.eval(at).map_err(|source| PointError::Eval { role, at, source })
}

fn parts_at(
    f: &Expr,
    role: &'static str,
    h: &Kernel,
    u: f64,
    v: f64,
    t: f64,
) -> Result<DefectParts, PointError> {
    let ht = h.value(t)?;
    let hs = h.value(1.0 - t)?;
    let fu = eval_role(f, role, u)?;
    let fv = eval_role(f, role, v)?;
    let fm = eval_role(f, role, t * u + (1.0 - t) * v)?;
    Ok(DefectParts {
        lhs: fm,
        rhs: ht * fu + hs * fv,
        min_value: fu.min(fv).min(fm),
    })
}

/// h(α)f(x) + h(1−α)f(y) − f(αx + (1−α)y).
pub fn h_convex_defect(f: &Expr, h: &Kernel, x: f64, y: f64, alpha: f64) -> Result<f64, PointError> {
    Ok(parts_at(f, "f", h, x, y, alpha)?.defect())
}

/// The φ_h-convexity defect sides of `f` at (x, y, t).
pub fn phi_h_parts<M: Mapping + ?Sized>(
    f: &Expr,
    role: &'static str,
    h: &Kernel,
    phi: &M,
    x: f64,
    y: f64,
    t: f64,
) -> Result<DefectParts, PointError> {
    let u = phi.apply(x)?;
    let v = phi.apply(y)?;
    parts_at(f, role, h, u, v, t)
}

/// h(t)f(φ(x)) + h(1−t)f(φ(y)) − f(tφ(x) + (1−t)φ(y)).
pub fn phi_h_defect<M: Mapping + ?Sized>(
    f: &Expr,
    h: &Kernel,
    phi: &M,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64, PointError> {
    Ok(phi_h_parts(f, "f", h, phi, x, y, t)?.defect())
}

/// A candidate `f` and its dominator `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionPair {
    pub f: Expr,
    pub g: Expr,
}

impl FunctionPair {
    pub fn new(f: Expr, g: Expr) -> FunctionPair {
        FunctionPair { f, g }
    }

    /// The same pair with both functions multiplied by `c`.
    pub fn scaled(&self, c: f64) -> FunctionPair {
        let c = Expr::constant(c);
        FunctionPair {
            f: Expr::mul(&c, &self.f),
            g: Expr::mul(&c, &self.g),
        }
    }
}

/// Everything computed for one dominance sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceParts {
    pub f: DefectParts,
    pub g: DefectParts,
}

impl DominanceParts {
    /// |defect(f)|
    pub fn lhs_abs(&self) -> f64 {
        self.f.defect().abs()
    }

    /// defect(g)
    pub fn rhs(&self) -> f64 {
        self.g.defect()
    }

    pub fn gap(&self) -> f64 {
        self.rhs() - self.lhs_abs()
    }

    pub fn scale(&self) -> f64 {
        self.f.scale().max(self.g.scale())
    }
}

pub fn dominance_parts<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    x: f64,
    y: f64,
    t: f64,
) -> Result<DominanceParts, PointError> {
    Ok(DominanceParts {
        f: phi_h_parts(&pair.f, "f", h, phi, x, y, t)?,
        g: phi_h_parts(&pair.g, "g", h, phi, x, y, t)?,
    })
}

/// defect(g) − |defect(f)|; negative exactly where dominance fails.
pub fn dominance_gap<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64, PointError> {
    Ok(dominance_parts(pair, h, phi, x, y, t)?.gap())
}

/// One evaluated sample of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleGap {
    pub triple: Triple,
    pub gap: f64,
    /// Left side (f(mid) for a convexity check, |defect(f)| for dominance).
    pub lhs: f64,
    /// Right side (weighted endpoint values, or defect(g)).
    pub rhs: f64,
    pub scale: f64,
    #[serde(skip)]
    pub min_f: f64,
    #[serde(skip)]
    pub min_g: f64,
}

impl SampleGap {
    pub fn violates(&self, tol: &Tolerance) -> bool {
        self.gap < -tol.allowance(self.scale)
    }
}

fn sweep<F>(triples: &[Triple], eval: F) -> Result<Vec<SampleGap>, ConvexityError>
where
    F: Fn(&Triple) -> Result<SampleGap, PointError> + Sync,
{
    let results: Vec<Result<SampleGap, PointError>> = triples.par_iter().map(&eval).collect();
    results
        .into_iter()
        .zip(triples)
        .map(|(r, p)| {
            r.map_err(|source| ConvexityError::At {
                x: p.x,
                y: p.y,
                t: p.t,
                source,
            })
        })
        .collect()
}

/// Evaluates the φ_h-convexity defect of `f` at every plan sample.
pub fn phi_h_samples<M: Mapping + ?Sized>(
    f: &Expr,
    h: &Kernel,
    phi: &M,
    interval: &Interval,
    plan: &SamplePlan,
) -> Result<Vec<SampleGap>, ConvexityError> {
    plan.validate()?;
    let triples = plan.triples(interval);
    phi_h_samples_at(f, h, phi, &triples)
}

fn phi_h_samples_at<M: Mapping + ?Sized>(
    f: &Expr,
    h: &Kernel,
    phi: &M,
    triples: &[Triple],
) -> Result<Vec<SampleGap>, ConvexityError> {
    sweep(triples, |p| {
        let parts = phi_h_parts(f, "f", h, phi, p.x, p.y, p.t)?;
        Ok(SampleGap {
            triple: *p,
            gap: parts.defect(),
            lhs: parts.lhs,
            rhs: parts.rhs,
            scale: parts.scale(),
            min_f: parts.min_value,
            min_g: f64::INFINITY,
        })
    })
}

/// Evaluates the dominance gap at every plan sample.
pub fn dominance_samples<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    interval: &Interval,
    plan: &SamplePlan,
) -> Result<Vec<SampleGap>, ConvexityError> {
    plan.validate()?;
    let triples = plan.triples(interval);
    dominance_samples_at(pair, h, phi, &triples)
}

pub(crate) fn dominance_samples_at<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    triples: &[Triple],
) -> Result<Vec<SampleGap>, ConvexityError> {
    sweep(triples, |p| {
        let parts = dominance_parts(pair, h, phi, p.x, p.y, p.t)?;
        Ok(SampleGap {
            triple: *p,
            gap: parts.gap(),
            lhs: parts.lhs_abs(),
            rhs: parts.rhs(),
            scale: parts.scale(),
            min_f: parts.f.min_value,
            min_g: parts.g.min_value,
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsOnSamples,
    Violated,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self == Verdict::HoldsOnSamples
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::HoldsOnSamples => "holds-on-samples",
            Verdict::Violated => "violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub samples_checked: usize,
    pub violations: usize,
    /// Most negative gap among violating samples, or among all samples when
    /// none violate.
    #[serde(serialize_with = "ext_real")]
    pub worst_gap: f64,
    pub witness: Triple,
    /// Side magnitude used for the tolerance at the witness.
    pub witness_scale: f64,
    pub warnings: Vec<String>,
}

fn worst_of<'a>(samples: impl Iterator<Item = &'a SampleGap>) -> Option<&'a SampleGap> {
    samples.min_by(|p, q| p.gap.total_cmp(&q.gap).then_with(|| p.triple.lex_cmp(&q.triple)))
}

/// Reduces a sweep to its verdict. Deterministic in the sample order.
pub fn summarize(samples: &[SampleGap], tol: &Tolerance, roles: &[&str]) -> CheckReport {
    let violations = samples.iter().filter(|s| s.violates(tol)).count();
    let worst = if violations > 0 {
        worst_of(samples.iter().filter(|s| s.violates(tol)))
    } else {
        worst_of(samples.iter())
    };
    let mut warnings = Vec::new();
    for (i, role) in roles.iter().enumerate() {
        let negative = samples
            .iter()
            .filter(|s| if i == 0 { s.min_f < 0.0 } else { s.min_g < 0.0 })
            .count();
        if negative > 0 {
            warnings.push(format!(
                "{role} takes negative values at {negative} of {} samples (codomain [0, inf) expected)",
                samples.len()
            ));
        }
    }
    let within = samples
        .iter()
        .filter(|s| s.gap < 0.0 && !s.violates(tol))
        .count();
    if within > 0 {
        warnings.push(format!(
            "{within} samples have negative gaps within tolerance (not counted as violations)"
        ));
    }
    let (worst_gap, witness, witness_scale) = match worst {
        Some(s) => (s.gap, s.triple, s.scale),
        None => (f64::INFINITY, Triple::new(f64::NAN, f64::NAN, f64::NAN), 0.0),
    };
    CheckReport {
        verdict: if violations > 0 {
            Verdict::Violated
        } else {
            Verdict::HoldsOnSamples
        },
        samples_checked: samples.len(),
        violations,
        worst_gap,
        witness,
        witness_scale,
        warnings,
    }
}

/// Sampled certification of φ_h-convexity of `f`.
pub fn check_phi_h_convex<M: Mapping + ?Sized>(
    f: &Expr,
    h: &Kernel,
    phi: &M,
    interval: &Interval,
    plan: &SamplePlan,
) -> Result<CheckReport, ConvexityError> {
    let samples = phi_h_samples(f, h, phi, interval, plan)?;
    Ok(summarize(&samples, &plan.tolerance, &["f"]))
}

/// Sampled certification of (g, φ_h)-convex dominance of `pair.f` by
/// `pair.g`. Fails with [`ConvexityError::Precondition`] when g itself is not
/// φ_h-convex on the same samples.
pub fn check_dominated<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    interval: &Interval,
    plan: &SamplePlan,
) -> Result<CheckReport, ConvexityError> {
    let g_report = check_phi_h_convex(&pair.g, h, phi, interval, plan)?;
    if !g_report.verdict.holds() {
        return Err(ConvexityError::Precondition(Box::new(g_report)));
    }
    let samples = dominance_samples(pair, h, phi, interval, plan)?;
    Ok(summarize(&samples, &plan.tolerance, &["f", "g"]))
}

/// l = g + f and k = g − f, unsimplified.
pub fn decompose(pair: &FunctionPair) -> (Expr, Expr) {
    (Expr::add(&pair.g, &pair.f), Expr::sub(&pair.g, &pair.f))
}

/// f = (l − k)/2 and g = (l + k)/2, unsimplified.
pub fn compose(l: &Expr, k: &Expr) -> FunctionPair {
    let two = Expr::constant(2.0);
    FunctionPair {
        f: Expr::div(&Expr::sub(l, k), &two),
        g: Expr::div(&Expr::add(l, k), &two),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairVerdict {
    pub verdict: Verdict,
    pub first: CheckReport,
    pub second: CheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma2Report {
    /// f is (g, φ_h)-convex dominated (no precondition gate on g).
    pub dominated: CheckReport,
    /// g − f and g + f are φ_h-convex.
    pub difference_and_sum: PairVerdict,
    /// l and k from [`decompose`] are φ_h-convex.
    pub decomposition: PairVerdict,
    /// All three statement verdicts coincide.
    pub agreement: bool,
    /// Samples at which the per-sample verdicts of the statements differ.
    pub sample_disagreements: usize,
}

fn pair_verdict(first: CheckReport, second: CheckReport) -> PairVerdict {
    let verdict = if first.verdict.holds() && second.verdict.holds() {
        Verdict::HoldsOnSamples
    } else {
        Verdict::Violated
    };
    PairVerdict {
        verdict,
        first,
        second,
    }
}

/// Evaluates the three equivalent characterizations of dominance on one
/// shared sample set.
pub fn lemma2_report<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    interval: &Interval,
    plan: &SamplePlan,
) -> Result<Lemma2Report, ConvexityError> {
    plan.validate()?;
    let tol = &plan.tolerance;
    let triples = plan.triples(interval);

    let dominance = dominance_samples_at(pair, h, phi, &triples)?;
    let minus = phi_h_samples_at(&Expr::sub(&pair.g, &pair.f), h, phi, &triples)?;
    let plus = phi_h_samples_at(&Expr::add(&pair.g, &pair.f), h, phi, &triples)?;
    let (l, k) = decompose(pair);
    let l_samples = phi_h_samples_at(&l, h, phi, &triples)?;
    let k_samples = phi_h_samples_at(&k, h, phi, &triples)?;

    let sample_disagreements = (0..triples.len())
        .filter(|&i| {
            let s1 = dominance[i].violates(tol);
            let s2 = minus[i].violates(tol) || plus[i].violates(tol);
            let s3 = l_samples[i].violates(tol) || k_samples[i].violates(tol);
            s1 != s2 || s2 != s3
        })
        .count();

    let dominated = summarize(&dominance, tol, &["f", "g"]);
    let difference_and_sum = pair_verdict(
        summarize(&minus, tol, &["g - f"]),
        summarize(&plus, tol, &["g + f"]),
    );
    let decomposition = pair_verdict(summarize(&k_samples, tol, &["k"]), summarize(&l_samples, tol, &["l"]));
    let agreement = dominated.verdict == difference_and_sum.verdict
        && difference_and_sum.verdict == decomposition.verdict;
    Ok(Lemma2Report {
        dominated,
        difference_and_sum,
        decomposition,
        agreement,
        sample_disagreements,
    })
}
