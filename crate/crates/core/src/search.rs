//! Counterexample search for the dominance inequality.
//!
//! The plan's samples are swept first; optionally the worst samples are then
//! sharpened by derivative-free coordinate descent. An empty result means no
//! violation was found at this sampling density, nothing more.

use rayon::prelude::*;
use serde::Serialize;

use crate::convexity::{
    dominance_parts, dominance_samples, ConvexityError, FunctionPair, SampleGap, SamplePlan, Strategy,
    Triple,
};
use crate::geometry::{Interval, Mapping};
use crate::kernels::Kernel;

/// Number of worst samples used as refinement starts.
pub const REFINE_STARTS: usize = 10;
/// Maximum coordinate-descent sweeps per start.
pub const REFINE_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationRecord {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    /// rhs − lhs_abs, below −(atol + rtol·scale).
    pub gap: f64,
    pub lhs_abs: f64,
    pub rhs: f64,
    pub scale: f64,
    /// Produced by local refinement rather than taken from the sweep.
    pub refined: bool,
}

impl ViolationRecord {
    fn from_sample(s: &SampleGap, refined: bool) -> ViolationRecord {
        ViolationRecord {
            x: s.triple.x,
            y: s.triple.y,
            t: s.triple.t,
            gap: s.gap,
            lhs_abs: s.lhs,
            rhs: s.rhs,
            scale: s.scale,
            refined,
        }
    }

    pub fn triple(&self) -> Triple {
        Triple::new(self.x, self.y, self.t)
    }
}

fn initial_steps(plan: &SamplePlan, interval: &Interval) -> [f64; 3] {
    let w = interval.width();
    let tw = 1.0 - 2.0 * plan.t_clamp;
    let spacing = |n: usize, width: f64| if n > 1 { width / (n - 1) as f64 } else { 0.5 * width };
    match plan.strategy {
        Strategy::Grid { nx, ny, nt } => [spacing(nx, w), spacing(ny, w), spacing(nt, tw)],
        Strategy::Random { count, .. } => {
            let per_axis = (count as f64).cbrt().max(1.0);
            [w / per_axis, w / per_axis, tw / per_axis]
        }
    }
}

fn evaluate<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    p: Triple,
) -> Result<SampleGap, ConvexityError> {
    let parts = dominance_parts(pair, h, phi, p.x, p.y, p.t).map_err(|source| ConvexityError::At {
        x: p.x,
        y: p.y,
        t: p.t,
        source,
    })?;
    Ok(SampleGap {
        triple: p,
        gap: parts.gap(),
        lhs: parts.lhs_abs(),
        rhs: parts.rhs(),
        scale: parts.scale(),
        min_f: parts.f.min_value,
        min_g: parts.g.min_value,
    })
}

/// Step-halving coordinate descent on the gap, starting from `start`.
/// Only strict improvements are accepted, so the result is never worse than
/// the start.
pub fn refine_from<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    interval: &Interval,
    plan: &SamplePlan,
    start: SampleGap,
) -> Result<SampleGap, ConvexityError> {
    let mut best = start;
    let mut steps = initial_steps(plan, interval);
    let (lo, hi) = (plan.t_clamp, 1.0 - plan.t_clamp);
    for _ in 0..REFINE_ITERATIONS {
        let mut improved = false;
        for axis in 0..3 {
            for dir in [1.0, -1.0] {
                let mut p = best.triple;
                match axis {
                    0 => p.x = (p.x + dir * steps[0]).clamp(interval.a(), interval.b()),
                    1 => p.y = (p.y + dir * steps[1]).clamp(interval.a(), interval.b()),
                    _ => p.t = (p.t + dir * steps[2]).clamp(lo, hi),
                }
                if p == best.triple {
                    continue;
                }
                let candidate = evaluate(pair, h, phi, p)?;
                if candidate.gap < best.gap {
                    best = candidate;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s *= 0.5;
            }
        }
    }
    Ok(best)
}

fn canonical_order(a: &ViolationRecord, b: &ViolationRecord) -> std::cmp::Ordering {
    a.gap
        .total_cmp(&b.gap)
        .then_with(|| a.triple().lex_cmp(&b.triple()))
        .then_with(|| a.refined.cmp(&b.refined))
}

/// All sampled (and, with `refine`, locally sharpened) violations of the
/// dominance inequality, most negative gap first.
pub fn search_violations<M: Mapping + ?Sized>(
    pair: &FunctionPair,
    h: &Kernel,
    phi: &M,
    interval: &Interval,
    plan: &SamplePlan,
    refine: bool,
) -> Result<Vec<ViolationRecord>, ConvexityError> {
    let tol = plan.tolerance;
    let samples = dominance_samples(pair, h, phi, interval, plan)?;
    let mut records: Vec<ViolationRecord> = samples
        .iter()
        .filter(|s| s.violates(&tol))
        .map(|s| ViolationRecord::from_sample(s, false))
        .collect();

    if refine {
        let mut starts: Vec<&SampleGap> = samples.iter().collect();
        starts.sort_by(|p, q| p.gap.total_cmp(&q.gap).then_with(|| p.triple.lex_cmp(&q.triple)));
        starts.truncate(REFINE_STARTS);
        let refined: Vec<Result<SampleGap, ConvexityError>> = starts
            .par_iter()
            .map(|s| refine_from(pair, h, phi, interval, plan, **s))
            .collect();
        for r in refined {
            let s = r?;
            if s.violates(&tol) && !records.iter().any(|rec| rec.triple() == s.triple) {
                records.push(ViolationRecord::from_sample(&s, true));
            }
        }
    }

    records.sort_by(canonical_order);
    records.dedup_by(|a, b| a.triple() == b.triple());
    Ok(records)
}
