//! Intervals and the map φ.
//!
//! The Hermite-Hadamard engine only accepts [`AffineMap`]; its bounds are
//! derived with φ(λa + (1−λ)b) = λφ(a) + (1−λ)φ(b), which holds exactly for
//! affine maps. The convexity and dominance checkers never rely on that
//! identity and accept any [`Mapping`], including [`ExprMap`].

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid interval [{a}, {b}]: need finite a < b")]
    InvalidInterval { a: f64, b: f64 },
    #[error("map parameters must be finite (alpha = {alpha}, beta = {beta})")]
    NonFinite { alpha: f64, beta: f64 },
    #[error("phi maps {x} to {image}, outside [{a}, {b}]")]
    Range { x: f64, image: f64, a: f64, b: f64 },
    #[error("{x} is outside the domain [{a}, {b}]")]
    Domain { x: f64, a: f64, b: f64 },
    #[error("phi failed to evaluate at {x}: {source}")]
    Eval { x: f64, source: EvalError },
    #[error("phi is not affine on [{a}, {b}] (second difference {second_difference:e})")]
    NotAffine { a: f64, b: f64, second_difference: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Interval, GeometryError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(GeometryError::InvalidInterval { a, b });
        }
        Ok(Interval { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.a, self.b)
    }
}

/// A self-map of an interval, as used by the φ_h-convexity definitions.
pub trait Mapping: Sync {
    fn domain(&self) -> Interval;

    /// Maps `x`, which must lie in the domain.
    fn apply(&self, x: f64) -> Result<f64, GeometryError>;

    fn describe(&self) -> String;
}

/// φ(x) = alpha·x + beta restricted to `domain`, with φ(domain) ⊆ domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    alpha: f64,
    beta: f64,
    domain: Interval,
    image_a: f64,
    image_b: f64,
}

impl AffineMap {
    pub fn new(alpha: f64, beta: f64, domain: Interval) -> Result<AffineMap, GeometryError> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(GeometryError::NonFinite { alpha, beta });
        }
        let image_a = alpha * domain.a + beta;
        let image_b = alpha * domain.b + beta;
        for (x, image) in [(domain.a, image_a), (domain.b, image_b)] {
            if !domain.contains(image) {
                return Err(GeometryError::Range {
                    x,
                    image,
                    a: domain.a,
                    b: domain.b,
                });
            }
        }
        Ok(AffineMap {
            alpha,
            beta,
            domain,
            image_a,
            image_b,
        })
    }

    pub fn identity(domain: Interval) -> AffineMap {
        AffineMap {
            alpha: 1.0,
            beta: 0.0,
            domain,
            image_a: domain.a,
            image_b: domain.b,
        }
    }

    /// Recovers an affine map from an expression in `x`, rejecting it when
    /// the second difference over {a, (a+b)/2, b} does not vanish.
    pub fn from_expr(expr: &Expr, domain: Interval) -> Result<AffineMap, GeometryError> {
        let eval = |x: f64| expr.eval(x).map_err(|source| GeometryError::Eval { x, source });
        let mid = 0.5 * (domain.a + domain.b);
        let (pa, pm, pb) = (eval(domain.a)?, eval(mid)?, eval(domain.b)?);
        let second_difference = pa - 2.0 * pm + pb;
        let scale = pa.abs().max(pm.abs()).max(pb.abs()).max(domain.a.abs().max(domain.b.abs()));
        if second_difference.abs() > 1e-12 * scale.max(1.0) {
            return Err(GeometryError::NotAffine {
                a: domain.a,
                b: domain.b,
                second_difference,
            });
        }
        let alpha = (pb - pa) / domain.width();
        let beta = pa - alpha * domain.a;
        AffineMap::new(alpha, beta, domain)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn is_identity(&self) -> bool {
        self.alpha == 1.0 && self.beta == 0.0
    }

    /// φ(a) for the domain's left endpoint.
    pub fn image_a(&self) -> f64 {
        self.image_a
    }

    /// φ(b) for the domain's right endpoint.
    pub fn image_b(&self) -> f64 {
        self.image_b
    }

    /// φ(b) − φ(a). Zero for constant maps, negative for decreasing ones.
    pub fn image_width(&self) -> f64 {
        self.image_b - self.image_a
    }

    pub fn apply(&self, x: f64) -> Result<f64, GeometryError> {
        if !self.domain.contains(x) {
            return Err(GeometryError::Domain {
                x,
                a: self.domain.a,
                b: self.domain.b,
            });
        }
        Ok(self.alpha * x + self.beta)
    }
}

impl Mapping for AffineMap {
    fn domain(&self) -> Interval {
        self.domain
    }

    fn apply(&self, x: f64) -> Result<f64, GeometryError> {
        AffineMap::apply(self, x)
    }

    fn describe(&self) -> String {
        if self.is_identity() {
            "identity".to_string()
        } else {
            format!("{}*x + {}", self.alpha, self.beta)
        }
    }
}

/// An arbitrary expression map x ↦ φ(x); image containment is checked on
/// every application.
#[derive(Debug, Clone)]
pub struct ExprMap {
    expr: Expr,
    domain: Interval,
}

impl ExprMap {
    pub fn new(expr: Expr, domain: Interval) -> ExprMap {
        ExprMap { expr, domain }
    }
}

impl Mapping for ExprMap {
    fn domain(&self) -> Interval {
        self.domain
    }

    fn apply(&self, x: f64) -> Result<f64, GeometryError> {
        let (a, b) = (self.domain.a, self.domain.b);
        if !self.domain.contains(x) {
            return Err(GeometryError::Domain { x, a, b });
        }
        let image = self
            .expr
            .eval(x)
            .map_err(|source| GeometryError::Eval { x, source })?;
        if !self.domain.contains(image) {
            return Err(GeometryError::Range { x, image, a, b });
        }
        Ok(image)
    }

    fn describe(&self) -> String {
        self.expr.describe()
    }
}

/// Either kind of φ, as selected from the command line.
#[derive(Debug, Clone)]
pub enum Phi {
    Affine(AffineMap),
    General(ExprMap),
}

impl Phi {
    pub fn as_affine(&self) -> Option<&AffineMap> {
        match self {
            Phi::Affine(m) => Some(m),
            Phi::General(_) => None,
        }
    }
}

impl Mapping for Phi {
    fn domain(&self) -> Interval {
        match self {
            Phi::Affine(m) => m.domain(),
            Phi::General(m) => m.domain(),
        }
    }

    fn apply(&self, x: f64) -> Result<f64, GeometryError> {
        match self {
            Phi::Affine(m) => m.apply(x),
            Phi::General(m) => m.apply(x),
        }
    }

    fn describe(&self) -> String {
        match self {
            Phi::Affine(m) => Mapping::describe(m),
            Phi::General(m) => m.describe(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        assert_eq!(unit().width(), 1.0);
    }

    #[test]
    fn identity_map() {
        let phi = AffineMap::new(1.0, 0.0, unit()).unwrap();
        assert!(phi.is_identity());
        assert_eq!(phi.apply(0.3).unwrap(), 0.3);
        assert_eq!(phi.image_width(), 1.0);
    }

    #[test]
    fn half_shift_map() {
        let phi = AffineMap::new(0.5, 0.5, unit()).unwrap();
        assert_eq!((phi.image_a(), phi.image_b()), (0.5, 1.0));
        assert_eq!(phi.apply(0.5).unwrap(), 0.75);
        assert_eq!(phi.image_width(), 0.5);
        assert!(matches!(phi.apply(2.0), Err(GeometryError::Domain { .. })));
    }

    #[test]
    fn out_of_range_map() {
        assert!(matches!(
            AffineMap::new(2.0, 0.0, unit()),
            Err(GeometryError::Range { .. })
        ));
        assert!(AffineMap::new(1.0, 1e-9, unit()).is_err());
    }

    #[test]
    fn constant_map_is_degenerate_but_representable() {
        let phi = AffineMap::new(0.0, 0.5, unit()).unwrap();
        assert_eq!(phi.image_width(), 0.0);
    }

    #[test]
    fn decreasing_map() {
        let phi = AffineMap::new(-1.0, 1.0, unit()).unwrap();
        assert_eq!(phi.image_width(), -1.0);
    }

    #[test]
    fn affine_detection_from_expression() {
        let phi = AffineMap::from_expr(&Expr::parse("0.5*x+0.5").unwrap(), unit()).unwrap();
        assert_eq!((phi.alpha(), phi.beta()), (0.5, 0.5));
        let err = AffineMap::from_expr(&Expr::parse("x^2").unwrap(), unit()).unwrap_err();
        assert!(matches!(err, GeometryError::NotAffine { .. }));
    }

    #[test]
    fn expr_map_checks_containment() {
        let m = ExprMap::new(Expr::parse("x^2").unwrap(), unit());
        assert_eq!(m.apply(0.5).unwrap(), 0.25);
        let m = ExprMap::new(Expr::parse("x + 1").unwrap(), unit());
        assert!(matches!(m.apply(0.5), Err(GeometryError::Range { .. })));
    }
}
