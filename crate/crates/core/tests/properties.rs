use std::sync::Arc;

use proptest::prelude::*;

use convdom::expr::{BinaryOp, Node, UnaryOp};
use convdom::{
    dominance_gap, integrate, phi_h_defect, AffineMap, Expr, FunctionPair, Interval, Kernel, KernelKind,
};

fn node_strategy() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (-50.0f64..50.0).prop_map(Node::Const),
        Just(Node::Var('x')),
        Just(Node::Const(std::f64::consts::PI)),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let unary = prop_oneof![
            Just(UnaryOp::Neg),
            Just(UnaryOp::Abs),
            Just(UnaryOp::Exp),
            Just(UnaryOp::Ln),
            Just(UnaryOp::Sqrt),
            Just(UnaryOp::Sin),
            Just(UnaryOp::Cos),
        ];
        let binary = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Pow),
        ];
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, a)| Node::Unary(op, Arc::new(a))),
            (binary, inner.clone(), inner).prop_map(|(op, a, b)| Node::Binary(op, Arc::new(a), Arc::new(b))),
        ]
    })
}

fn to_expr(node: &Node) -> Expr {
    match node {
        Node::Const(c) => Expr::constant(*c),
        Node::Var(v) => Expr::var(*v),
        Node::Unary(op, a) => Expr::unary(*op, &to_expr(a)),
        Node::Binary(op, a, b) => Expr::binary(*op, &to_expr(a), &to_expr(b)),
    }
}

fn same_eval(a: &Expr, b: &Expr, x: f64) -> bool {
    match (a.eval(x), b.eval(x)) {
        (Ok(u), Ok(v)) => u.to_bits() == v.to_bits() || (u == 0.0 && v == 0.0),
        (Err(u), Err(v)) => u == v,
        _ => false,
    }
}

fn unit() -> Interval {
    Interval::new(0.0, 1.0).unwrap()
}

fn quadratic(c0: f64, c1: f64, c2: f64) -> Expr {
    Expr::parse(&format!("{c0} + {c1}*x + {c2}*x^2")).unwrap()
}

fn kernel(i: usize, s: f64) -> Kernel {
    Kernel::new(match i {
        0 => KernelKind::Linear,
        1 => KernelKind::Power(s),
        2 => KernelKind::Reciprocal,
        _ => KernelKind::One,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_expressions_reparse_to_the_same_function(node in node_strategy(), x in -3.0f64..3.0) {
        let e = to_expr(&node);
        let printed = e.to_infix();
        let back = Expr::parse(&printed).unwrap_or_else(|err| panic!("{printed}: {err}"));
        prop_assert!(same_eval(&e, &back, x), "{}", printed);
        let reprinted = back.to_infix();
        let again = Expr::parse(&reprinted).unwrap();
        prop_assert_eq!(again.root(), back.root(), "{}", reprinted);
        prop_assert_eq!(again.to_infix(), reprinted);
    }

    #[test]
    fn dominance_gap_scales_linearly(
        f in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        g in (0.0f64..2.0, -2.0f64..2.0, 0.0f64..3.0),
        c in 0.01f64..100.0,
        k in 0usize..4,
        s in 0.05f64..0.95,
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
        t in 1e-6f64..(1.0 - 1e-6),
    ) {
        let p = FunctionPair::new(quadratic(f.0, f.1, f.2), quadratic(g.0, g.1, g.2));
        let h = kernel(k, s);
        let phi = AffineMap::identity(unit());
        let base = dominance_gap(&p, &h, &phi, x, y, t).unwrap();
        let scaled = dominance_gap(&p.scaled(c), &h, &phi, x, y, t).unwrap();
        let scale = 1.0 + base.abs() + 10.0 * h.value(t).unwrap().max(h.value(1.0 - t).unwrap());
        prop_assert!((scaled - c * base).abs() <= 1e-12 * c * scale, "{} vs {}", scaled, c * base);
    }

    #[test]
    fn dominance_gap_is_min_of_sum_and_difference_defects(
        f in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        g in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..3.0),
        k in 0usize..4,
        s in 0.05f64..0.95,
        alpha in 0.1f64..1.0,
        beta_frac in 0.0f64..1.0,
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
        t in 1e-6f64..(1.0 - 1e-6),
    ) {
        let (fe, ge) = (quadratic(f.0, f.1, f.2), quadratic(g.0, g.1, g.2));
        let h = kernel(k, s);
        let phi = AffineMap::new(alpha, beta_frac * (1.0 - alpha), unit()).unwrap();
        let gap = dominance_gap(&FunctionPair::new(fe.clone(), ge.clone()), &h, &phi, x, y, t).unwrap();
        let diff = phi_h_defect(&Expr::sub(&ge, &fe), &h, &phi, x, y, t).unwrap();
        let sum = phi_h_defect(&Expr::add(&ge, &fe), &h, &phi, x, y, t).unwrap();
        let hmax = h.value(t).unwrap().max(h.value(1.0 - t).unwrap());
        let scale = 1.0 + 20.0 * hmax;
        prop_assert!((gap - diff.min(sum)).abs() <= 1e-12 * scale);
        if gap.abs() > 1e-10 * scale {
            prop_assert_eq!(gap >= 0.0, diff >= 0.0 && sum >= 0.0);
        }
    }

    #[test]
    fn affine_images_stay_in_the_interval(
        a in -10.0f64..10.0,
        w in 0.1f64..10.0,
        alpha in -1.0f64..1.0,
        beta_frac in 0.0f64..1.0,
        lambdas in proptest::collection::vec(0.0f64..=1.0, 1000),
    ) {
        let domain = Interval::new(a, a + w).unwrap();
        prop_assume!(alpha.abs() > 1e-3);
        // Choose beta so the image of [a, b] lies inside [a, b].
        let image_w = alpha.abs() * w;
        let lo = a - alpha.min(0.0) * w - alpha * a;
        let beta = lo + beta_frac * (w - image_w) * (1.0 - 1e-12);
        let phi = AffineMap::new(alpha, beta, domain).unwrap();
        let (pa, pb) = (phi.image_a(), phi.image_b());
        for &l in &lambdas {
            let x = domain.a() + l * w;
            let u = phi.apply(x.min(domain.b())).unwrap();
            prop_assert!(domain.contains(u));
            let mixed = l * pa + (1.0 - l) * pb;
            let direct = phi.apply((l * domain.a() + (1.0 - l) * domain.b()).clamp(domain.a(), domain.b())).unwrap();
            prop_assert!((direct - mixed).abs() <= 1e-12 * (1.0 + a.abs() + w));
        }
    }

    #[test]
    fn quadrature_is_linear(
        p in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        q in (-3.0f64..3.0, -3.0f64..3.0),
        c in -5.0f64..5.0,
        a in -2.0f64..0.0,
        w in 0.1f64..3.0,
    ) {
        let f = move |x: f64| p.0 + p.1 * (3.0 * x).sin() + p.2 * x.exp();
        let g = move |x: f64| q.0 * x.cos() + q.1 * x * x;
        let tol = 1e-11;
        let int = |h: &dyn Fn(f64) -> f64| integrate(|x| Ok(h(x)), a, a + w, tol).unwrap();
        let (rf, rg) = (int(&f), int(&g));
        let rs = int(&|x| f(x) + c * g(x));
        let allowance = rf.error_estimate + c.abs() * rg.error_estimate + rs.error_estimate + 1e-12;
        prop_assert!((rs.value - (rf.value + c * rg.value)).abs() <= allowance);
    }

    #[test]
    fn quadrature_is_additive(
        k in (-3.0f64..3.0, 0.5f64..4.0),
        a in -2.0f64..0.0,
        w1 in 0.1f64..2.0,
        w2 in 0.1f64..2.0,
    ) {
        let f = move |x: f64| Ok((k.1 * x).sin() * x.exp() + k.0);
        let tol = 1e-11;
        let left = integrate(f, a, a + w1, tol).unwrap();
        let right = integrate(f, a + w1, a + w1 + w2, tol).unwrap();
        let whole = integrate(f, a, a + w1 + w2, tol).unwrap();
        let allowance = left.error_estimate + right.error_estimate + whole.error_estimate + 1e-12;
        prop_assert!((whole.value - left.value - right.value).abs() <= allowance);
    }
}
