use proptest::prelude::*;

use pstat_core::density::p_density;
use pstat_core::domain::{Domain, Grid};
use pstat_core::function::FunctionHandle;
use pstat_core::korovkin::{check_system, modulus, KorovkinSystem};
use pstat_core::operators::DiscreteOperatorFamily;
use pstat_core::rth::{finite_diff_jet, DerivativeSource, RthFamily, TaylorJet};
use pstat_core::sequence::{IndexSet, Sequence};
use pstat_core::summability::{evaluate, mass, EvalSchedule, PowerSeriesMethod};

const TOL: f64 = 1e-12;

fn methods() -> Vec<(PowerSeriesMethod, f64)> {
    // (method, largest abscissa used in properties)
    vec![
        (PowerSeriesMethod::abel(), 0.999),
        (PowerSeriesMethod::logarithmic(), 0.999),
        (PowerSeriesMethod::borel(), 20.0),
    ]
}

fn short_schedule(method: &PowerSeriesMethod) -> EvalSchedule {
    let abscissae = if method.radius().value().is_finite() {
        vec![0.5, 0.9, 0.99, 0.999]
    } else {
        vec![1.0, 4.0, 16.0]
    };
    EvalSchedule::new(abscissae, TOL, 1e-3, 4096).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_is_linear(
        xs in prop::collection::vec(-1.0f64..1.0, 1..200),
        ys in prop::collection::vec(-1.0f64..1.0, 1..200),
        tails in (-1.0f64..1.0, -1.0f64..1.0),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        which in 0usize..3,
        frac in 0.05f64..1.0,
    ) {
        let (method, t_max) = methods().swap_remove(which);
        let t = t_max * frac;
        let x = Sequence::from_values("x", xs, tails.0);
        let y = Sequence::from_values("y", ys, tails.1);
        let z = Sequence::linear_combination(alpha, &x, beta, &y);
        let tx = evaluate(&method, &x, t, TOL).unwrap().value;
        let ty = evaluate(&method, &y, t, TOL).unwrap().value;
        let tz = evaluate(&method, &z, t, TOL).unwrap().value;
        prop_assert!((tz - (alpha * tx + beta * ty)).abs() <= 1e-12 * (1.0 + alpha.abs() + beta.abs()));
    }

    #[test]
    fn transform_of_constant_is_exact(c in -1e3f64..1e3, which in 0usize..3, frac in 0.05f64..1.0) {
        let (method, t_max) = methods().swap_remove(which);
        let v = evaluate(&method, &Sequence::constant(c), t_max * frac, TOL).unwrap().value;
        prop_assert!((v - c).abs() <= 1e-15 * c.abs().max(1.0));
    }

    #[test]
    fn mass_is_positive_and_monotone(which in 0usize..3, a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (method, t_max) = methods().swap_remove(which);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let m_lo = mass(&method, lo * t_max, TOL).unwrap();
        let m_hi = mass(&method, hi * t_max, TOL).unwrap();
        prop_assert!(m_lo > 0.0);
        prop_assert!(m_lo <= m_hi);
    }

    #[test]
    fn complement_law(modulus in 2usize..7, residue in 0usize..7, which in 0usize..3) {
        let (method, _) = methods().swap_remove(which);
        let schedule = short_schedule(&method);
        let e = IndexSet::residue_class(modulus, residue % modulus);
        let d = p_density(&method, &e, &schedule).unwrap();
        let dc = p_density(&method, &e.complement(), &schedule).unwrap();
        for ((_, a), (_, b)) in d.estimate.per_t.iter().zip(&dc.estimate.per_t) {
            prop_assert!((a + b - 1.0).abs() <= 2.0 * TOL + 1e-15);
        }
    }

    #[test]
    fn density_is_monotone_in_the_set(modulus in 1usize..5, residue in 0usize..5, which in 0usize..3) {
        let (method, _) = methods().swap_remove(which);
        let schedule = short_schedule(&method);
        let r = residue % modulus;
        let small = IndexSet::residue_class(2 * modulus, r);
        let large = IndexSet::residue_class(modulus, r);
        let ds = p_density(&method, &small, &schedule).unwrap();
        let dl = p_density(&method, &large, &schedule).unwrap();
        for ((_, a), (_, b)) in ds.estimate.per_t.iter().zip(&dl.estimate.per_t) {
            prop_assert!(*a <= b + 2.0 * TOL);
        }
    }
}

fn poly(coeffs: Vec<f64>) -> FunctionHandle {
    FunctionHandle::polynomial("p", coeffs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bernstein_is_linear_positive_and_monotone(
        a in prop::collection::vec(-2.0f64..2.0, 1..6),
        b in prop::collection::vec(-2.0f64..2.0, 1..6),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        n in 1usize..60,
    ) {
        let fam = DiscreteOperatorFamily::bernstein(1, 60).unwrap();
        let grid = Grid::uniform(Domain::UNIT, 101).unwrap();
        let (f, g) = (poly(a), poly(b));
        let combo = FunctionHandle::linear_combination("c", &[(alpha, f.clone()), (beta, g.clone())]);
        let tf = fam.apply(n, &f, &grid).unwrap();
        let tg = fam.apply(n, &g, &grid).unwrap();
        let tc = fam.apply(n, &combo, &grid).unwrap();
        for i in 0..grid.len() {
            prop_assert!((tc[i] - (alpha * tf[i] + beta * tg[i])).abs() <= 1e-12 * (1.0 + alpha.abs() + beta.abs()) * 8.0);
        }
        // f^2 >= 0 and f^2 <= f^2 + g^2
        let (f2, g2) = (f.clone(), g.clone());
        let sq = FunctionHandle::new("f^2", move |x| f2.eval(x).powi(2));
        let sum = FunctionHandle::new("f^2 + g^2", {
            let f = f.clone();
            move |x| f.eval(x).powi(2) + g2.eval(x).powi(2)
        });
        let tsq = fam.apply(n, &sq, &grid).unwrap();
        let tsum = fam.apply(n, &sum, &grid).unwrap();
        for i in 0..grid.len() {
            prop_assert!(tsq[i] >= -1e-12);
            prop_assert!(tsq[i] <= tsum[i] + 1e-12);
        }
        prop_assert_eq!(tf[0], f.eval(0.0));
        prop_assert_eq!(tf[grid.len() - 1], f.eval(1.0));
    }

    #[test]
    fn bernstein_matches_direct_double_loop(
        a in prop::collection::vec(-2.0f64..2.0, 1..5),
        n in 1usize..=5,
    ) {
        let fam = DiscreteOperatorFamily::bernstein(1, 5).unwrap();
        let grid = Grid::uniform(Domain::UNIT, 5).unwrap();
        let f = poly(a);
        let got = fam.apply(n, &f, &grid).unwrap();
        for (i, &x) in grid.points().iter().enumerate() {
            let mut direct = 0.0;
            for k in 0..=n {
                let binom = (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64);
                direct += f.eval(k as f64 / n as f64) * binom * x.powi(k as i32) * (1.0 - x).powi((n - k) as i32);
            }
            // log-space weights carry a few ulps of their own
            prop_assert!((got[i] - direct).abs() <= 16.0 * f64::EPSILON * (1.0 + direct.abs()), "{} vs {}", got[i], direct);
        }
    }

    #[test]
    fn rth_is_linear(
        a in prop::collection::vec(-2.0f64..2.0, 1..6),
        b in prop::collection::vec(-2.0f64..2.0, 1..6),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        r in 0usize..4,
        n in 1usize..40,
    ) {
        let rf = RthFamily::new(DiscreteOperatorFamily::bernstein(1, 40).unwrap(), r, DerivativeSource::Analytic).unwrap();
        let grid = Grid::uniform(Domain::UNIT, 65).unwrap();
        let (f, g) = (poly(a), poly(b));
        let combo = FunctionHandle::linear_combination("c", &[(alpha, f.clone()), (beta, g.clone())]);
        let tf = rf.apply_rth(n, &f, &grid).unwrap();
        let tg = rf.apply_rth(n, &g, &grid).unwrap();
        let tc = rf.apply_rth(n, &combo, &grid).unwrap();
        for i in 0..grid.len() {
            prop_assert!((tc[i] - (alpha * tf[i] + beta * tg[i])).abs() <= 1e-12 * (1.0 + alpha.abs() + beta.abs()) * 8.0);
        }
    }

    #[test]
    fn rth_reproduces_low_degree_polynomials(
        r in 1usize..4,
        coeffs in prop::collection::vec(-3.0f64..3.0, 4),
        n in 1usize..60,
    ) {
        let rf = RthFamily::new(DiscreteOperatorFamily::bernstein(1, 60).unwrap(), r, DerivativeSource::Analytic).unwrap();
        let grid = Grid::uniform(Domain::UNIT, 129).unwrap();
        let p = poly(coeffs[..=r].to_vec());
        let image = rf.apply_rth(n, &p, &grid).unwrap();
        for (&x, v) in grid.points().iter().zip(&image) {
            prop_assert!((v - p.eval(x)).abs() <= 1e-10);
        }
    }

    #[test]
    fn finite_difference_jets_match_analytic(which in 0usize..6, xi in 0.0f64..=1.0, r in 1usize..=3) {
        let f = [
            FunctionHandle::sin(),
            FunctionHandle::cos(),
            FunctionHandle::exp(),
            FunctionHandle::sin_pi(),
            FunctionHandle::monomial(3),
            FunctionHandle::monomial(5),
        ][which].clone();
        let exact = TaylorJet::analytic(&f, xi, r).unwrap();
        let approx = finite_diff_jet(&f, xi, r, None, &Domain::UNIT).unwrap();
        for (e, a) in exact.values.iter().zip(&approx.values) {
            prop_assert!((e - a).abs() <= 1e-5, "{} at {}: {} vs {}", f.label(), xi, e, a);
        }
    }

    #[test]
    fn modulus_is_monotone_and_subadditive(which in 0usize..4, d1 in 0.01f64..0.4, d2 in 0.01f64..0.4) {
        let f = [
            FunctionHandle::monomial(2),
            FunctionHandle::sin_pi(),
            FunctionHandle::exp(),
            FunctionHandle::kinked_quadratic(),
        ][which].clone();
        let grid = Grid::uniform(Domain::UNIT, 257).unwrap();
        let w1 = modulus(&f, &grid, d1).unwrap();
        let w2 = modulus(&f, &grid, d2).unwrap();
        let w12 = modulus(&f, &grid, d1 + d2).unwrap();
        // slack: one grid step at the steepest slope of these functions
        let slack = 2.0 / 256.0 * 4.0;
        prop_assert!(w1.max(w2) <= w12);
        prop_assert!(w12 <= w1 + w2 + slack);
    }

    #[test]
    fn scaling_coefficients_keeps_verdict(c in 0.01f64..100.0) {
        let grid = Grid::uniform(Domain::UNIT, 129).unwrap();
        let sys = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
        let base = check_system(&sys, &grid, &[0.1, 0.3]).unwrap();
        let scaled = check_system(&sys.scaled(c), &grid, &[0.1, 0.3]).unwrap();
        prop_assert_eq!(base.passed, scaled.passed);
        for (m, s) in base.margins.iter().zip(&scaled.margins) {
            prop_assert_eq!(m.margin > 0.0, s.margin > 0.0);
            prop_assert!((s.margin - c * m.margin).abs() <= 1e-12 * c);
        }
    }
}
