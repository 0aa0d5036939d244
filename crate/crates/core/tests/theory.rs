use std::sync::Arc;

use envlang::envelope::{fb_gamma_max, EnvelopeConstants};
use envlang::experiments::truncgauss;
use envlang::model::{CompositeTarget, ConvexBody, NonSmoothPotential, QuadraticPotential};
use envlang::reference::{AxisRule, TabulatedDensity1d};
use envlang::sampler::DEFAULT_C0;
use envlang::theory::{
    eula_contraction, fb_wasserstein_bound, perturbation_w1_bound, steiner_i1, steiner_i2, IntegralMethod,
};

#[test]
fn steiner_i2_dominates_outside_integral() {
    let body = ConvexBody::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let gamma = 0.01;
    // Midpoint rule on [−1, 2]², restricted to the complement of K.
    let n = 1500;
    let cell = 3.0 / n as f64;
    let anchor = body.anchor().to_vec();
    let (mut outside, mut tube) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let x = [-1.0 + (i as f64 + 0.5) * cell, -1.0 + (j as f64 + 0.5) * cell];
            let dist = body.distance(&x);
            if dist > 0.0 {
                let w = (-dist * dist / (2.0 * gamma)).exp() * cell * cell;
                let r = ((x[0] - anchor[0]).powi(2) + (x[1] - anchor[1]).powi(2)).sqrt();
                outside += r * w;
                tube += w;
            }
        }
    }
    assert!(outside <= steiner_i2(&body, gamma).unwrap());
    // The plain Gaussian tube integral equals I₁ for a convex body.
    assert!((tube - steiner_i1(&body, gamma).unwrap()).abs() / tube < 1e-3, "{tube}");
}

fn indicator_target() -> Arc<CompositeTarget> {
    let f = QuadraticPotential::new(vec![vec![1.0, 0.3], vec![0.3, 0.8]]).unwrap();
    let body = ConvexBody::new_box(vec![-1.0, -0.5], vec![1.0, 1.5]).unwrap();
    Arc::new(CompositeTarget::new(Arc::new(f), NonSmoothPotential::indicator(body)).unwrap())
}

#[test]
fn indicator_bound_shrinks_with_gamma() {
    let t = indicator_target();
    let gmax = fb_gamma_max(&t);
    let grid: Vec<f64> = [0.4, 0.2, 0.1, 0.05, 0.02, 0.01].iter().map(|r| r * gmax).collect();
    let reports: Vec<_> = grid
        .iter()
        .map(|&g| fb_wasserstein_bound(&t, g, IntegralMethod::Quadrature { nodes_per_axis: 200 }).unwrap())
        .collect();
    for r in &reports {
        assert_eq!(r.c4, 0.0);
        assert!(r.total.is_finite() && r.total > 0.0);
        assert!((r.recombine() - r.total).abs() <= 1e-12 * r.total);
    }
    for w in reports.windows(2) {
        assert!(w[1].c1 <= w[0].c1 + 1e-12, "C1 {} -> {}", w[0].c1, w[1].c1);
        assert!(w[1].total < w[0].total, "total {} -> {}", w[0].total, w[1].total);
    }
}

#[test]
fn truncated_gaussian_report_is_finite() {
    let t = truncgauss::target(2).unwrap();
    let r = fb_wasserstein_bound(&t, 0.05, IntegralMethod::Auto).unwrap();
    assert!(r.total.is_finite() && r.total > 0.0);
    assert!(r.c1.is_finite() && r.c2 > 0.0 && r.c3 >= 1.0);
    assert_eq!(r.c4, 0.0);
    assert!(r.f_min <= r.f_max);
    assert!((r.recombine() - r.total).abs() <= 1e-12 * r.total);
}

#[test]
fn monte_carlo_matches_quadrature_for_bound() {
    let t = indicator_target();
    let g = 0.1 * fb_gamma_max(&t);
    let q = fb_wasserstein_bound(&t, g, IntegralMethod::Quadrature { nodes_per_axis: 300 }).unwrap();
    let mc = fb_wasserstein_bound(&t, g, IntegralMethod::MonteCarlo { samples: 400_000, seed: 3 }).unwrap();
    let se = mc.standard_error.unwrap();
    assert!((mc.total - q.total).abs() <= 4.0 * se + 1e-3 * q.total, "{} vs {} (se {se})", mc.total, q.total);
}

#[test]
fn gamma_beyond_admissible_range_is_rejected() {
    let t = truncgauss::target(2).unwrap();
    let gmax = fb_gamma_max(&t);
    assert!(fb_wasserstein_bound(&t, gmax, IntegralMethod::Auto).is_err());
    assert!(fb_wasserstein_bound(&t, 2.0 * gmax, IntegralMethod::Auto).is_err());
    assert!(fb_wasserstein_bound(&t, 0.0, IntegralMethod::Auto).is_err());
}

fn constants(lambda: f64, mu: f64, rho: f64) -> EnvelopeConstants {
    EnvelopeConstants { lambda, mu, rho, gamma_max: f64::INFINITY }
}

#[test]
fn contraction_radius_example() {
    let r = eula_contraction(&constants(12.0, 1.0, 1.0), 1e-3, 0.0, 2, DEFAULT_C0).unwrap();
    assert!((r.c_radius - 1.012).abs() < 1e-12);
    assert!(r.c_radius <= 7.0 / 6.0);
    assert!((r.c_q - 7.0 * 12.0 / DEFAULT_C0).abs() < 1e-9);
    assert!(r.ln_c_contraction.is_finite());
}

#[test]
fn contraction_rate_decreases_with_radius() {
    let mut prev = f64::INFINITY;
    for rho in [0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
        let r = eula_contraction(&constants(5.0, 1.0, rho), 1e-3, 0.0, 2, DEFAULT_C0).unwrap();
        // Once the exponential factor dominates, C₇ falls strictly.
        if rho >= 0.1 {
            assert!(r.ln_c_contraction < prev, "rho {rho}");
        }
        prev = r.ln_c_contraction;
    }
    let flat = eula_contraction(&constants(5.0, 1.0, 0.0), 1e-3, 0.0, 2, DEFAULT_C0).unwrap();
    assert!((flat.ln_c_contraction - 0.5f64.ln()).abs() < 1e-15);
}

#[test]
fn contraction_rejects_large_steps() {
    assert!(eula_contraction(&constants(12.0, 1.0, 1.0), 0.02, 0.0, 2, DEFAULT_C0).is_err());
    assert!(eula_contraction(&constants(12.0, 1.0, 1.0), -1e-3, 0.0, 2, DEFAULT_C0).is_err());
}

#[test]
fn transient_term_at_start_is_scaled_initial_distance() {
    let r = eula_contraction(&constants(12.0, 1.0, 0.2), 1e-4, 0.0, 2, DEFAULT_C0).unwrap();
    let p = r.predict(0, 0.3, 0.0);
    assert!((p.ln_transient - (r.c_radius * r.c_q + 0.3f64.ln())).abs() < 1e-12);
}

#[test]
fn perturbation_bound_dominates_exact_w1() {
    let alpha = 0.1;
    let h1 = |x: &[f64]| 0.5 * x[0] * x[0];
    let h2 = |x: f64| 0.5 * x * x + alpha * x.sin().powi(2);
    let axes = [AxisRule::uniform(-12.0, 12.0, 4000).unwrap()];
    let bound = perturbation_w1_bound(h1, &axes, alpha, 0.0, 1.0).unwrap();

    let p = TabulatedDensity1d::new(|x| -0.5 * x * x, -12.0, 12.0, 20_000).unwrap();
    let q = TabulatedDensity1d::new(|x| -h2(x), -12.0, 12.0, 20_000).unwrap();
    let n = 24_000;
    let dx = 24.0 / n as f64;
    let w1: f64 = (0..n)
        .map(|i| {
            let x = -12.0 + (i as f64 + 0.5) * dx;
            (p.cdf_at(x) - q.cdf_at(x)).abs() * dx
        })
        .sum();
    assert!(w1 > 0.0 && w1 <= bound, "W1 {w1} vs bound {bound}");
}

#[test]
fn perturbation_bound_preconditions() {
    let axes = [AxisRule::uniform(-5.0, 5.0, 100).unwrap()];
    let h1 = |x: &[f64]| 0.5 * x[0] * x[0];
    assert!(perturbation_w1_bound(h1, &axes, 0.0, 0.1, 1.0).is_err());
    assert!(perturbation_w1_bound(h1, &axes, 0.1, 0.0, 1.5).is_err());
}
