use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use envlang::model::{ConvexBody, NonSmoothPotential};
use envlang::prox::{prox_1d_tv, prox_ball, prox_box, prox_l1, prox_l1_box, prox_tv_box, total_variation};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `argmin_z ½(z − x)² + t|z|` by scanning a grid and refining.
fn soft_threshold_by_scan(x: f64, t: f64) -> f64 {
    let obj = |z: f64| 0.5 * (z - x).powi(2) + t * z.abs();
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..8 {
        let step = (hi - lo) / 1000.0;
        let best = (0..=1000)
            .map(|k| lo + k as f64 * step)
            .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        lo = best - step;
        hi = best + step;
    }
    0.5 * (lo + hi)
}

#[test]
fn soft_threshold_examples() {
    assert!((prox_l1(&[2.0], 0.5, 1.0).point[0] - 1.5).abs() < 1e-15);
    assert_eq!(prox_l1(&[0.3], 0.5, 1.0).point[0], 0.0);
    for (x, t) in [(2.0, 0.5), (0.3, 0.5), (-1.7, 0.2), (0.05, 0.01)] {
        let scan = soft_threshold_by_scan(x, t);
        // The objective is flat to rounding within ~1e-8 of the minimiser.
        assert!((prox_l1(&[x], t, 1.0).point[0] - scan).abs() < 1e-6);
    }
}

#[test]
fn moreau_decomposition_for_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lo = [-1.0, 0.0, 2.0];
    let hi = [1.0, 0.5, 3.0];
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p = prox_box(&x, &lo, &hi).point;
        // The conjugate of the box indicator is the support function; its
        // scaled prox is x − clamp(x).
        let q: Vec<f64> = x.iter().zip(lo.iter().zip(&hi)).map(|(v, (l, h))| v - v.clamp(*l, *h)).collect();
        for i in 0..3 {
            assert!((p[i] + q[i] - x[i]).abs() <= 4.0 * f64::EPSILON * x[i].abs());
        }
    }
}

// Independent forward differences for the TV oracle.
fn grad2(z: &[f64], n: usize) -> Vec<[f64; 2]> {
    let mut g = vec![[0.0; 2]; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if i + 1 < n {
                g[k][0] = z[k + n] - z[k];
            }
            if j + 1 < n {
                g[k][1] = z[k + 1] - z[k];
            }
        }
    }
    g
}

fn div2(p: &[[f64; 2]], n: usize) -> Vec<f64> {
    // −∇ᵀp
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if i + 1 < n {
                out[k] += p[k][0];
                out[k + n] -= p[k][0];
            }
            if j + 1 < n {
                out[k] += p[k][1];
                out[k + 1] -= p[k][1];
            }
        }
    }
    out
}

/// Accelerated Chambolle–Pock for `½‖z − b‖² + λ TV(z) + 1_[lo,hi]`.
fn tv_box_oracle(b: &[f64], n: usize, lambda: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut x: Vec<f64> = b.iter().map(|v| v.clamp(lo, hi)).collect();
    let mut x_bar = x.clone();
    let mut p = vec![[0.0; 2]; n * n];
    let (mut tau, mut sigma) = (0.3f64, 0.3f64);
    for _ in 0..200_000 {
        let g = grad2(&x_bar, n);
        for k in 0..n * n {
            let q = [p[k][0] + sigma * g[k][0], p[k][1] + sigma * g[k][1]];
            let m = (q[0] * q[0] + q[1] * q[1]).sqrt();
            let s = if m > lambda { lambda / m } else { 1.0 };
            p[k] = [q[0] * s, q[1] * s];
        }
        let kt = div2(&p, n);
        let x_old = x.clone();
        for k in 0..n * n {
            let v = x[k] + tau * kt[k];
            x[k] = ((v + tau * b[k]) / (1.0 + tau)).clamp(lo, hi);
        }
        let theta = 1.0 / (1.0 + 2.0 * tau).sqrt();
        tau *= theta;
        sigma /= theta;
        for k in 0..n * n {
            x_bar[k] = x[k] + theta * (x[k] - x_old[k]);
        }
    }
    x
}

#[test]
fn tv_box_prox_matches_primal_dual_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..6 {
        let b: Vec<f64> = (0..16).map(|_| rng.random_range(-0.3..1.3)).collect();
        let lambda = [0.01, 0.05, 0.1, 0.3, 1.0, 5.0][case];
        let ours = prox_tv_box(&b, 4, 4, lambda, 1.0, 0.0, 1.0, 1e-9, 200_000);
        let oracle = tv_box_oracle(&b, 4, lambda, 0.0, 1.0);
        let err = norm(&diff(&ours.point, &oracle));
        assert!(err <= 1e-4, "λ={lambda}: {err}");
        assert!(ours.inexactness <= 1e-6, "λ={lambda}: certified {}", ours.inexactness);
    }
}

#[test]
fn tv_box_two_level_image_collapses_to_clipped_mean() {
    let mut b = vec![0.9; 16];
    for v in b.iter_mut().take(8) {
        *v = 1.3;
    }
    let r = prox_tv_box(&b, 4, 4, 50.0, 1.0, 0.0, 1.0, 1e-9, 100_000);
    let oracle = tv_box_oracle(&b, 4, 50.0, 0.0, 1.0);
    for (v, o) in r.point.iter().zip(&oracle) {
        assert!((v - 1.0).abs() < 1e-6 && (o - 1.0).abs() < 1e-6);
    }
}

#[test]
fn tv_of_simple_images() {
    assert_eq!(total_variation(&[0.3; 9], 3, 3), 0.0);
    // A vertical edge of height 1 across 3 rows.
    let img = [0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
    assert!((total_variation(&img, 3, 3) - 3.0).abs() < 1e-15);
}

#[test]
fn tv_regulariser_prox_stays_in_box() {
    let body = ConvexBody::new_box(vec![0.0; 16], vec![1.0; 16]).unwrap();
    let g = NonSmoothPotential::total_variation(body.clone(), 3.0, 4, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..2.0)).collect();
        assert!(body.contains(&g.prox(&x, 0.1).point));
    }
}

/// KKT conditions of `½‖z − y‖² + λ Σ|z_{i+1} − z_i|` via the running sum
/// of `y − z`.
fn tv1d_kkt_violation(y: &[f64], z: &[f64], lambda: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut s = 0.0;
    for k in 0..y.len() {
        s += y[k] - z[k];
        if k + 1 == y.len() {
            worst = worst.max(s.abs());
        } else {
            let jump = z[k + 1] - z[k];
            if jump.abs() > 1e-9 {
                worst = worst.max((s + lambda * jump.signum()).abs());
            } else {
                worst = worst.max(s.abs() - lambda);
            }
        }
    }
    worst
}

#[test]
fn tv1d_ramp_ends_pulled_inward() {
    let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let z = prox_1d_tv(&y, 0.5).point;
    assert!((z[0] - 0.5).abs() < 1e-12 && (z[9] - 8.5).abs() < 1e-12);
    assert!(tv1d_kkt_violation(&y, &z, 0.5) < 1e-10);
}

fn firmly_nonexpansive(px: &[f64], py: &[f64], x: &[f64], y: &[f64]) -> bool {
    let dp = diff(px, py);
    dot(&dp, &dp) <= dot(&dp, &diff(x, y)) + 1e-12
}

proptest! {
    #[test]
    fn closed_form_operators_are_firmly_nonexpansive(
        x in prop::collection::vec(-5.0f64..5.0, 4),
        y in prop::collection::vec(-5.0f64..5.0, 4),
        t in 0.0f64..2.0,
    ) {
        let lo = [-1.0, 0.0, -2.0, 0.5];
        let hi = [1.0, 2.0, 0.0, 3.0];
        prop_assert!(firmly_nonexpansive(&prox_box(&x, &lo, &hi).point, &prox_box(&y, &lo, &hi).point, &x, &y));
        prop_assert!(firmly_nonexpansive(&prox_l1(&x, t, 1.0).point, &prox_l1(&y, t, 1.0).point, &x, &y));
        prop_assert!(firmly_nonexpansive(&prox_l1_box(&x, t, &lo, &hi).point, &prox_l1_box(&y, t, &lo, &hi).point, &x, &y));
        let c = [0.1, -0.2, 0.3, 0.0];
        prop_assert!(firmly_nonexpansive(&prox_ball(&x, &c, 1.5).point, &prox_ball(&y, &c, 1.5).point, &x, &y));
    }

    #[test]
    fn tv1d_satisfies_kkt(y in prop::collection::vec(-3.0f64..3.0, 1..40), lambda in 0.0f64..2.0) {
        let z = prox_1d_tv(&y, lambda).point;
        prop_assert!(tv1d_kkt_violation(&y, &z, lambda) < 1e-9);
    }

    #[test]
    fn tv_box_prox_is_nonexpansive(
        x in prop::collection::vec(-0.5f64..1.5, 9),
        y in prop::collection::vec(-0.5f64..1.5, 9),
        lambda in 0.01f64..1.0,
    ) {
        let px = prox_tv_box(&x, 3, 3, lambda, 1.0, 0.0, 1.0, 1e-8, 50_000);
        let py = prox_tv_box(&y, 3, 3, lambda, 1.0, 0.0, 1.0, 1e-8, 50_000);
        let slack = px.inexactness + py.inexactness;
        prop_assert!(norm(&diff(&px.point, &py.point)) <= norm(&diff(&x, &y)) + slack + 1e-12);
    }
}
