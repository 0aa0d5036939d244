use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use envlang::envelope::EnvelopeKind;
use envlang::experiments::tomography::{
    mse, sampling_mask, shepp_logan, tomography_experiment, Dft2, FourierLikelihood, TomographyConfig, TomographySetup,
};
use envlang::model::SmoothPotential;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn small_likelihood(seed: u64) -> FourierLikelihood {
    let n = 8;
    let mask = sampling_mask(n, 0.4, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<Complex64> = (0..n * n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    FourierLikelihood::new(n, mask, y, 0.5).unwrap()
}

/// Naive unitary DFT, `O(n⁴)`.
fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
    let scale = 1.0 / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        for l in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let phase = -2.0 * std::f64::consts::PI * ((k * i + l * j) % n) as f64 / n as f64;
                    s += Complex64::from_polar(x[i * n + j], phase);
                }
            }
            out[k * n + l] = s * scale;
        }
    }
    out
}

#[test]
fn dft_matches_naive_transform_and_is_unitary() {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_vec(&mut rng, n * n);
    let f = Dft2::new(n).forward_real(&x);
    let naive = naive_dft(&x, n);
    for (a, b) in f.iter().zip(&naive) {
        assert!((a - b).norm() < 1e-12);
    }
    let ex: f64 = x.iter().map(|v| v * v).sum();
    let ef: f64 = f.iter().map(|v| v.norm_sqr()).sum();
    assert!((ex - ef).abs() < 1e-12 * ex);
    let back = Dft2::new(n).adjoint_real(&f);
    for (a, b) in back.iter().zip(&x) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn adjoint_passes_dot_product_test() {
    let lik = small_likelihood(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = random_vec(&mut rng, 64);
        let z: Vec<Complex64> = (0..64).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let ax = lik.forward(&x);
        let lhs: f64 = ax.iter().zip(&z).map(|(a, b)| (a.conj() * b).re).sum();
        let rhs: f64 = x.iter().zip(lik.adjoint(&z)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let lik = small_likelihood(4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = 1e-6;
    for _ in 0..5 {
        let x = random_vec(&mut rng, 64);
        let mut g = vec![0.0; 64];
        lik.gradient(&x, &mut g);
        let mut worst: f64 = 0.0;
        for i in 0..64 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (lik.value(&xp) - lik.value(&xm)) / (2.0 * eps);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
        assert!(worst < 1e-4, "{worst}");
    }
}

#[test]
fn hessian_vec_is_independent_of_point_and_matches_gradient_difference() {
    let lik = small_likelihood(6);
    assert!(lik.has_hessian_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = random_vec(&mut rng, 64);
    let (x1, x2) = (random_vec(&mut rng, 64), random_vec(&mut rng, 64));
    let (mut h1, mut h2) = (vec![0.0; 64], vec![0.0; 64]);
    lik.hessian_vec(&x1, &v, &mut h1);
    lik.hessian_vec(&x2, &v, &mut h2);
    assert!(h1.iter().zip(&h2).all(|(a, b)| (a - b).abs() < 1e-12));
    // Linear gradient: ∇f(x + v) − ∇f(x) = Hv exactly.
    let xv: Vec<f64> = x1.iter().zip(&v).map(|(a, b)| a + b).collect();
    let (mut g0, mut g1) = (vec![0.0; 64], vec![0.0; 64]);
    lik.gradient(&x1, &mut g0);
    lik.gradient(&xv, &mut g1);
    for i in 0..64 {
        assert!((g1[i] - g0[i] - h1[i]).abs() < 1e-10);
    }
}

#[test]
fn phantom_and_mask_shapes() {
    let img = shepp_logan(32);
    assert_eq!(img.len(), 1024);
    assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(img.iter().any(|&v| v > 0.9));
    let mask = sampling_mask(32, 0.15, 9).unwrap();
    let kept = mask.iter().filter(|&&m| m).count();
    assert_eq!(kept, (0.15f64 * 1024.0).round() as usize);
    assert!(mask[0], "the zero frequency is always sampled");
    assert_eq!(mask, sampling_mask(32, 0.15, 9).unwrap());
    assert!(sampling_mask(32, 1.0, 9).unwrap().iter().all(|&m| m));
}

#[test]
fn setup_rejects_bad_sizes() {
    assert!(TomographySetup::new(12, 1e-2, 100.0, 0.15, 0).is_err());
    assert!(TomographySetup::new(1, 1e-2, 100.0, 0.15, 0).is_err());
}

#[test]
fn fully_sampled_low_noise_posterior_mean_recovers_phantom() {
    let mut cfg = TomographyConfig::new(8, 4000, 10);
    cfg.sigma = 1e-3;
    cfg.beta = 0.0;
    cfg.mask_fraction = 1.0;
    cfg.mse_stride = 500;
    let report = tomography_experiment(&cfg).unwrap();
    for kind in [EnvelopeKind::MoreauYosida, EnvelopeKind::ForwardBackward] {
        let arm = report.arm(kind).unwrap();
        let err = mse(&arm.posterior_mean, &report.setup.truth);
        assert!(err < 1e-4, "{kind}: {err}");
        assert!((arm.final_mse - err).abs() < 1e-15);
        assert_eq!(arm.mse.last().unwrap().0, 4000);
    }
}
