//! Tomographic reconstruction from a subsampled 2-D Fourier transform,
//!
//! ```text
//! π(x) ∝ exp(−‖y − M F x‖² / 2σ² − β TV(x) − 1_{[0,1]^d}(x)),
//! ```
//!
//! with `F` the unitary DFT and `M` a frequency mask. The truth is a
//! Shepp–Logan phantom; the observation adds independent `N(0, σ²)` noise
//! to the real and imaginary part of every kept coefficient.

use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};

use crate::envelope::EnvelopeKind;
use crate::error::{validation, Result};
use crate::exec::Execution;
use crate::model::{CompositeTarget, ConvexBody, Lipschitz, NonSmoothPotential, ProxSettings, SmoothPotential};
use crate::sampler::{run_single_chain, ChainConfig, ChainObserver, SampleRecord, Schedule, StepInfo};

// (intensity, semi-axis a, semi-axis b, centre x, centre y, rotation in degrees)
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Modified Shepp–Logan phantom on an `n × n` grid, row-major with the
/// first row at the top, each pixel averaged over 4 × 4 sub-samples and
/// clipped to `[0, 1]`.
pub fn shepp_logan(n: usize) -> Vec<f64> {
    const SUB: usize = 4;
    let mut img = vec![0.0; n * n];
    let nf = n as f64;
    let ellipses: Vec<_> = SHEPP_LOGAN
        .iter()
        .map(|e| {
            let phi = e[5].to_radians();
            (e[0], e[1] * e[1], e[2] * e[2], e[3], e[4], phi.cos(), phi.sin())
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for si in 0..SUB {
                for sj in 0..SUB {
                    let y = 1.0 - 2.0 * (i as f64 + (si as f64 + 0.5) / SUB as f64) / nf;
                    let x = -1.0 + 2.0 * (j as f64 + (sj as f64 + 0.5) / SUB as f64) / nf;
                    for &(v, a2, b2, x0, y0, c, s) in &ellipses {
                        let (dx, dy) = (x - x0, y - y0);
                        let u = dx * c + dy * s;
                        let w = -dx * s + dy * c;
                        if u * u / a2 + w * w / b2 <= 1.0 {
                            acc += v;
                        }
                    }
                }
            }
            img[i * n + j] = (acc / (SUB * SUB) as f64).clamp(0.0, 1.0);
        }
    }
    img
}

/// Frequency mask keeping `round(fraction·n²)` coefficients: radial lines
/// through the zero frequency until about two thirds of the budget is
/// used, then uniformly random coefficients.
pub fn sampling_mask(n: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(validation("mask fraction must lie in (0, 1]"));
    }
    let total = n * n;
    let budget = ((fraction * total as f64).round() as usize).clamp(1, total);
    let mut mask = vec![false; total];
    let wrap = |c: i64| -> usize { c.rem_euclid(n as i64) as usize };
    let mut kept = 0;
    let radial_budget = budget * 2 / 3;
    let mut lines = 1usize;
    while kept < radial_budget && lines <= 4 * n {
        mask.iter_mut().for_each(|m| *m = false);
        kept = 0;
        for l in 0..lines {
            let theta = std::f64::consts::PI * l as f64 / lines as f64;
            let (c, s) = (theta.cos(), theta.sin());
            let half = n as f64 / 2.0;
            let mut t = -half;
            while t <= half {
                let u = wrap((t * c).round() as i64);
                let v = wrap((t * s).round() as i64);
                let idx = u * n + v;
                if !mask[idx] {
                    mask[idx] = true;
                    kept += 1;
                }
                t += 0.5;
            }
        }
        if kept >= radial_budget {
            break;
        }
        lines += 1;
    }
    if kept > budget {
        // Too coarse a grid for the requested fraction: fall back to random picks.
        mask.iter_mut().for_each(|m| *m = false);
        mask[0] = true;
        kept = 1;
    }
    let mut rest: Vec<usize> = (0..total).filter(|&i| !mask[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    for &i in rest.iter().take(budget - kept) {
        mask[i] = true;
    }
    Ok(mask)
}

/// Unitary 2-D DFT on square images.
#[derive(Clone)]
pub struct Dft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft2").field("n", &self.n).finish()
    }
}

impl Dft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                buf.swap(i * n + j, j * n + i);
            }
        }
    }

    /// In-place transform of a row-major `n × n` buffer.
    pub fn apply(&self, buf: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process(buf);
        self.transpose(buf);
        plan.process(buf);
        self.transpose(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply(&mut buf, false);
        buf
    }

    /// Adjoint of `x ↦ F x` from real images to complex coefficients.
    pub fn adjoint_real(&self, z: &[Complex64]) -> Vec<f64> {
        let mut buf = z.to_vec();
        self.apply(&mut buf, true);
        buf.iter().map(|c| c.re).collect()
    }
}

/// `f(x) = ‖M(F x − y)‖² / 2σ²`; observations at dropped frequencies are ignored.
#[derive(Clone, Debug)]
pub struct FourierLikelihood {
    n: usize,
    mask: Vec<bool>,
    y: Vec<Complex64>,
    inv_sigma2: f64,
    dft: Dft2,
}

impl FourierLikelihood {
    pub fn new(n: usize, mask: Vec<bool>, y: Vec<Complex64>, sigma: f64) -> Result<Self> {
        if mask.len() != n * n || y.len() != n * n {
            return Err(validation("mask and observation must have n*n entries"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(validation("sigma must be positive"));
        }
        Ok(Self {
            n,
            mask,
            y,
            inv_sigma2: 1.0 / (sigma * sigma),
            dft: Dft2::new(n),
        })
    }

    pub fn dft(&self) -> &Dft2 {
        &self.dft
    }

    /// `M F x`, with zeros at dropped frequencies.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut z = self.dft.forward_real(x);
        for (zi, &m) in z.iter_mut().zip(&self.mask) {
            if !m {
                *zi = Complex64::new(0.0, 0.0);
            }
        }
        z
    }

    /// Adjoint of [`forward`](Self::forward).
    pub fn adjoint(&self, z: &[Complex64]) -> Vec<f64> {
        let masked: Vec<Complex64> = z
            .iter()
            .zip(&self.mask)
            .map(|(&c, &m)| if m { c } else { Complex64::new(0.0, 0.0) })
            .collect();
        self.dft.adjoint_real(&masked)
    }

    fn residual(&self, x: &[f64]) -> Vec<Complex64> {
        let mut r = self.forward(x);
        for ((ri, yi), &m) in r.iter_mut().zip(&self.y).zip(&self.mask) {
            if m {
                *ri -= yi;
            }
        }
        r
    }
}

impl SmoothPotential for FourierLikelihood {
    fn dim(&self) -> usize {
        self.n * self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.inv_sigma2 * self.residual(x).iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.value_and_gradient(x, out);
    }

    fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let r = self.residual(x);
        let value = 0.5 * self.inv_sigma2 * r.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let g = self.dft.adjoint_real(&r);
        for (o, gi) in out.iter_mut().zip(g) {
            *o = gi * self.inv_sigma2;
        }
        value
    }

    fn hessian_vec(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        let z = self.forward(v);
        let g = self.dft.adjoint_real(&z);
        for (o, gi) in out.iter_mut().zip(g) {
            *o = gi * self.inv_sigma2;
        }
    }

    fn has_hessian_vec(&self) -> bool {
        true
    }

    fn lipschitz(&self, working_radius: f64) -> Lipschitz {
        let y_norm = self
            .y
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| c.norm_sqr())
            .sum::<f64>()
            .sqrt();
        Lipschitz {
            lambda1: Some(self.inv_sigma2 * (working_radius + y_norm)),
            lambda2: self.inv_sigma2,
            lambda3: 0.0,
        }
    }
}

/// Problem instance: phantom, mask, noise level, TV weight and data.
#[derive(Clone, Debug)]
pub struct TomographySetup {
    pub size: usize,
    pub mask: Vec<bool>,
    pub sigma: f64,
    pub beta: f64,
    pub truth: Vec<f64>,
    pub observation: Vec<Complex64>,
}

impl TomographySetup {
    pub fn new(size: usize, sigma: f64, beta: f64, mask_fraction: f64, seed: u64) -> Result<Self> {
        if size < 2 || !size.is_power_of_two() {
            return Err(validation(format!("image size must be a power of two >= 2, got {size}")));
        }
        if !(sigma > 0.0) || !(beta >= 0.0) {
            return Err(validation("need sigma > 0 and beta >= 0"));
        }
        let truth = shepp_logan(size);
        let mask = sampling_mask(size, mask_fraction, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let noise = Normal::new(0.0, sigma).expect("sigma checked");
        let clean = Dft2::new(size).forward_real(&truth);
        let observation = clean
            .iter()
            .zip(&mask)
            .map(|(&c, &m)| {
                if m {
                    c + Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(Self {
            size,
            mask,
            sigma,
            beta,
            truth,
            observation,
        })
    }

    pub fn kept_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    pub fn likelihood(&self) -> Result<FourierLikelihood> {
        FourierLikelihood::new(self.size, self.mask.clone(), self.observation.clone(), self.sigma)
    }

    /// `L_f = 1/σ²`.
    pub fn lipschitz_gradient(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }

    pub fn target(&self, prox: Option<ProxSettings>) -> Result<Arc<CompositeTarget>> {
        let d = self.size * self.size;
        let body = ConvexBody::new_box(vec![0.0; d], vec![1.0; d])?;
        let mut g = NonSmoothPotential::total_variation(body, self.beta, self.size, self.size)?;
        if let Some(p) = prox {
            g = g.with_prox_settings(p)?;
        }
        Ok(Arc::new(CompositeTarget::new(Arc::new(self.likelihood()?), g)?))
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyConfig {
    pub size: usize,
    pub sigma: f64,
    pub beta: f64,
    pub mask_fraction: f64,
    pub n_iter: usize,
    pub burn_in_frac: f64,
    pub seed: u64,
    /// Iterations between MSE records of the running posterior mean.
    pub mse_stride: usize,
    /// Iterations between log-density records.
    pub trace_stride: usize,
    pub prox: Option<ProxSettings>,
    pub execution: Execution,
}

impl TomographyConfig {
    pub fn new(size: usize, n_iter: usize, seed: u64) -> Self {
        Self {
            size,
            sigma: 1e-2,
            beta: 100.0,
            mask_fraction: 0.15,
            n_iter,
            burn_in_frac: 0.1,
            seed,
            mse_stride: 100,
            trace_stride: 10,
            prox: None,
            execution: Execution::default(),
        }
    }

    /// `γ = 1/(5 L_f)`.
    pub fn gamma(&self) -> f64 {
        self.sigma * self.sigma / 5.0
    }

    /// `h = 1/(L_f + 1/γ)`.
    pub fn step(&self) -> f64 {
        1.0 / (1.0 / (self.sigma * self.sigma) + 1.0 / self.gamma())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyArm {
    pub kind: EnvelopeKind,
    /// `(iteration, −F_γ(x_iteration))`.
    pub log_density: Vec<(usize, f64)>,
    /// `(iteration, MSE of the running posterior mean)`, after burn-in.
    pub mse: Vec<(usize, f64)>,
    pub posterior_mean: Vec<f64>,
    pub final_mse: f64,
    pub inexact_steps: usize,
    pub max_inexactness: f64,
}

#[derive(Clone, Debug)]
pub struct TomographyReport {
    pub setup: TomographySetup,
    pub config: TomographyConfig,
    pub gamma: f64,
    pub h: f64,
    pub burn_in: usize,
    pub arms: Vec<TomographyArm>,
}

impl TomographyReport {
    pub fn arm(&self, kind: EnvelopeKind) -> Option<&TomographyArm> {
        self.arms.iter().find(|a| a.kind == kind)
    }
}

struct Recorder {
    truth: Arc<Vec<f64>>,
    mse_stride: usize,
    trace_stride: usize,
    sum: Vec<f64>,
    count: usize,
    log_density: Vec<(usize, f64)>,
    mse: Vec<(usize, f64)>,
}

impl ChainObserver for Recorder {
    fn observe(&mut self, iteration: usize, x: &[f64], retained: bool, info: &StepInfo) {
        let previous = iteration - 1;
        if previous % self.trace_stride == 0 {
            self.log_density.push((previous, -info.envelope_value));
        }
        if retained {
            self.count += 1;
            for (s, v) in self.sum.iter_mut().zip(x) {
                *s += v;
            }
        }
        if self.count > 0 && iteration % self.mse_stride == 0 {
            let n = self.count as f64;
            let e = self.sum.iter().zip(self.truth.iter()).map(|(s, t)| (s / n - t).powi(2)).sum::<f64>();
            self.mse.push((iteration, e / self.sum.len() as f64));
        }
    }
}

/// Runs MYULA and FBULA on one tomography instance with common random numbers.
pub fn tomography_experiment(cfg: &TomographyConfig) -> Result<TomographyReport> {
    if cfg.mse_stride == 0 || cfg.trace_stride == 0 {
        return Err(validation("record strides must be positive"));
    }
    let setup = TomographySetup::new(cfg.size, cfg.sigma, cfg.beta, cfg.mask_fraction, cfg.seed)?;
    let target = setup.target(cfg.prox)?;
    let (gamma, h) = (cfg.gamma(), cfg.step());
    let truth = Arc::new(setup.truth.clone());
    let kinds = [EnvelopeKind::MoreauYosida, EnvelopeKind::ForwardBackward];
    let runs = cfg.execution.map(kinds.len(), |a| {
        let mut cc = ChainConfig::new(kinds[a], Schedule::constant(gamma, h), cfg.n_iter, cfg.seed);
        cc.burn_in_frac = cfg.burn_in_frac;
        cc.record = SampleRecord::None;
        cc.execution = Execution::Sequential;
        let mut rec = Recorder {
            truth: Arc::clone(&truth),
            mse_stride: cfg.mse_stride,
            trace_stride: cfg.trace_stride,
            sum: vec![0.0; target.dim()],
            count: 0,
            log_density: Vec::new(),
            mse: Vec::new(),
        };
        let out = run_single_chain(&target, &cc, 0, &mut rec)?;
        let posterior_mean = out.mean.clone();
        Ok(TomographyArm {
            kind: kinds[a],
            final_mse: mse(&posterior_mean, &truth),
            log_density: rec.log_density,
            mse: rec.mse,
            posterior_mean,
            inexact_steps: out.inexact_steps,
            max_inexactness: out.max_inexactness,
        })
    });
    let arms = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let burn_in = (cfg.burn_in_frac * cfg.n_iter as f64).floor() as usize;
    Ok(TomographyReport {
        setup,
        config: cfg.clone(),
        gamma,
        h,
        burn_in,
        arms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_step_sizes() {
        let c = TomographyConfig::new(32, 10, 0);
        assert!((1.0 / (c.sigma * c.sigma) - 1e4).abs() < 1e-8);
        assert!((c.gamma() - 2e-5).abs() < 1e-18);
        assert!((c.step() - 1.0 / 6e4).abs() < 1e-15);
        assert!((c.step() - 1.67e-5).abs() < 1e-7);
        assert_eq!(c.beta, 100.0);
    }

    #[test]
    fn phantom_range() {
        let p = shepp_logan(32);
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(p.iter().any(|&v| v > 0.5));
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn mask_fraction_is_kept() {
        for seed in 0..3 {
            let m = sampling_mask(32, 0.15, seed).unwrap();
            let kept = m.iter().filter(|&&b| b).count();
            assert_eq!(kept, (0.15f64 * 1024.0).round() as usize);
            assert!(m[0], "zero frequency kept");
        }
        assert!(sampling_mask(8, 1.0, 0).unwrap().iter().all(|&b| b));
    }

    #[test]
    fn dft_is_unitary() {
        let dft = Dft2::new(8);
        let x: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let z = dft.forward_real(&x);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ez: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        assert!((ex - ez).abs() < 1e-12 * ex);
        let back = dft.adjoint_real(&z);
        for (a, b) in x.iter().zip(back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
