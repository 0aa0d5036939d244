//! Numerical evaluation of the non-asymptotic constants and bounds that
//! accompany the envelope samplers.
//!
//! * [`steiner_i1`], [`steiner_i2`]: tube integrals `I₁(γ)`, `I₂(γ)` from
//!   the intrinsic volumes of `K`.
//! * [`fb_wasserstein_bound`]: the bound `C_env(γ)` on `W₁` between the FB
//!   envelope density and the target.
//! * [`eula_contraction`]: the contraction constants `C₅, C₆, C₇`, the
//!   per-step error `α` and the geometric-decay prediction for a fixed
//!   `(γ, h)`.
//! * [`perturbation_w1_bound`]: `W₁` between two densities whose
//!   potentials are sandwiched as `β′h₁ + β ≤ h₂ ≤ h₁ + α`.
//!
//! Norms `‖x‖` are taken relative to the body anchor, so shifted boxes are
//! handled in the frame where `B(0, r) ⊆ K ⊆ B(0, R)` holds.
//!
//! `C₇` underflows for realistic constants and is carried as `ln C₇`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::envelope::{fb_gamma_max, EnvelopeConstants};
use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::model::{CompositeTarget, ConvexBody};
use crate::reference::{integrate, AxisRule, QuadratureOptions};
use crate::sampler::step_rule;
use crate::vecops;

fn volumes(body: &ConvexBody) -> Result<&[f64]> {
    body.intrinsic_volumes()
        .ok_or_else(|| Error::Capability("the body has no intrinsic volumes".into()))
}

/// `I₁(γ) = Σ_{i<d} vol_i(K) (2πγ)^{(d−i)/2}`.
pub fn steiner_i1(body: &ConvexBody, gamma: f64) -> Result<f64> {
    let v = volumes(body)?;
    let d = body.dim();
    Ok((0..d).map(|i| v[i] * (2.0 * PI * gamma).powf((d - i) as f64 / 2.0)).sum())
}

/// `I₂(γ) = Σ_{i<d} vol_i(K) (2πγ)^{(d−i)/2} (√(γ(d−i+3)) + R)`.
pub fn steiner_i2(body: &ConvexBody, gamma: f64) -> Result<f64> {
    let v = volumes(body)?;
    let d = body.dim();
    let r = body.outer_radius();
    Ok((0..d)
        .map(|i| {
            let k = (d - i) as f64;
            v[i] * (2.0 * PI * gamma).powf(k / 2.0) * ((gamma * (k + 3.0)).sqrt() + r)
        })
        .sum())
}

/// How the integrals inside `C₁` are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IntegralMethod {
    /// Quadrature for `d ≤ 2`, Monte Carlo otherwise.
    Auto,
    Quadrature { nodes_per_axis: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

pub const DEFAULT_BOUND_NODES: usize = 200;
pub const DEFAULT_BOUND_SAMPLES: usize = 1_000_000;
const MC_BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodUsed {
    Quadrature,
    MonteCarlo,
}

impl std::fmt::Display for MethodUsed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodUsed::Quadrature => "quadrature",
            MethodUsed::MonteCarlo => "monte-carlo",
        })
    }
}

/// Pieces of the `W₁(p_γ^FB, p)` bound.
#[derive(Clone, Debug, PartialEq)]
pub struct WassersteinBoundReport {
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub i1: f64,
    pub i2_gamma: f64,
    /// `I₂(γ/(1 − γλ₂))`.
    pub i2_shifted: f64,
    pub volume: f64,
    pub outer_radius: f64,
    pub total: f64,
    pub method: MethodUsed,
    /// Batch standard error of `total` (Monte Carlo only).
    pub standard_error: Option<f64>,
    pub f_max: f64,
    pub f_min: f64,
    pub g_max: f64,
    pub g_min: f64,
}

impl WassersteinBoundReport {
    /// Recombines the stored constants into the bound.
    pub fn recombine(&self) -> f64 {
        combine(self.c1, self.c2, self.c3, self.c4, self.i1, self.i2_gamma, self.i2_shifted, self.volume, self.outer_radius)
    }
}

#[allow(clippy::too_many_arguments)]
fn combine(c1: f64, c2: f64, c3: f64, c4: f64, i1: f64, i2: f64, i2s: f64, vol: f64, r: f64) -> f64 {
    c1 + (c3 * r * i1 + c3 * i2 + c2 * i2s) / (vol + i1) + c4 * r
}

// The four integrals of C₁.
#[derive(Clone, Copy, Debug, Default)]
struct C1Integrals {
    // ∫_K ‖x‖ e^{−(1−γλ₂)f}
    num_tilted: f64,
    // ∫ e^{−f − dist²/2γ}
    den_plain: f64,
    // ∫_K ‖x‖ e^{−f}
    num_plain: f64,
    // ∫ e^{−(1−γλ₂)f − dist²(1−γλ₂)/2γ}
    den_tilted: f64,
}

fn c1_from(ints: &C1Integrals, g_max: f64, f_min: f64, gamma: f64, l2: f64) -> f64 {
    let a = 2.0 * g_max - gamma * l2 * f_min;
    a.exp() * ints.num_tilted / ints.den_plain - (-a).exp() * ints.num_plain / ints.den_tilted
}

/// Evaluates `C_env(γ)` and its constituents.
///
/// `max f` and `min f` are taken over the window `K + B(0, 6√γ)` by
/// projected gradient search.
pub fn fb_wasserstein_bound(target: &Arc<CompositeTarget>, gamma: f64, method: IntegralMethod) -> Result<WassersteinBoundReport> {
    let gamma_max = fb_gamma_max(target);
    if !(gamma > 0.0 && gamma < gamma_max) {
        return Err(validation(format!("gamma must lie in (0, {gamma_max}), got {gamma}")));
    }
    let body = target.body();
    let d = target.dim();
    let l2 = target.lipschitz().lambda2;
    let shrink = 1.0 - gamma * l2;
    let vol = body.volume().ok_or_else(|| Error::Capability("the body has no intrinsic volumes".into()))?;
    let i1 = steiner_i1(body, gamma)?;
    let i2_gamma = steiner_i2(body, gamma)?;
    let i2_shifted = steiner_i2(body, gamma / shrink)?;
    let (f_max, f_min) = smooth_extremes(target, 6.0 * gamma.sqrt());
    let gb = target.nonsmooth().bounds();
    let c3 = (f_max - f_min).exp();
    let c2 = (f_max - f_min + 2.0 * gb.max).exp();
    let c4 = (gb.max - gb.min).exp() - (gb.min - gb.max).exp();
    let r = body.outer_radius();

    let method = match method {
        IntegralMethod::Auto if d <= 2 => IntegralMethod::Quadrature { nodes_per_axis: DEFAULT_BOUND_NODES },
        IntegralMethod::Auto => IntegralMethod::MonteCarlo { samples: DEFAULT_BOUND_SAMPLES, seed: 0 },
        m => m,
    };
    let (c1, used, se) = match method {
        IntegralMethod::Quadrature { nodes_per_axis } => {
            if d > 2 {
                return Err(validation("quadrature bounds support d <= 2"));
            }
            let ints = c1_quadrature(target, gamma, shrink, nodes_per_axis)?;
            (c1_from(&ints, gb.max, f_min, gamma, l2), MethodUsed::Quadrature, None)
        }
        IntegralMethod::MonteCarlo { samples, seed } => {
            let batches = c1_monte_carlo(target, gamma, shrink, samples, seed)?;
            let c1s: Vec<f64> = batches.iter().map(|b| c1_from(b, gb.max, f_min, gamma, l2)).collect();
            let mut pooled = C1Integrals::default();
            for b in &batches {
                pooled.num_tilted += b.num_tilted / batches.len() as f64;
                pooled.den_plain += b.den_plain / batches.len() as f64;
                pooled.num_plain += b.num_plain / batches.len() as f64;
                pooled.den_tilted += b.den_tilted / batches.len() as f64;
            }
            let m = c1s.iter().sum::<f64>() / c1s.len() as f64;
            let var = c1s.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (c1s.len() - 1) as f64;
            let se = (var / c1s.len() as f64).sqrt();
            (c1_from(&pooled, gb.max, f_min, gamma, l2), MethodUsed::MonteCarlo, Some(se))
        }
        IntegralMethod::Auto => unreachable!(),
    };
    let total = combine(c1, c2, c3, c4, i1, i2_gamma, i2_shifted, vol, r);
    Ok(WassersteinBoundReport {
        gamma,
        c1,
        c2,
        c3,
        c4,
        i1,
        i2_gamma,
        i2_shifted,
        volume: vol,
        outer_radius: r,
        total,
        method: used,
        standard_error: se,
        f_max,
        f_min,
        g_max: gb.max,
        g_min: gb.min,
    })
}

fn c1_quadrature(target: &Arc<CompositeTarget>, gamma: f64, shrink: f64, nodes: usize) -> Result<C1Integrals> {
    let body = target.body();
    let f = target.smooth();
    let anchor = body.anchor().to_vec();
    let opts = QuadratureOptions::unchecked();
    let (lo, hi) = body.bounding_box();
    let inside: Vec<AxisRule> = (0..body.dim())
        .map(|i| AxisRule::uniform(lo[i], hi[i], nodes))
        .collect::<Result<_>>()?;
    let gamma_wide = gamma / shrink;
    let margin = 8.0 * gamma_wide.sqrt();
    let wide: Vec<AxisRule> = (0..body.dim())
        .map(|i| AxisRule::panels(&[lo[i] - margin, lo[i], hi[i], hi[i] + margin], nodes))
        .collect::<Result<_>>()?;

    // ∫ φ e^{ℓ} = e^{log_mass} E[φ]; both numerators reuse one pass each.
    let norm_in_k = |x: &[f64], out: &mut [f64]| {
        out[0] = vecops::dist(x, &anchor);
    };
    let in_k = |x: &[f64]| body.contains(x);
    let tilted = integrate(
        |x: &[f64]| if in_k(x) { -shrink * f.value(x) } else { f64::NEG_INFINITY },
        &inside,
        norm_in_k,
        1,
        &opts,
    )?;
    let plain = integrate(
        |x: &[f64]| if in_k(x) { -f.value(x) } else { f64::NEG_INFINITY },
        &inside,
        norm_in_k,
        1,
        &opts,
    )?;
    let no_phi = |_: &[f64], _: &mut [f64]| {};
    let den_plain = integrate(
        |x: &[f64]| -f.value(x) - body.distance(x).powi(2) / (2.0 * gamma),
        &wide,
        no_phi,
        0,
        &opts,
    )?;
    let den_tilted = integrate(
        |x: &[f64]| -shrink * f.value(x) - body.distance(x).powi(2) / (2.0 * gamma_wide),
        &wide,
        no_phi,
        0,
        &opts,
    )?;
    Ok(C1Integrals {
        num_tilted: tilted.log_mass.exp() * tilted.expectations[0],
        den_plain: den_plain.log_mass.exp(),
        num_plain: plain.log_mass.exp() * plain.expectations[0],
        den_tilted: den_tilted.log_mass.exp(),
    })
}

// Importance sampling for boxes. Integrals over K use uniform draws;
// whole-space integrals use the product proposal ∝ e^{−dist(x,K)²/2γ'},
// whose normaliser is Π (s_i + √(2πγ')). Draws come in antithetic pairs
// reflected through the box centre.
fn c1_monte_carlo(target: &Arc<CompositeTarget>, gamma: f64, shrink: f64, samples: usize, seed: u64) -> Result<Vec<C1Integrals>> {
    let body = target.body();
    let (lo, hi) = body
        .box_bounds()
        .ok_or_else(|| Error::Capability("Monte Carlo bounds are implemented for boxes only".into()))?;
    let (lo, hi) = (lo.to_vec(), hi.to_vec());
    let d = body.dim();
    let f = target.smooth();
    let anchor = body.anchor().to_vec();
    let vol = body.volume().expect("boxes have volumes");
    let gamma_wide = gamma / shrink;
    let pairs = (samples / (2 * MC_BATCHES)).max(1);
    let norm_const = |g: f64| -> f64 { (0..d).map(|i| (hi[i] - lo[i]) + (2.0 * PI * g).sqrt()).product() };
    let (z_plain, z_tilted) = (norm_const(gamma), norm_const(gamma_wide));

    let draw_tube = |rng: &mut ChaCha8Rng, g: f64, x: &mut [f64]| {
        for i in 0..d {
            let s = hi[i] - lo[i];
            let tail = (2.0 * PI * g).sqrt();
            let u: f64 = rng.random::<f64>() * (s + tail);
            if u < s {
                x[i] = lo[i] + u;
            } else {
                let n: f64 = rng.sample::<f64, _>(StandardNormal).abs() * g.sqrt();
                x[i] = if rng.random::<bool>() { hi[i] + n } else { lo[i] - n };
            }
        }
    };
    let reflect = |x: &[f64], out: &mut [f64]| {
        for i in 0..d {
            out[i] = lo[i] + hi[i] - x[i];
        }
    };

    let batches = Execution::default().map(MC_BATCHES, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut acc = C1Integrals::default();
        for _ in 0..pairs {
            for i in 0..d {
                x[i] = rng.random_range(lo[i]..=hi[i]);
            }
            reflect(&x, &mut y);
            for p in [&x, &y] {
                let fx = f.value(p);
                let r = vecops::dist(p, &anchor);
                acc.num_tilted += r * (-shrink * fx).exp();
                acc.num_plain += r * (-fx).exp();
            }
            draw_tube(&mut rng, gamma, &mut x);
            reflect(&x, &mut y);
            for p in [&x, &y] {
                acc.den_plain += (-f.value(p)).exp();
            }
            draw_tube(&mut rng, gamma_wide, &mut x);
            reflect(&x, &mut y);
            for p in [&x, &y] {
                acc.den_tilted += (-shrink * f.value(p)).exp();
            }
        }
        let n = (2 * pairs) as f64;
        C1Integrals {
            num_tilted: vol * acc.num_tilted / n,
            den_plain: z_plain * acc.den_plain / n,
            num_plain: vol * acc.num_plain / n,
            den_tilted: z_tilted * acc.den_tilted / n,
        }
    });
    Ok(batches)
}

/// `(max f, min f)` over `K + B(0, margin)` by multi-start projected
/// gradient ascent and descent.
pub fn smooth_extremes(target: &CompositeTarget, margin: f64) -> (f64, f64) {
    let body = target.body();
    let f = target.smooth();
    let d = target.dim();
    let l2 = target.lipschitz().lambda2;
    let step = if l2 > 0.0 { 1.0 / l2 } else { 1.0 };
    let project = |x: &mut Vec<f64>| {
        let p = body.project(x);
        let dist = vecops::dist(x, &p);
        if dist > margin {
            let s = margin / dist;
            for i in 0..d {
                x[i] = p[i] + s * (x[i] - p[i]);
            }
        }
    };
    let (blo, bhi) = body.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(0xe7_7e3e);
    let mut starts: Vec<Vec<f64>> = vec![body.anchor().to_vec()];
    for _ in 0..32 {
        starts.push((0..d).map(|i| rng.random_range(blo[i] - margin..=bhi[i] + margin)).collect());
    }
    // Corners of the widened bounding box, mapped into the window.
    for c in 0..(1usize << d.min(6)) {
        starts.push((0..d).map(|i| if i < 6 && (c >> i) & 1 == 1 { bhi[i] + margin } else { blo[i] - margin }).collect());
    }
    let mut grad = vec![0.0; d];
    let (mut f_max, mut f_min) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in &starts {
        for sign in [1.0, -1.0] {
            let mut x = s.clone();
            project(&mut x);
            let mut best = f.value(&x);
            for _ in 0..500 {
                f.gradient(&x, &mut grad);
                for i in 0..d {
                    x[i] += sign * step * grad[i];
                }
                project(&mut x);
                let v = f.value(&x);
                let improved = if sign > 0.0 { v > best } else { v < best };
                let gain = (v - best).abs();
                if improved {
                    best = v;
                }
                if !improved || gain <= 1e-14 * best.abs().max(1.0) {
                    break;
                }
            }
            if sign > 0.0 {
                f_max = f_max.max(best);
            } else {
                f_min = f_min.min(best);
            }
        }
    }
    (f_max, f_min)
}

/// Contraction constants for a fixed `(γ, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub h: f64,
    pub dim: usize,
    pub c0: f64,
    /// `C₅ = (1 + hλ)ρ`.
    pub c_radius: f64,
    /// `C₆ = 7λρ/c₀`.
    pub c_q: f64,
    /// `ln C₇`.
    pub ln_c_contraction: f64,
    /// `α = λ√(h³d)(√(hλ) + √2) + envelope_gap`.
    pub alpha: f64,
    pub envelope_gap: f64,
    pub h_max: f64,
}

/// Natural-log terms of the geometric-decay prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayPrediction {
    pub ln_transient: f64,
    pub ln_stationary: f64,
    pub c_env: f64,
    /// `exp(ln_transient) + exp(ln_stationary) + c_env`, possibly infinite.
    pub value: f64,
}

impl ContractionReport {
    pub fn c_contraction(&self) -> f64 {
        self.ln_c_contraction.exp()
    }

    /// Discretisation part of `α`.
    pub fn discretisation(&self) -> f64 {
        discretization_bound(self.lambda, self.h, self.dim)
    }

    /// `e^{C₅C₆}(1 − C₇h)^k W₁(q₀, p_γ) + α e^{C₅C₆}/(C₇h) + C_env`, in logs.
    pub fn predict(&self, k: u64, w1_initial: f64, c_env: f64) -> DecayPrediction {
        let c7h = self.c_contraction() * self.h;
        let ln_factor = self.c_radius * self.c_q;
        let ln_transient = ln_factor + k as f64 * (-c7h).ln_1p() + w1_initial.ln();
        let ln_stationary = self.alpha.ln() + ln_factor - self.ln_c_contraction - self.h.ln();
        DecayPrediction {
            ln_transient,
            ln_stationary,
            c_env,
            value: ln_transient.exp() + ln_stationary.exp() + c_env,
        }
    }
}

/// One-step discretisation bound `λ√(h³d)(√(hλ) + √2)`.
pub fn discretization_bound(lambda: f64, h: f64, dim: usize) -> f64 {
    lambda * (h.powi(3) * dim as f64).sqrt() * ((h * lambda).sqrt() + 2f64.sqrt())
}

/// Evaluates the contraction constants. `envelope_gap` stands for the sum
/// of the two `W₁(p_γ, p)` terms in `α`. When `ρ = 0` the `ρ`-dependent
/// branch of `C₇` is dropped, leaving `C₇ = μ/2`.
pub fn eula_contraction(constants: &EnvelopeConstants, h: f64, envelope_gap: f64, dim: usize, c0: f64) -> Result<ContractionReport> {
    let EnvelopeConstants { lambda, mu, rho, .. } = *constants;
    if !(h > 0.0 && h.is_finite()) {
        return Err(validation("step size must be positive"));
    }
    if !(lambda > 0.0) || !(c0 > 0.0) || dim == 0 {
        return Err(validation("need lambda > 0, c0 > 0 and d >= 1"));
    }
    if h * lambda > 1.0 / 6.0 {
        return Err(validation(format!("h*lambda = {} exceeds 1/6", h * lambda)));
    }
    let lr = lambda * rho;
    let ln_c7 = if rho > 0.0 {
        (mu / 2.0).min(245.0 / (24.0 * c0) * lr * lr).ln() - 49.0 / (6.0 * c0) * lambda * rho * rho
    } else {
        (mu / 2.0).ln()
    };
    if ln_c7.exp() * h >= 1.0 {
        return Err(validation("1 - C7*h <= 0: step too large for the contraction form"));
    }
    Ok(ContractionReport {
        lambda,
        mu,
        rho,
        h,
        dim,
        c0,
        c_radius: (1.0 + h * lambda) * rho,
        c_q: 7.0 * lambda * rho / c0,
        ln_c_contraction: ln_c7,
        alpha: discretization_bound(lambda, h, dim) + envelope_gap,
        envelope_gap,
        h_max: step_rule(constants, c0),
    })
}

/// Right-hand side of the `W₁` perturbation bound for potentials with
/// `β′h₁ + β ≤ h₂ ≤ h₁ + α`, with integrals over the tensor grid `axes`.
pub fn perturbation_w1_bound<H>(h1: H, axes: &[AxisRule], alpha: f64, beta: f64, beta_prime: f64) -> Result<f64>
where
    H: Fn(&[f64]) -> f64 + Sync + Send,
{
    if alpha < beta {
        return Err(Error::Precondition(format!("need alpha >= beta, got {alpha} < {beta}")));
    }
    if beta_prime > 1.0 {
        return Err(Error::Precondition(format!("need beta' <= 1, got {beta_prime}")));
    }
    let opts = QuadratureOptions::unchecked();
    let norm = |x: &[f64], out: &mut [f64]| out[0] = vecops::norm(x);
    let plain = integrate(|x: &[f64]| -h1(x), axes, norm, 1, &opts)?;
    let tilted = integrate(|x: &[f64]| -beta_prime * h1(x), axes, norm, 1, &opts)?;
    // ∫‖x‖e^{−β′h₁}/∫e^{−h₁} = E_tilted‖x‖ · e^{L_tilted − L_plain}
    let ratio = (tilted.log_mass - plain.log_mass).exp();
    Ok((alpha - beta).exp() * tilted.expectations[0] * ratio - (beta - alpha).exp() * plain.expectations[0] / ratio)
}
