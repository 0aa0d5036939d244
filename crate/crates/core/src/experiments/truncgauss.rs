//! Gaussian with covariance `Σ_ij = 1/(1 + |i − j|)` truncated to
//! `[0,5] × [0,1]` (d = 2) or `[0,5] × [0,0.5]^{d−1}` (d > 2).

use std::sync::Arc;

use crate::envelope::{fb_gamma_max, EnvelopeHandle, EnvelopeKind};
use crate::error::{validation, Result};
use crate::exec::Execution;
use crate::model::{CompositeTarget, ConvexBody, NonSmoothPotential, QuadraticPotential};
use crate::reference::{
    batch_means, envelope_log_density, quadrature_moments_refined, target_log_density, window_axes, Moments,
    QuadratureOptions, DEFAULT_BATCHES,
};
use crate::sampler::{gibbs_truncated_normal, run_chain, ChainConfig, ChainOutput, GibbsConfig, SampleRecord, Schedule};

pub fn covariance(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| 1.0 / (1.0 + (i as f64 - j as f64).abs())).collect())
        .collect()
}

pub fn support(d: usize) -> Result<ConvexBody> {
    if d == 0 {
        return Err(validation("dimension must be positive"));
    }
    let side = if d == 2 { 1.0 } else { 0.5 };
    let mut hi = vec![side; d];
    hi[0] = 5.0;
    ConvexBody::new_box(vec![0.0; d], hi)
}

pub fn potential(d: usize) -> Result<QuadraticPotential> {
    QuadraticPotential::from_covariance(covariance(d))
}

pub fn target(d: usize) -> Result<Arc<CompositeTarget>> {
    let f = potential(d)?;
    let g = NonSmoothPotential::indicator(support(d)?);
    Ok(Arc::new(CompositeTarget::new(Arc::new(f), g)?))
}

/// Keeps the Gibbs random stream apart from the Langevin chains.
const GIBBS_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Default quadrature nodes per axis for 2-D references.
pub const REFERENCE_NODES: usize = 400;

/// Window margin around the box for envelope densities.
pub fn envelope_margin(gamma: f64) -> f64 {
    8.0 * gamma.sqrt() + 0.5
}

/// Quadrature moments of the target (`kind = None`) or of an envelope
/// density, with the relative change under node doubling.
pub fn reference_moments(
    target: &Arc<CompositeTarget>,
    kind: Option<EnvelopeKind>,
    gamma: f64,
    nodes: usize,
    execution: Execution,
) -> Result<(Moments, f64)> {
    if target.dim() > 2 {
        return Err(validation("quadrature references need d <= 2"));
    }
    let opts = QuadratureOptions {
        execution,
        ..QuadratureOptions::default()
    };
    let body = target.body().clone();
    match kind {
        None => {
            let opts = QuadratureOptions {
                boundary_tol: None,
                ..opts
            };
            quadrature_moments_refined(target_log_density(target), |n| window_axes(&body, 0.0, n), nodes, &opts)
        }
        Some(kind) => {
            let env = EnvelopeHandle::new(kind, gamma, Arc::clone(target))?;
            let margin = envelope_margin(gamma);
            quadrature_moments_refined(envelope_log_density(&env), |n| window_axes(&body, margin, n), nodes, &opts)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig1Row {
    pub gamma: f64,
    pub my_mean: f64,
    pub my_var: f64,
    /// `None` when `γ` is not below the FB limit.
    pub fb_mean: Option<f64>,
    pub fb_var: Option<f64>,
    /// Largest relative change under node doubling across the row.
    pub refinement_change: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig1Curves {
    pub truth_mean: f64,
    pub truth_var: f64,
    pub rows: Vec<Fig1Row>,
}

pub const FIG1_GAMMAS: [f64; 9] = [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5];

/// Mean and variance of `x₁` under the target and both envelope densities
/// on the 2-D truncated Gaussian, over a grid of `γ`.
pub fn fig1_curves(gammas: &[f64], nodes: usize, execution: Execution) -> Result<Fig1Curves> {
    if gammas.is_empty() {
        return Err(validation("empty gamma grid"));
    }
    let t = target(2)?;
    let (truth, _) = reference_moments(&t, None, 0.0, nodes, execution)?;
    let gmax = fb_gamma_max(&t);
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let (my, c_my) = reference_moments(&t, Some(EnvelopeKind::MoreauYosida), gamma, nodes, execution)?;
        let fb = if gamma < gmax {
            Some(reference_moments(&t, Some(EnvelopeKind::ForwardBackward), gamma, nodes, execution)?)
        } else {
            None
        };
        rows.push(Fig1Row {
            gamma,
            my_mean: my.mean[0],
            my_var: my.variance[0],
            fb_mean: fb.as_ref().map(|(m, _)| m.mean[0]),
            fb_var: fb.as_ref().map(|(m, _)| m.variance[0]),
            refinement_change: fb.as_ref().map_or(c_my, |(_, c)| c.max(c_my)),
        });
    }
    Ok(Fig1Curves {
        truth_mean: truth.mean[0],
        truth_var: truth.variance[0],
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncGaussConfig {
    pub dim: usize,
    pub gamma: f64,
    pub h: f64,
    pub n_iter: usize,
    pub burn_in_frac: f64,
    pub n_chains: usize,
    pub seed: u64,
    /// Gibbs sweeps per chain; defaults to `n_iter`.
    pub gibbs_sweeps: Option<usize>,
    pub safe_steps: bool,
    /// Keep the raw chain outputs of every method in the report.
    pub keep_chains: bool,
    /// Diagnostic record stride for the envelope chains; 0 disables.
    pub diagnostics_stride: usize,
    pub execution: Execution,
}

impl TruncGaussConfig {
    pub fn new(dim: usize, n_iter: usize, seed: u64) -> Self {
        Self {
            dim,
            gamma: 0.05,
            h: 0.005,
            n_iter,
            burn_in_frac: 0.1,
            n_chains: 1,
            seed,
            gibbs_sweeps: None,
            safe_steps: false,
            keep_chains: false,
            diagnostics_stride: 0,
            execution: Execution::default(),
        }
    }
}

/// Per-method summary of the first three coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    /// `chain_means[c][j]`: mean of coordinate `j` in chain `c`.
    pub chain_means: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Batch-means standard error of `mean`, combined across chains.
    pub standard_error: Vec<f64>,
    pub samples_per_chain: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureReference {
    pub truth: Moments,
    pub my: Moments,
    pub fb: Moments,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncGaussReport {
    pub config: TruncGaussConfig,
    pub methods: Vec<MethodSummary>,
    pub quadrature: Option<QuadratureReference>,
    /// `(method, chains)`, filled when `keep_chains` is set.
    pub chains: Vec<(String, Vec<ChainOutput>)>,
}

impl TruncGaussReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn summarize(method: &str, outputs: &[ChainOutput], coords: &[usize]) -> Result<MethodSummary> {
    let mut chain_means = Vec::with_capacity(outputs.len());
    let mut se_sq = vec![0.0; coords.len()];
    for out in outputs {
        let mut means = Vec::with_capacity(coords.len());
        for (j, &c) in coords.iter().enumerate() {
            let series = out.coordinate_series(c).expect("coordinate recorded");
            let bm = batch_means(&series, DEFAULT_BATCHES)?;
            means.push(bm.mean);
            se_sq[j] += bm.standard_error.powi(2);
        }
        chain_means.push(means);
    }
    let n = outputs.len() as f64;
    let mean = (0..coords.len())
        .map(|j| chain_means.iter().map(|m| m[j]).sum::<f64>() / n)
        .collect();
    Ok(MethodSummary {
        method: method.to_string(),
        chain_means,
        mean,
        standard_error: se_sq.iter().map(|s| s.sqrt() / n).collect(),
        samples_per_chain: outputs.first().map_or(0, |o| o.sample_count),
    })
}

/// Runs MYULA, FBULA and the Gibbs ground truth; for `d = 2` also the
/// quadrature references.
pub fn truncated_gaussian_experiment(cfg: &TruncGaussConfig) -> Result<TruncGaussReport> {
    let d = cfg.dim;
    let t = target(d)?;
    let coords: Vec<usize> = (0..d.min(3)).collect();
    let mut methods = Vec::new();
    let mut chains = Vec::new();
    for kind in [EnvelopeKind::MoreauYosida, EnvelopeKind::ForwardBackward] {
        let mut cc = ChainConfig::new(kind, Schedule::constant(cfg.gamma, cfg.h).with_safe_steps(cfg.safe_steps), cfg.n_iter, cfg.seed);
        cc.burn_in_frac = cfg.burn_in_frac;
        cc.n_chains = cfg.n_chains;
        cc.record = SampleRecord::Coordinates(coords.clone());
        cc.diagnostics_stride = cfg.diagnostics_stride;
        cc.execution = cfg.execution;
        let outs = run_chain(&t, &cc)?;
        methods.push(summarize(kind.sampler_name(), &outs, &coords)?);
        if cfg.keep_chains {
            chains.push((kind.sampler_name().to_string(), outs));
        }
    }
    let f = potential(d)?;
    let body = support(d)?;
    let (lo, hi) = body.box_bounds().expect("box");
    let gibbs_cfg = GibbsConfig {
        n_iter: cfg.gibbs_sweeps.unwrap_or(cfg.n_iter),
        burn_in_frac: cfg.burn_in_frac,
        seed: cfg.seed.wrapping_add(GIBBS_SEED_OFFSET),
        n_chains: cfg.n_chains,
        record: SampleRecord::Coordinates(coords.clone()),
        execution: cfg.execution,
    };
    let gibbs = gibbs_truncated_normal(&f, lo, hi, &gibbs_cfg)?;
    methods.push(summarize("Gibbs", &gibbs, &coords)?);
    if cfg.keep_chains {
        chains.push(("Gibbs".to_string(), gibbs));
    }

    let quadrature = if d <= 2 {
        let (truth, _) = reference_moments(&t, None, 0.0, REFERENCE_NODES, cfg.execution)?;
        let (my, _) = reference_moments(&t, Some(EnvelopeKind::MoreauYosida), cfg.gamma, REFERENCE_NODES, cfg.execution)?;
        let (fb, _) = reference_moments(&t, Some(EnvelopeKind::ForwardBackward), cfg.gamma, REFERENCE_NODES, cfg.execution)?;
        Some(QuadratureReference { truth, my, fb })
    } else {
        None
    };
    Ok(TruncGaussReport {
        config: cfg.clone(),
        methods,
        quadrature,
        chains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_boxes() {
        assert_eq!(support(2).unwrap().box_bounds().unwrap().1, &[5.0, 1.0]);
        let b = support(10).unwrap();
        assert_eq!(b.box_bounds().unwrap().1[3], 0.5);
        assert_eq!(b.box_bounds().unwrap().1[0], 5.0);
    }

    #[test]
    fn fb_limit_for_d2() {
        let t = target(2).unwrap();
        assert!((fb_gamma_max(&t) - 0.25).abs() < 1e-12);
    }
}
