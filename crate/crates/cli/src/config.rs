//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use envlang::envelope::fb_gamma_max;
use envlang::experiments::truncgauss::{self, FIG1_GAMMAS, REFERENCE_NODES};
use envlang::sampler::DEFAULT_C0;

use crate::CliError;

pub const EXPERIMENTS: [&str; 2] = ["truncgauss", "tomography"];

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub workers: Option<usize>,
    #[serde(default)]
    pub safe_steps: bool,
    pub truncgauss: Option<TruncGaussSection>,
    pub fig1: Option<Fig1Section>,
    pub tomography: Option<TomographySection>,
    pub theory: Option<TheorySection>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncGaussSection {
    pub dim: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    pub n_iter: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "one")]
    pub chains: usize,
    pub gibbs_sweeps: Option<usize>,
    /// Write every retained sample of the recorded coordinates.
    #[serde(default)]
    pub write_samples: bool,
    #[serde(default)]
    pub diagnostics_stride: usize,
}

fn default_gamma() -> f64 {
    0.05
}

fn default_h() -> f64 {
    0.005
}

fn default_burn_in() -> f64 {
    0.1
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Section {
    #[serde(default = "default_fig1_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

impl Default for Fig1Section {
    fn default() -> Self {
        Self {
            gammas: default_fig1_gammas(),
            nodes: default_nodes(),
        }
    }
}

fn default_fig1_gammas() -> Vec<f64> {
    FIG1_GAMMAS.to_vec()
}

fn default_nodes() -> usize {
    REFERENCE_NODES
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySection {
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_mask_fraction")]
    pub mask_fraction: f64,
    pub n_iter: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_mse_stride")]
    pub mse_stride: usize,
    #[serde(default = "default_trace_stride")]
    pub trace_stride: usize,
}

fn default_size() -> usize {
    32
}

fn default_sigma() -> f64 {
    1e-2
}

fn default_beta() -> f64 {
    100.0
}

fn default_mask_fraction() -> f64 {
    0.15
}

fn default_mse_stride() -> usize {
    100
}

fn default_trace_stride() -> usize {
    10
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    #[default]
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    pub dim: usize,
    pub gammas: Vec<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub method: BoundMethod,
    pub nodes: Option<usize>,
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_c0")]
    pub c0: f64,
    pub prox_tol: Option<f64>,
    pub prox_max_iter: Option<usize>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            c0: default_c0(),
            prox_tol: None,
            prox_max_iter: None,
        }
    }
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

/// What `run` will execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    TruncGauss,
    Tomography,
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn fraction(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must lie in [0, 1), got {v}")))
    }
}

fn supported_dim(dim: usize) -> Result<(), CliError> {
    if dim == 0 {
        return Err(CliError::Config("dim must be at least 1".into()));
    }
    Ok(())
}

impl Config {
    /// Checks the sections `run` needs, without executing anything.
    pub fn experiment(&self) -> Result<Experiment, CliError> {
        let name = self
            .experiment
            .as_deref()
            .ok_or_else(|| CliError::Config("missing `experiment` key".into()))?;
        let exp = match name {
            "truncgauss" => Experiment::TruncGauss,
            "tomography" => Experiment::Tomography,
            other => {
                return Err(CliError::UnknownExperiment(format!(
                    "unknown experiment `{other}` (expected one of {})",
                    EXPERIMENTS.join(", ")
                )))
            }
        };
        positive("tolerances.c0", self.tolerances.c0)?;
        if let Some(t) = self.tolerances.prox_tol {
            positive("tolerances.prox_tol", t)?;
        }
        match exp {
            Experiment::TruncGauss => {
                let s = self
                    .truncgauss
                    .as_ref()
                    .ok_or_else(|| CliError::Config("experiment `truncgauss` needs a [truncgauss] section".into()))?;
                supported_dim(s.dim)?;
                positive("truncgauss.gamma", s.gamma)?;
                positive("truncgauss.h", s.h)?;
                fraction("truncgauss.burn_in", s.burn_in)?;
                if s.n_iter == 0 || s.chains == 0 {
                    return Err(CliError::Config("n_iter and chains must be at least 1".into()));
                }
                let t = truncgauss::target(s.dim).map_err(|e| CliError::Config(e.to_string()))?;
                let gmax = fb_gamma_max(&t);
                if s.gamma >= gmax {
                    return Err(CliError::InvalidParameter(format!(
                        "truncgauss.gamma = {} must be below the forward-backward limit {gmax}",
                        s.gamma
                    )));
                }
                if s.dim == 2 {
                    let f = self.fig1.clone().unwrap_or_default();
                    if f.gammas.is_empty() {
                        return Err(CliError::Config("fig1.gammas is empty".into()));
                    }
                    for &g in &f.gammas {
                        positive("fig1.gammas", g)?;
                    }
                }
            }
            Experiment::Tomography => {
                let s = self
                    .tomography
                    .as_ref()
                    .ok_or_else(|| CliError::Config("experiment `tomography` needs a [tomography] section".into()))?;
                if s.size < 2 || !s.size.is_power_of_two() {
                    return Err(CliError::Config(format!("tomography.size must be a power of two >= 2, got {}", s.size)));
                }
                positive("tomography.sigma", s.sigma)?;
                fraction("tomography.burn_in", s.burn_in)?;
                if !(s.mask_fraction > 0.0 && s.mask_fraction <= 1.0) {
                    return Err(CliError::Config("tomography.mask_fraction must lie in (0, 1]".into()));
                }
                if !(s.beta >= 0.0) {
                    return Err(CliError::Config("tomography.beta must be non-negative".into()));
                }
                if s.n_iter == 0 || s.mse_stride == 0 || s.trace_stride == 0 {
                    return Err(CliError::Config("n_iter and strides must be at least 1".into()));
                }
            }
        }
        Ok(exp)
    }

    /// Checks the `[theory]` section.
    pub fn theory_section(&self) -> Result<&TheorySection, CliError> {
        let s = self
            .theory
            .as_ref()
            .ok_or_else(|| CliError::Config("`theory` needs a [theory] section".into()))?;
        supported_dim(s.dim)?;
        if s.gammas.is_empty() {
            return Err(CliError::Config("theory.gammas is empty".into()));
        }
        for &g in &s.gammas {
            positive("theory.gammas", g)?;
        }
        positive("theory.h", s.h)?;
        positive("tolerances.c0", self.tolerances.c0)?;
        Ok(s)
    }
}
