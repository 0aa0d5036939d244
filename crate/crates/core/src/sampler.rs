//! The envelope-smoothed unadjusted Langevin iteration
//!
//! ```text
//! x_{k+1} = x_k − h_k ∇F_{γ_k}(x_k) + √(2h_k) ζ_{k+1},   ζ ~ N(0, I)
//! ```
//!
//! driven by a [`Schedule`] of smoothing parameters and step sizes, plus a
//! Gibbs sampler for box-truncated Gaussians used as ground truth.
//!
//! Every chain owns a ChaCha8 generator seeded with the run seed and placed
//! on stream `chain_index`, so chains are reproducible one by one and can be
//! run in any order or in parallel.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};

use crate::envelope::{EnvelopeConstants, EnvelopeHandle, EnvelopeKind, EnvelopeWorkspace};
use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::model::{CompositeTarget, QuadraticPotential, SmoothPotential};

/// Default value of the universal contraction constant `c₀`.
pub const DEFAULT_C0: f64 = 0.007;

/// Iterations between progress log lines.
pub const LOG_EVERY: usize = 10_000;

/// A positive sequence indexed by iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum Sequence {
    Constant(f64),
    /// `max(initial · ratio^k, floor)`.
    Geometric { initial: f64, ratio: f64, floor: f64 },
    /// Fixed values; running past the end is an error.
    Explicit(Vec<f64>),
}

impl Sequence {
    pub fn at(&self, k: usize) -> Option<f64> {
        match self {
            Sequence::Constant(v) => Some(*v),
            Sequence::Geometric { initial, ratio, floor } => {
                Some((initial * ratio.powf(k as f64)).max(*floor))
            }
            Sequence::Explicit(v) => v.get(k).copied(),
        }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            Sequence::Explicit(v) => Some(v.len()),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |v: f64| !(v > 0.0 && v.is_finite());
        match self {
            Sequence::Constant(v) if bad(*v) => Err(validation(format!("{name} must be positive, got {v}"))),
            Sequence::Geometric { initial, ratio, floor } if bad(*initial) || bad(*ratio) || bad(*floor) => {
                Err(validation(format!("{name}: geometric parameters must be positive")))
            }
            Sequence::Explicit(v) if v.iter().any(|x| bad(*x)) => {
                Err(validation(format!("{name}: all values must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn is_nonincreasing(&self) -> bool {
        match self {
            Sequence::Constant(_) => true,
            Sequence::Geometric { ratio, .. } => *ratio <= 1.0,
            Sequence::Explicit(v) => v.windows(2).all(|w| w[1] <= w[0]),
        }
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sequence::Constant(v) => write!(f, "constant({v})"),
            Sequence::Geometric { initial, ratio, floor } => {
                write!(f, "geometric({initial}, ratio={ratio}, floor={floor})")
            }
            Sequence::Explicit(v) => write!(f, "explicit({} values)", v.len()),
        }
    }
}

/// Smoothing parameters `γ_k` (non-increasing) and step sizes `h_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub gammas: Sequence,
    pub steps: Sequence,
    /// Cap every `h_k` by [`step_rule`] for the current envelope.
    pub safe_steps: bool,
    pub c0: f64,
}

impl Schedule {
    pub fn constant(gamma: f64, h: f64) -> Self {
        Self {
            gammas: Sequence::Constant(gamma),
            steps: Sequence::Constant(h),
            safe_steps: false,
            c0: DEFAULT_C0,
        }
    }

    pub fn with_safe_steps(mut self, on: bool) -> Self {
        self.safe_steps = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gammas.validate("gamma")?;
        self.steps.validate("step size")?;
        if !self.gammas.is_nonincreasing() {
            return Err(validation("the gamma schedule must be non-increasing"));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(validation("c0 must be positive"));
        }
        Ok(())
    }

    /// Fails if either sequence runs out before `n_iter` iterations.
    pub fn check_length(&self, n_iter: usize) -> Result<()> {
        for (name, seq) in [("gamma", &self.gammas), ("step", &self.steps)] {
            if let Some(len) = seq.len() {
                if len < n_iter {
                    return Err(Error::Configuration(format!(
                        "{name} schedule has {len} entries but {n_iter} iterations were requested"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> Option<(f64, f64)> {
        Some((self.gammas.at(k)?, self.steps.at(k)?))
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gamma={} h={}", self.gammas, self.steps)?;
        if self.safe_steps {
            write!(f, " safe(c0={})", self.c0)?;
        }
        Ok(())
    }
}

/// Largest step for which the EULA kernel is guaranteed to contract:
/// `(1/λ)·min(1/6, μ/λ, λρ²/3, c₀²/(970λρ²))`. For `ρ = 0` the two
/// `ρ`-terms are dropped.
pub fn step_rule(constants: &EnvelopeConstants, c0: f64) -> f64 {
    let EnvelopeConstants { lambda, mu, rho, .. } = *constants;
    let mut m = (1.0 / 6.0f64).min(mu / lambda);
    if rho > 0.0 {
        let lr2 = lambda * rho * rho;
        m = m.min(lr2 / 3.0).min(c0 * c0 / (970.0 * lr2));
    }
    m / lambda
}

/// Current iterate of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub k: usize,
    rng: ChaCha8Rng,
}

impl ChainState {
    pub fn new(x0: Vec<f64>, seed: u64, chain_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain_index);
        Self { x: x0, k: 0, rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// What one step observed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// `F_γ(x_k)` before the move.
    pub envelope_value: f64,
    pub step_norm: f64,
    pub inexactness: f64,
    pub inexact: bool,
}

/// Buffers for repeated steps of one chain.
#[derive(Clone, Debug)]
pub struct EulaKernel {
    ws: EnvelopeWorkspace,
    grad: Vec<f64>,
    noise: Vec<f64>,
    gradient_evals: usize,
}

impl EulaKernel {
    pub fn new(dim: usize) -> Self {
        Self {
            ws: EnvelopeWorkspace::new(dim),
            grad: vec![0.0; dim],
            noise: vec![0.0; dim],
            gradient_evals: 0,
        }
    }

    /// Number of envelope gradient evaluations so far.
    pub fn gradient_evals(&self) -> usize {
        self.gradient_evals
    }

    /// Prox point computed during the last step.
    pub fn last_prox_point(&self) -> &[f64] {
        self.ws.prox_point()
    }

    /// One step with fresh standard normal noise.
    pub fn step(&mut self, state: &mut ChainState, env: &EnvelopeHandle, h: f64) -> Result<StepInfo> {
        let mut noise = std::mem::take(&mut self.noise);
        for z in noise.iter_mut() {
            *z = state.rng.sample(StandardNormal);
        }
        let r = self.step_with_noise(state, env, h, &noise);
        self.noise = noise;
        r
    }

    /// One step with caller-supplied noise `ζ`.
    pub fn step_with_noise(
        &mut self,
        state: &mut ChainState,
        env: &EnvelopeHandle,
        h: f64,
        noise: &[f64],
    ) -> Result<StepInfo> {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(validation(format!("step size must be non-negative, got {h}")));
        }
        let eval = env.evaluate(&state.x, &mut self.ws, &mut self.grad);
        self.gradient_evals += 1;
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::ChainAborted {
                iteration: state.k,
                reason: "non-finite envelope gradient".into(),
            });
        }
        let scale = (2.0 * h).sqrt();
        let mut step_sq = 0.0;
        for i in 0..state.x.len() {
            let dx = -h * self.grad[i] + scale * noise[i];
            state.x[i] += dx;
            step_sq += dx * dx;
        }
        if state.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ChainAborted {
                iteration: state.k,
                reason: "non-finite iterate".into(),
            });
        }
        state.k += 1;
        Ok(StepInfo {
            envelope_value: eval.value,
            step_norm: step_sq.sqrt(),
            inexactness: eval.prox.inexactness,
            inexact: eval.inexact,
        })
    }
}

/// Single EULA step with a fresh kernel.
pub fn eula_step(state: &mut ChainState, env: &EnvelopeHandle, h: f64) -> Result<StepInfo> {
    EulaKernel::new(state.x.len()).step(state, env, h)
}

/// Which coordinates of retained samples are stored.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleRecord {
    All,
    Coordinates(Vec<usize>),
    None,
}

impl SampleRecord {
    fn coords(&self, dim: usize) -> Vec<usize> {
        match self {
            SampleRecord::All => (0..dim).collect(),
            SampleRecord::Coordinates(c) => c.clone(),
            SampleRecord::None => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub kind: EnvelopeKind,
    pub schedule: Schedule,
    pub n_iter: usize,
    pub burn_in_frac: f64,
    pub thinning: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Starting point; defaults to the projection of the origin onto `K`.
    pub x0: Option<Vec<f64>>,
    pub record: SampleRecord,
    /// Keep a diagnostic record every this many iterations; 0 disables.
    pub diagnostics_stride: usize,
    pub execution: Execution,
}

impl ChainConfig {
    pub fn new(kind: EnvelopeKind, schedule: Schedule, n_iter: usize, seed: u64) -> Self {
        Self {
            kind,
            schedule,
            n_iter,
            burn_in_frac: 0.1,
            thinning: 1,
            seed,
            n_chains: 1,
            x0: None,
            record: SampleRecord::All,
            diagnostics_stride: 0,
            execution: Execution::default(),
        }
    }

    pub fn burn_in(&self) -> usize {
        (self.burn_in_frac * self.n_iter as f64).floor() as usize
    }

    /// Number of retained samples per chain.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in()) / self.thinning
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_iter == 0 {
            return Err(validation("n_iter must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.burn_in_frac) {
            return Err(validation("burn_in_frac must lie in [0, 1)"));
        }
        if self.thinning == 0 {
            return Err(validation("thinning must be at least 1"));
        }
        if self.n_chains == 0 {
            return Err(validation("n_chains must be at least 1"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != dim || x0.iter().any(|v| !v.is_finite()) {
                return Err(validation("x0 must be finite and match the target dimension"));
            }
        }
        if let SampleRecord::Coordinates(c) = &self.record {
            if c.iter().any(|&i| i >= dim) {
                return Err(validation("recorded coordinate out of range"));
            }
        }
        self.schedule.validate()?;
        self.schedule.check_length(self.n_iter)
    }
}

/// Provenance of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainMeta {
    pub method: String,
    pub seed: u64,
    pub chain_index: usize,
    pub schedule: String,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub prox_tol: Option<f64>,
    pub prox_max_iter: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRecord {
    pub iteration: usize,
    pub gamma: f64,
    pub step: f64,
    pub envelope_value: f64,
    pub step_norm: f64,
    pub inexactness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub meta: ChainMeta,
    pub dim: usize,
    /// Coordinates stored per retained sample, in column order of `samples`.
    pub recorded: Vec<usize>,
    /// Row-major `sample_count × recorded.len()`.
    pub samples: Vec<f64>,
    pub sample_count: usize,
    /// Ergodic mean and second moment of all coordinates over retained samples.
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub diagnostics: Vec<DiagnosticRecord>,
    pub final_x: Vec<f64>,
    pub gradient_evals: usize,
    pub max_inexactness: f64,
    /// Steps whose prox stopped above tolerance.
    pub inexact_steps: usize,
}

impl ChainOutput {
    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.recorded.len();
        &self.samples[i * w..(i + 1) * w]
    }

    /// Stored trace of column `col` of `recorded`.
    pub fn series(&self, col: usize) -> Vec<f64> {
        let w = self.recorded.len();
        (0..self.sample_count).map(|i| self.samples[i * w + col]).collect()
    }

    /// Stored trace of coordinate `coord`, if recorded.
    pub fn coordinate_series(&self, coord: usize) -> Option<Vec<f64>> {
        self.recorded.iter().position(|&c| c == coord).map(|col| self.series(col))
    }

    pub fn variance(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.second_moment)
            .map(|(m, s)| (s - m * m).max(0.0))
            .collect()
    }
}

/// Per-iteration hook for experiment-specific bookkeeping.
pub trait ChainObserver: Send {
    /// Called after every step with the new iterate `x_{iteration}`.
    fn observe(&mut self, iteration: usize, x: &[f64], retained: bool, info: &StepInfo);
}

impl ChainObserver for () {
    fn observe(&mut self, _: usize, _: &[f64], _: bool, _: &StepInfo) {}
}

struct Accumulator {
    recorded: Vec<usize>,
    samples: Vec<f64>,
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Accumulator {
    fn new(dim: usize, recorded: Vec<usize>, expected: usize) -> Self {
        Self {
            samples: Vec::with_capacity(expected * recorded.len()),
            recorded,
            count: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for (i, &v) in x.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
        self.samples.extend(self.recorded.iter().map(|&c| x[c]));
    }

    fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count.max(1) as f64;
        (
            self.sum.iter().map(|s| s / n).collect(),
            self.sum_sq.iter().map(|s| s / n).collect(),
        )
    }
}

/// Runs `config.n_chains` independent chains. Output order follows the chain index.
pub fn run_chain(target: &Arc<CompositeTarget>, config: &ChainConfig) -> Result<Vec<ChainOutput>> {
    Ok(run_chains_observed(target, config, |_| ())?
        .into_iter()
        .map(|(out, _)| out)
        .collect())
}

/// As [`run_chain`], with one observer per chain built by `make_observer(chain_index)`.
pub fn run_chains_observed<O, M>(
    target: &Arc<CompositeTarget>,
    config: &ChainConfig,
    make_observer: M,
) -> Result<Vec<(ChainOutput, O)>>
where
    O: ChainObserver,
    M: Fn(usize) -> O + Sync + Send,
{
    config.validate(target.dim())?;
    config
        .execution
        .map(config.n_chains, |c| {
            let mut obs = make_observer(c);
            run_single_chain(target, config, c, &mut obs).map(|out| (out, obs))
        })
        .into_iter()
        .collect()
}

/// Runs chain number `chain_index` of `config` on the calling thread.
pub fn run_single_chain<O: ChainObserver + ?Sized>(
    target: &Arc<CompositeTarget>,
    config: &ChainConfig,
    chain_index: usize,
    observer: &mut O,
) -> Result<ChainOutput> {
    let dim = target.dim();
    config.validate(dim)?;
    let x0 = config
        .x0
        .clone()
        .unwrap_or_else(|| target.body().project(&vec![0.0; dim]));
    let mut state = ChainState::new(x0, config.seed, chain_index as u64);
    let mut kernel = EulaKernel::new(dim);
    let burn_in = config.burn_in();
    let mut acc = Accumulator::new(dim, config.record.coords(dim), config.retained());
    let mut diagnostics = Vec::new();
    let mut env: Option<EnvelopeHandle> = None;
    let (mut max_inexactness, mut inexact_steps) = (0.0f64, 0usize);
    let method = config.kind.sampler_name();

    for k in 0..config.n_iter {
        let (gamma, h_sched) = config.schedule.at(k).ok_or_else(|| {
            Error::Configuration(format!("schedule exhausted at iteration {k}"))
        })?;
        if env.as_ref().is_none_or(|e| e.gamma() != gamma) {
            env = Some(EnvelopeHandle::new(config.kind, gamma, Arc::clone(target))?);
        }
        let handle = env.as_ref().expect("set above");
        let h = if config.schedule.safe_steps {
            h_sched.min(step_rule(&handle.constants(), config.schedule.c0))
        } else {
            h_sched
        };
        let info = kernel.step(&mut state, handle, h)?;
        max_inexactness = max_inexactness.max(info.inexactness);
        if info.inexact {
            inexact_steps += 1;
        }
        if config.diagnostics_stride > 0 && k % config.diagnostics_stride == 0 {
            diagnostics.push(DiagnosticRecord {
                iteration: k,
                gamma,
                step: h,
                envelope_value: info.envelope_value,
                step_norm: info.step_norm,
                inexactness: info.inexactness,
            });
        }
        let j = k + 1;
        let retained = j > burn_in && (j - burn_in) % config.thinning == 0;
        if retained {
            acc.push(&state.x);
        }
        observer.observe(j, &state.x, retained, &info);
        if j % LOG_EVERY == 0 {
            log::info!("{method} chain {chain_index}: iteration {j}/{}", config.n_iter);
        }
    }
    if inexact_steps > 0 {
        log::warn!(
            "{method} chain {chain_index}: {inexact_steps} steps used a prox above tolerance (max bound {max_inexactness:e})"
        );
    }

    let settings = target.nonsmooth().prox_settings();
    let iterative = target.nonsmooth().is_iterative();
    let (mean, second_moment) = acc.moments();
    Ok(ChainOutput {
        meta: ChainMeta {
            method: method.to_string(),
            seed: config.seed,
            chain_index,
            schedule: config.schedule.to_string(),
            n_iter: config.n_iter,
            burn_in,
            thinning: config.thinning,
            prox_tol: iterative.then_some(settings.tol),
            prox_max_iter: iterative.then_some(settings.max_iter),
        },
        dim,
        recorded: acc.recorded,
        samples: acc.samples,
        sample_count: acc.count,
        mean,
        second_moment,
        diagnostics,
        final_x: state.x,
        gradient_evals: kernel.gradient_evals(),
        max_inexactness,
        inexact_steps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig {
    /// Full systematic sweeps.
    pub n_iter: usize,
    pub burn_in_frac: f64,
    pub seed: u64,
    pub n_chains: usize,
    pub record: SampleRecord,
    pub execution: Execution,
}

impl GibbsConfig {
    pub fn new(n_iter: usize, seed: u64) -> Self {
        Self {
            n_iter,
            burn_in_frac: 0.1,
            seed,
            n_chains: 1,
            record: SampleRecord::All,
            execution: Execution::default(),
        }
    }
}

/// Systematic-scan Gibbs sampler for `exp(-f)` restricted to the box
/// `[lo, hi]`, with exact truncated-normal conditionals.
pub fn gibbs_truncated_normal(
    f: &QuadraticPotential,
    lo: &[f64],
    hi: &[f64],
    config: &GibbsConfig,
) -> Result<Vec<ChainOutput>> {
    let d = f.dim();
    if lo.len() != d || hi.len() != d {
        return Err(validation("box bounds do not match the dimension"));
    }
    if (0..d).any(|i| !(lo[i] <= hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
        return Err(validation("box must be bounded with lo <= hi"));
    }
    if config.n_iter == 0 || config.n_chains == 0 {
        return Err(validation("n_iter and n_chains must be at least 1"));
    }
    if !(0.0..1.0).contains(&config.burn_in_frac) {
        return Err(validation("burn_in_frac must lie in [0, 1)"));
    }
    for i in 0..d {
        let a = f.precision_entry(i, i);
        if !(a > 0.0) {
            return Err(Error::Numerical(format!(
                "conditional variance of coordinate {i} is not positive (precision {a})"
            )));
        }
    }
    config
        .execution
        .map(config.n_chains, |c| gibbs_chain(f, lo, hi, config, c))
        .into_iter()
        .collect()
}

fn gibbs_chain(
    f: &QuadraticPotential,
    lo: &[f64],
    hi: &[f64],
    config: &GibbsConfig,
    chain_index: usize,
) -> Result<ChainOutput> {
    let d = lo.len();
    let m = f.center();
    let mut x: Vec<f64> = (0..d).map(|i| m[i].clamp(lo[i], hi[i])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_index as u64);
    let burn_in = (config.burn_in_frac * config.n_iter as f64).floor() as usize;
    let mut acc = Accumulator::new(d, config.record.coords(d), config.n_iter - burn_in);
    for k in 0..config.n_iter {
        for i in 0..d {
            let row = f.precision_row(i);
            let aii = row[i];
            let mut s = 0.0;
            for j in 0..d {
                if j != i {
                    s += row[j] * (x[j] - m[j]);
                }
            }
            let mu = m[i] - s / aii;
            let sd = 1.0 / aii.sqrt();
            let u: f64 = rng.random();
            x[i] = mu + sd * truncated_standard_normal((lo[i] - mu) / sd, (hi[i] - mu) / sd, u);
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
        if k + 1 > burn_in {
            acc.push(&x);
        }
        if (k + 1) % LOG_EVERY == 0 {
            log::info!("Gibbs chain {chain_index}: sweep {}/{}", k + 1, config.n_iter);
        }
    }
    let (mean, second_moment) = acc.moments();
    Ok(ChainOutput {
        meta: ChainMeta {
            method: "Gibbs".into(),
            seed: config.seed,
            chain_index,
            schedule: "systematic scan".into(),
            n_iter: config.n_iter,
            burn_in,
            thinning: 1,
            prox_tol: None,
            prox_max_iter: None,
        },
        dim: d,
        recorded: acc.recorded,
        samples: acc.samples,
        sample_count: acc.count,
        mean,
        second_moment,
        diagnostics: Vec::new(),
        final_x: x,
        gradient_evals: 0,
        max_inexactness: 0.0,
        inexact_steps: 0,
    })
}

/// Inverse-CDF draw from `N(0,1)` truncated to `[a, b]` at uniform `u`.
///
/// Works on the upper tail through `erfc`, reflecting intervals below zero,
/// and switches to the exponential tail approximation where `erfc`
/// underflows.
pub fn truncated_standard_normal(a: f64, b: f64, u: f64) -> f64 {
    if a >= b {
        return a;
    }
    if b <= 0.0 {
        return -truncated_standard_normal(-b, -a, u);
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let x = if a >= 0.0 {
        let qa = 0.5 * erfc(a / sqrt2);
        let qb = 0.5 * erfc(b / sqrt2);
        let q = qa - u * (qa - qb);
        if qa < 1e-300 || q <= 0.0 {
            let span = b - a;
            a - (1.0 - u * (1.0 - (-a * span).exp())).ln() / a
        } else {
            sqrt2 * erfc_inv(2.0 * q)
        }
    } else {
        let pa = 0.5 * erfc(-a / sqrt2);
        let pb = 0.5 * erfc(-b / sqrt2);
        let p = pa + u * (pb - pa);
        if p < 0.5 {
            -sqrt2 * erfc_inv(2.0 * p)
        } else {
            sqrt2 * erfc_inv(2.0 * (1.0 - p))
        }
    };
    if x.is_finite() {
        x.clamp(a, b)
    } else {
        0.5 * (a + b)
    }
}
