//! Moreau-Yosida and forward-backward envelopes of `F = f + g`.
//!
//! Both are evaluated through one prox of `g`:
//!
//! * MY: `F_γ(x) = f(x) + g(P(x)) + ‖x − P(x)‖²/2γ` with `P = P_{γg}`,
//!   gradient `∇f(x) + (x − P(x))/γ`.
//! * FB: with `x̄ = x − γ∇f(x)` and `T(x) = P_{γg}(x̄)`,
//!   `F_γ(x) = f(x) − γ‖∇f(x)‖²/2 + g(T(x)) + ‖x̄ − T(x)‖²/2γ`,
//!   gradient `(I − γ∇²f(x))(x − T(x))/γ`, formed with one Hessian-vector
//!   product.
//!
//! # Admissibility constants
//!
//! Writing `κ = λ₂ + λ₃(λ₀ + R)`:
//!
//! | | `λ_γ` | `μ_γ` | `ρ_γ` | `γ_max` |
//! |---|---|---|---|---|
//! | MY | `λ₂ + 1/γ` | `1/(2γ)` | `4R` | `∞` |
//! | FB | `1/γ + 2λ₂ + λ₃(λ₀+R)` | `κ` | `2R/(1 − 2γκ)` | `1/(2κ)` |
//!
//! The MY pair comes from `⟨u, ∇F_γ(x) − ∇F_γ(y)⟩ ≥ (‖u‖² − 2R‖u‖)/γ` for
//! `u = x − y`, using convexity of `f` and `‖P(x) − P(y)‖ ≤ diam K ≤ 2R`;
//! the right side is at least `‖u‖²/2γ` once `‖u‖ ≥ 4R`.

use std::sync::Arc;

use crate::error::{validation, Error, Result};
use crate::model::{CompositeTarget, ProxReport};
use crate::prox::TvWorkspace;
use crate::vecops;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvelopeKind {
    MoreauYosida,
    ForwardBackward,
}

impl EnvelopeKind {
    pub fn short_name(self) -> &'static str {
        match self {
            EnvelopeKind::MoreauYosida => "MY",
            EnvelopeKind::ForwardBackward => "FB",
        }
    }

    /// Name of the Langevin sampler driven by this envelope.
    pub fn sampler_name(self) -> &'static str {
        match self {
            EnvelopeKind::MoreauYosida => "MYULA",
            EnvelopeKind::ForwardBackward => "FBULA",
        }
    }
}

impl std::fmt::Display for EnvelopeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for EnvelopeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "my" | "moreau-yosida" | "myula" => Ok(EnvelopeKind::MoreauYosida),
            "fb" | "forward-backward" | "fbula" => Ok(EnvelopeKind::ForwardBackward),
            other => Err(validation(format!("unknown envelope kind '{other}'"))),
        }
    }
}

/// `λ_γ` (gradient Lipschitz constant), `μ_γ`, `ρ_γ` (long-distance strong
/// convexity) and the largest admissible `γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeConstants {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub gamma_max: f64,
}

/// Largest FB smoothing parameter `1/(2λ₂ + 2λ₃(λ₀ + R))`.
pub fn fb_gamma_max(target: &CompositeTarget) -> f64 {
    let l = target.lipschitz();
    let kappa = l.lambda2 + l.lambda3 * (target.working_radius() + target.body().outer_radius());
    if kappa > 0.0 {
        1.0 / (2.0 * kappa)
    } else {
        f64::INFINITY
    }
}

pub fn admissibility_constants(
    kind: EnvelopeKind,
    gamma: f64,
    target: &CompositeTarget,
) -> Result<EnvelopeConstants> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(validation(format!("gamma must be positive and finite, got {gamma}")));
    }
    let l = target.lipschitz();
    let r_out = target.body().outer_radius();
    match kind {
        EnvelopeKind::MoreauYosida => Ok(EnvelopeConstants {
            lambda: l.lambda2 + 1.0 / gamma,
            mu: 1.0 / (2.0 * gamma),
            rho: 4.0 * r_out,
            gamma_max: f64::INFINITY,
        }),
        EnvelopeKind::ForwardBackward => {
            let cubic = l.lambda3 * (target.working_radius() + r_out);
            let kappa = l.lambda2 + cubic;
            let gamma_max = fb_gamma_max(target);
            if gamma >= gamma_max {
                return Err(Error::Configuration(format!(
                    "FB envelope needs gamma < {gamma_max}, got {gamma}"
                )));
            }
            Ok(EnvelopeConstants {
                lambda: 1.0 / gamma + 2.0 * l.lambda2 + cubic,
                mu: kappa,
                rho: 2.0 * r_out / (1.0 - 2.0 * gamma * kappa),
                gamma_max,
            })
        }
    }
}

/// A smoothing parameter and envelope kind bound to a target.
#[derive(Clone, Debug)]
pub struct EnvelopeHandle {
    kind: EnvelopeKind,
    gamma: f64,
    target: Arc<CompositeTarget>,
    constants: EnvelopeConstants,
}

/// Result of a combined value and gradient evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeEval {
    pub value: f64,
    pub prox: ProxReport,
    /// The prox solver stopped above its tolerance.
    pub inexact: bool,
}

/// Scratch buffers for envelope evaluations; one per chain.
#[derive(Clone, Debug, Default)]
pub struct EnvelopeWorkspace {
    grad_f: Vec<f64>,
    forward: Vec<f64>,
    prox_point: Vec<f64>,
    residual: Vec<f64>,
    hv: Vec<f64>,
    tv: TvWorkspace,
}

impl EnvelopeWorkspace {
    pub fn new(dim: usize) -> Self {
        let mut ws = Self::default();
        ws.resize(dim);
        ws
    }

    fn resize(&mut self, dim: usize) {
        for v in [
            &mut self.grad_f,
            &mut self.forward,
            &mut self.prox_point,
            &mut self.residual,
            &mut self.hv,
        ] {
            v.resize(dim, 0.0);
        }
    }

    /// The prox point from the last evaluation: `P(x)` for MY, `T(x)` for FB.
    pub fn prox_point(&self) -> &[f64] {
        &self.prox_point
    }
}

impl EnvelopeHandle {
    /// Fails for non-positive `γ`, for FB with `γ ≥ γ_max`, and for FB when
    /// `f` has no Hessian-vector product.
    pub fn new(kind: EnvelopeKind, gamma: f64, target: Arc<CompositeTarget>) -> Result<Self> {
        let constants = admissibility_constants(kind, gamma, &target)?;
        if kind == EnvelopeKind::ForwardBackward && !target.smooth().has_hessian_vec() {
            return Err(Error::Capability(
                "the FB envelope gradient needs Hessian-vector products of f".into(),
            ));
        }
        Ok(Self {
            kind,
            gamma,
            target,
            constants,
        })
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn target(&self) -> &Arc<CompositeTarget> {
        &self.target
    }

    pub fn constants(&self) -> EnvelopeConstants {
        self.constants
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    fn prox(&self, ws: &mut EnvelopeWorkspace, from_forward: bool, x: &[f64]) -> (ProxReport, bool) {
        let g = self.target.nonsmooth();
        let input = if from_forward { &ws.forward } else { x };
        let report = g.prox_into(input, self.gamma, &mut ws.tv, &mut ws.prox_point);
        let inexact = g.is_iterative() && !report.converged;
        (report, inexact)
    }

    /// Envelope value and gradient at `x`; the prox point is left in `ws`.
    pub fn evaluate(&self, x: &[f64], ws: &mut EnvelopeWorkspace, grad: &mut [f64]) -> EnvelopeEval {
        ws.resize(self.dim());
        let f = self.target.smooth();
        let g = self.target.nonsmooth();
        let gamma = self.gamma;
        match self.kind {
            EnvelopeKind::MoreauYosida => {
                let fx = f.value_and_gradient(x, &mut ws.grad_f);
                let (prox, inexact) = self.prox(ws, false, x);
                let p = &ws.prox_point;
                let value = fx + g.value_on_domain(p) + vecops::dist_sq(x, p) / (2.0 * gamma);
                for i in 0..x.len() {
                    grad[i] = ws.grad_f[i] + (x[i] - p[i]) / gamma;
                }
                EnvelopeEval { value, prox, inexact }
            }
            EnvelopeKind::ForwardBackward => {
                let fx = f.value_and_gradient(x, &mut ws.grad_f);
                for i in 0..x.len() {
                    ws.forward[i] = x[i] - gamma * ws.grad_f[i];
                }
                let (prox, inexact) = self.prox(ws, true, x);
                let t = &ws.prox_point;
                let value = fx - 0.5 * gamma * vecops::norm_sq(&ws.grad_f)
                    + g.value_on_domain(t)
                    + vecops::dist_sq(&ws.forward, t) / (2.0 * gamma);
                for i in 0..x.len() {
                    ws.residual[i] = x[i] - t[i];
                }
                f.hessian_vec(x, &ws.residual, &mut ws.hv);
                for i in 0..x.len() {
                    grad[i] = ws.residual[i] / gamma - ws.hv[i];
                }
                EnvelopeEval { value, prox, inexact }
            }
        }
    }

    /// Envelope value only (no Hessian-vector product).
    pub fn value_with(&self, x: &[f64], ws: &mut EnvelopeWorkspace) -> f64 {
        ws.resize(self.dim());
        let f = self.target.smooth();
        let g = self.target.nonsmooth();
        let gamma = self.gamma;
        match self.kind {
            EnvelopeKind::MoreauYosida => {
                let fx = f.value(x);
                self.prox(ws, false, x);
                let p = &ws.prox_point;
                fx + g.value_on_domain(p) + vecops::dist_sq(x, p) / (2.0 * gamma)
            }
            EnvelopeKind::ForwardBackward => {
                let fx = f.value_and_gradient(x, &mut ws.grad_f);
                for i in 0..x.len() {
                    ws.forward[i] = x[i] - gamma * ws.grad_f[i];
                }
                self.prox(ws, true, x);
                let t = &ws.prox_point;
                fx - 0.5 * gamma * vecops::norm_sq(&ws.grad_f)
                    + g.value_on_domain(t)
                    + vecops::dist_sq(&ws.forward, t) / (2.0 * gamma)
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_with(x, &mut EnvelopeWorkspace::new(self.dim()))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim()];
        self.evaluate(x, &mut EnvelopeWorkspace::new(self.dim()), &mut grad);
        grad
    }

    /// `P_{γg}(x)` for MY, `T_γ(x) = P_{γg}(x − γ∇f(x))` for FB.
    pub fn prox_point(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = EnvelopeWorkspace::new(self.dim());
        self.value_with(x, &mut ws);
        ws.prox_point
    }
}

/// Largest dimension for which [`dense_hessian`] builds a matrix.
pub const DENSE_HESSIAN_MAX_DIM: usize = 64;

/// `∇²f(x)` as rows, assembled column by column from Hessian-vector products.
pub fn dense_hessian(target: &CompositeTarget, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = target.dim();
    if d > DENSE_HESSIAN_MAX_DIM {
        return Err(Error::Capability(format!(
            "dense Hessians are refused above dimension {DENSE_HESSIAN_MAX_DIM} (got {d})"
        )));
    }
    let f = target.smooth();
    if !f.has_hessian_vec() {
        return Err(Error::Capability("f has no Hessian-vector product".into()));
    }
    let mut h = vec![vec![0.0; d]; d];
    let mut e = vec![0.0; d];
    let mut col = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        f.hessian_vec(x, &e, &mut col);
        e[j] = 0.0;
        for i in 0..d {
            h[i][j] = col[i];
        }
    }
    Ok(h)
}
