//! Potentials, convex bodies and the composite target `F = f + g`.
//!
//! `g` is always `ḡ + 1_K`: a finite convex regulariser `ḡ` restricted to a
//! compact convex body `K`. Bodies carry an *anchor*, the point playing the
//! role of the origin in the radius conditions `B(anchor, r) ⊆ K ⊆
//! B(anchor, R)`. The anchor is the origin when the origin is interior and
//! the body centre otherwise; sampling does not depend on it.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{validation, Error, Result};
use crate::prox::{self, ProxResult, TvWorkspace};
use crate::vecops;

/// Lipschitz constants of `f`, `∇f` and `∇²f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lipschitz {
    /// Bound on `‖∇f‖` over the working ball; `None` when not available.
    pub lambda1: Option<f64>,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// The smooth part `f` of the potential.
pub trait SmoothPotential: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Value and gradient in one pass. Override when they share work.
    fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.gradient(x, out);
        self.value(x)
    }

    /// `∇²f(x) v`. Only called when [`has_hessian_vec`](Self::has_hessian_vec) is true.
    fn hessian_vec(&self, _x: &[f64], _v: &[f64], _out: &mut [f64]) {
        unimplemented!("this potential does not provide Hessian-vector products")
    }

    fn has_hessian_vec(&self) -> bool {
        false
    }

    /// Lipschitz constants; `working_radius` bounds the region used for `lambda1`.
    fn lipschitz(&self, working_radius: f64) -> Lipschitz;
}

/// `f(x) = ½ (x - m)ᵀ A (x - m)` for a symmetric positive semidefinite `A`.
#[derive(Clone, Debug)]
pub struct QuadraticPotential {
    precision: Vec<f64>,
    center: Vec<f64>,
    dim: usize,
    lambda_max: f64,
    lambda_min: f64,
}

impl QuadraticPotential {
    /// Builds the potential from the precision matrix `A` given as rows.
    pub fn new(precision: Vec<Vec<f64>>) -> Result<Self> {
        let d = precision.len();
        if d == 0 {
            return Err(validation("precision matrix is empty"));
        }
        if precision.iter().any(|row| row.len() != d) {
            return Err(validation("precision matrix is not square"));
        }
        let flat: Vec<f64> = precision.into_iter().flatten().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(validation("precision matrix has non-finite entries"));
        }
        let scale = flat.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (flat[i * d + j] - flat[j * d + i]).abs() > 1e-12 * scale {
                    return Err(validation(format!(
                        "precision matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &flat));
        let lambda_max = eig.eigenvalues.max();
        let lambda_min = eig.eigenvalues.min();
        if lambda_min < -1e-12 * scale {
            return Err(validation(format!(
                "precision matrix is not positive semidefinite (eigenvalue {lambda_min:e})"
            )));
        }
        Ok(Self {
            precision: flat,
            center: vec![0.0; d],
            dim: d,
            lambda_max,
            lambda_min: lambda_min.max(0.0),
        })
    }

    /// Builds the potential from a covariance matrix by inverting it.
    pub fn from_covariance(covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = covariance.len();
        if covariance.iter().any(|row| row.len() != d) {
            return Err(validation("covariance matrix is not square"));
        }
        let m = DMatrix::from_row_iterator(d, d, covariance.into_iter().flatten());
        let chol = m
            .cholesky()
            .ok_or_else(|| validation("covariance matrix is not positive definite"))?;
        let inv = chol.inverse();
        let rows = (0..d)
            .map(|i| (0..d).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)])).collect())
            .collect();
        Self::new(rows)
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        if center.len() != self.dim {
            return Err(validation("center has the wrong dimension"));
        }
        self.center = center;
        Ok(self)
    }

    pub fn precision_entry(&self, i: usize, j: usize) -> f64 {
        self.precision[i * self.dim + j]
    }

    pub fn precision_row(&self, i: usize) -> &[f64] {
        &self.precision[i * self.dim..(i + 1) * self.dim]
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.lambda_max
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        self.lambda_min
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = vecops::dot(self.precision_row(i), v);
        }
    }
}

impl SmoothPotential for QuadraticPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for i in 0..d {
            let ui = x[i] - self.center[i];
            let row = self.precision_row(i);
            let mut acc = 0.0;
            for j in 0..d {
                acc += row[j] * (x[j] - self.center[j]);
            }
            total += ui * acc;
        }
        0.5 * total
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let u: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.apply(&u, out);
    }

    fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let u: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.apply(&u, out);
        0.5 * vecops::dot(&u, out)
    }

    fn hessian_vec(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        self.apply(v, out);
    }

    fn has_hessian_vec(&self) -> bool {
        true
    }

    fn lipschitz(&self, working_radius: f64) -> Lipschitz {
        Lipschitz {
            lambda1: Some(self.lambda_max * (working_radius + vecops::norm(&self.center))),
            lambda2: self.lambda_max,
            lambda3: 0.0,
        }
    }
}

/// `f ≡ 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroPotential {
    pub dim: usize,
}

impl SmoothPotential for ZeroPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn hessian_vec(&self, _x: &[f64], _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn has_hessian_vec(&self) -> bool {
        true
    }

    fn lipschitz(&self, _working_radius: f64) -> Lipschitz {
        Lipschitz {
            lambda1: Some(0.0),
            lambda2: 0.0,
            lambda3: 0.0,
        }
    }
}

/// User-supplied Euclidean projection onto a convex set.
pub trait Projector: Send + Sync {
    fn project(&self, x: &[f64], out: &mut [f64]);

    fn contains(&self, x: &[f64]) -> bool;
}

#[derive(Clone)]
enum Shape {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Custom(Arc<dyn Projector>),
}

/// A compact convex body `K`.
#[derive(Clone)]
pub struct ConvexBody {
    shape: Shape,
    dim: usize,
    anchor: Vec<f64>,
    inner_radius: f64,
    outer_radius: f64,
    intrinsic_volumes: Option<Vec<f64>>,
}

impl std::fmt::Debug for ConvexBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.shape {
            Shape::Box { .. } => "box",
            Shape::Ball { .. } => "ball",
            Shape::Custom(_) => "custom",
        };
        f.debug_struct("ConvexBody")
            .field("kind", &kind)
            .field("dim", &self.dim)
            .field("anchor", &self.anchor)
            .field("inner_radius", &self.inner_radius)
            .field("outer_radius", &self.outer_radius)
            .finish()
    }
}

impl ConvexBody {
    /// The box `[lo₁, hi₁] × … × [lo_d, hi_d]`.
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d {
            return Err(validation("box bounds must be non-empty and of equal length"));
        }
        for i in 0..d {
            if !(lo[i].is_finite() && hi[i].is_finite()) || lo[i] >= hi[i] {
                return Err(validation(format!(
                    "box bounds must satisfy lo < hi (coordinate {i}: {} >= {})",
                    lo[i], hi[i]
                )));
            }
        }
        let interior = (0..d).all(|i| lo[i] < 0.0 && 0.0 < hi[i]);
        let anchor: Vec<f64> = if interior {
            vec![0.0; d]
        } else {
            (0..d).map(|i| 0.5 * (lo[i] + hi[i])).collect()
        };
        let mut inner = f64::INFINITY;
        let mut outer_sq = 0.0;
        for i in 0..d {
            let (a, b) = (anchor[i] - lo[i], hi[i] - anchor[i]);
            inner = inner.min(a.min(b));
            outer_sq += a.max(b).powi(2);
        }
        let sides: Vec<f64> = (0..d).map(|i| hi[i] - lo[i]).collect();
        Ok(Self {
            shape: Shape::Box { lo, hi },
            dim: d,
            anchor,
            inner_radius: inner,
            outer_radius: outer_sq.sqrt(),
            intrinsic_volumes: Some(elementary_symmetric(&sides)),
        })
    }

    /// The closed Euclidean ball `B(center, radius)`.
    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = center.len();
        if d == 0 {
            return Err(validation("ball dimension must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(validation("ball radius must be positive and finite"));
        }
        let vols = (0..=d)
            .map(|j| {
                let ln = ln_binomial(d, j) + ln_unit_ball_volume(d) + (j as f64) * radius.ln()
                    - ln_unit_ball_volume(d - j);
                ln.exp()
            })
            .collect();
        Ok(Self {
            anchor: center.clone(),
            shape: Shape::Ball { center, radius },
            dim: d,
            inner_radius: radius,
            outer_radius: radius,
            intrinsic_volumes: Some(vols),
        })
    }

    /// A body given by a projection callback, with caller-supplied radii
    /// around `anchor`. Intrinsic volumes are unavailable.
    pub fn custom(
        projector: Arc<dyn Projector>,
        anchor: Vec<f64>,
        inner_radius: f64,
        outer_radius: f64,
    ) -> Result<Self> {
        if anchor.is_empty() {
            return Err(validation("custom body dimension must be positive"));
        }
        if !(inner_radius > 0.0 && outer_radius >= inner_radius && outer_radius.is_finite()) {
            return Err(validation("custom body needs 0 < r <= R < inf"));
        }
        Ok(Self {
            shape: Shape::Custom(projector),
            dim: anchor.len(),
            anchor,
            inner_radius,
            outer_radius,
            intrinsic_volumes: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Box { lo, hi } => (0..self.dim).all(|i| lo[i] <= x[i] && x[i] <= hi[i]),
            Shape::Ball { center, radius } => vecops::dist(x, center) <= *radius,
            Shape::Custom(p) => p.contains(x),
        }
    }

    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            Shape::Box { lo, hi } => {
                for i in 0..self.dim {
                    out[i] = x[i].clamp(lo[i], hi[i]);
                }
            }
            Shape::Ball { center, radius } => {
                let dist = vecops::dist(x, center);
                if dist <= *radius {
                    out.copy_from_slice(x);
                } else {
                    crate::prox::scale_onto_sphere(x, center, *radius, dist, out);
                }
            }
            Shape::Custom(p) => p.project(x, out),
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.project_into(x, &mut out);
        out
    }

    /// Euclidean distance from `x` to the body.
    pub fn distance(&self, x: &[f64]) -> f64 {
        vecops::dist(x, &self.project(x))
    }

    /// Reference point for the radius conditions.
    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// Whether the anchor differs from the origin.
    pub fn is_shifted(&self) -> bool {
        self.anchor.iter().any(|&a| a != 0.0)
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// `vol₀(K), …, vol_d(K)`, present for boxes and balls.
    pub fn intrinsic_volumes(&self) -> Option<&[f64]> {
        self.intrinsic_volumes.as_deref()
    }

    pub fn volume(&self) -> Option<f64> {
        self.intrinsic_volumes.as_ref().map(|v| v[self.dim])
    }

    /// Box bounds, when the body is a box.
    pub fn box_bounds(&self) -> Option<(&[f64], &[f64])> {
        match &self.shape {
            Shape::Box { lo, hi } => Some((lo, hi)),
            _ => None,
        }
    }

    /// An axis-aligned box containing the body.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::Custom(_) => (
                self.anchor.iter().map(|c| c - self.outer_radius).collect(),
                self.anchor.iter().map(|c| c + self.outer_radius).collect(),
            ),
        }
    }
}

/// Elementary symmetric polynomials `e₀ … e_d` of `values`.
pub fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (n, &v) in values.iter().enumerate() {
        for k in (1..=n + 1).rev() {
            e[k] += v * e[k - 1];
        }
    }
    e
}

/// `ln κ_n`, the log-volume of the unit ball in `R^n`.
pub fn ln_unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// The finite convex part `ḡ` of `g`.
#[derive(Clone, Debug, PartialEq)]
pub enum Regularizer {
    None,
    /// `weight · ‖x‖₁`.
    L1 { weight: f64 },
    /// `weight · TV(x)` for a row-major `rows × cols` image, isotropic.
    TotalVariation { weight: f64, rows: usize, cols: usize },
}

/// How `max ḡ` / `min ḡ` on `K` were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMethod {
    Analytic,
    Supplied,
    RandomSearch { samples: usize },
}

impl std::fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundMethod::Analytic => write!(f, "analytic"),
            BoundMethod::Supplied => write!(f, "supplied"),
            BoundMethod::RandomSearch { samples } => write!(f, "random-search({samples})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizerBounds {
    pub max: f64,
    pub min: f64,
    pub method: BoundMethod,
}

/// Settings of iterative proximal solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxSettings {
    pub tol: f64,
    pub max_iter: usize,
}

pub const RANDOM_SEARCH_SAMPLES: usize = 10_000;

/// `g = ḡ + 1_K`.
#[derive(Clone, Debug)]
pub struct NonSmoothPotential {
    body: ConvexBody,
    regularizer: Regularizer,
    settings: ProxSettings,
    bounds: RegularizerBounds,
}

impl NonSmoothPotential {
    /// `g = 1_K`.
    pub fn indicator(body: ConvexBody) -> Self {
        let settings = ProxSettings::for_dim(body.dim());
        Self {
            body,
            regularizer: Regularizer::None,
            settings,
            bounds: RegularizerBounds {
                max: 0.0,
                min: 0.0,
                method: BoundMethod::Analytic,
            },
        }
    }

    /// `g = weight·‖x‖₁ + 1_K`. Closed-form prox for boxes and the whole-space case.
    pub fn l1(body: ConvexBody, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(validation("l1 weight must be non-negative and finite"));
        }
        let Some((lo, hi)) = body.box_bounds() else {
            return Err(Error::Capability(
                "the l1 prox is only available on boxes".into(),
            ));
        };
        let (mut max, mut min) = (0.0, 0.0);
        for i in 0..body.dim() {
            max += weight * lo[i].abs().max(hi[i].abs());
            min += weight * if lo[i] <= 0.0 && 0.0 <= hi[i] { 0.0 } else { lo[i].abs().min(hi[i].abs()) };
        }
        let settings = ProxSettings::for_dim(body.dim());
        Ok(Self {
            body,
            regularizer: Regularizer::L1 { weight },
            settings,
            bounds: RegularizerBounds {
                max,
                min,
                method: BoundMethod::Analytic,
            },
        })
    }

    /// `g = weight·TV(x) + 1_K` on a `rows × cols` image; `K` must be a box
    /// with the same bounds in every pixel.
    pub fn total_variation(body: ConvexBody, weight: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(validation("TV weight must be non-negative and finite"));
        }
        if rows * cols != body.dim() {
            return Err(validation(format!(
                "image shape {rows}x{cols} does not match dimension {}",
                body.dim()
            )));
        }
        let Some((lo, hi)) = body.box_bounds() else {
            return Err(Error::Capability("the TV prox is only available on boxes".into()));
        };
        if lo.iter().any(|&v| v != lo[0]) || hi.iter().any(|&v| v != hi[0]) {
            return Err(Error::Capability(
                "the TV prox needs identical bounds in every pixel".into(),
            ));
        }
        let settings = ProxSettings::for_dim(body.dim());
        let mut g = Self {
            body,
            regularizer: Regularizer::TotalVariation { weight, rows, cols },
            settings,
            bounds: RegularizerBounds {
                max: 0.0,
                min: 0.0,
                method: BoundMethod::Analytic,
            },
        };
        // A constant image has zero variation, so the minimum is exact.
        let (max, _) = g.random_search(RANDOM_SEARCH_SAMPLES, 0x7a11_5eed);
        g.bounds = RegularizerBounds {
            max,
            min: 0.0,
            method: BoundMethod::RandomSearch {
                samples: RANDOM_SEARCH_SAMPLES,
            },
        };
        Ok(g)
    }

    /// Overrides `max ḡ` and `min ḡ` on `K`.
    pub fn with_bounds(mut self, max: f64, min: f64) -> Result<Self> {
        if !(max.is_finite() && min.is_finite()) || min > max {
            return Err(validation("regulariser bounds must be finite with min <= max"));
        }
        self.bounds = RegularizerBounds {
            max,
            min,
            method: BoundMethod::Supplied,
        };
        Ok(self)
    }

    pub fn with_prox_settings(mut self, settings: ProxSettings) -> Result<Self> {
        if !(settings.tol > 0.0) || settings.max_iter == 0 {
            return Err(validation("prox tolerance must be positive and max_iter >= 1"));
        }
        self.settings = settings;
        Ok(self)
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn prox_settings(&self) -> ProxSettings {
        self.settings
    }

    pub fn bounds(&self) -> RegularizerBounds {
        self.bounds
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    /// Whether the prox is computed by an iterative solver.
    pub fn is_iterative(&self) -> bool {
        matches!(self.regularizer, Regularizer::TotalVariation { weight, .. } if weight > 0.0)
    }

    /// `ḡ(x)`, meaningful for `x ∈ K`.
    pub fn value_on_domain(&self, x: &[f64]) -> f64 {
        match &self.regularizer {
            Regularizer::None => 0.0,
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::TotalVariation { weight, rows, cols } => {
                weight * prox::total_variation(x, *rows, *cols)
            }
        }
    }

    /// `g(x)`: `ḡ(x)` on `K`, `+∞` outside.
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.body.contains(x) {
            self.value_on_domain(x)
        } else {
            f64::INFINITY
        }
    }

    /// Computes `P_{γg}(x)` into `out`, using `ws` for warm starts of iterative solvers.
    pub fn prox_into(&self, x: &[f64], gamma: f64, ws: &mut TvWorkspace, out: &mut [f64]) -> ProxReport {
        match &self.regularizer {
            Regularizer::None => {
                self.body.project_into(x, out);
                ProxReport::exact()
            }
            Regularizer::L1 { weight } => {
                let (lo, hi) = self.body.box_bounds().expect("checked at construction");
                prox::prox_l1_box_into(x, gamma * weight, lo, hi, out);
                ProxReport::exact()
            }
            Regularizer::TotalVariation { weight, rows, cols } => {
                let (lo, hi) = self.body.box_bounds().expect("checked at construction");
                let r = prox::prox_tv_box_into(
                    x,
                    *rows,
                    *cols,
                    gamma * weight,
                    lo[0],
                    hi[0],
                    self.settings.tol,
                    self.settings.max_iter,
                    ws,
                    out,
                );
                ProxReport {
                    inexactness: r.inexactness,
                    iterations: r.iterations,
                    converged: r.converged,
                }
            }
        }
    }

    /// Convenience wrapper around [`prox_into`](Self::prox_into) with a cold workspace.
    pub fn prox(&self, x: &[f64], gamma: f64) -> ProxResult {
        let mut out = vec![0.0; self.dim()];
        let mut ws = TvWorkspace::default();
        let r = self.prox_into(x, gamma, &mut ws, &mut out);
        ProxResult {
            point: out,
            inexactness: r.inexactness,
            iterations: r.iterations,
            converged: r.converged,
        }
    }

    /// Max and min of `ḡ` over projected uniform samples from the bounding box.
    fn random_search(&self, samples: usize, seed: u64) -> (f64, f64) {
        let (lo, hi) = self.body.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.dim()];
        let mut p = vec![0.0; self.dim()];
        let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..samples {
            for i in 0..x.len() {
                x[i] = rng.random_range(lo[i]..=hi[i]);
            }
            self.body.project_into(&x, &mut p);
            let v = self.value_on_domain(&p);
            max = max.max(v);
            min = min.min(v);
        }
        (max, min)
    }
}

/// Accuracy report of a prox evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxReport {
    /// Upper bound on the distance to the exact prox; zero for closed forms.
    pub inexactness: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ProxReport {
    pub fn exact() -> Self {
        Self {
            inexactness: 0.0,
            iterations: 0,
            converged: true,
        }
    }
}

impl ProxSettings {
    /// Defaults for a `dim`-dimensional problem.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            tol: 1e-5 * (dim as f64).sqrt(),
            max_iter: 200,
        }
    }
}

/// The potential `F = f + g` of the target density `∝ exp(-F)`.
#[derive(Clone)]
pub struct CompositeTarget {
    f: Arc<dyn SmoothPotential>,
    g: NonSmoothPotential,
    working_radius: f64,
}

impl std::fmt::Debug for CompositeTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeTarget")
            .field("dim", &self.dim())
            .field("g", &self.g)
            .field("working_radius", &self.working_radius)
            .finish()
    }
}

impl CompositeTarget {
    /// Combines `f` and `g`; the working radius `λ₀` defaults to `2R`.
    pub fn new(f: Arc<dyn SmoothPotential>, g: NonSmoothPotential) -> Result<Self> {
        if f.dim() != g.dim() {
            return Err(validation(format!(
                "smooth part has dimension {} but the body has dimension {}",
                f.dim(),
                g.dim()
            )));
        }
        let working_radius = 2.0 * g.body().outer_radius();
        Ok(Self { f, g, working_radius })
    }

    pub fn with_working_radius(mut self, lambda0: f64) -> Result<Self> {
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(validation("working radius must be non-negative and finite"));
        }
        self.working_radius = lambda0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn smooth(&self) -> &dyn SmoothPotential {
        self.f.as_ref()
    }

    pub fn smooth_arc(&self) -> Arc<dyn SmoothPotential> {
        Arc::clone(&self.f)
    }

    pub fn nonsmooth(&self) -> &NonSmoothPotential {
        &self.g
    }

    pub fn body(&self) -> &ConvexBody {
        self.g.body()
    }

    /// `λ₀`.
    pub fn working_radius(&self) -> f64 {
        self.working_radius
    }

    pub fn lipschitz(&self) -> Lipschitz {
        self.f.lipschitz(self.working_radius)
    }

    /// `F(x)`, `+∞` outside `K`.
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.g.body().contains(x) {
            self.f.value(x) + self.g.value_on_domain(x)
        } else {
            f64::INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma(d: usize) -> Vec<Vec<f64>> {
        (0..d)
            .map(|i| (0..d).map(|j| 1.0 / (1.0 + (i as f64 - j as f64).abs())).collect())
            .collect()
    }

    #[test]
    fn inverse_of_two_by_two_covariance() {
        let q = QuadraticPotential::from_covariance(sigma(2)).unwrap();
        let expected = [[4.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 4.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((q.precision_entry(i, j) - expected[i][j]).abs() < 1e-14);
            }
        }
        assert!((q.largest_eigenvalue() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_entries_for_d10() {
        let s = sigma(10);
        assert_eq!(s[0][1], 0.5);
        assert!((s[0][2] - 1.0 / 3.0).abs() < 1e-16);
        assert!(QuadraticPotential::from_covariance(s).is_ok());
    }

    #[test]
    fn identity_quadratic_value_and_gradient() {
        let q = QuadraticPotential::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(q.value(&[1.0, 0.0]), 0.5);
        let mut g = [0.0; 2];
        q.gradient(&[1.0, 0.0], &mut g);
        assert_eq!(g, [1.0, 0.0]);
        assert_eq!(q.lipschitz(1.0).lambda3, 0.0);
    }

    #[test]
    fn rejects_non_symmetric_and_indefinite() {
        assert!(matches!(
            QuadraticPotential::new(vec![vec![1.0, 0.5], vec![0.0, 1.0]]),
            Err(Error::Validation(_))
        ));
        assert!(QuadraticPotential::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(QuadraticPotential::new(vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn box_projection_and_volumes() {
        let b = ConvexBody::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(b.project(&[1.5, 0.3]), vec![1.0, 0.3]);
        assert_eq!(b.intrinsic_volumes().unwrap(), &[1.0, 2.0, 1.0]);
        assert!(b.is_shifted());
        assert_eq!(b.anchor(), &[0.5, 0.5]);
        assert!((b.inner_radius() - 0.5).abs() < 1e-15);
        assert!((b.outer_radius() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn box_around_origin_keeps_origin_anchor() {
        let b = ConvexBody::new_box(vec![-1.0, -2.0], vec![3.0, 1.0]).unwrap();
        assert!(!b.is_shifted());
        assert_eq!(b.inner_radius(), 1.0);
        assert!((b.outer_radius() - 13f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_box() {
        assert!(matches!(
            ConvexBody::new_box(vec![0.0, 1.0], vec![1.0, 1.0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn anisotropic_box_for_d2() {
        let b = ConvexBody::new_box(vec![0.0, 0.0], vec![5.0, 1.0]).unwrap();
        assert_eq!(b.volume(), Some(5.0));
        assert_eq!(b.intrinsic_volumes().unwrap()[1], 6.0);
    }

    #[test]
    fn ball_volumes() {
        let b = ConvexBody::new_ball(vec![0.0, 0.0], 2.0).unwrap();
        let v = b.intrinsic_volumes().unwrap();
        let pi = std::f64::consts::PI;
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!((v[1] - 2.0 * pi).abs() < 1e-12, "half perimeter");
        assert!((v[2] - 4.0 * pi).abs() < 1e-12);
        assert_eq!(b.project(&[4.0, 0.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn composite_values() {
        let body = ConvexBody::new_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = QuadraticPotential::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let t = CompositeTarget::new(Arc::new(f), NonSmoothPotential::indicator(body.clone())).unwrap();
        assert_eq!(t.value(&[2.0, 0.0]), f64::INFINITY);
        assert!((t.value(&[0.5, 0.5]) - 0.25).abs() < 1e-15);
        assert!((t.working_radius() - 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
        let z = CompositeTarget::new(Arc::new(ZeroPotential { dim: 2 }), NonSmoothPotential::indicator(body)).unwrap();
        assert_eq!(z.value(&[0.2, 0.7]), 0.0);
    }

    #[test]
    fn l1_bounds_are_analytic() {
        let body = ConvexBody::new_box(vec![-1.0, 0.5], vec![2.0, 1.0]).unwrap();
        let g = NonSmoothPotential::l1(body, 2.0).unwrap();
        let b = g.bounds();
        assert_eq!(b.method, BoundMethod::Analytic);
        assert_eq!(b.max, 2.0 * (2.0 + 1.0));
        assert_eq!(b.min, 2.0 * 0.5);
    }

    #[test]
    fn tv_bounds_use_random_search() {
        let body = ConvexBody::new_box(vec![0.0; 9], vec![1.0; 9]).unwrap();
        let g = NonSmoothPotential::total_variation(body, 1.0, 3, 3).unwrap();
        let b = g.bounds();
        assert_eq!(b.method, BoundMethod::RandomSearch { samples: RANDOM_SEARCH_SAMPLES });
        assert_eq!(b.min, 0.0);
        assert!(b.max > 1.0);
    }

    #[test]
    fn elementary_symmetric_small() {
        assert_eq!(elementary_symmetric(&[1.0, 2.0, 3.0]), vec![1.0, 6.0, 11.0, 6.0]);
    }
}
