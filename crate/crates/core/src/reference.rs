//! Ground truth for low-dimensional targets: tensor Gauss–Legendre
//! quadrature of normalised moments, tabulated 1-D inverse CDFs, the exact
//! 1-D empirical Wasserstein distance and batch-means standard errors.

use std::sync::Arc;

use crate::envelope::{EnvelopeHandle, EnvelopeWorkspace};
use crate::error::{validation, Error, Result};
use crate::exec::Execution;
use crate::model::{CompositeTarget, ConvexBody};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl AxisRule {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::panels(&[lo, hi], n)
    }

    /// Panels between consecutive `breaks`, with about `total_nodes` nodes
    /// spread in proportion to panel length (at least 8 per panel).
    pub fn panels(breaks: &[f64], total_nodes: usize) -> Result<Self> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(validation("panel breaks must be strictly increasing"));
        }
        if breaks.iter().any(|b| !b.is_finite()) {
            return Err(validation("panel breaks must be finite"));
        }
        let span = breaks[breaks.len() - 1] - breaks[0];
        let mut nodes = Vec::with_capacity(total_nodes);
        let mut weights = Vec::with_capacity(total_nodes);
        for w in breaks.windows(2) {
            let len = w[1] - w[0];
            let n = ((total_nodes as f64 * len / span).round() as usize).max(8);
            let (x, wt) = gauss_legendre(n);
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * len);
            nodes.extend(x.iter().map(|t| mid + half * t));
            weights.extend(wt.iter().map(|v| half * v));
        }
        Ok(Self {
            nodes,
            weights,
            lo: breaks[0],
            hi: breaks[breaks.len() - 1],
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Axis rules covering the bounding box of `body` widened by `margin`, with
/// panel breaks at the box faces.
pub fn window_axes(body: &ConvexBody, margin: f64, nodes_per_axis: usize) -> Result<Vec<AxisRule>> {
    let (lo, hi) = body.bounding_box();
    (0..body.dim())
        .map(|i| {
            if margin > 0.0 {
                AxisRule::panels(&[lo[i] - margin, lo[i], hi[i], hi[i] + margin], nodes_per_axis)
            } else {
                AxisRule::panels(&[lo[i], hi[i]], nodes_per_axis)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureOptions {
    /// Fail when the density on the window boundary exceeds this fraction of the peak.
    pub boundary_tol: Option<f64>,
    pub execution: Execution,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            boundary_tol: Some(1e-12),
            execution: Execution::default(),
        }
    }
}

impl QuadratureOptions {
    pub fn unchecked() -> Self {
        Self {
            boundary_tol: None,
            ..Self::default()
        }
    }
}

/// Weighted sums `∫ φ_j(x) e^{ℓ(x)} dx` over a tensor grid, reported as
/// `log_mass = ln ∫ e^ℓ` and expectations `∫ φ_j e^ℓ / ∫ e^ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Integrals {
    pub log_mass: f64,
    pub expectations: Vec<f64>,
    /// Largest boundary-to-peak density ratio found, when checked.
    pub boundary_ratio: Option<f64>,
}

fn grid_points(axes: &[AxisRule]) -> Result<usize> {
    match axes.len() {
        1 | 2 => Ok(axes.iter().map(AxisRule::len).product()),
        d => Err(validation(format!("tensor quadrature supports d <= 2, got {d}"))),
    }
}

fn point_of(axes: &[AxisRule], idx: usize, buf: &mut [f64]) -> f64 {
    if axes.len() == 1 {
        buf[0] = axes[0].nodes[idx];
        axes[0].weights[idx]
    } else {
        let n1 = axes[1].len();
        let (i, j) = (idx / n1, idx % n1);
        buf[0] = axes[0].nodes[i];
        buf[1] = axes[1].nodes[j];
        axes[0].weights[i] * axes[1].weights[j]
    }
}

/// Integrates `φ_j · exp(log_density)` over the tensor grid `axes` (`d ≤ 2`).
pub fn integrate<L, P>(log_density: L, axes: &[AxisRule], phis: P, n_phi: usize, opts: &QuadratureOptions) -> Result<Integrals>
where
    L: Fn(&[f64]) -> f64 + Sync + Send,
    P: Fn(&[f64], &mut [f64]) + Sync + Send,
{
    let total = grid_points(axes)?;
    let d = axes.len();
    let chunk = axes[d - 1].len().max(1);
    let logs: Vec<Vec<f64>> = opts.execution.map_chunks(total, chunk, |range| {
        let mut x = vec![0.0; d];
        range
            .map(|idx| {
                point_of(axes, idx, &mut x);
                log_density(&x)
            })
            .collect()
    });
    let peak = logs
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| if v.is_nan() { m } else { m.max(v) });
    if !peak.is_finite() {
        return Err(Error::Numerical("density vanishes or is unbounded on the whole grid".into()));
    }
    let partial: Vec<(f64, Vec<f64>)> = opts.execution.map(logs.len(), |c| {
        let mut x = vec![0.0; d];
        let mut phi = vec![0.0; n_phi];
        let mut acc = vec![0.0; n_phi];
        let mut mass = 0.0;
        for (k, &lv) in logs[c].iter().enumerate() {
            let w = point_of(axes, c * chunk + k, &mut x) * (lv - peak).exp();
            if w == 0.0 || w.is_nan() {
                continue;
            }
            mass += w;
            phis(&x, &mut phi);
            for j in 0..n_phi {
                acc[j] += w * phi[j];
            }
        }
        (mass, acc)
    });
    let mut mass = 0.0;
    let mut acc = vec![0.0; n_phi];
    for (m, a) in partial {
        mass += m;
        for j in 0..n_phi {
            acc[j] += a[j];
        }
    }
    if !(mass > 0.0) {
        return Err(Error::Numerical("zero mass on the quadrature grid".into()));
    }
    let boundary_ratio = match opts.boundary_tol {
        Some(tol) => {
            let ratio = boundary_peak(&log_density, axes) - peak;
            let ratio = ratio.exp();
            if ratio > tol {
                return Err(Error::WindowTooSmall { ratio });
            }
            Some(ratio)
        }
        None => None,
    };
    Ok(Integrals {
        log_mass: peak + mass.ln(),
        expectations: acc.into_iter().map(|a| a / mass).collect(),
        boundary_ratio,
    })
}

fn boundary_peak<L: Fn(&[f64]) -> f64>(log_density: &L, axes: &[AxisRule]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut upd = |v: f64| {
        if v > best {
            best = v;
        }
    };
    if axes.len() == 1 {
        upd(log_density(&[axes[0].lo]));
        upd(log_density(&[axes[0].hi]));
    } else {
        for side in 0..2 {
            let other = 1 - side;
            for &edge in &[axes[side].lo, axes[side].hi] {
                let ends = [axes[other].lo, axes[other].hi];
                for &t in axes[other].nodes.iter().chain(ends.iter()) {
                    let mut x = [0.0; 2];
                    x[side] = edge;
                    x[other] = t;
                    upd(log_density(&x));
                }
            }
        }
    }
    best
}

/// Normalised first and second moments per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub log_mass: f64,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub variance: Vec<f64>,
    pub boundary_ratio: Option<f64>,
}

/// Moments of the density `∝ exp(log_density)` by tensor quadrature.
pub fn quadrature_moments<L>(log_density: L, axes: &[AxisRule], opts: &QuadratureOptions) -> Result<Moments>
where
    L: Fn(&[f64]) -> f64 + Sync + Send,
{
    let d = axes.len();
    let r = integrate(
        log_density,
        axes,
        |x, out| {
            for i in 0..x.len() {
                out[i] = x[i];
                out[x.len() + i] = x[i] * x[i];
            }
        },
        2 * d,
        opts,
    )?;
    let mean = r.expectations[..d].to_vec();
    let second_moment = r.expectations[d..].to_vec();
    let variance = mean.iter().zip(&second_moment).map(|(m, s)| s - m * m).collect();
    Ok(Moments {
        log_mass: r.log_mass,
        mean,
        second_moment,
        variance,
        boundary_ratio: r.boundary_ratio,
    })
}

/// Moments at `n` and `2n` nodes per axis; returns the finer result and the
/// largest relative change of any mean or variance.
pub fn quadrature_moments_refined<L, A>(log_density: L, make_axes: A, n: usize, opts: &QuadratureOptions) -> Result<(Moments, f64)>
where
    L: Fn(&[f64]) -> f64 + Sync + Send,
    A: Fn(usize) -> Result<Vec<AxisRule>>,
{
    let coarse = quadrature_moments(&log_density, &make_axes(n)?, opts)?;
    let fine = quadrature_moments(&log_density, &make_axes(2 * n)?, opts)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let change = coarse
        .mean
        .iter()
        .zip(&fine.mean)
        .chain(coarse.variance.iter().zip(&fine.variance))
        .map(|(a, b)| rel(*a, *b))
        .fold(0.0, f64::max);
    Ok((fine, change))
}

/// `x ↦ −F(x)` for the target.
pub fn target_log_density(target: &Arc<CompositeTarget>) -> impl Fn(&[f64]) -> f64 + Sync + Send {
    let t = Arc::clone(target);
    move |x| -t.value(x)
}

/// `x ↦ −F_γ(x)` for an envelope.
pub fn envelope_log_density(handle: &EnvelopeHandle) -> impl Fn(&[f64]) -> f64 + Sync + Send {
    let h = handle.clone();
    move |x| -h.value_with(x, &mut EnvelopeWorkspace::new(x.len()))
}

/// Tabulated 1-D density with an inverse CDF, for exact-in-law draws.
#[derive(Clone, Debug)]
pub struct TabulatedDensity1d {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl TabulatedDensity1d {
    /// Tabulates `exp(log_density)` on `cells` equal cells of `[lo, hi]` by
    /// the midpoint rule; the CDF is linear within cells.
    pub fn new<L: Fn(f64) -> f64>(log_density: L, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo < hi) || cells == 0 {
            return Err(validation("need lo < hi and at least one cell"));
        }
        let w = (hi - lo) / cells as f64;
        let logs: Vec<f64> = (0..cells).map(|i| log_density(lo + (i as f64 + 0.5) * w)).collect();
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::Numerical("density vanishes on the whole interval".into()));
        }
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for l in &logs {
            acc += (l - peak).exp();
            cdf.push(acc);
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        let grid = (0..=cells).map(|i| lo + i as f64 * w).collect();
        Ok(Self { grid, cdf })
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.grid[k - 1] + t * (self.grid[k] - self.grid[k - 1])
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.grid[0] {
            return 0.0;
        }
        let last = self.grid.len() - 1;
        if x >= self.grid[last] {
            return 1.0;
        }
        let k = self.grid.partition_point(|&g| g <= x).clamp(1, last);
        let t = (x - self.grid[k - 1]) / (self.grid[k] - self.grid[k - 1]);
        self.cdf[k - 1] + t * (self.cdf[k] - self.cdf[k - 1])
    }
}

/// `W₁` between the empirical measures of `a` and `b`, computed exactly as
/// `∫ |F_a − F_b|`. For equal sizes this is the mean absolute difference of
/// order statistics.
pub fn empirical_w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(validation("empirical W1 needs non-empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (next - prev) * (i as f64 / na - j as f64 / nb).abs();
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Mean and batch-means standard error of a correlated series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchMeans {
    pub mean: f64,
    pub standard_error: f64,
    pub batches: usize,
    pub batch_size: usize,
}

pub const DEFAULT_BATCHES: usize = 20;

pub fn batch_means(series: &[f64], batches: usize) -> Result<BatchMeans> {
    if batches < 2 || series.len() < batches {
        return Err(validation("batch means needs at least two batches of one sample"));
    }
    let size = series.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok(BatchMeans {
        mean: series.iter().sum::<f64>() / series.len() as f64,
        standard_error: (var / batches as f64).sqrt(),
        batches,
        batch_size: size,
    })
}
