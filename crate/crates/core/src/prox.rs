//! Proximal operators `P_{γg}(x) = argmin_z { g(z) + ‖x − z‖² / 2γ }`.
//!
//! Closed-form operators report zero inexactness. The TV + box operator is
//! iterative and reports a certified bound on its distance to the exact
//! prox, derived from the primal-dual gap.

use crate::model::ProxReport;

#[derive(Clone, Debug, PartialEq)]
pub struct ProxResult {
    pub point: Vec<f64>,
    /// Upper bound on `‖point − P_{γg}(x)‖`.
    pub inexactness: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ProxResult {
    fn exact(point: Vec<f64>) -> Self {
        Self {
            point,
            inexactness: 0.0,
            iterations: 0,
            converged: true,
        }
    }
}

/// Projection onto the box `[lo, hi]`.
pub fn prox_box(x: &[f64], lo: &[f64], hi: &[f64]) -> ProxResult {
    ProxResult::exact(x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect())
}

/// Soft thresholding at `γβ`.
pub fn prox_l1(x: &[f64], gamma: f64, weight: f64) -> ProxResult {
    let t = gamma * weight;
    ProxResult::exact(x.iter().map(|&v| soft_threshold(v, t)).collect())
}

/// Prox of `t‖·‖₁ + 1_[lo,hi]`: soft thresholding followed by clamping.
pub fn prox_l1_box_into(x: &[f64], t: f64, lo: &[f64], hi: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = soft_threshold(x[i], t).clamp(lo[i], hi[i]);
    }
}

pub fn prox_l1_box(x: &[f64], t: f64, lo: &[f64], hi: &[f64]) -> ProxResult {
    let mut out = vec![0.0; x.len()];
    prox_l1_box_into(x, t, lo, hi, &mut out);
    ProxResult::exact(out)
}

/// Projection onto the ball `B(center, radius)`.
pub fn prox_ball(x: &[f64], center: &[f64], radius: f64) -> ProxResult {
    let dist = crate::vecops::dist(x, center);
    if dist <= radius {
        return ProxResult::exact(x.to_vec());
    }
    let mut out = vec![0.0; x.len()];
    scale_onto_sphere(x, center, radius, dist, &mut out);
    ProxResult::exact(out)
}

/// Radial projection of an outside point, shrunk by a few ulps if rounding
/// leaves it outside, so that projecting again is the identity.
pub(crate) fn scale_onto_sphere(x: &[f64], center: &[f64], radius: f64, dist: f64, out: &mut [f64]) {
    let mut s = radius / dist;
    for _ in 0..8 {
        for i in 0..x.len() {
            out[i] = center[i] + s * (x[i] - center[i]);
        }
        if crate::vecops::dist(out, center) <= radius {
            return;
        }
        s *= 1.0 - f64::EPSILON;
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Exact prox of `λ Σ |z_{i+1} − z_i|` by the taut-string method.
pub fn prox_1d_tv(x: &[f64], lambda: f64) -> ProxResult {
    let mut out = vec![0.0; x.len()];
    tv1d_into(x, lambda, &mut out);
    ProxResult::exact(out)
}

/// Taut-string 1-D TV denoising (Condat's direct algorithm).
pub fn tv1d_into(input: &[f64], lambda: f64, output: &mut [f64]) {
    let width = input.len();
    if width == 0 {
        return;
    }
    if lambda <= 0.0 {
        output.copy_from_slice(input);
        return;
    }
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    let twolambda = 2.0 * lambda;
    loop {
        while k == width - 1 {
            if umin < 0.0 {
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < -lambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            loop {
                output[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = -lambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= -lambda {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                umax = -lambda;
            }
        }
    }
}

/// Isotropic total variation of a row-major `rows × cols` image with
/// forward differences and a zero difference past the last row/column.
pub fn total_variation(x: &[f64], rows: usize, cols: usize) -> f64 {
    let mut tv = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let v = x[i * cols + j];
            let dx = if i + 1 < rows { x[(i + 1) * cols + j] - v } else { 0.0 };
            let dy = if j + 1 < cols { x[i * cols + j + 1] - v } else { 0.0 };
            tv += (dx * dx + dy * dy).sqrt();
        }
    }
    tv
}

/// Caller-owned buffers of the TV solver. The dual variable is kept between
/// calls and used as a warm start when the image shape matches.
#[derive(Clone, Debug, Default)]
pub struct TvWorkspace {
    p: Vec<f64>,
    p_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
}

impl TvWorkspace {
    fn prepare(&mut self, d: usize) {
        if self.p.len() != 2 * d {
            self.p = vec![0.0; 2 * d];
        }
        self.p_prev.resize(2 * d, 0.0);
        self.r.resize(2 * d, 0.0);
        self.z.resize(d, 0.0);
        self.w.resize(d, 0.0);
    }

    /// Drops the warm start.
    pub fn reset(&mut self) {
        self.p.clear();
    }
}

// Forward differences: out[0..d] vertical, out[d..2d] horizontal.
fn grad_op(z: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    let d = rows * cols;
    for i in 0..rows {
        for j in 0..cols {
            let idx = i * cols + j;
            out[idx] = if i + 1 < rows { z[idx + cols] - z[idx] } else { 0.0 };
            out[d + idx] = if j + 1 < cols { z[idx + 1] - z[idx] } else { 0.0 };
        }
    }
}

// Adjoint of `grad_op`.
fn grad_adjoint(p: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    let d = rows * cols;
    for i in 0..rows {
        for j in 0..cols {
            let idx = i * cols + j;
            let mut v = 0.0;
            if i + 1 < rows {
                v -= p[idx];
            }
            if i > 0 {
                v += p[idx - cols];
            }
            if j + 1 < cols {
                v -= p[d + idx];
            }
            if j > 0 {
                v += p[d + idx - 1];
            }
            out[idx] = v;
        }
    }
}

/// Prox of `λ·TV + 1_{[lo,hi]^d}` by fast gradient projection on the dual.
///
/// `λ` is the product `γβ`. The returned inexactness is `√(2·gap)`, where
/// `gap` is the primal-dual gap at the returned point; the primal objective
/// is 1-strongly convex, so this bounds the distance to the exact prox.
#[allow(clippy::too_many_arguments)]
pub fn prox_tv_box_into(
    b: &[f64],
    rows: usize,
    cols: usize,
    lambda: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
    ws: &mut TvWorkspace,
    out: &mut [f64],
) -> ProxReport {
    let d = rows * cols;
    assert_eq!(b.len(), d, "image size does not match shape");
    if lambda <= 0.0 {
        for i in 0..d {
            out[i] = b[i].clamp(lo, hi);
        }
        return ProxReport::exact();
    }
    ws.prepare(d);
    let step = 1.0 / (8.0 * lambda);
    let TvWorkspace { p, p_prev, r, z, w } = ws;
    r.copy_from_slice(p);
    let mut t: f64 = 1.0;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    // Primal point and gap at the current dual iterate `p`.
    let certify = |p: &[f64], w: &mut [f64], out: &mut [f64]| -> f64 {
        grad_adjoint(p, rows, cols, w);
        let (mut half_dist, mut half_w, mut half_b, mut fid) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..d {
            let wi = b[i] - lambda * w[i];
            let zi = wi.clamp(lo, hi);
            out[i] = zi;
            half_dist += (zi - wi) * (zi - wi);
            half_w += wi * wi;
            half_b += b[i] * b[i];
            fid += (zi - b[i]) * (zi - b[i]);
        }
        let primal = 0.5 * fid + lambda * total_variation(out, rows, cols);
        let dual = 0.5 * (half_dist - half_w + half_b);
        (primal - dual).max(0.0)
    };

    gap = gap.min(certify(p, w, out));
    if (2.0 * gap).sqrt() <= tol {
        return ProxReport {
            inexactness: (2.0 * gap).sqrt(),
            iterations: 0,
            converged: true,
        };
    }

    while iterations < max_iter {
        iterations += 1;
        grad_adjoint(r, rows, cols, w);
        for i in 0..d {
            z[i] = (b[i] - lambda * w[i]).clamp(lo, hi);
        }
        p_prev.copy_from_slice(p);
        grad_op(z, rows, cols, p);
        for idx in 0..d {
            let q1 = r[idx] + step * p[idx];
            let q2 = r[d + idx] + step * p[d + idx];
            let scale = (q1 * q1 + q2 * q2).sqrt().max(1.0);
            p[idx] = q1 / scale;
            p[d + idx] = q2 / scale;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..2 * d {
            r[i] = p[i] + momentum * (p[i] - p_prev[i]);
        }
        t = t_next;
        if iterations % 5 == 0 || iterations == max_iter {
            gap = certify(p, w, out);
            if (2.0 * gap).sqrt() <= tol {
                break;
            }
        }
    }
    let inexactness = (2.0 * gap).sqrt();
    ProxReport {
        inexactness,
        iterations,
        converged: inexactness <= tol,
    }
}

/// Allocating wrapper around [`prox_tv_box_into`] with `λ = γβ`.
#[allow(clippy::too_many_arguments)]
pub fn prox_tv_box(
    x: &[f64],
    rows: usize,
    cols: usize,
    gamma: f64,
    beta: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> ProxResult {
    let mut out = vec![0.0; x.len()];
    let mut ws = TvWorkspace::default();
    let r = prox_tv_box_into(x, rows, cols, gamma * beta, lo, hi, tol, max_iter, &mut ws, &mut out);
    ProxResult {
        point: out,
        inexactness: r.inexactness,
        iterations: r.iterations,
        converged: r.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_clamps() {
        let r = prox_box(&[1.5, -0.2], &[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(r.point, vec![1.0, 0.0]);
        assert_eq!(r.inexactness, 0.0);
        assert_eq!(prox_box(&[0.3, 0.6], &[0.0, 0.0], &[1.0, 1.0]).point, vec![0.3, 0.6]);
        assert_eq!(prox_box(&[2.0, 2.0], &[0.0, 0.0], &[1.0, 1.0]).point, vec![1.0, 1.0]);
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(prox_l1(&[2.0, 0.3, -2.0], 0.5, 1.0).point, vec![1.5, 0.0, -1.5]);
    }

    #[test]
    fn tv1d_identity_cases() {
        let x = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(prox_1d_tv(&x, 0.0).point, x.to_vec());
        assert_eq!(prox_1d_tv(&[0.7; 5], 1.3).point, vec![0.7; 5]);
        assert_eq!(prox_1d_tv(&[4.2], 1.0).point, vec![4.2]);
    }

    #[test]
    fn tv1d_ramp_ends_move_inward() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let p = prox_1d_tv(&x, 0.25).point;
        let expected = [0.25, 1.0, 2.0, 3.0, 3.75];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn tv1d_large_weight_gives_mean() {
        let p = prox_1d_tv(&[1.0, 3.0, 2.0, 6.0], 100.0).point;
        for v in p {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_box_constant_image_is_fixed() {
        let x = vec![0.4; 16];
        let r = prox_tv_box(&x, 4, 4, 0.1, 1.0, 0.0, 1.0, 1e-9, 200);
        assert!(r.converged);
        for v in &r.point {
            assert!((v - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn tv_box_zero_weight_is_clamp() {
        let x = vec![-0.5, 0.2, 1.7, 0.9];
        let r = prox_tv_box(&x, 2, 2, 0.1, 0.0, 0.0, 1.0, 1e-6, 200);
        assert_eq!(r.point, vec![0.0, 0.2, 1.0, 0.9]);
        assert_eq!(r.inexactness, 0.0);
    }

    #[test]
    fn tv_box_large_weight_gives_clipped_mean() {
        let mut x = vec![0.2; 16];
        for v in x.iter_mut().skip(8) {
            *v = 1.4;
        }
        let r = prox_tv_box(&x, 4, 4, 10.0, 10.0, 0.0, 1.0, 1e-6, 5000);
        assert!(r.converged, "inexactness {}", r.inexactness);
        for v in &r.point {
            assert!((v - 0.8).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn tv_adjoint_pair() {
        let (rows, cols) = (3, 4);
        let z: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let p: Vec<f64> = (0..24).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut dz = vec![0.0; 24];
        let mut dtp = vec![0.0; 12];
        grad_op(&z, rows, cols, &mut dz);
        grad_adjoint(&p, rows, cols, &mut dtp);
        let lhs: f64 = dz.iter().zip(&p).map(|(a, b)| a * b).sum();
        let rhs: f64 = z.iter().zip(&dtp).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
