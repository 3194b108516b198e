//! Independent numerical oracles shared by the integration tests.
//!
//! Everything here recomputes expected values by brute force (dense
//! quadrature, direct summation) without touching the sampler or estimator
//! code paths under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Moments of the density `p(x) ∝ exp(cᵀx + xᵀAx)` on the unit sphere in
/// R³, by midpoint quadrature over spherical coordinates.
///
/// Returns `(E[x], E[x xᵀ])`.
pub fn sphere3_moments(a: &DMatrix<f64>, c: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n_phi = 512;
    let n_psi = 1024;
    let dphi = std::f64::consts::PI / n_phi as f64;
    let dpsi = 2.0 * std::f64::consts::PI / n_psi as f64;

    // First pass: locate the maximum exponent for stability.
    let exponent = |x: &[f64; 3]| -> f64 {
        let mut e = 0.0;
        for i in 0..3 {
            e += c[i] * x[i];
            for j in 0..3 {
                e += x[i] * a[(i, j)] * x[j];
            }
        }
        e
    };
    let mut emax = f64::NEG_INFINITY;
    for i in 0..n_phi {
        let phi = (i as f64 + 0.5) * dphi;
        for j in 0..n_psi {
            let psi = (j as f64 + 0.5) * dpsi;
            let x = [phi.sin() * psi.cos(), phi.sin() * psi.sin(), phi.cos()];
            emax = emax.max(exponent(&x));
        }
    }

    let mut total = 0.0;
    let mut mean = DVector::zeros(3);
    let mut second = DMatrix::zeros(3, 3);
    for i in 0..n_phi {
        let phi = (i as f64 + 0.5) * dphi;
        let sin_phi = phi.sin();
        for j in 0..n_psi {
            let psi = (j as f64 + 0.5) * dpsi;
            let x = [sin_phi * psi.cos(), sin_phi * psi.sin(), phi.cos()];
            let w = (exponent(&x) - emax).exp() * sin_phi;
            total += w;
            for r in 0..3 {
                mean[r] += w * x[r];
                for s in 0..3 {
                    second[(r, s)] += w * x[r] * x[s];
                }
            }
        }
    }
    (mean / total, second / total)
}

/// CDF of the first coordinate of `p(x) ∝ exp(cᵀx + xᵀAx)` on the sphere in
/// R³, evaluated on a uniform grid of `t ∈ [-1, 1]`.
///
/// Under the uniform measure the first coordinate is uniform on `[-1, 1]`,
/// so the marginal density at `t` is the ψ-average of the density over the
/// circle `x = (t, √(1-t²) cos ψ, √(1-t²) sin ψ)`.
pub fn sphere3_x1_cdf(a: &DMatrix<f64>, c: &DVector<f64>, grid: usize) -> (Vec<f64>, Vec<f64>) {
    let n_psi = 2048;
    let dpsi = 2.0 * std::f64::consts::PI / n_psi as f64;
    let exponent = |x: &[f64; 3]| -> f64 {
        let mut e = 0.0;
        for i in 0..3 {
            e += c[i] * x[i];
            for j in 0..3 {
                e += x[i] * a[(i, j)] * x[j];
            }
        }
        e
    };
    let mut ts = Vec::with_capacity(grid);
    let mut density = Vec::with_capacity(grid);
    let dt = 2.0 / grid as f64;
    let mut emax = f64::NEG_INFINITY;
    let mut raw = Vec::with_capacity(grid);
    for i in 0..grid {
        let t: f64 = -1.0 + (i as f64 + 0.5) * dt;
        let r = (1.0 - t * t).max(0.0).sqrt();
        let mut vals = Vec::with_capacity(n_psi);
        for j in 0..n_psi {
            let psi = (j as f64 + 0.5) * dpsi;
            let x = [t, r * psi.cos(), r * psi.sin()];
            let e = exponent(&x);
            emax = emax.max(e);
            vals.push(e);
        }
        ts.push(t);
        raw.push(vals);
    }
    for vals in &raw {
        let s: f64 = vals.iter().map(|&e| (e - emax).exp()).sum();
        density.push(s);
    }
    let total: f64 = density.iter().sum();
    let mut cdf = Vec::with_capacity(grid);
    let mut acc = 0.0;
    for d in &density {
        acc += d / total;
        cdf.push(acc);
    }
    (ts, cdf)
}

/// Kolmogorov-Smirnov distance between samples and a gridded CDF.
pub fn ks_distance(samples: &mut [f64], ts: &[f64], cdf: &[f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let eval = |x: f64| -> f64 {
        // Linear interpolation of the gridded CDF.
        if x <= ts[0] {
            return cdf[0] * (x - (-1.0)) / (ts[0] + 1.0).max(1e-12);
        }
        if x >= *ts.last().unwrap() {
            return 1.0;
        }
        let idx = ts.partition_point(|&t| t < x);
        let (t0, t1) = (ts[idx - 1], ts[idx]);
        let (c0, c1) = (cdf[idx - 1], cdf[idx]);
        c0 + (c1 - c0) * (x - t0) / (t1 - t0)
    };
    let mut worst = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = eval(x);
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        worst = worst.max((f - lo).abs()).max((f - hi).abs());
    }
    worst
}

/// `E[u uᵀ]` for `p(u) ∝ exp(uᵀ M u)` on the unit sphere in R⁴, by midpoint
/// quadrature over three spherical angles.
pub fn sphere4_projector_moment(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, n2, n3) = (96, 96, 192);
    let d1 = std::f64::consts::PI / n1 as f64;
    let d2 = std::f64::consts::PI / n2 as f64;
    let d3 = 2.0 * std::f64::consts::PI / n3 as f64;
    let exponent = |x: &[f64; 4]| -> f64 {
        let mut e = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                e += x[i] * m[(i, j)] * x[j];
            }
        }
        e
    };
    let mut logw_max = f64::NEG_INFINITY;
    let mut cells: Vec<([f64; 4], f64)> = Vec::with_capacity(n1 * n2 * n3);
    for i in 0..n1 {
        let p1 = (i as f64 + 0.5) * d1;
        for j in 0..n2 {
            let p2 = (j as f64 + 0.5) * d2;
            for k in 0..n3 {
                let p3 = (k as f64 + 0.5) * d3;
                let x = [
                    p1.cos(),
                    p1.sin() * p2.cos(),
                    p1.sin() * p2.sin() * p3.cos(),
                    p1.sin() * p2.sin() * p3.sin(),
                ];
                let jac = (p1.sin().powi(2) * p2.sin()).max(f64::MIN_POSITIVE);
                let logw = jac.ln() + exponent(&x);
                logw_max = logw_max.max(logw);
                cells.push((x, logw));
            }
        }
    }
    let mut total = 0.0;
    let mut acc = DMatrix::zeros(4, 4);
    for (x, logw) in cells {
        let w = (logw - logw_max).exp();
        total += w;
        for r in 0..4 {
            for s in 0..4 {
                acc[(r, s)] += w * x[r] * x[s];
            }
        }
    }
    acc / total
}

/// Mean of the gamma density `x^{a-1} e^{-bx}` truncated to `[lo, hi]`, by
/// Simpson quadrature in log space.
pub fn truncated_gamma_mean(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let n = 20_000; // even
    let h = (hi - lo) / n as f64;
    let logf = |x: f64| -> f64 {
        if x <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (a - 1.0) * x.ln() - b * x
        }
    };
    let mut lmax = f64::NEG_INFINITY;
    for i in 0..=n {
        lmax = lmax.max(logf(lo + i as f64 * h));
    }
    let weight = |i: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let f = (logf(x) - lmax).exp() * weight(i);
        num += f * x;
        den += f;
    }
    num / den
}

/// Direct evaluation of the bilinear mixing model for one pixel: linear
/// term plus γ-weighted pairwise interactions, written as plainly as
/// possible (independent of the image generator).
pub fn gbm_pixel_direct(
    endmembers: &DMatrix<f64>, // N x R
    abundances: &[f64],        // R
    gamma: &dyn Fn(usize, usize) -> f64,
) -> DVector<f64> {
    let (n, r) = (endmembers.nrows(), endmembers.ncols());
    let mut out = DVector::zeros(n);
    for band in 0..n {
        let mut v = 0.0;
        for rr in 0..r {
            v += abundances[rr] * endmembers[(band, rr)];
        }
        for i in 0..r {
            for j in (i + 1)..r {
                v += gamma(i, j)
                    * abundances[i]
                    * abundances[j]
                    * endmembers[(band, i)]
                    * endmembers[(band, j)];
            }
        }
        out[band] = v;
    }
    out
}
