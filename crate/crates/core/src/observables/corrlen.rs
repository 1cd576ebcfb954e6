use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lattice::Spacing;

use super::correlation::CorrelationMap;

pub const DEFAULT_R_MIN: f64 = 1.0;
pub const DEFAULT_R_MAX: f64 = 4.0;

/// Result of fitting `A exp(-r / xi)` to staggered correlator magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationLengthFit {
    pub xi: f64,
    pub amplitude: f64,
    pub xi_error: f64,
    pub amplitude_error: f64,
    pub chi2: f64,
    pub n_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Set when the fit is unusable; the numeric fields are then NaN or partial.
    pub failure: Option<String>,
}

impl CorrelationLengthFit {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    fn failed(r_min: f64, r_max: f64, n_points: usize, reason: String) -> Self {
        CorrelationLengthFit {
            xi: f64::NAN,
            amplitude: f64::NAN,
            xi_error: f64::NAN,
            amplitude_error: f64::NAN,
            chi2: f64::NAN,
            n_points,
            r_min,
            r_max,
            failure: Some(reason),
        }
    }
}

struct Point {
    r: f64,
    y: f64,
    w: f64,
}

/// Least-squares fit over all displacements with `r_min <= |r| <= r_max`,
/// lengths measured with `spacing`. Each displacement enters once, after
/// removing the checkerboard sign `(-1)^(dx+dy)`.
pub fn fit_correlation_length(map: &CorrelationMap, spacing: &Spacing, r_min: f64, r_max: f64) -> Result<CorrelationLengthFit> {
    if !(r_min >= 1.0) || !(r_max >= r_min) {
        return invalid(format!("need 1 <= r_min <= r_max, got r_min={r_min}, r_max={r_max}"));
    }
    let tol = 1e-9;
    let mut points = Vec::new();
    for e in map.entries() {
        // one of each mirrored pair
        if e.dy < 0 || (e.dy == 0 && e.dx <= 0) {
            continue;
        }
        let r = spacing.length(e.dx, e.dy);
        if r < r_min - tol || r > r_max + tol {
            continue;
        }
        let sign = if (e.dx + e.dy).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let w = if e.error > 0.0 { 1.0 / (e.error * e.error) } else { 1.0 };
        points.push(Point { r, y: (sign * e.value).abs(), w });
    }
    // uniform weights unless every point carries an error bar
    if map.entries().iter().any(|e| e.error <= 0.0) {
        points.iter_mut().for_each(|p| p.w = 1.0);
    }
    let mut distances: Vec<f64> = points.iter().map(|p| p.r).collect();
    distances.sort_by(f64::total_cmp);
    distances.dedup_by(|a, b| (*a - *b).abs() < tol);
    if distances.len() < 3 {
        return Ok(CorrelationLengthFit::failed(r_min, r_max, points.len(), format!("{} distinct distances in range, need 3", distances.len())));
    }

    // log-linear start on the positive points
    let pos: Vec<&Point> = points.iter().filter(|p| p.y > 0.0).collect();
    if pos.len() < 2 {
        return Ok(CorrelationLengthFit::failed(r_min, r_max, points.len(), "correlations vanish in range".into()));
    }
    let (mut s, mut sr, mut sl, mut srr, mut srl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &pos {
        let l = p.y.ln();
        s += 1.0;
        sr += p.r;
        sl += l;
        srr += p.r * p.r;
        srl += p.r * l;
    }
    let den = s * srr - sr * sr;
    let slope = (s * srl - sr * sl) / den;
    let mut ln_a = (sl - slope * sr) / s;
    let mut k = -slope;
    if !(k > 0.0) {
        return Ok(CorrelationLengthFit::failed(r_min, r_max, points.len(), format!("data does not decay (log slope {slope:.3e})")));
    }

    // Levenberg-Marquardt in (ln A, k)
    let chi2 = |ln_a: f64, k: f64| points.iter().map(|p| p.w * ((ln_a - k * p.r).exp() - p.y).powi(2)).sum::<f64>();
    let mut current = chi2(ln_a, k);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in &points {
            let f = (ln_a - k * p.r).exp();
            let (j1, j2) = (f, -p.r * f);
            let res = p.y - f;
            a11 += p.w * j1 * j1;
            a12 += p.w * j1 * j2;
            a22 += p.w * j2 * j2;
            g1 += p.w * j1 * res;
            g2 += p.w * j2 * res;
        }
        let (b11, b22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
        let det = b11 * b22 - a12 * a12;
        if det.abs() < 1e-300 {
            break;
        }
        let d1 = (b22 * g1 - a12 * g2) / det;
        let d2 = (b11 * g2 - a12 * g1) / det;
        let trial = chi2(ln_a + d1, k + d2);
        if trial < current {
            let converged = (current - trial) <= 1e-14 * current.max(1e-300);
            ln_a += d1;
            k += d2;
            current = trial;
            lambda = (lambda * 0.3).max(1e-12);
            if converged {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    if !(k > 1e-6) || !k.is_finite() {
        return Ok(CorrelationLengthFit::failed(r_min, r_max, points.len(), format!("fitted decay rate {k:.3e} is not positive")));
    }

    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    for p in &points {
        let f = (ln_a - k * p.r).exp();
        let (j1, j2) = (f, -p.r * f);
        a11 += p.w * j1 * j1;
        a12 += p.w * j1 * j2;
        a22 += p.w * j2 * j2;
    }
    let det = a11 * a22 - a12 * a12;
    let dof = points.len().saturating_sub(2).max(1) as f64;
    // without error bars, scale by the residual variance
    let scale = if points.iter().all(|p| p.w == 1.0) { current / dof } else { 1.0 };
    let var_ln_a = scale * a22 / det;
    let var_k = scale * a11 / det;
    let amplitude = ln_a.exp();
    Ok(CorrelationLengthFit {
        xi: 1.0 / k,
        amplitude,
        xi_error: var_k.max(0.0).sqrt() / (k * k),
        amplitude_error: amplitude * var_ln_a.max(0.0).sqrt(),
        chi2: current,
        n_points: points.len(),
        r_min,
        r_max,
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::Window;

    fn staggered(xi: f64, spacing: &Spacing) -> CorrelationMap {
        let mut m = CorrelationMap::empty(Window::new(5, 5));
        for dy in 0..=5 {
            for dx in -5..=5 {
                let r = spacing.length(dx, dy);
                let sign = if (dx + dy) % 2 == 0 { 1.0 } else { -1.0 };
                m.set(dx, dy, sign * 0.5 * (-r / xi).exp(), 0.0, 1).unwrap();
            }
        }
        m
    }

    #[test]
    fn recovers_exact_exponential() {
        for xi in [0.74, 1.4, 1.9] {
            let sp = Spacing::isotropic();
            let f = fit_correlation_length(&staggered(xi, &sp), &sp, DEFAULT_R_MIN, DEFAULT_R_MAX).unwrap();
            assert!(f.is_ok(), "{f:?}");
            assert!((f.xi - xi).abs() < 1e-6 * xi, "{} vs {xi}", f.xi);
            assert!((f.amplitude - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_data_fails() {
        let mut m = CorrelationMap::empty(Window::new(4, 4));
        for dy in 0..=4 {
            for dx in -4..=4 {
                m.set(dx, dy, 0.3, 0.0, 1).unwrap();
            }
        }
        let f = fit_correlation_length(&m, &Spacing::isotropic(), 1.0, 4.0).unwrap();
        assert!(!f.is_ok());
    }

    #[test]
    fn too_few_distances_fails() {
        let sp = Spacing::isotropic();
        let f = fit_correlation_length(&staggered(1.0, &sp), &sp, 1.0, 1.2).unwrap();
        assert!(!f.is_ok());
        assert!(fit_correlation_length(&staggered(1.0, &sp), &sp, 0.0, 3.0).is_err());
    }
}
