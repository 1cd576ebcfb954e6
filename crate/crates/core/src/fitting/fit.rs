use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::observables::onsite_detected;

use super::grid::{lagrange_weights, GridValue, ModelSeries, PredictionGrid};
use super::scan::{CorrelatorScan, ScanPoint};

/// Residual weights of the least-squares objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    InverseVariance,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// `None` picks inverse-variance weights when the scan has errors.
    pub weighting: Option<Weighting>,
    pub series: ModelSeries,
    pub max_iterations: usize,
    /// Refinement stops once the bracket on `C6` is narrower than this.
    pub c6_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { weighting: None, series: ModelSeries::FinalOrder, max_iterations: 60, c6_tolerance: 1e-6 }
    }
}

/// Best-fit `(C6, alpha)` of a scan against a prediction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c6: f64,
    pub alpha: f64,
    /// Covariance of `(C6, alpha)`; `None` when the curvature is not positive definite.
    pub covariance: Option<[[f64; 2]; 2]>,
    pub chi2: f64,
    pub n_residuals: usize,
    pub weighting: Weighting,
    pub series: ModelSeries,
    /// Profile `min_alpha chi2` at each grid `C6`.
    pub grid_profile: Vec<(f64, f64)>,
    /// Best `chi2` after each refinement iteration, non-increasing.
    pub chi2_history: Vec<f64>,
    pub converged: bool,
    /// Minimum on the edge of the `C6` grid or at an `alpha` limit.
    pub at_boundary: bool,
    /// Some scan detuning fell between grid nodes.
    pub interpolated_detunings: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn c6_error(&self) -> Option<f64> {
        self.covariance.map(|c| c[0][0].sqrt())
    }

    pub fn alpha_error(&self) -> Option<f64> {
        self.covariance.map(|c| c[1][1].sqrt())
    }

    /// Clean result: converged, interior, with a usable covariance.
    pub fn is_ok(&self) -> bool {
        self.converged && !self.at_boundary && self.covariance.is_some()
    }
}

const ALPHA_MIN: f64 = 1e-3;
const ALPHA_MAX: f64 = 1.0;

/// Model correlators after detection.
fn detected(v: &GridValue, alpha: f64) -> [f64; 3] {
    let a2 = alpha * alpha;
    [onsite_detected(v.occupation.clamp(0.0, 1.0), alpha), a2 * v.c10, a2 * v.c01]
}

struct Objective<'a> {
    c6_nodes: &'a [f64],
    /// `model[c6 node][scan point]`
    model: Vec<Vec<GridValue>>,
    data: Vec<[f64; 3]>,
    weights: Vec<[f64; 3]>,
}

impl Objective<'_> {
    fn model_at(&self, c6: f64) -> Vec<GridValue> {
        let w = lagrange_weights(self.c6_nodes, c6);
        (0..self.data.len())
            .map(|i| {
                let mut out = GridValue { occupation: 0.0, c10: 0.0, c01: 0.0 };
                for &(k, wk) in &w {
                    let v = &self.model[k][i];
                    out.occupation += wk * v.occupation;
                    out.c10 += wk * v.c10;
                    out.c01 += wk * v.c01;
                }
                out
            })
            .collect()
    }

    fn chi2_model(&self, model: &[GridValue], alpha: f64) -> f64 {
        model
            .iter()
            .zip(&self.data)
            .zip(&self.weights)
            .map(|((m, d), w)| {
                let p = detected(m, alpha);
                (0..3).map(|k| w[k] * (d[k] - p[k]).powi(2)).sum::<f64>()
            })
            .sum()
    }

    fn chi2(&self, c6: f64, alpha: f64) -> f64 {
        self.chi2_model(&self.model_at(c6), alpha)
    }

    /// `min_alpha chi2` at fixed `C6`: coarse scan, then golden section.
    fn profile(&self, model: &[GridValue]) -> (f64, f64) {
        let f = |a: f64| self.chi2_model(model, a);
        let n = 100;
        let grid: Vec<f64> = (0..=n).map(|k| ALPHA_MIN + (ALPHA_MAX - ALPHA_MIN) * k as f64 / n as f64).collect();
        let best = (0..=n).min_by(|&a, &b| f(grid[a]).total_cmp(&f(grid[b]))).expect("non-empty");
        let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while hi - lo > 1e-12 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        let mut best_pt = (0.5 * (lo + hi), f(0.5 * (lo + hi)));
        for a in [ALPHA_MIN, ALPHA_MAX, grid[best]] {
            let v = f(a);
            if v < best_pt.1 {
                best_pt = (a, v);
            }
        }
        best_pt
    }
}

/// Vertex of the parabola through three points, if it opens upward.
fn parabola_vertex(p: [(f64, f64); 3]) -> Option<f64> {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den.abs() < 1e-300 {
        return None;
    }
    let curv = ((y2 - y1) / (x2 - x1) - (y1 - y0) / (x1 - x0)) / (x2 - x0);
    (curv > 0.0).then(|| x1 - 0.5 * num / den)
}

/// Least-squares fit of `C6` and the detection efficiency to the three
/// correlators of every scan point. The model is the grid prediction,
/// interpolated in detuning and `C6` where needed and passed through the
/// detection scaling.
///
/// The `C6` grid is profiled first (best `alpha` per node); the best node and
/// its neighbours then seed successive parabolic refinement on the
/// interpolated profile. The covariance is twice the inverse Hessian of
/// `chi2`, rescaled by the reduced `chi2` for uniform weights.
pub fn fit_c6_alpha(scan: &CorrelatorScan, grid: &PredictionGrid, opts: &FitOptions) -> Result<FitResult> {
    let pulse_ok = {
        let (a, b) = (scan.pulse, grid.spec.pulse);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-12);
        close(a.omega, b.omega) && close(a.hold_time, b.hold_time) && close(a.rise_time, b.rise_time) && close(a.fall_time, b.fall_time)
    };
    if !pulse_ok {
        return invalid("scan pulse differs from the pulse the grid was built for");
    }
    let weighting = match opts.weighting {
        Some(Weighting::InverseVariance) if !scan.has_errors() => return invalid("inverse-variance weighting needs scan errors"),
        Some(w) => w,
        None if scan.has_errors() => Weighting::InverseVariance,
        None => Weighting::Uniform,
    };
    let (model, interpolated_detunings) = grid.at_detunings(&scan.detunings(), opts.series)?;
    let points: &[ScanPoint] = scan.points();
    let obj = Objective {
        c6_nodes: grid.c6_values(),
        model,
        data: points.iter().map(|p| p.values()).collect(),
        weights: points
            .iter()
            .map(|p| match (weighting, p.errors) {
                (Weighting::InverseVariance, Some(e)) => e.map(|x| 1.0 / (x * x)),
                _ => [1.0; 3],
            })
            .collect(),
    };
    let n_residuals = 3 * points.len();
    let nodes = grid.c6_values();
    let mut warnings = Vec::new();
    if interpolated_detunings {
        warnings.push("scan detunings interpolated between grid nodes".to_string());
    }

    let grid_profile: Vec<(f64, f64)> = (0..nodes.len()).map(|k| (nodes[k], obj.profile(&obj.model[k]).1)).collect();
    let k_best = (0..nodes.len()).min_by(|&a, &b| grid_profile[a].1.total_cmp(&grid_profile[b].1)).expect("non-empty grid");
    let mut at_boundary = nodes.len() > 1 && (k_best == 0 || k_best == nodes.len() - 1);
    if at_boundary {
        warnings.push(format!("profile minimum on the C6 grid edge at {}", nodes[k_best]));
    }

    let mut best = (nodes[k_best], grid_profile[k_best].1);
    let mut chi2_history = vec![best.1];
    let mut converged = nodes.len() == 1;
    if nodes.len() >= 3 {
        let k = k_best.clamp(1, nodes.len() - 2);
        let mut bracket = [grid_profile[k - 1], grid_profile[k], grid_profile[k + 1]];
        for _ in 0..opts.max_iterations {
            let (lo, hi) = (bracket[0].0, bracket[2].0);
            if hi - lo <= opts.c6_tolerance {
                converged = true;
                break;
            }
            let mid = bracket[1].0;
            let candidate = parabola_vertex(bracket)
                .filter(|x| x.is_finite() && *x > lo && *x < hi && (x - mid).abs() > 0.01 * opts.c6_tolerance)
                .unwrap_or_else(|| if mid - lo > hi - mid { 0.5 * (lo + mid) } else { 0.5 * (mid + hi) });
            let value = obj.profile(&obj.model_at(candidate)).1;
            if value < bracket[1].1 {
                if candidate < mid {
                    bracket = [bracket[0], (candidate, value), bracket[1]];
                } else {
                    bracket = [bracket[1], (candidate, value), bracket[2]];
                }
            } else if candidate < mid {
                bracket[0] = (candidate, value);
            } else {
                bracket[2] = (candidate, value);
            }
            if bracket[1].1 < best.1 {
                best = bracket[1];
            }
            chi2_history.push(best.1);
        }
        if !converged {
            warnings.push(format!("refinement did not reach the C6 tolerance in {} iterations", opts.max_iterations));
        }
    } else if nodes.len() == 2 {
        converged = true;
        warnings.push("two-node C6 grid: no parabolic refinement".to_string());
    }

    let c6 = best.0;
    let (alpha, chi2) = obj.profile(&obj.model_at(c6));
    if alpha <= ALPHA_MIN + 1e-9 || alpha >= ALPHA_MAX - 1e-9 {
        at_boundary = true;
        warnings.push(format!("alpha at its limit {alpha}"));
    }

    let covariance = if nodes.len() >= 2 {
        let spacing = nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let hc = 1e-2 * spacing;
        let ha = 1e-4;
        let f = |dc: f64, da: f64| obj.chi2(c6 + dc, alpha + da);
        let f0 = f(0.0, 0.0);
        let hcc = (f(hc, 0.0) - 2.0 * f0 + f(-hc, 0.0)) / (hc * hc);
        let haa = (f(0.0, ha) - 2.0 * f0 + f(0.0, -ha)) / (ha * ha);
        let hca = (f(hc, ha) - f(hc, -ha) - f(-hc, ha) + f(-hc, -ha)) / (4.0 * hc * ha);
        let det = hcc * haa - hca * hca;
        if hcc > 0.0 && det > 0.0 {
            let mut scale = 2.0 / det;
            if weighting == Weighting::Uniform {
                let dof = n_residuals.saturating_sub(2).max(1);
                scale *= chi2 / dof as f64;
            }
            Some([[scale * haa, -scale * hca], [-scale * hca, scale * hcc]])
        } else {
            warnings.push("chi2 curvature is not positive definite".to_string());
            None
        }
    } else {
        warnings.push("single-node C6 grid: C6 not fitted".to_string());
        None
    };

    Ok(FitResult {
        c6,
        alpha,
        covariance,
        chi2,
        n_residuals,
        weighting,
        series: opts.series,
        grid_profile,
        chi2_history,
        converged,
        at_boundary,
        interpolated_detunings,
        warnings,
    })
}

/// Scan predicted by the grid at `(c6, alpha)` on the grid's detunings.
///
/// With `noise = Some((level, rng))`, each correlator receives Gaussian noise
/// of standard deviation `level` times its RMS over the scan, and that value
/// is stored as the point's error.
pub fn synthetic_scan<R: Rng + ?Sized>(
    grid: &PredictionGrid,
    c6: f64,
    alpha: f64,
    series: ModelSeries,
    noise: Option<(f64, &mut R)>,
) -> Result<CorrelatorScan> {
    let nodes = grid.c6_values();
    if c6 < nodes[0] || c6 > nodes[nodes.len() - 1] {
        return invalid(format!("C6 = {c6} lies outside the grid"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("detection efficiency must lie in (0, 1], got {alpha}"));
    }
    let w = lagrange_weights(nodes, c6);
    let clean: Vec<[f64; 3]> = (0..grid.detunings().len())
        .map(|j| {
            let mut v = GridValue { occupation: 0.0, c10: 0.0, c01: 0.0 };
            for &(k, wk) in &w {
                let g = grid.value(k, j, series);
                v.occupation += wk * g.occupation;
                v.c10 += wk * g.c10;
                v.c01 += wk * g.c01;
            }
            detected(&v, alpha)
        })
        .collect();
    let points = match noise {
        None => clean.iter().zip(grid.detunings()).map(|(c, &d)| ScanPoint { delta: d, c00: c[0], c10: c[1], c01: c[2], errors: None }).collect(),
        Some((level, rng)) => {
            if !(level > 0.0) {
                return invalid("noise level must be positive");
            }
            let rms: [f64; 3] = std::array::from_fn(|k| (clean.iter().map(|c| c[k] * c[k]).sum::<f64>() / clean.len() as f64).sqrt());
            let sigma = rms.map(|r| level * r.max(1e-12));
            clean
                .iter()
                .zip(grid.detunings())
                .map(|(c, &d)| {
                    let mut draw = |k: usize| {
                        let z: f64 = StandardNormal.sample(rng);
                        c[k] + sigma[k] * z
                    };
                    ScanPoint { delta: d, c00: draw(0), c10: draw(1), c01: draw(2), errors: Some(sigma) }
                })
                .collect()
        }
    };
    let mut scan = CorrelatorScan::new(points, grid.spec.pulse)?;
    scan.metadata.insert("synthetic_c6".into(), c6.to_string());
    scan.metadata.insert("synthetic_alpha".into(), alpha.to_string());
    scan.metadata.insert("grid_hash".into(), grid.hash.clone());
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex_of_quadratic() {
        let f = |x: f64| 2.0 * (x - 0.3).powi(2) + 1.0;
        let v = parabola_vertex([(-1.0, f(-1.0)), (0.0, f(0.0)), (2.0, f(2.0))]).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
        assert!(parabola_vertex([(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)]).is_none());
    }
}
