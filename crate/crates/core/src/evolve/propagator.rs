//! Matrix-free Hamiltonian action and the two short-time propagators
//! `exp(-i 2 pi H dt)`: full eigendecomposition and adaptive Lanczos.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::model::ClusterHamiltonian;

use super::state::QuantumState;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `out = H x` without forming the matrix.
pub(crate) fn apply_into(h: &ClusterHamiltonian, x: &[Complex64], out: &mut [Complex64]) {
    let half = 0.5 * h.omega;
    let n = h.n_sites;
    for (b, (o, d)) in out.iter_mut().zip(&h.diagonal).enumerate() {
        let mut flip = ZERO;
        for i in 0..n {
            flip += x[b ^ (1 << i)];
        }
        *o = x[b] * d + flip * half;
    }
}

/// `H psi`. The result is generally not normalised.
pub fn apply_hamiltonian(h: &ClusterHamiltonian, psi: &QuantumState) -> Result<Vec<Complex64>> {
    if psi.dim() != h.dim() {
        return invalid(format!("state dimension {} does not match Hamiltonian dimension {}", psi.dim(), h.dim()));
    }
    let mut out = vec![ZERO; psi.dim()];
    apply_into(h, psi.amplitudes(), &mut out);
    Ok(out)
}

/// `<psi|H|psi>`.
pub fn energy(h: &ClusterHamiltonian, psi: &QuantumState) -> Result<f64> {
    let hpsi = apply_hamiltonian(h, psi)?;
    Ok(dot(psi.amplitudes(), &hpsi).re)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Solver settings for one propagation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorOptions {
    /// Clusters with at most this many sites use the dense eigendecomposition.
    pub dense_max_sites: usize,
    /// Target for the a-posteriori Lanczos error estimate.
    pub krylov_tol: f64,
    pub krylov_min_dim: usize,
    /// Beyond this dimension the step is split in halves.
    pub krylov_max_dim: usize,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions { dense_max_sites: 6, krylov_tol: 1e-10, krylov_min_dim: 10, krylov_max_dim: 60 }
    }
}

/// Eigendecomposition of a dense Hamiltonian, reusable for several steps.
pub struct DenseExp {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl DenseExp {
    pub fn new(h: &ClusterHamiltonian) -> Result<Self> {
        let eig = SymmetricEigen::new(h.to_dense()?);
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("eigendecomposition produced non-finite values".into()));
        }
        Ok(DenseExp { vectors: eig.eigenvectors, values: eig.eigenvalues })
    }

    /// `psi <- exp(-i tau H) psi` with `tau = 2 pi dt`.
    pub fn apply(&self, psi: &mut [Complex64], tau: f64) {
        let re = DVector::from_iterator(psi.len(), psi.iter().map(|a| a.re));
        let im = DVector::from_iterator(psi.len(), psi.iter().map(|a| a.im));
        let cr = self.vectors.tr_mul(&re);
        let ci = self.vectors.tr_mul(&im);
        let mut rr = DVector::zeros(psi.len());
        let mut ri = DVector::zeros(psi.len());
        for l in 0..psi.len() {
            let c = Complex64::new(cr[l], ci[l]) * Complex64::from_polar(1.0, -tau * self.values[l]);
            rr[l] = c.re;
            ri[l] = c.im;
        }
        let out_r = &self.vectors * rr;
        let out_i = &self.vectors * ri;
        for (k, a) in psi.iter_mut().enumerate() {
            *a = Complex64::new(out_r[k], out_i[k]);
        }
    }
}

enum KrylovOutcome {
    Done(Vec<Complex64>),
    NotConverged,
}

/// `exp(-i tau T) e_1` for the real symmetric tridiagonal `T` (diagonal
/// `alpha`, off-diagonal `beta`).
fn tridiagonal_exp(alpha: &[f64], beta: &[f64], tau: f64) -> Vec<Complex64> {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    (0..m)
        .map(|r| {
            (0..m)
                .map(|l| {
                    let v = eig.eigenvectors[(r, l)] * eig.eigenvectors[(0, l)];
                    Complex64::from_polar(v, -tau * eig.eigenvalues[l])
                })
                .sum()
        })
        .collect()
}

/// Gershgorin bound on the spectral radius.
fn norm_bound(h: &ClusterHamiltonian) -> f64 {
    h.diagonal.iter().fold(0.0f64, |a, d| a.max(d.abs())) + 0.5 * h.omega.abs() * h.n_sites as f64
}

/// Iterations at which the subspace error is evaluated.
fn check_due(m: usize, m_check: usize) -> bool {
    m >= m_check && (m - m_check) % 2 == 0
}

fn lanczos_exp(h: &ClusterHamiltonian, psi: &[Complex64], tau: f64, opts: &PropagatorOptions) -> KrylovOutcome {
    if psi.iter().all(|a| a.im == 0.0) {
        let re: Vec<f64> = psi.iter().map(|a| a.re).collect();
        return lanczos_exp_real(h, &re, tau, opts);
    }
    let dim = psi.len();
    let beta0 = norm(psi);
    if beta0 == 0.0 {
        return KrylovOutcome::Done(psi.to_vec());
    }
    let m_cap = opts.krylov_max_dim.min(dim).max(1);
    let m_check = opts.krylov_min_dim.min(m_cap).max(1);
    let scale = norm_bound(h) + 1e-300;

    let mut basis: Vec<Vec<Complex64>> = vec![psi.iter().map(|a| a / beta0).collect()];
    let mut alpha = Vec::with_capacity(m_cap);
    let mut beta = Vec::with_capacity(m_cap);
    let mut w = vec![ZERO; dim];
    for j in 0..m_cap {
        apply_into(h, &basis[j], &mut w);
        alpha.push(dot(&basis[j], &w).re);
        // three-term recurrence, then one local correction against v_j
        let a = Complex64::new(alpha[j], 0.0);
        w.iter_mut().zip(&basis[j]).for_each(|(x, y)| *x -= a * y);
        if j > 0 {
            let b = Complex64::new(beta[j - 1], 0.0);
            w.iter_mut().zip(&basis[j - 1]).for_each(|(x, y)| *x -= b * y);
        }
        let c = dot(&basis[j], &w);
        w.iter_mut().zip(&basis[j]).for_each(|(x, y)| *x -= c * y);
        let b = norm(&w);
        let m = j + 1;
        let breakdown = b <= 1e-13 * scale;
        if breakdown || check_due(m, m_check) || m == m_cap {
            let y = tridiagonal_exp(&alpha, &beta, tau);
            let err = beta0 * b * y[m - 1].norm();
            if breakdown || err < opts.krylov_tol || m == dim {
                let mut out = vec![ZERO; dim];
                for (yk, v) in y.iter().zip(&basis) {
                    let c = yk * beta0;
                    out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
                }
                return KrylovOutcome::Done(out);
            }
        }
        if m == m_cap {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    KrylovOutcome::NotConverged
}

/// Same recurrence for a real start vector: `H` is real, so the Krylov basis is too.
fn lanczos_exp_real(h: &ClusterHamiltonian, psi: &[f64], tau: f64, opts: &PropagatorOptions) -> KrylovOutcome {
    let dim = psi.len();
    let beta0 = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if beta0 == 0.0 {
        return KrylovOutcome::Done(vec![ZERO; dim]);
    }
    let m_cap = opts.krylov_max_dim.min(dim).max(1);
    let m_check = opts.krylov_min_dim.min(m_cap).max(1);
    let scale = norm_bound(h) + 1e-300;
    let half = 0.5 * h.omega;
    let n = h.n_sites;

    let mut basis: Vec<Vec<f64>> = vec![psi.iter().map(|a| a / beta0).collect()];
    let mut alpha = Vec::with_capacity(m_cap);
    let mut beta = Vec::with_capacity(m_cap);
    let mut w = vec![0.0; dim];
    for j in 0..m_cap {
        let x = &basis[j];
        for (b, (o, d)) in w.iter_mut().zip(&h.diagonal).enumerate() {
            let mut flip = 0.0;
            for i in 0..n {
                flip += x[b ^ (1 << i)];
            }
            *o = x[b] * d + flip * half;
        }
        alpha.push(x.iter().zip(&w).map(|(a, b)| a * b).sum());
        let a = alpha[j];
        w.iter_mut().zip(&basis[j]).for_each(|(x, y)| *x -= a * y);
        if j > 0 {
            let b = beta[j - 1];
            w.iter_mut().zip(&basis[j - 1]).for_each(|(x, y)| *x -= b * y);
        }
        let c: f64 = basis[j].iter().zip(&w).map(|(a, b)| a * b).sum();
        w.iter_mut().zip(&basis[j]).for_each(|(x, y)| *x -= c * y);
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let m = j + 1;
        let breakdown = b <= 1e-13 * scale;
        if breakdown || check_due(m, m_check) || m == m_cap {
            let y = tridiagonal_exp(&alpha, &beta, tau);
            let err = beta0 * b * y[m - 1].norm();
            if breakdown || err < opts.krylov_tol || m == dim {
                let mut out = vec![ZERO; dim];
                for (yk, v) in y.iter().zip(&basis) {
                    let c = yk * beta0;
                    out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
                }
                return KrylovOutcome::Done(out);
            }
        }
        if m == m_cap {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    KrylovOutcome::NotConverged
}

/// `psi <- exp(-i tau H) psi` by Lanczos, halving the step until the
/// subspace error estimate meets the tolerance.
pub fn krylov_propagate(h: &ClusterHamiltonian, psi: &mut [Complex64], tau: f64, opts: &PropagatorOptions) -> Result<()> {
    fn go(h: &ClusterHamiltonian, psi: &mut [Complex64], tau: f64, opts: &PropagatorOptions, depth: u32) -> Result<()> {
        match lanczos_exp(h, psi, tau, opts) {
            KrylovOutcome::Done(out) => {
                psi.copy_from_slice(&out);
                Ok(())
            }
            KrylovOutcome::NotConverged if depth < 30 => {
                go(h, psi, tau / 2.0, opts, depth + 1)?;
                go(h, psi, tau / 2.0, opts, depth + 1)
            }
            KrylovOutcome::NotConverged => Err(Error::Numerical("Lanczos propagation failed to converge".into())),
        }
    }
    // split up front so that each piece needs a modest subspace
    let pieces = ((tau.abs() * norm_bound(h)) / KRYLOV_PHASE_PER_STEP).ceil().max(1.0) as usize;
    for _ in 0..pieces {
        go(h, psi, tau / pieces as f64, opts, 0)?;
    }
    Ok(())
}

/// Largest `|tau| * ||H||` handed to one Lanczos run.
const KRYLOV_PHASE_PER_STEP: f64 = 6.0;

/// Applies `exp(-i 2 pi H dt)` to a state, choosing the dense or Krylov path
/// from the cluster size. Negative `dt` propagates backwards in time.
pub fn propagate(h: &ClusterHamiltonian, psi: &mut QuantumState, dt: f64, opts: &PropagatorOptions) -> Result<()> {
    if psi.dim() != h.dim() {
        return invalid(format!("state dimension {} does not match Hamiltonian dimension {}", psi.dim(), h.dim()));
    }
    let tau = 2.0 * std::f64::consts::PI * dt;
    if h.n_sites <= opts.dense_max_sites {
        DenseExp::new(h)?.apply(psi.amplitudes_mut(), tau);
        Ok(())
    } else {
        krylov_propagate(h, psi.amplitudes_mut(), tau, opts)
    }
}
