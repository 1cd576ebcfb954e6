use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::model::MAX_SITES;

/// Normalised amplitude vector over the 2^n S^z configurations of a cluster.
/// Bit `i` of a configuration index is 1 when site `i` is up (Rydberg).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_sites: usize,
    amplitudes: Vec<Complex64>,
}

pub(crate) const NORM_TOL: f64 = 1e-10;

fn check_sites(n_sites: usize) -> Result<()> {
    if n_sites == 0 {
        return invalid("state needs at least one site");
    }
    if n_sites > MAX_SITES {
        return Err(Error::Capacity(format!("{n_sites} sites exceed the {MAX_SITES}-site limit")));
    }
    Ok(())
}

impl QuantumState {
    /// Product state with every spin down; the initial state of all quenches.
    pub fn all_down(n_sites: usize) -> Result<Self> {
        Self::basis(n_sites, 0)
    }

    pub fn basis(n_sites: usize, config: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        if config >= dim {
            return invalid(format!("configuration {config} out of range for {n_sites} sites"));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[config] = Complex64::new(1.0, 0.0);
        Ok(QuantumState { n_sites, amplitudes })
    }

    /// Wraps an amplitude vector, which must already be normalised.
    pub fn from_amplitudes(n_sites: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_sites(n_sites)?;
        if amplitudes.len() != 1usize << n_sites {
            return invalid(format!("expected {} amplitudes, got {}", 1usize << n_sites, amplitudes.len()));
        }
        let state = QuantumState { n_sites, amplitudes };
        if (state.norm() - 1.0).abs() > NORM_TOL {
            return invalid(format!("state norm {} is not 1", state.norm()));
        }
        Ok(state)
    }

    /// Normalises an arbitrary non-zero amplitude vector.
    pub fn normalized(n_sites: usize, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return invalid("cannot normalise a zero vector");
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self::from_amplitudes(n_sites, amplitudes)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    /// Sites relabelled so that old site `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_sites;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return invalid("site relabelling must be a permutation");
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (b, a) in self.amplitudes.iter().enumerate() {
            let mut nb = 0usize;
            for (i, &p) in perm.iter().enumerate() {
                nb |= (b >> i & 1) << p;
            }
            out[nb] = *a;
        }
        Ok(QuantumState { n_sites: n, amplitudes: out })
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return invalid(format!("site {site} outside {}-site state", self.n_sites));
        }
        Ok(())
    }

    pub fn expectation_sz(&self, site: usize) -> Result<f64> {
        self.check_site(site)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(b, a)| if b >> site & 1 == 1 { 0.5 } else { -0.5 } * a.norm_sqr())
            .sum())
    }

    pub fn expectation_szsz(&self, site_a: usize, site_b: usize) -> Result<f64> {
        self.check_site(site_a)?;
        self.check_site(site_b)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let same = (b >> site_a & 1) == (b >> site_b & 1);
                (if same { 0.25 } else { -0.25 }) * a.norm_sqr()
            })
            .sum())
    }

    /// All single-site and pair moments in one pass over the amplitudes.
    pub fn sz_moments(&self) -> SzMoments {
        let n = self.n_sites;
        // accumulate P(up_i) and P(up_i and up_j)
        let mut up = vec![0.0; n];
        let mut up_up = vec![0.0; n * n];
        for (b, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 || b == 0 {
                continue;
            }
            let mut bits = b;
            let mut ones = [0usize; MAX_SITES];
            let mut k = 0;
            while bits != 0 {
                ones[k] = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                k += 1;
            }
            for x in 0..k {
                let i = ones[x];
                up[i] += p;
                for &j in &ones[x + 1..k] {
                    up_up[i * n + j] += p;
                }
            }
        }
        let norm2: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let sz: Vec<f64> = up.iter().map(|u| u - 0.5 * norm2).collect();
        let mut szsz = vec![0.25 * norm2; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                // S_i S_j = (n_i - 1/2)(n_j - 1/2)
                let v = up_up[i * n + j] - 0.5 * (up[i] + up[j]) + 0.25 * norm2;
                szsz[i * n + j] = v;
                szsz[j * n + i] = v;
            }
        }
        SzMoments { n_sites: n, sz, szsz }
    }
}

/// `<S^z_i>` and `<S^z_i S^z_j>` for every site and pair of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct SzMoments {
    pub n_sites: usize,
    pub sz: Vec<f64>,
    /// Row-major `n x n`; the diagonal holds `(S^z)^2 = 1/4`.
    pub szsz: Vec<f64>,
}

impl SzMoments {
    pub fn szsz(&self, i: usize, j: usize) -> f64 {
        self.szsz[i * self.n_sites + j]
    }

    /// `4 (<S_i S_j> - <S_i><S_j>)`; for `i == j` this is `1 - 4 <S_i>^2`.
    pub fn connected(&self, i: usize, j: usize) -> f64 {
        4.0 * (self.szsz(i, j) - self.sz[i] * self.sz[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn all_down_moments() {
        let s = QuantumState::all_down(3).unwrap();
        assert_eq!(s.expectation_sz(1).unwrap(), -0.5);
        assert_eq!(s.expectation_szsz(0, 2).unwrap(), 0.25);
        let m = s.sz_moments();
        assert_eq!(m.sz, vec![-0.5; 3]);
        assert_eq!(m.szsz(0, 1), 0.25);
    }

    #[test]
    fn uniform_superposition_is_unmagnetised() {
        let n = 4;
        let s = QuantumState::normalized(n, vec![c(1.0); 16]).unwrap();
        for i in 0..n {
            assert!(s.expectation_sz(i).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn entangled_pair_is_anticorrelated() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = QuantumState::from_amplitudes(2, vec![c(0.0), c(h), c(h), c(0.0)]).unwrap();
        assert!((s.expectation_szsz(0, 1).unwrap() + 0.25).abs() < 1e-15);
        assert!((s.sz_moments().connected(0, 1) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unnormalised_and_bad_sites() {
        assert!(QuantumState::from_amplitudes(1, vec![c(1.0), c(1.0)]).is_err());
        assert!(QuantumState::from_amplitudes(2, vec![c(1.0)]).is_err());
        let s = QuantumState::all_down(2).unwrap();
        assert!(s.expectation_sz(2).is_err());
        assert!(QuantumState::all_down(MAX_SITES + 1).is_err());
    }

    #[test]
    fn moments_agree_with_direct_sums() {
        let amps: Vec<Complex64> = (0..32).map(|k| Complex64::new((k as f64 * 0.7).sin(), (k as f64 * 1.3).cos())).collect();
        let s = QuantumState::normalized(5, amps).unwrap();
        let m = s.sz_moments();
        for i in 0..5 {
            assert!((m.sz[i] - s.expectation_sz(i).unwrap()).abs() < 1e-14);
            for j in 0..5 {
                assert!((m.szsz(i, j) - s.expectation_szsz(i, j).unwrap()).abs() < 1e-14);
            }
            assert!((m.connected(i, i) - (1.0 - 4.0 * m.sz[i] * m.sz[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn permutation_moves_expectations() {
        let s = QuantumState::basis(3, 0b001).unwrap();
        let p = s.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.expectation_sz(2).unwrap(), 0.5);
        assert_eq!(p.expectation_sz(0).unwrap(), -0.5);
        assert!(s.permuted(&[0, 0, 1]).is_err());
    }
}
