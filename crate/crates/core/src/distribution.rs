//! Per-state action models and distances between them.
//!
//! Discrete actions are modelled with empirical categorical distributions;
//! continuous actions with a Gaussian (maximum-likelihood mean/covariance
//! plus a small diagonal ridge so one-sample states stay well-defined).
//!
//! Distances:
//! * categorical: L2 of the probability difference (the 2-Wasserstein form
//!   used throughout the toolkit), L1, and (smoothed) KL / mean-KL;
//! * Gaussian: the closed-form Wasserstein-style distance
//!   `||m1 - m2|| + trace(C1 + C2 - 2 (C2^{1/2} C1 C2^{1/2})^{1/2})`,
//!   with an optional variant that squares the mean term.
//!
//! Matrix square roots are computed by symmetric (Jacobi) eigendecomposition
//! with eigenvalues clamped at zero — action spaces here are tiny, so
//! robustness beats speed.

use thiserror::Error;

/// Diagonal ridge added to fitted covariances.
pub const COV_RIDGE: f64 = 1e-6;
/// Additive smoothing used by the KL distances.
pub const KL_EPS: f64 = 1e-8;

/// Errors from fitting and comparing distributions.
#[derive(Debug, Error)]
pub enum DistError {
    #[error("cannot fit a distribution to an empty sample set")]
    EmptySample,
    #[error("action index {index} out of range (< {n_actions})")]
    IndexOutOfRange { index: u32, n_actions: usize },
    #[error("inconsistent dimensions: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("probability vector invalid: {0}")]
    BadProbabilities(String),
}

// ---------------------------------------------------------------------------
// Small dense symmetric matrix support
// ---------------------------------------------------------------------------

/// A small square matrix stored row-major.  Covariances of action vectors
/// are at most a handful of dimensions, so everything here is plain loops.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMat {
    n: usize,
    a: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(n: usize) -> Self {
        SquareMat { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SquareMat::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from row-major data; `data.len()` must be `n * n`.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self, DistError> {
        if data.len() != n * n {
            return Err(DistError::DimensionMismatch(format!(
                "{} elements for a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(SquareMat { n, a: data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn matmul(&self, rhs: &SquareMat) -> SquareMat {
        assert_eq!(self.n, rhs.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = SquareMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * rhs.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &SquareMat) -> SquareMat {
        assert_eq!(self.n, rhs.n);
        SquareMat {
            n: self.n,
            a: self.a.iter().zip(&rhs.a).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, rhs: &SquareMat) -> SquareMat {
        assert_eq!(self.n, rhs.n);
        SquareMat {
            n: self.n,
            a: self.a.iter().zip(&rhs.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SquareMat {
        SquareMat { n: self.n, a: self.a.iter().map(|x| x * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in the columns
/// of the returned matrix: `m = V diag(l) V^T`.
fn jacobi_eigen(m: &SquareMat) -> (Vec<f64>, SquareMat) {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = SquareMat::identity(n);
    // Off-diagonal magnitude we are happy to leave behind, relative to the
    // matrix scale.
    let scale = a.frobenius_norm().max(1e-300);
    let tol = 1e-15 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j).abs();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of `a`.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                // Accumulate the rotation into the eigenvector matrix.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| a.get(i, i)).collect();
    (eigvals, v)
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues that come out slightly negative from floating point are
/// clamped to zero.  Errors if the input is not symmetric.
pub fn psd_sqrt(m: &SquareMat) -> Result<SquareMat, DistError> {
    let tol = 1e-9 * m.frobenius_norm().max(1.0);
    if !m.is_symmetric(tol) {
        return Err(DistError::NotSymmetric);
    }
    // Work on the symmetrized matrix so tiny asymmetries cannot leak in.
    let n = m.dim();
    let mut sym = m.clone();
    for i in 0..n {
        for j in 0..n {
            sym.set(i, j, 0.5 * (m.get(i, j) + m.get(j, i)));
        }
    }
    let (eigvals, v) = jacobi_eigen(&sym);
    let mut out = SquareMat::zeros(n);
    for (k, &l) in eigvals.iter().enumerate() {
        let r = l.max(0.0).sqrt();
        if r == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = v.get(i, k);
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out.a[i * n + j] += r * vik * v.get(j, k);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Categorical action model
// ---------------------------------------------------------------------------

/// An empirical distribution over a finite action set.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    /// Build from explicit probabilities (must be non-negative, sum to 1).
    pub fn new(probs: Vec<f64>) -> Result<Self, DistError> {
        if probs.is_empty() {
            return Err(DistError::BadProbabilities("no categories".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(DistError::BadProbabilities(format!("bad entry {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DistError::BadProbabilities(format!("sums to {total}")));
        }
        Ok(CategoricalDist { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_actions(&self) -> usize {
        self.probs.len()
    }
}

/// Fit a categorical distribution from recorded action indices.
pub fn fit_categorical(actions: &[u32], n_actions: usize) -> Result<CategoricalDist, DistError> {
    if actions.is_empty() {
        return Err(DistError::EmptySample);
    }
    let mut counts = vec![0usize; n_actions];
    for &a in actions {
        let idx = a as usize;
        if idx >= n_actions {
            return Err(DistError::IndexOutOfRange { index: a, n_actions });
        }
        counts[idx] += 1;
    }
    let total = actions.len() as f64;
    Ok(CategoricalDist {
        probs: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

fn check_same_categories(p: &CategoricalDist, q: &CategoricalDist) -> Result<(), DistError> {
    if p.n_actions() != q.n_actions() {
        return Err(DistError::DimensionMismatch(format!(
            "{} vs {} categories",
            p.n_actions(),
            q.n_actions()
        )));
    }
    Ok(())
}

/// 2-Wasserstein-style distance between categorical distributions:
/// the L2 norm of the probability difference.
pub fn w2_categorical(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64, DistError> {
    check_same_categories(p, q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// 1-Wasserstein-style distance: the L1 norm of the probability difference.
pub fn w1_categorical(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64, DistError> {
    check_same_categories(p, q)?;
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum())
}

/// KL divergence KL(p || q) with additive smoothing so empirical zeros
/// stay finite: each probability becomes `(p + eps) / (1 + n*eps)`.
pub fn kl_categorical(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64, DistError> {
    check_same_categories(p, q)?;
    let n = p.n_actions() as f64;
    let norm = 1.0 + n * KL_EPS;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| {
            let pa = (a + KL_EPS) / norm;
            let qb = (b + KL_EPS) / norm;
            pa * (pa / qb).ln()
        })
        .sum())
}

/// Symmetrized KL: the mean of the two directed divergences.
pub fn mkl_categorical(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64, DistError> {
    Ok(0.5 * (kl_categorical(p, q)? + kl_categorical(q, p)?))
}

// ---------------------------------------------------------------------------
// Gaussian action model
// ---------------------------------------------------------------------------

/// A multivariate Gaussian over continuous action vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDist {
    mean: Vec<f64>,
    cov: SquareMat,
}

impl GaussianDist {
    pub fn new(mean: Vec<f64>, cov: SquareMat) -> Result<Self, DistError> {
        if mean.len() != cov.dim() {
            return Err(DistError::DimensionMismatch(format!(
                "mean has {} dims, covariance {}",
                mean.len(),
                cov.dim()
            )));
        }
        if !cov.is_symmetric(1e-9 * cov.frobenius_norm().max(1.0)) {
            return Err(DistError::NotSymmetric);
        }
        Ok(GaussianDist { mean, cov })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SquareMat {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fit a Gaussian from recorded action vectors: maximum-likelihood mean and
/// covariance (normalized by N), plus a `COV_RIDGE` diagonal so single-sample
/// and degenerate states remain usable.
pub fn fit_gaussian(actions: &[Vec<f64>]) -> Result<GaussianDist, DistError> {
    if actions.is_empty() {
        return Err(DistError::EmptySample);
    }
    let dim = actions[0].len();
    if dim == 0 {
        return Err(DistError::DimensionMismatch("zero-dimensional actions".into()));
    }
    if let Some(bad) = actions.iter().find(|a| a.len() != dim) {
        return Err(DistError::DimensionMismatch(format!(
            "expected {dim} dims, found a sample with {}",
            bad.len()
        )));
    }
    let n = actions.len() as f64;
    let mut mean = vec![0.0; dim];
    for a in actions {
        for (m, &x) in mean.iter_mut().zip(a) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = SquareMat::zeros(dim);
    for a in actions {
        for i in 0..dim {
            let di = a[i] - mean[i];
            for j in 0..dim {
                let dj = a[j] - mean[j];
                cov.set(i, j, cov.get(i, j) + di * dj / n);
            }
        }
    }
    for i in 0..dim {
        cov.set(i, i, cov.get(i, i) + COV_RIDGE);
    }
    GaussianDist::new(mean, cov)
}

fn w2_gaussian_impl(p: &GaussianDist, q: &GaussianDist, square_mean: bool) -> Result<f64, DistError> {
    if p.dim() != q.dim() {
        return Err(DistError::DimensionMismatch(format!(
            "{} vs {} dims",
            p.dim(),
            q.dim()
        )));
    }
    let mean_l2: f64 = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let sq = psd_sqrt(&q.cov)?;
    let inner = sq.matmul(&p.cov).matmul(&sq);
    let cross = psd_sqrt(&inner)?;
    // Numerically the trace can dip a hair below zero for equal covariances;
    // clamp rather than return a negative distance.
    let trace_term = (p.cov.trace() + q.cov.trace() - 2.0 * cross.trace()).max(0.0);
    let mean_term = if square_mean { mean_l2 * mean_l2 } else { mean_l2 };
    Ok(mean_term + trace_term)
}

/// Gaussian distance `||m1 - m2|| + trace(C1 + C2 - 2 (C2^{1/2} C1 C2^{1/2})^{1/2})`.
///
/// Note the mean enters through its plain (non-squared) norm; see
/// [`w2_gaussian_squared_mean`] for the variant with the squared mean term.
pub fn w2_gaussian(p: &GaussianDist, q: &GaussianDist) -> Result<f64, DistError> {
    w2_gaussian_impl(p, q, false)
}

/// Variant of [`w2_gaussian`] with a squared mean term, i.e. the squared
/// 2-Wasserstein distance between the two Gaussians.
pub fn w2_gaussian_squared_mean(p: &GaussianDist, q: &GaussianDist) -> Result<f64, DistError> {
    w2_gaussian_impl(p, q, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn fit_categorical_matches_hand_counts() {
        let d = fit_categorical(&[0, 0, 2], 3).unwrap();
        assert_eq!(d.probs(), &[2.0 / 3.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn fit_categorical_rejects_empty_and_out_of_range() {
        assert!(matches!(fit_categorical(&[], 3), Err(DistError::EmptySample)));
        assert!(matches!(
            fit_categorical(&[5], 3),
            Err(DistError::IndexOutOfRange { index: 5, n_actions: 3 })
        ));
    }

    #[test]
    fn w2_categorical_hand_case() {
        // ||(1,0,0) - (0,.5,.5)|| = sqrt(1 + .25 + .25) = sqrt(1.5)
        let p = CategoricalDist::new(vec![1.0, 0.0, 0.0]).unwrap();
        let q = CategoricalDist::new(vec![0.0, 0.5, 0.5]).unwrap();
        assert_close(w2_categorical(&p, &q).unwrap(), 1.5f64.sqrt(), 1e-12);
        assert_close(w1_categorical(&p, &q).unwrap(), 2.0, 1e-12);
    }

    #[test]
    fn kl_handles_empirical_zeros() {
        // KL((1,0) || (.5,.5)) with tiny smoothing is ln 2 to ~1e-6.
        let p = CategoricalDist::new(vec![1.0, 0.0]).unwrap();
        let q = CategoricalDist::new(vec![0.5, 0.5]).unwrap();
        let kl = kl_categorical(&p, &q).unwrap();
        assert_close(kl, std::f64::consts::LN_2, 1e-6);
        assert!(kl.is_finite());
        // ...and the reverse direction is finite too.
        assert!(kl_categorical(&q, &p).unwrap().is_finite());
        let m = mkl_categorical(&p, &q).unwrap();
        assert_close(m, 0.5 * (kl_categorical(&p, &q).unwrap() + kl_categorical(&q, &p).unwrap()), 0.0);
    }

    #[test]
    fn fit_gaussian_hand_case() {
        // Samples {(0,0), (2,0)}: mean (1,0), ML covariance diag(1, 0),
        // plus the ridge on the diagonal.
        let g = fit_gaussian(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(g.mean(), &[1.0, 0.0]);
        assert_close(g.cov().get(0, 0), 1.0 + COV_RIDGE, 1e-15);
        assert_close(g.cov().get(1, 1), COV_RIDGE, 1e-15);
        assert_close(g.cov().get(0, 1), 0.0, 1e-15);
    }

    #[test]
    fn fit_gaussian_single_sample_is_usable() {
        let g = fit_gaussian(&[vec![3.0]]).unwrap();
        assert_eq!(g.mean(), &[3.0]);
        assert_close(g.cov().get(0, 0), COV_RIDGE, 1e-18);
    }

    #[test]
    fn fit_gaussian_rejects_mixed_dims() {
        let err = fit_gaussian(&[vec![0.0, 0.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, DistError::DimensionMismatch(_)));
    }

    #[test]
    fn one_dim_gaussian_cases() {
        // N(0,1) vs N(1,1): means 1 apart, identical covariance -> 1.
        let a = GaussianDist::new(vec![0.0], SquareMat::from_rows(1, vec![1.0]).unwrap()).unwrap();
        let b = GaussianDist::new(vec![1.0], SquareMat::from_rows(1, vec![1.0]).unwrap()).unwrap();
        assert_close(w2_gaussian(&a, &b).unwrap(), 1.0, 1e-12);
        // N(0,1) vs N(0,4): trace term (sigma1 - sigma2)^2 = 1.
        let c = GaussianDist::new(vec![0.0], SquareMat::from_rows(1, vec![4.0]).unwrap()).unwrap();
        assert_close(w2_gaussian(&a, &c).unwrap(), 1.0, 1e-12);
        // Squared-mean variant: N(0,1) vs N(2,1) gives 4 instead of 2.
        let d = GaussianDist::new(vec![2.0], SquareMat::from_rows(1, vec![1.0]).unwrap()).unwrap();
        assert_close(w2_gaussian_squared_mean(&a, &d).unwrap(), 4.0, 1e-12);
        assert_close(w2_gaussian(&a, &d).unwrap(), 2.0, 1e-12);
    }

    #[test]
    fn ridge_cancels_for_matched_single_samples() {
        // Two one-sample fits share the same ridge covariance, so the
        // distance reduces to the mean gap.
        let g1 = fit_gaussian(&[vec![0.0]]).unwrap();
        let g2 = fit_gaussian(&[vec![3.0]]).unwrap();
        assert_close(w2_gaussian(&g1, &g2).unwrap(), 3.0, 1e-9);
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> SquareMat {
        // A^T A is PSD for any A; occasionally zero out a column to get
        // genuinely singular matrices into the mix.
        let mut a = SquareMat::zeros(n);
        let kill = if rng.random::<f64>() < 0.2 { Some(rng.random_range(0..n)) } else { None };
        for i in 0..n {
            for j in 0..n {
                let v = if Some(j) == kill { 0.0 } else { rng.random_range(-2.0..2.0) };
                a.set(i, j, v);
            }
        }
        let mut at = SquareMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                at.set(i, j, a.get(j, i));
            }
        }
        at.matmul(&a)
    }

    #[test]
    fn psd_sqrt_reconstruction_oracle() {
        // The defining property is the oracle: sqrt(M)^2 must reproduce M.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..1000 {
            let n = 1 + (trial % 8);
            let m = random_psd(&mut rng, n);
            let s = psd_sqrt(&m).unwrap();
            let back = s.matmul(&s);
            let rel = back.sub(&m).frobenius_norm() / m.frobenius_norm().max(1e-12);
            assert!(rel <= 1e-8, "trial {trial}: relative error {rel}");
            assert!(s.is_symmetric(1e-9 * s.frobenius_norm().max(1.0)));
        }
    }

    #[test]
    fn psd_sqrt_clamps_slightly_negative_eigenvalues() {
        // Symmetric but indefinite by a whisker: eigenvalues 1 and -1e-12.
        let eps = 1e-12;
        let m = SquareMat::from_rows(
            2,
            vec![0.5 - eps / 2.0, 0.5 + eps / 2.0, 0.5 + eps / 2.0, 0.5 - eps / 2.0],
        )
        .unwrap();
        let s = psd_sqrt(&m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(s.get(i, j).is_finite());
            }
        }
    }

    #[test]
    fn psd_sqrt_rejects_asymmetric_input() {
        let m = SquareMat::from_rows(2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(psd_sqrt(&m), Err(DistError::NotSymmetric)));
    }

    #[test]
    fn gaussian_distance_is_symmetric_and_zero_on_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..4);
            let mean1: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mean2: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let g1 = GaussianDist::new(mean1, random_psd(&mut rng, n)).unwrap();
            let g2 = GaussianDist::new(mean2, random_psd(&mut rng, n)).unwrap();
            let d12 = w2_gaussian(&g1, &g2).unwrap();
            let d21 = w2_gaussian(&g2, &g1).unwrap();
            assert_close(d12, d21, 1e-7 * d12.abs().max(1.0));
            assert!(d12 >= 0.0);
            assert_close(w2_gaussian(&g1, &g1).unwrap(), 0.0, 1e-7);
        }
    }
}
