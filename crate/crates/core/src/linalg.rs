//! Matrices, synthetic spectra, sphere sampling and the shared quadratic-form
//! operator. Everything downstream is built on these primitives.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormality / symmetry tolerance used when validating constructions.
pub const ORTHO_TOL: f64 = 1e-12;

/// Relative guard below which a penalty denominator is treated as degenerate.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// splitmix64 step; used to derive independent seeds from a base seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded RNG used everywhere reproducibility matters.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a uniform point on the unit sphere S^{d-1} by normalizing a Gaussian
/// sample. Deterministic per seed.
pub fn sample_unit_sphere(d: usize, seed: u64) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension { got: 0, min: 1 });
    }
    let mut rng = seeded_rng(seed);
    sample_unit_sphere_with(d, &mut rng)
}

/// Same as [`sample_unit_sphere`] but drawing from a caller-owned RNG.
pub fn sample_unit_sphere_with<R: Rng>(d: usize, rng: &mut R) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension { got: 0, min: 1 });
    }
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return Ok(v / norm);
        }
    }
}

/// Draws a unit vector tangent to `anchor` (orthogonal to it) uniformly over
/// the tangent sphere.
pub fn sample_unit_tangent<R: Rng>(anchor: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let d = anchor.len();
    if d < 2 {
        return Err(Error::InvalidDimension { got: d, min: 2 });
    }
    loop {
        let v = sample_unit_sphere_with(d, rng)?;
        let t = &v - anchor * anchor.dot(&v);
        let norm = t.norm();
        if norm > 1e-9 {
            return Ok(t / norm);
        }
    }
}

/// Seeded matrix of independent standard normal entries.
pub fn random_gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random orthogonal matrix from the QR factorization of a seeded Gaussian
/// matrix, with the sign of each column fixed so the factorization is unique.
pub fn random_orthogonal(d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension { got: 0, min: 1 });
    }
    let g = random_gaussian_matrix(d, d, seed);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Synthetic spectra and ground truth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Linear,
    Exponential,
    Bubble,
}

/// Recipe for a synthetic eigenvalue spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub kind: SpectrumKind,
    pub d: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// 1-based inclusive index interval overwritten with the value at its
    /// first index (only meaningful for `Bubble`).
    pub bubble_range: Option<(usize, usize)>,
}

impl SpectrumSpec {
    pub fn linear(d: usize, lambda_max: f64, lambda_min: f64) -> Self {
        Self { kind: SpectrumKind::Linear, d, lambda_max, lambda_min, bubble_range: None }
    }

    pub fn exponential(d: usize, lambda_max: f64, lambda_min: f64) -> Self {
        Self { kind: SpectrumKind::Exponential, d, lambda_max, lambda_min, bubble_range: None }
    }

    pub fn bubble(d: usize, lambda_max: f64, lambda_min: f64, lo: usize, hi: usize) -> Self {
        Self { kind: SpectrumKind::Bubble, d, lambda_max, lambda_min, bubble_range: Some((lo, hi)) }
    }

    fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidDimension { got: self.d, min: 2 });
        }
        if !(self.lambda_max.is_finite() && self.lambda_min.is_finite())
            || self.lambda_min <= 0.0
            || self.lambda_max <= self.lambda_min
        {
            return Err(Error::InvalidSpectrum(format!(
                "need lambda_max > lambda_min > 0, got {} and {}",
                self.lambda_max, self.lambda_min
            )));
        }
        if self.kind == SpectrumKind::Bubble {
            let (lo, hi) = self
                .bubble_range
                .ok_or_else(|| Error::InvalidSpectrum("bubble spectrum needs a range".into()))?;
            if lo < 1 || hi > self.d || lo > hi {
                return Err(Error::BubbleRange { lo, hi, d: self.d });
            }
        }
        Ok(())
    }
}

/// Generates the eigenvalue vector described by `spec`, sorted descending.
///
/// Linear spectra are equally spaced between the endpoints; exponential
/// spectra are equally spaced in the exponents; a bubble spectrum starts from
/// the linear one and overwrites the indicated index interval with the value
/// at its first index.
pub fn make_spectrum(spec: &SpectrumSpec) -> Result<DVector<f64>> {
    spec.validate()?;
    let d = spec.d;
    let n = (d - 1) as f64;
    let linear = |i: usize| {
        let t = i as f64 / n;
        spec.lambda_max + t * (spec.lambda_min - spec.lambda_max)
    };
    let mut lambda = match spec.kind {
        SpectrumKind::Linear | SpectrumKind::Bubble => DVector::from_fn(d, |i, _| linear(i)),
        SpectrumKind::Exponential => {
            let (hi, lo) = (spec.lambda_max.ln(), spec.lambda_min.ln());
            DVector::from_fn(d, |i, _| (hi + (i as f64 / n) * (lo - hi)).exp())
        }
    };
    if spec.kind == SpectrumKind::Bubble {
        let (lo, hi) = spec.bubble_range.expect("validated above");
        let fill = lambda[lo - 1];
        for i in lo..=hi {
            lambda[i - 1] = fill;
        }
    }
    Ok(lambda)
}

/// Known eigenstructure of a synthetic problem: eigenvalues (descending), the
/// orthonormal eigenvector matrix, adjacent gaps and condition numbers.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub lambda: DVector<f64>,
    pub v: DMatrix<f64>,
    /// gaps[i] = lambda[i] - lambda[i+1], length d-1.
    pub gaps: DVector<f64>,
    /// kappa[i] = lambda[0] / lambda[i].
    pub kappa: DVector<f64>,
}

impl GroundTruth {
    pub fn new(lambda: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        let d = lambda.len();
        if v.nrows() != d || v.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "eigenvector matrix {}x{} does not match spectrum length {}",
                v.nrows(),
                v.ncols(),
                d
            )));
        }
        for i in 1..d {
            if lambda[i] > lambda[i - 1] {
                return Err(Error::InvalidSpectrum("eigenvalues not sorted descending".into()));
            }
        }
        if lambda.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::InvalidSpectrum("eigenvalues must be positive and finite".into()));
        }
        let gram = v.transpose() * &v;
        let dev = (&gram - DMatrix::identity(d, d)).abs().max();
        if dev > ORTHO_TOL {
            return Err(Error::Orthonormalization(format!(
                "V'V deviates from identity by {dev:.3e}"
            )));
        }
        let gaps = DVector::from_fn(d - 1, |i, _| lambda[i] - lambda[i + 1]);
        let kappa = DVector::from_fn(d, |i, _| lambda[0] / lambda[i]);
        Ok(Self { lambda, v, gaps, kappa })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Leading k eigenvector columns.
    pub fn top_k(&self, k: usize) -> DMatrix<f64> {
        self.v.columns(0, k).into_owned()
    }

    /// Trailing d-k eigenvector columns.
    pub fn bottom(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim();
        self.v.columns(k, d - k).into_owned()
    }
}

/// Builds the symmetric PSD matrix realizing `spec`, together with its known
/// eigenstructure. `rotate = false` leaves the matrix diagonal with V = I;
/// `rotate = true` conjugates by a seeded random orthogonal matrix.
pub fn synthetic_matrix(
    spec: &SpectrumSpec,
    rotate: bool,
    seed: u64,
) -> Result<(DMatrix<f64>, GroundTruth)> {
    let lambda = make_spectrum(spec)?;
    let d = spec.d;
    if !rotate {
        let m = DMatrix::from_diagonal(&lambda);
        let truth = GroundTruth::new(lambda, DMatrix::identity(d, d))?;
        return Ok((m, truth));
    }
    let q = random_orthogonal(d, seed)?;
    let mut m = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    // Symmetrize away factorization roundoff.
    m = (&m + m.transpose()) * 0.5;
    let truth = GroundTruth::new(lambda, q)?;
    Ok((m, truth))
}

/// Dense symmetric eigendecomposition sorted descending, as `(values, vectors)`.
///
/// This wraps the library decomposition and is the reference answer the
/// iterative solvers are compared against.
pub fn dense_eigh(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!("matrix is {}x{}", m.nrows(), m.ncols())));
    }
    let d = m.nrows();
    let se = m
        .clone()
        .try_symmetric_eigen(1e-13, 10_000)
        .ok_or_else(|| Error::Orthonormalization("symmetric eigendecomposition failed".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
    let values = DVector::from_fn(d, |i, _| se.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(d, d);
    for (i, &src) in order.iter().enumerate() {
        vectors.set_column(i, &se.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

// ---------------------------------------------------------------------------
// Shared quadratic-form operator
// ---------------------------------------------------------------------------

/// The data operator every update rule is written against: either an explicit
/// symmetric matrix M, or a sample batch X applied as Xᵀ(X·). Generalized
/// inner products ⟨u, Mv⟩ = ⟨Xu, Xv⟩ evaluate identically through both.
#[derive(Clone, Copy)]
pub enum Gram<'a> {
    /// Explicit d×d symmetric matrix.
    Matrix(&'a DMatrix<f64>),
    /// n×d batch of samples.
    Batch(&'a DMatrix<f64>),
}

impl<'a> Gram<'a> {
    pub fn dim(&self) -> usize {
        match self {
            Gram::Matrix(m) => m.nrows(),
            Gram::Batch(x) => x.ncols(),
        }
    }

    /// Applies the operator: Mv, or Xᵀ(Xv).
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Gram::Matrix(m) => *m * v,
            Gram::Batch(x) => x.transpose() * (*x * v),
        }
    }

    /// Applies the operator to every column at once.
    pub fn apply_mat(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Gram::Matrix(m) => *m * v,
            Gram::Batch(x) => x.transpose() * (*x * v),
        }
    }

    /// Generalized inner product ⟨u, Mv⟩ = ⟨Xu, Xv⟩.
    pub fn pair(&self, u: &DVectorView<f64>, v: &DVectorView<f64>) -> f64 {
        match self {
            Gram::Matrix(m) => u.dot(&(*m * v)),
            Gram::Batch(x) => (*x * u).dot(&(*x * v)),
        }
    }

    pub fn quad(&self, v: &DVectorView<f64>) -> f64 {
        self.pair(v, v)
    }

    /// Scale reference for the denominator guard: ‖X‖_F², which equals
    /// tr(M) when M = XᵀX.
    pub fn scale(&self) -> f64 {
        match self {
            Gram::Matrix(m) => m.trace(),
            Gram::Batch(x) => x.iter().map(|v| v * v).sum(),
        }
    }

    /// Guarded penalty denominator for parent `index`.
    pub fn checked_denominator(&self, index: usize, value: f64) -> Result<f64> {
        let guard = DENOMINATOR_GUARD * self.scale();
        if value <= guard {
            Err(Error::DegenerateParent { index, value, guard })
        } else {
            Ok(value)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sphere_is_unit_and_deterministic() {
        for seed in 0..20 {
            let v = sample_unit_sphere(7, seed).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-12);
            let w = sample_unit_sphere(7, seed).unwrap();
            assert_eq!(v, w);
        }
    }

    #[test]
    fn unit_sphere_1d_is_sign() {
        for seed in 0..10 {
            let v = sample_unit_sphere(1, seed).unwrap();
            assert!((v[0].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_sphere_rejects_zero_dim() {
        assert!(matches!(
            sample_unit_sphere(0, 3),
            Err(Error::InvalidDimension { got: 0, .. })
        ));
    }

    // Monte-Carlo check of isotropy: per-coordinate empirical means vanish.
    #[test]
    fn unit_sphere_coordinates_have_zero_mean() {
        let mut mean = DVector::zeros(3);
        let n = 10_000;
        for seed in 0..n {
            mean += sample_unit_sphere(3, seed as u64).unwrap();
        }
        mean /= n as f64;
        for c in mean.iter() {
            assert!(c.abs() < 0.05, "coordinate mean {c} too large");
        }
    }

    #[test]
    fn linear_spectrum_endpoints_and_step() {
        let spec = SpectrumSpec::linear(50, 1000.0, 1.0);
        let l = make_spectrum(&spec).unwrap();
        assert_eq!(l[0], 1000.0);
        assert_eq!(l[49], 1.0);
        let step = 999.0 / 49.0;
        for i in 0..49 {
            assert!((l[i] - l[i + 1] - step).abs() < 1e-9);
        }
    }

    #[test]
    fn exponential_spectrum_matches_exponent_spacing() {
        let spec = SpectrumSpec::exponential(4, 1000.0, 1.0);
        let l = make_spectrum(&spec).unwrap();
        let expected = [1000.0, 100.0, 10.0, 1.0];
        for (got, want) in l.iter().zip(expected) {
            assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn bubble_overwrites_range_with_first_value() {
        let spec = SpectrumSpec::bubble(50, 1000.0, 1.0, 10, 19);
        let l = make_spectrum(&spec).unwrap();
        let base = make_spectrum(&SpectrumSpec::linear(50, 1000.0, 1.0)).unwrap();
        for i in 9..19 {
            assert_eq!(l[i], base[9]);
        }
        assert_eq!(l[8], base[8]);
        assert_eq!(l[19], base[19]);
        // Strictly decreasing outside the declared bubble.
        for i in 0..49 {
            if !(9..19).contains(&i) {
                assert!(l[i] > l[i + 1]);
            }
        }
    }

    #[test]
    fn bubble_range_out_of_bounds_errors() {
        let spec = SpectrumSpec::bubble(10, 10.0, 1.0, 5, 11);
        assert!(matches!(make_spectrum(&spec), Err(Error::BubbleRange { .. })));
        let spec = SpectrumSpec::bubble(10, 10.0, 1.0, 0, 3);
        assert!(matches!(make_spectrum(&spec), Err(Error::BubbleRange { .. })));
    }

    #[test]
    fn diagonal_synthetic_matrix() {
        let spec = SpectrumSpec::linear(3, 3.0, 1.0);
        let (m, truth) = synthetic_matrix(&spec, false, 0).unwrap();
        assert_eq!(m[(0, 0)], 3.0);
        assert_eq!(m[(1, 1)], 2.0);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(truth.v, DMatrix::identity(3, 3));
        assert_eq!(truth.gaps.as_slice(), &[1.0, 1.0]);
        assert_eq!(truth.kappa.as_slice(), &[1.0, 1.5, 3.0]);
    }

    #[test]
    fn rotated_matrix_satisfies_eigen_equation() {
        let spec = SpectrumSpec::linear(20, 50.0, 2.0);
        let (m, truth) = synthetic_matrix(&spec, true, 7).unwrap();
        let resid = &m * &truth.v - &truth.v * DMatrix::from_diagonal(&truth.lambda);
        assert!(resid.norm() < 1e-10, "residual {}", resid.norm());
        for k in 0..20 {
            let col = truth.v.column(k).into_owned();
            let r = (&m * &col - truth.lambda[k] * &col).norm();
            assert!(r < 1e-10);
        }
        let asym = (&m - m.transpose()).abs().max();
        assert!(asym < 1e-12);
    }

    #[test]
    fn eigen_equation_holds_at_larger_sizes() {
        let spec = SpectrumSpec::exponential(200, 1000.0, 1.0);
        let (m, truth) = synthetic_matrix(&spec, true, 3).unwrap();
        let resid = &m * &truth.v - &truth.v * DMatrix::from_diagonal(&truth.lambda);
        assert!(resid.norm() < 1e-9, "residual {}", resid.norm());
    }

    #[test]
    fn dense_eigh_recovers_known_spectrum() {
        let spec = SpectrumSpec::linear(12, 12.0, 1.0);
        let (m, truth) = synthetic_matrix(&spec, true, 11).unwrap();
        let (vals, vecs) = dense_eigh(&m).unwrap();
        for i in 0..12 {
            assert!((vals[i] - truth.lambda[i]).abs() < 1e-9);
            let cos = vecs.column(i).dot(&truth.v.column(i)).abs();
            assert!(cos > 1.0 - 1e-9, "column {i} cosine {cos}");
        }
    }

    #[test]
    fn gram_matrix_and_batch_agree() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 2.0, 3.0, 1.0, 1.0, 0.0, -2.0, 1.5]);
        let m = x.transpose() * &x;
        let gm = Gram::Matrix(&m);
        let gb = Gram::Batch(&x);
        let u = DVector::from_vec(vec![0.3, -0.4, 0.8]);
        let v = DVector::from_vec(vec![1.0, 0.2, -0.7]);
        assert!((gm.pair(&u.as_view(), &v.as_view()) - gb.pair(&u.as_view(), &v.as_view())).abs() < 1e-10);
        assert!((gm.apply(&u) - gb.apply(&u)).norm() < 1e-10);
        assert!((gm.scale() - gb.scale()).abs() < 1e-10);
    }

    #[test]
    fn ground_truth_rejects_non_orthonormal() {
        let lambda = DVector::from_vec(vec![2.0, 1.0]);
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GroundTruth::new(lambda, v).is_err());
    }
}
