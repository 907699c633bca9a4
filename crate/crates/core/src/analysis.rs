//! Executable closed forms for the game's landscape and convergence theory:
//! Nash verification by deviation probing, the sinusoidal utility profile
//! along a tangent direction, the arctan maximizer law, parent-to-child error
//! propagation thresholds, the GHA equivalence residual, and the constants of
//! the finite-sample convergence schedule.
//!
//! All operations here work in eigenbasis coordinates: the matrix is the
//! diagonal of an explicit eigenvalue vector Λ and the true eigenvectors are
//! the coordinate axes. Conjugating an arbitrary symmetric matrix into this
//! frame loses nothing because unitary maps preserve every inner product the
//! utilities are built from.

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;

use crate::eigengame::utility;
use crate::error::{Error, Result};
use crate::linalg::{dense_eigh, sample_unit_sphere_with, sample_unit_tangent, seeded_rng, Gram};

/// Default resolution of the grid-argmax sweep over [-π/2, π/2].
pub const GRID_RESOLUTION: f64 = 1e-4;

/// Angular deviation of one vector from its anchor axis: the vector is
/// `cos(θ)·e_axis + sin(θ)·Δ` with Δ a unit direction tangent to the axis.
#[derive(Debug, Clone)]
pub struct DeviationParam {
    pub theta: f64,
    pub delta: DVector<f64>,
}

impl DeviationParam {
    /// Validates ‖Δ‖ = 1 and ⟨Δ, e_axis⟩ = 0 (0-based axis).
    pub fn new(theta: f64, delta: DVector<f64>, axis: usize) -> Result<Self> {
        if axis >= delta.len() {
            return Err(Error::InvalidInput(format!(
                "axis {axis} outside dimension {}",
                delta.len()
            )));
        }
        let dot = delta[axis];
        if dot.abs() > 1e-12 {
            return Err(Error::InvalidTangent { dot });
        }
        if (delta.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "deviation direction has norm {}, expected 1",
                delta.norm()
            )));
        }
        Ok(Self { theta, delta })
    }

    /// The deviated vector cos(θ)e_axis + sin(θ)Δ.
    pub fn vector(&self, axis: usize) -> DVector<f64> {
        let mut v = &self.delta * self.theta.sin();
        v[axis] += self.theta.cos();
        v
    }
}

/// Coefficients of the utility profile along one tangent direction:
/// `u(θ) = A sin²θ − B sin(2θ)/2 + C`, equivalently
/// `u(θ) = ½[√(A²+B²) cos(2θ+φ) + A + 2C]`.
#[derive(Debug, Clone, Copy)]
pub struct SinusoidCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Phase of the single-sinusoid form. The branch is atan2(B, −A) so the
    /// cosine form reproduces the utility identically for every sign of A.
    pub phi: f64,
}

impl SinusoidCoeffs {
    pub fn from_abc(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c, phi: b.atan2(-a) }
    }

    /// Direct sinusoid evaluation.
    pub fn utility_at(&self, theta: f64) -> f64 {
        let s = theta.sin();
        self.a * s * s - self.b * (2.0 * theta).sin() / 2.0 + self.c
    }

    /// Single-sinusoid (amplitude/phase) evaluation; must agree with
    /// [`Self::utility_at`] to rounding.
    pub fn closed_form_at(&self, theta: f64) -> f64 {
        let amp = self.a.hypot(self.b);
        0.5 * (amp * (2.0 * theta + self.phi).cos() + self.a + 2.0 * self.c)
    }

    pub fn maximizer(&self) -> Result<f64> {
        maximizer_angle(self.a, self.b)
    }
}

/// Utility profile of player `i` (1-based) along tangent direction `delta_i`
/// when each parent j sits at angle θⱼ along its own tangent direction.
///
/// With exact parents (all θⱼ = 0) this reduces to
/// `u(θ) = Λᵢᵢ − sin²θ (Λᵢᵢ − Σ_{l>i} z_l Λ_ll)` with z the squared
/// coordinates of the deviation direction.
pub fn sinusoid_coeffs(
    i: usize,
    parents: &[DeviationParam],
    delta_i: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<SinusoidCoeffs> {
    let d = lambda.len();
    if i < 1 || i > d {
        return Err(Error::InvalidInput(format!("player index {i} outside 1..={d}")));
    }
    if parents.len() != i - 1 {
        return Err(Error::InvalidInput(format!(
            "player {i} needs {} parents, got {}",
            i - 1,
            parents.len()
        )));
    }
    validate_lambda(lambda)?;
    let child = DeviationParam::new(0.0, delta_i.clone(), i - 1)?;
    for (j, p) in parents.iter().enumerate() {
        // Re-validate against the parent's own axis.
        DeviationParam::new(p.theta, p.delta.clone(), j)?;
    }

    let lam = |idx: usize| lambda[idx];
    let weighted = |u: &DVector<f64>, v: &DVector<f64>| -> f64 {
        (0..d).map(|p| lam(p) * u[p] * v[p]).sum()
    };

    let lam_i = lam(i - 1);
    let mut a = weighted(&child.delta, &child.delta) - lam_i;
    let mut b = 0.0;
    let mut c = lam_i;
    for (j, parent) in parents.iter().enumerate() {
        let lam_j = lam(j);
        let (sin_j, cos_j) = parent.theta.sin_cos();
        let sin2_j = (2.0 * parent.theta).sin();
        let di_vj = child.delta[j]; // ⟨Δᵢ, v_j⟩
        let dj_vi = parent.delta[i - 1]; // ⟨Δⱼ, v_i⟩
        let di_l_dj = weighted(&child.delta, &parent.delta); // ⟨Δᵢ, ΛΔⱼ⟩
        let dj_l_dj = weighted(&parent.delta, &parent.delta);
        let den = lam_j * cos_j * cos_j + dj_l_dj * sin_j * sin_j;

        a -= (lam_j * lam_j * cos_j * cos_j * di_vj * di_vj
            - lam_i * lam_i * sin_j * sin_j * dj_vi * dj_vi
            + sin_j * sin_j * di_l_dj * di_l_dj)
            / den;
        a -= lam_j * sin2_j * di_vj * di_l_dj / den;
        b += (lam_i * lam_j * sin2_j * dj_vi * di_vj
            + 2.0 * lam_i * sin_j * sin_j * dj_vi * di_l_dj)
            / den;
        c -= lam_i * lam_i * sin_j * sin_j * dj_vi * dj_vi / den;
    }
    Ok(SinusoidCoeffs::from_abc(a, b, c))
}

/// Direct evaluation of the player utility at child angle θ, through the
/// generic utility path (the independent route the closed form is checked
/// against).
pub fn utility_along_direction(
    i: usize,
    parents: &[DeviationParam],
    delta_i: &DVector<f64>,
    lambda: &DVector<f64>,
    theta: f64,
) -> Result<f64> {
    let d = lambda.len();
    let m = DMatrix::from_diagonal(lambda);
    let gram = Gram::Matrix(&m);
    let child = DeviationParam::new(theta, delta_i.clone(), i - 1)?;
    let v = child.vector(i - 1);
    let parent_vecs: Vec<DVector<f64>> = parents
        .iter()
        .enumerate()
        .map(|(j, p)| p.vector(j))
        .collect();
    let views: Vec<_> = parent_vecs.iter().map(|p| p.as_view()).collect();
    let _ = d;
    utility(gram, &v.as_view(), &views)
}

/// Magnitude of the angle maximizing `A sin²θ − B sin(2θ)/2`, in [0, π/2].
pub fn maximizer_angle(a: f64, b: f64) -> Result<f64> {
    if a == 0.0 && b == 0.0 {
        return Err(Error::DegenerateLandscape);
    }
    let ratio = (b / a).abs();
    Ok(if a < 0.0 {
        0.5 * ratio.atan()
    } else if a == 0.0 {
        std::f64::consts::FRAC_PI_4
    } else {
        0.5 * (std::f64::consts::PI - ratio.atan())
    })
}

/// Brute-force argmax of the sinusoid over [-π/2, π/2] at the given grid
/// resolution; returns |θ*|. The analytic law is checked against this sweep.
pub fn grid_argmax(coeffs: &SinusoidCoeffs, resolution: f64) -> f64 {
    let mut best_theta = -std::f64::consts::FRAC_PI_2;
    let mut best = f64::NEG_INFINITY;
    let steps = (std::f64::consts::PI / resolution).ceil() as usize;
    for s in 0..=steps {
        let theta = -std::f64::consts::FRAC_PI_2 + s as f64 * resolution;
        let theta = theta.min(std::f64::consts::FRAC_PI_2);
        let u = coeffs.utility_at(theta);
        if u > best {
            best = u;
            best_theta = theta;
        }
    }
    best_theta.abs()
}

/// The single-parent worked example: parents deviated by arcsin(ε) with the
/// deviation directions chosen adversarially between player 1 and player i,
/// for a spectrum with condition number κ at player i. Returns |θ*|.
///
/// The A coefficient crosses zero at ε = 1/√(κ + 1/κ), which is where the
/// child's maximizer jumps through π/4 (the soft step).
pub fn example_curve(epsilon: f64, kappa: f64) -> Result<f64> {
    let (a, b) = example_curve_coeffs(epsilon, kappa)?;
    maximizer_angle(a, b)
}

/// A and B of the worked example (Λᵢᵢ normalized to 1, Λ₁₁ = κ).
pub fn example_curve_coeffs(epsilon: f64, kappa: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&epsilon) {
        if epsilon == 1.0 {
            return Err(Error::Boundary("epsilon = 1 puts the parent fully orthogonal".into()));
        }
        return Err(Error::InvalidInput(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    if kappa < 1.0 {
        return Err(Error::InvalidInput(format!("condition number must be >= 1, got {kappa}")));
    }
    let a = -1.0 + epsilon * epsilon * (kappa + 1.0 / kappa);
    let b = 2.0 * epsilon * (1.0 - epsilon * epsilon).sqrt();
    Ok((a, b))
}

/// Parent-accuracy threshold for child `i` (1-based): parents within angle
/// ε = c·gᵢ/((i−1)Λ₁₁) guarantee the child's maximizer deviates at most 8c
/// from the true eigenvector, for 0 ≤ c ≤ 1/16.
#[derive(Debug, Clone, Copy)]
pub struct ParentThreshold {
    pub epsilon: f64,
    pub child_bound: f64,
}

pub fn parent_threshold(i: usize, lambda: &DVector<f64>, c: f64) -> Result<ParentThreshold> {
    validate_lambda(lambda)?;
    if !(0.0..=1.0 / 16.0).contains(&c) {
        return Err(Error::InvalidInput(format!("c must lie in [0, 1/16], got {c}")));
    }
    let d = lambda.len();
    if i < 1 || i > d {
        return Err(Error::InvalidInput(format!("player index {i} outside 1..={d}")));
    }
    let child_bound = 8.0 * c;
    if i == 1 {
        // No parents to constrain.
        return Ok(ParentThreshold { epsilon: f64::INFINITY, child_bound });
    }
    if i == d {
        return Err(Error::AssumptionViolated(format!(
            "gap g_{i} needs eigenvalue {}, spectrum has {d}",
            i + 1
        )));
    }
    let gap = lambda[i - 1] - lambda[i];
    if gap <= 0.0 {
        return Err(Error::AssumptionViolated(format!("gap g_{i} = {gap} not positive")));
    }
    Ok(ParentThreshold { epsilon: c * gap / ((i - 1) as f64 * lambda[0]), child_bound })
}

/// One randomized error-propagation trial: perturbs every parent of player
/// `i` by an angle within ±ε along a random tangent direction, picks a random
/// child direction, and returns the grid-argmax |θ*| of the resulting
/// utility profile.
pub fn perturbed_child_argmax(
    lambda: &DVector<f64>,
    i: usize,
    epsilon: f64,
    seed: u64,
) -> Result<f64> {
    let d = lambda.len();
    let mut rng = seeded_rng(seed);
    let mut parents = Vec::with_capacity(i - 1);
    for j in 0..i - 1 {
        let mut axis = DVector::zeros(d);
        axis[j] = 1.0;
        let delta = sample_unit_tangent(&axis, &mut rng)?;
        let theta = (rng.gen_range(-1.0..1.0) as f64) * epsilon;
        parents.push(DeviationParam::new(theta, delta, j)?);
    }
    let mut child_axis = DVector::zeros(d);
    child_axis[i - 1] = 1.0;
    let delta_i = sample_unit_tangent(&child_axis, &mut rng)?;
    let coeffs = sinusoid_coeffs(i, &parents, &delta_i, lambda)?;
    Ok(grid_argmax(&coeffs, GRID_RESOLUTION))
}

use rand::Rng;

// ---------------------------------------------------------------------------
// Nash verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeKind {
    Random,
    Axis,
    Tangent { angle: f64 },
}

#[derive(Debug, Clone)]
pub struct PlayerDeviationReport {
    /// 1-based player index.
    pub player: usize,
    /// Largest utility gain over all sampled unilateral deviations; negative
    /// when no probe improves on the current vector.
    pub max_gain: f64,
    pub best_probe: ProbeKind,
    pub probes_evaluated: usize,
}

#[derive(Debug, Clone)]
pub struct NashReport {
    pub players: Vec<PlayerDeviationReport>,
    /// All finite probes lose by more than the margin and all tangent probes
    /// strictly lose.
    pub verified: bool,
    /// Smallest adjacent gap among the top k+1 eigenvalues of the matrix.
    pub min_gap: f64,
    /// Set when eigenvalues repeat within tolerance, voiding uniqueness.
    pub repeated_eigenvalue_warning: bool,
}

/// Tangent-probe angles used on top of the random and axis deviations.
pub const TANGENT_PROBE_ANGLES: [f64; 3] = [1e-3, 1e-2, 0.1];

/// Samples unilateral deviations for every player and reports the maximum
/// utility gain each could achieve. At a strict Nash point every gain is
/// negative.
pub fn nash_check(
    v_hat: &DMatrix<f64>,
    m: &DMatrix<f64>,
    probes: usize,
    margin: f64,
    seed: u64,
) -> Result<NashReport> {
    let d = v_hat.nrows();
    let k = v_hat.ncols();
    let gram = Gram::Matrix(m);
    let (eigvals, _) = dense_eigh(m)?;
    let top = (k + 1).min(d);
    let mut min_gap = f64::INFINITY;
    for i in 0..top - 1 {
        min_gap = min_gap.min(eigvals[i] - eigvals[i + 1]);
    }
    let repeated = min_gap < 1e-9 * eigvals[0].abs().max(1e-300);

    let mut rng = seeded_rng(seed);
    let mut players = Vec::with_capacity(k);
    let mut verified = true;
    for i in 0..k {
        let parents: Vec<_> = (0..i).map(|j| v_hat.column(j)).collect();
        let own = v_hat.column(i).into_owned();
        let base = utility(gram, &own.as_view(), &parents)?;
        let mut max_gain = f64::NEG_INFINITY;
        let mut best = ProbeKind::Random;
        let mut evaluated = 0usize;
        let consider = |z: &DVector<f64>, kind: ProbeKind,
                            max_gain: &mut f64,
                            best: &mut ProbeKind,
                            evaluated: &mut usize,
                            verified: &mut bool|
         -> Result<()> {
            // A deviation must actually differ from the current vector.
            if z.dot(&own).abs() > 1.0 - 1e-12 {
                return Ok(());
            }
            let gain = utility(gram, &z.as_view(), &parents)? - base;
            *evaluated += 1;
            if gain > *max_gain {
                *max_gain = gain;
                *best = kind;
            }
            match kind {
                ProbeKind::Tangent { .. } => {
                    if gain >= 0.0 {
                        *verified = false;
                    }
                }
                _ => {
                    if gain >= -margin {
                        *verified = false;
                    }
                }
            }
            Ok(())
        };
        for _ in 0..probes {
            let z = sample_unit_sphere_with(d, &mut rng)?;
            consider(&z, ProbeKind::Random, &mut max_gain, &mut best, &mut evaluated, &mut verified)?;
        }
        for axis in 0..d {
            let mut z = DVector::zeros(d);
            z[axis] = 1.0;
            consider(&z, ProbeKind::Axis, &mut max_gain, &mut best, &mut evaluated, &mut verified)?;
        }
        for angle in TANGENT_PROBE_ANGLES {
            for _ in 0..3 {
                let t = sample_unit_tangent(&own, &mut rng)?;
                let z = &own * angle.cos() + t * angle.sin();
                consider(
                    &z,
                    ProbeKind::Tangent { angle },
                    &mut max_gain,
                    &mut best,
                    &mut evaluated,
                    &mut verified,
                )?;
            }
        }
        players.push(PlayerDeviationReport {
            player: i + 1,
            max_gain,
            best_probe: best,
            probes_evaluated: evaluated,
        });
    }
    Ok(NashReport { players, verified, min_gap, repeated_eigenvalue_warning: repeated })
}

// ---------------------------------------------------------------------------
// GHA equivalence
// ---------------------------------------------------------------------------

/// Norm of the difference between the Hebbian update for player `i` given
/// the supplied parents and the game gradient with only its reward term
/// projected onto the sphere (penalties computed against the true axes).
/// Vanishes exactly when the parents are the true leading eigenvectors.
pub fn gha_equivalence_residual(
    i: usize,
    v_hat_i: &DVector<f64>,
    parents: &[DVector<f64>],
    lambda: &DVector<f64>,
) -> Result<f64> {
    validate_lambda(lambda)?;
    let d = lambda.len();
    if i < 1 || i > d {
        return Err(Error::InvalidInput(format!("player index {i} outside 1..={d}")));
    }
    if parents.len() != i - 1 {
        return Err(Error::InvalidInput(format!(
            "player {i} needs {} parents, got {}",
            i - 1,
            parents.len()
        )));
    }
    let m = DMatrix::from_diagonal(lambda);
    let gram = Gram::Matrix(&m);
    let gha = crate::baselines::gha_delta(gram, v_hat_i, parents);

    // Reward term projected to the tangent space, penalties on the true axes.
    let mv = gram.apply(v_hat_i);
    let mut reference = &mv - v_hat_i * v_hat_i.dot(&mv);
    for j in 0..i - 1 {
        // M (v̂ᵀe_j) e_j has a single nonzero coordinate.
        reference[j] -= lambda[j] * v_hat_i[j];
    }
    reference *= 2.0;
    Ok((gha - reference).norm())
}

/// Exact parents for the eigenbasis frame: the first i−1 coordinate axes.
pub fn exact_parents(i: usize, d: usize) -> Vec<DVector<f64>> {
    (0..i - 1)
        .map(|j| {
            let mut v = DVector::zeros(d);
            v[j] = 1.0;
            v
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Convergence schedule constants
// ---------------------------------------------------------------------------

/// Constants of the sequential solver's finite-sample schedule for a target
/// angular tolerance: per-player error fractions c_i, gradient-norm
/// tolerances ρ_i, the smoothness bound L with step size 1/(2L), per-player
/// iteration budgets and their total.
#[derive(Debug, Clone)]
pub struct ConvergenceConstants {
    /// c_1..c_k (index 0 is player 1).
    pub c: Vec<f64>,
    /// ρ_1..ρ_k.
    pub rho: Vec<f64>,
    /// Smoothness/utility bound L.
    pub lipschitz: f64,
    /// Prescribed step size 1/(2L).
    pub alpha: f64,
    /// Per-player iteration budgets t_1..t_k (already ceiled; kept as f64
    /// because upstream budgets grow geometrically).
    pub iters: Vec<f64>,
    /// Total iteration budget T = Σ t_i.
    pub total_iters: f64,
}

/// Evaluates the convergence schedule for learning the top-k components to
/// angular tolerance `theta_tol`:
///
/// ```text
/// c_k = θ/16                  ρ_k = g_k θ / 2π
/// c_i = c_k (i−1)! Π_{j>i} g_j / ((16Λ₁₁)^{k−i} (k−1)!)
/// ρ_i = c_{i+1} g_i g_{i+1} / (2π i Λ₁₁)
/// L   = 4[Λ₁₁ k + (1+κ_{k−1}) g_k/16],  α = 1/(2L)
/// t_i = ⌈5 (π i Λ₁₁ / g_i g_{i+1})² / c_{i+1}²⌉,  t_k = ⌈5π² / (θ g_k)²⌉
/// ```
pub fn convergence_constants(lambda: &DVector<f64>, k: usize, theta_tol: f64) -> Result<ConvergenceConstants> {
    validate_lambda(lambda)?;
    let d = lambda.len();
    if k == 0 || k > d {
        return Err(Error::InvalidInput(format!("need 1 <= k <= d, got k={k}, d={d}")));
    }
    if !(theta_tol > 0.0 && theta_tol <= 1.0) {
        return Err(Error::InvalidInput(format!("theta_tol must lie in (0, 1], got {theta_tol}")));
    }
    if k == d {
        return Err(Error::AssumptionViolated(format!(
            "gap g_{k} needs eigenvalue {}, spectrum has {d}",
            k + 1
        )));
    }
    let gap = |i: usize| lambda[i - 1] - lambda[i]; // 1-based g_i
    for i in 1..=k {
        if gap(i) <= 0.0 {
            return Err(Error::AssumptionViolated(format!(
                "gap g_{i} = {} not positive (eigenvalues must be distinct)",
                gap(i)
            )));
        }
    }
    let lam1 = lambda[0];
    let pi = std::f64::consts::PI;

    let c_k = theta_tol / 16.0;
    let mut c = vec![0.0; k];
    c[k - 1] = c_k;
    // Accumulate the c_i chain in log space; the products shrink geometrically.
    for i in (1..k).rev() {
        // c_i = c_{i+1} * g_{i+1} / (16 i Λ₁₁)   (one hop of the recursion)
        c[i - 1] = c[i] * gap(i + 1) / (16.0 * i as f64 * lam1);
    }

    let mut rho = vec![0.0; k];
    rho[k - 1] = gap(k) * theta_tol / (2.0 * pi);
    for i in 1..k {
        rho[i - 1] = c[i] * gap(i) * gap(i + 1) / (2.0 * pi * i as f64 * lam1);
    }

    // κ_{k−1} falls back to 1 for k = 1 (no parents contribute to the bound).
    let kappa_prev = if k >= 2 { lam1 / lambda[k - 2] } else { 1.0 };
    let lipschitz = 4.0 * (lam1 * k as f64 + (1.0 + kappa_prev) * gap(k) / 16.0);
    let alpha = 1.0 / (2.0 * lipschitz);

    let mut iters = vec![0.0; k];
    for i in 1..k {
        let base = pi * i as f64 * lam1 / (gap(i) * gap(i + 1));
        iters[i - 1] = (5.0 * base * base / (c[i] * c[i])).ceil();
    }
    iters[k - 1] = (5.0 * pi * pi / (theta_tol * gap(k)).powi(2)).ceil();
    let total = iters.iter().sum();

    Ok(ConvergenceConstants { c, rho, lipschitz, alpha, iters, total_iters: total })
}

/// Probability that a uniform draw on S^{d-1} lands within angle `phi` of a
/// fixed direction (either sign): the regularized incomplete beta
/// I_{sin²φ}((d−1)/2, 1/2). Reported for documentation; quickly vanishes for
/// φ < π/2 as d grows.
pub fn init_within_angle_probability(d: usize, phi: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidDimension { got: d, min: 2 });
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&phi) {
        return Err(Error::InvalidInput(format!("phi must lie in [0, π/2], got {phi}")));
    }
    let x = phi.sin().powi(2);
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(beta_reg((d as f64 - 1.0) / 2.0, 0.5, x))
}

fn validate_lambda(lambda: &DVector<f64>) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::InvalidSpectrum("empty spectrum".into()));
    }
    for i in 0..lambda.len() {
        if !lambda[i].is_finite() || lambda[i] <= 0.0 {
            return Err(Error::InvalidSpectrum(format!("eigenvalue {} is {}", i + 1, lambda[i])));
        }
        if i > 0 && lambda[i] > lambda[i - 1] {
            return Err(Error::InvalidSpectrum("eigenvalues not sorted descending".into()));
        }
    }
    Ok(())
}
