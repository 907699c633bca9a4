//! Evaluation measures: per-vector angular error, longest streak, normalized
//! subspace distance, optimal matching for unordered baselines, and Rayleigh
//! quotient scree data.

use nalgebra::{DMatrix, DVector};
use pathfinding::matrix::Matrix as CostMatrix;
use pathfinding::prelude::kuhn_munkres_min;

use crate::error::{Error, Result};
use crate::linalg::{Gram, GroundTruth};

/// Angle in [0, π/2] between two directions, blind to sign and scale:
/// `asin(√(1 − cos²))` with the cosine clamped before squaring so values at
/// 1 + ulp cannot produce NaN.
pub fn angular_error(v_hat: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let (na, nb) = (v_hat.norm(), v.norm());
    if na < 1e-300 || nb < 1e-300 {
        return Err(Error::InvalidInput("angular error of a zero vector".into()));
    }
    let cos = (v_hat.dot(v) / (na * nb)).clamp(-1.0, 1.0);
    Ok((1.0 - cos * cos).sqrt().asin())
}

/// Columnwise angular errors between estimate and truth matrices.
pub fn angular_errors(v_hat: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Vec<f64>> {
    if v_hat.nrows() != v.nrows() || v_hat.ncols() != v.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "estimates {}x{} vs truth {}x{}",
            v_hat.nrows(),
            v_hat.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    (0..v_hat.ncols())
        .map(|i| angular_error(&v_hat.column(i).into_owned(), &v.column(i).into_owned()))
        .collect()
}

/// Longest prefix of components within tolerance. Indices flagged in
/// `excluded` (e.g. inside a repeated-eigenvalue bubble, where individual
/// directions are not identifiable) are skipped: they neither count toward
/// nor break the streak.
pub fn streak_from_errors(errors: &[f64], tol: f64, excluded: &[bool]) -> usize {
    let mut streak = 0;
    for (i, &e) in errors.iter().enumerate() {
        if excluded.get(i).copied().unwrap_or(false) {
            continue;
        }
        if e < tol {
            streak += 1;
        } else {
            break;
        }
    }
    streak
}

/// Largest m such that the first m components are each within `tol` of truth.
pub fn longest_streak(v_hat: &DMatrix<f64>, v: &DMatrix<f64>, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let errors = angular_errors(v_hat, v)?;
    Ok(streak_from_errors(&errors, tol, &[]))
}

fn projector_overlap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    // Tr(P_a P_b) with P = A(AᵀA)⁻¹Aᵀ, evaluated in k×k space.
    let gram_a = a.transpose() * a;
    let gram_b = b.transpose() * b;
    let rank_ok = |g: &DMatrix<f64>, name: &str| -> Result<()> {
        let eig = g.symmetric_eigenvalues();
        let max = eig.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if min < 1e-12 * max.max(1.0) {
            return Err(Error::RankDeficient(format!("{name} has numerical rank below k")));
        }
        Ok(())
    };
    rank_ok(&gram_a, "first factor")?;
    rank_ok(&gram_b, "second factor")?;
    let cross = a.transpose() * b; // k×k
    let inv_a = gram_a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("first factor gram not invertible".into()))?;
    let inv_b = gram_b
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("second factor gram not invertible".into()))?;
    Ok((inv_a * &cross * inv_b * cross.transpose()).trace())
}

/// Normalized subspace distance `1 − Tr(U*P)/k` between the column spans,
/// with pseudoinverse-based projectors. 0 when the spans coincide, 1 when
/// they are orthogonal.
pub fn subspace_distance(v_hat: &DMatrix<f64>, v_topk: &DMatrix<f64>) -> Result<f64> {
    if v_hat.nrows() != v_topk.nrows() || v_hat.ncols() != v_topk.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "estimates {}x{} vs subspace basis {}x{}",
            v_hat.nrows(),
            v_hat.ncols(),
            v_topk.nrows(),
            v_topk.ncols()
        )));
    }
    let k = v_hat.ncols() as f64;
    Ok(1.0 - projector_overlap(v_topk, v_hat)? / k)
}

/// Result of matching unordered estimates to ground-truth components.
#[derive(Debug, Clone)]
pub struct Matching {
    /// `permutation[i]` is the truth column assigned to estimate column i.
    pub permutation: Vec<usize>,
    /// Sign aligning each estimate with its matched truth column.
    pub signs: Vec<f64>,
    /// Total angular error of the assignment.
    pub total_error: f64,
    /// Per-estimate angular error under the matching.
    pub errors: Vec<f64>,
}

/// Sign-blind optimal assignment of estimate columns to truth columns,
/// minimizing total angular error (exact for k ≤ 64).
pub fn optimal_matching(v_hat: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Matching> {
    if v_hat.nrows() != v.nrows() || v_hat.ncols() != v.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "estimates {}x{} vs truth {}x{}",
            v_hat.nrows(),
            v_hat.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let k = v_hat.ncols();
    if k > 64 {
        return Err(Error::InvalidInput(format!("exact assignment supports k <= 64, got {k}")));
    }
    let mut cost = vec![vec![0i64; k]; k];
    for i in 0..k {
        for j in 0..k {
            let e = angular_error(&v_hat.column(i).into_owned(), &v.column(j).into_owned())?;
            // Fixed-point costs keep the assignment solver exact.
            cost[i][j] = (e * 1e12).round() as i64;
        }
    }
    let weights = CostMatrix::from_rows(cost).expect("square cost matrix");
    let (_, assignment) = kuhn_munkres_min(&weights);
    let mut signs = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    let mut total = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        let dot = v_hat.column(i).dot(&v.column(j));
        signs.push(if dot < 0.0 { -1.0 } else { 1.0 });
        let e = angular_error(&v_hat.column(i).into_owned(), &v.column(j).into_owned())?;
        errors.push(e);
        total += e;
    }
    Ok(Matching { permutation: assignment, signs, total_error: total, errors })
}

/// Scree data per column: Rayleigh quotient, total penalty, penalty/quotient
/// ratio and the resulting utility.
#[derive(Debug, Clone)]
pub struct RayleighReport {
    pub quotients: Vec<f64>,
    pub penalties: Vec<f64>,
    pub penalty_ratios: Vec<f64>,
    pub utilities: Vec<f64>,
}

pub fn rayleigh_quotients(v_hat: &DMatrix<f64>, gram: Gram) -> Result<RayleighReport> {
    let k = v_hat.ncols();
    let mut quotients = Vec::with_capacity(k);
    let mut penalties = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    let mut utilities = Vec::with_capacity(k);
    for i in 0..k {
        let vi = v_hat.column(i);
        let rq = gram.quad(&vi);
        let mut penalty = 0.0;
        for j in 0..i {
            let vj = v_hat.column(j);
            let den = gram.checked_denominator(j, gram.quad(&vj))?;
            let cross = gram.pair(&vi, &vj);
            penalty += cross * cross / den;
        }
        quotients.push(rq);
        penalties.push(penalty);
        ratios.push(if rq.abs() > 0.0 { penalty / rq } else { f64::INFINITY });
        utilities.push(rq - penalty);
    }
    Ok(RayleighReport { quotients, penalties, penalty_ratios: ratios, utilities })
}

/// Angles below this are indistinguishable from zero when recovered through
/// an f64 cosine: cos(θ) rounds to 1.0 for θ < √(ulp) ≈ 1.49e-8.
pub const MIN_RESOLVABLE_ANGLE: f64 = 1.5e-8;

/// ‖V̂ᵀV_rest‖_F²: squared alignment between the estimates and a basis of the
/// discarded complement. Convergence of all angles to within θ forces this
/// below k(d−k)θ² (use [`MIN_RESOLVABLE_ANGLE`] as a floor on measured θ).
pub fn cross_alignment_frobenius_sq(v_hat: &DMatrix<f64>, v_rest: &DMatrix<f64>) -> f64 {
    (v_hat.transpose() * v_rest).norm_squared()
}

// ---------------------------------------------------------------------------
// Per-checkpoint record
// ---------------------------------------------------------------------------

/// One metrics checkpoint. Ground-truth dependent fields are absent when no
/// truth is available (real datasets).
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub wall_ms: f64,
    pub longest_streak: Option<usize>,
    pub subspace_distance: Option<f64>,
    pub angular_errors: Option<Vec<f64>>,
    pub rayleigh: Vec<f64>,
}

impl MetricsRecord {
    pub fn csv_header(k: usize) -> String {
        let mut cols = vec!["iter".to_string(), "wall_ms".into(), "streak".into(), "subspace_dist".into()];
        cols.extend((1..=k).map(|i| format!("theta_{i}")));
        cols.extend((1..=k).map(|i| format!("rq_{i}")));
        cols.join(",")
    }

    pub fn to_csv_row(&self, k: usize) -> String {
        let mut cols = vec![
            self.iteration.to_string(),
            format!("{:.3}", self.wall_ms),
            self.longest_streak.map_or("nan".into(), |s| s.to_string()),
            self.subspace_distance.map_or("nan".into(), |s| format!("{s:.17e}")),
        ];
        for i in 0..k {
            match &self.angular_errors {
                Some(errs) => cols.push(format!("{:.17e}", errs[i])),
                None => cols.push("nan".into()),
            }
        }
        for i in 0..k {
            cols.push(format!("{:.17e}", self.rayleigh[i]));
        }
        cols.join(",")
    }
}

/// Computes checkpoint records for a fixed problem; holds the ground truth,
/// tolerance and any excluded (unidentifiable) component indices.
#[derive(Clone)]
pub struct Evaluator<'a> {
    truth: Option<&'a GroundTruth>,
    k: usize,
    tol: f64,
    excluded: Vec<bool>,
    /// Match estimates to truth columns before measuring angles (for rules
    /// that only recover the subspace, like Krasulina's).
    pub match_before_error: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(truth: Option<&'a GroundTruth>, k: usize, tol: f64) -> Self {
        Self { truth, k, tol, excluded: vec![false; k], match_before_error: false }
    }

    /// Marks 1-based component indices as excluded from the streak.
    pub fn with_excluded_indices(mut self, one_based: &[usize]) -> Self {
        for &i in one_based {
            if i >= 1 && i <= self.k {
                self.excluded[i - 1] = true;
            }
        }
        self
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn evaluate(&self, v_hat: &DMatrix<f64>, gram: Gram, iteration: u64, wall_ms: f64) -> Result<MetricsRecord> {
        let rayleigh = rayleigh_quotients(v_hat, gram)?.quotients;
        let (streak, sd, errors) = match self.truth {
            Some(truth) => {
                let top = truth.top_k(self.k);
                let errors = if self.match_before_error {
                    optimal_matching(v_hat, &top)?.errors
                } else {
                    angular_errors(v_hat, &top)?
                };
                let streak = streak_from_errors(&errors, self.tol, &self.excluded);
                let sd = subspace_distance(v_hat, &top)?;
                (Some(streak), Some(sd), Some(errors))
            }
            None => (None, None, None),
        };
        Ok(MetricsRecord {
            iteration,
            wall_ms,
            longest_streak: streak,
            subspace_distance: sd,
            angular_errors: errors,
            rayleigh,
        })
    }
}
