//! Streaming k-PCA baselines: Oja's algorithm (QR variant), the generalized
//! Hebbian algorithm, Hebb's rule with deflation, and a Matrix-Krasulina
//! style subspace update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Gram;

/// Update rules available to the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    Eigengame,
    EigengameR,
    Oja,
    Gha,
    HebbDeflation,
    Krasulina,
}

impl UpdateRule {
    pub const ALL: [UpdateRule; 6] = [
        UpdateRule::Eigengame,
        UpdateRule::EigengameR,
        UpdateRule::Oja,
        UpdateRule::Gha,
        UpdateRule::HebbDeflation,
        UpdateRule::Krasulina,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Eigengame => "eigengame",
            UpdateRule::EigengameR => "eigengame-r",
            UpdateRule::Oja => "oja",
            UpdateRule::Gha => "gha",
            UpdateRule::HebbDeflation => "hebb-deflation",
            UpdateRule::Krasulina => "krasulina",
        }
    }
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eigengame" => Ok(UpdateRule::Eigengame),
            "eigengame-r" | "eigengamer" => Ok(UpdateRule::EigengameR),
            "oja" => Ok(UpdateRule::Oja),
            "gha" => Ok(UpdateRule::Gha),
            "hebb-deflation" | "hebb" => Ok(UpdateRule::HebbDeflation),
            "krasulina" => Ok(UpdateRule::Krasulina),
            other => Err(Error::Config(format!("unknown update rule `{other}`"))),
        }
    }
}

/// Shared state for the baseline rules.
#[derive(Debug, Clone)]
pub struct BaselineState {
    pub v_hat: DMatrix<f64>,
    pub rule: UpdateRule,
    pub eta: f64,
    /// When set, GHA renormalizes its columns after each step (off by
    /// default; unnormalized GHA can drift at large eta).
    pub gha_normalize: bool,
}

impl BaselineState {
    pub fn new(v_hat: DMatrix<f64>, rule: UpdateRule, eta: f64) -> Result<Self> {
        if v_hat.ncols() == 0 || v_hat.ncols() > v_hat.nrows() {
            return Err(Error::InvalidInput(format!(
                "need 1 <= k <= d, got k={}, d={}",
                v_hat.ncols(),
                v_hat.nrows()
            )));
        }
        if !(eta > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {eta}")));
        }
        Ok(Self { v_hat, rule, eta, gha_normalize: false })
    }

    pub fn k(&self) -> usize {
        self.v_hat.ncols()
    }

    pub fn dim(&self) -> usize {
        self.v_hat.nrows()
    }
}

/// Sign fix applied after QR so column signs are reproducible:
/// `S = sign(sign(diag(R)) + 0.5)`, i.e. -1 only for negative diagonal.
pub fn qr_sign_fix(r_diag: &[f64]) -> Vec<f64> {
    r_diag
        .iter()
        .map(|&x| {
            let s = if x < 0.0 {
                -1.0
            } else if x > 0.0 {
                1.0
            } else {
                0.0
            };
            if s + 0.5 < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect()
}

/// QR-orthonormalizes the columns in place with the deterministic sign fix.
/// Errors when the columns are numerically rank deficient.
pub fn orthonormalize(v_hat: &mut DMatrix<f64>) -> Result<()> {
    let k = v_hat.ncols();
    let scale = v_hat.amax().max(1.0);
    let qr = v_hat.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|j| r[(j, j)]).collect();
    if diag.iter().any(|d| d.abs() < 1e-12 * scale) {
        return Err(Error::Orthonormalization(format!(
            "rank-deficient estimate: |R_jj| = {:.3e}",
            diag.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()))
        )));
    }
    let signs = qr_sign_fix(&diag);
    *v_hat = q;
    for (j, s) in signs.iter().enumerate() {
        if *s < 0.0 {
            v_hat.column_mut(j).neg_mut();
        }
    }
    Ok(())
}

/// Oja's algorithm: a Hebbian matrix step followed by QR with the sign fix.
pub fn oja_step(state: &mut BaselineState, gram: Gram) -> Result<()> {
    let grown = &state.v_hat + gram.apply_mat(&state.v_hat) * state.eta;
    state.v_hat = grown;
    orthonormalize(&mut state.v_hat)
}

/// Generalized Hebbian update for every column from one frozen snapshot:
/// `Δv̂ᵢ = 2[Mv̂ᵢ − (v̂ᵢᵀMv̂ᵢ)v̂ᵢ − Σ_{j<i}(v̂ᵢᵀMv̂ⱼ)v̂ⱼ]`, no normalization
/// unless the flag asks for it.
pub fn gha_step(state: &mut BaselineState, gram: Gram) -> Result<()> {
    let snapshot = state.v_hat.clone();
    let applied = gram.apply_mat(&snapshot);
    let r = snapshot.transpose() * &applied; // r[(i,j)] = v̂ᵢᵀ M v̂ⱼ
    let k = state.k();
    for i in 0..k {
        let mut delta = applied.column(i).clone_owned();
        for j in 0..=i {
            delta.axpy(-r[(i, j)], &snapshot.column(j), 1.0);
        }
        let mut col = snapshot.column(i) + delta * (2.0 * state.eta);
        if state.gha_normalize {
            let n = col.norm();
            if n < 1e-300 {
                return Err(Error::DegenerateStep);
            }
            col /= n;
        }
        state.v_hat.set_column(i, &col);
    }
    Ok(())
}

/// The GHA increment for a single vector against explicit parents; exposed
/// for the equivalence analysis.
pub fn gha_delta(gram: Gram, v: &DVector<f64>, parents: &[DVector<f64>]) -> DVector<f64> {
    let mv = gram.apply(v);
    let rq = v.dot(&mv);
    let mut delta = mv.clone() - v * rq;
    for p in parents {
        let align = v.dot(&gram.apply(p));
        delta.axpy(-align, p, 1.0);
    }
    delta * 2.0
}

/// Matrix-Krasulina update: project the Hebbian direction onto the Stiefel
/// tangent space, step, then re-orthonormalize with QR.
pub fn krasulina_step(state: &mut BaselineState, gram: Gram) -> Result<()> {
    let mv = gram.apply_mat(&state.v_hat);
    let tangent = &mv - &state.v_hat * (state.v_hat.transpose() * &mv);
    state.v_hat += tangent * state.eta;
    orthonormalize(&mut state.v_hat)
}

/// Options for the sequential Hebb-with-deflation solver.
#[derive(Debug, Clone)]
pub struct HebbDeflationOptions {
    pub eta: f64,
    /// Max inner steps per component.
    pub budget_per_component: u64,
    /// Rayleigh-quotient stabilization window (steps).
    pub window: usize,
    /// Relative change threshold over the window.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for HebbDeflationOptions {
    fn default() -> Self {
        Self { eta: 1e-4, budget_per_component: 100_000, window: 50, rel_tol: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct HebbDeflationResult {
    pub v_hat: DMatrix<f64>,
    /// Inner steps spent per component.
    pub steps: Vec<u64>,
    /// Set when a component's Rayleigh quotient never stabilized in budget.
    pub budget_exhausted: Vec<bool>,
}

/// Data feed for the deflation solver: the fixed full-batch operator, or a
/// fresh minibatch per inner step.
pub enum HebbData<'a> {
    Full(Gram<'a>),
    Stream(&'a crate::dataset::DataSource),
}

/// Deflates a vector by the learned parents: v − Σ v̂ⱼ⟨v̂ⱼ, v⟩.
pub fn deflate(v: &DVector<f64>, parents: &DMatrix<f64>, count: usize) -> DVector<f64> {
    let mut out = v.clone();
    for j in 0..count {
        let p = parents.column(j);
        let c = p.dot(v);
        out.axpy(-c, &p, 1.0);
    }
    out
}

/// Learns components one at a time with Hebb's rule on deflated data: the
/// batch operator is conjugated by the projector that removes every learned
/// parent, so `X₍ᵢ₎ v_j = 0` for j < i. Each inner step applies
/// `v̂ ← v̂ + η M₍ᵢ₎ v̂` then renormalizes; a component is accepted when its
/// Rayleigh quotient's change over a trailing window falls under tolerance.
pub fn hebb_deflation_solve(
    data: HebbData<'_>,
    d: usize,
    k: usize,
    opts: &HebbDeflationOptions,
) -> Result<HebbDeflationResult> {
    if k == 0 || k > d {
        return Err(Error::InvalidInput(format!("need 1 <= k <= d, got k={k}, d={d}")));
    }
    let mut stream = match &data {
        HebbData::Full(_) => None,
        HebbData::Stream(src) => Some(src.stream(0)),
    };
    let mut v_hat = DMatrix::zeros(d, k);
    let mut steps = Vec::with_capacity(k);
    let mut exhausted = Vec::with_capacity(k);
    for i in 0..k {
        let mut v = crate::linalg::sample_unit_sphere(d, crate::linalg::derive_seed(opts.seed, i as u64))?;
        let mut history: Vec<f64> = Vec::new();
        let mut used = 0u64;
        let mut stabilized = false;
        while used < opts.budget_per_component {
            used += 1;
            let batch = stream.as_mut().map(|s| s.next_batch());
            let gram = match (&data, &batch) {
                (HebbData::Full(g), _) => *g,
                (HebbData::Stream(_), Some(b)) => Gram::Batch(b),
                _ => unreachable!(),
            };
            let deflated_v = deflate(&v, &v_hat, i);
            let pushed = deflate(&gram.apply(&deflated_v), &v_hat, i);
            v += &pushed * opts.eta;
            let norm = v.norm();
            if norm < 1e-300 {
                return Err(Error::DegenerateStep);
            }
            v /= norm;
            let dv = deflate(&v, &v_hat, i);
            let rq = gram.quad(&dv.as_view());
            history.push(rq);
            if history.len() > opts.window {
                let prev = history[history.len() - 1 - opts.window];
                let cur = *history.last().unwrap();
                if (cur - prev).abs() <= opts.rel_tol * prev.abs().max(1e-300) {
                    stabilized = true;
                    break;
                }
            }
        }
        v_hat.set_column(i, &v);
        steps.push(used);
        exhausted.push(!stabilized);
    }
    Ok(HebbDeflationResult { v_hat, steps, budget_exhausted: exhausted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sample_unit_sphere, seeded_rng, SpectrumSpec};
    use nalgebra::DVector;

    fn diag321() -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]))
    }

    fn random_state(d: usize, k: usize, rule: UpdateRule, eta: f64, seed: u64) -> BaselineState {
        let cols: Vec<DVector<f64>> = (0..k)
            .map(|i| sample_unit_sphere(d, crate::linalg::derive_seed(seed, i as u64)).unwrap())
            .collect();
        BaselineState::new(DMatrix::from_columns(&cols), rule, eta).unwrap()
    }

    #[test]
    fn sign_fix_matches_listed_formula() {
        assert_eq!(qr_sign_fix(&[2.0, -3.0, 0.0]), vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn oja_zero_step_is_identity_on_orthonormal_state() {
        // eta -> 0 limit: QR of an orthonormal matrix with positive diagonal
        // leaves it untouched.
        let m = diag321();
        let mut state = random_state(3, 3, UpdateRule::Oja, 1e-300, 1);
        orthonormalize(&mut state.v_hat).unwrap();
        let before = state.v_hat.clone();
        oja_step(&mut state, Gram::Matrix(&m)).unwrap();
        assert!((&state.v_hat - &before).norm() < 1e-10);
    }

    #[test]
    fn oja_sign_fix_idempotent() {
        let m = diag321();
        let mut a = random_state(3, 2, UpdateRule::Oja, 1e-300, 5);
        oja_step(&mut a, Gram::Matrix(&m)).unwrap();
        let once = a.v_hat.clone();
        oja_step(&mut a, Gram::Matrix(&m)).unwrap();
        assert!((&a.v_hat - &once).norm() < 1e-12);
    }

    #[test]
    fn oja_columns_orthonormal_after_step() {
        let spec = SpectrumSpec::linear(8, 20.0, 1.0);
        let (m, _) = crate::linalg::synthetic_matrix(&spec, true, 3).unwrap();
        let mut state = random_state(8, 4, UpdateRule::Oja, 1e-2, 7);
        for _ in 0..50 {
            oja_step(&mut state, Gram::Matrix(&m)).unwrap();
            let dev = (state.v_hat.transpose() * &state.v_hat - DMatrix::identity(4, 4)).norm();
            assert!(dev < 1e-10, "orthonormality drift {dev}");
        }
    }

    #[test]
    fn oja_converges_on_diag321() {
        let m = diag321();
        let mut state = random_state(3, 3, UpdateRule::Oja, 5e-3, 11);
        for _ in 0..4000 {
            oja_step(&mut state, Gram::Matrix(&m)).unwrap();
        }
        for i in 0..3 {
            let cos = state.v_hat.column(i)[i].abs();
            let theta = cos.clamp(-1.0, 1.0).acos();
            assert!(theta < std::f64::consts::PI / 8.0, "column {i} angle {theta}");
        }
    }

    #[test]
    fn oja_rejects_rank_deficient_state() {
        let m = diag321();
        let v = sample_unit_sphere(3, 2).unwrap();
        let dup = DMatrix::from_columns(&[v.clone(), v]);
        let mut state = BaselineState::new(dup, UpdateRule::Oja, 1e-3).unwrap();
        assert!(matches!(oja_step(&mut state, Gram::Matrix(&m)), Err(Error::Orthonormalization(_))));
    }

    #[test]
    fn gha_fixed_points() {
        let m = diag321();
        let gram = Gram::Matrix(&m);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!(gha_delta(gram, &e1, &[]).norm() < 1e-14);
        assert!(gha_delta(gram, &e2, &[e1]).norm() < 1e-14);
    }

    #[test]
    fn gha_converges_on_diag321() {
        let m = diag321();
        let mut state = random_state(3, 3, UpdateRule::Gha, 5e-3, 13);
        for _ in 0..6000 {
            gha_step(&mut state, Gram::Matrix(&m)).unwrap();
        }
        for i in 0..3 {
            let col = state.v_hat.column(i);
            let cos = (col[i] / col.norm()).abs();
            let theta = cos.clamp(-1.0, 1.0).acos();
            assert!(theta < std::f64::consts::PI / 8.0, "column {i} angle {theta}");
        }
    }

    #[test]
    fn gha_step_matches_per_vector_delta() {
        let spec = SpectrumSpec::linear(6, 8.0, 1.0);
        let (m, _) = crate::linalg::synthetic_matrix(&spec, true, 9).unwrap();
        let gram = Gram::Matrix(&m);
        let state0 = random_state(6, 3, UpdateRule::Gha, 1e-2, 17);
        let mut state = state0.clone();
        gha_step(&mut state, gram).unwrap();
        for i in 0..3 {
            let parents: Vec<DVector<f64>> =
                (0..i).map(|j| state0.v_hat.column(j).into_owned()).collect();
            let v = state0.v_hat.column(i).into_owned();
            let expect = &v + gha_delta(gram, &v, &parents) * 1e-2;
            assert!((state.v_hat.column(i) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn krasulina_fixed_at_exact_subspace() {
        let m = diag321();
        let gram = Gram::Matrix(&m);
        // span(e1,e2) is the top-2 invariant subspace: tangent term vanishes.
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let mut state = BaselineState::new(v.clone(), UpdateRule::Krasulina, 0.05).unwrap();
        krasulina_step(&mut state, gram).unwrap();
        assert!((&state.v_hat - &v).norm() < 1e-12);
    }

    #[test]
    fn krasulina_full_basis_is_fixed() {
        let m = diag321();
        let mut state = random_state(3, 3, UpdateRule::Krasulina, 0.05, 23);
        orthonormalize(&mut state.v_hat).unwrap();
        let before = state.v_hat.clone();
        krasulina_step(&mut state, Gram::Matrix(&m)).unwrap();
        assert!((&state.v_hat - &before).norm() < 1e-10);
    }

    #[test]
    fn krasulina_reaches_top2_subspace() {
        let m = diag321();
        let mut state = random_state(3, 2, UpdateRule::Krasulina, 2e-2, 29);
        orthonormalize(&mut state.v_hat).unwrap();
        for _ in 0..5000 {
            krasulina_step(&mut state, Gram::Matrix(&m)).unwrap();
        }
        // Subspace distance against span(e1, e2).
        let truth = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let overlap = (truth.transpose() * &state.v_hat).norm_squared() / 2.0;
        assert!(1.0 - overlap < 0.01, "subspace distance {}", 1.0 - overlap);
    }

    #[test]
    fn deflation_annihilates_parents() {
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let parents = DMatrix::from_columns(&[e1, e2]);
        let v = DVector::from_vec(vec![0.3, -0.4, 0.5]);
        let out = deflate(&v, &parents, 2);
        assert!(out[0].abs() < 1e-15 && out[1].abs() < 1e-15);
        assert!((out[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hebb_deflation_recovers_diag321() {
        let m = diag321();
        let opts = HebbDeflationOptions {
            eta: 5e-2,
            budget_per_component: 20_000,
            window: 50,
            rel_tol: 1e-10,
            seed: 3,
        };
        let res = hebb_deflation_solve(HebbData::Full(Gram::Matrix(&m)), 3, 3, &opts).unwrap();
        for i in 0..3 {
            let cos = res.v_hat.column(i)[i].abs();
            let theta = cos.clamp(-1.0, 1.0).acos();
            assert!(theta < std::f64::consts::PI / 8.0, "component {i} angle {theta}");
        }
    }

    #[test]
    fn hebb_deflation_flags_budget_exhaustion() {
        let m = diag321();
        let opts = HebbDeflationOptions {
            eta: 1e-6,
            budget_per_component: 60,
            window: 50,
            rel_tol: 0.0, // unreachable tolerance
            seed: 3,
        };
        let res = hebb_deflation_solve(HebbData::Full(Gram::Matrix(&m)), 3, 1, &opts).unwrap();
        assert!(res.budget_exhausted[0]);
        assert_eq!(res.steps[0], 60);
    }

    #[test]
    fn hebb_k1_matches_oja_single_vector() {
        // With no deflation the update is Hebb + normalize, i.e. single-vector
        // Oja's algorithm.
        let m = diag321();
        let eta = 1e-2;
        let mut v = sample_unit_sphere(3, 77).unwrap();
        let mut w = v.clone();
        for _ in 0..200 {
            v += (&m * &v) * eta;
            v /= v.norm();

            let mut st = BaselineState::new(DMatrix::from_columns(&[w.clone()]), UpdateRule::Oja, eta).unwrap();
            oja_step(&mut st, Gram::Matrix(&m)).unwrap();
            let q = st.v_hat.column(0).into_owned();
            // QR sign fix may flip; compare up to sign.
            w = if q.dot(&v) < 0.0 { -q } else { q };
        }
        assert!((&v - &w).norm() < 1e-10);
    }

    // GHA is not the gradient of any utility: its Jacobian is asymmetric.
    #[test]
    fn gha_field_jacobian_is_asymmetric() {
        let spec = SpectrumSpec::linear(6, 6.0, 1.0);
        let (m, _) = crate::linalg::synthetic_matrix(&spec, true, 31).unwrap();
        let gram = Gram::Matrix(&m);
        let mut rng = seeded_rng(37);
        let parents: Vec<DVector<f64>> = (0..2)
            .map(|_| crate::linalg::sample_unit_sphere_with(6, &mut rng).unwrap())
            .collect();
        let v = crate::linalg::sample_unit_sphere_with(6, &mut rng).unwrap();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(6, 6);
        for n in 0..6 {
            let mut vp = v.clone();
            vp[n] += h;
            let mut vm = v.clone();
            vm[n] -= h;
            let fp = gha_delta(gram, &vp, &parents);
            let fm = gha_delta(gram, &vm, &parents);
            jac.set_column(n, &((fp - fm) / (2.0 * h)));
        }
        let asym = (&jac - jac.transpose()).norm();
        assert!(asym > 1e-6, "Jacobian unexpectedly symmetric: {asym}");
    }
}
