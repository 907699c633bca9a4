//! Experiment orchestration: (rule × step size × trial) arms, per-arm metric
//! CSVs, a cross-trial aggregate with standard errors, and best-step-size
//! selection by final streak.

use std::io::Write;
use std::path::PathBuf;

use eigengame_core::baselines::{
    gha_step, hebb_deflation_solve, krasulina_step, oja_step, BaselineState, HebbData,
    HebbDeflationOptions, UpdateRule,
};
use eigengame_core::dataset::{load_dataset, DataSource};
use eigengame_core::distributed::{run as distributed_run, DataMode, RunOptions, WorkerConfig};
use eigengame_core::eigengame::{save_checkpoint, EigenState, Variant};
use eigengame_core::linalg::{
    dense_eigh, derive_seed, sample_unit_sphere, synthetic_matrix, Gram,
    GroundTruth, SpectrumKind,
};
use eigengame_core::metrics::{Evaluator, MetricsRecord};
use eigengame_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Problem};

/// Largest dimension at which a dataset's exact eigenbasis is computed for
/// ground-truth metrics.
pub const DENSE_TRUTH_LIMIT: usize = 512;

/// How many synthetic samples are materialized when a spectrum problem runs
/// in streaming mode.
fn synthetic_sample_count(d: usize, batch: usize) -> usize {
    (4 * d).max(4 * batch).max(256)
}

pub struct ProblemData {
    /// Full-batch operator M (the Gram matrix for datasets).
    pub gram_full: DMatrix<f64>,
    /// Sample source for streaming mode.
    pub source: Option<DataSource>,
    pub truth: Option<GroundTruth>,
    /// 1-based component indices excluded from streaks (inside a repeated
    /// eigenvalue bubble they are not individually identifiable).
    pub excluded: Vec<usize>,
}

impl ProblemData {
    pub fn dim(&self) -> usize {
        self.gram_full.nrows()
    }
}

/// Samples whose Gram matrix realizes the spectrum exactly: X = A√Λ Vᵀ with
/// A a tall matrix of orthonormal columns.
pub fn samples_with_gram(
    lambda: &DVector<f64>,
    v: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let d = lambda.len();
    if n < d {
        return Err(Error::InvalidInput(format!("need n >= d, got n={n}, d={d}")));
    }
    let g = eigengame_core::linalg::random_gaussian_matrix(n, d, seed);
    let a = g.qr().q();
    let sqrt_l = DMatrix::from_diagonal(&lambda.map(|x| x.sqrt()));
    Ok(&a * sqrt_l * v.transpose())
}

pub fn prepare_problem(cfg: &ExperimentConfig) -> Result<ProblemData> {
    match &cfg.problem {
        Problem::Spectrum { spec, rotate } => {
            let (m, truth) = synthetic_matrix(spec, *rotate, derive_seed(cfg.seed, 0xB0A))?;
            let excluded = match (spec.kind, spec.bubble_range) {
                (SpectrumKind::Bubble, Some((lo, hi))) => (lo..=hi).collect(),
                _ => Vec::new(),
            };
            let source = if cfg.full_batch {
                None
            } else {
                let n = synthetic_sample_count(spec.d, cfg.batch);
                let x = samples_with_gram(&truth.lambda, &truth.v, n, derive_seed(cfg.seed, 0xDA7A))?;
                Some(DataSource::new(x, cfg.batch, cfg.seed, cfg.centered)?)
            };
            Ok(ProblemData { gram_full: m, source, truth: Some(truth), excluded })
        }
        Problem::Dataset { path, format } => {
            let source = load_dataset(path, *format, cfg.batch, cfg.seed, cfg.centered)?;
            let gram_full = source.gram_matrix();
            let truth = if source.dim() <= DENSE_TRUTH_LIMIT {
                let (vals, vecs) = dense_eigh(&gram_full)?;
                GroundTruth::new(vals, vecs).ok()
            } else {
                None
            };
            let source = if cfg.full_batch { None } else { Some(source) };
            Ok(ProblemData { gram_full, source, truth, excluded: Vec::new() })
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub rule: UpdateRule,
    pub alpha: f64,
    pub trial: usize,
    /// Stable ordering key.
    pub index: (usize, usize, usize),
}

pub struct ArmResult {
    pub spec: ArmSpec,
    pub records: Vec<MetricsRecord>,
    pub csv_path: PathBuf,
}

fn arm_stem(spec: &ArmSpec) -> String {
    format!("{}_a{:e}_t{}", spec.rule.name(), spec.alpha, spec.trial)
}

fn trial_seed(base: u64, spec: &ArmSpec) -> u64 {
    derive_seed(
        base,
        0x5EED_0000
            + (spec.index.0 as u64) * 1_000_000
            + (spec.index.1 as u64) * 1_000
            + spec.trial as u64,
    )
}

/// Runs one arm and returns its checkpoint records plus the final estimates.
pub fn run_arm(
    cfg: &ExperimentConfig,
    problem: &ProblemData,
    spec: &ArmSpec,
) -> Result<(Vec<MetricsRecord>, DMatrix<f64>)> {
    let k = cfg.k;
    let d = problem.dim();
    if k > d {
        return Err(Error::Config(format!("k={k} exceeds problem dimension {d}")));
    }
    let seed = trial_seed(cfg.seed, spec);
    let cadence = cfg.effective_cadence();
    let mut evaluator = Evaluator::new(problem.truth.as_ref(), k, cfg.tol_rad)
        .with_excluded_indices(&problem.excluded);
    evaluator.match_before_error = spec.rule == UpdateRule::Krasulina;

    match spec.rule {
        UpdateRule::Eigengame | UpdateRule::EigengameR => {
            let variant = if spec.rule == UpdateRule::Eigengame {
                Variant::Plain
            } else {
                Variant::Riemannian
            };
            let configs: Vec<WorkerConfig> = (1..=k)
                .map(|player| WorkerConfig {
                    player,
                    data_seed: derive_seed(seed, player as u64),
                    alpha: spec.alpha,
                    variant,
                    staleness_bound: cfg.staleness,
                })
                .collect();
            let mut opts = RunOptions::new(cfg.iters, seed);
            opts.num_threads = cfg.threads;
            opts.metrics_cadence = cadence;
            let data = match &problem.source {
                Some(src) => DataMode::Stream(src),
                None => DataMode::Full(&problem.gram_full),
            };
            let out = distributed_run(data, &configs, &opts, Some(&evaluator))?;
            Ok((out.records, out.state.v_hat().clone()))
        }
        UpdateRule::HebbDeflation => {
            let opts = HebbDeflationOptions {
                eta: spec.alpha,
                budget_per_component: (cfg.iters / k as u64).max(1),
                window: 50,
                rel_tol: 1e-4,
                seed,
            };
            let data = match &problem.source {
                Some(src) => HebbData::Stream(src),
                None => HebbData::Full(Gram::Matrix(&problem.gram_full)),
            };
            let res = hebb_deflation_solve(data, d, k, &opts)?;
            let total: u64 = res.steps.iter().sum();
            let rec = evaluator.evaluate(&res.v_hat, Gram::Matrix(&problem.gram_full), total, 0.0)?;
            Ok((vec![rec], res.v_hat))
        }
        UpdateRule::Oja | UpdateRule::Gha | UpdateRule::Krasulina => {
            let cols: Vec<DVector<f64>> = (0..k)
                .map(|i| sample_unit_sphere(d, derive_seed(seed, i as u64)))
                .collect::<Result<_>>()?;
            let mut state = BaselineState::new(DMatrix::from_columns(&cols), spec.rule, spec.alpha)?;
            let mut stream = problem.source.as_ref().map(|s| s.stream(derive_seed(seed, 0xBA7C)));
            let start = std::time::Instant::now();
            let metrics_gram = Gram::Matrix(&problem.gram_full);
            let mut records = Vec::new();
            records.push(evaluator.evaluate(&state.v_hat, metrics_gram, 0, 0.0)?);
            for t in 1..=cfg.iters {
                let batch = stream.as_mut().map(|s| s.next_batch());
                let gram = match &batch {
                    Some(b) => Gram::Batch(b),
                    None => Gram::Matrix(&problem.gram_full),
                };
                match spec.rule {
                    UpdateRule::Oja => oja_step(&mut state, gram)?,
                    UpdateRule::Gha => gha_step(&mut state, gram)?,
                    UpdateRule::Krasulina => krasulina_step(&mut state, gram)?,
                    _ => unreachable!(),
                }
                if t % cadence == 0 || t == cfg.iters {
                    let wall = start.elapsed().as_secs_f64() * 1e3;
                    records.push(evaluator.evaluate(&state.v_hat, metrics_gram, t, wall)?);
                }
            }
            Ok((records, state.v_hat))
        }
    }
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub rule: UpdateRule,
    pub alpha: f64,
    pub iter: u64,
    pub streak_mean: f64,
    pub streak_stderr: f64,
    pub subspace_mean: f64,
    pub subspace_stderr: f64,
    pub trials: usize,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Cross-trial aggregation per (rule, alpha, checkpoint iteration).
pub fn aggregate(arms: &[ArmResult]) -> Vec<AggregateRow> {
    use std::collections::BTreeMap;
    // Keyed by (rule idx, alpha idx, iter) through the arm ordering index.
    let mut groups: BTreeMap<(usize, usize, u64), (UpdateRule, f64, Vec<f64>, Vec<f64>)> =
        BTreeMap::new();
    for arm in arms {
        for rec in &arm.records {
            let key = (arm.spec.index.0, arm.spec.index.1, rec.iteration);
            let entry = groups
                .entry(key)
                .or_insert_with(|| (arm.spec.rule, arm.spec.alpha, Vec::new(), Vec::new()));
            if let Some(s) = rec.longest_streak {
                entry.2.push(s as f64);
            }
            if let Some(sd) = rec.subspace_distance {
                entry.3.push(sd);
            }
        }
    }
    groups
        .into_iter()
        .map(|((_, _, iter), (rule, alpha, streaks, sds))| {
            let (sm, se) = mean_stderr(&streaks);
            let (dm, de) = mean_stderr(&sds);
            AggregateRow {
                rule,
                alpha,
                iter,
                streak_mean: sm,
                streak_stderr: se,
                subspace_mean: dm,
                subspace_stderr: de,
                trials: streaks.len().max(sds.len()),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BestAlpha {
    pub rule: UpdateRule,
    pub alpha: f64,
    pub final_streak_mean: f64,
    pub final_subspace_mean: f64,
}

/// Best step size per rule: highest final mean streak, ties broken by larger
/// final subspace agreement (smaller distance), then by smaller step size.
pub fn select_best(rows: &[AggregateRow]) -> Vec<BestAlpha> {
    use std::collections::BTreeMap;
    let mut finals: BTreeMap<(String, u64), AggregateRow> = BTreeMap::new();
    for row in rows {
        let key = (row.rule.name().to_string(), row.alpha.to_bits());
        match finals.get(&key) {
            Some(existing) if existing.iter >= row.iter => {}
            _ => {
                finals.insert(key, row.clone());
            }
        }
    }
    let mut by_rule: BTreeMap<String, Vec<AggregateRow>> = BTreeMap::new();
    for ((rule, _), row) in finals {
        by_rule.entry(rule).or_default().push(row);
    }
    let mut best = Vec::new();
    for (_, mut candidates) in by_rule {
        candidates.sort_by(|a, b| {
            let streak = |r: &AggregateRow| if r.streak_mean.is_nan() { f64::NEG_INFINITY } else { r.streak_mean };
            let sd = |r: &AggregateRow| if r.subspace_mean.is_nan() { f64::INFINITY } else { r.subspace_mean };
            streak(b)
                .partial_cmp(&streak(a))
                .unwrap()
                .then(sd(a).partial_cmp(&sd(b)).unwrap())
                .then(a.alpha.partial_cmp(&b.alpha).unwrap())
        });
        let top = &candidates[0];
        best.push(BestAlpha {
            rule: top.rule,
            alpha: top.alpha,
            final_streak_mean: top.streak_mean,
            final_subspace_mean: top.subspace_mean,
        });
    }
    best.sort_by(|a, b| a.rule.name().cmp(b.rule.name()));
    best
}

pub struct RunSummary {
    pub arm_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub best_file: PathBuf,
}

/// Runs the full experiment: every (rule, alpha, trial) arm in parallel,
/// one CSV per arm, an aggregate CSV with mean and standard error per
/// checkpoint, a best-step-size summary and a final checkpoint per arm.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let problem = prepare_problem(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let mut specs = Vec::new();
    for (ri, rule) in cfg.rules.iter().enumerate() {
        for (ai, alpha) in cfg.alphas.iter().enumerate() {
            for trial in 0..cfg.trials {
                specs.push(ArmSpec { rule: *rule, alpha: *alpha, trial, index: (ri, ai, trial) });
            }
        }
    }

    let mut arms: Vec<ArmResult> = specs
        .par_iter()
        .map(|spec| -> Result<ArmResult> {
            let (records, v_hat) = run_arm(cfg, &problem, spec)?;
            let stem = arm_stem(spec);
            let csv_path = cfg.out_dir.join(format!("{stem}.csv"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
            writeln!(f, "{}", MetricsRecord::csv_header(cfg.k))?;
            for rec in &records {
                writeln!(f, "{}", rec.to_csv_row(cfg.k))?;
            }
            f.flush()?;
            let state = EigenState::from_columns(
                v_hat,
                spec.alpha,
                if spec.rule == UpdateRule::Eigengame { Variant::Plain } else { Variant::Riemannian },
                trial_seed(cfg.seed, spec),
            )?;
            save_checkpoint(&state, cfg.out_dir.join(format!("{stem}.ckpt")))?;
            Ok(ArmResult { spec: spec.clone(), records, csv_path })
        })
        .collect::<Result<Vec<_>>>()?;
    arms.sort_by_key(|a| a.spec.index);

    let rows = aggregate(&arms);
    let aggregate_file = cfg.out_dir.join("aggregate.csv");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&aggregate_file)?);
        writeln!(
            f,
            "rule,alpha,iter,streak_mean,streak_stderr,subspace_mean,subspace_stderr,trials"
        )?;
        for r in &rows {
            writeln!(
                f,
                "{},{:e},{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.rule.name(),
                r.alpha,
                r.iter,
                r.streak_mean,
                r.streak_stderr,
                r.subspace_mean,
                r.subspace_stderr,
                r.trials
            )?;
        }
        f.flush()?;
    }

    let best = select_best(&rows);
    let best_file = cfg.out_dir.join("best_alpha.csv");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&best_file)?);
        writeln!(f, "rule,alpha,final_streak_mean,final_subspace_mean")?;
        for b in &best {
            writeln!(
                f,
                "{},{:e},{:.17e},{:.17e}",
                b.rule.name(),
                b.alpha,
                b.final_streak_mean,
                b.final_subspace_mean
            )?;
        }
        f.flush()?;
    }

    Ok(RunSummary {
        arm_files: arms.into_iter().map(|a| a.csv_path).collect(),
        aggregate_file,
        best_file,
    })
}
