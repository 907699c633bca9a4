//! Decentralized runtime: one logical worker per player, exchanging vectors
//! through a shared broadcast board along the fixed hierarchy. Workers are
//! multiplexed onto a configurable number of OS threads; synchronous mode
//! (staleness 0) pins every read to the previous round, so results do not
//! depend on the thread count or scheduling.

use std::collections::VecDeque;
use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::dataset::DataSource;
use crate::eigengame::{player_update, utility, EigenState, Variant};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, sample_unit_sphere, Gram};
use crate::metrics::{Evaluator, MetricsRecord};

/// Per-worker configuration. Player `i` (1-based) subscribes to exactly
/// players 1..i-1 and publishes to players i+1..k.
#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// 1-based player index.
    pub player: usize,
    /// Stream identity for this worker's private batch cursor.
    pub data_seed: u64,
    pub alpha: f64,
    pub variant: Variant,
    /// Max rounds a consumed parent snapshot may lag behind the previous
    /// round; 0 means fully synchronous.
    pub staleness_bound: u64,
}

/// The data workers draw from.
#[derive(Clone, Copy)]
pub enum DataMode<'a> {
    /// Full-batch: every worker sees the same fixed operator.
    Full(&'a DMatrix<f64>),
    /// Each worker owns a private minibatch stream over the source.
    Stream(&'a DataSource),
}

impl DataMode<'_> {
    pub fn dim(&self) -> usize {
        match self {
            DataMode::Full(m) => m.nrows(),
            DataMode::Stream(s) => s.dim(),
        }
    }
}

struct Slot {
    ring: Mutex<VecDeque<(u64, DVector<f64>)>>,
}

struct Progress {
    completed: Vec<u64>,
    failed: Option<(usize, String)>,
}

/// Shared message board: per-player versioned history of published vectors
/// plus a round-completion counter used for gating. Publishes are atomic per
/// slot and reads return a consistent (round, vector) pair.
pub struct BroadcastBoard {
    slots: Vec<Slot>,
    progress: Mutex<Progress>,
    signal: Condvar,
    /// History depth in rounds; sized so previous-round reads and snapshot
    /// assembly always find their entries.
    retain: u64,
}

impl BroadcastBoard {
    /// Seeds every slot with the round-0 initialization.
    pub fn new(init: &DMatrix<f64>, max_staleness: u64) -> Self {
        let k = init.ncols();
        let slots = (0..k)
            .map(|i| Slot {
                ring: Mutex::new(VecDeque::from([(0u64, init.column(i).into_owned())])),
            })
            .collect();
        Self {
            slots,
            progress: Mutex::new(Progress { completed: vec![0; k], failed: None }),
            signal: Condvar::new(),
            retain: max_staleness + 2,
        }
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    /// Publishes player `col`'s vector for `round` and marks the round
    /// complete. Rounds per player are monotonically increasing.
    pub fn publish(&self, col: usize, round: u64, vector: DVector<f64>) {
        {
            let mut ring = self.slots[col].ring.lock().unwrap();
            debug_assert!(ring.back().map_or(true, |(r, _)| *r < round));
            ring.push_back((round, vector));
            while let Some((r, _)) = ring.front() {
                if *r + self.retain < round {
                    ring.pop_front();
                } else {
                    break;
                }
            }
        }
        let mut progress = self.progress.lock().unwrap();
        progress.completed[col] = round;
        drop(progress);
        self.signal.notify_all();
    }

    /// Blocks until every player has completed at least `round`, or any
    /// worker has failed.
    pub fn wait_all_completed(&self, round: u64) -> Result<()> {
        let mut progress = self.progress.lock().unwrap();
        loop {
            if let Some((player, msg)) = &progress.failed {
                return Err(Error::Worker { player: *player, msg: msg.clone() });
            }
            if progress.completed.iter().all(|&c| c >= round) {
                return Ok(());
            }
            progress = self.signal.wait(progress).unwrap();
        }
    }

    pub fn mark_failed(&self, player: usize, msg: String) {
        let mut progress = self.progress.lock().unwrap();
        if progress.failed.is_none() {
            progress.failed = Some((player, msg));
        }
        drop(progress);
        self.signal.notify_all();
    }

    /// The publication of exactly `round` for player `col`.
    pub fn read_exact(&self, col: usize, round: u64) -> Result<DVector<f64>> {
        let ring = self.slots[col].ring.lock().unwrap();
        ring.iter()
            .find(|(r, _)| *r == round)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Worker {
                player: col + 1,
                msg: format!("round {round} already pruned from slot history"),
            })
    }

    /// Freshest publication for player `col` as `(round, vector)`.
    pub fn read_freshest(&self, col: usize) -> (u64, DVector<f64>) {
        let ring = self.slots[col].ring.lock().unwrap();
        let (r, v) = ring.back().expect("slot never empty");
        (*r, v.clone())
    }

    /// Assembles the estimate matrix from the latest broadcasts together
    /// with each column's round stamp. Before any round completes this is
    /// exactly the initialization.
    pub fn snapshot(&self) -> (DMatrix<f64>, Vec<u64>) {
        let k = self.k();
        let d = self.slots[0].ring.lock().unwrap().back().unwrap().1.len();
        let mut m = DMatrix::zeros(d, k);
        let mut stamps = Vec::with_capacity(k);
        for col in 0..k {
            let (r, v) = self.read_freshest(col);
            m.set_column(col, &v);
            stamps.push(r);
        }
        (m, stamps)
    }

    /// Consistent snapshot of one completed round.
    pub fn snapshot_at(&self, round: u64) -> Result<DMatrix<f64>> {
        let k = self.k();
        let d = self.slots[0].ring.lock().unwrap().back().unwrap().1.len();
        let mut m = DMatrix::zeros(d, k);
        for col in 0..k {
            m.set_column(col, &self.read_exact(col, round)?);
        }
        Ok(m)
    }
}

/// One row of the round log.
#[derive(Debug, Clone)]
pub struct RoundLogEntry {
    pub round: u64,
    /// 1-based player index.
    pub player: usize,
    /// Worst lag (in rounds) among consumed parent snapshots relative to the
    /// previous round; negative when a parent ran ahead.
    pub staleness: i64,
    /// Player utility on its own batch after the update.
    pub utility: f64,
}

impl RoundLogEntry {
    pub fn csv_header() -> &'static str {
        "round,player,staleness,utility"
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{:.17e}", self.round, self.player, self.staleness, self.utility)
    }
}

/// Message counts implied by the hierarchy plus the reads actually observed.
#[derive(Debug, Clone)]
pub struct CommStats {
    /// Messages sent per player per round (fanout to children): k − i.
    pub sends_per_round: Vec<usize>,
    /// Messages received per player per round (one per parent): i − 1.
    pub receives_per_round: Vec<usize>,
    /// Parent reads observed per player over the whole run.
    pub observed_receives: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub rounds: u64,
    /// OS threads to multiplex the workers onto (0 = one per player, capped
    /// by available parallelism).
    pub num_threads: usize,
    /// Initial estimates; per-player seeded sphere samples otherwise.
    pub init: Option<DMatrix<f64>>,
    pub seed: u64,
    /// Evaluate metrics every this many rounds (0 = only the final round).
    pub metrics_cadence: u64,
    /// Emit round-log entries every this many rounds (0 = off).
    pub round_log_cadence: u64,
}

impl RunOptions {
    pub fn new(rounds: u64, seed: u64) -> Self {
        Self { rounds, num_threads: 0, init: None, seed, metrics_cadence: 0, round_log_cadence: 0 }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub state: EigenState,
    pub records: Vec<MetricsRecord>,
    pub round_log: Vec<RoundLogEntry>,
    pub comm: CommStats,
    /// Round stamps of the final snapshot, per player.
    pub final_round_stamps: Vec<u64>,
}

/// Standard per-player configs: worker i streams with its own cursor.
pub fn worker_configs(k: usize, alpha: f64, variant: Variant, staleness_bound: u64) -> Vec<WorkerConfig> {
    (1..=k)
        .map(|player| WorkerConfig {
            player,
            data_seed: (player - 1) as u64,
            alpha,
            variant,
            staleness_bound,
        })
        .collect()
}

fn validate_configs(configs: &[WorkerConfig]) -> Result<usize> {
    let k = configs.len();
    if k == 0 {
        return Err(Error::Config("no workers configured".into()));
    }
    for (idx, c) in configs.iter().enumerate() {
        if c.player != idx + 1 {
            return Err(Error::Config(format!(
                "worker configs must be ordered by player index; position {idx} holds player {}",
                c.player
            )));
        }
        if !(c.alpha > 0.0) {
            return Err(Error::Config(format!("player {}: step size must be positive", c.player)));
        }
    }
    Ok(k)
}

/// Executes `opts.rounds` rounds of the decentralized update. Every round,
/// each worker reads the freshest parent snapshots its staleness bound
/// allows (synchronous mode reads exactly the previous round), applies one
/// streaming update on its own batch, and publishes. The per-round output of
/// a synchronous run equals the vectorized update applied to the previous
/// round's snapshot whenever the batches match.
pub fn run(
    data: DataMode,
    configs: &[WorkerConfig],
    opts: &RunOptions,
    evaluator: Option<&Evaluator>,
) -> Result<RunOutcome> {
    let k = validate_configs(configs)?;
    let d = data.dim();
    if k > d {
        return Err(Error::Config(format!("k={k} exceeds dimension {d}")));
    }
    let synchronous = configs.iter().all(|c| c.staleness_bound == 0);
    let max_staleness = configs.iter().map(|c| c.staleness_bound).max().unwrap_or(0);

    let init = match &opts.init {
        Some(m) => {
            if m.nrows() != d || m.ncols() != k {
                return Err(Error::Config(format!(
                    "init is {}x{}, expected {d}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            m.clone()
        }
        None => {
            let mut m = DMatrix::zeros(d, k);
            for i in 0..k {
                m.set_column(i, &sample_unit_sphere(d, derive_seed(opts.seed, i as u64))?);
            }
            m
        }
    };

    let board = BroadcastBoard::new(&init, max_staleness);
    let full_data_owner: Option<DMatrix<f64>> = match data {
        DataMode::Full(_) => None,
        DataMode::Stream(s) => Some(s.data().clone()),
    };
    let metrics_gram = match (&data, &full_data_owner) {
        (DataMode::Full(m), _) => Gram::Matrix(m),
        (DataMode::Stream(_), Some(x)) => Gram::Batch(x),
        _ => unreachable!(),
    };

    let n_threads = if opts.num_threads == 0 {
        k.min(std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1))
    } else {
        opts.num_threads.min(k)
    };

    let start = Instant::now();
    let records = Mutex::new(Vec::<MetricsRecord>::new());
    let logs: Vec<Mutex<Vec<RoundLogEntry>>> =
        (0..n_threads).map(|_| Mutex::new(Vec::new())).collect();
    let observed: Vec<AtomicU64> = (0..k).map(|_| AtomicU64::new(0)).collect();

    std::thread::scope(|scope| {
        for thread_id in 0..n_threads {
            let board = &board;
            let init = &init;
            let logs = &logs[thread_id];
            let observed = &observed;
            let records = &records;
            let metrics_gram = metrics_gram;
            scope.spawn(move || {
                let players: Vec<usize> = (0..k).skip(thread_id).step_by(n_threads).collect();
                let mut streams: Vec<_> = players
                    .iter()
                    .map(|&col| match data {
                        DataMode::Full(_) => None,
                        DataMode::Stream(s) => Some(s.stream(configs[col].data_seed)),
                    })
                    .collect();
                let mut own: Vec<DVector<f64>> =
                    players.iter().map(|&col| init.column(col).into_owned()).collect();
                // The thread owning player 1 doubles as the metrics scribe.
                let scribe = thread_id == 0;

                for round in 1..=opts.rounds {
                    for (slot_idx, &col) in players.iter().enumerate() {
                        let cfg = &configs[col];
                        let gate = round.saturating_sub(1 + cfg.staleness_bound);
                        if board.wait_all_completed(gate).is_err() {
                            return;
                        }
                        if scribe && slot_idx == 0 {
                            if let Some(ev) = evaluator {
                                let r = round - 1;
                                let due = opts.metrics_cadence > 0 && r % opts.metrics_cadence == 0;
                                if due {
                                    let snap = if synchronous {
                                        board.snapshot_at(r)
                                    } else {
                                        Ok(board.snapshot().0)
                                    };
                                    if let Ok(snap) = snap {
                                        let wall = start.elapsed().as_secs_f64() * 1e3;
                                        if let Ok(rec) = ev.evaluate(&snap, metrics_gram, r, wall) {
                                            records.lock().unwrap().push(rec);
                                        }
                                    }
                                }
                            }
                        }
                        let step = std::panic::catch_unwind(AssertUnwindSafe(|| -> Result<()> {
                            let mut parents = Vec::with_capacity(col);
                            let mut worst_lag: i64 = 0;
                            for parent in 0..col {
                                let (r, v) = if synchronous {
                                    (round - 1, board.read_exact(parent, round - 1)?)
                                } else {
                                    board.read_freshest(parent)
                                };
                                worst_lag = worst_lag.max(round as i64 - 1 - r as i64);
                                parents.push(v);
                            }
                            observed[col].fetch_add(parents.len() as u64, Ordering::Relaxed);
                            let batch = streams[slot_idx].as_mut().map(|s| s.next_batch());
                            let gram = match (&data, &batch) {
                                (DataMode::Full(m), _) => Gram::Matrix(m),
                                (DataMode::Stream(_), Some(b)) => Gram::Batch(b),
                                _ => unreachable!(),
                            };
                            let views: Vec<_> = parents.iter().map(|p| p.as_view()).collect();
                            let updated = player_update(
                                gram,
                                &own[slot_idx].as_view(),
                                &views,
                                cfg.alpha,
                                cfg.variant,
                            )?;
                            if opts.round_log_cadence > 0 && round % opts.round_log_cadence == 0 {
                                let u = utility(gram, &updated.as_view(), &views)?;
                                logs.lock().unwrap().push(RoundLogEntry {
                                    round,
                                    player: cfg.player,
                                    staleness: worst_lag,
                                    utility: u,
                                });
                            }
                            own[slot_idx] = updated.clone();
                            board.publish(col, round, updated);
                            Ok(())
                        }));
                        match step {
                            Ok(Ok(())) => {}
                            Ok(Err(e)) => {
                                board.mark_failed(cfg.player, e.to_string());
                                return;
                            }
                            Err(panic) => {
                                let msg = panic
                                    .downcast_ref::<&str>()
                                    .map(|s| s.to_string())
                                    .or_else(|| panic.downcast_ref::<String>().cloned())
                                    .unwrap_or_else(|| "worker panicked".into());
                                board.mark_failed(cfg.player, format!("panic: {msg}"));
                                return;
                            }
                        }
                    }
                }
            });
        }
    });

    // Surfaces the first failure; otherwise everyone reached the last round.
    board.wait_all_completed(opts.rounds)?;

    let (v_hat, stamps) = board.snapshot();
    let mut state = EigenState::adopt_columns(v_hat, configs[0].alpha, configs[0].variant, opts.seed)?;
    state.advance_iter(opts.rounds);

    let mut records = records.into_inner().unwrap();
    if let Some(ev) = evaluator {
        let snap = board.snapshot().0;
        let wall = start.elapsed().as_secs_f64() * 1e3;
        records.push(ev.evaluate(&snap, metrics_gram, opts.rounds, wall)?);
    }

    let mut merged_log: Vec<RoundLogEntry> = Vec::new();
    for l in &logs {
        merged_log.extend(l.lock().unwrap().iter().cloned());
    }
    merged_log.sort_by_key(|e| (e.round, e.player));

    let comm = CommStats {
        sends_per_round: (1..=k).map(|i| k - i).collect(),
        receives_per_round: (1..=k).map(|i| i - 1).collect(),
        observed_receives: observed.iter().map(|a| a.load(Ordering::Relaxed)).collect(),
    };

    Ok(RunOutcome { state, records, round_log: merged_log, comm, final_round_stamps: stamps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{synthetic_matrix, SpectrumSpec};

    #[test]
    fn board_snapshot_before_rounds_is_init() {
        let init = DMatrix::identity(4, 3);
        let board = BroadcastBoard::new(&init, 0);
        let (snap, stamps) = board.snapshot();
        assert_eq!(snap, init);
        assert_eq!(stamps, vec![0, 0, 0]);
    }

    #[test]
    fn board_exact_and_freshest_reads() {
        let init = DMatrix::identity(3, 2);
        let board = BroadcastBoard::new(&init, 0);
        let v1 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        board.publish(0, 1, v1.clone());
        assert_eq!(board.read_exact(0, 1).unwrap(), v1);
        assert_eq!(board.read_exact(0, 0).unwrap(), init.column(0).into_owned());
        let (r, _) = board.read_freshest(0);
        assert_eq!(r, 1);
    }

    #[test]
    fn board_prunes_old_history() {
        let init = DMatrix::identity(3, 1);
        let board = BroadcastBoard::new(&init, 0);
        for round in 1..=10 {
            board.publish(0, round, DVector::from_vec(vec![round as f64, 0.0, 0.0]));
        }
        assert!(board.read_exact(0, 3).is_err());
        assert!(board.read_exact(0, 9).is_ok());
    }

    #[test]
    fn single_player_matches_serial_loop_bitwise() {
        let data = crate::dataset::DataSource::new(
            DMatrix::from_fn(40, 6, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0),
            8,
            123,
            false,
        )
        .unwrap();
        let opts = RunOptions::new(200, 9);
        let configs = worker_configs(1, 1e-3, Variant::Riemannian, 0);
        let out = run(DataMode::Stream(&data), &configs, &opts, None).unwrap();

        // Serial replay with the same seed derivations.
        let mut v = sample_unit_sphere(6, derive_seed(9, 0)).unwrap();
        let mut stream = data.stream(0);
        for _ in 0..200 {
            let batch = stream.next_batch();
            let gram = Gram::Batch(&batch);
            v = player_update(gram, &v.as_view(), &[], 1e-3, Variant::Riemannian).unwrap();
        }
        assert_eq!(out.state.column(0).into_owned(), v);
    }

    #[test]
    fn synchronous_run_equals_vectorized_replay() {
        let (m, _) = synthetic_matrix(&SpectrumSpec::linear(8, 10.0, 1.0), true, 3).unwrap();
        let k = 4;
        let rounds = 50;
        let configs = worker_configs(k, 5e-3, Variant::Riemannian, 0);
        for threads in [1, 2, 4] {
            let mut opts = RunOptions::new(rounds, 31);
            opts.num_threads = threads;
            let out = run(DataMode::Full(&m), &configs, &opts, None).unwrap();

            let mut state = EigenState::init(8, k, 5e-3, Variant::Riemannian, 31).unwrap();
            for _ in 0..rounds {
                crate::eigengame::vectorized_step(&mut state, Gram::Matrix(&m)).unwrap();
            }
            for i in 0..k {
                let diff = (out.state.column(i) - state.column(i)).norm();
                assert!(diff < 1e-10, "threads={threads} column {i}: diff {diff}");
            }
            assert_eq!(out.final_round_stamps, vec![rounds; k]);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (m, _) = synthetic_matrix(&SpectrumSpec::linear(6, 6.0, 1.0), true, 4).unwrap();
        let configs = worker_configs(3, 1e-2, Variant::Riemannian, 0);
        let mut base: Option<DMatrix<f64>> = None;
        for threads in [1, 2, 3] {
            let mut opts = RunOptions::new(80, 77);
            opts.num_threads = threads;
            let out = run(DataMode::Full(&m), &configs, &opts, None).unwrap();
            match &base {
                None => base = Some(out.state.v_hat().clone()),
                Some(b) => assert_eq!(b, out.state.v_hat(), "threads={threads} diverged"),
            }
        }
    }

    #[test]
    fn bounded_staleness_still_converges() {
        let (m, truth) = synthetic_matrix(&SpectrumSpec::linear(3, 3.0, 1.0), false, 0).unwrap();
        let configs = worker_configs(3, 5e-2, Variant::Riemannian, 1);
        let mut opts = RunOptions::new(4000, 5);
        opts.num_threads = 3;
        let out = run(DataMode::Full(&m), &configs, &opts, None).unwrap();
        let errors = crate::metrics::angular_errors(out.state.v_hat(), &truth.top_k(3)).unwrap();
        for (i, e) in errors.iter().enumerate() {
            assert!(*e < std::f64::consts::PI / 8.0, "player {} error {e}", i + 1);
        }
    }

    #[test]
    fn failing_worker_aborts_with_player_index() {
        // Player 1 pinned to the null space of a rank-1 matrix: player 2's
        // penalty denominator degenerates immediately.
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let mut init = DMatrix::zeros(3, 2);
        init[(1, 0)] = 1.0; // e2: null space
        init[(2, 1)] = 1.0;
        let configs = worker_configs(2, 1e-2, Variant::Riemannian, 0);
        let mut opts = RunOptions::new(10, 0);
        opts.init = Some(init);
        let err = run(DataMode::Full(&m), &configs, &opts, None).unwrap_err();
        match err {
            Error::Worker { player, .. } => assert_eq!(player, 2),
            other => panic!("expected worker failure, got {other}"),
        }
    }

    #[test]
    fn communication_shape_matches_hierarchy() {
        let (m, _) = synthetic_matrix(&SpectrumSpec::linear(5, 5.0, 1.0), false, 0).unwrap();
        let k = 4;
        let rounds = 25;
        let configs = worker_configs(k, 1e-2, Variant::Riemannian, 0);
        let out = run(DataMode::Full(&m), &configs, &RunOptions::new(rounds, 3), None).unwrap();
        assert_eq!(out.comm.sends_per_round, vec![3, 2, 1, 0]);
        assert_eq!(out.comm.receives_per_round, vec![0, 1, 2, 3]);
        for (i, &obs) in out.comm.observed_receives.iter().enumerate() {
            assert_eq!(obs, rounds * i as u64, "player {}", i + 1);
        }
    }

    #[test]
    fn metrics_and_round_log_cadence() {
        let (m, truth) = synthetic_matrix(&SpectrumSpec::linear(4, 4.0, 1.0), false, 0).unwrap();
        let configs = worker_configs(2, 1e-2, Variant::Riemannian, 0);
        let mut opts = RunOptions::new(20, 1);
        opts.metrics_cadence = 5;
        opts.round_log_cadence = 10;
        let ev = Evaluator::new(Some(&truth), 2, std::f64::consts::PI / 8.0);
        let out = run(DataMode::Full(&m), &configs, &opts, Some(&ev)).unwrap();
        let iters: Vec<u64> = out.records.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![0, 5, 10, 15, 20]);
        // Two logged rounds × two players.
        assert_eq!(out.round_log.len(), 4);
        assert!(out.round_log.iter().all(|e| e.staleness == 0));
    }
}
