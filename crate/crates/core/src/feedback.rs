//! Delay schedules and the round-arrival protocol.
//!
//! A query issued at round `t` with delay `d_t ≥ 1` becomes available at
//! round `t + d_t − 1`; `d_t = 1` means same-round feedback. The router
//! tracks the arrival index sets `F_t = {k | k + d_k − 1 = t}` and records
//! anything landing past the horizon as overdue (never delivered). Block
//! pools group received gradients per block of `K` consecutive rounds for
//! the blocking learner.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// How the per-round delays `d_1..d_T` are produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelayKind {
    /// Every round incurs the same delay.
    Constant { delay: usize },
    /// Each `d_t` drawn uniformly from `{1, …, max}`.
    Uniform { max: usize, seed: u64 },
    /// `d_t = T/2` for `t ≤ ⌊√T⌋`, then `d_t = 1`: a short burst of very
    /// late feedback whose average delay is far below the maximum.
    Spike,
    /// An explicit list, one delay per round.
    Custom { delays: Vec<usize> },
}

/// A delay schedule specification for a horizon of `T` rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySchedule {
    pub kind: DelayKind,
    pub horizon: usize,
}

impl DelaySchedule {
    pub fn new(kind: DelayKind, horizon: usize) -> Self {
        Self { kind, horizon }
    }
}

/// Materializes the schedule into the vector `d_1..d_T`.
pub fn generate_delays(schedule: &DelaySchedule) -> Result<Vec<usize>> {
    let t_max = schedule.horizon;
    if t_max < 1 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    match &schedule.kind {
        DelayKind::Constant { delay } => {
            if *delay < 1 {
                return Err(Error::Parameter("delay must be at least 1".into()));
            }
            Ok(vec![*delay; t_max])
        }
        DelayKind::Uniform { max, seed } => {
            if *max < 1 {
                return Err(Error::Parameter("max delay must be at least 1".into()));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            Ok((0..t_max).map(|_| rng.random_range(1..=*max)).collect())
        }
        DelayKind::Spike => {
            let burst = t_max.isqrt();
            let late = (t_max / 2).max(1);
            Ok((1..=t_max).map(|t| if t <= burst { late } else { 1 }).collect())
        }
        DelayKind::Custom { delays } => {
            if delays.len() != t_max {
                return Err(Error::Parameter(format!(
                    "custom schedule has {} delays for horizon {t_max}",
                    delays.len()
                )));
            }
            if let Some(pos) = delays.iter().position(|&d| d < 1) {
                return Err(Error::Parameter(format!(
                    "delay at round {} must be at least 1",
                    pos + 1
                )));
            }
            Ok(delays.clone())
        }
    }
}

/// Summary statistics of a realized schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    /// Maximum delay `d`.
    pub max: usize,
    /// Average delay `d̄ = (1/T) Σ d_t`.
    pub mean: f64,
}

pub fn delay_stats(delays: &[usize]) -> DelayStats {
    let max = delays.iter().copied().max().unwrap_or(1);
    let mean = delays.iter().map(|&d| d as f64).sum::<f64>() / delays.len() as f64;
    DelayStats { max, mean }
}

/// Writes a schedule as plain text, one delay per line.
pub fn write_delays<W: Write>(mut w: W, delays: &[usize]) -> std::io::Result<()> {
    for d in delays {
        writeln!(w, "{d}")?;
    }
    Ok(())
}

/// Reads a plain-text schedule written by [`write_delays`].
pub fn read_delays<R: BufRead>(r: R) -> Result<Vec<usize>> {
    let mut delays = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parameter(format!("delay file: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let d: usize = trimmed.parse().map_err(|_| {
            Error::Parameter(format!("delay file line {}: not an integer", idx + 1))
        })?;
        if d < 1 {
            return Err(Error::Parameter(format!(
                "delay file line {}: delay must be ≥ 1",
                idx + 1
            )));
        }
        delays.push(d);
    }
    if delays.is_empty() {
        return Err(Error::Parameter("delay file is empty".into()));
    }
    Ok(delays)
}

/// Tracks which query rounds become available at which arrival rounds.
#[derive(Debug, Clone)]
pub struct FeedbackRouter {
    horizon: usize,
    pending: BTreeMap<usize, Vec<usize>>,
    registered: Vec<bool>,
    overdue: Vec<usize>,
    delivered: usize,
}

impl FeedbackRouter {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            pending: BTreeMap::new(),
            registered: vec![false; horizon + 1],
            overdue: Vec::new(),
            delivered: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Registers the query issued at `query_round` and returns its arrival
    /// round `query_round + delay − 1`. Arrivals past the horizon are kept
    /// in the overdue list and never delivered.
    pub fn route(&mut self, query_round: usize, delay: usize) -> Result<usize> {
        if query_round < 1 || query_round > self.horizon {
            return Err(Error::Parameter(format!(
                "query round {query_round} outside 1..={}",
                self.horizon
            )));
        }
        if delay < 1 {
            return Err(Error::Parameter("delay must be at least 1".into()));
        }
        if self.registered[query_round] {
            return Err(Error::Protocol(format!(
                "round {query_round} registered twice"
            )));
        }
        self.registered[query_round] = true;
        let arrival = query_round + delay - 1;
        if arrival > self.horizon {
            self.overdue.push(query_round);
        } else {
            self.pending.entry(arrival).or_default().push(query_round);
        }
        Ok(arrival)
    }

    /// Removes and returns `F_t`, ascending by query round. Each registered
    /// round is returned exactly once over the whole horizon.
    pub fn arrivals(&mut self, t: usize) -> Vec<usize> {
        let mut f_t = self.pending.remove(&t).unwrap_or_default();
        f_t.sort_unstable();
        self.delivered += f_t.len();
        f_t
    }

    /// Query rounds whose feedback can never arrive within the horizon.
    pub fn overdue(&self) -> &[usize] {
        &self.overdue
    }

    /// Total arrivals handed out so far.
    pub fn delivered(&self) -> usize {
        self.delivered
    }

    /// Registered queries still awaiting delivery.
    pub fn pending(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }
}

/// Per-block gradient pools for the blocking learner. Pool `j` collects the
/// gradients of rounds `(j−1)K+1 ..= min(jK, T)` and becomes ready at the
/// first block end where it holds one record per round of its block.
#[derive(Debug, Clone)]
pub struct BlockPools<G> {
    block_size: usize,
    horizon: usize,
    pools: Vec<Vec<(usize, G)>>,
    consumed: Vec<bool>,
}

impl<G> BlockPools<G> {
    pub fn new(block_size: usize, horizon: usize) -> Result<Self> {
        if block_size < 1 || horizon < 1 {
            return Err(Error::Parameter(
                "block size and horizon must be at least 1".into(),
            ));
        }
        let blocks = horizon.div_ceil(block_size);
        Ok(Self {
            block_size,
            horizon,
            pools: (0..blocks).map(|_| Vec::new()).collect(),
            consumed: vec![false; blocks],
        })
    }

    pub fn block_count(&self) -> usize {
        self.pools.len()
    }

    /// 1-based block index of a query round: `⌈round / K⌉`.
    pub fn block_of(&self, round: usize) -> usize {
        round.div_ceil(self.block_size)
    }

    /// Number of rounds in block `j` (1-based); the final block may be short.
    pub fn block_len(&self, block: usize) -> usize {
        let end = (block * self.block_size).min(self.horizon);
        end - (block - 1) * self.block_size
    }

    /// Deposits one batch of received `(round, gradient)` records and returns
    /// the blocks that just became complete, with their gradients (query-round
    /// order). Returned pools are emptied and cannot be refilled.
    pub fn deposit_and_collect(
        &mut self,
        received: impl IntoIterator<Item = (usize, G)>,
    ) -> Result<Vec<(usize, Vec<G>)>> {
        for (round, grad) in received {
            if round < 1 || round > self.horizon {
                return Err(Error::Parameter(format!(
                    "round {round} outside 1..={}",
                    self.horizon
                )));
            }
            let j = self.block_of(round);
            if self.consumed[j - 1] {
                return Err(Error::Protocol(format!(
                    "deposit for round {round} into already-consumed pool {j}"
                )));
            }
            self.pools[j - 1].push((round, grad));
        }

        let mut ready = Vec::new();
        for j in 1..=self.block_count() {
            if !self.consumed[j - 1] && self.pools[j - 1].len() == self.block_len(j) {
                self.consumed[j - 1] = true;
                let mut records = std::mem::take(&mut self.pools[j - 1]);
                records.sort_by_key(|&(round, _)| round);
                ready.push((j, records.into_iter().map(|(_, g)| g).collect()));
            }
        }
        Ok(ready)
    }

    /// Gradients deposited but not yet consumed.
    pub fn pending(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }

    /// Number of pools already consumed.
    pub fn consumed_blocks(&self) -> usize {
        self.consumed.iter().filter(|&&c| c).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule() {
        let s = DelaySchedule::new(DelayKind::Constant { delay: 1 }, 5);
        assert_eq!(generate_delays(&s).unwrap(), vec![1, 1, 1, 1, 1]);
    }

    #[test]
    fn spike_schedule_matches_closed_form() {
        let s = DelaySchedule::new(DelayKind::Spike, 100);
        let d = generate_delays(&s).unwrap();
        for t in 1..=10 {
            assert_eq!(d[t - 1], 50, "t={t}");
        }
        for t in 11..=100 {
            assert_eq!(d[t - 1], 1, "t={t}");
        }
    }

    #[test]
    fn uniform_schedule_is_reproducible_and_in_range() {
        let s = DelaySchedule::new(DelayKind::Uniform { max: 10, seed: 99 }, 8000);
        let a = generate_delays(&s).unwrap();
        let b = generate_delays(&s).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&d| (1..=10).contains(&d)));
        // All values show up over 8000 draws.
        for v in 1..=10 {
            assert!(a.contains(&v), "delay {v} never drawn");
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(generate_delays(&DelaySchedule::new(DelayKind::Constant { delay: 0 }, 5)).is_err());
        assert!(generate_delays(&DelaySchedule::new(DelayKind::Uniform { max: 0, seed: 0 }, 5)).is_err());
        assert!(generate_delays(&DelaySchedule::new(DelayKind::Constant { delay: 1 }, 0)).is_err());
    }

    #[test]
    fn delay_stats_mean_below_max() {
        let d = vec![3, 1, 1, 1];
        let stats = delay_stats(&d);
        assert_eq!(stats.max, 3);
        assert!((stats.mean - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn schedule_round_trips_through_text() {
        let delays = vec![3usize, 1, 4, 1, 5];
        let mut buf = Vec::new();
        write_delays(&mut buf, &delays).unwrap();
        let back = read_delays(buf.as_slice()).unwrap();
        assert_eq!(back, delays);
    }

    #[test]
    fn router_routes_by_formula() {
        let mut r = FeedbackRouter::new(10);
        assert_eq!(r.route(7, 1).unwrap(), 7);
        assert_eq!(r.route(3, 5).unwrap(), 7);
        assert_eq!(r.arrivals(7), vec![3, 7]);
        assert_eq!(r.arrivals(7), Vec::<usize>::new());
    }

    #[test]
    fn router_marks_past_horizon_as_overdue() {
        let mut r = FeedbackRouter::new(5);
        let arrival = r.route(5, 2).unwrap();
        assert_eq!(arrival, 6);
        assert_eq!(r.overdue(), &[5]);
        for t in 1..=5 {
            assert!(r.arrivals(t).is_empty());
        }
    }

    #[test]
    fn router_rejects_duplicate_registration() {
        let mut r = FeedbackRouter::new(5);
        r.route(2, 1).unwrap();
        assert!(matches!(r.route(2, 3), Err(Error::Protocol(_))));
    }

    #[test]
    fn hand_routed_arrival_sets() {
        let mut r = FeedbackRouter::new(3);
        for (t, d) in [(1, 3), (2, 1), (3, 1)] {
            r.route(t, d).unwrap();
        }
        assert_eq!(r.arrivals(1), Vec::<usize>::new());
        assert_eq!(r.arrivals(2), vec![2]);
        assert_eq!(r.arrivals(3), vec![1, 3]);
    }

    #[test]
    fn spike_has_late_arrival_at_59() {
        let s = DelaySchedule::new(DelayKind::Spike, 100);
        let d = generate_delays(&s).unwrap();
        let mut r = FeedbackRouter::new(100);
        for (t, &dt) in d.iter().enumerate() {
            r.route(t + 1, dt).unwrap();
        }
        assert!(r.arrivals(59).contains(&10));
    }

    #[test]
    fn pools_complete_without_delay() {
        let mut pools: BlockPools<f64> = BlockPools::new(2, 4).unwrap();
        let ready = pools
            .deposit_and_collect([(1, 0.5), (2, 0.25)])
            .unwrap();
        assert_eq!(ready.len(), 1);
        assert_eq!(ready[0].0, 1);
        assert_eq!(ready[0].1, vec![0.5, 0.25]);
    }

    #[test]
    fn pools_hand_example_with_late_first_round() {
        // Delays (3,1,1,1) on T=4, K=2: arrivals (2) at block 1; (1,3) and
        // (4) during block 2. Block 1 yields nothing; block 2 completes both.
        let mut pools: BlockPools<u32> = BlockPools::new(2, 4).unwrap();
        let ready = pools.deposit_and_collect([(2, 20)]).unwrap();
        assert!(ready.is_empty());
        let ready = pools
            .deposit_and_collect([(1, 10), (3, 30), (4, 40)])
            .unwrap();
        let blocks: Vec<usize> = ready.iter().map(|(b, _)| *b).collect();
        assert_eq!(blocks, vec![1, 2]);
        assert_eq!(ready[0].1, vec![10, 20]);
        assert_eq!(ready[1].1, vec![30, 40]);
    }

    #[test]
    fn pool_deposit_after_consumption_is_protocol_error() {
        let mut pools: BlockPools<u32> = BlockPools::new(1, 3).unwrap();
        pools.deposit_and_collect([(1, 1)]).unwrap();
        assert!(matches!(
            pools.deposit_and_collect([(1, 2)]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn partial_final_block_length() {
        let pools: BlockPools<u8> = BlockPools::new(2, 5).unwrap();
        assert_eq!(pools.block_count(), 3);
        assert_eq!(pools.block_len(3), 1);
        assert_eq!(pools.block_of(5), 3);
    }

    #[test]
    fn overdue_rounds_leave_pools_incomplete() {
        let mut pools: BlockPools<u8> = BlockPools::new(2, 4).unwrap();
        // Round 1 never arrives: pool 1 can never complete.
        let ready = pools.deposit_and_collect([(2, 2), (3, 3), (4, 4)]).unwrap();
        let blocks: Vec<usize> = ready.iter().map(|(b, _)| *b).collect();
        assert_eq!(blocks, vec![2]);
        assert_eq!(pools.pending(), 1);
        assert_eq!(pools.consumed_blocks(), 1);
    }

    #[test]
    fn exactly_once_over_random_schedules() {
        use rand::{Rng, SeedableRng};
        let mut meta = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let horizon = meta.random_range(1..=200);
            let max = meta.random_range(1..=50);
            let schedule = DelaySchedule::new(
                DelayKind::Uniform { max, seed: meta.random() },
                horizon,
            );
            let delays = generate_delays(&schedule).unwrap();
            let mut router = FeedbackRouter::new(horizon);
            for (t, &d) in delays.iter().enumerate() {
                let arrival = router.route(t + 1, d).unwrap();
                assert_eq!(arrival, t + 1 + d - 1);
            }
            let mut seen = vec![false; horizon + 1];
            let mut total = 0usize;
            for t in 1..=horizon {
                for k in router.arrivals(t) {
                    assert!(!seen[k], "round {k} delivered twice");
                    assert_eq!(k + delays[k - 1] - 1, t);
                    seen[k] = true;
                    total += 1;
                }
            }
            assert_eq!(total + router.overdue().len(), horizon);
        }
    }
}
