//! Adaptive group testing over shard-code tests.
//!
//! Stage A draws random groups of `m + 1` nodes until one tests honest.
//! Stage B reuses those known-honest nodes as padding: the rest of the
//! committee is split Dorfman-style into about `sqrt(E f)` pools, each pool
//! is tested once, and every member of a positive pool is retested alone.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codes::{self, CodedShard, TestGroup, Verdict};
use crate::field::FieldParams;
use crate::NodeId;

/// Target failure probability used when none is given.
pub const DEFAULT_RHO: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GtError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no honest group found within {budget} trials")]
    StageAFailed { budget: u64, trials: u64 },
    #[error("pool {pool:?} tested positive but every member retested honest")]
    OracleInconsistent { pool: Vec<NodeId> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtConfig {
    pub n: usize,
    pub m: usize,
    /// Assumed upper bound on malicious nodes.
    pub f: usize,
    pub rho: f64,
    pub seed: u64,
    /// Fail with [`GtError::OracleInconsistent`] instead of tolerating a
    /// positive pool whose members all retest honest.
    pub strict: bool,
}

impl GtConfig {
    pub fn new(n: usize, m: usize, f: usize) -> Self {
        Self {
            n,
            m,
            f,
            rho: DEFAULT_RHO,
            seed: 0,
            strict: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), GtError> {
        if self.m == 0 {
            return Err(GtError::InvalidConfig("m must be at least 1".into()));
        }
        if self.n < self.m + self.f + 1 {
            return Err(GtError::InvalidConfig(format!(
                "need n >= m + f + 1, got n={} m={} f={}",
                self.n, self.m, self.f
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(GtError::InvalidConfig(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Result of asking for one group test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    Tested(Verdict),
    /// The listed members never produced a usable message, so no code test
    /// ran.
    Unresponsive(Vec<NodeId>),
}

/// Anything that can test a group of node ids.
pub trait GroupTester {
    fn test_group(&mut self, members: &[NodeId]) -> OracleOutcome;
}

impl<F: FnMut(&[NodeId]) -> OracleOutcome> GroupTester for F {
    fn test_group(&mut self, members: &[NodeId]) -> OracleOutcome {
        self(members)
    }
}

/// Counts every group test that produced a verdict, and separately every
/// request that ended without one.
#[derive(Debug)]
pub struct TestOracle<T> {
    inner: T,
    trials: u64,
    timeouts: u64,
}

impl<T: GroupTester> TestOracle<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            trials: 0,
            timeouts: 0,
        }
    }

    pub fn query(&mut self, members: &[NodeId]) -> OracleOutcome {
        let outcome = self.inner.test_group(members);
        match outcome {
            OracleOutcome::Tested(_) => self.trials += 1,
            OracleOutcome::Unresponsive(_) => self.timeouts += 1,
        }
        outcome
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn timeouts(&self) -> u64 {
        self.timeouts
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Random search for the first honest group.
    Search,
    /// Padded Dorfman pool.
    Pool,
    /// Padded individual retest.
    Individual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub stage: Stage,
    /// Nodes being judged; padding excluded.
    pub candidates: Vec<NodeId>,
    /// Everything sent to the oracle, padding included.
    pub group: Vec<NodeId>,
    pub outcome: OracleOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentificationResult {
    pub honest: BTreeSet<NodeId>,
    pub malicious: BTreeSet<NodeId>,
    /// Members of `malicious` classified by silence rather than a test.
    pub unresponsive: BTreeSet<NodeId>,
    pub trials_used: u64,
    pub search_trials: u64,
    pub timeouts: u64,
    /// Positive pools whose members all retested honest.
    pub inconsistencies: u64,
    /// More nodes were classified malicious than the assumed `f`.
    pub f_exceeded: bool,
    pub trace: Vec<TraceEntry>,
}

/// Probability that a uniformly random `(m+1)`-subset of `n` nodes avoids
/// all `f` malicious ones: `prod_{i=0}^{m} (1 - f / (n - i))`.
pub fn prob_no_malicious(n: usize, f: usize, m: usize) -> Result<f64, GtError> {
    if n < m + f + 1 {
        return Err(GtError::InvalidConfig(format!(
            "need n >= m + f + 1, got n={n} m={m} f={f}"
        )));
    }
    Ok((0..=m)
        .map(|i| (n - f - i) as f64 / (n - i) as f64)
        .product())
}

/// Smallest trial count `T` with `(1 - p0)^T <= rho`.
pub fn trials_to_first_honest(p0: f64, rho: f64) -> Result<u64, GtError> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(GtError::InvalidConfig(format!(
            "success probability must lie in (0, 1], got {p0}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(GtError::InvalidConfig(format!(
            "rho must lie in (0, 1), got {rho}"
        )));
    }
    if p0 == 1.0 {
        return Ok(1);
    }
    let t = rho.ln() / (1.0 - p0).ln();
    Ok((t.ceil() as u64).max(1))
}

/// Real-valued trial bound `log_{1-P0}(rho) + 2 sqrt((n - m - 1) f)`.
///
/// With `f = 0` the first group is surely honest and the bound is the
/// single search trial.
pub fn total_trials_bound(n: usize, m: usize, f: usize, rho: f64) -> Result<f64, GtError> {
    GtConfig {
        n,
        m,
        f,
        rho,
        seed: 0,
        strict: false,
    }
    .validate()?;
    if f == 0 {
        return Ok(1.0);
    }
    let p0 = prob_no_malicious(n, f, m)?;
    let search = rho.ln() / (1.0 - p0).ln();
    Ok(search + 2.0 * (((n - m - 1) * f) as f64).sqrt())
}

/// Splits `remaining` into `ceil(sqrt(E f))` contiguous pools (at most `E`)
/// whose sizes differ by at most one.
pub fn dorfman_partition(remaining: &[NodeId], f: usize) -> Result<Vec<Vec<NodeId>>, GtError> {
    if f < 1 {
        return Err(GtError::InvalidConfig(
            "Dorfman partition needs f >= 1".into(),
        ));
    }
    let e = remaining.len();
    if e == 0 {
        return Ok(Vec::new());
    }
    let pools = ceil_sqrt(e as u128 * f as u128).min(e as u128) as usize;
    let base = e / pools;
    let extra = e % pools;
    let mut out = Vec::with_capacity(pools);
    let mut start = 0;
    for i in 0..pools {
        let size = base + usize::from(i < extra);
        out.push(remaining[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

fn ceil_sqrt(v: u128) -> u128 {
    let mut r = (v as f64).sqrt() as u128;
    while r * r > v {
        r -= 1;
    }
    while r * r < v {
        r += 1;
    }
    r
}

/// Uniform random `size`-subset of `pool`, in sampling order.
pub fn sample_group<R: Rng + ?Sized>(pool: &[NodeId], size: usize, rng: &mut R) -> Vec<NodeId> {
    sample(rng, pool.len(), size)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Fraction of `draws` random groups of `m + 1` out of `n` that avoid the
/// `f` planted malicious nodes, with its binomial standard error.
pub fn monte_carlo_no_malicious(n: usize, f: usize, m: usize, draws: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = (0..draws)
        .filter(|_| sample(&mut rng, n, m + 1).into_iter().all(|i| i >= f))
        .count() as f64;
    let p = clean / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

/// Runs both stages against `oracle` over nodes `0..n`.
pub fn identify_malicious<T: GroupTester>(
    cfg: &GtConfig,
    oracle: &mut TestOracle<T>,
) -> Result<IdentificationResult, GtError> {
    cfg.validate()?;
    let mut run = Run {
        cfg,
        oracle,
        honest: BTreeSet::new(),
        malicious: BTreeSet::new(),
        unresponsive: BTreeSet::new(),
        padding: Vec::new(),
        inconsistencies: 0,
        trace: Vec::new(),
        start_trials: 0,
        start_timeouts: 0,
    };
    run.start_trials = run.oracle.trials();
    run.start_timeouts = run.oracle.timeouts();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = trials_to_first_honest(prob_no_malicious(cfg.n, cfg.f, cfg.m)?, cfg.rho)?;
    run.search(budget, &mut rng)?;
    let search_trials = run.oracle.trials() - run.start_trials;

    let remaining: Vec<NodeId> = (0..cfg.n as u32)
        .map(NodeId)
        .filter(|id| !run.honest.contains(id) && !run.malicious.contains(id))
        .collect();
    for pool in dorfman_partition(&remaining, cfg.f.max(1))? {
        for chunk in pool.chunks(cfg.m + 1) {
            run.test_pool(chunk.to_vec())?;
        }
    }

    let f_exceeded = run.malicious.len() > cfg.f;
    Ok(IdentificationResult {
        trials_used: run.oracle.trials() - run.start_trials,
        timeouts: run.oracle.timeouts() - run.start_timeouts,
        search_trials,
        honest: run.honest,
        malicious: run.malicious,
        unresponsive: run.unresponsive,
        inconsistencies: run.inconsistencies,
        f_exceeded,
        trace: run.trace,
    })
}

struct Run<'a, T> {
    cfg: &'a GtConfig,
    oracle: &'a mut TestOracle<T>,
    honest: BTreeSet<NodeId>,
    malicious: BTreeSet<NodeId>,
    unresponsive: BTreeSet<NodeId>,
    /// The first honest group, in the order it was drawn.
    padding: Vec<NodeId>,
    inconsistencies: u64,
    trace: Vec<TraceEntry>,
    start_trials: u64,
    start_timeouts: u64,
}

impl<T: GroupTester> Run<'_, T> {
    fn ask(&mut self, stage: Stage, candidates: &[NodeId]) -> OracleOutcome {
        let mut group = candidates.to_vec();
        if stage != Stage::Search {
            let pad = self.cfg.m + 1 - candidates.len();
            group.extend_from_slice(&self.padding[..pad]);
        }
        let outcome = self.oracle.query(&group);
        if let OracleOutcome::Unresponsive(ids) = &outcome {
            for id in ids {
                self.honest.remove(id);
                self.malicious.insert(*id);
                self.unresponsive.insert(*id);
            }
        }
        self.trace.push(TraceEntry {
            stage,
            candidates: candidates.to_vec(),
            group,
            outcome: outcome.clone(),
        });
        outcome
    }

    fn search(&mut self, budget: u64, rng: &mut ChaCha8Rng) -> Result<(), GtError> {
        let mut tested = 0;
        while tested < budget {
            let pool: Vec<NodeId> = (0..self.cfg.n as u32)
                .map(NodeId)
                .filter(|id| !self.unresponsive.contains(id))
                .collect();
            if pool.len() < self.cfg.m + 1 {
                break;
            }
            let group = sample_group(&pool, self.cfg.m + 1, rng);
            match self.ask(Stage::Search, &group) {
                OracleOutcome::Tested(Verdict::Honest) => {
                    self.honest.extend(group.iter().copied());
                    self.padding = group;
                    return Ok(());
                }
                OracleOutcome::Tested(Verdict::Positive) => tested += 1,
                OracleOutcome::Unresponsive(_) => {}
            }
        }
        Err(GtError::StageAFailed {
            budget,
            trials: self.oracle.trials() - self.start_trials,
        })
    }

    fn test_pool(&mut self, mut pool: Vec<NodeId>) -> Result<(), GtError> {
        while !pool.is_empty() {
            match self.ask(Stage::Pool, &pool) {
                OracleOutcome::Tested(Verdict::Honest) => {
                    self.honest.extend(pool.iter().copied());
                    return Ok(());
                }
                OracleOutcome::Tested(Verdict::Positive) if pool.len() == 1 => {
                    self.malicious.insert(pool[0]);
                    return Ok(());
                }
                OracleOutcome::Tested(Verdict::Positive) => {
                    let mut found = false;
                    for &node in &pool {
                        found |= self.test_individual(node);
                    }
                    if !found {
                        if self.cfg.strict {
                            return Err(GtError::OracleInconsistent { pool });
                        }
                        self.inconsistencies += 1;
                    }
                    return Ok(());
                }
                OracleOutcome::Unresponsive(ids) => pool.retain(|id| !ids.contains(id)),
            }
        }
        Ok(())
    }

    /// Returns whether `node` ended up classified malicious.
    fn test_individual(&mut self, node: NodeId) -> bool {
        match self.ask(Stage::Individual, &[node]) {
            OracleOutcome::Tested(Verdict::Honest) => {
                self.honest.insert(node);
                false
            }
            OracleOutcome::Tested(Verdict::Positive) => {
                self.malicious.insert(node);
                true
            }
            OracleOutcome::Unresponsive(_) => true,
        }
    }
}

/// A network-free oracle: each node holds a coded shard, possibly
/// perturbed, and a group test is the parity check over those shards.
#[derive(Debug, Clone)]
pub struct CodeOracle {
    field: FieldParams,
    coded: Vec<CodedShard>,
}

impl CodeOracle {
    /// `coded[i]` is what node `i` would send.
    pub fn new(field: FieldParams, coded: Vec<CodedShard>) -> Self {
        Self { field, coded }
    }
}

impl GroupTester for CodeOracle {
    fn test_group(&mut self, members: &[NodeId]) -> OracleOutcome {
        let group = TestGroup::new(
            members
                .iter()
                .map(|id| (*id, self.coded[id.index()].scalar))
                .collect(),
        )
        .expect("committee scalars are distinct and nonzero");
        let shards: Vec<_> = members
            .iter()
            .map(|id| self.coded[id.index()].clone())
            .collect();
        let pv = codes::parity_vector(&group, &self.field).expect("distinct scalars");
        let outcome = codes::run_test(&group, &shards, &pv, &self.field).expect("aligned shards");
        OracleOutcome::Tested(outcome.verdict)
    }
}
