//! Sampling throughput of the sum tree against a linear-scan sampler.
//!
//! Each iteration of the `mixed` workload draws a batch of indices and then
//! overwrites the sampled priorities with fresh random values. Timings are
//! the median total over the repetitions, after an untimed warmup of 10% of
//! the iterations; `ns_per_op = total / (iterations · batch)`.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{below, seeded, unit_f64};
use crate::sumtree::SumTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    SumTree,
    Naive,
}

impl Structure {
    pub fn label(self) -> &'static str {
        match self {
            Structure::SumTree => "sumtree",
            Structure::Naive => "naive",
        }
    }
}

impl std::str::FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sumtree" => Ok(Structure::SumTree),
            "naive" => Ok(Structure::Naive),
            other => Err(invalid(format!("unknown structure `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Sample,
    Update,
    Mixed,
}

impl Operation {
    pub fn label(self) -> &'static str {
        match self {
            Operation::Sample => "sample",
            Operation::Update => "update",
            Operation::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for Operation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sample" => Ok(Operation::Sample),
            "update" => Ok(Operation::Update),
            "mixed" => Ok(Operation::Mixed),
            other => Err(invalid(format!("unknown operation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub structure: Structure,
    pub capacity: usize,
    pub operation: Operation,
    pub batch_size: usize,
    pub iterations: usize,
    pub total_ns: u128,
    pub ns_per_op: f64,
}

pub const BENCH_CSV_HEADER: &str = "structure,capacity,operation,batch,iters,ns_per_op";

pub fn write_bench_csv<W: Write>(results: &[BenchResult], mut w: W) -> Result<()> {
    writeln!(w, "{BENCH_CSV_HEADER}")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            r.structure.label(),
            r.capacity,
            r.operation.label(),
            r.batch_size,
            r.iterations,
            r.ns_per_op
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub capacities: Vec<usize>,
    pub batch_size: usize,
    pub iterations: usize,
    pub repetitions: usize,
    pub operations: Vec<Operation>,
    pub structures: Vec<Structure>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            capacities: (10..=20).map(|e| 1usize << e).collect(),
            batch_size: 32,
            iterations: 100,
            repetitions: 5,
            operations: vec![Operation::Mixed],
            structures: vec![Structure::SumTree, Structure::Naive],
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(invalid("batch size and iterations must be positive"));
        }
        if self.repetitions < 5 {
            return Err(invalid(format!("at least 5 repetitions required, got {}", self.repetitions)));
        }
        if let Some(c) = self.capacities.iter().find(|&&c| c < self.batch_size) {
            return Err(invalid(format!("capacity {c} smaller than batch size {}", self.batch_size)));
        }
        if self.capacities.is_empty() || self.operations.is_empty() || self.structures.is_empty() {
            return Err(invalid("capacities, operations and structures must be non-empty"));
        }
        Ok(())
    }
}

/// Linear cumulative scan: smallest `i` with `Σ_{j≤i} p[j] > u`.
pub fn naive_sample(priorities: &[f64], u: f64) -> Result<usize> {
    let total: f64 = priorities.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyStructure("priorities sum to zero"));
    }
    if !(u >= 0.0 && u < total) {
        return Err(invalid(format!("prefix value {u} outside [0, {total})")));
    }
    Ok(scan(priorities, u))
}

fn scan(priorities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in priorities.iter().enumerate() {
        acc += p;
        if p > 0.0 {
            last = i;
        }
        if acc > u {
            return i;
        }
    }
    last
}

trait Sampler {
    fn draw<R: RngCore>(&self, rng: &mut R) -> usize;
    fn set(&mut self, index: usize, priority: f64);
}

impl Sampler for SumTree {
    fn draw<R: RngCore>(&self, rng: &mut R) -> usize {
        let total = self.total();
        self.find_prefix((unit_f64(rng) * total).min(f64::from_bits(total.to_bits() - 1)))
            .expect("positive total")
    }

    fn set(&mut self, index: usize, priority: f64) {
        SumTree::set(self, index, priority).expect("valid update");
    }
}

/// Flat priority array with a running total.
struct Naive {
    priorities: Vec<f64>,
    total: f64,
}

impl Sampler for Naive {
    fn draw<R: RngCore>(&self, rng: &mut R) -> usize {
        scan(&self.priorities, unit_f64(rng) * self.total)
    }

    fn set(&mut self, index: usize, priority: f64) {
        self.total += priority - self.priorities[index];
        self.priorities[index] = priority;
    }
}

fn fresh_priority<R: RngCore>(rng: &mut R) -> f64 {
    // (0, 1]: never zero so the total stays positive.
    1.0 - unit_f64(rng)
}

fn run_iteration<S: Sampler, R: RngCore>(s: &mut S, op: Operation, batch: usize, capacity: usize, rng: &mut R, scratch: &mut Vec<usize>) {
    scratch.clear();
    match op {
        Operation::Sample => {
            for _ in 0..batch {
                scratch.push(s.draw(rng));
            }
        }
        Operation::Update => {
            for _ in 0..batch {
                let i = below(rng, capacity as u64) as usize;
                let p = fresh_priority(rng);
                s.set(i, p);
                scratch.push(i);
            }
        }
        Operation::Mixed => {
            for _ in 0..batch {
                scratch.push(s.draw(rng));
            }
            for &i in scratch.iter() {
                let p = fresh_priority(rng);
                s.set(i, p);
            }
        }
    }
    black_box(&scratch);
}

fn time_workload<S: Sampler>(s: &mut S, op: Operation, cfg: &BenchConfig, capacity: usize, seed: u64) -> u128 {
    let mut rng = seeded(seed);
    let mut scratch = Vec::with_capacity(cfg.batch_size);
    let warmup = (cfg.iterations / 10).max(1);
    let mut totals = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        for _ in 0..warmup {
            run_iteration(s, op, cfg.batch_size, capacity, &mut rng, &mut scratch);
        }
        let start = Instant::now();
        for _ in 0..cfg.iterations {
            run_iteration(s, op, cfg.batch_size, capacity, &mut rng, &mut scratch);
        }
        totals.push(start.elapsed().as_nanos());
    }
    totals.sort_unstable();
    totals[totals.len() / 2]
}

/// Times every (capacity, structure, operation) combination on the calling
/// thread. Every sum tree must pass its parent-sum audit afterwards.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchResult>> {
    cfg.validate()?;
    let mut results = Vec::new();
    for &capacity in &cfg.capacities {
        let mut init_rng = seeded(cfg.seed ^ capacity as u64);
        let initial: Vec<f64> = (0..capacity).map(|_| fresh_priority(&mut init_rng)).collect();
        for &structure in &cfg.structures {
            for &op in &cfg.operations {
                let seed = cfg.seed.wrapping_add(capacity as u64);
                let total_ns = match structure {
                    Structure::SumTree => {
                        let mut tree = SumTree::new(capacity)?;
                        for (i, &p) in initial.iter().enumerate() {
                            tree.set(i, p)?;
                        }
                        let ns = time_workload(&mut tree, op, cfg, capacity, seed);
                        let drift = tree.audit();
                        if drift > 1e-9 {
                            return Err(Error::Audit(format!(
                                "relative parent-sum mismatch {drift:e} at capacity {capacity}"
                            )));
                        }
                        ns
                    }
                    Structure::Naive => {
                        let mut naive = Naive {
                            total: initial.iter().sum(),
                            priorities: initial.clone(),
                        };
                        time_workload(&mut naive, op, cfg, capacity, seed)
                    }
                };
                results.push(BenchResult {
                    structure,
                    capacity,
                    operation: op,
                    batch_size: cfg.batch_size,
                    iterations: cfg.iterations,
                    total_ns,
                    ns_per_op: total_ns as f64 / (cfg.iterations * cfg.batch_size) as f64,
                });
            }
        }
    }
    Ok(results)
}

/// Growth of ns-per-op between two capacities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingReport {
    pub small: usize,
    pub large: usize,
    pub sumtree_ratio: f64,
    pub naive_ratio: f64,
    /// Sum tree strictly faster than the scan at the large capacity.
    pub sumtree_faster: bool,
}

impl ScalingReport {
    pub const MAX_SUMTREE_RATIO: f64 = 8.0;
    pub const MIN_NAIVE_RATIO: f64 = 50.0;

    pub fn pass(&self) -> bool {
        self.sumtree_ratio <= Self::MAX_SUMTREE_RATIO
            && self.naive_ratio >= Self::MIN_NAIVE_RATIO
            && self.sumtree_faster
    }
}

/// Compares `op` timings at the smallest and largest capacity present.
pub fn scaling_report(results: &[BenchResult], op: Operation) -> Result<ScalingReport> {
    let rows: Vec<&BenchResult> = results.iter().filter(|r| r.operation == op).collect();
    let small = rows.iter().map(|r| r.capacity).min().ok_or_else(|| invalid("no results"))?;
    let large = rows.iter().map(|r| r.capacity).max().expect("non-empty");
    let find = |s: Structure, c: usize| {
        rows.iter()
            .find(|r| r.structure == s && r.capacity == c)
            .map(|r| r.ns_per_op)
            .ok_or_else(|| invalid(format!("missing {} result at capacity {c}", s.label())))
    };
    let (ts, tl) = (find(Structure::SumTree, small)?, find(Structure::SumTree, large)?);
    let (ns, nl) = (find(Structure::Naive, small)?, find(Structure::Naive, large)?);
    Ok(ScalingReport {
        small,
        large,
        sumtree_ratio: tl / ts,
        naive_ratio: nl / ns,
        sumtree_faster: tl < nl,
    })
}
