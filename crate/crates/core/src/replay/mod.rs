//! Ring-buffer experience replay with Uniform, PER and LAP priority schemes.

mod snapshot;

pub use snapshot::{SlotPayload, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sumtree::SumTree;

/// One tabular transition `(s, a, r, s', terminal)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Uniform,
    Per,
    Lap,
}

impl SchemeKind {
    pub fn tag(self) -> u8 {
        match self {
            SchemeKind::Uniform => 0,
            SchemeKind::Per => 1,
            SchemeKind::Lap => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(SchemeKind::Uniform),
            1 => Some(SchemeKind::Per),
            2 => Some(SchemeKind::Lap),
            _ => None,
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(SchemeKind::Uniform),
            "per" => Ok(SchemeKind::Per),
            "lap" => Ok(SchemeKind::Lap),
            other => Err(invalid(format!("unknown priority scheme `{other}`"))),
        }
    }
}

/// Linear schedule taking β from `start` to 1 over `end_step` sampling steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaAnneal {
    pub start: f64,
    pub end_step: u64,
}

/// Priority scheme and its hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Priority exponent α.
    pub alpha: f64,
    /// Importance-sampling exponent β (PER only).
    pub beta: f64,
    /// Additive priority floor ε (PER only).
    pub epsilon: f64,
    /// Priority clip threshold κ (LAP only).
    pub kappa: f64,
    pub beta_anneal: Option<BetaAnneal>,
}

impl SchemeConfig {
    pub fn uniform() -> Self {
        SchemeConfig {
            kind: SchemeKind::Uniform,
            alpha: 0.0,
            beta: 0.0,
            epsilon: 0.0,
            kappa: 1.0,
            beta_anneal: None,
        }
    }

    /// PER with α = 0.6, β = 0.4, ε = 1e-10.
    pub fn per() -> Self {
        SchemeConfig {
            kind: SchemeKind::Per,
            alpha: 0.6,
            beta: 0.4,
            epsilon: 1e-10,
            ..SchemeConfig::uniform()
        }
    }

    /// LAP with the continuous-control defaults α = 0.4, κ = 1.
    pub fn lap() -> Self {
        SchemeConfig {
            kind: SchemeKind::Lap,
            alpha: 0.4,
            ..SchemeConfig::uniform()
        }
    }

    /// LAP with the Atari defaults α = 0.6, κ = 0.01.
    pub fn lap_atari() -> Self {
        SchemeConfig {
            alpha: 0.6,
            kappa: 0.01,
            ..SchemeConfig::lap()
        }
    }

    pub fn default_for(kind: SchemeKind) -> Self {
        match kind {
            SchemeKind::Uniform => SchemeConfig::uniform(),
            SchemeKind::Per => SchemeConfig::per(),
            SchemeKind::Lap => SchemeConfig::lap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if let Some(a) = self.beta_anneal {
            unit("beta_anneal.start", a.start)?;
        }
        Ok(())
    }

    /// Priority for a transition with absolute TD error `abs_delta`.
    pub fn priority_of(&self, abs_delta: f64) -> f64 {
        match self.kind {
            SchemeKind::Uniform => 1.0,
            SchemeKind::Per => abs_delta.powf(self.alpha) + self.epsilon,
            SchemeKind::Lap => abs_delta.powf(self.alpha).max(self.kappa.powf(self.alpha)),
        }
    }

    /// β in force at sampling step `step`.
    pub fn effective_beta(&self, step: u64) -> f64 {
        match self.beta_anneal {
            None => self.beta,
            Some(BetaAnneal { start, end_step }) => {
                if end_step == 0 || step >= end_step {
                    1.0
                } else {
                    let frac = step as f64 / end_step as f64;
                    (start + (1.0 - start) * frac).min(1.0)
                }
            }
        }
    }

    fn initial_max_priority(&self) -> f64 {
        match self.kind {
            SchemeKind::Lap => self.kappa.powf(self.alpha).max(1.0),
            _ => 1.0,
        }
    }
}

/// Result of [`ReplayBuffer::sample`]. All vectors are parallel, one entry per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    pub indices: Vec<usize>,
    pub transitions: Vec<T>,
    /// Sampling probability `p(i)` of each drawn slot.
    pub probabilities: Vec<f64>,
    /// Importance-sampling weights, normalised so the batch maximum is 1
    /// under PER; identically 1 otherwise.
    pub is_weights: Vec<f64>,
}

/// Fixed-capacity ring buffer whose slots are sampled proportionally to
/// their priority.
///
/// New entries receive the largest priority ever assigned (initially 1).
/// Writers must be serialised; `&self` sampling methods may run
/// concurrently between writes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    cursor: usize,
    storage: Vec<T>,
    tree: SumTree,
    max_priority_seen: f64,
    scheme: SchemeConfig,
    sample_steps: u64,
    stratified: bool,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize, scheme: SchemeConfig) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("buffer capacity must be positive"));
        }
        scheme.validate()?;
        Ok(ReplayBuffer {
            capacity,
            cursor: 0,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            tree: SumTree::new(capacity)?,
            max_priority_seen: scheme.initial_max_priority(),
            scheme,
            sample_steps: 0,
            stratified: false,
        })
    }

    /// Switches between i.i.d. (default) and stratified draws.
    pub fn with_stratified(mut self, stratified: bool) -> Self {
        self.stratified = stratified;
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn scheme(&self) -> &SchemeConfig {
        &self.scheme
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn max_priority_seen(&self) -> f64 {
        self.max_priority_seen
    }

    /// Number of completed [`ReplayBuffer::sample`] calls; drives β annealing.
    pub fn sample_steps(&self) -> u64 {
        self.sample_steps
    }

    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }

    pub fn get(&self, slot: usize) -> Option<&T> {
        self.storage.get(slot)
    }

    pub fn priority(&self, slot: usize) -> Option<f64> {
        (slot < self.len()).then(|| self.tree.priorities()[slot])
    }

    /// Priorities of the in-use slots.
    pub fn priorities(&self) -> &[f64] {
        &self.tree.priorities()[..self.len()]
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Stores `item` at the write cursor and returns its slot.
    pub fn add(&mut self, item: T) -> usize {
        let slot = self.cursor;
        if slot < self.storage.len() {
            self.storage[slot] = item;
        } else {
            self.storage.push(item);
        }
        let p = match self.scheme.kind {
            SchemeKind::Uniform => 1.0,
            _ => self.max_priority_seen,
        };
        self.tree.set(slot, p).expect("slot within tree and priority valid");
        self.cursor = (self.cursor + 1) % self.capacity;
        slot
    }

    /// Sets each slot's priority from its absolute TD error.
    pub fn update_priorities(&mut self, slots: &[usize], abs_deltas: &[f64]) -> Result<()> {
        if slots.len() != abs_deltas.len() {
            return Err(invalid(format!(
                "{} slots but {} errors",
                slots.len(),
                abs_deltas.len()
            )));
        }
        for (&slot, &d) in slots.iter().zip(abs_deltas) {
            if slot >= self.len() {
                return Err(invalid(format!("slot {slot} not in use (len {})", self.len())));
            }
            if !(d >= 0.0 && d.is_finite()) {
                return Err(invalid(format!("absolute TD error must be finite and non-negative, got {d}")));
            }
        }
        for (&slot, &d) in slots.iter().zip(abs_deltas) {
            let p = self.scheme.priority_of(d);
            self.tree.set(slot, p)?;
            self.max_priority_seen = self.max_priority_seen.max(p);
        }
        Ok(())
    }

    /// Samples with the annealed β for the current step, then advances the step.
    pub fn sample<R: RngCore + ?Sized>(&mut self, batch_size: usize, rng: &mut R) -> Result<SampleBatch<T>> {
        let beta = self.scheme.effective_beta(self.sample_steps);
        let batch = self.sample_with_beta(batch_size, beta, rng)?;
        self.sample_steps += 1;
        Ok(batch)
    }

    /// Samples `batch_size` slots with an explicit IS exponent.
    pub fn sample_with_beta<R: RngCore + ?Sized>(
        &self,
        batch_size: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SampleBatch<T>> {
        if self.is_empty() {
            return Err(Error::EmptyStructure("replay buffer is empty"));
        }
        if batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        let indices = self.tree.sample_batch(batch_size, rng, self.stratified)?;
        let total = self.tree.total();
        let leaves = self.tree.priorities();
        let probabilities: Vec<f64> = indices.iter().map(|&i| leaves[i] / total).collect();
        let is_weights = match self.scheme.kind {
            SchemeKind::Per => per_batch_weights(&probabilities, self.len(), beta),
            _ => vec![1.0; batch_size],
        };
        let transitions = indices.iter().map(|&i| self.storage[i].clone()).collect();
        Ok(SampleBatch {
            indices,
            transitions,
            probabilities,
            is_weights,
        })
    }
}

/// `ŵ(i) = (1 / (count·p(i)))^β`, divided by the batch maximum.
pub fn per_batch_weights(probabilities: &[f64], count: usize, beta: f64) -> Vec<f64> {
    let raw: Vec<f64> = probabilities
        .iter()
        .map(|&p| (1.0 / (count as f64 * p)).powf(beta))
        .collect();
    let max = raw.iter().copied().fold(0.0f64, f64::max);
    raw.into_iter().map(|w| w / max).collect()
}
