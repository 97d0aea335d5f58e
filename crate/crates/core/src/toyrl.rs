//! Tabular Q-learning with experience replay on a slippery chain.
//!
//! States `0..n`, actions left (0) and right (1). The chosen direction is
//! flipped with probability `slip_prob`. Moving right from the last state
//! ends the episode with `terminal_reward`; every other reward is zero and
//! moving left from state 0 stays put. Episodes start in state 0 and are
//! truncated after `10·n` steps.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::losses::{per_eta, DatasetStats, LossKind, LossSpec};
use crate::numeric::abs_pow;
use crate::replay::{ReplayBuffer, SchemeConfig, Transition};
use crate::rng::{below, derive_seed, seeded, unit_f64};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const ACTIONS: usize = 2;

pub type QTable = Vec<[f64; ACTIONS]>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainMdp {
    pub n_states: usize,
    pub slip_prob: f64,
    pub gamma: f64,
    pub terminal_reward: f64,
}

/// One possible outcome of an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

impl ChainMdp {
    pub fn new(n_states: usize, slip_prob: f64, gamma: f64) -> Result<Self> {
        let mdp = ChainMdp {
            n_states,
            slip_prob,
            gamma,
            terminal_reward: 1.0,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(invalid(format!("chain needs at least 2 states, got {}", self.n_states)));
        }
        if !(0.0..0.5).contains(&self.slip_prob) {
            return Err(invalid(format!("slip probability must lie in [0, 0.5), got {}", self.slip_prob)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !self.terminal_reward.is_finite() {
            return Err(invalid("terminal reward must be finite"));
        }
        Ok(())
    }

    pub fn episode_cap(&self) -> usize {
        10 * self.n_states
    }

    fn move_in(&self, state: usize, direction: usize) -> (f64, usize, bool) {
        if direction == RIGHT {
            if state + 1 == self.n_states {
                (self.terminal_reward, state, true)
            } else {
                (0.0, state + 1, false)
            }
        } else {
            (0.0, state.saturating_sub(1), false)
        }
    }

    /// The (at most two) outcomes of taking `action` in `state`.
    pub fn outcomes(&self, state: usize, action: usize) -> [Outcome; 2] {
        let intended = self.move_in(state, action);
        let slipped = self.move_in(state, 1 - action);
        let make = |prob, (reward, next_state, terminal)| Outcome {
            prob,
            reward,
            next_state,
            terminal,
        };
        [make(1.0 - self.slip_prob, intended), make(self.slip_prob, slipped)]
    }

    /// Samples one transition.
    pub fn step<R: RngCore + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> Transition {
        let direction = if unit_f64(rng) < self.slip_prob { 1 - action } else { action };
        let (reward, next_state, terminal) = self.move_in(state, direction);
        Transition {
            state,
            action,
            reward,
            next_state,
            terminal,
        }
    }
}

/// Online and target action-value tables.
#[derive(Debug, Clone, PartialEq)]
pub struct QTables {
    pub online: QTable,
    pub target: QTable,
}

impl QTables {
    pub fn zeros(n_states: usize) -> Self {
        QTables {
            online: vec![[0.0; ACTIONS]; n_states],
            target: vec![[0.0; ACTIONS]; n_states],
        }
    }

    pub fn copy_target(&mut self) {
        self.target.clone_from(&self.online);
    }
}

/// Greedy action; ties go to the lowest action id.
pub fn greedy_action(row: &[f64; ACTIONS]) -> usize {
    if row[RIGHT] > row[LEFT] {
        RIGHT
    } else {
        LEFT
    }
}

fn row_max(row: &[f64; ACTIONS]) -> f64 {
    row[LEFT].max(row[RIGHT])
}

/// Optimal action values by value iteration, stopping once the sup-norm
/// Bellman residual is at most `tolerance`.
pub fn value_iteration(mdp: &ChainMdp, tolerance: f64) -> Result<QTable> {
    mdp.validate()?;
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(invalid("tolerance must be positive"));
    }
    let mut q: QTable = vec![[0.0; ACTIONS]; mdp.n_states];
    loop {
        let mut next = q.clone();
        let mut residual = 0.0f64;
        for (s, row) in next.iter_mut().enumerate() {
            for (a, value) in row.iter_mut().enumerate() {
                *value = mdp
                    .outcomes(s, a)
                    .iter()
                    .map(|o| {
                        let cont = if o.terminal { 0.0 } else { mdp.gamma * row_max(&q[o.next_state]) };
                        o.prob * (o.reward + cont)
                    })
                    .sum();
                residual = residual.max((*value - q[s][a]).abs());
            }
        }
        q = next;
        if residual <= tolerance {
            return Ok(q);
        }
    }
}

/// `δ = Q(s,a) − (r + γ·max_a' Q_target(s',a'))`, with no bootstrap on
/// terminal transitions.
pub fn td_error(q: &QTables, t: &Transition, gamma: f64) -> f64 {
    let bootstrap = if t.terminal { 0.0 } else { gamma * row_max(&q.target[t.next_state]) };
    q.online[t.state][t.action] - (t.reward + bootstrap)
}

/// Mean undiscounted return of the greedy policy over `episodes` episodes.
pub fn greedy_eval<R: RngCore + ?Sized>(mdp: &ChainMdp, q: &QTable, episodes: usize, rng: &mut R) -> f64 {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = 0;
        for _ in 0..mdp.episode_cap() {
            let t = mdp.step(state, greedy_action(&q[state]), rng);
            total += t.reward;
            if t.terminal {
                break;
            }
            state = t.next_state;
        }
    }
    total / episodes.max(1) as f64
}

pub fn max_abs_error(q: &QTable, reference: &QTable) -> f64 {
    q.iter()
        .zip(reference)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: SchemeConfig,
    pub loss: LossSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_copy_period: usize,
    pub buffer_capacity: usize,
    pub exploration_epsilon: f64,
    pub seed: u64,
    pub eval_period: usize,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: SchemeConfig::uniform(),
            loss: LossSpec::mse(),
            steps: 20_000,
            batch_size: 32,
            learning_rate: 0.05,
            target_copy_period: 100,
            buffer_capacity: 10_000,
            exploration_epsilon: 0.2,
            seed: 0,
            eval_period: 1_000,
            eval_episodes: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 || self.target_copy_period == 0 || self.buffer_capacity == 0 {
            return Err(invalid("batch size, target copy period and buffer capacity must be positive"));
        }
        if self.eval_period == 0 || self.eval_episodes == 0 {
            return Err(invalid("eval period and eval episodes must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.exploration_epsilon) {
            return Err(invalid("exploration epsilon must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Steps of uniformly random acting, and transitions stored before the
    /// first update.
    pub fn warmup(&self) -> usize {
        self.batch_size.max(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub mean_return: f64,
    pub max_q_error: f64,
}

pub const EVAL_CSV_HEADER: &str = "step,mean_return,max_q_error";

pub fn write_eval_csv<W: Write>(records: &[EvalRecord], mut w: W) -> Result<()> {
    writeln!(w, "{EVAL_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{}", r.step, r.mean_return, r.max_q_error)?;
    }
    Ok(())
}

/// Everything a training run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EvalRecord>,
    pub tables: QTables,
    pub buffer: ReplayBuffer<Transition>,
    pub optimal: QTable,
}

/// Dataset statistics for `loss` estimated from one batch of errors. PAL
/// uses the batch mean of `max(|δ|^α, κ^α)`; the PER power loss uses η of
/// the non-zero errors.
pub fn batch_stats(loss: &LossSpec, deltas: &[f64]) -> Result<Option<DatasetStats>> {
    match loss.kind {
        LossKind::Pal => {
            let floor = loss.kappa.powf(loss.alpha);
            let lambda = deltas.iter().map(|&d| abs_pow(d, loss.alpha).max(floor)).sum::<f64>()
                / deltas.len() as f64;
            Ok(Some(DatasetStats::new(lambda, 1.0, deltas.len())?))
        }
        LossKind::PerTau => {
            let nonzero: Vec<f64> = deltas.iter().copied().filter(|&d| d != 0.0).collect();
            if nonzero.is_empty() {
                return Ok(Some(DatasetStats::new(1.0, 1.0, deltas.len())?));
            }
            let eta = per_eta(&nonzero, loss.alpha, loss.beta)?;
            Ok(Some(DatasetStats::new(1.0, eta, deltas.len())?))
        }
        _ => Ok(None),
    }
}

/// Applies `Q(s,a) ← Q(s,a) − lr·w·∇L(δ)` for each transition, with every δ
/// computed before any update. Returns the pre-update errors.
pub fn apply_updates(
    tables: &mut QTables,
    transitions: &[Transition],
    is_weights: &[f64],
    loss: &LossSpec,
    gamma: f64,
    learning_rate: f64,
) -> Result<Vec<f64>> {
    let deltas: Vec<f64> = transitions.iter().map(|t| td_error(tables, t, gamma)).collect();
    let stats = batch_stats(loss, &deltas)?;
    for ((t, &d), &w) in transitions.iter().zip(&deltas).zip(is_weights) {
        let g = loss.grad(d, stats.as_ref())?;
        tables.online[t.state][t.action] -= learning_rate * w * g;
    }
    Ok(deltas)
}

pub fn train(mdp: &ChainMdp, config: &TrainConfig) -> Result<Vec<EvalRecord>> {
    Ok(train_full(mdp, config)?.records)
}

pub fn train_full(mdp: &ChainMdp, config: &TrainConfig) -> Result<TrainOutcome> {
    mdp.validate()?;
    config.validate()?;
    let optimal = value_iteration(mdp, 1e-10)?;
    let mut act_rng = seeded(derive_seed(config.seed, 0));
    let mut sample_rng = seeded(derive_seed(config.seed, 1));
    let mut eval_rng = seeded(derive_seed(config.seed, 2));

    let mut tables = QTables::zeros(mdp.n_states);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, config.scheme)?;
    let mut records = Vec::new();
    let mut state = 0;
    let mut episode_len = 0;

    for step in 1..=config.steps {
        let exploring = step <= config.warmup() || unit_f64(&mut act_rng) < config.exploration_epsilon;
        let action = if exploring {
            below(&mut act_rng, ACTIONS as u64) as usize
        } else {
            greedy_action(&tables.online[state])
        };
        let t = mdp.step(state, action, &mut act_rng);
        buffer.add(t);
        episode_len += 1;
        if t.terminal || episode_len >= mdp.episode_cap() {
            state = 0;
            episode_len = 0;
        } else {
            state = t.next_state;
        }

        if buffer.len() >= config.warmup() {
            let batch = buffer.sample(config.batch_size, &mut sample_rng)?;
            let deltas = apply_updates(
                &mut tables,
                &batch.transitions,
                &batch.is_weights,
                &config.loss,
                mdp.gamma,
                config.learning_rate,
            )?;
            let abs: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
            buffer.update_priorities(&batch.indices, &abs)?;
        }

        if step % config.target_copy_period == 0 {
            tables.copy_target();
        }
        if step % config.eval_period == 0 || step == config.steps {
            records.push(EvalRecord {
                step,
                mean_return: greedy_eval(mdp, &tables.online, config.eval_episodes, &mut eval_rng),
                max_q_error: max_abs_error(&tables.online, &optimal),
            });
        }
    }
    Ok(TrainOutcome {
        records,
        tables,
        buffer,
        optimal,
    })
}
