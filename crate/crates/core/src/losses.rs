//! Loss functions on the TD error and their closed-form gradients with
//! respect to the value estimate.
//!
//! | kind   | value                                        | gradient                              |
//! |--------|----------------------------------------------|---------------------------------------|
//! | L1     | `|δ|`                                        | `sign(δ)`                             |
//! | MSE    | `δ²/2`                                       | `δ`                                   |
//! | Huber  | `δ²/2` if `|δ| ≤ κ`, else `κ(|δ| − κ/2)`      | `δ` or `κ·sign(δ)`                    |
//! | PAL    | `(1/λ)·κ^α δ²/2`, else `(1/λ)·κ|δ|^{1+α}/(1+α)` | `(1/λ)·κ^α δ` or `(1/λ)·κ|δ|^α sign(δ)` |
//! | PERTau | `ηN/e · |δ|^e`, `e = τ + α − αβ`              | `ηN · sign(δ)|δ|^{e−1}`               |
//!
//! `sign(0) = 0` everywhere, so a zero error is a fixed point of every loss.
//! PAL's value jumps at `|δ| = κ` when `α ≠ 1`; its gradient is continuous.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{abs_pow, sign, sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    Mse,
    Huber,
    Pal,
    PerTau,
}

impl LossKind {
    pub fn needs_stats(self) -> bool {
        matches!(self, LossKind::Pal | LossKind::PerTau)
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "mse" => Ok(LossKind::Mse),
            "huber" => Ok(LossKind::Huber),
            "pal" => Ok(LossKind::Pal),
            "pertau" | "per-tau" | "per_tau" => Ok(LossKind::PerTau),
            other => Err(invalid(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// A loss function and its parameters. Parameters that do not apply to
/// `kind` are carried but never read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub kappa: f64,
    pub alpha: f64,
    pub tau: f64,
    pub beta: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::Mse,
            kappa: 1.0,
            alpha: 0.0,
            tau: 2.0,
            beta: 0.0,
        }
    }
}

/// Dataset statistics required by the PAL and PER-equivalent losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Mean priority `Σ pr(j) / N`.
    pub lambda: f64,
    /// `min_j |δ_j|^{αβ} / Σ_j |δ_j|^α`.
    pub eta: f64,
    pub n: usize,
}

impl DatasetStats {
    pub fn new(lambda: f64, eta: f64, n: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid(format!("eta must be positive, got {eta}")));
        }
        if n == 0 {
            return Err(invalid("dataset size must be positive"));
        }
        Ok(DatasetStats { lambda, eta, n })
    }

    /// The statistics `spec` needs, computed from the current errors. Fields
    /// the loss does not use are set to 1, so a PAL dataset may contain zeros.
    pub fn for_loss(spec: &LossSpec, deltas: &[f64]) -> Result<Self> {
        if deltas.is_empty() {
            return Err(invalid("empty delta set"));
        }
        let (lambda, eta) = match spec.kind {
            LossKind::Pal => (pal_lambda(deltas, spec.alpha, spec.kappa)?, 1.0),
            LossKind::PerTau => (1.0, per_eta(deltas, spec.alpha, spec.beta)?),
            _ => (1.0, 1.0),
        };
        DatasetStats::new(lambda, eta, deltas.len())
    }
}

impl LossSpec {
    pub fn l1() -> Self {
        LossSpec {
            kind: LossKind::L1,
            ..Default::default()
        }
    }

    pub fn mse() -> Self {
        LossSpec::default()
    }

    pub fn huber(kappa: f64) -> Self {
        LossSpec {
            kind: LossKind::Huber,
            kappa,
            ..Default::default()
        }
    }

    pub fn pal(alpha: f64, kappa: f64) -> Self {
        LossSpec {
            kind: LossKind::Pal,
            kappa,
            alpha,
            ..Default::default()
        }
    }

    pub fn per_tau(tau: f64, alpha: f64, beta: f64) -> Self {
        LossSpec {
            kind: LossKind::PerTau,
            tau,
            alpha,
            beta,
            ..Default::default()
        }
    }

    /// Power of `|δ|` in the PER-equivalent loss.
    pub fn per_exponent(&self) -> f64 {
        self.tau + self.alpha - self.alpha * self.beta
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        match self.kind {
            LossKind::L1 | LossKind::Mse => Ok(()),
            LossKind::Huber => positive("kappa", self.kappa),
            LossKind::Pal => {
                positive("kappa", self.kappa)?;
                unit("alpha", self.alpha)
            }
            LossKind::PerTau => {
                positive("tau", self.tau)?;
                unit("alpha", self.alpha)?;
                unit("beta", self.beta)?;
                let e = self.per_exponent();
                if e > 0.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("tau + alpha - alpha*beta must be positive, got {e}")))
                }
            }
        }
    }

    fn stats<'a>(&self, stats: Option<&'a DatasetStats>) -> Result<Option<&'a DatasetStats>> {
        if self.kind.needs_stats() && stats.is_none() {
            return Err(invalid(format!("{:?} loss requires dataset statistics", self.kind)));
        }
        Ok(stats)
    }

    /// Loss value at TD error `delta`.
    pub fn value(&self, delta: f64, stats: Option<&DatasetStats>) -> Result<f64> {
        check_delta(delta)?;
        self.validate()?;
        let stats = self.stats(stats)?;
        let a = delta.abs();
        Ok(match self.kind {
            LossKind::L1 => a,
            LossKind::Mse => 0.5 * delta * delta,
            LossKind::Huber => huber_value(delta, self.kappa),
            LossKind::Pal => {
                let s = stats.expect("checked");
                let inner = if a <= self.kappa {
                    0.5 * self.kappa.powf(self.alpha) * delta * delta
                } else {
                    self.kappa * a.powf(1.0 + self.alpha) / (1.0 + self.alpha)
                };
                inner / s.lambda
            }
            LossKind::PerTau => {
                let s = stats.expect("checked");
                let e = self.per_exponent();
                s.eta * s.n as f64 / e * a.powf(e)
            }
        })
    }

    /// Gradient of the loss with respect to the value estimate (δ = Q − y).
    pub fn grad(&self, delta: f64, stats: Option<&DatasetStats>) -> Result<f64> {
        check_delta(delta)?;
        self.validate()?;
        let stats = self.stats(stats)?;
        let a = delta.abs();
        Ok(match self.kind {
            LossKind::L1 => sign(delta),
            LossKind::Mse => delta,
            LossKind::Huber => huber_grad(delta, self.kappa),
            LossKind::Pal => {
                let s = stats.expect("checked");
                let inner = if a <= self.kappa {
                    self.kappa.powf(self.alpha) * delta
                } else {
                    self.kappa * a.powf(self.alpha) * sign(delta)
                };
                inner / s.lambda
            }
            LossKind::PerTau => {
                if delta == 0.0 {
                    return Ok(0.0);
                }
                let s = stats.expect("checked");
                s.eta * s.n as f64 * sign(delta) * a.powf(self.per_exponent() - 1.0)
            }
        })
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("TD error must be finite, got {delta}")))
    }
}

pub(crate) fn huber_value(delta: f64, kappa: f64) -> f64 {
    let a = delta.abs();
    if a <= kappa {
        0.5 * delta * delta
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

pub(crate) fn huber_grad(delta: f64, kappa: f64) -> f64 {
    if delta.abs() <= kappa {
        delta
    } else {
        kappa * sign(delta)
    }
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(invalid("empty delta set"));
    }
    if let Some(d) = deltas.iter().find(|d| !d.is_finite()) {
        return Err(invalid(format!("TD error must be finite, got {d}")));
    }
    Ok(())
}

/// Mean LAP priority `Σ_j max(|δ_j|^α, κ^α) / N`, the PAL scale λ.
pub fn pal_lambda(deltas: &[f64], alpha: f64, kappa: f64) -> Result<f64> {
    check_deltas(deltas)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    positive("kappa", kappa)?;
    let floor = kappa.powf(alpha);
    let total = sum(deltas.iter().map(|&d| abs_pow(d, alpha).max(floor)));
    Ok(total / deltas.len() as f64)
}

/// PER-equivalent loss coefficient `min_j |δ_j|^{αβ} / Σ_j |δ_j|^α`.
///
/// Fails with a domain error if any error is exactly zero.
pub fn per_eta(deltas: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    check_deltas(deltas)?;
    if deltas.contains(&0.0) {
        return Err(Error::Domain("eta is undefined when a TD error is zero".into()));
    }
    let min_abs = deltas.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    let denom = sum(deltas.iter().map(|&d| abs_pow(d, alpha)));
    Ok(min_abs.powf(alpha * beta) / denom)
}

/// Step-size schedule for [`minimize_scalar`].
#[derive(Debug, Clone, Copy)]
pub enum StepSchedule {
    Constant(f64),
    /// `scale / (t + 1)` at iteration `t`.
    Harmonic(f64),
}

/// Gradient descent on a single scalar `Q` minimising `mean_i loss(Q − y_i)`,
/// starting from `Q = 0`.
pub fn minimize_scalar(
    spec: &LossSpec,
    targets: &[f64],
    iterations: usize,
    schedule: StepSchedule,
) -> Result<f64> {
    check_deltas(targets)?;
    let mut q = 0.0;
    for t in 0..iterations {
        let deltas: Vec<f64> = targets.iter().map(|y| q - y).collect();
        let stats = if spec.kind.needs_stats() {
            Some(DatasetStats::for_loss(spec, &deltas)?)
        } else {
            None
        };
        let grads = deltas
            .iter()
            .map(|&d| spec.grad(d, stats.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let g = sum(grads) / targets.len() as f64;
        let step = match schedule {
            StepSchedule::Constant(s) => s,
            StepSchedule::Harmonic(s) => s / (t as f64 + 1.0),
        };
        q -= step * g;
    }
    Ok(q)
}
