//! Numeric certification that prioritized sampling and re-weighted uniform
//! losses share expected gradients, and comparison of their gradient
//! variances.
//!
//! Exact checks enumerate the finite error set and use compensated
//! summation, so two algebraically equal expectations agree to near machine
//! precision even for `N` around a thousand with errors spanning several
//! orders of magnitude. Monte Carlo checks run the same quantities through a
//! real [`ReplayBuffer`].

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::Value;

use crate::error::{invalid, Error, Result};
use crate::losses::{huber_grad, per_eta, DatasetStats, LossSpec};
use crate::numeric::{abs_pow, sign, sum};
use crate::replay::{per_batch_weights, ReplayBuffer, SchemeConfig, SchemeKind};
use crate::rng::unit_f64;

/// Current TD errors of a finite dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSet(Vec<f64>);

impl DeltaSet {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(invalid("delta set must be non-empty"));
        }
        if let Some(d) = deltas.iter().find(|d| !d.is_finite()) {
            return Err(invalid(format!("TD error must be finite, got {d}")));
        }
        Ok(DeltaSet(deltas))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn has_zero(&self) -> bool {
        self.0.contains(&0.0)
    }

    fn require_nonzero(&self) -> Result<()> {
        if self.has_zero() {
            Err(Error::Domain("check requires every TD error to be non-zero".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
}

impl Tolerance {
    pub const fn new(atol: f64, rtol: f64) -> Self {
        Tolerance { atol, rtol }
    }
}

/// Outcome of comparing a uniform-side and a prioritized-side expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub lhs_expected_grad: f64,
    pub rhs_expected_grad: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub pass: bool,
}

impl EquivalenceReport {
    pub fn compare(lhs: f64, rhs: f64, tol: Tolerance) -> Self {
        let abs_diff = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        let rel_diff = if scale > 0.0 { abs_diff / scale } else { 0.0 };
        EquivalenceReport {
            lhs_expected_grad: lhs,
            rhs_expected_grad: rhs,
            abs_diff,
            rel_diff,
            pass: abs_diff <= tol.atol || rel_diff <= tol.rtol,
        }
    }

    /// Same comparison with `delta` added to the uniform side.
    pub fn perturbed(self, delta: f64, tol: Tolerance) -> Self {
        Self::compare(self.lhs_expected_grad + delta, self.rhs_expected_grad, tol)
    }
}

/// Exact gradient variance of one candidate pair against the uniform baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub candidate: String,
    /// Power `c` of the candidate gradient `sign(δ)|δ|^c`.
    pub exponent: f64,
    pub uniform_variance: f64,
    pub prioritized_variance: f64,
    pub pass: bool,
}

/// How draws are distributed over the dataset.
#[derive(Debug, Clone, Copy)]
pub enum Sampling<'a> {
    Uniform,
    /// Proportional to the given non-negative priorities.
    Prioritized(&'a [f64]),
}

fn grads(ds: &DeltaSet, loss: &LossSpec) -> Result<Vec<f64>> {
    let stats = if loss.kind.needs_stats() {
        Some(DatasetStats::for_loss(loss, ds.as_slice())?)
    } else {
        None
    };
    ds.as_slice().iter().map(|&d| loss.grad(d, stats.as_ref())).collect()
}

fn probabilities(priorities: &[f64], n: usize) -> Result<Vec<f64>> {
    if priorities.len() != n {
        return Err(invalid(format!("{} priorities for {n} errors", priorities.len())));
    }
    if let Some(p) = priorities.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
        return Err(invalid(format!("priority must be finite and non-negative, got {p}")));
    }
    let total = sum(priorities.iter().copied());
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution("priorities sum to zero".into()));
    }
    Ok(priorities.iter().map(|p| p / total).collect())
}

fn weights(sampling: Sampling<'_>, n: usize) -> Result<Vec<f64>> {
    match sampling {
        Sampling::Uniform => Ok(vec![1.0 / n as f64; n]),
        Sampling::Prioritized(pr) => probabilities(pr, n),
    }
}

fn weighted_mean(values: &[f64], probs: &[f64]) -> f64 {
    sum(values.iter().zip(probs).map(|(v, p)| v * p))
}

/// `E_{i∼U}[∇L(δ_i)]`, the plain mean gradient.
pub fn expected_grad_uniform(ds: &DeltaSet, loss: &LossSpec) -> Result<f64> {
    let g = grads(ds, loss)?;
    Ok(sum(g) / ds.len() as f64)
}

/// `Σ_i pr(i)/Σ_j pr(j) · ∇L(δ_i)`.
pub fn expected_grad_prioritized(ds: &DeltaSet, loss: &LossSpec, priorities: &[f64]) -> Result<f64> {
    let p = probabilities(priorities, ds.len())?;
    let g = grads(ds, loss)?;
    Ok(weighted_mean(&g, &p))
}

/// Uniform expectation of the stop-gradient transformed loss
/// `(1/λ)·pr(i)·L(δ_i)`, whose gradient is `(1/λ)·pr(i)·∇L(δ_i)`.
pub fn stop_gradient_expected_grad(ds: &DeltaSet, loss: &LossSpec, priorities: &[f64]) -> Result<f64> {
    probabilities(priorities, ds.len())?;
    let lambda = sum(priorities.iter().copied()) / ds.len() as f64;
    let g = grads(ds, loss)?;
    Ok(sum(g.iter().zip(priorities).map(|(g, pr)| pr * g / lambda)) / ds.len() as f64)
}

/// LAP priorities `max(|δ|^α, κ^α)`.
pub fn lap_priorities(ds: &DeltaSet, alpha: f64, kappa: f64) -> Vec<f64> {
    let floor = kappa.powf(alpha);
    ds.as_slice().iter().map(|&d| abs_pow(d, alpha).max(floor)).collect()
}

/// Uniform PAL against LAP-sampled Huber.
pub fn check_lap_pal(ds: &DeltaSet, alpha: f64, kappa: f64, tol: Tolerance) -> Result<EquivalenceReport> {
    let pal = LossSpec::pal(alpha, kappa);
    pal.validate()?;
    let lhs = expected_grad_uniform(ds, &pal)?;
    let rhs = expected_grad_prioritized(ds, &LossSpec::huber(kappa), &lap_priorities(ds, alpha, kappa))?;
    Ok(EquivalenceReport::compare(lhs, rhs, tol))
}

/// Uniform MSE against `λ·L1` sampled with priority `|δ|`, `λ = Σ|δ|/N`.
pub fn check_mse_l1(ds: &DeltaSet, tol: Tolerance) -> Result<EquivalenceReport> {
    let pr: Vec<f64> = ds.as_slice().iter().map(|d| d.abs()).collect();
    let lambda = sum(pr.iter().copied()) / ds.len() as f64;
    if lambda <= 0.0 {
        return Err(Error::DegenerateDistribution("all TD errors are zero".into()));
    }
    let lhs = expected_grad_uniform(ds, &LossSpec::mse())?;
    let rhs = lambda * expected_grad_prioritized(ds, &LossSpec::l1(), &pr)?;
    Ok(EquivalenceReport::compare(lhs, rhs, tol))
}

/// PER sampling probabilities `|δ|^α / Σ|δ|^α` and IS weights normalised
/// by the maximum over the whole dataset.
pub fn per_global_weights(ds: &DeltaSet, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let pr: Vec<f64> = ds.as_slice().iter().map(|&d| abs_pow(d, alpha)).collect();
    let p = probabilities(&pr, ds.len())?;
    let n = ds.len() as f64;
    let raw: Vec<f64> = p.iter().map(|&p| (1.0 / (n * p)).powf(beta)).collect();
    let max = raw.iter().copied().fold(0.0f64, f64::max);
    Ok((p, raw.into_iter().map(|w| w / max).collect()))
}

fn per_rhs(ds: &DeltaSet, alpha: f64, beta: f64, base_grad: impl Fn(f64) -> f64) -> Result<f64> {
    let (p, w) = per_global_weights(ds, alpha, beta)?;
    Ok(sum(ds
        .as_slice()
        .iter()
        .zip(p.iter().zip(&w))
        .map(|(&d, (p, w))| w * p * base_grad(d))))
}

fn per_params(alpha: f64, beta: f64) -> Result<()> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(())
}

/// Uniform PER-equivalent power loss against PER-sampled, IS-weighted
/// `|δ|^τ/τ`.
pub fn check_per_equivalent_loss(
    ds: &DeltaSet,
    tau: f64,
    alpha: f64,
    beta: f64,
    tol: Tolerance,
) -> Result<EquivalenceReport> {
    ds.require_nonzero()?;
    per_params(alpha, beta)?;
    let spec = LossSpec::per_tau(tau, alpha, beta);
    spec.validate()?;
    let lhs = expected_grad_uniform(ds, &spec)?;
    let rhs = per_rhs(ds, alpha, beta, |d| sign(d) * abs_pow(d, tau - 1.0))?;
    Ok(EquivalenceReport::compare(lhs, rhs, tol))
}

/// Huber (κ = 1) variant: the power `τ` is 2 inside the knee and 1 outside.
pub fn check_per_huber_equivalent_loss(
    ds: &DeltaSet,
    alpha: f64,
    beta: f64,
    tol: Tolerance,
) -> Result<EquivalenceReport> {
    ds.require_nonzero()?;
    per_params(alpha, beta)?;
    let eta = per_eta(ds.as_slice(), alpha, beta)?;
    let stats = DatasetStats::new(1.0, eta, ds.len())?;
    let lhs_terms = ds
        .as_slice()
        .iter()
        .map(|&d| {
            let tau = if d.abs() <= 1.0 { 2.0 } else { 1.0 };
            LossSpec::per_tau(tau, alpha, beta).grad(d, Some(&stats))
        })
        .collect::<Result<Vec<_>>>()?;
    let lhs = sum(lhs_terms) / ds.len() as f64;
    let rhs = per_rhs(ds, alpha, beta, |d| huber_grad(d, 1.0))?;
    Ok(EquivalenceReport::compare(lhs, rhs, tol))
}

fn variance(values: &[f64], probs: &[f64], scale: f64) -> f64 {
    let mean = scale * weighted_mean(values, probs);
    sum(values.iter().zip(probs).map(|(v, p)| {
        let d = scale * v - mean;
        p * d * d
    }))
}

/// Exact variance of `scale·∇L(δ_i)` with `i` drawn per `sampling`.
pub fn grad_variance(ds: &DeltaSet, loss: &LossSpec, sampling: Sampling<'_>, scale: f64) -> Result<f64> {
    let p = weights(sampling, ds.len())?;
    let g = grads(ds, loss)?;
    Ok(variance(&g, &p, scale))
}

/// A prioritized loss paired with a uniform one so both share an expected
/// gradient: gradients `∇L₂ = sign(δ)|δ|^c`, priorities `|∇L₁|/|δ|^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub exponent: f64,
    pub priorities: Vec<f64>,
    pub grads: Vec<f64>,
    /// Mean priority.
    pub lambda: f64,
}

pub fn candidate_pair(ds: &DeltaSet, base_loss: &LossSpec, exponent: f64) -> Result<CandidatePair> {
    ds.require_nonzero()?;
    candidate_pair_from_grads(ds, &grads(ds, base_loss)?, exponent)
}

/// As [`candidate_pair`], from precomputed base gradients.
pub fn candidate_pair_from_grads(ds: &DeltaSet, base: &[f64], exponent: f64) -> Result<CandidatePair> {
    ds.require_nonzero()?;
    if base.len() != ds.len() {
        return Err(invalid(format!("{} gradients for {} errors", base.len(), ds.len())));
    }
    let mut priorities = Vec::with_capacity(ds.len());
    let mut g2 = Vec::with_capacity(ds.len());
    for (&d, &g1) in ds.as_slice().iter().zip(base) {
        if sign(g1) != sign(d) {
            return Err(Error::InvalidPair(format!(
                "base gradient {g1} does not share the sign of error {d}"
            )));
        }
        let m = abs_pow(d, exponent);
        priorities.push(g1.abs() / m);
        g2.push(sign(d) * m);
    }
    let lambda = sum(priorities.iter().copied()) / ds.len() as f64;
    Ok(CandidatePair {
        exponent,
        priorities,
        grads: g2,
        lambda,
    })
}

/// `E_U[∇L₁]` against `E_pr[λ∇L₂]` for the pair built at `exponent`.
pub fn check_candidate_pair(
    ds: &DeltaSet,
    base_loss: &LossSpec,
    exponent: f64,
    tol: Tolerance,
) -> Result<EquivalenceReport> {
    let pair = candidate_pair(ds, base_loss, exponent)?;
    let lhs = expected_grad_uniform(ds, base_loss)?;
    let p = probabilities(&pair.priorities, ds.len())?;
    let rhs = pair.lambda * weighted_mean(&pair.grads, &p);
    Ok(EquivalenceReport::compare(lhs, rhs, tol))
}

fn exponent_label(c: f64) -> String {
    match c {
        0.0 => "L1".to_string(),
        1.0 => "MSE".to_string(),
        c => format!("power c={c}"),
    }
}

/// Gradient variance of each candidate pair, against the uniform variance of
/// `base_loss`. A candidate passes when its variance is no lower than the
/// L1 candidate's (`c = 0`); the L1 candidate itself must also not exceed
/// the uniform variance. `tol` is the relative slack on both comparisons.
pub fn variance_sweep(
    ds: &DeltaSet,
    base_loss: &LossSpec,
    exponents: &[f64],
    tol: f64,
) -> Result<Vec<VarianceReport>> {
    let uniform_variance = grad_variance(ds, base_loss, Sampling::Uniform, 1.0)?;
    let pair_variance = |c: f64| -> Result<f64> {
        let pair = candidate_pair(ds, base_loss, c)?;
        let p = probabilities(&pair.priorities, ds.len())?;
        Ok(variance(&pair.grads, &p, pair.lambda))
    };
    let l1_variance = pair_variance(0.0)?;
    exponents
        .iter()
        .map(|&c| {
            let prioritized_variance = pair_variance(c)?;
            let mut pass = prioritized_variance >= l1_variance - tol * (1.0 + l1_variance);
            if c == 0.0 {
                pass &= prioritized_variance <= uniform_variance + tol * (1.0 + uniform_variance);
            }
            Ok(VarianceReport {
                candidate: exponent_label(c),
                exponent: c,
                uniform_variance,
                prioritized_variance,
                pass,
            })
        })
        .collect()
}

/// Which maximum PER weights are divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsNormalization {
    /// Maximum over the sampled batch, as replay implementations do.
    Batch,
    /// Maximum over every stored transition.
    Global,
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloConfig {
    pub draws: usize,
    pub batch_size: usize,
    pub normalization: IsNormalization,
}

impl MonteCarloConfig {
    pub fn new(draws: usize) -> Self {
        MonteCarloConfig {
            draws,
            batch_size: 256,
            normalization: IsNormalization::Batch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Loads `ds` into a replay buffer, sets exact priorities from `|δ|`, and
/// averages IS-weighted gradients over `draws` sampled transitions.
pub fn monte_carlo_expected_grad<R: RngCore + ?Sized>(
    ds: &DeltaSet,
    scheme: &SchemeConfig,
    loss: &LossSpec,
    config: &MonteCarloConfig,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if config.draws == 0 || config.batch_size == 0 {
        return Err(invalid("draws and batch size must be positive"));
    }
    let g = grads(ds, loss)?;
    let mut buffer = ReplayBuffer::new(ds.len(), *scheme)?;
    for i in 0..ds.len() {
        buffer.add(i);
    }
    let slots: Vec<usize> = (0..ds.len()).collect();
    let abs: Vec<f64> = ds.as_slice().iter().map(|d| d.abs()).collect();
    buffer.update_priorities(&slots, &abs)?;

    let global_max = if scheme.kind == SchemeKind::Per && config.normalization == IsNormalization::Global {
        let total = buffer.total_priority();
        let min_p = buffer
            .priorities()
            .iter()
            .filter(|&&p| p > 0.0)
            .fold(f64::INFINITY, |m, &p| m.min(p / total));
        Some((1.0 / (ds.len() as f64 * min_p)).powf(scheme.beta))
    } else {
        None
    };

    let mut values = Vec::with_capacity(config.draws);
    while values.len() < config.draws {
        let b = config.batch_size.min(config.draws - values.len());
        let batch = buffer.sample_with_beta(b, scheme.beta, rng)?;
        let w = match (scheme.kind, global_max) {
            (SchemeKind::Per, Some(max)) => batch
                .probabilities
                .iter()
                .map(|&p| (1.0 / (ds.len() as f64 * p)).powf(scheme.beta) / max)
                .collect(),
            (SchemeKind::Per, None) => per_batch_weights(&batch.probabilities, ds.len(), scheme.beta),
            _ => batch.is_weights.clone(),
        };
        values.extend(batch.transitions.iter().zip(&w).map(|(&i, w)| w * g[i]));
    }
    let n = values.len() as f64;
    let mean = sum(values.iter().copied()) / n;
    let var = if values.len() > 1 {
        sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
    })
}

/// Random error set of size `1..=max_n`: an even mixture of `N(0,1)`,
/// `10·N(0,1)` and values sitting on or just beside `±κ`. Never contains 0.
pub fn random_delta_set<R: RngCore + ?Sized>(rng: &mut R, max_n: usize, kappa: f64) -> DeltaSet {
    let n = 1 + crate::rng::below(rng, max_n.max(1) as u64) as usize;
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let offsets = [0.0, 1e-12, 1e-9, 1e-6, 1e-3];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let d = match crate::rng::below(rng, 3) {
            0 => normal.sample(rng),
            1 => 10.0 * normal.sample(rng),
            _ => {
                let off = offsets[crate::rng::below(rng, offsets.len() as u64) as usize];
                let side = if unit_f64(rng) < 0.5 { -1.0 } else { 1.0 };
                let mag = kappa * (1.0 + side * off * unit_f64(rng));
                if unit_f64(rng) < 0.5 {
                    -mag
                } else {
                    mag
                }
            }
        };
        if d != 0.0 && d.is_finite() {
            out.push(d);
        }
    }
    DeltaSet(out)
}

/// One serialised check result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportLine {
    pub check: String,
    pub params: Value,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub pass: bool,
}

impl ReportLine {
    pub fn equivalence(check: &str, params: Value, r: &EquivalenceReport) -> Self {
        ReportLine {
            check: check.to_string(),
            params,
            lhs: r.lhs_expected_grad,
            rhs: r.rhs_expected_grad,
            abs_diff: r.abs_diff,
            rel_diff: r.rel_diff,
            pass: r.pass,
        }
    }

    /// `lhs` is the uniform variance, `rhs` the prioritized one.
    pub fn variance(check: &str, mut params: Value, r: &VarianceReport) -> Self {
        if let Value::Object(m) = &mut params {
            m.insert("candidate".into(), Value::from(r.candidate.clone()));
            m.insert("exponent".into(), Value::from(r.exponent));
        }
        let abs_diff = (r.uniform_variance - r.prioritized_variance).abs();
        let scale = r.uniform_variance.abs().max(r.prioritized_variance.abs());
        ReportLine {
            check: check.to_string(),
            params,
            lhs: r.uniform_variance,
            rhs: r.prioritized_variance,
            abs_diff,
            rel_diff: if scale > 0.0 { abs_diff / scale } else { 0.0 },
            pass: r.pass,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }

    pub const CSV_HEADER: &'static str = "check,params,lhs,rhs,abs_diff,rel_diff,pass";

    /// CSV row; `params` is rendered as `key=value` pairs joined by `;`.
    pub fn to_csv(&self) -> String {
        let params = match &self.params {
            Value::Object(m) => m
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}={s}"),
                    other => format!("{k}={other}"),
                })
                .collect::<Vec<_>>()
                .join(";"),
            other => other.to_string(),
        };
        format!(
            "{},{},{:e},{:e},{:e},{:e},{}",
            self.check, params, self.lhs, self.rhs, self.abs_diff, self.rel_diff, self.pass
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use serde_json::json;

    const EXACT: Tolerance = Tolerance::new(1e-12, 1e-12);

    fn ds(v: &[f64]) -> DeltaSet {
        DeltaSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn delta_set_validation() {
        assert!(DeltaSet::new(vec![]).is_err());
        assert!(DeltaSet::new(vec![1.0, f64::NAN]).is_err());
        assert!(ds(&[0.0, 1.0]).has_zero());
    }

    #[test]
    fn uniform_expectation_examples() {
        assert_eq!(expected_grad_uniform(&ds(&[-1.0, 1.0]), &LossSpec::mse()).unwrap(), 0.0);
        let e = expected_grad_uniform(&ds(&[0.5, 2.0]), &LossSpec::pal(1.0, 1.0)).unwrap();
        assert!((e - 5.0 / 6.0).abs() < 1e-15);
        let huber = LossSpec::huber(1.0);
        assert_eq!(
            expected_grad_uniform(&ds(&[0.3]), &huber).unwrap(),
            huber.grad(0.3, None).unwrap()
        );
    }

    #[test]
    fn prioritized_expectation_examples() {
        let d = ds(&[0.5, 2.0, -3.0]);
        let huber = LossSpec::huber(1.0);
        let u = expected_grad_uniform(&d, &huber).unwrap();
        let p = expected_grad_prioritized(&d, &huber, &[2.0, 2.0, 2.0]).unwrap();
        assert!((u - p).abs() < 1e-15);
        let e = expected_grad_prioritized(&ds(&[0.5, 2.0]), &huber, &[1.0, 2.0]).unwrap();
        assert!((e - 5.0 / 6.0).abs() < 1e-15);
        let one_hot = expected_grad_prioritized(&d, &huber, &[0.0, 0.0, 5.0]).unwrap();
        assert_eq!(one_hot, -1.0);
        assert!(matches!(
            expected_grad_prioritized(&d, &huber, &[0.0; 3]),
            Err(Error::DegenerateDistribution(_))
        ));
        assert!(expected_grad_prioritized(&d, &huber, &[1.0]).is_err());
    }

    #[test]
    fn lap_pal_examples() {
        let r = check_lap_pal(&ds(&[0.5, 2.0]), 1.0, 1.0, EXACT).unwrap();
        assert!(r.pass);
        assert!((r.lhs_expected_grad - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.rhs_expected_grad - 5.0 / 6.0).abs() < 1e-15);

        let d = ds(&[0.2, -4.0, 1.5, 9.0]);
        let r = check_lap_pal(&d, 0.0, 1.0, EXACT).unwrap();
        let huber = expected_grad_uniform(&d, &LossSpec::huber(1.0)).unwrap();
        assert!(r.pass);
        assert!((r.lhs_expected_grad - huber).abs() < 1e-15);
        assert!((r.rhs_expected_grad - huber).abs() < 1e-15);
    }

    #[test]
    fn mse_l1_examples() {
        let r = check_mse_l1(&ds(&[1.0, 3.0]), EXACT).unwrap();
        assert_eq!((r.lhs_expected_grad, r.rhs_expected_grad), (2.0, 2.0));
        let r = check_mse_l1(&ds(&[-2.0, 2.0]), EXACT).unwrap();
        assert_eq!((r.lhs_expected_grad, r.rhs_expected_grad), (0.0, 0.0));
        assert!(matches!(
            check_mse_l1(&ds(&[0.0, 0.0]), EXACT),
            Err(Error::DegenerateDistribution(_))
        ));
    }

    #[test]
    fn per_equivalent_examples() {
        let r = check_per_equivalent_loss(&ds(&[1.0, 2.0]), 1.0, 1.0, 0.0, EXACT).unwrap();
        assert!(r.pass);
        assert!((r.lhs_expected_grad - 1.0).abs() < 1e-15);
        assert!((r.rhs_expected_grad - 1.0).abs() < 1e-15);

        // α = 0: uniform sampling, unit weights, τ = 2 gives mean(δ).
        let d = ds(&[0.3, -1.2, 4.0]);
        let r = check_per_equivalent_loss(&d, 2.0, 0.0, 0.7, EXACT).unwrap();
        let mean = (0.3 - 1.2 + 4.0) / 3.0;
        assert!(r.pass);
        assert!((r.rhs_expected_grad - mean).abs() < 1e-15);

        // β = 1, τ = 2: both sides are ηN·mean(δ).
        let r = check_per_equivalent_loss(&d, 2.0, 0.6, 1.0, EXACT).unwrap();
        let eta = per_eta(d.as_slice(), 0.6, 1.0).unwrap();
        assert!(r.pass);
        assert!((r.lhs_expected_grad - eta * 3.0 * mean).abs() < 1e-14);

        assert!(matches!(
            check_per_equivalent_loss(&ds(&[0.0, 1.0]), 2.0, 0.6, 0.4, EXACT),
            Err(Error::Domain(_))
        ));
        let r = check_per_huber_equivalent_loss(&ds(&[0.4, -2.5, 1.0, 3.0]), 0.6, 0.4, EXACT).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn variance_examples() {
        let d = ds(&[1.0, 3.0]);
        let v = grad_variance(&d, &LossSpec::mse(), Sampling::Uniform, 1.0).unwrap();
        assert_eq!(v, 1.0);
        let v = grad_variance(&d, &LossSpec::l1(), Sampling::Prioritized(&[1.0, 3.0]), 2.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(grad_variance(&ds(&[4.2]), &LossSpec::mse(), Sampling::Uniform, 1.0).unwrap(), 0.0);

        let sweep = variance_sweep(&d, &LossSpec::mse(), &[0.0, 1.0], 1e-12).unwrap();
        assert_eq!(sweep[0].prioritized_variance, 0.0);
        assert_eq!(sweep[1].prioritized_variance, 1.0);
        assert_eq!(sweep[0].uniform_variance, 1.0);
        assert!(sweep.iter().all(|r| r.pass));
    }

    #[test]
    fn equal_magnitudes_tie() {
        let d = ds(&[2.0, -2.0, 2.0, 2.0]);
        let sweep = variance_sweep(&d, &LossSpec::mse(), &[0.0, 0.5, 1.0, 2.0], 1e-12).unwrap();
        for r in &sweep {
            assert!((r.prioritized_variance - sweep[0].prioritized_variance).abs() < 1e-12);
            assert!((r.prioritized_variance - r.uniform_variance).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_mismatch_is_an_invalid_pair() {
        let d = ds(&[1.0, -2.0]);
        assert!(candidate_pair_from_grads(&d, &[0.5, -1.0], 0.0).is_ok());
        assert!(matches!(
            candidate_pair_from_grads(&d, &[0.5, 1.0], 0.0),
            Err(Error::InvalidPair(_))
        ));
        assert!(matches!(
            candidate_pair_from_grads(&d, &[0.0, -1.0], 0.0),
            Err(Error::InvalidPair(_))
        ));
        assert!(matches!(candidate_pair(&ds(&[0.0, 1.0]), &LossSpec::mse(), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn stop_gradient_transform_reproduces_prioritized_expectation() {
        let mut rng = seeded(99);
        for _ in 0..200 {
            let d = random_delta_set(&mut rng, 64, 1.0);
            let pr = lap_priorities(&d, 0.4, 1.0);
            let huber = LossSpec::huber(1.0);
            let a = stop_gradient_expected_grad(&d, &huber, &pr).unwrap();
            let b = expected_grad_prioritized(&d, &huber, &pr).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn constructed_pairs_match_uniform_expectation() {
        let mut rng = seeded(5);
        for _ in 0..200 {
            let d = random_delta_set(&mut rng, 128, 1.0);
            for base in [LossSpec::mse(), LossSpec::huber(1.0), LossSpec::pal(0.4, 1.0)] {
                for c in [0.0, 0.5, 1.0, 2.0] {
                    let r = check_candidate_pair(&d, &base, c, Tolerance::new(0.0, 0.0)).unwrap();
                    assert!(r.abs_diff <= 1e-10 * (1.0 + r.lhs_expected_grad.abs()), "{r:?}");
                }
            }
        }
    }

    #[test]
    fn random_sets_have_no_zeros_and_respect_size() {
        let mut rng = seeded(0);
        for _ in 0..100 {
            let d = random_delta_set(&mut rng, 32, 1.0);
            assert!(!d.has_zero());
            assert!((1..=32).contains(&d.len()));
        }
    }

    #[test]
    fn monte_carlo_uniform_mse() {
        let d = ds(&[0.5, -1.5, 3.0, 0.1]);
        let mut rng = seeded(17);
        let est = monte_carlo_expected_grad(
            &d,
            &SchemeConfig::uniform(),
            &LossSpec::mse(),
            &MonteCarloConfig::new(100_000),
            &mut rng,
        )
        .unwrap();
        let mean = (0.5 - 1.5 + 3.0 + 0.1) / 4.0;
        assert!((est.estimate - mean).abs() <= 4.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn monte_carlo_global_per_matches_exact() {
        let d = ds(&[0.5, -1.5, 3.0, 0.1, 2.2]);
        let scheme = SchemeConfig {
            epsilon: 0.0,
            ..SchemeConfig::per()
        };
        let exact = check_per_equivalent_loss(&d, 2.0, scheme.alpha, scheme.beta, EXACT).unwrap();
        let cfg = MonteCarloConfig {
            draws: 400_000,
            batch_size: 32,
            normalization: IsNormalization::Global,
        };
        let est = monte_carlo_expected_grad(&d, &scheme, &LossSpec::mse(), &cfg, &mut seeded(3)).unwrap();
        assert!((est.estimate - exact.lhs_expected_grad).abs() <= 4.0 * est.std_error, "{est:?} {exact:?}");
    }

    #[test]
    fn report_lines_serialise() {
        let r = EquivalenceReport::compare(1.0, 1.0 + 1e-13, EXACT);
        let line = ReportLine::equivalence("lap_pal", json!({"alpha": 0.4}), &r);
        let v: Value = serde_json::from_str(&line.to_json()).unwrap();
        for key in ["check", "params", "lhs", "rhs", "abs_diff", "rel_diff", "pass"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(line.to_csv().starts_with("lap_pal,alpha=0.4,"));
        assert!(line.to_csv().ends_with(",true"));
        assert!(!r.perturbed(1e-3, EXACT).pass);
    }
}
