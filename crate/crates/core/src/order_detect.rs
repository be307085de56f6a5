//! Variance-based detection of which inputs a black-box function depends on.
//!
//! If `F` truly depends on input `j`, its variance as `x_j` sweeps with the
//! other inputs frozen does not vanish. [`detect_order`] scans the inputs in
//! increasing order and stops after a configurable run of consecutive
//! non-dependent inputs; this inductive stop rule is what makes it miss a
//! dependence on a far-away input such as `F(x_1, x_100)`.
//!
//! [`derivative_blackbox`] builds such a function from microsolver calls: it
//! maps local derivative values `(D_0, .., D_d)` to the empirical time
//! derivative of the tooth average, so the detected order is the highest
//! derivative in the effective macroscale equation.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::grid::ToothConfig;
use crate::patch::{evolve_tooth, restrict, Evolution, LiftingScheme, PatchConfig};
use crate::pde::PdeSpec;
use crate::poly::TaylorPolynomial;
use crate::rng::RngStreamSpec;

type Evaluator = Box<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;

pub struct BlackBoxFunction {
    arity: usize,
    /// Label of the first input: 1 for `x_1..x_M`, 0 for derivative inputs `D_0..D_d`.
    first_label: usize,
    evaluator: Evaluator,
    budget: usize,
    used: AtomicUsize,
}

impl BlackBoxFunction {
    pub fn new(arity: usize, budget: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::fallible(arity, budget, move |x| Ok(f(x)))
    }

    pub fn fallible(arity: usize, budget: usize, f: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static) -> Self {
        Self {
            arity,
            first_label: 1,
            evaluator: Box::new(f),
            budget,
            used: AtomicUsize::new(0),
        }
    }

    pub fn with_first_label(mut self, label: usize) -> Self {
        self.first_label = label;
        self
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn first_label(&self) -> usize {
        self.first_label
    }

    pub fn label(&self, index: usize) -> usize {
        self.first_label + index
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn evaluations_used(&self) -> usize {
        self.used.load(Ordering::Relaxed)
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.evaluations_used())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arity {
            return Err(Error::invalid("x", format!("expected {} inputs, got {}", self.arity, x.len())));
        }
        if self.remaining() == 0 {
            return Err(Error::BudgetExhausted {
                used: self.evaluations_used(),
                requested: 1,
                budget: self.budget,
                partial: None,
            });
        }
        self.used.fetch_add(1, Ordering::Relaxed);
        (self.evaluator)(x)
    }
}

impl fmt::Debug for BlackBoxFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBoxFunction")
            .field("arity", &self.arity)
            .field("first_label", &self.first_label)
            .field("budget", &self.budget)
            .field("used", &self.evaluations_used())
            .finish_non_exhaustive()
    }
}

/// Sampling design for [`coordinate_variance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub n_base: usize,
    pub n_perturb: usize,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl ProbeSpec {
    pub fn new(n_base: usize, n_perturb: usize, seed: u64) -> Self {
        Self {
            n_base,
            n_perturb,
            lo: -1.0,
            hi: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_base == 0 || self.n_perturb < 2 {
            return Err(Error::invalid("probe", "need n_base >= 1 and n_perturb >= 2"));
        }
        if !(self.hi > self.lo) {
            return Err(Error::invalid("probe", "sampling box must have hi > lo"));
        }
        Ok(())
    }

    /// Base point `b` is drawn from its own stream, so it does not depend on
    /// the order in which base points are visited.
    fn base_point(&self, b: usize, arity: usize) -> Vec<f64> {
        let mut draws = RngStreamSpec::new(self.seed, b as u64, 0).stream();
        (0..arity).map(|_| draws.uniform_in(self.lo, self.hi)).collect()
    }

    /// Midpoint sweep of the box.
    fn sweep(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * (self.hi - self.lo) / self.n_perturb as f64
    }
}

/// Mean over base points of the variance of `f` as input `index` sweeps the box.
pub fn coordinate_variance(f: &BlackBoxFunction, index: usize, probe: &ProbeSpec) -> Result<f64> {
    probe.validate()?;
    if index >= f.arity() {
        return Err(Error::invalid("index", format!("input {index} out of range for arity {}", f.arity())));
    }
    let per_base = probe.n_perturb;
    let affordable = f.remaining() / per_base;
    let mut total = 0.0;
    let mut values = vec![0.0; per_base];
    for b in 0..probe.n_base.min(affordable) {
        let mut x = probe.base_point(b, f.arity());
        for (i, v) in values.iter_mut().enumerate() {
            x[index] = probe.sweep(i);
            *v = f.eval(&x)?;
        }
        // Shifting by the first value makes a constant response exactly zero.
        let shift = values[0];
        let mean = values.iter().map(|v| v - shift).sum::<f64>() / per_base as f64;
        total += values.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>() / per_base as f64;
    }
    if affordable < probe.n_base {
        return Err(Error::BudgetExhausted {
            used: f.evaluations_used(),
            requested: (probe.n_base - affordable) * per_base,
            budget: f.budget(),
            partial: (affordable > 0).then(|| total / affordable as f64),
        });
    }
    Ok(total / probe.n_base as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// `factor × (largest variance seen)`, never below `floor`.
    Relative { factor: f64, floor: f64 },
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Relative {
            factor: 1e-6,
            floor: 1e-12,
        }
    }
}

impl Threshold {
    fn value(&self, max_seen: f64) -> f64 {
        match *self {
            Threshold::Absolute(t) => t,
            Threshold::Relative { factor, floor } => (factor * max_seen).max(floor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub threshold: Threshold,
    /// Stop after this many consecutive non-dependent inputs.
    pub stop_after: Option<usize>,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            threshold: Threshold::default(),
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyReport {
    /// Variance for each input scanned, in scan order.
    pub per_index_variance: Vec<f64>,
    pub dependent: Vec<bool>,
    pub labels: Vec<usize>,
    /// Largest label flagged dependent, 0 if none.
    pub detected_order: usize,
    /// Label of the input at which the stop rule fired.
    pub stopped_early: Option<usize>,
    pub budget_exhausted: bool,
    pub budget_used: usize,
    pub threshold_used: f64,
}

pub fn detect_order(f: &BlackBoxFunction, options: &DetectOptions, probe: &ProbeSpec) -> Result<DependencyReport> {
    if let Threshold::Absolute(t) = options.threshold {
        if !(t > 0.0) {
            return Err(Error::invalid("threshold", format!("must be positive, got {t}")));
        }
    }
    let mut variances = Vec::new();
    let mut max_seen: f64 = 0.0;
    let mut quiet_run = 0;
    let mut stopped_early = None;
    let mut budget_exhausted = false;
    for index in 0..f.arity() {
        let var = match coordinate_variance(f, index, probe) {
            Ok(v) => v,
            Err(Error::BudgetExhausted { .. }) => {
                budget_exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        variances.push(var);
        max_seen = max_seen.max(var);
        if var > options.threshold.value(max_seen) {
            quiet_run = 0;
        } else {
            quiet_run += 1;
            if options.stop_after.is_some_and(|s| quiet_run >= s) && index + 1 < f.arity() {
                stopped_early = Some(f.label(index));
                break;
            }
        }
    }
    let threshold_used = options.threshold.value(max_seen);
    let dependent: Vec<bool> = variances.iter().map(|&v| v > threshold_used).collect();
    let labels: Vec<usize> = (0..variances.len()).map(|i| f.label(i)).collect();
    let detected_order = dependent
        .iter()
        .zip(&labels)
        .filter(|(d, _)| **d)
        .map(|(_, &l)| l)
        .max()
        .unwrap_or(0);
    Ok(DependencyReport {
        per_index_variance: variances,
        dependent,
        labels,
        detected_order,
        stopped_early,
        budget_exhausted,
        budget_used: f.evaluations_used(),
        threshold_used,
    })
}

/// Microsolver configuration behind a derivative black box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeProbe {
    pub max_degree: usize,
    pub dt_micro: f64,
    pub tooth: ToothConfig,
    pub evolution: Evolution,
}

/// `(D_0, .., D_d) ↦ (A_h S_δt p - A_h p) / δt` for the Taylor polynomial `p` with
/// those derivative values, built entirely from microsolver calls.
pub fn derivative_blackbox(pde: &PdeSpec, probe: &DerivativeProbe, budget: usize) -> Result<BlackBoxFunction> {
    if !(probe.dt_micro > 0.0) {
        return Err(Error::invalid("dt_micro", "must be positive"));
    }
    // Only the tooth and microsolver fields are used; the lifting is bypassed.
    let cfg = PatchConfig::new(LiftingScheme::CentralD2, probe.tooth, probe.dt_micro, probe.dt_micro)?
        .with_evolution(probe.evolution);
    let pde = pde.clone();
    let evaluate = move |d: &[f64]| -> Result<f64> {
        let p = TaylorPolynomial::new(0.0, d.to_vec())?;
        let before = p.average(cfg.tooth.h())?;
        let after = restrict(&evolve_tooth(&p, &pde, cfg.dt_micro, &cfg)?, &cfg.tooth)?;
        Ok((after - before) / cfg.dt_micro)
    };
    // Surface microsolver configuration errors up front.
    evaluate(&vec![0.0; probe.max_degree + 1])?;
    Ok(BlackBoxFunction::fallible(probe.max_degree + 1, budget, evaluate).with_first_label(0))
}
