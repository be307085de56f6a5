//! Coarse projective integration of scalar SDEs.
//!
//! One macro step of size `Δt`:
//!
//! 1. lift the coarse value `x` into an ensemble of `N` identical replicas,
//! 2. run `k` Euler–Maruyama steps of size `δt` on every replica,
//! 3. average the replicas to `x̄`,
//! 4. extrapolate `x + Δt (x̄ - x) / (k δt)`.
//!
//! To leading order the update is `x + Δt b(x) + Δt / sqrt(N k δt) ξ`, so the
//! captured noise depends on the numerical parameters. Only `N k δt = Δt`
//! reproduces the SDE, and then the ensemble costs as many micro steps as a
//! direct simulation. [`effective_noise_std`] gives the closed form and
//! [`CostLedger`] records the cost.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::micro::{em_step, SdeModel};
use crate::rng::RngStreamSpec;

/// Values with magnitude beyond this count as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Ensembles with at least this many micro steps per macro step run in parallel.
const PARALLEL_WORK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseStepConfig {
    ensemble_size: usize,
    micro_steps: usize,
    dt_micro: f64,
    dt_macro: f64,
    alpha: f64,
}

impl CoarseStepConfig {
    pub fn new(ensemble_size: usize, micro_steps: usize, dt_micro: f64, dt_macro: f64) -> Result<Self> {
        Self::with_alpha(ensemble_size, micro_steps, dt_micro, dt_macro, 0.0)
    }

    pub fn with_alpha(
        ensemble_size: usize,
        micro_steps: usize,
        dt_micro: f64,
        dt_macro: f64,
        alpha: f64,
    ) -> Result<Self> {
        if ensemble_size == 0 {
            return Err(Error::invalid("N", "ensemble size must be at least 1"));
        }
        if micro_steps == 0 {
            return Err(Error::invalid("k", "at least one micro step is required"));
        }
        if !(dt_micro > 0.0) || !dt_micro.is_finite() {
            return Err(Error::invalid("dt_micro", format!("must be positive, got {dt_micro}")));
        }
        if !(dt_macro > 0.0) || !dt_macro.is_finite() {
            return Err(Error::invalid("dt_macro", format!("must be positive, got {dt_macro}")));
        }
        let window = micro_steps as f64 * dt_micro;
        if window > dt_macro * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "dt_macro",
                format!("extrapolation window exceeds macro step: k*dt_micro = {window} > {dt_macro}"),
            ));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1), got {alpha}")));
        }
        let base = alpha * micro_steps as f64;
        if (base - base.round()).abs() > 1e-9 {
            return Err(Error::invalid(
                "alpha",
                format!("alpha * k = {base} must be a whole number of micro steps"),
            ));
        }
        Ok(Self {
            ensemble_size,
            micro_steps,
            dt_micro,
            dt_macro,
            alpha,
        })
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size
    }

    pub fn micro_steps(&self) -> usize {
        self.micro_steps
    }

    pub fn dt_micro(&self) -> f64 {
        self.dt_micro
    }

    pub fn dt_macro(&self) -> f64 {
        self.dt_macro
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Micro step at which the extrapolation base average is recorded.
    pub fn base_step(&self) -> usize {
        (self.alpha * self.micro_steps as f64).round() as usize
    }

    /// `N k δt`, the total simulated micro time per macro step.
    pub fn sampled_time(&self) -> f64 {
        self.ensemble_size as f64 * self.micro_steps as f64 * self.dt_micro
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub members: Vec<f64>,
    pub streams: Vec<RngStreamSpec>,
    pub time_offset: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostLedger {
    pub micro_steps_total: u64,
    pub macro_steps_total: u64,
}

impl CostLedger {
    pub fn record_macro_step(&mut self, cfg: &CoarseStepConfig) {
        self.macro_steps_total += 1;
        self.micro_steps_total += (cfg.ensemble_size * cfg.micro_steps) as u64;
    }

    /// Micro steps a single direct path needs to cover the same horizon at `δt`.
    pub fn brute_force_steps(&self, cfg: &CoarseStepConfig) -> u64 {
        (self.macro_steps_total as f64 * cfg.dt_macro / cfg.dt_micro).round() as u64
    }

    /// Projective cost divided by the direct cost over the same horizon.
    pub fn cost_ratio(&self, cfg: &CoarseStepConfig) -> f64 {
        self.micro_steps_total as f64 / self.brute_force_steps(cfg) as f64
    }
}

/// Identity lifting: replica `j` starts at `x` with stream id `rng.stream_id + j`.
pub fn lift_ensemble(x: f64, cfg: &CoarseStepConfig, rng: RngStreamSpec) -> Result<EnsembleState> {
    if !x.is_finite() {
        return Err(Error::NonFinite("coarse variable"));
    }
    Ok(EnsembleState {
        members: vec![x; cfg.ensemble_size],
        streams: (0..cfg.ensemble_size as u64)
            .map(|j| rng.with_stream(rng.stream_id.wrapping_add(j)))
            .collect(),
        time_offset: 0.0,
    })
}

/// Runs `k` micro steps, returning the value at the extrapolation base step and at the end.
fn run_member(x: f64, stream: RngStreamSpec, model: &SdeModel, cfg: &CoarseStepConfig) -> Result<(f64, f64)> {
    let mut draws = stream.stream();
    let base = cfg.base_step();
    let mut value = x;
    let mut at_base = x;
    for step in 0..cfg.micro_steps {
        if step == base {
            at_base = value;
        }
        value = em_step(value, model, cfg.dt_micro, draws.normal())?;
    }
    Ok((at_base, value))
}

/// One coarse projective step from `x`.
pub fn coarse_projective_step(x: f64, model: &SdeModel, cfg: &CoarseStepConfig, rng: RngStreamSpec) -> Result<f64> {
    let ensemble = lift_ensemble(x, cfg, rng)?;
    let run = |(&member, &stream): (&f64, &RngStreamSpec)| run_member(member, stream, model, cfg);
    let pairs: Vec<(f64, f64)> = if cfg.ensemble_size * cfg.micro_steps >= PARALLEL_WORK {
        ensemble
            .members
            .par_iter()
            .zip(ensemble.streams.par_iter())
            .map(run)
            .collect::<Result<_>>()?
    } else {
        ensemble.members.iter().zip(&ensemble.streams).map(run).collect::<Result<_>>()?
    };
    // Sequential sums keep the result independent of the thread count.
    let n = cfg.ensemble_size as f64;
    let (change, span) = if cfg.alpha == 0.0 {
        (
            pairs.iter().map(|p| p.1 - x).sum::<f64>() / n,
            cfg.micro_steps as f64 * cfg.dt_micro,
        )
    } else {
        (
            pairs.iter().map(|p| p.1 - p.0).sum::<f64>() / n,
            (1.0 - cfg.alpha) * cfg.micro_steps as f64 * cfg.dt_micro,
        )
    };
    Ok(x + cfg.dt_macro * change / span)
}

/// Per-macro-step noise standard deviation `Δt / sqrt(N k δt)` of the effective scheme.
pub fn effective_noise_std(cfg: &CoarseStepConfig) -> f64 {
    cfg.dt_macro / cfg.sampled_time().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseRun {
    /// `x0` followed by one value per completed macro step.
    pub trajectory: Vec<f64>,
    pub ledger: CostLedger,
    /// Macro step index of the first value beyond [`DIVERGENCE_THRESHOLD`] or non-finite.
    pub diverged_at: Option<usize>,
}

/// Iterates [`coarse_projective_step`]; step `n` draws from `rng.step_id + n`.
pub fn run_coarse_trajectory(
    x0: f64,
    model: &SdeModel,
    cfg: &CoarseStepConfig,
    n_steps: usize,
    rng: RngStreamSpec,
) -> Result<CoarseRun> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "at least one macro step is required"));
    }
    let mut trajectory = Vec::with_capacity(n_steps + 1);
    trajectory.push(x0);
    let mut ledger = CostLedger::default();
    let mut x = x0;
    for n in 0..n_steps {
        x = coarse_projective_step(x, model, cfg, rng.with_step(rng.step_id.wrapping_add(n as u64)))?;
        ledger.record_macro_step(cfg);
        trajectory.push(x);
        if !x.is_finite() || x.abs() > DIVERGENCE_THRESHOLD {
            return Ok(CoarseRun {
                trajectory,
                ledger,
                diverged_at: Some(n + 1),
            });
        }
    }
    Ok(CoarseRun {
        trajectory,
        ledger,
        diverged_at: None,
    })
}

/// Direct Euler–Maruyama path at step `dt`, sampled every `stride` steps.
pub fn direct_em_path(
    x0: f64,
    model: &SdeModel,
    dt: f64,
    n_samples: usize,
    stride: usize,
    rng: RngStreamSpec,
) -> Result<Vec<f64>> {
    let mut draws = rng.stream();
    let mut x = x0;
    let mut out = Vec::with_capacity(n_samples + 1);
    out.push(x);
    for _ in 0..n_samples {
        for _ in 0..stride {
            x = em_step(x, model, dt, draws.normal())?;
        }
        out.push(x);
    }
    Ok(out)
}
