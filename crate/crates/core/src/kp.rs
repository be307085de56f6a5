//! Inertial particles in a stationary random force field under diffusive rescaling.
//!
//! The rescaled system is
//!
//! ```text
//! dx/dt = v / δ²,   dv/dt = F(x) / δ
//! ```
//!
//! For small `δ` the velocity decorrelates on the fast time scale `δ²/|v|` and
//! `v` behaves as a diffusion: its mean squared displacement grows linearly in
//! the lag. At `δ = 1` and short lags the force is nearly constant along the
//! path and the displacement is ballistic (quadratic in the lag). The effective
//! order of the velocity dynamics therefore depends on the observation scale.
//!
//! The field is a gradient field `F = -∇V` built from random cosine modes, so
//! `|v|²/2 + δ V(x)` is conserved. In one dimension this pins `|v|` to a
//! function of `x` and the velocity cannot diffuse; the scale-dependence shows up
//! in two or more dimensions, where the direction of `v` diffuses.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::analysis::fit_line;
use crate::error::{Error, Result};
use crate::rng::RngStreamSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ForceMode {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    pub phase: f64,
}

/// `F(x) = Σ_m a_m k̂_m cos(k_m · x + φ_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForceField {
    dim: usize,
    modes: Vec<ForceMode>,
    seed: u64,
}

impl RandomForceField {
    pub fn from_modes(dim: usize, modes: Vec<ForceMode>, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "dimension must be at least 1"));
        }
        for m in &modes {
            if m.wavevector.len() != dim {
                return Err(Error::invalid("wavevector", format!("expected {dim} components")));
            }
            if m.wavevector.iter().all(|&k| k == 0.0) {
                return Err(Error::invalid("wavevector", "zero wavevector would add a mean force"));
            }
            if !m.amplitude.is_finite() || !m.phase.is_finite() || m.wavevector.iter().any(|k| !k.is_finite()) {
                return Err(Error::NonFinite("force mode"));
            }
        }
        Ok(Self { dim, modes, seed })
    }

    /// The zero field, for free-motion checks.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            modes: Vec::new(),
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[ForceMode] {
        &self.modes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn force_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for m in &self.modes {
            let arg: f64 = m.wavevector.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>() + m.phase;
            let norm = m.wavevector.iter().map(|k| k * k).sum::<f64>().sqrt();
            let c = m.amplitude * arg.cos() / norm;
            for (o, k) in out.iter_mut().zip(&m.wavevector) {
                *o += c * k;
            }
        }
    }

    pub fn force(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.force_into(x, &mut out);
        out
    }

    /// `V` with `F = -∇V`: `V(x) = -Σ a_m sin(k_m·x + φ_m) / |k_m|`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        -self
            .modes
            .iter()
            .map(|m| {
                let arg: f64 = m.wavevector.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>() + m.phase;
                let norm = m.wavevector.iter().map(|k| k * k).sum::<f64>().sqrt();
                m.amplitude * arg.sin() / norm
            })
            .sum::<f64>()
    }

    /// Same field with every phase advanced by `shift`.
    pub fn with_phase_shift(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.phase += shift;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    pub dim: usize,
    pub n_modes: usize,
    /// Amplitudes decay as `m^-spectrum`.
    pub spectrum: f64,
    /// Overall amplitude factor.
    pub strength: f64,
    /// Plane waves per wavenumber shell; must be 1 in one dimension.
    pub directions: usize,
    pub seed: u64,
}

fn random_unit(dim: usize, draws: &mut crate::rng::DrawStream) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..dim).map(|_| draws.normal()).collect();
        let norm = d.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return d.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// Shell `m` has `|k| = m` and total amplitude `strength · m^-spectrum`, split
/// evenly in variance over `directions` plane waves with uniform phases and
/// isotropic directions. In 1D the single direction is `+1`, so the field is
/// `Σ a_m cos(m x + φ_m)`.
///
/// A handful of plane waves in `d > 1` is not enough for velocity diffusion:
/// only waves with `k·v` near zero resonate, so the directions must be dense.
pub fn synthesize_force_field(spec: &FieldSpec) -> Result<RandomForceField> {
    if spec.n_modes == 0 {
        return Err(Error::invalid("n_modes", "at least one mode is required"));
    }
    if spec.dim == 0 {
        return Err(Error::invalid("dim", "dimension must be at least 1"));
    }
    if spec.directions == 0 || (spec.dim == 1 && spec.directions != 1) {
        return Err(Error::invalid("directions", "need at least one, and exactly one in 1D"));
    }
    let mut draws = RngStreamSpec::new(spec.seed, 0, 0).stream();
    let share = (spec.directions as f64).sqrt();
    let mut modes = Vec::with_capacity(spec.n_modes * spec.directions);
    for m in 1..=spec.n_modes {
        for _ in 0..spec.directions {
            let phase = TAU * draws.uniform();
            let direction = if spec.dim == 1 { vec![1.0] } else { random_unit(spec.dim, &mut draws) };
            modes.push(ForceMode {
                amplitude: spec.strength * (m as f64).powf(-spec.spectrum) / share,
                wavevector: direction.into_iter().map(|c| c * m as f64).collect(),
                phase,
            });
        }
    }
    RandomForceField::from_modes(spec.dim, modes, spec.seed)
}

/// Position/velocity samples at uniform output times; vectors are stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTrajectory {
    pub delta: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl ScaledTrajectory {
    /// Velocity-only trajectory, positions left at zero. Used for reference processes.
    pub fn from_velocities(dim: usize, dt_out: f64, v: Vec<f64>) -> Result<Self> {
        if dim == 0 || v.len() % dim != 0 {
            return Err(Error::invalid("v", "length must be a multiple of the dimension"));
        }
        let n = v.len() / dim;
        Ok(Self {
            delta: 1.0,
            dim,
            times: (0..n).map(|i| i as f64 * dt_out).collect(),
            x: vec![0.0; v.len()],
            v,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_spacing(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpRun {
    pub delta: f64,
    pub t_final: f64,
    /// Upper bound on the integrator step; the step used divides `t_final` evenly.
    pub dt: f64,
    pub output_every: usize,
}

impl KpRun {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::invalid("delta", format!("must be positive, got {}", self.delta)));
        }
        if !(self.t_final > 0.0) || !(self.dt > 0.0) || self.dt > self.t_final {
            return Err(Error::invalid("dt", "need 0 < dt <= t_final"));
        }
        if self.output_every == 0 {
            return Err(Error::invalid("output_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Step count: at least `t_final / dt`, rounded up to a multiple of `output_every`.
    pub fn steps(&self) -> usize {
        let raw = ((self.t_final / self.dt - 1e-9).ceil() as usize).max(1);
        raw.div_ceil(self.output_every) * self.output_every
    }
}

/// Kick-drift-kick leapfrog for `dx/dt = v/δ²`, `dv/dt = F(x)/δ`.
pub fn kp_integrate(field: &RandomForceField, run: &KpRun, x0: &[f64], v0: &[f64]) -> Result<ScaledTrajectory> {
    run.validate()?;
    let dim = field.dim();
    if x0.len() != dim || v0.len() != dim {
        return Err(Error::invalid("initial", format!("initial state must have {dim} components")));
    }
    let steps = run.steps();
    let dt = run.t_final / steps as f64;
    let kick = 0.5 * dt / run.delta;
    let drift = dt / (run.delta * run.delta);
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut f = field.force(&x);
    let n_out = steps / run.output_every + 1;
    let mut traj = ScaledTrajectory {
        delta: run.delta,
        dim,
        times: Vec::with_capacity(n_out),
        x: Vec::with_capacity(n_out * dim),
        v: Vec::with_capacity(n_out * dim),
    };
    traj.times.push(0.0);
    traj.x.extend_from_slice(&x);
    traj.v.extend_from_slice(&v);
    for step in 1..=steps {
        for i in 0..dim {
            v[i] += kick * f[i];
            x[i] += drift * v[i];
        }
        field.force_into(&x, &mut f);
        for i in 0..dim {
            v[i] += kick * f[i];
        }
        if v.iter().chain(&x).any(|c| !c.is_finite()) {
            return Err(Error::BlowUp { time: step as f64 * dt });
        }
        if step % run.output_every == 0 {
            traj.times.push(step as f64 * dt);
            traj.x.extend_from_slice(&x);
            traj.v.extend_from_slice(&v);
        }
    }
    Ok(traj)
}

/// Relative change of the velocity at `min(horizon, t_final)` when the step is halved.
///
/// The multi-dimensional dynamics are chaotic, so trajectories computed with
/// different steps separate exponentially and eventually decorrelate; the
/// comparison is only meaningful within a few Lyapunov times.
pub fn step_halving_deviation(field: &RandomForceField, run: &KpRun, x0: &[f64], v0: &[f64], horizon: f64) -> Result<f64> {
    run.validate()?;
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    let t_check = horizon.min(run.t_final);
    let n = ((t_check / run.dt - 1e-9).ceil() as usize).max(1);
    let coarse_run = KpRun {
        t_final: t_check,
        dt: t_check / n as f64,
        output_every: n,
        ..*run
    };
    let fine_run = KpRun {
        t_final: t_check,
        dt: t_check / (2 * n) as f64,
        output_every: 2 * n,
        ..*run
    };
    let coarse = kp_integrate(field, &coarse_run, x0, v0)?;
    let fine = kp_integrate(field, &fine_run, x0, v0)?;
    let a = coarse.velocity(coarse.len() - 1);
    let b = fine.velocity(fine.len() - 1);
    let diff = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|q| q * q).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    Ok(diff / scale)
}

/// Largest accepted deviation under step halving.
pub const STEP_HALVING_TOLERANCE: f64 = 0.01;

/// [`kp_integrate`] after verifying the step by halving it over `horizon`.
pub fn kp_integrate_checked(
    field: &RandomForceField,
    run: &KpRun,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
) -> Result<ScaledTrajectory> {
    let deviation = step_halving_deviation(field, run, x0, v0, horizon)?;
    if deviation > STEP_HALVING_TOLERANCE {
        return Err(Error::StepSelfConsistency {
            deviation,
            tolerance: STEP_HALVING_TOLERANCE,
        });
    }
    kp_integrate(field, run, x0, v0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpEnsembleSpec {
    pub field: FieldSpec,
    pub run: KpRun,
    pub n_trajectories: usize,
    /// Initial speed `|v0|`.
    pub speed: f64,
    pub seed: u64,
}

/// Initial state and field seed of ensemble member `i`.
fn member_setup(spec: &KpEnsembleSpec, i: usize) -> (u64, Vec<f64>, Vec<f64>) {
    let mut draws = RngStreamSpec::new(spec.seed, i as u64, 0).stream();
    let field_seed = draws.next_u64();
    let dim = spec.field.dim;
    let x0: Vec<f64> = (0..dim).map(|_| TAU * draws.uniform()).collect();
    let v0: Vec<f64> = if dim == 1 {
        vec![if draws.uniform() < 0.5 { spec.speed } else { -spec.speed }]
    } else {
        random_unit(dim, &mut draws).into_iter().map(|c| spec.speed * c).collect()
    };
    (field_seed, x0, v0)
}

pub fn member_field(spec: &KpEnsembleSpec, i: usize) -> Result<RandomForceField> {
    let (field_seed, _, _) = member_setup(spec, i);
    synthesize_force_field(&FieldSpec {
        seed: field_seed,
        ..spec.field
    })
}

/// Independent fields and initial states per member; output order is member order.
pub fn run_kp_ensemble(spec: &KpEnsembleSpec) -> Result<Vec<ScaledTrajectory>> {
    (0..spec.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let (_, x0, v0) = member_setup(spec, i);
            kp_integrate(&member_field(spec, i)?, &spec.run, &x0, &v0)
        })
        .collect()
}

/// Like [`run_kp_ensemble`] with every member's phases shifted by `shift`.
pub fn run_kp_ensemble_shifted(spec: &KpEnsembleSpec, shift: f64) -> Result<Vec<ScaledTrajectory>> {
    (0..spec.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let (_, x0, v0) = member_setup(spec, i);
            kp_integrate(&member_field(spec, i)?.with_phase_shift(shift), &spec.run, &x0, &v0)
        })
        .collect()
}

/// Step-halving deviation of the first member of an ensemble.
pub fn ensemble_step_check(spec: &KpEnsembleSpec, horizon: f64) -> Result<f64> {
    let (_, x0, v0) = member_setup(spec, 0);
    step_halving_deviation(&member_field(spec, 0)?, &spec.run, &x0, &v0, horizon)
}

/// A sweep over `δ` with one ensemble per value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSweep {
    /// Template for the per-member fields; its seed is replaced per member.
    pub field: FieldSpec,
    pub n_trajectories: usize,
    pub speed: f64,
    pub seed: u64,
    pub deltas: Vec<f64>,
    /// Horizon per `δ`, same length as `deltas`.
    pub t_finals: Vec<f64>,
    /// The step is `min(dt_max, dt_factor · δ²)`, resolving the fast time `δ²/|v|`.
    pub dt_max: f64,
    pub dt_factor: f64,
    /// Approximate number of stored samples per trajectory.
    pub samples: usize,
    pub halving_horizon: f64,
    /// Also rerun every ensemble with all phases shifted by this offset.
    pub phase_shift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRow {
    pub delta: f64,
    pub t_final: f64,
    pub dt: f64,
    pub lag_min: f64,
    pub lag_max: f64,
    pub fit: MsdFit,
    pub gamma_shifted: Option<f64>,
    pub halving_deviation: f64,
}

impl ScaleSweep {
    pub fn ensemble_spec(&self, index: usize) -> Result<KpEnsembleSpec> {
        if self.deltas.len() != self.t_finals.len() {
            return Err(Error::invalid("t_final", "need one horizon per delta"));
        }
        let delta = *self
            .deltas
            .get(index)
            .ok_or_else(|| Error::invalid("deltas", format!("no delta at index {index}")))?;
        let t_final = self.t_finals[index];
        let dt = self.dt_max.min(self.dt_factor * delta * delta);
        let steps = ((t_final / dt).ceil() as usize).max(1);
        Ok(KpEnsembleSpec {
            field: self.field,
            run: KpRun {
                delta,
                t_final,
                dt,
                output_every: (steps / self.samples.max(1)).max(1),
            },
            n_trajectories: self.n_trajectories,
            speed: self.speed,
            seed: self.seed,
        })
    }
}

/// Runs every `δ` of the sweep, fitting the MSD exponent over `[T/100, T/4]`.
///
/// Fails with [`Error::StepSelfConsistency`] if halving the step moves the
/// velocity by more than [`STEP_HALVING_TOLERANCE`] within the check horizon.
pub fn run_scale_sweep(sweep: &ScaleSweep) -> Result<Vec<ScaleRow>> {
    (0..sweep.deltas.len())
        .map(|i| {
            let spec = sweep.ensemble_spec(i)?;
            let halving_deviation = ensemble_step_check(&spec, sweep.halving_horizon)?;
            if halving_deviation > STEP_HALVING_TOLERANCE {
                return Err(Error::StepSelfConsistency {
                    deviation: halving_deviation,
                    tolerance: STEP_HALVING_TOLERANCE,
                });
            }
            let (lag_min, lag_max) = (spec.run.t_final / 100.0, spec.run.t_final / 4.0);
            let fit = msd_exponent(&run_kp_ensemble(&spec)?, lag_min, lag_max)?;
            let gamma_shifted = match sweep.phase_shift {
                Some(shift) => Some(msd_exponent(&run_kp_ensemble_shifted(&spec, shift)?, lag_min, lag_max)?.gamma),
                None => None,
            };
            Ok(ScaleRow {
                delta: spec.run.delta,
                t_final: spec.run.t_final,
                dt: spec.run.t_final / spec.run.steps() as f64,
                lag_min,
                lag_max,
                fit,
                gamma_shifted,
                halving_deviation,
            })
        })
        .collect()
}

pub const MIN_TRAJECTORIES: usize = 20;
const MAX_FIT_LAGS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct MsdFit {
    pub gamma: f64,
    pub residual: f64,
    pub lags: Vec<f64>,
    pub msd: Vec<f64>,
}

/// Fits `γ` in `⟨|v(t+s) - v(t)|²⟩ ∝ s^γ` over lags in `[lag_min, lag_max]`.
///
/// The average runs over trajectories and all time origins.
pub fn msd_exponent(trajectories: &[ScaledTrajectory], lag_min: f64, lag_max: f64) -> Result<MsdFit> {
    if trajectories.len() < MIN_TRAJECTORIES {
        return Err(Error::InsufficientData(format!(
            "MSD fit needs at least {MIN_TRAJECTORIES} trajectories, got {}",
            trajectories.len()
        )));
    }
    let first = &trajectories[0];
    let spacing = first.output_spacing();
    let duration = first.duration();
    if !(spacing > 0.0) {
        return Err(Error::InsufficientData("trajectories need at least two samples".into()));
    }
    for t in trajectories {
        if t.len() != first.len() || t.dim != first.dim || (t.output_spacing() - spacing).abs() > 1e-12 * spacing {
            return Err(Error::invalid("trajectories", "all trajectories must share sampling and dimension"));
        }
    }
    let slack = 1e-9 * duration;
    if !(lag_min < lag_max) || lag_min < duration / 100.0 - slack || lag_max > duration / 4.0 + slack {
        return Err(Error::invalid(
            "lag range",
            format!("need T/100 <= lag_min < lag_max <= T/4 with T = {duration}"),
        ));
    }
    let lo = ((lag_min / spacing) - 1e-9).ceil().max(1.0) as usize;
    let hi = ((lag_max / spacing) + 1e-9).floor() as usize;
    if hi <= lo {
        return Err(Error::InsufficientData("lag range contains fewer than two output lags".into()));
    }
    let mut lags: Vec<usize> = (0..MAX_FIT_LAGS)
        .map(|i| {
            let r = i as f64 / (MAX_FIT_LAGS - 1) as f64;
            ((lo as f64) * (hi as f64 / lo as f64).powf(r)).round() as usize
        })
        .collect();
    lags.dedup();
    let msd: Vec<f64> = lags
        .par_iter()
        .map(|&lag| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for t in trajectories {
                for i in 0..t.len() - lag {
                    let (a, b) = (t.velocity(i), t.velocity(i + lag));
                    sum += a.iter().zip(b).map(|(p, q)| (q - p).powi(2)).sum::<f64>();
                    count += 1;
                }
            }
            sum / count as f64
        })
        .collect();
    if msd.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InsufficientData("velocity displacement vanishes at some lag".into()));
    }
    let lag_times: Vec<f64> = lags.iter().map(|&l| l as f64 * spacing).collect();
    let xs: Vec<f64> = lag_times.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = msd.iter().map(|m| m.ln()).collect();
    let fit = fit_line(&xs, &ys)?;
    Ok(MsdFit {
        gamma: fit.slope,
        residual: fit.residual,
        lags: lag_times,
        msd,
    })
}

/// Brownian velocities: independent Gaussian increments of variance `dt_out` per component.
pub fn brownian_reference(n: usize, samples: usize, dim: usize, dt_out: f64, seed: u64) -> Result<Vec<ScaledTrajectory>> {
    (0..n)
        .map(|i| {
            let mut draws = RngStreamSpec::new(seed, i as u64, 0).stream();
            let mut v = vec![0.0; dim];
            let mut flat = Vec::with_capacity(samples * dim);
            for _ in 0..samples {
                flat.extend_from_slice(&v);
                for c in &mut v {
                    *c += dt_out.sqrt() * draws.normal();
                }
            }
            ScaledTrajectory::from_velocities(dim, dt_out, flat)
        })
        .collect()
}

/// Ballistic velocities `v(t) = c t` with seeded random `c`.
pub fn ballistic_reference(n: usize, samples: usize, dim: usize, dt_out: f64, seed: u64) -> Result<Vec<ScaledTrajectory>> {
    (0..n)
        .map(|i| {
            let mut draws = RngStreamSpec::new(seed, i as u64, 0).stream();
            let c: Vec<f64> = (0..dim).map(|_| draws.normal()).collect();
            let flat = (0..samples)
                .flat_map(|s| c.iter().map(move |ci| ci * s as f64 * dt_out))
                .collect();
            ScaledTrajectory::from_velocities(dim, dt_out, flat)
        })
        .collect()
}
