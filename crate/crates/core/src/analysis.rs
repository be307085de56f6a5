//! Verification harness: stability probes, convergence studies and moment tests.

use crate::error::{Error, Result};
use crate::grid::MacroState;
use crate::patch::MacroStepper;
use crate::rng::RngStreamSpec;

/// Growth above `1 + UNSTABLE_MARGIN` per step is unstable.
pub const UNSTABLE_MARGIN: f64 = 1e-3;
/// Growth within this distance of 1 is marginal; below it, stable.
pub const STABLE_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn classify(growth_factor: f64) -> Self {
        if growth_factor > 1.0 + UNSTABLE_MARGIN {
            Stability::Unstable
        } else if growth_factor < 1.0 - STABLE_MARGIN {
            Stability::Stable
        } else {
            Stability::Marginal
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub growth_factor_per_step: f64,
    pub classified: Stability,
    pub steps_run: usize,
    /// Set when the norm overflowed before `n_steps`.
    pub terminated_early: bool,
    /// `‖U_n‖` after each step, starting with the initial norm.
    pub norms: Vec<f64>,
}

/// Seeded white noise on `n` points, exciting every Fourier mode.
pub fn white_noise_state(n: usize, dx: f64, seed: u64) -> Result<MacroState> {
    let mut draws = RngStreamSpec::new(seed, 0, 0).stream();
    MacroState::new((0..n).map(|_| draws.normal()).collect(), dx, 0.0)
}

/// Iterates `stepper` from `u0` and measures the per-step L2 growth.
///
/// The first half of the run lets the dominant mode take over; the reported
/// factor is the geometric mean growth over the second half.
pub fn growth_factor_probe(stepper: &dyn MacroStepper, u0: &MacroState, n_steps: usize) -> Result<StabilityReport> {
    if n_steps < 10 {
        return Err(Error::invalid("n_steps", format!("need at least 10 steps, got {n_steps}")));
    }
    let mut norms = vec![u0.l2_norm()];
    let mut u = u0.clone();
    let mut terminated_early = false;
    for _ in 0..n_steps {
        match stepper.advance(&u) {
            Ok(next) if next.l2_norm().is_finite() => {
                norms.push(next.l2_norm());
                u = next;
            }
            Ok(_) => {
                terminated_early = true;
                break;
            }
            // MacroState rejects non-finite values, so overflow usually surfaces here.
            Err(e) if is_overflow(&e) => {
                terminated_early = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let steps_run = norms.len() - 1;
    if steps_run < 2 {
        return Err(Error::InsufficientData("stepper overflowed within the first steps".into()));
    }
    let start = steps_run / 2;
    let floor = f64::MIN_POSITIVE;
    let log_growth = (norms[steps_run].max(floor).ln() - norms[start].max(floor).ln()) / (steps_run - start) as f64;
    let growth = log_growth.exp().max(floor);
    Ok(StabilityReport {
        growth_factor_per_step: growth,
        classified: Stability::classify(growth),
        steps_run,
        terminated_early,
        norms,
    })
}

fn is_overflow(e: &Error) -> bool {
    match e {
        Error::NonFinite(_) => true,
        Error::Tooth { source, .. } => is_overflow(source),
        _ => false,
    }
}

/// Linear update matrix of a stepper: column `j` is the image of the unit vector `e_j`.
pub fn update_matrix(stepper: &dyn MacroStepper, n: usize, dx: f64) -> Result<Vec<Vec<f64>>> {
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        columns.push(stepper.advance(&MacroState::new(e, dx, 0.0)?)?.values().to_vec());
    }
    Ok((0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect())
}

/// Least-squares line `y = slope x + intercept`, with RMS residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!("line fit needs >= 2 paired points, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("line fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(LineFit {
        slope,
        intercept,
        residual,
    })
}

/// Errors below this are treated as rounding-dominated and left out of the fit.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub grid_sizes: Vec<usize>,
    pub spacings: Vec<f64>,
    pub errors: Vec<f64>,
    pub fitted_order: f64,
    pub warnings: Vec<String>,
}

/// Runs a family of steppers to `t_final` on `grid_sizes` points over a periodic
/// domain of the given length and fits the order of the discrete L2 error.
///
/// `family(dx)` returns the stepper for spacing `dx` and the number of steps to
/// take; the error is measured against `exact(x, t)` at the reached time.
pub fn convergence_order<S, F, E>(
    grid_sizes: &[usize],
    length: f64,
    family: F,
    exact: E,
) -> Result<ConvergenceReport>
where
    S: MacroStepper,
    F: Fn(f64) -> Result<(S, usize)>,
    E: Fn(f64, f64) -> f64,
{
    if grid_sizes.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "convergence study needs at least 3 resolutions, got {}",
            grid_sizes.len()
        )));
    }
    let mut spacings = Vec::new();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for &n in grid_sizes {
        let mut u = MacroState::sample(n, length, |x| exact(x, 0.0))?;
        let (stepper, steps) = family(u.dx())?;
        for _ in 0..steps {
            u = stepper.advance(&u)?;
        }
        let t = u.time();
        let sq: f64 = u
            .values()
            .iter()
            .enumerate()
            .map(|(j, v)| (v - exact(u.position(j), t)).powi(2))
            .sum();
        let err = (u.dx() * sq).sqrt();
        spacings.push(u.dx());
        errors.push(err);
    }
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (i, (&dx, &e)) in spacings.iter().zip(&errors).enumerate() {
        if e < ROUNDING_FLOOR {
            warnings.push(format!(
                "grid {} error {e:e} is rounding-dominated; excluded from fit",
                grid_sizes[i]
            ));
        } else {
            lx.push(dx.ln());
            ly.push(e.ln());
        }
    }
    let fitted_order = fit_line(&lx, &ly)?.slope;
    Ok(ConvergenceReport {
        grid_sizes: grid_sizes.to_vec(),
        spacings,
        errors,
        fitted_order,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementMoments {
    /// Mean increment divided by `Δt`.
    pub mean_rate: f64,
    pub mean_rate_se: f64,
    pub std_per_step: f64,
    pub std_se: f64,
    pub count: usize,
}

pub fn increment_moments(trajectory: &[f64], dt_macro: f64) -> Result<IncrementMoments> {
    if trajectory.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "increment moments need >= 100 points, got {}",
            trajectory.len()
        )));
    }
    let incs: Vec<f64> = trajectory.windows(2).map(|w| w[1] - w[0]).collect();
    let n = incs.len() as f64;
    let mean = incs.iter().sum::<f64>() / n;
    let std = (incs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(IncrementMoments {
        mean_rate: mean / dt_macro,
        mean_rate_se: std / n.sqrt() / dt_macro,
        std_per_step: std,
        std_se: std / (2.0 * n).sqrt(),
        count: incs.len(),
    })
}

/// Least-squares `θ` in `x_{n+1} - x_n ≈ -θ x_n Δt`.
pub fn linear_drift_rate(trajectory: &[f64], dt_macro: f64) -> Result<f64> {
    if trajectory.len() < 100 {
        return Err(Error::InsufficientData("drift regression needs >= 100 points".into()));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for w in trajectory.windows(2) {
        sxy += (w[1] - w[0]) * w[0];
        sxx += w[0] * w[0];
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("trajectory is identically zero".into()));
    }
    Ok(-sxy / (sxx * dt_macro))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceTest {
    pub measured: f64,
    pub expected: f64,
    pub tolerance_fraction: f64,
    pub pass: bool,
}

/// Tail variance (first 10% discarded as burn-in) against `expected`, relative tolerance.
pub fn stationary_variance_test(trajectory: &[f64], expected: f64, tolerance_fraction: f64) -> Result<VarianceTest> {
    let tail = &trajectory[trajectory.len() / 10..];
    if tail.len() < 1000 {
        return Err(Error::InsufficientData(format!(
            "variance test needs >= 1000 tail points, got {}",
            tail.len()
        )));
    }
    let measured = sample_variance(tail);
    Ok(VarianceTest {
        measured,
        expected,
        tolerance_fraction,
        pass: (measured - expected).abs() <= tolerance_fraction * expected.abs(),
    })
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Stationary variance of `x_{n+1} = a x_n + σ ξ_n`.
pub fn ar1_stationary_variance(a: f64, sigma: f64) -> f64 {
    sigma * sigma / (1.0 - a * a)
}
