//! Python bindings for the eqfree library.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use eqfree::analysis::{growth_factor_probe, update_matrix, white_noise_state};
use eqfree::config::{parse_config, PdeName};
use eqfree::grid::{MacroState, ToothConfig};
use eqfree::kp::{kp_integrate, synthesize_force_field, FieldSpec, KpRun, RandomForceField};
use eqfree::micro::SdeModel;
use eqfree::order_detect::{derivative_blackbox, detect_order, DerivativeProbe, DetectOptions, ProbeSpec};
use eqfree::patch::{lift, restrict, Evolution, GapToothStepper, LiftingScheme, MacroStepper, PatchConfig, ToothField, WindSign};
use eqfree::projective::{effective_noise_std, run_coarse_trajectory, CoarseStepConfig};
use eqfree::rng::RngStreamSpec;
use eqfree::runner::run_experiment;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pde_from_name(name: &str) -> PyResult<eqfree::pde::PdeSpec> {
    name.parse::<PdeName>().map(|p| p.spec()).map_err(value_err)
}

fn lifting_from_name(name: &str, wind: &str) -> PyResult<LiftingScheme> {
    let wind = match wind {
        "positive" => WindSign::Positive,
        "negative" => WindSign::Negative,
        _ => return Err(value_err(format!("unknown wind `{wind}`"))),
    };
    match name {
        "central_d2" => Ok(LiftingScheme::CentralD2),
        "upwind_d2" => Ok(LiftingScheme::UpwindD2 { wind }),
        "central_d4" => Ok(LiftingScheme::CentralD4),
        _ => Err(value_err(format!("unknown lifting `{name}`"))),
    }
}

/// Coarse projective integrator for a scalar SDE.
#[pyclass(name = "CoarseStep", frozen)]
struct PyCoarseStep {
    cfg: CoarseStepConfig,
}

#[pymethods]
impl PyCoarseStep {
    #[new]
    #[pyo3(signature = (ensemble_size, micro_steps, dt_micro, dt_macro, alpha=0.0))]
    fn new(ensemble_size: usize, micro_steps: usize, dt_micro: f64, dt_macro: f64, alpha: f64) -> PyResult<Self> {
        let cfg = CoarseStepConfig::with_alpha(ensemble_size, micro_steps, dt_micro, dt_macro, alpha).map_err(value_err)?;
        Ok(Self { cfg })
    }

    fn effective_noise_std(&self) -> f64 {
        effective_noise_std(&self.cfg)
    }

    /// Returns `(trajectory, micro_steps_total)`. `theta = 0` gives zero drift.
    #[pyo3(signature = (x0, n_steps, seed, theta=0.0, noise=1.0))]
    fn run(&self, py: Python<'_>, x0: f64, n_steps: usize, seed: u64, theta: f64, noise: f64) -> PyResult<(Vec<f64>, u64)> {
        let model = SdeModel::ornstein_uhlenbeck(theta).with_noise_amplitude(noise);
        let cfg = self.cfg;
        let run = py
            .detach(|| run_coarse_trajectory(x0, &model, &cfg, n_steps, RngStreamSpec::new(seed, 0, 0)))
            .map_err(value_err)?;
        Ok((run.trajectory, run.ledger.micro_steps_total))
    }
}

/// Gap-tooth macro stepper on a periodic grid, using the exact tooth propagator.
#[pyclass(name = "GapTooth", frozen)]
struct PyGapTooth {
    stepper: GapToothStepper,
}

#[pymethods]
impl PyGapTooth {
    #[new]
    #[pyo3(signature = (pde, lifting, h, dt_micro, dt_macro, wind="positive"))]
    fn new(pde: &str, lifting: &str, h: f64, dt_micro: f64, dt_macro: f64, wind: &str) -> PyResult<Self> {
        let tooth = ToothConfig::unbuffered(h).map_err(value_err)?;
        let cfg = PatchConfig::new(lifting_from_name(lifting, wind)?, tooth, dt_micro, dt_macro)
            .map_err(value_err)?;
        Ok(Self {
            stepper: GapToothStepper {
                pde: pde_from_name(pde)?,
                cfg,
            },
        })
    }

    fn step(&self, values: Vec<f64>, dx: f64) -> PyResult<Vec<f64>> {
        let u = MacroState::new(values, dx, 0.0).map_err(value_err)?;
        Ok(self.stepper.advance(&u).map_err(value_err)?.values().to_vec())
    }

    fn update_matrix(&self, n: usize, dx: f64) -> PyResult<Vec<Vec<f64>>> {
        update_matrix(&self.stepper, n, dx).map_err(value_err)
    }

    /// Returns `(growth_factor_per_step, classification)` from a white-noise start.
    fn growth_factor(&self, py: Python<'_>, n: usize, dx: f64, steps: usize, seed: u64) -> PyResult<(f64, String)> {
        let u0 = white_noise_state(n, dx, seed).map_err(value_err)?;
        let report = py.detach(|| growth_factor_probe(&self.stepper, &u0, steps)).map_err(value_err)?;
        Ok((report.growth_factor_per_step, report.classified.as_str().to_string()))
    }
}

/// Lifts point `j` of a periodic grid and restricts it back.
#[pyfunction]
#[pyo3(signature = (values, dx, j, lifting, h, wind="positive"))]
fn lift_restrict(values: Vec<f64>, dx: f64, j: usize, lifting: &str, h: f64, wind: &str) -> PyResult<f64> {
    let u = MacroState::new(values, dx, 0.0).map_err(value_err)?;
    let p = lift(&u, j, lifting_from_name(lifting, wind)?, h).map_err(value_err)?;
    restrict(&ToothField::Exact(p), &ToothConfig::unbuffered(h).map_err(value_err)?).map_err(value_err)
}

/// Highest derivative order the microsolver's time derivative depends on.
#[pyfunction]
#[pyo3(signature = (pde, max_degree, seed=0, dt_micro=1e-3, h=0.1))]
fn detect_pde_order(pde: &str, max_degree: usize, seed: u64, dt_micro: f64, h: f64) -> PyResult<usize> {
    let probe = DerivativeProbe {
        max_degree,
        dt_micro,
        tooth: ToothConfig::unbuffered(h).map_err(value_err)?,
        evolution: Evolution::Exact,
    };
    let bb = derivative_blackbox(&pde_from_name(pde)?, &probe, 10_000_000).map_err(value_err)?;
    let report = detect_order(&bb, &DetectOptions::default(), &ProbeSpec::new(8, 64, seed)).map_err(value_err)?;
    Ok(report.detected_order)
}

/// Periodic random force field built from shells of plane waves.
#[pyclass(name = "ForceField", frozen)]
struct PyForceField {
    field: RandomForceField,
}

#[pymethods]
impl PyForceField {
    #[new]
    #[pyo3(signature = (dim, n_modes, directions, seed, spectrum=1.0, strength=1.0))]
    fn new(dim: usize, n_modes: usize, directions: usize, seed: u64, spectrum: f64, strength: f64) -> PyResult<Self> {
        let spec = FieldSpec {
            dim,
            n_modes,
            spectrum,
            strength,
            directions,
            seed,
        };
        Ok(Self {
            field: synthesize_force_field(&spec).map_err(value_err)?,
        })
    }

    fn force(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.field.dim() {
            return Err(value_err("position has the wrong dimension"));
        }
        Ok(self.field.force(&x))
    }

    fn potential(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.field.dim() {
            return Err(value_err("position has the wrong dimension"));
        }
        Ok(self.field.potential(&x))
    }

    /// Returns `(times, positions, velocities)` with vectors stored flat.
    #[pyo3(signature = (delta, t_final, dt, x0, v0, output_every=1))]
    #[allow(clippy::too_many_arguments)]
    fn integrate(
        &self,
        py: Python<'_>,
        delta: f64,
        t_final: f64,
        dt: f64,
        x0: Vec<f64>,
        v0: Vec<f64>,
        output_every: usize,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let run = KpRun {
            delta,
            t_final,
            dt,
            output_every,
        };
        let traj = py.detach(|| kp_integrate(&self.field, &run, &x0, &v0)).map_err(value_err)?;
        Ok((traj.times, traj.x, traj.v))
    }
}

/// Result of running a configured experiment.
#[pyclass(name = "RunResult", frozen, get_all)]
struct PyRunResult {
    summary: String,
    passed: bool,
    /// `(name, value, tolerance, verdict)` per metric.
    metrics: Vec<(String, f64, String, String)>,
    /// `(name, csv)` per table.
    tables: Vec<(String, String)>,
    errors: Vec<String>,
}

/// Parses config text and returns its resolved echo.
#[pyfunction]
fn resolve_config(text: &str) -> PyResult<String> {
    Ok(parse_config(text).map_err(value_err)?.echo())
}

/// Runs the experiment described by config text.
#[pyfunction]
#[pyo3(signature = (text, seed=None))]
fn run_config(py: Python<'_>, text: &str, seed: Option<u64>) -> PyResult<PyRunResult> {
    let mut cfg = parse_config(text).map_err(value_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let record = py.detach(|| run_experiment(&cfg));
    Ok(PyRunResult {
        summary: record.summary(),
        passed: record.all_pass(),
        metrics: record
            .metrics
            .iter()
            .map(|m| (m.name.clone(), m.value, m.tolerance.to_string(), m.verdict.as_str().to_string()))
            .collect(),
        tables: record.tables.iter().map(|t| (t.name.clone(), t.to_csv())).collect(),
        errors: record.errors.clone(),
    })
}

#[pymodule]
fn eqfree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCoarseStep>()?;
    m.add_class::<PyGapTooth>()?;
    m.add_class::<PyForceField>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(lift_restrict, m)?)?;
    m.add_function(wrap_pyfunction!(detect_pde_order, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
