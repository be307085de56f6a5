//! The four canonical experiments, driven from an [`ExperimentConfig`].

use std::f64::consts::TAU;

use crate::analysis::{
    convergence_order, growth_factor_probe, increment_moments, sample_variance, update_matrix, white_noise_state,
    Stability, STABLE_MARGIN, UNSTABLE_MARGIN,
};
use crate::config::{
    DetectTarget, Drift, EvolutionKind, ExperimentConfig, KpParams, OrderDetectParams, Params, PatchParams,
    ProjectiveParams, StabilityExpectation,
};
use crate::error::{Error, Result};
use crate::grid::{BufferWidth, ToothConfig};
use crate::kp::{ballistic_reference, brownian_reference, msd_exponent, run_scale_sweep, FieldSpec, ScaleSweep};
use crate::micro::{fd_stability_bound, influence_radius, MicroGrid, SdeModel};
use crate::order_detect::{
    derivative_blackbox, detect_order, BlackBoxFunction, DerivativeProbe, DetectOptions, ProbeSpec, Threshold,
};
use crate::output::{Metric, RunRecord, Table};
use crate::patch::{Evolution, GapToothStepper, LiftingScheme, PatchConfig};
use crate::pde::PdeSpec;
use crate::projective::{direct_em_path, effective_noise_std, run_coarse_trajectory, CoarseStepConfig};
use crate::rng::RngStreamSpec;

/// Stream id of the direct reference path, far from the ensemble streams.
const REFERENCE_STREAM: u64 = 1 << 48;

/// Runs the configured experiment. Module errors are recorded, not propagated.
pub fn run_experiment(cfg: &ExperimentConfig) -> RunRecord {
    let mut record = RunRecord::new(cfg.experiment.name(), cfg.seed, cfg.echo());
    let outcome = match &cfg.params {
        Params::Projective(p) => run_projective(p, cfg.seed, &mut record),
        Params::Patch(p) => run_patch(p, cfg.seed, &mut record),
        Params::OrderDetect(p) => run_order_detect(p, cfg.seed, &mut record),
        Params::Kp(p) => run_kp(p, cfg.seed, &mut record),
    };
    if let Err(e) = outcome {
        record.error(cfg.experiment.name(), e);
    }
    record
}

fn relative_error(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs()
}

/// Stationary variance of the coarse AR(1) map for OU drift at `alpha = 0`.
///
/// Member `i` after `k` Euler–Maruyama steps is `x c^k + σ Σ c^(k-1-m) √δt ξ_m`
/// with `c = 1 - θ δt`, so the macro map is `x ↦ a x + s ζ` with
/// `a = 1 - Δt (1 - c^k)/(k δt)` and `s² = (Δt/(k δt))² σ² δt Σ c^(2m) / N`.
pub fn ou_coarse_variance(cfg: &CoarseStepConfig, theta: f64, noise: f64) -> f64 {
    let (k, dt, big) = (cfg.micro_steps() as i32, cfg.dt_micro(), cfg.dt_macro());
    let c = 1.0 - theta * dt;
    let window = k as f64 * dt;
    let a = 1.0 - big * (1.0 - c.powi(k)) / window;
    let geometric: f64 = (0..k).map(|m| c.powi(2 * m)).sum();
    let s2 = (big / window).powi(2) * noise * noise * dt * geometric / cfg.ensemble_size() as f64;
    s2 / (1.0 - a * a)
}

fn expectation_check(record: &mut RunRecord, name: &str, value: f64, tolerance: f64, expect: Option<bool>) {
    match expect {
        Some(true) => record.push(Metric::within(name, value, 0.0, tolerance)),
        Some(false) => record.push(Metric::outside(name, value, 0.0, tolerance)),
        None => record.push(Metric::info(name, value)),
    }
}

fn run_projective(p: &ProjectiveParams, seed: u64, record: &mut RunRecord) -> Result<()> {
    let cfg = p.step_config()?;
    let model = match p.drift {
        Drift::Zero => SdeModel::pure_noise(),
        Drift::OrnsteinUhlenbeck => SdeModel::ornstein_uhlenbeck(p.theta),
    }
    .with_noise_amplitude(p.noise);
    let run = run_coarse_trajectory(p.x0, &model, &cfg, p.n_steps, RngStreamSpec::new(seed, 0, 0))?;

    let mut table = Table::new("trajectory", &["step", "time", "x"]);
    for (n, x) in run.trajectory.iter().enumerate() {
        table.push_numbers(&[n as f64, n as f64 * cfg.dt_macro(), *x]);
    }
    record.tables.push(table);

    let ledger = run.ledger;
    let brute = ledger.brute_force_steps(&cfg);
    record.push(Metric::info("macro_steps", ledger.macro_steps_total as f64));
    record.push(Metric::info("micro_steps_total", ledger.micro_steps_total as f64));
    record.push(Metric::info("brute_force_steps", brute as f64));
    record.push(Metric::info("cost_ratio", ledger.cost_ratio(&cfg)));
    record.push(Metric::info("sampled_time_over_dt_macro", cfg.sampled_time() / cfg.dt_macro()));
    if p.expect_consistent == Some(true) {
        record.push(Metric::within(
            "cost_parity",
            ledger.micro_steps_total as f64 - brute as f64,
            0.0,
            0.0,
        ));
    }
    if let Some(step) = run.diverged_at {
        return Err(Error::BlowUp {
            time: step as f64 * cfg.dt_macro(),
        });
    }

    match p.drift {
        Drift::Zero => {
            let moments = increment_moments(&run.trajectory, cfg.dt_macro())?;
            let predicted = p.noise * effective_noise_std(&cfg);
            let band = p.n_se * moments.std_se;
            record.push(Metric::info("predicted_increment_std", predicted));
            record.push(Metric::within(
                "increment_std",
                moments.std_per_step,
                predicted - band,
                predicted + band,
            ));
            record.push(Metric::info("increment_mean_rate", moments.mean_rate));
        }
        Drift::OrnsteinUhlenbeck => {
            let tail = &run.trajectory[run.trajectory.len() / 10..];
            if tail.len() < 1000 {
                return Err(Error::InsufficientData(format!(
                    "variance checks need >= 1000 tail points, got {}",
                    tail.len()
                )));
            }
            let measured = sample_variance(tail);
            record.push(Metric::info("tail_variance", measured));
            if cfg.alpha() == 0.0 {
                let suppressed = ou_coarse_variance(&cfg, p.theta, p.noise);
                record.push(Metric::info("coarse_map_variance", suppressed));
                record.push(Metric::within(
                    "coarse_map_variance_rel_error",
                    relative_error(measured, suppressed),
                    0.0,
                    p.tolerance,
                ));
            }
            let consistent = p.noise * p.noise / (2.0 * p.theta);
            record.push(Metric::info("consistent_variance", consistent));
            expectation_check(
                record,
                "consistent_variance_rel_error",
                relative_error(measured, consistent),
                p.reference_tolerance,
                p.expect_consistent,
            );
            let stride = (cfg.dt_macro() / cfg.dt_micro()).round().max(1.0) as usize;
            let direct = direct_em_path(
                p.x0,
                &model,
                cfg.dt_micro(),
                p.n_steps,
                stride,
                RngStreamSpec::new(seed, REFERENCE_STREAM, 0),
            )?;
            let reference = sample_variance(&direct[direct.len() / 10..]);
            record.push(Metric::info("direct_reference_variance", reference));
            record.push(Metric::info("direct_reference_micro_steps", (p.n_steps * stride) as f64));
            expectation_check(
                record,
                "direct_reference_rel_error",
                relative_error(measured, reference),
                p.reference_tolerance,
                p.expect_consistent,
            );
        }
    }
    Ok(())
}

/// Patch configuration for `n` points over one period with the configured ratios.
fn patch_setup(p: &PatchParams, pde: &PdeSpec, dx: f64, dt_macro: f64) -> Result<PatchConfig> {
    let h = p.h_fraction * dx;
    let dt_micro = p.dt_micro_fraction * dt_macro;
    match p.evolution {
        EvolutionKind::Exact => Ok(PatchConfig::new(p.lifting, ToothConfig::unbuffered(h)?, dt_micro, dt_macro)?
            .with_alpha(p.alpha)?),
        EvolutionKind::Fd => {
            let micro_dx = h / p.micro_cells as f64;
            let micro_dt = 0.5 * fd_stability_bound(pde, micro_dx)?;
            let big_h = h + 2.2 * influence_radius(pde, dt_micro)? + 4.0 * micro_dx;
            let tooth = ToothConfig::new(h, BufferWidth::Finite(big_h))?;
            Ok(PatchConfig::new(p.lifting, tooth, dt_micro, dt_macro)?
                .with_alpha(p.alpha)?
                .with_evolution(Evolution::FdBuffered(MicroGrid {
                    dx: micro_dx,
                    dt: micro_dt,
                })))
        }
    }
}

/// Closed-form update for single-term even equations with exact evolution:
/// `U + Δt a_m D_m U` when the lifting resolves `D_m`, the identity when it does not.
fn reference_update(pde: &PdeSpec, lifting: LiftingScheme, n: usize, dx: f64, dt: f64) -> Option<(String, Vec<Vec<f64>>)> {
    let terms: Vec<(u32, f64)> = pde.terms().collect();
    let &[(order, coeff)] = terms.as_slice() else {
        return None;
    };
    let stencil: &[f64] = match order {
        2 => &[1.0, -2.0, 1.0],
        4 => &[1.0, -4.0, 6.0, -4.0, 1.0],
        _ => return None,
    };
    let degree = lifting.degree() as u32;
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if degree < order {
        return Some(("identity".into(), m));
    }
    if degree > order {
        return None;
    }
    let half = stencil.len() / 2;
    let scale = dt * coeff / dx.powi(order as i32);
    for (i, row) in m.iter_mut().enumerate() {
        for (s, w) in stencil.iter().enumerate() {
            let j = (i + n + s - half) % n;
            row[j] += scale * w;
        }
    }
    Some((format!("explicit_d{order}"), m))
}

fn run_patch(p: &PatchParams, seed: u64, record: &mut RunRecord) -> Result<()> {
    let pde = p.pde.spec();
    let order = pde.max_order() as i32;
    record.note("equation", pde.to_string().replace(' ', ""));
    let dx = TAU / p.n_points as f64;
    let dt_macro = p.dt_ratio * dx.powi(order);
    let stepper = GapToothStepper {
        pde: pde.clone(),
        cfg: patch_setup(p, &pde, dx, dt_macro)?,
    };
    record.push(Metric::info("dt_macro", dt_macro));
    record.push(Metric::info("dt_micro", stepper.cfg.dt_micro));

    let probe = growth_factor_probe(&stepper, &white_noise_state(p.n_points, dx, seed)?, p.probe_steps)?;
    let growth = probe.growth_factor_per_step;
    record.note("classification", probe.classified.as_str());
    let mut norms = Table::new("growth_probe", &["step", "l2_norm"]);
    for (i, n) in probe.norms.iter().enumerate() {
        norms.push_numbers(&[i as f64, *n]);
    }
    record.tables.push(norms);
    record.push(Metric::info("probe_steps_run", probe.steps_run as f64));
    match p.expect_stability {
        Some(StabilityExpectation::Stable) => {
            record.push(Metric::within("growth_factor", growth, 0.0, 1.0 - STABLE_MARGIN))
        }
        Some(StabilityExpectation::Marginal) => record.push(Metric::within(
            "growth_factor",
            growth,
            1.0 - STABLE_MARGIN,
            1.0 + UNSTABLE_MARGIN,
        )),
        Some(StabilityExpectation::Unstable) => {
            record.push(Metric::outside("growth_factor", growth, 0.0, 1.0 + UNSTABLE_MARGIN))
        }
        None => record.push(Metric::info("growth_factor", growth)),
    }
    if let Some((lo, hi)) = p.growth_band {
        record.push(Metric::within("growth_factor_band", growth, lo, hi));
    }
    debug_assert_eq!(Stability::classify(growth), probe.classified);

    if p.evolution == EvolutionKind::Exact && p.alpha == 0.0 {
        if let Some((name, expected)) = reference_update(&pde, p.lifting, p.n_points, dx, dt_macro) {
            let actual = update_matrix(&stepper, p.n_points, dx)?;
            let deviation = actual
                .iter()
                .flatten()
                .zip(expected.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            record.note("matrix_reference", name);
            record.push(Metric::within("matrix_max_deviation", deviation, 0.0, p.matrix_tolerance));
        }
    }

    if p.expect_order.is_some() || p.expect_error_decrease {
        let (re, im) = pde.symbol(1.0);
        let exact = move |x: f64, t: f64| (re * t).exp() * (x + im * t).sin();
        let family = |dx: f64| -> Result<(GapToothStepper, usize)> {
            let steps = (p.t_final / (p.dt_ratio * dx.powi(order)) - 1e-9).ceil().max(1.0) as usize;
            let dt = p.t_final / steps as f64;
            Ok((
                GapToothStepper {
                    pde: pde.clone(),
                    cfg: patch_setup(p, &pde, dx, dt)?,
                },
                steps,
            ))
        };
        let report = convergence_order(&p.grids, TAU, family, exact)?;
        let mut table = Table::new("convergence", &["n", "dx", "l2_error"]);
        for ((n, dx), e) in report.grid_sizes.iter().zip(&report.spacings).zip(&report.errors) {
            table.push_numbers(&[*n as f64, *dx, *e]);
        }
        record.tables.push(table);
        for w in &report.warnings {
            record.note("convergence_warning", w.replace(' ', "_"));
        }
        match p.expect_order {
            Some(q) => record.push(Metric::within(
                "convergence_order",
                report.fitted_order,
                q - p.order_tolerance,
                q + p.order_tolerance,
            )),
            None => record.push(Metric::info("convergence_order", report.fitted_order)),
        }
        if p.expect_error_decrease {
            let worst = report.errors.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            record.push(Metric::within("max_refinement_error_ratio", worst, 0.0, 1.0 - 1e-9));
        }
    }
    Ok(())
}

/// The adversarial black box: depends on its first and last inputs only.
pub fn adversarial_blackbox(arity: usize, budget: usize) -> BlackBoxFunction {
    BlackBoxFunction::new(arity, budget, move |x| x[0] + x[arity - 1])
}

fn run_order_detect(p: &OrderDetectParams, seed: u64, record: &mut RunRecord) -> Result<()> {
    let f = match p.target {
        DetectTarget::Adversarial => adversarial_blackbox(p.arity, p.budget),
        DetectTarget::Pde(name) => {
            let pde = name.spec();
            let (tooth, evolution) = match p.evolution {
                EvolutionKind::Exact => (ToothConfig::unbuffered(p.h)?, Evolution::Exact),
                EvolutionKind::Fd => {
                    let micro_dx = p.h / p.micro_cells as f64;
                    let big_h = p.h + 2.2 * influence_radius(&pde, p.dt_micro)? + 4.0 * micro_dx;
                    (
                        ToothConfig::new(p.h, BufferWidth::Finite(big_h))?,
                        Evolution::FdBuffered(MicroGrid {
                            dx: micro_dx,
                            dt: 0.5 * fd_stability_bound(&pde, micro_dx)?,
                        }),
                    )
                }
            };
            record.note("equation", pde.to_string().replace(' ', ""));
            derivative_blackbox(
                &pde,
                &DerivativeProbe {
                    max_degree: p.d_max,
                    dt_micro: p.dt_micro,
                    tooth,
                    evolution,
                },
                p.budget,
            )?
        }
    };
    let options = DetectOptions {
        threshold: Threshold::Relative {
            factor: p.threshold_factor,
            floor: p.threshold_floor,
        },
        stop_after: p.stop_after,
    };
    let report = detect_order(&f, &options, &ProbeSpec::new(p.n_base, p.n_perturb, seed))?;
    let mut table = Table::new("variances", &["label", "variance", "dependent"]);
    for ((label, v), d) in report.labels.iter().zip(&report.per_index_variance).zip(&report.dependent) {
        table.push_numbers(&[*label as f64, *v, if *d { 1.0 } else { 0.0 }]);
    }
    record.tables.push(table);
    record.push(Metric::info("threshold_used", report.threshold_used));
    record.push(Metric::info("budget_used", report.budget_used as f64));
    record.push(Metric::info("inputs_scanned", report.per_index_variance.len() as f64));
    if report.budget_exhausted {
        record.error("order-detect", "evaluation budget exhausted before the scan finished");
    }
    let order = report.detected_order as f64;
    match p.expect_order {
        Some(q) => record.push(Metric::within("detected_order", order, q as f64, q as f64)),
        None => record.push(Metric::info("detected_order", order)),
    }
    if let Some(label) = report.stopped_early {
        record.push(Metric::info("stopped_at_label", label as f64));
    }
    let stopped = if report.stopped_early.is_some() { 1.0 } else { 0.0 };
    match p.expect_stopped_early {
        Some(true) => record.push(Metric::within("stopped_early", stopped, 1.0, 1.0)),
        Some(false) => record.push(Metric::within("stopped_early", stopped, 0.0, 0.0)),
        None => record.push(Metric::info("stopped_early", stopped)),
    }
    Ok(())
}

fn run_kp(p: &KpParams, seed: u64, record: &mut RunRecord) -> Result<()> {
    record.note(
        "field",
        format!(
            "cosine_series_surrogate:dim={},shells={},directions={},spectrum={}",
            p.dim, p.n_modes, p.directions, p.spectrum
        ),
    );
    if p.reference_checks {
        let samples = p.samples + 1;
        let dt_out = 1.0 / p.samples as f64;
        for (name, target, trajs) in [
            ("gamma_brownian_reference", 1.0, brownian_reference(p.n_trajectories, samples, p.dim, dt_out, seed)?),
            ("gamma_ballistic_reference", 2.0, ballistic_reference(p.n_trajectories, samples, p.dim, dt_out, seed)?),
        ] {
            let fit = msd_exponent(&trajs, 0.01, 0.25)?;
            record.push(Metric::within(
                name,
                fit.gamma,
                target - p.reference_tolerance,
                target + p.reference_tolerance,
            ));
        }
    }
    let sweep = ScaleSweep {
        field: FieldSpec {
            dim: p.dim,
            n_modes: p.n_modes,
            spectrum: p.spectrum,
            strength: p.strength,
            directions: p.directions,
            seed: 0,
        },
        n_trajectories: p.n_trajectories,
        speed: p.speed,
        seed,
        deltas: p.deltas.clone(),
        t_finals: p.t_final.clone(),
        dt_max: p.dt_max,
        dt_factor: p.dt_factor,
        samples: p.samples,
        halving_horizon: p.halving_horizon,
        phase_shift: p.phase_shift,
    };
    let rows = run_scale_sweep(&sweep)?;
    let mut table = Table::new(
        "sweep",
        &[
            "delta",
            "t_final",
            "dt",
            "lag_min",
            "lag_max",
            "gamma",
            "fit_residual",
            "gamma_shifted",
            "halving_deviation",
        ],
    );
    let mut msd = Table::new("msd", &["delta", "lag", "msd"]);
    for row in &rows {
        table.push_numbers(&[
            row.delta,
            row.t_final,
            row.dt,
            row.lag_min,
            row.lag_max,
            row.fit.gamma,
            row.fit.residual,
            row.gamma_shifted.unwrap_or(f64::NAN),
            row.halving_deviation,
        ]);
        for (lag, m) in row.fit.lags.iter().zip(&row.fit.msd) {
            msd.push_numbers(&[row.delta, *lag, *m]);
        }
        let tag = format!("delta={}", row.delta);
        let checked = [(p.ballistic_delta, p.ballistic_band), (p.diffusive_delta, p.diffusive_band)]
            .into_iter()
            .find(|(d, _)| *d == Some(row.delta));
        match checked {
            Some((_, (lo, hi))) => record.push(Metric::within(format!("gamma_{tag}"), row.fit.gamma, lo, hi)),
            None => record.push(Metric::info(format!("gamma_{tag}"), row.fit.gamma)),
        }
        record.push(Metric::info(format!("fit_residual_{tag}"), row.fit.residual));
        if let Some(g) = row.gamma_shifted {
            record.push(Metric::within(
                format!("phase_shift_gamma_change_{tag}"),
                (g - row.fit.gamma).abs(),
                0.0,
                p.shift_tolerance,
            ));
        }
        record.push(Metric::within(
            format!("step_halving_deviation_{tag}"),
            row.halving_deviation,
            0.0,
            crate::kp::STEP_HALVING_TOLERANCE,
        ));
    }
    record.tables.push(table);
    record.tables.push(msd);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::output::Verdict;

    fn run(text: &str) -> RunRecord {
        run_experiment(&parse_config(text).unwrap())
    }

    #[test]
    fn ou_coarse_variance_matches_leading_order() {
        let cfg = CoarseStepConfig::new(1000, 10, 1e-3, 0.1).unwrap();
        let leading = 0.1 / 10.0 / (2.0 - 0.1);
        assert!((ou_coarse_variance(&cfg, 1.0, 1.0) / leading - 1.0).abs() < 0.02);
    }

    #[test]
    fn reference_update_cases() {
        let heat = reference_update(&PdeSpec::heat(), LiftingScheme::CentralD2, 8, 0.5, 0.1).unwrap();
        assert_eq!(heat.0, "explicit_d2");
        assert!((heat.1[3][3] - (1.0 - 2.0 * 0.1 / 0.25)).abs() < 1e-15);
        assert!((heat.1[0][7] - 0.1 / 0.25).abs() < 1e-15);
        let bi = reference_update(&PdeSpec::biharmonic(), LiftingScheme::CentralD2, 8, 0.5, 0.1).unwrap();
        assert_eq!(bi.0, "identity");
        assert!(reference_update(&PdeSpec::advection(), LiftingScheme::CentralD2, 8, 0.5, 0.1).is_none());
        assert!(reference_update(&PdeSpec::heat(), LiftingScheme::CentralD4, 8, 0.5, 0.1).is_none());
    }

    #[test]
    fn heat_patch_is_stable_and_second_order() {
        let r = run("[experiment]\nname = patch\n[parameters]\npde = heat\nn_points = 32\nprobe_steps = 200\nexpect_stability = stable\nexpect_order = 2\n");
        assert!(r.all_pass(), "{}", r.summary());
        assert_eq!(r.metric("matrix_max_deviation").unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn central_advection_is_unstable() {
        let r = run("[experiment]\nname = patch\n[parameters]\npde = advection\nprobe_steps = 400\nexpect_stability = unstable\ngrowth_band = 1.10, 1.13\n");
        assert!(r.all_pass(), "{}", r.summary());
        assert!(r.summary().contains("note classification unstable"));
    }

    #[test]
    fn module_errors_are_recorded() {
        // Too few macro steps for the moment estimate.
        let r = run("[experiment]\nname = projective\n[parameters]\nN = 2\nk = 2\ndt_micro = 1e-3\ndt_macro = 0.1\nn_steps = 10\n");
        assert!(!r.all_pass());
        assert_eq!(r.errors.len(), 1);
        assert!(r.summary().contains("error projective:"));
    }

    #[test]
    fn adversarial_scan_stops_early() {
        let r = run("[experiment]\nname = order-detect\n[parameters]\ntarget = adversarial\nstop_after = 5\nexpect_order = 1\nexpect_stopped_early = true\n");
        assert!(r.all_pass(), "{}", r.summary());
        assert_eq!(r.metric("stopped_at_label").unwrap().value, 6.0);
    }
}
