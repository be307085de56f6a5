//! Gap-tooth patch dynamics on a periodic 1D macro grid.
//!
//! Each macro step runs four stages at every grid point `x_j`:
//!
//! 1. **lift**: build a local Taylor polynomial from neighbouring macro values,
//!    with `D_0` corrected so that its tooth average reproduces `U_j`;
//! 2. **evolve**: run the microsolver on that polynomial for time `δt`;
//! 3. **restrict**: average the result over the tooth of width `h`;
//! 4. **extrapolate**: `U_j + Δt (Ũ_δt - Ũ_αδt) / ((1 - α) δt)`.
//!
//! With the central quadratic lifting, heat reproduces the classical explicit
//! scheme, advection becomes forward-time centered-space (unstable), and the
//! biharmonic equation is annihilated (the step is the identity).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{MacroState, ToothConfig};
use crate::micro::{evolve_fd_buffered, evolve_poly_exact, MicroFieldState, MicroGrid};
use crate::pde::PdeSpec;
use crate::poly::TaylorPolynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindSign {
    /// Transport towards increasing `x`.
    Positive,
    Negative,
}

impl WindSign {
    pub fn as_f64(self) -> f64 {
        match self {
            WindSign::Positive => 1.0,
            WindSign::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftingScheme {
    /// Three-point central differences for `D_1`, `D_2`.
    CentralD2,
    /// Central `D_2`, one-sided `D_1` taken from the upwind side.
    UpwindD2 { wind: WindSign },
    /// Five-point central differences for `D_1..D_4`.
    CentralD4,
}

impl LiftingScheme {
    pub fn degree(&self) -> usize {
        match self {
            LiftingScheme::CentralD2 | LiftingScheme::UpwindD2 { .. } => 2,
            LiftingScheme::CentralD4 => 4,
        }
    }

    pub fn min_points(&self) -> usize {
        match self {
            LiftingScheme::CentralD4 => 5,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evolution {
    /// Exact propagator on the whole line (`H = ∞`).
    Exact,
    /// Explicit finite differences on the buffered box of width `H`.
    FdBuffered(MicroGrid),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    pub lifting: LiftingScheme,
    pub tooth: ToothConfig,
    pub dt_micro: f64,
    pub dt_macro: f64,
    pub alpha: f64,
    pub evolution: Evolution,
}

impl PatchConfig {
    pub fn new(lifting: LiftingScheme, tooth: ToothConfig, dt_micro: f64, dt_macro: f64) -> Result<Self> {
        let cfg = Self {
            lifting,
            tooth,
            dt_micro,
            dt_macro,
            alpha: 0.0,
            evolution: Evolution::Exact,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_evolution(mut self, evolution: Evolution) -> Self {
        self.evolution = evolution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_micro > 0.0) || !self.dt_micro.is_finite() {
            return Err(Error::invalid("dt_micro", format!("must be positive, got {}", self.dt_micro)));
        }
        if !(self.dt_macro >= self.dt_micro) || !self.dt_macro.is_finite() {
            return Err(Error::invalid(
                "dt_macro",
                format!("macro step {} must be at least the micro window {}", self.dt_macro, self.dt_micro),
            ));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Local Taylor polynomial around `x_j` from the macro state.
pub fn lift(u: &MacroState, j: usize, scheme: LiftingScheme, h: f64) -> Result<TaylorPolynomial> {
    if u.len() < scheme.min_points() {
        return Err(Error::invalid(
            "values",
            format!("{scheme:?} needs at least {} grid points", scheme.min_points()),
        ));
    }
    let dx = u.dx();
    let at = |o: isize| u.at(j, o);
    let d2_central = (at(1) - 2.0 * at(0) + at(-1)) / (dx * dx);
    let coeffs = match scheme {
        LiftingScheme::CentralD2 => {
            let d1 = (at(1) - at(-1)) / (2.0 * dx);
            vec![at(0) - h * h * d2_central / 24.0, d1, d2_central]
        }
        LiftingScheme::UpwindD2 { wind } => {
            let d1 = match wind {
                WindSign::Positive => (at(0) - at(-1)) / dx,
                WindSign::Negative => (at(1) - at(0)) / dx,
            };
            vec![at(0) - h * h * d2_central / 24.0, d1, d2_central]
        }
        LiftingScheme::CentralD4 => {
            let (m2, m1, c, p1, p2) = (at(-2), at(-1), at(0), at(1), at(2));
            let d1 = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * dx);
            let d2 = (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * dx * dx);
            let d3 = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * dx.powi(3));
            let d4 = (p2 - 4.0 * p1 + 6.0 * c - 4.0 * m1 + m2) / dx.powi(4);
            let h2 = h * h;
            vec![c - h2 * d2 / 24.0 - h2 * h2 * d4 / 1920.0, d1, d2, d3, d4]
        }
    };
    TaylorPolynomial::new(u.position(j), coeffs)
}

/// Microscale data inside one tooth after evolution.
#[derive(Debug, Clone, PartialEq)]
pub enum ToothField {
    Exact(TaylorPolynomial),
    Sampled { center: f64, field: MicroFieldState },
}

/// Average of the evolved tooth data over the averaging width `h`.
pub fn restrict(field: &ToothField, tooth: &ToothConfig) -> Result<f64> {
    match field {
        ToothField::Exact(p) => p.average(tooth.h()),
        ToothField::Sampled { center, field } => field.tooth_average(*center, tooth.h()),
    }
}

/// `U_n + Δt (Ũ_δt - Ũ_αδt) / ((1 - α) δt)`.
pub fn extrapolate(u_n: f64, u_tilde_dt: f64, u_tilde_alpha: f64, cfg: &PatchConfig) -> Result<f64> {
    if !(0.0..1.0).contains(&cfg.alpha) {
        return Err(Error::invalid("alpha", format!("must lie in [0, 1), got {}", cfg.alpha)));
    }
    Ok(u_n + cfg.dt_macro * (u_tilde_dt - u_tilde_alpha) / ((1.0 - cfg.alpha) * cfg.dt_micro))
}

/// Evolves lifted data for `dt` with the configured microsolver.
pub fn evolve_tooth(p: &TaylorPolynomial, pde: &PdeSpec, dt: f64, cfg: &PatchConfig) -> Result<ToothField> {
    match &cfg.evolution {
        Evolution::Exact => Ok(ToothField::Exact(evolve_poly_exact(p, pde, dt)?)),
        Evolution::FdBuffered(micro) => Ok(ToothField::Sampled {
            center: p.center(),
            field: evolve_fd_buffered(p, pde, dt, &cfg.tooth, micro)?,
        }),
    }
}

fn tooth_update(u: &MacroState, j: usize, pde: &PdeSpec, cfg: &PatchConfig) -> Result<f64> {
    let h = cfg.tooth.h();
    let p = lift(u, j, cfg.lifting, h)?;
    let u_dt = restrict(&evolve_tooth(&p, pde, cfg.dt_micro, cfg)?, &cfg.tooth)?;
    let u_alpha = if cfg.alpha == 0.0 {
        u.values()[j]
    } else {
        restrict(&evolve_tooth(&p, pde, cfg.alpha * cfg.dt_micro, cfg)?, &cfg.tooth)?
    };
    extrapolate(u.values()[j], u_dt, u_alpha, cfg)
}

/// One macro step of patch dynamics.
pub fn gap_tooth_step(u: &MacroState, pde: &PdeSpec, cfg: &PatchConfig) -> Result<MacroState> {
    cfg.validate()?;
    cfg.tooth.check_against(u)?;
    let update = |j: usize| tooth_update(u, j, pde, cfg).map_err(|e| e.in_tooth(j));
    let values: Vec<f64> = match cfg.evolution {
        Evolution::Exact => (0..u.len()).map(update).collect::<Result<_>>()?,
        Evolution::FdBuffered(_) => (0..u.len()).into_par_iter().map(update).collect::<Result<_>>()?,
    };
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite("macro update").in_tooth(j));
    }
    u.with_values(values, u.time() + cfg.dt_macro)
}

/// A map advancing a macro state by one step.
pub trait MacroStepper: Sync {
    fn advance(&self, u: &MacroState) -> Result<MacroState>;
}

impl<F> MacroStepper for F
where
    F: Fn(&MacroState) -> Result<MacroState> + Sync,
{
    fn advance(&self, u: &MacroState) -> Result<MacroState> {
        self(u)
    }
}

/// [`gap_tooth_step`] with a fixed equation and configuration.
#[derive(Debug, Clone)]
pub struct GapToothStepper {
    pub pde: PdeSpec,
    pub cfg: PatchConfig,
}

impl MacroStepper for GapToothStepper {
    fn advance(&self, u: &MacroState) -> Result<MacroState> {
        gap_tooth_step(u, &self.pde, &self.cfg)
    }
}
