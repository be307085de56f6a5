//! Microscale evolution operators.
//!
//! Three microsolvers are provided:
//!
//! - [`evolve_poly_exact`] solves a constant-coefficient linear PDE exactly on
//!   polynomial data posed on the whole line. The exponential series of the
//!   spatial operator terminates because differentiation is nilpotent on
//!   polynomials.
//! - [`evolve_fd_buffered`] solves the same PDE with an explicit finite-difference
//!   scheme on a finite box `[c - H/2, c + H/2]`, holding the boundary values at
//!   their initial data. This is a deliberately crude boundary condition: the
//!   averaged tooth only sees it if the buffer is too narrow.
//! - [`em_step`] is a single Euler–Maruyama step for a scalar SDE.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{BufferWidth, ToothConfig};
use crate::pde::PdeSpec;
use crate::poly::TaylorPolynomial;

/// Scalar SDE `dx = b(x) dt + σ dW`.
#[derive(Clone)]
pub struct SdeModel {
    drift: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    noise_amplitude: f64,
}

impl SdeModel {
    pub fn new(drift: impl Fn(f64) -> f64 + Send + Sync + 'static, noise_amplitude: f64) -> Self {
        Self {
            drift: Arc::new(drift),
            noise_amplitude,
        }
    }

    /// `b ≡ 0`, unit noise.
    pub fn pure_noise() -> Self {
        Self::new(|_| 0.0, 1.0)
    }

    /// `b(x) = -θ x`, unit noise.
    pub fn ornstein_uhlenbeck(theta: f64) -> Self {
        Self::new(move |x| -theta * x, 1.0)
    }

    pub fn with_noise_amplitude(self, noise_amplitude: f64) -> Self {
        Self {
            noise_amplitude,
            ..self
        }
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn noise_amplitude(&self) -> f64 {
        self.noise_amplitude
    }
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("noise_amplitude", &self.noise_amplitude)
            .finish_non_exhaustive()
    }
}

/// One Euler–Maruyama step `x + b(x) dt + σ sqrt(dt) ξ`.
pub fn em_step(x: f64, model: &SdeModel, dt_micro: f64, noise: f64) -> Result<f64> {
    if !(dt_micro > 0.0) {
        return Err(Error::invalid("dt_micro", format!("must be positive, got {dt_micro}")));
    }
    Ok(x + model.drift(x) * dt_micro + model.noise_amplitude * dt_micro.sqrt() * noise)
}

/// Exact solution at time `dt` of `∂_t u = L u` from polynomial data on the whole line:
/// `Σ_m dt^m / m! L^m p`.
pub fn evolve_poly_exact(p: &TaylorPolynomial, pde: &PdeSpec, dt: f64) -> Result<TaylorPolynomial> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("evolution time must be non-negative, got {dt}")));
    }
    let mut result = p.clone();
    let mut term = p.clone();
    let mut m = 1.0;
    loop {
        term = pde.apply(&term).scaled(dt / m);
        if term.is_zero() {
            break;
        }
        result.add_assign(&term);
        m += 1.0;
    }
    Ok(result)
}

/// Micro grid for the finite-difference path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroGrid {
    /// Requested spacing; the box is split into a whole number of cells, so the
    /// spacing actually used may be slightly smaller.
    pub dx: f64,
    pub dt: f64,
}

/// Sampled micro field on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroFieldState {
    samples: Vec<f64>,
    left: f64,
    dx: f64,
    time: f64,
}

impl MicroFieldState {
    pub const MIN_SAMPLES: usize = 5;

    pub fn new(samples: Vec<f64>, left: f64, dx: f64, time: f64) -> Result<Self> {
        if samples.len() < Self::MIN_SAMPLES {
            return Err(Error::invalid(
                "samples",
                format!("need at least {} micro samples, got {}", Self::MIN_SAMPLES, samples.len()),
            ));
        }
        if !(dx > 0.0) {
            return Err(Error::invalid("dx_micro", format!("must be positive, got {dx}")));
        }
        Ok(Self {
            samples,
            left,
            dx,
            time,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.left + self.dx * (self.samples.len() - 1) as f64
    }

    pub fn position(&self, i: usize) -> f64 {
        self.left + self.dx * i as f64
    }

    /// Trapezoidal mean of the piecewise-linear interpolant over
    /// `[center - h/2, center + h/2]`.
    pub fn tooth_average(&self, center: f64, h: f64) -> Result<f64> {
        let (a, b) = (center - h / 2.0, center + h / 2.0);
        let slack = 1e-9 * self.dx;
        if a < self.left - slack || b > self.right() + slack {
            return Err(Error::ToothNotCovered {
                have_lo: self.left,
                have_hi: self.right(),
                need_lo: a,
                need_hi: b,
            });
        }
        let interp = |x: f64| {
            let s = ((x - self.left) / self.dx).clamp(0.0, (self.samples.len() - 1) as f64);
            let i = (s.floor() as usize).min(self.samples.len() - 2);
            let w = s - i as f64;
            (1.0 - w) * self.samples[i] + w * self.samples[i + 1]
        };
        let mut integral = 0.0;
        let mut x0 = a;
        let last = self.samples.len() - 1;
        while x0 < b {
            let cell = (((x0 - self.left) / self.dx).floor().max(0.0) as usize).min(last - 1);
            let mut x1 = self.position(cell + 1).min(b);
            if x1 <= x0 {
                // x0 sits on a node up to rounding
                x1 = self.position(cell + 2).min(b);
            }
            integral += 0.5 * (x1 - x0) * (interp(x0) + interp(x1));
            x0 = x1;
        }
        Ok(integral / h)
    }
}

fn fd_rate(pde: &PdeSpec, dx: f64) -> Result<f64> {
    let mut rate = 0.0;
    for (order, a) in pde.terms() {
        rate += match order {
            1 => a.abs() / (0.8 * dx),
            2 => a.abs() / (0.4 * dx * dx),
            4 => 8.0 * a.abs() / (0.3 * dx.powi(4)),
            r => return Err(Error::UnsupportedOrder(r)),
        };
    }
    Ok(rate)
}

/// Largest micro time step accepted for `pde` at micro spacing `dx`.
///
/// For a single term this is `0.8 dx/|a_1|`, `0.4 dx²/|a_2|` or
/// `0.3 dx⁴/(8|a_4|)`; mixed operators must satisfy the sum of the ratios.
pub fn fd_stability_bound(pde: &PdeSpec, dx: f64) -> Result<f64> {
    Ok(1.0 / fd_rate(pde, dx)?)
}

/// Distance over which the solution at time `dt` feels a boundary perturbation.
pub fn influence_radius(pde: &PdeSpec, dt: f64) -> Result<f64> {
    let mut radius = 0.0;
    for (order, a) in pde.terms() {
        radius += match order {
            1 => a.abs() * dt,
            2 => 6.0 * (a.abs() * dt).sqrt(),
            4 => 6.0 * (a.abs() * dt).powf(0.25),
            r => return Err(Error::UnsupportedOrder(r)),
        };
    }
    Ok(radius)
}

/// Explicit finite-difference evolution of `p` on the buffered box around its center.
pub fn evolve_fd_buffered(
    p: &TaylorPolynomial,
    pde: &PdeSpec,
    dt: f64,
    tooth: &ToothConfig,
    micro: &MicroGrid,
) -> Result<MicroFieldState> {
    let big_h = match tooth.buffer() {
        BufferWidth::Finite(w) => w,
        BufferWidth::Infinite => {
            return Err(Error::invalid("H", "finite-difference evolution needs a finite box"))
        }
    };
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("evolution time must be non-negative, got {dt}")));
    }
    if !(micro.dx > 0.0) || !(micro.dt > 0.0) {
        return Err(Error::invalid("micro", "micro dx and dt must be positive"));
    }
    let cells = (big_h / micro.dx).round().max(4.0) as usize;
    let dx = big_h / cells as f64;
    let bound = fd_stability_bound(pde, dx)?;
    if micro.dt > bound * (1.0 + 1e-12) {
        return Err(Error::MicroUnstable { dt: micro.dt, bound });
    }
    let radius = influence_radius(pde, dt)?;
    let available = (big_h - tooth.h()) / 2.0;
    if radius > available {
        return Err(Error::BufferTooSmall { radius, available });
    }

    let left = p.center() - big_h / 2.0;
    let mut u: Vec<f64> = (0..=cells).map(|i| p.eval(left + i as f64 * dx)).collect();
    let n = u.len();
    let steps = if dt == 0.0 { 0 } else { (dt / micro.dt).ceil() as usize };
    let margin = if pde.max_order() >= 4 { 2 } else { 1 };
    let a1 = pde.coefficient(1);
    let a2 = pde.coefficient(2);
    let a4 = pde.coefficient(4);
    let mut next = u.clone();
    if steps > 0 {
        let tau = dt / steps as f64;
        for _ in 0..steps {
            for i in margin..n - margin {
                let mut rhs = 0.0;
                if a1 != 0.0 {
                    // upwind: information travels with velocity -a1
                    let d1 = if a1 < 0.0 { u[i] - u[i - 1] } else { u[i + 1] - u[i] };
                    rhs += a1 * d1 / dx;
                }
                if a2 != 0.0 {
                    rhs += a2 * (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
                }
                if a4 != 0.0 {
                    let d4 = u[i + 2] - 4.0 * u[i + 1] + 6.0 * u[i] - 4.0 * u[i - 1] + u[i - 2];
                    rhs += a4 * d4 / dx.powi(4);
                }
                next[i] = u[i] + tau * rhs;
            }
            std::mem::swap(&mut u, &mut next);
        }
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("finite-difference micro field"));
    }
    MicroFieldState::new(u, left, dx, dt)
}
