use crate::error::{Error, Result};

/// Macro grid values `U_j` on a periodic uniform grid with `x_j = j * dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    values: Vec<f64>,
    dx: f64,
    time: f64,
}

impl MacroState {
    pub const MIN_POINTS: usize = 3;

    pub fn new(values: Vec<f64>, dx: f64, time: f64) -> Result<Self> {
        if values.len() < Self::MIN_POINTS {
            return Err(Error::invalid(
                "values",
                format!("need at least {} grid points, got {}", Self::MIN_POINTS, values.len()),
            ));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::invalid("dx", format!("grid spacing must be positive, got {dx}")));
        }
        if !(time >= 0.0) || !time.is_finite() {
            return Err(Error::invalid("time", format!("time must be finite and non-negative, got {time}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("macro state values"));
        }
        Ok(Self { values, dx, time })
    }

    /// Samples `f` at `x_j = j * length / n` for `j = 0..n`.
    pub fn sample(n: usize, length: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = length / n as f64;
        Self::new((0..n).map(|j| f(j as f64 * dx)).collect(), dx, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn length(&self) -> f64 {
        self.dx * self.values.len() as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    /// Value at `j + offset` with periodic wrap.
    pub fn at(&self, j: usize, offset: isize) -> f64 {
        let n = self.values.len() as isize;
        self.values[(j as isize + offset).rem_euclid(n) as usize]
    }

    /// Same grid, new values and time.
    pub fn with_values(&self, values: Vec<f64>, time: f64) -> Result<Self> {
        Self::new(values, self.dx, time)
    }

    /// Discrete L2 norm `sqrt(dx * Σ U_j²)`.
    pub fn l2_norm(&self) -> f64 {
        (self.dx * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BufferWidth {
    Finite(f64),
    /// Microscale problem posed on the whole line.
    Infinite,
}

/// Tooth geometry: averaging width `h` and simulation box width `H >= h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToothConfig {
    h: f64,
    buffer: BufferWidth,
}

impl ToothConfig {
    pub fn new(h: f64, buffer: BufferWidth) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("h", format!("tooth width must be positive, got {h}")));
        }
        if let BufferWidth::Finite(big_h) = buffer {
            if !(big_h >= h) || !big_h.is_finite() {
                return Err(Error::invalid(
                    "H",
                    format!("simulation box {big_h} must be finite and at least h = {h}"),
                ));
            }
        }
        Ok(Self { h, buffer })
    }

    pub fn unbuffered(h: f64) -> Result<Self> {
        Self::new(h, BufferWidth::Infinite)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn buffer(&self) -> BufferWidth {
        self.buffer
    }

    pub fn check_against(&self, state: &MacroState) -> Result<()> {
        if self.h >= state.dx() {
            return Err(Error::invalid(
                "h",
                format!("tooth width {} must be smaller than the macro spacing {}", self.h, state.dx()),
            ));
        }
        Ok(())
    }
}
