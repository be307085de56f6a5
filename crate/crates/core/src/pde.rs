use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::poly::TaylorPolynomial;

/// Constant-coefficient linear PDE `∂_t u = Σ_r a_r ∂_x^r u` with `r >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSpec {
    terms: BTreeMap<u32, f64>,
}

impl PdeSpec {
    pub fn new(terms: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (order, coeff) in terms {
            if order == 0 {
                return Err(Error::invalid("order", "derivative orders start at 1"));
            }
            if !coeff.is_finite() {
                return Err(Error::NonFinite("pde coefficient"));
            }
            if coeff != 0.0 {
                *map.entry(order).or_insert(0.0) += coeff;
            }
        }
        map.retain(|_, c| *c != 0.0);
        if map.is_empty() {
            return Err(Error::invalid("coefficients", "at least one nonzero term is required"));
        }
        Ok(Self { terms: map })
    }

    /// `∂_t u = ∂_x² u`.
    pub fn heat() -> Self {
        Self::new([(2, 1.0)]).unwrap()
    }

    /// `∂_t u + ∂_x u = 0`.
    pub fn advection() -> Self {
        Self::new([(1, -1.0)]).unwrap()
    }

    /// `∂_t u = -∂_x⁴ u`.
    pub fn biharmonic() -> Self {
        Self::new([(4, -1.0)]).unwrap()
    }

    pub fn max_order(&self) -> u32 {
        *self.terms.keys().next_back().unwrap()
    }

    pub fn coefficient(&self, order: u32) -> f64 {
        self.terms.get(&order).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.terms.iter().map(|(&r, &a)| (r, a))
    }

    /// Applies the spatial operator `L = Σ a_r ∂_x^r` to a polynomial.
    pub fn apply(&self, p: &TaylorPolynomial) -> TaylorPolynomial {
        let mut out = TaylorPolynomial::zero(p.center());
        for (order, coeff) in self.terms() {
            out.add_assign(&p.derivative(order as usize).scaled(coeff));
        }
        out.trimmed()
    }

    /// Fourier symbol `Σ a_r (iθ)^r` of the operator, as (re, im).
    pub fn symbol(&self, wavenumber: f64) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        for (order, coeff) in self.terms() {
            let mag = coeff * wavenumber.powi(order as i32);
            match order % 4 {
                0 => re += mag,
                1 => im += mag,
                2 => re -= mag,
                _ => im -= mag,
            }
        }
        (re, im)
    }
}

impl fmt::Display for PdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u_t =")?;
        for (i, (order, coeff)) in self.terms().enumerate() {
            let sep = if i == 0 { " " } else { " + " };
            write!(f, "{sep}{coeff}*d{order}u")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_equations() {
        assert_eq!(PdeSpec::heat().max_order(), 2);
        assert_eq!(PdeSpec::advection().coefficient(1), -1.0);
        assert_eq!(PdeSpec::biharmonic().coefficient(4), -1.0);
        assert_eq!(PdeSpec::biharmonic().coefficient(2), 0.0);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(PdeSpec::new([]).is_err());
        assert!(PdeSpec::new([(2, 0.0)]).is_err());
        assert!(PdeSpec::new([(0, 1.0)]).is_err());
        assert!(PdeSpec::new([(1, 1.0), (1, -1.0)]).is_err());
    }

    #[test]
    fn operator_on_polynomial() {
        let p = TaylorPolynomial::new(0.0, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(PdeSpec::heat().apply(&p).coeffs(), &[3.0]);
        assert_eq!(PdeSpec::advection().apply(&p).coeffs(), &[-2.0, -3.0]);
        assert!(PdeSpec::biharmonic().apply(&p).is_zero());
    }

    #[test]
    fn symbols() {
        assert_eq!(PdeSpec::heat().symbol(2.0), (-4.0, 0.0));
        assert_eq!(PdeSpec::advection().symbol(2.0), (0.0, -2.0));
        assert_eq!(PdeSpec::biharmonic().symbol(2.0), (-16.0, 0.0));
    }
}
