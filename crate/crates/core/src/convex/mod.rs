//! Convex-analysis primitives: radial Hamiltonians and their conjugates,
//! local couplings, the perspective kinetic term and its proximal map.

mod coupling;
mod hamiltonian;
mod legendre;
mod prox;

pub use coupling::{Coupling, CouplingForm, PointCoupling};
pub use hamiltonian::{HamFamily, Hamiltonian};
pub use legendre::{
    conjugate_table_csv, counterexample, counterexample_conjugate, midpoint_defect,
    numerical_legendre, ConjugatePair, LegendreEstimate,
};
pub use prox::{prox_kinetic, prox_point, PROX_TOL};

/// Extended real value; `+∞` is kept out of floating-point arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    pub fn add(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl std::fmt::Display for ExtReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "+inf"),
        }
    }
}

/// `x^e` with fast paths for the exponents the shipped families use.
#[inline]
pub(crate) fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.0 {
        1.0
    } else if e == 3.0 {
        x * x * x
    } else if e == 0.5 {
        x.sqrt()
    } else if e == 1.5 {
        x * x.sqrt()
    } else if e == -0.5 {
        1.0 / x.sqrt()
    } else {
        x.powf(e)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Perspective `m L(w/m)` with the `m = 0` convention.
pub fn kinetic_eval(ham: &Hamiltonian, m: f64, w: &[f64]) -> ExtReal {
    let s = norm(w);
    if m < 0.0 || m.is_nan() {
        return ExtReal::Infinite;
    }
    if m == 0.0 {
        return if s == 0.0 {
            ExtReal::Finite(0.0)
        } else {
            ExtReal::Infinite
        };
    }
    ExtReal::Finite(m * ham.lagrangian_radial(s / m))
}
