use std::fmt::Write;

use super::{Hamiltonian, PointCoupling};

/// Result of a sampled Legendre transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreEstimate {
    pub value: f64,
    pub argmax: f64,
    /// False when the maximizer sits on the first or last sample, i.e. the
    /// samples may not cover it.
    pub trusted: bool,
}

/// `max_i (p x_i - Φ(x_i))` over sorted samples `(x_i, Φ(x_i))`.
pub fn numerical_legendre(samples: &[(f64, f64)], p: f64) -> LegendreEstimate {
    assert!(!samples.is_empty(), "numerical_legendre needs samples");
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, &(x, phi)) in samples.iter().enumerate() {
        let v = p * x - phi;
        if v > best.0 {
            best = (v, i);
        }
    }
    LegendreEstimate {
        value: best.0,
        argmax: samples[best.1].0,
        trusted: best.1 != 0 && best.1 + 1 != samples.len(),
    }
}

/// Convex, not strictly convex on the dual side: `x²` below 1, `x³` above.
pub fn counterexample(x: f64) -> f64 {
    if x < 1.0 {
        x * x
    } else {
        x * x * x
    }
}

/// Closed-form conjugate of [`counterexample`] for `p ≥ 0`.
pub fn counterexample_conjugate(p: f64) -> f64 {
    if p < 2.0 {
        p * p / 4.0
    } else if p < 3.0 {
        p - 1.0
    } else {
        2.0 * (p / 3.0).powf(1.5)
    }
}

/// `(Φ(a) + Φ(b))/2 - Φ((a + b)/2)`.
pub fn midpoint_defect(phi: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    0.5 * (phi(a) + phi(b)) - phi(0.5 * (a + b))
}

/// A scalar convex function together with its conjugate.
pub trait ConjugatePair {
    fn phi(&self, x: f64) -> f64;
    fn phi_grad(&self, x: f64) -> f64;
    fn phi_star(&self, p: f64) -> f64;
    fn phi_star_grad(&self, p: f64) -> f64;
    fn closed_form(&self) -> bool;

    /// `|Φ(Φ*'(p)) + Φ*(p) - Φ*'(p) p|`.
    fn identity_residual(&self, p: f64) -> f64 {
        let x = self.phi_star_grad(p);
        (self.phi(x) + self.phi_star(p) - x * p).abs()
    }
}

/// One-dimensional restriction `p ↦ H(p e_1)`.
impl ConjugatePair for Hamiltonian {
    fn phi(&self, x: f64) -> f64 {
        self.h(x.abs())
    }
    fn phi_grad(&self, x: f64) -> f64 {
        x.signum() * self.dh(x.abs())
    }
    fn phi_star(&self, p: f64) -> f64 {
        self.lagrangian_radial(p.abs())
    }
    fn phi_star_grad(&self, p: f64) -> f64 {
        p.signum() * self.dh_inverse(p.abs())
    }
    fn closed_form(&self) -> bool {
        matches!(self.family, super::HamFamily::Power)
    }
}

/// `F` restricted to `m ≥ 0`.
impl ConjugatePair for PointCoupling {
    fn phi(&self, x: f64) -> f64 {
        self.big_f_unchecked(x.max(0.0))
    }
    fn phi_grad(&self, x: f64) -> f64 {
        self.f(x)
    }
    fn phi_star(&self, p: f64) -> f64 {
        self.f_star(p)
    }
    fn phi_star_grad(&self, p: f64) -> f64 {
        self.f_star_deriv(p)
    }
    fn closed_form(&self) -> bool {
        true
    }
}

/// CSV table with columns `s,phi_star`.
pub fn conjugate_table_csv(pair: &dyn ConjugatePair, s_values: &[f64]) -> String {
    let mut out = String::from("s,phi_star\n");
    for &s in s_values {
        writeln!(out, "{s},{}", pair.phi_star(s)).unwrap();
    }
    out
}
