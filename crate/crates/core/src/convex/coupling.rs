use serde::{Deserialize, Serialize};

use super::{pow, ExtReal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    /// `f = w (1 + m^{q-1})`, so `f(0) = w > 0`.
    Shifted,
    /// `f = w m^{q-1}`, so `f(0) = 0`.
    Power,
}

/// Coupling family: a form and exponent; the spatial weight is supplied
/// pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub form: CouplingForm,
    pub q: f64,
}

impl Coupling {
    pub fn at(&self, weight: f64) -> PointCoupling {
        PointCoupling {
            form: self.form,
            q: self.q,
            w: weight,
        }
    }

    /// Conjugate exponent `q' = q / (q - 1)`.
    pub fn q_conj(&self) -> f64 {
        self.q / (self.q - 1.0)
    }
}

/// A coupling frozen at one `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoupling {
    pub form: CouplingForm,
    pub q: f64,
    pub w: f64,
}

impl PointCoupling {
    pub fn f(&self, m: f64) -> f64 {
        let p = pow(m.max(0.0), self.q - 1.0);
        match self.form {
            CouplingForm::Shifted => self.w * (1.0 + p),
            CouplingForm::Power => self.w * p,
        }
    }

    pub fn df(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return if self.q < 2.0 {
                f64::INFINITY
            } else if self.q == 2.0 {
                self.w
            } else {
                0.0
            };
        }
        self.w * (self.q - 1.0) * pow(m, self.q - 2.0)
    }

    pub fn f0(&self) -> f64 {
        self.f(0.0)
    }

    /// `F(m) = ∫_0^m f`, `+∞` for `m < 0`.
    pub fn big_f(&self, m: f64) -> ExtReal {
        if m < 0.0 || m.is_nan() {
            return ExtReal::Infinite;
        }
        ExtReal::Finite(self.big_f_unchecked(m))
    }

    pub(crate) fn big_f_unchecked(&self, m: f64) -> f64 {
        let p = pow(m, self.q) / self.q;
        match self.form {
            CouplingForm::Shifted => self.w * (m + p),
            CouplingForm::Power => self.w * p,
        }
    }

    /// Density recovered from a cost level: the `m ≥ 0` with `f(m) = s`,
    /// or 0 when `s ≤ f(0)`.
    pub fn f_inverse(&self, s: f64) -> f64 {
        let e = 1.0 / (self.q - 1.0);
        match self.form {
            CouplingForm::Shifted => {
                if s <= self.w {
                    0.0
                } else {
                    pow(s / self.w - 1.0, e)
                }
            }
            CouplingForm::Power => {
                if s <= 0.0 {
                    0.0
                } else {
                    pow(s / self.w, e)
                }
            }
        }
    }

    pub fn f_star(&self, s: f64) -> f64 {
        let m = self.f_inverse(s);
        if m == 0.0 {
            return 0.0;
        }
        s * m - self.big_f_unchecked(m)
    }

    pub fn f_star_deriv(&self, s: f64) -> f64 {
        self.f_inverse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_q2_is_half_square() {
        let c = Coupling {
            form: CouplingForm::Power,
            q: 2.0,
        }
        .at(1.0);
        assert_eq!(c.big_f(3.0), ExtReal::Finite(4.5));
        assert_eq!(c.f_star(3.0), 4.5);
        assert_eq!(c.f_star(-1.0), 0.0);
        assert_eq!(c.big_f(-0.1), ExtReal::Infinite);
    }

    #[test]
    fn shifted_flat_below_f0() {
        let c = Coupling {
            form: CouplingForm::Shifted,
            q: 2.0,
        }
        .at(1.0);
        for s in [-3.0, 0.0, 0.5, 1.0] {
            assert_eq!(c.f_star(s), 0.0);
        }
        // f = 1 + m: m(s) = s - 1, F* = (s - 1)²/2
        assert!((c.f_star(3.0) - 2.0).abs() < 1e-14);
        assert!((c.f_star_deriv(3.0) - 2.0).abs() < 1e-14);
    }
}
