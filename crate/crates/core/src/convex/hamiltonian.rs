use serde::{Deserialize, Serialize};

use super::{norm, pow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamFamily {
    /// `c |p|^r / r`
    Power,
    /// `c (1 + |p|^{r/2})²`
    PaperExample,
}

/// Radial Hamiltonian `H(p) = h(|p|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    pub family: HamFamily,
    pub r: f64,
    pub c: f64,
}

impl Hamiltonian {
    pub fn power(r: f64, c: f64) -> Self {
        Hamiltonian {
            family: HamFamily::Power,
            r,
            c,
        }
    }

    pub fn paper_example(r: f64, c: f64) -> Self {
        Hamiltonian {
            family: HamFamily::PaperExample,
            r,
            c,
        }
    }

    pub fn quadratic() -> Self {
        Self::power(2.0, 1.0)
    }

    /// Conjugate exponent `r' = r / (r - 1)`.
    pub fn r_conj(&self) -> f64 {
        self.r / (self.r - 1.0)
    }

    pub fn h(&self, p: f64) -> f64 {
        let (r, c) = (self.r, self.c);
        match self.family {
            HamFamily::Power => c * pow(p, r) / r,
            HamFamily::PaperExample => c * (1.0 + pow(p, 0.5 * r)).powi(2),
        }
    }

    /// `h'(p)` for `p > 0`; at `p = 0` the right derivative.
    pub fn dh(&self, p: f64) -> f64 {
        let (r, c) = (self.r, self.c);
        match self.family {
            HamFamily::Power => {
                if p == 0.0 {
                    0.0
                } else {
                    c * pow(p, r - 1.0)
                }
            }
            HamFamily::PaperExample => {
                if p == 0.0 {
                    return self.kink();
                }
                let a = pow(p, 0.5 * r);
                c * r * (1.0 + a) * pow(p, 0.5 * r - 1.0)
            }
        }
    }

    pub fn d2h(&self, p: f64) -> f64 {
        let (r, c) = (self.r, self.c);
        match self.family {
            HamFamily::Power => c * (r - 1.0) * pow(p, r - 2.0),
            HamFamily::PaperExample => {
                let hr = 0.5 * r;
                c * r * (hr * pow(p, r - 2.0) + (hr - 1.0) * (1.0 + pow(p, hr)) * pow(p, hr - 2.0))
            }
        }
    }

    /// `h'(0+)`: zero for differentiable `H`, positive at a kink, `∞` for a cusp.
    pub fn kink(&self) -> f64 {
        match self.family {
            HamFamily::Power => 0.0,
            HamFamily::PaperExample => {
                if self.r > 2.0 {
                    0.0
                } else if self.r == 2.0 {
                    2.0 * self.c
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Whether `H` is differentiable at the origin.
    pub fn is_differentiable(&self) -> bool {
        self.kink() == 0.0
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.h(norm(p))
    }

    pub fn grad(&self, p: &[f64], out: &mut [f64]) {
        let s = norm(p);
        if s == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let k = self.dh(s) / s;
        for (o, x) in out.iter_mut().zip(p) {
            *o = k * x;
        }
    }

    /// Inverse of `h'` on `(h'(0+), ∞)`; zero below the kink.
    pub fn dh_inverse(&self, v: f64) -> f64 {
        if v <= self.kink() {
            return 0.0;
        }
        match self.family {
            HamFamily::Power => pow(v / self.c, 1.0 / (self.r - 1.0)),
            HamFamily::PaperExample => {
                let mut hi = 1.0;
                while self.dh(hi) < v {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                let mut p = 0.5 * hi;
                for _ in 0..200 {
                    let g = self.dh(p) - v;
                    if g > 0.0 {
                        hi = p;
                    } else {
                        lo = p;
                    }
                    let d = self.d2h(p);
                    let mut next = p - g / d;
                    if !(next > lo && next < hi) || !d.is_finite() {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - p).abs() <= 1e-15 * next.max(1e-300) || hi - lo <= 1e-15 * hi {
                        return next;
                    }
                    p = next;
                }
                p
            }
        }
    }

    /// Radial profile of `H*`: `ℓ(v) = sup_p (p v - h(p))`, `v ≥ 0`.
    pub fn lagrangian_radial(&self, v: f64) -> f64 {
        match self.family {
            HamFamily::Power => {
                let rc = self.r_conj();
                pow(self.c, 1.0 - rc) * pow(v, rc) / rc
            }
            HamFamily::PaperExample => {
                let p = self.dh_inverse(v);
                p * v - self.h(p)
            }
        }
    }

    /// `ℓ'(v)`, the maximizing `p`.
    pub fn lagrangian_radial_deriv(&self, v: f64) -> f64 {
        self.dh_inverse(v)
    }

    pub fn h_star(&self, s: &[f64]) -> f64 {
        self.lagrangian_radial(norm(s))
    }

    pub fn h_star_grad(&self, s: &[f64], out: &mut [f64]) {
        let n = norm(s);
        if n == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let k = self.dh_inverse(n) / n;
        for (o, x) in out.iter_mut().zip(s) {
            *o = k * x;
        }
    }

    /// `L(p*) = H*(-p*)`.
    pub fn l_eval(&self, pstar: &[f64]) -> f64 {
        let neg: Vec<f64> = pstar.iter().map(|x| -x).collect();
        self.h_star(&neg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let h = Hamiltonian::quadratic();
        assert_eq!(h.eval(&[3.0, 4.0]), 12.5);
        let mut g = [0.0; 2];
        h.grad(&[3.0, 4.0], &mut g);
        assert!((g[0] - 3.0).abs() < 1e-14 && (g[1] - 4.0).abs() < 1e-14);
        assert_eq!(h.eval(&[0.0]), 0.0);
        assert!((h.h_star(&[3.0]) - 4.5).abs() < 1e-14);
    }

    #[test]
    fn cubic_values() {
        let h = Hamiltonian::power(3.0, 1.0);
        assert!((h.eval(&[2.0]) - 8.0 / 3.0).abs() < 1e-14);
        let mut g = [0.0];
        h.grad(&[2.0], &mut g);
        assert!((g[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn paper_example_at_origin() {
        let h = Hamiltonian::paper_example(2.0, 1.0);
        assert_eq!(h.eval(&[0.0, 0.0]), 1.0);
        assert_eq!(h.kink(), 2.0);
        assert!(!h.is_differentiable());
        assert!(Hamiltonian::paper_example(3.0, 1.0).is_differentiable());
    }

    #[test]
    fn inverse_derivative_round_trips() {
        for h in [
            Hamiltonian::paper_example(3.0, 0.7),
            Hamiltonian::paper_example(2.5, 2.0),
        ] {
            for &p in &[0.01, 0.3, 1.0, 4.0, 25.0] {
                let v = h.dh(p);
                assert!(
                    (h.dh_inverse(v) - p).abs() < 1e-10 * p.max(1.0),
                    "{h:?} p={p}"
                );
            }
        }
    }
}
