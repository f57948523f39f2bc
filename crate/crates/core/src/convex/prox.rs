use super::{norm, Hamiltonian, PointCoupling};
use crate::error::{MfgError, Result};

/// Absolute tolerance on the scalar roots solved by the proximal maps.
pub const PROX_TOL: f64 = 1e-12;

const MAX_ITER: usize = 300;

/// Proximal map of `(ρ, Z) ↦ ρ ℓ(|Z|/ρ) + F(ρ)` with step `τ_ρ` on the
/// density and `τ_z` on the flux.
///
/// Writes the new flux into `z_out` and returns the new density. With a
/// radial `H`, the optimal `Z` is parallel to `z0`; writing `p = ℓ'(|Z|/ρ)`
/// the optimality system reduces to the decreasing scalar equation
/// `g(p) = -h(p) + f(ρ(p)) + (ρ(p) - ρ0)/τ_ρ = 0`, `ρ(p) = (|z0| - τ_z p) / h'(p)`.
pub fn prox_point(
    ham: &Hamiltonian,
    coupling: Option<&PointCoupling>,
    rho0: f64,
    z0: &[f64],
    tau_rho: f64,
    tau_z: f64,
    z_out: &mut [f64],
) -> Result<f64> {
    let big_p = norm(z0);
    if !(rho0.is_finite() && big_p.is_finite() && tau_rho > 0.0 && tau_z > 0.0) {
        return Err(MfgError::Numerical(format!(
            "prox input not finite: rho0={rho0} |z0|={big_p} tau=({tau_rho}, {tau_z})"
        )));
    }
    let f = |m: f64| coupling.map_or(0.0, |c| c.f(m));
    let df = |m: f64| coupling.map_or(0.0, |c| c.df(m));
    let h0 = ham.h(0.0);

    let zero_flux_density = || -> f64 {
        // φ(ρ) = f(ρ) - h(0) + (ρ - ρ0)/τ_ρ, increasing
        let phi = |m: f64| f(m) - h0 + (m - rho0) / tau_rho;
        if phi(0.0) >= 0.0 {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = rho0 + tau_rho * (h0 - f(0.0));
        let mut m = 0.5 * (lo + hi);
        for _ in 0..MAX_ITER {
            let g = phi(m);
            if g > 0.0 {
                hi = m;
            } else {
                lo = m;
            }
            let d = df(m) + 1.0 / tau_rho;
            let mut next = m - g / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - m).abs() <= PROX_TOL * next.max(1.0) || hi - lo <= PROX_TOL * hi.max(1.0) {
                return next;
            }
            m = next;
        }
        m
    };

    if big_p == 0.0 {
        z_out.iter_mut().for_each(|v| *v = 0.0);
        return Ok(zero_flux_density());
    }

    let pmax = big_p / tau_z;
    let g_at = |p: f64| -> (f64, f64) {
        let s = big_p - tau_z * p;
        let d1 = ham.dh(p);
        let rho = (s / d1).max(0.0);
        let d2 = ham.d2h(p);
        let drho = (-tau_z * d1 - s * d2) / (d1 * d1);
        let g = -ham.h(p) + f(rho) + (rho - rho0) / tau_rho;
        let dg = -d1 + (df(rho) + 1.0 / tau_rho) * drho;
        (g, dg)
    };

    if -ham.h(pmax) + f(0.0) - rho0 / tau_rho >= 0.0 {
        z_out.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0.0);
    }

    let kappa = ham.kink();
    if kappa > 0.0 {
        let rho = zero_flux_density();
        if rho > 0.0 && big_p <= kappa * rho {
            z_out.copy_from_slice(z0);
            return Ok(rho);
        }
    }

    let mut lo = 0.0;
    let mut hi = pmax;
    // start from the flux direction of the unperturbed point
    let mut p = 0.5 * pmax;
    if rho0 > 0.0 {
        let guess = ham.dh_inverse(big_p / rho0);
        if guess > 0.0 && guess < pmax {
            p = guess;
        }
    }
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let (g, dg) = g_at(p);
        if g > 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let mut next = p - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - p).abs() <= PROX_TOL * pmax.max(1.0) * 1e-3 || hi - lo <= 1e-16 * pmax {
            p = next;
            converged = true;
            break;
        }
        p = next;
    }
    if !converged {
        return Err(MfgError::Numerical(format!(
            "prox root search stalled: rho0={rho0} |z0|={big_p} tau=({tau_rho}, {tau_z}) bracket=[{lo}, {hi}]"
        )));
    }
    let s = big_p - tau_z * p;
    let rho = (s / ham.dh(p)).max(0.0);
    let k = s / big_p;
    for (o, z) in z_out.iter_mut().zip(z0) {
        *o = k * z;
    }
    Ok(rho)
}

/// Proximal map of the perspective `m L(w/m)` alone, same step in both
/// variables.
pub fn prox_kinetic(ham: &Hamiltonian, m0: f64, w0: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(MfgError::Config(format!(
            "prox step {tau} must be positive"
        )));
    }
    let mut w = vec![0.0; w0.len()];
    let m = prox_point(ham, None, m0, w0, tau, tau, &mut w)?;
    Ok((m, w))
}
