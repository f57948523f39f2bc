//! Independent reference solver for tiny instances.
//!
//! The density is eliminated by solving the continuity scheme exactly
//! (forward substitution), leaving a smooth convex objective in the split
//! flux alone. It is minimized by gradient descent with Barzilai–Borwein
//! steps and Armijo backtracking; steps leaving the domain (negative
//! density or flux on an empty cell) are rejected by the line search.

use crate::error::{MfgError, Result};
use crate::grid::{CellField, FaceField};
use crate::problem::Problem;

use super::functionals::{assemble_face_flux, evaluate_m, march_density, SplitFlux};
use super::split::SplitLayout;

pub const ORACLE_MAX_UNKNOWNS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub max_iterations: usize,
    /// Stop when the max-norm of the gradient falls below this.
    pub grad_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_iterations: 100_000,
            grad_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub m: CellField,
    pub z: SplitFlux,
    pub w: FaceField,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn objective(p: &Problem, z: &SplitFlux) -> Result<Option<(f64, CellField)>> {
    let m = march_density(p, z)?;
    Ok(evaluate_m(p, &m, z)?.value.finite().map(|v| (v, m)))
}

fn gradient(p: &Problem, layout: &SplitLayout, z: &SplitFlux, m: &CellField, out: &mut [f64]) {
    let g = &p.grid;
    let (nc, kk, vol, dt) = (g.ncells(), g.time_steps(), g.cell_volume(), g.dt());
    let mu = dt * vol;
    let slots = layout.slots;
    let mut lambda = vec![0.0; nc];
    let mut grad = vec![0.0; g.nfaces()];
    let mut feat = vec![0.0; layout.interval_len()];
    for k in (1..=kk).rev() {
        let zk = z.slice(k - 1);
        let ok = &mut out[(k - 1) * nc * slots..k * nc * slots];
        for c in 0..nc {
            let rho = m.get(k, c);
            let zc = &zk[c * slots..(c + 1) * slots];
            let s = zc.iter().map(|v| v * v).sum::<f64>().sqrt();
            let pstar = if s > 0.0 {
                p.ham.lagrangian_radial_deriv(s / rho)
            } else {
                0.0
            };
            let dm = mu * (-p.ham.h(pstar) + p.coupling_at(k, c).f(rho));
            lambda[c] += dm + if k == kk { vol * p.psi[c] } else { 0.0 };
            for sl in 0..slots {
                ok[c * slots + sl] = if s > 0.0 {
                    mu * pstar * zc[sl] / s
                } else {
                    0.0
                };
            }
        }
        layout.features_of(g, &lambda, &mut grad, &mut feat);
        for (o, f) in ok.iter_mut().zip(&feat) {
            *o += dt * f;
        }
    }
}

pub fn oracle_solve(p: &Problem, cfg: &OracleConfig) -> Result<OracleResult> {
    let g = &p.grid;
    let layout = SplitLayout::new(g);
    let unknowns = g.time_steps() * (g.ncells() + layout.interval_len());
    if unknowns > ORACLE_MAX_UNKNOWNS {
        return Err(MfgError::Refused(format!(
            "oracle limited to {ORACLE_MAX_UNKNOWNS} unknowns, instance has {unknowns}"
        )));
    }
    let mut z = SplitFlux::zeros(p);
    let (mut f, mut m) = objective(p, &z)?.ok_or_else(|| {
        MfgError::Numerical("oracle start point (zero flux) is infeasible".into())
    })?;
    let n = z.data.len();
    let mut gcur = vec![0.0; n];
    gradient(p, &layout, &z, &m, &mut gcur);
    let mut step = 1.0 / gcur.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut iterations = 0;
    let mut trial = z.clone();
    let mut gnew = vec![0.0; n];
    while iterations < cfg.max_iterations {
        let gmax = gcur.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax <= cfg.grad_tol {
            break;
        }
        let g2: f64 = gcur.iter().map(|v| v * v).sum();
        let mut accepted = None;
        for _ in 0..60 {
            for ((t, zv), gv) in trial.data.iter_mut().zip(&z.data).zip(&gcur) {
                *t = zv - step * gv;
            }
            if let Some((ft, mt)) = objective(p, &trial)? {
                if ft <= f - 1e-4 * step * g2 {
                    accepted = Some((ft, mt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((ft, mt)) = accepted else { break };
        gradient(p, &layout, &trial, &mt, &mut gnew);
        // Barzilai–Borwein step for the next iteration
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = trial.data[i] - z.data[i];
            ss += s * s;
            sy += s * (gnew[i] - gcur[i]);
        }
        if sy > 0.0 {
            step = ss / sy;
        }
        std::mem::swap(&mut z, &mut trial);
        std::mem::swap(&mut gcur, &mut gnew);
        f = ft;
        m = mt;
        iterations += 1;
    }
    let grad_norm = gcur.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let w = assemble_face_flux(p, &z)?;
    Ok(OracleResult {
        m,
        z,
        w,
        objective: f,
        iterations,
        grad_norm,
    })
}
