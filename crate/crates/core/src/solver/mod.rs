//! Primal–dual solver for the discrete density/flux problem.
//!
//! Unknowns are the densities `m^1..m^K` and the split fluxes `Z^1..Z^K`
//! (see [`split`](self::split)). The constraint on interval `k` is
//! `(m^k - m^{k-1})/Δt + div(W(Z^k), j^k) = 0` and its multiplier is
//! `u^{k-1}`; `u^K = ψ` is fixed. Inner products on both sides carry the
//! quadrature weight `Δt · vol`, so the step sizes are mesh independent in
//! form and the multiplier is the value function itself.

mod checkpoint;
mod functionals;
mod oracle;
mod split;

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::continuity::{mass_balance_table, power_iteration};
use crate::convex::prox_point;
use crate::error::{MfgError, Result};
use crate::grid::{divergence_slice, CellField, FaceField};
use crate::problem::Problem;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use functionals::{
    assemble_face_flux, discrete_hamiltonian, evaluate_k, evaluate_m, hj_operator, march_density,
    reconstruct_alpha, DualValue, PrimalValue, SplitFlux,
};
pub use oracle::{oracle_solve, OracleConfig, OracleResult, ORACLE_MAX_UNKNOWNS};
pub use split::SplitLayout;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `m^k = m0`, `Z = 0`, `u^k = ψ`.
    Default,
    /// Random positive densities, fluxes and potentials.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Primal step; defaults to `0.95 / ‖A‖`.
    pub tau: Option<f64>,
    /// Dual step; defaults to `0.95 / ‖A‖`.
    pub sigma: Option<f64>,
    pub theta: f64,
    pub max_iterations: usize,
    pub gap_tol: f64,
    pub residual_tol: f64,
    /// Gap and residual are evaluated every this many iterations.
    pub check_every: usize,
    pub checkpoint_every: Option<usize>,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: None,
            sigma: None,
            theta: 1.0,
            max_iterations: 200_000,
            gap_tol: 1e-5,
            residual_tol: 1e-8,
            check_every: 25,
            checkpoint_every: None,
            init: Init::Default,
        }
    }
}

impl SolverConfig {
    /// Defaults overridden by the instance's tolerance block.
    pub fn for_problem(spec: &crate::problem::ProblemSpec) -> Self {
        let mut c = SolverConfig::default();
        let t = &spec.tolerances;
        if let Some(v) = t.gap {
            c.gap_tol = v;
        }
        if let Some(v) = t.residual {
            c.residual_tol = v;
        }
        if let Some(v) = t.max_iterations {
            c.max_iterations = v;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// `None` when the marched density makes the primal functional infinite.
    pub primal: Option<f64>,
    pub dual: f64,
    pub gap: Option<f64>,
    pub rel_gap: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub m: CellField,
    pub z: SplitFlux,
    /// Levels `0..K`; level `K` is `ψ`.
    pub u: CellField,
    pub m_bar: CellField,
    pub z_bar: SplitFlux,
    pub iteration: usize,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub primal: Option<f64>,
    pub primal_boundary_form: Option<f64>,
    pub dual: f64,
    pub gap: Option<f64>,
    pub rel_gap: Option<f64>,
    pub scale: f64,
    /// Continuity residual of the iterate, max norm.
    pub residual: f64,
    /// Largest relative mass-balance defect of the reported density.
    pub mass_defect: f64,
    pub min_density: f64,
    pub subsolution_violation: f64,
    pub terminal_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tau: f64,
    pub sigma: f64,
    pub operator_norm: f64,
}

impl Certificate {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("inf".to_string(), |x| format!("{x:.12e}"));
        let mut s = String::from("[certificate]\n");
        writeln!(s, "converged = {}", self.converged).unwrap();
        writeln!(s, "iterations = {}", self.iterations).unwrap();
        writeln!(s, "primal = {}", opt(self.primal)).unwrap();
        writeln!(
            s,
            "primal_boundary_form = {}",
            opt(self.primal_boundary_form)
        )
        .unwrap();
        writeln!(s, "dual = {:.12e}", self.dual).unwrap();
        writeln!(s, "gap = {}", opt(self.gap)).unwrap();
        writeln!(s, "rel_gap = {}", opt(self.rel_gap)).unwrap();
        writeln!(s, "scale = {:.12e}", self.scale).unwrap();
        writeln!(s, "residual = {:.3e}", self.residual).unwrap();
        writeln!(s, "mass_defect = {:.3e}", self.mass_defect).unwrap();
        writeln!(s, "min_density = {:.6e}", self.min_density).unwrap();
        writeln!(
            s,
            "subsolution_violation = {:.3e}",
            self.subsolution_violation
        )
        .unwrap();
        writeln!(s, "terminal_violation = {:.3e}", self.terminal_violation).unwrap();
        writeln!(s, "tau = {:.6e}", self.tau).unwrap();
        writeln!(s, "sigma = {:.6e}", self.sigma).unwrap();
        writeln!(s, "operator_norm = {:.6e}", self.operator_norm).unwrap();
        s
    }
}

/// Converged (or budget-exhausted) solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: SolveState,
    /// Density marched from the final flux: feasible to roundoff.
    pub m: CellField,
    pub z: SplitFlux,
    pub w: FaceField,
    pub u: CellField,
    pub alpha: CellField,
    pub certificate: Certificate,
}

pub fn initial_state(p: &Problem, init: Init) -> SolveState {
    let g = &p.grid;
    let (nc, lv) = (g.ncells(), g.levels());
    let mut m = CellField::from_vec(nc, lv, p.m0.repeat(lv)).unwrap();
    let mut z = SplitFlux::zeros(p);
    let mut u = CellField::from_vec(nc, lv, p.psi.repeat(lv)).unwrap();
    if let Init::Random { seed } = init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 1..lv {
            for c in 0..nc {
                m.set(
                    k,
                    c,
                    p.m0[c] * rng.gen_range(0.5..1.5) + rng.gen_range(0.0..0.2),
                );
                u.set(k - 1, c, p.psi[c] + rng.gen_range(-1.0..1.0));
            }
        }
        z.data
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.5..0.5));
        let layout = SplitLayout::new(g);
        for k in 0..g.time_steps() {
            layout.mask(z.slice_mut(k));
        }
    }
    SolveState {
        m_bar: m.clone(),
        z_bar: z.clone(),
        m,
        z,
        u,
        iteration: 0,
        history: Vec::new(),
    }
}

/// `‖A‖` for the map `(m^1..m^K, Z) ↦` continuity residual without data.
pub fn split_operator_norm(p: &Problem) -> f64 {
    let g = &p.grid;
    let layout = SplitLayout::new(g);
    let (nc, kk, nz) = (g.ncells(), g.time_steps(), layout.interval_len());
    let dt = g.dt();
    let zero_j = vec![0.0; g.nboundary()];
    let nm = nc * kk;
    power_iteration(nm + nz * kk, 300, |x, y| {
        let mut r = vec![0.0; nm];
        let mut w = vec![0.0; g.nfaces()];
        for k in 0..kk {
            let rs = &mut r[k * nc..(k + 1) * nc];
            layout.divergence(g, &x[nm + k * nz..nm + (k + 1) * nz], &zero_j, &mut w, rs);
            for c in 0..nc {
                let prev = if k > 0 { x[(k - 1) * nc + c] } else { 0.0 };
                rs[c] += (x[k * nc + c] - prev) / dt;
            }
        }
        let mut grad = vec![0.0; g.nfaces()];
        for k in 0..kk {
            for c in 0..nc {
                let next = if k + 1 < kk { r[(k + 1) * nc + c] } else { 0.0 };
                y[k * nc + c] = (r[k * nc + c] - next) / dt;
            }
            let out = &mut y[nm + k * nz..nm + (k + 1) * nz];
            layout.features_of(g, &r[k * nc..(k + 1) * nc], &mut grad, out);
            out.iter_mut().for_each(|v| *v = -*v);
        }
    })
}

struct Engine<'a> {
    p: &'a Problem,
    layout: SplitLayout,
    tau: f64,
    sigma: f64,
    theta: f64,
    norm: f64,
}

impl<'a> Engine<'a> {
    fn new(p: &'a Problem, cfg: &SolverConfig) -> Result<Self> {
        let norm = split_operator_norm(p);
        let tau = cfg.tau.unwrap_or(0.95 / norm);
        let sigma = cfg.sigma.unwrap_or(0.95 / norm);
        if !(tau > 0.0 && sigma > 0.0) || tau * sigma * norm * norm >= 1.0 {
            return Err(MfgError::Config(format!(
                "steps tau={tau}, sigma={sigma} violate tau*sigma*|A|^2 < 1 (|A| = {norm:.4e})"
            )));
        }
        if !(0.0..=1.0).contains(&cfg.theta) {
            return Err(MfgError::Config(format!(
                "theta {} outside [0, 1]",
                cfg.theta
            )));
        }
        Ok(Engine {
            p,
            layout: SplitLayout::new(&p.grid),
            tau,
            sigma,
            theta: cfg.theta,
            norm,
        })
    }

    /// Continuity residual of interval `k` (1-based level) for `(m, z)`.
    fn residual_level(
        &self,
        m: &CellField,
        z: &SplitFlux,
        k: usize,
        w: &mut [f64],
        out: &mut [f64],
    ) {
        let g = &self.p.grid;
        self.layout
            .divergence(g, z.slice(k - 1), self.p.j.slice(k - 1), w, out);
        let prev = if k == 1 {
            &self.p.m0[..]
        } else {
            m.slice(k - 1)
        };
        for (c, o) in out.iter_mut().enumerate() {
            *o += (m.get(k, c) - prev[c]) / g.dt();
        }
    }

    fn residual_norm(&self, m: &CellField, z: &SplitFlux) -> f64 {
        let g = &self.p.grid;
        let mut w = vec![0.0; g.nfaces()];
        let mut r = vec![0.0; g.ncells()];
        let mut worst = 0.0f64;
        for k in 1..g.levels() {
            self.residual_level(m, z, k, &mut w, &mut r);
            worst = r.iter().fold(
                worst,
                |a, v| if v.is_nan() { f64::NAN } else { a.max(v.abs()) },
            );
        }
        worst
    }

    fn step(&self, s: &mut SolveState) -> Result<()> {
        let p = self.p;
        let g = &p.grid;
        let (nc, kk, dt) = (g.ncells(), g.time_steps(), g.dt());
        let nz = self.layout.interval_len();

        // dual ascent on u^0..u^{K-1}
        let mut w = vec![0.0; g.nfaces()];
        let mut r = vec![0.0; nc];
        for k in 1..=kk {
            self.residual_level(&s.m_bar, &s.z_bar, k, &mut w, &mut r);
            for (uv, rv) in s.u.slice_mut(k - 1).iter_mut().zip(&r) {
                *uv -= self.sigma * rv;
            }
        }

        // primal proximal step, levels in parallel
        let tau = self.tau;
        let u = &s.u;
        let layout = &self.layout;
        let old_m = s.m.clone();
        let old_z = s.z.clone();
        let m_levels = &mut s.m.data_mut()[nc..];
        let results: Vec<Result<()>> = m_levels
            .par_chunks_mut(nc)
            .zip(s.z.data.par_chunks_mut(nz))
            .enumerate()
            .map(|(i, (mk, zk))| {
                let k = i + 1;
                let mut grad = vec![0.0; g.nfaces()];
                let mut feat = vec![0.0; nz];
                layout.features_of(g, u.slice(k - 1), &mut grad, &mut feat);
                let mut z0 = vec![0.0; layout.slots];
                for c in 0..nc {
                    let rho0 = mk[c] + tau * (u.get(k - 1, c) - u.get(k, c)) / dt;
                    let zc = &mut zk[c * layout.slots..(c + 1) * layout.slots];
                    for (sl, z0v) in z0.iter_mut().enumerate() {
                        *z0v = zc[sl] - tau * feat[c * layout.slots + sl];
                    }
                    let coupling = p.coupling_at(k, c);
                    mk[c] = prox_point(&p.ham, Some(&coupling), rho0, &z0, tau, tau, zc)?;
                }
                Ok(())
            })
            .collect();
        results.into_iter().collect::<Result<Vec<()>>>()?;

        // extrapolation
        let th = self.theta;
        for ((b, n), o) in s
            .m_bar
            .data_mut()
            .iter_mut()
            .zip(s.m.data())
            .zip(old_m.data())
        {
            *b = n + th * (n - o);
        }
        for ((b, n), o) in s.z_bar.data.iter_mut().zip(&s.z.data).zip(&old_z.data) {
            *b = n + th * (n - o);
        }
        s.iteration += 1;
        Ok(())
    }

    fn evaluate(
        &self,
        s: &SolveState,
    ) -> Result<(HistoryEntry, Certificate, CellField, CellField)> {
        let p = self.p;
        let marched = march_density(p, &s.z)?;
        let primal = evaluate_m(p, &marched, &s.z)?;
        let alpha = reconstruct_alpha(p, &s.u)?;
        let dual = evaluate_k(p, &s.u, &alpha)?;
        let residual = self.residual_norm(&s.m, &s.z);
        let pv = primal.value.finite();
        let scale = pv.map_or(1.0, |v| v.abs().max(1.0));
        let gap = pv.map(|v| v + dual.value);
        let rows = mass_balance_table(&p.grid, &marched, &p.j)?;
        let mass_defect = rows
            .iter()
            .map(|r| r.defect.abs() / r.expected.abs().max(1e-300))
            .fold(0.0, f64::max);
        let entry = HistoryEntry {
            iteration: s.iteration,
            primal: pv,
            dual: dual.value,
            gap,
            rel_gap: gap.map(|g| g / scale),
            residual,
        };
        let cert = Certificate {
            primal: pv,
            primal_boundary_form: primal.value_boundary_form.finite(),
            dual: dual.value,
            gap,
            rel_gap: gap.map(|g| g / scale),
            scale,
            residual,
            mass_defect,
            min_density: marched.data().iter().cloned().fold(f64::INFINITY, f64::min),
            subsolution_violation: dual.subsolution_violation,
            terminal_violation: dual.terminal_violation,
            iterations: s.iteration,
            converged: false,
            tau: self.tau,
            sigma: self.sigma,
            operator_norm: self.norm,
        };
        Ok((entry, cert, marched, alpha))
    }
}

pub fn solve(p: &Problem, cfg: &SolverConfig) -> Result<Solution> {
    solve_from(p, cfg, initial_state(p, cfg.init), None)
}

/// Continue from `state`, optionally checkpointing to `checkpoint`.
pub fn solve_from(
    p: &Problem,
    cfg: &SolverConfig,
    mut state: SolveState,
    checkpoint: Option<&Path>,
) -> Result<Solution> {
    check_state(p, &state)?;
    let engine = Engine::new(p, cfg)?;
    let check_every = cfg.check_every.max(1);
    let mut first_residual: Option<f64> = None;
    loop {
        let due = state.iteration % check_every == 0 || state.iteration >= cfg.max_iterations;
        if due {
            let (entry, mut cert, marched, alpha) = engine.evaluate(&state)?;
            let diverged = if !entry.residual.is_finite() || !entry.dual.is_finite() {
                Some("non-finite residual or dual value".to_string())
            } else {
                let base = *first_residual.get_or_insert(entry.residual.max(1.0));
                (entry.residual > 1e10 * base)
                    .then(|| format!("residual grew to {:.3e}", entry.residual))
            };
            if let Some(reason) = diverged {
                state.history.push(entry);
                return Err(MfgError::Divergence {
                    iteration: state.iteration,
                    reason,
                    history: state.history,
                });
            }
            let done = entry.rel_gap.is_some_and(|g| g <= cfg.gap_tol)
                && entry.residual <= cfg.residual_tol;
            log::debug!(
                "iter {} gap {:?} residual {:.3e}",
                entry.iteration,
                entry.rel_gap,
                entry.residual
            );
            if state.history.last().map(|h| h.iteration) != Some(entry.iteration) {
                state.history.push(entry);
            }
            if done || state.iteration >= cfg.max_iterations {
                cert.converged = done;
                let w = assemble_face_flux(p, &state.z)?;
                return Ok(Solution {
                    m: marched,
                    z: state.z.clone(),
                    w,
                    u: state.u.clone(),
                    alpha,
                    certificate: cert,
                    state,
                });
            }
        }
        engine.step(&mut state)?;
        if let (Some(every), Some(path)) = (cfg.checkpoint_every, checkpoint) {
            if state.iteration % every.max(1) == 0 {
                save_checkpoint(path, &state)?;
            }
        }
    }
}

/// Run exactly `n` iterations without evaluation or stopping.
pub fn iterate(p: &Problem, cfg: &SolverConfig, state: &mut SolveState, n: usize) -> Result<()> {
    check_state(p, state)?;
    let engine = Engine::new(p, cfg)?;
    for _ in 0..n {
        engine.step(state)?;
    }
    Ok(())
}

fn check_state(p: &Problem, s: &SolveState) -> Result<()> {
    let g = &p.grid;
    g.check_cell_field(&s.m, g.levels(), "state density")?;
    g.check_cell_field(&s.m_bar, g.levels(), "state density")?;
    g.check_cell_field(&s.u, g.levels(), "state potential")?;
    s.z.check(p)?;
    s.z_bar.check(p)
}

/// `(u, α)` with `u(T) = ψ` and `α` truncated below at `f(t, x, 0)`.
pub fn extract_potentials(p: &Problem, state: &SolveState) -> Result<(CellField, CellField)> {
    let mut u = state.u.clone();
    u.slice_mut(p.grid.time_steps()).copy_from_slice(&p.psi);
    let alpha = reconstruct_alpha(p, &u)?;
    Ok((u, alpha))
}

/// Continuity residual `(m^k - m^{k-1})/Δt + div` of a face flux, max norm.
pub fn face_residual(p: &Problem, m: &CellField, w: &FaceField) -> Result<f64> {
    let g = &p.grid;
    g.check_cell_field(m, g.levels(), "density")?;
    g.check_face_field(w, g.time_steps(), "flux")?;
    let mut r = vec![0.0; g.ncells()];
    let mut worst = 0.0f64;
    for k in 1..g.levels() {
        divergence_slice(g, w.slice(k - 1), p.j.slice(k - 1), &mut r);
        for c in 0..g.ncells() {
            let prev = if k == 1 { p.m0[c] } else { m.get(k - 1, c) };
            worst = worst.max((r[c] + (m.get(k, c) - prev) / g.dt()).abs());
        }
    }
    Ok(worst)
}
