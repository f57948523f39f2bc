use crate::continuity::march;
use crate::convex::{kinetic_eval, ExtReal};
use crate::error::{MfgError, Result};
use crate::grid::{boundary_pairing, face_inner_interior, gradient_slice, CellField, FaceField};
use crate::problem::Problem;

use super::split::SplitLayout;

/// Flux halves on every interval, `[interval][cell][slot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFlux {
    pub slots: usize,
    pub ncells: usize,
    pub intervals: usize,
    pub data: Vec<f64>,
}

impl SplitFlux {
    pub fn zeros(p: &Problem) -> Self {
        let slots = 2 * p.dim();
        let (nc, kk) = (p.grid.ncells(), p.grid.time_steps());
        SplitFlux {
            slots,
            ncells: nc,
            intervals: kk,
            data: vec![0.0; kk * nc * slots],
        }
    }

    pub fn interval_len(&self) -> usize {
        self.ncells * self.slots
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.interval_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.interval_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn point(&self, k: usize, cell: usize) -> &[f64] {
        let at = (k * self.ncells + cell) * self.slots;
        &self.data[at..at + self.slots]
    }

    pub fn check(&self, p: &Problem) -> Result<()> {
        if self.slots != 2 * p.dim()
            || self.ncells != p.grid.ncells()
            || self.intervals != p.grid.time_steps()
            || self.data.len() != self.intervals * self.interval_len()
        {
            return Err(MfgError::Shape(format!(
                "split flux {}x{}x{} does not match grid ({} intervals, {} cells, {} slots)",
                self.intervals,
                self.ncells,
                self.slots,
                p.grid.time_steps(),
                p.grid.ncells(),
                2 * p.dim()
            )));
        }
        Ok(())
    }
}

/// Face flux of every interval.
pub fn assemble_face_flux(p: &Problem, z: &SplitFlux) -> Result<FaceField> {
    z.check(p)?;
    let layout = SplitLayout::new(&p.grid);
    let mut w = FaceField::intervals(&p.grid);
    for k in 0..p.grid.time_steps() {
        layout.assemble(z.slice(k), w.slice_mut(k));
    }
    Ok(w)
}

/// Density obtained by solving the continuity scheme with flux `z`.
pub fn march_density(p: &Problem, z: &SplitFlux) -> Result<CellField> {
    let w = assemble_face_flux(p, z)?;
    march(&p.grid, &p.m0, &w, &p.j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalValue {
    /// Terminal form `Σ μ [m L + F] + ⟨ψ, m(T)⟩`.
    pub value: ExtReal,
    /// Boundary form `Σ μ [m L + F] + Σ Δt ⟨∇ψ, W⟩ + ⟨ψ, m0⟩ + Σ Δt ⟨ψ, j⟩`.
    pub value_boundary_form: ExtReal,
    pub running: ExtReal,
    /// First `(level, cell)` where the integrand is `+∞`.
    pub infeasible_at: Option<(usize, usize)>,
}

/// Discrete primal functional. Levels `1..=K` of `m` pair with the flux of
/// the interval that ends there.
pub fn evaluate_m(p: &Problem, m: &CellField, z: &SplitFlux) -> Result<PrimalValue> {
    let g = &p.grid;
    g.check_cell_field(m, g.levels(), "density")?;
    z.check(p)?;
    let (nc, kk, vol, dt) = (g.ncells(), g.time_steps(), g.cell_volume(), g.dt());
    let mu = dt * vol;
    let mut running = 0.0;
    let mut infeasible_at = None;
    'outer: for k in 1..=kk {
        for c in 0..nc {
            let rho = m.get(k, c);
            let kin = kinetic_eval(&p.ham, rho, z.point(k - 1, c));
            let f = p.coupling_at(k, c).big_f(rho);
            match kin.add(f) {
                ExtReal::Finite(v) => running += mu * v,
                ExtReal::Infinite => {
                    infeasible_at = Some((k, c));
                    break 'outer;
                }
            }
        }
    }
    if infeasible_at.is_some() {
        return Ok(PrimalValue {
            value: ExtReal::Infinite,
            value_boundary_form: ExtReal::Infinite,
            running: ExtReal::Infinite,
            infeasible_at,
        });
    }
    let terminal: f64 = vol
        * m.slice(kk)
            .iter()
            .zip(&p.psi)
            .map(|(a, b)| a * b)
            .sum::<f64>();

    let layout = SplitLayout::new(g);
    let mut grad = vec![0.0; g.nfaces()];
    gradient_slice(g, &p.psi, &mut grad);
    let mut w = vec![0.0; g.nfaces()];
    let mut boundary = vol * p.m0.iter().zip(&p.psi).map(|(a, b)| a * b).sum::<f64>();
    for k in 0..kk {
        layout.assemble(z.slice(k), &mut w);
        boundary +=
            dt * (face_inner_interior(g, &grad, &w) + boundary_pairing(g, &p.psi, p.j.slice(k)));
    }
    Ok(PrimalValue {
        value: ExtReal::Finite(running + terminal),
        value_boundary_form: ExtReal::Finite(running + boundary),
        running: ExtReal::Finite(running),
        infeasible_at: None,
    })
}

/// `H̃` at every `(level, cell)` for levels `1..=K`, using `∇u^{k-1}`;
/// level 0 is left at zero.
pub fn discrete_hamiltonian(p: &Problem, u: &CellField) -> Result<CellField> {
    let g = &p.grid;
    g.check_cell_field(u, g.levels(), "value function")?;
    let layout = SplitLayout::new(g);
    let mut out = CellField::levels(g);
    let mut grad = vec![0.0; g.nfaces()];
    let mut feat = vec![0.0; layout.interval_len()];
    for k in 1..g.levels() {
        layout.features_of(g, u.slice(k - 1), &mut grad, &mut feat);
        for c in 0..g.ncells() {
            out.set(
                k,
                c,
                p.ham.eval(&feat[c * layout.slots..(c + 1) * layout.slots]),
            );
        }
    }
    Ok(out)
}

/// `-D_t u + H̃` at levels `1..=K`; level 0 is zero.
pub fn hj_operator(p: &Problem, u: &CellField) -> Result<CellField> {
    let g = &p.grid;
    let mut out = discrete_hamiltonian(p, u)?;
    for k in 1..g.levels() {
        for c in 0..g.ncells() {
            let v = out.get(k, c) - (u.get(k, c) - u.get(k - 1, c)) / g.dt();
            out.set(k, c, v);
        }
    }
    Ok(out)
}

/// `α = max(-D_t u + H̃, f(t, x, 0))`; level 0 holds `f(0, x, 0)`.
pub fn reconstruct_alpha(p: &Problem, u: &CellField) -> Result<CellField> {
    let mut a = hj_operator(p, u)?;
    for k in 0..p.grid.levels() {
        for c in 0..p.grid.ncells() {
            let f0 = p.coupling_at(k, c).f0();
            let v = if k == 0 { f0 } else { a.get(k, c).max(f0) };
            a.set(k, c, v);
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualValue {
    pub value: f64,
    /// `max (-D_t u + H̃ - α)₊` over levels `1..=K`.
    pub subsolution_violation: f64,
    /// `max (u(T) - ψ)₊`.
    pub terminal_violation: f64,
}

/// `Σ μ F*(α) - ⟨u(0), m0⟩ - Σ Δt ⟨u, j⟩_∂Ω`.
pub fn evaluate_k(p: &Problem, u: &CellField, alpha: &CellField) -> Result<DualValue> {
    let g = &p.grid;
    g.check_cell_field(alpha, g.levels(), "running cost")?;
    let hj = hj_operator(p, u)?;
    let (nc, kk, vol, dt) = (g.ncells(), g.time_steps(), g.cell_volume(), g.dt());
    let mut value = -vol
        * u.slice(0)
            .iter()
            .zip(&p.m0)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    let mut sub = 0.0f64;
    for k in 1..=kk {
        let mut acc = 0.0;
        for c in 0..nc {
            let a = alpha.get(k, c);
            acc += p.coupling_at(k, c).f_star(a);
            sub = sub.max(hj.get(k, c) - a);
        }
        value += dt * vol * acc - dt * boundary_pairing(g, u.slice(k - 1), p.j.slice(k - 1));
    }
    let term = u
        .slice(kk)
        .iter()
        .zip(&p.psi)
        .map(|(a, b)| a - b)
        .fold(0.0f64, f64::max);
    Ok(DualValue {
        value,
        subsolution_violation: sub.max(0.0),
        terminal_violation: term,
    })
}
