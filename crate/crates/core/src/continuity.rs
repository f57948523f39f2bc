//! Discrete continuity equation `∂_t m + div w = 0` with inflow `-w·ν = j`.
//!
//! Flux on interval `k` (between levels `k` and `k + 1`) moves mass from
//! level `k` to level `k + 1`:
//! `(m^{k+1} - m^k)/Δt + div(w^k, j^k) = 0`, `m^0 = m0`.

use std::fmt::Write;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MfgError, Result};
use crate::grid::{divergence_slice, BoundaryField, CellField, FaceField, Grid};

#[derive(Debug)]
pub struct ContinuityOperator {
    grid: Grid,
    m0: Vec<f64>,
    j: BoundaryField,
    norm: OnceLock<f64>,
}

impl ContinuityOperator {
    pub fn new(grid: &Grid, m0: Vec<f64>, j: BoundaryField) -> Result<Self> {
        if m0.len() != grid.ncells() {
            return Err(MfgError::Shape(format!(
                "m0 has {} cells, grid {}",
                m0.len(),
                grid.ncells()
            )));
        }
        grid.check_boundary_field(&j, grid.time_steps(), "influx")?;
        Ok(ContinuityOperator {
            grid: grid.clone(),
            m0,
            j,
            norm: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m0(&self) -> &[f64] {
        &self.m0
    }

    pub fn influx(&self) -> &BoundaryField {
        &self.j
    }

    fn check(&self, m: &CellField, w: &FaceField) -> Result<()> {
        self.grid
            .check_cell_field(m, self.grid.levels(), "density")?;
        self.grid
            .check_face_field(w, self.grid.time_steps(), "flux")
    }

    /// Linear part `A(m, w)`: slice 0 is `m^0/Δt`, slice `k ≥ 1` is
    /// `(m^k - m^{k-1})/Δt + div(w^{k-1}, 0)`.
    pub fn apply(&self, m: &CellField, w: &FaceField) -> Result<CellField> {
        self.check(m, w)?;
        Ok(self.apply_unchecked(m.data(), w.data()))
    }

    fn apply_unchecked(&self, m: &[f64], w: &[f64]) -> CellField {
        let g = &self.grid;
        let (nc, nf, dt) = (g.ncells(), g.nfaces(), g.dt());
        let zero_j = vec![0.0; g.nboundary()];
        let mut out = CellField::zeros(nc, g.levels());
        for (c, v) in out.slice_mut(0).iter_mut().enumerate() {
            *v = m[c] / dt;
        }
        for k in 1..g.levels() {
            let s = out.slice_mut(k);
            divergence_slice(g, &w[(k - 1) * nf..k * nf], &zero_j, s);
            for c in 0..nc {
                s[c] += (m[k * nc + c] - m[(k - 1) * nc + c]) / dt;
            }
        }
        out
    }

    /// Transpose of [`apply`](Self::apply) in the plain Euclidean pairing.
    pub fn apply_transpose(&self, r: &CellField) -> (CellField, FaceField) {
        let g = &self.grid;
        let (nc, dt, kk) = (g.ncells(), g.dt(), g.time_steps());
        let mut m = CellField::zeros(nc, g.levels());
        let mut w = FaceField::zeros(g.nfaces(), kk);
        for k in 0..=kk {
            for c in 0..nc {
                let next = if k < kk { r.get(k + 1, c) } else { 0.0 };
                m.set(k, c, (r.get(k, c) - next) / dt);
            }
        }
        for k in 1..=kk {
            let rs = r.slice(k);
            let ws = w.slice_mut(k - 1);
            for a in 0..g.dim() {
                let h = g.spacing()[a];
                for c in 0..nc {
                    if let Some(nb) = g.upper_neighbor(c, a) {
                        ws[g.upper_face(c, a)] = (rs[c] - rs[nb]) / h;
                    }
                }
            }
        }
        (m, w)
    }

    /// Data term `b`: slice 0 is `m0/Δt`, slice `k` is the boundary inflow
    /// rate `-div(0, j^{k-1})`.
    pub fn rhs(&self) -> CellField {
        let g = &self.grid;
        let mut b = CellField::zeros(g.ncells(), g.levels());
        for (c, v) in b.slice_mut(0).iter_mut().enumerate() {
            *v = self.m0[c] / g.dt();
        }
        let zero_w = vec![0.0; g.nfaces()];
        for k in 1..g.levels() {
            let s = b.slice_mut(k);
            divergence_slice(g, &zero_w, self.j.slice(k - 1), s);
            s.iter_mut().for_each(|v| *v = -*v);
        }
        b
    }

    /// `A(m, w) - b`; zero exactly when the scheme holds with `m^0 = m0`.
    pub fn residual(&self, m: &CellField, w: &FaceField) -> Result<CellField> {
        let mut r = self.apply(m, w)?;
        let b = self.rhs();
        r.data_mut()
            .iter_mut()
            .zip(b.data())
            .for_each(|(x, y)| *x -= y);
        Ok(r)
    }

    /// `‖A‖₂` by power iteration on `AᵀA`, cached.
    pub fn norm(&self) -> f64 {
        *self.norm.get_or_init(|| {
            let g = &self.grid;
            let nm = g.ncells() * g.levels();
            let nw = g.nfaces() * g.time_steps();
            power_iteration(nm + nw, 200, |x, y| {
                let r = self.apply_unchecked(&x[..nm], &x[nm..]);
                let (am, aw) = self.apply_transpose(&r);
                y[..nm].copy_from_slice(am.data());
                y[nm..].copy_from_slice(aw.data());
            })
        })
    }
}

/// Largest singular value of `A` given `x ↦ AᵀA x`.
pub fn power_iteration(n: usize, iters: usize, mut ata: impl FnMut(&[f64], &mut [f64])) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..iters {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        ata(&x, &mut y);
        let next = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        std::mem::swap(&mut x, &mut y);
        if (next - lambda).abs() <= 1e-10 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // small safety margin for the unconverged tail
    lambda.max(0.0).sqrt() * 1.01
}

/// Solve the scheme forward for `m` given the flux.
pub fn march(grid: &Grid, m0: &[f64], w: &FaceField, j: &BoundaryField) -> Result<CellField> {
    grid.check_face_field(w, grid.time_steps(), "flux")?;
    grid.check_boundary_field(j, grid.time_steps(), "influx")?;
    let nc = grid.ncells();
    let mut m = CellField::zeros(nc, grid.levels());
    m.slice_mut(0).copy_from_slice(m0);
    let mut div = vec![0.0; nc];
    for k in 1..grid.levels() {
        divergence_slice(grid, w.slice(k - 1), j.slice(k - 1), &mut div);
        for c in 0..nc {
            let prev = m.get(k - 1, c);
            m.set(k, c, prev - grid.dt() * div[c]);
        }
    }
    Ok(m)
}

/// Discrete mass `Σ vol · m^k`.
pub fn mass_at_time(grid: &Grid, m: &CellField, level: usize) -> f64 {
    grid.cell_volume() * m.slice(level).iter().sum::<f64>()
}

/// Mass entering through the boundary during interval `k`.
pub fn influx_on_interval(grid: &Grid, j: &BoundaryField, k: usize) -> f64 {
    let mut acc = 0.0;
    for facet in 0..grid.nfacets() {
        let area = grid.facet_face_area(facet / 2);
        acc += area * j.facet_values(grid, k, facet).iter().sum::<f64>();
    }
    grid.dt() * acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassBalanceRow {
    pub t: f64,
    pub mass: f64,
    pub expected: f64,
    pub defect: f64,
}

pub fn mass_balance_table(
    grid: &Grid,
    m: &CellField,
    j: &BoundaryField,
) -> Result<Vec<MassBalanceRow>> {
    grid.check_cell_field(m, grid.levels(), "density")?;
    grid.check_boundary_field(j, grid.time_steps(), "influx")?;
    let mut expected = mass_at_time(grid, m, 0);
    let mut rows = Vec::with_capacity(grid.levels());
    for k in 0..grid.levels() {
        if k > 0 {
            expected += influx_on_interval(grid, j, k - 1);
        }
        let mass = mass_at_time(grid, m, k);
        rows.push(MassBalanceRow {
            t: grid.time_at(k),
            mass,
            expected,
            defect: mass - expected,
        });
    }
    Ok(rows)
}

pub fn mass_balance_csv(rows: &[MassBalanceRow]) -> String {
    let mut out = String::from("t,mass,expected_mass,defect\n");
    for r in rows {
        writeln!(
            out,
            "{},{:.17e},{:.17e},{:.3e}",
            r.t, r.mass, r.expected, r.defect
        )
        .unwrap();
    }
    out
}

/// The `t = T` slice.
pub fn terminal_trace(grid: &Grid, m: &CellField) -> Result<CellField> {
    grid.check_cell_field(m, grid.levels(), "density")?;
    CellField::from_vec(grid.ncells(), 1, m.slice(grid.time_steps()).to_vec())
}
