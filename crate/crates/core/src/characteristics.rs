//! Agent-level cross-check: agents enter at `t = 0` with law `m0` and
//! through ∂Ω at rate `j`, then follow `ẋ = -H_p(∇u(t, x))` or the
//! scheme's own transport velocity.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::continuity::influx_on_interval;
use crate::convex::Hamiltonian;
use crate::error::{MfgError, Result};
use crate::grid::{gradient_slice, BoundaryField, CellField, FaceField, Grid};

/// Agents with positions at birth. Positions are stored flat, `dim` per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEnsemble {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub birth: Vec<f64>,
    pub weight: Vec<f64>,
    pub seed: u64,
}

impl AgentEnsemble {
    pub fn count(&self) -> usize {
        self.birth.len()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Total weight of agents born at or before `t`.
    pub fn mass_at(&self, t: f64) -> f64 {
        self.birth
            .iter()
            .zip(&self.weight)
            .filter(|(b, _)| **b <= t)
            .map(|(_, w)| w)
            .sum()
    }

    /// Agents born after `t = 0`.
    pub fn injected(&self) -> usize {
        self.birth.iter().filter(|b| **b > 0.0).count()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn sample_cdf(cdf: &[f64], x: f64) -> usize {
    cdf.partition_point(|&c| c <= x).min(cdf.len() - 1)
}

fn cumulative(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = w
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if acc > 0.0 {
        out.iter_mut().for_each(|v| *v /= acc);
    }
    out
}

/// Sample about `n_agents` agents.
///
/// Initial agents are drawn from `m0` (cell by density, uniform inside the
/// cell). Each interval's influx `∫∫ j` is carried by its own stratum of
/// agents, born uniformly in time on faces drawn by `j × face area`. Agent
/// counts per stratum are proportional to stratum mass and weights are
/// stratum mass over count, so the ensemble mass at every grid time equals
/// `∫m0 +` cumulative influx up to rounding.
pub fn seed_agents(
    grid: &Grid,
    m0: &[f64],
    j: &BoundaryField,
    n_agents: usize,
    seed: u64,
) -> Result<AgentEnsemble> {
    if n_agents == 0 {
        return Err(MfgError::Config("need at least one agent".into()));
    }
    if m0.len() != grid.ncells() {
        return Err(MfgError::Shape(format!(
            "m0 has {} cells, grid has {}",
            m0.len(),
            grid.ncells()
        )));
    }
    grid.check_boundary_field(j, grid.time_steps(), "influx")?;
    if m0
        .iter()
        .chain(j.data())
        .any(|v| *v < 0.0 || !v.is_finite())
    {
        return Err(MfgError::Config(
            "initial density and influx must be finite and nonnegative".into(),
        ));
    }
    let kk = grid.time_steps();
    let m0_mass = grid.cell_volume() * m0.iter().sum::<f64>();
    let inflow: Vec<f64> = (0..kk).map(|k| influx_on_interval(grid, j, k)).collect();
    let total = m0_mass + inflow.iter().sum::<f64>();
    if !(total > 0.0) {
        return Err(MfgError::Config(
            "initial density and influx are both zero".into(),
        ));
    }
    let count = |mass: f64| {
        if mass > 0.0 {
            ((n_agents as f64 * mass / total).round() as usize).max(1)
        } else {
            0
        }
    };

    let dim = grid.dim();
    let bounds = grid.domain().bounds().to_vec();
    let faces = grid.boundary_faces();
    let areas: Vec<f64> = faces
        .iter()
        .map(|(f, _)| grid.facet_face_area(f / 2))
        .collect();

    // (stratum, index within stratum); stratum 0 is t = 0, stratum k+1 is interval k
    let mut strata: Vec<(usize, usize, f64)> = Vec::new();
    let n0 = count(m0_mass);
    strata.extend((0..n0).map(|i| (0, i, m0_mass / n0 as f64)));
    for (k, &mass) in inflow.iter().enumerate() {
        let nk = count(mass);
        strata.extend((0..nk).map(|i| (k + 1, i, mass / nk as f64)));
    }
    let m0_cdf = cumulative(m0.iter().cloned());
    let face_cdf: Vec<Vec<f64>> = (0..kk)
        .map(|k| cumulative(j.slice(k).iter().zip(&areas).map(|(v, a)| v * a)))
        .collect();

    let sampled: Vec<(Vec<f64>, f64)> = strata
        .par_iter()
        .enumerate()
        .map(|(i, &(stratum, _, _))| {
            let mut rng = rng_for(seed, i as u64);
            let mut x = vec![0.0; dim];
            if stratum == 0 {
                let cell = sample_cdf(&m0_cdf, rng.gen::<f64>());
                for (a, xa) in x.iter_mut().enumerate() {
                    let h = grid.spacing()[a];
                    *xa = bounds[a].0 + h * (grid.coord(cell, a) as f64 + rng.gen::<f64>());
                }
                (x, 0.0)
            } else {
                let k = stratum - 1;
                let b = sample_cdf(&face_cdf[k], rng.gen::<f64>());
                let (facet, cell) = faces[b];
                let axis = facet / 2;
                for (a, xa) in x.iter_mut().enumerate() {
                    let h = grid.spacing()[a];
                    *xa = if a == axis {
                        if facet % 2 == 1 {
                            bounds[a].1
                        } else {
                            bounds[a].0
                        }
                    } else {
                        bounds[a].0 + h * (grid.coord(cell, a) as f64 + rng.gen::<f64>())
                    };
                }
                let birth = grid.time_at(k) + grid.dt() * rng.gen::<f64>();
                (x, birth.max(f64::MIN_POSITIVE))
            }
        })
        .collect();

    let mut ens = AgentEnsemble {
        dim,
        positions: Vec::with_capacity(sampled.len() * dim),
        birth: Vec::with_capacity(sampled.len()),
        weight: strata.iter().map(|s| s.2).collect(),
        seed,
    };
    for (x, b) in sampled {
        ens.positions.extend(x);
        ens.birth.push(b);
    }
    Ok(ens)
}

const MAX_DIM: usize = 8;

/// How agent velocities are obtained from a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityModel {
    /// `-H_p(∇u)` with `∇u` interpolated from faces. Boundary faces carry
    /// the normal gradient fixed by `m H_p(∇u)·ν = -j`.
    Gradient,
    /// The scheme's transport velocity `W / m̄` on interior faces and the
    /// inward `j / m` on boundary faces.
    Flux,
}

/// Face values of every interval with multilinear interpolation in space.
/// On `(t_k, t_{k+1})` the values of interval `k` are used.
pub struct VelocityField<'a> {
    grid: &'a Grid,
    model: VelocityModel,
    ham: Hamiltonian,
    faces: Vec<Vec<f64>>,
}

/// Inward speed `j / m` on a boundary face.
fn boundary_speed(m: &CellField, j: &BoundaryField, k: usize, b: usize, cell: usize) -> f64 {
    let (rho, jb) = (m.get(k + 1, cell), j.get(k, b));
    if jb > 0.0 && rho > 0.0 {
        jb / rho
    } else {
        0.0
    }
}

impl<'a> VelocityField<'a> {
    /// `-H_p(∇u)`; `m` and `j` enter only through the boundary faces.
    pub fn gradient(
        grid: &'a Grid,
        u: &CellField,
        m: &CellField,
        j: &BoundaryField,
        ham: &Hamiltonian,
    ) -> Result<Self> {
        grid.check_cell_field(u, grid.levels(), "value function")?;
        grid.check_cell_field(m, grid.levels(), "density")?;
        grid.check_boundary_field(j, grid.time_steps(), "influx")?;
        check_dim(grid)?;
        let bfaces = grid.boundary_faces();
        let faces = (0..grid.time_steps())
            .map(|k| {
                let mut g = vec![0.0; grid.nfaces()];
                gradient_slice(grid, u.slice(k), &mut g);
                for (b, &(facet, cell)) in bfaces.iter().enumerate() {
                    let axis = facet / 2;
                    let outward = if facet % 2 == 1 { 1.0 } else { -1.0 };
                    let face = if facet % 2 == 1 {
                        grid.upper_face(cell, axis)
                    } else {
                        grid.lower_face(cell, axis)
                    };
                    g[face] = outward * ham.dh_inverse(boundary_speed(m, j, k, b, cell));
                }
                g
            })
            .collect();
        Ok(VelocityField {
            grid,
            model: VelocityModel::Gradient,
            ham: *ham,
            faces,
        })
    }

    /// `W / m̄` with `m̄` the mean of the two cells at the end of the interval.
    pub fn flux(grid: &'a Grid, w: &FaceField, m: &CellField, j: &BoundaryField) -> Result<Self> {
        grid.check_face_field(w, grid.time_steps(), "flux")?;
        grid.check_cell_field(m, grid.levels(), "density")?;
        grid.check_boundary_field(j, grid.time_steps(), "influx")?;
        check_dim(grid)?;
        let bfaces = grid.boundary_faces();
        let faces = (0..grid.time_steps())
            .map(|k| {
                let mut v = vec![0.0; grid.nfaces()];
                for c in 0..grid.ncells() {
                    for a in 0..grid.dim() {
                        if let Some(up) = grid.upper_neighbor(c, a) {
                            let f = grid.upper_face(c, a);
                            let mbar = 0.5 * (m.get(k + 1, c) + m.get(k + 1, up));
                            v[f] = if mbar > 0.0 { w.get(k, f) / mbar } else { 0.0 };
                        }
                    }
                }
                for (b, &(facet, cell)) in bfaces.iter().enumerate() {
                    let axis = facet / 2;
                    let (face, inward) = if facet % 2 == 1 {
                        (grid.upper_face(cell, axis), -1.0)
                    } else {
                        (grid.lower_face(cell, axis), 1.0)
                    };
                    v[face] = inward * boundary_speed(m, j, k, b, cell);
                }
                v
            })
            .collect();
        Ok(VelocityField {
            grid,
            model: VelocityModel::Flux,
            ham: Hamiltonian::quadratic(),
            faces,
        })
    }

    pub fn model(&self) -> VelocityModel {
        self.model
    }

    /// Interpolated face values (`∇u` or velocity, by model).
    pub fn interpolate(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let k = ((t / g.dt()).floor().max(0.0) as usize).min(g.time_steps() - 1);
        let field = &self.faces[k];
        let dim = g.dim();
        let bounds = g.domain().bounds();
        let mut node = [(0usize, 0.0f64); MAX_DIM];
        let mut idx = [0usize; MAX_DIM];
        for a in 0..dim {
            for b in 0..dim {
                let n = g.cells()[b];
                let s = (x[b] - bounds[b].0) / g.spacing()[b];
                node[b] = if b == a {
                    let s = s.clamp(0.0, n as f64);
                    let i = (s.floor() as usize).min(n - 1);
                    (i, s - i as f64)
                } else if n == 1 {
                    (0, 0.0)
                } else {
                    let s = (s - 0.5).clamp(0.0, (n - 1) as f64);
                    let i = (s.floor() as usize).min(n - 2);
                    (i, s - i as f64)
                };
            }
            let mut acc = 0.0;
            for corner in 0..(1usize << dim) {
                let mut w = 1.0;
                for b in 0..dim {
                    let up = (corner >> b) & 1 == 1;
                    let (i, f) = node[b];
                    idx[b] = i + up as usize;
                    w *= if up { f } else { 1.0 - f };
                }
                if w != 0.0 {
                    acc += w * field[g.face_from_multi(a, &idx[..dim])];
                }
            }
            out[a] = acc;
        }
    }

    /// Agent velocity at `(t, x)`; `scratch` needs `dim` entries.
    pub fn velocity(&self, t: f64, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        match self.model {
            VelocityModel::Flux => self.interpolate(t, x, out),
            VelocityModel::Gradient => {
                self.interpolate(t, x, scratch);
                self.ham.grad(scratch, out);
                out.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
}

fn check_dim(grid: &Grid) -> Result<()> {
    if grid.dim() > MAX_DIM {
        return Err(MfgError::Config(format!(
            "agent simulation supports up to {MAX_DIM} dimensions"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub levels: Vec<usize>,
    pub times: Vec<f64>,
    /// `[level slot][agent][axis]`, NaN for agents not yet born.
    pub positions: Vec<Vec<f64>>,
    pub weight: Vec<f64>,
    pub dim: usize,
    /// Steps that left Ω̄ and were reflected back.
    pub exits: usize,
    /// Steps still outside after reflection, clamped onto ∂Ω.
    pub clamps: usize,
    pub agent_steps: usize,
}

impl TrajectoryRecord {
    pub fn exit_fraction(&self) -> f64 {
        self.exits as f64 / self.agent_steps.max(1) as f64
    }
}

fn confine(x: &mut [f64], bounds: &[(f64, f64)], exits: &mut usize, clamps: &mut usize) {
    let mut left = false;
    for (xa, &(a, b)) in x.iter_mut().zip(bounds) {
        if *xa < a {
            *xa = 2.0 * a - *xa;
            left = true;
        } else if *xa > b {
            *xa = 2.0 * b - *xa;
            left = true;
        }
        if *xa < a || *xa > b {
            *xa = xa.clamp(a, b);
            *clamps += 1;
        }
    }
    *exits += left as usize;
}

/// Explicit midpoint integration of `ẋ = v(t, x)` with substep `dt_sub`,
/// recording positions at the given grid levels.
pub fn integrate(
    grid: &Grid,
    ens: &AgentEnsemble,
    field: &VelocityField,
    dt_sub: f64,
    levels: &[usize],
) -> Result<TrajectoryRecord> {
    if !(dt_sub > 0.0) || dt_sub > grid.dt() * (1.0 + 1e-12) {
        return Err(MfgError::Config(format!(
            "substep {dt_sub} must lie in (0, {}]",
            grid.dt()
        )));
    }
    if let Some(l) = levels.iter().find(|&&l| l > grid.time_steps()) {
        return Err(MfgError::Config(format!("level {l} is past the horizon")));
    }
    if ens.dim != grid.dim() {
        return Err(MfgError::Shape(format!(
            "agents in {}D, grid in {}D",
            ens.dim,
            grid.dim()
        )));
    }
    let dim = grid.dim();
    let bounds = grid.domain().bounds().to_vec();
    let times: Vec<f64> = levels.iter().map(|&l| grid.time_at(l)).collect();
    let nsub = (grid.dt() / dt_sub - 1e-9).ceil() as usize;
    let h = grid.dt() / nsub as f64;

    let results: Vec<(Vec<f64>, usize, usize, usize)> = (0..ens.count())
        .into_par_iter()
        .map(|i| {
            let (mut gp, mut v) = (vec![0.0; dim], vec![0.0; dim]);
            let mut xm = vec![0.0; dim];
            let mut x = ens.position(i).to_vec();
            let mut t = ens.birth[i];
            let (mut exits, mut clamps, mut steps) = (0, 0, 0);
            let mut out = vec![f64::NAN; times.len() * dim];
            let mut order: Vec<usize> = (0..times.len()).collect();
            order.sort_by(|a, b| times[*a].total_cmp(&times[*b]));
            for slot in order {
                let target = times[slot];
                if target < t {
                    continue;
                }
                while t < target - 1e-14 {
                    let next = ((t / h).floor() + 1.0) * h;
                    let step = next.min(target) - t;
                    field.velocity(t, &x, &mut gp, &mut v);
                    for a in 0..dim {
                        xm[a] = x[a] + 0.5 * step * v[a];
                    }
                    confine(&mut xm, &bounds, &mut 0, &mut 0);
                    field.velocity(t + 0.5 * step, &xm, &mut gp, &mut v);
                    for a in 0..dim {
                        x[a] += step * v[a];
                    }
                    confine(&mut x, &bounds, &mut exits, &mut clamps);
                    steps += 1;
                    t += step;
                }
                out[slot * dim..(slot + 1) * dim].copy_from_slice(&x);
            }
            (out, exits, clamps, steps)
        })
        .collect();

    let mut rec = TrajectoryRecord {
        levels: levels.to_vec(),
        times,
        positions: vec![Vec::with_capacity(ens.count() * dim); levels.len()],
        weight: ens.weight.clone(),
        dim,
        exits: 0,
        clamps: 0,
        agent_steps: 0,
    };
    for (out, e, c, s) in results {
        for (slot, pos) in rec.positions.iter_mut().enumerate() {
            pos.extend_from_slice(&out[slot * dim..(slot + 1) * dim]);
        }
        rec.exits += e;
        rec.clamps += c;
        rec.agent_steps += s;
    }
    Ok(rec)
}

/// Weighted histogram of the agents at recorded slot `slot`, as a density.
pub fn empirical_density(grid: &Grid, rec: &TrajectoryRecord, slot: usize) -> Result<CellField> {
    let pos = rec
        .positions
        .get(slot)
        .ok_or_else(|| MfgError::Config(format!("slot {slot} was not recorded")))?;
    let mut out = CellField::zeros(grid.ncells(), 1);
    let d = out.slice_mut(0);
    let inv = 1.0 / grid.cell_volume();
    for (x, w) in pos.chunks(rec.dim).zip(&rec.weight) {
        if x[0].is_nan() {
            continue;
        }
        d[grid.locate(x)] += w * inv;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityComparison {
    pub level: usize,
    pub t: f64,
    pub l1: f64,
    pub relative_l1: f64,
    pub mass_agents: f64,
    pub mass_solver: f64,
}

/// L¹ distance between one empirical slice and level `level` of `m`.
pub fn compare(
    grid: &Grid,
    m_emp: &CellField,
    m: &CellField,
    level: usize,
) -> Result<DensityComparison> {
    grid.check_cell_field(m, grid.levels(), "density")?;
    let vol = grid.cell_volume();
    let (a, b) = (m_emp.slice(0), m.slice(level));
    let l1 = vol * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let mass_solver = vol * b.iter().map(|v| v.abs()).sum::<f64>();
    Ok(DensityComparison {
        level,
        t: grid.time_at(level),
        l1,
        relative_l1: l1 / mass_solver.max(f64::MIN_POSITIVE),
        mass_agents: vol * a.iter().sum::<f64>(),
        mass_solver,
    })
}

pub fn compare_all(
    grid: &Grid,
    rec: &TrajectoryRecord,
    m: &CellField,
) -> Result<Vec<DensityComparison>> {
    (0..rec.levels.len())
        .map(|slot| {
            compare(
                grid,
                &empirical_density(grid, rec, slot)?,
                m,
                rec.levels[slot],
            )
        })
        .collect()
}

pub fn comparison_csv(rows: &[DensityComparison]) -> String {
    let mut s = String::from("t,l1,relative_l1,mass_agents,mass_solver\n");
    for r in rows {
        writeln!(
            s,
            "{},{:.6e},{:.6e},{:.12e},{:.12e}",
            r.t, r.l1, r.relative_l1, r.mass_agents, r.mass_solver
        )
        .unwrap();
    }
    s
}

/// Positions of the first `agents` agents at every recorded time.
pub fn trajectory_csv(rec: &TrajectoryRecord, agents: usize) -> String {
    let mut s = String::from("agent,t");
    for a in 0..rec.dim {
        write!(s, ",x{a}").unwrap();
    }
    s.push('\n');
    let n = rec.weight.len().min(agents);
    for i in 0..n {
        for (slot, t) in rec.times.iter().enumerate() {
            let x = &rec.positions[slot][i * rec.dim..(i + 1) * rec.dim];
            if x[0].is_nan() {
                continue;
            }
            write!(s, "{i},{t}").unwrap();
            for v in x {
                write!(s, ",{v:.9}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

/// Least-squares slope of `log err` against `log n`.
pub fn log_log_slope(ns: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
