use super::{CellField, Grid, RectDomain};
use crate::error::{shape_err, MfgError, Result};

/// How a field is continued past the terminal time.
#[derive(Debug, Clone)]
pub enum TerminalExtension {
    /// `ψ(x) + slope · (T_shifted - t)`, used for value functions. `slope`
    /// is normally `-max H(∇ψ)` so that the continuation stays a subsolution
    /// with zero running cost.
    Affine { psi: Vec<f64>, slope: f64 },
    /// Zero continuation, used for running costs.
    Zero,
}

/// A field continued by reflection onto `Π (2a_i - b_i, 2b_i - a_i)` and
/// shifted/padded in time onto `[-pad, T + pad]`.
#[derive(Debug, Clone)]
pub struct ExtendedField {
    pub base: Grid,
    /// Grid on the enlarged box; its level `e` sits at time `(e - pad_levels) Δt`.
    pub grid: Grid,
    pub pad_levels: usize,
    pub field: CellField,
}

/// Source index along one axis for extended index `e ∈ [0, 3n)`.
///
/// The three blocks are the reflection about the lower end, the identity
/// and the reflection about the upper end. Each reflection is its own
/// inverse.
pub fn reflect_index(n: usize, e: usize) -> usize {
    let block = e / n;
    let local = e % n;
    match block {
        1 => local,
        0 | 2 => n - 1 - local,
        _ => panic!("extended index {e} out of range for {n} cells"),
    }
}

/// Reflect-extend a level field (`K + 1` slices) in space and shift/pad it
/// in time by `pad_time` (rounded up to whole steps).
///
/// Level `e` of the result is original level `e` for `e <= K` (the time
/// shift by `pad` is absorbed by the origin offset) and the terminal
/// continuation beyond.
pub fn reflect_extend(
    grid: &Grid,
    field: &CellField,
    pad_time: f64,
    terminal: &TerminalExtension,
) -> Result<ExtendedField> {
    grid.check_cell_field(field, grid.levels(), "reflect_extend")?;
    if !(pad_time >= 0.0) {
        return Err(MfgError::Config(format!(
            "pad_time {pad_time} must be non-negative"
        )));
    }
    if let TerminalExtension::Affine { psi, .. } = terminal {
        if psi.len() != grid.ncells() {
            return shape_err("reflect_extend: terminal data has the wrong number of cells");
        }
    }
    let pad_levels = (pad_time / grid.dt() - 1e-9).ceil().max(0.0) as usize;
    let k_last = grid.time_steps();
    let dt = grid.dt();

    let bounds: Vec<(f64, f64)> = grid
        .domain()
        .bounds()
        .iter()
        .map(|&(a, b)| (2.0 * a - b, 2.0 * b - a))
        .collect();
    let ext_steps = k_last + 2 * pad_levels;
    let ext_domain = RectDomain::new(bounds, ext_steps as f64 * dt)?;
    let ext_cells: Vec<usize> = grid.cells().iter().map(|n| 3 * n).collect();
    let ext_grid = Grid::new(ext_domain, ext_cells, ext_steps)?;

    let source: Vec<usize> = (0..ext_grid.ncells())
        .map(|c| {
            let idx: Vec<usize> = (0..grid.dim())
                .map(|a| reflect_index(grid.cells()[a], ext_grid.coord(c, a)))
                .collect();
            grid.cell_index(&idx)
        })
        .collect();

    let mut out = CellField::zeros(ext_grid.ncells(), ext_steps + 1);
    for e in 0..=ext_steps {
        let slice = out.slice_mut(e);
        if e <= k_last {
            let src = field.slice(e);
            for (c, s) in source.iter().enumerate() {
                slice[c] = src[*s];
            }
        } else {
            match terminal {
                TerminalExtension::Affine { psi, slope } => {
                    let shift = slope * (k_last as f64 - e as f64) * dt;
                    for (c, s) in source.iter().enumerate() {
                        slice[c] = psi[*s] + shift;
                    }
                }
                TerminalExtension::Zero => slice.iter_mut().for_each(|v| *v = 0.0),
            }
        }
    }
    Ok(ExtendedField {
        base: grid.clone(),
        grid: ext_grid,
        pad_levels,
        field: out,
    })
}

/// Convolve with the normalized bump `(1 - s²)³` of space-time radius
/// `eps` and restrict to the original cylinder.
pub fn mollify(ext: &ExtendedField, eps: f64) -> Result<CellField> {
    if !(eps > 0.0) {
        return Err(MfgError::Config(format!(
            "mollifier radius {eps} must be positive"
        )));
    }
    let base = &ext.base;
    let dt = base.dt();
    let reach_t = (eps / dt).floor() as usize;
    if reach_t > ext.pad_levels {
        return shape_err(format!(
            "mollify: radius {eps} needs {reach_t} padded levels, extension has {}",
            ext.pad_levels
        ));
    }
    let reach: Vec<usize> = base
        .spacing()
        .iter()
        .map(|h| (eps / h).floor() as usize)
        .collect();
    for (a, (&r, &n)) in reach.iter().zip(base.cells()).enumerate() {
        if r > n {
            return shape_err(format!(
                "mollify: radius {eps} exceeds the reflected margin on axis {a}"
            ));
        }
    }

    // stencil: (time offset, per-axis offsets, weight)
    let mut stencil: Vec<(isize, Vec<isize>, f64)> = Vec::new();
    let dim = base.dim();
    let mut offs = vec![-(reach_t as isize); 1 + dim];
    for a in 0..dim {
        offs[a + 1] = -(reach[a] as isize);
    }
    loop {
        let mut s2 = (offs[0] as f64 * dt / eps).powi(2);
        for a in 0..dim {
            s2 += (offs[a + 1] as f64 * base.spacing()[a] / eps).powi(2);
        }
        if s2 < 1.0 {
            stencil.push((offs[0], offs[1..].to_vec(), (1.0 - s2).powi(3)));
        }
        // odometer increment
        let mut d = 0;
        loop {
            if d > dim {
                break;
            }
            let lim = if d == 0 { reach_t } else { reach[d - 1] } as isize;
            if offs[d] < lim {
                offs[d] += 1;
                break;
            }
            offs[d] = -lim;
            d += 1;
        }
        if d > dim {
            break;
        }
    }
    let total: f64 = stencil.iter().map(|s| s.2).sum();
    for s in &mut stencil {
        s.2 /= total;
    }

    let mut out = CellField::levels(base);
    for k in 0..base.levels() {
        let e0 = (k + ext.pad_levels) as isize;
        for c in 0..base.ncells() {
            let mut acc = 0.0;
            for (dtk, dx, w) in &stencil {
                let e = (e0 + dtk) as usize;
                let mut cell = 0;
                for a in 0..dim {
                    let i = (base.coord(c, a) + base.cells()[a]) as isize + dx[a];
                    cell += i as usize * ext.grid.strides()[a];
                }
                acc += w * ext.field.get(e, cell);
            }
            out.set(k, c, acc);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn grid1(n: usize, k: usize) -> Grid {
        build_grid(RectDomain::new(vec![(0.0, 1.0)], 1.0).unwrap(), &[n], k).unwrap()
    }

    #[test]
    fn reflection_is_an_involution() {
        for n in 1..6 {
            for e in 0..3 * n {
                let s = reflect_index(n, e);
                // mirrored position maps back into the same block
                let block = e / n;
                let back = block * n + reflect_index(n, block * n + s);
                assert_eq!(back, e, "n={n} e={e}");
            }
        }
    }

    #[test]
    fn linear_field_mirrors_about_the_facet() {
        let g = grid1(4, 2);
        let f = CellField::from_fn(&g, g.levels(), |_, x| x[0]);
        let ext = reflect_extend(&g, &f, 0.0, &TerminalExtension::Zero).unwrap();
        // extended cell centres: -1 + (e + 0.5)/4; x = -0.125 is e = 3, mirror of x = 0.125
        let x_neg = ext.grid.center_coord(0, 3);
        assert!((x_neg + 0.125).abs() < 1e-14);
        assert_eq!(ext.field.get(0, 3), f.get(0, 0));
        // x = -0.375 ↔ 0.375
        assert_eq!(ext.field.get(1, 2), f.get(1, 1));
    }

    #[test]
    fn symmetric_field_extends_continuously() {
        let g = grid1(6, 1);
        let f = CellField::from_fn(&g, 2, |_, x| (x[0] - 0.5).powi(2));
        let ext = reflect_extend(&g, &f, 0.0, &TerminalExtension::Zero).unwrap();
        let s = ext.field.slice(0);
        // values on the two sides of each original facet agree
        assert_eq!(s[5], s[6]);
        assert_eq!(s[11], s[12]);
    }

    #[test]
    fn terminal_affine_continuation() {
        let g = grid1(3, 4);
        let f = CellField::filled(3, 5, 2.0);
        let ext = reflect_extend(
            &g,
            &f,
            0.5,
            &TerminalExtension::Affine {
                psi: vec![2.0; 3],
                slope: -1.0,
            },
        )
        .unwrap();
        assert_eq!(ext.pad_levels, 2);
        assert_eq!(ext.field.slices(), 4 + 4 + 1);
        // level K + 1 is ψ + slope (K - e) Δt = 2 + 0.25
        assert!((ext.field.get(5, 4) - 2.25).abs() < 1e-14);
        assert!((ext.field.get(8, 0) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn mollify_keeps_constants() {
        let g = grid1(8, 8);
        let f = CellField::filled(8, 9, 3.5);
        let ext = reflect_extend(
            &g,
            &f,
            0.25,
            &TerminalExtension::Affine {
                psi: vec![3.5; 8],
                slope: 0.0,
            },
        )
        .unwrap();
        let m = mollify(&ext, 0.25).unwrap();
        assert!(m.data().iter().all(|v| (v - 3.5).abs() < 1e-13));
    }

    #[test]
    fn mollify_rejects_short_padding() {
        let g = grid1(8, 8);
        let f = CellField::filled(8, 9, 1.0);
        let ext = reflect_extend(&g, &f, 0.0, &TerminalExtension::Zero).unwrap();
        assert!(matches!(mollify(&ext, 0.3), Err(MfgError::Shape(_))));
    }
}
