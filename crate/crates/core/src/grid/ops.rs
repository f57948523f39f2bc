use super::{BoundaryField, CellField, FaceField, Grid};
use crate::error::{shape_err, Result};

/// Face gradient of one slice of a cell field.
///
/// Interior faces get the two-point difference `(u_hi - u_lo) / h`.
/// Boundary faces get the one-sided difference of the first interior
/// face along the same axis (zero when the axis has a single cell).
/// Boundary values never enter the summation-by-parts pairing: the flux
/// there is prescribed by the influx data, not by the gradient.
pub fn gradient_slice(grid: &Grid, u: &[f64], out: &mut [f64]) {
    debug_assert_eq!(u.len(), grid.ncells());
    debug_assert_eq!(out.len(), grid.nfaces());
    for a in 0..grid.dim() {
        let h = grid.spacing()[a];
        let n = grid.cells()[a];
        for cell in 0..grid.ncells() {
            let i = grid.coord(cell, a);
            let up = grid.upper_face(cell, a);
            if let Some(nb) = grid.upper_neighbor(cell, a) {
                out[up] = (u[nb] - u[cell]) / h;
            }
            if i == 0 {
                let lo = grid.lower_face(cell, a);
                out[lo] = match grid.upper_neighbor(cell, a) {
                    Some(nb) => (u[nb] - u[cell]) / h,
                    None => 0.0,
                };
            }
            if i + 1 == n {
                out[up] = match grid.lower_neighbor(cell, a) {
                    Some(nb) => (u[cell] - u[nb]) / h,
                    None => 0.0,
                };
            }
        }
    }
}

/// Net outflux per unit volume of one slice.
///
/// Interior faces take their value from `w`; the faces of the lower
/// facet of axis `a` carry `+j` along `+e_a` and those of the upper facet
/// carry `-j`, i.e. `-w·ν = j` with `j` the inflow rate.
pub fn divergence_slice(grid: &Grid, w: &[f64], j: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), grid.nfaces());
    debug_assert_eq!(j.len(), grid.nboundary());
    out.iter_mut().for_each(|v| *v = 0.0);
    for a in 0..grid.dim() {
        let h = grid.spacing()[a];
        for cell in 0..grid.ncells() {
            let hi = match grid.upper_neighbor(cell, a) {
                Some(_) => w[grid.upper_face(cell, a)],
                None => 0.0,
            };
            let lo = match grid.lower_neighbor(cell, a) {
                Some(_) => w[grid.lower_face(cell, a)],
                None => 0.0,
            };
            out[cell] += (hi - lo) / h;
        }
        for side in 0..2 {
            let facet = 2 * a + side;
            let range = grid.facet_range(facet);
            for (b, cell) in range.zip(grid.facet_cells(facet)) {
                // inflow: +j/h on both facets
                out[cell] -= j[b] / h;
            }
        }
    }
}

pub fn discrete_gradient(grid: &Grid, u: &CellField) -> Result<FaceField> {
    if u.ncells() != grid.ncells() {
        return shape_err(format!(
            "gradient: field has {} cells, grid {}",
            u.ncells(),
            grid.ncells()
        ));
    }
    let mut out = FaceField::zeros(grid.nfaces(), u.slices());
    for k in 0..u.slices() {
        gradient_slice(grid, u.slice(k), out.slice_mut(k));
    }
    Ok(out)
}

pub fn discrete_divergence(grid: &Grid, w: &FaceField, j: &BoundaryField) -> Result<CellField> {
    if w.slice_len() != grid.nfaces() {
        return shape_err(format!(
            "divergence: {} faces, grid has {}",
            w.slice_len(),
            grid.nfaces()
        ));
    }
    if j.slice_len() != grid.nboundary() || j.slices() != w.slices() {
        return shape_err(format!(
            "divergence: boundary data {}x{} does not match flux {}x{}",
            j.slices(),
            j.slice_len(),
            w.slices(),
            grid.nboundary()
        ));
    }
    let mut out = CellField::zeros(grid.ncells(), w.slices());
    for k in 0..w.slices() {
        divergence_slice(grid, w.slice(k), j.slice(k), out.slice_mut(k));
    }
    Ok(out)
}

/// `Σ_cells vol · a · b` for one slice.
pub fn cell_inner(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// `Σ_interior faces vol · g · w` for one slice.
pub fn face_inner_interior(grid: &Grid, g: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for a in 0..grid.dim() {
        for cell in 0..grid.ncells() {
            if grid.upper_neighbor(cell, a).is_some() {
                let f = grid.upper_face(cell, a);
                acc += g[f] * w[f];
            }
        }
    }
    grid.cell_volume() * acc
}

/// `Σ_boundary faces area · u(adjacent cell) · j` for one slice.
pub fn boundary_pairing(grid: &Grid, u: &[f64], j: &[f64]) -> f64 {
    let mut acc = 0.0;
    for facet in 0..grid.nfacets() {
        let area = grid.facet_face_area(facet / 2);
        for (b, cell) in grid.facet_range(facet).zip(grid.facet_cells(facet)) {
            acc += area * u[cell] * j[b];
        }
    }
    acc
}
