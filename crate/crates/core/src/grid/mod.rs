//! Space-time staggered discretization of `[0, T] × Π (a_i, b_i)`.
//!
//! # Layout
//!
//! * Cells are indexed row-major over the axes: axis 0 varies slowest,
//!   the last axis fastest. `cell = Σ_a idx[a] * stride[a]`.
//! * Faces normal to axis `a` form a block of shape `cells` with the
//!   `a`-th extent replaced by `cells[a] + 1`, also row-major. Blocks are
//!   concatenated in axis order inside one face slice. Face `idx[a] = 0`
//!   is the lower boundary facet, `idx[a] = cells[a]` the upper one. The
//!   scalar stored on a face is the flux component along `+e_a`.
//! * Boundary facets are numbered `2a` (lower side of axis `a`) and
//!   `2a + 1` (upper side). Each facet holds one value per boundary face,
//!   row-major over the remaining axes; facets are concatenated in order.
//! * Densities, costs and potentials are cell-centered at the `K + 1`
//!   time levels `t_k = k Δt`. Fluxes and influx data live on the `K`
//!   intervals `(t_k, t_{k+1})` and are sampled at interval midpoints.

mod extend;
mod ops;
mod snapshot;

pub use extend::{mollify, reflect_extend, reflect_index, ExtendedField, TerminalExtension};
pub use ops::{
    boundary_pairing, cell_inner, discrete_divergence, discrete_gradient, divergence_slice,
    face_inner_interior, gradient_slice,
};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SnapshotKind};

use crate::error::{MfgError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RectDomain {
    bounds: Vec<(f64, f64)>,
    horizon: f64,
}

impl RectDomain {
    pub fn new(bounds: Vec<(f64, f64)>, horizon: f64) -> Result<Self> {
        if bounds.is_empty() {
            return Err(MfgError::Config("domain needs at least one axis".into()));
        }
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(MfgError::Config(format!(
                    "axis {axis}: bounds ({a}, {b}) must be finite with a < b"
                )));
            }
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(MfgError::Config(format!(
                "horizon {horizon} must be positive"
            )));
        }
        Ok(Self { bounds, horizon })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(&xi, &(a, b))| xi >= a && xi <= b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: RectDomain,
    cells: Vec<usize>,
    time_steps: usize,
    spacing: Vec<f64>,
    dt: f64,
    strides: Vec<usize>,
    ncells: usize,
    face_offsets: Vec<usize>,
    facet_offsets: Vec<usize>,
    coords: Vec<usize>,
    lower_faces: Vec<usize>,
}

/// Build a grid; every resolution must be positive.
pub fn build_grid(domain: RectDomain, cells_per_axis: &[usize], time_steps: usize) -> Result<Grid> {
    Grid::new(domain, cells_per_axis.to_vec(), time_steps)
}

impl Grid {
    pub fn new(domain: RectDomain, cells: Vec<usize>, time_steps: usize) -> Result<Self> {
        if cells.len() != domain.dim() {
            return Err(MfgError::Config(format!(
                "{} cell counts given for a {}-dimensional domain",
                cells.len(),
                domain.dim()
            )));
        }
        if let Some(axis) = cells.iter().position(|&n| n == 0) {
            return Err(MfgError::Config(format!(
                "axis {axis}: cell count must be positive"
            )));
        }
        if time_steps == 0 {
            return Err(MfgError::Config("time_steps must be positive".into()));
        }
        let spacing: Vec<f64> = domain
            .bounds()
            .iter()
            .zip(&cells)
            .map(|(&(a, b), &n)| (b - a) / n as f64)
            .collect();
        let dt = domain.horizon() / time_steps as f64;
        let n = cells.len();
        let mut strides = vec![1usize; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * cells[a + 1];
        }
        let ncells: usize = cells.iter().product();

        let mut face_offsets = Vec::with_capacity(n + 1);
        let mut facet_offsets = Vec::with_capacity(2 * n + 1);
        let mut acc = 0;
        let mut bacc = 0;
        for a in 0..n {
            face_offsets.push(acc);
            acc += ncells / cells[a] * (cells[a] + 1);
            for _side in 0..2 {
                facet_offsets.push(bacc);
                bacc += ncells / cells[a];
            }
        }
        face_offsets.push(acc);
        facet_offsets.push(bacc);

        let mut coords = vec![0usize; ncells * n];
        for cell in 0..ncells {
            let mut rem = cell;
            for a in 0..n {
                coords[cell * n + a] = rem / strides[a];
                rem %= strides[a];
            }
        }
        let mut lower_faces = vec![0usize; ncells * n];
        for a in 0..n {
            for cell in 0..ncells {
                let mut off = 0;
                let mut stride = 1;
                for b in (0..n).rev() {
                    let extent = if b == a { cells[b] + 1 } else { cells[b] };
                    off += coords[cell * n + b] * stride;
                    stride *= extent;
                }
                lower_faces[cell * n + a] = face_offsets[a] + off;
            }
        }

        Ok(Self {
            domain,
            cells,
            time_steps,
            spacing,
            dt,
            strides,
            ncells,
            face_offsets,
            facet_offsets,
            coords,
            lower_faces,
        })
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn ncells(&self) -> usize {
        self.ncells
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn levels(&self) -> usize {
        self.time_steps + 1
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Measure of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Measure of one boundary face on a facet normal to `axis`.
    pub fn facet_face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.spacing[axis]
    }

    pub fn time_at(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    pub fn interval_midpoint(&self, interval: usize) -> f64 {
        (interval as f64 + 0.5) * self.dt
    }

    pub fn cell_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn cell_multi_index(&self, cell: usize) -> Vec<usize> {
        let n = self.dim();
        self.coords[cell * n..(cell + 1) * n].to_vec()
    }

    /// Index of `cell` along `axis`.
    #[inline]
    pub fn coord(&self, cell: usize, axis: usize) -> usize {
        self.coords[cell * self.dim() + axis]
    }

    /// Neighbour across the lower face normal to `axis`, if any.
    #[inline]
    pub fn lower_neighbor(&self, cell: usize, axis: usize) -> Option<usize> {
        (self.coord(cell, axis) > 0).then(|| cell - self.strides[axis])
    }

    /// Neighbour across the upper face normal to `axis`, if any.
    #[inline]
    pub fn upper_neighbor(&self, cell: usize, axis: usize) -> Option<usize> {
        (self.coord(cell, axis) + 1 < self.cells[axis]).then(|| cell + self.strides[axis])
    }

    /// Coordinate of a single axis of a cell centre.
    pub fn center_coord(&self, axis: usize, i: usize) -> f64 {
        self.domain.bounds()[axis].0 + (i as f64 + 0.5) * self.spacing[axis]
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        self.cell_multi_index(cell)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.center_coord(a, i))
            .collect()
    }

    /// Cell containing the point (points on the closure are clamped inward).
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut cell = 0;
        for a in 0..self.dim() {
            let (lo, _) = self.domain.bounds()[a];
            let raw = ((x[a] - lo) / self.spacing[a]).floor();
            let i = raw.clamp(0.0, (self.cells[a] - 1) as f64) as usize;
            cell += i * self.strides[a];
        }
        cell
    }

    /// Total number of faces (all axes, interior and boundary) in one slice.
    pub fn nfaces(&self) -> usize {
        *self.face_offsets.last().unwrap()
    }

    pub fn face_block(&self, axis: usize) -> std::ops::Range<usize> {
        self.face_offsets[axis]..self.face_offsets[axis + 1]
    }

    /// Face normal to `axis` on the lower side of `cell`.
    #[inline]
    pub fn lower_face(&self, cell: usize, axis: usize) -> usize {
        self.lower_faces[cell * self.dim() + axis]
    }

    /// Face normal to `axis` on the upper side of `cell`.
    #[inline]
    pub fn upper_face(&self, cell: usize, axis: usize) -> usize {
        self.lower_face(cell, axis) + self.strides[axis]
    }

    /// Face index from a multi-index whose `axis` entry ranges over `0..=cells[axis]`.
    pub fn face_from_multi(&self, axis: usize, idx: &[usize]) -> usize {
        let mut off = 0;
        let mut stride = 1;
        for b in (0..self.dim()).rev() {
            let extent = if b == axis {
                self.cells[b] + 1
            } else {
                self.cells[b]
            };
            off += idx[b] * stride;
            stride *= extent;
        }
        self.face_offsets[axis] + off
    }

    /// Axis and multi-index of a face.
    pub fn face_multi_index(&self, face: usize) -> (usize, Vec<usize>) {
        let axis = (0..self.dim())
            .find(|&a| face < self.face_offsets[a + 1])
            .expect("face index out of range");
        let mut rem = face - self.face_offsets[axis];
        let mut idx = vec![0; self.dim()];
        for b in (0..self.dim()).rev() {
            let extent = if b == axis {
                self.cells[b] + 1
            } else {
                self.cells[b]
            };
            idx[b] = rem % extent;
            rem /= extent;
        }
        (axis, idx)
    }

    pub fn is_boundary_face(&self, face: usize) -> bool {
        let (axis, idx) = self.face_multi_index(face);
        idx[axis] == 0 || idx[axis] == self.cells[axis]
    }

    pub fn nfacets(&self) -> usize {
        2 * self.dim()
    }

    /// Number of boundary faces over all facets.
    pub fn nboundary(&self) -> usize {
        *self.facet_offsets.last().unwrap()
    }

    pub fn facet_range(&self, facet: usize) -> std::ops::Range<usize> {
        self.facet_offsets[facet]..self.facet_offsets[facet + 1]
    }

    /// Boundary cells of a facet, in the facet's storage order.
    pub fn facet_cells(&self, facet: usize) -> Vec<usize> {
        let axis = facet / 2;
        let upper = facet % 2 == 1;
        let fixed = if upper { self.cells[axis] - 1 } else { 0 };
        let mut out = Vec::with_capacity(self.ncells / self.cells[axis]);
        for cell in 0..self.ncells {
            if self.coord(cell, axis) == fixed {
                out.push(cell);
            }
        }
        out
    }

    /// `(facet, cell)` for every boundary face in storage order.
    pub fn boundary_faces(&self) -> Vec<(usize, usize)> {
        (0..self.nfacets())
            .flat_map(|f| self.facet_cells(f).into_iter().map(move |c| (f, c)))
            .collect()
    }

    pub fn describe_layout(&self) -> String {
        format!(
            "cells={:?} (row-major, axis 0 slowest); faces per slice={} (axis blocks, +e_a orientation); \
             boundary faces per slice={} (facet 2a lower, 2a+1 upper); levels={}; intervals={}",
            self.cells,
            self.nfaces(),
            self.nboundary(),
            self.levels(),
            self.time_steps
        )
    }

    pub fn check_cell_field(&self, f: &CellField, slices: usize, what: &str) -> Result<()> {
        if f.ncells() != self.ncells || f.slices() != slices {
            return Err(MfgError::Shape(format!(
                "{what}: expected {slices} slices of {} cells, got {} of {}",
                self.ncells,
                f.slices(),
                f.ncells()
            )));
        }
        Ok(())
    }

    pub fn check_face_field(&self, f: &FaceField, slices: usize, what: &str) -> Result<()> {
        if f.slice_len() != self.nfaces() || f.slices() != slices {
            return Err(MfgError::Shape(format!(
                "{what}: expected {slices} slices of {} faces, got {} of {}",
                self.nfaces(),
                f.slices(),
                f.slice_len()
            )));
        }
        Ok(())
    }

    pub fn check_boundary_field(&self, f: &BoundaryField, slices: usize, what: &str) -> Result<()> {
        if f.slice_len() != self.nboundary() || f.slices() != slices {
            return Err(MfgError::Shape(format!(
                "{what}: expected {slices} slices of {} boundary faces, got {} of {}",
                self.nboundary(),
                f.slices(),
                f.slice_len()
            )));
        }
        Ok(())
    }
}

macro_rules! slice_field {
    ($name:ident, $len:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $len: usize,
            slices: usize,
            data: Vec<f64>,
        }

        impl $name {
            pub fn zeros($len: usize, slices: usize) -> Self {
                Self {
                    $len,
                    slices,
                    data: vec![0.0; $len * slices],
                }
            }

            pub fn filled($len: usize, slices: usize, value: f64) -> Self {
                Self {
                    $len,
                    slices,
                    data: vec![value; $len * slices],
                }
            }

            pub fn from_vec($len: usize, slices: usize, data: Vec<f64>) -> Result<Self> {
                if data.len() != $len * slices {
                    return Err(MfgError::Shape(format!(
                        "{}: {} values for {} x {}",
                        stringify!($name),
                        data.len(),
                        slices,
                        $len
                    )));
                }
                Ok(Self { $len, slices, data })
            }

            pub fn $len(&self) -> usize {
                self.$len
            }

            pub fn slices(&self) -> usize {
                self.slices
            }

            pub fn slice(&self, k: usize) -> &[f64] {
                &self.data[k * self.$len..(k + 1) * self.$len]
            }

            pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
                &mut self.data[k * self.$len..(k + 1) * self.$len]
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.data
            }

            pub fn get(&self, k: usize, i: usize) -> f64 {
                self.data[k * self.$len + i]
            }

            pub fn set(&mut self, k: usize, i: usize, v: f64) {
                self.data[k * self.$len + i] = v;
            }

            pub fn max_abs(&self) -> f64 {
                self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
        }
    };
}

slice_field!(CellField, ncells);
slice_field!(FaceField, slice_len);
slice_field!(BoundaryField, slice_len);

impl CellField {
    /// One slice per time level.
    pub fn levels(grid: &Grid) -> Self {
        Self::zeros(grid.ncells(), grid.levels())
    }

    /// Fill every level by evaluating `f(t, x)` at cell centres.
    pub fn from_fn(grid: &Grid, slices: usize, mut f: impl FnMut(f64, &[f64]) -> f64) -> Self {
        let mut out = Self::zeros(grid.ncells(), slices);
        for k in 0..slices {
            let t = grid.time_at(k);
            for c in 0..grid.ncells() {
                let x = grid.cell_center(c);
                out.set(k, c, f(t, &x));
            }
        }
        out
    }
}

impl FaceField {
    pub fn intervals(grid: &Grid) -> Self {
        Self::zeros(grid.nfaces(), grid.time_steps())
    }
}

impl BoundaryField {
    pub fn intervals(grid: &Grid) -> Self {
        Self::zeros(grid.nboundary(), grid.time_steps())
    }

    pub fn facet_values(&self, grid: &Grid, k: usize, facet: usize) -> &[f64] {
        &self.slice(k)[grid.facet_range(facet)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize, steps: usize) -> Grid {
        build_grid(RectDomain::new(vec![(0.0, 1.0)], 1.0).unwrap(), &[n], steps).unwrap()
    }

    #[test]
    fn spacings_1d() {
        let g = unit(4, 4);
        assert_eq!(g.spacing(), &[0.25]);
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.nfaces(), 5);
        assert_eq!(g.nboundary(), 2);
    }

    #[test]
    fn spacings_2d() {
        let d = RectDomain::new(vec![(0.0, 1.0), (0.0, 2.0)], 1.0).unwrap();
        let g = build_grid(d, &[4, 8], 2).unwrap();
        assert_eq!(g.spacing(), &[0.25, 0.25]);
        assert_eq!(g.dt(), 0.5);
        assert_eq!(g.ncells(), 32);
        assert_eq!(g.nfaces(), 5 * 8 + 4 * 9);
        assert_eq!(g.nboundary(), 8 + 8 + 4 + 4);
    }

    #[test]
    fn zero_resolution_is_config_error() {
        let d = RectDomain::new(vec![(0.0, 1.0)], 1.0).unwrap();
        assert!(matches!(
            build_grid(d.clone(), &[0], 4),
            Err(MfgError::Config(_))
        ));
        assert!(matches!(build_grid(d, &[4], 0), Err(MfgError::Config(_))));
    }

    #[test]
    fn bad_domain_rejected() {
        assert!(RectDomain::new(vec![(1.0, 0.0)], 1.0).is_err());
        assert!(RectDomain::new(vec![(0.0, 1.0)], 0.0).is_err());
        assert!(RectDomain::new(vec![], 1.0).is_err());
    }

    #[test]
    fn face_indexing_round_trips() {
        let d = RectDomain::new(vec![(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 1.0).unwrap();
        let g = build_grid(d, &[2, 3, 4], 1).unwrap();
        for f in 0..g.nfaces() {
            let (a, idx) = g.face_multi_index(f);
            assert_eq!(g.face_from_multi(a, &idx), f);
        }
        for c in 0..g.ncells() {
            assert_eq!(g.cell_index(&g.cell_multi_index(c)), c);
            for a in 0..3 {
                let lo = g.lower_face(c, a);
                let hi = g.upper_face(c, a);
                assert_eq!(
                    hi - lo,
                    g.face_from_multi(a, &{
                        let mut i = vec![0; 3];
                        i[a] = 1;
                        i
                    }) - g.face_from_multi(a, &[0, 0, 0])
                );
            }
        }
    }

    #[test]
    fn facets_cover_boundary() {
        let d = RectDomain::new(vec![(0.0, 1.0), (0.0, 2.0)], 1.0).unwrap();
        let g = build_grid(d, &[3, 5], 1).unwrap();
        let faces = g.boundary_faces();
        assert_eq!(faces.len(), g.nboundary());
        assert_eq!(g.facet_cells(0), vec![0, 1, 2, 3, 4]);
        assert_eq!(g.facet_cells(1), vec![10, 11, 12, 13, 14]);
        assert_eq!(g.facet_cells(2), vec![0, 5, 10]);
        assert_eq!(g.facet_cells(3), vec![4, 9, 14]);
    }

    #[test]
    fn locate_clamps() {
        let g = unit(4, 1);
        assert_eq!(g.locate(&[0.0]), 0);
        assert_eq!(g.locate(&[1.0]), 3);
        assert_eq!(g.locate(&[0.3]), 1);
    }
}
