//! Split-flux representation.
//!
//! Every cell carries `2N` flux halves: slot `2a` is its share of the
//! upper face along axis `a`, slot `2a + 1` its share of the lower face.
//! A slot is active only when its face is interior. With weights
//! `s_{i,a} = sqrt(1 / #interior faces of i along a)` the face flux is
//! `W_f = s_lo Z_lo[2a] + s_hi Z_hi[2a+1]`, and the features
//! `c_i = (s · ∇u)` on the same slots satisfy `Σ_f g_f W_f = Σ_i ⟨c_i, Z_i⟩`.

use crate::grid::{divergence_slice, gradient_slice, Grid};

const INACTIVE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct SplitLayout {
    pub slots: usize,
    pub ncells: usize,
    weight: Vec<f64>,
    face: Vec<usize>,
}

impl SplitLayout {
    pub fn new(grid: &Grid) -> Self {
        let slots = 2 * grid.dim();
        let nc = grid.ncells();
        let mut weight = vec![0.0; nc * slots];
        let mut face = vec![INACTIVE; nc * slots];
        for c in 0..nc {
            for a in 0..grid.dim() {
                let up = grid.upper_neighbor(c, a).is_some();
                let lo = grid.lower_neighbor(c, a).is_some();
                let count = up as usize + lo as usize;
                if count == 0 {
                    continue;
                }
                let s = (1.0 / count as f64).sqrt();
                if up {
                    weight[c * slots + 2 * a] = s;
                    face[c * slots + 2 * a] = grid.upper_face(c, a);
                }
                if lo {
                    weight[c * slots + 2 * a + 1] = s;
                    face[c * slots + 2 * a + 1] = grid.lower_face(c, a);
                }
            }
        }
        SplitLayout {
            slots,
            ncells: nc,
            weight,
            face,
        }
    }

    /// Values per interval.
    pub fn interval_len(&self) -> usize {
        self.ncells * self.slots
    }

    pub fn is_active(&self, cell: usize, slot: usize) -> bool {
        self.face[cell * self.slots + slot] != INACTIVE
    }

    pub fn slot_weight(&self, cell: usize, slot: usize) -> f64 {
        self.weight[cell * self.slots + slot]
    }

    /// Face of an active slot.
    pub fn slot_face(&self, cell: usize, slot: usize) -> Option<usize> {
        let f = self.face[cell * self.slots + slot];
        (f != INACTIVE).then_some(f)
    }

    /// Features from a face field (gradient) of one slice.
    pub fn features(&self, face_values: &[f64], out: &mut [f64]) {
        for ((o, &f), &s) in out.iter_mut().zip(&self.face).zip(&self.weight) {
            *o = if f == INACTIVE {
                0.0
            } else {
                s * face_values[f]
            };
        }
    }

    /// Features of `∇u` for one slice of `u`; `grad` is scratch of face size.
    pub fn features_of(&self, grid: &Grid, u: &[f64], grad: &mut [f64], out: &mut [f64]) {
        gradient_slice(grid, u, grad);
        self.features(grad, out);
    }

    /// Face flux of one interval; boundary faces are left at zero.
    pub fn assemble(&self, z: &[f64], w: &mut [f64]) {
        w.iter_mut().for_each(|v| *v = 0.0);
        for ((&zv, &f), &s) in z.iter().zip(&self.face).zip(&self.weight) {
            if f != INACTIVE {
                w[f] += s * zv;
            }
        }
    }

    /// `div(W(z), j)` for one interval; `w` is face-size scratch.
    pub fn divergence(&self, grid: &Grid, z: &[f64], j: &[f64], w: &mut [f64], out: &mut [f64]) {
        self.assemble(z, w);
        divergence_slice(grid, w, j, out);
    }

    /// Zero the inactive slots.
    pub fn mask(&self, z: &mut [f64]) {
        for (v, &f) in z.iter_mut().zip(&self.face) {
            if f == INACTIVE {
                *v = 0.0;
            }
        }
    }
}
