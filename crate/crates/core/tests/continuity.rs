use mfg_core::continuity::*;
use mfg_core::grid::{build_grid, BoundaryField, CellField, FaceField, Grid, RectDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(bounds: Vec<(f64, f64)>, cells: &[usize], steps: usize, t: f64) -> Grid {
    build_grid(RectDomain::new(bounds, t).unwrap(), cells, steps).unwrap()
}

fn random_fields(g: &Grid, rng: &mut ChaCha8Rng) -> (CellField, FaceField) {
    let m = CellField::from_vec(
        g.ncells(),
        g.levels(),
        (0..g.ncells() * g.levels())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let w = FaceField::from_vec(
        g.nfaces(),
        g.time_steps(),
        (0..g.nfaces() * g.time_steps())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    (m, w)
}

#[test]
fn static_state_has_zero_residual() {
    let g = grid(vec![(0.0, 1.0), (0.0, 2.0)], &[3, 4], 5, 1.0);
    let m0: Vec<f64> = (0..g.ncells()).map(|c| 1.0 + c as f64).collect();
    let op = ContinuityOperator::new(&g, m0.clone(), BoundaryField::intervals(&g)).unwrap();
    let m = CellField::from_vec(g.ncells(), g.levels(), m0.repeat(g.levels())).unwrap();
    let r = op.residual(&m, &FaceField::intervals(&g)).unwrap();
    assert_eq!(r.max_abs(), 0.0);
}

#[test]
fn left_influx_by_hand() {
    // 4 cells, h = 1/4, Δt = 1/2, j = 1 on the left facet only.
    let g = grid(vec![(0.0, 1.0)], &[4], 2, 1.0);
    let j = BoundaryField::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let op = ContinuityOperator::new(&g, vec![1.0; 4], j.clone()).unwrap();
    let w = FaceField::intervals(&g);
    let flat = CellField::filled(4, 3, 1.0);
    let r = op.residual(&flat, &w).unwrap();
    assert_eq!(r.slice(1), &[-4.0, 0.0, 0.0, 0.0]);
    // grow the left cell by Δt/h · j = 2 per step
    let m = CellField::from_vec(
        4,
        3,
        vec![1.0, 1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 5.0, 1.0, 1.0, 1.0],
    )
    .unwrap();
    assert_eq!(op.residual(&m, &w).unwrap().max_abs(), 0.0);
    assert_eq!(march(&g, &[1.0; 4], &w, &j).unwrap(), m);
}

#[test]
fn residual_is_affine_with_assembled_parts() {
    let g = grid(vec![(0.0, 1.0), (-1.0, 1.0)], &[4, 3], 3, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m0: Vec<f64> = (0..g.ncells()).map(|_| rng.gen_range(0.0..2.0)).collect();
    let j = BoundaryField::from_vec(
        g.nboundary(),
        g.time_steps(),
        (0..g.nboundary() * g.time_steps())
            .map(|_| rng.gen_range(0.0..1.0))
            .collect(),
    )
    .unwrap();
    let op = ContinuityOperator::new(&g, m0, j).unwrap();
    let (m, w) = random_fields(&g, &mut rng);
    let r = op.residual(&m, &w).unwrap();
    let a = op.apply(&m, &w).unwrap();
    let b = op.rhs();
    for i in 0..r.data().len() {
        assert!(
            (r.data()[i] - (a.data()[i] - b.data()[i])).abs() <= 1e-14 * a.data()[i].abs().max(1.0)
        );
    }
}

#[test]
fn transpose_and_norm() {
    let g = grid(vec![(0.0, 1.0), (0.0, 1.0)], &[4, 5], 3, 1.0);
    let op = ContinuityOperator::new(&g, vec![0.0; 20], BoundaryField::intervals(&g)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let norm = op.norm();
    for _ in 0..10 {
        let (m, w) = random_fields(&g, &mut rng);
        let (r, _) = random_fields(&g, &mut rng);
        let ax = op.apply(&m, &w).unwrap();
        let (tm, tw) = op.apply_transpose(&r);
        let lhs: f64 = ax.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = m
            .data()
            .iter()
            .zip(tm.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + w.data()
                .iter()
                .zip(tw.data())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        let nx = (m.data().iter().chain(w.data()).map(|v| v * v).sum::<f64>()).sqrt();
        let nax = ax.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(nax <= norm * nx);
    }
}

#[test]
fn mass_constant_without_influx() {
    let g = grid(vec![(0.0, 1.0), (0.0, 1.0)], &[5, 5], 4, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m0: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..1.0)).collect();
    let (_, w) = random_fields(&g, &mut rng);
    let j = BoundaryField::intervals(&g);
    let m = march(&g, &m0, &w, &j).unwrap();
    let m0_mass = mass_at_time(&g, &m, 0);
    for k in 0..g.levels() {
        assert!((mass_at_time(&g, &m, k) - m0_mass).abs() < 1e-12 * m0_mass.max(1.0));
    }
}

#[test]
fn unit_influx_both_ends() {
    // ∫m0 = 1, j ≡ 1 at the two ends of [0,1]: mass at T is 1 + 2T.
    let t = 0.75;
    let g = grid(vec![(0.0, 1.0)], &[4], 4, t);
    let j = BoundaryField::filled(2, 4, 1.0);
    let m = march(&g, &[1.0; 4], &FaceField::intervals(&g), &j).unwrap();
    let rows = mass_balance_table(&g, &m, &j).unwrap();
    assert!((rows[4].mass - (1.0 + 2.0 * t)).abs() < 1e-14);
    assert!(rows.iter().all(|r| r.defect.abs() < 1e-14));
    let trace = terminal_trace(&g, &m).unwrap();
    assert!((trace.data().iter().sum::<f64>() * 0.25 - 2.5).abs() < 1e-14);
    let csv = mass_balance_csv(&rows);
    assert!(csv.starts_with("t,mass,expected_mass,defect\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn telescoping_with_random_flux_and_influx() {
    let g = grid(vec![(0.0, 2.0), (0.0, 1.0)], &[6, 3], 5, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m0: Vec<f64> = (0..g.ncells()).map(|_| rng.gen_range(0.5..1.5)).collect();
    let j = BoundaryField::from_vec(
        g.nboundary(),
        5,
        (0..g.nboundary() * 5)
            .map(|_| rng.gen_range(0.0..2.0))
            .collect(),
    )
    .unwrap();
    let (_, w) = random_fields(&g, &mut rng);
    let m = march(&g, &m0, &w, &j).unwrap();
    let rows = mass_balance_table(&g, &m, &j).unwrap();
    for r in &rows {
        assert!(r.defect.abs() <= 1e-12 * r.expected.abs());
    }
    // L¹-in-time bound for a nonnegative solution driven only by influx
    let zero_w = FaceField::intervals(&g);
    let m = march(&g, &m0, &zero_w, &j).unwrap();
    let l1: f64 = (1..g.levels())
        .map(|k| mass_at_time(&g, &m, k) * g.dt())
        .sum();
    let m0_l1 = mass_at_time(&g, &m, 0);
    let j_l1: f64 = (0..5).map(|k| influx_on_interval(&g, &j, k)).sum();
    assert!(l1 <= 1.0 * (m0_l1 + j_l1));
}
