use mfg_core::characteristics::*;
use mfg_core::continuity::influx_on_interval;
use mfg_core::grid::BoundaryField;
use mfg_core::problem::{builtin, FieldSpec, InfluxSpec, Problem};
use mfg_core::solver::{solve, Solution, SolverConfig};

fn solved(name: &str) -> (Problem, Solution) {
    let spec = builtin(name).unwrap();
    let p = spec.discretize().unwrap();
    let s = solve(&p, &SolverConfig::for_problem(&spec)).unwrap();
    (p, s)
}

#[test]
fn no_influx_means_no_injections() {
    let p = builtin("constant1d").unwrap().discretize().unwrap();
    let e = seed_agents(&p.grid, &p.m0, &p.j, 5000, 1).unwrap();
    assert_eq!(e.injected(), 0);
    assert_eq!(e.count(), 5000);
    assert!((e.mass_at(1.0) - e.mass_at(0.0)).abs() == 0.0);
}

#[test]
fn uniform_initial_counts_are_multinomial() {
    let p = builtin("constant1d").unwrap().discretize().unwrap();
    let n = 100_000;
    let e = seed_agents(&p.grid, &p.m0, &p.j, n, 11).unwrap();
    let mut counts = vec![0usize; p.grid.ncells()];
    for i in 0..e.count() {
        counts[p.grid.locate(e.position(i))] += 1;
    }
    let q = 1.0 / counts.len() as f64;
    let (mean, sd) = (n as f64 * q, (n as f64 * q * (1.0 - q)).sqrt());
    for c in counts {
        assert!((c as f64 - mean).abs() <= 4.0 * sd, "{c} vs {mean} ± {sd}");
    }
}

#[test]
fn injections_follow_the_influx_facets() {
    let mut spec = builtin("influx1d").unwrap();
    spec.influx = InfluxSpec::Facets {
        values: vec![1.0, 0.0],
    };
    let p = spec.discretize().unwrap();
    let e = seed_agents(&p.grid, &p.m0, &p.j, 20_000, 5).unwrap();
    assert!(e.injected() > 0);
    for i in 0..e.count() {
        if e.birth[i] > 0.0 {
            assert_eq!(e.position(i)[0], 0.0);
        }
    }
}

#[test]
fn ensemble_mass_matches_the_balance_at_grid_times() {
    let p = builtin("influx1d").unwrap().discretize().unwrap();
    let g = &p.grid;
    let e = seed_agents(g, &p.m0, &p.j, 30_000, 9).unwrap();
    let mut expected = g.cell_volume() * p.m0.iter().sum::<f64>();
    for k in 0..=g.time_steps() {
        if k > 0 {
            expected += influx_on_interval(g, &p.j, k - 1);
        }
        let got = e.mass_at(g.time_at(k) + 1e-15 * (k == 0) as u8 as f64);
        assert!(
            (got - expected).abs() <= 1e-12 * expected,
            "level {k}: {got} vs {expected}"
        );
    }
}

#[test]
fn empty_data_is_rejected() {
    let p = builtin("constant1d").unwrap().discretize().unwrap();
    let zeros = vec![0.0; p.grid.ncells()];
    let j = BoundaryField::zeros(p.grid.nboundary(), p.grid.time_steps());
    assert!(seed_agents(&p.grid, &zeros, &j, 100, 0).is_err());
    assert!(seed_agents(&p.grid, &p.m0, &p.j, 0, 0).is_err());
}

#[test]
fn seeding_is_reproducible() {
    let p = builtin("influx1d").unwrap().discretize().unwrap();
    let a = seed_agents(&p.grid, &p.m0, &p.j, 10_000, 3).unwrap();
    assert_eq!(a, seed_agents(&p.grid, &p.m0, &p.j, 10_000, 3).unwrap());
    assert_ne!(
        a.positions,
        seed_agents(&p.grid, &p.m0, &p.j, 10_000, 4)
            .unwrap()
            .positions
    );
}

#[test]
fn zero_gradient_keeps_agents_still() {
    let (p, s) = solved("constant1d");
    let g = &p.grid;
    let e = seed_agents(g, &p.m0, &p.j, 2000, 2).unwrap();
    for vf in [
        VelocityField::gradient(g, &s.u, &s.m, &p.j, &p.ham).unwrap(),
        VelocityField::flux(g, &s.w, &s.m, &p.j).unwrap(),
    ] {
        let r = integrate(g, &e, &vf, g.dt(), &[0, g.time_steps()]).unwrap();
        for (a, b) in r.positions[0].iter().zip(&r.positions[1]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(r.exits, 0);
    }
}

#[test]
fn drift_points_inward_at_inflow_boundaries() {
    let (p, s) = solved("influx1d");
    let g = &p.grid;
    for vf in [
        VelocityField::gradient(g, &s.u, &s.m, &p.j, &p.ham).unwrap(),
        VelocityField::flux(g, &s.w, &s.m, &p.j).unwrap(),
    ] {
        let (mut sc, mut v) = ([0.0], [0.0]);
        for t in [0.1, 0.5, 0.9] {
            vf.velocity(t, &[0.01], &mut sc, &mut v);
            assert!(v[0] > 0.0, "{:?} t={t}: {}", vf.model(), v[0]);
            vf.velocity(t, &[0.99], &mut sc, &mut v);
            assert!(v[0] < 0.0, "{:?} t={t}: {}", vf.model(), v[0]);
        }
    }
}

#[test]
fn boundary_gradient_reproduces_the_influx() {
    // m H_p(∇u)·ν = -j on the inflow faces
    let (p, s) = solved("influx1d");
    let g = &p.grid;
    let vf = VelocityField::gradient(g, &s.u, &s.m, &p.j, &p.ham).unwrap();
    let (mut sc, mut v) = ([0.0], [0.0]);
    let k = 10;
    let t = g.interval_midpoint(k);
    vf.velocity(t, &[0.0], &mut sc, &mut v);
    let want = p.j.get(k, 0) / s.m.get(k + 1, 0);
    assert!((v[0] - want).abs() < 1e-12, "{} vs {want}", v[0]);
}

#[test]
fn midpoint_rule_is_second_order() {
    let mut spec = builtin("influx1d").unwrap();
    spec.influx = InfluxSpec::Constant { value: 0.0 };
    spec.m0 = FieldSpec::Bump {
        base: 0.5,
        amplitude: 1.0,
        center: vec![0.5],
        radius: 0.3,
    };
    let p = spec.discretize().unwrap();
    let s = solve(&p, &SolverConfig::for_problem(&spec)).unwrap();
    let g = &p.grid;
    let e = seed_agents(g, &p.m0, &p.j, 400, 8).unwrap();
    let vf = VelocityField::gradient(g, &s.u, &s.m, &p.j, &p.ham).unwrap();
    let end = |d: f64| {
        integrate(g, &e, &vf, d, &[g.time_steps()])
            .unwrap()
            .positions[0]
            .clone()
    };
    let (a, b, c) = (end(g.dt()), end(g.dt() / 2.0), end(g.dt() / 4.0));
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>();
    let (d1, d2) = (diff(&a, &b), diff(&b, &c));
    assert!(d1 > 0.0 && d1 / d2 > 3.0, "{d1} {d2}");
}

#[test]
fn substep_must_not_exceed_the_grid_step() {
    let (p, s) = solved("constant1d");
    let g = &p.grid;
    let e = seed_agents(g, &p.m0, &p.j, 10, 0).unwrap();
    let vf = VelocityField::flux(g, &s.w, &s.m, &p.j).unwrap();
    assert!(integrate(g, &e, &vf, 2.0 * g.dt(), &[1]).is_err());
    assert!(integrate(g, &e, &vf, g.dt(), &[g.time_steps() + 1]).is_err());
}

#[test]
fn time_zero_slice_matches_initial_density() {
    let (p, s) = solved("influx1d");
    let g = &p.grid;
    let e = seed_agents(g, &p.m0, &p.j, 100_000, 21).unwrap();
    let vf = VelocityField::flux(g, &s.w, &s.m, &p.j).unwrap();
    let r = integrate(g, &e, &vf, g.dt(), &[0]).unwrap();
    let c = compare_all(g, &r, &s.m).unwrap();
    assert!((c[0].mass_agents - c[0].mass_solver).abs() < 1e-12);
    // multinomial noise over 32 cells at this sample size
    assert!(c[0].relative_l1 < 0.03, "{}", c[0].relative_l1);
}

#[test]
fn slope_fit_recovers_a_power_law() {
    let ns = [1e4, 1e5, 1e6];
    let errs: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(-0.5)).collect();
    assert!((log_log_slope(&ns, &errs) + 0.5).abs() < 1e-12);
}

#[test]
fn csv_outputs_have_headers() {
    let (p, s) = solved("constant1d");
    let g = &p.grid;
    let e = seed_agents(g, &p.m0, &p.j, 50, 0).unwrap();
    let vf = VelocityField::flux(g, &s.w, &s.m, &p.j).unwrap();
    let r = integrate(g, &e, &vf, g.dt(), &[0, 16, 32]).unwrap();
    let t = trajectory_csv(&r, 5);
    assert!(t.starts_with("agent,t,x0\n"));
    assert_eq!(t.lines().count(), 1 + 5 * 3);
    let c = comparison_csv(&compare_all(g, &r, &s.m).unwrap());
    assert!(c.starts_with("t,l1,relative_l1,mass_agents,mass_solver\n"));
    assert_eq!(c.lines().count(), 4);
}
