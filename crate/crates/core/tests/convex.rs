use mfg_core::convex::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_conjugate(phi: impl Fn(f64) -> f64, s: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|i| {
            let x = lo + i as f64 * step;
            s * x - phi(x)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn cubic_conjugate_matches_brute_force() {
    let h = Hamiltonian::power(3.0, 1.0);
    for s in [0.0, 0.5, 1.7, 4.0, -2.3] {
        let brute = brute_conjugate(|p| h.h(p.abs()), s, -50.0, 50.0, 1e-4);
        let closed = h.h_star(&[s]);
        assert!((brute - closed).abs() < 1e-6, "s={s}: {brute} vs {closed}");
        assert!((closed - 2.0 / 3.0 * s.abs().powf(1.5)).abs() < 1e-12);
    }
}

#[test]
fn paper_example_conjugate_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for h in [
        Hamiltonian::paper_example(3.0, 1.0),
        Hamiltonian::paper_example(2.0, 0.5),
    ] {
        for _ in 0..100 {
            let s = rng.gen_range(-20.0..20.0);
            assert!(h.identity_residual(s) < 1e-8, "{h:?} s={s}");
        }
    }
}

#[test]
fn paper_example_conjugate_matches_brute_force() {
    let h = Hamiltonian::paper_example(3.0, 1.0);
    for s in [0.0, 1.0, 6.0, 20.0] {
        let brute = brute_conjugate(|p| h.h(p.abs()), s, -20.0, 20.0, 1e-4);
        assert!((brute - h.h_star(&[s])).abs() < 1e-6, "s={s}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hams = [
        Hamiltonian::quadratic(),
        Hamiltonian::power(3.0, 0.5),
        Hamiltonian::power(1.5, 2.0),
        Hamiltonian::paper_example(3.0, 1.0),
    ];
    for _ in 0..1000 {
        let h = hams[rng.gen_range(0..hams.len())];
        let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let mut g = [0.0; 2];
        h.grad(&p, &mut g);
        for a in 0..2 {
            let e = 1e-6;
            let mut pp = p;
            let mut pm = p;
            pp[a] += e;
            pm[a] -= e;
            let fd = (h.eval(&pp) - h.eval(&pm)) / (2.0 * e);
            assert!(
                (fd - g[a]).abs() <= 1e-6 * g[a].abs().max(1.0),
                "{h:?} p={p:?}"
            );
        }
    }
}

#[test]
fn closed_form_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pairs: Vec<Box<dyn ConjugatePair>> = vec![
        Box::new(Hamiltonian::quadratic()),
        Box::new(Hamiltonian::power(3.0, 2.0)),
        Box::new(Hamiltonian::power(1.4, 0.8)),
        Box::new(
            Coupling {
                form: CouplingForm::Shifted,
                q: 2.0,
            }
            .at(1.0),
        ),
        Box::new(
            Coupling {
                form: CouplingForm::Shifted,
                q: 3.0,
            }
            .at(0.4),
        ),
        Box::new(
            Coupling {
                form: CouplingForm::Power,
                q: 1.5,
            }
            .at(2.0),
        ),
    ];
    for pair in &pairs {
        assert!(pair.closed_form());
        for _ in 0..1000 {
            let s = rng.gen_range(-10.0..10.0);
            let res = pair.identity_residual(s);
            assert!(
                res <= 1e-8 * (1.0 + s.abs().powi(3)),
                "s={s} residual {res}"
            );
        }
    }
}

#[test]
fn numerical_legendre_against_closed_form() {
    let samples: Vec<(f64, f64)> = (0..=20_000)
        .map(|i| -10.0 + i as f64 * 1e-3)
        .map(|x| (x, x * x / 2.0))
        .collect();
    let est = numerical_legendre(&samples, 3.0);
    assert!((est.value - 4.5).abs() < 1e-9 && est.trusted);

    let h = Hamiltonian::power(3.0, 1.0);
    let samples: Vec<(f64, f64)> = (0..=40_000)
        .map(|i| -20.0 + i as f64 * 1e-3)
        .map(|x| (x, h.h(x.abs())))
        .collect();
    for s in [0.3, 1.0, 5.0, -7.0] {
        let est = numerical_legendre(&samples, s);
        assert!(est.trusted);
        assert!((est.value - h.h_star(&[s])).abs() < 2e-4);
    }
    let est = numerical_legendre(&samples, 1000.0);
    assert!(!est.trusted);
}

#[test]
fn counterexample_branches() {
    let step = 1.0 / 1024.0;
    let samples: Vec<(f64, f64)> = (0..=10 * 1024)
        .map(|i| -5.0 + i as f64 * step)
        .map(|x| (x, counterexample(x)))
        .collect();
    let at = |p: f64| numerical_legendre(&samples, p).value;
    assert!((at(2.5) - 1.5).abs() < 1e-12);
    assert!((at(1.0) - 0.25).abs() < 1e-12);
    assert_eq!(counterexample_conjugate(2.5), 1.5);
    assert_eq!(counterexample_conjugate(1.0), 0.25);
    for p in [0.0, 0.7, 2.0, 2.9, 3.0, 4.0] {
        assert!((at(p) - counterexample_conjugate(p)).abs() < 1e-5, "p={p}");
    }
    // affine piece of the conjugate: no strict convexity on [2, 3]
    for (a, b) in [(2.0, 3.0), (2.2, 2.8), (2.0, 2.5)] {
        assert!(midpoint_defect(counterexample_conjugate, a, b).abs() < 1e-12);
    }
}

#[test]
fn power_conjugates_are_strictly_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for h in [
        Hamiltonian::quadratic(),
        Hamiltonian::power(3.0, 1.0),
        Hamiltonian::power(1.5, 1.0),
    ] {
        for _ in 0..200 {
            let a = rng.gen_range(-5.0..5.0);
            let b = a + rng.gen_range(0.1..3.0);
            assert!(midpoint_defect(|s| h.phi_star(s), a, b) > 0.0);
        }
    }
}

#[test]
fn coupling_conjugates() {
    let c = Coupling {
        form: CouplingForm::Shifted,
        q: 3.0,
    }
    .at(1.0);
    let brute = (0..=1_000_000)
        .map(|i| i as f64 * 1e-4)
        .map(|m| 2.0 * m - c.big_f(m).finite().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((c.f_star(2.0) - brute).abs() < 1e-6);

    let mut last = 0.0;
    for i in 0..400 {
        let s = -5.0 + i as f64 * 0.05;
        let v = c.f_star(s);
        assert!(v >= last);
        if s <= c.f0() {
            assert_eq!(v, 0.0);
        }
        last = v;
    }
}

#[test]
fn lagrangian_is_even() {
    let h = Hamiltonian::paper_example(3.0, 1.3);
    for s in [[1.0, -2.0], [0.0, 0.3], [-4.0, 5.0]] {
        assert_eq!(h.l_eval(&s), h.h_star(&s));
    }
}

#[test]
fn kinetic_conventions() {
    let h = Hamiltonian::quadratic();
    assert_eq!(kinetic_eval(&h, 0.0, &[0.0]), ExtReal::Finite(0.0));
    assert_eq!(kinetic_eval(&h, 0.0, &[1.0]), ExtReal::Infinite);
    assert_eq!(kinetic_eval(&h, -1.0, &[0.0]), ExtReal::Infinite);
    assert_eq!(kinetic_eval(&h, 2.0, &[4.0]), ExtReal::Finite(4.0));
}

fn brute_prox(h: &Hamiltonian, m0: f64, w0: f64, tau: f64) -> (f64, f64, f64) {
    let obj = |m: f64, w: f64| match kinetic_eval(h, m, &[w]) {
        ExtReal::Finite(k) => k + ((m - m0).powi(2) + (w - w0).powi(2)) / (2.0 * tau),
        ExtReal::Infinite => f64::INFINITY,
    };
    // coarse then fine
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let (mut mc, mut wc, mut span) = (m0.max(0.0) + 2.0, w0, 6.0 + m0.abs() + w0.abs());
    for _ in 0..6 {
        for i in 0..=200 {
            let m = (mc - span + 2.0 * span * i as f64 / 200.0).max(0.0);
            for k in 0..=200 {
                let w = wc - span + 2.0 * span * k as f64 / 200.0;
                let v = obj(m, w);
                if v < best.0 {
                    best = (v, m, w);
                }
            }
        }
        mc = best.1;
        wc = best.2;
        span *= 0.08;
    }
    best
}

#[test]
fn prox_matches_grid_search() {
    let h = Hamiltonian::quadratic();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let m0 = rng.gen_range(-2.0..3.0);
        let w0 = rng.gen_range(-3.0..3.0);
        let tau = rng.gen_range(0.2..2.0);
        let (m, w) = prox_kinetic(&h, m0, &[w0], tau).unwrap();
        let (_, bm, bw) = brute_prox(&h, m0, w0, tau);
        assert!(
            (m - bm).abs() < 1e-4 && (w[0] - bw).abs() < 1e-4,
            "in=({m0},{w0},{tau}) got ({m},{}) brute ({bm},{bw})",
            w[0]
        );
        assert!(kinetic_eval(&h, m, &w).is_finite());
    }
}

#[test]
fn prox_projects_infeasible_point_to_origin() {
    let h = Hamiltonian::quadratic();
    let (m, w) = prox_kinetic(&h, -5.0, &[0.0, 0.0], 1.0).unwrap();
    assert_eq!((m, w), (0.0, vec![0.0, 0.0]));
    let (m, w) = prox_kinetic(&h, -5.0, &[0.3], 1.0).unwrap();
    assert_eq!((m, w[0]), (0.0, 0.0));
}

#[test]
fn prox_with_coupling_satisfies_optimality() {
    let h = Hamiltonian::power(3.0, 1.0);
    let c = Coupling {
        form: CouplingForm::Shifted,
        q: 2.0,
    }
    .at(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let rho0 = rng.gen_range(-1.0..4.0);
        let z0 = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let (tr, tz) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
        let mut z = [0.0; 2];
        let rho = prox_point(&h, Some(&c), rho0, &z0, tr, tz, &mut z).unwrap();
        let obj = |r: f64, z: &[f64]| match kinetic_eval(&h, r, z) {
            ExtReal::Finite(k) => {
                k + c.big_f(r).finite().unwrap()
                    + (r - rho0).powi(2) / (2.0 * tr)
                    + ((z[0] - z0[0]).powi(2) + (z[1] - z0[1]).powi(2)) / (2.0 * tz)
            }
            ExtReal::Infinite => f64::INFINITY,
        };
        let best = obj(rho, &z);
        for _ in 0..50 {
            let dr = rng.gen_range(-1e-3..1e-3);
            let dz = [rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3)];
            let v = obj((rho + dr).max(0.0), &[z[0] + dz[0], z[1] + dz[1]]);
            assert!(
                v >= best - 1e-10,
                "perturbation improved the prox objective"
            );
        }
    }
}

#[test]
fn prox_kink_branch() {
    // kinked H: small fluxes pass through unchanged
    let h = Hamiltonian::paper_example(2.0, 1.0);
    let mut z = [0.0];
    let rho = prox_point(&h, None, 3.0, &[0.5], 1.0, 1.0, &mut z).unwrap();
    // Z = Z0, ρ solves -h(0) + ρ - 3 = 0
    assert_eq!(z[0], 0.5);
    assert!((rho - 4.0).abs() < 1e-10);
}

proptest! {
    #[test]
    fn prox_is_firmly_nonexpansive(
        a in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        b in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        r in prop::sample::select(vec![1.5f64, 2.0, 3.0]),
    ) {
        let h = Hamiltonian::power(r, 1.0);
        let (ma, wa) = prox_kinetic(&h, a.0, &[a.1, a.2], 0.7).unwrap();
        let (mb, wb) = prox_kinetic(&h, b.0, &[b.1, b.2], 0.7).unwrap();
        let d = [ma - mb, wa[0] - wb[0], wa[1] - wb[1]];
        let e = [a.0 - b.0, a.1 - b.1, a.2 - b.2];
        let lhs: f64 = d.iter().map(|x| x * x).sum();
        let rhs: f64 = d.iter().zip(&e).map(|(x, y)| x * y).sum();
        prop_assert!(lhs <= rhs + 1e-10, "{lhs} > {rhs}");
    }
}
