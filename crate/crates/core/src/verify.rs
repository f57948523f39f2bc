//! Post-solve certificate suite for weak solutions.
//!
//! Every check reads a solved state `(m, Z, u, α)` and reports a value, a
//! threshold and a verdict. Thresholds scale with `max(1, |𝓜|)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::continuity::mass_balance_table;
use crate::convex::{kinetic_eval, pow};
use crate::error::{MfgError, Result};
use crate::grid::{
    boundary_pairing, mollify, reflect_extend, CellField, Grid, Snapshot, SnapshotKind,
    TerminalExtension,
};
use crate::problem::Problem;
use crate::solver::{
    assemble_face_flux, discrete_hamiltonian, evaluate_k, evaluate_m, face_residual, hj_operator,
    Solution, SplitFlux, SplitLayout,
};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Support threshold for the equality and drift checks.
    pub delta: f64,
    pub gap_lower: f64,
    pub gap_rel: f64,
    pub residual: f64,
    pub mass_rel: f64,
    pub subsolution_rel: f64,
    pub equality_rel: f64,
    pub drift_rel: f64,
    pub energy_terminal_rel: f64,
    pub energy_interior_rel: f64,
    pub energy_samples: usize,
    pub test_fields: usize,
    pub seed: u64,
    /// Interior margin for the Hölder diagnostic, as a fraction of each side.
    pub holder_margin: f64,
    pub holder_reference: Option<f64>,
    /// Mollifier radius in units of `max(h, Δt)`.
    pub mollifier_cells: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            delta: 1e-3,
            gap_lower: 1e-8,
            gap_rel: 1e-5,
            residual: 1e-8,
            mass_rel: 1e-12,
            subsolution_rel: 1e-5,
            equality_rel: 1e-4,
            drift_rel: 1e-4,
            energy_terminal_rel: 1e-5,
            energy_interior_rel: 1e-4,
            energy_samples: 5,
            test_fields: 12,
            seed: 0x5eed,
            holder_margin: 0.1,
            holder_reference: None,
            mollifier_cells: 2.5,
        }
    }
}

impl VerifyConfig {
    pub fn for_problem(p: &Problem) -> Self {
        VerifyConfig {
            delta: p.mask_delta,
            ..Self::default()
        }
    }
}

/// The fields a verification reads.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFields {
    pub m: CellField,
    pub z: SplitFlux,
    pub u: CellField,
    pub alpha: CellField,
}

impl SolutionFields {
    pub fn from_solution(s: &Solution) -> Self {
        SolutionFields {
            m: s.m.clone(),
            z: s.z.clone(),
            u: s.u.clone(),
            alpha: s.alpha.clone(),
        }
    }

    /// Density, split flux, value and running-cost snapshots, in that order.
    pub fn snapshots(&self, g: &Grid) -> Result<Vec<Snapshot>> {
        Ok(vec![
            Snapshot::new(
                g,
                SnapshotKind::Density,
                self.m.slices(),
                self.m.data().to_vec(),
            )?,
            Snapshot::new(
                g,
                SnapshotKind::FluxSplit,
                self.z.intervals,
                self.z.data.clone(),
            )?,
            Snapshot::new(
                g,
                SnapshotKind::Value,
                self.u.slices(),
                self.u.data().to_vec(),
            )?,
            Snapshot::new(
                g,
                SnapshotKind::Cost,
                self.alpha.slices(),
                self.alpha.data().to_vec(),
            )?,
        ])
    }

    /// Inverse of [`SolutionFields::snapshots`], checked against `p`.
    pub fn from_snapshots(p: &Problem, snaps: &[Snapshot]) -> Result<Self> {
        let g = &p.grid;
        let find = |kind: SnapshotKind| -> Result<&Snapshot> {
            let s = snaps
                .iter()
                .find(|s| s.kind == kind)
                .ok_or_else(|| MfgError::Format(format!("missing {kind:?} snapshot")))?;
            if s.cells != g.cells() || s.time_steps != g.time_steps() {
                return Err(MfgError::Shape(format!(
                    "{kind:?} snapshot is on a {:?} x {} grid, problem has {:?} x {}",
                    s.cells,
                    s.time_steps,
                    g.cells(),
                    g.time_steps()
                )));
            }
            Ok(s)
        };
        let cells = |kind| -> Result<CellField> {
            let s = find(kind)?;
            let f = CellField::from_vec(g.ncells(), s.slices, s.data.clone())?;
            g.check_cell_field(&f, g.levels(), "snapshot")?;
            Ok(f)
        };
        let zs = find(SnapshotKind::FluxSplit)?;
        let z = SplitFlux {
            slots: 2 * p.dim(),
            ncells: g.ncells(),
            intervals: zs.slices,
            data: zs.data.clone(),
        };
        z.check(p)?;
        Ok(SolutionFields {
            m: cells(SnapshotKind::Density)?,
            z,
            u: cells(SnapshotKind::Value)?,
            alpha: cells(SnapshotKind::Cost)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionStats {
    pub max: f64,
    pub l1: f64,
    /// `(level, cell)` of the largest violation.
    pub argmax: (usize, usize),
    /// `∫∫ (-u_t + H - α) φ` per test field.
    pub weak: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportStats {
    pub delta: f64,
    pub max: f64,
    pub l1: f64,
    pub count: usize,
    pub argmax: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDefect {
    pub level: usize,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentAudit {
    pub r: f64,
    pub q: f64,
    pub dim: usize,
    pub beta: f64,
    pub nu: f64,
    pub exponent_gap: bool,
    pub uniqueness_exponent: bool,
}

impl ExponentAudit {
    pub fn new(r: f64, q: f64, dim: usize) -> Self {
        let n = dim as f64;
        ExponentAudit {
            r,
            q,
            dim,
            beta: q * r / (q * r - q + 1.0),
            nu: (r - n * (q - 1.0)) / (n * (q - 1.0) * (r - 1.0) + r * q),
            exponent_gap: r > n * (q - 1.0),
            uniqueness_exponent: r > n * q / (n * q + q - 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integrability {
    /// `∫∫ (1 + m) |∇u|^r`.
    pub gradient_integral: f64,
    pub m_lq: f64,
    pub w_lbeta: f64,
    pub audit: ExponentAudit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HolderDiagnostic {
    Fitted {
        nu: f64,
        constant: f64,
        alpha_norm: f64,
        pairs: usize,
        violations: Option<usize>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedSubsolution {
    pub eps: f64,
    pub max_violation: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakSolutionReport {
    pub scale: f64,
    pub primal: Option<f64>,
    pub dual: f64,
    pub gap: Option<f64>,
    pub continuity_residual: f64,
    pub mass_defect: f64,
    pub subsolution: SubsolutionStats,
    pub terminal_violation: f64,
    pub equality: SupportStats,
    pub drift: SupportStats,
    pub energy: Vec<EnergyDefect>,
    pub integrability: Integrability,
    pub holder: HolderDiagnostic,
    pub mollified: MollifiedSubsolution,
    pub checks: Vec<CheckResult>,
}

impl WeakSolutionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[checks]\n");
        for c in &self.checks {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            writeln!(
                s,
                "{:<22} {verdict}  value={:.6e} threshold={:.3e}",
                c.name, c.value, c.threshold
            )
            .unwrap();
        }
        s.push_str("\n[energy]\n");
        for e in &self.energy {
            writeln!(
                s,
                "t={:.6} lhs={:.12e} rhs={:.12e} defect={:.3e}",
                e.t, e.lhs, e.rhs, e.defect
            )
            .unwrap();
        }
        s.push_str("\n[weak_subsolution]\n");
        for (i, w) in self.subsolution.weak.iter().enumerate() {
            writeln!(s, "field{i} = {w:.6e}").unwrap();
        }
        s.push_str("\n[summary]\n");
        let opt = |v: Option<f64>| v.map_or("inf".to_string(), |x| format!("{x:.12e}"));
        let a = &self.integrability.audit;
        let mut kv = vec![
            ("passed", self.passed().to_string()),
            ("failures", self.failures().join(",")),
            ("scale", format!("{:.12e}", self.scale)),
            ("primal", opt(self.primal)),
            ("dual", format!("{:.12e}", self.dual)),
            ("gap", opt(self.gap)),
            (
                "continuity_residual",
                format!("{:.6e}", self.continuity_residual),
            ),
            ("mass_defect", format!("{:.6e}", self.mass_defect)),
            ("subsolution_max", format!("{:.6e}", self.subsolution.max)),
            ("subsolution_l1", format!("{:.6e}", self.subsolution.l1)),
            (
                "terminal_violation",
                format!("{:.6e}", self.terminal_violation),
            ),
            ("equality_delta", format!("{:.3e}", self.equality.delta)),
            ("equality_max", format!("{:.6e}", self.equality.max)),
            ("equality_cells", self.equality.count.to_string()),
            ("drift_max", format!("{:.6e}", self.drift.max)),
            (
                "gradient_integral",
                format!("{:.12e}", self.integrability.gradient_integral),
            ),
            ("m_lq", format!("{:.12e}", self.integrability.m_lq)),
            ("w_lbeta", format!("{:.12e}", self.integrability.w_lbeta)),
            ("beta", format!("{:.12e}", a.beta)),
            ("nu", format!("{:.12e}", a.nu)),
            ("exponent_gap", a.exponent_gap.to_string()),
            ("uniqueness_exponent", a.uniqueness_exponent.to_string()),
            ("mollified_eps", format!("{:.6e}", self.mollified.eps)),
            (
                "mollified_violation",
                format!("{:.6e}", self.mollified.max_violation),
            ),
        ];
        match &self.holder {
            HolderDiagnostic::Fitted {
                constant,
                pairs,
                violations,
                ..
            } => {
                kv.push(("holder_constant", format!("{constant:.6e}")));
                kv.push(("holder_pairs", pairs.to_string()));
                kv.push((
                    "holder_violations",
                    violations.map_or("none".into(), |v| v.to_string()),
                ));
            }
            HolderDiagnostic::Skipped { reason } => kv.push(("holder_skipped", reason.clone())),
        }
        for (k, v) in kv {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }
}

fn features(p: &Problem, u: &[f64], layout: &SplitLayout, grad: &mut [f64], feat: &mut [f64]) {
    layout.features_of(&p.grid, u, grad, feat);
}

/// Pointwise and weak subsolution residuals of `-D_t u + H̃ ≤ α`.
pub fn check_subsolution(
    p: &Problem,
    u: &CellField,
    alpha: &CellField,
    cfg: &VerifyConfig,
) -> Result<SubsolutionStats> {
    let g = &p.grid;
    g.check_cell_field(alpha, g.levels(), "running cost")?;
    let hj = hj_operator(p, u)?;
    let mu = g.dt() * g.cell_volume();
    let battery = test_fields(g, cfg.test_fields, cfg.seed);
    let mut st = SubsolutionStats {
        max: 0.0,
        l1: 0.0,
        argmax: (0, 0),
        weak: vec![0.0; battery.len()],
    };
    for k in 1..g.levels() {
        let t = g.time_at(k);
        for c in 0..g.ncells() {
            let r = hj.get(k, c) - alpha.get(k, c);
            if r > st.max {
                st.max = r;
                st.argmax = (k, c);
            }
            st.l1 += mu * r.max(0.0);
            let x = g.cell_center(c);
            for (w, phi) in st.weak.iter_mut().zip(&battery) {
                *w += mu * r * phi.eval(t, &x);
            }
        }
    }
    Ok(st)
}

/// A nonnegative tensor-product bump in `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestField {
    pub t_center: f64,
    pub t_radius: f64,
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl TestField {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let bump = |s: f64| (1.0 - s * s).max(0.0).powi(2);
        let mut v = bump((t - self.t_center) / self.t_radius);
        for ((xi, c), r) in x.iter().zip(&self.center).zip(&self.radius) {
            v *= bump((xi - c) / r);
        }
        v
    }
}

/// Fixed battery of test fields drawn from `seed`.
pub fn test_fields(g: &Grid, n: usize, seed: u64) -> Vec<TestField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = g.domain().horizon();
    (0..n)
        .map(|_| {
            let (center, radius) = g
                .domain()
                .bounds()
                .iter()
                .map(|&(a, b)| (rng.gen_range(a..b), (b - a) * rng.gen_range(0.15..0.6)))
                .unzip();
            TestField {
                t_center: rng.gen_range(0.0..horizon),
                t_radius: horizon * rng.gen_range(0.15..0.6),
                center,
                radius,
            }
        })
        .collect()
}

/// `|-D_t u + H̃ - f(t, x, m)|` on `{m > delta}`.
pub fn check_equality_on_support(
    p: &Problem,
    u: &CellField,
    m: &CellField,
    delta: f64,
) -> Result<SupportStats> {
    let g = &p.grid;
    g.check_cell_field(m, g.levels(), "density")?;
    let hj = hj_operator(p, u)?;
    let mu = g.dt() * g.cell_volume();
    let mut st = SupportStats {
        delta,
        max: 0.0,
        l1: 0.0,
        count: 0,
        argmax: (0, 0),
    };
    for k in 1..g.levels() {
        for c in 0..g.ncells() {
            let rho = m.get(k, c);
            if rho <= delta {
                continue;
            }
            let r = (hj.get(k, c) - p.coupling_at(k, c).f(rho)).abs();
            st.count += 1;
            st.l1 += mu * r;
            if r > st.max {
                st.max = r;
                st.argmax = (k, c);
            }
        }
    }
    Ok(st)
}

/// `|Z + m ∇H(c(u))|` per cell on `{m > delta}`, in the split variables.
pub fn check_drift(
    p: &Problem,
    m: &CellField,
    z: &SplitFlux,
    u: &CellField,
    delta: f64,
) -> Result<SupportStats> {
    let g = &p.grid;
    g.check_cell_field(m, g.levels(), "density")?;
    g.check_cell_field(u, g.levels(), "value function")?;
    z.check(p)?;
    let layout = SplitLayout::new(g);
    let slots = layout.slots;
    let (mut grad, mut feat) = (vec![0.0; g.nfaces()], vec![0.0; layout.interval_len()]);
    let mut hp = vec![0.0; slots];
    let mu = g.dt() * g.cell_volume();
    let mut st = SupportStats {
        delta,
        max: 0.0,
        l1: 0.0,
        count: 0,
        argmax: (0, 0),
    };
    for k in 1..g.levels() {
        features(p, u.slice(k - 1), &layout, &mut grad, &mut feat);
        for c in 0..g.ncells() {
            let rho = m.get(k, c);
            if rho <= delta {
                continue;
            }
            p.ham.grad(&feat[c * slots..(c + 1) * slots], &mut hp);
            let r = z
                .point(k - 1, c)
                .iter()
                .zip(&hp)
                .map(|(zi, h)| (zi + rho * h).powi(2))
                .sum::<f64>()
                .sqrt();
            st.count += 1;
            st.l1 += mu * r;
            if r > st.max {
                st.max = r;
                st.argmax = (k, c);
            }
        }
    }
    Ok(st)
}

/// Energy identity up to `level`:
/// `⟨u(0), m0⟩ + ∫∫ j u = ⟨u(t), m(t)⟩ + ∫∫ [m L(w/m) + m α]`.
pub fn check_energy_identity(
    p: &Problem,
    f: &SolutionFields,
    level: usize,
) -> Result<EnergyDefect> {
    let g = &p.grid;
    let (vol, dt) = (g.cell_volume(), g.dt());
    let mu = dt * vol;
    let pair = |a: &[f64], b: &[f64]| vol * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut lhs = pair(f.u.slice(0), &p.m0);
    let mut rhs = pair(f.u.slice(level), f.m.slice(level));
    for k in 1..=level {
        lhs += dt * boundary_pairing(g, f.u.slice(k - 1), p.j.slice(k - 1));
        let mut acc = 0.0;
        for c in 0..g.ncells() {
            let rho = f.m.get(k, c);
            let kin = kinetic_eval(&p.ham, rho, f.z.point(k - 1, c))
                .finite()
                .unwrap_or(f64::INFINITY);
            acc += kin + rho * f.alpha.get(k, c);
        }
        rhs += mu * acc;
    }
    Ok(EnergyDefect {
        level,
        t: g.time_at(level),
        lhs,
        rhs,
        defect: rhs - lhs,
    })
}

pub fn check_integrability_and_exponents(p: &Problem, f: &SolutionFields) -> Result<Integrability> {
    let g = &p.grid;
    let layout = SplitLayout::new(g);
    let slots = layout.slots;
    let audit = ExponentAudit::new(p.ham.r, p.coupling.q, p.dim());
    let (mut grad, mut feat) = (vec![0.0; g.nfaces()], vec![0.0; layout.interval_len()]);
    let mu = g.dt() * g.cell_volume();
    let (mut gi, mut mq, mut wb) = (0.0, 0.0, 0.0);
    for k in 1..g.levels() {
        features(p, f.u.slice(k - 1), &layout, &mut grad, &mut feat);
        for c in 0..g.ncells() {
            let rho = f.m.get(k, c);
            let gn = feat[c * slots..(c + 1) * slots]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let wn =
                f.z.point(k - 1, c)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
            gi += mu * (1.0 + rho) * pow(gn, p.ham.r);
            mq += mu * pow(rho.abs(), audit.q);
            wb += mu * pow(wn, audit.beta);
        }
    }
    Ok(Integrability {
        gradient_integral: gi,
        m_lq: pow(mq, 1.0 / audit.q),
        w_lbeta: pow(wb, 1.0 / audit.beta),
        audit,
    })
}

/// Fits the smallest `C` with `u(s, x) ≤ u(t, x) + C (t - s)^ν (‖α‖_{q'} + 1)`
/// over interior cells and all level pairs `s < t`.
pub fn check_holder(
    p: &Problem,
    u: &CellField,
    alpha: &CellField,
    margin: f64,
    reference: Option<f64>,
) -> HolderDiagnostic {
    let g = &p.grid;
    let nu = ExponentAudit::new(p.ham.r, p.coupling.q, p.dim()).nu;
    if !(nu > 0.0) {
        return HolderDiagnostic::Skipped {
            reason: format!("exponent nu={nu:.4} is not positive"),
        };
    }
    let qc = p.coupling.q_conj();
    let mu = g.dt() * g.cell_volume();
    let anorm = pow(
        (1..g.levels())
            .flat_map(|k| alpha.slice(k))
            .map(|a| mu * pow(a.abs(), qc))
            .sum::<f64>(),
        1.0 / qc,
    );
    let interior: Vec<usize> = (0..g.ncells())
        .filter(|&c| {
            let x = g.cell_center(c);
            g.domain().bounds().iter().zip(&x).all(|(&(a, b), xi)| {
                let d = margin * (b - a);
                *xi >= a + d && *xi <= b - d
            })
        })
        .collect();
    if interior.is_empty() {
        return HolderDiagnostic::Skipped {
            reason: format!("no cells at margin {margin}"),
        };
    }
    let (mut constant, mut pairs) = (0.0f64, 0usize);
    let mut violations = 0usize;
    for s in 0..g.levels() {
        for t in s + 1..g.levels() {
            let w = pow(g.time_at(t) - g.time_at(s), nu) * (anorm + 1.0);
            for &c in &interior {
                let d = u.get(s, c) - u.get(t, c);
                constant = constant.max(d / w);
                pairs += 1;
                if let Some(cr) = reference {
                    if d > cr * w * (1.0 + 1e-12) {
                        violations += 1;
                    }
                }
            }
        }
    }
    HolderDiagnostic::Fitted {
        nu,
        constant,
        alpha_norm: anorm,
        pairs,
        violations: reference.map(|_| violations),
    }
}

/// Subsolution residual of the reflected, shifted and mollified pair
/// `(u_ε, α_ε)` on cells whose mollifier support stays clear of ∂Ω.
pub fn check_mollified_subsolution(
    p: &Problem,
    u: &CellField,
    alpha: &CellField,
    cells: f64,
) -> Result<MollifiedSubsolution> {
    let g = &p.grid;
    let hmax = g.spacing().iter().cloned().fold(g.dt(), f64::max);
    let eps = cells * hmax;
    let mut psi_levels = CellField::zeros(g.ncells(), g.levels());
    psi_levels.slice_mut(0).copy_from_slice(&p.psi);
    let hpsi = discrete_hamiltonian(p, &psi_levels)?;
    let slope = -hpsi.slice(1).iter().cloned().fold(0.0, f64::max);
    let ue = mollify(
        &reflect_extend(
            g,
            u,
            eps,
            &TerminalExtension::Affine {
                psi: p.psi.clone(),
                slope,
            },
        )?,
        eps,
    )?;
    let ae = mollify(
        &reflect_extend(g, alpha, eps, &TerminalExtension::Zero)?,
        eps,
    )?;
    let hj = hj_operator(p, &ue)?;
    let clear = eps + 2.0 * hmax;
    let mut st = MollifiedSubsolution {
        eps,
        max_violation: 0.0,
        cells: 0,
    };
    for c in 0..g.ncells() {
        let x = g.cell_center(c);
        let inside = g
            .domain()
            .bounds()
            .iter()
            .zip(&x)
            .all(|(&(a, b), xi)| *xi - a >= clear && b - *xi >= clear);
        if !inside {
            continue;
        }
        st.cells += 1;
        for k in 1..g.levels() {
            st.max_violation = st.max_violation.max(hj.get(k, c) - ae.get(k, c));
        }
    }
    Ok(st)
}

/// Run every check and collect the verdicts.
pub fn verify(p: &Problem, f: &SolutionFields, cfg: &VerifyConfig) -> Result<WeakSolutionReport> {
    let g = &p.grid;
    let primal = evaluate_m(p, &f.m, &f.z)?.value.finite();
    let dual = evaluate_k(p, &f.u, &f.alpha)?;
    let scale = primal.map_or(1.0, |v| v.abs().max(1.0));
    let gap = primal.map(|v| v + dual.value);
    let w = assemble_face_flux(p, &f.z)?;
    let continuity_residual = face_residual(p, &f.m, &w)?;
    let mass_defect = mass_balance_table(g, &f.m, &p.j)?
        .iter()
        .map(|r| r.defect.abs() / r.expected.abs().max(1e-300))
        .fold(0.0, f64::max);
    let subsolution = check_subsolution(p, &f.u, &f.alpha, cfg)?;
    let equality = check_equality_on_support(p, &f.u, &f.m, cfg.delta)?;
    let drift = check_drift(p, &f.m, &f.z, &f.u, cfg.delta)?;

    let kk = g.time_steps();
    let mut levels: Vec<usize> = (1..=cfg.energy_samples)
        .map(|i| ((i * kk) as f64 / (cfg.energy_samples + 1) as f64).round() as usize)
        .filter(|&l| l > 0 && l < kk)
        .collect();
    levels.dedup();
    levels.push(kk);
    let energy = levels
        .iter()
        .map(|&l| check_energy_identity(p, f, l))
        .collect::<Result<Vec<_>>>()?;
    let integrability = check_integrability_and_exponents(p, f)?;
    let holder = check_holder(p, &f.u, &f.alpha, cfg.holder_margin, cfg.holder_reference);
    let mollified = check_mollified_subsolution(p, &f.u, &f.alpha, cfg.mollifier_cells)?;

    let check = |name, value: f64, threshold: f64| CheckResult {
        name,
        value,
        threshold,
        passed: value <= threshold,
    };
    let terminal = energy.last().unwrap().defect.abs();
    let interior = energy[..energy.len() - 1]
        .iter()
        .map(|e| e.defect.abs())
        .fold(0.0, f64::max);
    let weak_max = subsolution.weak.iter().cloned().fold(0.0, f64::max);
    let checks = vec![
        check("gap", gap.unwrap_or(f64::INFINITY), cfg.gap_rel * scale),
        check("gap_lower", -gap.unwrap_or(0.0), cfg.gap_lower),
        check("continuity_residual", continuity_residual, cfg.residual),
        check("mass_balance", mass_defect, cfg.mass_rel),
        check("subsolution", subsolution.max, cfg.subsolution_rel * scale),
        check("subsolution_weak", weak_max, cfg.subsolution_rel * scale),
        check(
            "terminal_condition",
            dual.terminal_violation,
            cfg.subsolution_rel * scale,
        ),
        check(
            "equality_on_support",
            equality.max,
            cfg.equality_rel * scale,
        ),
        check("drift", drift.max, cfg.drift_rel * scale),
        check("energy_terminal", terminal, cfg.energy_terminal_rel * scale),
        check("energy_interior", interior, cfg.energy_interior_rel * scale),
        check(
            "integrability",
            if integrability.gradient_integral.is_finite() && integrability.w_lbeta.is_finite() {
                0.0
            } else {
                1.0
            },
            0.0,
        ),
    ];
    Ok(WeakSolutionReport {
        scale,
        primal,
        dual: dual.value,
        gap,
        continuity_residual,
        mass_defect,
        subsolution,
        terminal_violation: dual.terminal_violation,
        equality,
        drift,
        energy,
        integrability,
        holder,
        mollified,
        checks,
    })
}
