use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mfg_core::characteristics::{
    compare_all, comparison_csv, integrate, seed_agents, trajectory_csv, VelocityField,
};
use mfg_core::continuity::{mass_balance_csv, mass_balance_table};
use mfg_core::convex::{
    counterexample, counterexample_conjugate, numerical_legendre, ConjugatePair, Hamiltonian,
};
use mfg_core::grid::{read_snapshot, write_snapshot, Snapshot, SnapshotKind};
use mfg_core::problem::{builtin, load_spec, Problem, ProblemSpec, Severity};
use mfg_core::solver::{
    assemble_face_flux, initial_state, load_checkpoint, save_checkpoint, solve_from, HistoryEntry,
    Init, SolverConfig,
};
use mfg_core::verify::{verify as run_verify, SolutionFields, VerifyConfig, WeakSolutionReport};
use mfg_core::MfgError;
use serde_json::json;

use crate::manifest::{sha256_hex, RunManifest, MANIFEST};
use crate::{Phi, SimulateArgs, SolveArgs, SpecSource, Velocity};

const SPEC_FILE: &str = "spec.toml";
const SNAPSHOTS: [(&str, SnapshotKind); 4] = [
    ("m.snap", SnapshotKind::Density),
    ("z.snap", SnapshotKind::FluxSplit),
    ("u.snap", SnapshotKind::Value),
    ("alpha.snap", SnapshotKind::Cost),
];

/// Failure that is not a core library error.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub code: u8,
    pub detail: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.detail)
    }
}

impl std::error::Error for Failure {}

/// Machine tag and exit code of an error.
pub fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    if let Some(f) = e.downcast_ref::<Failure>() {
        (f.kind, f.code)
    } else if let Some(m) = e.downcast_ref::<MfgError>() {
        (m.kind(), 1)
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        ("io", 1)
    } else {
        ("runtime", 1)
    }
}

fn load_source(src: &SpecSource) -> Result<ProblemSpec> {
    let spec = match (&src.config, &src.builtin) {
        (Some(path), _) => load_spec(path)?,
        (None, Some(name)) => builtin(name)
            .ok_or_else(|| MfgError::Config(format!("unknown builtin instance '{name}'")))?,
        (None, None) => unreachable!("clap enforces one source"),
    };
    spec.validate()?;
    Ok(spec)
}

fn default_out(name: &str) -> PathBuf {
    std::env::var_os("MFG_OUT_ROOT")
        .map_or_else(|| PathBuf::from("mfg-out"), PathBuf::from)
        .join(name)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Add or refresh manifest entries for files this command wrote.
fn record(dir: &Path, names: &[&str]) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut m = match std::fs::read_to_string(&path) {
        Ok(text) => RunManifest::parse(&text)?,
        Err(_) => RunManifest::new("unknown", "", ""),
    };
    for &name in names {
        let hash = sha256_hex(&std::fs::read(dir.join(name))?);
        match m.files.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = hash,
            None => m.files.push((name.to_string(), hash)),
        }
    }
    m.files.sort();
    std::fs::write(path, m.to_text())?;
    Ok(())
}

fn history_csv(h: &[HistoryEntry]) -> String {
    let opt = |v: Option<f64>| v.map_or("inf".to_string(), |x| format!("{x:.12e}"));
    let mut s = String::from("iteration,primal,dual,gap,rel_gap,residual\n");
    for e in h {
        writeln!(
            s,
            "{},{},{:.12e},{},{},{:.6e}",
            e.iteration,
            opt(e.primal),
            e.dual,
            opt(e.gap),
            opt(e.rel_gap),
            e.residual
        )
        .unwrap();
    }
    s
}

fn print_json(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).unwrap());
}

pub fn validate(src: &SpecSource, emit: Option<&Path>, json: bool) -> Result<()> {
    let spec = match (&src.config, &src.builtin) {
        (Some(path), _) => ProblemSpec::from_toml(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => builtin(name)
            .ok_or_else(|| MfgError::Config(format!("unknown builtin instance '{name}'")))?,
        (None, None) => unreachable!(),
    };
    let audit = spec.audit()?;
    let d = spec.derived();
    if json {
        let entries: Vec<_> = audit
            .iter()
            .map(|a| json!({"assumption": a.assumption.key(), "holds": a.holds, "error": a.severity == Severity::Error, "detail": a.detail}))
            .collect();
        print_json(
            json!({"name": spec.name, "valid": spec.validate().is_ok(), "beta": d.beta, "nu": d.nu, "audit": entries}),
        );
    } else {
        println!(
            "[instance]\nname = {}\nbeta = {:.6}\nnu = {:.6}\n\n[audit]",
            spec.name, d.beta, d.nu
        );
        for a in &audit {
            let sev = if a.severity == Severity::Error {
                "error"
            } else {
                "warning"
            };
            let verdict = if a.holds { "holds" } else { "FAILS" };
            println!(
                "{:<20} {verdict:<6} {sev:<8} {}",
                a.assumption.key(),
                a.detail
            );
        }
    }
    spec.validate()?;
    if let Some(path) = emit {
        std::fs::write(path, spec.to_toml()?)?;
    }
    Ok(())
}

pub fn solve(a: &SolveArgs, json: bool) -> Result<()> {
    let spec = load_source(&a.source)?;
    let p = spec.discretize()?;
    let mut cfg = SolverConfig::for_problem(&spec);
    if let Some(n) = a.max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(seed) = a.random_init {
        cfg.init = Init::Random { seed };
    }
    if a.checkpoint.is_some() {
        cfg.checkpoint_every = Some(a.checkpoint_every.max(1));
    }
    let state = match (&a.checkpoint, a.resume) {
        (Some(path), true) => load_checkpoint(path, &p)?,
        _ => initial_state(&p, cfg.init),
    };
    let sol = solve_from(&p, &cfg, state, a.checkpoint.as_deref())?;
    if let Some(path) = &a.checkpoint {
        save_checkpoint(path, &sol.state)?;
    }

    let dir = a.out.clone().unwrap_or_else(|| default_out(&spec.name));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let spec_text = spec.to_toml()?;
    let mut manifest = RunManifest::new("solve", &spec_text, &format!("{cfg:?}"));
    write(&dir, SPEC_FILE, &spec_text)?;
    let cert = &sol.certificate;
    write(&dir, "certificate.txt", cert.to_text())?;
    write(&dir, "gap_history.csv", history_csv(&sol.state.history))?;
    write(
        &dir,
        "mass_balance.csv",
        mass_balance_csv(&mass_balance_table(&p.grid, &sol.m, &p.j)?),
    )?;
    let fields = SolutionFields::from_solution(&sol);
    for ((name, _), snap) in SNAPSHOTS.iter().zip(fields.snapshots(&p.grid)?) {
        write_snapshot(&dir.join(name), &snap)?;
    }
    let w = Snapshot::new(
        &p.grid,
        SnapshotKind::Flux,
        sol.w.slices(),
        sol.w.data().to_vec(),
    )?;
    write_snapshot(&dir.join("w.snap"), &w)?;
    manifest.write(&dir)?;

    if json {
        print_json(json!({"name": spec.name, "out": dir, "certificate": cert}));
    } else {
        print!("{}", cert.to_text());
        println!("out = {}", dir.display());
    }
    if !cert.converged {
        return Err(Failure {
            kind: "not_converged",
            code: 4,
            detail: format!(
                "stopped after {} iterations with rel_gap {:?} residual {:.3e}",
                cert.iterations, cert.rel_gap, cert.residual
            ),
        }
        .into());
    }
    Ok(())
}

/// Instance and solution fields stored in a solve directory.
fn load_solve_dir(dir: &Path) -> Result<(ProblemSpec, Problem, SolutionFields)> {
    let spec = load_spec(&dir.join(SPEC_FILE))
        .with_context(|| format!("reading {}", dir.join(SPEC_FILE).display()))?;
    let p = spec.discretize()?;
    let snaps = SNAPSHOTS
        .iter()
        .map(|(name, _)| read_snapshot(&dir.join(name)).with_context(|| format!("reading {name}")))
        .collect::<Result<Vec<_>>>()?;
    let f = SolutionFields::from_snapshots(&p, &snaps)?;
    Ok((spec, p, f))
}

/// Verification of a solve directory, with manifest mismatches as failures.
fn verify_dir(
    dir: &Path,
    delta: Option<f64>,
) -> Result<(ProblemSpec, WeakSolutionReport, Vec<String>)> {
    let (spec, p, f) = load_solve_dir(dir)?;
    let mut cfg = VerifyConfig::for_problem(&p);
    if let Some(d) = delta {
        cfg.delta = d;
    }
    let r = run_verify(&p, &f, &cfg)?;
    let mut failures: Vec<String> = r.failures().iter().map(|s| s.to_string()).collect();
    if let Ok(text) = std::fs::read_to_string(dir.join(MANIFEST)) {
        let m = RunManifest::parse(&text)?;
        let watched: Vec<&str> = SNAPSHOTS
            .iter()
            .map(|(n, _)| *n)
            .chain([SPEC_FILE])
            .collect();
        for name in m.mismatches(dir) {
            if watched.contains(&name.as_str()) {
                failures.push(format!("manifest_checksum({name})"));
            }
        }
    }
    Ok((spec, r, failures))
}

fn verdict_text(failures: &[String]) -> String {
    if failures.is_empty() {
        "[verdict]\nverification = pass\n".to_string()
    } else {
        format!(
            "[verdict]\nverification = fail\nfailed = {}\n",
            failures.join(",")
        )
    }
}

pub fn verify(dir: &Path, report: Option<&Path>, delta: Option<f64>, json: bool) -> Result<()> {
    let (spec, r, failures) = verify_dir(dir, delta)?;
    let text = format!("{}\n{}", r.to_text(), verdict_text(&failures));
    let path = report.map_or_else(|| dir.join("verify.txt"), Path::to_path_buf);
    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    if path.parent() == Some(dir) {
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            record(dir, &[name])?;
        }
    }
    if json {
        let checks: Vec<_> = r
            .checks
            .iter()
            .map(|c| json!({"name": c.name, "value": c.value, "threshold": c.threshold, "passed": c.passed}))
            .collect();
        print_json(
            json!({"name": spec.name, "passed": failures.is_empty(), "failures": failures, "checks": checks}),
        );
    } else {
        print!("{text}");
    }
    if !failures.is_empty() {
        return Err(Failure {
            kind: "verification",
            code: 3,
            detail: format!("failed checks: {}", failures.join(",")),
        }
        .into());
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs, json: bool) -> Result<()> {
    let (spec, p, f) = load_solve_dir(&a.solve_dir)?;
    let g = &p.grid;
    let w = assemble_face_flux(&p, &f.z)?;
    let vf = match a.velocity {
        Velocity::Flux => VelocityField::flux(g, &w, &f.m, &p.j)?,
        Velocity::Gradient => VelocityField::gradient(g, &f.u, &f.m, &p.j, &p.ham)?,
    };
    let ens = seed_agents(g, &p.m0, &p.j, a.agents, a.seed)?;
    let levels: Vec<usize> = (0..g.levels()).collect();
    let rec = integrate(g, &ens, &vf, g.dt() / a.substeps.max(1) as f64, &levels)?;
    let cmp = compare_all(g, &rec, &f.m)?;

    let kk = g.time_steps();
    let steps = rec.agent_steps.max(1) as f64;
    let worst = cmp.iter().map(|c| c.relative_l1).fold(0.0, f64::max);
    let mut s = String::from("[simulation]\n");
    writeln!(s, "agents = {}", ens.count()).unwrap();
    writeln!(s, "injected = {}", ens.injected()).unwrap();
    writeln!(s, "seed = {}", a.seed).unwrap();
    writeln!(s, "velocity = {:?}", a.velocity).unwrap();
    writeln!(s, "substeps = {}", a.substeps.max(1)).unwrap();
    writeln!(s, "agent_steps = {}", rec.agent_steps).unwrap();
    writeln!(s, "exits = {}", rec.exits).unwrap();
    writeln!(s, "clamps = {}", rec.clamps).unwrap();
    writeln!(s, "exit_fraction = {:.6e}", rec.exit_fraction()).unwrap();
    writeln!(s, "clamp_fraction = {:.6e}", rec.clamps as f64 / steps).unwrap();
    writeln!(s, "relative_l1_half = {:.6e}", cmp[kk / 2].relative_l1).unwrap();
    writeln!(s, "relative_l1_final = {:.6e}", cmp[kk].relative_l1).unwrap();
    writeln!(s, "relative_l1_max = {:.6e}", worst).unwrap();

    let dir = a.out.clone().unwrap_or_else(|| a.solve_dir.clone());
    std::fs::create_dir_all(&dir)?;
    write(&dir, "simulation.txt", &s)?;
    write(&dir, "density_comparison.csv", comparison_csv(&cmp))?;
    write(
        &dir,
        "trajectories.csv",
        trajectory_csv(&rec, a.trajectories.min(ens.count())),
    )?;
    record(
        &dir,
        &[
            "simulation.txt",
            "density_comparison.csv",
            "trajectories.csv",
        ],
    )?;

    if json {
        print_json(json!({
            "name": spec.name,
            "agents": ens.count(),
            "injected": ens.injected(),
            "exit_fraction": rec.exit_fraction(),
            "clamp_fraction": rec.clamps as f64 / steps,
            "relative_l1_half": cmp[kk / 2].relative_l1,
            "relative_l1_final": cmp[kk].relative_l1,
            "relative_l1_max": worst,
        }));
    } else {
        print!("{s}");
    }
    Ok(())
}

/// Samples of `x ↦ Φ(x)` on `[lo, hi]` for the sampled transform.
fn samples(phi: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .map(|x| (x, phi(x)))
        .collect()
}

pub fn conjugate_table(
    which: Phi,
    r: f64,
    at: Option<f64>,
    range: (f64, f64, usize),
    json: bool,
) -> Result<()> {
    let ham = match which {
        Phi::Counterexample => None,
        Phi::Quadratic => Some(Hamiltonian::quadratic()),
        Phi::Power => {
            if !(r > 1.0) {
                return Err(
                    MfgError::Config(format!("power exponent must exceed 1, got {r}")).into(),
                );
            }
            Some(Hamiltonian::power(r, 1.0))
        }
    };
    let (phi, phi_star): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match ham {
        None => (Box::new(counterexample), Box::new(counterexample_conjugate)),
        Some(h) => (
            Box::new(move |x| h.phi(x)),
            Box::new(move |p| h.phi_star(p)),
        ),
    };
    let points: Vec<f64> = match at {
        Some(p) => vec![p],
        None => {
            let (lo, hi, n) = range;
            let n = n.max(2);
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        }
    };
    let span = points.iter().fold(1.0f64, |a, p| a.max(p.abs()));
    let lo = if which == Phi::Counterexample {
        0.0
    } else {
        -4.0 * span
    };
    let grid = samples(&*phi, lo, 4.0 * span, 400_000);
    let rows: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&p| (p, phi_star(p), numerical_legendre(&grid, p).value))
        .collect();

    if json {
        let list: Vec<_> = rows
            .iter()
            .map(|(p, v, n)| json!({"p": p, "value": v, "numerical": n}))
            .collect();
        print_json(json!({"phi": format!("{which:?}").to_lowercase(), "rows": list}));
    } else if at.is_some() {
        println!("{}", rows[0].1);
    } else {
        println!("p,phi_star,numerical");
        for (p, v, n) in rows {
            println!("{p},{v},{n}");
        }
    }
    Ok(())
}

pub fn report(dir: &Path, out: Option<&Path>, json: bool) -> Result<()> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).with_context(|| format!("reading {name}"))
    };
    let certificate = read("certificate.txt")?;
    let history = read("gap_history.csv")?;
    let (spec, r, failures) = verify_dir(dir, None)?;
    let simulation = read("simulation.txt").ok();
    let comparison = read("density_comparison.csv").ok();

    let mut s = String::new();
    writeln!(
        s,
        "[instance]\nname = {}\nspec_sha256 = {}\n",
        spec.name,
        sha256_hex(spec.to_toml()?.as_bytes())
    )
    .unwrap();
    s.push_str(&certificate);
    s.push('\n');
    s.push_str(&r.to_text());
    s.push('\n');
    s.push_str(&verdict_text(&failures));
    if let Some(sim) = &simulation {
        s.push('\n');
        s.push_str(sim);
    }
    if let Some(csv) = &comparison {
        s.push_str("\n[density_comparison]\n");
        s.push_str(csv);
    }
    s.push_str("\n[gap_history]\n");
    s.push_str(&history);

    let path = out.map_or_else(|| dir.join("report.txt"), Path::to_path_buf);
    std::fs::write(&path, &s).with_context(|| format!("writing {}", path.display()))?;
    if path.parent() == Some(dir) {
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            record(dir, &[name])?;
        }
    }
    if json {
        print_json(json!({
            "name": spec.name,
            "report": path,
            "verification_passed": failures.is_empty(),
            "failures": failures,
            "simulation": simulation.is_some(),
        }));
    } else {
        println!("report = {}", path.display());
    }
    Ok(())
}
