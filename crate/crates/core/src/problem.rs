//! Problem instances: TOML schema, assumption audits and discretization.
//!
//! ```toml
//! name = "constant1d"
//! bounds = [[0.0, 1.0]]
//! horizon = 1.0
//! cells = [32]
//! time_steps = 32
//!
//! [hamiltonian]          # H(p) = c |p|^r / r  or  c (1 + |p|^{r/2})²
//! family = "power"       # "power" | "paper_example"
//! r = 2.0
//! c = 1.0
//!
//! [coupling]             # f = w (1 + m^{q-1})  or  w m^{q-1}
//! form = "power"         # "shifted" | "power"
//! q = 2.0
//! weight = { kind = "constant", value = 1.0 }
//!
//! [m0]
//! kind = "constant"
//! value = 1.0
//!
//! [psi]
//! kind = "affine"        # value + time_slope t + Σ slopes[a] x_a
//! value = 0.0
//! slopes = [0.5]
//!
//! [influx]
//! kind = "facets"        # one constant per facet, order (lo_0, hi_0, lo_1, ...)
//! values = [1.0, 0.25]
//!
//! [tolerances]           # optional overrides
//! gap = 1e-6
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convex::{Coupling, CouplingForm, HamFamily, Hamiltonian, PointCoupling};
use crate::error::{Assumption, MfgError, Result};
use crate::grid::{BoundaryField, CellField, Grid, RectDomain};

/// A scalar field on `[0, T] × Ω` given by a named family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Affine {
        value: f64,
        #[serde(default)]
        time_slope: f64,
        #[serde(default)]
        slopes: Vec<f64>,
    },
    /// `base + amplitude · (1 - |x - center|²/radius²)₊²`
    Bump {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        radius: f64,
    },
    /// Tabulated per cell (time-constant) or per cell per level.
    Cells {
        values: Vec<f64>,
    },
}

impl FieldSpec {
    pub fn constant(value: f64) -> Self {
        FieldSpec::Constant { value }
    }

    /// Closed-form families only.
    pub fn eval(&self, t: f64, x: &[f64]) -> Option<f64> {
        Some(match self {
            FieldSpec::Constant { value } => *value,
            FieldSpec::Affine {
                value,
                time_slope,
                slopes,
            } => value + time_slope * t + slopes.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>(),
            FieldSpec::Bump {
                base,
                amplitude,
                center,
                radius,
            } => {
                let d2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c).powi(2)).sum();
                let s = (1.0 - d2 / (radius * radius)).max(0.0);
                base + amplitude * s * s
            }
            FieldSpec::Cells { .. } => return None,
        })
    }

    fn check(&self, what: &str, dim: usize) -> Result<()> {
        let bad = |d: String| Err(MfgError::Config(format!("{what}: {d}")));
        match self {
            FieldSpec::Affine { slopes, .. } if slopes.len() > dim => bad(format!(
                "{} slopes for a {dim}-dimensional domain",
                slopes.len()
            )),
            FieldSpec::Bump { center, radius, .. } if center.len() != dim || !(*radius > 0.0) => {
                bad("bump needs a centre per axis and a positive radius".into())
            }
            _ => Ok(()),
        }
    }

    /// Sample at cell centres on `slices` levels (1 = time-constant at t=0).
    pub fn discretize(&self, grid: &Grid, slices: usize, what: &str) -> Result<CellField> {
        if let FieldSpec::Cells { values } = self {
            let nc = grid.ncells();
            return if values.len() == nc {
                CellField::from_vec(nc, slices, values.repeat(slices))
            } else if values.len() == nc * slices {
                CellField::from_vec(nc, slices, values.clone())
            } else {
                Err(MfgError::Shape(format!(
                    "{what}: {} tabulated values, expected {nc} or {}",
                    values.len(),
                    nc * slices
                )))
            };
        }
        Ok(CellField::from_fn(grid, slices, |t, x| {
            self.eval(t, x).unwrap()
        }))
    }
}

/// Boundary inflow rate `j ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfluxSpec {
    Constant {
        value: f64,
    },
    /// One value per facet, ordered `(lower_0, upper_0, lower_1, ...)`.
    Facets {
        values: Vec<f64>,
    },
    /// A closed-form field evaluated at boundary face centres.
    Field {
        field: FieldSpec,
    },
    /// Per boundary face (time-constant) or per face per interval.
    Faces {
        values: Vec<f64>,
    },
}

impl InfluxSpec {
    /// Sample at boundary face centres and interval midpoints.
    pub fn discretize(&self, grid: &Grid) -> Result<BoundaryField> {
        let (nb, kk) = (grid.nboundary(), grid.time_steps());
        match self {
            InfluxSpec::Faces { values } => {
                if values.len() == nb {
                    BoundaryField::from_vec(nb, kk, values.repeat(kk))
                } else if values.len() == nb * kk {
                    BoundaryField::from_vec(nb, kk, values.clone())
                } else {
                    Err(MfgError::Shape(format!(
                        "influx: {} values, expected {nb} or {}",
                        values.len(),
                        nb * kk
                    )))
                }
            }
            InfluxSpec::Facets { values } if values.len() != grid.nfacets() => {
                Err(MfgError::Config(format!(
                    "influx: {} facet values for {} facets",
                    values.len(),
                    grid.nfacets()
                )))
            }
            InfluxSpec::Field {
                field: FieldSpec::Cells { .. },
            } => Err(MfgError::Config(
                "influx: tabulate per face with kind = \"faces\"".into(),
            )),
            _ => {
                let mut out = BoundaryField::zeros(nb, kk);
                for k in 0..kk {
                    let t = grid.interval_midpoint(k);
                    for facet in 0..grid.nfacets() {
                        let (axis, upper) = (facet / 2, facet % 2 == 1);
                        let bnd = grid.domain().bounds()[axis];
                        for (b, cell) in grid.facet_range(facet).zip(grid.facet_cells(facet)) {
                            let v = match self {
                                InfluxSpec::Constant { value } => *value,
                                InfluxSpec::Facets { values } => values[facet],
                                InfluxSpec::Field { field } => {
                                    let mut x = grid.cell_center(cell);
                                    x[axis] = if upper { bnd.1 } else { bnd.0 };
                                    field.eval(t, &x).unwrap()
                                }
                                InfluxSpec::Faces { .. } => unreachable!(),
                            };
                            out.set(k, b, v);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub form: CouplingForm,
    pub q: f64,
    pub weight: FieldSpec,
}

impl CouplingSpec {
    pub fn family(&self) -> Coupling {
        Coupling {
            form: self.form,
            q: self.q,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Density threshold of the `{m > δ}` masks in verification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub bounds: Vec<(f64, f64)>,
    pub horizon: f64,
    pub cells: Vec<usize>,
    pub time_steps: usize,
    pub hamiltonian: Hamiltonian,
    pub coupling: CouplingSpec,
    pub m0: FieldSpec,
    pub psi: FieldSpec,
    pub influx: InfluxSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Exponents derived from `(N, r, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub r_conj: f64,
    pub q_conj: f64,
    /// Integrability exponent of the flux, `qr / (qr - q + 1)`.
    pub beta: f64,
    /// Hölder exponent `(r - N(q-1)) / (N(q-1)(r-1) + rq)`; not positive
    /// when the exponent gap fails.
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub assumption: Assumption,
    pub holds: bool,
    pub severity: Severity,
    pub detail: String,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn derived(&self) -> Derived {
        let (r, q, n) = (self.hamiltonian.r, self.coupling.q, self.dim() as f64);
        Derived {
            r_conj: r / (r - 1.0),
            q_conj: q / (q - 1.0),
            beta: q * r / (q * r - q + 1.0),
            nu: (r - n * (q - 1.0)) / (n * (q - 1.0) * (r - 1.0) + r * q),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(
            RectDomain::new(self.bounds.clone(), self.horizon)?,
            self.cells.clone(),
            self.time_steps,
        )
    }

    /// Same instance at another resolution.
    pub fn with_resolution(&self, cells: &[usize], time_steps: usize) -> ProblemSpec {
        ProblemSpec {
            cells: cells.to_vec(),
            time_steps,
            ..self.clone()
        }
    }

    /// Audit every standing assumption; errors are returned in the list,
    /// not raised.
    pub fn audit(&self) -> Result<Vec<AuditEntry>> {
        let grid = self.grid()?;
        for (f, what) in [
            (&self.m0, "m0"),
            (&self.psi, "psi"),
            (&self.coupling.weight, "coupling weight"),
        ] {
            f.check(what, self.dim())?;
        }
        if let InfluxSpec::Field { field } = &self.influx {
            field.check("influx", self.dim())?;
        }
        let m0 = self.m0.discretize(&grid, 1, "m0")?;
        let j = self.influx.discretize(&grid)?;
        let w = self
            .coupling
            .weight
            .discretize(&grid, grid.levels(), "coupling weight")?;
        self.psi.discretize(&grid, 1, "psi")?;

        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let (m0_min, j_min, w_min) = (min(m0.data()), min(j.data()), min(w.data()));
        let ham = &self.hamiltonian;
        let (r, q, n) = (ham.r, self.coupling.q, self.dim() as f64);
        let mut out = Vec::new();
        let mut push = |assumption, holds, severity, detail: String| {
            out.push(AuditEntry {
                assumption,
                holds,
                severity,
                detail,
            })
        };

        push(
            Assumption::DataSign,
            m0_min >= 0.0 && j_min >= 0.0 && all_finite(m0.data()) && all_finite(j.data()),
            Severity::Error,
            format!("min m0 = {m0_min}, min j = {j_min}"),
        );
        let ham_ok = r > 1.0 && ham.c > 0.0 && ham.is_differentiable() && growth_bounded(ham);
        push(
            Assumption::HamiltonianGrowth,
            ham_ok,
            Severity::Error,
            match (r > 1.0 && ham.c > 0.0, ham.is_differentiable()) {
                (false, _) => format!("need r > 1 and c > 0, got r = {r}, c = {}", ham.c),
                (true, false) => format!(
                    "{:?} with r = {r} is not differentiable at p = 0",
                    ham.family
                ),
                _ => format!("r = {r}, c = {}", ham.c),
            },
        );
        let coupling_ok = q > 1.0 && w_min > 0.0 && all_finite(w.data());
        push(
            Assumption::CouplingGrowth,
            coupling_ok,
            Severity::Error,
            if q > 1.0 {
                format!("q = {q}, min weight = {w_min}")
            } else {
                format!("need q > 1, got q = {q}")
            },
        );
        push(
            Assumption::RectangularDomain,
            true,
            Severity::Warning,
            format!("{}-dimensional box", self.dim()),
        );
        push(
            Assumption::EvenHamiltonian,
            true,
            Severity::Warning,
            "radial family".into(),
        );
        push(
            Assumption::ExponentGap,
            r > n * (q - 1.0),
            Severity::Warning,
            format!("r = {r}, N (q - 1) = {}", n * (q - 1.0)),
        );
        push(
            Assumption::StrictPositivity,
            m0_min > 0.0 && j_min > 0.0,
            Severity::Warning,
            format!("min m0 = {m0_min}, min j = {j_min}"),
        );
        let bound = n * q / (n * q + q - 2.0);
        push(
            Assumption::UniquenessExponent,
            r > bound,
            Severity::Warning,
            format!("r = {r}, N q / (N q + q - 2) = {bound}"),
        );
        Ok(out)
    }

    /// Fail on the first violated error-level assumption; return the
    /// warnings otherwise.
    pub fn validate(&self) -> Result<Vec<AuditEntry>> {
        if !(self.horizon > 0.0) || self.bounds.is_empty() {
            return Err(MfgError::Config(
                "need a positive horizon and at least one axis".into(),
            ));
        }
        if self.cells.len() != self.dim() {
            return Err(MfgError::Config(format!(
                "{} resolutions for a {}-dimensional domain",
                self.cells.len(),
                self.dim()
            )));
        }
        for t in [
            self.tolerances.gap,
            self.tolerances.residual,
            self.tolerances.mask_delta,
        ]
        .into_iter()
        .flatten()
        {
            if !(t > 0.0) {
                return Err(MfgError::Config(format!("tolerance {t} must be positive")));
            }
        }
        let audit = self.audit()?;
        if let Some(e) = audit
            .iter()
            .find(|e| !e.holds && e.severity == Severity::Error)
        {
            return Err(MfgError::Assumption {
                assumption: e.assumption,
                detail: e.detail.clone(),
            });
        }
        Ok(audit.into_iter().filter(|e| !e.holds).collect())
    }

    /// Validate and sample onto the grid.
    pub fn discretize(&self) -> Result<Problem> {
        let warnings = self.validate()?;
        let grid = self.grid()?;
        let m0 = self.m0.discretize(&grid, 1, "m0")?.into_vec();
        let psi = self.psi.discretize(&grid, 1, "psi")?.into_vec();
        let j = self.influx.discretize(&grid)?;
        let weight = self
            .coupling
            .weight
            .discretize(&grid, grid.levels(), "coupling weight")?;
        Ok(Problem {
            grid,
            ham: self.hamiltonian,
            coupling: self.coupling.family(),
            weight,
            m0,
            psi,
            j,
            derived: self.derived(),
            warnings,
            mask_delta: self.tolerances.mask_delta.unwrap_or(1e-3),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| MfgError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MfgError::Config(e.to_string().replace('\n', " ")))
    }
}

/// `C^{-1}|p|^r - C ≤ H(p) ≤ C(|p|^r + 1)` on log-spaced samples.
fn growth_bounded(ham: &Hamiltonian) -> bool {
    let ratios: Vec<f64> = (-30..=30)
        .map(|i| 10f64.powf(i as f64 / 10.0))
        .map(|p| ham.h(p) / (p.powf(ham.r) + 1.0))
        .collect();
    let lo = ratios[ratios.len() - 10..]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    ratios.iter().all(|v| v.is_finite()) && lo > 0.0 && hi < f64::INFINITY
}

/// Parse, validate and return a spec from a TOML file.
pub fn load_spec(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    let spec = ProblemSpec::from_toml(&text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn write_spec(path: &Path, spec: &ProblemSpec) -> Result<()> {
    std::fs::write(path, spec.to_toml()?)?;
    Ok(())
}

/// A validated instance sampled onto its grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub ham: Hamiltonian,
    pub coupling: Coupling,
    /// `f̃` at every level.
    pub weight: CellField,
    pub m0: Vec<f64>,
    pub psi: Vec<f64>,
    /// Influx on each interval, sampled at its midpoint.
    pub j: BoundaryField,
    pub derived: Derived,
    pub warnings: Vec<AuditEntry>,
    pub mask_delta: f64,
}

impl Problem {
    pub fn coupling_at(&self, level: usize, cell: usize) -> PointCoupling {
        self.coupling.at(self.weight.get(level, cell))
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["constant1d", "oracle8x8", "influx1d", "paperexample2d"];

/// Catalogue of shipped instances.
pub fn builtin_instances() -> Vec<ProblemSpec> {
    BUILTIN_NAMES.iter().map(|n| builtin(n).unwrap()).collect()
}

pub fn builtin(name: &str) -> Option<ProblemSpec> {
    let base = ProblemSpec {
        name: name.to_string(),
        bounds: vec![(0.0, 1.0)],
        horizon: 1.0,
        cells: vec![32],
        time_steps: 32,
        hamiltonian: Hamiltonian::quadratic(),
        coupling: CouplingSpec {
            form: CouplingForm::Shifted,
            q: 2.0,
            weight: FieldSpec::constant(1.0),
        },
        m0: FieldSpec::constant(1.0),
        psi: FieldSpec::constant(0.0),
        influx: InfluxSpec::Constant { value: 0.0 },
        tolerances: Tolerances::default(),
    };
    Some(match name {
        // m ≡ 1, u = T - t solves the system exactly
        "constant1d" => ProblemSpec {
            coupling: CouplingSpec {
                form: CouplingForm::Power,
                q: 2.0,
                weight: FieldSpec::constant(1.0),
            },
            tolerances: Tolerances {
                gap: Some(1e-7),
                residual: Some(1e-10),
                ..Tolerances::default()
            },
            ..base
        },
        "oracle8x8" => ProblemSpec {
            cells: vec![8],
            time_steps: 8,
            influx: InfluxSpec::Constant { value: 0.5 },
            tolerances: Tolerances {
                gap: Some(1e-8),
                residual: Some(1e-10),
                ..Tolerances::default()
            },
            ..base
        },
        "influx1d" => ProblemSpec {
            m0: FieldSpec::Bump {
                base: 0.5,
                amplitude: 1.0,
                center: vec![0.5],
                radius: 0.3,
            },
            psi: FieldSpec::Affine {
                value: 0.0,
                time_slope: 0.0,
                slopes: vec![0.5],
            },
            influx: InfluxSpec::Facets {
                values: vec![1.0, 0.25],
            },
            ..base
        },
        "paperexample2d" => ProblemSpec {
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            cells: vec![16, 16],
            time_steps: 16,
            hamiltonian: Hamiltonian {
                family: HamFamily::PaperExample,
                r: 4.0,
                c: 1.0,
            },
            influx: InfluxSpec::Constant { value: 0.5 },
            ..base
        },
        _ => return None,
    })
}
