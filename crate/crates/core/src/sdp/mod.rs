//! Semidefinite programs over symmetric matrix variables and scalar
//! variables, a conic solver adapter, an independent verifier, and builders
//! for the LMIs used by the synthesis algorithms.
//!
//! Constraint expressions are written as plain functions of variable
//! values; [`SdpModel`] compiles them into affine form F₀ + Σ xₖFₖ by
//! evaluating at the origin and at each unit coordinate, so builders state
//! each inequality exactly as it is printed.

mod lmi;
mod solver;

use std::fmt::Write as _;

pub use lmi::*;
pub use solver::solve;

use crate::matcore::{psd_margin, upper_coordinates};
use crate::{Error, Mat, Result};

/// Absolute tolerance on equality residuals accepted by the verifier.
pub const EQUALITY_TOL: f64 = 1e-7;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatVar(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar(usize);

#[derive(Debug, Clone)]
struct MatSlot {
    name: String,
    size: usize,
    offset: usize,
}

#[derive(Debug, Clone)]
struct ScalarSlot {
    name: String,
    offset: usize,
}

#[derive(Debug, Clone, Default)]
struct Layout {
    mats: Vec<MatSlot>,
    scalars: Vec<ScalarSlot>,
    dim: usize,
}

/// Variable values viewed through a coordinate vector. Symmetric matrix
/// variables are stored by their upper triangle in column-major order.
pub struct Values<'a> {
    layout: &'a Layout,
    x: &'a [f64],
}

impl Values<'_> {
    pub fn mat(&self, v: MatVar) -> Mat {
        let slot = &self.layout.mats[v.0];
        let mut m = Mat::zeros(slot.size, slot.size);
        for (k, (i, j)) in upper_coordinates(slot.size).into_iter().enumerate() {
            let val = self.x[slot.offset + k];
            m[(i, j)] = val;
            m[(j, i)] = val;
        }
        m
    }

    pub fn scalar(&self, v: ScalarVar) -> f64 {
        self.x[self.layout.scalars[v.0].offset]
    }
}

/// F₀ + Σ xₖFₖ with symmetric coefficients; zero terms are omitted.
#[derive(Debug, Clone)]
pub struct AffineMat {
    pub constant: Mat,
    pub terms: Vec<(usize, Mat)>,
}

impl AffineMat {
    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for (k, f) in &self.terms {
            m += f * x[*k];
        }
        m
    }
}

/// c + Σ aₖxₖ.
#[derive(Debug, Clone)]
pub struct AffineScalar {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl AffineScalar {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(k, a)| a * x[*k]).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub name: String,
    pub expr: AffineMat,
}

#[derive(Debug, Clone)]
pub struct Equality {
    pub name: String,
    pub expr: AffineScalar,
}

#[derive(Debug, Clone)]
pub enum Objective {
    Feasibility,
    Minimize(AffineScalar),
}

/// Every block is required to satisfy F(x) ⪰ δI, every equality g(x) = 0.
#[derive(Debug, Clone)]
pub struct SdpModel {
    layout: Layout,
    pub blocks: Vec<LmiBlock>,
    pub equalities: Vec<Equality>,
    pub objective: Objective,
    pub delta: f64,
}

impl SdpModel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Argument(format!("margin δ must be positive, got {delta}")));
        }
        Ok(SdpModel {
            layout: Layout::default(),
            blocks: Vec::new(),
            equalities: Vec::new(),
            objective: Objective::Feasibility,
            delta,
        })
    }

    fn check_open(&self) -> Result<()> {
        if self.blocks.is_empty() && self.equalities.is_empty() {
            Ok(())
        } else {
            Err(Error::Problem(
                "variables must be declared before constraints".into(),
            ))
        }
    }

    pub fn matrix_var(&mut self, name: &str, size: usize) -> Result<MatVar> {
        self.check_open()?;
        self.layout.mats.push(MatSlot {
            name: name.into(),
            size,
            offset: self.layout.dim,
        });
        self.layout.dim += size * (size + 1) / 2;
        Ok(MatVar(self.layout.mats.len() - 1))
    }

    pub fn scalar_var(&mut self, name: &str) -> Result<ScalarVar> {
        self.check_open()?;
        self.layout.scalars.push(ScalarSlot {
            name: name.into(),
            offset: self.layout.dim,
        });
        self.layout.dim += 1;
        Ok(ScalarVar(self.layout.scalars.len() - 1))
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn values<'a>(&'a self, x: &'a [f64]) -> Values<'a> {
        Values {
            layout: &self.layout,
            x,
        }
    }

    fn probe<T>(&self, f: &impl Fn(&Values) -> T) -> (T, Vec<T>) {
        let mut x = vec![0.0; self.layout.dim];
        let base = f(&self.values(&x));
        let units = (0..self.layout.dim)
            .map(|k| {
                x[k] = 1.0;
                let out = f(&self.values(&x));
                x[k] = 0.0;
                out
            })
            .collect();
        (base, units)
    }

    /// Adds the constraint f(values) ⪰ δI for an affine symmetric-valued f.
    pub fn add_lmi(&mut self, name: &str, f: impl Fn(&Values) -> Mat) -> Result<()> {
        let (constant, units) = self.probe(&f);
        let size = constant.nrows();
        if constant.ncols() != size || size == 0 {
            return Err(Error::Dimension(format!("block {name} is not square")));
        }
        let mut terms = Vec::new();
        for (k, u) in units.into_iter().enumerate() {
            let coeff = u - &constant;
            if coeff.shape() != (size, size) {
                return Err(Error::Dimension(format!("block {name} changes shape")));
            }
            if coeff.iter().any(|v| *v != 0.0) {
                terms.push((k, coeff));
            }
        }
        let expr = AffineMat { constant, terms };
        let asym = std::iter::once(&expr.constant)
            .chain(expr.terms.iter().map(|(_, f)| f))
            .map(|f| (f - f.transpose()).amax() / (1.0 + f.amax()))
            .fold(0.0, f64::max);
        if asym > SYMMETRY_TOL {
            return Err(Error::Problem(format!(
                "block {name} is not symmetric (relative asymmetry {asym:.3e})"
            )));
        }
        self.blocks.push(LmiBlock {
            name: name.into(),
            expr,
        });
        Ok(())
    }

    /// Adds the constraints f(values)ₖ = 0 for an affine vector-valued f.
    pub fn add_equalities(&mut self, name: &str, f: impl Fn(&Values) -> Vec<f64>) -> Result<()> {
        let (constant, units) = self.probe(&f);
        for (r, c) in constant.iter().enumerate() {
            let coeffs = units
                .iter()
                .enumerate()
                .filter_map(|(k, u)| {
                    let a = u[r] - c;
                    (a != 0.0).then_some((k, a))
                })
                .collect();
            self.equalities.push(Equality {
                name: format!("{name}[{r}]"),
                expr: AffineScalar {
                    constant: *c,
                    coeffs,
                },
            });
        }
        Ok(())
    }

    pub fn minimize(&mut self, f: impl Fn(&Values) -> f64) {
        let (constant, units) = self.probe(&f);
        let coeffs = units
            .into_iter()
            .enumerate()
            .filter_map(|(k, u)| {
                let a = u - constant;
                (a != 0.0).then_some((k, a))
            })
            .collect();
        self.objective = Objective::Minimize(AffineScalar { constant, coeffs });
    }

    pub fn objective_value(&self, x: &[f64]) -> Option<f64> {
        match &self.objective {
            Objective::Feasibility => None,
            Objective::Minimize(e) => Some(e.eval(x)),
        }
    }

    /// Independent check of a candidate point: smallest eigenvalue of every
    /// block (without the δ shift) and the largest equality residual.
    pub fn verify(&self, x: &[f64]) -> VerifierReport {
        let block_margins: Vec<(String, f64)> = self
            .blocks
            .iter()
            .map(|b| (b.name.clone(), psd_margin(&b.expr.eval(x))))
            .collect();
        let equality_residual = self
            .equalities
            .iter()
            .map(|e| e.expr.eval(x).abs())
            .fold(0.0, f64::max);
        let passed = x.iter().all(|v| v.is_finite())
            && block_margins.iter().all(|(_, m)| *m >= self.delta / 2.0)
            && equality_residual < EQUALITY_TOL;
        VerifierReport {
            block_margins,
            equality_residual,
            delta: self.delta,
            passed,
        }
    }

    /// Plain-text standard-form listing for cross-checking with other
    /// solvers.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sdp dim {} delta {:e}", self.layout.dim, self.delta);
        for m in &self.layout.mats {
            let _ = writeln!(
                out,
                "var {} symmetric {}x{} coords {}..{}",
                m.name,
                m.size,
                m.size,
                m.offset,
                m.offset + m.size * (m.size + 1) / 2
            );
        }
        for s in &self.layout.scalars {
            let _ = writeln!(out, "var {} scalar coord {}", s.name, s.offset);
        }
        match &self.objective {
            Objective::Feasibility => {
                let _ = writeln!(out, "objective feasibility");
            }
            Objective::Minimize(e) => {
                let _ = writeln!(out, "objective minimize constant {:e}", e.constant);
                for (k, a) in &e.coeffs {
                    let _ = writeln!(out, "  x{k} {a:e}");
                }
            }
        }
        for b in &self.blocks {
            let size = b.expr.size();
            let _ = writeln!(out, "lmi {} size {size} terms {}", b.name, b.expr.terms.len());
            write_upper(&mut out, "F0", &b.expr.constant);
            for (k, f) in &b.expr.terms {
                write_upper(&mut out, &format!("F{}", k + 1), f);
            }
        }
        for e in &self.equalities {
            let _ = write!(out, "eq {} constant {:e}", e.name, e.expr.constant);
            for (k, a) in &e.expr.coeffs {
                let _ = write!(out, " x{k}:{a:e}");
            }
            out.push('\n');
        }
        out
    }
}

fn write_upper(out: &mut String, label: &str, m: &Mat) {
    let entries: Vec<String> = upper_coordinates(m.nrows())
        .into_iter()
        .filter(|&(i, j)| m[(i, j)] != 0.0)
        .map(|(i, j)| format!("({i},{j}):{:e}", m[(i, j)]))
        .collect();
    let _ = writeln!(out, "  {label} {}", entries.join(" "));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct VerifierReport {
    pub block_margins: Vec<(String, f64)>,
    pub equality_residual: f64,
    pub delta: f64,
    pub passed: bool,
}

impl VerifierReport {
    pub fn min_margin(&self) -> f64 {
        self.block_margins
            .iter()
            .map(|(_, m)| *m)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Coordinate vector; meaningful only when `status` is optimal.
    pub x: Vec<f64>,
    pub objective: Option<f64>,
    pub report: Option<VerifierReport>,
    pub diagnostics: String,
}

impl SdpSolution {
    pub fn mat(&self, model: &SdpModel, v: MatVar) -> Mat {
        model.values(&self.x).mat(v)
    }

    pub fn scalar(&self, model: &SdpModel, v: ScalarVar) -> f64 {
        model.values(&self.x).scalar(v)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}
