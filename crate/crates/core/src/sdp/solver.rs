//! Clarabel adapter. Equalities are eliminated first (x = xₚ + Nz), the
//! remaining blocks become PSD-triangle cones in z, and the returned point
//! is accepted only after [`SdpModel::verify`].

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DVector;

use super::{Objective, SdpModel, SdpSolution, SdpStatus, EQUALITY_TOL};
use crate::matcore::{null_space, range_basis, upper_coordinates};
use crate::{Error, Mat, Result};

const RANK_TOL: f64 = 1e-12;
const SOLVER_TOL: f64 = 1e-9;
const MAX_ITER: u32 = 500;

struct Reduced {
    xp: DVector<f64>,
    basis: Mat,
}

/// Particular solution of minimum norm and a null-space basis of the
/// equality system, or a description of its inconsistency.
fn eliminate(model: &SdpModel) -> std::result::Result<Reduced, String> {
    let dim = model.dim();
    if model.equalities.is_empty() {
        return Ok(Reduced {
            xp: DVector::zeros(dim),
            basis: Mat::identity(dim, dim),
        });
    }
    let neq = model.equalities.len();
    let mut e = Mat::zeros(neq, dim);
    let mut rhs = DVector::zeros(neq);
    for (r, eq) in model.equalities.iter().enumerate() {
        for &(k, a) in &eq.expr.coeffs {
            e[(r, k)] = a;
        }
        rhs[r] = -eq.expr.constant;
    }
    let u = range_basis(&e.transpose(), RANK_TOL);
    let xp = if u.ncols() == 0 {
        DVector::zeros(dim)
    } else {
        let eu = &e * &u;
        let qr = eu.col_piv_qr();
        let q = qr.q();
        let r = qr.r();
        let rank = u.ncols();
        let r_sq = r.view((0, 0), (rank, rank)).clone_owned();
        let mut y = r_sq
            .solve_upper_triangular(&(q.transpose() * &rhs))
            .ok_or_else(|| "singular reduced equality system".to_string())?;
        qr.p().inv_permute_rows(&mut y);
        &u * y
    };
    let residual = (&e * &xp - &rhs).amax();
    if residual > EQUALITY_TOL / 10.0 {
        return Err(format!(
            "equality constraints are inconsistent (least-squares residual {residual:.3e})"
        ));
    }
    Ok(Reduced {
        xp,
        basis: null_space(&e, RANK_TOL),
    })
}

fn svec(m: &Mat) -> Vec<f64> {
    upper_coordinates(m.nrows())
        .into_iter()
        .map(|(i, j)| {
            if i == j {
                m[(i, i)]
            } else {
                std::f64::consts::SQRT_2 * m[(i, j)]
            }
        })
        .collect()
}

fn finish(model: &SdpModel, x: Vec<f64>, diagnostics: String) -> SdpSolution {
    let report = model.verify(&x);
    let status = if report.passed {
        SdpStatus::Optimal
    } else {
        SdpStatus::NumericalFailure
    };
    let diagnostics = if report.passed {
        diagnostics
    } else {
        format!(
            "{diagnostics}; verifier rejected point (min margin {:.3e}, delta {:.3e}, equality residual {:.3e})",
            report.min_margin(),
            report.delta,
            report.equality_residual
        )
    };
    SdpSolution {
        status,
        objective: model.objective_value(&x),
        x,
        report: Some(report),
        diagnostics,
    }
}

fn rejected(model: &SdpModel, status: SdpStatus, diagnostics: String) -> SdpSolution {
    SdpSolution {
        status,
        x: vec![f64::NAN; model.dim()],
        objective: None,
        report: None,
        diagnostics,
    }
}

pub fn solve(model: &SdpModel) -> Result<SdpSolution> {
    let reduced = match eliminate(model) {
        Ok(r) => r,
        Err(msg) => return Ok(rejected(model, SdpStatus::Infeasible, msg)),
    };
    let nz = reduced.basis.ncols();
    if nz == 0 {
        // The equalities pin the point; it is either feasible or not.
        let x: Vec<f64> = reduced.xp.iter().copied().collect();
        let report = model.verify(&x);
        if report.passed {
            return Ok(finish(model, x, "point fixed by equalities".into()));
        }
        return Ok(rejected(
            model,
            SdpStatus::Infeasible,
            format!(
                "unique point allowed by the equalities violates the blocks (min margin {:.3e})",
                report.min_margin()
            ),
        ));
    }

    let xp: Vec<f64> = reduced.xp.iter().copied().collect();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    for block in &model.blocks {
        let size = block.expr.size();
        let g0 = block.expr.eval(&xp) - Mat::identity(size, size) * model.delta;
        let offset = b.len();
        b.extend(svec(&g0));
        for j in 0..nz {
            let mut g = Mat::zeros(size, size);
            for (k, f) in &block.expr.terms {
                let w = reduced.basis[(*k, j)];
                if w != 0.0 {
                    g += f * w;
                }
            }
            for (r, v) in svec(&g).into_iter().enumerate() {
                if v != 0.0 {
                    rows.push(offset + r);
                    cols.push(j);
                    vals.push(-v);
                }
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(size));
    }
    if cones.is_empty() {
        return Err(Error::Problem("model has no LMI blocks".into()));
    }

    let q: Vec<f64> = match &model.objective {
        Objective::Feasibility => vec![0.0; nz],
        Objective::Minimize(e) => {
            let mut a = DVector::zeros(model.dim());
            for &(k, v) in &e.coeffs {
                a[k] = v;
            }
            (reduced.basis.transpose() * a).iter().copied().collect()
        }
    };

    let a = CscMatrix::new_from_triplets(b.len(), nz, rows, cols, vals);
    let p = CscMatrix::<f64>::zeros((nz, nz));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(MAX_ITER)
        .tol_gap_abs(SOLVER_TOL)
        .tol_gap_rel(SOLVER_TOL)
        .tol_feas(SOLVER_TOL)
        .max_threads(1)
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
    solver.solve();
    let status = solver.solution.status;
    let diagnostics = format!(
        "clarabel {status:?} after {} iterations",
        solver.solution.iterations
    );
    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let z = DVector::from_column_slice(&solver.solution.x);
            let x = (&reduced.xp + &reduced.basis * z).iter().copied().collect();
            Ok(finish(model, x, diagnostics))
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Ok(rejected(model, SdpStatus::Infeasible, diagnostics))
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Ok(rejected(
            model,
            SdpStatus::NumericalFailure,
            format!("{diagnostics} (objective unbounded below)"),
        )),
        _ => Ok(rejected(model, SdpStatus::NumericalFailure, diagnostics)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assert_close;

    #[test]
    fn scalar_lower_bound() {
        let mut m = SdpModel::new(1e-9).unwrap();
        let eta = m.scalar_var("eta").unwrap();
        m.add_lmi("eta>=1", |v| Mat::from_element(1, 1, v.scalar(eta) - 1.0))
            .unwrap();
        m.minimize(|v| v.scalar(eta));
        let sol = solve(&m).unwrap();
        assert!(sol.is_optimal(), "{}", sol.diagnostics);
        assert_close!(sol.scalar(&m, eta), 1.0, 1e-6);
    }

    #[test]
    fn triangle_scaling_convention() {
        // [[x, 1], [1, 2x]] ⪰ 0 ⇔ x ≥ 1/√2.
        let mut m = SdpModel::new(1e-9).unwrap();
        let x = m.scalar_var("x").unwrap();
        m.add_lmi("b", |v| {
            let x = v.scalar(x);
            Mat::from_row_slice(2, 2, &[x, 1.0, 1.0, 2.0 * x])
        })
        .unwrap();
        m.minimize(|v| v.scalar(x));
        let sol = solve(&m).unwrap();
        assert!(sol.is_optimal(), "{}", sol.diagnostics);
        assert_close!(sol.scalar(&m, x), 0.5f64.sqrt(), 1e-6);
    }

    #[test]
    fn matrix_variable_with_equalities() {
        // min tr(P) s.t. P ⪰ I, P(0,1) = 0.3: optimum tr = 2 + 0.6.
        let mut m = SdpModel::new(1e-9).unwrap();
        let p = m.matrix_var("P", 2).unwrap();
        m.add_lmi("P>=I", |v| v.mat(p) - Mat::identity(2, 2)).unwrap();
        m.add_equalities("offdiag", |v| vec![v.mat(p)[(0, 1)] - 0.3])
            .unwrap();
        m.minimize(|v| v.mat(p).trace());
        let sol = solve(&m).unwrap();
        assert!(sol.is_optimal(), "{}", sol.diagnostics);
        assert_close!(sol.objective.unwrap(), 2.6, 1e-6);
        assert_close!(sol.mat(&m, p)[(1, 0)], 0.3, 1e-9);
    }

    #[test]
    fn infeasible_status() {
        let mut m = SdpModel::new(1e-9).unwrap();
        let x = m.scalar_var("x").unwrap();
        m.add_lmi("x>=1", |v| Mat::from_element(1, 1, v.scalar(x) - 1.0))
            .unwrap();
        m.add_lmi("x<=0", |v| Mat::from_element(1, 1, -v.scalar(x)))
            .unwrap();
        assert_eq!(solve(&m).unwrap().status, SdpStatus::Infeasible);

        let mut m = SdpModel::new(1e-9).unwrap();
        let x = m.scalar_var("x").unwrap();
        m.add_lmi("x>=1", |v| Mat::from_element(1, 1, v.scalar(x) - 1.0))
            .unwrap();
        m.add_equalities("clash", |v| vec![v.scalar(x) - 1.0, v.scalar(x) - 2.0])
            .unwrap();
        let sol = solve(&m).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert!(sol.diagnostics.contains("inconsistent"));
    }

    #[test]
    fn deterministic_and_dumpable() {
        let mut m = SdpModel::new(1e-6).unwrap();
        let p = m.matrix_var("P", 3).unwrap();
        let eta = m.scalar_var("eta").unwrap();
        let a = Mat::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., -1., -2., -1.]);
        m.add_lmi("lyap", |v| {
            let p = v.mat(p);
            -(a.transpose() * &p + &p * &a) + Mat::identity(3, 3) * v.scalar(eta)
        })
        .unwrap();
        m.add_lmi("P", |v| v.mat(p) - Mat::identity(3, 3)).unwrap();
        m.add_lmi("cap", |v| Mat::identity(3, 3) * 10.0 - v.mat(p)).unwrap();
        m.minimize(|v| v.scalar(eta));
        let s1 = solve(&m).unwrap();
        let s2 = solve(&m).unwrap();
        assert!(s1.is_optimal(), "{}", s1.diagnostics);
        assert_eq!(s1.x, s2.x);
        let dump = m.dump();
        assert!(dump.contains("var P symmetric 3x3 coords 0..6"));
        assert!(dump.contains("lmi lyap size 3"));
    }

    #[test]
    fn variables_after_constraints_rejected() {
        let mut m = SdpModel::new(1e-6).unwrap();
        let x = m.scalar_var("x").unwrap();
        m.add_lmi("x", |v| Mat::from_element(1, 1, v.scalar(x))).unwrap();
        assert!(m.scalar_var("y").is_err());
        assert!(SdpModel::new(0.0).is_err());
    }
}
