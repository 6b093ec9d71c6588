use crate::matcore::{care_solve, invert, kron, symmetric_eigenvalues};
use crate::netmodel::{build_error_system, gain_cost, ke_from_kx, MasProblem};
use crate::{Error, Mat, Result};

/// Tolerance constant of the baseline design equation.
const BASELINE_EPS: f64 = 0.001;

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub lambda2: f64,
    pub lambda_max: f64,
    pub c: f64,
    /// Solution of the scaled Riccati design equation (a scalar p for
    /// single-integrator agents).
    pub p: Mat,
    pub kx: Mat,
    pub ke: Mat,
    pub cost: f64,
    /// Radius of the admissible initial-condition ball for the supplied γ.
    pub radius: Option<f64>,
    pub x0_norm: f64,
}

/// Laplacian-scaled protocol kx = −c·L ⊗ (R⁻¹BᵀP) with c = 2/(λ₂+λ_N) and P
/// solving AᵀP + PA + λ_N·Q + εI − (2cλ_N − c²λ_N²)·PBR⁻¹BᵀP = 0.
pub fn jiao_baseline(p: &MasProblem, gamma: Option<f64>) -> Result<BaselineResult> {
    if !p.is_homogeneous() {
        return Err(Error::Problem(
            "baseline requires identical input matrices".into(),
        ));
    }
    let mut eig = symmetric_eigenvalues(&p.topology().laplacian());
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let (lambda2, lambda_max) = (eig[1], eig[eig.len() - 1]);
    let c = 2.0 / (lambda2 + lambda_max);
    let beta = 2.0 * c * lambda_max - c * c * lambda_max * lambda_max;

    let n = p.n();
    let b = &p.b()[0];
    let q = p.q() * lambda_max + Mat::identity(n, n) * BASELINE_EPS;
    let pmat = care_solve(p.a(), &(b * beta.sqrt()), &q, p.r())?;

    let f = invert(p.r(), "R")? * b.transpose() * &pmat;
    let kx = -c * kron(&p.topology().laplacian(), &f);
    let ke = ke_from_kx(&kx, n, p.m(), p.agents())?;
    let es = build_error_system(p)?;
    let cost = gain_cost(&es, &ke)?.cost;

    let top = symmetric_eigenvalues(&pmat)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let radius = gamma.map(|g| (g / top).sqrt());
    Ok(BaselineResult {
        lambda2,
        lambda_max,
        c,
        p: pmat,
        kx,
        ke,
        cost,
        radius,
        x0_norm: p.stacked_x0().norm(),
    })
}
