use nalgebra::DVector;

use crate::matcore::{
    care_solve, invert, is_hurwitz, lyap_solve, psd_margin, sym, SpectralInfo,
    DEFAULT_HURWITZ_TOL,
};
use crate::sdp::{
    convexity_matrix, lmi_eta, lmi_pbar_stable, solve, Plant, SdpModel, SdpStatus,
};
use crate::{Error, Mat, Result};

/// Scale factors tried on the Riccati solution, largest first.
const THETAS: [f64; 11] = [0.99, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StableBranchOutcome {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Default)]
pub struct LqrOptions {
    /// Strict-inequality margin; defaults to [`Plant::delta`].
    pub delta: Option<f64>,
    /// Use this P instead of searching for one.
    pub fixed_p: Option<Mat>,
}

#[derive(Debug, Clone)]
pub struct LqrResult {
    pub p: Mat,
    pub pbar: Mat,
    pub eta: f64,
    pub ptilde: Mat,
    pub gain: Mat,
    pub jstar: f64,
    pub jactual: f64,
    pub bound: f64,
    pub epsilon: f64,
    pub branch: Branch,
    pub stable_branch: StableBranchOutcome,
    /// Scale applied to the Riccati solution, when P came from the search.
    pub theta: Option<f64>,
    pub convexity_margin: f64,
    pub spectrum: SpectralInfo,
    pub delta: f64,
}

/// K = −½R⁻¹Bᵀ(P+Pᵀ).
pub fn gain_from_p(pl: &Plant, p: &Mat) -> Result<Mat> {
    Ok(-0.5 * invert(&pl.r, "R")? * pl.b.transpose() * (p + p.transpose()))
}

fn closed_loop(pl: &Plant, p: &Mat) -> Result<(Mat, Mat)> {
    let k = gain_from_p(pl, p)?;
    Ok((&pl.a + &pl.b * &k, k))
}

fn quad(x0: &DVector<f64>, m: &Mat) -> f64 {
    (x0.transpose() * m * x0)[(0, 0)]
}

/// Infinite-horizon cost x₀ᵀYx₀ of the law u = −½R⁻¹Bᵀ(P+Pᵀ)x, with Y
/// solving (A+BK)ᵀY + Y(A+BK) + Q + KᵀRK = 0.
pub fn cost_of_gain_single(pl: &Plant, p: &Mat, x0: &DVector<f64>) -> Result<f64> {
    check_x0(pl, x0)?;
    let (acl, k) = closed_loop(pl, p)?;
    let (ok, info) = is_hurwitz(&acl, DEFAULT_HURWITZ_TOL)?;
    if !ok {
        return Err(Error::NotHurwitz {
            max_real_part: info.max_real_part,
        });
    }
    let y = lyap_solve(&acl, &(&pl.q + k.transpose() * &pl.r * &k))?;
    Ok(quad(x0, &y))
}

fn check_x0(pl: &Plant, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != pl.n() {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            pl.n()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("x0"));
    }
    Ok(())
}

fn acceptable(pl: &Plant, p: &Mat, delta: f64) -> Result<Option<f64>> {
    let margin = psd_margin(&convexity_matrix(pl, p));
    if margin < delta {
        return Ok(None);
    }
    let (acl, _) = closed_loop(pl, p)?;
    let (ok, _) = is_hurwitz(&acl, DEFAULT_HURWITZ_TOL)?;
    Ok(ok.then_some(margin))
}

/// Largest-margin symmetric P for the convexity LMI.
fn max_margin_p(pl: &Plant, delta: f64) -> Result<Option<Mat>> {
    let mut model = SdpModel::new(delta)?;
    let p = model.matrix_var("P", pl.n())?;
    let t = model.scalar_var("t")?;
    let size = pl.n() + pl.m();
    model.add_lmi("convexity", |v| {
        convexity_matrix(pl, &v.mat(p)) - Mat::identity(size, size) * v.scalar(t)
    })?;
    model.minimize(|v| -v.scalar(t));
    let sol = solve(&model)?;
    Ok(sol.is_optimal().then(|| sol.mat(&model, p)))
}

fn choose_p(pl: &Plant, pr: &Mat, opts: &LqrOptions, delta: f64) -> Result<(Mat, Option<f64>, f64)> {
    if let Some(p) = &opts.fixed_p {
        if p.shape() != (pl.n(), pl.n()) {
            return Err(Error::Dimension(format!(
                "fixed P is {:?}, expected {n}x{n}",
                p.shape(),
                n = pl.n()
            )));
        }
        let p = sym(p);
        return match acceptable(pl, &p, delta)? {
            Some(margin) => Ok((p, None, margin)),
            None => Err(Error::NoStabilizingP),
        };
    }
    for theta in THETAS {
        let p = pr * theta;
        if let Some(margin) = acceptable(pl, &p, delta)? {
            return Ok((p, Some(theta), margin));
        }
    }
    if let Some(p) = max_margin_p(pl, delta)? {
        if let Some(margin) = acceptable(pl, &p, delta)? {
            return Ok((p, None, margin));
        }
    }
    Err(Error::NoStabilizingP)
}

/// Solves the stable-branch inequality for a fixed P. Among feasible P̄ the
/// one minimizing x₀ᵀP̄x₀ is returned.
pub fn stable_branch(
    pl: &Plant,
    p: &Mat,
    x0: &DVector<f64>,
    delta: f64,
) -> Result<(StableBranchOutcome, Option<Mat>)> {
    let mut model = SdpModel::new(delta)?;
    let pbar = model.matrix_var("P_bar", pl.n())?;
    lmi_pbar_stable(&mut model, pl, p, pbar)?;
    model.minimize(|v| quad(x0, &v.mat(pbar)));
    let sol = solve(&model)?;
    Ok(match sol.status {
        SdpStatus::Optimal => (StableBranchOutcome::Feasible, Some(sol.mat(&model, pbar))),
        SdpStatus::Infeasible => (StableBranchOutcome::Infeasible, None),
        SdpStatus::NumericalFailure => (StableBranchOutcome::NumericalFailure, None),
    })
}

pub fn algorithm1(pl: &Plant, x0: &DVector<f64>, opts: &LqrOptions) -> Result<LqrResult> {
    check_x0(pl, x0)?;
    let delta = opts.delta.unwrap_or_else(|| pl.delta());
    let pr = care_solve(&pl.a, &pl.b, &pl.q, &pl.r)?;
    let jstar = quad(x0, &pr);
    let (p, theta, convexity_margin) = choose_p(pl, &pr, opts, delta)?;

    let (acl, gain) = closed_loop(pl, &p)?;
    let (_, spectrum) = is_hurwitz(&acl, DEFAULT_HURWITZ_TOL)?;
    let n = pl.n();
    let ptilde = lyap_solve(&acl, &Mat::identity(n, n))?;
    let (a_stable, _) = is_hurwitz(&pl.a, DEFAULT_HURWITZ_TOL)?;

    let (stable_outcome, stable_pbar) = stable_branch(pl, &p, x0, delta)?;
    let (branch, pbar, eta) = match (a_stable, stable_pbar) {
        (true, Some(pbar)) => (Branch::Stable, pbar, 0.0),
        _ => {
            let mut model = SdpModel::new(delta)?;
            let pbar = model.matrix_var("P_bar", n)?;
            let eta = model.scalar_var("eta")?;
            lmi_eta(&mut model, pl, &p, pbar, eta)?;
            model.minimize(|v| v.scalar(eta));
            let sol = solve(&model)?;
            match sol.status {
                SdpStatus::Optimal => (
                    Branch::Unstable,
                    sol.mat(&model, pbar),
                    sol.scalar(&model, eta),
                ),
                SdpStatus::Infeasible => return Err(Error::Infeasible(sol.diagnostics)),
                SdpStatus::NumericalFailure => return Err(Error::Solver(sol.diagnostics)),
            }
        }
    };

    let bound = quad(x0, &(&pbar + &ptilde * eta));
    let jactual = cost_of_gain_single(pl, &p, x0)?;
    let scale = 1.0 + jstar.abs();
    if jactual < jstar - 1e-6 * scale || jactual >= bound {
        return Err(Error::Consistency(format!(
            "certificate violated: J* = {jstar}, J = {jactual}, bound = {bound}"
        )));
    }
    Ok(LqrResult {
        p,
        pbar,
        eta,
        ptilde,
        gain,
        jstar,
        jactual,
        bound,
        epsilon: bound - jstar,
        branch,
        stable_branch: stable_outcome,
        theta,
        convexity_margin,
        spectrum,
        delta,
    })
}
