use crate::matcore::{invert, is_hurwitz, lyap_solve, SpectralInfo, DEFAULT_HURWITZ_TOL};
use crate::netmodel::{
    build_error_system, check_sparsity, gain_cost, ke_from_kx, kx_from_ke, ErrorSystem,
    MasProblem,
};
use crate::sdp::{
    consensus_delta, lmi_bound_given_gain, lmi_consensus, solve, ConsensusProgram, SdpStatus,
    VerifierReport,
};
use crate::structure::{
    admissible_subspace, derive_p_constraints, structure_residual, validate_gain_structure,
    PConstraintSet,
};
use crate::{Error, Mat, Result};

#[derive(Debug, Clone)]
pub struct ConsensusOptions {
    /// Strict-inequality margin; defaults to [`consensus_delta`].
    pub delta: Option<f64>,
    /// Synthesis only: after minimizing η, re-solve with η held at its
    /// optimum and maximize tr(P̂). The minimum-η face is usually large and
    /// its interior-point centre tends to give a weak gain.
    pub refine: bool,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        ConsensusOptions { delta: None, refine: true }
    }
}

#[derive(Debug, Clone)]
pub struct ConsensusResult {
    pub error_system: ErrorSystem,
    pub phat: Mat,
    pub pbar: Mat,
    pub eta: f64,
    pub ptilde_e: Mat,
    pub ke: Mat,
    pub kx: Mat,
    pub gamma: f64,
    pub cost: f64,
    /// Lyapunov matrix of the closed-loop cost, Ĵ = e₀ᵀYe₀.
    pub y: Mat,
    pub spectrum: SpectralInfo,
    pub structure_ok: bool,
    pub structure_residual: f64,
    pub lmi: VerifierReport,
    pub constraint_count: usize,
    pub delta: f64,
}

fn solve_program(
    prog: &ConsensusProgram,
    what: &str,
) -> Result<(Mat, Mat, f64, VerifierReport)> {
    let sol = solve(&prog.model)?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "{what} ({} equality constraints on {} variables): {}",
                prog.model.equalities.len(),
                prog.model.dim(),
                sol.diagnostics
            )))
        }
        SdpStatus::NumericalFailure => return Err(Error::Solver(sol.diagnostics)),
    }
    let report = sol.report.clone().expect("optimal solutions carry a report");
    Ok((
        sol.mat(&prog.model, prog.phat),
        sol.mat(&prog.model, prog.pbar),
        sol.scalar(&prog.model, prog.eta),
        report,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    p: &MasProblem,
    es: ErrorSystem,
    phat: Mat,
    pbar: Mat,
    eta: f64,
    ke: Mat,
    kx: Mat,
    lmi: VerifierReport,
    constraint_count: usize,
    delta: f64,
) -> Result<ConsensusResult> {
    let acl = &es.atil + &es.btil * &ke;
    let ne = es.atil.nrows();
    let ptilde_e = lyap_solve(&acl, &Mat::identity(ne, ne))?;
    let gamma = (es.e0.transpose() * (&pbar + &ptilde_e * eta) * &es.e0)[(0, 0)];
    let cost = gain_cost(&es, &ke)?;
    let sub = admissible_subspace(p.topology(), es.n, es.m)?;
    let residual = structure_residual(&ke, &sub);
    let structure_ok = validate_gain_structure(&ke, &sub);
    if !(cost.cost < gamma) {
        return Err(Error::Consistency(format!(
            "cost {} is not below the bound {gamma}",
            cost.cost
        )));
    }
    Ok(ConsensusResult {
        phat,
        pbar,
        eta,
        ptilde_e,
        ke,
        kx,
        gamma,
        cost: cost.cost,
        y: cost.y,
        spectrum: cost.spectrum,
        structure_ok,
        structure_residual: residual,
        lmi,
        constraint_count,
        delta,
        error_system: es,
    })
}

/// Structured protocol synthesis: minimum-η program over P̂ in the
/// structured set, gain K̂ᵉ = −R̂⁻¹B̃ᵀP̂, and bound γ.
pub fn algorithm2(p: &MasProblem, opts: &ConsensusOptions) -> Result<ConsensusResult> {
    let es = build_error_system(p)?;
    let sub = admissible_subspace(p.topology(), es.n, es.m)?;
    let cons = derive_p_constraints(&es, &sub)?;
    let delta = opts.delta.unwrap_or_else(|| consensus_delta(&es));
    let prog = lmi_consensus(&es, &cons, delta)?;
    let (phat, pbar, eta, report) = solve_program(&prog, "structured synthesis")?;
    let count = cons.functionals.len();

    if opts.refine {
        if let Some((phat, pbar, eta_r, report)) = refine(&es, &cons, delta, eta) {
            let ke = gain_from_phat(&es, &phat)?;
            if let Ok(kx) = stabilizing_kx(p, &es, &ke) {
                let refined =
                    assemble(p, es.clone(), phat, pbar, eta_r, ke, kx, report, count, delta);
                if refined.is_ok() {
                    return refined;
                }
            }
        }
    }

    let ke = gain_from_phat(&es, &phat)?;
    let kx = stabilizing_kx(p, &es, &ke)?;
    assemble(p, es, phat, pbar, eta, ke, kx, report, count, delta)
}

fn gain_from_phat(es: &ErrorSystem, phat: &Mat) -> Result<Mat> {
    Ok(-invert(&es.rhat, "R̂")? * es.btil.transpose() * phat)
}

fn stabilizing_kx(p: &MasProblem, es: &ErrorSystem, ke: &Mat) -> Result<Mat> {
    let acl = &es.atil + &es.btil * ke;
    let (ok, info) = is_hurwitz(&acl, DEFAULT_HURWITZ_TOL)?;
    if !ok {
        return Err(Error::NonStabilizingGain {
            max_real_part: info.max_real_part,
        });
    }
    kx_from_ke(ke, es.n, es.m, p.topology())
}

/// Second stage: same program with η capped just above `eta_star`,
/// maximizing tr(P̂). `None` when the stage fails or is unbounded.
fn refine(
    es: &ErrorSystem,
    cons: &PConstraintSet,
    delta: f64,
    eta_star: f64,
) -> Option<(Mat, Mat, f64, VerifierReport)> {
    let mut prog = lmi_consensus(es, cons, delta).ok()?;
    let cap = eta_star + 1e-6 * (1.0 + eta_star.abs()) + 2.0 * delta;
    let (eta, phat) = (prog.eta, prog.phat);
    prog.model
        .add_lmi("eta_cap", |v| Mat::from_element(1, 1, cap - v.scalar(eta)))
        .ok()?;
    prog.model.minimize(|v| -v.mat(phat).trace());
    let out = solve_program(&prog, "refinement").ok()?;
    out.3.passed.then_some(out)
}

/// Cost bound for a given diffusive protocol K̂ˣ̂.
pub fn algorithm3(p: &MasProblem, kx: &Mat, opts: &ConsensusOptions) -> Result<ConsensusResult> {
    let es = build_error_system(p)?;
    let ke = ke_from_kx(kx, es.n, es.m, es.agents)?;
    check_sparsity(kx, es.n, es.m, p.topology())?;
    // Fails with NoConsensus when the closed loop is not Hurwitz.
    gain_cost(&es, &ke)?;
    let delta = opts.delta.unwrap_or_else(|| consensus_delta(&es));
    let prog = lmi_bound_given_gain(&es, &ke, delta)?;
    let (phat, pbar, eta, report) = solve_program(&prog, "bound for given gain")?;
    let count = prog.model.equalities.len();
    assemble(p, es, phat, pbar, eta, ke, kx.clone(), report, count, delta)
}
