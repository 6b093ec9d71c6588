use super::{MatVar, ScalarVar, SdpModel};
use crate::matcore::{ensure_finite, max_abs, psd_margin, strict_margin, sym};
use crate::netmodel::ErrorSystem;
use crate::structure::PConstraintSet;
use crate::{Error, Mat, Result};

/// Single-plant data (A, B, Q, R) for the quadratic regulator.
#[derive(Debug, Clone)]
pub struct Plant {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
}

impl Plant {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "A is {:?}, B is {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let m = b.ncols();
        if q.shape() != (n, n) || r.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "Q must be {n}x{n} and R {m}x{m}, got {:?} and {:?}",
                q.shape(),
                r.shape()
            )));
        }
        for (mat, what) in [(&a, "A"), (&b, "B"), (&q, "Q"), (&r, "R")] {
            ensure_finite(mat, what)?;
        }
        for (mat, what) in [(&q, "Q"), (&r, "R")] {
            if (mat - mat.transpose()).amax() > 1e-10 * (1.0 + max_abs(mat)) {
                return Err(Error::Problem(format!("{what} is not symmetric")));
            }
        }
        if psd_margin(&q) < -1e-10 * (1.0 + max_abs(&q)) {
            return Err(Error::Problem("Q is not positive semidefinite".into()));
        }
        if psd_margin(&r) <= 0.0 {
            return Err(Error::Problem("R is not positive definite".into()));
        }
        let (q, r) = (sym(&q), sym(&r));
        Ok(Plant { a, b, q, r })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Default strict margin for this plant's LMIs.
    pub fn delta(&self) -> f64 {
        strict_margin(&[&self.a, &self.b, &self.q, &self.r])
    }
}

fn gamma(a: &Mat, p: &Mat, q: &Mat) -> Mat {
    a.transpose() * p + p * a + q
}

fn two_by_two(tl: &Mat, tr: &Mat, br: &Mat) -> Mat {
    let (n, m) = (tl.nrows(), br.nrows());
    let mut out = Mat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(tl);
    out.view_mut((0, n), (n, m)).copy_from(tr);
    out.view_mut((n, 0), (m, n)).copy_from(&tr.transpose());
    out.view_mut((n, n), (m, m)).copy_from(br);
    out
}

/// [[Γ(P), (P+Pᵀ)B], [Bᵀ(P+Pᵀ), 4R]].
pub fn convexity_matrix(pl: &Plant, p: &Mat) -> Mat {
    let ps = p + p.transpose();
    two_by_two(&gamma(&pl.a, p, &pl.q), &(&ps * &pl.b), &(&pl.r * 4.0))
}

/// [[−Γ(P̄)+ηI, (P+Pᵀ−P̄−P̄ᵀ)B], [·, 4R]]; η = 0 gives the stable-branch
/// block.
pub fn shifted_pbar_matrix(pl: &Plant, p: &Mat, pbar: &Mat, eta: f64) -> Mat {
    let n = pl.n();
    let tl = -gamma(&pl.a, pbar, &pl.q) + Mat::identity(n, n) * eta;
    let off = (p + p.transpose() - pbar - pbar.transpose()) * &pl.b;
    two_by_two(&tl, &off, &(&pl.r * 4.0))
}

pub fn lmi_convexity(model: &mut SdpModel, pl: &Plant, p: MatVar) -> Result<()> {
    model.add_lmi("convexity", |v| convexity_matrix(pl, &v.mat(p)))
}

/// Stable-branch block for a fixed P, plus P̄ ≻ 0.
pub fn lmi_pbar_stable(model: &mut SdpModel, pl: &Plant, p: &Mat, pbar: MatVar) -> Result<()> {
    model.add_lmi("stable", |v| shifted_pbar_matrix(pl, p, &v.mat(pbar), 0.0))?;
    model.add_lmi("pbar", |v| v.mat(pbar))
}

/// Shifted block for a fixed P, plus P̄ ≻ 0.
pub fn lmi_eta(
    model: &mut SdpModel,
    pl: &Plant,
    p: &Mat,
    pbar: MatVar,
    eta: ScalarVar,
) -> Result<()> {
    model.add_lmi("shifted", |v| {
        shifted_pbar_matrix(pl, p, &v.mat(pbar), v.scalar(eta))
    })?;
    model.add_lmi("pbar", |v| v.mat(pbar))
}

/// Γ̄(P) = ÃᵀP + PÃ + Q̃.
pub fn gamma_bar(es: &ErrorSystem, p: &Mat) -> Mat {
    gamma(&es.atil, p, &es.qtil)
}

/// [[Γ̄(P̂), P̂B̃], [B̃ᵀP̂, R̂]].
pub fn consensus_cost_matrix(es: &ErrorSystem, phat: &Mat) -> Mat {
    two_by_two(&gamma_bar(es, phat), &(phat * &es.btil), &es.rhat)
}

/// [[−Γ̄(P̄̂)+ηI, (P̂−P̄̂)B̃], [·, R̂]].
pub fn consensus_shift_matrix(es: &ErrorSystem, phat: &Mat, pbar: &Mat, eta: f64) -> Mat {
    let ne = es.atil.nrows();
    let tl = -gamma_bar(es, pbar) + Mat::identity(ne, ne) * eta;
    two_by_two(&tl, &((phat - pbar) * &es.btil), &es.rhat)
}

/// Default strict margin for the network LMIs.
pub fn consensus_delta(es: &ErrorSystem) -> f64 {
    strict_margin(&[&es.atil, &es.btil, &es.qtil, &es.rhat])
}

#[derive(Debug, Clone)]
pub struct ConsensusProgram {
    pub model: SdpModel,
    pub phat: MatVar,
    pub pbar: MatVar,
    pub eta: ScalarVar,
}

fn consensus_skeleton(es: &ErrorSystem, delta: f64) -> Result<ConsensusProgram> {
    let ne = es.atil.nrows();
    let mut model = SdpModel::new(delta)?;
    let phat = model.matrix_var("P_hat", ne)?;
    let pbar = model.matrix_var("P_bar_hat", ne)?;
    let eta = model.scalar_var("eta")?;
    model.add_lmi("cost", |v| consensus_cost_matrix(es, &v.mat(phat)))?;
    model.add_lmi("shifted", |v| {
        consensus_shift_matrix(es, &v.mat(phat), &v.mat(pbar), v.scalar(eta))
    })?;
    model.add_lmi("pbar", |v| v.mat(pbar))?;
    model.minimize(|v| v.scalar(eta));
    Ok(ConsensusProgram {
        model,
        phat,
        pbar,
        eta,
    })
}

/// Minimum-η program with P̂ restricted to the structured set.
pub fn lmi_consensus(
    es: &ErrorSystem,
    cons: &PConstraintSet,
    delta: f64,
) -> Result<ConsensusProgram> {
    if cons.size != es.atil.nrows() {
        return Err(Error::Dimension(
            "constraint set does not match the error system".into(),
        ));
    }
    let mut prog = consensus_skeleton(es, delta)?;
    let phat = prog.phat;
    prog.model.add_equalities("structure", |v| {
        let p = v.mat(phat);
        cons.functionals
            .iter()
            .map(|g| g.component_mul(&p).sum())
            .collect()
    })?;
    Ok(prog)
}

/// Minimum-η program with P̂ tied to a given gain through B̃ᵀP̂ = −R̂K̂ᵉ.
pub fn lmi_bound_given_gain(es: &ErrorSystem, ke: &Mat, delta: f64) -> Result<ConsensusProgram> {
    if ke.shape() != (es.btil.ncols(), es.atil.ncols()) {
        return Err(Error::Dimension(format!(
            "ke is {:?}, expected {:?}",
            ke.shape(),
            (es.btil.ncols(), es.atil.ncols())
        )));
    }
    let mut prog = consensus_skeleton(es, delta)?;
    let phat = prog.phat;
    let target = -&es.rhat * ke;
    prog.model.add_equalities("gain", |v| {
        let lhs = es.btil.transpose() * v.mat(phat);
        (lhs - &target).iter().copied().collect()
    })?;
    Ok(prog)
}
