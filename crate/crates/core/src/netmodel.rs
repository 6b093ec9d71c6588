//! Multiagent problems and their error-coordinate regulation form.
//!
//! The error vector stacks consecutive differences eᵢ = xᵢ − xᵢ₊₁ in the
//! user-supplied agent order. Stacked gains come in two coordinate systems:
//! `ke` maps e to the stacked input (mN × n(N−1)), `kx` maps the stacked
//! state x̂ to the stacked input (mN × nN).

use nalgebra::DVector;

use crate::graph::{delta, Topology};
use crate::matcore::{
    blkdiag, ensure_finite, is_hurwitz, kron, lyap_solve, max_abs, numerical_rank, psd_margin, sym,
    SpectralInfo, DEFAULT_HURWITZ_TOL,
};
use crate::{Error, Mat, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const ROW_SUM_TOL: f64 = 1e-8;
const PATTERN_TOL: f64 = 1e-8;
const ZERO_BLOCK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MasProblem {
    a: Mat,
    b: Vec<Mat>,
    topology: Topology,
    q: Mat,
    r: Mat,
    x0: Vec<DVector<f64>>,
}

fn check_symmetric(m: &Mat, what: &str) -> Result<()> {
    if (m - m.transpose()).amax() > SYMMETRY_TOL * (1.0 + max_abs(m)) {
        return Err(Error::Problem(format!("{what} is not symmetric")));
    }
    Ok(())
}

impl MasProblem {
    pub fn new(
        a: Mat,
        b: Vec<Mat>,
        topology: Topology,
        q: Mat,
        r: Mat,
        x0: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        ensure_finite(&a, "A")?;
        let agents = topology.agents();
        if b.len() != agents {
            return Err(Error::Dimension(format!(
                "{} input matrices for {agents} agents",
                b.len()
            )));
        }
        let m = b[0].ncols();
        if m == 0 || m > n {
            return Err(Error::Problem(format!(
                "input dimension m = {m} must satisfy 1 <= m <= n = {n}"
            )));
        }
        for (i, bi) in b.iter().enumerate() {
            if bi.nrows() != n || bi.ncols() != m {
                return Err(Error::Dimension(format!(
                    "B[{i}] is {}x{}, expected {n}x{m}",
                    bi.nrows(),
                    bi.ncols()
                )));
            }
            ensure_finite(bi, "B")?;
            if numerical_rank(bi, 1e-10) < m {
                return Err(Error::Problem(format!("B[{i}] is not full column rank")));
            }
        }
        if q.shape() != (n, n) || r.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "weights must be {n}x{n} and {m}x{m}, got {:?} and {:?}",
                q.shape(),
                r.shape()
            )));
        }
        ensure_finite(&q, "Q")?;
        ensure_finite(&r, "R")?;
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        if psd_margin(&q) < -SYMMETRY_TOL * (1.0 + max_abs(&q)) {
            return Err(Error::Problem("Q is not positive semidefinite".into()));
        }
        if psd_margin(&r) <= 0.0 {
            return Err(Error::Problem("R is not positive definite".into()));
        }
        if x0.len() != agents {
            return Err(Error::Dimension(format!(
                "{} initial states for {agents} agents",
                x0.len()
            )));
        }
        for (i, xi) in x0.iter().enumerate() {
            if xi.len() != n {
                return Err(Error::Dimension(format!(
                    "x0[{i}] has length {}, expected {n}",
                    xi.len()
                )));
            }
            if xi.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("x0"));
            }
        }
        Ok(MasProblem {
            a,
            b,
            topology,
            q: sym(&q),
            r: sym(&r),
            x0,
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &[Mat] {
        &self.b
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn x0(&self) -> &[DVector<f64>] {
        &self.x0
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn agents(&self) -> usize {
        self.topology.agents()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.b.iter().all(|bi| bi == &self.b[0])
    }

    pub fn stacked_x0(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n * self.agents(), |k, _| self.x0[k / n][k % n])
    }

    /// Â = I_N ⊗ A.
    pub fn a_hat(&self) -> Mat {
        kron(&Mat::identity(self.agents(), self.agents()), &self.a)
    }

    /// B̂ = blkdiag(B₁, …, B_N).
    pub fn b_hat(&self) -> Mat {
        blkdiag(&self.b)
    }

    pub fn with_x0(&self, x0: Vec<DVector<f64>>) -> Result<Self> {
        MasProblem::new(
            self.a.clone(),
            self.b.clone(),
            self.topology.clone(),
            self.q.clone(),
            self.r.clone(),
            x0,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ErrorSystem {
    pub atil: Mat,
    pub btil: Mat,
    pub qtil: Mat,
    pub rhat: Mat,
    pub e0: DVector<f64>,
    pub n: usize,
    pub m: usize,
    pub agents: usize,
}

/// e = (x₁−x₂, …, x_{N−1}−x_N) for a stacked state x̂.
pub fn errors_from_states(xhat: &DVector<f64>, n: usize, agents: usize) -> DVector<f64> {
    DVector::from_fn(n * (agents - 1), |k, _| xhat[k] - xhat[k + n])
}

pub fn build_error_system(p: &MasProblem) -> Result<ErrorSystem> {
    let (n, m, agents) = (p.n(), p.m(), p.agents());
    let ne = n * (agents - 1);

    let atil = kron(&Mat::identity(agents - 1, agents - 1), p.a());

    let mut btil = Mat::zeros(ne, m * agents);
    for r in 0..agents - 1 {
        btil.view_mut((r * n, r * m), (n, m)).copy_from(&p.b()[r]);
        btil.view_mut((r * n, (r + 1) * m), (n, m))
            .copy_from(&(-&p.b()[r + 1]));
    }

    let d = delta(n, agents);
    let full = d.transpose() * kron(&p.topology().laplacian(), p.q()) * &d;
    let leftover = full
        .view((ne, 0), (n, n * agents))
        .amax()
        .max(full.view((0, ne), (n * agents, n)).amax());
    if leftover > ZERO_BLOCK_TOL * (1.0 + max_abs(p.q())) {
        return Err(Error::Consistency(format!(
            "discarded block of the transformed weight has entry {leftover:.3e}"
        )));
    }
    let qtil = sym(&full.view((0, 0), (ne, ne)).clone_owned());

    let rhat = kron(&Mat::identity(agents, agents), p.r());
    let e0 = errors_from_states(&p.stacked_x0(), n, agents);

    Ok(ErrorSystem {
        atil,
        btil,
        qtil,
        rhat,
        e0,
        n,
        m,
        agents,
    })
}

fn check_gain_shape(k: &Mat, rows: usize, cols: usize, what: &str) -> Result<()> {
    if k.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            k.nrows(),
            k.ncols()
        )));
    }
    ensure_finite(k, "gain")
}

/// Maps a diffusive stacked law K̂ˣ̂ to error coordinates:
/// K̂ᵉ = K̂ˣ̂ [Δ_{n(N−1)}; 0], i.e. column-block j is the cumulative sum of
/// column-blocks 1..j.
pub fn ke_from_kx(kx: &Mat, n: usize, m: usize, agents: usize) -> Result<Mat> {
    check_gain_shape(kx, m * agents, n * agents, "kx")?;
    let scale = 1.0 + max_abs(kx);
    for i in 0..agents {
        let mut sum = Mat::zeros(m, n);
        for j in 0..agents {
            sum += kx.view((i * m, j * n), (m, n));
        }
        let residual = sum.amax();
        if residual > ROW_SUM_TOL * scale {
            return Err(Error::NotDiffusive { row: i, residual });
        }
    }
    let ne = n * (agents - 1);
    let mut ke = Mat::zeros(m * agents, ne);
    let mut acc = Mat::zeros(m * agents, n);
    for j in 0..agents - 1 {
        acc += kx.view((0, j * n), (m * agents, n));
        ke.view_mut((0, j * n), (m * agents, n)).copy_from(&acc);
    }
    Ok(ke)
}

/// Inverse of the cumulative-sum map. The result always has zero row-block
/// sums; blocks outside the topology's sparsity pattern must vanish.
pub fn kx_from_ke(ke: &Mat, n: usize, m: usize, topology: &Topology) -> Result<Mat> {
    let agents = topology.agents();
    check_gain_shape(ke, m * agents, n * (agents - 1), "ke")?;
    let mut kx = Mat::zeros(m * agents, n * agents);
    for j in 0..agents {
        let mut col = if j < agents - 1 {
            ke.view((0, j * n), (m * agents, n)).clone_owned()
        } else {
            Mat::zeros(m * agents, n)
        };
        if j > 0 {
            col -= ke.view((0, (j - 1) * n), (m * agents, n));
        }
        kx.view_mut((0, j * n), (m * agents, n)).copy_from(&col);
    }
    check_sparsity(&kx, n, m, topology)?;
    Ok(kx)
}

/// Errors with the offending blocks when `kx` populates positions that are
/// neither diagonal nor edges.
pub fn check_sparsity(kx: &Mat, n: usize, m: usize, topology: &Topology) -> Result<()> {
    let agents = topology.agents();
    check_gain_shape(kx, m * agents, n * agents, "kx")?;
    let pattern = topology.sparsity();
    let tol = PATTERN_TOL * (1.0 + max_abs(kx));
    let mut blocks = Vec::new();
    let mut max_entry = 0f64;
    for i in 0..agents {
        for j in 0..agents {
            if pattern.allowed(i, j) {
                continue;
            }
            let v = kx.view((i * m, j * n), (m, n)).amax();
            if v > tol {
                blocks.push((i, j));
                max_entry = max_entry.max(v);
            }
        }
    }
    if blocks.is_empty() {
        Ok(())
    } else {
        Err(Error::Structure { blocks, max_entry })
    }
}

/// Ã + B̃K̂ᵉ.
pub fn closed_loop_error_matrix(es: &ErrorSystem, ke: &Mat) -> Result<Mat> {
    check_gain_shape(ke, es.btil.ncols(), es.atil.ncols(), "ke")?;
    Ok(&es.atil + &es.btil * ke)
}

/// Exact infinite-horizon cost of an error-coordinate gain.
#[derive(Debug, Clone)]
pub struct GainCost {
    pub cost: f64,
    /// Solution of (Ã+B̃K)ᵀY + Y(Ã+B̃K) + Q̃ + KᵀR̂K = 0.
    pub y: Mat,
    pub spectrum: SpectralInfo,
}

pub fn gain_cost(es: &ErrorSystem, ke: &Mat) -> Result<GainCost> {
    let acl = closed_loop_error_matrix(es, ke)?;
    let (ok, spectrum) = is_hurwitz(&acl, DEFAULT_HURWITZ_TOL)?;
    if !ok {
        return Err(Error::NoConsensus {
            max_real_part: spectrum.max_real_part,
        });
    }
    let w = &es.qtil + ke.transpose() * &es.rhat * ke;
    let y = lyap_solve(&acl, &w)?;
    let cost = (es.e0.transpose() * &y * &es.e0)[(0, 0)];
    Ok(GainCost { cost, y, spectrum })
}
