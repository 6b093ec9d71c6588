//! Dense real linear-algebra primitives: Kronecker products, the Υ and Γ
//! operators, Hurwitz tests, Lyapunov and Riccati solves.

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::{Error, Result};

/// Dense real matrix. Finiteness is checked wherever external data enters
/// (see [`ensure_finite`]).
pub type Mat = DMatrix<f64>;

type CMat = DMatrix<Complex64>;

pub const DEFAULT_HURWITZ_TOL: f64 = 1e-8;

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralInfo {
    /// Eigenvalues as `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
    pub max_real_part: f64,
}

pub fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension(format!("{what} is empty")));
    }
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn ensure_square(m: &Mat, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn ensure_same_square(mats: &[(&Mat, &str)]) -> Result<usize> {
    let n = ensure_square(mats[0].0, mats[0].1)?;
    for (m, what) in &mats[1..] {
        if ensure_square(m, what)? != n {
            return Err(Error::Dimension(format!(
                "{what} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(n)
}

/// Kronecker product; the (i, j) block of the result is `a[(i, j)] * b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Block-diagonal concatenation.
pub fn blkdiag(blocks: &[Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// `(m + mᵀ) / 2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Strict-inequality margin `1e-6 * (1 + max |entry|)` over the given data.
pub fn strict_margin(data: &[&Mat]) -> f64 {
    let mag = data.iter().map(|m| max_abs(m)).fold(0.0, f64::max);
    1e-6 * (1.0 + mag)
}

/// Υ(Ψ, Φ) = (Ψ + Ψᵀ) Ξ (Φ + Φᵀ).
pub fn upsilon(psi: &Mat, phi: &Mat, xi: &Mat) -> Result<Mat> {
    ensure_same_square(&[(psi, "psi"), (phi, "phi"), (xi, "xi")])?;
    Ok((psi + psi.transpose()) * xi * (phi + phi.transpose()))
}

/// Ξ = B R⁻¹ Bᵀ.
pub fn xi_matrix(b: &Mat, r: &Mat) -> Result<Mat> {
    let r_inv = invert(r, "R")?;
    if b.ncols() != r.nrows() {
        return Err(Error::Dimension(format!(
            "B has {} columns but R is {}x{}",
            b.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    Ok(b * r_inv * b.transpose())
}

/// Γ(P) = AᵀP + PA + Q.
pub fn gamma_op(a: &Mat, p: &Mat, q: &Mat) -> Result<Mat> {
    ensure_same_square(&[(a, "A"), (p, "P"), (q, "Q")])?;
    Ok(a.transpose() * p + p * a + q)
}

pub fn invert(m: &Mat, what: &str) -> Result<Mat> {
    ensure_square(m, what)?;
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what} is not invertible")))
}

pub fn spectrum(a: &Mat) -> Result<SpectralInfo> {
    ensure_square(a, "A")?;
    let schur = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Eigensolver("real Schur iteration did not converge".into()))?;
    let eigs = schur.complex_eigenvalues();
    let eigenvalues: Vec<(f64, f64)> = eigs.iter().map(|z| (z.re, z.im)).collect();
    let max_real_part = eigenvalues
        .iter()
        .map(|&(re, _)| re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectralInfo {
        eigenvalues,
        max_real_part,
    })
}

/// True iff every eigenvalue has real part below `-tol`.
pub fn is_hurwitz(a: &Mat, tol: f64) -> Result<(bool, SpectralInfo)> {
    let info = spectrum(a)?;
    Ok((info.max_real_part < -tol, info))
}

/// λ_min of the symmetric part of `m`.
pub fn psd_margin(m: &Mat) -> f64 {
    symmetric_eigenvalues(&sym(m))
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetric_eigenvalues(m: &Mat) -> Vec<f64> {
    match SymmetricEigen::try_new(m.clone(), 1e-15, 10_000) {
        Some(e) => e.eigenvalues.iter().copied().collect(),
        // Jacobi-free fallback never observed in practice; NaN makes every
        // margin comparison fail closed.
        None => vec![f64::NAN; m.nrows()],
    }
}

fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Solves ĀᵀP + PĀ + W = 0 for Hurwitz Ā.
///
/// Bartels–Stewart on the complex Schur form Ā = U T Uᴴ: the transformed
/// unknown Y = Uᴴ P U satisfies Tᴴ Y + Y T = −Uᴴ W U, which is solved entry by
/// entry since Tᴴ is lower and T upper triangular.
pub fn lyap_solve(abar: &Mat, w: &Mat) -> Result<Mat> {
    let n = ensure_same_square(&[(abar, "Abar"), (w, "W")])?;
    let (hurwitz, info) = is_hurwitz(abar, 0.0)?;
    if !hurwitz {
        return Err(Error::NotHurwitz {
            max_real_part: info.max_real_part,
        });
    }

    let schur = Schur::try_new(to_complex(abar), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Eigensolver("complex Schur iteration did not converge".into()))?;
    let (u, t) = schur.unpack();
    let c = -(u.adjoint() * to_complex(w) * &u);

    let mut y = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut acc = c[(i, j)];
            for k in 0..i {
                acc -= t[(k, i)].conj() * y[(k, j)];
            }
            for k in 0..j {
                acc -= y[(i, k)] * t[(k, j)];
            }
            let denom = t[(i, i)].conj() + t[(j, j)];
            y[(i, j)] = acc / denom;
        }
    }

    let p = (&u * y * u.adjoint()).map(|z| z.re);
    let w_sym = (w - w.transpose()).amax() <= 1e-12 * (1.0 + w.amax());
    Ok(if w_sym { sym(&p) } else { p })
}

/// Residual ‖ĀᵀP + PĀ + W‖_F.
pub fn lyap_residual(abar: &Mat, p: &Mat, w: &Mat) -> f64 {
    (abar.transpose() * p + p * abar + w).norm()
}


/// Upper-triangle positions (i ≤ j) of an s × s matrix in column-major order.
pub fn upper_coordinates(s: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(s * (s + 1) / 2);
    for j in 0..s {
        for i in 0..=j {
            out.push((i, j));
        }
    }
    out
}

/// Orthonormal basis (as columns) of the column span of `m`, from a
/// column-pivoted Householder QR; diagonal entries of R below
/// `rel_tol · max|Rᵢᵢ|` count as zero.
pub fn range_basis(m: &Mat, rel_tol: f64) -> Mat {
    let d = m.nrows();
    if m.ncols() == 0 || m.amax() == 0.0 {
        return Mat::zeros(d, 0);
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|k| r[(k, k)].abs()).collect();
    let top = diag.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..diag.len()).filter(|&k| diag[k] > rel_tol * top).collect();
    let q = qr.q();
    Mat::from_fn(d, keep.len(), |i, c| q[(i, keep[c])])
}

pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    range_basis(m, rel_tol).ncols()
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// `m`, read off the eigenvectors of the projector I − UUᵀ.
pub fn orthogonal_complement(m: &Mat, rel_tol: f64) -> Mat {
    let d = m.nrows();
    let u = range_basis(m, rel_tol);
    let proj = Mat::identity(d, d) - &u * u.transpose();
    let eig = SymmetricEigen::new(sym(&proj));
    let keep: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    let mut out = Mat::from_fn(d, keep.len(), |i, c| eig.eigenvectors[(i, keep[c])]);
    // One re-projection removes the O(ε) leakage into the range.
    out -= &u * (u.transpose() * &out);
    for mut c in out.column_iter_mut() {
        let nrm = c.norm();
        c /= nrm;
    }
    out
}

/// Orthonormal basis of {x : m·x = 0}.
pub fn null_space(m: &Mat, rel_tol: f64) -> Mat {
    orthogonal_complement(&m.transpose(), rel_tol)
}

/// Popov–Belevitch–Hautus test on the closed right half-plane eigenvalues.
pub fn is_stabilizable(a: &Mat, b: &Mat) -> Result<bool> {
    let n = ensure_square(a, "A")?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "B has {} rows, A is {n}x{n}",
            b.nrows()
        )));
    }
    let info = spectrum(a)?;
    let scale = 1.0 + a.amax() + b.amax();
    for &(re, im) in &info.eigenvalues {
        if re < -1e-10 * scale {
            continue;
        }
        // Real embedding [[Re, −Im], [Im, Re]] of the pencil [A − λI, B];
        // its rank is twice the complex rank.
        let cols = n + b.ncols();
        let mut pencil = Mat::zeros(2 * n, 2 * cols);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = a[(i, j)];
                pencil[(n + i, cols + j)] = a[(i, j)];
            }
            pencil[(i, i)] -= re;
            pencil[(n + i, cols + i)] -= re;
            pencil[(i, cols + i)] = im;
            pencil[(n + i, i)] = -im;
            for j in 0..b.ncols() {
                pencil[(i, n + j)] = b[(i, j)];
                pencil[(n + i, cols + n + j)] = b[(i, j)];
            }
        }
        if numerical_rank(&pencil, 1e-9) < 2 * n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Stabilizing feedback K (closed loop A − BK) by Bass's method:
/// with β exceeding the spectral abscissa of −A, solve
/// (A + βI) Z + Z (A + βI)ᵀ = 2BBᵀ and take K = BᵀZ⁺.
fn bass_gain(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = -(a + Mat::identity(n, n) * beta);
    let z = lyap_solve(&shifted.transpose(), &(b * b.transpose() * 2.0))?;
    let eig = SymmetricEigen::new(sym(&z));
    let cutoff = 1e-12 * eig.eigenvalues.amax();
    let inv_diag = eig.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let z_pinv = &eig.eigenvectors * Mat::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
    Ok(b.transpose() * z_pinv)
}

/// Residual of the Riccati equation AᵀP + PA + Q − PBR⁻¹BᵀP.
pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    let xi = xi_matrix(b, r)?;
    Ok((a.transpose() * p + p * a + q - p * xi * p).norm())
}

/// Stabilizing solution of AᵀP + PA + Q − PBR⁻¹BᵀP = 0 by Newton–Kleinman.
pub fn care_solve(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let n = ensure_same_square(&[(a, "A"), (q, "Q")])?;
    ensure_square(r, "R")?;
    if b.nrows() != n || b.ncols() != r.nrows() {
        return Err(Error::Dimension(format!(
            "B is {}x{}, expected {n}x{}",
            b.nrows(),
            b.ncols(),
            r.nrows()
        )));
    }
    if !is_stabilizable(a, b)? {
        return Err(Error::NotStabilizable);
    }
    let r_inv = invert(r, "R")?;

    let mut k = if is_hurwitz(a, 0.0)?.0 {
        Mat::zeros(b.ncols(), n)
    } else {
        bass_gain(a, b)?
    };
    let (ok, info) = is_hurwitz(&(a - b * &k), 0.0)?;
    if !ok {
        return Err(Error::NoConvergence(format!(
            "initial gain not stabilizing (max real part {:.3e})",
            info.max_real_part
        )));
    }

    let xi = b * &r_inv * b.transpose();
    let mut p_prev: Option<Mat> = None;
    let mut last_step = f64::INFINITY;
    for iter in 0..200 {
        let ak = a - b * &k;
        let p = lyap_solve(&ak, &(q + k.transpose() * r * &k))?;
        k = &r_inv * b.transpose() * &p;
        if let Some(prev) = &p_prev {
            let step = (&p - prev).norm();
            // Stop at the tolerance or once steps stop contracting.
            let converged = step <= 1e-12 * (1.0 + p.norm());
            if converged || (iter > 3 && step >= last_step) {
                let residual = care_residual(a, b, q, r, &p)?;
                let scale = 1.0 + q.norm() + 2.0 * (a.transpose() * &p).norm() + (&p * &xi * &p).norm();
                if residual <= 1e-9 * scale {
                    return Ok(sym(&p));
                }
                if converged {
                    return Err(Error::NoConvergence(format!(
                        "Riccati residual {residual:.3e} above tolerance"
                    )));
                }
            }
            last_step = step;
        }
        p_prev = Some(p);
    }
    Err(Error::NoConvergence(
        "Newton–Kleinman iteration exceeded 200 steps".into(),
    ))
}
