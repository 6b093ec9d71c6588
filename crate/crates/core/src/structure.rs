//! Admissible error-coordinate gains for a topology, and the linear
//! constraints on a symmetric P̂ that keep K̂ᵉ = −R̂⁻¹B̃ᵀP̂ inside them.
//!
//! A row-block of K̂ᵉ (m × n(N−1)) is identified with its column-major
//! vectorization when building bases and annihilators.

use crate::graph::Topology;
use crate::matcore::{invert, orthogonal_complement, sym, upper_coordinates};
use crate::netmodel::{ke_from_kx, ErrorSystem};
use crate::{Error, Mat, Result};

const RANK_TOL: f64 = 1e-10;
const VALIDATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RowBlockSubspace {
    /// Each element is an m × n(N−1) matrix.
    pub basis: Vec<Mat>,
    /// Orthonormal functionals (as m × n(N−1) matrices, paired through the
    /// entrywise inner product) vanishing exactly on the span of `basis`.
    pub annihilator: Vec<Mat>,
}

#[derive(Debug, Clone)]
pub struct GainSubspace {
    pub n: usize,
    pub m: usize,
    pub agents: usize,
    pub rows: Vec<RowBlockSubspace>,
}

/// Homogeneous constraints tr(GₖP̂) = 0 with symmetric Gₖ.
#[derive(Debug, Clone)]
pub struct PConstraintSet {
    pub size: usize,
    pub functionals: Vec<Mat>,
}


fn left_null_space(cols: &Mat) -> Vec<Vec<f64>> {
    let comp = orthogonal_complement(cols, RANK_TOL);
    comp.column_iter().map(|c| c.iter().copied().collect()).collect()
}

pub fn admissible_subspace(t: &Topology, n: usize, m: usize) -> Result<GainSubspace> {
    let agents = t.agents();
    let ne = n * (agents - 1);
    let mut rows = Vec::with_capacity(agents);
    for i in 0..agents {
        let mut basis = Vec::new();
        for j in t.neighbors(i)? {
            for p in 0..m {
                for q in 0..n {
                    let mut kx = Mat::zeros(m * agents, n * agents);
                    kx[(i * m + p, i * n + q)] = 1.0;
                    kx[(i * m + p, j * n + q)] = -1.0;
                    let ke = ke_from_kx(&kx, n, m, agents)?;
                    basis.push(ke.view((i * m, 0), (m, ne)).clone_owned());
                }
            }
        }
        let stacked = Mat::from_fn(m * ne, basis.len(), |r, c| basis[c].as_slice()[r]);
        let annihilator = left_null_space(&stacked)
            .into_iter()
            .map(|v| Mat::from_vec(m, ne, v))
            .collect();
        rows.push(RowBlockSubspace { basis, annihilator });
    }
    Ok(GainSubspace {
        n,
        m,
        agents,
        rows,
    })
}

/// Pulls every annihilator functional back through P̂ ↦ −R̂⁻¹B̃ᵀP̂. With
/// Mᵢ the i-th row-block of −R̂⁻¹B̃ᵀ, ⟨W, MᵢP̂⟩ = tr((WᵀMᵢ)P̂), and on
/// symmetric P̂ only the symmetric part of WᵀMᵢ matters.
pub fn derive_p_constraints(es: &ErrorSystem, sub: &GainSubspace) -> Result<PConstraintSet> {
    let ne = es.atil.nrows();
    if sub.n != es.n || sub.m != es.m || sub.agents != es.agents {
        return Err(Error::Dimension(
            "gain subspace does not match the error system".into(),
        ));
    }
    let map = -invert(&es.rhat, "R̂")? * es.btil.transpose();
    let mut functionals = Vec::new();
    for (i, row) in sub.rows.iter().enumerate() {
        let mi = map.view((i * es.m, 0), (es.m, ne));
        for w in &row.annihilator {
            let g = sym(&(w.transpose() * mi));
            if g.amax() > RANK_TOL {
                functionals.push(g);
            }
        }
    }
    Ok(PConstraintSet {
        size: ne,
        functionals,
    })
}

impl PConstraintSet {
    /// Constraint matrix over the upper-triangle coordinates of P̂
    /// (column-major order, off-diagonal coordinates counting both
    /// symmetric entries).
    pub fn coordinate_matrix(&self) -> Mat {
        let s = self.size;
        let coords = upper_coordinates(s);
        Mat::from_fn(self.functionals.len(), coords.len(), |k, c| {
            let (i, j) = coords[c];
            let g = &self.functionals[k];
            if i == j {
                g[(i, i)]
            } else {
                g[(i, j)] + g[(j, i)]
            }
        })
    }

    /// Basis of the symmetric matrices satisfying every constraint.
    pub fn feasible_basis(&self) -> Vec<Mat> {
        let s = self.size;
        let coords = upper_coordinates(s);
        let c = self.coordinate_matrix();
        // Null space of C is the left null space of Cᵀ.
        left_null_space(&c.transpose())
            .into_iter()
            .map(|v| {
                let mut p = Mat::zeros(s, s);
                for (k, &(i, j)) in coords.iter().enumerate() {
                    p[(i, j)] = v[k];
                    p[(j, i)] = v[k];
                }
                p
            })
            .collect()
    }

    pub fn max_violation(&self, p: &Mat) -> f64 {
        self.functionals
            .iter()
            .map(|g| g.component_mul(p).sum().abs())
            .fold(0.0, f64::max)
    }
}

/// Largest annihilator response over all row-blocks.
pub fn structure_residual(ke: &Mat, sub: &GainSubspace) -> f64 {
    let ne = sub.n * (sub.agents - 1);
    if ke.shape() != (sub.m * sub.agents, ne) {
        return f64::INFINITY;
    }
    let mut worst = 0f64;
    for (i, row) in sub.rows.iter().enumerate() {
        let block = ke.view((i * sub.m, 0), (sub.m, ne));
        for w in &row.annihilator {
            worst = worst.max(w.component_mul(&block).sum().abs());
        }
    }
    worst
}

pub fn validate_gain_structure(ke: &Mat, sub: &GainSubspace) -> bool {
    structure_residual(ke, sub) < VALIDATION_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{build_error_system, kx_from_ke, MasProblem};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rank(m: &Mat) -> usize {
        if m.ncols() == 0 || m.nrows() == 0 {
            return 0;
        }
        crate::matcore::numerical_rank(m, 1e-9)
    }

    fn span_of(vs: &[Vec<f64>]) -> Mat {
        let d = vs.first().map_or(0, |v| v.len());
        Mat::from_fn(d, vs.len(), |r, c| vs[c][r])
    }

    fn same_span(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
        let ra = rank(&span_of(a));
        let rb = rank(&span_of(b));
        let joint: Vec<_> = a.iter().chain(b).cloned().collect();
        ra == rb && rank(&span_of(&joint)) == ra
    }

    fn scalar_system(t: Topology) -> ErrorSystem {
        let agents = t.agents();
        let p = MasProblem::new(
            Mat::zeros(1, 1),
            vec![Mat::identity(1, 1); agents],
            t,
            Mat::identity(1, 1),
            Mat::identity(1, 1),
            vec![DVector::zeros(1); agents],
        )
        .unwrap();
        build_error_system(&p).unwrap()
    }

    fn sym_from(entries: &[(usize, usize, f64)], s: usize) -> Mat {
        let mut p = Mat::zeros(s, s);
        for &(i, j, v) in entries {
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
        p
    }

    fn as_vecs(ms: &[Mat]) -> Vec<Vec<f64>> {
        ms.iter().map(|m| m.as_slice().to_vec()).collect()
    }

    #[test]
    fn line_row_subspaces() {
        let sub = admissible_subspace(&Topology::line(4).unwrap(), 1, 1).unwrap();
        assert!(same_span(&as_vecs(&sub.rows[0].basis), &[vec![1., 0., 0.]]));
        assert!(same_span(
            &as_vecs(&sub.rows[1].basis),
            &[vec![-1., 0., 0.], vec![0., 1., 0.]]
        ));
    }

    #[test]
    fn ring_row_subspace() {
        let sub = admissible_subspace(&Topology::ring(4).unwrap(), 1, 1).unwrap();
        assert!(same_span(
            &as_vecs(&sub.rows[0].basis),
            &[vec![1., 0., 0.], vec![1., 1., 1.]]
        ));
    }

    #[test]
    fn complete_graph_is_unconstrained() {
        let sub = admissible_subspace(&Topology::complete(5).unwrap(), 2, 1).unwrap();
        assert!(sub.rows.iter().all(|r| r.annihilator.is_empty()));
    }

    #[test]
    fn subspace_annihilator_duality() {
        let t = Topology::from_one_indexed(5, &[(1, 2), (2, 3), (3, 4), (4, 5), (1, 5), (2, 4)]).unwrap();
        for (n, m) in [(1, 1), (2, 1), (2, 2)] {
            let sub = admissible_subspace(&t, n, m).unwrap();
            for row in &sub.rows {
                let dim = rank(&span_of(&as_vecs(&row.basis)));
                assert_eq!(dim + row.annihilator.len(), m * n * 4);
                for w in &row.annihilator {
                    for b in &row.basis {
                        assert!(w.component_mul(b).sum().abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn line_allows_any_diagonal_p() {
        let es = scalar_system(Topology::line(4).unwrap());
        let sub = admissible_subspace(&Topology::line(4).unwrap(), 1, 1).unwrap();
        let cons = derive_p_constraints(&es, &sub).unwrap();
        let p = Mat::from_diagonal(&DVector::from_vec(vec![0.39, 0.37, 0.39]));
        assert!(cons.max_violation(&p) < 1e-14);
        assert!(cons.max_violation(&Mat::zeros(3, 3)) == 0.0);
    }

    #[test]
    fn ring_constraints_match_printed_conditions() {
        let t = Topology::ring(4).unwrap();
        let es = scalar_system(t.clone());
        let cons = derive_p_constraints(&es, &admissible_subspace(&t, 1, 1).unwrap()).unwrap();
        // P12 = P13 = P23, diagonal free.
        let printed = vec![
            sym_from(&[(0, 0, 1.0)], 3),
            sym_from(&[(1, 1, 1.0)], 3),
            sym_from(&[(2, 2, 1.0)], 3),
            sym_from(&[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], 3),
        ];
        assert!(same_span(&as_vecs(&cons.feasible_basis()), &as_vecs(&printed)));
    }

    #[test]
    fn fig2b_constraints_match_printed_conditions() {
        let t = Topology::from_one_indexed(4, &[(1, 2), (1, 4), (2, 3), (2, 4), (3, 4)]).unwrap();
        let es = scalar_system(t.clone());
        let cons = derive_p_constraints(&es, &admissible_subspace(&t, 1, 1).unwrap()).unwrap();
        // P12 = P13, everything else free.
        let printed = vec![
            sym_from(&[(0, 0, 1.0)], 3),
            sym_from(&[(1, 1, 1.0)], 3),
            sym_from(&[(2, 2, 1.0)], 3),
            sym_from(&[(1, 2, 1.0)], 3),
            sym_from(&[(0, 1, 1.0), (0, 2, 1.0)], 3),
        ];
        assert!(same_span(&as_vecs(&cons.feasible_basis()), &as_vecs(&printed)));
    }

    #[test]
    fn validation_examples() {
        let t = Topology::line(4).unwrap();
        let sub = admissible_subspace(&t, 1, 1).unwrap();
        let printed = Mat::from_row_slice(
            4,
            3,
            &[-0.39, 0., 0., 0.39, -0.37, 0., 0., 0.37, -0.39, 0., 0., 0.39],
        );
        assert!(validate_gain_structure(&printed, &sub));
        let mut bad = printed.clone();
        bad[(0, 2)] = 0.1;
        assert!(!validate_gain_structure(&bad, &sub));

        for t in [Topology::ring(5).unwrap(), Topology::complete(4).unwrap()] {
            let agents = t.agents();
            let sub = admissible_subspace(&t, 2, 2).unwrap();
            let kx = -0.7 * crate::matcore::kron(&t.laplacian(), &Mat::identity(2, 2));
            let ke = ke_from_kx(&kx, 2, 2, agents).unwrap();
            assert!(validate_gain_structure(&ke, &sub));
        }
    }

    fn random_case(seed: u64) -> (Topology, ErrorSystem, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agents = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=2);
        let m = rng.gen_range(1..=n);
        let t = loop {
            let mut edges = Vec::new();
            for i in 0..agents {
                for j in i + 1..agents {
                    if rng.gen_bool(0.4) {
                        edges.push((i, j));
                    }
                }
            }
            if let Ok(t) = Topology::new(agents, &edges) {
                break t;
            }
        };
        let b = (0..agents)
            .map(|_| Mat::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let p = MasProblem::new(
            Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)),
            b,
            t.clone(),
            Mat::identity(n, n),
            Mat::from_diagonal_element(m, m, rng.gen_range(0.5..2.0)),
            vec![DVector::zeros(n); agents],
        )
        .unwrap();
        (t, build_error_system(&p).unwrap(), rng)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn constrained_p_yields_structured_gain(seed in any::<u64>()) {
            let (t, es, mut rng) = random_case(seed);
            let sub = admissible_subspace(&t, es.n, es.m).unwrap();
            let cons = derive_p_constraints(&es, &sub).unwrap();
            let basis = cons.feasible_basis();
            prop_assert!(!basis.is_empty() || cons.size == 0);
            let mut p = Mat::zeros(cons.size, cons.size);
            for b in &basis {
                p += b * rng.gen_range(-1.0..1.0);
            }
            prop_assert!(cons.max_violation(&p) < 1e-10);
            let ke = -invert(&es.rhat, "R").unwrap() * es.btil.transpose() * &p;
            prop_assert!(validate_gain_structure(&ke, &sub));
            prop_assert!(kx_from_ke(&ke, es.n, es.m, &t).is_ok());
        }
    }
}
