//! Worked example problems with reference gains.

use nalgebra::DVector;

use crate::graph::Topology;
use crate::netmodel::MasProblem;
use crate::sdp::Plant;
use crate::Mat;

#[derive(Debug, Clone)]
pub struct Example {
    pub name: &'static str,
    pub problem: MasProblem,
    /// Reference error-feedback gain K̂ᵉ, two-decimal rounding in most entries.
    pub reference_ke: Mat,
}

fn rows(r: usize, c: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(r, c, data)
}

fn vectors(n: usize, data: &[f64]) -> Vec<DVector<f64>> {
    data.chunks(n).map(DVector::from_column_slice).collect()
}

fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

/// ẋ = u, x(0) = 3, unit weights.
pub fn integrator_plant() -> (Plant, DVector<f64>) {
    let plant = Plant::new(scalar(0.0), scalar(1.0), scalar(1.0), scalar(1.0))
        .expect("valid plant");
    (plant, DVector::from_element(1, 3.0))
}

/// ẋ = −x + u, x(0) = 3, unit weights.
pub fn stable_scalar_plant() -> (Plant, DVector<f64>) {
    let plant = Plant::new(scalar(-1.0), scalar(1.0), scalar(1.0), scalar(1.0))
        .expect("valid plant");
    (plant, DVector::from_element(1, 3.0))
}

const LINE_X0: [f64; 4] = [0.1, 0.2, 0.5, -0.5];

fn integrators(topology: Topology) -> MasProblem {
    MasProblem::new(
        scalar(0.0),
        vec![scalar(1.0); 4],
        topology,
        scalar(1.0),
        scalar(1.0),
        vectors(1, &LINE_X0),
    )
    .expect("valid problem")
}

pub fn integrators_line() -> Example {
    Example {
        name: "integrators_line",
        problem: integrators(Topology::line(4).expect("valid topology")),
        reference_ke: rows(
            4,
            3,
            &[
                -0.39, 0.0, 0.0, //
                0.39, -0.37, 0.0, //
                0.0, 0.37, -0.39, //
                0.0, 0.0, 0.39,
            ],
        ),
    }
}

pub fn oscillators_line() -> Example {
    let problem = MasProblem::new(
        rows(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        vec![rows(2, 1, &[0.0, 1.0]); 4],
        Topology::line(4).expect("valid topology"),
        Mat::identity(2, 2),
        scalar(1.0),
        vectors(2, &[0.35, 0.15, 0.26, 0.48, -0.24, -0.22, -0.30, -0.12]),
    )
    .expect("valid problem");
    Example {
        name: "oscillators_line",
        problem,
        reference_ke: rows(
            4,
            6,
            &[
                -0.3993, -0.5521, 0.0, 0.0, 0.0, 0.0, //
                0.3993, 0.5521, -0.4076, -0.5114, 0.0, 0.0, //
                0.0, 0.0, 0.4076, 0.5114, -0.4013, -0.5522, //
                0.0, 0.0, 0.0, 0.0, 0.4013, 0.5522,
            ],
        ),
    }
}

pub fn integrators_ring() -> Example {
    Example {
        name: "integrators_ring",
        problem: integrators(
            Topology::from_one_indexed(4, &[(1, 2), (1, 4), (2, 3), (3, 4)])
                .expect("valid topology"),
        ),
        reference_ke: rows(
            4,
            3,
            &[
                -0.59, -0.43, -0.43, //
                0.15, -0.27, 0.0, //
                0.0, 0.27, -0.16, //
                0.43, 0.43, 0.59,
            ],
        ),
    }
}

/// Four agents, every pair linked except agents 1 and 3.
pub fn integrators_diamond() -> Example {
    Example {
        name: "integrators_diamond",
        problem: integrators(
            Topology::from_one_indexed(4, &[(1, 2), (1, 4), (2, 3), (2, 4), (3, 4)])
                .expect("valid topology"),
        ),
        reference_ke: rows(
            4,
            3,
            &[
                -0.53, -0.42, -0.42, //
                0.11, -0.50, -0.27, //
                0.0, 0.22, -0.12, //
                0.42, 0.69, 0.82,
            ],
        ),
    }
}

/// Five paper-machine rollers in a line with differing actuator gains.
pub fn rollers_line() -> Example {
    let problem = MasProblem::new(
        rows(3, 3, &[0.0, 1.0, 0.0, 0.0, -0.01, 0.2, 0.0, 0.0, -125.0]),
        [20.0, 18.0, 16.0, 14.0, 12.0]
            .iter()
            .map(|&g| rows(3, 1, &[0.0, 0.0, g]))
            .collect(),
        Topology::line(5).expect("valid topology"),
        Mat::identity(3, 3) * 10.0,
        scalar(0.001),
        vectors(
            3,
            &[
                0.02, 0.0, 0.01, //
                0.01, 0.01, -0.01, //
                0.05, 0.01, 0.01, //
                0.04, 0.02, 0.02, //
                0.07, 0.0, 0.0,
            ],
        ),
    )
    .expect("valid problem");
    let mut ke = Mat::zeros(5, 12);
    ke.view_mut((0, 0), (1, 3)).copy_from_slice(&[-0.48, -131.40, -32.69]);
    ke.view_mut((1, 0), (1, 6))
        .copy_from_slice(&[0.43, 118.26, 29.42, -0.43, -118.83, -28.17]);
    ke.view_mut((2, 3), (1, 6))
        .copy_from_slice(&[0.38, 105.62, 25.047, -0.44, -121.09, -28.20]);
    ke.view_mut((3, 6), (1, 6))
        .copy_from_slice(&[0.38, 105.96, 24.68, -0.51, -135.99, -30.81]);
    ke.view_mut((4, 9), (1, 3)).copy_from_slice(&[0.44, 116.57, 26.40]);
    Example {
        name: "rollers_line",
        problem,
        reference_ke: ke,
    }
}

pub fn all() -> Vec<Example> {
    vec![
        integrators_line(),
        oscillators_line(),
        integrators_ring(),
        integrators_diamond(),
        rollers_line(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assert_close;
    use crate::netmodel::{build_error_system, gain_cost, kx_from_ke};

    #[test]
    fn reference_gains_respect_topology() {
        for ex in all() {
            let p = &ex.problem;
            kx_from_ke(&ex.reference_ke, p.n(), p.m(), p.topology())
                .unwrap_or_else(|e| panic!("{}: {e}", ex.name));
        }
    }

    #[test]
    fn reference_costs() {
        for (ex, want, tol) in [
            (integrators_line(), 0.89, 0.01),
            (oscillators_line(), 1.7793, 0.01),
            (integrators_ring(), 1.52, 0.02),
            (integrators_diamond(), 1.61, 0.02),
            (rollers_line(), 2.48, 0.05),
        ] {
            let es = build_error_system(&ex.problem).unwrap();
            let got = gain_cost(&es, &ex.reference_ke).unwrap().cost;
            assert_close!(got, want, tol);
        }
    }
}
