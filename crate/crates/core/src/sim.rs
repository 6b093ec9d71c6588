//! Fixed-step RK4 simulation of closed-loop networks, quadrature cost,
//! consensus metric and CSV export.

use std::io::Write;

use nalgebra::DVector;

use crate::netmodel::{build_error_system, errors_from_states, gain_cost, ke_from_kx, MasProblem};
use crate::{Error, Mat, Result};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DIVERGENCE_NORM: f64 = 1e9;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub n: usize,
    pub m: usize,
    pub agents: usize,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub quadrature_cost: f64,
    /// Cost remaining after the horizon, e(T)ᵀYe(T).
    pub tail: f64,
    pub metric_trace: Vec<f64>,
    pub final_metric: f64,
}

impl SimReport {
    pub fn total_cost(&self) -> f64 {
        self.quadrature_cost + self.tail
    }
}

fn rk4_step(m: &Mat, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = m * x;
    let k2 = m * (x + &k1 * (h / 2.0));
    let k3 = m * (x + &k2 * (h / 2.0));
    let k4 = m * (x + &k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates ẋ = (A + BK)x and records u = Kx on a uniform grid.
pub fn simulate_linear(
    a: &Mat,
    b: &Mat,
    k: &Mat,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0) || dt > horizon / 100.0 * (1.0 + 1e-12) {
        return Err(Error::Argument(format!(
            "dt must lie in (0, T/100], got dt = {dt} with T = {horizon}"
        )));
    }
    if b.ncols() != k.nrows() || k.ncols() != a.ncols() || x0.len() != a.ncols() {
        return Err(Error::Dimension("simulation data shapes disagree".into()));
    }
    let acl = a + b * k;
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    for step in 0..=steps {
        let t = step as f64 * dt;
        if !x.iter().all(|v| v.is_finite()) || x.norm() > DIVERGENCE_NORM {
            return Err(Error::Divergence { t });
        }
        times.push(t);
        inputs.push(k * &x);
        states.push(x.clone());
        if step < steps {
            x = rk4_step(&acl, &x, dt);
        }
    }
    Ok((times, states, inputs))
}

/// Simulates x̂' = (Â + B̂K̂ˣ̂)x̂ from the problem's initial condition.
pub fn simulate(p: &MasProblem, kx: &Mat, horizon: f64, dt: f64) -> Result<Trajectory> {
    let (times, states, inputs) =
        simulate_linear(&p.a_hat(), &p.b_hat(), kx, &p.stacked_x0(), horizon, dt)?;
    Ok(Trajectory {
        times,
        states,
        inputs,
        n: p.n(),
        m: p.m(),
        agents: p.agents(),
    })
}

fn agent(x: &DVector<f64>, i: usize, n: usize) -> DVector<f64> {
    x.rows(i * n, n).clone_owned()
}

fn running_cost(traj: &Trajectory, p: &MasProblem, k: usize) -> f64 {
    let x = &traj.states[k];
    let u = &traj.inputs[k];
    let mut c = 0.0;
    for (i, j) in p.topology().edges() {
        let d = agent(x, i, traj.n) - agent(x, j, traj.n);
        c += (d.transpose() * p.q() * &d)[(0, 0)];
    }
    for i in 0..traj.agents {
        let ui = agent(u, i, traj.m);
        c += (ui.transpose() * p.r() * &ui)[(0, 0)];
    }
    c
}

/// Composite trapezoid integral of the network cost over the grid.
pub fn quadrature_cost(traj: &Trajectory, p: &MasProblem) -> f64 {
    let values: Vec<f64> = (0..traj.times.len()).map(|k| running_cost(traj, p, k)).collect();
    values
        .windows(2)
        .zip(traj.times.windows(2))
        .map(|(v, t)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum()
}

/// Max over agent pairs of ‖xᵢ − xⱼ‖ at each grid time.
pub fn consensus_metric(traj: &Trajectory) -> Vec<f64> {
    traj.states
        .iter()
        .map(|x| {
            let mut worst = 0f64;
            for i in 0..traj.agents {
                for j in i + 1..traj.agents {
                    worst = worst.max((agent(x, i, traj.n) - agent(x, j, traj.n)).norm());
                }
            }
            worst
        })
        .collect()
}

/// Cost accumulated after the final grid time, from the Lyapunov matrix of
/// the closed-loop error system.
pub fn lyapunov_tail(traj: &Trajectory, p: &MasProblem, kx: &Mat) -> Result<f64> {
    let es = build_error_system(p)?;
    let ke = ke_from_kx(kx, es.n, es.m, es.agents)?;
    let y = gain_cost(&es, &ke)?.y;
    let last = traj.states.last().expect("trajectory is never empty");
    let e = errors_from_states(last, traj.n, traj.agents);
    Ok((e.transpose() * y * &e)[(0, 0)])
}

pub fn report(traj: &Trajectory, p: &MasProblem, kx: &Mat) -> Result<SimReport> {
    let metric_trace = consensus_metric(traj);
    Ok(SimReport {
        quadrature_cost: quadrature_cost(traj, p),
        tail: lyapunov_tail(traj, p, kx)?,
        final_metric: *metric_trace.last().expect("trajectory is never empty"),
        metric_trace,
    })
}

pub fn csv_header(traj: &Trajectory) -> String {
    let mut cols = vec!["t".to_string()];
    for i in 1..=traj.agents {
        for k in 1..=traj.n {
            cols.push(format!("x_{i}_{k}"));
        }
    }
    for i in 1..=traj.agents {
        for k in 1..=traj.m {
            cols.push(format!("u_{i}_{k}"));
        }
    }
    cols.join(",")
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", csv_header(traj))?;
    for ((t, x), u) in traj.times.iter().zip(&traj.states).zip(&traj.inputs) {
        let row: Vec<String> = std::iter::once(*t)
            .chain(x.iter().copied())
            .chain(u.iter().copied())
            .map(fmt17)
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assert_close;
    use crate::graph::Topology;

    fn integrators(t: Topology, x0: &[f64]) -> MasProblem {
        let agents = t.agents();
        MasProblem::new(
            Mat::zeros(1, 1),
            vec![Mat::identity(1, 1); agents],
            t,
            Mat::identity(1, 1),
            Mat::identity(1, 1),
            x0.iter().map(|&v| DVector::from_element(1, v)).collect(),
        )
        .unwrap()
    }

    fn pair() -> MasProblem {
        integrators(Topology::line(2).unwrap(), &[1.0, -0.5])
    }

    fn line4() -> MasProblem {
        integrators(Topology::line(4).unwrap(), &[0.1, 0.2, 0.5, -0.5])
    }

    #[test]
    fn pair_decays_exponentially() {
        let p = pair();
        let kx = -p.topology().laplacian();
        let traj = simulate(&p, &kx, 2.0, 1e-3).unwrap();
        let trace = consensus_metric(&traj);
        for (t, m) in traj.times.iter().zip(&trace) {
            assert_close!(*m, 1.5 * (-2.0 * t).exp(), 1e-12);
        }
        // e' = −2e with weight 1 + 2 per unit e²: J = 3·e₀²/4.
        let r = report(&traj, &p, &kx).unwrap();
        assert_close!(r.total_cost(), 3.0 * 2.25 / 4.0, 1e-5);
    }

    #[test]
    fn fourth_order_convergence() {
        let p = pair();
        let kx = -p.topology().laplacian();
        let err = |dt: f64| {
            let traj = simulate(&p, &kx, 1.0, dt).unwrap();
            (consensus_metric(&traj).last().unwrap() - 1.5 * (-2f64).exp()).abs()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        assert!((e1 / e2 - 16.0).abs() < 1.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn halving_dt_changes_cost_little() {
        let p = line4();
        let kx = -0.4 * p.topology().laplacian();
        let a = quadrature_cost(&simulate(&p, &kx, 20.0, 2e-3).unwrap(), &p);
        let b = quadrature_cost(&simulate(&p, &kx, 20.0, 1e-3).unwrap(), &p);
        assert!((a - b).abs() / b < 1e-6);
    }

    #[test]
    fn zero_gain_keeps_disagreement() {
        let p = line4();
        let traj = simulate(&p, &Mat::zeros(4, 4), 1.0, 0.01).unwrap();
        assert!(consensus_metric(&traj).iter().all(|&m| (m - 1.0).abs() < 1e-15));
    }

    #[test]
    fn equal_states_cost_nothing() {
        let p = integrators(Topology::line(3).unwrap(), &[0.3, 0.3, 0.3]);
        let traj = simulate(&p, &(-p.topology().laplacian()), 1.0, 0.01).unwrap();
        assert_eq!(quadrature_cost(&traj, &p), 0.0);
        assert!(consensus_metric(&traj).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn quadrature_matches_lyapunov() {
        let p = line4();
        for alpha in [0.1, 0.4] {
            let kx = -alpha * p.topology().laplacian();
            let traj = simulate(&p, &kx, 40.0, 1e-3).unwrap();
            let r = report(&traj, &p, &kx).unwrap();
            let es = build_error_system(&p).unwrap();
            let exact = gain_cost(&es, &ke_from_kx(&kx, 1, 1, 4).unwrap()).unwrap().cost;
            assert!((r.total_cost() - exact).abs() / exact < 1e-5);
        }
        let kx = -0.1 * p.topology().laplacian();
        let traj = simulate(&p, &kx, 40.0, 1e-3).unwrap();
        let r = report(&traj, &p, &kx).unwrap();
        assert_close!(r.total_cost(), 2.70, 0.01);
        assert!(r.tail > 0.004);
    }

    #[test]
    fn cost_nondecreasing_in_horizon() {
        let p = line4();
        let kx = -0.3 * p.topology().laplacian();
        let costs: Vec<f64> = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|&t| quadrature_cost(&simulate(&p, &kx, t, 0.01).unwrap(), &p))
            .collect();
        assert!(costs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn argument_and_divergence_errors() {
        let p = pair();
        let kx = -p.topology().laplacian();
        assert!(matches!(simulate(&p, &kx, 1.0, 0.1), Err(Error::Argument(_))));
        assert!(matches!(simulate(&p, &kx, 0.0, 0.001), Err(Error::Argument(_))));
        let unstable = MasProblem::new(
            Mat::identity(1, 1) * 5.0,
            vec![Mat::identity(1, 1); 2],
            Topology::line(2).unwrap(),
            Mat::identity(1, 1),
            Mat::identity(1, 1),
            vec![DVector::from_element(1, 1.0); 2],
        )
        .unwrap();
        assert!(matches!(
            simulate(&unstable, &Mat::zeros(2, 2), 10.0, 0.01),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let p = MasProblem::new(
            Mat::zeros(2, 2),
            vec![Mat::from_column_slice(2, 1, &[0.0, 1.0]); 2],
            Topology::line(2).unwrap(),
            Mat::identity(2, 2),
            Mat::identity(1, 1),
            vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 0.0])],
        )
        .unwrap();
        let traj = simulate(&p, &Mat::zeros(2, 4), 1.0, 0.01).unwrap();
        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_1_1,x_1_2,x_2_1,x_2_2,u_1_1,u_2_1");
        let first: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(first, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(text.lines().count(), 102);
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
