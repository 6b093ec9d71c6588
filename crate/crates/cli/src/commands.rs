use std::fmt::Write as _;

use serde_json::{json, Value};
use subopt_core::netmodel::MasProblem;
use subopt_core::sim::{self, Trajectory, DEFAULT_DT, DEFAULT_HORIZON};
use subopt_core::synth::{
    algorithm1, algorithm2, algorithm3, jiao_baseline, Branch, ConsensusOptions,
    ConsensusResult, LqrOptions, StableBranchOutcome,
};
use subopt_core::Mat;

use crate::config::{matrix, Mode, ProblemConfig};
use crate::report::{fmt, lmi, mat, num, spectrum};
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub delta: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub csv: bool,
}

pub struct Outcome {
    pub report: Value,
    pub summary: String,
    pub trajectory: Option<Trajectory>,
}

struct Settings {
    delta: Option<f64>,
    horizon: f64,
    dt: f64,
    csv: bool,
}

impl Settings {
    fn new(cfg: &ProblemConfig, o: &Overrides) -> Result<Self, CliError> {
        let s = Settings {
            delta: o.delta.or(cfg.options.delta),
            horizon: o.horizon.or(cfg.options.horizon).unwrap_or(DEFAULT_HORIZON),
            dt: o.dt.or(cfg.options.dt).unwrap_or(DEFAULT_DT),
            csv: o.csv,
        };
        if let Some(d) = s.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(CliError::Usage(format!("delta must be positive, got {d}")));
            }
        }
        Ok(s)
    }
}

pub fn run(mode: Mode, cfg: &ProblemConfig, o: &Overrides) -> Result<Outcome, CliError> {
    let s = Settings::new(cfg, o)?;
    let (result, summary, trajectory, extra) = match mode {
        Mode::Lqr => lqr(cfg, &s)?,
        Mode::Synth => {
            let p = cfg.problem()?;
            let r = algorithm2(&p, &ConsensusOptions { delta: s.delta, ..Default::default() })?;
            network_with_sim(&p, &r.kx, consensus(&r), consensus_summary(&r), &s)?
        }
        Mode::Bound => bound(cfg, &s)?,
        Mode::Baseline => {
            let p = cfg.problem()?;
            let r = jiao_baseline(&p, cfg.options.gamma)?;
            let result = json!({
                "lambda2": num(r.lambda2),
                "lambda_max": num(r.lambda_max),
                "c": num(r.c),
                "p": mat(&r.p),
                "kx": mat(&r.kx),
                "ke": mat(&r.ke),
                "cost": num(r.cost),
                "gamma": cfg.options.gamma.map(num),
                "radius": r.radius.map(num),
                "x0_norm": num(r.x0_norm),
            });
            let mut summary = format!(
                "c = {}  J = {}  |x0| = {}",
                fmt(r.c),
                fmt(r.cost),
                fmt(r.x0_norm)
            );
            if let Some(radius) = r.radius {
                let _ = write!(summary, "  radius = {}", fmt(radius));
            }
            network_with_sim(&p, &r.kx, result, summary, &s)?
        }
        Mode::Simulate => {
            let p = cfg.problem()?;
            let kx = single_gain(cfg)?;
            let traj = sim::simulate(&p, &kx, s.horizon, s.dt)?;
            let r = sim::report(&traj, &p, &kx)?;
            let result = simulation_json(&r, &s);
            let summary = format!(
                "quadrature J = {}  tail = {}  final metric = {:.3e}",
                fmt(r.quadrature_cost),
                fmt(r.tail),
                r.final_metric
            );
            (result, summary, s.csv.then_some(traj), None)
        }
    };
    let mut report = json!({
        "mode": mode.name(),
        "result": result,
    });
    if let Some(extra) = extra {
        report["simulation"] = extra;
    }
    Ok(Outcome {
        report,
        summary,
        trajectory,
    })
}

type Parts = (Value, String, Option<Trajectory>, Option<Value>);

fn simulation_json(r: &sim::SimReport, s: &Settings) -> Value {
    json!({
        "horizon": num(s.horizon),
        "dt": num(s.dt),
        "quadrature_cost": num(r.quadrature_cost),
        "tail": num(r.tail),
        "total_cost": num(r.total_cost()),
        "final_metric": num(r.final_metric),
    })
}

fn network_with_sim(
    p: &MasProblem,
    kx: &Mat,
    result: Value,
    summary: String,
    s: &Settings,
) -> Result<Parts, CliError> {
    if !s.csv {
        return Ok((result, summary, None, None));
    }
    let traj = sim::simulate(p, kx, s.horizon, s.dt)?;
    let r = sim::report(&traj, p, kx)?;
    Ok((result, summary, Some(traj), Some(simulation_json(&r, s))))
}

fn single_gain(cfg: &ProblemConfig) -> Result<Mat, CliError> {
    match (&cfg.gain, &cfg.gain_sweep) {
        (Some(g), None) => matrix(g, "gain"),
        _ => Err(CliError::Config(
            "field `gain`: this mode needs exactly one gain matrix".into(),
        )),
    }
}

fn consensus(r: &ConsensusResult) -> Value {
    json!({
        "eta": num(r.eta),
        "gamma": num(r.gamma),
        "cost": num(r.cost),
        "kx": mat(&r.kx),
        "ke": mat(&r.ke),
        "phat": mat(&r.phat),
        "pbar": mat(&r.pbar),
        "ptilde_e": mat(&r.ptilde_e),
        "closed_loop": spectrum(&r.spectrum),
        "lmi": lmi(&r.lmi),
        "structure": {
            "valid": r.structure_ok,
            "residual": num(r.structure_residual),
            "constraints": r.constraint_count,
        },
    })
}

fn consensus_summary(r: &ConsensusResult) -> String {
    format!(
        "eta = {}  gamma = {}  J = {}  max Re = {:.3e}",
        fmt(r.eta),
        fmt(r.gamma),
        fmt(r.cost),
        r.spectrum.max_real_part
    )
}

fn bound(cfg: &ProblemConfig, s: &Settings) -> Result<Parts, CliError> {
    let p = cfg.problem()?;
    let opts = ConsensusOptions { delta: s.delta, ..Default::default() };
    match (&cfg.gain, &cfg.gain_sweep) {
        (Some(_), None) => {
            let kx = single_gain(cfg)?;
            let r = algorithm3(&p, &kx, &opts)?;
            network_with_sim(&p, &kx, consensus(&r), consensus_summary(&r), s)
        }
        (None, Some(sweep)) => {
            if s.csv {
                return Err(CliError::Usage("--csv needs a single gain, not a sweep".into()));
            }
            let base = matrix(&sweep.base, "gain_sweep.base")?;
            let mut runs = Vec::new();
            let mut summary = format!("{:>10} {:>12} {:>12} {:>12}", "scale", "gamma", "J", "eta");
            for &scale in &sweep.scales {
                let r = algorithm3(&p, &(&base * scale), &opts)?;
                let _ = write!(
                    summary,
                    "\n{scale:>10} {:>12} {:>12} {:>12}",
                    fmt(r.gamma),
                    fmt(r.cost),
                    fmt(r.eta)
                );
                let mut v = consensus(&r);
                v["scale"] = num(scale);
                runs.push(v);
            }
            Ok((json!({ "runs": runs }), summary, None, None))
        }
        _ => Err(CliError::Config(
            "field `gain`: bound mode needs either `gain` or `gain_sweep`".into(),
        )),
    }
}

fn lqr(cfg: &ProblemConfig, s: &Settings) -> Result<Parts, CliError> {
    let (plant, x0) = cfg.plant()?;
    let fixed_p = cfg
        .options
        .fixed_p
        .as_ref()
        .map(|rows| matrix(rows, "options.fixed_p"))
        .transpose()?;
    let r = algorithm1(&plant, &x0, &LqrOptions { delta: s.delta, fixed_p })?;
    let result = json!({
        "branch": match r.branch { Branch::Stable => "stable", Branch::Unstable => "unstable" },
        "stable_branch": match r.stable_branch {
            StableBranchOutcome::Feasible => "feasible",
            StableBranchOutcome::Infeasible => "infeasible",
            StableBranchOutcome::NumericalFailure => "numerical_failure",
        },
        "theta": r.theta.map(num),
        "p": mat(&r.p),
        "pbar": mat(&r.pbar),
        "eta": num(r.eta),
        "ptilde": mat(&r.ptilde),
        "gain": mat(&r.gain),
        "j_star": num(r.jstar),
        "cost": num(r.jactual),
        "bound": num(r.bound),
        "epsilon": num(r.epsilon),
        "convexity_min_eigenvalue": num(r.convexity_margin),
        "delta": num(r.delta),
        "closed_loop": spectrum(&r.spectrum),
    });
    let summary = format!(
        "J* = {}  J = {}  bound = {}  epsilon = {}",
        fmt(r.jstar),
        fmt(r.jactual),
        fmt(r.bound),
        fmt(r.epsilon)
    );
    let trajectory = if s.csv {
        let (times, states, inputs) =
            sim::simulate_linear(&plant.a, &plant.b, &r.gain, &x0, s.horizon, s.dt)?;
        Some(Trajectory {
            times,
            states,
            inputs,
            n: plant.n(),
            m: plant.m(),
            agents: 1,
        })
    } else {
        None
    };
    Ok((result, summary, trajectory, None))
}
