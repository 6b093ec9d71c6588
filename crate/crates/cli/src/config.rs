use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;
use subopt_core::graph::Topology;
use subopt_core::netmodel::MasProblem;
use subopt_core::sdp::Plant;
use subopt_core::Mat;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lqr,
    Synth,
    Bound,
    Baseline,
    Simulate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Lqr => "lqr",
            Mode::Synth => "synth",
            Mode::Bound => "bound",
            Mode::Baseline => "baseline",
            Mode::Simulate => "simulate",
        }
    }
}

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub agents: usize,
    /// One-indexed undirected edges.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSweep {
    pub base: Rows,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    /// Bound used for the baseline initial-condition radius.
    pub gamma: Option<f64>,
    /// Fixed P for the single-plant mode.
    pub fixed_p: Option<Rows>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mode: Option<Mode>,
    pub a: Rows,
    pub b: Vec<Rows>,
    pub q: Rows,
    pub r: Rows,
    pub topology: Option<TopologyConfig>,
    pub x0: Rows,
    pub gain: Option<Rows>,
    pub gain_sweep: Option<GainSweep>,
    #[serde(default)]
    pub options: Options,
}

pub fn parse(text: &str) -> Result<ProblemConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("field `{path}`: {}", e.inner()))
    })
}

pub fn load(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn matrix(rows: &Rows, field: &str) -> Result<Mat, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Config(format!("field `{field}`: empty matrix")));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(CliError::Config(format!(
            "field `{field}`: row {i} has {} entries, expected {c}",
            row.len()
        )));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

impl ProblemConfig {
    pub fn plant(&self) -> Result<(Plant, DVector<f64>), CliError> {
        if self.b.len() != 1 || self.x0.len() != 1 {
            return Err(CliError::Config(
                "field `b`/`x0`: single-plant mode takes exactly one input matrix and one initial state"
                    .into(),
            ));
        }
        let plant = Plant::new(
            matrix(&self.a, "a")?,
            matrix(&self.b[0], "b[0]")?,
            matrix(&self.q, "q")?,
            matrix(&self.r, "r")?,
        )?;
        Ok((plant, DVector::from_column_slice(&self.x0[0])))
    }

    pub fn problem(&self) -> Result<MasProblem, CliError> {
        let t = self
            .topology
            .as_ref()
            .ok_or_else(|| CliError::Config("field `topology`: required for network modes".into()))?;
        let edges: Vec<(usize, usize)> = t.edges.iter().map(|e| (e[0], e[1])).collect();
        let topology = Topology::from_one_indexed(t.agents, &edges)?;
        let b = self
            .b
            .iter()
            .enumerate()
            .map(|(i, rows)| matrix(rows, &format!("b[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MasProblem::new(
            matrix(&self.a, "a")?,
            b,
            topology,
            matrix(&self.q, "q")?,
            matrix(&self.r, "r")?,
            self.x0.iter().map(|v| DVector::from_column_slice(v)).collect(),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{
        "mode": "synth",
        "a": [[0]], "b": [[[1]], [[1]], [[1]]],
        "q": [[1]], "r": [[1]],
        "topology": {"agents": 3, "edges": [[1, 2], [2, 3]]},
        "x0": [[0.1], [0.2], [0.3]]
    }"#;

    #[test]
    fn parses_network_config() {
        let c = parse(LINE).unwrap();
        assert_eq!(c.mode, Some(Mode::Synth));
        let p = c.problem().unwrap();
        assert_eq!((p.agents(), p.n(), p.m()), (3, 1, 1));
    }

    #[test]
    fn errors_name_the_field() {
        let bad = LINE.replace(r#""q": [[1]], "#, "");
        let msg = parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("q"), "{msg}");
        let bad = LINE.replace(r#""x0": [[0.1], [0.2], [0.3]]"#, r#""x0": [[0.1], "x", [0.3]]"#);
        let msg = parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("x0[1]"), "{msg}");
        let ragged = LINE.replace(r#""a": [[0]]"#, r#""a": [[0, 1], [2]]"#);
        let msg = parse(&ragged).unwrap().problem().unwrap_err().to_string();
        assert!(msg.contains("`a`"), "{msg}");
    }

    #[test]
    fn disconnected_topology_rejected() {
        let bad = LINE.replace("[[1, 2], [2, 3]]", "[[1, 2]]");
        assert!(parse(&bad).unwrap().problem().is_err());
    }
}
