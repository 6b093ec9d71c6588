use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix contains non-finite entries ({0})")]
    NonFinite(&'static str),

    #[error("eigenvalue computation failed: {0}")]
    Eigensolver(String),

    #[error("matrix is not Hurwitz (max real part {max_real_part:.3e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("gain is not diffusive: row-block {row} sums to {residual:.3e}")]
    NotDiffusive { row: usize, residual: f64 },

    #[error("structure violation in blocks {blocks:?} (max entry {max_entry:.3e})")]
    Structure {
        blocks: Vec<(usize, usize)>,
        max_entry: f64,
    },

    #[error("assembly consistency check failed: {0}")]
    Consistency(String),

    #[error("semidefinite program infeasible: {0}")]
    Infeasible(String),

    #[error("semidefinite solver failed: {0}")]
    Solver(String),

    #[error("synthesis produced non-stabilizing gain (max real part {max_real_part:.3e})")]
    NonStabilizingGain { max_real_part: f64 },

    #[error("gain does not achieve consensus (max real part {max_real_part:.3e})")]
    NoConsensus { max_real_part: f64 },

    #[error("no stabilizing P satisfying the convexity LMI was found")]
    NoStabilizingP,

    #[error("simulation diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),
}

impl Error {
    /// Whether the failure is an infeasibility outcome (as opposed to bad
    /// input or a numerical breakdown).
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::Infeasible(_) | Error::NonStabilizingGain { .. } | Error::NoStabilizingP
        )
    }
}
