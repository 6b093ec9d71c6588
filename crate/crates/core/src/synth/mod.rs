//! Synthesis algorithms: ε-suboptimal state feedback for a single plant,
//! structured consensus protocols with a cost bound γ, the bound for a
//! given protocol, and a Laplacian-scaled baseline protocol.

mod baseline;
mod consensus;
mod single;

pub use baseline::{jiao_baseline, BaselineResult};
pub use consensus::{algorithm2, algorithm3, ConsensusOptions, ConsensusResult};
pub use single::{
    algorithm1, cost_of_gain_single, gain_from_p, stable_branch, Branch, LqrOptions, LqrResult,
    StableBranchOutcome,
};
