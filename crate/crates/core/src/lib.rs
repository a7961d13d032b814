//! Transfer operators of Hamiltonian Monte Carlo acting on densities, on discretized
//! weighted `L^q` spaces, with convergence diagnostics and a particle sampler for
//! cross-validation.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod lq_space;
pub mod phase_flow;
pub mod quadrature;
pub mod sampler;
pub mod transfer_op;

pub use error::{Error, Result};
pub use lq_space::{ExponentPair, Grid, GridDensity, LqSpace, MomentumDensity, TargetDensity};
pub use phase_flow::{FlowKind, HamiltonianEnergy, PhaseFlow, PhasePoint};
pub use transfer_op::{Direction, Discretization, OperatorMatrix, OperatorOptions, TransferOperator, Weights};
