//! Rate correlation, coverage and retransmission delay of MIMO zero-forcing
//! links in Poisson bipolar networks, computed both by numerical integration
//! and by Monte Carlo simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model;
pub mod quadrature;
pub mod analytic;
pub mod delay;
pub mod special;
pub mod montecarlo;
pub mod optimizer;

pub use model::{ActivityCoupling, LinkState, LosModel, ParamError, PathLossParams, Scheme, SystemParams};
