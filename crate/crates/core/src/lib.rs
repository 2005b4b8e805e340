//! Closed-form SO(3)-averaged flow matching targets for point clouds and
//! molecular conformer ensembles, with the numerics they rest on.
//!
//! All routines are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! bottom of this file name the common instantiations.

pub mod baseline;
pub mod error;
pub mod graph;
pub mod interpolant;
pub mod kabsch;
pub mod linalg;
pub mod logsumexp;
pub mod metrics;
pub mod ode;
pub mod oracle;
pub mod random;
pub mod scalar;
pub mod so3;
pub mod target;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use baseline::{baseline_target, sample_prior, BaselineKind, BaselinePair};
pub use error::{Error, Result};
pub use graph::{harmonic_metric_apply, Bond, BondType, MoleculeGraph};
pub use interpolant::{integration_interpolant, linear_interpolant, InterpolantKind};
pub use kabsch::{align_onto, kabsch_rotation, rmsd_kabsch};
pub use linalg::{svd3, Coords, Mat3, Svd3};
pub use logsumexp::{softmax_weights, weighted_logsumexp};
pub use metrics::{coverage_amr, MetricReport, DELTA_DRUGS, DELTA_QM9};
pub use ode::{integrate, straightness, Solver, Straightness, Trajectory};
pub use scalar::Real;
pub use so3::{
    bessel0_scaled, factor, grad_logcf, grad_logcf_matrix, logcf, logcf_matrix, signed_svd,
    signed_svdvals, Quadrature, QuadratureRule, SignedSpectrum,
};
pub use target::{
    avg_flow_target, avg_flow_target_with, mc_avg_flow, AvgFlow, ConformerEnsemble, FlowQuery,
    McEstimate, MetricKind, MetricSpec,
};

pub type Mat3f64 = Mat3<f64>;
pub type Mat3f32 = Mat3<f32>;
pub type Coords64 = Coords<f64>;
pub type Coords32 = Coords<f32>;
pub type Spectrum64 = SignedSpectrum<f64>;
pub type Ensemble64 = ConformerEnsemble<f64>;
pub type Ensemble32 = ConformerEnsemble<f32>;
pub type Metric64 = MetricSpec<f64>;
pub type Metric32 = MetricSpec<f32>;
pub type Query64 = FlowQuery<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
