//! High-dimensional mediation analysis for sparse, irregularly spaced
//! longitudinal outcomes.
//!
//! The pipeline tests each candidate mediator between a scalar exposure and a
//! longitudinal outcome, combining an OLS test on the exposure-mediator path
//! with a permutation test on the time-varying mediator-outcome path, screens
//! mediators with a three-component mixture FDR rule, and estimates natural
//! direct/indirect effect curves from a joint spline regression. A simulation
//! harness generates synthetic cohorts and reproduces the power, screening,
//! and estimation metrics used to validate the method.
//!
//! Module map:
//! - [`dataset`]: data model and CSV ingestion for sparse longitudinal cohorts
//! - [`spline`]: B-spline bases, block design matrices, CV basis selection
//! - [`covariance`]: residual variance/correlation estimation and WLS weights
//! - [`permtest`]: mediator OLS, marginal WLS fits, permutation testing
//! - [`screening`]: joint p-values and mixture-FDR mediator selection
//! - [`effects`]: joint model fit and direct/indirect effect curves
//! - [`sim`]: synthetic data generation and Monte Carlo study drivers
//! - [`pipeline`]: end-to-end analysis orchestration shared by CLI and harness

pub mod covariance;
pub mod dataset;
pub mod effects;
pub mod error;
pub mod linalg;
pub mod permtest;
pub mod pipeline;
pub mod rng;
pub mod screening;
pub mod sim;
pub mod spline;

pub use covariance::{CorrelationStructure, CovarianceModel};
pub use dataset::{LongitudinalDataset, Subject, TimeMap};
pub use error::{Error, Result};
pub use permtest::{MarginalFit, MediatorFit, PermutationResult, PvalueMode};
pub use screening::{MediationTestTable, ScreeningResult};
pub use spline::SplineBasis;
