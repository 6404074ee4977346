//! End-to-end analysis of one dataset: normalize times, select the basis,
//! estimate weights, test every mediator, screen by mixture FDR, fit the
//! joint model on the selected set, and evaluate the effect curves.
//!
//! The weight pipeline runs once per dataset: the null model of every
//! marginal test excludes its candidate mediator, which makes it the same
//! mediator-free model for all of them, so per-mediator re-estimation and a
//! global estimate coincide exactly.

use serde::{Deserialize, Serialize};

use crate::covariance::CorrelationStructure;
use crate::dataset::{normalize_times, LongitudinalDataset, TimeMap};
use crate::effects::{effect_curves, fit_joint_model_with, EffectCurvePoint, JointFit};
use crate::error::{Error, Result};
use crate::permtest::{
    fit_mediator_model, permutation_test_in, MarginalContext, MediatorFit, PermutationOptions,
    PermutationResult, PvalueMode,
};
use crate::screening::{
    estimate_null_proportions, fdr_threshold, floors_zero_pvalues, joint_pvalues,
    MediationTestTable, ScreeningResult,
};
use crate::spline::{select_basis_dimension, SplineBasis};

/// Options for the end-to-end analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub structure: CorrelationStructure,
    pub permutations: usize,
    pub seed: u64,
    pub fdr_level: f64,
    /// Interior-knot candidates for basis selection (singleton skips CV).
    pub basis_candidates: Vec<usize>,
    /// Use the add-one smoothed permutation p-value instead of the plain
    /// proportion (which is floored at 1/(2S) before FDR when zero).
    pub smoothed_pvalues: bool,
    /// Re-estimate the weight pipeline inside every permutation draw.
    pub reestimate_weights: bool,
    /// Exposure contrast (x, x*) for the effect curves.
    pub contrast: (f64, f64),
    /// Number of grid points for curve evaluation.
    pub grid_points: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            structure: CorrelationStructure::Diagonal,
            permutations: 200,
            seed: 0,
            fdr_level: 0.05,
            basis_candidates: (1..=8).collect(),
            smoothed_pvalues: false,
            reestimate_weights: false,
            contrast: (1.0, 0.0),
            grid_points: 101,
        }
    }
}

impl AnalysisOptions {
    pub fn pvalue_mode(&self) -> PvalueMode {
        if self.smoothed_pvalues {
            PvalueMode::AddOneSmoothed
        } else {
            PvalueMode::Plain
        }
    }
}

/// Everything produced by one analysis run.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub basis: SplineBasis,
    pub rho: Option<f64>,
    pub mediator_fits: Vec<MediatorFit>,
    pub permutation_results: Vec<PermutationResult>,
    pub table: MediationTestTable,
    pub screening: ScreeningResult,
    pub joint: JointFit,
    pub curves: Vec<EffectCurvePoint>,
    pub time_map: Option<TimeMap>,
}

/// Run the full pipeline on a raw dataset.
///
/// Times are normalized onto [0, 1] before fitting; curve tables report
/// both the normalized and the original scale.
pub fn analyze(ds: &LongitudinalDataset, opts: &AnalysisOptions) -> Result<AnalysisResult> {
    ds.validate()?;
    if opts.grid_points < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 curve grid points".into(),
        ));
    }
    let ds = normalize_times(ds)?;
    let basis = select_basis_dimension(&ds, opts.structure, &opts.basis_candidates, opts.seed)?;
    let ctx = MarginalContext::new(&ds, &basis, opts.structure)?;

    let perm_opts = PermutationOptions {
        permutations: opts.permutations,
        seed: opts.seed,
        pvalue_mode: opts.pvalue_mode(),
        reestimate_weights: opts.reestimate_weights,
    };
    let mut mediator_fits = Vec::with_capacity(ds.p);
    let mut permutation_results = Vec::with_capacity(ds.p);
    for k in 0..ds.p {
        mediator_fits.push(fit_mediator_model(&ds, k)?);
        permutation_results.push(permutation_test_in(&ctx, &ds, k, &perm_opts)?);
    }

    let table = joint_pvalues(
        &mediator_fits,
        &permutation_results,
        floors_zero_pvalues(perm_opts.pvalue_mode),
    )?;
    let proportions = estimate_null_proportions(&table);
    let screening = fdr_threshold(&table, &proportions, opts.fdr_level)?;

    let joint = fit_joint_model_with(&ds, &screening.selected, &basis, &ctx.cov)?;
    let grid: Vec<f64> = (0..opts.grid_points)
        .map(|i| i as f64 / (opts.grid_points - 1) as f64)
        .collect();
    let curves = effect_curves(
        &joint,
        &mediator_fits,
        opts.contrast.0,
        opts.contrast.1,
        &grid,
        ds.time_map,
    )?;

    Ok(AnalysisResult {
        basis,
        rho: ctx.cov.rho,
        mediator_fits,
        permutation_results,
        table,
        screening,
        joint,
        curves,
        time_map: ds.time_map,
    })
}
