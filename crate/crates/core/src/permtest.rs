//! Per-mediator testing: OLS fit of the exposure-mediator model, marginal
//! WLS fits of the varying-coefficient outcome model, the WRSS-based F
//! statistic, and the resampling permutation test.
//!
//! The marginal model for mediator k shares everything except the mediator
//! block with every other mediator and with every permutation draw, so the
//! expensive cross products are computed once per dataset in
//! [`MarginalContext`]. Writing the design as [A | m_k B] with A the
//! mediator-free columns and B the bare basis rows, the normal equations for
//! any assignment of mediator values are sums of precomputed per-subject
//! blocks scaled by m_i and m_i^2; one F evaluation is then a small
//! assembly plus one Cholesky solve, independent of n_i.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::{estimate_covariance, CorrelationStructure, CovarianceModel};
use crate::dataset::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, scope};
use crate::spline::{build_design, SplineBasis};

/// OLS fit of one mediator on (intercept, exposure, covariates).
#[derive(Debug, Clone, PartialEq)]
pub struct MediatorFit {
    /// 0-based mediator index.
    pub k: usize,
    pub alpha_hat: f64,
    pub alpha_se: f64,
    /// Two-sided normal p-value for alpha.
    pub p_alpha: f64,
    pub gamma_hat: Vec<f64>,
    pub kappa_hat: f64,
}

/// Fit the mediator model M_k ~ intercept + exposure + covariates by OLS
/// with conventional standard errors (residual df = n - q - 2).
pub fn fit_mediator_model(ds: &LongitudinalDataset, k: usize) -> Result<MediatorFit> {
    if k >= ds.p {
        return Err(Error::MediatorIndexOutOfRange {
            index: k + 1,
            count: ds.p,
        });
    }
    let n = ds.n_subjects();
    let q = ds.q;
    let dim = q + 2;
    if n <= dim {
        return Err(Error::InsufficientData {
            context: "mediator model".into(),
            needed: dim + 1,
            have: n,
        });
    }

    let mut x = DMatrix::zeros(n, dim);
    let mut y = DVector::zeros(n);
    for (i, s) in ds.subjects.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = s.exposure;
        for (l, &z) in s.covariates.iter().enumerate() {
            x[(i, 2 + l)] = z;
        }
        y[i] = s.mediators[k];
    }
    let xtx = x.tr_mul(&x);
    let chol = Cholesky::new(xtx).ok_or_else(|| Error::SingularMatrix {
        context: format!("mediator model for mediator {}", k + 1),
    })?;
    let coeffs = chol.solve(&x.tr_mul(&y));
    let residuals = &y - &x * &coeffs;
    let df = (n - dim) as f64;
    let sigma2 = residuals.norm_squared() / df;
    let xtx_inv = chol.inverse();
    let alpha_hat = coeffs[1];
    let alpha_se = (sigma2 * xtx_inv[(1, 1)]).sqrt();

    let z = alpha_hat.abs() / alpha_se;
    let p_alpha = if z.is_finite() {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
    } else if alpha_hat.abs() > 0.0 {
        0.0
    } else {
        1.0
    };

    Ok(MediatorFit {
        k,
        alpha_hat,
        alpha_se,
        p_alpha,
        gamma_hat: (0..q).map(|l| coeffs[2 + l]).collect(),
        kappa_hat: coeffs[0],
    })
}

/// Marginal WLS fit for one mediator: coefficients, weighted residual sums
/// of squares with and without the mediator block, and the F statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    /// 0-based mediator index.
    pub k: usize,
    /// In design layout order: [intercept | exposure | mediator | covariates].
    pub xi_hat: DVector<f64>,
    pub wrss: f64,
    pub wrss_null: f64,
    pub f_stat: f64,
}

/// Dataset-level precomputation for the marginal tests: weight matrices from
/// the mediator-free null model and per-subject cross-product blocks.
pub struct MarginalContext {
    pub cov: CovarianceModel,
    pub basis: SplineBasis,
    pub wrss_null: f64,
    n_covariates: usize,
    width_a: usize,
    basis_dim: usize,
    g_aa: DMatrix<f64>,
    a_vec: DVector<f64>,
    ywy: f64,
    // Per-subject blocks coupling the mediator column to the rest.
    g_ab: Vec<DMatrix<f64>>,
    g_bb: Vec<DMatrix<f64>>,
    b_vec: Vec<DVector<f64>>,
}

impl MarginalContext {
    /// Build the context with weights from the supplied covariance model.
    pub fn with_covariance(
        ds: &LongitudinalDataset,
        basis: &SplineBasis,
        cov: CovarianceModel,
    ) -> Result<Self> {
        let (layout, null_blocks) = build_design(ds, basis, &[])?;
        let l = basis.dim();
        let width_a = layout.width();
        let total_obs = ds.total_observations();
        if total_obs <= width_a + l {
            return Err(Error::InsufficientData {
                context: "marginal model".into(),
                needed: width_a + l + 1,
                have: total_obs,
            });
        }

        let mut g_aa = DMatrix::zeros(width_a, width_a);
        let mut a_vec = DVector::zeros(width_a);
        let mut ywy = 0.0;
        let mut g_ab = Vec::with_capacity(ds.n_subjects());
        let mut g_bb = Vec::with_capacity(ds.n_subjects());
        let mut b_vec = Vec::with_capacity(ds.n_subjects());

        let mut row = vec![0.0; l];
        for (i, s) in ds.subjects.iter().enumerate() {
            let n_i = s.n_obs();
            let a = &null_blocks[i].matrix;
            let y = DVector::from_column_slice(&s.outcomes);

            let mut b = DMatrix::zeros(n_i, l);
            for (j, &t) in s.times.iter().enumerate() {
                basis.eval_into(t, &mut row);
                for (r, &v) in row.iter().enumerate() {
                    b[(j, r)] = v;
                }
            }

            let w = cov.weight_matrix(s)?;
            let wa = &w * a;
            let wb = &w * &b;
            g_aa.gemm_tr(1.0, a, &wa, 1.0);
            a_vec.gemm_tr(1.0, &wa, &y, 1.0);
            ywy += (&w * &y).dot(&y);
            g_ab.push(a.tr_mul(&wb));
            g_bb.push(b.tr_mul(&wb));
            b_vec.push(wb.tr_mul(&y));
        }

        let xi0 = linalg::solve_spd(&g_aa, &a_vec, "marginal null model")?;
        let wrss_null = ywy - 2.0 * xi0.dot(&a_vec) + (&g_aa * &xi0).dot(&xi0);

        Ok(MarginalContext {
            cov,
            basis: basis.clone(),
            wrss_null,
            n_covariates: ds.q,
            width_a,
            basis_dim: l,
            g_aa,
            a_vec,
            ywy,
            g_ab,
            g_bb,
            b_vec,
        })
    }

    /// Build the context, estimating the covariance model from the null
    /// model of the dataset under the given structure.
    pub fn new(
        ds: &LongitudinalDataset,
        basis: &SplineBasis,
        structure: CorrelationStructure,
    ) -> Result<Self> {
        let cov = estimate_covariance(ds, basis, structure)?;
        Self::with_covariance(ds, basis, cov)
    }

    /// Solve the full-model normal equations for the given mediator values
    /// and return (coefficients in [A | B] order, wrss, f).
    fn solve_full(&self, mediator: &[f64]) -> Result<(DVector<f64>, f64, f64)> {
        let wa = self.width_a;
        let l = self.basis_dim;
        let dim = wa + l;

        let mut m = DMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (wa, wa)).copy_from(&self.g_aa);
        let mut top_right = DMatrix::zeros(wa, l);
        let mut bottom_right = DMatrix::zeros(l, l);
        let mut b_sum = DVector::zeros(l);
        for (i, &mi) in mediator.iter().enumerate() {
            linalg::add_scaled(&mut top_right, mi, &self.g_ab[i]);
            linalg::add_scaled(&mut bottom_right, mi * mi, &self.g_bb[i]);
            linalg::add_scaled_vec(&mut b_sum, mi, &self.b_vec[i]);
        }
        m.view_mut((0, wa), (wa, l)).copy_from(&top_right);
        m.view_mut((wa, 0), (l, wa))
            .copy_from(&top_right.transpose());
        m.view_mut((wa, wa), (l, l)).copy_from(&bottom_right);

        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, wa).copy_from(&self.a_vec);
        rhs.rows_mut(wa, l).copy_from(&b_sum);

        let xi = linalg::solve_spd(&m, &rhs, "marginal full model")?;
        let wrss = self.ywy - 2.0 * xi.dot(&rhs) + (&m * &xi).dot(&xi);
        let f = (self.wrss_null - wrss) / wrss;
        Ok((xi, wrss, f))
    }

    /// F statistic for an arbitrary assignment of mediator values.
    pub fn f_statistic(&self, mediator: &[f64]) -> Result<f64> {
        Ok(self.solve_full(mediator)?.2)
    }

    /// Full marginal fit for mediator k of the dataset the context was
    /// built from, with coefficients reordered to the documented layout
    /// [intercept | exposure | mediator | covariates].
    pub fn marginal_fit(&self, ds: &LongitudinalDataset, k: usize) -> Result<MarginalFit> {
        if k >= ds.p {
            return Err(Error::MediatorIndexOutOfRange {
                index: k + 1,
                count: ds.p,
            });
        }
        let mediator: Vec<f64> = ds.subjects.iter().map(|s| s.mediators[k]).collect();
        let (xi_ab, wrss, f_stat) = self.solve_full(&mediator)?;

        let l = self.basis_dim;
        let q = self.n_covariates;
        let mut xi_hat = DVector::zeros(self.width_a + l);
        // A-part layout is [intercept | exposure | covariates].
        xi_hat.rows_mut(0, 2 * l).copy_from(&xi_ab.rows(0, 2 * l));
        xi_hat
            .rows_mut(2 * l, l)
            .copy_from(&xi_ab.rows(self.width_a, l));
        for lq in 0..q {
            xi_hat
                .rows_mut((3 + lq) * l, l)
                .copy_from(&xi_ab.rows((2 + lq) * l, l));
        }
        Ok(MarginalFit {
            k,
            xi_hat,
            wrss,
            wrss_null: self.wrss_null,
            f_stat,
        })
    }
}

/// Fit the marginal varying-coefficient model for mediator k with the given
/// weights. Includes the nested null fit and the F statistic.
pub fn fit_marginal_wls(
    ds: &LongitudinalDataset,
    k: usize,
    basis: &SplineBasis,
    cov: &CovarianceModel,
) -> Result<MarginalFit> {
    let ctx = MarginalContext::with_covariance(ds, basis, cov.clone())?;
    ctx.marginal_fit(ds, k)
}

/// How the permutation p-value is computed from the F counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvalueMode {
    /// #{F_s > F} / S.
    Plain,
    /// (1 + #{F_s > F}) / (S + 1); never exactly zero.
    AddOneSmoothed,
}

/// Options for the permutation test.
#[derive(Debug, Clone, Copy)]
pub struct PermutationOptions {
    /// Number of permutation draws.
    pub permutations: usize,
    pub seed: u64,
    pub pvalue_mode: PvalueMode,
    /// Re-run the whole weight-estimation pipeline on every permuted
    /// dataset instead of reusing the null-model weights. The null model
    /// does not involve the permuted mediator, so this reproduces the same
    /// weights at much higher cost; it exists to verify that equivalence.
    pub reestimate_weights: bool,
}

impl PermutationOptions {
    pub fn new(permutations: usize, seed: u64) -> Self {
        PermutationOptions {
            permutations,
            seed,
            pvalue_mode: PvalueMode::Plain,
            reestimate_weights: false,
        }
    }
}

/// Permutation test result for one mediator.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    /// 0-based mediator index.
    pub k: usize,
    pub f_observed: f64,
    pub f_permuted: Vec<f64>,
    pub p_beta: f64,
    pub seed: u64,
}

fn pvalue_from_counts(observed: f64, permuted: &[f64], mode: PvalueMode) -> f64 {
    let greater = permuted.iter().filter(|&&f| f > observed).count();
    match mode {
        PvalueMode::Plain => greater as f64 / permuted.len() as f64,
        PvalueMode::AddOneSmoothed => (1 + greater) as f64 / (permuted.len() + 1) as f64,
    }
}

/// Run the permutation test for mediator k inside a prepared context.
///
/// Each draw permutes the mediator values across subjects (outcomes, times,
/// exposure, and covariates stay fixed) and recomputes the F statistic; per
/// index s the draw has its own derived RNG stream, so results are
/// deterministic and independent of evaluation order. A failed fit retries
/// with a fresh permutation up to 3 times before aborting.
pub fn permutation_test_in(
    ctx: &MarginalContext,
    ds: &LongitudinalDataset,
    k: usize,
    opts: &PermutationOptions,
) -> Result<PermutationResult> {
    if opts.permutations == 0 {
        return Err(Error::InvalidConfig(
            "permutation count must be at least 1".into(),
        ));
    }
    if k >= ds.p {
        return Err(Error::MediatorIndexOutOfRange {
            index: k + 1,
            count: ds.p,
        });
    }
    let mediator: Vec<f64> = ds.subjects.iter().map(|s| s.mediators[k]).collect();
    {
        let first = mediator[0];
        if mediator.iter().all(|&v| v == first) {
            return Err(Error::InvalidDataset(format!(
                "mediator {} is constant; permutation test undefined",
                k + 1
            )));
        }
    }

    let f_observed = ctx.f_statistic(&mediator)?;

    let eval_f = |values: &[f64]| -> Result<f64> {
        if opts.reestimate_weights {
            let mut permuted_ds = ds.clone();
            for (s, &v) in permuted_ds.subjects.iter_mut().zip(values) {
                s.mediators[k] = v;
            }
            let fresh = MarginalContext::new(&permuted_ds, &ctx.basis, ctx.cov.structure)?;
            fresh.f_statistic(values)
        } else {
            ctx.f_statistic(values)
        }
    };

    let run_one = |s: usize| -> Result<f64> {
        let mut stream = rng::stream(opts.seed, &[scope::PERMUTATION, k as u64, s as u64]);
        let mut last_err = None;
        for _ in 0..3 {
            let mut values = mediator.clone();
            values.shuffle(&mut stream);
            match eval_f(&values) {
                Ok(f) => return Ok(f),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("attempted at least once"))
    };

    let f_permuted = if opts.permutations >= 64 && !opts.reestimate_weights {
        use rayon::prelude::*;
        (0..opts.permutations)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<Vec<f64>>>()?
    } else {
        (0..opts.permutations)
            .map(run_one)
            .collect::<Result<Vec<f64>>>()?
    };

    let p_beta = pvalue_from_counts(f_observed, &f_permuted, opts.pvalue_mode);
    Ok(PermutationResult {
        k,
        f_observed,
        f_permuted,
        p_beta,
        seed: opts.seed,
    })
}

/// Permutation test for mediator k, estimating weights from the null model
/// of the dataset under the given structure.
pub fn permutation_test(
    ds: &LongitudinalDataset,
    k: usize,
    basis: &SplineBasis,
    structure: CorrelationStructure,
    opts: &PermutationOptions,
) -> Result<PermutationResult> {
    let ctx = MarginalContext::new(ds, basis, structure)?;
    permutation_test_in(&ctx, ds, k, opts)
}
