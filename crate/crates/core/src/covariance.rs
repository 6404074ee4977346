//! Estimation of the residual covariance for the varying-coefficient model:
//! a time-varying variance function, a within-subject correlation parameter,
//! and the per-subject WLS weight matrices built from them.
//!
//! The pipeline fits the mediator-free model by OLS, smooths the squared
//! residuals to get the variance function V(t), standardizes the residuals,
//! and estimates the correlation parameter by the moment or grid estimator
//! matching the chosen structure. Weights are W_i = C_i^-1 / n_i with
//! C_i = V_i^(1/2) R_i(rho) V_i^(1/2).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{LongitudinalDataset, Subject};
use crate::error::{Error, Result};
use crate::linalg;
use crate::spline::{build_design, DesignBlock, SplineBasis};

/// Within-subject correlation structure of the outcome errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationStructure {
    /// Independent observations.
    Diagonal,
    /// Autoregressive of order 1 in the observation index: rho^|j1-j2|.
    Ar1,
    /// Exchangeable: constant correlation rho between any two observations.
    Uniform,
    /// Decay in continuous time distance: rho^|t_j1-t_j2|.
    Power,
}

impl CorrelationStructure {
    pub const ALL: [CorrelationStructure; 4] = [
        CorrelationStructure::Diagonal,
        CorrelationStructure::Ar1,
        CorrelationStructure::Uniform,
        CorrelationStructure::Power,
    ];
}

impl std::fmt::Display for CorrelationStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CorrelationStructure::Diagonal => "diagonal",
            CorrelationStructure::Ar1 => "ar1",
            CorrelationStructure::Uniform => "uniform",
            CorrelationStructure::Power => "power",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for CorrelationStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diagonal" | "diag" => Ok(CorrelationStructure::Diagonal),
            "ar1" | "ar" => Ok(CorrelationStructure::Ar1),
            "uniform" | "exchangeable" => Ok(CorrelationStructure::Uniform),
            "power" => Ok(CorrelationStructure::Power),
            other => Err(Error::InvalidConfig(format!(
                "unknown correlation structure '{other}' (expected diagonal, ar1, uniform, power)"
            ))),
        }
    }
}

/// Spline representation of the time-varying residual variance, floored at
/// `v_min` so implied covariance matrices stay positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFn {
    basis: SplineBasis,
    coeffs: DVector<f64>,
    pub v_min: f64,
}

impl VarianceFn {
    /// Constant variance, exact at every t (the basis sums to one).
    pub fn constant(value: f64) -> Self {
        let basis = SplineBasis::cubic(0);
        let dim = basis.dim();
        VarianceFn {
            basis,
            coeffs: DVector::from_element(dim, value),
            v_min: (0.05 * value).max(1e-12),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut row = vec![0.0; self.basis.dim()];
        self.basis.eval_into(t.clamp(0.0, 1.0), &mut row);
        let v: f64 = row.iter().zip(self.coeffs.iter()).map(|(b, c)| b * c).sum();
        v.max(self.v_min)
    }
}

/// Estimated covariance model: structure tag, correlation parameter (absent
/// for the diagonal structure), and variance function.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub structure: CorrelationStructure,
    pub rho: Option<f64>,
    pub variance: VarianceFn,
}

impl CovarianceModel {
    pub fn new(
        structure: CorrelationStructure,
        rho: Option<f64>,
        variance: VarianceFn,
    ) -> Result<Self> {
        match structure {
            CorrelationStructure::Diagonal => {
                if rho.is_some() {
                    return Err(Error::InvalidConfig(
                        "diagonal structure takes no correlation parameter".into(),
                    ));
                }
            }
            CorrelationStructure::Ar1 | CorrelationStructure::Uniform => {
                let r = rho
                    .ok_or_else(|| Error::InvalidConfig("correlation parameter required".into()))?;
                if !(-0.99..=0.99).contains(&r) {
                    return Err(Error::InvalidConfig(format!(
                        "correlation {r} outside (-0.99, 0.99)"
                    )));
                }
            }
            CorrelationStructure::Power => {
                let r = rho
                    .ok_or_else(|| Error::InvalidConfig("correlation parameter required".into()))?;
                if !(0.0..=0.99).contains(&r) || r == 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "power correlation {r} outside (0, 0.99)"
                    )));
                }
            }
        }
        Ok(CovarianceModel {
            structure,
            rho,
            variance,
        })
    }

    /// The implied covariance matrix C_i = V^(1/2) R(rho) V^(1/2) at the
    /// given observation times.
    pub fn covariance_matrix(&self, times: &[f64]) -> DMatrix<f64> {
        let r = correlation_matrix(self.structure, self.rho.unwrap_or(0.0), times);
        let sd: Vec<f64> = times
            .iter()
            .map(|&t| self.variance.eval(t).sqrt())
            .collect();
        DMatrix::from_fn(times.len(), times.len(), |a, b| r[(a, b)] * sd[a] * sd[b])
    }

    /// WLS weight matrix W_i = C_i^-1 / n_i for one subject.
    pub fn weight_matrix(&self, subject: &Subject) -> Result<DMatrix<f64>> {
        let n_i = subject.n_obs();
        if self.structure == CorrelationStructure::Diagonal {
            let mut w = DMatrix::zeros(n_i, n_i);
            for (j, &t) in subject.times.iter().enumerate() {
                w[(j, j)] = 1.0 / (n_i as f64 * self.variance.eval(t));
            }
            return Ok(w);
        }
        let c = self.covariance_matrix(&subject.times);
        let inv = linalg::invert_spd(&c, &subject.id)?;
        Ok(inv / n_i as f64)
    }

    /// Weight matrices for every subject, in dataset order.
    pub fn weight_matrices(&self, subjects: &[Subject]) -> Result<Vec<DMatrix<f64>>> {
        subjects.iter().map(|s| self.weight_matrix(s)).collect()
    }
}

/// Correlation matrix R(rho) for the given structure at the given times.
pub fn correlation_matrix(
    structure: CorrelationStructure,
    rho: f64,
    times: &[f64],
) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            return 1.0;
        }
        match structure {
            CorrelationStructure::Diagonal => 0.0,
            CorrelationStructure::Ar1 => rho.powi((a as i32 - b as i32).abs()),
            CorrelationStructure::Uniform => rho,
            CorrelationStructure::Power => rho.powf((times[a] - times[b]).abs()),
        }
    })
}

/// OLS residuals of the mediator-free model (the null model of every
/// marginal test and of the joint fit).
pub fn null_residuals(ds: &LongitudinalDataset, basis: &SplineBasis) -> Result<Vec<DVector<f64>>> {
    let (_, blocks) = build_design(ds, basis, &[])?;
    let all: Vec<usize> = (0..ds.n_subjects()).collect();
    ols_residuals_on(ds, &all, &blocks)
}

fn ols_residuals_on(
    ds: &LongitudinalDataset,
    subset: &[usize],
    blocks: &[DesignBlock],
) -> Result<Vec<DVector<f64>>> {
    let width = blocks[0].matrix.ncols();
    let mut m = DMatrix::zeros(width, width);
    let mut rhs = DVector::zeros(width);
    for &i in subset {
        let a = &blocks[i].matrix;
        let y = DVector::from_column_slice(&ds.subjects[i].outcomes);
        m.gemm_tr(1.0, a, a, 1.0);
        rhs.gemm_tr(1.0, a, &y, 1.0);
    }
    let coeffs = linalg::solve_spd(&m, &rhs, "null-model OLS")?;
    Ok(subset
        .iter()
        .map(|&i| {
            let y = DVector::from_column_slice(&ds.subjects[i].outcomes);
            y - &blocks[i].matrix * &coeffs
        })
        .collect())
}

/// Fit the variance function V(t): a spline least-squares fit of the squared
/// residuals on time, floored at 5% of the mean squared residual.
///
/// The unconstrained fit can cross zero between knots; a floor tied to the
/// residual scale keeps the implied weights bounded (a near-zero floor lets
/// single observations dominate the weighted fits) without distorting real
/// heteroscedasticity of moderate range.
pub fn estimate_variance_fn(
    times: &[&[f64]],
    residuals: &[DVector<f64>],
    basis: &SplineBasis,
) -> Result<VarianceFn> {
    let l = basis.dim();
    let pooled: usize = residuals.iter().map(|r| r.len()).sum();
    if pooled <= l {
        return Err(Error::InsufficientData {
            context: "variance function fit".into(),
            needed: l + 1,
            have: pooled,
        });
    }
    let mut m = DMatrix::zeros(l, l);
    let mut rhs = DVector::zeros(l);
    let mut row = vec![0.0; l];
    let mut sum_sq = 0.0;
    for (ts, rs) in times.iter().zip(residuals) {
        for (&t, &r) in ts.iter().zip(rs.iter()) {
            basis.eval_into(t, &mut row);
            let r2 = r * r;
            sum_sq += r2;
            for a in 0..l {
                rhs[a] += row[a] * r2;
                for b in 0..l {
                    m[(a, b)] += row[a] * row[b];
                }
            }
        }
    }
    let coeffs = linalg::solve_spd(&m, &rhs, "variance function fit")?;
    let msr = sum_sq / pooled as f64;
    let v_min = (0.05 * msr).max(1e-12);
    Ok(VarianceFn {
        basis: basis.clone(),
        coeffs,
        v_min,
    })
}

/// Estimate the correlation parameter from standardized residuals
/// e_ij = r_ij / sqrt(V(t_ij)).
///
/// Uniform: per-subject mean pairwise product, averaged over subjects.
/// AR1: pooled mean of adjacent products (index lag 1).
/// Power: grid search over rho in {0.01, ..., 0.98} minimizing the squared
/// distance between pair products and rho^d with d the time distance.
pub fn estimate_rho(
    std_residuals: &[DVector<f64>],
    times: &[&[f64]],
    structure: CorrelationStructure,
) -> Result<f64> {
    if structure == CorrelationStructure::Diagonal {
        return Err(Error::InvalidConfig(
            "diagonal structure has no correlation parameter".into(),
        ));
    }
    let usable = std_residuals.iter().filter(|e| e.len() >= 2).count();
    if usable == 0 {
        return Err(Error::InsufficientData {
            context: "correlation estimation".into(),
            needed: 2,
            have: 1,
        });
    }
    let max_ni = std_residuals.iter().map(|e| e.len()).max().unwrap_or(0);

    match structure {
        CorrelationStructure::Diagonal => unreachable!(),
        CorrelationStructure::Uniform => {
            let mut acc = 0.0;
            let mut subjects = 0usize;
            for e in std_residuals {
                let n_i = e.len();
                if n_i < 2 {
                    continue;
                }
                let mut pair_sum = 0.0;
                for j1 in 0..n_i {
                    for j2 in (j1 + 1)..n_i {
                        pair_sum += e[j1] * e[j2];
                    }
                }
                acc += pair_sum / (n_i * (n_i - 1) / 2) as f64;
                subjects += 1;
            }
            let raw = acc / subjects as f64;
            // Exchangeable correlation is only positive definite above
            // -1/(n_i - 1); clamp inside that and the declared range.
            let lo = if max_ni > 1 {
                (-0.99f64).max(-0.99 / (max_ni as f64 - 1.0))
            } else {
                -0.99
            };
            Ok(raw.clamp(lo, 0.99))
        }
        CorrelationStructure::Ar1 => {
            let mut acc = 0.0;
            let mut count = 0usize;
            for e in std_residuals {
                for j in 1..e.len() {
                    acc += e[j - 1] * e[j];
                    count += 1;
                }
            }
            Ok((acc / count as f64).clamp(-0.99, 0.99))
        }
        CorrelationStructure::Power => {
            let mut pairs: Vec<(f64, f64)> = Vec::new();
            for (e, ts) in std_residuals.iter().zip(times) {
                let n_i = e.len();
                for j1 in 0..n_i {
                    for j2 in (j1 + 1)..n_i {
                        pairs.push((e[j1] * e[j2], (ts[j1] - ts[j2]).abs()));
                    }
                }
            }
            let mut best = (0.01, f64::INFINITY);
            for step in 1..=98 {
                let rho = step as f64 / 100.0;
                let ln_rho = rho.ln();
                let loss: f64 = pairs
                    .iter()
                    .map(|&(prod, d)| {
                        let diff = prod - (d * ln_rho).exp();
                        diff * diff
                    })
                    .sum();
                if loss < best.1 {
                    best = (rho, loss);
                }
            }
            Ok(best.0)
        }
    }
}

/// Run the full estimation pipeline on the whole dataset: null OLS
/// residuals, variance function, correlation parameter.
pub fn estimate_covariance(
    ds: &LongitudinalDataset,
    basis: &SplineBasis,
    structure: CorrelationStructure,
) -> Result<CovarianceModel> {
    let (_, blocks) = build_design(ds, basis, &[])?;
    let all: Vec<usize> = (0..ds.n_subjects()).collect();
    estimate_covariance_on_subjects(ds, &all, basis, structure, &blocks)
}

pub(crate) fn estimate_covariance_on_subjects(
    ds: &LongitudinalDataset,
    subset: &[usize],
    _basis: &SplineBasis,
    structure: CorrelationStructure,
    blocks: &[DesignBlock],
) -> Result<CovarianceModel> {
    let residuals = ols_residuals_on(ds, subset, blocks)?;
    let times: Vec<&[f64]> = subset
        .iter()
        .map(|&i| ds.subjects[i].times.as_slice())
        .collect();
    // The variance trend is a nuisance function; the knot-free cubic basis
    // represents low-frequency trends (constant through cubic) exactly while
    // keeping the boundary coefficients stable under sparse sampling.
    let variance = estimate_variance_fn(&times, &residuals, &SplineBasis::cubic(0))?;
    let rho = if structure == CorrelationStructure::Diagonal {
        None
    } else {
        let standardized: Vec<DVector<f64>> = residuals
            .iter()
            .zip(&times)
            .map(|(r, ts)| {
                DVector::from_iterator(
                    r.len(),
                    r.iter()
                        .zip(ts.iter())
                        .map(|(&v, &t)| v / variance.eval(t).sqrt()),
                )
            })
            .collect();
        Some(estimate_rho(&standardized, &times, structure)?)
    };
    CovarianceModel::new(structure, rho, variance)
}

/// WLS fit of the mediator-free model on a subject subset; used by the
/// cross-validation scorer.
pub(crate) fn fit_null_wls_on_subjects(
    ds: &LongitudinalDataset,
    subset: &[usize],
    basis: &SplineBasis,
    structure: CorrelationStructure,
    blocks: &[DesignBlock],
) -> Result<DVector<f64>> {
    let cov = estimate_covariance_on_subjects(ds, subset, basis, structure, blocks)?;
    let width = blocks[0].matrix.ncols();
    let mut m = DMatrix::zeros(width, width);
    let mut rhs = DVector::zeros(width);
    for &i in subset {
        let a = &blocks[i].matrix;
        let y = DVector::from_column_slice(&ds.subjects[i].outcomes);
        let w = cov.weight_matrix(&ds.subjects[i])?;
        let wa = &w * a;
        m.gemm_tr(1.0, a, &wa, 1.0);
        rhs.gemm_tr(1.0, &wa, &y, 1.0);
    }
    linalg::solve_spd(&m, &rhs, "null-model WLS")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Subject;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn dataset_with_outcome(
        n: usize,
        n_i: usize,
        seed: u64,
        outcome: impl Fn(usize, f64, &mut rand_chacha::ChaCha8Rng) -> f64,
    ) -> LongitudinalDataset {
        let mut rng = crate::rng::stream(seed, &[21]);
        let subjects = (0..n)
            .map(|i| {
                let mut times: Vec<f64> = (0..n_i).map(|_| rng.gen()).collect();
                times.sort_by(f64::total_cmp);
                let outcomes = times.iter().map(|&t| outcome(i, t, &mut rng)).collect();
                Subject {
                    id: format!("s{i}"),
                    exposure: rng.gen_range(-1.0..1.0),
                    mediators: vec![],
                    covariates: vec![],
                    times,
                    outcomes,
                }
            })
            .collect();
        LongitudinalDataset {
            subjects,
            p: 0,
            q: 0,
            time_domain: (0.0, 1.0),
            mediator_names: vec![],
            covariate_names: vec![],
            time_map: None,
        }
    }

    #[test]
    fn exact_spline_outcome_gives_zero_residuals() {
        let basis = SplineBasis::cubic(2);
        let ds = dataset_with_outcome(10, 5, 1, |_, t, _| 1.5 + 0.5 * t);
        let residuals = null_residuals(&ds, &basis).unwrap();
        for r in residuals {
            assert!(r.amax() < 1e-9, "max residual {}", r.amax());
        }
    }

    #[test]
    fn constant_outcome_gives_zero_residuals() {
        let basis = SplineBasis::cubic(3);
        let ds = dataset_with_outcome(8, 4, 2, |_, _, _| 4.2);
        let residuals = null_residuals(&ds, &basis).unwrap();
        for r in residuals {
            assert!(r.amax() < 1e-9);
        }
    }

    #[test]
    fn residuals_match_stacked_normal_equation_oracle() {
        let basis = SplineBasis::cubic(1);
        let ds = dataset_with_outcome(30, 4, 3, |_, t, rng| t.sin() + rng.gen_range(-0.5..0.5));
        let residuals = null_residuals(&ds, &basis).unwrap();

        // Oracle: stack all blocks into one matrix and solve by SVD.
        let (_, blocks) = build_design(&ds, &basis, &[]).unwrap();
        let total: usize = ds.subjects.iter().map(|s| s.n_obs()).sum();
        let width = blocks[0].matrix.ncols();
        let mut big = DMatrix::zeros(total, width);
        let mut y = DVector::zeros(total);
        let mut row = 0;
        for (i, s) in ds.subjects.iter().enumerate() {
            for j in 0..s.n_obs() {
                big.row_mut(row).copy_from(&blocks[i].matrix.row(j));
                y[row] = s.outcomes[j];
                row += 1;
            }
        }
        let coeffs = big.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        let mut row = 0;
        for (i, s) in ds.subjects.iter().enumerate() {
            for (j, &obs) in s.outcomes.iter().enumerate() {
                let oracle = obs - blocks[i].matrix.row(j).transpose().dot(&coeffs);
                let rel = (residuals[i][j] - oracle).abs() / (1.0 + oracle.abs());
                assert!(rel < 1e-8, "subject {i} obs {j}: {rel}");
                row += 1;
            }
        }
        assert_eq!(row, total);
    }

    #[test]
    fn variance_fit_recovers_homoscedastic_level() {
        let mut rng = crate::rng::stream(4, &[99]);
        let gauss = Normal::new(0.0, 2.0f64.sqrt()).unwrap();
        let n = 100;
        let n_i = 10;
        let mut times_store: Vec<Vec<f64>> = Vec::new();
        let mut residuals = Vec::new();
        for _ in 0..n {
            let mut ts: Vec<f64> = (0..n_i).map(|_| rng.gen()).collect();
            ts.sort_by(f64::total_cmp);
            residuals.push(DVector::from_iterator(
                n_i,
                (0..n_i).map(|_| gauss.sample(&mut rng)),
            ));
            times_store.push(ts);
        }
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        let vf = estimate_variance_fn(&times, &residuals, &SplineBasis::cubic(0)).unwrap();
        for step in 0..=100 {
            let t = step as f64 / 100.0;
            assert!((vf.eval(t) - 2.0).abs() < 0.5, "V({t}) = {}", vf.eval(t));
        }
    }

    #[test]
    fn variance_fit_floors_zero_residuals() {
        let times_store: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![0.1 * i as f64 / 10.0, 0.5, 0.9])
            .collect();
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        let residuals: Vec<DVector<f64>> = (0..10).map(|_| DVector::zeros(3)).collect();
        let vf = estimate_variance_fn(&times, &residuals, &SplineBasis::cubic(1)).unwrap();
        assert_eq!(vf.eval(0.3), vf.v_min);
        assert!(vf.v_min > 0.0);
    }

    #[test]
    fn variance_fit_tracks_increasing_curve() {
        // Residual variance 1.5 + 2 t^2: the fitted curve must slope upward.
        let mut rng = crate::rng::stream(5, &[0]);
        let n = 200;
        let n_i = 10;
        let mut times_store: Vec<Vec<f64>> = Vec::new();
        let mut residuals = Vec::new();
        for _ in 0..n {
            let mut ts: Vec<f64> = (0..n_i).map(|_| rng.gen()).collect();
            ts.sort_by(f64::total_cmp);
            residuals.push(DVector::from_iterator(
                n_i,
                ts.iter().map(|&t| {
                    let sd = (1.5 + 2.0 * t * t).sqrt();
                    let raw: f64 = Normal::new(0.0, sd).unwrap().sample(&mut rng);
                    raw
                }),
            ));
            times_store.push(ts);
        }
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        let vf = estimate_variance_fn(&times, &residuals, &SplineBasis::cubic(2)).unwrap();
        assert!(vf.eval(0.9) > vf.eval(0.1));
        // Correlation with the true curve on a grid is positive.
        let grid: Vec<f64> = (0..=50).map(|s| s as f64 / 50.0).collect();
        let truth: Vec<f64> = grid.iter().map(|&t| 1.5 + 2.0 * t * t).collect();
        let fitted: Vec<f64> = grid.iter().map(|&t| vf.eval(t)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mt, mf) = (mean(&truth), mean(&fitted));
        let cov: f64 = truth
            .iter()
            .zip(&fitted)
            .map(|(a, b)| (a - mt) * (b - mf))
            .sum();
        assert!(cov > 0.0);
    }

    #[test]
    fn rho_near_zero_for_independent_residuals() {
        let mut rng = crate::rng::stream(6, &[0]);
        let gauss = Normal::new(0.0, 1.0).unwrap();
        let n = 200;
        let n_i = 10;
        let mut times_store = Vec::new();
        let mut residuals = Vec::new();
        for _ in 0..n {
            let mut ts: Vec<f64> = (0..n_i).map(|_| rng.gen()).collect();
            ts.sort_by(f64::total_cmp);
            times_store.push(ts);
            residuals.push(DVector::from_iterator(
                n_i,
                (0..n_i).map(|_| gauss.sample(&mut rng)),
            ));
        }
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        for structure in [CorrelationStructure::Ar1, CorrelationStructure::Uniform] {
            let rho = estimate_rho(&residuals, &times, structure).unwrap();
            assert!(rho.abs() < 0.1, "{structure}: {rho}");
        }
    }

    #[test]
    fn ar1_estimator_recovers_strong_correlation() {
        let mut rng = crate::rng::stream(7, &[0]);
        let gauss = Normal::new(0.0, 1.0).unwrap();
        let rho_true: f64 = 0.8;
        let innov = (1.0 - rho_true * rho_true).sqrt();
        let n = 100;
        let n_i = 10;
        let mut times_store = Vec::new();
        let mut residuals = Vec::new();
        for _ in 0..n {
            let ts: Vec<f64> = (0..n_i).map(|j| j as f64 / (n_i - 1) as f64).collect();
            let mut e = vec![0.0; n_i];
            e[0] = gauss.sample(&mut rng);
            for j in 1..n_i {
                e[j] = rho_true * e[j - 1] + innov * gauss.sample(&mut rng);
            }
            times_store.push(ts);
            residuals.push(DVector::from_vec(e));
        }
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        let rho = estimate_rho(&residuals, &times, CorrelationStructure::Ar1).unwrap();
        assert!((0.6..0.95).contains(&rho), "rho = {rho}");
    }

    #[test]
    fn uniform_estimator_clamps_perfect_correlation() {
        let times_store: Vec<Vec<f64>> = (0..20).map(|_| vec![0.2, 0.8]).collect();
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        let residuals: Vec<DVector<f64>> =
            (0..20).map(|_| DVector::from_vec(vec![1.0, 1.0])).collect();
        let rho = estimate_rho(&residuals, &times, CorrelationStructure::Uniform).unwrap();
        assert_eq!(rho, 0.99);
    }

    #[test]
    fn power_grid_search_recovers_time_decay() {
        // Pairs with correlation rho^|t1-t2| at assorted time gaps.
        let mut rng = crate::rng::stream(12, &[0]);
        let rho_true: f64 = 0.4;
        let gauss = Normal::new(0.0, 1.0).unwrap();
        let mut times_store = Vec::new();
        let mut residuals = Vec::new();
        for _ in 0..400 {
            let t1: f64 = rng.gen();
            let t2: f64 = rng.gen();
            let (t1, t2) = (t1.min(t2), t1.max(t2).max(t1.min(t2) + 1e-9));
            let c = rho_true.powf(t2 - t1);
            let x1: f64 = gauss.sample(&mut rng);
            let x2: f64 = c * x1 + (1.0 - c * c).sqrt() * gauss.sample(&mut rng);
            times_store.push(vec![t1, t2]);
            residuals.push(DVector::from_vec(vec![x1, x2]));
        }
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        let rho = estimate_rho(&residuals, &times, CorrelationStructure::Power).unwrap();
        assert!((rho - rho_true).abs() < 0.15, "rho = {rho}");
    }

    #[test]
    fn rho_estimation_requires_repeated_measures() {
        let times_store: Vec<Vec<f64>> = (0..5).map(|_| vec![0.5]).collect();
        let times: Vec<&[f64]> = times_store.iter().map(|t| t.as_slice()).collect();
        let residuals: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_vec(vec![1.0])).collect();
        assert!(matches!(
            estimate_rho(&residuals, &times, CorrelationStructure::Ar1),
            Err(Error::InsufficientData { .. })
        ));
    }

    fn subject_with_times(times: Vec<f64>) -> Subject {
        Subject {
            id: "s".into(),
            exposure: 0.0,
            mediators: vec![],
            covariates: vec![],
            outcomes: vec![0.0; times.len()],
            times,
        }
    }

    #[test]
    fn diagonal_weight_is_scaled_identity_for_constant_variance() {
        let cov = CovarianceModel::new(
            CorrelationStructure::Diagonal,
            None,
            VarianceFn::constant(2.0),
        )
        .unwrap();
        let s = subject_with_times(vec![0.1, 0.3, 0.6, 0.9]);
        let w = cov.weight_matrix(&s).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 0.125 } else { 0.0 };
                assert!((w[(a, b)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_weight_matches_hand_inverse() {
        let cov = CovarianceModel::new(
            CorrelationStructure::Uniform,
            Some(0.3),
            VarianceFn::constant(1.0),
        )
        .unwrap();
        let s = subject_with_times(vec![0.2, 0.7]);
        let w = cov.weight_matrix(&s).unwrap();
        // C = [[1, .3], [.3, 1]], W = C^-1 / 2.
        assert!((w[(0, 0)] - 0.549_450_549_450_549_4).abs() < 1e-10);
        assert!((w[(0, 1)] + 0.164_835_164_835_164_84).abs() < 1e-10);
        assert!((w[(0, 1)] - w[(1, 0)]).abs() < 1e-14);
    }

    #[test]
    fn ar1_weight_matches_tridiagonal_closed_form() {
        let rho: f64 = 0.6;
        let n_i: usize = 6;
        let cov = CovarianceModel::new(
            CorrelationStructure::Ar1,
            Some(rho),
            VarianceFn::constant(1.0),
        )
        .unwrap();
        let s = subject_with_times((0..n_i).map(|j| j as f64 / (n_i - 1) as f64).collect());
        let w = cov.weight_matrix(&s).unwrap();
        let scale = 1.0 / ((1.0 - rho * rho) * n_i as f64);
        for a in 0..n_i {
            for b in 0..n_i {
                let expected = if a == b {
                    let interior = a > 0 && a + 1 < n_i;
                    scale * if interior { 1.0 + rho * rho } else { 1.0 }
                } else if a.abs_diff(b) == 1 {
                    -scale * rho
                } else {
                    0.0
                };
                assert!(
                    (w[(a, b)] - expected).abs() < 1e-10,
                    "entry ({a},{b}): {} vs {expected}",
                    w[(a, b)]
                );
            }
        }
    }

    #[test]
    fn covariance_matrices_are_spd_across_structures() {
        let mut rng = crate::rng::stream(8, &[0]);
        for structure in CorrelationStructure::ALL {
            for _ in 0..20 {
                let rho = match structure {
                    CorrelationStructure::Diagonal => None,
                    CorrelationStructure::Power => Some(rng.gen_range(0.05..0.95)),
                    CorrelationStructure::Ar1 => Some(rng.gen_range(-0.9..0.95)),
                    // Exchangeable matrices need rho > -1/(n_i - 1).
                    CorrelationStructure::Uniform => Some(rng.gen_range(-0.1..0.95)),
                };
                let cov = CovarianceModel::new(
                    structure,
                    rho,
                    VarianceFn::constant(rng.gen_range(0.5..3.0)),
                )
                .unwrap();
                let n_i = rng.gen_range(2..8);
                let mut ts: Vec<f64> = (0..n_i).map(|_| rng.gen()).collect();
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                let c = cov.covariance_matrix(&ts);
                assert!((&c - c.transpose()).amax() < 1e-14);
                let eig = c.symmetric_eigenvalues();
                assert!(eig.min() > 0.0, "{structure}: min eig {}", eig.min());
            }
        }
    }

    #[test]
    fn correlation_entries_follow_structure() {
        let times: Vec<f64> = vec![0.0, 0.15, 0.4, 0.75];
        let rho = 0.7;
        let r_ar = correlation_matrix(CorrelationStructure::Ar1, rho, &times);
        let r_pw = correlation_matrix(CorrelationStructure::Power, rho, &times);
        for a in 0..4 {
            for b in 0..4 {
                let lag = (a as i32 - b as i32).abs();
                assert_eq!(r_ar[(a, b)], rho.powi(lag));
                let d = (times[a] - times[b]).abs();
                assert!((r_pw[(a, b)] - rho.powf(d)).abs() < 1e-15);
            }
        }
        // Power decays monotonically in time distance.
        assert!(r_pw[(0, 1)] > r_pw[(0, 2)] && r_pw[(0, 2)] > r_pw[(0, 3)]);
    }

    #[test]
    fn weight_times_scaled_covariance_is_identity() {
        let mut rng = crate::rng::stream(9, &[0]);
        for structure in CorrelationStructure::ALL {
            let rho = match structure {
                CorrelationStructure::Diagonal => None,
                CorrelationStructure::Power => Some(0.4),
                _ => Some(0.5),
            };
            let cov = CovarianceModel::new(structure, rho, VarianceFn::constant(1.7)).unwrap();
            let n_i = 5;
            let mut ts: Vec<f64> = (0..n_i).map(|_| rng.gen()).collect();
            ts.sort_by(f64::total_cmp);
            let s = subject_with_times(ts.clone());
            let w = cov.weight_matrix(&s).unwrap();
            let c = cov.covariance_matrix(&ts);
            let prod = &w * (c * n_i as f64);
            let eye = DMatrix::<f64>::identity(n_i, n_i);
            assert!((prod - eye).amax() < 1e-8, "{structure}");
        }
    }
}
