//! Joint spline regression on the screened mediator set and the natural
//! direct/indirect effect curves derived from it.
//!
//! The joint model regresses the outcome on intercept, exposure, all
//! selected mediators, and covariates, each with a time-varying coefficient
//! in the shared basis; weights come from the mediator-free null model. The
//! direct effect curve is (x - x*) times the exposure coefficient function,
//! and each mediator contributes (x - x*) alpha_k times its coefficient
//! function to the indirect effect.

use nalgebra::{DMatrix, DVector};

use crate::covariance::{estimate_covariance, CorrelationStructure, CovarianceModel};
use crate::dataset::{LongitudinalDataset, TimeMap};
use crate::error::{Error, Result};
use crate::linalg;
use crate::permtest::MediatorFit;
use crate::spline::{build_design, DesignLayout, SplineBasis};

/// WLS fit of the joint model over the selected mediators.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    /// Selected mediators, 0-based and sorted ascending.
    pub selected: Vec<usize>,
    pub basis: SplineBasis,
    pub layout: DesignLayout,
    /// Coefficients in layout order [intercept | exposure | mediators... |
    /// covariates...], each block basis_dim wide.
    pub zeta: DVector<f64>,
    pub wrss: f64,
}

/// Fit the joint varying-coefficient model with the given mediator set.
///
/// An empty set degenerates to the exposure+covariate model, in which case
/// the indirect effect is identically zero. The weight matrices are
/// estimated from the null model with all mediators excluded.
pub fn fit_joint_model(
    ds: &LongitudinalDataset,
    selected: &[usize],
    basis: &SplineBasis,
    structure: CorrelationStructure,
) -> Result<JointFit> {
    let cov = estimate_covariance(ds, basis, structure)?;
    fit_joint_model_with(ds, selected, basis, &cov)
}

/// As [`fit_joint_model`] but with a caller-supplied covariance model.
pub fn fit_joint_model_with(
    ds: &LongitudinalDataset,
    selected: &[usize],
    basis: &SplineBasis,
    cov: &CovarianceModel,
) -> Result<JointFit> {
    let mut sel: Vec<usize> = selected.to_vec();
    sel.sort_unstable();
    sel.dedup();

    let (layout, blocks) = build_design(ds, basis, &sel)?;
    let width = layout.width();
    if ds.total_observations() <= width {
        return Err(Error::InsufficientData {
            context: "joint model".into(),
            needed: width + 1,
            have: ds.total_observations(),
        });
    }

    let mut m = DMatrix::zeros(width, width);
    let mut rhs = DVector::zeros(width);
    let mut ywy = 0.0;
    for (i, s) in ds.subjects.iter().enumerate() {
        let d = &blocks[i].matrix;
        let y = DVector::from_column_slice(&s.outcomes);
        let w = cov.weight_matrix(s)?;
        let wd = &w * d;
        m.gemm_tr(1.0, d, &wd, 1.0);
        rhs.gemm_tr(1.0, &wd, &y, 1.0);
        ywy += (&w * &y).dot(&y);
    }
    let zeta = linalg::solve_spd(&m, &rhs, "joint model")?;
    let wrss = ywy - 2.0 * zeta.dot(&rhs) + (&m * &zeta).dot(&zeta);

    Ok(JointFit {
        selected: sel,
        basis: basis.clone(),
        layout,
        zeta,
        wrss,
    })
}

/// Spline-coefficient representation of the effect curves for a fixed
/// exposure contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectCurves {
    pub basis: SplineBasis,
    pub contrast: (f64, f64),
    /// Selected mediators, 0-based, aligned with `alpha` and `zeta_beta`.
    pub selected: Vec<usize>,
    pub alpha: Vec<f64>,
    pub zeta_mu: DVector<f64>,
    pub zeta_eta: DVector<f64>,
    pub zeta_beta: Vec<DVector<f64>>,
    pub zeta_theta: Vec<DVector<f64>>,
    /// Map back to the original time scale, when the dataset was normalized.
    pub time_map: Option<TimeMap>,
}

impl EffectCurves {
    /// Assemble curves from a joint fit and the screening-stage mediator
    /// fits (which provide the alpha estimates).
    pub fn new(
        fit: &JointFit,
        mediator_fits: &[MediatorFit],
        contrast: (f64, f64),
        time_map: Option<TimeMap>,
    ) -> Result<Self> {
        let l = fit.layout.basis_dim;
        let slice = |range: std::ops::Range<usize>| fit.zeta.rows(range.start, l).into_owned();

        let mut alpha = Vec::with_capacity(fit.selected.len());
        for &k in &fit.selected {
            let a = mediator_fits
                .iter()
                .find(|f| f.k == k)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("no mediator fit supplied for mediator {}", k + 1))
                })?
                .alpha_hat;
            alpha.push(a);
        }
        let zeta_beta = (0..fit.selected.len())
            .map(|j| slice(fit.layout.mediator_cols(j)))
            .collect();
        let zeta_theta = (0..fit.layout.n_covariates)
            .map(|q| slice(fit.layout.covariate_cols(q)))
            .collect();

        Ok(EffectCurves {
            basis: fit.basis.clone(),
            contrast,
            selected: fit.selected.clone(),
            alpha,
            zeta_mu: slice(fit.layout.intercept_cols()),
            zeta_eta: slice(fit.layout.exposure_cols()),
            zeta_beta,
            zeta_theta,
            time_map,
        })
    }

    fn basis_dot(&self, coeffs: &DVector<f64>, t: f64) -> Result<f64> {
        let row = self.basis.basis_row(t)?;
        Ok(row.iter().zip(coeffs.iter()).map(|(b, c)| b * c).sum())
    }

    /// Natural direct effect at t: (x - x*) psi(t)' zeta_eta.
    pub fn nde(&self, t: f64) -> Result<f64> {
        let (x, x_star) = self.contrast;
        Ok((x - x_star) * self.basis_dot(&self.zeta_eta, t)?)
    }

    /// Per-mediator indirect components (x - x*) alpha_k psi(t)' zeta_beta_k.
    pub fn nie_components(&self, t: f64) -> Result<Vec<f64>> {
        let (x, x_star) = self.contrast;
        self.alpha
            .iter()
            .zip(&self.zeta_beta)
            .map(|(&a, coeffs)| Ok((x - x_star) * a * self.basis_dot(coeffs, t)?))
            .collect()
    }

    /// Natural indirect effect at t: the sum of the per-mediator components.
    pub fn nie(&self, t: f64) -> Result<f64> {
        Ok(self.nie_components(t)?.iter().sum())
    }
}

/// One grid row of the evaluated effect curves.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectCurvePoint {
    pub t: f64,
    pub t_original: f64,
    pub nde: f64,
    pub nie: f64,
    pub nie_k: Vec<f64>,
}

/// Evaluate NDE/NIE and the per-mediator components on a grid in [0, 1].
pub fn effect_curves(
    fit: &JointFit,
    mediator_fits: &[MediatorFit],
    x: f64,
    x_star: f64,
    grid: &[f64],
    time_map: Option<TimeMap>,
) -> Result<Vec<EffectCurvePoint>> {
    let curves = EffectCurves::new(fit, mediator_fits, (x, x_star), time_map)?;
    grid.iter()
        .map(|&t| {
            let nie_k = curves.nie_components(t)?;
            Ok(EffectCurvePoint {
                t,
                t_original: time_map.map_or(t, |m| m.to_original(t)),
                nde: curves.nde(t)?,
                nie: nie_k.iter().sum(),
                nie_k,
            })
        })
        .collect()
}

/// The default evaluation grid: 101 equally spaced points on [0, 1].
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Write the curve table as CSV with one component column per selected
/// mediator (columns named by the 1-based mediator index).
pub fn write_curves_csv<W: std::io::Write>(
    mut out: W,
    points: &[EffectCurvePoint],
    selected: &[usize],
) -> Result<()> {
    write!(out, "t_normalized,t_original,nde,nie")?;
    for &k in selected {
        write!(out, ",nie_{}", k + 1)?;
    }
    writeln!(out)?;
    for pt in points {
        write!(out, "{},{},{},{}", pt.t, pt.t_original, pt.nde, pt.nie)?;
        for v in &pt.nie_k {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Subject;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic_dataset(n: usize, n_i: usize, p: usize, seed: u64) -> LongitudinalDataset {
        let mut rng = crate::rng::stream(seed, &[41]);
        let gauss = Normal::new(0.0, 1.0).unwrap();
        let subjects = (0..n)
            .map(|i| {
                let x: f64 = rng.gen_range(-2.0..2.0);
                let z1: f64 = rng.gen_range(-1.0..1.0);
                let mediators: Vec<f64> = (0..p)
                    .map(|k| 0.3 * (k as f64 + 1.0) * x + gauss.sample(&mut rng))
                    .collect();
                let mut times: Vec<f64> = (0..n_i).map(|_| rng.gen()).collect();
                times.sort_by(f64::total_cmp);
                let outcomes = times
                    .iter()
                    .map(|&t| {
                        let mut y = 0.4 * x * (0.5 * t * t).exp() + 0.3 * z1 * t;
                        for (k, &m) in mediators.iter().enumerate() {
                            y += 0.2 * (k as f64 + 1.0) * t * m;
                        }
                        y + 0.3 * gauss.sample(&mut rng)
                    })
                    .collect();
                Subject {
                    id: format!("s{i}"),
                    exposure: x,
                    mediators,
                    covariates: vec![z1],
                    times,
                    outcomes,
                }
            })
            .collect();
        LongitudinalDataset {
            subjects,
            p,
            q: 1,
            time_domain: (0.0, 1.0),
            mediator_names: (1..=p).map(|k| format!("m{k}")).collect(),
            covariate_names: vec!["z1".into()],
            time_map: None,
        }
    }

    fn mediator_fits(ds: &LongitudinalDataset) -> Vec<MediatorFit> {
        (0..ds.p)
            .map(|k| crate::permtest::fit_mediator_model(ds, k).unwrap())
            .collect()
    }

    #[test]
    fn empty_selection_gives_zero_indirect_effect() {
        let ds = synthetic_dataset(40, 4, 2, 1);
        let basis = SplineBasis::cubic(1);
        let fit = fit_joint_model(&ds, &[], &basis, CorrelationStructure::Diagonal).unwrap();
        let fits = mediator_fits(&ds);
        let points = effect_curves(&fit, &fits, 1.0, 0.0, &default_grid(), None).unwrap();
        for pt in &points {
            assert_eq!(pt.nie, 0.0);
            assert!(pt.nie_k.is_empty());
        }
        // The direct-effect curve is still a real fit.
        assert!(points.iter().any(|pt| pt.nde.abs() > 1e-3));
    }

    #[test]
    fn joint_fit_matches_lu_normal_equation_oracle() {
        let ds = synthetic_dataset(30, 3, 2, 2);
        let basis = SplineBasis::cubic(1);
        let cov = estimate_covariance(&ds, &basis, CorrelationStructure::Ar1).unwrap();
        let fit = fit_joint_model_with(&ds, &[0, 1], &basis, &cov).unwrap();

        // Oracle: assemble the weighted normal equations with plain loops
        // and solve by LU instead of Cholesky.
        let (layout, blocks) = build_design(&ds, &basis, &[0, 1]).unwrap();
        let width = layout.width();
        let mut m = DMatrix::zeros(width, width);
        let mut rhs = DVector::zeros(width);
        for (i, s) in ds.subjects.iter().enumerate() {
            let d = &blocks[i].matrix;
            let w = cov.weight_matrix(s).unwrap();
            let n_i = s.n_obs();
            for a in 0..width {
                for b in 0..width {
                    let mut acc = 0.0;
                    for r1 in 0..n_i {
                        for r2 in 0..n_i {
                            acc += d[(r1, a)] * w[(r1, r2)] * d[(r2, b)];
                        }
                    }
                    m[(a, b)] += acc;
                }
                let mut acc = 0.0;
                for r1 in 0..n_i {
                    for r2 in 0..n_i {
                        acc += d[(r1, a)] * w[(r1, r2)] * s.outcomes[r2];
                    }
                }
                rhs[a] += acc;
            }
        }
        let oracle: DVector<f64> = m.lu().solve(&rhs).unwrap();
        for c in 0..width {
            let rel = (fit.zeta[c] - oracle[c]).abs() / (1.0 + oracle[c].abs());
            assert!(
                rel < 1e-8,
                "coefficient {c}: {} vs {}",
                fit.zeta[c],
                oracle[c]
            );
        }
    }

    #[test]
    fn nie_components_sum_exactly() {
        let ds = synthetic_dataset(50, 4, 3, 3);
        let basis = SplineBasis::cubic(2);
        let fit = fit_joint_model(&ds, &[0, 1, 2], &basis, CorrelationStructure::Diagonal).unwrap();
        let fits = mediator_fits(&ds);
        let points = effect_curves(&fit, &fits, 1.0, 0.0, &default_grid(), None).unwrap();
        for pt in &points {
            let total: f64 = pt.nie_k.iter().sum();
            assert!((pt.nie - total).abs() < 1e-12);
        }
    }

    #[test]
    fn curves_are_exactly_linear_in_contrast() {
        let ds = synthetic_dataset(40, 4, 2, 4);
        let basis = SplineBasis::cubic(1);
        let fit = fit_joint_model(&ds, &[0, 1], &basis, CorrelationStructure::Diagonal).unwrap();
        let fits = mediator_fits(&ds);
        let unit = effect_curves(&fit, &fits, 1.0, 0.0, &default_grid(), None).unwrap();
        let double = effect_curves(&fit, &fits, 2.0, 0.0, &default_grid(), None).unwrap();
        for (u, d) in unit.iter().zip(&double) {
            assert_eq!(2.0 * u.nde, d.nde);
            assert_eq!(2.0 * u.nie, d.nie);
        }
    }

    #[test]
    fn null_contrast_gives_zero_curves() {
        let ds = synthetic_dataset(40, 4, 2, 5);
        let basis = SplineBasis::cubic(1);
        let fit = fit_joint_model(&ds, &[0, 1], &basis, CorrelationStructure::Diagonal).unwrap();
        let fits = mediator_fits(&ds);
        let points = effect_curves(&fit, &fits, 1.5, 1.5, &default_grid(), None).unwrap();
        for pt in &points {
            assert_eq!(pt.nde, 0.0);
            assert_eq!(pt.nie, 0.0);
        }
    }

    #[test]
    fn zero_alpha_zeroes_the_indirect_effect() {
        let ds = synthetic_dataset(40, 4, 2, 6);
        let basis = SplineBasis::cubic(1);
        let fit = fit_joint_model(&ds, &[0, 1], &basis, CorrelationStructure::Diagonal).unwrap();
        let mut fits = mediator_fits(&ds);
        for f in &mut fits {
            f.alpha_hat = 0.0;
        }
        let points = effect_curves(&fit, &fits, 1.0, 0.0, &default_grid(), None).unwrap();
        for pt in &points {
            assert_eq!(pt.nie, 0.0);
        }
    }

    #[test]
    fn grid_points_outside_domain_are_rejected() {
        let ds = synthetic_dataset(30, 3, 1, 7);
        let basis = SplineBasis::cubic(1);
        let fit = fit_joint_model(&ds, &[0], &basis, CorrelationStructure::Diagonal).unwrap();
        let fits = mediator_fits(&ds);
        assert!(effect_curves(&fit, &fits, 1.0, 0.0, &[0.5, 1.2], None).is_err());
    }

    #[test]
    fn curve_csv_has_component_columns() {
        let ds = synthetic_dataset(30, 3, 2, 8);
        let basis = SplineBasis::cubic(1);
        let fit = fit_joint_model(&ds, &[0, 1], &basis, CorrelationStructure::Diagonal).unwrap();
        let fits = mediator_fits(&ds);
        let points = effect_curves(&fit, &fits, 1.0, 0.0, &[0.0, 0.5, 1.0], None).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &points, &fit.selected).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_normalized,t_original,nde,nie,nie_1,nie_2"));
        assert_eq!(text.lines().count(), 4);
    }
}
