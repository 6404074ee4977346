//! B-spline bases on [0, 1], block design matrices for varying-coefficient
//! regression, and cross-validated selection of the basis dimension.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::CorrelationStructure;
use crate::dataset::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::rng::{self, scope};

/// Clamped B-spline basis with equally spaced interior knots on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    degree: usize,
    interior_knots: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Basis of the given degree with `interior_knots` equally spaced
    /// interior knots. The first and last knots are repeated degree+1 times.
    pub fn new(degree: usize, interior_knots: usize) -> Self {
        let mut knots = Vec::with_capacity(interior_knots + 2 * (degree + 1));
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        for j in 1..=interior_knots {
            knots.push(j as f64 / (interior_knots as f64 + 1.0));
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        SplineBasis {
            degree,
            interior_knots,
            knots,
        }
    }

    /// Cubic basis, the default used throughout.
    pub fn cubic(interior_knots: usize) -> Self {
        Self::new(3, interior_knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> usize {
        self.interior_knots
    }

    /// Basis dimension: interior knots + degree + 1.
    pub fn dim(&self) -> usize {
        self.interior_knots + self.degree + 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    // Index of the knot span containing t, right-closed at t = 1.
    fn find_span(&self, t: f64) -> usize {
        let last = self.degree + self.interior_knots;
        if t >= 1.0 {
            return last;
        }
        let seg = (t * (self.interior_knots as f64 + 1.0)).floor() as usize;
        let mut span = (self.degree + seg).min(last);
        while span > self.degree && t < self.knots[span] {
            span -= 1;
        }
        while span < last && t >= self.knots[span + 1] {
            span += 1;
        }
        span
    }

    // Cox-de Boor evaluation of the degree+1 nonzero functions at t,
    // scattered into the full-length row. Assumes 0 <= t <= 1.
    pub(crate) fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out.fill(0.0);
        let span = self.find_span(t);
        let d = self.degree;
        let mut vals = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        vals[0] = 1.0;
        for j in 1..=d {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        for (r, &v) in vals.iter().enumerate() {
            out[span - d + r] = v;
        }
    }

    /// Evaluate all basis functions at `t`.
    ///
    /// Entries are nonnegative, sum to one, and at most degree+1 are nonzero.
    pub fn basis_row(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidConfig(format!(
                "basis evaluation point {t} outside [0, 1]"
            )));
        }
        let mut row = vec![0.0; self.dim()];
        self.eval_into(t, &mut row);
        Ok(row)
    }
}

/// Column layout of a block design matrix: [intercept | exposure |
/// mediator(s) | covariates], each block `basis_dim` wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignLayout {
    pub basis_dim: usize,
    pub n_mediators: usize,
    pub n_covariates: usize,
}

impl DesignLayout {
    pub fn n_blocks(&self) -> usize {
        2 + self.n_mediators + self.n_covariates
    }

    pub fn width(&self) -> usize {
        self.n_blocks() * self.basis_dim
    }

    pub fn intercept_cols(&self) -> std::ops::Range<usize> {
        0..self.basis_dim
    }

    pub fn exposure_cols(&self) -> std::ops::Range<usize> {
        self.basis_dim..2 * self.basis_dim
    }

    /// Columns of the j-th included mediator block (0-based within the
    /// included set).
    pub fn mediator_cols(&self, j: usize) -> std::ops::Range<usize> {
        let start = (2 + j) * self.basis_dim;
        start..start + self.basis_dim
    }

    pub fn covariate_cols(&self, l: usize) -> std::ops::Range<usize> {
        let start = (2 + self.n_mediators + l) * self.basis_dim;
        start..start + self.basis_dim
    }
}

/// Per-subject design matrix for the varying-coefficient model.
#[derive(Debug, Clone)]
pub struct DesignBlock {
    /// Index of the subject in the dataset.
    pub subject: usize,
    /// n_i x width matrix; row j is the Kronecker-style product of
    /// (1, x_i, mediators, z_i) with the basis row at t_ij.
    pub matrix: DMatrix<f64>,
}

/// Assemble one design block per subject.
///
/// `mediator_cols` lists the 0-based mediator indices included in the model
/// (empty for the null model, one index for the marginal model, the screened
/// set for the joint model). Times must already lie in the basis domain
/// [0, 1].
pub fn build_design(
    ds: &LongitudinalDataset,
    basis: &SplineBasis,
    mediator_cols: &[usize],
) -> Result<(DesignLayout, Vec<DesignBlock>)> {
    for &k in mediator_cols {
        if k >= ds.p {
            return Err(Error::MediatorIndexOutOfRange {
                index: k + 1,
                count: ds.p,
            });
        }
    }
    let layout = DesignLayout {
        basis_dim: basis.dim(),
        n_mediators: mediator_cols.len(),
        n_covariates: ds.q,
    };
    let l = layout.basis_dim;
    let mut row = vec![0.0; l];
    let mut blocks = Vec::with_capacity(ds.n_subjects());
    for (idx, s) in ds.subjects.iter().enumerate() {
        let mut m = DMatrix::zeros(s.n_obs(), layout.width());
        for (j, &t) in s.times.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidDataset(format!(
                    "subject '{}': time {t} outside [0, 1]; normalize times first",
                    s.id
                )));
            }
            basis.eval_into(t, &mut row);
            for (r, &b) in row.iter().enumerate() {
                m[(j, r)] = b;
                m[(j, l + r)] = s.exposure * b;
            }
            for (mj, &k) in mediator_cols.iter().enumerate() {
                let offset = layout.mediator_cols(mj).start;
                for (r, &b) in row.iter().enumerate() {
                    m[(j, offset + r)] = s.mediators[k] * b;
                }
            }
            for (zl, &z) in s.covariates.iter().enumerate() {
                let offset = layout.covariate_cols(zl).start;
                for (r, &b) in row.iter().enumerate() {
                    m[(j, offset + r)] = z * b;
                }
            }
        }
        blocks.push(DesignBlock {
            subject: idx,
            matrix: m,
        });
    }
    Ok((layout, blocks))
}

/// Subject-level fold assignment, a pure function of (seed, n).
pub(crate) fn cv_fold_assignment(seed: u64, n: usize, folds: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, &[scope::CV_FOLDS, n as u64]);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for (pos, &subject) in order.iter().enumerate() {
        assignment[subject] = pos % folds;
    }
    assignment
}

/// Pick the interior-knot count by 10-fold subject-level cross-validation of
/// the no-mediator model, scored by held-out squared prediction error.
///
/// All observations of a subject stay in the same fold. Weights for the fold
/// fits are estimated on the training subjects under `structure`. Ties break
/// toward the smaller knot count; a singleton candidate set skips CV.
pub fn select_basis_dimension(
    ds: &LongitudinalDataset,
    structure: CorrelationStructure,
    candidates: &[usize],
    seed: u64,
) -> Result<SplineBasis> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("empty candidate set".into()));
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() == 1 {
        return Ok(SplineBasis::cubic(sorted[0]));
    }

    let n = ds.n_subjects();
    let folds = 10.min(n);
    let assignment = cv_fold_assignment(seed, n, folds);

    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for &knots in &sorted {
        match cv_score(ds, structure, knots, &assignment, folds) {
            Ok(score) => {
                if best.is_none_or(|(_, s)| score < s) {
                    best = Some((knots, score));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((knots, _)) => Ok(SplineBasis::cubic(knots)),
        None => Err(last_err.expect("at least one candidate attempted")),
    }
}

fn cv_score(
    ds: &LongitudinalDataset,
    structure: CorrelationStructure,
    interior_knots: usize,
    assignment: &[usize],
    folds: usize,
) -> Result<f64> {
    let basis = SplineBasis::cubic(interior_knots);
    let (_, blocks) = build_design(ds, &basis, &[])?;
    let mut sse = 0.0;
    let mut count = 0usize;
    for fold in 0..folds {
        let train: Vec<usize> = (0..ds.n_subjects())
            .filter(|&i| assignment[i] != fold)
            .collect();
        if train.is_empty() {
            continue;
        }
        let coeffs =
            crate::covariance::fit_null_wls_on_subjects(ds, &train, &basis, structure, &blocks)?;
        for (i, s) in ds.subjects.iter().enumerate() {
            if assignment[i] != fold {
                continue;
            }
            let pred = &blocks[i].matrix * &coeffs;
            for (j, &y) in s.outcomes.iter().enumerate() {
                let r = y - pred[j];
                sse += r * r;
            }
            count += s.n_obs();
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData {
            context: "cross-validation".into(),
            needed: 1,
            have: 0,
        });
    }
    Ok(sse / count as f64)
}
