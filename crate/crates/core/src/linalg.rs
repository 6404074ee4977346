//! Small dense solvers shared by the fitting code.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Solve the SPD system `m x = rhs` by Cholesky.
///
/// Rank-deficient systems fall back to a trace-scaled ridge (1e-8 of the
/// mean diagonal, escalated once by 100x) before giving up. The fallback
/// keeps sparse designs with collinear or zero blocks solvable; the ridge is
/// tiny relative to the matrix scale and is never part of the reported
/// objective.
pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol.solve(rhs));
    }
    let dim = m.nrows();
    let scale = {
        let tr = m.trace() / dim as f64;
        if tr.is_finite() && tr > 0.0 {
            tr
        } else {
            1.0
        }
    };
    let mut ridge = 1e-8 * scale;
    for _ in 0..2 {
        let mut jittered = m.clone();
        for i in 0..dim {
            jittered[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol.solve(rhs));
        }
        ridge *= 100.0;
    }
    Err(Error::SingularMatrix {
        context: context.to_string(),
    })
}

/// acc += scale * m, elementwise over the contiguous storage.
#[inline]
pub fn add_scaled(acc: &mut DMatrix<f64>, scale: f64, m: &DMatrix<f64>) {
    debug_assert_eq!(acc.shape(), m.shape());
    for (a, &v) in acc.as_mut_slice().iter_mut().zip(m.as_slice()) {
        *a += scale * v;
    }
}

/// acc += scale * v for vectors.
#[inline]
pub fn add_scaled_vec(acc: &mut DVector<f64>, scale: f64, v: &DVector<f64>) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, &x) in acc.as_mut_slice().iter_mut().zip(v.as_slice()) {
        *a += scale * x;
    }
}

/// Invert an SPD matrix, rejecting condition numbers beyond ~1e12.
///
/// The condition estimate comes from the squared ratio of extreme Cholesky
/// diagonal entries. A single jitter retry is attempted before erroring.
pub fn invert_spd(c: &DMatrix<f64>, subject: &str) -> Result<DMatrix<f64>> {
    const COND_LIMIT: f64 = 1e12;

    fn attempt(mat: DMatrix<f64>) -> Option<DMatrix<f64>> {
        let chol = Cholesky::new(mat)?;
        let l = chol.l_dirty();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..l.nrows() {
            let d = l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        // Negated form so a NaN diagonal also rejects the factorization.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(lo > 0.0) || (hi / lo).powi(2) > COND_LIMIT {
            return None;
        }
        Some(chol.inverse())
    }

    if let Some(inv) = attempt(c.clone()) {
        return Ok(inv);
    }
    let scale = c.trace() / c.nrows() as f64;
    let mut jittered = c.clone();
    for i in 0..c.nrows() {
        jittered[(i, i)] += 1e-10 * scale.max(1.0);
    }
    attempt(jittered).ok_or_else(|| Error::SingularCovariance {
        subject: subject.to_string(),
    })
}
