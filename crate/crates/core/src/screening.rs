//! Joint mediation p-values and mixture-FDR mediator selection.
//!
//! The joint p-value for mediator k is max(P_alpha, P_beta). Under the
//! composite null it follows a three-component mixture (alpha-null,
//! beta-null, both-null) whose proportions are estimated from the marginal
//! p-value tails; the estimated FDR at threshold lambda is
//! (pi01 + pi10) lambda + pi00 lambda^2 over the rejection fraction, and the
//! selection threshold is the largest observed p-value with estimated FDR at
//! or below the target level.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::permtest::{MediatorFit, PermutationResult, PvalueMode};

/// One row of the mediation test table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MediationTestRow {
    /// 0-based mediator index.
    pub k: usize,
    pub p_alpha: f64,
    pub p_beta: f64,
    pub p_joint: f64,
    pub f_stat: f64,
}

/// Per-mediator (P_alpha, P_beta, joint) triples, ordered by mediator index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediationTestTable {
    pub rows: Vec<MediationTestRow>,
}

impl MediationTestTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Combine mediator fits and permutation results into the test table.
///
/// Both inputs must cover the same mediator indices. With the plain
/// proportion estimator a permutation p-value can be exactly zero, which
/// degenerates the FDR threshold search; when `floor_zero_pvalues` is set
/// (the default pipeline behavior) zero p_beta values are mapped to 1/(2S)
/// with a logged warning.
pub fn joint_pvalues(
    mediator_fits: &[MediatorFit],
    permutation_results: &[PermutationResult],
    floor_zero_pvalues: bool,
) -> Result<MediationTestTable> {
    if mediator_fits.len() != permutation_results.len() {
        return Err(Error::InvalidConfig(format!(
            "mediator fits ({}) and permutation results ({}) cover different index sets",
            mediator_fits.len(),
            permutation_results.len()
        )));
    }
    let mut rows = Vec::with_capacity(mediator_fits.len());
    let mut floored = 0usize;
    for (fit, perm) in mediator_fits.iter().zip(permutation_results) {
        if fit.k != perm.k {
            return Err(Error::InvalidConfig(format!(
                "mediator fit index {} does not match permutation result index {}",
                fit.k + 1,
                perm.k + 1
            )));
        }
        let mut p_beta = perm.p_beta;
        if floor_zero_pvalues && p_beta == 0.0 {
            let s = perm.f_permuted.len() as f64;
            p_beta = 1.0 / (2.0 * s);
            floored += 1;
        }
        rows.push(MediationTestRow {
            k: fit.k,
            p_alpha: fit.p_alpha,
            p_beta,
            p_joint: fit.p_alpha.max(p_beta),
            f_stat: perm.f_observed,
        });
    }
    if floored > 0 {
        log::warn!("{floored} permutation p-value(s) of 0 floored to 1/(2S) for FDR estimation");
    }
    rows.sort_by_key(|r| r.k);
    Ok(MediationTestTable { rows })
}

/// The p-value floor used by the pipeline for a given permutation count and
/// p-value mode.
pub fn floors_zero_pvalues(mode: PvalueMode) -> bool {
    mode == PvalueMode::Plain
}

/// Estimated proportions of the three null components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullProportions {
    /// Both alpha and beta null.
    pub pi00: f64,
    /// Alpha null, beta non-null.
    pub pi01: f64,
    /// Alpha non-null, beta null.
    pub pi10: f64,
}

/// Estimate the component null proportions from the marginal p-values.
///
/// Each marginal null proportion uses the tail estimator at lambda0 = 0.5
/// (#{P > 0.5} / (0.5 p), clamped to [0, 1]); the three joint proportions
/// are products of the marginals. Below 20 mediators the estimator is too
/// noisy and the conservative (1, 0, 0) is returned.
pub fn estimate_null_proportions(table: &MediationTestTable) -> NullProportions {
    let p = table.len();
    if p < 20 {
        return NullProportions {
            pi00: 1.0,
            pi01: 0.0,
            pi10: 0.0,
        };
    }
    let tail = |count: usize| ((count as f64) / (0.5 * p as f64)).clamp(0.0, 1.0);
    let pi_alpha0 = tail(table.rows.iter().filter(|r| r.p_alpha > 0.5).count());
    let pi_beta0 = tail(table.rows.iter().filter(|r| r.p_beta > 0.5).count());
    NullProportions {
        pi00: pi_alpha0 * pi_beta0,
        pi01: pi_alpha0 * (1.0 - pi_beta0),
        pi10: (1.0 - pi_alpha0) * pi_beta0,
    }
}

/// Output of the FDR screening step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningResult {
    pub pi00: f64,
    pub pi01: f64,
    pub pi10: f64,
    /// Selection threshold on the joint p-value.
    pub lambda_b: f64,
    /// Target FDR level.
    pub b: f64,
    /// Selected mediators, 0-based and sorted.
    pub selected: Vec<usize>,
    /// (lambda, estimated FDR) at every candidate threshold, for diagnostics.
    pub fdr_curve: Vec<(f64, f64)>,
}

/// Estimated FDR at threshold lambda for the given table and proportions.
fn fdr_at(table: &MediationTestTable, prop: &NullProportions, lambda: f64) -> f64 {
    let p = table.len() as f64;
    let rejections = table.rows.iter().filter(|r| r.p_joint <= lambda).count();
    let numerator = (prop.pi01 + prop.pi10) * lambda + prop.pi00 * lambda * lambda;
    numerator / ((rejections.max(1)) as f64 / p)
}

/// Find the largest threshold controlling the estimated FDR at level `b`
/// and the mediators selected at it.
///
/// The estimated FDR only changes at observed joint p-values, so the
/// supremum over thresholds is realized as a maximum over the candidate set
/// {0} + sorted unique p_joint values. Ties at the threshold are all
/// selected.
pub fn fdr_threshold(
    table: &MediationTestTable,
    proportions: &NullProportions,
    b: f64,
) -> Result<ScreeningResult> {
    if !(0.0..1.0).contains(&b) || b == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "FDR level {b} outside (0, 1)"
        )));
    }
    let mut candidates: Vec<f64> = vec![0.0];
    candidates.extend(table.rows.iter().map(|r| r.p_joint));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut lambda_b = 0.0;
    let mut fdr_curve = Vec::with_capacity(candidates.len());
    for &lambda in &candidates {
        let fdr = fdr_at(table, proportions, lambda);
        fdr_curve.push((lambda, fdr));
        if fdr <= b && lambda > lambda_b {
            lambda_b = lambda;
        }
    }
    let selected: Vec<usize> = table
        .rows
        .iter()
        .filter(|r| r.p_joint <= lambda_b)
        .map(|r| r.k)
        .collect();
    Ok(ScreeningResult {
        pi00: proportions.pi00,
        pi01: proportions.pi01,
        pi10: proportions.pi10,
        lambda_b,
        b,
        selected,
        fdr_curve,
    })
}

/// Write the test table as CSV: k (1-based), name, p_alpha, p_beta,
/// p_joint, selected flag, f_stat.
pub fn write_table_csv<W: std::io::Write>(
    mut out: W,
    table: &MediationTestTable,
    names: &[String],
    screening: &ScreeningResult,
) -> Result<()> {
    writeln!(out, "k,name,p_alpha,p_beta,p_joint,selected,f_stat")?;
    for row in &table.rows {
        let name = names.get(row.k).map(String::as_str).unwrap_or("");
        let selected = u8::from(screening.selected.contains(&row.k));
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.k + 1,
            name,
            row.p_alpha,
            row.p_beta,
            row.p_joint,
            selected,
            row.f_stat
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ScreeningSummary<'a> {
    pi00: f64,
    pi01: f64,
    pi10: f64,
    lambda_b: f64,
    b: f64,
    /// 1-based mediator indices.
    selected: Vec<usize>,
    selected_names: Vec<&'a str>,
}

/// Write the screening summary as JSON (selected indices are 1-based).
pub fn write_screening_json<W: std::io::Write>(
    out: W,
    screening: &ScreeningResult,
    names: &[String],
) -> Result<()> {
    let summary = ScreeningSummary {
        pi00: screening.pi00,
        pi01: screening.pi01,
        pi10: screening.pi10,
        lambda_b: screening.lambda_b,
        b: screening.b,
        selected: screening.selected.iter().map(|&k| k + 1).collect(),
        selected_names: screening
            .selected
            .iter()
            .map(|&k| names.get(k).map(String::as_str).unwrap_or(""))
            .collect(),
    };
    serde_json::to_writer_pretty(out, &summary)
        .map_err(|e| Error::InvalidConfig(format!("JSON serialization failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn table_from(pairs: &[(f64, f64)]) -> MediationTestTable {
        MediationTestTable {
            rows: pairs
                .iter()
                .enumerate()
                .map(|(k, &(p_alpha, p_beta))| MediationTestRow {
                    k,
                    p_alpha,
                    p_beta,
                    p_joint: p_alpha.max(p_beta),
                    f_stat: 0.0,
                })
                .collect(),
        }
    }

    fn fits_and_perms(
        pairs: &[(f64, f64)],
        s: usize,
    ) -> (Vec<MediatorFit>, Vec<PermutationResult>) {
        let fits = pairs
            .iter()
            .enumerate()
            .map(|(k, &(p_alpha, _))| MediatorFit {
                k,
                alpha_hat: 0.0,
                alpha_se: 1.0,
                p_alpha,
                gamma_hat: vec![],
                kappa_hat: 0.0,
            })
            .collect();
        let perms = pairs
            .iter()
            .enumerate()
            .map(|(k, &(_, p_beta))| PermutationResult {
                k,
                f_observed: 0.0,
                f_permuted: vec![0.0; s],
                p_beta,
                seed: 0,
            })
            .collect();
        (fits, perms)
    }

    #[test]
    fn joint_pvalue_is_rowwise_max() {
        let (fits, perms) = fits_and_perms(&[(0.2, 0.7), (0.9, 0.1)], 100);
        let table = joint_pvalues(&fits, &perms, false).unwrap();
        assert_eq!(table.rows[0].p_joint, 0.7);
        assert_eq!(table.rows[1].p_joint, 0.9);
    }

    #[test]
    fn zero_pvalues_are_floored_for_fdr() {
        let (fits, perms) = fits_and_perms(&[(0.0, 0.0)], 200);
        let table = joint_pvalues(&fits, &perms, true).unwrap();
        assert_eq!(table.rows[0].p_beta, 1.0 / 400.0);
        assert_eq!(table.rows[0].p_joint, 1.0 / 400.0);
        // Without the floor the zero survives.
        let raw = joint_pvalues(&fits, &perms, false).unwrap();
        assert_eq!(raw.rows[0].p_joint, 0.0);
    }

    #[test]
    fn joint_pvalues_matches_max_oracle_on_random_tables() {
        let mut rng = crate::rng::stream(13, &[0]);
        for _ in 0..20 {
            let pairs: Vec<(f64, f64)> = (0..30).map(|_| (rng.gen(), rng.gen())).collect();
            let (fits, perms) = fits_and_perms(&pairs, 50);
            let table = joint_pvalues(&fits, &perms, false).unwrap();
            for (row, &(pa, pb)) in table.rows.iter().zip(&pairs) {
                assert_eq!(row.p_joint, pa.max(pb));
                assert!(row.p_joint >= row.p_alpha && row.p_joint >= row.p_beta);
            }
        }
    }

    #[test]
    fn mismatched_index_sets_are_rejected() {
        let (fits, mut perms) = fits_and_perms(&[(0.1, 0.2), (0.3, 0.4)], 10);
        perms[1].k = 5;
        assert!(joint_pvalues(&fits, &perms, false).is_err());
    }

    #[test]
    fn null_proportions_near_one_under_complete_null() {
        let mut rng = crate::rng::stream(14, &[0]);
        for _ in 0..10 {
            let pairs: Vec<(f64, f64)> = (0..500).map(|_| (rng.gen(), rng.gen())).collect();
            let prop = estimate_null_proportions(&table_from(&pairs));
            assert!(prop.pi00 > 0.85 && prop.pi00 <= 1.0, "pi00 = {}", prop.pi00);
            assert!(prop.pi00 + prop.pi01 + prop.pi10 <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn null_proportions_clamp_when_all_significant() {
        let pairs: Vec<(f64, f64)> = (0..50).map(|_| (1e-6, 1e-6)).collect();
        let prop = estimate_null_proportions(&table_from(&pairs));
        assert_eq!(prop.pi00, 0.0);
        assert_eq!(prop.pi01, 0.0);
        assert_eq!(prop.pi10, 0.0);
    }

    #[test]
    fn small_tables_fall_back_to_conservative() {
        let pairs: Vec<(f64, f64)> = (0..10).map(|_| (0.9, 0.9)).collect();
        let prop = estimate_null_proportions(&table_from(&pairs));
        assert_eq!((prop.pi00, prop.pi01, prop.pi10), (1.0, 0.0, 0.0));
    }

    #[test]
    fn null_proportions_track_simulated_mixture() {
        // 44 double-null, 1 alpha-only, 1 beta-only, 4 double-non-null of
        // 50, averaged over 100 replicates: pi00 should sit near 44/50.
        let mut rng = crate::rng::stream(15, &[0]);
        let mut mean_pi00 = 0.0;
        let reps = 100;
        for _ in 0..reps {
            let mut pairs = Vec::with_capacity(50);
            for _ in 0..4 {
                pairs.push((rng.gen::<f64>() * 0.01, rng.gen::<f64>() * 0.01));
            }
            pairs.push((rng.gen::<f64>() * 0.01, rng.gen())); // alpha-only
            pairs.push((rng.gen(), rng.gen::<f64>() * 0.01)); // beta-only
            for _ in 0..44 {
                pairs.push((rng.gen(), rng.gen()));
            }
            mean_pi00 += estimate_null_proportions(&table_from(&pairs)).pi00;
        }
        mean_pi00 /= reps as f64;
        assert!((mean_pi00 - 0.88).abs() < 0.15, "mean pi00 = {mean_pi00}");
    }

    #[test]
    fn fdr_threshold_selects_single_small_pvalue() {
        let table = table_from(&[(0.001, 0.0005)]);
        let prop = NullProportions {
            pi00: 1.0,
            pi01: 0.0,
            pi10: 0.0,
        };
        let res = fdr_threshold(&table, &prop, 0.05).unwrap();
        // FDR(0.001) = 0.001^2 / (1/1) = 1e-6.
        assert_eq!(res.selected, vec![0]);
        assert_eq!(res.lambda_b, 0.001);
        let fdr_at_lambda = res
            .fdr_curve
            .iter()
            .find(|(l, _)| *l == res.lambda_b)
            .unwrap()
            .1;
        assert!((fdr_at_lambda - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn no_signal_gives_empty_selection() {
        let pairs: Vec<(f64, f64)> = (0..30).map(|_| (1.0, 1.0)).collect();
        let table = table_from(&pairs);
        let prop = estimate_null_proportions(&table);
        let res = fdr_threshold(&table, &prop, 0.05).unwrap();
        assert!(res.selected.is_empty());
        assert_eq!(res.lambda_b, 0.0);
    }

    #[test]
    fn selection_is_monotone_in_level() {
        let mut rng = crate::rng::stream(16, &[0]);
        for _ in 0..20 {
            let pairs: Vec<(f64, f64)> = (0..40)
                .map(|i| {
                    if i < 6 {
                        (rng.gen::<f64>() * 0.02, rng.gen::<f64>() * 0.02)
                    } else {
                        (rng.gen(), rng.gen())
                    }
                })
                .collect();
            let table = table_from(&pairs);
            let prop = estimate_null_proportions(&table);
            let tight = fdr_threshold(&table, &prop, 0.05).unwrap();
            let loose = fdr_threshold(&table, &prop, 0.10).unwrap();
            for k in &tight.selected {
                assert!(loose.selected.contains(k), "{k} lost at looser level");
            }
            // The invariant FDR(lambda_b) <= b holds by construction.
            for res in [&tight, &loose] {
                let fdr = res
                    .fdr_curve
                    .iter()
                    .find(|(l, _)| *l == res.lambda_b)
                    .map(|(_, f)| *f)
                    .unwrap_or(0.0);
                assert!(fdr <= res.b + 1e-12);
            }
        }
    }

    #[test]
    fn thresholds_between_candidates_change_nothing() {
        let mut rng = crate::rng::stream(17, &[0]);
        let pairs: Vec<(f64, f64)> = (0..25).map(|_| (rng.gen(), rng.gen())).collect();
        let table = table_from(&pairs);
        let mut candidates: Vec<f64> = table.rows.iter().map(|r| r.p_joint).collect();
        candidates.sort_by(f64::total_cmp);
        for w in candidates.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let at_lower: Vec<usize> = table
                .rows
                .iter()
                .filter(|r| r.p_joint <= w[0])
                .map(|r| r.k)
                .collect();
            let at_mid: Vec<usize> = table
                .rows
                .iter()
                .filter(|r| r.p_joint <= mid)
                .map(|r| r.k)
                .collect();
            assert_eq!(at_lower, at_mid);
        }
    }

    #[test]
    fn csv_and_json_emitters_produce_expected_shape() {
        let table = table_from(&[(0.001, 0.002), (0.5, 0.9)]);
        let prop = estimate_null_proportions(&table);
        let res = fdr_threshold(&table, &prop, 0.05).unwrap();
        let names = vec!["m1".to_string(), "m2".to_string()];

        let mut csv = Vec::new();
        write_table_csv(&mut csv, &table, &names, &res).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("k,name,p_alpha,p_beta,p_joint,selected,f_stat"));
        assert_eq!(text.lines().count(), 3);

        let mut json = Vec::new();
        write_screening_json(&mut json, &res, &names).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert!(parsed.get("lambda_b").is_some());
        assert!(parsed.get("pi00").is_some());
    }
}
