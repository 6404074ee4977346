//! Synthetic-data generation and Monte Carlo study drivers: power curves for
//! the permutation test, screening frequencies with empirical FDR, and
//! integrated bias/sd of the effect-curve estimators.
//!
//! The generator draws a scalar exposure and two covariates per subject as
//! independent centered normals (spread set by `TruthSpec::xz_sd`, see its
//! note), mediators from the linear mediator model with decaying
//! cross-mediator error correlation, observation times under three sampling
//! scenarios, and outcome errors under four within-subject covariance cases.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::CorrelationStructure;
use crate::dataset::{LongitudinalDataset, Subject};
use crate::effects::{fit_joint_model_with, EffectCurves};
use crate::error::{Error, Result};
use crate::permtest::{
    fit_mediator_model, permutation_test_in, MarginalContext, PermutationOptions,
};
use crate::rng::{self, scope};
use crate::screening::{estimate_null_proportions, fdr_threshold, joint_pvalues};
use crate::spline::{select_basis_dimension, SplineBasis};

/// Observation-time sampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// 100 uniform times per subject.
    Dense,
    /// 10 uniform times per subject.
    Sparse,
    /// Mixture: 10% of subjects with 7 times on [0, 0.7], 20% with 8 on
    /// [0, 0.8], 30% with 9 on [0, 0.9], 40% with 10 on [0, 1].
    VaryingSparse,
}

impl Scenario {
    pub fn from_index(idx: u8) -> Result<Self> {
        match idx {
            1 => Ok(Scenario::Dense),
            2 => Ok(Scenario::Sparse),
            3 => Ok(Scenario::VaryingSparse),
            other => Err(Error::InvalidConfig(format!(
                "unknown scenario {other} (expected 1, 2, or 3)"
            ))),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Scenario::Dense => 1,
            Scenario::Sparse => 2,
            Scenario::VaryingSparse => 3,
        }
    }
}

/// Within-subject covariance of the outcome errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCase {
    /// Variance 2, independent.
    Independent,
    /// Variance 2, correlation 0.8^|j1-j2|.
    Autoregressive,
    /// Variance 2, constant correlation 0.3.
    Exchangeable,
    /// Variance 1.5 + 2 t^2, correlation 0.5 * 0.8^|j1-j2| + 0.5 * 0.3.
    HeteroscedasticMixed,
}

impl NoiseCase {
    pub fn from_index(idx: u8) -> Result<Self> {
        match idx {
            1 => Ok(NoiseCase::Independent),
            2 => Ok(NoiseCase::Autoregressive),
            3 => Ok(NoiseCase::Exchangeable),
            4 => Ok(NoiseCase::HeteroscedasticMixed),
            other => Err(Error::InvalidConfig(format!(
                "unknown case {other} (expected 1, 2, 3, or 4)"
            ))),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            NoiseCase::Independent => 1,
            NoiseCase::Autoregressive => 2,
            NoiseCase::Exchangeable => 3,
            NoiseCase::HeteroscedasticMixed => 4,
        }
    }
}

const RHO_1: f64 = 0.8;
const RHO_2: f64 = 0.3;

/// The fixed coefficient functions and scalars of the simulation design.
///
/// NOTE on the exposure/covariate spread: X, Z1, Z2 are drawn as
/// independent normals with STANDARD DEVIATION `xz_sd`, default 2 (the R
/// `rnorm` convention for a "N(0, 2)" design). Under the alternative
/// variance-2 reading (`xz_sd` = sqrt(2)) the weakest true mediator's
/// selection rate tops out near 0.88 instead of ~1, so the two conventions
/// are empirically distinguishable; this choice propagates into every
/// downstream quantity.
///
/// Mediators 1-4 carry both paths, mediator 5 only the exposure path,
/// mediator 6 only the outcome path (scaled by delta); all others are null.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub alphas: [f64; 5],
    pub gamma: [f64; 2],
    pub kappa: f64,
    /// Structurally remove the mediator-6 outcome path (for generator
    /// equivalence checks); with delta = 0 the output is identical.
    pub include_beta6: bool,
    /// Scale factor on the cross-mediator error covariance. Kept separate
    /// from the outcome scale: shrinking both at the same rate leaves the
    /// signal-to-noise ratio of the mediator coefficients unchanged, so a
    /// noiseless-limit check must shrink the outcome noise faster.
    pub mediator_error_scale: f64,
    /// Scale factor on the outcome error covariance.
    pub outcome_error_scale: f64,
    /// Standard deviation of the exposure and covariate draws.
    pub xz_sd: f64,
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec {
            alphas: [0.35, 0.4, 0.25, 0.3, 0.15],
            gamma: [0.3, 0.3],
            kappa: 0.0,
            include_beta6: true,
            mediator_error_scale: 1.0,
            outcome_error_scale: 1.0,
            xz_sd: 2.0,
        }
    }
}

impl TruthSpec {
    /// Exposure-mediator coefficient for 0-based mediator index k.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas.get(k).copied().unwrap_or(0.0)
    }

    /// Mediator-outcome coefficient function for 0-based index k.
    pub fn beta(&self, k: usize, t: f64, delta: f64) -> f64 {
        use std::f64::consts::PI;
        match k {
            0 => 0.5 * (PI * t).sin(),
            1 => -0.4 * (2.0 * PI * t).sin(),
            2 => -0.4 * (2.0 * PI * t).cos(),
            3 => 0.5 * (1.2 - t),
            5 if self.include_beta6 && t >= 0.5 => 0.5 * delta * (PI * t).cos(),
            _ => 0.0,
        }
    }

    pub fn eta(&self, t: f64) -> f64 {
        0.3 * (0.5 * t * t).exp()
    }

    pub fn theta(&self, l: usize, t: f64) -> f64 {
        use std::f64::consts::PI;
        match l {
            0 => 0.5 * (3.0 * PI * t).cos(),
            1 => 0.4 * (3.0 * PI * t).sin(),
            _ => 0.0,
        }
    }

    pub fn mu(&self, _t: f64) -> f64 {
        0.0
    }

    /// Mediators with a true mediation effect (both paths non-null).
    pub fn true_mediators(&self) -> [usize; 4] {
        [0, 1, 2, 3]
    }

    /// True indirect-effect curve: sum of alpha_k beta_k(t) over the true
    /// mediators.
    pub fn indirect_truth(&self, t: f64) -> f64 {
        self.true_mediators()
            .iter()
            .map(|&k| self.alpha(k) * self.beta(k, t, 0.0))
            .sum()
    }

    // Mediators whose beta is structurally non-zero.
    fn active_beta(&self) -> &'static [usize] {
        if self.include_beta6 {
            &[0, 1, 2, 3, 5]
        } else {
            &[0, 1, 2, 3]
        }
    }
}

/// Monte Carlo study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub scenario: Scenario,
    pub case: NoiseCase,
    /// Effect scale for mediator 6's outcome path.
    pub delta: f64,
    /// Replicate count G.
    pub replicates: usize,
    /// Permutation count S.
    pub permutations: usize,
    pub seed: u64,
    /// Target FDR level b.
    pub fdr_level: f64,
    /// Correlation structure assumed by the analysis (not the generator).
    pub structure: CorrelationStructure,
    /// Interior-knot candidate set for basis selection; a singleton fixes
    /// the basis without cross-validation.
    pub basis_candidates: Vec<usize>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidConfig(format!(
                "need at least 10 subjects, got {}",
                self.n
            )));
        }
        if self.p == 0 {
            return Err(Error::InvalidConfig("need at least one mediator".into()));
        }
        if self.replicates == 0 || self.permutations == 0 {
            return Err(Error::InvalidConfig(
                "replicate and permutation counts must be at least 1".into(),
            ));
        }
        if !(self.fdr_level > 0.0 && self.fdr_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "FDR level {} outside (0, 1)",
                self.fdr_level
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidConfig("delta must be finite".into()));
        }
        if self.basis_candidates.is_empty() {
            return Err(Error::InvalidConfig(
                "basis candidate set must not be empty".into(),
            ));
        }
        Ok(())
    }

    /// Desk-scale study defaults: n=100, p=50, G=50, S=200.
    pub fn desk_scale(scenario: Scenario, case: NoiseCase, seed: u64) -> Self {
        SimulationConfig {
            n: 100,
            p: 50,
            scenario,
            case,
            delta: 1.0,
            replicates: 50,
            permutations: 200,
            seed,
            fdr_level: 0.05,
            structure: CorrelationStructure::Diagonal,
            basis_candidates: (1..=8).collect(),
        }
    }
}

fn draw_sorted_times(rng: &mut ChaCha8Rng, count: usize, hi: f64) -> Vec<f64> {
    loop {
        let mut times: Vec<f64> = (0..count).map(|_| rng.gen::<f64>() * hi).collect();
        times.sort_by(f64::total_cmp);
        if times.windows(2).all(|w| w[1] > w[0]) {
            return times;
        }
    }
}

fn case_covariance(case: NoiseCase, times: &[f64], error_scale: f64) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |a, b| {
        let corr = if a == b {
            1.0
        } else {
            let lag = (a as i32 - b as i32).abs();
            match case {
                NoiseCase::Independent => 0.0,
                NoiseCase::Autoregressive => RHO_1.powi(lag),
                NoiseCase::Exchangeable => RHO_2,
                NoiseCase::HeteroscedasticMixed => 0.5 * RHO_1.powi(lag) + 0.5 * RHO_2,
            }
        };
        let sd = |t: f64| -> f64 {
            match case {
                NoiseCase::HeteroscedasticMixed => (1.5 + 2.0 * t * t).sqrt(),
                _ => 2.0f64.sqrt(),
            }
        };
        error_scale * corr * sd(times[a]) * sd(times[b])
    })
}

/// Generate one synthetic dataset for the given replicate index.
///
/// All randomness flows from a stream derived from (config seed, replicate),
/// so the same pair always reproduces the same dataset.
pub fn generate_dataset(
    cfg: &SimulationConfig,
    truth: &TruthSpec,
    replicate: u64,
) -> Result<LongitudinalDataset> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, &[scope::GENERATOR, replicate]);
    let p = cfg.p;
    let sd_x = truth.xz_sd;

    // Cross-mediator error covariance 0.1^|k1-k2|, scaled.
    let sigma_eps = DMatrix::from_fn(p, p, |a, b| {
        truth.mediator_error_scale * 0.1f64.powi((a as i32 - b as i32).abs())
    });
    let chol_eps = Cholesky::new(sigma_eps).ok_or_else(|| Error::Numerical {
        context: "mediator error covariance".into(),
        message: "Cholesky failed".into(),
    })?;

    let n = cfg.n;
    let c7 = n / 10;
    let c8 = 2 * n / 10;
    let c9 = 3 * n / 10;

    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let x: f64 = sd_x * rng.sample::<f64, _>(StandardNormal);
        let z = [
            sd_x * rng.sample::<f64, _>(StandardNormal),
            sd_x * rng.sample::<f64, _>(StandardNormal),
        ];

        let eps_std =
            DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let eps = chol_eps.l() * eps_std;
        let mediators: Vec<f64> = (0..p)
            .map(|k| {
                truth.kappa
                    + truth.alpha(k) * x
                    + truth.gamma[0] * z[0]
                    + truth.gamma[1] * z[1]
                    + eps[k]
            })
            .collect();

        let (n_i, hi) = match cfg.scenario {
            Scenario::Dense => (100, 1.0),
            Scenario::Sparse => (10, 1.0),
            Scenario::VaryingSparse => {
                if i < c7 {
                    (7, 0.7)
                } else if i < c7 + c8 {
                    (8, 0.8)
                } else if i < c7 + c8 + c9 {
                    (9, 0.9)
                } else {
                    (10, 1.0)
                }
            }
        };
        let times = draw_sorted_times(&mut rng, n_i, hi);

        let noise_std =
            DVector::from_iterator(n_i, (0..n_i).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let noise = match cfg.case {
            NoiseCase::Independent => {
                let sd = (2.0 * truth.outcome_error_scale).sqrt();
                noise_std * sd
            }
            _ => {
                let cov = case_covariance(cfg.case, &times, truth.outcome_error_scale);
                let chol = Cholesky::new(cov).ok_or_else(|| Error::Numerical {
                    context: "outcome error covariance".into(),
                    message: "Cholesky failed".into(),
                })?;
                chol.l() * noise_std
            }
        };

        let outcomes: Vec<f64> = times
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let mut y = truth.mu(t) + truth.eta(t) * x + noise[j];
                for (l, &zv) in z.iter().enumerate() {
                    y += truth.theta(l, t) * zv;
                }
                for &k in truth.active_beta() {
                    if k < p {
                        y += truth.beta(k, t, cfg.delta) * mediators[k];
                    }
                }
                y
            })
            .collect();

        subjects.push(Subject {
            id: (i + 1).to_string(),
            exposure: x,
            mediators,
            covariates: z.to_vec(),
            times,
            outcomes,
        });
    }

    Ok(LongitudinalDataset {
        subjects,
        p,
        q: 2,
        time_domain: (0.0, 1.0),
        mediator_names: (1..=p).map(|k| format!("m{k}")).collect(),
        covariate_names: vec!["z1".into(), "z2".into()],
        time_map: None,
    })
}

fn replicate_seed(cfg: &SimulationConfig, replicate: u64) -> u64 {
    rng::derive_seed(cfg.seed, &[scope::REPLICATE, replicate])
}

fn basis_for(
    ds: &LongitudinalDataset,
    cfg: &SimulationConfig,
    rep_seed: u64,
) -> Result<SplineBasis> {
    select_basis_dimension(ds, cfg.structure, &cfg.basis_candidates, rep_seed)
}

/// Estimated power at one effect size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub delta: f64,
    pub power: f64,
}

/// Power of the permutation test on mediator 6 across an effect-size grid,
/// at significance level 0.05.
///
/// Replicate streams are shared across grid points (common random numbers),
/// which smooths the estimated curve in delta.
pub fn run_power_study(
    cfg: &SimulationConfig,
    truth: &TruthSpec,
    delta_grid: &[f64],
) -> Result<Vec<PowerPoint>> {
    use rayon::prelude::*;
    cfg.validate()?;
    const MEDIATOR_SIX: usize = 5;
    if cfg.p <= MEDIATOR_SIX {
        return Err(Error::InvalidConfig(
            "power study tests mediator 6; need p >= 6".into(),
        ));
    }
    let mut points = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        let cfg_d = SimulationConfig {
            delta,
            ..cfg.clone()
        };
        let rejections: usize = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|g| -> Result<usize> {
                let ds = generate_dataset(&cfg_d, truth, g)?;
                let rep_seed = replicate_seed(&cfg_d, g);
                let basis = basis_for(&ds, &cfg_d, rep_seed)?;
                let ctx = MarginalContext::new(&ds, &basis, cfg_d.structure)?;
                let opts = PermutationOptions::new(cfg_d.permutations, rep_seed);
                let res = permutation_test_in(&ctx, &ds, MEDIATOR_SIX, &opts)?;
                Ok(usize::from(res.p_beta < 0.05))
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum();
        points.push(PowerPoint {
            delta,
            power: rejections as f64 / cfg.replicates as f64,
        });
    }
    Ok(points)
}

/// Aggregated screening study results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningStudy {
    /// Fraction of replicates in which each mediator was selected.
    pub frequency: Vec<f64>,
    /// Mean false-selection proportion against the true mediator set.
    pub empirical_fdr: f64,
    /// Mean estimated both-null proportion, for diagnostics.
    pub mean_pi00: f64,
    pub replicates: usize,
}

fn screening_replicate(
    cfg: &SimulationConfig,
    truth: &TruthSpec,
    g: u64,
    levels: &[f64],
) -> Result<Vec<(Vec<usize>, f64)>> {
    let ds = generate_dataset(cfg, truth, g)?;
    let rep_seed = replicate_seed(cfg, g);
    let basis = basis_for(&ds, cfg, rep_seed)?;
    let ctx = MarginalContext::new(&ds, &basis, cfg.structure)?;

    let mut fits = Vec::with_capacity(cfg.p);
    let mut perms = Vec::with_capacity(cfg.p);
    let opts = PermutationOptions::new(cfg.permutations, rep_seed);
    for k in 0..cfg.p {
        fits.push(fit_mediator_model(&ds, k)?);
        perms.push(permutation_test_in(&ctx, &ds, k, &opts)?);
    }
    let table = joint_pvalues(&fits, &perms, true)?;
    let proportions = estimate_null_proportions(&table);
    levels
        .iter()
        .map(|&b| {
            let res = fdr_threshold(&table, &proportions, b)?;
            Ok((res.selected, proportions.pi00))
        })
        .collect()
}

/// Screening frequencies and empirical FDR over the configured replicates.
pub fn run_screening_study(cfg: &SimulationConfig, truth: &TruthSpec) -> Result<ScreeningStudy> {
    Ok(run_screening_study_multi(cfg, truth, &[cfg.fdr_level])?.remove(0))
}

/// As [`run_screening_study`] for several FDR levels sharing the same
/// per-replicate test tables.
pub fn run_screening_study_multi(
    cfg: &SimulationConfig,
    truth: &TruthSpec,
    levels: &[f64],
) -> Result<Vec<ScreeningStudy>> {
    use rayon::prelude::*;
    cfg.validate()?;
    let outcomes: Vec<Vec<(Vec<usize>, f64)>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|g| screening_replicate(cfg, truth, g, levels))
        .collect::<Result<_>>()?;

    let truth_set = truth.true_mediators();
    let g = cfg.replicates as f64;
    let mut studies = Vec::with_capacity(levels.len());
    for (li, _) in levels.iter().enumerate() {
        let mut counts = vec![0usize; cfg.p];
        let mut fdr_sum = 0.0;
        let mut pi00_sum = 0.0;
        for rep in &outcomes {
            let (selected, pi00) = &rep[li];
            for &k in selected {
                counts[k] += 1;
            }
            let false_count = selected
                .iter()
                .filter(|&&k| !truth_set.contains(&k))
                .count();
            fdr_sum += false_count as f64 / selected.len().max(1) as f64;
            pi00_sum += pi00;
        }
        studies.push(ScreeningStudy {
            frequency: counts.iter().map(|&c| c as f64 / g).collect(),
            empirical_fdr: fdr_sum / g,
            mean_pi00: pi00_sum / g,
            replicates: cfg.replicates,
        });
    }
    Ok(studies)
}

/// Integrated bias and sd of the direct and indirect effect curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationMetrics {
    pub bias_i: f64,
    pub sd_i: f64,
    pub bias_d: f64,
    pub sd_d: f64,
}

/// Composite Simpson integral of uniformly spaced samples (odd count).
pub fn simpson_integral(values: &[f64], lo: f64, hi: f64) -> f64 {
    assert!(
        values.len() >= 3 && values.len() % 2 == 1,
        "need an odd sample count"
    );
    let h = (hi - lo) / (values.len() - 1) as f64;
    let mut acc = values[0] + values[values.len() - 1];
    for (idx, &v) in values.iter().enumerate().skip(1).take(values.len() - 2) {
        acc += if idx % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

const ESTIMATION_GRID: usize = 201;

/// Bias/sd study with the true mediators fixed as identified: per replicate
/// the joint model is fit on mediators 1-4 and the effect curves evaluated
/// on a 201-point grid; expectations are replicate means.
pub fn run_estimation_study(
    cfg: &SimulationConfig,
    truth: &TruthSpec,
) -> Result<EstimationMetrics> {
    use rayon::prelude::*;
    cfg.validate()?;
    let selected: Vec<usize> = truth.true_mediators().to_vec();
    if cfg.p <= *selected.iter().max().expect("non-empty") {
        return Err(Error::InvalidConfig(
            "estimation study needs the true mediators present (p >= 4)".into(),
        ));
    }
    let grid: Vec<f64> = (0..ESTIMATION_GRID)
        .map(|i| i as f64 / (ESTIMATION_GRID - 1) as f64)
        .collect();

    let curves: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|g| -> Result<(Vec<f64>, Vec<f64>)> {
            let ds = generate_dataset(cfg, truth, g)?;
            let rep_seed = replicate_seed(cfg, g);
            let basis = basis_for(&ds, cfg, rep_seed)?;
            let cov = crate::covariance::estimate_covariance(&ds, &basis, cfg.structure)?;
            let fit = fit_joint_model_with(&ds, &selected, &basis, &cov)?;
            let mediator_fits: Vec<_> = selected
                .iter()
                .map(|&k| fit_mediator_model(&ds, k))
                .collect::<Result<_>>()?;
            let eff = EffectCurves::new(&fit, &mediator_fits, (1.0, 0.0), None)?;
            let mut direct = Vec::with_capacity(grid.len());
            let mut indirect = Vec::with_capacity(grid.len());
            for &t in &grid {
                direct.push(eff.nde(t)?);
                indirect.push(eff.nie(t)?);
            }
            Ok((direct, indirect))
        })
        .collect::<Result<_>>()?;

    let directs: Vec<&Vec<f64>> = curves.iter().map(|rep| &rep.0).collect();
    let indirects: Vec<&Vec<f64>> = curves.iter().map(|rep| &rep.1).collect();
    let (bias_d, sd_d) = integrated_bias_sd(&directs, &grid, |t| truth.eta(t));
    let (bias_i, sd_i) = integrated_bias_sd(&indirects, &grid, |t| truth.indirect_truth(t));
    Ok(EstimationMetrics {
        bias_i,
        sd_i,
        bias_d,
        sd_d,
    })
}

// Integrated bias and sd of per-replicate curves against a truth function,
// with expectations replaced by replicate means.
fn integrated_bias_sd(
    curves: &[&Vec<f64>],
    grid: &[f64],
    truth_fn: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let g = curves.len() as f64;
    let mut mean = vec![0.0; grid.len()];
    for rep in curves {
        for (m, &v) in mean.iter_mut().zip(rep.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= g;
    }
    let bias_sq: Vec<f64> = grid
        .iter()
        .zip(&mean)
        .map(|(&t, &m)| (m - truth_fn(t)).powi(2))
        .collect();
    let var: Vec<f64> = (0..grid.len())
        .map(|j| {
            curves
                .iter()
                .map(|rep| (rep[j] - mean[j]).powi(2))
                .sum::<f64>()
                / g
        })
        .collect();
    (
        simpson_integral(&bias_sq, 0.0, 1.0).max(0.0).sqrt(),
        simpson_integral(&var, 0.0, 1.0).max(0.0).sqrt(),
    )
}

/// Evaluation metrics produced by the study drivers, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct MetricsReport {
    pub power: Vec<PowerPoint>,
    pub screening_frequency: Vec<f64>,
    pub empirical_fdr: Option<f64>,
    pub estimation: Option<EstimationMetrics>,
}
