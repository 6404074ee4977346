//! Subcommand implementations and output-file writers.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use medlong::covariance::CorrelationStructure;
use medlong::dataset::{load_long_csv, CsvSchema, LongitudinalDataset};
use medlong::effects::{effect_curves, fit_joint_model, write_curves_csv};
use medlong::error::{Error, Result};
use medlong::permtest::fit_mediator_model;
use medlong::pipeline::{analyze, AnalysisOptions, AnalysisResult};
use medlong::screening::{write_screening_json, write_table_csv};
use medlong::sim::{
    run_estimation_study, run_power_study, run_screening_study_multi, NoiseCase, Scenario,
    SimulationConfig, TruthSpec,
};
use medlong::spline::select_basis_dimension;

use crate::config::{parse_contrast, parse_knots, parse_selector, FileConfig};
use crate::manifest::Timer;

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Input long CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub outdir: PathBuf,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Correlation structure: diagonal, ar1, uniform, or power.
    #[arg(long)]
    pub structure: Option<String>,
    /// Permutation count S.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target FDR level b.
    #[arg(long)]
    pub fdr_level: Option<f64>,
    /// Interior-knot candidates, comma separated (single value fixes the
    /// basis without cross-validation).
    #[arg(long)]
    pub basis_knots: Option<String>,
    /// Use add-one smoothed permutation p-values.
    #[arg(long)]
    pub smoothed_pvalues: bool,
    /// Re-estimate the weight pipeline inside every permutation draw.
    #[arg(long)]
    pub reestimate_weights: bool,
    /// Exposure contrast as "x,x_star".
    #[arg(long)]
    pub contrast: Option<String>,
    /// Curve evaluation grid size.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Column holding the subject id.
    #[arg(long)]
    pub id_col: Option<String>,
    /// Column holding the observation time.
    #[arg(long)]
    pub time_col: Option<String>,
    /// Column holding the outcome.
    #[arg(long)]
    pub outcome_col: Option<String>,
    /// Column holding the exposure.
    #[arg(long)]
    pub exposure_col: Option<String>,
    /// Mediator columns: "prefix:m" or comma-separated names.
    #[arg(long)]
    pub mediator_cols: Option<String>,
    /// Covariate columns: "prefix:z" or comma-separated names.
    #[arg(long)]
    pub covariate_cols: Option<String>,
}

fn merged_schema(args: &AnalyzeArgs, file: &FileConfig) -> CsvSchema {
    let mut schema = file.schema.clone().unwrap_or_default();
    if let Some(v) = &args.id_col {
        schema.id = v.clone();
    }
    if let Some(v) = &args.time_col {
        schema.time = v.clone();
    }
    if let Some(v) = &args.outcome_col {
        schema.outcome = v.clone();
    }
    if let Some(v) = &args.exposure_col {
        schema.exposure = v.clone();
    }
    if let Some(v) = &args.mediator_cols {
        schema.mediators = parse_selector(v);
    }
    if let Some(v) = &args.covariate_cols {
        schema.covariates = parse_selector(v);
    }
    schema
}

fn merged_options(args: &AnalyzeArgs, file: &FileConfig) -> Result<AnalysisOptions> {
    let defaults = AnalysisOptions::default();
    let structure = match args.structure.as_deref().or(file.structure.as_deref()) {
        Some(raw) => raw.parse()?,
        None => defaults.structure,
    };
    let basis_candidates = match &args.basis_knots {
        Some(raw) => parse_knots(raw)?,
        None => file
            .basis_knots
            .clone()
            .unwrap_or(defaults.basis_candidates),
    };
    let contrast = match &args.contrast {
        Some(raw) => parse_contrast(raw)?,
        None => file.contrast.unwrap_or(defaults.contrast),
    };
    Ok(AnalysisOptions {
        structure,
        permutations: args
            .permutations
            .or(file.permutations)
            .unwrap_or(defaults.permutations),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        fdr_level: args
            .fdr_level
            .or(file.fdr_level)
            .unwrap_or(defaults.fdr_level),
        basis_candidates,
        smoothed_pvalues: args.smoothed_pvalues || file.smoothed_pvalues.unwrap_or(false),
        reestimate_weights: args.reestimate_weights || file.reestimate_weights.unwrap_or(false),
        contrast,
        grid_points: args
            .grid_points
            .or(file.grid_points)
            .unwrap_or(defaults.grid_points),
    })
}

fn write_summary(
    dir: &Path,
    ds: &LongitudinalDataset,
    opts: &AnalysisOptions,
    res: &AnalysisResult,
    with_effects: bool,
) -> Result<()> {
    let mut out = std::fs::File::create(dir.join("summary.txt"))?;
    writeln!(
        out,
        "dataset: {} subjects, {} mediators, {} covariates, {} observations",
        ds.n_subjects(),
        ds.p,
        ds.q,
        ds.total_observations()
    )?;
    writeln!(
        out,
        "basis: cubic, {} interior knots ({} basis functions)",
        res.basis.interior_knots(),
        res.basis.dim()
    )?;
    match res.rho {
        Some(rho) => writeln!(out, "structure: {} (rho = {rho:.4})", opts.structure)?,
        None => writeln!(out, "structure: {}", opts.structure)?,
    }
    writeln!(
        out,
        "screening: b = {}, lambda_b = {}, pi00 = {:.4}, pi01 = {:.4}, pi10 = {:.4}",
        res.screening.b,
        res.screening.lambda_b,
        res.screening.pi00,
        res.screening.pi01,
        res.screening.pi10
    )?;
    if res.screening.selected.is_empty() {
        writeln!(out, "selected mediators: none")?;
    } else {
        writeln!(out, "selected mediators:")?;
        for &k in &res.screening.selected {
            let row = &res.table.rows[k];
            writeln!(
                out,
                "  {} ({}): p_alpha = {:.4e}, p_beta = {:.4e}, p_joint = {:.4e}",
                k + 1,
                ds.mediator_names.get(k).map(String::as_str).unwrap_or(""),
                row.p_alpha,
                row.p_beta,
                row.p_joint
            )?;
        }
    }
    if with_effects {
        let (x, x_star) = opts.contrast;
        writeln!(out, "effect curves for contrast x = {x}, x* = {x_star}:")?;
        for pt in res
            .curves
            .iter()
            .filter(|pt| [0.0, 0.25, 0.5, 0.75, 1.0].contains(&pt.t))
        {
            writeln!(
                out,
                "  t = {:.2} (original {:.4}): NDE = {:.4}, NIE = {:.4}",
                pt.t, pt.t_original, pt.nde, pt.nie
            )?;
        }
    }
    Ok(())
}

pub fn run_analyze(args: &AnalyzeArgs, with_effects: bool) -> Result<()> {
    let timer = Timer::start();
    let file_config = FileConfig::load(args.config.as_deref())?;
    let schema = merged_schema(args, &file_config);
    let opts = merged_options(args, &file_config)?;

    let ds = load_long_csv(&args.input, &schema)?;
    std::fs::create_dir_all(&args.outdir)?;
    let res = analyze(&ds, &opts)?;

    let tests = std::fs::File::create(args.outdir.join("tests.csv"))?;
    write_table_csv(tests, &res.table, &ds.mediator_names, &res.screening)?;
    let scr = std::fs::File::create(args.outdir.join("screening.json"))?;
    write_screening_json(scr, &res.screening, &ds.mediator_names)?;
    if with_effects {
        let eff = std::fs::File::create(args.outdir.join("effects.csv"))?;
        write_curves_csv(eff, &res.curves, &res.joint.selected)?;
    }
    write_summary(&args.outdir, &ds, &opts, &res, with_effects)?;

    #[derive(Serialize)]
    struct Results {
        selected: Vec<usize>,
        lambda_b: f64,
        basis_interior_knots: usize,
        rho: Option<f64>,
    }
    timer.write_manifest(
        &args.outdir,
        if with_effects { "analyze" } else { "screen" },
        &opts,
        Results {
            selected: res.screening.selected.iter().map(|&k| k + 1).collect(),
            lambda_b: res.screening.lambda_b,
            basis_interior_knots: res.basis.interior_knots(),
            rho: res.rho,
        },
    )?;
    Ok(())
}

#[derive(Args)]
pub struct EffectsArgs {
    #[command(flatten)]
    pub base: AnalyzeArgs,
    /// Mediators to include in the joint model, 1-based, comma separated.
    #[arg(long)]
    pub mediators: String,
}

pub fn run_effects(args: &EffectsArgs) -> Result<()> {
    let timer = Timer::start();
    let file_config = FileConfig::load(args.base.config.as_deref())?;
    let schema = merged_schema(&args.base, &file_config);
    let opts = merged_options(&args.base, &file_config)?;

    let ds = load_long_csv(&args.base.input, &schema)?;
    let ds = medlong::dataset::normalize_times(&ds)?;
    std::fs::create_dir_all(&args.base.outdir)?;

    let selected: Vec<usize> = args
        .mediators
        .split(',')
        .map(|s| -> Result<usize> {
            let k: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad mediator index '{s}'")))?;
            if k == 0 || k > ds.p {
                return Err(Error::MediatorIndexOutOfRange {
                    index: k,
                    count: ds.p,
                });
            }
            Ok(k - 1)
        })
        .collect::<Result<_>>()?;

    let basis = select_basis_dimension(&ds, opts.structure, &opts.basis_candidates, opts.seed)?;
    let fit = fit_joint_model(&ds, &selected, &basis, opts.structure)?;
    let mediator_fits: Vec<_> = fit
        .selected
        .iter()
        .map(|&k| fit_mediator_model(&ds, k))
        .collect::<Result<_>>()?;
    let grid: Vec<f64> = (0..opts.grid_points)
        .map(|i| i as f64 / (opts.grid_points - 1) as f64)
        .collect();
    let curves = effect_curves(
        &fit,
        &mediator_fits,
        opts.contrast.0,
        opts.contrast.1,
        &grid,
        ds.time_map,
    )?;
    let eff = std::fs::File::create(args.base.outdir.join("effects.csv"))?;
    write_curves_csv(eff, &curves, &fit.selected)?;

    #[derive(Serialize)]
    struct Results {
        mediators: Vec<usize>,
        basis_interior_knots: usize,
    }
    timer.write_manifest(
        &args.base.outdir,
        "effects",
        &opts,
        Results {
            mediators: fit.selected.iter().map(|&k| k + 1).collect(),
            basis_interior_knots: basis.interior_knots(),
        },
    )?;
    Ok(())
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Time-sampling scenario: 1 (dense), 2 (sparse), or 3 (varying).
    #[arg(long)]
    pub scenario: u8,
    /// Outcome-error case: 1 (independent), 2 (AR1), 3 (uniform), or
    /// 4 (heteroscedastic mixed).
    #[arg(long)]
    pub case: u8,
    #[arg(long)]
    pub outdir: PathBuf,
    /// Desk-scale study sizes (G=50, S=200); the default.
    #[arg(long, conflicts_with = "paper_scale")]
    pub desk_scale: bool,
    /// Full-scale study sizes (G=100, S=1000); slow.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub p: usize,
    /// Override the replicate count G.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the permutation count S.
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub fdr_level: f64,
    #[arg(long, default_value = "diagonal")]
    pub structure: String,
    #[arg(long, default_value_t = 20250809)]
    pub seed: u64,
    /// Interior-knot candidates, comma separated.
    #[arg(long, default_value = "1,2,3,4,5,6,7,8")]
    pub basis_knots: String,
}

fn simulate_config(args: &SimulateArgs) -> Result<SimulationConfig> {
    let scenario = Scenario::from_index(args.scenario)?;
    let case = NoiseCase::from_index(args.case)?;
    let (default_g, default_s) = if args.paper_scale {
        (100, 1000)
    } else {
        (50, 200)
    };
    if args.paper_scale {
        eprintln!("warning: paper-scale study (G=100, S=1000); this can run for hours");
    }
    let cfg = SimulationConfig {
        n: args.n,
        p: args.p,
        scenario,
        case,
        delta: args.delta,
        replicates: args.replicates.unwrap_or(default_g),
        permutations: args.permutations.unwrap_or(default_s),
        seed: args.seed,
        fdr_level: args.fdr_level,
        structure: args.structure.parse()?,
        basis_candidates: parse_knots(&args.basis_knots)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn method_label(structure: CorrelationStructure) -> String {
    let tag = match structure {
        CorrelationStructure::Diagonal => "Diagonal",
        CorrelationStructure::Ar1 => "AR",
        CorrelationStructure::Uniform => "Uniform",
        CorrelationStructure::Power => "Power",
    };
    format!("Proposed ({tag})")
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let timer = Timer::start();
    let cfg = simulate_config(args)?;
    let truth = TruthSpec::default();
    std::fs::create_dir_all(&args.outdir)?;

    let screening = run_screening_study_multi(&cfg, &truth, &[cfg.fdr_level])?.remove(0);
    let estimation = run_estimation_study(&cfg, &truth)?;

    let mut table1 = std::fs::File::create(args.outdir.join("table1.csv"))?;
    writeln!(table1, "case,scenario,method,bias_i,sd_i,bias_d,sd_d")?;
    writeln!(
        table1,
        "{},{},{},{},{},{},{}",
        cfg.case.index(),
        cfg.scenario.index(),
        method_label(cfg.structure),
        estimation.bias_i,
        estimation.sd_i,
        estimation.bias_d,
        estimation.sd_d
    )?;

    let mut freq = std::fs::File::create(args.outdir.join("frequencies.csv"))?;
    writeln!(freq, "k,name,frequency")?;
    for (k, f) in screening.frequency.iter().enumerate() {
        writeln!(freq, "{},m{},{}", k + 1, k + 1, f)?;
    }

    #[derive(Serialize)]
    struct Results {
        empirical_fdr: f64,
        mean_pi00: f64,
        bias_i: f64,
        sd_i: f64,
        bias_d: f64,
        sd_d: f64,
    }
    timer.write_manifest(
        &args.outdir,
        "simulate",
        &cfg,
        Results {
            empirical_fdr: screening.empirical_fdr,
            mean_pi00: screening.mean_pi00,
            bias_i: estimation.bias_i,
            sd_i: estimation.sd_i,
            bias_d: estimation.bias_d,
            sd_d: estimation.sd_d,
        },
    )?;
    Ok(())
}

#[derive(Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub sim: SimulateArgs,
    /// Effect-size grid, comma separated.
    #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1.0")]
    pub deltas: String,
}

pub fn run_power(args: &PowerArgs) -> Result<()> {
    let timer = Timer::start();
    let cfg = simulate_config(&args.sim)?;
    let truth = TruthSpec::default();
    let delta_grid: Vec<f64> = args
        .deltas
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad delta '{s}'")))
        })
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(&args.sim.outdir)?;

    let points = run_power_study(&cfg, &truth, &delta_grid)?;
    let mut out = std::fs::File::create(args.sim.outdir.join("power.csv"))?;
    writeln!(out, "delta,method,power")?;
    for pt in &points {
        writeln!(
            out,
            "{},{},{}",
            pt.delta,
            method_label(cfg.structure),
            pt.power
        )?;
    }

    #[derive(Serialize)]
    struct Results {
        power: Vec<(f64, f64)>,
    }
    timer.write_manifest(
        &args.sim.outdir,
        "power",
        &cfg,
        Results {
            power: points.iter().map(|pt| (pt.delta, pt.power)).collect(),
        },
    )?;
    Ok(())
}
