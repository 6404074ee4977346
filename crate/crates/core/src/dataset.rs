//! Data model and CSV ingestion for sparse longitudinal mediation data.
//!
//! A dataset holds one record per subject: a scalar exposure, a vector of
//! candidate mediators, a vector of covariates, and an irregularly spaced
//! sequence of (time, outcome) observations. Input is long (tidy) CSV with
//! one row per observation; per-subject scalars are repeated on every row
//! and validated for constancy.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map from normalized times back to the original scale:
/// `t_original = offset + scale * t_normalized`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub offset: f64,
    pub scale: f64,
}

impl TimeMap {
    pub fn identity() -> Self {
        TimeMap {
            offset: 0.0,
            scale: 1.0,
        }
    }

    pub fn to_original(&self, t: f64) -> f64 {
        self.offset + self.scale * t
    }

    /// Compose with an inner map applied after this one.
    fn then(&self, inner: TimeMap) -> TimeMap {
        // self maps current -> original, inner maps new -> current.
        TimeMap {
            offset: self.offset + self.scale * inner.offset,
            scale: self.scale * inner.scale,
        }
    }
}

/// One subject: scalar exposure, mediator/covariate vectors, and a strictly
/// increasing observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub exposure: f64,
    pub mediators: Vec<f64>,
    pub covariates: Vec<f64>,
    pub times: Vec<f64>,
    pub outcomes: Vec<f64>,
}

impl Subject {
    pub fn n_obs(&self) -> usize {
        self.times.len()
    }
}

/// Sparse longitudinal mediation dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    pub subjects: Vec<Subject>,
    /// Mediator count, shared by all subjects.
    pub p: usize,
    /// Covariate count, shared by all subjects.
    pub q: usize,
    /// Declared time domain (lo, hi); all observation times lie within it.
    pub time_domain: (f64, f64),
    pub mediator_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Present after `normalize_times`; maps fitted times back to the
    /// original scale.
    pub time_map: Option<TimeMap>,
}

impl LongitudinalDataset {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_observations(&self) -> usize {
        self.subjects.iter().map(Subject::n_obs).sum()
    }

    /// Check every type invariant, naming the offending subject.
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 subjects, have {}",
                self.n_subjects()
            )));
        }
        let (lo, hi) = self.time_domain;
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(Error::InvalidDataset(format!(
                "invalid time domain [{lo}, {hi}]"
            )));
        }
        for s in &self.subjects {
            if s.mediators.len() != self.p {
                return Err(Error::InvalidSubject {
                    subject: s.id.clone(),
                    message: format!("expected {} mediators, found {}", self.p, s.mediators.len()),
                });
            }
            if s.covariates.len() != self.q {
                return Err(Error::InvalidSubject {
                    subject: s.id.clone(),
                    message: format!(
                        "expected {} covariates, found {}",
                        self.q,
                        s.covariates.len()
                    ),
                });
            }
            if s.times.is_empty() || s.times.len() != s.outcomes.len() {
                return Err(Error::InvalidSubject {
                    subject: s.id.clone(),
                    message: format!(
                        "times/outcomes length mismatch ({} vs {})",
                        s.times.len(),
                        s.outcomes.len()
                    ),
                });
            }
            for w in s.times.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::InvalidSubject {
                        subject: s.id.clone(),
                        message: format!("times not strictly increasing at {} -> {}", w[0], w[1]),
                    });
                }
            }
            for &t in &s.times {
                if t < lo || t > hi {
                    return Err(Error::InvalidSubject {
                        subject: s.id.clone(),
                        message: format!("time {t} outside domain [{lo}, {hi}]"),
                    });
                }
            }
            let finite = s.exposure.is_finite()
                && s.mediators.iter().all(|v| v.is_finite())
                && s.covariates.iter().all(|v| v.is_finite())
                && s.times.iter().all(|v| v.is_finite())
                && s.outcomes.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidSubject {
                    subject: s.id.clone(),
                    message: "non-finite value".into(),
                });
            }
        }
        Ok(())
    }
}

/// How mediator/covariate columns are picked out of the header.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSelector {
    /// Explicit column names, in the given order.
    Names(Vec<String>),
    /// Every header column starting with the prefix, in header order,
    /// excluding columns already claimed by another role.
    Prefix(String),
}

/// Column-name map for long CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub id: String,
    pub time: String,
    pub outcome: String,
    pub exposure: String,
    pub mediators: ColumnSelector,
    pub covariates: ColumnSelector,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            id: "id".into(),
            time: "time".into(),
            outcome: "y".into(),
            exposure: "x".into(),
            mediators: ColumnSelector::Prefix("m".into()),
            covariates: ColumnSelector::Prefix("z".into()),
        }
    }
}

fn resolve_columns(
    selector: &ColumnSelector,
    header: &[String],
    claimed: &[&str],
) -> Result<Vec<(usize, String)>> {
    match selector {
        ColumnSelector::Names(names) => names
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .map(|idx| (idx, name.clone()))
                    .ok_or_else(|| Error::MissingColumn(name.clone()))
            })
            .collect(),
        ColumnSelector::Prefix(prefix) => Ok(header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix.as_str()) && !claimed.contains(&h.as_str()))
            .map(|(idx, h)| (idx, h.clone()))
            .collect()),
    }
}

fn parse_field(raw: &str, subject: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::NonFiniteValue {
        subject: subject.to_string(),
        row,
        column: column.to_string(),
    })?;
    if !value.is_finite() {
        return Err(Error::NonFiniteValue {
            subject: subject.to_string(),
            row,
            column: column.to_string(),
        });
    }
    Ok(value)
}

struct SubjectAccum {
    exposure: f64,
    mediators: Vec<f64>,
    covariates: Vec<f64>,
    obs: Vec<(f64, f64)>,
}

/// Load a long CSV file into a validated dataset.
///
/// Rows are grouped by subject id (first-appearance order), sorted by time
/// within subject, and per-subject scalars are checked for constancy across
/// rows. NaN/Inf and duplicate (subject, time) pairs are rejected.
pub fn load_long_csv(path: &Path, schema: &CsvSchema) -> Result<LongitudinalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = find(&schema.id)?;
    let time_col = find(&schema.time)?;
    let outcome_col = find(&schema.outcome)?;
    let exposure_col = find(&schema.exposure)?;

    let claimed = [
        schema.id.as_str(),
        schema.time.as_str(),
        schema.outcome.as_str(),
        schema.exposure.as_str(),
    ];
    let mediator_cols = resolve_columns(&schema.mediators, &header, &claimed)?;
    let covariate_cols = resolve_columns(&schema.covariates, &header, &claimed)?;

    let mut order: Vec<String> = Vec::new();
    let mut accum: HashMap<String, SubjectAccum> = HashMap::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let get = |col: usize, name: &str| -> Result<&str> {
            record
                .get(col)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let id = get(id_col, &schema.id)?.trim().to_string();
        let time = parse_field(get(time_col, &schema.time)?, &id, row_idx, &schema.time)?;
        let outcome = parse_field(
            get(outcome_col, &schema.outcome)?,
            &id,
            row_idx,
            &schema.outcome,
        )?;
        let exposure = parse_field(
            get(exposure_col, &schema.exposure)?,
            &id,
            row_idx,
            &schema.exposure,
        )?;
        let mut mediators = Vec::with_capacity(mediator_cols.len());
        for (col, name) in &mediator_cols {
            mediators.push(parse_field(get(*col, name)?, &id, row_idx, name)?);
        }
        let mut covariates = Vec::with_capacity(covariate_cols.len());
        for (col, name) in &covariate_cols {
            covariates.push(parse_field(get(*col, name)?, &id, row_idx, name)?);
        }

        match accum.get_mut(&id) {
            None => {
                order.push(id.clone());
                accum.insert(
                    id,
                    SubjectAccum {
                        exposure,
                        mediators,
                        covariates,
                        obs: vec![(time, outcome)],
                    },
                );
            }
            Some(entry) => {
                if entry.exposure != exposure {
                    return Err(Error::NonConstantScalar {
                        subject: id,
                        field: "exposure".into(),
                        a: entry.exposure,
                        b: exposure,
                    });
                }
                for (k, (&old, &new)) in entry.mediators.iter().zip(&mediators).enumerate() {
                    if old != new {
                        return Err(Error::NonConstantScalar {
                            subject: id,
                            field: format!("mediator '{}'", mediator_cols[k].1),
                            a: old,
                            b: new,
                        });
                    }
                }
                for (l, (&old, &new)) in entry.covariates.iter().zip(&covariates).enumerate() {
                    if old != new {
                        return Err(Error::NonConstantScalar {
                            subject: id,
                            field: format!("covariate '{}'", covariate_cols[l].1),
                            a: old,
                            b: new,
                        });
                    }
                }
                if entry.obs.iter().any(|&(t, _)| t == time) {
                    return Err(Error::DuplicateTime { subject: id, time });
                }
                entry.obs.push((time, outcome));
            }
        }
    }

    let mut subjects = Vec::with_capacity(order.len());
    let mut t_lo = f64::INFINITY;
    let mut t_hi = f64::NEG_INFINITY;
    for id in order {
        let mut entry = accum.remove(&id).expect("accumulated subject");
        entry.obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(t, _) in &entry.obs {
            t_lo = t_lo.min(t);
            t_hi = t_hi.max(t);
        }
        subjects.push(Subject {
            id,
            exposure: entry.exposure,
            mediators: entry.mediators,
            covariates: entry.covariates,
            times: entry.obs.iter().map(|&(t, _)| t).collect(),
            outcomes: entry.obs.iter().map(|&(_, y)| y).collect(),
        });
    }

    if subjects.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    if t_hi == t_lo {
        // Degenerate but representable; widen so the domain stays valid.
        t_hi = t_lo + 1.0;
    }

    let ds = LongitudinalDataset {
        p: subjects[0].mediators.len(),
        q: subjects[0].covariates.len(),
        subjects,
        time_domain: (t_lo, t_hi),
        mediator_names: mediator_cols.into_iter().map(|(_, n)| n).collect(),
        covariate_names: covariate_cols.into_iter().map(|(_, n)| n).collect(),
        time_map: None,
    };
    ds.validate()?;
    Ok(ds)
}

/// Write a dataset as long CSV with the given column names.
///
/// Values use the shortest decimal representation that parses back to the
/// identical float, so `load_long_csv` of the output reproduces the dataset
/// field-for-field.
pub fn write_long_csv(ds: &LongitudinalDataset, path: &Path, schema: &CsvSchema) -> Result<()> {
    let mediator_names: Vec<&str> = ds.mediator_names.iter().map(String::as_str).collect();
    let covariate_names: Vec<&str> = ds.covariate_names.iter().map(String::as_str).collect();

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "{},{},{},{}",
        schema.id, schema.time, schema.outcome, schema.exposure
    )?;
    for name in mediator_names.iter().chain(&covariate_names) {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;

    for s in &ds.subjects {
        for (t, y) in s.times.iter().zip(&s.outcomes) {
            write!(out, "{},{},{},{}", s.id, t, y, s.exposure)?;
            for v in s.mediators.iter().chain(&s.covariates) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Affinely map all observation times onto [0, 1].
///
/// The dataset-wide min maps to 0 and max to 1; within-subject ordering is
/// preserved and the original scale is retained in `time_map`. Idempotent:
/// re-normalizing an already normalized dataset changes nothing.
pub fn normalize_times(ds: &LongitudinalDataset) -> Result<LongitudinalDataset> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &ds.subjects {
        for &t in &s.times {
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    // Negated form so NaN times also land in the error branch.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(hi > lo) {
        return Err(Error::InvalidDataset(
            "cannot normalize times: all observation times identical".into(),
        ));
    }

    let inner = TimeMap {
        offset: lo,
        scale: hi - lo,
    };
    let time_map = match ds.time_map {
        Some(existing) => existing.then(inner),
        None => inner,
    };

    let subjects = ds
        .subjects
        .iter()
        .map(|s| Subject {
            times: s.times.iter().map(|&t| (t - lo) / (hi - lo)).collect(),
            ..s.clone()
        })
        .collect();

    Ok(LongitudinalDataset {
        subjects,
        time_domain: (0.0, 1.0),
        time_map: Some(time_map),
        ..ds.clone()
    })
}
