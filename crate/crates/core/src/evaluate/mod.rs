//! Cross-validated comparison of the baseline and the learned models.
//!
//! Personalized runs cross-validate each participant on their own bpm
//! target. Generalized runs pool every participant with a z-scored target
//! whose parameters come from the training rows of each fold.

pub mod cv;
pub mod metrics;
pub mod report;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    build_feature_matrix, rows_to_matrix, zscore_fit, FeatureMatrix, FeatureOptions, FeatureRow,
    TargetKind, ZScoreParams, FEATURE_NAMES,
};
use crate::ingest::{AlignedFrame, ParticipantStream};
use crate::linalg::Matrix;
use crate::models::baseline::baseline_interpolate;
use crate::models::importance::ImportanceTable;
use crate::models::{fit_model, ModelKind, ModelSpec, TrainedModel};

pub use cv::{derive_seed, kfold_split, FoldAssignment, FoldPolicy};
pub use metrics::{r_squared, rmse};
pub use report::{
    CvConfig, EvalMode, EvaluationReport, FoldMetrics, ImportanceEntry, ModelMetrics,
    ParticipantMetrics, ParticipantSpan, PooledFoldMetrics,
};

/// One participant's aligned stream and the options used to featurize it.
#[derive(Debug, Clone)]
pub struct ParticipantData {
    pub stream: ParticipantStream,
    pub options: FeatureOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestamp_s: i64,
    pub actual_bpm: f64,
    pub predicted_bpm: f64,
}

/// Out-of-fold predictions of one model for one participant, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub participant_id: String,
    pub model: ModelKind,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct EvaluationRun {
    pub report: EvaluationReport,
    pub traces: Vec<PredictionTrace>,
}

pub const TRACE_HEADER: [&str; 3] = ["timestamp_s", "actual_bpm", "predicted_bpm"];

pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.timestamp_s.to_string(),
            r.actual_bpm.to_string(),
            r.predicted_bpm.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

pub fn export_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_csv(std::io::BufWriter::new(file), rows)
}

/// Predicts every complete-case frame with a trained model. For z-score
/// models `zscore` maps predictions back to bpm.
pub fn prediction_trace(
    model: &TrainedModel<f64>,
    stream: &ParticipantStream,
    options: &FeatureOptions,
    zscore: Option<&ZScoreParams<f64>>,
) -> Result<Vec<TraceRow>> {
    let fm = build_feature_matrix(stream, options, TargetKind::Bpm, None)?;
    let predicted = model.predict(&fm.to_matrix())?;
    Ok(fm
        .timestamps
        .iter()
        .zip(&fm.target)
        .zip(predicted)
        .map(|((&t, &actual), p)| TraceRow {
            timestamp_s: t,
            actual_bpm: actual,
            predicted_bpm: zscore.map_or(p, |z| z.invert(p)),
        })
        .collect())
}

/// Sorted seeded subset of `0..n` of size `cap`; everything when `cap` is 0
/// or at least `n`.
pub fn subsample_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if cap == 0 || n <= cap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

/// Frames with heart rate removed at the given seconds.
fn mask_hr(frames: &[AlignedFrame], hidden: &HashSet<i64>) -> Vec<AlignedFrame> {
    frames
        .iter()
        .map(|f| {
            let mut f = *f;
            if hidden.contains(&f.timestamp_s) {
                f.hr = None;
            }
            f
        })
        .collect()
}


fn validate_inputs(data: &[ParticipantData], specs: &[ModelSpec], cv: &CvConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("no participants to evaluate".into()));
    }
    if specs.is_empty() {
        return Err(Error::InvalidParameter("no models to evaluate".into()));
    }
    if cv.folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {}", cv.folds)));
    }
    for s in specs {
        s.validate()?;
    }
    let mut seen = HashSet::new();
    for d in data {
        d.options.validate()?;
        if !seen.insert(d.stream.participant_id.as_str()) {
            return Err(Error::Data(format!(
                "participant {} appears twice",
                d.stream.participant_id
            )));
        }
    }
    if data.iter().any(|d| d.options.deviation_mode != data[0].options.deviation_mode) {
        return Err(Error::InvalidParameter(
            "all participants must share one deviation mode".into(),
        ));
    }
    Ok(())
}

/// Test rows of one fold with the baseline prediction for each, restricted
/// to the seconds the baseline can cover when it is part of the suite.
struct ScoredRows {
    rows: Vec<usize>,
    baseline_bpm: Vec<f64>,
}

fn scored_test_rows(
    stream: &ParticipantStream,
    fm: &FeatureMatrix,
    test: &[usize],
    specs: &[ModelSpec],
) -> Result<ScoredRows> {
    let Some(window) = specs
        .iter()
        .find(|s| s.kind == ModelKind::Baseline)
        .map(|s| s.baseline_window)
    else {
        return Ok(ScoredRows {
            rows: test.to_vec(),
            baseline_bpm: Vec::new(),
        });
    };
    let hidden: HashSet<i64> = test.iter().map(|&r| fm.timestamps[r]).collect();
    let masked = mask_hr(&stream.frames, &hidden);
    let preds = baseline_interpolate(&masked, window)?;
    let mut out = ScoredRows {
        rows: Vec::with_capacity(test.len()),
        baseline_bpm: Vec::with_capacity(test.len()),
    };
    for &r in test {
        if let Some(p) = preds.get(fm.timestamps[r]) {
            out.rows.push(r);
            out.baseline_bpm.push(p);
        }
    }
    Ok(out)
}

struct ParticipantOutcome {
    span: ParticipantSpan,
    folds: Vec<FoldMetrics>,
    traces: Vec<PredictionTrace>,
    importance: Option<ImportanceEntry>,
    warnings: Vec<String>,
}

fn span_of(d: &ParticipantData, n_rows: usize, n_used: usize) -> ParticipantSpan {
    ParticipantSpan {
        participant_id: d.stream.participant_id.clone(),
        first_s: d.stream.first_second().unwrap_or(0),
        last_s: d.stream.last_second().unwrap_or(0),
        n_rows,
        n_rows_used: n_used,
    }
}

fn personalized_participant(
    index: usize,
    d: &ParticipantData,
    specs: &[ModelSpec],
    cv: &CvConfig,
) -> Result<ParticipantOutcome> {
    let pid = d.stream.participant_id.clone();
    let mut warnings = Vec::new();
    let full = match build_feature_matrix(&d.stream, &d.options, TargetKind::Bpm, None) {
        Ok(fm) => fm,
        Err(Error::Data(msg)) => {
            warnings.push(format!("participant {pid} skipped: {msg}"));
            return Ok(ParticipantOutcome {
                span: span_of(d, 0, 0),
                folds: Vec::new(),
                traces: Vec::new(),
                importance: None,
                warnings,
            });
        }
        Err(e) => return Err(e),
    };
    let seed = derive_seed(cv.seed, index as u64);
    let used = subsample_indices(full.len(), cv.max_rows_per_participant, seed);
    let fm = full.select(&used);
    let span = span_of(d, full.len(), fm.len());
    let mut outcome = ParticipantOutcome {
        span,
        folds: Vec::new(),
        traces: Vec::new(),
        importance: None,
        warnings,
    };
    let assignment = match kfold_split(fm.len(), cv.folds, cv.policy, derive_seed(seed, 1)) {
        Ok(a) => a,
        Err(Error::Data(msg)) => {
            outcome.warnings.push(format!("participant {pid} skipped: {msg}"));
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };

    let x: Matrix<f64> = fm.to_matrix();
    let mut trace_rows: Vec<Vec<TraceRow>> = vec![Vec::new(); specs.len()];
    for fold in 0..cv.folds {
        let train = assignment.train_rows(fold);
        let test = assignment.test_rows(fold);
        let scored = scored_test_rows(&d.stream, &fm, &test, specs)?;
        if scored.rows.len() < 2 {
            outcome.warnings.push(format!(
                "participant {pid} fold {fold}: {} test rows covered by the baseline; fold skipped",
                scored.rows.len()
            ));
            continue;
        }
        let actual: Vec<f64> = scored.rows.iter().map(|&r| fm.target[r]).collect();
        let train_x = x.select_rows(&train);
        let train_y: Vec<f64> = train.iter().map(|&r| fm.target[r]).collect();
        let test_x = x.select_rows(&scored.rows);

        let mut fold_metrics = Vec::with_capacity(specs.len());
        let mut fold_preds = Vec::with_capacity(specs.len());
        let mut skip = false;
        for spec in specs {
            let predicted = match spec.kind {
                ModelKind::Baseline => scored.baseline_bpm.clone(),
                _ => fit_model(spec, &train_x, &train_y)?.predict(&test_x)?,
            };
            let r2 = match r_squared(&actual, &predicted) {
                Ok(v) => v,
                Err(Error::ConstantActual) => {
                    outcome.warnings.push(format!(
                        "participant {pid} fold {fold}: constant heart rate in test rows; fold skipped"
                    ));
                    skip = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            fold_metrics.push(FoldMetrics {
                participant_id: pid.clone(),
                model: spec.kind,
                fold,
                n_test: actual.len(),
                r_squared: r2,
                rmse: rmse(&actual, &predicted)?,
                rmse_bpm: None,
            });
            fold_preds.push(predicted);
        }
        if skip {
            continue;
        }
        outcome.folds.extend(fold_metrics);
        for (m, predicted) in fold_preds.into_iter().enumerate() {
            trace_rows[m].extend(scored.rows.iter().zip(predicted).map(|(&r, p)| TraceRow {
                timestamp_s: fm.timestamps[r],
                actual_bpm: fm.target[r],
                predicted_bpm: p,
            }));
        }
    }
    for (spec, mut rows) in specs.iter().zip(trace_rows) {
        rows.sort_by_key(|r| r.timestamp_s);
        outcome.traces.push(PredictionTrace {
            participant_id: pid.clone(),
            model: spec.kind,
            rows,
        });
    }

    if cv.importance {
        if let Some(spec) = specs.iter().find(|s| s.kind == ModelKind::Forest) {
            let y = fm.targets::<f64>();
            let model = fit_model(spec, &x, &y)?;
            let forest = model.as_forest().expect("forest spec yields a forest");
            let table = ImportanceTable::compute(forest, &x, &y, &FEATURE_NAMES, derive_seed(seed, 2))?;
            outcome.importance = Some(ImportanceEntry { scope: pid, table });
        }
    }
    Ok(outcome)
}

/// Per-participant cross-validation with the raw bpm target.
///
/// Participants with too few complete-case rows are skipped with a warning.
/// Within a fold every model is scored on the same held-out seconds; when
/// the baseline is in the suite those are the held-out seconds it can cover
/// from observations outside the fold's test set.
pub fn run_personalized(
    data: &[ParticipantData],
    specs: &[ModelSpec],
    cv: &CvConfig,
) -> Result<EvaluationRun> {
    validate_inputs(data, specs, cv)?;
    let outcomes: Vec<ParticipantOutcome> = data
        .par_iter()
        .enumerate()
        .map(|(i, d)| personalized_participant(i, d, specs, cv))
        .collect::<Result<_>>()?;

    let mut report = EvaluationReport::new(
        EvalMode::Personalized,
        TargetKind::Bpm,
        data[0].options.deviation_mode,
        *cv,
        specs.to_vec(),
    );
    let mut traces = Vec::new();
    for o in outcomes {
        report.spans.push(o.span);
        report.folds.extend(o.folds);
        report.importance.extend(o.importance);
        report.warnings.extend(o.warnings);
        traces.extend(o.traces.into_iter().filter(|t| !t.rows.is_empty()));
    }
    if report.folds.is_empty() {
        return Err(Error::Data(format!(
            "no participant had enough rows for {}-fold cross-validation",
            cv.folds
        )));
    }
    report.aggregate();
    Ok(EvaluationRun { report, traces })
}

/// Rows of one participant prepared for pooled evaluation.
struct PooledParticipant {
    fm: FeatureMatrix,
    assignment: FoldAssignment,
}

/// Test rows of one participant in one generalized fold.
struct PooledTest {
    participant: usize,
    params: ZScoreParams<f64>,
    /// Row indices into the participant's matrix.
    rows: Vec<usize>,
    baseline_bpm: Vec<f64>,
}

struct GeneralizedFold {
    folds: Vec<FoldMetrics>,
    pooled: Vec<PooledFoldMetrics>,
    /// `(participant, model position, rows)` out-of-fold predictions.
    traces: Vec<(usize, usize, Vec<TraceRow>)>,
    warnings: Vec<String>,
}

fn generalized_fold(
    fold: usize,
    data: &[ParticipantData],
    parts: &[Option<PooledParticipant>],
    specs: &[ModelSpec],
) -> Result<GeneralizedFold> {
    let mut out = GeneralizedFold {
        folds: Vec::new(),
        pooled: Vec::new(),
        traces: Vec::new(),
        warnings: Vec::new(),
    };
    let mut train_rows: Vec<FeatureRow> = Vec::new();
    let mut train_y: Vec<f64> = Vec::new();
    let mut tests: Vec<PooledTest> = Vec::new();
    for (p, part) in parts.iter().enumerate() {
        let Some(part) = part else { continue };
        let pid = &data[p].stream.participant_id;
        let train = part.assignment.train_rows(fold);
        let train_bpm: Vec<f64> = train.iter().map(|&r| part.fm.target[r]).collect();
        let params = match zscore_fit(&train_bpm) {
            Ok(z) => z,
            Err(Error::Data(msg)) => {
                out.warnings
                    .push(format!("participant {pid} excluded from fold {fold}: {msg}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        train_rows.extend(train.iter().map(|&r| part.fm.rows[r]));
        train_y.extend(train_bpm.iter().map(|&b| params.apply(b)));
        let test = part.assignment.test_rows(fold);
        let scored = scored_test_rows(&data[p].stream, &part.fm, &test, specs)?;
        tests.push(PooledTest {
            participant: p,
            params,
            rows: scored.rows,
            baseline_bpm: scored.baseline_bpm,
        });
    }
    let n_test: usize = tests.iter().map(|t| t.rows.len()).sum();
    if train_y.len() < 2 || n_test < 2 {
        out.warnings.push(format!("fold {fold}: too few rows after exclusions; fold skipped"));
        return Ok(out);
    }

    let train_x: Matrix<f64> = rows_to_matrix(&train_rows);
    let test_rows: Vec<FeatureRow> = tests
        .iter()
        .flat_map(|t| {
            let fm = &parts[t.participant].as_ref().expect("included").fm;
            t.rows.iter().map(move |&r| fm.rows[r])
        })
        .collect();
    let test_x: Matrix<f64> = rows_to_matrix(&test_rows);
    let actual_z: Vec<f64> = tests
        .iter()
        .flat_map(|t| {
            let fm = &parts[t.participant].as_ref().expect("included").fm;
            t.rows.iter().map(move |&r| t.params.apply(fm.target[r]))
        })
        .collect();

    for (m, spec) in specs.iter().enumerate() {
        let predicted: Vec<f64> = match spec.kind {
            ModelKind::Baseline => tests
                .iter()
                .flat_map(|t| t.baseline_bpm.iter().map(|&b| t.params.apply(b)))
                .collect(),
            _ => fit_model(spec, &train_x, &train_y)?.predict(&test_x)?,
        };
        match r_squared(&actual_z, &predicted) {
            Ok(r2) => out.pooled.push(PooledFoldMetrics {
                model: spec.kind,
                fold,
                n_test: actual_z.len(),
                r_squared: r2,
                rmse: rmse(&actual_z, &predicted)?,
            }),
            Err(Error::ConstantActual) => {}
            Err(e) => return Err(e),
        }

        let mut offset = 0;
        for t in &tests {
            let len = t.rows.len();
            let fm = &parts[t.participant].as_ref().expect("included").fm;
            let pid = &data[t.participant].stream.participant_id;
            let a = &actual_z[offset..offset + len];
            let pr = &predicted[offset..offset + len];
            offset += len;
            if len < 2 {
                if m == 0 {
                    out.warnings.push(format!(
                        "participant {pid} fold {fold}: {len} scored test rows; not scored"
                    ));
                }
                continue;
            }
            let r2 = match r_squared(a, pr) {
                Ok(v) => v,
                Err(Error::ConstantActual) => {
                    if m == 0 {
                        out.warnings.push(format!(
                            "participant {pid} fold {fold}: constant heart rate in test rows; not scored"
                        ));
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            let bpm_actual: Vec<f64> = t.rows.iter().map(|&r| fm.target[r]).collect();
            let bpm_pred: Vec<f64> = pr.iter().map(|&z| t.params.invert(z)).collect();
            out.folds.push(FoldMetrics {
                participant_id: pid.clone(),
                model: spec.kind,
                fold,
                n_test: len,
                r_squared: r2,
                rmse: rmse(a, pr)?,
                rmse_bpm: Some(rmse(&bpm_actual, &bpm_pred)?),
            });
            let rows = t
                .rows
                .iter()
                .zip(bpm_pred)
                .map(|(&r, p)| TraceRow {
                    timestamp_s: fm.timestamps[r],
                    actual_bpm: fm.target[r],
                    predicted_bpm: p,
                })
                .collect();
            out.traces.push((t.participant, m, rows));
        }
    }
    Ok(out)
}

/// Pooled cross-validation with a per-participant z-scored target.
///
/// Folds are stratified by participant: each participant's rows are split
/// into `k` folds on their own, and fold `f` pools every participant's
/// fold `f`. Z-score parameters are fit on each participant's training rows
/// of the fold only. Per-participant metrics are in z units; `rmse_bpm`
/// maps predictions back to bpm with the same parameters.
pub fn run_generalized(
    data: &[ParticipantData],
    specs: &[ModelSpec],
    cv: &CvConfig,
) -> Result<EvaluationRun> {
    validate_inputs(data, specs, cv)?;
    if data.len() < 2 {
        return Err(Error::Data(format!(
            "generalized evaluation pools participants and needs at least 2, got {}",
            data.len()
        )));
    }
    let per_participant_cap = match (cv.max_rows_per_participant, cv.max_pooled_rows) {
        (0, 0) => 0,
        (a, 0) => a,
        (0, b) => (b / data.len()).max(cv.folds),
        (a, b) => a.min((b / data.len()).max(cv.folds)),
    };

    let mut report = EvaluationReport::new(
        EvalMode::Generalized,
        TargetKind::Zscore,
        data[0].options.deviation_mode,
        *cv,
        specs.to_vec(),
    );
    let mut parts: Vec<Option<PooledParticipant>> = Vec::with_capacity(data.len());
    for (i, d) in data.iter().enumerate() {
        let pid = &d.stream.participant_id;
        let full = match build_feature_matrix(&d.stream, &d.options, TargetKind::Bpm, None) {
            Ok(fm) => fm,
            Err(Error::Data(msg)) => {
                report.warnings.push(format!("participant {pid} skipped: {msg}"));
                report.spans.push(span_of(d, 0, 0));
                parts.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        let seed = derive_seed(cv.seed, i as u64);
        let used = subsample_indices(full.len(), per_participant_cap, seed);
        let fm = full.select(&used);
        report.spans.push(span_of(d, full.len(), fm.len()));
        match kfold_split(fm.len(), cv.folds, cv.policy, derive_seed(seed, 1)) {
            Ok(assignment) => parts.push(Some(PooledParticipant { fm, assignment })),
            Err(Error::Data(msg)) => {
                report.warnings.push(format!("participant {pid} skipped: {msg}"));
                parts.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    if parts.iter().flatten().count() < 2 {
        return Err(Error::Data(
            "fewer than 2 participants have enough rows for generalized evaluation".into(),
        ));
    }

    let fold_results: Vec<GeneralizedFold> = (0..cv.folds)
        .into_par_iter()
        .map(|fold| generalized_fold(fold, data, &parts, specs))
        .collect::<Result<_>>()?;

    let mut trace_rows: Vec<Vec<Vec<TraceRow>>> = vec![vec![Vec::new(); specs.len()]; data.len()];
    for fr in fold_results {
        report.folds.extend(fr.folds);
        report.pooled_folds.extend(fr.pooled);
        report.warnings.extend(fr.warnings);
        for (p, m, rows) in fr.traces {
            trace_rows[p][m].extend(rows);
        }
    }
    // Group fold entries by participant so they read in input order.
    let order = |pid: &str| data.iter().position(|d| d.stream.participant_id == pid);
    report.folds.sort_by_key(|f| (order(&f.participant_id), f.fold));
    if report.folds.is_empty() {
        return Err(Error::Data("no generalized fold could be scored".into()));
    }

    let mut traces = Vec::new();
    for (p, per_model) in trace_rows.into_iter().enumerate() {
        for (spec, mut rows) in specs.iter().zip(per_model) {
            if rows.is_empty() {
                continue;
            }
            rows.sort_by_key(|r| r.timestamp_s);
            traces.push(PredictionTrace {
                participant_id: data[p].stream.participant_id.clone(),
                model: spec.kind,
                rows,
            });
        }
    }

    if cv.importance {
        if let Some(spec) = specs.iter().find(|s| s.kind == ModelKind::Forest) {
            let mut rows = Vec::new();
            let mut y = Vec::new();
            for part in parts.iter().flatten() {
                let Ok(params) = zscore_fit(&part.fm.target) else { continue };
                rows.extend_from_slice(&part.fm.rows);
                y.extend(part.fm.target.iter().map(|&b| params.apply(b)));
            }
            let x: Matrix<f64> = rows_to_matrix(&rows);
            let model = fit_model(spec, &x, &y)?;
            let forest = model.as_forest().expect("forest spec yields a forest");
            let table =
                ImportanceTable::compute(forest, &x, &y, &FEATURE_NAMES, derive_seed(cv.seed, 2))?;
            report.importance.push(ImportanceEntry {
                scope: "pooled".into(),
                table,
            });
        }
    }
    report.aggregate();
    Ok(EvaluationRun { report, traces })
}
