//! Evaluation report: per-fold metrics, aggregation and export.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::cv::FoldPolicy;
use crate::features::{DeviationMode, TargetKind};
use crate::models::importance::ImportanceTable;
use crate::models::{ModelKind, ModelSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Personalized,
    Generalized,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalMode::Personalized => "personalized",
            EvalMode::Generalized => "generalized",
        })
    }
}

/// Cross-validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub policy: FoldPolicy,
    pub seed: u64,
    /// Seeded row subsample per participant; `0` keeps every row.
    pub max_rows_per_participant: usize,
    /// Cap on pooled rows in generalized mode, split evenly across
    /// participants; `0` disables it.
    pub max_pooled_rows: usize,
    /// Compute forest feature importance alongside the metrics.
    pub importance: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            policy: FoldPolicy::Shuffled,
            seed: 42,
            max_rows_per_participant: 2500,
            max_pooled_rows: 6000,
            importance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub participant_id: String,
    pub model: ModelKind,
    pub fold: usize,
    pub n_test: usize,
    pub r_squared: f64,
    pub rmse: f64,
    /// RMSE after mapping z-score predictions back to bpm (generalized only).
    pub rmse_bpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantMetrics {
    pub participant_id: String,
    pub model: ModelKind,
    pub n_folds: usize,
    pub r_squared: f64,
    pub rmse: f64,
    pub rmse_bpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: ModelKind,
    pub n_participants: usize,
    pub r_squared: f64,
    pub rmse: f64,
    pub rmse_bpm: Option<f64>,
}

/// Metrics over all pooled test rows of one generalized fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledFoldMetrics {
    pub model: ModelKind,
    pub fold: usize,
    pub n_test: usize,
    pub r_squared: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSpan {
    pub participant_id: String,
    pub first_s: i64,
    pub last_s: i64,
    /// Complete-case rows available.
    pub n_rows: usize,
    /// Rows used after subsampling.
    pub n_rows_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    /// Participant id, or `pooled` for the generalized forest.
    pub scope: String,
    pub table: ImportanceTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub mode: EvalMode,
    pub target_kind: TargetKind,
    pub deviation_mode: DeviationMode,
    pub cv: CvConfig,
    pub specs: Vec<ModelSpec>,
    pub spans: Vec<ParticipantSpan>,
    pub folds: Vec<FoldMetrics>,
    pub participants: Vec<ParticipantMetrics>,
    pub models: Vec<ModelMetrics>,
    pub pooled_folds: Vec<PooledFoldMetrics>,
    pub importance: Vec<ImportanceEntry>,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_opt(values: &[Option<f64>]) -> Option<f64> {
    values
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
        .map(|v| mean(v.into_iter()))
}

impl EvaluationReport {
    pub fn new(
        mode: EvalMode,
        target_kind: TargetKind,
        deviation_mode: DeviationMode,
        cv: CvConfig,
        specs: Vec<ModelSpec>,
    ) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            mode,
            target_kind,
            deviation_mode,
            cv,
            specs,
            spans: Vec::new(),
            folds: Vec::new(),
            participants: Vec::new(),
            models: Vec::new(),
            pooled_folds: Vec::new(),
            importance: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Recomputes participant means from fold entries and model means from
    /// participant means (participants weighted equally).
    pub fn aggregate(&mut self) {
        let mut participants = Vec::new();
        let mut ids: Vec<&str> = Vec::new();
        for f in &self.folds {
            if !ids.contains(&f.participant_id.as_str()) {
                ids.push(&f.participant_id);
            }
        }
        for spec in &self.specs {
            for id in &ids {
                let rows: Vec<&FoldMetrics> = self
                    .folds
                    .iter()
                    .filter(|f| f.model == spec.kind && f.participant_id == *id)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                participants.push(ParticipantMetrics {
                    participant_id: id.to_string(),
                    model: spec.kind,
                    n_folds: rows.len(),
                    r_squared: mean(rows.iter().map(|f| f.r_squared)),
                    rmse: mean(rows.iter().map(|f| f.rmse)),
                    rmse_bpm: mean_opt(&rows.iter().map(|f| f.rmse_bpm).collect::<Vec<_>>()),
                });
            }
        }
        let models = self
            .specs
            .iter()
            .filter_map(|spec| {
                let rows: Vec<&ParticipantMetrics> =
                    participants.iter().filter(|p| p.model == spec.kind).collect();
                (!rows.is_empty()).then(|| ModelMetrics {
                    model: spec.kind,
                    n_participants: rows.len(),
                    r_squared: mean(rows.iter().map(|p| p.r_squared)),
                    rmse: mean(rows.iter().map(|p| p.rmse)),
                    rmse_bpm: mean_opt(&rows.iter().map(|p| p.rmse_bpm).collect::<Vec<_>>()),
                })
            })
            .collect();
        self.participants = participants;
        self.models = models;
    }

    pub fn model(&self, kind: ModelKind) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.model == kind)
    }

    pub fn participant_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for p in &self.participants {
            if !ids.contains(&p.participant_id.as_str()) {
                ids.push(&p.participant_id);
            }
        }
        ids
    }

    /// One line per model: mean R-squared and RMSE across participants.
    pub fn summary_table(&self) -> String {
        let units = match self.target_kind {
            TargetKind::Bpm => "bpm",
            TargetKind::Zscore => "z",
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} evaluation, {}-fold {:?} CV, {} participant(s)",
            self.mode,
            self.cv.folds,
            self.cv.policy,
            self.participant_ids().len()
        );
        let _ = writeln!(out, "{:<10} {:>10} {:>12}", "model", "R2", format!("RMSE ({units})"));
        for m in &self.models {
            let _ = writeln!(out, "{:<10} {:>10.4} {:>12.4}", m.model, m.r_squared, m.rmse);
        }
        out
    }

    /// Flat `participant_id,model,fold,metric,value` rows.
    pub fn write_metrics_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["participant_id", "model", "fold", "metric", "value"])?;
        for f in &self.folds {
            let mut metrics = vec![
                ("n_test", f.n_test as f64),
                ("r_squared", f.r_squared),
                ("rmse", f.rmse),
            ];
            if let Some(v) = f.rmse_bpm {
                metrics.push(("rmse_bpm", v));
            }
            for (name, value) in metrics {
                w.write_record([
                    f.participant_id.clone(),
                    f.model.to_string(),
                    f.fold.to_string(),
                    name.to_string(),
                    value.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<metrics writer>", e))?;
        Ok(())
    }

    /// Writes `report.json`, `metrics.csv` and `summary.txt` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        let file = File::create(&json).map_err(|e| Error::io(&json, e))?;
        let mut bw = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut bw, self)?;
        bw.flush().map_err(|e| Error::io(&json, e))?;

        let csv_path = dir.join("metrics.csv");
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_metrics_csv(BufWriter::new(file))?;

        let txt = dir.join("summary.txt");
        std::fs::write(&txt, self.summary_table()).map_err(|e| Error::io(&txt, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_reader(BufReader::new(file))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "report schema version {} is not supported",
                report.schema_version
            )));
        }
        Ok(report)
    }
}
