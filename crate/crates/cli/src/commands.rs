use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use hrgap_core::evaluate::{
    derive_seed, export_trace, run_generalized, run_personalized, subsample_indices,
    ParticipantData,
};
use hrgap_core::features::{
    build_feature_matrix, zscore_fit, FeatureMatrix, FeatureRow, TargetKind, FEATURE_NAMES,
};
use hrgap_core::ingest::{detect_gaps, write_aligned_file, ParticipantStream};
use hrgap_core::models::importance::ImportanceTable;
use hrgap_core::models::{fit_model, ModelKind};
use hrgap_core::synthgen::{generate_participant, inject_gaps, write_participant_dir};
use hrgap_core::{Error, Model, ModelFile, Result};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{load_streams, ALIGNED_FILE};

fn create_out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.paths.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn participant_data(cfg: &RunConfig, streams: Vec<ParticipantStream>) -> Vec<ParticipantData> {
    streams
        .into_iter()
        .map(|stream| ParticipantData {
            stream,
            options: cfg.features,
        })
        .collect()
}

/// Feature rows of every participant. With a z-score target each
/// participant is standardized with their own mean and std.
fn pooled_features(
    cfg: &RunConfig,
    streams: &[ParticipantStream],
    target: TargetKind,
) -> Result<FeatureMatrix> {
    let parts: Vec<FeatureMatrix> = streams
        .par_iter()
        .map(|s| {
            let bpm = build_feature_matrix(s, &cfg.features, TargetKind::Bpm, None)?;
            match target {
                TargetKind::Bpm => Ok(bpm),
                TargetKind::Zscore => {
                    let z = zscore_fit(&bpm.target).map_err(|e| {
                        Error::Data(format!("participant {}: {e}", s.participant_id))
                    })?;
                    build_feature_matrix(s, &cfg.features, TargetKind::Zscore, Some(&z))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut out = FeatureMatrix::empty(target);
    for p in parts {
        out.extend(p)?;
    }
    Ok(out)
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let synth = cfg.simulate;
    synth.validate()?;
    let patterns = cfg.gaps.parsed()?;
    let out = create_out_dir(cfg)?;
    let summaries: Vec<(String, usize, usize, Vec<(i64, i64)>)> = (0..synth.n_participants)
        .into_par_iter()
        .map(|i| {
            let mut p = generate_participant(&synth, i)?;
            let mut deleted = 0;
            let mut intervals = Vec::new();
            if !patterns.is_empty() {
                let (kept, mask) = inject_gaps(
                    &p.hr,
                    &patterns,
                    synth.tz_offset_minutes,
                    derive_seed(cfg.gaps.seed, i as u64),
                )?;
                deleted = p.hr.len() - kept.len();
                p.hr = kept;
                intervals = mask.intervals;
            }
            write_participant_dir(out.join(&p.participant_id), &p)?;
            Ok((p.participant_id, deleted, p.clamp_events, intervals))
        })
        .collect::<Result<_>>()?;

    let gaps_path = out.join("gaps.csv");
    let mut w = create_file(&gaps_path)?;
    writeln!(w, "participant_id,start_s,end_s").map_err(|e| Error::io(&gaps_path, e))?;
    for (pid, deleted, clamps, intervals) in &summaries {
        for (a, b) in intervals {
            writeln!(w, "{pid},{a},{b}").map_err(|e| Error::io(&gaps_path, e))?;
        }
        println!(
            "{pid}: {} s simulated, {deleted} heart-rate samples removed, {clamps} clamped",
            synth.duration_s
        );
    }
    w.flush().map_err(|e| Error::io(&gaps_path, e))?;
    println!("wrote {} participant(s) to {}", summaries.len(), out.display());
    Ok(())
}

pub fn align(cfg: &RunConfig, data: &Path) -> anyhow::Result<()> {
    let streams = load_streams(data)?;
    let out = create_out_dir(cfg)?;
    for s in &streams {
        s.validate_grid()?;
        let complete = s.frames.iter().filter(|f| f.is_complete()).count();
        let gaps = detect_gaps(&s.frames);
        println!(
            "{}: {} s, {complete} complete, {} gap(s) covering {} s",
            s.participant_id,
            s.frames.len(),
            gaps.intervals.len(),
            gaps.seconds()
        );
    }
    let path = out.join(ALIGNED_FILE);
    write_aligned_file(&path, &streams)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn featurize(cfg: &RunConfig, data: &Path, target: TargetKind) -> anyhow::Result<()> {
    let streams = load_streams(data)?;
    let fm = pooled_features(cfg, &streams, target)?;
    let path = create_out_dir(cfg)?.join("features.csv");
    fm.write_csv(create_file(&path)?)?;
    println!("wrote {} rows to {}", fm.len(), path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path) -> anyhow::Result<()> {
    let kind = cfg.train.model;
    if kind == ModelKind::Baseline {
        return Err(Error::InvalidParameter(
            "the baseline predicts from the heart-rate timeline and has nothing to train".into(),
        )
        .into());
    }
    let spec = cfg.spec(kind);
    let streams = load_streams(data)?;
    let fm = pooled_features(cfg, &streams, cfg.train.target)?;
    let rows = subsample_indices(fm.len(), cfg.train.max_rows, derive_seed(spec.seed, 0));
    let fm = fm.select(&rows);
    let model = fit_model::<f64>(&spec, &fm.to_matrix(), &fm.targets())
        .with_context(|| format!("fitting {kind}"))?;
    let file = ModelFile::new(model, &FEATURE_NAMES, cfg.features.deviation_mode, cfg.train.target);
    let path = create_out_dir(cfg)?.join("model.json");
    file.save(&path)?;
    println!(
        "trained {kind} ({} target) on {} rows from {} participant(s); wrote {}",
        cfg.train.target,
        fm.len(),
        streams.len(),
        path.display()
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, data: &Path, generalized: bool) -> anyhow::Result<()> {
    let streams = load_streams(data)?;
    let data = participant_data(cfg, streams);
    let run = if generalized {
        run_generalized(&data, &cfg.models, &cfg.cv)?
    } else {
        run_personalized(&data, &cfg.models, &cfg.cv)?
    };
    let out = create_out_dir(cfg)?;
    run.report.export(out)?;
    let traces = out.join("traces");
    std::fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    for t in &run.traces {
        export_trace(traces.join(format!("{}_{}.csv", t.participant_id, t.model)), &t.rows)?;
    }
    for entry in &run.report.importance {
        let path = out.join(format!("importance_{}.csv", entry.scope));
        entry.table.write_csv(create_file(&path)?)?;
    }
    for w in &run.report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", run.report.summary_table());
    Ok(())
}

pub fn importance(cfg: &RunConfig, data: &Path, participant: Option<&str>) -> anyhow::Result<()> {
    let spec = cfg.spec(ModelKind::Forest);
    let mut streams = load_streams(data)?;
    let (fm, scope) = match participant {
        Some(id) => {
            streams.retain(|s| s.participant_id == id);
            if streams.is_empty() {
                return Err(Error::Data(format!("participant {id} not found")).into());
            }
            (pooled_features(cfg, &streams, TargetKind::Bpm)?, id.to_string())
        }
        None if streams.len() == 1 => {
            let id = streams[0].participant_id.clone();
            (pooled_features(cfg, &streams, TargetKind::Bpm)?, id)
        }
        None => (pooled_features(cfg, &streams, TargetKind::Zscore)?, "pooled".to_string()),
    };
    let rows = subsample_indices(fm.len(), cfg.train.max_rows, derive_seed(spec.seed, 0));
    let fm = fm.select(&rows);
    let (x, y): (hrgap_core::Matrix, Vec<f64>) = (fm.to_matrix(), fm.targets());
    let model = fit_model(&spec, &x, &y)?;
    let forest = model.as_forest().expect("forest spec");
    let table = ImportanceTable::compute(forest, &x, &y, &FEATURE_NAMES, derive_seed(spec.seed, 2))?;

    let path = create_out_dir(cfg)?.join(format!("importance_{scope}.csv"));
    table.write_csv(create_file(&path)?)?;
    println!("{:<10} {:>12} {:>12}", "feature", "split_gain", "permutation");
    for i in ImportanceTable::ranking(&table.permutation) {
        println!(
            "{:<10} {:>12.5} {:>12.5}",
            table.features[i], table.split_gain[i], table.permutation[i]
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
struct FillCounts {
    observed: usize,
    estimated: usize,
    missing: usize,
}

/// Observed heart rate where present, model estimates in the gaps that have
/// phone features, and an empty value (`missing`) elsewhere.
fn fill_stream<W: Write>(
    out: &mut csv::Writer<W>,
    stream: &ParticipantStream,
    file: &ModelFile,
    cfg: &RunConfig,
) -> anyhow::Result<FillCounts> {
    let opts = hrgap_core::features::FeatureOptions {
        deviation_mode: file.deviation_mode,
        ..cfg.features
    };
    let gap_rows: Vec<(usize, FeatureRow)> = stream
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.hr.is_none())
        .filter_map(|(i, f)| FeatureRow::from_frame(f, &opts).map(|r| (i, r)))
        .collect();
    let rows: Vec<FeatureRow> = gap_rows.iter().map(|(_, r)| *r).collect();
    let model: &Model = &file.model;
    let mut predicted = model.predict(&hrgap_core::features::rows_to_matrix(&rows))?;
    if file.target_kind == TargetKind::Zscore && !predicted.is_empty() {
        let observed: Vec<f64> = stream.frames.iter().filter_map(|f| f.hr).collect();
        let z = zscore_fit(&observed).with_context(|| {
            format!(
                "participant {}: z-score model needs the participant's observed heart rate",
                stream.participant_id
            )
        })?;
        for p in &mut predicted {
            *p = z.invert(*p);
        }
    }

    let mut counts = FillCounts::default();
    let mut next = gap_rows.iter().map(|(i, _)| *i).zip(predicted).peekable();
    for (i, f) in stream.frames.iter().enumerate() {
        let ts = f.timestamp_s.to_string();
        let pid = stream.participant_id.as_str();
        if let Some(bpm) = f.hr {
            counts.observed += 1;
            out.write_record([ts.as_str(), pid, &bpm.to_string(), "observed"])?;
        } else if let Some((_, p)) = next.next_if(|(j, _)| *j == i) {
            counts.estimated += 1;
            out.write_record([ts.as_str(), pid, &p.to_string(), "estimated"])?;
        } else {
            counts.missing += 1;
            out.write_record([ts.as_str(), pid, "", "missing"])?;
        }
    }
    Ok(counts)
}

pub fn fill(cfg: &RunConfig, data: &Path, model_path: &Path, output: &Path) -> anyhow::Result<()> {
    let file = ModelFile::load(model_path)?;
    file.check_schema(&FEATURE_NAMES)?;
    if file.model.kind() == ModelKind::Baseline {
        return Err(Error::Data("a baseline model file cannot fill gaps".into()).into());
    }
    let streams = load_streams(data)?;
    let mut w = csv::Writer::from_writer(create_file(output)?);
    w.write_record(["timestamp_s", "participant_id", "bpm", "provenance"])?;
    let mut total = FillCounts::default();
    for s in &streams {
        let c = fill_stream(&mut w, s, &file, cfg)?;
        println!(
            "{}: {} observed, {} estimated, {} missing (no phone features)",
            s.participant_id, c.observed, c.estimated, c.missing
        );
        total.observed += c.observed;
        total.estimated += c.estimated;
        total.missing += c.missing;
    }
    w.flush().map_err(|e| Error::io(output, e))?;
    println!(
        "filled {}: {} observed, {} estimated, {} missing",
        output.display(),
        total.observed,
        total.estimated,
        total.missing
    );
    Ok(())
}
