//! Feature engineering: acceleration magnitude and deviation, rounded GPS
//! coordinates, clock decomposition and heart-rate z-scoring.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AlignedFrame, ParticipantStream};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Feature column names, in model input order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "x",
    "y",
    "z",
    "magnitude",
    "lat2",
    "lon2",
    "lat1",
    "lon1",
    "lat0",
    "lon0",
    "hour",
    "minute",
    "second",
];

pub const N_FEATURES: usize = 13;

/// Column ranges by feature family.
pub const MOTION_FEATURES: std::ops::Range<usize> = 0..4;
pub const LOCATION_FEATURES: std::ops::Range<usize> = 4..10;
pub const TEMPORAL_FEATURES: std::ops::Range<usize> = 10..13;

pub const FEATURE_CSV_HEADER: &str =
    "participant_id,x,y,z,magnitude,lat2,lon2,lat1,lon1,lat0,lon0,hour,minute,second,target,target_kind";

/// Largest accepted timezone offset magnitude, in minutes.
pub const MAX_TZ_OFFSET_MINUTES: i32 = 840;

/// Euclidean norm of an acceleration triple.
pub fn accel_magnitude<T: Scalar>(x: T, y: T, z: T) -> T {
    (x * x + y * y + z * z).sqrt()
}

/// Distance from 1 g, which is what a motionless phone reads.
pub fn deviation_transform<T: Scalar>(value: T) -> T {
    (value - T::one()).abs()
}

/// Rounds half away from zero to `decimals` places (0, 1 or 2).
pub fn round_coordinate<T: Scalar>(value: T, decimals: u32) -> T {
    debug_assert!(decimals <= 2);
    let factor = T::of(10f64.powi(decimals as i32));
    // Float::round is half-away-from-zero
    (value * factor).round() / factor
}

/// Local wall-clock `(hour, minute, second)` of an epoch second.
pub fn time_components(timestamp_s: i64, tz_offset_minutes: i32) -> (u32, u32, u32) {
    let local = timestamp_s + i64::from(tz_offset_minutes) * 60;
    let sod = local.rem_euclid(86_400) as u32;
    (sod / 3600, (sod / 60) % 60, sod % 60)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviationMode {
    /// Raw axis values and raw magnitude.
    None,
    /// Only the magnitude becomes `|m - 1|`.
    Magnitude,
    /// All four accelerometer features become `|v - 1|`.
    #[default]
    All,
}

impl FromStr for DeviationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "magnitude" => Ok(Self::Magnitude),
            "all" => Ok(Self::All),
            other => Err(Error::InvalidParameter(format!("unknown deviation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    #[default]
    Bpm,
    Zscore,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Bpm => "bpm",
            TargetKind::Zscore => "zscore",
        })
    }
}

/// How frames are turned into feature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub deviation_mode: DeviationMode,
    pub tz_offset_minutes: i32,
}

impl FeatureOptions {
    pub fn validate(&self) -> Result<()> {
        if self.tz_offset_minutes.abs() > MAX_TZ_OFFSET_MINUTES {
            return Err(Error::InvalidParameter(format!(
                "tz offset {} outside [-{MAX_TZ_OFFSET_MINUTES}, {MAX_TZ_OFFSET_MINUTES}] minutes",
                self.tz_offset_minutes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub magnitude: f64,
    pub lat2: f64,
    pub lon2: f64,
    pub lat1: f64,
    pub lon1: f64,
    pub lat0: f64,
    pub lon0: f64,
    pub hour: u32,
    pub minute: u32,
    pub second: u32,
}

impl FeatureRow {
    /// Features of a frame with accelerometer and GPS present; heart rate is
    /// not consulted.
    pub fn from_frame(frame: &AlignedFrame, opts: &FeatureOptions) -> Option<Self> {
        let a = frame.accel?;
        let g = frame.gps?;
        let magnitude = accel_magnitude(a.x, a.y, a.z);
        let (x, y, z, magnitude) = match opts.deviation_mode {
            DeviationMode::None => (a.x, a.y, a.z, magnitude),
            DeviationMode::Magnitude => (a.x, a.y, a.z, deviation_transform(magnitude)),
            DeviationMode::All => (
                deviation_transform(a.x),
                deviation_transform(a.y),
                deviation_transform(a.z),
                deviation_transform(magnitude),
            ),
        };
        // successive roundings: 2 decimals, then 1, then 0
        let lat2 = round_coordinate(g.lat, 2);
        let lon2 = round_coordinate(g.lon, 2);
        let lat1 = round_coordinate(lat2, 1);
        let lon1 = round_coordinate(lon2, 1);
        let (hour, minute, second) = time_components(frame.timestamp_s, opts.tz_offset_minutes);
        Some(Self {
            x,
            y,
            z,
            magnitude,
            lat2,
            lon2,
            lat1,
            lon1,
            lat0: round_coordinate(lat1, 0),
            lon0: round_coordinate(lon1, 0),
            hour,
            minute,
            second,
        })
    }

    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.x,
            self.y,
            self.z,
            self.magnitude,
            self.lat2,
            self.lon2,
            self.lat1,
            self.lon1,
            self.lat0,
            self.lon0,
            f64::from(self.hour),
            f64::from(self.minute),
            f64::from(self.second),
        ]
    }
}

/// Per-participant heart-rate standardization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ZScoreParams<T> {
    pub mean: T,
    pub std: T,
}

/// Population mean and standard deviation of a heart-rate series.
pub fn zscore_fit<T: Scalar>(bpm: &[T]) -> Result<ZScoreParams<T>> {
    if bpm.len() < 2 {
        return Err(Error::Data(format!(
            "z-score needs at least 2 values, got {}",
            bpm.len()
        )));
    }
    let mean = crate::scalar::mean(bpm);
    let std = crate::scalar::population_variance(bpm).sqrt();
    if !(std >= T::of(1e-9)) {
        return Err(Error::Data(format!(
            "heart rate is constant (std {std:e}); z-score undefined"
        )));
    }
    Ok(ZScoreParams { mean, std })
}

impl<T: Scalar> ZScoreParams<T> {
    pub fn apply(&self, bpm: T) -> T {
        (bpm - self.mean) / self.std
    }

    pub fn invert(&self, z: T) -> T {
        z * self.std + self.mean
    }
}

/// Feature rows with their targets, one entry per complete-case frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureRow>,
    pub target: Vec<f64>,
    pub participant_ids: Vec<Arc<str>>,
    /// Grid second of each row.
    pub timestamps: Vec<i64>,
    pub target_kind: TargetKind,
}

impl FeatureMatrix {
    pub fn empty(target_kind: TargetKind) -> Self {
        Self {
            rows: Vec::new(),
            target: Vec::new(),
            participant_ids: Vec::new(),
            timestamps: Vec::new(),
            target_kind,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        rows_to_matrix(&self.rows)
    }

    pub fn targets<T: Scalar>(&self) -> Vec<T> {
        self.target.iter().map(|&v| T::of(v)).collect()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            participant_ids: indices.iter().map(|&i| self.participant_ids[i].clone()).collect(),
            timestamps: indices.iter().map(|&i| self.timestamps[i]).collect(),
            target_kind: self.target_kind,
        }
    }

    /// Appends another matrix with the same target kind.
    pub fn extend(&mut self, other: FeatureMatrix) -> Result<()> {
        if other.target_kind != self.target_kind {
            return Err(Error::Data("cannot mix bpm and zscore targets".into()));
        }
        self.rows.extend(other.rows);
        self.target.extend(other.target);
        self.participant_ids.extend(other.participant_ids);
        self.timestamps.extend(other.timestamps);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(FEATURE_CSV_HEADER.split(','))?;
        for i in 0..self.len() {
            let mut rec = vec![self.participant_ids[i].to_string()];
            rec.extend(self.rows[i].to_array().iter().map(|v| v.to_string()));
            rec.push(self.target[i].to_string());
            rec.push(self.target_kind.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<feature writer>", e))?;
        Ok(())
    }
}

pub fn rows_to_matrix<T: Scalar>(rows: &[FeatureRow]) -> Matrix<T> {
    let data = rows
        .iter()
        .flat_map(|r| r.to_array())
        .map(T::of)
        .collect();
    Matrix::from_vec(rows.len(), N_FEATURES, data).expect("fixed-width rows")
}

/// Builds the complete-case feature matrix of one participant.
///
/// With `TargetKind::Zscore` the heart rate is standardized with `zscore`,
/// which must then be supplied.
pub fn build_feature_matrix(
    stream: &ParticipantStream,
    opts: &FeatureOptions,
    target_kind: TargetKind,
    zscore: Option<&ZScoreParams<f64>>,
) -> Result<FeatureMatrix> {
    opts.validate()?;
    let z = match (target_kind, zscore) {
        (TargetKind::Zscore, None) => {
            return Err(Error::InvalidParameter(
                "z-score target requires z-score parameters".into(),
            ))
        }
        (TargetKind::Zscore, Some(p)) => Some(p),
        (TargetKind::Bpm, _) => None,
    };
    let pid: Arc<str> = Arc::from(stream.participant_id.as_str());
    let mut out = FeatureMatrix::empty(target_kind);
    for frame in &stream.frames {
        let (Some(bpm), Some(row)) = (frame.hr, FeatureRow::from_frame(frame, opts)) else {
            continue;
        };
        out.rows.push(row);
        out.target.push(z.map_or(bpm, |p| p.apply(bpm)));
        out.participant_ids.push(pid.clone());
        out.timestamps.push(frame.timestamp_s);
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "participant {}: no frame has accelerometer, GPS and heart rate together",
            stream.participant_id
        )));
    }
    Ok(out)
}
