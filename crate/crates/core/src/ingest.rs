//! Raw channel parsing, 1 Hz alignment and heart-rate gap detection.
//!
//! Raw input is one CSV per channel:
//!
//! | channel | header               |
//! |---------|----------------------|
//! | accel   | `timestamp_ms,x,y,z` |
//! | gps     | `timestamp_ms,lat,lon` |
//! | hr      | `timestamp_ms,bpm`   |
//!
//! Alignment maps accelerometer and heart-rate samples to the nearest grid
//! second (within 0.5 s, ties to the earlier sample) and carries each GPS fix
//! forward for up to [`GPS_HOLD_SECONDS`].

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ACCEL_HEADER: &str = "timestamp_ms,x,y,z";
pub const GPS_HEADER: &str = "timestamp_ms,lat,lon";
pub const HR_HEADER: &str = "timestamp_ms,bpm";
pub const ALIGNED_HEADER: &str = "timestamp_s,participant_id,x,y,z,lat,lon,bpm";

pub const MIN_BPM: f64 = 20.0;
pub const MAX_BPM: f64 = 250.0;

/// Seconds a GPS fix stays valid after the grid second it was taken in.
pub const GPS_HOLD_SECONDS: i64 = 60;

/// Nearest-sample window for 1 Hz channels, in milliseconds.
const NEAREST_WINDOW_MS: i64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Accel,
    Gps,
    Hr,
}

impl Channel {
    pub fn header(self) -> &'static str {
        match self {
            Channel::Accel => ACCEL_HEADER,
            Channel::Gps => GPS_HEADER,
            Channel::Hr => HR_HEADER,
        }
    }

    /// File name used for this channel inside a participant directory.
    pub fn file_name(self) -> &'static str {
        match self {
            Channel::Accel => "accel.csv",
            Channel::Gps => "gps.csv",
            Channel::Hr => "hr.csv",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Accel => "accel",
            Channel::Gps => "gps",
            Channel::Hr => "hr",
        })
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accel" => Ok(Channel::Accel),
            "gps" => Ok(Channel::Gps),
            "hr" => Ok(Channel::Hr),
            other => Err(Error::InvalidParameter(format!("unknown channel `{other}`"))),
        }
    }
}

/// Acceleration in units of g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accel {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Decimal-degree position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Accel(Accel),
    Gps(GeoPoint),
    HeartRate(f64),
}

/// One timestamped reading from one channel. Construct through the checked
/// constructors so the range invariants hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    /// UTC epoch milliseconds.
    pub timestamp_ms: i64,
    pub payload: Payload,
}

impl SensorRecord {
    pub fn accel(timestamp_ms: i64, x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::Data("acceleration components must be finite".into()));
        }
        Ok(Self {
            timestamp_ms,
            payload: Payload::Accel(Accel { x, y, z }),
        })
    }

    pub fn gps(timestamp_ms: i64, lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Data(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Data(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(Self {
            timestamp_ms,
            payload: Payload::Gps(GeoPoint { lat, lon }),
        })
    }

    pub fn heart_rate(timestamp_ms: i64, bpm: f64) -> Result<Self> {
        if !(bpm.is_finite() && (MIN_BPM..=MAX_BPM).contains(&bpm)) {
            return Err(Error::Data(format!("bpm {bpm} outside [{MIN_BPM}, {MAX_BPM}]")));
        }
        Ok(Self {
            timestamp_ms,
            payload: Payload::HeartRate(bpm),
        })
    }

    pub fn channel(&self) -> Channel {
        match self.payload {
            Payload::Accel(_) => Channel::Accel,
            Payload::Gps(_) => Channel::Gps,
            Payload::HeartRate(_) => Channel::Hr,
        }
    }

    /// Grid second this sample is nearest to; exact half-seconds go to the
    /// earlier second.
    pub fn grid_second(&self) -> i64 {
        (self.timestamp_ms + NEAREST_WINDOW_MS - 1).div_euclid(1000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
}

/// Result of parsing one channel file.
#[derive(Debug, Clone, Default)]
pub struct ParsedChannel {
    pub records: Vec<SensorRecord>,
    pub rejected: Vec<RejectedRow>,
    pub total_rows: usize,
}

/// Parses one raw channel CSV file.
///
/// Rows that fail to parse or violate a range rule are counted in
/// [`ParsedChannel::rejected`]. More than half the rows rejected is an error.
pub fn parse_channel_file(path: impl AsRef<Path>, channel: Channel) -> Result<ParsedChannel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_channel(file, channel, path)
}

pub fn parse_channel<R: Read>(reader: R, channel: Channel, source: &Path) -> Result<ParsedChannel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != channel.header() {
        return Err(Error::HeaderMismatch {
            path: source.to_path_buf(),
            expected: channel.header().to_string(),
            found,
        });
    }

    let mut out = ParsedChannel::default();
    for row in rdr.records() {
        out.total_rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.rejected.push(RejectedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, channel) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejected.push(RejectedRow { line, reason }),
        }
    }

    if out.rejected.len() * 2 > out.total_rows {
        return Err(Error::TooManyMalformed {
            path: source.to_path_buf(),
            rejected: out.rejected.len(),
            total: out.total_rows,
        });
    }
    out.records.sort_by_key(|r| r.timestamp_ms);
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, channel: Channel) -> std::result::Result<SensorRecord, String> {
    let expected = channel.header().split(',').count();
    if row.len() != expected {
        return Err(format!("expected {expected} fields, found {}", row.len()));
    }
    let ts: i64 = row[0]
        .parse()
        .map_err(|_| format!("bad timestamp `{}`", &row[0]))?;
    let num = |i: usize| -> std::result::Result<f64, String> {
        row[i]
            .parse::<f64>()
            .map_err(|_| format!("bad number `{}`", &row[i]))
    };
    let rec = match channel {
        Channel::Accel => SensorRecord::accel(ts, num(1)?, num(2)?, num(3)?),
        Channel::Gps => SensorRecord::gps(ts, num(1)?, num(2)?),
        Channel::Hr => SensorRecord::heart_rate(ts, num(1)?),
    };
    rec.map_err(|e| e.to_string())
}

/// Writes records of one channel in the raw CSV schema.
pub fn write_channel_csv<W: Write>(writer: W, channel: Channel, records: &[SensorRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(channel.header().split(','))?;
    for rec in records {
        let ts = rec.timestamp_ms.to_string();
        match (channel, rec.payload) {
            (Channel::Accel, Payload::Accel(a)) => {
                w.write_record([ts, a.x.to_string(), a.y.to_string(), a.z.to_string()])?
            }
            (Channel::Gps, Payload::Gps(g)) => w.write_record([ts, g.lat.to_string(), g.lon.to_string()])?,
            (Channel::Hr, Payload::HeartRate(bpm)) => w.write_record([ts, bpm.to_string()])?,
            (_, _) => {
                return Err(Error::Data(format!(
                    "{} record in {channel} stream",
                    rec.channel()
                )))
            }
        }
    }
    w.flush().map_err(|e| Error::io("<channel writer>", e))?;
    Ok(())
}

/// Raw streams of one participant.
#[derive(Debug, Clone, Default)]
pub struct RawStreams {
    pub accel: Vec<SensorRecord>,
    pub gps: Vec<SensorRecord>,
    pub hr: Vec<SensorRecord>,
    /// Rejected rows per channel, for reporting.
    pub rejected: Vec<(Channel, RejectedRow)>,
}

/// Loads `accel.csv`, `gps.csv` and `hr.csv` from a participant directory.
pub fn load_raw_dir(dir: impl AsRef<Path>) -> Result<RawStreams> {
    let dir = dir.as_ref();
    let mut out = RawStreams::default();
    for channel in [Channel::Accel, Channel::Gps, Channel::Hr] {
        let path = dir.join(channel.file_name());
        if !path.exists() {
            return Err(Error::Data(format!("missing {channel} channel: {}", path.display())));
        }
        let parsed = parse_channel_file(&path, channel)?;
        out.rejected
            .extend(parsed.rejected.into_iter().map(|r| (channel, r)));
        match channel {
            Channel::Accel => out.accel = parsed.records,
            Channel::Gps => out.gps = parsed.records,
            Channel::Hr => out.hr = parsed.records,
        }
    }
    Ok(out)
}

/// One second of the unified 1 Hz grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedFrame {
    /// UTC epoch seconds.
    pub timestamp_s: i64,
    pub accel: Option<Accel>,
    pub gps: Option<GeoPoint>,
    pub hr: Option<f64>,
}

impl AlignedFrame {
    pub fn empty(timestamp_s: i64) -> Self {
        Self {
            timestamp_s,
            accel: None,
            gps: None,
            hr: None,
        }
    }

    /// Accelerometer, GPS and heart rate all present.
    pub fn is_complete(&self) -> bool {
        self.accel.is_some() && self.gps.is_some() && self.hr.is_some()
    }

    /// Phone-side features present (heart rate may be missing).
    pub fn has_phone_features(&self) -> bool {
        self.accel.is_some() && self.gps.is_some()
    }
}

/// Aligned 1 Hz frames of a single participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantStream {
    pub participant_id: String,
    pub frames: Vec<AlignedFrame>,
}

impl ParticipantStream {
    pub fn first_second(&self) -> Option<i64> {
        self.frames.first().map(|f| f.timestamp_s)
    }

    pub fn last_second(&self) -> Option<i64> {
        self.frames.last().map(|f| f.timestamp_s)
    }

    /// Checks the consecutive 1 Hz invariant.
    pub fn validate_grid(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if w[1].timestamp_s != w[0].timestamp_s + 1 {
                return Err(Error::Data(format!(
                    "participant {}: frames {} and {} are not consecutive seconds",
                    self.participant_id, w[0].timestamp_s, w[1].timestamp_s
                )));
            }
        }
        Ok(())
    }
}

/// Aligns the three channels of one participant onto a 1 Hz grid spanning
/// the earliest to the latest sample across all channels.
pub fn align_streams(
    accel: &[SensorRecord],
    gps: &[SensorRecord],
    hr: &[SensorRecord],
    participant_id: &str,
) -> Result<ParticipantStream> {
    let all = accel.iter().chain(gps).chain(hr);
    let first = all.clone().map(SensorRecord::grid_second).min();
    let last = all.map(SensorRecord::grid_second).max();
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Data("all channels are empty".into())),
    };
    for (name, recs) in [("accel", accel), ("gps", gps), ("hr", hr)] {
        if recs.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
            return Err(Error::Data(format!("{name} records are not sorted by timestamp")));
        }
    }

    let mut frames: Vec<AlignedFrame> = (first..=last).map(AlignedFrame::empty).collect();

    for (frame, rec) in frames.iter_mut().zip(nearest_per_second(accel, first, last)) {
        if let Some(Payload::Accel(a)) = rec.map(|r| r.payload) {
            frame.accel = Some(a);
        }
    }
    for (frame, rec) in frames.iter_mut().zip(nearest_per_second(hr, first, last)) {
        if let Some(Payload::HeartRate(bpm)) = rec.map(|r| r.payload) {
            frame.hr = Some(bpm);
        }
    }

    // GPS: last fix at or before the frame, valid for GPS_HOLD_SECONDS.
    let mut next = 0;
    let mut current: Option<(i64, GeoPoint)> = None;
    for frame in frames.iter_mut() {
        while next < gps.len() && gps[next].grid_second() <= frame.timestamp_s {
            let sec = gps[next].grid_second();
            if let Payload::Gps(p) = gps[next].payload {
                // same-second duplicates keep the earlier fix
                if current.map_or(true, |(s, _)| s != sec) {
                    current = Some((sec, p));
                }
            }
            next += 1;
        }
        if let Some((sec, p)) = current {
            if frame.timestamp_s - sec <= GPS_HOLD_SECONDS {
                frame.gps = Some(p);
            }
        }
    }

    Ok(ParticipantStream {
        participant_id: participant_id.to_string(),
        frames,
    })
}

/// For each grid second in `first..=last`, the sample nearest to it within
/// half a second (earlier sample on ties).
fn nearest_per_second(records: &[SensorRecord], first: i64, last: i64) -> Vec<Option<&SensorRecord>> {
    let mut out = Vec::with_capacity((last - first + 1) as usize);
    let mut lo = 0;
    for sec in first..=last {
        let center = sec * 1000;
        while lo < records.len() && records[lo].timestamp_ms < center - NEAREST_WINDOW_MS {
            lo += 1;
        }
        let mut best: Option<(&SensorRecord, i64)> = None;
        for rec in records[lo..]
            .iter()
            .take_while(|r| r.timestamp_ms <= center + NEAREST_WINDOW_MS)
        {
            let dist = (rec.timestamp_ms - center).abs();
            if best.map_or(true, |(_, d)| dist < d) {
                best = Some((rec, dist));
            }
        }
        out.push(best.map(|(r, _)| r));
    }
    out
}

/// Maximal runs of grid seconds with no heart rate, as inclusive
/// `(start, end)` second pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapMask {
    pub intervals: Vec<(i64, i64)>,
}

impl GapMask {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Total number of seconds covered.
    pub fn seconds(&self) -> usize {
        self.intervals.iter().map(|(a, b)| (b - a + 1) as usize).sum()
    }

    pub fn contains(&self, second: i64) -> bool {
        let idx = self.intervals.partition_point(|&(_, end)| end < second);
        self.intervals
            .get(idx)
            .is_some_and(|&(start, _)| start <= second)
    }

    /// Builds the mask of a sorted, deduplicated list of seconds.
    pub fn from_seconds(seconds: &[i64]) -> Self {
        let mut intervals: Vec<(i64, i64)> = Vec::new();
        for &s in seconds {
            match intervals.last_mut() {
                Some((_, end)) if *end + 1 == s => *end = s,
                Some((_, end)) if *end >= s => {}
                _ => intervals.push((s, s)),
            }
        }
        Self { intervals }
    }
}

pub fn detect_gaps(frames: &[AlignedFrame]) -> GapMask {
    let mut intervals = Vec::new();
    let mut open: Option<i64> = None;
    let mut prev = None;
    for f in frames {
        match (f.hr.is_none(), open) {
            (true, None) => open = Some(f.timestamp_s),
            (false, Some(start)) => {
                intervals.push((start, prev.unwrap_or(start)));
                open = None;
            }
            _ => {}
        }
        prev = Some(f.timestamp_s);
    }
    if let (Some(start), Some(end)) = (open, prev) {
        intervals.push((start, end));
    }
    GapMask { intervals }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes aligned frames in the canonical aligned CSV schema.
pub fn write_aligned_csv<W: Write>(writer: W, streams: &[ParticipantStream]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ALIGNED_HEADER.split(','))?;
    for s in streams {
        for f in &s.frames {
            w.write_record([
                f.timestamp_s.to_string(),
                s.participant_id.clone(),
                opt_cell(f.accel.map(|a| a.x)),
                opt_cell(f.accel.map(|a| a.y)),
                opt_cell(f.accel.map(|a| a.z)),
                opt_cell(f.gps.map(|g| g.lat)),
                opt_cell(f.gps.map(|g| g.lon)),
                opt_cell(f.hr),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<aligned writer>", e))?;
    Ok(())
}

pub fn write_aligned_file(path: impl AsRef<Path>, streams: &[ParticipantStream]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_aligned_csv(std::io::BufWriter::new(file), streams)
}

/// Reads the aligned CSV schema. Rows are grouped by participant in order of
/// first appearance; each participant's frames must form a 1 Hz grid.
pub fn read_aligned_csv<R: Read>(reader: R) -> Result<Vec<ParticipantStream>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let found = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != ALIGNED_HEADER {
        return Err(Error::HeaderMismatch {
            path: "<aligned csv>".into(),
            expected: ALIGNED_HEADER.into(),
            found,
        });
    }
    let mut streams: Vec<ParticipantStream> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Data(format!("aligned csv line {line}: bad {what}"));
        let ts: i64 = row[0].parse().map_err(|_| bad("timestamp"))?;
        let cell = |i: usize| -> Result<Option<f64>> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                row[i].parse().map(Some).map_err(|_| bad("number"))
            }
        };
        let accel = match (cell(2)?, cell(3)?, cell(4)?) {
            (Some(x), Some(y), Some(z)) => Some(Accel { x, y, z }),
            (None, None, None) => None,
            _ => return Err(bad("partial acceleration triple")),
        };
        let gps = match (cell(5)?, cell(6)?) {
            (Some(lat), Some(lon)) => Some(GeoPoint { lat, lon }),
            (None, None) => None,
            _ => return Err(bad("partial GPS pair")),
        };
        let frame = AlignedFrame {
            timestamp_s: ts,
            accel,
            gps,
            hr: cell(7)?,
        };
        let pid = &row[1];
        match streams.iter_mut().find(|s| s.participant_id == pid) {
            Some(s) => s.frames.push(frame),
            None => streams.push(ParticipantStream {
                participant_id: pid.to_string(),
                frames: vec![frame],
            }),
        }
    }
    for s in &streams {
        s.validate_grid()?;
    }
    Ok(streams)
}

pub fn read_aligned_file(path: impl AsRef<Path>) -> Result<Vec<ParticipantStream>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_aligned_csv(std::io::BufReader::new(file))
}
