//! Synthetic participants with known structure, and heart-rate gap injection.
//!
//! Heart rate is a per-participant baseline, plus a daily cycle with its
//! trough at 04:00 local time, plus a gain times the exponentially smoothed
//! accelerometer deviation, plus Gaussian noise. The phone rests flat
//! (magnitude exactly 1 g) except during activity bouts, and GPS sits on one
//! of a few fixed anchors chosen by time of day.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::cv::derive_seed;
use crate::ingest::{write_channel_csv, Channel, GapMask, GeoPoint, SensorRecord};

const DAY: i64 = 86_400;
pub const HR_FLOOR: f64 = 30.0;
pub const HR_CEIL: f64 = 220.0;
/// Time constant of the heart-rate response to movement, in seconds.
pub const ACTIVITY_TAU_S: f64 = 60.0;
const CAMPUS: GeoPoint = GeoPoint {
    lat: 38.0336,
    lon: -78.5080,
};
const DOWNTOWN: GeoPoint = GeoPoint {
    lat: 38.0293,
    lon: -78.4767,
};
/// Shared residences; several participants live at each, so location alone
/// does not identify a participant.
const RESIDENCES: [GeoPoint; 3] = [
    GeoPoint {
        lat: 38.0360,
        lon: -78.5135,
    },
    GeoPoint {
        lat: 38.0441,
        lon: -78.5006,
    },
    GeoPoint {
        lat: 38.0275,
        lon: -78.5231,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_participants: usize,
    pub duration_s: i64,
    /// UTC epoch second of the first sample.
    pub start_s: i64,
    /// Baselines are spread evenly across this interval.
    pub hr_baseline_range: (f64, f64),
    pub circadian_amplitude: f64,
    /// Expected activity bouts per day.
    pub activity_rate: f64,
    /// Heart-rate increase per g of smoothed accelerometer deviation.
    pub activity_hr_gain: f64,
    pub noise_std: f64,
    /// Scale each participant's amplitude and gain by a factor drawn from
    /// `[1 - spread, 1 + spread]`.
    pub response_spread: f64,
    pub tz_offset_minutes: i32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_participants: 12,
            duration_s: 7 * DAY,
            // 2019-03-04 00:00 UTC, a Monday
            start_s: 1_551_657_600,
            hr_baseline_range: (55.0, 85.0),
            circadian_amplitude: 10.0,
            activity_rate: 8.0,
            activity_hr_gain: 40.0,
            noise_std: 3.0,
            response_spread: 0.6,
            tz_offset_minutes: 0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let (lo, hi) = self.hr_baseline_range;
        if self.n_participants == 0 {
            return bad("need at least one participant".into());
        }
        if self.duration_s < 3600 {
            return bad(format!("duration {} s is shorter than an hour", self.duration_s));
        }
        if !(40.0..=100.0).contains(&lo) || !(40.0..=100.0).contains(&hi) || lo > hi {
            return bad(format!("baseline range ({lo}, {hi}) must lie within [40, 100]"));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("circadian_amplitude", self.circadian_amplitude),
            ("activity_rate", self.activity_rate),
            ("activity_hr_gain", self.activity_hr_gain),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.response_spread) {
            return bad(format!("response_spread must be in [0, 1), got {}", self.response_spread));
        }
        crate::features::FeatureOptions {
            tz_offset_minutes: self.tz_offset_minutes,
            ..Default::default()
        }
        .validate()
    }

    /// Baseline heart rate of participant `index`.
    pub fn baseline_of(&self, index: usize) -> f64 {
        let (lo, hi) = self.hr_baseline_range;
        if self.n_participants < 2 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * index as f64 / (self.n_participants - 1) as f64
        }
    }
}

/// Daily cycle in bpm: `-amplitude` at 04:00 local, `+amplitude` at 16:00.
pub fn circadian(local_hour: f64, amplitude: f64) -> f64 {
    -amplitude * (2.0 * PI * (local_hour - 4.0) / 24.0).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParticipant {
    pub participant_id: String,
    pub accel: Vec<SensorRecord>,
    pub gps: Vec<SensorRecord>,
    pub hr: Vec<SensorRecord>,
    /// Heart-rate samples that hit the `[HR_FLOOR, HR_CEIL]` clamp.
    pub clamp_events: usize,
}

pub fn participant_id(index: usize) -> String {
    format!("P{:02}", index + 1)
}

fn local_seconds(t: i64, tz_offset_minutes: i32) -> i64 {
    t + i64::from(tz_offset_minutes) * 60
}

/// Axis-aligned unit vectors: resting orientations with magnitude exactly 1.
const REST_ORIENTATIONS: [[f64; 3]; 6] = [
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
];

struct Bout {
    start: i64,
    end: i64,
    intensity: f64,
    direction: [f64; 3],
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: [f64; 3] = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Activity bouts: a Poisson number per local day, starting between 07:00
/// and 22:00, lasting 5 to 40 minutes.
fn draw_bouts(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Bout> {
    let mut bouts = Vec::new();
    if cfg.activity_rate == 0.0 {
        return bouts;
    }
    let poisson = Poisson::new(cfg.activity_rate).expect("positive rate");
    let end = cfg.start_s + cfg.duration_s;
    let first_day = local_seconds(cfg.start_s, cfg.tz_offset_minutes).div_euclid(DAY);
    let last_day = local_seconds(end, cfg.tz_offset_minutes).div_euclid(DAY);
    for day in first_day..=last_day {
        let day_start_utc = day * DAY - i64::from(cfg.tz_offset_minutes) * 60;
        let n = poisson.sample(rng) as usize;
        for _ in 0..n {
            let start = day_start_utc + rng.random_range(7 * 3600..22 * 3600);
            let len = rng.random_range(300..2400);
            bouts.push(Bout {
                start,
                end: start + len,
                intensity: rng.random_range(0.15..0.8),
                direction: random_direction(rng),
            });
        }
    }
    bouts.sort_by_key(|b| b.start);
    bouts
}

/// Where the phone is on each 15 s GPS tick: home overnight, campus on
/// weekday working hours, downtown around midday at weekends.
struct Schedule {
    home: GeoPoint,
    /// Per local day: (leave, return) local hours.
    days: Vec<(i64, f64, f64)>,
}

impl Schedule {
    fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let home = RESIDENCES[rng.random_range(0..RESIDENCES.len())];
        let first_day = local_seconds(cfg.start_s, cfg.tz_offset_minutes).div_euclid(DAY);
        let last_day = local_seconds(cfg.start_s + cfg.duration_s, cfg.tz_offset_minutes).div_euclid(DAY);
        let days = (first_day..=last_day)
            .map(|d| {
                // 1970-01-01 was a Thursday; weekday 0 is Monday.
                let weekend = (d + 3).rem_euclid(7) >= 5;
                if weekend {
                    let leave = 11.0 + rng.random_range(0.0..2.0);
                    (d, leave, leave + rng.random_range(1.0..3.0))
                } else {
                    (d, 8.0 + rng.random_range(0.0..1.5), 16.5 + rng.random_range(0.0..3.0))
                }
            })
            .collect();
        Self { home, days }
    }

    fn at(&self, local_s: i64) -> GeoPoint {
        let day = local_s.div_euclid(DAY);
        let hour = local_s.rem_euclid(DAY) as f64 / 3600.0;
        let Some(&(d, leave, back)) = self.days.iter().find(|(d, _, _)| *d == day) else {
            return self.home;
        };
        if hour < leave || hour >= back {
            self.home
        } else if (d + 3).rem_euclid(7) >= 5 {
            DOWNTOWN
        } else {
            CAMPUS
        }
    }
}

/// Generates one participant. Output depends only on `(cfg, index)`.
pub fn generate_participant(cfg: &SynthConfig, index: usize) -> Result<SyntheticParticipant> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let factor = |rng: &mut ChaCha8Rng| {
        if cfg.response_spread > 0.0 {
            rng.random_range(1.0 - cfg.response_spread..=1.0 + cfg.response_spread)
        } else {
            1.0
        }
    };
    let amplitude = cfg.circadian_amplitude * factor(&mut rng);
    let gain = cfg.activity_hr_gain * factor(&mut rng);
    let baseline = cfg.baseline_of(index);
    let schedule = Schedule::draw(cfg, &mut rng);
    let bouts = draw_bouts(cfg, &mut rng);
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::InvalidParameter(format!("noise: {e}")))?;

    let n = cfg.duration_s as usize;
    let mut accel = Vec::with_capacity(n);
    let mut hr = Vec::with_capacity(n);
    let mut gps = Vec::with_capacity(n / 15 + 1);
    let mut clamp_events = 0;
    let mut smoothed = 0.0;
    let mut rest = REST_ORIENTATIONS[0];
    let mut bout_idx = 0;
    let alpha = 1.0 / ACTIVITY_TAU_S;

    for k in 0..cfg.duration_s {
        let t = cfg.start_s + k;
        let local = local_seconds(t, cfg.tz_offset_minutes);
        while bout_idx < bouts.len() && bouts[bout_idx].end <= t {
            bout_idx += 1;
            rest = REST_ORIENTATIONS[rng.random_range(0..REST_ORIENTATIONS.len())];
        }
        let active = bouts[bout_idx..]
            .iter()
            .take_while(|b| b.start <= t)
            .find(|b| t < b.end);
        let (vec, deviation) = match active {
            Some(b) => {
                let dev = b.intensity * rng.random_range(0.75..1.25);
                let m = 1.0 + dev;
                ([b.direction[0] * m, b.direction[1] * m, b.direction[2] * m], dev)
            }
            None => (rest, 0.0),
        };
        smoothed += alpha * (deviation - smoothed);

        let hour = local.rem_euclid(DAY) as f64 / 3600.0;
        let mut bpm = baseline + circadian(hour, amplitude) + gain * smoothed;
        if cfg.noise_std > 0.0 {
            bpm += noise.sample(&mut rng);
        }
        if !(HR_FLOOR..=HR_CEIL).contains(&bpm) {
            clamp_events += 1;
            bpm = bpm.clamp(HR_FLOOR, HR_CEIL);
        }

        let ms = t * 1000;
        accel.push(SensorRecord::accel(ms, vec[0], vec[1], vec[2])?);
        hr.push(SensorRecord::heart_rate(ms, bpm)?);
        if k % 15 == 0 {
            let p = schedule.at(local);
            gps.push(SensorRecord::gps(ms, p.lat, p.lon)?);
        }
    }

    Ok(SyntheticParticipant {
        participant_id: participant_id(index),
        accel,
        gps,
        hr,
        clamp_events,
    })
}

/// Generates every participant of the cohort in parallel, in index order.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<Vec<SyntheticParticipant>> {
    cfg.validate()?;
    (0..cfg.n_participants)
        .into_par_iter()
        .map(|i| generate_participant(cfg, i))
        .collect()
}

/// Writes `accel.csv`, `gps.csv` and `hr.csv` of a participant into `dir`.
pub fn write_participant_dir(dir: impl AsRef<Path>, p: &SyntheticParticipant) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (channel, records) in [
        (Channel::Accel, &p.accel),
        (Channel::Gps, &p.gps),
        (Channel::Hr, &p.hr),
    ] {
        let path = dir.join(channel.file_name());
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_channel_csv(BufWriter::new(file), channel, records)?;
    }
    Ok(())
}

/// A way heart-rate samples go missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GapPattern {
    /// Each sample independently dropped with probability `p`.
    RandomDropout { p: f64 },
    /// Watch off from `start_hour` local time for `hours` every night.
    NightlyNonwear { start_hour: f64, hours: f64 },
    /// Battery dies at the start of local day `depletion_day` (the first
    /// sample's day is 0) and the stream never resumes.
    Battery { depletion_day: u32 },
}

impl GapPattern {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GapPattern::RandomDropout { p } => (0.0..=1.0).contains(&p),
            GapPattern::NightlyNonwear { start_hour, hours } => {
                (0.0..24.0).contains(&start_hour) && hours > 0.0 && hours <= 24.0
            }
            GapPattern::Battery { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid gap pattern {self}")))
        }
    }
}

impl fmt::Display for GapPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapPattern::RandomDropout { p } => write!(f, "dropout:{p}"),
            GapPattern::NightlyNonwear { start_hour, hours } => write!(f, "nightly:{start_hour}:{hours}"),
            GapPattern::Battery { depletion_day } => write!(f, "battery:{depletion_day}"),
        }
    }
}

/// Parses `dropout:P`, `nightly:START_HOUR:HOURS` or `battery:DAY`.
impl FromStr for GapPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number `{v}` in gap pattern `{s}`")))
        };
        let pattern = match parts.as_slice() {
            ["dropout", p] => GapPattern::RandomDropout { p: num(p)? },
            ["nightly", start, hours] => GapPattern::NightlyNonwear {
                start_hour: num(start)?,
                hours: num(hours)?,
            },
            ["battery", day] => GapPattern::Battery {
                depletion_day: day.trim().parse().map_err(|_| {
                    Error::InvalidParameter(format!("bad day `{day}` in gap pattern `{s}`"))
                })?,
            },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown gap pattern `{s}` (expected dropout:P, nightly:START:HOURS or battery:DAY)"
                )))
            }
        };
        pattern.validate()?;
        Ok(pattern)
    }
}

/// Deletes heart-rate samples according to `patterns`; a sample goes if any
/// pattern removes it. Returns the kept samples and the deleted grid seconds.
pub fn inject_gaps(
    hr: &[SensorRecord],
    patterns: &[GapPattern],
    tz_offset_minutes: i32,
    seed: u64,
) -> Result<(Vec<SensorRecord>, GapMask)> {
    if hr.is_empty() {
        return Err(Error::Data("no heart-rate samples to thin".into()));
    }
    for p in patterns {
        p.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_day = local_seconds(hr[0].grid_second(), tz_offset_minutes).div_euclid(DAY);
    let mut kept = Vec::with_capacity(hr.len());
    let mut deleted = Vec::new();
    for rec in hr {
        let local = local_seconds(rec.grid_second(), tz_offset_minutes);
        let mut drop = false;
        for p in patterns {
            drop |= match *p {
                // draw for every sample so the stream stays aligned
                GapPattern::RandomDropout { p } => rng.random::<f64>() < p,
                GapPattern::NightlyNonwear { start_hour, hours } => {
                    let hour = local.rem_euclid(DAY) as f64 / 3600.0;
                    (hour - start_hour).rem_euclid(24.0) < hours
                }
                GapPattern::Battery { depletion_day } => {
                    local.div_euclid(DAY) - first_day >= i64::from(depletion_day)
                }
            };
        }
        if drop {
            deleted.push(rec.grid_second());
        } else {
            kept.push(*rec);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidParameter(
            "gap patterns would delete every heart-rate sample".into(),
        ));
    }
    Ok((kept, GapMask::from_seconds(&deleted)))
}
