//! Moving-average interpolation baseline: every second of a block is
//! predicted by the mean heart rate observed in the block before it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AlignedFrame;

pub const DEFAULT_WINDOW_SECONDS: u64 = 1800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub window_s: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselinePredictions {
    /// `(timestamp_s, bpm)` for every covered second, in grid order.
    pub predictions: Vec<(i64, f64)>,
    /// Seconds whose preceding block had no observed heart rate.
    pub uncovered_seconds: usize,
}

impl BaselinePredictions {
    /// Prediction for a second, by binary search.
    pub fn get(&self, timestamp_s: i64) -> Option<f64> {
        self.predictions
            .binary_search_by_key(&timestamp_s, |&(t, _)| t)
            .ok()
            .map(|i| self.predictions[i].1)
    }
}

/// Tiles the grid into `window`-second blocks starting at the first frame
/// and predicts each block from the preceding block's observed mean.
pub fn baseline_interpolate(frames: &[AlignedFrame], window_s: u64) -> Result<BaselinePredictions> {
    if window_s == 0 {
        return Err(Error::InvalidParameter("baseline window must be > 0".into()));
    }
    let Some(first) = frames.first().map(|f| f.timestamp_s) else {
        return Ok(BaselinePredictions::default());
    };
    let window = window_s as i64;
    let block_of = |t: i64| ((t - first) / window) as usize;
    let n_blocks = block_of(frames.last().map_or(first, |f| f.timestamp_s)) + 1;

    let mut sums = vec![0.0; n_blocks];
    let mut counts = vec![0usize; n_blocks];
    for f in frames {
        if let Some(bpm) = f.hr {
            let b = block_of(f.timestamp_s);
            sums[b] += bpm;
            counts[b] += 1;
        }
    }

    let mut out = BaselinePredictions::default();
    for f in frames {
        let b = block_of(f.timestamp_s);
        if b > 0 && counts[b - 1] > 0 {
            out.predictions
                .push((f.timestamp_s, sums[b - 1] / counts[b - 1] as f64));
        } else {
            out.uncovered_seconds += 1;
        }
    }
    Ok(out)
}
