use hrgap_core::ingest::*;
use proptest::prelude::*;

fn acc(ts_ms: i64, x: f64) -> SensorRecord {
    SensorRecord::accel(ts_ms, x, 0.0, 1.0).unwrap()
}

fn hr(ts_ms: i64, bpm: f64) -> SensorRecord {
    SensorRecord::heart_rate(ts_ms, bpm).unwrap()
}

fn gps(ts_ms: i64, lat: f64) -> SensorRecord {
    SensorRecord::gps(ts_ms, lat, -78.5).unwrap()
}

#[test]
fn nearest_sample_wins_and_ties_go_early() {
    // grid spans seconds 1..=4
    let accel = [acc(1_000, 1.0), acc(1_400, 2.0), acc(2_500, 3.0), acc(3_600, 4.0), acc(4_400, 5.0)];
    let s = align_streams(&accel, &[], &[], "P").unwrap();
    let xs: Vec<Option<f64>> = s.frames.iter().map(|f| f.accel.map(|a| a.x)).collect();
    assert_eq!(s.first_second(), Some(1));
    // 2500 ms is within half a second of both 2 and 3; at second 4 the
    // samples 3600 and 4400 are equally near and the earlier one wins
    assert_eq!(xs, vec![Some(1.0), Some(3.0), Some(3.0), Some(4.0)]);
}

#[test]
fn documented_alignment_example() {
    let accel = [acc(0, 0.1), acc(1_000, 0.2), acc(2_000, 0.3)];
    let hrs = [hr(0, 60.0), hr(2_000, 62.0)];
    let s = align_streams(&accel, &[gps(0, 38.0)], &hrs, "P01").unwrap();
    assert_eq!(s.frames.len(), 3);
    assert!(s.frames.iter().all(|f| f.gps.is_some()));
    assert_eq!(s.frames[1].hr, None);
    assert_eq!(detect_gaps(&s.frames).intervals, vec![(1, 1)]);
}

#[test]
fn gps_is_held_for_sixty_seconds() {
    let accel: Vec<SensorRecord> = (0..=100).map(|t| acc(t * 1000, 0.0)).collect();
    let s = align_streams(&accel, &[gps(10_000, 38.0), gps(80_000, 39.0)], &[], "P").unwrap();
    let lat = |t: usize| s.frames[t].gps.map(|g| g.lat);
    assert_eq!(lat(9), None);
    assert_eq!(lat(10), Some(38.0));
    assert_eq!(lat(70), Some(38.0));
    assert_eq!(lat(71), None);
    assert_eq!(lat(79), None);
    assert_eq!(lat(80), Some(39.0));
    assert_eq!(lat(100), Some(39.0));
}

#[test]
fn unsorted_and_empty_input_rejected() {
    assert!(align_streams(&[acc(2_000, 0.0), acc(1_000, 0.0)], &[], &[], "P").is_err());
    assert!(align_streams(&[], &[], &[], "P").is_err());
}

#[test]
fn record_ranges_are_checked() {
    assert!(SensorRecord::gps(0, 91.0, 0.0).is_err());
    assert!(SensorRecord::gps(0, 0.0, -181.0).is_err());
    assert!(SensorRecord::heart_rate(0, 19.0).is_err());
    assert!(SensorRecord::heart_rate(0, f64::NAN).is_err());
    assert!(SensorRecord::accel(0, f64::INFINITY, 0.0, 0.0).is_err());
}

#[test]
fn malformed_rows_are_rejected_not_fatal() {
    let text = "timestamp_ms,bpm\n1000,60\n2000,abc\n3000,300\n4000,61\n";
    let parsed = parse_channel(text.as_bytes(), Channel::Hr, "hr.csv".as_ref()).unwrap();
    assert_eq!(parsed.records, vec![hr(1000, 60.0), hr(4000, 61.0)]);
    assert_eq!(parsed.rejected.len(), 2);
    let wrong = parse_channel("ts,bpm\n1,60\n".as_bytes(), Channel::Hr, "hr.csv".as_ref());
    assert!(wrong.is_err());
}

#[test]
fn channel_csv_round_trip() {
    let records = [acc(0, 0.25), acc(1_000, -1.5e-3)];
    let mut buf = Vec::new();
    write_channel_csv(&mut buf, Channel::Accel, &records).unwrap();
    let parsed = parse_channel(buf.as_slice(), Channel::Accel, "a.csv".as_ref()).unwrap();
    assert_eq!(parsed.records, records);
}

#[test]
fn aligned_reader_rejects_bad_grid_and_header() {
    let gap = format!("{ALIGNED_HEADER}\n0,P,,,,,,60\n2,P,,,,,,61\n");
    assert!(read_aligned_csv(gap.as_bytes()).is_err());
    assert!(read_aligned_csv("a,b\n".as_bytes()).is_err());
    let partial = format!("{ALIGNED_HEADER}\n0,P,1,,,,,60\n");
    assert!(read_aligned_csv(partial.as_bytes()).is_err());
}

/// Gap seconds by definition: every second without heart rate.
fn brute_force_gaps(present: &[bool], start: i64) -> Vec<i64> {
    (0..present.len()).filter(|&i| !present[i]).map(|i| start + i as i64).collect()
}

fn frame_strategy() -> impl Strategy<Value = (Option<(f64, f64, f64)>, Option<(f64, f64)>, Option<f64>)> {
    (
        prop::option::of((-8.0..8.0f64, -8.0..8.0f64, -8.0..8.0f64)),
        prop::option::of((-90.0..=90.0f64, -180.0..=180.0f64)),
        prop::option::of(20.0..=250.0f64),
    )
}

proptest! {
    #[test]
    fn gap_mask_matches_brute_force(present in prop::collection::vec(any::<bool>(), 1..300), start in -1000i64..1000) {
        let frames: Vec<AlignedFrame> = present
            .iter()
            .enumerate()
            .map(|(i, &p)| AlignedFrame { hr: p.then_some(70.0), ..AlignedFrame::empty(start + i as i64) })
            .collect();
        let mask = detect_gaps(&frames);
        let expected = brute_force_gaps(&present, start);
        prop_assert_eq!(mask.seconds(), expected.len());
        prop_assert_eq!(&mask, &GapMask::from_seconds(&expected));
        for (i, f) in frames.iter().enumerate() {
            prop_assert_eq!(mask.contains(f.timestamp_s), !present[i]);
        }
        // maximal runs: neighbours of every interval are observed or off-grid
        for &(a, b) in &mask.intervals {
            prop_assert!(a <= b);
            prop_assert!(!mask.contains(a - 1) && !mask.contains(b + 1));
        }
    }

    #[test]
    fn aligned_csv_round_trip(
        participants in prop::collection::vec(
            ("[A-Za-z0-9_]{1,8}", -10_000i64..10_000, prop::collection::vec(frame_strategy(), 1..40)),
            1..4,
        ),
    ) {
        let mut streams: Vec<ParticipantStream> = Vec::new();
        for (pid, start, frames) in participants {
            if streams.iter().any(|s| s.participant_id == pid) {
                continue;
            }
            let frames = frames
                .into_iter()
                .enumerate()
                .map(|(i, (a, g, h))| AlignedFrame {
                    timestamp_s: start + i as i64,
                    accel: a.map(|(x, y, z)| Accel { x, y, z }),
                    gps: g.map(|(lat, lon)| GeoPoint { lat, lon }),
                    hr: h,
                })
                .collect();
            streams.push(ParticipantStream { participant_id: pid, frames });
        }
        let mut buf = Vec::new();
        write_aligned_csv(&mut buf, &streams).unwrap();
        let back = read_aligned_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, streams);
    }
}
