mod support;

use hrgap_core::features::*;
use hrgap_core::ingest::{Accel, AlignedFrame, GeoPoint, ParticipantStream};
use proptest::prelude::*;
use support::calendar_oracle;

#[test]
fn magnitude_is_exact_on_pythagorean_triples() {
    for m in 2..40i64 {
        for n in 1..m {
            let (a, b, c) = (m * m - n * n, 2 * m * n, m * m + n * n);
            for (x, y, z) in [(a, b, 0), (0, a, b), (b, 0, a)] {
                assert_eq!(accel_magnitude(x as f64, y as f64, z as f64), c as f64);
                assert_eq!(accel_magnitude(-x as f64, y as f64, -z as f64), c as f64);
            }
        }
    }
    // Pythagorean quadruples use all three axes
    for (x, y, z, d) in [(1, 2, 2, 3), (2, 3, 6, 7), (1, 4, 8, 9), (4, 4, 7, 9), (2, 6, 9, 11)] {
        assert_eq!(accel_magnitude(x as f64, y as f64, z as f64), d as f64);
    }
    assert_eq!(accel_magnitude(0.0, 0.0, 0.0), 0.0);
    assert_eq!(accel_magnitude(0.0f32, 0.0, 0.0), 0.0);
}

#[test]
fn documented_examples() {
    assert_eq!(round_coordinate(38.0336, 2), 38.03);
    assert_eq!(round_coordinate(38.0336, 1), 38.0);
    assert_eq!(round_coordinate(-78.5080, 2), -78.51);
    assert_eq!(time_components(1_551_657_600, 0), (0, 0, 0));
    assert_eq!(time_components(1_551_657_600, -300), (19, 0, 0));
    assert_eq!(time_components(1_551_657_600 + 13 * 3600 + 7 * 60 + 9, 60), (14, 7, 9));
    assert_eq!(time_components(-1, 0), (23, 59, 59));
}

#[test]
fn frame_features_follow_deviation_mode() {
    let frame = AlignedFrame {
        timestamp_s: 1_551_657_600 + 3600,
        accel: Some(Accel { x: 0.0, y: 0.6, z: 0.8 }),
        gps: Some(GeoPoint { lat: 38.0336, lon: -78.5080 }),
        hr: None,
    };
    let raw = FeatureRow::from_frame(&frame, &FeatureOptions { deviation_mode: DeviationMode::None, tz_offset_minutes: 0 }).unwrap();
    assert_eq!((raw.x, raw.y, raw.z, raw.magnitude), (0.0, 0.6, 0.8, 1.0));
    let mag = FeatureRow::from_frame(&frame, &FeatureOptions { deviation_mode: DeviationMode::Magnitude, tz_offset_minutes: 0 }).unwrap();
    assert_eq!((mag.x, mag.y, mag.z, mag.magnitude), (0.0, 0.6, 0.8, 0.0));
    let all = FeatureRow::from_frame(&frame, &FeatureOptions::default()).unwrap();
    assert_eq!(all.x, 1.0);
    assert!((all.y - 0.4).abs() < 1e-12 && (all.z - 0.2).abs() < 1e-12);
    assert_eq!(all.magnitude, 0.0);
    assert_eq!((all.lat2, all.lon2, all.lat1, all.lon1, all.lat0, all.lon0), (38.03, -78.51, 38.0, -78.5, 38.0, -79.0));
    assert_eq!((all.hour, all.minute, all.second), (1, 0, 0));

    let no_gps = AlignedFrame { gps: None, ..frame };
    assert!(FeatureRow::from_frame(&no_gps, &FeatureOptions::default()).is_none());
}

#[test]
fn feature_matrix_keeps_complete_cases_only() {
    let full = |t: i64, hr: Option<f64>| AlignedFrame {
        timestamp_s: t,
        accel: Some(Accel { x: 0.0, y: 0.0, z: 1.0 }),
        gps: Some(GeoPoint { lat: 1.0, lon: 2.0 }),
        hr,
    };
    let stream = ParticipantStream {
        participant_id: "P".into(),
        frames: vec![
            full(0, Some(60.0)),
            full(1, None),
            AlignedFrame { gps: None, ..full(2, Some(61.0)) },
            full(3, Some(62.0)),
        ],
    };
    let fm = build_feature_matrix(&stream, &FeatureOptions::default(), TargetKind::Bpm, None).unwrap();
    assert_eq!(fm.timestamps, vec![0, 3]);
    assert_eq!(fm.target, vec![60.0, 62.0]);
    assert!(build_feature_matrix(&stream, &FeatureOptions::default(), TargetKind::Zscore, None).is_err());
    let z = zscore_fit(&[60.0, 62.0]).unwrap();
    let fz = build_feature_matrix(&stream, &FeatureOptions::default(), TargetKind::Zscore, Some(&z)).unwrap();
    assert_eq!(fz.target, vec![-1.0, 1.0]);
}

#[test]
fn zscore_uses_population_std() {
    let p = zscore_fit(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(p.mean, 2.5);
    assert!((p.std - 1.25f64.sqrt()).abs() < 1e-15);
    assert!(zscore_fit(&[70.0; 10]).is_err());
    assert!(zscore_fit(&[70.0]).is_err());
}

#[test]
fn tz_offset_is_bounded() {
    let bad = FeatureOptions { tz_offset_minutes: 900, ..FeatureOptions::default() };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn rounding_is_consistent(lat in -90.0..=90.0f64, lon in -180.0..=180.0f64) {
        let frame = AlignedFrame {
            timestamp_s: 0,
            accel: Some(Accel { x: 0.0, y: 0.0, z: 1.0 }),
            gps: Some(GeoPoint { lat, lon }),
            hr: None,
        };
        let r = FeatureRow::from_frame(&frame, &FeatureOptions::default()).unwrap();
        prop_assert_eq!(round_coordinate(r.lat2, 1), r.lat1);
        prop_assert_eq!(round_coordinate(r.lon2, 1), r.lon1);
        prop_assert_eq!(round_coordinate(r.lat1, 0), r.lat0);
        prop_assert_eq!(round_coordinate(r.lon1, 0), r.lon0);
        // nearest multiple of 10^-d
        for (v, d, step) in [(lat, 2, 0.01), (lon, 2, 0.01), (r.lat2, 1, 0.1), (r.lon2, 1, 0.1)] {
            let rounded = round_coordinate(v, d);
            prop_assert!((rounded - v).abs() <= step / 2.0 + 1e-12);
            let units = rounded / step;
            prop_assert!((units - units.round()).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn time_components_match_calendar(ts in -2_000_000_000i64..4_000_000_000, tz in -840i32..=840) {
        prop_assert_eq!(time_components(ts, tz), calendar_oracle(ts, tz));
    }

    #[test]
    fn deviation_is_a_mirror_about_one(d in -10.0..10.0f64) {
        let a = deviation_transform(1.0 + d);
        let b = deviation_transform(1.0 - d);
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((a - d.abs()).abs() < 1e-12);
    }

    #[test]
    fn zscore_standardizes(values in prop::collection::vec(40.0..200.0f64, 2..200)) {
        prop_assume!(values.iter().any(|&v| (v - values[0]).abs() > 1e-3));
        let p = zscore_fit(&values).unwrap();
        let z: Vec<f64> = values.iter().map(|&v| p.apply(v)).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9);
        for (&v, &zi) in values.iter().zip(&z) {
            prop_assert!((p.invert(zi) - v).abs() < 1e-9);
        }
    }

    #[test]
    fn zscore_is_invariant_to_affine_shift(values in prop::collection::vec(40.0..200.0f64, 2..100), shift in -30.0..30.0f64) {
        prop_assume!(values.iter().any(|&v| (v - values[0]).abs() > 1e-3));
        let p = zscore_fit(&values).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let q = zscore_fit(&shifted).unwrap();
        for (&v, &s) in values.iter().zip(&shifted) {
            prop_assert!((p.apply(v) - q.apply(s)).abs() < 1e-9);
        }
    }
}
