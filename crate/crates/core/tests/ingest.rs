use kinegen::ingest::{
    differentiate, pad_class, read_archive, segment, trim, velocity_norm, write_archive, ChannelKind, ClassLabel, Provenance,
    RawRecording, Trial, TrialSet, SEGMENT_RELATIVE_THRESHOLD,
};
use kinegen::surrogate::{make_surrogate, SurrogateConfig};
use proptest::prelude::*;

fn rotate(v: [f64; 3], yaw: f64, pitch: f64) -> [f64; 3] {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let a = [cy * v[0] - sy * v[1], sy * v[0] + cy * v[1], v[2]];
    [a[0], cp * a[1] - sp * a[2], sp * a[1] + cp * a[2]]
}

#[test]
fn surrogate_durations_converge() {
    let cfg = SurrogateConfig::default().with_count(10_000);
    let set = make_surrogate(&cfg).unwrap().trimmed().unwrap();
    for label in ClassLabel::ALL {
        let trials = set.of_class(label);
        let md = trials.iter().map(|t| (t.len() - 1) as f64 / t.rate).sum::<f64>() / trials.len() as f64;
        let expected = cfg.stats(label).md_mean;
        assert!((md / expected - 1.0).abs() < 0.02, "{label}: {md} vs {expected}");
    }
}

#[test]
fn segmentation_recovers_separated_bells() {
    // Three noiseless bells separated by rests; each span must start and end
    // on the first samples below 5% of its peak.
    let rate = 22.0;
    let shape = kinegen::surrogate::BellShape::new(2.0, 2.0);
    let mut stream = vec![0.0; 10];
    let mut expected = Vec::new();
    for (duration, peak) in [(1.2, 0.9), (2.4, 0.5), (1.6, 1.1)] {
        let bell = kinegen::surrogate::bell_profile(duration, peak, rate, shape);
        let start = stream.len();
        stream.push(0.0);
        stream.extend(&bell);
        stream.push(0.0);
        expected.push((start, stream.len() - 1));
        stream.extend(vec![0.0; 12]);
    }
    let spans = segment(&stream).unwrap();
    let got: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    assert_eq!(got, expected);
    for s in spans {
        let peak = stream[s.start..=s.end].iter().copied().fold(0.0, f64::max);
        assert!(stream[s.start] < SEGMENT_RELATIVE_THRESHOLD * peak);
        assert!(stream[s.end] < SEGMENT_RELATIVE_THRESHOLD * peak);
    }
}

#[test]
fn archive_round_trip_is_exact() {
    let set = make_surrogate(&SurrogateConfig::default().with_count(5)).unwrap();
    let mut buf = Vec::new();
    write_archive(&set, &mut buf).unwrap();
    let back = read_archive(buf.as_slice(), Provenance::Surrogate).unwrap();
    assert_eq!(back, set);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_rotation_invariant(
        v in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..30),
        yaw in -3.2f64..3.2,
        pitch in -3.2f64..3.2,
    ) {
        let split = |vs: &[[f64; 3]], k: usize| vs.iter().map(|a| a[k]).collect::<Vec<_>>();
        let r: Vec<[f64; 3]> = v.iter().map(|a| rotate(*a, yaw, pitch)).collect();
        let a = velocity_norm(&split(&v, 0), &split(&v, 1), &split(&v, 2)).unwrap();
        let b = velocity_norm(&split(&r, 0), &split(&r, 1), &split(&r, 2)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn padding_then_trimming_restores_lengths(rows in prop::collection::vec(prop::collection::vec(0.005f64..2.0, 2..25), 1..8)) {
        let trials: Vec<Trial> = rows.iter().enumerate().map(|(i, v)| Trial::new(format!("t{i}"), ClassLabel::W2_C, v.clone(), 22.0).unwrap()).collect();
        let refs: Vec<&Trial> = trials.iter().collect();
        let batch = pad_class(&refs).unwrap();
        for (row, t) in batch.rows.rows().into_iter().zip(&trials) {
            prop_assert_eq!(trim(row.as_slice().unwrap()).unwrap(), t.v.clone());
        }
        prop_assert_eq!(batch.original_lengths, rows.iter().map(Vec::len).collect::<Vec<_>>());
    }

    #[test]
    fn differentiation_of_a_quadratic_matches_stencils(
        a in prop::array::uniform3(-2.0f64..2.0),
        b in prop::array::uniform3(-2.0f64..2.0),
        n in 3usize..40,
        rate in 5.0f64..200.0,
    ) {
        let p = |t: f64| [a[0] * t * t + b[0] * t, a[1] * t * t + b[1] * t, a[2] * t * t + b[2] * t];
        let samples: Vec<[f64; 3]> = (0..n).map(|i| p(i as f64 / rate)).collect();
        let rec = RawRecording::new("q", rate, ChannelKind::Position, samples.clone()).unwrap();
        let vel = differentiate(&rec).unwrap();
        for (i, v) in vel.samples.iter().enumerate() {
            let t = i as f64 / rate;
            let h = 1.0 / rate;
            for k in 0..3 {
                // Central differences are exact for quadratics; the one-sided
                // ends are off by a·h.
                let exact = 2.0 * a[k] * t + b[k];
                let expected = if i == 0 { exact + a[k] * h } else if i == n - 1 { exact - a[k] * h } else { exact };
                prop_assert!((v[k] - expected).abs() < 1e-9 * (1.0 + rate), "i {i} k {k}: {} vs {expected}", v[k]);
            }
        }
    }

    #[test]
    fn differentiation_inverts_cumulative_sums(steps in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 3..30), rate in 1.0f64..100.0) {
        // Positions built from piecewise-constant velocities; one-sided
        // differences recover the first and last step exactly.
        let mut pos = vec![[0.0; 3]];
        for s in &steps {
            let last = *pos.last().unwrap();
            pos.push([last[0] + s[0] / rate, last[1] + s[1] / rate, last[2] + s[2] / rate]);
        }
        let rec = RawRecording::new("c", rate, ChannelKind::Position, pos).unwrap();
        let vel = differentiate(&rec).unwrap();
        let n = vel.samples.len();
        for k in 0..3 {
            prop_assert!((vel.samples[0][k] - steps[0][k]).abs() < 1e-9);
            prop_assert!((vel.samples[n - 1][k] - steps[steps.len() - 1][k]).abs() < 1e-9);
            for i in 1..n - 1 {
                let mid = 0.5 * (steps[i - 1][k] + steps[i][k]);
                prop_assert!((vel.samples[i][k] - mid).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn segments_end_below_threshold(stream in prop::collection::vec(0.0f64..1.5, 1..80)) {
        for s in segment(&stream).unwrap() {
            let peak = stream[s.start..=s.end].iter().copied().fold(0.0, f64::max);
            let bound = SEGMENT_RELATIVE_THRESHOLD * peak;
            prop_assert!(s.start <= s.end);
            prop_assert!(s.start == 0 || stream[s.start] < bound);
            prop_assert!(s.end == stream.len() - 1 || stream[s.end] < bound);
        }
    }

    #[test]
    fn archives_round_trip(seed in 0u64..10_000) {
        let set = make_surrogate(&SurrogateConfig { seed, ..SurrogateConfig::default().with_count(2) }).unwrap();
        let mut buf = Vec::new();
        write_archive(&set, &mut buf).unwrap();
        prop_assert_eq!(read_archive(buf.as_slice(), Provenance::Surrogate).unwrap(), set);
    }
}

#[test]
fn empty_archive_set_round_trips() {
    let set = TrialSet::empty(Provenance::Real);
    let mut buf = Vec::new();
    write_archive(&set, &mut buf).unwrap();
    assert_eq!(read_archive(buf.as_slice(), Provenance::Real).unwrap(), set);
}
