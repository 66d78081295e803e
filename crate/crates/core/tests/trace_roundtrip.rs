use gazegate::scenario::{builtin_extended, generate};
use gazegate::trace::{
    read_trace, write_trace, AttentionTruth, GazeSample, SceneFrame, Trace, TraceMeta, TruthInterval,
};
use proptest::prelude::*;

fn round_trip(trace: &Trace) -> Trace {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).unwrap();
    read_trace(buf.as_slice()).unwrap()
}

/// Field-by-field comparison, independent of the derived `PartialEq`.
fn assert_same(a: &Trace, b: &Trace) {
    assert_eq!(a.meta.scenario, b.meta.scenario);
    assert_eq!(a.meta.seed, b.meta.seed);
    assert_eq!(a.meta.gaze_rate.to_bits(), b.meta.gaze_rate.to_bits());
    assert_eq!(a.gaze.len(), b.gaze.len());
    for (x, y) in a.gaze.iter().zip(&b.gaze) {
        assert_eq!((x.t.to_bits(), x.valid), (y.t.to_bits(), y.valid));
        if x.valid {
            assert_eq!((x.x.to_bits(), x.y.to_bits()), (y.x.to_bits(), y.y.to_bits()));
        }
    }
    assert_eq!(a.frames.len(), b.frames.len());
    for (x, y) in a.frames.iter().zip(&b.frames) {
        assert_eq!((x.t.to_bits(), x.width, x.height), (y.t.to_bits(), y.width, y.height));
        assert!(x.luma.iter().zip(&y.luma).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert_eq!(a.truth, b.truth);
}

#[test]
fn six_hundred_sample_seeded_trace_survives_a_round_trip() {
    let spec = builtin_extended("multi_object_shift", 42, 20.0).unwrap();
    let trace = generate(&spec).unwrap();
    assert_eq!(trace.gaze.len(), 600);
    let back = round_trip(&trace);
    assert_same(&trace, &back);
    assert_eq!(back, trace);
}

fn arb_trace() -> impl Strategy<Value = Trace> {
    let gaze = prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, prop::bool::weighted(0.9)), 0..40);
    (gaze, 1u32..4, 1u32..4, any::<u64>(), prop::collection::vec(0.0f64..1.0, 0..3)).prop_map(
        |(pts, w, h, seed, cuts)| {
            let rate = 30.0;
            let gaze: Vec<GazeSample> = pts
                .iter()
                .enumerate()
                .map(|(k, &(x, y, ok))| {
                    let t = k as f64 / rate;
                    if ok {
                        GazeSample::new(t, x, y)
                    } else {
                        GazeSample::invalid(t)
                    }
                })
                .collect();
            let frames = (0..gaze.len())
                .map(|k| {
                    let luma = (0..w * h).map(|i| ((i as f32 + k as f32) * 0.037).fract()).collect();
                    SceneFrame::new(k as f64 / rate, w, h, luma).unwrap()
                })
                .collect();
            let span = gaze.len() as f64 / rate;
            let mut c: Vec<f64> = cuts.iter().map(|v| v * span).collect();
            c.sort_by(f64::total_cmp);
            let intervals = c
                .chunks_exact(2)
                .filter(|p| p[1] > p[0])
                .map(|p| TruthInterval {
                    t_start: p[0],
                    t_end: p[1],
                    instance: 1,
                })
                .collect();
            Trace {
                meta: TraceMeta {
                    scenario: format!("generated-{seed}"),
                    seed,
                    ..TraceMeta::default()
                },
                gaze,
                frames,
                truth: Some(AttentionTruth::new(intervals).unwrap()),
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn read_inverts_write(trace in arb_trace()) {
        let back = round_trip(&trace);
        prop_assert_eq!(&back, &trace);
    }
}
