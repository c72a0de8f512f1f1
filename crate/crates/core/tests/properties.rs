use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xscale_core::crosswindow::{mix_queries, GlobalContext};
use xscale_core::data::ChannelStats;
use xscale_core::metrics::{auc, vus, CurveMode, EventList};
use xscale_core::model::{generate_multiscale, Model, ModelConfig};
use xscale_core::numerics::{Tape, Tensor};
use xscale_core::scoring::{pot_threshold, PotConfig};
use xscale_core::training::{loss, Detector, TrainConfig};

fn detector(seed: u64) -> Detector {
    let model_cfg = ModelConfig {
        window: 16,
        kernels: vec![4, 2],
        patch_len: 2,
        d_model: 8,
        heads: 2,
        query_len: 2,
        prototypes: 2,
        ..ModelConfig::default()
    };
    Detector {
        model: Model::new(model_cfg.clone(), seed).unwrap(),
        context: GlobalContext::random(2, 2, 8, 0.95, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
        stats: vec![ChannelStats { mean: 0.0, std: 1.0 }],
        config: TrainConfig {
            model: model_cfg,
            ..TrainConfig::default()
        },
    }
}

fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (4..max)
        .prop_flat_map(|n| (prop::collection::vec(-5.0..5.0f64, n), prop::collection::vec(0u8..2, n)))
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_are_nonnegative_and_cover_the_series(
        seed in 0u64..1000,
        series in prop::collection::vec(-3.0..3.0f64, 16..80),
    ) {
        let s = detector(seed).score_series(&series).unwrap();
        prop_assert_eq!(s.len(), series.len());
        prop_assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

proptest! {
    #[test]
    fn area_metrics_ignore_monotone_transforms((scores, truth) in labelled(60), a in 0.1..10.0f64, b in -5.0..5.0f64) {
        let mapped: Vec<f64> = scores.iter().map(|s| a * s.exp() + b).collect();
        for mode in [CurveMode::Roc, CurveMode::Pr] {
            let x = auc(&scores, &truth, mode).unwrap();
            let y = auc(&mapped, &truth, mode).unwrap();
            prop_assert!((x - y).abs() < 1e-12);
            let x = vus(&scores, &truth, 8, mode).unwrap();
            let y = vus(&mapped, &truth, 8, mode).unwrap();
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn area_metrics_lie_in_the_unit_interval((scores, truth) in labelled(60), w in 0usize..20) {
        for mode in [CurveMode::Roc, CurveMode::Pr] {
            let v = vus(&scores, &truth, w, mode).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn event_list_round_trip(labels in prop::collection::vec(0u8..2, 0..200)) {
        let events = EventList::from_labels(&labels);
        prop_assert_eq!(events.to_labels(labels.len()).unwrap(), labels.clone());
        for w in events.events().windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
    }

    #[test]
    fn loss_is_nonnegative(
        window in prop::collection::vec(-10.0..10.0f64, 32),
        noise in prop::collection::vec(-1.0..1.0f64, 48),
    ) {
        let b = generate_multiscale(&window, &[8, 4, 2]).unwrap();
        let mut it = noise.iter().cycle();
        let recon: Vec<Vec<f64>> = (1..=3)
            .map(|i| b.scale(i).iter().map(|v| v + it.next().unwrap()).collect())
            .collect();
        prop_assert!(loss(&b, &recon, false).unwrap() >= 0.0);
        prop_assert!(loss(&b, &recon, true).unwrap() >= 0.0);
    }

    #[test]
    fn lower_risk_never_lowers_the_threshold(
        scores in prop::collection::vec(0.0..100.0f64, 200..2000),
        q1 in 1e-4..0.05f64,
        q2 in 1e-4..0.05f64,
    ) {
        let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
        let strict = pot_threshold(&scores, &PotConfig { risk: lo, ..PotConfig::default() }).unwrap();
        let loose = pot_threshold(&scores, &PotConfig { risk: hi, ..PotConfig::default() }).unwrap();
        prop_assert!(strict.threshold >= loose.threshold - 1e-9);
    }

    #[test]
    fn router_weights_form_a_distribution(
        logits in prop::collection::vec(-20.0..20.0f64, 1..8),
        temperature in 0.05..5.0f64,
        seed in any::<u64>(),
    ) {
        let n = logits.len();
        let mut tape = Tape::new();
        let u = tape.constant(Tensor::row_vector(logits));
        let q = tape.constant(Tensor::uniform(&[n, 6], 1.0, &mut ChaCha8Rng::seed_from_u64(seed)));
        let gumbel = xscale_core::crosswindow::sample_gumbel(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let routed = mix_queries(&mut tape, u, q, &gumbel, temperature, 2).unwrap();
        let w = tape.value(routed.weights).data();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
